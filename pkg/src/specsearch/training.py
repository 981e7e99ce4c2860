"""Model assembly around a compiled mechanism, training, and fitness scoring."""

from __future__ import annotations

import multiprocessing as mp
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import dsl
from .errors import (DslSyntaxError, NumericalError, ShapeMismatch, SpecSearchError,
                     UndeclaredIdentifier)


@dataclass
class TrainConfig:
    max_epochs: int = 200
    patience: int = 50
    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    hidden: int = 64
    seed: int = 0
    timeout_seconds: float = 600.0
    float64: bool = False

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.hidden < 1:
            raise ValueError("epochs, patience, and hidden must be positive")
        if self.timeout_seconds < 1:
            raise ValueError("timeout must be at least 1 second")

    @property
    def dtype(self):
        return np.float64 if self.float64 else np.float32

    def to_dict(self):
        return {"max_epochs": self.max_epochs, "patience": self.patience,
                "lr": self.lr, "weight_decay": self.weight_decay,
                "dropout": self.dropout, "hidden": self.hidden, "seed": self.seed,
                "timeout_seconds": self.timeout_seconds, "float64": self.float64}


class ModelAssembly:
    """2-layer MLP feature transform -> mechanism -> linear head (when needed).

    X_raw is the first linear layer's pre-activation output, X_in the MLP output.
    """

    def __init__(self, mechanism, graph, cfg):
        f, h, c = graph.num_features, cfg.hidden, graph.num_classes
        dtype = cfg.dtype
        self.cfg = cfg
        self.graph = graph
        self.mechanism = mechanism
        rng = np.random.default_rng((cfg.seed, 0))
        self.params = {
            "mlp.W1": ad.Tensor(ad.glorot_uniform((f, h), rng, dtype), requires_grad=True),
            "mlp.b1": ad.Tensor(np.zeros((1, h), dtype=dtype), requires_grad=True),
            "mlp.W2": ad.Tensor(ad.glorot_uniform((h, h), rng, dtype), requires_grad=True),
            "mlp.b2": ad.Tensor(np.zeros((1, h), dtype=dtype), requires_grad=True),
        }
        self.has_head = mechanism.out_shape[1] != c
        if self.has_head:
            self.params["head.W"] = ad.Tensor(ad.glorot_uniform((h, c), rng, dtype),
                                              requires_grad=True)
            self.params["head.b"] = ad.Tensor(np.zeros((1, c), dtype=dtype),
                                              requires_grad=True)
        for name, t in mechanism.params.items():
            self.params[f"mech.{name}"] = t
        self._x = ad.Tensor(graph.features.astype(dtype))

    def forward(self, training=False, epoch=0):
        cfg = self.cfg
        x = self._x
        if training and cfg.dropout > 0:
            x = ad.dropout(x, cfg.dropout, np.random.default_rng((cfg.seed, 0, epoch)))
        x_raw = ad.add(ad.matmul(x, self.params["mlp.W1"]), self.params["mlp.b1"])
        a = ad.relu(x_raw)
        if training and cfg.dropout > 0:
            a = ad.dropout(a, cfg.dropout, np.random.default_rng((cfg.seed, 1, epoch)))
        x_in = ad.add(ad.matmul(a, self.params["mlp.W2"]), self.params["mlp.b2"])
        z = self.mechanism(x_in, x_raw)
        if self.has_head:
            z = ad.add(ad.matmul(z, self.params["head.W"]), self.params["head.b"])
        return z

    def predict(self):
        return np.argmax(self.forward(training=False).data, axis=1)

    def snapshot(self):
        return {k: t.data.copy() for k, t in self.params.items()}

    def restore(self, snap):
        for k, t in self.params.items():
            t.data = snap[k].copy()


def build_assembly(program_text, graph, cfg):
    """parse -> shape-check -> compile -> wrap in the standard assembly."""
    prog = dsl.parse(program_text)
    dims = {"n": graph.num_nodes, "f": graph.num_features,
            "h": cfg.hidden, "c": graph.num_classes}
    typed = dsl.check_shapes(prog, dims)
    mech = dsl.compile_program(typed, graph, seed=cfg.seed + 1, dtype=cfg.dtype)
    return ModelAssembly(mech, graph, cfg)


def evaluate(assembly, graph, index_set):
    """Plain accuracy of argmax predictions over the given node indices."""
    idx = np.asarray(list(index_set), dtype=np.int64)
    if idx.size == 0:
        raise ValueError("index set must be non-empty")
    pred = assembly.predict()
    return float(np.mean(pred[idx] == graph.labels[idx]))


@dataclass
class TrainMetrics:
    epochs_run: int = 0
    train_losses: list = field(default_factory=list)
    val_accuracies: list = field(default_factory=list)
    best_val_acc: float = 0.0
    best_epoch: int = 0


def train(assembly, graph, split, cfg):
    """Adam training with a hard epoch cap and patience on validation accuracy.

    Restores the best-validation checkpoint before returning.
    """
    params = assembly.params
    state = ad.AdamState()
    metrics = TrainMetrics()
    best_snap = assembly.snapshot()
    since_best = 0
    train_idx = np.asarray(split.train, dtype=np.int64)
    for epoch in range(1, cfg.max_epochs + 1):
        logits = assembly.forward(training=True, epoch=epoch)
        loss = ad.cross_entropy_with_logits(logits, graph.labels, train_idx)
        ad.backward(loss)
        grads = {}
        for name, t in params.items():
            if t.grad is not None:
                grads[name] = t.grad
                t.grad = None
        ad.step_adam(params, grads, state, lr=cfg.lr, weight_decay=cfg.weight_decay)
        val_acc = evaluate(assembly, graph, split.val)
        metrics.epochs_run = epoch
        metrics.train_losses.append(float(loss.data[0, 0]))
        metrics.val_accuracies.append(val_acc)
        if val_acc > metrics.best_val_acc or epoch == 1:
            metrics.best_val_acc = val_acc
            metrics.best_epoch = epoch
            best_snap = assembly.snapshot()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    assembly.restore(best_snap)
    return metrics


@dataclass
class FitResult:
    status: str                 # "ok" or "discarded"
    reason: str = None          # parse | shape | compile | numeric | timeout
    fitness: float = None       # validation accuracy, only when ok
    test_accuracy: float = None
    epochs_run: int = 0
    wall_seconds: float = 0.0

    @property
    def ok(self):
        return self.status == "ok"

    def to_dict(self):
        return {"status": self.status if self.ok else self.reason,
                "fitness": self.fitness, "wall_seconds": round(self.wall_seconds, 3)}


def _score_impl(program_text, graph, split, cfg):
    start = time.monotonic()
    try:
        prog = dsl.parse(program_text)
    except DslSyntaxError:
        return FitResult("discarded", reason="parse", wall_seconds=time.monotonic() - start)
    dims = {"n": graph.num_nodes, "f": graph.num_features,
            "h": cfg.hidden, "c": graph.num_classes}
    try:
        typed = dsl.check_shapes(prog, dims)
    except (ShapeMismatch, UndeclaredIdentifier):
        return FitResult("discarded", reason="shape", wall_seconds=time.monotonic() - start)
    try:
        mech = dsl.compile_program(typed, graph, seed=cfg.seed + 1, dtype=cfg.dtype)
        assembly = ModelAssembly(mech, graph, cfg)
    except NumericalError:
        return FitResult("discarded", reason="numeric", wall_seconds=time.monotonic() - start)
    except SpecSearchError:
        return FitResult("discarded", reason="compile", wall_seconds=time.monotonic() - start)
    try:
        metrics = train(assembly, graph, split, cfg)
        fitness = evaluate(assembly, graph, split.val)
        test_acc = evaluate(assembly, graph, split.test) if split.test else None
    except NumericalError:
        return FitResult("discarded", reason="numeric", wall_seconds=time.monotonic() - start)
    return FitResult("ok", fitness=fitness, test_accuracy=test_acc,
                     epochs_run=metrics.epochs_run,
                     wall_seconds=time.monotonic() - start)


def _score_worker(conn, program_text, graph, split, cfg):
    try:
        result = _score_impl(program_text, graph, split, cfg)
    except Exception:
        result = FitResult("discarded", reason="numeric")
    try:
        conn.send(result)
    finally:
        conn.close()


def score_individual(program_text, graph, split, cfg):
    """Score one program in a worker process with a hard wall-clock timeout."""
    results = evaluate_batch([program_text], graph, split, cfg, pool_size=1)
    return results[0]


def evaluate_batch(texts, graph, split, cfg, pool_size=4):
    """Score many programs concurrently; results come back in submission order.

    Each job runs in its own process; jobs that exceed cfg.timeout_seconds are
    terminated and reported as discarded(timeout).
    """
    ctx = mp.get_context("fork")
    results = [None] * len(texts)
    pending = {}  # idx -> (process, conn, start_time)
    next_idx = 0

    def launch(i):
        parent, child = ctx.Pipe(duplex=False)
        proc = ctx.Process(target=_score_worker,
                           args=(child, texts[i], graph, split, cfg), daemon=True)
        proc.start()
        child.close()
        pending[i] = (proc, parent, time.monotonic())

    while next_idx < len(texts) or pending:
        while next_idx < len(texts) and len(pending) < pool_size:
            launch(next_idx)
            next_idx += 1
        time.sleep(0.01)
        for i in list(pending):
            proc, conn, started = pending[i]
            elapsed = time.monotonic() - started
            if conn.poll():
                try:
                    results[i] = conn.recv()
                except EOFError:
                    results[i] = FitResult("discarded", reason="numeric",
                                           wall_seconds=elapsed)
                proc.join()
                conn.close()
                del pending[i]
            elif not proc.is_alive() and not conn.poll():
                results[i] = FitResult("discarded", reason="numeric",
                                       wall_seconds=elapsed)
                proc.join()
                conn.close()
                del pending[i]
            elif elapsed > cfg.timeout_seconds:
                proc.terminate()
                proc.join(5)
                if proc.is_alive():
                    proc.kill()
                    proc.join()
                conn.close()
                results[i] = FitResult("discarded", reason="timeout",
                                       wall_seconds=elapsed)
                del pending[i]
    return results
