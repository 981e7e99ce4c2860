"""Compile a shape-checked program into an executable mechanism.

Graph operators are materialized once; the K-step loop is unrolled at call
time, so the autodiff tape grows linearly in K.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..errors import NumericalError, ShapeMismatch
from ..graphs import LaplacianVariant, SparseOp, Variant, build_operator
from .checker import param_shape
from .nodes import Bin, Call, Index, Name, Num, Unary

_CTOR_TO_VARIANT = {
    "sym_norm": Variant.ADJ_SYM_NORM,
    "rw_norm": Variant.ADJ_RW_NORM,
    "laplacian": Variant.COMBINATORIAL,
    "sym_laplacian": Variant.SYM_LAPLACIAN,
    "scaled_laplacian": Variant.SCALED_LAPLACIAN,
    "pruned_norm": Variant.PRUNED_NORM,
}

_UNARY_CALLS = {"relu": ad.relu, "elu": ad.elu, "tanh": ad.tanh,
                "sigmoid": ad.sigmoid, "softmax_rows": ad.softmax_rows,
                "sum_rows": ad.sum_rows}


class CompiledMechanism:
    """Callable (X_in n x h, X_raw n x h) -> Tensor, owning its parameters."""

    def __init__(self, typed, graph, seed=0, dtype=np.float64):
        prog = typed.program
        self.program = prog
        self.dims = typed.dims
        self.out_shape = typed.out_shape
        self.dtype = dtype
        self.operators = {}
        for g in prog.graph_defs:
            variant = LaplacianVariant(_CTOR_TO_VARIANT[g.ctor], g.self_loop)
            self.operators[g.name] = build_operator(graph, variant)
        rng = np.random.default_rng(seed)
        self.params = {}        # flat name -> Tensor
        self._scalars = {}      # declared name -> Tensor (non-array params)
        self._arrays = {}       # declared name -> list[Tensor], index 1..L at [i-1]
        for decl in prog.params:
            shp = param_shape(decl, typed.dims)
            if decl.array is None:
                t = ad.Tensor(ad.init_array(decl.init, shp, rng, dtype), requires_grad=True)
                self._scalars[decl.name] = t
                self.params[decl.name] = t
            else:
                length = prog.loop_count if decl.array == "K" else decl.array
                lst = []
                for i in range(1, length + 1):
                    t = ad.Tensor(ad.init_array(decl.init, shp, rng, dtype),
                                  requires_grad=True)
                    lst.append(t)
                    self.params[f"{decl.name}[{i}]"] = t
                self._arrays[decl.name] = lst
        self.consts = {name: float(v) for name, v in prog.consts}

    def forward(self, x_in, x_raw):
        prog = self.program
        env = {"X": x_in, "X_raw": x_raw}
        env.update(self.operators)
        env.update(self._scalars)
        env.update(self.consts)
        env["K"] = float(prog.loop_count) if prog.const("K") is not None else 0.0
        for st in prog.init_block:
            env[st.target] = self._eval(st.expr, env)
        if prog.has_step:
            for k in range(1, prog.loop_count + 1):
                env["k"] = float(k)
                for st in prog.step_block:
                    env[st.target] = self._eval(st.expr, env)
        for st in prog.final_block:
            env[st.target] = self._eval(st.expr, env)
        return self._as_tensor(self._eval(prog.out_expr, env))

    __call__ = forward

    def _as_tensor(self, v):
        if isinstance(v, ad.Tensor):
            return v
        return ad.Tensor(np.array([[v]], dtype=self.dtype))

    def _eval(self, e, env):
        if isinstance(e, Num):
            return float(e.value)
        if isinstance(e, Name):
            return env[e.ident]
        if isinstance(e, Index):
            idx = self._eval(e.index, env)
            i = int(idx)
            lst = self._arrays[e.name]
            if not 1 <= i <= len(lst):
                raise ShapeMismatch(f"index {i} out of range for {e.name!r}")
            return lst[i - 1]
        if isinstance(e, Unary):
            v = self._eval(e.operand, env)
            return -v if isinstance(v, float) else ad.neg(v)
        if isinstance(e, Bin):
            a = self._eval(e.left, env)
            b = self._eval(e.right, env)
            return self._binop(e.op, a, b)
        if isinstance(e, Call):
            return self._call(e, env)
        raise TypeError(f"not an expression node: {e!r}")

    def _binop(self, op, a, b):
        both_float = isinstance(a, float) and isinstance(b, float)
        if both_float:
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if op == "/":
                if b == 0.0:
                    raise NumericalError("division by zero")
                return a / b
            raise ShapeMismatch("@ requires tensor operands")
        if op == "@":
            if isinstance(a, float) or isinstance(b, float):
                raise ShapeMismatch("@ requires tensor operands")
            return ad.matmul(a, b)
        fn = {"+": ad.add, "-": ad.sub, "*": ad.mul, "/": ad.div}[op]
        return fn(a, b)

    def _call(self, e, env):
        fn = e.fn
        if fn == "spmm":
            op = self._eval(e.args[0], env)
            if not isinstance(op, SparseOp):
                raise ShapeMismatch("spmm: first argument must be a graph operator")
            return ad.spmm(op, self._eval(e.args[1], env))
        if fn in _UNARY_CALLS:
            v = self._eval(e.args[0], env)
            if isinstance(v, float):
                v = self._as_tensor(v)
            return _UNARY_CALLS[fn](v)
        if fn == "pow":
            base = self._eval(e.args[0], env)
            expo = self._eval(e.args[1], env)
            if not isinstance(expo, float):
                raise ShapeMismatch("pow exponent must be a compile-time scalar")
            if isinstance(base, float):
                return float(base) ** expo
            return ad.power(base, expo)
        if fn == "attn_agg":
            op = self._eval(e.args[0], env)
            if not isinstance(op, SparseOp):
                raise ShapeMismatch("attn_agg: first argument must be a graph operator")
            return ad.edge_attn_agg(op,
                                    self._eval(e.args[1], env),
                                    self._eval(e.args[2], env),
                                    self._eval(e.args[3], env))
        if fn == "concat":
            return ad.concat_cols(self._eval(e.args[0], env), self._eval(e.args[1], env))
        raise ShapeMismatch(f"unknown function {fn!r}")


def compile_program(typed, graph, seed=0, dtype=np.float64):
    """Materialize operators and parameters for a shape-checked program."""
    return CompiledMechanism(typed, graph, seed=seed, dtype=dtype)
