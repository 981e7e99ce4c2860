"""Prompt rendering, chat-completion backends, and response parsing."""

from __future__ import annotations

import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import MalformedResponse, SpecSearchError

CLOSING_SENTENCE = "Do not give additional explanations."

GRAMMAR_SUMMARY = """\
Write the propagation mechanism in this small DSL (not Python):

mechanism <name> {
  consts { K = <int, at most 16>; <name> = <number>; ... }        # optional
  params { <name>: scalar|vector(n)|vector(h)|matrix(h, h)[K]? = glorot|normal|const(<v>); ... }
  graph  { <name> = sym_norm(c=<w>)|rw_norm(c=<w>)|laplacian()|sym_laplacian()|scaled_laplacian()|pruned_norm(c=<w>); }
  init   { <var> = <expr>; ... }
  step   { <var> = <expr>; ... }       # optional; repeated for k = 1..K
  final  { <var> = <expr>; ... }       # optional; runs once after the loop
  out    { Y = <expr>; }
}

Expressions use + - * / @ (matrix product), parentheses, and the calls
spmm(op, M), relu(M), elu(M), tanh(M), sigmoid(M), softmax_rows(M), pow(s, e),
sum_rows(M), attn_agg(op, src_scores, dst_scores, M), concat(A, B).
Implicit inputs: X (n x h transformed features), X_raw (n x h raw linear
features); k is the loop index and K the loop bound. Per-layer weights are
indexed W[k]. The output Y must be n x h or n x c.

Worked example (your reply should wrap the mechanism in a single
triple-backtick fenced block):

    mechanism appnp {
      consts { K = 4; alpha = 0.1; }
      graph { Ahat = sym_norm(c=1); }
      init { Z = X; }
      step { Z = (1 - alpha) * spmm(Ahat, Z) + alpha * X; }
      out { Y = Z; }
    }
"""

_OP_INSTRUCTIONS = {
    "E1": ("Design a new spectral GNN propagation mechanism that is completely "
           "different from the given spectral GNN mechanisms above. Give a brief "
           "textual description of the design ideas, then the mechanism."),
    "E2": ("First, identify the common ideas of the existing spectral GNNs shown "
           "above. Then design a new spectral GNN propagation mechanism based on "
           "these common ideas, but differing from the existing ones by "
           "introducing new elements. Give a brief textual description of the "
           "design ideas, then the mechanism."),
    "C1": ("Compare the two spectral GNN mechanisms above, note their "
           "similarities and differences, and hypothesize why the higher-score "
           "mechanism is superior. Then design a more optimal spectral GNN "
           "propagation mechanism. Give a brief textual description of the "
           "design ideas, then the mechanism."),
}


@dataclass(frozen=True)
class PromptRequest:
    op_kind: str
    basic_content: str
    embedded_individuals: tuple   # of (ideas, program_text, fitness)
    request_info: str

    def __post_init__(self):
        if self.op_kind not in ("E1", "E2", "C1"):
            raise ValueError(f"unknown prompt operator {self.op_kind!r}")
        if CLOSING_SENTENCE not in self.request_info:
            raise ValueError(f"request_info must contain {CLOSING_SENTENCE!r}")


@dataclass(frozen=True)
class LlmResponse:
    text: str        # None marks a bridge failure for this slot
    op_kind: str
    slot: int
    generation: int

    @property
    def failed(self):
        return self.text is None


def default_basic_content(graph):
    return (
        "You are designing the propagation mechanism of a spectral graph neural "
        "network for transductive node classification.\n"
        f"The graph is named {graph.name!r}: {graph.num_nodes} nodes, "
        f"{len(graph.edges)} undirected edges, {graph.num_features} input "
        f"features per node, {graph.num_classes} classes.\n"
        "Tips: low-pass filters (smoothing over neighbors) suit graphs where "
        "linked nodes share labels; high-pass filters (differences against "
        "neighbors) suit graphs where linked nodes differ; residual connections "
        "to the raw features often stabilize deep propagation.\n")


def default_request_info(hidden):
    return (
        f"Requirements: the mechanism receives X and X_raw of shape n x h with "
        f"h = {hidden}, and must output Y of shape n x h or n x c. Declare every "
        "parameter you use. Reply with the design-ideas description followed by "
        "exactly one triple-backtick fenced code block containing only the "
        "mechanism. "
        f"{CLOSING_SENTENCE}")


def render_prompt(req):
    """Deterministic prompt text for one operator invocation."""
    inds = req.embedded_individuals
    if req.op_kind == "C1":
        if len(inds) != 2:
            raise SpecSearchError(f"C1 embeds exactly 2 individuals, got {len(inds)}")
    elif not inds:
        raise SpecSearchError(f"{req.op_kind} needs at least one embedded individual")
    parts = [req.basic_content.rstrip(), ""]
    if req.op_kind == "C1":
        labels = ("higher-score", "lower-score")
        for (ideas, text, fitness), label in zip(inds, labels):
            parts.append(f"Mechanism ({label}, validation score {fitness:.4f}):")
            parts.append(ideas.strip())
            parts.append("```")
            parts.append(text.strip())
            parts.append("```")
            parts.append("")
    else:
        for i, (ideas, text, _fitness) in enumerate(inds, 1):
            parts.append(f"Existing mechanism {i}:")
            parts.append(ideas.strip())
            parts.append("```")
            parts.append(text.strip())
            parts.append("```")
            parts.append("")
    parts.append(_OP_INSTRUCTIONS[req.op_kind])
    parts.append("")
    parts.append(GRAMMAR_SUMMARY.rstrip())
    parts.append("")
    parts.append(req.request_info.strip())
    return "\n".join(parts) + "\n"


class ReplayBackend:
    """Scripted responses keyed by (generation, op, slot); missing keys are fatal."""

    def __init__(self, source):
        self.records = {}
        if isinstance(source, (str, os.PathLike)):
            with open(source, "r", encoding="utf-8") as fh:
                lines = [json.loads(line) for line in fh if line.strip()]
        else:
            lines = list(source)
        for rec in lines:
            key = (int(rec["gen"]), rec["op"], int(rec["slot"]))
            if key in self.records:
                raise SpecSearchError(f"duplicate replay key {key}")
            self.records[key] = rec["text"]

    def complete_one(self, request, generation, slot):
        key = (generation, request.op_kind, slot)
        if key not in self.records:
            raise SpecSearchError(f"replay script has no record for {key}")
        return self.records[key]


class LiveBackend:
    """Chat-completions client: two retries with 1s/4s backoff, then a failure marker."""

    RETRY_DELAYS = (1.0, 4.0)

    def __init__(self, base_url, model, temperature=1.0, max_concurrent=4,
                 api_key_env="LLM_API_KEY", timeout=120):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.temperature = temperature
        self.max_concurrent = max_concurrent
        self.api_key_env = api_key_env
        self.timeout = timeout

    def complete_one(self, request, generation, slot):
        import requests as _requests

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": render_prompt(request)}],
            "n": 1,
            "temperature": self.temperature,
        }
        attempts = len(self.RETRY_DELAYS) + 1
        for attempt in range(attempts):
            try:
                resp = _requests.post(f"{self.base_url}/chat/completions",
                                      json=body, headers=headers, timeout=self.timeout)
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except Exception:
                if attempt < len(self.RETRY_DELAYS):
                    time.sleep(self.RETRY_DELAYS[attempt])
        return None


def complete(requests, parallelism, backend, generation=0):
    """`parallelism` completions per request, returned in (request, slot) order."""
    jobs = [(ri, slot, req) for ri, req in enumerate(requests)
            for slot in range(parallelism)]
    out = {}
    if isinstance(backend, ReplayBackend):
        for ri, slot, req in jobs:
            out[(ri, slot)] = backend.complete_one(req, generation, slot)
    else:
        max_workers = max(1, getattr(backend, "max_concurrent", parallelism))
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = {(ri, slot): pool.submit(backend.complete_one, req, generation, slot)
                       for ri, slot, req in jobs}
        for key, fut in futures.items():
            out[key] = fut.result()
    return [LlmResponse(text=out[(ri, slot)], op_kind=req.op_kind,
                        slot=slot, generation=generation)
            for ri, slot, req in jobs]


_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def parse_response(resp):
    """Split a response into (ideas, program_text); raises MalformedResponse."""
    if resp.failed or resp.text is None:
        raise MalformedResponse("bridge_failure")
    blocks = _FENCE_RE.findall(resp.text)
    if len(blocks) == 0:
        raise MalformedResponse("no_code")
    if len(blocks) > 1:
        raise MalformedResponse("multiple_blocks")
    program_text = blocks[0].strip()
    if not program_text:
        raise MalformedResponse("empty_code")
    ideas = resp.text.split("```", 1)[0].strip()
    return ideas, program_text
