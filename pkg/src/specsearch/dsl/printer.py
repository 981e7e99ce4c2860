"""Canonical printer: one statement per line, two-space indent, minimal parentheses."""

from __future__ import annotations

from .nodes import Bin, Call, Index, Name, Num, Unary

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "@": 2}


def _fmt_num(v):
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _fmt_expr(e, parent_prec=0, right_side=False):
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Name):
        return e.ident
    if isinstance(e, Index):
        return f"{e.name}[{_fmt_expr(e.index)}]"
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(_fmt_expr(a) for a in e.args)})"
    if isinstance(e, Unary):
        inner = _fmt_expr(e.operand, parent_prec=3)
        s = f"-{inner}"
        return f"({s})" if parent_prec > 2 else s
    if isinstance(e, Bin):
        prec = _PREC[e.op]
        left = _fmt_expr(e.left, parent_prec=prec, right_side=False)
        right = _fmt_expr(e.right, parent_prec=prec + 1, right_side=True)
        s = f"{left} {e.op} {right}"
        if prec < parent_prec or (prec == parent_prec and right_side):
            return f"({s})"
        return s
    raise TypeError(f"not an expression node: {e!r}")


def _fmt_dim(d):
    return str(d)


def _fmt_init(spec):
    if spec == "glorot":
        return "glorot"
    if spec == "normal":
        return "normal"
    return f"const({_fmt_num(spec[1])})"


def print_program(prog):
    """Render a Program AST back to canonical DSL text."""
    lines = [f"mechanism {prog.name} {{"]
    if prog.consts:
        lines.append("  consts {")
        for name, v in prog.consts:
            lines.append(f"    {name} = {_fmt_num(v)};")
        lines.append("  }")
    if prog.params:
        lines.append("  params {")
        for p in prog.params:
            if p.kind == "scalar":
                ty = "scalar"
            elif p.kind == "vector":
                ty = f"vector({_fmt_dim(p.dims[0])})"
            else:
                ty = f"matrix({_fmt_dim(p.dims[0])}, {_fmt_dim(p.dims[1])})"
            arr = "" if p.array is None else f"[{p.array}]"
            lines.append(f"    {p.name}: {ty}{arr} = {_fmt_init(p.init)};")
        lines.append("  }")
    if prog.graph_defs:
        lines.append("  graph {")
        for g in prog.graph_defs:
            arg = f"c={_fmt_num(g.self_loop)}" if g.self_loop != 0 else ""
            lines.append(f"    {g.name} = {g.ctor}({arg});")
        lines.append("  }")

    def block(kw, stmts):
        lines.append(f"  {kw} {{")
        for st in stmts:
            lines.append(f"    {st.target} = {_fmt_expr(st.expr)};")
        lines.append("  }")

    block("init", prog.init_block)
    if prog.has_step:
        block("step", prog.step_block)
    if prog.has_final:
        block("final", prog.final_block)
    lines.append("  out {")
    lines.append(f"    Y = {_fmt_expr(prog.out_expr)};")
    lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"
