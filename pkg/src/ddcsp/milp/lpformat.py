"""CPLEX LP text format: writer and a parser for the subset the writer emits.

The writer always produces the same six parts in order: a comment header,
the objective section, ``Subject To``, ``Bounds``, ``Binaries`` and ``End``.
Every variable gets an explicit bound line so a round trip is lossless.
"""
from __future__ import annotations

import math
import re

from ..errors import ParseError
from .model import LpModel

_NAME_RE = re.compile(r"^[A-Za-z_!\"#$%&()/,;?@`'{}|~][A-Za-z0-9_!\"#$%&()/,.;?@`'{}|~\[\]]*$")
_TERMS_PER_LINE = 8
_SECTIONS = {
    "minimize": "min", "minimise": "min", "minimum": "min", "min": "min",
    "maximize": "max", "maximise": "max", "maximum": "max", "max": "max",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "end": "end",
}


def _num(v: float) -> str:
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    text = format(float(v), ".17g")
    return "0" if text == "-0" else text


def _check_name(name: str) -> str:
    if not _NAME_RE.match(name) or len(name) > 255:
        raise ValueError(f"{name!r} is not a valid LP-format name")
    return name


def _expr(terms, names) -> list[str]:
    parts = []
    for j, coef in terms:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_num(abs(coef))} {names[j]}")
    if parts and parts[0].startswith("+ "):
        parts[0] = parts[0][2:]
    elif parts:
        parts[0] = "-" + parts[0][2:]
    return parts


def _wrap(head: str, parts: list[str], tail: str = "") -> list[str]:
    lines = []
    for k in range(0, max(len(parts), 1), _TERMS_PER_LINE):
        chunk = " ".join(parts[k:k + _TERMS_PER_LINE])
        lines.append(("  " if k else head) + chunk)
    lines[-1] += tail
    return lines


def write_lp(model: LpModel) -> str:
    """Render ``model`` as CPLEX LP text."""
    names = [_check_name(n) for n in model.var_names]
    for n in model.con_names:
        _check_name(n)
    out = [f"\\ Problem: {model.name}"]
    out.append("Maximize" if model.obj_sense == "max" else "Minimize")
    obj_parts = _expr(sorted(model.objective.items()), names)
    if model.obj_constant:
        c = model.obj_constant
        obj_parts.append(("- " if c < 0 else "+ ") + _num(abs(c)) if obj_parts else _num(c))
    if not obj_parts:
        obj_parts = ["0"]
    out.extend(_wrap(" obj: ", obj_parts))
    out.append("Subject To")
    for name, row, sense, rhs in zip(model.con_names, model.rows, model.senses, model.rhs):
        parts = _expr(sorted(row.items()), names)
        if not parts:
            parts = [f"0 {names[0]}"] if names else ["0"]
        out.extend(_wrap(f" {name}: ", parts, f" {sense} {_num(rhs)}"))
    out.append("Bounds")
    for j, name in enumerate(names):
        lo, hi = model.lb[j], model.ub[j]
        if lo == -math.inf and hi == math.inf:
            out.append(f" {name} free")
        else:
            out.append(f" {_num(lo)} <= {name} <= {_num(hi)}")
    out.append("Binaries")
    bins = [names[j] for j in range(len(names)) if model.binary[j]]
    for k in range(0, len(bins), _TERMS_PER_LINE):
        out.append(" " + " ".join(bins[k:k + _TERMS_PER_LINE]))
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp_file(model: LpModel, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(write_lp(model))


# -- parsing ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>[+-]?(?:inf(?:inity)?|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?))(?![A-Za-z0-9_])"
    r"|(?P<sense><=|>=|=<|=>|<|>|=)"
    r"|(?P<op>[+-])"
    r"|(?P<colon>:)"
    r"|(?P<name>[A-Za-z_!\"#$%&()/,.;?@`'{}|~\[\]][A-Za-z0-9_!\"#$%&()/,.;?@`'{}|~\[\]]*))",
    re.IGNORECASE)


def _tokens(text: str):
    pos = 0
    out = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"cannot tokenize near {text[pos:pos + 20]!r}")
        pos = m.end()
        kind = m.lastgroup
        val = m.group(kind)
        if kind == "num":
            low = val.lower().lstrip("+-")
            num = math.inf if low.startswith("inf") else float(val.lstrip("+-"))
            out.append(("num", -num if val.startswith("-") else num))
        elif kind == "sense":
            out.append(("sense", {"=<": "<=", "<": "<=", "=>": ">=", ">": ">="}.get(val, val)))
        else:
            out.append((kind, val))
    return out


def _split_sections(text: str):
    sections = []
    current = None
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = _SECTIONS.get(line.lower())
        if key is not None:
            current = [key, []]
            sections.append(current)
            if key == "end":
                break
            continue
        if current is None:
            raise ParseError(f"content before any section: {line!r}")
        current[1].append(line)
    return sections


def _parse_linear(tokens, k):
    """Terms until a sense token or the end; returns (terms, constant, k)."""
    terms = []
    const = 0.0
    sign = 1.0
    coef = None
    while k < len(tokens) and tokens[k][0] != "sense":
        kind, val = tokens[k]
        if kind == "op":
            sign = -sign if val == "-" else sign
        elif kind == "num":
            if coef is not None:
                const += sign * coef
                sign = 1.0
            coef = val
        elif kind == "name":
            terms.append((val, sign * (1.0 if coef is None else coef)))
            sign, coef = 1.0, None
        else:
            raise ParseError(f"unexpected token {val!r}")
        k += 1
    if coef is not None:
        const += sign * coef
    return terms, const, k


def parse_lp(text: str) -> LpModel:
    """Parse LP text produced by :func:`write_lp` (and close relatives)."""
    sections = _split_sections(text)
    if not sections or sections[0][0] not in ("min", "max"):
        raise ParseError("missing objective section")
    model = LpModel()
    header = re.match(r"\s*\\\s*Problem:\s*(\S+)", text)
    if header:
        model.name = header.group(1)
    bounds: dict[str, tuple[float, float]] = {}
    binaries: list[str] = []
    order: list[str] = []
    seen = set()

    def touch(name):
        if name not in seen:
            seen.add(name)
            order.append(name)

    obj_terms: list = []
    obj_const = 0.0
    cons = []
    for key, lines in sections:
        if key in ("min", "max"):
            sense = key
            toks = _tokens(" ".join(lines))
            if len(toks) >= 2 and toks[0][0] == "name" and toks[1][0] == "colon":
                toks = toks[2:]
            obj_terms, obj_const, k = _parse_linear(toks, 0)
            if k != len(toks):
                raise ParseError("objective contains a comparison")
            for n, _ in obj_terms:
                touch(n)
        elif key == "st":
            toks = _tokens(" ".join(lines))
            k = 0
            auto = 0
            while k < len(toks):
                if k + 1 < len(toks) and toks[k][0] == "name" and toks[k + 1][0] == "colon":
                    cname = toks[k][1]
                    k += 2
                else:
                    auto += 1
                    cname = f"R{auto}"
                terms, const, k = _parse_linear(toks, k)
                if k >= len(toks):
                    raise ParseError(f"constraint {cname} has no sense")
                csense = toks[k][1]
                k += 1
                if k >= len(toks):
                    raise ParseError(f"constraint {cname} has no right-hand side")
                sign = 1.0
                while toks[k][0] == "op":
                    sign = -sign if toks[k][1] == "-" else sign
                    k += 1
                if toks[k][0] != "num":
                    raise ParseError(f"constraint {cname} has a non-numeric right-hand side")
                rhs = sign * toks[k][1] - const
                k += 1
                for n, _ in terms:
                    touch(n)
                cons.append((cname, terms, csense, rhs))
        elif key == "bounds":
            for line in lines:
                _parse_bound(_tokens(line), bounds, touch)
        elif key == "bin":
            for line in lines:
                for tok in line.split():
                    touch(tok)
                    binaries.append(tok)
    binset = set(binaries)
    for n in order:
        lo, hi = bounds.get(n, (0.0, 1.0) if n in binset else (0.0, math.inf))
        model.add_var(n, lo, hi, binary=n in binset)
    for cname, terms, csense, rhs in cons:
        model.add_constraint(cname, [(model.var(n), c) for n, c in terms], csense, rhs)
    model.set_objective([(model.var(n), c) for n, c in obj_terms], sense, obj_const)
    return model


def _parse_bound(toks, bounds, touch):
    kinds = [t[0] for t in toks]
    if kinds == ["name", "name"] and toks[1][1].lower() == "free":
        touch(toks[0][1])
        bounds[toks[0][1]] = (-math.inf, math.inf)
    elif kinds == ["num", "sense", "name", "sense", "num"]:
        touch(toks[2][1])
        bounds[toks[2][1]] = (toks[0][1], toks[4][1])
    elif kinds == ["name", "sense", "num"]:
        name, s, v = toks[0][1], toks[1][1], toks[2][1]
        touch(name)
        lo, hi = bounds.get(name, (0.0, math.inf))
        bounds[name] = (v, hi) if s == ">=" else (lo, v) if s == "<=" else (v, v)
    elif kinds == ["num", "sense", "name"]:
        v, s, name = toks[0][1], toks[1][1], toks[2][1]
        touch(name)
        lo, hi = bounds.get(name, (0.0, math.inf))
        bounds[name] = (lo, v) if s == ">=" else (v, hi) if s == "<=" else (v, v)
    else:
        raise ParseError(f"unsupported bound line: {toks!r}")


def read_lp_file(path) -> LpModel:
    with open(path, encoding="ascii") as fh:
        return parse_lp(fh.read())


def models_equal(a: LpModel, b: LpModel, tol: float = 0.0) -> bool:
    """Name-keyed structural equality of two models."""
    def close(x, y):
        return x == y or abs(x - y) <= tol

    if set(a.var_names) != set(b.var_names) or set(a.con_names) != set(b.con_names):
        return False
    for n in a.var_names:
        i, j = a.var(n), b.var(n)
        if a.binary[i] != b.binary[j] or not close(a.lb[i], b.lb[j]) or not close(a.ub[i], b.ub[j]):
            return False
    if a.obj_sense != b.obj_sense or not close(a.obj_constant, b.obj_constant):
        return False

    def named(terms, model):
        return {model.var_names[j]: v for j, v in terms.items()}

    def same_terms(x, y):
        return x.keys() == y.keys() and all(close(x[k], y[k]) for k in x)

    if not same_terms(named(a.objective, a), named(b.objective, b)):
        return False
    for n in a.con_names:
        i, j = a.constraint(n), b.constraint(n)
        if a.senses[i] != b.senses[j] or not close(a.rhs[i], b.rhs[j]):
            return False
        if not same_terms(named(a.rows[i], a), named(b.rows[j], b)):
            return False
    return True
