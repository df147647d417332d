"""JSON files for instances and solutions.

Every file is an object with a ``kind`` field.  Output uses sorted keys and a
fixed layout, so writing the same instance twice gives identical bytes.
Infinite deadlines are stored as ``null``.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

from .bilevel import BilevelInstance, CpspInstance
from .errors import ParseError
from .robust import RtsptwInstance

KINDS = ("cpsp", "bilevel", "rtsptw")


def _finite(v):
    return None if v == math.inf else v


def instance_to_dict(inst) -> dict:
    if isinstance(inst, CpspInstance):
        return {"kind": "cpsp", "cL": inst.cL, "dL": inst.dL, "cF": inst.cF, "aL": inst.aL,
                "aF": inst.aF, "bL": inst.bL, "bF": inst.bF, "meta": inst.meta}
    if isinstance(inst, BilevelInstance):
        if inst.follower_spec is not None:
            raise ValueError("a follower given as a DP model cannot be written to JSON")
        return {"kind": "bilevel", "c1L": list(inst.c1L), "c2L": list(inst.c2L),
                "AL": [list(r) for r in inst.AL], "BL": [list(r) for r in inst.BL],
                "bL": list(inst.bL), "cF": list(inst.cF), "AF": [list(r) for r in inst.AF],
                "bF": list(inst.bF), "order": inst.order}
    if isinstance(inst, RtsptwInstance):
        return {"kind": "rtsptw", "cost": inst.cost, "travel": inst.travel, "r": inst.r,
                "d": [_finite(v) for v in inst.d], "l": inst.l, "u": inst.u, "b": inst.b,
                "semantics": inst.semantics, "meta": inst.meta}
    raise TypeError(f"cannot serialise {type(inst).__name__}")


def instance_from_dict(data: dict):
    if not isinstance(data, dict) or data.get("kind") not in KINDS:
        raise ParseError(f"instance kind must be one of {KINDS}")
    kind = data["kind"]
    try:
        if kind == "cpsp":
            return CpspInstance(cL=data["cL"], dL=data["dL"], cF=data["cF"], aL=data["aL"],
                                aF=data["aF"], bL=data["bL"], bF=data["bF"],
                                meta=data.get("meta", {}))
        if kind == "bilevel":
            return BilevelInstance(c1L=data["c1L"], c2L=data["c2L"], AL=data["AL"],
                                   BL=data["BL"], bL=data["bL"], cF=data["cF"], AF=data["AF"],
                                   bF=data["bF"], order=data.get("order", "given"))
        return RtsptwInstance(cost=data["cost"], travel=data["travel"], r=data["r"],
                              d=data["d"], l=data["l"], u=data["u"], b=data["b"],
                              semantics=data.get("semantics", "arrival"),
                              meta=data.get("meta", {}))
    except KeyError as exc:
        raise ParseError(f"{kind} instance is missing the field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ParseError(f"invalid {kind} instance: {exc}") from None


def dumps(data: dict) -> str:
    return json.dumps(data, sort_keys=True, indent=1) + "\n"


def loads(text: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from None


def write_instance(inst, path) -> None:
    Path(path).write_text(dumps(instance_to_dict(inst)))


def read_instance(path):
    return instance_from_dict(loads(Path(path).read_text()))


def write_solution(data: dict, path) -> None:
    Path(path).write_text(dumps(data))


def read_solution(path) -> dict:
    data = loads(Path(path).read_text())
    if not isinstance(data, dict) or "kind" not in data:
        raise ParseError("a solution file needs a 'kind' field")
    return data
