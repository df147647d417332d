"""Linear / binary model container and solution record."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..errors import SolverError

SENSES = ("<=", ">=", "=")


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    CAP_EXCEEDED = "cap"
    TIME_LIMIT = "timeout"


class LpModel:
    """Named variables with bounds, linear rows, and a linear objective.

    Rows and the objective are stored sparsely as ``{var_index: coef}``.
    Binary variables are ordinary variables with bounds inside ``[0, 1]`` and
    an integrality flag that only the branch-and-bound honours.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.binary: list[bool] = []
        self._var_index: dict[str, int] = {}
        self.con_names: list[str] = []
        self.rows: list[dict[int, float]] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self._con_index: dict[str, int] = {}
        self.objective: dict[int, float] = {}
        self.obj_sense = "min"
        self.obj_constant = 0.0

    # -- building --------------------------------------------------------
    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                binary: bool = False) -> int:
        if name in self._var_index:
            raise ValueError(f"duplicate variable name {name!r}")
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ValueError(f"variable {name!r} has lb > ub")
        idx = len(self.var_names)
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(bool(binary))
        self._var_index[name] = idx
        return idx

    def add_constraint(self, name: str, terms, sense: str, rhs: float) -> int:
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        if name in self._con_index:
            raise ValueError(f"duplicate constraint name {name!r}")
        row: dict[int, float] = {}
        items = terms.items() if isinstance(terms, dict) else terms
        for j, coef in items:
            if not 0 <= j < len(self.var_names):
                raise IndexError(f"variable index {j} out of range")
            row[j] = row.get(j, 0.0) + float(coef)
        row = {j: v for j, v in row.items() if v != 0.0}
        idx = len(self.con_names)
        self.con_names.append(name)
        self.rows.append(row)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self._con_index[name] = idx
        return idx

    def set_objective(self, terms, sense: str = "min", constant: float = 0.0) -> None:
        if sense not in ("min", "max"):
            raise ValueError("objective sense must be 'min' or 'max'")
        obj: dict[int, float] = {}
        items = terms.items() if isinstance(terms, dict) else terms
        for j, coef in items:
            obj[j] = obj.get(j, 0.0) + float(coef)
        self.objective = {j: v for j, v in obj.items() if v != 0.0}
        self.obj_sense = sense
        self.obj_constant = float(constant)

    # -- queries ---------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_constraints(self) -> int:
        return len(self.con_names)

    @property
    def num_binaries(self) -> int:
        return sum(self.binary)

    def var(self, name: str) -> int:
        return self._var_index[name]

    def constraint(self, name: str) -> int:
        return self._con_index[name]

    def dense(self):
        """``(A, b, c)`` as numpy arrays; ``c`` in the model's own sense."""
        A = np.zeros((self.num_constraints, self.num_vars))
        for i, row in enumerate(self.rows):
            for j, v in row.items():
                A[i, j] = v
        c = np.zeros(self.num_vars)
        for j, v in self.objective.items():
            c[j] = v
        return A, np.array(self.rhs, dtype=float), c

    def evaluate(self, x) -> float:
        return self.obj_constant + math.fsum(v * x[j] for j, v in self.objective.items())

    def max_violation(self, x) -> float:
        """Largest violation of any row or bound at ``x``."""
        worst = 0.0
        for j in range(self.num_vars):
            worst = max(worst, self.lb[j] - x[j], x[j] - self.ub[j])
        for row, sense, rhs in zip(self.rows, self.senses, self.rhs):
            lhs = math.fsum(v * x[j] for j, v in row.items())
            if sense == "<=":
                worst = max(worst, lhs - rhs)
            elif sense == ">=":
                worst = max(worst, rhs - lhs)
            else:
                worst = max(worst, abs(lhs - rhs))
        return worst

    def __repr__(self):
        return (f"LpModel({self.name!r}, vars={self.num_vars}, binaries={self.num_binaries}, "
                f"rows={self.num_constraints})")


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    nodes: int = 0
    var_names: list = field(default_factory=list, repr=False)

    @property
    def is_optimal(self) -> bool:
        return self.status == Status.OPTIMAL

    def value(self, name: str) -> float:
        return float(self.x[self.var_names.index(name)])

    def values(self) -> dict:
        return {n: float(v) for n, v in zip(self.var_names, self.x)}

    def raise_for_status(self) -> "LpSolution":
        if not self.is_optimal:
            raise SolverError(self.status.value)
        return self
