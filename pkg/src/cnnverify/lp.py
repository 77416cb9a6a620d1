"""Linear programs with bounded variables: feasibility and single-objective min/max.

The engine is a two-phase primal simplex over bounded variables, dense numpy
throughout, with a Dantzig pricing rule that falls back to Bland's rule after
a pivot budget to break cycling. The interface is a contract: callers only see
`LpProblem` / `solve` / `LpOutcome`, so the engine can be swapped out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FEASIBILITY_TOL = 1e-6
PIVOT_TOL = 1e-9

LESS_EQUAL = "<="
EQUAL = "="
GREATER_EQUAL = ">="

_BASIC, _AT_LOWER, _AT_UPPER, _FREE = 0, 1, 2, 3


class LpSolverError(RuntimeError):
    """Numerical failure (cycling safeguard exceeded or singular basis)."""


@dataclass
class LinearExpr:
    """Sparse linear expression: sum of coeff * var plus a constant."""

    coeffs: dict[int, float] = field(default_factory=dict)
    constant: float = 0.0

    def __post_init__(self):
        self.coeffs = {v: float(c) for v, c in self.coeffs.items() if c != 0.0}
        self.constant = float(self.constant)

    @staticmethod
    def term(var: int, coeff: float = 1.0) -> "LinearExpr":
        return LinearExpr({var: coeff})

    def plus(self, other: "LinearExpr") -> "LinearExpr":
        coeffs = dict(self.coeffs)
        for v, c in other.coeffs.items():
            coeffs[v] = coeffs.get(v, 0.0) + c
        return LinearExpr(coeffs, self.constant + other.constant)

    def scaled(self, factor: float) -> "LinearExpr":
        return LinearExpr({v: c * factor for v, c in self.coeffs.items()},
                          self.constant * factor)

    def value(self, point: np.ndarray) -> float:
        return self.constant + sum(c * point[v] for v, c in self.coeffs.items())


@dataclass
class Violation:
    kind: str        # "constraint" or "bound"
    index: int       # constraint index, or variable id for bounds
    magnitude: float
    detail: str = ""


@dataclass
class LpOutcome:
    status: str                     # "optimal" | "infeasible" | "unbounded"
    optimum: float | None = None
    point: np.ndarray | None = None

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


class LpProblem:
    """Variables with [lower, upper] bounds, linear constraints, one objective.

    Constraints are (expr, relation) pairs read as ``expr relation 0``.
    """

    def __init__(self):
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.names: list[str] = []
        self.constraints: list[tuple[LinearExpr, str]] = []
        self.objective: LinearExpr | None = None
        self.sense: str = "feasibility"

    @property
    def num_vars(self) -> int:
        return len(self.lower)

    def add_variable(self, lower: float = -math.inf, upper: float = math.inf,
                     name: str | None = None) -> int:
        if lower > upper:
            raise ValueError(f"variable bounds crossed: [{lower}, {upper}]")
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.names.append(name if name is not None else f"x{len(self.names)}")
        return len(self.lower) - 1

    def set_bounds(self, var: int, lower: float, upper: float):
        if lower > upper:
            raise ValueError(f"variable bounds crossed: [{lower}, {upper}]")
        self.lower[var] = float(lower)
        self.upper[var] = float(upper)

    def add_constraint(self, expr: LinearExpr, relation: str):
        if relation not in (LESS_EQUAL, EQUAL, GREATER_EQUAL):
            raise ValueError(f"unknown relation {relation!r}")
        for v in expr.coeffs:
            if not 0 <= v < self.num_vars:
                raise ValueError(f"constraint references undeclared variable {v}")
        self.constraints.append((expr, relation))

    def set_objective(self, expr: LinearExpr | None, sense: str = "min"):
        if sense not in ("min", "max", "feasibility"):
            raise ValueError(f"unknown sense {sense!r}")
        self.objective = expr
        self.sense = sense

    def dump(self) -> str:
        """LP-style plain text, one constraint per line, for external cross-checks."""
        lines = []
        if self.sense == "feasibility" or self.objective is None:
            lines.append("feasibility")
        else:
            terms = " + ".join(f"{c!r} {self.names[v]}"
                               for v, c in sorted(self.objective.coeffs.items()))
            lines.append(f"{self.sense}: {terms} + {self.objective.constant!r}")
        lines.append("subject to:")
        for expr, rel in self.constraints:
            terms = " + ".join(f"{c!r} {self.names[v]}"
                               for v, c in sorted(expr.coeffs.items()))
            lines.append(f"  {terms} + {expr.constant!r} {rel} 0")
        lines.append("bounds:")
        for v in range(self.num_vars):
            lines.append(f"  {self.lower[v]!r} <= {self.names[v]} <= {self.upper[v]!r}")
        return "\n".join(lines)


def check_point(problem: LpProblem, point: np.ndarray,
                tol: float = FEASIBILITY_TOL) -> list[Violation]:
    """Every constraint or bound the point violates beyond the tolerance."""
    point = np.asarray(point, dtype=float)
    out = []
    for i, (expr, rel) in enumerate(problem.constraints):
        val = expr.value(point)
        over = 0.0
        if rel == LESS_EQUAL:
            over = val
        elif rel == GREATER_EQUAL:
            over = -val
        else:
            over = abs(val)
        if over > tol:
            out.append(Violation("constraint", i, over, f"{rel} 0 but value {val}"))
    for v in range(problem.num_vars):
        if point[v] < problem.lower[v] - tol:
            out.append(Violation("bound", v, problem.lower[v] - point[v], "below lower"))
        elif point[v] > problem.upper[v] + tol:
            out.append(Violation("bound", v, point[v] - problem.upper[v], "above upper"))
    return out


def solve(problem: LpProblem) -> LpOutcome:
    """Solve to optimality, or report infeasible/unbounded."""
    n = problem.num_vars
    rows = len(problem.constraints)
    a = np.zeros((rows, n + rows))  # structural vars then one slack/artificial slot per row
    b = np.zeros(rows)
    lower = np.array(problem.lower + [0.0] * rows)
    upper = np.array(problem.upper + [0.0] * rows)
    for i, (expr, rel) in enumerate(problem.constraints):
        for v, c in expr.coeffs.items():
            a[i, v] = c
        b[i] = -expr.constant
        if rel == LESS_EQUAL:
            a[i, n + i] = 1.0
            upper[n + i] = math.inf
        elif rel == GREATER_EQUAL:
            a[i, n + i] = 1.0
            lower[n + i] = -math.inf
        # equality rows keep their extra column fixed at 0

    c = np.zeros(n + rows)
    if problem.sense != "feasibility" and problem.objective is not None:
        for v, coef in problem.objective.coeffs.items():
            c[v] = coef
        if problem.sense == "max":
            c = -c

    x, status = _two_phase(a, b, c, lower, upper)
    if status != "optimal":
        return LpOutcome(status=status)
    point = x[:n]
    if problem.sense == "feasibility" or problem.objective is None:
        return LpOutcome("optimal", 0.0, point)
    value = problem.objective.value(point)
    return LpOutcome("optimal", value, point)


def _two_phase(a, b, c, lower, upper):
    """Return (x, status) for min c@x st a@x=b, lower<=x<=upper."""
    m, n = a.shape
    # Initial point: finite bound nearest zero, 0 for free variables.
    status = np.full(n, _AT_LOWER, dtype=int)
    for j in range(n):
        lo, hi = lower[j], upper[j]
        if math.isfinite(lo) and math.isfinite(hi):
            status[j] = _AT_LOWER if abs(lo) <= abs(hi) else _AT_UPPER
        elif math.isfinite(lo):
            status[j] = _AT_LOWER
        elif math.isfinite(hi):
            status[j] = _AT_UPPER
        else:
            status[j] = _FREE
    x0 = np.where(status == _AT_LOWER, lower, np.where(status == _AT_UPPER, upper, 0.0))
    residual = b - a @ x0

    signs = np.where(residual >= 0.0, 1.0, -1.0)
    a_ext = np.hstack([a, np.diag(signs)])
    lower_ext = np.concatenate([lower, np.zeros(m)])
    upper_ext = np.concatenate([upper, np.full(m, math.inf)])
    basis = list(range(n, n + m))
    status_ext = np.concatenate([status, np.full(m, _BASIC, dtype=int)])

    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    x, phase1_obj, term = _simplex(a_ext, b, c1, lower_ext, upper_ext, basis, status_ext)
    if term == "unbounded":
        raise LpSolverError("phase-1 objective reported unbounded")
    if phase1_obj > FEASIBILITY_TOL:
        return None, "infeasible"

    # Pin artificials at zero and optimize the true objective.
    upper_ext[n:] = 0.0
    c2 = np.concatenate([c, np.zeros(m)])
    x, _, term = _simplex(a_ext, b, c2, lower_ext, upper_ext, basis, status_ext)
    if term == "unbounded":
        return None, "unbounded"
    return x[:n], "optimal"


def _simplex(a, b, c, lower, upper, basis, status):
    """Bounded-variable primal simplex from a starting basis; mutates basis/status."""
    m, n = a.shape
    fixed = (upper - lower) < PIVOT_TOL
    max_iters = 500 + 50 * (m + n)
    bland_after = 200 + 10 * (m + n)

    for it in range(max_iters):
        bmat = a[:, basis]
        nonbasic_mask = status != _BASIC
        vals = np.where(status == _AT_LOWER, lower,
                        np.where(status == _AT_UPPER, upper, 0.0))
        vals[~nonbasic_mask] = 0.0
        try:
            xb = np.linalg.solve(bmat, b - a @ vals)
            y = np.linalg.solve(bmat.T, c[basis])
        except np.linalg.LinAlgError as e:
            raise LpSolverError(f"singular basis at iteration {it}") from e

        reduced = c - y @ a
        can_increase = nonbasic_mask & ~fixed & (
            (status == _AT_LOWER) | (status == _FREE)) & (reduced < -PIVOT_TOL)
        can_decrease = nonbasic_mask & ~fixed & (
            (status == _AT_UPPER) | (status == _FREE)) & (reduced > PIVOT_TOL)
        eligible = np.flatnonzero(can_increase | can_decrease)
        if eligible.size == 0:
            x = vals.copy()
            x[basis] = xb
            return x, float(c @ x), "optimal"

        if it < bland_after:
            entering = int(eligible[np.argmax(np.abs(reduced[eligible]))])
        else:
            entering = int(eligible[0])
        direction = 1.0 if can_increase[entering] else -1.0

        d = np.linalg.solve(bmat, a[:, entering])
        # Entering moves by t >= 0 along `direction`; basics move by -direction * d * t.
        t_limit = upper[entering] - lower[entering]  # bound-to-bound flip
        if not math.isfinite(t_limit):
            t_limit = math.inf
        leaving_row = -1
        leaving_to_upper = False
        for i in range(m):
            rate = -direction * d[i]
            if rate > PIVOT_TOL:
                room = upper[basis[i]] - xb[i]
                ti = max(room, 0.0) / rate
                hits_upper = True
            elif rate < -PIVOT_TOL:
                room = xb[i] - lower[basis[i]]
                ti = max(room, 0.0) / (-rate)
                hits_upper = False
            else:
                continue
            if ti < t_limit - PIVOT_TOL or (
                    ti < t_limit + PIVOT_TOL and leaving_row >= 0
                    and it >= bland_after and basis[i] < basis[leaving_row]):
                t_limit = ti
                leaving_row = i
                leaving_to_upper = hits_upper

        if not math.isfinite(t_limit):
            return None, None, "unbounded"
        if leaving_row < 0:
            # Bound flip: entering runs to its opposite bound.
            status[entering] = _AT_UPPER if direction > 0 else _AT_LOWER
        else:
            left = basis[leaving_row]
            status[left] = _AT_UPPER if leaving_to_upper else _AT_LOWER
            basis[leaving_row] = entering
            status[entering] = _BASIC

    raise LpSolverError(f"pivot budget exceeded ({max_iters} iterations)")
