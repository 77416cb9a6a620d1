"""Complete search over piecewise-linear phases with LP-relaxation pruning.

Each search node is a set of phase decisions added as linear rows on top of a
shared LP relaxation of the whole query. An infeasible node is pruned; a
feasible node whose LP point already satisfies every piecewise-linear
constraint is re-evaluated concretely and, if the output constraints hold,
returned as a counterexample. Otherwise the most-violated open constraint is
split, exploring the phase the LP point suggests first.
"""

from __future__ import annotations

import time

import numpy as np

from .bounds import Bounds, PlDescriptor, build_query_lp, interval_pass
from .lp import EQUAL, LESS_EQUAL, LinearExpr, LpProblem, solve
from .query import Verdict, VerificationQuery, check_concrete

PL_TOL = 1e-6


def _clone(problem: LpProblem) -> LpProblem:
    p = LpProblem()
    p.lower = list(problem.lower)
    p.upper = list(problem.upper)
    p.names = list(problem.names)
    p.constraints = list(problem.constraints)
    return p


def _violation(desc: PlDescriptor, point: np.ndarray) -> float:
    b = point[desc.out_var]
    if desc.kind == "relu":
        return abs(b - max(0.0, point[desc.in_vars[0]]))
    return abs(b - max(point[a] for a in desc.in_vars))


def _phase_rows(desc: PlDescriptor, phase: int):
    """Linear rows pinning a constraint to one phase.

    ReLU: phase 0 = active (b = a, a >= 0), phase 1 = inactive (b = 0, a <= 0).
    Max: phase i = input i wins (b = a_i, a_j <= a_i for all j).
    """
    b = desc.out_var
    if desc.kind == "relu":
        a = desc.in_vars[0]
        if phase == 0:
            return [(LinearExpr({b: 1.0, a: -1.0}), EQUAL),
                    (LinearExpr({a: -1.0}), LESS_EQUAL)]
        return [(LinearExpr({b: 1.0}), EQUAL),
                (LinearExpr({a: 1.0}), LESS_EQUAL)]
    winner = desc.in_vars[phase]
    rows = [(LinearExpr({b: 1.0, winner: -1.0}), EQUAL)]
    for a in desc.in_vars:
        if a != winner:
            rows.append((LinearExpr({a: 1.0, winner: -1.0}), LESS_EQUAL))
    return rows


def _phase_order(desc: PlDescriptor, point: np.ndarray) -> list[int]:
    """Phases sorted so the one consistent with the LP point comes first."""
    if desc.kind == "relu":
        return [0, 1] if point[desc.in_vars[0]] >= 0.0 else [1, 0]
    vals = [point[a] for a in desc.in_vars]
    return sorted(range(len(vals)), key=lambda i: -vals[i])


def verify(query: VerificationQuery, deadline: float | None = None,
           bounds: Bounds | None = None, relaxation: str = "new") -> Verdict:
    """Decide ⟨P, N, Q⟩ exactly, up to LP floating-point tolerance.

    ``deadline`` is an absolute time.monotonic() timestamp; the search checks
    it between node expansions. ``bounds`` defaults to a fresh interval pass.
    """
    net = query.network
    if bounds is None:
        bounds = interval_pass(net, query.input_lo, query.input_hi)
    qlp = build_query_lp(net, query.input_lo, query.input_hi,
                         query.output_constraints, bounds, relaxation)
    open_descs = [d for d in qlp.pl_constraints if not d.fixed]
    input_vars = [qlp.var_of[(0, i)] for i in range(net.input_size)]
    promoted_vars = [qlp.var_of[nid] for nid in net.promoted_ids]

    stats = {"nodes": 0, "lp_solves": 0, "marginal": 0, "open_constraints": len(open_descs)}

    def finish(status, cex=None):
        stats["runtime"] = time.monotonic() - t0
        return Verdict(status, counterexample=cex, stats=dict(stats))

    t0 = time.monotonic()
    stack: list[tuple[tuple[int, int], ...]] = [()]
    while stack:
        if deadline is not None and time.monotonic() > deadline:
            return finish("timeout")
        decisions = stack.pop()
        stats["nodes"] += 1
        prob = _clone(qlp.problem)
        for di, phase in decisions:
            for row in _phase_rows(open_descs[di], phase):
                prob.add_constraint(*row)
        prob.set_objective(None, "feasibility")
        stats["lp_solves"] += 1
        out = solve(prob)
        if out.status == "infeasible":
            continue
        point = out.point
        decided = {di for di, _ in decisions}
        undecided = [i for i in range(len(open_descs)) if i not in decided]
        violations = [(_violation(open_descs[i], point), i) for i in undecided]
        worst = max(violations, default=(0.0, -1))
        if worst[0] <= PL_TOL:
            x = np.concatenate([point[input_vars],
                                point[promoted_vars] if promoted_vars else []])
            n = net.input_size
            x[:n] = np.clip(x[:n], query.input_lo, query.input_hi)
            for k, nid in enumerate(net.promoted_ids):
                lo, hi = net.promoted[nid]
                x[n + k] = min(max(x[n + k], lo), hi)
            if check_concrete(query, x):
                return finish("sat", x)
            stats["marginal"] += 1
            if not undecided:
                continue  # fully decided but numerically marginal: give up on leaf
            # fall through and split anyway
        # split the most violated open constraint, ties toward the lowest id
        best_v, best_i = 0.0, -1
        for v, i in violations:
            if v > best_v + 1e-15 or best_i == -1:
                best_v, best_i = v, i
        if best_i == -1:
            continue
        desc = open_descs[best_i]
        for phase in reversed(_phase_order(desc, point)):
            stack.append(decisions + ((best_i, phase),))
    return finish("unsat")
