"""Sound per-neuron bounds: an interval-arithmetic pass, then optional LP tightening.

ReLU constraints use the standard triangle relaxation. Max constraints can be
encoded with several relaxations: a convex-hull-face encoding ("new") built
from the two anchor points l_max and u_min plus a secondary-upper-bound face,
a combined prior-art encoding ("sota"), and its individual ingredients
("planet", "deeppoly", "cnncert").
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .lp import (EQUAL, LESS_EQUAL, LinearExpr, LpProblem, LpSolverError, solve)
from .network import (ConvolutionLayer, InputLayer, MaxPoolLayer, Network,
                      NeuronId, OutputLayer, ReluLayer, WeightedSumLayer)

log = logging.getLogger(__name__)

RELAXATIONS = ("new", "sota", "planet", "deeppoly", "cnncert")

_DEGENERATE = 1e-9  # divisor guard for u == l


@dataclass
class Bounds:
    """Per-neuron [lower, upper] bounds, one pair of vectors per layer."""

    lo: list[np.ndarray]
    hi: list[np.ndarray]

    @staticmethod
    def empty(net: Network) -> "Bounds":
        return Bounds([np.full(l.size, -math.inf) for l in net.layers],
                      [np.full(l.size, math.inf) for l in net.layers])

    def get(self, nid: NeuronId) -> tuple[float, float]:
        lid, idx = nid
        return float(self.lo[lid][idx]), float(self.hi[lid][idx])

    def set(self, nid: NeuronId, lower: float, upper: float):
        lid, idx = nid
        self.lo[lid][idx] = lower
        self.hi[lid][idx] = upper

    def shrink(self, nid: NeuronId, lower: float, upper: float):
        """Intersect with [lower, upper]; never widens."""
        lid, idx = nid
        self.lo[lid][idx] = max(self.lo[lid][idx], lower)
        self.hi[lid][idx] = min(self.hi[lid][idx], upper)

    def copy(self) -> "Bounds":
        return Bounds([v.copy() for v in self.lo], [v.copy() for v in self.hi])

    def check_ordered(self, tol: float = 1e-9) -> bool:
        return all(np.all(l <= h + tol) for l, h in zip(self.lo, self.hi))


def interval_pass(net: Network, input_lo: np.ndarray, input_hi: np.ndarray) -> Bounds:
    """Forward interval arithmetic, layer by layer.

    Affine layers split weights by sign; ReLU clamps; max-pooling takes the
    pool-wise max of each bound. Promoted neurons take their stored bounds,
    pruned neurons are parked at [0, 0].
    """
    input_lo = np.asarray(input_lo, dtype=float)
    input_hi = np.asarray(input_hi, dtype=float)
    if input_lo.shape != (net.input_size,) or input_hi.shape != (net.input_size,):
        raise ValueError("input bound vectors must match the input layer size")
    bounds = Bounds.empty(net)
    bounds.lo[0] = input_lo.copy()
    bounds.hi[0] = input_hi.copy()
    for lid, layer in enumerate(net.layers[1:], start=1):
        ulo, uhi = bounds.lo[lid - 1], bounds.hi[lid - 1]
        if isinstance(layer, WeightedSumLayer):
            wp = np.clip(layer.weights, 0.0, None)
            wn = np.clip(layer.weights, None, 0.0)
            vlo = layer.bias + wp @ ulo + wn @ uhi
            vhi = layer.bias + wp @ uhi + wn @ ulo
        elif isinstance(layer, ConvolutionLayer):
            kp = np.clip(layer.kernel, 0.0, None)[::-1]
            kn = np.clip(layer.kernel, None, 0.0)[::-1]
            vlo = layer.bias + np.convolve(ulo, kp, "valid") + np.convolve(uhi, kn, "valid")
            vhi = layer.bias + np.convolve(uhi, kp, "valid") + np.convolve(ulo, kn, "valid")
        elif isinstance(layer, ReluLayer):
            vlo = np.maximum(ulo, 0.0)
            vhi = np.maximum(uhi, 0.0)
        elif isinstance(layer, MaxPoolLayer):
            vlo = ulo.reshape(-1, layer.pool_size).max(axis=1)
            vhi = uhi.reshape(-1, layer.pool_size).max(axis=1)
        else:
            raise ValueError(f"cannot bound layer kind {layer.kind}")
        for idx in range(layer.size):
            nid = (lid, idx)
            if nid in net.promoted:
                vlo[idx], vhi[idx] = net.promoted[nid]
            elif nid in net.pruned:
                vlo[idx], vhi[idx] = 0.0, 0.0
        bounds.lo[lid] = vlo
        bounds.hi[lid] = vhi
    return bounds


@dataclass(frozen=True)
class MaxRelaxation:
    """Derived scalars for one max constraint b = max(a_0..a_{k-1})."""

    u_f: float
    u_s: float
    l_max: float
    u_min: float
    f: int
    s: int

    @property
    def trivial(self) -> bool:
        """One input dominates: its lower bound beats every other upper bound."""
        return self.u_s < self.l_max


def max_relaxation_params(lo, hi) -> MaxRelaxation:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise ValueError("crossed bounds in max constraint")
    f = int(np.argmax(hi))
    u_f = float(hi[f])
    if hi.size == 1:
        return MaxRelaxation(u_f, -math.inf, float(lo[0]), u_f, f, f)
    others = [i for i in range(hi.size) if i != f]
    s = int(others[int(np.argmax(hi[others]))])
    u_s = float(hi[s])
    l_max = float(lo.max())
    over = hi[hi >= l_max]
    u_min = float(over.min()) if over.size else u_f
    return MaxRelaxation(u_f, u_s, l_max, u_min, f, s)


def _dedup(constraints):
    out = []
    for expr, rel in constraints:
        dup = False
        for e2, r2 in out:
            if r2 != rel or set(e2.coeffs) != set(expr.coeffs):
                continue
            scale = max(abs(expr.constant), 1.0)
            if abs(e2.constant - expr.constant) > 1e-12 * scale:
                continue
            if all(abs(e2.coeffs[v] - c) <= 1e-12 * max(abs(c), 1.0)
                   for v, c in expr.coeffs.items()):
                dup = True
                break
        if not dup:
            out.append((expr, rel))
    return out


def encode_relu_relaxation(a: int, b: int, l: float, u: float):
    """Triangle relaxation of b = max(0, a), as (expr, relation-to-zero) rows."""
    if l > u:
        raise ValueError("crossed bounds for relu input")
    if u <= 0.0:
        return [(LinearExpr({b: 1.0}), EQUAL)]
    if l >= 0.0:
        return [(LinearExpr({b: 1.0, a: -1.0}), EQUAL)]
    slope = u / (u - l)
    return [
        (LinearExpr({b: -1.0}), LESS_EQUAL),            # b >= 0
        (LinearExpr({a: 1.0, b: -1.0}), LESS_EQUAL),    # b >= a
        (LinearExpr({b: 1.0, a: -slope}, slope * l), LESS_EQUAL),  # b <= u(a-l)/(u-l)
    ]


def _lambda_upper_bound(a_vars, b, lo, hi, lam):
    # b <= lam + sum_i relu(u_i - lam)/(u_i - l_i) * (a_i - l_i)
    coeffs = {b: 1.0}
    constant = -lam
    for a, l, u in zip(a_vars, lo, hi):
        if u - l < _DEGENERATE:
            continue  # (a_i - l_i) is identically 0
        c = max(u - lam, 0.0) / (u - l)
        if c != 0.0:
            coeffs[a] = coeffs.get(a, 0.0) - c
            constant += c * l
    return (LinearExpr(coeffs, constant), LESS_EQUAL)


def _max_lower_bounds(a_vars, b):
    return [(LinearExpr({a: 1.0, b: -1.0}), LESS_EQUAL) for a in a_vars]


def encode_max_relaxation_new(a_vars, b, lo, hi):
    """Convex-hull-face upper bounds for b = max(a_i) plus the exact lower bounds."""
    p = max_relaxation_params(lo, hi)
    if p.trivial or len(a_vars) == 1:
        return [(LinearExpr({b: 1.0, a_vars[p.f]: -1.0}), EQUAL)]
    rows = _max_lower_bounds(a_vars, b)
    for lam in (p.l_max, p.u_min):
        rows.append(_lambda_upper_bound(a_vars, b, lo, hi, lam))
    l_f = float(lo[p.f])
    if p.u_f - l_f >= _DEGENERATE:
        # b <= u_f (u_s - l_f)/(u_f - l_f) + a_f (u_f - u_s)/(u_f - l_f)
        denom = p.u_f - l_f
        rows.append((LinearExpr({b: 1.0, a_vars[p.f]: -(p.u_f - p.u_s) / denom},
                                -p.u_f * (p.u_s - l_f) / denom), LESS_EQUAL))
    return _dedup(rows)


def _gamma(lo, hi):
    num, den = -1.0, 0.0
    for l, u in zip(lo, hi):
        if u - l < _DEGENERATE:
            continue
        num += u / (u - l)
        den += 1.0 / (u - l)
    if den == 0.0:
        return None
    return num / den


def encode_max_relaxation_sota(a_vars, b, lo, hi):
    """Combined prior-art encoding: clamped-anchor face, hard cap u_f, and the
    sum-of-slacks bound."""
    p = max_relaxation_params(lo, hi)
    if p.trivial or len(a_vars) == 1:
        return [(LinearExpr({b: 1.0, a_vars[p.f]: -1.0}), EQUAL)]
    rows = _max_lower_bounds(a_vars, b)
    g0 = _gamma(lo, hi)
    gamma = p.l_max if g0 is None else min(max(g0, p.l_max), p.u_min)
    rows.append(_lambda_upper_bound(a_vars, b, lo, hi, gamma))
    rows.append((LinearExpr({b: 1.0}, -p.u_f), LESS_EQUAL))  # b <= u_f
    coeffs = {b: 1.0}
    constant = -p.l_max
    for a, l in zip(a_vars, lo):
        coeffs[a] = coeffs.get(a, 0.0) - 1.0
        constant += l
    rows.append((LinearExpr(coeffs, constant), LESS_EQUAL))  # b <= l_max + sum(a_i - l_i)
    return _dedup(rows)


def encode_max_relaxation_planet(a_vars, b, lo, hi):
    p = max_relaxation_params(lo, hi)
    if p.trivial or len(a_vars) == 1:
        return [(LinearExpr({b: 1.0, a_vars[p.f]: -1.0}), EQUAL)]
    rows = _max_lower_bounds(a_vars, b)
    coeffs = {b: 1.0}
    constant = -p.l_max
    for a, l in zip(a_vars, lo):
        coeffs[a] = coeffs.get(a, 0.0) - 1.0
        constant += l
    rows.append((LinearExpr(coeffs, constant), LESS_EQUAL))
    return _dedup(rows)


def encode_max_relaxation_deeppoly(a_vars, b, lo, hi):
    p = max_relaxation_params(lo, hi)
    if p.trivial or len(a_vars) == 1:
        return [(LinearExpr({b: 1.0, a_vars[p.f]: -1.0}), EQUAL)]
    m = int(np.argmax(np.asarray(lo)))
    return [
        (LinearExpr({a_vars[m]: 1.0, b: -1.0}), LESS_EQUAL),  # b >= a_m
        (LinearExpr({b: 1.0}, -p.u_f), LESS_EQUAL),           # b <= u_f
    ]


def encode_max_relaxation_cnncert(a_vars, b, lo, hi):
    p = max_relaxation_params(lo, hi)
    if p.trivial or len(a_vars) == 1:
        return [(LinearExpr({b: 1.0, a_vars[p.f]: -1.0}), EQUAL)]
    g0 = _gamma(lo, hi)
    gamma = p.l_max if g0 is None else min(max(g0, p.l_max), p.u_min)
    rows = [_lambda_upper_bound(a_vars, b, lo, hi, gamma)]
    slopes = {}
    big_g = 0.0
    for a, l, u in zip(a_vars, lo, hi):
        if u - l < _DEGENERATE:
            continue
        c = max(u - gamma, 0.0) / (u - l)
        slopes[a] = c
        big_g += c
    if big_g < 1.0 - 1e-12:
        eta = float(min(lo))
    elif big_g > 1.0 + 1e-12:
        eta = float(max(hi))
    else:
        eta = gamma
    # b >= eta + sum_i slope_i (a_i - eta)
    coeffs = {b: -1.0}
    constant = eta
    for a, c in slopes.items():
        if c != 0.0:
            coeffs[a] = coeffs.get(a, 0.0) + c
            constant -= c * eta
    rows.append((LinearExpr(coeffs, constant), LESS_EQUAL))
    return _dedup(rows)


MAX_ENCODERS = {
    "new": encode_max_relaxation_new,
    "sota": encode_max_relaxation_sota,
    "planet": encode_max_relaxation_planet,
    "deeppoly": encode_max_relaxation_deeppoly,
    "cnncert": encode_max_relaxation_cnncert,
}


@dataclass
class PlDescriptor:
    """A piecewise-linear constraint in the LP encoding of a query."""

    kind: str                 # "relu" or "max"
    out_var: int
    in_vars: list[int]
    out_nid: NeuronId
    in_nids: list[NeuronId]
    fixed: bool               # phase decided by bounds; encoded as an equality


@dataclass
class QueryLp:
    problem: LpProblem
    var_of: dict[NeuronId, int]
    pl_constraints: list[PlDescriptor] = field(default_factory=list)


def build_query_lp(net: Network, input_lo, input_hi, output_constraints,
                   bounds: Bounds, relaxation: str = "new") -> QueryLp:
    """One LP relaxation of the whole query.

    Inputs carry the P (and promoted-input P_B) box, affine layers are exact,
    ReLU/max layers are relaxed with the current bounds, and the output
    constraints are included so infeasibility can short-circuit to UNSAT.
    """
    if relaxation not in MAX_ENCODERS:
        raise ValueError(f"unknown relaxation {relaxation!r}")
    prob = LpProblem()
    var_of: dict[NeuronId, int] = {}
    pl: list[PlDescriptor] = []

    for idx in range(net.input_size):
        var_of[(0, idx)] = prob.add_variable(input_lo[idx], input_hi[idx], f"x{idx}")
    for lid, layer in enumerate(net.layers[1:], start=1):
        for idx in range(layer.size):
            nid = (lid, idx)
            if nid in net.pruned:
                continue
            if nid in net.promoted:
                plo, phi = net.promoted[nid]
            else:
                plo, phi = bounds.get(nid)
            var_of[nid] = prob.add_variable(plo, phi, f"n{lid}_{idx}")

    for lid, layer in enumerate(net.layers[1:], start=1):
        for idx in range(layer.size):
            nid = (lid, idx)
            if nid in net.pruned or nid in net.promoted:
                continue
            v = var_of[nid]
            if isinstance(layer, WeightedSumLayer):
                coeffs = {v: 1.0}
                for j, w in enumerate(layer.weights[idx]):
                    if w != 0.0:
                        coeffs[var_of[(lid - 1, j)]] = coeffs.get(
                            var_of[(lid - 1, j)], 0.0) - w
                prob.add_constraint(LinearExpr(coeffs, -layer.bias[idx]), EQUAL)
            elif isinstance(layer, ConvolutionLayer):
                coeffs = {v: 1.0}
                for j, w in enumerate(layer.kernel):
                    if w != 0.0:
                        coeffs[var_of[(lid - 1, idx + j)]] = coeffs.get(
                            var_of[(lid - 1, idx + j)], 0.0) - w
                prob.add_constraint(LinearExpr(coeffs, -layer.bias), EQUAL)
            elif isinstance(layer, ReluLayer):
                a_nid = (lid - 1, idx)
                l, u = bounds.get(a_nid)
                for row in encode_relu_relaxation(var_of[a_nid], v, l, u):
                    prob.add_constraint(*row)
                pl.append(PlDescriptor("relu", v, [var_of[a_nid]], nid, [a_nid],
                                       fixed=(l >= 0.0 or u <= 0.0)))
            elif isinstance(layer, MaxPoolLayer):
                in_nids = [(lid - 1, j) for j in layer.pool(idx)]
                in_vars = [var_of[n] for n in in_nids]
                los = [bounds.get(n)[0] for n in in_nids]
                his = [bounds.get(n)[1] for n in in_nids]
                for row in MAX_ENCODERS[relaxation](in_vars, v, los, his):
                    prob.add_constraint(*row)
                pl.append(PlDescriptor("max", v, in_vars, nid, in_nids,
                                       fixed=max_relaxation_params(los, his).trivial))
    out_lid = len(net.layers) - 1
    for expr in output_constraints:
        remapped = LinearExpr({var_of[(out_lid, i)]: c for i, c in expr.coeffs.items()},
                              expr.constant)
        prob.add_constraint(remapped, LESS_EQUAL)
    return QueryLp(prob, var_of, pl)


def lp_tighten(net: Network, input_lo, input_hi, output_constraints,
               bounds: Bounds | None = None,
               relaxation: str = "new") -> Bounds | None:
    """Shrink bounds neuron by neuron with per-neuron min/max LPs.

    Works strictly forward by layer; within a layer every neuron's pair of LPs
    uses the previous layers' final bounds. Returns None when the relaxation
    is infeasible, which proves the query UNSAT. A solver failure on one
    neuron keeps its interval bound and continues.
    """
    if bounds is None:
        bounds = interval_pass(net, input_lo, input_hi)
    else:
        bounds = bounds.copy()
    for lid in range(1, len(net.layers)):
        qlp = build_query_lp(net, input_lo, input_hi, output_constraints,
                             bounds, relaxation)
        updates = []
        for idx in range(net.layers[lid].size):
            nid = (lid, idx)
            if nid in net.pruned or nid in net.promoted:
                continue
            var = qlp.var_of[nid]
            lo, hi = bounds.get(nid)
            try:
                qlp.problem.set_objective(LinearExpr.term(var), "max")
                out = solve(qlp.problem)
                if out.status == "infeasible":
                    return None
                if out.is_optimal:
                    hi = min(hi, out.optimum)
                qlp.problem.set_objective(LinearExpr.term(var), "min")
                out = solve(qlp.problem)
                if out.status == "infeasible":
                    return None
                if out.is_optimal:
                    lo = max(lo, out.optimum)
            except LpSolverError as e:
                log.warning("keeping interval bound for %s: %s", nid, e)
                continue
            if hi < lo:  # tolerance crossing after a tight optimum pair
                lo = hi = (lo + hi) / 2.0
            updates.append((nid, lo, hi))
        for nid, lo, hi in updates:
            bounds.set(nid, lo, hi)
    return bounds
