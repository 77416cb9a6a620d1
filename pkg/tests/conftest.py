"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from cnnverify.bounds import build_query_lp, interval_pass
from cnnverify.lp import EQUAL, GREATER_EQUAL, LESS_EQUAL, LinearExpr, LpProblem, solve
from cnnverify.network import (ConvolutionLayer, InputLayer, LayerShape,
                               MaxPoolLayer, Network, OutputLayer, ReluLayer,
                               WeightedSumLayer)
from cnnverify.verifier import _clone, _phase_rows


def toy_cnn() -> Network:
    """5-input toy CNN: conv(1, -1.3)+0.2, ReLU, maxpool 2, two affine layers."""
    return Network(layers=(
        InputLayer(LayerShape((5,))),
        ConvolutionLayer(LayerShape((4,)), kernel=np.array([1.0, -1.3]), bias=0.2),
        ReluLayer(LayerShape((4,))),
        MaxPoolLayer(LayerShape((2,)), pool_size=2),
        WeightedSumLayer(LayerShape((2,)), weights=np.array([[2.0, -1.0], [3.0, 1.0]]),
                         bias=np.array([5.0, -3.0])),
        OutputLayer(LayerShape((4,)),
                    weights=np.array([[1.0, 0.0], [0.0, 3.0], [2.0, -1.0], [0.0, 1.0]]),
                    bias=np.array([10.0, 2.0, -12.0, 0.0])),
    ), name="toy")


def skip_net() -> Network:
    """y = h1 - x with h1 = h0 = x, the skip edge expressed via a copy neuron
    carried through both hidden layers; y is identically 0 on any input."""
    return Network(layers=(
        InputLayer(LayerShape((1,))),
        WeightedSumLayer(LayerShape((2,)), weights=np.array([[1.0], [1.0]]),
                         bias=np.zeros(2)),
        WeightedSumLayer(LayerShape((2,)), weights=np.eye(2), bias=np.zeros(2)),
        OutputLayer(LayerShape((1,)), weights=np.array([[1.0, -1.0]]),
                    bias=np.zeros(1)),
    ), name="skip")


def pool_demo_net() -> Network:
    """y = max(c0, c1) + max(c1, c2) over differences of adjacent inputs.

    The overlapping windows are expressed by duplicating c1 with a 0/1 layer
    so the pooling layer itself stays non-overlapping.
    """
    dup = np.zeros((4, 3))
    dup[0, 0] = dup[1, 1] = dup[2, 1] = dup[3, 2] = 1.0
    return Network(layers=(
        InputLayer(LayerShape((4,))),
        ConvolutionLayer(LayerShape((3,)), kernel=np.array([1.0, -1.0]), bias=0.0),
        WeightedSumLayer(LayerShape((4,)), weights=dup, bias=np.zeros(4), tag="perm"),
        MaxPoolLayer(LayerShape((2,)), pool_size=2),
        OutputLayer(LayerShape((1,)), weights=np.array([[1.0, 1.0]]),
                    bias=np.zeros(1)),
    ), name="pool-demo")


POOL_DEMO_BOX = (np.array([-1.0, -1.0, -2.0, -2.0]), np.array([1.0, 1.0, 2.0, 2.0]))


def random_network(rng: np.random.Generator, max_inputs: int = 5,
                   max_hidden: int = 4, conv_bias: bool = True) -> Network:
    """A small random valid network mixing all four hidden layer kinds."""
    n = int(rng.integers(2, max_inputs + 1))
    layers: list = [InputLayer(LayerShape((n,)))]
    size = n
    for _ in range(int(rng.integers(1, max_hidden + 1))):
        kind = rng.integers(0, 4)
        if kind == 0:
            t = int(rng.integers(1, 5))
            layers.append(WeightedSumLayer(
                LayerShape((t,)), weights=rng.normal(size=(t, size)),
                bias=rng.normal(size=t)))
            size = t
        elif kind == 1 and size >= 2:
            k = int(rng.integers(2, min(size, 3) + 1))
            layers.append(ConvolutionLayer(
                LayerShape((size - k + 1,)), kernel=rng.normal(size=k),
                bias=float(rng.normal()) if conv_bias else 0.0))
            size = size - k + 1
        elif kind == 2:
            layers.append(ReluLayer(LayerShape((size,))))
        elif size % 2 == 0 and size >= 2:
            layers.append(MaxPoolLayer(LayerShape((size // 2,)), pool_size=2))
            size //= 2
        else:
            layers.append(ReluLayer(LayerShape((size,))))
    m = int(rng.integers(1, 4))
    layers.append(OutputLayer(LayerShape((m,)), weights=rng.normal(size=(m, size)),
                              bias=rng.normal(size=m)))
    return Network(layers=tuple(layers))


def random_query_parts(rng: np.random.Generator, net: Network,
                       num_constraints: int | None = None):
    lo = rng.uniform(-1.0, 0.0, net.input_size)
    hi = lo + rng.uniform(0.2, 1.5, net.input_size)
    m = net.output_size
    k = num_constraints if num_constraints is not None else int(rng.integers(1, 3))
    exprs = tuple(LinearExpr({i: float(rng.normal()) for i in range(m)},
                             float(rng.normal())) for _ in range(k))
    return lo, hi, exprs


# ---------------------------------------------------------------------------
# Oracles


def vertex_enumeration_solve(problem: LpProblem):
    """Independent LP oracle for small problems with all-finite variable bounds.

    The feasible region is a bounded polyhedron, so if non-empty it has a
    vertex, and the optimum (if any) is attained at one. Enumerate every
    choice of n active conditions among {constraint rows as equalities,
    variables pinned at a bound} and keep the feasible solutions.
    """
    n = problem.num_vars
    assert all(np.isfinite(problem.lower)) and all(np.isfinite(problem.upper))
    rows = []
    for expr, _rel in problem.constraints:
        coeffs = np.zeros(n)
        for v, c in expr.coeffs.items():
            coeffs[v] = c
        rows.append((coeffs, -expr.constant))
    for v in range(n):
        e = np.zeros(n)
        e[v] = 1.0
        rows.append((e, problem.lower[v]))
        rows.append((e, problem.upper[v]))

    best = None
    feasible = False
    for combo in itertools.combinations(range(len(rows)), n):
        a = np.array([rows[i][0] for i in combo])
        b = np.array([rows[i][1] for i in combo])
        try:
            x = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            continue
        if _point_feasible(problem, x):
            feasible = True
            if problem.objective is not None and problem.sense != "feasibility":
                val = problem.objective.value(x)
                if best is None or (problem.sense == "max" and val > best) or (
                        problem.sense == "min" and val < best):
                    best = val
    if not feasible:
        return "infeasible", None
    return "optimal", best


def _point_feasible(problem: LpProblem, x: np.ndarray, tol: float = 1e-7) -> bool:
    if np.any(x < np.array(problem.lower) - tol) or np.any(x > np.array(problem.upper) + tol):
        return False
    for expr, rel in problem.constraints:
        val = expr.value(x)
        if rel == LESS_EQUAL and val > tol:
            return False
        if rel == GREATER_EQUAL and val < -tol:
            return False
        if rel == EQUAL and abs(val) > tol:
            return False
    return True


def phase_enumeration_verdict(net: Network, lo, hi, exprs,
                              relaxation: str = "new") -> str:
    """Independent SAT/UNSAT oracle: one feasibility LP per combination of
    piecewise-linear phases."""
    bd = interval_pass(net, lo, hi)
    qlp = build_query_lp(net, lo, hi, exprs, bd, relaxation)
    descs = [d for d in qlp.pl_constraints if not d.fixed]
    counts = [2 if d.kind == "relu" else len(d.in_vars) for d in descs]
    for combo in itertools.product(*[range(c) for c in counts]):
        prob = _clone(qlp.problem)
        for desc, phase in zip(descs, combo):
            for row in _phase_rows(desc, phase):
                prob.add_constraint(*row)
        prob.set_objective(None, "feasibility")
        if solve(prob).status == "optimal":
            return "sat"
    return "unsat"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
