import itertools

import numpy as np
import pytest

from cnnverify.bounds import (Bounds, build_query_lp, encode_max_relaxation_cnncert,
                              encode_max_relaxation_deeppoly,
                              encode_max_relaxation_new,
                              encode_max_relaxation_planet,
                              encode_max_relaxation_sota,
                              encode_relu_relaxation, interval_pass, lp_tighten,
                              max_relaxation_params, MAX_ENCODERS)
from cnnverify.lp import EQUAL, LESS_EQUAL, LinearExpr, LpProblem, solve
from cnnverify.network import (InputLayer, LayerShape, Network, OutputLayer,
                               WeightedSumLayer)

from conftest import (POOL_DEMO_BOX, pool_demo_net, random_network,
                      random_query_parts, toy_cnn)

A0, A1, B = 0, 1, 2  # variable ids used by the relaxation constraint tests


def constraints_equal(actual, expected, tol=1e-9):
    """Bijective match between constraint lists, ignoring order."""
    if len(actual) != len(expected):
        return False
    remaining = list(expected)
    for expr, rel in actual:
        for i, (e2, r2) in enumerate(remaining):
            if rel != r2 or set(expr.coeffs) != set(e2.coeffs):
                continue
            if abs(expr.constant - e2.constant) > tol:
                continue
            if all(abs(expr.coeffs[v] - e2.coeffs[v]) <= tol for v in expr.coeffs):
                remaining.pop(i)
                break
        else:
            return False
    return True


def lp_max_of_b(constraints, box, objective=None):
    """Maximize b (or a supplied objective) over the relaxation polytope."""
    p = LpProblem()
    for lo, hi in box:
        p.add_variable(lo, hi)
    b = p.add_variable()
    for row in constraints:
        p.add_constraint(*row)
    p.set_objective(objective or LinearExpr.term(b), "max")
    out = solve(p)
    assert out.is_optimal
    return out.optimum


class TestIntervalPass:
    def test_toy_first_conv_neuron(self):
        lo = np.array([0.5, 0.0, 0.0, 0.0, 0.0])
        hi = np.array([1.0, 0.5, 0.0, 0.0, 0.0])
        bd = interval_pass(toy_cnn(), lo, hi)
        assert bd.get((1, 0)) == pytest.approx((0.05, 1.2), abs=1e-9)

    def test_pool_demo_chain(self):
        bd = interval_pass(pool_demo_net(), *POOL_DEMO_BOX)
        np.testing.assert_allclose(bd.lo[1], [-2, -3, -4])
        np.testing.assert_allclose(bd.hi[1], [2, 3, 4])
        np.testing.assert_allclose(bd.lo[3], [-2, -3])
        np.testing.assert_allclose(bd.hi[3], [3, 4])
        assert bd.get((4, 0)) == pytest.approx((-5.0, 7.0))

    def test_zero_weight_affine_layer_pins_to_bias(self):
        net = Network(layers=(
            InputLayer(LayerShape((2,))),
            WeightedSumLayer(LayerShape((1,)), weights=np.zeros((1, 2)),
                             bias=np.array([3.5])),
            OutputLayer(LayerShape((1,)), weights=np.eye(1), bias=np.zeros(1)),
        ))
        bd = interval_pass(net, np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
        assert bd.get((1, 0)) == (3.5, 3.5)

    def test_soundness_on_random_networks(self, rng):
        for _ in range(30):
            net = random_network(rng)
            lo, hi, _ = random_query_parts(rng, net)
            bd = interval_pass(net, lo, hi)
            for _ in range(30):
                values = net.evaluate(rng.uniform(lo, hi))
                for lid, v in enumerate(values):
                    assert np.all(v >= bd.lo[lid] - 1e-6)
                    assert np.all(v <= bd.hi[lid] + 1e-6)


class TestReluRelaxation:
    def test_fixed_active_phase_is_identity(self):
        assert constraints_equal(encode_relu_relaxation(A0, B, 1.0, 2.0),
                                 [(LinearExpr({B: 1.0, A0: -1.0}), EQUAL)])

    def test_fixed_inactive_phase_is_zero(self):
        assert constraints_equal(encode_relu_relaxation(A0, B, -2.0, -1.0),
                                 [(LinearExpr({B: 1.0}), EQUAL)])

    def test_triangle_for_symmetric_bounds(self):
        rows = encode_relu_relaxation(A0, B, -1.0, 1.0)
        expected = [
            (LinearExpr({B: -1.0}), LESS_EQUAL),
            (LinearExpr({A0: 1.0, B: -1.0}), LESS_EQUAL),
            (LinearExpr({B: 1.0, A0: -0.5}, -0.5), LESS_EQUAL),
        ]
        assert constraints_equal(rows, expected)

    def test_triangle_contains_true_relu_graph(self):
        for l, u in [(-1.0, 1.0), (-3.0, 0.5), (-0.2, 4.0)]:
            rows = encode_relu_relaxation(A0, B, l, u)
            for a in np.linspace(l, u, 41):
                point = {A0: a, B: max(0.0, a)}
                for expr, rel in rows:
                    val = expr.constant + sum(c * point[v]
                                              for v, c in expr.coeffs.items())
                    assert (abs(val) if rel == EQUAL else val) <= 1e-9


class TestMaxRelaxationParams:
    def test_pool_demo_values(self):
        p = max_relaxation_params([-3, -4], [3, 4])
        assert (p.u_f, p.u_s, p.l_max, p.u_min) == (4, 3, -3, 3)
        assert (p.f, p.s) == (1, 0)

    def test_trivial_detection(self):
        assert max_relaxation_params([3, 0], [4, 1]).trivial
        assert not max_relaxation_params([-2, -3], [2, 3]).trivial


class TestMaxRelaxationNew:
    def test_m0_constraint_set(self):
        rows = encode_max_relaxation_new([A0, A1], B, [-2, -3], [2, 3])
        expected = [
            (LinearExpr({A0: 1.0, B: -1.0}), LESS_EQUAL),          # b >= a0
            (LinearExpr({A1: 1.0, B: -1.0}), LESS_EQUAL),          # b >= a1
            (LinearExpr({B: 1.0, A0: -1.0, A1: -5 / 6}, -2.5), LESS_EQUAL),
            (LinearExpr({B: 1.0, A1: -1 / 6}, -2.5), LESS_EQUAL),  # dedup of two faces
        ]
        assert constraints_equal(rows, expected)

    def test_m1_constraint_set(self):
        rows = encode_max_relaxation_new([A0, A1], B, [-3, -4], [3, 4])
        expected = [
            (LinearExpr({A0: 1.0, B: -1.0}), LESS_EQUAL),
            (LinearExpr({A1: 1.0, B: -1.0}), LESS_EQUAL),
            (LinearExpr({B: 1.0, A0: -1.0, A1: -7 / 8}, -3.5), LESS_EQUAL),
            (LinearExpr({B: 1.0, A1: -1 / 8}, -3.5), LESS_EQUAL),
        ]
        assert constraints_equal(rows, expected)

    def test_trivial_case(self):
        rows = encode_max_relaxation_new([A0, A1], B, [3, 0], [4, 1])
        assert constraints_equal(rows, [(LinearExpr({B: 1.0, A0: -1.0}), EQUAL)])


class TestMaxRelaxationSota:
    def test_m0_constraint_set(self):
        rows = encode_max_relaxation_sota([A0, A1], B, [-2, -3], [2, 3])
        expected = [
            (LinearExpr({A0: 1.0, B: -1.0}), LESS_EQUAL),
            (LinearExpr({A1: 1.0, B: -1.0}), LESS_EQUAL),
            (LinearExpr({B: 1.0, A0: -0.5, A1: -0.5}, -2.5), LESS_EQUAL),
            (LinearExpr({B: 1.0}, -3.0), LESS_EQUAL),
            (LinearExpr({B: 1.0, A0: -1.0, A1: -1.0}, -3.0), LESS_EQUAL),
        ]
        assert constraints_equal(rows, expected)

    def test_m1_constraint_set(self):
        rows = encode_max_relaxation_sota([A0, A1], B, [-3, -4], [3, 4])
        expected = [
            (LinearExpr({A0: 1.0, B: -1.0}), LESS_EQUAL),
            (LinearExpr({A1: 1.0, B: -1.0}), LESS_EQUAL),
            (LinearExpr({B: 1.0, A0: -0.5, A1: -0.5}, -3.5), LESS_EQUAL),
            (LinearExpr({B: 1.0}, -4.0), LESS_EQUAL),
            (LinearExpr({B: 1.0, A0: -1.0, A1: -1.0}, -4.0), LESS_EQUAL),
        ]
        assert constraints_equal(rows, expected)

    def test_trivial_case(self):
        rows = encode_max_relaxation_sota([A0, A1], B, [3, 0], [4, 1])
        assert constraints_equal(rows, [(LinearExpr({B: 1.0, A0: -1.0}), EQUAL)])


class TestRelaxationSoundness:
    """Every encoding contains the true graph of b = max(a_i)."""

    @pytest.mark.parametrize("name", sorted(MAX_ENCODERS))
    def test_box_vertices_satisfy_constraints(self, name, rng):
        encoder = MAX_ENCODERS[name]
        for _ in range(60):
            k = int(rng.integers(2, 6))
            lo = rng.uniform(-5, 2, k)
            hi = lo + rng.uniform(0.0, 5, k)
            a_vars = list(range(k))
            rows = encoder(a_vars, k, lo, hi)
            for vertex in itertools.product(*zip(lo, hi)):
                point = np.append(np.array(vertex), max(vertex))
                for expr, rel in rows:
                    val = expr.value(point)
                    assert (abs(val) if rel == EQUAL else val) <= 1e-6


class TestTightness:
    def test_new_never_looser_than_sota_and_sound(self, rng):
        strict = 0
        for _ in range(300):
            k = int(rng.integers(2, 6))
            lo = rng.uniform(-5, 2, k)
            hi = lo + rng.uniform(0.1, 5, k)
            a_vars = list(range(k))
            box = list(zip(lo, hi))
            # random objective over (a_0..a_{k-1}, b) with weight on b
            obj = LinearExpr({v: float(rng.normal()) for v in range(k)}
                             | {k: float(rng.uniform(0.5, 2.0))})
            new_rows = encode_max_relaxation_new(a_vars, k, lo, hi)
            sota_rows = encode_max_relaxation_sota(a_vars, k, lo, hi)
            new_max = lp_max_of_b(new_rows, box, obj)
            sota_max = lp_max_of_b(sota_rows, box, obj)
            assert new_max <= sota_max + 1e-9
            if new_max < sota_max - 1e-9:
                strict += 1
            # soundness: the true graph of b = max(a) stays feasible
            samples = rng.uniform(lo, hi, size=(200, k))
            exact = max(obj.value(np.append(s, s.max())) for s in samples)
            assert new_max >= exact - 1e-6
        assert strict > 0


class TestBuildQueryLp:
    def test_fixed_phase_emits_equality(self):
        # Inputs all non-negative force every ReLU in the toy net... c_i can be
        # negative; instead pin the box to a point where phases are fixed.
        net = toy_cnn()
        lo = np.array([1.0, 0.0, 1.0, 0.0, 0.0])
        bd = interval_pass(net, lo, lo)
        qlp = build_query_lp(net, lo, lo, (), bd, "new")
        assert all(d.fixed for d in qlp.pl_constraints)

    def test_pool_demo_lp_maxima(self):
        net = pool_demo_net()
        lo, hi = POOL_DEMO_BOX
        bd = interval_pass(net, lo, hi)
        for relaxation, expected in [("new", 6.5), ("sota", 7.0), ("planet", 7.0)]:
            qlp = build_query_lp(net, lo, hi, (), bd, relaxation)
            qlp.problem.set_objective(LinearExpr.term(qlp.var_of[(4, 0)]), "max")
            assert solve(qlp.problem).optimum == pytest.approx(expected, abs=1e-6)

    def test_unknown_relaxation_rejected(self):
        net = pool_demo_net()
        lo, hi = POOL_DEMO_BOX
        with pytest.raises(ValueError):
            build_query_lp(net, lo, hi, (), interval_pass(net, lo, hi), "nope")


class TestLpTighten:
    def test_pool_demo_tightens_under_new_only(self):
        net = pool_demo_net()
        lo, hi = POOL_DEMO_BOX
        new = lp_tighten(net, lo, hi, (), relaxation="new")
        sota = lp_tighten(net, lo, hi, (), relaxation="sota")
        assert new.get((4, 0))[1] == pytest.approx(6.5, abs=1e-6)
        assert sota.get((4, 0))[1] == pytest.approx(7.0, abs=1e-6)

    def test_never_widens(self, rng):
        for _ in range(10):
            net = random_network(rng)
            lo, hi, exprs = random_query_parts(rng, net, num_constraints=0)
            interval = interval_pass(net, lo, hi)
            tightened = lp_tighten(net, lo, hi, exprs, relaxation="new")
            assert tightened is not None
            for lid in range(len(net.layers)):
                assert np.all(tightened.lo[lid] >= interval.lo[lid] - 1e-12)
                assert np.all(tightened.hi[lid] <= interval.hi[lid] + 1e-12)
            assert tightened.check_ordered()

    def test_tightened_bounds_remain_sound(self, rng):
        for _ in range(10):
            net = random_network(rng)
            lo, hi, _ = random_query_parts(rng, net, num_constraints=0)
            bd = lp_tighten(net, lo, hi, (), relaxation="new")
            for _ in range(50):
                values = net.evaluate(rng.uniform(lo, hi))
                for lid, v in enumerate(values):
                    assert np.all(v >= bd.lo[lid] - 1e-6)
                    assert np.all(v <= bd.hi[lid] + 1e-6)

    def test_infeasible_query_returns_none(self):
        # y = x on [0,1]; require y <= -1 and y >= -2: unreachable.
        net = Network(layers=(
            InputLayer(LayerShape((1,))),
            OutputLayer(LayerShape((1,)), weights=np.eye(1), bias=np.zeros(1)),
        ))
        q = (LinearExpr({0: 1.0}, 1.0),)  # y + 1 <= 0
        assert lp_tighten(net, np.array([0.0]), np.array([1.0]), q) is None


def test_bounds_container_shrink_and_copy():
    net = toy_cnn()
    bd = Bounds.empty(net)
    bd.set((1, 0), -1.0, 2.0)
    bd.shrink((1, 0), -0.5, 3.0)
    assert bd.get((1, 0)) == (-0.5, 2.0)
    other = bd.copy()
    other.set((1, 0), 0.0, 0.0)
    assert bd.get((1, 0)) == (-0.5, 2.0)
