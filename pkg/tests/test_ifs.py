from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ifsdyn import ifs as I
from ifsdyn import phase as ph
from ifsdyn.errors import UsageError

from conftest import CAT, rng
from oracles import CAT_IMAGE, CAT_PREIMAGE, TERNARY_ORBIT


class TestApply:
    def test_rotation(self, rotation):
        assert I.apply(rotation, 0.3, [0.8])[0] == pytest.approx(0.1, abs=1e-15)

    def test_cat_map(self, cat):
        np.testing.assert_allclose(I.apply(cat, [0, 0], [0.25, 0.5]), CAT_IMAGE, atol=1e-15)

    def test_cantor_left_map(self, cantor):
        assert I.apply(cantor, 0, [0.9])[0] == pytest.approx(0.3)

    def test_parameter_outside_region(self, rotation, cat):
        with pytest.raises(UsageError):
            I.apply(rotation, 1.5, [0.1])
        with pytest.raises(UsageError):
            I.apply(cat, [0.2, 0.0], [0.1, 0.1])

    def test_point_of_wrong_dimension(self, cat):
        with pytest.raises(UsageError):
            I.apply(cat, [0, 0], [0.1])


class TestIterate:
    def test_zero_steps_is_identity(self, cat):
        sigma = I.random_sequence(cat, 3, 0)
        x = np.array([0.123, 0.456])
        np.testing.assert_array_equal(I.iterate(cat, sigma, x, 0), x)

    def test_rotation_quarter_turns(self, rotation):
        sigma = I.ParamSeq.constant(0.25, 4)
        assert I.iterate(rotation, sigma, [0.0], 4)[0] == 0.0

    def test_inverse_step(self, cat):
        sigma = I.ParamSeq.of([[0.0, 0.0]], [[0.0, 0.0]])
        np.testing.assert_allclose(I.iterate(cat, sigma, [0.0, 0.75], -1), CAT_PREIMAGE, atol=1e-15)

    def test_negative_steps_need_invertible_family(self, doubling):
        sigma = I.ParamSeq.of([[0.1]], [[0.1]])
        with pytest.raises(UsageError):
            I.iterate(doubling, sigma, [0.2], -1)

    def test_no_index_zero(self):
        sigma = I.ParamSeq.of([[0.1]], [[0.2]])
        assert sigma[1][0] == 0.1 and sigma[-1][0] == 0.2
        with pytest.raises(IndexError):
            sigma[0]

    def test_composition_with_shift(self, cat):
        sigma = I.random_sequence(cat, 30, 4)
        x = np.array([0.31, 0.77])
        for j, k in [(3, 5), (10, 12), (0, 7)]:
            lhs = I.iterate(cat, sigma, x, j + k)
            rhs = I.iterate(cat, sigma.shift(j), I.iterate(cat, sigma, x, j), k)
            assert ph.distance(cat.phase, lhs, rhs) < 1e-9

    def test_inverse_undoes_forward(self, cat):
        g = rng(5)
        for lam in cat.params.samples[::7]:
            x = g.uniform(size=2)
            assert ph.distance(cat.phase, cat.apply_inverse(lam, cat.apply(lam, x)), x) < 1e-9


class TestClosedForm:
    @staticmethod
    def _hand(x, lams, k):
        # f^k(x) + sum f^{k-i}(lam_i) with Fractions, f(a, b) = (2a + b, a + b)
        def f(v):
            return (2 * v[0] + v[1], v[0] + v[1])
        acc = tuple(Fraction(c) for c in x)
        for lam in lams[:k]:
            acc = f(acc)
            acc = (acc[0] + Fraction(lam[0]), acc[1] + Fraction(lam[1]))
        return np.array([float(c % 1) for c in acc])

    @pytest.mark.parametrize("k", [1, 2])
    def test_low_orders(self, cat, k):
        sigma = I.random_sequence(cat, 2, 11)
        x = np.array([0.1, 0.35])
        lams = [sigma[1], sigma[2]]
        np.testing.assert_allclose(I.closed_form_example2(cat, sigma, x, k), self._hand(x, lams, k),
                                   atol=1e-15)

    def test_matches_iteration(self, cat):
        g = rng(1)
        for s in range(100):
            sigma = I.random_sequence(cat, 20, s, n_back=20)
            x = g.uniform(size=2)
            k = int(g.integers(-20, 21))
            a = I.closed_form_example2(cat, sigma, x, k)
            b = I.iterate(cat, sigma, x, k)
            assert ph.distance(cat.phase, a, b) < 1e-9

    def test_other_family_rejected(self, rotation):
        with pytest.raises(UsageError):
            I.closed_form_example2(rotation, I.ParamSeq.constant(0.1, 2), [0.1], 1)


class TestChains:
    def test_single_point_chain(self, cat):
        ch = I.make_chain(cat, I.random_sequence(cat, 5, 0), [0.1, 0.2], n=0)
        assert len(ch) == 1 and len(ch.defects) == 0

    def test_ternary_addressing(self, cantor):
        sigma = I.ParamSeq.of([1, 0, 1, 1])
        ch = I.make_chain(cantor, sigma, [0.0])
        np.testing.assert_allclose(ch.points[:, 0], [float(f) for f in TERNARY_ORBIT], atol=1e-15)
        assert I.chain_defect(cantor, ch) == 0.0
        assert ch.exact

    def test_bilateral_chain_needs_invertible_family(self, doubling):
        with pytest.raises(UsageError):
            I.make_chain(doubling, I.ParamSeq.of([[0.1]], [[0.1]]), [0.2])

    def test_delta_zero_is_exact(self, cat):
        ch = I.make_delta_chain(cat, I.random_sequence(cat, 20, 2), [0.4, 0.1], None, 0.0, seed=3)
        assert ch.exact

    def test_delta_bound_and_determinism(self, cat):
        sigma = I.random_sequence(cat, 30, 2, n_back=10)
        a = I.make_delta_chain(cat, sigma, [0.4, 0.1], None, 0.01, seed=3)
        b = I.make_delta_chain(cat, sigma, [0.4, 0.1], None, 0.01, seed=3)
        assert a.points.tobytes() == b.points.tobytes()
        assert I.chain_defect(cat, a) <= 0.01
        assert np.all(a.defects <= 0.01)

    def test_negative_delta(self, cat):
        with pytest.raises(UsageError):
            I.make_delta_chain(cat, I.random_sequence(cat, 3, 0), [0.1, 0.1], None, -0.1)

    def test_displaced_point_on_rotation(self, rotation):
        sigma = I.ParamSeq.constant(0.1, 10)
        ch = I.make_chain(rotation, sigma, [0.05])
        pts = ch.points.copy()
        pts[5] = rotation.phase.canonical(pts[5] + 0.01)
        bumped = I.Chain(pts, sigma, ch.defects)
        d = I.step_defects(rotation, bumped)
        assert I.chain_defect(rotation, bumped) == pytest.approx(0.01, abs=1e-12)
        assert d[4] == pytest.approx(0.01, abs=1e-12) and d[5] == pytest.approx(0.01, abs=1e-12)

    def test_chain_defect_ignores_stored_defects(self, rotation):
        ch = I.make_chain(rotation, I.ParamSeq.constant(0.1, 3), [0.0])
        fake = I.Chain(ch.points, ch.sigma, np.full(3, 0.5))
        assert I.chain_defect(rotation, fake) < 1e-12

    def test_truncate(self, cat):
        sigma = I.random_sequence(cat, 10, 1, n_back=10)
        ch = I.make_chain(cat, sigma, [0.2, 0.3])
        sub = ch.truncate(-3, 4)
        assert (sub.start, sub.end) == (-3, 4)
        np.testing.assert_array_equal(sub.point(2), ch.point(2))


class TestTransitivity:
    def test_rotation_in_one_step(self, rotation):
        r = I.check_transitive(rotation, ph.GridSpec(1 / 16), 3)
        assert r.transitive
        assert all(n == 1 for n, _ in r.witnesses.values())

    def test_single_contraction(self):
        shrink = I.affine_1d([(1 / 3, 0.0)])
        r = I.check_transitive(shrink, ph.GridSpec(0.1), 8)
        assert not r.transitive
        u, v = r.failing_pair
        assert v not in [w for (a, w) in r.witnesses if a == u]

    def test_cat_family_at_grid_scale(self):
        cat = I.affine_torus(CAT, 0.05, 0.025)
        r = I.check_transitive(cat, ph.GridSpec(1 / 16), 8)
        assert r.transitive
        # every witness re-validates: the recorded prefix lands in the target ball
        g = r.grid
        for (u, v), (n, prefix) in list(r.witnesses.items())[::97]:
            x = g.points[u]
            for j in prefix:
                x = cat.apply(cat.params.samples[j], x)
            assert len(prefix) == n
            assert ph.distance(cat.phase, x, g.points[v]) <= g.covering_radius + 1e-12


class TestMetadata:
    def test_classification_flags(self, cat, cantor, doubling, rotation):
        assert cantor.hyperbolic and not cantor.expanding
        assert doubling.expanding and not doubling.hyperbolic
        assert not rotation.hyperbolic and not rotation.expanding
        assert cat.invertible and not doubling.invertible

    @pytest.mark.parametrize("name", ["cat", "cantor", "doubling", "rotation"])
    def test_lipschitz_is_a_true_bound(self, name, request):
        ifs = request.getfixturevalue(name)
        g = rng(7)
        lams = ifs.params.samples[g.integers(len(ifs.params), size=1000)]
        if ifs.phase.periodic:
            x = g.uniform(size=(1000, ifs.phase.dim))
            y = ifs.phase.canonical(x + g.normal(scale=0.05, size=x.shape))
        else:
            x = g.uniform(size=(1000, 1))
            y = g.uniform(size=(1000, 1))
        lhs = ph.distance(ifs.phase, ifs.apply(lams, x), ifs.apply(lams, y))
        assert np.all(lhs <= ifs.lipschitz * ph.distance(ifs.phase, x, y) * (1 + 1e-9) + 1e-15)

    @pytest.mark.parametrize("name", ["cat", "cantor", "doubling", "rotation"])
    def test_config_round_trip(self, name, request):
        ifs = request.getfixturevalue(name)
        back = I.ifs_from_dict(ifs.to_dict())
        assert back.to_dict() == ifs.to_dict()
        assert back.params.samples.tobytes() == ifs.params.samples.tobytes()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(-20, 20))
def test_closed_form_property(seed, k):
    cat = I.affine_torus(CAT, 0.05, 0.01)
    sigma = I.random_sequence(cat, 20, seed, n_back=20)
    x = rng(seed).uniform(size=2)
    a = I.closed_form_example2(cat, sigma, x, k)
    assert ph.distance(cat.phase, a, I.iterate(cat, sigma, x, k)) < 1e-9
