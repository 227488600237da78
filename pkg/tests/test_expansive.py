import numpy as np
import pytest

from ifsdyn import expansive as E
from ifsdyn import ifs as I
from ifsdyn import phase as ph
from ifsdyn.errors import ResourceError, ShadowingFailure, UniquenessViolation, UsageError
from ifsdyn.gallery import drift_chain

from conftest import CAT, rng

GRID = ph.GridSpec(1 / 64)
COV = ph.grid_points(ph.torus(2), GRID).covering_radius


def bilateral_chains(ifs, count, n, delta, seed=0):
    g = rng(seed)
    for s in range(count):
        sigma = I.random_sequence(ifs, n, seed + s, n_back=n)
        yield I.make_delta_chain(ifs, sigma, g.uniform(size=2), None, delta, seed=seed + s)


def brute_separation(points, eta, mu, horizon):
    """Independent scan: integer grid vectors under A and A^-1, no package code."""
    A = np.array(CAT)
    Ai = np.array([[1, -1], [-1, 2]])
    m = 64
    K = np.rint(np.asarray(points) * m).astype(np.int64)
    norm = lambda k: np.linalg.norm((k / m) - np.rint(k / m), axis=1)
    keep = norm(K) >= mu
    K = K[keep]
    first = np.full(len(K), -1)
    f, b = K.copy(), K.copy()
    for n in range(0, horizon + 1):
        hit = (np.maximum(norm(f), norm(b)) > eta) & (first < 0)
        first[hit] = n
        f, b = (f @ A.T) % m, (b @ Ai.T) % m
    return first


class TestEstimate:
    def test_cat_expansive(self, cat):
        v = E.estimate_expansivity(cat, 0.2, 0.05, GRID, 10)
        assert v.expansive_at_scale and v.counterexample is None
        assert v.bilateral and v.method == "collapsed"

    def test_grid_part_matches_brute_scan(self, cat):
        v = E.estimate_expansivity(cat, 0.2, 0.05, GRID, 10, probes=False)
        grid = ph.grid_points(cat.phase, GRID).points
        first = brute_separation(grid, 0.2, 0.05, 10)
        assert np.all(first >= 0)
        assert v.pairs_tested == len(first)
        assert v.first_separation.max() == first.max()

    def test_unilateral_fails_along_stable_direction(self, cat):
        v = E.estimate_expansivity(cat, 0.2, 0.05, GRID, 20, bilateral=False)
        assert not v.expansive_at_scale
        x, y, _ = v.counterexample
        diff = ph.displacement(cat.phase, x, y)
        _, V = np.linalg.eigh(np.array(CAT, float))
        stable = V[:, 0]
        assert abs(abs(diff @ stable) - np.linalg.norm(diff)) <= 1e-9
        assert E.validate_counterexample(cat, v)

    def test_rotation_not_expansive(self, rotation):
        v = E.estimate_expansivity(rotation, 0.2, 0.05, ph.GridSpec(0.01), 10)
        assert not v.expansive_at_scale and E.validate_counterexample(rotation, v)

    def test_cantor_not_expansive(self, cantor):
        v = E.estimate_expansivity(cantor, 0.2, 0.05, ph.GridSpec(0.05), 6, sigma_samples=4)
        assert not v.expansive_at_scale and v.method == "sampled"
        assert E.validate_counterexample(cantor, v)

    def test_counterexample_iff_not_expansive(self, cat, rotation):
        for ifs, g in ((cat, GRID), (rotation, ph.GridSpec(0.01))):
            v = E.estimate_expansivity(ifs, 0.2, 0.05, g, 4)
            assert (v.counterexample is None) == v.expansive_at_scale

    def test_min_separation_nondecreasing(self, cat):
        v = E.estimate_expansivity(cat, 0.2, 0.05, GRID, 10)
        assert np.all(np.diff(v.min_separation) >= 0)

    @pytest.mark.parametrize("args", [(0, 0.05, 3), (0.2, 0, 3), (0.2, 0.05, 0)])
    def test_bad_arguments(self, cat, args):
        with pytest.raises(UsageError):
            E.estimate_expansivity(cat, args[0], args[1], GRID, args[2])

    def test_bilateral_needs_inverse(self, doubling):
        with pytest.raises(UsageError):
            E.estimate_expansivity(doubling, 0.2, 0.05, ph.GridSpec(0.01), 3, bilateral=True)


class TestSeparationHorizon:
    def test_trivial_when_mu_exceeds_eta(self, cat):
        assert E.separation_horizon(cat, 0.2, 0.3, GRID) == 0

    def test_cat_family(self, cat):
        assert 1 <= E.separation_horizon(cat, 0.2, 0.05, GRID) <= 12

    def test_monotone_in_mu(self, cat):
        Ns = [E.separation_horizon(cat, 0.2, mu, GRID) for mu in (0.02, 0.05, 0.1, 0.2, 0.3)]
        assert all(a >= b for a, b in zip(Ns, Ns[1:]))
        assert Ns[3] < Ns[1]

    def test_non_expansive_raises(self, rotation):
        with pytest.raises(ResourceError):
            E.separation_horizon(rotation, 0.2, 0.05, ph.GridSpec(0.01), max_horizon=8)


class TestUniqueShadow:
    def test_cat_instances(self, cat):
        for ch in bilateral_chains(cat, 5, 10, 0.005, seed=1):
            u = E.unique_shadow(cat, ch, 0.05, GRID, eta=0.2)
            assert u.diameter <= 2 * COV and u.max_deviation < 0.05

    def test_triangle_bound_between_shadows(self, cat):
        ch = next(bilateral_chains(cat, 1, 10, 0.005, seed=2))
        u = E.unique_shadow(cat, ch, 0.05, GRID, eta=0.2)
        S = u.shadows
        lo, hi = ch.start, ch.end
        O = I.orbit(cat, ch.sigma, S, lo, hi)
        for a in range(len(S)):
            for b in range(a + 1, len(S)):
                assert ph.distance(cat.phase, O[a], O[b]).max() < 2 * 0.05 < 0.2

    def test_exact_chain_recovers_its_start(self, cat):
        sigma = I.random_sequence(cat, 8, 5, n_back=8)
        x0 = np.array([17 / 64, 40 / 64])
        u = E.unique_shadow(cat, I.make_chain(cat, sigma, x0), 0.05, GRID, eta=0.2)
        assert ph.distance(cat.phase, u.start, x0) <= 1e-12

    def test_rotation_has_a_continuum(self, rotation):
        ch = I.make_chain(rotation, I.random_sequence(rotation, 10, 0), [0.5])
        with pytest.raises(UniquenessViolation) as info:
            E.unique_shadow(rotation, ch, 0.05, ph.GridSpec(0.01))
        a, b = info.value.witnesses
        assert ph.distance(rotation.phase, a, b) > 2 * 0.005

    def test_no_shadow(self, rotation):
        with pytest.raises(ShadowingFailure):
            E.unique_shadow(rotation, drift_chain(rotation, 0.02, 25), 0.2, ph.GridSpec(0.01))

    def test_requires_small_eps(self, cat):
        ch = next(bilateral_chains(cat, 1, 4, 0.005))
        with pytest.raises(UsageError):
            E.unique_shadow(cat, ch, 0.1, GRID, eta=0.2)
