import numpy as np
import pytest

from ifsdyn import hyperspace as H
from ifsdyn import ifs as I
from ifsdyn import phase as ph
from ifsdyn import stability as T
from ifsdyn.errors import UsageError
from ifsdyn.shadowing import example2_concordant_shadow

from conftest import rng

GRID = ph.GridSpec(1 / 64)
COV = ph.grid_points(ph.torus(2), GRID).covering_radius


def chains(ifs, count, n, delta, seed=0):
    g = rng(seed)
    for s in range(count):
        sigma = I.random_sequence(ifs, n, seed + s)
        yield I.make_delta_chain(ifs, sigma, g.uniform(size=ifs.phase.dim), None, delta, seed=seed + s)


@pytest.fixture(scope="module")
def pipeline(cat):
    ch = next(chains(cat, 1, 50, 0.005, seed=1))
    ifs_t, sigma_t, _ = T.build_perturbed_ifs(cat, ch, 0.05)
    conj = T.build_conjugacy(cat, ifs_t, ch.sigma, sigma_t, 0.05, GRID, 50)
    return ch, ifs_t, sigma_t, conj


class TestCompatibility:
    def test_identical(self, cat):
        s = I.random_sequence(cat, 6, 0)
        p = T.check_compatibility(cat, cat, s, s, 1e-9, GRID)
        assert p.compatible and p.max_distance == 0

    def test_rotation_pair(self, rotation):
        s, st = I.ParamSeq.constant(0.3, 5), I.ParamSeq.constant(0.32, 5)
        p = T.check_compatibility(rotation, rotation, s, st, 0.05, ph.GridSpec(0.01))
        assert p.compatible and p.max_distance == pytest.approx(0.02, abs=1e-15)
        assert not T.check_compatibility(rotation, rotation, s, st, 0.01, ph.GridSpec(0.01)).compatible

    def test_length_mismatch(self, rotation):
        with pytest.raises(UsageError):
            T.check_compatibility(rotation, rotation, I.ParamSeq.constant(0.3, 5),
                                  I.ParamSeq.constant(0.3, 4), 0.05, ph.GridSpec(0.01))


class TestPerturbation:
    def test_exact_reproduction_on_100_chains(self, cat):
        for ch in chains(cat, 100, 20, 0.005):
            ifs_t, sigma_t, y0 = T.build_perturbed_ifs(cat, ch, 0.05)
            O = I.orbit(ifs_t, sigma_t, y0[None], 0, ch.end)[0]
            assert ph.distance(cat.phase, O, ch.points).max() <= 1e-12
            assert sigma_t.n_forward == ch.end

    def test_exact_chain_gives_zero_shifts(self, cat):
        ch = I.make_chain(cat, I.random_sequence(cat, 10, 2), [0.25, 0.5])
        ifs_t, _, _ = T.build_perturbed_ifs(cat, ch, 0.05)
        assert np.abs(ifs_t.shift_array()).max() <= 1e-12
        assert H.ifs_hausdorff(cat, ifs_t, GRID).upper <= 2 * cat.params.resolution

    def test_distance_and_compatibility(self, cat):
        ch = next(chains(cat, 1, 10, 0.01, seed=5))
        defect = I.chain_defect(cat, ch)
        ifs_t, sigma_t, _ = T.build_perturbed_ifs(cat, ch, 0.05)
        d = H.ifs_hausdorff(cat, ifs_t, GRID)
        assert d.value <= defect + d.error_bound
        p = T.check_compatibility(cat, ifs_t, ch.sigma, sigma_t, 0.05, GRID)
        assert p.compatible
        assert np.allclose(p.per_index_distance, I.step_defects(cat, ch), atol=1e-12)

    def test_defect_too_large(self, cat):
        ch = next(chains(cat, 1, 10, 0.01))
        with pytest.raises(UsageError):
            T.build_perturbed_ifs(cat, ch, 1e-4)

    def test_needs_periodic_phase(self, cantor):
        ch = I.make_chain(cantor, I.random_sequence(cantor, 3), [0.1])
        with pytest.raises(UsageError):
            T.build_perturbed_ifs(cantor, ch, 0.1)

    def test_extension_repeats_first_parameter(self, cat):
        ch = next(chains(cat, 1, 3, 0.005))
        _, st = T.build_perturbed_ifs(cat, ch, 0.05)[:2]
        s, st2 = T.extend_pair(ch.sigma, st, 6)
        assert np.array_equal(s.forward[3:], np.tile(ch.sigma[1], (3, 1)))
        assert np.array_equal(st2.forward[3:], np.tile(st[1], (3, 1)))


class TestConjugacy:
    def test_identity(self, cat):
        s = I.random_sequence(cat, 20, 3)
        conj = T.build_conjugacy(cat, cat, s, s, 0.05, GRID, 20)
        assert conj.displacements.max() <= 1e-9
        rep = T.verify_stability(cat, cat, s, s, conj, 0.05)
        assert rep.passed and rep.bound_i <= 1e-9 and rep.bound_ii <= 1e-9

    def test_cat_pipeline_passes(self, cat, pipeline):
        ch, ifs_t, sigma_t, conj = pipeline
        rep = T.verify_stability(cat, ifs_t, ch.sigma, sigma_t, conj, 0.05)
        assert rep.passed and rep.continuity_modulus_check
        assert np.all(conj.displacements < 0.05)

    def test_stored_orbits_are_exact_chains(self, cat, pipeline):
        ch, _, _, conj = pipeline
        lams = ch.sigma.steps(0, 50)
        for O in conj.orbits[::97]:
            img = cat.apply(lams, O[:-1])
            assert ph.distance(cat.phase, img, O[1:]).max() <= 1e-9

    def test_maxima_revalidate_from_samples(self, cat, pipeline):
        ch, ifs_t, sigma_t, conj = pipeline
        rep = T.verify_stability(cat, ifs_t, ch.sigma, sigma_t, conj, 0.05)
        b1 = max(float(ph.distance(cat.phase, s.orbit, s.pseudo).max()) for s in rep.samples)
        b2 = max(float(ph.distance(cat.phase, s.grid_point, s.h_value)) for s in rep.samples)
        assert abs(b1 - rep.bound_i) <= 1e-12 and abs(b2 - rep.bound_ii) <= 1e-12
        x, k = rep.witness_i
        i = int(np.flatnonzero((conj.points == x).all(axis=1))[0])
        assert ph.distance(cat.phase, conj.orbits[i, k], conj.pseudo[i, k]) == rep.bound_i

    def test_shrinking_eps_flips_verdict(self, cat, pipeline):
        ch, ifs_t, sigma_t, conj = pipeline
        b = T.verify_stability(cat, ifs_t, ch.sigma, sigma_t, conj, 0.05).bound_i
        rep = T.verify_stability(cat, ifs_t, ch.sigma, sigma_t, conj, b * 0.99)
        assert not rep.passed and rep.bound_i == b
        assert 0 <= rep.witness_i[1] <= 50

    def test_horizon_bounded_by_samples(self, cat, pipeline):
        ch, ifs_t, sigma_t, conj = pipeline
        with pytest.raises(UsageError):
            T.verify_stability(cat, ifs_t, ch.sigma, sigma_t, conj, 0.05, horizon=51)


class TestStabilityToShadowing:
    def test_exact_chain(self, cat):
        ch = I.make_chain(cat, I.random_sequence(cat, 15, 7), [0.3, 0.6])
        res = T.stability_to_shadowing_experiment(cat, ch, 0.05, 0.005)
        assert res.found and res.max_deviation <= 1e-9
        assert ph.distance(cat.phase, res.info["z0"], ch.point(0)) <= COV

    def test_round_trip_with_direct_solver(self, cat):
        for ch in chains(cat, 10, 25, 0.005, seed=8):
            res = T.stability_to_shadowing_experiment(cat, ch, 0.05, 0.05)
            assert res.found and res.shadow.sigma.equals(ch.sigma)
            assert I.chain_defect(cat, res.shadow) <= 1e-9
            direct = example2_concordant_shadow(cat, ch, 0.05)
            assert ph.distance(cat.phase, res.shadow.point(0), direct.shadow.point(0)) <= 2 * COV
