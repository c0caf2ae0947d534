import math

import numpy as np
import pytest

from crowdflow.energy import potential_energy
from crowdflow.model import GridSpec, QuantileRep, to_quantile
from crowdflow.potentials import potential_catalog
from crowdflow.transport import (MonotoneMap, atoms_from_quantile,
                                 brute_force_w2, generalized_geodesic,
                                 map_cost, optimal_map, pushforward,
                                 resample_quantile, w2_cost_squared,
                                 w2_distance)

from conftest import indicator_quantile, random_density


@pytest.fixture
def g6():
    return GridSpec(-3.0, 3.0, 600)


class TestW2Distance:
    def test_zero_on_equal(self, g6):
        a = indicator_quantile(0, 1, g6)
        assert w2_distance(a, a) == 0.0

    def test_pure_translation_cost(self, g6):
        a = indicator_quantile(0, 1, g6)
        b = indicator_quantile(2, 3, g6)
        assert w2_distance(a, b) == pytest.approx(2.0, abs=1e-13)

    def test_scaling_matches_closed_form_and_oracle(self, g6):
        # inverse CDFs are s and 2s: integral of s^2 over [0,1] is 1/3
        a = indicator_quantile(0, 1, g6, n=100)
        b = indicator_quantile(0, 2, g6, n=100, height=0.5)
        exact = 1.0 / math.sqrt(3.0)
        assert w2_distance(a, b) == pytest.approx(exact, abs=1e-12)
        oracle = brute_force_w2(atoms_from_quantile(a), atoms_from_quantile(b))
        assert abs(oracle - exact) < 1e-2

    def test_mass_mismatch_rejected(self, g6):
        a = indicator_quantile(0, 1, g6)
        b = indicator_quantile(0, 2, g6, height=1.0)
        with pytest.raises(ValueError):
            w2_distance(a, b)

    def test_count_mismatch_needs_resample_flag(self, g6):
        a = indicator_quantile(0, 1, g6, n=50)
        b = indicator_quantile(2, 3, g6, n=100)
        with pytest.raises(ValueError):
            w2_distance(a, b)
        assert w2_distance(a, b, resample=True) == pytest.approx(2.0, abs=1e-3)

    def test_metric_axioms_random_triples(self, rng, g6):
        for _ in range(20):
            reps = [to_quantile(random_density(rng, g6), 60) for _ in range(3)]
            # equalize masses by rescaling nodes' shared mass parameter
            reps = [QuantileRep(1.0, r.nodes) for r in reps]
            a, b, c = reps
            assert w2_distance(a, b) == w2_distance(b, a)
            assert w2_distance(a, c) <= w2_distance(a, b) + w2_distance(b, c) + 1e-10
            assert w2_distance(a, b) >= 0.0

    def test_translation_invariance(self, rng, g6):
        a = to_quantile(random_density(rng, g6), 80)
        b = to_quantile(random_density(rng, g6), 80)
        b = QuantileRep(a.total_mass, b.nodes)
        d0 = w2_distance(a, b)
        d1 = w2_distance(a.translated(0.35), b.translated(0.35))
        assert d1 == pytest.approx(d0, abs=1e-12)

    def test_zero_iff_equal_nodes(self):
        # alternating perturbation with huge gaps: a degenerate quadrature
        # would report zero; the exact form must not
        xa = np.array([0.0, 10.0, 20.0])
        xb = np.array([1.0, 9.0, 21.0])
        assert w2_cost_squared(xa, xb, 1.0 / 2.0) > 0.1


class TestOptimalMap:
    def test_identity(self, g6):
        a = indicator_quantile(0, 1, g6)
        m = optimal_map(a, a)
        assert np.allclose(m.images, a.nodes)
        assert map_cost(m) == 0.0

    def test_translation_map(self, g6):
        a = indicator_quantile(0, 1, g6)
        b = indicator_quantile(2, 3, g6)
        m = optimal_map(a, b)
        assert np.allclose(m.images, a.nodes + 2.0, atol=1e-12)

    def test_scaling_map_cost_matches_assignment_oracles(self, g6):
        a = indicator_quantile(0, 1, g6, n=50)
        b = indicator_quantile(0, 2, g6, n=50, height=0.5)
        m = optimal_map(a, b)
        assert np.allclose(m.images, 2.0 * a.nodes, atol=1e-10)
        assert map_cost(m) == pytest.approx(w2_distance(a, b) ** 2, rel=1e-12)
        xa, xb = atoms_from_quantile(a), atoms_from_quantile(b)
        sorted_cost = brute_force_w2(xa, xb)
        assert abs(math.sqrt(map_cost(m)) - sorted_cost) < 1e-2
        # independent assignment oracle: sorted pairing is truly optimal
        from scipy.optimize import linear_sum_assignment
        cost = (xa[:, None] - xb[None, :]) ** 2
        rows, cols = linear_sum_assignment(cost)
        hungarian = math.sqrt(cost[rows, cols].sum() / xa.size)
        assert hungarian == pytest.approx(sorted_cost, rel=1e-12)

    def test_monotone_map_validation(self, g6):
        a = indicator_quantile(0, 1, g6, n=4)
        with pytest.raises(ValueError):
            MonotoneMap(a, np.array([0.0, 1.0, 0.5, 2.0, 3.0]))


class TestPushforward:
    def test_identity(self, g6):
        a = indicator_quantile(0, 1, g6)
        out = pushforward(a, optimal_map(a, a))
        assert np.allclose(out.nodes, a.nodes)

    def test_exact_target(self, g6):
        a = indicator_quantile(0, 1, g6)
        b = indicator_quantile(-1, 0.5, g6, height=2.0 / 3.0)
        out = pushforward(a, optimal_map(a, b))
        assert np.allclose(out.nodes, b.nodes)
        assert w2_distance(a, pushforward(a, optimal_map(a, b))) \
            == pytest.approx(w2_distance(a, b), rel=1e-12)

    def test_translation_composition(self, g6):
        a = indicator_quantile(0, 1, g6)
        s, t = 0.7, -1.3
        m1 = MonotoneMap(a, a.nodes + s)
        mid = pushforward(a, m1)
        m2 = MonotoneMap(mid, mid.nodes + t)
        out = pushforward(mid, m2)
        assert np.allclose(out.nodes, a.nodes + (s + t), atol=1e-12)


class TestGeneralizedGeodesic:
    def test_endpoints(self, g6):
        base = indicator_quantile(0, 1, g6)
        mu2 = indicator_quantile(-1, 0, g6)
        mu3 = indicator_quantile(1, 2, g6)
        assert np.allclose(generalized_geodesic(base, mu2, mu3, 0.0).nodes,
                           mu2.nodes)
        assert np.allclose(generalized_geodesic(base, mu2, mu3, 1.0).nodes,
                           mu3.nodes)

    def test_midpoint_of_opposite_translates_is_base(self, g6):
        base = indicator_quantile(0, 1, g6)
        mu2 = QuantileRep(1.0, base.nodes - 1.0)
        mu3 = QuantileRep(1.0, base.nodes + 1.0)
        mid = generalized_geodesic(base, mu2, mu3, 0.5)
        assert np.allclose(mid.nodes, base.nodes, atol=1e-14)

    def test_potential_energy_semiconvexity_spot_check(self, rng, g6):
        # for a quadratic potential the modulus-lambda convexity inequality
        # along node-interpolated curves holds with exact equality
        phi = potential_catalog("quadratic", q=1.0)
        base = to_quantile(random_density(rng, g6), 64)
        mu2 = QuantileRep(base.total_mass,
                          np.sort(base.nodes + rng.normal(0, 0.2, base.n + 1)))
        mu3 = QuantileRep(base.total_mass,
                          np.sort(base.nodes + rng.normal(0, 0.2, base.n + 1)))
        d2 = w2_cost_squared(mu2.nodes, mu3.nodes, base.w)
        p2, p3 = potential_energy(mu2, phi), potential_energy(mu3, phi)
        for t in (0.25, 0.5, 0.75):
            pt = potential_energy(generalized_geodesic(base, mu2, mu3, t), phi)
            bound = (1 - t) * p2 + t * p3 - 0.5 * phi.lam * t * (1 - t) * d2
            assert pt <= bound + 1e-8
            assert pt == pytest.approx(bound, abs=1e-10)

    def test_feasibility_preserved_along_curve(self, g6):
        base = indicator_quantile(0, 1, g6, n=40)
        mu2 = indicator_quantile(-1, 0, g6, n=40)
        mu3 = indicator_quantile(0.5, 1.5, g6, n=40)
        for t in (0.25, 0.5, 0.75):
            mid = generalized_geodesic(base, mu2, mu3, t)
            assert mid.max_density <= 1.0 + 1e-12

    def test_parameter_range(self, g6):
        a = indicator_quantile(0, 1, g6)
        with pytest.raises(ValueError):
            generalized_geodesic(a, a, a, 1.5)


class TestBruteForce:
    def test_identical_atoms(self):
        x = np.array([0.0, 1.0, 2.0])
        assert brute_force_w2(x, x) == 0.0

    def test_single_atom_pair(self):
        assert brute_force_w2([0.0], [3.0]) == pytest.approx(3.0)

    def test_uniform_samples_scaling(self):
        s = (np.arange(100) + 0.5) / 100.0
        val = brute_force_w2(s, 2.0 * s)
        assert abs(val - 1.0 / math.sqrt(3.0)) < 2e-2

    def test_count_mismatch(self):
        with pytest.raises(ValueError):
            brute_force_w2([0.0, 1.0], [0.0])

    def test_agreement_with_w2_on_random_pairs(self, rng, g6):
        for _ in range(20):
            a = to_quantile(random_density(rng, g6), 200)
            b = QuantileRep(a.total_mass,
                            to_quantile(random_density(rng, g6), 200).nodes)
            d_exact = w2_distance(a, b)
            d_atoms = brute_force_w2(atoms_from_quantile(a),
                                     atoms_from_quantile(b),
                                     total_mass=a.total_mass)
            assert abs(d_exact - d_atoms) < 1e-2


def test_resample_preserves_shape(g6):
    q = indicator_quantile(0, 1, g6, n=64)
    r = resample_quantile(q, 128)
    assert r.n == 128
    assert w2_distance(q, r, resample=True) < 5e-3
