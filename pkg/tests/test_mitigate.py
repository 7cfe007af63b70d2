import math

import numpy as np
import pytest

from _support import FOUR_QUBIT, random_structure
from qrem import mitigate as mt
from qrem import noise_model as nm
from qrem import probly
from qrem.benchmark import ibm_like_model
from qrem.errors import SingularModelError, ValidationError
from qrem.simulate.hamiltonians import DiagonalHamiltonian, Term, ZZ, ground_state, ising, random_max2sat


def exact_marginals(model, p, subset):
    n = model.n_qubits
    noisy = nm.full_matrix(model) @ p
    return probly.marginalize(noisy, range(n), subset), probly.marginalize(p, range(n), subset)


def stress_state(rng, n):
    mode = rng.integers(3)
    if mode == 0:
        p = np.zeros(2 ** n)
        p[rng.integers(2 ** n)] = 1
        return p
    return rng.dirichlet(np.full(2 ** n, 0.1 if mode == 1 else 1.0))


ONE_NEIGHBOR = nm.NoiseModel(
    nm.CorrelationStructure(2, [[0], [1]], [[1], []]),
    [{"0": np.eye(2), "1": np.array([[0.9, 0.1], [0.1, 0.9]])}, {"": np.eye(2)}])


class TestMitigateMarginal:
    def test_identity_model(self):
        model = nm.uncorrelated_model([np.eye(2)] * 2)
        p = np.array([0.1, 0.2, 0.3, 0.4])
        proj, quasi = mt.mitigate_marginal(p, model, (0, 1))
        np.testing.assert_allclose(proj, p, atol=1e-15)
        np.testing.assert_allclose(quasi, p, atol=1e-15)

    def test_exact_inversion_without_neighbors(self):
        rng = np.random.default_rng(0)
        structure = nm.CorrelationStructure(3, [[0, 2], [1]], [[], []])
        for _ in range(50):
            model = nm.random_model(structure, rng, strength=0.3)
            p = rng.dirichlet(np.ones(8))
            noisy, ideal = exact_marginals(model, p, (0, 2))
            proj, quasi = mt.mitigate_marginal(noisy, model, (0, 2))
            np.testing.assert_allclose(quasi, ideal, atol=1e-10)
            np.testing.assert_allclose(proj, ideal, atol=1e-10)

    def test_within_approximation_bound(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            n = int(rng.integers(2, 7))
            structure = random_structure(rng, n)
            model = nm.random_model(structure, rng, strength=float(rng.uniform(0.05, 0.3)))
            subset = structure.expand(structure.clusters[int(rng.integers(len(structure.clusters)))])
            noisy, ideal = exact_marginals(model, stress_state(rng, n), subset)
            proj, quasi = mt.mitigate_marginal(noisy, model, subset)
            bound = mt.mitigation_error_bound(model, subset)
            assert 0.5 * np.abs(quasi - ideal).sum() <= bound + 1e-12
            assert probly.tvd(proj, ideal) <= bound + 1e-12

    def test_rejects_mismatched_length(self):
        with pytest.raises(ValidationError):
            mt.mitigate_marginal([0.5, 0.5], ONE_NEIGHBOR, (0, 1))

    def test_singular(self):
        model = nm.uncorrelated_model([np.full((2, 2), 0.5), np.eye(2)])
        with pytest.raises(SingularModelError):
            mt.mitigate_marginal([0.5, 0.5], model, (0,))


class TestErrorBound:
    def test_hand_computed(self):
        # average [[.95,.05],[.05,.95]] has inverse norm 1/0.9; the blocks differ from it by 0.1
        assert mt.mitigation_error_bound(ONE_NEIGHBOR, (0,)) == pytest.approx(0.5 * (1 / 0.9) * 0.1, abs=1e-12)
        assert mt.mitigation_error_bound(ONE_NEIGHBOR, (0,)) == pytest.approx(0.05556, abs=1e-5)

    def test_neighbor_independent(self):
        rng = np.random.default_rng(2)
        model = nm.random_model(nm.CorrelationStructure(3, [[0, 1], [2]], [[], []]), rng)
        assert mt.mitigation_error_bound(model, (0, 1)) == 0
        table = {"0": model.matrices[1][""], "1": model.matrices[1][""]}
        same = nm.NoiseModel(nm.CorrelationStructure(3, [[0, 1], [2]], [[], [0]]), [model.matrices[0], table])
        assert mt.mitigation_error_bound(same, (2,)) == 0

    def test_never_exceeded_on_five_qubits(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            model = nm.random_model(random_structure(rng, 5), rng, strength=0.25)
            for cluster in model.structure.clusters:
                subset = model.structure.expand(cluster)
                bound = mt.mitigation_error_bound(model, subset)
                worst = 0.0
                for _ in range(200):
                    noisy, ideal = exact_marginals(model, stress_state(rng, 5), subset)
                    worst = max(worst, 0.5 * np.abs(mt.mitigate_marginal(noisy, model, subset)[1] - ideal).sum())
                assert worst <= bound + 1e-12


class TestStatisticalEpsilon:
    def test_values(self):
        assert mt.statistical_epsilon(2, 10_000, 0.05, 28) == pytest.approx(
            math.sqrt((math.log(2) + math.log(20) + math.log(28)) / 2e4), rel=1e-12)
        assert mt.statistical_epsilon(2, 10_000, 0.05, 28) == pytest.approx(0.0187, abs=5e-5)

    def test_single_marginal_form(self):
        assert mt.statistical_epsilon(3, 500, 0.1, 1) == pytest.approx(
            math.sqrt((math.log(6) + math.log(10)) / 1000), rel=1e-12)

    def test_scaling(self):
        assert mt.statistical_epsilon(4, 2000, 0.05) / mt.statistical_epsilon(4, 1000, 0.05) == pytest.approx(
            1 / math.sqrt(2), rel=1e-12)

    @pytest.mark.parametrize("args", [(1, 10, 0.1, 1), (2, 0, 0.1, 1), (2, 10, 1.0, 1), (2, 10, 0.1, 0)])
    def test_ranges(self, args):
        with pytest.raises(ValidationError):
            mt.statistical_epsilon(*args)

    @pytest.mark.parametrize("outcomes", [2, 4])
    def test_coverage(self, outcomes):
        rng = np.random.default_rng(outcomes)
        s = 10_000
        eps = mt.statistical_epsilon(outcomes, s, 0.05, 1)
        exceed = 0
        for _ in range(1000):
            p = rng.dirichlet(np.ones(outcomes))
            exceed += probly.tvd(rng.multinomial(s, p) / s, p) > eps
        assert exceed / 1000 <= 0.05


class TestCombinedBound:
    def test_identity_model(self):
        h = random_max2sat(5, 4, seed=0)
        model = nm.uncorrelated_model([np.eye(2)] * 5)
        expected = sum(2 * t.norm * mt.statistical_epsilon(2 ** len(t.support), 1000, 0.05, len(h))
                       for t in h.terms)
        assert mt.combined_energy_bound(h, model, 1000, 0.05) == pytest.approx(expected, rel=1e-12)
        assert mt.additive_approximation_bound(h, model) == 0

    def test_single_term(self):
        h = DiagonalHamiltonian(2, [Term((0,), [0.7, -0.3])])
        eps = mt.statistical_epsilon(2, 5000, 0.05, 1)
        c_norm = nm.correction_matrix(nm.average_noise_matrix(ONE_NEIGHBOR, (0,)).matrix)[1]
        expected = 2 * 0.7 * (eps * c_norm + mt.mitigation_error_bound(ONE_NEIGHBOR, (0,)))
        assert mt.combined_energy_bound(h, ONE_NEIGHBOR, 5000, 0.05) == pytest.approx(expected, rel=1e-12)

    def test_parts_add_up(self):
        h = random_max2sat(8, 4, seed=1)
        model = ibm_like_model(8, seed=1)
        total = mt.combined_energy_bound(h, model, 4000, 0.05)
        parts = mt.additive_approximation_bound(h, model) + 2 * mt.additive_statistical_bound(h, model, 4000, 0.05)
        assert total == pytest.approx(parts, rel=1e-12)

    def test_singular_term(self):
        model = nm.uncorrelated_model([np.full((2, 2), 0.5), np.eye(2)])
        with pytest.raises(SingularModelError):
            mt.combined_energy_bound(ising(2, {0: 1.0}, {}), model, 100, 0.05)

    def test_end_to_end_coverage(self):
        model = ibm_like_model(8, seed=2)
        dense = nm.full_matrix(model)
        rng = np.random.default_rng(3)
        shots = 10_000
        covered = 0
        for trial in range(200):
            h = random_max2sat(8, 4, seed=trial)
            bits, energy = ground_state(h)
            column = dense[:, probly.bitstring_to_index(bits)]
            counts = rng.multinomial(shots, column / column.sum())
            estimate = mt.EnergyEstimator(h, model).mitigated(counts)
            covered += abs(estimate - energy) <= mt.combined_energy_bound(h, model, shots, 0.05)
        assert covered >= 0.95 * 200


class TestChebyshev:
    def test_values(self):
        assert mt.chebyshev_sample_bound(1, 1, 0.04) == pytest.approx(25)
        assert mt.chebyshev_sample_bound(0, 1, 0.04) == 0
        assert mt.chebyshev_sample_bound(3, 0.2, 0.1) / mt.chebyshev_sample_bound(3, 0.8, 0.1) == pytest.approx(16)

    def test_ranges(self):
        with pytest.raises(ValidationError):
            mt.chebyshev_sample_bound(1, 0, 0.1)
        with pytest.raises(ValidationError):
            mt.chebyshev_sample_bound(-1, 1, 0.1)


class TestVarianceBound:
    def test_second_evaluation(self):
        n, q, w = 10_000, 2, 0.5
        out = mt.random_graph_variance_bound(n, q * n, 0, 1.0, w)
        ell = abs(math.log(math.log(2), 2 * q))
        assert out.A == pytest.approx(w * (2 + ell) / (1 + ell), rel=1e-12)
        assert out.a == pytest.approx(w / (3 * (1 + ell)), rel=1e-12)
        assert out.A == pytest.approx(0.5 * (2 + 0.264385) / (1 + 0.264385), abs=1e-6)

    def test_depth_gate(self):
        # q = 0.4 on 1000 nodes allows depths below 0.5 ln 1000 / (8 ln(0.8 / ln 2)) - 1 ~ 2.0
        limit = 0.5 * math.log(1000) / (8 * math.log(0.8 / math.log(2))) - 1
        assert 1 < limit < 3
        shallow = mt.random_graph_variance_bound(1000, 400, 1, 2.0, 0.5)
        assert shallow.admissible and shallow.bound == pytest.approx(2.0 * 0.4 * 1000 ** (shallow.A + 1))
        assert not mt.random_graph_variance_bound(1000, 400, 3, 2.0, 0.5).admissible
        deep = mt.random_graph_variance_bound(10_000, 20_000, 5, 1.0, 0.5)
        assert not deep.admissible and deep.bound is None

    def test_exponent_below_one_grid(self):
        for q in np.linspace(0.4, 20, 60):
            for w in np.linspace(0.01, 0.99, 50):
                out = mt.random_graph_variance_bound(1000, q * 1000, 0, 1.0, float(w))
                ell = abs(math.log(math.log(2)) / math.log(2 * q)) if abs(math.log(2 * q)) > 1e-12 else math.inf
                threshold = (1 + ell) / (2 + ell) if ell != math.inf else 1.0
                if w <= 0.5 or w < threshold:
                    assert out.A < 1

    def test_w_range(self):
        with pytest.raises(ValidationError):
            mt.random_graph_variance_bound(100, 200, 0, 1.0, 1.0)


class TestEnergyFromMarginals:
    def test_point_mass(self):
        h = DiagonalHamiltonian(2, [Term((0, 1), 0.8 * ZZ)])
        assert mt.energy_from_marginals(h, {0: [1, 0, 0, 0]}) == pytest.approx(0.8)

    def test_uniform_zero_trace(self):
        h = DiagonalHamiltonian(3, [Term((0, 2), [1, -2, 3, -2]), Term((1,), [0.5, -0.5])])
        assert mt.energy_from_marginals(h, {0: np.full(4, 0.25), 1: [0.5, 0.5]}) == pytest.approx(0, abs=1e-15)

    def test_global_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            supports = {tuple(sorted(int(v) for v in rng.choice(6, size=int(rng.integers(1, 4)), replace=False)))
                        for _ in range(8)}
            terms = [Term(s, rng.normal(size=2 ** len(s))) for s in sorted(supports)]
            h = DiagonalHamiltonian(6, terms)
            p = rng.dirichlet(np.ones(64))
            oracle = sum(p[i] * h.energy(probly.index_to_bitstring(i, 6)) for i in range(64))
            marginals = {i: probly.marginalize(p, range(6), t.support) for i, t in enumerate(h.terms)}
            assert mt.energy_from_marginals(h, marginals) == pytest.approx(oracle, abs=1e-10)
            wide = {i: ((0, 1, 2, 3, 4, 5), p) for i in range(len(h))}
            assert mt.energy_from_marginals(h, wide) == pytest.approx(oracle, abs=1e-10)

    def test_missing_term(self):
        h = ising(2, {0: 1.0, 1: 1.0}, {})
        with pytest.raises(ValidationError):
            mt.energy_from_marginals(h, {0: [1, 0]})

    def test_mitigated_exact_energy(self):
        rng = np.random.default_rng(5)
        structure = nm.CorrelationStructure(6, [[0, 1], [2], [3, 4], [5]], [[], [], [], []])
        for _ in range(10):
            model = nm.random_model(structure, rng, strength=0.2)
            h = random_max2sat(6, 4, seed=int(rng.integers(1 << 30)))
            p = rng.dirichlet(np.ones(64))
            noisy = nm.full_matrix(model) @ p
            marginals = {}
            for i, t in enumerate(h.terms):
                sub = structure.expand(t.support)
                marginals[i] = (sub, mt.mitigate_marginal(probly.marginalize(noisy, range(6), sub), model, sub)[1])
            assert mt.energy_from_marginals(h, marginals) == pytest.approx(float(p @ h.energies), abs=1e-8)


def coarse_single_qubit(model, qubit):
    """Uniform average of the cluster matrix over the other members' inputs,
    traced down to one qubit."""
    ci = model.structure.cluster_of(qubit)
    cluster = model.structure.clusters[ci]
    lam = nm.average_noise_matrix(model, cluster).matrix
    k = len(cluster)
    pos = cluster.index(qubit)
    t = lam.reshape((2,) * (2 * k))
    t = np.moveaxis(t, [pos, k + pos], [0, 1])
    return t.reshape(2, 2, -1).reshape(2, 2, 2 ** (k - 1), 2 ** (k - 1)).sum(axis=2).mean(axis=2)


def test_expanded_beats_coarse_grained():
    rng = np.random.default_rng(6)
    structure = nm.CorrelationStructure(4, [[0, 1], [2, 3]], [[2], []])
    expanded_err, coarse_err = [], []
    for _ in range(200):
        model = nm.random_model(structure, rng, strength=0.4)
        p = rng.dirichlet(np.full(16, 0.3))
        noisy = nm.full_matrix(model) @ p
        ideal = probly.marginalize(p, range(4), (0,))
        pair = probly.marginalize(noisy, range(4), (0, 1))
        wide, _ = mt.mitigate_marginal(pair, model, (0, 1))
        expanded_err.append(probly.tvd(probly.marginalize(wide, (0, 1), (0,)), ideal))
        small = probly.marginalize(noisy, range(4), (0,))
        c, _ = nm.correction_matrix(coarse_single_qubit(model, 0))
        coarse_err.append(probly.tvd(probly.project_to_simplex(c @ small), ideal))
    assert np.mean(expanded_err) < np.mean(coarse_err)


class TestReport:
    def test_schema_and_fields(self):
        h = random_max2sat(4, 4, seed=7)
        model = nm.random_model(FOUR_QUBIT, np.random.default_rng(8), strength=0.1)
        counts = {"0000": 500, "0110": 300, "1111": 200}
        report = mt.mitigate_counts(h, counts, model, 0.05)
        d = report.to_dict(raw_quasi=True)
        assert d["schema"] == "qrem.mitigation_report/1"
        assert d["shots"] == 1000 and d["energy_from"] == "projected"
        for key in ("epsilon", "approximation_bound", "statistical_bound", "combined_bound"):
            assert d[key] >= 0
        for term in d["terms"]:
            assert term["bound"] >= 0 and "quasi" in term
            assert sum(term["corrected"]) == pytest.approx(1)
            assert set(term["support"]) <= set(term["cluster_union"])
        assert "quasi" not in report.to_dict()["terms"][0]
        assert d["combined_bound"] == pytest.approx(mt.combined_energy_bound(h, model, 1000, 0.05), rel=1e-12)

    def test_identity_model_raw_equals_mitigated(self):
        h = random_max2sat(4, 4, seed=9)
        model = nm.uncorrelated_model([np.eye(2)] * 4)
        report = mt.mitigate_counts(h, {"0101": 3, "1100": 5}, model)
        assert report.raw_energy == pytest.approx(report.mitigated_energy, abs=1e-12)

    def test_estimator_matches_report(self):
        h = random_max2sat(4, 4, seed=10)
        model = nm.random_model(FOUR_QUBIT, np.random.default_rng(11), strength=0.1)
        counts = np.random.default_rng(12).multinomial(5000, np.full(16, 1 / 16))
        mapping = {probly.index_to_bitstring(i, 4): int(c) for i, c in enumerate(counts) if c}
        report = mt.mitigate_counts(h, mapping, model)
        est = mt.EnergyEstimator(h, model)
        assert est.raw(counts) == pytest.approx(report.raw_energy, abs=1e-10)
        assert est.mitigated(counts) == pytest.approx(report.mitigated_energy, abs=1e-10)
        quasi = mt.mitigate_counts(h, mapping, model, use_quasi=True)
        assert est.mitigated(counts, use_quasi=True) == pytest.approx(quasi.mitigated_energy, abs=1e-10)
