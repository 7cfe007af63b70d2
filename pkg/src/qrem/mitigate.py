"""Marginal-level readout mitigation and its error bounds.

Each local term of a diagonal Hamiltonian is estimated on the smallest union
of whole clusters covering its support. The noisy marginal there is
multiplied by the inverse of the neighbor-averaged noise matrix, projected
back onto the simplex and reduced to the term's support.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import probly
from .errors import ValidationError
from .noise_model import NoiseModel, average_noise_matrix, conditional_blocks, correction_matrix
from .simulate.hamiltonians import DiagonalHamiltonian


def statistical_epsilon(n: int, s: int, p_err: float, k: int = 1) -> float:
    """TVD radius that K empirical marginals (2^n - 2 union factor each), from
    s samples, all respect simultaneously with probability >= 1 - p_err."""
    if n < 2:
        raise ValidationError("n must be at least 2")
    if s < 1:
        raise ValidationError("need at least one sample")
    if not 0 < p_err < 1:
        raise ValidationError("p_err must lie in (0, 1)")
    if k < 1:
        raise ValidationError("K must be at least 1")
    return math.sqrt((math.log(2 ** n - 2) + math.log(1 / p_err) + math.log(k)) / (2 * s))


def _outcome_exponent(subset) -> int:
    # the union bound counts events over the 2^|S| outcomes of the marginal
    return 2 ** len(subset)


def chebyshev_sample_bound(var_h: float, delta_e: float, p_f: float) -> float:
    """Samples needed so the energy estimate is within delta_e except with probability p_f."""
    if var_h < 0 or delta_e <= 0 or not 0 < p_f <= 1:
        raise ValidationError("need var >= 0, delta_e > 0 and 0 < p_f <= 1")
    return var_h / (delta_e ** 2 * p_f)


@dataclass(frozen=True)
class VarianceBound:
    admissible: bool
    A: float
    a: float
    bound: float | None


def random_graph_variance_bound(n: int, k: float, p_layers: int, f_h: float, w: float) -> VarianceBound:
    """Variance bound for QAOA on sparse random graphs with average degree k.

    The bound f_H q N^(A+1) is only claimed when the depth p is below
    w ln N / (8 ln(2q / ln 2)) - 1.
    """
    if not 0 < w < 1:
        raise ValidationError("w must lie in (0, 1)")
    if n < 2 or k <= 0:
        raise ValidationError("need N >= 2 and K > 0")
    q = k / n
    growth = math.log(2 * q / math.log(2))
    admissible = growth > 0 and p_layers < w * math.log(n) / (8 * growth) - 1
    base = math.log(2 * q)
    if abs(base) < 1e-300:
        big_a, small_a = w, 0.0
    else:
        ell = abs(math.log(math.log(2)) / base)
        big_a = w * (2 + ell) / (1 + ell)
        small_a = w / (3 * (1 + ell))
    return VarianceBound(admissible, big_a, small_a, f_h * q * n ** (big_a + 1) if admissible else None)


class Mitigator:
    """Caches correction matrices and bounds per cluster union of a model."""

    def __init__(self, model: NoiseModel):
        self.model = model
        self._cache: dict[tuple, tuple[np.ndarray, float]] = {}
        self._delta: dict[tuple, float] = {}

    def expand(self, qubits) -> tuple:
        return self.model.structure.expand(qubits)

    def correction(self, subset) -> tuple[np.ndarray, float]:
        subset = tuple(sorted(subset))
        if subset not in self._cache:
            self._cache[subset] = correction_matrix(average_noise_matrix(self.model, subset))
        return self._cache[subset]

    def delta(self, subset) -> float:
        subset = tuple(sorted(subset))
        if subset not in self._delta:
            _, _, blocks = conditional_blocks(self.model, subset)
            avg = blocks.mean(axis=0)
            _, norm = self.correction(subset)
            worst = max(probly.norm_1to1(avg - b) for b in blocks)
            self._delta[subset] = 0.5 * norm * worst
        return self._delta[subset]

    def apply(self, p_noisy, subset) -> tuple[np.ndarray, np.ndarray]:
        c, _ = self.correction(subset)
        quasi = c @ np.asarray(p_noisy, dtype=float)
        return probly.project_to_simplex(quasi), quasi


def mitigate_marginal(p_noisy, model: NoiseModel, subset) -> tuple[np.ndarray, np.ndarray]:
    """Correct a noisy marginal on a cluster union.

    Returns (projected distribution, raw quasi-distribution).
    """
    subset = tuple(sorted(subset))
    p_noisy = probly.check_distribution(p_noisy, probly.TOL_ARITH)
    if p_noisy.size != 2 ** len(subset):
        raise ValidationError(f"marginal of length {p_noisy.size} does not match subset {subset}")
    return Mitigator(model).apply(p_noisy, subset)


def mitigation_error_bound(model: NoiseModel, subset) -> float:
    """Worst-case TVD between the mitigated and ideal marginal on a cluster union
    caused by averaging over the neighbors' states."""
    return Mitigator(model).delta(subset)


def _expanded(h: DiagonalHamiltonian, model: NoiseModel) -> list[tuple]:
    if h.n_qubits != model.n_qubits:
        raise ValidationError("Hamiltonian and noise model disagree on the number of qubits")
    return [model.structure.expand(t.support) for t in h.terms]


def additive_approximation_bound(h: DiagonalHamiltonian, model: NoiseModel) -> float:
    mit = Mitigator(model)
    return 2 * sum(t.norm * mit.delta(s) for t, s in zip(h.terms, _expanded(h, model)))


def additive_statistical_bound(h: DiagonalHamiltonian, model: NoiseModel, s: int, p_err: float) -> float:
    mit = Mitigator(model)
    total = 0.0
    for t, sub in zip(h.terms, _expanded(h, model)):
        eps = statistical_epsilon(_outcome_exponent(sub), s, p_err, len(h))
        total += t.norm * mit.correction(sub)[1] * eps
    return total


def combined_energy_bound(h: DiagonalHamiltonian, model: NoiseModel, s: int, p_err: float) -> float:
    """2 sum_a ||H_a|| (eps_a ||C_a|| + delta_a), holding with probability >= 1 - p_err."""
    mit = Mitigator(model)
    total = 0.0
    for t, sub in zip(h.terms, _expanded(h, model)):
        eps = statistical_epsilon(_outcome_exponent(sub), s, p_err, len(h))
        total += 2 * t.norm * (eps * mit.correction(sub)[1] + mit.delta(sub))
    return total


def lifted_diagonal(h: DiagonalHamiltonian, index: int, over: Sequence[int]) -> np.ndarray:
    """A term's diagonal written on the basis of a superset `over` of its support."""
    t = h.terms[index]
    over = tuple(sorted(over))
    if not set(t.support) <= set(over):
        raise ValidationError(f"{over} does not contain the support {t.support}")
    shape = [2 if q in t.support else 1 for q in over]
    return np.broadcast_to(t.diagonal.reshape(shape), (2,) * len(over)).reshape(-1)


def energy_from_marginals(h: DiagonalHamiltonian, marginals: Mapping) -> float:
    """Sum of term expectations from per-term marginals.

    Each value is either a vector over the term's support, or a pair
    (qubits, vector) over any superset of it.
    """
    total = 0.0
    for i, t in enumerate(h.terms):
        if i not in marginals:
            raise ValidationError(f"no marginal given for term {i} ({t.label or t.support})")
        value = marginals[i]
        if isinstance(value, tuple) and len(value) == 2 and not np.isscalar(value[0]):
            over, p = value
        else:
            over, p = t.support, value
        total += float(lifted_diagonal(h, i, over) @ np.asarray(p, dtype=float))
    return total


def marginal_from_counts(bits: np.ndarray, counts: np.ndarray, subset) -> np.ndarray:
    """Normalized histogram on `subset` from outcome bit rows and their counts."""
    idx = probly.subset_index(bits, subset)
    hist = np.bincount(idx, weights=counts, minlength=2 ** len(subset))
    return hist / hist.sum()


def counts_to_arrays(counts: Mapping[str, int], n: int) -> tuple[np.ndarray, np.ndarray]:
    keys = list(counts)
    if not keys:
        raise ValidationError("no counts given")
    values = np.asarray([counts[k] for k in keys], dtype=float)
    if np.any(values < 0) or values.sum() <= 0:
        raise ValidationError("counts must be non-negative with a positive total")
    return probly.bits_matrix(keys, n), values


@dataclass
class TermReport:
    index: int
    label: str
    support: tuple
    cluster_union: tuple
    noisy: np.ndarray
    corrected: np.ndarray
    quasi: np.ndarray
    delta: float
    correction_norm: float
    term_norm: float
    epsilon: float
    raw_energy: float
    mitigated_energy: float

    @property
    def bound(self) -> float:
        return 2 * self.term_norm * (self.epsilon * self.correction_norm + self.delta)

    def to_dict(self, raw_quasi: bool = False) -> dict:
        out = {
            "index": self.index,
            "label": self.label,
            "support": list(self.support),
            "cluster_union": list(self.cluster_union),
            "corrected": self.corrected.tolist(),
            "delta": self.delta,
            "correction_norm": self.correction_norm,
            "term_norm": self.term_norm,
            "epsilon": self.epsilon,
            "bound": self.bound,
            "raw_energy": self.raw_energy,
            "mitigated_energy": self.mitigated_energy,
        }
        if raw_quasi:
            out["quasi"] = self.quasi.tolist()
        return out


@dataclass
class MitigationReport:
    shots: int
    p_err: float
    terms: list = field(default_factory=list)
    use_quasi: bool = False

    @property
    def raw_energy(self) -> float:
        return sum(t.raw_energy for t in self.terms)

    @property
    def mitigated_energy(self) -> float:
        return sum(t.mitigated_energy for t in self.terms)

    @property
    def epsilon(self) -> float:
        return max((t.epsilon for t in self.terms), default=0.0)

    @property
    def approximation_bound(self) -> float:
        return sum(2 * t.term_norm * t.delta for t in self.terms)

    @property
    def statistical_bound(self) -> float:
        return sum(t.term_norm * t.correction_norm * t.epsilon for t in self.terms)

    @property
    def combined_bound(self) -> float:
        return sum(t.bound for t in self.terms)

    def to_dict(self, raw_quasi: bool = False) -> dict:
        return {
            "schema": "qrem.mitigation_report/1",
            "shots": self.shots,
            "p_err": self.p_err,
            "energy_from": "quasi" if self.use_quasi else "projected",
            "raw_energy": self.raw_energy,
            "mitigated_energy": self.mitigated_energy,
            "epsilon": self.epsilon,
            "approximation_bound": self.approximation_bound,
            "statistical_bound": self.statistical_bound,
            "combined_bound": self.combined_bound,
            "terms": [t.to_dict(raw_quasi) for t in self.terms],
        }


def mitigate_counts(h: DiagonalHamiltonian, counts, model: NoiseModel, p_err: float = 0.05,
                    use_quasi: bool = False, mitigator: Mitigator | None = None) -> MitigationReport:
    """Mitigate every term of `h` from global measurement counts.

    `counts` is a bitstring -> count mapping or a pair (bit rows, counts).
    """
    n = h.n_qubits
    bits, values = counts_to_arrays(counts, n) if isinstance(counts, Mapping) else counts
    mit = mitigator or Mitigator(model)
    if mit.model is not model:
        raise ValidationError("mitigator was built for a different model")
    shots = int(round(float(np.sum(values))))
    report = MitigationReport(shots, p_err, use_quasi=use_quasi)
    unions = _expanded(h, model)
    corrected: dict[tuple, tuple] = {}
    for i, (t, sub) in enumerate(zip(h.terms, unions)):
        if sub not in corrected:
            noisy = marginal_from_counts(bits, values, sub)
            corrected[sub] = (noisy,) + mit.apply(noisy, sub)
        noisy, proj, quasi = corrected[sub]
        lam = lifted_diagonal(h, i, sub)
        _, norm = mit.correction(sub)
        report.terms.append(TermReport(
            index=i, label=t.label, support=t.support, cluster_union=sub,
            noisy=noisy, corrected=proj, quasi=quasi,
            delta=mit.delta(sub), correction_norm=norm, term_norm=t.norm,
            epsilon=statistical_epsilon(_outcome_exponent(sub), max(shots, 1), p_err, len(h)),
            raw_energy=float(lam @ noisy),
            mitigated_energy=float(lam @ (quasi if use_quasi else proj)),
        ))
    return report


class EnergyEstimator:
    """Fast raw and mitigated energy estimates from dense count vectors.

    Used inside optimization loops, where the same Hamiltonian and model are
    evaluated thousands of times.
    """

    def __init__(self, h: DiagonalHamiltonian, model: NoiseModel | None = None):
        n = h.n_qubits
        self.h = h
        self.model = model
        self.groups: dict[tuple, np.ndarray] = {}
        structure = model.structure if model is not None else None
        for i, t in enumerate(h.terms):
            sub = structure.expand(t.support) if structure is not None else t.support
            lam = lifted_diagonal(h, i, sub)
            self.groups[sub] = self.groups.get(sub, 0) + lam
        all_bits = probly.index_bits(np.arange(2 ** n), n)
        self.local_index = {sub: probly.subset_index(all_bits, sub) for sub in self.groups}
        self.mitigator = Mitigator(model) if model is not None else None

    def _marginals(self, counts):
        total = counts.sum()
        for sub, lam in self.groups.items():
            hist = np.bincount(self.local_index[sub], weights=counts, minlength=lam.size)
            yield sub, lam, hist / total

    def raw(self, counts: np.ndarray) -> float:
        return float(sum(lam @ p for _, lam, p in self._marginals(counts)))

    def mitigated(self, counts: np.ndarray, use_quasi: bool = False) -> float:
        if self.mitigator is None:
            return self.raw(counts)
        total = 0.0
        for sub, lam, p in self._marginals(counts):
            proj, quasi = self.mitigator.apply(p, sub)
            total += float(lam @ (quasi if use_quasi else proj))
        return total
