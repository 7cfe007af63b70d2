"""Factorized correlated readout-noise model.

The global transfer matrix is a product of per-cluster matrices, where each
cluster's matrix may depend on the prepared state of a few neighbor qubits:

    Lambda[X|Y] = prod_chi Lambda_chi^{Y_N(chi)}[X_C(chi) | Y_C(chi)]

Matrices are left-stochastic: column = prepared state, row = measured state.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import probly
from .errors import SingularModelError, ValidationError

CONDITION_LIMIT = 1e8
_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True)
class CorrelationStructure:
    n_qubits: int
    clusters: tuple
    neighborhoods: tuple

    def __post_init__(self):
        clusters = tuple(tuple(sorted(int(q) for q in c)) for c in self.clusters)
        neighborhoods = tuple(tuple(sorted(int(q) for q in nb)) for nb in self.neighborhoods)
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "neighborhoods", neighborhoods)
        n = self.n_qubits
        if len(neighborhoods) != len(clusters):
            raise ValidationError("need exactly one neighborhood per cluster")
        seen = [q for c in clusters for q in c]
        if any(len(c) == 0 for c in clusters):
            raise ValidationError("clusters must be non-empty")
        if sorted(seen) != list(range(n)):
            raise ValidationError(f"clusters must partition the qubits 0..{n - 1}")
        for c, nb in zip(clusters, neighborhoods):
            if len(set(nb)) != len(nb) or any(q < 0 or q >= n for q in nb):
                raise ValidationError(f"invalid neighborhood {nb}")
            if set(c) & set(nb):
                raise ValidationError(f"neighborhood {nb} overlaps its own cluster {c}")

    @classmethod
    def singletons(cls, n: int) -> "CorrelationStructure":
        return cls(n, tuple((q,) for q in range(n)), tuple(() for _ in range(n)))

    def cluster_of(self, qubit: int) -> int:
        for i, c in enumerate(self.clusters):
            if qubit in c:
                return i
        raise ValidationError(f"qubit {qubit} is not in any cluster")

    def clusters_touching(self, qubits) -> list[int]:
        return sorted({self.cluster_of(q) for q in qubits})

    def expand(self, qubits) -> tuple:
        """Smallest union of whole clusters that contains `qubits`."""
        return tuple(sorted(q for i in self.clusters_touching(qubits) for q in self.clusters[i]))

    def is_cluster_union(self, qubits) -> bool:
        return set(self.expand(qubits)) == set(qubits)

    def joint_neighborhood(self, subset) -> tuple:
        """Neighbors of the clusters in `subset` that lie outside it."""
        subset = set(subset)
        out = set()
        for i in self.clusters_touching(subset):
            out |= set(self.neighborhoods[i])
        return tuple(sorted(out - subset))

    def max_joint_size(self) -> int:
        return max(len(c) + len(nb) for c, nb in zip(self.clusters, self.neighborhoods))


@dataclass(frozen=True)
class MarginalNoiseMatrix:
    subset: tuple
    matrix: np.ndarray
    kind: str  # "exact-conditional" or "averaged"


class NoiseModel:
    """Cluster/neighborhood noise model with one stochastic matrix per
    (cluster, neighbor-state) pair. Neighbor-state keys are bitstrings of the
    neighbor qubits in ascending order ('' when the neighborhood is empty)."""

    def __init__(self, structure: CorrelationStructure, matrices: Sequence[Mapping[str, object]]):
        if len(matrices) != len(structure.clusters):
            raise ValidationError("need one matrix table per cluster")
        tables = []
        for c, nb, table in zip(structure.clusters, structure.neighborhoods, matrices):
            expected = {probly.index_to_bitstring(i, len(nb)) for i in range(2 ** len(nb))}
            if set(table) != expected:
                raise ValidationError(
                    f"cluster {c} needs exactly the neighbor states {sorted(expected)}, got {sorted(table)}")
            checked = {}
            for key in sorted(table):
                m = probly.check_stochastic(table[key])
                if m.shape[0] != 2 ** len(c):
                    raise ValidationError(f"matrix for cluster {c} must be {2 ** len(c)}-dimensional")
                m = m.copy()
                m.setflags(write=False)
                checked[key] = m
            tables.append(checked)
        self.structure = structure
        self.matrices = tuple(tables)

    @property
    def n_qubits(self) -> int:
        return self.structure.n_qubits

    def storage_size(self) -> int:
        return sum(m.size for table in self.matrices for m in table.values())

    def __eq__(self, other):
        if not isinstance(other, NoiseModel) or other.structure != self.structure:
            return False
        return all(
            np.array_equal(a[key], b[key]) for a, b in zip(self.matrices, other.matrices) for key in a)

    def __repr__(self):
        return f"NoiseModel(n_qubits={self.n_qubits}, clusters={self.structure.clusters})"

    def to_dict(self) -> dict:
        s = self.structure
        return {
            "schema": "qrem.noise_model/1",
            "n_qubits": s.n_qubits,
            "clusters": [list(c) for c in s.clusters],
            "neighborhoods": [list(nb) for nb in s.neighborhoods],
            "matrices": {
                str(i): {key: m.tolist() for key, m in table.items()}
                for i, table in enumerate(self.matrices)
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "NoiseModel":
        try:
            structure = CorrelationStructure(
                int(data["n_qubits"]), data["clusters"], data["neighborhoods"])
            raw = data["matrices"]
            tables = [raw[str(i)] for i in range(len(structure.clusters))]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed noise model: missing {exc}") from exc
        return cls(structure, tables)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "NoiseModel":
        return cls.from_dict(json.loads(text))


def uncorrelated_model(single_qubit_matrices: Sequence) -> NoiseModel:
    n = len(single_qubit_matrices)
    if n == 0:
        raise ValidationError("need at least one qubit")
    for m in single_qubit_matrices:
        if np.shape(m) != (2, 2):
            raise ValidationError("single-qubit matrices must be 2x2")
    return NoiseModel(CorrelationStructure.singletons(n), [{"": m} for m in single_qubit_matrices])


def random_stochastic(dim: int, rng: np.random.Generator, strength: float = 0.1) -> np.ndarray:
    """Near-identity stochastic matrix: (1 - e_j) I + e_j R with e_j ~ U[0, strength]."""
    r = rng.dirichlet(np.ones(dim), size=dim).T
    e = rng.uniform(0, strength, size=dim)
    return np.eye(dim) * (1 - e) + r * e


def random_model(structure: CorrelationStructure, rng: np.random.Generator,
                 strength: float = 0.1) -> NoiseModel:
    tables = []
    for c, nb in zip(structure.clusters, structure.neighborhoods):
        tables.append({
            probly.index_to_bitstring(i, len(nb)): random_stochastic(2 ** len(c), rng, strength)
            for i in range(2 ** len(nb))
        })
    return NoiseModel(structure, tables)


def _check_cluster_union(model: NoiseModel, subset) -> tuple:
    subset = tuple(sorted(set(int(q) for q in subset)))
    if not subset:
        raise ValidationError("empty subset")
    if any(q < 0 or q >= model.n_qubits for q in subset):
        raise ValidationError(f"subset {subset} out of range")
    if not model.structure.is_cluster_union(subset):
        raise ValidationError(
            f"subset {subset} splits a cluster; expand it to {model.structure.expand(subset)}")
    return subset


def conditional_blocks(model: NoiseModel, subset) -> tuple[tuple, tuple, np.ndarray]:
    """Noise matrices on a cluster union for every state of its outside neighbors.

    Returns (subset, outside_neighbors, blocks) where blocks[e] is the
    2^|S| x 2^|S| matrix obtained when the outside neighbors are prepared in
    state e. Neighbors inside the subset stay as input indices.
    """
    subset = _check_cluster_union(model, subset)
    s = model.structure
    ext = s.joint_neighborhood(subset)
    n_s = len(subset)
    if 2 * n_s + len(ext) > len(_LETTERS):
        raise ValidationError("subset too large for dense assembly")
    pos = {q: i for i, q in enumerate(subset)}
    x_label = {q: _LETTERS[i] for i, q in enumerate(subset)}
    y_label = {q: _LETTERS[n_s + i] for i, q in enumerate(subset)}
    e_label = {q: _LETTERS[2 * n_s + i] for i, q in enumerate(ext)}
    operands, specs = [], []
    for ci in s.clusters_touching(subset):
        c, nb = s.clusters[ci], s.neighborhoods[ci]
        table = model.matrices[ci]
        # factor axes: X_C..., Y_C..., then one axis per neighbor qubit
        stacked = np.stack([table[probly.index_to_bitstring(i, len(nb))] for i in range(2 ** len(nb))])
        factor = stacked.reshape((2,) * len(nb) + (2,) * len(c) + (2,) * len(c))
        factor = np.moveaxis(factor, list(range(len(nb))), list(range(2 * len(c), 2 * len(c) + len(nb))))
        labels = [x_label[q] for q in c] + [y_label[q] for q in c]
        labels += [y_label[q] if q in pos else e_label[q] for q in nb]
        operands.append(factor)
        specs.append("".join(labels))
    out = "".join(e_label[q] for q in ext) + "".join(x_label[q] for q in subset) \
        + "".join(y_label[q] for q in subset)
    tensor = np.einsum(",".join(specs) + "->" + out, *operands)
    blocks = tensor.reshape(2 ** len(ext), 2 ** n_s, 2 ** n_s)
    return subset, ext, blocks


def full_matrix(model: NoiseModel) -> np.ndarray:
    """The global 2^N x 2^N transfer matrix (small N only; cached on the model)."""
    cached = model.__dict__.get("_full_matrix")
    if cached is not None:
        return cached
    if model.n_qubits > 14:
        raise ValidationError("full matrix assembly is limited to 14 qubits")
    _, _, blocks = conditional_blocks(model, range(model.n_qubits))
    full = blocks[0]
    full.setflags(write=False)
    model.__dict__["_full_matrix"] = full
    return full


def global_noise_element(model: NoiseModel, x: str, y: str) -> float:
    n = model.n_qubits
    if len(x) != n or len(y) != n:
        raise ValidationError(f"bitstrings must have length {n}")
    value = 1.0
    for c, nb, table in zip(model.structure.clusters, model.structure.neighborhoods, model.matrices):
        key = "".join(y[q] for q in nb)
        row = probly.bitstring_to_index("".join(x[q] for q in c))
        col = probly.bitstring_to_index("".join(y[q] for q in c))
        value *= table[key][row, col]
    return float(value)


def marginal_noise_matrix(model: NoiseModel, subset, neighbor_conditional) -> MarginalNoiseMatrix:
    """State-dependent noise matrix on a cluster union.

    `neighbor_conditional` gives, for every prepared state Y_S of the subset,
    the distribution of the outside neighbors' prepared state. Accepted forms:
    a mapping from Y_S bitstrings to vectors, or an array with
    [neighbor_state, Y_S] layout.
    """
    subset, ext, blocks = conditional_blocks(model, subset)
    dim_s, dim_e = 2 ** len(subset), 2 ** len(ext)
    if isinstance(neighbor_conditional, Mapping):
        cols = []
        for j in range(dim_s):
            key = probly.index_to_bitstring(j, len(subset))
            if key not in neighbor_conditional:
                raise ValidationError(f"no neighbor distribution given for prepared state {key!r}")
            cols.append(np.asarray(neighbor_conditional[key], dtype=float))
        cond = np.stack(cols, axis=1)
    else:
        cond = np.asarray(neighbor_conditional, dtype=float)
    if cond.shape != (dim_e, dim_s):
        raise ValidationError(f"conditional must have shape {(dim_e, dim_s)}, got {cond.shape}")
    for j in range(dim_s):
        probly.check_distribution(cond[:, j], probly.TOL_ARITH)
    matrix = np.einsum("exy,ey->xy", blocks, cond)
    return MarginalNoiseMatrix(subset, matrix, "exact-conditional")


def average_noise_matrix(model: NoiseModel, subset) -> MarginalNoiseMatrix:
    subset, _, blocks = conditional_blocks(model, subset)
    return MarginalNoiseMatrix(subset, blocks.mean(axis=0), "averaged")


def neighbor_conditional_from_state(model: NoiseModel, subset, p, over=None) -> np.ndarray:
    """p(Y_ext | Y_S) induced by an ideal distribution `p` on qubits `over`.

    Prepared states of S with zero probability get a uniform conditional; the
    corresponding matrix column never acts on anything.
    """
    subset = _check_cluster_union(model, subset)
    ext = model.structure.joint_neighborhood(subset)
    over = tuple(range(model.n_qubits)) if over is None else tuple(over)
    both = tuple(sorted(set(subset) | set(ext)))
    joint = probly.marginalize(p, over, both).reshape((2,) * len(both))
    order = [both.index(q) for q in ext] + [both.index(q) for q in subset]
    joint = np.transpose(joint, order).reshape(2 ** len(ext), 2 ** len(subset))
    totals = joint.sum(axis=0)
    cond = np.full_like(joint, 1.0 / joint.shape[0])
    nz = totals > 0
    cond[:, nz] = joint[:, nz] / totals[nz]
    return cond


def correction_matrix(m) -> tuple[np.ndarray, float]:
    """Inverse of a marginal noise matrix and its 1->1 norm."""
    a = m.matrix if isinstance(m, MarginalNoiseMatrix) else np.asarray(m, dtype=float)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularModelError(f"noise matrix is not invertible (condition number {cond:.3g})")
    inv = np.linalg.inv(a)
    return inv, probly.norm_1to1(inv)


def sample_noisy_indices(model: NoiseModel, ideal_index: int, count: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Draw `count` noisy outcome indices for one ideal outcome, cluster by cluster."""
    n = model.n_qubits
    y = probly.index_to_bitstring(int(ideal_index), n)
    bits = np.zeros((count, n), dtype=np.uint8)
    for c, nb, table in zip(model.structure.clusters, model.structure.neighborhoods, model.matrices):
        col = table["".join(y[q] for q in nb)][:, probly.bitstring_to_index("".join(y[q] for q in c))]
        col = np.clip(col, 0, None)
        draws = rng.choice(col.size, size=count, p=col / col.sum())
        bits[:, list(c)] = probly.index_bits(draws, len(c))
    return probly.subset_index(bits, range(n))


def sample_noisy_outcome(model: NoiseModel, ideal_outcome: str, rng: np.random.Generator) -> str:
    if len(ideal_outcome) != model.n_qubits:
        raise ValidationError(f"outcome must have length {model.n_qubits}")
    idx = sample_noisy_indices(model, probly.bitstring_to_index(ideal_outcome), 1, rng)[0]
    return probly.index_to_bitstring(int(idx), model.n_qubits)
