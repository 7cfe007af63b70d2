"""Estimate noise matrices, pairwise correlation coefficients and a cluster
structure from DDOT measurement counts."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import probly
from .errors import CoverageError, ValidationError
from .noise_model import CorrelationStructure, NoiseModel


class MeasurementDataset:
    """Counts of measured outputs for each prepared input bitstring."""

    def __init__(self, n_qubits: int, records: Mapping[str, Mapping[str, int]]):
        if n_qubits < 1:
            raise ValidationError("dataset needs at least one qubit")
        clean: dict[str, dict[str, int]] = {}
        for inp, outs in records.items():
            if len(inp) != n_qubits:
                raise ValidationError(f"input {inp!r} does not have length {n_qubits}")
            row = {}
            for out, cnt in outs.items():
                if len(out) != n_qubits:
                    raise ValidationError(f"output {out!r} does not have length {n_qubits}")
                if cnt < 0 or int(cnt) != cnt:
                    raise ValidationError(f"count for {inp}->{out} must be a non-negative integer")
                if cnt:
                    row[out] = int(cnt)
            if not row:
                raise ValidationError(f"input {inp!r} has no recorded shots")
            clean[inp] = row
        if not clean:
            raise ValidationError("dataset is empty")
        self.n_qubits = n_qubits
        self.records = clean
        inputs, outputs, counts, owner = [], [], [], []
        for i, (inp, outs) in enumerate(clean.items()):
            for out, cnt in outs.items():
                inputs.append(inp)
                outputs.append(out)
                counts.append(cnt)
                owner.append(i)
        self.in_bits = probly.bits_matrix(inputs, n_qubits)
        self.out_bits = probly.bits_matrix(outputs, n_qubits)
        self.counts = np.asarray(counts, dtype=np.int64)
        owner = np.asarray(owner)
        totals = np.bincount(owner, weights=self.counts)
        # weight that makes every distinct prepared input contribute one unit in total
        self.unit_weights = self.counts / totals[owner]

    @property
    def inputs(self) -> list[str]:
        return list(self.records)

    def to_dict(self) -> dict:
        return {"schema": "qrem.dataset/1", "n_qubits": self.n_qubits, "results": self.records}

    @classmethod
    def from_dict(cls, data) -> "MeasurementDataset":
        try:
            return cls(int(data["n_qubits"]), data["results"])
        except KeyError as exc:
            raise ValidationError(f"malformed dataset: missing {exc}") from exc

    @classmethod
    def load(cls, path) -> "MeasurementDataset":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class ConditionalCounts:
    subset: tuple
    table: np.ndarray  # [measured X_S, prepared Y_S]
    context: str = "pooled"
    condition_on: tuple = ()

    def matrix(self) -> np.ndarray:
        totals = self.table.sum(axis=0)
        if np.any(totals <= 0):
            raise CoverageError("some prepared states have no counts")
        return self.table / totals


@dataclass(frozen=True)
class CorrelationTable:
    """c[i, j] is the strength with which qubit j's prepared state affects qubit i."""

    c: np.ndarray
    min_column_shots: float = float("inf")

    @property
    def n_qubits(self) -> int:
        return self.c.shape[0]

    def to_rows(self) -> list[list]:
        return [[i] + [float(v) for v in row] for i, row in enumerate(self.c)]


def _selection(ds: MeasurementDataset, condition_on, condition_state):
    condition_on = tuple(int(q) for q in condition_on)
    if condition_state is None or condition_state == "pooled":
        if condition_on:
            raise ValidationError("a conditioning set needs a condition state")
        return np.ones(len(ds.counts), dtype=bool), "pooled"
    if len(condition_state) != len(condition_on):
        raise ValidationError("condition state must match the conditioning set")
    target = probly.bitstring_to_index(condition_state)
    return probly.subset_index(ds.in_bits, condition_on) == target, condition_state


def _tally(ds, subset, mask, weights):
    dim = 2 ** len(subset)
    x = probly.subset_index(ds.out_bits[mask], subset)
    y = probly.subset_index(ds.in_bits[mask], subset)
    w = weights[mask]
    table = np.bincount(x * dim + y, weights=w, minlength=dim * dim).reshape(dim, dim)
    shots = np.bincount(y, weights=ds.counts[mask], minlength=dim)
    return table, shots


def _check_subsets(ds, subset, condition_on):
    subset = tuple(int(q) for q in subset)
    if not subset:
        raise ValidationError("subset must be non-empty")
    for q in subset + tuple(condition_on):
        if q < 0 or q >= ds.n_qubits:
            raise ValidationError(f"qubit {q} out of range")
    if len(set(subset)) != len(subset):
        raise ValidationError("subset has repeated qubits")
    if set(subset) & set(condition_on):
        raise ValidationError("subset and conditioning set must be disjoint")
    return subset


def conditional_counts(ds: MeasurementDataset, subset: Sequence[int], condition_on: Sequence[int] = (),
                       condition_state: str | None = None, reweighted: bool = False) -> ConditionalCounts:
    subset = _check_subsets(ds, subset, condition_on)
    mask, context = _selection(ds, condition_on, condition_state)
    weights = ds.unit_weights if reweighted else ds.counts.astype(float)
    table, shots = _tally(ds, subset, mask, weights)
    missing = [probly.index_to_bitstring(y, len(subset)) for y in np.nonzero(shots == 0)[0]]
    if missing:
        cells = [{"subset": list(subset), "state": m, "condition_on": list(condition_on),
                  "condition_state": context} for m in missing]
        raise CoverageError(
            f"no data for prepared states {missing} on qubits {list(subset)}"
            + ("" if context == "pooled" else f" with qubits {list(condition_on)} in state {context}"),
            cells)
    return ConditionalCounts(subset, table, context, tuple(condition_on))


def conditional_noise_matrix(ds: MeasurementDataset, subset: Sequence[int], condition_on: Sequence[int] = (),
                             condition_state: str | None = None, reweighted: bool = False) -> np.ndarray:
    """Column-normalized frequencies of measured X_S given prepared Y_S.

    With a conditioning set, only inputs whose bits on `condition_on` equal
    `condition_state` are used; otherwise every input is pooled.
    """
    return conditional_counts(ds, subset, condition_on, condition_state, reweighted).matrix()


def reweighted_marginals(ds: MeasurementDataset, subset: Sequence[int], condition_on: Sequence[int] = (),
                         condition_state: str | None = None) -> ConditionalCounts:
    """Counts on `subset` where each distinct prepared input carries total weight one.

    An input that was implemented several times (merged into one record with
    proportionally more shots) is down-weighted accordingly.
    """
    return conditional_counts(ds, subset, condition_on, condition_state, reweighted=True)


def correlation_coefficients(ds: MeasurementDataset, reweighted: bool = False) -> CorrelationTable:
    """Pairwise coefficients c[i, j]: half the 1->1 distance between qubit i's
    noise matrices when qubit j is prepared in 0 versus 1."""
    n = ds.n_qubits
    c = np.zeros((n, n))
    weights = ds.unit_weights if reweighted else ds.counts.astype(float)
    everything = np.ones(len(ds.counts), dtype=bool)
    missing = []
    min_shots = float("inf")
    for i, j in itertools.combinations(range(n), 2):
        table, shots = _tally(ds, (i, j), everything, weights)
        if np.any(shots == 0):
            missing += [{"subset": [i, j], "state": probly.index_to_bitstring(y, 2)}
                        for y in np.nonzero(shots == 0)[0]]
            continue
        min_shots = min(min_shots, float(shots.min()))
        t = table.reshape(2, 2, 2, 2)  # [x_i, x_j, y_i, y_j]
        on_i = t.sum(axis=1)  # [x_i, y_i, y_j]
        on_j = t.sum(axis=0)  # [x_j, y_i, y_j]
        lam_i = on_i / on_i.sum(axis=0, keepdims=True)
        lam_j = on_j / on_j.sum(axis=0, keepdims=True)
        c[i, j] = 0.5 * probly.norm_1to1(lam_i[:, :, 0] - lam_i[:, :, 1])
        c[j, i] = 0.5 * probly.norm_1to1(lam_j[:, 0, :] - lam_j[:, 1, :])
    if missing:
        raise CoverageError("dataset is not perfect for pairs of qubits", missing)
    return CorrelationTable(c, min_shots)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def infer_structure(ct, delta_cluster: float, delta_neighbor: float,
                    max_joint_size: int | None = None) -> tuple[CorrelationStructure, list[str]]:
    """Group qubits into clusters and neighborhoods from pairwise coefficients.

    A pair is clustered when either direction exceeds `delta_cluster`
    (clusters are closed transitively). Otherwise j becomes a neighbor of i
    when c[i, j] exceeds `delta_neighbor`. If a cluster plus its neighbors
    exceeds `max_joint_size`, the weakest neighbors are dropped first.
    Returns the structure and a list of human-readable notes.
    """
    c = ct.c if isinstance(ct, CorrelationTable) else np.asarray(ct, dtype=float)
    n = c.shape[0]
    if not 0 <= delta_neighbor <= delta_cluster:
        raise ValidationError("need 0 <= delta_neighbor <= delta_cluster")
    notes: list[str] = []
    uf = _UnionFind(n)
    neighbors = [set() for _ in range(n)]
    for i, j in itertools.combinations(range(n), 2):
        if max(c[i, j], c[j, i]) > delta_cluster:
            uf.union(i, j)
        else:
            if c[i, j] > delta_neighbor:
                neighbors[i].add(j)
            if c[j, i] > delta_neighbor:
                neighbors[j].add(i)
    groups: dict[int, list[int]] = {}
    for q in range(n):
        groups.setdefault(uf.find(q), []).append(q)
    clusters = sorted(groups.values())
    neighborhoods = []
    for cl in clusters:
        members = set(cl)
        nb = set().union(*(neighbors[q] for q in cl))
        inside = nb & members
        for q in sorted(inside):
            notes.append(f"qubit {q} is both a neighbor and a cluster-mate in cluster {cl}; neighbor link dropped")
        nb -= members
        if max_joint_size is not None:
            if len(cl) > max_joint_size:
                notes.append(f"cluster {cl} alone exceeds the joint size limit {max_joint_size}")
            strength = {q: max(c[i, q] for i in cl) for q in nb}
            while nb and len(cl) + len(nb) > max_joint_size:
                weakest = min(nb, key=lambda q: (strength[q], q))
                nb.remove(weakest)
                notes.append(f"dropped neighbor {weakest} of cluster {cl} (c = {strength[weakest]:.4g})")
        neighborhoods.append(sorted(nb))
    return CorrelationStructure(n, clusters, neighborhoods), notes


def fit_noise_model(ds: MeasurementDataset, structure: CorrelationStructure, max_joint_size: int | None = None,
                    reweighted: bool = False) -> NoiseModel:
    """Estimate every (cluster, neighbor-state) matrix from the data."""
    if structure.n_qubits != ds.n_qubits:
        raise ValidationError("structure and dataset disagree on the number of qubits")
    if max_joint_size is not None and structure.max_joint_size() > max_joint_size:
        raise ValidationError(
            f"a cluster with its neighbors spans {structure.max_joint_size()} qubits, "
            f"more than the limit {max_joint_size}")
    tables, missing = [], []
    for cl, nb in zip(structure.clusters, structure.neighborhoods):
        table = {}
        for e in range(2 ** len(nb)):
            key = probly.index_to_bitstring(e, len(nb))
            try:
                table[key] = conditional_noise_matrix(
                    ds, cl, nb, key if nb else None, reweighted=reweighted)
            except CoverageError as exc:
                missing.extend(exc.missing)
        tables.append(table)
    if missing:
        raise CoverageError(f"dataset lacks {len(missing)} prepared states needed by the structure", missing)
    return NoiseModel(structure, tables)


def statistical_floor(ct: CorrelationTable, p_err: float = 0.05) -> float:
    """Twice the TVD deviation expected from sampling for the least-sampled
    conditional column; thresholds below this mostly pick up noise."""
    from .mitigate import statistical_epsilon

    if not np.isfinite(ct.min_column_shots):
        return 0.0
    return 2 * statistical_epsilon(2, int(ct.min_column_shots), p_err, 1)
