"""Diagonal detector overlapping tomography (DDOT) circuit collections.

A circuit is a bitstring: '1' means an X gate before measurement on that
qubit, '0' means identity. A collection is (N, k)-perfect when every k-qubit
subset sees all 2^k local input states at least once.
"""
from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import probly
from .errors import ValidationError

_HEADER = re.compile(r"#\s*ddot\s+N=(\d+)\s+k=(\d+)\s*$")


@dataclass(frozen=True)
class DdotCollection:
    n_qubits: int
    circuits: tuple
    k: int | None = None

    def __post_init__(self):
        circuits = tuple(str(c) for c in self.circuits)
        object.__setattr__(self, "circuits", circuits)
        if self.n_qubits < 1:
            raise ValidationError("a collection needs at least one qubit")
        for c in circuits:
            if len(c) != self.n_qubits or set(c) - {"0", "1"}:
                raise ValidationError(f"circuit {c!r} is not a length-{self.n_qubits} bitstring")

    def __len__(self):
        return len(self.circuits)

    @cached_property
    def bits(self) -> np.ndarray:
        return probly.bits_matrix(list(self.circuits), self.n_qubits)

    def extended(self, more: Sequence[str]) -> "DdotCollection":
        return DdotCollection(self.n_qubits, self.circuits + tuple(more), self.k)

    def to_text(self) -> str:
        lines = [f"# ddot N={self.n_qubits} k={self.k or 0}"]
        lines.extend(self.circuits)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DdotCollection":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValidationError("empty collection file")
        match = _HEADER.match(lines[0])
        if not match:
            raise ValidationError("collection file must start with '# ddot N=<n> k=<k>'")
        n, k = int(match.group(1)), int(match.group(2))
        body = [ln for ln in lines[1:] if not ln.startswith("#")]
        return cls(n, tuple(body), k or None)

    def to_dict(self) -> dict:
        return {"schema": "qrem.ddot/1", "n_qubits": self.n_qubits, "k": self.k,
                "circuits": list(self.circuits)}

    @classmethod
    def from_dict(cls, data) -> "DdotCollection":
        try:
            return cls(int(data["n_qubits"]), tuple(data["circuits"]), data.get("k"))
        except KeyError as exc:
            raise ValidationError(f"malformed collection: missing {exc}") from exc


@dataclass(frozen=True)
class BalanceReport:
    k: int
    max_tvd_from_uniform: float
    appearance_count_std: float
    missing_terms: int
    missing: list = field(default_factory=list, repr=False)

    @property
    def perfect(self) -> bool:
        return self.missing_terms == 0

    def to_dict(self) -> dict:
        return {
            "schema": "qrem.balance_report/1",
            "k": self.k,
            "perfect": self.perfect,
            "max_tvd_from_uniform": self.max_tvd_from_uniform,
            "appearance_count_std": self.appearance_count_std,
            "missing_terms": self.missing_terms,
            "missing": [{"subset": list(s), "state": st} for s, st in self.missing],
        }


def _check_k(n: int, k: int):
    if k < 1 or k > n:
        raise ValidationError(f"need 1 <= k <= N, got k={k}, N={n}")


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _constant_circuits(n: int) -> list[str]:
    return ["0" * n, "1" * n]


def _subsets(n: int, k: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(n), k)), dtype=np.int64).reshape(-1, k)


def appearance_counts(bits: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Count how often each k-subset saw each local state.

    Returns (subsets, counts) with counts[m, state] for the m-th subset in
    lexicographic order.
    """
    n = bits.shape[1]
    subsets = _subsets(n, k)
    dim = 2 ** k
    counts = np.zeros((len(subsets), dim), dtype=np.int64)
    if bits.shape[0] == 0:
        return subsets, counts
    weights = 1 << np.arange(k - 1, -1, -1)
    chunk = max(1, 4_000_000 // max(1, bits.shape[0] * k))
    b = bits.astype(np.int64)
    for start in range(0, len(subsets), chunk):
        sub = subsets[start:start + chunk]
        idx = b[:, sub] @ weights  # (circuits, chunk)
        flat = idx + (np.arange(len(sub)) * dim)[None, :]
        counts[start:start + len(sub)] = np.bincount(
            flat.ravel(), minlength=len(sub) * dim).reshape(len(sub), dim)
    return subsets, counts


def _missing_cells(subsets, counts, k):
    rows, states = np.nonzero(counts == 0)
    return [(tuple(int(q) for q in subsets[r]), probly.index_to_bitstring(int(s), k))
            for r, s in zip(rows, states)]


def is_perfect(c: DdotCollection, k: int) -> tuple[bool, list]:
    _check_k(c.n_qubits, k)
    subsets, counts = appearance_counts(c.bits, k)
    missing = _missing_cells(subsets, counts, k)
    return not missing, missing


def _grow_until_perfect(n, k, circuits, rng, max_circuits):
    bits = probly.bits_matrix(circuits, n)
    subsets, counts = appearance_counts(bits, k)
    seen = counts > 0
    weights = 1 << np.arange(k - 1, -1, -1)
    rows = np.arange(len(subsets))
    while not seen.all():
        if len(circuits) >= max_circuits:
            raise ValidationError(f"collection still not perfect after {max_circuits} circuits")
        new = rng.integers(0, 2, size=n, dtype=np.int64)
        seen[rows, new[subsets] @ weights] = True
        circuits.append("".join(map(str, new)))
    return circuits


def generate_random_circuits(n: int, k: int, s: int, seed=None, until_perfect: bool = False,
                             max_circuits: int = 1_000_000) -> DdotCollection:
    """Both constant circuits followed by `s` uniformly random ones.

    With `until_perfect`, random circuits keep being appended until the
    collection is (n, k)-perfect.
    """
    _check_k(n, k)
    if s < 0:
        raise ValidationError("s must be non-negative")
    rng = _rng(seed)
    random_bits = rng.integers(0, 2, size=(s, n), dtype=np.uint8)
    circuits = _constant_circuits(n) + ["".join(map(str, row)) for row in random_bits]
    if until_perfect:
        circuits = _grow_until_perfect(n, k, circuits, rng, max_circuits)
    return DdotCollection(n, tuple(circuits), k)


def circuits_from_hashes(n: int, k: int, hashes: Sequence[Sequence[int]]) -> DdotCollection:
    """Circuits generated by hash functions f: [n] -> [k].

    For each f and each non-constant k-bit pattern X, the circuit has bit
    X[f(j)] on qubit j. The two constant circuits come first.
    """
    _check_k(n, k)
    circuits = _constant_circuits(n)
    patterns = [probly.index_to_bitstring(x, k) for x in range(1, 2 ** k - 1)]
    for f in hashes:
        f = [int(v) for v in f]
        if len(f) != n or any(v < 0 or v >= k for v in f):
            raise ValidationError(f"hash {f} is not a map from {n} qubits to {k} labels")
        for x in patterns:
            circuits.append("".join(x[v] for v in f))
    return DdotCollection(n, tuple(circuits), k)


def generate_hash_circuits(n: int, k: int, n_hashes: int, seed=None, until_perfect: bool = False,
                           max_hashes: int = 100_000) -> DdotCollection:
    _check_k(n, k)
    if n_hashes < 0:
        raise ValidationError("number of hash functions must be non-negative")
    rng = _rng(seed)
    hashes = [rng.integers(0, k, size=n) for _ in range(n_hashes)]
    col = circuits_from_hashes(n, k, hashes)
    if until_perfect:
        while not is_perfect(col, k)[0]:
            if len(hashes) >= max_hashes:
                raise ValidationError(f"collection still not perfect after {max_hashes} hash functions")
            hashes.append(rng.integers(0, k, size=n))
            col = circuits_from_hashes(n, k, hashes)
    return col


def circuits_bound(n: int, k: int, delta: float, method: str = "random") -> float:
    """Number of circuits after which a random collection is perfect with
    probability at least 1 - delta (natural logarithms)."""
    _check_k(n, k)
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    if method == "random":
        return 2 ** k * (k * math.log(2 * n) + math.log(1 / delta))
    if method == "hash":
        if k == 1:
            return 2.0
        # Stirling lower bound on the probability that a random hash is injective on a k-subset
        p_injective = math.sqrt(2 * math.pi * k) * math.exp(-k)
        n_hashes = (math.log(math.comb(n, k)) + math.log(1 / delta)) / -math.log1p(-p_injective)
        return 2 + (2 ** k - 2) * n_hashes
    raise ValidationError(f"unknown method {method!r}; use 'random' or 'hash'")


def balance_report(c: DdotCollection, k: int) -> BalanceReport:
    _check_k(c.n_qubits, k)
    subsets, counts = appearance_counts(c.bits, k)
    total = max(len(c), 1)
    tvds = 0.5 * np.abs(counts / total - 1.0 / 2 ** k).sum(axis=1)
    missing = _missing_cells(subsets, counts, k)
    return BalanceReport(
        k=k,
        max_tvd_from_uniform=float(tvds.max()),
        appearance_count_std=float(counts.std()),
        missing_terms=len(missing),
        missing=missing,
    )


def heuristic_balance(c: DdotCollection, k: int, rounds: int, rng=None) -> DdotCollection:
    """Append `rounds` circuits, each targeting the rarest local states.

    Each round picks floor(N/k) non-overlapping (subset, state) cells with
    the fewest appearances so far (ties: lowest subset index, then lowest
    state index), writes those states into a new circuit and fills the
    remaining qubits at random.
    """
    n = c.n_qubits
    _check_k(n, k)
    if rounds < 0:
        raise ValidationError("rounds must be non-negative")
    rng = _rng(rng)
    subsets, counts = appearance_counts(c.bits, k)
    weights = 1 << np.arange(k - 1, -1, -1)
    rows = np.arange(len(subsets))
    dim = 2 ** k
    targets = n // k
    new_circuits = []
    for _ in range(rounds):
        order = np.argsort(counts.ravel(), kind="stable")
        circuit = np.full(n, -1, dtype=np.int64)
        picked = 0
        for cell in order:
            sub = subsets[cell // dim]
            if np.any(circuit[sub] >= 0):
                continue
            circuit[sub] = probly.index_bits(np.array([cell % dim]), k)[0]
            picked += 1
            if picked == targets:
                break
        free = circuit < 0
        circuit[free] = rng.integers(0, 2, size=int(free.sum()))
        counts[rows, circuit[subsets] @ weights] += 1
        new_circuits.append("".join(map(str, circuit)))
    return DdotCollection(n, c.circuits + tuple(new_circuits), c.k or k)


def save_text(path, c: DdotCollection):
    from .io import atomic_write_text
    atomic_write_text(path, c.to_text())


def load(path) -> DdotCollection:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return DdotCollection.from_dict(json.loads(text))
    return DdotCollection.from_text(text)
