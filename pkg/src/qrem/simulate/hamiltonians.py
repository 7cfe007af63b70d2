"""Diagonal (classical) Hamiltonians built from local terms."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .. import probly
from ..errors import ValidationError

MAX_EXHAUSTIVE_QUBITS = 24
Z = np.array([1.0, -1.0])
ZZ = np.array([1.0, -1.0, -1.0, 1.0])


@dataclass(frozen=True)
class Term:
    support: tuple
    diagonal: np.ndarray
    label: str = ""

    def __post_init__(self):
        support = tuple(int(q) for q in self.support)
        diag = np.asarray(self.diagonal, dtype=float).copy()
        diag.setflags(write=False)
        if list(support) != sorted(set(support)) or not support:
            raise ValidationError(f"term support {support} must be non-empty, ascending and unique")
        if diag.shape != (2 ** len(support),):
            raise ValidationError(f"term on {support} needs a diagonal of length {2 ** len(support)}")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "diagonal", diag)

    @property
    def norm(self) -> float:
        return float(np.abs(self.diagonal).max())


class DiagonalHamiltonian:
    def __init__(self, n_qubits: int, terms, metadata: dict | None = None):
        self.n_qubits = int(n_qubits)
        self.terms = tuple(t if isinstance(t, Term) else Term(*t) for t in terms)
        for t in self.terms:
            if t.support[-1] >= self.n_qubits:
                raise ValidationError(f"term {t.label or t.support} lies outside {self.n_qubits} qubits")
        self.metadata = dict(metadata or {})

    def __len__(self):
        return len(self.terms)

    def term_values(self, index: int) -> np.ndarray:
        """Values of one term on every global basis state."""
        t = self.terms[index]
        n = self.n_qubits
        shape = [2 if q in t.support else 1 for q in range(n)]
        return np.broadcast_to(t.diagonal.reshape(shape), (2,) * n).reshape(-1)

    @cached_property
    def energies(self) -> np.ndarray:
        if self.n_qubits > MAX_EXHAUSTIVE_QUBITS:
            raise ValidationError(f"dense energies limited to {MAX_EXHAUSTIVE_QUBITS} qubits")
        out = np.zeros(2 ** self.n_qubits)
        for i in range(len(self.terms)):
            out += self.term_values(i)
        out.setflags(write=False)
        return out

    def energy(self, bitstring: str) -> float:
        if len(bitstring) != self.n_qubits:
            raise ValidationError(f"bitstring must have length {self.n_qubits}")
        total = 0.0
        for t in self.terms:
            total += t.diagonal[probly.bitstring_to_index("".join(bitstring[q] for q in t.support))]
        return float(total)

    def scaled(self, factor: float) -> "DiagonalHamiltonian":
        return DiagonalHamiltonian(
            self.n_qubits, [Term(t.support, factor * t.diagonal, t.label) for t in self.terms], self.metadata)

    def to_dict(self) -> dict:
        return {
            "schema": "qrem.hamiltonian/1",
            "n_qubits": self.n_qubits,
            "terms": [{"support": list(t.support), "diagonal": t.diagonal.tolist(), "label": t.label}
                      for t in self.terms],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data) -> "DiagonalHamiltonian":
        try:
            terms = [Term(t["support"], t["diagonal"], t.get("label", "")) for t in data["terms"]]
            return cls(int(data["n_qubits"]), terms, data.get("metadata"))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed Hamiltonian: {exc}") from exc

    @classmethod
    def load(cls, path) -> "DiagonalHamiltonian":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _field(q: int, h: float) -> Term:
    return Term((q,), h * Z, f"Z{q}")


def _coupling(i: int, j: int, w: float) -> Term:
    return Term((i, j), w * ZZ, f"Z{i}Z{j}")


def ising(n: int, fields: dict, couplings: dict, metadata: dict | None = None) -> DiagonalHamiltonian:
    """Sum of h_i Z_i and J_ij Z_i Z_j; bit 0 is the +1 eigenstate of Z."""
    terms = [_field(q, h) for q, h in sorted(fields.items()) if h != 0]
    terms += [_coupling(i, j, w) for (i, j), w in sorted(couplings.items()) if w != 0]
    return DiagonalHamiltonian(n, terms, metadata)


def random_max2sat(n: int, clause_density: float = 4.0, seed=None) -> DiagonalHamiltonian:
    """Random 2-literal clauses as an Ising Hamiltonian whose energy counts
    violated clauses up to a constant.

    A literal on variable i with sign s (+1 plain, -1 negated) is false with
    indicator (1 + s z_i)/2, so a violated clause contributes
    (1 + s_i z_i)(1 + s_j z_j)/4. The constant m/4 is left out of the terms;
    satisfied clauses = metadata["satisfied_offset"] - energy.
    """
    if n < 2:
        raise ValidationError("MAX-2-SAT needs at least two variables")
    rng = np.random.default_rng(seed)
    m = int(np.floor(clause_density * n))
    fields: dict = {}
    couplings: dict = {}
    clauses = []
    for _ in range(m):
        i, j = sorted(int(v) for v in rng.choice(n, size=2, replace=False))
        si, sj = (int(v) for v in rng.choice([-1, 1], size=2))
        clauses.append([[i, si], [j, sj]])
        fields[i] = fields.get(i, 0.0) + si / 4
        fields[j] = fields.get(j, 0.0) + sj / 4
        couplings[(i, j)] = couplings.get((i, j), 0.0) + si * sj / 4
    meta = {"family": "max2sat", "n_clauses": m, "satisfied_offset": 0.75 * m,
            "clauses": clauses}
    return ising(n, fields, couplings, meta)


def satisfied_clauses(h: DiagonalHamiltonian, energy: float) -> float:
    return h.metadata["satisfied_offset"] - energy


def random_fully_connected(n: int, seed=None) -> DiagonalHamiltonian:
    """All-to-all couplings and local fields drawn uniformly from [-1, 1]."""
    if n < 1:
        raise ValidationError("need at least one qubit")
    rng = np.random.default_rng(seed)
    couplings = {(i, j): float(rng.uniform(-1, 1)) for i, j in itertools.combinations(range(n), 2)}
    fields = {q: float(rng.uniform(-1, 1)) for q in range(n)}
    terms = [_coupling(i, j, w) for (i, j), w in couplings.items()] + [_field(q, h) for q, h in fields.items()]
    return DiagonalHamiltonian(n, terms, {"family": "fully_connected"})


def lattice_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    edges = []
    for r in range(rows):
        for c in range(cols):
            q = r * cols + c
            if c + 1 < cols:
                edges.append((q, q + 1))
            if r + 1 < rows:
                edges.append((q, q + cols))
    return sorted(edges)


def sk_2d(side: int, seed=None, cols: int | None = None) -> DiagonalHamiltonian:
    """Gaussian ZZ couplings on the nearest-neighbor edges of a side x cols
    grid (square by default), qubit index = row * cols + column."""
    cols = side if cols is None else cols
    if side < 2 or cols < 1:
        raise ValidationError("lattice needs side >= 2")
    rng = np.random.default_rng(seed)
    edges = lattice_edges(side, cols)
    weights = rng.standard_normal(len(edges))
    terms = [_coupling(i, j, float(w)) for (i, j), w in zip(edges, weights)]
    return DiagonalHamiltonian(side * cols, terms, {"family": "sk2d", "rows": side, "cols": cols})


def ground_state(h: DiagonalHamiltonian, tol: float = 1e-12) -> tuple[str, float]:
    """Exhaustive minimum; ties resolve to the lexicographically smallest bitstring."""
    if h.n_qubits > MAX_EXHAUSTIVE_QUBITS:
        raise ValidationError(f"exhaustive search limited to {MAX_EXHAUSTIVE_QUBITS} qubits")
    e = h.energies
    best = int(np.nonzero(e <= e.min() + tol)[0][0])
    return probly.index_to_bitstring(best, h.n_qubits), float(e[best])
