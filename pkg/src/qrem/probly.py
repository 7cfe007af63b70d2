"""Probability vectors, stochastic matrices and bitstring indexing.

Convention used everywhere in the package: qubit 0 is the leftmost character
of a bitstring, and a vector over a qubit subset is indexed by the big-endian
integer of the subset's bits taken in ascending qubit order.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

TOL_EXACT = 1e-10
TOL_ARITH = 1e-8


def bitstring_to_index(bits: str) -> int:
    if not bits:
        return 0
    if set(bits) - {"0", "1"}:
        raise ValidationError(f"not a bitstring: {bits!r}")
    return int(bits, 2)


def index_to_bitstring(index: int, n: int) -> str:
    return format(index, f"0{n}b") if n else ""


def bits_matrix(bitstrings: Sequence[str], n: int | None = None) -> np.ndarray:
    """Stack bitstrings into a (count, n) uint8 array."""
    if len(bitstrings) == 0:
        return np.zeros((0, n or 0), dtype=np.uint8)
    width = len(bitstrings[0]) if n is None else n
    for b in bitstrings:
        if len(b) != width:
            raise ValidationError(f"bitstring {b!r} does not have length {width}")
    raw = np.frombuffer("".join(bitstrings).encode("ascii"), dtype=np.uint8)
    out = raw.reshape(len(bitstrings), width) - ord("0")
    if out.size and out.max() > 1:
        raise ValidationError("bitstrings may only contain '0' and '1'")
    return out


def index_bits(indices: np.ndarray, n: int) -> np.ndarray:
    """Inverse of the big-endian indexing: (m,) ints -> (m, n) bits."""
    shifts = np.arange(n - 1, -1, -1)
    return ((np.asarray(indices)[:, None] >> shifts) & 1).astype(np.uint8)


def subset_index(bits: np.ndarray, subset: Sequence[int]) -> np.ndarray:
    """Local big-endian index of `subset` for every row of a bit matrix."""
    subset = list(subset)
    if not subset:
        return np.zeros(bits.shape[0], dtype=np.int64)
    weights = 1 << np.arange(len(subset) - 1, -1, -1)
    return bits[:, subset].astype(np.int64) @ weights


def check_distribution(p, tol: float = TOL_EXACT) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError("a distribution must be a non-empty vector")
    if np.any(p < -tol):
        raise ValidationError("distribution has negative entries")
    if abs(p.sum() - 1.0) > tol:
        raise ValidationError(f"distribution sums to {p.sum()!r}, not 1")
    return p


def check_stochastic(m, tol: float = TOL_EXACT) -> np.ndarray:
    """Validate a left-stochastic matrix (columns are conditional distributions)."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValidationError(f"expected a non-empty square matrix, got shape {m.shape}")
    if np.any(m < -tol) or np.any(m > 1 + tol):
        raise ValidationError("stochastic matrix entries must lie in [0, 1]")
    sums = m.sum(axis=0)
    if np.any(np.abs(sums - 1.0) > tol):
        raise ValidationError(f"column sums deviate from 1 (worst {np.abs(sums - 1).max():.3g})")
    return m


def tvd(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValidationError(f"length mismatch: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def norm_1to1(a) -> float:
    """Operator norm induced by the L1 norm: the largest absolute column sum."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        raise ValidationError("empty matrix")
    return float(np.abs(a).sum(axis=0).max())


def project_to_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValidationError("cannot project non-finite values")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ranks = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ranks > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def marginalize(p, over: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Sum out every qubit of `over` that is not in `keep`.

    `p` is indexed by the qubits `over` (ascending); the result is indexed by
    `keep` sorted ascending.
    """
    over = list(over)
    keep = sorted(set(keep))
    if list(over) != sorted(over) or len(set(over)) != len(over):
        raise ValidationError("the qubit list of a distribution must be ascending and unique")
    missing = set(keep) - set(over)
    if missing:
        raise ValidationError(f"qubits {sorted(missing)} are not part of the distribution")
    p = np.asarray(p, dtype=float)
    if p.size != 2 ** len(over):
        raise ValidationError(f"vector of length {p.size} does not match {len(over)} qubits")
    drop = tuple(i for i, q in enumerate(over) if q not in keep)
    if not drop:
        return p.copy()
    return p.reshape((2,) * len(over)).sum(axis=drop).reshape(-1)


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1))
    for m in mats:
        out = np.kron(out, m)
    return out
