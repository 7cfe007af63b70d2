"""Dense statevector evolution for QAOA, measurement sampling and exact moments."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import probly
from ..errors import ValidationError
from ..noise_model import NoiseModel, full_matrix, sample_noisy_indices
from .hamiltonians import DiagonalHamiltonian

# below this size noisy sampling pushes the exact outcome distribution through
# the dense transfer matrix; above it shots are routed cluster by cluster
DENSE_TRANSFER_QUBITS = 12


def plus_state(n: int) -> np.ndarray:
    return np.full(2 ** n, 2 ** (-n / 2), dtype=complex)


def apply_mixer(psi: np.ndarray, n: int, alpha: float) -> np.ndarray:
    """exp(-i alpha sum_k X_k), one qubit at a time."""
    c, s = np.cos(alpha), -1j * np.sin(alpha)
    out = psi.copy()
    for q in range(n):
        view = out.reshape(2 ** q, 2, 2 ** (n - q - 1))
        a0 = view[:, 0, :].copy()
        a1 = view[:, 1, :]
        view[:, 0, :] = c * a0 + s * a1
        view[:, 1, :] = s * a0 + c * a1
    return out


def _pairs(angles) -> np.ndarray:
    arr = np.asarray(angles, dtype=float)
    if arr.ndim == 1:
        if arr.size % 2:
            raise ValidationError("flat angle vectors must hold (beta, alpha) pairs")
        arr = arr.reshape(-1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError("angles must be a sequence of (beta, alpha) pairs")
    return arr


def qaoa_state(h: DiagonalHamiltonian, angles: Sequence, initial: np.ndarray | None = None) -> np.ndarray:
    """Apply layers exp(-i alpha H_D) exp(-i beta H) to |+...+> (or `initial`)."""
    n = h.n_qubits
    psi = plus_state(n) if initial is None else np.asarray(initial, dtype=complex).copy()
    energies = h.energies
    for beta, alpha in _pairs(angles):
        psi = psi * np.exp(-1j * beta * energies)
        psi = apply_mixer(psi, n, alpha)
    return psi


def probabilities(psi: np.ndarray) -> np.ndarray:
    p = np.abs(psi) ** 2
    return p / p.sum()


def _n_qubits(psi) -> int:
    n = int(round(np.log2(len(psi))))
    if 2 ** n != len(psi):
        raise ValidationError("statevector length must be a power of two")
    return n


def sample_counts(psi: np.ndarray, shots: int, noise: NoiseModel | None = None, rng=None) -> np.ndarray:
    """Outcome counts as a dense vector over the 2^N basis states.

    Ideal outcomes follow |amplitude|^2; with a noise model every shot is
    then passed through the readout channel. For small registers the two
    stages are folded into one multinomial draw from the noisy distribution,
    which has the same law as shot-by-shot sampling.
    """
    if shots < 1:
        raise ValidationError("need at least one shot")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    n = _n_qubits(psi)
    p = probabilities(psi)
    if noise is None:
        return rng.multinomial(shots, p)
    if noise.n_qubits != n:
        raise ValidationError("noise model and state disagree on the number of qubits")
    if n <= DENSE_TRANSFER_QUBITS:
        q = full_matrix(noise) @ p
        return rng.multinomial(shots, np.clip(q, 0, None) / q.sum())
    ideal = rng.multinomial(shots, p)
    out = np.zeros(2 ** n, dtype=np.int64)
    for y in np.nonzero(ideal)[0]:
        np.add.at(out, sample_noisy_indices(noise, int(y), int(ideal[y]), rng), 1)
    return out


def sample_measurements(psi: np.ndarray, shots: int, noise: NoiseModel | None = None, rng=None) -> dict:
    counts = sample_counts(psi, shots, noise, rng)
    n = _n_qubits(psi)
    return {probly.index_to_bitstring(int(i), n): int(counts[i]) for i in np.nonzero(counts)[0]}


def covariance(h: DiagonalHamiltonian, psi: np.ndarray, a: int, b: int) -> float:
    p = probabilities(psi)
    va, vb = h.term_values(a), h.term_values(b)
    return float(p @ (va * vb) - (p @ va) * (p @ vb))


def hamiltonian_variance(h: DiagonalHamiltonian, psi: np.ndarray) -> float:
    """Sum of all pairwise term covariances, i.e. Var(H) on the state."""
    p = probabilities(psi)
    values = np.stack([h.term_values(i) for i in range(len(h))])
    centered = values - (values @ p)[:, None]
    cov = (centered * p) @ centered.T
    return float(cov.sum())


def reduced_density_matrix(psi: np.ndarray, subset: Sequence[int]) -> np.ndarray:
    n = _n_qubits(psi)
    subset = sorted(subset)
    t = np.moveaxis(np.asarray(psi).reshape((2,) * n), subset, range(len(subset)))
    m = t.reshape(2 ** len(subset), -1)
    return m @ m.conj().T


def haar_state(n: int, rng) -> np.ndarray:
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    v = rng.standard_normal(2 ** n) + 1j * rng.standard_normal(2 ** n)
    return v / np.linalg.norm(v)
