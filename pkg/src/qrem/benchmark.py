"""Simulated benchmarks: ground-state energy estimation and staged QAOA runs
under a correlated readout-noise model."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import probly
from .errors import ValidationError
from .mitigate import EnergyEstimator, combined_energy_bound
from .noise_model import CorrelationStructure, NoiseModel, full_matrix
from .simulate.hamiltonians import (DiagonalHamiltonian, ground_state, random_fully_connected,
                                    random_max2sat, sk_2d)
from .simulate.spsa import SpsaConfig, spsa_optimize
from .simulate.statevector import qaoa_state, sample_counts


def thread_limit() -> int:
    """Worker count: QREM_THREADS if set, otherwise the CPU count."""
    raw = os.environ.get("QREM_THREADS")
    cpus = os.cpu_count() or 1
    if raw is None:
        return cpus
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValidationError(f"QREM_THREADS must be an integer, got {raw!r}") from exc
    return max(1, min(value, cpus))


def parallel_map(fn, items, threads: int | None = None) -> list:
    items = list(items)
    threads = thread_limit() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def _readout(p01: float, p10: float) -> np.ndarray:
    """Single-qubit matrix with P(1|0) = p01 and P(0|1) = p10."""
    return np.array([[1 - p01, p10], [p01, 1 - p10]])


def ibm_like_model(n: int = 8, seed=None) -> NoiseModel:
    """Synthetic device-like model: single-qubit error rates of 1-5 %, one
    two-qubit cluster {0, 1} and two neighbor links (1 -> 2, n-1 -> n-2).

    Inside the cluster, qubit 0's error grows when qubit 1 is prepared in 1
    and both bits occasionally flip together. A neighbor in state 1 adds
    about 2 % to its target's error rates.
    """
    if n < 4:
        raise ValidationError("the device-like model needs at least 4 qubits")
    rng = np.random.default_rng(seed)
    rates = [(rng.uniform(0.01, 0.03), rng.uniform(0.02, 0.05)) for _ in range(n)]

    m0 = [_readout(*rates[0]), _readout(rates[0][0] + 0.05, rates[0][1] + 0.05)]
    m1 = _readout(*rates[1])
    pair = np.zeros((4, 4))
    for y0 in range(2):
        for y1 in range(2):
            col = np.kron(m0[y1][:, y0], m1[:, y1])
            joint = 0.01  # simultaneous flip of both bits
            src = 2 * y0 + y1
            col = col * (1 - joint)
            col[3 - src] += joint
            pair[:, src] = col

    clusters = [(0, 1)] + [(q,) for q in range(2, n)]
    neighborhoods = [()] + [()] * (n - 2)
    links = {2: 1, n - 2: n - 1}
    tables = [{"": pair}]
    for q in range(2, n):
        base = _readout(*rates[q])
        if q in links:
            bump = rng.uniform(0.015, 0.025)
            neighborhoods[q - 1] = (links[q],)
            tables.append({"0": base, "1": _readout(rates[q][0] + bump, rates[q][1] + bump)})
        else:
            tables.append({"": base})
    return NoiseModel(CorrelationStructure(n, clusters, neighborhoods), tables)


def sample_dataset(model: NoiseModel, circuits, shots: int, seed=None):
    """Simulate a DDOT experiment: `shots` noisy readouts per listed circuit.

    Repeated circuits accumulate into one record, as an SDK export would.
    """
    from .characterize import MeasurementDataset
    from .noise_model import sample_noisy_indices

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = model.n_qubits
    circuits = getattr(circuits, "circuits", circuits)
    records: dict[str, dict[str, int]] = {}
    dense = full_matrix(model) if n <= 12 else None
    for circuit in circuits:
        y = probly.bitstring_to_index(circuit)
        if dense is not None:
            col = np.clip(dense[:, y], 0, None)
            counts = rng.multinomial(shots, col / col.sum())
        else:
            counts = np.bincount(sample_noisy_indices(model, y, shots, rng), minlength=2 ** n)
        row = records.setdefault(circuit, {})
        for x in np.nonzero(counts)[0]:
            key = probly.index_to_bitstring(int(x), n)
            row[key] = row.get(key, 0) + int(counts[x])
    return MeasurementDataset(n, records)


def make_hamiltonian(family: str, n: int, seed) -> DiagonalHamiltonian:
    if family == "max2sat":
        return random_max2sat(n, 4.0, seed)
    if family == "fully_connected":
        return random_fully_connected(n, seed)
    if family == "sk2d":
        rows = int(np.floor(np.sqrt(n)))
        while n % rows:
            rows -= 1
        if rows < 2:
            raise ValidationError(f"cannot lay out {n} qubits on a grid with at least two rows")
        return sk_2d(rows, seed, cols=n // rows)
    raise ValidationError(f"unknown Hamiltonian family {family!r}")


@dataclass
class GroundStateResult:
    instance_id: int
    ground_state: str
    true_energy: float
    raw_estimate: float
    mitigated_estimate: float
    bound: float

    @property
    def n_qubits(self) -> int:
        return len(self.ground_state)

    @property
    def raw_error(self) -> float:
        return abs(self.raw_estimate - self.true_energy) / self.n_qubits

    @property
    def mitigated_error(self) -> float:
        return abs(self.mitigated_estimate - self.true_energy) / self.n_qubits


GROUND_STATE_COLUMNS = ["instance_id", "true_energy", "raw_estimate", "mitigated_estimate", "bound",
                        "raw_error_per_qubit", "mitigated_error_per_qubit"]


def ground_state_instance(args) -> GroundStateResult:
    instance_id, family, model, shots, seed, p_err = args
    hseed, sseed = np.random.SeedSequence([seed, instance_id]).spawn(2)
    h = make_hamiltonian(family, model.n_qubits, np.random.default_rng(hseed))
    bits, energy = ground_state(h)
    column = full_matrix(model)[:, probly.bitstring_to_index(bits)]
    counts = np.random.default_rng(sseed).multinomial(shots, np.clip(column, 0, None) / column.sum())
    est = EnergyEstimator(h, model)
    return GroundStateResult(
        instance_id, bits, energy, est.raw(counts), est.mitigated(counts),
        combined_energy_bound(h, model, shots, p_err))


def ground_state_benchmark(model: NoiseModel, instances: int, shots: int, seed: int = 0,
                           family: str = "max2sat", p_err: float = 0.05,
                           threads: int | None = None) -> list[GroundStateResult]:
    """Prepare each instance's classical ground state, sample noisy counts and
    compare raw and mitigated energy estimates with the true energy."""
    jobs = [(i, family, model, shots, seed, p_err) for i in range(instances)]
    return parallel_map(ground_state_instance, jobs, threads)


QAOA_MODES = ("noiseless", "noisy", "mitigated")


@dataclass
class QaoaRun:
    mode: str
    layers: int
    estimate: float
    exact_energy: float
    angles: np.ndarray


def staged_qaoa(h: DiagonalHamiltonian, layers: int, mode: str, model: NoiseModel | None, shots: int = 10_000,
                seed=None, config: SpsaConfig | None = None, iterations: int = 800,
                layers_per_stage: int = 3, restarts: int = 2, on_stage=None) -> list[QaoaRun]:
    """Grow a QAOA circuit a few layers at a time, optimizing only the new
    layers' angles with SPSA on sampled energy estimates.

    `mode` picks the estimator: noiseless sampling, noisy sampling, or noisy
    sampling followed by mitigation. Each stage keeps the best of `restarts`
    SPSA runs (judged by their final estimate) and the gains decay per stage.
    Returns one record per completed stage.
    """
    if mode not in QAOA_MODES:
        raise ValidationError(f"mode must be one of {QAOA_MODES}")
    if layers < 1 or layers % layers_per_stage:
        raise ValidationError(f"layers must be a positive multiple of {layers_per_stage}")
    if mode != "noiseless" and model is None:
        raise ValidationError("noisy modes need a noise model")
    config = config or SpsaConfig()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noise = None if mode == "noiseless" else model
    estimator = EnergyEstimator(h, model if mode == "mitigated" else None)
    estimate = estimator.mitigated if mode == "mitigated" else estimator.raw
    dim = 2 * layers_per_stage
    psi = None
    angles = np.zeros((0, 2))
    runs = []
    for stage in range(layers // layers_per_stage):
        stage_cfg = config.for_stage(stage)
        start = psi

        def objective(x, start=start):
            return estimate(sample_counts(qaoa_state(h, x, initial=start), shots, noise, rng))

        best = None
        for _ in range(restarts):
            x0 = rng.uniform(0.0, 0.5, size=dim)
            result = spsa_optimize(objective, dim, stage_cfg, 2 * iterations, rng, x0=x0)
            if best is None or result.fun < best.fun:
                best = result
        psi = qaoa_state(h, best.x, initial=start)
        angles = np.vstack([angles, best.x.reshape(-1, 2)])
        exact = float(np.abs(psi) ** 2 @ h.energies)
        runs.append(QaoaRun(mode, len(angles), best.fun, exact, angles.copy()))
        if on_stage is not None:
            on_stage(runs[-1])
    return runs


QAOA_COLUMNS = ["instance_id", "family", "mode", "layers", "ground_energy", "estimate", "exact_energy",
                "estimate_error_per_qubit"]


def qaoa_instance(args) -> list[list]:
    instance_id, family, n, layers, model, shots, seed, iterations, restarts = args
    hseed, *mode_seeds = np.random.SeedSequence([seed, instance_id]).spawn(1 + len(QAOA_MODES))
    h = make_hamiltonian(family, n, np.random.default_rng(hseed))
    _, e0 = ground_state(h)
    rows = []
    for mode, ms in zip(QAOA_MODES, mode_seeds):
        runs = staged_qaoa(h, layers, mode, model, shots, np.random.default_rng(ms),
                           iterations=iterations, restarts=restarts)
        for r in runs:
            rows.append([instance_id, family, mode, r.layers, e0, r.estimate, r.exact_energy,
                         abs(r.estimate - e0) / n])
    return rows


def qaoa_benchmark(family: str, n: int, layers: int, instances: int, model: NoiseModel, shots: int = 10_000,
                   seed: int = 0, iterations: int = 800, restarts: int = 2,
                   threads: int | None = None) -> list[list]:
    jobs = [(i, family, n, layers, model, shots, seed, iterations, restarts) for i in range(instances)]
    return [row for rows in parallel_map(qaoa_instance, jobs, threads) for row in rows]
