"""Command-line interface.

Exit codes: 0 success, 1 invalid input or unmet request, 2 insufficient data
coverage, 3 singular noise model.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import ddot, io
from .benchmark import (GROUND_STATE_COLUMNS, QAOA_COLUMNS, ground_state_benchmark, ibm_like_model,
                        make_hamiltonian, qaoa_benchmark, sample_dataset)
from .characterize import (MeasurementDataset, correlation_coefficients, fit_noise_model, infer_structure,
                           statistical_floor)
from .errors import QremError, ValidationError
from .mitigate import mitigate_counts
from .noise_model import NoiseModel
from .simulate.hamiltonians import DiagonalHamiltonian


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _warn(msg: str):
    print(f"warning: {msg}", file=sys.stderr)


def _load_model(path) -> NoiseModel:
    return NoiseModel.from_dict(io.read_json(path))


def _write_collection(path, col: ddot.DdotCollection, as_json: bool):
    if as_json or str(path).endswith(".json"):
        io.write_json(path, col.to_dict())
    else:
        io.atomic_write_text(path, col.to_text())


def cmd_ddot_generate(args) -> int:
    n, k = args.n, args.k
    if args.delta is not None:
        bound = ddot.circuits_bound(n, k, args.delta, args.method)
    if args.method == "random":
        if args.s is None and args.delta is None:
            raise ValidationError("--hashes only applies to --method hash")
        s = args.s if args.s is not None else math.ceil(bound)
        col = ddot.generate_random_circuits(n, k, s, args.seed, until_perfect=args.until_perfect)
    else:
        if args.hashes is not None:
            n_hashes = args.hashes
        elif args.s is not None:
            n_hashes = math.ceil(max(args.s - 2, 0) / max(2 ** k - 2, 1))
        else:
            n_hashes = math.ceil((bound - 2) / max(2 ** k - 2, 1))
        col = ddot.generate_hash_circuits(n, k, n_hashes, args.seed, until_perfect=args.until_perfect)
    _write_collection(args.output, col, args.json)
    perfect, missing = ddot.is_perfect(col, k)
    print(json.dumps({"circuits": len(col), "perfect": perfect, "missing_terms": len(missing)}))
    if (args.delta is not None or args.until_perfect) and not perfect:
        _warn(f"collection is not ({n},{k})-perfect: {len(missing)} cells missing")
        return 1
    return 0


def cmd_ddot_check(args) -> int:
    col = ddot.load(args.collection)
    k = args.k or col.k
    if not k:
        raise ValidationError("pass --k or use a file whose header names k")
    report = ddot.balance_report(col, k)
    print(json.dumps(report.to_dict(), indent=1))
    return 0 if report.perfect else 1


def cmd_ddot_balance(args) -> int:
    col = ddot.load(args.collection)
    k = args.k or col.k
    if not k:
        raise ValidationError("pass --k or use a file whose header names k")
    before = ddot.balance_report(col, k)
    out = ddot.heuristic_balance(col, k, args.rounds, np.random.default_rng(args.seed))
    after = ddot.balance_report(out, k)
    _write_collection(args.output, out, args.json)
    print(json.dumps({"circuits": len(out), "std_before": before.appearance_count_std,
                      "std_after": after.appearance_count_std, "missing_terms": after.missing_terms}))
    return 0


def cmd_characterize(args) -> int:
    if not 0 <= args.delta_neighbor <= args.delta_cluster <= 1:
        raise ValidationError("thresholds must satisfy 0 <= delta_neighbor <= delta_cluster <= 1")
    ds = MeasurementDataset.load(args.dataset)
    table = correlation_coefficients(ds, reweighted=args.reweight)
    floor = statistical_floor(table, args.p_err)
    if args.delta_neighbor < floor:
        _warn(f"delta_neighbor={args.delta_neighbor} is below the sampling floor {floor:.4g}; "
              "weak links may be statistical artifacts")
    structure, notes = infer_structure(table, args.delta_cluster, args.delta_neighbor, args.max_joint_size)
    for note in notes:
        _warn(note)
    model = fit_noise_model(ds, structure, args.max_joint_size, reweighted=args.reweight)
    n = ds.n_qubits
    header = ["schema", "affected_qubit"] + [f"from_{j}" for j in range(n)]
    rows = [["qrem.correlations/1"] + row for row in table.to_rows()]
    io.write_csv(args.correlations_out, header, rows)
    io.write_json(args.model_out, model.to_dict())
    print(json.dumps({"clusters": [list(c) for c in structure.clusters],
                      "neighborhoods": [list(nb) for nb in structure.neighborhoods],
                      "sampling_floor": floor}))
    return 0


def _read_counts(path):
    data = io.read_json(path)
    if "results" in data:
        return {inp: outs for inp, outs in data["results"].items()}
    if "counts" in data:
        return {None: data["counts"]}
    raise ValidationError("counts file needs a 'counts' or 'results' mapping")


def cmd_mitigate(args) -> int:
    model = _load_model(args.model)
    h = DiagonalHamiltonian.load(args.hamiltonian)
    if h.n_qubits != model.n_qubits:
        raise ValidationError("Hamiltonian and model disagree on the number of qubits")
    batches = _read_counts(args.counts)
    reports = []
    for prepared, counts in batches.items():
        rep = mitigate_counts(h, counts, model, args.p_err, use_quasi=args.energy_from == "quasi")
        entry = rep.to_dict(raw_quasi=args.raw_quasi)
        if prepared is not None:
            entry["prepared"] = prepared
            entry["true_energy"] = h.energy(prepared)
        reports.append(entry)
    out = reports[0] if len(reports) == 1 and None in batches else {
        "schema": "qrem.mitigation_batch/1", "reports": reports}
    if args.output:
        io.write_json(args.output, out)
    else:
        print(json.dumps(out, indent=1))
    return 0


def cmd_benchmark(args) -> int:
    model = _load_model(args.model) if args.model else ibm_like_model(args.n, args.seed)
    if model.n_qubits != args.n:
        raise ValidationError(f"model has {model.n_qubits} qubits, --n asks for {args.n}")
    results = ground_state_benchmark(model, args.instances, args.shots, args.seed, args.family, args.p_err)
    rows = [[r.instance_id, r.true_energy, r.raw_estimate, r.mitigated_estimate, r.bound,
             r.raw_error, r.mitigated_error, "qrem.benchmark/1"] for r in results]
    io.write_csv(args.output, GROUND_STATE_COLUMNS + ["schema"], rows)
    raw = float(np.mean([r.raw_error for r in results]))
    mit = float(np.mean([r.mitigated_error for r in results]))
    print(json.dumps({"instances": len(results), "mean_raw_error_per_qubit": raw,
                      "mean_mitigated_error_per_qubit": mit,
                      "reduction_factor": raw / mit if mit > 0 else None}))
    return 0


def _layer_range(text: str, step: int) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    try:
        lo_i, hi_i = int(lo), int(hi if sep else lo)
    except ValueError as exc:
        raise ValidationError(f"--layers expects N or A..B, got {text!r}") from exc
    if lo_i < step or hi_i < lo_i or lo_i % step or hi_i % step:
        raise ValidationError(f"layer counts must be multiples of {step}")
    return lo_i, hi_i


def cmd_qaoa(args) -> int:
    lo, hi = _layer_range(args.layers, 3)
    model = _load_model(args.model) if args.model else ibm_like_model(args.n, args.seed)
    if model.n_qubits != args.n:
        raise ValidationError(f"model has {model.n_qubits} qubits, --n asks for {args.n}")
    rows = qaoa_benchmark(args.hamiltonian, args.n, hi, args.instances, model, args.shots, args.seed,
                          args.iterations, args.restarts)
    rows = [r + ["qrem.qaoa/1"] for r in rows if r[3] >= lo]
    io.write_csv(args.output, QAOA_COLUMNS + ["schema"], rows)
    summary = {}
    for r in rows:
        summary.setdefault(f"{r[2]}@{r[3]}", []).append(r[7])
    print(json.dumps({key: float(np.mean(v)) for key, v in summary.items()}))
    return 0


def cmd_model(args) -> int:
    io.write_json(args.output, ibm_like_model(args.n, args.seed).to_dict())
    return 0


def cmd_hamiltonian(args) -> int:
    io.write_json(args.output, make_hamiltonian(args.family, args.n, args.seed).to_dict())
    return 0


def cmd_sample(args) -> int:
    model = _load_model(args.model)
    col = ddot.load(args.collection)
    if col.n_qubits != model.n_qubits:
        raise ValidationError("collection and model disagree on the number of qubits")
    io.write_json(args.output, sample_dataset(model, col, args.shots, args.seed).to_dict())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qrem", description="Correlated readout-noise characterization and mitigation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("ddot", help="generate, check and balance DDOT circuit collections")
    dsub = d.add_subparsers(dest="action", required=True, parser_class=_Parser)
    g = dsub.add_parser("generate", help="write a random or hash-based collection")
    g.add_argument("--n", type=int, required=True, help="number of qubits")
    g.add_argument("--k", type=int, required=True, help="locality the collection should cover")
    size = g.add_mutually_exclusive_group(required=True)
    size.add_argument("--s", type=int, help="number of random circuits beyond the two constant ones")
    size.add_argument("--delta", type=float, help="target failure probability; size from the closed-form bound")
    size.add_argument("--hashes", type=int, help="number of hash functions (hash method)")
    g.add_argument("--method", choices=["random", "hash"], default="random")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--until-perfect", action="store_true", help="keep adding circuits until perfect")
    g.add_argument("--json", action="store_true", help="write JSON instead of the text format")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_ddot_generate)

    c = dsub.add_parser("check", help="print a balance report; exit 1 when not perfect")
    c.add_argument("collection")
    c.add_argument("--k", type=int)
    c.set_defaults(func=cmd_ddot_check)

    b = dsub.add_parser("balance", help="append circuits that target rarely prepared local states")
    b.add_argument("collection")
    b.add_argument("--k", type=int)
    b.add_argument("--rounds", type=int, default=50)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--json", action="store_true")
    b.add_argument("-o", "--output", required=True)
    b.set_defaults(func=cmd_ddot_balance)

    ch = sub.add_parser("characterize", help="infer structure and fit a noise model from a dataset")
    ch.add_argument("dataset", help='JSON {"n_qubits": N, "results": {input: {output: count}}}')
    ch.add_argument("--delta-cluster", type=float, default=0.04)
    ch.add_argument("--delta-neighbor", type=float, default=0.01)
    ch.add_argument("--max-joint-size", type=int, default=5)
    ch.add_argument("--reweight", action="store_true", help="give every distinct input circuit equal weight")
    ch.add_argument("--p-err", type=float, default=0.05)
    ch.add_argument("--model-out", required=True)
    ch.add_argument("--correlations-out", required=True)
    ch.set_defaults(func=cmd_characterize)

    m = sub.add_parser("mitigate", help="mitigate counts for a diagonal Hamiltonian and report bounds")
    m.add_argument("--counts", required=True, help='JSON with "counts" or a dataset with "results"')
    m.add_argument("--model", required=True)
    m.add_argument("--hamiltonian", required=True)
    m.add_argument("--p-err", type=float, default=0.05)
    m.add_argument("--raw-quasi", action="store_true", help="include pre-projection vectors")
    m.add_argument("--energy-from", choices=["projected", "quasi"], default="projected")
    m.add_argument("-o", "--output")
    m.set_defaults(func=cmd_mitigate)

    bm = sub.add_parser("benchmark", help="ground-state energy benchmark on random instances")
    bm.add_argument("--n", type=int, default=8)
    bm.add_argument("--instances", type=int, default=100)
    bm.add_argument("--model", help="noise model JSON (default: synthetic device-like model)")
    bm.add_argument("--shots", type=int, default=40960)
    bm.add_argument("--family", choices=["max2sat", "fully_connected"], default="max2sat")
    bm.add_argument("--p-err", type=float, default=0.05)
    bm.add_argument("--seed", type=int, default=0)
    bm.add_argument("-o", "--output", default="benchmark.csv")
    bm.set_defaults(func=cmd_benchmark)

    q = sub.add_parser("qaoa", help="staged QAOA with noiseless, noisy and mitigated estimators")
    q.add_argument("--layers", default="3", help="N or A..B (multiples of 3)")
    q.add_argument("--hamiltonian", choices=["sk2d", "max2sat", "fully_connected"], default="sk2d")
    q.add_argument("--n", type=int, default=8)
    q.add_argument("--instances", type=int, default=20)
    q.add_argument("--model")
    q.add_argument("--shots", type=int, default=10_000)
    q.add_argument("--iterations", type=int, default=800, help="SPSA iterations per stage")
    q.add_argument("--restarts", type=int, default=2)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("-o", "--output", default="qaoa.csv")
    q.set_defaults(func=cmd_qaoa)

    md = sub.add_parser("model", help="write the synthetic device-like noise model")
    md.add_argument("--n", type=int, default=8)
    md.add_argument("--seed", type=int, default=0)
    md.add_argument("-o", "--output", required=True)
    md.set_defaults(func=cmd_model)

    hm = sub.add_parser("hamiltonian", help="write a random problem Hamiltonian")
    hm.add_argument("--family", choices=["max2sat", "fully_connected", "sk2d"], default="max2sat")
    hm.add_argument("--n", type=int, default=8)
    hm.add_argument("--seed", type=int, default=0)
    hm.add_argument("-o", "--output", required=True)
    hm.set_defaults(func=cmd_hamiltonian)

    sm = sub.add_parser("sample", help="simulate a DDOT experiment through a noise model")
    sm.add_argument("--model", required=True)
    sm.add_argument("--collection", required=True)
    sm.add_argument("--shots", type=int, default=10_000)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("-o", "--output", required=True)
    sm.set_defaults(func=cmd_sample)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except QremError as exc:
        print(f"error: {exc}", file=sys.stderr)
        missing = getattr(exc, "missing", None)
        if missing:
            print(json.dumps({"missing": missing[:50], "total_missing": len(missing)}), file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
