"""Command-line entry point: compression and filter tools plus the
benchmark experiment runners, emitting figure-ready CSV (and JSON for the
object-counting decision tables).

Exit codes: 0 success, 2 argument error, 3 data/parse error, 4 numerical
failure surfaced to the top level.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from pathlib import Path

import numpy as np

from .cmc import SelectionMode, compress
from .core import AllWeightsZero, DimensionMismatch, RngStream, WeightedCloud
from .experiments import (
    PARTITION_CODES,
    SELECTION_CODES,
    UnknownModel,
    UnknownTarget,
    run_budget_bench,
    run_experiment1,
    run_filter_sweep,
    run_kepler_experiment,
)
from .filters import (
    Algorithm,
    DivisibilityViolation,
    EssKind,
    FilterConfig,
    run_filter,
)
from .models import AbsLogModel, GrowthModel, LinearGaussianModel, generate_synthetic
from .partition import assign, build_random_grid, build_uniform_grid, build_voronoi
from .resample import CovarianceNotSPD

EXIT_OK, EXIT_ARGS, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

_RESULTS_SCHEMA = "cmcpf-results-v1"
_EX1_SCHEMA = "cmcpf-ex1-v1"
_CLOUD_SCHEMA = "cmcpf-cloud-v1"
_SUMMARY_SCHEMA = "cmcpf-summary-v1"
_TRACE_SCHEMA = "cmcpf-trace-v1"


class ParseError(ValueError):
    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_table(path: Path, schema: str, params: dict, header, rows, no_meta: bool):
    lines = [f"# schema={schema}"]
    if params:
        joined = ",".join(f"{k}={v}" for k, v in params.items())
        lines.append(f"# params={joined}")
    if not no_meta:
        lines.append(f"# generated={datetime.datetime.now().isoformat()}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def read_cloud(path) -> WeightedCloud:
    """Parse the cloud CSV format: a `# dim,<d>` comment, then rows of
    x_1,...,x_d,log_w."""
    rows = []
    dim = None
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if body.startswith("dim"):
                    parts = body.split(",")
                    if len(parts) != 2:
                        raise ParseError("malformed dim header", line_no)
                    try:
                        dim = int(parts[1])
                    except ValueError as err:
                        raise ParseError(f"bad dimension {parts[1]!r}", line_no) from err
                continue
            if dim is None:
                raise ParseError("missing `# dim,<d>` header before data", line_no)
            parts = line.split(",")
            if len(parts) != dim + 1:
                raise ParseError(
                    f"expected {dim + 1} fields (x_1..x_{dim}, log_w), got {len(parts)}",
                    line_no,
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as err:
                raise ParseError(str(err), line_no) from err
    if dim is None or not rows:
        raise ParseError("no data rows found")
    data = np.asarray(rows)
    return WeightedCloud(data[:, :dim], data[:, dim])


def write_cloud(path, cloud: WeightedCloud):
    lines = [f"# dim,{cloud.dim}"]
    for x, lw in zip(cloud.samples, cloud.log_weights):
        lines.append(",".join(_fmt(float(v)) for v in x) + "," + _fmt(float(lw)))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_m_list(text):
    try:
        values = [int(v) for v in str(text).split(",") if v != ""]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"bad m list {text!r}") from err
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("m values must be positive integers")
    return values


def _add_common(parser, runs=None, n=None, m="100", steps=None):
    parser.add_argument("--seed", type=int, default=0, help="base seed (u64)")
    if runs is not None:
        parser.add_argument("--runs", type=int, default=None, help=f"default {runs}")
    if n is not None:
        parser.add_argument("--n", type=int, default=None, help=f"default {n}")
    parser.add_argument("--m", type=_parse_m_list, default=_parse_m_list(m))
    if steps is not None:
        parser.add_argument("--steps", type=int, default=steps)
    parser.add_argument("--partition", choices=sorted(PARTITION_CODES), default=None)
    parser.add_argument("--select", choices=sorted(SELECTION_CODES), default=None)
    parser.add_argument("--eta", type=float, default=0.5)
    parser.add_argument("--ess", choices=["sumsq", "max"], default="sumsq")
    parser.add_argument("--out", type=Path, default=Path("out"))
    parser.add_argument("--paper-scale", action="store_true")
    parser.add_argument("--expensive-cost", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument(
        "--no-header-meta",
        action="store_true",
        help="suppress the timestamped header line (byte-identical reruns)",
    )


def _scale(args, desk, paper):
    """Resolve a runs/n default pair against --paper-scale."""
    return paper if args.paper_scale else desk


def _results_rows(experiment, rows):
    out = []
    for row in rows:
        for metric in ("rmse", "log_z", "eval_count", "wall_ms"):
            out.append(
                (
                    experiment,
                    row["run"],
                    row["n"],
                    row["m"],
                    row["algorithm"],
                    metric,
                    float(row[metric]),
                )
            )
    return out


_RESULT_HEADER = ("experiment", "run_seed", "n", "m", "algorithm", "metric", "value")


def _cmd_compress(args):
    cloud = read_cloud(args.input)
    stream = RngStream(args.seed)
    p_code = args.partition or "p2"
    m = args.m[0]
    if p_code == "p2":
        part = build_uniform_grid(cloud, m)
    elif p_code == "p1":
        part = build_random_grid(cloud, m, stream.child(0))
    else:
        part = build_voronoi(cloud, min(m, cloud.n), stream.child(0))
    idx = assign(part, cloud)
    sc = compress(
        cloud,
        idx,
        mode=SELECTION_CODES[args.select or "mean"],
        rng=stream.child(1),
        with_covariances=args.with_cov,
        eps=args.eps,
    )
    header = [f"s_{j + 1}" for j in range(sc.particles.shape[1])] + ["weight", "log_evidence"]
    if sc.covariances is not None:
        d = sc.particles.shape[1]
        header += [f"cov_{j + 1}{k + 1}" for j in range(d) for k in range(d)]
    rows = []
    for i in range(sc.n_summaries):
        row = [float(v) for v in sc.particles[i]]
        row += [float(sc.weights[i]), float(sc.log_region_evidence[i])]
        if sc.covariances is not None:
            row += [float(v) for v in sc.covariances[i].ravel()]
        rows.append(row)
    _write_table(
        Path(args.output),
        _SUMMARY_SCHEMA,
        {"seed": args.seed, "m": m, "partition": p_code, "select": args.select or "mean"},
        header,
        rows,
        args.no_header_meta,
    )
    ev = sc.evidence()
    print(f"summaries: {sc.n_summaries}")
    print(f"weight sum: {_fmt(float(np.sum(sc.weights)))}")
    print(f"evidence: {_fmt(ev.z_hat)} (log {_fmt(ev.log_z)})")
    return EXIT_OK


_CLI_MODELS = {
    "abslog": AbsLogModel,
    "growth": GrowthModel,
    "lingauss": LinearGaussianModel,
}


def _cmd_filter(args):
    if args.model not in _CLI_MODELS:
        raise UnknownModel(f"unknown model {args.model!r}")
    model = _CLI_MODELS[args.model]()
    stream = RngStream(args.seed)
    states, observations = generate_synthetic(model, args.steps, stream.child(0))
    algorithm = {"bpf": Algorithm.BPF, "cbpf": Algorithm.CBPF, "gcpf": Algorithm.GENERIC_CPF}[
        args.algorithm
    ]
    config = FilterConfig(
        algorithm,
        args.n,
        args.m[0] if algorithm is not Algorithm.BPF else None,
        eta=args.eta,
        ess=EssKind.SUM_OF_SQUARES if args.ess == "sumsq" else EssKind.MAX_WEIGHT,
        partition_rule=PARTITION_CODES[args.partition or "p2"],
        selection=SELECTION_CODES[args.select or "mean"],
        seed=args.seed,
    )
    trace = run_filter(model, observations, config, rng=stream.child(1))
    rows = [
        (
            t + 1,
            float(trace.estimates[t, 0]),
            float(states[t + 1, 0]),
            float(trace.ess[t]),
            int(trace.resampled[t]),
            float(trace.log_evidence_path[t]),
            int(trace.m_used[t]),
        )
        for t in range(observations.shape[0])
    ]
    _write_table(
        args.out / f"trace_{args.model}_{args.algorithm}.csv",
        _TRACE_SCHEMA,
        {"seed": args.seed, "model": args.model, "algorithm": args.algorithm, "n": args.n},
        ("t", "estimate", "truth", "ess", "resampled", "log_z", "m_used"),
        rows,
        args.no_header_meta,
    )
    rmse = float(np.sqrt(np.mean((trace.estimates[:, 0] - states[1:, 0]) ** 2)))
    print(f"log evidence: {_fmt(trace.log_evidence)}")
    print(f"rmse: {_fmt(rmse)}")
    print(f"likelihood evaluations: {trace.total_evaluations}")
    return EXIT_OK


def _cmd_ex1(args):
    runs = args.runs if args.runs is not None else _scale(args, 200, 1000)
    n = args.n if args.n is not None else _scale(args, 10_000, 100_000)
    targets = ["gamma", "mixture"] if args.target == "both" else [args.target]
    partitions = (args.partition,) if args.partition else ("p1", "p2")
    selections = (args.select,) if args.select else ("stoch", "mean")
    for target in targets:
        rows = run_experiment1(
            target,
            n=n,
            m_list=args.m,
            runs=runs,
            seed=args.seed,
            partitions=partitions,
            selections=selections,
            workers=args.workers,
        )
        table = [
            (
                r["target"],
                r["method"],
                r["partition"],
                r["selection"],
                r["m"],
                r["moment_k"],
                r["rmse"],
            )
            for r in rows
        ]
        _write_table(
            args.out / f"ex1_{target}.csv",
            _EX1_SCHEMA,
            {"seed": args.seed, "n": n, "runs": runs},
            ("target", "method", "partition", "selection", "m", "moment_k", "rmse"),
            table,
            args.no_header_meta,
        )
        print(f"ex1 {target}: {len(table)} rows -> {args.out / f'ex1_{target}.csv'}")
    return EXIT_OK


def _cmd_filter_experiment(args, experiment, model_name, desk, paper):
    runs = args.runs if args.runs is not None else _scale(args, desk[0], paper[0])
    n = args.n if args.n is not None else _scale(args, desk[1], paper[1])
    rows = run_filter_sweep(
        model_name,
        n=n,
        m_list=args.m,
        runs=runs,
        n_steps=args.steps,
        equal_budget=args.equal_budget,
        partition=args.partition or "p2",
        selection=args.select or "mean",
        seed=args.seed,
        workers=args.workers,
        expensive_cost=args.expensive_cost,
    )
    _write_table(
        args.out / f"{experiment}_{model_name}.csv",
        _RESULTS_SCHEMA,
        {"seed": args.seed, "n": n, "runs": runs, "model": model_name},
        _RESULT_HEADER,
        _results_rows(experiment, rows),
        args.no_header_meta,
    )
    print(f"{experiment} {model_name}: {runs} runs -> {args.out / f'{experiment}_{model_name}.csv'}")
    return EXIT_OK


_ORDER_NAMES = {0: "zero", 1: "one", 2: "two"}


def _cmd_kepler(args):
    runs = args.runs if args.runs is not None else _scale(args, 50, 500)
    n = args.n if args.n is not None else _scale(args, 10_000, 100_000)
    summary = run_kepler_experiment(
        args.scenario,
        runs=runs,
        n=n,
        m=args.m[0],
        eta=args.eta,
        partition=args.partition or "p3",
        selection=args.select or "stoch",
        resample=args.resample,
        expensive_cost=args.expensive_cost,
        seed=args.seed,
        workers=args.workers,
    )
    rows = []
    for method, ms in summary.methods.items():
        for run, log_zs in enumerate(ms.log_evidence):
            for order, log_z in zip((0, 1, 2), log_zs):
                rows.append(
                    (args.scenario, run, n, args.m[0], f"{method}-s{order}", "log_z", float(log_z))
                )
            decision = int(np.argmax(log_zs))
            rows.append((args.scenario, run, n, args.m[0], method, "decision", decision))
    _write_table(
        args.out / f"kepler_{args.scenario}.csv",
        _RESULTS_SCHEMA,
        {"seed": args.seed, "n": n, "runs": runs},
        _RESULT_HEADER,
        rows,
        args.no_header_meta,
    )
    payload = {
        "scenario": summary.scenario,
        "runs": summary.runs,
        "methods": {
            method: {
                "decisions": {_ORDER_NAMES[k]: v for k, v in ms.decisions.items()},
                "rankings": {_ORDER_NAMES[k]: v for k, v in ms.rankings.items()},
                "wall_time_s": ms.wall_time_s,
            }
            for method, ms in summary.methods.items()
        },
        "normalized_time": summary.normalized_time,
    }
    out_json = args.out / f"kepler_{args.scenario}.json"
    out_json.parent.mkdir(parents=True, exist_ok=True)
    out_json.write_text(json.dumps(payload, indent=2) + "\n")
    for method, ms in summary.methods.items():
        decisions = {_ORDER_NAMES[k]: f"{100 * v:.0f}%" for k, v in ms.decisions.items()}
        print(f"{method}: decisions {decisions}")
    if summary.normalized_time is not None:
        print(f"normalized time (cpf/pf): {summary.normalized_time:.3f}")
        if args.expensive_cost and summary.normalized_time >= 1.0:
            print("warning: compressed filter was not faster despite expensive likelihood")
    return EXIT_OK


def _cmd_bench_budget(args):
    runs = args.runs if args.runs is not None else 5
    n = args.n if args.n is not None else 1000
    rows = run_budget_bench(
        model_name=args.model,
        n=n,
        m_list=args.m,
        runs=runs,
        n_steps=args.steps,
        expensive_cost=args.expensive_cost or 200,
        seed=args.seed,
        workers=args.workers,
    )
    _write_table(
        args.out / "bench_budget.csv",
        _RESULTS_SCHEMA,
        {"seed": args.seed, "n": n, "runs": runs, "model": args.model},
        _RESULT_HEADER,
        _results_rows("bench-budget", rows),
        args.no_header_meta,
    )
    bpf_ms = np.mean([r["wall_ms"] for r in rows if r["algorithm"] == "bpf"])
    cbpf_ms = np.mean([r["wall_ms"] for r in rows if r["algorithm"] == "cbpf"])
    print(f"mean wall: bpf {bpf_ms:.1f} ms, cbpf {cbpf_ms:.1f} ms")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmcpf",
        description="Compressed Monte Carlo particle filtering benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a cloud file into summary particles")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="summary.csv")
    p.add_argument("--with-cov", action="store_true")
    p.add_argument("--eps", type=float, default=1e-6)
    _add_common(p, m="10")
    p.set_defaults(fn=_cmd_compress)

    p = sub.add_parser("filter", help="run one filter on synthetic data")
    p.add_argument("--model", default="abslog")
    p.add_argument("--algorithm", choices=["bpf", "cbpf", "gcpf"], default="cbpf")
    _add_common(p, m="100", steps=100)
    p.add_argument("--n", type=int, default=1000)
    p.set_defaults(fn=_cmd_filter)

    p = sub.add_parser("ex1", help="compression vs standard resampling (static targets)")
    p.add_argument("--target", choices=["gamma", "mixture", "both"], default="both")
    _add_common(p, runs=200, n=10_000, m="10,50,100,500")
    p.set_defaults(fn=_cmd_ex1)

    p = sub.add_parser("ex2", help="compressed bootstrap filter on the abs/log model")
    _add_common(p, runs=500, n=1000, m="50,100,150,200", steps=100)
    p.add_argument("--equal-budget", action="store_true")
    p.set_defaults(fn=lambda a: _cmd_filter_experiment(a, "ex2", "abslog", (500, 1000), (5000, 1000)))

    p = sub.add_parser("ex3", help="compressed bootstrap filter on the growth model")
    _add_common(p, runs=300, n=1000, m="20,50,100,500", steps=100)
    p.add_argument("--equal-budget", action="store_true")
    p.set_defaults(fn=lambda a: _cmd_filter_experiment(a, "ex3", "growth", (300, 1000), (1000, 1000)))

    p = sub.add_parser("kepler", help="object counting by model evidence")
    p.add_argument("--scenario", choices=["e1", "e2", "e3"], required=True)
    p.add_argument(
        "--resample",
        choices=["multinomial", "regularized"],
        default="regularized",
        help="resampling kernel for the compressed filter",
    )
    _add_common(p, runs=50, n=10_000, m="100")
    p.set_defaults(fn=_cmd_kepler)

    p = sub.add_parser("bench-budget", help="wall-time benchmark with an expensive likelihood")
    p.add_argument("--model", default="growth")
    _add_common(p, runs=5, n=1000, m="50", steps=50)
    p.set_defaults(fn=_cmd_bench_budget)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (AllWeightsZero, CovarianceNotSPD) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ParseError, UnknownTarget, UnknownModel, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (DivisibilityViolation, DimensionMismatch, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
