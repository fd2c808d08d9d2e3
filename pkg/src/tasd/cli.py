"""Command-line front end tying the library into reproducible experiments.

Outputs are machine-readable (CSV/JSON) on stdout or at --out; progress
notes go to stderr through logging (--json-logs switches them to JSON
lines). Exit codes: 0 success, 1 usage error, 2 data error. Sweep worker
count follows TASD_THREADS.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .approxmm import error_sweep, render_error_csv
from .decomp import (
    decompose,
    drop_metrics,
    random_matrix,
    render_sweep_csv,
    sweep_synthetic,
)
from .errors import MissingCalibration, TasdError
from .hwmodel import (
    BUILTIN_SPECS,
    HwSpec,
    pattern_table,
    render_cost_csv,
    workload_cost,
)
from .matrix import TasdConfig, decode, load_matrix, save_matrix
from .search import (
    layer_wise_greedy,
    network_wise_search,
    profile_calibration,
    save_assignment,
    load_assignment,
    select_activation_configs,
)
from .workload import QualityOracle, load_workload

log = logging.getLogger("tasd.cli")

APPENDIX_DENSITIES = [round(0.10 + 0.05 * i, 2) for i in range(14)]  # 0.10 .. 0.75
APPENDIX_CONFIGS = ("2:4", "2:4+2:8", "2:4+2:8+2:16")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _density(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"density must be in [0, 1], got {text}")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _load_hw(spec: str) -> HwSpec:
    factory = BUILTIN_SPECS.get(spec)
    if factory is not None:
        return factory()
    return HwSpec.from_json(spec)


def _write_text(out: str, text: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    mat = random_matrix(args.rows, args.cols, args.density, args.dist, args.seed)
    save_matrix(mat, args.out)
    log.info("wrote %dx%d %s matrix to %s", args.rows, args.cols, args.dist, args.out)
    return 0


def cmd_decompose(args) -> int:
    mat = load_matrix(args.infile)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    d = decompose(mat, args.config)
    for i, term in enumerate(d.terms):
        save_matrix(decode(term), out_dir / f"term_{i:02d}.tasd1")
        sidecar = {
            "pattern": str(term.pattern),
            "rows": term.rows,
            "cols": term.cols,
            "indices": term.indices.tolist(),
        }
        with open(out_dir / f"term_{i:02d}.indices.json", "w") as fh:
            json.dump(sidecar, fh)
            fh.write("\n")
    save_matrix(d.residual, out_dir / "residual.tasd1")
    metrics = drop_metrics(d)
    metrics_path = Path(args.metrics) if args.metrics else out_dir / "metrics.json"
    with open(metrics_path, "w") as fh:
        json.dump(
            {
                "config": d.config.canonical(),
                "rows": d.source_dims[0],
                "cols": d.source_dims[1],
                "term_nnz": [t.nnz for t in d.terms],
                "dropped_nnz_fraction": metrics.dropped_nnz_fraction,
                "dropped_magnitude_fraction": metrics.dropped_magnitude_fraction,
                "retained_magnitude_fraction": metrics.retained_magnitude_fraction,
                "mse": metrics.mse,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    log.info("decomposed %s into %d terms under %s", args.infile, len(d.terms), out_dir)
    return 0


def cmd_analyze(args) -> int:
    seeds = range(args.num_seeds)
    if args.sweep == "appendixA":
        table = sweep_synthetic(
            (128, 128),
            APPENDIX_DENSITIES,
            ("uniform", "normal"),
            APPENDIX_CONFIGS,
            seeds=seeds,
            master_seed=args.seed,
        )
        text = render_sweep_csv(table)
    else:
        table = error_sweep(
            (256, 256),
            (0.2, 0.8),
            configs=None,
            seeds=seeds,
            master_seed=args.seed,
        )
        text = render_error_csv(table)
    _write_text(args.out, text)
    log.info("%s sweep: %d rows", args.sweep, len(table))
    return 0


def _make_oracle(spec: str) -> QualityOracle:
    if spec == "magnitude":
        return QualityOracle.retained_magnitude()
    if spec == "error":
        return QualityOracle.output_error()
    return QualityOracle.external_command(spec)


def cmd_search(args) -> int:
    wl = load_workload(args.workload)
    hw = _load_hw(args.hw)
    menu = hw.menu
    oracle = _make_oracle(args.oracle)
    trace: list[dict] = []

    if args.mode == "network":
        cfg, quality = network_wise_search(
            wl, menu, oracle, threshold=args.threshold, hw=hw, trace=trace
        )
        assignment = (
            {} if cfg.is_dense else {ly.layer_id: cfg for ly in wl.layers}
        )
        log.info("network-wise pick: %s (quality %g)", cfg.canonical(), quality)
    elif args.mode == "greedy":
        assignment = layer_wise_greedy(
            wl,
            menu,
            oracle,
            threshold=args.threshold,
            skip_and_continue=args.skip_and_continue,
            trace=trace,
        )
        log.info("greedy configured %d of %d layers", len(assignment), len(wl.layers))
    else:
        stats = []
        for ly in wl.layers:
            if ly.calibration_dir is None:
                raise MissingCalibration(
                    f"layer {ly.layer_id!r} has no calibration_dir"
                )
            paths = sorted(Path(ly.calibration_dir).glob("*"))
            samples = [load_matrix(p) for p in paths if p.is_file()]
            stats.append(profile_calibration(samples, ly.layer_id))
        assignment = select_activation_configs(
            stats,
            menu,
            alpha=args.alpha,
            rho=args.rho,
            relu_based=not args.pseudo,
            statistic=args.statistic,
        )
        for st in stats:
            cfg = assignment.get(st.layer_id)
            trace.append(
                {
                    "layer": st.layer_id,
                    "sparsity_mean": st.act_sparsity_mean,
                    "sparsity_p99": st.act_sparsity_p99,
                    "config": cfg.canonical() if cfg else "dense",
                }
            )
        log.info(
            "activation selection configured %d of %d layers",
            len(assignment),
            len(wl.layers),
        )

    save_assignment(assignment, args.out)
    if args.log:
        with open(args.log, "w") as fh:
            for entry in trace:
                fh.write(json.dumps(entry) + "\n")
    return 0


def cmd_simulate(args) -> int:
    wl = load_workload(args.workload)
    hw = _load_hw(args.hw)
    assignment = load_assignment(args.assignment) if args.assignment else {}
    report, rows = workload_cost(hw, wl, assignment)
    rows.append(
        {
            "layer": "total",
            "config": "-",
            "cycles": report.cycles,
            "stalls": report.stall_cycles,
            "macs": report.mac_count,
            "e_mac": report.breakdown["mac"],
            "e_rf": report.breakdown["rf"],
            "e_l1": report.breakdown["l1"],
            "e_l2": report.breakdown["l2"],
            "e_dram": report.breakdown["dram"],
            "e_tasd": report.breakdown["tasd_unit"],
            "edp": report.edp,
        }
    )
    _write_text(args.out, render_cost_csv(rows))
    dense_report, _ = workload_cost(hw, wl, {})
    ratio = report.edp / dense_report.edp
    print(f"edp_vs_dense={ratio!r}")
    log.info(
        "cycles %d, energy %.3g pJ, EDP %.3g (%.3gx dense)",
        report.cycles,
        report.energy_pj,
        report.edp,
        ratio,
    )
    return 0


def cmd_patterns(args) -> int:
    hw = _load_hw(args.hw)
    lines = ["total_n,realization"]
    for total, cfg in pattern_table(hw):
        lines.append(f"{total},{cfg.canonical() if cfg else '-'}")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(
        prog="tasd",
        description="Structured-sparse series approximation toolkit",
    )
    parser.add_argument(
        "--json-logs", action="store_true", help="emit stderr logs as JSON lines"
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("gen", help="generate a random matrix file")
    p.add_argument("--rows", type=_positive, required=True)
    p.add_argument("--cols", type=_positive, required=True)
    p.add_argument("--density", type=_density, required=True)
    p.add_argument("--dist", choices=("uniform", "normal"), default="uniform")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("decompose", help="split a matrix into N:M terms")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--config", type=TasdConfig.parse, required=True, metavar="N:M[+N:M...]")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--metrics", default=None, help="metrics JSON path (default OUT_DIR/metrics.json)")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("analyze", help="run a synthetic sweep and emit CSV")
    p.add_argument("--sweep", choices=("appendixA", "matmul-error"), required=True)
    p.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-seeds", type=_positive, default=20)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("search", help="pick per-layer configs for a workload")
    p.add_argument("--workload", required=True)
    p.add_argument(
        "--hw",
        required=True,
        help="hardware spec JSON path or builtin name "
        f"({', '.join(sorted(BUILTIN_SPECS))})",
    )
    p.add_argument("--mode", choices=("network", "greedy", "activation"), required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--rho", type=float, default=0.99)
    p.add_argument("--threshold", type=float, default=0.99)
    p.add_argument(
        "--oracle",
        default="magnitude",
        help="'magnitude', 'error', or an external command to run",
    )
    p.add_argument("--statistic", choices=("p99", "mean"), default="p99")
    p.add_argument(
        "--pseudo-density",
        dest="pseudo",
        action="store_true",
        help="non-ReLU activations: derive sparsity from magnitude samples",
    )
    p.add_argument("--skip-and-continue", action="store_true")
    p.add_argument("--out", required=True, help="assignment JSON path")
    p.add_argument("--log", default=None, help="JSONL trace of evaluated candidates")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("simulate", help="cost a workload under an assignment")
    p.add_argument("--workload", required=True)
    p.add_argument("--hw", required=True)
    p.add_argument("--assignment", default=None)
    p.add_argument("--out", default="-", help="per-layer cost CSV, '-' for stdout")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("patterns", help="print the supported-pattern table")
    p.add_argument("--hw", required=True)
    p.set_defaults(func=cmd_patterns)

    return parser


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps(
            {
                "level": record.levelname.lower(),
                "logger": record.name,
                "message": record.getMessage(),
            }
        )


def _setup_logging(json_logs: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    if json_logs:
        handler.setFormatter(_JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("tasd")
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"tasd: error: {exc}", file=sys.stderr)
        return 1
    _setup_logging(args.json_logs)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (TasdError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
