"""Command line front end.

Exit codes: 0 when every report row passes, 1 when any metric fails, 2 on
configuration errors. Output files and stdout are byte-identical across runs
with the same arguments.
"""

import argparse
import json
import sys

from ..accounting import default_hit_budget
from ..synth import load_config
from . import runners
from .reports import ConfigError, render_report_lines, table_to_csv, write_table

RUNNERS = {
    "lemma-check": runners.run_lemma_transfer_check,
    "relevance-check": runners.run_relevance_check,
    "alpha-sweep": runners.run_alpha_sweep,
    "compare-sampling": runners.run_sampling_compare,
    "dp-audit": runners.run_dp_audit,
}


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--seed", type=int, default=None, help="master seed (u64)")
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--out", default=None, help="write the data table here")
    sp.add_argument("--format", dest="fmt", choices=("csv", "jsonl"), default="csv")
    sp.add_argument("--config", default=None, help="JSON config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coagg",
        description="Coordinated-sampling aggregation checks and simulations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, needs_suite in (
        ("lemma-check", True),
        ("relevance-check", True),
        ("alpha-sweep", False),
        ("compare-sampling", True),
        ("dp-audit", False),
    ):
        sp = sub.add_parser(name)
        _add_common(sp)
        if needs_suite:
            sp.add_argument("--suite", default=None)
    sub.choices["alpha-sweep"].add_argument(
        "--cdf-out", default=None, help="also write the max-count CDF table (csv)"
    )
    sub.choices["compare-sampling"].add_argument(
        "--histograms-out", default=None, help="also write per-trial histograms (csv)"
    )

    sp = sub.add_parser("simulate")
    _add_common(sp)

    sp = sub.add_parser("budget")
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--eps0", type=float, required=True)
    return parser


def _config_from(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    if args.config is not None:
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad config JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.trials is not None:
        cfg["trials"] = args.trials
    if getattr(args, "suite", None) is not None:
        cfg["suite"] = args.suite
    return cfg


def _run_simulate(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    report, _ = runners.run_simulation(cfg)
    text = report.raw_jsonl if args.fmt == "jsonl" else table_to_csv(report.data)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        tokens = sum(1 for r in report.data.rows if r[1] == "token")
        print(f"steps={len(report.data.rows)} tokens={tokens}")
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "budget":
            print(default_hit_budget(args.eps, args.eps0))
            return 0
        if args.command == "simulate":
            return _run_simulate(args)
        report = RUNNERS[args.command](_config_from(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for line in render_report_lines(report):
        print(line)
    if args.out:
        write_table(report.output_table(), args.out, args.fmt)
    if getattr(args, "cdf_out", None):
        write_table(report.side_tables["cdf"], args.cdf_out, "csv")
    if getattr(args, "histograms_out", None):
        write_table(report.side_tables["histograms"], args.histograms_out, "csv")
    return 0 if report.all_pass else 1


if __name__ == "__main__":
    sys.exit(main())
