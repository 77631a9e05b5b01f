#!/usr/bin/env python3
"""Run every report command with pinned seeds and collect the outputs.

Writes CSVs under --out-dir (default ./suite_out) and prints one line per
run. Exit status is the worst exit status seen, so this script doubles as a
coarse regression gate:

    python3 scripts/run_full_suite.py --out-dir suite_out
"""

import argparse
import pathlib
import sys

from coagg.harness.cli import main as coagg_main

RUNS = [
    ("lemma_uniform4", ["lemma-check", "--suite", "uniform4", "--seed", "1"]),
    ("lemma_uniform16", ["lemma-check", "--suite", "uniform16", "--seed", "1"]),
    ("lemma_uniform64", ["lemma-check", "--suite", "uniform64", "--seed", "1"]),
    ("lemma_mixture01", ["lemma-check", "--suite", "mixture01", "--seed", "1"]),
    ("lemma_mixture05", ["lemma-check", "--suite", "mixture05", "--seed", "1"]),
    ("relevance_uniform4", ["relevance-check", "--suite", "uniform4", "--seed", "2"]),
    ("relevance_mixture01", ["relevance-check", "--suite", "mixture01", "--seed", "2"]),
    ("alpha_sweep", ["alpha-sweep", "--seed", "3"]),
    ("compare_planetz", ["compare-sampling", "--suite", "planetz", "--seed", "4"]),
    ("dp_audit", ["dp-audit", "--seed", "5"]),
    ("simulate_markov", ["simulate", "--config", "configs/markov.json"]),
    ("simulate_disjoint", ["simulate", "--config", "configs/disjoint.json"]),
]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="suite_out")
    args = ap.parse_args(argv)
    out_dir = pathlib.Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    worst = 0
    for name, cli_args in RUNS:
        out_path = out_dir / f"{name}.csv"
        extra = ["--out", str(out_path)]
        if cli_args[0] == "alpha-sweep":
            extra += ["--cdf-out", str(out_dir / f"{name}_cdf.csv")]
        if cli_args[0] == "compare-sampling":
            extra += ["--histograms-out", str(out_dir / f"{name}_hist.csv")]
        rc = coagg_main(cli_args + extra)
        print(f"[{'ok' if rc == 0 else f'rc={rc}'}] {name} -> {out_path}")
        worst = max(worst, rc)
    return worst


if __name__ == "__main__":
    sys.exit(main())
