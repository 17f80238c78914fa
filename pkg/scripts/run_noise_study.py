"""Noise-robustness study on the synthetic benchmark.

Trains the robust arm (generalized loss + noisy-label removal) against a
plain cross-entropy arm under span-flip/span-deletion noise, then repeats
with only the removal step toggled.  Writes one report pair per protocol.

    python3 scripts/run_noise_study.py --out runs/noise
    python3 scripts/run_noise_study.py --set bench.ab_seeds=5 --set robust.q=0.5
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from distner.config import DEFAULT_CONFIG_TEXT, parse_recipe
from distner.harness import run_ab, write_ab_report
from distner.model import configure_torch


def load(args):
    text = Path(args.config).read_text(encoding="utf-8") if args.config else DEFAULT_CONFIG_TEXT
    return parse_recipe(text, tuple(args.set or ()))


def run(protocols, args):
    configure_torch(1)
    recipe = load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for protocol in protocols:
        started = time.perf_counter()
        report = run_ab(protocol, recipe)
        write_ab_report(report, out / f"ab_{protocol}.txt", out / f"ab_{protocol}.kv")
        print((out / f"ab_{protocol}.txt").read_text(encoding="utf-8"), end="")
        print(f"[{protocol} took {time.perf_counter() - started:.0f}s]\n")


def build_parser(description):
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--config", default=None, help="config file (defaults to built-ins)")
    parser.add_argument("--out", default="runs/noise", help="directory for report files")
    parser.add_argument(
        "--set",
        action="append",
        metavar="SECTION.KEY=VALUE",
        help="override a config value (repeatable)",
    )
    return parser


if __name__ == "__main__":
    run(("gce_vs_ce", "removal_on_off"), build_parser(__doc__).parse_args())
