"""Ensemble-stabilization study.

Trains the full member ensemble from several base seeds, distills each, and
compares the spread of distilled-model F1 against the spread of individual
members.  The headline numbers are the two standard deviations in the report.

    python3 scripts/run_stability_study.py --out runs/stability
    python3 scripts/run_stability_study.py --set bench.variance_seeds=8
"""

from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from run_noise_study import build_parser, run

if __name__ == "__main__":
    parser = build_parser(__doc__)
    parser.set_defaults(out="runs/stability")
    run(("ensemble_variance",), parser.parse_args())
