"""Self-training and augmentation study.

Starting from the distilled ensemble model, runs soft-label self-training
with and without the augmented-view consistency term and reports all three
arms (distilled start, plain self-training, self-training + augmentation).
The two protocols share the engine; both are kept so each report file
carries the headline of its own question.

    python3 scripts/run_selftrain_study.py --out runs/selftrain
    python3 scripts/run_selftrain_study.py --set selftrain.iterations=6
"""

from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from run_noise_study import build_parser, run

if __name__ == "__main__":
    parser = build_parser(__doc__)
    parser.set_defaults(out="runs/selftrain")
    run(("st_on_off", "aug_on_off"), parser.parse_args())
