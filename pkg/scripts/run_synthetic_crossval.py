"""Six-subject synthetic leave-one-subject-out run at desk scale.

Generates subjects, magnifies them, cuts the centred ROI, runs NIDL and NIPST
cross-validation and writes the report. Prints pooled figures and timing.

    python3 scripts/run_synthetic_crossval.py --out runs/synthetic
"""

import argparse
import time

from nidl.experiment import DESK_TRAIN, crossval_summary, synthetic_crossval
from nidl.report import emit_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--subjects", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=DESK_TRAIN.epochs)
    ap.add_argument("--lr", type=float, default=DESK_TRAIN.learning_rate)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    t0 = time.perf_counter()
    result = synthetic_crossval(args.subjects, args.seed, epochs=args.epochs, learning_rate=args.lr,
                                progress=lambda r: print(
                                    f"{r.test_subject}: NIDL {r.nidl.mean:.3f}  NIPST {r.nipst.mean:.3f}  "
                                    f"constant {r.constant_mae:.3f}  r {r.pearson_r:.3f}  xi {r.xi:.3f}  "
                                    f"[{time.perf_counter() - t0:.0f} s]", flush=True))
    for key, value in crossval_summary(result).items():
        print(f"{key}: {value}")
    print(f"total {time.perf_counter() - t0:.0f} s")
    if args.out:
        emit_report(result, args.out)
        print(f"report written to {args.out}")


if __name__ == "__main__":
    main()
