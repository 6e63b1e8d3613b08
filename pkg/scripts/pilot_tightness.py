"""One-time R = 10^6 pilot for the tightness diagnostic.

Writes ``tests/fixtures/tightness_pilot.json`` with the recentered widths of
the binary-branching model in ``configs/binary_3pt.json`` and the threshold
``1.5 * width(5)`` that the acceptance test compares against.

    python3 scripts/pilot_tightness.py [--reps 1000000] [--seed 2024]
"""

import argparse
import json
import time
from pathlib import Path

from gbrw.config import load_model
from gbrw.simulate import tightness_report

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--delta", type=float, default=0.05)
    ap.add_argument("--out", default=str(ROOT / "tests" / "fixtures" / "tightness_pilot.json"))
    args = ap.parse_args()
    model = load_model(ROOT / "configs" / "binary_3pt.json")
    horizons = [5, 10, 15, 20]
    t0 = time.perf_counter()
    table = tightness_report(model.branching, model.displacement, horizons, args.reps, args.delta, args.seed)
    widths = {str(n): w for n, w in table.widths.items()}
    doc = {
        "config": "configs/binary_3pt.json",
        "horizons": horizons,
        "reps": args.reps,
        "seed": args.seed,
        "delta": args.delta,
        "widths": widths,
        "medians": {str(r.n): r.median for r in table.rows},
        "threshold": 1.5 * widths["5"],
        "seconds": round(time.perf_counter() - t0, 1),
    }
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(json.dumps(doc, sort_keys=True))


if __name__ == "__main__":
    main()
