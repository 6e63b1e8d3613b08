"""Sandwich, pointwise-bound and Lyapunov checks for every model in configs/.

    python3 scripts/config_sweep.py [--n 12] [--M0 3]

Prints one line per config; models that fail an assumption are reported
as such instead of being certified.
"""

import argparse
from pathlib import Path

from gbrw.config import load_model
from gbrw.laws import check_branching_assumptions, check_joint_tail, check_marginal_assumptions
from gbrw.lyapunov import choose_params, right_tail_check, verify_bounded
from gbrw.recurse import check_sandwich, pointwise_bounds_check, run

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=12)
    ap.add_argument("--eps0", type=float, default=0.05)
    ap.add_argument("--a", type=float, default=1.0)
    ap.add_argument("--M0", type=float, default=3.0)
    ap.add_argument("--eta1", type=float, default=0.05)
    args = ap.parse_args()
    for path in sorted((ROOT / "configs").glob("*.json")):
        model = load_model(path)
        br, law = model.branching, model.displacement
        data = run(br, law, args.n)
        sandwich = check_sandwich(data)
        gt = check_joint_tail(law, args.eta1, "GT", br, horizon=args.n)
        pw = pointwise_bounds_check(data, gt.info["B"], args.eta1) if gt.passed else None
        b = check_branching_assumptions(br, "bounded", horizon=args.n)
        mt = check_marginal_assumptions(law, args.eps0, args.a, args.M0, br, horizon=args.n)
        parts = [
            f"{path.name:28s}",
            f"sandwich {'ok' if sandwich.passed else 'FAIL'}",
            f"pwbounds {'ok' if pw is not None and pw.passed else 'FAIL'} (B={gt.info.get('B')})",
        ]
        if b.passed and mt.passed:
            p = choose_params(b.info["k0"], b.info["m0"], args.eps0, args.a, args.M0, h=model.grid.h, min_mean=b.info["inf_mean"])
            exact = run(br, law.shifted(mt.info["shift"]), args.n, ["exact"])
            vb, rt = verify_bounded(exact, p), right_tail_check(exact, p)
            parts.append(f"sup L {vb.checks[0].witness['L']} ({'ok' if vb.passed else 'FAIL'}), delta1 {rt.checks[0].witness.get('delta1')}")
        else:
            failed = [c.name for r in (b, mt) for c in r.checks if not c.passed]
            parts.append(f"Lyapunov checks skipped: {', '.join(failed)} unmet")
        print("  ".join(parts))


if __name__ == "__main__":
    main()
