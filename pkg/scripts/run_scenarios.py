"""Run every shipped scenario and print its report lines and wall time."""
import argparse
from pathlib import Path

import numpy as np

from semiflow.scenario import load_scenario, run

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenarios", type=Path, default=ROOT / "scenarios")
    ap.add_argument("--out-dir", type=Path, default=None, help="write CSV/SVG here")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    worst = 0
    for path in sorted(args.scenarios.glob("*.ini")):
        rep = run(load_scenario(path), out_dir=args.out_dir, rng=np.random.default_rng(args.seed))
        worst = max(worst, rep.exit_code)
        print(f"== {path.name}  exit={rep.exit_code}  {rep.elapsed:.2f}s")
        for line in rep.lines():
            print("  " + line)
    return worst


if __name__ == "__main__":
    raise SystemExit(main())
