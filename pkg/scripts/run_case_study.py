#!/usr/bin/env python3
"""End-to-end case study: both flux cases, all four strategies.

Produces, per case, in the output directory:
  <case>_results.csv   one row per batch and strategy
  <case>_stats.csv     Tukey box-plot statistics of tf and regret
  <case>_windows.json  switching-time windows of the prior box
  <case>_bounds.csv    estimator box trace of one seeded batch
  <case>_traj.csv      trajectory of one adaptive batch
"""

import argparse
import time
from pathlib import Path

from dfrto.cli import main as cli


def run(case: str, outdir: Path, n: int, seed: int) -> None:
    t0 = time.perf_counter()
    print(f"== {case}: {n} batches, master seed {seed}")
    assert cli(["montecarlo", "--n", str(n), "--seed", str(seed), "--case", case,
                "--out", str(outdir / f"{case}_results.csv"), "--progress"]) == 0
    assert cli(["summarize", "--input", str(outdir / f"{case}_results.csv"),
                "--out", str(outdir / f"{case}_stats.csv")]) == 0
    assert cli(["reach", "--case", case,
                "--out", str(outdir / f"{case}_windows.json")]) == 0
    assert cli(["simulate", "--case", case, "--strategy", "adaptive",
                "--seed", str(seed), "--out", str(outdir / f"{case}_traj.csv")]) == 0
    # estimator trace from the recorded trajectory's flux samples
    traj = (outdir / f"{case}_traj.csv").read_text().strip().split("\n")[1:]
    lines = ["t,q_m,c1,c2"]
    for row in traj[:: max(1, len(traj) // 2000)]:
        t, c1, c2, _, _, q = row.split(",")
        lines.append(f"{t},{q},{c1},{c2}")
    meas = outdir / f"{case}_meas.csv"
    meas.write_text("\n".join(lines) + "\n")
    assert cli(["estimate", "--input", str(meas), "--case", case,
                "--out", str(outdir / f"{case}_bounds.csv")]) == 0
    print(f"   done in {time.perf_counter() - t0:.0f} s\n")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results", help="output directory")
    ap.add_argument("--n", type=int, default=1000, help="batches per case")
    ap.add_argument("--seed", type=int, default=20240801)
    args = ap.parse_args()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for case in ("limiting_flux", "generalized"):
        run(case, outdir, args.n, args.seed)


if __name__ == "__main__":
    main()
