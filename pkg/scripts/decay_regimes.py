"""Slope of log P(origin reaches radius n) in the three regimes.

    python3 scripts/decay_regimes.py --replicas 8 --samples 500
"""

import argparse

from isorc import harness as H

CASES = [(10.0, 1.0, "critical, q > 4"), (2.0, 0.5, "subcritical"), (2.0, 1.0, "critical, q <= 4")]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ladder", type=int, nargs="+", default=list(range(4, 13)))
    ap.add_argument("--replicas", type=int, default=8)
    ap.add_argument("--samples", type=int, default=500)
    ap.add_argument("--seed", type=int, default=90)
    ap.add_argument("--threads", type=int)
    a = ap.parse_args()
    for k, (q, beta, label) in enumerate(CASES):
        cfg = H.ExperimentConfig.from_dict({
            "seed": a.seed + k, "lattice": {"builder": "square", "params": {"n": max(a.ladder)}},
            "measure": {"q": q, "beta": beta},
            "sampler": {"burn_in": 200, "samples": a.samples, "thin": 2, "replicas": a.replicas},
            "decay": {"ladder": a.ladder, "margin": 4}})
        fit = H.estimate_decay(cfg, a.threads)
        print(f"q={q:g} beta={beta:g} ({label}): slope {fit.slope:.4f}  R2 {fit.r2:.3f}  "
              f"censored {fit.censored}")


if __name__ == "__main__":
    main()
