"""Critical crossing probability of a square box for several q and sizes.

Box crossings should stay bounded away from 0 and 1 as the box grows.

    python3 scripts/crossing_vs_size.py --sizes 4 8 12 --q 1 2 3 --replicas 400
"""

import argparse

from isorc import harness as H


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 8, 12])
    ap.add_argument("--q", type=float, nargs="+", default=[1.0, 2.0, 3.0])
    ap.add_argument("--eps", type=float, help="alternating angles instead of the square lattice")
    ap.add_argument("--replicas", type=int, default=400)
    ap.add_argument("--burn-in", type=int, default=300)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--threads", type=int)
    a = ap.parse_args()
    print("q,n,estimate,ci_low,ci_high")
    for q in a.q:
        for n in a.sizes:
            params = {"n": n}
            if a.eps is not None:
                params["eps"] = a.eps
            cfg = H.ExperimentConfig.from_dict({
                "seed": a.seed, "lattice": {"builder": "square", "params": params},
                "measure": {"q": q},
                "sampler": {"burn_in": 1 if q == 1 else a.burn_in, "replicas": a.replicas},
                "events": [{"kind": "horizontal", "domain": [-n, n, -n, n]}]})
            (rec,) = H.estimate_events(cfg, a.threads)
            print(f"{q:g},{n},{rec.estimate:.4f},{rec.ci_low:.4f},{rec.ci_high:.4f}", flush=True)


if __name__ == "__main__":
    main()
