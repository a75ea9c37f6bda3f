"""Tabulate the drift constants eta, delta and zeta over q and eps."""

import argparse

from isorc import weights as wt


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--q", type=float, nargs="+", default=[1.0, 2.0, 3.0, 4.0])
    ap.add_argument("--eps", type=float, nargs="+", default=[0.05, 0.1, 0.3, 0.6])
    a = ap.parse_args()
    print(f"{'q':>5} {'eps':>6} {'eta':>8} {'delta':>10} {'zeta':>8} {'r':>8}")
    for q in a.q:
        for eps in a.eps:
            d = wt.drift_constants(eps, q)
            print(f"{q:5g} {eps:6g} {d.eta:8.4f} {d.delta:10.3e} {d.zeta:8.4f} {d.r:8.4f}")


if __name__ == "__main__":
    main()
