"""Command-line entry point: ``isorc <verb> [--config PATH] [--seed N] ...``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import harness as H
from . import quantum as qm
from . import stt

CROSSING_KINDS = ("horizontal", "vertical", "circuit", "radius")
ARM_KINDS = ("arm", "base-arm")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isorc", description="Random-cluster experiments on isoradial graphs.")
    p.add_argument("verb", choices=["verify", "build-lattice", "sample", "estimate-crossing",
                                    "estimate-decay", "estimate-arm", "quantum",
                                    "track-exchange-demo", "export"])
    p.add_argument("suite", nargs="?", help="suite name for verify: " + ", ".join(H.SUITES))
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--threads", type=int, help="worker processes (default: $RCM_THREADS or 1)")
    p.add_argument("--out", type=Path, default=Path("."))
    return p


def _load(args) -> H.ExperimentConfig:
    if args.config is None:
        if args.seed is None:
            raise H.ConfigError("a --config (or at least --seed) is required")
        return H.ExperimentConfig(seed=args.seed)
    cfg = H.ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.__post_init__()
    return cfg


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n"


def _estimate(cfg, args, kinds) -> int:
    bad = [e.kind for e in cfg.events if e.kind not in kinds]
    if bad or not cfg.events:
        raise H.ConfigError(f"this verb estimates {kinds} events; got {bad or 'none'}")
    recs = H.estimate_events(cfg, args.threads)
    _write(args.out, "estimates.csv", H.records_csv(recs))
    _write(args.out, "estimates.json", _dump([r.__dict__ for r in recs]))
    for r in recs:
        print(f"{r.event}: {r.estimate:.4f} [{r.ci_low:.4f}, {r.ci_high:.4f}] n={r.count}")
    return 0


def cmd_verify(args) -> int:
    if args.suite is None:
        raise H.ConfigError("verify needs a suite name")
    rep = H.verify(args.suite)
    text = _dump(rep.to_dict())
    _write(args.out, f"verify_{args.suite}.json", text)
    print(text, end="")
    return 0 if rep.passed else 1


def cmd_build(args) -> int:
    cfg = _load(args)
    g = cfg.lattice.build()
    g.validate()
    _write(args.out, "lattice.json", g.to_json())
    print(f"vertices={int(g.used.sum())} edges={g.n_rhombi} tracks={len(g.track_label)} "
          f"hash={g.geometry_hash()}")
    return 0


def cmd_sample(args) -> int:
    cfg = _load(args)
    states = H.sample_configs(cfg, args.threads)
    lines = []
    for r, block in enumerate(states):
        for s, st in enumerate(block):
            lines.append(json.dumps({"replica": r, "sample": s, "state": "".join(map(str, st))}))
    _write(args.out, "samples.jsonl", "\n".join(lines) + "\n")
    print(f"wrote {len(lines)} configurations")
    return 0


def cmd_decay(args) -> int:
    cfg = _load(args)
    fit = H.estimate_decay(cfg, args.threads)
    rows = fit.table
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "decay.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    _write(args.out, "decay.json", _dump({"slope": fit.slope, "intercept": fit.intercept,
                                          "r2": fit.r2, "censored": fit.censored}))
    print(f"slope={fit.slope:.5f} intercept={fit.intercept:.5f} r2={fit.r2:.4f} "
          f"censored={fit.censored}")
    return 0


def cmd_quantum(args) -> int:
    cfg = _load(args)
    qc = dict(cfg.quantum)
    q = float(qc.get("q", cfg.measure.q))
    conv = qc.get("convention", "rescaled")
    if "lam" in qc:
        params = qm.QuantumParams(float(qc["lam"]), float(qc["mu"]), q)
    else:
        params = qm.QuantumParams.critical(q, conv)
    region = qm.Region(int(qc.get("width", 4)), float(qc.get("height", 2.0)))
    rng = np.random.default_rng(cfg.seed)
    lines, counts = [], []
    for _ in range(int(qc.get("samples", 10))):
        cc = qm.sample_quantum(params, region, qc.get("method", "discretized"), rng,
                               float(qc.get("eps", 0.05)), int(qc.get("sweeps", 200)), conv)
        counts.append(qm.continuum_clusters(cc).count)
        lines.append(cc.to_json())
    _write(args.out, "continuum.jsonl", "\n".join(lines) + "\n")
    report = {"params": params.__dict__, "critical": params.is_critical, "convention": conv,
              "clusters": counts}
    _write(args.out, "quantum.json", _dump(report))
    print(_dump(report), end="")
    return 0


def cmd_demo(args) -> int:
    cfg = _load(args)
    if cfg.lattice.builder == "mixed":
        gmix = cfg.lattice.build()
    else:
        gmix = H.default_mixture(int(cfg.demo.get("width", 3)))
    mode = cfg.demo.get("mode", "sigma_up")
    res = H.track_exchange_demo(gmix, cfg.measure.q, mode, cfg.demo.get("pair"), cfg.seed,
                                cfg.measure.bc)
    _write(args.out, "stt_log.jsonl", "".join(json.dumps(r, sort_keys=True) + "\n"
                                              for r in res.records))
    summary = {"steps": res.steps, "max_law_diff": res.max_law_diff,
               "max_event_diff": res.max_event_diff, "events_checked": res.events_checked,
               "passed": res.passed}
    _write(args.out, "demo.json", _dump(summary))
    print(_dump(summary), end="")
    return 0 if res.passed else 1


def cmd_export(args) -> int:
    cfg = _load(args)
    g = cfg.lattice.build()
    _write(args.out, "lattice.json", g.to_json())
    ee, th = g.edge_endpoints, g.theta
    with open(args.out / "edges.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["edge", "u", "v", "theta", "ux", "uy", "vx", "vy"])
        for e, (u, v) in enumerate(ee):
            w.writerow([e, int(u), int(v), repr(float(th[e])), *map(float, g.pos[u]),
                        *map(float, g.pos[v])])
    _write(args.out, "config.json", cfg.to_json() + "\n")
    print(f"exported {g.n_rhombi} edges to {args.out}")
    return 0


VERBS = {
    "verify": cmd_verify,
    "build-lattice": cmd_build,
    "sample": cmd_sample,
    "estimate-crossing": lambda a: _estimate(_load(a), a, CROSSING_KINDS),
    "estimate-arm": lambda a: _estimate(_load(a), a, ARM_KINDS),
    "estimate-decay": cmd_decay,
    "quantum": cmd_quantum,
    "track-exchange-demo": cmd_demo,
    "export": cmd_export,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return VERBS[args.verb](args)
    except (H.ConfigError, stt.LatticeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
