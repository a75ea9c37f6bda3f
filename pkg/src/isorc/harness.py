"""Experiment configs, Monte Carlo estimators and verification suites."""

from __future__ import annotations

import contextlib
import csv
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import events as ev
from . import lattice as lat
from . import quantum as qm
from . import rcm
from . import stt
from . import weights as wt

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _check_keys(d: dict, allowed, where: str) -> None:
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


# ----------------------------------------------------------------------------
# configuration


def _seq(v, n):
    if isinstance(v, (int, float)):
        return np.full(n, float(v))
    a = np.asarray(v, dtype=float)
    if len(a) != n:
        raise ConfigError(f"angle list has length {len(a)}, expected {n}")
    return a


def _angles(p: dict) -> lat.AngleSequences:
    if "n" in p:
        n = int(p["n"])
        w = h = 2 * n + 1
        i0 = j0 = -n
    else:
        w, h = int(p["width"]), int(p["height"])
        i0, j0 = int(p.get("i0", 0)), int(p.get("j0", 0))
    if "eps" in p:
        return lat.AngleSequences.alternating(float(p["eps"]), w, h, i0, j0)
    return lat.AngleSequences(_seq(p.get("alpha", 0.0), w), _seq(p.get("beta", math.pi / 2), h),
                              i0, j0)


@dataclass
class LatticeConfig:
    """``builder`` is one of square, geps, mixed, json.

    square: ``n`` (the box Λ(n)) or ``width``/``height``/``i0``/``j0``, with
    ``alpha``/``beta`` (scalar or list) or ``eps`` for alternating rows.
    geps: ``eps``, ``columns``, ``height``. mixed: ``seq1``/``seq2`` (square
    params) and ``M``, ``N1``, ``N2``, ``symmetric``. json: ``path``.
    """

    builder: str = "square"
    params: dict = field(default_factory=lambda: {"n": 4})

    BUILDERS = ("square", "geps", "mixed", "json")

    def __post_init__(self):
        if self.builder not in self.BUILDERS:
            raise ConfigError(f"unknown lattice builder {self.builder!r}")

    def build(self) -> lat.IsoradialGraph:
        p = self.params
        try:
            if self.builder == "square":
                return lat.build_square_lattice(_angles(p))
            if self.builder == "geps":
                return qm.build_geps(float(p["eps"]),
                                     qm.Region(int(p["columns"]), float(p["height"]))).graph
            if self.builder == "mixed":
                return lat.build_mixed(_angles(p["seq1"]), _angles(p["seq2"]), int(p["M"]),
                                       int(p.get("N1", 0)), int(p.get("N2", 0)),
                                       bool(p.get("symmetric", False)))
            with open(p["path"]) as fh:
                return lat.IsoradialGraph.from_json(fh.read())
        except KeyError as exc:
            raise ConfigError(f"lattice builder {self.builder!r} needs parameter {exc}") from None


@dataclass
class MeasureConfig:
    q: float = 1.0
    beta: float = 1.0
    bc: str = "free"

    def __post_init__(self):
        if self.bc not in ("free", "wired"):
            raise ConfigError("bc must be 'free' or 'wired'")
        try:
            wt.ModelParams(self.q, self.beta)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def spec(self, g) -> rcm.MeasureSpec:
        bc = rcm.BoundaryCondition.wired() if self.bc == "wired" else rcm.BoundaryCondition.free()
        return rcm.MeasureSpec.for_graph(g, wt.ModelParams(self.q, self.beta), bc)


@dataclass
class SamplerConfig:
    """Each replica is an independent chain: ``burn_in`` sweeps from the
    ``init`` state, then ``samples`` draws ``thin`` sweeps apart."""

    burn_in: int = 100
    samples: int = 1
    thin: int = 1
    replicas: int = 100
    init: str = "closed"

    def __post_init__(self):
        if self.burn_in < 0 or self.samples < 1 or self.thin < 1 or self.replicas < 1:
            raise ConfigError("sampler counts must be positive (burn_in >= 0)")
        if self.init not in ("closed", "open"):
            raise ConfigError("init must be 'closed' or 'open'")


@dataclass
class DecayConfig:
    ladder: list = field(default_factory=lambda: [4, 6, 8, 10, 12])
    margin: int = 4

    def __post_init__(self):
        if not self.ladder or min(self.ladder) < 1:
            raise ConfigError("decay ladder must hold positive radii")


def _event_from_dict(d: dict) -> ev.EventSpec:
    _check_keys(d, ("kind", "domain", "params", "color", "id"), "event")
    dom = d.get("domain")
    if dom is not None:
        dom = ev.DomainSpec(*dom) if isinstance(dom, list) else ev.DomainSpec(**dom)
    try:
        return ev.EventSpec(d["kind"], dom, dict(d.get("params", {})), d.get("color", "primal"))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad event spec: {exc}") from None


def _event_to_dict(e: ev.EventSpec) -> dict:
    d = {"kind": e.kind, "params": e.params, "color": e.color}
    if e.domain is not None:
        d["domain"] = [e.domain.i, e.domain.j, e.domain.k, e.domain.l]
    return d


def event_id(e: ev.EventSpec) -> str:
    parts = [e.kind, e.color]
    if e.domain is not None:
        parts.append("{}:{}x{}:{}".format(e.domain.i, e.domain.j, e.domain.k, e.domain.l))
    parts += [f"{k}={e.params[k]}" for k in sorted(e.params)]
    return "/".join(parts)


@dataclass
class ExperimentConfig:
    seed: int
    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    measure: MeasureConfig = field(default_factory=MeasureConfig)
    events: list = field(default_factory=list)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    decay: DecayConfig | None = None
    quantum: dict = field(default_factory=dict)
    demo: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    name: str = "experiment"
    schema_version: int = SCHEMA_VERSION

    KEYS = ("seed", "lattice", "measure", "events", "sampler", "decay", "quantum", "demo",
            "output", "name", "schema_version")

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {self.schema_version}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        _check_keys(d, cls.KEYS, "config")
        if "seed" not in d:
            raise ConfigError("seed is mandatory")
        kw = {"seed": d["seed"], "name": d.get("name", "experiment"),
              "schema_version": d.get("schema_version", SCHEMA_VERSION),
              "quantum": dict(d.get("quantum", {})), "demo": dict(d.get("demo", {})),
              "output": dict(d.get("output", {}))}
        try:
            if "lattice" in d:
                _check_keys(d["lattice"], ("builder", "params"), "lattice")
                kw["lattice"] = LatticeConfig(**d["lattice"])
            if "measure" in d:
                _check_keys(d["measure"], ("q", "beta", "bc"), "measure")
                kw["measure"] = MeasureConfig(**d["measure"])
            if "sampler" in d:
                _check_keys(d["sampler"], ("burn_in", "samples", "thin", "replicas", "init"),
                            "sampler")
                kw["sampler"] = SamplerConfig(**d["sampler"])
            if d.get("decay") is not None:
                _check_keys(d["decay"], ("ladder", "margin"), "decay")
                kw["decay"] = DecayConfig(**d["decay"])
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        kw["events"] = [_event_from_dict(e) for e in d.get("events", [])]
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "name": self.name, "seed": self.seed,
                "lattice": asdict(self.lattice), "measure": asdict(self.measure),
                "events": [_event_to_dict(e) for e in self.events],
                "sampler": asdict(self.sampler),
                "decay": None if self.decay is None else asdict(self.decay),
                "quantum": self.quantum, "demo": self.demo, "output": self.output}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


# ----------------------------------------------------------------------------
# estimates


@dataclass
class EstimateRecord:
    event: str
    estimate: float
    ci_low: float
    ci_high: float
    successes: int
    count: int
    autocorr: float
    wall: float

    def __post_init__(self):
        if self.count <= 0:
            raise ValueError("an estimate needs at least one sample")
        if not (0.0 <= self.ci_low <= self.ci_high <= 1.0):
            raise ValueError("interval must lie inside [0, 1]")

    CSV_FIELDS = ("event", "estimate", "ci_low", "ci_high", "successes", "count", "autocorr")


def wilson(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(int(successes), int(n)).proportion_ci(level, method="wilson")
    return max(0.0, float(ci.low)), min(1.0, float(ci.high))


def integrated_autocorr(x) -> float:
    """Integrated autocorrelation time with Sokal's self-consistent window."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4 or x.var() == 0:
        return 1.0
    y = x - x.mean()
    f = np.fft.rfft(y, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    tau = 1.0
    for w in range(1, n):
        tau += 2 * acf[w]
        if w >= 5 * tau:
            break
    return max(float(tau), 1.0)


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("RCM_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    return threads


def replica_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _reset(chain: rcm.HeatBathChain, rng, init: str) -> None:
    chain.rng = rng
    chain.order = rng.permutation(len(chain.state)).astype(np.int64)
    chain.state[:] = 1 if init == "open" else 0


def _chunks(n: int, k: int) -> list:
    k = max(1, min(n, k))
    edges = np.linspace(0, n, k + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _pool_map(fn, cfg_json: str, n: int, threads: int) -> list:
    """Run ``fn(cfg_json, lo, hi)`` over replica chunks; results in replica order."""
    chunks = _chunks(n, 4 * threads if threads > 1 else 1)
    args = [(cfg_json, a, b) for a, b in chunks]
    if threads == 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, *zip(*args)))


def _make_evaluators(g, evs):
    out = []
    for e in evs:
        if e.kind in ("horizontal", "vertical"):
            out.append(ev.CrossingDetector(g, e.domain, e.kind, e.color))
        else:
            out.append(lambda st, e=e: np.array([e.evaluate(g, s) for s in st], dtype=bool))
    return out


def _event_batch(cfg_json: str, lo: int, hi: int) -> np.ndarray:
    """Indicators of shape (replicas, samples, events) for replicas lo..hi-1."""
    cfg = ExperimentConfig.from_json(cfg_json)
    g = cfg.lattice.build()
    spec = cfg.measure.spec(g)
    evals = _make_evaluators(g, cfg.events)
    sc = cfg.sampler
    chain = rcm.HeatBathChain(g, spec, replica_rng(cfg.seed, lo))
    out = np.zeros((hi - lo, sc.samples, len(evals)), dtype=bool)
    for r in range(lo, hi):
        _reset(chain, replica_rng(cfg.seed, r), sc.init)
        chain.sweep(sc.burn_in)
        draws = chain.record(sc.samples, sc.thin)
        for k, f in enumerate(evals):
            out[r - lo, :, k] = f(draws)
    return out


def _sample_batch(cfg_json: str, lo: int, hi: int) -> np.ndarray:
    cfg = ExperimentConfig.from_json(cfg_json)
    g = cfg.lattice.build()
    sc = cfg.sampler
    chain = rcm.HeatBathChain(g, cfg.measure.spec(g), replica_rng(cfg.seed, lo))
    out = np.zeros((hi - lo, sc.samples, g.n_rhombi), dtype=np.uint8)
    for r in range(lo, hi):
        _reset(chain, replica_rng(cfg.seed, r), sc.init)
        chain.sweep(sc.burn_in)
        out[r - lo] = chain.record(sc.samples, sc.thin)
    return out


def sample_configs(cfg: ExperimentConfig, threads: int | None = None) -> np.ndarray:
    """States of shape (replicas, samples, edges), merged in replica order."""
    parts = _pool_map(_sample_batch, cfg.to_json(), cfg.sampler.replicas, resolve_threads(threads))
    return np.concatenate(parts, axis=0)


def estimate_events(cfg: ExperimentConfig, threads: int | None = None) -> list[EstimateRecord]:
    if not cfg.events:
        raise ConfigError("no events configured")
    threads = resolve_threads(threads)
    t0 = time.perf_counter()
    parts = _pool_map(_event_batch, cfg.to_json(), cfg.sampler.replicas, threads)
    ind = np.concatenate(parts, axis=0)
    wall = time.perf_counter() - t0
    recs = []
    for k, e in enumerate(cfg.events):
        x = ind[:, :, k]
        s, n = int(x.sum()), int(x.size)
        lo, hi = wilson(s, n)
        tau = float(np.mean([integrated_autocorr(row) for row in x])) if x.shape[1] > 1 else 1.0
        recs.append(EstimateRecord(event_id(e), s / n, lo, hi, s, n, tau, wall))
    return recs


def records_csv(recs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EstimateRecord.CSV_FIELDS)
    for r in recs:
        w.writerow([r.event, repr(r.estimate), repr(r.ci_low), repr(r.ci_high), r.successes,
                    r.count, repr(r.autocorr)])
    return buf.getvalue()


# ----------------------------------------------------------------------------
# decay


@dataclass
class DecayFit:
    slope: float
    intercept: float
    r2: float
    table: list
    censored: list

    def to_dict(self) -> dict:
        return asdict(self)


def _decay_batch(cfg_json: str, lo: int, hi: int) -> np.ndarray:
    """Radius of the origin's cluster (in track units) for every sample."""
    cfg = ExperimentConfig.from_json(cfg_json)
    g = _decay_graph(cfg)
    spec = cfg.measure.spec(g)
    pg = rcm.as_primal(g)
    rad = ev.track_radius(g)[pg.vertex_ids].astype(np.float64)
    src = pg.local(ev.origin_vertex(g))
    sc = cfg.sampler
    chain = rcm.HeatBathChain(g, spec, replica_rng(cfg.seed, lo))
    out = np.zeros((hi - lo, sc.samples), dtype=np.int64)
    for r in range(lo, hi):
        _reset(chain, replica_rng(cfg.seed, r), sc.init)
        chain.sweep(sc.burn_in)
        for s in range(sc.samples):
            if s:
                chain.sweep(sc.thin)
            out[r - lo, s] = int(chain.cluster_max(src, rad))
    return out


def _decay_graph(cfg: ExperimentConfig) -> lat.IsoradialGraph:
    d = cfg.decay or DecayConfig()
    p = dict(cfg.lattice.params)
    p.pop("width", None)
    p.pop("height", None)
    p["n"] = max(d.ladder) + d.margin
    return LatticeConfig(cfg.lattice.builder, p).build()


def fit_decay(ns, successes, count) -> DecayFit:
    """OLS of log P(radius >= n) on n; zero counts are censored."""
    table, xs, ys, cens = [], [], [], []
    for n, s in zip(ns, successes):
        lo, hi = wilson(int(s), count)
        table.append({"n": int(n), "successes": int(s), "count": int(count),
                      "estimate": s / count, "ci_low": lo, "ci_high": hi, "censored": s == 0})
        if s == 0:
            cens.append(int(n))
        else:
            xs.append(n)
            ys.append(math.log(s / count))
    if len(xs) < 2:
        return DecayFit(float("nan"), float("nan"), float("nan"), table, cens)
    res = stats.linregress(xs, ys)
    r2 = float(res.rvalue ** 2) if np.ptp(ys) > 0 else 1.0
    return DecayFit(float(res.slope), float(res.intercept), r2, table, cens)


def estimate_decay(cfg: ExperimentConfig, threads: int | None = None) -> DecayFit:
    """One window Λ(max ladder + margin); every sample records how far the
    origin's cluster reaches, giving all radius events at once."""
    if cfg.lattice.builder != "square":
        raise ConfigError("decay estimates need the square builder")
    d = cfg.decay or DecayConfig()
    threads = resolve_threads(threads)
    parts = _pool_map(_decay_batch, cfg.to_json(), cfg.sampler.replicas, threads)
    radii = np.concatenate(parts, axis=0).ravel()
    succ = [int((radii >= n).sum()) for n in d.ladder]
    return fit_decay(d.ladder, succ, len(radii))


# ----------------------------------------------------------------------------
# track exchange demo


def _boundary_points(g) -> dict:
    keep = np.flatnonzero(g.primal & g.used & g.boundary_mask)
    return {tuple(np.round(g.pos[v], 9)): int(v) for v in keep}


@dataclass
class DemoResult:
    steps: int
    max_law_diff: float
    max_event_diff: float
    events_checked: int
    records: list

    @property
    def passed(self) -> bool:
        return self.max_law_diff <= 1e-10 and self.max_event_diff <= 1e-10


def track_exchange_demo(gmix: lat.IsoradialGraph, q: float, mode: str = "sigma_up",
                        pair=None, seed: int = 0, bc: str = "free") -> DemoResult:
    """Run Σ↑/Σ↓ (or one exchange) and compare exact before/after laws.

    The full pushforward law is compared with the law on the final graph and
    every connection pattern of three boundary vertices present in both
    graphs is compared between the initial and the final law.
    """
    bcs = rcm.BoundaryCondition.wired() if bc == "wired" else rcm.BoundaryCondition.free()
    spec0 = rcm.MeasureSpec.for_graph(gmix, wt.ModelParams(q), bcs)
    if gmix.n_rhombi > rcm.ENUM_CAP:
        raise ConfigError("window too large for exact enumeration")
    law0 = rcm.exact_distribution(gmix, spec0)
    rng = np.random.default_rng(seed)
    cfg0 = rcm.Configuration(np.zeros(gmix.n_rhombi, np.uint8), gmix.version)
    if mode == "exchange":
        t, u = pair
        gf, _, recs, plan = stt.track_exchange(gmix, t, u, cfg0, rng, q)
        steps = plan.pre_moves + plan.slides
    else:
        fn = stt.sigma_up if mode == "sigma_up" else stt.sigma_down
        gf, _, recs, steps = fn(gmix, cfg0, rng, q)
    g_end, probs = stt.pushforward(gmix, spec0, steps, law0.probs)
    spec1 = rcm.MeasureSpec.for_graph(g_end, wt.ModelParams(q), bcs)
    law1 = rcm.exact_distribution(g_end, spec1)
    diff = float(np.abs(probs - law1.probs).max())
    b0, b1 = _boundary_points(gmix), _boundary_points(g_end)
    common = sorted(set(b0) & set(b1))
    worst, n_ev = 0.0, 0
    for trip in itertools.combinations(common, 3):
        p0 = law0.pattern_law([b0[x] for x in trip])
        p1 = law1.pattern_law([b1[x] for x in trip])
        for key in set(p0) | set(p1):
            worst = max(worst, abs(p0.get(key, 0.0) - p1.get(key, 0.0)))
            n_ev += 1
    return DemoResult(len(steps), diff, worst, n_ev, [r.to_dict() for r in recs])


def default_mixture(width: int = 3):
    """3-wide mixture of a one-row square block and a one-row pi/3 block."""
    a = lat.AngleSequences(np.zeros(width), [math.pi / 2], -(width // 2), 0)
    b = lat.AngleSequences(np.zeros(width), [math.pi / 3], -(width // 2), 0)
    return lat.build_mixed(a, b, 1, 0, 0)


# ----------------------------------------------------------------------------
# verification suites


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    tol: float | None = None
    detail: str = ""


@dataclass
class Report:
    suite: str
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed,
                "checks": [asdict(c) for c in self.checks],
                "failed": [c.name for c in self.checks if not c.passed]}


def _close(name, value, tol, detail="") -> Check:
    v = float(value)
    return Check(name, bool(abs(v) <= tol), v, tol, detail)


@contextlib.contextmanager
def inject(**overrides):
    """Temporarily replace module-level functions of the weights module
    (fault injection for the verification suites)."""
    old = {k: getattr(wt, k) for k in overrides}
    for k, v in overrides.items():
        setattr(wt, k, v)
    try:
        yield
    finally:
        for k, v in old.items():
            setattr(wt, k, v)


def _random_triangle(rng):
    while True:
        a, b = rng.uniform(0.3, math.pi - 0.3, 2)
        c = 2 * math.pi - a - b
        if 0.3 <= c <= math.pi - 0.3:
            return a, b, c


def _pattern_rows(law: rcm.ExactLaw, marked) -> np.ndarray:
    """Unnormalised weights of: all apart, A-B, B-C, C-A, all joined."""
    z = math.exp(law.log_z)
    pl = law.pattern_law(marked)
    rows = np.zeros(5)
    for key, p in pl.items():
        a, b, c = key
        if a == b == c:
            rows[4] += p
        elif a == b:
            rows[1] += p
        elif b == c:
            rows[2] += p
        elif a == c:
            rows[3] += p
        else:
            rows[0] += p
    return rows * z


def star_triangle_rows(y, q: float, bc: rcm.BoundaryCondition):
    """Unnormalised connection rows for the triangle ABC (edge weights
    y_a on BC, y_b on CA, y_c on AB) and the star with y' = q / y."""
    y = np.asarray(y, dtype=float)
    tri = rcm.PrimalGraph.from_edges(3, np.array([[1, 2], [2, 0], [0, 1]]), np.arange(3))
    star = rcm.PrimalGraph.from_edges(4, np.array([[3, 0], [3, 1], [3, 2]]), np.arange(3))
    mp = wt.ModelParams(q)
    lt = rcm.exact_distribution(tri, rcm.MeasureSpec(mp, bc, y))
    ls = rcm.exact_distribution(star, rcm.MeasureSpec(mp, bc, q / y))
    return _pattern_rows(lt, [0, 1, 2]), _pattern_rows(ls, [0, 1, 2])


PARTITIONS = {
    "free": rcm.BoundaryCondition.free(),
    "wired": rcm.BoundaryCondition.wired(),
    "AB|C": rcm.BoundaryCondition.partition([[0, 1], [2]]),
    "BC|A": rcm.BoundaryCondition.partition([[1, 2], [0]]),
    "CA|B": rcm.BoundaryCondition.partition([[2, 0], [1]]),
}


def stt_table_check(n: int = 50, seed: int = 0) -> tuple[float, float]:
    """Worst normalised-row difference and worst ratio error over random
    triangles and every boundary partition."""
    rng = np.random.default_rng(seed)
    worst_row = worst_ratio = 0.0
    for _ in range(n):
        q = float(rng.uniform(1, 8))
        y = np.array(wt.triple_from_angles(*_random_triangle(rng), q).as_tuple())
        target = q * q / y.prod()
        for bc in PARTITIONS.values():
            rt, rs = star_triangle_rows(y, q, bc)
            worst_row = max(worst_row, float(np.abs(rt / rt.sum() - rs / rs.sum()).max()))
            worst_ratio = max(worst_ratio, float(np.abs(rs / rt / target - 1).max()))
    return worst_row, worst_ratio


def hexagon_fixture(width: int = 8):
    """Convexified two-row block with rows (pi/3, 2pi/3): width 8 gives 17
    edges and a single star-triangle site."""
    g = lat.build_square_lattice(lat.AngleSequences(np.zeros(width),
                                                    [math.pi / 3, 2 * math.pi / 3],
                                                    -(width // 2), 0))
    g, _ = lat.convexify(g)
    return g


def embedded_stt_check(g, q: float, bc: rcm.BoundaryCondition) -> float:
    site = stt.find_stt_sites(g)[0]
    spec = rcm.MeasureSpec.for_graph(g, wt.ModelParams(q), bc)
    g2, probs = stt.pushforward(g, spec, [site.tracks])
    ref = rcm.exact_distribution(g2, rcm.MeasureSpec.for_graph(g2, wt.ModelParams(q), bc)).probs
    return float(np.abs(probs - ref).max())


def verify_stt() -> Report:
    ch = []
    row, ratio = stt_table_check()
    ch.append(_close("table_rows_equal", row, 1e-10))
    ch.append(_close("table_ratio", ratio, 1e-10))
    g = hexagon_fixture()
    for name, bc in (("free", rcm.BoundaryCondition.free()), ("wired", rcm.BoundaryCondition.wired())):
        ch.append(_close(f"pushforward_{name}", embedded_stt_check(g, 2.0, bc), 1e-10))
    site = stt.find_stt_sites(g)[0]
    g1 = stt.transform_graph(g, site)
    g2 = stt.transform_graph(g1, stt.site_at(g1, site.center))
    ch.append(Check("involution", g2.geometry_hash() == g.geometry_hash()))
    sym = np.array(wt.triple_from_angles(*(3 * [2 * math.pi / 3]), 2.0).as_tuple())
    tab = stt.outcome_table("triangle", 0, sym, 2.0)
    ch.append(_close("coupling_normalised", sum(p for _, p in tab) - 1, 1e-12))
    demo = track_exchange_demo(default_mixture(), 2.0)
    ch.append(_close("sigma_up_law", max(demo.max_law_diff, demo.max_event_diff), 1e-10))
    return Report("stt", ch)


def verify_weights() -> Report:
    ch = []
    worst = max(abs(wt.edge_weight(math.pi / 2, q).p - math.sqrt(q) / (1 + math.sqrt(q)))
                for q in (1, 2, 3, 4, 6, 10))
    ch.append(_close("self_dual", worst, 1e-12))
    rng = np.random.default_rng(1)
    tri = star = 0.0
    for _ in range(50):
        q = float(rng.uniform(1, 8))
        w = wt.triple_from_angles(*_random_triangle(rng), q)
        tri = max(tri, abs(wt.triangle_residual(w, q)) / q)
        star = max(star, abs(wt.star_residual(wt.star_from_triangle(w, q), q)) / q ** 2)
    ch.append(_close("triangle_relation", tri, 1e-9))
    ch.append(_close("star_relation", star, 1e-9))
    ratio = max(abs(wt.quantum_rates(q).mu0 / wt.quantum_rates(q).lambda0 / q - 1)
                for q in np.arange(1.0, 10.01, 0.5))
    ch.append(_close("rate_ratio", ratio, 1e-12))
    grid = np.linspace(0.1, math.pi - 0.1, 20)
    forms, top = 0.0, 0.0
    for q in (1.0, 2.0, 3.0, 3.9):
        for A, B in itertools.product(grid, grid):
            if B <= A:
                continue
            e = wt.drift_eta(A, B, q)
            top = max(top, e)
            forms = max(forms, abs(e - wt.drift_eta_sine(A, B, q)),
                        abs(e - wt.drift_eta_cosine(A, B, q)))
    ch.append(_close("drift_forms", forms, 1e-12))
    ch.append(Check("eta_below_one", top < 1, top, 1.0))
    ch.append(_close("zeta_2", wt.zeta(2.0) - 2 * math.sqrt(2 + math.sqrt(2)) / math.pi ** 2, 1e-12))
    return Report("weights", ch)


def duality_exhaustive(width: int, height: int) -> int:
    g = lat.build_square_lattice(lat.AngleSequences.regular(width, height))
    dom = ev.DomainSpec(0, width - 1, 0, height - 1)
    m = g.n_rhombi
    idx = np.arange(1 << m, dtype=np.int64)
    states = ((idx[:, None] >> np.arange(m)) & 1).astype(np.uint8)
    h = ev.CrossingDetector(g, dom, "horizontal", "primal")(states)
    v = ev.CrossingDetector(g, dom, "vertical", "dual")(states)
    return int((h == v).sum())


def duality_sampled(size: int, q: float, samples: int, seed: int) -> int:
    g = lat.build_square_lattice(lat.AngleSequences.regular(size, size))
    dom = ev.DomainSpec(0, size - 1, 0, size - 1)
    chain = rcm.HeatBathChain(g, rcm.MeasureSpec.for_graph(g, wt.ModelParams(q)),
                              np.random.default_rng(seed))
    chain.sweep(50)
    states = chain.record(samples)
    h = ev.CrossingDetector(g, dom, "horizontal", "primal")(states)
    v = ev.CrossingDetector(g, dom, "vertical", "dual")(states)
    return int((h == v).sum())


def verify_duality(samples: int = 10000) -> Report:
    ch = [Check("xor_2x3", duality_exhaustive(2, 3) == 0, None, None, "exhaustive"),
          Check("xor_3x2", duality_exhaustive(3, 2) == 0, None, None, "exhaustive")]
    for q in (1.0, 2.0, 5.0):
        bad = duality_sampled(8, q, samples, 7)
        ch.append(Check(f"xor_8x8_q{q:g}", bad == 0, float(bad), 0.0, f"{samples} samples"))
    return Report("duality", ch)


def verify_quantum() -> Report:
    ch = []
    ratio = max(abs(wt.quantum_rates(q).mu0 / (q * wt.quantum_rates(q).lambda0) - 1)
                for q in np.arange(1.0, 10.01, 0.5))
    ch.append(_close("rate_ratio", ratio, 1e-12))
    tv, _ = qm.poisson_limit_check(0.05, 4.0, 2.0, 200000, np.random.default_rng(3))
    ch.append(Check("poisson_limit", tv < 0.05, tv, 0.05))
    tvs = qm.self_convergence([0.2, 0.1, 0.05], 1.0, 2.0)
    ch.append(Check("cauchy_decreasing", bool(tvs[0] > tvs[1] > tvs[2]), tvs[-1], None,
                    json.dumps(tvs)))
    p = qm.QuantumParams.critical(2.0)
    ch.append(Check("critical_ratio", p.is_critical))
    return Report("quantum", ch)


SUITES = {"stt": verify_stt, "weights": verify_weights, "duality": verify_duality,
          "quantum": verify_quantum}


def verify(suite: str) -> Report:
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    return SUITES[suite]()
