"""Quantum random-cluster model on Z x R and its G^eps discretisation.

Conventions: the discretised lattice has primal columns at x ~ 2k and rows
of height ~ eps. In the *dilated* picture (2Z x R) closed short edges and
open long edges converge to Poisson processes of intensities lambda0 and
mu0. The default *rescaled* picture halves all lengths (Z x R), giving
intensities 2*lambda0 and 2*mu0; a column of height h then spans 2h/eps
rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .lattice import AngleSequences, IsoradialGraph, build_square_lattice
from .rcm import (BoundaryCondition, HeatBathChain, MeasureSpec, exact_count_law)
from .weights import ModelParams, quantum_rates

CONVENTIONS = ("rescaled", "dilated")


@dataclass(frozen=True)
class QuantumParams:
    lam: float
    mu: float
    q: float

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ValueError("cut and bridge intensities must be positive")
        if not self.q >= 1:
            raise ValueError("q must be >= 1")

    @property
    def is_critical(self) -> bool:
        return abs(self.mu / self.lam - self.q) <= 1e-12 * self.q

    @classmethod
    def critical(cls, q: float, convention: str = "rescaled") -> "QuantumParams":
        """Intensities reached by G^eps as eps -> 0."""
        r = quantum_rates(q)
        f = _factor(convention)
        return cls(f * r.lambda0, f * r.mu0, q)


def _factor(convention: str) -> float:
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    return 2.0 if convention == "rescaled" else 1.0


@dataclass(frozen=True)
class Region:
    """Columns 0..width-1 over heights [0, height]."""

    width: int
    height: float

    def __post_init__(self):
        if self.width < 1 or self.height < 0:
            raise ValueError("region needs width >= 1 and height >= 0")


@dataclass
class ContinuumConfig:
    """Cuts on columns and bridges on gaps (gap k joins columns k, k+1).

    Discretisation-sourced configurations also carry integer tick positions
    so that heights are exact multiples of ``tick``.
    """

    region: Region
    cuts: list
    bridges: list
    tick: float | None = None
    cut_ticks: list | None = None
    bridge_ticks: list | None = None

    def __post_init__(self):
        w, h = self.region.width, self.region.height
        if len(self.cuts) != w or len(self.bridges) != max(w - 1, 0):
            raise ValueError("cut/bridge arrays do not match the region width")
        self.cuts = [np.sort(np.asarray(c, dtype=float)) for c in self.cuts]
        self.bridges = [np.sort(np.asarray(b, dtype=float)) for b in self.bridges]
        for arr in self.cuts + self.bridges:
            if len(arr) and (arr[0] < 0 or arr[-1] > h or not np.all(np.isfinite(arr))):
                raise ValueError("event heights must lie inside the region")

    def to_dict(self) -> dict:
        d = {"region": {"width": self.region.width, "height": self.region.height},
             "cuts": [c.tolist() for c in self.cuts],
             "bridges": [b.tolist() for b in self.bridges]}
        if self.tick is not None:
            d["tick"] = self.tick
            d["cut_ticks"] = [list(map(int, c)) for c in self.cut_ticks]
            d["bridge_ticks"] = [list(map(int, b)) for b in self.bridge_ticks]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ContinuumConfig":
        reg = Region(d["region"]["width"], d["region"]["height"])
        if "tick" in d:
            t = d["tick"]
            return cls(reg, [np.asarray(c) * t for c in d["cut_ticks"]],
                       [np.asarray(b) * t for b in d["bridge_ticks"]], t,
                       d["cut_ticks"], d["bridge_ticks"])
        return cls(reg, d["cuts"], d["bridges"])

    @classmethod
    def from_json(cls, text: str) -> "ContinuumConfig":
        return cls.from_dict(json.loads(text))

    def cut_counts(self) -> np.ndarray:
        return np.array([len(c) for c in self.cuts])


# ----------------------------------------------------------------------------
# clusters


@dataclass
class Clusters:
    count: int
    _cfg: ContinuumConfig = field(repr=False)
    _labels: list = field(repr=False)

    def _interval(self, col: int, h: float) -> int:
        reg = self._cfg.region
        if not (0 <= col < reg.width and 0 <= h <= reg.height):
            raise ValueError("query point outside the region")
        return int(np.searchsorted(self._cfg.cuts[col], h, side="right"))

    def label(self, col: int, h: float) -> int:
        return self._labels[col][self._interval(col, h)]

    def connected(self, a, b) -> bool:
        return self.label(*a) == self.label(*b)

    def touches_top(self, col: int, h: float) -> bool:
        lab = self.label(col, h)
        return any(self._labels[c][-1] == lab for c in range(self._cfg.region.width))

    def touches_bottom(self, col: int, h: float) -> bool:
        lab = self.label(col, h)
        return any(self._labels[c][0] == lab for c in range(self._cfg.region.width))


def continuum_clusters(cc: ContinuumConfig) -> Clusters:
    """Components of (columns minus cuts) plus bridges."""
    offs = [0]
    for c in cc.cuts:
        offs.append(offs[-1] + len(c) + 1)
    parent = list(range(offs[-1]))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for k, br in enumerate(cc.bridges):
        if len(br) == 0:
            continue
        ia = np.searchsorted(cc.cuts[k], br, side="right")
        ib = np.searchsorted(cc.cuts[k + 1], br, side="right")
        for a, b in zip(ia, ib):
            ra, rb = find(offs[k] + int(a)), find(offs[k + 1] + int(b))
            if ra != rb:
                parent[ra] = rb
    roots = [find(x) for x in range(offs[-1])]
    uniq = {r: i for i, r in enumerate(dict.fromkeys(roots))}
    labels = [[uniq[roots[x]] for x in range(offs[k], offs[k + 1])]
              for k in range(len(cc.cuts))]
    return Clusters(len(uniq), cc, labels)


# ----------------------------------------------------------------------------
# discretisation


@dataclass
class DiscretizationSpec:
    eps: float
    region: Region
    graph: IsoradialGraph
    rows: int
    row_height: float
    convention: str = "rescaled"
    beta: float = 1.0

    @property
    def short_length(self) -> float:
        return 2 * math.sin(self.eps / 2)

    @property
    def long_length(self) -> float:
        return 2 * math.cos(self.eps / 2)


def build_geps(eps: float, region: Region, convention: str = "rescaled",
               time_scale: float = 1.0) -> DiscretizationSpec:
    """G^eps window whose primal columns 0..w-1 cover heights [0, h].

    Uses vertical tracks s_{-1}..s_{2w-3} and round(2h / (eps * time_scale))
    horizontal tracks (rescaled picture; h / eps in the dilated one).
    """
    if not (0 < eps <= math.pi / 2):
        raise ValueError("eps must lie in (0, pi/2]")
    f = _factor(convention)
    w = region.width
    row_h = eps * time_scale / f
    rows = int(round(region.height / row_h))
    width = 2 * w - 1
    seqs = AngleSequences.alternating(eps, width, max(rows, 1), -1, 0)
    g = build_square_lattice(seqs)
    g.meta["geps"] = {"eps": eps, "columns": w, "rows": rows, "convention": convention}
    return DiscretizationSpec(eps, region, g, rows, row_h, convention)


def edge_roles(spec: DiscretizationSpec):
    """For each primal edge: (row, kind, column) with kind 'cut' for short
    vertical edges and 'bridge' for long ones (column = left column of the
    gap), plus the bridge direction (+1 up-right, -1 up-left)."""
    g = spec.graph
    ij = g.meta["ij"]
    ee = g.edge_endpoints
    col = (ij[:, 0] + (ij[:, 1] % 2)) // 2
    w = spec.region.width
    roles = []
    for e in range(g.n_rhombi):
        a, b = ee[e]
        if ij[a, 1] > ij[b, 1]:
            a, b = b, a
        row = int(ij[a, 1])
        ca, cb = int(col[a]), int(col[b])
        if not (0 <= ca < w and 0 <= cb < w) or row >= spec.rows:
            roles.append((row, "outside", -1, 0))
        elif ca == cb:
            roles.append((row, "cut", ca, 0))
        else:
            roles.append((row, "bridge", min(ca, cb), 1 if cb > ca else -1))
    return roles


def _ticks_in_row(kind: str, k: int, direction: int, w: int) -> int:
    """Sub-row position keeping continuum connectivity equal to the lattice's.

    For up-right bridges column k's cut must sit above bridge k and column
    k+1's cut below it; mirrored for up-left bridges. Vertices sit at 0.
    """
    if direction > 0:
        return 2 * (w - k) if kind == "cut" else 2 * (w - k) - 1
    return 2 * k + 1 if kind == "cut" else 2 * k + 2


def _row_direction(roles, row) -> int:
    for r, kind, _, d in roles:
        if r == row and kind == "bridge":
            return d
    return 1


def to_continuum(spec: DiscretizationSpec, state) -> ContinuumConfig:
    """Closed short edges become cuts, open long edges become bridges."""
    state = np.asarray(getattr(state, "state", state))
    w = spec.region.width
    roles = edge_roles(spec)
    dirs = {}
    per_row = 2 * w + 2
    tick = spec.row_height / per_row
    cut_t = [[] for _ in range(w)]
    br_t = [[] for _ in range(max(w - 1, 0))]
    for e, (row, kind, k, d) in enumerate(roles):
        if kind == "outside":
            continue
        if row not in dirs:
            dirs[row] = _row_direction(roles, row)
        base = row * per_row
        if kind == "cut" and not state[e]:
            cut_t[k].append(base + _ticks_in_row("cut", k, dirs[row], w))
        elif kind == "bridge" and state[e]:
            br_t[k].append(base + _ticks_in_row("bridge", k, d, w))
    height = spec.rows * spec.row_height
    reg = Region(w, height)
    cut_t = [sorted(c) for c in cut_t]
    br_t = [sorted(b) for b in br_t]
    return ContinuumConfig(reg, [np.asarray(c, float) * tick for c in cut_t],
                           [np.asarray(b, float) * tick for b in br_t], tick, cut_t, br_t)


def vertex_point(spec: DiscretizationSpec, v: int):
    """(column, height) of a primal lattice vertex in the continuum picture."""
    ij = spec.graph.meta["ij"]
    col = (int(ij[v, 0]) + int(ij[v, 1]) % 2) // 2
    return col, int(ij[v, 1]) * spec.row_height


def _discrete_measure(spec: DiscretizationSpec, params: QuantumParams,
                      bc: BoundaryCondition | None = None) -> MeasureSpec:
    return MeasureSpec.for_graph(spec.graph, ModelParams(params.q, spec.beta),
                                 bc or BoundaryCondition.free())


def discretization_for(params: QuantumParams, region: Region, eps: float,
                       convention: str = "rescaled") -> DiscretizationSpec:
    """G^eps with beta and a time dilation chosen so that the limiting
    intensities are (params.lam, params.mu).

    Short edges close at rate lambda0/beta and long edges open at rate
    beta*mu0 per unit row height; beta^2 = mu/(q lam) fixes the ratio and a
    height dilation fixes the scale.
    """
    r = quantum_rates(params.q)
    f = _factor(convention)
    beta = math.sqrt(params.mu / (params.q * params.lam))
    scale = f * r.lambda0 / (beta * params.lam)
    spec = build_geps(eps, region, convention, time_scale=scale)
    spec.beta = beta
    return spec


def sample_quantum(params: QuantumParams, region: Region, method: str = "discretized",
                   rng: np.random.Generator | None = None, eps: float = 0.05,
                   sweeps: int = 200, convention: str = "rescaled") -> ContinuumConfig:
    """Sample a continuum configuration.

    ``discretized``: heat-bath on G^eps (free boundary) mapped to the
    continuum. ``free_poisson``: independent Poisson cuts and bridges, only
    valid at q = 1.
    """
    rng = rng or np.random.default_rng()
    w, h = region.width, region.height
    if method == "free_poisson":
        if abs(params.q - 1) > 1e-12:
            raise ValueError("free_poisson sampling ignores the q^k weight: q must be 1")
        cuts = [np.sort(rng.uniform(0, h, rng.poisson(params.lam * h))) for _ in range(w)]
        brs = [np.sort(rng.uniform(0, h, rng.poisson(params.mu * h))) for _ in range(w - 1)]
        return ContinuumConfig(region, cuts, brs)
    if method != "discretized":
        raise ValueError("method must be 'discretized' or 'free_poisson'")
    if h == 0:
        return ContinuumConfig(region, [[] for _ in range(w)], [[] for _ in range(w - 1)])
    spec = discretization_for(params, region, eps, convention)
    ms = _discrete_measure(spec, params)
    chain = HeatBathChain(spec.graph, ms, rng)
    chain.sweep(sweeps)
    return to_continuum(spec, chain.state)


# ----------------------------------------------------------------------------
# Poisson limit checks


def tv_distance(p: np.ndarray, r: np.ndarray) -> float:
    n = max(len(p), len(r))
    a = np.zeros(n)
    b = np.zeros(n)
    a[:len(p)] = p
    b[:len(r)] = r
    return 0.5 * float(np.abs(a - b).sum())


def poisson_pmf_with_tail(mean: float, n: int) -> np.ndarray:
    """Poisson pmf on 0..n-1 with the tail mass lumped in the last cell."""
    pmf = stats.poisson.pmf(np.arange(n), mean)
    pmf[-1] += stats.poisson.sf(n - 1, mean)
    return pmf


def binomial_poisson_tv(eps: float, L: float, q: float) -> float:
    """Exact TV between Bin(L/eps, lambda0 eps) and Poisson(lambda0 L)."""
    lam0 = quantum_rates(q).lambda0
    n = max(int(round(L / eps)), 1)
    p = lam0 * eps
    if p > 1:
        raise ValueError("lambda0 * eps exceeds 1")
    k = np.arange(n + 1)
    b = stats.binom.pmf(k, n, p)
    po = stats.poisson.pmf(k, lam0 * L)
    return 0.5 * float(np.abs(b - po).sum() + stats.poisson.sf(n, lam0 * L))


def poisson_limit_check(eps: float, L: float, q: float, samples: int,
                        rng: np.random.Generator | None = None):
    """Empirical TV between the closed count of L/eps short edges (each
    closed with probability lambda0*eps) and Poisson(lambda0*L).

    Returns ``(tv, histogram)``.
    """
    lam0 = quantum_rates(q).lambda0
    p = lam0 * eps
    if p > 1:
        raise ValueError("lambda0 * eps exceeds 1")
    n = max(int(round(L / eps)), 1)
    rng = rng or np.random.default_rng()
    s = rng.binomial(n, p, size=samples)
    hist = np.bincount(s)
    emp = hist / samples
    po = stats.poisson.pmf(np.arange(len(emp)), lam0 * L)
    tv = 0.5 * (float(np.abs(emp - po).sum()) + float(stats.poisson.sf(len(emp) - 1, lam0 * L)))
    return tv, hist


def strip_cut_law(eps: float, height: float, q: float, width: int = 2,
                  column: int = 0, convention: str = "rescaled") -> np.ndarray:
    """Exact law of the cut count on one column of a narrow G^eps strip
    (free boundary), by transfer along the strip."""
    spec = build_geps(eps, Region(width, height), convention)
    roles = edge_roles(spec)
    marked = [e for e, (_, kind, k, _) in enumerate(roles) if kind == "cut" and k == column]
    ms = MeasureSpec.for_graph(spec.graph, ModelParams(q))
    order = np.argsort(spec.graph.pos[:, 1], kind="stable")
    prim_order = [int(v) for v in order if spec.graph.primal[v] and spec.graph.used[v]]
    return exact_count_law(spec.graph, ms, marked, closed=True, order=prim_order)


def self_convergence(eps_list, height: float, q: float, width: int = 2):
    """TV between the strip cut laws at eps and eps/2 for every eps."""
    out = []
    for e in eps_list:
        a = strip_cut_law(e, height, q, width)
        b = strip_cut_law(e / 2, height, q, width)
        out.append(tv_distance(a, b))
    return out
