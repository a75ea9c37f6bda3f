"""Detectors for crossing, circuit, radius and arm events.

Every detector takes a graph and a configuration (a :class:`Configuration`
or a raw edge-state array indexed by rhombus id) and returns a bool. Dual
events are evaluated on the dual graph with the complementary states.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ._kernels import batch_connects, labels_single
from .lattice import IsoradialGraph, LatticeError, NO_IJ


@dataclass(frozen=True)
class DomainSpec:
    """Rhombi between vertical tracks s_i..s_j and horizontal tracks t_k..t_l."""

    i: int
    j: int
    k: int
    l: int  # noqa: E741

    def __post_init__(self):
        if self.i > self.j or self.k > self.l:
            raise ValueError("domain bounds must satisfy i <= j and k <= l")

    @classmethod
    def centered(cls, m: int, n: int) -> "DomainSpec":
        return cls(-m, m, -n, n)

    @classmethod
    def box(cls, n: int) -> "DomainSpec":
        return cls(-n, n, -n, n)


@dataclass
class EventSpec:
    kind: str
    domain: DomainSpec | None = None
    params: dict = field(default_factory=dict)
    color: str = "primal"

    KINDS = ("horizontal", "vertical", "circuit", "radius", "arm", "base-arm")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.color not in ("primal", "dual"):
            raise ValueError("color must be 'primal' or 'dual'")
        p = self.params
        if self.kind in ("arm", "base-arm") and not p.get("n", 0) < p.get("N", 1):
            raise ValueError("arm events need n < N")
        if self.kind == "circuit" and p.get("m1", 0) > p.get("m2", 0):
            raise ValueError("circuit events need m1 <= m2")

    def evaluate(self, g, config) -> bool:
        p = self.params
        if self.kind in ("horizontal", "vertical"):
            return crossing(g, config, self.domain, self.kind, self.color)
        if self.kind == "circuit":
            return circuit(g, config, p["m1"], p["m2"], p["n"], self.color)
        if self.kind == "radius":
            return radius(g, config, p["n"], p.get("metric", "tracks"))
        style = "base_anchored" if self.kind == "base-arm" else "euclidean"
        return arm_event(g, config, p["k"], p["n"], p["N"], style)


def _state(config) -> np.ndarray:
    st = getattr(config, "state", config)
    return np.asarray(st, dtype=np.uint8)


_LABEL = re.compile(r"^([st])(-?\d+)$")


def grid_index(g: IsoradialGraph):
    """Per-track (family, index) parsed from labels s<n>, t<n>; else None."""
    out = []
    for lab in g.track_label:
        m = _LABEL.match(lab)
        out.append((m.group(1), int(m.group(2))) if m else None)
    return out


def domain_rhombi(g: IsoradialGraph, dom: DomainSpec) -> np.ndarray:
    gi = grid_index(g)
    keep = []
    for r, (a, b) in enumerate(g.rtracks):
        fa, fb = gi[a], gi[b]
        if fa is None or fb is None or fa[0] == fb[0]:
            continue
        sv, th = (fa, fb) if fa[0] == "s" else (fb, fa)
        if dom.i <= sv[1] <= dom.j and dom.k <= th[1] <= dom.l:
            keep.append(r)
    if not keep:
        raise LatticeError("domain resolves to no rhombus")
    return np.asarray(keep, dtype=np.int64)


def _color_edges(g: IsoradialGraph, color: str) -> np.ndarray:
    return g.edge_endpoints if color == "primal" else g.dual_endpoints


def _open_mask(state, color: str) -> np.ndarray:
    return state.astype(bool) if color == "primal" else ~state.astype(bool)


def _components(n_nodes: int, eu, ev) -> np.ndarray:
    if len(eu) == 0:
        return np.arange(n_nodes)
    a = coo_matrix((np.ones(len(eu)), (eu, ev)), shape=(n_nodes, n_nodes))
    return connected_components(a, directed=False)[1]


def _side_vertices(g, rh, track, sign, color) -> set:
    """Corners of ``rh`` rhombi on ``track`` lying on one side of it.

    sign = +1: left of the travel direction; -1: right.
    """
    d = g.track_direction(track)
    want = g.primal if color == "primal" else ~g.primal
    out = set()
    for r in rh:
        if track not in g.rtracks[r]:
            continue
        c = g.centers[r]
        for v in g.rhombi[r]:
            rel = g.pos[v] - c
            cr = d[0] * rel[1] - d[1] * rel[0]
            if sign * cr > 1e-9 and want[v]:
                out.add(int(v))
    return out


def crossing(g: IsoradialGraph, config, dom: DomainSpec, direction: str = "horizontal",
             color: str = "primal") -> bool:
    """Open path inside the domain between two opposite sides.

    Horizontal: from a vertex left of s_i to one right of s_j. Vertical:
    from below t_k to above t_l.
    """
    rh = domain_rhombi(g, dom)
    st = _state(config)
    ti = {lab: t for t, lab in enumerate(g.track_label)}
    if direction == "horizontal":
        a = _side_vertices(g, rh, ti[f"s{dom.i}"], +1, color)
        b = _side_vertices(g, rh, ti[f"s{dom.j}"], -1, color)
    elif direction == "vertical":
        a = _side_vertices(g, rh, ti[f"t{dom.k}"], -1, color)
        b = _side_vertices(g, rh, ti[f"t{dom.l}"], +1, color)
    else:
        raise ValueError("direction must be 'horizontal' or 'vertical'")
    ends = _color_edges(g, color)[rh]
    op = _open_mask(st, color)[rh]
    lab = _components(g.n_vertices, ends[op, 0], ends[op, 1])
    return bool({lab[v] for v in a} & {lab[v] for v in b})


class CrossingDetector:
    """Vectorised :func:`crossing` for many configurations of one graph."""

    def __init__(self, g: IsoradialGraph, dom: DomainSpec, direction: str = "horizontal",
                 color: str = "primal"):
        rh = domain_rhombi(g, dom)
        ti = {lab: t for t, lab in enumerate(g.track_label)}
        if direction == "horizontal":
            a = _side_vertices(g, rh, ti[f"s{dom.i}"], +1, color)
            b = _side_vertices(g, rh, ti[f"s{dom.j}"], -1, color)
        elif direction == "vertical":
            a = _side_vertices(g, rh, ti[f"t{dom.k}"], -1, color)
            b = _side_vertices(g, rh, ti[f"t{dom.l}"], +1, color)
        else:
            raise ValueError("direction must be 'horizontal' or 'vertical'")
        self.rh = rh
        self.color = color
        self.n = g.n_vertices
        ends = _color_edges(g, color)[rh]
        self.eu = np.ascontiguousarray(ends[:, 0])
        self.ev = np.ascontiguousarray(ends[:, 1])
        self.a = np.array(sorted(a), dtype=np.int64)
        self.b = np.array(sorted(b), dtype=np.int64)

    def __call__(self, states) -> np.ndarray:
        st = np.atleast_2d(np.asarray(states, dtype=np.uint8))[:, self.rh]
        if self.color == "dual":
            st = 1 - st
        return batch_connects(self.n, self.eu, self.ev, np.ascontiguousarray(st), self.a, self.b)


def _ij(g: IsoradialGraph) -> np.ndarray:
    if "ij" not in g.meta:
        raise LatticeError("graph has no (i, j) vertex indexing")
    return np.asarray(g.meta["ij"])


def circuit(g: IsoradialGraph, config, m1: int, m2: int, n: int,
            color: str = "primal") -> bool:
    """Open circuit in R(-m2, m2; -n, n) surrounding the base segment
    between x_{-m1,0} and x_{m1,0} without crossing it.

    Base vertices strictly inside the segment are split into an upper and a
    lower copy; a circuit surrounds the slit iff it crosses the base ray to
    the right of x_{m1,0} an odd number of times, detected on a two-sheeted
    cover.
    """
    if m1 < 1 or m1 > m2:
        raise ValueError("circuit needs 1 <= m1 <= m2")
    rh = domain_rhombi(g, DomainSpec(-m2, m2, -n, n))
    ij = _ij(g)
    st = _state(config)
    gi = grid_index(g)
    ends = _color_edges(g, color)
    op = _open_mask(st, color)
    on_base = (ij[:, 1] == 0) & (ij[:, 0] != NO_IJ)
    split = on_base & (ij[:, 0] > -m1) & (ij[:, 0] < m1)
    ray = on_base & (ij[:, 0] >= m1)
    nv = g.n_vertices
    eu, ev = [], []
    for r in rh:
        if not op[r]:
            continue
        a, b = gi[g.rtracks[r][0]], gi[g.rtracks[r][1]]
        row = a[1] if a[0] == "t" else b[1]
        up = row >= 0
        u, v = (int(x) for x in ends[r])
        nu = u + (nv if split[u] and not up else 0)
        nw = v + (nv if split[v] and not up else 0)
        flip = int(row == -1 and (ray[u] or ray[v]))
        for s in (0, 1):
            eu.append(2 * nu + s)
            ev.append(2 * nw + (s ^ flip))
    lab = _components(4 * nv, np.asarray(eu, dtype=np.int64), np.asarray(ev, dtype=np.int64))
    return bool(np.any(lab[0::2] == lab[1::2]))


def track_radius(g: IsoradialGraph) -> np.ndarray:
    """max(-i, i-1, -j, j-1): x_{i,j} lies on or outside the boundary of
    Λ(n) exactly when this is >= n."""
    ij = _ij(g)
    i, j = ij[:, 0], ij[:, 1]
    out = np.maximum.reduce([-i, i - 1, -j, j - 1])
    out[ij[:, 0] == NO_IJ] = np.iinfo(np.int64).max // 2
    return out


def euclid_radius(g: IsoradialGraph) -> np.ndarray:
    return np.abs(g.pos).max(axis=1)


def origin_vertex(g: IsoradialGraph) -> int:
    v = int(np.argmin((g.pos ** 2).sum(axis=1)))
    if np.abs(g.pos[v]).max() > 1e-9 or not g.primal[v]:
        raise LatticeError("the origin is not a primal vertex")
    return v


def radius(g: IsoradialGraph, config, n: float, metric: str = "tracks") -> bool:
    """Open cluster of the origin reaches the boundary of Λ(n) or [-n, n]^2."""
    o = origin_vertex(g)
    if n <= 0:
        return True
    pg = g.primal_graph()
    st = _state(config)
    lab = labels_single(pg.n, pg.edges[:, 0], pg.edges[:, 1], st)
    members = pg.vertex_ids[lab == lab[pg.local(o)]]
    if metric == "tracks":
        return bool((track_radius(g)[members] >= n).any())
    if metric == "euclidean":
        return bool((euclid_radius(g)[members] >= n - 1e-9).any())
    raise ValueError("metric must be 'tracks' or 'euclidean'")


def crossing_clusters(g: IsoradialGraph, config, n: float, N: float, color: str) -> int:
    """Open clusters of the annulus n <= |v|_inf <= N touching both a
    rhombus reaching inside (-n, n)^2 and one reaching outside [-N, N]^2."""
    r = euclid_radius(g)
    tol = 1e-9
    if not (r > N + tol).any():
        raise LatticeError("window does not extend beyond the outer box")
    ends = _color_edges(g, color)
    op = _open_mask(_state(config), color)
    inside = (r >= n - tol) & (r <= N + tol)
    keep = inside[ends[:, 0]] & inside[ends[:, 1]] & op
    lab = _components(g.n_vertices, ends[keep, 0], ends[keep, 1])
    want = inside & (g.primal if color == "primal" else ~g.primal)
    rr = r[g.rhombi]
    inner, outer = set(), set()
    for rid in np.flatnonzero(rr.min(axis=1) < n - tol):
        inner.update(lab[v] for v in g.rhombi[rid] if want[v])
    for rid in np.flatnonzero(rr.max(axis=1) > N + tol):
        outer.update(lab[v] for v in g.rhombi[rid] if want[v])
    return len(inner & outer)


def base_vertices(g: IsoradialGraph, color: str) -> np.ndarray:
    ij = _ij(g)
    want = g.primal if color == "primal" else ~g.primal
    return np.flatnonzero((ij[:, 1] == 0) & (ij[:, 0] != NO_IJ) & want & g.used)


def base_crossing_clusters(g: IsoradialGraph, config, n: int, N: int, color: str) -> int:
    """Clusters containing a base vertex in Λ(n) and a base vertex outside Λ(N)."""
    ij = _ij(g)
    ends = _color_edges(g, color)
    op = _open_mask(_state(config), color)
    lab = _components(g.n_vertices, ends[op, 0], ends[op, 1])
    base = base_vertices(g, color)
    col = ij[base, 0]
    near = {lab[v] for v in base[(col >= -n) & (col <= n + 1)]}
    far = {lab[v] for v in base[(col < -N) | (col > N + 1)]}
    return len(near & far)


def arm_event(g: IsoradialGraph, config, k: int, n: float, N: float,
              style: str = "euclidean") -> bool:
    """k-arm events; k in {1} or even.

    ``euclidean``: k=1 needs a primal crossing cluster of the square
    annulus; k=2j needs j primal and j dual crossing clusters.
    ``base_anchored``: the same counts for clusters joining base vertices
    inside Λ(n) to base vertices outside Λ(N).
    """
    if not (k == 1 or (k >= 2 and k % 2 == 0)):
        raise ValueError("k must be 1 or even")
    if not n < N:
        raise ValueError("arm events need n < N")
    count = crossing_clusters if style == "euclidean" else base_crossing_clusters
    if style not in ("euclidean", "base_anchored"):
        raise ValueError("style must be 'euclidean' or 'base_anchored'")
    if k == 1:
        return count(g, config, n, N, "primal") >= 1
    j = k // 2
    if count(g, config, n, N, "primal") < j:
        return False
    if style == "base_anchored" and j >= 2:
        return True
    return count(g, config, n, N, "dual") >= j
