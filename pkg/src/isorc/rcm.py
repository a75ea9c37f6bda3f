"""Random-cluster configurations, boundary conditions, exact laws and a
heat-bath sampler.

Graph-like inputs are either an :class:`~isorc.lattice.IsoradialGraph` or
a bare :class:`PrimalGraph`. Edge ``e`` of an isoradial graph is its rhombus
``e``; vertex ids in boundary partitions are the graph's own vertex ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .weights import ModelParams, odds

ENUM_CAP = 24
_CHUNK = 1 << 18


@dataclass(frozen=True)
class BoundaryCondition:
    kind: str = "free"
    blocks: tuple = ()

    def __post_init__(self):
        if self.kind not in ("free", "wired", "partition"):
            raise ValueError(f"unknown boundary condition {self.kind!r}")
        if self.kind == "partition":
            seen = set()
            for b in self.blocks:
                for v in b:
                    if v in seen:
                        raise ValueError("partition blocks must be disjoint")
                    seen.add(v)

    @classmethod
    def free(cls):
        return cls("free")

    @classmethod
    def wired(cls):
        return cls("wired")

    @classmethod
    def partition(cls, blocks):
        return cls("partition", tuple(tuple(int(v) for v in b) for b in blocks))


@dataclass
class PrimalGraph:
    """Primal graph with compressed vertex indices 0..n-1."""

    vertex_ids: np.ndarray
    edges: np.ndarray
    boundary: np.ndarray
    theta: np.ndarray | None = None
    version: int = 0
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertex_ids = np.asarray(self.vertex_ids, dtype=np.int64)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.boundary = np.asarray(self.boundary, dtype=np.int64)
        if not self.index:
            self.index = {int(v): i for i, v in enumerate(self.vertex_ids)}

    @classmethod
    def from_edges(cls, n, edges, boundary=None, theta=None):
        b = np.arange(n) if boundary is None else boundary
        th = None if theta is None else np.asarray(theta, dtype=float)
        return cls(np.arange(n), edges, b, th)

    @property
    def n(self) -> int:
        return len(self.vertex_ids)

    @property
    def m(self) -> int:
        return len(self.edges)

    def local(self, vid) -> int:
        return self.index[int(vid)]


def as_primal(g) -> PrimalGraph:
    if isinstance(g, PrimalGraph):
        return g
    return g.primal_graph()


@dataclass
class Configuration:
    state: np.ndarray
    version: int = 0

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=np.uint8).copy()

    def __len__(self):
        return len(self.state)

    def index(self) -> int:
        """Bit e of the returned integer is the state of edge e."""
        return int(sum(int(b) << e for e, b in enumerate(self.state)))

    @classmethod
    def from_index(cls, idx: int, m: int, version: int = 0):
        return cls(np.array([(idx >> e) & 1 for e in range(m)], dtype=np.uint8), version)

    def to_hex(self) -> str:
        return format(self.index(), "x")

    @classmethod
    def from_hex(cls, text: str, m: int, version: int = 0):
        return cls.from_index(int(text, 16), m, version)

    def copy(self):
        return Configuration(self.state.copy(), self.version)


@dataclass
class MeasureSpec:
    params: ModelParams
    bc: BoundaryCondition
    y: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if not np.all(np.isfinite(self.y)) or np.any(self.y <= 0):
            raise ValueError("edge weights must be positive and finite")

    @classmethod
    def for_graph(cls, g, params: ModelParams, bc: BoundaryCondition | None = None):
        pg = as_primal(g)
        if pg.theta is None:
            raise ValueError("graph carries no angles; pass weights explicitly")
        return cls(params, bc or BoundaryCondition.free(), odds(pg.theta, params.q, params.beta))

    @property
    def q(self) -> float:
        return self.params.q

    @property
    def p(self) -> np.ndarray:
        return self.y / (1.0 + self.y)


def _check_version(pg: PrimalGraph, config: Configuration) -> None:
    if len(config) != pg.m:
        raise ValueError(f"configuration has {len(config)} edges, graph has {pg.m}")
    if config.version != pg.version:
        raise ValueError("configuration version does not match graph version")


def contraction(pg: PrimalGraph, bc: BoundaryCondition):
    """Map each vertex to a node of the bc-contracted graph.

    Returns (node_of_vertex, n_nodes). Free bc is the identity.
    """
    node = np.arange(pg.n, dtype=np.int64)
    if bc.kind == "free" or len(pg.boundary) == 0:
        return node, pg.n
    if bc.kind == "wired":
        groups = [list(pg.boundary)]
    else:
        groups = [[pg.local(v) for v in b] for b in bc.blocks]
        covered = {v for grp in groups for v in grp}
        if covered != set(int(b) for b in pg.boundary):
            raise ValueError("partition blocks must cover exactly the boundary vertices")
    for grp in groups:
        if grp:
            node[np.asarray(grp)] = min(grp)
    uniq, inv = np.unique(node, return_inverse=True)
    return inv.astype(np.int64), len(uniq)


def cluster_count(g, config: Configuration, bc: BoundaryCondition | None = None) -> int:
    pg = as_primal(g)
    _check_version(pg, config)
    node, nn = contraction(pg, bc or BoundaryCondition.free())
    lab = K.labels_single(nn, node[pg.edges[:, 0]], node[pg.edges[:, 1]], config.state)
    return int(len(np.unique(lab)))


def config_weight(g, config: Configuration, spec: MeasureSpec) -> float:
    """Log-weight k ln q + sum over open edges of ln y_e."""
    k = cluster_count(g, config, spec.bc)
    open_ = config.state.astype(bool)
    return k * math.log(spec.q) + float(np.log(spec.y[open_]).sum())


@dataclass
class ExactLaw:
    """Law over all 2^m configurations; index bit e is the state of edge e."""

    probs: np.ndarray
    log_z: float
    graph: PrimalGraph
    spec: MeasureSpec

    @property
    def m(self) -> int:
        return self.graph.m

    def bits(self) -> np.ndarray:
        idx = np.arange(len(self.probs), dtype=np.int64)
        return ((idx[:, None] >> np.arange(self.m)) & 1).astype(np.uint8)

    def marginals(self) -> np.ndarray:
        idx = np.arange(len(self.probs), dtype=np.int64)
        return np.array([self.probs[(idx >> e) & 1 == 1].sum() for e in range(self.m)])

    def event_prob(self, indicator) -> float:
        """``indicator`` is a boolean array over configuration indices."""
        return float(self.probs[np.asarray(indicator, dtype=bool)].sum())

    def patterns(self, marked_ids) -> np.ndarray:
        """Connection pattern (open-edge connectivity, no bc) of marked vertices."""
        pg = self.graph
        marked = np.array([pg.local(v) for v in marked_ids], dtype=np.int64)
        eu, ev = pg.edges[:, 0].copy(), pg.edges[:, 1].copy()
        return K.enumerate_marked(pg.n, eu, ev, marked, 0, len(self.probs))

    def pattern_law(self, marked_ids) -> dict:
        pats = self.patterns(marked_ids)
        out: dict = {}
        keys, inv = np.unique(pats, axis=0, return_inverse=True)
        sums = np.bincount(inv.ravel(), weights=self.probs, minlength=len(keys))
        for key, s in zip(keys, sums):
            out[tuple(int(x) for x in key)] = float(s)
        return out


def log_weights(g, spec: MeasureSpec, cap: int = ENUM_CAP) -> np.ndarray:
    """Unnormalised log-weights of every configuration."""
    pg = as_primal(g)
    m = pg.m
    if m > cap:
        raise ValueError(f"{m} edges exceeds the enumeration cap {cap}")
    if len(spec.y) != m:
        raise ValueError("weight vector does not match the edge count")
    node, nn = contraction(pg, spec.bc)
    eu = node[pg.edges[:, 0]].copy()
    ev = node[pg.edges[:, 1]].copy()
    total = 1 << m
    ks = np.concatenate([K.enumerate_counts(nn, eu, ev, s, min(s + _CHUNK, total))
                         for s in range(0, total, _CHUNK)])
    idx = np.arange(total, dtype=np.int64)
    ly = np.log(spec.y)
    lw = ks * math.log(spec.q)
    for e in range(m):
        lw = lw + ((idx >> e) & 1) * ly[e]
    return lw


def exact_distribution(g, spec: MeasureSpec, cap: int = ENUM_CAP) -> ExactLaw:
    pg = as_primal(g)
    lw = log_weights(pg, spec, cap)
    top = lw.max()
    w = np.exp(lw - top)
    z = w.sum()
    return ExactLaw(probs=w / z, log_z=float(top + math.log(z)), graph=pg, spec=spec)


def exact_count_law(g, spec: MeasureSpec, marked_edges, closed: bool = True,
                    order=None) -> np.ndarray:
    """Exact law of the number of closed (or open) marked edges.

    Frontier dynamic programming over vertices in ``order`` (default: by
    index); the cost is exponential only in the frontier width, so long
    thin strips are cheap. Boundary conditions are applied through the
    contracted graph.
    """
    pg = as_primal(g)
    node, nn = contraction(pg, spec.bc)
    eu = node[pg.edges[:, 0]]
    ev = node[pg.edges[:, 1]]
    marked = np.zeros(pg.m, dtype=bool)
    marked[np.asarray(list(marked_edges), dtype=np.int64)] = True
    rank = np.empty(nn, dtype=np.int64)
    if order is None:
        rank[:] = np.arange(nn)
    else:
        seen, pos = set(), 0
        for v in order:
            c = int(node[pg.local(v)])
            if c not in seen:
                seen.add(c)
                rank[c] = pos
                pos += 1
        for c in range(nn):
            if c not in seen:
                rank[c] = pos
                pos += 1
    last_use = np.full(nn, -1, dtype=np.int64)
    eorder = sorted(range(pg.m), key=lambda e: (max(rank[eu[e]], rank[ev[e]]),
                                                min(rank[eu[e]], rank[ev[e]]), e))
    for step, e in enumerate(eorder):
        last_use[eu[e]] = step
        last_use[ev[e]] = step
    q = spec.q
    nmark = int(marked.sum())
    # state: tuple of (vertex, block) sorted by vertex; value: poly in count
    states = {(): np.ones(1)}
    active: list[int] = []
    log_scale = 0.0

    def canon(assign):
        relabel, out = {}, []
        for v, b in assign:
            if b not in relabel:
                relabel[b] = len(relabel)
            out.append((v, relabel[b]))
        return tuple(out)

    for step, e in enumerate(eorder):
        a, b = int(eu[e]), int(ev[e])
        for v in (a, b):
            if v not in active:
                active.append(v)
                new = {}
                for st, poly in states.items():
                    nb = max((blk for _, blk in st), default=-1) + 1
                    key = canon(tuple(sorted(st + ((v, nb),))))
                    new[key] = new.get(key, 0) + poly
                states = new
        ye = spec.y[e]
        new = {}
        for st, poly in states.items():
            d = dict(st)
            shift_closed = marked[e] and closed
            shift_open = marked[e] and not closed
            pc = np.concatenate([[0.0], poly]) if shift_closed else np.concatenate([poly, [0.0]])
            key = canon(tuple(sorted(st)))
            new[key] = _padd(new.get(key), pc)
            ba, bb = d[a], d[b]
            merged = tuple(sorted((v, ba if blk == bb else blk) for v, blk in st))
            po = np.concatenate([[0.0], poly]) if shift_open else np.concatenate([poly, [0.0]])
            key = canon(merged)
            new[key] = _padd(new.get(key), ye * po)
        states = new
        for v in (a, b):
            if last_use[v] == step:
                active.remove(v)
                new = {}
                for st, poly in states.items():
                    d = dict(st)
                    alone = sum(1 for _, blk in st if blk == d[v]) == 1
                    rest = canon(tuple((u, blk) for u, blk in st if u != v))
                    new[rest] = _padd(new.get(rest), poly * (q if alone else 1.0))
                states = new
        tot = sum(p.sum() for p in states.values())
        for k_ in states:
            states[k_] = states[k_] / tot
        log_scale += math.log(tot)
    final = None
    for st, poly in states.items():
        nblocks = len({blk for _, blk in st})
        final = _padd(final, poly * q**nblocks)
    law = np.zeros(nmark + 1)
    law[: len(final)] += final[: nmark + 1]
    # isolated nodes only rescale every term by q**isolated
    return law / law.sum()


def _padd(a, b):
    if a is None:
        return b.copy()
    if len(a) < len(b):
        a, b = b, a
    out = a.copy()
    out[: len(b)] += b
    return out


# ----------------------------------------------------------------------------
# heat-bath dynamics


def spawn_rngs(master_seed: int, n: int) -> list[np.random.Generator]:
    """Independent replica streams: SeedSequence(master_seed).spawn(n)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(master_seed).spawn(n)]


class HeatBathChain:
    """Single-edge heat-bath chain for the random-cluster measure.

    Wired and partition boundary conditions add one virtual node per block,
    joined to its boundary vertices by permanently open links.
    """

    def __init__(self, g, spec: MeasureSpec, rng: np.random.Generator, init=None):
        pg = as_primal(g)
        self.graph = pg
        self.spec = spec
        self.rng = rng
        m, n = pg.m, pg.n
        if spec.bc.kind == "free" or len(pg.boundary) == 0:
            groups = []
        elif spec.bc.kind == "wired":
            groups = [list(pg.boundary)]
        else:
            groups = [[pg.local(v) for v in b] for b in spec.bc.blocks]
        self.n_real = n
        nn = n + len(groups)
        src, dst, eid = [], [], []
        for e, (u, v) in enumerate(pg.edges):
            src += [u, v]
            dst += [v, u]
            eid += [e, e]
        for gi, grp in enumerate(groups):
            for v in grp:
                src += [v, n + gi]
                dst += [n + gi, v]
                eid += [-1, -1]
        src = np.asarray(src, dtype=np.int64)
        order = np.argsort(src, kind="stable")
        self.nbr = np.asarray(dst, dtype=np.int64)[order]
        self.eid = np.asarray(eid, dtype=np.int64)[order]
        self.ptr = np.zeros(nn + 1, dtype=np.int64)
        np.add.at(self.ptr, src + 1, 1)
        self.ptr = np.cumsum(self.ptr)
        self.eu = pg.edges[:, 0].copy()
        self.ev = pg.edges[:, 1].copy()
        p = spec.p
        self.p_conn = p.copy()
        self.p_disc = p / (p + spec.q * (1.0 - p))
        self.order = rng.permutation(m).astype(np.int64)
        self.mark = np.zeros(nn, dtype=np.int64)
        self.mark2 = np.zeros(nn, dtype=np.int64)
        self.gen = 0
        self.gen2 = 0
        self.qa = np.empty(nn, dtype=np.int64)
        self.qb = np.empty(nn, dtype=np.int64)
        if init is None:
            self.state = np.zeros(m, dtype=np.uint8)
        elif isinstance(init, Configuration):
            self.state = init.state.copy()
        else:
            self.state = np.asarray(init, dtype=np.uint8).copy()

    def sweep(self, n: int = 1) -> None:
        m = self.graph.m
        done = 0
        while done < n:
            c = min(n - done, max(1, _CHUNK // max(m, 1)))
            u = self.rng.random((c, m))
            self.gen = K.heat_bath_sweeps(self.state, self.order, u, self.p_conn, self.p_disc,
                                          self.eu, self.ev, self.ptr, self.nbr, self.eid,
                                          self.mark, self.gen, self.qa, self.qb)
            done += c

    def record(self, n_samples: int, thin: int = 1) -> np.ndarray:
        m = self.graph.m
        out = np.empty((n_samples, m), dtype=np.uint8)
        per = max(1, _CHUNK // max(m * thin, 1))
        i = 0
        while i < n_samples:
            c = min(per, n_samples - i)
            u = self.rng.random((c * thin, m))
            self.gen = K.heat_bath_record(self.state, self.order, u, thin, self.p_conn,
                                          self.p_disc, self.eu, self.ev, self.ptr, self.nbr,
                                          self.eid, self.mark, self.gen, self.qa, self.qb,
                                          out[i:i + c])
            i += c
        return out

    def cluster_max(self, src_local: int, values: np.ndarray) -> float:
        self.gen2 += 1
        return K.cluster_max(src_local, values, self.n_real, self.ptr, self.nbr, self.eid,
                             self.state, self.mark2, self.gen2, self.qa)

    def configuration(self) -> Configuration:
        return Configuration(self.state, self.graph.version)


def sample_heat_bath(g, spec: MeasureSpec, sweeps: int, rng: np.random.Generator,
                     init=None) -> Configuration:
    chain = HeatBathChain(g, spec, rng, init)
    chain.sweep(sweeps)
    return chain.configuration()


def pattern_codes(g, states: np.ndarray, marked_ids) -> np.ndarray:
    """Canonical connection patterns of marked vertices for sampled states."""
    pg = as_primal(g)
    marked = np.array([pg.local(v) for v in marked_ids], dtype=np.int64)
    labels = K.batch_labels(pg.n, pg.edges[:, 0].copy(), pg.edges[:, 1].copy(),
                            np.ascontiguousarray(states, dtype=np.uint8))
    return K.canonical_patterns(labels, marked)


def dual_config(g, config: Configuration):
    """Dual configuration: omega*(e*) = 1 - omega(e), same edge index."""
    dual = g.dual_graph() if hasattr(g, "dual_graph") else None
    return dual, Configuration(1 - config.state, config.version)
