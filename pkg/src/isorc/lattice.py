"""Embedded isoradial graphs stored as rhombic tilings.

Each rhombus is stored by its four corner vertices ``c0, c0+w_s,
c0+w_s+w_t, c0+w_t`` where ``w_s, w_t`` are the (signed) transverse unit
vectors of its two tracks ``(s, t)`` ordered so that ``cross(w_s, w_t) > 0``.
Rhombus ``e`` carries primal edge ``e``: its two primal corners. The
subtended angle of the edge is the rhombus angle at a dual corner.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .rcm import PrimalGraph

_VERSION = itertools.count(1)
TOL = 1e-9
NO_IJ = np.iinfo(np.int64).min


class LatticeError(ValueError):
    pass


class WindowTooSmall(LatticeError):
    pass


def unit(angle: float) -> np.ndarray:
    return np.array([math.cos(angle), math.sin(angle)])


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


class IsoradialGraph:
    """A finite rhombic tiling together with its primal/dual structure.

    Instances are treated as immutable; operations return new graphs.
    """

    def __init__(self, pos, primal, rhombi, rtracks, track_angle, track_label,
                 track_kind=None, eps=None, meta=None, version=None):
        self.pos = np.asarray(pos, dtype=float).reshape(-1, 2)
        self.primal = np.asarray(primal, dtype=bool)
        self.rhombi = np.asarray(rhombi, dtype=np.int64).reshape(-1, 4)
        self.rtracks = np.asarray(rtracks, dtype=np.int64).reshape(-1, 2)
        self.track_angle = np.asarray(track_angle, dtype=float)
        self.track_label = list(track_label)
        if track_kind is None:
            track_kind = [_kind_of(lab) for lab in self.track_label]
        self.track_kind = list(track_kind)
        self.meta = dict(meta or {})
        self.version = next(_VERSION) if version is None else version
        self.eps = self.recorded_eps() if eps is None else float(eps)

    # -- basic derived data -------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.pos)

    @property
    def n_rhombi(self) -> int:
        return len(self.rhombi)

    @property
    def n_tracks(self) -> int:
        return len(self.track_label)

    @cached_property
    def track_vec(self) -> np.ndarray:
        return np.stack([np.cos(self.track_angle), np.sin(self.track_angle)], axis=1)

    @cached_property
    def track_index(self) -> dict:
        return {lab: i for i, lab in enumerate(self.track_label)}

    def track_id(self, label) -> int:
        if isinstance(label, (int, np.integer)):
            return int(label)
        return self.track_index[label]

    @cached_property
    def phi(self) -> np.ndarray:
        """Rhombus angle at corner c0 (and c2), in (0, pi)."""
        ws = self.track_vec[self.rtracks[:, 0]]
        wt = self.track_vec[self.rtracks[:, 1]]
        return np.arctan2(_cross(ws, wt), np.einsum("ij,ij->i", ws, wt))

    @cached_property
    def edge_endpoints(self) -> np.ndarray:
        c0_primal = self.primal[self.rhombi[:, 0]]
        return np.where(c0_primal[:, None], self.rhombi[:, [0, 2]], self.rhombi[:, [1, 3]])

    @cached_property
    def dual_endpoints(self) -> np.ndarray:
        c0_primal = self.primal[self.rhombi[:, 0]]
        return np.where(c0_primal[:, None], self.rhombi[:, [1, 3]], self.rhombi[:, [0, 2]])

    @cached_property
    def theta(self) -> np.ndarray:
        """Angle subtended by each primal edge (angle at a dual corner)."""
        c0_primal = self.primal[self.rhombi[:, 0]]
        return np.where(c0_primal, math.pi - self.phi, self.phi)

    @cached_property
    def centers(self) -> np.ndarray:
        return self.pos[self.rhombi].mean(axis=1)

    @cached_property
    def vertex_rhombi(self) -> list:
        inc = [[] for _ in range(self.n_vertices)]
        for r, corners in enumerate(self.rhombi):
            for c in corners:
                inc[int(c)].append(r)
        return inc

    @cached_property
    def angle_sum(self) -> np.ndarray:
        s = np.zeros(self.n_vertices)
        phi = self.phi
        for k in range(4):
            np.add.at(s, self.rhombi[:, k], phi if k % 2 == 0 else math.pi - phi)
        return s

    @cached_property
    def used(self) -> np.ndarray:
        u = np.zeros(self.n_vertices, dtype=bool)
        u[self.rhombi.ravel()] = True
        return u

    @cached_property
    def interior(self) -> np.ndarray:
        return self.used & (np.abs(self.angle_sum - 2 * math.pi) < 1e-7)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        return self.used & ~self.interior

    def recorded_eps(self) -> float:
        if self.n_rhombi == 0:
            return math.pi / 2
        th = self.theta
        return float(min(th.min(), (math.pi - th).min()))

    # -- primal / dual views -----------------------------------------------

    @cached_property
    def _primal_graph(self) -> PrimalGraph:
        ids = np.flatnonzero(self.primal & self.used)
        index = {int(v): i for i, v in enumerate(ids)}
        edges = np.vectorize(index.__getitem__, otypes=[np.int64])(self.edge_endpoints) \
            if self.n_rhombi else np.zeros((0, 2), np.int64)
        bnd = [index[int(v)] for v in ids if self.boundary_mask[v]]
        return PrimalGraph(ids, edges, np.asarray(bnd, dtype=np.int64), self.theta.copy(),
                           self.version, index)

    def primal_graph(self) -> PrimalGraph:
        return self._primal_graph

    @cached_property
    def _dual_graph(self) -> PrimalGraph:
        ids = np.flatnonzero(~self.primal & self.used)
        index = {int(v): i for i, v in enumerate(ids)}
        edges = np.vectorize(index.__getitem__, otypes=[np.int64])(self.dual_endpoints) \
            if self.n_rhombi else np.zeros((0, 2), np.int64)
        bnd = [index[int(v)] for v in ids if self.boundary_mask[v]]
        return PrimalGraph(ids, edges, np.asarray(bnd, dtype=np.int64),
                           math.pi - self.theta, self.version, index)

    def dual_graph(self) -> PrimalGraph:
        return self._dual_graph

    def color_graph(self, color: str) -> PrimalGraph:
        return self.primal_graph() if color == "primal" else self.dual_graph()

    # -- tracks --------------------------------------------------------------

    def track_direction(self, t: int) -> np.ndarray:
        """Travel direction: rightward for horizontal tracks, upward otherwise."""
        w = self.track_vec[t]
        d = np.array([w[1], -w[0]])
        if self.track_kind[t] == "h":
            if d[0] < 0 or (d[0] == 0 and d[1] < 0):
                d = -d
        elif d[1] < 0 or (abs(d[1]) < 1e-15 and d[0] < 0):
            d = -d
        return d

    @cached_property
    def track_sequences(self) -> dict:
        """Ordered rhombus ids of every track along its travel direction."""
        out = {t: [] for t in range(self.n_tracks)}
        for r, (s, t) in enumerate(self.rtracks):
            out[int(s)].append(r)
            out[int(t)].append(r)
        cen = self.centers
        for t, lst in out.items():
            if lst:
                d = self.track_direction(t)
                arr = np.asarray(lst, dtype=np.int64)
                out[t] = arr[np.argsort(cen[arr] @ d, kind="stable")]
            else:
                out[t] = np.zeros(0, np.int64)
        return out

    @cached_property
    def crossing_map(self) -> dict:
        """(track, track) -> rhombus id, both orders."""
        d = {}
        for r, (s, t) in enumerate(self.rtracks):
            d[(int(s), int(t))] = r
            d[(int(t), int(s))] = r
        return d

    @cached_property
    def positions(self) -> dict:
        """positions[t][u] = index along t of the crossing with track u."""
        out = {}
        for t, seq in self.track_sequences.items():
            p = {}
            for k, r in enumerate(seq):
                s, u = self.rtracks[r]
                p[int(u) if s == t else int(s)] = k
            out[t] = p
        return out

    def crossing(self, a, b) -> int:
        return self.crossing_map.get((self.track_id(a), self.track_id(b)), -1)

    def tracks_of_kind(self, kind: str) -> list:
        return [t for t, k in enumerate(self.track_kind) if k == kind]

    # -- checks, hashing, copying --------------------------------------------

    def validate(self, tol: float = 1e-9) -> None:
        """Raise LatticeError unless the tiling invariants hold."""
        p = self.pos
        ws = self.track_vec[self.rtracks[:, 0]]
        wt = self.track_vec[self.rtracks[:, 1]]
        c = self.rhombi
        err = max(
            np.abs(p[c[:, 1]] - p[c[:, 0]] - ws).max(initial=0),
            np.abs(p[c[:, 2]] - p[c[:, 1]] - wt).max(initial=0),
            np.abs(p[c[:, 3]] - p[c[:, 0]] - wt).max(initial=0),
        )
        if err > tol:
            raise LatticeError(f"rhombus sides deviate from unit track vectors by {err:.3g}")
        if np.any(_cross(ws, wt) <= 0):
            raise LatticeError("rhombus track order violates orientation convention")
        par = self.primal
        if np.any(par[c[:, 0]] != par[c[:, 2]]) or np.any(par[c[:, 0]] == par[c[:, 1]]) \
                or np.any(par[c[:, 1]] != par[c[:, 3]]):
            raise LatticeError("rhombus corners are not alternately primal and dual")
        if np.any(self.angle_sum > 2 * math.pi + 1e-7):
            raise LatticeError("overlapping rhombi around a vertex")
        pairs = {}
        for r, (s, t) in enumerate(self.rtracks):
            if s == t:
                raise LatticeError("rhombus with a repeated track")
            key = (min(s, t), max(s, t))
            if key in pairs:
                raise LatticeError(f"tracks {self.track_label[s]} and {self.track_label[t]} "
                                   "share two rhombi")
            pairs[key] = r
        th = self.theta
        if self.n_rhombi and (th.min() < self.eps - 1e-9 or th.max() > math.pi - self.eps + 1e-9):
            raise LatticeError("edge angle outside the recorded bounded-angle range")

    def geometry_hash(self, with_tracks: bool = True, digits: int = 7) -> str:
        """Hash of the rhombus multiset, blind to vertex and rhombus ids."""
        rows = []
        for r in range(self.n_rhombi):
            c0 = self.pos[self.rhombi[r, 0]]
            a = self.track_angle[self.rtracks[r]]
            row = (round(float(c0[0]), digits) + 0.0, round(float(c0[1]), digits) + 0.0,
                   round(float(a[0]) % (2 * math.pi), digits),
                   round(float(a[1]) % (2 * math.pi), digits),
                   bool(self.primal[self.rhombi[r, 0]]))
            if with_tracks:
                row = row + tuple(self.track_label[t] for t in self.rtracks[r])
            rows.append(repr(row))
        rows.sort()
        return hashlib.sha256("\n".join(rows).encode()).hexdigest()

    def replace(self, **kw) -> "IsoradialGraph":
        args = dict(pos=self.pos, primal=self.primal, rhombi=self.rhombi, rtracks=self.rtracks,
                    track_angle=self.track_angle, track_label=self.track_label,
                    track_kind=self.track_kind, eps=self.eps, meta=self.meta, version=None)
        args.update(kw)
        return IsoradialGraph(**args)

    # -- serialisation --------------------------------------------------------

    def to_dict(self) -> dict:
        ee = self.edge_endpoints
        seq = self.track_sequences
        return {
            "format": "isorc-graph/1",
            "eps": self.eps,
            "vertices": [{"id": v, "x": float(self.pos[v, 0]), "y": float(self.pos[v, 1]),
                          "parity": "primal" if self.primal[v] else "dual"}
                         for v in range(self.n_vertices)],
            "edges": [{"id": e, "endpoints": [int(ee[e, 0]), int(ee[e, 1])],
                       "theta": float(self.theta[e])} for e in range(self.n_rhombi)],
            "rhombi": [{"id": r, "edge": r, "tracks": [int(s), int(t)],
                        "corners": [int(c) for c in self.rhombi[r]]}
                       for r, (s, t) in enumerate(self.rtracks)],
            "tracks": [{"id": t, "label": self.track_label[t], "kind": self.track_kind[t],
                        "angle": float(self.track_angle[t]),
                        "rhombi": [int(r) for r in seq[t]]} for t in range(self.n_tracks)],
            "meta": _json_meta(self.meta),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "IsoradialGraph":
        verts = sorted(d["vertices"], key=lambda v: v["id"])
        pos = [[v["x"], v["y"]] for v in verts]
        primal = [v["parity"] == "primal" for v in verts]
        rh = sorted(d["rhombi"], key=lambda r: r["id"])
        tr = sorted(d["tracks"], key=lambda t: t["id"])
        meta = _unjson_meta(d.get("meta", {}))
        return cls(pos, primal, [r["corners"] for r in rh], [r["tracks"] for r in rh],
                   [t["angle"] for t in tr], [t["label"] for t in tr],
                   [t["kind"] for t in tr], d.get("eps"), meta)

    @classmethod
    def from_json(cls, text: str) -> "IsoradialGraph":
        return cls.from_dict(json.loads(text))


def _kind_of(label: str) -> str:
    if label.startswith("s"):
        return "v"
    if label.startswith("t"):
        return "h"
    return "x"


def _json_meta(meta: dict) -> dict:
    out = {}
    for k, v in meta.items():
        if isinstance(v, np.ndarray):
            out[k] = {"__array__": v.tolist(), "dtype": str(v.dtype)}
        elif isinstance(v, (list, tuple, dict, str, int, float, bool)) or v is None:
            out[k] = v
    return json.loads(json.dumps(out, default=_np_default))


def _np_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _unjson_meta(meta: dict) -> dict:
    out = {}
    for k, v in meta.items():
        if isinstance(v, dict) and "__array__" in v:
            out[k] = np.asarray(v["__array__"], dtype=v["dtype"])
        else:
            out[k] = v
    return out


# ----------------------------------------------------------------------------
# square lattices G_{alpha, beta}


@dataclass
class AngleSequences:
    """Transverse angles: s_i has angle alpha[i - i0], t_j has beta[j - j0]."""

    alpha: np.ndarray
    beta: np.ndarray
    i0: int = 0
    j0: int = 0

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))

    @property
    def eps(self) -> float:
        return float(min(self.beta.min() - self.alpha.max(),
                         self.alpha.min() - self.beta.max() + math.pi))

    def check(self) -> None:
        if not (self.alpha.max() < self.beta.min() and self.alpha.min() > self.beta.max() - math.pi):
            raise LatticeError("angle sequences violate sup(alpha) < inf(beta), "
                               "inf(alpha) > sup(beta) - pi")

    def alpha_at(self, i: int) -> float:
        return float(self.alpha[i - self.i0])

    def beta_at(self, j: int) -> float:
        return float(self.beta[j - self.j0])

    @classmethod
    def regular(cls, width: int, height: int, i0: int = 0, j0: int = 0):
        return cls(np.zeros(width), np.full(height, math.pi / 2), i0, j0)

    @classmethod
    def alternating(cls, eps: float, width: int, height: int, i0: int = 0, j0: int = 0):
        """alpha = 0 and beta_j = eps (j even) or pi - eps (j odd)."""
        beta = np.array([eps if j % 2 == 0 else math.pi - eps for j in range(j0, j0 + height)])
        return cls(np.zeros(width), beta, i0, j0)


def build_square_lattice(seqs: AngleSequences, width: int | None = None,
                         height: int | None = None, base_parity: bool = False) -> IsoradialGraph:
    """Finite window of G_{alpha,beta} with vertical tracks s_{i0..i0+W-1}
    and horizontal tracks t_{j0..j0+H-1}.

    Vertex x_{i,j} sits between s_{i-1}, s_i and t_{j-1}, t_j; x_{0,0} is
    at the origin and is primal unless ``base_parity`` flips the colouring.
    """
    W = len(seqs.alpha) if width is None else int(width)
    H = len(seqs.beta) if height is None else int(height)
    if W <= 0 or H <= 0:
        raise LatticeError("square lattice needs positive width and height")
    alpha = np.broadcast_to(seqs.alpha, (W,)) if len(seqs.alpha) == 1 else seqs.alpha
    beta = np.broadcast_to(seqs.beta, (H,)) if len(seqs.beta) == 1 else seqs.beta
    if len(alpha) != W or len(beta) != H:
        raise LatticeError("angle sequence length does not match the window")
    seqs = AngleSequences(alpha, beta, seqs.i0, seqs.j0)
    seqs.check()
    i0, j0 = seqs.i0, seqs.j0
    if not (i0 <= 0 <= i0 + W and j0 <= 0 <= j0 + H):
        raise LatticeError("the window must contain x_{0,0}")
    ea = np.stack([np.cos(alpha), np.sin(alpha)], axis=1)
    eb = np.stack([np.cos(beta), np.sin(beta)], axis=1)
    # X[i - i0] = position offset of column i relative to column 0
    X = np.zeros((W + 1, 2))
    X[1:] = np.cumsum(ea, axis=0)
    X -= X[-i0]
    Y = np.zeros((H + 1, 2))
    Y[1:] = np.cumsum(eb, axis=0)
    Y -= Y[-j0]
    ii, jj = np.meshgrid(np.arange(i0, i0 + W + 1), np.arange(j0, j0 + H + 1), indexing="ij")
    pos = (X[:, None, :] + Y[None, :, :]).reshape(-1, 2)
    ij = np.stack([ii.ravel(), jj.ravel()], axis=1)
    primal = ((ij[:, 0] + ij[:, 1]) % 2 == 0) ^ bool(base_parity)

    def vid(i, j):
        return (i - i0) * (H + 1) + (j - j0)

    rh, rt = [], []
    for i in range(i0, i0 + W):
        for j in range(j0, j0 + H):
            rh.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
            rt.append([i - i0, W + j - j0])
    labels = [f"s{i}" for i in range(i0, i0 + W)] + [f"t{j}" for j in range(j0, j0 + H)]
    angles = np.concatenate([alpha, beta])
    meta = {
        "kind": "square",
        "ij": ij,
        "block": {"i0": i0, "j0": j0, "W": W, "H": H},
        "vertical": list(range(W)),
        "horizontal": list(range(W, W + H)),
    }
    if j0 <= 0 <= j0 + H:
        meta["base"] = [vid(i, 0) for i in range(i0, i0 + W + 1)]
    g = IsoradialGraph(pos, primal, rh, rt, angles, labels, eps=seqs.eps, meta=meta)
    return g


def vertex_at(g: IsoradialGraph, i: int, j: int) -> int:
    ij = g.meta["ij"]
    hit = np.flatnonzero((ij[:, 0] == i) & (ij[:, 1] == j))
    if len(hit) == 0:
        raise KeyError((i, j))
    return int(hit[0])


def extract_tracks(g: IsoradialGraph) -> list:
    """Recover train tracks from the geometry alone and check invariants."""
    from collections import defaultdict
    # a track is a chain of rhombi glued along sides parallel to its vector
    side_owner = defaultdict(list)
    for r, corners in enumerate(g.rhombi):
        c0, c1, c2, c3 = (int(c) for c in corners)
        # sides parallel to w_t: (c0,c3) and (c1,c2); parallel to w_s: (c0,c1),(c3,c2)
        for slot, (a, b) in ((1, (c0, c3)), (1, (c1, c2)), (0, (c0, c1)), (0, (c3, c2))):
            side_owner[(a, b)].append((r, slot))
    parent = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for owners in side_owner.values():
        if len(owners) > 2:
            raise LatticeError("a rhombus side is shared by more than two rhombi")
        for r, slot in owners:
            find((r, slot))
        if len(owners) == 2:
            a, b = find(owners[0]), find(owners[1])
            if a != b:
                parent[a] = b
    groups = defaultdict(list)
    for r in range(g.n_rhombi):
        for slot in (0, 1):
            groups[find((r, slot))].append(r)
    tracks = []
    for members in groups.values():
        if len(set(members)) != len(members):
            raise LatticeError("a track visits the same rhombus twice")
        tracks.append(sorted(members))
    for k1 in range(len(tracks)):
        s1 = set(tracks[k1])
        for k2 in range(k1 + 1, len(tracks)):
            if len(s1.intersection(tracks[k2])) > 1:
                raise LatticeError("two tracks share more than one rhombus")
    return [TrainTrack(rhombi=_order_along(g, m), angle=_angle_of(g, m)) for m in tracks]


@dataclass
class TrainTrack:
    rhombi: list
    angle: float
    orientation: int = 1


def _angle_of(g, members) -> float:
    counts = {}
    for r in members:
        for t in g.rtracks[r]:
            counts[int(t)] = counts.get(int(t), 0) + 1
    t = max(counts, key=counts.get)
    return float(g.track_angle[t])


def _order_along(g, members) -> list:
    counts = {}
    for r in members:
        for t in g.rtracks[r]:
            counts[int(t)] = counts.get(int(t), 0) + 1
    t = max(counts, key=counts.get)
    d = g.track_direction(t)
    arr = np.asarray(members)
    return [int(x) for x in arr[np.argsort(g.centers[arr] @ d, kind="stable")]]


# ----------------------------------------------------------------------------
# generic tilings from rhombi, periodic graphs and multigrids


def from_rhombi(base_points, vec_s, vec_t, track_keys=None, origin=None, eps=None,
                meta=None, labels=None) -> IsoradialGraph:
    """Assemble a graph from rhombi given as base corner plus two unit vectors.

    Vertices are merged by coordinates (1e-7 grid), tracks are recovered by
    gluing rhombi along shared sides, and parity is a 2-colouring with the
    vertex nearest ``origin`` (default: the centroid) made primal and moved
    to the origin.
    """
    base_points = np.asarray(base_points, dtype=float).reshape(-1, 2)
    vs = np.asarray(vec_s, dtype=float).reshape(-1, 2)
    vt = np.asarray(vec_t, dtype=float).reshape(-1, 2)
    swap = _cross(vs, vt) < 0
    vs2 = np.where(swap[:, None], vt, vs)
    vt2 = np.where(swap[:, None], vs, vt)
    corners = np.stack([base_points, base_points + vs2, base_points + vs2 + vt2,
                        base_points + vt2], axis=1)
    key = np.round(corners.reshape(-1, 2) * 1e7).astype(np.int64)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    pos = np.zeros((len(uniq), 2))
    pos[inv] = corners.reshape(-1, 2)
    rh = inv.reshape(-1, 4)
    nr = len(rh)
    if len({tuple(r) for r in np.sort(rh, axis=1)}) != nr:
        raise LatticeError("duplicate rhombi")
    # glue tracks
    parent = list(range(2 * nr))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    owner = {}
    for r in range(nr):
        c0, c1, c2, c3 = (int(c) for c in rh[r])
        for slot, side in ((1, (c0, c3)), (1, (c1, c2)), (0, (c0, c1)), (0, (c3, c2))):
            if side in owner:
                a, b = find(owner[side]), find(2 * r + slot)
                if a != b:
                    parent[a] = b
            else:
                owner[side] = 2 * r + slot
    roots = sorted({find(x) for x in range(2 * nr)})
    tid = {root: k for k, root in enumerate(roots)}
    rtracks = np.array([[tid[find(2 * r)], tid[find(2 * r + 1)]] for r in range(nr)])
    angle = np.zeros(len(roots))
    vecs = np.stack([vs2, vt2], axis=1)
    for r in range(nr):
        for slot in (0, 1):
            t = rtracks[r, slot]
            angle[t] = math.atan2(vecs[r, slot, 1], vecs[r, slot, 0])
    for r in range(nr):
        for slot in (0, 1):
            if np.abs(unit(angle[rtracks[r, slot]]) - vecs[r, slot]).max() > 1e-7:
                raise LatticeError("inconsistent transverse vectors along a track")
    # parity by BFS on the diamond graph
    nv = len(pos)
    adj = [[] for _ in range(nv)]
    for c in rh:
        for k in range(4):
            a, b = int(c[k]), int(c[(k + 1) % 4])
            adj[a].append(b)
            adj[b].append(a)
    centre = pos.mean(axis=0) if origin is None else np.asarray(origin, dtype=float)
    start = int(np.argmin(((pos - centre) ** 2).sum(axis=1)))
    color = np.full(nv, -1)
    for s0 in [start] + list(range(nv)):
        if color[s0] >= 0:
            continue
        color[s0] = 0
        stack = [s0]
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if color[y] < 0:
                    color[y] = 1 - color[x]
                    stack.append(y)
                elif color[y] == color[x]:
                    raise LatticeError("diamond graph is not bipartite")
    pos = pos - pos[start]
    if track_keys is not None:
        names = {}
        for r in range(nr):
            for slot in (0, 1):
                names.setdefault(int(rtracks[r, slot]), track_keys[r][slot ^ int(swap[r])])
        labels = labels or [f"{names.get(t, 'x')}{t}" for t in range(len(roots))]
    labels = labels or [f"x{t}" for t in range(len(roots))]
    g = IsoradialGraph(pos, color == 0, rh, rtracks, angle, labels, eps=eps, meta=meta or {})
    g.meta["origin_vertex"] = start
    return g


@dataclass
class LineFamily:
    """Parallel lines <x, w> = offset + k * spacing with w = (cos a, sin a)."""

    angle: float
    spacing: float = 1.0
    offset: float = 0.0
    name: str = "x"

    @property
    def w(self) -> np.ndarray:
        return unit(self.angle)


def _multigrid_rhombi(families, points_of_pairs):
    base, vs, vt, keys = [], [], [], []
    ws = [f.w for f in families]
    for (a, b, ka, kb, p) in points_of_pairs:
        c = np.zeros(2)
        for h, f in enumerate(families):
            if h == a:
                n = ka
            elif h == b:
                n = kb
            else:
                n = math.ceil((float(p @ ws[h]) - f.offset) / f.spacing)
            c = c + n * ws[h]
        base.append(c)
        vs.append(ws[a])
        vt.append(ws[b])
        keys.append((families[a].name, families[b].name))
    return base, vs, vt, keys


def _intersections(families, box):
    """All pairwise line intersections inside box = (xmin, xmax, ymin, ymax)."""
    xmin, xmax, ymin, ymax = box
    corners = np.array([[xmin, ymin], [xmin, ymax], [xmax, ymin], [xmax, ymax]])
    out = []
    for a, b in itertools.combinations(range(len(families)), 2):
        fa, fb = families[a], families[b]
        wa, wb = fa.w, fb.w
        A = np.array([wa, wb])
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        pa = corners @ wa
        pb = corners @ wb
        ka_rng = range(math.floor((pa.min() - fa.offset) / fa.spacing) - 1,
                       math.ceil((pa.max() - fa.offset) / fa.spacing) + 2)
        kb_rng = range(math.floor((pb.min() - fb.offset) / fb.spacing) - 1,
                       math.ceil((pb.max() - fb.offset) / fb.spacing) + 2)
        for ka in ka_rng:
            for kb in kb_rng:
                rhs = np.array([fa.offset + ka * fa.spacing, fb.offset + kb * fb.spacing])
                p = np.linalg.solve(A, rhs)
                if xmin <= p[0] < xmax and ymin <= p[1] < ymax:
                    out.append((a, b, ka, kb, p))
    return out


def build_multigrid(families, box) -> IsoradialGraph:
    """Rhombic tiling dual to an arrangement of straight line families.

    Each intersection of two lines inside ``box`` gives one rhombus; the
    tiling is the de Bruijn dual of the arrangement (lines must be in
    general position: no three concurrent).
    """
    pts = _intersections(families, box)
    base, vs, vt, keys = _multigrid_rhombi(families, pts)
    g = from_rhombi(base, vs, vt, keys)
    g.validate()
    return g


@dataclass
class PeriodicPatch:
    """Rhombi (base corner, s-vector, t-vector) of one fundamental domain."""

    base: np.ndarray
    vec_s: np.ndarray
    vec_t: np.ndarray
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float).reshape(-1, 2)
        self.vec_s = np.asarray(self.vec_s, dtype=float).reshape(-1, 2)
        self.vec_t = np.asarray(self.vec_t, dtype=float).reshape(-1, 2)
        if not self.names:
            self.names = [("x", "x")] * len(self.base)


def multigrid_patch(families, lattice_vectors):
    """Fundamental patch and tiling periods of a periodic line arrangement.

    ``lattice_vectors`` (L1, L2) must map every family onto itself. The
    tiling period of L is sum_f (<L, w_f> / spacing_f) w_f.
    """
    L = np.asarray(lattice_vectors, dtype=float)
    periods = []
    for Li in L:
        tau = np.zeros(2)
        for f in families:
            shift = float(Li @ f.w) / f.spacing
            if abs(shift - round(shift)) > 1e-9:
                raise LatticeError("lattice vector does not preserve a line family")
            tau += round(shift) * f.w
        periods.append(tau)
    # intersections in the half-open parallelogram spanned by L
    Linv = np.linalg.inv(L.T)
    span = np.abs(L).sum(axis=0)
    box = (-span[0] - 1, span[0] + 1, -span[1] - 1, span[1] + 1)
    pts = [p for p in _intersections(families, box)
           if np.all((Linv @ p[4] >= -1e-12) & (Linv @ p[4] < 1 - 1e-12))]
    base, vs, vt, keys = _multigrid_rhombi(families, pts)
    return PeriodicPatch(base, vs, vt, keys), np.array(periods)


def _patch_area(patch: PeriodicPatch) -> float:
    return float(np.abs(_cross(patch.vec_s, patch.vec_t)).sum())


def build_periodic_graph(patch: PeriodicPatch, periods, window) -> IsoradialGraph:
    """Tile ``patch`` by the two periods and keep rhombi centred in window.

    ``window`` is (xmin, xmax, ymin, ymax). The patch is first validated on
    a 3x3 block of translates.
    """
    periods = np.asarray(periods, dtype=float)
    det = abs(float(np.linalg.det(periods)))
    if det < 1e-9:
        raise LatticeError("degenerate periods")
    if abs(_patch_area(patch) - det) > 1e-7:
        raise LatticeError("patch area does not match the period cell: not a tiling")
    ok = np.abs(np.linalg.norm(patch.vec_s, axis=1) - 1).max() < 1e-9 and \
        np.abs(np.linalg.norm(patch.vec_t, axis=1) - 1).max() < 1e-9
    if not ok:
        raise LatticeError("patch rhombi must have unit sides")
    # 3x3 validation: the centre copy's vertices must be fully surrounded
    test = _tile(patch, periods, range(-1, 2), range(-1, 2), None)
    # overlapping translates show up as angle sums above 2 pi
    test.validate()
    centre = np.flatnonzero(test.meta["copy"] == test.meta["centre_copy"])
    cen = test.centers
    for r in centre:
        d = np.abs(cen - cen[r]).max(axis=1)
        if np.sum(d < 1e-7) > 1:
            raise LatticeError("patch translates overlap")
    # translate range covering the window
    xmin, xmax, ymin, ymax = window
    corners = np.array([[xmin, ymin], [xmin, ymax], [xmax, ymin], [xmax, ymax]])
    inv = np.linalg.inv(periods.T)
    coef = corners @ inv.T
    reach = np.abs(patch.base).max() + 3
    pad = reach * np.abs(inv).sum(axis=1).max() + 1
    a_rng = range(math.floor(coef[:, 0].min() - pad), math.ceil(coef[:, 0].max() + pad) + 1)
    b_rng = range(math.floor(coef[:, 1].min() - pad), math.ceil(coef[:, 1].max() + pad) + 1)
    g = _tile(patch, periods, a_rng, b_rng, window)
    if not _parity_preserving(g, periods):
        raise LatticeError("periods do not preserve the primal/dual colouring")
    g.meta["periods"] = periods
    g.meta["window"] = list(window)
    g.meta["kind"] = "periodic"
    g.validate()
    return g


def _tile(patch, periods, a_rng, b_rng, window):
    base, vs, vt, names, copy = [], [], [], [], []
    centre_copy = None
    for ia, a in enumerate(a_rng):
        for ib, b in enumerate(b_rng):
            shift = a * periods[0] + b * periods[1]
            for r in range(len(patch.base)):
                c0 = patch.base[r] + shift
                cen = c0 + (patch.vec_s[r] + patch.vec_t[r]) / 2
                if window is not None:
                    xmin, xmax, ymin, ymax = window
                    if not (xmin <= cen[0] < xmax and ymin <= cen[1] < ymax):
                        continue
                base.append(c0)
                vs.append(patch.vec_s[r])
                vt.append(patch.vec_t[r])
                names.append(patch.names[r])
                copy.append(ia * len(b_rng) + ib)
                if a == 0 and b == 0:
                    centre_copy = ia * len(b_rng) + ib
    if not base:
        raise WindowTooSmall("window contains no rhombus")
    origin = np.zeros(2) if window is None else np.array([(window[0] + window[1]) / 2,
                                                          (window[2] + window[3]) / 2])
    g = from_rhombi(base, vs, vt, names, origin=origin)
    g.meta["copy"] = np.asarray(copy)
    g.meta["centre_copy"] = centre_copy
    return g


def _parity_preserving(g, periods) -> bool:
    key = {tuple(np.round(p * 1e6).astype(np.int64)): v for v, p in enumerate(g.pos)}
    for tau in periods:
        for v, p in enumerate(g.pos):
            w = key.get(tuple(np.round((p + tau) * 1e6).astype(np.int64)))
            if w is not None:
                return bool(g.primal[v] == g.primal[w])
    return True


# ----------------------------------------------------------------------------
# grids


@dataclass
class Grid:
    vertical: dict
    horizontal: dict
    classes: dict
    directions: dict

    def s(self, n: int) -> int:
        return self.vertical[n]

    def t(self, n: int) -> int:
        return self.horizontal[n]


def classify_directions(g: IsoradialGraph, max_coef: int = 4, min_overlap: float = 0.5) -> dict:
    """Asymptotic direction class (a, b) of each track: the track is
    invariant under translation by a*tau1 + b*tau2."""
    periods = g.meta.get("periods")
    if periods is None:
        raise LatticeError("graph carries no periodicity metadata")
    periods = np.asarray(periods)
    seqs = g.track_sequences
    cen = g.centers
    cands = sorted({(a, b) for a in range(-max_coef, max_coef + 1)
                    for b in range(-max_coef, max_coef + 1)
                    if (a, b) != (0, 0) and math.gcd(a, b) == 1 and (a > 0 or (a == 0 and b > 0))},
                   key=lambda ab: (abs(ab[0]) + abs(ab[1]), ab))
    out = {}
    for t, seq in seqs.items():
        if len(seq) < 3:
            continue
        pts = {tuple(np.round(cen[r] * 1e6).astype(np.int64)) for r in seq}
        for a, b in cands:
            v = a * periods[0] + b * periods[1]
            hits = sum(tuple(np.round((cen[r] + v) * 1e6).astype(np.int64)) in pts for r in seq)
            hits2 = sum(tuple(np.round((cen[r] - v) * 1e6).astype(np.int64)) in pts for r in seq)
            if max(hits, hits2) >= max(2, min_overlap * (len(seq) - 1)):
                out[t] = (a, b)
                break
    return out


def find_grid(g: IsoradialGraph) -> Grid:
    """Two track families forming a grid of a periodic graph.

    Direction classes closest to vertical and horizontal are chosen; s_0 is
    the first vertical-class track right of the origin along t_0, and t_0 is
    the horizontal-class track whose lower side contains the origin vertex.
    Vertical tracks are ordered by increasing x along t_0 (a convention).
    """
    cls = classify_directions(g)
    periods = np.asarray(g.meta["periods"])
    dirs = {}
    for ab in set(cls.values()):
        v = ab[0] * periods[0] + ab[1] * periods[1]
        dirs[ab] = v / np.linalg.norm(v)
    if len(dirs) < 2:
        raise WindowTooSmall("fewer than two direction classes found")
    hor = max(dirs, key=lambda ab: abs(dirs[ab][0]))
    ver = max((ab for ab in dirs if ab != hor), key=lambda ab: abs(dirs[ab][1]))
    origin = int(np.argmin((g.pos ** 2).sum(axis=1)))
    # t_0: horizontal-class track having the origin on its lower side
    t0 = None
    for r in g.vertex_rhombi[origin]:
        for t in g.rtracks[r]:
            t = int(t)
            if cls.get(t) == hor:
                w = g.track_vec[t]
                if (g.pos[origin] - g.centers[r]) @ w < 0 and w[1] > 0:
                    t0 = t
                elif (g.pos[origin] - g.centers[r]) @ w > 0 and w[1] < 0:
                    t0 = t
    if t0 is None:
        raise WindowTooSmall("no horizontal track above the origin")
    cen = g.centers
    verts_on_t0 = sorted((cen[g.crossing_map[(t0, t)]][0], t)
                         for t in g.positions[t0] if cls.get(t) == ver)
    right = [t for x, t in verts_on_t0 if x > g.pos[origin][0]]
    if not right:
        raise WindowTooSmall("no vertical track right of the origin")
    s0 = right[0]
    k0 = [t for _, t in verts_on_t0].index(s0)
    vertical = {n - k0: t for n, (_, t) in enumerate(verts_on_t0)}
    hs = sorted((cen[g.crossing_map[(s0, t)]][1], t)
                for t in g.positions[s0] if cls.get(t) == hor)
    j0 = [t for _, t in hs].index(t0)
    horizontal = {n - j0: t for n, (_, t) in enumerate(hs)}
    return Grid(vertical=vertical, horizontal=horizontal, classes=cls,
                directions={"vertical": ver, "horizontal": hor})


def relabel_with_grid(g: IsoradialGraph, grid: Grid) -> IsoradialGraph:
    """Rename grid tracks s_n / t_n and mark kinds; other tracks keep names."""
    labels = list(g.track_label)
    kinds = list(g.track_kind)
    for n, t in grid.vertical.items():
        labels[t] = f"s{n}"
        kinds[t] = "v"
    for n, t in grid.horizontal.items():
        labels[t] = f"t{n}"
        kinds[t] = "h"
    hor = grid.directions["horizontal"]
    for t, ab in grid.classes.items():
        if ab == hor:
            kinds[t] = "h"
    out = g.replace(track_label=labels, track_kind=kinds, version=g.version)
    out.meta = dict(g.meta)
    out.meta["grid"] = {"vertical": {int(k): int(v) for k, v in grid.vertical.items()},
                        "horizontal": {int(k): int(v) for k, v in grid.horizontal.items()}}
    return out


# ----------------------------------------------------------------------------
# convexification


def _block_paths(g: IsoradialGraph):
    """Right and left boundary paths (vertex ids, track ids), bottom to top."""
    if "right_path" in g.meta:
        rp, lp = g.meta["right_path"], g.meta["left_path"]
        return ([list(rp[0]), list(rp[1])], [list(lp[0]), list(lp[1])])
    if g.meta.get("kind") != "square" and "block" not in g.meta:
        raise LatticeError("convexify expects a square-lattice block")
    b = g.meta["block"]
    i0, j0, W, H = b["i0"], b["j0"], b["W"], b["H"]
    ij = g.meta["ij"]
    lut = {(int(a), int(c)): v for v, (a, c) in enumerate(ij) if a != NO_IJ}
    hor = g.meta["horizontal"]
    right = [[lut[(i0 + W, j)] for j in range(j0, j0 + H + 1)], list(hor)]
    left = [[lut[(i0, j)] for j in range(j0, j0 + H + 1)], list(hor)]
    return right, left


def convexify(g: IsoradialGraph, prioritized_pair=None, segments=None):
    """Add boundary rhombi until every pair of horizontal tracks with
    distinct angles intersects.

    Returns ``(graph, added)`` with ``added`` the new rhombus ids. With
    ``prioritized_pair`` (two adjacent horizontal track labels or ids) the
    corresponding swap is performed first on its side, so their rhombus is
    adjacent to the block. ``segments`` lists (lo, hi) row ranges of the
    boundary convexified independently (used by symmetric mixtures).
    """
    right, left = _block_paths(g)
    pos = [p for p in g.pos]
    primal = list(g.primal)
    ij = [tuple(x) for x in g.meta["ij"]] if "ij" in g.meta else None
    rh = [list(r) for r in g.rhombi]
    rt = [list(t) for t in g.rtracks]
    vec = g.track_vec
    nrows = len(right[1])
    segs = segments or [(0, nrows)]
    pri = None
    if prioritized_pair is not None:
        pri = {g.track_id(prioritized_pair[0]), g.track_id(prioritized_pair[1])}
    added = []

    def run(path, side):
        verts, tracks = path
        sign = 1.0 if side == "right" else -1.0
        while True:
            cand = []
            for lo, hi in segs:
                for j in range(lo, hi - 1):
                    d = sign * (vec[tracks[j + 1]][0] - vec[tracks[j]][0])
                    if d > 1e-12:
                        cand.append(j)
            if not cand:
                return
            j = cand[0]
            if pri is not None:
                for c in cand:
                    if {tracks[c], tracks[c + 1]} == pri:
                        j = c
                        break
            P = verts[j]
            a, b = tracks[j], tracks[j + 1]
            newp = pos[P] + vec[b]
            nv = len(pos)
            pos.append(newp)
            primal.append(primal[verts[j + 1]])
            if ij is not None:
                ij.append((NO_IJ, NO_IJ))
            if _cross(vec[a], vec[b]) > 0:
                rh.append([P, verts[j + 1], verts[j + 2], nv])
                rt.append([a, b])
            else:
                rh.append([P, nv, verts[j + 2], verts[j + 1]])
                rt.append([b, a])
            added.append(len(rh) - 1)
            verts[j + 1] = nv
            tracks[j], tracks[j + 1] = b, a

    run(right, "right")
    run(left, "left")
    meta = dict(g.meta)
    if ij is not None:
        meta["ij"] = np.asarray(ij, dtype=np.int64)
    meta["right_path"] = [list(map(int, right[0])), list(map(int, right[1]))]
    meta["left_path"] = [list(map(int, left[0])), list(map(int, left[1]))]
    meta["convexified"] = True
    out = g.replace(pos=np.asarray(pos), primal=np.asarray(primal), rhombi=np.asarray(rh),
                    rtracks=np.asarray(rt), meta=meta, eps=None)
    out.validate()
    return out, added


# ----------------------------------------------------------------------------
# mixed graphs


def build_mixed(seq1: AngleSequences, seq2: AngleSequences, M: int, N1: int, N2: int,
                symmetric: bool = False) -> IsoradialGraph:
    """Block of G1 (rows t_0..t_N1) under a block of G2 (rows t_{N1+1}..
    t_{N1+N2+1}), width 2M+1, convexified.

    Both sequences are read from their own index 0 upwards for beta and at
    s_{-M..M} for alpha (which must agree). With ``symmetric`` the picture
    is mirrored below the base and each half is convexified separately.
    """
    W = 2 * M + 1
    a1 = np.array([seq1.alpha_at(i) if len(seq1.alpha) > 1 else seq1.alpha[0]
                   for i in range(-M, M + 1)]) if len(seq1.alpha) != W or seq1.i0 != -M \
        else seq1.alpha
    a2 = np.array([seq2.alpha_at(i) if len(seq2.alpha) > 1 else seq2.alpha[0]
                   for i in range(-M, M + 1)]) if len(seq2.alpha) != W or seq2.i0 != -M \
        else seq2.alpha
    if np.abs(np.asarray(a1) - np.asarray(a2)).max() > 1e-12:
        raise LatticeError("mixed graph needs a shared vertical angle sequence")
    b1 = [seq1.beta_at(j) if len(seq1.beta) > 1 else seq1.beta[0] for j in range(seq1.j0, seq1.j0 + N1 + 1)]
    b2 = [seq2.beta_at(j) if len(seq2.beta) > 1 else seq2.beta[0] for j in range(seq2.j0, seq2.j0 + N2 + 1)]
    upper = list(b1) + list(b2)
    if symmetric:
        lower = [math.pi - b + 2 * float(a1[0]) for b in upper][::-1]
        beta = lower + upper
        j0 = -len(upper)
    else:
        beta = upper
        j0 = 0
    seqs = AngleSequences(np.asarray(a1, dtype=float), np.asarray(beta), -M, j0)
    seqs.check()
    g = build_square_lattice(seqs)
    H = len(beta)
    segs = [(0, H - len(upper)), (H - len(upper), H)] if symmetric else None
    g, _ = convexify(g, segments=segs)
    hor = g.meta["horizontal"]
    n_up = len(upper)
    g.meta.update({
        "kind": "mixed",
        "M": M, "N1": N1, "N2": N2, "symmetric": bool(symmetric),
        "upper": [g.track_label[t] for t in hor[H - n_up:]],
        "lower": [g.track_label[t] for t in hor[:H - n_up]][::-1],
        "g1_rows": N1 + 1,
    })
    return g


# ----------------------------------------------------------------------------
# black points


@dataclass
class BlackPointResult:
    """``steps`` holds every flip (clearing moves included); ``pushes`` lists
    the black points pushed above t_N, in order."""

    steps: list
    graph: IsoradialGraph
    initial_count: int
    window: tuple | None = None
    pushes: list = field(default_factory=list)

    def labelled_steps(self) -> list:
        return [tuple(self.graph.track_label[t] for t in s) for s in self.steps]


def _horizontal_class(g: IsoradialGraph, grid: Grid) -> set:
    hor = grid.directions["horizontal"]
    return {t for t, ab in grid.classes.items() if ab == hor} | set(grid.horizontal.values())


def black_points(g: IsoradialGraph, grid: Grid, M: int, N: int) -> list:
    """Crossings x∩y of non-horizontal tracks, one of them among the tracks
    between s_{-M} and s_M along t_0, strictly between t_0 and t_N on x."""
    hor = _horizontal_class(g, grid)
    t0, tN = grid.t(0), grid.t(N)
    P = g.positions
    nonh = [t for t in range(g.n_tracks) if t not in hor and t0 in P[t]]
    stilde = sorted(nonh, key=lambda t: g.centers[g.crossing(t, t0)][0])
    try:
        lo, hi = stilde.index(grid.s(-M)), stilde.index(grid.s(M))
    except (KeyError, ValueError):
        raise WindowTooSmall("grid columns outside the window") from None
    nset = set(nonh)
    out = set()
    for x in stilde[lo:hi + 1]:
        px = P[x]
        if tN not in px:
            raise WindowTooSmall(f"track {g.track_label[x]} leaves the window below t_{N}")
        for y, k in px.items():
            if y in nset and px[t0] < k < px[tN]:
                out.add((min(x, y), max(x, y)))
    return sorted(out, key=lambda p: tuple(sorted((g.track_label[p[0]], g.track_label[p[1]]))))


def _next_horizontal(g, x, y, hor):
    px = g.positions[x]
    k = px[y]
    above = [(px[t], t) for t in px if t in hor and px[t] > k]
    return min(above)[1] if above else None


def _triangle_sides(x, y, th):
    from .stt import Side
    return [Side(x, y, th), Side(y, x, th), Side(th, x, y)]


def _has_inner_black(g, x, y, th, hor) -> bool:
    from .stt import _inside
    inside = _inside(g, _triangle_sides(x, y, th))
    for z, sides in inside.items():
        if len(sides) < 2:
            continue
        pz = g.positions[z]
        lo, hi = sorted(pz[s] for s in sides[:2])
        if any(w in inside and w not in hor and lo < pz[w] < hi for w in pz):
            return True
    return False


def eliminate_black_points(g: IsoradialGraph, M: int, N: int, grid: Grid | None = None,
                           max_steps: int = 100000) -> BlackPointResult:
    """Flip sequence giving R(-M, M; 0, N) a square-lattice structure.

    Maximal black points (no other black point inside the triangle they form
    with the next horizontal track) are pushed above t_N one at a time, ties
    broken by the smallest track-label pair. No flip touches t_0.
    """
    from .stt import Runner, clear_region
    if grid is None:
        if "periods" not in g.meta:
            raise LatticeError("black-point elimination needs a periodic graph with a grid")
        grid = find_grid(g)
    hor = _horizontal_class(g, grid)
    t0, tN = grid.t(0), grid.t(N)
    run = Runner(g)
    initial = len(black_points(g, grid, M, N))
    pushes = []

    def forbidden(gg, rs):
        return any(t0 in (int(gg.rtracks[r][0]), int(gg.rtracks[r][1])) for r in rs)

    try:
        while len(run.steps) < max_steps:
            pts = black_points(run.g, grid, M, N)
            if not pts:
                break
            pick = pts[0]
            for x, y in pts:
                th = _next_horizontal(run.g, x, y, hor)
                if th is not None and not _has_inner_black(run.g, x, y, th, hor):
                    pick = (x, y)
                    break
            x, y = pick
            pushes.append(pick)
            while run.g.positions[x][y] < run.g.positions[x][tN]:
                th = _next_horizontal(run.g, x, y, hor)
                if th is None:
                    raise WindowTooSmall("no horizontal track above a black point")
                clear_region(run, _triangle_sides(x, y, th), [(x, y), (x, th), (y, th)],
                             forbidden)
                run.flip((x, y, th))
        else:
            raise LatticeError("black-point elimination did not terminate")
    except WindowTooSmall:
        raise
    except LatticeError as exc:
        raise WindowTooSmall(str(exc)) from exc
    return BlackPointResult(run.steps, run.g, initial, None, pushes)


def eliminate_black_points_growing(patch: PeriodicPatch, periods, M: int, N: int,
                                   half_width: float = 6.0, grow: float = 1.5,
                                   max_rounds: int = 8) -> BlackPointResult:
    """Rebuild on larger windows until elimination succeeds."""
    w = half_width
    for _ in range(max_rounds):
        window = (-w, w, -w, w)
        try:
            g = build_periodic_graph(patch, periods, window)
            grid = find_grid(g)
            g = relabel_with_grid(g, grid)
            res = eliminate_black_points(g, M, N, grid)
            res.window = window
            return res
        except WindowTooSmall:
            w *= grow
    raise WindowTooSmall(f"elimination failed up to half-width {w:.1f}")
