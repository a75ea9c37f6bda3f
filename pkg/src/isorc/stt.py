"""Star-triangle transformations on rhombic tilings and their coupling with
random-cluster configurations.

A site is a degree-3 interior vertex ``c`` of the diamond graph, i.e. a
hexagon made of three rhombi. Flipping it moves ``c`` to ``c + u0 + u1 + u2``
(``u_i`` the vectors to its three neighbours) and translates each rhombus by
the vector of the third track. Rhombus and track identities are kept, so
edge ids survive every flip.

Local labelling: ``tracks[i]`` carries ``u_i`` and rhombus ``r_A`` is the
crossing of ``tracks[1]`` and ``tracks[2]`` (similarly ``r_B``, ``r_C``). For
a triangle, ``r_A`` is the edge ``BC``; for a star it is ``OA``. Local
configuration bits are ``(a, b, c)`` = states of ``(r_A, r_B, r_C)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import IsoradialGraph, LatticeError
from .rcm import Configuration, MeasureSpec, exact_distribution
from .weights import edge_weight


class StaleSite(LatticeError):
    pass


@dataclass(frozen=True)
class SttSite:
    center: int
    rhombi: tuple          # (r_A, r_B, r_C)
    pattern: str           # "triangle" | "star"
    outer: tuple           # primal vertices (A, B, C)
    tracks: tuple          # track of u_0, u_1, u_2
    neighbours: tuple      # diamond neighbours c + u_i
    version: int

    def to_dict(self) -> dict:
        # the version stamp is process-local and left out so logs replay byte-identically
        return {"center": self.center, "rhombi": list(self.rhombi), "pattern": self.pattern,
                "outer": list(self.outer), "tracks": list(self.tracks),
                "neighbours": list(self.neighbours)}


@dataclass
class SttRecord:
    before: SttSite
    after: SttSite
    outcome: int
    prob: float
    edges: tuple
    old: tuple
    new: tuple
    track_labels: tuple = ()

    def to_dict(self) -> dict:
        return {"before": self.before.to_dict(), "after": self.after.to_dict(),
                "outcome": self.outcome, "prob": self.prob, "edges": list(self.edges),
                "old": list(self.old), "new": list(self.new),
                "tracks": list(self.track_labels)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def write_log(records, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_log(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ----------------------------------------------------------------------------
# sites


def site_at(g: IsoradialGraph, c: int) -> SttSite | None:
    """The site centred at diamond vertex ``c``, if it is one."""
    inc = g.vertex_rhombi[c]
    if len(inc) != 3 or abs(g.angle_sum[c] - 2 * math.pi) > 1e-7:
        return None
    nbrs = set()
    for r in inc:
        corners = list(g.rhombi[r])
        k = corners.index(c)
        nbrs.add(int(corners[(k + 1) % 4]))
        nbrs.add(int(corners[(k + 3) % 4]))
    if len(nbrs) != 3:
        return None
    nb = tuple(sorted(nbrs))
    tr = []
    for n in nb:
        u = g.pos[n] - g.pos[c]
        found = None
        for r in inc:
            if n in g.rhombi[r]:
                for t in g.rtracks[r]:
                    if abs(abs(float(u @ g.track_vec[t])) - 1.0) < 1e-7:
                        found = int(t)
                break
        if found is None:
            return None
        tr.append(found)
    rh = []
    for i in range(3):
        j, k = [x for x in range(3) if x != i]
        r = g.crossing(tr[j], tr[k])
        if r < 0 or r not in inc:
            return None
        rh.append(r)
    if g.primal[c]:
        pattern = "star"
        outer = tuple(_far_corner(g, r, c) for r in rh)
    else:
        pattern = "triangle"
        outer = nb
    return SttSite(c, tuple(rh), pattern, tuple(outer), tuple(tr), nb, g.version)


def _far_corner(g, r, c) -> int:
    corners = list(g.rhombi[r])
    return int(corners[(corners.index(c) + 2) % 4])


def find_stt_sites(g: IsoradialGraph) -> list:
    out = []
    for c in range(g.n_vertices):
        if len(g.vertex_rhombi[c]) == 3:
            s = site_at(g, c)
            if s is not None:
                out.append(s)
    return out


def site_from_tracks(g: IsoradialGraph, tracks) -> SttSite:
    """Locate the hexagon formed by three pairwise crossing tracks."""
    a, b, c = (g.track_id(t) for t in tracks)
    rs = [g.crossing(a, b), g.crossing(b, c), g.crossing(a, c)]
    if min(rs) < 0:
        raise StaleSite(f"tracks {tracks} do not pairwise cross")
    common = set(map(int, g.rhombi[rs[0]])) & set(map(int, g.rhombi[rs[1]])) \
        & set(map(int, g.rhombi[rs[2]]))
    for v in common:
        s = site_at(g, v)
        if s is not None and set(s.tracks) == {a, b, c}:
            return s
    raise StaleSite(f"tracks {[g.track_label[t] for t in (a, b, c)]} do not bound a hexagon")


def _check_site(g: IsoradialGraph, site: SttSite) -> None:
    if site.version != g.version:
        raise StaleSite("site belongs to another graph version")


# ----------------------------------------------------------------------------
# graph surgery


def transform_graph(g: IsoradialGraph, site: SttSite) -> IsoradialGraph:
    """Flip the hexagon: triangle <-> star."""
    _check_site(g, site)
    c = site.center
    nb = site.neighbours
    far = [_far_corner(g, r, c) for r in site.rhombi]
    # c' = c + sum u_i written so that a second flip cancels it
    shift = (g.pos[far[0]] + g.pos[far[1]] + g.pos[far[2]]) \
        - (g.pos[nb[0]] + g.pos[nb[1]] + g.pos[nb[2]])
    newc = g.pos[c] + shift
    old_c = g.pos[c].copy()
    key = {}
    for v in list(nb) + far:
        key[_pkey(g.pos[v])] = v
    key[_pkey(newc)] = c
    pos = g.pos.copy()
    pos[c] = newc
    rhombi = g.rhombi.copy()
    vec = {t: g.pos[n] - old_c for t, n in zip(site.tracks, nb)}
    for i, r in enumerate(site.rhombi):
        u = vec[site.tracks[i]]
        moved = []
        for v in g.rhombi[r]:
            p = (g.pos[v] if v != c else old_c) + u
            k = _pkey(p)
            if k not in key:
                raise LatticeError("hexagon flip produced an unknown corner")
            moved.append(key[k])
        rhombi[r] = moved
    primal = g.primal.copy()
    primal[c] = not primal[c]
    out = IsoradialGraph(pos, primal, rhombi, g.rtracks, g.track_angle, g.track_label,
                         g.track_kind, eps=g.eps, meta=g.meta)
    return out


def _pkey(p):
    return (round(float(p[0]) * 1e6), round(float(p[1]) * 1e6))


# ----------------------------------------------------------------------------
# coupling tables

_TRI_DET = {0b001: 0b110, 0b010: 0b101, 0b100: 0b011}
_STAR_DET = {0b110: 0b001, 0b101: 0b010, 0b011: 0b100}


def _bits(a, b, c) -> int:
    return (a << 2) | (b << 1) | c


def site_weights(g: IsoradialGraph, site: SttSite, q: float):
    """Odds (y_A, y_B, y_C) of the three current edges of the site."""
    return tuple(edge_weight(float(g.theta[r]), q).y for r in site.rhombi)


def outcome_table(pattern: str, local: int, y, q: float) -> list:
    """Distribution of the image of local state ``local`` (bits a,b,c).

    ``y`` are the current odds of the site's edges. Triangle -> star uses
    the star odds y' = q / y.
    """
    if pattern == "triangle":
        if local == 0:
            ys = [q / v for v in y]
            tot = q + sum(ys)
            return [(0b000, q / tot), (0b100, ys[0] / tot), (0b010, ys[1] / tot),
                    (0b001, ys[2] / tot)]
        if local in _TRI_DET:
            return [(_TRI_DET[local], 1.0)]
        return [(0b111, 1.0)]
    # star -> triangle; the triangle odds are q / y
    if local == 0b111:
        ya, yb, yc = (q / v for v in y)
        return [(0b110, ya * yb / q), (0b011, yb * yc / q), (0b101, ya * yc / q),
                (0b111, ya * yb * yc / q)]
    if local in _STAR_DET:
        return [(_STAR_DET[local], 1.0)]
    return [(0b000, 1.0)]


def coupled_transform(g: IsoradialGraph, site: SttSite, config: Configuration,
                      rng: np.random.Generator, q: float):
    """Flip the site and map the configuration through the coupling.

    One uniform is drawn from ``rng`` per call, whatever the input row, so
    that replays consume the stream identically.
    """
    _check_site(g, site)
    if config.version != g.version:
        raise StaleSite("configuration belongs to another graph version")
    y = site_weights(g, site, q)
    ra, rb, rc = site.rhombi
    st = config.state
    local = _bits(int(st[ra]), int(st[rb]), int(st[rc]))
    table = outcome_table(site.pattern, local, y, q)
    u = rng.random()
    acc, k = 0.0, len(table) - 1
    for i, (_, p) in enumerate(table):
        acc += p
        if u < acc:
            k = i
            break
    new_local, prob = table[k]
    g2 = transform_graph(g, site)
    state = st.copy()
    state[ra], state[rb], state[rc] = (new_local >> 2) & 1, (new_local >> 1) & 1, new_local & 1
    cfg = Configuration(state, g2.version)
    after = site_at(g2, site.center)
    rec = SttRecord(site, after, k, float(prob), site.rhombi,
                    ((local >> 2) & 1, (local >> 1) & 1, local & 1),
                    ((new_local >> 2) & 1, (new_local >> 1) & 1, new_local & 1),
                    tuple(g.track_label[t] for t in site.tracks))
    return g2, cfg, rec


def batch_couple(pattern: str, local: np.ndarray, y, q: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Vectorised coupling of many local states (ints 0..7) at one site."""
    local = np.asarray(local, dtype=np.int64)
    out = np.empty_like(local)
    u = rng.random(len(local))
    for s in range(8):
        idx = np.flatnonzero(local == s)
        if len(idx) == 0:
            continue
        table = outcome_table(pattern, s, y, q)
        cum = np.cumsum([p for _, p in table])
        k = np.minimum(np.searchsorted(cum, u[idx], side="right"), len(table) - 1)
        out[idx] = np.array([t for t, _ in table])[k]
    return out


def pushforward_probs(probs: np.ndarray, site: SttSite, y, q: float) -> np.ndarray:
    """Exact image of a law on {0,1}^m (index bit e = edge e) under the coupling."""
    idx = np.arange(len(probs), dtype=np.int64)
    ra, rb, rc = site.rhombi
    local = (((idx >> ra) & 1) << 2) | (((idx >> rb) & 1) << 1) | ((idx >> rc) & 1)
    base = idx & ~((1 << ra) | (1 << rb) | (1 << rc))
    out = np.zeros_like(probs)
    for s in range(8):
        sel = local == s
        if not sel.any():
            continue
        for new, p in outcome_table(site.pattern, s, y, q):
            tgt = base[sel] | (((new >> 2) & 1) << ra) | (((new >> 1) & 1) << rb) | ((new & 1) << rc)
            np.add.at(out, tgt, p * probs[sel])
    return out


def pushforward(g: IsoradialGraph, spec: MeasureSpec, steps, probs=None):
    """Exact law after a replayed sequence of flips (given as track triples).

    Returns ``(final graph, probabilities)``. The starting law defaults to
    the exact random-cluster law of ``g`` under ``spec``.
    """
    if probs is None:
        probs = exact_distribution(g, spec).probs
    q = spec.q
    for tr in steps:
        site = site_from_tracks(g, tr)
        probs = pushforward_probs(probs, site, site_weights(g, site, q), q)
        g = transform_graph(g, site)
    return g, probs


# ----------------------------------------------------------------------------
# sequences: a runner applies flips to a graph and optionally a configuration


class Runner:
    """Applies flips given by track triples, optionally coupling a config."""

    def __init__(self, g: IsoradialGraph, config: Configuration | None = None,
                 rng: np.random.Generator | None = None, q: float | None = None):
        self.g = g
        self.config = config
        self.rng = rng
        self.q = q
        self.steps: list = []
        self.records: list = []

    def flip(self, tracks) -> None:
        site = site_from_tracks(self.g, tracks)
        if self.config is None:
            self.g = transform_graph(self.g, site)
        else:
            self.g, self.config, rec = coupled_transform(self.g, site, self.config, self.rng, self.q)
            self.records.append(rec)
        self.steps.append(tuple(int(t) for t in site.tracks))


def replay(g: IsoradialGraph, steps, config=None, rng=None, q=None):
    """Re-run a flip sequence; returns (graph, config, records)."""
    run = Runner(g, config, rng, q)
    for tr in steps:
        run.flip(tr)
    return run.g, run.config, run.records


def inverse_steps(steps) -> list:
    return list(reversed(list(steps)))


# ----------------------------------------------------------------------------
# clearing a region bounded by track segments


@dataclass
class Side:
    """Segment of ``track`` strictly between its crossings with ``lo`` and ``hi``."""

    track: int
    lo: int
    hi: int


def _other(g, r, t) -> int:
    a, b = g.rtracks[r]
    return int(b) if a == t else int(a)


def _interval(g, side: Side):
    p = g.positions[side.track]
    a, b = p[side.lo], p[side.hi]
    return (a, b) if a < b else (b, a)


def _inside(g, sides) -> dict:
    res: dict = {}
    for s in sides:
        lo, hi = _interval(g, s)
        seq = g.track_sequences[s.track]
        for k in range(lo + 1, hi):
            res.setdefault(_other(g, seq[k], s.track), []).append(s.track)
    return res


def is_face(g, a, b, c) -> bool:
    P = g.positions
    try:
        return (abs(P[a][b] - P[a][c]) == 1 and abs(P[b][a] - P[b][c]) == 1
                and abs(P[c][a] - P[c][b]) == 1)
    except KeyError:
        return False


def _crosses_inside(g, z, w, inside) -> bool:
    sides = inside.get(z, [])
    if len(sides) < 2 or w not in g.positions[z]:
        return False
    pz = g.positions[z]
    lo, hi = sorted(pz[s] for s in sides[:2])
    return lo < pz[w] < hi


def _find_clearing_move(g, sides, corners, forbidden):
    inside = _inside(g, sides)
    if not inside:
        return None, inside

    def ok(tr):
        rs = (g.crossing(tr[0], tr[1]), g.crossing(tr[1], tr[2]), g.crossing(tr[0], tr[2]))
        return not (forbidden and forbidden(g, rs)) and is_face(g, *tr)

    for s1, s2 in corners:
        side = next(s for s in sides if s.track == s1 and s2 in (s.lo, s.hi))
        pc = g.positions[s1][s2]
        lo, hi = _interval(g, side)
        k = pc + 1 if pc == lo else pc - 1
        if lo < k < hi:
            z = _other(g, g.track_sequences[s1][k], s1)
            if z in inside and ok((s1, s2, z)):
                return (s1, s2, z), inside
    for s in sides:
        lo, hi = _interval(g, s)
        seq = g.track_sequences[s.track]
        for k in range(lo + 1, hi - 1):
            z, w = _other(g, seq[k], s.track), _other(g, seq[k + 1], s.track)
            if z in inside and w in inside and _crosses_inside(g, z, w, inside) \
                    and ok((s.track, z, w)):
                return (s.track, z, w), inside
    raise LatticeError("clearing is stuck: no admissible flip in the region")


def clear_region(run: Runner, sides, corners, forbidden=None, max_steps=100000) -> None:
    """Flip until no track crosses any side segment.

    ``corners`` lists (track, track) pairs whose crossing may be moved.
    ``forbidden(g, rhombi)`` vetoes flips touching protected rhombi.
    """
    for _ in range(max_steps):
        move, _ = _find_clearing_move(run.g, sides, corners, forbidden)
        if move is None:
            return
        run.flip(move)
    raise LatticeError("clearing did not terminate")


# ----------------------------------------------------------------------------
# track exchange


@dataclass
class TrackExchangePlan:
    tracks: tuple
    pre_moves: list = field(default_factory=list)
    slides: list = field(default_factory=list)
    side: str = ""


def _block_tracks(g: IsoradialGraph):
    vert = list(g.meta.get("vertical", []))
    if not vert:
        raise LatticeError("graph carries no block metadata")
    return vert


def block_rhombi(g: IsoradialGraph) -> set:
    """Rhombi crossing a block vertical track (never convexification rhombi)."""
    vert = set(_block_tracks(g))
    return {r for r, (s, t) in enumerate(g.rtracks) if int(s) in vert or int(t) in vert}


def horizontal_order(g: IsoradialGraph) -> list:
    """Horizontal block tracks bottom to top along the middle vertical track."""
    vert = _block_tracks(g)
    mid = vert[len(vert) // 2]
    seq = g.track_sequences[mid]
    return [_other(g, r, mid) for r in seq]


def _side_of(g, t, u) -> str:
    vert = _block_tracks(g)
    r = g.crossing(t, u)
    mid = g.centers[g.crossing(t, vert[len(vert) // 2])]
    return "right" if g.centers[r][0] > mid[0] else "left"


def _forbid_block(g0: IsoradialGraph):
    vert = set(_block_tracks(g0))

    def forbidden(g, rs):
        return any(int(g.rtracks[r][0]) in vert or int(g.rtracks[r][1]) in vert for r in rs)

    return forbidden


def _exchange(run: Runner, t: int, u: int) -> TrackExchangePlan:
    g = run.g
    order = horizontal_order(g)
    if t not in order or u not in order:
        raise LatticeError("track exchange needs two horizontal block tracks")
    if abs(order.index(t) - order.index(u)) != 1:
        raise LatticeError(f"tracks {g.track_label[t]} and {g.track_label[u]} are not adjacent")
    plan = TrackExchangePlan((g.track_label[t], g.track_label[u]))
    if abs(g.track_angle[t] - g.track_angle[u]) < 1e-12:
        return plan
    if g.crossing(t, u) < 0:
        raise LatticeError("distinct-angle horizontal tracks do not cross: convexify first")
    vert = _block_tracks(g)
    side = _side_of(g, t, u)
    plan.side = side
    near = vert[-1] if side == "right" else vert[0]
    n0 = len(run.steps)
    clear_region(run, [Side(t, near, u), Side(u, near, t)], [(t, u)], _forbid_block(g))
    plan.pre_moves = run.steps[n0:]
    cols = vert[::-1] if side == "right" else vert
    n1 = len(run.steps)
    for s in cols:
        run.flip((t, u, s))
    plan.slides = run.steps[n1:]
    return plan


def track_exchange(g: IsoradialGraph, t, u, config: Configuration | None = None,
                   rng: np.random.Generator | None = None, q: float | None = None):
    """Exchange two adjacent horizontal block tracks.

    Returns ``(graph, config, records, plan)``. Without a configuration only
    the graph is transformed and ``records`` is empty.
    """
    run = Runner(g, config, rng, q)
    plan = _exchange(run, g.track_id(t), g.track_id(u))
    return run.g, run.config, run.records, plan


def _canonicalize(run: Runner, upper_only=None) -> None:
    """Rearrange each convexification into the form produced by ``convexify``
    for the current block order (lowest inverted pair first)."""
    g = run.g
    vert = _block_tracks(g)
    forbidden = _forbid_block(g)
    order = horizontal_order(g)
    for side, near in (("right", vert[-1]), ("left", vert[0])):
        front = list(order)
        bound = {t: near for t in front}
        sign = 1.0 if side == "right" else -1.0
        segs = _segments(g, front)
        while True:
            pair = None
            for lo, hi in segs:
                for j in range(lo, hi - 1):
                    a, b = front[j], front[j + 1]
                    d = sign * (math.cos(run.g.track_angle[b]) - math.cos(run.g.track_angle[a]))
                    if d > 1e-12:
                        pair = j
                        break
                if pair is not None:
                    break
            if pair is None:
                break
            a, b = front[pair], front[pair + 1]
            if run.g.crossing(a, b) < 0 or _side_of(run.g, a, b) != side:
                raise LatticeError("inverted pair does not cross on the expected side")
            clear_region(run, [Side(a, bound[a], b), Side(b, bound[b], a)], [(a, b)], forbidden)
            bound[a], bound[b] = b, a
            front[pair], front[pair + 1] = b, a


def _segments(g, front) -> list:
    """Index ranges of the frontier convexified independently."""
    if not g.meta.get("symmetric"):
        return [(0, len(front))]
    upper = {g.track_id(lab) for lab in g.meta["upper"]}
    k = next(i for i, t in enumerate(front) if t in upper)
    return [(0, k), (k, len(front))]


def _mixture_rows(g: IsoradialGraph):
    N1, N2 = g.meta["N1"], g.meta["N2"]
    up = [g.track_id(lab) for lab in g.meta["upper"]]
    if len(up) != N1 + N2 + 2:
        raise LatticeError("malformed mixture metadata")
    return up, N1, N2


def _sigma(gmix, config, rng, q, direction):
    if gmix.meta.get("kind") != "mixed":
        raise LatticeError("sigma sequences need a graph from build_mixed")
    up, N1, N2 = _mixture_rows(gmix)
    run = Runner(gmix, config, rng, q)
    plans = []
    if direction == "down":
        for k in range(N1 + 1, N1 + N2 + 2):
            for m in range(N1, -1, -1):
                plans.append(_exchange(run, up[m], up[k]))
    else:
        for k in range(N1, -1, -1):
            for m in range(N1 + 1, N1 + N2 + 2):
                plans.append(_exchange(run, up[k], up[m]))
    n0 = len(run.steps)
    _canonicalize(run)
    tail = run.steps[n0:]
    return run, plans, tail


def sigma_down(gmix, config=None, rng=None, q=None):
    """Move the upper block to the bottom; returns (graph, config, records, steps)."""
    run, _, _ = _sigma(gmix, config, rng, q, "down")
    return run.g, run.config, run.records, run.steps


def sigma_up(gmix, config=None, rng=None, q=None):
    """Move the lower block to the top; returns (graph, config, records, steps)."""
    run, _, _ = _sigma(gmix, config, rng, q, "up")
    return run.g, run.config, run.records, run.steps
