import itertools
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isorc import events as ev
from isorc import lattice as lat
from isorc.events import DomainSpec, EventSpec


def square(W, H, i0=0, j0=0):
    return lat.build_square_lattice(lat.AngleSequences.regular(W, H, i0, j0))


def bfs_labels(n, pairs):
    adj = [[] for _ in range(n)]
    for u, v in pairs:
        adj[u].append(v)
        adj[v].append(u)
    lab = [-1] * n
    c = 0
    for s in range(n):
        if lab[s] >= 0:
            continue
        lab[s] = c
        dq = deque([s])
        while dq:
            x = dq.popleft()
            for y in adj[x]:
                if lab[y] < 0:
                    lab[y] = c
                    dq.append(y)
        c += 1
    return lab


def oracle_crossing(g, state, dom, direction, color):
    """Open path of ``color`` through the domain squares, using (i, j) labels."""
    ij = g.meta["ij"]
    rh = ev.domain_rhombi(g, dom)
    ends = g.edge_endpoints if color == "primal" else g.dual_endpoints
    want = 1 if color == "primal" else 0
    pairs = [tuple(map(int, ends[r])) for r in rh if state[r] == want]
    lab = bfs_labels(g.n_vertices, pairs)
    corners = {int(v) for r in rh for v in g.rhombi[r]}
    par = g.primal if color == "primal" else ~g.primal
    corners = [v for v in corners if par[v]]
    if direction == "horizontal":
        a = [v for v in corners if ij[v][0] <= dom.i]
        b = [v for v in corners if ij[v][0] >= dom.j + 1]
    else:
        a = [v for v in corners if ij[v][1] <= dom.k]
        b = [v for v in corners if ij[v][1] >= dom.l + 1]
    return bool({lab[v] for v in a} & {lab[v] for v in b})


def all_states(m):
    idx = np.arange(1 << m)
    return ((idx[:, None] >> np.arange(m)) & 1).astype(np.uint8)


def test_all_open_all_closed():
    g = square(4, 4)
    dom = DomainSpec(0, 3, 0, 3)
    for d in ("horizontal", "vertical"):
        assert ev.crossing(g, np.ones(g.n_rhombi), dom, d)
        assert not ev.crossing(g, np.zeros(g.n_rhombi), dom, d)
        assert ev.crossing(g, np.zeros(g.n_rhombi), dom, d, "dual")
        assert not ev.crossing(g, np.ones(g.n_rhombi), dom, d, "dual")


@pytest.mark.parametrize("w,h", [(2, 3), (3, 2)])
def test_duality_exhaustive(w, h):
    g = square(w, h)
    dom = DomainSpec(0, w - 1, 0, h - 1)
    states = all_states(g.n_rhombi)
    hor = ev.CrossingDetector(g, dom, "horizontal", "primal")(states)
    ver = ev.CrossingDetector(g, dom, "vertical", "dual")(states)
    assert np.all(hor ^ ver)
    assert 0 < hor.sum() < len(states)


def test_detector_matches_bfs_oracle():
    g = square(6, 5, -2, -1)
    rng = np.random.default_rng(3)
    dom = DomainSpec(-2, 2, -1, 2)
    states = rng.integers(0, 2, (300, g.n_rhombi)).astype(np.uint8)
    for d in ("horizontal", "vertical"):
        for color in ("primal", "dual"):
            fast = ev.CrossingDetector(g, dom, d, color)(states)
            for s, f in zip(states, fast):
                want = oracle_crossing(g, s, dom, d, color)
                assert f == want == ev.crossing(g, s, dom, d, color)


def _shortest_open_path(g, dom):
    """Edges of a shortest primal left-to-right path inside the domain."""
    ij = g.meta["ij"]
    rh = ev.domain_rhombi(g, dom)
    ee = g.edge_endpoints
    adj = {}
    for r in rh:
        u, v = map(int, ee[r])
        adj.setdefault(u, []).append((v, r))
        adj.setdefault(v, []).append((u, r))
    starts = [v for v in adj if ij[v][0] <= dom.i]
    prev = {v: None for v in starts}
    dq = deque(starts)
    while dq:
        x = dq.popleft()
        if ij[x][0] >= dom.j + 1:
            path = []
            while prev[x] is not None:
                x, r = prev[x]
                path.append(r)
            return path
        for y, r in adj[x]:
            if y not in prev:
                prev[y] = (x, r)
                dq.append(y)
    raise AssertionError("no path")


def test_staircase_path():
    g = square(6, 6)
    dom = DomainSpec(0, 5, 0, 5)
    path = _shortest_open_path(g, dom)
    assert len(path) == 6
    state = np.zeros(g.n_rhombi, np.uint8)
    state[path] = 1
    assert ev.crossing(g, state, dom)
    for r in path:
        cut = state.copy()
        cut[r] = 0
        assert not ev.crossing(g, cut, dom)


@settings(max_examples=40)
@given(st.integers(0, 2**31 - 1))
def test_crossing_monotone(seed):
    g = square(5, 5)
    dom = DomainSpec(0, 4, 0, 4)
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 2, g.n_rhombi).astype(np.uint8)
    t = s | rng.integers(0, 2, g.n_rhombi).astype(np.uint8)
    for d in ("horizontal", "vertical"):
        assert ev.crossing(g, s, dom, d) <= ev.crossing(g, t, dom, d)
        assert ev.crossing(g, s, dom, d, "dual") >= ev.crossing(g, t, dom, d, "dual")


def test_domain_errors():
    g = square(3, 3)
    with pytest.raises(ValueError):
        DomainSpec(2, 1, 0, 0)
    with pytest.raises(lat.LatticeError):
        ev.crossing(g, np.zeros(g.n_rhombi), DomainSpec(10, 12, 0, 1))
    with pytest.raises(ValueError):
        EventSpec("nope")
    with pytest.raises(ValueError):
        EventSpec("arm", params={"k": 2, "n": 3, "N": 2})


# -- circuits -------------------------------------------------------------


def valid_cycles(g, m1, m2, n, color):
    """Bitmasks (over domain rhombi) of every simple cycle of the slit graph
    surrounding the segment [x_{-m1,0}, x_{m1,0}].

    Base vertices strictly inside the segment are cut in two: an edge meets
    the upper copy if its other end lies above the base, the lower one
    otherwise.
    """
    ij = g.meta["ij"]
    rh = list(ev.domain_rhombi(g, DomainSpec(-m2, m2, -n, n)))
    ends = g.edge_endpoints if color == "primal" else g.dual_endpoints
    pos = g.pos

    def node(v, w):
        i, j = ij[v]
        if j == 0 and -m1 < i < m1:
            return (int(v), bool(pos[w][1] > pos[v][1]))
        return (int(v), None)

    edges = []
    for r in rh:
        u, v = map(int, ends[r])
        edges.append((node(u, v), node(v, u)))
    out = []
    for mask in range(1, 1 << len(rh)):
        sel = [edges[k] for k in range(len(rh)) if mask >> k & 1]
        if len(sel) < 4:
            continue
        deg = {}
        for u, v in sel:
            deg[u] = deg.get(u, 0) + 1
            deg[v] = deg.get(v, 0) + 1
        if any(d != 2 for d in deg.values()):
            continue
        nbr = {u: [] for u in deg}
        for u, v in sel:
            nbr[u].append(v)
            nbr[v].append(u)
        start = sel[0][0]
        order, prev, cur = [start], None, start
        while True:
            nxt = nbr[cur][0] if nbr[cur][0] != prev else nbr[cur][1]
            if nxt == start:
                break
            order.append(nxt)
            prev, cur = cur, nxt
        if len(order) != len(deg):
            continue
        # winding number around a point of the segment
        px, py = 0.5, 0.0
        wind = 0.0
        for a, b in zip(order, order[1:] + order[:1]):
            ax, ay = pos[a[0]] - (px, py)
            bx, by = pos[b[0]] - (px, py)
            wind += np.arctan2(ax * by - ay * bx, ax * bx + ay * by)
        if abs(wind) > 1:
            out.append(mask)
    return rh, out


@pytest.mark.parametrize("m1,m2,n,color", [(1, 1, 1, "dual"), (1, 2, 1, "primal"),
                                           (1, 2, 1, "dual"), (2, 2, 1, "primal")])
def test_circuit_matches_cycle_oracle(m1, m2, n, color):
    g = square(2 * m2 + 3, 2 * n + 3, -m2 - 1, -n - 1)
    rh, cycles = valid_cycles(g, m1, m2, n, color)
    assert cycles
    states = all_states(len(rh))
    masks = (states * (1 << np.arange(len(rh)))).sum(axis=1)
    if color == "dual":
        masks = ((1 << len(rh)) - 1) ^ masks
    cyc = np.array(cycles)
    want = ((masks[:, None] & cyc[None, :]) == cyc[None, :]).any(axis=1)
    full = np.zeros(g.n_rhombi, np.uint8)
    got = np.empty(len(states), bool)
    for k, s in enumerate(states):
        full[rh] = s
        got[k] = ev.circuit(g, full, m1, m2, n, color)
    assert np.array_equal(got, want)


def open_path(g, pts):
    """State with exactly the primal edges along the closed vertex path ``pts`` open."""
    ee = g.edge_endpoints
    lookup = {frozenset((int(u), int(v))): r for r, (u, v) in enumerate(ee)}
    state = np.zeros(g.n_rhombi, np.uint8)
    vs = [lat.vertex_at(g, i, j) for i, j in pts]
    for u, v in zip(vs, vs[1:] + vs[:1]):
        state[lookup[frozenset((u, v))]] = 1
    return state


def test_circuit_all_open_and_touching_fixture():
    g = square(9, 7, -4, -3)
    assert ev.circuit(g, np.ones(g.n_rhombi), 1, 3, 2)
    assert not ev.circuit(g, np.zeros(g.n_rhombi), 1, 3, 2)
    # touches the base ray at x_{2,0} from above, crosses it at x_{4,0}
    loop = [(-2, 0), (-1, 1), (0, 2), (1, 1), (2, 0), (3, 1), (4, 0),
            (3, -1), (2, -2), (1, -1), (0, -2), (-1, -1)]
    assert ev.circuit(g, open_path(g, loop), 1, 3, 2)
    # the same loop pinched onto the segment at x_{0,0} from above and below
    pinched = [(-2, 0), (-1, 1), (0, 0), (1, 1), (2, 0), (3, 1), (4, 0),
               (3, -1), (2, -2), (1, -1), (0, 0), (-1, -1)]
    assert ev.circuit(g, open_path(g, pinched), 1, 3, 2)
    # passing through x_{0,0} from above to below leaves part of the segment outside
    through = [(-1, 1), (0, 0), (1, -1), (2, -2), (3, -1), (4, 0),
               (3, 1), (2, 2), (1, 1), (0, 2)]
    assert not ev.circuit(g, open_path(g, through), 1, 3, 2)


def test_circuit_argument_checks():
    g = square(5, 5, -2, -2)
    with pytest.raises(ValueError):
        ev.circuit(g, np.ones(g.n_rhombi), 0, 2, 1)
    with pytest.raises(ValueError):
        ev.circuit(g, np.ones(g.n_rhombi), 3, 2, 1)


# -- radius ---------------------------------------------------------------


def test_radius_basics():
    g = square(10, 10, -5, -5)
    zero, one = np.zeros(g.n_rhombi), np.ones(g.n_rhombi)
    assert ev.radius(g, zero, 0)
    for n in range(1, 5):
        assert not ev.radius(g, zero, n)
        assert ev.radius(g, one, n)
        assert ev.radius(g, one, n, "euclidean")


def test_radius_tracks_implies_euclidean():
    g = square(12, 12, -6, -6)
    rng = np.random.default_rng(11)
    hits = 0
    for _ in range(300):
        s = (rng.random(g.n_rhombi) < 0.55).astype(np.uint8)
        for n in (1, 2, 3, 4):
            if ev.radius(g, s, n):
                hits += 1
                assert ev.radius(g, s, n, "euclidean")
    assert hits > 50


def test_radius_monotone_in_n():
    g = square(12, 12, -6, -6)
    rng = np.random.default_rng(2)
    for _ in range(100):
        s = rng.integers(0, 2, g.n_rhombi)
        vals = [ev.radius(g, s, n) for n in range(0, 6)]
        assert vals == sorted(vals, reverse=True)


# -- arms -----------------------------------------------------------------


def oracle_clusters(g, state, n, N, color):
    """Clusters of the annulus n <= |v|_inf <= N meeting both |v|_inf = n and = N."""
    r = np.abs(g.pos).max(axis=1)
    ends = g.edge_endpoints if color == "primal" else g.dual_endpoints
    want = 1 if color == "primal" else 0
    inside = [n - 1e-9 <= x <= N + 1e-9 for x in r]
    pairs = [(int(u), int(v)) for e, (u, v) in enumerate(ends)
             if state[e] == want and inside[u] and inside[v]]
    lab = bfs_labels(g.n_vertices, pairs)
    par = g.primal if color == "primal" else ~g.primal
    inner = {lab[v] for v in range(g.n_vertices) if par[v] and g.used[v] and abs(r[v] - n) < 1e-9}
    outer = {lab[v] for v in range(g.n_vertices) if par[v] and g.used[v] and abs(r[v] - N) < 1e-9}
    return len(inner & outer)


def test_arm_counts_match_oracle():
    g = square(16, 16, -8, -8)
    rng = np.random.default_rng(4)
    n, N = 2, 6
    multi = 0
    for _ in range(1000):
        s = rng.integers(0, 2, g.n_rhombi).astype(np.uint8)
        P = ev.crossing_clusters(g, s, n, N, "primal")
        D = ev.crossing_clusters(g, s, n, N, "dual")
        assert P == oracle_clusters(g, s, n, N, "primal")
        assert D == oracle_clusters(g, s, n, N, "dual")
        multi += P >= 2 and D >= 2
        assert ev.arm_event(g, s, 1, n, N) == (P >= 1)
        assert ev.arm_event(g, s, 2, n, N) == (P >= 1 and D >= 1)
        assert ev.arm_event(g, s, 4, n, N) == (P >= 2 and D >= 2)
    assert multi > 20


def test_arm_simple_cases():
    g = square(12, 12, -6, -6)
    one = np.ones(g.n_rhombi)
    assert ev.arm_event(g, one, 1, 1, 4)
    assert not ev.arm_event(g, one, 4, 1, 4)
    assert not ev.arm_event(g, one, 2, 1, 4)
    with pytest.raises(ValueError):
        ev.arm_event(g, one, 3, 1, 4)
    with pytest.raises(lat.LatticeError):
        ev.crossing_clusters(g, one, 1, 8, "primal")


def test_base_arm_nesting():
    g = square(16, 8, -8, 0)
    rng = np.random.default_rng(9)
    counts = {}
    for _ in range(400):
        s = (rng.random(g.n_rhombi) < 0.5).astype(np.uint8)
        # with j >= 2 the event only counts primal clusters, so it nests in k;
        # the k=2 event also needs a dual base-to-base cluster and is not implied
        vals = [ev.arm_event(g, s, k, 1, 5, "base_anchored") for k in (1, 4, 6)]
        for a, b in zip(vals, vals[1:]):
            assert a or not b
        key = sum(vals)
        counts[key] = counts.get(key, 0) + 1
    assert counts.get(0) and counts.get(1) and counts.get(2)


def test_event_spec_dispatch():
    g = square(8, 8, -4, -4)
    s = np.random.default_rng(0).integers(0, 2, g.n_rhombi)
    dom = DomainSpec(-2, 2, -2, 2)
    assert EventSpec("horizontal", dom).evaluate(g, s) == ev.crossing(g, s, dom)
    assert EventSpec("vertical", dom, color="dual").evaluate(g, s) == \
        ev.crossing(g, s, dom, "vertical", "dual")
    assert EventSpec("radius", params={"n": 2}).evaluate(g, s) == ev.radius(g, s, 2)
    assert EventSpec("circuit", params={"m1": 1, "m2": 2, "n": 2}).evaluate(g, s) == \
        ev.circuit(g, s, 1, 2, 2)
    assert EventSpec("arm", params={"k": 2, "n": 1, "N": 3}).evaluate(g, s) == \
        ev.arm_event(g, s, 2, 1, 3)
