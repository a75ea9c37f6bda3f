import math
from collections import deque

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import stats

from isorc import quantum as qm
from isorc import rcm
from isorc import weights as wt
from isorc.quantum import ContinuumConfig, QuantumParams, Region


def interval_oracle(cc):
    """Cluster count by flooding a point sample of every column."""
    w, h = cc.region.width, cc.region.height
    cuts = [set(map(float, c)) for c in cc.cuts]
    hs = {0.0, float(h)}
    for arr in list(cc.cuts) + list(cc.bridges):
        hs.update(map(float, arr))
    hs = sorted(hs)
    pts = sorted(set(hs) | {(a + b) / 2 for a, b in zip(hs, hs[1:])})
    nodes = [(c, y) for c in range(w) for y in pts if y not in cuts[c]]
    index = {nd: i for i, nd in enumerate(nodes)}
    adj = [[] for _ in nodes]
    for c in range(w):
        col = [y for y in pts if y not in cuts[c]]
        for a, b in zip(col, col[1:]):
            if not any(a < x < b for x in cuts[c]):
                adj[index[(c, a)]].append(index[(c, b)])
                adj[index[(c, b)]].append(index[(c, a)])
    for k, br in enumerate(cc.bridges):
        for y in map(float, br):
            if (k, y) in index and (k + 1, y) in index:
                adj[index[(k, y)]].append(index[(k + 1, y)])
                adj[index[(k + 1, y)]].append(index[(k, y)])
    seen, comps = [False] * len(nodes), 0
    for s in range(len(nodes)):
        if seen[s]:
            continue
        comps += 1
        seen[s] = True
        dq = deque([s])
        while dq:
            x = dq.popleft()
            for y in adj[x]:
                if not seen[y]:
                    seen[y] = True
                    dq.append(y)
    return comps


def test_cluster_basics():
    reg = Region(4, 1.0)
    empty = ContinuumConfig(reg, [[]] * 4, [[]] * 3)
    assert qm.continuum_clusters(empty).count == 4
    one = ContinuumConfig(reg, [[]] * 4, [[0.5], [], []])
    cl = qm.continuum_clusters(one)
    assert cl.count == 3
    assert cl.connected((0, 0.1), (1, 0.9))
    assert not cl.connected((1, 0.1), (2, 0.1))
    # a cut between two bridges on column 1 separates them
    cfg = ContinuumConfig(reg, [[], [0.5], [], []], [[0.2], [0.8], []])
    cl = qm.continuum_clusters(cfg)
    assert cl.count == 3
    assert cl.connected((0, 0.0), (1, 0.3)) and cl.connected((1, 0.6), (2, 0.0))
    assert not cl.connected((0, 0.0), (2, 0.0))
    assert cl.touches_bottom(0, 1.0) and cl.touches_top(2, 0.1)
    lone = qm.continuum_clusters(ContinuumConfig(Region(1, 1.0), [[0.3, 0.6]], []))
    assert lone.count == 3
    assert not lone.touches_bottom(0, 0.5) and not lone.touches_top(0, 0.5)
    assert lone.touches_bottom(0, 0.1) and lone.touches_top(0, 0.9)


@settings(max_examples=100)
@given(st.integers(1, 4), st.data())
def test_clusters_match_interval_oracle(w, data):
    h = 1.0
    heights = st.lists(st.floats(0.001, 0.999, allow_nan=False), max_size=4, unique=True)
    cuts = [data.draw(heights) for _ in range(w)]
    brs = [data.draw(heights) for _ in range(w - 1)]
    # a bridge landing exactly on a cut is a null event; keep heights distinct
    flat = [x for arr in cuts + brs for x in arr]
    assume(len(flat) == len(set(flat)))
    cc = ContinuumConfig(Region(w, h), cuts, brs)
    assert qm.continuum_clusters(cc).count == interval_oracle(cc)


def test_region_and_config_validation():
    with pytest.raises(ValueError):
        Region(0, 1.0)
    with pytest.raises(ValueError):
        ContinuumConfig(Region(2, 1.0), [[2.0], []], [[]])
    with pytest.raises(ValueError):
        ContinuumConfig(Region(2, 1.0), [[]], [[]])
    with pytest.raises(ValueError):
        QuantumParams(0.0, 1.0, 2.0)


def test_json_round_trip():
    rng = np.random.default_rng(0)
    cc = qm.sample_quantum(QuantumParams(1.0, 1.0, 1.0), Region(3, 2.0), "free_poisson", rng)
    back = ContinuumConfig.from_json(cc.to_json())
    assert all(np.array_equal(a, b) for a, b in zip(cc.cuts, back.cuts))
    assert all(np.array_equal(a, b) for a, b in zip(cc.bridges, back.bridges))
    cd = qm.sample_quantum(QuantumParams.critical(2.0), Region(3, 1.0), "discretized", rng,
                           eps=0.2, sweeps=5)
    back = ContinuumConfig.from_json(cd.to_json())
    assert back.to_json() == cd.to_json()
    assert all(np.array_equal(a, b) for a, b in zip(cd.cuts, back.cuts))


def lattice_labels(spec, state):
    g = spec.graph
    roles = qm.edge_roles(spec)
    parent = list(range(g.n_vertices))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e, (row, kind, _, _) in enumerate(roles):
        if kind != "outside" and state[e]:
            u, v = g.edge_endpoints[e]
            parent[find(int(u))] = find(int(v))
    return find


@pytest.mark.parametrize("w", [1, 2, 3])
def test_lattice_to_continuum_connectivity(w):
    spec = qm.build_geps(0.3, Region(w, 1.2))
    g = spec.graph
    ij = g.meta["ij"]
    rng = np.random.default_rng(w)
    verts = []
    for v in np.flatnonzero(g.primal & g.used):
        col, hgt = qm.vertex_point(spec, v)
        if 0 <= col < w and 0 <= ij[v, 1] <= spec.rows:
            verts.append((int(v), col, hgt))
    assert len(verts) == w * (spec.rows + 1)
    for _ in range(100):
        state = (rng.random(g.n_rhombi) < rng.uniform(0.2, 0.8)).astype(np.uint8)
        find = lattice_labels(spec, state)
        cl = qm.continuum_clusters(qm.to_continuum(spec, state))
        for a in range(len(verts)):
            for b in range(a + 1, len(verts)):
                va, ca, ha = verts[a]
                vb, cb, hb = verts[b]
                assert (find(va) == find(vb)) == cl.connected((ca, ha), (cb, hb))


def test_geps_geometry():
    spec = qm.build_geps(math.pi / 2, Region(3, 2.0))
    g = spec.graph
    assert np.allclose(g.theta, math.pi / 2)
    ee = g.edge_endpoints
    assert np.allclose(np.linalg.norm(g.pos[ee[:, 0]] - g.pos[ee[:, 1]], axis=1), math.sqrt(2))
    assert spec.short_length == pytest.approx(spec.long_length)
    with pytest.raises(ValueError):
        qm.build_geps(2.0, Region(2, 1.0))


def test_row_counts_by_convention():
    reg = Region(2, 1.0)
    a = qm.build_geps(0.1, reg, "rescaled")
    b = qm.build_geps(0.1, reg, "dilated")
    assert a.rows == 20 and b.rows == 10
    ra, rd = QuantumParams.critical(2.0, "rescaled"), QuantumParams.critical(2.0, "dilated")
    assert ra.lam == pytest.approx(2 * rd.lam) and ra.mu == pytest.approx(2 * rd.mu)
    assert ra.is_critical and rd.is_critical
    with pytest.raises(ValueError):
        qm.build_geps(0.1, reg, "stretched")


def _edge_probs(spec, q, beta=1.0):
    ms = rcm.MeasureSpec.for_graph(spec.graph, wt.ModelParams(q, beta))
    p = ms.y / (1 + ms.y)
    roles = qm.edge_roles(spec)
    cut = [p[e] for e, r in enumerate(roles) if r[1] == "cut"]
    br = [p[e] for e, r in enumerate(roles) if r[1] == "bridge"]
    return np.array(cut), np.array(br)


def test_small_angle_probabilities():
    rates = wt.quantum_rates(2.0)
    cut, _ = _edge_probs(qm.build_geps(0.1, Region(2, 0.5)), 2.0)
    assert np.allclose(cut, cut[0])
    assert (1 - cut[0]) / (rates.lambda0 * 0.1) == pytest.approx(1, rel=0.1)
    _, br = _edge_probs(qm.build_geps(0.05, Region(2, 0.5)), 2.0)
    assert br[0] / (rates.mu0 * 0.05) == pytest.approx(1, rel=0.1)


def test_off_critical_discretisation_rates():
    params = QuantumParams(0.4, 1.5, 2.0)
    assert not params.is_critical
    spec = qm.discretization_for(params, Region(2, 1.0), 0.01)
    cut, br = _edge_probs(spec, params.q, spec.beta)
    assert (1 - cut[0]) / spec.row_height == pytest.approx(params.lam, rel=0.05)
    assert br[0] / spec.row_height == pytest.approx(params.mu, rel=0.05)


def test_zero_height_and_bad_methods():
    rng = np.random.default_rng(0)
    cc = qm.sample_quantum(QuantumParams.critical(2.0), Region(3, 0.0), "discretized", rng)
    assert cc.cut_counts().sum() == 0 and all(len(b) == 0 for b in cc.bridges)
    with pytest.raises(ValueError):
        qm.sample_quantum(QuantumParams.critical(2.0), Region(2, 1.0), "free_poisson", rng)
    with pytest.raises(ValueError):
        qm.sample_quantum(QuantumParams.critical(1.0), Region(2, 1.0), "exact", rng)


def _poisson_chi2(counts, mean):
    kmax = max(int(counts.max()), int(mean + 6 * math.sqrt(mean) + 2))
    obs = np.bincount(counts, minlength=kmax + 1).astype(float)
    exp = stats.poisson.pmf(np.arange(kmax + 1), mean)
    exp[-1] += stats.poisson.sf(kmax, mean)
    # merge sparse cells
    o, e, acc_o, acc_e = [], [], 0.0, 0.0
    for a, b in zip(obs, exp * len(counts)):
        acc_o += a
        acc_e += b
        if acc_e >= 5:
            o.append(acc_o)
            e.append(acc_e)
            acc_o = acc_e = 0.0
    o[-1] += acc_o
    e[-1] += acc_e
    return stats.chisquare(o, e).pvalue


@pytest.mark.parametrize("method", ["free_poisson", "discretized"])
def test_q1_cut_counts_are_poisson(method):
    params = QuantumParams.critical(1.0)
    reg = Region(2, 3.0)
    rng = np.random.default_rng(17)
    counts = np.array([qm.sample_quantum(params, reg, method, rng, eps=0.02, sweeps=1)
                       .cut_counts()[0] for _ in range(1000)])
    assert _poisson_chi2(counts, params.lam * reg.height) > 0.001


def test_binomial_poisson_single_edge_exact():
    q, eps = 2.0, 1.0
    p = wt.quantum_rates(q).lambda0 * eps
    e = math.exp(-p)
    want = 0.5 * (abs((1 - p) - e) + abs(p - p * e) + (1 - e - p * e))
    assert qm.binomial_poisson_tv(eps, eps, q) == pytest.approx(want, abs=1e-15)


def test_poisson_limit():
    tv, hist = qm.poisson_limit_check(0.05, 4.0, 2.0, 100_000, np.random.default_rng(0))
    assert tv < 0.05 and hist.sum() == 100_000
    exact = qm.binomial_poisson_tv(0.05, 4.0, 2.0)
    lam0 = wt.quantum_rates(2.0).lambda0
    assert exact <= 0.5 * lam0 ** 2 * 4.0 * 0.05 + 1e-12
    with pytest.raises(ValueError):
        qm.poisson_limit_check(5.0, 10.0, 2.0, 10)
    with pytest.raises(ValueError):
        qm.binomial_poisson_tv(5.0, 10.0, 2.0)


def test_strip_law_is_a_distribution_and_self_converges():
    law = qm.strip_cut_law(0.1, 1.0, 2.0)
    assert law.sum() == pytest.approx(1, abs=1e-12) and (law >= 0).all()
    tvs = qm.self_convergence([0.2, 0.1, 0.05], 1.0, 2.0)
    assert tvs[0] > tvs[1] > tvs[2]


def test_strip_law_at_q1_is_binomial():
    spec = qm.build_geps(0.1, Region(2, 1.0))
    cut, _ = _edge_probs(spec, 1.0)
    law = qm.strip_cut_law(0.1, 1.0, 1.0)
    ref = stats.binom.pmf(np.arange(len(law)), len(law) - 1, 1 - cut[0])
    assert np.allclose(law, ref, atol=1e-12)
