import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isorc.lattice import AngleSequences, build_square_lattice
from isorc.rcm import (BoundaryCondition, Configuration, HeatBathChain, MeasureSpec, PrimalGraph,
                       cluster_count, config_weight, dual_config, exact_count_law,
                       exact_distribution, sample_heat_bath)
from isorc.weights import ModelParams

S3 = math.sqrt(3)


def brute_law(n, edges, y, q, blocks=()):
    """Reference law by direct enumeration with a hand-rolled union-find."""
    m = len(edges)
    w = np.zeros(1 << m)
    for idx in range(1 << m):
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        for blk in blocks:
            for v in blk[1:]:
                parent[find(v)] = find(blk[0])
        wt = 1.0
        for e, (u, v) in enumerate(edges):
            if idx >> e & 1:
                wt *= y[e]
                parent[find(u)] = find(v)
        k = len({find(x) for x in range(n)})
        w[idx] = wt * q ** k
    return w / w.sum(), w.sum()


def triangle():
    return PrimalGraph.from_edges(3, np.array([[1, 2], [2, 0], [0, 1]]))


def test_cluster_count_basics():
    g = PrimalGraph.from_edges(2, np.array([[0, 1]]))
    assert cluster_count(g, Configuration(np.array([1], np.uint8))) == 1
    assert cluster_count(g, Configuration(np.array([0], np.uint8))) == 2
    t = triangle()
    empty = Configuration(np.zeros(3, np.uint8))
    assert cluster_count(t, empty) == 3
    assert cluster_count(t, empty, BoundaryCondition.wired()) == 1


def test_config_weight_single_edge():
    g = PrimalGraph.from_edges(2, np.array([[0, 1]]))
    spec = MeasureSpec(ModelParams(3.0), BoundaryCondition.free(), [0.7])
    assert config_weight(g, Configuration(np.array([1], np.uint8)), spec) == pytest.approx(
        math.log(3) + math.log(0.7))
    assert config_weight(g, Configuration(np.array([0], np.uint8)), spec) == pytest.approx(2 * math.log(3))
    law = exact_distribution(g, spec)
    assert law.probs[1] == pytest.approx(0.7 / (0.7 + 3), abs=1e-14)


def test_triangle_free_example():
    y = S3 - 1
    law = exact_distribution(triangle(), MeasureSpec(ModelParams(2.0), BoundaryCondition.free(), [y] * 3))
    assert law.probs[0] == pytest.approx(4 / (4 + 6 * y + 2), abs=1e-12)
    assert law.probs[0] == pytest.approx(0.38490, abs=1e-5)


def test_triangle_wired_rows():
    y = np.array([0.4, 0.9, 1.3])
    law = exact_distribution(triangle(), MeasureSpec(ModelParams(2.0), BoundaryCondition.wired(), y))
    pl = law.pattern_law([0, 1, 2])
    ya, yb, yc = y
    rows = [1, yc, ya, yb, ya * yb + yb * yc + yc * ya + ya * yb * yc]
    z = sum(rows)
    assert pl[(0, 1, 2)] == pytest.approx(rows[0] / z, abs=1e-12)
    assert pl[(0, 0, 1)] == pytest.approx(rows[1] / z, abs=1e-12)
    assert pl[(0, 1, 1)] == pytest.approx(rows[2] / z, abs=1e-12)
    assert pl[(0, 1, 0)] == pytest.approx(rows[3] / z, abs=1e-12)
    assert pl[(0, 0, 0)] == pytest.approx(rows[4] / z, abs=1e-12)


@st.composite
def small_graphs(draw):
    n = draw(st.integers(2, 6))
    pairs = list(itertools.combinations(range(n), 2))
    edges = draw(st.lists(st.sampled_from(pairs), min_size=1, max_size=8))
    y = draw(st.lists(st.floats(0.1, 4.0), min_size=len(edges), max_size=len(edges)))
    q = draw(st.floats(1.0, 6.0))
    bc = draw(st.sampled_from(["free", "wired", "partition"]))
    return n, edges, y, q, bc


@given(small_graphs())
def test_exact_law_matches_enumeration(case):
    n, edges, y, q, bc = case
    bnd = np.arange(n)
    if bc == "free":
        b, blocks = BoundaryCondition.free(), ()
    elif bc == "wired":
        b, blocks = BoundaryCondition.wired(), (list(range(n)),)
    else:
        blocks = ([0, n - 1], [1]) if n > 2 else ([0, 1],)
        b = BoundaryCondition.partition(blocks)
        bnd = np.array(sorted(v for blk in blocks for v in blk))
    g = PrimalGraph.from_edges(n, np.array(edges), bnd)
    law = exact_distribution(g, MeasureSpec(ModelParams(q), b, y))
    ref, z = brute_law(n, edges, y, q, blocks)
    assert np.allclose(law.probs, ref, atol=1e-12)
    assert law.log_z == pytest.approx(math.log(z), rel=1e-10)
    assert law.probs.sum() == pytest.approx(1, abs=1e-12)
    m = law.marginals()
    assert np.all((m > 0) & (m < 1))


@given(small_graphs(), st.booleans())
def test_count_law_matches_enumeration(case, closed):
    n, edges, y, q, _ = case
    g = PrimalGraph.from_edges(n, np.array(edges))
    spec = MeasureSpec(ModelParams(q), BoundaryCondition.free(), y)
    marked = list(range(0, len(edges), 2))
    law = exact_count_law(g, spec, marked, closed=closed)
    ref, _ = brute_law(n, edges, y, q)
    counts = np.zeros(len(marked) + 1)
    for idx, p in enumerate(ref):
        k = sum((idx >> e & 1) == (0 if closed else 1) for e in marked)
        counts[k] += p
    assert np.allclose(law[:len(counts)], counts, atol=1e-12)


def test_cap_enforced():
    g = build_square_lattice(AngleSequences.regular(5, 5))
    with pytest.raises(ValueError):
        exact_distribution(g, MeasureSpec.for_graph(g, ModelParams(2.0)))


def _update_kernel(n, edges, y, q, e):
    """Heat-bath single-edge kernel as a dense matrix (reference rule)."""
    m = len(edges)
    p = y[e] / (1 + y[e])
    K = np.zeros((1 << m, 1 << m))
    for idx in range(1 << m):
        others = [edges[f] for f in range(m) if f != e and idx >> f & 1]
        u, v = edges[e]
        seen, stack = {u}, [u]
        while stack:
            x = stack.pop()
            for a, b in others:
                for s, t in ((a, b), (b, a)):
                    if s == x and t not in seen:
                        seen.add(t)
                        stack.append(t)
        po = p if v in seen else p / (p + q * (1 - p))
        K[idx, idx | 1 << e] += po
        K[idx, idx & ~(1 << e)] += 1 - po
    return K


@pytest.mark.parametrize("edges", [[(0, 1)], [(0, 1), (1, 2)], [(0, 1), (0, 1)]])
def test_detailed_balance(edges):
    n, q = 3, 2.5
    y = [0.8, 1.7][:len(edges)]
    pi, _ = brute_law(n, edges, y, q)
    for e in range(len(edges)):
        K = _update_kernel(n, edges, y, q, e)
        flow = pi[:, None] * K
        assert np.allclose(flow, flow.T, atol=1e-12)


def test_q1_is_bernoulli():
    g = build_square_lattice(AngleSequences.regular(4, 4))
    spec = MeasureSpec.for_graph(g, ModelParams(1.0))
    chain = HeatBathChain(g, spec, np.random.default_rng(0))
    draws = chain.record(20000)
    assert abs(draws.mean() - 0.5) < 0.01
    # neighbouring edges uncorrelated
    c = np.corrcoef(draws[:, 0], draws[:, 1])[0, 1]
    assert abs(c) < 0.03


def test_certain_edges_open_after_one_sweep():
    g = PrimalGraph.from_edges(3, np.array([[0, 1], [1, 2]]))
    spec = MeasureSpec(ModelParams(2.0), BoundaryCondition.free(), [1e300, 1.0])
    cfg = sample_heat_bath(g, spec, 1, np.random.default_rng(1))
    assert cfg.state[0] == 1


@pytest.mark.parametrize("bc", ["free", "wired"])
def test_sampler_matches_exact(bc):
    g = build_square_lattice(AngleSequences.regular(2, 2))
    b = BoundaryCondition.wired() if bc == "wired" else BoundaryCondition.free()
    spec = MeasureSpec.for_graph(g, ModelParams(2.0), b)
    law = exact_distribution(g, spec)
    chain = HeatBathChain(g, spec, np.random.default_rng(2))
    chain.sweep(100)
    draws = chain.record(100000)
    emp = draws.mean(axis=0)
    se = np.sqrt(law.marginals() * (1 - law.marginals()) / len(draws))
    assert np.all(np.abs(emp - law.marginals()) < 3 * se * 2)


def test_wired_dominates_free():
    g = build_square_lattice(AngleSequences.regular(3, 3))
    for q in (1.5, 2.0, 4.0):
        lf = exact_distribution(g, MeasureSpec.for_graph(g, ModelParams(q)))
        lw = exact_distribution(g, MeasureSpec.for_graph(g, ModelParams(q), BoundaryCondition.wired()))
        bits = lf.bits()
        for ev in (bits.sum(axis=1) >= 5, bits[:, 0] == 1, bits.all(axis=1)):
            assert lw.event_prob(ev) >= lf.event_prob(ev) - 1e-12


def test_dual_config():
    g = build_square_lattice(AngleSequences.regular(3, 3))
    c = Configuration(np.ones(g.n_rhombi, np.uint8), g.version)
    _, d = dual_config(g, c)
    assert not d.state.any()
    _, dd = dual_config(g, d)
    assert np.array_equal(dd.state, c.state)
    rng = np.random.default_rng(0)
    c = Configuration(rng.integers(0, 2, g.n_rhombi).astype(np.uint8), g.version)
    _, d = dual_config(g, c)
    assert c.state.mean() + d.state.mean() == pytest.approx(1.0)


def test_version_mismatch():
    g = build_square_lattice(AngleSequences.regular(2, 2))
    with pytest.raises(Exception):
        cluster_count(g, Configuration(np.zeros(g.n_rhombi, np.uint8), g.version + 1))


def test_seeded_chains_reproduce():
    g = build_square_lattice(AngleSequences.regular(3, 3))
    spec = MeasureSpec.for_graph(g, ModelParams(2.0))
    a = HeatBathChain(g, spec, np.random.default_rng(5)).record(50)
    b = HeatBathChain(g, spec, np.random.default_rng(5)).record(50)
    assert np.array_equal(a, b)
