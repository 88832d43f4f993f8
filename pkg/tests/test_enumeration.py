from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrsaw import enumeration
from lrsaw._diagrams import coincidence_partitions, mobius_weight
from lrsaw.enumeration import MultiTimeSpec, enumerate_walks, estimate_zc
from lrsaw.stepdist import build_step_distribution

from oracles import brute_counts


MODELS = [(1, 1.5, 2, 3, 6), (2, 1.5, 1, 1, 5), (2, 0.8, 1, 2, 4), (3, 3.0, 1, 1, 4)]


@pytest.fixture(scope="module", params=MODELS, ids=lambda m: "d{}a{}L{}R{}n{}".format(*m))
def model(request):
    d, alpha, L, R, n = request.param
    dist = build_step_distribution(d, alpha, L, R)
    return dist, n, brute_counts(dist, n)


@pytest.mark.parametrize("method", ["dfs", "diagram"])
def test_resolved_counts_match_brute_force(model, method):
    dist, n, brute = model
    table = enumerate_walks(dist, n, method=method)
    for m in range(n + 1):
        for x, w in brute[m].items():
            assert table.c(m, x) == pytest.approx(w, rel=1e-12, abs=1e-17)
        assert table.c(m) == pytest.approx(sum(brute[m].values()), rel=1e-12)
        pts, _ = table.nonzero(m)
        assert len(pts) <= len(brute[m])


def test_totals_only_diagram(model):
    dist, n, brute = model
    table = enumerate_walks(dist, n, method="diagram", resolved=False)
    assert not table.resolved
    for m in range(n + 1):
        assert table.totals[m] == pytest.approx(sum(brute[m].values()), rel=1e-12)
    with pytest.raises(ValueError):
        table.c(1, [0] * dist.dimension)


def test_workers_and_symmetry_are_bit_identical():
    dist = build_step_distribution(2, 1.5, 1, 2)
    base = enumerate_walks(dist, 4, method="dfs")
    par = enumerate_walks(dist, 4, method="dfs", workers=4)
    assert np.array_equal(base.tables, par.tables)
    sym = enumerate_walks(dist, 4, method="dfs", symmetry=True)
    assert np.allclose(sym.tables, base.tables, rtol=1e-13, atol=1e-18)


def test_d1_nearest_neighbour_examples():
    dist = build_step_distribution(1, 1.0, 1, 1)
    table = enumerate_walks(dist, 6)
    assert table.totals.tolist() == [1.0, 1.0] + [0.5**(n - 1) for n in range(2, 7)]
    assert table.c(3, 3) == 0.125 and table.c(3, -3) == 0.125 and table.c(3, 1) == 0.0
    zc, _ = estimate_zc(table)
    assert zc == pytest.approx(2.0, abs=1e-12)
    assert enumeration.susceptibility_partial(table, 1.0) == pytest.approx(1 + 1 + 0.5 + 0.25 + 0.125 + 0.0625 + 0.03125)


def test_d2_nearest_neighbour_second_count():
    # D uniform on the 8 neighbours of the unit box; only immediate reversals are forbidden
    dist = build_step_distribution(2, 1.5, 1, 1)
    p = dict(dist.support)
    expected = 1.0 - sum(q * q for q in p.values())
    table = enumerate_walks(dist, 2)
    assert table.c(2) == pytest.approx(expected, rel=1e-14)


def test_budget_guard():
    dist = build_step_distribution(3, 1.5, 1, 2)
    with pytest.raises(enumeration.BudgetExceeded):
        enumerate_walks(dist, 6, method="dfs", budget=1e3)


def test_estimate_zc_errors():
    with pytest.raises(ValueError):
        estimate_zc([1, 1, 0.5])
    with pytest.raises(ValueError):
        estimate_zc([1, 1, 0.5, 0.0, 0.0])


def test_partitions_and_mobius():
    # restricted growth strings of length m with no equal neighbours
    counts = [sum(1 for _ in coincidence_partitions(n)) for n in range(1, 7)]
    # brute-force count over all set partitions of {0..n}
    def brute(n):
        def rgs(m):
            if m == 0:
                yield []
                return
            for s in rgs(m - 1):
                for v in range(max(s, default=-1) + 2):
                    yield s + [v]
        return sum(1 for s in rgs(n + 1) if all(a != b for a, b in zip(s, s[1:])))
    assert counts == [brute(n) for n in range(1, 7)]
    # argument is the growth string (block label of each vertex)
    assert mobius_weight((0, 0, 0)) == 2
    assert mobius_weight((0, 1, 0, 1)) == 1
    assert mobius_weight((0, 1, 0, 2)) == -1
    assert mobius_weight((0, 1, 2)) == 1


def test_fourier_sums():
    dist = build_step_distribution(2, 1.5, 1, 2)
    table = enumerate_walks(dist, 4)
    brute = brute_counts(dist, 4)
    k = np.array([0.7, -0.3])
    series = enumeration.chat_series(dist, 4, k)
    for n in range(5):
        direct = sum(w * math.cos(float(np.dot(k, x))) for x, w in brute[n].items())
        assert enumeration.chat_n(table, n, k) == pytest.approx(direct, abs=1e-13)
        assert series[n] == pytest.approx(direct, abs=1e-13)


def test_multi_time_transform_against_brute_force():
    dist = build_step_distribution(1, 1.5, 1, 2)
    k1, k2 = np.array([0.4]), np.array([1.3])
    spec = MultiTimeSpec(times=(2, 4), frequencies=(k1, k2))
    # brute force over all 4-step SAWs with the positions at steps 2 and 4
    steps = dist.support
    total = 0.0

    def rec(path, w):
        nonlocal total
        if len(path) == 5:
            total += w * math.cos(k1[0] * path[2] + k2[0] * (path[4] - path[2]))
            return
        for (s,), p in steps:
            y = path[-1] + s
            if y not in path:
                rec(path + [y], w * p)

    rec([0], 1.0)
    for method in ("dfs", "diagram"):
        assert enumeration.chat_multi(dist, spec, method=method) == pytest.approx(total, abs=1e-13)


def test_multi_time_spec_validation():
    with pytest.raises(ValueError):
        MultiTimeSpec(times=(3, 2), frequencies=(np.zeros(1), np.zeros(1)))
    with pytest.raises(ValueError):
        MultiTimeSpec(times=(1,), frequencies=(np.zeros(1), np.zeros(1)))


def test_endpoint_weights_is_normalizable():
    dist = build_step_distribution(2, 1.5, 1, 2)
    w = enumeration.endpoint_weights(dist, 3)
    brute = brute_counts(dist, 3)[3]
    assert w.sum() == pytest.approx(sum(brute.values()), rel=1e-12)
    assert w.min() > -1e-15


def test_ratio_sequence_d5_alpha3():
    # the diagram engine stops at n = 6, one short of the n = 7 run this example was stated for
    dist = build_step_distribution(5, 3.0, 1, 1)
    table = enumerate_walks(dist, 6, resolved=False)
    zc6, ratios = estimate_zc(table)
    assert all(b > a for a, b in zip(ratios[:-1], ratios[1:]))
    zc5, _ = estimate_zc(table.totals[:6])
    assert f"{zc5:.3g}" == f"{zc6:.3g}"


@settings(max_examples=15, deadline=None)
@given(d=st.integers(1, 3), alpha=st.floats(0.5, 4.0), R=st.integers(1, 2))
def test_counts_are_decreasing_sub_probabilities(d, alpha, R):
    dist = build_step_distribution(d, alpha, 1, R)
    c = enumerate_walks(dist, 4 if d < 3 else 3).totals
    assert np.all(c >= 0) and np.all(np.diff(c) <= 1e-15)
