from __future__ import annotations

import math
from collections import defaultdict

import numpy as np
import pytest

from lrsaw import lace, stepdist
from lrsaw.enumeration import enumerate_walks, estimate_zc
from lrsaw.stepdist import build_step_distribution

from oracles import brute_counts


def _conv(a, b):
    out = defaultdict(float)
    for x, u in a.items():
        for y, v in b.items():
            out[tuple(i + j for i, j in zip(x, y))] += u * v
    return out


def brute_pi(dist, max_n):
    """Invert the recursion in real space with dictionaries."""
    c = brute_counts(dist, max_n)
    D = dict(dist.support)
    pis = [defaultdict(float) for _ in range(max_n + 1)]
    for n in range(1, max_n):
        acc = defaultdict(float, c[n + 1])
        for x, v in _conv(D, c[n]).items():
            acc[x] -= v
        for m in range(2, n + 1):
            for x, v in _conv(pis[m], c[n + 1 - m]).items():
                acc[x] -= v
        pis[n + 1] = acc
    return pis


@pytest.fixture(scope="module")
def small():
    dist = build_step_distribution(2, 1.5, 1, 1)
    table = enumerate_walks(dist, 5)
    return dist, table, lace.extract_pi(table, dist)


def test_pi_matches_real_space_inversion(small):
    dist, _, laces = small
    ref = brute_pi(dist, 5)
    for n in range(2, 6):
        for x, v in ref[n].items():
            assert laces.pi(n, x) == pytest.approx(v, abs=1e-14)
        assert laces.pi_totals[n] == pytest.approx(sum(ref[n].values()), abs=1e-14)


def test_pi2_closed_form(small):
    dist, _, laces = small
    p = np.array([q for _, q in dist.support])
    assert laces.pi(2, [0, 0]) == pytest.approx(-(p**2).sum(), abs=1e-12)
    off = np.fft.fftshift(laces.pis[2]).copy()
    off[tuple(np.array(off.shape) // 2)] = 0.0
    assert np.abs(off).max() < 1e-12


def test_pi3_closed_form(small):
    # loop term at the origin plus the doubly overlapping walk x, -x, x
    dist, table, laces = small
    D = dict(dist.support)
    d3 = sum(D[a] * D[b] * D.get(tuple(-i - j for i, j in zip(a, b)), 0.0) for a in D for b in D)
    assert laces.pi(3, [0, 0]) == pytest.approx(-d3, abs=1e-14)
    for x, p in D.items():
        assert laces.pi(3, x) == pytest.approx(p**3, abs=1e-14)


def test_d1_example_values():
    dist = build_step_distribution(1, 1.0, 1, 1)
    laces = lace.extract_pi(enumerate_walks(dist, 4), dist)
    assert laces.pi(2, 0) == pytest.approx(-0.5, abs=1e-15)
    assert laces.pi(3, 1) == pytest.approx(0.125, abs=1e-15)
    assert laces.pi(3, -1) == pytest.approx(0.125, abs=1e-15)
    assert laces.pi(3, 0) == pytest.approx(0.0, abs=1e-15)


def test_reconstruction(small):
    dist, table, laces = small
    assert lace.reconstruction_residual(laces, table, dist) < 1e-14


def test_mismatched_distribution_rejected(small):
    _, table, _ = small
    other = build_step_distribution(2, 1.5, 1, 2)
    with pytest.raises(ValueError):
        lace.extract_pi(table, other)


def test_totals_only_matches_resolved(small):
    dist, _, laces = small
    totals = enumerate_walks(dist, 5, method="diagram", resolved=False)
    lt = lace.extract_pi(totals, dist)
    assert np.allclose(lt.pi_totals, laces.pi_totals, atol=1e-14)
    assert not lt.resolved


def test_constants_by_hand(small):
    dist, table, laces = small
    zc, _ = estimate_zc(table)
    a0 = 1 + sum(n * laces.pi_totals[n] * zc ** (n - 1) for n in range(2, 6))
    assert lace.A_at_zero(laces, zc) == pytest.approx(a0, rel=1e-14)
    assert lace.xi_constant(laces, zc) == pytest.approx(1 / (zc * a0), rel=1e-14)
    K, terms = lace.compute_K_alpha(laces, dist, zc, 1.0)
    assert K == pytest.approx(1 / a0, rel=1e-14)
    assert terms["A0_last_term"] == pytest.approx(abs(5 * laces.pi_totals[5] * zc**4))
    # dK/dz by an independent finite difference
    h = 1e-5
    kp = 1 / lace.A_at_zero(laces, zc + h)
    km = 1 / lace.A_at_zero(laces, zc - h)
    assert terms["dK_dzc"] == pytest.approx((kp - km) / (2 * h), rel=1e-5)


def test_alpha_gt_2_moment_factor():
    dist = build_step_distribution(2, 3.0, 1, 1)
    table = enumerate_walks(dist, 5)
    laces = lace.extract_pi(table, dist)
    zc, _ = estimate_zc(table)
    v = stepdist.second_moment(dist) / 4
    ref = brute_pi(dist, 5)
    m2 = sum(sum(val * sum(c * c for c in x) for x, val in ref[n].items()) * zc**n for n in range(2, 6))
    K, terms = lace.compute_K_alpha(laces, dist, zc, v)
    assert terms["moment_factor"] == pytest.approx(1 + m2 / (4 * zc * v), rel=1e-12)
    assert K == pytest.approx(terms["moment_factor"] / terms["A0"], rel=1e-14)
    # B(k) / (1 - Dhat) approaches the same factor as k -> 0
    b = lace.B_over_one_minus_Dhat(laces, dist, zc, np.array([1e-3, 0.0]))
    assert b == pytest.approx(terms["moment_factor"], rel=1e-5)


def test_alpha_gt_2_needs_resolved():
    dist = build_step_distribution(2, 3.0, 1, 1)
    laces = lace.extract_pi(enumerate_walks(dist, 4, method="diagram", resolved=False), dist)
    with pytest.raises(ValueError):
        lace.compute_K_alpha(laces, dist, 1.1, 0.5)


def test_zero_laces_give_one():
    dist = build_step_distribution(2, 1.5, 1, 1)
    z = lace.zero_laces(2, 4)
    K, _ = lace.compute_K_alpha(z, dist, 1.0, 1.0)
    assert K == 1.0
    assert lace.B_over_one_minus_Dhat(z, dist, 1.0, np.array([0.3, 0.0])) == 1.0


def test_B_with_totals_only_table(small):
    dist, _, laces = small
    lt = lace.extract_pi(enumerate_walks(dist, 5, method="diagram", resolved=False), dist)
    k = np.array([0.4, 0.1])
    assert lace.B_over_one_minus_Dhat(lt, dist, 1.1, k) == pytest.approx(
        lace.B_over_one_minus_Dhat(laces, dist, 1.1, k), rel=1e-10
    )
    with pytest.raises(ValueError):
        lace.B_over_one_minus_Dhat(laces, dist, 1.1, np.zeros(2))


def test_invalid_inputs(small):
    dist, _, laces = small
    with pytest.raises(ValueError):
        lace.compute_K_alpha(laces, dist, -1.0, 1.0)
    with pytest.raises(ValueError):
        lace.compute_K_alpha(laces, dist, 1.0, 0.0)
    bad = lace.LaceTable("", 2, 3, 1, np.array([0.0, 0.0, -1.0, 0.0]))
    with pytest.raises(ValueError):
        lace.A_at_zero(bad, 1.0)


def test_pi_abs_sum_bounds_total(small):
    _, table, laces = small
    zc, _ = estimate_zc(table)
    tot = abs(sum(laces.pi_totals[n] * zc**n for n in range(6)))
    assert lace.pi_abs_sum(laces, zc) >= tot - 1e-15
    assert math.isfinite(lace.pi_abs_sum(laces, zc))
