from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrsaw import stepdist
from lrsaw.stepdist import build_step_distribution


def brute_weights(d, alpha, L, R):
    """Independent tabulation of h(x/L) over the truncated box."""
    out = {}
    for x in itertools.product(range(-R, R + 1), repeat=d):
        if any(x):
            r = math.sqrt(sum(c * c for c in x)) / L
            out[x] = max(r, 1.0) ** (-(d + alpha))
    return out


def brute_one_minus_dhat(d, alpha, L, R, k):
    w = brute_weights(d, alpha, L, R)
    z = sum(w.values())
    return sum(v * (1 - math.cos(sum(a * b for a, b in zip(x, k)))) for x, v in w.items()) / z


@pytest.mark.parametrize("d,alpha,L,R", [(1, 1.5, 1, 5), (2, 0.7, 2, 4), (3, 3.0, 1, 2), (2, 2.0, 3, 3)])
def test_probabilities_match_brute_force(d, alpha, L, R):
    dist = build_step_distribution(d, alpha, L, R)
    w = brute_weights(d, alpha, L, R)
    z = sum(w.values())
    assert dist.normalization == pytest.approx(z, rel=1e-13)
    for x, p in dist.support:
        assert p == pytest.approx(w[x] / z, rel=1e-13)
    assert dist.probabilities.sum() == pytest.approx(1.0, abs=1e-12)


def test_origin_and_outside_have_zero_mass():
    dist = build_step_distribution(2, 1.5, 2, 4)
    assert dist.probability([0, 0]) == 0.0
    assert dist.probability([5, 0]) == 0.0
    assert dist.probability([4, -4]) > 0


def test_d1_nearest_neighbour_example():
    dist = build_step_distribution(1, 1.0, 1, 1)
    assert dist.probability([1]) == pytest.approx(0.5, abs=1e-15)
    assert dist.probability([-1]) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("d,R", [(2, 3), (3, 2)])
def test_signed_permutation_symmetry_is_exact(d, R):
    dist = build_step_distribution(d, 1.5, 1, R)
    table = dict(dist.support)
    for x, p in table.items():
        for perm in itertools.permutations(range(d)):
            for signs in itertools.product((1, -1), repeat=d):
                y = tuple(signs[i] * x[perm[i]] for i in range(d))
                assert table[y] == p


@pytest.mark.parametrize("L", [1, 2, 4, 8])
def test_sup_norm_scaling_in_L(L):
    dist = build_step_distribution(2, 1.5, L, 4 * L)
    # the plateau holds about (2L)^d points at the maximal weight
    assert 0.05 < dist.sup_norm_constant < 1.0


def test_bad_parameters_raise():
    with pytest.raises(ValueError):
        build_step_distribution(0, 1.0, 1, 1)
    with pytest.raises(ValueError):
        build_step_distribution(1, 0.0, 1, 1)
    with pytest.raises(ValueError):
        build_step_distribution(1, 1.0, 3, 2)


@settings(max_examples=25, deadline=None)
@given(
    d=st.integers(1, 3),
    alpha=st.floats(0.3, 4.0),
    k=st.lists(st.floats(-3.5, 3.5), min_size=3, max_size=3),
)
def test_fourier_matches_direct_sum(d, alpha, k):
    R = {1: 9, 2: 4, 3: 2}[d]
    dist = build_step_distribution(d, alpha, 1, R)
    kk = np.array(k[:d])
    assert stepdist.one_minus_fourier(dist, kk) == pytest.approx(
        brute_one_minus_dhat(d, alpha, 1, R, kk), rel=1e-10, abs=1e-14
    )
    assert stepdist.fourier_transform(dist, kk, debug=True) == pytest.approx(
        1 - brute_one_minus_dhat(d, alpha, 1, R, kk), abs=1e-12
    )


def test_wrap_frequency_is_periodic():
    dist = build_step_distribution(2, 1.5, 1, 3)
    k = np.array([0.4, -1.1])
    shifted = k + 2 * np.pi * np.array([1, -3])
    assert np.allclose(stepdist.wrap_frequency(shifted), k)
    assert stepdist.one_minus_fourier(dist, shifted) == pytest.approx(stepdist.one_minus_fourier(dist, k), abs=1e-12)


def test_bounds_report():
    dist = build_step_distribution(2, 1.5, 2, 6)
    g = np.linspace(-np.pi, np.pi, 21)
    grid = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
    rep = stepdist.one_minus_Dhat_bounds_check(dist, grid)
    assert rep.passed
    assert rep.min_far > 0 and rep.max_all < 2
    with pytest.raises(ValueError):
        stepdist.one_minus_Dhat_bounds_check(dist, np.zeros((0, 2)))


class TestTailMode:
    """Large boxes keep a tabulated core; the shell is summed analytically."""

    @pytest.fixture(scope="class")
    @staticmethod
    def pair():
        kw = dict(max_table_points=100, max_core_points=200)
        tail = build_step_distribution(2, 1.5, 2, 30, **kw)
        full = build_step_distribution(2, 1.5, 2, 30)
        return tail, full

    def test_is_tail(self, pair):
        tail, full = pair
        assert not tail.is_tabulated and full.is_tabulated
        assert 0 < tail.core_mass < 1

    def test_normalization_and_moments(self, pair):
        tail, full = pair
        assert tail.normalization == pytest.approx(full.normalization, rel=1e-12)
        assert stepdist.second_moment(tail) == pytest.approx(stepdist.second_moment(full), rel=1e-10)
        assert stepdist.absolute_moment(tail, 0.7) == pytest.approx(stepdist.absolute_moment(full, 0.7), rel=1e-10)

    @pytest.mark.parametrize("k", [[0.01, 0.0], [0.3, -0.2], [2.0, 1.0], [np.pi, np.pi]])
    def test_fourier(self, pair, k):
        tail, full = pair
        assert stepdist.one_minus_fourier(tail, np.array(k)) == pytest.approx(
            stepdist.one_minus_fourier(full, np.array(k)), rel=1e-10, abs=1e-14
        )

    def test_probability_of_shell_point(self, pair):
        tail, full = pair
        assert tail.probability([20, -7]) == pytest.approx(full.probability([20, -7]), rel=1e-12)

    def test_draws_follow_law(self, pair):
        tail, _ = pair
        rng = np.random.default_rng(3)
        x = stepdist.sample_step(tail, rng, 200_000)
        m = np.abs(x).max(axis=1)
        assert m.min() >= 1 and m.max() <= 30
        # shell mass, exact versus sampled
        shell = (m > tail.core_radius).mean()
        p = 1 - tail.core_mass
        assert abs(shell - p) < 4 * math.sqrt(p * (1 - p) / x.shape[0])
        # one cell far out in the shell
        cell = np.all(x == [20, -7], axis=1).mean()
        q = tail.probability([20, -7])
        assert abs(cell - q) < 5 * math.sqrt(q / x.shape[0])


def test_truncated_mass_matches_larger_box():
    small = build_step_distribution(1, 1.5, 1, 50)
    w = brute_weights(1, 1.5, 1, 200_000)
    inside = sum(v for x, v in w.items() if abs(x[0]) <= 50)
    total = sum(w.values())
    # the remaining tail beyond 2e5 is below 1e-7 relative
    assert small.truncated_mass == pytest.approx(1 - inside / total, rel=1e-3)


def test_sampling_matches_table():
    dist = build_step_distribution(2, 1.5, 1, 2)
    rng = np.random.default_rng(0)
    x = stepdist.sample_step(dist, rng, 400_000)
    for pt, p in dist.support:
        freq = np.all(x == pt, axis=1).mean()
        assert abs(freq - p) < 5 * math.sqrt(p * (1 - p) / x.shape[0])


def test_small_k_fit_alpha_lt_2():
    # 1/R far below the window, so the power law holds throughout it
    dist = build_step_distribution(1, 1.5, 1, 100_000)
    ks = np.geomspace(1e-3, 1e-2, 12)[:, None]
    v, _ = stepdist.estimate_v_alpha(dist, ks)
    ratio = stepdist.one_minus_fourier(dist, ks) / (v * ks[:, 0] ** 1.5)
    assert np.all((ratio > 0.9) & (ratio < 1.1))
    assert v == pytest.approx(stepdist.continuum_v_alpha(dist), rel=0.05)


def test_second_moment_v_for_alpha_gt_2():
    dist = build_step_distribution(1, 3.0, 1, 400)
    v, _ = stepdist.estimate_v_alpha(dist, np.geomspace(1e-3, 1e-2, 12)[:, None])
    assert v == pytest.approx(stepdist.second_moment(dist) / 2)
    k = np.array([1e-2])
    assert stepdist.one_minus_fourier(dist, k) == pytest.approx(v * 1e-4, rel=0.05)


def test_continuum_constant_formula_d1():
    # for d = 1: int (1 - cos y) |y|^{-1-a} dy = 2 Gamma(-a) cos(pi a / 2) with sign so that it is positive
    dist = build_step_distribution(1, 1.5, 1, 10)
    a = 1.5
    integral = -2 * math.gamma(-a) * math.cos(math.pi * a / 2)
    assert stepdist.continuum_v_alpha(dist) == pytest.approx(integral / dist.normalization, rel=1e-12)


def test_fit_small_k_forms():
    dist = build_step_distribution(1, 1.5, 1, 400)
    ks = np.geomspace(1e-3, 1e-2, 8)[:, None]
    for form in ("power", "log", "power+quadratic"):
        v, resid = stepdist.fit_small_k(dist, ks, form)
        assert v > 0 and resid >= 0
    with pytest.raises(ValueError):
        stepdist.fit_small_k(dist, ks, "cubic")
    with pytest.raises(ValueError):
        stepdist.fit_small_k(dist, np.array([[1e-3], [1e-3], [1e-3]]))


def test_fingerprint_tracks_parameters():
    a = build_step_distribution(2, 1.5, 1, 3)
    b = build_step_distribution(2, 1.5, 1, 3)
    c = build_step_distribution(2, 1.5, 1, 4)
    assert a.fingerprint == b.fingerprint != c.fingerprint


def test_bounds_boundary_case_nearest_neighbour():
    # D = (delta_1 + delta_{-1}) / 2 has 1 - Dhat(pi) = 2 exactly; the report shows it rather than hiding it
    dist = build_step_distribution(1, 3.0, 1, 1)
    rep = stepdist.one_minus_Dhat_bounds_check(dist, np.array([[np.pi / 2], [np.pi]]))
    assert rep.min_far == pytest.approx(1.0, abs=1e-15)
    assert rep.max_all == 2.0 and not rep.max_below_two
