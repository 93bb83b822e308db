import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from fldtransfer.errors import DimensionMismatch, EmptySources, MissingClass, ZeroResultant, ZeroVector
from fldtransfer.fld import FldFit, fit_fld
from fldtransfer.simlab import balanced_accuracy
from fldtransfer.fld import predict
from fldtransfer.stats import RngStream, TaskDistribution, sample_task
from fldtransfer.transfer import (
    AlphaGrid,
    SourceSummary,
    closed_form_risk,
    combine,
    combined_covariance,
    draw_combined,
    expected_risk_mc,
    grid_accuracies,
    optimal_alpha,
    oracle_alpha,
    reparameterize_alpha,
    summarize_sources,
)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def make_fit(omega, nu, sigma, sigma_omega):
    omega = np.asarray(omega, dtype=float)
    return FldFit(omega_raw=omega, omega=unit(omega), nu_hat=np.asarray(nu, float),
                  sigma_hat=np.asarray(sigma, float), n_total=10, sigma_omega=np.asarray(sigma_omega, float))


def make_sources(mu, psi_scale):
    return SourceSummary(mu_hat=unit(mu), psi_scale=psi_scale, j_count=5, resultant_length=0.9)


# -- sources -------------------------------------------------------------------

def test_summarize_identical_sources():
    u = unit([1.0, 2.0, 2.0])
    s = summarize_sources(np.tile(u, (4, 1)))
    np.testing.assert_allclose(s.mu_hat, u)
    assert s.psi_scale == 0.0
    assert s.j_count == 4
    np.testing.assert_array_equal(s.psi, np.zeros((3, 3)))


def test_summarize_errors():
    with pytest.raises(ZeroResultant):
        summarize_sources([[1.0, 0.0], [-1.0, 0.0]])
    with pytest.raises(EmptySources):
        summarize_sources(np.empty((0, 3)))
    with pytest.raises(ValueError):
        summarize_sources([[2.0, 0.0]])


def test_summarize_three_angles():
    ang = np.radians([0.0, 30.0, 60.0])
    W = np.column_stack([np.cos(ang), np.sin(ang)])
    s = summarize_sources(W)
    np.testing.assert_allclose(s.mu_hat, [math.cos(math.pi / 6), math.sin(math.pi / 6)], atol=1e-15)
    # cos^2 to the mean direction: 3/4, 1, 3/4; resultant length (1 + sqrt 3) / 3
    r = (1 + math.sqrt(3)) / 3
    expected = math.sqrt((1 - 2.5 / 3) / (3 * r))
    assert abs(s.psi_scale - expected) < 1e-14
    assert abs(s.resultant_length - r) < 1e-14


def test_summary_validation():
    with pytest.raises(ValueError):
        SourceSummary(np.array([1.0, 1.0]), 0.1, 2, 0.5)
    with pytest.raises(EmptySources):
        SourceSummary(np.array([1.0, 0.0]), 0.1, 0, 0.5)


def test_reparameterize():
    assert reparameterize_alpha(1.0, 10, 0.3) == 1.0
    assert reparameterize_alpha(0.0, 10, 0.3) == 0.0
    assert abs(reparameterize_alpha(0.5, 4, 0.5) - 1 / 3) < 1e-15


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(1, 1000), st.floats(0.01, 1.0))
def test_reparameterize_in_unit_interval(a, j, r):
    assert 0.0 <= reparameterize_alpha(a, j, r) <= 1.0


# -- grid ------------------------------------------------------------------------

def test_grid_defaults_and_validation():
    g = AlphaGrid()
    assert len(g) == 11 and g.values[0] == 0.0 and g.values[-1] == 1.0
    assert g.index(0.3) == 3
    assert AlphaGrid.with_step(0.25).values == (0.0, 0.25, 0.5, 0.75, 1.0)
    with pytest.raises(ValueError):
        AlphaGrid((0.5, 0.2))
    with pytest.raises(ValueError):
        AlphaGrid((0.0, 1.5))
    with pytest.raises(ValueError):
        AlphaGrid(())
    with pytest.raises(ValueError):
        AlphaGrid.with_step(0.3)


# -- combine and risk ---------------------------------------------------------

def test_combine_examples():
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    np.testing.assert_array_equal(combine(1.0, e1, e2), e1)
    np.testing.assert_array_equal(combine(0.0, e1, e2), e2)
    np.testing.assert_array_equal(combine(0.5, e1, e2), [0.5, 0.5, 0.0])
    with pytest.raises(DimensionMismatch):
        combine(0.5, e1, np.ones(2))


def test_closed_form_examples():
    e1 = np.eye(2)[0]
    assert abs(closed_form_risk(e1, e1, np.eye(2)) - norm.cdf(-1.0)) < 1e-15
    assert abs(closed_form_risk([1.0, 0.0], [0.0, 2.0], np.diag([3.0, 0.5])) - 0.5) < 1e-15
    with pytest.raises(ZeroVector):
        closed_form_risk(np.zeros(2), e1, np.eye(2))
    with pytest.raises(DimensionMismatch):
        closed_form_risk(e1, np.ones(3), np.eye(2))


def test_closed_form_monte_carlo_labeling():
    w = unit([1.0, 1.0])
    nu = np.array([0.6, 0.8])
    sigma = np.diag([1.0, 2.0])
    R = closed_form_risk(w, nu, sigma)
    g = np.random.default_rng(2024)
    n, errors = 10**7, 0
    for _ in range(10):
        m = n // 10
        y = g.random(m) < 0.5
        X = np.where(y[:, None], nu, -nu) + g.standard_normal((m, 2)) * np.sqrt([1.0, 2.0])
        errors += np.count_nonzero((X @ w > 0) != y)
    assert abs(errors / n - R) < 3 * math.sqrt(R * (1 - R) / n)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31), st.floats(1e-3, 1e3))
def test_closed_form_scale_invariant(d, seed, c):
    g = np.random.default_rng(seed)
    w, nu = g.standard_normal(d), g.standard_normal(d)
    A = g.standard_normal((d, d))
    sigma = A @ A.T + 0.1 * np.eye(d)
    r = closed_form_risk(w, nu, sigma)
    assert 0.0 <= r <= 1.0
    assert abs(closed_form_risk(c * w, nu, sigma) - r) < 1e-12


# -- Monte-Carlo risk ---------------------------------------------------------

def random_setup(seed, d=4):
    g = np.random.default_rng(seed)
    X, y = sample_task(TaskDistribution(unit(g.standard_normal(d)), np.eye(d)), 30, g)
    fit = fit_fld(X, y)
    src = summarize_sources(np.array([unit(g.standard_normal(d) + 2.0) for _ in range(20)]))
    return fit, src


def test_endpoint_covariances():
    fit, src = random_setup(1)
    np.testing.assert_array_equal(combined_covariance(1.0, fit, src), fit.sigma_omega)
    np.testing.assert_array_equal(combined_covariance(0.0, fit, src), src.psi)


def test_zero_variance_equals_closed_form():
    d = 3
    fit = make_fit([1.0, 0.5, -0.2], [0.6, 0.8, 0.0], np.diag([1.0, 2.0, 0.5]), np.zeros((d, d)))
    src = make_sources([0.2, 1.0, 0.1], 0.0)
    for a in AlphaGrid():
        w = combine(a, fit.omega, src.mu_hat)
        mc = expected_risk_mc(a, fit, src, 7, RngStream(3))
        assert abs(mc - closed_form_risk(w, fit.nu_hat, fit.sigma_hat)) <= 1e-12


def test_mc_risk_deterministic_and_bounded():
    fit, src = random_setup(2)
    a = expected_risk_mc(0.4, fit, src, 50, RngStream(5, (1,)))
    b = expected_risk_mc(0.4, fit, src, 50, RngStream(5, (1,)))
    assert a == b and 0.0 <= a <= 1.0
    with pytest.raises(ValueError):
        expected_risk_mc(0.4, fit, src, 0, RngStream(5))


def test_mc_risk_self_consistency():
    fit, src = random_setup(3)
    a = 0.6
    W1 = draw_combined(a, fit, src, 10**5, RngStream(1))
    W2 = draw_combined(a, fit, src, 10**6, RngStream(2))
    from fldtransfer.kernels import projected_risks

    r1 = projected_risks(W1, fit.nu_hat, fit.sigma_hat)
    r2 = projected_risks(W2, fit.nu_hat, fit.sigma_hat)
    se = math.sqrt(r1.var() / r1.size + r2.var() / r2.size)
    assert abs(r1.mean() - r2.mean()) < 3 * se
    assert r1.mean() == pytest.approx(expected_risk_mc(a, fit, src, 10**5, RngStream(1)), abs=1e-12)


def test_draws_centred_on_combination():
    fit, src = random_setup(4)
    W = draw_combined(0.3, fit, src, 2 * 10**5, RngStream(6))
    mean = combine(0.3, fit.omega, src.mu_hat)
    cov = combined_covariance(0.3, fit, src)
    np.testing.assert_allclose(W.mean(axis=0), mean, atol=5 * np.sqrt(np.diag(cov).max() / W.shape[0]))
    np.testing.assert_allclose(np.cov(W.T), cov, atol=0.03 * np.abs(cov).max())


# -- optimal alpha ---------------------------------------------------------------

def test_optimal_singleton_grid():
    fit, src = random_setup(5)
    c = optimal_alpha(fit, src, AlphaGrid((0.5,)), 20, RngStream(0))
    assert c.alpha_star == 0.5 and len(c.risks) == 1


def test_optimal_tie_prefers_smallest():
    # identical target and source directions with zero variance tie every grid point
    fit = make_fit([1.0, 0.0], [1.0, 0.0], np.eye(2), np.zeros((2, 2)))
    src = make_sources([1.0, 0.0], 0.0)
    c = optimal_alpha(fit, src, AlphaGrid(), 10, RngStream(0))
    assert len(set(c.risks)) == 1
    assert c.alpha_star == 0.0 and c.star_index == 0


def test_optimal_curve_invariants():
    fit, src = random_setup(6)
    c = optimal_alpha(fit, src, AlphaGrid(), 100, RngStream(9))
    assert len(c.risks) == len(c.alphas)
    assert c.alpha_star in c.alphas.values
    assert c.risks[c.star_index] == min(c.risks)
    # grid point i uses sub-stream i
    assert c.risks[3] == expected_risk_mc(0.3, fit, src, 100, RngStream(9).child(3))


def test_optimal_prefers_source_when_target_noisy():
    nu = np.eye(3)[0]
    wins = 0
    for r in range(20):
        g = np.random.default_rng(r)
        fit = make_fit(nu + 0.3 * g.standard_normal(3), nu, np.eye(3), 50.0 * np.eye(3))
        c = optimal_alpha(fit, make_sources(nu, 0.0), AlphaGrid(), 1000, RngStream(r))
        wins += c.alpha_star == 0.0
    assert wins > 10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_grid_containment_zero_variance(seed):
    g = np.random.default_rng(seed)
    d = 3
    fit = make_fit(g.standard_normal(d), g.standard_normal(d), np.eye(d), np.zeros((d, d)))
    src = make_sources(g.standard_normal(d) + 0.1, 0.0)
    coarse = optimal_alpha(fit, src, AlphaGrid.with_step(0.5), 3, RngStream(seed))
    fine = optimal_alpha(fit, src, AlphaGrid.with_step(0.1), 3, RngStream(seed))
    assert min(fine.risks) <= min(coarse.risks)


def test_optimal_dimension_mismatch():
    fit, _ = random_setup(7)
    with pytest.raises(DimensionMismatch):
        optimal_alpha(fit, make_sources([1.0, 0.0], 0.1))


# -- oracle --------------------------------------------------------------------------

def separated_by(direction, other):
    X = np.array([direction - 100 * other, -direction + 100 * other] * 5)
    y = np.array([1, 0] * 5)
    return X, y


def test_oracle_target_only():
    e1, e2 = np.eye(2)
    a, acc = oracle_alpha(e1, e2, AlphaGrid(), *separated_by(e1, e2))
    assert a == 1.0 and acc == 1.0


def test_oracle_source_only():
    e1, e2 = np.eye(2)
    a, acc = oracle_alpha(e1, e2, AlphaGrid(), *separated_by(e2, e1))
    assert a == 0.0 and acc == 1.0


def test_oracle_exhaustive():
    g = np.random.default_rng(11)
    nu = unit(g.standard_normal(4))
    X, y = sample_task(TaskDistribution(nu, np.eye(4)), 200, g)
    w, mu = unit(g.standard_normal(4)), unit(nu + g.standard_normal(4))
    grid = AlphaGrid()
    a, acc = oracle_alpha(w, mu, grid, X, y)
    direct = [balanced_accuracy(predict(combine(b, w, mu), X), y) for b in grid]
    assert acc == max(direct)
    assert a == grid.values[int(np.argmax(direct))]
    np.testing.assert_allclose(grid_accuracies(w, mu, grid, X, y), direct, atol=1e-15)


def test_oracle_missing_class():
    e1, e2 = np.eye(2)
    with pytest.raises(MissingClass):
        oracle_alpha(e1, e2, AlphaGrid(), np.ones((4, 2)), np.ones(4, dtype=int))
