from __future__ import annotations

import math

import numpy as np
import pytest

from stochmech.ensemble_stats import (
    InitialDistribution,
    covariance_ode_oracle,
    exponential_rate_fit,
    kick_ensemble,
    run_ensemble,
    variance_slope,
)
from stochmech.errors import AllPathsExcluded, InsufficientSamples, NonLinearModel, NonPositiveVariance
from stochmech.phase_core import builtin_model
from stochmech.sde_engine import NoiseSpec

FREE = builtin_model("free_particle", {"m": 1})
INV = builtin_model("inverted", {"m": 1, "lambda": 1})
HARM = builtin_model("harmonic", {"m": 1, "omega": 1})
ORIGIN = InitialDistribution.point([0.0], [0.0])


@pytest.fixture(scope="module")
def free_diffusion():
    return run_ensemble(FREE, ORIGIN, 10_000, 2.0, 1e-3, NoiseSpec(1.0, "all_on"))


def test_free_variance_at_t2(free_diffusion):
    r = free_diffusion
    assert r.times[-1] == pytest.approx(2.0)
    assert abs(r.var_x[-1, 0] - 1.0) < 3 * r.var_x_se[-1, 0]
    assert r.n_paths == 10_000 and r.excluded == 0


def test_free_slope(free_diffusion):
    fit = variance_slope(free_diffusion)
    assert fit.contains(0.5)
    assert fit.slope == pytest.approx(0.5, rel=0.05)


def test_free_slope_heavier_mass():
    r = run_ensemble(builtin_model("free_particle", {"m": 2}), ORIGIN, 10_000, 2.0, 1e-3,
                     NoiseSpec(1.0, "all_on"))
    fit = variance_slope(r)
    assert fit.contains(0.25)
    assert fit.slope == pytest.approx(0.25, rel=0.05)


def test_noiseless_point_ensemble_has_zero_variance(any_model):
    r = run_ensemble(any_model, InitialDistribution.point([0.3], [0.2]), 100, 1.0, 1e-2, NoiseSpec(0.0))
    assert not r.var_x.any() and not r.var_p.any()
    assert variance_slope(r).slope == 0.0


def test_harmonic_minimal_gaussian_energy_constant():
    init = InitialDistribution.gaussian([0.0], [0.0], 0.5, 0.5)
    r = run_ensemble(HARM, init, 10_000, 5.0, 1e-3, NoiseSpec(0.0))
    assert abs(r.mean_E[0] - 0.5) < 3 * r.mean_E_se[0]
    np.testing.assert_allclose(r.mean_E, r.mean_E[0], rtol=1e-6)


def test_standard_errors_scale_as_inverse_sqrt_n():
    spec = NoiseSpec(1.0, "all_on")
    ses = [run_ensemble(FREE, ORIGIN, N, 1.0, 1e-2, spec).var_x_se[-1, 0] for N in (2000, 4000, 8000, 16000)]
    ratios = np.array(ses[:-1]) / np.array(ses[1:])
    np.testing.assert_allclose(ratios, math.sqrt(2), rtol=0.1)


def test_centered_means_vanish():
    r = run_ensemble(INV, ORIGIN, 10_000, 2.0, 1e-3, NoiseSpec(1.0))
    assert np.all(np.abs(r.mean_x[1:, 0]) < 3 * r.mean_x_se[1:, 0])
    assert np.all(np.abs(r.mean_p[1:, 0]) < 3 * r.mean_p_se[1:, 0])


def test_thread_count_does_not_change_results():
    a = run_ensemble(INV, ORIGIN, 1000, 1.0, 1e-2, NoiseSpec(1.0), threads=1)
    b = run_ensemble(INV, ORIGIN, 1000, 1.0, 1e-2, NoiseSpec(1.0), threads=4)
    for key, col in a.columns().items():
        np.testing.assert_array_equal(col, b.columns()[key])


def test_insufficient_samples():
    with pytest.raises(InsufficientSamples):
        run_ensemble(FREE, ORIGIN, 1, 1.0, 0.1, NoiseSpec(1.0))
    r = run_ensemble(FREE, ORIGIN, 10, 1.0, 0.1, NoiseSpec(1.0, "all_on"), sample_every=10)
    with pytest.raises(InsufficientSamples):
        variance_slope(r)


def test_all_paths_excluded():
    fast = builtin_model("inverted", {"m": 1, "lambda": 60})
    with pytest.raises(AllPathsExcluded):
        run_ensemble(fast, InitialDistribution.point([1.0], [0.0]), 10, 10.0, 1e-2, NoiseSpec(1.0))


@pytest.fixture(scope="module")
def kicked():
    return kick_ensemble(INV, 1.0, 20_000, 6.0, 1e-3, n_intervals=30)


def test_kick_initial_dispersions(kicked):
    r = kicked
    assert abs(r.var_x[0, 0] - 0.5) < 3 * r.var_x_se[0, 0]
    assert abs(r.var_p[0, 0] - 0.5) < 3 * r.var_p_se[0, 0]
    prod = r.var_x[0, 0] * r.var_p[0, 0]
    prod_se = math.hypot(r.var_x_se[0, 0] * r.var_p[0, 0], r.var_p_se[0, 0] * r.var_x[0, 0])
    assert abs(prod - 0.25) < 3 * prod_se


def test_kick_variance_closed_form(kicked):
    r = kicked
    exact = 0.5 * np.cosh(2 * r.times)
    assert np.all(np.abs(r.var_x[:, 0] - exact) < 4 * r.var_x_se[:, 0])


def test_kick_rate_and_prefactor(kicked):
    fit = exponential_rate_fit(kicked, 0, (3.0, 6.0))
    assert fit.rate == pytest.approx(2.0, rel=0.02)
    assert fit.prefactor == pytest.approx(0.25, rel=0.10)
    assert fit.exponential and fit.ci_low < fit.rate < fit.ci_high


def test_kick_requires_inverted():
    with pytest.raises(Exception):
        kick_ensemble(HARM, 1.0, 10, 1.0, 0.1)


def test_continuous_noise_inverted_rate_and_prefactor():
    spec = NoiseSpec(1.0)
    r = run_ensemble(INV, ORIGIN, 10_000, 6.0, 1e-3, spec, n_intervals=30)
    fit = exponential_rate_fit(r, 0, (3.0, 6.0))
    assert fit.rate == pytest.approx(2.0, rel=0.02)
    oracle = covariance_ode_oracle(INV, np.zeros((2, 2)), spec, 6.0, 1e-3, 200)
    mask = oracle.times >= 3.0 - 1e-9
    _, icpt = np.polyfit(oracle.times[mask], np.log(oracle.var_x[mask, 0]), 1)
    assert fit.prefactor == pytest.approx(math.exp(icpt), rel=0.05)
    # the moment equations give hbar/(8 m lambda) for this noise, not the kick value
    assert math.exp(icpt) == pytest.approx(1 / 8, rel=1e-4)


def test_harmonic_is_not_exponential():
    r = run_ensemble(HARM, InitialDistribution.gaussian([0.0], [0.0], 0.3, 0.6), 2000, 20.0, 1e-2,
                     NoiseSpec(0.0))
    fit = exponential_rate_fit(r)
    assert not fit.exponential
    with pytest.raises(NonPositiveVariance):
        exponential_rate_fit(run_ensemble(HARM, ORIGIN, 10, 1.0, 0.1, NoiseSpec(1.0)))


def test_oracle_free_diffusion_linear():
    tr = covariance_ode_oracle(FREE, np.zeros((2, 2)), NoiseSpec(1.0, "all_on"), 3.0, 1e-2)
    np.testing.assert_allclose(tr.var_x[:, 0], 0.5 * tr.times, rtol=1e-12, atol=1e-15)
    assert not tr.var_p.any()


def test_oracle_harmonic_invariant_gaussian():
    tr = covariance_ode_oracle(HARM, np.diag([0.5, 0.5]), NoiseSpec(1.0), 10.0, 1e-2)
    np.testing.assert_allclose(tr.cov, np.broadcast_to(np.diag([0.5, 0.5]), tr.cov.shape), atol=1e-12)


def test_oracle_inverted_closed_form():
    tr = covariance_ode_oracle(INV, np.zeros((2, 2)), NoiseSpec(1.0), 5.0, 1e-3)
    np.testing.assert_allclose(tr.var_x[:, 0], 0.25 * np.sinh(2 * tr.times), rtol=1e-9, atol=1e-15)


def test_oracle_rejects_nonlinear():
    with pytest.raises(NonLinearModel):
        covariance_ode_oracle(builtin_model("pendulum", {"m": 1, "gl": 1}), np.zeros((2, 2)),
                              NoiseSpec(1.0), 1.0, 0.1)


def test_weak_order_sufficiency():
    spec = NoiseSpec(1.0)
    errs = []
    for dt in (2e-3, 1e-3):
        r = run_ensemble(INV, ORIGIN, 10_000, 2.0, dt, spec, n_intervals=4)
        o = covariance_ode_oracle(INV, np.zeros((2, 2)), spec, 2.0, dt, round(0.5 / dt))
        errs.append((r.var_x[-1, 0] - o.var_x[-1, 0], r.var_x_se[-1, 0]))
    assert abs(errs[0][0] - errs[1][0]) < 2 * max(errs[0][1], errs[1][1])
