"""End-to-end acceptance checks.

Each test records one PASS/FAIL line; the lines are printed together in the
"acceptance criteria" section of the pytest terminal summary. Run just these
with ``pytest tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from stochmech.ensemble_stats import InitialDistribution, covariance_ode_oracle, run_ensemble
from stochmech.phase_core import PhaseState, builtin_model, minimal_uncertainty_dispersions
from stochmech.scenario_cli import apply_overrides, builtin_config, builtin_text, parse_config, run_scenario
from stochmech.sde_engine import NoiseSpec, integrate_path, step_symplectic_deterministic
from stochmech.stability import ModeCase, VariationalMatrix, classify_modes, lyapunov_spectrum

pytestmark = pytest.mark.slow

EPS = np.finfo(float).eps


def _head(summary, name):
    for h in summary.headline:
        if h["name"] == name:
            return h
    raise KeyError(name)


def test_01_free_diffusion_law(tmp_path, acceptance_report):
    s1 = run_scenario(builtin_config("free_diffusion"), tmp_path / "m1")
    text = builtin_text("free_diffusion").replace("m = 1.0", "m = 2.0")
    s2 = run_scenario(parse_config(text, "free_diffusion_m2"), tmp_path / "m2")
    h1, h2 = _head(s1, "var_x_slope"), _head(s2, "var_x_slope")
    ok = s1.passed and s2.passed and h1["verdict"] == h2["verdict"] == "PASS"
    acceptance_report(1, "free-particle diffusion law", ok,
                      f"slope m=1 {h1['value']:.4f}+/-{h1['uncertainty']:.4f} vs 0.5, "
                      f"m=2 {h2['value']:.4f}+/-{h2['uncertainty']:.4f} vs 0.25")
    assert ok


def test_02_universe_age_drift(tmp_path, acceptance_report):
    t0 = time.perf_counter()
    s = run_scenario(builtin_config("free_mass_universe_age"), tmp_path)
    wall = time.perf_counter() - t0
    h = s.headline[0]
    ok = s.passed and abs(h["value"] - 1.47e-5) / 1.47e-5 < 5e-3 and wall < 1.0
    acceptance_report(2, "rms drift of a free mass over the age of the universe", ok,
                      f"{h['value']:.4e} cm vs 1.47e-05, {wall:.3f} s")
    assert ok


def test_03_minimal_uncertainty(acceptance_report):
    rng = np.random.default_rng(3)
    worst_e = worst_p = 0.0
    for _ in range(100):
        m, w, hbar = np.exp(rng.uniform(-3, 3, size=3))
        d = minimal_uncertainty_dispersions(builtin_model("harmonic", {"m": m, "omega": w}), hbar)
        worst_e = max(worst_e, abs(d.mean_energy - hbar * w / 2) / (hbar * w / 2))
        worst_p = max(worst_p, abs(d.var_x * d.var_p - hbar**2 / 4) / (hbar**2 / 4))
    ok = worst_e <= 2 * EPS and worst_p <= 2 * EPS
    acceptance_report(3, "minimal-uncertainty dispersions", ok,
                      f"max rel error <E> {worst_e:.1e}, product {worst_p:.1e} over 100 draws")
    assert ok


def test_04_exponential_trigger(tmp_path, acceptance_report):
    s = run_scenario(builtin_config("inverted_trigger"), tmp_path)
    v, r = _head(s, "var_x(t=5)"), _head(s, "var_x_rate")
    exact = math.exp(10) / 4
    ok = (abs(v["value"] - exact) / exact < 0.05 and abs(r["value"] - 2.0) / 2.0 < 0.02
          and _head(s, "excluded_fraction")["verdict"] == "PASS")
    acceptance_report(4, "kick-ensemble exponential trigger", ok,
                      f"var_x(5) {v['value']:.1f} vs {exact:.1f}, rate {r['value']:.5f} vs 2")
    assert ok
    assert s.passed


def test_05_sde_matches_moment_equations(acceptance_report):
    models = {
        "free_particle": builtin_model("free_particle", {"m": 1.0}),
        "harmonic": builtin_model("harmonic", {"m": 1.0, "omega": 1.0}),
        "inverted": builtin_model("inverted", {"m": 1.0, "lambda": 1.0}),
    }
    init = InitialDistribution.gaussian([0.0], [0.0], 0.5, 0.5)
    worst, failures = 0.0, []
    for name, model in models.items():
        for gating in ("unstable_only", "all_on"):
            spec = NoiseSpec(1.0, gating, master_seed=42)
            res = run_ensemble(model, init, 10_000, 2.0, 1e-3, spec, n_intervals=5)
            oracle = covariance_ode_oracle(model, init.covariance(), spec, 2.0, 1e-3, 400)
            np.testing.assert_allclose(res.times, oracle.times, rtol=1e-12)
            for var, se, ref in ((res.var_x, res.var_x_se, oracle.var_x),
                                 (res.var_p, res.var_p_se, oracle.var_p)):
                z = np.abs(var[1:, 0] - ref[1:, 0]) / se[1:, 0]
                worst = max(worst, float(z.max()))
                if np.any(z > 3.0):
                    failures.append(f"{name}/{gating}")
    ok = not failures
    acceptance_report(5, "SDE ensembles against covariance moment equations", ok,
                      f"60 comparisons, largest deviation {worst:.2f} SE"
                      + (f", failing {sorted(set(failures))}" if failures else ""))
    assert ok


def test_06_classification_table(acceptance_report):
    rng = np.random.default_rng(6)
    worst = 0.0
    ok = True
    for _ in range(100):
        m, w, lam = np.exp(rng.uniform(-2, 2, size=3))
        for a, case, rate in ((0.0, ModeCase.FREE_DRIFT, 0.0),
                              (-m * w * w, ModeCase.OSCILLATORY, w),
                              (m * lam * lam, ModeCase.UNSTABLE, lam)):
            rec = classify_modes(VariationalMatrix([[0.0, a], [1.0 / m, 0.0]]))[0]
            ok &= rec.case is case
            err = abs(rec.rate - rate) / rate if rate else abs(rec.rate)
            worst = max(worst, err)
    ok = bool(ok and worst <= 2 * EPS)
    acceptance_report(6, "classification of the three normal forms", ok,
                      f"cases a/b/c correct on 100 draws, max rel rate error {worst:.1e}")
    assert ok


def test_07_lyapunov_and_ks(acceptance_report):
    parts, ok = [], True
    for lam in (0.5, 1.0, 2.0):
        rep = lyapunov_spectrum(builtin_model("inverted", {"m": 1.0, "lambda": lam}),
                                PhaseState([0.1], [0.0]), 20.0, 1e-3, 0.1)
        err = np.max(np.abs(rep.spectrum - np.array([lam, -lam]))) / lam
        ok &= bool(rep.valid and err < 0.01 and abs(rep.ks_entropy - rep.spectrum[0]) == 0.0)
        parts.append(f"inverted lambda={lam:g} rel err {err:.1e}")
    for name, params in (("harmonic", {"m": 1.0, "omega": 1.0}), ("free_particle", {"m": 1.0})):
        rep = lyapunov_spectrum(builtin_model(name, params), PhaseState([0.5], [0.3]), 20.0, 1e-3, 0.1)
        big = float(np.max(np.abs(rep.spectrum)))
        ok &= bool(big < 1e-3 and rep.ks_entropy == 0.0)
        parts.append(f"{name} max|l| {big:.1e} h={rep.ks_entropy:g}")
    acceptance_report(7, "Lyapunov spectrum and KS entropy", ok, "; ".join(parts))
    assert ok


def test_08_classical_limit(tmp_path, acceptance_report):
    models = [builtin_model(n, p) for n, p in (
        ("free_particle", {"m": 1.0}), ("harmonic", {"m": 1.0, "omega": 1.0}),
        ("inverted", {"m": 1.0, "lambda": 1.0}), ("pendulum", {"m": 1.0, "gl": 1.0}),
        ("double_well", {"m": 1.0, "depth": 1.0, "a": 1.0}))]
    identical = True
    for model in models:
        s = PhaseState([0.4], [-0.3])
        ref = [s]
        for _ in range(500):
            s = step_symplectic_deterministic(model, s, 1e-3)
            ref.append(s)
        xs = np.array([r.x for r in ref])
        ps = np.array([r.p for r in ref])
        for scheme in ("euler_maruyama", "heun", "split_step"):
            tr = integrate_path(model, ref[0], 0.5, 1e-3, NoiseSpec(0.0, "all_on", master_seed=9), scheme)
            identical &= bool(np.array_equal(tr.x, xs) and np.array_equal(tr.p, ps))
    s = run_scenario(builtin_config("liouville_limit"), tmp_path)
    coarse, fine = _head(s, "entropy_drift")["value"], _head(s, "entropy_drift_refined")["value"]
    ok = identical and fine < coarse and s.passed
    acceptance_report(8, "hbar -> 0 limit", ok,
                      f"noiseless SDE == leapfrog bitwise: {identical}; entropy drift "
                      f"{coarse:.2e} at 128^2 -> {fine:.2e} at 256^2")
    assert ok


def test_09_grid_matches_paths(tmp_path, acceptance_report):
    vals, ok = [], True
    for name in ("grid_vs_paths_free", "grid_vs_paths_inverted"):
        s = run_scenario(builtin_config(name), tmp_path / name)
        h = _head(s, "tv_distance_64x64")
        ok &= bool(h["value"] < 0.05 and s.passed)
        vals.append(f"{name.rsplit('_', 1)[1]} TV {h['value']:.4f} (sampling floor {h['uncertainty']:.4f})")
    acceptance_report(9, "master equation against 1e5-path SDE histograms", ok, ", ".join(vals))
    assert ok


def test_10_pendulum_h_theorem(tmp_path, acceptance_report):
    t0 = time.perf_counter()
    s = run_scenario(builtin_config("pendulum_relaxation"), tmp_path)
    wall = time.perf_counter() - t0
    dS = _head(s, "entropy_min_increment")["value"]
    stat = _head(s, "l1_rate_final")["verdict"] == "PASS"
    ok = s.passed and dS >= -1e-9 and stat and wall <= 600
    acceptance_report(10, "pendulum H-theorem and relaxation", ok,
                      f"min dS {dS:.2e}, stationary at t={_head(s, 'final_time')['value']:g}, "
                      f"{wall:.0f} s")
    assert ok


def test_11_reproducible_across_threads(tmp_path, acceptance_report):
    texts = {"free_diffusion": builtin_config("free_diffusion"),
             "kick": parse_config(builtin_text("inverted_trigger").replace("N = 100000", "N = 5000")
                                  + "N_continuous = 5000\n", "kick")}
    same = True
    for key, c in texts.items():
        outs = []
        for threads in (1, 3):
            d = tmp_path / f"{key}_{threads}"
            run_scenario(apply_overrides(c, threads=threads), d)
            outs.append({f: (d / f).read_bytes() for f in ("summary.json", "timeseries.csv")})
        same &= outs[0] == outs[1]
    acceptance_report(11, "byte-identical outputs for 1 and 3 threads", same,
                      "ensemble and kick-ensemble scenarios, summary.json and timeseries.csv")
    assert same
