from __future__ import annotations

import math

import numpy as np
import pytest

from stochmech.ensemble_stats import InitialDistribution, covariance_ode_oracle
from stochmech.errors import CFLViolation, MassOutsideDomain, StabilityViolation, TooFewSamples
from stochmech.fokker_planck import (
    DistributionGrid,
    MasterEqConfig,
    build_grid,
    coarsen,
    compare_histogram,
    diffusion_coefficients,
    diffusion_step,
    evolve_master_equation,
    gibbs_entropy,
    grid_variances,
    liouville_step,
    read_binary,
    stable_dt,
    write_binary,
    write_csv,
)
from stochmech.phase_core import builtin_model
from stochmech.sde_engine import NoiseSpec

FREE = builtin_model("free_particle", {"m": 1})
HARM = builtin_model("harmonic", {"m": 1, "omega": 1})
INV = builtin_model("inverted", {"m": 1, "lambda": 1})
PEND = builtin_model("pendulum", {"m": 1, "gl": 1})
BOX = (-4.0, 4.0, -4.0, 4.0)


def gauss(cx, cp, vx, vp):
    return InitialDistribution.gaussian([cx], [cp], vx, vp)


def uniform_grid(bounds, n, boundary=("periodic", "periodic")):
    x0, x1, p0, p1 = bounds
    return DistributionGrid(bounds, np.full((n, n), 1.0 / ((x1 - x0) * (p1 - p0))), boundary)


def test_build_grid_normalised():
    g = build_grid(BOX, (128, 96), gauss(0.5, -0.3, 0.2, 0.4))
    assert g.shape == (128, 96)
    assert abs(g.mass() - 1.0) < 1e-12
    mx, vx, mp, vp = grid_variances(g)
    assert mx == pytest.approx(0.5, abs=1e-3) and mp == pytest.approx(-0.3, abs=1e-3)
    assert vx == pytest.approx(0.2, rel=0.02) and vp == pytest.approx(0.4, rel=0.02)


def test_point_initial_condition_is_regularised():
    g = build_grid(BOX, (64, 64), InitialDistribution.point([0.0], [0.0]))
    assert g.flags["regularized_delta"]
    assert abs(g.mass() - 1.0) < 1e-12


def test_build_grid_errors():
    with pytest.raises(MassOutsideDomain):
        build_grid(BOX, (64, 64), gauss(3.9, 0.0, 0.5, 0.5))
    with pytest.raises(ValueError):
        build_grid(BOX, (8, 64), gauss(0, 0, 0.5, 0.5))


def test_harmonic_quarter_period_rotation():
    g = build_grid(BOX, (128, 128), gauss(1.5, 0.0, 0.1, 0.1))
    cfg = MasterEqConfig(hbar_eff=0.0, dt=0.01 * math.pi / 2, entropy_interval=math.pi / 2)
    res = evolve_master_equation(HARM, g, math.pi / 2, cfg)
    mx, vx, mp, vp = grid_variances(res.grid)
    assert mx == pytest.approx(0.0, abs=0.02)
    assert mp == pytest.approx(-1.5, abs=0.02)
    assert vx == pytest.approx(0.1, rel=0.1) and vp == pytest.approx(0.1, rel=0.1)


def test_free_shear():
    # var_x(t) = var_x + t^2 var_p / m^2 under free streaming
    g = build_grid((-6, 6, -3, 3), (192, 96), gauss(0.0, 0.0, 0.1, 0.2))
    cfg = MasterEqConfig(hbar_eff=0.0, dt=0.005, entropy_interval=1.0)
    res = evolve_master_equation(FREE, g, 2.0, cfg)
    _, vx, _, vp = grid_variances(res.grid)
    assert vx == pytest.approx(0.1 + 4 * 0.2, rel=0.03)
    assert vp == pytest.approx(0.2, rel=0.02)


def test_uniform_pendulum_density_is_invariant():
    g = uniform_grid((-math.pi, math.pi, -3.0, 3.0), 64)
    cfg = MasterEqConfig(hbar_eff=0.0, dt=0.01, entropy_interval=0.5)
    res = evolve_master_equation(PEND, g, 1.0, cfg)
    np.testing.assert_allclose(res.grid.rho, g.rho, rtol=1e-12)


def test_inverted_diffusion_coefficients():
    g = build_grid(BOX, (32, 32), gauss(0, 0, 0.5, 0.5))
    Dx, Dp = diffusion_coefficients(INV, g, MasterEqConfig(hbar_eff=1.0))
    np.testing.assert_allclose(Dx, 0.25)
    np.testing.assert_allclose(Dp, 0.25)


def test_gating_controls_diffusion():
    g = build_grid(BOX, (32, 32), gauss(0, 0, 0.5, 0.5))
    for model, cfg in [(HARM, MasterEqConfig(hbar_eff=1.0)),
                       (INV, MasterEqConfig(hbar_eff=0.0)),
                       (INV, MasterEqConfig(hbar_eff=1.0, gating="off"))]:
        out = diffusion_step(model, g, 0.01, cfg)
        np.testing.assert_array_equal(out.rho, g.rho)
    Dx, Dp = diffusion_coefficients(HARM, g, MasterEqConfig(hbar_eff=1.0, gating="all_on"))
    np.testing.assert_allclose(Dx, 0.25)
    assert not Dp.any()


def test_step_bound_errors():
    g = build_grid(BOX, (64, 64), gauss(0, 0, 0.5, 0.5))
    with pytest.raises(CFLViolation):
        liouville_step(HARM, g, 1.0)
    with pytest.raises(StabilityViolation):
        diffusion_step(INV, g, 1.0, MasterEqConfig(hbar_eff=1.0))
    with pytest.raises(CFLViolation):
        evolve_master_equation(HARM, g, 1.0, MasterEqConfig(hbar_eff=0.0, dt=1.0))
    cfg = MasterEqConfig(hbar_eff=1.0)
    dt = stable_dt(INV, g, cfg)
    MasterEqConfig(hbar_eff=1.0, dt=dt).validate(INV, g)


@pytest.mark.parametrize("limiter", ["upwind", "minmod", "van_leer"])
def test_mass_positivity_and_h_theorem(limiter):
    g = build_grid(BOX, (64, 64), gauss(0.0, 0.0, 0.3, 0.3))
    base = MasterEqConfig(hbar_eff=1.0, limiter=limiter, entropy_interval=0.05)
    cfg = MasterEqConfig(hbar_eff=1.0, limiter=limiter, entropy_interval=0.05,
                         dt=0.05 / math.ceil(0.05 / stable_dt(INV, g, base)))
    res = evolve_master_equation(INV, g, 1.0, cfg)
    assert res.max_mass_error < 1e-12
    assert res.min_density >= 0.0
    assert np.all(np.diff(res.entropy) >= -1e-9)
    assert abs(res.grid.mass() - 1.0) < 1e-13


def test_free_all_on_variance_matches_oracle():
    g = build_grid((-4, 4, -1, 1), (256, 256), gauss(0.0, 0.0, 0.05, 0.02))
    cfg0 = MasterEqConfig(hbar_eff=1.0, gating="all_on", entropy_interval=0.25)
    dt = 0.25 / math.ceil(0.25 / stable_dt(FREE, g, cfg0))
    res = evolve_master_equation(FREE, g, 1.0, MasterEqConfig(hbar_eff=1.0, gating="all_on",
                                                              dt=dt, entropy_interval=0.25))
    oracle = covariance_ode_oracle(FREE, np.diag([0.05, 0.02]), NoiseSpec(1.0, "all_on"), 1.0, 1e-3)
    _, vx, _, vp = grid_variances(res.grid)
    assert vx == pytest.approx(oracle.var_x[-1, 0], rel=0.02)
    assert vp == pytest.approx(oracle.var_p[-1, 0], rel=0.02)


def test_gibbs_entropy_uniform():
    g = uniform_grid((-3.0, 3.0, -3.0, 3.0), 32)
    assert gibbs_entropy(g) == pytest.approx(math.log(36.0), rel=1e-12)


def test_gibbs_entropy_gaussian_and_refinement():
    vx, vp = 0.3, 0.5
    exact = 1.0 + math.log(2 * math.pi * math.sqrt(vx * vp))
    errs = []
    for n in (32, 64, 128):
        errs.append(abs(gibbs_entropy(build_grid(BOX, (n, n), gauss(0, 0, vx, vp))) - exact))
    assert errs[-1] < 1e-3
    assert errs[0] > errs[1] > errs[2]


def test_compare_histogram(rng):
    g = build_grid(BOX, (32, 32), gauss(0.0, 0.0, 0.5, 0.5))
    pts = rng.normal(0.0, math.sqrt(0.5), size=(200_000, 2))
    assert compare_histogram(g, pts) < 0.02
    far = np.column_stack([np.full(5000, 3.5), np.full(5000, 3.5)])
    assert compare_histogram(g, far) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(TooFewSamples):
        compare_histogram(g, pts[:500])


def test_coarsen_preserves_mass():
    g = build_grid(BOX, (64, 64), gauss(0.3, 0.0, 0.5, 0.5))
    c = coarsen(g, 4)
    assert c.shape == (16, 16)
    assert c.mass() == pytest.approx(1.0, abs=1e-13)
    with pytest.raises(ValueError):
        coarsen(g, 5)


def test_binary_and_csv_round_trip(tmp_path):
    g = build_grid((-1.5, 2.5, -3.5, 1.5), (24, 40), gauss(0.5, -1.0, 0.2, 0.3))
    path = tmp_path / "snap.shfp"
    write_binary(g, path)
    back = read_binary(path)
    assert back.bounds == g.bounds
    np.testing.assert_array_equal(back.rho, g.rho)
    assert path.read_bytes()[:4] == b"SHFP"
    bad = tmp_path / "bad.shfp"
    bad.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(ValueError, match="magic"):
        read_binary(bad)
    csv = tmp_path / "snap.csv"
    write_csv(g, csv)
    data = np.loadtxt(csv, delimiter=",", skiprows=1)
    assert data.shape == (24 * 40, 3)
    np.testing.assert_array_equal(data[:, 2], g.rho.ravel())
    np.testing.assert_array_equal(data[:40, 0], g.x_centers[0])
