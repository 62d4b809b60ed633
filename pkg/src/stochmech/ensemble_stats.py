"""Monte Carlo ensembles, moment estimates and the variance-law checks.

Moments are reduced over the full ``(paths, samples)`` array with numpy's
fixed pairwise summation, so results do not depend on how the paths were
scheduled. Standard errors of variances use the fourth central moment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    AllPathsExcluded,
    InsufficientSamples,
    NonLinearModel,
    NonPositiveVariance,
    UnsupportedModel,
)
from .phase_core import HamiltonianModel, PhaseState, minimal_uncertainty_dispersions
from .sde_engine import _INIT_STREAM, NoiseSpec, _n_steps, path_generator, simulate_paths
from .stability import linearize

__all__ = [
    "InitialDistribution",
    "EnsembleResult",
    "SlopeFit",
    "RateFit",
    "CovarianceTrajectory",
    "run_ensemble",
    "kick_ensemble",
    "variance_slope",
    "exponential_rate_fit",
    "covariance_ode_oracle",
    "sample_every_for",
]

Z95 = 1.959963984540054


@dataclass(frozen=True)
class InitialDistribution:
    """Point or independent-Gaussian initial condition around ``center``."""

    kind: str
    center: PhaseState
    var_x: float | np.ndarray = 0.0
    var_p: float | np.ndarray = 0.0

    def __post_init__(self):
        if self.kind not in ("point", "gaussian"):
            raise ValueError(f"kind must be 'point' or 'gaussian', got {self.kind!r}")
        if np.any(np.asarray(self.var_x) < 0) or np.any(np.asarray(self.var_p) < 0):
            raise ValueError("initial variances must be >= 0")

    @classmethod
    def point(cls, x, p) -> "InitialDistribution":
        return cls("point", PhaseState(x, p))

    @classmethod
    def gaussian(cls, x, p, var_x, var_p) -> "InitialDistribution":
        return cls("gaussian", PhaseState(x, p), var_x, var_p)

    @property
    def n(self) -> int:
        return self.center.n

    def covariance(self) -> np.ndarray:
        """Population covariance in ``(x, p)`` ordering."""
        n = self.n
        if self.kind == "point":
            return np.zeros((2 * n, 2 * n))
        vx = np.broadcast_to(np.asarray(self.var_x, dtype=float), (n,))
        vp = np.broadcast_to(np.asarray(self.var_p, dtype=float), (n,))
        return np.diag(np.concatenate([vx, vp]))

    def sample(self, path_indices, master_seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Initial ``(x0, p0)`` rows; path ``i`` always draws the same values."""
        idx = np.asarray(path_indices).reshape(-1)
        n = self.n
        x0 = np.tile(self.center.x, (len(idx), 1))
        p0 = np.tile(self.center.p, (len(idx), 1))
        if self.kind == "point":
            return x0, p0
        sx = np.sqrt(np.broadcast_to(np.asarray(self.var_x, dtype=float), (n,)))
        sp = np.sqrt(np.broadcast_to(np.asarray(self.var_p, dtype=float), (n,)))
        z = np.empty((len(idx), 2 * n))
        for row, i in enumerate(idx):
            z[row] = path_generator(master_seed, int(i), _INIT_STREAM).standard_normal(2 * n)
        return x0 + sx * z[:, :n], p0 + sp * z[:, n:]


@dataclass(frozen=True)
class EnsembleResult:
    """Per-sample-time moment estimates with standard errors.

    Arrays of coordinate/momentum moments have shape ``(samples, n)``; energy
    arrays have shape ``(samples,)``. ``xs``/``ps`` keep the retained paths
    (``(N, samples, n)``) when requested, for influence-based error bars.
    """

    times: np.ndarray
    mean_x: np.ndarray
    mean_x_se: np.ndarray
    var_x: np.ndarray
    var_x_se: np.ndarray
    mean_p: np.ndarray
    mean_p_se: np.ndarray
    var_p: np.ndarray
    var_p_se: np.ndarray
    mean_E: np.ndarray
    mean_E_se: np.ndarray
    n_paths: int
    excluded: int
    spec: NoiseSpec
    model_name: str = ""
    xs: np.ndarray | None = None
    ps: np.ndarray | None = None

    def columns(self) -> dict[str, np.ndarray]:
        """Flat name -> column mapping (``var_x``, ``var_x_se``, ... per mode)."""
        n = self.mean_x.shape[1]
        cols: dict[str, np.ndarray] = {"time": self.times}
        for name in ("mean_x", "var_x", "mean_p", "var_p"):
            for i in range(n):
                sfx = "" if n == 1 else f"_{i}"
                cols[name + sfx] = getattr(self, name)[:, i]
                cols[name + sfx + "_se"] = getattr(self, name + "_se")[:, i]
        cols["mean_E"] = self.mean_E
        cols["mean_E_se"] = self.mean_E_se
        return cols


def _var_and_se(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Mean, unbiased variance and their standard errors along axis 0."""
    N = a.shape[0]
    # shift by the first path so identical paths give exactly zero spread
    shifted = a - a[0]
    offset = shifted.mean(axis=0)
    mean = a[0] + offset
    d = shifted - offset
    d2 = d * d
    m2 = d2.mean(axis=0)
    m4 = (d2 * d2).mean(axis=0)
    var = m2 * N / (N - 1)
    mean_se = np.sqrt(var / N)
    # Var(s^2) = (mu4 - sigma^4 (N-3)/(N-1)) / N
    var_se = np.sqrt(np.maximum(m4 - var * var * (N - 3) / (N - 1), 0.0) / N)
    return mean, mean_se, var, var_se


def sample_every_for(n_steps: int, n_intervals: int) -> int:
    """Largest stride ``<= n_steps // n_intervals`` that divides ``n_steps``."""
    if n_steps == 0:
        return 1
    s = max(1, n_steps // max(1, n_intervals))
    while n_steps % s:
        s -= 1
    return s


def _summarize(model, xs, ps, trunc, times, spec, keep_samples) -> EnsembleResult:
    keep = ~trunc
    excluded = int(trunc.sum())
    if not keep.any():
        raise AllPathsExcluded(f"all {len(trunc)} paths overflowed")
    if keep.sum() < 2:
        raise InsufficientSamples("fewer than two retained paths")
    xs, ps = xs[keep], ps[keep]
    mx, mx_se, vx, vx_se = _var_and_se(xs)
    mp, mp_se, vp, vp_se = _var_and_se(ps)
    E = model.energy(xs, ps)
    mE = E.mean(axis=0)
    mE_se = np.sqrt(E.var(axis=0, ddof=1) / E.shape[0])
    return EnsembleResult(
        times=times, mean_x=mx, mean_x_se=mx_se, var_x=vx, var_x_se=vx_se,
        mean_p=mp, mean_p_se=mp_se, var_p=vp, var_p_se=vp_se,
        mean_E=mE, mean_E_se=mE_se, n_paths=int(keep.sum()), excluded=excluded,
        spec=spec, model_name=model.name,
        xs=xs if keep_samples else None, ps=ps if keep_samples else None,
    )


def run_ensemble(model: HamiltonianModel, init: InitialDistribution, N: int, horizon: float,
                 dt: float, spec: NoiseSpec, scheme: str = "split_step",
                 n_intervals: int = 20, sample_every: int | None = None,
                 threads: int = 1, keep_samples: bool = True) -> EnsembleResult:
    """Simulate ``N`` paths and estimate moments at evenly spaced sample times.

    Truncated (overflowing) paths are excluded from every sample time and
    counted in ``excluded``.
    """
    if N < 2:
        raise InsufficientSamples("an ensemble needs N >= 2")
    if init.n != model.n:
        raise ValueError("initial distribution dimension does not match the model")
    n_steps = _n_steps(horizon, dt)
    every = sample_every or sample_every_for(n_steps, n_intervals)
    idx = np.arange(N)
    x0, p0 = init.sample(idx, spec.master_seed)
    if model.periodic:
        x0 = np.mod(x0 + math.pi, 2 * math.pi) - math.pi
    xs, ps, tr = simulate_paths(model, x0, p0, idx, horizon, dt, spec, scheme, every, threads)
    times = init.center.t + dt * every * np.arange(xs.shape[1])
    return _summarize(model, xs, ps, tr, times, spec, keep_samples)


def kick_ensemble(model: HamiltonianModel, hbar_eff: float, N: int, horizon: float, dt: float,
                  master_seed: int = 42, n_intervals: int = 20, sample_every: int | None = None,
                  threads: int = 1, keep_samples: bool = True) -> EnsembleResult:
    """Inverted oscillator released from minimal-uncertainty Gaussian dispersions
    and then propagated without any in-flight noise."""
    if model.name != "inverted":
        raise UnsupportedModel("kick_ensemble is defined for the inverted oscillator")
    disp = minimal_uncertainty_dispersions(model, hbar_eff)
    init = InitialDistribution.gaussian(np.zeros(model.n), np.zeros(model.n), disp.var_x, disp.var_p)
    spec = NoiseSpec(hbar_eff=hbar_eff, gating="off", master_seed=master_seed)
    return run_ensemble(model, init, N, horizon, dt, spec, "split_step", n_intervals,
                        sample_every, threads, keep_samples)


class SlopeFit(NamedTuple):
    slope: float
    intercept: float
    se: float
    ci_low: float
    ci_high: float

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


class RateFit(NamedTuple):
    rate: float
    prefactor: float
    rate_se: float
    prefactor_se: float
    ci_low: float
    ci_high: float
    r_squared: float
    exponential: bool  # False when the data do not look like exponential growth


def _ols_weights(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient vectors ``c, d`` with ``slope = c @ y`` and ``intercept = d @ y``."""
    tc = t - t.mean()
    c = tc / np.dot(tc, tc)
    d = 1.0 / len(t) - t.mean() * c
    return c, d


def _select(result: EnsembleResult, window):
    t = result.times
    if window is None:
        mask = np.ones(len(t), dtype=bool)
    else:
        lo, hi = window
        tol = 1e-9 * max(1.0, abs(hi))
        mask = (t >= lo - tol) & (t <= hi + tol)
    return mask


def variance_slope(result: EnsembleResult, mode: int = 0, window=None) -> SlopeFit:
    """Least-squares slope of ``var_x`` against time with a 95% interval.

    When the ensemble kept its paths, the standard error is the spread of the
    per-path influence values of the slope estimator, which accounts for the
    correlation between sample times along each path. Otherwise the per-time
    standard errors are combined as if independent.
    """
    mask = _select(result, window)
    t = result.times[mask]
    if len(t) < 3:
        raise InsufficientSamples("need at least three sample times for a slope")
    y = result.var_x[mask, mode]
    c, d = _ols_weights(t)
    slope = float(c @ y)
    intercept = float(d @ y)
    if result.xs is not None:
        X = result.xs[:, mask, mode]
        N = X.shape[0]
        dev = X - X.mean(axis=0)
        z = (dev * dev) @ c * (N / (N - 1))
        se = float(z.std(ddof=1) / math.sqrt(N))
    else:
        se = float(math.sqrt(np.sum((c * result.var_x_se[mask, mode]) ** 2)))
    return SlopeFit(slope, intercept, se, slope - Z95 * se, slope + Z95 * se)


def exponential_rate_fit(result: EnsembleResult, mode: int = 0, window=None) -> RateFit:
    """Fit ``var_x(t) = prefactor * exp(rate * t)`` by regressing ``ln var_x`` on ``t``."""
    mask = _select(result, window)
    t = result.times[mask]
    if len(t) < 3:
        raise InsufficientSamples("need at least three sample times for a rate")
    v = result.var_x[mask, mode]
    if np.any(~(v > 0)):
        raise NonPositiveVariance("var_x is not strictly positive on the fit window")
    y = np.log(v)
    c, d = _ols_weights(t)
    rate = float(c @ y)
    icpt = float(d @ y)
    resid = y - (icpt + rate * t)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 0.0
    if result.xs is not None:
        X = result.xs[:, mask, mode]
        N = X.shape[0]
        dev = X - X.mean(axis=0)
        # delta method: d ln v = dv / v
        infl = (dev * dev) / v * (N / (N - 1))
        rate_se = float((infl @ c).std(ddof=1) / math.sqrt(N))
        icpt_se = float((infl @ d).std(ddof=1) / math.sqrt(N))
    else:
        rel = result.var_x_se[mask, mode] / v
        rate_se = float(math.sqrt(np.sum((c * rel) ** 2)))
        icpt_se = float(math.sqrt(np.sum((d * rel) ** 2)))
    pref = math.exp(icpt)
    exponential = bool(rate > 0 and rate - Z95 * rate_se > 0 and r2 >= 0.95)
    return RateFit(rate, pref, rate_se, pref * icpt_se, rate - Z95 * rate_se,
                   rate + Z95 * rate_se, r2, exponential)


@dataclass(frozen=True)
class CovarianceTrajectory:
    """Covariance matrices in ``(x, p)`` ordering at ``times``."""

    times: np.ndarray
    cov: np.ndarray  # (samples, 2n, 2n)

    @property
    def var_x(self) -> np.ndarray:
        n = self.cov.shape[1] // 2
        return np.stack([np.diagonal(self.cov, axis1=1, axis2=2)[:, i] for i in range(n)], axis=1)

    @property
    def var_p(self) -> np.ndarray:
        n = self.cov.shape[1] // 2
        return np.stack([np.diagonal(self.cov, axis1=1, axis2=2)[:, n + i] for i in range(n)], axis=1)


def _diffusion_matrix(model: HamiltonianModel, spec: NoiseSpec, curvature: np.ndarray) -> np.ndarray:
    n = model.n
    q = np.zeros(2 * n)
    if spec.noiseless:
        return np.diag(q)
    hbar = spec.hbar_eff
    for i in range(n):
        m = model.masses[i]
        unstable = -curvature[i] > spec.rate_tolerance
        if unstable or spec.gating == "all_on":
            q[i] = hbar / (2.0 * m)
        if unstable:
            lam2 = -curvature[i] / m
            q[n + i] = hbar * m * lam2 / 2.0
    return np.diag(q)


def covariance_ode_oracle(model: HamiltonianModel, init_cov, spec: NoiseSpec, horizon: float,
                          dt: float, sample_every: int = 1) -> CovarianceTrajectory:
    """RK4 solution of ``dS/dt = M S + S M^T + Q`` for a linear model.

    ``M`` is the variational matrix on ``(x, p)`` and ``Q`` the diagonal
    matrix of squared noise amplitudes. This is the exact moment equation of
    the linear SDE, independent of any path simulation.
    """
    if not model.is_linear:
        raise NonLinearModel(f"covariance equations are closed only for linear models, not {model.name!r}")
    n = model.n
    S = np.array(init_cov, dtype=float)
    if S.shape != (2 * n, 2 * n):
        raise ValueError(f"initial covariance must be {2 * n}x{2 * n}")
    origin = PhaseState(np.zeros(n), np.zeros(n))
    M = linearize(model, origin).xp()
    Q = _diffusion_matrix(model, spec, model.curvature(np.zeros(n)))
    n_steps = _n_steps(horizon, dt)

    def rhs(S):
        MS = M @ S
        return MS + MS.T + Q

    out = [S.copy()]
    for k in range(n_steps):
        k1 = rhs(S)
        k2 = rhs(S + 0.5 * dt * k1)
        k3 = rhs(S + 0.5 * dt * k2)
        k4 = rhs(S + dt * k3)
        S = S + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if (k + 1) % sample_every == 0:
            out.append(S.copy())
    times = dt * sample_every * np.arange(len(out))
    return CovarianceTrajectory(times, np.array(out))
