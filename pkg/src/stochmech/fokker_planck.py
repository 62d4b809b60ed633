"""Phase-space master equation for one degree of freedom.

    d rho/dt + {rho, H} = d/dx (D_x d rho/dx) + d/dp (D_p d rho/dp)

Advection follows the Hamiltonian velocity field ``(dH/dp, -dH/dx)`` with a
conservative, flux-limited upwind finite-volume scheme, dimensionally split.
Because ``dH/dp`` depends only on ``p`` and ``dH/dx`` only on ``x``, every
sweep is a constant-velocity advection along grid lines. Diffusion is
explicit and conservative with ``D_x = hbar/4m`` and
``D_p = hbar * max(-d2H/dx2, 0) / 4`` on unstable cells (``D_x`` also on stable
cells when gating is ``all_on``). The two parts are combined by Strang
splitting.

Grids store densities per unit phase-space area with shape ``(n_x, n_p)``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import (
    CFLViolation,
    DimensionMismatch,
    MassOutsideDomain,
    StabilityViolation,
    TooFewSamples,
)
from .phase_core import HamiltonianModel, PhaseState
from .stability import DEFAULT_RATE_TOLERANCE

__all__ = [
    "DistributionGrid",
    "MasterEqConfig",
    "MasterEqResult",
    "build_grid",
    "liouville_step",
    "diffusion_step",
    "diffusion_coefficients",
    "evolve_master_equation",
    "gibbs_entropy",
    "compare_histogram",
    "coarsen",
    "grid_variances",
    "stable_dt",
    "write_csv",
    "write_binary",
    "read_binary",
]

BOUNDARIES = ("periodic", "zero_flux")
MAGIC = b"SHFP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII4d")


@dataclass(frozen=True)
class DistributionGrid:
    """Cell-averaged density on ``[x_min, x_max] x [p_min, p_max]``."""

    bounds: tuple[float, float, float, float]
    rho: np.ndarray
    boundary: tuple[str, str] = ("zero_flux", "zero_flux")
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        x0, x1, p0, p1 = (float(b) for b in self.bounds)
        if not (x1 > x0 and p1 > p0):
            raise ValueError("bounds must satisfy x_min < x_max and p_min < p_max")
        rho = np.array(self.rho, dtype=float)
        if rho.ndim != 2:
            raise DimensionMismatch("rho must be a 2-d array (n_x, n_p)")
        for kind in self.boundary:
            if kind not in BOUNDARIES:
                raise ValueError(f"boundary kind must be one of {BOUNDARIES}, got {kind!r}")
        object.__setattr__(self, "bounds", (x0, x1, p0, p1))
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "boundary", tuple(self.boundary))

    @property
    def shape(self) -> tuple[int, int]:
        return self.rho.shape

    @property
    def dx(self) -> float:
        return (self.bounds[1] - self.bounds[0]) / self.rho.shape[0]

    @property
    def dp(self) -> float:
        return (self.bounds[3] - self.bounds[2]) / self.rho.shape[1]

    @property
    def cell_area(self) -> float:
        return self.dx * self.dp

    @property
    def x_centers(self) -> np.ndarray:
        return self.bounds[0] + (np.arange(self.rho.shape[0]) + 0.5) * self.dx

    @property
    def p_centers(self) -> np.ndarray:
        return self.bounds[2] + (np.arange(self.rho.shape[1]) + 0.5) * self.dp

    def mass(self) -> float:
        return float(self.rho.sum() * self.cell_area)

    def with_rho(self, rho: np.ndarray) -> "DistributionGrid":
        return replace(self, rho=rho)


def _cell_masses(edges: np.ndarray, mean: float, var: float, period: float | None) -> np.ndarray:
    """Normal probability mass of each cell between consecutive ``edges``."""
    s = math.sqrt(var)
    erf = np.vectorize(math.erf)
    shifts = [0.0]
    if period is not None:
        k = int(math.ceil(8 * s / period)) + 1
        shifts = [j * period for j in range(-k, k + 1)]
    cdf = np.zeros_like(edges)
    for sh in shifts:
        cdf += 0.5 * (1.0 + erf((edges - mean - sh) / (s * math.sqrt(2.0))))
    return np.diff(cdf)


def build_grid(bounds, resolution, init, boundary=("zero_flux", "zero_flux")) -> DistributionGrid:
    """Discretise an initial distribution (see ``ensemble_stats.InitialDistribution``).

    Gaussian initial conditions are integrated exactly over each cell. A point
    initial condition is replaced by a Gaussian whose standard deviation is
    two cells per axis; the grid's ``flags`` record this.
    """
    n_x, n_p = (int(r) for r in resolution)
    if n_x < 16 or n_p < 16:
        raise ValueError("resolution must be at least 16 per axis")
    if init.n != 1:
        raise DimensionMismatch("phase-space grids describe one degree of freedom")
    x0, x1, p0, p1 = (float(b) for b in bounds)
    dx, dp = (x1 - x0) / n_x, (p1 - p0) / n_p
    flags = {}
    cx, cp = float(init.center.x[0]), float(init.center.p[0])
    if init.kind == "point":
        vx, vp = (2 * dx) ** 2, (2 * dp) ** 2
        flags["regularized_delta"] = True
        flags["regularization_sigma"] = (2 * dx, 2 * dp)
    else:
        vx = float(np.asarray(init.var_x).reshape(-1)[0])
        vp = float(np.asarray(init.var_p).reshape(-1)[0])
        if vx <= 0 or vp <= 0:
            raise ValueError("gaussian initial variances must be > 0 on a grid")
    per_x = (x1 - x0) if boundary[0] == "periodic" else None
    per_p = (p1 - p0) if boundary[1] == "periodic" else None
    wx = _cell_masses(x0 + dx * np.arange(n_x + 1), cx, vx, per_x)
    wp = _cell_masses(p0 + dp * np.arange(n_p + 1), cp, vp, per_p)
    inside = float(wx.sum() * wp.sum())
    if inside < 0.999:
        raise MassOutsideDomain(f"only {inside:.6f} of the initial mass lies inside the domain")
    rho = np.outer(wx, wp)
    rho /= rho.sum() * dx * dp
    return DistributionGrid((x0, x1, p0, p1), rho, tuple(boundary), flags)


@dataclass(frozen=True)
class MasterEqConfig:
    """Settings of a master-equation run.

    ``dt`` must satisfy the advective CFL bound and the explicit diffusion
    bound of the grid it is used with; :meth:`validate` (called by every
    step function) checks both. ``strang=False`` falls back to first-order
    Lie splitting.
    """

    hbar_eff: float = 1.0
    gating: str = "unstable_only"
    dt: float = 1e-3
    strang: bool = True
    entropy_interval: float = 0.1
    limiter: str = "van_leer"
    stationarity_threshold: float = 1e-6
    stop_at_stationarity: bool = False
    rate_tolerance: float = DEFAULT_RATE_TOLERANCE

    def __post_init__(self):
        if not self.hbar_eff >= 0:
            raise ValueError("hbar_eff must be >= 0")
        if self.gating not in kernels.GATINGS:
            raise ValueError(f"gating must be one of {tuple(kernels.GATINGS)}")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.limiter not in kernels.LIMITERS:
            raise ValueError(f"limiter must be one of {tuple(kernels.LIMITERS)}")
        if not self.entropy_interval > 0:
            raise ValueError("entropy_interval must be > 0")

    def validate(self, model: HamiltonianModel, grid: DistributionGrid) -> None:
        _check_cfl(model, grid, self.dt)
        Dx, Dp = diffusion_coefficients(model, grid, self)
        _check_diffusion(grid, Dx, Dp, self.dt)


def _velocities(model: HamiltonianModel, grid: DistributionGrid) -> tuple[np.ndarray, np.ndarray]:
    vx = model.grad_p(grid.p_centers[:, None])[:, 0]
    vp = -model.grad_x(grid.x_centers[:, None])[:, 0]
    return vx, vp


def _check_model(model: HamiltonianModel) -> None:
    if model.n != 1:
        raise DimensionMismatch("the master-equation solver handles one degree of freedom")


def _check_cfl(model, grid, dt) -> None:
    vx, vp = _velocities(model, grid)
    cfl = max(np.abs(vx).max() * dt / grid.dx, np.abs(vp).max() * dt / grid.dp)
    if cfl > 1.0:
        raise CFLViolation(f"CFL number {cfl:.3f} exceeds 1 (dt={dt})")


def _check_diffusion(grid, Dx, Dp, dt) -> None:
    nu = dt * (2 * Dx.max() / grid.dx**2 + 2 * Dp.max() / grid.dp**2)
    if nu > 1.0:
        raise StabilityViolation(f"explicit diffusion number {nu:.3f} exceeds 1 (dt={dt})")


def stable_dt(model: HamiltonianModel, grid: DistributionGrid, config: MasterEqConfig,
              safety: float = 0.9) -> float:
    """Largest step allowed by both the CFL and the diffusion bounds, times ``safety``."""
    vx, vp = _velocities(model, grid)
    rate = max(np.abs(vx).max() / grid.dx, np.abs(vp).max() / grid.dp)
    Dx, Dp = diffusion_coefficients(model, grid, config)
    rate = max(rate, 2 * Dx.max() / grid.dx**2 + 2 * Dp.max() / grid.dp**2)
    return safety / rate if rate > 0 else float("inf")


def diffusion_coefficients(model: HamiltonianModel, grid: DistributionGrid,
                           config: MasterEqConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-column ``(D_x, D_p)``; both depend on ``x`` only."""
    _check_model(model)
    n_x = grid.shape[0]
    if config.gating == "off" or config.hbar_eff == 0:
        return np.zeros(n_x), np.zeros(n_x)
    m = model.masses[0]
    curv = model.curvature(grid.x_centers[:, None])[:, 0]
    unstable = -curv > config.rate_tolerance
    Dx = np.where(unstable | (config.gating == "all_on"), config.hbar_eff / (4.0 * m), 0.0)
    Dp = np.where(unstable, config.hbar_eff * np.maximum(-curv, 0.0) / 4.0, 0.0)
    return Dx, Dp


def _advect(grid, vx, vp, dt, axis, limiter):
    if axis == 0:
        return kernels.advect_lines(grid.rho, vx, dt, grid.dx, 0,
                                    grid.boundary[0] == "periodic", limiter)
    return kernels.advect_lines(grid.rho, vp, dt, grid.dp, 1,
                                grid.boundary[1] == "periodic", limiter)


def liouville_step(model: HamiltonianModel, grid: DistributionGrid, dt: float,
                   limiter: str = "van_leer") -> DistributionGrid:
    """Advect by the Hamiltonian flow for ``dt`` (x half sweep, p sweep, x half sweep)."""
    _check_model(model)
    _check_cfl(model, grid, dt)
    lim = kernels.LIMITERS[limiter]
    vx, vp = _velocities(model, grid)
    g = grid.with_rho(_advect(grid, vx, vp, 0.5 * dt, 0, lim))
    g = g.with_rho(_advect(g, vx, vp, dt, 1, lim))
    return g.with_rho(_advect(g, vx, vp, 0.5 * dt, 0, lim))


def diffusion_step(model: HamiltonianModel, grid: DistributionGrid, dt: float,
                   config: MasterEqConfig) -> DistributionGrid:
    Dx, Dp = diffusion_coefficients(model, grid, config)
    _check_diffusion(grid, Dx, Dp, dt)
    if not (Dx.any() or Dp.any()):
        return grid
    rho = kernels.diffuse(grid.rho, Dx, Dp, dt, grid.dx, grid.dp,
                          grid.boundary[0] == "periodic", grid.boundary[1] == "periodic")
    return grid.with_rho(rho)


def gibbs_entropy(grid: DistributionGrid) -> float:
    """``-sum rho ln rho dx dp`` with ``0 ln 0 = 0``."""
    r = grid.rho
    pos = r > 0
    return float(-np.sum(r[pos] * np.log(r[pos])) * grid.cell_area)


@dataclass(frozen=True)
class MasterEqResult:
    grid: DistributionGrid
    times: np.ndarray
    entropy: np.ndarray
    l1_rate: np.ndarray  # L1 change per unit time over each sampling interval (NaN first)
    stationary: bool
    stationary_time: float | None
    min_density: float
    max_mass_error: float


def evolve_master_equation(model: HamiltonianModel, grid: DistributionGrid, horizon: float,
                           config: MasterEqConfig, callback=None) -> MasterEqResult:
    """Strang-split evolution up to ``horizon``.

    Each step is ``X(dt/2) P(dt/2) D(dt) P(dt/2) X(dt/2)``. The Gibbs entropy and
    the L1 change rate are sampled every ``entropy_interval``; the run is
    flagged stationary once that rate drops below
    ``config.stationarity_threshold`` (and stops there when
    ``stop_at_stationarity`` is set). Round-off mass drift is removed after
    every step.
    """
    _check_model(model)
    config.validate(model, grid)
    dt = config.dt
    n_steps = int(round(horizon / dt))
    per_sample = max(1, int(round(config.entropy_interval / dt)))
    lim = kernels.LIMITERS[config.limiter]
    vx, vp = _velocities(model, grid)
    Dx, Dp = diffusion_coefficients(model, grid, config)
    diffusing = bool(Dx.any() or Dp.any())
    px = grid.boundary[0] == "periodic"
    pp = grid.boundary[1] == "periodic"
    area = grid.cell_area
    rho = grid.rho.copy()
    times = [0.0]
    entropy = [gibbs_entropy(grid)]
    l1 = [float("nan")]
    last = rho.copy()
    stationary, t_stat = False, None
    min_rho, max_err = float(rho.min()), 0.0
    adv = kernels.advect_lines
    for k in range(n_steps):
        if config.strang:
            rho = adv(rho, vx, 0.5 * dt, grid.dx, 0, px, lim)
            rho = adv(rho, vp, 0.5 * dt, grid.dp, 1, pp, lim)
            if diffusing:
                rho = kernels.diffuse(rho, Dx, Dp, dt, grid.dx, grid.dp, px, pp)
            rho = adv(rho, vp, 0.5 * dt, grid.dp, 1, pp, lim)
            rho = adv(rho, vx, 0.5 * dt, grid.dx, 0, px, lim)
        else:
            rho = adv(rho, vx, dt, grid.dx, 0, px, lim)
            rho = adv(rho, vp, dt, grid.dp, 1, pp, lim)
            if diffusing:
                rho = kernels.diffuse(rho, Dx, Dp, dt, grid.dx, grid.dp, px, pp)
        mass = rho.sum() * area
        max_err = max(max_err, abs(mass - 1.0))
        rho /= mass
        if (k + 1) % per_sample == 0 or k + 1 == n_steps:
            t = (k + 1) * dt
            min_rho = min(min_rho, float(rho.min()))
            g = grid.with_rho(rho)
            times.append(t)
            entropy.append(gibbs_entropy(g))
            rate = float(np.abs(rho - last).sum() * area / (t - times[-2]))
            l1.append(rate)
            last = rho.copy()
            if callback is not None:
                callback(t, g)
            if not stationary and rate < config.stationarity_threshold:
                stationary, t_stat = True, t
                if config.stop_at_stationarity:
                    break
    return MasterEqResult(
        grid=grid.with_rho(rho), times=np.array(times), entropy=np.array(entropy),
        l1_rate=np.array(l1), stationary=stationary, stationary_time=t_stat,
        min_density=min_rho, max_mass_error=max_err,
    )


def coarsen(grid: DistributionGrid, factor: int) -> DistributionGrid:
    """Merge ``factor x factor`` blocks of cells (mass preserving)."""
    n_x, n_p = grid.shape
    if n_x % factor or n_p % factor:
        raise ValueError("factor must divide both grid dimensions")
    r = grid.rho.reshape(n_x // factor, factor, n_p // factor, factor).mean(axis=(1, 3))
    return DistributionGrid(grid.bounds, r, grid.boundary, dict(grid.flags))


def _as_points(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        pts = np.asarray(samples, dtype=float)
    else:
        seq = list(samples)
        if seq and isinstance(seq[0], PhaseState):
            pts = np.array([[s.x[0], s.p[0]] for s in seq])
        else:
            pts = np.asarray(seq, dtype=float)
    return pts.reshape(-1, 2)


def compare_histogram(grid: DistributionGrid, samples: Sequence[PhaseState] | np.ndarray) -> float:
    """Total variation distance between the grid and the histogram of ``samples``
    binned on the grid's cells. Samples outside the domain count as mismatch."""
    pts = _as_points(samples)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    N = len(pts)
    x0, x1, p0, p1 = grid.bounds
    xs, ps = pts[:, 0], pts[:, 1]
    if grid.boundary[0] == "periodic":
        xs = x0 + np.mod(xs - x0, x1 - x0)
    if grid.boundary[1] == "periodic":
        ps = p0 + np.mod(ps - p0, p1 - p0)
    inside = (xs >= x0) & (xs < x1) & (ps >= p0) & (ps < p1)
    if inside.sum() < 1000:
        raise TooFewSamples(f"need at least 1000 samples inside the domain, got {int(inside.sum())}")
    n_x, n_p = grid.shape
    ix = np.minimum(((xs[inside] - x0) / grid.dx).astype(np.int64), n_x - 1)
    ip = np.minimum(((ps[inside] - p0) / grid.dp).astype(np.int64), n_p - 1)
    counts = np.bincount(ix * n_p + ip, minlength=n_x * n_p).reshape(n_x, n_p)
    q = grid.rho * grid.cell_area
    return float(0.5 * np.abs(q - counts / N).sum())


def grid_variances(grid: DistributionGrid) -> tuple[float, float, float, float]:
    """``(mean_x, var_x, mean_p, var_p)`` of the cell-centred density."""
    w = grid.rho * grid.cell_area
    w = w / w.sum()
    X, P = grid.x_centers[:, None], grid.p_centers[None, :]
    mx, mp = float((w * X).sum()), float((w * P).sum())
    return mx, float((w * (X - mx) ** 2).sum()), mp, float((w * (P - mp) ** 2).sum())


def write_csv(grid: DistributionGrid, path) -> None:
    """Rows ``x,p,rho`` in x-major order with 17 significant digits."""
    X, P = np.meshgrid(grid.x_centers, grid.p_centers, indexing="ij")
    data = np.column_stack([X.ravel(), P.ravel(), grid.rho.ravel()])
    np.savetxt(path, data, delimiter=",", header="x,p,rho", comments="", fmt="%.17g")


def write_binary(grid: DistributionGrid, path) -> None:
    """Little-endian ``SHFP`` snapshot: header then ``n_x*n_p`` doubles, x-major."""
    n_x, n_p = grid.shape
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, n_x, n_p, *grid.bounds)
    Path(path).write_bytes(header + np.ascontiguousarray(grid.rho, dtype="<f8").tobytes())


def read_binary(path, boundary=("zero_flux", "zero_flux")) -> DistributionGrid:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("file too short for an SHFP header")
    magic, version, n_x, n_p, *bounds = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported SHFP version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * n_x * n_p:
        raise ValueError("payload size does not match the header")
    rho = np.frombuffer(body, dtype="<f8").reshape(n_x, n_p).astype(float)
    return DistributionGrid(tuple(bounds), rho, boundary)
