"""Integrators for the noisy Hamilton equations

    dx = dH/dp dt + sigma_x dW_x,    dp = -dH/dx dt + sigma_p dW_p

with ``sigma_x = sqrt(hbar/2m)`` and ``sigma_p = sqrt(hbar m lambda^2 / 2)``,
``lambda`` being the local instability rate of the mode. The noise is
additive, so the Ito and Stratonovich readings coincide.

Randomness is counter based: path ``i`` of a run with master seed ``s`` draws
from a Philox stream keyed by ``(s, i)``, so ensembles can be split across
workers in any order and still reproduce bit for bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NonFiniteState
from .phase_core import HamiltonianModel, PhaseState, _check_dim
from .stability import DEFAULT_RATE_TOLERANCE, ModeCase, classify_state

__all__ = [
    "NoiseSpec",
    "WienerIncrementStream",
    "Trajectory",
    "SCHEMES",
    "BLOCK_SIZE",
    "noise_amplitudes",
    "step_euler_maruyama",
    "step_stochastic_heun",
    "step_symplectic_deterministic",
    "step_split",
    "integrate_path",
    "simulate_paths",
    "path_generator",
]

GATINGS = tuple(kernels.GATINGS)
SCHEMES = ("euler_maruyama", "heun", "split_step")
# Paths are grouped in blocks of this fixed size whatever the worker count,
# which keeps every path's arithmetic identical across thread settings.
BLOCK_SIZE = 256
_MASK64 = (1 << 64) - 1
_NOISE_STREAM = 0
_INIT_STREAM = 1


@dataclass(frozen=True)
class NoiseSpec:
    """Vacuum-noise configuration.

    ``gating`` selects which modes receive noise: ``unstable_only`` (default),
    ``all_on`` (coordinate noise on every mode, momentum noise on unstable
    modes) or ``off``.
    """

    hbar_eff: float = 1.0
    gating: str = "unstable_only"
    master_seed: int = 42
    rate_tolerance: float = DEFAULT_RATE_TOLERANCE

    def __post_init__(self):
        if not (self.hbar_eff >= 0 and math.isfinite(self.hbar_eff)):
            raise ValueError(f"hbar_eff must be finite and >= 0, got {self.hbar_eff}")
        if self.gating not in GATINGS:
            raise ValueError(f"gating must be one of {GATINGS}, got {self.gating!r}")
        if not 0 <= int(self.master_seed) <= _MASK64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if not self.rate_tolerance > 0:
            raise ValueError("rate_tolerance must be > 0")
        object.__setattr__(self, "master_seed", int(self.master_seed))

    @property
    def noiseless(self) -> bool:
        return self.gating == "off" or self.hbar_eff == 0


def path_generator(master_seed: int, path_index: int, stream: int = _NOISE_STREAM) -> np.random.Generator:
    """Philox generator for one path; ``stream`` separates noise from initial draws."""
    key = (int(master_seed) & _MASK64) | ((int(path_index) & _MASK64) << 64)
    counter = int(stream) << 192
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True)
class WienerIncrementStream:
    """i.i.d. N(0, dt) increments for the ``2n`` channels of one path.

    Channels are ordered ``(x_1..x_n, p_1..p_n)``. Increments are produced in
    step-major order, so the increment at a given ``(step, channel)`` does
    not depend on how many steps are requested.
    """

    master_seed: int
    path_index: int
    channels: int
    dt: float

    def increments(self, n_steps: int) -> np.ndarray:
        g = path_generator(self.master_seed, self.path_index, _NOISE_STREAM)
        z = g.standard_normal((n_steps, self.channels))
        return z * math.sqrt(self.dt)


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled solution of one path."""

    times: np.ndarray
    x: np.ndarray  # (samples, n)
    p: np.ndarray
    dt: float
    model_name: str
    spec: NoiseSpec
    path_index: int
    scheme: str
    truncated: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def states(self) -> list[PhaseState]:
        """Finite samples as :class:`PhaseState` (a truncated tail is dropped)."""
        ok = np.all(np.isfinite(self.x), axis=1) & np.all(np.isfinite(self.p), axis=1)
        return [PhaseState(self.x[i], self.p[i], self.times[i]) for i in np.flatnonzero(ok)]


def noise_amplitudes(model: HamiltonianModel, state: PhaseState, spec: NoiseSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode ``(sigma_x, sigma_p)`` at ``state``."""
    modes = classify_state(model, state, spec.rate_tolerance)
    sx = np.zeros(model.n)
    sp = np.zeros(model.n)
    if spec.noiseless:
        return sx, sp
    hbar = spec.hbar_eff
    for rec in modes:
        m = model.masses[rec.index]
        if rec.case is ModeCase.UNSTABLE:
            sx[rec.index] = math.sqrt(hbar / (2 * m))
            sp[rec.index] = math.sqrt(hbar * m * rec.rate**2 / 2)
        elif spec.gating == "all_on":
            sx[rec.index] = math.sqrt(hbar / (2 * m))
    return sx, sp


def _one_step(model, state, dt, increments, spec, scheme_code):
    _check_dim(model, state)
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    n = model.n
    if increments is None:
        dW = np.zeros((1, 1, 2 * n))
    else:
        dW = np.asarray(increments, dtype=float).reshape(1, 1, 2 * n)
    spec = spec or NoiseSpec(hbar_eff=0.0, gating="off")
    xs, ps, trunc = kernels.integrate_block(
        model.code, model.kernel_params(), state.x[None, :], state.p[None, :], dW,
        dt, 1, scheme_code, kernels.GATINGS[spec.gating], spec.hbar_eff,
        spec.rate_tolerance, 1, model.periodic,
    )
    if trunc[0]:
        raise NonFiniteState(f"step from t={state.t} overflowed")
    return PhaseState(xs[0, 1], ps[0, 1], state.t + dt)


def step_euler_maruyama(model: HamiltonianModel, state: PhaseState, dt: float,
                        increments, spec: NoiseSpec) -> PhaseState:
    """One Euler-Maruyama step; ``increments`` are the Wiener increments ``(dW_x.., dW_p..)``."""
    return _one_step(model, state, dt, increments, spec, kernels.SCHEMES["euler_maruyama"])


def step_stochastic_heun(model: HamiltonianModel, state: PhaseState, dt: float,
                         increments, spec: NoiseSpec) -> PhaseState:
    """Predictor-corrector (Heun) drift with the additive noise applied once."""
    return _one_step(model, state, dt, increments, spec, kernels.SCHEMES["heun"])


def step_split(model: HamiltonianModel, state: PhaseState, dt: float,
               increments, spec: NoiseSpec) -> PhaseState:
    """Kick-drift-kick drift followed by the additive noise kick."""
    return _one_step(model, state, dt, increments, spec, kernels.SCHEMES["split_step"])


def step_symplectic_deterministic(model: HamiltonianModel, state: PhaseState, dt: float) -> PhaseState:
    """One kick-drift-kick leapfrog step of the noiseless Hamilton equations."""
    return _one_step(model, state, dt, None, None, kernels.SCHEMES["symplectic"])


def _n_steps(horizon: float, dt: float) -> int:
    if not (dt > 0 and horizon >= 0):
        raise ValueError("need dt > 0 and horizon >= 0")
    k = int(round(horizon / dt))
    if abs(k * dt - horizon) > 1e-9 * max(horizon, dt):
        raise ValueError(f"horizon {horizon} is not an integer multiple of dt {dt}")
    return k


def _scheme_code(scheme: str, spec: NoiseSpec) -> int:
    if scheme not in SCHEMES and scheme != "symplectic":
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    # without noise every scheme reduces to the deterministic Hamilton flow
    if spec.noiseless:
        return kernels.SCHEMES["symplectic"]
    return kernels.SCHEMES[scheme]


def _run_block(model, x0, p0, indices, n_steps, dt, spec, code, sample_every):
    n = model.n
    if code == kernels.SCHEMES["symplectic"]:
        dW = None
    else:
        sq = math.sqrt(dt)
        dW = np.empty((len(indices), n_steps, 2 * n))
        for row, idx in enumerate(indices):
            g = path_generator(spec.master_seed, idx, _NOISE_STREAM)
            dW[row] = g.standard_normal((n_steps, 2 * n))
        dW *= sq
    return kernels.integrate_block(
        model.code, model.kernel_params(), x0, p0, dW, dt, n_steps, code,
        kernels.GATINGS[spec.gating], spec.hbar_eff, spec.rate_tolerance,
        sample_every, model.periodic,
    )


def simulate_paths(model: HamiltonianModel, x0: np.ndarray, p0: np.ndarray,
                   path_indices, horizon: float, dt: float, spec: NoiseSpec,
                   scheme: str = "split_step", sample_every: int = 1,
                   threads: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate many paths; returns ``(xs, ps, truncated)`` with shapes
    ``(N, S, n)``, ``(N, S, n)`` and ``(N,)``.

    Row ``r`` uses the noise stream of ``path_indices[r]``; the output does
    not depend on ``threads``.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    idx = np.asarray(path_indices, dtype=np.int64).reshape(-1)
    if x0.shape != p0.shape or x0.shape != (len(idx), model.n):
        raise ValueError("x0/p0 must have shape (paths, n)")
    n_steps = _n_steps(horizon, dt)
    if sample_every < 1 or (n_steps and n_steps % sample_every):
        raise ValueError("sample_every must divide the number of steps")
    code = _scheme_code(scheme, spec)
    starts = list(range(0, len(idx), BLOCK_SIZE))

    def work(s):
        e = s + BLOCK_SIZE
        return _run_block(model, x0[s:e], p0[s:e], idx[s:e], n_steps, dt, spec, code, sample_every)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    S = n_steps // sample_every + 1
    if not parts:
        return np.empty((0, S, model.n)), np.empty((0, S, model.n)), np.empty(0, dtype=bool)
    xs = np.concatenate([q[0] for q in parts])
    ps = np.concatenate([q[1] for q in parts])
    tr = np.concatenate([q[2] for q in parts])
    return xs, ps, tr


def integrate_path(model: HamiltonianModel, initial: PhaseState, horizon: float, dt: float,
                   spec: NoiseSpec, scheme: str = "split_step", path_index: int = 0,
                   sample_every: int = 1) -> Trajectory:
    """Integrate one path of length ``horizon`` (an integer number of steps).

    With a noiseless spec the deterministic leapfrog is used whatever
    ``scheme`` says. Overflow truncates the path (``truncated=True``, NaN tail)
    instead of raising.
    """
    _check_dim(model, initial)
    n_steps = _n_steps(horizon, dt)
    xs, ps, tr = simulate_paths(model, initial.x[None, :], initial.p[None, :], [path_index],
                                horizon, dt, spec, scheme, sample_every)
    times = initial.t + dt * sample_every * np.arange(n_steps // sample_every + 1)
    used = "symplectic" if _scheme_code(scheme, spec) == 0 else scheme
    return Trajectory(times, xs[0], ps[0], dt, model.name, spec, int(path_index), used, bool(tr[0]))
