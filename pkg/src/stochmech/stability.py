"""Linear stability analysis: variational matrix, mode classification and
Lyapunov spectra by QR re-orthonormalisation of a tangent frame.

Two orderings appear here and are easy to mix up. :class:`VariationalMatrix`
stores the block matrix acting on ``(dp, dx)``, momenta first, so that its
blocks read ``[[0, A], [B, 0]]``. Tangent frames (:func:`propagate_tangent`,
:func:`lyapunov_spectrum`) use the ``(dx, dp)`` ordering of phase-space
states, coordinates first.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .errors import DimensionMismatch, NonSeparableModel
from .phase_core import HamiltonianModel, PhaseState, evaluate_hessian

__all__ = [
    "ModeCase",
    "ModeRecord",
    "ModeClassification",
    "VariationalMatrix",
    "LyapunovReport",
    "DEFAULT_RATE_TOLERANCE",
    "DEFAULT_ZERO_TOLERANCE",
    "linearize",
    "classify_modes",
    "classify_state",
    "propagate_tangent",
    "lyapunov_spectrum",
]

DEFAULT_RATE_TOLERANCE = 1e-10
# finite-horizon exponents smaller than this are treated as zero in the KS sum
DEFAULT_ZERO_TOLERANCE = 1e-3
CONVERGENCE_RTOL = 1e-3


class ModeCase(enum.Enum):
    FREE_DRIFT = "a"
    OSCILLATORY = "b"
    UNSTABLE = "c"


class ModeRecord(NamedTuple):
    index: int
    case: ModeCase
    rate: float  # omega for OSCILLATORY, lambda for UNSTABLE, 0 for FREE_DRIFT
    mass: float


class ModeClassification(tuple):
    """Tuple of :class:`ModeRecord`, one per degree of freedom."""

    @property
    def cases(self) -> tuple[ModeCase, ...]:
        return tuple(r.case for r in self)

    @property
    def rates(self) -> np.ndarray:
        return np.array([r.rate for r in self])

    def unstable(self) -> tuple[ModeRecord, ...]:
        return tuple(r for r in self if r.case is ModeCase.UNSTABLE)


@dataclass(frozen=True)
class VariationalMatrix:
    """``d/dt (dp, dx) = [[0, A], [B, 0]] (dp, dx)`` with ``A = -d2H/dxdx`` and
    ``B = d2H/dpdp``."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
            raise DimensionMismatch("variational matrix must be 2n x 2n")
        M.flags.writeable = False
        object.__setattr__(self, "matrix", M)

    @property
    def n(self) -> int:
        return self.matrix.shape[0] // 2

    @property
    def A(self) -> np.ndarray:
        return self.matrix[: self.n, self.n :]

    @property
    def B(self) -> np.ndarray:
        return self.matrix[self.n :, : self.n]

    def xp(self) -> np.ndarray:
        """Same linear map expressed on ``(dx, dp)``: ``[[0, B], [A, 0]]``."""
        n = self.n
        out = np.zeros_like(self.matrix)
        out[:n, n:] = self.B
        out[n:, :n] = self.A
        out[:n, :n] = self.matrix[n:, n:]
        out[n:, n:] = self.matrix[:n, :n]
        return out

    def scaled(self, s: float) -> "VariationalMatrix":
        return VariationalMatrix(self.matrix * s)


def linearize(model: HamiltonianModel, state: PhaseState) -> VariationalMatrix:
    blocks = evaluate_hessian(model, state)
    if np.any(blocks.Cxp != 0):
        raise NonSeparableModel("mixed x-p second derivatives are not supported")
    n = model.n
    M = np.zeros((2 * n, 2 * n))
    M[:n, n:] = -blocks.Axx
    M[n:, :n] = blocks.Bpp
    return VariationalMatrix(M)


def _is_diagonal(a: np.ndarray) -> bool:
    return not np.any(a - np.diag(np.diag(a)))


def classify_modes(vm: VariationalMatrix, rate_tolerance: float = DEFAULT_RATE_TOLERANCE) -> ModeClassification:
    """Split the degrees of freedom into free-drift, oscillatory and unstable modes.

    The mode curvature ``c`` is the entry of ``A`` for that mode: ``|c| <= tol``
    is free drift, ``c < -tol`` oscillates at ``sqrt(-c B)`` and ``c > tol``
    separates at ``sqrt(c B)``. Coupled (non-diagonal) blocks are reduced to
    normal modes in mass-weighted coordinates, where every mode has unit mass.
    """
    if not rate_tolerance > 0:
        raise ValueError("rate_tolerance must be > 0")
    n = vm.n
    M = vm.matrix
    if np.any(M[:n, :n]) or np.any(M[n:, n:]):
        raise NonSeparableModel("variational matrix has nonzero diagonal blocks")
    A, B = vm.A, vm.B
    if _is_diagonal(A) and _is_diagonal(B):
        curv = np.diag(A)
        inv_mass = np.diag(B)
    else:
        if np.any(np.linalg.eigvalsh(0.5 * (B + B.T)) <= 0):
            raise NonSeparableModel("kinetic block must be positive definite")
        w, V = np.linalg.eigh(0.5 * (B + B.T))
        root = (V * np.sqrt(w)) @ V.T
        curv = np.linalg.eigvalsh(root @ (0.5 * (A + A.T)) @ root)[::-1]
        inv_mass = np.ones(n)
    records = []
    for i in range(n):
        c, b = float(curv[i]), float(inv_mass[i])
        if abs(c) <= rate_tolerance:
            case, rate = ModeCase.FREE_DRIFT, 0.0
        elif c < 0:
            case, rate = ModeCase.OSCILLATORY, math.sqrt(-c * b)
        else:
            case, rate = ModeCase.UNSTABLE, math.sqrt(c * b)
        records.append(ModeRecord(i, case, rate, 1.0 / b))
    return ModeClassification(records)


def classify_state(model: HamiltonianModel, state: PhaseState,
                   rate_tolerance: float = DEFAULT_RATE_TOLERANCE) -> ModeClassification:
    """Local classification at ``state`` (labels can change along nonlinear trajectories)."""
    return classify_modes(linearize(model, state), rate_tolerance)


def _check_frame(frame: np.ndarray, n: int) -> np.ndarray:
    Y = np.array(frame, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != 2 * n:
        raise DimensionMismatch(f"frame must have {2 * n} rows, got shape {Y.shape}")
    return Y


def propagate_tangent(model: HamiltonianModel, trajectory: Sequence[PhaseState],
                      frame: np.ndarray) -> np.ndarray:
    """Carry ``frame`` (columns are ``(dx, dp)`` tangent vectors) along ``trajectory``.

    The trajectory is assumed to come from the kick-drift-kick integrator; the
    frame is advanced by the exact Jacobian of that map, using the curvature
    at consecutive trajectory points for the two half kicks.
    """
    if len(trajectory) < 1:
        raise DimensionMismatch("trajectory is empty")
    n = model.n
    Y = _check_frame(frame, n)
    for s in trajectory:
        if s.n != n:
            raise DimensionMismatch("trajectory dimension does not match model")
    if len(trajectory) == 1:
        return Y
    t = np.array([s.t for s in trajectory])
    steps = np.diff(t)
    dt = float(steps.mean())
    if not np.allclose(steps, dt, rtol=1e-9, atol=1e-12 * max(1.0, abs(t[-1]))):
        raise DimensionMismatch("trajectory must be uniformly sampled")
    curv = model.curvature(np.array([s.x for s in trajectory]))
    inv_m = 1.0 / model.mass_array
    Y = Y.copy()
    dx, dp = Y[:n], Y[n:]
    h = 0.5 * dt
    for k in range(len(trajectory) - 1):
        dp -= h * curv[k][:, None] * dx
        dx += dt * inv_m[:, None] * dp
        dp -= h * curv[k + 1][:, None] * dx
    return Y


@dataclass(frozen=True)
class LyapunovReport:
    """Lyapunov spectrum (descending) and the positive-exponent sum ``ks_entropy``."""

    spectrum: np.ndarray
    ks_entropy: float
    horizon: float
    renorm_interval: float
    transient: float
    history: np.ndarray  # running spectrum estimate after each renormalisation
    converged: bool
    valid: bool = True
    message: str = ""

    @property
    def symmetry_defect(self) -> float:
        """``max_i |l_i + l_{2n+1-i}|``; zero for an exactly symplectic flow."""
        s = self.spectrum
        return float(np.max(np.abs(s + s[::-1])))


def _ks_entropy(spectrum: np.ndarray, zero_tolerance: float) -> float:
    return float(np.sum(spectrum[spectrum > zero_tolerance]))


def _converged(history: np.ndarray) -> bool:
    if len(history) < 2:
        return False
    a, b = history[-1], history[-2]
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return bool(np.all(np.abs(a - b) <= CONVERGENCE_RTOL * scale))


def lyapunov_spectrum(model: HamiltonianModel, initial: PhaseState, horizon: float,
                      dt: float, renorm_interval: float, transient: float | None = None,
                      frame: np.ndarray | None = None,
                      zero_tolerance: float = DEFAULT_ZERO_TOLERANCE) -> LyapunovReport:
    """Benettin estimate of the full Lyapunov spectrum of the noiseless flow.

    The base trajectory and the tangent frame are advanced together with the
    kick-drift-kick map; every ``renorm_interval`` the frame is QR
    re-orthonormalised and ``log|R_ii|`` accumulated. Logs collected during
    the first ``transient`` time units (default: 10% of the horizon) are
    discarded so that the frame has aligned with the Oseledets directions.

    ``ks_entropy`` sums the exponents above ``zero_tolerance``; smaller
    positive values are finite-horizon estimates of zero exponents.

    A trajectory that overflows stops the estimate; the partial result is
    returned with ``valid=False``.
    """
    if not (dt > 0 and renorm_interval >= dt and horizon >= renorm_interval):
        raise ValueError("need horizon >= renorm_interval >= dt > 0")
    if initial.n != model.n:
        raise DimensionMismatch("initial state dimension does not match model")
    if not zero_tolerance >= 0:
        raise ValueError("zero_tolerance must be >= 0")
    if transient is None:
        transient = 0.1 * horizon
    steps_per = max(1, int(round(renorm_interval / dt)))
    n_renorm = int(round(horizon / (steps_per * dt)))
    n_skip = min(int(round(transient / (steps_per * dt))), n_renorm - 1)
    n = model.n
    Y = np.eye(2 * n) if frame is None else _check_frame(frame, n).copy()
    Y, _ = np.linalg.qr(Y)
    x = np.array(initial.x, dtype=float)
    p = np.array(initial.p, dtype=float)
    params = model.kernel_params()
    logsum = np.zeros(2 * n)
    history = []
    valid, message = True, ""
    interval = steps_per * dt
    for k in range(n_renorm):
        kernels.tangent_leapfrog(model.code, params, x, p, Y, dt, steps_per, model.periodic)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p)) and np.all(np.isfinite(Y))):
            valid = False
            message = f"trajectory overflowed after {k * interval:g} time units"
            break
        Q, R = np.linalg.qr(Y)
        diag = np.diag(R)
        Y = Q * np.sign(diag)
        if k >= n_skip:
            logsum += np.log(np.abs(diag))
            history.append(np.sort(logsum / ((k + 1 - n_skip) * interval))[::-1])
    history = np.array(history).reshape(-1, 2 * n)
    spectrum = history[-1] if len(history) else np.full(2 * n, np.nan)
    if len(history) == 0:
        valid = False
        message = message or "no renormalisation completed after the transient"
    return LyapunovReport(
        spectrum=spectrum,
        ks_entropy=_ks_entropy(spectrum, zero_tolerance) if len(history) else float("nan"),
        horizon=horizon,
        renorm_interval=interval,
        transient=n_skip * interval,
        history=history,
        converged=valid and _converged(history),
        valid=valid,
        message=message,
    )
