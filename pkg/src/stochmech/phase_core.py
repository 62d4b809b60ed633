"""Hamiltonian models and phase-space states.

Every catalog model is separable, ``H(x, p) = sum_i p_i**2 / (2 m_i) + V(x)``,
with ``V`` a sum of identical one-dimensional potentials (the degrees of
freedom are uncoupled). Model methods are vectorised: coordinate and momentum
arrays carry the degrees of freedom on their last axis and may have any number
of leading (ensemble) axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, NamedTuple

import numpy as np

from .errors import (
    DimensionMismatch,
    MissingParameter,
    NonPositiveParameter,
    UnknownModel,
    UnsupportedModel,
)

__all__ = [
    "CATALOG",
    "HamiltonianModel",
    "HessianBlocks",
    "PhaseState",
    "Dispersions",
    "builtin_model",
    "evaluate_energy",
    "evaluate_derivatives",
    "evaluate_hessian",
    "minimal_uncertainty_dispersions",
    "normalize_state",
    "wrap_angle",
]

# name -> (integer code used by the compiled kernels, required parameters)
CATALOG: dict[str, tuple[int, tuple[str, ...]]] = {
    "free_particle": (0, ("m",)),
    "harmonic": (1, ("m", "omega")),
    "inverted": (2, ("m", "lambda")),
    "pendulum": (3, ("m", "gl")),
    "double_well": (4, ("m", "depth", "a")),
}

# Parameters that must be strictly positive when present.
_POSITIVE = {"m", "omega", "lambda", "gl", "depth", "a"}

_ALIASES = {
    "ω": "omega",
    "w": "omega",
    "λ": "lambda",
    "lam": "lambda",
    "g_l": "gl",
    "g·l": "gl",
    "mass": "m",
}

_LINEAR = frozenset({"free_particle", "harmonic", "inverted"})


def wrap_angle(x):
    """Map angles onto ``[-pi, pi)``."""
    return np.mod(np.asarray(x, dtype=float) + math.pi, 2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class PhaseState:
    """A point ``(x, p, t)`` in phase space."""

    x: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        p = np.array(self.p, dtype=float).reshape(-1)
        if x.size == 0 or x.shape != p.shape:
            raise DimensionMismatch(
                f"x and p must have equal nonzero length, got {x.size} and {p.size}"
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p)) and math.isfinite(self.t)):
            raise ValueError("phase state entries must be finite")
        x.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n(self) -> int:
        return self.x.size

    def __eq__(self, other):
        if not isinstance(other, PhaseState):
            return NotImplemented
        return (
            self.t == other.t
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.p, other.p)
        )

    __hash__ = None  # type: ignore[assignment]


class HessianBlocks(NamedTuple):
    """Raw second derivatives of H: ``Axx = d2H/dxdx``, ``Bpp = d2H/dpdp``, ``Cxp = d2H/dxdp``."""

    Axx: np.ndarray
    Bpp: np.ndarray
    Cxp: np.ndarray


class Dispersions(NamedTuple):
    var_x: float
    var_p: float
    mean_energy: float | None  # None where the mean energy is undefined


@dataclass(frozen=True)
class HamiltonianModel:
    """A catalog Hamiltonian with its masses and parameters.

    Use :func:`builtin_model` to construct validated instances.
    """

    name: str
    n: int
    masses: tuple[float, ...]
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        if len(self.masses) != self.n:
            raise DimensionMismatch("one mass per degree of freedom is required")
        if any(not m > 0 for m in self.masses):
            raise NonPositiveParameter("masses must be strictly positive")

    # -- descriptors ------------------------------------------------------
    @property
    def code(self) -> int:
        return CATALOG[self.name][0]

    @property
    def is_linear(self) -> bool:
        """True when the equations of motion are linear (quadratic H)."""
        return self.name in _LINEAR

    @property
    def periodic(self) -> bool:
        """True when the coordinate is an angle living on ``[-pi, pi)``."""
        return self.name == "pendulum"

    @property
    def mass_array(self) -> np.ndarray:
        return np.asarray(self.masses, dtype=float)

    def kernel_params(self) -> np.ndarray:
        """Flat parameter vector ``[m, a0, a1]`` consumed by the compiled kernels."""
        m = self.masses[0]
        P = self.params
        if self.name == "harmonic":
            return np.array([m, m * P["omega"] ** 2, 0.0])
        if self.name == "inverted":
            return np.array([m, m * P["lambda"] ** 2, 0.0])
        if self.name == "pendulum":
            return np.array([m, m * P["gl"], 0.0])
        if self.name == "double_well":
            return np.array([m, P["depth"], P["a"]])
        return np.array([m, 0.0, 0.0])

    # -- vectorised physics -------------------------------------------------
    def potential(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        m = self.mass_array
        P = self.params
        if self.name == "free_particle":
            v = np.zeros_like(x)
        elif self.name == "harmonic":
            v = 0.5 * m * P["omega"] ** 2 * x * x
        elif self.name == "inverted":
            v = -0.5 * m * P["lambda"] ** 2 * x * x
        elif self.name == "pendulum":
            v = -m * P["gl"] * np.cos(x)
        else:
            u = x / P["a"]
            v = P["depth"] * (u * u - 1.0) ** 2
        return v.sum(axis=-1)

    def kinetic(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return (0.5 * p * p / self.mass_array).sum(axis=-1)

    def energy(self, x, p) -> np.ndarray:
        return self.kinetic(p) + self.potential(x)

    def grad_x(self, x) -> np.ndarray:
        """dH/dx, i.e. the potential force with the sign flipped."""
        x = np.asarray(x, dtype=float)
        m = self.mass_array
        P = self.params
        if self.name == "free_particle":
            return np.zeros_like(x)
        if self.name == "harmonic":
            return m * P["omega"] ** 2 * x
        if self.name == "inverted":
            return -m * P["lambda"] ** 2 * x
        if self.name == "pendulum":
            return m * P["gl"] * np.sin(x)
        a = P["a"]
        u = x / a
        return 4.0 * P["depth"] * u * (u * u - 1.0) / a

    def grad_p(self, p) -> np.ndarray:
        return np.asarray(p, dtype=float) / self.mass_array

    def curvature(self, x) -> np.ndarray:
        """Diagonal of d2H/dxdx (the Hessian is diagonal for every catalog model)."""
        x = np.asarray(x, dtype=float)
        m = self.mass_array
        P = self.params
        if self.name == "free_particle":
            return np.zeros_like(x)
        if self.name == "harmonic":
            return m * P["omega"] ** 2 + 0.0 * x
        if self.name == "inverted":
            return -m * P["lambda"] ** 2 + 0.0 * x
        if self.name == "pendulum":
            return m * P["gl"] * np.cos(x)
        a = P["a"]
        return P["depth"] * (12.0 * x * x / a**2 - 4.0) / a**2


def _canonical_params(params: Mapping[str, float]) -> dict[str, float]:
    out = {}
    for key, value in params.items():
        out[_ALIASES.get(key, key)] = value
    return out


def builtin_model(name: str, params: Mapping[str, float] | None = None) -> HamiltonianModel:
    """Instantiate a catalog Hamiltonian.

    Parameters
    ----------
    name : str
        One of ``free_particle``, ``harmonic``, ``inverted``, ``pendulum``,
        ``double_well``.
    params : mapping
        Physical parameters. ``m`` is the mass, ``omega`` the oscillator
        frequency, ``lambda`` the instability rate, ``gl`` the product g*l of
        the pendulum, ``depth`` and ``a`` the double-well barrier height and
        minimum position. An optional integer ``n`` replicates the potential
        over ``n`` uncoupled degrees of freedom.

    Raises
    ------
    UnknownModel, MissingParameter, NonPositiveParameter
    """
    if name not in CATALOG:
        raise UnknownModel(f"unknown model {name!r}; catalog: {sorted(CATALOG)}")
    params = _canonical_params(params or {})
    required = CATALOG[name][1]
    allowed = set(required) | {"n"}
    extra = set(params) - allowed
    if extra:
        raise UnknownModel(f"model {name!r} takes no parameter(s) {sorted(extra)}")
    for key in required:
        if key not in params:
            raise MissingParameter(f"model {name!r} requires parameter {key!r}")
    clean: dict[str, float] = {}
    for key in required:
        value = float(params[key])
        if not math.isfinite(value):
            raise NonPositiveParameter(f"parameter {key!r} must be finite")
        if key in _POSITIVE and not value > 0:
            raise NonPositiveParameter(f"parameter {key!r} must be > 0, got {value}")
        clean[key] = value
    n = params.get("n", 1)
    if int(n) != n or n < 1:
        raise NonPositiveParameter(f"n must be a positive integer, got {n}")
    n = int(n)
    return HamiltonianModel(name=name, n=n, masses=(clean["m"],) * n, params=clean)


def _check_dim(model: HamiltonianModel, state: PhaseState) -> None:
    if state.n != model.n:
        raise DimensionMismatch(f"state has {state.n} degrees of freedom, model has {model.n}")


def normalize_state(model: HamiltonianModel, state: PhaseState) -> PhaseState:
    """Wrap periodic coordinates onto their fundamental domain."""
    _check_dim(model, state)
    if not model.periodic:
        return state
    return PhaseState(wrap_angle(state.x), state.p, state.t)


def evaluate_energy(model: HamiltonianModel, state: PhaseState) -> float:
    _check_dim(model, state)
    return float(model.energy(state.x, state.p))


def evaluate_derivatives(model: HamiltonianModel, state: PhaseState) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(dH/dx, dH/dp)`` at ``state``."""
    _check_dim(model, state)
    return model.grad_x(state.x), model.grad_p(state.p)


def evaluate_hessian(model: HamiltonianModel, state: PhaseState) -> HessianBlocks:
    _check_dim(model, state)
    n = model.n
    return HessianBlocks(
        Axx=np.diag(model.curvature(state.x)),
        Bpp=np.diag(1.0 / model.mass_array),
        Cxp=np.zeros((n, n)),
    )


def minimal_uncertainty_dispersions(model: HamiltonianModel, hbar_eff: float) -> Dispersions:
    """Coordinate/momentum variances that minimise the mean energy at fixed
    ``<dx^2><dp^2> = hbar^2/4``.

    Values are per degree of freedom. For the inverted oscillator the same
    construction with ``lambda`` in place of ``omega`` gives the natural
    initial dispersions; its mean energy is unbounded below and reported as
    ``None``.
    """
    if hbar_eff < 0:
        raise ValueError("hbar_eff must be >= 0")
    if hbar_eff == 0:
        return Dispersions(0.0, 0.0, 0.0)
    m = model.masses[0]
    if model.name == "harmonic":
        w = model.params["omega"]
        return Dispersions(hbar_eff / (2 * m * w), hbar_eff * m * w / 2, hbar_eff * w / 2)
    if model.name == "inverted":
        lam = model.params["lambda"]
        return Dispersions(hbar_eff / (2 * m * lam), hbar_eff * m * lam / 2, None)
    raise UnsupportedModel(
        f"minimal-uncertainty dispersions are defined for harmonic and inverted models, not {model.name!r}"
    )
