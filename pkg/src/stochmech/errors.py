"""Exception hierarchy shared by all stochmech modules."""

from __future__ import annotations


class StochMechError(Exception):
    """Base class for every error raised by the package."""


class _PlainKeyError(KeyError):
    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


# phase_core
class UnknownModel(StochMechError, _PlainKeyError):
    pass


class MissingParameter(StochMechError, _PlainKeyError):
    pass


class NonPositiveParameter(StochMechError, ValueError):
    pass


class DimensionMismatch(StochMechError, ValueError):
    pass


class UnsupportedModel(StochMechError, ValueError):
    pass


# stability
class NonSeparableModel(StochMechError, ValueError):
    pass


class NonFiniteTrajectory(StochMechError, FloatingPointError):
    pass


# sde_engine
class NonFiniteState(StochMechError, FloatingPointError):
    pass


# ensemble_stats
class AllPathsExcluded(StochMechError, RuntimeError):
    pass


class InsufficientSamples(StochMechError, ValueError):
    pass


class NonPositiveVariance(StochMechError, ValueError):
    pass


class NonLinearModel(StochMechError, ValueError):
    pass


# fokker_planck
class MassOutsideDomain(StochMechError, ValueError):
    pass


class CFLViolation(StochMechError, ValueError):
    pass


class StabilityViolation(StochMechError, ValueError):
    pass


class TooFewSamples(StochMechError, ValueError):
    pass


# scenario_cli
class ConfigError(StochMechError, ValueError):
    """Base for configuration problems (CLI exit code 2)."""


class ConfigSyntaxError(ConfigError):
    pass


class UnknownKey(ConfigError, _PlainKeyError):
    pass


class InvalidValue(ConfigError):
    pass
