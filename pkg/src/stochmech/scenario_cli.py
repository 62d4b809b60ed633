"""Scenario files, the built-in scenario catalog and the run orchestration.

A scenario is a flat TOML document. ``scenario`` selects the kind of run,
``model`` a catalog Hamiltonian whose parameters sit next to it as top-level
keys, and the remaining keys configure the run. Keys are strict: anything not
understood by the selected kind is rejected before computation starts.

Example::

    scenario = "ensemble"
    model = "free_particle"
    m = 1.0
    gating = "all_on"
    horizon = 2.0

Every run writes ``timeseries.csv`` and ``summary.json`` into its output
directory (plus ``run_info.json`` with wall-clock data and, on request, a
plotting script). ``summary.json`` is a pure function of the configuration
and the seed; everything that varies between otherwise identical runs lives
in ``run_info.json``.
"""

from __future__ import annotations

import json
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import kernels
from ._version import __version__
from .ensemble_stats import (
    InitialDistribution,
    covariance_ode_oracle,
    exponential_rate_fit,
    kick_ensemble,
    run_ensemble,
    sample_every_for,
    variance_slope,
)
from .errors import (
    ConfigSyntaxError,
    InvalidValue,
    StochMechError,
    UnknownKey,
)
from .fokker_planck import (
    MasterEqConfig,
    build_grid,
    coarsen,
    compare_histogram,
    evolve_master_equation,
    grid_variances,
    stable_dt,
)
from .phase_core import _ALIASES, CATALOG, HamiltonianModel, PhaseState, builtin_model, minimal_uncertainty_dispersions
from .sde_engine import SCHEMES, NoiseSpec, _n_steps
from .stability import lyapunov_spectrum

__all__ = [
    "HBAR_CGS",
    "KINDS",
    "ScenarioConfig",
    "RunSummary",
    "parse_config",
    "scenario_catalog",
    "builtin_config",
    "run_scenario",
]

HBAR_CGS = 1.054571817e-27  # erg s
KINDS = ("ensemble", "kick_ensemble", "lyapunov", "master_equation", "analytic")
QUANTITIES = ("free_drift_rms", "zero_point")

DEFAULTS: dict[str, Any] = {
    "units": "model",
    "hbar_eff": 1.0,
    "gating": "unstable_only",
    "dt": 1e-3,
    "horizon": 1.0,
    "N": 10_000,
    "seed": 42,
    "threads": 1,
    "emit_plots": False,
}

# keys every kind accepts; they steer output and are echoed in the summary
_RUN_KEYS = {"scenario", "name", "model", "units", "seed", "out", "threads", "emit_plots"}
_INIT_KEYS = {"init", "x0", "p0", "var_x0", "var_p0"}
_KIND_KEYS = {
    "ensemble": {"hbar_eff", "gating", "dt", "horizon", "N", "scheme", "n_intervals", "fit_window"} | _INIT_KEYS,
    "kick_ensemble": {"hbar_eff", "gating", "dt", "horizon", "N", "scheme", "n_intervals", "fit_window",
                      "report_time", "continuous", "N_continuous"},
    "lyapunov": {"dt", "horizon", "x0", "p0", "renorm_interval", "transient", "systems"},
    "master_equation": {"hbar_eff", "gating", "dt", "horizon", "bounds", "resolution", "boundary",
                        "limiter", "strang", "entropy_interval", "stationarity_threshold",
                        "stop_at_stationarity", "refinement_check", "compare_paths", "compare_cells",
                        "sde_dt"} | _INIT_KEYS,
    "analytic": {"hbar_eff", "quantity", "tau", "order_of_magnitude", "tolerance_decades"},
}
_SYSTEM_KEYS = {"model", "label", "x0", "p0"}

# pass/fail tolerances used by the verdicts
DIFFUSION_SLOPE_RTOL = 0.05
KICK_VARIANCE_RTOL = 0.05
RATE_RTOL = 0.02
ORACLE_SIGMAS = 3.0
LYAPUNOV_RTOL = 0.01
LYAPUNOV_ZERO_ATOL = 1e-3
ENTROPY_DECREASE_TOL = 1e-9
TV_LIMIT = 0.05
EXCLUDED_FRACTION_LIMIT = 1e-3
EXACT_RTOL = 4 * np.finfo(float).eps


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario.

    ``options`` holds the kind-specific settings with defaults applied;
    ``systems`` the model list of a lyapunov scenario.
    """

    kind: str
    name: str
    model: str | None
    params: dict
    units: str = "model"
    hbar_eff: float = 1.0
    gating: str = "unstable_only"
    dt: float | str = 1e-3
    horizon: float = 1.0
    N: int = 10_000
    seed: int = 42
    out: str | None = None
    emit_plots: bool = False
    threads: int = 1
    options: dict = field(default_factory=dict)
    systems: tuple = ()

    @property
    def hbar(self) -> float:
        """Action scale in force: physical in CGS units, ``hbar_eff`` otherwise."""
        return HBAR_CGS if self.units == "cgs" else self.hbar_eff

    def build_model(self) -> HamiltonianModel:
        return builtin_model(self.model, self.params)

    def echo(self) -> dict:
        """Configuration as recorded in the summary (output location and
        worker count excluded: they do not affect results)."""
        d = {
            "kind": self.kind, "name": self.name, "model": self.model, "params": dict(self.params),
            "units": self.units, "hbar": self.hbar, "gating": self.gating, "dt": self.dt,
            "horizon": self.horizon, "N": self.N, "seed": self.seed,
        }
        d.update(self.options)
        if self.systems:
            d["systems"] = [dict(s) for s in self.systems]
        return d


@dataclass
class RunSummary:
    """Outcome of a scenario run."""

    config: ScenarioConfig
    headline: list[dict]
    excluded_paths: int = 0
    wall_clock: float = 0.0
    version: str = __version__
    files: dict = field(default_factory=dict)

    @property
    def verdicts(self) -> list[str]:
        return [h["verdict"] for h in self.headline if h["verdict"] is not None]

    @property
    def passed(self) -> bool:
        return all(v == "PASS" for v in self.verdicts)

    def to_json(self) -> dict:
        return {
            "scenario": self.config.name,
            "kind": self.config.kind,
            "model": self.config.model,
            "params": dict(self.config.params),
            "config": self.config.echo(),
            "headline": self.headline,
            "verdict": ("PASS" if self.passed else "FAIL") if self.verdicts else None,
            "excluded_paths": self.excluded_paths,
            "seed": self.config.seed,
            "version": self.version,
        }


# ---------------------------------------------------------------- parsing

def _model_keys(model: str) -> set[str]:
    required = CATALOG[model][1]
    keys = set(required) | {"n"}
    keys |= {alias for alias, canon in _ALIASES.items() if canon in required}
    return keys


def _number(key, value, *, positive=False, nonneg=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidValue(f"{key} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise InvalidValue(f"{key} must be finite")
    if positive and not value > 0:
        raise InvalidValue(f"{key} must be > 0, got {value}")
    if nonneg and not value >= 0:
        raise InvalidValue(f"{key} must be >= 0, got {value}")
    return value


def _integer(key, value, *, minimum=0, maximum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidValue(f"{key} must be an integer, got {value!r}")
    if value < minimum or (maximum is not None and value > maximum):
        raise InvalidValue(f"{key} out of range: {value}")
    return value


def _flag(key, value) -> bool:
    if not isinstance(value, bool):
        raise InvalidValue(f"{key} must be true or false, got {value!r}")
    return value


def _choice(key, value, choices) -> str:
    if value not in choices:
        raise InvalidValue(f"{key} must be one of {list(choices)}, got {value!r}")
    return value


def _vector(key, value, n) -> list[float]:
    if isinstance(value, list):
        vals = [_number(key, v) for v in value]
        if len(vals) != n:
            raise InvalidValue(f"{key} needs {n} entries, got {len(vals)}")
        return vals
    return [_number(key, value)] * n


def _window(key, value) -> list[float]:
    if not (isinstance(value, list) and len(value) == 2):
        raise InvalidValue(f"{key} must be a two-element list [start, end]")
    lo, hi = (_number(key, v, nonneg=True) for v in value)
    if not hi > lo:
        raise InvalidValue(f"{key} must have end > start")
    return [lo, hi]


def _split_model(table: dict, allowed: set[str], where: str) -> tuple[str, dict]:
    model = table.get("model")
    if not isinstance(model, str):
        raise InvalidValue(f"{where}: model must be a catalog name string")
    if model not in CATALOG:
        raise InvalidValue(f"{where}: unknown model {model!r}; catalog: {sorted(CATALOG)}")
    mkeys = _model_keys(model)
    for key in table:
        if key not in allowed and key not in mkeys:
            raise UnknownKey(f"{where}: unknown key {key!r}")
    params = {k: v for k, v in table.items() if k in mkeys}
    for k, v in params.items():
        if k == "n":
            _integer(k, v, minimum=1)
        else:
            _number(k, v)
    try:
        builtin_model(model, params)
    except StochMechError as exc:
        raise InvalidValue(f"{where}: {exc}") from exc
    return model, params


def _parse_init(doc: dict, n: int, opts: dict, default_kind: str) -> None:
    kind = _choice("init", doc.get("init", default_kind), ("point", "gaussian"))
    opts["init"] = kind
    opts["x0"] = _vector("x0", doc.get("x0", 0.0), n)
    opts["p0"] = _vector("p0", doc.get("p0", 0.0), n)
    if kind == "gaussian":
        opts["var_x0"] = _number("var_x0", doc.get("var_x0", 0.1), nonneg=True)
        opts["var_p0"] = _number("var_p0", doc.get("var_p0", 0.1), nonneg=True)
    elif "var_x0" in doc or "var_p0" in doc:
        raise InvalidValue("var_x0/var_p0 apply only to init = \"gaussian\"")


def parse_config(text: str, name: str | None = None) -> ScenarioConfig:
    """Parse and validate a scenario document.

    Defaults: ``dt = 1e-3``, ``N = 10000``, ``gating = "unstable_only"``,
    ``hbar_eff = 1``, ``seed = 42``, ``units = "model"``, ``horizon = 1``.

    Raises
    ------
    ConfigSyntaxError
        Malformed TOML; the message carries line and column.
    UnknownKey
        A key the selected scenario kind does not use.
    InvalidValue
        A value of the wrong type or outside its domain, or model parameters
        rejected by the catalog.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigSyntaxError(f"invalid scenario file: {exc}") from exc
    kind = doc.get("scenario")
    if kind is None:
        raise InvalidValue("missing required key 'scenario'")
    kind = _choice("scenario", kind, KINDS)
    allowed = _RUN_KEYS | _KIND_KEYS[kind]

    model, params = None, {}
    if kind == "lyapunov" and "model" not in doc:
        for key in doc:
            if key not in allowed:
                raise UnknownKey(f"unknown key {key!r} for scenario kind {kind!r}")
    else:
        model, params = _split_model(doc, allowed, f"scenario kind {kind!r}")

    cfg: dict[str, Any] = dict(DEFAULTS)
    cfg["units"] = _choice("units", doc.get("units", "model"), ("model", "cgs"))
    if cfg["units"] == "cgs" and "hbar_eff" in doc:
        raise InvalidValue("hbar_eff cannot be set with units = \"cgs\" (physical hbar is used)")
    if "hbar_eff" in doc:
        cfg["hbar_eff"] = _number("hbar_eff", doc["hbar_eff"], nonneg=True)
    if "gating" in doc:
        cfg["gating"] = _choice("gating", doc["gating"], tuple(kernels.GATINGS))
    if "dt" in doc:
        if doc["dt"] == "auto" and kind == "master_equation":
            cfg["dt"] = "auto"
        else:
            cfg["dt"] = _number("dt", doc["dt"], positive=True)
    if "horizon" in doc:
        cfg["horizon"] = _number("horizon", doc["horizon"], positive=True)
    if "N" in doc:
        cfg["N"] = _integer("N", doc["N"], minimum=2)
    if "seed" in doc:
        cfg["seed"] = _integer("seed", doc["seed"], maximum=2**64 - 1)
    if "threads" in doc:
        cfg["threads"] = _integer("threads", doc["threads"], minimum=1)
    if "emit_plots" in doc:
        cfg["emit_plots"] = _flag("emit_plots", doc["emit_plots"])
    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        raise InvalidValue("out must be a path string")
    label = doc.get("name", name or kind)
    if not isinstance(label, str) or not label:
        raise InvalidValue("name must be a non-empty string")

    n = int(params.get("n", 1))
    opts: dict[str, Any] = {}
    systems: list[dict] = []
    if kind in ("ensemble", "kick_ensemble") and "scheme" in doc:
        opts["scheme"] = _choice("scheme", doc["scheme"], SCHEMES)
    if kind in ("ensemble", "kick_ensemble"):
        opts.setdefault("scheme", "split_step")
        opts["n_intervals"] = _integer("n_intervals", doc.get("n_intervals", 20), minimum=2)
        if "fit_window" in doc:
            opts["fit_window"] = _window("fit_window", doc["fit_window"])
    if kind == "ensemble":
        _parse_init(doc, n, opts, "point")
        noisy = cfg["hbar_eff"] > 0 and cfg["gating"] != "off" or cfg["units"] == "cgs" and cfg["gating"] != "off"
        fits = (model == "free_particle" and cfg["gating"] == "all_on" and opts["init"] == "point"
                or model == "inverted") and noisy
        if "fit_window" in doc and not fits:
            raise InvalidValue("fit_window is used only by the free-particle slope fit "
                               "(all_on gating, point init) and the inverted-oscillator rate fit")
    elif kind == "kick_ensemble":
        if model != "inverted":
            raise InvalidValue("kick_ensemble requires model = \"inverted\"")
        opts["report_time"] = _number("report_time", doc.get("report_time", cfg["horizon"]), positive=True)
        if opts["report_time"] > cfg["horizon"]:
            raise InvalidValue("report_time must not exceed horizon")
        opts["continuous"] = _flag("continuous", doc.get("continuous", False))
        opts["N_continuous"] = _integer("N_continuous", doc.get("N_continuous", cfg["N"]), minimum=2)
        if not opts["continuous"]:
            for key in ("gating", "scheme", "N_continuous"):
                if key in doc:
                    raise InvalidValue(f"{key} applies only to the continuous-noise run (continuous = true)")
    elif kind == "lyapunov":
        opts["renorm_interval"] = _number("renorm_interval", doc.get("renorm_interval", 0.1), positive=True)
        if "transient" in doc:
            opts["transient"] = _number("transient", doc["transient"], nonneg=True)
        if model is not None:
            if "systems" in doc:
                raise InvalidValue("give either model or systems, not both")
            systems.append({"model": model, "params": params, "label": model,
                            "x0": _vector("x0", doc.get("x0", 0.5), n),
                            "p0": _vector("p0", doc.get("p0", 0.0), n)})
        else:
            tables = doc.get("systems")
            if not (isinstance(tables, list) and tables and all(isinstance(t, dict) for t in tables)):
                raise InvalidValue("lyapunov needs model or a non-empty [[systems]] array")
            for i, t in enumerate(tables):
                m_name, m_params = _split_model(t, _SYSTEM_KEYS, f"systems[{i}]")
                m_n = int(m_params.get("n", 1))
                lab = t.get("label", m_name)
                if not isinstance(lab, str):
                    raise InvalidValue(f"systems[{i}]: label must be a string")
                systems.append({"model": m_name, "params": m_params, "label": lab,
                                "x0": _vector("x0", t.get("x0", doc.get("x0", 0.5)), m_n),
                                "p0": _vector("p0", t.get("p0", doc.get("p0", 0.0)), m_n)})
            labels = [s["label"] for s in systems]
            if len(set(labels)) != len(labels):
                raise InvalidValue("system labels must be unique")
    elif kind == "master_equation":
        if n != 1:
            raise InvalidValue("master_equation handles one degree of freedom")
        b = doc.get("bounds")
        if not (isinstance(b, list) and len(b) == 4):
            raise InvalidValue("bounds must be [x_min, x_max, p_min, p_max]")
        b = [_number("bounds", v) for v in b]
        if not (b[1] > b[0] and b[3] > b[2]):
            raise InvalidValue("bounds must satisfy x_max > x_min and p_max > p_min")
        opts["bounds"] = b
        res = doc.get("resolution", 256)
        res = [res, res] if not isinstance(res, list) else res
        if len(res) != 2:
            raise InvalidValue("resolution must be an integer or [n_x, n_p]")
        opts["resolution"] = [_integer("resolution", r, minimum=16) for r in res]
        default_bc = ["periodic" if model == "pendulum" else "zero_flux", "zero_flux"]
        bc = doc.get("boundary", default_bc)
        if not (isinstance(bc, list) and len(bc) == 2):
            raise InvalidValue("boundary must be a two-element list")
        opts["boundary"] = [_choice("boundary", s, ("periodic", "zero_flux")) for s in bc]
        _parse_init(doc, 1, opts, "gaussian")
        opts["limiter"] = _choice("limiter", doc.get("limiter", "van_leer"), tuple(kernels.LIMITERS))
        opts["strang"] = _flag("strang", doc.get("strang", True))
        opts["entropy_interval"] = _number("entropy_interval", doc.get("entropy_interval", 0.1), positive=True)
        opts["stationarity_threshold"] = _number("stationarity_threshold",
                                                 doc.get("stationarity_threshold", 1e-6), positive=True)
        opts["stop_at_stationarity"] = _flag("stop_at_stationarity", doc.get("stop_at_stationarity", False))
        opts["refinement_check"] = _flag("refinement_check", doc.get("refinement_check", False))
        opts["compare_paths"] = _integer("compare_paths", doc.get("compare_paths", 0))
        opts["compare_cells"] = _integer("compare_cells", doc.get("compare_cells", 64), minimum=1)
        opts["sde_dt"] = _number("sde_dt", doc.get("sde_dt", 1e-3), positive=True)
        for r in opts["resolution"]:
            if opts["compare_paths"] and r % opts["compare_cells"]:
                raise InvalidValue("compare_cells must divide the grid resolution")
        if not opts["compare_paths"] and ("compare_cells" in doc or "sde_dt" in doc):
            raise InvalidValue("compare_cells and sde_dt need compare_paths > 0")
        noiseless = cfg["gating"] == "off" or (cfg["units"] == "model" and cfg["hbar_eff"] == 0)
        if opts["refinement_check"] and not noiseless:
            raise InvalidValue("refinement_check applies to noiseless (Liouville) runs")
    elif kind == "analytic":
        q = doc.get("quantity")
        opts["quantity"] = _choice("quantity", q, QUANTITIES)
        want = "free_particle" if q == "free_drift_rms" else "harmonic"
        if model != want:
            raise InvalidValue(f"quantity {q!r} requires model = {want!r}")
        if q == "free_drift_rms":
            if "tau" not in doc:
                raise InvalidValue("free_drift_rms needs tau")
            opts["tau"] = _number("tau", doc["tau"], nonneg=True)
        elif "tau" in doc:
            raise UnknownKey("unknown key 'tau' for quantity 'zero_point'")
        if "order_of_magnitude" in doc:
            opts["order_of_magnitude"] = _number("order_of_magnitude", doc["order_of_magnitude"], positive=True)
            opts["tolerance_decades"] = _number("tolerance_decades", doc.get("tolerance_decades", 0.5),
                                                positive=True)
        elif "tolerance_decades" in doc:
            raise InvalidValue("tolerance_decades needs order_of_magnitude")

    return ScenarioConfig(
        kind=kind, name=label, model=model, params=params, units=cfg["units"],
        hbar_eff=cfg["hbar_eff"], gating=cfg["gating"], dt=cfg["dt"], horizon=cfg["horizon"],
        N=cfg["N"], seed=cfg["seed"], out=out, emit_plots=cfg["emit_plots"],
        threads=cfg["threads"], options=opts, systems=tuple(systems),
    )


# ---------------------------------------------------------------- catalog

_BUILTINS: dict[str, tuple[str, str]] = {
    "free_mass_universe_age": ("rms drift of a 1 g free mass over the age of the Universe", """
scenario = "analytic"
name = "free_mass_universe_age"
units = "cgs"
quantity = "free_drift_rms"
model = "free_particle"
m = 1.0
tau = 4.10e17
order_of_magnitude = 1e-5
tolerance_decades = 0.5
"""),
    "zero_point": ("zero-point energy of a 1 g, 1 rad/s oscillator", """
scenario = "analytic"
name = "zero_point"
units = "cgs"
quantity = "zero_point"
model = "harmonic"
m = 1.0
omega = 1.0
"""),
    "free_diffusion": ("linear growth of var_x for a noisy free particle", """
scenario = "ensemble"
name = "free_diffusion"
model = "free_particle"
m = 1.0
hbar_eff = 1.0
gating = "all_on"
init = "point"
N = 10000
dt = 1e-3
horizon = 2.0
n_intervals = 20
"""),
    "inverted_trigger": ("exponential amplification of vacuum dispersions on an inverted oscillator", """
scenario = "kick_ensemble"
name = "inverted_trigger"
model = "inverted"
m = 1.0
lambda = 1.0
hbar_eff = 1.0
N = 100000
dt = 1e-3
horizon = 6.0
n_intervals = 30
report_time = 5.0
fit_window = [3.0, 6.0]
continuous = true
"""),
    "lyapunov_zoo": ("Lyapunov spectra and KS entropy across the model catalog", """
scenario = "lyapunov"
name = "lyapunov_zoo"
dt = 1e-3
horizon = 20.0
renorm_interval = 0.1

[[systems]]
model = "free_particle"
m = 1.0
x0 = 0.0
p0 = 0.5

[[systems]]
model = "harmonic"
m = 1.0
omega = 1.0
x0 = 0.5
p0 = 0.0

[[systems]]
model = "inverted"
m = 1.0
lambda = 1.0
x0 = 0.5
p0 = 0.0

[[systems]]
model = "pendulum"
m = 1.0
gl = 1.0
x0 = 3.0
p0 = 0.0

[[systems]]
model = "double_well"
m = 1.0
depth = 1.0
a = 1.0
x0 = 0.2
p0 = 0.0
"""),
    "pendulum_relaxation": ("entropy growth and relaxation of a pendulum density under gated noise", """
scenario = "master_equation"
name = "pendulum_relaxation"
model = "pendulum"
m = 1.0
gl = 1.0
hbar_eff = 0.05
gating = "unstable_only"
bounds = [-3.141592653589793, 3.141592653589793, -3.0, 3.0]
resolution = 256
boundary = ["periodic", "periodic"]
init = "gaussian"
x0 = 0.0
p0 = 2.4
var_x0 = 0.1
var_p0 = 0.02
limiter = "upwind"
dt = "auto"
horizon = 2000.0
entropy_interval = 5.0
stop_at_stationarity = true
"""),
    "liouville_limit": ("noiseless harmonic density: entropy conserved up to a shrinking numerical floor", """
scenario = "master_equation"
name = "liouville_limit"
model = "harmonic"
m = 1.0
omega = 1.0
hbar_eff = 0.0
bounds = [-4.0, 4.0, -4.0, 4.0]
resolution = 128
init = "gaussian"
x0 = 1.5
p0 = 0.0
var_x0 = 0.1
var_p0 = 0.1
limiter = "van_leer"
dt = "auto"
horizon = 6.0
entropy_interval = 0.5
refinement_check = true
"""),
    "grid_vs_paths_free": ("noisy free particle: grid density against an SDE path histogram", """
scenario = "master_equation"
name = "grid_vs_paths_free"
model = "free_particle"
m = 1.0
hbar_eff = 1.0
gating = "all_on"
bounds = [-6.0, 6.0, -3.0, 3.0]
resolution = 256
init = "gaussian"
x0 = 0.0
p0 = 0.0
var_x0 = 0.25
var_p0 = 0.25
dt = "auto"
horizon = 1.0
entropy_interval = 0.1
compare_paths = 100000
compare_cells = 64
sde_dt = 1e-3
"""),
    "grid_vs_paths_inverted": ("noisy inverted oscillator: grid density against an SDE path histogram", """
scenario = "master_equation"
name = "grid_vs_paths_inverted"
model = "inverted"
m = 1.0
lambda = 1.0
hbar_eff = 1.0
gating = "unstable_only"
bounds = [-6.0, 6.0, -6.0, 6.0]
resolution = 256
init = "gaussian"
x0 = 0.0
p0 = 0.0
var_x0 = 0.25
var_p0 = 0.25
dt = "auto"
horizon = 1.0
entropy_interval = 0.1
compare_paths = 100000
compare_cells = 64
sde_dt = 1e-3
"""),
}


def scenario_catalog() -> list[tuple[str, str]]:
    """``(name, description)`` of every built-in scenario."""
    return [(name, desc) for name, (desc, _) in _BUILTINS.items()]


def builtin_text(name: str) -> str:
    if name not in _BUILTINS:
        raise InvalidValue(f"no built-in scenario {name!r}; available: {sorted(_BUILTINS)}")
    return _BUILTINS[name][1].lstrip()


def builtin_config(name: str) -> ScenarioConfig:
    return parse_config(builtin_text(name), name)


# ---------------------------------------------------------------- helpers

def _headline(name, value, uncertainty="exact", reference=None, verdict=None) -> dict:
    def clean(v):
        if isinstance(v, str):
            return v
        v = float(v)
        return v if math.isfinite(v) else None

    if verdict is not None and not isinstance(verdict, str):
        verdict = "PASS" if bool(verdict) else "FAIL"
    return {"name": name, "value": clean(value), "uncertainty": clean(uncertainty),
            "reference": reference, "verdict": verdict}


def _time_index(times: np.ndarray, t: float) -> int:
    i = int(np.argmin(np.abs(times - t)))
    if abs(times[i] - t) > 1e-9 * max(1.0, abs(t)):
        raise InvalidValue(f"time {t} is not a sample time of the run")
    return i


def _within(value, ref, rtol) -> bool:
    return abs(value - ref) <= rtol * abs(ref)


def _init_distribution(opts: dict) -> InitialDistribution:
    if opts["init"] == "point":
        return InitialDistribution.point(opts["x0"], opts["p0"])
    return InitialDistribution.gaussian(opts["x0"], opts["p0"], opts["var_x0"], opts["var_p0"])


def _excluded_headline(excluded: int, total: int, label: str = "excluded_fraction") -> dict:
    frac = excluded / total
    return _headline(label, frac, "exact",
                     f"overflowing paths / N; pass if <= {EXCLUDED_FRACTION_LIMIT:g}",
                     frac <= EXCLUDED_FRACTION_LIMIT)


def _oracle_columns(model, init_cov, spec, cfg, every, prefix=""):
    tr = covariance_ode_oracle(model, init_cov, spec, cfg.horizon, cfg.dt, every)
    n = model.n
    cols = {}
    for i in range(n):
        sfx = "" if n == 1 else f"_{i}"
        cols[f"{prefix}var_x{sfx}_oracle"] = tr.var_x[:, i]
        cols[f"{prefix}var_p{sfx}_oracle"] = tr.var_p[:, i]
    return tr, cols


# ---------------------------------------------------------------- runners

def _run_ensemble(cfg: ScenarioConfig):
    model = cfg.build_model()
    opts = cfg.options
    spec = NoiseSpec(cfg.hbar, cfg.gating, cfg.seed)
    init = _init_distribution(opts)
    every = sample_every_for(_n_steps(cfg.horizon, cfg.dt), opts["n_intervals"])
    res = run_ensemble(model, init, cfg.N, cfg.horizon, cfg.dt, spec, opts["scheme"],
                       sample_every=every, threads=cfg.threads)
    cols = res.columns()
    heads = []
    T = float(res.times[-1])
    oracle = None
    if model.is_linear:
        oracle, ocols = _oracle_columns(model, init.covariance(), spec, cfg, every)
        cols.update(ocols)
    for name, est, se, ref in (
        ("var_x", res.var_x[-1, 0], res.var_x_se[-1, 0], None if oracle is None else oracle.var_x[-1, 0]),
        ("var_p", res.var_p[-1, 0], res.var_p_se[-1, 0], None if oracle is None else oracle.var_p[-1, 0]),
    ):
        if ref is None:
            heads.append(_headline(f"{name}(t={T:g})", est, se))
        else:
            heads.append(_headline(
                f"{name}(t={T:g})", est, se,
                f"covariance moment equations dS/dt = MS + SM^T + Q give {ref:.6g}; "
                f"pass if within {ORACLE_SIGMAS:g} standard errors",
                abs(est - ref) <= ORACLE_SIGMAS * se))
    sigma_x_on = not spec.noiseless and cfg.gating == "all_on"
    if model.name == "free_particle" and sigma_x_on and opts["init"] == "point":
        fit = variance_slope(res, 0, opts.get("fit_window"))
        ref = cfg.hbar / (2 * model.masses[0])
        heads.append(_headline(
            "var_x_slope", fit.slope, fit.se,
            f"diffusion law d(var_x)/dt = hbar/(2m) = {ref:.6g}; pass if within "
            f"{DIFFUSION_SLOPE_RTOL:.0%} and inside the 95% interval",
            _within(fit.slope, ref, DIFFUSION_SLOPE_RTOL) and fit.contains(ref)))
        heads.append(_headline("var_x_slope_ci_low", fit.ci_low, fit.se))
        heads.append(_headline("var_x_slope_ci_high", fit.ci_high, fit.se))
    if model.name == "inverted" and not spec.noiseless:
        window = opts.get("fit_window", [cfg.horizon / 2, cfg.horizon])
        fit = exponential_rate_fit(res, 0, window)
        lam = model.params["lambda"]
        heads.append(_headline(
            "var_x_rate", fit.rate, fit.rate_se,
            f"exponential growth rate 2*lambda = {2 * lam:.6g} on t in {window}; "
            f"pass if within {RATE_RTOL:.0%}",
            _within(fit.rate, 2 * lam, RATE_RTOL)))
    heads.append(_headline(f"mean_E(t={T:g})", res.mean_E[-1], res.mean_E_se[-1]))
    heads.append(_excluded_headline(res.excluded, cfg.N))
    return heads, cols, res.excluded


def _run_kick(cfg: ScenarioConfig):
    model = cfg.build_model()
    opts = cfg.options
    m, lam = model.masses[0], model.params["lambda"]
    hbar = cfg.hbar
    every = sample_every_for(_n_steps(cfg.horizon, cfg.dt), opts["n_intervals"])
    window = opts.get("fit_window", [cfg.horizon / 2, cfg.horizon])
    res = kick_ensemble(model, hbar, cfg.N, cfg.horizon, cfg.dt, cfg.seed,
                        sample_every=every, threads=cfg.threads)
    t_rep = opts["report_time"]
    k = _time_index(res.times, t_rep)
    cols = res.columns()
    # Gaussian dispersions hbar/2m*lam and hbar*m*lam/2 carried by the exact flow
    exact = (hbar / (2 * m * lam)) * np.cosh(2 * lam * res.times)
    cols["var_x_exact"] = exact
    heads = [
        _headline(f"var_x(t={t_rep:g})", res.var_x[k, 0], res.var_x_se[k, 0],
                  f"exact propagation (hbar/(2 m lambda)) cosh(2 lambda t) = {exact[k]:.6g}; "
                  f"pass if within {KICK_VARIANCE_RTOL:.0%}",
                  _within(res.var_x[k, 0], exact[k], KICK_VARIANCE_RTOL)),
    ]
    fit = exponential_rate_fit(res, 0, window)
    heads.append(_headline("var_x_rate", fit.rate, fit.rate_se,
                           f"growth rate 2*lambda = {2 * lam:.6g} on t in {window}; "
                           f"pass if within {RATE_RTOL:.0%}",
                           _within(fit.rate, 2 * lam, RATE_RTOL)))
    ref_pref = hbar / (4 * m * lam)
    heads.append(_headline("var_x_prefactor", fit.prefactor, fit.prefactor_se,
                           f"asymptotic prefactor hbar/(4 m lambda) = {ref_pref:.6g}; "
                           f"pass if within {KICK_VARIANCE_RTOL:.0%}",
                           _within(fit.prefactor, ref_pref, KICK_VARIANCE_RTOL)))
    heads.append(_excluded_headline(res.excluded, cfg.N))
    excluded = res.excluded
    if opts["continuous"]:
        spec = NoiseSpec(hbar, cfg.gating, cfg.seed)
        init = InitialDistribution.point([0.0] * model.n, [0.0] * model.n)
        N2 = opts["N_continuous"]
        cres = run_ensemble(model, init, N2, cfg.horizon, cfg.dt, spec, opts["scheme"],
                            sample_every=every, threads=cfg.threads)
        oracle, ocols = _oracle_columns(model, init.covariance(), spec, cfg, every, "continuous_")
        for key, col in cres.columns().items():
            if key != "time":
                cols["continuous_" + key] = col
        cols.update(ocols)
        ref = oracle.var_x[k, 0]
        heads.append(_headline(
            f"continuous_var_x(t={t_rep:g})", cres.var_x[k, 0], cres.var_x_se[k, 0],
            f"covariance moment equations give {ref:.6g}; pass if within {ORACLE_SIGMAS:g} standard errors",
            abs(cres.var_x[k, 0] - ref) <= ORACLE_SIGMAS * cres.var_x_se[k, 0]))
        cfit = exponential_rate_fit(cres, 0, window)
        heads.append(_headline("continuous_var_x_rate", cfit.rate, cfit.rate_se,
                               f"growth rate 2*lambda = {2 * lam:.6g} on t in {window}; "
                               f"pass if within {RATE_RTOL:.0%}",
                               _within(cfit.rate, 2 * lam, RATE_RTOL)))
        # reference prefactor: same log-linear fit applied to the oracle variance
        mask = (oracle.times >= window[0] - 1e-9) & (oracle.times <= window[1] + 1e-9)
        slope, icpt = np.polyfit(oracle.times[mask], np.log(oracle.var_x[mask, 0]), 1)
        opref = math.exp(icpt)
        heads.append(_headline("continuous_var_x_prefactor", cfit.prefactor, cfit.prefactor_se,
                               f"prefactor of the moment-equation variance fitted on {window} = "
                               f"{opref:.6g}; pass if within {KICK_VARIANCE_RTOL:.0%}",
                               _within(cfit.prefactor, opref, KICK_VARIANCE_RTOL)))
        heads.append(_excluded_headline(cres.excluded, N2, "continuous_excluded_fraction"))
        excluded += cres.excluded
    return heads, cols, excluded


def _run_lyapunov(cfg: ScenarioConfig):
    opts = cfg.options
    heads, cols = [], {}
    for sysd in cfg.systems:
        model = builtin_model(sysd["model"], sysd["params"])
        lab = sysd["label"]
        rep = lyapunov_spectrum(model, PhaseState(sysd["x0"], sysd["p0"]), cfg.horizon, cfg.dt,
                                opts["renorm_interval"], opts.get("transient"))
        hist = rep.history
        if "time" not in cols:
            cols["time"] = rep.transient + rep.renorm_interval * np.arange(1, len(hist) + 1)
        elif len(cols["time"]) != len(hist):
            raise InvalidValue("all systems must share the same horizon and renormalisation grid")
        for i in range(hist.shape[1]):
            cols[f"{lab}_lambda_{i + 1}"] = hist[:, i]
        # uncertainty: drift of the running estimate over the last tenth of the run
        tail = hist[int(0.9 * (len(hist) - 1)):]
        unc = np.max(np.abs(tail - tail[-1]), axis=0) if len(tail) else np.full(hist.shape[1], np.nan)
        s = rep.spectrum
        ref, verdict = None, None
        if not rep.valid:
            ref, verdict = f"estimate invalid: {rep.message}", False
        elif model.name == "inverted":
            lam = model.params["lambda"]
            want = np.array([lam] * model.n + [-lam] * model.n)
            ref = f"spectrum {{+lambda, -lambda}} = {{{lam:g}, {-lam:g}}}; pass if each within {LYAPUNOV_RTOL:.0%}"
            verdict = bool(np.all(np.abs(s - want) <= LYAPUNOV_RTOL * lam))
        elif model.name in ("free_particle", "harmonic"):
            ref = f"regular flow: all |lambda_i| < {LYAPUNOV_ZERO_ATOL:g} and h = 0"
            verdict = bool(np.all(np.abs(s) < LYAPUNOV_ZERO_ATOL) and rep.ks_entropy < LYAPUNOV_ZERO_ATOL)
        heads.append(_headline(f"{lab}.lambda_max", s[0], unc[0], ref, verdict))
        heads.append(_headline(f"{lab}.lambda_min", s[-1], unc[-1]))
        heads.append(_headline(f"{lab}.ks_entropy", rep.ks_entropy, float(np.sum(unc[s > 0])) if np.any(s > 0) else 0.0))
    return heads, cols, 0


def _solve_grid(cfg: ScenarioConfig, model, resolution):
    opts = cfg.options
    init = _init_distribution(opts)
    grid = build_grid(opts["bounds"], resolution, init, tuple(opts["boundary"]))
    base = dict(hbar_eff=cfg.hbar, gating=cfg.gating, strang=opts["strang"],
                entropy_interval=opts["entropy_interval"], limiter=opts["limiter"],
                stationarity_threshold=opts["stationarity_threshold"],
                stop_at_stationarity=opts["stop_at_stationarity"])
    dt = cfg.dt
    if dt == "auto":
        dt = stable_dt(model, grid, MasterEqConfig(dt=1.0, **base))
        # land exactly on the sampling interval
        dt = opts["entropy_interval"] / math.ceil(opts["entropy_interval"] / dt)
    mcfg = MasterEqConfig(dt=dt, **base)
    moments = [grid_variances(grid)]
    result = evolve_master_equation(model, grid, cfg.horizon, mcfg,
                                    callback=lambda t, g: moments.append(grid_variances(g)))
    return result, np.array(moments), dt


def _run_master(cfg: ScenarioConfig):
    model = cfg.build_model()
    opts = cfg.options
    res, mom, dt = _solve_grid(cfg, model, opts["resolution"])
    cols = {"time": res.times, "entropy": res.entropy, "l1_rate": res.l1_rate,
            "mean_x": mom[:, 0], "var_x": mom[:, 1], "mean_p": mom[:, 2], "var_p": mom[:, 3]}
    dS = np.diff(res.entropy)
    min_dS = float(dS.min()) if len(dS) else 0.0
    noisy = cfg.hbar > 0 and cfg.gating != "off"
    heads = [_headline("dt", dt), _headline("final_time", res.times[-1]),
             _headline("entropy_final", res.entropy[-1])]
    if noisy:
        heads.append(_headline("entropy_min_increment", min_dS, "exact",
                               f"H-theorem: Gibbs entropy non-decreasing at every sample; "
                               f"pass if min dS >= -{ENTROPY_DECREASE_TOL:g}",
                               min_dS >= -ENTROPY_DECREASE_TOL))
    else:
        drift = float(np.max(np.abs(res.entropy - res.entropy[0])))
        heads.append(_headline("entropy_drift", drift))
        if opts["refinement_check"]:
            fine = [2 * r for r in opts["resolution"]]
            res2, _, _ = _solve_grid(cfg, model, fine)
            drift2 = float(np.max(np.abs(res2.entropy - res2.entropy[0])))
            heads.append(_headline(
                "entropy_drift_refined", drift2, "exact",
                f"Liouville limit: entropy drift at {fine[0]}x{fine[1]} must be below the "
                f"{opts['resolution'][0]}x{opts['resolution'][1]} value {drift:.6g}",
                drift2 < drift))
    final_rate = float(res.l1_rate[-1]) if len(res.l1_rate) > 1 else float("nan")
    heads.append(_headline(
        "l1_rate_final", final_rate, "exact",
        f"stationarity: L1 change per unit time < {opts['stationarity_threshold']:g}"
        if opts["stop_at_stationarity"] else None,
        res.stationary if opts["stop_at_stationarity"] else None))
    if res.stationary:
        heads.append(_headline("stationary_time", res.stationary_time))
    heads.append(_headline("max_mass_error", res.max_mass_error))
    heads.append(_headline("min_density", res.min_density, "exact",
                           "positivity: density never negative", res.min_density >= 0.0))
    excluded = 0
    if opts["compare_paths"]:
        N = opts["compare_paths"]
        spec = NoiseSpec(cfg.hbar, cfg.gating, cfg.seed)
        init = _init_distribution(opts)
        every = _n_steps(cfg.horizon, opts["sde_dt"])
        ens = run_ensemble(model, init, N, cfg.horizon, opts["sde_dt"], spec,
                           sample_every=every, threads=cfg.threads)
        pts = np.column_stack([ens.xs[:, -1, 0], ens.ps[:, -1, 0]])
        factor = opts["resolution"][0] // opts["compare_cells"]
        coarse = coarsen(res.grid, factor)
        tv = compare_histogram(coarse, pts)
        q = coarse.rho * coarse.cell_area
        # expected distance from multinomial sampling noise alone
        noise = float(0.5 * np.sum(np.sqrt(2 * q * (1 - q) / (math.pi * N))))
        c = opts["compare_cells"]
        heads.append(_headline(f"tv_distance_{c}x{c}", tv, noise,
                               f"grid vs {N}-path SDE histogram on {c}x{c} cells; "
                               f"pass if total variation < {TV_LIMIT:g}", tv < TV_LIMIT))
        heads.append(_excluded_headline(ens.excluded, N))
        excluded = ens.excluded
    return heads, cols, excluded


def _run_analytic(cfg: ScenarioConfig):
    model = cfg.build_model()
    opts = cfg.options
    hbar = cfg.hbar
    m = model.masses[0]
    heads, cols = [], {}
    if opts["quantity"] == "free_drift_rms":
        tau = opts["tau"]
        rms = math.sqrt(hbar * tau / (2 * m))
        ref, verdict = None, None
        if "order_of_magnitude" in opts:
            target, tol = opts["order_of_magnitude"], opts["tolerance_decades"]
            ref = (f"rms drift sqrt(hbar*tau/(2m)) against the estimate ~{target:g}; "
                   f"pass if within {tol:g} decades")
            verdict = abs(math.log10(rms / target)) <= tol if rms > 0 else False
        heads.append(_headline("rms_drift", rms, "exact", ref, verdict))
        heads.append(_headline("hbar", hbar))
        t = tau * np.linspace(0.0, 1.0, 21)
        cols = {"time": t, "var_x": hbar * t / (2 * m), "rms_x": np.sqrt(hbar * t / (2 * m))}
    else:
        omega = model.params["omega"]
        d = minimal_uncertainty_dispersions(model, hbar)
        e_ref = hbar * omega / 2
        prod_ref = hbar**2 / 4
        heads.append(_headline("mean_energy", d.mean_energy, "exact",
                               f"zero-point energy hbar*omega/2 = {e_ref:.6g}; pass to machine precision",
                               _within(d.mean_energy, e_ref, EXACT_RTOL)))
        prod = d.var_x * d.var_p
        heads.append(_headline("uncertainty_product", prod, "exact",
                               f"var_x*var_p = hbar^2/4 = {prod_ref:.6g}; pass to machine precision",
                               _within(prod, prod_ref, EXACT_RTOL)))
        heads.append(_headline("var_x", d.var_x))
        heads.append(_headline("var_p", d.var_p))
        cols = {"time": np.zeros(1), "var_x": np.array([d.var_x]), "var_p": np.array([d.var_p]),
                "mean_E": np.array([d.mean_energy])}
    return heads, cols, 0


_RUNNERS = {
    "ensemble": _run_ensemble,
    "kick_ensemble": _run_kick,
    "lyapunov": _run_lyapunov,
    "master_equation": _run_master,
    "analytic": _run_analytic,
}


# ---------------------------------------------------------------- output

def write_timeseries(path: Path, cols: dict[str, np.ndarray]) -> None:
    """CSV with ``time`` first and 17 significant digits."""
    names = ["time"] + [k for k in cols if k != "time"]
    data = np.column_stack([np.asarray(cols[k], dtype=float) for k in names])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


_PLOT_TEMPLATE = '''"""Plot every column of timeseries.csv against time (needs matplotlib)."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
with open(here / "timeseries.csv", newline="") as fh:
    rows = list(csv.reader(fh))
names, data = rows[0], [[float(v) for v in r] for r in rows[1:]]
cols = {{n: [r[i] for r in data] for i, n in enumerate(names)}}
series = [n for n in names[1:] if not n.endswith("_se")]
fig, axes = plt.subplots(len(series), 1, figsize=(7, 2.2 * len(series)), sharex=True, squeeze=False)
for ax, name in zip(axes[:, 0], series):
    ax.plot(cols["time"], cols[name], label=name)
    if name + "_se" in cols:
        lo = [v - 2 * s for v, s in zip(cols[name], cols[name + "_se"])]
        hi = [v + 2 * s for v, s in zip(cols[name], cols[name + "_se"])]
        ax.fill_between(cols["time"], lo, hi, alpha=0.3)
    ax.legend(loc="best")
axes[-1, 0].set_xlabel("time")
fig.suptitle("{name}")
fig.tight_layout()
fig.savefig(here / "timeseries.png", dpi=120)
if "--show" in sys.argv:
    plt.show()
'''


def run_scenario(config: ScenarioConfig, out: str | Path | None = None) -> RunSummary:
    """Execute ``config`` and write its output files.

    The output directory is ``out``, else ``config.out``, else
    ``./stochmech_runs/<name>``.
    """
    out_dir = Path(out or config.out or Path("stochmech_runs") / config.name)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    heads, cols, excluded = _RUNNERS[config.kind](config)
    wall = time.perf_counter() - t0
    summary = RunSummary(config, heads, excluded, wall)
    files = {"timeseries": out_dir / "timeseries.csv", "summary": out_dir / "summary.json",
             "run_info": out_dir / "run_info.json"}
    write_timeseries(files["timeseries"], cols)
    files["summary"].write_text(json.dumps(summary.to_json(), indent=2, ensure_ascii=False) + "\n",
                                encoding="utf-8")
    info = {"wall_clock_seconds": wall, "threads": config.threads, "backend": kernels.BACKEND,
            "version": __version__}
    files["run_info"].write_text(json.dumps(info, indent=2) + "\n", encoding="utf-8")
    if config.emit_plots:
        files["plot"] = out_dir / "plot_timeseries.py"
        files["plot"].write_text(_PLOT_TEMPLATE.format(name=config.name), encoding="utf-8")
    summary.files = {k: str(v) for k, v in files.items()}
    return summary


def apply_overrides(config: ScenarioConfig, **overrides) -> ScenarioConfig:
    """Return ``config`` with non-None command-line overrides applied."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    if "seed" in changes:
        _integer("seed", changes["seed"], maximum=2**64 - 1)
    if "threads" in changes:
        _integer("threads", changes["threads"], minimum=1)
    return replace(config, **changes)
