"""Scenario configuration: schema, defaults, and unit handling.

Config files are JSON. Quantities are SI in-file (Hz, m, s, W, linear
factors); fields that are conventionally quoted in decibels accept a
suffixed alternative instead (``transmit_power_dbm``,
``noise_psd_dbm_per_hz``, ``noise_figure_db``, ``clock_bias_ns``). A base
field and its suffixed form are mutually exclusive, so a config can never
silently mix units. Unset fields fall back to the default indoor scenario.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from ..adhoc import AdhocConfig
from ..errors import ConfigError, GeometryError
from ..geometry import Scene, euler_zyx_to_rotation
from ..mle import MlConfig
from ..signal_model import SignalConfig, build_signal_config, random_beams

EXPERIMENT_NAMES = ("rmse_vs_power", "bound_cdf", "parameter_sweep",
                    "coverage_contour")
SWEEP_AXES = ("bandwidth", "N_UE", "N_BS", "num_IPs")
XI_BLOCK_NAMES = ("orientation", "position", "ips", "bias")

_VEC3 = {"type": "array", "items": {"type": "number"},
         "minItems": 3, "maxItems": 3}
_RANGE = {"type": "array", "items": {"type": "number"},
          "minItems": 2, "maxItems": 2}
_ROTATION = {
    "type": "object",
    "oneOf": [
        {"required": ["euler_zyx"]},
        {"required": ["matrix"]},
    ],
    "properties": {
        "euler_zyx": _VEC3,
        "matrix": {"type": "array", "items": _VEC3,
                   "minItems": 3, "maxItems": 3},
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scene": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p_bs": _VEC3,
                "r_bs": _ROTATION,
                "p_ue": _VEC3,
                "r_ue": _ROTATION,
                "ips": {"type": "array", "items": _VEC3, "minItems": 1},
                "reflection_coeffs": {
                    "type": "array", "minItems": 1,
                    "items": {"type": "number",
                              "exclusiveMinimum": 0, "maximum": 1},
                },
                "clock_bias": {"type": "number"},
                "clock_bias_ns": {"type": "number"},
            },
        },
        "signal": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "carrier_frequency": {"type": "number",
                                      "exclusiveMinimum": 0},
                "subcarrier_spacing": {"type": "number",
                                       "exclusiveMinimum": 0},
                "num_subcarriers": {"type": "integer", "minimum": 1},
                "num_symbols": {"type": "integer", "minimum": 1},
                "transmit_power": {"type": "number", "exclusiveMinimum": 0},
                "transmit_power_dbm": {"type": "number"},
                "noise_psd": {"type": "number", "exclusiveMinimum": 0},
                "noise_psd_dbm_per_hz": {"type": "number"},
                "noise_figure": {"type": "number", "minimum": 1},
                "noise_figure_db": {"type": "number", "minimum": 0},
                "num_bs_antennas": {"type": "integer", "minimum": 1},
                "num_ue_antennas": {"type": "integer", "minimum": 1},
            },
        },
        "estimators": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "adhoc": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "psi_grid_step": {"type": "number",
                                          "exclusiveMinimum": 0},
                        "refine_psi": {"type": "boolean"},
                    },
                },
                "ml": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "max_outer_iters": {"type": "integer", "minimum": 1},
                        "nll_rel_tol": {"type": "number",
                                        "exclusiveMinimum": 0},
                        "shrink_factor": {"type": "number",
                                          "exclusiveMinimum": 0,
                                          "exclusiveMaximum": 1},
                        "sufficient_decrease": {"type": "number",
                                                "exclusiveMinimum": 0},
                        "initial_step": {"type": "number",
                                         "exclusiveMinimum": 0},
                        "euclidean_inner_iters": {"type": "integer",
                                                  "minimum": 1},
                    },
                },
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"enum": list(EXPERIMENT_NAMES)},
                "trials": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0,
                         "maximum": 2 ** 64 - 1},
                "threads": {"type": "integer", "minimum": 1},
                "power_grid_dbm": {"type": "array", "minItems": 1,
                                   "items": {"type": "number"}},
                "measurement_noise_scale": {"type": "number", "minimum": 0},
                "axis": {"enum": list(SWEEP_AXES)},
                "sweep_grid": {"type": "array", "minItems": 1,
                               "items": {"type": "number"}},
                "side_information": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["name", "known"],
                        "properties": {
                            "name": {"type": "string", "minLength": 1},
                            "known": {
                                "type": "array", "minItems": 1,
                                "items": {"enum": list(XI_BLOCK_NAMES)},
                            },
                        },
                    },
                },
                "room": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"x": _RANGE, "y": _RANGE, "z": _RANGE},
                },
                "random_reflection_coeff": {"type": "number",
                                            "exclusiveMinimum": 0,
                                            "maximum": 1},
                "grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["position", "orientation"]},
                        "shape": {"type": "array", "minItems": 2,
                                  "maxItems": 2,
                                  "items": {"type": "integer", "minimum": 2}},
                        "x_range": _RANGE,
                        "y_range": _RANGE,
                        "fixed_z": {"type": "number"},
                        "alpha_range": _RANGE,
                        "gamma_range": _RANGE,
                        "fixed_beta": {"type": "number"},
                    },
                },
                "identifiability_threshold": {"type": "number",
                                              "exclusiveMinimum": 0},
            },
        },
    },
}

# Default indoor scenario: 8 x 8 x 4 m room, wall-mounted downtilted BS,
# two reflecting surfaces. All varying experiment knobs keep their
# headline values here.
DEFAULT_CONFIG = {
    "scene": {
        "p_bs": [4.0, 0.0, 4.0],
        "r_bs": {"euler_zyx": [0.0, 0.0, -math.pi / 2.0]},
        "p_ue": [5.0, 4.0, 1.0],
        "r_ue": {"euler_zyx": [0.0, 0.0, math.pi / 2.0]},
        "ips": [[8.0, 2.0, 1.0], [0.0, 6.0, 2.0]],
        "reflection_coeffs": [0.2, 0.8],
        "clock_bias_ns": 100.0,
    },
    "signal": {
        "carrier_frequency": 28.0e9,
        "subcarrier_spacing": 120.0e3,
        "num_subcarriers": 3333,
        "num_symbols": 10,
        "transmit_power_dbm": 10.0,
        "noise_psd_dbm_per_hz": -174.0,
        "noise_figure_db": 13.0,
        "num_bs_antennas": 64,
        "num_ue_antennas": 4,
    },
    "estimators": {
        "adhoc": {"psi_grid_step": math.pi / 200.0, "refine_psi": False},
        "ml": {},
    },
    "experiment": {
        "name": "rmse_vs_power",
        "trials": 1000,
        "seed": 0,
        "threads": 1,
        "power_grid_dbm": [0.0, 5.0, 10.0, 15.0, 20.0],
        "measurement_noise_scale": 1.0,
        "axis": "bandwidth",
        "side_information": [],
        "room": {"x": [0.0, 8.0], "y": [0.0, 8.0], "z": [0.0, 4.0]},
        "random_reflection_coeff": 0.7,
        "grid": {
            "kind": "position",
            "shape": [81, 81],
            "x_range": [0.0, 8.0],
            "y_range": [0.0, 8.0],
            "fixed_z": 1.0,
            "alpha_range": [0.0, 2.0 * math.pi],
            "gamma_range": [0.0, 2.0 * math.pi],
            "fixed_beta": -math.pi / 4.0,
        },
        "identifiability_threshold": 1e-9,
    },
}

# (section, base field, suffixed field, conversion applied to the suffix)
_UNIT_ALTERNATES = (
    ("signal", "transmit_power", "transmit_power_dbm"),
    ("signal", "noise_psd", "noise_psd_dbm_per_hz"),
    ("signal", "noise_figure", "noise_figure_db"),
    ("scene", "clock_bias", "clock_bias_ns"),
)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (float(dbm) / 10.0) * 1e-3


def db_to_linear(db: float) -> float:
    return 10.0 ** (float(db) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(float(watts) / 1e-3)


def merge_config(user: dict | None) -> dict:
    """Overlay a user config onto the defaults.

    Dict values merge recursively; everything else replaces. Supplying one
    member of a unit-alternate pair removes the default's other member, and
    overriding ``ips`` without ``reflection_coeffs`` resets the
    coefficients to the generic reflector value (0.7 per surface).
    """
    merged = json.loads(json.dumps(DEFAULT_CONFIG))
    user = user or {}
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    for section, base, alt in _UNIT_ALTERNATES:
        given = user.get(section)
        if isinstance(given, dict) and (base in given or alt in given):
            merged[section].pop(base, None)
            merged[section].pop(alt, None)
    scene = user.get("scene")
    if isinstance(scene, dict) and "ips" in scene \
            and "reflection_coeffs" not in scene:
        exp = user.get("experiment")
        coeff = merged["experiment"]["random_reflection_coeff"]
        if isinstance(exp, dict):
            coeff = exp.get("random_reflection_coeff", coeff)
        merged["scene"]["reflection_coeffs"] = [coeff] * len(scene["ips"])
    _deep_merge(merged, user)
    return merged


def _deep_merge(base: dict, overlay: dict) -> None:
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value


def validate_config(merged: dict) -> None:
    """Schema plus semantic checks; raises ConfigError with a diagnostic."""
    try:
        jsonschema.validate(merged, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {path}: {exc.message}") from exc
    for section, base, alt in _UNIT_ALTERNATES:
        fields = merged.get(section, {})
        if base in fields and alt in fields:
            raise ConfigError(
                f"{section}.{base} and {section}.{alt} are mutually "
                "exclusive; give the value in one unit only")
        if base not in fields and alt not in fields:
            raise ConfigError(f"{section} must set {base} or {alt}")
    scene = merged["scene"]
    if len(scene["reflection_coeffs"]) != len(scene["ips"]):
        raise ConfigError("scene.reflection_coeffs length must equal the "
                          "number of scene.ips")
    signal = merged["signal"]
    for name in ("num_bs_antennas", "num_ue_antennas"):
        count = signal[name]
        side = math.isqrt(count)
        if side * side != count:
            raise ConfigError(
                f"signal.{name}={count} does not form a square planar array")
    exp = merged["experiment"]
    grid = exp["grid"]
    for lo_hi_name in ("x_range", "y_range", "alpha_range", "gamma_range"):
        lo, hi = grid[lo_hi_name]
        if not lo < hi:
            raise ConfigError(f"experiment.grid.{lo_hi_name} must be "
                              "increasing")
    for axis_name in ("x", "y", "z"):
        lo, hi = exp["room"][axis_name]
        if not lo < hi:
            raise ConfigError(f"experiment.room.{axis_name} must be "
                              "increasing")


def rotation_from_config(obj: dict) -> np.ndarray:
    if "euler_zyx" in obj:
        alpha, beta, gamma = (float(v) for v in obj["euler_zyx"])
        return euler_zyx_to_rotation(alpha, beta, gamma)
    return np.asarray(obj["matrix"], dtype=float)


@dataclass(frozen=True)
class SignalParams:
    """Waveform and front-end numbers in SI units, with no beams attached.

    Beams are drawn per Monte Carlo trial; trial_signal_config turns these
    numbers plus an RNG into a concrete SignalConfig.
    """

    carrier_frequency: float
    subcarrier_spacing: float
    num_subcarriers: int
    num_symbols: int
    transmit_power: float
    noise_psd: float
    noise_figure: float
    num_bs_antennas: int
    num_ue_antennas: int


@dataclass(frozen=True)
class GridSpec:
    """Contour grid: either UE x-y position or Euler alpha-gamma slices."""

    kind: str
    shape: tuple[int, int]
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    fixed_z: float
    alpha_range: tuple[float, float]
    gamma_range: tuple[float, float]
    fixed_beta: float

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        n1, n2 = self.shape
        if self.kind == "position":
            return (np.linspace(*self.x_range, n1),
                    np.linspace(*self.y_range, n2))
        return (np.linspace(*self.alpha_range, n1),
                np.linspace(*self.gamma_range, n2))


@dataclass(frozen=True)
class ExperimentPlan:
    name: str
    trials: int
    seed: int
    threads: int
    power_grid_dbm: tuple[float, ...]
    measurement_noise_scale: float
    axis: str
    sweep_grid: tuple[float, ...] | None
    side_information: tuple[tuple[str, frozenset[str]], ...]
    room: np.ndarray
    random_reflection_coeff: float
    grid: GridSpec
    identifiability_threshold: float


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved run description.

    merged holds the canonical JSON dict the scenario was built from; its
    digest goes into every run manifest so emitted rows stay traceable to
    an exact configuration.
    """

    scene: Scene
    signal: SignalParams
    adhoc: AdhocConfig
    ml: MlConfig
    experiment: ExperimentPlan
    merged: dict = field(repr=False)


def config_digest(merged: dict) -> str:
    canonical = json.dumps(merged, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def scenario_from_dict(merged: dict) -> ScenarioConfig:
    """Build the typed scenario from a merged, validated config dict."""
    scene_cfg = merged["scene"]
    if "clock_bias" in scene_cfg:
        bias = float(scene_cfg["clock_bias"])
    else:
        bias = float(scene_cfg["clock_bias_ns"]) * 1e-9
    try:
        scene = Scene(
            p_bs=np.asarray(scene_cfg["p_bs"], dtype=float),
            r_bs=rotation_from_config(scene_cfg["r_bs"]),
            p_ue=np.asarray(scene_cfg["p_ue"], dtype=float),
            r_ue=rotation_from_config(scene_cfg["r_ue"]),
            ips=np.asarray(scene_cfg["ips"], dtype=float),
            clock_bias=bias,
            reflection_coeffs=np.asarray(scene_cfg["reflection_coeffs"],
                                         dtype=float),
        )
    except GeometryError as exc:
        raise ConfigError(f"scene: {exc}") from exc

    sig = merged["signal"]
    if "transmit_power" in sig:
        power = float(sig["transmit_power"])
    else:
        power = dbm_to_watts(sig["transmit_power_dbm"])
    if "noise_psd" in sig:
        psd = float(sig["noise_psd"])
    else:
        psd = dbm_to_watts(sig["noise_psd_dbm_per_hz"])
    if "noise_figure" in sig:
        figure = float(sig["noise_figure"])
    else:
        figure = db_to_linear(sig["noise_figure_db"])
    signal = SignalParams(
        carrier_frequency=float(sig["carrier_frequency"]),
        subcarrier_spacing=float(sig["subcarrier_spacing"]),
        num_subcarriers=int(sig["num_subcarriers"]),
        num_symbols=int(sig["num_symbols"]),
        transmit_power=power,
        noise_psd=psd,
        noise_figure=figure,
        num_bs_antennas=int(sig["num_bs_antennas"]),
        num_ue_antennas=int(sig["num_ue_antennas"]),
    )

    est = merged["estimators"]
    try:
        adhoc = AdhocConfig(**est["adhoc"])
        ml = MlConfig(**est["ml"])
    except GeometryError as exc:
        raise ConfigError(f"estimators: {exc}") from exc

    exp = merged["experiment"]
    grid_cfg = exp["grid"]
    grid = GridSpec(
        kind=grid_cfg["kind"],
        shape=tuple(int(n) for n in grid_cfg["shape"]),
        x_range=tuple(float(v) for v in grid_cfg["x_range"]),
        y_range=tuple(float(v) for v in grid_cfg["y_range"]),
        fixed_z=float(grid_cfg["fixed_z"]),
        alpha_range=tuple(float(v) for v in grid_cfg["alpha_range"]),
        gamma_range=tuple(float(v) for v in grid_cfg["gamma_range"]),
        fixed_beta=float(grid_cfg["fixed_beta"]),
    )
    room = np.array([exp["room"]["x"], exp["room"]["y"], exp["room"]["z"]],
                    dtype=float)
    room.setflags(write=False)
    side = tuple((entry["name"], frozenset(entry["known"]))
                 for entry in exp["side_information"])
    sweep_grid = exp.get("sweep_grid")
    plan = ExperimentPlan(
        name=exp["name"],
        trials=int(exp["trials"]),
        seed=int(exp["seed"]),
        threads=int(exp["threads"]),
        power_grid_dbm=tuple(float(p) for p in exp["power_grid_dbm"]),
        measurement_noise_scale=float(exp["measurement_noise_scale"]),
        axis=exp["axis"],
        sweep_grid=None if sweep_grid is None
        else tuple(float(v) for v in sweep_grid),
        side_information=side,
        room=room,
        random_reflection_coeff=float(exp["random_reflection_coeff"]),
        grid=grid,
        identifiability_threshold=float(exp["identifiability_threshold"]),
    )
    return ScenarioConfig(scene=scene, signal=signal, adhoc=adhoc, ml=ml,
                          experiment=plan, merged=merged)


def load_config(path: str | None = None,
                overrides: dict | None = None) -> ScenarioConfig:
    """Read, merge, validate, and resolve a config file.

    path=None means pure defaults. overrides is a partial config dict
    applied on top of the file (CLI flags land here).
    """
    user: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                user = json.load(handle)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: "
                              f"{exc}") from exc
    if overrides:
        _deep_merge(user, overrides)
    merged = merge_config(user)
    validate_config(merged)
    return scenario_from_dict(merged)


def trial_signal_config(signal: SignalParams,
                        rng: np.random.Generator) -> SignalConfig:
    """Concrete SignalConfig with fresh random beams.

    BS precoders are drawn before UE combiners; callers relying on
    reproducibility must preserve that order.
    """
    precoders = random_beams(rng, signal.num_bs_antennas, signal.num_symbols)
    combiners = random_beams(rng, signal.num_ue_antennas, signal.num_symbols)
    return build_signal_config(
        carrier_frequency=signal.carrier_frequency,
        subcarrier_spacing=signal.subcarrier_spacing,
        num_subcarriers=signal.num_subcarriers,
        num_symbols=signal.num_symbols,
        transmit_power=signal.transmit_power,
        noise_psd=signal.noise_psd,
        noise_figure=signal.noise_figure,
        precoders=precoders,
        combiners=combiners,
    )
