"""Plot specification loading and validation.

A plot spec is a small JSON document that names one or more experiment
CSV files, the kind of figure to draw from them, and where to write the
image.  Everything the renderer needs is in the spec; nothing is read
from the environment.

Fields:

``kind``      one of ``rmse``, ``cdf``, ``sweep``, ``contour`` (required)
``inputs``    CSV path or list of CSV paths (required, at least one)
``output``    image file to write; the suffix picks the format (required)
``metrics``   metric names to draw (rmse and sweep kinds); defaults per kind
``bounds``    bound metric names overlaid as dashed references (rmse kind)
``metric``    single metric name (cdf and contour kinds)
``variants``  restrict cdf curves to these variant labels
``title``, ``x_label``, ``y_label``   optional strings
``x_scale``, ``y_scale``              ``linear`` or ``log``; defaults per kind

Unknown fields are rejected so that a typo fails loudly instead of being
silently ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class SpecError(ValueError):
    """Raised when a plot spec or its referenced CSV data is unusable."""


KINDS = ("rmse", "cdf", "sweep", "contour")
_SCALES = ("linear", "log")

_DEFAULT_METRICS = {
    "rmse": ["adhoc_pos_rmse", "ml_pos_rmse"],
    "sweep": ["oeb_mean", "peb_mean", "ipeb_mean", "seb_mean"],
}
_DEFAULT_BOUNDS = {"rmse": ["peb_rms"]}
_DEFAULT_METRIC = {"cdf": "peb", "contour": "peb_db"}

# axis scale defaults chosen per kind: bound magnitudes span decades, so
# the ordinate is logarithmic everywhere except the cdf probability axis
_DEFAULT_X_SCALE = {"rmse": "linear", "cdf": "log", "sweep": "log", "contour": "linear"}
_DEFAULT_Y_SCALE = {"rmse": "log", "cdf": "linear", "sweep": "log", "contour": "linear"}

_ALLOWED_KEYS = {
    "kind",
    "inputs",
    "output",
    "metrics",
    "bounds",
    "metric",
    "variants",
    "title",
    "x_label",
    "y_label",
    "x_scale",
    "y_scale",
}


@dataclass
class PlotSpec:
    kind: str
    inputs: list[str]
    output: str
    metrics: list[str] = field(default_factory=list)
    bounds: list[str] = field(default_factory=list)
    metric: str = ""
    variants: list[str] = field(default_factory=list)
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    x_scale: str = ""
    y_scale: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.inputs:
            raise SpecError("spec must list at least one input CSV")
        if not self.output:
            raise SpecError("spec must give an output image path")
        if not self.metrics:
            self.metrics = list(_DEFAULT_METRICS.get(self.kind, []))
        if not self.bounds and self.kind == "rmse":
            self.bounds = list(_DEFAULT_BOUNDS["rmse"])
        if not self.metric:
            self.metric = _DEFAULT_METRIC.get(self.kind, "")
        if not self.x_scale:
            self.x_scale = _DEFAULT_X_SCALE[self.kind]
        if not self.y_scale:
            self.y_scale = _DEFAULT_Y_SCALE[self.kind]
        for name, value in (("x_scale", self.x_scale), ("y_scale", self.y_scale)):
            if value not in _SCALES:
                raise SpecError(f"{name} must be one of {_SCALES}, got {value!r}")


def spec_from_dict(raw: dict) -> PlotSpec:
    """Build a validated PlotSpec from a decoded JSON object."""
    if not isinstance(raw, dict):
        raise SpecError("plot spec must be a JSON object")
    unknown = sorted(set(raw) - _ALLOWED_KEYS)
    if unknown:
        raise SpecError(f"unknown spec fields: {', '.join(unknown)}")
    for key in ("kind", "inputs", "output"):
        if key not in raw:
            raise SpecError(f"spec is missing required field {key!r}")

    inputs = raw["inputs"]
    if isinstance(inputs, str):
        inputs = [inputs]
    if not isinstance(inputs, list) or not all(isinstance(p, str) for p in inputs):
        raise SpecError("inputs must be a CSV path or a list of CSV paths")

    def str_list(key):
        value = raw.get(key, [])
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise SpecError(f"{key} must be a string or a list of strings")
        return value

    def string(key):
        value = raw.get(key, "")
        if not isinstance(value, str):
            raise SpecError(f"{key} must be a string")
        return value

    return PlotSpec(
        kind=string("kind"),
        inputs=inputs,
        output=string("output"),
        metrics=str_list("metrics"),
        bounds=str_list("bounds"),
        metric=string("metric"),
        variants=str_list("variants"),
        title=string("title"),
        x_label=string("x_label"),
        y_label=string("y_label"),
        x_scale=string("x_scale"),
        y_scale=string("y_scale"),
    )


def load_spec(path: str) -> PlotSpec:
    """Read and validate a plot spec JSON file."""
    try:
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise SpecError(f"cannot read spec {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec {path} is not valid JSON: {exc}") from exc
    return spec_from_dict(raw)
