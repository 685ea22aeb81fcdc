"""Standalone figure rendering for experiment CSV outputs."""

from .render import build_figure, contour_grid, empirical_cdf, read_rows, render
from .spec import KINDS, PlotSpec, SpecError, load_spec, spec_from_dict

__all__ = [
    "KINDS",
    "PlotSpec",
    "SpecError",
    "build_figure",
    "contour_grid",
    "empirical_cdf",
    "load_spec",
    "read_rows",
    "render",
    "spec_from_dict",
]
