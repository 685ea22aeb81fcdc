"""Shared fixtures: experiment CSVs produced by the snaploc command line.

The plotting package has no code dependency on the localization package;
everything it consumes arrives as CSV files.  These fixtures generate a
small corpus once per session by invoking the installed ``snaploc``
executable, the same way a user would.
"""

import json
import shutil
import subprocess
import sys

import pytest

try:
    import snapplot  # noqa: F401
except ImportError:
    # package not installed: drop this suite so the core tests still run
    collect_ignore_glob = ["test_*.py"]

SMALL_SIGNAL = {"num_subcarriers": 64, "num_symbols": 4}

_CONFIGS = {
    # enough subcarriers that the estimators land on the right branch at
    # both power points, keeping the summary curves finite
    "rmse_vs_power": {
        "signal": {"num_subcarriers": 333, "num_symbols": 4},
        "experiment": {
            "trials": 3,
            "seed": 1,
            "power_grid_dbm": [10.0, 20.0],
        },
    },
    "bound_cdf": {
        "signal": dict(SMALL_SIGNAL),
        "experiment": {
            "trials": 3,
            "seed": 2,
            "side_information": [
                {"name": "known_bias", "known": ["bias"]},
            ],
        },
    },
    "parameter_sweep": {
        "signal": dict(SMALL_SIGNAL),
        "experiment": {
            "trials": 1,
            "seed": 3,
            "axis": "bandwidth",
            "sweep_grid": [16, 64],
        },
    },
    # 3x3 position grid crossing the first reflector at (8, 2, 1), which
    # makes that cell non-identifiable and therefore an infinite bound
    "coverage_contour": {
        "signal": dict(SMALL_SIGNAL),
        "experiment": {
            "seed": 4,
            "grid": {
                "kind": "position",
                "shape": [3, 3],
                "x_range": [7.0, 9.0],
                "y_range": [1.0, 3.0],
                "fixed_z": 1.0,
            },
        },
    },
}

CONTOUR_SHAPE = tuple(_CONFIGS["coverage_contour"]["experiment"]["grid"]["shape"])


@pytest.fixture(scope="session")
def contour_shape():
    """Grid shape the contour config asked the harness for."""
    return CONTOUR_SHAPE


def snaploc_argv() -> list[str]:
    exe = shutil.which("snaploc")
    if exe:
        return [exe]
    # fall back to the module entry point in a child interpreter
    return [
        sys.executable,
        "-c",
        "import sys; from snaploc.harness.cli import main; "
        "sys.exit(main(sys.argv[1:]))",
    ]


@pytest.fixture(scope="session")
def harness_csvs(tmp_path_factory):
    """Map of experiment name to a freshly generated CSV path."""
    root = tmp_path_factory.mktemp("harness")
    paths = {}
    for name, config in _CONFIGS.items():
        config_path = root / f"{name}_config.json"
        config_path.write_text(json.dumps(config), encoding="utf-8")
        out_dir = root / name
        proc = subprocess.run(
            snaploc_argv()
            + ["experiment", name, "--config", str(config_path),
               "--out", str(out_dir)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, (
            f"snaploc experiment {name} failed:\n{proc.stdout}\n{proc.stderr}"
        )
        csv_path = out_dir / f"{name}.csv"
        assert csv_path.exists(), f"expected CSV at {csv_path}"
        paths[name] = csv_path
    return paths
