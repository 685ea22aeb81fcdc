"""Monte Carlo experiment runners and CSV/manifest emission.

All experiments share one long CSV schema (one row per sweep point, trial,
and metric) and a JSON run manifest. Determinism contract: every trial or
grid cell derives its RNG from the master seed and its own index via
SeedSequence spawn keys, and rows are emitted in index order after all
workers finish, so output bytes do not depend on the thread count.
"""

from __future__ import annotations

import json
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy
from scipy.linalg import block_diag

from ..adhoc import adhoc_estimate
from ..errors import ConfigError, GeometryError, NonIdentifiableError
from ..fisher import (
    BoundsReport,
    bounds_for_scene,
    bounds_from_ccrb,
    ccrb,
    constraint_nullspace,
    decorrelate,
    efim_channel,
    fim_channel,
    fim_localization,
    identifiability_margin,
    jacobian_upsilon,
    likelihood_params,
)
from ..geometry import Scene, channel_params, euler_zyx_to_rotation
from ..measurements import noise_free_measurements, sample_measurements
from ..mle import ml_estimate
from ..signal_model import path_gains
from .config import (
    SWEEP_AXES,
    GridSpec,
    ScenarioConfig,
    config_digest,
    dbm_to_watts,
    trial_signal_config,
)

CSV_COLUMNS = ("experiment", "variant", "sweep", "sweep_value", "coord1",
               "coord2", "trial", "metric", "value", "scale")

_BOUND_METRICS = ("oeb", "peb", "ipeb", "seb")
_ERROR_METRICS = ("adhoc_pos_error", "adhoc_rot_error", "adhoc_bias_error",
                  "ml_pos_error", "ml_rot_error", "ml_bias_error")
_TRIAL_METRICS = _BOUND_METRICS + _ERROR_METRICS
_INF = float("inf")

# Exceptions treated as a failed trial rather than a crashed run.
_SOFT_FAILURES = (GeometryError, NonIdentifiableError, np.linalg.LinAlgError)


@dataclass
class ExperimentResult:
    """Rows aligned with CSV_COLUMNS plus the reproducibility manifest."""

    experiment: str
    rows: list
    manifest: dict

    columns = CSV_COLUMNS

    def csv_text(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        lines.extend(",".join(_fmt(cell) for cell in row) for row in self.rows)
        return "\n".join(lines) + "\n"

    def manifest_text(self) -> str:
        return json.dumps(self.manifest, sort_keys=True, indent=2) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.experiment}.csv"
        manifest_path = out / f"{self.experiment}_manifest.json"
        with open(csv_path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(self.csv_text())
        with open(manifest_path, "w", encoding="utf-8",
                  newline="\n") as handle:
            handle.write(self.manifest_text())
        return csv_path, manifest_path


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _row(experiment, metric, value, *, variant="", sweep="", sweep_value=None,
         coord1=None, coord2=None, trial=None, scale="linear"):
    return (experiment, variant, sweep, sweep_value, coord1, coord2, trial,
            metric, value, scale)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _run_indexed(fn, count: int, threads: int) -> list:
    if threads > 1 and count > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(count)))
    return [fn(index) for index in range(count)]


def _rms(values) -> float:
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return _INF
    return float(np.sqrt(np.mean(np.square(arr))))


def _mean(values) -> float:
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return _INF
    return float(np.mean(arr))


def _manifest(scenario: ScenarioConfig, name: str, **extra) -> dict:
    from .. import __version__

    manifest = {
        "experiment": name,
        "seed": scenario.experiment.seed,
        "config_sha256": config_digest(scenario.merged),
        "versions": {
            "package": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    manifest.update(extra)
    return manifest


def compute_bounds(config: ScenarioConfig,
                   decorrelated: bool = False) -> BoundsReport:
    """Bounds for the configured scene with seeded beams and gain phases."""
    rng = _rng(config.experiment.seed, 0)
    sc = trial_signal_config(config.signal, rng)
    gains = path_gains(config.scene, sc.wavelength, rng)
    return bounds_for_scene(config.scene, gains, sc, decorrelated)


def _estimation_trial(scene: Scene, signal, adhoc_cfg, ml_cfg,
                      noise_scale: float, rng: np.random.Generator):
    """One Monte Carlo trial: bounds, sampled measurements, both estimators.

    Draw order (fixed for reproducibility): BS beams, UE beams, path gain
    phases, then measurement noise. Returns (metrics, detail); every metric
    a stage could not produce is inf, and detail carries the estimates of
    the stages that ran.
    """
    metrics = {name: _INF for name in _TRIAL_METRICS}
    detail = {}
    sc = trial_signal_config(signal, rng)
    gains = path_gains(scene, sc.wavelength, rng)
    try:
        J_eta = efim_channel(fim_channel(scene, gains, sc))
        J_xi = fim_localization(J_eta, jacobian_upsilon(scene))
        basis = constraint_nullspace(scene.r_ue, scene.num_ips)
        report = bounds_from_ccrb(ccrb(J_xi, basis), scene.num_ips)
        params = likelihood_params(J_eta)
    except _SOFT_FAILURES:
        return metrics, detail
    for name in _BOUND_METRICS:
        metrics[name] = getattr(report, name)
    truth = channel_params(scene)
    if noise_scale == 0.0:
        measurements = noise_free_measurements(truth, params)
    else:
        sampling = params
        if noise_scale != 1.0:
            sampling = likelihood_params(J_eta / noise_scale ** 2)
        measurements = sample_measurements(truth, sampling, rng)
    detail["params"] = params
    detail["measurements"] = measurements
    try:
        adhoc = adhoc_estimate(measurements, scene.p_bs, scene.r_bs,
                               adhoc_cfg)
    except _SOFT_FAILURES:
        return metrics, detail
    detail["adhoc"] = adhoc
    metrics["adhoc_pos_error"] = float(
        np.linalg.norm(adhoc.p_ue_hat - scene.p_ue))
    metrics["adhoc_rot_error"] = float(
        np.linalg.norm(adhoc.r_ue_hat - scene.r_ue))
    metrics["adhoc_bias_error"] = abs(adhoc.b_hat - scene.clock_bias)
    try:
        refined = ml_estimate(adhoc, measurements, scene.p_bs, scene.r_bs,
                              ml_cfg)
    except _SOFT_FAILURES:
        return metrics, detail
    detail["ml"] = refined
    metrics["ml_pos_error"] = float(
        np.linalg.norm(refined.p_ue_hat - scene.p_ue))
    metrics["ml_rot_error"] = float(
        np.linalg.norm(refined.r_ue_hat - scene.r_ue))
    metrics["ml_bias_error"] = abs(refined.b_hat - scene.clock_bias)
    return metrics, detail


def run_single_estimate(config: ScenarioConfig):
    """One seeded trial on the configured scene; used by the CLI."""
    plan = config.experiment
    rng = _rng(plan.seed, 0, 0)
    return _estimation_trial(config.scene, config.signal, config.adhoc,
                             config.ml, plan.measurement_noise_scale, rng)


def run_rmse_vs_power(config: ScenarioConfig) -> ExperimentResult:
    """Estimator RMSE and bounds across a transmit-power grid.

    Per power point and trial, beams and gain phases are redrawn, the
    likelihood parameters recomputed, measurements sampled, and both
    estimators run. Estimator failures are recorded as inf rows, never
    fatal. Aggregate rows (empty trial column) carry RMSE over the finite
    per-trial errors, the RMS of the per-trial bounds, and the failure
    count.
    """
    plan = config.experiment
    name = "rmse_vs_power"
    rows = []
    for point, power_dbm in enumerate(plan.power_grid_dbm):
        signal = replace(config.signal,
                         transmit_power=dbm_to_watts(power_dbm))

        def one_trial(trial, _signal=signal, _point=point):
            rng = _rng(plan.seed, _point, trial)
            metrics, _ = _estimation_trial(
                config.scene, _signal, config.adhoc, config.ml,
                plan.measurement_noise_scale, rng)
            return metrics

        results = _run_indexed(one_trial, plan.trials, plan.threads)
        common = {"sweep": "transmit_power_dbm", "sweep_value": power_dbm}
        for trial, metrics in enumerate(results):
            for metric in _TRIAL_METRICS:
                rows.append(_row(name, metric, metrics[metric], trial=trial,
                                 **common))
        for metric in _BOUND_METRICS:
            rows.append(_row(name, f"{metric}_rms",
                             _rms([m[metric] for m in results]), **common))
        for metric in _ERROR_METRICS:
            label = metric.replace("_error", "_rmse")
            rows.append(_row(name, label,
                             _rms([m[metric] for m in results]), **common))
        failed = sum(1 for m in results
                     if not all(np.isfinite(list(m.values()))))
        rows.append(_row(name, "failed_trials", failed, **common))
    manifest = _manifest(config, name, trials=plan.trials,
                         sweep_points=len(plan.power_grid_dbm),
                         row_count=len(rows))
    return ExperimentResult(name, rows, manifest)


def _xi_block_indices(num_ips: int) -> dict:
    return {
        "orientation": list(range(9)),
        "position": [9, 10, 11],
        "ips": list(range(12, 12 + 3 * num_ips)),
        "bias": [12 + 3 * num_ips],
    }


def conditioned_bounds(J_xi, r_ue, num_ips: int, known) -> dict:
    """Bounds after conditioning on perfectly known parameter blocks.

    Known blocks are removed from the state before the constrained
    inversion; the orientation keeps its tangent-space basis whenever it
    stays unknown. Returns bounds only for the blocks still estimated.
    """
    indices = _xi_block_indices(num_ips)
    keep_blocks = [b for b in ("orientation", "position", "ips", "bias")
                   if b not in known]
    if not keep_blocks:
        raise ConfigError("side information cannot mark every block known")
    keep = [i for b in keep_blocks for i in indices[b]]
    J_sub = np.asarray(J_xi, dtype=float)[np.ix_(keep, keep)]
    blocks = []
    for b in keep_blocks:
        if b == "orientation":
            blocks.append(constraint_nullspace(r_ue, num_ips)[:9, :3])
        else:
            blocks.append(np.eye(len(indices[b])))
    cov = ccrb(J_sub, block_diag(*blocks))
    variances = np.diag(cov)
    out = {}
    offset = 0
    for b in keep_blocks:
        size = len(indices[b])
        var = variances[offset:offset + size]
        if b == "orientation":
            out["oeb"] = float(np.sqrt(var.sum()))
        elif b == "position":
            out["peb"] = float(np.sqrt(var.sum()))
        elif b == "ips":
            out["ipeb"] = float(np.sqrt(var.sum() / num_ips))
        else:
            out["seb"] = float(np.sqrt(var[0]))
        offset += size
    return out


def _random_pose_scene(base: Scene, room, coeff: float, num_ips: int,
                       rng: np.random.Generator) -> Scene:
    """Random UE pose and IP positions inside the room.

    Euler angles are drawn directly (alpha, gamma uniform on [0, 2pi),
    beta on [0, pi)); this is not uniform on the rotation group but it is
    the sampling the study design calls for. Draw order: alpha, beta,
    gamma, p_ue, ips.
    """
    for _ in range(100):
        alpha = rng.uniform(0.0, 2.0 * np.pi)
        beta = rng.uniform(0.0, np.pi)
        gamma = rng.uniform(0.0, 2.0 * np.pi)
        r_ue = euler_zyx_to_rotation(alpha, beta, gamma)
        p_ue = rng.uniform(room[:, 0], room[:, 1])
        ips = rng.uniform(room[:, 0], room[:, 1], size=(num_ips, 3))
        try:
            return replace(base, r_ue=r_ue, p_ue=p_ue, ips=ips,
                           reflection_coeffs=np.full(num_ips, coeff))
        except GeometryError:
            continue
    raise GeometryError("no valid random scene after 100 attempts")


def _random_ips_scene(base: Scene, room, coeff: float, num_ips: int,
                      rng: np.random.Generator) -> Scene:
    """Default UE pose, random IP positions inside the room."""
    for _ in range(100):
        ips = rng.uniform(room[:, 0], room[:, 1], size=(num_ips, 3))
        try:
            return replace(base, ips=ips,
                           reflection_coeffs=np.full(num_ips, coeff))
        except GeometryError:
            continue
    raise GeometryError("no valid random scene after 100 attempts")


def run_bound_cdf(config: ScenarioConfig) -> ExperimentResult:
    """Per-trial bound samples over randomized scenes, per variant.

    Each trial randomizes the UE pose and the IP positions inside the
    room, then evaluates the bounds under the full channel information,
    under the decorrelated (diagonal) information, and under each
    configured side-information variant (known blocks dropped before the
    constrained inversion). Non-identifiable draws yield inf rows.
    """
    plan = config.experiment
    name = "bound_cdf"
    num_ips = config.scene.num_ips
    variants = [("full", None), ("decorrelated", None)]
    variants.extend((vname, known)
                    for vname, known in plan.side_information)

    def one_trial(trial):
        rng = _rng(plan.seed, trial)
        out = {}
        try:
            scene = _random_pose_scene(config.scene, plan.room,
                                       plan.random_reflection_coeff,
                                       num_ips, rng)
        except GeometryError:
            return {vname: None for vname, _ in variants}
        sc = trial_signal_config(config.signal, rng)
        gains = path_gains(scene, sc.wavelength, rng)
        try:
            J_eta = efim_channel(fim_channel(scene, gains, sc))
            ups = jacobian_upsilon(scene)
            basis = constraint_nullspace(scene.r_ue, num_ips)
        except _SOFT_FAILURES:
            return {vname: None for vname, _ in variants}
        J_xi = fim_localization(J_eta, ups)
        for vname, known in variants:
            try:
                if vname == "decorrelated":
                    J_var = fim_localization(decorrelate(J_eta), ups)
                    report = bounds_from_ccrb(ccrb(J_var, basis), num_ips)
                    out[vname] = {m: getattr(report, m)
                                  for m in _BOUND_METRICS}
                elif known is None:
                    report = bounds_from_ccrb(ccrb(J_xi, basis), num_ips)
                    out[vname] = {m: getattr(report, m)
                                  for m in _BOUND_METRICS}
                else:
                    out[vname] = conditioned_bounds(J_xi, scene.r_ue,
                                                    num_ips, known)
            except _SOFT_FAILURES:
                out[vname] = None
        return out

    results = _run_indexed(one_trial, plan.trials, plan.threads)
    rows = []
    for vname, known in variants:
        if known is None:
            metric_names = _BOUND_METRICS
        else:
            probe = conditioned_metric_names(known)
            metric_names = probe
        for trial, per_variant in enumerate(results):
            values = per_variant.get(vname)
            for metric in metric_names:
                value = _INF if values is None else values.get(metric, _INF)
                rows.append(_row(name, metric, value, variant=vname,
                                 trial=trial))
    manifest = _manifest(config, name, trials=plan.trials,
                         variants=[vname for vname, _ in variants],
                         row_count=len(rows))
    return ExperimentResult(name, rows, manifest)


def conditioned_metric_names(known) -> tuple:
    mapping = {"orientation": "oeb", "position": "peb", "ips": "ipeb",
               "bias": "seb"}
    return tuple(metric for block, metric in mapping.items()
                 if block not in known)


_DEFAULT_SWEEPS = {
    "bandwidth": (33.0, 111.0, 333.0, 1111.0, 3333.0),
    "N_UE": (4.0, 16.0, 36.0, 64.0),
    "N_BS": (16.0, 36.0, 64.0, 144.0),
    "num_IPs": (1.0, 2.0, 3.0, 4.0, 5.0),
}

_SWEEP_LABELS = {
    "bandwidth": "bandwidth_hz",
    "N_UE": "num_ue_antennas",
    "N_BS": "num_bs_antennas",
    "num_IPs": "num_ips",
}


def _as_count(value, axis: str) -> int:
    count = int(value)
    if count != value or count < 1:
        raise ConfigError(f"sweep grid for {axis} needs positive integers, "
                          f"got {value}")
    return count


def run_parameter_sweep(config: ScenarioConfig,
                        axis: str) -> ExperimentResult:
    """Bound trends along one hardware axis, defaults held elsewhere.

    Grid entries are subcarrier counts for the bandwidth axis, antenna
    counts for the array axes, and IP counts for num_IPs (that axis
    randomizes IP positions per trial and reports averages). Per-trial
    randomness is beams plus gain phases.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; pick one of "
                          f"{', '.join(SWEEP_AXES)}")
    plan = config.experiment
    name = "parameter_sweep"
    grid = plan.sweep_grid or _DEFAULT_SWEEPS[axis]
    label = _SWEEP_LABELS[axis]
    rows = []
    for point, raw_value in enumerate(grid):
        count = _as_count(raw_value, axis)
        signal = config.signal
        scene = config.scene
        randomize_ips = False
        if axis == "bandwidth":
            signal = replace(signal, num_subcarriers=count)
            sweep_value = count * signal.subcarrier_spacing
        elif axis == "N_UE":
            _require_square(count, axis)
            signal = replace(signal, num_ue_antennas=count)
            sweep_value = count
        elif axis == "N_BS":
            _require_square(count, axis)
            signal = replace(signal, num_bs_antennas=count)
            sweep_value = count
        else:
            randomize_ips = True
            sweep_value = count

        def one_trial(trial, _signal=signal, _scene=scene, _point=point,
                      _count=count, _randomize=randomize_ips):
            rng = _rng(plan.seed, _point, trial)
            try:
                if _randomize:
                    _scene = _random_ips_scene(_scene, plan.room,
                                               plan.random_reflection_coeff,
                                               _count, rng)
                sc = trial_signal_config(_signal, rng)
                gains = path_gains(_scene, sc.wavelength, rng)
                report = bounds_for_scene(_scene, gains, sc)
            except _SOFT_FAILURES:
                return {m: _INF for m in _BOUND_METRICS}
            return {m: getattr(report, m) for m in _BOUND_METRICS}

        results = _run_indexed(one_trial, plan.trials, plan.threads)
        common = {"sweep": label, "sweep_value": sweep_value}
        for trial, metrics in enumerate(results):
            for metric in _BOUND_METRICS:
                rows.append(_row(name, metric, metrics[metric], trial=trial,
                                 **common))
        for metric in _BOUND_METRICS:
            rows.append(_row(name, f"{metric}_mean",
                             _mean([m[metric] for m in results]), **common))
        failed = sum(1 for m in results
                     if not all(np.isfinite(list(m.values()))))
        rows.append(_row(name, "failed_trials", failed, **common))
    manifest = _manifest(config, name, axis=axis, trials=plan.trials,
                         sweep_points=len(grid), row_count=len(rows))
    return ExperimentResult(name, rows, manifest)


def _require_square(count: int, axis: str) -> None:
    side = int(np.sqrt(count) + 0.5)
    if side * side != count:
        raise ConfigError(f"{axis} sweep entry {count} is not a square "
                          "antenna count")


def run_coverage_contour(config: ScenarioConfig,
                         grid: GridSpec | dict | None = None
                         ) -> ExperimentResult:
    """Bound maps over a UE position or orientation grid, in decibels.

    Every cell redraws beams and gain phases from its own seeded RNG,
    evaluates the bound chain, and reports 10*log10 of each bound. Cells
    whose scene is degenerate, whose information matrix fails the
    identifiability margin, or whose inversion reports rank loss are
    emitted as the inf sentinel.
    """
    plan = config.experiment
    spec = _grid_from_arg(plan.grid, grid)
    name = "coverage_contour"
    ax1, ax2 = spec.axes()
    n1, n2 = spec.shape
    threshold = plan.identifiability_threshold
    cells = [(i, j) for i in range(n1) for j in range(n2)]

    def one_cell(index):
        i, j = cells[index]
        rng = _rng(plan.seed, i, j)
        try:
            if spec.kind == "position":
                p_ue = np.array([ax1[i], ax2[j], spec.fixed_z])
                scene = replace(config.scene, p_ue=p_ue)
            else:
                r_ue = euler_zyx_to_rotation(ax1[i], spec.fixed_beta, ax2[j])
                scene = replace(config.scene, r_ue=r_ue)
        except GeometryError:
            return (_INF,) * len(_BOUND_METRICS)
        sc = trial_signal_config(config.signal, rng)
        gains = path_gains(scene, sc.wavelength, rng)
        try:
            J_eta = efim_channel(fim_channel(scene, gains, sc))
            J_xi = fim_localization(J_eta, jacobian_upsilon(scene))
            basis = constraint_nullspace(scene.r_ue, scene.num_ips)
            reduced = basis.T @ J_xi @ basis
            if identifiability_margin(reduced) < threshold:
                return (_INF,) * len(_BOUND_METRICS)
            report = bounds_from_ccrb(ccrb(J_xi, basis), scene.num_ips)
        except _SOFT_FAILURES:
            return (_INF,) * len(_BOUND_METRICS)
        return tuple(getattr(report, m) for m in _BOUND_METRICS)

    results = _run_indexed(one_cell, len(cells), plan.threads)
    rows = []
    for index, values in enumerate(results):
        i, j = cells[index]
        for metric, value in zip(_BOUND_METRICS, values):
            rows.append(_row(name, f"{metric}_db",
                             10.0 * np.log10(value) if value > 0.0 else _INF,
                             coord1=float(ax1[i]), coord2=float(ax2[j]),
                             scale="db"))
    manifest = _manifest(config, name,
                         grid={"kind": spec.kind, "shape": list(spec.shape)},
                         row_count=len(rows))
    return ExperimentResult(name, rows, manifest)


def _grid_from_arg(base: GridSpec, grid) -> GridSpec:
    if grid is None:
        return base
    if isinstance(grid, GridSpec):
        return grid
    if not isinstance(grid, dict):
        raise ConfigError("grid must be a GridSpec or a dict of overrides")
    allowed = {"kind", "shape", "x_range", "y_range", "fixed_z",
               "alpha_range", "gamma_range", "fixed_beta"}
    unknown = set(grid) - allowed
    if unknown:
        raise ConfigError(f"unknown grid fields: {sorted(unknown)}")
    updates = dict(grid)
    for key in ("shape", "x_range", "y_range", "alpha_range", "gamma_range"):
        if key in updates:
            updates[key] = tuple(updates[key])
    if "kind" in updates and updates["kind"] not in ("position",
                                                     "orientation"):
        raise ConfigError("grid kind must be position or orientation")
    return replace(base, **updates)


EXPERIMENT_RUNNERS = {
    "rmse_vs_power": run_rmse_vs_power,
    "bound_cdf": run_bound_cdf,
    "parameter_sweep": lambda cfg: run_parameter_sweep(
        cfg, cfg.experiment.axis),
    "coverage_contour": run_coverage_contour,
}
