"""Experiment orchestration and the `palpmap` command-line interface.

The closed loop: probe the 19 startup targets, then for each budgeted step
regroup all measurements into compatible sets, re-estimate stiffness,
re-register the probed points to the mesh, refit the GP in the tool frame,
predict over the ROI grid, and let the sampling policy pick the next target.
Outputs land in the configured directory as CSV/JSON/PGM files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .acquisition import Incumbent, SamplingPolicy, expected_improvement, select_next
from .care import (CMUConfig, CompatibleSet, ProbeMeasurement, RegistrationResult,
                   SetCollector, StiffnessSample, default_seed_transforms,
                   estimate_stiffness, cmu_register)
from .errors import (ConfigError, DegenerateGeometryError, ExplorationExhaustedError,
                     InsufficientDataError, InvalidInputError,
                     NumericalConditioningError, OutOfWorkspaceError, PalpmapError)
from .geometry import RigidTransform, TriMesh, load_mesh, rms_error
from .gp import GPModel, KernelParams, Prediction, TrainingSet, gp_fit, gp_predict
from .simulator import (NoiseSpec, PhantomSpec, ProbeConfig, ROI, grid_shape,
                        initial_samples, load_phantom, prediction_grid, probe,
                        stiffness_field, transform_from_json, transform_to_json,
                        uniform_lattice)

_STRATEGIES = ("ei", "uniform")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description."""

    phantom_path: Path
    roi: ROI
    probe: ProbeConfig
    noise: NoiseSpec
    kernel: KernelParams
    policy: SamplingPolicy
    cmu: CMUConfig
    budget: int
    strategy: str
    output_dir: Path
    master_seed: int


_TOP_KEYS = {"phantom", "roi", "probe", "noise", "kernel", "policy", "cmu",
             "budget", "strategy", "output_dir", "master_seed"}
_ROI_KEYS = {"xmin", "xmax", "ymin", "ymax", "spacing"}
_PROBE_KEYS = {"probe_radius_mm", "contact_force_n", "depth_increment_mm",
               "max_depth_mm"}
_NOISE_KEYS = {"position_sigma_mm", "force_sigma_n", "rng_seed"}
_KERNEL_KEYS = {"sigma_f", "length_scale_mm", "jitter"}
_POLICY_KEYS = {"exploration_period", "uncertainty_fraction", "rng_seed"}
_CMU_KEYS = {"tangent_distance_mm", "normal_angle_deg", "min_force_difference_n",
             "max_iterations", "convergence_tolerance_mm", "random_seeds",
             "seed_rng_seed", "max_translation_mm", "max_rotation_deg"}


def _section(data: dict, key: str, allowed: set) -> dict:
    raw = data.get(key, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"'{key}' must be an object")
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in '{key}': {sorted(unknown)}")
    return raw


def _num(section: dict, key: str, default: float, where: str) -> float:
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{where}.{key}' must be a number")
    return float(value)


def _int(section: dict, key: str, default: int, where: str) -> int:
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{where}.{key}' must be an integer")
    return int(value)


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment config document (unknown keys rejected)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad config JSON {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    if "phantom" not in data or not isinstance(data["phantom"], str):
        raise ConfigError("config needs a 'phantom' path")
    if "roi" not in data:
        raise ConfigError("config needs a 'roi' section")

    roi_raw = _section(data, "roi", _ROI_KEYS)
    for key in ("xmin", "xmax", "ymin", "ymax"):
        if key not in roi_raw:
            raise ConfigError(f"'roi.{key}' is required")
    probe_raw = _section(data, "probe", _PROBE_KEYS)
    noise_raw = _section(data, "noise", _NOISE_KEYS)
    kernel_raw = _section(data, "kernel", _KERNEL_KEYS)
    policy_raw = _section(data, "policy", _POLICY_KEYS)
    cmu_raw = _section(data, "cmu", _CMU_KEYS)

    strategy = data.get("strategy", "ei")
    if strategy not in _STRATEGIES:
        raise ConfigError(f"strategy must be one of {_STRATEGIES}, got {strategy!r}")
    budget = data.get("budget", 100)
    if isinstance(budget, bool) or not isinstance(budget, int) or budget < 0:
        raise ConfigError("'budget' must be a non-negative integer")
    master_seed = data.get("master_seed", 0)
    if isinstance(master_seed, bool) or not isinstance(master_seed, int) or master_seed < 0:
        raise ConfigError("'master_seed' must be a non-negative integer")
    output_dir = data.get("output_dir", "out")
    if not isinstance(output_dir, str):
        raise ConfigError("'output_dir' must be a string")

    try:
        roi = ROI(
            xmin=_num(roi_raw, "xmin", 0.0, "roi"),
            xmax=_num(roi_raw, "xmax", 0.0, "roi"),
            ymin=_num(roi_raw, "ymin", 0.0, "roi"),
            ymax=_num(roi_raw, "ymax", 0.0, "roi"),
            spacing=_num(roi_raw, "spacing", 1.0, "roi"),
        )
        probe_cfg = ProbeConfig(
            probe_radius=_num(probe_raw, "probe_radius_mm", 9.0, "probe"),
            contact_force=_num(probe_raw, "contact_force_n", 0.5, "probe"),
            depth_increment=_num(probe_raw, "depth_increment_mm", 0.3, "probe"),
            max_depth=_num(probe_raw, "max_depth_mm", 3.0, "probe"),
        )
        noise = NoiseSpec(
            position_sigma=_num(noise_raw, "position_sigma_mm", 0.0, "noise"),
            force_sigma=_num(noise_raw, "force_sigma_n", 0.0, "noise"),
            rng_seed=_int(noise_raw, "rng_seed", 0, "noise"),
        )
        kernel = KernelParams(
            sigma_f=_num(kernel_raw, "sigma_f", 1.0, "kernel"),
            length_scale=_num(kernel_raw, "length_scale_mm", 3.0, "kernel"),
            jitter=_num(kernel_raw, "jitter", 1e-8, "kernel"),
        )
        policy = SamplingPolicy(
            exploration_period=_int(policy_raw, "exploration_period", 5, "policy"),
            uncertainty_fraction=_num(policy_raw, "uncertainty_fraction", 0.9, "policy"),
            rng_seed=_int(policy_raw, "rng_seed", 0, "policy"),
        )
        seeds = default_seed_transforms(
            count=_int(cmu_raw, "random_seeds", 10, "cmu"),
            max_translation=_num(cmu_raw, "max_translation_mm", 10.0, "cmu"),
            max_rotation_deg=_num(cmu_raw, "max_rotation_deg", 15.0, "cmu"),
            rng_seed=_int(cmu_raw, "seed_rng_seed", 7, "cmu"),
        )
        cmu = CMUConfig(
            tangent_distance=_num(cmu_raw, "tangent_distance_mm", 1.0, "cmu"),
            normal_angle_deg=_num(cmu_raw, "normal_angle_deg", 10.0, "cmu"),
            min_force_difference=_num(cmu_raw, "min_force_difference_n", 0.05, "cmu"),
            max_iterations=_int(cmu_raw, "max_iterations", 50, "cmu"),
            convergence_tolerance=_num(cmu_raw, "convergence_tolerance_mm", 1e-3, "cmu"),
            seed_transforms=seeds,
        )
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc

    phantom_path = Path(data["phantom"])
    if not phantom_path.is_absolute():
        phantom_path = path.parent / phantom_path
    out_path = Path(output_dir)
    if not out_path.is_absolute():
        out_path = path.parent / out_path

    return ExperimentConfig(
        phantom_path=phantom_path, roi=roi, probe=probe_cfg, noise=noise,
        kernel=kernel, policy=policy, cmu=cmu, budget=budget, strategy=strategy,
        output_dir=out_path, master_seed=master_seed,
    )


# ---------------------------------------------------------------------------
# Experiment engine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentReport:
    """Registration and map quality summary of one run."""

    strategy: str
    probe_count: int
    true_transform: RigidTransform
    estimated_transform: RigidTransform
    translation_error_mm: Tuple[float, float, float]
    rotation_error_deg: Tuple[float, float, float]
    rms_mm: float
    registration_objective: float
    map_rmse: float
    map_pearson: float
    wall_clock_seconds: float

    def to_json_dict(self) -> dict:
        # wall clock is deliberately left out so identical runs serialize
        # byte-identically; it is printed and written to timing.txt instead
        return {
            "strategy": self.strategy,
            "probe_count": int(self.probe_count),
            "true_transform": transform_to_json(self.true_transform),
            "estimated_transform": transform_to_json(self.estimated_transform),
            "translation_error_mm": [float(v) for v in self.translation_error_mm],
            "rotation_error_deg": [float(v) for v in self.rotation_error_deg],
            "rms_mm": float(self.rms_mm),
            "registration_objective": float(self.registration_objective),
            "map_rmse": float(self.map_rmse),
            "map_pearson": float(self.map_pearson),
        }


@dataclass
class ProbeRecord:
    index: int
    target: np.ndarray
    start: int
    count: int


@dataclass
class RunArtifacts:
    """Everything a run produced, for writers and tests."""

    config: ExperimentConfig
    strategy: str
    report: ExperimentReport
    phantom: PhantomSpec
    grid: np.ndarray
    prediction: Prediction
    ei_map: np.ndarray
    model: GPModel
    training: TrainingSet
    registration: RegistrationResult
    sets: List[CompatibleSet]
    samples: List[Optional[StiffnessSample]]
    measurements: List[ProbeMeasurement]
    probe_records: List[ProbeRecord]
    reference_points: np.ndarray
    ground_truth: np.ndarray
    trace: List[Tuple[int, RegistrationResult]]


def _mark_visited(grid: np.ndarray, target, visited: set):
    hits = np.flatnonzero(np.all(np.abs(grid - np.asarray(target)) <= 1e-9, axis=1))
    visited.update(int(i) for i in hits)


def _angle_error_deg(a: float, b: float) -> float:
    return abs((a - b + 180.0) % 360.0 - 180.0)


def _raycast_down_batch(mesh: TriMesh, origins: np.ndarray,
                        direction: np.ndarray) -> np.ndarray:
    """Hit points for many rays sharing one direction; NaN rows for misses."""
    verts = mesh.vertices
    tris = mesh.faces
    v0 = verts[tris[:, 0]]
    e1 = verts[tris[:, 1]] - v0
    e2 = verts[tris[:, 2]] - v0
    d = direction / np.linalg.norm(direction)
    h = np.cross(d[None, :], e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(det) > 1e-12
    inv = 1.0 / np.where(ok, det, 1.0)

    out = np.full((origins.shape[0], 3), np.nan)
    eps = 1e-9
    chunk = max(1, int(4_000_000 // max(tris.shape[0], 1)))
    for lo in range(0, origins.shape[0], chunk):
        o = origins[lo:lo + chunk]
        s = o[:, None, :] - v0[None, :, :]
        u = np.einsum("cfj,fj->cf", s, h) * inv
        qv = np.cross(s, e1[None, :, :])
        v = np.einsum("j,cfj->cf", d, qv) * inv
        t = np.einsum("fj,cfj->cf", e2, qv) * inv
        hit = ok[None, :] & (u >= -eps) & (v >= -eps) & (u + v <= 1.0 + eps) & (t > eps)
        t = np.where(hit, t, np.inf)
        idx = np.argmin(t, axis=1)
        t_best = t[np.arange(o.shape[0]), idx]
        good = np.isfinite(t_best)
        out[lo:lo + chunk][good] = o[good] + t_best[good, None] * d
    return out


def _ground_truth_map(spec: PhantomSpec, grid: np.ndarray) -> np.ndarray:
    """True stiffness seen through a noise-free probe at each grid node (NaN = miss)."""
    transform = spec.true_transform
    top = float(transform.inverse().apply(spec.mesh.vertices)[:, 2].max()) + 10.0
    origins_tool = np.column_stack([grid, np.full(grid.shape[0], top)])
    origins = transform.apply(origins_tool)
    direction = -transform.rotation[:, 2]
    contacts = _raycast_down_batch(spec.mesh, origins, direction)
    values = np.full(grid.shape[0], np.nan)
    good = np.isfinite(contacts[:, 0])
    if np.any(good):
        values[good] = stiffness_field(spec, contacts[good][:, :2])
    return values


def execute_experiment(config: ExperimentConfig,
                       strategy: Optional[str] = None) -> RunArtifacts:
    """Run the full closed loop and return all artifacts (nothing written)."""
    t_start = time.perf_counter()
    strategy = strategy or config.strategy
    if strategy not in _STRATEGIES:
        raise InvalidInputError(f"unknown strategy {strategy!r}")
    phantom = load_phantom(config.phantom_path)
    rng_noise = np.random.default_rng([config.master_seed, config.noise.rng_seed])
    rng_explore = np.random.default_rng([config.master_seed, config.policy.rng_seed])

    grid = prediction_grid(config.roi)
    visited: set = set()
    measurements: List[ProbeMeasurement] = []
    records: List[ProbeRecord] = []
    collector = SetCollector(config.cmu)
    trace: List[Tuple[int, RegistrationResult]] = []

    def do_probe(target):
        sensed = probe(phantom, target, config.probe, config.noise, rng_noise)
        start = len(measurements)
        measurements.extend(sensed)
        for m in sensed:
            collector.add(m)
        records.append(ProbeRecord(index=len(records),
                                   target=np.asarray(target, dtype=float),
                                   start=start, count=len(sensed)))
        _mark_visited(grid, target, visited)

    for target in initial_samples(config.roi):
        do_probe(target)

    warm_start: List[RigidTransform] = []

    def update(cold: bool):
        sets = collector.sets(measurements)
        samples: List[Optional[StiffnessSample]] = []
        for cset in sets:
            try:
                samples.append(estimate_stiffness(cset, measurements))
            except DegenerateGeometryError:
                samples.append(None)
        paired = [(s, m) for s, m in zip(sets, samples) if m is not None]
        # cold updates run the full multi-seed search (plus the previous
        # winner); in between, the previous winner alone tracks the optimum
        # as probes accumulate, which keeps the per-probe cost flat
        cmu_cfg = config.cmu
        if warm_start and cold:
            cmu_cfg = dataclasses.replace(
                cmu_cfg, seed_transforms=cmu_cfg.seed_transforms + (warm_start[-1],))
        elif warm_start:
            cmu_cfg = dataclasses.replace(cmu_cfg,
                                          seed_transforms=(warm_start[-1],))
        registration = cmu_register([s for s, _ in paired], [m for _, m in paired],
                                    phantom.mesh, measurements, cmu_cfg)
        warm_start.append(registration.transform)
        valid = [m for _, m in paired if not m.degenerate]
        training = TrainingSet([m.location for m in valid],
                               [m.stiffness for m in valid])
        model = gp_fit(training, config.kernel)
        prediction = gp_predict(model, grid)
        trace.append((len(records), registration))
        return sets, samples, registration, training, model, prediction

    if strategy == "ei":
        for step in range(1, config.budget + 1):
            cold = step == 1 or step % 25 == 0
            _, _, _, training, _, prediction = update(cold)
            best = int(np.argmax(training.outputs))
            incumbent = Incumbent(value=float(training.outputs[best]),
                                  location=training.inputs[best])
            try:
                idx = select_next(prediction, grid, visited, incumbent, step,
                                  config.policy, rng_explore,
                                  prior_variance=config.kernel.sigma_f)
            except ExplorationExhaustedError:
                break
            visited.add(idx)
            do_probe(grid[idx])
    elif config.budget > 0:
        for target in uniform_lattice(config.roi, config.budget):
            do_probe(target)

    sets, samples, registration, training, model, prediction = update(cold=True)

    best = int(np.argmax(training.outputs))
    incumbent = Incumbent(value=float(training.outputs[best]),
                          location=training.inputs[best])
    ei_map = expected_improvement(prediction.mean, prediction.std, incumbent.value)

    reference_points = np.asarray([
        measurements[cset.reference_index].position
        for cset, sample in zip(sets, samples)
        if sample is not None and not sample.degenerate
    ])

    truth = phantom.true_transform
    estimate = registration.transform
    t_err = tuple(abs(float(e - t)) for e, t
                  in zip(estimate.translation, truth.translation))
    e_est = estimate.euler_deg()
    e_true = truth.euler_deg()
    r_err = tuple(_angle_error_deg(a, b) for a, b in zip(e_est, e_true))
    rms = rms_error(estimate, truth, reference_points)

    ground_truth = _ground_truth_map(phantom, grid)
    good = np.isfinite(ground_truth)
    if not np.any(good):
        raise OutOfWorkspaceError("no prediction-grid ray reaches the surface")
    diff = prediction.mean[good] - ground_truth[good]
    map_rmse = float(np.sqrt(np.mean(diff * diff)))
    if np.std(ground_truth[good]) < 1e-15 or np.std(prediction.mean[good]) < 1e-15:
        map_pearson = 0.0
    else:
        map_pearson = float(np.corrcoef(prediction.mean[good], ground_truth[good])[0, 1])

    report = ExperimentReport(
        strategy=strategy,
        probe_count=len(records),
        true_transform=truth,
        estimated_transform=estimate,
        translation_error_mm=t_err,
        rotation_error_deg=r_err,
        rms_mm=rms,
        registration_objective=float(registration.objective),
        map_rmse=map_rmse,
        map_pearson=map_pearson,
        wall_clock_seconds=time.perf_counter() - t_start,
    )
    return RunArtifacts(
        config=config, strategy=strategy, report=report, phantom=phantom,
        grid=grid, prediction=prediction, ei_map=np.asarray(ei_map), model=model,
        training=training, registration=registration, sets=sets, samples=samples,
        measurements=measurements, probe_records=records,
        reference_points=reference_points, ground_truth=ground_truth, trace=trace,
    )


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return repr(float(value))


def _write_stiffness_map(art: RunArtifacts, path: Path):
    lines = ["x_mm,y_mm,mean,std,ei"]
    std = art.prediction.std
    for i, (x, y) in enumerate(art.grid):
        lines.append(",".join([
            _fmt(x), _fmt(y), _fmt(art.prediction.mean[i]), _fmt(std[i]),
            _fmt(art.ei_map[i]),
        ]))
    path.write_text("\n".join(lines) + "\n")


def _write_probe_log(art: RunArtifacts, path: Path):
    stiffness_by_measurement: Dict[int, float] = {}
    for cset, sample in zip(art.sets, art.samples):
        if sample is None or sample.degenerate:
            continue
        for member in cset.member_indices:
            stiffness_by_measurement[member] = sample.stiffness

    increment = art.config.probe.depth_increment
    lines = ["probe_index,target_x_mm,target_y_mm,sample_index,depth_mm,"
             "force_n,stiffness_n_per_mm"]
    for rec in art.probe_records:
        stiffness = stiffness_by_measurement.get(rec.start, float("nan"))
        for k in range(rec.count):
            m = art.measurements[rec.start + k]
            lines.append(",".join([
                str(rec.index), _fmt(rec.target[0]), _fmt(rec.target[1]),
                str(k + 1), _fmt((k + 1) * increment), _fmt(m.force),
                _fmt(stiffness),
            ]))
    path.write_text("\n".join(lines) + "\n")


def _write_registration_trace(art: RunArtifacts, path: Path):
    lines = ["probes_used,iterations,objective,tx_mm,ty_mm,tz_mm,rx_deg,ry_deg,rz_deg"]
    for probes_used, reg in art.trace:
        rx, ry, rz = reg.transform.euler_deg()
        tx, ty, tz = reg.transform.translation
        lines.append(",".join([
            str(probes_used), str(reg.iterations), _fmt(reg.objective),
            _fmt(tx), _fmt(ty), _fmt(tz), _fmt(rx), _fmt(ry), _fmt(rz),
        ]))
    path.write_text("\n".join(lines) + "\n")


def _write_heatmap_pgm(art: RunArtifacts, path: Path):
    nx, ny = grid_shape(art.config.roi)
    values = art.prediction.mean.reshape(ny, nx)
    lo = float(values.min())
    hi = float(values.max())
    if hi - lo <= 0.0:
        img = np.zeros((ny, nx), dtype=np.uint8)
    else:
        img = np.rint((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
    header = f"P5\n{nx} {ny}\n255\n".encode("ascii")
    path.write_bytes(header + img.tobytes())


def write_run_outputs(art: RunArtifacts, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_stiffness_map(art, out / "stiffness_map.csv")
    _write_probe_log(art, out / "probe_log.csv")
    _write_registration_trace(art, out / "registration_trace.csv")
    _write_heatmap_pgm(art, out / "heatmap.pgm")
    (out / "report.json").write_text(
        json.dumps(art.report.to_json_dict(), indent=2, sort_keys=True) + "\n")
    (out / "timing.txt").write_text(
        f"wall_clock_seconds {art.report.wall_clock_seconds:.3f}\n")
    return out


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Execute one run and write its output files to config.output_dir."""
    art = execute_experiment(config)
    write_run_outputs(art, config.output_dir)
    return art.report


def _top_decile_rmse(art: RunArtifacts) -> Tuple[float, float]:
    good = np.isfinite(art.ground_truth)
    gt = art.ground_truth[good]
    threshold = float(np.quantile(gt, 0.9))
    region = gt >= threshold
    diff = art.prediction.mean[good][region] - gt[region]
    return float(np.sqrt(np.mean(diff * diff))), threshold


def compare_strategies(config: ExperimentConfig) -> Tuple[ExperimentReport, ExperimentReport]:
    """Run the same phantom/budget/seed with EI and with uniform sampling.

    Per-strategy outputs land in <output_dir>/ei and <output_dir>/uniform; a
    comparison.json at the top level holds the map RMSE over the whole grid
    and over the top-decile-stiffness region.
    """
    ei_art = execute_experiment(config, strategy="ei")
    uni_art = execute_experiment(config, strategy="uniform")
    out = Path(config.output_dir)
    write_run_outputs(ei_art, out / "ei")
    write_run_outputs(uni_art, out / "uniform")

    ei_top, threshold = _top_decile_rmse(ei_art)
    uni_top, _ = _top_decile_rmse(uni_art)
    summary = {
        "master_seed": int(config.master_seed),
        "budget": int(config.budget),
        "top_decile_threshold": threshold,
        "ei": {
            "map_rmse": float(ei_art.report.map_rmse),
            "map_pearson": float(ei_art.report.map_pearson),
            "top_decile_rmse": ei_top,
            "rms_mm": float(ei_art.report.rms_mm),
        },
        "uniform": {
            "map_rmse": float(uni_art.report.map_rmse),
            "map_pearson": float(uni_art.report.map_pearson),
            "top_decile_rmse": uni_top,
            "rms_mm": float(uni_art.report.rms_mm),
        },
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return ei_art.report, uni_art.report


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_run(args) -> int:
    config = load_config(args.config)
    report = run_experiment(config)
    print(f"wrote {config.output_dir}")
    print(f"probes: {report.probe_count}")
    print(f"registration rms: {report.rms_mm:.4f} mm "
          f"(objective {report.registration_objective:.4f})")
    print(f"map rmse: {report.map_rmse:.4f} N/mm, pearson {report.map_pearson:.4f}")
    print(f"wall clock: {report.wall_clock_seconds:.2f} s")
    return 0


def _cmd_compare(args) -> int:
    config = load_config(args.config)
    ei_report, uni_report = compare_strategies(config)
    print(f"wrote {config.output_dir}")
    for report in (ei_report, uni_report):
        print(f"{report.strategy}: map rmse {report.map_rmse:.4f} N/mm, "
              f"rms {report.rms_mm:.4f} mm, probes {report.probe_count}")
    return 0


def _cmd_ground_truth(args) -> int:
    spec = load_phantom(args.phantom)
    if args.spacing <= 0.0:
        raise ConfigError("--spacing must be > 0")
    lo, hi = spec.mesh.bounds()
    roi = ROI(xmin=float(lo[0]), xmax=float(hi[0]),
              ymin=float(lo[1]), ymax=float(hi[1]), spacing=args.spacing)
    grid = prediction_grid(roi)
    values = stiffness_field(spec, grid)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["x_mm,y_mm,stiffness_n_per_mm"]
    for (x, y), v in zip(grid, values):
        lines.append(f"{_fmt(x)},{_fmt(y)},{_fmt(v)}")
    (out / "ground_truth_map.csv").write_text("\n".join(lines) + "\n")

    nx, ny = grid_shape(roi)
    img_values = values.reshape(ny, nx)
    lo_v, hi_v = float(img_values.min()), float(img_values.max())
    if hi_v - lo_v <= 0.0:
        img = np.zeros((ny, nx), dtype=np.uint8)
    else:
        img = np.rint((img_values - lo_v) / (hi_v - lo_v) * 255.0).astype(np.uint8)
    (out / "ground_truth.pgm").write_bytes(
        f"P5\n{nx} {ny}\n255\n".encode("ascii") + img.tobytes())
    print(f"wrote {out / 'ground_truth_map.csv'} ({grid.shape[0]} points)")
    return 0


def _cmd_mesh_check(args) -> int:
    mesh = load_mesh(args.mesh)
    lo, hi = mesh.bounds()
    print(f"vertices: {mesh.vertices.shape[0]}")
    print(f"faces: {mesh.faces.shape[0]}")
    print(f"bounds: x [{lo[0]:.3f}, {hi[0]:.3f}] "
          f"y [{lo[1]:.3f}, {hi[1]:.3f}] z [{lo[2]:.3f}, {hi[2]:.3f}]")
    up = float(np.mean(mesh.face_normals[:, 2] > 0.0))
    print(f"upward-facing normals: {100.0 * up:.1f}%")
    print("mesh OK")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="palpmap",
        description="Stiffness mapping and surface registration experiments "
                    "on simulated palpation data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("config", type=Path)
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare",
                           help="run EI and uniform sampling on the same config")
    p_cmp.add_argument("config", type=Path)
    p_cmp.set_defaults(func=_cmd_compare)

    p_gt = sub.add_parser("ground-truth",
                          help="emit the phantom's true stiffness map")
    p_gt.add_argument("phantom", type=Path)
    p_gt.add_argument("--spacing", type=float, default=1.0,
                      help="grid spacing in mm (default 1)")
    p_gt.add_argument("--out", type=Path, default=Path("."),
                      help="output directory (default current)")
    p_gt.set_defaults(func=_cmd_ground_truth)

    p_mc = sub.add_parser("mesh-check", help="validate a mesh file")
    p_mc.add_argument("mesh", type=Path)
    p_mc.set_defaults(func=_cmd_mesh_check)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InvalidInputError, DegenerateGeometryError, NumericalConditioningError,
            InsufficientDataError, OutOfWorkspaceError, ExplorationExhaustedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
