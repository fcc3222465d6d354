"""Virtual organ phantom and probing rig.

The phantom is a triangle mesh living in its own (model) frame with an
analytic stiffness field over model-frame x-y: a baseline plus Gaussian bumps
and an optional vessel ridge along a polyline. Probing happens in the tool
frame; the phantom's true transform maps tool coordinates to model
coordinates and is what registration later estimates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .care import ProbeMeasurement
from .errors import ConfigError, InvalidInputError, OutOfWorkspaceError
from .geometry import RigidTransform, TriMesh, load_mesh, make_transform


# ---------------------------------------------------------------------------
# Phantom description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StiffnessBump:
    """Radial Gaussian stiffness increase (model-frame x-y, mm, N/mm)."""

    center: Tuple[float, float]
    amplitude: float
    radius: float

    def __post_init__(self):
        if len(self.center) != 2:
            raise InvalidInputError("bump center must be a 2D point")
        if self.amplitude < 0.0:
            raise InvalidInputError("bump amplitude must be >= 0")
        if self.radius <= 0.0:
            raise InvalidInputError("bump radius must be > 0")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))


@dataclass(frozen=True)
class ArteryRidge:
    """Gaussian stiffness profile of the distance to a polyline, cut at 3 half-widths."""

    polyline: Tuple[Tuple[float, float], ...]
    half_width: float
    amplitude: float

    def __post_init__(self):
        pts = tuple((float(p[0]), float(p[1])) for p in self.polyline)
        if len(pts) < 2:
            raise InvalidInputError("artery polyline needs at least 2 points")
        if self.half_width <= 0.0:
            raise InvalidInputError("artery half_width must be > 0")
        if self.amplitude < 0.0:
            raise InvalidInputError("artery amplitude must be >= 0")
        object.__setattr__(self, "polyline", pts)


@dataclass(frozen=True)
class PhantomSpec:
    """Mesh surface plus analytic ground-truth stiffness field."""

    mesh: TriMesh
    baseline_stiffness: float
    bumps: Tuple[StiffnessBump, ...] = ()
    artery: Optional[ArteryRidge] = None
    true_transform: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if self.baseline_stiffness <= 0.0:
            raise InvalidInputError("baseline_stiffness must be > 0")
        object.__setattr__(self, "bumps", tuple(self.bumps))


def _segment_distances(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Min distance from each 2D point to the polyline."""
    best = np.full(points.shape[0], np.inf)
    for a, b in zip(polyline[:-1], polyline[1:]):
        ab = b - a
        denom = float(ab @ ab)
        if denom == 0.0:
            proj = np.broadcast_to(a, points.shape)
        else:
            t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
            proj = a + t[:, None] * ab
        best = np.minimum(best, np.linalg.norm(points - proj, axis=1))
    return best


def stiffness_field(spec: PhantomSpec, points) -> np.ndarray:
    """Ground-truth stiffness at model-frame x-y locations (n, 2) -> (n,)."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError("points must have shape (n, 2)")

    out = np.full(pts.shape[0], float(spec.baseline_stiffness))
    for bump in spec.bumps:
        d2 = np.sum((pts - np.asarray(bump.center)) ** 2, axis=1)
        out += bump.amplitude * np.exp(-d2 / (2.0 * bump.radius ** 2))
    if spec.artery is not None:
        art = spec.artery
        dist = _segment_distances(pts, np.asarray(art.polyline, dtype=float))
        ridge = art.amplitude * np.exp(-dist ** 2 / (2.0 * art.half_width ** 2))
        out += np.where(dist <= 3.0 * art.half_width, ridge, 0.0)
    return out[0] if single else out


def true_stiffness(spec: PhantomSpec, point) -> float:
    """Scalar ground-truth stiffness at one model-frame x-y location."""
    return float(stiffness_field(spec, np.asarray(point, dtype=float)))


# ---------------------------------------------------------------------------
# Probing rig
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeConfig:
    """Indentation protocol. Radius and contact force offset the raw
    end-effector pose and are removed again when the contact point is
    reported, so they do not change simulated measurements."""

    probe_radius: float = 9.0      # mm
    contact_force: float = 0.5     # N
    depth_increment: float = 0.3   # mm
    max_depth: float = 3.0         # mm

    def __post_init__(self):
        for name in ("probe_radius", "contact_force", "depth_increment", "max_depth"):
            if getattr(self, name) <= 0.0:
                raise InvalidInputError(f"{name} must be > 0")
        steps = self.max_depth / self.depth_increment
        if abs(steps - round(steps)) > 1e-9:
            raise InvalidInputError("max_depth must be a multiple of depth_increment")

    @property
    def steps(self) -> int:
        return int(round(self.max_depth / self.depth_increment))


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian sensing noise (zero-mean, per-axis position, scalar force)."""

    position_sigma: float = 0.0  # mm
    force_sigma: float = 0.0     # N
    rng_seed: int = 0

    def __post_init__(self):
        if self.position_sigma < 0.0 or self.force_sigma < 0.0:
            raise InvalidInputError("noise sigmas must be >= 0")
        if int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            raise InvalidInputError("rng_seed must be a non-negative integer")


def probe(spec: PhantomSpec, target, probe_config: ProbeConfig,
          noise: NoiseSpec, rng: np.random.Generator) -> List[ProbeMeasurement]:
    """Simulate one probe event at a tool-frame x-y target.

    A vertical tool-frame ray (direction -z) through the target is mapped
    through the true transform and intersected with the mesh. From the contact
    point the probe indents along the inward surface normal in fixed
    increments; each step yields a sensed position (tool frame, with per-axis
    noise), a sensed force from the linear force law (with noise, clamped at
    zero), and the exact tool-frame surface normal.
    """
    tgt = np.asarray(target, dtype=float)
    if tgt.shape != (2,):
        raise InvalidInputError("probe target must have shape (2,)")
    transform = spec.true_transform
    inverse = transform.inverse()

    top = float(inverse.apply(spec.mesh.vertices)[:, 2].max()) + 10.0
    origin = transform.apply(np.array([tgt[0], tgt[1], top]))
    direction = -transform.rotation[:, 2]  # tool-frame -z in model frame

    hit = spec.mesh.raycast(origin, direction)
    if hit is None:
        raise OutOfWorkspaceError(
            f"probe target ({tgt[0]:g}, {tgt[1]:g}) does not reach the surface")
    contact, face_index = hit
    normal = spec.mesh.face_normals[face_index]
    if float(normal @ direction) > 0.0:
        raise OutOfWorkspaceError("probe ray reached a surface facing away from it")

    stiffness = true_stiffness(spec, contact[:2])
    sensed_normal = transform.rotation.T @ normal

    measurements = []
    for k in range(1, probe_config.steps + 1):
        depth = k * probe_config.depth_increment
        tool_position = inverse.apply(contact - depth * normal)
        position = tool_position + rng.normal(0.0, noise.position_sigma, size=3)
        force = stiffness * depth + rng.normal(0.0, noise.force_sigma)
        measurements.append(ProbeMeasurement(
            position=position,
            force=max(force, 0.0),
            sensed_normal=sensed_normal,
        ))
    return measurements


# ---------------------------------------------------------------------------
# Sampling layouts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ROI:
    """Tool-frame rectangle under study plus the prediction-grid spacing."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    spacing: float = 1.0

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise InvalidInputError("ROI must have positive extent")
        if self.spacing <= 0.0:
            raise InvalidInputError("grid spacing must be > 0")


def initial_samples(roi: ROI) -> np.ndarray:
    """The 19 startup targets: 4 corners, then a 5x3 interior lattice row-major."""
    pts = [
        (roi.xmin, roi.ymin),
        (roi.xmax, roi.ymin),
        (roi.xmin, roi.ymax),
        (roi.xmax, roi.ymax),
    ]
    width = roi.xmax - roi.xmin
    height = roi.ymax - roi.ymin
    for j in range(1, 4):
        y = roi.ymin + j * height / 4.0
        for i in range(1, 6):
            pts.append((roi.xmin + i * width / 6.0, y))
    return np.asarray(pts, dtype=float)


def prediction_grid(roi: ROI) -> np.ndarray:
    """Regular row-major lattice over the closed ROI at the configured spacing."""
    nx = int(math.floor((roi.xmax - roi.xmin) / roi.spacing + 1e-9)) + 1
    ny = int(math.floor((roi.ymax - roi.ymin) / roi.spacing + 1e-9)) + 1
    xs = roi.xmin + roi.spacing * np.arange(nx)
    ys = roi.ymin + roi.spacing * np.arange(ny)
    grid = np.empty((ny * nx, 2))
    grid[:, 0] = np.tile(xs, ny)
    grid[:, 1] = np.repeat(ys, nx)
    return grid


def grid_shape(roi: ROI) -> Tuple[int, int]:
    """(nx, ny) dimensions of prediction_grid(roi)."""
    nx = int(math.floor((roi.xmax - roi.xmin) / roi.spacing + 1e-9)) + 1
    ny = int(math.floor((roi.ymax - roi.ymin) / roi.spacing + 1e-9)) + 1
    return nx, ny


def uniform_lattice(roi: ROI, count: int) -> np.ndarray:
    """`count` evenly spaced interior points, row-major (baseline strategy)."""
    if count < 1:
        raise InvalidInputError("lattice count must be >= 1")
    nx = int(math.ceil(math.sqrt(count)))
    ny = int(math.ceil(count / nx))
    width = roi.xmax - roi.xmin
    height = roi.ymax - roi.ymin
    pts = []
    for j in range(1, ny + 1):
        y = roi.ymin + j * height / (ny + 1.0)
        for i in range(1, nx + 1):
            pts.append((roi.xmin + i * width / (nx + 1.0), y))
    return np.asarray(pts[:count], dtype=float)


# ---------------------------------------------------------------------------
# Mesh synthesis and ready-made phantoms
# ---------------------------------------------------------------------------

def make_surface_mesh(xmin: float, xmax: float, ymin: float, ymax: float,
                      spacing: float,
                      height: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> TriMesh:
    """Triangulated height field z = height(x, y) with upward-facing normals."""
    if not (xmax > xmin and ymax > ymin and spacing > 0.0):
        raise InvalidInputError("bad mesh bounds or spacing")
    nx = max(2, int(round((xmax - xmin) / spacing)) + 1)
    ny = max(2, int(round((ymax - ymin) / spacing)) + 1)
    xs = np.linspace(xmin, xmax, nx)
    ys = np.linspace(ymin, ymax, ny)
    gx, gy = np.meshgrid(xs, ys)
    gz = np.asarray(height(gx, gy), dtype=float)
    if gz.shape != gx.shape:
        raise InvalidInputError("height function must return a grid-shaped array")
    vertices = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    faces = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            v00 = j * nx + i
            v10 = v00 + 1
            v01 = v00 + nx
            v11 = v01 + 1
            faces.append((v00, v10, v11))
            faces.append((v00, v11, v01))
    return TriMesh(vertices, np.asarray(faces))


def _demo_surface(xmin, xmax, ymin, ymax, knolls,
                  tilt=(0.05, -0.035), spacing=4.0) -> TriMesh:
    """Smooth terrain: a tilted base plus Gaussian knolls.

    The knolls are scattered with uneven heights and widths so the surface
    has no rotational or translational near-symmetry; rigid registration
    against it then has one sharp optimum.
    """
    gx, gy = tilt

    def height(x, y):
        z = gx * x + gy * y
        for cx, cy, knoll_height, radius in knolls:
            z = z + knoll_height * np.exp(
                -((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * radius ** 2))
        return z

    return make_surface_mesh(xmin, xmax, ymin, ymax, spacing, height)


# (center_x, center_y, height, radius); heights in mm, mixed signs
_MULTIMODAL_KNOLLS = (
    (10.0, 6.0, 9.0, 10.0),
    (34.0, 16.0, -6.0, 9.0),
    (16.0, 32.0, 7.5, 8.0),
    (40.0, 42.0, -5.0, 11.0),
    (-4.0, 40.0, 6.0, 12.0),
    (48.0, -6.0, 8.0, 14.0),
    (62.0, 30.0, 6.5, 16.0),
)

_ARTERY_KNOLLS = (
    (6.0, 10.0, 7.0, 10.0),
    (40.0, 12.0, -5.0, 9.0),
    (14.0, 38.0, 6.0, 9.0),
    (46.0, 46.0, 5.0, 11.0),
    (-14.0, 22.0, 5.0, 12.0),
    (64.0, 30.0, 6.0, 14.0),
    (30.0, -10.0, 5.0, 12.0),
)


def multimodal_phantom(center_offset: Tuple[float, float] = (0.0, 0.0),
                       true_transform: Optional[RigidTransform] = None) -> PhantomSpec:
    """Curved surface with three stiff inclusions.

    `center_offset` shifts every inclusion center (used to derive a perturbed
    variant of the same phantom).
    """
    if true_transform is None:
        true_transform = make_transform(5.0, 10.0, -15.0, 11.46, -11.46, 5.73)
    mesh = _demo_surface(-40.0, 90.0, -35.0, 95.0, _MULTIMODAL_KNOLLS)
    dx, dy = float(center_offset[0]), float(center_offset[1])
    bumps = (
        StiffnessBump(center=(12.0 + dx, 25.0 + dy), amplitude=2.0, radius=4.0),
        StiffnessBump(center=(28.0 + dx, 45.0 + dy), amplitude=1.5, radius=5.0),
        StiffnessBump(center=(33.0 + dx, 20.0 + dy), amplitude=2.5, radius=3.5),
    )
    return PhantomSpec(mesh=mesh, baseline_stiffness=1.0, bumps=bumps,
                       artery=None, true_transform=true_transform)


def artery_phantom(true_transform: Optional[RigidTransform] = None) -> PhantomSpec:
    """Gently curved surface with a buried vessel ridge crossing the workspace."""
    if true_transform is None:
        true_transform = RigidTransform.identity()
    mesh = _demo_surface(-35.5, 95.5, -35.5, 95.5, _ARTERY_KNOLLS)
    artery = ArteryRidge(
        polyline=((10.0, 14.0), (22.0, 22.0), (34.0, 26.0), (44.0, 36.0)),
        half_width=2.5,
        amplitude=2.5,
    )
    return PhantomSpec(mesh=mesh, baseline_stiffness=1.0, bumps=(),
                       artery=artery, true_transform=true_transform)


# ---------------------------------------------------------------------------
# Phantom serialization
# ---------------------------------------------------------------------------

_PHANTOM_KEYS = {"mesh", "baseline_stiffness", "bumps", "artery", "true_transform"}
_BUMP_KEYS = {"center", "amplitude", "radius"}
_ARTERY_KEYS = {"polyline", "half_width", "amplitude"}
_TRANSFORM_KEYS = {"translation_mm", "rotation_deg"}


def _reject_unknown(data: dict, allowed: set, where: str):
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def transform_to_json(transform: RigidTransform) -> dict:
    rx, ry, rz = transform.euler_deg()
    return {
        "translation_mm": [float(v) for v in transform.translation],
        "rotation_deg": [rx, ry, rz],
    }


def transform_from_json(data: dict, where: str) -> RigidTransform:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    _reject_unknown(data, _TRANSFORM_KEYS, where)
    tra = data.get("translation_mm", [0.0, 0.0, 0.0])
    rot = data.get("rotation_deg", [0.0, 0.0, 0.0])
    if len(tra) != 3 or len(rot) != 3:
        raise ConfigError(f"{where} needs 3 translations and 3 angles")
    try:
        return make_transform(tra[0], tra[1], tra[2], rot[0], rot[1], rot[2])
    except (TypeError, InvalidInputError) as exc:
        raise ConfigError(f"bad {where}: {exc}") from exc


def save_phantom(spec: PhantomSpec, path, mesh_filename: str = "mesh.obj"):
    """Write the phantom JSON and its mesh (OBJ) next to it."""
    path = Path(path)
    spec.mesh.save_obj(path.parent / mesh_filename)
    doc = {
        "mesh": mesh_filename,
        "baseline_stiffness": float(spec.baseline_stiffness),
        "bumps": [
            {"center": [b.center[0], b.center[1]],
             "amplitude": float(b.amplitude), "radius": float(b.radius)}
            for b in spec.bumps
        ],
        "artery": None if spec.artery is None else {
            "polyline": [[p[0], p[1]] for p in spec.artery.polyline],
            "half_width": float(spec.artery.half_width),
            "amplitude": float(spec.artery.amplitude),
        },
        "true_transform": transform_to_json(spec.true_transform),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_phantom(path) -> PhantomSpec:
    """Read a phantom JSON; the mesh path resolves relative to the document."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError:
        raise
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad phantom JSON {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("phantom document must be a JSON object")
    _reject_unknown(data, _PHANTOM_KEYS, "phantom")
    if "mesh" not in data or "baseline_stiffness" not in data:
        raise ConfigError("phantom needs 'mesh' and 'baseline_stiffness'")

    mesh_path = Path(data["mesh"])
    if not mesh_path.is_absolute():
        mesh_path = path.parent / mesh_path
    try:
        mesh = load_mesh(mesh_path)
    except InvalidInputError as exc:
        raise ConfigError(f"bad mesh {mesh_path}: {exc}") from exc

    bumps = []
    for i, raw in enumerate(data.get("bumps", [])):
        if not isinstance(raw, dict):
            raise ConfigError(f"bumps[{i}] must be an object")
        _reject_unknown(raw, _BUMP_KEYS, f"bumps[{i}]")
        try:
            bumps.append(StiffnessBump(center=tuple(raw["center"]),
                                       amplitude=float(raw["amplitude"]),
                                       radius=float(raw["radius"])))
        except (KeyError, TypeError, ValueError, InvalidInputError) as exc:
            raise ConfigError(f"bad bumps[{i}]: {exc}") from exc

    artery = None
    if data.get("artery") is not None:
        raw = data["artery"]
        if not isinstance(raw, dict):
            raise ConfigError("artery must be an object or null")
        _reject_unknown(raw, _ARTERY_KEYS, "artery")
        try:
            artery = ArteryRidge(polyline=tuple(tuple(p) for p in raw["polyline"]),
                                 half_width=float(raw["half_width"]),
                                 amplitude=float(raw["amplitude"]))
        except (KeyError, TypeError, ValueError, InvalidInputError) as exc:
            raise ConfigError(f"bad artery: {exc}") from exc

    transform = RigidTransform.identity()
    if "true_transform" in data:
        transform = transform_from_json(data["true_transform"], "true_transform")

    try:
        return PhantomSpec(mesh=mesh,
                           baseline_stiffness=float(data["baseline_stiffness"]),
                           bumps=tuple(bumps), artery=artery,
                           true_transform=transform)
    except (TypeError, ValueError, InvalidInputError) as exc:
        raise ConfigError(f"bad phantom: {exc}") from exc
