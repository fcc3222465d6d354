"""Contact-based stiffness estimation and complementary model-update registration.

Raw probe measurements (tool-frame position, normal force magnitude, sensed
surface normal) are grouped into compatible sets, each set yields a local
stiffness estimate from a force-vs-depth line fit, and the sets drive an
iterative closest-point style registration: the low-force reference point of
each set is matched to the mesh, pushed inward along the surface normal by the
predicted indentation force/stiffness, and a rigid transform is refit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (DegenerateGeometryError, InsufficientDataError,
                     InvalidInputError)
from .geometry import RigidTransform, TriMesh, make_transform, rigid_fit_svd

_MIN_STIFFNESS = 1e-6  # N/mm floor for degenerate line fits


@dataclass(frozen=True)
class ProbeMeasurement:
    """One sensed sample: tool-frame position (mm), force (N), unit normal."""

    position: np.ndarray
    force: float
    sensed_normal: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        nrm = np.asarray(self.sensed_normal, dtype=float)
        if pos.shape != (3,) or nrm.shape != (3,):
            raise InvalidInputError("position and sensed_normal must have shape (3,)")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(nrm))
                and np.isfinite(self.force)):
            raise InvalidInputError("measurement contains non-finite values")
        if self.force < 0.0:
            raise InvalidInputError("force must be >= 0")
        if abs(np.linalg.norm(nrm) - 1.0) > 1e-6:
            raise InvalidInputError("sensed_normal must be unit length")
        pos = pos.copy()
        nrm = nrm.copy()
        pos.flags.writeable = False
        nrm.flags.writeable = False
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "sensed_normal", nrm)


@dataclass(frozen=True)
class CompatibleSet:
    """Indices of measurements judged to probe the same surface patch."""

    index: int
    member_indices: Tuple[int, ...]
    reference_index: int  # member with the minimum force
    location: np.ndarray  # tool-frame x-y of the reference measurement

    def __post_init__(self):
        loc = np.asarray(self.location, dtype=float)
        if loc.shape != (2,):
            raise InvalidInputError("set location must have shape (2,)")
        if len(self.member_indices) < 2:
            raise InvalidInputError("a compatible set needs at least 2 members")
        if self.reference_index not in self.member_indices:
            raise InvalidInputError("reference_index must be a member")
        loc = loc.copy()
        loc.flags.writeable = False
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "member_indices", tuple(int(i) for i in self.member_indices))


@dataclass(frozen=True)
class StiffnessSample:
    """Local stiffness estimate attached to a surface location."""

    location: np.ndarray
    stiffness: float
    set_index: int
    degenerate: bool = False

    def __post_init__(self):
        loc = np.asarray(self.location, dtype=float)
        if loc.shape != (2,):
            raise InvalidInputError("sample location must have shape (2,)")
        if not (np.isfinite(self.stiffness) and self.stiffness > 0.0):
            raise InvalidInputError("stiffness must be > 0")
        loc = loc.copy()
        loc.flags.writeable = False
        object.__setattr__(self, "location", loc)


def default_seed_transforms(count: int = 10, max_translation: float = 10.0,
                            max_rotation_deg: float = 15.0,
                            rng_seed: int = 7) -> Tuple[RigidTransform, ...]:
    """Identity plus `count` random perturbations for multi-seed registration."""
    rng = np.random.default_rng(rng_seed)
    seeds = [RigidTransform.identity()]
    for _ in range(count):
        t = rng.uniform(-max_translation, max_translation, size=3)
        r = rng.uniform(-max_rotation_deg, max_rotation_deg, size=3)
        seeds.append(make_transform(t[0], t[1], t[2], r[0], r[1], r[2]))
    return tuple(seeds)


@dataclass(frozen=True)
class CMUConfig:
    """Grouping thresholds and registration loop controls."""

    tangent_distance: float = 1.0       # mm
    normal_angle_deg: float = 10.0
    min_force_difference: float = 0.05  # N
    max_iterations: int = 50
    convergence_tolerance: float = 1e-3  # mm, max reference-point displacement
    seed_transforms: Tuple[RigidTransform, ...] = field(
        default_factory=default_seed_transforms)

    def __post_init__(self):
        if self.tangent_distance <= 0.0 or self.normal_angle_deg <= 0.0:
            raise InvalidInputError("grouping thresholds must be > 0")
        if self.min_force_difference <= 0.0:
            raise InvalidInputError("min_force_difference must be > 0")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be a positive integer")
        if self.convergence_tolerance <= 0.0:
            raise InvalidInputError("convergence_tolerance must be > 0")
        if len(self.seed_transforms) < 1:
            raise InvalidInputError("at least one seed transform is required")
        object.__setattr__(self, "seed_transforms", tuple(self.seed_transforms))


# ---------------------------------------------------------------------------
# Step 1: greedy grouping
# ---------------------------------------------------------------------------

class SetCollector:
    """Incremental greedy grouping of measurements in arrival order.

    A measurement joins the first existing set (creation order) for which all
    three conditions hold, else it opens a new set:
      (i)   some member's force differs from it by >= min_force_difference,
      (ii)  tangent-plane distance to the set anchor <= tangent_distance,
      (iii) angle to the anchor normal <= normal_angle_deg.
    The anchor is the set's first measurement. Grouping depends only on the
    measurement prefix, so adding measurements never reshuffles earlier sets.
    """

    def __init__(self, config: CMUConfig):
        self._config = config
        self._count = 0
        self._anchors: List[np.ndarray] = []
        self._normals: List[np.ndarray] = []
        self._members: List[List[int]] = []
        self._forces: List[List[float]] = []
        self._fmin = np.zeros(0)
        self._fmax = np.zeros(0)
        self._cos_limit = math.cos(math.radians(config.normal_angle_deg))

    def add(self, measurement: ProbeMeasurement) -> int:
        """Insert one measurement; returns the set slot it joined."""
        idx = self._count
        self._count += 1
        pos = measurement.position
        nrm = measurement.sensed_normal
        force = measurement.force

        if self._anchors:
            anchors = np.asarray(self._anchors)
            normals = np.asarray(self._normals)
            # (i): member forces span [fmin, fmax], so the largest |dF| to any
            # member is reached at one of the extremes.
            force_ok = np.maximum(force - self._fmin, self._fmax - force) \
                >= self._config.min_force_difference
            diff = pos[None, :] - anchors
            along = np.einsum("ij,ij->i", diff, normals)
            tangent = diff - along[:, None] * normals
            dist_ok = np.einsum("ij,ij->i", tangent, tangent) \
                <= self._config.tangent_distance ** 2
            angle_ok = normals @ nrm >= self._cos_limit - 1e-12
            match = force_ok & dist_ok & angle_ok
            hit = int(np.argmax(match)) if match.any() else -1
        else:
            hit = -1

        if hit >= 0:
            self._members[hit].append(idx)
            self._forces[hit].append(force)
            self._fmin[hit] = min(self._fmin[hit], force)
            self._fmax[hit] = max(self._fmax[hit], force)
            return hit

        self._anchors.append(pos)
        self._normals.append(nrm)
        self._members.append([idx])
        self._forces.append([force])
        self._fmin = np.append(self._fmin, force)
        self._fmax = np.append(self._fmax, force)
        return len(self._members) - 1

    def sets(self, measurements: Sequence[ProbeMeasurement]) -> List[CompatibleSet]:
        """Finished sets with >= 2 members; singletons are discarded."""
        out: List[CompatibleSet] = []
        for members, forces in zip(self._members, self._forces):
            if len(members) < 2:
                continue
            ref = members[int(np.argmin(forces))]
            out.append(CompatibleSet(
                index=len(out),
                member_indices=tuple(members),
                reference_index=ref,
                location=measurements[ref].position[:2],
            ))
        return out


def collect_sets(measurements: Sequence[ProbeMeasurement],
                 config: CMUConfig) -> List[CompatibleSet]:
    """Group measurements into compatible sets (arrival-order greedy)."""
    collector = SetCollector(config)
    for m in measurements:
        collector.add(m)
    return collector.sets(measurements)


# ---------------------------------------------------------------------------
# Step 2: per-set stiffness
# ---------------------------------------------------------------------------

def estimate_stiffness(cset: CompatibleSet,
                       measurements: Sequence[ProbeMeasurement]) -> StiffnessSample:
    """Least-squares slope of force vs. indentation depth within one set.

    Depth of each member is its distance from the set's minimum-force
    (reference) measurement. Non-positive or sub-floor slopes are clamped to
    1e-6 N/mm and flagged degenerate.
    """
    reference = measurements[cset.reference_index]
    positions = np.asarray([measurements[i].position for i in cset.member_indices])
    forces = np.asarray([measurements[i].force for i in cset.member_indices])
    depths = np.linalg.norm(positions - reference.position[None, :], axis=1)

    if depths.max() <= 1e-12:
        raise DegenerateGeometryError("zero depth span in compatible set")

    d_centered = depths - depths.mean()
    slope = float(np.dot(d_centered, forces - forces.mean())
                  / np.dot(d_centered, d_centered))
    degenerate = slope < _MIN_STIFFNESS
    return StiffnessSample(location=cset.location,
                           stiffness=max(slope, _MIN_STIFFNESS),
                           set_index=cset.index,
                           degenerate=degenerate)


# ---------------------------------------------------------------------------
# Steps 3-5: correspondence, minimization, loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeedOutcome:
    """Converged state of one registration seed."""

    transform: RigidTransform
    objective: float
    iterations: int


@dataclass(frozen=True)
class RegistrationResult:
    """Winning transform plus the per-seed objective table."""

    transform: RigidTransform
    objective: float
    iterations: int
    per_seed: Tuple[SeedOutcome, ...]


def _registration_arrays(sets: Sequence[CompatibleSet],
                         samples: Sequence[StiffnessSample],
                         measurements: Sequence[ProbeMeasurement]):
    if len(sets) != len(samples):
        raise InvalidInputError("sets and stiffness samples must align")
    points = []
    forces = []
    stiffness = []
    for cset, sample in zip(sets, samples):
        if sample.set_index != cset.index:
            raise InvalidInputError("stiffness sample does not match its set")
        if sample.degenerate:
            continue
        ref = measurements[cset.reference_index]
        points.append(ref.position)
        forces.append(ref.force)
        stiffness.append(sample.stiffness)
    if len(points) < 3:
        raise InsufficientDataError(
            f"registration needs >= 3 sets with valid stiffness, got {len(points)}")
    return np.asarray(points), np.asarray(forces), np.asarray(stiffness)


def cmu_register(sets: Sequence[CompatibleSet],
                 samples: Sequence[StiffnessSample],
                 mesh: TriMesh,
                 measurements: Sequence[ProbeMeasurement],
                 config: CMUConfig) -> RegistrationResult:
    """Multi-seed registration of probed reference points to the mesh.

    Each iteration maps the reference points through the current transform,
    finds mesh closest points, offsets them inward along the surface normal by
    force/stiffness, and refits a rigid transform; a seed stops once the
    largest reference-point displacement falls below the tolerance. The seed
    with the smallest final objective (sum of residual norms, correspondences
    recomputed at the evaluated transform) wins; no seed is returned worse
    than its own starting point.

    All seeds advance in lockstep so each iteration issues a single batched
    closest-point query; per-seed iterates are unaffected by the batching.
    """
    points, forces, stiffness = _registration_arrays(sets, samples, measurements)
    offsets = forces / stiffness

    seeds = config.seed_transforms
    n_seeds = len(seeds)
    n_pts = points.shape[0]
    current: List[RigidTransform] = list(seeds)
    best_transform: List[RigidTransform] = list(seeds)
    best_obj = [math.inf] * n_seeds
    iterations = [0] * n_seeds
    active = list(range(n_seeds))

    for _ in range(config.max_iterations):
        if not active:
            break
        stacked = np.concatenate([current[i].apply(points) for i in active])
        surf, normals, _, _ = mesh.closest_points(stacked)
        still_moving = []
        for row, i in enumerate(active):
            block = slice(row * n_pts, (row + 1) * n_pts)
            moved = stacked[block]
            targets = surf[block] - normals[block] * offsets[:, None]
            objective = float(np.linalg.norm(targets - moved, axis=1).sum())
            if objective < best_obj[i]:
                best_obj[i] = objective
                best_transform[i] = current[i]
            nxt = rigid_fit_svd(points, targets)
            displacement = float(
                np.linalg.norm(nxt.apply(points) - moved, axis=1).max())
            current[i] = nxt
            iterations[i] += 1
            if displacement >= config.convergence_tolerance:
                still_moving.append(i)
        active = still_moving

    stacked = np.concatenate([current[i].apply(points) for i in range(n_seeds)])
    surf, normals, _, _ = mesh.closest_points(stacked)
    for i in range(n_seeds):
        block = slice(i * n_pts, (i + 1) * n_pts)
        targets = surf[block] - normals[block] * offsets[:, None]
        objective = float(np.linalg.norm(targets - stacked[block], axis=1).sum())
        if objective < best_obj[i]:
            best_obj[i] = objective
            best_transform[i] = current[i]

    outcomes = tuple(SeedOutcome(transform=best_transform[i], objective=best_obj[i],
                                 iterations=iterations[i])
                     for i in range(n_seeds))
    winner = min(range(n_seeds), key=lambda i: outcomes[i].objective)
    best = outcomes[winner]
    return RegistrationResult(transform=best.transform, objective=best.objective,
                              iterations=best.iterations, per_seed=outcomes)
