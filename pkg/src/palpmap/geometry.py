"""Rigid transforms, triangle meshes, and point-set alignment.

Conventions:
    * Points are float64 arrays, mm units. Single points have shape (3,),
      batches (n, 3).
    * Rotations compose extrinsically about fixed axes X then Y then Z, so the
      matrix built from angles (rx, ry, rz) is Rz @ Ry @ Rx. Angles are degrees.
    * Mesh face normals are recomputed from vertex winding (counterclockwise
      seen from the outside); normals stored in files are ignored.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, InvalidInputError

_ORTHONORMAL_TOL = 1e-9


def _as_points(value, name: str) -> np.ndarray:
    pts = np.asarray(value, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidInputError(f"{name} must have shape (n, 3), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return pts


# ---------------------------------------------------------------------------
# Rigid transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion p -> rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        tra = np.asarray(self.translation, dtype=float)
        if rot.shape != (3, 3):
            raise InvalidInputError(f"rotation must be 3x3, got {rot.shape}")
        if tra.shape != (3,):
            raise InvalidInputError(f"translation must have shape (3,), got {tra.shape}")
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(tra))):
            raise InvalidInputError("transform contains non-finite values")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > _ORTHONORMAL_TOL:
            raise InvalidInputError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(rot) - 1.0) > _ORTHONORMAL_TOL:
            raise InvalidInputError("rotation determinant must be +1 within 1e-9")
        rot = rot.copy()
        tra = tra.copy()
        rot.flags.writeable = False
        tra.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        """Transform a point (3,) or a batch (n, 3)."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = _as_points(pts, "points")
        out = pts @ self.rotation.T + self.translation
        return out[0] if single else out

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equivalent to applying `other` first, then `self`."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def euler_deg(self) -> Tuple[float, float, float]:
        """Angles (rx, ry, rz) in degrees such that R = Rz @ Ry @ Rx."""
        r = self.rotation
        sy = -r[2, 0]
        sy = min(1.0, max(-1.0, sy))
        ry = math.asin(sy)
        if abs(r[2, 0]) < 1.0 - 1e-12:
            rx = math.atan2(r[2, 1], r[2, 2])
            rz = math.atan2(r[1, 0], r[0, 0])
        elif r[2, 0] < 0.0:  # ry = +90 deg, only rx - rz observable
            rx = math.atan2(r[0, 1], r[0, 2])
            rz = 0.0
        else:  # ry = -90 deg
            rx = math.atan2(-r[0, 1], -r[0, 2])
            rz = 0.0
        return math.degrees(rx), math.degrees(ry), math.degrees(rz)


def make_transform(tx: float, ty: float, tz: float,
                   rx_deg: float, ry_deg: float, rz_deg: float) -> RigidTransform:
    """Build a rigid transform from translations (mm) and fixed-axis X,Y,Z angles (deg)."""
    ax, ay, az = (math.radians(a) for a in (rx_deg, ry_deg, rz_deg))
    cx, sx = math.cos(ax), math.sin(ax)
    cy, sy = math.cos(ay), math.sin(ay)
    cz, sz = math.cos(az), math.sin(az)
    rot_x = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    rot_y = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rot_z = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    return RigidTransform(rot_z @ rot_y @ rot_x, np.array([tx, ty, tz], dtype=float))


# ---------------------------------------------------------------------------
# Point-set alignment
# ---------------------------------------------------------------------------

def rigid_fit_svd(source, target) -> RigidTransform:
    """Least-squares rigid transform mapping `source` points onto `target`.

    Cross-covariance SVD with the reflection case corrected by negating the
    singular vector of the smallest singular value, so the result is always a
    proper rotation (det +1).
    """
    src = _as_points(source, "source")
    tgt = _as_points(target, "target")
    if src.shape[0] != tgt.shape[0]:
        raise InvalidInputError("source and target must have equal length")
    if src.shape[0] < 3:
        raise InvalidInputError("at least 3 point pairs are required")

    c_src = src.mean(axis=0)
    c_tgt = tgt.mean(axis=0)
    centered = src - c_src
    sing = np.linalg.svd(centered, compute_uv=False)
    if sing[1] <= 1e-9 * max(sing[0], 1e-6):
        raise DegenerateGeometryError("source points are collinear")

    h = centered.T @ (tgt - c_tgt)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0.0:
        d = 1.0
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, c_tgt - rot @ c_src)


def rms_error(estimate: RigidTransform, truth: RigidTransform, points) -> float:
    """RMS distance between the two images of `points` under both transforms."""
    pts = _as_points(points, "points")
    if pts.shape[0] == 0:
        raise InvalidInputError("points must be non-empty")
    diff = estimate.apply(pts) - truth.apply(pts)
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


# ---------------------------------------------------------------------------
# Triangle meshes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClosestPointResult:
    point: np.ndarray
    normal: np.ndarray
    face_index: int
    distance: float


def _closest_on_triangles(a, b, c, p) -> np.ndarray:
    """Closest points on triangles (a, b, c) to query points p, all (n, 3).

    Vectorized region walk: classify p against the triangle's vertex, edge,
    and face Voronoi regions, first matching region wins.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)

    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)

    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    def safe_div(num, den):
        den_safe = np.where(den == 0.0, 1.0, den)
        return num / den_safe

    v_ab = safe_div(d1, d1 - d3)
    w_ac = safe_div(d2, d2 - d6)
    w_bc = safe_div(d4 - d3, (d4 - d3) + (d5 - d6))
    denom = safe_div(np.ones_like(va), va + vb + vc)
    v_in = vb * denom
    w_in = vc * denom

    conds = [
        (d1 <= 0.0) & (d2 <= 0.0),                 # vertex a
        (d3 >= 0.0) & (d4 <= d3),                  # vertex b
        (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0),   # edge ab
        (d6 >= 0.0) & (d5 <= d6),                  # vertex c
        (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0),   # edge ac
        (va <= 0.0) & (d4 >= d3) & (d5 >= d6),     # edge bc
    ]
    choices = [
        a,
        b,
        a + v_ab[:, None] * ab,
        c,
        a + w_ac[:, None] * ac,
        b + w_bc[:, None] * (c - b),
    ]
    out = a + v_in[:, None] * ab + w_in[:, None] * ac  # interior
    for cond, choice in zip(reversed(conds), reversed(choices)):
        out = np.where(cond[:, None], choice, out)
    return out


class TriMesh:
    """Immutable triangle mesh with normals derived from winding order."""

    def __init__(self, vertices, faces):
        verts = np.asarray(vertices, dtype=float)
        tris = np.asarray(faces)
        if verts.ndim != 2 or verts.shape[1] != 3 or verts.shape[0] < 3:
            raise InvalidInputError("vertices must have shape (n>=3, 3)")
        if not np.all(np.isfinite(verts)):
            raise InvalidInputError("vertices contain non-finite values")
        if tris.ndim != 2 or tris.shape[1] != 3 or tris.shape[0] < 1:
            raise InvalidInputError("faces must have shape (m>=1, 3)")
        if not np.issubdtype(tris.dtype, np.integer):
            tris_f = np.asarray(tris, dtype=float)
            tris = tris_f.astype(np.int64)
            if np.any(tris_f != tris):
                raise InvalidInputError("face indices must be integers")
        tris = tris.astype(np.int64)
        if tris.min() < 0 or tris.max() >= verts.shape[0]:
            raise InvalidInputError("face index out of range")
        if np.any((tris[:, 0] == tris[:, 1]) | (tris[:, 1] == tris[:, 2])
                  | (tris[:, 0] == tris[:, 2])):
            raise InvalidInputError("faces must reference three distinct vertices")

        corners = verts[tris]
        cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        area2 = np.linalg.norm(cross, axis=1)
        if np.any(area2 <= 0.0):
            raise InvalidInputError("mesh contains zero-area faces")
        normals = cross / area2[:, None]

        for arr in (verts, tris, normals):
            arr.flags.writeable = False
        self._vertices = verts
        self._faces = tris
        self._face_normals = normals
        self._accel = None

    @property
    def vertices(self) -> np.ndarray:
        return self._vertices

    @property
    def faces(self) -> np.ndarray:
        return self._faces

    @property
    def face_normals(self) -> np.ndarray:
        return self._face_normals

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self._vertices.min(axis=0), self._vertices.max(axis=0)

    # -- closest point -------------------------------------------------

    def _ensure_accel(self):
        if self._accel is None:
            corners = self._vertices[self._faces]
            centroids = corners.mean(axis=1)
            radii = np.linalg.norm(corners - centroids[:, None, :], axis=2).max(axis=1)
            self._accel = (
                cKDTree(self._vertices),
                cKDTree(centroids),
                centroids,
                float(radii.max()),
            )
        return self._accel

    def closest_points(self, queries) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Batch closest-point query.

        Returns (points (n,3), normals (n,3), face_indices (n,), distances (n,)).
        Ties between faces resolve to the lowest face index.
        """
        q = _as_points(queries, "queries")
        vertex_tree, centroid_tree, _, max_radius = self._ensure_accel()

        upper, _ = vertex_tree.query(q)
        # Any face holding a point closer than `upper` has its centroid within
        # upper + r_f of the query, so this ball is an exact candidate filter.
        radii = upper + max_radius + 1e-9
        lists = centroid_tree.query_ball_point(q, radii, return_sorted=True)

        lens = np.fromiter((len(l) for l in lists), dtype=np.int64, count=len(lists))
        qidx = np.repeat(np.arange(q.shape[0]), lens)
        fidx = np.concatenate([np.asarray(l, dtype=np.int64) for l in lists])

        corners = self._vertices[self._faces[fidx]]
        pts = _closest_on_triangles(corners[:, 0], corners[:, 1], corners[:, 2], q[qidx])
        diff = pts - q[qidx]
        d2 = np.einsum("ij,ij->i", diff, diff)

        starts = np.zeros(q.shape[0], dtype=np.int64)
        np.cumsum(lens[:-1], out=starts[1:])
        best = np.minimum.reduceat(d2, starts)
        equal = d2 == np.repeat(best, lens)
        order = np.arange(d2.shape[0])
        first = np.minimum.reduceat(np.where(equal, order, d2.shape[0]), starts)

        faces = fidx[first]
        return (pts[first], self._face_normals[faces], faces, np.sqrt(best))

    def closest_point(self, query) -> ClosestPointResult:
        """Closest surface point to a single query point."""
        pts, normals, faces, dists = self.closest_points(np.asarray(query, dtype=float)[None, :])
        return ClosestPointResult(pts[0], normals[0], int(faces[0]), float(dists[0]))

    # -- ray casting ----------------------------------------------------

    def raycast(self, origin, direction) -> Optional[Tuple[np.ndarray, int]]:
        """First intersection of the ray origin + t*direction (t > 0) with the mesh.

        Returns (point, face_index) of the nearest hit or None. Ties on t
        resolve to the lowest face index.
        """
        o = np.asarray(origin, dtype=float)
        d = np.asarray(direction, dtype=float)
        if o.shape != (3,) or d.shape != (3,):
            raise InvalidInputError("origin and direction must have shape (3,)")
        norm = np.linalg.norm(d)
        if not np.isfinite(norm) or norm == 0.0:
            raise InvalidInputError("direction must be non-zero")
        d = d / norm

        v0 = self._vertices[self._faces[:, 0]]
        e1 = self._vertices[self._faces[:, 1]] - v0
        e2 = self._vertices[self._faces[:, 2]] - v0
        h = np.cross(d[None, :], e2)
        det = np.einsum("ij,ij->i", e1, h)
        ok = np.abs(det) > 1e-12
        inv = np.where(ok, det, 1.0)
        s = o[None, :] - v0
        u = np.einsum("ij,ij->i", s, h) / inv
        qv = np.cross(s, e1)
        v = np.einsum("j,ij->i", d, qv) / inv
        t = np.einsum("ij,ij->i", e2, qv) / inv

        eps = 1e-9
        hit = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1.0 + eps) & (t > eps)
        if not np.any(hit):
            return None
        t = np.where(hit, t, np.inf)
        idx = int(np.argmin(t))
        return o + t[idx] * d, idx

    # -- serialization ----------------------------------------------------

    def save_obj(self, path):
        lines = []
        for v in self._vertices:
            lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
        for f in self._faces:
            lines.append(f"f {int(f[0]) + 1} {int(f[1]) + 1} {int(f[2]) + 1}")
        Path(path).write_text("\n".join(lines) + "\n")

    @staticmethod
    def load_obj(path) -> "TriMesh":
        verts = []
        faces = []
        text = Path(path).read_text()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) < 4:
                    raise InvalidInputError(f"line {lineno}: vertex needs 3 coordinates")
                try:
                    verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as exc:
                    raise InvalidInputError(f"line {lineno}: bad vertex coordinate") from exc
            elif parts[0] == "f":
                refs = parts[1:]
                if len(refs) != 3:
                    raise InvalidInputError(
                        f"line {lineno}: only triangular faces are supported")
                face = []
                for ref in refs:
                    head = ref.split("/")[0]
                    try:
                        idx = int(head)
                    except ValueError as exc:
                        raise InvalidInputError(f"line {lineno}: bad face index") from exc
                    if idx < 1:
                        raise InvalidInputError(f"line {lineno}: face indices are 1-based")
                    face.append(idx - 1)
                faces.append(face)
            # other record types (vn, vt, o, g, s, usemtl, mtllib) are ignored
        if not verts or not faces:
            raise InvalidInputError("OBJ file has no triangles")
        return TriMesh(np.array(verts), np.array(faces))

    def to_json_dict(self) -> dict:
        return {"vertices": self._vertices.tolist(), "faces": self._faces.tolist()}

    @staticmethod
    def from_json_dict(data: dict) -> "TriMesh":
        if not isinstance(data, dict) or "vertices" not in data or "faces" not in data:
            raise InvalidInputError("mesh JSON needs 'vertices' and 'faces'")
        return TriMesh(np.array(data["vertices"], dtype=float), np.array(data["faces"]))

    def save_json(self, path):
        Path(path).write_text(json.dumps(self.to_json_dict()) + "\n")

    @staticmethod
    def load_json(path) -> "TriMesh":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"bad mesh JSON: {exc}") from exc
        return TriMesh.from_json_dict(data)


def load_mesh(path) -> TriMesh:
    """Load a mesh from .obj or .json by file extension."""
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return TriMesh.load_obj(path)
    if suffix == ".json":
        return TriMesh.load_json(path)
    raise InvalidInputError(f"unsupported mesh format: {suffix!r}")
