"""Ground-plane scene geometry.

Conventions: right-handed camera frame with x to the right, y down and z
forward. Objects stand on a flat ground plane ``camera_height`` metres below
the optical centre. A box is anchored at the centre of its footprint and its
yaw ``theta`` follows the KITTI ``rotation_y`` convention: the length axis
points along ``(cos theta, -sin theta)`` in the (x, z) plane, so detector
viewpoints convert with ``theta = alpha + atan2(x, z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import BehindCamera, EmptyGrid, NoOverlap, NoProjectableBox, OutOfImage

TWO_PI = 2.0 * math.pi

# projection status codes used by the vectorised routines
OK = 0
BEHIND = 1
OUTSIDE = 2

# corner layout: 4 footprint corners (on the ground) then the 4 roof corners
_SX = np.array([1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0])
_SZ = np.array([1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0])
_TOP = np.array([False] * 4 + [True] * 4)


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    t = math.remainder(theta, TWO_PI)
    if t <= -math.pi:
        t += TWO_PI
    return t


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    t = np.asarray(theta, dtype=float)
    t = t - TWO_PI * np.round(t / TWO_PI)
    t = np.where(t <= -math.pi, t + TWO_PI, t)
    return np.where(t > math.pi, t - TWO_PI, t)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: a 3x4 projection matrix plus the image size.

    ``projection`` is stored as nested tuples so the model is hashable and
    can key projection caches.
    """

    projection: tuple
    image_width: float
    image_height: float
    camera_height: float = 1.65

    def __post_init__(self):
        rows = tuple(tuple(float(v) for v in row) for row in np.asarray(self.projection, dtype=float))
        if len(rows) != 3 or any(len(r) != 4 for r in rows):
            raise ValueError("projection must be a 3x4 matrix")
        if not all(math.isfinite(v) for r in rows for v in r):
            raise ValueError("projection must be finite")
        if rows[2][2] <= 0:
            raise ValueError("projection must map forward points to positive depth")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image size must be positive")
        object.__setattr__(self, "projection", rows)

    @classmethod
    def from_intrinsics(cls, focal, cx, cy, width, height, camera_height=1.65, focal_y=None):
        fy = focal if focal_y is None else focal_y
        return cls(
            ((focal, 0.0, cx, 0.0), (0.0, fy, cy, 0.0), (0.0, 0.0, 1.0, 0.0)),
            float(width),
            float(height),
            float(camera_height),
        )

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.projection, dtype=float)


@dataclass(frozen=True)
class Box3D:
    x: float
    z: float
    l: float
    w: float
    h: float
    theta: float = 0.0

    def __post_init__(self):
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise ValueError(f"box dimensions must be positive, got {(self.l, self.w, self.h)}")
        if not all(math.isfinite(v) for v in (self.x, self.z, self.theta)):
            raise ValueError("box location and pose must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass(frozen=True)
class Object3D:
    box: Box3D
    score: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError("score must be finite")


@dataclass(frozen=True)
class Box2D:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"invalid box {(self.x1, self.y1, self.x2, self.y2)}")

    def as_tuple(self):
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class Detection2D:
    box: Box2D
    viewpoint_alpha: float
    score: float

    def __post_init__(self):
        if not (math.isfinite(self.viewpoint_alpha) and -math.pi - 1e-9 <= self.viewpoint_alpha <= math.pi + 1e-9):
            raise ValueError(f"viewpoint out of range: {self.viewpoint_alpha}")
        object.__setattr__(self, "viewpoint_alpha", wrap_angle(self.viewpoint_alpha))


@dataclass(frozen=True)
class GridSpec:
    x_range: tuple = (-20.0, 20.0)
    z_range: tuple = (4.0, 60.0)
    x_step: float = 0.5
    z_step: float = 0.5
    num_orientations: int = 8
    default_size: tuple = (3.9, 1.6, 1.5)  # (l, w, h)

    def __post_init__(self):
        object.__setattr__(self, "x_range", tuple(float(v) for v in self.x_range))
        object.__setattr__(self, "z_range", tuple(float(v) for v in self.z_range))
        object.__setattr__(self, "default_size", tuple(float(v) for v in self.default_size))

    def validate(self):
        if not (self.x_step > 0 and self.z_step > 0):
            raise EmptyGrid(f"grid steps must be positive, got {(self.x_step, self.z_step)}")
        if self.x_range[1] < self.x_range[0] or self.z_range[1] < self.z_range[0]:
            raise EmptyGrid("grid ranges are inverted")
        k = self.num_orientations
        if k < 2 or k % 2:
            raise EmptyGrid(f"num_orientations must be even and >= 2, got {k}")
        if min(self.default_size) <= 0:
            raise EmptyGrid("default_size must be positive")

    def axes(self):
        """Lattice coordinates along x, z and the K/2 merged orientations."""
        self.validate()
        xs = _axis(*self.x_range, self.x_step)
        zs = _axis(*self.z_range, self.z_step)
        half = self.num_orientations // 2
        thetas = np.arange(half) * (math.pi / half)
        return xs, zs, thetas


def _axis(lo, hi, step):
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


# --- projection -------------------------------------------------------------


def box_corners(x, z, l, w, h, theta, camera_height):
    """Corner coordinates of many ground boxes, shape (N, 8, 3)."""
    x, z, l, w, h, theta = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, z, l, w, h, theta))
    c = np.cos(theta)[:, None]
    s = np.sin(theta)[:, None]
    lx = 0.5 * l[:, None] * _SX
    lz = 0.5 * w[:, None] * _SZ
    X = x[:, None] + c * lx + s * lz
    Z = z[:, None] - s * lx + c * lz
    Y = np.where(_TOP, camera_height - h[:, None], camera_height)
    return np.stack([X, np.broadcast_to(Y, X.shape), Z], axis=-1)


def project_boxes(x, z, l, w, h, theta, cam: CameraModel):
    """Vectorised ``project_box``.

    Returns ``(boxes, status)``: boxes is (N, 4) with NaN rows where the
    status is not ``OK``.
    """
    corners = box_corners(x, z, l, w, h, theta, cam.camera_height)
    P = cam.matrix
    X, Y, Z = corners[..., 0], corners[..., 1], corners[..., 2]
    uh = P[0, 0] * X + P[0, 1] * Y + P[0, 2] * Z + P[0, 3]
    vh = P[1, 0] * X + P[1, 1] * Y + P[1, 2] * Z + P[1, 3]
    d = P[2, 0] * X + P[2, 1] * Y + P[2, 2] * Z + P[2, 3]
    behind = np.any(d <= 0, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = uh / d
        v = vh / d
    x1 = np.maximum(u.min(axis=1), 0.0)
    x2 = np.minimum(u.max(axis=1), cam.image_width)
    y1 = np.maximum(v.min(axis=1), 0.0)
    y2 = np.minimum(v.max(axis=1), cam.image_height)
    boxes = np.stack([x1, y1, x2, y2], axis=1)
    with np.errstate(invalid="ignore"):
        outside = ~((x2 > x1) & (y2 > y1) & ((x2 - x1) * (y2 - y1) >= 1.0))
    status = np.where(behind, BEHIND, np.where(outside, OUTSIDE, OK)).astype(np.int8)
    boxes[status != OK] = np.nan
    return boxes, status


def project_box(b: Box3D, cam: CameraModel) -> Box2D:
    """Axis-aligned hull of the 8 projected corners, clipped to the image."""
    boxes, status = project_boxes(b.x, b.z, b.l, b.w, b.h, b.theta, cam)
    if status[0] == BEHIND:
        raise BehindCamera(f"box at z={b.z} has corners behind the camera")
    if status[0] == OUTSIDE:
        raise OutOfImage(f"box at (x={b.x}, z={b.z}) does not project inside the image")
    return Box2D(*(float(v) for v in boxes[0]))


# --- overlap ----------------------------------------------------------------


def iou_2d(a: Box2D, b: Box2D) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    if iw <= 0:
        return 0.0
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter
    return inter / union


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise IoU between (n, 4) and (m, 4) box arrays.

    Uses the same operation order as :func:`iou_2d`, so results agree bit
    for bit with the scalar version.
    """
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = iw * ih
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = inter / union
    return np.where((iw > 0) & (ih > 0), out, 0.0)


def iou_one_to_many(box, boxes) -> np.ndarray:
    return iou_matrix(box, boxes)[0]


def nms(dets: Sequence[Detection2D], overlap_threshold: float) -> list:
    """Greedy non-maximum suppression.

    A threshold of 1.0 disables suppression entirely (Relaxed-NMS behaviour).
    """
    if not 0.0 <= overlap_threshold <= 1.0:
        raise ValueError("overlap_threshold must be in [0, 1]")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    if overlap_threshold >= 1.0:
        return [dets[i] for i in order]
    kept = []
    kept_boxes = np.empty((len(dets), 4))
    for i in order:
        d = dets[i]
        box = d.box.as_tuple()
        if not kept or np.all(iou_one_to_many(box, kept_boxes[: len(kept)]) <= overlap_threshold):
            kept_boxes[len(kept)] = box
            kept.append(d)
    return kept


# --- grids and lifting --------------------------------------------------------


def viewpoint_to_pose(alpha: float, x: float, z: float) -> float:
    """Convert an egocentric viewpoint into the scene yaw."""
    return wrap_angle(alpha + math.atan2(x, z))


def generate_grid(spec: GridSpec) -> list:
    """Dense ground boxes in z-major, then x, then theta order."""
    xs, zs, thetas = spec.axes()
    l, w, h = spec.default_size
    return [Box3D(float(x), float(z), l, w, h, float(t)) for z in zs for x in xs for t in thetas]


class GridProjection:
    """A proposal grid projected once through a camera.

    Index ``i`` matches position ``i`` of :func:`generate_grid`.
    """

    def __init__(self, spec: GridSpec, cam: CameraModel):
        self.spec = spec
        self.camera = cam
        self.xs, self.zs, self.thetas = spec.axes()
        nz, nx, nt = len(self.zs), len(self.xs), len(self.thetas)
        self.shape = (nz, nx, nt)
        zz, xx, tt = np.meshgrid(self.zs, self.xs, self.thetas, indexing="ij")
        self.x = xx.ravel()
        self.z = zz.ravel()
        self.theta = tt.ravel()
        n = self.x.size
        l, w, h = spec.default_size
        self.boxes, self.status = project_boxes(
            self.x, self.z, np.full(n, l), np.full(n, w), np.full(n, h), self.theta, cam
        )
        self.valid = self.status == OK

    def __len__(self):
        return self.x.size

    def box3d(self, i) -> Box3D:
        l, w, h = self.spec.default_size
        return Box3D(float(self.x[i]), float(self.z[i]), l, w, h, float(self.theta[i]))

    def box2d(self, i) -> Box2D:
        return Box2D(*(float(v) for v in self.boxes[i]))

    def snap(self, x, z, theta) -> np.ndarray:
        """Nearest grid index for each (x, z, theta); -1 when off the grid.

        Poses are folded modulo pi before snapping since opposite headings
        share a grid orientation.
        """
        x, z, theta = (np.asarray(v, dtype=float) for v in (x, z, theta))
        nz, nx, nt = self.shape
        ix = np.rint((x - self.xs[0]) / self.spec.x_step)
        iz = np.rint((z - self.zs[0]) / self.spec.z_step)
        it = np.rint(np.mod(theta, math.pi) / (math.pi / nt)) % nt
        ok = (ix >= 0) & (ix < nx) & (iz >= 0) & (iz < nz) & np.isfinite(it)
        idx = (iz * nx + ix) * nt + it
        return np.where(ok, idx, -1).astype(np.int64)


@lru_cache(maxsize=16)
def project_grid(spec: GridSpec, cam: CameraModel) -> GridProjection:
    return GridProjection(spec, cam)


def _best_index(ious, x, z, theta):
    """Index of the max IoU, ties broken by smaller z, then x, then theta."""
    best = ious.max()
    cand = np.flatnonzero(ious == best)
    if cand.size == 1:
        return int(cand[0])
    order = np.lexsort((theta[cand], x[cand], z[cand]))
    return int(cand[order[0]])


def lift_detection(d: Detection2D, grid, cam: CameraModel | None = None) -> Object3D:
    """Place a 2D detection in the scene at the best-overlapping grid box.

    ``grid`` is either a :class:`GridProjection` or a sequence of Box3D (in
    which case ``cam`` is required).
    """
    if isinstance(grid, GridProjection):
        x, z, theta = grid.x, grid.z, grid.theta
        boxes, valid = grid.boxes, grid.valid
        sizes = None
    else:
        if not grid:
            raise NoProjectableBox("empty grid")
        arr = np.array([(g.x, g.z, g.l, g.w, g.h, g.theta) for g in grid])
        x, z, theta = arr[:, 0], arr[:, 1], arr[:, 5]
        boxes, status = project_boxes(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], arr[:, 5], cam)
        valid = status == OK
        sizes = arr[:, 2:5]
    if not valid.any():
        raise NoProjectableBox("no grid box projects inside the image")
    ious = iou_one_to_many(d.box.as_tuple(), boxes)
    ious = np.where(valid, ious, -1.0)
    i = _best_index(ious, x, z, theta)
    if ious[i] <= 0:
        raise NoOverlap(f"detection {d.box.as_tuple()} overlaps no grid projection")
    xi, zi = float(x[i]), float(z[i])
    l, w, h = grid.spec.default_size if sizes is None else (float(v) for v in sizes[i])
    pose = viewpoint_to_pose(d.viewpoint_alpha, xi, zi)
    return Object3D(Box3D(xi, zi, l, w, h, pose), d.score)
