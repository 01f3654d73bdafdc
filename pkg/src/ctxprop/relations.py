"""Pairwise spatial relations between grounded objects.

A relation ``(r_x, r_z, r_theta)`` describes where ``dst`` sits relative to
``src``. In the camera-centred frame the offset is the plain difference of
locations; in the object-centred frame it is expressed in ``src``'s own axes
(``r_x`` along its length axis, ``r_z`` along its width axis), which makes it
invariant to rigid motions of the whole scene.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import TooFewObjects
from .geometry import Object3D, wrap_angle, wrap_angles


class Frame(str, enum.Enum):
    CC = "cc"
    OC = "oc"


class PoseMode(str, enum.Enum):
    FULL = "full"
    ELONGATION = "elongation"


@dataclass(frozen=True)
class RelationConfig:
    frame: Frame = Frame.CC
    pose_mode: PoseMode = PoseMode.FULL

    def __post_init__(self):
        object.__setattr__(self, "frame", Frame(self.frame))
        object.__setattr__(self, "pose_mode", PoseMode(self.pose_mode))


@dataclass(frozen=True)
class PairwiseRelation:
    r_x: float
    r_z: float
    r_theta: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.r_x, self.r_z, self.r_theta)):
            raise ValueError("relation fields must be finite")

    def as_tuple(self):
        return (self.r_x, self.r_z, self.r_theta)


def angle_period(mode: PoseMode) -> float:
    return math.pi if PoseMode(mode) is PoseMode.ELONGATION else 2.0 * math.pi


def elongation_fold(theta: float) -> float:
    """Reduce a heading modulo pi, identifying opposite directions."""
    t = theta % math.pi
    return 0.0 if t >= math.pi else t


def elongation_folds(theta) -> np.ndarray:
    t = np.mod(np.asarray(theta, dtype=float), math.pi)
    return np.where(t >= math.pi, 0.0, t)


def relative_pose(src_theta: float, dst_theta: float, mode: PoseMode) -> float:
    if PoseMode(mode) is PoseMode.ELONGATION:
        return elongation_fold(elongation_fold(dst_theta) - elongation_fold(src_theta))
    return wrap_angle(dst_theta - src_theta)


def compute_pairwise(src: Object3D, dst: Object3D, cfg: RelationConfig) -> PairwiseRelation:
    if src is dst:
        raise ValueError("a relation needs two distinct objects")
    a, b = src.box, dst.box
    dx = b.x - a.x
    dz = b.z - a.z
    if cfg.frame is Frame.OC:
        c, s = math.cos(a.theta), math.sin(a.theta)
        dx, dz = dx * c - dz * s, dx * s + dz * c
    return PairwiseRelation(dx, dz, relative_pose(a.theta, b.theta, cfg.pose_mode))


def scene_relations(objects, cfg: RelationConfig) -> list:
    """All ordered-pair relations of a scene, tagged with the source index."""
    if len(objects) < 2:
        raise TooFewObjects(f"need at least 2 objects, got {len(objects)}")
    out = []
    for i, src in enumerate(objects):
        for j, dst in enumerate(objects):
            if i != j:
                out.append((i, compute_pairwise(src, dst, cfg)))
    return out


def apply_relations(x, z, theta, rel, cfg: RelationConfig):
    """Place targets relative to a source; the inverse of ``compute_pairwise``.

    ``x, z, theta`` describe the source (scalars), ``rel`` is an (n, 3) array
    of relations. Returns target ``(x, z, theta)`` arrays.
    """
    rel = np.asarray(rel, dtype=float).reshape(-1, 3)
    rx, rz, rt = rel[:, 0], rel[:, 1], rel[:, 2]
    if cfg.frame is Frame.OC:
        c, s = math.cos(theta), math.sin(theta)
        rx, rz = rx * c + rz * s, -rx * s + rz * c
    if cfg.pose_mode is PoseMode.ELONGATION:
        pose = elongation_folds(elongation_fold(theta) + rt)
    else:
        pose = wrap_angles(theta + rt)
    return x + rx, z + rz, pose
