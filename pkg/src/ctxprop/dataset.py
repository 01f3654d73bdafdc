"""KITTI-format files, dataset splits and synthetic lane scenes.

Label lines follow the KITTI object devkit: ``type truncated occluded alpha
x1 y1 x2 y2 h w l x y z rotation_y`` with an optional trailing score, which
detection files always carry. The 3D location is the bottom centre of the
box, so ``(x, z)`` is already the footprint centre used by :class:`Box3D`;
``y`` is the camera height above the ground at that spot and is kept only
for write-back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MalformedLine, MalformedMatrix, MissingMatrix
from .geometry import OK, Box2D, Box3D, CameraModel, Detection2D, project_boxes, wrap_angle

KITTI_IMAGE_SIZE = (1242.0, 375.0)
KITTI_CAMERA_HEIGHT = 1.65
CALIB_KEY = "P2"  # left colour camera

LABEL_FIELDS = 15


@dataclass(frozen=True)
class LabelRecord:
    cls: str
    truncated: float
    occluded: int
    alpha: float
    box2d: Box2D
    dims: tuple  # (h, w, l) as written in the file
    location: tuple  # (x, y, z), bottom centre in camera coordinates
    rotation_y: float
    score: float | None = None

    @property
    def box3d(self) -> Box3D | None:
        """Grounded box, or None for placeholder rows (e.g. DontCare)."""
        h, w, l = self.dims
        if min(h, w, l) <= 0:
            return None
        return Box3D(self.location[0], self.location[2], l, w, h, self.rotation_y)

    def detection(self) -> Detection2D:
        return Detection2D(self.box2d, self.alpha, 1.0 if self.score is None else self.score)


def _num(parts, i, line_no, kind=float):
    try:
        v = kind(parts[i])
    except ValueError:
        raise MalformedLine(line_no, i, f"cannot parse {parts[i]!r} as {kind.__name__}") from None
    if kind is float and not math.isfinite(v):
        raise MalformedLine(line_no, i, "non-finite value")
    return v


def parse_label_file(text: str, require_score: bool = False) -> list:
    """One :class:`LabelRecord` per non-blank line; every class is kept."""
    out = []
    want = "16" if require_score else "15 or 16"
    for line_no, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        n = len(parts)
        if n not in (LABEL_FIELDS, LABEL_FIELDS + 1) or (require_score and n != LABEL_FIELDS + 1):
            raise MalformedLine(line_no, min(n, LABEL_FIELDS), f"expected {want} fields, got {n}")
        truncated = _num(parts, 1, line_no)
        occluded = _num(parts, 2, line_no, int)
        alpha = _num(parts, 3, line_no)
        x1, y1, x2, y2 = (_num(parts, i, line_no) for i in range(4, 8))
        try:
            box = Box2D(x1, y1, x2, y2)
        except ValueError as exc:
            raise MalformedLine(line_no, 4, str(exc)) from None
        dims = tuple(_num(parts, i, line_no) for i in range(8, 11))
        loc = tuple(_num(parts, i, line_no) for i in range(11, 14))
        ry = _num(parts, 14, line_no)
        score = _num(parts, 15, line_no) if n == LABEL_FIELDS + 1 else None
        if not -math.pi - 1e-6 <= alpha <= math.pi + 1e-6 and parts[0] != "DontCare":
            raise MalformedLine(line_no, 3, f"alpha {alpha} outside [-pi, pi]")
        out.append(LabelRecord(parts[0], truncated, occluded, alpha, box, dims, loc, ry, score))
    return out


def parse_detection_file(text: str, cls: str | None = "Car") -> list:
    """Detections (label layout plus score) of one class as Detection2D."""
    return [r.detection() for r in parse_label_file(text, require_score=True) if cls is None or r.cls == cls]


def _fmt(v: float) -> str:
    s = f"{v:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def serialize_labels(records) -> str:
    lines = []
    for r in records:
        fields = [r.cls, _fmt(r.truncated), str(r.occluded), _fmt(r.alpha)]
        fields += [_fmt(v) for v in r.box2d.as_tuple()]
        fields += [_fmt(v) for v in r.dims + r.location]
        fields.append(_fmt(r.rotation_y))
        if r.score is not None:
            fields.append(_fmt(r.score))
        lines.append(" ".join(fields))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_calibration(text: str, key: str = CALIB_KEY, image_size=KITTI_IMAGE_SIZE, camera_height=KITTI_CAMERA_HEIGHT) -> CameraModel:
    for line in text.splitlines():
        head, sep, rest = line.partition(":")
        if sep and head.strip() == key:
            parts = rest.split()
            if len(parts) != 12:
                raise MalformedMatrix(f"{key} has {len(parts)} values, expected 12")
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise MalformedMatrix(f"{key}: {exc}") from None
            rows = (tuple(vals[0:4]), tuple(vals[4:8]), tuple(vals[8:12]))
            try:
                return CameraModel(rows, float(image_size[0]), float(image_size[1]), float(camera_height))
            except ValueError as exc:
                raise MalformedMatrix(f"{key}: {exc}") from None
    raise MissingMatrix(f"no '{key}:' entry in calibration")


def serialize_calibration(cam: CameraModel, key: str = CALIB_KEY) -> str:
    vals = [repr(v) for row in cam.projection for v in row]
    return f"{key}: " + " ".join(vals) + "\n"


# --- scenes and splits --------------------------------------------------------


@dataclass(frozen=True)
class SceneRecord:
    image_id: str
    camera: CameraModel
    annotations: tuple  # of (Box2D, Box3D)
    detections: tuple = ()
    timestamp: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(self.annotations))
        object.__setattr__(self, "detections", tuple(self.detections))

    @property
    def boxes2d(self) -> list:
        return [a[0] for a in self.annotations]

    @property
    def boxes3d(self) -> list:
        return [a[1] for a in self.annotations]


def load_scene(image_id, label_text, calib_text, detection_text=None, cls="Car", image_size=KITTI_IMAGE_SIZE, camera_height=KITTI_CAMERA_HEIGHT) -> SceneRecord:
    cam = parse_calibration(calib_text, image_size=image_size, camera_height=camera_height)
    ann = []
    for r in parse_label_file(label_text):
        if r.cls == cls and r.box3d is not None:
            ann.append((r.box2d, r.box3d))
    dets = parse_detection_file(detection_text, cls) if detection_text else []
    return SceneRecord(image_id, cam, ann, dets)


def load_dataset(root, cls="Car", image_size=KITTI_IMAGE_SIZE, camera_height=KITTI_CAMERA_HEIGHT, detections_dir="detections") -> list:
    """Scenes from ``root/label_2``, ``root/calib`` and optionally ``root/<detections_dir>``."""
    root = Path(root)
    labels = root / "label_2"
    if not labels.is_dir():
        raise FileNotFoundError(f"{labels} does not exist")
    out = []
    for lp in sorted(labels.glob("*.txt")):
        iid = lp.stem
        cp = root / "calib" / f"{iid}.txt"
        dp = root / detections_dir / f"{iid}.txt"
        if not cp.is_file():
            raise FileNotFoundError(f"{cp} does not exist")
        det = dp.read_text() if dp.is_file() else None
        out.append(load_scene(iid, lp.read_text(), cp.read_text(), det, cls, image_size, camera_height))
    return out


def write_dataset(records, root, cls="Car", detections_dir="detections") -> None:
    """Write scenes in the same layout :func:`load_dataset` reads."""
    root = Path(root)
    for sub in ("label_2", "calib", detections_dir):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for rec in records:
        h = rec.camera.camera_height
        labels = [_label_for(cls, b2, b3, h) for b2, b3 in rec.annotations]
        (root / "label_2" / f"{rec.image_id}.txt").write_text(serialize_labels(labels))
        (root / "calib" / f"{rec.image_id}.txt").write_text(serialize_calibration(rec.camera))
        dets = [
            LabelRecord(cls, 0.0, 0, d.viewpoint_alpha, d.box, (-1.0, -1.0, -1.0), (-1000.0, -1000.0, -1000.0), -10.0, d.score)
            for d in rec.detections
        ]
        (root / detections_dir / f"{rec.image_id}.txt").write_text(serialize_labels(dets))


def _label_for(cls, b2: Box2D, b3: Box3D, camera_height: float) -> LabelRecord:
    alpha = wrap_angle(b3.theta - math.atan2(b3.x, b3.z))
    return LabelRecord(cls, 0.0, 0, alpha, b2, (b3.h, b3.w, b3.l), (b3.x, camera_height, b3.z), b3.theta)


@dataclass(frozen=True)
class SplitSpec:
    ordering_key: str = "timestamp"  # or "image_id"
    fraction: float = 0.5
    min_objects_per_image: int = 2

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ValueError("fraction must be in (0, 1)")
        if self.ordering_key not in ("timestamp", "image_id"):
            raise ValueError(f"unknown ordering key {self.ordering_key!r}")


def split_dataset(records, spec: SplitSpec = SplitSpec()):
    """Ordered split into (train, test); sparse images are left out of both."""
    eligible = [r for r in records if len(r.annotations) >= spec.min_objects_per_image]

    def key(r):
        if spec.ordering_key == "timestamp" and r.timestamp is not None:
            return (0, r.timestamp, r.image_id)
        return (1, 0.0, r.image_id)

    eligible.sort(key=key)
    n_train = math.ceil(spec.fraction * len(eligible))
    return eligible[:n_train], eligible[n_train:]


# --- synthetic scenes -----------------------------------------------------------

SYNTH_CAMERA = CameraModel.from_intrinsics(721.5, 609.6, 172.9, 1242, 375, camera_height=1.65)


@dataclass(frozen=True)
class SynthSpec:
    num_scenes: int = 100
    lanes: int = 2
    lane_width: float = 3.5
    spacing_mean: float = 8.0
    spacing_sd: float = 0.5
    heading_set: tuple = (-math.pi / 2, math.pi / 2)  # per lane, cycled
    occupancy: float = 0.8
    rng_seed: int = 0
    slots_per_lane: int = 6
    first_slot_z: float = 8.0
    lane_stagger: float = 0.0
    car_size: tuple = (3.9, 1.6, 1.5)  # (l, w, h)
    seeds_per_scene: int = 1  # nearest cars turned into detections; -1 for all
    id_prefix: str = ""

    def __post_init__(self):
        object.__setattr__(self, "heading_set", tuple(float(h) for h in self.heading_set))
        object.__setattr__(self, "car_size", tuple(float(v) for v in self.car_size))
        if not 0.0 <= self.occupancy <= 1.0:
            raise ValueError("occupancy must be a probability")
        if self.lane_width <= 0 or self.lanes < 1 or self.slots_per_lane < 1:
            raise ValueError("need lane_width > 0, lanes >= 1, slots_per_lane >= 1")
        if not self.heading_set:
            raise ValueError("heading_set must not be empty")


def generate_synthetic(spec: SynthSpec, camera: CameraModel = SYNTH_CAMERA) -> list:
    """Street scenes with cars parked along lane centrelines.

    Car ``k`` of a lane sits ``k`` gaps past the lane start, each gap drawn
    from N(spacing_mean, spacing_sd). Slots are occupied independently with
    probability ``occupancy``; cars that do not project into the image are
    dropped. Annotation boxes are exact projections of the planted boxes.
    """
    rng = np.random.default_rng(spec.rng_seed)
    l, w, h = spec.car_size
    out = []
    for i in range(spec.num_scenes):
        cars = []
        for lane in range(spec.lanes):
            x = (lane - (spec.lanes - 1) / 2.0) * spec.lane_width
            heading = spec.heading_set[lane % len(spec.heading_set)]
            noise = rng.normal(0.0, 1.0, size=spec.slots_per_lane) * spec.spacing_sd
            occupied = rng.random(spec.slots_per_lane) < spec.occupancy
            z0 = spec.first_slot_z + lane * spec.lane_stagger
            zs = z0 + np.arange(spec.slots_per_lane) * spec.spacing_mean + np.cumsum(noise)
            for k in range(spec.slots_per_lane):
                if occupied[k]:
                    cars.append(Box3D(float(x), float(zs[k]), l, w, h, heading))
        ann = []
        if cars:
            arr = np.array([(c.x, c.z, c.l, c.w, c.h, c.theta) for c in cars])
            boxes, status = project_boxes(*arr.T, camera)
            for c, b, s in zip(cars, boxes, status):
                if s == OK:
                    ann.append((Box2D(*(float(v) for v in b)), c))
        ann.sort(key=lambda a: (a[1].z, a[1].x))
        n_seed = len(ann) if spec.seeds_per_scene < 0 else min(spec.seeds_per_scene, len(ann))
        dets = [
            Detection2D(b2, wrap_angle(b3.theta - math.atan2(b3.x, b3.z)), 1.0 - 0.01 * r)
            for r, (b2, b3) in enumerate(ann[:n_seed])
        ]
        out.append(SceneRecord(f"{spec.id_prefix}{i:06d}", camera, ann, dets))
    return out
