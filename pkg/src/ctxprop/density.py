"""Kernel density model over relation space (pairwise strategy).

The kernel is a product of Gaussians in ``r_x`` and ``r_z`` and a wrapped
Gaussian in ``r_theta``. The density evaluates the wrapped Gaussian with
three replicas (k in {-1, 0, 1} periods), which is accurate for angular
bandwidths below about one radian; sampling wraps exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyTrainingSet, ModelFormatError, ZeroBandwidth
from .geometry import wrap_angles
from .relations import PairwiseRelation, PoseMode, angle_period

FORMAT_TAG = "ctxprop-kde"
FORMAT_VERSION = 1

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Fixed:
    h_x: float
    h_z: float
    h_theta: float


SILVERMAN = "silverman"


def _as_array(relations) -> np.ndarray:
    if isinstance(relations, np.ndarray):
        arr = relations.astype(float).reshape(-1, 3)
    else:
        arr = np.array([r.as_tuple() if isinstance(r, PairwiseRelation) else tuple(r) for r in relations], dtype=float)
        arr = arr.reshape(-1, 3)
    return arr


def wrap_to_mode(theta, mode: PoseMode) -> np.ndarray:
    if PoseMode(mode) is PoseMode.ELONGATION:
        t = np.mod(theta, math.pi)
        return np.where(t >= math.pi, 0.0, t)
    return wrap_angles(theta)


def circular_std(theta, period: float = 2.0 * math.pi) -> float:
    """Circular standard deviation sqrt(-2 ln R) for angles of a given period."""
    scale = 2.0 * math.pi / period
    ang = np.asarray(theta, dtype=float) * scale
    r = math.hypot(np.mean(np.cos(ang)), np.mean(np.sin(ang)))
    r = min(r, 1.0)
    if r <= 0.0:
        return math.inf
    return math.sqrt(max(-2.0 * math.log(r), 0.0)) / scale


def silverman_bandwidth(samples: np.ndarray, mode: PoseMode) -> tuple:
    n = samples.shape[0]
    if n < 2:
        return (0.0, 0.0, 0.0)
    factor = 1.06 * n ** (-0.2)
    sx = float(np.std(samples[:, 0], ddof=1))
    sz = float(np.std(samples[:, 1], ddof=1))
    st = circular_std(samples[:, 2], angle_period(mode))
    return (factor * sx, factor * sz, factor * st)


@dataclass(frozen=True, eq=False)
class KdeModel:
    samples: np.ndarray
    bandwidth: tuple
    pose_mode: PoseMode = PoseMode.FULL

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).reshape(-1, 3)
        if s.shape[0] < 1:
            raise EmptyTrainingSet("KDE needs at least one sample")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "pose_mode", PoseMode(self.pose_mode))
        object.__setattr__(self, "bandwidth", tuple(float(h) for h in self.bandwidth))
        if any(h < 0 or not math.isfinite(h) for h in self.bandwidth):
            raise ValueError(f"bandwidths must be finite and >= 0, got {self.bandwidth}")
        t = s[:, 2]
        if self.pose_mode is PoseMode.ELONGATION:
            ok = (t >= 0) & (t < math.pi)
        else:
            ok = (t > -math.pi) & (t <= math.pi)
        if not ok.all():
            raise ValueError(f"sample angles outside the {self.pose_mode.value} range")

    @property
    def sample_count(self) -> int:
        return self.samples.shape[0]

    @property
    def period(self) -> float:
        return angle_period(self.pose_mode)

    def density(self, points, chunk: int = 4096) -> np.ndarray:
        """Density at each row of an (m, 3) array of relations."""
        hx, hz, ht = self.bandwidth
        if min(self.bandwidth) <= 0:
            raise ZeroBandwidth(f"density undefined for bandwidth {self.bandwidth}")
        q = np.asarray(points, dtype=float).reshape(-1, 3)
        s = self.samples
        out = np.empty(q.shape[0])
        norm = 1.0 / (hx * hz * ht * _SQRT_2PI**3)
        for start in range(0, q.shape[0], chunk):
            qc = q[start : start + chunk]
            ex = ((qc[:, None, 0] - s[None, :, 0]) / hx) ** 2
            ez = ((qc[:, None, 1] - s[None, :, 1]) / hz) ** 2
            dt = qc[:, None, 2] - s[None, :, 2]
            kt = sum(np.exp(-0.5 * ((dt + k * self.period) / ht) ** 2) for k in (-1, 0, 1))
            out[start : start + chunk] = norm * np.mean(np.exp(-0.5 * (ex + ez)) * kt, axis=1)
        return out

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` draws as an (n, 3) array using a caller-owned generator."""
        idx = rng.integers(0, self.sample_count, size=n)
        noise = rng.standard_normal((n, 3)) * np.asarray(self.bandwidth)
        out = self.samples[idx] + noise
        out[:, 2] = wrap_to_mode(out[:, 2], self.pose_mode)
        return out


def fit_kde(relations, bandwidth_rule=SILVERMAN, pose_mode=PoseMode.FULL) -> KdeModel:
    samples = _as_array(relations)
    if samples.shape[0] == 0:
        raise EmptyTrainingSet("no relations to fit")
    mode = PoseMode(pose_mode)
    if isinstance(bandwidth_rule, Fixed):
        bw = (bandwidth_rule.h_x, bandwidth_rule.h_z, bandwidth_rule.h_theta)
    elif bandwidth_rule == SILVERMAN:
        bw = silverman_bandwidth(samples, mode)
    else:
        raise ValueError(f"unknown bandwidth rule {bandwidth_rule!r}")
    return KdeModel(samples, bw, mode)


def kde_density(m: KdeModel, r) -> float:
    point = r.as_tuple() if isinstance(r, PairwiseRelation) else r
    return float(m.density(np.asarray(point, dtype=float))[0])


def kde_sample(m: KdeModel, rng_seed: int, n: int) -> list:
    if n < 1:
        raise ValueError("n must be >= 1")
    draws = m.draw(np.random.default_rng(rng_seed), n)
    return [PairwiseRelation(*map(float, row)) for row in draws]


# --- serialisation ------------------------------------------------------------


def dumps_kde(m: KdeModel) -> str:
    lines = [
        f"{FORMAT_TAG} {FORMAT_VERSION}",
        f"pose_mode {m.pose_mode.value}",
        "bandwidth " + " ".join(repr(h) for h in m.bandwidth),
        f"samples {m.sample_count}",
    ]
    lines += [" ".join(repr(float(v)) for v in row) for row in m.samples]
    return "\n".join(lines) + "\n"


def loads_kde(text: str) -> KdeModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    try:
        tag, version = lines[0].split()
        if tag != FORMAT_TAG or int(version) != FORMAT_VERSION:
            raise ModelFormatError(f"not a {FORMAT_TAG} v{FORMAT_VERSION} file")
        mode = PoseMode(_keyed(lines[1], "pose_mode")[0])
        bw = tuple(float(v) for v in _keyed(lines[2], "bandwidth"))
        n = int(_keyed(lines[3], "samples")[0])
        rows = [[float(v) for v in ln.split()] for ln in lines[4:]]
    except (IndexError, ValueError) as exc:
        raise ModelFormatError(f"malformed KDE model: {exc}") from exc
    if len(rows) != n or any(len(r) != 3 for r in rows) or len(bw) != 3:
        raise ModelFormatError("KDE sample block does not match its header")
    return KdeModel(np.array(rows), bw, mode)


def _keyed(line: str, key: str) -> list:
    parts = line.split()
    if not parts or parts[0] != key:
        raise ModelFormatError(f"expected '{key}' line, got {line!r}")
    return parts[1:]
