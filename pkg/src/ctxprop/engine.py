"""Turn seed detections into a ranked stream of 2D object proposals.

Every strategy proposes boxes from the same projected 3D grid: relation
samples are applied to a lifted seed, snapped to the nearest grid box and
projected. Candidates that fail to project or that overlap an already kept
proposal by more than ``dedup_iou`` are skipped without using budget.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .density import KdeModel
from .errors import ModelMissing, NoOverlap
from .geometry import Box2D, CameraModel, GridProjection, GridSpec, lift_detection, project_grid
from .relations import Frame, PoseMode, RelationConfig, apply_relations
from .topics import LdaModel

log = logging.getLogger(__name__)

GRID = "grid"
PAIRWISE = "pairwise"
FALLBACK = "fallback"


def topic_tag(t: int) -> str:
    return f"topic:{t}"


class StrategyKind(str, enum.Enum):
    SLIDING_WINDOW = "sliding_window"
    PAIRWISE_KDE = "pairwise_kde"
    HIGHER_ORDER_TOPICS = "hor"
    HIGHER_ORDER_ELONGATION = "hor_elongation"


class SeedMode(str, enum.Enum):
    ALL = "all"
    TOP_SCORING = "top"


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind
    frame: Frame = Frame.CC

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        object.__setattr__(self, "frame", Frame(self.frame))

    @property
    def label(self) -> str:
        if self.kind is StrategyKind.SLIDING_WINDOW:
            return self.kind.value
        return f"{self.frame.value}_{self.kind.value}"

    @property
    def pose_mode(self) -> PoseMode:
        if self.kind is StrategyKind.HIGHER_ORDER_ELONGATION:
            return PoseMode.ELONGATION
        return PoseMode.FULL


@dataclass(frozen=True)
class ProposalRequest:
    seeds: tuple
    camera: CameraModel
    grid: GridSpec
    budget: int
    dedup_iou: float = 0.95
    rng_seed: int = 0
    seed_mode: SeedMode = SeedMode.ALL

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(self.seeds))
        object.__setattr__(self, "seed_mode", SeedMode(self.seed_mode))
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not 0.0 <= self.dedup_iou <= 1.0:
            raise ValueError("dedup_iou must be in [0, 1]")


@dataclass
class ProposalSet:
    proposals: list = field(default_factory=list)
    provenance: list = field(default_factory=list)
    # grid box each proposal came from (-1 for boxes merged in from elsewhere)
    grid_indices: list = field(default_factory=list)
    # lifted seed and topic word behind each proposal, -1 when not applicable
    seed_indices: list = field(default_factory=list)
    words: list = field(default_factory=list)
    exhausted: bool = False

    def __len__(self):
        return len(self.proposals)

    def boxes(self) -> np.ndarray:
        return np.array([b.as_tuple() for b in self.proposals], dtype=float).reshape(-1, 4)


class _Collector:
    def __init__(self, grid: GridProjection, budget: int, dedup_iou: float):
        self.grid = grid
        self.budget = budget
        self.dedup_iou = dedup_iou
        self.kept = np.empty((budget, 4))
        self.used = set()
        self.out = ProposalSet()

    @property
    def full(self) -> bool:
        return len(self.out) >= self.budget

    def offer(self, idx: int, tag: str, seed: int = -1, word: int = -1) -> bool:
        if idx < 0 or not self.grid.valid[idx]:
            return False
        if self.dedup_iou < 1.0 and idx in self.used:
            return False
        box = self.grid.boxes[idx]
        n = len(self.out)
        if self.dedup_iou < 1.0 and _kernels.overlaps_any(box, self.kept, n, self.dedup_iou):
            return False
        self.kept[n] = box
        self.used.add(idx)
        o = self.out
        o.proposals.append(Box2D(*(float(v) for v in box)))
        o.provenance.append(tag)
        o.grid_indices.append(int(idx))
        o.seed_indices.append(seed)
        o.words.append(word)
        return True

    def finish(self) -> ProposalSet:
        self.out.exhausted = not self.full
        return self.out


def select_seeds(seeds, mode: SeedMode) -> list:
    seeds = list(seeds)
    if SeedMode(mode) is SeedMode.TOP_SCORING and seeds:
        best = max(range(len(seeds)), key=lambda i: (seeds[i].score, -i))
        return [seeds[best]]
    return seeds


def lift_seeds(seeds, grid: GridProjection) -> list:
    objects = []
    for d in seeds:
        try:
            objects.append(lift_detection(d, grid))
        except NoOverlap:
            log.debug("dropping seed %s: no grid overlap", d.box.as_tuple())
    return objects


def _grid_stream(grid: GridProjection, req: ProposalRequest, tag: str) -> ProposalSet:
    col = _Collector(grid, req.budget, req.dedup_iou)
    for idx in np.flatnonzero(grid.valid):
        if col.full:
            break
        col.offer(int(idx), tag)
    return col.finish()


def _pairwise_stream(grid, req, objects, model: KdeModel, frame: Frame, max_draws_per_slot: int) -> ProposalSet:
    cfg = RelationConfig(frame, model.pose_mode)
    col = _Collector(grid, req.budget, req.dedup_iou)
    rng = np.random.default_rng(req.rng_seed)
    n_seeds = len(objects)
    max_draws = max_draws_per_slot * req.budget
    batch = 256 * n_seeds
    draws = 0
    while not col.full and draws < max_draws:
        k = min(batch, max_draws - draws)
        rel = model.draw(rng, k)
        owner = (draws + np.arange(k)) % n_seeds
        idx = np.empty(k, dtype=np.int64)
        for s, obj in enumerate(objects):
            rows = owner == s
            b = obj.box
            x, z, t = apply_relations(b.x, b.z, b.theta, rel[rows], cfg)
            idx[rows] = grid.snap(x, z, t)
        for j in range(k):
            if col.offer(int(idx[j]), PAIRWISE, int(owner[j])) and col.full:
                break
        draws += k
    return col.finish()


def _topic_stream(grid, req, objects, model: LdaModel, frame: Frame, pose_mode: PoseMode) -> ProposalSet:
    vocab = model.vocab
    if vocab is None:
        raise ModelMissing("topic model has no vocabulary attached")
    if vocab.pose_mode is not pose_mode:
        raise ModelMissing(f"topic model was fitted with {vocab.pose_mode.value} poses, strategy needs {pose_mode.value}")
    cfg = RelationConfig(frame, pose_mode)
    rel = vocab.dequantize_many(np.arange(vocab.size))
    rankings = model.rankings
    T = model.num_topics
    cursors = {}
    for s, obj in enumerate(objects):
        b = obj.box
        x, z, t = apply_relations(b.x, b.z, b.theta, rel, cfg)
        cells = grid.snap(x, z, t)
        ok = cells >= 0
        ok[ok] = grid.valid[cells[ok]]
        for topic in range(T):
            order = rankings[topic]
            order = order[ok[order]]
            # a repeated cell can never be emitted twice; keep its best-ranked word
            _, first = np.unique(cells[order], return_index=True)
            order = order[np.sort(first)]
            cursors[(s, topic)] = [cells[order].tolist(), order.tolist(), 0]
    col = _Collector(grid, req.budget, req.dedup_iou)
    active = [(s, t) for s in range(len(objects)) for t in range(T)]
    while active and not col.full:
        still = []
        for key in active:
            if col.full:
                break
            cells, words, pos = cursors[key]
            emitted = False
            while pos < len(cells):
                c, w = cells[pos], words[pos]
                pos += 1
                if col.offer(c, topic_tag(key[1]), key[0], w):
                    emitted = True
                    break
            cursors[key][2] = pos
            if emitted and pos < len(cells):
                still.append(key)
        active = still
    return col.finish()


def generate(req: ProposalRequest, strategy: Strategy, model=None, max_draws_per_slot: int = 50) -> ProposalSet:
    """Proposals for one image, in exploration order.

    Images without usable seeds are served entirely by the sliding-window
    grid, tagged ``fallback``. ``exhausted`` is set when the strategy ran out
    of candidates before filling the budget; the caller may top up with
    :func:`merge_streams`. Pairwise sampling gives up after
    ``max_draws_per_slot * budget`` relation draws.
    """
    grid = project_grid(req.grid, req.camera)
    kind = strategy.kind
    if kind is StrategyKind.SLIDING_WINDOW:
        return _grid_stream(grid, req, GRID)
    if kind is StrategyKind.PAIRWISE_KDE and not isinstance(model, KdeModel):
        raise ModelMissing("pairwise strategy needs a KDE model")
    if kind in (StrategyKind.HIGHER_ORDER_TOPICS, StrategyKind.HIGHER_ORDER_ELONGATION) and not isinstance(model, LdaModel):
        raise ModelMissing(f"{kind.value} strategy needs a topic model")
    objects = lift_seeds(select_seeds(req.seeds, req.seed_mode), grid)
    if not objects:
        return _grid_stream(grid, req, FALLBACK)
    if kind is StrategyKind.PAIRWISE_KDE:
        return _pairwise_stream(grid, req, objects, model, strategy.frame, max_draws_per_slot)
    return _topic_stream(grid, req, objects, model, strategy.frame, strategy.pose_mode)


def merge_streams(primary: ProposalSet, fallback: ProposalSet, budget: int, dedup_iou: float) -> ProposalSet:
    """Primary proposals first, then fallback ones not duplicating anything kept."""
    out = ProposalSet()
    kept = np.empty((budget, 4))

    def push(ps: ProposalSet, i: int) -> None:
        n = len(out)
        box = np.array(ps.proposals[i].as_tuple(), dtype=float)
        if _kernels.overlaps_any(box, kept, n, dedup_iou):
            return
        kept[n] = box
        out.proposals.append(ps.proposals[i])
        out.provenance.append(ps.provenance[i])
        out.grid_indices.append(ps.grid_indices[i] if ps.grid_indices else -1)
        out.seed_indices.append(ps.seed_indices[i] if ps.seed_indices else -1)
        out.words.append(ps.words[i] if ps.words else -1)

    for ps in (primary, fallback):
        for i in range(len(ps)):
            if len(out) >= budget:
                break
            push(ps, i)
    out.exhausted = len(out) < budget
    return out
