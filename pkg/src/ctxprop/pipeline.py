"""Dataset-level glue: fit relation models on annotated scenes, run strategies."""

from __future__ import annotations

import logging

import numpy as np

from .density import SILVERMAN, KdeModel, fit_kde
from .engine import FALLBACK, ProposalRequest, ProposalSet, SeedMode, Strategy, StrategyKind, generate, merge_streams
from .errors import EmptyTrainingSet
from .geometry import GridSpec, Object3D, nms
from .relations import Frame, PoseMode, RelationConfig, scene_relations
from .topics import LdaModel, Vocabulary, build_corpus, fit_lda

log = logging.getLogger(__name__)


def scene_objects(rec) -> list:
    return [Object3D(b3, 1.0) for _, b3 in rec.annotations]


def mean_size(records) -> tuple:
    """Mean (l, w, h) over all annotated 3D boxes."""
    dims = np.array([(b.l, b.w, b.h) for r in records for b in r.boxes3d])
    if dims.size == 0:
        raise EmptyTrainingSet("no annotated 3D boxes")
    return tuple(float(v) for v in dims.mean(axis=0))


def fit_pairwise(records, frame=Frame.CC, pose_mode=PoseMode.FULL, bandwidth_rule=SILVERMAN) -> KdeModel:
    cfg = RelationConfig(frame, pose_mode)
    rels = []
    for rec in records:
        objs = scene_objects(rec)
        if len(objs) >= 2:
            rels.extend(r.as_tuple() for _, r in scene_relations(objs, cfg))
    if not rels:
        raise EmptyTrainingSet("no scene with two or more objects")
    return fit_kde(np.array(rels), bandwidth_rule, pose_mode)


def fit_topics(
    records,
    frame=Frame.CC,
    pose_mode=PoseMode.FULL,
    num_topics=16,
    theta_bins=8,
    x_half=None,
    z_half=60.0,
    alpha=None,
    beta=0.01,
    iterations=1000,
    rng_seed=0,
    width=None,
) -> LdaModel:
    """Topic model over relation words with cells of half the mean width.

    ``x_half`` defaults to 30 m in the camera frame; in the object frame the
    longitudinal axis of a car can land on either relation axis, so both
    halves default to ``z_half``.
    """
    frame = Frame(frame)
    if x_half is None:
        x_half = z_half if frame is Frame.OC else 30.0
    if width is None:
        width = mean_size(records)[1]
    vocab = Vocabulary.centered(width, x_half, z_half, theta_bins, pose_mode)
    corpus = build_corpus([scene_objects(r) for r in records], RelationConfig(frame, pose_mode), vocab)
    return fit_lda(corpus, vocab, num_topics, alpha, beta, iterations, rng_seed)


def image_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence((int(base), int(index))).generate_state(1)[0])


def select_detections(dets, score_threshold=None, nms_threshold=None) -> list:
    """Score threshold then NMS; ``nms_threshold=1.0`` keeps overlapping boxes."""
    out = [d for d in dets if score_threshold is None or d.score >= score_threshold]
    if nms_threshold is not None:
        out = nms(out, nms_threshold)
    return out


def propose(
    rec,
    strategy: Strategy,
    model,
    grid: GridSpec,
    budget: int,
    dedup_iou=0.95,
    rng_seed=0,
    seed_mode=SeedMode.ALL,
    score_threshold=None,
    nms_threshold=None,
    top_up=True,
) -> ProposalSet:
    """Proposals for one scene; relation strategies are topped up from the grid."""
    seeds = select_detections(rec.detections, score_threshold, nms_threshold)
    req = ProposalRequest(tuple(seeds), rec.camera, grid, budget, dedup_iou, rng_seed, seed_mode)
    ps = generate(req, strategy, model)
    if top_up and ps.exhausted and strategy.kind is not StrategyKind.SLIDING_WINDOW:
        filler = generate(req, Strategy(StrategyKind.SLIDING_WINDOW))
        filler.provenance = [FALLBACK] * len(filler)
        ps = merge_streams(ps, filler, budget, dedup_iou)
    return ps


def propose_all(records, strategy, model, grid, budget, rng_seed=0, **kw) -> list:
    return [propose(rec, strategy, model, grid, budget, rng_seed=image_seed(rng_seed, i), **kw) for i, rec in enumerate(records)]
