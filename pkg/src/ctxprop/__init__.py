"""Context-based object proposals for street scenes.

Seed detections are lifted onto a ground-plane grid of 3D boxes; spatial
relation models (a pairwise KDE or an LDA topic model over quantized
relations) then suggest where further objects are likely to be. The hot
loops (Gibbs sweeps, greedy matching) run in a compiled extension when it is
available and in pure Python otherwise; see :data:`ctxprop._kernels.BACKEND`.
"""

from ._kernels import BACKEND
from .dataset import (
    SYNTH_CAMERA,
    LabelRecord,
    SceneRecord,
    SplitSpec,
    SynthSpec,
    generate_synthetic,
    load_dataset,
    parse_calibration,
    parse_detection_file,
    parse_label_file,
    split_dataset,
    write_dataset,
)
from .density import SILVERMAN, Fixed, KdeModel, fit_kde, kde_density, kde_sample
from .engine import ProposalRequest, ProposalSet, SeedMode, Strategy, StrategyKind, generate, merge_streams
from .errors import CtxPropError
from .evaluation import MatchResult, RecallCurve, match, recall_curve, write_curve_csv
from .geometry import (
    Box2D,
    Box3D,
    CameraModel,
    Detection2D,
    GridSpec,
    Object3D,
    generate_grid,
    iou_2d,
    lift_detection,
    nms,
    project_box,
    viewpoint_to_pose,
)
from .relations import Frame, PairwiseRelation, PoseMode, RelationConfig, compute_pairwise, scene_relations
from .topics import (
    Document,
    LdaModel,
    Vocabulary,
    build_corpus,
    dequantize,
    fit_lda,
    quantize,
    sample_word,
    topic_top_words,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Box2D",
    "Box3D",
    "CameraModel",
    "CtxPropError",
    "Detection2D",
    "Document",
    "Fixed",
    "Frame",
    "GridSpec",
    "KdeModel",
    "LabelRecord",
    "LdaModel",
    "MatchResult",
    "Object3D",
    "PairwiseRelation",
    "PoseMode",
    "ProposalRequest",
    "ProposalSet",
    "RecallCurve",
    "RelationConfig",
    "SILVERMAN",
    "SYNTH_CAMERA",
    "SceneRecord",
    "SeedMode",
    "SplitSpec",
    "Strategy",
    "StrategyKind",
    "SynthSpec",
    "Vocabulary",
    "build_corpus",
    "compute_pairwise",
    "dequantize",
    "fit_kde",
    "fit_lda",
    "generate",
    "generate_grid",
    "generate_synthetic",
    "iou_2d",
    "kde_density",
    "kde_sample",
    "lift_detection",
    "load_dataset",
    "match",
    "merge_streams",
    "nms",
    "parse_calibration",
    "parse_detection_file",
    "parse_label_file",
    "project_box",
    "quantize",
    "recall_curve",
    "sample_word",
    "scene_relations",
    "split_dataset",
    "topic_top_words",
    "viewpoint_to_pose",
    "write_curve_csv",
    "write_dataset",
]
