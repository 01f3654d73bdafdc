"""Command-line entry point: ``ctxprop {synth,fit,sample,eval}``.

Every subcommand accepts ``--config FILE`` holding a JSON object whose keys
are the long option names (dashes or underscores); explicit flags override
it. Each command writes a JSON run manifest next to its output that echoes
every resolved setting, defaults included.

Errors exit with status 1 and a single ``error: <Kind>: <reason>`` line on
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from ._kernels import BACKEND
from .dataset import SplitSpec, SynthSpec, generate_synthetic, load_dataset, split_dataset, write_dataset
from .density import SILVERMAN, Fixed, dumps_kde, loads_kde
from .engine import SeedMode, Strategy, StrategyKind
from .errors import CtxPropError, ModelMissing
from .evaluation import recall_curve, write_curves_csv
from .geometry import Box2D, GridSpec
from .pipeline import fit_pairwise, fit_topics, image_seed, mean_size, propose, select_detections
from .relations import Frame
from .topics import dumps_lda, loads_lda

log = logging.getLogger("ctxprop")

DEFAULT_BUDGETS = (1, 10, 50, 100, 500, 1000)
PROPOSAL_FIELDS = ("image_id", "rank", "x1", "y1", "x2", "y2", "provenance")


class CliError(Exception):
    """Bad invocation detected after argument parsing."""


# --- config -------------------------------------------------------------------


def _load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file {p} does not exist")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {p} is not valid JSON: {exc.msg} at line {exc.lineno}") from exc
    if not isinstance(cfg, dict):
        raise CliError(f"config file {p} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    """Parse twice: once to find the subcommand and config, once with its values as defaults."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = _load_config(args.config)
        sub = args._subparser
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise CliError(f"unknown config keys for '{args.command}': {', '.join(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _settings(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if not k.startswith("_") and k != "func"}


def _write_manifest(path: Path, command: str, args, **extra) -> None:
    doc = {
        "command": command,
        "version": __version__,
        "settings": _settings(args),
    }
    doc.update(extra)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --- shared helpers -------------------------------------------------------------


def _records(args):
    recs = load_dataset(args.data, cls=args.cls)
    if args.split == "all":
        return recs
    train, test = split_dataset(recs, SplitSpec(args.split_key, args.split_fraction, args.min_objects))
    return train if args.split == "train" else test


def _strategy(args) -> Strategy:
    return Strategy(StrategyKind(args.strategy), Frame(args.frame))


def _model_paths(models: Path, strategy: Strategy):
    stem = models / strategy.label
    ext = ".kde" if strategy.kind is StrategyKind.PAIRWISE_KDE else ".lda"
    return stem.with_suffix(ext), stem.with_suffix(".manifest.json")


def _grid(args, size) -> GridSpec:
    g = GridSpec(
        x_range=tuple(args.grid_x),
        z_range=tuple(args.grid_z),
        x_step=args.grid_step,
        z_step=args.grid_step,
        num_orientations=args.orientations,
        default_size=tuple(size),
    )
    g.validate()
    return g


# --- synth ----------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SynthSpec(
        num_scenes=args.num_scenes,
        lanes=args.lanes,
        lane_width=args.lane_width,
        spacing_mean=args.spacing_mean,
        spacing_sd=args.spacing_sd,
        heading_set=tuple(args.headings),
        occupancy=args.occupancy,
        rng_seed=args.seed,
        slots_per_lane=args.slots,
        seeds_per_scene=args.seeds_per_scene,
    )
    recs = generate_synthetic(spec)
    out = Path(args.out)
    write_dataset(recs, out)
    n_obj = sum(len(r.annotations) for r in recs)
    _write_manifest(out / "manifest.json", "synth", args, scenes=len(recs), objects=n_obj)
    log.info("wrote %d scenes (%d objects) to %s", len(recs), n_obj, out)
    return 0


# --- fit ------------------------------------------------------------------------


def cmd_fit(args) -> int:
    strategy = _strategy(args)
    if strategy.kind is StrategyKind.SLIDING_WINDOW:
        raise CliError("the sliding-window strategy has no model to fit")
    recs = _records(args)
    size = mean_size(recs)
    models = Path(args.models)
    models.mkdir(parents=True, exist_ok=True)
    model_path, manifest_path = _model_paths(models, strategy)
    extra = {"strategy": strategy.label, "mean_size": list(size), "train_images": len(recs), "backend": BACKEND}
    if strategy.kind is StrategyKind.PAIRWISE_KDE:
        rule = SILVERMAN if args.bandwidth is None else Fixed(*args.bandwidth)
        kde = fit_pairwise(recs, strategy.frame, strategy.pose_mode, rule)
        model_path.write_text(dumps_kde(kde))
        extra.update(samples=kde.sample_count, bandwidth=list(kde.bandwidth))
    else:
        width = args.width if args.width is not None else size[1]
        lda = fit_topics(
            recs,
            strategy.frame,
            strategy.pose_mode,
            num_topics=args.topics,
            theta_bins=args.theta_bins,
            x_half=args.x_half,
            z_half=args.z_half,
            alpha=args.alpha,
            beta=args.beta,
            iterations=args.iterations,
            rng_seed=args.seed,
            width=width,
        )
        model_path.write_text(dumps_lda(lda))
        v = lda.vocab
        extra.update(
            W=width,
            cell=[v.cell_x, v.cell_z],
            x_extent=list(v.x_extent),
            z_extent=list(v.z_extent),
            theta_bins=v.theta_bins,
            V=v.size,
            T=lda.num_topics,
            alpha=lda.alpha_prior,
            beta=lda.beta_prior,
            documents=lda.meta["num_documents"],
            tokens=lda.meta["num_tokens"],
        )
    _write_manifest(manifest_path, "fit", args, model=model_path.name, **extra)
    log.info("wrote %s", model_path)
    return 0


# --- sample ---------------------------------------------------------------------


def _load_model(models: Path, strategy: Strategy):
    model_path, manifest_path = _model_paths(models, strategy)
    if not model_path.is_file():
        raise ModelMissing(f"{model_path} does not exist; run 'ctxprop fit' for {strategy.label} first")
    text = model_path.read_text()
    model = loads_kde(text) if strategy.kind is StrategyKind.PAIRWISE_KDE else loads_lda(text)
    meta = json.loads(manifest_path.read_text()) if manifest_path.is_file() else {}
    return model, meta


def _propose_one(job):
    rec, strategy, model, grid, opts, seed = job
    return propose(rec, strategy, model, grid, rng_seed=seed, **opts)


def format_proposals(label: str, rows) -> str:
    """``rows`` yields ``(image_id, ProposalSet)`` in output order."""
    lines = [f"# strategy {label}", "# " + " ".join(PROPOSAL_FIELDS)]
    for iid, ps in rows:
        for rank, (b, tag) in enumerate(zip(ps.proposals, ps.provenance)):
            lines.append(f"{iid} {rank} {b.x1:.6f} {b.y1:.6f} {b.x2:.6f} {b.y2:.6f} {tag}")
    return "\n".join(lines) + "\n"


def parse_proposals(text: str, path="<proposals>"):
    """Inverse of :func:`format_proposals`: ``(label, {image_id: [Box2D, ...]})``."""
    label = None
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "strategy":
                label = parts[1]
            continue
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != len(PROPOSAL_FIELDS):
            raise CliError(f"{path}:{n}: expected {len(PROPOSAL_FIELDS)} fields, got {len(parts)}")
        iid, rank = parts[0], int(parts[1])
        boxes = out.setdefault(iid, [])
        if rank != len(boxes):
            raise CliError(f"{path}:{n}: rank {rank} out of order for image {iid}")
        boxes.append(Box2D(*(float(v) for v in parts[2:6])))
    if label is None:
        raise CliError(f"{path}: missing '# strategy <label>' header")
    return label, out


def cmd_sample(args) -> int:
    strategy = _strategy(args)
    models = Path(args.models) if args.models else None
    model, meta = None, {}
    if strategy.kind is not StrategyKind.SLIDING_WINDOW:
        if models is None:
            raise ModelMissing(f"{strategy.label} needs --models")
        model, meta = _load_model(models, strategy)
    size = args.box_size or meta.get("mean_size") or GridSpec().default_size
    grid = _grid(args, size)
    recs = _records(args)
    # plain values only: jobs are pickled when running with workers
    opts = dict(
        budget=args.budget,
        dedup_iou=args.dedup_iou,
        seed_mode=SeedMode(args.seed_mode),
        score_threshold=args.tau,
        nms_threshold=args.nms,
    )
    jobs = [(rec, strategy, model, grid, opts, image_seed(args.seed, i)) for i, rec in enumerate(recs)]
    fallback = 0
    for rec in recs:
        if not select_detections(rec.detections, args.tau, args.nms):
            fallback += 1
            log.info("image %s: no seeds survive tau, serving sliding-window proposals", rec.image_id)
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            sets = list(pool.map(_propose_one, jobs, chunksize=max(1, len(jobs) // (4 * args.workers))))
    else:
        sets = [_propose_one(j) for j in jobs]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_proposals(strategy.label, ((r.image_id, ps) for r, ps in zip(recs, sets))))
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        "sample",
        args,
        strategy=strategy.label,
        images=len(recs),
        fallback_images=fallback,
        grid_default_size=list(grid.default_size),
        proposals=sum(len(ps) for ps in sets),
    )
    log.info("wrote %d images of proposals to %s", len(recs), out)
    return 0


# --- eval -----------------------------------------------------------------------


def cmd_eval(args) -> int:
    budgets = sorted(set(args.budgets))
    recs = _records(args)
    blocks = []
    for p in args.proposals:
        path = Path(p)
        if not path.is_file():
            raise FileNotFoundError(f"proposals file {path} does not exist")
        label, by_image = parse_proposals(path.read_text(), path)
        unknown = sorted(set(by_image) - {r.image_id for r in recs})
        if unknown:
            log.warning("%s: %d images not in the evaluated split are ignored", path, len(unknown))
        scenes = [(r.boxes2d, by_image.get(r.image_id, [])) for r in recs]
        for iou in args.iou:
            blocks.append((label, recall_curve(scenes, budgets, iou)))
    text = write_curves_csv(blocks)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        _write_manifest(
            out.with_name(out.name + ".manifest.json"),
            "eval",
            args,
            averaging="micro: matched annotations / all annotations, pooled over images",
            images=len(recs),
            annotations=sum(len(r.annotations) for r in recs),
        )
    else:
        sys.stdout.write(text)
    return 0


# --- parser ---------------------------------------------------------------------


def _data_args(p, split_default):
    p.add_argument("--data", required=True, help="dataset root with label_2/, calib/ and detections/")
    p.add_argument("--cls", default="Car", help="object class of interest")
    p.add_argument("--split", choices=("train", "test", "all"), default=split_default)
    p.add_argument("--split-key", choices=("timestamp", "image_id"), default="timestamp")
    p.add_argument("--split-fraction", type=float, default=0.5)
    p.add_argument("--min-objects", type=int, default=2, help="images with fewer objects are left out")


def _strategy_args(p, kinds):
    p.add_argument("--strategy", choices=kinds, required=True)
    p.add_argument("--frame", choices=[f.value for f in Frame], default=Frame.CC.value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxprop", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    subs = parser.add_subparsers(dest="command", required=True)

    def sub(name, func, help_):
        p = subs.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file of option values")
        p.set_defaults(func=func, _subparser=p)
        return p

    p = sub("synth", cmd_synth, "write synthetic lane scenes in KITTI layout")
    p.add_argument("--out", required=True)
    p.add_argument("--num-scenes", type=int, default=100)
    p.add_argument("--lanes", type=int, default=2)
    p.add_argument("--lane-width", type=float, default=3.5)
    p.add_argument("--spacing-mean", type=float, default=8.0)
    p.add_argument("--spacing-sd", type=float, default=0.5)
    p.add_argument("--headings", type=float, nargs="+", default=[-1.5707963267948966, 1.5707963267948966])
    p.add_argument("--occupancy", type=float, default=0.8)
    p.add_argument("--slots", type=int, default=6, help="car slots per lane")
    p.add_argument("--seeds-per-scene", type=int, default=1, help="nearest cars written as detections (-1: all)")
    p.add_argument("--seed", type=int, default=0)

    kinds = [k.value for k in StrategyKind if k is not StrategyKind.SLIDING_WINDOW]
    p = sub("fit", cmd_fit, "fit a relation model on the training split")
    _data_args(p, "train")
    _strategy_args(p, kinds)
    p.add_argument("--models", required=True, help="output directory for model files")
    p.add_argument("--bandwidth", type=float, nargs=3, default=None, metavar=("HX", "HZ", "HT"),
                   help="fixed KDE bandwidth (default: Silverman's rule)")
    p.add_argument("--topics", type=int, default=16)
    p.add_argument("--theta-bins", type=int, default=8)
    p.add_argument("--width", type=float, default=None, help="object width W; cells are W/2 (default: mean width)")
    p.add_argument("--x-half", type=float, default=None, help="half x extent in m (default 30, or 60 for oc)")
    p.add_argument("--z-half", type=float, default=60.0)
    p.add_argument("--alpha", type=float, default=None, help="document-topic prior (default 50/T)")
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    p = sub("sample", cmd_sample, "generate ranked proposals for every image")
    _data_args(p, "test")
    _strategy_args(p, [k.value for k in StrategyKind])
    p.add_argument("--models", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--tau", type=float, default=None, help="detection score threshold (default: keep all)")
    p.add_argument("--nms", type=float, default=0.5, help="seed NMS overlap threshold; 1 disables")
    p.add_argument("--seed-mode", choices=[m.value for m in SeedMode], default=SeedMode.ALL.value)
    p.add_argument("--dedup-iou", type=float, default=0.95)
    p.add_argument("--grid-x", type=float, nargs=2, default=[-20.0, 20.0])
    p.add_argument("--grid-z", type=float, nargs=2, default=[4.0, 60.0])
    p.add_argument("--grid-step", type=float, default=0.5)
    p.add_argument("--orientations", type=int, default=8, help="K; the grid holds K/2 of them")
    p.add_argument("--box-size", type=float, nargs=3, default=None, metavar=("L", "W", "H"),
                   help="grid box size (default: training mean from the model manifest)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    p = sub("eval", cmd_eval, "recall-vs-budget curves as CSV")
    _data_args(p, "test")
    p.add_argument("--proposals", nargs="+", required=True)
    p.add_argument("--budgets", type=int, nargs="+", default=list(DEFAULT_BUDGETS))
    p.add_argument("--iou", type=float, nargs="+", default=[0.5])
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(
            level=logging.WARNING - 10 * min(args.verbose, 2),
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args)
    except (CtxPropError, CliError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
