"""Higher-order relations as LDA topics over quantized relation words.

Each object in a training scene becomes a document whose words are the
quantized relations it is the source of. Topics are fitted with a collapsed
Gibbs sampler; proposals are later generated by walking each topic's words
in decreasing probability.

Word ids are row-major with the angle fastest, then x, then z::

    word = (iz * n_x + ix) * theta_bins + itheta
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .errors import EmptyCorpus, ModelFormatError, OutOfExtent, TooFewObjects
from .geometry import wrap_angles
from .relations import PairwiseRelation, PoseMode, RelationConfig, angle_period, scene_relations

FORMAT_TAG = "ctxprop-lda"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Vocabulary:
    cell_x: float
    cell_z: float
    theta_bins: int = 8
    x_extent: tuple = (-30.0, 30.0)
    z_extent: tuple = (-60.0, 60.0)
    pose_mode: PoseMode = PoseMode.FULL

    def __post_init__(self):
        object.__setattr__(self, "x_extent", tuple(float(v) for v in self.x_extent))
        object.__setattr__(self, "z_extent", tuple(float(v) for v in self.z_extent))
        object.__setattr__(self, "pose_mode", PoseMode(self.pose_mode))
        if not (self.cell_x > 0 and self.cell_z > 0):
            raise ValueError("cell sizes must be positive")
        if self.theta_bins < 1:
            raise ValueError("theta_bins must be >= 1")
        for name, ext, cell in (("x", self.x_extent, self.cell_x), ("z", self.z_extent, self.cell_z)):
            n = (ext[1] - ext[0]) / cell
            if n < 0.5 or abs(n - round(n)) > 1e-6 * max(1.0, n):
                raise ValueError(f"{name}_extent {ext} is not a positive multiple of cell size {cell}")

    @classmethod
    def centered(cls, width, x_half=30.0, z_half=60.0, theta_bins=8, pose_mode=PoseMode.FULL):
        """Vocabulary with cells of ``width / 2`` and a cell centred on offset zero.

        Extents are grown to the nearest odd number of cells covering
        ``[-x_half, x_half]`` and ``[-z_half, z_half]``.
        """
        cell = width / 2.0
        nx = 2 * math.ceil(x_half / cell - 0.5) + 1
        nz = 2 * math.ceil(z_half / cell - 0.5) + 1
        return cls(
            cell,
            cell,
            theta_bins,
            (-nx * cell / 2.0, nx * cell / 2.0),
            (-nz * cell / 2.0, nz * cell / 2.0),
            pose_mode,
        )

    @property
    def n_x(self) -> int:
        return int(round((self.x_extent[1] - self.x_extent[0]) / self.cell_x))

    @property
    def n_z(self) -> int:
        return int(round((self.z_extent[1] - self.z_extent[0]) / self.cell_z))

    @property
    def size(self) -> int:
        return self.n_x * self.n_z * self.theta_bins

    @property
    def theta_width(self) -> float:
        return angle_period(self.pose_mode) / self.theta_bins

    def quantize_many(self, rel) -> np.ndarray:
        """Word ids for an (n, 3) relation array, -1 where out of extent.

        Angle bins are centred on multiples of the bin width, so relative
        poses of 0 and pi sit in the middle of a bin.
        """
        rel = np.asarray(rel, dtype=float).reshape(-1, 3)
        ix = np.floor((rel[:, 0] - self.x_extent[0]) / self.cell_x)
        iz = np.floor((rel[:, 1] - self.z_extent[0]) / self.cell_z)
        it = np.mod(np.rint(rel[:, 2] / self.theta_width), self.theta_bins)
        ok = (ix >= 0) & (ix < self.n_x) & (iz >= 0) & (iz < self.n_z)
        ids = (iz * self.n_x + ix) * self.theta_bins + it
        return np.where(ok, ids, -1).astype(np.int64)

    def dequantize_many(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        it = ids % self.theta_bins
        cell = ids // self.theta_bins
        ix = cell % self.n_x
        iz = cell // self.n_x
        x = self.x_extent[0] + (ix + 0.5) * self.cell_x
        z = self.z_extent[0] + (iz + 0.5) * self.cell_z
        t = it * self.theta_width
        if self.pose_mode is PoseMode.FULL:
            t = wrap_angles(t)
        return np.stack([x, z, t], axis=-1)


def quantize(r: PairwiseRelation, v: Vocabulary) -> int:
    w = int(v.quantize_many(r.as_tuple())[0])
    if w < 0:
        raise OutOfExtent(f"relation {r.as_tuple()} lies outside {v.x_extent} x {v.z_extent}")
    return w


def dequantize(w: int, v: Vocabulary) -> PairwiseRelation:
    if not 0 <= w < v.size:
        raise ValueError(f"word id {w} outside [0, {v.size})")
    return PairwiseRelation(*(float(c) for c in v.dequantize_many(w)))


@dataclass(frozen=True)
class Document:
    source_object: tuple  # (scene index, object index)
    words: tuple

    def __post_init__(self):
        if not self.words:
            raise ValueError("a document needs at least one word")


def build_corpus(scenes, cfg: RelationConfig, v: Vocabulary) -> list:
    """One document per object, holding the words it is the source of."""
    docs = []
    for si, objects in enumerate(scenes):
        try:
            rels = scene_relations(objects, cfg)
        except TooFewObjects:
            continue
        src = np.array([i for i, _ in rels])
        ids = v.quantize_many([r.as_tuple() for _, r in rels])
        for oi in range(len(objects)):
            words = ids[(src == oi) & (ids >= 0)]
            if words.size:
                docs.append(Document((si, oi), tuple(int(w) for w in words)))
    if not docs:
        raise EmptyCorpus("no document survived quantization")
    return docs


# --- model --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LdaModel:
    phi: np.ndarray
    alpha_prior: float
    beta_prior: float
    vocab: Vocabulary | None = None
    meta: dict = field(default_factory=dict)
    loglik: tuple = ()
    # topic-word counts behind phi when it came from a fit; lets files stay sparse
    counts: np.ndarray | None = None

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float, ndmin=2)
        if phi.shape[0] < 1 or phi.shape[1] < 1:
            raise ValueError("phi must be at least 1x1")
        if (phi < 0).any() or np.abs(phi.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("phi rows must be probability distributions")
        if self.vocab is not None and self.vocab.size != phi.shape[1]:
            raise ValueError(f"phi has {phi.shape[1]} columns but the vocabulary has {self.vocab.size} words")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def num_topics(self) -> int:
        return self.phi.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.phi.shape[1]

    @cached_property
    def rankings(self) -> np.ndarray:
        """Per topic, word ids by decreasing probability (ties: smaller id)."""
        return np.argsort(-self.phi, axis=1, kind="stable")


def phi_from_counts(n_tw: np.ndarray, beta: float) -> np.ndarray:
    """Smoothed topic-word distributions ``(n_tw + beta) / (n_t + V beta)``."""
    V = n_tw.shape[1]
    return (n_tw + beta) / (n_tw.sum(axis=1)[:, None] + V * beta)


class GibbsState:
    """Token-topic assignments and count tables of a collapsed Gibbs chain."""

    def __init__(self, corpus, vocab_size, num_topics, alpha, beta, rng, backend=None):
        if not corpus:
            raise EmptyCorpus("empty corpus")
        self.V = int(vocab_size)
        self.T = int(num_topics)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.rng = rng
        self.kernels = _kernels if backend is None else _kernels.get_backend(backend)
        self.words = np.concatenate([np.asarray(d.words, dtype=np.int64) for d in corpus])
        self.docs = np.concatenate([np.full(len(d.words), i, dtype=np.int64) for i, d in enumerate(corpus)])
        if self.words.min() < 0 or self.words.max() >= self.V:
            raise ValueError("corpus contains word ids outside the vocabulary")
        self.z = rng.integers(0, self.T, size=self.words.size).astype(np.int64)
        self.n_dt = np.zeros((len(corpus), self.T), dtype=np.int64)
        self.n_tw = np.zeros((self.T, self.V), dtype=np.int64)
        np.add.at(self.n_dt, (self.docs, self.z), 1)
        np.add.at(self.n_tw, (self.z, self.words), 1)
        self.n_t = self.n_tw.sum(axis=1)

    @property
    def num_tokens(self) -> int:
        return self.words.size

    def sweep(self, n=1):
        # uniforms are drawn in blocks of whole sweeps; the stream is the same
        # whatever the block size
        block = max(1, 2_000_000 // self.num_tokens)
        vbeta = self.V * self.beta
        done = 0
        while done < n:
            k = min(block, n - done)
            u = self.rng.random((k, self.num_tokens))
            self.kernels.gibbs_sweeps(
                self.words, self.docs, self.z, self.n_dt, self.n_tw, self.n_t, self.alpha, self.beta, vbeta, u
            )
            done += k

    def phi(self) -> np.ndarray:
        return phi_from_counts(self.n_tw, self.beta)

    def log_likelihood(self) -> float:
        """Collapsed joint log p(words, assignments)."""
        V, T, a, b = self.V, self.T, self.alpha, self.beta
        topic_part = T * (gammaln(V * b) - V * gammaln(b)) + gammaln(self.n_tw + b).sum() - gammaln(self.n_t + V * b).sum()
        n_d = self.n_dt.sum(axis=1)
        D = self.n_dt.shape[0]
        doc_part = D * (gammaln(T * a) - T * gammaln(a)) + gammaln(self.n_dt + a).sum() - gammaln(n_d + T * a).sum()
        return float(topic_part + doc_part)


def fit_lda(
    corpus,
    vocab,
    num_topics=16,
    alpha=None,
    beta=0.01,
    iterations=1000,
    rng_seed=0,
    track_loglik=False,
    backend=None,
) -> LdaModel:
    """Fit LDA by collapsed Gibbs sampling; phi is read from the final state.

    ``vocab`` is a :class:`Vocabulary` or a plain vocabulary size. ``alpha``
    defaults to ``50 / num_topics``.
    """
    if not corpus:
        raise EmptyCorpus("empty corpus")
    if num_topics < 1 or iterations < 1 or beta <= 0:
        raise ValueError("need num_topics >= 1, iterations >= 1, beta > 0")
    alpha = 50.0 / num_topics if alpha is None else alpha
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    V = vocab.size if isinstance(vocab, Vocabulary) else int(vocab)
    state = GibbsState(corpus, V, num_topics, alpha, beta, np.random.default_rng(rng_seed), backend)
    trace = []
    if track_loglik:
        for _ in range(iterations):
            state.sweep(1)
            trace.append(state.log_likelihood())
    else:
        state.sweep(iterations)
    meta = {
        "iterations": iterations,
        "rng_seed": rng_seed,
        "num_documents": len(corpus),
        "num_tokens": state.num_tokens,
    }
    return LdaModel(
        state.phi(),
        alpha,
        beta,
        vocab if isinstance(vocab, Vocabulary) else None,
        meta,
        tuple(trace),
        state.n_tw.copy(),
    )


def sample_words(m: LdaModel, topic: int, rng_seed: int, n: int) -> np.ndarray:
    if not 0 <= topic < m.num_topics:
        raise IndexError(f"topic {topic} outside [0, {m.num_topics})")
    rng = np.random.default_rng(rng_seed)
    cdf = np.cumsum(m.phi[topic])
    idx = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    return np.minimum(idx, m.vocab_size - 1)


def sample_word(m: LdaModel, topic: int, rng_seed: int) -> int:
    return int(sample_words(m, topic, rng_seed, 1)[0])


def topic_top_words(m: LdaModel, topic: int, k: int) -> list:
    if not 0 <= topic < m.num_topics:
        raise IndexError(f"topic {topic} outside [0, {m.num_topics})")
    if not 0 <= k <= m.vocab_size:
        raise ValueError(f"k must be in [0, {m.vocab_size}]")
    order = m.rankings[topic, :k]
    return [(int(w), float(m.phi[topic, w])) for w in order]


# --- serialisation ------------------------------------------------------------


def dumps_lda(m: LdaModel) -> str:
    """Text form; fitted models store sparse ``word:count`` rows, others dense phi."""
    lines = [f"{FORMAT_TAG} {FORMAT_VERSION}"]
    v = m.vocab
    if v is None:
        lines.append(f"vocab none {m.vocab_size}")
    else:
        lines.append(
            "vocab "
            + " ".join(
                [repr(v.cell_x), repr(v.cell_z), str(v.theta_bins)]
                + [repr(e) for e in v.x_extent + v.z_extent]
                + [v.pose_mode.value]
            )
        )
    lines.append(f"topics {m.num_topics} {m.vocab_size}")
    lines.append(f"alpha {m.alpha_prior!r}")
    lines.append(f"beta {m.beta_prior!r}")
    if m.counts is not None:
        lines.append("encoding counts")
        for row in m.counts:
            nz = np.flatnonzero(row)
            lines.append(" ".join(f"{w}:{row[w]}" for w in nz))
    else:
        lines.append("encoding phi")
        for row in m.phi:
            lines.append(" ".join(format(float(p), ".17g") for p in row))
    return "\n".join(lines) + "\n"


def _sparse_row(line: str, V: int) -> np.ndarray:
    row = np.zeros(V, dtype=np.int64)
    for tok in line.split():
        w, c = tok.split(":")
        row[int(w)] = int(c)
    return row


def loads_lda(text: str) -> LdaModel:
    lines = text.splitlines()
    counts = None
    try:
        tag, version = lines[0].split()
        if tag != FORMAT_TAG or int(version) != FORMAT_VERSION:
            raise ModelFormatError(f"not a {FORMAT_TAG} v{FORMAT_VERSION} file")
        vparts = lines[1].split()
        if vparts[0] != "vocab":
            raise ModelFormatError("missing vocab block")
        if vparts[1] == "none":
            vocab = None
        else:
            cx, cz, tb, x0, x1, z0, z1, mode = vparts[1:]
            vocab = Vocabulary(float(cx), float(cz), int(tb), (float(x0), float(x1)), (float(z0), float(z1)), PoseMode(mode))
        _, T, V = lines[2].split()
        T, V = int(T), int(V)
        alpha = float(lines[3].split()[1])
        beta = float(lines[4].split()[1])
        key, encoding = lines[5].split()
        rows = lines[6 : 6 + T]
        if key != "encoding" or encoding not in ("counts", "phi") or len(rows) != T:
            raise ModelFormatError("missing or truncated topic block")
        if encoding == "counts":
            counts = np.array([_sparse_row(ln, V) for ln in rows]).reshape(T, V)
            if (counts < 0).any():
                raise ModelFormatError("negative topic-word count")
            phi = phi_from_counts(counts, beta)
        else:
            phi = np.array([np.array(ln.split(), dtype=float) for ln in rows])
    except (IndexError, ValueError) as exc:
        raise ModelFormatError(f"malformed LDA model: {exc}") from exc
    if phi.shape != (T, V):
        raise ModelFormatError(f"expected {T}x{V} probabilities, got {phi.shape}")
    if (phi <= 0).any() or np.abs(phi.sum(axis=1) - 1.0).max() > 1e-9:
        raise ModelFormatError("topic rows are not strictly positive distributions")
    return LdaModel(phi, alpha, beta, vocab, counts=counts)
