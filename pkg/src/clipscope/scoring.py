"""Streaming detector: softmax confidence components, the online class histogram,
and their composition into a single per-sample score.

Per sample the detector computes
  p1 - max softmax probability over the ID labels,
  p2 - softmax mass on ID labels versus the mined negative labels,
  p0 - empirical frequency with which the sample's nearest class has been
       nearest over the stream so far (counts start at one per class),
then scores the sample (by default g = p1 * p2 / p0) and only afterwards
increments the nearest class's count. A sample therefore never penalizes
itself, but repeated appearances of the same input drive its score down.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .embeddings import EmbeddingTable, check_same_dim, scaled_softmax
from .errors import (
    DimensionMismatchError,
    EmptyTableError,
    InvalidCountsError,
    NonPositiveTauError,
)
from .mining import MinedLabelSet

# chunk rows scored per matrix product in score_stream; large enough to
# amortize streaming the negative-label matrix from memory at paper-scale
# sizes (20k rows x 512 dims in float64)
_CHUNK_ROWS = 512


class ScoreMode(Enum):
    """Which components enter the final score."""

    P1 = "p1"
    P1_OVER_P0 = "p1/p0"
    P2 = "p2"
    P2_OVER_P0 = "p2/p0"
    P1P2 = "p1p2"
    P1P2_OVER_P0 = "p1p2/p0"

    def compose(self, p0: float, p1: float, p2: float) -> float:
        if self is ScoreMode.P1:
            return p1
        if self is ScoreMode.P1_OVER_P0:
            return p1 / p0
        if self is ScoreMode.P2:
            return p2
        if self is ScoreMode.P2_OVER_P0:
            return p2 / p0
        if self is ScoreMode.P1P2:
            return p1 * p2
        return p1 * p2 / p0


class Verdict(Enum):
    ID = "id"
    OOD = "ood"


@dataclass(frozen=True)
class ScorerConfig:
    """Temperature, decision threshold, and score composition.

    gamma defaults to 0: scores are strictly positive, so scoring-only runs
    mark everything ID and leave thresholding to the deployment. The
    threshold-free evaluation metrics ignore verdicts entirely.
    """

    tau: float = 0.01
    gamma: float = 0.0
    score_mode: ScoreMode = ScoreMode.P1P2_OVER_P0

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise NonPositiveTauError(f"tau must be > 0, got {self.tau}")
        if not np.isfinite(self.gamma):
            raise ValueError(f"gamma must be finite, got {self.gamma}")


@dataclass(frozen=True)
class ScoreRecord:
    """Everything the detector decided about one sample."""

    i_star: int
    p0: float
    p1: float
    p2: float
    score: float
    verdict: Verdict


class ClassHistogram:
    """Running counts of nearest-class selections, one bin per ID class.

    Bins start at one, so the implied class likelihood is uniform before any
    sample arrives and every likelihood is strictly positive forever.
    Mutation is single-writer: concurrent record() calls on one histogram are
    not supported; independent streams should use independent histograms.
    """

    __slots__ = ("_counts", "_total")

    def __init__(self, n_classes: int):
        if n_classes < 1:
            raise InvalidCountsError(f"need at least one class, got {n_classes}")
        self._counts = np.ones(n_classes, dtype=np.int64)
        self._total = n_classes

    @classmethod
    def restore(
        cls, counts: Sequence[int], expected_classes: int | None = None
    ) -> "ClassHistogram":
        """Rebuild a histogram from persisted counts.

        Rejects counts below one and, when expected_classes is given, any
        length mismatch: a histogram is only meaningful against the ID table
        ordering it was built with.
        """
        arr = np.asarray(list(counts), dtype=np.int64)
        if arr.ndim != 1 or arr.size < 1:
            raise InvalidCountsError("counts must be a non-empty 1-D sequence")
        if expected_classes is not None and arr.size != expected_classes:
            raise InvalidCountsError(
                f"histogram has {arr.size} classes, expected {expected_classes}"
            )
        if np.any(arr < 1):
            raise InvalidCountsError("every class count must be >= 1")
        hist = cls(arr.size)
        hist._counts = arr.copy()
        hist._total = int(arr.sum())
        return hist

    @property
    def n_classes(self) -> int:
        return int(self._counts.size)

    def __len__(self) -> int:
        return self.n_classes

    @property
    def total(self) -> int:
        return self._total

    @property
    def counts(self) -> NDArray[np.int64]:
        view = self._counts.view()
        view.setflags(write=False)
        return view

    def likelihood(self, i_star: int) -> float:
        """Class likelihood of class i_star: counts[i_star] / total."""
        if not 0 <= i_star < self._counts.size:
            raise IndexError(f"class index {i_star} out of range")
        return float(self._counts[i_star]) / self._total

    def record(self, i_star: int) -> None:
        """Count one more nearest-class selection of i_star."""
        if not 0 <= i_star < self._counts.size:
            raise IndexError(f"class index {i_star} out of range")
        self._counts[i_star] += 1
        self._total += 1

    def snapshot(self) -> tuple[int, ...]:
        return tuple(int(c) for c in self._counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClassHistogram):
            return NotImplemented
        return bool(np.array_equal(self._counts, other._counts))

    def __repr__(self) -> str:
        return f"ClassHistogram(n_classes={self.n_classes}, total={self.total})"


def compute_p1(
    h: ArrayLike, id_table: EmbeddingTable, tau: float
) -> tuple[float, int]:
    """Max softmax probability over ID labels, and the argmax class index.

    The softmax is order-preserving for any tau > 0, so the argmax of the
    raw similarities doubles as the argmax of the probabilities; ties break
    to the lowest index.
    """
    if len(id_table) == 0:
        raise EmptyTableError("compute_p1: empty ID table")
    hv = np.asarray(h, dtype=np.float64)
    check_same_dim(hv.shape[-1], id_table.dim)
    sims = np.clip(id_table.vectors @ hv, -1.0, 1.0)
    i_star = int(np.argmax(sims))
    probs = scaled_softmax(sims, tau)
    return float(probs[i_star]), i_star


def compute_p2(
    h: ArrayLike, id_table: EmbeddingTable, neg: MinedLabelSet, tau: float
) -> float:
    """Softmax mass on ID labels against the mined negative labels.

    One stability shift (the max over both logit groups) is shared so the
    ratio is the literal two-sum quotient. An empty negative set gives
    exactly 1.0.
    """
    if len(id_table) == 0:
        raise EmptyTableError("compute_p2: empty ID table")
    if not tau > 0:
        raise NonPositiveTauError(f"tau must be > 0, got {tau}")
    hv = np.asarray(h, dtype=np.float64)
    check_same_dim(hv.shape[-1], id_table.dim)
    if len(neg) == 0:
        return 1.0
    check_same_dim(id_table.dim, neg.dim)
    id_logits = np.clip(id_table.vectors @ hv, -1.0, 1.0) / tau
    neg_logits = np.clip(neg.vectors @ hv, -1.0, 1.0) / tau
    m = max(float(id_logits.max()), float(neg_logits.max()))
    s_id = float(np.exp(id_logits - m).sum())
    s_neg = float(np.exp(neg_logits - m).sum())
    return s_id / (s_id + s_neg)


def score_sample(
    h: ArrayLike,
    id_table: EmbeddingTable,
    neg: MinedLabelSet,
    hist: ClassHistogram,
    cfg: ScorerConfig,
) -> ScoreRecord:
    """Score one sample and update the histogram.

    p0 is taken from the counts as they stand before this sample; the
    increment of the nearest class happens after scoring and unconditionally,
    whatever the verdict.
    """
    if hist.n_classes != len(id_table):
        raise DimensionMismatchError(
            f"histogram has {hist.n_classes} classes, ID table has {len(id_table)}"
        )
    p1, i_star = compute_p1(h, id_table, cfg.tau)
    p2 = compute_p2(h, id_table, neg, cfg.tau)
    p0 = hist.likelihood(i_star)
    score = cfg.score_mode.compose(p0, p1, p2)
    hist.record(i_star)
    verdict = Verdict.ID if score >= cfg.gamma else Verdict.OOD
    return ScoreRecord(i_star=i_star, p0=p0, p1=p1, p2=p2, score=score, verdict=verdict)


def _chunk_sims(
    rows: NDArray[np.float64], mat_t: NDArray[np.float64]
) -> NDArray[np.float64]:
    # BLAS kernel choice depends on operand shapes, and only same-shape
    # products are guaranteed to round identically row by row; pad every
    # chunk to the full chunk height so a resumed run reproduces the
    # unbroken run's records bit for bit
    if rows.shape[0] == _CHUNK_ROWS:
        return np.clip(rows @ mat_t, -1.0, 1.0)
    padded = np.zeros((_CHUNK_ROWS, rows.shape[1]))
    padded[: rows.shape[0]] = rows
    return np.clip(padded @ mat_t, -1.0, 1.0)[: rows.shape[0]]


def score_stream(
    samples: ArrayLike,
    id_table: EmbeddingTable,
    neg: MinedLabelSet,
    hist: ClassHistogram,
    cfg: ScorerConfig,
) -> list[ScoreRecord]:
    """Score a whole stream, in order, mutating hist along the way.

    Equivalent to calling score_sample row by row, but the similarity
    products run in chunks so the per-sample cost is the matrix work
    (N + |neg|) * dim rather than Python overhead. Splitting a stream at any
    point and resuming with the snapshot histogram reproduces the unbroken
    run's records exactly.
    """
    mat = np.asarray(samples, dtype=np.float64)
    if mat.ndim != 2:
        raise DimensionMismatchError(f"samples must be 2-D, got shape {mat.shape}")
    if len(id_table) == 0:
        raise EmptyTableError("score_stream: empty ID table")
    check_same_dim(mat.shape[1], id_table.dim)
    if len(neg):
        check_same_dim(id_table.dim, neg.dim)
    if hist.n_classes != len(id_table):
        raise DimensionMismatchError(
            f"histogram has {hist.n_classes} classes, ID table has {len(id_table)}"
        )

    id_t = id_table.vectors.T
    neg_t = neg.vectors.T if len(neg) else None
    records: list[ScoreRecord] = []

    # chunk boundaries sit on multiples of _CHUNK_ROWS of the histogram's
    # absolute sample count, so a run resumed from a snapshot slices the
    # stream into the same products as the unbroken run after its first
    # (padded) partial chunk
    start_abs = hist.total - hist.n_classes
    pos = 0
    while pos < mat.shape[0]:
        take = min(
            _CHUNK_ROWS - ((start_abs + pos) % _CHUNK_ROWS), mat.shape[0] - pos
        )
        rows = mat[pos : pos + take]
        pos += take
        id_sims = _chunk_sims(rows, id_t)
        # argmax on the raw similarities: scaling cannot reorder them
        # mathematically, but it can collapse float ties
        i_stars = np.argmax(id_sims, axis=1)
        id_logits = id_sims / cfg.tau
        m_id = id_logits.max(axis=1, keepdims=True)
        e_id = np.exp(id_logits - m_id)
        sum_id = e_id.sum(axis=1)
        p1s = e_id[np.arange(rows.shape[0]), i_stars] / sum_id

        if neg_t is None:
            p2s = np.ones(rows.shape[0])
        else:
            neg_logits = _chunk_sims(rows, neg_t) / cfg.tau
            m_all = np.maximum(m_id, neg_logits.max(axis=1, keepdims=True))
            s_id = np.exp(id_logits - m_all).sum(axis=1)
            s_neg = np.exp(neg_logits - m_all).sum(axis=1)
            p2s = s_id / (s_id + s_neg)

        for k in range(rows.shape[0]):
            i_star = int(i_stars[k])
            p0 = hist.likelihood(i_star)
            score = cfg.score_mode.compose(p0, float(p1s[k]), float(p2s[k]))
            hist.record(i_star)
            records.append(
                ScoreRecord(
                    i_star=i_star,
                    p0=p0,
                    p1=float(p1s[k]),
                    p2=float(p2s[k]),
                    score=score,
                    verdict=Verdict.ID if score >= cfg.gamma else Verdict.OOD,
                )
            )
    return records
