"""Evaluation harness: threshold-free metrics, stream orderings, multi-trial
runs, parameter sweeps, and per-class likelihood profiles.

Metrics treat higher scores as more in-distribution and ignore verdicts and
the decision threshold entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .embeddings import EmbeddingTable
from .errors import EmptyInputError
from .mining import MinedLabelSet, MiningConfig, Selection, mine
from .scoring import (
    ClassHistogram,
    ScoreMode,
    ScoreRecord,
    ScorerConfig,
    score_stream,
)

# Shuffles are pinned to this exact generator + algorithm pair so a report's
# random orderings can be reproduced from the seed alone, by any
# implementation.
SHUFFLE_ALGORITHM = "splitmix64/fisher-yates/v1"

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """The splitmix64 64-bit generator; tiny, fast, and exactly specified."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound), bias-free via rejection."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        limit = _MASK64 - ((_MASK64 + 1) % bound)
        while True:
            u = self.next_u64()
            if u <= limit:
                return u % bound


def fisher_yates_permutation(n: int, seed: int) -> NDArray[np.intp]:
    """Deterministic permutation of range(n) from a 64-bit seed."""
    rng = SplitMix64(seed)
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def _check_scores(name: str, scores: ArrayLike) -> NDArray[np.float64]:
    arr = np.asarray(scores, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyInputError(f"{name}: empty score set")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: scores must be finite")
    return arr


def _average_ranks(x: NDArray[np.float64]) -> NDArray[np.float64]:
    order = np.argsort(x, kind="stable")
    sx = x[order]
    boundaries = np.nonzero(np.diff(sx))[0] + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [x.size]))
    group_mean_rank = (starts + ends + 1) / 2.0  # mean of ranks start+1 .. end
    group_of_sorted = np.zeros(x.size, dtype=np.intp)
    group_of_sorted[boundaries] = 1
    np.cumsum(group_of_sorted, out=group_of_sorted)
    ranks = np.empty(x.size, dtype=np.float64)
    ranks[order] = group_mean_rank[group_of_sorted]
    return ranks


def auroc(id_scores: ArrayLike, ood_scores: ArrayLike) -> float:
    """Probability a random (ID, OOD) score pair is correctly ordered.

    Ties count half, so this is the rank-sum statistic normalized by the
    number of pairs and equals the O(n*m) pairwise count exactly.
    """
    ids = _check_scores("auroc id_scores", id_scores)
    oods = _check_scores("auroc ood_scores", ood_scores)
    ranks = _average_ranks(np.concatenate([ids, oods]))
    n = ids.size
    u = ranks[:n].sum() - n * (n + 1) / 2.0
    return float(u / (n * oods.size))


def tpr_threshold(id_scores: ArrayLike, tpr_target: float = 0.95) -> float:
    """Largest observed ID score that keeps at least tpr_target of ID at or above it."""
    ids = _check_scores("tpr_threshold id_scores", id_scores)
    if not 0.0 < tpr_target <= 1.0:
        raise ValueError(f"tpr_target must be in (0, 1], got {tpr_target}")
    s = np.sort(ids)
    n = s.size
    at_or_above = n - np.searchsorted(s, s, side="left")
    ok = at_or_above / n >= tpr_target  # the minimum always qualifies
    return float(s[ok].max())


def fpr_at_tpr(
    id_scores: ArrayLike, ood_scores: ArrayLike, tpr_target: float = 0.95
) -> float:
    """Fraction of OOD scores admitted by the threshold that retains tpr_target of ID."""
    oods = _check_scores("fpr_at_tpr ood_scores", ood_scores)
    gamma = tpr_threshold(id_scores, tpr_target)
    return float(np.count_nonzero(oods >= gamma) / oods.size)


class OrderKind(Enum):
    FORWARD = "forward"  # all ID samples, then all OOD samples
    REVERSE = "reverse"  # all OOD samples, then all ID samples
    RANDOM = "random"  # seeded uniform shuffle of the concatenation


@dataclass(frozen=True)
class StreamOrdering:
    """Arrival order of the mixed stream plus trial bookkeeping.

    Random orderings default to five trials (trial t shuffles with
    seed + t); forward and reverse are deterministic and always run one.
    """

    kind: OrderKind
    seed: int = 0
    trials: int | None = None

    def __post_init__(self) -> None:
        if self.kind is OrderKind.RANDOM:
            trials = 5 if self.trials is None else self.trials
        else:
            trials = 1 if self.trials is None else self.trials
            if trials != 1:
                raise ValueError(f"{self.kind.value} ordering runs exactly one trial")
        if trials < 1:
            raise ValueError(f"trials must be >= 1, got {trials}")
        object.__setattr__(self, "trials", trials)


@dataclass(frozen=True)
class TrialResult:
    seed: int
    auroc: float
    fpr95: float


@dataclass(frozen=True)
class EvalReport:
    """Mean metrics plus per-trial values and the configuration that produced them."""

    auroc: float
    fpr95: float
    per_trial: tuple[TrialResult, ...]
    score_mode: ScoreMode
    order: OrderKind
    base_seed: int
    m: int
    eta: float
    selection: Selection
    tau: float
    gamma: float
    n_id: int
    n_ood: int
    shuffle_algorithm: str = SHUFFLE_ALGORITHM

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(t.seed for t in self.per_trial)


def _stream_matrix(stream: "EmbeddingTable | ArrayLike") -> NDArray[np.float64]:
    if isinstance(stream, EmbeddingTable):
        return stream.vectors
    arr = np.asarray(stream, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"stream must be a 2-D matrix, got shape {arr.shape}")
    return arr


def order_indices(n_id: int, n_ood: int, kind: OrderKind, seed: int) -> NDArray[np.intp]:
    """Positions 0..n_id-1 are ID, n_id..n_id+n_ood-1 are OOD; returns arrival order."""
    base = np.arange(n_id + n_ood)
    if kind is OrderKind.FORWARD:
        return base
    if kind is OrderKind.REVERSE:
        return np.concatenate([base[n_id:], base[:n_id]])
    return base[fisher_yates_permutation(n_id + n_ood, seed)]


def score_ordered_stream(
    id_embeddings: "EmbeddingTable | ArrayLike",
    ood_embeddings: "EmbeddingTable | ArrayLike",
    id_table: EmbeddingTable,
    neg: MinedLabelSet,
    cfg: ScorerConfig,
    kind: OrderKind,
    seed: int = 0,
) -> tuple[list[ScoreRecord], NDArray[np.bool_]]:
    """Run one pass over the ordered mixed stream with a fresh histogram.

    Returns the records in arrival order and a parallel mask that is True
    where the sample was truly ID.
    """
    id_m = _stream_matrix(id_embeddings)
    ood_m = _stream_matrix(ood_embeddings)
    order = order_indices(id_m.shape[0], ood_m.shape[0], kind, seed)
    stacked = np.vstack([id_m, ood_m])[order]
    truth = (order < id_m.shape[0])
    hist = ClassHistogram(len(id_table))
    records = score_stream(stacked, id_table, neg, hist, cfg)
    return records, truth


def run_stream(
    id_embeddings: "EmbeddingTable | ArrayLike",
    ood_embeddings: "EmbeddingTable | ArrayLike",
    id_table: EmbeddingTable,
    neg: MinedLabelSet,
    cfg: ScorerConfig,
    ordering: StreamOrdering,
) -> EvalReport:
    """Evaluate the detector over one or more trials of the ordered stream.

    Every trial starts from a fresh all-ones histogram; trial t perturbs the
    base seed to seed + t. Reported auroc/fpr95 are arithmetic means over
    trials (forward/reverse run exactly one).
    """
    trials: list[TrialResult] = []
    for t in range(ordering.trials or 1):
        seed_t = ordering.seed + t
        records, truth = score_ordered_stream(
            id_embeddings, ood_embeddings, id_table, neg, cfg, ordering.kind, seed_t
        )
        scores = np.array([r.score for r in records], dtype=np.float64)
        trials.append(
            TrialResult(
                seed=seed_t,
                auroc=auroc(scores[truth], scores[~truth]),
                fpr95=fpr_at_tpr(scores[truth], scores[~truth]),
            )
        )
    return EvalReport(
        auroc=float(np.mean([t.auroc for t in trials])),
        fpr95=float(np.mean([t.fpr95 for t in trials])),
        per_trial=tuple(trials),
        score_mode=cfg.score_mode,
        order=ordering.kind,
        base_seed=ordering.seed,
        m=neg.config.m,
        eta=neg.config.eta,
        selection=neg.config.selection,
        tau=cfg.tau,
        gamma=cfg.gamma,
        n_id=_stream_matrix(id_embeddings).shape[0],
        n_ood=_stream_matrix(ood_embeddings).shape[0],
    )


@dataclass(frozen=True)
class SweepPoint:
    """One grid point; None fields inherit the base configuration."""

    score_mode: ScoreMode | None = None
    m: int | None = None
    eta: float | None = None
    selection: Selection | None = None


def ablation_sweep(
    grid: Sequence[SweepPoint],
    *,
    candidates: EmbeddingTable,
    id_table: EmbeddingTable,
    id_embeddings: "EmbeddingTable | ArrayLike",
    ood_embeddings: "EmbeddingTable | ArrayLike",
    mining_config: MiningConfig,
    scorer_config: ScorerConfig,
    ordering: StreamOrdering,
    max_workers: int = 1,
) -> list[EvalReport]:
    """One EvalReport per grid point, in grid order.

    Mining reruns whenever a point changes (m, eta, selection); identical
    mining configurations share one deterministic result. Grid points are
    independent (each trial owns its histogram), so they may run on a small
    thread pool; results are ordered by grid index either way.
    """
    if len(grid) == 0:
        raise EmptyInputError("ablation_sweep: empty grid")

    jobs: list[tuple[MinedLabelSet, ScorerConfig]] = []
    mined_cache: dict[MiningConfig, MinedLabelSet] = {}
    for point in grid:
        mc = replace(
            mining_config,
            **{
                k: v
                for k, v in (
                    ("m", point.m),
                    ("eta", point.eta),
                    ("selection", point.selection),
                )
                if v is not None
            },
        )
        if mc not in mined_cache:
            mined_cache[mc] = (
                MinedLabelSet.empty(candidates.dim, mc)
                if mc.m == 0
                else mine(candidates, id_table, mc)
            )
        sc = (
            scorer_config
            if point.score_mode is None
            else replace(scorer_config, score_mode=point.score_mode)
        )
        jobs.append((mined_cache[mc], sc))

    def _run(job: tuple[MinedLabelSet, ScorerConfig]) -> EvalReport:
        neg, sc = job
        return run_stream(id_embeddings, ood_embeddings, id_table, neg, sc, ordering)

    if max_workers > 1 and len(jobs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(_run, jobs))
    return [_run(job) for job in jobs]


@dataclass(frozen=True)
class ClassLikelihoodProfile:
    """Empirical nearest-class behavior of a scored stream.

    class_frequency[i] is the fraction of all samples whose nearest class was
    i (sums to 1); ood_fraction[i] is, among samples that landed on class i,
    the fraction that were truly OOD (0 for classes never hit).
    """

    class_frequency: NDArray[np.float64]
    ood_fraction: NDArray[np.float64]


def class_likelihood_profile(
    records: Sequence[ScoreRecord],
    is_ood: Sequence[bool] | NDArray[np.bool_],
    n_classes: int,
) -> ClassLikelihoodProfile:
    """Per-class landing frequency and conditional OOD fraction of a record set."""
    if len(records) == 0:
        raise EmptyInputError("class_likelihood_profile: no records")
    ood_mask = np.asarray(is_ood, dtype=bool).ravel()
    if ood_mask.size != len(records):
        raise ValueError(
            f"{len(records)} records but {ood_mask.size} ground-truth tags"
        )
    i_stars = np.array([r.i_star for r in records], dtype=np.intp)
    if i_stars.min() < 0 or i_stars.max() >= n_classes:
        raise IndexError("record class index out of range for n_classes")
    counts = np.bincount(i_stars, minlength=n_classes).astype(np.float64)
    ood_counts = np.bincount(
        i_stars[ood_mask], minlength=n_classes
    ).astype(np.float64)
    freq = counts / len(records)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(counts > 0, ood_counts / np.maximum(counts, 1.0), 0.0)
    return ClassLikelihoodProfile(class_frequency=freq, ood_fraction=frac)
