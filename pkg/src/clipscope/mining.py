"""Negative-label mining: percentile distance to the ID label space, top-K per side."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .embeddings import EmbeddingTable, check_same_dim
from .errors import (
    EmptyTableError,
    NotEnoughCandidatesError,
)


class Selection(Enum):
    """Which side(s) of the distance ranking contribute negative labels."""

    NEAREST_AND_FARTHEST = "nearest_and_farthest"
    NEAREST_ONLY = "nearest_only"
    FARTHEST_ONLY = "farthest_only"


class Side(Enum):
    NEAREST = "nearest"
    FARTHEST = "farthest"


@dataclass(frozen=True)
class MiningConfig:
    """Parameters of a mining run.

    m: labels selected per side (0 is legal and yields an empty set).
    eta: percentile parameter in [0, 1]; 0 picks the minimum distance,
        1 the maximum.
    exclude_id_overlap: drop candidates whose canonical label equals an ID
        label before ranking. Off by default: the scorer tolerates overlap.
    """

    m: int = 5000
    eta: float = 0.05
    selection: Selection = Selection.NEAREST_AND_FARTHEST
    exclude_id_overlap: bool = False

    def __post_init__(self) -> None:
        if self.m < 0:
            raise ValueError(f"m must be >= 0, got {self.m}")
        if not (0.0 <= self.eta <= 1.0):
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")


@dataclass(frozen=True, eq=False)
class MinedLabelSet:
    """The selected negative labels with their embeddings and ranked distances."""

    labels: tuple[str, ...]
    vectors: NDArray[np.float64]
    distances: NDArray[np.float64]
    sides: tuple[Side, ...]
    config: MiningConfig
    dim: int

    @classmethod
    def empty(cls, dim: int, config: MiningConfig | None = None) -> "MinedLabelSet":
        return cls(
            labels=(),
            vectors=np.empty((0, dim), dtype=np.float64),
            distances=np.empty(0, dtype=np.float64),
            sides=(),
            config=config if config is not None else MiningConfig(m=0),
            dim=dim,
        )

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MinedLabelSet):
            return NotImplemented
        return (
            self.labels == other.labels
            and self.sides == other.sides
            and self.dim == other.dim
            and self.config == other.config
            and bool(np.array_equal(self.distances, other.distances))
            and bool(np.array_equal(self.vectors, other.vectors))
        )

    def __repr__(self) -> str:
        return f"MinedLabelSet(n={len(self)}, dim={self.dim}, config={self.config})"


def nearest_rank_index(eta: float, n: int) -> int:
    """Index into an ascending sort for the 100*eta-th percentile, nearest-rank style.

    rank = ceil(eta * n), clamped to [1, n]; the small epsilon keeps binary
    float products like 0.07 * 100 == 7.000000000000001 on the decimal rank
    they denote.
    """
    if n < 1:
        raise EmptyTableError("percentile over an empty collection")
    rank = math.ceil(eta * n - 1e-9)
    return min(max(rank - 1, 0), n - 1)


def percentile_distance(
    candidate: ArrayLike, id_table: EmbeddingTable, eta: float
) -> float:
    """Distance from one candidate embedding to the whole ID label space.

    Defined as the 100*eta-th percentile (nearest rank) of the negated cosine
    similarities between the candidate and every ID label embedding.
    """
    if not (0.0 <= eta <= 1.0):
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    if len(id_table) == 0:
        raise EmptyTableError("percentile_distance: empty ID table")
    cand = np.asarray(candidate, dtype=np.float64)
    check_same_dim(cand.shape[-1], id_table.dim)
    neg_sims = -np.clip(id_table.vectors @ cand, -1.0, 1.0)
    neg_sims.sort()
    return float(neg_sims[nearest_rank_index(eta, len(id_table))])


def mine(
    candidates: EmbeddingTable, id_table: EmbeddingTable, cfg: MiningConfig
) -> MinedLabelSet:
    """Select the m farthest and/or m nearest candidates by percentile distance.

    Ties on distance break by ascending canonical-label byte order, so the
    result is invariant to any permutation of the candidate table. When both
    sides are requested and the pool is smaller than 2m, a candidate selected
    by both sides is kept once and tagged farthest. The output lists the
    farthest block first, each block in its ranking order.
    """
    if len(candidates) == 0:
        raise EmptyTableError("mine: empty candidate table")
    if len(id_table) == 0:
        raise EmptyTableError("mine: empty ID table")
    dim = check_same_dim(candidates.dim, id_table.dim)

    pool = np.arange(len(candidates))
    canon = candidates.canonical_labels()
    if cfg.exclude_id_overlap:
        id_canon = frozenset(id_table.canonical_labels())
        pool = np.array(
            [i for i in pool if canon[i] not in id_canon], dtype=np.intp
        )

    single_side = cfg.selection is not Selection.NEAREST_AND_FARTHEST
    if single_side and len(pool) < cfg.m:
        raise NotEnoughCandidatesError(
            f"{cfg.selection.value} needs {cfg.m} candidates, pool has {len(pool)}"
        )
    if cfg.m == 0 or len(pool) == 0:
        return MinedLabelSet.empty(dim, cfg)

    # one percentile_distance call per candidate: embarrassingly parallel in
    # principle, but kept sequential so selected distances are exactly the
    # values that function reports
    d = [percentile_distance(candidates.vectors[i], id_table, cfg.eta) for i in pool]
    keys = [canon[i].encode("utf-8") for i in pool]

    order_far = sorted(range(len(pool)), key=lambda j: (-d[j], keys[j]))
    order_near = sorted(range(len(pool)), key=lambda j: (d[j], keys[j]))

    chosen: list[tuple[int, Side]] = []
    if cfg.selection in (Selection.FARTHEST_ONLY, Selection.NEAREST_AND_FARTHEST):
        chosen.extend((j, Side.FARTHEST) for j in order_far[: cfg.m])
    if cfg.selection in (Selection.NEAREST_ONLY, Selection.NEAREST_AND_FARTHEST):
        taken = {j for j, _ in chosen}
        chosen.extend(
            (j, Side.NEAREST) for j in order_near[: cfg.m] if j not in taken
        )

    idx = [pool[j] for j, _ in chosen]
    return MinedLabelSet(
        labels=tuple(candidates.labels[i] for i in idx),
        vectors=candidates.vectors[idx].copy(),
        distances=np.array([d[j] for j, _ in chosen], dtype=np.float64),
        sides=tuple(side for _, side in chosen),
        config=cfg,
        dim=dim,
    )
