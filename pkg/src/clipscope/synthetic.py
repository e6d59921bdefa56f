"""Deterministic synthetic embedding data on the unit hypersphere.

Stands in for real label/image embedding extractions at desk scale: clustered
unit vectors give the detector ID label anchors, a candidate lexicon with
both near-ID and far-from-ID entries, and ID/OOD sample streams whose overlap
is controlled by a single concentration knob.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from .embeddings import EmbeddingTable
from .errors import InvalidSpecError


@dataclass(frozen=True)
class SynthSpec:
    """Everything the generator needs; generation is a pure function of this.

    separation controls cluster concentration: samples are drawn as
    normalize(anchor + g / separation) with g standard normal, so larger
    values give tighter, more separable clusters. separation == 0 degenerates
    to uniform points on the sphere.

    ood_proximity pulls OOD anchors toward ID anchors: 0 places them
    uniformly on the sphere; w > 0 mixes each uniform draw with a round-robin
    ID anchor as normalize((1 - w) * u + w * anchor), which concentrates
    where OOD samples land and makes them genuinely confusable.
    """

    dim: int = 64
    n_classes: int = 8
    samples_per_class: int = 50
    ood_clusters: int = 4
    ood_samples: int = 200
    class_imbalance: tuple[float, ...] | None = None
    separation: float = 6.0
    ood_proximity: float = 0.0
    lexicon_size: int = 400
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise InvalidSpecError(f"dim must be >= 1, got {self.dim}")
        if self.n_classes < 1:
            raise InvalidSpecError(f"n_classes must be >= 1, got {self.n_classes}")
        for name in ("samples_per_class", "ood_clusters", "ood_samples", "lexicon_size"):
            if getattr(self, name) < 0:
                raise InvalidSpecError(f"{name} must be >= 0")
        if not (math.isfinite(self.separation) and self.separation >= 0):
            raise InvalidSpecError(f"separation must be finite and >= 0, got {self.separation}")
        if not (0.0 <= self.ood_proximity < 1.0):
            raise InvalidSpecError(
                f"ood_proximity must be in [0, 1), got {self.ood_proximity}"
            )
        if self.ood_samples > 0 and self.ood_clusters == 0:
            raise InvalidSpecError("ood_samples > 0 requires ood_clusters >= 1")
        if self.class_imbalance is not None:
            w = tuple(float(x) for x in self.class_imbalance)
            if len(w) != self.n_classes:
                raise InvalidSpecError(
                    f"class_imbalance needs {self.n_classes} weights, got {len(w)}"
                )
            if any(not (math.isfinite(x) and x > 0) for x in w):
                raise InvalidSpecError("class_imbalance weights must be positive")
            object.__setattr__(self, "class_imbalance", w)


@dataclass(frozen=True)
class SynthData:
    id_table: EmbeddingTable
    candidates: EmbeddingTable
    id_stream: EmbeddingTable
    ood_stream: EmbeddingTable


def _unit_rows(rng: np.random.Generator, k: int, dim: int) -> NDArray[np.float64]:
    g = rng.standard_normal((k, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _around(
    rng: np.random.Generator,
    anchors: NDArray[np.float64],
    which: NDArray[np.intp],
    noise_scale: float | None,
) -> NDArray[np.float64]:
    # noise_scale None means separation == 0: pure noise, uniform on the sphere
    g = rng.standard_normal((which.size, anchors.shape[1]))
    pts = g if noise_scale is None else anchors[which] + g * noise_scale
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _apportion(total: int, weights: tuple[float, ...]) -> list[int]:
    """Split total into len(weights) integer counts, largest remainder first."""
    s = sum(weights)
    quotas = [total * w / s for w in weights]
    counts = [int(q) for q in quotas]
    short = total - sum(counts)
    by_remainder = sorted(
        range(len(weights)), key=lambda i: (-(quotas[i] - counts[i]), i)
    )
    for i in by_remainder[:short]:
        counts[i] += 1
    return counts


def generate(spec: SynthSpec) -> SynthData:
    """Generate all four tables from the spec; same spec, same bytes.

    Draw order is fixed: class anchors, OOD anchors, ID stream, OOD stream,
    then the lexicon (one quarter near ID anchors at triple spread, one
    quarter near OOD anchors, the rest uniform), so every output is a pure
    function of the spec.
    """
    rng = np.random.default_rng(spec.seed)
    dim, n = spec.dim, spec.n_classes
    noise = (1.0 / spec.separation) if spec.separation > 0 else None

    class_anchors = _unit_rows(rng, n, dim)
    if spec.ood_clusters:
        ood_anchors = _unit_rows(rng, spec.ood_clusters, dim)
        if spec.ood_proximity > 0.0:
            parents = class_anchors[np.arange(spec.ood_clusters) % n]
            mixed = (1.0 - spec.ood_proximity) * ood_anchors + spec.ood_proximity * parents
            ood_anchors = mixed / np.linalg.norm(mixed, axis=1, keepdims=True)
    else:
        ood_anchors = np.empty((0, dim))

    weights = spec.class_imbalance or tuple(1.0 for _ in range(n))
    id_counts = _apportion(spec.samples_per_class * n, weights)
    id_classes = np.repeat(np.arange(n), id_counts)
    id_rows = _around(rng, class_anchors, id_classes, noise)

    ood_classes = np.arange(spec.ood_samples) % max(spec.ood_clusters, 1)
    ood_rows = (
        _around(rng, ood_anchors, ood_classes, noise)
        if spec.ood_samples
        else np.empty((0, dim))
    )

    # near-ID entries are looser than the ID samples (so they do not crowd the
    # true labels); near-OOD entries are tighter (so every OOD sample has a
    # mined negative closer than any ID label)
    quarter = spec.lexicon_size // 4
    near_id = np.arange(quarter) % n
    lex_parts = [_around(rng, class_anchors, near_id, None if noise is None else noise * 3.0)]
    n_near_ood = quarter if spec.ood_clusters else 0
    if n_near_ood:
        lex_parts.append(
            _around(
                rng,
                ood_anchors,
                np.arange(n_near_ood) % spec.ood_clusters,
                None if noise is None else noise * 0.5,
            )
        )
    n_uniform = spec.lexicon_size - quarter - n_near_ood
    if n_uniform:
        lex_parts.append(_unit_rows(rng, n_uniform, dim))
    lex_rows = (
        np.vstack(lex_parts) if spec.lexicon_size else np.empty((0, dim))
    )

    tag = f"synth(seed={spec.seed},dim={dim},n_classes={n},separation={spec.separation})"
    return SynthData(
        id_table=EmbeddingTable.from_rows(
            [f"class-{i:04d}" for i in range(n)], class_anchors, dim=dim,
            provenance=f"{tag} id-labels",
        ),
        candidates=EmbeddingTable.from_rows(
            [f"word-{i:06d}" for i in range(spec.lexicon_size)], lex_rows, dim=dim,
            provenance=f"{tag} lexicon",
        ),
        id_stream=EmbeddingTable.from_rows(
            [f"id-{i:06d}" for i in range(id_rows.shape[0])], id_rows, dim=dim,
            provenance=f"{tag} id-stream",
        ),
        ood_stream=EmbeddingTable.from_rows(
            [f"ood-{i:06d}" for i in range(ood_rows.shape[0])], ood_rows, dim=dim,
            provenance=f"{tag} ood-stream",
        ),
    )


def presets() -> dict[str, SynthSpec]:
    """Named, fixed data specs used throughout the tests and scripts.

    separable: tight clusters, every score mode separates perfectly.
    hard: loose clusters with genuine ID/OOD overlap; detection quality sits
        strictly between chance and perfect and depends on the score mode and
        arrival order.
    imbalanced: hard-style clusters with a 10:1 class weight spread.
    """
    base = SynthSpec()
    return {
        "separable": replace(
            base,
            n_classes=8,
            samples_per_class=50,
            ood_clusters=4,
            ood_samples=240,
            separation=12.0,
            lexicon_size=480,
            seed=2024_0001,
        ),
        "hard": replace(
            base,
            n_classes=10,
            samples_per_class=40,
            ood_clusters=3,
            ood_samples=320,
            separation=4.0,
            ood_proximity=0.65,
            lexicon_size=600,
            seed=2024_0002,
        ),
        "imbalanced": replace(
            base,
            n_classes=10,
            samples_per_class=40,
            ood_clusters=3,
            ood_samples=320,
            separation=4.0,
            ood_proximity=0.65,
            lexicon_size=600,
            class_imbalance=tuple(float(x) for x in np.linspace(10.0, 1.0, 10)),
            seed=2024_0003,
        ),
    }
