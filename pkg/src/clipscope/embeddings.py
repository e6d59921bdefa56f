"""Embedding tables and the similarity / softmax primitives every stage shares.

All arithmetic runs at 64-bit precision. Tables additionally keep their rows
as float32 (the interchange precision), so a table written to disk and read
back is indistinguishable from the original object.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    FormatError,
    NonPositiveTauError,
    ZeroVectorError,
)

_ZERO_NORM_FLOOR = 1e-12
_ASCII_WHITESPACE = " \t\n\r\v\f"
_ASCII_LOWER = str.maketrans(string.ascii_uppercase, string.ascii_lowercase)


def canonical_label(label: str) -> str:
    """Canonical form used for label identity.

    Trims ASCII whitespace from both ends and lowercases ASCII letters only;
    everything else is compared byte for byte.
    """
    return label.strip(_ASCII_WHITESPACE).translate(_ASCII_LOWER)


def normalize(v: ArrayLike) -> NDArray[np.float64]:
    """Return ``v / ||v||_2`` as float64.

    Raises:
        ZeroVectorError: if ``||v||_2 < 1e-12`` (a corrupt embedding row).
    """
    arr = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(arr))
    if n < _ZERO_NORM_FLOOR:
        raise ZeroVectorError(f"cannot normalize vector with L2 norm {n!r}")
    return arr / n


def sim(a: ArrayLike, b: ArrayLike) -> float:
    """Cosine similarity of two unit-norm vectors of equal dimension.

    The dot product is clamped to [-1, 1]: rounding can push identical
    vectors to 1 + eps, which would corrupt downstream percentile logic.
    """
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise DimensionMismatchError(f"sim: shapes {av.shape} and {bv.shape} differ")
    return min(1.0, max(-1.0, float(av @ bv)))


def scaled_softmax(logits: ArrayLike, tau: float) -> NDArray[np.float64]:
    """Softmax of ``logits / tau`` with the max scaled logit subtracted first.

    The shift is mathematically a no-op but keeps exp() in range: at the
    default temperature 0.01, cosine similarities scale to +-100 and the
    naive form overflows 32-bit floats.
    """
    if not tau > 0:
        raise NonPositiveTauError(f"tau must be > 0, got {tau!r}")
    arr = np.asarray(logits, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInputError("scaled_softmax: empty logits")
    if not np.all(np.isfinite(arr)):
        raise ValueError("scaled_softmax: logits must be finite")
    scaled = arr / tau
    e = np.exp(scaled - scaled.max())
    return e / e.sum()


def _as_float32_rows(rows: ArrayLike, dim: int | None) -> NDArray[np.float32]:
    raw = np.ascontiguousarray(np.asarray(rows, dtype=np.float32))
    if raw.ndim == 1 and raw.size == 0:
        if dim is None:
            raise EmptyInputError("an empty table needs an explicit dim")
        raw = raw.reshape(0, dim)
    if raw.ndim != 2:
        raise FormatError(f"embedding rows must be 2-D, got shape {raw.shape}")
    if dim is not None and raw.shape[1] != dim:
        raise DimensionMismatchError(
            f"rows have dim {raw.shape[1]}, expected {dim}"
        )
    if raw.shape[1] < 1:
        raise FormatError("embedding dim must be >= 1")
    return raw


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """A labeled matrix of unit-norm embedding rows.

    ``raw`` holds the rows at the float32 interchange precision, exactly as
    persisted; ``vectors`` is the re-normalized float64 upcast that all math
    runs on. Labels must be unique after :func:`canonical_label`.
    ``provenance`` is a free-text tag (model name, template, generator spec);
    it is advisory and not part of equality.
    """

    labels: tuple[str, ...]
    raw: NDArray[np.float32]
    vectors: NDArray[np.float64]
    provenance: str = ""

    @classmethod
    def from_rows(
        cls,
        labels: Iterable[str],
        rows: ArrayLike,
        *,
        dim: int | None = None,
        provenance: str = "",
    ) -> "EmbeddingTable":
        """Build a table, quantizing rows to float32 and re-normalizing at float64.

        Quantizing at construction (rather than at save time) makes in-memory
        tables and reloaded tables carry identical numbers.
        """
        labels = tuple(str(x) for x in labels)
        raw = _as_float32_rows(rows, dim)
        if len(labels) != raw.shape[0]:
            raise FormatError(
                f"{len(labels)} labels for {raw.shape[0]} embedding rows"
            )
        seen: dict[str, str] = {}
        for lab in labels:
            canon = canonical_label(lab)
            if canon in seen:
                raise FormatError(
                    f"duplicate label after canonicalization: {lab!r} vs {seen[canon]!r}"
                )
            seen[canon] = lab
        v64 = raw.astype(np.float64)
        if raw.shape[0]:
            norms = np.linalg.norm(v64, axis=1)
            bad = np.nonzero(norms < _ZERO_NORM_FLOOR)[0]
            if bad.size:
                raise ZeroVectorError(f"zero embedding row at index {int(bad[0])}")
            v64 /= norms[:, None]
        raw.setflags(write=False)
        v64.setflags(write=False)
        return cls(labels=labels, raw=raw, vectors=v64, provenance=provenance)

    @property
    def dim(self) -> int:
        return int(self.raw.shape[1])

    def __len__(self) -> int:
        return int(self.raw.shape[0])

    def canonical_labels(self) -> tuple[str, ...]:
        return tuple(canonical_label(lab) for lab in self.labels)

    def row(self, i: int) -> NDArray[np.float64]:
        return self.vectors[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        return (
            self.labels == other.labels
            and self.raw.shape == other.raw.shape
            and bool(np.array_equal(self.raw, other.raw))
        )

    def __hash__(self) -> int:  # content hash; provenance excluded, like __eq__
        return hash((self.labels, self.raw.tobytes()))

    def __repr__(self) -> str:
        return (
            f"EmbeddingTable(n={len(self)}, dim={self.dim}, "
            f"provenance={self.provenance!r})"
        )


def check_same_dim(*dims: int) -> int:
    """Assert all given dims agree and return the common value."""
    first = dims[0]
    for d in dims[1:]:
        if d != first:
            raise DimensionMismatchError(f"dimensions disagree: {dims}")
    return first
