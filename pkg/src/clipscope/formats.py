"""Persistence formats.

Embedding tables use the binary EMBT v1 layout; everything else (mined sets,
histogram snapshots, score records, evaluation reports, run configs) is
line-oriented UTF-8 with a versioned first line and tab-separated fields.
Reals are written with 17 significant digits so every float64 survives a
round trip; label fields are backslash-escaped so tabs and newlines cannot
break framing. All writers go through a temp file plus rename.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingTable, canonical_label
from .errors import ConfigError, FormatError
from .evaluation import EvalReport, OrderKind, TrialResult
from .mining import MinedLabelSet, MiningConfig, Selection, Side
from .scoring import ClassHistogram, ScoreMode, ScoreRecord, Verdict

EMBT_MAGIC = b"EMBT"
EMBT_VERSION = 1

_HEADER = struct.Struct("<4sIIQ")  # magic, version, dim, count
_U32 = struct.Struct("<I")


def _atomic_write(path: "str | Path", data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _require_file(path: "str | Path") -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"file not found: {p}")
    return p


# ---------------------------------------------------------------------------
# EMBT v1: binary embedding tables


def write_embedding_table(path: "str | Path", table: EmbeddingTable) -> None:
    parts = [_HEADER.pack(EMBT_MAGIC, EMBT_VERSION, table.dim, len(table))]
    for label in table.labels:
        raw = label.encode("utf-8")
        parts.append(_U32.pack(len(raw)))
        parts.append(raw)
    parts.append(np.ascontiguousarray(table.raw, dtype="<f4").tobytes())
    _atomic_write(path, b"".join(parts))


def read_embedding_table(path: "str | Path", provenance: str | None = None) -> EmbeddingTable:
    data = _require_file(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != EMBT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {EMBT_MAGIC!r}")
    if version != EMBT_VERSION:
        raise FormatError(f"{path}: format version {version}, expected {EMBT_VERSION}")
    if dim < 1:
        raise FormatError(f"{path}: dim must be >= 1, got {dim}")
    off = _HEADER.size
    labels = []
    for _ in range(count):
        if off + 4 > len(data):
            raise FormatError(f"{path}: truncated label block")
        (ln,) = _U32.unpack_from(data, off)
        off += 4
        if off + ln > len(data):
            raise FormatError(f"{path}: truncated label block")
        try:
            labels.append(data[off : off + ln].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: label is not valid UTF-8: {exc}") from None
        off += ln
    want = count * dim * 4
    if len(data) - off != want:
        raise FormatError(
            f"{path}: expected {want} bytes of vector data, found {len(data) - off}"
        )
    raw = np.frombuffer(data, dtype="<f4", count=count * dim, offset=off)
    return EmbeddingTable.from_rows(
        labels,
        raw.reshape(count, dim),
        dim=dim,
        provenance=provenance if provenance is not None else str(path),
    )


# ---------------------------------------------------------------------------
# line-oriented artifacts


def fmt_real(x: float) -> str:
    return format(float(x), ".17g")


def _escape(s: str) -> str:
    return (
        s.replace("\\", "\\\\")
        .replace("\t", "\\t")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


def _unescape(s: str) -> str:
    out: list[str] = []
    it = iter(range(len(s)))
    i = 0
    while i < len(s):
        c = s[i]
        if c == "\\" and i + 1 < len(s):
            nxt = s[i + 1]
            out.append({"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}.get(nxt, nxt))
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


class _LineWriter:
    def __init__(self, name: str, version: int = 1):
        self.lines = [f"{name}\t{version}"]

    def meta(self, key: str, value: object) -> None:
        self.lines.append(f"meta\t{key}\t{_escape(str(value))}")

    def row(self, *fields: object) -> None:
        self.lines.append("\t".join(str(f) for f in fields))

    def dump(self, path: "str | Path") -> None:
        _atomic_write(path, ("\n".join(self.lines) + "\n").encode("utf-8"))


class _LineReader:
    def __init__(self, path: "str | Path", name: str, version: int = 1):
        self.path = Path(path)
        text = _require_file(path).read_text(encoding="utf-8")
        self.lines = text.splitlines()
        if not self.lines:
            raise FormatError(f"{path}: empty file")
        head = self.lines[0].split("\t")
        if len(head) != 2 or head[0] != name:
            raise FormatError(f"{path}: expected a {name} file, got {self.lines[0]!r}")
        if head[1] != str(version):
            raise FormatError(f"{path}: format version {head[1]}, expected {version}")
        self.meta: dict[str, str] = {}
        self.rows: list[list[str]] = []
        for ln in self.lines[1:]:
            if not ln:
                continue
            parts = ln.split("\t")
            if parts[0] == "meta":
                if len(parts) != 3:
                    raise FormatError(f"{path}: malformed meta line {ln!r}")
                self.meta[parts[1]] = _unescape(parts[2])
            else:
                self.rows.append(parts)

    def need_meta(self, key: str) -> str:
        if key not in self.meta:
            raise FormatError(f"{self.path}: missing meta key {key!r}")
        return self.meta[key]


def _parse_real(reader: _LineReader, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"{reader.path}: bad real {text!r}") from None


def _parse_int(reader: _LineReader, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise FormatError(f"{reader.path}: bad integer {text!r}") from None


# -- mined label sets -------------------------------------------------------


def write_mined_set(
    path: "str | Path", mined: MinedLabelSet, extra_meta: Mapping[str, object] | None = None
) -> None:
    """Persist labels, sides, and distances; vectors rejoin from the candidate table."""
    w = _LineWriter("MINED")
    w.meta("m", mined.config.m)
    w.meta("eta", fmt_real(mined.config.eta))
    w.meta("selection", mined.config.selection.value)
    w.meta("exclude_id_overlap", str(mined.config.exclude_id_overlap).lower())
    w.meta("dim", mined.dim)
    w.meta("count", len(mined))
    for key, value in (extra_meta or {}).items():
        w.meta(key, value)
    for label, side, dist in zip(mined.labels, mined.sides, mined.distances):
        w.row(_escape(label), side.value, fmt_real(dist))
    w.dump(path)


def load_mined_set(path: "str | Path", candidates: EmbeddingTable) -> MinedLabelSet:
    r = _LineReader(path, "MINED")
    cfg = MiningConfig(
        m=_parse_int(r, r.need_meta("m")),
        eta=_parse_real(r, r.need_meta("eta")),
        selection=Selection(r.need_meta("selection")),
        exclude_id_overlap=r.need_meta("exclude_id_overlap") == "true",
    )
    dim = _parse_int(r, r.need_meta("dim"))
    if dim != candidates.dim:
        raise FormatError(
            f"{path}: mined set has dim {dim}, candidate table has {candidates.dim}"
        )
    count = _parse_int(r, r.need_meta("count"))
    if count != len(r.rows):
        raise FormatError(f"{path}: meta count {count} != {len(r.rows)} rows")
    index = {canonical_label(lab): i for i, lab in enumerate(candidates.labels)}
    labels: list[str] = []
    sides: list[Side] = []
    dists: list[float] = []
    rows_idx: list[int] = []
    for parts in r.rows:
        if len(parts) != 3:
            raise FormatError(f"{path}: malformed row {parts!r}")
        label = _unescape(parts[0])
        canon = canonical_label(label)
        if canon not in index:
            raise FormatError(f"{path}: label {label!r} not in the candidate table")
        labels.append(label)
        sides.append(Side(parts[1]))
        dists.append(_parse_real(r, parts[2]))
        rows_idx.append(index[canon])
    if not rows_idx:
        return MinedLabelSet.empty(dim, cfg)
    return MinedLabelSet(
        labels=tuple(labels),
        vectors=candidates.vectors[rows_idx].copy(),
        distances=np.array(dists, dtype=np.float64),
        sides=tuple(sides),
        config=cfg,
        dim=dim,
    )


# -- histogram snapshots ----------------------------------------------------


def write_histogram(path: "str | Path", hist: ClassHistogram) -> None:
    w = _LineWriter("HIST")
    w.meta("classes", hist.n_classes)
    w.meta("total", hist.total)
    for i, c in enumerate(hist.snapshot()):
        w.row(i, c)
    w.dump(path)


def load_histogram(
    path: "str | Path", expected_classes: int | None = None
) -> ClassHistogram:
    r = _LineReader(path, "HIST")
    n = _parse_int(r, r.need_meta("classes"))
    if len(r.rows) != n:
        raise FormatError(f"{path}: {len(r.rows)} rows for {n} classes")
    counts = [0] * n
    for parts in r.rows:
        if len(parts) != 2:
            raise FormatError(f"{path}: malformed row {parts!r}")
        i = _parse_int(r, parts[0])
        if not 0 <= i < n:
            raise FormatError(f"{path}: class index {i} out of range")
        counts[i] = _parse_int(r, parts[1])
    hist = ClassHistogram.restore(counts, expected_classes)
    if hist.total != _parse_int(r, r.need_meta("total")):
        raise FormatError(f"{path}: total does not match the counts")
    return hist


# -- score records ----------------------------------------------------------

_RECORD_COLUMNS = ("seq", "label", "truth", "i_star", "p0", "p1", "p2", "score", "verdict")


def write_records(
    path: "str | Path",
    records: Sequence[ScoreRecord],
    labels: Sequence[str],
    truths: Sequence[str],
    meta: Mapping[str, object],
    start_index: int = 0,
) -> None:
    if not (len(records) == len(labels) == len(truths)):
        raise ValueError("records, labels, and truths must have equal length")
    w = _LineWriter("RECS")
    w.meta("count", len(records))
    w.meta("start_index", start_index)
    for key, value in meta.items():
        w.meta(key, value)
    w.row("columns", *_RECORD_COLUMNS)
    for k, (rec, label, truth) in enumerate(zip(records, labels, truths)):
        w.row(
            start_index + k,
            _escape(label),
            truth,
            rec.i_star,
            fmt_real(rec.p0),
            fmt_real(rec.p1),
            fmt_real(rec.p2),
            fmt_real(rec.score),
            rec.verdict.value,
        )
    w.dump(path)


def load_records(
    path: "str | Path",
) -> tuple[list[ScoreRecord], list[str], list[str], dict[str, str]]:
    """Returns (records, sample labels, truth tags, meta)."""
    r = _LineReader(path, "RECS")
    rows = list(r.rows)
    if not rows or rows[0][0] != "columns":
        raise FormatError(f"{path}: missing columns row")
    if tuple(rows[0][1:]) != _RECORD_COLUMNS:
        raise FormatError(f"{path}: unexpected columns {rows[0][1:]!r}")
    records: list[ScoreRecord] = []
    labels: list[str] = []
    truths: list[str] = []
    for parts in rows[1:]:
        if len(parts) != len(_RECORD_COLUMNS):
            raise FormatError(f"{path}: malformed record row {parts!r}")
        labels.append(_unescape(parts[1]))
        if parts[2] not in ("id", "ood"):
            raise FormatError(f"{path}: bad truth tag {parts[2]!r}")
        truths.append(parts[2])
        records.append(
            ScoreRecord(
                i_star=_parse_int(r, parts[3]),
                p0=_parse_real(r, parts[4]),
                p1=_parse_real(r, parts[5]),
                p2=_parse_real(r, parts[6]),
                score=_parse_real(r, parts[7]),
                verdict=Verdict(parts[8]),
            )
        )
    if len(records) != _parse_int(r, r.need_meta("count")):
        raise FormatError(f"{path}: meta count does not match the rows")
    return records, labels, truths, r.meta


# -- evaluation reports -----------------------------------------------------


def write_reports(
    path: "str | Path",
    reports: Sequence[EvalReport],
    extra_meta: Mapping[str, object] | None = None,
) -> None:
    w = _LineWriter("REPT")
    w.meta("reports", len(reports))
    for key, value in (extra_meta or {}).items():
        w.meta(key, value)
    for k, rep in enumerate(reports):
        w.row("report", k)
        w.row("cfg", "score_mode", rep.score_mode.value)
        w.row("cfg", "order", rep.order.value)
        w.row("cfg", "base_seed", rep.base_seed)
        w.row("cfg", "m", rep.m)
        w.row("cfg", "eta", fmt_real(rep.eta))
        w.row("cfg", "selection", rep.selection.value)
        w.row("cfg", "tau", fmt_real(rep.tau))
        w.row("cfg", "gamma", fmt_real(rep.gamma))
        w.row("cfg", "n_id", rep.n_id)
        w.row("cfg", "n_ood", rep.n_ood)
        w.row("cfg", "shuffle", rep.shuffle_algorithm)
        for t, trial in enumerate(rep.per_trial):
            w.row("trial", t, trial.seed, fmt_real(trial.auroc), fmt_real(trial.fpr95))
        w.row("mean", fmt_real(rep.auroc), fmt_real(rep.fpr95))
    w.dump(path)


def load_reports(path: "str | Path") -> list[EvalReport]:
    r = _LineReader(path, "REPT")
    reports: list[EvalReport] = []
    cfg: dict[str, str] = {}
    trials: list[TrialResult] = []
    mean: tuple[float, float] | None = None

    def flush() -> None:
        nonlocal cfg, trials, mean
        if not cfg and not trials:
            return
        if mean is None:
            raise FormatError(f"{path}: report block without a mean row")
        reports.append(
            EvalReport(
                auroc=mean[0],
                fpr95=mean[1],
                per_trial=tuple(trials),
                score_mode=ScoreMode(cfg["score_mode"]),
                order=OrderKind(cfg["order"]),
                base_seed=int(cfg["base_seed"]),
                m=int(cfg["m"]),
                eta=float(cfg["eta"]),
                selection=Selection(cfg["selection"]),
                tau=float(cfg["tau"]),
                gamma=float(cfg["gamma"]),
                n_id=int(cfg["n_id"]),
                n_ood=int(cfg["n_ood"]),
                shuffle_algorithm=cfg["shuffle"],
            )
        )
        cfg, trials, mean = {}, [], None

    for parts in r.rows:
        kind = parts[0]
        try:
            if kind == "report":
                flush()
            elif kind == "cfg":
                cfg[parts[1]] = parts[2]
            elif kind == "trial":
                trials.append(
                    TrialResult(
                        seed=_parse_int(r, parts[2]),
                        auroc=_parse_real(r, parts[3]),
                        fpr95=_parse_real(r, parts[4]),
                    )
                )
            elif kind == "mean":
                mean = (_parse_real(r, parts[1]), _parse_real(r, parts[2]))
            else:
                raise FormatError(f"{path}: unknown row kind {kind!r}")
        except (KeyError, IndexError):
            raise FormatError(f"{path}: malformed row {parts!r}") from None
    flush()
    if len(reports) != _parse_int(r, r.need_meta("reports")):
        raise FormatError(f"{path}: meta report count does not match the blocks")
    return reports


# -- class likelihood profiles ----------------------------------------------


def write_profile(
    path: "str | Path",
    class_frequency: Iterable[float],
    ood_fraction: Iterable[float],
    meta: Mapping[str, object],
) -> None:
    freq = list(class_frequency)
    frac = list(ood_fraction)
    w = _LineWriter("PROF")
    w.meta("classes", len(freq))
    for key, value in meta.items():
        w.meta(key, value)
    w.row("columns", "class", "frequency", "ood_fraction")
    for i, (f, o) in enumerate(zip(freq, frac)):
        w.row(i, fmt_real(f), fmt_real(o))
    w.dump(path)


def load_profile(path: "str | Path") -> tuple[list[float], list[float], dict[str, str]]:
    r = _LineReader(path, "PROF")
    rows = [p for p in r.rows if p[0] != "columns"]
    n = _parse_int(r, r.need_meta("classes"))
    if len(rows) != n:
        raise FormatError(f"{path}: {len(rows)} rows for {n} classes")
    freq = [_parse_real(r, p[1]) for p in rows]
    frac = [_parse_real(r, p[2]) for p in rows]
    return freq, frac, r.meta


# -- flat key=value run configs ---------------------------------------------


def parse_config_file(path: "str | Path") -> dict[str, str]:
    """Flat key=value lines; blank lines and # comments ignored; last key wins."""
    out: dict[str, str] = {}
    for ln in _require_file(path).read_text(encoding="utf-8").splitlines():
        stripped = ln.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}: expected key=value, got {ln!r}")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out
