"""Command-line entry point.

Subcommands compose the library: synth writes synthetic tables, mine builds a
negative label set, score streams records, eval/sweep produce reports, and
analyze summarizes a record file per class. Options may come from a flat
key=value --config file; a flag given on the command line always wins. Every
output embeds the effective configuration. Errors exit nonzero with one
machine-readable JSON line on stderr (2 config, 3 format, 4 dimension).

The CLIPSCOPE_THREADS environment variable caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Callable, NoReturn, Sequence

import numpy as np

from . import formats
from .embeddings import EmbeddingTable
from .errors import ConfigError, EngineError
from .evaluation import (
    OrderKind,
    StreamOrdering,
    SweepPoint,
    ablation_sweep,
    class_likelihood_profile,
    run_stream,
)
from .mining import MinedLabelSet, MiningConfig, Selection, mine
from .scoring import ClassHistogram, ScoreMode, ScorerConfig, score_stream
from .synthetic import SynthSpec, generate, presets

_SELECTIONS = {
    "both": Selection.NEAREST_AND_FARTHEST,
    "nearest": Selection.NEAREST_ONLY,
    "farthest": Selection.FARTHEST_ONLY,
}
_MODES = {mode.value: mode for mode in ScoreMode}
_ORDERS = {order.value: order for order in OrderKind}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        _print_error(ConfigError(message))
        raise SystemExit(2)


def _print_error(exc: Exception) -> None:
    code = getattr(exc, "exit_code", 1)
    line = json.dumps(
        {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
    )
    print(line, file=sys.stderr)


def _bool_from_str(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _csv(conv: Callable[[str], Any]) -> Callable[[str], list]:
    def parse(text: str) -> list:
        return [conv(part.strip()) for part in text.split(",") if part.strip()]

    return parse


class _Options:
    """Merges command-line flags over an optional key=value config file."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.filecfg: dict[str, str] = {}
        if getattr(args, "config", None):
            self.filecfg = formats.parse_config_file(args.config)
        self.effective: dict[str, Any] = {}

    def get(self, key: str, conv: Callable[[str], Any], default: Any = None) -> Any:
        value = getattr(self.args, key, None)
        if value is None and key in self.filecfg:
            try:
                value = conv(self.filecfg[key])
            except ValueError as exc:
                raise ConfigError(f"config key {key}: {exc}") from None
        if value is None:
            value = default
        self.effective[key] = value
        return value

    def require(self, key: str, conv: Callable[[str], Any]) -> Any:
        value = self.get(key, conv)
        if value is None:
            raise ConfigError(f"missing required option --{key.replace('_', '-')}")
        return value

    def echo(self) -> dict[str, Any]:
        """Effective configuration, keys prefixed so they can never collide
        with an artifact's structural meta keys."""
        return {
            f"cfg_{k}": (v if not isinstance(v, (list, tuple)) else ",".join(map(str, v)))
            for k, v in sorted(self.effective.items())
            if v is not None
        }


def _out_dir(opt: _Options) -> Path:
    out = Path(opt.require("out", str))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_table(path: str) -> EmbeddingTable:
    return formats.read_embedding_table(path)


def _mining_config(opt: _Options) -> MiningConfig:
    try:
        return MiningConfig(
            m=opt.get("m", int, 5000),
            eta=opt.get("eta", float, 0.05),
            selection=_SELECTIONS[opt.get("selection", str, "both")],
            exclude_id_overlap=opt.get("exclude_id_overlap", _bool_from_str, False),
        )
    except KeyError as exc:
        raise ConfigError(f"unknown selection {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _scorer_config(opt: _Options) -> ScorerConfig:
    mode_key = opt.get("mode", str, ScoreMode.P1P2_OVER_P0.value)
    if mode_key not in _MODES:
        raise ConfigError(f"unknown score mode {mode_key!r}")
    try:
        return ScorerConfig(
            tau=opt.get("tau", float, 0.01),
            gamma=opt.get("gamma", float, 0.0),
            score_mode=_MODES[mode_key],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _ordering(opt: _Options) -> StreamOrdering:
    order_key = opt.get("order", str, "random")
    if order_key not in _ORDERS:
        raise ConfigError(f"unknown order {order_key!r}")
    try:
        return StreamOrdering(
            kind=_ORDERS[order_key],
            seed=opt.get("seed", int, 0),
            trials=opt.get("trials", int),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _negatives(
    opt: _Options, id_table: EmbeddingTable, mcfg: MiningConfig
) -> MinedLabelSet:
    mined_path = opt.get("mined", str)
    cand_path = opt.get("candidates", str)
    if mined_path is not None:
        if cand_path is None:
            raise ConfigError("--mined needs --candidates to rejoin vectors")
        return formats.load_mined_set(mined_path, _load_table(cand_path))
    if mcfg.m == 0:
        return MinedLabelSet.empty(id_table.dim, mcfg)
    if cand_path is None:
        raise ConfigError("need --candidates (or --mined, or --m 0)")
    return mine(_load_table(cand_path), id_table, mcfg)


def _max_workers() -> int:
    raw = os.environ.get("CLIPSCOPE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"CLIPSCOPE_THREADS must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------------------
# commands


def _cmd_synth(opt: _Options) -> int:
    preset_name = opt.get("preset", str)
    if preset_name is not None:
        catalogue = presets()
        if preset_name not in catalogue:
            raise ConfigError(
                f"unknown preset {preset_name!r}; available: {sorted(catalogue)}"
            )
        base = catalogue[preset_name]
    else:
        base = SynthSpec()
    overrides = {
        "dim": opt.get("dim", int),
        "n_classes": opt.get("n_classes", int),
        "samples_per_class": opt.get("samples_per_class", int),
        "ood_clusters": opt.get("ood_clusters", int),
        "ood_samples": opt.get("ood_samples", int),
        "separation": opt.get("separation", float),
        "lexicon_size": opt.get("lexicon_size", int),
        "seed": opt.get("seed", int),
    }
    imbalance = opt.get("class_imbalance", _csv(float))
    if imbalance is not None:
        overrides["class_imbalance"] = tuple(imbalance)
    from dataclasses import replace

    try:
        spec = replace(base, **{k: v for k, v in overrides.items() if v is not None})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    data = generate(spec)
    out = _out_dir(opt)
    formats.write_embedding_table(out / "id_labels.embt", data.id_table)
    formats.write_embedding_table(out / "candidates.embt", data.candidates)
    formats.write_embedding_table(out / "stream_id.embt", data.id_stream)
    formats.write_embedding_table(out / "stream_ood.embt", data.ood_stream)
    echo = opt.echo()
    for k, v in vars(spec).items():
        if v is None:
            continue
        echo[f"spec_{k}"] = ",".join(map(str, v)) if isinstance(v, tuple) else v
    lines = [f"{k}={v}" for k, v in sorted(echo.items())]
    (out / "synth.config").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out}/: id_labels, candidates, stream_id, stream_ood")
    return 0


def _cmd_mine(opt: _Options) -> int:
    id_table = _load_table(opt.require("id_table", str))
    candidates = _load_table(opt.require("candidates", str))
    mcfg = _mining_config(opt)
    mined = mine(candidates, id_table, mcfg)
    out = _out_dir(opt)
    formats.write_mined_set(out / "mined.tsv", mined, extra_meta=opt.echo())
    print(f"mined {len(mined)} labels -> {out / 'mined.tsv'}")
    return 0


def _cmd_score(opt: _Options) -> int:
    id_table = _load_table(opt.require("id_table", str))
    mcfg = _mining_config(opt)
    neg = _negatives(opt, id_table, mcfg)
    scfg = _scorer_config(opt)

    stream_id = opt.get("stream_id", str)
    stream_ood = opt.get("stream_ood", str)
    if stream_id is None and stream_ood is None:
        raise ConfigError("need --stream-id and/or --stream-ood")
    blocks: list[tuple[EmbeddingTable, str]] = []
    if stream_id is not None:
        blocks.append((_load_table(stream_id), "id"))
    if stream_ood is not None:
        blocks.append((_load_table(stream_ood), "ood"))

    resume = opt.get("histogram", str)
    if resume is not None:
        hist = formats.load_histogram(resume, expected_classes=len(id_table))
    else:
        hist = ClassHistogram(len(id_table))
    start_index = hist.total - hist.n_classes

    labels: list[str] = []
    truths: list[str] = []
    rows = []
    for table, tag in blocks:
        labels.extend(table.labels)
        truths.extend([tag] * len(table))
        rows.append(table.vectors)
    records = score_stream(np.vstack(rows), id_table, neg, hist, scfg)

    out = _out_dir(opt)
    meta = opt.echo()
    meta.update({"classes": len(id_table), "negatives": len(neg)})
    formats.write_records(
        out / "records.tsv", records, labels, truths, meta, start_index=start_index
    )
    formats.write_histogram(out / "histogram.tsv", hist)
    print(f"scored {len(records)} samples -> {out / 'records.tsv'}")
    return 0


def _cmd_eval(opt: _Options) -> int:
    id_table = _load_table(opt.require("id_table", str))
    mcfg = _mining_config(opt)
    neg = _negatives(opt, id_table, mcfg)
    scfg = _scorer_config(opt)
    ordering = _ordering(opt)
    id_stream = _load_table(opt.require("stream_id", str))
    ood_stream = _load_table(opt.require("stream_ood", str))
    report = run_stream(id_stream, ood_stream, id_table, neg, scfg, ordering)
    out = _out_dir(opt)
    formats.write_reports(out / "report.tsv", [report], extra_meta=opt.echo())
    print(
        f"auroc={report.auroc:.6f} fpr95={report.fpr95:.6f} "
        f"({ordering.kind.value}, {ordering.trials} trial(s)) -> {out / 'report.tsv'}"
    )
    return 0


def _cmd_sweep(opt: _Options) -> int:
    id_table = _load_table(opt.require("id_table", str))
    candidates = _load_table(opt.require("candidates", str))
    id_stream = _load_table(opt.require("stream_id", str))
    ood_stream = _load_table(opt.require("stream_ood", str))
    mcfg = _mining_config(opt)
    scfg = _scorer_config(opt)
    ordering = _ordering(opt)

    modes = opt.get("modes", _csv(str))
    m_grid = opt.get("m_grid", _csv(int))
    eta_grid = opt.get("eta_grid", _csv(float))
    sel_grid = opt.get("selection_grid", _csv(str))
    axes: dict[str, list] = {}
    if modes:
        bad = [m for m in modes if m not in _MODES]
        if bad:
            raise ConfigError(f"unknown score mode(s) {bad!r}")
        axes["score_mode"] = [_MODES[m] for m in modes]
    if m_grid:
        axes["m"] = m_grid
    if eta_grid:
        axes["eta"] = eta_grid
    if sel_grid:
        bad = [s for s in sel_grid if s not in _SELECTIONS]
        if bad:
            raise ConfigError(f"unknown selection(s) {bad!r}")
        axes["selection"] = [_SELECTIONS[s] for s in sel_grid]
    if not axes:
        raise ConfigError(
            "sweep needs at least one of --modes, --m-grid, --eta-grid, --selection-grid"
        )

    from itertools import product

    names = sorted(axes)
    grid = [
        SweepPoint(**dict(zip(names, combo)))
        for combo in product(*(axes[name] for name in names))
    ]
    reports = ablation_sweep(
        grid,
        candidates=candidates,
        id_table=id_table,
        id_embeddings=id_stream,
        ood_embeddings=ood_stream,
        mining_config=mcfg,
        scorer_config=scfg,
        ordering=ordering,
        max_workers=_max_workers(),
    )
    out = _out_dir(opt)
    formats.write_reports(out / "sweep.tsv", reports, extra_meta=opt.echo())
    print(f"{len(reports)} grid points -> {out / 'sweep.tsv'}")
    return 0


def _cmd_analyze(opt: _Options) -> int:
    records_path = opt.require("records", str)
    records, _, truths, meta = formats.load_records(records_path)
    if "classes" not in meta:
        raise ConfigError(f"{records_path}: record file lacks a classes meta key")
    n_classes = int(meta["classes"])
    profile = class_likelihood_profile(
        records, [t == "ood" for t in truths], n_classes
    )
    out = _out_dir(opt)
    echo = opt.echo()
    echo["source_records"] = records_path
    formats.write_profile(
        out / "profile.tsv", profile.class_frequency, profile.ood_fraction, echo
    )
    print(f"profile over {n_classes} classes -> {out / 'profile.tsv'}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def _add_common(p: argparse.ArgumentParser, *names: str) -> None:
    table = {
        "config": (("--config",), {"help": "flat key=value config file"}),
        "out": (("--out",), {"help": "output directory"}),
        "id_table": (("--id-table",), {"help": "EMBT file of ID label embeddings"}),
        "candidates": (("--candidates",), {"help": "EMBT file of candidate lexicon"}),
        "mined": (("--mined",), {"help": "previously mined label set (TSV)"}),
        "stream_id": (("--stream-id",), {"help": "EMBT file of ID sample stream"}),
        "stream_ood": (("--stream-ood",), {"help": "EMBT file of OOD sample stream"}),
        "m": (("--m",), {"type": int, "help": "labels per mining side (default 5000)"}),
        "eta": (("--eta",), {"type": float, "help": "percentile parameter (default 0.05)"}),
        "selection": (
            ("--selection",),
            {"choices": sorted(_SELECTIONS), "help": "mining side(s) (default both)"},
        ),
        "exclude_id_overlap": (
            ("--exclude-id-overlap",),
            {"action": "store_const", "const": True, "help": "drop candidates equal to ID labels"},
        ),
        "tau": (("--tau",), {"type": float, "help": "softmax temperature (default 0.01)"}),
        "gamma": (("--gamma",), {"type": float, "help": "decision threshold (default 0)"}),
        "mode": (
            ("--mode",),
            {"choices": sorted(_MODES), "help": "score composition (default p1p2/p0)"},
        ),
        "order": (
            ("--order",),
            {"choices": sorted(_ORDERS), "help": "stream order (default random)"},
        ),
        "seed": (("--seed",), {"type": int, "help": "base seed"}),
        "trials": (("--trials",), {"type": int, "help": "trials (default 5 random, else 1)"}),
        "histogram": (("--histogram",), {"help": "histogram snapshot to resume from"}),
        "records": (("--records",), {"help": "record file to analyze"}),
        "preset": (("--preset",), {"help": "named synthetic preset"}),
        "dim": (("--dim",), {"type": int, "help": "embedding dimension"}),
        "n_classes": (("--n-classes",), {"type": int, "help": "number of ID classes"}),
        "samples_per_class": (("--samples-per-class",), {"type": int}),
        "ood_clusters": (("--ood-clusters",), {"type": int}),
        "ood_samples": (("--ood-samples",), {"type": int}),
        "separation": (("--separation",), {"type": float}),
        "lexicon_size": (("--lexicon-size",), {"type": int}),
        "class_imbalance": (
            ("--class-imbalance",),
            {"type": _csv(float), "help": "comma-separated per-class weights"},
        ),
        "modes": (("--modes",), {"type": _csv(str), "help": "comma-separated score modes"}),
        "m_grid": (("--m-grid",), {"type": _csv(int), "help": "comma-separated m values"}),
        "eta_grid": (("--eta-grid",), {"type": _csv(float), "help": "comma-separated eta values"}),
        "selection_grid": (
            ("--selection-grid",),
            {"type": _csv(str), "help": "comma-separated selections"},
        ),
    }
    for name in names:
        flags, kwargs = table[name]
        p.add_argument(*flags, dest=name, default=None, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clipscope", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic embedding tables")
    _add_common(
        p, "config", "out", "preset", "dim", "n_classes", "samples_per_class",
        "ood_clusters", "ood_samples", "separation", "lexicon_size",
        "class_imbalance", "seed",
    )
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("mine", help="mine a negative label set")
    _add_common(
        p, "config", "out", "id_table", "candidates", "m", "eta", "selection",
        "exclude_id_overlap",
    )
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("score", help="stream score records over sample files")
    _add_common(
        p, "config", "out", "id_table", "candidates", "mined", "stream_id",
        "stream_ood", "m", "eta", "selection", "exclude_id_overlap", "tau",
        "gamma", "mode", "histogram",
    )
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("eval", help="run an ordered evaluation and report metrics")
    _add_common(
        p, "config", "out", "id_table", "candidates", "mined", "stream_id",
        "stream_ood", "m", "eta", "selection", "exclude_id_overlap", "tau",
        "gamma", "mode", "order", "seed", "trials",
    )
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="evaluate a grid of configurations")
    _add_common(
        p, "config", "out", "id_table", "candidates", "stream_id", "stream_ood",
        "m", "eta", "selection", "exclude_id_overlap", "tau", "gamma", "mode",
        "order", "seed", "trials", "modes", "m_grid", "eta_grid", "selection_grid",
    )
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("analyze", help="per-class profile of a record file")
    _add_common(p, "config", "out", "records")
    p.set_defaults(func=_cmd_analyze)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opt = _Options(args)
        return args.func(opt)
    except SystemExit as exc:
        return int(exc.code or 0)
    except EngineError as exc:
        _print_error(exc)
        return exc.exit_code
    except FileNotFoundError as exc:
        _print_error(ConfigError(str(exc)))
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
