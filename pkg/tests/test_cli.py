import json

import pytest

from clipscope import formats
from clipscope.cli import main


def run(capsys, *argv):
    rc = main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def synth_dir(tmp_path, capsys, preset="separable", extra=()):
    out = tmp_path / "data"
    rc, _, err = run(capsys, "synth", "--preset", preset, "--out", str(out), *extra)
    assert rc == 0, err
    return out


class TestSynthCommand:
    def test_writes_tables_and_config(self, tmp_path, capsys):
        out = synth_dir(tmp_path, capsys)
        for name in ("id_labels", "candidates", "stream_id", "stream_ood"):
            table = formats.read_embedding_table(out / f"{name}.embt")
            assert table.dim == 64
        cfg = formats.parse_config_file(out / "synth.config")
        assert cfg["spec_seed"] == "20240001"
        assert cfg["cfg_preset"] == "separable"

    def test_flag_overrides_preset(self, tmp_path, capsys):
        out = tmp_path / "d"
        rc, _, _ = run(
            capsys, "synth", "--preset", "separable", "--dim", "16",
            "--ood-samples", "12", "--out", str(out),
        )
        assert rc == 0
        assert formats.read_embedding_table(out / "stream_ood.embt").dim == 16
        assert len(formats.read_embedding_table(out / "stream_ood.embt")) == 12

    def test_unknown_preset(self, tmp_path, capsys):
        rc, _, err = run(capsys, "synth", "--preset", "nope", "--out", str(tmp_path / "x"))
        assert rc == 2
        payload = json.loads(err.strip().splitlines()[-1])
        assert payload["exit_code"] == 2


class TestMineCommand:
    def test_mine_writes_set(self, tmp_path, capsys):
        data = synth_dir(tmp_path, capsys)
        out = tmp_path / "mine"
        rc, _, err = run(
            capsys, "mine", "--id-table", str(data / "id_labels.embt"),
            "--candidates", str(data / "candidates.embt"),
            "--m", "30", "--eta", "0.05", "--out", str(out),
        )
        assert rc == 0, err
        cands = formats.read_embedding_table(data / "candidates.embt")
        mined = formats.load_mined_set(out / "mined.tsv", cands)
        assert len(mined) == 60
        assert mined.config.m == 30

    def test_default_m_on_large_lexicon_yields_ten_thousand(self, tmp_path, capsys):
        data = synth_dir(
            tmp_path, capsys,
            extra=("--dim", "16", "--lexicon-size", "20000", "--ood-samples", "8"),
        )
        out = tmp_path / "mine"
        rc, *_ = run(
            capsys, "mine", "--id-table", str(data / "id_labels.embt"),
            "--candidates", str(data / "candidates.embt"), "--out", str(out),
        )
        assert rc == 0
        cands = formats.read_embedding_table(data / "candidates.embt")
        mined = formats.load_mined_set(out / "mined.tsv", cands)
        assert len(mined) == 10_000  # default m = 5000, both sides

    def test_default_m_takes_whole_lexicon(self, tmp_path, capsys):
        data = synth_dir(tmp_path, capsys)
        out = tmp_path / "mine"
        rc, *_ = run(
            capsys, "mine", "--id-table", str(data / "id_labels.embt"),
            "--candidates", str(data / "candidates.embt"), "--out", str(out),
        )
        assert rc == 0
        cands = formats.read_embedding_table(data / "candidates.embt")
        assert len(formats.load_mined_set(out / "mined.tsv", cands)) == len(cands)


class TestScoreCommand:
    def test_score_and_analyze(self, tmp_path, capsys):
        data = synth_dir(tmp_path, capsys)
        out = tmp_path / "score"
        rc, _, err = run(
            capsys, "score", "--id-table", str(data / "id_labels.embt"),
            "--candidates", str(data / "candidates.embt"),
            "--stream-id", str(data / "stream_id.embt"),
            "--stream-ood", str(data / "stream_ood.embt"),
            "--out", str(out),
        )
        assert rc == 0, err
        records, labels, truths, meta = formats.load_records(out / "records.tsv")
        assert len(records) == 400 + 240
        assert truths == ["id"] * 400 + ["ood"] * 240
        hist = formats.load_histogram(out / "histogram.tsv")
        assert hist.total == 8 + 640

        prof_out = tmp_path / "prof"
        rc, *_ = run(
            capsys, "analyze", "--records", str(out / "records.tsv"),
            "--out", str(prof_out),
        )
        assert rc == 0
        freq, frac, _ = formats.load_profile(prof_out / "profile.tsv")
        assert sum(freq) == pytest.approx(1.0, abs=1e-9)
        assert all(0.0 <= f <= 1.0 for f in frac)

    def test_resume_matches_unbroken_run(self, tmp_path, capsys):
        data = synth_dir(tmp_path, capsys)
        full = tmp_path / "full"
        rc, *_ = run(
            capsys, "score", "--id-table", str(data / "id_labels.embt"),
            "--m", "0", "--stream-id", str(data / "stream_id.embt"),
            "--out", str(full),
        )
        assert rc == 0

        # split the id stream into two EMBT files
        stream = formats.read_embedding_table(data / "stream_id.embt")
        from clipscope import EmbeddingTable

        cut = 123
        part1 = EmbeddingTable.from_rows(stream.labels[:cut], stream.raw[:cut], dim=stream.dim)
        part2 = EmbeddingTable.from_rows(stream.labels[cut:], stream.raw[cut:], dim=stream.dim)
        formats.write_embedding_table(tmp_path / "p1.embt", part1)
        formats.write_embedding_table(tmp_path / "p2.embt", part2)

        s1 = tmp_path / "s1"
        rc, *_ = run(
            capsys, "score", "--id-table", str(data / "id_labels.embt"),
            "--m", "0", "--stream-id", str(tmp_path / "p1.embt"), "--out", str(s1),
        )
        assert rc == 0
        s2 = tmp_path / "s2"
        rc, *_ = run(
            capsys, "score", "--id-table", str(data / "id_labels.embt"),
            "--m", "0", "--stream-id", str(tmp_path / "p2.embt"),
            "--histogram", str(s1 / "histogram.tsv"), "--out", str(s2),
        )
        assert rc == 0

        full_recs, full_labels, _, _ = formats.load_records(full / "records.tsv")
        r1, l1, _, _ = formats.load_records(s1 / "records.tsv")
        r2, l2, _, _ = formats.load_records(s2 / "records.tsv")
        assert r1 + r2 == full_recs  # bit-exact record-for-record
        assert l1 + l2 == full_labels
        assert (s1 / "histogram.tsv").read_text() != (s2 / "histogram.tsv").read_text()
        assert (s2 / "histogram.tsv").read_text() == (full / "histogram.tsv").read_text()


class TestEvalCommand:
    def test_separable_perfect(self, tmp_path, capsys):
        data = synth_dir(tmp_path, capsys)
        out = tmp_path / "eval"
        rc, stdout, err = run(
            capsys, "eval", "--id-table", str(data / "id_labels.embt"),
            "--candidates", str(data / "candidates.embt"),
            "--stream-id", str(data / "stream_id.embt"),
            "--stream-ood", str(data / "stream_ood.embt"),
            "--order", "random", "--trials", "2", "--seed", "7", "--out", str(out),
        )
        assert rc == 0, err
        reports = formats.load_reports(out / "report.tsv")
        assert len(reports) == 1
        assert reports[0].auroc == 1.0
        assert reports[0].seeds == (7, 8)

    def test_config_file_flags_win(self, tmp_path, capsys):
        data = synth_dir(tmp_path, capsys)
        cfg = tmp_path / "run.config"
        cfg.write_text("m=5\norder=forward\ntrials=1\n")
        out = tmp_path / "eval"
        rc, *_ = run(
            capsys, "eval", "--config", str(cfg),
            "--id-table", str(data / "id_labels.embt"),
            "--candidates", str(data / "candidates.embt"),
            "--stream-id", str(data / "stream_id.embt"),
            "--stream-ood", str(data / "stream_ood.embt"),
            "--m", "3", "--out", str(out),
        )
        assert rc == 0
        rep = formats.load_reports(out / "report.tsv")[0]
        assert rep.m == 3  # flag beats the config file
        assert rep.order.value == "forward"  # config key applies


class TestSweepCommand:
    def test_mode_grid(self, tmp_path, capsys):
        data = synth_dir(tmp_path, capsys)
        out = tmp_path / "sweep"
        rc, _, err = run(
            capsys, "sweep", "--id-table", str(data / "id_labels.embt"),
            "--candidates", str(data / "candidates.embt"),
            "--stream-id", str(data / "stream_id.embt"),
            "--stream-ood", str(data / "stream_ood.embt"),
            "--modes", "p1,p1p2/p0", "--order", "forward", "--out", str(out),
        )
        assert rc == 0, err
        reports = formats.load_reports(out / "sweep.tsv")
        assert len(reports) == 2
        assert all(r.auroc == 1.0 for r in reports)

    def test_thread_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("CLIPSCOPE_THREADS", "2")
        data = synth_dir(tmp_path, capsys)
        out = tmp_path / "sweep"
        rc, *_ = run(
            capsys, "sweep", "--id-table", str(data / "id_labels.embt"),
            "--candidates", str(data / "candidates.embt"),
            "--stream-id", str(data / "stream_id.embt"),
            "--stream-ood", str(data / "stream_ood.embt"),
            "--eta-grid", "0.05,0.5", "--order", "forward", "--out", str(out),
        )
        assert rc == 0
        assert len(formats.load_reports(out / "sweep.tsv")) == 2

    def test_bad_thread_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("CLIPSCOPE_THREADS", "lots")
        data = synth_dir(tmp_path, capsys)
        rc, _, err = run(
            capsys, "sweep", "--id-table", str(data / "id_labels.embt"),
            "--candidates", str(data / "candidates.embt"),
            "--stream-id", str(data / "stream_id.embt"),
            "--stream-ood", str(data / "stream_ood.embt"),
            "--modes", "p1", "--order", "forward", "--out", str(tmp_path / "x"),
        )
        assert rc == 2


class TestExitCodes:
    def test_missing_file_is_config_error(self, tmp_path, capsys):
        rc, _, err = run(
            capsys, "mine", "--id-table", str(tmp_path / "none.embt"),
            "--candidates", str(tmp_path / "none2.embt"), "--out", str(tmp_path / "o"),
        )
        assert rc == 2
        payload = json.loads(err.strip().splitlines()[-1])
        assert payload["exit_code"] == 2 and "none" in payload["message"]

    def test_bad_magic_is_format_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.embt"
        bad.write_bytes(b"JUNKJUNKJUNKJUNKJUNKJUNK")
        rc, _, err = run(
            capsys, "mine", "--id-table", str(bad), "--candidates", str(bad),
            "--out", str(tmp_path / "o"),
        )
        assert rc == 3
        assert json.loads(err.strip().splitlines()[-1])["error"] == "FormatError"

    def test_dimension_mismatch_exit_code(self, tmp_path, capsys):
        data16 = synth_dir(tmp_path, capsys, extra=("--dim", "16"))
        other = tmp_path / "d2"
        rc, *_ = run(
            capsys, "synth", "--preset", "separable", "--dim", "32",
            "--out", str(other),
        )
        assert rc == 0
        rc, _, err = run(
            capsys, "mine", "--id-table", str(data16 / "id_labels.embt"),
            "--candidates", str(other / "candidates.embt"), "--out", str(tmp_path / "o"),
        )
        assert rc == 4
        assert json.loads(err.strip().splitlines()[-1])["exit_code"] == 4

    def test_unknown_flag(self, capsys):
        rc, _, err = run(capsys, "eval", "--bogus-flag", "1")
        assert rc == 2

    def test_missing_required_option(self, tmp_path, capsys):
        rc, _, err = run(capsys, "mine", "--out", str(tmp_path / "o"))
        assert rc == 2
        assert "id-table" in json.loads(err.strip().splitlines()[-1])["message"]
