import csv
import io
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from mofill import svg
from mofill.cli import main, parse_run_config
from mofill.motion import load_clip, synth_generate
from oracles import joint_error_direct

SVG_NS = "{http://www.w3.org/2000/svg}"
TINY = "2,3,4,4,256"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("gen-data", "--family", "walk", "--count", 4, "--seed", 1, "--out", root / "d") == 0
    assert run("train", "--data", root / "d", "--weights", root / "w.bin", "--epochs", 1,
               "--channels", TINY, "--seed", 3) == 0
    return root


def test_gen_data_writes_count_files_deterministically(tmp_path):
    assert run("gen-data", "--family", "walk", "--count", 8, "--seed", 1, "--out", tmp_path / "a") == 0
    assert run("gen-data", "--family", "walk", "--count", 8, "--seed", 1, "--out", tmp_path / "b") == 0
    a, b = sorted((tmp_path / "a").iterdir()), sorted((tmp_path / "b").iterdir())
    assert len(a) == 8
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]


def test_train_writes_weights_stats_and_log(work, tmp_path):
    assert (work / "w.bin").is_file() and (work / "w.bin.stats").is_file()
    assert run("train", "--data", work / "d", "--weights", tmp_path / "w.bin", "--epochs", 2,
               "--channels", TINY, "--log", tmp_path / "log.csv") == 0
    rows = list(csv.reader(io.StringIO((tmp_path / "log.csv").read_text())))
    assert len(rows) == 3


def test_infill_keeps_frame_count(work, tmp_path):
    out = tmp_path / "r.csv"
    clip = work / "d" / "walk_0000.csv"
    assert run("infill", "--clip", clip, "--gap", "100:60", "--weights", work / "w.bin", "--out", out) == 0
    assert load_clip(out).frames == load_clip(clip).frames


def test_infill_repeatable_gaps_and_keep_known(work, tmp_path):
    out = tmp_path / "r.csv"
    clip = work / "d" / "walk_0001.csv"
    assert run("infill", "--clip", clip, "--gap", "20:10", "--gap", "100:60", "--keep-known",
               "--weights", work / "w.bin", "--out", out) == 0
    a, b = load_clip(out).features, load_clip(clip).features
    np.testing.assert_array_equal(a[:, :20], b[:, :20])
    assert not np.array_equal(a[:, 20:30], b[:, 20:30])


def test_eval_pair_matches_oracle(work, tmp_path):
    pred = tmp_path / "r.csv"
    truth = work / "d" / "walk_0000.csv"
    run("infill", "--clip", truth, "--gap", "100:60", "--weights", work / "w.bin", "--out", pred)
    report = tmp_path / "e.csv"
    assert run("eval", "--pred", pred, "--truth", truth, "--gap", "100:60", "--scope", "gap", "--out", report) == 0
    rows = list(csv.DictReader(io.StringIO(report.read_text())))
    assert len(rows) == 1
    expected = joint_error_direct(load_clip(pred).features, load_clip(truth).features, range(100, 160))
    assert float(rows[0]["mean_cm"]) == pytest.approx(expected, rel=1e-9)
    assert rows[0]["frames"] == "60" and float(rows[0]["std_cm"]) > 0


def test_eval_prints_to_stdout(work, capsys):
    clip = work / "d" / "walk_0000.csv"
    assert run("eval", "--pred", clip, "--truth", clip) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "scope,alignment,mean_cm,std_cm,frames"
    assert float(lines[1].split(",")[2]) == 0


def test_reports_are_byte_identical_on_rerun(work, tmp_path):
    for name in ("a.csv", "b.csv"):
        assert run("eval", "--weights", work / "w.bin", "--data", work / "d", "--sweep", "gaps",
                   "--sizes", "5,20", "--out", tmp_path / name) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    for name in ("a.svg", "b.svg"):
        assert run("export-svg", "--report", tmp_path / "a.csv", "--out", tmp_path / name) == 0
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_denoise_and_recover_run(work, tmp_path):
    clip = work / "d" / "walk_0002.csv"
    w = work / "w.bin"
    assert run("denoise", "--clip", clip, "--weights", w, "--drop", "0.3", "--seed", 1, "--out", tmp_path / "a") == 0
    assert run("denoise", "--clip", clip, "--weights", w, "--drop", "0.3", "--seed", 1, "--out", tmp_path / "b") == 0
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    assert run("recover", "--clip", clip, "--joints", "l_hand,13", "--weights", w, "--out", tmp_path / "c") == 0
    assert load_clip(tmp_path / "c").frames == 240


def test_blend_runs(work, tmp_path):
    d = work / "d"
    assert run("blend", "--clip", d / "walk_0000.csv", "--gap", "90:60", "--source", d / "walk_0001.csv",
               "--joints", "0,l_foot", "--at", "100:20", "--source-start", 100,
               "--weights", work / "w.bin", "--out", tmp_path / "b.csv") == 0


def test_bench_reports_each_length(tmp_path):
    assert run("bench", "--channels", TINY, "--lengths", "32,240", "--runs", 1, "--out", tmp_path / "b.csv") == 0
    rows = list(csv.reader(io.StringIO((tmp_path / "b.csv").read_text())))
    assert [r[0] for r in rows] == ["frames", "32", "240"]


@pytest.mark.parametrize("argv", [
    (),
    ("frobnicate",),
    ("gen-data", "--family", "walk", "--count", "2"),
    ("gen-data", "--family", "skate", "--count", "2", "--out", "x"),
    ("infill", "--clip", "c.csv", "--gap", "100-60", "--weights", "w", "--out", "o"),
    ("denoise", "--clip", "c", "--weights", "w", "--out", "o", "--noise", "1", "--drop", "0.3"),
    ("export-svg", "--out", "o.svg"),
])
def test_usage_errors_exit_1(argv, capsys):
    assert main(list(argv)) == 1


def test_missing_weight_file_exits_2_naming_path(work, tmp_path, capsys):
    missing = tmp_path / "absent.bin"
    assert run("infill", "--clip", work / "d" / "walk_0000.csv", "--gap", "100:60",
               "--weights", missing, "--out", tmp_path / "r.csv") == 2
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / "r.csv").exists()


def test_data_errors_exit_2(work, tmp_path):
    clip = work / "d" / "walk_0000.csv"
    w = work / "w.bin"
    # gap past the end of the clip
    assert run("infill", "--clip", clip, "--gap", "230:20", "--weights", w, "--out", tmp_path / "r") == 2
    # output directory missing
    assert run("infill", "--clip", clip, "--gap", "10:5", "--weights", w, "--out", tmp_path / "no" / "r") == 2
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"junk")
    assert run("infill", "--clip", clip, "--gap", "10:5", "--weights", bad, "--stats", str(w) + ".stats",
               "--out", tmp_path / "r") == 2
    garbled = tmp_path / "g.csv"
    garbled.write_text("not,a,clip\n")
    assert run("eval", "--pred", garbled, "--truth", clip) == 2


def test_run_config_fills_unset_options_and_flags_win(work, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# tiny run\nchannels = {TINY}\nepochs = 3  # overridden below\nseed = 4\n"
                   f"data = {work / 'd'}\n")
    assert run("train", "--config", cfg, "--epochs", 1, "--weights", tmp_path / "w.bin",
               "--log", tmp_path / "log.csv") == 0
    assert len((tmp_path / "log.csv").read_text().splitlines()) == 2


def test_run_config_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs = 3\nlearning_rate = 0.1\n")
    assert run("train", "--config", cfg, "--data", tmp_path, "--weights", tmp_path / "w") == 1
    cfg.write_text("epochs = three\n")
    assert run("train", "--config", cfg, "--data", tmp_path, "--weights", tmp_path / "w") == 1


def test_parse_run_config_types(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("curriculum = false\nlr = 5e-4\nchannels = 8, 16, 32, 64, 256\n\n# done\n")
    assert parse_run_config(cfg) == {"curriculum": False, "lr": 5e-4, "channels": (8, 16, 32, 64, 256)}


# svg -----------------------------------------------------------------------------

def _groups(text):
    root = ET.fromstring(text)
    return root, root.findall(f"{SVG_NS}g")


@pytest.fixture(scope="module")
def clip():
    return synth_generate("wave", 1, seed=2)[0]


def test_strip_without_gaps_is_all_gray(clip):
    root, groups = _groups(svg.skeleton_strip(clip, stride=24))
    assert root.tag == f"{SVG_NS}svg"
    assert len(groups) == 10
    assert {g.get("stroke") for g in groups} == {svg.KNOWN_COLOR}
    assert all(len(g.findall(f"{SVG_NS}line")) == 21 for g in groups)


def test_strip_stride_equal_to_length_draws_one_figure(clip):
    _, groups = _groups(svg.skeleton_strip(clip, stride=clip.frames))
    assert [g.get("data-frame") for g in groups] == ["0"]


def test_strip_highlights_gap_frames(clip):
    _, groups = _groups(svg.skeleton_strip(clip, stride=10, gaps=[(100, 60)]))
    for g in groups:
        t = int(g.get("data-frame"))
        assert g.get("stroke") == (svg.GAP_COLOR if 100 <= t < 160 else svg.KNOWN_COLOR)


def test_strip_rejects_bad_stride(clip):
    with pytest.raises(ValueError):
        svg.skeleton_strip(clip, stride=0)


def test_strip_is_timestamp_free_by_default(clip):
    assert svg.skeleton_strip(clip) == svg.skeleton_strip(clip)
    assert "generated" not in svg.skeleton_strip(clip)
    ET.fromstring(svg.skeleton_strip(clip, stamp="2020-01-01"))


def test_error_curve_parses_and_escapes():
    root = ET.fromstring(svg.error_curve([0, 60, 120], [1.0, 2.5, 4.0], y_label="err <cm>"))
    assert len(root.findall(f"{SVG_NS}circle")) == 3
    assert "err <cm>" in [t.text for t in root.findall(f"{SVG_NS}text")]
    with pytest.raises(ValueError):
        svg.error_curve([1, 2], [1])


def test_export_svg_command(work, tmp_path):
    out = tmp_path / "s.svg"
    assert run("export-svg", "--clip", work / "d" / "walk_0000.csv", "--stride", 240, "--out", out) == 0
    _, groups = _groups(out.read_text())
    assert len(groups) == 1
    assert run("export-svg", "--clip", work / "d" / "walk_0000.csv", "--stride", 0, "--out", out) == 1
    assert run("export-svg", "--clip", work / "d" / "walk_0000.csv", "--out", tmp_path / "nodir" / "s.svg") == 2
