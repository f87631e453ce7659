import logging
from pathlib import Path

import pytest

import splatstyle
from splatstyle.cli import run_cli
from splatstyle.io import load_png, load_ply

FIXTURE = Path(splatstyle.__file__).parent / "data" / "fixture"
BASE = ["--config", str(FIXTURE / "config.ini")]
SCENE = ["--scene", str(FIXTURE / "scene.ply"), "--cameras", str(FIXTURE / "colmap")]
STYLE = ["--style", str(FIXTURE / "style.png")]


def files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(Path(d).rglob("*")) if p.is_file()}


def test_render_writes_one_png_per_view(tmp_path):
    assert run_cli([*BASE, "render", *SCENE, "--out", str(tmp_path)]) == 0
    pngs = sorted(tmp_path.glob("*.png"))
    assert len(pngs) == 8
    assert load_png(pngs[0]).shape == (64, 64, 3)


def test_unknown_subcommand(capsys):
    assert run_cli(["bogus"]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("error: UsageError: ")


def test_missing_subcommand(capsys):
    assert run_cli([]) == 2
    assert capsys.readouterr().err.strip().splitlines()[-1] == "error: UsageError: a subcommand is required"


def test_domain_errors_are_single_line(tmp_path, capsys):
    (tmp_path / "bad.ply").write_bytes(b"ply\nformat ascii 1.0\nend_header\n")
    code = run_cli(["render", "--scene", str(tmp_path / "bad.ply"), "--cameras", str(FIXTURE / "colmap"),
                    "--out", str(tmp_path / "o")])
    assert code == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: MalformedHeader: ")
    assert run_cli(["render", "--scene", str(tmp_path / "none.ply"), "--cameras", "x", "--out", "y"]) == 1
    assert capsys.readouterr().err.startswith("error: FileNotFoundError: ")
    (tmp_path / "c.ini").write_text("[nope]\n")
    assert run_cli(["--config", str(tmp_path / "c.ini"), "--dump-config"]) == 1
    assert capsys.readouterr().err.strip().startswith("error: ConfigError: ")


def test_dump_config_reflects_flags(capsys):
    assert run_cli([*BASE, "--seed", "11", "--threads", "2", "--dump-config"]) == 0
    out = capsys.readouterr().out
    assert "seed = 11" in out and "threads = 2" in out and "n_views = 4" in out


def test_group_views_table(tmp_path, capsys):
    assert run_cli([*BASE, "group-views", "--cameras", str(FIXTURE / "colmap"), "--out", str(tmp_path / "g.txt")]) == 0
    out = capsys.readouterr().out
    assert "view_007.png" in out
    assert (tmp_path / "g.txt").read_text() == "group 0: 0 1 2 7\ngroup 1: 3 4 5 6\n"


def test_stylize_reports_groups_and_is_byte_identical(tmp_path, caplog):
    args = [*BASE, "stylize", *SCENE, *STYLE, "--n-views", "4"]
    with caplog.at_level(logging.INFO):
        assert run_cli([*args, "--out", str(tmp_path / "a")]) == 0
    assert "wrote 8 targets in 2 groups" in caplog.text
    assert run_cli([*args, "--out", str(tmp_path / "b")]) == 0
    a = files(tmp_path / "a")
    assert len([k for k in a if k.endswith(".png")]) == 8
    assert a == files(tmp_path / "b")


def test_finetune_and_train_scratch(tmp_path):
    assert run_cli([*BASE, "stylize", *SCENE, *STYLE, "--out", str(tmp_path / "t")]) == 0
    assert run_cli([*BASE, "finetune", *SCENE, *STYLE, "--targets", str(tmp_path / "t"), "--iterations", "4",
                    "--out", str(tmp_path / "f")]) == 0
    assert len(load_ply(tmp_path / "f" / "scene.ply")) == 100
    assert len((tmp_path / "f" / "losses.txt").read_text().splitlines()) == 4
    assert len(list((tmp_path / "f" / "renders").glob("*.png"))) == 8
    cfg = tmp_path / "small.ini"
    cfg.write_text((FIXTURE / "config.ini").read_text().replace("iterations = 200",
                                                                "iterations = 2\nscratch_gaussians = 50"))
    assert run_cli(["--config", str(cfg), "train-scratch", *SCENE, *STYLE, "--out", str(tmp_path / "s")]) == 0
    assert len(load_ply(tmp_path / "s" / "scene.ply")) == 50


def test_ablate_writes_reports(tmp_path):
    assert run_cli([*BASE, "ablate", *SCENE, *STYLE, "--variant", "no_nnfm", "--iterations", "2",
                    "--out", str(tmp_path)]) == 0
    report = (tmp_path / "no_nnfm" / "report.txt").read_text()
    assert "cfsd = " in report and "groups = 2" in report


def test_metrics_table_and_report(tmp_path, capsys):
    assert run_cli([*BASE, "render", *SCENE, "--out", str(tmp_path / "r")]) == 0
    assert run_cli(["metrics", str(tmp_path / "r"), str(tmp_path / "r"), *STYLE, "--out", str(tmp_path / "m.txt")]) == 0
    out = capsys.readouterr().out
    assert "clip_dc_degenerate" in out
    kv = dict(line.split(" = ") for line in (tmp_path / "m.txt").read_text().splitlines())
    assert float(kv["cfsd"]) == pytest.approx(0.0, abs=1e-9)
    assert kv["clip_dc"] == "1.0" and kv["clip_dc_degenerate"] == "7" and kv["frames"] == "8"


def test_metrics_with_imported_descriptors(tmp_path):
    import numpy as np

    from splatstyle.io import save_features

    assert run_cli([*BASE, "render", *SCENE, "--out", str(tmp_path / "r")]) == 0
    rng = np.random.default_rng(0)
    for sub in ("od", "sd"):
        for png in (tmp_path / "r").glob("*.png"):
            save_features(tmp_path / sub / (png.stem + ".feat"), rng.normal(size=8))
    save_features(tmp_path / "style.feat", rng.normal(size=8))
    code = run_cli(["metrics", str(tmp_path / "r"), str(tmp_path / "r"), "--style-desc", str(tmp_path / "style.feat"),
                    "--original-desc", str(tmp_path / "od"), "--stylized-desc", str(tmp_path / "sd"),
                    "--out", str(tmp_path / "m.txt")])
    assert code == 0
    assert "descriptor_source = imported" in (tmp_path / "m.txt").read_text()


def test_fixture_subcommand(tmp_path):
    assert run_cli(["fixture", "--out", str(tmp_path)]) == 0
    assert files(tmp_path) == files(FIXTURE)
