"""CLI subcommands, artifact layout, exit codes."""
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ardeblur import cli
from ardeblur.image import load_image, load_kernel

SMALL = ["--ar-p", "9", "--ar-q", "9", "--psf-l", "5", "--psf-m", "5"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli_fx")
    rc = cli.main(["synth", "--texture", "multiscale", "--size", "64",
                   "--texture-seed", "4", "--psf-kind", "gaussian",
                   "--param", "1.4", "--psf-l", "5", "--psf-m", "5",
                   "--out-prefix", str(d / "fx")])
    assert rc == 0
    return d


def test_synth_writes_fixture_files(synth_dir, capsys):
    for name in ("fx_clean.png", "fx_blurred.png", "fx_psf.txt"):
        assert (synth_dir / name).exists()
    kern = load_kernel(str(synth_dir / "fx_psf.txt"))
    assert kern.shape == (5, 5)
    assert kern.sum() == pytest.approx(1.0, abs=1e-12)


def test_estimate_psf_writes_kernel_and_report(synth_dir, capsys):
    rc = cli.main(["estimate-psf", str(synth_dir / "fx_blurred.png"),
                   "--out", str(synth_dir / "est_psf.txt")] + SMALL)
    assert rc == 0
    info = json.loads(capsys.readouterr().out)
    assert info["psf_path"] == str(synth_dir / "est_psf.txt")
    assert "null_depth" in info and "shape_report" in info
    assert not info["no_blur_fallback"]
    est = load_kernel(str(synth_dir / "est_psf.txt"))
    assert est.shape == (5, 5)


def test_estimate_psf_default_sibling_path(synth_dir, capsys):
    rc = cli.main(["estimate-psf", str(synth_dir / "fx_blurred.png")] + SMALL)
    assert rc == 0
    assert (synth_dir / "fx_blurred_psf.txt").exists()


def test_deblur_end_to_end_artifacts(synth_dir, capsys, tmp_path):
    out = tmp_path / "deblurred.png"
    art = tmp_path / "art"
    rc = cli.main(["deblur", str(synth_dir / "fx_blurred.png"),
                   "--out", str(out), "--out-dir", str(art),
                   "--schema", "cs", "--dt", "0.1",
                   "--schema-max-iters", "3"] + SMALL)
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["out"] == str(out)
    assert summary["stop_reasons"] and "schema_error" not in summary
    for name in ("psf.txt", "ipsf.txt", "primary.png", "trace.json",
                 "trace_ch0.csv"):
        assert (art / name).exists()
    img = load_image(str(out))
    assert img.shape == (64, 64)
    first = (art / "trace_ch0.csv").read_text(encoding="ascii").splitlines()[0]
    assert first == "k,residual_msq,lambda,theta,dt_lower,dt_upper_metric"


def test_deblur_flag_overrides_config_file(synth_dir, capsys, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "ar_p": 11, "ar_q": 11, "psf_l": 5, "psf_m": 5,
        "schema": "none"}), encoding="ascii")
    art = tmp_path / "art"
    rc = cli.main(["deblur", str(synth_dir / "fx_blurred.png"),
                   "--config", str(cfg_path), "--ar-p", "9", "--ar-q", "9",
                   "--out", str(tmp_path / "o.png"), "--out-dir", str(art)])
    assert rc == 0
    capsys.readouterr()
    trace = json.loads((art / "trace.json").read_text(encoding="ascii"))
    assert trace["config_echo"]["ar_p"] == 9
    assert trace["config_echo"]["psf_l"] == 5
    assert trace["schema"] == "none"


def test_eval_scores_against_fixture(synth_dir, capsys, tmp_path):
    rc = cli.main(["eval", "--clean", str(synth_dir / "fx_clean.png"),
                   "--blurred", str(synth_dir / "fx_blurred.png"),
                   "--result", str(synth_dir / "fx_blurred.png"),
                   "--true-psf", str(synth_dir / "fx_psf.txt"),
                   "--est-psf", str(synth_dir / "fx_psf.txt")])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["improvement_db"] == 0.0
    assert report["kernel_ncc"] == pytest.approx(1.0, abs=1e-12)
    out = tmp_path / "report.json"
    rc = cli.main(["eval", "--clean", str(synth_dir / "fx_clean.png"),
                   "--blurred", str(synth_dir / "fx_blurred.png"),
                   "--result", str(synth_dir / "fx_blurred.png"),
                   "--out", str(out)])
    assert rc == 0
    saved = json.loads(out.read_text(encoding="ascii"))
    assert saved["kernel_ncc"] is None  # no reference kernel given


def test_trace_plot_converts_channels(synth_dir, capsys, tmp_path):
    art = tmp_path / "art"
    rc = cli.main(["deblur", str(synth_dir / "fx_blurred.png"),
                   "--out", str(tmp_path / "o.png"), "--out-dir", str(art),
                   "--schema", "lr", "--schema-max-iters", "2"] + SMALL)
    assert rc == 0
    capsys.readouterr()
    rc = cli.main(["trace-plot", str(art / "trace.json"),
                   "--out-prefix", str(tmp_path / "replot")])
    assert rc == 0
    paths = json.loads(capsys.readouterr().out)["csv"]
    assert paths == [str(tmp_path / "replot_ch0.csv")]
    # regenerated CSV matches the one the deblur run wrote
    a = (tmp_path / "replot_ch0.csv").read_text(encoding="ascii")
    b = (art / "trace_ch0.csv").read_text(encoding="ascii")
    assert a == b


def test_exit_code_on_missing_input(capsys):
    rc = cli.main(["estimate-psf", "/nonexistent/image.png"] + SMALL)
    assert rc == cli.EXIT_BAD_INPUT
    assert "error:" in capsys.readouterr().err


def test_exit_code_on_bad_orders(synth_dir, capsys):
    rc = cli.main(["estimate-psf", str(synth_dir / "fx_blurred.png"),
                   "--ar-p", "4"])
    assert rc == cli.EXIT_BAD_INPUT


def test_exit_code_on_unknown_config_key(synth_dir, capsys, tmp_path):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"sigma": 2.0}), encoding="ascii")
    rc = cli.main(["estimate-psf", str(synth_dir / "fx_blurred.png"),
                   "--config", str(cfg_path)])
    assert rc == cli.EXIT_BAD_INPUT
    assert "sigma" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_exit_code_on_schema_divergence_keeps_artifacts(synth_dir, capsys,
                                                        tmp_path):
    out = tmp_path / "o.png"
    art = tmp_path / "art"
    rc = cli.main(["deblur", str(synth_dir / "fx_blurred.png"),
                   "--out", str(out), "--out-dir", str(art),
                   "--schema", "lrme", "--dt", "1e100",
                   "--regularizer", "none"] + SMALL)
    assert rc == cli.EXIT_NUMERICAL
    captured = capsys.readouterr()
    assert "numerical failure" in captured.err
    summary = json.loads(captured.out)
    assert "schema_error" in summary
    # the primary estimate and kernels survive the refinement failure
    assert out.exists()
    for name in ("psf.txt", "ipsf.txt", "primary.png", "trace.json"):
        assert (art / name).exists()


def test_console_entry_point_runs(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ardeblur.cli", "synth", "--size", "48",
         "--psf-l", "3", "--psf-m", "3", "--param", "1.0",
         "--out-prefix", str(tmp_path / "s")],
        capture_output=True, text=True)
    assert proc.returncode == 0
    obj = json.loads(proc.stdout)
    assert os.path.exists(obj["blurred"])
