import os

import numpy as np
import pytest

from singlepixel.cli import main
from singlepixel.measurement import read_measurement_csv
from singlepixel.patterns import load_patterns
from singlepixel.pgm import read_pgm, write_pgm
from singlepixel.scenes import star_mask

SCENE = """
grid = 16
fov = 10.5mm
wavelength = 833.3um
distance = 0.5mm
object = three_slit
slit_widths = 2mm, 1.5mm, 1.5mm
slit_separations = 0.6mm, 0.6mm
modulation_depth = 0.9
noise_sigma = 0.1
seed = 5
"""


@pytest.fixture
def workspace(tmp_path):
    scene = tmp_path / "scene.txt"
    scene.write_text(SCENE)
    patterns = tmp_path / "patterns.spip"
    assert main(["patterns", "--order", "16", "--count", "256", "--out", str(patterns)]) == 0
    return tmp_path, scene, patterns


def test_patterns_subcommand_writes_loadable_file(tmp_path):
    out = tmp_path / "p.spip"
    assert main(["patterns", "--order", "8", "--cr", "0.25", "--out", str(out)]) == 0
    pset = load_patterns(out)
    assert pset.order == 8
    assert pset.count == 16


def test_simulate_writes_expected_files(workspace):
    tmp_path, scene, patterns = workspace
    out_dir = tmp_path / "sim"
    assert main(["simulate", "--scene", str(scene), "--patterns", str(patterns),
                 "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "object.pgm").exists()
    assert (out_dir / "diffracted.pgm").exists()
    meas = read_measurement_csv(out_dir / "measurement.csv")
    assert meas.count == 256
    assert meas.noise_sigma == 0.1
    assert meas.seed == 5


def test_simulate_reruns_are_byte_identical(workspace):
    tmp_path, scene, patterns = workspace
    a = tmp_path / "run_a"
    b = tmp_path / "run_b"
    for out_dir in (a, b):
        assert main(["simulate", "--scene", str(scene), "--patterns", str(patterns),
                     "--out-dir", str(out_dir)]) == 0
    for name in ("object.pgm", "diffracted.pgm", "measurement.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


@pytest.mark.parametrize("method", ["hspi", "dgi", "cstv"])
def test_reconstruct_classical_methods(workspace, method):
    tmp_path, scene, patterns = workspace
    sim_dir = tmp_path / "sim"
    main(["simulate", "--scene", str(scene), "--patterns", str(patterns),
          "--out-dir", str(sim_dir)])
    out_dir = tmp_path / f"rec_{method}"
    code = main([
        "reconstruct",
        "--measurement", str(sim_dir / "measurement.csv"),
        "--patterns", str(patterns),
        "--scene", str(scene),
        "--method", method,
        "--iterations", "20",
        "--reference", str(sim_dir / "diffracted.pgm"),
        "--snr-mask", str(sim_dir / "object.pgm"),
        "--out-dir", str(out_dir),
    ])
    assert code == 0
    assert (out_dir / f"recon_{method}.pgm").exists()
    metrics = (out_dir / "metrics.csv").read_text()
    assert "ssim," in metrics
    assert "snr," in metrics
    if method == "cstv":
        assert (out_dir / "loss_history.csv").exists()


def test_reconstruct_untrained_with_backprop_flag(workspace):
    tmp_path, scene, patterns = workspace
    sim_dir = tmp_path / "sim"
    main(["simulate", "--scene", str(scene), "--patterns", str(patterns),
          "--out-dir", str(sim_dir)])
    out_dir = tmp_path / "rec_untrained"
    code = main([
        "reconstruct",
        "--measurement", str(sim_dir / "measurement.csv"),
        "--patterns", str(patterns),
        "--scene", str(scene),
        "--method", "untrained",
        "--iterations", "10",
        "--seed", "1",
        "--backprop-distance", "0.5mm",
        "--out-dir", str(out_dir),
    ])
    assert code == 0
    img, comments = read_pgm(out_dir / "recon_untrained.pgm")
    assert comments["method"] == "untrained"
    history = (out_dir / "loss_history.csv").read_text().splitlines()
    assert history[0] == "iteration,loss"
    assert len(history) == 11


def test_reconstruct_cr_subsets_measurement(workspace):
    tmp_path, scene, patterns = workspace
    sim_dir = tmp_path / "sim"
    main(["simulate", "--scene", str(scene), "--patterns", str(patterns),
          "--out-dir", str(sim_dir)])
    out_dir = tmp_path / "rec_cr"
    code = main([
        "reconstruct",
        "--measurement", str(sim_dir / "measurement.csv"),
        "--patterns", str(patterns),
        "--scene", str(scene),
        "--method", "hspi",
        "--cr", "0.25",
        "--out-dir", str(out_dir),
    ])
    assert code == 0


def test_mismatched_pattern_file_exits_3(workspace, tmp_path):
    _, scene, patterns = workspace
    sim_dir = tmp_path / "sim"
    main(["simulate", "--scene", str(scene), "--patterns", str(patterns),
          "--out-dir", str(sim_dir)])
    other = tmp_path / "other.spip"
    main(["patterns", "--order", "16", "--count", "256", "--ordering", "natural",
          "--out", str(other)])
    code = main([
        "reconstruct",
        "--measurement", str(sim_dir / "measurement.csv"),
        "--patterns", str(other),
        "--scene", str(scene),
        "--method", "hspi",
        "--out-dir", str(tmp_path / "rec"),
    ])
    assert code == 3


def test_corrupt_measurement_exits_3(workspace, tmp_path):
    _, scene, patterns = workspace
    bad = tmp_path / "bad.csv"
    bad.write_text("this is not a measurement\n")
    code = main([
        "reconstruct",
        "--measurement", str(bad),
        "--patterns", str(patterns),
        "--scene", str(scene),
        "--method", "hspi",
        "--out-dir", str(tmp_path / "rec"),
    ])
    assert code == 3


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["reconstruct", "--method", "warp"])
    assert exc.value.code == 2


def test_metrics_subcommand(tmp_path, capsys):
    star = star_mask(16, 1e-4, outer=0.4, inner=0.2)
    img_path = tmp_path / "a.pgm"
    ref_path = tmp_path / "b.pgm"
    write_pgm(img_path, star)
    write_pgm(ref_path, star)
    assert main(["metrics", "--image", str(img_path), "--reference", str(ref_path),
                 "--snr-mask", str(ref_path)]) == 0
    out = capsys.readouterr().out
    assert "ssim,1.0" in out
    assert "snr," in out


def test_benchmark_grid(workspace):
    tmp_path, scene, patterns = workspace
    out_dir = tmp_path / "bench"
    code = main([
        "benchmark",
        "--scene", str(scene),
        "--cr", "0.25,0.5",
        "--methods", "hspi,dgi",
        "--noise-sigma", "0,0.2",
        "--repeats", "2",
        "--out-dir", str(out_dir),
    ])
    assert code == 0
    rows = (out_dir / "benchmark.csv").read_text().splitlines()
    assert rows[0] == "cr,method,noise_sigma,repeats,ssim_mean,ssim_std,snr_mean,snr_std"
    assert len(rows) == 1 + 2 * 2 * 2


def test_benchmark_deterministic_under_thread_cap(workspace, monkeypatch):
    tmp_path, scene, patterns = workspace
    outs = []
    for workers, name in (("1", "s"), ("4", "p")):
        monkeypatch.setenv("SPI_THREADS", workers)
        out_dir = tmp_path / f"bench_{name}"
        assert main([
            "benchmark", "--scene", str(scene), "--cr", "0.25",
            "--methods", "hspi,dgi", "--noise-sigma", "0.1", "--repeats", "2",
            "--out-dir", str(out_dir),
        ]) == 0
        outs.append((out_dir / "benchmark.csv").read_bytes())
    assert outs[0] == outs[1]
