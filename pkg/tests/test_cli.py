import json
import subprocess
import sys

import pytest

from blockcs.experiments import cli

PHASE = {"transform": {"name": "dft", "n": 32}, "support": {"kind": "uniform_random", "s": 3},
         "m_grid": [6, 16], "trials": 5, "seed": 3}


def write_cfg(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def run(argv):
    return cli.main(argv)


def test_phase_replay_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, PHASE)
    assert run(["phase", cfg, "--out", str(tmp_path / "a")]) == 0
    assert run(["phase", cfg, "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "phase.csv").read_bytes()
    assert a == (tmp_path / "b" / "phase.csv").read_bytes()
    assert a.startswith(b"m,trials,successes,rate,gamma_mean,seed0,config_hash\n")


def test_seed_override_changes_output(tmp_path):
    cfg = write_cfg(tmp_path, dict(PHASE, trials=3))
    run(["phase", cfg, "--out", str(tmp_path / "a")])
    run(["phase", cfg, "--seed", "100", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "phase.csv").read_bytes() != (tmp_path / "b" / "phase.csv").read_bytes()


def test_unknown_key_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, dict(PHASE, bogus=1))
    assert run(["phase", cfg]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_missing_file_exit_2(tmp_path):
    assert run(["phase", str(tmp_path / "nope.json")]) == 2


def test_bad_dimension_exit_2(tmp_path):
    cfg = write_cfg(tmp_path, {"transform": {"name": "haar", "n": 12}, "support": {"kind": "uniform_random", "s": 1},
                               "m_grid": [4]})
    assert run(["phase", cfg, "--out", str(tmp_path)]) == 2


def test_numeric_failure_exit_3(tmp_path):
    # 128x128 lines exceed the dense cap of the coherence evaluator
    cfg = write_cfg(tmp_path, {"transform": {"name": "dft2d", "side": 128}, "blocks": "lines-horizontal",
                               "support": {"kind": "explicit", "indices": [0, 1]}})
    assert run(["coherence", cfg, "--out", str(tmp_path)]) == 3


def test_coherence_report(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"transform": {"name": "identity", "n": 64}, "pi": "restricted",
                               "support": {"kind": "uniform_random", "s": 4}})
    assert run(["coherence", cfg, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "empirical_m=" in out and "sufficient_m=" in out
    assert (tmp_path / "coherence.txt").read_text() == out


def test_mask_and_lines(tmp_path):
    cfg = write_cfg(tmp_path, {"transform": {"name": "dft2d", "side": 8}, "blocks": "lines-horizontal",
                               "support": {"kind": "row_concentrated", "q": 1}, "m_grid": [4], "trials": 2})
    assert run(["mask", cfg, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "mask.pgm").read_bytes().startswith(b"P5\n8 8\n")
    assert run(["lines", cfg, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "lines_report.txt").read_text().startswith("s=8\n")


def test_certify(tmp_path):
    cfg = write_cfg(tmp_path, {"transform": {"name": "identity", "n": 64}, "pi": "restricted",
                               "support": {"kind": "uniform_random", "s": 4}, "trials": 3})
    assert run(["certify", cfg, "--out", str(tmp_path)]) == 0
    text = (tmp_path / "certify.txt").read_text()
    assert text.rstrip().endswith("trials=3")


def test_reconstruct_outputs(tmp_path):
    cfg = write_cfg(tmp_path, {"transform": {"name": "fourier_haar2d", "side": 16}, "blocks": "lines-horizontal",
                               "pi": "level_flat", "draw": "full", "solver": {"max_iter": 500}})
    assert run(["reconstruct", cfg, "--out", str(tmp_path)]) == 0
    for name in ("reference.pgm", "reconstruction.pgm", "reconstruction.f32", "mask.pgm", "reconstruction.json"):
        assert (tmp_path / name).exists()
    meta = json.loads((tmp_path / "reconstruction.json").read_text())
    assert meta["wavelet"] == "haar" and meta["snr_db"] >= 120


@pytest.mark.slow
def test_console_entry_point(tmp_path):
    cfg = write_cfg(tmp_path, dict(PHASE, trials=2))
    proc = subprocess.run([sys.executable, "-m", "blockcs.experiments.cli", "phase", cfg, "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.splitlines()[0].startswith("m,trials")
