import json
import math

import numpy as np
import pytest

from blockcs import blocks, linops, sampling
from blockcs.experiments import io, runners
from blockcs.experiments.config import ConfigError, ExperimentConfig


def cfg_of(**kw):
    base = {"transform": {"name": "identity", "n": 32}, "support": {"kind": "uniform_random", "s": 3},
            "m_grid": [4, 24], "trials": 4}
    base.update(kw)
    return ExperimentConfig.from_dict(base)


# io --------------------------------------------------------------------------

def test_pgm_roundtrip(tmp_path):
    img = np.random.default_rng(0).random((8, 8))
    p = tmp_path / "a.pgm"
    io.write_pgm(p, img)
    back = io.read_pgm(p)
    assert back.shape == (8, 8) and back.dtype == np.uint8
    assert np.abs(back / 255.0 - img).max() <= 0.5 / 255 + 1e-12


def test_pgm_header(tmp_path):
    p = tmp_path / "b.pgm"
    io.write_pgm(p, np.zeros((3, 5)))
    assert p.read_bytes().startswith(b"P5\n5 3\n255\n")


def test_raw_roundtrip(tmp_path):
    arr = np.arange(12, dtype=float).reshape(3, 4) / 7
    io.write_raw(tmp_path / "x.f32", arr)
    back = io.read_raw(tmp_path / "x.f32")
    assert back.shape == (3, 4)
    assert np.allclose(back, arr, atol=1e-7)


def test_csv_header_and_nan(tmp_path):
    rows = [{"m": 4, "trials": 2, "successes": 1, "rate": 0.5, "gamma_mean": math.nan,
             "seed0": 0, "config_hash": "ab"}]
    text = io.csv_text(rows)
    assert text.splitlines()[0] == ",".join(io.CSV_FIELDS)
    assert ",nan," in text
    io.write_csv(tmp_path / "r.csv", rows)
    assert io.read_csv(tmp_path / "r.csv")[0]["rate"] == "0.5"


# config ----------------------------------------------------------------------

def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        cfg_of(colour="red")


@pytest.mark.parametrize("grid", [[8, 4], [4, 4], [-1, 2], [1.5]])
def test_bad_grid(grid):
    with pytest.raises(ConfigError):
        cfg_of(m_grid=grid)


def test_line_blocks_need_2d():
    with pytest.raises(ConfigError):
        cfg_of(blocks="lines-horizontal")


def test_hash_ignores_output_dir():
    assert cfg_of(out="a").hash() == cfg_of(out="b").hash()
    assert cfg_of(seed=1).hash() != cfg_of(seed=2).hash()


def test_override_trials_keeps_seed_list():
    c = cfg_of(seeds=[5, 9, 13, 20], trials=4).override(trials=2)
    assert c.trial_seeds() == [5, 9]


def test_restricted_pi_on_support():
    c = cfg_of(pi="restricted")
    d = c.build_dictionary()
    pi = c.build_pi(d, np.array([1, 6]))
    assert pi[[1, 6]].tolist() == [0.5, 0.5] and pi.sum() == 1


# runners ---------------------------------------------------------------------

def test_phase_rows_and_monotone_probe():
    c = cfg_of(transform={"name": "dft", "n": 32}, m_grid=[2, 12, 32], trials=10)
    res = runners.run_phase_transition(c)
    rates = [r["rate"] for r in res.rows]
    assert [r["m"] for r in res.rows] == [2, 12, 32]
    assert rates[0] <= rates[1] <= rates[2]
    assert rates[0] == 0.0 and rates[2] >= 0.9


def test_skipped_trials_counted():
    c = cfg_of(support={"kind": "by_levels", "level_counts": [1, 1, 3]}, m_grid=[8], trials=3)
    res = runners.run_phase_transition(c)
    assert res.skipped[8] == 3
    assert res.rows[0]["trials"] == 0 and math.isnan(res.rows[0]["rate"])


def test_mask_lights_drawn_rows():
    d = blocks.line_dictionary(linops.dft2d(4), "horizontal")
    rec = sampling.DrawRecord("iid", 0, np.array([1, 3, 1]), np.full(4, 0.25), 3)
    mask = runners.mask_image(d, rec)
    assert mask.sum(axis=1).tolist() == [0, 4, 0, 4]


def test_full_bernoulli_mask_all_white(tmp_path):
    d = blocks.line_dictionary(linops.dft2d(8), "vertical")
    rec = sampling.draw_bernoulli(d, np.ones(8), seed=0)
    runners.emit_mask(d, rec, tmp_path / "m.pgm")
    assert np.all(io.read_pgm(tmp_path / "m.pgm") == 255)


def test_mask_requires_2d():
    d = blocks.isolated_dictionary(linops.dft1d(16))
    with pytest.raises(ConfigError):
        runners.mask_image(d, sampling.draw_iid(d, np.full(16, 1 / 16), 2, 0))


def _img_cfg(**kw):
    base = {"transform": {"name": "fourier_haar2d", "side": 16}, "blocks": "lines-horizontal",
            "pi": "level_flat", "solver": {"tol": 1e-10, "max_iter": 3000}}
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def test_full_sampling_reconstruction():
    low, _ = runners.stripe_pair(16, 3)
    rec = runners.reconstruct_image(_img_cfg(draw="full"), low)
    assert rec.snr >= 120
    assert rec.metadata["wavelet"] == "haar"


def test_zero_measurements_zero_image():
    low, _ = runners.stripe_pair(16, 3)
    rec = runners.reconstruct_image(_img_cfg(), low, m=0)
    assert np.array_equal(rec.image, np.zeros_like(low))
    assert rec.snr == pytest.approx(0.0)


@pytest.mark.parametrize("shape", [(16, 8), (12, 12), (256, 256)])
def test_reject_bad_images(shape):
    with pytest.raises(ConfigError):
        runners.reconstruct_image(_img_cfg(), np.ones(shape), m=4)


def test_stripe_pair_equal_sparsity():
    low, high = runners.stripe_pair(32, 0)
    phi = linops.haar2d(32)
    a, b = phi.apply(low.ravel()), phi.apply(high.ravel())
    assert (np.abs(a) > 1e-12).sum() == (np.abs(b) > 1e-12).sum()
    assert np.allclose(high, low.T)


def test_snr_of_exact_copy_is_inf():
    x = np.ones((4, 4))
    assert runners.snr_db(x, x) == math.inf


def test_draw_keys_isolate_streams():
    c = cfg_of(pi="uniform")
    d = c.build_dictionary()
    pi = c.build_pi(d, np.array([0]))
    a = runners.draw(c, d, pi, 10, 4, (runners.KEY_DRAW, 10))
    b = runners.draw(c, d, pi, 10, 4, (runners.KEY_DRAW, 11))
    assert not np.array_equal(a.drawn, b.drawn)


def test_record_json_has_keys():
    c = cfg_of()
    d = c.build_dictionary()
    rec = runners.draw(c, d, c.build_pi(d, np.array([0])), 5, 2, (runners.KEY_DRAW, 5))
    assert json.loads(rec.to_json())["keys"] == [runners.KEY_DRAW, 5]
