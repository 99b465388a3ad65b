import json

import numpy as np
import pytest

import pseudoct as pc


def test_phantom_and_ldct():
    clean = pc.synth_phantom(3, 64)
    assert clean.shape == (64, 64) and clean.dtype == np.float32
    assert 0.0 <= clean.min() and clean.max() <= 1.0
    assert np.array_equal(clean, pc.synth_phantom(3, 64))
    noisy = pc.synth_ldct(clean, 0.25, 1, 0)
    assert noisy.shape == clean.shape
    assert not np.array_equal(noisy, clean)
    assert pc.psnr(noisy, clean) < pc.psnr(clean, clean)


def test_metrics_against_numpy():
    rng = np.random.default_rng(0)
    a = rng.random((32, 32), dtype=np.float32)
    b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1).astype(np.float32)
    mse = np.mean((a.astype(np.float64) - b) ** 2)
    assert pc.psnr(b, a) == pytest.approx(10 * np.log10(1.0 / mse), rel=1e-5)
    assert pc.ssim(a, a) == pytest.approx(1.0)
    assert pc.ssim(a, b) < 1.0


def test_ensemble_membership():
    rng = np.random.default_rng(1)
    maps = [rng.normal(size=(40, 48)).astype(np.float32) for _ in range(3)]
    z, sel = pc.ensemble_noise(maps, 7)
    sel = np.asarray(sel).reshape(z.shape)
    picked = np.choose(sel, maps)
    assert np.array_equal(z, picked)
    assert set(np.unique(sel)) == {0, 1, 2}


def test_denoiser_round_trip(tmp_path):
    net = pc.Denoiser(depth=2, channels=4, seed=5)
    x = pc.synth_phantom(1, 32)
    y = net(x)
    assert y.shape == x.shape
    net.save(tmp_path / "d.pctw")
    back = pc.Denoiser.load(tmp_path / "d.pctw")
    assert back.same_parameters(net)
    assert np.array_equal(back(x), y)


def test_blind_spot():
    x = pc.synth_ldct(pc.synth_phantom(2, 32), 0.25, 1, 0)
    inp, mask, pos, src = pc.n2v_mask(x, seed=3)
    assert int(mask.sum()) == len(pos) == len(src)
    flat = x.ravel().copy()
    flat[pos] += 5.0
    inp2, _, _, _ = pc.n2v_mask(flat.reshape(x.shape), seed=3)
    assert np.array_equal(inp, inp2)


def test_errors():
    with pytest.raises(ValueError):
        pc.psnr(np.zeros((4, 4, 4), np.float32), np.zeros((4, 4, 4), np.float32))
    cfg = pc.default_run_config()
    cfg["finetune"]["update_period"] = 0
    with pytest.raises(ValueError):
        pc.run_pipeline(cfg)


def test_tiny_pipeline(tmp_path):
    cfg = pc.default_run_config()
    json.dumps(cfg)
    cfg["output"] = str(tmp_path / "run")
    cfg["synth"].update(subjects=10, slices_per_subject=1, size=32)
    cfg["denoiser"].update(depth=2, channels=4)
    cfg["noise_net"].update(levels=1, channels=4)
    for key in ("pretrain", "noise_training"):
        cfg[key].update(steps=2, batch=2, patch=32, epoch_steps=1)
    cfg["finetune"].update(steps=2, batch=2, patch=32)
    cfg["schemes"] = ["N2C"]
    cfg["save_images"] = False
    rows = pc.run_pipeline(cfg)
    names = {r["method"] for r in rows}
    assert {"LDCT input", "N2C", "N2C+Ours", "N2C+Ours w/o sync"} <= names
    assert (tmp_path / "run" / "report.csv").exists()
