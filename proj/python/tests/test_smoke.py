import json

import numpy as np
import pytest

import nwq


def test_generate_is_deterministic():
    a = nwq.generate_archive(seed=3, n_frames=40, height=16, width=16)
    b = nwq.generate_archive(seed=3, n_frames=40, height=16, width=16)
    assert a.shape == (40, 16, 16)
    assert a.dtype == np.float32
    assert np.array_equal(a, b)
    assert (a >= 0).all()


def test_archive_round_trip(tmp_path):
    frames = nwq.generate_archive(seed=1, n_frames=12, height=8, width=8)
    path = tmp_path / "a.nwq1"
    nwq.write_archive(path, frames)
    back = nwq.read_archive(path)
    assert back.tobytes() == frames.tobytes()


def test_bad_archive_raises(tmp_path):
    path = tmp_path / "bad.nwq1"
    path.write_bytes(b"XXXX")
    with pytest.raises(nwq.Error):
        nwq.read_archive(path)
    with pytest.raises(nwq.DataError):
        nwq.read_archive(tmp_path / "missing.nwq1")


def test_worked_quantile_example():
    y = np.full((1, 1, 1, 1), 2.0, dtype=np.float32)
    y_hat = np.array([1.0, 3.0, 4.0], dtype=np.float32).reshape(1, 3, 1, 1)
    assert nwq.multi_quantile_loss(y, y_hat) == np.float32(0.6)


def test_median_pinball_is_half_mae():
    rng = np.random.default_rng(0)
    y = rng.normal(size=(1, 3, 5, 5)).astype(np.float32)
    y_hat = rng.normal(size=(1, 3, 5, 5)).astype(np.float32)
    assert 2 * nwq.pinball(y, y_hat, 0.5) == nwq.mae_loss(y, y_hat)
    assert nwq.pinball_value(2.0, 1.0, 0.9) == pytest.approx(0.9)
    with pytest.raises(nwq.DimensionError):
        nwq.mse_loss(y, y_hat[:, :2])


def test_metrics():
    pred = np.array([1, 1, 1, 1, 0, 0, 0], dtype=np.uint8)
    obs = np.array([1, 1, 1, 0, 1, 1, 0], dtype=np.uint8)
    tp, fp, fn, tn = nwq.confusion(pred, obs)
    assert (tp, fp, fn, tn) == (3, 1, 2, 1)
    s = nwq.event_scores(tp, fp, fn, tn)
    assert s["csi"] == 0.5
    assert s["pod"] == 0.6
    assert s["far"] == 0.25
    assert nwq.event_scores(0, 0, 0, 5)["csi"] is None


def test_schedules():
    assert nwq.plateau_scheduler([1, 1, 1, 1, 1], 1.0) == pytest.approx(0.1)
    assert nwq.plateau_scheduler([1, 1, 1, 1], 1.0) == 1.0
    assert nwq.should_stop_early([1.0] * 16)
    assert not nwq.should_stop_early([1.0] * 15)


def test_pipeline(tmp_path):
    config = nwq.default_config()
    config["dataset"]["n_frames"] = 600
    config["dataset"]["height"] = 16
    config["dataset"]["width"] = 16
    config["model"]["base_channels"] = 4
    config["model"]["depth"] = 1
    config["train"]["n_runs"] = 1
    config["train"]["max_epochs"] = 1
    out = str(tmp_path / "run")
    train, val, test = nwq.generate(config, out)
    assert train > 0 and val > 0 and test > 0
    path = nwq.train(config, "quantile", out)
    ckpt = nwq.Checkpoint.load(path)
    assert ckpt.loss == "quantile"
    assert ckpt.quantiles == [0.5, 0.9, 0.95]
    x = np.zeros((2, 4, 16, 16), dtype=np.float32)
    y = ckpt.forward(x)
    assert y.shape == (2, 9, 16, 16)
    assert (y >= 0).all()
    rows = nwq.evaluate(config, out)
    assert {r["output"] for r in rows} == {"q0.5", "q0.9", "q0.95"}
    assert len(rows) == 9


def test_bad_config_raises(tmp_path):
    config = nwq.default_config()
    config["no_such_key"] = 1
    with pytest.raises(nwq.ConfigError):
        nwq.generate(config, str(tmp_path))
    with pytest.raises(nwq.ConfigError):
        nwq.generate(json.dumps({"train": {"batch_size": 0}}), str(tmp_path))
