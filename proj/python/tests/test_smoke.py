import math

import numpy as np
import pytest

import semivl

TINY = {
    "arch.latent_y": "4",
    "arch.latent_z": "2",
    "arch.enc_channels": "2,2",
    "arch.res_blocks": "1",
    "arch.dec_channels": "2",
    "arch.dec_up_channels": "2,2",
    "arch.dec_res_blocks": "1",
    "arch.adain_hidden": "3",
    "arch.linear_hidden": "4",
    "arch.head_hidden": "3",
    "arch.head_channels": "2",
    "train.epochs": "2",
    "train.batch_size": "8",
}


def test_generate_shapes_and_determinism():
    a = semivl.generate(20, seed=3)
    b = semivl.generate(20, seed=3)
    assert a["waveform"].shape == (20, semivl.WAVEFORM_LENGTH)
    np.testing.assert_array_equal(a["waveform"], b["waveform"])
    np.testing.assert_allclose(a["measured_distance"] - a["true_distance"], a["range_error"], atol=1e-12)
    assert a["nlos"].dtype == bool
    other = semivl.generate(20, seed=3, test_stream=True)
    assert not np.array_equal(a["waveform"], other["waveform"])


def test_dataset_round_trip(tmp_path):
    d = semivl.generate(10, seed=1)
    d["range_error"][2] = math.nan
    d["env_label"][2] = -1
    d["material_label"][2] = -1
    path = tmp_path / "d.csv"
    semivl.write_dataset(path, d)
    back = semivl.load_dataset(path)
    np.testing.assert_allclose(back["waveform"], d["waveform"], atol=1e-12)
    assert math.isnan(back["range_error"][2])
    assert back["env_label"][2] == -1


def test_malformed_dataset(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("w000,w001\n")
    with pytest.raises(semivl.DatasetError):
        semivl.load_dataset(path)


def test_kl():
    assert semivl.kl_gaussian_diag(np.array([1.0]), np.array([1.0])) == pytest.approx(0.5, abs=1e-14)
    assert semivl.kl_gaussian_diag(np.zeros(3), np.ones(3)) == pytest.approx(0.0, abs=1e-14)


def test_config():
    cfg = semivl.resolve_config("desk", {"train.eta": "0.3"})
    assert cfg["train.eta"] == "0.3"
    assert cfg["train.epochs"] == "100"
    assert set(cfg) == set(semivl.config_keys())
    with pytest.raises(Exception, match="no.such.key"):
        semivl.resolve_config("full", {"no.such.key": "1"})


def test_train_evaluate_mitigate(tmp_path):
    data = semivl.generate(24, seed=2)
    model = semivl.train(data, overrides=TINY)
    assert [r["epoch"] for r in model.curve] == [1, 2]
    assert all(math.isfinite(r["total"]) for r in model.curve)
    report = model.evaluate(semivl.generate(12, seed=2, test_stream=True))
    assert report["n"] == 12
    assert report["rmse"] >= report["mae"] >= 0.0
    corrected = model.mitigate(data["waveform"][0], float(data["measured_distance"][0]))
    assert math.isfinite(corrected)

    model.save(tmp_path / "ck")
    again = semivl.load_checkpoint(tmp_path / "ck")
    assert again.epoch == 2
    assert again.mitigate(data["waveform"][0], float(data["measured_distance"][0])) == corrected
    with pytest.raises(semivl.CheckpointError):
        semivl.load_checkpoint(tmp_path / "missing")


def test_sweep_rows():
    train_set = semivl.generate(16, seed=4)
    test_set = semivl.generate(8, seed=4, test_stream=True)
    rows = semivl.sweep(train_set, test_set, overrides={**TINY, "train.epochs": "1", "sweep.etas": "0.5,1.0"})
    assert [r["eta"] for r in rows] == [0.5, 1.0]


def test_gradcheck():
    assert max(err for _, err in semivl.gradcheck()) < 1e-4
