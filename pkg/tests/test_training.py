import copy
import math
import os
from pathlib import Path

import numpy as np
import pytest

import alocc.training as training
from alocc.errors import ConfigError, UsageError
from alocc.networks import build_d, build_r, default_d_config, default_r_config
from alocc.tensor import Adam, bce_loss, mse_loss
from alocc.training import TrainConfig, TrainReport, corrupt, d_step, r_step, train

SMALL = (4, 8, 8)
MNIST_DIR = Path(os.environ.get("ALOCC_MNIST_DIR", "/root/data/mnist"))


def _nets(seed=0, widths=SMALL):
    return (build_r(default_r_config(widths=widths), rng=seed),
            build_d(default_d_config(widths=widths), rng=seed + 100))


def _batch(n=8, seed=0):
    return np.random.default_rng(seed).uniform(-1, 1, (n, 1, 32, 32)).astype(np.float32)


def _constant_half_d(d):
    # zero head kernel -> logit 0 -> sigmoid 0.5 for every input
    last_conv = max(i for i, l in enumerate(d.config.layers) if l.kind == "conv")
    d.params[f"{last_conv}.kernel"].data[:] = 0
    return d


def _snapshot(net):
    return {k: v.tobytes() for k, v in copy.deepcopy(net.state_arrays()).items()}


# -- config -------------------------------------------------------------------

@pytest.mark.parametrize("field,value", [("lam", 0.0), ("lam", -1.0), ("sigma", -0.1), ("rho", 0.0),
                                         ("batch_size", 0), ("max_epochs", -1)])
def test_config_rejects_invalid(field, value):
    with pytest.raises(ConfigError):
        TrainConfig(**{field: value}).validate()


def test_config_dict_round_trip():
    cfg = TrainConfig(lam=0.7, seed=4)
    d = cfg.to_dict()
    assert d["lambda"] == 0.7 and "lam" not in d
    assert TrainConfig.from_dict(d) == cfg
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"lambda": -1})
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"bogus": 1})


# -- d_step / r_step ----------------------------------------------------------

def test_d_loss_at_half():
    r, d = _nets()
    _constant_half_d(d)
    loss = d_step(r, d, _batch(), np.random.default_rng(0), 0.1, Adam(d.parameters()))
    assert loss == pytest.approx(2 * math.log(2), abs=1e-6)
    assert round(loss, 6) == 1.386294


def test_zero_sigma_is_identity():
    x = _batch()
    assert np.array_equal(corrupt(x, 0.0, np.random.default_rng(0)), x)


def test_loss_arithmetic_lambda():
    # bce(0.5, 1) + 0.4 * 5
    x = np.zeros((1, 5), np.float32)
    xp = np.ones((1, 5), np.float32)
    total = bce_loss(np.array([[0.5]]), 1.0).item() + 0.4 * mse_loss(x, xp).item()
    assert total == pytest.approx(2.693147, abs=1e-6)


def test_r_step_components():
    r, d = _nets()
    _constant_half_d(d)
    x = _batch()
    r_copy = copy.deepcopy(r)
    adv, rec = r_step(r, d, x, np.random.default_rng(0), 0.0, 0.4, Adam(r.parameters()))
    assert adv == pytest.approx(math.log(2), abs=1e-6)
    expected = mse_loss(x, training.forward_r(r_copy, x, training=True)).item()
    assert rec == pytest.approx(expected, rel=1e-6)


def test_d_step_isolation():
    r, d = _nets()
    before = _snapshot(r)
    d_before = _snapshot(d)
    d_step(r, d, _batch(), np.random.default_rng(0), 0.1, Adam(d.parameters()))
    assert _snapshot(r) == before
    assert _snapshot(d) != d_before


def test_r_step_isolation():
    r, d = _nets()
    before = _snapshot(d)
    r_step(r, d, _batch(), np.random.default_rng(0), 0.1, 0.4, Adam(r.parameters()))
    assert _snapshot(d) == before
    assert all(p.requires_grad for p in d.parameters())


def test_d_real_branch_sees_clean_input(monkeypatch):
    r, d = _nets()
    seen = []
    real_forward_d = training.forward_d

    def spy(net, x, *args, **kwargs):
        seen.append(np.array(x))
        return real_forward_d(net, x, *args, **kwargs)

    monkeypatch.setattr(training, "forward_d", spy)
    x = _batch(4)
    d_step(r, d, x, np.random.default_rng(0), 0.5, Adam(d.parameters()))
    assert np.array_equal(seen[0][:4], x)


def test_fifty_d_steps_reduce_loss():
    r, d = _nets()
    x = _batch(16)
    opt = Adam(d.parameters())
    losses = [d_step(r, d, x, np.random.default_rng(i), 0.1, opt) for i in range(50)]
    assert losses[-1] < losses[0]


def test_empty_batch_rejected():
    r, d = _nets()
    empty = np.zeros((0, 1, 32, 32), np.float32)
    with pytest.raises(UsageError):
        d_step(r, d, empty, np.random.default_rng(0), 0.1, Adam(d.parameters()))
    with pytest.raises(UsageError):
        r_step(r, d, empty, np.random.default_rng(0), 0.1, 0.4, Adam(r.parameters()))


# -- train --------------------------------------------------------------------

def test_huge_rho_stops_after_one_epoch():
    r, d = _nets()
    report = train(r, d, _batch(10), TrainConfig(rho=1e6, batch_size=4))
    assert report.epochs_run == 1 and report.stop_reason == training.STOP_RHO


def test_zero_epochs_changes_nothing():
    r, d = _nets()
    before_r, before_d = _snapshot(r), _snapshot(d)
    report = train(r, d, _batch(10), TrainConfig(max_epochs=0))
    assert report.records == [] and report.stop_reason == training.STOP_MAX_EPOCHS
    assert _snapshot(r) == before_r and _snapshot(d) == before_d


def test_max_epochs_stop_reason():
    r, d = _nets()
    report = train(r, d, _batch(6), TrainConfig(max_epochs=2, rho=1e-12, batch_size=4))
    assert report.epochs_run == 2 and report.stop_reason == training.STOP_MAX_EPOCHS
    assert [rec.epoch for rec in report.records] == [1, 2]


def test_empty_dataset_rejected():
    r, d = _nets()
    with pytest.raises(UsageError):
        train(r, d, np.zeros((0, 1, 32, 32), np.float32), TrainConfig(max_epochs=1))


def test_seed_determinism():
    cfg = TrainConfig(max_epochs=2, batch_size=4, seed=11)
    results = []
    for _ in range(2):
        r, d = _nets(seed=5)
        report = train(r, d, _batch(10), cfg)
        results.append((report, _snapshot(r), _snapshot(d)))
    assert results[0][0] == results[1][0]
    assert results[0][1] == results[1][1] and results[0][2] == results[1][2]


def test_report_csv(tmp_path):
    r, d = _nets()
    report = train(r, d, _batch(6), TrainConfig(max_epochs=2, rho=1e-12, batch_size=3))
    report.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "epoch,d_loss,r_adv_loss,recon_loss"
    assert len(lines) == 3 and lines[1].startswith("1,")
    assert isinstance(report, TrainReport)


@pytest.mark.skipif(not (MNIST_DIR / "train-images-idx3-ubyte").exists(), reason="MNIST files not available")
def test_mnist_reconstruction_halves():
    from alocc.data import load_mnist_idx

    ds = load_mnist_idx(MNIST_DIR / "train-images-idx3-ubyte", MNIST_DIR / "train-labels-idx1-ubyte")
    ones = ds.of_class(1).images[:100]
    r, d = _nets(widths=(8, 16, 32))
    # 100 images, batch 10 -> 10 alternating steps per epoch, 200 steps in total
    report = train(r, d, ones, TrainConfig(batch_size=10, max_epochs=20, rho=1e-12))
    assert report.records[-1].recon_loss <= 0.5 * report.records[0].recon_loss
