"""Loss, analytic gradients vs finite differences, Adam, the epoch loop."""

import math

import numpy as np
import pytest

from conftest import tiny_config
from swps_lru import ingest, lru, train
from swps_lru.errors import NonFiniteLoss
from swps_lru.train import AdamState, TrainConfig


def tiny_model(**kw):
    args = dict(in_dim=6, hidden=8, state_dim=8, n_blocks=2, n_classes=3)
    args.update(kw)
    return lru.build_model(np.random.default_rng(0), **args)


# --------------------------------------------------------------------- loss


def test_cross_entropy_uniform_logits():
    assert train.cross_entropy(np.zeros((1, 2)), [0]) == pytest.approx(math.log(2.0))
    assert train.cross_entropy(np.zeros((4, 10)), [0, 3, 5, 9]) == pytest.approx(math.log(10.0))


def test_cross_entropy_confident():
    assert train.cross_entropy(np.array([[100.0, 0.0]]), [0]) == pytest.approx(0.0, abs=1e-10)
    assert train.cross_entropy(np.array([[0.0, 100.0]]), [0]) == pytest.approx(100.0)


def test_cross_entropy_overflow_safe():
    val = train.cross_entropy(np.array([[1e4, 0.0]]), [1])
    assert val == pytest.approx(1e4)


def test_l2_penalty_counts_weight_matrices_only():
    m = tiny_model()
    for name, arr in lru.parameters(m).items():
        arr[:] = 0.0
    m.enc_w[0, 0] = 2.0
    m.enc_b[0] = 100.0  # bias: exempt
    m.blocks[0].norm.gamma[:] = 3.0  # norm scale: exempt
    m.blocks[0].lru.d[:] = 5.0  # skip connection: exempt
    assert train.l2_penalty(m) == pytest.approx(2.0)


def test_loss_adds_scaled_penalty():
    m = tiny_model()
    for name, arr in lru.parameters(m).items():
        arr[:] = 0.0
    m.enc_w[0, 0] = 2.0
    got = train.loss(np.zeros((1, 2)), 0, model=m, l2=0.1)
    assert got == pytest.approx(math.log(2.0) + 0.2)


# ---------------------------------------------------------------- gradients


def flat_norm(d, keys):
    return math.sqrt(sum(float(np.sum(d[k] * d[k])) for k in keys))


def test_gradients_match_finite_differences():
    # central differences over every entry of every parameter group
    rng = np.random.default_rng(3)
    model = tiny_model(dropout=0.3)
    x = rng.normal(size=(4, 6, 6))
    labels = np.array([0, 1, 2, 1])
    key = (0, 13, 0, 0)
    l2 = 0.01
    _, grads = train.loss_and_gradients(model, x, labels, l2=l2, dropout_key=key)
    params = lru.parameters(model)
    eps = 1e-5
    for name, p in params.items():
        fd = np.zeros_like(p)
        flat = p.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = train.batch_loss(model, x, labels, l2=l2, dropout_key=key)
            flat[i] = orig - eps
            lo = train.batch_loss(model, x, labels, l2=l2, dropout_key=key)
            flat[i] = orig
            fd_flat[i] = (hi - lo) / (2.0 * eps)
        denom = max(np.linalg.norm(fd), np.linalg.norm(grads[name]), 1e-12)
        rel = np.linalg.norm(grads[name] - fd) / denom
        assert rel <= 1e-4, f"{name}: relative gradient error {rel:.2e}"


def test_gradient_keys_and_shapes(rng):
    model = tiny_model()
    x = rng.normal(size=(2, 5, 6))
    grads = train.gradients(model, (x, np.array([0, 2])))
    params = lru.parameters(model)
    assert set(grads) == set(params)
    for name in grads:
        assert grads[name].shape == params[name].shape


def test_duplicated_batch_same_gradient(rng):
    model = tiny_model()
    x = rng.normal(size=(2, 5, 6))
    labels = np.array([0, 2])
    g1 = train.gradients(model, (x, labels))
    g2 = train.gradients(model, (np.concatenate([x, x]), np.concatenate([labels, labels])))
    for name in g1:
        np.testing.assert_allclose(g2[name], g1[name], atol=1e-12)


# ----------------------------------------------------------------- clipping


def test_clip_example():
    grads = {"a": np.array([3.0, 4.0])}
    train.clip_global(grads, 1.0)
    np.testing.assert_allclose(grads["a"], [0.6, 0.8])


def test_clip_below_threshold_untouched():
    grads = {"a": np.array([3.0, 4.0])}
    out = train.clip_global(grads, 10.0)
    np.testing.assert_array_equal(out["a"], [3.0, 4.0])


def test_clip_zero_disables():
    grads = {"a": np.array([30.0, 40.0])}
    train.clip_global(grads, 0.0)
    np.testing.assert_array_equal(grads["a"], [30.0, 40.0])


def test_clip_preserves_direction(rng):
    grads = {k: rng.normal(size=(4, 3)) for k in "abc"}
    before = {k: v.copy() for k, v in grads.items()}
    train.clip_global(grads, 0.5)
    norm = flat_norm(grads, grads.keys())
    assert norm <= 0.5 + 1e-12
    ratio = grads["a"][0, 0] / before["a"][0, 0]
    for k in grads:
        np.testing.assert_allclose(grads[k], before[k] * ratio, atol=1e-12)


# ------------------------------------------------------------- lr schedule


def test_lr_schedule_default_steps():
    cfg = TrainConfig()
    assert train.lr_at(0, cfg) == 1e-3
    assert train.lr_at(4499, cfg) == 1e-3
    assert train.lr_at(4500, cfg) == 5e-4
    assert train.lr_at(9000, cfg) == 2.5e-4
    assert train.lr_at(10**9, cfg) == cfg.lr_min


def test_lr_schedule_monotone():
    cfg = TrainConfig(lr_step=10)
    values = [train.lr_at(s, cfg) for s in range(0, 200, 7)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_lr_rejects_negative_step():
    with pytest.raises(ValueError):
        train.lr_at(-1, TrainConfig())


# --------------------------------------------------------------------- adam


def test_adam_first_step_formula():
    params = {"p": np.array([1.0, -2.0])}
    grads = {"p": np.array([0.5, -0.25])}
    state = AdamState.for_params(params)
    train.adam_step(state, params, grads, lr=0.1)
    want = np.array([1.0, -2.0]) - 0.1 * grads["p"] / (np.abs(grads["p"]) + 1e-8)
    np.testing.assert_allclose(params["p"], want, atol=1e-12)
    assert state.t == 1


def test_adam_zero_gradient_fixed_point():
    params = {"p": np.array([1.0, 2.0])}
    state = AdamState.for_params(params)
    train.adam_step(state, params, {"p": np.zeros(2)}, lr=0.1)
    np.testing.assert_array_equal(params["p"], [1.0, 2.0])


def test_adam_updates_model_in_place(rng):
    model = tiny_model()
    params = lru.parameters(model)
    state = AdamState.for_params(params)
    grads = {k: rng.normal(size=v.shape) for k, v in params.items()}
    before = model.enc_w.copy()
    train.adam_step(state, params, grads, lr=1e-3)
    assert not np.array_equal(model.enc_w, before)


# --------------------------------------------------------------- epoch loop


def loop_fixture(seed=0, epochs=3, **cfg_kw):
    kw = dict(lr0=3e-3, lr_step=1000)
    kw.update(cfg_kw)
    cfg = tiny_config(
        seed=seed, target_length=24, w=4, t=2, hidden=8, state_dim=6, blocks=1,
        epochs=epochs, batch_size=4, **kw
    )
    data = ingest.synth_generate(2, 3, noise=1.0, seed=0)
    model = train.build_model_for(cfg, data.n_classes)
    return model, data, cfg


def test_train_loop_deterministic():
    m1, data, cfg = loop_fixture()
    _, h1 = train.train_loop(m1, data, cfg)
    m2, _, _ = loop_fixture()
    _, h2 = train.train_loop(m2, data, cfg)
    assert [r.loss for r in h1.rows] == [r.loss for r in h2.rows]
    assert [r.train_acc for r in h1.rows] == [r.train_acc for r in h2.rows]
    np.testing.assert_array_equal(m1.enc_w, m2.enc_w)
    np.testing.assert_array_equal(m1.head_w, m2.head_w)


def test_train_loop_seed_changes_run():
    m1, data, cfg1 = loop_fixture(seed=0)
    _, h1 = train.train_loop(m1, data, cfg1)
    m2, _, cfg2 = loop_fixture(seed=1)
    _, h2 = train.train_loop(m2, data, cfg2)
    assert [r.loss for r in h1.rows] != [r.loss for r in h2.rows]


def test_train_loop_lr_column_counts_batches():
    # 6 samples in batches of 4 -> 2 optimiser steps per epoch
    m, data, cfg = loop_fixture(epochs=2, lr0=1e-3, lr_step=1, lr_decay=0.5)
    _, hist = train.train_loop(m, data, cfg)
    assert hist.rows[0].lr == pytest.approx(1e-3 * 0.5)
    assert hist.rows[1].lr == pytest.approx(1e-3 * 0.5**3)


def test_train_loop_loss_decreases():
    m, data, cfg = loop_fixture(epochs=12)
    _, hist = train.train_loop(m, data, cfg)
    losses = [r.loss for r in hist.rows]
    assert np.median(losses[-3:]) < np.median(losses[:3])


def test_train_loop_callback_stops_early():
    m, data, cfg = loop_fixture(epochs=50)
    seen = []

    def stop(epoch, row, model):
        seen.append(epoch)
        return epoch >= 1

    _, hist = train.train_loop(m, data, cfg, callbacks=(stop,))
    assert len(hist.rows) == 2
    assert seen == [0, 1]


def test_train_loop_rotation_draws_change_history():
    base = {"epochs": 2, "hanging": False}
    m1, data, cfg1 = loop_fixture(**base)
    _, h1 = train.train_loop(m1, data, cfg1)
    m2, _, cfg2 = loop_fixture(rotation_max=math.pi, **base)
    _, h2 = train.train_loop(m2, data, cfg2)
    assert [r.loss for r in h1.rows] != [r.loss for r in h2.rows]


def test_train_loop_writes_checkpoints(tmp_path):
    m, data, cfg = loop_fixture(epochs=2)
    train_set, val_set = ingest.split_dataset(data, ingest.SplitSpec(train_fraction=0.5))
    train.train_loop(m, train_set, cfg, val_set=val_set, out_dir=tmp_path)
    assert (tmp_path / "final.ckpt").exists()
    assert (tmp_path / "best.ckpt").exists()


def test_train_loop_non_finite_loss():
    m, data, cfg = loop_fixture()
    m.enc_w[:] = 1e308
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(NonFiniteLoss):
            train.train_loop(m, data, cfg)


def test_history_csv(tmp_path):
    m, data, cfg = loop_fixture(epochs=2)
    _, hist = train.train_loop(m, data, cfg)
    path = tmp_path / "history.csv"
    train.history_to_csv(hist, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,loss,train_acc,val_acc,lr"
    assert len(lines) == 3
    assert lines[1].split(",")[3] == ""  # no validation set -> empty cell
