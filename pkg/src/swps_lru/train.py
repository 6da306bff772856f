"""Training engine: loss, analytic gradients, Adam, the epoch loop.

Gradients come from the hand-written reverse pass in ``lru``; the l2
penalty covers weight matrices only (biases, BatchNorm scale/shift and the
recurrence vectors are exempt).  All randomness is keyed off the run seed:
shuffling by (seed, epoch), per-presentation rotation and distortion draws
by (seed, epoch), dropout masks by (seed, epoch, batch, block).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import checkpoint, lru, pipeline
from .errors import NonFiniteLoss
from .geometry import sample_augment, sample_rotation
from .types import N_FEATURES, HistoryRow, TrainHistory


@dataclass
class TrainConfig:
    """Optimisation knobs."""

    lr0: float = 1e-3
    lr_decay: float = 0.5
    lr_step: int = 4500
    lr_min: float = 1e-6
    clip_norm: float = 1.0
    l2: float = 1e-4
    dropout: float = 0.3
    batch_size: int = 64
    epochs: int = 300

    def __post_init__(self):
        if self.lr0 <= 0 or self.lr_min <= 0:
            raise ValueError("learning rates must be positive")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.lr_step < 1:
            raise ValueError(f"lr_step must be >= 1, got {self.lr_step}")
        if self.clip_norm < 0:
            raise ValueError(f"clip_norm must be >= 0, got {self.clip_norm}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Stepwise-decayed learning rate, clamped below: step counts optimizer updates."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    return max(cfg.lr_min, cfg.lr0 * cfg.lr_decay ** (step // cfg.lr_step))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the true classes."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(labels)
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return float(np.mean(lse - z[np.arange(len(y)), y]))


def l2_penalty(model: lru.LruModel) -> float:
    """Half the summed squares of every weight-matrix entry."""
    total = 0.0
    for name, arr in lru.parameters(model).items():
        if lru.is_weight_matrix(name):
            total += float(np.sum(arr * arr))
    return 0.5 * total


def loss(logits, label, model=None, l2: float = 0.0) -> float:
    """Cross-entropy plus (optionally) the scaled l2 penalty."""
    value = cross_entropy(logits, np.atleast_1d(label))
    if model is not None and l2 > 0.0:
        value += l2 * l2_penalty(model)
    return value


def batch_loss(model, x, labels, l2: float = 0.0, dropout_key=None) -> float:
    """Train-mode loss as a pure function of the parameters (fixed dropout key)."""
    logits, _ = lru.forward_batch(model, x, train=True, dropout_key=dropout_key)
    return loss(logits, labels, model, l2)


def loss_and_gradients(model, x, labels, l2: float = 0.0, dropout_key=None):
    """Analytic gradients of the mean batch loss; returns (loss, grads)."""
    labels = np.asarray(labels, dtype=np.int64)
    logits, tape = lru.forward_batch(model, x, train=True, dropout_key=dropout_key)
    n = logits.shape[0]
    probs = lru.softmax(logits)
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grads = lru.backward_batch(model, tape, dlogits)
    value = loss(logits, labels, model, l2)
    if l2 > 0.0:
        params = lru.parameters(model)
        for name in grads:
            if lru.is_weight_matrix(name):
                grads[name] = grads[name] + l2 * params[name]
    return value, grads


def gradients(model, batch, l2: float = 0.0, dropout_key=None) -> dict:
    """Gradient dict for a (windows, labels) batch."""
    x, labels = batch
    return loss_and_gradients(model, x, labels, l2=l2, dropout_key=dropout_key)[1]


def clip_global(grads: dict, max_norm: float) -> dict:
    """Scale the whole gradient so its global l2 norm is at most max_norm."""
    if max_norm <= 0.0:
        return grads
    total = 0.0
    for arr in grads.values():
        total += float(np.sum(arr * arr))
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for name in grads:
            grads[name] = grads[name] * scale
    return grads


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.items()},
            v={k: np.zeros_like(a) for k, a in params.items()},
        )


def adam_step(
    state: AdamState,
    params: dict,
    grads: dict,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected Adam update, applied to the arrays in place."""
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for name, p in params.items():
        g = grads[name]
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        mhat = state.m[name] / bc1
        vhat = state.v[name] / bc2
        p -= lr * mhat / (np.sqrt(vhat) + eps)
    return params, state


def build_model_for(cfg, n_classes: int) -> lru.LruModel:
    """Construct a model sized for the run's window/model settings."""
    rng = np.random.default_rng((cfg.seed, 3))
    return lru.build_model(
        rng,
        in_dim=cfg.window.dim(N_FEATURES),
        hidden=cfg.model.hidden,
        state_dim=cfg.model.state_dim,
        n_blocks=cfg.model.blocks,
        n_classes=n_classes,
        r_min=cfg.model.r_min,
        r_max=cfg.model.r_max,
        max_phase=cfg.model.max_phase,
        dropout=cfg.train.dropout,
    )


def eval_accuracy_on_windows(model, x, labels, batch: int = 256) -> float:
    """Eval-mode accuracy over precomputed window stacks."""
    hits = 0
    for start in range(0, x.shape[0], batch):
        logits, _ = lru.forward_batch(model, x[start : start + batch], train=False)
        hits += int(np.sum(np.argmax(logits, axis=1) == labels[start : start + batch]))
    return hits / x.shape[0]


def train_loop(model, train_set, cfg, val_set=None, out_dir=None, callbacks=()):
    """Seeded epoch loop; returns (model, TrainHistory).

    Each presentation of a sample draws a fresh rotation (when the rotation
    range is open) and fresh distortion parameters (when augmentation is
    on).  History accuracy is measured with an eval-mode pass over the
    undistorted, unrotated training set.  With ``out_dir`` set, writes
    ``final.ckpt`` at the end, plus ``best.ckpt`` whenever validation
    accuracy improves.  A callback returning True stops training early.
    """
    tc = cfg.train
    meta = {"config": cfg.to_dict() if hasattr(cfg, "to_dict") else {}, "label_map": train_set.label_map}

    rtraj = [pipeline.normalize_trajectory(s.trajectory(), cfg.preprocess) for s in train_set.samples]
    labels = train_set.labels()
    n = len(rtraj)
    eval_x = np.stack([pipeline.windows_from_normalized(t, cfg)[0] for t in rtraj])
    val_x = None
    val_labels = None
    if val_set is not None:
        val_x, _ = pipeline.dataset_windows(val_set.samples, cfg)
        val_labels = val_set.labels()

    geo = cfg.geometry
    rot = geo.rotation_max
    aug_on = geo.augment.enabled
    params = lru.parameters(model)
    state = AdamState.for_params(params)
    history = TrainHistory()
    step = 0
    best_val = -1.0
    out_dir = str(out_dir) if out_dir is not None else None

    for epoch in range(tc.epochs):
        order = np.random.default_rng((cfg.seed, 7, epoch)).permutation(n)
        draw_rng = np.random.default_rng((cfg.seed, 11, epoch))
        losses = []
        last_lr = lr_at(step, tc)
        for bi, start in enumerate(range(0, n, tc.batch_size)):
            idx = order[start : start + tc.batch_size]
            if rot > 0.0 or aug_on:
                xs = []
                for i in idx:
                    angle = sample_rotation(draw_rng, rot) if rot > 0.0 else None
                    aug = (
                        sample_augment(draw_rng, geo.augment.scale, geo.augment.translate, geo.augment.elastic)
                        if aug_on
                        else None
                    )
                    w, _ = pipeline.windows_from_normalized(rtraj[i], cfg, angle=angle, augment=aug)
                    xs.append(w)
                x = np.stack(xs)
            else:
                # No per-presentation randomness: the windows are exactly the
                # precomputed eval rows, so skip the feature pipeline.
                x = eval_x[idx]
            key = (cfg.seed, 13, epoch, bi)
            lval, grads = loss_and_gradients(model, x, labels[idx], l2=tc.l2, dropout_key=key)
            if not math.isfinite(lval):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}, batch {bi}: {lval}")
            clip_global(grads, tc.clip_norm)
            last_lr = lr_at(step, tc)
            adam_step(state, params, grads, last_lr)
            step += 1
            losses.append(lval)

        train_acc = eval_accuracy_on_windows(model, eval_x, labels)
        val_acc = None
        if val_x is not None:
            val_acc = eval_accuracy_on_windows(model, val_x, val_labels)
            if out_dir is not None and val_acc > best_val:
                best_val = val_acc
                checkpoint.save_model(f"{out_dir}/best.ckpt", model, meta)
        row = HistoryRow(epoch, float(np.mean(losses)), train_acc, val_acc, last_lr)
        history.append(row)
        if any(cb(epoch, row, model) for cb in callbacks):
            break

    if out_dir is not None:
        checkpoint.save_model(f"{out_dir}/final.ckpt", model, meta)
    return model, history


def history_to_csv(history: TrainHistory, path):
    """Write the epoch history; the val_acc cell is empty when absent."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "train_acc", "val_acc", "lr"])
        for r in history.rows:
            writer.writerow(
                [r.epoch, repr(r.loss), repr(r.train_acc), "" if r.val_acc is None else repr(r.val_acc), repr(r.lr)]
            )
