"""Linear-recurrent-unit classifier over windowed signature sequences.

The network is: affine encoder into H channels, a stack of residual blocks
(BatchNorm, diagonal complex linear recurrence, gated feed-forward), mean
pooling over windows, affine head.  Inside a block:

    z   = BatchNorm(seq)
    x_t = gamma * (B z_t)          complex, elementwise gamma
    h_1 = x_1;  h_t = lam * h_{t-1} + x_t
    s_t = Re(C h_t) + D * z_t
    g   = Dropout(GELU(s))
    out = seq + Dropout(GLU(W_g g))      GLU(u) = u_a * sigmoid(u_b)

The recurrence diagonal is parameterised as lam = exp(-exp(nu_log) + i*theta),
which keeps |lam| < 1 for every real nu_log, and gamma = sqrt(1 - |lam|^2)
normalises the per-step input.  Complex weights live as separate real and
imaginary arrays so optimisation stays real-valued throughout.

The backward pass is written out by hand (no autodiff dependency) and is
validated against central finite differences in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from . import kernels

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

BN_MOMENTUM = 0.9
BN_EPS = 1e-5


# ---------------------------------------------------------------------------
# Parameter containers and initialisation
# ---------------------------------------------------------------------------


@dataclass
class LruLayer:
    """Recurrence parameters; shapes: nu_log/theta/(d_h,), b (d_h, H), c (H, d_h), d (H,)."""

    nu_log: np.ndarray
    theta: np.ndarray
    b_re: np.ndarray
    b_im: np.ndarray
    c_re: np.ndarray
    c_im: np.ndarray
    d: np.ndarray

    @property
    def state_dim(self) -> int:
        return self.nu_log.shape[0]

    def lam(self):
        """Diagonal of the recurrence, as (lam_re, lam_im); always |lam| < 1."""
        mod = np.exp(-np.exp(self.nu_log))
        return mod * np.cos(self.theta), mod * np.sin(self.theta)

    def gamma(self) -> np.ndarray:
        mod = np.exp(-np.exp(self.nu_log))
        return np.sqrt(1.0 - mod * mod)


@dataclass
class BatchNorm:
    """Per-channel affine normalisation with running eval statistics."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class LruBlock:
    norm: BatchNorm
    lru: LruLayer
    gate_w: np.ndarray  # (2H, H)
    gate_b: np.ndarray  # (2H,)


@dataclass
class LruModel:
    enc_w: np.ndarray  # (H, in_dim)
    enc_b: np.ndarray
    blocks: list
    head_w: np.ndarray  # (n_classes, H)
    head_b: np.ndarray
    dropout: float = 0.0

    @property
    def in_dim(self) -> int:
        return self.enc_w.shape[1]

    @property
    def hidden(self) -> int:
        return self.enc_w.shape[0]

    @property
    def state_dim(self) -> int:
        return self.blocks[0].lru.state_dim

    @property
    def n_classes(self) -> int:
        return self.head_w.shape[0]


def init_lru_layer(
    rng: np.random.Generator,
    state_dim: int,
    hidden: int,
    r_min: float = 0.5,
    r_max: float = 0.99,
    max_phase: float = 2.0 * math.pi,
) -> LruLayer:
    """Draw recurrence parameters: |lam|^2 uniform on [r_min^2, r_max^2],
    phase uniform on [0, max_phase), complex Gaussian B and C with variance
    1/(2H) and 1/(2 d_h) per real component, D = ones."""
    if not (0.0 <= r_min < r_max < 1.0):
        raise ValueError(f"need 0 <= r_min < r_max < 1, got r_min={r_min}, r_max={r_max}")
    u1 = rng.uniform(size=state_dim)
    u2 = rng.uniform(size=state_dim)
    nu_log = np.log(-0.5 * np.log(u1 * (r_max**2 - r_min**2) + r_min**2))
    theta = u2 * max_phase
    sb = math.sqrt(1.0 / (2.0 * hidden))
    sc = math.sqrt(1.0 / (2.0 * state_dim))
    return LruLayer(
        nu_log=nu_log,
        theta=theta,
        b_re=rng.normal(0.0, sb, size=(state_dim, hidden)),
        b_im=rng.normal(0.0, sb, size=(state_dim, hidden)),
        c_re=rng.normal(0.0, sc, size=(hidden, state_dim)),
        c_im=rng.normal(0.0, sc, size=(hidden, state_dim)),
        d=np.ones(hidden),
    )


def init_batch_norm(hidden: int) -> BatchNorm:
    return BatchNorm(
        gamma=np.ones(hidden),
        beta=np.zeros(hidden),
        running_mean=np.zeros(hidden),
        running_var=np.ones(hidden),
    )


def build_model(
    rng: np.random.Generator,
    in_dim: int,
    hidden: int = 256,
    state_dim: int = 256,
    n_blocks: int = 4,
    n_classes: int = 2,
    dropout: float = 0.0,
    r_min: float = 0.5,
    r_max: float = 0.99,
    max_phase: float = 2.0 * math.pi,
) -> LruModel:
    """Initialise the full classifier; draw order is encoder, blocks, head."""
    if n_blocks < 1:
        raise ValueError(f"need at least one block, got {n_blocks}")
    if not (0.0 <= dropout < 1.0):
        raise ValueError(f"dropout must be in [0, 1), got {dropout}")
    enc_w = rng.normal(0.0, 1.0 / math.sqrt(in_dim), size=(hidden, in_dim))
    enc_b = np.zeros(hidden)
    blocks = []
    for _ in range(n_blocks):
        layer = init_lru_layer(rng, state_dim, hidden, r_min, r_max, max_phase)
        gate_w = rng.normal(0.0, 1.0 / math.sqrt(hidden), size=(2 * hidden, hidden))
        blocks.append(LruBlock(init_batch_norm(hidden), layer, gate_w, np.zeros(2 * hidden)))
    head_w = rng.normal(0.0, 1.0 / math.sqrt(hidden), size=(n_classes, hidden))
    return LruModel(enc_w, enc_b, blocks, head_w, np.zeros(n_classes), dropout=dropout)


def parameters(model: LruModel) -> dict:
    """Name -> array views of every trainable parameter (running stats excluded)."""
    out = {"encoder.w": model.enc_w, "encoder.b": model.enc_b}
    for i, blk in enumerate(model.blocks):
        p = f"blocks.{i}"
        out[f"{p}.norm.gamma"] = blk.norm.gamma
        out[f"{p}.norm.beta"] = blk.norm.beta
        out[f"{p}.lru.nu_log"] = blk.lru.nu_log
        out[f"{p}.lru.theta"] = blk.lru.theta
        out[f"{p}.lru.b_re"] = blk.lru.b_re
        out[f"{p}.lru.b_im"] = blk.lru.b_im
        out[f"{p}.lru.c_re"] = blk.lru.c_re
        out[f"{p}.lru.c_im"] = blk.lru.c_im
        out[f"{p}.lru.d"] = blk.lru.d
        out[f"{p}.gate.w"] = blk.gate_w
        out[f"{p}.gate.b"] = blk.gate_b
    out["head.w"] = model.head_w
    out["head.b"] = model.head_b
    return out


def is_weight_matrix(name: str) -> bool:
    """True for the 2-D weight matrices that the l2 penalty covers."""
    return name in ("encoder.w", "head.w") or name.endswith(
        (".gate.w", ".lru.b_re", ".lru.b_im", ".lru.c_re", ".lru.c_im")
    )


# ---------------------------------------------------------------------------
# Scans
# ---------------------------------------------------------------------------


def _project_in(layer: LruLayer, u: np.ndarray):
    """x_t = gamma * (B u_t) as separate real and imaginary parts."""
    gam = layer.gamma()
    x_re = (u @ layer.b_re.T) * gam
    x_im = (u @ layer.b_im.T) * gam
    return x_re, x_im


def _as_batch(u: np.ndarray):
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 2:
        return u[None], True
    if u.ndim == 3:
        return u, False
    raise ValueError(f"expected (K, H) or (B, K, H) input, got shape {u.shape}")


def lru_scan_sequential(layer: LruLayer, u: np.ndarray) -> np.ndarray:
    """Run the recurrence step by step; returns the complex state sequence."""
    ub, squeeze = _as_batch(u)
    lam_re, lam_im = layer.lam()
    x_re, x_im = _project_in(layer, ub)
    h_re, h_im = kernels.scan_forward(lam_re, lam_im, x_re, x_im)
    h = h_re + 1j * h_im
    return h[0] if squeeze else h


def assoc_scan(lam: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Inclusive scan of the first-order recurrence via the associative
    combinator (a2, b2) o (a1, b1) = (a2*a1, a2*b1 + b2).

    ``lam`` is the (D,) complex diagonal, ``x`` the (B, K, D) complex inputs;
    the b components of the scanned elements are exactly the states h_t.
    """
    b_dim, k_dim, d_dim = x.shape
    a = np.tile(lam[None, :], (k_dim, 1)).astype(np.complex128)
    b = np.array(x, dtype=np.complex128)
    off = 1
    while off < k_dim:
        a_cur = a[off:].copy()
        b[:, off:] += a_cur[None, :, :] * b[:, : k_dim - off]
        a[off:] = a_cur * a[: k_dim - off]
        off *= 2
    return b


def lru_scan_parallel(layer: LruLayer, u: np.ndarray) -> np.ndarray:
    """Same states as the sequential scan, computed in log-depth."""
    ub, squeeze = _as_batch(u)
    lam_re, lam_im = layer.lam()
    x_re, x_im = _project_in(layer, ub)
    h = assoc_scan(lam_re + 1j * lam_im, x_re + 1j * x_im)
    return h[0] if squeeze else h


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _gelu(x: np.ndarray):
    """Exact (erf-based) GELU and its derivative."""
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return x * cdf, cdf + x * pdf


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _dropout_mask(rng, shape, rate: float) -> np.ndarray:
    """Inverted-dropout mask: kept entries scaled by 1/(1-rate)."""
    keep = rng.uniform(size=shape) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


def _block_forward(blk: LruBlock, seq: np.ndarray, train: bool, drop_rng, rate: float):
    """One residual block; returns (out, tape).  tape is None in eval mode."""
    bdim, kdim, hdim = seq.shape
    if train:
        mean = seq.mean(axis=(0, 1))
        var = seq.var(axis=(0, 1))
        blk.norm.running_mean = BN_MOMENTUM * blk.norm.running_mean + (1 - BN_MOMENTUM) * mean
        blk.norm.running_var = BN_MOMENTUM * blk.norm.running_var + (1 - BN_MOMENTUM) * var
    else:
        mean = blk.norm.running_mean
        var = blk.norm.running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (seq - mean) * inv_std
    z = blk.norm.gamma * xhat + blk.norm.beta

    lam_re, lam_im = blk.lru.lam()
    x_re, x_im = _project_in(blk.lru, z)
    h_re, h_im = kernels.scan_forward(lam_re, lam_im, x_re, x_im)
    s = h_re @ blk.lru.c_re.T - h_im @ blk.lru.c_im.T + blk.lru.d * z

    gelu_s, _ = _gelu(s)
    if train and rate > 0.0:
        mask1 = _dropout_mask(drop_rng, s.shape, rate)
        mask2 = _dropout_mask(drop_rng, s.shape, rate)
    else:
        mask1 = mask2 = None
    g = gelu_s if mask1 is None else gelu_s * mask1
    pre = g @ blk.gate_w.T + blk.gate_b
    a = pre[..., :hdim]
    sig = _sigmoid(pre[..., hdim:])
    glu = a * sig
    core = glu if mask2 is None else glu * mask2
    out = seq + core

    tape = None
    if train:
        tape = {
            "xhat": xhat,
            "inv_std": inv_std,
            "h_re": h_re,
            "h_im": h_im,
            "s": s,
            "mask1": mask1,
            "mask2": mask2,
        }
    return out, tape


def forward_batch(model: LruModel, x: np.ndarray, train: bool = False, dropout_key=None):
    """Forward pass over a batch of window sequences x (B, K, in_dim).

    In train mode, batch statistics drive the normalisation (running stats
    are updated in place) and dropout masks are drawn from generators keyed
    by (dropout_key..., block_index), so a fixed key makes the pass a pure
    function of the parameters.  Returns (logits, tape); tape is None in
    eval mode.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != model.in_dim:
        raise ValueError(f"expected (B, K, {model.in_dim}) input, got shape {x.shape}")
    seq = x @ model.enc_w.T + model.enc_b
    tapes = []
    for i, blk in enumerate(model.blocks):
        drop_rng = None
        if train and model.dropout > 0.0:
            if dropout_key is None:
                raise ValueError("train-mode forward with dropout needs a dropout_key")
            key = (dropout_key,) if isinstance(dropout_key, int) else tuple(dropout_key)
            drop_rng = np.random.default_rng(key + (i,))
        seq, tape = _block_forward(blk, seq, train, drop_rng, model.dropout)
        tapes.append(tape)
    pooled = seq.mean(axis=1)
    logits = pooled @ model.head_w.T + model.head_b
    full_tape = {"x": x, "tapes": tapes, "pooled": pooled} if train else None
    return logits, full_tape


def model_forward(model: LruModel, ws, mode: str = "eval", dropout_key=None) -> np.ndarray:
    """Logits for a single sample's windowed signature matrix (K, dim)."""
    rows = ws.rows if hasattr(ws, "rows") else np.asarray(ws, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != model.in_dim:
        raise ValueError(
            f"windowed signature width {rows.shape[-1]} does not match encoder input {model.in_dim}"
        )
    if mode not in ("eval", "train"):
        raise ValueError(f"mode must be 'eval' or 'train', got {mode!r}")
    logits, _ = forward_batch(model, rows[None], train=(mode == "train"), dropout_key=dropout_key)
    return logits[0]


def _block_backward(blk: LruBlock, tape: dict, dout: np.ndarray, grads: dict, prefix: str):
    """Reverse one block; returns the gradient w.r.t. the block input."""
    hdim = blk.norm.gamma.shape[0]
    xhat = tape["xhat"]
    inv_std = tape["inv_std"]
    h_re = tape["h_re"]
    h_im = tape["h_im"]
    s = tape["s"]
    mask1 = tape["mask1"]
    mask2 = tape["mask2"]

    # recompute the cheap intermediates
    z = blk.norm.gamma * xhat + blk.norm.beta
    gelu_s, dgelu_s = _gelu(s)
    g = gelu_s if mask1 is None else gelu_s * mask1
    pre = g @ blk.gate_w.T + blk.gate_b
    a = pre[..., :hdim]
    sig = _sigmoid(pre[..., hdim:])

    dglu = dout if mask2 is None else dout * mask2
    da = dglu * sig
    db = dglu * a * sig * (1.0 - sig)
    dpre = np.concatenate([da, db], axis=-1)
    grads[f"{prefix}.gate.w"] = np.einsum("bkp,bkh->ph", dpre, g)
    grads[f"{prefix}.gate.b"] = dpre.sum(axis=(0, 1))
    dg = dpre @ blk.gate_w
    dgelu = dg if mask1 is None else dg * mask1
    ds = dgelu * dgelu_s

    # s = Re(C h) + d * z
    grads[f"{prefix}.lru.c_re"] = np.einsum("bkh,bkd->hd", ds, h_re)
    grads[f"{prefix}.lru.c_im"] = -np.einsum("bkh,bkd->hd", ds, h_im)
    grads[f"{prefix}.lru.d"] = np.einsum("bkh,bkh->h", ds, z)
    dh_re = ds @ blk.lru.c_re
    dh_im = -(ds @ blk.lru.c_im)
    dz = blk.lru.d * ds

    lam_re, lam_im = blk.lru.lam()
    dx_re, dx_im, dlam_re, dlam_im = kernels.scan_backward(lam_re, lam_im, h_re, h_im, dh_re, dh_im)

    gam = blk.lru.gamma()
    bu_re = z @ blk.lru.b_re.T
    bu_im = z @ blk.lru.b_im.T
    dgam = np.einsum("bkd,bkd->d", dx_re, bu_re) + np.einsum("bkd,bkd->d", dx_im, bu_im)
    dbu_re = dx_re * gam
    dbu_im = dx_im * gam
    grads[f"{prefix}.lru.b_re"] = np.einsum("bkd,bkh->dh", dbu_re, z)
    grads[f"{prefix}.lru.b_im"] = np.einsum("bkd,bkh->dh", dbu_im, z)
    dz = dz + dbu_re @ blk.lru.b_re + dbu_im @ blk.lru.b_im

    # lam = exp(-nu) * (cos theta, sin theta), nu = exp(nu_log); gamma^2 = 1 - |lam|^2
    mod2 = lam_re * lam_re + lam_im * lam_im
    dnu = -(dlam_re * lam_re + dlam_im * lam_im) + dgam * (mod2 / gam)
    grads[f"{prefix}.lru.nu_log"] = dnu * np.exp(blk.lru.nu_log)
    grads[f"{prefix}.lru.theta"] = dlam_im * lam_re - dlam_re * lam_im

    # batch-norm backward (training statistics)
    dxhat = dz * blk.norm.gamma
    grads[f"{prefix}.norm.gamma"] = np.einsum("bkh,bkh->h", dz, xhat)
    grads[f"{prefix}.norm.beta"] = dz.sum(axis=(0, 1))
    m1 = dxhat.mean(axis=(0, 1))
    m2 = (dxhat * xhat).mean(axis=(0, 1))
    dz_in = inv_std * (dxhat - m1 - xhat * m2)
    return dout + dz_in


def backward_batch(model: LruModel, tape: dict, dlogits: np.ndarray) -> dict:
    """Gradients of every parameter given d(loss)/d(logits) for the batch."""
    x = tape["x"]
    pooled = tape["pooled"]
    k_dim = x.shape[1]
    grads = {}
    grads["head.w"] = dlogits.T @ pooled
    grads["head.b"] = dlogits.sum(axis=0)
    dpooled = dlogits @ model.head_w
    dseq = np.repeat(dpooled[:, None, :], k_dim, axis=1) / k_dim
    for i in range(len(model.blocks) - 1, -1, -1):
        dseq = _block_backward(model.blocks[i], tape["tapes"][i], dseq, grads, f"blocks.{i}")
    grads["encoder.w"] = np.einsum("bkh,bkf->hf", dseq, x)
    grads["encoder.b"] = dseq.sum(axis=(0, 1))
    # return in parameters() order
    return {name: grads[name] for name in parameters(model)}
