"""Hot inner loops: numba-jitted kernels with pure-numpy fallbacks.

Two code paths compute identical quantities:

* ``numba``  - explicit loops compiled with ``@njit`` (default when numba
  imports cleanly),
* ``numpy``  - vectorised fallback using prefix sums and batched array ops.

Selection: the environment variable ``SWPS_LRU_NUMBA`` set to ``0``, ``off``,
``false`` or ``numpy`` forces the fallback; anything else (or unset) uses
numba when available.  ``set_backend()`` switches at runtime, which the tests
and ``benchmarks/bench_kernels.py`` use to compare the two paths.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        # Pass-through decorator so the jitted names still exist.
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


_OFF_VALUES = ("0", "off", "false", "numpy")


def _initial_backend() -> str:
    flag = os.environ.get("SWPS_LRU_NUMBA", "auto").strip().lower()
    if flag in _OFF_VALUES or not HAVE_NUMBA:
        return "numpy"
    return "numba"


_BACKEND = _initial_backend()


def backend() -> str:
    """Name of the active backend, ``"numba"`` or ``"numpy"``."""
    return _BACKEND


def set_backend(name: str) -> str:
    """Select the kernel backend; returns the previous one."""
    global _BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    previous = _BACKEND
    _BACKEND = name
    return previous


def set_threads(n: int):
    """Cap the compiled kernels' thread pool; no-op on the numpy path."""
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    if HAVE_NUMBA:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


# ---------------------------------------------------------------------------
# Sliding-window signatures (degree 1 and 2)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _win_sig1_nb(seq, w, t, out):  # pragma: no cover - compiled
    K = out.shape[0]
    d = seq.shape[1]
    for j in range(K):
        s = j * t
        e = s + w - 1
        for i in range(d):
            out[j, i] = seq[e, i] - seq[s, i]


@njit(cache=True)
def _win_sig2_nb(seq, w, t, out):  # pragma: no cover - compiled
    K = out.shape[0]
    d = seq.shape[1]
    lev1 = np.zeros(d)
    delta = np.zeros(d)
    for j in range(K):
        s = j * t
        for i in range(d):
            lev1[i] = 0.0
        for i in range(d * d):
            out[j, d + i] = 0.0
        for k in range(s, s + w - 1):
            for i in range(d):
                delta[i] = seq[k + 1, i] - seq[k, i]
            for a in range(d):
                base = d + a * d
                for b in range(d):
                    out[j, base + b] += lev1[a] * delta[b] + 0.5 * delta[a] * delta[b]
            for i in range(d):
                lev1[i] += delta[i]
        for i in range(d):
            out[j, i] = lev1[i]


def _win_sig_np(seq, w, t, m, K):
    """Closed form over prefix sums; all windows at once."""
    d = seq.shape[1]
    diffs = np.diff(seq, axis=0)
    # excl[k] = sum of the first k increments (exclusive prefix), shape (L, d)
    excl = np.concatenate([np.zeros((1, d)), np.cumsum(diffs, axis=0)], axis=0)
    starts = np.arange(K) * t
    ends = starts + w - 1
    lev1 = excl[ends] - excl[starts]
    if m == 1:
        return lev1
    # cross term: sum over window steps of (in-window prefix) x (increment)
    prod = excl[:-1, :, None] * diffs[:, None, :]
    g = np.concatenate([np.zeros((1, d, d)), np.cumsum(prod, axis=0)], axis=0)
    sq = diffs[:, :, None] * diffs[:, None, :]
    h = np.concatenate([np.zeros((1, d, d)), np.cumsum(sq, axis=0)], axis=0)
    cross = (g[ends] - g[starts]) - excl[starts][:, :, None] * lev1[:, None, :]
    lev2 = cross + 0.5 * (h[ends] - h[starts])
    return np.concatenate([lev1, lev2.reshape(K, d * d)], axis=1)


def window_signatures(seq: np.ndarray, w: int, t: int, m: int, K: int) -> np.ndarray:
    """Degree-``m`` signature of every sliding window; rows (K, d + d*d or d)."""
    seq = np.ascontiguousarray(seq, dtype=np.float64)
    d = seq.shape[1]
    if _BACKEND == "numba":
        dim = d if m == 1 else d + d * d
        out = np.empty((K, dim))
        if m == 1:
            _win_sig1_nb(seq, w, t, out)
        else:
            _win_sig2_nb(seq, w, t, out)
        return out
    return _win_sig_np(seq, w, t, m, K)


# ---------------------------------------------------------------------------
# Linear recurrence h_t = lam * h_{t-1} + x_t  (complex, h_0 = x_0, 0-based)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _scan_fwd_nb(lam_re, lam_im, x_re, x_im, h_re, h_im):  # pragma: no cover
    B, K, D = x_re.shape
    for b in range(B):
        for i in range(D):
            h_re[b, 0, i] = x_re[b, 0, i]
            h_im[b, 0, i] = x_im[b, 0, i]
        for tt in range(1, K):
            for i in range(D):
                pr = h_re[b, tt - 1, i]
                pi = h_im[b, tt - 1, i]
                h_re[b, tt, i] = lam_re[i] * pr - lam_im[i] * pi + x_re[b, tt, i]
                h_im[b, tt, i] = lam_im[i] * pr + lam_re[i] * pi + x_im[b, tt, i]


def _scan_fwd_np(lam_re, lam_im, x_re, x_im):
    h_re = np.empty_like(x_re)
    h_im = np.empty_like(x_im)
    h_re[:, 0] = x_re[:, 0]
    h_im[:, 0] = x_im[:, 0]
    for tt in range(1, x_re.shape[1]):
        pr = h_re[:, tt - 1]
        pi = h_im[:, tt - 1]
        h_re[:, tt] = lam_re * pr - lam_im * pi + x_re[:, tt]
        h_im[:, tt] = lam_im * pr + lam_re * pi + x_im[:, tt]
    return h_re, h_im


def scan_forward(lam_re, lam_im, x_re, x_im):
    """Run the recurrence over a batch; inputs (B, K, D), lam (D,)."""
    x_re = np.ascontiguousarray(x_re, dtype=np.float64)
    x_im = np.ascontiguousarray(x_im, dtype=np.float64)
    lam_re = np.ascontiguousarray(lam_re, dtype=np.float64)
    lam_im = np.ascontiguousarray(lam_im, dtype=np.float64)
    if _BACKEND == "numba":
        h_re = np.empty_like(x_re)
        h_im = np.empty_like(x_im)
        _scan_fwd_nb(lam_re, lam_im, x_re, x_im, h_re, h_im)
        return h_re, h_im
    return _scan_fwd_np(lam_re, lam_im, x_re, x_im)


@njit(cache=True)
def _scan_bwd_nb(lam_re, lam_im, h_re, h_im, dh_re, dh_im, dx_re, dx_im, dlam_re, dlam_im):  # pragma: no cover
    B, K, D = h_re.shape
    for b in range(B):
        for i in range(D):
            ar = dh_re[b, K - 1, i]
            ai = dh_im[b, K - 1, i]
            for tt in range(K - 1, 0, -1):
                dx_re[b, tt, i] = ar
                dx_im[b, tt, i] = ai
                hr = h_re[b, tt - 1, i]
                hi = h_im[b, tt - 1, i]
                dlam_re[i] += ar * hr + ai * hi
                dlam_im[i] += ai * hr - ar * hi
                nr = lam_re[i] * ar + lam_im[i] * ai + dh_re[b, tt - 1, i]
                ni = lam_re[i] * ai - lam_im[i] * ar + dh_im[b, tt - 1, i]
                ar = nr
                ai = ni
            dx_re[b, 0, i] = ar
            dx_im[b, 0, i] = ai


def _scan_bwd_np(lam_re, lam_im, h_re, h_im, dh_re, dh_im):
    B, K, D = h_re.shape
    dx_re = np.empty_like(h_re)
    dx_im = np.empty_like(h_im)
    dlam_re = np.zeros(D)
    dlam_im = np.zeros(D)
    ar = dh_re[:, K - 1].copy()
    ai = dh_im[:, K - 1].copy()
    for tt in range(K - 1, 0, -1):
        dx_re[:, tt] = ar
        dx_im[:, tt] = ai
        hr = h_re[:, tt - 1]
        hi = h_im[:, tt - 1]
        dlam_re += np.sum(ar * hr + ai * hi, axis=0)
        dlam_im += np.sum(ai * hr - ar * hi, axis=0)
        nr = lam_re * ar + lam_im * ai + dh_re[:, tt - 1]
        ni = lam_re * ai - lam_im * ar + dh_im[:, tt - 1]
        ar, ai = nr, ni
    dx_re[:, 0] = ar
    dx_im[:, 0] = ai
    return dx_re, dx_im, dlam_re, dlam_im


def scan_backward(lam_re, lam_im, h_re, h_im, dh_re, dh_im):
    """Reverse-mode pass through the recurrence.

    ``dh`` holds the loss gradient arriving at each h_t from the layer
    output; returns (dx_re, dx_im, dlam_re, dlam_im).
    """
    if _BACKEND == "numba":
        dx_re = np.empty_like(h_re)
        dx_im = np.empty_like(h_im)
        dlam_re = np.zeros(h_re.shape[2])
        dlam_im = np.zeros(h_re.shape[2])
        _scan_bwd_nb(
            np.ascontiguousarray(lam_re), np.ascontiguousarray(lam_im),
            np.ascontiguousarray(h_re), np.ascontiguousarray(h_im),
            np.ascontiguousarray(dh_re), np.ascontiguousarray(dh_im),
            dx_re, dx_im, dlam_re, dlam_im,
        )
        return dx_re, dx_im, dlam_re, dlam_im
    return _scan_bwd_np(lam_re, lam_im, h_re, h_im, dh_re, dh_im)


def warmup():
    """Trigger JIT compilation of every kernel (no-op on the numpy path)."""
    if _BACKEND != "numba":
        return
    seq = np.random.default_rng(0).normal(size=(8, 3))
    window_signatures(seq, 3, 1, 1, 6)
    window_signatures(seq, 3, 1, 2, 6)
    lam_re = np.array([0.5, 0.1])
    lam_im = np.array([0.1, -0.2])
    x = np.ones((1, 4, 2))
    h_re, h_im = scan_forward(lam_re, lam_im, x, x)
    scan_backward(lam_re, lam_im, h_re, h_im, x, x)
