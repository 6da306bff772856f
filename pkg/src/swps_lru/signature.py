"""Truncated signatures of piecewise-linear paths, and their sliding windows.

The degree-m signature of a path collects its iterated integrals up to
level m.  For a straight segment with increment v the signature is the
truncated tensor exponential (level k equals v^(x)k / k!), and signatures
of concatenated paths combine through the truncated tensor product
(Chen's identity).  Flat feature vectors store levels 1..m back to back,
each level in lexicographic (C-order) index order, so the total width is
sum_{k=1..m} d^k.

``oracle_signature`` is an intentionally independent cross-check: it
approximates the iterated integrals by nested Riemann summation over a
uniformly refined copy of the path and never touches the tensor-algebra
code above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .types import WindowedSignature

_MAX_INDEX = np.iinfo(np.intp).max


def sig_dim(d: int, m: int) -> int:
    """Width of the flattened degree-m signature over d channels.

    Equals sum_{k=1..m} d^k; raises OverflowError if that exceeds what a
    platform index can address.
    """
    if d < 1:
        raise ValueError(f"channel count must be >= 1, got {d}")
    if m < 1:
        raise ValueError(f"truncation degree must be >= 1, got {m}")
    total = 0
    for k in range(1, m + 1):
        total += d**k
        if total > _MAX_INDEX:
            raise OverflowError(f"signature dimension for d={d}, m={m} overflows platform index")
    return total


@dataclass
class WindowSpec:
    """Sliding-window geometry: width w, stride t, truncation degree m.

    Degree is capped at 2; the quadratic-versus-cubic feature growth makes
    degree 3 a different regime and it is rejected up front.
    """

    w: int = 5
    t: int = 1
    m: int = 2

    def __post_init__(self):
        if self.w < 2:
            raise ValueError(f"window width must be >= 2, got {self.w}")
        if self.t < 1:
            raise ValueError(f"window stride must be >= 1, got {self.t}")
        if self.m not in (1, 2):
            raise ValueError(f"truncation degree must be 1 or 2, got {self.m}")

    def dim(self, d: int) -> int:
        return sig_dim(d, self.m)


def window_count(length: int, w: int, t: int) -> int:
    """Number of windows over a length-L sequence: floor((L - w) / t) + 1."""
    if w < 2 or t < 1:
        raise ValueError(f"invalid window geometry w={w}, t={t}")
    if length < w:
        raise ValueError(f"sequence length {length} shorter than window width {w}")
    return (length - w) // t + 1


@dataclass
class TruncatedTensor:
    """Signature levels 1..m as flat arrays; ``levels[k-1]`` has d**k entries.

    The scalar level 0 is always 1 and is kept implicit.
    """

    d: int
    m: int
    levels: list

    def __post_init__(self):
        if len(self.levels) != self.m:
            raise ValueError(f"expected {self.m} levels, got {len(self.levels)}")
        self.levels = [np.asarray(lv, dtype=np.float64).ravel() for lv in self.levels]
        for k, lv in enumerate(self.levels, start=1):
            if lv.size != self.d**k:
                raise ValueError(f"level {k} must have {self.d ** k} entries, got {lv.size}")

    def flat(self) -> np.ndarray:
        """Levels 1..m concatenated, lexicographic within each level."""
        return np.concatenate(self.levels)


def identity_tensor(d: int, m: int) -> TruncatedTensor:
    """Unit of the truncated tensor product (all levels above 0 vanish)."""
    return TruncatedTensor(d, m, [np.zeros(d**k) for k in range(1, m + 1)])


def segment_sig(delta, m: int) -> TruncatedTensor:
    """Signature of a straight segment: truncated tensor exponential of delta."""
    delta = np.asarray(delta, dtype=np.float64).ravel()
    d = delta.size
    if d < 1:
        raise ValueError("segment increment must be non-empty")
    sig_dim(d, m)  # validates m and guards the index range
    levels = []
    acc = delta.copy()
    levels.append(acc)
    for k in range(2, m + 1):
        acc = np.kron(acc, delta)
        levels.append(acc / math.factorial(k))
    return TruncatedTensor(d, m, levels)


def chen_mul(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    """Truncated tensor product: the signature of path a followed by path b."""
    if a.d != b.d or a.m != b.m:
        raise ValueError(f"tensor shape mismatch: ({a.d},{a.m}) vs ({b.d},{b.m})")
    levels = []
    for k in range(1, a.m + 1):
        out = a.levels[k - 1] + b.levels[k - 1]
        for j in range(1, k):
            # level-j part of a times level-(k-j) part of b; np.kron of the
            # flat C-order levels is exactly the lexicographic outer product
            out = out + np.kron(a.levels[j - 1], b.levels[k - j - 1])
        levels.append(out)
    return TruncatedTensor(a.d, a.m, levels)


def _check_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError(f"path must be a 2-D (n, d) array, got shape {pts.shape}")
    if pts.shape[0] < 2:
        raise ValueError(f"path needs at least 2 points, got {pts.shape[0]}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("path contains non-finite coordinates")
    return pts


def path_signature_tensor(points, m: int) -> TruncatedTensor:
    """Left-fold of chen_mul over the per-segment tensor exponentials."""
    pts = _check_points(points)
    diffs = np.diff(pts, axis=0)
    acc = segment_sig(diffs[0], m)
    for k in range(1, diffs.shape[0]):
        acc = chen_mul(acc, segment_sig(diffs[k], m))
    return acc


def path_signature(points, m: int) -> np.ndarray:
    """Flat degree-m signature of a piecewise-linear path, width sig_dim(d, m)."""
    return path_signature_tensor(points, m).flat()


_ORACLE_BUDGET = 1_000_000


def oracle_signature(points, m: int, subdivisions: int = 10_000) -> np.ndarray:
    """Nested-Riemann-sum approximation of the signature (independent oracle).

    Each segment is split into ``subdivisions`` equal micro-steps; each
    iterated integral is a Riemann sum over the refined increments with the
    inner integrand evaluated at the micro-step midpoint, so the error
    vanishes at rate O(1/subdivisions^2) (level 3; levels 1 and 2 are exact
    for piecewise-linear paths at any refinement).  Supports m <= 3 and
    enforces the evaluation budget n * subdivisions <= 1e6.
    """
    pts = _check_points(points)
    if m < 1 or m > 3:
        raise ValueError(f"oracle supports 1 <= m <= 3, got {m}")
    if subdivisions < 1:
        raise ValueError(f"subdivisions must be >= 1, got {subdivisions}")
    n = pts.shape[0]
    if n * subdivisions > _ORACLE_BUDGET:
        raise ValueError(
            f"oracle budget exceeded: n * subdivisions = {n * subdivisions} > {_ORACLE_BUDGET}"
        )
    segs = np.diff(pts, axis=0) / subdivisions
    # micro-increments delta_t, every segment refined uniformly
    delta = np.repeat(segs, subdivisions, axis=0)
    # exclusive running sum: level-1 state just before micro-step t
    a_excl = np.cumsum(delta, axis=0) - delta
    # level-1 state at the midpoint of micro-step t
    a_mid = a_excl + 0.5 * delta
    out = [delta.sum(axis=0)]
    if m >= 2:
        out.append(np.einsum("ti,tj->ij", a_mid, delta).ravel())
    if m >= 3:
        prod = a_mid[:, :, None] * delta[:, None, :]
        # level-2 state just before micro-step t, then advanced to its midpoint
        b_excl = np.cumsum(prod, axis=0) - prod
        b_mid = b_excl + 0.5 * a_excl[:, :, None] * delta[:, None, :] + 0.125 * delta[:, :, None] * delta[:, None, :]
        out.append(np.einsum("tij,tk->ijk", b_mid, delta).ravel())
    return np.concatenate(out)


def sliding_window_signature(seq, spec: WindowSpec) -> WindowedSignature:
    """Degree-m signature of every sliding window of a feature sequence.

    Row j covers steps [j*t, j*t + w); uses the batched kernels, which the
    tests pin against per-window ``path_signature`` calls.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise ValueError(f"sequence must be (L, d), got shape {seq.shape}")
    k = window_count(seq.shape[0], spec.w, spec.t)
    rows = kernels.window_signatures(seq, spec.w, spec.t, spec.m, k)
    return WindowedSignature(rows)
