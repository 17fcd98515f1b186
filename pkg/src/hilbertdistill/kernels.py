"""Hot numeric kernels with numba-compiled and pure-numpy implementations.

Every kernel here has two interchangeable backends:

* a numba ``@njit`` version, used by default when numba imports cleanly;
* a pure-numpy version, selected by setting ``HD_NO_NUMBA=1`` in the
  environment (or automatically when numba is unavailable).

``hilbertdistill bench`` compares the two backends head to head.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


_TRUTHY = ("1", "true", "yes", "on")


def numba_enabled() -> bool:
    """True when the numba backend should be used for kernel dispatch."""
    if not HAS_NUMBA:
        return False
    return os.environ.get("HD_NO_NUMBA", "").lower() not in _TRUTHY


def resolve_impl(impl: str | None) -> str:
    """Normalize an implementation request to 'numba' or 'numpy'."""
    if impl is None or impl == "auto":
        return "numba" if numba_enabled() else "numpy"
    if impl not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel implementation {impl!r}")
    if impl == "numba" and not HAS_NUMBA:
        raise ValueError("numba implementation requested but numba is not installed")
    return impl


# ---------------------------------------------------------------------------
# Curve construction.
#
# The curve of order p is assembled from 2**n transformed copies of the curve
# of order p-1.  Each child block applies a signed axis permutation to the
# lower-order cell coordinates and shifts the result to the child's corner.
# The tables below were derived from the per-point transform and are
# level-independent; tests cross-check them against the walk of the expanded
# guide tokens (n=2) and the per-point transform (n=2 and n=3).
#
# PERM[k][a] = source axis feeding output axis a of child k,
# SIGN[k][a] = +1 to copy, -1 to reflect (s-1-coord),
# CORNER[k][a] = child corner offset in units of the half side s.
# ---------------------------------------------------------------------------

PERM_2D = np.array([[1, 0], [0, 1], [0, 1], [1, 0]], dtype=np.int64)
SIGN_2D = np.array([[1, 1], [1, 1], [1, 1], [-1, -1]], dtype=np.int64)
CORNER_2D = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.int64)

PERM_3D = np.array(
    [[2, 0, 1], [0, 2, 1], [0, 1, 2], [2, 1, 0], [2, 1, 0], [0, 1, 2], [0, 2, 1], [2, 0, 1]],
    dtype=np.int64,
)
SIGN_3D = np.array(
    [[1, 1, 1], [1, 1, 1], [1, 1, 1], [-1, 1, -1], [1, 1, 1], [1, 1, 1], [1, -1, -1], [-1, 1, -1]],
    dtype=np.int64,
)
CORNER_3D = np.array(
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 1, 1], [1, 1, 1], [1, 0, 1], [0, 0, 1]],
    dtype=np.int64,
)


def _tables(n: int):
    if n == 2:
        return PERM_2D, SIGN_2D, CORNER_2D
    if n == 3:
        return PERM_3D, SIGN_3D, CORNER_3D
    raise ValueError(f"unsupported dimension {n}")


def _coord_dtype(p: int):
    # Sides up to 256 fit u8; the doubling pass is memory bound, so the
    # narrower dtype is a measurable win on the big benchmark rows.
    return np.uint8 if p <= 8 else np.uint16


@njit(cache=True)
def _double_level_nb(prev, out, s, perm, sign, corner):
    children, m = perm.shape[0], prev.shape[1]
    for k in range(children):
        base = k * m
        for a in range(perm.shape[1]):
            src = prev[perm[k, a]]
            dst = out[a]
            if sign[k, a] > 0:
                off = corner[k, a] * s
                for t in range(m):
                    dst[base + t] = src[t] + off
            else:
                lim = s - 1 + corner[k, a] * s
                for t in range(m):
                    dst[base + t] = lim - src[t]


def _double_level_np(prev, out, s, perm, sign, corner):
    m = prev.shape[1]
    dt = out.dtype.type
    for k in range(perm.shape[0]):
        blk = slice(k * m, (k + 1) * m)
        for a in range(perm.shape[1]):
            src = prev[perm[k, a]]
            if sign[k, a] > 0:
                np.add(src, dt(corner[k, a] * s), out=out[a, blk])
            else:
                np.subtract(dt(s - 1 + corner[k, a] * s), src, out=out[a, blk])


def curve_axes(n: int, p: int, impl: str | None = None) -> np.ndarray:
    """Cell coordinates of the full order-p curve, one row per axis.

    ``curve_axes(n, p)[a][v]`` is coordinate ``a`` of the cell visited at
    curve index ``v``.  Rows are contiguous and index-ordered, which is the
    layout every consumer (mapping tables, feature gathers) wants.
    """
    if n not in (2, 3):
        raise ValueError(f"unsupported dimension {n}")
    if p < 1:
        raise ValueError(f"order must be >= 1, got {p}")
    impl = resolve_impl(impl)
    perm, sign, corner = _tables(n)
    dt = _coord_dtype(p)
    axes = np.zeros((n, 1), dtype=dt)
    for level in range(1, p + 1):
        s = 1 << (level - 1)
        new = np.empty((n, axes.shape[1] * 2**n), dtype=dt)
        if impl == "numba":
            _double_level_nb(axes, new, s, perm, sign, corner)
        else:
            _double_level_np(axes, new, s, perm, sign, corner)
        axes = new
    return axes


# ---------------------------------------------------------------------------
# Convolution (stride 1, zero padding to keep the spatial extent).
# Used by the training tape; shapes are (batch, channels, *spatial).
# ---------------------------------------------------------------------------


@njit(cache=True)
def _conv2d_fwd_nb(x, w, b):
    B, Ci, H, W = x.shape
    Co, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    y = np.zeros((B, Co, H, W), dtype=x.dtype)
    for bi in range(B):
        for o in range(Co):
            for c in range(Ci):
                for i in range(H):
                    for j in range(W):
                        acc = 0.0
                        for ki in range(kh):
                            ii = i + ki - ph
                            if ii < 0 or ii >= H:
                                continue
                            for kj in range(kw):
                                jj = j + kj - pw
                                if 0 <= jj < W:
                                    acc += w[o, c, ki, kj] * x[bi, c, ii, jj]
                        y[bi, o, i, j] += acc
            for i in range(H):
                for j in range(W):
                    y[bi, o, i, j] += b[o]
    return y


@njit(cache=True)
def _conv2d_bwd_nb(x, w, gy):
    B, Ci, H, W = x.shape
    Co, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    gb = np.zeros_like(w[:, 0, 0, 0])
    for bi in range(B):
        for o in range(Co):
            for i in range(H):
                for j in range(W):
                    g = gy[bi, o, i, j]
                    gb[o] += g
                    for c in range(Ci):
                        for ki in range(kh):
                            ii = i + ki - ph
                            if ii < 0 or ii >= H:
                                continue
                            for kj in range(kw):
                                jj = j + kj - pw
                                if 0 <= jj < W:
                                    gw[o, c, ki, kj] += g * x[bi, c, ii, jj]
                                    gx[bi, c, ii, jj] += g * w[o, c, ki, kj]
    return gx, gw, gb


@njit(cache=True)
def _conv3d_fwd_nb(x, w, b):
    B, Ci, D, H, W = x.shape
    Co, _, kd, kh, kw = w.shape
    pd, ph, pw = kd // 2, kh // 2, kw // 2
    y = np.zeros((B, Co, D, H, W), dtype=x.dtype)
    for bi in range(B):
        for o in range(Co):
            for c in range(Ci):
                for d in range(D):
                    for i in range(H):
                        for j in range(W):
                            acc = 0.0
                            for kdd in range(kd):
                                dd = d + kdd - pd
                                if dd < 0 or dd >= D:
                                    continue
                                for ki in range(kh):
                                    ii = i + ki - ph
                                    if ii < 0 or ii >= H:
                                        continue
                                    for kj in range(kw):
                                        jj = j + kj - pw
                                        if 0 <= jj < W:
                                            acc += w[o, c, kdd, ki, kj] * x[bi, c, dd, ii, jj]
                            y[bi, o, d, i, j] += acc
            for d in range(D):
                for i in range(H):
                    for j in range(W):
                        y[bi, o, d, i, j] += b[o]
    return y


@njit(cache=True)
def _conv3d_bwd_nb(x, w, gy):
    B, Ci, D, H, W = x.shape
    Co, _, kd, kh, kw = w.shape
    pd, ph, pw = kd // 2, kh // 2, kw // 2
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    gb = np.zeros_like(w[:, 0, 0, 0, 0])
    for bi in range(B):
        for o in range(Co):
            for d in range(D):
                for i in range(H):
                    for j in range(W):
                        g = gy[bi, o, d, i, j]
                        gb[o] += g
                        for c in range(Ci):
                            for kdd in range(kd):
                                dd = d + kdd - pd
                                if dd < 0 or dd >= D:
                                    continue
                                for ki in range(kh):
                                    ii = i + ki - ph
                                    if ii < 0 or ii >= H:
                                        continue
                                    for kj in range(kw):
                                        jj = j + kj - pw
                                        if 0 <= jj < W:
                                            gw[o, c, kdd, ki, kj] += g * x[bi, c, dd, ii, jj]
                                            gx[bi, c, dd, ii, jj] += g * w[o, c, kdd, ki, kj]
    return gx, gw, gb


def _pad_spatial(x, pads):
    width = [(0, 0), (0, 0)] + [(q, q) for q in pads]
    return np.pad(x, width)


def _conv_fwd_np(x, w, b):
    ks = w.shape[2:]
    pads = [q // 2 for q in ks]
    sp = x.shape[2:]
    xp = _pad_spatial(x, pads)
    y = np.zeros(x.shape[:1] + w.shape[:1] + sp, dtype=x.dtype)
    for off in np.ndindex(*ks):
        sl = (slice(None), slice(None)) + tuple(
            slice(o, o + e) for o, e in zip(off, sp)
        )
        y += np.einsum("oc,bc...->bo...", w[(slice(None), slice(None)) + off], xp[sl])
    return y + b.reshape((1, -1) + (1,) * len(sp))


def _conv_bwd_np(x, w, gy):
    ks = w.shape[2:]
    pads = [q // 2 for q in ks]
    sp = x.shape[2:]
    xp = _pad_spatial(x, pads)
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    sum_axes = (0,) + tuple(range(2, x.ndim))
    for off in np.ndindex(*ks):
        sl = (slice(None), slice(None)) + tuple(
            slice(o, o + e) for o, e in zip(off, sp)
        )
        woff = (slice(None), slice(None)) + off
        gw[woff] = np.tensordot(gy, xp[sl], axes=(sum_axes, sum_axes))
        gxp[sl] += np.einsum("oc,bo...->bc...", w[woff], gy)
    core = (slice(None), slice(None)) + tuple(
        slice(q, q + e) for q, e in zip(pads, sp)
    )
    gb = gy.sum(axis=tuple(i for i in range(gy.ndim) if i != 1))
    return gxp[core], gw, gb


def conv_forward(x, w, b, impl: str | None = None):
    """Same-padded stride-1 convolution over 2 or 3 spatial axes."""
    impl = resolve_impl(impl)
    if impl == "numba":
        if x.ndim == 4:
            return _conv2d_fwd_nb(x, w, b)
        return _conv3d_fwd_nb(x, w, b)
    return _conv_fwd_np(x, w, b)


def conv_backward(x, w, gy, impl: str | None = None):
    """Gradients of conv_forward with respect to input, weights, bias."""
    impl = resolve_impl(impl)
    if impl == "numba":
        if x.ndim == 4:
            return _conv2d_bwd_nb(x, w, gy)
        return _conv3d_bwd_nb(x, w, gy)
    return _conv_bwd_np(x, w, gy)


def warmup():
    """Compile the numba kernels on tiny inputs so later timings are clean."""
    if not numba_enabled():
        return
    curve_axes(2, 1, impl="numba")
    curve_axes(3, 1, impl="numba")
    x2 = np.zeros((1, 1, 2, 2))
    w2 = np.zeros((1, 1, 3, 3))
    conv_backward(x2, w2, conv_forward(x2, w2, np.zeros(1), "numba"), "numba")
    x3 = np.zeros((1, 1, 2, 2, 2))
    w3 = np.zeros((1, 1, 3, 3, 3))
    conv_backward(x3, w3, conv_forward(x3, w3, np.zeros(1), "numba"), "numba")
