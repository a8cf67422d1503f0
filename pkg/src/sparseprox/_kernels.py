"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba versions are used when numba imports cleanly and the environment
variable ``SPARSEPROX_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are
always importable so the benchmark and the cross-backend tests can call
either one directly.

Kernels
-------
tl1_prox_array(w, beta, a, t)   elementwise transformed-l1 prox
im2col(x, k)                    (N, H, W, C) -> (N, Ho, Wo, k*k*C) patches
col2im(cols, shape, k)          adjoint of im2col, accumulating overlaps
"""
import os

import numpy as np

# Largest |arccos argument| overshoot absorbed silently; beyond it the
# (beta, a, w) combination is outside the closed form's validity.
ARCCOS_CLAMP_TOL = 1e-9

_DISABLED = os.environ.get("SPARSEPROX_DISABLE_NUMBA", "0").strip().lower() not in (
    "",
    "0",
    "false",
    "no",
)

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _DISABLED


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------


def tl1_prox_array_numpy(w, beta, a, t):
    """Return ``(out, bad)`` where ``bad`` is the flat index of the first
    entry whose arccos argument overshoots [-1, 1] by more than
    ``ARCCOS_CLAMP_TOL`` (``-1`` when none)."""
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros_like(w)
    absw = np.abs(w)
    live = absw > t
    if not np.any(live):
        return out, -1
    aw = absw[live]
    apw = a + aw
    arg = 1.0 - 27.0 * beta * a * (a + 1.0) / (2.0 * apw * apw * apw)
    over = np.abs(arg) - 1.0 > ARCCOS_CLAMP_TOL
    if np.any(over):
        flat_live = np.flatnonzero(live)
        return out, int(flat_live[np.argmax(over)])
    phi = np.arccos(np.clip(arg, -1.0, 1.0))
    mag = 2.0 * apw * np.cos(phi / 3.0) / 3.0 - 2.0 * a / 3.0 + aw / 3.0
    out[live] = np.sign(w[live]) * mag
    return out, -1


def im2col_numpy(x, k):
    n, h, w, c = x.shape
    ho, wo = h - k + 1, w - k + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    # win: (n, ho, wo, c, k, k) -> (n, ho, wo, k, k, c)
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n, ho, wo, k * k * c)


def col2im_numpy(cols, shape, k):
    n, h, w, c = shape
    ho, wo = h - k + 1, w - k + 1
    patches = cols.reshape(n, ho, wo, k, k, c)
    out = np.zeros(shape, dtype=np.float64)
    for di in range(k):
        for dj in range(k):
            out[:, di : di + ho, dj : dj + wo, :] += patches[:, :, :, di, dj, :]
    return out


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAS_NUMBA:

    @numba.njit(cache=True)
    def _tl1_prox_flat_numba(w, beta, a, t, out):
        for i in range(w.size):
            wi = w[i]
            aw = abs(wi)
            if aw <= t:
                out[i] = 0.0
                continue
            apw = a + aw
            arg = 1.0 - 27.0 * beta * a * (a + 1.0) / (2.0 * apw * apw * apw)
            if abs(arg) - 1.0 > ARCCOS_CLAMP_TOL:
                return i
            if arg > 1.0:
                arg = 1.0
            elif arg < -1.0:
                arg = -1.0
            phi = np.arccos(arg)
            mag = 2.0 * apw * np.cos(phi / 3.0) / 3.0 - 2.0 * a / 3.0 + aw / 3.0
            out[i] = mag if wi > 0 else -mag
        return -1

    @numba.njit(cache=True)
    def _im2col_numba(x, k):
        n, h, w, c = x.shape
        ho, wo = h - k + 1, w - k + 1
        out = np.empty((n, ho, wo, k * k * c), dtype=np.float64)
        for b in range(n):
            for i in range(ho):
                for j in range(wo):
                    col = 0
                    for di in range(k):
                        for dj in range(k):
                            for ch in range(c):
                                out[b, i, j, col] = x[b, i + di, j + dj, ch]
                                col += 1
        return out

    @numba.njit(cache=True)
    def _col2im_numba(cols, n, h, w, c, k):
        ho, wo = h - k + 1, w - k + 1
        out = np.zeros((n, h, w, c), dtype=np.float64)
        # offset-major loop keeps the accumulation order of col2im_numpy
        for di in range(k):
            for dj in range(k):
                base = (di * k + dj) * c
                for b in range(n):
                    for i in range(ho):
                        for j in range(wo):
                            for ch in range(c):
                                out[b, i + di, j + dj, ch] += cols[b, i, j, base + ch]
        return out

    def tl1_prox_array_numba(w, beta, a, t):
        w = np.ascontiguousarray(w, dtype=np.float64)
        out = np.zeros_like(w)
        bad = _tl1_prox_flat_numba(w.reshape(-1), float(beta), float(a), float(t), out.reshape(-1))
        return out, int(bad)

    def im2col_numba(x, k):
        return _im2col_numba(np.ascontiguousarray(x, dtype=np.float64), int(k))

    def col2im_numba(cols, shape, k):
        n, h, w, c = shape
        return _col2im_numba(np.ascontiguousarray(cols, dtype=np.float64), n, h, w, c, int(k))

else:  # pragma: no cover
    tl1_prox_array_numba = tl1_prox_array_numpy
    im2col_numba = im2col_numpy
    col2im_numba = col2im_numpy


BACKENDS = {
    "numpy": {
        "tl1_prox_array": tl1_prox_array_numpy,
        "im2col": im2col_numpy,
        "col2im": col2im_numpy,
    },
    "numba": {
        "tl1_prox_array": tl1_prox_array_numba,
        "im2col": im2col_numba,
        "col2im": col2im_numba,
    },
}

BACKEND = "numba" if USE_NUMBA else "numpy"

tl1_prox_array = BACKENDS[BACKEND]["tl1_prox_array"]
im2col = BACKENDS[BACKEND]["im2col"]
col2im = BACKENDS[BACKEND]["col2im"]
