"""Brute-force scalar minimizer used to check the closed-form prox.

Nothing here touches the closed form: the objective is sampled on a dense
grid, every grid-local minimum is refined by golden-section search, and
the best refined point wins.  x = 0 is always kept as a candidate since
the penalty has a kink there.
"""
import math

import numpy as np

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def tl1_objective(x, w, beta, a):
    """(x - w)^2 / (2 beta) + (a+1)|x| / (a+|x|)."""
    ax = np.abs(x)
    return (x - w) ** 2 / (2.0 * beta) + (a + 1.0) * ax / (a + ax)


def golden_section(f, lo, hi, tol=1e-13, max_iter=200):
    """Minimize a unimodal ``f`` on [lo, hi]; returns the best point seen."""
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if hi - lo <= tol * max(1.0, abs(lo) + abs(hi)):
            break
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
    cands = [(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)]
    return min(cands)[1]


def brute_force_tl1_prox(w, beta, a, points=4001):
    """Global minimizer of :func:`tl1_objective` by grid + refinement."""
    w, beta, a = float(w), float(beta), float(a)
    if beta == 0:
        return w
    half = abs(w) + 1.0
    grid = np.linspace(-half, half, points)
    vals = tl1_objective(grid, w, beta, a)
    # interior local minima of the sampled objective, plus the endpoints
    interior = np.flatnonzero((vals[1:-1] <= vals[:-2]) & (vals[1:-1] <= vals[2:])) + 1
    cells = set(int(i) for i in interior) | {0, points - 1}

    def f(x):
        return float(tl1_objective(x, w, beta, a))

    best_x, best_f = 0.0, f(0.0)
    for i in sorted(cells):
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, points - 1)]
        x = golden_section(f, lo, hi)
        fx = f(x)
        if fx < best_f:
            best_x, best_f = x, fx
    return best_x


def sample_triples(samples, seed, a_values=(1e-2, 1e-1, 1.0, 10.0, 1e2)):
    """Seeded (w, beta, a) triples: w ~ U[-5, 5], beta ~ U(0, 2], a from a_values."""
    rng = np.random.default_rng(seed)
    w = rng.uniform(-5.0, 5.0, samples)
    # 1 - U[0, 1) lies in (0, 1]
    beta = 2.0 * (1.0 - rng.random(samples))
    a = np.asarray(a_values, dtype=np.float64)[rng.integers(0, len(a_values), samples)]
    return w, beta, a
