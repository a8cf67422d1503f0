"""Closed-form proximal operators used by the training loop.

All operators return new arrays and never mutate their input.  They are
applied to weight matrices only; bias vectors are never regularized.
"""
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ProxDomainError


@dataclass(frozen=True)
class ProxStep:
    """Prox step size ``beta`` and transformed-l1 shape ``a``.

    In the training loop ``beta`` is lambda * lr * mu_l for the
    transformed-l1 prox; ``a`` must be strictly positive.
    """

    beta: float
    a: float = 1.0

    def __post_init__(self):
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError(f"a must be finite and > 0, got {self.a}")


class GroupScheme(str, enum.Enum):
    DENSE_ROWS = "dense_rows"
    CONV_FILTERS = "conv_filters"
    CUSTOM = "custom"


@dataclass(frozen=True)
class GroupPartition:
    """Disjoint groups of entries of one weight matrix.

    ``DENSE_ROWS`` puts each row of a (fan_in, fan_out) matrix in its own
    group, i.e. the outgoing connections of one input unit.
    ``CONV_FILTERS`` puts each column of a (k*k*c_in, filters) matrix in
    its own group, i.e. every weight of one filter.  ``CUSTOM`` partitions
    come from :meth:`from_groups`.
    """

    scheme: GroupScheme
    shape: tuple
    _groups: tuple = field(default=None, repr=False, compare=False)

    @classmethod
    def dense_rows(cls, shape):
        return cls(GroupScheme.DENSE_ROWS, tuple(shape))

    @classmethod
    def conv_filters(cls, shape):
        return cls(GroupScheme.CONV_FILTERS, tuple(shape))

    @classmethod
    def from_groups(cls, groups, shape):
        """Build a partition from flat index sets; they must be nonempty,
        disjoint and cover every entry."""
        shape = tuple(shape)
        size = int(np.prod(shape))
        seen = np.zeros(size, dtype=bool)
        frozen = []
        for gi, g in enumerate(groups):
            idx = np.asarray(sorted(g), dtype=np.intp)
            if idx.size == 0:
                raise ValueError(f"group {gi} is empty")
            if idx[0] < 0 or idx[-1] >= size:
                raise ValueError(f"group {gi} has an index outside [0, {size})")
            if np.any(seen[idx]) or np.unique(idx).size != idx.size:
                raise ValueError(f"group {gi} overlaps another group")
            seen[idx] = True
            frozen.append(idx)
        if not seen.all():
            raise ValueError(f"groups leave {int((~seen).sum())} entries uncovered")
        return cls(GroupScheme.CUSTOM, shape, tuple(frozen))

    @property
    def groups(self):
        """Flat index arrays, one per group."""
        if self._groups is not None:
            return list(self._groups)
        idx = np.arange(int(np.prod(self.shape))).reshape(self.shape)
        if self.scheme is GroupScheme.DENSE_ROWS:
            return [row.copy() for row in idx]
        return [col.copy() for col in idx.T]


def tl1_threshold(step):
    """Magnitude at or below which the transformed-l1 prox returns zero."""
    beta, a = step.beta, step.a
    if beta == 0:
        return 0.0
    if beta <= a * a / (2.0 * (a + 1.0)):
        return beta * (a + 1.0) / a
    return math.sqrt(2.0 * beta * (a + 1.0)) - a / 2.0


def _raise_domain(w, flat_index, step):
    loc = np.unravel_index(flat_index, np.shape(w)) if np.ndim(w) else ()
    wv = float(np.asarray(w).reshape(-1)[flat_index])
    where = f" at {tuple(int(i) for i in loc)}" if loc else ""
    raise ProxDomainError(
        f"transformed-l1 prox: arccos argument out of [-1, 1]{where} "
        f"(w={wv!r}, beta={step.beta!r}, a={step.a!r})"
    )


def tl1_prox_scalar(w, step):
    """Minimizer of (x - w)^2 / (2 beta) + (a+1)|x| / (a+|x|)."""
    w = float(w)
    if not math.isfinite(w):
        raise ValueError(f"w must be finite, got {w}")
    if step.beta == 0:
        return w
    out, bad = _kernels.tl1_prox_array(np.array([w]), step.beta, step.a, tl1_threshold(step))
    if bad >= 0:
        _raise_domain(np.array(w), bad, step)
    return float(out[0])


def tl1_prox_matrix(W, step):
    """Elementwise transformed-l1 prox of a weight array (any shape)."""
    W = np.asarray(W, dtype=np.float64)
    if not np.all(np.isfinite(W)):
        raise ValueError("tl1_prox_matrix: non-finite weight")
    if step.beta == 0:
        return W.copy()
    out, bad = _kernels.tl1_prox_array(W, step.beta, step.a, tl1_threshold(step))
    if bad >= 0:
        _raise_domain(W, bad, step)
    return out


def group_prox(W, partition, beta_group):
    """Block soft-thresholding: scale each group by (1 - beta/||W_g||)_+."""
    W = np.asarray(W, dtype=np.float64)
    if W.shape != partition.shape:
        raise ValueError(f"partition shape {partition.shape} does not match weights {W.shape}")
    if beta_group < 0:
        raise ValueError(f"beta_group must be >= 0, got {beta_group}")
    if beta_group == 0:
        return W.copy()
    if partition.scheme is GroupScheme.CUSTOM:
        flat = W.reshape(-1)
        out = np.zeros_like(flat)
        for idx in partition.groups:
            wg = flat[idx]
            norm = np.sqrt(np.dot(wg, wg))
            if norm > beta_group:
                out[idx] = (1.0 - beta_group / norm) * wg
        return out.reshape(W.shape)
    axis = 1 if partition.scheme is GroupScheme.DENSE_ROWS else 0
    norms = np.sqrt(np.sum(W * W, axis=axis, keepdims=True))
    scale = np.zeros_like(norms)
    keep = norms > beta_group
    scale[keep] = 1.0 - beta_group / norms[keep]
    return W * scale


def l1_prox(W, beta):
    """Soft thresholding sgn(w) * max(0, |w| - beta)."""
    W = np.asarray(W, dtype=np.float64)
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if beta == 0:
        return W.copy()
    return np.sign(W) * np.maximum(np.abs(W) - beta, 0.0)


def integrated_prox(W, partition, lam, gamma, mu_l, a):
    """Transformed-l1 prox with lam*gamma*mu_l, then group prox with
    lam*gamma*(1 - mu_l), in that order."""
    if not 0.0 <= mu_l <= 1.0:
        raise ValueError(f"mu_l must lie in [0, 1], got {mu_l}")
    if lam < 0 or gamma < 0:
        raise ValueError("lambda and gamma must be >= 0")
    W = tl1_prox_matrix(W, ProxStep(lam * gamma * mu_l, a))
    return group_prox(W, partition, lam * gamma * (1.0 - mu_l))
