"""Value functions of the sparsity penalties, plus 2-D grids for contour plots.

Every scalar penalty is even, vanishes at zero and is non-decreasing in |x|.
Vector values are separable sums except for ``Lp`` (a quasi-norm) and
``L1MinusL2``.
"""
import enum
import math
from dataclasses import dataclass

import numpy as np


class PenaltyKind(str, enum.Enum):
    L0 = "l0"
    L1 = "l1"
    L2 = "l2"
    SCAD = "scad"
    MCP = "mcp"
    LOG = "log"
    CAPPED_L1 = "capped_l1"
    LP = "lp"
    L1_MINUS_L2 = "l1_minus_l2"
    TL1 = "tl1"


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty kind and shape parameters.

    ``a`` is the transformed-l1 shape and the capped-l1 cap. ``lambda_scad``
    is the inner threshold of SCAD and MCP; it is unrelated to the training
    regularization weight. ``gamma`` is the SCAD (>2), MCP (>1) or log (>0)
    concavity parameter. Parameters irrelevant to ``kind`` are ignored.
    """

    kind: PenaltyKind
    a: float = 1.0
    lambda_scad: float = 1.0
    gamma: float = 3.7
    p: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", PenaltyKind(self.kind))
        k = self.kind
        if k in (PenaltyKind.TL1, PenaltyKind.CAPPED_L1) and not self.a > 0:
            raise ValueError(f"{k.value}: a must be > 0, got {self.a}")
        if k in (PenaltyKind.SCAD, PenaltyKind.MCP) and not self.lambda_scad > 0:
            raise ValueError(f"{k.value}: lambda_scad must be > 0, got {self.lambda_scad}")
        if k is PenaltyKind.SCAD and not self.gamma > 2:
            raise ValueError(f"scad: gamma must be > 2, got {self.gamma}")
        if k is PenaltyKind.MCP and not self.gamma > 1:
            raise ValueError(f"mcp: gamma must be > 1, got {self.gamma}")
        if k is PenaltyKind.LOG and not self.gamma > 0:
            raise ValueError(f"log: gamma must be > 0, got {self.gamma}")
        if k is PenaltyKind.LP and not 0 < self.p < 1:
            raise ValueError(f"lp: p must lie in (0, 1), got {self.p}")


def _elementwise(spec, absx):
    """Per-coordinate penalty of ``|x|`` (array in, array out)."""
    k = spec.kind
    if k is PenaltyKind.L0:
        return (absx != 0).astype(np.float64)
    if k is PenaltyKind.L1:
        return absx
    if k is PenaltyKind.L2:
        return 0.5 * absx * absx
    if k is PenaltyKind.TL1:
        a = spec.a
        return (a + 1.0) * absx / (a + absx)
    if k is PenaltyKind.CAPPED_L1:
        return np.minimum(absx, spec.a)
    if k is PenaltyKind.LOG:
        g = spec.gamma
        return np.log1p(g * absx) / math.log1p(g)
    if k is PenaltyKind.LP:
        return absx**spec.p
    if k is PenaltyKind.L1_MINUS_L2:
        # a single coordinate has equal l1 and l2 norms
        return np.zeros_like(absx)
    lam, g = spec.lambda_scad, spec.gamma
    if k is PenaltyKind.SCAD:
        mid = (2.0 * g * lam * absx - absx * absx - lam * lam) / (2.0 * (g - 1.0))
        return np.where(
            absx <= lam,
            lam * absx,
            np.where(absx < g * lam, mid, lam * lam * (g + 1.0) / 2.0),
        )
    if k is PenaltyKind.MCP:
        return np.where(absx <= g * lam, lam * absx - absx * absx / (2.0 * g), g * lam * lam / 2.0)
    raise AssertionError(k)  # pragma: no cover


def penalty_value(spec, x):
    """Scalar penalty of a single real ``x``."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"penalty_value: x must be finite, got {x}")
    return float(_elementwise(spec, np.abs(np.float64(x))))


def penalty_value_vector(spec, x):
    """Penalty of a vector.

    Separable kinds sum the scalar values; ``Lp`` returns
    ``(sum |x_i|^p)^(1/p)`` and ``L1MinusL2`` returns ``||x||_1 - ||x||_2``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("penalty_value_vector: empty input")
    if not np.all(np.isfinite(x)):
        raise ValueError("penalty_value_vector: non-finite entry")
    absx = np.abs(x)
    if spec.kind is PenaltyKind.LP:
        return float(np.sum(absx**spec.p) ** (1.0 / spec.p))
    if spec.kind is PenaltyKind.L1_MINUS_L2:
        # clamp rounding so the result stays nonnegative
        return max(0.0, float(np.sum(absx) - np.sqrt(np.sum(absx * absx))))
    return float(np.sum(_elementwise(spec, absx)))


def _grid_values(spec, x1, x2):
    """Vectorised ``penalty_value_vector`` over stacked pairs."""
    a1, a2 = np.abs(x1), np.abs(x2)
    if spec.kind is PenaltyKind.LP:
        return (a1**spec.p + a2**spec.p) ** (1.0 / spec.p)
    if spec.kind is PenaltyKind.L1_MINUS_L2:
        return np.maximum(0.0, (a1 + a2) - np.hypot(a1, a2))
    return _elementwise(spec, a1) + _elementwise(spec, a2)


def contour_grid(spec, half_width, resolution):
    """Penalty of (x1, x2) over the square [-half_width, half_width]^2.

    Returns ``(axis, values)`` with ``values[i, j]`` the penalty at
    ``(axis[i], axis[j])``; flattening ``values`` in C order gives the
    row-major, x2-fastest emission order.
    """
    if not half_width > 0:
        raise ValueError(f"half_width must be > 0, got {half_width}")
    if int(resolution) != resolution or resolution < 2:
        raise ValueError(f"resolution must be an integer >= 2, got {resolution}")
    axis = np.linspace(-half_width, half_width, int(resolution))
    # exact antisymmetry of the sample points keeps the grid symmetric
    axis = 0.5 * (axis - axis[::-1])
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    return axis, _grid_values(spec, x1, x2)


def write_contour_csv(path, axis, values):
    """Write a grid as ``x1,x2,value`` rows with 9 significant digits."""
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    with open(path, "w", newline="\n") as fh:
        fh.write("x1,x2,value\n")
        for u, v, z in zip(x1.ravel(), x2.ravel(), values.ravel()):
            fh.write(f"{_fmt(u)},{_fmt(v)},{_fmt(z)}\n")


def _fmt(v):
    s = f"{float(v):.9g}"
    return "0" if s == "-0" else s
