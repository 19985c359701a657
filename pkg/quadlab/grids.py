"""Finite differences on uniform grids.

All stencils are central in the interior. Order 2 falls back to one-sided
second-order stencils at the boundary (`numpy.gradient(edge_order=2)`); order 4
uses the 5-point stencil wherever it fits and order 2 on the outer two layers.
Boundary values are therefore less accurate: residual statistics should be taken
over `interior(...)` nodes only.
"""

from typing import Any, Sequence, Tuple

import numpy as np

from . import errors

Array = Any


def _check(f: Array, axis: int, order: int) -> None:
    if order not in (2, 4):
        raise ValueError(f"Finite-difference order must be 2 or 4, got {order}")
    if f.shape[axis] < 3:
        raise errors.GridTooCoarse(
            f"Need >= 3 nodes along axis {axis} for differences, got {f.shape[axis]}"
        )


def derivative(f: Array, h: float, axis: int = 0, order: int = 2) -> Array:
    """First derivative of samples `f` with spacing `h` along `axis`."""
    f = np.asarray(f, dtype=float)
    _check(f, axis, order)
    df = np.gradient(f, h, axis=axis, edge_order=2)
    if order == 4 and f.shape[axis] >= 5:
        g = np.moveaxis(f, axis, 0)
        dg = np.moveaxis(df, axis, 0)
        dg[2:-2] = (-g[4:] + 8 * g[3:-1] - 8 * g[1:-3] + g[:-4]) / (12 * h)
    return df


def second_derivative(f: Array, h: float, axis: int = 0, order: int = 2) -> Array:
    """Second derivative along `axis` (central 3- or 5-point stencil)."""
    f = np.asarray(f, dtype=float)
    _check(f, axis, order)
    g = np.moveaxis(f, axis, 0)
    d2 = np.empty_like(g)
    d2[1:-1] = (g[2:] - 2 * g[1:-1] + g[:-2]) / h ** 2
    d2[0] = (2 * g[0] - 5 * g[1] + 4 * g[2] - g[3]) / h ** 2 if len(g) >= 4 else d2[1]
    d2[-1] = (
        (2 * g[-1] - 5 * g[-2] + 4 * g[-3] - g[-4]) / h ** 2 if len(g) >= 4 else d2[-2]
    )
    if order == 4 and len(g) >= 5:
        d2[2:-2] = (
            -g[4:] + 16 * g[3:-1] - 30 * g[2:-2] + 16 * g[1:-3] - g[:-4]
        ) / (12 * h ** 2)
    return np.moveaxis(d2, 0, axis)


def mixed_derivative(
    f: Array, h0: float, h1: float, axes: Tuple[int, int] = (0, 1), order: int = 2
) -> Array:
    """Mixed second derivative, by composing first derivatives."""
    return derivative(derivative(f, h0, axes[0], order), h1, axes[1], order)


def spacing(values: Sequence[float]) -> float:
    """Uniform spacing of a 1-D grid axis."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        raise errors.GridTooCoarse(f"Grid axis needs >= 2 nodes, got {len(values)}")
    steps = np.diff(values)
    h = float(steps.mean())
    if not np.allclose(steps, h, rtol=1e-9, atol=0):
        raise ValueError("Grid axis is not uniformly spaced")
    return h


def margin(order: int) -> int:
    """Boundary layers affected by one-sided stencils for a given order."""
    return 1 if order == 2 else 2


def interior(f: Array, width: int = 1, ndim: int = 2) -> Array:
    """Strip `width` boundary layers from the first `ndim` axes."""
    index = tuple(slice(width, -width) for _ in range(ndim))
    return np.asarray(f)[index]


def coarsen(f: Array, ndim: int = 2) -> Array:
    """Every other node of a refined grid (the nodes shared with the coarse grid)."""
    index = tuple(slice(None, None, 2) for _ in range(ndim))
    return np.asarray(f)[index]


def convergence_order(coarse: float, fine: float, ratio: float = 2.0) -> float:
    """Observed order p from errors on grids with spacing h and h/ratio."""
    return float(np.log(coarse / fine) / np.log(ratio))


def relative(residual: Array, scale: Array, floor: float = 1e-300) -> Array:
    """`residual / scale`, guarding zero scales."""
    return np.asarray(residual) / np.maximum(np.abs(scale), floor)


def shared_maxima(
    coarse: Array, fine: Array, width: int = 1, ndim: int = 2
) -> Tuple[float, float]:
    """Max of two residual fields over the interior nodes both grids share.

    `fine` lives on the grid refined by halving (2n - 1 nodes per axis), so its
    maximum is not taken nearer the boundary than the coarse one.
    """
    coarse = np.asarray(coarse)
    fine = coarsen(fine, ndim)
    if fine.shape[:ndim] != coarse.shape[:ndim]:
        raise ValueError(f"Grids {coarse.shape} and {fine.shape} are not nested")
    return (
        float(interior(coarse, width, ndim).max()),
        float(interior(fine, width, ndim).max()),
    )
