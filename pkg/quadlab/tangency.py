"""Tangency configuration: the m fields, the Delta quantities and their identities.

Points p0 = (u0, v0) on x_0 and p1 = (u1, v1) on x_z are in tangency configuration
(TC) when x_z(p1) lies in the tangent plane of x_0 at p0. Writing V01 = x_z(p1) -
x_0(p0) and w, w~ for the polynomial ruling directions B x_u, B x_v:

    m  = w_z(p1) x V01          m' = w~_z(p1) x V01
    D- = -m . w_0(p0)           D+ = m . w~_0(p0)
    D'- = -m' . w_0(p0)         D'+ = m' . w~_0(p0)

`m` depends on v1 only (quadratically), which is what makes the Ricatti equation
of the Backlund transformation closed in v1.
"""

import dataclasses
from typing import Any, Tuple

import numpy as np

from . import errors, grids
from .config import DEFAULT, Tolerances
from .quadric_core import (
    ConfocalFamily,
    Params,
    b_factor,
    evaluate,
    normal_hat,
    ruling_base_point,
    ruling_directions,
    tangent_plane,
    tc_residual,
    tc_solve_u1,
    unit,
)

Array = Any


def area_constant(family: ConfocalFamily) -> float:
    """Positive A with A^2 = -a1 a2 a3 (central) or -a1 a2 (paraboloid)."""
    return float(np.sqrt(-np.prod(family.a)))


def signed_area_constant(family: ConfocalFamily) -> float:
    """Orientation-aware A_s, so that x_u x x_v = -(2 A_s / B) N on x_0."""
    sign = 1.0 if family.is_central else -1.0
    return sign * area_constant(family)


def gauss_curvature(family: ConfocalFamily, p: Params) -> float:
    """K(x_0) = -1 / (A^2 |N_0|^4) at ruling parameters p."""
    x = evaluate(family, 0.0, *p)
    n = normal_hat(family, 0.0, x, check=False)
    return float(-1.0 / (area_constant(family) ** 2 * np.dot(n, n) ** 2))


def n_factor(family: ConfocalFamily, p: Params) -> float:
    """Normalization N(p) = 1 / (A_s B |N_0|^2) of the unit normal on x_0."""
    x = evaluate(family, 0.0, *p)
    n = normal_hat(family, 0.0, x, check=False)
    return float(
        1.0 / (signed_area_constant(family) * float(b_factor(family, *p)) * (n @ n))
    )


def m_closed_form(family: ConfocalFamily, z: float, p0: Params, v1: Array) -> Array:
    """m as a function of v1 alone: w_z(v1) x (point on the v1-ruling - x_0(p0))."""
    v1 = np.asarray(v1, dtype=float)
    x0 = evaluate(family, 0.0, *p0)
    w, _ = ruling_directions(family, z, 0.0, v1)
    return np.cross(w, ruling_base_point(family, z, v1) - x0)


def m_coefficients(family: ConfocalFamily, z: float, p0: Params) -> Array:
    """Rows (m_0, m_1, m_2) with m(v1) = m_0 + m_1 v1 + m_2 v1^2 exactly."""
    minus, zero, plus = m_closed_form(family, z, p0, np.array([-1.0, 0.0, 1.0]))
    return np.stack([zero, (plus - minus) / 2, (plus + minus) / 2 - zero])


def dm_dv1(family: ConfocalFamily, z: float, p0: Params, v1: float) -> Array:
    """Analytic derivative of m in v1, from the quadratic coefficients."""
    coefficients = m_coefficients(family, z, p0)
    return coefficients[1] + 2 * v1 * coefficients[2]


def m_field(
    family: ConfocalFamily,
    z: float,
    p0: Params,
    v1: float,
    tol: Tolerances = DEFAULT,
) -> Tuple[Array, Array, float]:
    """(m, m', u1) for p0 and the TC partner on the v1-ruling of x_z."""
    u1 = tc_solve_u1(family, z, p0, v1, tol)
    v01 = evaluate(family, z, u1, v1) - evaluate(family, 0.0, *p0)
    wu, wv = ruling_directions(family, z, u1, v1)
    return np.cross(wu, v01), np.cross(wv, v01), u1


def delta_pair(
    family: ConfocalFamily, z: float, p0: Params, v1: Array
) -> Tuple[Array, Array]:
    """(D-, D+) from the closed form of m; broadcasts over v1, needs no u1."""
    m = m_closed_form(family, z, p0, v1)
    wu, wv = ruling_directions(family, 0.0, *p0)
    return -m @ wu, m @ wv


@dataclasses.dataclass(frozen=True)
class TCState:
    """Everything the tangency identities need at one TC pair."""

    z: float
    p0: Tuple[float, float]
    p1: Tuple[float, float]
    m: Array
    m_prime: Array
    delta_minus: float
    delta_plus: float
    delta_prime_minus: float
    delta_prime_plus: float
    n0: float
    n1: float
    area: float

    @property
    def deltas(self) -> Array:
        """(D-, D+, D'-, D'+)."""
        return np.array(
            [
                self.delta_minus,
                self.delta_plus,
                self.delta_prime_minus,
                self.delta_prime_plus,
            ]
        )


def check_tangency(
    family: ConfocalFamily,
    z: float,
    p0: Params,
    p1: Params,
    tol: Tolerances = DEFAULT,
) -> None:
    """Raise NotInTangency if p1 on x_z is not in the tangent plane at p0."""
    x0, n0 = tangent_plane(family, p0)
    scale = np.linalg.norm(n0) * max(1.0, float(np.linalg.norm(x0)))
    residual = abs(tc_residual(family, z, p0, p1)) / scale
    if residual > tol.tangency:
        raise errors.NotInTangency(
            f"p0={tuple(p0)}, p1={tuple(p1)} at z={z}: TC residual {residual:.3g}"
        )


def deltas(
    family: ConfocalFamily,
    z: float,
    p0: Params,
    p1: Params,
    tol: Tolerances = DEFAULT,
) -> TCState:
    """TC state of p0 on x_0 and p1 on x_z, from the definitions."""
    check_tangency(family, z, p0, p1, tol)
    v01 = evaluate(family, z, *p1) - evaluate(family, 0.0, *p0)
    wu1, wv1 = ruling_directions(family, z, *p1)
    m, m_prime = np.cross(wu1, v01), np.cross(wv1, v01)
    wu0, wv0 = ruling_directions(family, 0.0, *p0)
    return TCState(
        z=float(z),
        p0=(float(p0[0]), float(p0[1])),
        p1=(float(p1[0]), float(p1[1])),
        m=m,
        m_prime=m_prime,
        delta_minus=float(-m @ wu0),
        delta_plus=float(m @ wv0),
        delta_prime_minus=float(-m_prime @ wu0),
        delta_prime_plus=float(m_prime @ wv0),
        n0=n_factor(family, p0),
        n1=n_factor(family, p1),
        area=area_constant(family),
    )


def product_identity_residual(state: TCState) -> float:
    """Relative gap of D- D'+ = z^2 / (N0 N1) = D+ D'-."""
    target = state.z ** 2 / (state.n0 * state.n1)
    gaps = [
        state.delta_minus * state.delta_prime_plus - target,
        state.delta_plus * state.delta_prime_minus - target,
    ]
    return float(max(abs(g) for g in gaps) / abs(target))


def exchange_residual(
    family: ConfocalFamily, z: float, p0: Params, p1: Params, tol: Tolerances = DEFAULT
) -> float:
    """Relative gap of the exchange symmetry p0 <-> p1.

    Swapping the roles maps (D-, D+, D'-, D'+) to (D-, D'-, D+, D'+).
    """
    forward = deltas(family, z, p0, p1, tol).deltas
    backward = deltas(family, z, p1, p0, tol).deltas
    return float(
        np.abs(backward - forward[[0, 2, 1, 3]]).max() / np.abs(forward).max()
    )


def reflection_residual(
    family: ConfocalFamily, z: float, p0: Params, v1: float
) -> float:
    """x_zv(p1) is orthogonal to m reflected in the tangent plane at p0 (relative)."""
    m, _, u1 = m_field(family, z, p0, v1)
    _, normal = tangent_plane(family, p0)
    normal = unit(normal)
    reflected = m - 2 * (normal @ m) * normal
    _, wv = ruling_directions(family, z, u1, v1)
    return float(abs(wv @ reflected) / (np.linalg.norm(wv) * np.linalg.norm(m)))


def projection_residual(
    family: ConfocalFamily, z: float, p0: Params, v1: float
) -> float:
    """Relative gap of B1 (x_zu . N)(N . x_zv) = -z, N the unit normal at p0."""
    u1 = tc_solve_u1(family, z, p0, v1)
    _, normal = tangent_plane(family, p0)
    normal = unit(normal)
    wu, wv = ruling_directions(family, z, u1, v1)
    value = (wu @ normal) * (wv @ normal) / float(b_factor(family, u1, v1))
    return float(abs(value + z) / abs(z))


def integrability_residual(
    family: ConfocalFamily, z: float, p0: Params, v1: float
) -> float:
    """N . (2 z m + m x dm/dv1) at p0, relative to the size of its terms."""
    m = m_closed_form(family, z, p0, v1)
    dm = dm_dv1(family, z, p0, v1)
    _, normal = tangent_plane(family, p0)
    normal = unit(normal)
    twist = np.cross(m, dm)
    scale = 2 * abs(z) * np.linalg.norm(m) + np.linalg.norm(twist)
    return float(abs(normal @ (2 * z * m + twist)) / scale)


def du1_partials(state: TCState, tol: Tolerances = DEFAULT) -> Array:
    """Predicted partials of u1(u0, v0, v1) from the Delta quantities."""
    if abs(state.delta_plus) <= tol.deg:
        raise errors.SingularDelta(f"D+ = {state.delta_plus:.3g} vanishes")
    return np.array(
        [
            -state.n0 / state.z * state.delta_prime_minus,
            -state.n0 / state.z * state.delta_prime_plus,
            -state.delta_prime_plus / state.delta_plus,
        ]
    )


def du1_fd(
    family: ConfocalFamily, z: float, p0: Params, v1: float, h: float = 1e-4
) -> Array:
    """Central-difference partials of u1 in (u0, v0, v1)."""
    u0, v0 = p0

    def u1(du0: float, dv0: float, dv1: float) -> float:
        return tc_solve_u1(family, z, (u0 + du0, v0 + dv0), v1 + dv1)

    return np.array(
        [
            (u1(h, 0, 0) - u1(-h, 0, 0)) / (2 * h),
            (u1(0, h, 0) - u1(0, -h, 0)) / (2 * h),
            (u1(0, 0, h) - u1(0, 0, -h)) / (2 * h),
        ]
    )


def fundamental_forms(x: Array, h: Tuple[float, float], order: int = 2) -> Array:
    """(E, F, G, L, M, N) of a gridded surface x (nu, nv, 3), by finite differences."""
    xu = grids.derivative(x, h[0], 0, order)
    xv = grids.derivative(x, h[1], 1, order)
    xuu = grids.second_derivative(x, h[0], 0, order)
    xvv = grids.second_derivative(x, h[1], 1, order)
    xuv = grids.mixed_derivative(x, h[0], h[1], (0, 1), order)
    n = unit(np.cross(xu, xv))
    pairs = [(xu, xu), (xu, xv), (xv, xv), (xuu, n), (xuv, n), (xvv, n)]
    return np.stack([np.sum(a * b, axis=-1) for a, b in pairs])


def curvature_grid(x: Array, h: Tuple[float, float], order: int = 2) -> Array:
    """Finite-difference Gauss curvature (LN - M^2) / (EG - F^2) over a grid."""
    e, f, g, l_, m, n = fundamental_forms(x, h, order)
    return (l_ * n - m ** 2) / (e * g - f ** 2)


def gauss_curvature_fd(
    family: ConfocalFamily, p: Params, h: float = 1e-4, order: int = 4
) -> float:
    """Finite-difference Gauss curvature of x_0 at p (5 x 5 stencil)."""
    offsets = h * np.arange(-2, 3)
    u, v = np.meshgrid(p[0] + offsets, p[1] + offsets, indexing="ij")
    x = evaluate(family, 0.0, u, v)
    return float(curvature_grid(x, (h, h), order)[2, 2])
