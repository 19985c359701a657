"""Backlund transformation of a seed: Ricatti integration, leaves and their checks.

Along the seed the partner ruling v1 solves (m . omega) + 2 z dv1 = 0 which, with the
Delta quantities, reads

    dv1/du = (uu D- + uv D+) / 2z      dv1/dv = (vu D- + uu D+) / 2z

Both right-hand sides are quadratic in v1, so v1 is a Ricatti (Mobius) flow; it may
pass through infinity and is integrated in two projective charts. The leaf is

    x1 = R (x_z(u1, v1) - x_0(u0, v0)) + x0

with u1 from the tangency condition.
"""

import dataclasses
import logging
from typing import Any, Callable, Optional, Sequence, Tuple

import numpy as np

from . import errors, grids
from .config import DEFAULT, Tolerances
from .frames import vee
from .quadric_core import (
    ConfocalFamily,
    Params,
    evaluate,
    normal_hat,
    rmpia,
    ruling_directions,
    swap_symmetry,
    tc_solve_u1,
    tc_solve_u1_field,
    unit,
)
from .rolling import (
    Connection,
    Seed,
    connection_from_shapes,
    first_form,
    omega_vectors,
)
from .tangency import area_constant, curvature_grid, delta_pair, m_closed_form

LOG = logging.getLogger(__name__)

Array = Any
ORDERS = ("vu", "uv")
QUADRATIC_NODES = np.array([-1.0, 0.0, 1.0])


def quadratic_coefficients(values: Array) -> Array:
    """Coefficients (c0, c1, c2) of the quadratic through values at -1, 0, 1."""
    minus, zero, plus = values
    return np.array([zero, (plus - minus) / 2, (plus + minus) / 2 - zero])


def ricatti_coefficients(
    family: ConfocalFamily,
    connection: Connection,
    z: float,
    point: Params,
    direction: Params,
) -> Array:
    """(c0, c1, c2) with dv1/ds = c0 + c1 v1 + c2 v1^2 along (du, dv) = direction."""
    u, v = point
    uu, uv, vu = (float(c) for c in connection(u, v))
    du, dv = direction
    minus, plus = delta_pair(family, z, (u, v), QUADRATIC_NODES)
    rhs = ((uu * du + vu * dv) * minus + (uv * du + uu * dv) * plus) / (2 * z)
    return quadratic_coefficients(rhs)


def _rk4(
    coefficients: Callable[[float], Array],
    s: float,
    y: float,
    h: float,
    reciprocal: bool,
) -> float:
    def rhs(s_: float, y_: float) -> float:
        c0, c1, c2 = coefficients(s_)
        if reciprocal:
            return -(c2 + c1 * y_ + c0 * y_ ** 2)
        return c0 + c1 * y_ + c2 * y_ ** 2

    k1 = rhs(s, y)
    k2 = rhs(s + h / 2, y + h / 2 * k1)
    k3 = rhs(s + h / 2, y + h / 2 * k2)
    k4 = rhs(s + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_ricatti(
    coefficients: Callable[[float], Array],
    s: Sequence[float],
    y0: float,
    tol: Tolerances = DEFAULT,
) -> Array:
    """Solve the Ricatti equation dy/ds = c0 + c1 y + c2 y^2 at the nodes `s`.

    One RK4 step per node interval, in the chart y or the reciprocal chart 1/y.
    When a step leaves the current chart (|value| > tol.blowup) it is redone in
    the other chart; RicattiBlowup is raised if both charts blow up.
    """
    s = np.asarray(s, dtype=float)
    reciprocal = abs(y0) > tol.blowup
    y = 1.0 / y0 if reciprocal else float(y0)
    values = [float(y0)]

    def bad(value: float) -> bool:
        return not np.isfinite(value) or abs(value) > tol.blowup

    for k in range(len(s) - 1):
        h = s[k + 1] - s[k]
        new = _rk4(coefficients, s[k], y, h, reciprocal)
        if bad(new):
            if y == 0:
                raise errors.RicattiBlowup(f"Ricatti solution blew up at s={s[k]}")
            other = _rk4(coefficients, s[k], 1.0 / y, h, not reciprocal)
            if bad(other):
                raise errors.RicattiBlowup(
                    f"Ricatti solution blew up in both charts between s={s[k]}"
                    f" and s={s[k + 1]}"
                )
            LOG.debug("Ricatti chart switch at s=%.6g", s[k + 1])
            reciprocal, new = not reciprocal, other
        y = new
        values.append((1.0 / y if y != 0 else np.inf) if reciprocal else y)
    return np.array(values)


def seed_connection(seed: Seed) -> Connection:
    """The seed's analytic connection, or one interpolated from its shape."""
    if seed.connection is not None:
        return seed.connection
    return connection_from_shapes(seed).interpolator()


def ricatti_v1(
    seed: Seed,
    z: float,
    v1_init: float,
    order: str = "vu",
    tol: Tolerances = DEFAULT,
) -> Array:
    """The v1 field over the seed grid, started from v1_init at node (0, 0).

    `order` "vu" integrates the first v-line, then every u-line from it; "uv" the
    first u-line, then every v-line.
    """
    if order not in ORDERS:
        raise ValueError(f"Integration order must be one of {ORDERS}, got {order!r}")
    _check_z(seed.family, z)
    connection = seed_connection(seed)
    family, u, v = seed.family, seed.u, seed.v

    def along_v(u0: float) -> Callable[[float], Array]:
        return lambda s: ricatti_coefficients(family, connection, z, (u0, s), (0, 1))

    def along_u(v0: float) -> Callable[[float], Array]:
        return lambda s: ricatti_coefficients(family, connection, z, (s, v0), (1, 0))

    field = np.empty(seed.shape)
    if order == "vu":
        field[0, :] = integrate_ricatti(along_v(u[0]), v, v1_init, tol)
        for j, v0 in enumerate(v):
            field[:, j] = integrate_ricatti(along_u(v0), u, field[0, j], tol)
    else:
        field[:, 0] = integrate_ricatti(along_u(v[0]), u, v1_init, tol)
        for i, u0 in enumerate(u):
            field[i, :] = integrate_ricatti(along_v(u0), v, field[i, 0], tol)
    return field


def closure_gap(
    seed: Seed, z: float, v1_init: float, tol: Tolerances = DEFAULT
) -> float:
    """Max |v1| difference between the two grid integration orders."""
    first = ricatti_v1(seed, z, v1_init, "vu", tol)
    second = ricatti_v1(seed, z, v1_init, "uv", tol)
    return float(np.abs(first - second).max())


def _check_z(family: ConfocalFamily, z: float) -> None:
    if z == 0:
        raise errors.OutOfRange("The Backlund transformation needs z != 0")
    family.check_z(z)


@dataclasses.dataclass(frozen=True)
class Leaf:
    """A Backlund transform x1 of a seed, with its partner parameters (u1, v1).

    `R1`, `t1` (the leaf's own rolling on x_0) are filled by `inversion_rolling`.
    """

    seed: Seed
    z: float
    ruling: str
    u1: Array
    v1: Array
    x1: Array
    R1: Optional[Array] = None
    t1: Optional[Array] = None

    @property
    def family(self) -> ConfocalFamily:
        """Family of the seed."""
        return self.seed.family

    @property
    def partner(self) -> Array:
        """x_0(u1, v1): the point of the quadric the leaf is rolled on."""
        return evaluate(self.family, 0.0, self.u1, self.v1)

    @property
    def degenerate(self) -> bool:
        """True when the leaf collapses onto a curve (e.g. a ruling)."""
        hu, hv = self.seed.h
        xu = grids.derivative(self.x1, hu, 0)
        xv = grids.derivative(self.x1, hv, 1)
        area = np.linalg.norm(np.cross(xu, xv), axis=-1)
        scale = np.linalg.norm(xu, axis=-1) * np.linalg.norm(xv, axis=-1)
        return bool(np.all(area <= 1e-9 * np.maximum(scale, 1e-300)))


def leaf_integrate(
    seed: Seed,
    z: float,
    v1_init: float,
    ruling: str = "u",
    order: str = "vu",
    tol: Tolerances = DEFAULT,
) -> Leaf:
    """The leaf B_z(seed) through the partner ruling v1_init at node (0, 0).

    `ruling` "v" gives the transform built on the other ruling family. It is
    computed in the chart with rulings exchanged (`Seed.swapped`), where
    `v1_init` then names the partner's u-ruling.
    """
    if ruling == "v":
        flipped = leaf_integrate(seed.swapped(), z, v1_init, "u", order, tol)
        s = swap_symmetry(seed.family)
        return Leaf(
            seed=seed,
            z=z,
            ruling="v",
            u1=flipped.v1.T,
            v1=flipped.u1.T,
            x1=np.swapaxes(flipped.x1, 0, 1) @ s.T,
        )
    if ruling != "u":
        raise ValueError(f"Ruling must be 'u' or 'v', got {ruling!r}")
    family = seed.family
    v1 = ricatti_v1(seed, z, v1_init, order, tol)
    uu, vv = np.meshgrid(seed.u, seed.v, indexing="ij")
    u1 = tc_solve_u1_field(family, z, uu, vv, v1, tol)
    _check_deltas(family, z, uu, vv, v1, tol)
    gap = evaluate(family, z, u1, v1, tol) - seed.x0
    x1 = np.einsum("ijab,ijb->ija", seed.R, gap) + seed.x
    return Leaf(seed=seed, z=z, ruling="u", u1=u1, v1=v1, x1=x1)


def _check_deltas(
    family: ConfocalFamily, z: float, u: Array, v: Array, v1: Array, tol: Tolerances
) -> None:
    """Raise SingularDelta where m is normal to the seed (both Deltas vanish)."""
    m = m_closed_form(family, z, (u, v), v1)
    w, w_tilde = ruling_directions(family, 0.0, u, v)
    size = np.linalg.norm(m, axis=-1) * np.maximum(
        np.linalg.norm(w, axis=-1), np.linalg.norm(w_tilde, axis=-1)
    )
    bad = (np.abs(np.sum(m * w, -1)) <= tol.deg * size) & (
        np.abs(np.sum(m * w_tilde, -1)) <= tol.deg * size
    )
    if np.any(bad):
        index = tuple(np.argwhere(bad)[0])
        raise errors.SingularDelta(
            f"D- and D+ vanish at node {index} (u0={u[index]}, v0={v[index]})"
        )


def cross_ratio(p1: Array, p2: Array, p3: Array, p4: Array) -> Array:
    """cr(p1, p2; p3, p4) = ((p1 - p3)(p2 - p4)) / ((p2 - p3)(p1 - p4))."""
    p1, p2, p3, p4 = (np.asarray(p, dtype=float) for p in (p1, p2, p3, p4))
    return ((p1 - p3) * (p2 - p4)) / ((p2 - p3) * (p1 - p4))


def tangency_residual(leaf: Leaf) -> float:
    """Max relative tangency residual of (seed node, partner) pairs."""
    x0 = leaf.seed.x0
    n0 = normal_hat(leaf.family, 0.0, x0, check=False)
    gap = evaluate(leaf.family, leaf.z, leaf.u1, leaf.v1) - x0
    scale = np.linalg.norm(n0, axis=-1) * np.maximum(1.0, np.linalg.norm(x0, axis=-1))
    return float((np.abs(np.sum(gap * n0, -1)) / scale).max())


def acpia_check(leaf: Leaf, order: int = 2) -> float:
    """Max relative gap between the first forms of x1 and of x_0(u1, v1).

    Both by finite differences on the seed grid, interior nodes only.
    """
    if min(leaf.seed.shape) < 3:
        raise errors.GridTooCoarse(
            f"Need >= 3 nodes per direction, got {leaf.seed.shape}"
        )
    return first_form_gap(leaf.x1, leaf.partner, leaf.seed.h, order)


def first_form_gap(
    x: Array, partner: Array, h: Tuple[float, float], order: int = 2
) -> float:
    """Max relative gap between the first forms of two gridded surfaces."""
    form = first_form(x, h, order)
    partner_form = first_form(partner, h, order)
    scale = np.maximum(partner_form[0], partner_form[2])
    relative = np.moveaxis(np.abs(form - partner_form) / scale, 0, -1)
    return float(grids.interior(relative, grids.margin(order)).max())


def leaf_normals(leaf: Leaf) -> Array:
    """R m at every node: normals of the leaf (not normalized)."""
    uu, vv = np.meshgrid(leaf.seed.u, leaf.seed.v, indexing="ij")
    if leaf.ruling == "v":
        # the mirrored configuration is a u-ruling one
        mirror = swap_symmetry(leaf.family)
        m = m_closed_form(leaf.family, leaf.z, (vv, uu), leaf.u1) @ mirror.T
    else:
        m = m_closed_form(leaf.family, leaf.z, (uu, vv), leaf.v1)
    return np.einsum("ijab,ijb->ija", leaf.seed.R, m)


def tangent_plane_residual(leaf: Leaf, order: int = 2) -> float:
    """Max |cos| between R m and the leaf's finite-difference tangents (interior)."""
    normal = unit(leaf_normals(leaf))
    worst = 0.0
    for axis, h in enumerate(leaf.seed.h):
        tangent = grids.derivative(leaf.x1, h, axis, order)
        length = np.linalg.norm(tangent, axis=-1)
        cosine = np.abs(np.sum(normal * tangent, -1)) / np.maximum(length, 1e-300)
        cosine = np.where(length > 0, cosine, 0.0)
        worst = max(worst, float(grids.interior(cosine, grids.margin(order)).max()))
    return worst


def collinearity_residual(leaf: Leaf) -> float:
    """How far the leaf's u-lines are from straight: max s2 / s1 of centered points."""
    worst = 0.0
    for j in range(leaf.x1.shape[1]):
        points = leaf.x1[:, j] - leaf.x1[:, j].mean(axis=0)
        singular = np.linalg.svd(points, compute_uv=False)
        if singular[0] > 0:
            worst = max(worst, float(singular[1] / singular[0]))
    return worst


def inversion_rolling(seed: Seed, leaf: Leaf, tol: Tolerances = DEFAULT) -> Leaf:
    """The leaf's rolling (R1, t1) = (R, t) o M^-1 with M the Ivory rigid motion.

    (R1, t1) rolls x_0 at (u1, v1) onto x1 and exhibits the seed as a transform of
    the leaf. Returns the leaf with `R1`, `t1` filled in.
    """
    rotations = np.empty(seed.R.shape)
    translations = np.empty(seed.t.shape)
    for i, u0 in enumerate(seed.u):
        for j, v0 in enumerate(seed.v):
            ivory = rmpia(
                seed.family, leaf.z, (u0, v0), (leaf.u1[i, j], leaf.v1[i, j]), tol=tol
            )
            motion = seed.motion(i, j) @ ivory.inverse()
            rotations[i, j], translations[i, j] = motion.R, motion.t
    return dataclasses.replace(leaf, R1=rotations, t1=translations)


def require_rolling(leaf: Leaf) -> Tuple[Array, Array]:
    """(R1, t1) of a leaf that has been through `inversion_rolling`."""
    if leaf.R1 is None or leaf.t1 is None:
        raise ValueError("Leaf has no rolling; call inversion_rolling first")
    return leaf.R1, leaf.t1


def leaf_rolling_residual(leaf: Leaf, order: int = 2) -> float:
    """Max relative |R1 dx_0(u1, v1) - dx1| over interior nodes."""
    rotations, _ = require_rolling(leaf)
    return rolling_gap(rotations, leaf.partner, leaf.x1, leaf.seed.h, order)


def rolling_gap(
    rotations: Array,
    partner: Array,
    x: Array,
    h: Tuple[float, float],
    order: int = 2,
) -> float:
    """Max relative |R d(partner) - dx| over interior nodes of a grid."""
    worst = 0.0
    for axis, step in enumerate(h):
        d_partner = grids.derivative(partner, step, axis, order)
        d_leaf = grids.derivative(x, step, axis, order)
        gap = np.linalg.norm(
            np.einsum("ijab,ijb->ija", rotations, d_partner) - d_leaf, axis=-1
        )
        scale = np.maximum(np.linalg.norm(d_partner, axis=-1), 1e-300)
        relative = grids.interior(gap / scale, grids.margin(order))
        worst = max(worst, float(relative.max()))
    return worst


def inverse_point_residual(seed: Seed, leaf: Leaf) -> float:
    """Max |R1 (x_z(u0, v0) - x_0(u1, v1)) + x1 - x0|: the seed is B_z of the leaf."""
    rotations, _ = require_rolling(leaf)
    uu, vv = np.meshgrid(seed.u, seed.v, indexing="ij")
    gap = evaluate(seed.family, leaf.z, uu, vv) - leaf.partner
    rebuilt = np.einsum("ijab,ijb->ija", rotations, gap) + leaf.x1
    return float(np.abs(rebuilt - seed.x).max())


def recover_seed_v0(
    seed: Seed,
    leaf: Leaf,
    column: int = 0,
    v0_init: Optional[float] = None,
    delta: float = 1e-5,
    tol: Tolerances = DEFAULT,
) -> Tuple[Array, Array]:
    """Integrate the inverse Ricatti equation along one v-line of the leaf.

    The leaf, rolled on x_0 at (u1, v1) by (R1, t1), is transformed back with the
    same z; its v0 field must reproduce the seed's v grid. The leaf's connection
    omega1 = M omega0 + vee(M dM^T) uses the Ivory rotation M and a central
    difference of step `delta`. RK4 runs at twice the grid step so that every stage
    falls on a node. Returns (seed v at the even nodes, recovered v0).
    """
    family, z, u0 = seed.family, leaf.z, float(seed.u[column])
    connection = seed_connection(seed)
    v_nodes = np.asarray(seed.v, dtype=float)

    def ivory_rotation(v: float, v1: float) -> Array:
        u1 = tc_solve_u1(family, z, (u0, v), v1, tol)
        return rmpia(family, z, (u0, v), (u1, v1), tol=tol).R

    omegas = []
    for j, v in enumerate(v_nodes):
        v1 = float(leaf.v1[column, j])
        slope = np.polynomial.polynomial.polyval(
            v1, ricatti_coefficients(family, connection, z, (u0, v), (0, 1))
        )
        rotation = ivory_rotation(v, v1)
        d_rotation = (
            ivory_rotation(v + delta, v1 + delta * slope)
            - ivory_rotation(v - delta, v1 - delta * slope)
        ) / (2 * delta)
        _, omega_v = omega_vectors(family, *connection(u0, v), u0, v)
        omegas.append(rotation @ omega_v + vee(rotation @ d_rotation.T))

    def rhs(j: int, v0: float) -> float:
        partner = (float(leaf.u1[column, j]), float(leaf.v1[column, j]))
        m = m_closed_form(family, z, partner, np.array([v0]))[0]
        return float(-(m @ omegas[j]) / (2 * z))

    y = float(v_nodes[0] if v0_init is None else v0_init)
    recovered = [y]
    for j in range(0, len(v_nodes) - 2, 2):
        h = v_nodes[j + 1] - v_nodes[j]
        k1 = rhs(j, y)
        k2 = rhs(j + 1, y + h * k1)
        k3 = rhs(j + 1, y + h * k2)
        k4 = rhs(j + 2, y + 2 * h * k3)
        y = y + 2 * h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        recovered.append(y)
    return v_nodes[: 2 * len(recovered) - 1 : 2], np.array(recovered)


@dataclasses.dataclass(frozen=True)
class WeingartenReport:
    """Ribaucour criterion K0 K1 = sin^4(beta) / d^4 for a seed and its leaf."""

    closed_form: float
    criterion: Optional[float]
    degenerate: bool


def weingarten_closed_form(
    family: ConfocalFamily, z: float, p0: Array, p1: Array
) -> float:
    """Relative residual of the criterion at exact TC points (vectorized).

    K0 and K1 are the quadric's curvatures at p0 and p1 (the surfaces are
    applicable to it); beta is the angle between N_0(p0) and m, d = |V01|. The
    product is also compared with 1 / (A^4 |N0(p0)|^4 |N0(p1)|^4).
    """
    area = area_constant(family)
    x0 = evaluate(family, 0.0, *p0)
    x1 = evaluate(family, 0.0, *p1)
    n0 = normal_hat(family, 0.0, x0, check=False)
    n1 = normal_hat(family, 0.0, x1, check=False)
    norm0, norm1 = np.sum(n0 * n0, -1), np.sum(n1 * n1, -1)
    product = 1.0 / (area ** 4 * norm0 ** 2 * norm1 ** 2)
    k0, k1 = -1.0 / (area ** 2 * norm0 ** 2), -1.0 / (area ** 2 * norm1 ** 2)
    m = m_closed_form(family, z, p0, p1[1])
    sine2 = np.sum(np.cross(unit(n0), unit(m)) ** 2, -1)
    d2 = np.sum((evaluate(family, z, *p1) - x0) ** 2, -1)
    ribaucour = np.abs(k0 * k1 - sine2 ** 2 / d2 ** 2) / product
    closed = np.abs(k0 * k1 - product) / product
    return float(np.max(np.maximum(ribaucour, closed)))


def weingarten_check(seed: Seed, leaf: Leaf, order: int = 4) -> WeingartenReport:
    """Closed-form and finite-difference Ribaucour criterion over the grid.

    The finite-difference part is skipped (None) for degenerate leaves. It is
    taken over the nodes where every stencil is central, so the leaf should stay
    clear of the central pole u1 = v1 on the whole grid.
    """
    width = grids.margin(order)
    if min(seed.shape) < 2 * width + 1:
        raise errors.GridTooCoarse(
            f"Need >= {2 * width + 1} nodes per direction, got {seed.shape}"
        )
    uu, vv = np.meshgrid(seed.u, seed.v, indexing="ij")
    if leaf.ruling == "v":
        closed = weingarten_closed_form(
            leaf.family, leaf.z, (vv, uu), (leaf.v1, leaf.u1)
        )
    else:
        closed = weingarten_closed_form(
            leaf.family, leaf.z, (uu, vv), (leaf.u1, leaf.v1)
        )
    if leaf.degenerate:
        LOG.warning("Degenerate leaf: skipping the finite-difference criterion")
        return WeingartenReport(closed_form=closed, criterion=None, degenerate=True)
    h = seed.h
    k0, k1 = curvature_grid(seed.x, h, order), curvature_grid(leaf.x1, h, order)

    def normals(x: Array) -> Array:
        xu = grids.derivative(x, h[0], 0, order)
        return unit(np.cross(xu, grids.derivative(x, h[1], 1, order)))

    sine2 = np.sum(np.cross(normals(seed.x), normals(leaf.x1)) ** 2, -1)
    d2 = np.sum((leaf.x1 - seed.x) ** 2, -1)
    relative = np.abs(k0 * k1 - sine2 ** 2 / d2 ** 2) / np.abs(k0 * k1)
    criterion = float(grids.interior(relative, width).max())
    return WeingartenReport(closed_form=closed, criterion=criterion, degenerate=False)
