"""Geodesics on x_0, Jacobi's caustic invariant and billiards in confocal quadrics.

A geodesic of x_0 solves x'' = -(x'^T A x' / |N|^2) N with N = A x + B the normal.
Its tangent lines stay tangent to one further confocal member, the caustic z_c. For
a line x + s d, Q_z(x + s d) = alpha s^2 + 2 beta s + gamma; the line touches the
member z where beta^2 - alpha gamma vanishes. Multiplied by prod(a_i - z) this is a
quadratic G(z) with leading coefficient |d|^2 whose roots are the two members the
line touches.
"""

import dataclasses
import logging
from typing import Any, Optional, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from . import errors
from .config import DEFAULT, Tolerances
from .frames import rk4_step
from .quadric_core import (
    ConfocalFamily,
    check_on_quadric,
    confocal_polynomial,
    elliptic_coords,
    ivory_between,
    normal_hat,
    polynomial_product,
    quadric_value,
    unit,
)

LOG = logging.getLogger(__name__)

Array = Any


def _acceleration(family: ConfocalFamily, x: Array, velocity: Array) -> Array:
    normal = normal_hat(family, 0.0, x, check=False)
    bend = np.sum(family.diagonal(0.0) * velocity ** 2, axis=-1)
    return -np.asarray(bend / np.sum(normal ** 2, axis=-1))[..., np.newaxis] * normal


def _project(family: ConfocalFamily, x: Array, velocity: Array) -> Tuple[Array, Array]:
    """One Newton step back onto x_0, then drop the normal part of the velocity."""
    normal = normal_hat(family, 0.0, x, check=False)
    x = x - quadric_value(family, 0.0, x) / (2 * normal @ normal) * normal
    normal = normal_hat(family, 0.0, x, check=False)
    velocity = velocity - (velocity @ normal) / (normal @ normal) * normal
    return x, velocity


@dataclasses.dataclass(frozen=True)
class GeodesicState:
    """Position and velocity on x_0, and the step that produced them."""

    x: Array
    velocity: Array
    h: float


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """A sampled geodesic: times (n + 1,), positions and velocities (n + 1, 3)."""

    family: ConfocalFamily
    times: Array
    x: Array
    velocity: Array

    def state(self, index: int) -> GeodesicState:
        """State at sample `index`."""
        h = float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0
        return GeodesicState(self.x[index], self.velocity[index], h)

    def speed_drift(self) -> float:
        """Max relative change of |x'| from its initial value."""
        speed = np.linalg.norm(self.velocity, axis=-1)
        return float(np.abs(speed - speed[0]).max() / speed[0])

    def surface_residual(self) -> float:
        """Max |Q_0(x)|."""
        return float(np.abs(quadric_value(self.family, 0.0, self.x)).max())

    def tangency_residual(self) -> float:
        """Max |x' . N| / (|x'| |N|)."""
        normal = normal_hat(self.family, 0.0, self.x, check=False)
        dot = np.abs(np.sum(self.velocity * normal, axis=-1))
        scale = np.linalg.norm(self.velocity, axis=-1) * np.linalg.norm(normal, axis=-1)
        return float((dot / scale).max())

    def curvature(self) -> Array:
        """Space curvature |x''| / |x'|^2 at every sample."""
        acceleration = _acceleration(self.family, self.x, self.velocity)
        speed = np.linalg.norm(self.velocity, axis=-1)
        return np.linalg.norm(acceleration, axis=-1) / speed ** 2


def geodesic_integrate(
    family: ConfocalFamily,
    x0: Array,
    direction: Array,
    T: float,  # pylint:disable=invalid-name
    h: float,
    tol: Tolerances = DEFAULT,
) -> Trajectory:
    """RK4 geodesic from x0 with initial velocity `direction`, for time T at step h.

    After every step the point is projected back onto x_0 and the velocity onto the
    tangent plane. Raises StepTooLarge when a step leaves the surface by more than
    tol.drift before projection (negative T integrates backwards).
    """
    x0 = np.asarray(x0, dtype=float)
    direction = np.asarray(direction, dtype=float)
    check_on_quadric(family, 0.0, x0, tol)
    normal = normal_hat(family, 0.0, x0, check=False)
    length = np.linalg.norm(direction)
    if length == 0:
        raise ValueError("Geodesic direction must be nonzero")
    if abs(direction @ normal) > tol.on_quadric * length * np.linalg.norm(normal):
        raise ValueError(
            f"Direction {direction.tolist()} is not tangent to x_0 at {x0.tolist()}"
        )
    steps = int(round(abs(T) / h))
    step = np.copysign(h, T)

    def rhs(_: float, y: Array) -> Array:
        return np.concatenate([y[3:], _acceleration(family, y[:3], y[3:])])

    xs, velocities = [x0], [direction]
    y = np.concatenate([x0, direction])
    for k in range(steps):
        y = rk4_step(rhs, k * step, y, step)
        off = abs(quadric_value(family, 0.0, y[:3])) / max(1.0, float(y[:3] @ y[:3]))
        if off > tol.drift:
            raise errors.StepTooLarge(
                f"Geodesic step {k} left x_0 by {off:.3g} (h={h})"
            )
        x, velocity = _project(family, y[:3], y[3:])
        y = np.concatenate([x, velocity])
        xs.append(x)
        velocities.append(velocity)
    times = step * np.arange(steps + 1)
    return Trajectory(family, times, np.array(xs), np.array(velocities))


def line_coefficients(
    family: ConfocalFamily, z: float, x: Array, d: Array
) -> Tuple[float, float, float]:
    """(alpha, beta, gamma) with Q_z(x + s d) = alpha s^2 + 2 beta s + gamma."""
    x, d = np.asarray(x, dtype=float), np.asarray(d, dtype=float)
    diagonal = family.diagonal(z)
    alpha = float(np.sum(diagonal * d ** 2))
    beta = float(np.sum(diagonal * x * d) + family.B @ d)
    return alpha, beta, float(quadric_value(family, z, x))


def caustic_polynomial(family: ConfocalFamily, x: Array, d: Array) -> Polynomial:
    """G(z): the quadratic whose roots are the members touched by the line x + s d."""
    x, d = np.asarray(x, dtype=float), np.asarray(d, dtype=float)
    factors = [Polynomial([a, -1.0]) for a in family.a]
    product = polynomial_product(factors)
    partial = [
        polynomial_product([f for j, f in enumerate(factors) if j != i])
        for i in range(len(factors))
    ]
    alpha = sum(d[i] ** 2 * f for i, f in enumerate(partial))
    beta = sum(x[i] * d[i] * f for i, f in enumerate(partial))
    beta = beta + (family.B @ d) * product
    gamma = confocal_polynomial(family, x)
    quotient, _ = divmod(beta ** 2 - alpha * gamma, product)
    return quotient


@dataclasses.dataclass(frozen=True)
class CausticSeries:
    """Caustic parameter z_c per trajectory sample; `degenerate` where G has 0 twice."""

    values: Array
    degenerate: Array

    @property
    def drift(self) -> float:
        """Max |z_c - z_c(0)| / |z_c(0)| over the non-degenerate samples."""
        values = self.values[~self.degenerate]
        if len(values) == 0:
            return 0.0
        return float(np.abs(values - values[0]).max() / abs(values[0]))


def jacobi_caustic(trajectory: Trajectory, tol: Tolerances = DEFAULT) -> CausticSeries:
    """The nonzero root z_c = -g1 / g2 of G at every sample of a geodesic.

    The tangent of a geodesic touches x_0 itself, so G(0) = 0. A sample is
    degenerate when 0 is a double root (the tangent is a ruling). Raises
    RootCollision when z_c meets a family parameter.
    """
    family = trajectory.family
    values, degenerate = [], []
    for x, velocity in zip(trajectory.x, trajectory.velocity):
        g = caustic_polynomial(family, x, velocity).coef
        g = np.pad(g, (0, 3 - len(g)))
        scale = float(velocity @ velocity) * max(1.0, float(np.abs(family.a).max()))
        flat = abs(g[1]) <= tol.deg * scale
        degenerate.append(flat)
        values.append(0.0 if flat else -g[1] / g[2])
    values_ = np.array(values)
    gaps = np.abs(values_[:, np.newaxis] - family.a[np.newaxis, :])
    if np.any(gaps <= tol.sing * (1 + np.abs(family.a))):
        worst = float(values_[np.argmin(gaps.min(axis=1))])
        raise errors.RootCollision(
            f"Caustic parameter {worst:.6g} meets a family parameter"
        )
    return CausticSeries(values_, np.array(degenerate))


def liouville_caustic(
    family: ConfocalFamily, x: Array, velocity: Array, tol: Tolerances = DEFAULT
) -> float:
    """Caustic from elliptic coordinates: z1 (t . n2)^2 + z2 (t . n1)^2.

    z1, z2 are the other two members through x, n1, n2 their unit normals and t the
    unit tangent.
    """
    roots = sorted(elliptic_coords(family, x, tol), key=abs)[1:]
    tangent = unit(velocity)
    n1, n2 = (unit(normal_hat(family, z, x, check=False)) for z in roots)
    return float(roots[0] * (tangent @ n2) ** 2 + roots[1] * (tangent @ n1) ** 2)


def discriminant_residual(
    family: ConfocalFamily, z: float, x: Array, d: Array
) -> float:
    """Relative |beta^2 - alpha gamma| of the line x + s d against the member z."""
    alpha, beta, gamma = line_coefficients(family, z, x, d)
    return abs(beta ** 2 - alpha * gamma) / max(beta ** 2, abs(alpha * gamma), 1e-300)


def tangency_point(family: ConfocalFamily, z: float, x: Array, d: Array) -> Array:
    """Where the line x + s d touches the member z (s = -beta / alpha)."""
    alpha, beta, _ = line_coefficients(family, z, x, d)
    return np.asarray(x, dtype=float) - beta / alpha * np.asarray(d, dtype=float)


def next_impact(
    family: ConfocalFamily, mirror: float, x: Array, d: Array, tol: Tolerances = DEFAULT
) -> Array:
    """Nearest forward intersection (s > 0) of the ray x + s d with the member `mirror`.

    Raises NoIntersection if the ray never meets it.
    """
    alpha, beta, gamma = line_coefficients(family, mirror, x, d)
    roots = Polynomial([gamma, 2 * beta, alpha]).roots()
    scale = np.linalg.norm(x) / np.linalg.norm(d) + 1.0
    forward = [
        r.real
        for r in roots
        if abs(r.imag) <= tol.deg * scale and r.real > tol.sing * scale
    ]
    if not forward:
        raise errors.NoIntersection(
            f"Ray from {np.asarray(x).tolist()} along {np.asarray(d).tolist()}"
            f" does not meet the member z={mirror}"
        )
    return np.asarray(x, dtype=float) + min(forward) * np.asarray(d, dtype=float)


def reflect(family: ConfocalFamily, mirror: float, point: Array, d: Array) -> Array:
    """d - 2 (d . N) N / |N|^2 with N the normal of the member `mirror` at point."""
    normal = normal_hat(family, mirror, point, check=False)
    return d - 2 * (d @ normal) / (normal @ normal) * normal


def tangent_direction(
    family: ConfocalFamily,
    caustic: float,
    point: Array,
    mirror: float,
    transverse: Optional[Array] = None,
) -> Array:
    """Unit direction -n + t e from `point` whose line touches the caustic.

    n is the unit normal of the mirror and e the `transverse` vector (e2 by default);
    t is the largest root of the tangency condition, which is quadratic in t.
    """
    point = np.asarray(point, dtype=float)
    inward = -unit(normal_hat(family, mirror, point, check=False))
    transverse = np.array([0.0, 1.0, 0.0]) if transverse is None else transverse
    nodes = np.array([-1.0, 0.0, 1.0])
    values = []
    for t in nodes:
        d = inward + t * np.asarray(transverse, dtype=float)
        alpha, beta, gamma = line_coefficients(family, caustic, point, d)
        values.append(beta ** 2 - alpha * gamma)
    roots = Polynomial.fit(nodes, values, 2).convert().roots()
    real = [r.real for r in roots if abs(r.imag) <= 1e-9 * (1 + abs(r))]
    if not real:
        raise errors.NoIntersection(
            f"No line from {point.tolist()} in this pencil touches z={caustic}"
        )
    return unit(inward + max(real) * np.asarray(transverse, dtype=float))


def chasles_residual(family: ConfocalFamily, x: Array, d: Array) -> float:
    """Orthonormality of the normals where a line touches its two members.

    Max of |n1 . n2| and |n_k . d| over the tangency points, n_k unit normals.
    """
    roots = caustic_polynomial(family, x, d).roots()
    if np.any(np.abs(roots.imag) > 0):
        raise errors.ComplexRoots(
            f"Line along {np.asarray(d).tolist()} touches no real pair of members"
        )
    d_hat = unit(d)
    normals = [
        unit(normal_hat(family, z, tangency_point(family, z, x, d), check=False))
        for z in roots.real
    ]
    return float(
        max(abs(normals[0] @ normals[1]), *(abs(n @ d_hat) for n in normals))
    )


@dataclasses.dataclass(frozen=True)
class BilliardRun:
    """Impact points (n + 1, 3) on the mirror and outgoing unit directions."""

    family: ConfocalFamily
    mirror: float
    points: Array
    directions: Array

    def tangency_residual(self, caustic: float) -> float:
        """Worst relative discriminant of the chords against the caustic member."""
        return max(
            discriminant_residual(self.family, caustic, x, d)
            for x, d in zip(self.points, self.directions)
        )

    def chasles_residual(self) -> float:
        """Worst `chasles_residual` over the chords."""
        return max(
            chasles_residual(self.family, x, d)
            for x, d in zip(self.points, self.directions)
        )

    def chord_lengths(self) -> Array:
        """Lengths of the chords between consecutive impacts."""
        return np.linalg.norm(np.diff(self.points, axis=0), axis=-1)


def billiard_run(
    family: ConfocalFamily,
    mirror: float,
    start: Array,
    n_bounces: int,
    caustic: Optional[float] = None,
    direction: Optional[Array] = None,
    tol: Tolerances = DEFAULT,
) -> BilliardRun:
    """Bounce a ray inside the member `mirror` n_bounces times.

    The first chord runs along `direction`, or, when only `caustic` is given, along
    the `tangent_direction` touching it.
    """
    start = np.asarray(start, dtype=float)
    check_on_quadric(family, mirror, start, tol)
    if direction is None:
        if caustic is None:
            raise ValueError("Give a start direction or a caustic")
        direction = tangent_direction(family, caustic, start, mirror)
    d = unit(direction)
    points, directions = [start], [d]
    x = start
    for _ in range(n_bounces):
        x = next_impact(family, mirror, x, d, tol)
        d = unit(reflect(family, mirror, x, d))
        points.append(x)
        directions.append(d)
    LOG.debug("Billiard of %d bounces in member z=%g", n_bounces, mirror)
    return BilliardRun(family, mirror, np.array(points), np.array(directions))


def ivory_dual_chord(
    family: ConfocalFamily, caustic: float, mirror: float, c: Array, q: Array
) -> Tuple[Array, Array]:
    """Dual of the segment from c (on the caustic) to q (on the mirror).

    Returns (q*, c*) = (Ivory image of q on the caustic, Ivory image of c on the
    mirror); the segment q* c* has the same length and touches the caustic at q*.
    """
    return (
        ivory_between(family, mirror, caustic, q),
        ivory_between(family, caustic, mirror, c),
    )
