"""Planar rolling: roulettes of conics, Kepler rolling and wheel/road pairs.

A wheel curve rolls without slipping on a road curve; a point fixed to the wheel
traces the roulette. All constructions here sample a common parameter and go
through `rolling.roll_curves` with analytic velocities, so closed forms are
available to check every trace.
"""

import dataclasses
import logging
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
import scipy.integrate
import scipy.interpolate
import scipy.special

from . import errors, grids
from .frames import rotation_2d
from .rolling import PlanarRolling, roll_curves

LOG = logging.getLogger(__name__)

Array = Any
Curve = Callable[[Array], Array]

MIN_SAMPLES = 16


def _cross(p: Array, q: Array) -> Array:
    return p[..., 0] * q[..., 1] - p[..., 1] * q[..., 0]


def _rotate_left(v: Array) -> Array:
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _grid(param_range: Tuple[float, float], n: int) -> Array:
    if n < MIN_SAMPLES:
        raise errors.GridTooCoarse(f"Need n >= {MIN_SAMPLES} samples, got {n}")
    lo, hi = param_range
    if not hi > lo:
        raise ValueError(f"Empty parameter range ({lo}, {hi})")
    return np.linspace(lo, hi, n)


def _cumulative(rate: Callable[[float], float], start: float, params: Array) -> Array:
    """Integral of `rate` from `start` to each of the increasing `params`.

    Pieces between successive nodes are summed, so neighbouring values share all
    but one quadrature and their differences stay smooth.
    """
    knots = np.concatenate([[start], np.asarray(params, dtype=float)])
    pieces = [
        scipy.integrate.quad(rate, lo, hi, epsabs=1e-15, epsrel=1e-13)[0]
        for lo, hi in zip(knots[:-1], knots[1:])
    ]
    return np.cumsum(pieces)


@dataclasses.dataclass(frozen=True)
class Roulette:
    """A wheel rolled along a road, and the path of one body-fixed point.

    `series` holds named per-sample quantities (curvatures, speeds, closed forms).
    """

    params: Array
    wheel: Array
    contact: Array
    rolling: PlanarRolling
    point: Array
    series: Dict[str, Array] = dataclasses.field(default_factory=dict)

    @property
    def trace(self) -> Array:
        """Path (k, 2) of the traced point."""
        return self.rolling.apply(self.point)

    @property
    def h(self) -> float:
        """Parameter step."""
        return grids.spacing(self.params)

    def arclength_gap(self) -> float:
        """Max relative difference of wheel and road arclength over each step."""
        wheel = self.series["wheel_speed"]
        road = self.series["road_speed"]
        steps = np.diff(self.params)
        used = (wheel[1:] + wheel[:-1]) / 2 * steps
        travelled = (road[1:] + road[:-1]) / 2 * steps
        return float((np.abs(used - travelled) / np.abs(travelled)).max())

    def deviation(self, target: Array) -> float:
        """Max distance between the trace and target points (k, 2)."""
        return float(np.linalg.norm(self.trace - target, axis=-1).max())

    def curvature(self, order: int = 4) -> Array:
        """Signed curvature of the trace by finite differences, left normal positive."""
        d1 = grids.derivative(self.trace, self.h, 0, order)
        d2 = grids.second_derivative(self.trace, self.h, 0, order)
        return _cross(d1, d2) / np.linalg.norm(d1, axis=-1) ** 3

    def normal(self, order: int = 4) -> Array:
        """Unit left normal of the trace."""
        d1 = grids.derivative(self.trace, self.h, 0, order)
        return _rotate_left(d1 / np.linalg.norm(d1, axis=-1, keepdims=True))

    def revolution_mean_curvature(self, order: int = 4) -> Array:
        """k1 + k2 of the surface made by revolving the trace about the x axis."""
        trace = self.trace
        return self.curvature(order) - self.normal(order)[:, 1] / trace[:, 1]


def roulette_curvature(velocity: Array, acceleration: Array, offset: Array) -> Array:
    """Curvature of the roulette of a wheel rolled along the x axis.

    `velocity`, `acceleration` are wheel derivatives at the contact point and
    `offset` the traced point minus the contact point, all in the body frame.
    """
    speed = np.linalg.norm(velocity, axis=-1)
    kappa = _cross(velocity, acceleration) / speed ** 3
    radius = np.linalg.norm(offset, axis=-1)
    twist = _cross(offset, velocity) / speed
    return -np.sign(kappa) / radius - twist / (np.abs(kappa) * radius ** 3)


def _line_road(arclength: Curve, speed: Curve) -> Tuple[Curve, Curve]:
    def road(u: Array) -> Array:
        u = np.atleast_1d(u)
        return np.stack([arclength(u), np.zeros_like(u)], axis=-1)

    def road_velocity(u: Array) -> Array:
        u = np.atleast_1d(u)
        return np.stack([speed(u), np.zeros_like(u)], axis=-1)

    return road, road_velocity


def parabola_catenary(
    u_range: Tuple[float, float] = (-1.5, 1.5), n: int = 257, closed_form: bool = True
) -> Roulette:
    """Focus of the parabola y = x^2 / 4 - 1 rolled up the y axis: (cosh u, u).

    With `closed_form` the rotation is the known one, otherwise `roll_curves`
    finds it from the velocities.
    """
    u = _grid(u_range, n)

    def wheel(u: Array) -> Array:
        return np.stack([-2 * np.sinh(u), np.sinh(u) ** 2 - 1], axis=-1)

    def wheel_velocity(u: Array) -> Array:
        return np.stack([-2 * np.cosh(u), 2 * np.sinh(u) * np.cosh(u)], axis=-1)

    def road(u: Array) -> Array:
        return np.stack([np.zeros_like(u), np.sinh(u) * np.cosh(u) + u], axis=-1)

    def road_velocity(u: Array) -> Array:
        return np.stack([np.zeros_like(u), 2 * np.cosh(u) ** 2], axis=-1)

    if closed_form:
        angle = np.arctan2(-1 / np.cosh(u), np.tanh(u))
        rotations = rotation_2d(angle)
        t = road(u) - np.einsum("kab,kb->ka", rotations, wheel(u))
        rolling = PlanarRolling(s=u, angle=angle, t=t)
    else:
        rolling = roll_curves(wheel, road, u, wheel_velocity, road_velocity)
    speed = 2 * np.cosh(u) ** 2
    return Roulette(
        params=u,
        wheel=wheel(u),
        contact=road(u),
        rolling=rolling,
        point=np.zeros(2),
        series=dict(
            wheel_speed=speed,
            road_speed=np.linalg.norm(road_velocity(u), axis=-1),
            catenary=np.stack([np.cosh(u), u], axis=-1),
        ),
    )


def catenary_deviation(roulette: Roulette) -> float:
    """Max distance of a `parabola_catenary` trace from (cosh u, u)."""
    return roulette.deviation(roulette.series["catenary"])


def delaunay_curvature(b: float, eccentricity: float, u: Array) -> Array:
    """Closed-form curvature E sin u / (b (b - E sin u)) of the Delaunay roulette."""
    sin = np.sin(u)
    return eccentricity * sin / (b * (b - eccentricity * sin))


def ellipse_arclength(b: float, start: float = 0.0) -> Curve:
    """Arclength of (cos u, b sin u) from `start`, as b E(u | 1 - 1/b^2).

    The incomplete elliptic integral is smooth to round-off, which keeps second
    differences of the rolled trace free of quadrature noise.
    """
    m = 1 - 1 / b ** 2
    offset = b * scipy.special.ellipeinc(start, m)
    return lambda u: b * scipy.special.ellipeinc(np.asarray(u, dtype=float), m) - offset


def ellipse_delaunay(
    b: float,
    eccentricity: Optional[float] = None,
    u_range: Tuple[float, float] = (0.0, 2 * np.pi),
    n: int = 513,
) -> Roulette:
    """Focus trace of the ellipse (cos u, b sin u) rolled along the x axis.

    The ellipse has focal distance E = sqrt(b^2 - 1) (pass `eccentricity` to
    check it); its focus at (0, E) traces a Delaunay curve whose surface of
    revolution has k1 + k2 = -1/b. Series: the closed-form and general-formula
    curvatures, focal distance and speeds.
    """
    if not b >= 1:
        raise errors.OutOfRange(f"Semi-major axis b={b} must be >= 1")
    focal = float(np.sqrt(b ** 2 - 1))
    if eccentricity is not None and abs(eccentricity - focal) > 1e-12 * b:
        raise ValueError(f"E={eccentricity} does not satisfy E^2 = b^2 - 1 for b={b}")
    u = _grid(u_range, n)

    def wheel(u: Array) -> Array:
        return np.stack([np.cos(u), b * np.sin(u)], axis=-1)

    def wheel_velocity(u: Array) -> Array:
        return np.stack([-np.sin(u), b * np.cos(u)], axis=-1)

    def speed(u: Array) -> Array:
        return np.sqrt(np.sin(u) ** 2 + (b * np.cos(u)) ** 2)

    road, road_velocity = _line_road(ellipse_arclength(b, float(u[0])), speed)
    rolling = roll_curves(wheel, road, u, wheel_velocity, road_velocity)
    focus = np.array([0.0, focal])
    offset = focus - wheel(u)
    acceleration = -wheel(u)
    roulette = Roulette(
        params=u,
        wheel=wheel(u),
        contact=road(u),
        rolling=rolling,
        point=focus,
        series=dict(
            wheel_speed=speed(u),
            road_speed=speed(u),
            focal_distance=np.linalg.norm(offset, axis=-1),
            k_closed=delaunay_curvature(b, focal, u),
            k_roulette=roulette_curvature(wheel_velocity(u), acceleration, offset),
        ),
    )
    LOG.debug("Delaunay roulette b=%g over %d samples", b, n)
    return roulette


def polar_recovery_residual(roulette: Roulette, order: int = 4) -> float:
    """Recover |c0| and |dc0| of the rolled conic from its trace alone.

    The trace normal passes through the contact point on the x axis, giving the
    focal distance |c0| and the contact point; the contact point's speed is
    |dc0|. Returns the max relative gap against the wheel data, over interior
    nodes.
    """
    trace = roulette.trace
    normal = roulette.normal(order)
    distance = np.abs(trace[:, 1] / normal[:, 1])
    foot = trace[:, 0] - trace[:, 1] * normal[:, 0] / normal[:, 1]
    speed = np.abs(grids.derivative(foot, roulette.h, 0, order))
    gaps = [
        np.abs(distance - roulette.series["focal_distance"])
        / roulette.series["focal_distance"],
        np.abs(speed - roulette.series["wheel_speed"]) / roulette.series["wheel_speed"],
    ]
    width = grids.margin(order)
    return float(max(grids.interior(g, width, ndim=1).max() for g in gaps))


def _check_ordering(a: float, b: float, z: float) -> None:
    if not z < a <= b:
        raise errors.OrderingViolation(f"Need z < a <= b, got a={a}, b={b}, z={z}")


def kepler_time(a: float, b: float, z: float, s_hat: Array) -> Array:
    """Closed-form time t(s^) = (sqrt(a-z)/2)(sqrt(b-z) s^ + sqrt(b-a)(cos s^ - 1))."""
    s_hat = np.asarray(s_hat, dtype=float)
    return (
        np.sqrt(a - z)
        / 2
        * (np.sqrt(b - z) * s_hat + np.sqrt(b - a) * (np.cos(s_hat) - 1))
    )


@dataclasses.dataclass(frozen=True)
class KeplerRoll:
    """An ellipse rolled on the road that keeps its focus on the x axis.

    G(t) is the contact point seen from the focus in the body frame; with time
    dt = |G| ds / 2 it is a Kepler orbit about the focus.
    """

    a: float
    b: float
    z: float
    s_hat: Array
    roulette: Roulette
    G: Array  # pylint:disable=invalid-name
    t: Array

    @property
    def s(self) -> Array:
        """Focus abscissa, sqrt(a - z) s^."""
        return np.sqrt(self.a - self.z) * self.s_hat

    @property
    def theta(self) -> Array:
        """Rotation angle of the wheel."""
        return self.roulette.rolling.angle

    @property
    def strength(self) -> float:
        """k = 4 sqrt(b - z) / (a - z) in the inverse-square law."""
        return float(4 * np.sqrt(self.b - self.z) / (self.a - self.z))

    @property
    def period(self) -> float:
        """Closed-form period pi sqrt(a - z) sqrt(b - z)."""
        return float(np.pi * np.sqrt(self.a - self.z) * np.sqrt(self.b - self.z))

    def trace_gap(self) -> float:
        """Max distance of the rolled focus from (s, 0)."""
        target = np.stack([self.s, np.zeros_like(self.s)], axis=-1)
        return self.roulette.deviation(target)

    def measured_period(self, angle: float = np.pi / 2) -> float:
        """Time between two passes of G through the polar `angle`, read off the trace.

        The polar angle of G grows monotonically (constant areal speed), so t is
        interpolated as a function of it; the trace must cover a full turn after
        its first pass.
        """
        polar = np.unwrap(np.arctan2(self.G[:, 1], self.G[:, 0]))
        first = angle + 2 * np.pi * np.ceil((polar[0] - angle) / (2 * np.pi))
        if first + 2 * np.pi > polar[-1]:
            raise errors.OutOfRange(
                f"Trace turns through {polar[-1] - polar[0]:.3g} rad, too little to"
                f" pass angle {angle:.3g} twice"
            )
        time = scipy.interpolate.CubicSpline(polar, self.t)
        return float(time(first + 2 * np.pi) - time(first))

    def time_gap(self) -> float:
        """Max |t - t_closed| relative to the period."""
        closed = kepler_time(self.a, self.b, self.z, self.s_hat)
        return float(np.abs(self.t - closed).max() / self.period)

    def _velocity(self, order: int) -> Tuple[Array, Array]:
        h = grids.spacing(self.s_hat)
        dt = grids.derivative(self.t, h, 0, order)
        return grids.derivative(self.G, h, 0, order) / dt[:, np.newaxis], dt

    def areal_speed(self, order: int = 4) -> Array:
        """|G|^2 dtheta/dt = G x dG/dt, which should be 2."""
        velocity, _ = self._velocity(order)
        return _cross(self.G, velocity)

    def energy(self, order: int = 4) -> Array:
        """|dG/dt|^2 / 2 - k / |G|; constant -2 / (a - z)."""
        velocity, _ = self._velocity(order)
        return np.sum(velocity ** 2, axis=-1) / 2 - self.strength / np.linalg.norm(
            self.G, axis=-1
        )

    def acceleration_gap(self, order: int = 4) -> float:
        """Max relative gap of d2G/dt2 from -k G / |G|^3, over interior nodes."""
        velocity, dt = self._velocity(order)
        h = grids.spacing(self.s_hat)
        acceleration = grids.derivative(velocity, h, 0, order) / dt[:, np.newaxis]
        radius = np.linalg.norm(self.G, axis=-1)[:, np.newaxis]
        law = -self.strength * self.G / radius ** 3
        gap = np.linalg.norm(acceleration - law, axis=-1) / np.linalg.norm(law, axis=-1)
        return float(grids.interior(gap, 2 * grids.margin(order), ndim=1).max())

    def areal_gap(self, order: int = 4) -> float:
        """Max |areal speed - 2| / 2 over interior nodes."""
        gap = np.abs(self.areal_speed(order) - 2) / 2
        return float(grids.interior(gap, grids.margin(order), ndim=1).max())

    def energy_drift(self, order: int = 4) -> float:
        """Max relative change of the energy along the orbit, interior nodes."""
        energy = grids.interior(self.energy(order), grids.margin(order), ndim=1)
        return float(np.abs(energy - energy[0]).max() / abs(energy[0]))


def kepler_period(a: float, b: float, z: float) -> float:
    """One revolution of the time integral of |G| ds / 2, by quadrature."""
    _check_ordering(a, b, z)
    scale = np.sqrt(a - z) / 2

    def rate(s_hat: float) -> float:
        return scale * (np.sqrt(b - z) - np.sqrt(b - a) * np.sin(s_hat))

    return float(scipy.integrate.quad(rate, 0.0, 2 * np.pi, epsabs=1e-13)[0])


def kepler_roll(
    a: float,
    b: float,
    z: float,
    s_range: Optional[Tuple[float, float]] = None,
    n: int = 4097,
) -> KeplerRoll:
    """Roll the ellipse with semi-axes sqrt(a - z), sqrt(b - z) on the road c(s).

    The road keeps the focus on the x axis: its height is -|G|. `s_range` is the
    range of the focus abscissa, one revolution by default.
    """
    _check_ordering(a, b, z)
    minor, major, focal = np.sqrt(a - z), np.sqrt(b - z), np.sqrt(b - a)
    if s_range is None:
        s_range = (0.0, 2 * np.pi * minor)
    s_hat = _grid((s_range[0] / minor, s_range[1] / minor), n)
    focus = np.array([0.0, focal])

    def wheel(u: Array) -> Array:
        return np.stack([minor * np.cos(u), major * np.sin(u)], axis=-1)

    def wheel_velocity(u: Array) -> Array:
        return np.stack([-minor * np.sin(u), major * np.cos(u)], axis=-1)

    def road(u: Array) -> Array:
        return np.stack([minor * u, focal * np.sin(u) - major], axis=-1)

    def road_velocity(u: Array) -> Array:
        return np.stack([minor * np.ones_like(u), focal * np.cos(u)], axis=-1)

    rolling = roll_curves(wheel, road, s_hat, wheel_velocity, road_velocity)
    roulette = Roulette(
        params=s_hat,
        wheel=wheel(s_hat),
        contact=road(s_hat),
        rolling=rolling,
        point=focus,
        series=dict(
            wheel_speed=np.linalg.norm(wheel_velocity(s_hat), axis=-1),
            road_speed=np.linalg.norm(road_velocity(s_hat), axis=-1),
        ),
    )
    G = wheel(s_hat) - focus  # pylint:disable=invalid-name

    def rate(u: float) -> float:
        return minor / 2 * (major - focal * np.sin(u))

    t = _cumulative(rate, 0.0, s_hat)
    return KeplerRoll(a=a, b=b, z=z, s_hat=s_hat, roulette=roulette, G=G, t=t)


def wheel_road_demo(
    s_range: Tuple[float, float] = (0.0, 0.75), n: int = 257
) -> Roulette:
    """A straight wheel with its axle at unit distance, rolled on y = -cosh x.

    The road is (ln(sec s + tan s), -sec s) and the wheel the line y = -1 with
    the axle at the origin; the axle stays at height 0.
    """
    lo, hi = s_range
    if lo < 0 or hi > np.pi / 4:
        raise errors.OutOfRange(f"Road parameter range {s_range} leaves [0, pi/4]")
    s = _grid(s_range, n)

    def wheel(s: Array) -> Array:
        return np.stack([np.tan(s), -np.ones_like(s)], axis=-1)

    def wheel_velocity(s: Array) -> Array:
        return np.stack([1 / np.cos(s) ** 2, np.zeros_like(s)], axis=-1)

    def road(s: Array) -> Array:
        sec = 1 / np.cos(s)
        return np.stack([np.log(sec + np.tan(s)), -sec], axis=-1)

    def road_velocity(s: Array) -> Array:
        sec = 1 / np.cos(s)
        return np.stack([sec, -sec * np.tan(s)], axis=-1)

    rolling = roll_curves(wheel, road, s, wheel_velocity, road_velocity)
    contact = road(s)
    return Roulette(
        params=s,
        wheel=wheel(s),
        contact=contact,
        rolling=rolling,
        point=np.zeros(2),
        series=dict(
            wheel_speed=np.linalg.norm(wheel_velocity(s), axis=-1),
            road_speed=np.linalg.norm(road_velocity(s), axis=-1),
            road_identity=contact[:, 1] + np.cosh(contact[:, 0]),
        ),
    )


def ellipse_on_reflection(
    major: float, minor: float, n: int = 257
) -> Tuple[Roulette, Roulette]:
    """An ellipse rolled once round its mirror image across the y axis.

    Returns the traces of both body foci. Each moving focus stays at distance
    2 * major from the fixed focus on the same side of the origin.
    """
    if not major > minor > 0:
        raise ValueError(f"Need major > minor > 0, got {major}, {minor}")
    u = _grid((0.0, 2 * np.pi), n)
    flip = np.array([-1.0, 1.0])

    def road(u: Array) -> Array:
        return np.stack([major * np.cos(u), minor * np.sin(u)], axis=-1)

    def road_velocity(u: Array) -> Array:
        return np.stack([-major * np.sin(u), minor * np.cos(u)], axis=-1)

    def wheel(u: Array) -> Array:
        return flip * road(u)

    def wheel_velocity(u: Array) -> Array:
        return flip * road_velocity(u)

    rolling = roll_curves(wheel, road, u, wheel_velocity, road_velocity)
    focal = np.sqrt(major ** 2 - minor ** 2)
    speed = np.linalg.norm(road_velocity(u), axis=-1)
    return tuple(  # type: ignore[return-value]
        Roulette(
            params=u,
            wheel=wheel(u),
            contact=road(u),
            rolling=rolling,
            point=np.array([sign * focal, 0.0]),
            series=dict(
                wheel_speed=speed,
                road_speed=speed,
                centre=np.tile([sign * focal, 0.0], (len(u), 1)),
            ),
        )
        for sign in (1.0, -1.0)
    )


def focus_circle_gap(roulette: Roulette, radius: float) -> float:
    """Max | |trace - centre| - radius | for an `ellipse_on_reflection` trace."""
    distance = np.linalg.norm(roulette.trace - roulette.series["centre"], axis=-1)
    return float(np.abs(distance - radius).max())


def circle_on_line(
    radius: float, s_range: Tuple[float, float] = (0.0, 2 * np.pi), n: int = 257
) -> Roulette:
    """A circle rolled along the x axis; its rim point (0, -radius) traces a cycloid.

    The series `cycloid` holds the closed form and `angle` the expected rotation
    -s / radius.
    """
    if not radius > 0:
        raise ValueError(f"Radius must be positive, got {radius}")
    s = _grid(s_range, n)

    def wheel(s: Array) -> Array:
        phase = s / radius - np.pi / 2
        return radius * np.stack([np.cos(phase), np.sin(phase)], axis=-1)

    def wheel_velocity(s: Array) -> Array:
        phase = s / radius - np.pi / 2
        return np.stack([-np.sin(phase), np.cos(phase)], axis=-1)

    road, road_velocity = _line_road(lambda s: s, np.ones_like)
    rolling = roll_curves(wheel, road, s, wheel_velocity, road_velocity)
    phase = s / radius
    return Roulette(
        params=s,
        wheel=wheel(s),
        contact=road(s),
        rolling=rolling,
        point=np.array([0.0, -radius]),
        series=dict(
            wheel_speed=np.ones_like(s),
            road_speed=np.ones_like(s),
            angle=-phase,
            cycloid=radius * np.stack([phase - np.sin(phase), 1 - np.cos(phase)], -1),
        ),
    )
