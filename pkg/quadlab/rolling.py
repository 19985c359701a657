"""Rolling a quadric on its deformations.

A seed x0 applicable to the quadric x_0 is obtained by rolling: x0 = R x_0 + t with
dx0 = R dx_0. The rolling is encoded by the flat connection R^-1 dR = [omega]x,
omega a tangent-vector valued one-form which, in the basis of polynomial ruling
directions w = B x_u, w~ = B x_v, reads

    omega = (uu w - uv w~) du + (vu w - uu w~) dv

The three scalar fields (uu, uv, vu) are stored in a `ConnectionForm`. A ruled seed
has omega = phi(v) w dv, i.e. components (0, 0, phi).
"""

import dataclasses
import logging
from typing import Any, Callable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.interpolate

from . import errors, grids
from .config import DEFAULT, Tolerances
from .frames import RigidMotion, hat, orthogonality_error, polar_project, rk4_step, vee
from .quadric_core import (
    ConfocalFamily,
    b_factor,
    evaluate,
    ruling_directions,
    swap_symmetry,
    unit,
)

LOG = logging.getLogger(__name__)

Array = Any
Components = Tuple[Array, Array, Array]
Connection = Callable[[Array, Array], Components]
Profile = Union[float, Callable[[Array], Array]]

REPROJECT_EVERY = 64


def profile_function(phi: Profile) -> Callable[[Array], Array]:
    """Ruling profile as a vectorized callable (constants allowed)."""
    if callable(phi):
        return phi
    value = float(phi)
    return lambda v: value * np.ones_like(np.asarray(v, dtype=float))


def ruled_connection(phi: Profile) -> Connection:
    """Analytic connection (0, 0, phi(v)) of a ruled seed."""
    profile = profile_function(phi)

    def connection(u: Array, v: Array) -> Components:
        value = profile(np.asarray(v, dtype=float)) * np.ones_like(
            np.asarray(u, dtype=float)
        )
        return np.zeros_like(value), np.zeros_like(value), value

    return connection


def swap_connection(connection: Connection, family: ConfocalFamily) -> Connection:
    """The connection re-expressed in the chart with the rulings exchanged."""
    d = float(np.linalg.det(swap_symmetry(family)))

    def swapped(u: Array, v: Array) -> Components:
        uu, uv, vu = connection(v, u)
        return -d * uu, -d * vu, -d * uv

    return swapped


def omega_vectors(
    family: ConfocalFamily, uu: Array, uv: Array, vu: Array, u: Array, v: Array
) -> Tuple[Array, Array]:
    """Angular-velocity vectors (omega_u, omega_v) from the scalar components."""
    w, w_tilde = ruling_directions(family, 0.0, u, v)
    uu, uv, vu = (np.asarray(c, dtype=float)[..., np.newaxis] for c in (uu, uv, vu))
    return uu * w - uv * w_tilde, vu * w - uu * w_tilde


@dataclasses.dataclass(frozen=True)
class ConnectionForm:
    """Gridded connection components over the (u0, v0) grid (axes "ij")."""

    u: Array
    v: Array
    uu: Array
    uv: Array
    vu: Array

    @classmethod
    def sample(cls, connection: Connection, u: Array, v: Array) -> "ConnectionForm":
        """Sample an analytic connection on a grid."""
        uu, vv = np.meshgrid(u, v, indexing="ij")
        components = connection(uu, vv)
        return cls(np.asarray(u), np.asarray(v), *(np.asarray(c) for c in components))

    @classmethod
    def zero(cls, u: Array, v: Array) -> "ConnectionForm":
        """The trivial connection (the quadric rolled on itself)."""
        zeros = np.zeros((len(u), len(v)))
        return cls(np.asarray(u), np.asarray(v), zeros, zeros, zeros)

    @property
    def components(self) -> Array:
        """Stacked (uu, uv, vu), shape (3, nu, nv)."""
        return np.stack([self.uu, self.uv, self.vu])

    def vectors(self, family: ConfocalFamily) -> Tuple[Array, Array]:
        """(omega_u, omega_v) fields, each (nu, nv, 3)."""
        u, v = np.meshgrid(self.u, self.v, indexing="ij")
        return omega_vectors(family, self.uu, self.uv, self.vu, u, v)

    def interpolator(self) -> Connection:
        """Interpolating callable, cubic where the grid allows it."""
        method = "cubic" if min(len(self.u), len(self.v)) >= 4 else "linear"
        interpolants = [
            scipy.interpolate.RegularGridInterpolator(
                (self.u, self.v), values, method=method
            )
            for values in (self.uu, self.uv, self.vu)
        ]

        def connection(u: Array, v: Array) -> Components:
            u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
            points = np.stack([u.ravel(), v.ravel()], axis=-1)
            uu, uv, vu = (f(points).reshape(u.shape) for f in interpolants)
            return uu, uv, vu

        return connection


def flatness_residual(form: ConnectionForm, family: ConfocalFamily) -> Array:
    """|d omega + omega x omega| per node, d by central differences.

    In components: d_u omega_v - d_v omega_u + omega_u x omega_v.
    """
    omega_u, omega_v = form.vectors(family)
    hu, hv = grids.spacing(form.u), grids.spacing(form.v)
    curl = grids.derivative(omega_v, hu, 0) - grids.derivative(omega_u, hv, 1)
    return np.linalg.norm(curl + np.cross(omega_u, omega_v), axis=-1)


def flatness_field(seed: "Seed") -> Array:
    """Flatness residual of the connection recovered from a seed's shape."""
    return flatness_residual(connection_from_shapes(seed), seed.family)


@dataclasses.dataclass(frozen=True)
class Seed:
    """A surface x applicable to the quadric x_0, with its rolling (R, t).

    Arrays are indexed (i, j) over the grid axes `u`, `v`: `x0`, `x` are (nu, nv, 3),
    `R` is (nu, nv, 3, 3) and `t` (nu, nv, 3).
    """

    family: ConfocalFamily
    u: Array
    v: Array
    x0: Array
    x: Array
    R: Array
    t: Array
    connection: Optional[Connection] = None
    phi: Optional[Array] = None

    @property
    def shape(self) -> Tuple[int, int]:
        """Grid shape (nu, nv)."""
        return len(self.u), len(self.v)

    @property
    def h(self) -> Tuple[float, float]:
        """Grid spacings (hu, hv)."""
        return grids.spacing(self.u), grids.spacing(self.v)

    def motion(self, i: int, j: int) -> RigidMotion:
        """Rolling motion at node (i, j)."""
        return RigidMotion(self.R[i, j], self.t[i, j])

    def swapped(self) -> "Seed":
        """The same surface, mirrored by S, in the chart with rulings exchanged.

        Since x_0(v, u) = S x_0(u, v), S x = (S R S) x_0(u', v') + S t with
        (u', v') = (v, u); rolling on the v-rulings of this seed is rolling on the
        u-rulings of the swapped one.
        """
        s = swap_symmetry(self.family)
        return Seed(
            family=self.family,
            u=self.v,
            v=self.u,
            x0=_transpose(self.x0) @ s.T,
            x=_transpose(self.x) @ s.T,
            R=s @ _transpose(self.R) @ s,
            t=_transpose(self.t) @ s.T,
            connection=(
                None
                if self.connection is None
                else swap_connection(self.connection, self.family)
            ),
            phi=None,
        )


def _transpose(a: Array) -> Array:
    return np.swapaxes(a, 0, 1)


def _anchor(family: ConfocalFamily, v: Array) -> Array:
    """Reference ruling parameter u* away from the central pole."""
    return np.asarray(v, dtype=float) + 1.0 if family.is_central else np.zeros_like(v)


def integrate_frame(
    family: ConfocalFamily,
    connection: Connection,
    path: Array,
    R_init: Optional[Array] = None,  # pylint:disable=invalid-name
    t_init: Optional[Array] = None,
    substeps: int = 1,
    tol: Tolerances = DEFAULT,
) -> Tuple[Array, Array]:
    """Integrate R^-1 dR = [omega]x and dt = -dR x_0 along a polyline in (u, v).

    `path` is (k, 2); returns R (k, 3, 3) and t (k, 3) at the path nodes. Each
    segment takes `substeps` RK4 steps; rotations are re-projected onto SO(3)
    every 64 steps, raising StepTooLarge if they drifted more than `tol.drift`.
    """
    path = np.asarray(path, dtype=float)
    state = np.concatenate(
        [
            np.eye(3).ravel() if R_init is None else np.asarray(R_init).ravel(),
            np.zeros(3) if t_init is None else np.asarray(t_init, dtype=float),
        ]
    )
    rotations, translations = [state[:9].reshape(3, 3)], [state[9:]]
    steps = 0
    for start, end in zip(path[:-1], path[1:]):
        delta = end - start

        def rhs(
            s: float, y: Array, start: Array = start, delta: Array = delta
        ) -> Array:
            u, v = start + s * delta
            omega_u, omega_v = omega_vectors(family, *connection(u, v), u, v)
            omega = omega_u * delta[0] + omega_v * delta[1]
            rotation = y[:9].reshape(3, 3)
            d_rotation = rotation @ hat(omega)
            return np.concatenate(
                [d_rotation.ravel(), -d_rotation @ evaluate(family, 0.0, u, v)]
            )

        h = 1.0 / substeps
        for k in range(substeps):
            state = rk4_step(rhs, k * h, state, h)
            steps += 1
            if steps % REPROJECT_EVERY == 0:
                state[:9] = _reproject(state[:9].reshape(3, 3), tol).ravel()
        rotations.append(state[:9].reshape(3, 3).copy())
        translations.append(state[9:].copy())
    rotations[-1] = _reproject(rotations[-1], tol)
    return np.stack(rotations), np.stack(translations)


def _reproject(rotation: Array, tol: Tolerances) -> Array:
    drift = orthogonality_error(rotation)
    if drift > tol.drift:
        raise errors.StepTooLarge(
            f"Rotation drifted by {drift:.3g} > {tol.drift} before re-projection"
        )
    if drift > 0:
        LOG.debug("Re-projecting rotation with drift %.3g", drift)
    return polar_project(rotation)


def holonomy(
    family: ConfocalFamily, connection: Connection, loop: Array, substeps: int = 1
) -> float:
    """max |R_loop - I| after transporting the identity round a closed polyline."""
    loop = np.asarray(loop, dtype=float)
    if not np.allclose(loop[0], loop[-1]):
        loop = np.concatenate([loop, loop[:1]])
    rotations, _ = integrate_frame(family, connection, loop, substeps=substeps)
    return float(np.abs(rotations[-1] - np.eye(3)).max())


def ruled_seed(
    family: ConfocalFamily,
    phi: Profile,
    u: Sequence[float],
    v: Sequence[float],
    substeps: int = 1,
    tol: Tolerances = DEFAULT,
) -> Seed:
    """Ruled seed x = (R(v), t(v)) x_0 rolled along the v-lines with profile phi.

    The frame is the identity at the first v node; along v it follows
    R' = R [phi w]x, with t anchored on the ruling parameter u*.
    """
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x0 = evaluate(family, 0.0, uu, vv, tol)
    connection = ruled_connection(phi)
    path = np.stack([_anchor(family, v), v], axis=-1)
    rotations, translations = integrate_frame(
        family, connection, path, substeps=substeps, tol=tol
    )
    R = np.broadcast_to(rotations, (len(u),) + rotations.shape)
    t = np.broadcast_to(translations, (len(u),) + translations.shape)
    x = np.einsum("ijab,ijb->ija", R, x0) + t
    return Seed(
        family=family,
        u=u,
        v=v,
        x0=x0,
        x=x,
        R=np.array(R),
        t=np.array(t),
        connection=connection,
        phi=profile_function(phi)(v),
    )


def quadric_seed(
    family: ConfocalFamily, u: Sequence[float], v: Sequence[float]
) -> Seed:
    """The quadric itself as a (trivially rolled) seed."""
    return ruled_seed(family, 0.0, u, v)


def connection_from_shapes(seed: Seed, order: int = 2) -> ConnectionForm:
    """Recover the connection from the difference of second fundamental forms.

    With s_ij the seed's minus the quadric's second fundamental form and g the
    common metric, sqrt(g) omega = (s_uv x_u - s_uu x_v) du + (s_vv x_u - s_uv x_v) dv.
    """
    if min(seed.shape) < 3:
        raise errors.GridTooCoarse(f"Need >= 3 nodes per direction, got {seed.shape}")
    hu, hv = seed.h
    uu, vv = np.meshgrid(seed.u, seed.v, indexing="ij")
    w, w_tilde = ruling_directions(seed.family, 0.0, uu, vv)
    b = b_factor(seed.family, uu, vv)
    xu, xv = w / b[..., np.newaxis], w_tilde / b[..., np.newaxis]
    root_g = np.linalg.norm(np.cross(xu, xv), axis=-1)

    def second_form(x: Array) -> Array:
        xu = grids.derivative(x, hu, 0, order)
        normal = unit(np.cross(xu, grids.derivative(x, hv, 1, order)))
        return np.stack(
            [
                np.sum(grids.second_derivative(x, hu, 0, order) * normal, -1),
                np.sum(grids.mixed_derivative(x, hu, hv, (0, 1), order) * normal, -1),
                np.sum(grids.second_derivative(x, hv, 1, order) * normal, -1),
            ]
        )

    s_uu, s_uv, s_vv = second_form(seed.x) - second_form(seed.x0)
    scale = root_g * b
    return ConnectionForm(seed.u, seed.v, s_uv / scale, s_uu / scale, s_vv / scale)


def first_form(x: Array, h: Tuple[float, float], order: int = 2) -> Array:
    """(E, F, G) of a gridded surface by finite differences."""
    xu = grids.derivative(x, h[0], 0, order)
    xv = grids.derivative(x, h[1], 1, order)
    return np.stack([np.sum(xu * xu, -1), np.sum(xu * xv, -1), np.sum(xv * xv, -1)])


def metric_residual(seed: Seed, order: int = 2) -> float:
    """Max relative gap between the seed's and the quadric's first forms (interior)."""
    gap = first_form(seed.x, seed.h, order) - first_form(seed.x0, seed.h, order)
    scale = first_form(seed.x0, seed.h, order)
    relative = np.moveaxis(np.abs(gap) / np.maximum(scale[0], scale[2]), 0, -1)
    return float(grids.interior(relative, grids.margin(order)).max())


def rolling_residual(seed: Seed, order: int = 2) -> float:
    """Max relative |R dx_0 - dx| over interior nodes."""
    worst = 0.0
    for axis, h in enumerate(seed.h):
        dx0 = grids.derivative(seed.x0, h, axis, order)
        dx = grids.derivative(seed.x, h, axis, order)
        gap = np.linalg.norm(np.einsum("ijab,ijb->ija", seed.R, dx0) - dx, axis=-1)
        relative = gap / np.linalg.norm(dx0, axis=-1)
        worst = max(worst, float(grids.interior(relative, grids.margin(order)).max()))
    return worst


def axis_residual(seed: Seed, order: int = 4) -> float:
    """Kinematic conjugacy: R' along v-lines annihilates the ruling direction x_u.

    Returns max |R^T R_v w| / |R^T R_v| |w| over interior nodes.
    """
    _, hv = seed.h
    d_rotation = grids.derivative(seed.R, hv, 1, order)
    body = np.einsum("ijba,ijbc->ijac", seed.R, d_rotation)
    uu, vv = np.meshgrid(seed.u, seed.v, indexing="ij")
    w, _ = ruling_directions(seed.family, 0.0, uu, vv)
    image = np.einsum("ijab,ijb->ija", body, w)
    scale = np.linalg.norm(vee(body), axis=-1) * np.linalg.norm(w, axis=-1)
    scale = np.maximum(scale, 1e-300)
    relative = np.linalg.norm(image, axis=-1) / scale
    return float(grids.interior(relative, grids.margin(order)).max())


@dataclasses.dataclass(frozen=True)
class PlanarRolling:
    """A wheel curve c0 rolling on a road curve c1: x -> R(s) x + t(s) in the plane."""

    s: Array
    angle: Array
    t: Array

    @property
    def R(self) -> Array:  # pylint:disable=invalid-name
        """Rotation matrices (k, 2, 2)."""
        c, s = np.cos(self.angle), np.sin(self.angle)
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)

    def apply(self, x: Array) -> Array:
        """Image of a body-fixed point (2,) at every sample, (k, 2)."""
        return np.einsum("kab,b->ka", self.R, np.asarray(x, dtype=float)) + self.t

    def motion(self, index: int) -> RigidMotion:
        """The planar motion at one sample, embedded in 3D (z fixed)."""
        rotation = np.eye(3)
        rotation[:2, :2] = self.R[index]
        return RigidMotion(rotation, np.append(self.t[index], 0.0))


def central_derivative(
    curve: Callable[[Array], Array], s: Array, h: float = 1e-3
) -> Array:
    """Fourth-order central difference of a vectorized curve."""
    return (
        -curve(s + 2 * h) + 8 * curve(s + h) - 8 * curve(s - h) + curve(s - 2 * h)
    ) / (12 * h)


def roll_curves(
    c0: Callable[[Array], Array],
    c1: Callable[[Array], Array],
    s: Sequence[float],
    dc0: Optional[Callable[[Array], Array]] = None,
    dc1: Optional[Callable[[Array], Array]] = None,
    tol: Tolerances = DEFAULT,
) -> PlanarRolling:
    """Roll the planar wheel c0 on the road c1 without slipping.

    Both curves are vectorized callables of a common arclength-compatible parameter
    s returning (k, 2). Velocities default to fourth-order differences.
    """
    s = np.asarray(s, dtype=float)
    d0 = (dc0 or (lambda x: central_derivative(c0, x)))(s)
    d1 = (dc1 or (lambda x: central_derivative(c1, x)))(s)
    speed0, speed1 = np.linalg.norm(d0, axis=-1), np.linalg.norm(d1, axis=-1)
    mismatch = np.abs(speed0 - speed1) / np.maximum(1.0, speed0)
    if np.any(mismatch > tol.arclength):
        raise errors.ArcLengthMismatch(
            f"Wheel and road speeds differ by up to {float(mismatch.max()):.3g}"
        )
    angle = np.unwrap(np.arctan2(d1[:, 1], d1[:, 0]) - np.arctan2(d0[:, 1], d0[:, 0]))
    if len(angle) and angle[0] > np.pi:
        angle -= 2 * np.pi
    elif len(angle) and angle[0] <= -np.pi:
        angle += 2 * np.pi
    rolling = PlanarRolling(s=s, angle=angle, t=np.zeros_like(d1))
    t = c1(s) - np.einsum("kab,kb->ka", rolling.R, c0(s))
    return dataclasses.replace(rolling, t=t)
