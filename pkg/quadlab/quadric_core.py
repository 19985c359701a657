"""Confocal families of doubly ruled real quadrics.

Two kinds are supported, both given by diagonal data `a`:

 - central (hyperboloid of one sheet), a1 > 0, a3 > 0, a2 < 0:
   Q_z(x) = sum_i x_i^2 / (a_i - z) - 1
 - paraboloid (hyperbolic paraboloid), a1 > 0 > a2:
   Q_z(x) = x1^2 / (a1 - z) + x2^2 / (a2 - z) - 2 x3 + z

Members with a2 < z < min(a1, a3) (central) or a2 < z < a1 (paraboloid) are
doubly ruled and are parametrized by rulings (u, v):

 - central: x_z(u, v) = (c1 (1 - uv), c2 (1 + uv), c3 (u + v)) / (u - v)
 - paraboloid: x_z(u, v) = (c1 (u + v), c2 (u - v), z / 2 + 2 uv)

with c1 = sqrt(a1 - z), c2 = sqrt(z - a2), c3 = sqrt(a3 - z). Every member is the
image of x_0 under the Ivory affinity, which is diagonal (plus a shift along e3 for
paraboloids) and takes ruling (u, v) to ruling (u, v).

Points on x_0 are identified by their ruling parameters `p = (u, v)`.
"""

import dataclasses
import functools
import operator
from typing import Any, Optional, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from . import errors
from .config import DEFAULT, Tolerances
from .frames import RigidMotion

Array = Any
Params = Tuple[float, float]

CENTRAL = "central"
PARABOLOID = "paraboloid"
RULINGS = ("u", "v")


class ConfocalFamily:
    """A doubly ruled real quadric x_0 and its confocal family Q_z.

    Construct with `make_family`, which validates the parameters.
    """

    def __init__(self, kind: str, a: Array):
        self.kind = kind
        self.a = np.asarray(a, dtype=float)
        self.a.setflags(write=False)

    @property
    def is_central(self) -> bool:
        """True for the central (hyperboloid) kind."""
        return self.kind == CENTRAL

    @property
    def z_range(self) -> Tuple[float, float]:
        """Open interval of spectral parameters giving doubly ruled members."""
        if self.is_central:
            return float(self.a[1]), float(min(self.a[0], self.a[2]))
        return float(self.a[1]), float(self.a[0])

    def admissible(self, z: float) -> bool:
        """Is z inside the doubly ruled range?"""
        lo, hi = self.z_range
        return bool(lo < z < hi)

    def check_z(self, z: float) -> None:
        """Raise OutOfRange unless z is admissible."""
        if not self.admissible(z):
            lo, hi = self.z_range
            raise errors.OutOfRange(f"z={z} outside the admissible range ({lo}, {hi})")

    def diagonal(self, z: float = 0.0) -> Array:
        """Diagonal of A_z, the quadratic part of Q_z."""
        inverse = 1.0 / (self.a - z)
        return inverse if self.is_central else np.append(inverse, 0.0)

    def A(self, z: float = 0.0) -> Array:  # pylint:disable=invalid-name
        """A_z as a 3x3 matrix."""
        return np.diag(self.diagonal(z))

    @property
    def B(self) -> Array:  # pylint:disable=invalid-name
        """Linear part: 0 (central) or -e3 (paraboloid)."""
        return np.zeros(3) if self.is_central else np.array([0.0, 0.0, -1.0])

    def R(self, z: float) -> Array:  # pylint:disable=invalid-name
        """R_z = I - z A_0."""
        return np.eye(3) - z * self.A(0.0)

    def coefficients(self, z: float) -> Array:
        """Ruling coefficients (c1, c2[, c3]) of the member x_z."""
        self.check_z(z)
        signs = np.array([1.0, -1.0, 1.0][: len(self.a)])
        return np.sqrt(signs * (self.a - z))

    def ivory_scale(self, z_from: float, z_to: float) -> Array:
        """Diagonal of the Ivory affinity taking member z_from to member z_to."""
        ratio = (self.a - z_to) / (self.a - z_from)
        if np.any(ratio <= 0):
            raise errors.OutOfRange(
                f"No real Ivory affinity between members z={z_from} and z={z_to}"
            )
        scale = np.sqrt(ratio)
        return scale if self.is_central else np.append(scale, 1.0)

    def __eq__(self, other: Any) -> bool:
        return (
            isinstance(other, ConfocalFamily)
            and self.kind == other.kind
            and np.array_equal(self.a, other.a)
        )

    def __hash__(self) -> int:
        return hash((self.kind, tuple(self.a)))

    def __repr__(self) -> str:
        return f"make_family({self.kind!r}, {', '.join(map(repr, self.a.tolist()))})"

    def to_json(self) -> dict:
        """JSON-able description, inverse of `family_from_json`."""
        return dict(kind=self.kind, a=self.a.tolist())


def make_family(
    kind: str, a1: float, a2: float, a3: Optional[float] = None
) -> ConfocalFamily:
    """Validated confocal family.

    `kind` is "central" or "paraboloid" (case-insensitive); `a3` is required for
    central families and must be omitted for paraboloids.
    """
    kind = kind.lower()
    if kind == CENTRAL:
        if a3 is None:
            raise errors.InvalidSignature("A central family needs three parameters")
        a = np.array([a1, a2, a3], dtype=float)
    elif kind == PARABOLOID:
        if a3 is not None:
            raise errors.InvalidSignature("A paraboloid family takes two parameters")
        a = np.array([a1, a2], dtype=float)
    else:
        raise ValueError(f"Unknown family kind {kind!r}, expected central/paraboloid")
    gaps = np.abs(a[:, np.newaxis] - a[np.newaxis, :])[np.triu_indices(len(a), 1)]
    if np.any(gaps <= 1e-12):
        raise errors.DegenerateAxes(f"Family parameters {a.tolist()} coincide")
    if not (a[0] > 0 and a[1] < 0 and (kind == PARABOLOID or a[2] > 0)):
        raise errors.InvalidSignature(
            f"Parameters {a.tolist()} do not give a doubly ruled {kind} quadric"
        )
    return ConfocalFamily(kind, a)


def family_from_json(data: dict) -> ConfocalFamily:
    """Family from `{"kind": ..., "a": [...]}`."""
    return make_family(data["kind"], *data["a"])


def quadric_value(family: ConfocalFamily, z: float, x: Array) -> Array:
    """Q_z(x) for points (..., 3)."""
    x = np.asarray(x, dtype=float)
    quadratic = np.sum(family.diagonal(z) * x ** 2, axis=-1)
    if family.is_central:
        return quadratic - 1.0
    return quadratic - 2 * x[..., 2] + z


def _on_quadric_scale(x: Array) -> Array:
    return np.maximum(1.0, np.sum(np.asarray(x) ** 2, axis=-1))


def check_on_quadric(
    family: ConfocalFamily, z: float, x: Array, tol: Tolerances = DEFAULT
) -> None:
    """Raise OffQuadric unless x lies on x_z."""
    residual = np.abs(quadric_value(family, z, x)) / _on_quadric_scale(x)
    if np.any(residual > tol.on_quadric):
        raise errors.OffQuadric(
            f"Point is off the member z={z}: residual {float(np.max(residual)):.3g}"
        )


def b_factor(family: ConfocalFamily, u: Array, v: Array) -> Array:
    """Normalization B = (u - v)^2 (central) or 1 (paraboloid)."""
    if family.is_central:
        return (np.asarray(u, dtype=float) - v) ** 2
    return np.ones(np.broadcast(np.asarray(u), np.asarray(v)).shape)


def evaluate(
    family: ConfocalFamily, z: float, u: Array, v: Array, tol: Tolerances = DEFAULT
) -> Array:
    """Point x_z(u, v) on the member z; broadcasts over u, v."""
    c = family.coefficients(z)
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    if family.is_central:
        gap = u - v
        if np.any(np.abs(gap) <= tol.sing):
            raise errors.SingularRuling(
                f"|u - v| <= {tol.sing} at the central parametrization pole"
            )
        return (
            np.stack([c[0] * (1 - u * v), c[1] * (1 + u * v), c[2] * (u + v)], axis=-1)
            / gap[..., np.newaxis]
        )
    return np.stack([c[0] * (u + v), c[1] * (u - v), z / 2 + 2 * u * v], axis=-1)


def ruling_directions(
    family: ConfocalFamily, z: float, u: Array, v: Array
) -> Tuple[Array, Array]:
    """Polynomial ruling directions (B x_u, B x_v).

    B x_u depends on v only and B x_v on u only.
    """
    c = family.coefficients(z)
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    if family.is_central:
        wu = np.stack([c[0] * (v ** 2 - 1), -c[1] * (1 + v ** 2), -2 * c[2] * v], -1)
        wv = np.stack([c[0] * (1 - u ** 2), c[1] * (1 + u ** 2), 2 * c[2] * u], -1)
        return wu, wv
    ones = np.ones_like(u)
    wu = np.stack([c[0] * ones, c[1] * ones, 2 * v], -1)
    wv = np.stack([c[0] * ones, -c[1] * ones, 2 * u], -1)
    return wu, wv


def ruling_direction(
    family: ConfocalFamily, z: float, p: Params, ruling: str = "u"
) -> Array:
    """One polynomial ruling direction at p: "u" gives B x_u, "v" gives B x_v."""
    if ruling not in RULINGS:
        raise ValueError(f"Ruling must be one of {RULINGS}, got {ruling!r}")
    wu, wv = ruling_directions(family, z, p[0], p[1])
    return wu if ruling == "u" else wv


def ruling_base_point(family: ConfocalFamily, z: float, v: Array) -> Array:
    """A point on the u-ruling with parameter v (its limit u -> inf when central)."""
    c = family.coefficients(z)
    v = np.asarray(v, dtype=float)
    if family.is_central:
        components = [-c[0] * v, c[1] * v, c[2] * np.ones_like(v)]
    else:
        components = [c[0] * v, -c[1] * v, z / 2 * np.ones_like(v)]
    return np.stack(components, axis=-1)


def swap_symmetry(family: ConfocalFamily) -> Array:
    """The isometry S with x_z(v, u) = S x_z(u, v) (exchanges the ruling families)."""
    return -np.eye(3) if family.is_central else np.diag([1.0, -1.0, 1.0])


def normal_hat(
    family: ConfocalFamily,
    z: float,
    p: Array,
    check: bool = True,
    tol: Tolerances = DEFAULT,
) -> Array:
    """Non-unit normal N_z = A_z p + B at points p (..., 3) of the member z.

    Valid for any z away from the a_i, including ellipsoid-type members.
    """
    p = np.asarray(p, dtype=float)
    if check:
        check_on_quadric(family, z, p, tol)
    return family.diagonal(z) * p + family.B


def unit(v: Array) -> Array:
    """v / |v| along the last axis."""
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def ivory_map(
    family: ConfocalFamily, z: float, p: Array, tol: Tolerances = DEFAULT
) -> Array:
    """Ivory image on x_z of points p (..., 3) on x_0."""
    family.check_z(z)
    check_on_quadric(family, 0.0, p, tol)
    return ivory_between(family, 0.0, z, p)


def ivory_between(
    family: ConfocalFamily, z_from: float, z_to: float, p: Array
) -> Array:
    """Ivory affinity between any two members with a real affinity."""
    shift = 0.0 if family.is_central else np.array([0.0, 0.0, (z_to - z_from) / 2])
    return np.asarray(p, dtype=float) * family.ivory_scale(z_from, z_to) + shift


@dataclasses.dataclass(frozen=True)
class EllipticCoords:
    """Spectral parameters of the confocal members through a point, ascending."""

    point: Tuple[float, float, float]
    roots: Tuple[float, ...]

    def __iter__(self) -> Any:
        return iter(self.roots)


def polynomial_product(factors: Any) -> Polynomial:
    """Product of a sequence of polynomials."""
    return functools.reduce(operator.mul, factors)


def confocal_polynomial(family: ConfocalFamily, q: Array) -> Polynomial:
    """Cubic in z whose roots are the members through q (Q_z(q) times prod(a_i - z))."""
    q = np.asarray(q, dtype=float)
    factors = [Polynomial([a, -1.0]) for a in family.a]
    if family.is_central:
        total = -polynomial_product(factors)
        for i, x in enumerate(q):
            others = [f for j, f in enumerate(factors) if j != i]
            total = total + x ** 2 * polynomial_product(others)
        return total
    a_factor, b_factor_ = factors
    return (
        q[0] ** 2 * b_factor_
        + q[1] ** 2 * a_factor
        + Polynomial([-2 * q[2], 1.0]) * a_factor * b_factor_
    )


def elliptic_coords(
    family: ConfocalFamily, q: Array, tol: Tolerances = DEFAULT
) -> EllipticCoords:
    """Elliptic (paraboloidal) coordinates of q: three real, separated roots."""
    q = np.asarray(q, dtype=float)
    roots = confocal_polynomial(family, q).roots()
    scale = max(1.0, float(np.max(np.abs(family.a))))
    if np.any(np.abs(roots.imag) > 1e3 * tol.deg * scale):
        raise errors.ComplexRoots(f"Confocal members through {q.tolist()} are complex")
    roots = np.sort(roots.real)
    if np.any(np.diff(roots) <= tol.deg * scale):
        raise errors.DegeneratePoint(
            f"Elliptic coordinates collide at {q.tolist()}: {roots.tolist()}"
        )
    return EllipticCoords(point=tuple(q.tolist()), roots=tuple(roots.tolist()))


def lame_residual(family: ConfocalFamily, coords: EllipticCoords) -> float:
    """Largest |cos| between unit normals of the members through a point."""
    q = np.array(coords.point)
    normals = unit(np.stack([normal_hat(family, z, q, check=False) for z in coords]))
    gram = normals @ normals.T
    return float(np.abs(gram - np.eye(len(normals))).max())


def _line_pieces(family: ConfocalFamily, z: float) -> Tuple[Array, ...]:
    """x_z(u, v) = (a0 + v a1 + u (b0 + v b1)) / (g0 + v g1 + u d), as coefficients."""
    c = family.coefficients(z)
    if family.is_central:
        return (
            np.array([c[0], c[1], 0.0]),
            np.array([0.0, 0.0, c[2]]),
            np.array([0.0, 0.0, c[2]]),
            np.array([-c[0], c[1], 0.0]),
            0.0,
            -1.0,
            1.0,
        )
    return (
        np.array([0.0, 0.0, z / 2]),
        np.array([c[0], -c[1], 0.0]),
        np.array([c[0], c[1], 0.0]),
        np.array([0.0, 0.0, 2.0]),
        1.0,
        0.0,
        0.0,
    )


def plane_coefficients(
    family: ConfocalFamily, z: float, point: Array, normal: Array
) -> Array:
    """Coefficients (e00, e01, e10, e11) of the plane condition on x_z.

    (x_z(u, v) - point) . normal = 0 is, after clearing the pole,
    e00 + e01 v + u (e10 + e11 v) = 0. Broadcasts over stacks of planes, with the
    coefficients on the first axis.
    """
    a0, a1, b0, b1, g0, g1, d = _line_pieces(family, z)
    normal = np.asarray(normal, dtype=float)
    offset = np.sum(np.asarray(point, dtype=float) * normal, axis=-1)
    return np.stack(
        [
            normal @ a0 - g0 * offset,
            normal @ a1 - g1 * offset,
            normal @ b0 - d * offset,
            normal @ b1,
        ]
    )


def tangent_plane(family: ConfocalFamily, p: Params) -> Tuple[Array, Array]:
    """Point x_0(p) and normal N_0 there."""
    x = evaluate(family, 0.0, p[0], p[1])
    return x, normal_hat(family, 0.0, x, check=False)


def tc_residual(family: ConfocalFamily, z: float, p0: Params, p1: Params) -> float:
    """(x_z(p1) - x_0(p0)) . N_0(p0); zero in tangency configuration."""
    x0, n0 = tangent_plane(family, p0)
    return float((evaluate(family, z, p1[0], p1[1]) - x0) @ n0)


def tc_solve_u1_field(
    family: ConfocalFamily,
    z: float,
    u0: Array,
    v0: Array,
    v1: Array,
    tol: Tolerances = DEFAULT,
) -> Array:
    """Vectorized `tc_solve_u1` over broadcast arrays of (u0, v0, v1)."""
    u0, v0, v1 = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (u0, v0, v1))
    )
    x0 = evaluate(family, 0.0, u0, v0, tol)
    n0 = normal_hat(family, 0.0, x0, check=False)
    e00, e01, e10, e11 = plane_coefficients(family, z, x0, n0)
    numerator = e00 + e01 * v1
    denominator = e10 + e11 * v1
    scale = (
        np.linalg.norm(n0, axis=-1)
        * (1 + np.linalg.norm(x0, axis=-1))
        * (1 + np.abs(v1))
    )
    pole = np.abs(denominator) <= tol.residual * scale
    if np.any(pole):
        degenerate = pole & (np.abs(numerator) <= tol.residual * scale)
        index = tuple(np.argwhere(degenerate if np.any(degenerate) else pole)[0])
        where = f"p0=({u0[index]}, {v0[index]}), v1={v1[index]}"
        if np.any(degenerate):
            raise errors.DegenerateHomography(
                f"Tangency equation for u1 degenerates at {where} (coefficients"
                f" {numerator[index]:.3g}, {denominator[index]:.3g})"
            )
        raise errors.OutOfRange(f"Tangency partner at {where} is at u1 = infinity")
    u1 = -numerator / denominator
    if family.is_central and np.any(np.abs(u1 - v1) <= tol.sing):
        raise errors.SingularRuling("Tangency point at infinity (u1 = v1)")
    return u1


def tc_solve_u1(
    family: ConfocalFamily,
    z: float,
    p0: Params,
    v1: float,
    tol: Tolerances = DEFAULT,
) -> float:
    """u1 putting x_z(u1, v1) in the tangent plane of x_0 at p0."""
    return float(tc_solve_u1_field(family, z, p0[0], p0[1], v1, tol))


def _orthonormal_frame(columns: Array) -> Array:
    q, r = np.linalg.qr(columns)
    return q * np.sign(np.diag(r))


def rmpia_frames(
    family: ConfocalFamily,
    z: float,
    p0: Params,
    p1: Params,
    ruling0: str = "u",
    ruling1: str = "u",
) -> Tuple[Array, Array]:
    """Source and target triples (as columns) of the Ivory rigid motion.

    Source [V01, w0(p0), wz(p1)] maps to target [-V10, wz(p0), w0(p1)], where
    V01 = x_z(p1) - x_0(p0) and V10 = x_z(p0) - x_0(p1).
    """
    v01 = evaluate(family, z, *p1) - evaluate(family, 0.0, *p0)
    v10 = evaluate(family, z, *p0) - evaluate(family, 0.0, *p1)
    source = np.stack(
        [
            v01,
            ruling_direction(family, 0.0, p0, ruling0),
            ruling_direction(family, z, p1, ruling1),
        ],
        axis=1,
    )
    target = np.stack(
        [
            -v10,
            ruling_direction(family, z, p0, ruling0),
            ruling_direction(family, 0.0, p1, ruling1),
        ],
        axis=1,
    )
    return source, target


def rmpia(
    family: ConfocalFamily,
    z: float,
    p0: Params,
    p1: Params,
    ruling0: str = "u",
    ruling1: str = "u",
    tol: Tolerances = DEFAULT,
) -> RigidMotion:
    """Rigid motion provided by the Ivory affinity.

    Maps x_0(p0) -> x_z(p0) and x_z(p1) -> x_0(p1), together with the chosen ruling
    directions at those points.
    """
    source, target = rmpia_frames(family, z, p0, p1, ruling0, ruling1)
    if z == 0:
        return RigidMotion.identity()
    normalized = source / np.linalg.norm(source, axis=0)
    if abs(np.linalg.det(normalized)) <= tol.deg:
        raise errors.DegenerateFrame(
            f"Ivory frame is degenerate at p0={tuple(p0)}, p1={tuple(p1)}, z={z}"
        )
    rotation = _orthonormal_frame(target) @ _orthonormal_frame(source).T
    translation = evaluate(family, z, *p0) - rotation @ evaluate(family, 0.0, *p0)
    return RigidMotion(rotation, translation)


def motion(family: ConfocalFamily, z: float, p: Params, q: Params) -> RigidMotion:
    """The u-ruling Ivory rigid motion between tangency partners p and q."""
    return rmpia(family, z, p, q)


def rmpia_residual(
    family: ConfocalFamily,
    z: float,
    p0: Params,
    p1: Params,
    rigid: RigidMotion,
    ruling0: str = "u",
    ruling1: str = "u",
) -> float:
    """Largest residual of the four point/direction mappings of `rmpia`."""
    gaps = [
        rigid(evaluate(family, 0.0, *p0)) - evaluate(family, z, *p0),
        rigid(evaluate(family, z, *p1)) - evaluate(family, 0.0, *p1),
        rigid.rotate(ruling_direction(family, 0.0, p0, ruling0))
        - ruling_direction(family, z, p0, ruling0),
        rigid.rotate(ruling_direction(family, z, p1, ruling1))
        - ruling_direction(family, 0.0, p1, ruling1),
    ]
    return float(max(np.abs(gap).max() for gap in gaps))


def gram_gap(
    family: ConfocalFamily,
    z: float,
    p0: Params,
    p1: Params,
    ruling0: str = "u",
    ruling1: str = "u",
) -> float:
    """Relative gap between the Gram matrices of the source and target triples."""
    source, target = rmpia_frames(family, z, p0, p1, ruling0, ruling1)
    gram_s, gram_t = source.T @ source, target.T @ target
    return float(np.abs(gram_s - gram_t).max() / max(1.0, np.abs(gram_s).max()))
