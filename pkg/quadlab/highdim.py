"""Backlund transformation of n-dimensional Gauss curvature -1 submanifolds of R^(2n-1).

In lines of curvature coordinates such a submanifold is an orthogonal matrix
field A whose first row a gives the metric sum_i a_i^2 (du^i)^2. Forms are stored
by their du^k components: `W[..., k, :, :]` is the du^k part of the Levi-Civita
form omega' (omega'[i, j] = e_i . de_j), and delta = diag(du^1, ..., du^n).
Normal frames carry a zero first column, so tangent and normal blocks are both
n columns wide.
"""

import dataclasses
import functools
import itertools
import logging
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.interpolate

from . import errors, grids
from .config import DEFAULT, Tolerances
from .frames import orthogonality_error, polar_project, rk4_step
from .rolling import REPROJECT_EVERY
from .tangency import curvature_grid

LOG = logging.getLogger(__name__)

Array = Any
Source = Callable[[Array], Tuple[Array, Array]]

DIMENSIONS = (2, 3)


def _transpose(m: Array) -> Array:
    return np.swapaxes(m, -1, -2)


def _unit_matrix(n: int, k: int) -> Array:
    e = np.zeros((n, n))
    e[k, k] = 1.0
    return e


def normal_projector(n: int) -> Array:
    """(J + I) / 2 = diag(0, 1, ..., 1)."""
    return np.diag([0.0] + [1.0] * (n - 1))


@dataclasses.dataclass(frozen=True)
class TTParams:
    """Backlund angle sigma in dimension n."""

    sigma: float
    n: int

    def __post_init__(self) -> None:
        if abs(np.sin(self.sigma)) <= DEFAULT.sing:
            raise errors.OutOfRange(f"sin(sigma) vanishes for sigma={self.sigma}")
        if self.n < 2:
            raise ValueError(f"Dimension n={self.n} must be at least 2")

    @property
    def D(self) -> Array:  # pylint:disable=invalid-name
        """diag(csc sigma, cot sigma, ..., cot sigma)."""
        sin, cos = np.sin(self.sigma), np.cos(self.sigma)
        return np.diag([1 / sin] + [cos / sin] * (self.n - 1))

    @property
    def J(self) -> Array:  # pylint:disable=invalid-name
        """diag(-1, 1, ..., 1)."""
        return np.diag([-1.0] + [1.0] * (self.n - 1))

    def square_gap(self) -> float:
        """max |D^2 - (cot^2 sigma I + e1 e1^T)|."""
        e1 = np.eye(self.n)[0]
        target = np.eye(self.n) / np.tan(self.sigma) ** 2 + np.outer(e1, e1)
        return float(np.abs(self.D @ self.D - target).max())


def connection(a: Array, grad: Array) -> Array:
    """Levi-Civita components W[..., k, i, j] from the first row a.

    `grad[..., j, i]` is d_j a_i. The du^k part of omega'[i, j] is
    [k = i] d_j a_i / a_j - [k = j] d_i a_j / a_i.
    """
    n = a.shape[-1]
    ratio = _transpose(grad) / a[..., np.newaxis, :]
    eye = np.eye(n)
    return np.einsum("ki,...ij->...kij", eye, ratio) - np.einsum(
        "kj,...ji->...kij", eye, ratio
    )


def _check_first_row(a: Array, tol: Tolerances) -> None:
    smallest = float(np.abs(a).min())
    if smallest < tol.first_row:
        raise errors.FirstRowVanishing(
            f"First row entry {smallest:.3g} < {tol.first_row}: immersion degenerates"
        )


@dataclasses.dataclass(frozen=True)
class Immersion:
    """Points x (..., N), tangent frame (..., N, n) and normal frame (..., N, n).

    The first normal column is zero.
    """

    x: Array
    tangent: Array
    normal: Array


@dataclasses.dataclass(frozen=True)
class OrthoField:
    """An orthogonal matrix field A on a product grid, with its connection W.

    `source`, when present, evaluates (A, W) exactly at arbitrary points (m, n);
    otherwise `at` interpolates the grid. `frame` is the immersion, when known.
    """

    axes: Tuple[Array, ...]
    A: Array  # pylint:disable=invalid-name
    W: Array  # pylint:disable=invalid-name
    source: Optional[Source] = None
    frame: Optional[Immersion] = None

    @classmethod
    def from_grid(
        cls,
        axes: Sequence[Sequence[float]],
        A: Array,  # pylint:disable=invalid-name
        order: int = 4,
        tol: Tolerances = DEFAULT,
    ) -> "OrthoField":
        """Field from gridded matrices; W by finite differences of the first row."""
        axes_ = tuple(np.asarray(axis, dtype=float) for axis in axes)
        A = np.asarray(A, dtype=float)
        n = A.shape[-1]
        if len(axes_) != n or A.shape[:-2] != tuple(len(axis) for axis in axes_):
            raise ValueError(
                f"Matrix field of shape {A.shape} does not match {len(axes_)} axes"
            )
        a = A[..., 0, :]
        _check_first_row(a, tol)
        grad = np.stack(
            [
                grids.derivative(a, grids.spacing(axis), k, order)
                for k, axis in enumerate(axes_)
            ],
            axis=-2,
        )
        return cls(axes=axes_, A=A, W=connection(a, grad))

    @property
    def n(self) -> int:
        """Dimension of the submanifold."""
        return int(self.A.shape[-1])

    @property
    def shape(self) -> Tuple[int, ...]:
        """Grid shape."""
        return tuple(self.A.shape[:-2])

    @property
    def h(self) -> Tuple[float, ...]:
        """Grid spacings."""
        return tuple(grids.spacing(axis) for axis in self.axes)

    @property
    def first_row(self) -> Array:
        """a = first row of A, (..., n)."""
        return self.A[..., 0, :]

    def points(self) -> Array:
        """Grid nodes (..., n)."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def orthogonality_error(self) -> float:
        """max |A^T A - I| over the grid."""
        return orthogonality_error(self.A)

    def row_norm_gap(self) -> float:
        """max |sum a_i^2 - 1|."""
        return float(np.abs(np.sum(self.first_row ** 2, axis=-1) - 1).max())

    @functools.cached_property
    def _interpolator(self) -> Any:
        n = self.n
        values = np.concatenate(
            [
                self.A.reshape(self.shape + (n * n,)),
                self.W.reshape(self.shape + (n ** 3,)),
            ],
            axis=-1,
        )
        method = "cubic" if min(self.shape) >= 4 else "linear"
        return scipy.interpolate.RegularGridInterpolator(
            self.axes, values, method=method
        )

    def at(self, points: Array) -> Tuple[Array, Array]:
        """(A, W) at points (m, n)."""
        points = np.asarray(points, dtype=float)
        if self.source is not None:
            return self.source(points)
        n = self.n
        values = self._interpolator(points)
        return (
            values[..., : n * n].reshape(points.shape[:-1] + (n, n)),
            values[..., n * n :].reshape(points.shape[:-1] + (n, n, n)),
        )


def _check_lambda(lam: Sequence[float], n: int) -> Array:
    lam_ = np.asarray(lam, dtype=float)
    if (
        lam_.shape != (n - 1,)
        or np.any(lam_ <= 0)
        or abs(float(np.sum(lam_ ** 2)) - 1) > 1e-12
    ):
        raise errors.BadLambda(
            f"lambda={lam_.tolist()} must be {n - 1} positive numbers with unit norm"
        )
    return lam_


def pseudosphere_source(lam: Sequence[float]) -> Source:
    """Exact (A, W) of the pseudosphere in lines of curvature coordinates v.

    A is the rotation by angle arccos(tanh v^1) in the plane of e1 and (0, lambda);
    its first row is (tanh v^1, sech v^1 lambda).
    """
    lam_ = np.asarray(lam, dtype=float)
    n = len(lam_) + 1
    p1 = np.eye(n)[0]
    p2 = np.concatenate([[0.0], lam_])
    plane = np.outer(p1, p1) + np.outer(p2, p2)
    turn = np.outer(p1, p2) - np.outer(p2, p1)

    def source(points: Array) -> Tuple[Array, Array]:
        v = np.asarray(points, dtype=float)[..., 0]
        t, s = np.tanh(v), 1 / np.cosh(v)
        A = (  # pylint:disable=invalid-name
            np.eye(n)
            + (t - 1)[..., np.newaxis, np.newaxis] * plane
            + s[..., np.newaxis, np.newaxis] * turn
        )
        grad = np.zeros(v.shape + (n, n))
        grad[..., 0, 0] = s ** 2
        grad[..., 0, 1:] = -(s * t)[..., np.newaxis] * lam_
        return A, connection(A[..., 0, :], grad)

    return source


def pseudosphere_frame(lam: Sequence[float], points: Array) -> Immersion:
    """The pseudosphere (v^1 - tanh v^1) e1 + sech v^1 sum lambda_i C_i and its frames.

    C_i = cos v^i e_(2i-1) + sin v^i e_(2i) (0-based components) spans the i-th
    Clifford circle; normals are sech lambda_a e1 + C_a + (tanh - 1) lambda_a Lambda
    with Lambda = sum lambda_i C_i.
    """
    lam_ = np.asarray(lam, dtype=float)
    points = np.asarray(points, dtype=float)
    n = len(lam_) + 1
    size = 2 * n - 1
    v = points[..., 0]
    t, s = np.tanh(v), 1 / np.cosh(v)
    radial = np.zeros(v.shape + (n - 1, size))
    along = np.zeros(v.shape + (n - 1, size))
    for i in range(1, n):
        cos, sin = np.cos(points[..., i]), np.sin(points[..., i])
        radial[..., i - 1, 2 * i - 1], radial[..., i - 1, 2 * i] = cos, sin
        along[..., i - 1, 2 * i - 1], along[..., i - 1, 2 * i] = -sin, cos
    lam_vec = np.einsum("i,...iN->...N", lam_, radial)
    e1 = np.eye(size)[0]
    x = (v - t)[..., np.newaxis] * e1 + s[..., np.newaxis] * lam_vec
    first = t[..., np.newaxis] * e1 - s[..., np.newaxis] * lam_vec
    tangent = np.concatenate([first[..., np.newaxis, :], along], axis=-2)
    normals = (
        (s[..., np.newaxis, np.newaxis] * lam_[:, np.newaxis]) * e1
        + radial
        + ((t - 1)[..., np.newaxis, np.newaxis] * lam_[:, np.newaxis])
        * lam_vec[..., np.newaxis, :]
    )
    normal = np.concatenate([np.zeros(v.shape + (1, size)), normals], axis=-2)
    return Immersion(x=x, tangent=_transpose(tangent), normal=_transpose(normal))


def pseudosphere_field(
    n: int, lam: Optional[Sequence[float]], axes: Sequence[Sequence[float]]
) -> OrthoField:
    """The n-dimensional pseudosphere as an `OrthoField` with its exact immersion.

    `lam` has n - 1 positive entries with unit norm ((1,) when n = 2 and omitted);
    `axes` are the coordinate axes, with v^1 > 0.
    """
    if n not in DIMENSIONS:
        raise ValueError(f"Dimension n={n} must be one of {DIMENSIONS}")
    lam_ = _check_lambda((1.0,) if lam is None and n == 2 else lam, n)
    axes_ = tuple(np.asarray(axis, dtype=float) for axis in axes)
    if len(axes_) != n:
        raise ValueError(f"Need {n} axes, got {len(axes_)}")
    if np.any(axes_[0] <= 0):
        raise errors.OutOfRange("The first coordinate v^1 must be positive")
    source = pseudosphere_source(lam_)
    points = np.stack(np.meshgrid(*axes_, indexing="ij"), axis=-1)
    A, W = source(points)  # pylint:disable=invalid-name
    return OrthoField(
        axes=axes_, A=A, W=W, source=source, frame=pseudosphere_frame(lam_, points)
    )


@dataclasses.dataclass(frozen=True)
class GSGEResidual:
    """Per-node residuals of the two structure equations over the whole grid.

    `gauss` is d omega' + omega' ^ omega' + omega ^ omega^T and `codazzi` is
    delta ^ omega' + A^T dA ^ delta, both maxed over coordinate pairs and entries.
    Only nodes at least `width` layers inside the grid are trusted.
    """

    gauss: Array
    codazzi: Array
    width: int

    @property
    def per_node(self) -> Array:
        """Larger of the two residuals at each node."""
        return np.maximum(self.gauss, self.codazzi)

    @property
    def worst(self) -> float:
        """Largest residual of either equation over trusted nodes."""
        per_node = self.per_node
        return float(grids.interior(per_node, self.width, per_node.ndim).max())

    def is_solution(self, threshold: float) -> bool:
        """Are both residuals below `threshold` everywhere?"""
        return self.worst <= threshold


def gsge_residual(field: OrthoField, order: int = 2) -> GSGEResidual:
    """Both structure equations of `field` by central differences."""
    n, h = field.n, field.h
    A, W = field.A, field.W  # pylint:disable=invalid-name
    a = field.first_row
    eye = np.eye(n)
    gauss, codazzi = [], []
    for k, l in itertools.combinations(range(n), 2):
        w_k, w_l = W[..., k, :, :], W[..., l, :, :]
        curl = grids.derivative(w_l, h[k], k, order) - grids.derivative(
            w_k, h[l], l, order
        )
        wedge = (a[..., k] * a[..., l])[..., np.newaxis, np.newaxis] * (
            np.outer(eye[k], eye[l]) - np.outer(eye[l], eye[k])
        )
        gauss.append(curl + w_k @ w_l - w_l @ w_k + wedge)
        pull_k = _transpose(A) @ grids.derivative(A, h[k], k, order)
        pull_l = _transpose(A) @ grids.derivative(A, h[l], l, order)
        e_k, e_l = _unit_matrix(n, k), _unit_matrix(n, l)
        codazzi.append(e_k @ w_l - e_l @ w_k + pull_k @ e_l - pull_l @ e_k)

    def per_node(terms: Sequence[Array]) -> Array:
        return np.abs(np.stack(terms)).max(axis=(0, -2, -1))

    return GSGEResidual(
        gauss=per_node(gauss),
        codazzi=per_node(codazzi),
        width=2 * grids.margin(order),
    )


def curvature_line_invariants(field: OrthoField) -> Tuple[float, float]:
    """Gaps of sum_a b^i_a b^j_a = -1 (i != j) and sum_i b^i_a a_i^2 = 0.

    b^i_a = A[a, i] / a_i is read from omega'' = delta A^T (J + I) / 2.
    """
    a = field.first_row
    b = field.A[..., 1:, :] / a[..., np.newaxis, :]
    gram = _transpose(b) @ b
    n = field.n
    off = ~np.eye(n, dtype=bool)
    pairs = float(np.abs(gram[..., off] + 1).max())
    asymptotic = float(np.abs(np.einsum("...ai,...i->...a", b, a ** 2)).max())
    return pairs, asymptotic


def ricatti_rhs(
    A1: Array, A0: Array, W_k: Array, k: int, D: Array  # pylint:disable=invalid-name
) -> Array:
    """du^k part of dA1 = A1 omega'_0 + A1 delta A0^T D A1 - D A0 delta."""
    e_k = _unit_matrix(A1.shape[-1], k)
    return A1 @ W_k + A1 @ e_k @ _transpose(A0) @ D @ A1 - D @ A0 @ e_k


def _reproject(state: Array, tol: Tolerances) -> Array:
    drift = orthogonality_error(state)
    if drift > tol.drift:
        raise errors.StepTooLarge(
            f"Ricatti solution drifted by {drift:.3g} > {tol.drift} from orthogonal"
        )
    return polar_project(state)


def tt_backlund(
    seed: OrthoField,
    sigma: float,
    A1_init: Array,  # pylint:disable=invalid-name
    axis_order: Optional[Sequence[int]] = None,
    substeps: int = 1,
    tol: Tolerances = DEFAULT,
) -> OrthoField:
    """Integrate the Ricatti equation for the transform A1 of `seed` at angle sigma.

    Starting from A1_init at the first grid node, RK4 sweeps along each axis in
    `axis_order` (all filled lines at once), re-projecting onto O(n) every 64
    steps. Raises FirstRowVanishing if a first-row entry of A1 gets small.
    """
    n = seed.n
    D = TTParams(sigma, n).D  # pylint:disable=invalid-name
    A1_init = np.asarray(A1_init, dtype=float)
    if A1_init.shape != (n, n) or orthogonality_error(A1_init) > tol.on_quadric:
        raise ValueError(f"A1_init must be an orthogonal {n}x{n} matrix")
    order = tuple(range(n)) if axis_order is None else tuple(axis_order)
    if sorted(order) != list(range(n)):
        raise ValueError(f"axis_order {order} is not a permutation of the axes")
    points = seed.points()
    out = np.full(seed.shape + (n, n), np.nan)
    out[(0,) * n] = A1_init
    steps = 0

    def rhs(s: float, y: Array, base: Array, k: int) -> Array:
        p = base.copy()
        p[:, k] += s
        A0, W = seed.at(p)  # pylint:disable=invalid-name
        return ricatti_rhs(y, A0, W[:, k], k, D)

    for position, k in enumerate(order):
        index = [slice(None) if axis in order[:position] else 0 for axis in range(n)]
        axis = seed.axes[k]
        for j in range(len(axis) - 1):
            here, there = list(index), list(index)
            here[k], there[k] = j, j + 1
            base = points[tuple(here)].reshape(-1, n)
            state = out[tuple(here)].reshape(-1, n, n)
            h = (axis[j + 1] - axis[j]) / substeps
            for m in range(substeps):
                state = rk4_step(
                    functools.partial(rhs, base=base, k=k), m * h, state, h
                )
                steps += 1
                if steps % REPROJECT_EVERY == 0:
                    state = _reproject(state, tol)
            out[tuple(there)] = state.reshape(out[tuple(there)].shape)
    out = _reproject(out, tol)
    _check_first_row(out[..., 0, :], tol)
    LOG.debug("Ricatti sweep of %d steps, sigma=%g", steps, sigma)
    # d_k a1 is the first row of the Ricatti right-hand side, exact at every node
    grad = np.stack(
        [
            ricatti_rhs(out, seed.A, seed.W[..., k, :, :], k, D)[..., 0, :]
            for k in range(n)
        ],
        axis=-2,
    )
    return OrthoField(axes=seed.axes, A=out, W=connection(out[..., 0, :], grad))


def backlund_closure_gap(
    seed: OrthoField,
    sigma: float,
    A1_init: Array,  # pylint:disable=invalid-name
    substeps: int = 1,
    tol: Tolerances = DEFAULT,
) -> float:
    """max |A1| difference between sweeping the axes forwards and backwards."""
    n = seed.n
    forward = tt_backlund(seed, sigma, A1_init, range(n), substeps, tol)
    backward = tt_backlund(seed, sigma, A1_init, range(n - 1, -1, -1), substeps, tol)
    return float(np.abs(forward.A - backward.A).max())


def ricatti_residual(
    seed: OrthoField,
    field: OrthoField,
    sigma: float,
    order: int = 2,
) -> float:
    """max |dA1 - (A1 omega'_0 + A1 delta A0^T D A1 - D A0 delta)| on interior nodes."""
    D = TTParams(sigma, seed.n).D  # pylint:disable=invalid-name
    worst = 0.0
    for k in range(seed.n):
        derivative = grids.derivative(field.A, seed.h[k], k, order)
        gap = derivative - ricatti_rhs(field.A, seed.A, seed.W[..., k, :, :], k, D)
        per_node = np.abs(gap).max(axis=(-2, -1))
        inner = grids.interior(per_node, grids.margin(order), seed.n)
        worst = max(worst, float(inner.max()))
    return worst


def tt_immersion(field: OrthoField, seed: OrthoField, sigma: float) -> Immersion:
    """The transform x1 = x0 + sin(sigma) X0' A1^T e1 with its isoclinic frames.

    X1' = sin(sigma) (X0' A1^T D - X0'' (J + I) / 2) A0 and
    X1'' = sin(sigma) (X0' A1^T + X0'' D) (J + I) / 2.
    """
    if seed.frame is None:
        raise ValueError("The seed field carries no immersion")
    params = TTParams(sigma, seed.n)
    sin = np.sin(sigma)
    projector = normal_projector(seed.n)
    tangent, normal = seed.frame.tangent, seed.frame.normal
    rotated = tangent @ _transpose(field.A)
    return Immersion(
        x=seed.frame.x + sin * rotated[..., :, 0],
        tangent=sin * (rotated @ params.D - normal @ projector) @ seed.A,
        normal=sin * (rotated + normal @ params.D) @ projector,
    )


def immersion_residuals(
    immersion: Immersion, field: OrthoField, order: int = 2
) -> Dict[str, float]:
    """Finite-difference checks of an immersion against its matrix field.

    "omega": dx = X' delta A^T e1; "second": X'^T dX'' = delta A^T (J + I) / 2;
    "normal_connection": X''^T dX'' = 0; "frame": orthonormality of [X' X''].
    """
    n, h = field.n, field.h
    projector = normal_projector(n)
    width = grids.margin(order)
    omega, second, flat = [], [], []
    for k in range(n):
        dx = grids.derivative(immersion.x, h[k], k, order)
        expected = immersion.tangent[..., :, k] * field.first_row[..., k, np.newaxis]
        omega.append(np.abs(dx - expected).max(axis=-1))
        d_normal = grids.derivative(immersion.normal, h[k], k, order)
        target = _unit_matrix(n, k) @ _transpose(field.A) @ projector
        second.append(
            np.abs(_transpose(immersion.tangent) @ d_normal - target).max(axis=(-2, -1))
        )
        flat.append(
            np.abs(_transpose(immersion.normal) @ d_normal).max(axis=(-2, -1))
        )
    frame = np.concatenate([immersion.tangent, immersion.normal[..., 1:]], axis=-1)

    def worst(terms: Sequence[Array]) -> float:
        return float(grids.interior(np.max(terms, axis=0), width, n).max())

    return dict(
        omega=worst(omega),
        second=worst(second),
        normal_connection=worst(flat),
        frame=orthogonality_error(frame),
    )


def normal_connection_residual(
    immersion: Immersion, field: OrthoField, order: int = 2
) -> float:
    """max |X''^T dX''| on interior nodes."""
    return immersion_residuals(immersion, field, order)["normal_connection"]


def isoclinic_angles(first: Immersion, second: Immersion) -> Array:
    """Principal angles (..., n - 1) between the normal spaces of two immersions."""
    overlap = _transpose(first.normal[..., 1:]) @ second.normal[..., 1:]
    cosines = np.linalg.svd(overlap, compute_uv=False)
    return np.arccos(np.clip(cosines, -1.0, 1.0))


def surface_curvature(immersion: Immersion, field: OrthoField, order: int = 2) -> Array:
    """Gauss curvature of a 2-dimensional immersion in R^3, interior nodes."""
    if field.n != 2:
        raise ValueError("Gauss curvature by fundamental forms needs n = 2")
    curvature = curvature_grid(immersion.x, field.h, order)
    return grids.interior(curvature, grids.margin(order))


def _brioschi(x: Array, h: Tuple[float, float], order: int) -> Array:
    xu = grids.derivative(x, h[0], 0, order)
    xv = grids.derivative(x, h[1], 1, order)
    E, F, G = (np.sum(p * q, axis=-1) for p, q in ((xu, xu), (xu, xv), (xv, xv)))

    def d(f: Array, axis: int) -> Array:
        return grids.derivative(f, h[axis], axis, order)

    E_u, E_v, F_u, F_v, G_u, G_v = d(E, 0), d(E, 1), d(F, 0), d(F, 1), d(G, 0), d(G, 1)
    top = -d(E_v, 1) / 2 + d(F_u, 1) - d(G_u, 0) / 2
    first = np.stack(
        [
            np.stack([top, E_u / 2, F_u - E_v / 2], -1),
            np.stack([F_v - G_u / 2, E, F], -1),
            np.stack([G_v / 2, F, G], -1),
        ],
        -2,
    )
    zero = np.zeros_like(E)
    second = np.stack(
        [
            np.stack([zero, E_v / 2, G_u / 2], -1),
            np.stack([E_v / 2, E, F], -1),
            np.stack([G_u / 2, F, G], -1),
        ],
        -2,
    )
    return (np.linalg.det(first) - np.linalg.det(second)) / (E * G - F ** 2) ** 2


def clifford_slice_curvature(
    seed: OrthoField, index: Optional[int] = None, order: int = 2
) -> Array:
    """Intrinsic curvature of the slice v^1 = const of a 3-dimensional seed.

    Slices of the pseudosphere are flat Clifford tori. Interior nodes only.
    """
    if seed.n != 3 or seed.frame is None:
        raise ValueError("Clifford slices need a 3-dimensional seed with an immersion")
    index = seed.shape[0] // 2 if index is None else index
    curvature = _brioschi(seed.frame.x[index], seed.h[1:], order)
    return grids.interior(curvature, 2 * grids.margin(order))


def sign_absorption_gap(
    seed: OrthoField,
    sigma: float,
    A1_init: Array,  # pylint:disable=invalid-name
    tol: Tolerances = DEFAULT,
) -> float:
    """max |x1(sigma, A1) - x1(sigma + pi, J A1)|: A1's rows absorb the sign of sin."""
    J = TTParams(sigma, seed.n).J  # pylint:disable=invalid-name
    plain = tt_immersion(tt_backlund(seed, sigma, A1_init, tol=tol), seed, sigma)
    flipped_sigma = sigma + np.pi
    flipped = tt_backlund(seed, flipped_sigma, J @ np.asarray(A1_init), tol=tol)
    return float(np.abs(tt_immersion(flipped, seed, flipped_sigma).x - plain.x).max())


def tt_permutability(
    A0: Array,  # pylint:disable=invalid-name
    A1: Array,  # pylint:disable=invalid-name
    A2: Array,  # pylint:disable=invalid-name
    sigma1: float,
    sigma2: float,
    tol: Tolerances = DEFAULT,
) -> Array:
    """A3 = X A0 with X (D1 - D2 C) = D1 C - D2, C = A2 A1^T.

    Equivalently X = (D1 A2 - D2 A1)(D1 A1 - D2 A2)^-1. Works on single matrices
    or stacks. Equal angles give A0 back when A1 = A2 and raise SingularClosure
    otherwise, as does an ill-conditioned D1 A1 - D2 A2.
    """
    A0, A1, A2 = (np.asarray(m, dtype=float) for m in (A0, A1, A2))
    n = A0.shape[-1]
    D1, D2 = TTParams(sigma1, n).D, TTParams(sigma2, n).D  # pylint:disable=invalid-name
    if abs(np.sin(sigma1 - sigma2)) <= tol.sing:
        if np.abs(A1 - A2).max() <= tol.sing:
            return A0.copy()
        raise errors.SingularClosure(
            f"Angles {sigma1} and {sigma2} coincide mod pi for different transforms"
        )
    denominator = D1 @ A1 - D2 @ A2
    condition = float(np.max(np.linalg.cond(denominator)))
    if not condition < tol.condition:
        raise errors.SingularClosure(
            f"D1 A1 - D2 A2 has condition number {condition:.3g}"
        )
    return (D1 @ A2 - D2 @ A1) @ np.linalg.inv(denominator) @ A0


@dataclasses.dataclass(frozen=True)
class TTMobius:
    """The eight matrices of a Backlund cube and A7 computed from three corners.

    Vertex k has the transforms of the set bits of k: 1 = sigma1, 2 = sigma2,
    4 = sigma3. `sevens` holds A7 from the faces at vertices 1, 2 and 4.
    """

    sigmas: Tuple[float, float, float]
    vertices: Dict[int, Array]
    sevens: Tuple[Array, Array, Array]

    @property
    def A7(self) -> Array:  # pylint:disable=invalid-name
        """A7 from the faces at vertex 1."""
        return self.sevens[0]

    def agreement_gap(self) -> float:
        """max |D1 D2 D3 (A7 - A7')| over the three computations."""
        n = self.A7.shape[-1]
        scale = np.linalg.multi_dot([TTParams(s, n).D for s in self.sigmas])
        return float(
            max(
                np.abs(scale @ (p - q)).max()
                for p, q in itertools.combinations(self.sevens, 2)
            )
        )

    def orthogonality_error(self) -> float:
        """max |A7^T A7 - I| over all three computations."""
        return max(orthogonality_error(seven) for seven in self.sevens)


def mobius_faces(
    A0: Array,  # pylint:disable=invalid-name
    A1: Array,  # pylint:disable=invalid-name
    A2: Array,  # pylint:disable=invalid-name
    A4: Array,  # pylint:disable=invalid-name
    sigmas: Tuple[float, float, float],
    tol: Tolerances = DEFAULT,
) -> Tuple[Array, Array, Array]:
    """(A3, A5, A6): the three faces of the cube through A0."""
    s1, s2, s3 = sigmas
    return (
        tt_permutability(A0, A1, A2, s1, s2, tol),
        tt_permutability(A0, A1, A4, s1, s3, tol),
        tt_permutability(A0, A2, A4, s2, s3, tol),
    )


def tt_mobius3(
    matrices: Sequence[Array],
    sigmas: Tuple[float, float, float],
    tol: Tolerances = DEFAULT,
) -> TTMobius:
    """A7 from A0..A6, closing the faces at vertices 1, 2 and 4.

    The computations through vertices 1 and 2 are the two expressions for
    D1 D2 D3 A7; they agree when the cube is consistent.
    """
    if len(matrices) != 7:
        raise ValueError(f"Need the seven matrices A0..A6, got {len(matrices)}")
    A = dict(  # pylint:disable=invalid-name
        enumerate(np.asarray(m, dtype=float) for m in matrices)
    )
    s1, s2, s3 = sigmas
    sevens = (
        tt_permutability(A[1], A[3], A[5], s2, s3, tol),
        tt_permutability(A[2], A[3], A[6], s1, s3, tol),
        tt_permutability(A[4], A[5], A[6], s1, s2, tol),
    )
    return TTMobius(sigmas=(s1, s2, s3), vertices=A, sevens=sevens)
