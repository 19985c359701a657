"""Bianchi quadrilaterals, the permutability of Backlund transforms and their lattices.

Points p0, p1, p2, p3 of x_0 are in simultaneous tangency configuration (SITC) for
spectral parameters z1, z2 when the pairs (0, 1) and (2, 3) are in tangency
configuration at z1 and the pairs (0, 2) and (1, 3) at z2. Given p0, p1, p2 the
fourth point solves

    (x_z2(p3) - x_0(p1)) . N_0(p1) = 0      (x_z1(p3) - x_0(p2)) . N_0(p2) = 0

Both equations are bilinear in (u3, v3). Eliminating u3 leaves a quadratic in v3,
so a quadrilateral closes in two ways. On the "same" closure the ruling ratio

    [w_z1(p1) . N(p0)] [w_z1(p2) . N(p3)] / ([w_z2(p1) . N(p3)] [w_z2(p2) . N(p0)])

equals z1 / z2 (w the u-ruling directions B x_u). The "flipped" closure satisfies
the same law with the v-ruling directions at p2. The "same" v3 depends on v0, v1, v2
only, through a separately linear relation; `homography_fit` recovers it.
"""

import concurrent.futures
import dataclasses
import itertools
import logging
from typing import Any, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from . import config, errors
from .backlund import Leaf, first_form_gap, require_rolling, rolling_gap
from .config import DEFAULT, Tolerances
from .frames import RigidMotion
from .quadric_core import (
    ConfocalFamily,
    Params,
    evaluate,
    motion,
    plane_coefficients,
    ruling_direction,
    tangent_plane,
    tc_residual,
    tc_solve_u1,
)
from .rolling import Seed
from .tangency import area_constant, delta_pair, gauss_curvature

LOG = logging.getLogger(__name__)

Array = Any
SAME = "same"
FLIPPED = "flipped"
BRANCHES = (SAME, FLIPPED)
POLISH_STEPS = 3
# exponents of (v0, v1, v2, v3) in the separately linear relation
MONOMIALS = tuple(itertools.product((0, 1), repeat=4))


def _check_branch(branch: str) -> None:
    if branch not in BRANCHES:
        raise ValueError(f"Branch must be one of {BRANCHES}, got {branch!r}")


def _params(p: Params) -> Tuple[float, float]:
    return float(p[0]), float(p[1])


def closure_equations(
    family: ConfocalFamily, z1: float, z2: float, p1: Params, p2: Params
) -> Array:
    """Rows (e00, e01, e10, e11) of the closure equations for p3.

    Each reads e00 + e01 v + u (e10 + e11 v) = 0 in p3 = (u, v).
    """
    x1, n1 = tangent_plane(family, p1)
    x2, n2 = tangent_plane(family, p2)
    return np.stack(
        [
            plane_coefficients(family, z2, x1, n1),
            plane_coefficients(family, z1, x2, n2),
        ]
    )


def _closure_values(equations: Array, p: Array) -> Array:
    e00, e01, e10, e11 = equations.T
    return e00 + e01 * p[1] + p[0] * (e10 + e11 * p[1])


def _closure_jacobian(equations: Array, p: Array) -> Array:
    _, e01, e10, e11 = equations.T
    return np.stack([e10 + e11 * p[1], e01 + e11 * p[0]], axis=-1)


def _solve_u(equations: Array, v: float) -> float:
    e00, e01, e10, e11 = equations.T
    denominators = e10 + e11 * v
    k = int(np.argmax(np.abs(denominators)))
    if denominators[k] == 0:
        raise errors.DegenerateHomography(f"Both closure equations lose u at v3={v}")
    return float(-(e00[k] + e01[k] * v) / denominators[k])


def sitc_roots(
    family: ConfocalFamily,
    z1: float,
    z2: float,
    p1: Params,
    p2: Params,
    tol: Tolerances = DEFAULT,
) -> List[Tuple[float, float]]:
    """The real closures (u3, v3) of the quadrilateral on p1 (z1 edge) and p2 (z2 edge).

    Resultant of the two closure equations in u3: a quadratic in v3. Raises
    NoRealBranch on a negative discriminant or when the equations coincide.
    """
    equations = closure_equations(family, z1, z2, p1, p2)
    (e00, e01, e10, e11), (f00, f01, f10, f11) = equations
    coefficients = np.array(
        [
            f00 * e10 - f10 * e00,
            f00 * e11 + f01 * e10 - f10 * e01 - f11 * e00,
            f01 * e11 - f11 * e01,
        ]
    )
    scale = np.abs(coefficients).max()
    if scale == 0:
        raise errors.NoRealBranch(
            f"Closure equations coincide for p1={tuple(p1)}, p2={tuple(p2)}"
        )
    c0, c1, c2 = coefficients
    discriminant = c1 ** 2 - 4 * c2 * c0
    if discriminant < -tol.deg * (c1 ** 2 + 4 * abs(c2 * c0)):
        raise errors.NoRealBranch(
            f"Closure discriminant {discriminant:.3g} < 0 for p1={tuple(p1)},"
            f" p2={tuple(p2)}"
        )
    quadratic = Polynomial(coefficients).trim(tol=tol.deg * scale)
    if quadratic.degree() < 1:
        raise errors.NoRealBranch(f"Closure resultant is constant ({c0:.3g})")
    roots = sorted({float(r.real) for r in quadratic.roots()})
    return [(_solve_u(equations, v3), v3) for v3 in roots]


def ruling_ratio(
    family: ConfocalFamily,
    z1: float,
    z2: float,
    p0: Params,
    p1: Params,
    p2: Params,
    p3: Params,
    ruling: str = "u",
) -> float:
    """Ratio of ruling/normal products around the quadrilateral; z1 / z2 on a closure.

    `ruling` picks the ruling family used at p2 ("v" for the flipped closure).
    """

    def dot(z: float, a: Params, b: Params, which: str = "u") -> float:
        normal = tangent_plane(family, b)[1]
        return float(ruling_direction(family, z, a, which) @ normal)

    numerator = dot(z1, p1, p0) * dot(z1, p2, p3, ruling)
    return numerator / (dot(z2, p1, p3) * dot(z2, p2, p0, ruling))


def _polish(equations: Array, p: Tuple[float, float]) -> Tuple[float, float]:
    """At most POLISH_STEPS Newton steps, keeping the best iterate."""
    best = current = np.array(p)
    best_norm = start_norm = np.abs(_closure_values(equations, best)).max()
    for _ in range(POLISH_STEPS):
        try:
            step = np.linalg.solve(
                _closure_jacobian(equations, current),
                _closure_values(equations, current),
            )
        except np.linalg.LinAlgError:
            break
        current = current - step
        norm = np.abs(_closure_values(equations, current)).max()
        if norm < best_norm:
            best, best_norm = current, norm
    if best_norm == start_norm:
        LOG.debug("SITC polish reverted at (%.6g, %.6g)", *p)
    return float(best[0]), float(best[1])


def sitc_complete(
    family: ConfocalFamily,
    z1: float,
    z2: float,
    p0: Params,
    p1: Params,
    p2: Params,
    branch: str = SAME,
    tol: Tolerances = DEFAULT,
) -> Tuple[float, float]:
    """Close the Bianchi quadrilateral p0, p1 (at z1), p2 (at z2) with p3.

    Both closures come from the resultant; `branch` "same" takes the one whose ruling
    ratio is nearest z1 / z2, "flipped" the other. The pick is polished by Newton on
    the closure equations. With z1 == z2 and p1 == p2 the quadrilateral is
    degenerate and closes on p0.
    """
    _check_branch(branch)
    if z1 == z2 and _params(p1) == _params(p2):
        return _params(p0)
    roots = sitc_roots(family, z1, z2, p1, p2, tol)
    target = z1 / z2
    gaps = [
        abs(ruling_ratio(family, z1, z2, p0, p1, p2, root) - target) for root in roots
    ]
    ranked = [roots[k] for k in np.argsort(gaps)]
    chosen = ranked[0] if branch == SAME else ranked[-1]
    return _polish(closure_equations(family, z1, z2, p1, p2), chosen)


def sitc_newton(
    family: ConfocalFamily,
    z1: float,
    z2: float,
    p0: Params,
    p1: Params,
    p2: Params,
    guess: Optional[Params] = None,
    max_steps: int = 25,
    tol: Tolerances = DEFAULT,
) -> Tuple[float, float]:
    """Newton on the closure equations from the parallelogram guess p1 + p2 - p0.

    Converges to whichever closure is nearer the guess; raises NewtonDivergence when
    it does not converge in `max_steps`.
    """
    equations = closure_equations(family, z1, z2, p1, p2)
    if guess is None:
        guess = np.asarray(p1, dtype=float) + np.asarray(p2, dtype=float) - p0
    current = np.array(guess, dtype=float)
    for _ in range(max_steps):
        jacobian = _closure_jacobian(equations, current)
        if abs(np.linalg.det(jacobian)) <= tol.deg * max(1.0, np.abs(jacobian).max()):
            raise errors.NewtonDivergence(
                f"Singular closure Jacobian at ({current[0]:.6g}, {current[1]:.6g})"
            )
        step = np.linalg.solve(jacobian, _closure_values(equations, current))
        current = current - step
        if not np.all(np.isfinite(current)):
            break
        if np.abs(step).max() <= tol.residual * (1 + np.abs(current).max()):
            return float(current[0]), float(current[1])
    raise errors.NewtonDivergence(
        f"SITC Newton did not converge in {max_steps} steps from guess {tuple(guess)}"
    )


def _line_meet(
    point: Array, direction: Array, other: Array, other_direction: Array
) -> float:
    """Parameter t of the meeting point point + t direction with another line."""
    matrix = np.stack([direction, -other_direction], axis=1)
    solution, *_ = np.linalg.lstsq(matrix, other - point, rcond=None)
    miss = matrix @ solution - (other - point)
    if np.linalg.norm(miss) > 1e-6 * max(1.0, np.linalg.norm(other - point)):
        raise errors.NoIntersection(
            f"Lines miss each other by {np.linalg.norm(miss):.3g}"
        )
    return float(solution[0])


def cross_ratio_check(
    family: ConfocalFamily,
    z1: float,
    z2: float,
    p0: Params,
    p1: Params,
    p2: Params,
    p3: Params,
) -> float:
    """Cross ratio along the line [x_z1(p0), x_z2(p3)]; z1 / z2 on the same closure.

    With A = x_z1(p0) at 0 and B = x_z2(p3) at 1, the first point is where the line
    meets the u-ruling of x_0 through p1. The second is found on [x_z2(p0), x_z1(p3)]
    (mapped onto [A, B] by the rigid motion between the two lines) where the u-ruling
    through p2 crosses it. Returns cr(A, B; P1, P2).
    """
    a, b = evaluate(family, z1, *p0), evaluate(family, z2, *p3)
    c, d = evaluate(family, z2, *p0), evaluate(family, z1, *p3)
    s1 = _line_meet(
        a, b - a, evaluate(family, 0.0, *p1), ruling_direction(family, 0.0, p1)
    )
    s2 = _line_meet(
        c, d - c, evaluate(family, 0.0, *p2), ruling_direction(family, 0.0, p2)
    )
    return s1 * (1 - s2) / (s2 * (1 - s1))


def cocycle_residual(
    family: ConfocalFamily,
    z1: float,
    z2: float,
    p0: Params,
    p1: Params,
    p2: Params,
    p3: Params,
) -> float:
    """Distance between the two compositions of Ivory motions around a quadrilateral.

    M(z1; 0, 1) M(z2; 2, 0) and M(z2; 3, 1) M(z1; 2, 3) both take x_z2(p0) to
    x_z1(p0) and x_z1(p3) to x_z2(p3).
    """
    left = motion(family, z1, p0, p1) @ motion(family, z2, p2, p0)
    right = motion(family, z2, p3, p1) @ motion(family, z1, p2, p3)
    return left.distance(right)


def cad_gap(
    family: ConfocalFamily,
    z1: float,
    z2: float,
    p0: Params,
    p1: Params,
    p2: Params,
    p3: Params,
) -> float:
    """Relative gap of a necessary condition on the v parameters of a closure:

        z2 D-(z1; 0, 1) / z1 D-(z2; 1, 3) = z1 D-(z2; 0, 2) / z2 D-(z1; 2, 3)

    D-(z; a, b) is D- at p_a for a partner on the v_b ruling; it ignores u_a.
    """

    def minus(z: float, a: Params, b: Params) -> float:
        return float(delta_pair(family, z, a, b[1])[0])

    lhs = z2 * minus(z1, p0, p1) / (z1 * minus(z2, p1, p3))
    rhs = z1 * minus(z2, p0, p2) / (z2 * minus(z1, p2, p3))
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs))


def _relative_tc(family: ConfocalFamily, z: float, pa: Params, pb: Params) -> float:
    x, n = tangent_plane(family, pa)
    scale = np.linalg.norm(n) * max(1.0, float(np.linalg.norm(x)))
    return abs(tc_residual(family, z, pa, pb)) / scale


@dataclasses.dataclass(frozen=True)
class BianchiQuad:
    """A closed Bianchi quadrilateral: p0, p1 (z1 edge), p2 (z2 edge) and p3."""

    family: ConfocalFamily
    z1: float
    z2: float
    p0: Tuple[float, float]
    p1: Tuple[float, float]
    p2: Tuple[float, float]
    p3: Tuple[float, float]
    branch: str = SAME

    # (a, b, 1 for z1 or 2 for z2)
    EDGES = ((0, 1, 1), (0, 2, 2), (1, 3, 2), (2, 3, 1))

    @classmethod
    def close(
        cls,
        family: ConfocalFamily,
        z1: float,
        z2: float,
        p0: Params,
        p1: Params,
        p2: Params,
        branch: str = SAME,
        tol: Tolerances = DEFAULT,
    ) -> "BianchiQuad":
        """Complete p0, p1, p2 with `sitc_complete`."""
        p3 = sitc_complete(family, z1, z2, p0, p1, p2, branch, tol)
        return cls(
            family, z1, z2, _params(p0), _params(p1), _params(p2), p3, branch
        )

    @property
    def points(self) -> Array:
        """Ruling parameters of p0..p3, shape (4, 2)."""
        return np.array([self.p0, self.p1, self.p2, self.p3])

    @property
    def signatures(self) -> Tuple[int, int, int, int]:
        """Ruling signature of each vertex; the product is always 1."""
        return (1, 1, 1, 1) if self.branch == SAME else (1, 1, -1, -1)

    def tangency_residuals(self) -> Array:
        """The eight relative tangency residuals, both directions of each edge."""
        points = self.points
        spectral = (None, self.z1, self.z2)
        residuals = []
        for a, b, which in self.EDGES:
            z = spectral[which]
            residuals.append(_relative_tc(self.family, z, points[a], points[b]))
            residuals.append(_relative_tc(self.family, z, points[b], points[a]))
        return np.array(residuals)

    def ruling_ratio(self) -> float:
        """`ruling_ratio` with the branch's ruling at p2."""
        return ruling_ratio(
            self.family,
            self.z1,
            self.z2,
            self.p0,
            self.p1,
            self.p2,
            self.p3,
            "u" if self.branch == SAME else "v",
        )

    def cross_ratio(self) -> float:
        """`cross_ratio_check` of this quadrilateral."""
        return cross_ratio_check(self.family, self.z1, self.z2, *self.points)

    def cocycle_residual(self) -> float:
        """`cocycle_residual` of this quadrilateral."""
        return cocycle_residual(self.family, self.z1, self.z2, *self.points)

    def cad_gap(self) -> float:
        """`cad_gap` of this quadrilateral."""
        return cad_gap(self.family, self.z1, self.z2, *self.points)


def _sample_box(family: ConfocalFamily) -> Tuple[Tuple[float, float], ...]:
    if family.is_central:
        return (1.5, 2.5), (-0.5, 0.5)
    return (-0.5, 0.5), (-0.5, 0.5)


def _sample_ruling(rng: np.random.Generator, v0: float, count: int) -> Array:
    return v0 + rng.choice([-1, 1], count) * rng.uniform(0.5, 1.0, count)


def closure_samples(
    family: ConfocalFamily,
    z1: float,
    z2: float,
    count: int,
    seed: Optional[int] = None,
    tol: Tolerances = DEFAULT,
) -> Array:
    """(v0, v1, v2, v3) of `count` random same-branch closures, shape (count, 4)."""
    rng = np.random.default_rng(seed)
    u_range, v_range = _sample_box(family)
    samples: List[Tuple[float, float, float, float]] = []
    for _ in range(20 * count):
        if len(samples) == count:
            break
        p0 = (rng.uniform(*u_range), rng.uniform(*v_range))
        v1, v2 = _sample_ruling(rng, p0[1], 2)
        try:
            p1 = (tc_solve_u1(family, z1, p0, v1, tol), v1)
            p2 = (tc_solve_u1(family, z2, p0, v2, tol), v2)
            _, v3 = sitc_complete(family, z1, z2, p0, p1, p2, SAME, tol)
        except (errors.NumericalError, errors.OutOfRange) as error:
            LOG.debug("Skipping closure sample: %s", error)
            continue
        samples.append((p0[1], v1, v2, v3))
    if len(samples) < count:
        raise errors.NoRealBranch(
            f"Only {len(samples)} of {count} closure samples could be closed"
        )
    return np.array(samples)


def _design(samples: Array) -> Array:
    samples = np.asarray(samples, dtype=float)
    return np.stack(
        [np.prod(samples ** np.array(e), axis=-1) for e in MONOMIALS], axis=-1
    )


@dataclasses.dataclass(frozen=True)
class HomographyCoeffs:
    """Coefficients c_e of sum_e c_e v0^e0 v1^e1 v2^e2 v3^e3 = 0, unit norm.

    `degenerate` marks the z1 == z2 fit, which is the relation v3 = v0.
    """

    z1: float
    z2: float
    coefficients: Array
    degenerate: bool = False

    def __call__(self, samples: Array) -> Array:
        """The form at rows (v0, v1, v2, v3)."""
        return _design(samples) @ self.coefficients

    def residual(self, samples: Array) -> float:
        """Max |form| relative to the size of its terms."""
        design = _design(samples)
        scale = np.abs(design) @ np.abs(self.coefficients)
        return float((np.abs(design @ self.coefficients) / scale).max())

    def solve_v3(self, v0: float, v1: float, v2: float) -> float:
        """v3 from the relation, which is linear in v3."""
        constant, slope = self(np.array([[v0, v1, v2, 0.0], [v0, v1, v2, 1.0]]))
        slope = slope - constant
        if slope == 0:
            raise errors.DegenerateHomography(
                f"Relation does not involve v3 at ({v0}, {v1}, {v2})"
            )
        return float(-constant / slope)

    def permuted(self, order: Sequence[int]) -> "HomographyCoeffs":
        """The form F(v[order[0]], ..., v[order[3]]) as a new relation."""
        index = {e: k for k, e in enumerate(MONOMIALS)}
        coefficients = np.zeros(len(MONOMIALS))
        for k, e in enumerate(MONOMIALS):
            exponents = [0] * 4
            for j, o in enumerate(order):
                exponents[o] = e[j]
            coefficients[index[tuple(exponents)]] = self.coefficients[k]
        return dataclasses.replace(self, coefficients=coefficients)

    def match_gap(self, other: "HomographyCoeffs") -> float:
        """Max coefficient difference up to the overall sign."""
        a, b = self.coefficients, other.coefficients
        return float(min(np.abs(a - b).max(), np.abs(a + b).max()))

    def skew_gap(self, other: "HomographyCoeffs") -> float:
        """Gap to the fit with (v1, z1) and (v2, z2) exchanged."""
        return self.permuted((0, 2, 1, 3)).match_gap(other)

    def reversal_gap(self) -> float:
        """Gap to the relation with v0 <-> v3 and v1 <-> v2."""
        return self.permuted((3, 2, 1, 0)).match_gap(self)


def homography_fit(
    z1: float, z2: float, samples: Array, tol: Tolerances = DEFAULT
) -> HomographyCoeffs:
    """Least-squares separately linear relation annihilating the closure samples.

    The null vector of the (row-normalized) design matrix. Raises
    RankDeficientSamples for fewer than 16 samples or a null space of dimension
    above one, except when every sample has v3 == v0 (z1 == z2), where the
    relation v3 - v0 is returned.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 4 or len(samples) < len(MONOMIALS):
        raise errors.RankDeficientSamples(
            f"Need at least {len(MONOMIALS)} samples of (v0, v1, v2, v3),"
            f" got shape {samples.shape}"
        )
    design = _design(samples)
    design = design / np.linalg.norm(design, axis=1, keepdims=True)
    _, singular, vt = np.linalg.svd(design)
    if singular[-2] <= singular[0] / tol.condition:
        if np.all(np.abs(samples[:, 3] - samples[:, 0]) <= tol.sing):
            coefficients = np.zeros(len(MONOMIALS))
            coefficients[MONOMIALS.index((0, 0, 0, 1))] = 1 / np.sqrt(2)
            coefficients[MONOMIALS.index((1, 0, 0, 0))] = -1 / np.sqrt(2)
            return HomographyCoeffs(z1, z2, coefficients, degenerate=True)
        raise errors.RankDeficientSamples(
            f"Closure samples leave a null space of dimension"
            f" {int(np.sum(singular <= singular[0] / tol.condition))}"
        )
    return HomographyCoeffs(z1, z2, vt[-1])


@dataclasses.dataclass(frozen=True)
class BianchiLeaf:
    """x3 = B_z2(leaf1) = B_z1(leaf2) over the seed grid, built algebraically."""

    seed: Seed
    leaf1: Leaf
    leaf2: Leaf
    u3: Array
    v3: Array
    x3: Array
    x3_alt: Array
    R3: Array
    t3: Array

    @property
    def partner(self) -> Array:
        """x_0(u3, v3)."""
        return evaluate(self.seed.family, 0.0, self.u3, self.v3)

    @property
    def two_way_gap(self) -> float:
        """Max |x3 via leaf1 - x3 via leaf2|."""
        return float(np.abs(self.x3 - self.x3_alt).max())

    def quads(self) -> Iterator[BianchiQuad]:
        """The Bianchi quadrilateral at every node."""
        seed, leaf1, leaf2 = self.seed, self.leaf1, self.leaf2
        for i, j in np.ndindex(*seed.shape):
            yield BianchiQuad(
                seed.family,
                leaf1.z,
                leaf2.z,
                (float(seed.u[i]), float(seed.v[j])),
                (float(leaf1.u1[i, j]), float(leaf1.v1[i, j])),
                (float(leaf2.u1[i, j]), float(leaf2.v1[i, j])),
                (float(self.u3[i, j]), float(self.v3[i, j])),
            )

    def cocycle_residual(self) -> float:
        """Worst motion co-cycle residual over the nodes."""
        return max(quad.cocycle_residual() for quad in self.quads())

    def cad_gap(self) -> float:
        """Worst `cad_gap` over the nodes."""
        return max(quad.cad_gap() for quad in self.quads())

    def acpia_residual(self, order: int = 2) -> float:
        """First-form gap between x3 and x_0(u3, v3)."""
        return first_form_gap(self.x3, self.partner, self.seed.h, order)

    def rolling_residual(self, order: int = 2) -> float:
        """`rolling_gap` of x3 rolled by (R3, t3)."""
        return rolling_gap(self.R3, self.partner, self.x3, self.seed.h, order)


def bpt_apply(
    seed: Seed, leaf1: Leaf, leaf2: Leaf, tol: Tolerances = DEFAULT
) -> BianchiLeaf:
    """The fourth surface of the Bianchi permutability, without integration.

    Both leaves need their rolling (`inversion_rolling`). Per node the quadrilateral
    (seed, leaf1, leaf2) is closed on the same branch, then
    x3 = R1 (x_z2(p3) - x_0(p1)) + x1, and again from leaf2 for comparison. x3 is
    rolled on x_0 at p3 by (R1, t1) M(z2; p1, p3)^-1.
    """
    if leaf1.ruling != "u" or leaf2.ruling != "u":
        raise ValueError("Permutability is built on u-ruling leaves")
    if leaf1.z == leaf2.z:
        raise errors.OutOfRange(
            f"Permutability needs z1 != z2, got z1 = z2 = {leaf1.z}"
        )
    family, z1, z2 = seed.family, leaf1.z, leaf2.z
    r1, t1 = require_rolling(leaf1)
    r2, _ = require_rolling(leaf2)
    u3, v3 = np.empty(seed.shape), np.empty(seed.shape)
    x3, x3_alt = np.empty(seed.x.shape), np.empty(seed.x.shape)
    rotations, translations = np.empty(seed.R.shape), np.empty(seed.t.shape)
    for i, j in np.ndindex(*seed.shape):
        p0 = (seed.u[i], seed.v[j])
        p1 = (leaf1.u1[i, j], leaf1.v1[i, j])
        p2 = (leaf2.u1[i, j], leaf2.v1[i, j])
        p3 = sitc_complete(family, z1, z2, p0, p1, p2, SAME, tol)
        u3[i, j], v3[i, j] = p3
        x3[i, j] = (
            r1[i, j] @ (evaluate(family, z2, *p3) - evaluate(family, 0.0, *p1))
            + leaf1.x1[i, j]
        )
        x3_alt[i, j] = (
            r2[i, j] @ (evaluate(family, z1, *p3) - evaluate(family, 0.0, *p2))
            + leaf2.x1[i, j]
        )
        rolled = RigidMotion(r1[i, j], t1[i, j]) @ motion(family, z2, p1, p3).inverse()
        rotations[i, j], translations[i, j] = rolled.R, rolled.t
    return BianchiLeaf(seed, leaf1, leaf2, u3, v3, x3, x3_alt, rotations, translations)


def commutativity_gap(
    seed: Seed, leaf1: Leaf, leaf2: Leaf, tol: Tolerances = DEFAULT
) -> float:
    """Max |B_z2 B_z1 - B_z1 B_z2| over the grid."""
    forward = bpt_apply(seed, leaf1, leaf2, tol)
    backward = bpt_apply(seed, leaf2, leaf1, tol)
    return float(np.abs(forward.x3 - backward.x3).max())


def _ruling_normal(family: ConfocalFamily, z: float, a: Params, b: Params) -> float:
    return float(ruling_direction(family, z, a) @ tangent_plane(family, b)[1])


@dataclasses.dataclass(frozen=True)
class Mobius3:
    """The eight vertices of a Mobius cube; `sevens` holds vertex 7 from 1, 2 and 4."""

    family: ConfocalFamily
    zs: Tuple[float, float, float]
    points: Array
    sevens: Array

    @property
    def path_gap(self) -> float:
        """Spread of the three constructions of vertex 7, relative to its size
        once that exceeds 1."""
        scale = max(1.0, float(np.abs(self.sevens).max()))
        return float(np.ptp(self.sevens, axis=0).max()) / scale

    @property
    def menelaus(self) -> float:
        """`menelaus_product` of the cube."""
        return menelaus_product(self.family, self.zs, self.points)


def menelaus_product(
    family: ConfocalFamily, zs: Sequence[float], points: Array
) -> float:
    """Product of the three signed ratios on the faces through vertices 3, 5 and 6.

    Vertices: 0; 1, 2, 4 on the z1, z2, z3 edges of 0; 3, 5, 6 closing the faces
    (0 1 2), (0 1 4), (0 2 4). The product is 1 on a consistent cube.
    """
    z1, z2, z3 = zs
    p = [tuple(point) for point in np.asarray(points, dtype=float)]

    def d(z: float, a: int, b: int) -> float:
        return _ruling_normal(family, z, p[a], p[b])

    return (
        d(z2, 1, 3)
        / d(z3, 1, 5)
        * d(z1, 4, 5)
        / d(z2, 4, 6)
        * d(z3, 2, 6)
        / d(z1, 2, 3)
    )


def mobius3(
    family: ConfocalFamily,
    z1: float,
    z2: float,
    z3: float,
    p0: Params,
    v1: float,
    v2: float,
    v4: float,
    branches: Sequence[str] = (SAME, SAME, SAME),
    tol: Tolerances = DEFAULT,
) -> Mobius3:
    """Build the cube on p0 and the ruling parameters of its three edge neighbours.

    `branches` closes the faces (0 1 2), (0 1 4), (0 2 4). Vertex 7 is closed on the
    same branch from vertices 1, 2 and 4 independently.
    """
    for branch in branches:
        _check_branch(branch)
    p0 = _params(p0)
    p1 = (tc_solve_u1(family, z1, p0, v1, tol), float(v1))
    p2 = (tc_solve_u1(family, z2, p0, v2, tol), float(v2))
    p4 = (tc_solve_u1(family, z3, p0, v4, tol), float(v4))
    p3 = sitc_complete(family, z1, z2, p0, p1, p2, branches[0], tol)
    p5 = sitc_complete(family, z1, z3, p0, p1, p4, branches[1], tol)
    p6 = sitc_complete(family, z2, z3, p0, p2, p4, branches[2], tol)
    sevens = np.array(
        [
            sitc_complete(family, z2, z3, p1, p3, p5, SAME, tol),
            sitc_complete(family, z1, z3, p2, p3, p6, SAME, tol),
            sitc_complete(family, z1, z2, p4, p5, p6, SAME, tol),
        ]
    )
    points = np.array([p0, p1, p2, p3, p4, p5, p6, sevens[0]])
    return Mobius3(family, (z1, z2, z3), points, sevens)


def mobius_samples(
    family: ConfocalFamily,
    zs: Sequence[float],
    count: int,
    seed: Optional[int] = None,
    tol: Tolerances = DEFAULT,
) -> List[Mobius3]:
    """`count` same-branch cubes on random base points and edge rulings.

    Configurations whose partners or closures do not exist are drawn again.
    """
    rng = np.random.default_rng(seed)
    u_range, v_range = _sample_box(family)
    z1, z2, z3 = (float(z) for z in zs)
    cubes: List[Mobius3] = []
    for _ in range(20 * count):
        if len(cubes) == count:
            break
        p0 = (rng.uniform(*u_range), rng.uniform(*v_range))
        v1, v2, v4 = _sample_ruling(rng, p0[1], 3)
        try:
            cubes.append(mobius3(family, z1, z2, z3, p0, v1, v2, v4, tol=tol))
        except (errors.NumericalError, errors.OutOfRange) as error:
            LOG.debug("Skipping cube sample: %s", error)
    if len(cubes) < count:
        raise errors.NoRealBranch(f"Only {len(cubes)} of {count} cubes could be closed")
    return cubes


@dataclasses.dataclass(frozen=True)
class DDQLattice:
    """A discrete deformation of the quadric: parameters and motions on a lattice.

    Node (j, k) carries p_jk on x_0 and the motion M_jk placing the facet of x_0
    at p_jk: vertex M_jk(x_0(p_jk)), normal M_jk applied to N_0(p_jk). Edges in j
    are tangency pairs at zs[j], edges in k at zps[k]. `conflicts` holds, per cell,
    the distance between the two ways of reaching M_(j+1)(k+1).
    """

    family: ConfocalFamily
    zs: Tuple[float, ...]
    zps: Tuple[float, ...]
    params: Array
    R: Array
    t: Array
    conflicts: Array

    @property
    def shape(self) -> Tuple[int, int]:
        """Nodes per direction."""
        return self.params.shape[0], self.params.shape[1]

    def motion(self, j: int, k: int) -> RigidMotion:
        """M_jk."""
        return RigidMotion(self.R[j, k], self.t[j, k])

    @property
    def points(self) -> Array:
        """Vertices x_jk, shape (J + 1, K + 1, 3)."""
        x0 = evaluate(self.family, 0.0, self.params[..., 0], self.params[..., 1])
        return np.einsum("jkab,jkb->jka", self.R, x0) + self.t

    @property
    def normals(self) -> Array:
        """Rotated (non-unit) normals N_0 at every node."""
        x0 = evaluate(self.family, 0.0, self.params[..., 0], self.params[..., 1])
        n0 = self.family.diagonal(0.0) * x0 + self.family.B
        return np.einsum("jkab,jkb->jka", self.R, n0)

    def cell(self, j: int, k: int) -> BianchiQuad:
        """The Bianchi quadrilateral of cell (j, k)."""
        p = self.params
        return BianchiQuad(
            self.family,
            self.zs[j],
            self.zps[k],
            _params(p[j, k]),
            _params(p[j + 1, k]),
            _params(p[j, k + 1]),
            _params(p[j + 1, k + 1]),
        )

    def tangency_residual(self) -> float:
        """Worst tangency residual over all cells."""
        cells = np.ndindex(len(self.zs), len(self.zps))
        return max(float(self.cell(j, k).tangency_residuals().max()) for j, k in cells)

    def planarity_residuals(self) -> Array:
        """|(n3 - n0) x (n1 - n2)| / (|n3 - n0| |n1 - n2|) per cell."""
        n = self.normals
        diagonal = n[1:, 1:] - n[:-1, :-1]
        anti = n[1:, :-1] - n[:-1, 1:]
        return np.linalg.norm(np.cross(diagonal, anti), axis=-1) / (
            np.linalg.norm(diagonal, axis=-1) * np.linalg.norm(anti, axis=-1)
        )

    def gauss_triple_products(self) -> Array:
        """N0 . (R1 N1 x R2 N2) per cell, the normals of its base node and edge
        neighbours carried into one frame.

        It is the oriented area spanned by the normal image of the cell's two edges;
        with the edges X_i = A (R_i N_i) x N0 it equals (X1 x X2) . N0 / (A^2 |N0|^2).
        """
        n = self.normals
        return np.sum(n[:-1, :-1] * np.cross(n[1:, :-1], n[:-1, 1:]), axis=-1)

    def facet_products(self) -> Array:
        """(X1 x X2) . N0 / (A^2 |N0|^2) per cell, from the lattice edges."""
        n, x = self.normals, self.points
        n0 = n[:-1, :-1]
        x1 = x[1:, :-1] - x[:-1, :-1]
        x2 = x[:-1, 1:] - x[:-1, :-1]
        area = area_constant(self.family) ** 2 * np.sum(n0 * n0, axis=-1)
        return np.sum(np.cross(x1, x2) * n0, axis=-1) / area

    def discrete_curvature(self) -> Array:
        """Gauss curvature at the base node of each cell, from normals and edges.

        (N0 . (n1 x n2) / |N0|^3) / ((X2 x X1) . N0 / |N0|): the area of the normal
        image over the area of the facet.
        """
        n, x = self.normals, self.points
        n0 = n[:-1, :-1]
        x1 = x[1:, :-1] - x[:-1, :-1]
        x2 = x[:-1, 1:] - x[:-1, :-1]
        length = np.linalg.norm(n0, axis=-1)
        spherical = self.gauss_triple_products() / length ** 3
        planar = np.sum(np.cross(x2, x1) * n0, axis=-1) / length
        return spherical / planar

    def curvature_residuals(self) -> Array:
        """Relative gap between the discrete curvature and K of x_0 per cell."""
        discrete = self.discrete_curvature()
        exact = np.empty(discrete.shape)
        for j, k in np.ndindex(*exact.shape):
            exact[j, k] = gauss_curvature(self.family, _params(self.params[j, k]))
        return np.abs(discrete - exact) / np.abs(exact)


def ddq_build(
    family: ConfocalFamily,
    zs: Sequence[float],
    zps: Sequence[float],
    p00: Params,
    row_v: Sequence[float],
    col_v: Sequence[float],
    tol: Tolerances = DEFAULT,
) -> DDQLattice:
    """Fill a DDQ lattice from its initial cross.

    The cross is p00 with the ruling parameters row_v[j] of nodes (j + 1, 0) and
    col_v[k] of nodes (0, k + 1); their u follow from tangency with the previous
    node. Cells are closed on the same branch anti-diagonal by anti-diagonal, the
    cells of one anti-diagonal in parallel (QDEF_THREADS workers). Raises
    LatticeConflict when the two motion paths into a node differ by more than
    tol.conflict.
    """
    zs, zps = tuple(float(z) for z in zs), tuple(float(z) for z in zps)
    if len(row_v) != len(zs) or len(col_v) != len(zps):
        raise ValueError(
            f"Cross data does not match the spectral sequences: {len(row_v)} row and"
            f" {len(col_v)} column values for {len(zs)} and {len(zps)} parameters"
        )
    rows, cols = len(zs) + 1, len(zps) + 1
    params = np.empty((rows, cols, 2))
    params[0, 0] = _params(p00)
    for j, v in enumerate(row_v):
        params[j + 1, 0] = tc_solve_u1(family, zs[j], params[j, 0], v, tol), v
    for k, v in enumerate(col_v):
        params[0, k + 1] = tc_solve_u1(family, zps[k], params[0, k], v, tol), v

    def close(cell: Tuple[int, int]) -> Tuple[float, float]:
        j, k = cell
        return sitc_complete(
            family,
            zs[j - 1],
            zps[k - 1],
            params[j - 1, k - 1],
            params[j, k - 1],
            params[j - 1, k],
            SAME,
            tol,
        )

    workers = config.threads()
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        for diagonal in range(2, rows + cols - 1):
            cells = [
                (j, diagonal - j)
                for j in range(max(1, diagonal - cols + 1), min(rows, diagonal))
            ]
            for (j, k), closed in zip(cells, executor.map(close, cells)):
                params[j, k] = closed

    def step(start: RigidMotion, z: float, p: Array, q: Array) -> RigidMotion:
        return start @ motion(family, z, _params(p), _params(q)).inverse()

    motions = np.empty((rows, cols), dtype=object)
    motions[0, 0] = RigidMotion.identity()
    conflicts = np.zeros((rows - 1, cols - 1))
    for j, k in np.ndindex(rows, cols):
        paths = []
        if j > 0:
            paths.append(
                step(motions[j - 1, k], zs[j - 1], params[j - 1, k], params[j, k])
            )
        if k > 0:
            paths.append(
                step(motions[j, k - 1], zps[k - 1], params[j, k - 1], params[j, k])
            )
        if len(paths) == 2:
            gap = paths[0].distance(paths[1])
            conflicts[j - 1, k - 1] = gap
            if gap > tol.conflict:
                raise errors.LatticeConflict(
                    f"Motion paths into node ({j}, {k}) differ by {gap:.3g}"
                )
        if paths:
            motions[j, k] = paths[0]
    rotations = np.array([[m.R for m in row] for row in motions])
    translations = np.array([[m.t for m in row] for row in motions])
    return DDQLattice(family, zs, zps, params, rotations, translations, conflicts)
