import numpy as np
import pytest

from .. import backlund, config, errors, grids
from .. import permutability as pm
from .. import quadric_core as qc
from .. import rolling

PARABOLOID = qc.make_family("paraboloid", 1, -1)
Z1, Z2 = 0.2, 0.5
# Tangent plane at the vertex is x3 = 0, so u_i = -z_i / (4 v_i)
P0, P1, P2 = (0.0, 0.0), (-0.05, 1.0), (0.125, -1.0)
SAME_P3 = (-0.0425004999, -0.4406492432)
FLIPPED_P3 = (0.0730613223, -0.0091607380)


def test_sitc_roots():
    roots = pm.sitc_roots(PARABOLOID, Z1, Z2, P1, P2)
    np.testing.assert_allclose(roots, [SAME_P3, FLIPPED_P3], atol=1e-9)


@pytest.mark.parametrize("branch,p3", [(pm.SAME, SAME_P3), (pm.FLIPPED, FLIPPED_P3)])
def test_bianchi_quad(branch, p3):
    quad = pm.BianchiQuad.close(PARABOLOID, Z1, Z2, P0, P1, P2, branch)
    np.testing.assert_allclose(quad.p3, p3, atol=1e-9)
    assert quad.tangency_residuals().shape == (8,)
    assert quad.tangency_residuals().max() < 1e-9
    assert quad.ruling_ratio() == pytest.approx(Z1 / Z2, abs=1e-8)
    assert np.prod(quad.signatures) == 1


def test_same_branch_invariants():
    quad = pm.BianchiQuad.close(PARABOLOID, Z1, Z2, P0, P1, P2)
    assert quad.cross_ratio() == pytest.approx(Z1 / Z2, abs=1e-8)
    assert quad.cocycle_residual() < 1e-8
    assert quad.cad_gap() < 1e-8


def test_sitc_newton():
    p3 = pm.sitc_newton(PARABOLOID, Z1, Z2, P0, P1, P2, guess=(-0.04, -0.44))
    np.testing.assert_allclose(p3, SAME_P3, atol=1e-9)
    with pytest.raises(errors.NewtonDivergence):
        pm.sitc_newton(PARABOLOID, Z1, Z2, P0, P1, P2, max_steps=0)


def test_sitc_complete_edge_cases():
    assert pm.sitc_complete(PARABOLOID, Z1, Z1, P0, P1, P1) == P0
    with pytest.raises(ValueError):
        pm.sitc_complete(PARABOLOID, Z1, Z2, P0, P1, P2, branch="other")


def test_leaf_swap_gives_same_closure():
    p0 = (0.03, -0.02)
    p1 = (qc.tc_solve_u1(PARABOLOID, Z1, p0, 0.95), 0.95)
    p2 = (qc.tc_solve_u1(PARABOLOID, Z2, p0, -1.02), -1.02)
    forward = pm.sitc_complete(PARABOLOID, Z1, Z2, p0, p1, p2)
    backward = pm.sitc_complete(PARABOLOID, Z2, Z1, p0, p2, p1)
    np.testing.assert_allclose(forward, backward, atol=1e-12)


def test_v3_ignores_u0():
    v3 = set()
    for u0 in [-0.4, 0.0, 0.4]:
        p0 = (u0, 0.1)
        p1 = (qc.tc_solve_u1(PARABOLOID, Z1, p0, 0.8), 0.8)
        p2 = (qc.tc_solve_u1(PARABOLOID, Z2, p0, -0.6), -0.6)
        v3.add(round(pm.sitc_complete(PARABOLOID, Z1, Z2, p0, p1, p2)[1], 9))
    assert v3 == {-0.204311350}


def test_homography_fit():
    samples = pm.closure_samples(PARABOLOID, Z1, Z2, 40, seed=1)
    fit = pm.homography_fit(Z1, Z2, samples)
    assert not fit.degenerate
    assert np.linalg.norm(fit.coefficients) == pytest.approx(1.0)
    assert fit.residual(samples) < 1e-8

    fresh = pm.closure_samples(PARABOLOID, Z1, Z2, 5, seed=2)
    assert fit.residual(fresh) < 1e-7
    for v0, v1, v2, v3 in fresh:
        assert fit.solve_v3(v0, v1, v2) == pytest.approx(v3, rel=1e-6, abs=1e-6)

    swapped = pm.homography_fit(Z2, Z1, pm.closure_samples(PARABOLOID, Z2, Z1, 40, 3))
    assert fit.skew_gap(swapped) < 1e-6
    assert fit.reversal_gap() < 1e-6


def test_homography_fit_degenerate():
    samples = pm.closure_samples(PARABOLOID, 0.3, 0.3, 20, seed=0)
    np.testing.assert_allclose(samples[:, 3], samples[:, 0], atol=1e-9)
    fit = pm.homography_fit(0.3, 0.3, samples)
    assert fit.degenerate
    assert fit.solve_v3(0.1, 0.5, -0.7) == pytest.approx(0.1)

    with pytest.raises(errors.RankDeficientSamples):
        pm.homography_fit(Z1, Z2, samples[:10])


def test_mobius_cube():
    cube = pm.mobius3(PARABOLOID, Z1, Z2, -0.3, P0, 1.0, -1.0, 0.5)
    assert cube.points.shape == (8, 2)
    np.testing.assert_allclose(cube.points[3], SAME_P3, atol=1e-9)
    np.testing.assert_allclose(cube.points[7], [0.0310698983, 0.3039615522], atol=1e-9)
    assert cube.path_gap < 1e-8
    assert cube.menelaus == pytest.approx(1.0, abs=1e-9)


def _periodic_lattice(tol=config.DEFAULT):
    return pm.ddq_build(
        PARABOLOID, [Z1] * 8, [Z2] * 8, P0, [1.0, 0.0] * 4, [-1.0, 0.0] * 4, tol
    )


def test_ddq_lattice():
    lattice = _periodic_lattice()
    assert lattice.shape == (9, 9)
    assert lattice.points.shape == (9, 9, 3)
    # Alternating cross data makes the parameters 2-periodic
    np.testing.assert_allclose(lattice.params[::2, ::2], 0.0, atol=1e-9)
    np.testing.assert_allclose(lattice.params[1, 1], SAME_P3, atol=1e-9)

    assert lattice.planarity_residuals().max() < 1e-9
    assert lattice.curvature_residuals().max() < 1e-8
    assert lattice.tangency_residual() < 1e-9
    assert lattice.conflicts.max() < 1e-9
    assert lattice.motion(0, 0).distance(qc.RigidMotion.identity()) == 0


def test_ddq_threads(monkeypatch):
    serial = _periodic_lattice()
    monkeypatch.setenv(config.THREADS_ENV, "4")
    np.testing.assert_array_equal(_periodic_lattice().params, serial.params)


def test_ddq_errors():
    with pytest.raises(ValueError):
        pm.ddq_build(PARABOLOID, [Z1] * 2, [Z2] * 2, P0, [1.0], [-1.0, 0.0])


CENTRAL = qc.make_family("central", 4, -1, 1)
# Cross data wobbling around the 2-periodic pattern rows (-1, 0), cols (2, 0)
CENTRAL_ROWS = [-1.0, 0.02, -0.97, 0.03, -1.02, -0.01, -0.98, 0.01]
CENTRAL_COLS = [2.0, -0.02, 2.03, 0.01, 1.97, 0.03, 2.02, -0.01]


def _central_lattice():
    return pm.ddq_build(
        CENTRAL, [0.3] * 8, [0.6] * 8, (2.0, 0.0), CENTRAL_ROWS, CENTRAL_COLS
    )


def test_ddq_central_cell():
    # The first cell closes on v3 = 0.552 (the other root is v3 = -0.630)
    lattice = _central_lattice()
    np.testing.assert_allclose(lattice.params[1, 0], [2.1696, -1.0], atol=5e-3)
    np.testing.assert_allclose(lattice.params[0, 1], [1.2110, 2.0], atol=5e-3)
    np.testing.assert_allclose(lattice.params[1, 1], [2.0331, 0.5521], atol=5e-3)
    cell = lattice.cell(0, 0)
    assert cell.ruling_ratio() == pytest.approx(0.5, abs=1e-8)


def test_ddq_central_lattice():
    lattice = _central_lattice()
    assert lattice.shape == (9, 9)
    # Not periodic: the even nodes wander off the base point
    assert np.ptp(lattice.params[::2, ::2, 1]) > 1e-3
    assert np.all(np.isfinite(lattice.params))
    assert np.all(np.abs(lattice.params[..., 0] - lattice.params[..., 1]) > 0.1)

    assert lattice.planarity_residuals().max() < 1e-9
    assert lattice.curvature_residuals().max() < 1e-8
    assert lattice.tangency_residual() < 1e-9
    assert lattice.conflicts.max() < 1e-9


def test_ddq_gauss_triple_products():
    lattice = _central_lattice()
    triple = lattice.gauss_triple_products()
    assert triple.shape == (8, 8)
    # The normal image of a facet is never flat: it spans the facet's area
    assert np.all(np.abs(triple) > 1e-6)
    np.testing.assert_allclose(triple, lattice.facet_products(), rtol=1e-9)


def test_ddq_central_threads(monkeypatch):
    serial = _central_lattice()
    monkeypatch.setenv(config.THREADS_ENV, "3")
    threaded = _central_lattice()
    np.testing.assert_array_equal(threaded.params, serial.params)
    np.testing.assert_array_equal(threaded.R, serial.R)
    np.testing.assert_array_equal(threaded.conflicts, serial.conflicts)


@pytest.mark.parametrize("family", [PARABOLOID, CENTRAL])
def test_mobius_samples(family):
    cubes = pm.mobius_samples(family, (0.3, 0.6, -0.3), 200, seed=5)
    assert len(cubes) == 200
    assert len({tuple(cube.points[0]) for cube in cubes}) == 200
    assert max(cube.path_gap for cube in cubes) < 1e-8
    assert max(abs(cube.menelaus - 1) for cube in cubes) < 1e-9


def test_mobius_samples_no_branch():
    # z3 = 1.5 is outside the central range, so no cube can be built
    with pytest.raises(errors.NoRealBranch):
        pm.mobius_samples(CENTRAL, (0.3, 0.6, 1.5), 3, seed=0)


def _leaves(n, family=PARABOLOID):
    v = np.linspace(-0.05, 0.05, n)
    if family.is_central:
        u, partners = 2.0 + v, [(0.3, -1.0), (0.6, 2.0)]
    else:
        u, partners = v, [(Z1, 1.0), (Z2, -1.0)]
    seed = rolling.ruled_seed(family, 0.05, u, v)
    leaves = [
        backlund.inversion_rolling(seed, backlund.leaf_integrate(seed, z, v1))
        for z, v1 in partners
    ]
    return seed, leaves


@pytest.mark.parametrize("family", [PARABOLOID, CENTRAL])
def test_bpt_apply(family):
    seed, (leaf1, leaf2) = _leaves(9, family)
    bianchi = pm.bpt_apply(seed, leaf1, leaf2)
    assert bianchi.x3.shape == seed.x.shape
    assert bianchi.two_way_gap < 1e-8
    assert bianchi.cocycle_residual() < 1e-8
    assert bianchi.cad_gap() < 1e-8
    assert pm.commutativity_gap(seed, leaf1, leaf2) < 1e-8

    with pytest.raises(errors.OutOfRange):
        pm.bpt_apply(seed, leaf1, leaf1)


@pytest.mark.slow
def test_bianchi_leaf_is_applicable():
    coarse, fine = [
        pm.bpt_apply(seed, *leaves) for seed, leaves in map(_leaves, [9, 17])
    ]
    for residual in [pm.BianchiLeaf.acpia_residual, pm.BianchiLeaf.rolling_residual]:
        assert grids.convergence_order(residual(coarse), residual(fine)) > 1.8
