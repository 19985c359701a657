import numpy as np
import pytest
import scipy.linalg
import scipy.stats

from .. import errors, frames, grids
from .. import highdim as hd

SIGMA = np.pi / 3


def _seed2(n):
    return hd.pseudosphere_field(
        2, None, [np.linspace(0.7, 1.3, n), np.linspace(-0.3, 0.3, n)]
    )


def _transform2(n, sigma=SIGMA):
    return hd.tt_backlund(_seed2(n), sigma, frames.rotation_2d(0.6))


def _seed3(n=9):
    axes = [np.linspace(0.8, 1.2, n)] + [np.linspace(-0.2, 0.2, n)] * 2
    return hd.pseudosphere_field(3, [0.6, 0.8], axes)


def _start3():
    return scipy.linalg.expm(frames.hat(np.array([0.4, 0.5, 0.6])))


def _orthogonal(rng, count):
    return [scipy.stats.ortho_group.rvs(dim=3, random_state=rng) for _ in range(count)]


def test_tt_params():
    params = hd.TTParams(SIGMA, 3)
    np.testing.assert_allclose(
        np.diag(params.D), [2 / 3 ** 0.5, 1 / 3 ** 0.5, 1 / 3 ** 0.5]
    )
    assert np.diag(params.J).tolist() == [-1, 1, 1]
    assert params.square_gap() < 1e-14
    assert np.diag(hd.normal_projector(3)).tolist() == [0, 1, 1]
    with pytest.raises(errors.OutOfRange):
        hd.TTParams(0.0, 2)
    with pytest.raises(ValueError):
        hd.TTParams(SIGMA, 1)


def test_pseudosphere_field():
    seed = _seed2(17)
    assert seed.shape == (17, 17) and seed.n == 2
    v = seed.points()[..., 0]
    np.testing.assert_allclose(seed.first_row[..., 0], np.tanh(v))
    np.testing.assert_allclose(seed.first_row[..., 1], 1 / np.cosh(v))
    assert seed.orthogonality_error() < 1e-14
    assert seed.row_norm_gap() < 1e-14
    assert max(hd.curvature_line_invariants(seed)) < 1e-12

    coarse, fine = hd.gsge_residual(seed).worst, hd.gsge_residual(_seed2(33)).worst
    assert coarse < 1e-3
    assert fine < coarse / 3
    assert hd.gsge_residual(seed).is_solution(1e-3)

    residuals = hd.immersion_residuals(seed.frame, seed)
    assert residuals["frame"] < 1e-12
    assert max(residuals.values()) < 1e-2
    curvature = hd.surface_curvature(seed.frame, seed)
    np.testing.assert_allclose(curvature, -1.0, atol=1e-2)


def test_pseudosphere_errors():
    axes = [np.linspace(0.7, 1.3, 5), np.linspace(-0.3, 0.3, 5)]
    with pytest.raises(ValueError):
        hd.pseudosphere_field(4, None, axes)
    with pytest.raises(errors.BadLambda):
        hd.pseudosphere_field(3, [0.6, 0.6], axes + [axes[1]])
    with pytest.raises(ValueError):
        hd.pseudosphere_field(2, None, axes + [axes[1]])
    with pytest.raises(errors.OutOfRange):
        hd.pseudosphere_field(2, None, [np.linspace(-0.1, 0.1, 5), axes[1]])


def test_from_grid():
    seed = _seed2(17)
    field = hd.OrthoField.from_grid(seed.axes, seed.A)
    assert field.frame is None and field.source is None
    # Five-point stencils in the interior: fourth order on the shared nodes
    fine_seed = _seed2(33)
    fine = hd.OrthoField.from_grid(fine_seed.axes, fine_seed.A)
    gaps = [
        np.abs(f.W - s.W).max(axis=(-3, -2, -1))
        for f, s in [(field, seed), (fine, fine_seed)]
    ]
    coarse_gap, fine_gap = grids.shared_maxima(*gaps, width=2)
    assert coarse_gap < 1e-4 and fine_gap < 1e-5
    assert grids.convergence_order(coarse_gap, fine_gap) > 3

    points = np.array([[0.93, 0.05], [1.11, -0.21]])
    exact_a, exact_w = seed.at(points)
    a, w = field.at(points)
    assert a.shape == (2, 2, 2) and w.shape == (2, 2, 2, 2)
    np.testing.assert_allclose(a, exact_a, atol=1e-5)
    np.testing.assert_allclose(w, exact_w, atol=1e-3)

    with pytest.raises(ValueError):
        hd.OrthoField.from_grid(seed.axes[:1], seed.A)
    with pytest.raises(errors.FirstRowVanishing):
        hd.OrthoField.from_grid(seed.axes, np.broadcast_to(np.eye(2), (17, 17, 2, 2)))
    with pytest.raises(ValueError):
        hd.tt_immersion(field, field, SIGMA)


def test_tt_backlund():
    seed, field = _seed2(17), _transform2(17)
    assert field.shape == seed.shape
    np.testing.assert_allclose(field.A[0, 0], frames.rotation_2d(0.6), atol=1e-12)
    assert field.orthogonality_error() < 1e-8
    assert max(hd.curvature_line_invariants(field)) < 1e-8

    immersion = hd.tt_immersion(field, seed, SIGMA)
    assert immersion.x.shape == (17, 17, 3)
    angles = hd.isoclinic_angles(seed.frame, immersion)
    np.testing.assert_allclose(angles, SIGMA, atol=1e-8)
    assert hd.immersion_residuals(immersion, field)["frame"] < 1e-8
    assert hd.backlund_closure_gap(seed, SIGMA, frames.rotation_2d(0.6)) < 1e-6

    # The connection comes from the Ricatti equation; differencing A agrees with it
    differenced = hd.OrthoField.from_grid(field.axes, field.A)
    np.testing.assert_allclose(
        grids.interior(differenced.W, 2), grids.interior(field.W, 2), atol=1e-4
    )


def test_tt_backlund_converges():
    seeds, fields = [_seed2(n) for n in (17, 33)], [_transform2(n) for n in (17, 33)]
    residuals = [hd.gsge_residual(field) for field in fields]
    gsge = grids.shared_maxima(*(r.per_node for r in residuals), width=2)
    ricatti = [
        hd.ricatti_residual(seed, field, SIGMA) for seed, field in zip(seeds, fields)
    ]
    curvature = [
        np.abs(
            hd.surface_curvature(hd.tt_immersion(field, seed, SIGMA), field) + 1
        ).max()
        for seed, field in zip(seeds, fields)
    ]
    for coarse, fine in [gsge, ricatti, curvature]:
        assert grids.convergence_order(coarse, fine) > 1.8
    assert hd.normal_connection_residual(
        hd.tt_immersion(fields[1], seeds[1], SIGMA), fields[1]
    ) < 1e-3


def test_tt_backlund_errors():
    seed = _seed2(5)
    with pytest.raises(ValueError):
        hd.tt_backlund(seed, SIGMA, 2 * np.eye(2))
    with pytest.raises(ValueError):
        hd.tt_backlund(seed, SIGMA, np.eye(3))
    with pytest.raises(ValueError):
        hd.tt_backlund(seed, SIGMA, np.eye(2), axis_order=[0, 0])


def test_sign_absorption():
    seed = _seed2(9)
    assert hd.sign_absorption_gap(seed, SIGMA, frames.rotation_2d(0.6)) < 1e-10


def test_three_dimensional():
    seed = _seed3()
    assert seed.shape == (9, 9, 9)
    assert seed.frame.x.shape == (9, 9, 9, 5)
    assert np.abs(hd.clifford_slice_curvature(seed)).max() < 1e-8
    assert hd.immersion_residuals(seed.frame, seed)["frame"] < 1e-12

    field = hd.tt_backlund(seed, SIGMA, _start3())
    assert field.orthogonality_error() < 1e-8
    assert max(hd.curvature_line_invariants(field)) < 1e-8
    immersion = hd.tt_immersion(field, seed, SIGMA)
    angles = hd.isoclinic_angles(seed.frame, immersion)
    assert angles.shape == (9, 9, 9, 2)
    np.testing.assert_allclose(angles, SIGMA, atol=1e-8)

    with pytest.raises(ValueError):
        hd.surface_curvature(immersion, field)
    with pytest.raises(ValueError):
        hd.clifford_slice_curvature(_seed2(5))


def test_tt_permutability():
    rng = np.random.default_rng(5)
    s1, s2 = 0.7, 1.1
    for _ in range(10):
        a0, a1, a2 = _orthogonal(rng, 3)
        a3 = hd.tt_permutability(a0, a1, a2, s1, s2)
        assert frames.orthogonality_error(a3) < 1e-10
        np.testing.assert_allclose(
            hd.tt_permutability(a0, a2, a1, s2, s1), a3, atol=1e-10
        )
        # X = A3 A0^T solves X (D1 - D2 C) = D1 C - D2 with C = A2 A1^T
        d1, d2 = hd.TTParams(s1, 3).D, hd.TTParams(s2, 3).D
        x, c = a3 @ a0.T, a2 @ a1.T
        np.testing.assert_allclose(x @ (d1 - d2 @ c), d1 @ c - d2, atol=1e-10)

    stack = np.stack(_orthogonal(rng, 3))
    assert hd.tt_permutability(stack, stack, stack, s1, s2).shape == (3, 3, 3)


def test_tt_permutability_equal_angles():
    a0, a1, a2 = _orthogonal(np.random.default_rng(6), 3)
    np.testing.assert_array_equal(hd.tt_permutability(a0, a1, a1, 0.7, 0.7), a0)
    with pytest.raises(errors.SingularClosure):
        hd.tt_permutability(a0, a1, a2, 0.7, 0.7)


def test_tt_mobius():
    rng = np.random.default_rng(7)
    sigmas = (0.7, 1.1, 1.9)
    for _ in range(5):
        a0, a1, a2, a4 = _orthogonal(rng, 4)
        a3, a5, a6 = hd.mobius_faces(a0, a1, a2, a4, sigmas)
        cube = hd.tt_mobius3([a0, a1, a2, a3, a4, a5, a6], sigmas)
        assert len(cube.vertices) == 7
        assert cube.agreement_gap() < 1e-8
        assert cube.orthogonality_error() < 1e-8
        np.testing.assert_allclose(cube.A7, cube.sevens[2], atol=1e-6)
    with pytest.raises(ValueError):
        hd.tt_mobius3([a0] * 6, sigmas)
