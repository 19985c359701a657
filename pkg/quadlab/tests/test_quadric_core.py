import numpy as np
import pytest

from .. import config, errors
from .. import quadric_core as qc

CENTRAL = qc.make_family("central", 4, -1, 1)
PARABOLOID = qc.make_family("paraboloid", 1, -1)
# Ruling parameters clear of the central pole u = v
SAMPLE_U = np.array([1.5, 2.0, 2.5, -0.7])
SAMPLE_V = np.array([0.1, -0.25, 0.2, 0.4])


def test_make_family():
    assert CENTRAL.is_central and not PARABOLOID.is_central
    assert qc.family_from_json(CENTRAL.to_json()) == CENTRAL
    assert qc.family_from_json(dict(kind="Paraboloid", a=[1, -1])) == PARABOLOID
    assert hash(CENTRAL) == hash(qc.make_family("central", 4.0, -1.0, 1.0))
    assert repr(PARABOLOID) == "make_family('paraboloid', 1.0, -1.0)"
    assert CENTRAL.z_range == (-1.0, 1.0)
    assert PARABOLOID.z_range == (-1.0, 1.0)


def test_make_family_errors():
    with pytest.raises(errors.InvalidSignature):
        qc.make_family("central", 4, -1)
    with pytest.raises(errors.InvalidSignature):
        qc.make_family("paraboloid", 1, -1, 2)
    with pytest.raises(errors.InvalidSignature):
        qc.make_family("central", 4, 1, 2)
    with pytest.raises(errors.DegenerateAxes):
        qc.make_family("central", 1, -1, 1)
    with pytest.raises(ValueError):
        qc.make_family("ellipsoid", 3, 2, 1)


def test_check_z():
    CENTRAL.check_z(0.5)
    with pytest.raises(errors.OutOfRange):
        CENTRAL.check_z(1.0)
    with pytest.raises(errors.OutOfRange):
        qc.evaluate(PARABOLOID, -2.0, 0.0, 0.0)


@pytest.mark.parametrize("family", [CENTRAL, PARABOLOID])
@pytest.mark.parametrize("z", [-0.5, 0.0, 0.4])
def test_evaluate_on_member(family, z):
    x = qc.evaluate(family, z, SAMPLE_U, SAMPLE_V)
    assert x.shape == (4, 3)
    np.testing.assert_allclose(qc.quadric_value(family, z, x), 0, atol=1e-12)
    qc.check_on_quadric(family, z, x)


def test_evaluate_pole():
    with pytest.raises(errors.SingularRuling):
        qc.evaluate(CENTRAL, 0.0, 0.3, 0.3)
    with pytest.raises(errors.OffQuadric):
        qc.check_on_quadric(CENTRAL, 0.0, [0.0, 0.0, 0.0])


@pytest.mark.parametrize("family", [CENTRAL, PARABOLOID])
def test_ruling_directions(family):
    h, z = 1e-6, 0.4
    wu, wv = qc.ruling_directions(family, z, SAMPLE_U, SAMPLE_V)
    b = qc.b_factor(family, SAMPLE_U, SAMPLE_V)[:, np.newaxis]
    xu = (
        qc.evaluate(family, z, SAMPLE_U + h, SAMPLE_V)
        - qc.evaluate(family, z, SAMPLE_U - h, SAMPLE_V)
    ) / (2 * h)
    xv = (
        qc.evaluate(family, z, SAMPLE_U, SAMPLE_V + h)
        - qc.evaluate(family, z, SAMPLE_U, SAMPLE_V - h)
    ) / (2 * h)
    np.testing.assert_allclose(b * xu, wu, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(b * xv, wv, rtol=1e-6, atol=1e-8)

    np.testing.assert_allclose(
        qc.ruling_direction(family, z, (SAMPLE_U[0], SAMPLE_V[0]), "v"), wv[0]
    )
    with pytest.raises(ValueError):
        qc.ruling_direction(family, z, (0.0, 0.0), "w")


@pytest.mark.parametrize("family", [CENTRAL, PARABOLOID])
def test_swap_symmetry(family):
    s = qc.swap_symmetry(family)
    np.testing.assert_allclose(
        qc.evaluate(family, 0.3, SAMPLE_V, SAMPLE_U),
        qc.evaluate(family, 0.3, SAMPLE_U, SAMPLE_V) @ s.T,
        atol=1e-14,
    )


@pytest.mark.parametrize("family", [CENTRAL, PARABOLOID])
def test_ivory_map(family):
    p = qc.evaluate(family, 0.0, SAMPLE_U, SAMPLE_V)
    np.testing.assert_allclose(
        qc.ivory_map(family, 0.4, p), qc.evaluate(family, 0.4, SAMPLE_U, SAMPLE_V)
    )
    back = qc.ivory_between(family, 0.4, 0.0, qc.ivory_map(family, 0.4, p))
    np.testing.assert_allclose(back, p, atol=1e-13)
    with pytest.raises(errors.OffQuadric):
        qc.ivory_map(family, 0.4, p + 0.1)


@pytest.mark.parametrize("family", [CENTRAL, PARABOLOID])
def test_ivory_theorem(family):
    rng = np.random.default_rng(42)
    p = qc.evaluate(family, 0.0, rng.uniform(1.5, 2.5, 50), rng.uniform(-0.3, 0.3, 50))
    q = qc.evaluate(family, 0.0, rng.uniform(1.5, 2.5, 50), rng.uniform(-0.3, 0.3, 50))
    z = -0.6
    cross = np.linalg.norm(qc.ivory_map(family, z, p) - q, axis=-1)
    swapped = np.linalg.norm(p - qc.ivory_map(family, z, q), axis=-1)
    np.testing.assert_allclose(cross, swapped, rtol=1e-10)


@pytest.mark.parametrize("family", [CENTRAL, PARABOLOID])
def test_elliptic_coords(family):
    point = qc.evaluate(family, 0.4, 2.0, 0.1)
    coords = qc.elliptic_coords(family, point)
    assert list(coords.roots) == sorted(coords.roots)
    assert min(abs(root - 0.4) for root in coords) < 1e-10
    for root in coords:
        assert abs(qc.quadric_value(family, root, point)) < 1e-9
    assert qc.lame_residual(family, coords) < 1e-10


def test_elliptic_coords_degenerate():
    # On the focal conic in x2 = 0 the root a2 = -1 is double
    with pytest.raises(errors.DegeneratePoint):
        qc.elliptic_coords(
            CENTRAL, [0.0, 0.0, np.sqrt(2.0)], tol=config.DEFAULT.replace(deg=1e-6)
        )


def test_tc_solve_u1_paraboloid():
    # The tangent plane at the vertex is x3 = 0: z / 2 + 2 u1 v1 = 0
    assert qc.tc_solve_u1(PARABOLOID, 0.2, (0.0, 0.0), 1.0) == pytest.approx(-0.05)
    assert qc.tc_solve_u1(PARABOLOID, 0.5, (0.0, 0.0), -1.0) == pytest.approx(0.125)
    # v1 = 0 is parallel to the plane: the partner is at infinity
    with pytest.raises(errors.OutOfRange):
        qc.tc_solve_u1(PARABOLOID, 0.2, (0.0, 0.0), 0.0)


@pytest.mark.parametrize("family", [CENTRAL, PARABOLOID])
def test_tc_solve_u1_degenerate(family):
    # On x_0 itself the ruling v1 = v0 lies in the tangent plane: every u1 solves
    with pytest.raises(errors.DegenerateHomography):
        qc.tc_solve_u1(family, 0.0, (2.0, 0.1), 0.1)
    assert qc.tc_solve_u1(family, 0.0, (2.0, 0.1), 0.3) == pytest.approx(2.0)
    with pytest.raises(errors.DegenerateHomography):
        qc.tc_solve_u1_field(family, 0.0, [2.0, 1.0], [0.1, 0.2], [0.3, 0.2])


@pytest.mark.parametrize("family", [CENTRAL, PARABOLOID])
def test_tc_solve_u1(family):
    p0 = (2.0, 0.1)
    v1 = np.linspace(0.2, 0.4, 5) if family.is_central else np.linspace(0.4, 0.6, 5)
    u1 = qc.tc_solve_u1_field(family, 0.4, p0[0], p0[1], v1)
    for a, b in zip(u1, v1):
        assert qc.tc_solve_u1(family, 0.4, p0, b) == pytest.approx(a)
        assert abs(qc.tc_residual(family, 0.4, p0, (a, b))) < 1e-12


@pytest.mark.parametrize("family", [CENTRAL, PARABOLOID])
def test_rmpia(family):
    z, p0 = 0.4, (2.0, 0.1)
    p1 = (qc.tc_solve_u1(family, z, p0, 0.3), 0.3)
    rigid = qc.rmpia(family, z, p0, p1)
    assert rigid.det() == pytest.approx(1.0)
    assert rigid.orthogonality_error() < 1e-13
    assert qc.rmpia_residual(family, z, p0, p1, rigid) < 1e-10
    assert qc.gram_gap(family, z, p0, p1) < 1e-11
    assert qc.motion(family, z, p0, p1).distance(rigid) == 0
    assert qc.rmpia(family, 0.0, p0, p0).distance(qc.RigidMotion.identity()) == 0

