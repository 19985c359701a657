import numpy as np
import pytest

from .. import errors, grids
from .. import quadric_core as qc
from .. import rolling

CENTRAL = qc.make_family("central", 4, -1, 1)
PARABOLOID = qc.make_family("paraboloid", 1, -1)
DOMAIN = {
    CENTRAL: ((1.5, 2.5), (-0.25, 0.25)),
    PARABOLOID: ((-0.5, 0.5), (-0.25, 0.25)),
}


def _seed(family, n, phi=0.3):
    (u0, u1), (v0, v1) = DOMAIN[family]
    u, v = np.linspace(u0, u1, n), np.linspace(v0, v1, n)
    return rolling.ruled_seed(family, phi, u, v)


def test_quadric_seed():
    seed = rolling.quadric_seed(CENTRAL, np.linspace(1.5, 2.5, 5), np.linspace(0, 1, 4))
    assert seed.shape == (5, 4)
    np.testing.assert_allclose(seed.x, seed.x0, atol=1e-14)
    identity = np.broadcast_to(np.eye(3), (5, 4, 3, 3))
    np.testing.assert_allclose(seed.R, identity, atol=1e-15)
    assert rolling.metric_residual(seed) < 1e-12
    assert seed.motion(2, 1).distance(qc.RigidMotion.identity()) < 1e-14


def test_profile_function():
    assert rolling.profile_function(0.5)(np.zeros(3)).tolist() == [0.5] * 3
    assert rolling.profile_function(np.sin)(0.0) == 0
    uu, uv, vu = rolling.ruled_connection(np.cos)(np.zeros(2), np.zeros(2))
    assert uu.tolist() == uv.tolist() == [0, 0]
    assert vu.tolist() == [1, 1]


@pytest.mark.parametrize("family", [CENTRAL, PARABOLOID])
def test_ruled_seed_converges(family):
    coarse, fine = _seed(family, 17), _seed(family, 33)
    for residual in [rolling.metric_residual, rolling.rolling_residual]:
        assert grids.convergence_order(residual(coarse), residual(fine)) > 1.8
    assert rolling.axis_residual(fine) < 1e-5
    assert fine.phi.tolist() == [0.3] * 33


@pytest.mark.parametrize("family", [CENTRAL, PARABOLOID])
def test_ruled_connection_is_flat(family):
    (u0, u1), (v0, v1) = DOMAIN[family]
    form = rolling.ConnectionForm.sample(
        rolling.ruled_connection(0.3), np.linspace(u0, u1, 9), np.linspace(v0, v1, 9)
    )
    assert form.components.shape == (3, 9, 9)
    np.testing.assert_allclose(rolling.flatness_residual(form, family), 0, atol=1e-12)

    loop = [(u0, v0), (u0, v1), (u1, v1), (u1, v0)]
    flat = rolling.ruled_connection(0.3)
    assert rolling.holonomy(family, flat, loop, substeps=20) < 1e-8


@pytest.mark.parametrize("family", [CENTRAL, PARABOLOID])
def test_recovered_connection_flatness_halves_by_four(family):
    coarse = rolling.flatness_field(_seed(family, 33))
    fine = rolling.flatness_field(_seed(family, 65))
    assert coarse.shape == (33, 33) and fine.shape == (65, 65)
    big, small = grids.shared_maxima(coarse, fine, width=2)
    assert 0 < small < big
    assert big / small == pytest.approx(4, rel=0.2)

    with pytest.raises(ValueError):
        grids.shared_maxima(coarse, coarse)


def test_holonomy_of_curved_connection():
    def curved(u, v):
        value = 0.3 * np.ones_like(np.asarray(u, dtype=float))
        return value, np.zeros_like(value), np.zeros_like(value)

    loop = [(1.5, -0.25), (1.5, 0.25), (2.5, 0.25), (2.5, -0.25)]
    assert rolling.holonomy(CENTRAL, curved, loop, substeps=20) > 1e-4


def test_connection_interpolator():
    u, v = np.linspace(1.5, 2.5, 9), np.linspace(-0.25, 0.25, 9)
    form = rolling.ConnectionForm.sample(rolling.ruled_connection(np.cos), u, v)
    _, _, vu = form.interpolator()(np.array([2.0, 2.2]), np.array([0.0, 0.1]))
    np.testing.assert_allclose(vu, np.cos([0.0, 0.1]), atol=1e-5)

    zero = rolling.ConnectionForm.zero(u, v)
    assert not zero.components.any()


def test_swapped_seed():
    seed = _seed(CENTRAL, 9)
    swapped = seed.swapped()
    assert swapped.shape == seed.shape
    uu, vv = np.meshgrid(swapped.u, swapped.v, indexing="ij")
    expected = qc.evaluate(CENTRAL, 0.0, uu, vv)
    np.testing.assert_allclose(swapped.x0, expected, atol=1e-14)
    assert rolling.rolling_residual(swapped) == pytest.approx(
        rolling.rolling_residual(seed), rel=1e-6
    )
    np.testing.assert_allclose(swapped.swapped().x, seed.x, atol=1e-14)


def test_step_too_large():
    path = [(2.0, -0.25), (2.0, 0.25)]
    with pytest.raises(errors.StepTooLarge):
        rolling.integrate_frame(CENTRAL, rolling.ruled_connection(20.0), path)
    rotations, translations = rolling.integrate_frame(
        CENTRAL, rolling.ruled_connection(20.0), path, substeps=400
    )
    assert rotations.shape == (2, 3, 3) and translations.shape == (2, 3)


def test_roll_circle_on_line():
    s = np.linspace(0, 2 * np.pi, 50)
    wheel = lambda s: np.stack([np.cos(s), np.sin(s)], -1)  # noqa: E731
    road = lambda s: np.stack([s, np.zeros_like(s)], -1)  # noqa: E731
    motion = rolling.roll_curves(wheel, road, s)
    # The hub stays at unit height; the rim point traces a cycloid
    np.testing.assert_allclose(
        motion.apply([0.0, 0.0]), np.stack([s, np.ones_like(s)], -1), atol=1e-9
    )
    rim = motion.apply([1.0, 0.0])
    np.testing.assert_allclose(rim[:, 1], 1 - np.cos(s), atol=1e-9)
    assert motion.motion(7).det() == pytest.approx(1.0)

    with pytest.raises(errors.ArcLengthMismatch):
        rolling.roll_curves(wheel, lambda s: 2 * road(s), s)
