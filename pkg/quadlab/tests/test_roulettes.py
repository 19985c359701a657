import numpy as np
import pytest
import scipy.integrate

from .. import errors, grids
from .. import roulettes as rl


@pytest.mark.parametrize("closed_form", [True, False])
def test_parabola_catenary(closed_form):
    roulette = rl.parabola_catenary(closed_form=closed_form)
    assert roulette.trace.shape == (257, 2)
    assert rl.catenary_deviation(roulette) < 1e-10
    assert roulette.arclength_gap() < 1e-12


def test_ellipse_delaunay():
    b = 2.0
    roulette = rl.ellipse_delaunay(b)
    series = roulette.series
    np.testing.assert_allclose(series["k_roulette"], series["k_closed"], atol=1e-12)
    # The focal distance is b - E sin u
    np.testing.assert_allclose(
        series["focal_distance"], b - 3 ** 0.5 * np.sin(roulette.params), atol=1e-12
    )
    np.testing.assert_allclose(
        grids.interior(roulette.curvature(), 2, ndim=1),
        grids.interior(series["k_closed"], 2, ndim=1),
        atol=1e-4,
    )
    mean = roulette.revolution_mean_curvature()
    assert np.abs(grids.interior(mean + 1 / b, 2, ndim=1)).max() < 1e-5
    assert rl.polar_recovery_residual(roulette) < 1e-4


def test_ellipse_delaunay_circle():
    roulette = rl.ellipse_delaunay(1.0, n=65)
    np.testing.assert_allclose(roulette.trace[:, 1], 1.0, atol=1e-12)
    np.testing.assert_allclose(roulette.series["k_closed"], 0.0)


def test_ellipse_delaunay_errors():
    with pytest.raises(errors.OutOfRange):
        rl.ellipse_delaunay(0.5)
    with pytest.raises(ValueError):
        rl.ellipse_delaunay(2.0, eccentricity=1.0)
    rl.ellipse_delaunay(2.0, eccentricity=3 ** 0.5, n=33)
    with pytest.raises(errors.GridTooCoarse):
        rl.ellipse_delaunay(2.0, n=8)


def test_delaunay_curvature():
    assert rl.delaunay_curvature(2.0, 3 ** 0.5, 0.0) == 0
    u = np.pi / 2
    expected = 3 ** 0.5 / (2 * (2 - 3 ** 0.5))
    assert rl.delaunay_curvature(2.0, 3 ** 0.5, u) == pytest.approx(expected)


def test_kepler_roll():
    roll = rl.kepler_roll(2.0, 3.0, 0.0)
    assert roll.strength == pytest.approx(2 * 3 ** 0.5)
    assert roll.period == pytest.approx(np.pi * 6 ** 0.5)
    assert rl.kepler_period(2.0, 3.0, 0.0) == pytest.approx(roll.period, rel=1e-10)
    assert roll.s[-1] == pytest.approx(2 * np.pi * 2 ** 0.5)

    assert roll.trace_gap() < 1e-10
    assert roll.time_gap() < 1e-10
    assert roll.roulette.arclength_gap() < 1e-12
    assert roll.areal_gap() < 1e-8
    assert roll.energy_drift() < 1e-7
    assert roll.acceleration_gap() < 1e-6
    energy = grids.interior(roll.energy(), 2, ndim=1)
    np.testing.assert_allclose(energy, -1.0, rtol=1e-6)
    # |G| = sqrt(b - z) - sqrt(b - a) sin s^
    np.testing.assert_allclose(
        np.linalg.norm(roll.G, axis=-1), 3 ** 0.5 - np.sin(roll.s_hat), atol=1e-12
    )


def test_kepler_time():
    s_hat = np.array([0.0, np.pi / 2, np.pi])
    t = rl.kepler_time(2.0, 3.0, 0.0, s_hat)
    expected = 2 ** 0.5 / 2 * (3 ** 0.5 * s_hat + np.cos(s_hat) - 1)
    np.testing.assert_allclose(t, expected)


def test_kepler_ordering():
    with pytest.raises(errors.OrderingViolation):
        rl.kepler_roll(2.0, 3.0, 2.0)
    with pytest.raises(errors.OrderingViolation):
        rl.kepler_period(3.0, 2.0, 0.0)


def test_wheel_road():
    roulette = rl.wheel_road_demo()
    assert np.abs(roulette.trace[:, 1]).max() < 1e-8
    assert np.abs(roulette.series["road_identity"]).max() < 1e-12
    with pytest.raises(errors.OutOfRange):
        rl.wheel_road_demo((0.0, 1.0))


def test_ellipse_on_reflection():
    traces = rl.ellipse_on_reflection(2.0, 1.0)
    assert len(traces) == 2
    for roulette in traces:
        assert rl.focus_circle_gap(roulette, 4.0) < 1e-10
    with pytest.raises(ValueError):
        rl.ellipse_on_reflection(1.0, 2.0)


@pytest.mark.parametrize("radius", [1.0, 0.5])
def test_circle_on_line(radius):
    roulette = rl.circle_on_line(radius)
    assert roulette.deviation(roulette.series["cycloid"]) < 1e-10
    np.testing.assert_allclose(
        roulette.rolling.angle, roulette.series["angle"], atol=1e-9
    )
    with pytest.raises(ValueError):
        rl.circle_on_line(0.0)


def test_roulette_curvature():
    # A unit circle rolled on a line, tracing its centre: a straight line
    velocity = np.array([[1.0, 0.0]])
    acceleration = np.array([[0.0, 1.0]])
    offset = np.array([[0.0, 1.0]])
    assert rl.roulette_curvature(velocity, acceleration, offset)[0] == pytest.approx(0)


def test_ellipse_delaunay_refines():
    errors_by_n = []
    for n in [513, 1025, 2049]:
        mean = rl.ellipse_delaunay(2.0, n=n).revolution_mean_curvature()
        errors_by_n.append(np.abs(grids.interior(mean + 0.5, 2, ndim=1)).max())
    assert max(errors_by_n) < 1e-5
    # Refining must not amplify noise in the twice-differentiated trace
    assert errors_by_n[2] < 1e-6


def test_ellipse_arclength():
    u = np.linspace(0, 2 * np.pi, 9)
    speed = lambda x: np.hypot(np.sin(x), 2 * np.cos(x))  # noqa: E731
    expected = [
        scipy.integrate.quad(speed, 0, end, epsabs=1e-14, epsrel=1e-13)[0]
        for end in u
    ]
    np.testing.assert_allclose(rl.ellipse_arclength(2.0)(u), expected, atol=1e-11)
    np.testing.assert_allclose(rl.ellipse_arclength(1.0, 0.5)(np.array([1.5])), [1.0])
    assert rl.ellipse_arclength(2.0, np.pi)(np.pi) == pytest.approx(0, abs=1e-15)


def test_kepler_measured_period():
    minor = 2 ** 0.5
    roll = rl.kepler_roll(2.0, 3.0, 0.0, (0.0, 3 * np.pi * minor), n=6145)
    assert roll.measured_period() == pytest.approx(roll.period, rel=1e-8)
    assert roll.measured_period(angle=1.0) == pytest.approx(roll.period, rel=1e-8)
    with pytest.raises(errors.OutOfRange):
        rl.kepler_roll(2.0, 3.0, 0.0, n=257).measured_period()
