import dataclasses

import numpy as np
import pytest

from .. import errors
from .. import quadric_core as qc
from .. import tangency

CENTRAL = qc.make_family("central", 4, -1, 1)
PARABOLOID = qc.make_family("paraboloid", 1, -1)
# (family, p0, v1) clear of the poles and of vanishing Deltas
CASES = [(CENTRAL, (2.0, 0.1), 0.3), (PARABOLOID, (0.2, 0.1), 0.5)]
Z = 0.4


def _state(family, p0, v1):
    p1 = (qc.tc_solve_u1(family, Z, p0, v1), v1)
    return p1, tangency.deltas(family, Z, p0, p1)


def test_area_constant():
    assert tangency.area_constant(CENTRAL) == pytest.approx(2.0)
    assert tangency.area_constant(PARABOLOID) == pytest.approx(1.0)
    assert tangency.signed_area_constant(PARABOLOID) == pytest.approx(-1.0)


@pytest.mark.parametrize("family,p0,v1", CASES)
def test_m_is_quadratic(family, p0, v1):
    m = tangency.m_closed_form(family, Z, p0, v1)
    m0, m1, m2 = tangency.m_coefficients(family, Z, p0)
    np.testing.assert_allclose(m, m0 + m1 * v1 + m2 * v1 ** 2, rtol=1e-10, atol=1e-12)

    h = 1e-3
    fd = (
        tangency.m_closed_form(family, Z, p0, v1 + h)
        - tangency.m_closed_form(family, Z, p0, v1 - h)
    ) / (2 * h)
    np.testing.assert_allclose(
        tangency.dm_dv1(family, Z, p0, v1), fd, rtol=1e-8, atol=1e-10
    )

    m_tc, _, _ = tangency.m_field(family, Z, p0, v1)
    np.testing.assert_allclose(m_tc, m, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("family,p0,v1", CASES)
def test_deltas(family, p0, v1):
    p1, state = _state(family, p0, v1)
    assert state.p1 == pytest.approx(p1)
    assert state.deltas.shape == (4,)

    minus, plus = tangency.delta_pair(family, Z, p0, np.array([v1, v1]))
    np.testing.assert_allclose(minus, state.delta_minus, rtol=1e-9)
    np.testing.assert_allclose(plus, state.delta_plus, rtol=1e-9)

    assert tangency.product_identity_residual(state) < 1e-9
    assert tangency.exchange_residual(family, Z, p0, p1) < 1e-9


@pytest.mark.parametrize("family,p0,v1", CASES)
def test_identities(family, p0, v1):
    assert tangency.reflection_residual(family, Z, p0, v1) < 1e-9
    assert tangency.projection_residual(family, Z, p0, v1) < 1e-9
    assert tangency.integrability_residual(family, Z, p0, v1) < 1e-9


@pytest.mark.parametrize("family,p0,v1", CASES)
def test_du1_partials(family, p0, v1):
    _, state = _state(family, p0, v1)
    predicted = tangency.du1_partials(state)
    measured = tangency.du1_fd(family, Z, p0, v1)
    np.testing.assert_allclose(predicted, measured, rtol=1e-6, atol=1e-9)

    with pytest.raises(errors.SingularDelta):
        tangency.du1_partials(dataclasses.replace(state, delta_plus=0.0))


def test_not_in_tangency():
    family, p0, v1 = CASES[0]
    u1 = qc.tc_solve_u1(family, Z, p0, v1)
    tangency.check_tangency(family, Z, p0, (u1, v1))
    with pytest.raises(errors.NotInTangency):
        tangency.deltas(family, Z, p0, (u1 + 0.1, v1))


@pytest.mark.parametrize("family", [CENTRAL, PARABOLOID])
@pytest.mark.parametrize("p", [(2.0, 0.1), (0.3, -0.2)])
def test_gauss_curvature(family, p):
    exact = tangency.gauss_curvature(family, p)
    assert exact < 0
    assert tangency.gauss_curvature_fd(family, p) == pytest.approx(exact, rel=1e-5)
