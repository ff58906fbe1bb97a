import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from drio.specfun import EllipticDomainError, agm, ellipj, ellipk, jacobi_cn, jacobi_dn, jacobi_sn

params = st.floats(0.0, 0.99)
args = st.floats(-20.0, 20.0)


def quad_k(m):
    return quad(lambda th: 1.0 / math.sqrt(1.0 - m * math.sin(th) ** 2), 0.0, math.pi / 2,
                epsabs=1e-13, epsrel=1e-13)[0]


def amplitude(u, m):
    """Invert u = F(phi | m) by bracketing; independent of the AGM."""
    F = lambda phi: quad(lambda th: 1.0 / math.sqrt(1.0 - m * math.sin(th) ** 2), 0.0, phi,
                         epsabs=1e-13, epsrel=1e-13)[0]
    return brentq(lambda p: F(p) - u, 0.0, 10.0, xtol=1e-15)


# frozen quadrature values
K_ORACLE = {0.235: 1.6777134912741105, 0.5: 1.8540746773013719, 0.9: 2.578092113348173}
CN_ORACLE = [(0.7, 0.235, 0.7726028675519928, 0.6348896038292309),
             (1.3, 0.5, 0.3908686328094734, 0.9204464742100178),
             (2.5, 0.9, 0.024714971010898375, 0.9996945384505861)]


def test_agm_known_value():
    # Gauss's constant: agm(1, sqrt 2) = 1.19814023473559220744
    assert agm(1.0, math.sqrt(2.0)) == pytest.approx(1.1981402347355922, abs=1e-15)


def test_k_at_zero():
    assert ellipk(0.0) == pytest.approx(math.pi / 2, abs=1e-15)


@pytest.mark.parametrize("m", sorted(K_ORACLE))
def test_k_matches_frozen_quadrature(m):
    assert abs(ellipk(m) - K_ORACLE[m]) < 1e-10


def test_k_matches_live_quadrature():
    assert abs(ellipk(0.235) - quad_k(0.235)) < 1e-10


@pytest.mark.parametrize("u, m, cn, sn", CN_ORACLE)
def test_cn_sn_against_root_finding(u, m, cn, sn):
    s, c, d = ellipj(u, m)
    assert c == pytest.approx(cn, abs=1e-12)
    assert s == pytest.approx(sn, abs=1e-12)
    assert d == pytest.approx(math.sqrt(1 - m * sn * sn), abs=1e-12)


def test_live_root_finding_oracle():
    u, m = 0.4, 0.235
    phi = amplitude(u, m)
    assert jacobi_cn(u, m) == pytest.approx(math.cos(phi), abs=1e-12)


@given(args)
def test_m_zero_is_trigonometric(u):
    s, c, d = ellipj(u, 0.0)
    assert abs(c - math.cos(u)) < 1e-10
    assert abs(s - math.sin(u)) < 1e-10
    assert d == 1.0


@given(args, params)
def test_pythagorean_identities(u, m):
    s, c, d = ellipj(u, m)
    assert abs(s * s + c * c - 1.0) < 1e-10
    assert abs(d * d + m * s * s - 1.0) < 1e-10


@given(st.floats(-5.0, 5.0), params)
def test_quarter_and_full_period(u, m):
    k = ellipk(m)
    assert abs(jacobi_cn(u + 4 * k, m) - jacobi_cn(u, m)) < 1e-9
    assert abs(jacobi_cn(u + 2 * k, m) + jacobi_cn(u, m)) < 1e-9


@pytest.mark.parametrize("m", [0.0, 0.235, 0.5, 0.9])
def test_values_at_quarter_period(m):
    k = ellipk(m)
    s, c, d = ellipj(k, m)
    assert abs(c) < 1e-12
    assert s == pytest.approx(1.0, abs=1e-12)
    assert d == pytest.approx(math.sqrt(1 - m), abs=1e-12)


@given(st.floats(-3.0, 3.0), params)
def test_derivative_of_sn(u, m):
    h = 1e-5
    fd = (jacobi_sn(u + h, m) - jacobi_sn(u - h, m)) / (2 * h)
    assert abs(fd - jacobi_cn(u, m) * jacobi_dn(u, m)) < 1e-8


def test_vectorised_shapes():
    u = np.linspace(-3, 3, 12).reshape(3, 4)
    s, c, d = ellipj(u, 0.235)
    assert s.shape == c.shape == d.shape == (3, 4)
    for (i, j), val in np.ndenumerate(u):
        assert c[i, j] == ellipj(val, 0.235)[1]


def test_cn_is_odd_about_quarter_period():
    m = 0.235
    k = ellipk(m)
    x = np.linspace(0, 1.5, 7)
    assert np.allclose(jacobi_cn(k + x, m), -jacobi_cn(k - x, m), atol=1e-13)


@pytest.mark.parametrize("m", [-0.1, 1.0, 1.5, float("nan"), float("inf")])
def test_domain_errors(m):
    with pytest.raises(EllipticDomainError):
        ellipk(m)
    with pytest.raises(EllipticDomainError):
        ellipj(0.3, m)
