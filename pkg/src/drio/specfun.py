"""Complete elliptic integral of the first kind and Jacobi elliptic functions.

Both are computed from the arithmetic-geometric mean.  Throughout, ``m`` is the
*parameter* (``m = k**2``), the same convention as ``scipy.special.ellipj`` and
Abramowitz & Stegun ch. 16.  The third-order RIO waveform is written as
``cn(u, m)`` with ``m = 0.235`` under this convention.
"""
import math

import numpy as np

MAX_ITER = 32
EPS = 1e-15


class EllipticDomainError(ValueError):
    pass


def _check_parameter(m):
    m = float(m)
    if not math.isfinite(m) or m < 0.0 or m >= 1.0:
        raise EllipticDomainError(f"elliptic parameter must satisfy 0 <= m < 1, got {m!r}")
    return m


def agm(a, b):
    """Arithmetic-geometric mean of two positive numbers."""
    for _ in range(MAX_ITER):
        if abs(a - b) <= EPS * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 0.5 * (a + b)


def ellipk(m):
    """K(m) = integral_0^{pi/2} dtheta / sqrt(1 - m sin^2 theta)."""
    m = _check_parameter(m)
    return math.pi / (2.0 * agm(1.0, math.sqrt(1.0 - m)))


def _landen_sequence(m):
    a = [1.0]
    c = [math.sqrt(m)]
    b = math.sqrt(1.0 - m)
    while abs(c[-1]) > EPS and len(a) <= MAX_ITER:
        a_prev = a[-1]
        a.append(0.5 * (a_prev + b))
        c.append(0.5 * (a_prev - b))
        b = math.sqrt(a_prev * b)
    return a, c


def ellipj(u, m):
    """Jacobi elliptic functions ``(sn, cn, dn)`` of argument ``u``.

    Descending Landen transformation (A&S 16.4): the amplitude is built at the
    bottom of the AGM ladder, ``phi_N = 2**N a_N u``, and walked back up with
    ``phi_{n-1} = (phi_n + arcsin(c_n/a_n sin phi_n)) / 2``.

    ``u`` may be a scalar or an array; ``m`` is a scalar parameter in [0, 1).
    """
    m = _check_parameter(m)
    u = np.asarray(u, dtype=float)
    if m == 0.0:
        return np.sin(u), np.cos(u), np.ones_like(u)
    a, c = _landen_sequence(m)
    n = len(a) - 1
    phi = (2.0 ** n) * a[n] * u
    for j in range(n, 0, -1):
        phi = 0.5 * (phi + np.arcsin(c[j] / a[j] * np.sin(phi)))
    sn = np.sin(phi)
    cn = np.cos(phi)
    # cos(phi0)/cos(phi1 - phi0) is 0/0 at u = K; dn > 0 for real u
    dn = np.sqrt(1.0 - m * sn * sn)
    return sn, cn, dn


def jacobi_cn(u, m):
    return ellipj(u, m)[1]


def jacobi_sn(u, m):
    return ellipj(u, m)[0]


def jacobi_dn(u, m):
    return ellipj(u, m)[2]
