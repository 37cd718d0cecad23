"""Special functions shared by the field, rotation and translation code.

Associated Legendre functions are fully normalized on [-1, 1] and carry no
Condon-Shortley phase::

    theta_lm(x) = sqrt((2l+1)/2 * (l-m)!/(l+m)!) * P_l^m(x),   m >= 0

so that ``int theta_lm(x)**2 dx = 1``.  Spherical Hankel functions are of the
second kind (outgoing under the exp(+j omega t) time convention).
"""

from __future__ import annotations

import numpy as np
from scipy.special import spherical_jn, spherical_yn


def legendre_table(lmax, x, s=None):
    """Normalized associated Legendre functions and their angular companions.

    Args:
        lmax (int): highest degree.
        x (array_like): cos(theta).
        s (array_like, optional): sin(theta) >= 0; computed from ``x`` when omitted.

    Returns:
        Tuple ``(p, pi, tau)`` of arrays shaped ``(lmax+1, lmax+1) + x.shape``
        indexed ``[l, m]``:

        - ``p[l, m]``   = theta_lm(cos theta)
        - ``pi[l, m]``  = theta_lm / sin(theta) for m >= 1 (finite at the poles), 0 for m = 0
        - ``tau[l, m]`` = d theta_lm / d theta

        Entries with m > l are zero.
    """
    x = np.asarray(x, dtype=float)
    if s is None:
        s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    s = np.asarray(s, dtype=float)
    shape = (lmax + 1, lmax + 1) + x.shape
    p = np.zeros(shape)
    pi = np.zeros(shape)
    tau = np.zeros(shape)

    p[0, 0] = np.sqrt(0.5)
    for m in range(1, lmax + 1):
        fac = np.sqrt((2 * m + 1) / (2.0 * m))
        pi[m, m] = fac * p[m - 1, m - 1]
        p[m, m] = s * pi[m, m]

    for m in range(0, lmax):
        p[m + 1, m] = np.sqrt(2 * m + 3) * x * p[m, m]
        pi[m + 1, m] = np.sqrt(2 * m + 3) * x * pi[m, m]
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            p[l, m] = a * (x * p[l - 1, m] - b * p[l - 2, m])
            pi[l, m] = a * (x * pi[l - 1, m] - b * pi[l - 2, m])
    pi[:, 0] = 0.0

    for l in range(1, lmax + 1):
        tau[l, 0] = -np.sqrt(l * (l + 1.0)) * p[l, 1]
        for m in range(1, l + 1):
            c = np.sqrt((l * l - m * m) * (2.0 * l + 1.0) / (2.0 * l - 1.0))
            tau[l, m] = l * x * pi[l, m] - c * pi[l - 1, m]
    return p, pi, tau


def spherical_h2(l, x, derivative=False):
    """Spherical Hankel function of the second kind, h_l = j_l - i y_l."""
    return spherical_jn(l, x, derivative) - 1j * spherical_yn(l, x, derivative)


def radial_functions(l, x, kind):
    """Radial factors of the two wave classes at argument ``x = k r``.

    Returns ``(z, dz, zx)`` where ``z = z_l(x)``, ``dz = (x z_l)'/x`` and
    ``zx = z_l(x)/x``.  ``kind`` is ``"regular"`` (j_l) or ``"outgoing"`` (h_l).
    Regular functions are continued to x = 0 by their limits.
    """
    l = np.asarray(l)
    x = np.asarray(x, dtype=float)
    if kind == "regular":
        z = spherical_jn(l, x)
        zp = spherical_jn(l, x, True)
    elif kind == "outgoing":
        z = spherical_h2(l, x)
        zp = spherical_h2(l, x, True)
    else:
        raise ValueError(f"unknown radial kind {kind!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        zx = z / x
        dz = z / x + zp
    if kind == "regular":
        at0 = x == 0
        if np.any(at0):
            l1 = np.broadcast_to(l == 1, np.broadcast(l, x).shape)
            at0 = np.broadcast_to(at0, l1.shape)
            zx = np.where(at0, np.where(l1, 1.0 / 3.0, 0.0), zx)
            dz = np.where(at0, np.where(l1, 2.0 / 3.0, 0.0), dz)
    return z, dz, zx


def riccati(l, x, kind):
    """Riccati-Bessel function ``x z_l(x)`` and its derivative."""
    if kind == "regular":
        z = spherical_jn(l, x)
        zp = spherical_jn(l, x, True)
    else:
        z = spherical_h2(l, x)
        zp = spherical_h2(l, x, True)
    return x * z, z + x * zp


def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    return np.polynomial.legendre.leggauss(n)
