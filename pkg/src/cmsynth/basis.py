"""Real-harmonic vector spherical wavefunctions.

Index algebra, truncation rule and field evaluation for the wave basis used
throughout the package.

Conventions (recorded in :data:`CONVENTION`):

- time dependence exp(+j omega t); outgoing radial function h_l^(2)
- real spherical harmonics ``Y_{sigma m l} = theta_lm(cos t) * Phi_{sigma m}(phi)``
  with ``Phi_e = sqrt(eps_m / 2 pi) cos(m phi)``, ``Phi_o = sqrt(1/pi) sin(m phi)``
  and no Condon-Shortley phase
- angular vector functions
  ``A_1n = grad(Y_n) x r / sqrt(l(l+1))``, ``A_2n = r grad(Y_n) / sqrt(l(l+1))``,
  ``A_3n = r_hat Y_n``, orthonormal on the unit sphere
- wavefunctions ``u_1n = z_l(kr) A_1n`` and
  ``u_2n = (x z_l)'/x A_2n + sqrt(l(l+1)) z_l/x A_3n`` (x = kr), so that
  ``curl u_1n = k u_2n`` and ``curl u_2n = k u_1n``

With this normalization a radiating expansion ``f`` carries the power
``|f|^2 / (2 eta k^2)``; in the reduced units used by :func:`far_field` the
power is ``|f|^2 / 2``.  A lossless scatterer has a unitary ``S = 1 + 2T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from cmsynth.special import legendre_table, radial_functions

CONVENTION = "vswf-real/ejwt/h2/unit-power/v1"

EVEN = 0
ODD = 1


class WaveIndex(NamedTuple):
    """Composite index of a vector spherical wavefunction."""

    tau: int
    sigma: int
    l: int
    m: int


def truncation_order(k, r_max):
    """Highest wave degree needed for a structure reaching radius ``r_max``.

    ``ceil(k r + 2 (k r)^(1/3) + 3)``.
    """
    if k < 0 or r_max < 0:
        raise ValueError("wavenumber and radius must be non-negative")
    kr = float(k) * float(r_max)
    # guard against ceil jumping on values that are integral up to roundoff
    return int(math.ceil(kr + 2.0 * np.cbrt(kr) + 3.0 - 1e-12))


def basis_size(lmax):
    return 2 * lmax * (lmax + 2)


def pack_index(tau, sigma, l, m, lmax=None):
    """Linear position of ``(tau, sigma, l, m)`` in the canonical ordering.

    Degrees ascend, then orders, then parity (even before odd), then wave
    class; each ``(l, m)`` pair therefore occupies a contiguous run.
    """
    if tau not in (1, 2):
        raise ValueError(f"tau must be 1 or 2, got {tau}")
    if sigma not in (EVEN, ODD):
        raise ValueError(f"sigma must be EVEN (0) or ODD (1), got {sigma}")
    if l < 1 or not 0 <= m <= l:
        raise ValueError(f"invalid degree/order l={l}, m={m}")
    if sigma == ODD and m == 0:
        raise ValueError("odd harmonics need m >= 1")
    if lmax is not None and l > lmax:
        raise ValueError(f"degree {l} exceeds lmax={lmax}")
    n = 2 * (l * l - 1)
    if m > 0:
        n += 2 + 4 * (m - 1) + 2 * sigma
    return n + tau - 1


def unpack_index(n, lmax=None):
    if n < 0 or (lmax is not None and n >= basis_size(lmax)):
        raise ValueError(f"index {n} out of range")
    l = int(math.isqrt(n // 2 + 1))
    rem = n - 2 * (l * l - 1)
    tau = rem % 2 + 1
    rem //= 2
    if rem == 0:
        return WaveIndex(tau, EVEN, l, 0)
    rem -= 1
    return WaveIndex(tau, rem % 2, l, rem // 2 + 1)


@dataclass(frozen=True)
class BasisSpec:
    """Truncated wave basis: degrees 1..lmax, both wave classes and parities."""

    lmax: int
    convention: str = CONVENTION

    def __post_init__(self):
        if int(self.lmax) != self.lmax or self.lmax < 1:
            raise ValueError(f"lmax must be a positive integer, got {self.lmax}")

    @property
    def size(self):
        return basis_size(self.lmax)

    N = size

    @cached_property
    def indices(self):
        """Arrays ``(tau, sigma, l, m)`` over the whole basis, in order."""
        rows = [unpack_index(n) for n in range(self.size)]
        tau, sigma, l, m = (np.array(c, dtype=int) for c in zip(*rows))
        for a in (tau, sigma, l, m):
            a.setflags(write=False)
        return tau, sigma, l, m

    def degree_slice(self, l):
        """Contiguous slice holding every function of degree ``l``."""
        start = 2 * (l * l - 1)
        return slice(start, start + 2 * (2 * l + 1))

    def check_compatible(self, other):
        if self.convention != other.convention:
            raise ValueError(
                f"basis convention mismatch: {self.convention!r} vs {other.convention!r}"
            )


@dataclass(frozen=True, eq=False)
class SphericalExpansion:
    """Coefficients of a field in regular or outgoing wavefunctions."""

    kind: str
    coefficients: np.ndarray
    k: float
    basis: BasisSpec

    def __post_init__(self):
        if self.kind not in ("regular", "outgoing"):
            raise ValueError(f"kind must be 'regular' or 'outgoing', got {self.kind!r}")
        c = np.asarray(self.coefficients, dtype=complex)
        if c.shape != (self.basis.size,):
            raise ValueError(f"expected {self.basis.size} coefficients, got shape {c.shape}")
        object.__setattr__(self, "coefficients", c)


@dataclass(frozen=True, eq=False)
class TMatrix:
    """Transition matrix mapping regular to outgoing coefficients.

    Spheres store only the diagonal; :attr:`matrix` densifies on demand.
    """

    data: np.ndarray
    k: float
    basis: BasisSpec
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        n = self.basis.size
        if d.shape not in ((n,), (n, n)):
            raise ValueError(f"T-matrix data of shape {d.shape} does not fit N={n}")
        object.__setattr__(self, "data", d)

    @property
    def is_diagonal(self):
        return self.data.ndim == 1

    @property
    def matrix(self):
        return np.diag(self.data) if self.is_diagonal else self.data

    @property
    def lmax(self):
        return self.basis.lmax

    def __matmul__(self, other):
        return self.matrix @ other


def _spherical(points):
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if p.shape[-1] != 3:
        raise ValueError("points must have a trailing dimension of 3")
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    rho = np.hypot(x, y)
    theta = np.arctan2(rho, z)
    phi = np.arctan2(y, x)
    return r, theta, phi


def _unit_vectors(theta, phi):
    ct, st, cp, sp = np.cos(theta), np.sin(theta), np.cos(phi), np.sin(phi)
    r_hat = np.stack([st * cp, st * sp, ct], axis=-1)
    t_hat = np.stack([ct * cp, ct * sp, -st], axis=-1)
    p_hat = np.stack([-sp, cp, np.zeros_like(phi)], axis=-1)
    return r_hat, t_hat, p_hat


def angular_functions(basis, theta, phi):
    """Scalar and vector angular functions on a set of directions.

    Returns ``(Y, A1, A2)`` with shapes ``(P, N)``, ``(P, N, 3)``, ``(P, N, 3)``
    in Cartesian components, where ``P`` is the number of directions.
    Entries for ``tau = 2`` repeat those for ``tau = 1``; callers pick by class.
    """
    theta = np.ravel(theta)
    phi = np.ravel(phi)
    tau_i, sig_i, l_i, m_i = basis.indices
    p, pi, tau = legendre_table(basis.lmax, np.cos(theta), np.sin(theta))
    eps = np.where(m_i == 0, 1.0, 2.0)
    mphi = np.outer(phi, m_i)
    even = sig_i == EVEN
    norm = np.where(even, np.sqrt(eps / (2 * np.pi)), np.sqrt(1 / np.pi))
    ang = np.where(even, np.cos(mphi), np.sin(mphi)) * norm
    dang = np.where(even, -np.sin(mphi), np.cos(mphi)) * norm * m_i

    pl = p[l_i, m_i].T
    pil = pi[l_i, m_i].T
    tl = tau[l_i, m_i].T
    r_hat, t_hat, p_hat = _unit_vectors(theta, phi)
    inv = 1.0 / np.sqrt(l_i * (l_i + 1.0))
    d_theta = (tl * ang * inv)[..., None]
    d_phi = (pil * dang * inv)[..., None]
    a2 = d_theta * t_hat[:, None, :] + d_phi * p_hat[:, None, :]
    a1 = d_phi * t_hat[:, None, :] - d_theta * p_hat[:, None, :]
    return pl * ang, a1, a2


def wavefunctions(basis, k, points, kind):
    """Every basis wavefunction evaluated at ``points``: array ``(P, N, 3)``."""
    r, theta, phi = _spherical(points)
    r, theta, phi = r.ravel(), theta.ravel(), phi.ravel()
    if kind == "outgoing" and np.any(r == 0):
        raise ValueError("outgoing wavefunctions are singular at the origin")
    y, a1, a2 = angular_functions(basis, theta, phi)
    r_hat, _, _ = _unit_vectors(theta, phi)
    tau_i, _, l_i, _ = basis.indices
    z, dz, zx = radial_functions(l_i[None, :], k * r[:, None], kind)
    sq = np.sqrt(l_i * (l_i + 1.0))
    te = z[..., None] * a1
    tm = dz[..., None] * a2 + (sq * zx * y)[..., None] * r_hat[:, None, :]
    return np.where((tau_i == 1)[None, :, None], te, tm)


def evaluate_field(expansion, points):
    """Electric field of an expansion at Cartesian ``points`` (meters).

    Returns a complex array of shape ``(P, 3)``.
    """
    w = wavefunctions(expansion.basis, expansion.k, points, expansion.kind)
    return np.einsum("pnc,n->pc", w, expansion.coefficients)


@dataclass(frozen=True, eq=False)
class FarFieldPattern:
    """Far-field amplitudes on a direction grid.

    ``E(r) ~ (e_theta, e_phi) * exp(-j k r) / (k r)`` and ``power`` is the
    radiation intensity ``|E|^2 / 2`` in reduced units, whose integral over
    the sphere equals ``|f|^2 / 2``.
    """

    theta: np.ndarray
    phi: np.ndarray
    e_theta: np.ndarray
    e_phi: np.ndarray

    @property
    def power(self):
        return 0.5 * (np.abs(self.e_theta) ** 2 + np.abs(self.e_phi) ** 2)

    @property
    def normalized_power(self):
        p = self.power
        peak = p.max()
        return p / peak if peak > 0 else p

    def normalized_db(self, floor=-300.0):
        with np.errstate(divide="ignore"):
            return np.maximum(10.0 * np.log10(self.normalized_power), floor)


def far_field(expansion, theta, phi):
    """Asymptotic far field of an outgoing expansion on paired (theta, phi)."""
    if expansion.kind != "outgoing":
        raise ValueError("far field requires an outgoing expansion")
    theta = np.ravel(np.asarray(theta, dtype=float))
    phi = np.ravel(np.asarray(phi, dtype=float))
    if theta.size == 0 or theta.shape != phi.shape:
        raise ValueError("grid must be a non-empty list of (theta, phi) pairs")
    basis = expansion.basis
    _, a1, a2 = angular_functions(basis, theta, phi)
    tau_i, _, l_i, _ = basis.indices
    phase = np.where(tau_i == 1, 1j ** ((l_i + 1) % 4), 1j ** (l_i % 4))
    vec = np.where((tau_i == 1)[None, :, None], a1, a2)
    f = np.einsum("pnc,n->pc", vec, phase * expansion.coefficients)
    _, t_hat, p_hat = _unit_vectors(theta, phi)
    return FarFieldPattern(
        theta=theta,
        phi=phi,
        e_theta=np.einsum("pc,pc->p", f, t_hat),
        e_phi=np.einsum("pc,pc->p", f, p_hat),
    )


def plane_wave_coefficients(direction, polarization, k, basis):
    """Regular expansion of ``polarization * exp(-j k direction . r)``."""
    d = np.asarray(direction, dtype=float)
    pol = np.asarray(polarization, dtype=complex)
    if abs(np.linalg.norm(d) - 1.0) > 1e-10:
        raise ValueError("direction must be a unit vector")
    if abs(np.vdot(pol, pol).real - 1.0) > 1e-10:
        raise ValueError("polarization must be a unit vector")
    if abs(np.dot(d, pol)) > 1e-10:
        raise ValueError("polarization must be orthogonal to the propagation direction")
    _, theta, phi = _spherical(d)
    _, a1, a2 = angular_functions(basis, theta, phi)
    tau_i, _, l_i, _ = basis.indices
    a1p = a1[0] @ pol
    a2p = a2[0] @ pol
    mj = (-1j) ** (l_i % 4)
    coef = np.where(tau_i == 1, 4 * np.pi * mj * a1p, -4 * np.pi * (-1j) * mj * a2p)
    return SphericalExpansion("regular", coef, k, basis)


def sphere_grid(n_theta, n_phi):
    """Gauss-Legendre x uniform product grid with quadrature weights.

    Integrates band-limited functions of degree below ``min(2 n_theta, n_phi)``
    exactly.  Returns flattened ``theta, phi, weights``.
    """
    x, w = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    t, p = np.meshgrid(np.arccos(x), phi, indexing="ij")
    weights = np.outer(w, np.full(n_phi, 2 * np.pi / n_phi))
    return t.ravel(), p.ravel(), weights.ravel()
