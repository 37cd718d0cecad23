"""Analytic transition matrices of spheres.

Entries are diagonal and depend on (tau, l) only.  A layered sphere is
handled with an inside-out recursion on the wave impedance seen at each
interface: in every shell the radial field is ``psi_j + R psi_h`` (Riccati
functions of the shell's own wavenumber) and the ratio of tangential E to
tangential H is continuous across interfaces.  The reflection coefficient of
the outer medium is the T-matrix entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cmsynth.basis import TMatrix
from cmsynth.special import riccati

PEC = "pec"


@dataclass(frozen=True)
class SphereSpec:
    """Concentric sphere described outside-in.

    Args:
        layers: sequence of ``(outer_radius_m, material)`` where material is
            ``"pec"`` or a real relative permittivity >= 1.  PEC may only be
            the innermost entry.
    """

    layers: tuple

    def __post_init__(self):
        layers = tuple((float(r), _material(m)) for r, m in self.layers)
        if not layers:
            raise ValueError("a sphere needs at least one layer")
        radii = [r for r, _ in layers]
        if any(not np.isfinite(r) or r <= 0 for r in radii):
            raise ValueError(f"layer radii must be positive, got {radii}")
        if any(b >= a for a, b in zip(radii, radii[1:])):
            raise ValueError(f"layer radii must strictly decrease outside-in, got {radii}")
        if any(m == PEC for _, m in layers[:-1]):
            raise ValueError("a PEC layer is only allowed as the innermost layer")
        object.__setattr__(self, "layers", layers)

    @classmethod
    def pec(cls, radius):
        return cls(((radius, PEC),))

    @classmethod
    def dielectric(cls, radius, eps_r):
        return cls(((radius, eps_r),))

    @property
    def radius(self):
        return self.layers[0][0]

    def describe(self):
        return ";".join(f"{r!r}:{m}" for r, m in self.layers)


def _material(m):
    if isinstance(m, str):
        if m.strip().lower() != PEC:
            raise ValueError(f"unknown material {m!r}; use 'pec' or a permittivity")
        return PEC
    eps = float(m)
    if not np.isfinite(eps) or eps < 1.0:
        raise ValueError(f"relative permittivity must be real and >= 1, got {m!r}")
    return eps


def _reflection(l, k, spec):
    """Outer reflection coefficients for both wave classes at degrees ``l``."""
    l = np.asarray(l)
    r_te = np.zeros(l.shape, dtype=complex)
    r_tm = np.zeros(l.shape, dtype=complex)
    z_te = z_tm = None  # impedance ratio at the current interface; None means no field yet
    # walk inside-out; consecutive shells of equal permittivity form no interface
    layers = list(spec.layers)
    inner_eps = None
    for idx in range(len(layers) - 1, -1, -1):
        radius, mat = layers[idx]
        outer_eps = layers[idx - 1][1] if idx > 0 else 1.0
        if mat == PEC:
            z_te = np.zeros(l.shape, dtype=complex)
            z_tm = np.zeros(l.shape, dtype=complex)
        else:
            if inner_eps is None:
                r_te[...] = 0.0
                r_tm[...] = 0.0
            kin = k * np.sqrt(mat)
            pj, dpj = riccati(l, kin * radius, "regular")
            ph, dph = riccati(l, kin * radius, "outgoing")
            u_te, du_te = pj + r_te * ph, dpj + r_te * dph
            u_tm, du_tm = pj + r_tm * ph, dpj + r_tm * dph
            with np.errstate(all="ignore"):
                z_te = u_te / (kin * du_te)
                z_tm = du_tm / (kin * u_tm)
        inner_eps = mat
        if outer_eps == mat:
            continue
        kout = k * np.sqrt(outer_eps)
        pj, dpj = riccati(l, kout * radius, "regular")
        ph, dph = riccati(l, kout * radius, "outgoing")
        with np.errstate(all="ignore"):
            r_te = -(pj - z_te * kout * dpj) / (ph - z_te * kout * dph)
            r_tm = -(dpj - z_tm * kout * pj) / (dph - z_tm * kout * ph)
        # huge Hankel values at high degree underflow the ratio to nothing
        r_te = np.where(np.isfinite(r_te), r_te, 0.0)
        r_tm = np.where(np.isfinite(r_tm), r_tm, 0.0)
    return r_te, r_tm


def mie_coefficients(k, spec, lmax):
    """Mie entries ``t[tau - 1, l - 1]`` for degrees 1..lmax.

    Args:
        k (float): background wavenumber (rad/m).
        spec (SphereSpec): the sphere.
        lmax (int): highest degree.

    Returns:
        complex array of shape (2, lmax).
    """
    if not k > 0:
        raise ValueError("wavenumber must be positive")
    l = np.arange(1, lmax + 1)
    r_te, r_tm = _reflection(l, k, spec)
    return np.stack([r_te, r_tm])


def _expand(coef, basis):
    tau, _, l, _ = basis.indices
    return coef[tau - 1, l - 1]


def layered_sphere_tmatrix(k, spec, basis):
    """Diagonal T-matrix of a (possibly layered) sphere centred at the origin."""
    coef = mie_coefficients(k, spec, basis.lmax)
    meta = {"source": "sphere", "sphere": spec.describe(), "enclosing_radius": spec.radius}
    return TMatrix(_expand(coef, basis), k, basis, meta)


def pec_sphere_tmatrix(k, radius, basis):
    """Diagonal T-matrix of a perfectly conducting sphere of ``radius``."""
    if not k * radius > 0:
        raise ValueError("k * radius must be positive")
    return layered_sphere_tmatrix(k, SphereSpec.pec(radius), basis)
