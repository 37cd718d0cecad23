"""Translation operators for spherical wave expansions.

Semantics used throughout: the operator for a displacement ``k d`` re-expands
a field whose expansion is centred on the point ``d`` into an expansion
centred on the origin.

- ``"outgoing-regular"`` (Y): outgoing waves about ``d`` become regular waves
  about the origin, valid inside ``|r| < |d|``.
- ``"regular-regular"`` (R = Re Y): same-type re-expansion; regular waves
  everywhere, outgoing waves outside ``|r| > |d|``.

General directions are handled by turning the frame so that its z-axis points
along ``d``, applying the axial kernel and turning back,
``Y(k d) = D.T @ Yz(k |d|) @ D``.  The axial kernel only couples equal
azimuthal orders and is cached per (truncations, kind, |kd|); the polar part
of the turn is cached with it, the azimuthal part is cheap.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
import threading
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import spherical_jn

from cmsynth.basis import EVEN, ODD, BasisSpec
from cmsynth.rotation import AzimuthalRotation, EulerAngles, default_rotation_cache, rotation_matrix
from cmsynth.special import legendre_table, spherical_h2

KINDS = ("outgoing-regular", "regular-regular")


@dataclass(frozen=True, eq=False)
class TranslationOperator:
    """Translation matrix from ``basis_in`` coefficients to ``basis_out`` ones."""

    matrix: np.ndarray
    kind: str
    displacement: np.ndarray
    basis_out: BasisSpec
    basis_in: BasisSpec

    @property
    def basis(self):
        return self.basis_out

    @property
    def T(self):
        return self.matrix.T

    def __matmul__(self, other):
        if isinstance(other, TranslationOperator):
            self.basis_in.check_compatible(other.basis_out)
            if self.basis_in.lmax != other.basis_out.lmax:
                raise ValueError("cannot compose operators with different truncations")
            return self.matrix @ other.matrix
        return self.matrix @ other


def _scalar_axial(lo, li, kc, kind):
    """Scalar axial re-expansion coefficients ``alpha[m, l', l]``.

    ``z_l(k|r + s|) Y_lm(r + s) = sum_l' alpha[m, l', l] j_l'(k r) Y_l'm(r)``
    for ``s = c z_hat`` (``kc = k c`` signed), degrees 0..lo and 0..li.
    ``z`` is j for ``regular`` and h^(2) for ``outgoing`` (then |r| < |s|).
    """
    pmax = lo + li
    nq = pmax + 1
    x, w = np.polynomial.legendre.leggauss(nq)
    lm = max(lo, li, pmax)
    theta, _, _ = legendre_table(lm, x)
    p = np.arange(pmax + 1)
    kabs = abs(kc)
    if kind == "regular":
        zp = spherical_jn(p, kabs)
    else:
        zp = spherical_h2(p, kabs)
    sgn = np.where((p % 2 == 1) & (kc < 0), -1.0, 1.0)
    a = np.arange(lo + 1)[:, None, None]
    b = np.arange(li + 1)[None, :, None]
    par = a + p[None, None, :] - b
    # i^(l'+p-l) is real for the parity-allowed terms; odd terms vanish in the integral
    phase = np.where(par % 4 == 0, 1.0, np.where(par % 4 == 2, -1.0, 0.0))
    # triangle rule: the Legendre triple integral vanishes outside |l-l'| <= p <= l+l';
    # masking keeps large h_p from amplifying quadrature roundoff
    pp = p[None, None, :]
    phase = np.where((pp >= np.abs(a - b)) & (pp <= a + b), phase, 0.0)
    weight = phase * (4 * np.pi / np.sqrt(2 * np.pi)) * np.sqrt((2 * p + 1) / (4 * np.pi)) * sgn * zp
    h = np.einsum("abp,pq->abq", weight, theta[p, 0])
    ta = theta[: lo + 1]  # [l', m, q]
    tb = theta[: li + 1]
    mmax = min(lo, li)
    return np.einsum("amq,bmq,abq,q->mab", ta[:, : mmax + 1], tb[:, : mmax + 1], h, w)


def _order_positions(basis, m, sigma):
    """Basis positions (tau=1) of order m, parity sigma, degrees max(1,m)..lmax."""
    ls = np.arange(max(1, m), basis.lmax + 1)
    start = 2 * (ls * ls - 1)
    if m == 0:
        return ls, start
    return ls, start + 2 + 4 * (m - 1) + 2 * sigma


def axial_translation(basis_out, basis_in, kc, kind):
    """Vector re-expansion along z for a signed centre shift.

    Coefficients about a centre C become coefficients about ``C + c z_hat``
    (``kc = k c``).  ``kind`` is ``"outgoing-regular"`` or
    ``"regular-regular"``.  Returns a dense ``(N_out, N_in)`` matrix with
    entries only between equal orders m; complex for the outgoing kind, real
    for the regular one.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown translation kind {kind!r}")
    lo, li = basis_out.lmax, basis_in.lmax
    scalar_kind = "outgoing" if kind == "outgoing-regular" else "regular"
    alpha = _scalar_axial(lo, li + 1, kc, scalar_kind)
    out = np.zeros((basis_out.size, basis_in.size), dtype=alpha.dtype)
    for m in range(0, min(lo, li) + 1):
        lp, _ = _order_positions(basis_out, m, EVEN)
        ls, _ = _order_positions(basis_in, m, EVEN)
        al = alpha[m]
        sq_out = np.sqrt(lp * (lp + 1.0))[:, None]
        sq_in = np.sqrt(ls * (ls + 1.0))[None, :]
        a_l = np.sqrt(((ls + 1.0) ** 2 - m * m) / ((2.0 * ls + 1) * (2.0 * ls + 3)))
        a_lm1 = np.sqrt(np.clip((ls * 1.0) ** 2 - m * m, 0, None) / ((2.0 * ls - 1) * (2.0 * ls + 1)))
        main = al[np.ix_(lp, ls)]
        up = al[np.ix_(lp, ls + 1)]
        down = al[np.ix_(lp, ls - 1)]
        A = (sq_in * main - kc * (up * (ls * a_l) + down * ((ls + 1) * a_lm1)) / sq_in) / sq_out
        B = -kc * m * main / (sq_in * sq_out)
        sigmas = (EVEN,) if m == 0 else (EVEN, ODD)
        for s_in in sigmas:
            _, cols = _order_positions(basis_in, m, s_in)
            for s_out in sigmas:
                _, rows = _order_positions(basis_out, m, s_out)
                if s_out == s_in:
                    out[np.ix_(rows, cols)] = A
                    out[np.ix_(rows + 1, cols + 1)] = A
                else:
                    blk = B if s_in == EVEN else -B
                    out[np.ix_(rows + 1, cols)] = blk
                    out[np.ix_(rows, cols + 1)] = blk
    return out


def _kd_key(kd):
    return float(f"{kd:.12e}")


class KernelCache:
    """Axial kernels keyed by (truncations, kind, |kd| to 12 significant digits).

    With ``directory`` set, kernels are also stored there as ``.npy`` files
    and reused by later processes.

    Kernels already turned by a polar angle (``D_beta.T @ Yz @ D_beta``) are
    kept as derived entries, so displacements differing only in azimuth cost
    an O(N^2) azimuthal turn.  ``builds`` counts axial kernel constructions
    and ``build_seconds`` their time; reads are lock-free, insertions
    serialized.
    """

    def __init__(self, directory=None):
        self.directory = directory
        self._store = {}
        self._polar = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.polar_hits = 0
        self.polar_builds = 0
        self.build_seconds = 0.0

    @property
    def builds(self):
        return self.misses

    def get(self, basis_out, basis_in, kd, kind):
        key = (basis_out.lmax, basis_in.lmax, basis_out.convention, kind, _kd_key(kd))
        mat = self._store.get(key)
        if mat is not None:
            self.hits += 1
            return mat
        mat = self._from_disk(key)
        if mat is None:
            t0 = time.perf_counter()
            mat = axial_translation(basis_out, basis_in, -kd, kind)
            self.build_seconds += time.perf_counter() - t0
            self._to_disk(key, mat)
        mat.setflags(write=False)
        with self._lock:
            self.misses += 1
            self._store.setdefault(key, mat)
        return self._store[key]

    def _file(self, key):
        lo, li, conv, kind, kd = key
        tag = f"{conv}|{kind}|{lo}|{li}|{kd!r}"
        return os.path.join(self.directory, "zkernel-" + hashlib.sha256(tag.encode()).hexdigest()[:24] + ".npy")

    def _from_disk(self, key):
        if not self.directory:
            return None
        try:
            return np.load(self._file(key))
        except (OSError, ValueError):
            return None

    def _to_disk(self, key, mat):
        if not self.directory:
            return
        os.makedirs(self.directory, exist_ok=True)
        path = self._file(key)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".npy")
        with os.fdopen(fd, "wb") as fh:
            np.save(fh, mat)
        os.replace(tmp, path)

    def get_polar(self, basis_out, basis_in, kd, kind, beta, rotations):
        key = (basis_out.lmax, basis_in.lmax, basis_out.convention, kind, _kd_key(kd), round(beta * 1e12))
        mat = self._polar.get(key)
        if mat is not None:
            self.polar_hits += 1
            return mat
        mat = _polar_turn(self.get(basis_out, basis_in, kd, kind), basis_out, basis_in, beta, rotations)
        mat.setflags(write=False)
        with self._lock:
            self.polar_builds += 1
            self._polar.setdefault(key, mat)
        return self._polar[key]

    def distinct_distances(self):
        return sorted({k[-1] for k in self._store})

    def stats(self):
        return {"entries": len(self._store), "hits": self.hits, "builds": self.misses,
                "polar_entries": len(self._polar), "polar_hits": self.polar_hits,
                "build_seconds": round(self.build_seconds, 6)}

    def clear(self):
        with self._lock:
            self._store.clear()
            self._polar.clear()
            self.hits = self.misses = 0
            self.polar_hits = self.polar_builds = 0
            self.build_seconds = 0.0

    def __len__(self):
        return len(self._store)


default_kernel_cache = KernelCache()


def _polar_turn(kernel, basis_out, basis_in, beta, rotations):
    if beta == 0.0:
        return np.array(kernel)
    angles = EulerAngles(0.0, beta, 0.0)
    d_out = rotation_matrix(basis_out, angles, rotations)
    d_in = d_out if basis_in.lmax == basis_out.lmax else rotation_matrix(basis_in, angles, rotations)
    return d_in.apply_right(d_out.apply_transpose(kernel))


def z_translation(basis, kd, kind="outgoing-regular", basis_in=None, cache=default_kernel_cache):
    """Axial operator for a field centred on ``kd * z_hat`` (``kd`` dimensionless).

    ``kd = 0`` is allowed only for ``regular-regular`` (identity).
    """
    basis_in = basis if basis_in is None else basis_in
    basis.check_compatible(basis_in)
    if kind not in KINDS:
        raise ValueError(f"unknown translation kind {kind!r}")
    if kd < 0:
        raise ValueError("axial distance must be non-negative; use general_translation")
    if kd == 0:
        if kind == "outgoing-regular":
            raise ValueError("outgoing-to-regular translation is singular at zero distance")
        mat = np.eye(basis.size, basis_in.size)
    elif cache is None:
        mat = axial_translation(basis, basis_in, -kd, kind)
    else:
        mat = cache.get(basis, basis_in, kd, kind)
    return TranslationOperator(np.array(mat), kind, np.array([0.0, 0.0, kd]), basis, basis_in)


def general_translation(basis, kd_vector, kind="outgoing-regular", basis_in=None,
                        cache=default_kernel_cache, rotations=default_rotation_cache):
    """Operator for a field centred on the point ``kd_vector`` (wavenumber-scaled).

    Built as ``D.T @ Yz(|kd|) @ D`` with ``D = D(alpha, beta, 0)`` turning z
    onto the displacement direction.  ``D`` is split into its polar and
    azimuthal factors; the polar stage is cached next to the kernel.

    Args:
        basis: output basis (regular side).
        kd_vector: displacement times wavenumber.
        kind: ``"outgoing-regular"`` or ``"regular-regular"``.
        basis_in: input basis, ``basis`` when omitted.
        cache: :class:`KernelCache`, or None to rebuild everything.
        rotations: rotation cache for the polar factor.

    Returns:
        TranslationOperator
    """
    basis_in = basis if basis_in is None else basis_in
    basis.check_compatible(basis_in)
    if kind not in KINDS:
        raise ValueError(f"unknown translation kind {kind!r}")
    v = np.asarray(kd_vector, dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError("displacement must be a finite 3-vector")
    kd = float(np.linalg.norm(v))
    if kd == 0:
        if kind == "outgoing-regular":
            raise ValueError("outgoing-to-regular translation is singular at zero distance")
        return z_translation(basis, 0.0, kind, basis_in, cache)
    angles = EulerAngles.toward(v)
    if cache is None:
        kernel = axial_translation(basis, basis_in, -kd, kind)
        mat = _polar_turn(kernel, basis, basis_in, angles.beta, rotations)
    else:
        mat = cache.get_polar(basis, basis_in, kd, kind, angles.beta, rotations)
    if angles.alpha != 0.0:
        az_out = AzimuthalRotation(basis, angles.alpha)
        az_in = az_out if basis_in.lmax == basis.lmax else AzimuthalRotation(basis_in, angles.alpha)
        mat = az_in.apply_right(az_out.apply_transpose(mat))
    else:
        mat = np.array(mat)
    return TranslationOperator(mat, kind, v, basis, basis_in)


def regular_part(op):
    """Regular-to-regular operator ``Re Y`` for the same displacement (real)."""
    if op.kind != "outgoing-regular":
        raise ValueError("regular_part expects an outgoing-to-regular operator")
    return TranslationOperator(np.array(op.matrix.real), "regular-regular",
                               op.displacement, op.basis_out, op.basis_in)
