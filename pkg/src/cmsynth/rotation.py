"""Rotation operators for real-harmonic spherical wave expansions.

A rotation of the coordinate frame by ZYZ Euler angles ``(alpha, beta, gamma)``
(about z, then the new y, then the new z) maps expansion coefficients
``f`` given in the old frame to ``f' = D f`` in the rotated frame.  ``D`` is
real, orthogonal and block-diagonal in (wave class, degree); it does not
depend on frequency.

A structure physically turned into orientation ``(alpha, beta, gamma)`` has
the transition matrix ``D.T @ T @ D`` (see :func:`rotate_tmatrix`).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.special import gammaln

from cmsynth.basis import EVEN, SphericalExpansion, TMatrix

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class EulerAngles:
    """ZYZ Euler angles in radians, canonicalized to beta in [0, pi]."""

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        a, b, g = float(self.alpha), float(self.beta) % _TWO_PI, float(self.gamma)
        if b > np.pi:
            # (a, b, g) and (a + pi, 2 pi - b, g + pi) describe the same rotation
            b = _TWO_PI - b
            a += np.pi
            g += np.pi
        object.__setattr__(self, "alpha", a % _TWO_PI)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "gamma", g % _TWO_PI)

    @classmethod
    def from_degrees(cls, alpha, beta, gamma):
        return cls(*np.deg2rad([alpha, beta, gamma]))

    @classmethod
    def toward(cls, vector):
        """Angles whose rotated z-axis points along ``vector`` (gamma = 0)."""
        v = np.asarray(vector, dtype=float)
        r = np.linalg.norm(v)
        if r == 0:
            raise ValueError("cannot orient toward a zero vector")
        return cls(math.atan2(v[1], v[0]), math.acos(max(-1.0, min(1.0, v[2] / r))), 0.0)

    def matrix(self):
        """Cartesian rotation whose columns are the rotated axes."""
        return _rz(self.alpha) @ _ry(self.beta) @ _rz(self.gamma)

    def inverse(self):
        return EulerAngles(-self.gamma, -self.beta, -self.alpha)

    def as_tuple(self):
        return (self.alpha, self.beta, self.gamma)


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _ry(b):
    c, s = math.cos(b), math.sin(b)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _jacobi_canonical(lmax, beta):
    """d^l_{M M'} on the region M >= |M'| as ``out[l, M, M' + lmax]``."""
    x = math.cos(beta)
    c, s = math.cos(beta / 2), math.sin(beta / 2)
    mm, mp = [], []
    for M in range(lmax + 1):
        for Mp in range(-M, M + 1):
            mm.append(M)
            mp.append(Mp)
    mm = np.array(mm)
    mp = np.array(mp)
    a = (mm - mp).astype(float)
    b = (mm + mp).astype(float)
    ab = a + b
    out = np.zeros((lmax + 1, lmax + 1, 2 * lmax + 1))

    pow_part = c ** b * s ** a
    p_prev = np.zeros_like(a)
    p_cur = np.ones_like(a)
    for n in range(0, lmax + 1):
        if n == 1:
            p_prev, p_cur = p_cur, (a + 1) + (ab + 2) * (x - 1) / 2
        elif n >= 2:
            c1 = 2 * n * (n + ab) * (2 * n + ab - 2)
            c2 = (2 * n + ab - 1) * ((2 * n + ab) * (2 * n + ab - 2) * x + a * a - b * b)
            c3 = 2 * (n + a - 1) * (n + b - 1) * (2 * n + ab)
            p_prev, p_cur = p_cur, (c2 * p_cur - c3 * p_prev) / c1
        l = mm + n
        ok = l <= lmax
        lv, Mv, Mpv = l[ok], mm[ok], mp[ok]
        logf = 0.5 * (
            gammaln(lv + Mv + 1) + gammaln(lv - Mv + 1) - gammaln(lv + Mpv + 1) - gammaln(lv - Mpv + 1)
        )
        out[lv, Mv, Mpv + lmax] = np.exp(logf) * pow_part[ok] * p_cur[ok]
    return out


def wigner_d_table(lmax, beta):
    """All d^l_{m m'}(beta) for l <= lmax as ``d[l, m + lmax, m' + lmax]``.

    Uses the Jacobi-polynomial closed form on m >= |m'| and the symmetries
    ``d_{m' m} = (-1)^(m-m') d_{m m'}`` and ``d_{-m,-m'} = (-1)^(m-m') d_{m m'}``
    elsewhere.  Entries with |m| or |m'| > l are zero.
    """
    L = lmax
    l, m, mp = np.meshgrid(np.arange(L + 1), np.arange(-L, L + 1), np.arange(-L, L + 1), indexing="ij")
    valid = (np.abs(m) <= l) & (np.abs(mp) <= l)
    if beta == 0.0:
        return np.where(valid & (m == mp), 1.0, 0.0)
    can = _jacobi_canonical(lmax, beta)
    sign = np.where((m - mp) % 2 == 0, 1.0, -1.0)
    M = np.empty_like(m)
    Mp = np.empty_like(m)
    sg = np.ones(m.shape)
    c1 = m >= np.abs(mp)
    c2 = ~c1 & (mp >= np.abs(m))
    c3 = ~c1 & ~c2 & (-m >= np.abs(mp))
    c4 = ~c1 & ~c2 & ~c3
    M[c1], Mp[c1] = m[c1], mp[c1]
    M[c2], Mp[c2], sg[c2] = mp[c2], m[c2], sign[c2]
    M[c3], Mp[c3], sg[c3] = -m[c3], -mp[c3], sign[c3]
    M[c4], Mp[c4] = -mp[c4], -m[c4]
    d = np.where(valid, sg * can[l, np.clip(M, 0, L), np.clip(Mp + L, 0, 2 * L)], 0.0)
    return d


def wigner_d(l, m, mp, beta):
    """Single Wigner d-function value d^l_{m m'}(beta)."""
    if l < 0 or abs(m) > l or abs(mp) > l:
        raise ValueError(f"invalid Wigner indices l={l}, m={m}, m'={mp}")
    return float(wigner_d_table(l, beta)[l, m + l, mp + l])


def _degree_block(l, d, alpha, gamma, lmax):
    """Rotation block over one degree, indexed like the basis (sigma, m) runs."""
    orders = [(0, EVEN)] + [(m, s) for m in range(1, l + 1) for s in (EVEN, 1)]
    ms = np.array([o[0] for o in orders])
    ss = np.array([o[1] for o in orders])
    m = ms[:, None]
    mp = ms[None, :]
    dl = d[l]
    d_pos = dl[m + lmax, mp + lmax]
    d_neg = dl[m + lmax, -mp + lmax]
    sgn_mp = np.where(mp % 2 == 0, 1.0, -1.0)
    A = d_pos + sgn_mp * d_neg
    B = d_pos - sgn_mp * d_neg
    cg, sg = np.cos(m * gamma), np.sin(m * gamma)
    ca, sa = np.cos(mp * alpha), np.sin(mp * alpha)
    # [[cg, sg], [-sg, cg]] @ diag(A, B) @ [[ca, sa], [-sa, ca]]
    ee = cg * A * ca - sg * B * sa
    eo = cg * A * sa + sg * B * ca
    oe = -sg * A * ca - cg * B * sa
    oo = -sg * A * sa + cg * B * ca
    row_s = ss[:, None]
    col_s = ss[None, :]
    sel = np.where(
        row_s == EVEN, np.where(col_s == EVEN, ee, eo), np.where(col_s == EVEN, oe, oo)
    )
    eps = np.where(ms == 0, 1.0, 2.0)
    pref = np.sqrt(np.outer(eps, eps) / 4.0) * np.where((m + mp) % 2 == 0, 1.0, -1.0)
    return pref * sel


@dataclass(frozen=True, eq=False)
class RotationOperator:
    """Orthogonal rotation of expansion coefficients.

    ``blocks[l - 1]`` acts on the ``2l + 1`` (sigma, m) functions of degree
    ``l`` and is shared by both wave classes.
    """

    basis: object
    angles: EulerAngles
    blocks: tuple

    @cached_property
    def matrix(self):
        n = self.basis.size
        out = np.zeros((n, n))
        for l, blk in enumerate(self.blocks, start=1):
            sl = self.basis.degree_slice(l)
            sub = np.zeros((sl.stop - sl.start,) * 2)
            sub[0::2, 0::2] = blk
            sub[1::2, 1::2] = blk
            out[sl, sl] = sub
        return out

    def _left(self, c, transpose):
        c = np.asarray(c)
        dtype = np.result_type(c, float)
        work = np.ascontiguousarray(c.reshape(c.shape[0], -1), dtype=dtype)
        flat = work.view(float)
        out = np.empty_like(flat)
        for l, blk in enumerate(self.blocks, start=1):
            sl = self.basis.degree_slice(l)
            # rows interleave tau, so each block row carries both wave classes
            src = flat[sl].reshape(2 * l + 1, -1)
            out[sl] = ((blk.T if transpose else blk) @ src).reshape(flat[sl].shape)
        return out.reshape(-1).view(dtype).reshape(c.shape)

    def apply(self, coefficients):
        """``D @ c`` for a vector or a matrix ``c`` (rows indexed by the basis)."""
        return self._left(coefficients, False)

    def apply_transpose(self, coefficients):
        """``D.T @ c``."""
        return self._left(coefficients, True)

    def apply_right(self, matrix):
        """``M @ D`` for a matrix whose columns are indexed by the basis."""
        m = np.asarray(matrix)
        out = np.empty(m.shape, dtype=np.result_type(m, float))
        for l, blk in enumerate(self.blocks, start=1):
            sl = self.basis.degree_slice(l)
            sub = m[:, sl].reshape(m.shape[0], 2 * l + 1, 2)
            out[:, sl] = np.einsum("njt,jk->nkt", sub, blk, optimize=True).reshape(m.shape[0], -1)
        return out

    def conjugate(self, matrix):
        """``D.T @ M @ D`` for a square matrix in this basis."""
        return self.apply_right(self.apply_transpose(matrix))

    @property
    def T(self):
        return self.matrix.T


class AzimuthalRotation:
    """Turn about z by ``alpha``, stored as a sparse operator.

    Only the even/odd pair of each (tau, l, m) mixes, so products with dense
    matrices cost O(N^2) instead of a blockwise matrix product.
    """

    def __init__(self, basis, alpha):
        self.basis = basis
        self.alpha = float(alpha)
        _, sigma, _, m = basis.indices
        ca, sa = np.cos(m * self.alpha), np.sin(m * self.alpha)
        idx = np.arange(basis.size)
        partner = np.where(m == 0, idx, np.where(sigma == EVEN, idx + 2, idx - 2))
        off = np.where(m == 0, 0.0, np.where(sigma == EVEN, sa, -sa))
        rows = np.concatenate([idx, idx])
        cols = np.concatenate([idx, partner])
        vals = np.concatenate([np.where(m == 0, 1.0, ca), off])
        keep = vals != 0.0
        d = sparse.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(basis.size,) * 2)
        self._dt = d.T.tocsr()

    @property
    def matrix(self):
        return self._dt.T.toarray()

    def apply_transpose(self, x):
        """``D.T @ x`` along the first axis."""
        x = np.ascontiguousarray(x)
        if np.iscomplexobj(x):
            flat = x.reshape(x.shape[0], -1).view(float)
            return (self._dt @ flat).view(complex).reshape(x.shape)
        return self._dt @ x

    def apply_right(self, x):
        """``x @ D`` for a 2-D array."""
        return self.apply_transpose(np.asarray(x).T).T


def _build(basis, angles):
    L = basis.lmax
    d = wigner_d_table(L, angles.beta)
    blocks = tuple(_degree_block(l, d, angles.alpha, angles.gamma, L) for l in range(1, L + 1))
    for b in blocks:
        b.setflags(write=False)
    return RotationOperator(basis, angles, blocks)


class RotationCache:
    """Rotation operators keyed by basis and angles quantized to 1e-12 rad."""

    def __init__(self):
        self._store = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(basis, angles):
        q = tuple(round(a * 1e12) for a in angles.as_tuple())
        return (basis.lmax, basis.convention, q)

    def get(self, basis, angles):
        key = self.key(basis, angles)
        op = self._store.get(key)
        if op is not None:
            self.hits += 1
            return op
        op = _build(basis, angles)
        with self._lock:
            self.misses += 1
            self._store.setdefault(key, op)
        return self._store[key]

    def clear(self):
        with self._lock:
            self._store.clear()
            self.hits = self.misses = 0

    def __len__(self):
        return len(self._store)


default_rotation_cache = RotationCache()


def rotation_matrix(basis, angles, cache=default_rotation_cache):
    """Rotation operator for ``basis`` and :class:`EulerAngles`."""
    if not isinstance(angles, EulerAngles):
        angles = EulerAngles(*angles)
    if cache is None:
        return _build(basis, angles)
    return cache.get(basis, angles)


def rotate_expansion(expansion, op):
    """Coefficients of the same field in the rotated frame, ``D @ f``."""
    expansion.basis.check_compatible(op.basis)
    if expansion.basis.lmax != op.basis.lmax:
        raise ValueError("rotation operator and expansion use different truncations")
    return SphericalExpansion(expansion.kind, op.apply(expansion.coefficients), expansion.k, expansion.basis)


def rotate_tmatrix(tmatrix, op):
    """Transition matrix of the structure turned by ``op.angles``: ``D.T T D``."""
    tmatrix.basis.check_compatible(op.basis)
    if tmatrix.basis.lmax != op.basis.lmax:
        raise ValueError("rotation operator and T-matrix use different truncations")
    if op.angles.as_tuple() == (0.0, 0.0, 0.0):
        return tmatrix
    if tmatrix.is_diagonal:
        # spheres: entries depend on (tau, l) only, so the rotation is exact identity
        tau, _, l, _ = tmatrix.basis.indices
        key = tau * 10_000 + l
        d = tmatrix.data
        if all(np.all(d[key == u] == d[key == u][0]) for u in np.unique(key)):
            return tmatrix
    return TMatrix(op.conjugate(tmatrix.matrix), tmatrix.k, tmatrix.basis, dict(tmatrix.meta))
