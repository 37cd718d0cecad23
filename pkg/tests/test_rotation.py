from math import factorial, sqrt

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cmsynth.basis import (BasisSpec, SphericalExpansion, TMatrix, angular_functions, far_field,
                           sphere_grid)
from cmsynth.mie import pec_sphere_tmatrix
from cmsynth.rotation import (AzimuthalRotation, EulerAngles, RotationCache, rotate_expansion,
                              rotate_tmatrix, rotation_matrix, wigner_d, wigner_d_table)
from conftest import random_complex

angle = st.floats(-2 * np.pi, 2 * np.pi, allow_nan=False)


def wigner_sum(l, m, mp, beta):
    """Explicit factorial sum for d^l_{mm'}, indices in the order used here."""
    # this code's d^l_{m m'} is the textbook d^l_{m' m}
    a, b = mp, m
    out = 0.0
    for s in range(0, 2 * l + 1):
        if l + b - s < 0 or a - b + s < 0 or l - a - s < 0:
            continue
        num = sqrt(factorial(l + a) * factorial(l - a) * factorial(l + b) * factorial(l - b))
        den = factorial(l + b - s) * factorial(s) * factorial(a - b + s) * factorial(l - a - s)
        out += ((-1) ** (a - b + s) * num / den * np.cos(beta / 2) ** (2 * l + b - a - 2 * s)
                * np.sin(beta / 2) ** (a - b + 2 * s))
    return out


def test_wigner_frozen_values():
    assert wigner_d(2, 1, -1, 0.7) == pytest.approx(0.29743752219212377, abs=1e-15)
    assert wigner_d(3, 2, 1, 1.1) == pytest.approx(0.1847502589209339, abs=1e-15)
    for beta in (0.3, 1.0, 2.0):
        assert wigner_d(1, 0, 0, beta) == pytest.approx(np.cos(beta), abs=1e-15)


@given(st.integers(1, 12), st.floats(0, np.pi), st.data())
def test_wigner_matches_factorial_sum(l, beta, data):
    m = data.draw(st.integers(-l, l))
    mp = data.draw(st.integers(-l, l))
    assert abs(wigner_d(l, m, mp, beta) - wigner_sum(l, m, mp, beta)) <= 1e-12


@pytest.mark.parametrize("l", [1, 4, 9, 20])
def test_wigner_special_angles(l):
    m = np.arange(-l, l + 1)
    d0 = wigner_d_table(l, 0.0)[l]
    dpi = wigner_d_table(l, np.pi)[l]
    assert np.abs(d0 - np.eye(2 * l + 1)).max() <= 1e-13
    expect = np.array([[(-1.0) ** (l + b) * (a == -b) for b in m] for a in m])
    assert np.abs(dpi - expect).max() <= 1e-13


@given(st.floats(0, np.pi))
def test_wigner_table_orthogonal(beta):
    table = wigner_d_table(10, beta)
    assert np.all(table[1, :8] == 0)
    for l in range(1, 11):
        blk = table[l, 10 - l:10 + l + 1, 10 - l:10 + l + 1]
        assert np.abs(blk @ blk.T - np.eye(2 * l + 1)).max() <= 1e-12


def test_wigner_index_rejected():
    with pytest.raises(ValueError):
        wigner_d(2, 3, 0, 0.1)


def test_identity_angles():
    op = rotation_matrix(BasisSpec(6), EulerAngles(0.0, 0.0, 0.0), cache=None)
    assert np.array_equal(op.matrix, np.eye(op.matrix.shape[0]))


@given(angle, angle, angle)
def test_orthogonal_and_inverse(a, b, g):
    basis = BasisSpec(10)
    ang = EulerAngles(a, b, g)
    d = rotation_matrix(basis, ang, cache=None).matrix
    assert np.abs(d @ d.T - np.eye(basis.N)).max() <= 1e-12
    inv = rotation_matrix(basis, EulerAngles(-g, -b, -a), cache=None).matrix
    assert np.abs(inv @ d - np.eye(basis.N)).max() <= 1e-12
    assert np.abs(rotation_matrix(basis, ang.inverse(), cache=None).matrix - d.T).max() <= 1e-12


@given(angle, angle, angle)
def test_three_factor_decomposition(a, b, g):
    basis = BasisSpec(6)
    full = rotation_matrix(basis, EulerAngles(a, b, g), cache=None).matrix
    parts = [rotation_matrix(basis, EulerAngles(*t), cache=None).matrix
             for t in ((0, 0, g), (0, b, 0), (a, 0, 0))]
    assert np.abs(full - parts[0] @ parts[1] @ parts[2]).max() <= 1e-12


def test_quadrature_oracle(rng):
    # D restricted to one wave class equals the overlap of rotated and fixed harmonics
    basis = BasisSpec(4)
    ang = EulerAngles(*rng.uniform(-3, 3, 3))
    rm = ang.matrix()
    th, ph, w = sphere_grid(10, 20)
    u = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1)
    v = u @ rm
    y0, _, _ = angular_functions(basis, th, ph)
    y1, _, _ = angular_functions(basis, np.arccos(np.clip(v[:, 2], -1, 1)), np.arctan2(v[:, 1], v[:, 0]))
    gram = (y1 * w[:, None]).T @ y0
    tau = basis.indices[0] == 1
    d = rotation_matrix(basis, ang, cache=None).matrix
    assert np.abs(gram[np.ix_(tau, tau)] - d[np.ix_(tau, tau)]).max() <= 1e-12


def test_wave_classes_share_blocks(rng):
    basis = BasisSpec(5)
    d = rotation_matrix(basis, EulerAngles(*rng.uniform(-3, 3, 3)), cache=None).matrix
    tau = basis.indices[0]
    assert np.array_equal(d[np.ix_(tau == 1, tau == 1)], d[np.ix_(tau == 2, tau == 2)])
    assert np.all(d[np.ix_(tau == 1, tau == 2)] == 0)


def test_fast_products_match_dense(rng):
    basis = BasisSpec(7)
    op = rotation_matrix(basis, EulerAngles(*rng.uniform(-3, 3, 3)), cache=None)
    d = op.matrix
    x = random_complex(rng, basis.N)
    m = random_complex(rng, basis.N, basis.N)
    assert np.allclose(op.apply(x), d @ x, atol=1e-13)
    assert np.allclose(op.apply_transpose(m), d.T @ m, atol=1e-12)
    assert np.allclose(op.apply_right(m), m @ d, atol=1e-12)
    assert np.allclose(op.conjugate(m), d.T @ m @ d, atol=1e-12)
    az = AzimuthalRotation(basis, 0.83)
    dz = rotation_matrix(basis, EulerAngles(0.83, 0, 0), cache=None).matrix
    assert np.array_equal(az.matrix, dz)
    assert np.allclose(az.apply_transpose(m), dz.T @ m, atol=1e-12)
    assert np.allclose(az.apply_right(m), m @ dz, atol=1e-12)


def test_rotate_tmatrix_identity_and_symmetry(rng):
    basis = BasisSpec(4)
    t = TMatrix(random_complex(rng, basis.N, basis.N), 1.0, basis)
    same = rotate_tmatrix(t, rotation_matrix(basis, EulerAngles(0, 0, 0)))
    assert np.array_equal(same.matrix, t.matrix)
    op = rotation_matrix(basis, EulerAngles(*rng.uniform(-3, 3, 3)), cache=None)
    rot = rotate_tmatrix(t, op).matrix
    d = op.matrix
    assert np.allclose(rot, d.T @ t.matrix @ d, atol=1e-12)
    rot_t = rotate_tmatrix(TMatrix(t.matrix.T, 1.0, basis), op).matrix
    assert np.allclose(rot.T, rot_t, atol=1e-12)
    ev0 = np.sort_complex(np.linalg.eigvals(t.matrix))
    ev1 = np.sort_complex(np.linalg.eigvals(rot))
    assert np.abs(ev0 - ev1).max() <= 1e-10 * np.abs(ev0).max()


def test_sphere_invariant_under_rotation(rng):
    basis = BasisSpec(8)
    t = pec_sphere_tmatrix(1.0, 1.0, basis)
    dense = TMatrix(t.matrix, t.k, basis)
    for _ in range(3):
        op = rotation_matrix(basis, EulerAngles(*rng.uniform(-3, 3, 3)), cache=None)
        assert np.abs(rotate_tmatrix(dense, op).matrix - t.matrix).max() <= 1e-12
        assert np.abs(rotate_tmatrix(t, op).matrix - t.matrix).max() <= 1e-12


def test_basis_mismatch_rejected():
    op = rotation_matrix(BasisSpec(3), EulerAngles(0.1, 0.2, 0.3))
    with pytest.raises(ValueError):
        rotate_expansion(SphericalExpansion("outgoing", np.zeros(BasisSpec(4).N), 1.0, BasisSpec(4)), op)


def _lobe_at_z(basis):
    # l = 1 expansion whose far field adds in phase toward +z
    cols = []
    for n in range(basis.N):
        p = far_field(SphericalExpansion("outgoing", np.eye(basis.N)[n], 1.0, basis), [0.0], [0.0])
        cols.append(p.e_theta[0])
    return np.conj(np.array(cols))


@pytest.mark.parametrize("alpha,beta", [(0.0, 0.0), (0.7, 0.9), (-2.0, 2.4), (3.0, 1.5708)])
def test_lobe_steering(alpha, beta):
    basis = BasisSpec(1)
    f = _lobe_at_z(basis)
    th, ph = np.meshgrid(np.linspace(0, np.pi, 361), np.linspace(-np.pi, np.pi, 721, endpoint=False),
                         indexing="ij")
    base = far_field(SphericalExpansion("outgoing", f, 1.0, basis), th.ravel(), ph.ravel())
    assert th.ravel()[np.argmax(base.power)] == 0.0
    # a physically turned source has coefficients D^T f under the passive convention
    op = rotation_matrix(basis, EulerAngles(alpha, beta, 0.0), cache=None)
    turned = far_field(SphericalExpansion("outgoing", op.apply_transpose(f), 1.0, basis), th.ravel(), ph.ravel())
    i = np.argmax(turned.power)
    peak = np.array([np.sin(th.ravel()[i]) * np.cos(ph.ravel()[i]),
                     np.sin(th.ravel()[i]) * np.sin(ph.ravel()[i]), np.cos(th.ravel()[i])])
    want = np.array([np.sin(beta) * np.cos(alpha), np.sin(beta) * np.sin(alpha), np.cos(beta)])
    assert np.arccos(np.clip(peak @ want, -1, 1)) <= np.radians(0.6)


def test_cache_hits():
    cache = RotationCache()
    basis = BasisSpec(3)
    a = rotation_matrix(basis, EulerAngles(0.1, 0.2, 0.3), cache)
    b = rotation_matrix(basis, EulerAngles(0.1, 0.2, 0.3), cache)
    assert a is b and cache.hits == 1 and cache.misses == 1
