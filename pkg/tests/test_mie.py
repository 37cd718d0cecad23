import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import spherical_jn, spherical_yn

from cmsynth.basis import BasisSpec
from cmsynth.mie import SphereSpec, layered_sphere_tmatrix, mie_coefficients, pec_sphere_tmatrix

# independently evaluated reference entries (l = 1), t = (TE, TM)
PEC_L1 = {
    0.5: (-0.001320914316399484 + 0.03632037309511309j, -0.007724486652482428 - 0.08754895178377664j),
    1.0: (-0.045351286587159235 + 0.20807341827357137j, -0.29192658172642855 - 0.4546487134128408j),
    2.0: (-0.6066279118640877 + 0.4884981969378232j, -0.27640723694703534 - 0.44722061257319173j),
}
STACK = SphereSpec(((2.0, 38.0), (1.6, 15.0), (1.28, "pec")))
STACK_TE = [-0.51151655 + 0.49986735j, -0.04815974 + 0.21410368j, -0.00106972 + 0.03268906j]
STACK_TM = [-0.41390227 - 0.4925314j, -0.38891676 - 0.48750437j, -0.00592419 - 0.07674041j]


def riccati_bh(n, x):
    """psi, psi', xi, xi' with xi = x h^(1) (time factor exp(-i w t))."""
    j, dj = spherical_jn(n, x), spherical_jn(n, x, derivative=True)
    y, dy = spherical_yn(n, x), spherical_yn(n, x, derivative=True)
    psi, dpsi = x * j, j + x * dj
    xi, dxi = x * (j + 1j * y), (j + 1j * y) + x * (dj + 1j * dy)
    return psi, dpsi, xi, dxi


def dielectric_reference(x, m, n):
    psi, dpsi, xi, dxi = riccati_bh(n, x)
    mx = m * x
    psim = mx * spherical_jn(n, mx)
    dpsim = spherical_jn(n, mx) + mx * spherical_jn(n, mx, derivative=True)
    a = (m * psim * dpsi - psi * dpsim) / (m * psim * dxi - xi * dpsim)
    b = (psim * dpsi - m * psi * dpsim) / (psim * dxi - m * xi * dpsim)
    # exp(+j w t) with outgoing h^(2): t = -conj(b) (TE), -conj(a) (TM)
    return -np.conj(b), -np.conj(a)


@pytest.mark.parametrize("ka", sorted(PEC_L1))
def test_pec_frozen_values(ka):
    t = mie_coefficients(ka, SphereSpec.pec(1.0), 3)
    te, tm = PEC_L1[ka]
    assert abs(t[0, 0] - te) <= 1e-14
    assert abs(t[1, 0] - tm) <= 1e-14


@given(st.floats(0.05, 15.0))
def test_pec_closed_form(ka):
    n = np.arange(1, 12)
    t = mie_coefficients(ka, SphereSpec.pec(1.0), 11)
    j, dj = spherical_jn(n, ka), spherical_jn(n, ka, derivative=True)
    y, dy = spherical_yn(n, ka), spherical_yn(n, ka, derivative=True)
    h, dh = j - 1j * y, dj - 1j * dy
    te = -j / h
    tm = -(j + ka * dj) / (h + ka * dh)
    assert np.abs(t[0] - te).max() <= 1e-12
    assert np.abs(t[1] - tm).max() <= 1e-12


@given(st.floats(0.1, 6.0), st.floats(1.0, 40.0))
def test_dielectric_matches_reference(x, eps):
    n = np.arange(1, 9)
    t = mie_coefficients(x, SphereSpec.dielectric(1.0, eps), 8)
    te, tm = dielectric_reference(x, np.sqrt(eps), n)
    assert np.abs(t[0] - te).max() <= 1e-10
    assert np.abs(t[1] - tm).max() <= 1e-10


def test_layered_frozen_values():
    t = mie_coefficients(1.0, STACK, 3)
    assert np.abs(t[0] - STACK_TE).max() <= 1e-8
    assert np.abs(t[1] - STACK_TM).max() <= 1e-8


@pytest.mark.parametrize("ka", [0.5, 1.0, 2.0])
def test_pec_unitarity(ka):
    t = mie_coefficients(ka, SphereSpec.pec(1.0), 12)
    assert np.abs(np.abs(1 + 2 * t) - 1).max() <= 1e-12


def test_stack_unitarity():
    t = mie_coefficients(1.0, STACK, 10)
    assert np.abs(np.abs(1 + 2 * t) - 1).max() <= 1e-10


def test_scattering_matrix_unitary():
    b = BasisSpec(8)
    s = np.eye(b.N) + 2 * pec_sphere_tmatrix(1.0, 1.0, b).matrix
    assert np.abs(s.conj().T @ s - np.eye(b.N)).max() <= 1e-12


def test_small_sphere_vanishes():
    t = mie_coefficients(1e-4, SphereSpec.pec(1.0), 5)
    assert np.abs(t).max() <= 1e-7


def test_degenerate_across_sigma_and_m():
    b = BasisSpec(6)
    tm = pec_sphere_tmatrix(1.3, 0.9, b)
    assert tm.is_diagonal
    tau, _, l, _ = b.indices
    for t_ in (1, 2):
        for deg in range(1, 7):
            vals = tm.data[(tau == t_) & (l == deg)]
            assert len(vals) == 2 * deg + 1
            assert np.ptp(vals.real) == 0 and np.ptp(vals.imag) == 0


def test_free_space_layer_is_zero():
    t = layered_sphere_tmatrix(1.0, SphereSpec.dielectric(1.0, 1.0), BasisSpec(5))
    assert np.all(t.data == 0)


def test_single_pec_layer_matches():
    b = BasisSpec(6)
    a = layered_sphere_tmatrix(1.7, SphereSpec.pec(0.8), b)
    p = pec_sphere_tmatrix(1.7, 0.8, b)
    assert np.array_equal(a.data, p.data)


def test_high_degree_decay():
    t = mie_coefficients(1.0, STACK, 40)
    assert np.abs(t[:, 30:]).max() <= 1e-15


def test_invalid_specs():
    with pytest.raises(ValueError):
        SphereSpec(((1.0, 4.0), (1.2, "pec")))
    with pytest.raises(ValueError):
        SphereSpec(((1.0, "pec"), (0.5, 4.0)))
    with pytest.raises(ValueError):
        SphereSpec(((1.0, 0.5),))
    with pytest.raises(ValueError):
        SphereSpec(((1.0, "gold"),))
    with pytest.raises(ValueError):
        SphereSpec(())
    with pytest.raises(ValueError):
        pec_sphere_tmatrix(0.0, 1.0, BasisSpec(2))
