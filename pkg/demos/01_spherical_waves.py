# %% [markdown]
# # Spherical-wave bases
#
# A basis is fixed by its truncation degree L; it holds N = 2L(L+2) real
# vector spherical wavefunctions.  This script builds a plane wave from its
# regular expansion, checks it against the closed form and looks at the
# radiated pattern of a single outgoing wave.

# %%
import numpy as np

from cmsynth.basis import (BasisSpec, SphericalExpansion, evaluate_field, far_field, pack_index,
                           plane_wave_coefficients, sphere_grid, truncation_order)

k = 2.0
for r in (0.5, 2.0, 10.0):
    lmax = truncation_order(k, r)
    print(f"k*r = {k * r:5.1f}  ->  L = {lmax:2d}, N = {BasisSpec(lmax).N}")

# %% [markdown]
# ## A plane wave as a regular expansion

# %%
basis = BasisSpec(30)
u = np.array([0.0, np.sin(0.4), np.cos(0.4)])
pol = np.array([1.0, 0.0, 0.0])
pw = plane_wave_coefficients(u, pol, k, basis)

rng = np.random.default_rng(0)
pts = rng.normal(size=(200, 3))
pts *= (4.0 * rng.uniform(size=(200, 1))) / np.linalg.norm(pts, axis=1, keepdims=True)
exact = pol[None, :] * np.exp(-1j * k * pts @ u)[:, None]
err = np.abs(evaluate_field(pw, pts) - exact).max()
print(f"plane wave reconstruction inside k*r <= 8 at L=30: max error {err:.1e}")

# %% [markdown]
# ## Far field of a single outgoing wave
#
# A unit coefficient on one index radiates the pattern of that multipole.
# The radiated power integrates to half the squared coefficient norm.

# %%
small = BasisSpec(2)
c = np.zeros(small.N)
c[pack_index(2, 0, 1, 0)] = 1.0      # TM, even, l=1, m=0: a z-directed dipole
theta, phi, w = sphere_grid(8, 9)
ff = far_field(SphericalExpansion("outgoing", c, k, small), theta, phi)
print(f"integrated power {np.sum(w * ff.power):.6f} (expected 0.5)")
print("normalized power vs theta along phi=0:")
sel = phi == 0
ref = np.sin(theta[sel]) ** 2
for t, p, q in zip(theta[sel], ff.normalized_power[sel], ref / ref.max()):
    print(f"  theta={np.degrees(t):6.1f} deg  {p:.3f}  (sin^2, same scaling: {q:.3f})")
