# %% [markdown]
# # Rotating expansions and T-matrices
#
# Rotations act degree by degree through real Wigner matrices.  The operator
# is orthogonal, so rotating a T-matrix is a similarity transform and leaves
# its spectrum untouched.

# %%
import numpy as np

from cmsynth.basis import BasisSpec, SphericalExpansion, TMatrix, far_field
from cmsynth.rotation import EulerAngles, rotate_tmatrix, rotation_matrix, wigner_d_table

basis = BasisSpec(6)
ang = EulerAngles.from_degrees(30.0, 50.0, -20.0)
D = rotation_matrix(basis, ang, cache=None)
Dm = D.matrix
print(f"N = {basis.N}; ||D D^T - I||_max = {np.abs(Dm @ Dm.T - np.eye(basis.N)).max():.1e}")

# %% [markdown]
# ## Wigner d at special angles

# %%
d = wigner_d_table(3, np.pi / 2)
print("d^1(pi/2), rows m = -1..1:")
print(np.round(d[1, 2:5, 2:5], 6))

# %% [markdown]
# ## A rotated anisotropic scatterer keeps its spectrum

# %%
rng = np.random.default_rng(1)
a = rng.normal(size=(basis.N, basis.N)) + 1j * rng.normal(size=(basis.N, basis.N))
t = TMatrix(0.05 * (a + a.T), 1.0, basis)
tr = rotate_tmatrix(t, D)
e0 = np.sort_complex(np.linalg.eigvals(t.matrix))
e1 = np.sort_complex(np.linalg.eigvals(tr.matrix))
print(f"eigenvalue drift under rotation: {np.abs(e0 - e1).max():.1e}")
print(f"symmetry kept: ||T' - T'^T|| = {np.abs(tr.matrix - tr.matrix.T).max():.1e}")

# %% [markdown]
# ## Steering a radiation lobe
#
# Rotating the coefficients of a z-directed dipole by ``D^T`` tilts its null
# axis from +z to the direction given by (beta, alpha).

# %%
c = np.zeros(basis.N)
c[1] = 1.0                                     # TM dipole along z
tilted = D.apply_transpose(c)
axis = ang.matrix() @ np.array([0.0, 0.0, 1.0])
th, ph = np.arccos(axis[2]), np.arctan2(axis[1], axis[0])
for label, coef in (("original", c), ("rotated", tilted)):
    ff = far_field(SphericalExpansion("outgoing", coef, 1.0, basis), [th, 0.0], [ph, 0.0])
    print(f"{label:8s}: power toward rotated axis {ff.power[0]:.2e}, toward +z {ff.power[1]:.2e}")
