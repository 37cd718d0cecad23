# %% [markdown]
# # Layered spheres
#
# Spheres have diagonal T-matrices: one coefficient per degree and wave
# class, repeated over orders and parities.  Lossless spheres give
# ``|1 + 2t| = 1`` for every entry.

# %%
import numpy as np
from scipy.optimize import brentq
from scipy.special import spherical_yn

from cmsynth.basis import BasisSpec, truncation_order
from cmsynth.mie import SphereSpec, layered_sphere_tmatrix, mie_coefficients

pec = SphereSpec.pec(1.0)
for ka in (0.5, 1.0, 2.0):
    t = mie_coefficients(ka, pec, 4)
    print(f"PEC ka={ka}: TE l=1 {t[0, 0]:.4f}  TM l=1 {t[1, 0]:.4f}  "
          f"max||1+2t|-1| = {np.abs(np.abs(1 + 2 * t) - 1).max():.1e}")

# %% [markdown]
# ## A dielectric-coated conductor
#
# Radii are listed outermost first with relative permittivities; the core
# may be a perfect conductor.

# %%
stack = SphereSpec(((1.0, 38.0), (0.8, 15.0), (0.64, "pec")))
t = mie_coefficients(2.0, stack, 8)
print("layered stack at kA = 2, |t| per degree:")
print("  TE", " ".join(f"{v:.1e}" for v in np.abs(t[0])))
print("  TM", " ".join(f"{v:.1e}" for v in np.abs(t[1])))
print(f"  max||1+2t|-1| = {np.abs(np.abs(1 + 2 * t) - 1).max():.1e}")

# %% [markdown]
# ## First magnetic-dipole resonance of a conducting sphere
#
# ``|t| = 1`` for the TE l=1 entry where the spherical Neumann function of
# order one vanishes.

# %%
ka = np.linspace(2.5, 3.1, 601)
mag = np.array([abs(mie_coefficients(x, pec, 1)[0, 0]) for x in ka])
x0 = brentq(lambda x: spherical_yn(1, x), 2.5, 3.1)
print(f"peak |t| = {mag.max():.6f} at ka = {ka[mag.argmax()]:.4f}; y_1 root at {x0:.4f}")

# %% [markdown]
# ## Full matrix in a basis

# %%
k = 1.3
b = BasisSpec(truncation_order(k, 1.0))
T = layered_sphere_tmatrix(k, stack, b)
print(f"L = {b.lmax}, N = {b.N}, stored diagonally: {T.is_diagonal}")
