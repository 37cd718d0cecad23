# %% [markdown]
# # Characteristic modes of a key structure in a background
#
# Modes are eigenvectors of ``T + Tb^H + 2 T Tb^H``.  Their eigenvalues
# ``t_n`` sit on the circle ``|t + 1/2| = 1/2`` for lossless scenes; the
# modal significance ``|t_n|`` reaches one at resonance.

# %%
import numpy as np
from scipy.constants import c as C0

from cmsynth.basis import sphere_grid
from cmsynth.mie import SphereSpec
from cmsynth.modes import (characteristic_farfield, modal_significance, resonance_report, scattering_modes,
                           scene_modes, sweep)
from cmsynth.synthesis import Scene, StructureInstance
from cmsynth.translation import KernelCache


def hz(k):
    return k * C0 / (2 * np.pi)


# %% [markdown]
# ## A small sphere beside a large one

# %%
k = 1.0
sc = Scene([StructureInstance(SphereSpec.pec(0.5), (0, 0, 2.0)),
            StructureInstance(SphereSpec.pec(2.0), (0, 0, -2.0), role="background")], k)
ms = scene_modes(sc, hz(k), n_modes=8, kernels=KernelCache())
for n, t in enumerate(ms.eigenvalues):
    print(f"mode {n}: t = {t:.4f}  |t| = {abs(t):.4f}  |t + 1/2| = {abs(t + 0.5):.6f}")
s, _ = scattering_modes(ms.context["total"], ms.context["background"].tmatrix)
print(f"S Sb^H eigenvalues off the unit circle by at most {np.abs(np.abs(s) - 1).max():.1e}")

# %% [markdown]
# Patterns can include the background response or show only the key
# structure's contribution.

# %%
theta, phi, w = sphere_grid(12, 24)
full = characteristic_farfield(ms, 0, theta, phi)
key = characteristic_farfield(ms, 0, theta, phi, exclude_background=True)
print(f"mode 0 radiated power: with background {np.sum(w * full.power):.4f}, key only {np.sum(w * key.power):.4f}")

# %% [markdown]
# ## Tracking modes over frequency
#
# A single sphere swept through its first resonances: modes keep their
# track ids from one frequency to the next and each track reports its
# resonance and half-power band.

# %%
a = 0.1
single = Scene([StructureInstance(SphereSpec.pec(a))], 1.0)
res = sweep(single, hz(1.0 / a), hz(3.2 / a), 45, n_modes=16)
print(f"{len(res.frequencies)} frequencies, failures: {res.failures}")
for rep in resonance_report(res)[:6]:
    band = "none" if rep.band is None else f"{rep.band[0] / 1e6:.1f}-{rep.band[1] / 1e6:.1f} MHz"
    print(f"track {rep.track_id:2d}: peak |t| {rep.peak:.4f} at ka = {2 * np.pi * rep.resonance / C0 * a:.3f}, "
          f"band {band} {rep.note}")
print("significance at the last frequency:", np.round(modal_significance(res.sets[-1])[:6], 3))
