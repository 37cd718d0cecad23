# %% [markdown]
# # Translating expansions
#
# A general translation is built as rotate, translate along z, rotate back.
# Only the axial kernel depends on the distance, so displacements of equal
# length share it through a kernel cache.

# %%
import time

import numpy as np

from cmsynth.basis import BasisSpec, SphericalExpansion, evaluate_field, plane_wave_coefficients
from cmsynth.rotation import RotationCache
from cmsynth.translation import KernelCache, general_translation

k = 1.0
rng = np.random.default_rng(2)

# %% [markdown]
# ## Outgoing waves seen from another origin
#
# An outgoing field radiated from ``d`` is re-expanded in regular waves about
# the origin; the match holds inside the ball of radius ``|d|``.

# %%
src, out = BasisSpec(3), BasisSpec(36)
d = np.array([1.0, -1.5, 1.8])
c = rng.normal(size=src.N) + 1j * rng.normal(size=src.N)
Y = general_translation(out, k * d, "outgoing-regular", basis_in=src)
pts = rng.normal(size=(100, 3))
pts *= 0.5 * np.linalg.norm(d) * rng.uniform(size=(100, 1)) / np.linalg.norm(pts, axis=1, keepdims=True)
want = evaluate_field(SphericalExpansion("outgoing", c, k, src), pts - d)
got = evaluate_field(SphericalExpansion("regular", Y @ c, k, out), pts)
print(f"outgoing -> regular field match: {np.abs(got - want).max() / np.abs(want).max():.1e}")

# %% [markdown]
# ## Shifting a plane wave
#
# Moving the origin multiplies a plane wave by a phase.  The input expansion
# must carry extra degrees; the required margin grows with ``|kd|``.

# %%
b = BasisSpec(6)
u = np.array([0.0, 0.0, 1.0])
pol = np.array([1.0, 0.0, 0.0])
kd = np.array([1.5, 2.0, 3.0])
a = plane_wave_coefficients(u, pol, k, b).coefficients
for pad in (5, 10, 15, 20):
    big = BasisSpec(b.lmax + pad)
    R = general_translation(b, kd, "regular-regular", basis_in=big)
    err = np.linalg.norm(R @ plane_wave_coefficients(u, pol, k, big).coefficients - a * np.exp(1j * u @ kd))
    print(f"|kd| = {np.linalg.norm(kd):.2f}, padding +{pad:2d}: relative error {err / np.linalg.norm(a):.1e}")

# %% [markdown]
# ## Kernel reuse on a ring

# %%
b = BasisSpec(17)
ring = [4.0 * np.array([np.cos(p), np.sin(p), 0.3]) for p in np.arange(8) * np.pi / 4]
cache = KernelCache()
t0 = time.perf_counter()
for v in ring:
    general_translation(b, v, cache=cache, rotations=RotationCache())
shared = time.perf_counter() - t0
t0 = time.perf_counter()
for v in ring:
    general_translation(b, v, cache=None, rotations=RotationCache())
fresh = time.perf_counter() - t0
print(f"N = {b.N}: 8 relocations with cache {shared:.3f}s, without {fresh:.3f}s")
print("cache statistics:", cache.stats())
