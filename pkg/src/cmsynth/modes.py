"""Characteristic modes of synthesized T-matrices.

Modes solve ``(T + Tb^H + 2 T Tb^H) f = t f``, equivalently
``S Sb^H f = s f`` with ``S = 1 + 2T`` and ``s = 1 + 2t``.  With no
background (``Tb = 0``) this is the plain eigenproblem of T.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.constants import c as C0

from cmsynth.basis import SphericalExpansion, far_field
from cmsynth.rotation import default_rotation_cache
from cmsynth.synthesis import assemble, schur_solve, synthesize_background
from cmsynth.translation import KernelCache

RESIDUAL_TOL = 1e-9
TRACK_THRESHOLD = 0.7
DEGENERACY_TOL = 1e-8
BAND_LEVEL = 1 / math.sqrt(2)


class EigenSolverError(np.linalg.LinAlgError):
    pass


@dataclass(eq=False)
class CharacteristicModeSet:
    """Eigenpairs at one frequency, sorted by descending ``|t|``.

    ``vectors[:, n]`` is the unit-norm outgoing expansion of mode n in
    ``basis``; ``track_ids[n]`` links it across a sweep.
    """

    k: float
    frequency: float | None
    eigenvalues: np.ndarray
    vectors: np.ndarray
    basis: object
    track_ids: np.ndarray
    context: dict = field(default_factory=dict, repr=False)

    @property
    def s(self):
        return 1 + 2 * self.eigenvalues

    def __len__(self):
        return len(self.eigenvalues)

    def expansion(self, n):
        return SphericalExpansion("outgoing", self.vectors[:, n], self.k, self.basis)

    def truncated(self, n_modes):
        """First ``n_modes`` modes; a degenerate multiplet cut by the limit is kept whole."""
        n = len(self) if n_modes is None else min(n_modes, len(self))
        w = self.eigenvalues
        tol = DEGENERACY_TOL * max(np.abs(w).max(initial=0.0), np.finfo(float).tiny)
        while 0 < n < len(self) and abs(w[n] - w[n - 1]) <= tol:
            n += 1
        return CharacteristicModeSet(self.k, self.frequency, self.eigenvalues[:n], self.vectors[:, :n],
                                     self.basis, self.track_ids[:n], self.context)


def modal_operator(T, T_b=None):
    """``T + Tb^H + 2 T Tb^H`` as a dense matrix."""
    t = T.matrix
    if T_b is None:
        return np.array(t, dtype=complex)
    T.basis.check_compatible(T_b.basis)
    if T.basis.lmax != T_b.basis.lmax:
        raise ValueError(f"T (L={T.basis.lmax}) and T_b (L={T_b.basis.lmax}) use different bases")
    tb_h = T_b.matrix.conj().T
    return t + tb_h + 2 * t @ tb_h


def _fix_phase(vectors):
    idx = np.argmax(np.abs(vectors), axis=0)
    lead = vectors[idx, np.arange(vectors.shape[1])]
    return vectors * (np.abs(lead) / lead)


def _norm2_lower(a, floor, iters=12):
    """Power-iteration estimate of the spectral norm; never exceeds the true value."""
    if not a.size:
        return 0.0
    x = np.ones(a.shape[1], dtype=complex) / np.sqrt(a.shape[1])
    est = floor
    for _ in range(iters):
        y = a @ x
        est = max(est, np.linalg.norm(y))
        z = a.conj().T @ y
        nz = np.linalg.norm(z)
        if nz == 0:
            break
        x = z / nz
    return float(est)


def _decompose(a):
    w, v = sla.eig(a, check_finite=True)
    order = np.argsort(-np.abs(w), kind="stable")
    w, v = w[order], v[:, order]
    v = v / np.linalg.norm(v, axis=0)
    v = _fix_phase(v)
    anorm = _norm2_lower(a, np.abs(w).max(initial=0.0))
    res = np.linalg.norm(a @ v - v * w, axis=0)
    worst = float(res.max()) if res.size else 0.0
    if worst > RESIDUAL_TOL * max(anorm, np.finfo(float).tiny):
        cond = np.linalg.cond(v)
        raise EigenSolverError(
            f"eigenpair residual {worst:.3e} exceeds {RESIDUAL_TOL:g}*||A|| = {RESIDUAL_TOL * anorm:.3e}; "
            f"eigenvector condition number {cond:.3e}"
        )
    return w, v


def characteristic_modes(T, T_b=None, frequency=None):
    """Characteristic modes of ``T`` against the background ``T_b``.

    Args:
        T (TMatrix): total T-matrix.
        T_b (TMatrix, optional): background T-matrix in the same basis;
            None or a zero matrix means free space.
        frequency (float, optional): recorded with the result.

    Returns:
        CharacteristicModeSet with eigenvectors of unit coefficient norm whose
        largest entry is real and positive.
    """
    w, v = _decompose(modal_operator(T, T_b))
    return CharacteristicModeSet(T.k, frequency, w, v, T.basis, np.arange(len(w)))


def scattering_modes(T, T_b=None):
    """Eigenpairs of ``S Sb^H`` (sorted by descending ``|s - 1|``)."""
    n = T.basis.size
    s = np.eye(n) + 2 * T.matrix
    sb = np.eye(n) if T_b is None else np.eye(n) + 2 * T_b.matrix
    w, v = sla.eig(s @ sb.conj().T)
    order = np.argsort(-np.abs(w - 1), kind="stable")
    return w[order], _fix_phase(v[:, order] / np.linalg.norm(v[:, order], axis=0))


def modal_significance(modes):
    """``|t_n|`` for each mode."""
    return np.abs(modes.eigenvalues)


def wavenumber(frequency):
    return 2 * np.pi * frequency / C0


def scene_modes(scene, frequency=None, n_modes=None, kernels=None, rotations=default_rotation_cache):
    """Synthesize ``scene`` and decompose it.

    The background is solved first and the total is completed through the
    Schur route, so the block system is factorized once.  The solved system is
    kept in ``context`` for key-only patterns.
    """
    kernels = KernelCache() if kernels is None else kernels
    system = assemble(scene, cache=kernels, rotations=rotations)
    art = synthesize_background(scene, system=system)
    total = schur_solve(system, art)
    t_b = art.tmatrix if art.lu is not None else None
    modes = characteristic_modes(total, t_b, frequency).truncated(n_modes)
    modes.context = {"system": system, "background": art, "total": total}
    return modes


def _groups(w):
    tol = DEGENERACY_TOL * max(np.abs(w).max(initial=0.0), np.finfo(float).tiny)
    groups, used = [], np.zeros(len(w), bool)
    for i in range(len(w)):
        if used[i]:
            continue
        members = [j for j in range(i, len(w)) if not used[j] and abs(w[j] - w[i]) <= tol]
        used[members] = True
        groups.append(members)
    return groups


def track(prev, cur, next_id, threshold=TRACK_THRESHOLD):
    """Assign ``cur.track_ids`` from ``prev`` and return the next free id.

    Degenerate multiplets are matched as subspaces (root-mean-square principal
    cosine); remaining modes are matched greedily on ``|f_n^H f_m|``.
    Matches below ``threshold`` start new tracks.
    """
    ids = np.full(len(cur), -1)
    # truncation may grow with frequency; the index ordering nests, so pad with zeros
    n = min(prev.vectors.shape[0], cur.vectors.shape[0])
    overlap = np.abs(prev.vectors[:n].conj().T @ cur.vectors[:n])
    gp, gc = _groups(prev.eigenvalues), _groups(cur.eigenvalues)
    free_p = np.ones(len(prev), bool)
    cand = []
    for a, g in enumerate(gp):
        for b, h in enumerate(gc):
            if len(g) == len(h) and len(g) > 1:
                score = math.sqrt(np.sum(overlap[np.ix_(g, h)] ** 2) / len(g))
                if score >= threshold:
                    cand.append((-score, a, b))
    taken_p, taken_c = set(), set()
    for _, a, b in sorted(cand):
        if a in taken_p or b in taken_c:
            continue
        taken_p.add(a)
        taken_c.add(b)
        for i, j in zip(gp[a], gc[b]):
            ids[j] = prev.track_ids[i]
            free_p[i] = False
    pairs = sorted((-overlap[i, j], i, j) for i in range(len(prev)) for j in range(len(cur))
                   if free_p[i] and ids[j] < 0 and overlap[i, j] >= threshold)
    for _, i, j in pairs:
        if free_p[i] and ids[j] < 0:
            ids[j] = prev.track_ids[i]
            free_p[i] = False
    for j in range(len(cur)):
        if ids[j] < 0:
            ids[j] = next_id
            next_id += 1
    cur.track_ids = ids
    return next_id


@dataclass
class SweepResult:
    frequencies: np.ndarray
    sets: list
    failures: list
    threshold: float = TRACK_THRESHOLD

    def rows(self):
        """``(frequency, track_id, t)`` sorted by frequency then track id."""
        out = []
        for ms in self.sets:
            for tid, t in sorted(zip(ms.track_ids.tolist(), ms.eigenvalues.tolist())):
                out.append((ms.frequency, tid, t))
        return out


def sweep(scene, f_start, f_stop, n_points, n_modes=None, threads=1, rotations=default_rotation_cache,
          kernels=None, keep_context=False):
    """Characteristic modes over a uniform frequency grid with tracking.

    Frequencies are solved independently (in parallel when ``threads > 1``)
    and tracked in order.  A failing frequency is recorded in
    ``failures`` and skipped.
    """
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    if not 0 < f_start <= f_stop:
        raise ValueError("need 0 < f_start <= f_stop")
    freqs = np.linspace(f_start, f_stop, n_points) if n_points > 1 else np.array([float(f_start)])

    def one(f):
        try:
            ms = scene_modes(scene.at_wavenumber(wavenumber(f)), f, n_modes,
                             kernels=kernels, rotations=rotations)
            if not keep_context:
                ms.context = {}
            return ms, None
        except Exception as exc:  # reported per frequency, the sweep goes on
            return None, (float(f), f"{type(exc).__name__}: {exc}")

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, freqs))
    else:
        results = [one(f) for f in freqs]
    sets = [r for r, _ in results if r is not None]
    failures = [e for _, e in results if e is not None]
    next_id = len(sets[0]) if sets else 0
    for prev, cur in zip(sets, sets[1:]):
        next_id = track(prev, cur, next_id)
    return SweepResult(freqs, sets, failures)


@dataclass
class TrackReport:
    track_id: int
    resonance: float
    peak: float
    band: tuple | None
    open_low: bool = False
    open_high: bool = False
    note: str = ""


def _crossing(f0, y0, f1, y1, level):
    return f0 + (level - y0) * (f1 - f0) / (y1 - y0)


def band_edges(freqs, mags, level=BAND_LEVEL):
    """Resonance and 3 dB band of one sampled ``|t|`` curve.

    Returns:
        TrackReport with ``track_id`` = -1.
    """
    f = np.asarray(freqs, dtype=float)
    y = np.asarray(mags, dtype=float)
    i = int(np.argmax(y))
    rep = TrackReport(-1, float(f[i]), float(y[i]), None)
    if y[i] < level:
        rep.note = f"peak {y[i]:.4f} never reaches {level:.3f}: no band"
        return rep
    lo = i
    while lo > 0 and y[lo - 1] >= level:
        lo -= 1
    hi = i
    while hi < len(y) - 1 and y[hi + 1] >= level:
        hi += 1
    if lo == 0:
        rep.open_low, f_lo = True, float(f[0])
    else:
        f_lo = float(_crossing(f[lo - 1], y[lo - 1], f[lo], y[lo], level))
    if hi == len(y) - 1:
        rep.open_high, f_hi = True, float(f[-1])
    else:
        f_hi = float(_crossing(f[hi], y[hi], f[hi + 1], y[hi + 1], level))
    rep.band = (f_lo, f_hi)
    if rep.open_low or rep.open_high:
        rep.note = "band extends past the sweep"
    return rep


def resonance_report(result):
    """Per-track resonance frequency and 3 dB band of ``|t|``."""
    if not result.sets:
        raise ValueError("empty sweep")
    curves = {}
    for ms in result.sets:
        for tid, t in zip(ms.track_ids.tolist(), ms.eigenvalues):
            curves.setdefault(tid, []).append((ms.frequency, abs(t)))
    out = []
    for tid in sorted(curves):
        pts = curves[tid]
        rep = band_edges([p[0] for p in pts], [p[1] for p in pts])
        rep.track_id = tid
        out.append(rep)
    return out


def characteristic_farfield(modes, index, theta, phi, exclude_background=False):
    """Far-field pattern of mode ``index``.

    With ``exclude_background`` only the key structures radiate: the mode's
    regular drive ``(1 + 2 Tb^H) f_n`` excites the stored block system and the
    key blocks of its solution are relocated to the origin and summed.
    """
    if not 0 <= index < len(modes):
        raise IndexError(f"mode index {index} out of range for {len(modes)} modes")
    if not exclude_background:
        return far_field(modes.expansion(index), theta, phi)
    ctx = modes.context
    if not ctx or "system" not in ctx:
        raise ValueError("background exclusion needs modes computed from a scene")
    system, art = ctx["system"], ctx["background"]
    scene = system.scene
    if not scene.keys() or not scene.background():
        raise ValueError("background exclusion needs a scene with both key and background structures")
    f = modes.vectors[:, index]
    drive = f + 2 * art.tmatrix.matrix.conj().T @ f
    x = np.linalg.solve(system.interaction(), system.excitation() @ drive)
    keys = system.positions_of(scene.keys())
    coef = system.relocation[:, keys] @ x[keys]
    return far_field(SphericalExpansion("outgoing", coef, modes.k, modes.basis), theta, phi)

