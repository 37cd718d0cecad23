"""Acceptance suite: twelve end-to-end criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py`` or directly as a script.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.constants import c as C0

sys.path.insert(0, str(Path(__file__).parent))

from cmsynth.basis import BasisSpec, SphericalExpansion, TMatrix, evaluate_field, plane_wave_coefficients  # noqa: E402
from cmsynth.cli import run_cli  # noqa: E402
from cmsynth.io import load_tmatrix, save_tmatrix  # noqa: E402
from cmsynth.mie import SphereSpec, layered_sphere_tmatrix, mie_coefficients  # noqa: E402
from cmsynth.modes import characteristic_modes, scattering_modes, scene_modes  # noqa: E402
from cmsynth.rotation import EulerAngles, RotationCache, rotation_matrix, wigner_d_table  # noqa: E402
from cmsynth.synthesis import (Scene, StructureInstance, assemble, neumann_partial_sums,  # noqa: E402
                               schur_total, solve_direct, synthesize_background, synthesize_total)
from cmsynth.translation import KernelCache, general_translation  # noqa: E402
from conftest import random_complex, random_unit  # noqa: E402

SEED = 20240611


def pec(a, pos=(0, 0, 0), role="key"):
    return StructureInstance(SphereSpec.pec(a), position=pos, role=role)


def unitarity_fro(t):
    s = np.eye(t.shape[0]) + 2 * t
    return np.linalg.norm(s.conj().T @ s - np.eye(t.shape[0]))


def mie_multiset(k, spec, lmax):
    t = mie_coefficients(k, spec, lmax)
    mult = 2 * np.arange(1, lmax + 1) + 1
    return np.concatenate([np.repeat(t[0], mult), np.repeat(t[1], mult)])


def leading(w, n):
    return np.sort_complex(w[np.argsort(-np.abs(w), kind="stable")][:n])


def c01_rotation_identities():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    b = BasisSpec(8)
    worst = 0.0
    for _ in range(100):
        ang = EulerAngles(rng.uniform(-np.pi, np.pi), rng.uniform(0, np.pi), rng.uniform(-np.pi, np.pi))
        d = rotation_matrix(b, ang, cache=None).matrix
        worst = max(worst, np.linalg.norm(d @ d.T - np.eye(b.N), np.inf))
    d0, dpi = wigner_d_table(8, 0.0), wigner_d_table(8, np.pi)
    e0 = epi = 0.0
    for l in range(9):
        m = np.arange(-l, l + 1)
        blk0 = d0[l, 8 - l:9 + l, 8 - l:9 + l]
        blkpi = dpi[l, 8 - l:9 + l, 8 - l:9 + l]
        want_pi = np.where(m[:, None] == -m[None, :], (-1.0) ** (l + m[None, :]), 0.0)
        e0 = max(e0, np.abs(blk0 - np.eye(2 * l + 1)).max())
        epi = max(epi, np.abs(blkpi - want_pi).max())
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and e0 <= 1e-13 and epi <= 1e-13 and dt < 5
    return ok, f"||DD^T-I||_inf={worst:.1e} d(0)={e0:.1e} d(pi)={epi:.1e} t={dt:.2f}s"


def c02_plane_wave_shift():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    k, lmax, pad = 1.0, 8, 10
    b, big = BasisSpec(lmax), BasisSpec(lmax + pad)
    errs = []
    for _ in range(20):
        u = random_unit(rng)
        pol = np.cross(u, random_unit(rng))
        pol /= np.linalg.norm(pol)
        kd = random_unit(rng) * 5.0 * rng.uniform() ** (1 / 3)
        a = plane_wave_coefficients(u, pol, k, b).coefficients
        a_big = plane_wave_coefficients(u, pol, k, big).coefficients
        r = general_translation(b, kd, "regular-regular", basis_in=big, cache=None).matrix
        want = a * np.exp(1j * u @ kd)
        errs.append(np.linalg.norm(r @ a_big - want) / np.linalg.norm(want))
    dt = time.perf_counter() - t0
    worst = max(errs)
    ok = worst <= 1e-8 and dt < 30
    return ok, f"max rel err={worst:.1e} (L={lmax}, pad +{pad}) t={dt:.2f}s"


def c03_field_matching():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    k, src, out = 1.0, BasisSpec(3), BasisSpec(40)
    worst = 0.0
    for _ in range(4):
        d = random_unit(rng) * rng.uniform(2.0, 3.0)
        c = random_complex(rng, src.N)
        op = general_translation(out, k * d, "outgoing-regular", basis_in=src, cache=KernelCache())
        pts = random_unit(rng, 50) * (0.5 * np.linalg.norm(d) * rng.uniform(size=(50, 1)) ** (1 / 3))
        want = evaluate_field(SphericalExpansion("outgoing", c, k, src), pts - d)
        got = evaluate_field(SphericalExpansion("regular", op @ c, k, out), pts)
        worst = max(worst, np.abs(got - want).max() / np.abs(want).max())
    dt = time.perf_counter() - t0
    return worst <= 1e-6 and dt < 60, f"200 points, max rel err={worst:.1e} t={dt:.2f}s"


def c04_mie_unitarity():
    pec_err = max(np.abs(np.abs(1 + 2 * mie_coefficients(ka, SphereSpec.pec(1.0), 20)) - 1).max()
                  for ka in (0.5, 1.0, 2.0))
    stack = SphereSpec(((1.0, 38.0), (0.8, 15.0), (0.64, "pec")))
    st_err = np.abs(np.abs(1 + 2 * mie_coefficients(2.0, stack, 20)) - 1).max()
    ok = pec_err <= 1e-12 and st_err <= 1e-10
    return ok, f"PEC max||1+2t|-1|={pec_err:.1e} layered={st_err:.1e}"


def c05_single_collapse():
    k = 1.0
    sc = Scene([pec(1.0)], k)
    t = synthesize_total(sc, cache=KernelCache())
    ref = layered_sphere_tmatrix(k, SphereSpec.pec(1.0), sc.global_basis)
    exact = np.array_equal(t.matrix, ref.matrix)
    ms = characteristic_modes(t)
    mie = mie_coefficients(k, SphereSpec.pec(1.0), t.basis.lmax)
    mult_ok = True
    for tau in (0, 1):
        for l in range(1, t.basis.lmax + 1):
            hits = np.abs(ms.eigenvalues - mie[tau, l - 1]) <= 1e-12
            mult_ok &= hits.sum() >= 2 * l + 1
    return exact and mult_ok, f"T_total==T exactly: {exact}; Mie multiplicities 2l+1 at 1e-12: {mult_ok}"


def c06_offset_spectrum():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    k = 1.0
    sc = Scene([pec(1.0, tuple(3.0 * random_unit(rng)))], k)
    n = sc.global_basis.N
    t = synthesize_total(sc, cache=KernelCache()).matrix
    lmax = sc.structures[0].tmatrix(k).lmax
    want = np.sort_complex(mie_multiset(k, SphereSpec.pec(1.0), lmax))
    got = leading(np.linalg.eigvals(t), len(want))
    err = np.abs(got - want).max()
    dt = time.perf_counter() - t0
    return err <= 1e-6 and n <= 1500 and dt < 60, f"N={n} max eig err={err:.1e} t={dt:.2f}s"


def c07_losslessness():
    errs, recip = [], []
    for pad in (0, 1, 2):
        sc = Scene([pec(1.0, (0, 0, -2.0)), pec(1.0, (0, 0, 2.0))], 1.0, padding=pad)
        t = synthesize_total(sc, cache=KernelCache()).matrix
        errs.append(unitarity_fro(t))
        recip.append(np.linalg.norm(t - t.T) / np.linalg.norm(t))
    mono = errs[0] > errs[1] > errs[2]
    ok = errs[-1] <= 1e-3 and mono and max(recip) <= 1e-6
    return ok, "||S^H S-I||_F=" + ", ".join(f"{e:.1e}" for e in errs) + f" reciprocity={max(recip):.1e}"


def c08_neumann():
    sc = Scene([pec(1.0, (0, 0, -4.0)), pec(1.0, (0, 0, 4.0))], 1.0)
    s = assemble(sc, cache=KernelCache())
    direct = solve_direct(s).matrix
    last = None
    for last in neumann_partial_sums(s, 20):
        pass
    res = np.linalg.norm(last - direct) / np.linalg.norm(direct)
    return res <= 1e-8, f"residual after 20 terms={res:.1e}"


def c09_schur():
    rng = np.random.default_rng(SEED)
    b = BasisSpec(3)
    items = []
    for i, pos in enumerate([(0, 0, 0), (2.5, 0.5, -0.3), (-1.0, 2.2, 1.4)]):
        t = 0.2 * random_complex(rng, b.N, b.N) / np.sqrt(b.N)
        items.append(StructureInstance(TMatrix(t, 1.0, b, {"enclosing_radius": 0.6}), pos,
                                       EulerAngles(*rng.uniform(-3, 3, 3)),
                                       role="key" if i == 0 else "background"))
    sc = Scene(items, 1.0)
    direct = solve_direct(assemble(sc, cache=KernelCache())).matrix
    schur = schur_total(sc, synthesize_background(sc, cache=KernelCache()), cache=KernelCache()).matrix
    dev = np.linalg.norm(schur - direct) / np.linalg.norm(direct)
    return dev <= 1e-10, f"relative deviation={dev:.1e}"


def c10_substructure():
    k = 1.0
    sc = Scene([pec(0.5, (0, 0, 2.0)), pec(2.0, (0, 0, -2.0), role="background")], k)
    ms = scene_modes(sc, k * C0 / (2 * np.pi), kernels=KernelCache())
    total, tb = ms.context["total"], ms.context["background"].tmatrix
    s, _ = scattering_modes(total, tb)
    circle = np.abs(np.abs(s) - 1).max()
    n = total.basis.N
    op = (np.eye(n) + 2 * total.matrix) @ (np.eye(n) + 2 * tb.matrix).conj().T
    res = np.linalg.norm(op @ ms.vectors - ms.vectors * (1 + 2 * ms.eigenvalues), axis=0).max()
    return circle <= 1e-3 and res <= 1e-10, f"max||s|-1|={circle:.1e} eigvec residual={res:.1e}"


def _best(fn, reps=5):
    out = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return min(out)


def c11_performance():
    b = BasisSpec(17)
    t0 = time.perf_counter()
    general_translation(b, [1.3, -2.1, 2.7], cache=None, rotations=RotationCache())
    single = time.perf_counter() - t0

    ring = [4.0 * np.array([np.cos(p), np.sin(p), 0.3]) for p in np.arange(8) * np.pi / 4]
    stats = {}

    def shared():
        cache = KernelCache()
        for v in ring:
            general_translation(b, v, cache=cache, rotations=RotationCache())
        stats.update(builds=cache.builds, kernels=len(cache), reused=cache.hits + cache.polar_hits)

    def rebuilt():
        for v in ring:
            general_translation(b, v, cache=None, rotations=RotationCache())

    fast, slow = _best(shared), _best(rebuilt)
    speedup = slow / fast
    reuse = stats == {"builds": 1, "kernels": 1, "reused": 7}
    ok = b.N == 646 and single <= 5 and reuse and speedup >= 3
    return ok, (f"N=646 single={single:.2f}s; ring kernels built={stats['builds']} reused={stats['reused']} "
                f"speedup={speedup:.1f}x")


def c12_cli_determinism(tmp):
    tmp = Path(tmp)
    rng = np.random.default_rng(SEED)
    b = BasisSpec(4)
    t = TMatrix(random_complex(rng, b.N, b.N), 1.7, b)
    exact = True
    for enc in ("text", "binary"):
        p = tmp / f"t-{enc}.tmat"
        save_tmatrix(t, p, encoding=enc)
        exact &= load_tmatrix(p).data.tobytes() == t.data.tobytes()
    cfg = tmp / "scene.yaml"
    cfg.write_text("sweep: {start_hz: 1.0e8, stop_hz: 2.0e8, points: 3}\nn_modes: 8\nstructures:\n"
                   "  - {role: key, position_m: [0, 0, 0.9], sphere: {layers: [{radius_m: 0.2, material: pec}]}}\n"
                   "  - {role: background, sphere: {layers: [{radius_m: 0.4, material: 15}, "
                   "{radius_m: 0.3, material: pec}]}}\n")
    runs = []
    for i in range(2):
        out = tmp / f"sweep{i}.csv"
        rc = run_cli(["sweep", str(cfg), "-o", str(out)])
        runs.append(out.read_bytes() if rc == 0 else None)
    same = runs[0] is not None and runs[0] == runs[1]
    return exact and same, f"round trip bit-exact: {exact}; sweep CSVs byte-identical: {same}"


CRITERIA = [
    (1, "rotation identities", c01_rotation_identities),
    (2, "plane-wave shift identity", c02_plane_wave_shift),
    (3, "outgoing-to-regular field matching", c03_field_matching),
    (4, "Mie unitarity", c04_mie_unitarity),
    (5, "single-structure collapse", c05_single_collapse),
    (6, "offset-sphere spectrum", c06_offset_spectrum),
    (7, "composite losslessness", c07_losslessness),
    (8, "Neumann-series consistency", c08_neumann),
    (9, "Schur path", c09_schur),
    (10, "substructure modes", c10_substructure),
    (11, "performance", c11_performance),
    (12, "CLI determinism and round trip", c12_cli_determinism),
]


def line(num, name, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} [{num:2d}] {name}: {detail}"


@pytest.mark.parametrize("num,name,fn", CRITERIA, ids=[f"c{n:02d}" for n, _, _ in CRITERIA])
def test_criterion(num, name, fn, tmp_path, capsys):
    ok, detail = fn(tmp_path) if fn is c12_cli_determinism else fn()
    with capsys.disabled():
        print("\n" + line(num, name, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    import tempfile

    failed = 0
    for num, name, fn in CRITERIA:
        with tempfile.TemporaryDirectory() as d:
            ok, detail = fn(d) if fn is c12_cli_determinism else fn()
        print(line(num, name, ok, detail), flush=True)
        failed += not ok
    sys.exit(1 if failed else 0)
