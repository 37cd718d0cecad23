"""Multi-structure T-matrix synthesis.

Each structure p has its own transition matrix ``T_p`` about its own centre
``r_p``.  With ``f^p = T_p a^p`` and

    a^p = R_p.T a + sum_{q != p} Y_pq f^q,

where ``Y_pq`` re-expands outgoing waves of q about the centre of p and
``R_p`` relocates coefficients about ``r_p`` to the global origin, the system
transition matrix is ``R (1 - T Y)^-1 T R.T`` with block matrices
``T = diag(T_p)``, ``Y = [Y_pq]`` and ``R = [R_1 ... R_M]``.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from cmsynth.basis import BasisSpec, TMatrix, truncation_order
from cmsynth.mie import SphereSpec, layered_sphere_tmatrix
from cmsynth.rotation import EulerAngles, default_rotation_cache, rotate_tmatrix, rotation_matrix
from cmsynth.translation import default_kernel_cache, general_translation

ROLES = ("key", "background")


class SingularSystemError(np.linalg.LinAlgError):
    """The interaction matrix ``1 - T Y`` is numerically singular."""

    def __init__(self, message, rcond):
        super().__init__(message)
        self.rcond = rcond


@dataclass(frozen=True, eq=False)
class StructureInstance:
    """One structure placed in a scene.

    Args:
        source: :class:`SphereSpec`, :class:`TMatrix` or a path to a T-matrix file.
        position: centre in meters.
        orientation: :class:`EulerAngles` turning the structure's own frame.
        enclosing_radius: radius of the sphere enclosing the structure about its
            centre; taken from the sphere or file metadata when omitted.
        role: ``"key"`` or ``"background"``.
        name: label used in diagnostics.
    """

    source: object
    position: tuple = (0.0, 0.0, 0.0)
    orientation: EulerAngles = EulerAngles(0.0, 0.0, 0.0)
    enclosing_radius: float | None = None
    role: str = "key"
    name: str = ""

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (3,) or not np.all(np.isfinite(pos)):
            raise ValueError(f"{self.label}: position must be a finite 3-vector")
        object.__setattr__(self, "position", tuple(float(v) for v in pos))
        if not isinstance(self.orientation, EulerAngles):
            object.__setattr__(self, "orientation", EulerAngles(*self.orientation))
        if self.role not in ROLES:
            raise ValueError(f"{self.label}: role must be one of {ROLES}, got {self.role!r}")
        radius = self.enclosing_radius
        if isinstance(self.source, SphereSpec):
            if radius is not None and not math.isclose(radius, self.source.radius, rel_tol=1e-12):
                raise ValueError(f"{self.label}: a sphere's enclosing radius is its outer radius")
            radius = self.source.radius
        elif radius is None and isinstance(self.source, TMatrix):
            radius = self.source.meta.get("enclosing_radius")
        if radius is None and isinstance(self.source, str):
            radius = self._load().meta.get("enclosing_radius")
        if radius is None or not float(radius) > 0:
            raise ValueError(f"{self.label}: enclosing_radius must be positive")
        object.__setattr__(self, "enclosing_radius", float(radius))

    @property
    def label(self):
        return self.name or "structure"

    def _load(self):
        from cmsynth.io import load_tmatrix

        return load_tmatrix(self.source)

    def tmatrix(self, k, structure_padding=0):
        """T-matrix of the structure in its own frame at wavenumber ``k``."""
        if isinstance(self.source, SphereSpec):
            basis = BasisSpec(truncation_order(k, self.source.radius) + structure_padding)
            return layered_sphere_tmatrix(k, self.source, basis)
        tm = self._load() if isinstance(self.source, str) else self.source
        if not math.isclose(tm.k, k, rel_tol=1e-9):
            raise ValueError(f"{self.label}: T-matrix is given at k={tm.k!r}, scene needs k={k!r}")
        return tm

    def describe(self):
        if isinstance(self.source, SphereSpec):
            src = "sphere:" + self.source.describe()
        elif isinstance(self.source, str):
            with open(self.source, "rb") as fh:
                src = "file:" + hashlib.sha256(fh.read()).hexdigest()
        else:
            src = "tmatrix:" + hashlib.sha256(np.ascontiguousarray(self.source.data).tobytes()).hexdigest()
        return {
            "source": src,
            "position": [repr(v) for v in self.position],
            "orientation": [repr(v) for v in self.orientation.as_tuple()],
            "enclosing_radius": repr(self.enclosing_radius),
            "role": self.role,
        }


def default_padding(k, max_offset):
    """Degrees added on top of the circumscribing-sphere truncation."""
    if max_offset == 0:
        return 0
    return max(4, math.ceil(0.5 * k * max_offset))


@dataclass(frozen=True, eq=False)
class Scene:
    """Structures sharing one background medium at wavenumber ``k``.

    ``padding`` overrides the extra global degrees (see :func:`default_padding`);
    ``structure_padding`` raises every sphere's own truncation.
    """

    structures: tuple
    k: float
    padding: int | None = None
    structure_padding: int = 0

    def __post_init__(self):
        structures = tuple(self.structures)
        object.__setattr__(self, "structures", structures)
        if not structures:
            raise ValueError("a scene needs at least one structure")
        if not self.k > 0:
            raise ValueError("wavenumber must be positive")
        if self.padding is not None and self.padding < 0:
            raise ValueError("padding must be non-negative")
        for i, p in enumerate(structures):
            for q in structures[i + 1:]:
                d = np.linalg.norm(np.subtract(p.position, q.position))
                if d <= p.enclosing_radius + q.enclosing_radius:
                    raise ValueError(
                        f"enclosing spheres of {p.label} and {q.label} intersect "
                        f"(distance {d:.6g} m, radii {p.enclosing_radius:.6g} + {q.enclosing_radius:.6g} m)"
                    )

    @property
    def positions(self):
        return np.array([s.position for s in self.structures])

    @property
    def pad(self):
        if self.padding is not None:
            return int(self.padding)
        return default_padding(self.k, float(np.max(np.linalg.norm(self.positions, axis=1))))

    @property
    def global_basis(self):
        r = max(np.linalg.norm(s.position) + s.enclosing_radius for s in self.structures)
        return BasisSpec(truncation_order(self.k, r) + self.pad)

    def keys(self):
        return [i for i, s in enumerate(self.structures) if s.role == "key"]

    def background(self):
        return [i for i, s in enumerate(self.structures) if s.role == "background"]

    def subscene(self, indices):
        return Scene(tuple(self.structures[i] for i in indices), self.k, self.padding, self.structure_padding)

    def at_wavenumber(self, k):
        return Scene(self.structures, k, self.padding, self.structure_padding)

    def padding_policy(self):
        if self.padding is not None:
            return f"fixed:{self.padding}"
        return "auto:max(4,ceil(0.5*k*max|r|))"

    def hash(self, indices=None, lmax=None):
        """Digest of positions, orientations, sources, k and padding policy."""
        idx = range(len(self.structures)) if indices is None else indices
        doc = {
            "k": repr(float(self.k)),
            "padding": self.padding_policy(),
            "structure_padding": self.structure_padding,
            "lmax": self.global_basis.lmax if lmax is None else lmax,
            "structures": [self.structures[i].describe() for i in idx],
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


@dataclass(eq=False)
class BlockSystem:
    """Block matrices of an assembled scene.

    ``tmats[p]`` is the oriented T-matrix of structure p, ``coupling`` the full
    ``Y`` with zero diagonal blocks, ``relocation`` the row ``[R_1 ... R_M]``.
    ``offsets[p]:offsets[p+1]`` slices structure p out of the stacked vectors.
    """

    scene: Scene
    global_basis: BasisSpec
    bases: list
    tmats: list
    coupling: np.ndarray
    relocation: np.ndarray
    offsets: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def size(self):
        return int(self.offsets[-1])

    def block(self, p):
        return slice(int(self.offsets[p]), int(self.offsets[p + 1]))

    def positions_of(self, indices):
        if not indices:
            return np.zeros(0, dtype=int)
        return np.concatenate([np.arange(self.offsets[p], self.offsets[p + 1]) for p in indices])

    def block_t(self):
        out = np.zeros((self.size, self.size), dtype=complex)
        for p, t in enumerate(self.tmats):
            out[self.block(p), self.block(p)] = t
        return out

    def interaction(self):
        """``1 - T Y``."""
        ty = np.empty((self.size, self.size), dtype=complex)
        for p, t in enumerate(self.tmats):
            ty[self.block(p)] = t @ self.coupling[self.block(p)]
        return np.eye(self.size) - ty

    def excitation(self):
        """``T R.T``: local responses to a global regular expansion."""
        out = np.empty((self.size, self.global_basis.size), dtype=complex)
        for p, t in enumerate(self.tmats):
            out[self.block(p)] = t @ self.relocation[:, self.block(p)].T
        return out


def _relocation(global_basis, basis, position, k, cache, rotations):
    if not np.any(position):
        return np.eye(global_basis.size, basis.size)
    return general_translation(global_basis, k * np.asarray(position), "regular-regular",
                               basis_in=basis, cache=cache, rotations=rotations).matrix


def assemble(scene, cache=default_kernel_cache, rotations=default_rotation_cache, threads=1):
    """Build the block matrices of ``scene``.

    Args:
        scene (Scene): structures and wavenumber.
        cache: axial kernel cache, None to rebuild every kernel.
        rotations: rotation operator cache.
        threads (int): worker threads for the independent coupling blocks.

    Returns:
        BlockSystem
    """
    k = scene.k
    gb = scene.global_basis
    tmats, bases = [], []
    for s in scene.structures:
        tm = s.tmatrix(k, scene.structure_padding)
        gb.check_compatible(tm.basis)
        op = rotation_matrix(tm.basis, s.orientation, rotations)
        tmats.append(rotate_tmatrix(tm, op).matrix)
        bases.append(tm.basis)
    offsets = np.concatenate([[0], np.cumsum([b.size for b in bases])])
    n = int(offsets[-1])
    pos = scene.positions
    m = len(bases)

    def pair(pq):
        p, q = pq
        return general_translation(bases[p], k * (pos[q] - pos[p]), "outgoing-regular",
                                   basis_in=bases[q], cache=cache, rotations=rotations).matrix

    pairs = [(p, q) for p in range(m) for q in range(p + 1, m)]
    if threads and threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            blocks = list(ex.map(pair, pairs))
    else:
        blocks = [pair(pq) for pq in pairs]

    coupling = np.zeros((n, n), dtype=complex)
    for (p, q), blk in zip(pairs, blocks):
        sp, sq = slice(offsets[p], offsets[p + 1]), slice(offsets[q], offsets[q + 1])
        coupling[sp, sq] = blk
        # reciprocity of the addition theorem: Y(-kd) = Y(kd).T
        coupling[sq, sp] = blk.T
    relocation = np.zeros((gb.size, n))
    for p in range(m):
        relocation[:, offsets[p]:offsets[p + 1]] = _relocation(gb, bases[p], pos[p], k, cache, rotations)
    return BlockSystem(scene, gb, bases, tmats, coupling, relocation, offsets,
                       info={"padding": scene.padding_policy(), "global_lmax": gb.lmax})


def _factor(a):
    lu, piv, info = lapack.zgetrf(a)
    anorm = np.linalg.norm(a, 1)
    rcond = 0.0 if info > 0 else float(lapack.zgecon(lu, anorm, norm="1")[0])
    if info > 0 or rcond < 10 * np.finfo(float).eps:
        raise SingularSystemError(
            f"interaction matrix is singular (reciprocal condition {rcond:.3e}); "
            "an inter-structure resonance at this frequency or an insufficient truncation",
            rcond,
        )
    return (lu, piv), rcond


def _lu_solve(fac, b):
    return sla.lu_solve(fac, b, check_finite=False)


def _meta(system, kind, **extra):
    meta = dict(system.info)
    meta.update({"source": kind, "scene_hash": system.scene.hash()})
    meta.update(extra)
    return meta


def solve_direct(system):
    """``R (1 - T Y)^-1 T R.T`` by one dense LU factorization."""
    fac, rcond = _factor(system.interaction())
    x = _lu_solve(fac, system.excitation())
    t = system.relocation @ x
    return TMatrix(t, system.scene.k, system.global_basis, _meta(system, "synthesized", rcond=rcond))


def synthesize_total(scene, **kwargs):
    """System T-matrix of the whole scene in its global basis."""
    if len(scene.structures) == 1 and not np.any(scene.structures[0].position):
        s = scene.structures[0]
        tm = s.tmatrix(scene.k, scene.structure_padding)
        if tm.basis.lmax == scene.global_basis.lmax:
            op = rotation_matrix(tm.basis, s.orientation, kwargs.get("rotations", default_rotation_cache))
            out = rotate_tmatrix(tm, op)
            return TMatrix(out.matrix.copy(), scene.k, tm.basis,
                           {"source": "synthesized", "scene_hash": scene.hash(),
                            "padding": scene.padding_policy(), "global_lmax": tm.basis.lmax})
    return solve_direct(assemble(scene, **kwargs))


def neumann_partial_sums(system, terms):
    """Order-of-scattering approximations ``R sum_{j<=K} (T Y)^j T R.T``.

    Yields the partial sum for K = 0, 1, ..., terms - 1.
    """
    b = system.excitation()
    term = b
    acc = b.copy()
    yield system.relocation @ acc
    for _ in range(1, terms):
        nxt = np.empty_like(term)
        yt = system.coupling @ term
        for p, t in enumerate(system.tmats):
            nxt[system.block(p)] = t @ yt[system.block(p)]
        term = nxt
        acc += term
        yield system.relocation @ acc


@dataclass(eq=False)
class BackgroundArtifacts:
    """Stored background solve, reusable while the background is unchanged.

    ``tmatrix`` is the background T-matrix in the full scene's global basis;
    ``lu`` factors the background-only interaction block ``A22``; ``solved``
    holds ``A22^-1 B2``.
    """

    scene_hash: str
    tmatrix: TMatrix
    indices: tuple
    lu: tuple | None
    solved: np.ndarray | None
    note: str = ""


def _background_hash(scene):
    return scene.hash(scene.background(), lmax=scene.global_basis.lmax)


def synthesize_background(scene, system=None, **kwargs):
    """Background T-matrix and the factorization reused by :func:`schur_total`.

    The background is solved on its own but expressed in the global basis of
    the full scene so it pairs with the total T-matrix.
    """
    gb = scene.global_basis
    idx = tuple(scene.background())
    if not idx:
        t = TMatrix(np.zeros((gb.size, gb.size), dtype=complex), scene.k, gb,
                    {"source": "background", "note": "no background structures: free space, T_b = 0"})
        return BackgroundArtifacts(_background_hash(scene), t, idx, None, None, "free space")
    system = assemble(scene, **kwargs) if system is None else system
    pos2 = system.positions_of(idx)
    a22 = system.interaction()[np.ix_(pos2, pos2)]
    fac, rcond = _factor(a22)
    b2 = system.excitation()[pos2]
    solved = _lu_solve(fac, b2)
    t = system.relocation[:, pos2] @ solved
    meta = _meta(system, "background", rcond=rcond, background_hash=_background_hash(scene))
    return BackgroundArtifacts(_background_hash(scene), TMatrix(t, scene.k, gb, meta), idx, fac, solved)


def schur_solve(system, artifacts):
    """Total T-matrix from a block system and stored background artifacts.

    Only the key block ``S = A11 - A12 A22^-1 A21`` is factorized; ``A22^-1 B2``
    is taken from the artifacts.
    """
    scene = system.scene
    if artifacts.scene_hash != _background_hash(scene) or artifacts.indices != tuple(scene.background()):
        raise ValueError("background artifacts are stale: the background or global basis changed")
    keys = scene.keys()
    if artifacts.lu is None:
        return solve_direct(system)
    if not keys:
        return TMatrix(artifacts.tmatrix.matrix.copy(), scene.k, system.global_basis,
                       _meta(system, "synthesized", route="schur"))
    pos1 = system.positions_of(keys)
    pos2 = system.positions_of(artifacts.indices)
    a = system.interaction()
    b1 = system.excitation()[pos1]
    a12 = a[np.ix_(pos1, pos2)]
    a21 = a[np.ix_(pos2, pos1)]
    a11 = a[np.ix_(pos1, pos1)]
    w21 = _lu_solve(artifacts.lu, a21)
    fac, rcond = _factor(a11 - a12 @ w21)
    x1 = _lu_solve(fac, b1 - a12 @ artifacts.solved)
    r1 = system.relocation[:, pos1]
    r2 = system.relocation[:, pos2]
    t = artifacts.tmatrix.matrix + (r1 - r2 @ w21) @ x1
    return TMatrix(t, scene.k, system.global_basis,
                   _meta(system, "synthesized", route="schur", rcond=rcond, schur_size=len(pos1)))


def schur_total(scene, artifacts, **kwargs):
    """Total T-matrix of ``scene`` reusing :func:`synthesize_background` output."""
    if artifacts.scene_hash != _background_hash(scene):
        raise ValueError("background artifacts are stale: the background or global basis changed")
    return schur_solve(assemble(scene, **kwargs), artifacts)
