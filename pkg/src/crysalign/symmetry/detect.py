"""Space-group detection from scratch.

Pipeline: find pure translations and fold to the primitive cell; reduce the
primitive basis; enumerate integer rotations preserving the metric; search
translations mapping the site set onto itself; build a conventional cell
from the rotation axes; identify the group by matching the operation-set
signature against the embedded table.

Symmetry operations act on column fractional coordinates: x' = W x + w.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..structcore import CrystalStructure, Lattice
from . import groups
from .groups import I3, signature, signature_index, load_group_table

CRYSTAL_SYSTEMS = (
    (2, "triclinic"), (15, "monoclinic"), (74, "orthorhombic"),
    (142, "tetragonal"), (167, "trigonal"), (194, "hexagonal"), (230, "cubic"),
)


class DetectionError(RuntimeError):
    """Symmetry detection could not complete."""


@dataclass(frozen=True)
class SymmetryOp:
    rotation: tuple[tuple[int, int, int], ...]
    translation: tuple[float, float, float]

    def apply(self, frac: np.ndarray) -> np.ndarray:
        w = np.array(self.rotation)
        return (frac @ w.T + np.array(self.translation)) % 1.0


@dataclass(frozen=True)
class SpacegroupResult:
    number: int
    symbol: str
    crystal_system: str
    operations: tuple[SymmetryOp, ...]
    orbits: tuple[tuple[int, ...], ...]
    ambiguous: bool
    tol: float


def crystal_system(number: int) -> str:
    """Standard space-group-number to crystal-system mapping."""
    if not 1 <= number <= 230:
        raise ValueError(f"space-group number {number} outside [1, 230]")
    for hi, name in CRYSTAL_SYSTEMS:
        if number <= hi:
            return name
    raise AssertionError


# ---------------------------------------------------------------------------
# integer-lattice helpers


def _hnf_basis(rows: np.ndarray) -> np.ndarray:
    """Hermite-style integer row reduction to a 3x3 basis of the row lattice."""
    rows = [list(map(int, r)) for r in rows]
    basis: list[list[int]] = []
    for col in range(3):
        work = [r for r in rows if any(r[col:])]
        # reduce so only one row has a nonzero entry in `col`
        while True:
            nz = [r for r in work if r[col] != 0]
            if len(nz) <= 1:
                break
            nz.sort(key=lambda r: abs(r[col]))
            pivot = nz[0]
            for r in nz[1:]:
                q = r[col] // pivot[col]
                for k in range(3):
                    r[k] -= q * pivot[k]
        pivot = next((r for r in work if r[col] != 0), None)
        if pivot is None:
            raise DetectionError("translation set does not span a 3D lattice")
        basis.append([-x for x in pivot] if pivot[col] < 0 else list(pivot))
        rows = [r for r in work if r is not pivot and any(r)]
    return np.array(basis, dtype=int)


def _lll_reduce(basis: np.ndarray) -> np.ndarray:
    """LLL reduction of row basis (Cartesian); returns unimodular U."""
    b = basis.astype(float).copy()
    u = np.eye(3, dtype=int)
    delta = 0.75

    def gram():
        bstar = np.zeros_like(b)
        mu = np.zeros((3, 3))
        for i in range(3):
            bstar[i] = b[i].copy()
            for j in range(i):
                mu[i, j] = (b[i] @ bstar[j]) / (bstar[j] @ bstar[j])
                bstar[i] -= mu[i, j] * bstar[j]
        return bstar, mu

    k = 1
    for _ in range(200):
        if k >= 3:
            break
        bstar, mu = gram()
        for j in range(k - 1, -1, -1):
            q = round(mu[k, j])
            if q:
                b[k] -= q * b[j]
                u[k] -= q * u[j]
                bstar, mu = gram()
        if (bstar[k] @ bstar[k]) >= (delta - mu[k, k - 1] ** 2) * (
            bstar[k - 1] @ bstar[k - 1]
        ):
            k += 1
        else:
            b[[k - 1, k]] = b[[k, k - 1]]
            u[[k - 1, k]] = u[[k, k - 1]]
            k = max(k - 1, 1)
    if np.linalg.det(u * 1.0) < 0:
        u[2] = -u[2]
    return u


def _int_vectors(rng: int):
    r = range(-rng, rng + 1)
    return [np.array(v) for v in
            ((i, j, k) for i in r for j in r for k in r) if any(v)]


# ---------------------------------------------------------------------------
# structure mapping


class _Mapper:
    """Tests whether candidate ops map the site set onto itself."""

    def __init__(self, cell: np.ndarray, frac: np.ndarray, elems: tuple, tol: float):
        self.cell = cell                     # rows = basis vectors (Cartesian)
        self.frac = frac
        self.elems = elems
        self.tol = tol
        self.by_elem: dict[str, np.ndarray] = {}
        for el in set(elems):
            self.by_elem[el] = np.array(
                [i for i, e in enumerate(elems) if e == el]
            )

    def match_site(self, target: np.ndarray, el: str) -> int | None:
        idx = self.by_elem[el]
        d = self.frac[idx] - target
        d -= np.round(d)
        dist = np.linalg.norm(d @ self.cell, axis=1)
        j = int(np.argmin(dist))
        return int(idx[j]) if dist[j] < self.tol else None

    def permutation(self, w: np.ndarray, t: np.ndarray) -> list[int] | None:
        perm = []
        for i in range(len(self.frac)):
            target = w @ self.frac[i] + t
            j = self.match_site(target, self.elems[i])
            if j is None:
                return None
            perm.append(j)
        return perm if len(set(perm)) == len(perm) else None


# ---------------------------------------------------------------------------
# detection


def _pure_translations(mapper: _Mapper) -> list[np.ndarray]:
    anchor_el = min(mapper.by_elem, key=lambda el: len(mapper.by_elem[el]))
    idx = mapper.by_elem[anchor_el]
    i0 = int(idx[0])
    eye = np.eye(3)
    found = [np.zeros(3)]
    for j in idx:
        if int(j) == i0:
            continue
        t = (mapper.frac[int(j)] - mapper.frac[i0]) % 1.0
        if mapper.permutation(eye, t) is not None:
            found.append(t)
    return found


def _primitive_transform(translations: list[np.ndarray]) -> np.ndarray:
    """Rows S (rational, as floats): primitive basis in original frac coords."""
    m = len(translations)
    if m == 1:
        return np.eye(3)
    rows = [m * np.eye(3, dtype=int)[i] for i in range(3)]
    for t in translations[1:]:
        v = np.round(m * t).astype(int)
        if not np.allclose(m * t, v, atol=0.2):
            raise DetectionError("pure translation is not rational at this order")
        rows.append(v)
    h = _hnf_basis(np.array([r for r in rows if np.any(r)]))
    s = h.astype(float) / m
    if abs(abs(np.linalg.det(s)) - 1.0 / m) > 1e-9:
        raise DetectionError("primitive basis determinant mismatch")
    return s


def _candidate_rotations(cell: np.ndarray, tol: float) -> list[np.ndarray]:
    g = cell @ cell.T
    lmax = math.sqrt(max(g[i, i] for i in range(3)))
    atol = 4.0 * tol * lmax
    vecs = _int_vectors(2)
    col_cands = []
    for j in range(3):
        col_cands.append([v for v in vecs if abs(v @ g @ v - g[j, j]) < atol])
    out = []
    for c0 in col_cands[0]:
        for c1 in col_cands[1]:
            if abs(c0 @ g @ c1 - g[0, 1]) > atol:
                continue
            for c2 in col_cands[2]:
                if abs(c0 @ g @ c2 - g[0, 2]) > atol:
                    continue
                if abs(c1 @ g @ c2 - g[1, 2]) > atol:
                    continue
                w = np.stack([c0, c1, c2], axis=1)
                if round(abs(np.linalg.det(w * 1.0))) == 1:
                    out.append(w)
    return out


def _axes_summary(ops: list[tuple[np.ndarray, np.ndarray]]):
    """Distinct proper-rotation axes of the Laue class with their max order."""
    axes: dict[tuple, int] = {}
    for w, _ in ops:
        wi = tuple(tuple(int(x) for x in row) for row in np.round(w).astype(int))
        if groups._det(wi) < 0:
            wi = tuple(tuple(-x for x in row) for row in wi)
        if wi == I3:
            continue
        axis = groups.rotation_axis(wi)
        order = groups.op_order(wi)
        axes[axis] = max(axes.get(axis, 0), order)
    return axes


def _classify_system(axes: dict[tuple, int]) -> str:
    orders = list(axes.values())
    n3 = sum(1 for o in orders if o == 3)
    if n3 == 4:
        return "cubic"
    if any(o == 6 for o in orders):
        return "hexagonal"
    if n3 >= 1:
        return "trigonal"
    if any(o == 4 for o in orders):
        return "tetragonal"
    if sum(1 for o in orders if o == 2) >= 3:
        return "orthorhombic"
    if len(orders) == 1:
        return "monoclinic"
    return "triclinic"


def _shortest_along(cell, direction, tol):
    best = None
    dn = direction / np.linalg.norm(direction)
    for u in _int_vectors(4):
        v = u @ cell
        norm = np.linalg.norm(v)
        if np.linalg.norm(np.cross(v / norm, dn)) < 1e-4 and v @ dn > 0:
            if best is None or norm < best[1] - 1e-9:
                best = (u, norm)
    if best is None:
        raise DetectionError("no lattice vector along symmetry axis")
    return best[0]


def _shortest_perp(cell, direction, tol):
    out = []
    dn = direction / np.linalg.norm(direction)
    for u in _int_vectors(4):
        v = u @ cell
        norm = np.linalg.norm(v)
        if abs(v @ dn) < 1e-4 * norm + tol:
            out.append((u, norm))
    out.sort(key=lambda p: p[1])
    if not out:
        raise DetectionError("no lattice vector perpendicular to symmetry axis")
    return out


def _conventional_candidates(
    cell: np.ndarray,
    ops: list[tuple[np.ndarray, np.ndarray]],
    system: str,
    tol: float,
) -> list[np.ndarray]:
    """Candidate integer row matrices U with conventional cell = U @ cell.

    Several settings are returned where the axis choice is not forced
    (monoclinic a/c, trigonal/hexagonal in-plane pair); the caller keeps the
    first one whose operation signature is known.
    """
    axes = _axes_summary(ops)

    def axis_cart(axis):
        return np.array(axis, dtype=float) @ cell

    def proper_rot(order, axis):
        for w, _ in ops:
            wi = tuple(tuple(int(x) for x in row) for row in np.round(w).astype(int))
            if groups._det(wi) < 0:
                wi = tuple(tuple(-x for x in row) for row in wi)
            if wi != I3 and groups.op_order(wi) == order and \
                    groups.rotation_axis(wi) == axis:
                return np.array(wi)
        raise DetectionError(f"missing order-{order} rotation")

    if system == "triclinic":
        return [np.eye(3, dtype=int)]

    if system == "monoclinic":
        (b_axis,) = [a for a, o in axes.items() if o == 2]
        ub = _shortest_along(cell, axis_cart(b_axis), tol)
        perp = _shortest_perp(cell, axis_cart(b_axis), tol)[:8]
        out = []
        for ua, _ in perp:
            for uc, _ in perp:
                if np.linalg.norm(np.cross(ua * 1.0, uc * 1.0)) < 1e-9:
                    continue
                u = np.stack([ua, ub, uc])
                if np.linalg.det(u @ cell) < 0:
                    u = np.stack([uc, ub, ua])
                out.append(u)
        return out

    if system == "orthorhombic":
        dirs = [a for a, o in axes.items() if o >= 2]
        if len(dirs) != 3:
            raise DetectionError("orthorhombic cell without three 2-fold axes")
        us = sorted((_shortest_along(cell, axis_cart(d), tol) for d in dirs),
                    key=lambda u: np.linalg.norm(u @ cell))
        u = np.stack(us)
        if np.linalg.det(u @ cell) < 0:
            u[2] = -u[2]
        return [u]

    if system in ("tetragonal", "trigonal", "hexagonal"):
        order = {"tetragonal": 4, "trigonal": 3, "hexagonal": 6}[system]
        c_axis = next(a for a, o in axes.items() if o == order)
        uc = _shortest_along(cell, axis_cart(c_axis), tol)
        rot = proper_rot(order, c_axis)
        target = 0.0 if system == "tetragonal" else -0.5
        out = []
        # b is a rotation image of a, picked so the cell is right-handed
        # with the conventional in-plane angle.
        for ua, _ in _shortest_perp(cell, axis_cart(c_axis), tol)[:6]:
            for k in range(1, order):
                ub = np.linalg.matrix_power(rot, k) @ ua
                va, vb = ua @ cell, ub @ cell
                cosab = va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb))
                if abs(cosab - target) > 1e-4:
                    continue
                u = np.stack([ua, ub, uc])
                if np.linalg.det(u @ cell) > 0:
                    out.append(u)
        if not out:
            raise DetectionError("could not orient in-plane axes")
        return out

    if system == "cubic":
        four = [a for a, o in axes.items() if o == 4]
        dirs = four if len(four) == 3 else [a for a, o in axes.items() if o == 2]
        if len(dirs) != 3:
            raise DetectionError("cubic cell without three principal axes")
        us = [_shortest_along(cell, axis_cart(d), tol) for d in dirs]
        u = np.stack(us)
        if np.linalg.det(u @ cell) < 0:
            u[2] = -u[2]
        return [u]

    raise DetectionError(f"unknown system {system}")


def _conventional_signature(u_conv: np.ndarray, ops) -> tuple:
    """Operation-set signature in the conventional basis ``u_conv @ cell``."""
    ut_inv = np.linalg.inv(u_conv.T * 1.0)
    conv_ops: list[tuple[tuple, tuple]] = []
    for w, t in ops:
        w_c = ut_inv @ w @ u_conv.T
        w_ci = np.round(w_c).astype(int)
        if not np.allclose(w_c, w_ci, atol=1e-6):
            raise DetectionError("non-integer rotation in conventional basis")
        t_c = (ut_inv @ t) % 1.0
        conv_ops.append((tuple(map(tuple, w_ci)), tuple(t_c)))
    m_conv = round(abs(np.linalg.det(u_conv * 1.0)))
    seen_centers: list[np.ndarray] = []
    for z in [np.zeros(3, dtype=int)] + _int_vectors(2):
        x_c = (ut_inv @ z) % 1.0
        if any(np.linalg.norm((x_c - c) - np.round(x_c - c)) < 1e-6
               for c in seen_centers):
            continue
        seen_centers.append(x_c)
    if len(seen_centers) != m_conv:
        raise DetectionError("centering count mismatch")
    for c in seen_centers:
        if np.linalg.norm(c) > 1e-9:
            conv_ops.append((I3, tuple(c)))
    return signature(conv_ops)


def detect_spacegroup(s: CrystalStructure, tol: float = 1e-3) -> SpacegroupResult:
    """Detect the space group of a structure at Cartesian tolerance ``tol`` (A)."""
    cell0 = s.lattice.matrix()
    frac0 = s.frac_array()
    elems = s.elements()
    mapper0 = _Mapper(cell0, frac0, elems, tol)

    # Primitive cell.
    translations = _pure_translations(mapper0)
    m = len(translations)
    s_mat = _primitive_transform(translations)       # rows: prim basis in orig frac
    cell_p = s_mat @ cell0
    u_red = _lll_reduce(cell_p)
    r_mat = u_red @ s_mat                            # reduced prim in orig frac
    cell_r = r_mat @ cell0

    frac_r = (frac0 @ np.linalg.inv(r_mat)) % 1.0
    # Dedupe folded sites.
    keep: list[int] = []
    for i in range(len(frac_r)):
        dup = False
        for j in keep:
            if elems[i] == elems[j]:
                d = frac_r[i] - frac_r[j]
                d -= np.round(d)
                if np.linalg.norm(d @ cell_r) < tol:
                    dup = True
                    break
        if dup:
            continue
        keep.append(i)
    if len(keep) * m != len(frac_r):
        raise DetectionError("site folding inconsistent with pure translations")
    frac_prim = frac_r[keep]
    elems_prim = tuple(elems[i] for i in keep)
    mapper = _Mapper(cell_r, frac_prim, elems_prim, tol)

    # Space-group operations in the reduced primitive basis.
    anchor_el = min(mapper.by_elem, key=lambda el: len(mapper.by_elem[el]))
    anchor_sites = mapper.by_elem[anchor_el]
    x0 = frac_prim[int(anchor_sites[0])]
    ops: list[tuple[np.ndarray, np.ndarray]] = []
    for w in _candidate_rotations(cell_r, tol):
        for j in anchor_sites:
            t = (frac_prim[int(j)] - w @ x0) % 1.0
            if mapper.permutation(w, t) is not None:
                ops.append((w, t))
                break
    if not any(np.array_equal(w, np.eye(3, dtype=int)) for w, _ in ops):
        raise DetectionError("identity operation missing")

    # Conventional setting and signature.
    axes = _axes_summary(ops)
    system = _classify_system(axes)
    ambiguous = False
    numbers = None
    try:
        candidates = _conventional_candidates(cell_r, ops, system, tol)
    except DetectionError:
        candidates = []
    for u_conv in candidates:
        try:
            sig = _conventional_signature(u_conv, ops)
        except DetectionError:
            continue
        numbers = signature_index().get(sig)
        if numbers is not None:
            break
    if numbers is None:
        # Conservative fallback: triclinic classification from the op set.
        has_inv = any(np.array_equal(np.round(w).astype(int), -np.eye(3, dtype=int))
                      for w, _ in ops)
        numbers = (2,) if has_inv else (1,)
        ambiguous = len(ops) > (2 if has_inv else 1)
    number = max(numbers)
    if len(numbers) > 1:
        ambiguous = True
    symbol = load_group_table()[number][0]

    # Operations in the original basis (with the original cell's pure
    # translations re-attached), plus orbits from the induced permutations.
    rt = r_mat.T
    rt_inv = np.linalg.inv(rt)
    orig_ops: list[SymmetryOp] = []
    parent = list(range(len(frac0)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[rj] = ri

    for w, t in ops:
        w_o = rt @ w @ rt_inv
        w_oi = np.round(w_o).astype(int)
        if not np.allclose(w_o, w_oi, atol=1e-6):
            ambiguous = True
            continue
        t_o = (rt @ t) % 1.0
        for extra in translations:
            top = (t_o + extra) % 1.0
            perm = mapper0.permutation(w_oi * 1.0, top)
            if perm is None:
                continue
            orig_ops.append(SymmetryOp(tuple(map(tuple, w_oi)), tuple(top)))
            for i, j in enumerate(perm):
                union(i, j)

    orbit_map: dict[int, list[int]] = {}
    for i in range(len(frac0)):
        orbit_map.setdefault(find(i), []).append(i)
    orbits = tuple(tuple(v) for _, v in sorted(orbit_map.items()))

    return SpacegroupResult(
        number=number,
        symbol=symbol,
        crystal_system=crystal_system(number),
        operations=tuple(orig_ops),
        orbits=orbits,
        ambiguous=ambiguous,
        tol=tol,
    )


def site_orbits(
    s: CrystalStructure, ops, tol: float = 1e-3
) -> tuple[tuple[int, ...], ...]:
    """Partition site indices into orbits under the given operations."""
    mapper = _Mapper(s.lattice.matrix(), s.frac_array(), s.elements(), tol)
    parent = list(range(s.num_sites))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for op in ops:
        w = np.array(op.rotation, dtype=float)
        t = np.array(op.translation)
        perm = mapper.permutation(w, t)
        if perm is None:
            raise ValueError("operation does not map the site set onto itself")
        for i, j in enumerate(perm):
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[rj] = ri

    orbit_map: dict[int, list[int]] = {}
    for i in range(s.num_sites):
        orbit_map.setdefault(find(i), []).append(i)
    orbits = tuple(tuple(v) for _, v in sorted(orbit_map.items()))
    for orbit in orbits:
        els = {s.sites[i].element for i in orbit}
        if len(els) != 1:
            raise ValueError("orbit mixes element types")
    return orbits
