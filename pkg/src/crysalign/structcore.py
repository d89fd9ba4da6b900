"""Core crystal data model: lattices, sites, compositions, periodic geometry.

All types are immutable after construction and safe to share across workers.
The cell-matrix convention is lower-triangular row vectors built from
(lengths, angles); every other module goes through this single convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

# Recognized element symbols, Z = 1..103.
ELEMENTS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni "
    "Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I "
    "Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt "
    "Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr"
).split()
ELEMENT_SET = frozenset(ELEMENTS)


class GeometryError(ValueError):
    """Degenerate lattice geometry (non-positive cell determinant)."""


class ReductionError(RuntimeError):
    """Niggli reduction failed to converge."""


@dataclass(frozen=True)
class Lattice:
    """Cell lengths in Angstrom and angles in degrees."""

    a: float
    b: float
    c: float
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name in ("a", "b", "c"):
            if not getattr(self, name) > 0:
                raise GeometryError(f"lattice length {name} must be > 0")
        for name in ("alpha", "beta", "gamma"):
            ang = getattr(self, name)
            if not 0.0 < ang < 180.0:
                raise GeometryError(f"lattice angle {name}={ang} outside (0, 180)")
        # Triangle-type condition; a non-positive determinant means the three
        # angles cannot close a parallelepiped.
        if self.volume() <= 0:
            raise GeometryError("angles produce a non-positive cell determinant")

    @property
    def lengths(self) -> tuple[float, float, float]:
        return (self.a, self.b, self.c)

    @property
    def angles(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)

    def matrix(self) -> np.ndarray:
        return cell_matrix(self)

    def volume(self) -> float:
        al, be, ga = (math.radians(x) for x in self.angles)
        ca, cb, cg = math.cos(al), math.cos(be), math.cos(ga)
        disc = 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg
        if disc <= 0:
            return -1.0
        return self.a * self.b * self.c * math.sqrt(disc)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Lattice":
        m = np.asarray(m, dtype=float)
        a, b, c = (float(np.linalg.norm(m[i])) for i in range(3))
        alpha = math.degrees(math.acos(np.clip(m[1] @ m[2] / (b * c), -1, 1)))
        beta = math.degrees(math.acos(np.clip(m[0] @ m[2] / (a * c), -1, 1)))
        gamma = math.degrees(math.acos(np.clip(m[0] @ m[1] / (a * b), -1, 1)))
        return cls(a, b, c, alpha, beta, gamma)


def cell_matrix(lattice: Lattice) -> np.ndarray:
    """Row-vector cell matrix, lower triangular by construction."""
    a, b, c = lattice.lengths
    al, be, ga = (math.radians(x) for x in lattice.angles)
    ca, cb, cg = math.cos(al), math.cos(be), math.cos(ga)
    sg = math.sin(ga)
    cx = c * cb
    cy = c * (ca - cb * cg) / sg
    cz_sq = c * c - cx * cx - cy * cy
    if cz_sq <= 0:
        raise GeometryError("angles produce a non-positive cell determinant")
    return np.array([
        [a, 0.0, 0.0],
        [b * cg, b * sg, 0.0],
        [cx, cy, math.sqrt(cz_sq)],
    ])


def _wrap(x: float) -> float:
    w = x % 1.0
    return 0.0 if w >= 1.0 else w  # guard against 1.0 from float roundoff


@dataclass(frozen=True)
class Site:
    """One explicit atomic site; count is always 1 for explicit sites."""

    element: str
    frac_coords: tuple[float, float, float]
    count: int = 1

    def __post_init__(self):
        if self.element not in ELEMENT_SET:
            raise ValueError(f"unknown element symbol {self.element!r}")
        if self.count != 1:
            raise ValueError(f"explicit sites must have count 1, got {self.count}")
        object.__setattr__(
            self, "frac_coords", tuple(_wrap(float(x)) for x in self.frac_coords)
        )


@dataclass(frozen=True)
class CrystalStructure:
    lattice: Lattice
    sites: tuple[Site, ...]

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        if not self.sites:
            raise ValueError("structure needs at least one site")

    @property
    def num_sites(self) -> int:
        return len(self.sites)

    def volume(self) -> float:
        return self.lattice.volume()

    def frac_array(self) -> np.ndarray:
        return np.array([s.frac_coords for s in self.sites])

    def elements(self) -> tuple[str, ...]:
        return tuple(s.element for s in self.sites)

    def composition(self) -> "Composition":
        counts: dict[str, int] = {}
        for s in self.sites:
            counts[s.element] = counts.get(s.element, 0) + 1
        return Composition(counts)

    def with_coords(self, frac: np.ndarray) -> "CrystalStructure":
        sites = tuple(
            Site(s.element, tuple(frac[i])) for i, s in enumerate(self.sites)
        )
        return CrystalStructure(self.lattice, sites)


@dataclass(frozen=True)
class Composition:
    counts: dict[str, int] = field(hash=False)

    def __post_init__(self):
        if not self.counts:
            raise ValueError("empty composition")
        for el, n in self.counts.items():
            if el not in ELEMENT_SET:
                raise ValueError(f"unknown element symbol {el!r}")
            if not isinstance(n, int) or n <= 0:
                raise ValueError(f"count for {el} must be a positive integer")
        object.__setattr__(self, "counts", dict(self.counts))

    def num_atoms(self) -> int:
        return sum(self.counts.values())

    def reduced(self) -> dict[str, int]:
        g = math.gcd(*self.counts.values()) if len(self.counts) > 1 else next(
            iter(self.counts.values())
        )
        return {el: n // g for el, n in sorted(self.counts.items())}

    def fractions(self) -> dict[str, float]:
        total = self.num_atoms()
        return {el: n / total for el, n in sorted(self.counts.items())}

    def __eq__(self, other):
        return isinstance(other, Composition) and self.counts == other.counts

    def __hash__(self):
        return hash(tuple(sorted(self.counts.items())))

    @classmethod
    def from_formula(cls, formula: str) -> "Composition":
        import re

        counts: dict[str, int] = {}
        pos = 0
        for m in re.finditer(r"([A-Z][a-z]?)(\d*)", formula.replace(" ", "")):
            if not m.group(0):
                continue
            if m.start() != pos:
                raise ValueError(f"cannot parse formula {formula!r}")
            pos = m.end()
            el, n = m.group(1), int(m.group(2) or 1)
            counts[el] = counts.get(el, 0) + n
        if pos != len(formula.replace(" ", "")) or not counts:
            raise ValueError(f"cannot parse formula {formula!r}")
        return cls(counts)


def reduced_formula(c: Composition) -> str:
    """Canonical reduced formula: alphabetical symbols, gcd-reduced counts."""
    parts = []
    for el, n in c.reduced().items():
        parts.append(el if n == 1 else f"{el}{n}")
    return "".join(parts)


def _image_shifts(lattice: Lattice, shell: int | None = None) -> np.ndarray:
    if shell is None:
        skewed = any(not 45.0 <= ang <= 135.0 for ang in lattice.angles)
        shell = 2 if skewed else 1
    r = range(-shell, shell + 1)
    return np.array([(i, j, k) for i in r for j in r for k in r], dtype=float)


def min_image_distance(
    s: CrystalStructure, i: int, j: int, shell: int | None = None
) -> float:
    """Minimum Cartesian distance between sites i and j over lattice images.

    For i == j the zero translation is excluded, giving the nearest
    periodic self-image.
    """
    m = s.lattice.matrix()
    shifts = _image_shifts(s.lattice, shell)
    d = np.array(s.sites[j].frac_coords) - np.array(s.sites[i].frac_coords)
    vecs = (d + shifts) @ m
    norms = np.linalg.norm(vecs, axis=1)
    if i == j:
        norms = norms[norms > 1e-12]
    return float(norms.min())


def all_pair_min_distance(s: CrystalStructure, shell: int | None = None) -> float:
    """Minimum over all site pairs, including periodic self-images."""
    m = s.lattice.matrix()
    shifts = _image_shifts(s.lattice, shell) @ m
    cart = s.frac_array() @ m
    diff = cart[:, None, :] - cart[None, :, :]  # (n, n, 3)
    d = diff[:, :, None, :] + shifts[None, None, :, :]
    norms = np.linalg.norm(d, axis=-1)
    flat = norms.reshape(-1)
    return float(flat[flat > 1e-12].min())


def niggli_reduce(lattice: Lattice, eps: float = 1e-10, max_iter: int = 200) -> Lattice:
    """Niggli-reduce a cell (Krivy-Gruber steps with stabilized comparisons)."""
    m = lattice.matrix()
    a = float(m[0] @ m[0])
    b = float(m[1] @ m[1])
    c = float(m[2] @ m[2])
    xi = 2.0 * float(m[1] @ m[2])
    eta = 2.0 * float(m[0] @ m[2])
    zeta = 2.0 * float(m[0] @ m[1])
    scale = (a * b * c) ** (1.0 / 3.0)
    tol = eps * scale

    def lt(x, y):
        return x < y - tol

    def gt(x, y):
        return x > y + tol

    def eq(x, y):
        return abs(x - y) <= tol

    for _ in range(max_iter):
        # A1
        if gt(a, b) or (eq(a, b) and gt(abs(xi), abs(eta))):
            a, b = b, a
            xi, eta = eta, xi
        # A2
        if gt(b, c) or (eq(b, c) and gt(abs(eta), abs(zeta))):
            b, c = c, b
            eta, zeta = zeta, eta
            continue
        # A3 / A4: fix signs
        if xi * eta * zeta > 0:
            xi, eta, zeta = abs(xi), abs(eta), abs(zeta)
        else:
            xi, eta, zeta = -abs(xi), -abs(eta), -abs(zeta)
        # A5
        if gt(abs(xi), b) or (eq(xi, b) and lt(2 * eta, zeta)) or (
            eq(xi, -b) and lt(zeta, 0)
        ):
            sign = 1 if xi > 0 else -1
            c = b + c - sign * xi
            eta = eta - sign * zeta
            xi = xi - sign * 2 * b
            continue
        # A6
        if gt(abs(eta), a) or (eq(eta, a) and lt(2 * xi, zeta)) or (
            eq(eta, -a) and lt(zeta, 0)
        ):
            sign = 1 if eta > 0 else -1
            c = a + c - sign * eta
            xi = xi - sign * zeta
            eta = eta - sign * 2 * a
            continue
        # A7
        if gt(abs(zeta), a) or (eq(zeta, a) and lt(2 * xi, eta)) or (
            eq(zeta, -a) and lt(eta, 0)
        ):
            sign = 1 if zeta > 0 else -1
            b = a + b - sign * zeta
            xi = xi - sign * eta
            zeta = zeta - sign * 2 * a
            continue
        # A8
        if lt(xi + eta + zeta + a + b, 0) or (
            eq(xi + eta + zeta + a + b, 0) and gt(2 * (a + eta) + zeta, 0)
        ):
            c = a + b + c + xi + eta + zeta
            xi = 2 * b + xi + zeta
            eta = 2 * a + eta + zeta
            continue
        break
    else:
        raise ReductionError("Niggli reduction did not converge")

    la = math.sqrt(a)
    lb = math.sqrt(b)
    lc = math.sqrt(c)
    alpha = math.degrees(math.acos(np.clip(xi / (2 * lb * lc), -1, 1)))
    beta = math.degrees(math.acos(np.clip(eta / (2 * la * lc), -1, 1)))
    gamma = math.degrees(math.acos(np.clip(zeta / (2 * la * lb), -1, 1)))
    return Lattice(la, lb, lc, alpha, beta, gamma)
