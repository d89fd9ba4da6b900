"""Energy backend, local relaxation, formation energy, and hull distance.

The pair-potential backend is a cheap, force-consistent surrogate for a
machine-learned potential: a truncated Lennard-Jones sum, shifted so the
energy is continuous at the cutoff, with Lorentz-Berthelot mixing for pairs
that are not parameterized explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.optimize import linprog

from .structcore import Composition, CrystalStructure

STABILITY_THRESHOLD = 0.016  # eV/atom, strict upper bound for "stable"


class ConfigurationError(ValueError):
    """Backend configuration is incomplete or inconsistent."""


class CoverageError(ValueError):
    """Reference phases do not span the candidate's elements."""

    def __init__(self, missing: tuple[str, ...]):
        self.missing = missing
        super().__init__(f"no reference coverage for elements: {', '.join(missing)}")


class RelaxationError(RuntimeError):
    """Relaxation diverged; carries the last valid structure."""

    def __init__(self, message: str, last_valid: CrystalStructure):
        self.last_valid = last_valid
        super().__init__(message)


@dataclass(frozen=True)
class PhaseEntry:
    composition: Composition
    energy_per_atom: float
    label: str = ""

    def __post_init__(self):
        if not math.isfinite(self.energy_per_atom):
            raise ValueError("phase energy must be finite")


@dataclass(frozen=True)
class HullResult:
    e_hull: float
    decomposition: tuple[tuple[PhaseEntry, float], ...]


class EnergyBackend:
    """Interface: deterministic, translation-invariant energies in eV/atom."""

    def energy_per_atom(self, s: CrystalStructure) -> float:
        raise NotImplementedError

    def forces(self, s: CrystalStructure) -> np.ndarray:
        """Per-site Cartesian forces (eV/A). Optional for backends."""
        raise NotImplementedError


def _image_range(cell: np.ndarray, cutoff: float) -> np.ndarray:
    """All lattice image shifts (Cartesian) that can hold a pair within cutoff."""
    inv = np.linalg.inv(cell)
    # perpendicular inter-plane spacings: 1 / |row of inverse transpose|
    widths = 1.0 / np.linalg.norm(inv, axis=0)
    counts = np.ceil(cutoff / widths).astype(int) + 1
    grids = [np.arange(-n, n + 1) for n in counts]
    mesh = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, 3)
    return mesh @ cell


class PairPotentialBackend(EnergyBackend):
    """Shifted truncated Lennard-Jones with Lorentz-Berthelot mixing.

    ``pair_params`` maps *self* pairs (element,) or explicit pairs
    (element_a, element_b) to (epsilon eV, sigma A). Missing cross pairs are
    mixed from the self pairs.
    """

    def __init__(
        self,
        pair_params: dict,
        cutoff: float = 6.0,
        reference_energies: dict[str, float] | None = None,
    ):
        self._self: dict[str, tuple[float, float]] = {}
        self._pairs: dict[frozenset, tuple[float, float]] = {}
        for key, (eps, sigma) in pair_params.items():
            if eps <= 0 or sigma <= 0:
                raise ConfigurationError(f"nonpositive LJ parameters for {key}")
            if isinstance(key, str):
                self._self[key] = (float(eps), float(sigma))
            elif len(key) == 1:
                self._self[tuple(key)[0]] = (float(eps), float(sigma))
            else:
                a, b = key
                if a == b:
                    self._self[a] = (float(eps), float(sigma))
                else:
                    self._pairs[frozenset((a, b))] = (float(eps), float(sigma))
        self.cutoff = float(cutoff)
        self.reference_energies = dict(reference_energies or {})
        for params in list(self._self.values()) + list(self._pairs.values()):
            if self.cutoff < 2.0 * params[1]:
                raise ConfigurationError(
                    f"cutoff {self.cutoff} below 2*sigma for sigma={params[1]}"
                )

    @classmethod
    def from_text(cls, pair_text: str, ref_text: str = "", cutoff: float = 6.0):
        params: dict = {}
        for raw in pair_text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key_part, _, val_part = line.partition(":")
            elems = key_part.split()
            eps, sigma = (float(x) for x in val_part.split())
            key = elems[0] if len(elems) == 1 else tuple(elems)
            params[key] = (eps, sigma)
        refs: dict[str, float] = {}
        for raw in ref_text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            el, _, val = line.partition(":")
            refs[el.strip()] = float(val)
        return cls(params, cutoff=cutoff, reference_energies=refs)

    @classmethod
    def load_default(cls) -> "PairPotentialBackend":
        data = resources.files("crysalign.data")
        return cls.from_text(
            (data / "pair_potentials.txt").read_text(),
            (data / "reference_energies.txt").read_text(),
        )

    def pair_parameters(self, a: str, b: str) -> tuple[float, float]:
        if a == b and a in self._self:
            return self._self[a]
        key = frozenset((a, b))
        if key in self._pairs:
            return self._pairs[key]
        try:
            ea, sa = self._self[a]
            eb, sb = self._self[b]
        except KeyError as exc:
            raise ConfigurationError(
                f"no pair parameters for ({a}, {b})"
            ) from exc
        return math.sqrt(ea * eb), 0.5 * (sa + sb)

    def _pair_tables(self, elems: tuple[str, ...]):
        n = len(elems)
        eps = np.zeros((n, n))
        sig = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                eps[i, j], sig[i, j] = self.pair_parameters(elems[i], elems[j])
        return eps, sig

    def _geometry(self, s: CrystalStructure):
        cell = s.lattice.matrix()
        cart = s.frac_array() @ cell
        shifts = _image_range(cell, self.cutoff)
        # rel[i, j, k] = r_j + shift_k - r_i
        rel = cart[None, :, None, :] + shifts[None, None, :, :] - cart[:, None, None, :]
        dist = np.linalg.norm(rel, axis=-1)
        return rel, dist

    def energy_per_atom(self, s: CrystalStructure) -> float:
        eps, sig = self._pair_tables(s.elements())
        _, dist = self._geometry(s)
        mask = (dist > 1e-12) & (dist < self.cutoff)
        e = np.zeros_like(dist)
        ratio = np.where(mask, sig[:, :, None] / np.where(mask, dist, 1.0), 0.0)
        r6 = ratio ** 6
        shift_ratio = sig / self.cutoff
        shift = 4.0 * eps * (shift_ratio ** 12 - shift_ratio ** 6)
        e = np.where(mask, 4.0 * eps[:, :, None] * (r6 ** 2 - r6) - shift[:, :, None], 0.0)
        return 0.5 * float(e.sum()) / s.num_sites

    def forces(self, s: CrystalStructure) -> np.ndarray:
        eps, sig = self._pair_tables(s.elements())
        rel, dist = self._geometry(s)
        mask = (dist > 1e-12) & (dist < self.cutoff)
        d = np.where(mask, dist, 1.0)
        r6 = (sig[:, :, None] / d) ** 6
        # dphi/dr = 4 eps (-12 sig^12 / r^13 + 6 sig^6 / r^7)
        dphi = np.where(mask, 4.0 * eps[:, :, None] * (-12.0 * r6 ** 2 + 6.0 * r6) / d, 0.0)
        # force on i from the pair (i, j, image): -dphi/dr * d r/d x_i,
        # with r = |r_j + L - r_i| so d r / d x_i = -rel / r
        f = (dphi / d)[:, :, :, None] * rel
        return f.sum(axis=(1, 2))


def energy_per_atom(backend: EnergyBackend, s: CrystalStructure) -> float:
    return backend.energy_per_atom(s)


def relax_positions(
    backend: EnergyBackend,
    s: CrystalStructure,
    max_steps: int = 200,
    force_tol: float = 1e-3,
) -> CrystalStructure:
    """Positions-only descent with backtracking; the cell stays fixed."""
    cell = s.lattice.matrix()
    inv = np.linalg.inv(cell)
    cart = s.frac_array() @ cell
    current = s
    energy = backend.energy_per_atom(current)
    step = 0.05
    for _ in range(max_steps):
        f = backend.forces(current)
        if not np.all(np.isfinite(f)):
            raise RelaxationError("non-finite forces", current)
        fmax = float(np.abs(f).max()) if f.size else 0.0
        if fmax < force_tol:
            return current
        if fmax > 1e6:
            raise RelaxationError("force explosion", current)
        accepted = False
        for _ in range(30):
            trial_cart = cart + step * f
            trial = current.with_coords(trial_cart @ inv)
            trial_energy = backend.energy_per_atom(trial)
            if trial_energy <= energy:
                current, energy, cart = trial, trial_energy, trial_cart
                step *= 1.2
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return current
    return current


def formation_energy(backend: EnergyBackend, s: CrystalStructure) -> float:
    """energy_per_atom minus the composition-weighted elemental references."""
    fractions = s.composition().fractions()
    missing = sorted(e for e in fractions if e not in backend.reference_energies)
    if missing:
        raise ConfigurationError(
            f"no elemental reference energy for: {', '.join(missing)}"
        )
    ref = sum(x * backend.reference_energies[e] for e, x in fractions.items())
    return backend.energy_per_atom(s) - ref


def energy_above_hull(candidate: PhaseEntry, refs: list[PhaseEntry]) -> HullResult:
    """Hull distance by LP over convex combinations of reference phases.

    minimize sum w_i E_i subject to sum w_i x_i,e = x_cand,e and w >= 0;
    the weights then sum to 1 automatically because atomic fractions do.
    """
    target = candidate.composition.fractions()
    elements = sorted(target)
    usable = [r for r in refs
              if set(r.composition.fractions()) <= set(elements)]
    covered = set()
    for r in usable:
        covered |= set(r.composition.fractions())
    missing = tuple(e for e in elements if e not in covered)
    if missing:
        raise CoverageError(missing)

    a_eq = np.array([
        [r.composition.fractions().get(e, 0.0) for r in usable]
        for e in elements
    ])
    b_eq = np.array([target[e] for e in elements])
    c = np.array([r.energy_per_atom for r in usable])
    res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise CoverageError(tuple(elements))
    e_hull = candidate.energy_per_atom - float(res.fun)
    decomposition = tuple(
        (r, float(w)) for r, w in zip(usable, res.x) if w > 1e-12
    )
    recon = np.zeros(len(elements))
    for r, w in decomposition:
        fr = r.composition.fractions()
        recon += w * np.array([fr.get(e, 0.0) for e in elements])
    if np.abs(recon - b_eq).max() > 1e-9:
        raise RuntimeError("hull decomposition does not reproduce composition")
    return HullResult(e_hull=e_hull, decomposition=decomposition)


def is_stable(e_hull: float, threshold: float = STABILITY_THRESHOLD) -> bool:
    if not math.isfinite(e_hull):
        raise ValueError("e_hull must be finite")
    return e_hull < threshold


def load_reference_phases() -> tuple[PhaseEntry, ...]:
    """Curated surrogate phase set: label, formula, energy per atom."""
    text = (resources.files("crysalign.data") / "reference_phases.txt").read_text()
    entries = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        label, formula, energy = line.split()
        entries.append(PhaseEntry(
            composition=Composition.from_formula(formula),
            energy_per_atom=float(energy),
            label=label,
        ))
    return tuple(entries)
