"""Structural validity, chemical (oxidation-state) validity, and
instruction-following checks: the binary reward primitives.

All checks report rather than throw; configuration problems (e.g. an element
missing from the oxidation table) raise instead of being conflated with an
invalid structure.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from importlib import resources

from .structcore import (
    Composition,
    CrystalStructure,
    all_pair_min_distance,
    reduced_formula,
)

# Exhaustive product enumeration is used up to this many combinations, then a
# meet-in-the-middle sum search takes over (bounded worst case on big cells).
ENUMERATION_CAP = 10**7


class ConfigurationError(RuntimeError):
    """Missing or inconsistent check configuration (not an invalid structure)."""


@dataclass(frozen=True)
class ValidityThresholds:
    min_pair_distance: float = 2.0   # A
    min_volume: float = 4.0          # A^3
    min_length: float = 1.1          # A
    angle_range: tuple[float, float] = (20.0, 160.0)  # degrees

    def __post_init__(self):
        if min(self.min_pair_distance, self.min_volume, self.min_length) <= 0:
            raise ValueError("thresholds must be positive")
        if self.angle_range[0] >= self.angle_range[1]:
            raise ValueError("angle_range.low must be < angle_range.high")


@dataclass(frozen=True)
class OxidationTable:
    states: dict[str, tuple[int, ...]] = field(hash=False)

    def __post_init__(self):
        object.__setattr__(self, "states", dict(self.states))

    @classmethod
    def load_default(cls) -> "OxidationTable":
        path = resources.files("crysalign.data") / "oxidation_states.txt"
        return cls.from_text(path.read_text(encoding="utf-8"))

    @classmethod
    def from_text(cls, text: str) -> "OxidationTable":
        states: dict[str, tuple[int, ...]] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            symbol, _, raw = line.partition(":")
            raw = raw.strip()
            vals = tuple(int(x) for x in raw.split(",")) if raw else ()
            states[symbol.strip()] = vals
        return cls(states)


@dataclass(frozen=True)
class ValidityReport:
    structural: bool
    chemical: bool
    composition_match: bool
    spacegroup_match: bool | None = None
    failed_checks: tuple[str, ...] = ()

    def __post_init__(self):
        any_false = not (self.structural and self.chemical and self.composition_match
                         and self.spacegroup_match is not False)
        if any_false != bool(self.failed_checks):
            raise ValueError("failed_checks must be non-empty iff a check failed")


def check_structural(
    s: CrystalStructure, t: ValidityThresholds = ValidityThresholds()
) -> tuple[bool, list[str]]:
    """Geometric validity: strict inequalities at every threshold."""
    reasons = []
    if not all_pair_min_distance(s) > t.min_pair_distance:
        reasons.append("pair_distance")
    if not s.volume() > t.min_volume:
        reasons.append("volume")
    if not all(x > t.min_length for x in s.lattice.lengths):
        reasons.append("length")
    lo, hi = t.angle_range
    if not all(lo < ang < hi for ang in s.lattice.angles):
        reasons.append("angle")
    return (not reasons, reasons)


def _neutral_assignment(counts: dict[str, int], state_lists) -> tuple[int, ...] | None:
    """Search one state per element with zero weighted sum, or None."""
    elements = list(counts)
    total = 1
    for el in elements:
        total *= max(len(state_lists[el]), 1)
        if not state_lists[el]:
            return None
    if total <= ENUMERATION_CAP:
        for combo in itertools.product(*(state_lists[el] for el in elements)):
            if sum(counts[el] * st for el, st in zip(elements, combo)) == 0:
                return combo
        return None
    # Meet in the middle: split elements, index left sums, scan right sums.
    half = len(elements) // 2
    left, right = elements[:half], elements[half:]
    left_sums: dict[int, tuple[int, ...]] = {}
    for combo in itertools.product(*(state_lists[el] for el in left)):
        left_sums.setdefault(
            sum(counts[el] * st for el, st in zip(left, combo)), combo
        )
    for combo in itertools.product(*(state_lists[el] for el in right)):
        rsum = sum(counts[el] * st for el, st in zip(right, combo))
        if -rsum in left_sums:
            return left_sums[-rsum] + combo
    return None


def find_oxidation_assignment(
    c: Composition, table: OxidationTable
) -> dict[str, int] | None:
    """Charge-neutral oxidation assignment over the reduced composition."""
    counts = c.reduced()
    for el in counts:
        if el not in table.states:
            raise ConfigurationError(f"element {el} absent from oxidation table")
    combo = _neutral_assignment(counts, table.states)
    if combo is None:
        return None
    return dict(zip(counts, combo))


def check_chemical(c: Composition, table: OxidationTable) -> bool:
    return find_oxidation_assignment(c, table) is not None


def check_composition_match(generated: Composition, target: Composition) -> bool:
    return reduced_formula(generated) == reduced_formula(target)


def check_spacegroup_match(
    s: CrystalStructure, target: int, tol: float = 1e-3
) -> bool:
    """True iff the detected space-group number equals ``target``.

    Detection failure counts as a mismatch (conservative), never an exception.
    """
    if not 1 <= target <= 230:
        raise ValueError(f"target space group {target} outside [1, 230]")
    from . import symmetry

    try:
        result = symmetry.detect_spacegroup(s, tol=tol)
    except Exception:
        return False
    return result.number == target


def build_report(
    s: CrystalStructure | None,
    target: Composition | None,
    table: OxidationTable,
    thresholds: ValidityThresholds = ValidityThresholds(),
    spacegroup_target: int | None = None,
) -> ValidityReport:
    """Full validity report for one structure; ``s=None`` means unparseable."""
    if s is None:
        return ValidityReport(False, False, False, None,
                              ("parse", "structural", "chemical", "composition"))
    structural, reasons = check_structural(s, thresholds)
    chemical = check_chemical(s.composition(), table)
    comp_ok = target is None or check_composition_match(s.composition(), target)
    sg_ok = None
    if spacegroup_target is not None:
        sg_ok = check_spacegroup_match(s, spacegroup_target)
    failed = list(reasons)
    if not chemical:
        failed.append("chemical")
    if not comp_ok:
        failed.append("composition")
    if sg_ok is False:
        failed.append("spacegroup")
    return ValidityReport(structural, chemical, comp_ok, sg_ok, tuple(failed))
