import math
import random

import numpy as np
import pytest

from crysalign.energetics import (
    ConfigurationError,
    CoverageError,
    PairPotentialBackend,
    PhaseEntry,
    STABILITY_THRESHOLD,
    energy_above_hull,
    energy_per_atom,
    formation_energy,
    is_stable,
    load_reference_phases,
    relax_positions,
)
from crysalign.structcore import Composition, CrystalStructure, Lattice, Site

from conftest import make_structure


@pytest.fixture(scope="module")
def backend():
    return PairPotentialBackend.load_default()


def isolated_pair(backend, element, r):
    """Two atoms far from all periodic images: energy is one LJ contact."""
    box = 4 * backend.cutoff
    return make_structure(
        (box, box, box, 90, 90, 90),
        [(element, (0.0, 0.0, 0.0)), (element, (r / box, 0.0, 0.0))])


def lj_pair_energy(backend, element, r):
    eps, sigma = backend.pair_parameters(element, element)
    phi = lambda d: 4 * eps * ((sigma / d) ** 12 - (sigma / d) ** 6)
    return phi(r) - phi(backend.cutoff)


class TestPairEnergy:
    def test_dimer_energy_exact(self, backend):
        r = 3.1
        s = isolated_pair(backend, "Na", r)
        expected = lj_pair_energy(backend, "Na", r) / 2
        assert energy_per_atom(backend, s) == pytest.approx(expected, rel=1e-12)

    def test_dimer_minimum_location(self, backend):
        eps, sigma = backend.pair_parameters("Na", "Na")
        r_star = 2 ** (1 / 6) * sigma
        e_star = energy_per_atom(backend, isolated_pair(backend, "Na", r_star))
        for dr in (-0.01, 0.01):
            assert energy_per_atom(
                backend, isolated_pair(backend, "Na", r_star + dr)) > e_star

    def test_beyond_cutoff_is_zero(self, backend):
        s = isolated_pair(backend, "Na", backend.cutoff * 1.5)
        assert energy_per_atom(backend, s) == 0.0

    def test_lorentz_berthelot_mixing(self, backend):
        ea, sa = backend.pair_parameters("Na", "Na")
        eb, sb = backend.pair_parameters("Cl", "Cl")
        em, sm = backend.pair_parameters("Na", "Cl")
        assert em == pytest.approx(math.sqrt(ea * eb), rel=1e-12)
        assert sm == pytest.approx((sa + sb) / 2, rel=1e-12)

    def test_supercell_invariance(self, backend, rocksalt):
        e1 = energy_per_atom(backend, rocksalt)
        doubled = make_structure(
            (11.28, 5.64, 5.64, 90, 90, 90),
            [(site.element,
              ((site.frac_coords[0] + sx) / 2,
               site.frac_coords[1], site.frac_coords[2]))
             for sx in (0, 1) for site in rocksalt.sites])
        e2 = energy_per_atom(backend, doubled)
        assert e2 == pytest.approx(e1, abs=1e-12)

    def test_unknown_element_rejected(self, backend):
        s = make_structure((8, 8, 8, 90, 90, 90), [("Xe", (0, 0, 0))])
        with pytest.raises(ConfigurationError):
            energy_per_atom(backend, s)


class TestForces:
    def test_matches_finite_difference(self, backend):
        rng = random.Random(3)
        coords = [(rng.random(), rng.random(), rng.random())
                  for _ in range(4)]
        s = make_structure((6.5, 6.5, 6.5, 90, 90, 90),
                           [("Na" if i % 2 else "Cl", c)
                            for i, c in enumerate(coords)])
        forces = backend.forces(s)
        n = s.num_sites
        h = 1e-6
        cell = 6.5
        for i in range(n):
            for k in range(3):
                def shifted(delta):
                    sites = []
                    for j, site in enumerate(s.sites):
                        fc = list(site.frac_coords)
                        if j == i:
                            fc[k] += delta / cell
                        sites.append((site.element, tuple(fc)))
                    return make_structure((6.5, 6.5, 6.5, 90, 90, 90), sites)
                de = (energy_per_atom(backend, shifted(h)) -
                      energy_per_atom(backend, shifted(-h))) * n / (2 * h)
                assert forces[i][k] == pytest.approx(-de, rel=1e-4, abs=1e-7)


class TestRelax:
    def test_dimer_relaxes_to_lj_minimum(self, backend):
        eps, sigma = backend.pair_parameters("Na", "Na")
        s = isolated_pair(backend, "Na", 2 ** (1 / 6) * sigma + 0.3)
        relaxed = relax_positions(backend, s, max_steps=500, force_tol=1e-6)
        box = 4 * backend.cutoff
        r = abs(relaxed.sites[1].frac_coords[0] -
                relaxed.sites[0].frac_coords[0]) * box
        assert r == pytest.approx(2 ** (1 / 6) * sigma, abs=1e-4)

    def test_energy_never_increases(self, backend):
        s = isolated_pair(backend, "Na", 3.4)
        relaxed = relax_positions(backend, s, max_steps=50)
        assert energy_per_atom(backend, relaxed) <= \
            energy_per_atom(backend, s) + 1e-12


class TestFormationEnergy:
    def test_subtracts_elemental_references(self, backend, rocksalt):
        e = energy_per_atom(backend, rocksalt)
        refs = backend.reference_energies
        expected = e - (refs["Na"] + refs["Cl"]) / 2
        assert formation_energy(backend, rocksalt) == \
            pytest.approx(expected, rel=1e-12)


def entry(formula, e):
    return PhaseEntry(Composition.from_formula(formula), e)


class TestHull:
    def test_on_hull_element(self):
        refs = [entry("Na", 0.0), entry("Cl", 0.0), entry("NaCl", -2.0)]
        assert energy_above_hull(entry("Na", 0.0), refs).e_hull == \
            pytest.approx(0.0, abs=1e-12)

    def test_above_hull_binary(self):
        refs = [entry("Na", 0.0), entry("Cl", 0.0), entry("NaCl", -2.0)]
        res = energy_above_hull(entry("NaCl", -1.9), refs)
        assert res.e_hull == pytest.approx(0.1, abs=1e-9)

    def test_decomposition_weights(self):
        refs = [entry("Na", 0.0), entry("Cl", 0.0), entry("NaCl", -2.0)]
        res = energy_above_hull(entry("Na3Cl", -0.5), refs)
        # x_Cl = 1/4 decomposes into 1/2 NaCl + 1/2 Na.
        labels = {reduced(r): w for r, w in res.decomposition}
        assert labels == pytest.approx({"ClNa": 0.5, "Na": 0.5})
        assert res.e_hull == pytest.approx(-0.5 - (-1.0), abs=1e-9)

    def test_below_hull_negative(self):
        refs = [entry("Na", 0.0), entry("Cl", 0.0)]
        res = energy_above_hull(entry("NaCl", -1.0), refs)
        assert res.e_hull == pytest.approx(-1.0, abs=1e-12)

    def test_missing_element_coverage(self):
        refs = [entry("Na", 0.0)]
        with pytest.raises(CoverageError):
            energy_above_hull(entry("NaCl", -1.0), refs)

    def test_hull_independent_of_irrelevant_phases(self):
        refs = [entry("Na", 0.0), entry("Cl", 0.0), entry("NaCl", -2.0)]
        extra = refs + [entry("FeO", -5.0), entry("Fe", 0.0)]
        a = energy_above_hull(entry("NaCl", -1.5), refs).e_hull
        b = energy_above_hull(entry("NaCl", -1.5), extra).e_hull
        assert a == pytest.approx(b, abs=1e-12)


def reduced(r):
    from crysalign.structcore import reduced_formula
    return reduced_formula(r.composition)


class TestStability:
    def test_threshold_is_strict(self):
        assert is_stable(STABILITY_THRESHOLD - 1e-9)
        assert not is_stable(STABILITY_THRESHOLD)
        assert not is_stable(STABILITY_THRESHOLD + 1e-9)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            is_stable(float("nan"))


class TestData:
    def test_reference_phases_load(self):
        phases = load_reference_phases()
        assert len(phases) >= 40
        elementals = [p for p in phases if len(p.composition.counts) == 1]
        assert all(p.energy_per_atom == 0.0 for p in elementals)

    def test_cutoff_covers_largest_sigma(self, backend):
        sigmas = [backend.pair_parameters(el, el)[1]
                  for el in ("Na", "Cl", "Cs", "Ca", "O")]
        assert backend.cutoff >= 2 * max(sigmas)
