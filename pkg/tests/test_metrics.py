import math
import random

import numpy as np
import pytest

from crysalign.metrics import (
    MatchConfig,
    MetricReport,
    MetricValue,
    aggregate,
    cluster_indices,
    is_novel,
    novelty,
    structures_match,
    sun_ratio,
    uniqueness,
)
from crysalign.structcore import CrystalStructure, Lattice, Site

from conftest import make_structure


def shifted(s, delta):
    sites = tuple(
        Site(site.element,
             tuple((c + d) % 1.0 for c, d in zip(site.frac_coords, delta)))
        for site in s.sites)
    return CrystalStructure(s.lattice, sites)


def rescaled(s, factor):
    lat = s.lattice
    return CrystalStructure(
        Lattice(lat.a * factor, lat.b * factor, lat.c * factor,
                lat.alpha, lat.beta, lat.gamma), s.sites)


def random_structure(rng):
    n = rng.randint(1, 4)
    elements = ["Na", "Cl", "Ca", "O", "Ti"]
    return make_structure(
        (rng.uniform(3, 9), rng.uniform(3, 9), rng.uniform(3, 9),
         rng.uniform(75, 105), rng.uniform(75, 105), rng.uniform(75, 105)),
        [(rng.choice(elements),
          (rng.random(), rng.random(), rng.random())) for _ in range(n)])


class TestStructuresMatch:
    def test_reflexive(self, rocksalt):
        assert structures_match(rocksalt, rocksalt)

    def test_symmetric_on_random_pairs(self):
        rng = random.Random(2)
        for _ in range(30):
            a, b = random_structure(rng), random_structure(rng)
            assert structures_match(a, b) == structures_match(b, a)

    def test_rescale_differs(self, rocksalt):
        assert not structures_match(rocksalt, rescaled(rocksalt, 2.0))

    def test_translation_invariant(self, rocksalt):
        assert structures_match(rocksalt, shifted(rocksalt, (0.25, 0.25, 0.25)))

    def test_site_permutation_invariant(self, rocksalt):
        permuted = CrystalStructure(rocksalt.lattice, rocksalt.sites[::-1])
        assert structures_match(rocksalt, permuted)

    def test_small_perturbation_matches(self, cscl):
        nudged = make_structure(
            (4.11, 4.11, 4.11, 90, 90, 90),
            [("Cs", (0.005, 0.0, 0.0)), ("Cl", (0.5, 0.5, 0.5))])
        assert structures_match(cscl, nudged)

    def test_large_perturbation_differs(self, cscl):
        moved = make_structure(
            (4.11, 4.11, 4.11, 90, 90, 90),
            [("Cs", (0.2, 0.0, 0.0)), ("Cl", (0.5, 0.5, 0.5))])
        assert not structures_match(cscl, moved)

    def test_different_formulas_differ(self, cscl, rocksalt):
        assert not structures_match(cscl, rocksalt)

    def test_element_identity_matters(self, cscl):
        swapped = make_structure(
            (4.11, 4.11, 4.11, 90, 90, 90),
            [("Cl", (0.0, 0.0, 0.0)), ("Cs", (0.5, 0.5, 0.5))])
        # Same composition and geometry; Cl now on the corner site.
        assert structures_match(cscl, swapped) == structures_match(swapped, cscl)


class TestUniqueness:
    def test_two_identical_pairs(self, cscl, rocksalt):
        batch = [cscl, shifted(cscl, (0.1, 0.1, 0.1)),
                 rocksalt, shifted(rocksalt, (0.25, 0.0, 0.0))]
        assert uniqueness(batch) == pytest.approx(0.5)

    def test_all_distinct(self, cscl, rocksalt, diamond):
        assert uniqueness([cscl, rocksalt, diamond]) == pytest.approx(1.0)

    def test_all_identical(self, cscl):
        assert uniqueness([cscl] * 5) == pytest.approx(1 / 5)

    def test_batch_order_invariant(self, cscl, rocksalt, diamond):
        batch = [cscl, rocksalt, diamond, shifted(cscl, (0.3, 0.0, 0.0))]
        for perm in ([0, 1, 2, 3], [3, 2, 1, 0], [1, 3, 0, 2]):
            assert uniqueness([batch[i] for i in perm]) == pytest.approx(0.75)

    def test_duplicate_never_increases_clusters(self, cscl, rocksalt):
        base = [cscl, rocksalt]
        more = base + [cscl]
        n_base = len(set(cluster_indices(base)))
        n_more = len(set(cluster_indices(more)))
        assert n_more == n_base


class TestNovelty:
    def test_subset_of_reference(self, cscl, rocksalt):
        assert novelty([cscl, rocksalt], [cscl, rocksalt]) == 0.0

    def test_disjoint_compositions(self, cscl, diamond, rocksalt):
        assert novelty([cscl, diamond], [rocksalt]) == 1.0

    def test_half_in_reference(self, cscl, rocksalt):
        assert novelty([cscl, rocksalt], [rocksalt]) == pytest.approx(0.5)

    def test_is_novel_prunes_by_formula(self, cscl, rocksalt):
        assert is_novel(cscl, [rocksalt])
        assert not is_novel(cscl, [shifted(cscl, (0.1, 0.2, 0.3))])


class TestSun:
    def test_duplicates_of_one_novel_stable(self, cscl, rocksalt):
        batch = [cscl, shifted(cscl, (0.1, 0.0, 0.0)), shifted(cscl, (0.2, 0.0, 0.0))]
        got = sun_ratio(batch, [0.0, 0.0, 0.0], [rocksalt])
        assert got == pytest.approx(1 / 3)

    def test_none_stable(self, cscl, rocksalt):
        assert sun_ratio([cscl], [0.5], [rocksalt]) == 0.0

    def test_missing_e_hull_not_stable(self, cscl, rocksalt):
        assert sun_ratio([cscl], [None], [rocksalt]) == 0.0

    def test_constructed_counts(self, cscl, rocksalt, diamond):
        # diamond duplicated (one representative), cscl unstable,
        # rocksalt in the reference: exactly one qualifying structure.
        batch = [diamond, shifted(diamond, (0.25, 0.25, 0.25)), cscl, rocksalt]
        got = sun_ratio(batch, [0.0, 0.0, 0.1, 0.0], [rocksalt])
        assert got == pytest.approx(1 / 4)

    def test_bounded_by_component_rates(self, cscl, rocksalt, diamond):
        rng = random.Random(7)
        pool = [cscl, rocksalt, diamond,
                shifted(cscl, (0.1, 0.1, 0.1)), random_structure(rng)]
        reference = [rocksalt]
        for _ in range(100):
            batch = [rng.choice(pool) for _ in range(rng.randint(1, 6))]
            e_hulls = [rng.choice([0.0, 0.02, None]) for _ in batch]
            stable_rate = sum(
                1 for e in e_hulls if e is not None and e < 0.016) / len(batch)
            s = sun_ratio(batch, e_hulls, reference)
            assert s <= uniqueness(batch) + 1e-12
            assert s <= novelty(batch, reference) + 1e-12
            assert s <= stable_rate + 1e-12


class TestAggregate:
    def test_boolean_proportion(self):
        values = [True] * 5000 + [False] * 5000
        m = aggregate(values)
        assert m.value == pytest.approx(0.5)
        assert m.standard_error == pytest.approx(0.005, abs=1e-12)

    def test_constant_values(self):
        m = aggregate([2.0, 2.0, 2.0])
        assert m.value == 2.0 and m.standard_error == 0.0

    def test_single_value_low_count(self):
        m = aggregate([1.5])
        assert m.standard_error == 0.0 and m.low_count

    def test_matches_brute_force(self):
        rng = random.Random(13)
        values = [rng.uniform(-2, 5) for _ in range(40)]
        m = aggregate(values)
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
        assert m.value == pytest.approx(mean, abs=1e-12)
        assert m.standard_error == \
            pytest.approx(math.sqrt(var / len(values)), abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])


class TestReport:
    def test_csv_and_markdown(self):
        report = MetricReport(entries=(
            MetricValue("uniqueness", 0.75, 0.05, 4, False),
            MetricValue("novelty", 1.0, 0.0, 4, False)))
        csv_text = report.to_csv()
        assert csv_text.splitlines()[0] == "metric,value,standard_error,count"
        assert "uniqueness" in csv_text
        md = report.to_markdown()
        assert "|" in md and "novelty" in md


class TestMatchConfig:
    def test_nonpositive_tolerance_rejected(self):
        with pytest.raises(ValueError):
            MatchConfig(length_tol=0.0)
