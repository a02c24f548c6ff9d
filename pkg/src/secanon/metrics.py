"""Risk and utility metrics computed from equivalence classes and generalization levels."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .datamodel import Hierarchy


@dataclass(frozen=True)
class EquivalenceClasses:
    classes: tuple

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.classes]

    @property
    def n_rows(self) -> int:
        return sum(self.sizes)

    def __len__(self):
        return len(self.classes)


def equivalence_classes(rows: Sequence[Sequence], quasi: Sequence[int], suppressed=()) -> EquivalenceClasses:
    drop = set(suppressed)
    groups: dict[tuple, list[int]] = defaultdict(list)
    for i, row in enumerate(rows):
        if i not in drop:
            groups[tuple(row[a] for a in quasi)].append(i)
    return EquivalenceClasses(tuple(tuple(g) for g in groups.values()))


def aecs(ec: EquivalenceClasses) -> Fraction:
    if not len(ec):
        return Fraction(0)
    return Fraction(ec.n_rows, len(ec))


def discernibility(ec: EquivalenceClasses, suppressed_count: int = 0, n: int | None = None) -> int:
    n = ec.n_rows + suppressed_count if n is None else n
    return sum(s * s for s in ec.sizes) + n * suppressed_count


def reid_risk(ec: EquivalenceClasses) -> Fraction:
    """Prosecutor risk: one over the smallest class size."""
    if not len(ec):
        return Fraction(0)
    return Fraction(1, min(ec.sizes))


def _level(h: Hierarchy, code) -> int:
    return h.locate(code).level


def cat_precision(rows: Sequence[Sequence], hierarchies: Mapping[int, Hierarchy], suppressed=()) -> Fraction:
    """``1 - mean(level / height)`` over categorical cells; 1 when there are none."""
    drop = set(suppressed)
    total, cells = Fraction(0), 0
    for i, row in enumerate(rows):
        if i in drop:
            continue
        for col, h in hierarchies.items():
            cells += 1
            if h.height:
                total += Fraction(_level(h, row[col]), h.height)
    return 1 - total / cells if cells else Fraction(1)


def generalized_loss(rows: Sequence[Sequence], hierarchies: Mapping[int, Hierarchy],
                     numeric_domains: Mapping[int, tuple] | None = None,
                     original: Sequence[Sequence] | None = None, ec: EquivalenceClasses | None = None,
                     suppressed=()) -> Fraction:
    """Mean information loss per cell, in [0, 1].

    Categorical cells cost ``(leaves_covered - 1) / (total_leaves - 1)``.
    Numeric cells cost the width of their class's original value range over
    the column's domain width; this needs ``original`` and ``ec``.
    """
    drop = set(suppressed)
    numeric_domains = dict(numeric_domains or {})
    costs: list[Fraction] = []
    for i, row in enumerate(rows):
        if i in drop:
            continue
        for col, h in hierarchies.items():
            leaves = h.locate(row[col]).leaf_count
            costs.append(Fraction(leaves - 1, h.total_leaves - 1) if h.total_leaves > 1 else Fraction(0))
    if numeric_domains:
        if original is None or ec is None:
            raise ValueError("numeric loss needs the original rows and the equivalence classes")
        for cls in ec.classes:
            for col, (lo, hi) in numeric_domains.items():
                vals = [original[i][col] for i in cls]
                width = Fraction(hi) - Fraction(lo)
                cost = Fraction(max(vals) - min(vals)) / width if width else Fraction(0)
                costs.extend([cost] * len(cls))
    return sum(costs, Fraction(0)) / len(costs) if costs else Fraction(0)


def population_uniques(ec: EquivalenceClasses, population_size: int) -> dict:
    """Experimental: sample uniques and a naive estimate of population uniques.

    With sampling fraction ``f = n / population``, each class's population
    size is estimated as ``size / f`` and each sample-unique class is taken
    to be population-unique with probability ``f``. Crude; only meant as a
    class-size summary.
    """
    n = ec.n_rows
    if population_size < n or population_size <= 0:
        raise ValueError("population must be at least the sample size")
    f = Fraction(n, population_size)
    uniques = sum(1 for s in ec.sizes if s == 1)
    return {
        "sample_uniques": uniques,
        "sampling_fraction": f,
        "estimated_population_uniques": uniques * f,
        "estimated_class_sizes": [s / f for s in ec.sizes],
    }


def report(rows, quasi: Sequence[int], hierarchies: Mapping[int, Hierarchy], suppressed=(),
           n: int | None = None, numeric_domains=None, original=None) -> dict:
    ec = equivalence_classes(rows, quasi, suppressed)
    n = len(rows) if n is None else n
    cat = {c: h for c, h in hierarchies.items() if c in quasi}
    return {
        "classes": len(ec),
        "min_class": min(ec.sizes) if len(ec) else 0,
        "aecs": aecs(ec),
        "discernibility": discernibility(ec, len(set(suppressed)), n),
        "precision": cat_precision(rows, cat, suppressed),
        "gloss": generalized_loss(rows, cat, numeric_domains, original, ec, suppressed),
        "reid_risk": reid_risk(ec),
    }
