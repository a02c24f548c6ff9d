from fractions import Fraction

import pytest

from secanon.datamodel import encode_hierarchy
from secanon.metrics import (
    EquivalenceClasses, aecs, cat_precision, discernibility, equivalence_classes, generalized_loss,
    population_uniques, reid_risk, report,
)

from conftest import TABLE1

TREE = {"label": "r", "children": [{"label": "x", "children": ["a", "b"]}, {"label": "y", "children": ["c", "d"]}]}


def classes(*sizes):
    out, start = [], 0
    for s in sizes:
        out.append(tuple(range(start, start + s)))
        start += s
    return EquivalenceClasses(tuple(out))


def test_table1_classes():
    ec = equivalence_classes(TABLE1, [1, 2, 3])
    assert sorted(ec.sizes) == [1, 2, 2, 2]


def test_trivial_groupings():
    assert equivalence_classes([(1,)] * 5, [0]).sizes == [5]
    assert equivalence_classes([(i,) for i in range(5)], [0]).sizes == [1] * 5
    assert equivalence_classes([(1,), (2,), (1,)], [0], suppressed=[1]).sizes == [2]


@pytest.mark.parametrize("ec,expected", [(classes(4, 3), Fraction(7, 2)), (classes(6), 6), (classes(1, 1, 1), 1)])
def test_aecs(ec, expected):
    assert aecs(ec) == expected


def test_discernibility():
    assert discernibility(classes(4, 3)) == 25
    assert discernibility(classes(1, 1, 1, 1)) == 4
    assert discernibility(classes(4, 2), suppressed_count=1, n=7) == 20 + 7


def test_reid_risk():
    assert reid_risk(classes(1, 5)) == 1
    assert reid_risk(classes(3, 3)) == Fraction(1, 3)
    assert reid_risk(classes(4, 3)) == Fraction(1, 3)


@pytest.fixture(scope="module")
def h():
    return encode_hierarchy(TREE, 100)


def test_precision(h):
    leaves = [[h.leaf_code(x)] for x in "abcd"]
    assert cat_precision(leaves, {0: h}) == 1
    assert cat_precision([[h.root.code]] * 4, {0: h}) == 0
    half = [[h.leaf_code("a")], [h.leaf_code("c")], [h.ancestor(h.leaf_code("a"), 1)], [h.ancestor(h.leaf_code("c"), 1)]]
    assert cat_precision(half, {0: h}) == Fraction(3, 4)


def test_generalized_loss(h):
    assert generalized_loss([[h.leaf_code("a")]], {0: h}) == 0
    assert generalized_loss([[h.root.code]], {0: h}) == 1
    assert generalized_loss([[h.ancestor(h.leaf_code("a"), 1)]], {0: h}) == Fraction(1, 3)


def test_numeric_loss():
    original = [[0], [10], [5], [5]]
    ec = classes(2, 2)
    assert generalized_loss(original, {}, {0: (0, 20)}, original, ec) == Fraction(1, 4)
    with pytest.raises(ValueError):
        generalized_loss(original, {}, {0: (0, 20)})


def test_population_uniques():
    out = population_uniques(classes(1, 1, 2), 40)
    assert out["sample_uniques"] == 2
    assert out["sampling_fraction"] == Fraction(1, 10)
    assert out["estimated_class_sizes"] == [10, 10, 20]
    with pytest.raises(ValueError):
        population_uniques(classes(3), 2)


def test_report_on_table1():
    rows = [list(r) for r in TABLE1]
    rep = report(rows, [1, 3], {})
    assert rep["classes"] == 4 and rep["min_class"] == 1
    assert rep["aecs"] == Fraction(7, 4)
    assert rep["discernibility"] == 4 + 4 + 1 + 4
    assert rep["reid_risk"] == 1
