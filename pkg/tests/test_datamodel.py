import random
from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from secanon import she
from secanon.datamodel import (
    Codebook, Column, PlainTable, Schema, decrypt_table, encode_hierarchy, encrypt_table, load_csv,
    load_hierarchy, round_numeric,
)
from secanon.errors import ConfigError, ParseError, UnknownCategoryValue

from conftest import DATA, TABLE1


@pytest.mark.parametrize("x,expected", [
    (2.4, 2), (Decimal("2.5"), 3), (Decimal("-2.5"), -3), ("0.5", 1), ("-0.49", 0), (Fraction(7, 2), 4), (3, 3),
])
def test_round_numeric(x, expected):
    assert round_numeric(x) == expected


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), Decimal("NaN"), "inf", "abc"])
def test_round_rejects_nonfinite(bad):
    with pytest.raises(ValueError):
        round_numeric(bad)


def test_two_level_codes():
    h = encode_hierarchy({"label": "r", "children": [{"label": "x", "children": ["a", "b"]},
                                                      {"label": "y", "children": ["c", "d"]}]}, 100)
    assert h.codes_at(0) == [0, 10, 100, 110]
    assert h.codes_at(1) == [5, 105]
    assert [h.leaf_code(c) for c in "abcd"] == [0, 10, 100, 110]


def test_single_leaf():
    h = encode_hierarchy({"label": "only"}, 50)
    assert h.height == 0
    assert h.leaf_code("only") == 0 == h.root.code


def test_duplicate_leaf():
    with pytest.raises(ConfigError):
        encode_hierarchy({"label": "r", "children": ["a", {"label": "b", "children": ["a"]}]})


def test_ragged_padding():
    h = encode_hierarchy({"label": "r", "children": ["a", {"label": "b", "children": ["b1", "b2"]}]}, 100)
    assert h.height == 2
    # "a" gets a single-child chain, so it has a level-1 ancestor carrying the same code
    assert h.ancestor(h.leaf_code("a"), 1) == h.leaf_code("a")
    assert h.node_by_label("a").level == 0


def random_tree(rng, depth, fanout, counter):
    if depth == 0 or rng.random() < 0.15:
        counter[0] += 1
        return {"label": f"L{counter[0]}"}
    return {"label": f"N{rng.random()}", "children": [random_tree(rng, depth - 1, fanout, counter)
                                                     for _ in range(rng.randint(1, fanout))]}


@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 4), st.integers(1, 500))
@settings(max_examples=80, deadline=None)
def test_far_apart_properties(seed, depth, fanout, gap):
    h = encode_hierarchy(random_tree(random.Random(seed), depth, fanout, [0]), gap)
    leaves = h.codes_at(0)
    assert leaves == sorted(set(leaves))
    for level in range(1, h.height + 1):
        nodes = h.codes_at(level)
        # distinct level-l nodes are at least G apart
        assert all(b - a >= gap for a, b in zip(nodes, nodes[1:]))
        for leaf in leaves:
            # nearest level-l node is the true ancestor
            assert h.nearest(leaf, level) == h.ancestor(leaf, level)
    for lower in range(h.height + 1):
        for n in h.nodes_at(lower):
            if n.children:
                assert n.code == Fraction(n.lo + n.hi, 2)
            # lifting an intermediate node by distance also lands on its ancestor
            for level in range(lower, h.height + 1):
                up = n
                while up.level < level:
                    up = up.parent
                assert h.nearest(n.code, level) == up.code


def test_deep_tree_lift():
    tree = {"label": "r", "children": [
        {"label": "x", "children": [{"label": f"x{i}", "children": [f"x{i}{j}" for j in range(6)]} for i in range(3)]},
        {"label": "y", "children": [{"label": "y0", "children": ["y00"]}]},
    ]}
    h = encode_hierarchy(tree, 20)
    for leaf in h.codes_at(0):
        assert [h.nearest(leaf, lv) for lv in range(4)] == [h.ancestor(leaf, lv) for lv in range(4)]


def test_encrypt_roundtrip(kp, table1):
    ct = encrypt_table(kp.pk, table1)
    assert ct.key_id == kp.pk.key_id
    assert decrypt_table(kp.sk, ct).rows == table1.rows
    one = PlainTable(Schema([Column("x")]), [[5]])
    assert decrypt_table(kp.sk, encrypt_table(kp.pk, one)).rows == [[5]]
    empty = encrypt_table(kp.pk, PlainTable(Schema([Column("x")]), []))
    assert empty.n_rows == 0


def test_load_table1(table1, gender):
    assert table1.n_rows == 7 and table1.d == 4
    assert table1.column("Age") == [r[1] for r in TABLE1]
    assert table1.column("ZIP") == [r[3] for r in TABLE1]
    assert set(table1.column("Gender")) == {gender.leaf_code("Male")}
    assert [table1.codebook.decode("Name", i) for i in table1.column("Name")] == [r[0] for r in TABLE1]


def test_load_errors(tmp_path, gender):
    schema = Schema([Column("Age"), Column("Gender", "categorical", "gender")], {"gender": gender})
    bad = tmp_path / "bad.csv"
    bad.write_text("Age,Gender\n18,Male\n19,Robot\n")
    with pytest.raises(UnknownCategoryValue):
        load_csv(bad, schema)
    bad.write_text("Age,Gender\n18,Male\nold,Male\n")
    with pytest.raises(ParseError) as info:
        load_csv(bad, schema)
    assert info.value.row == 3 and info.value.col == "Age"
    bad.write_text("Years,Gender\n18,Male\n")
    with pytest.raises(ParseError):
        load_csv(bad, schema)
    with pytest.raises(ConfigError):
        Schema([Column("Gender", "categorical", "missing")], {})


def test_quoted_csv(tmp_path):
    p = tmp_path / "q.csv"
    p.write_text('name,v\n"Smith, J",2.5\n"O""Neil",-2.5\n', encoding="utf-8")
    t = load_csv(p, Schema([Column("name", "text"), Column("v")]))
    assert t.column("v") == [3, -3]
    assert t.codebook.entries["name"] == ["Smith, J", 'O"Neil']


def test_load_hierarchy_file():
    h = load_hierarchy(DATA / "gender.yaml")
    assert h.height == 1 and sorted(h.leaf_labels) == ["Female", "Male"]


def test_dummy_nodes():
    tree = {"label": "r", "children": [{"label": "x", "children": ["a", "b"]}, {"label": "y", "children": ["c"]}]}
    h = encode_hierarchy(tree, 100, dummy_nodes=3, rng=random.Random(1))
    assert sorted(h.leaf_labels) == ["a", "b", "c"]
    assert len(h.codes_at(0)) == 6
    with pytest.raises(UnknownCategoryValue):
        h.leaf_code("__dummy0")
