"""Tables, hierarchies and ingestion.

Categorical values are encoded as integer codes drawn from far-apart ranges
so that "nearest node at level l" (by absolute code distance) is always the
true level-l ancestor of a leaf. Leaves under one level-1 node sit in a
contiguous block with step ``LEAF_STEP``; each sibling subtree is pushed right
just far enough that same-level internal codes stay at least ``G`` apart and
no neighbouring node is closer to a leaf than the leaf's own ancestor.
Internal node codes are the midpoint of their descendants' code range.
"""
from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import yaml

from . import she
from .errors import ConfigError, EmptyDictionary, ParseError, UnknownCategoryValue
from .she import Ciphertext, PublicKey, SecretKey

LEAF_STEP = 10
DEFAULT_GAP = 10_000
KINDS = ("numeric", "categorical", "text")
REDACTED = "*"


def round_numeric(x) -> int:
    """Nearest integer, ties away from zero."""
    if isinstance(x, float) and not math.isfinite(x):
        raise ValueError(f"cannot round non-finite value {x!r}")
    if isinstance(x, Decimal):
        if not x.is_finite():
            raise ValueError(f"cannot round non-finite value {x!r}")
    if isinstance(x, str):
        try:
            x = Decimal(x.strip())
        except InvalidOperation:
            raise ValueError(f"not a number: {x!r}") from None
        if not x.is_finite():
            raise ValueError(f"cannot round non-finite value {x!r}")
    f = Fraction(x)
    sign = -1 if f < 0 else 1
    return sign * math.floor(abs(f) + Fraction(1, 2))


# ---------------------------------------------------------------- hierarchy

@dataclass
class Node:
    label: str
    level: int
    children: list = field(default_factory=list)
    code: int | Fraction = 0
    leaf_count: int = 1
    lo: int | Fraction = 0
    hi: int | Fraction = 0
    parent: "Node | None" = field(default=None, repr=False)
    dummy: bool = False


def _midpoint(lo, hi):
    s = lo + hi
    return s // 2 if isinstance(s, int) and s % 2 == 0 else Fraction(s, 2)


class Hierarchy:
    """Encoded generalization tree. Leaves are level 0, the root is level ``height``."""

    def __init__(self, root: Node, gap: int, name: str = ""):
        self.root = root
        self.gap = gap
        self.name = name
        self.height = root.level
        self._levels: list[list[Node]] = [[] for _ in range(self.height + 1)]
        self._leaves: dict[str, Node] = {}
        self._by_code: list[dict] = [{} for _ in range(self.height + 1)]
        for node in self._walk(root):
            self._levels[node.level].append(node)
            self._by_code[node.level].setdefault(node.code, node)
            if node.level == 0 and not node.dummy:
                self._leaves[node.label] = node
        for lvl in self._levels:
            lvl.sort(key=lambda n: n.code)

    @staticmethod
    def _walk(node):
        stack = [node]
        while stack:
            n = stack.pop()
            yield n
            stack.extend(reversed(n.children))

    @property
    def total_leaves(self) -> int:
        return self.root.leaf_count

    @property
    def leaf_labels(self) -> list[str]:
        return [n.label for n in self._levels[0] if not n.dummy]

    def leaf_code(self, label: str):
        try:
            return self._leaves[label].code
        except KeyError:
            raise UnknownCategoryValue(f"{label!r} is not a leaf of hierarchy {self.name!r}") from None

    def is_leaf_code(self, code) -> bool:
        return code in self._by_code[0]

    def codes_at(self, level: int) -> list:
        return [n.code for n in self._levels[level]]

    def nodes_at(self, level: int) -> list[Node]:
        return list(self._levels[level])

    def node(self, level: int, code) -> Node:
        try:
            return self._by_code[level][code]
        except KeyError:
            raise ValueError(f"no level-{level} node with code {code}") from None

    def ancestor(self, leaf_code, level: int):
        n = self.node(0, leaf_code)
        while n.level < level:
            n = n.parent
        return n.code

    def nearest(self, code, level: int):
        """Code of the level-``level`` node closest to ``code`` (first on ties)."""
        return min(self.codes_at(level), key=lambda c: abs(c - code))

    def lca_level(self, leaf_codes: Iterable) -> int:
        codes = set(leaf_codes)
        for level in range(self.height + 1):
            if len({self.ancestor(c, level) for c in codes}) == 1:
                return level
        return self.height

    def locate(self, code) -> Node:
        """Lowest-level node carrying ``code``."""
        for level in range(self.height + 1):
            if code in self._by_code[level]:
                return self._by_code[level][code]
        raise ValueError(f"code {code} is not a node of hierarchy {self.name!r}")

    def label_of(self, code) -> str:
        return self.locate(code).label

    def node_by_label(self, label: str) -> Node:
        """Lowest-level node with ``label`` (padding chains repeat labels)."""
        for nodes in self._levels:
            for n in nodes:
                if n.label == label and not n.dummy:
                    return n
        raise UnknownCategoryValue(f"{label!r} is not a node of hierarchy {self.name!r}")

    def level_of_label(self, label: str) -> int:
        return self.node_by_label(label).level


def _parse_tree(tree, depth=0, seen=None):
    if seen is None:
        seen = set()
    if isinstance(tree, str):
        tree = {"label": tree}
    if not isinstance(tree, dict) or "label" not in tree:
        raise ConfigError("hierarchy nodes need a 'label'")
    kids = tree.get("children") or []
    node = {"label": str(tree["label"]), "children": [_parse_tree(c, depth + 1, seen) for c in kids]}
    if not kids:
        if node["label"] in seen:
            raise ConfigError(f"duplicate leaf label {node['label']!r}")
        seen.add(node["label"])
    return node


def _depth(t) -> int:
    return 0 if not t["children"] else 1 + max(_depth(c) for c in t["children"])


def _pad(t, height: int) -> Node:
    """Build Node objects, stretching shallow leaves with single-child chains."""
    if not t["children"]:
        node = Node(t["label"], 0)
        for lvl in range(1, height + 1):
            parent = Node(t["label"], lvl, [node])
            node.parent = parent
            node = parent
        return node
    node = Node(t["label"], height, [_pad(c, height - 1) for c in t["children"]])
    for c in node.children:
        c.parent = node
    return node


def _shift(node: Node, t) -> None:
    for n in Hierarchy._walk(node):
        n.code += t
        n.lo += t
        n.hi += t


def _edge(node: Node, level: int, last: bool) -> Node:
    while node.level > level:
        node = node.children[-1 if last else 0]
    return node


def _next_int_above(x):
    return math.floor(x) + 1


def _layout(node: Node, gap: int) -> None:
    """Place ``node``'s subtree with its first leaf at 0.

    Children are laid out independently and then shifted right by the least
    integer that keeps, at every level below ``node``, consecutive codes at
    least ``gap`` apart (leaves: ``LEAF_STEP``) and every leaf strictly
    closer to its own ancestor than to the neighbouring node.
    """
    if node.level == 0:
        node.code = node.lo = node.hi = 0
        node.leaf_count = 1
        return
    prev = None
    for c in node.children:
        _layout(c, gap)
        if prev is not None:
            t = 0
            for h in range(node.level):
                r, q = _edge(prev, h, True), _edge(c, h, False)
                if h == 0:
                    t = max(t, r.code + LEAF_STEP - q.code)
                    continue
                t = max(t, r.code + gap - q.code,
                        _next_int_above(2 * r.hi - r.code - q.code),
                        _next_int_above(r.code + q.code - 2 * q.lo))
            _shift(c, t)
        prev = c
    node.lo = node.children[0].lo
    node.hi = node.children[-1].hi
    node.code = _midpoint(node.lo, node.hi)
    node.leaf_count = sum(c.leaf_count for c in node.children)


def encode_hierarchy(tree, gap: int = DEFAULT_GAP, *, dummy_nodes: int = 0,
                     rng: random.Random | None = None, name: str = "") -> Hierarchy:
    """Encode a ``{label, children}`` tree with far-apart integer codes."""
    if gap < 1:
        raise ConfigError("gap must be positive")
    parsed = _parse_tree(tree)
    height = _depth(parsed)
    if dummy_nodes and height >= 1:
        rng = rng or random.Random(0)
        for i in range(dummy_nodes):
            pos = rng.randint(0, len(parsed["children"]))
            parsed["children"].insert(pos, {"label": f"__dummy{i}", "children": []})
        height = _depth(parsed)
    root = _pad(parsed, height)
    for n in Hierarchy._walk(root):
        if n.label.startswith("__dummy"):
            n.dummy = True
    _layout(root, gap)
    return Hierarchy(root, gap, name)


def load_hierarchy(path, gap: int = DEFAULT_GAP, dummy_nodes: int = 0, seed: int = 0) -> Hierarchy:
    p = Path(path)
    try:
        tree = yaml.safe_load(p.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read hierarchy {path}: {exc}") from None
    return encode_hierarchy(tree, gap, dummy_nodes=dummy_nodes, rng=random.Random(seed), name=p.stem)


# -------------------------------------------------------------------- tables

@dataclass(frozen=True)
class Column:
    name: str
    kind: str = "numeric"
    hierarchy_ref: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"column {self.name!r}: unknown kind {self.kind!r}")


@dataclass
class Schema:
    columns: list
    hierarchies: dict = field(default_factory=dict)

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate column names")
        for c in self.columns:
            if c.kind == "categorical":
                if not c.hierarchy_ref:
                    raise ConfigError(f"categorical column {c.name!r} needs a hierarchy")
                if c.hierarchy_ref not in self.hierarchies:
                    raise ConfigError(f"hierarchy {c.hierarchy_ref!r} for column {c.name!r} is not loaded")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def d(self) -> int:
        return len(self.columns)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigError(f"unknown column {name!r}") from None

    def column(self, name: str) -> Column:
        return self.columns[self.index(name)]

    def hierarchy(self, name: str) -> Hierarchy | None:
        col = self.column(name)
        return self.hierarchies.get(col.hierarchy_ref) if col.hierarchy_ref else None

    def select(self, names: Sequence[str]) -> "Schema":
        return Schema([self.column(n) for n in names], self.hierarchies)


class Codebook:
    """Data-owner mapping from text labels to integer indices, per column."""

    def __init__(self, entries: dict | None = None):
        self.entries: dict[str, list[str]] = {k: list(v) for k, v in (entries or {}).items()}

    def encode(self, column: str, label: str) -> int:
        labels = self.entries.setdefault(column, [])
        if label not in labels:
            labels.append(label)
        return labels.index(label)

    def decode(self, column: str, index) -> str:
        labels = self.entries.get(column, [])
        if int(index) != index or not 0 <= index < len(labels):
            return REDACTED
        return labels[int(index)]

    def to_json(self) -> str:
        return json.dumps(self.entries, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Codebook":
        return cls(json.loads(text))


@dataclass
class PlainTable:
    schema: Schema
    rows: list
    codebook: Codebook | None = field(default=None, repr=False)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def d(self) -> int:
        return self.schema.d

    def column(self, name_or_index) -> list:
        j = name_or_index if isinstance(name_or_index, int) else self.schema.index(name_or_index)
        return [r[j] for r in self.rows]

    def select(self, names: Sequence[str]) -> "PlainTable":
        idx = [self.schema.index(n) for n in names]
        return PlainTable(self.schema.select(names), [[r[j] for j in idx] for r in self.rows], self.codebook)


@dataclass
class CipherTable:
    schema: Schema
    cells: list
    key_id: int | None = None

    def __post_init__(self):
        for row in self.cells:
            if len(row) != self.schema.d:
                raise ConfigError("row width does not match schema")
            for c in row:
                if self.key_id is None:
                    self.key_id = c.key_id
                elif c.key_id != self.key_id:
                    raise ConfigError("cells encrypted under different keys")

    @property
    def n_rows(self) -> int:
        return len(self.cells)

    @property
    def d(self) -> int:
        return self.schema.d

    def column(self, name_or_index) -> list:
        j = name_or_index if isinstance(name_or_index, int) else self.schema.index(name_or_index)
        return [r[j] for r in self.cells]

    def select(self, names: Sequence[str]) -> "CipherTable":
        idx = [self.schema.index(n) for n in names]
        return CipherTable(self.schema.select(names), [[r[j] for j in idx] for r in self.cells], self.key_id)


def encrypt_table(pk: PublicKey, t: PlainTable) -> CipherTable:
    cells = [[she.enc(pk, v) for v in row] for row in t.rows]
    return CipherTable(t.schema, cells, pk.key_id if not cells else None)


def decrypt_table(sk: SecretKey, t: CipherTable) -> PlainTable:
    return PlainTable(t.schema, [[she.dec(sk, c) for c in row] for row in t.cells])


@dataclass
class EncryptedDictionary:
    entries: tuple
    declared_kind: str = "text"

    def __len__(self):
        return len(self.entries)


def encrypt_dictionary(pk: PublicKey, values: Sequence, declared_kind: str = "text") -> EncryptedDictionary:
    if not values:
        raise EmptyDictionary("dictionary has no entries")
    return EncryptedDictionary(tuple(she.enc(pk, v) for v in values), declared_kind)


def _parse_cell(col: Column, raw: str, row_no: int, schema: Schema, codebook: Codebook):
    if col.kind == "numeric":
        try:
            return round_numeric(raw)
        except ValueError:
            raise ParseError(f"not a number: {raw!r}", row_no, col.name) from None
    if col.kind == "categorical":
        h = schema.hierarchies[col.hierarchy_ref]
        try:
            return h.leaf_code(raw)
        except UnknownCategoryValue as exc:
            raise UnknownCategoryValue(f"{exc} (row {row_no}, column {col.name!r})") from None
    return codebook.encode(col.name, raw)


def load_csv(path, schema: Schema, codebook: Codebook | None = None) -> PlainTable:
    """Read a UTF-8 CSV with a header row matching ``schema`` (extra columns are ignored)."""
    codebook = codebook if codebook is not None else Codebook()
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        except csv.Error as exc:
            raise ParseError(str(exc), 1) from None
        header = [h.strip() for h in header]
        missing = [n for n in schema.names if n not in header]
        if missing:
            raise ParseError(f"header lacks columns {missing}", 1)
        pos = [header.index(n) for n in schema.names]
        rows = []
        try:
            for row_no, raw in enumerate(reader, start=2):
                if not raw:
                    continue
                if len(raw) != len(header):
                    raise ParseError(f"expected {len(header)} fields, got {len(raw)}", row_no)
                rows.append([_parse_cell(c, raw[p].strip(), row_no, schema, codebook)
                             for c, p in zip(schema.columns, pos)])
        except csv.Error as exc:
            raise ParseError(str(exc), reader.line_num) from None
    return PlainTable(schema, rows, codebook)


def format_value(schema: Schema, j: int, value, codebook: Codebook | None = None,
                 rounding: str = "none") -> str:
    col = schema.columns[j]
    if col.kind == "categorical":
        return schema.hierarchies[col.hierarchy_ref].label_of(value)
    if col.kind == "text":
        return codebook.decode(col.name, value) if codebook else str(value)
    if rounding == "nearest-integer":
        return str(round_numeric(value))
    f = Fraction(value)
    if f.denominator == 1:
        return str(f.numerator)
    return str(f.numerator / f.denominator) if rounding == "float" else f"{f.numerator}/{f.denominator}"


def write_csv(path, table: PlainTable, codebook: Codebook | None = None, rounding: str = "none",
              suppressed: Iterable[int] = ()):
    drop = set(suppressed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(table.schema.names)
        for i, row in enumerate(table.rows):
            if i in drop:
                continue
            w.writerow([format_value(table.schema, j, v, codebook, rounding) for j, v in enumerate(row)])
