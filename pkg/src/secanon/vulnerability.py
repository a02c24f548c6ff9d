"""Direct-identifier detection and quasi-identifier lattice search.

Both run over encrypted tables: P1 sends blinded pairwise differences per
attribute, P2 keeps only their zero patterns and answers count queries.
The same logic is provided over plaintext tables as an oracle.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import she
from .datamodel import CipherTable, PlainTable
from .twoparty.session import Session, StepTag


class NodeStatus(enum.Enum):
    UNKNOWN = "unknown"
    QUASI = "quasi"
    SAFE = "safe"
    PRUNED_QUASI = "pruned_quasi"
    PRUNED_SAFE = "pruned_safe"


@dataclass
class LatticeNode:
    attrs: tuple
    status: NodeStatus = NodeStatus.UNKNOWN

    def __post_init__(self):
        if not self.attrs:
            raise ValueError("lattice nodes need at least one attribute")
        self.attrs = tuple(sorted(self.attrs))


@dataclass
class LatticeResult:
    minimal: list
    nodes: dict
    evaluated: int

    def statuses(self) -> dict:
        return {a: n.status for a, n in self.nodes.items()}


@dataclass
class IdentifyReport:
    direct: list
    minimal_quasi: list
    vector: list = field(default_factory=list)
    evaluated_nodes: int = 0

    def as_dict(self) -> dict:
        return {"direct": self.direct, "minimal_quasi": self.minimal_quasi}


# -------------------------------------------------------------- lattice walk

def lattice_search(attrs: Sequence[int], is_quasi: Callable[[tuple], bool],
                   max_combo: int | None = None, prune: bool = True) -> LatticeResult:
    """Breadth-first walk over attribute subsets, smallest first.

    With pruning, a node having any quasi subset is marked ``pruned_quasi``
    and never evaluated. Safe-subset pruning falls out of the order: every
    subset of a node has been settled before the node itself is reached.
    """
    attrs = sorted(attrs)
    top = len(attrs) if max_combo is None else min(max_combo, len(attrs))
    nodes: dict[tuple, LatticeNode] = {}
    quasi_sets: list[tuple] = []
    evaluated = 0
    for size in range(1, top + 1):
        for combo in itertools.combinations(attrs, size):
            node = LatticeNode(combo)
            nodes[node.attrs] = node
            if prune and any(set(q) <= set(combo) for q in quasi_sets):
                node.status = NodeStatus.PRUNED_QUASI
                continue
            evaluated += 1
            node.status = NodeStatus.QUASI if is_quasi(node.attrs) else NodeStatus.SAFE
            if node.status is NodeStatus.QUASI:
                quasi_sets.append(node.attrs)
    minimal = [q for q in quasi_sets if not any(set(o) < set(q) for o in quasi_sets)]
    return LatticeResult(sorted(minimal, key=lambda s: (len(s), s)), nodes, evaluated)


# ---------------------------------------------------------- plaintext oracle

def plain_match_count(rows: Sequence[Sequence], attrs: Sequence[int], j: int) -> int:
    key = tuple(rows[j][a] for a in attrs)
    return sum(1 for r in rows if tuple(r[a] for a in attrs) == key)


def plain_detect_direct(table: PlainTable, k: int) -> list[bool]:
    return [any(plain_match_count(table.rows, (a,), j) < k for j in range(table.n_rows))
            for a in range(table.d)]


def plain_is_quasi(rows, attrs, k) -> bool:
    return any(plain_match_count(rows, attrs, j) < k for j in range(len(rows)))


def plain_identify(table: PlainTable, k: int, max_combo: int | None = None,
                   prune: bool = True) -> IdentifyReport:
    v = plain_detect_direct(table, k)
    candidates = [a for a in range(table.d) if not v[a]]
    res = lattice_search(candidates, lambda s: plain_is_quasi(table.rows, s, k), max_combo, prune)
    return _report(table.schema.names, v, res)


def _report(names, v, res: LatticeResult) -> IdentifyReport:
    return IdentifyReport(
        direct=[n for n, flag in zip(names, v) if flag],
        minimal_quasi=[[names[a] for a in s] for s in res.minimal],
        vector=list(v),
        evaluated_nodes=res.evaluated,
    )


# ----------------------------------------------------------- encrypted path

def zero_pattern(p2, payload, n: int) -> list:
    """P2: boolean N x N matrix, true where the masked difference decrypts to 0."""
    return p2.zero_patterns(payload, n)


def detect_direct(patterns: Sequence, k: int) -> list[bool]:
    """V_i is set iff some row matches fewer than ``k`` rows (itself included)."""
    return [any(sum(row) < k for row in pat) for pat in patterns]


def combo_match_count(patterns: Sequence, attrs: Sequence[int], j: int) -> int:
    n = len(patterns[attrs[0]])
    return sum(1 for l in range(n) if all(patterns[a][j][l] for a in attrs))


def masked_diff_matrix(session: Session, column: Sequence) -> tuple[list, list]:
    """P1: blinded pairwise differences of one encrypted column, row-major N x N.

    Returns ``(masked, raw)``; ``raw`` stays with P1 as the audit witness.
    """
    pk = session.pk
    neg = [she.neg(pk, c) for c in column]
    zero_blind = session.faults.zero_di_blinder
    masked, raw = [], []
    for u, tu in enumerate(column):
        for v in range(len(column)):
            diff = she.add(pk, tu, neg[v])
            r = 0 if zero_blind else session.blinder()
            masked.append(she.mult(pk, diff, she.enc(pk, r)))
            raw.append(diff)
    return masked, raw


def secure_direct_identifiers(session: Session, k: int, columns: Sequence[str] | None = None) -> list[bool]:
    """Run the direct-identifier protocol; P2's pattern cache stays warm for lattice queries."""
    table: CipherTable = session.p1.table
    idx = range(table.d) if columns is None else [table.schema.index(c) for c in columns]
    n = table.n_rows
    for a in idx:
        masked, raw = masked_diff_matrix(session, table.column(a))
        session.send(StepTag.DI_MASKED_MATRIX, masked, session.p2.receive_masked_matrix,
                     params={"n": n, "attr": a}, witness={"raw": raw})
    flags = session.reply(StepTag.DI_VECTOR, session.p2.direct_vector, params={"k": k})
    return list(flags)


def secure_identify(session: Session, k: int, max_combo: int | None = None,
                    prune: bool = True) -> IdentifyReport:
    table: CipherTable = session.p1.table
    v = secure_direct_identifiers(session, k)
    candidates = [a for a in range(table.d) if not v[a]]

    def ask(attrs):
        (flag,) = session.exchange(StepTag.QI_QUERY, list(attrs), StepTag.QI_FLAG,
                                   session.p2.quasi_flag, params={"attrs": list(attrs), "k": k})
        return flag

    res = lattice_search(candidates, ask, max_combo, prune)
    return _report(table.schema.names, v, res)
