"""Common-ancestor search over encrypted hierarchy codes.

Lifting a code to level ``l`` is a nearest-neighbour query over the public
level-``l`` node codes; the far-apart encoding guarantees the nearest node
is the true ancestor. Equality of two lifted codes is tested by sending P2
a blinded difference.
"""
from __future__ import annotations

from typing import Sequence

from .. import she
from ..datamodel import Hierarchy
from ..she import Ciphertext
from ..twoparty.session import Session
from .protocols import compute_min_index, zero_test


def lift(session: Session, code: Ciphertext, hierarchy: Hierarchy, level: int, label: tuple) -> Ciphertext:
    """Encrypted code of the level-``level`` node nearest to ``code``."""
    pk = session.pk
    nodes = hierarchy.codes_at(level)
    if len(nodes) == 1:
        return she.enc(pk, nodes[0])
    dists = []
    for n in nodes:
        diff = she.add_const(pk, code, -n)
        dists.append(she.mult(pk, diff, diff))
    onehot = compute_min_index(session, dists, label)
    return she.enc_sum(pk, (she.mult_const(pk, e, n) for e, n in zip(onehot, nodes)))


def _equal(session: Session, a: Ciphertext, b: Ciphertext, label: tuple) -> bool:
    diff = she.sub(session.pk, a, b)
    return zero_test(session, [diff], label)[0]


def common_ancestor(session: Session, v1: Ciphertext, v2: Ciphertext, hierarchy: Hierarchy,
                    start_level: int = 1, label: tuple = ("ca",)) -> tuple[int, Ciphertext]:
    """Walk up from ``start_level`` until both values lift to the same node.

    Returns ``(level, encrypted node code)``. The walk starts at level 1, so
    two equal leaves meet at their level-1 parent, not at the leaf itself.
    """
    pk = session.pk
    top = hierarchy.height
    if top == 0:
        return 0, she.rerandomize(pk, v1)
    for level in range(min(start_level, top), top):
        a = lift(session, v1, hierarchy, level, label + ("a", level))
        b = lift(session, v2, hierarchy, level, label + ("b", level))
        if _equal(session, a, b, label + ("eq", level)):
            return level, a
    return top, she.enc(pk, hierarchy.root.code)


def common_ancestor_many(session: Session, values: Sequence[Ciphertext], hierarchy: Hierarchy,
                         label: tuple = ("ca_many",)) -> tuple[int, Ciphertext]:
    """Fold ``common_ancestor`` over many values.

    After each step the search for the next value restarts at the highest
    level reached so far instead of climbing again from level 1.
    """
    if not values:
        raise ValueError("no values")
    acc = values[0]
    level = 1
    if len(values) == 1:
        return common_ancestor(session, acc, acc, hierarchy, level, label + (0,))
    for i, v in enumerate(values[1:], start=1):
        level, acc = common_ancestor(session, acc, v, hierarchy, level, label + (i,))
    return level, acc


def plain_common_ancestor(v1, v2, hierarchy: Hierarchy, start_level: int = 1) -> tuple[int, object]:
    top = hierarchy.height
    if top == 0:
        return 0, v1
    for level in range(min(start_level, top), top):
        a, b = hierarchy.nearest(v1, level), hierarchy.nearest(v2, level)
        if a == b:
            return level, a
    return top, hierarchy.root.code
