"""Plaintext reference for secure k-anonymization.

Written separately from the encrypted pipeline. The only shared contract is
how permutations are derived from the session seed, which fixes the
tie-breaking order; everything else is recomputed with exact rationals.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from ..she import derive_seed
from ..twoparty.session import Permutation


@dataclass
class ReferenceResult:
    pre_merge: list
    assignment: list
    centers: dict
    suppressed_rows: set
    suppressed_clusters: list
    merges: list
    table: list
    levels: dict = field(default_factory=dict)


class _Tiebreak:
    def __init__(self, session_seed: int):
        self.root = derive_seed(session_seed, "PRP")

    def pick(self, values, label, valid=None, argmax=False) -> int:
        m = len(values)
        if m == 1:
            return 0
        perm = Permutation.from_seed(derive_seed(self.root, *label), m)
        best, best_val = None, None
        for idx in perm.mapping:
            if valid is not None and not valid[idx]:
                continue
            v = -values[idx] if argmax else values[idx]
            if best is None or v < best_val:
                best, best_val = idx, v
        return best


def _sq(a, b) -> Fraction:
    return sum((Fraction(x) - y) ** 2 for x, y in zip(a, b))


def _means(rows, assign, clusters, d):
    out, empty = {}, {}
    for j in clusters:
        members = [rows[i] for i, c in enumerate(assign) if c == j]
        empty[j] = not members
        out[j] = [Fraction(sum(r[l] for r in members), len(members)) if members else Fraction(0)
                  for l in range(d)]
    return out, empty


def reference_kanonymize(rows: Sequence[Sequence], k: int, rounds: int, threshold, strategy: str,
                         init_seed: int, session_seed: int,
                         hierarchies: Sequence | None = None) -> ReferenceResult:
    """``hierarchies[l]`` is the column's ``Hierarchy`` for categorical columns, else ``None``."""
    n = len(rows)
    d = len(rows[0])
    hierarchies = list(hierarchies) if hierarchies is not None else [None] * d
    tb = _Tiebreak(session_seed)
    kp = n // k
    clusters = list(range(kp))
    init = random.Random(derive_seed(init_seed, "init")).sample(range(n), kp)
    centers = {j: [Fraction(x) for x in rows[i]] for j, i in zip(clusters, init)}
    assign = [0] * n
    for rnd in range(1, rounds + 1):
        dist = [[_sq(centers[j], r) for j in clusters] for r in rows]
        assign = [tb.pick(dist[i], ("assign", rnd, i)) for i in range(n)]
        centers, empty = _means(rows, assign, clusters, d)
        if rnd < rounds:
            own = [dist[i][assign[i]] for i in range(n)]
            taken = set()
            for j in [j for j in clusters if empty[j]]:
                vals = [Fraction(0) if i in taken else own[i] for i in range(n)]
                idx = tb.pick(vals, ("reseed", rnd, j), argmax=True)
                taken.add(idx)
                centers[j] = [Fraction(x) for x in rows[idx]]
    pre = list(assign)

    size = {j: assign.count(j) for j in clusters}
    flagged = [j for j in clusters if size[j] < k]
    budget = math.floor(Fraction(threshold) * n)
    left = n
    supp = []
    for j in sorted([j for j in flagged if size[j] > 0], key=lambda j: (size[j], j)):
        if size[j] <= budget and not 0 < left - size[j] < k:
            budget -= size[j]
            left -= size[j]
            supp.append(j)
    active = [j for j in clusters if size[j] > 0 and j not in supp]
    cl = [None if c in supp else c for c in assign]

    merges = []
    pending = {j for j in active if size[j] < k}
    while pending and len(active) > 1:
        t = min(pending, key=lambda j: (size[j], j))
        cands = [j for j in active if j != t]
        label = ("merge", len(merges))
        if len(cands) == 1:
            pos = 0
        elif strategy == "ClusterToCluster":
            pos = tb.pick([_sq(centers[j], centers[t]) for j in cands], label)
        elif strategy == "PointToCluster":
            vals = [_sq(centers[j], rows[i]) for i in range(n) for j in cands]
            valid = [cl[i] == t for i in range(n) for _ in cands]
            pos = tb.pick(vals, label, valid) % len(cands)
        else:
            vals = [_sq(rows[i], rows[l]) for i in range(n) for l in range(n)]
            valid = [cl[i] == t and cl[l] in cands for i in range(n) for l in range(n)]
            pos = cands.index(cl[tb.pick(vals, label, valid) % n])
        j = cands[pos]
        cl = [j if c == t else c for c in cl]
        active.remove(t)
        pending.discard(t)
        size[j] += size[t]
        if size[j] >= k:
            pending.discard(j)
        merges.append((t, j))
        if strategy != "PointToPoint":
            centers.update(_means(rows, cl, active, d)[0])
    if merges and strategy == "PointToPoint":
        centers.update(_means(rows, cl, active, d)[0])

    out = [[0] * d for _ in range(n)]
    levels = {}
    for l in range(d):
        h = hierarchies[l]
        if h is None:
            for i in range(n):
                if cl[i] is not None:
                    out[i][l] = centers[cl[i]][l]
            continue
        levels[l] = {}
        for j in active:
            members = [rows[i][l] for i in range(n) if cl[i] == j]
            level, code = h.height, h.root.code
            for lv in range(h.height):
                nodes = {h.nearest(v, lv) if lv else v for v in members}
                if len(nodes) == 1:
                    level, code = lv, nodes.pop()
                    break
            levels[l][j] = level
            for i in range(n):
                if cl[i] == j:
                    out[i][l] = code
    return ReferenceResult(pre, cl, {j: centers[j] for j in active}, {i for i in range(n) if cl[i] is None},
                           supp, merges, out, levels)
