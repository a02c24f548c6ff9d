"""Secure k-anonymization by encrypted k-means, suppression and cluster merging."""
from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .. import she
from ..datamodel import CipherTable
from ..errors import ConfigError, EmptyInput, Unsatisfiable
from ..she import Ciphertext
from ..twoparty.session import Session
from .ancestor import lift
from .protocols import (
    compute_min_index, negate_rows, non_k_clusters, padded_counts, recompute_centers, reveal_index, sed,
    zero_test,
)


class Strategy(str, enum.Enum):
    C2C = "ClusterToCluster"
    P2C = "PointToCluster"
    P2P = "PointToPoint"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        short = {"c2c": cls.C2C, "p2c": cls.P2C, "p2p": cls.P2P}
        try:
            return short.get(str(value).lower()) or cls(value)
        except ValueError:
            raise ConfigError(f"unknown reassignment strategy {value!r}") from None


@dataclass(frozen=True)
class AnonConfig:
    k: int
    rounds: int = 3
    suppression_threshold: Fraction = Fraction(0)
    reassign_strategy: Strategy = Strategy.C2C
    init_seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.rounds < 1:
            raise ConfigError("rounds must be at least 1")
        th = Fraction(self.suppression_threshold)
        if not 0 <= th <= 1:
            raise ConfigError("suppression threshold must lie in [0, 1]")
        object.__setattr__(self, "suppression_threshold", th)
        object.__setattr__(self, "reassign_strategy", Strategy.parse(self.reassign_strategy))


@dataclass
class KAnonReport:
    iterations: int = 0
    clusters: int = 0
    empty_reseeds: list = field(default_factory=list)
    non_k_initial: list = field(default_factory=list)
    known_sizes: dict = field(default_factory=dict)
    suppressed_clusters: list = field(default_factory=list)
    suppressed_count: int = 0
    merges: list = field(default_factory=list)
    final_clusters: list = field(default_factory=list)
    generalization_levels: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "clusters": self.clusters,
            "empty_reseeds": [list(x) for x in self.empty_reseeds],
            "non_k_initial": self.non_k_initial,
            "known_sizes": {str(k): v for k, v in self.known_sizes.items()},
            "suppressed_clusters": self.suppressed_clusters,
            "suppressed_rows": self.suppressed_count,
            "merges": [list(m) for m in self.merges],
            "final_clusters": self.final_clusters,
            "generalization_levels": {c: {str(j): lv for j, lv in d.items()}
                                      for c, d in self.generalization_levels.items()},
        }


@dataclass
class KAnonResult:
    table: CipherTable
    assignment: list
    pre_merge_assignment: list
    centers: dict
    active: list
    suppressed_indicator: list
    report: KAnonReport


def init_centers(n: int, k: int, seed: int) -> list[int]:
    """Row indices of the ``floor(n/k)`` initial centers, sampled without replacement."""
    if k > n:
        raise Unsatisfiable(f"k={k} exceeds the number of rows {n}")
    return random.Random(she.derive_seed(seed, "init")).sample(range(n), n // k)


def plan_suppression(sizes: dict, flagged: Sequence[int], threshold, n: int, k: int) -> list[int]:
    """Greedy ascending-size suppression of non-k clusters within ``floor(th*n)`` rows.

    A step that would leave between 1 and k-1 rows in total is skipped, since
    those rows could never be made k-anonymous.
    """
    budget = math.floor(Fraction(threshold) * n)
    remaining = n
    chosen = []
    for j in sorted((j for j in flagged if sizes[j] > 0), key=lambda j: (sizes[j], j)):
        s = sizes[j]
        if s > budget or 0 < remaining - s < k:
            continue
        budget -= s
        remaining -= s
        chosen.append(j)
    return chosen


def _reseed(session: Session, assignment, dists, rows, clusters, empties, centers, rnd, report):
    pk = session.pk
    n = len(rows)
    own = [she.enc_sum(pk, (she.mult(pk, a[p], dist[p]) for p in range(len(clusters))))
           for a, dist in zip(assignment, dists)]
    chosen: list[list[Ciphertext]] = []
    for j in sorted(empties):
        if chosen:
            taken = [she.enc_sum(pk, (e[i] for e in chosen)) for i in range(n)]
            vals = [she.mult(pk, own[i], she.add_const(pk, she.neg(pk, taken[i]), 1)) for i in range(n)]
        else:
            vals = own
        e = compute_min_index(session, vals, ("reseed", rnd, j), argmax=True)
        chosen.append(e)
        d = len(rows[0])
        centers[j] = [she.enc_sum(pk, (she.mult(pk, e[i], rows[i][l]) for i in range(n))) for l in range(d)]
        report.empty_reseeds.append((rnd, j))


def nearest_cluster(session: Session, strategy: Strategy, t: int, candidates: Sequence[int], assignment,
                    rows, neg_rows, centers, merge_no: int, pair_cache: dict | None = None) -> int:
    """Candidate cluster closest to cluster ``t``; P1 learns only the winner."""
    pk = session.pk
    n = len(rows)
    m = len(candidates)
    if m == 1:
        return candidates[0]
    if strategy is Strategy.C2C:
        neg_ct = [she.neg(pk, c) for c in centers[t]]
        vals = [sed(pk, centers[j], neg_ct) for j in candidates]
        onehot = compute_min_index(session, vals, ("merge", merge_no))
    elif strategy is Strategy.P2C:
        vals = [sed(pk, centers[j], neg_rows[i]) for i in range(n) for j in candidates]
        valid = [assignment[i][t] for i in range(n) for _ in candidates]
        e = compute_min_index(session, vals, ("merge", merge_no), valid=valid)
        onehot = [she.enc_sum(pk, (e[i * m + p] for i in range(n))) for p in range(m)]
    else:
        cache = pair_cache if pair_cache is not None else {}
        others = [she.enc_sum(pk, (assignment[l][j] for j in candidates)) for l in range(n)]
        vals, valid = [], []
        for i in range(n):
            for l in range(n):
                key = (min(i, l), max(i, l))
                if key not in cache:
                    cache[key] = sed(pk, rows[i], neg_rows[l])
                vals.append(cache[key])
                valid.append(she.mult(pk, assignment[i][t], others[l]))
        e = compute_min_index(session, vals, ("merge", merge_no), valid=valid)
        g = [she.enc_sum(pk, (e[i * n + l] for i in range(n))) for l in range(n)]
        onehot = [she.enc_sum(pk, (she.mult(pk, g[l], assignment[l][j]) for l in range(n))) for j in candidates]
    return candidates[reveal_index(session, onehot, ("reveal", merge_no))]


def reassign_clusters(session: Session, assignment, rows, centers: dict, active: list, flagged: set,
                      sizes: dict, k: int, strategy: Strategy, neg_rows=None) -> list[tuple[int, int]]:
    """Merge non-k clusters into their nearest neighbours until none is left.

    The smallest flagged cluster (ties by index) goes first. ``assignment``,
    ``centers``, ``active``, ``flagged`` and ``sizes`` are updated in place.
    """
    pk = session.pk
    strategy = Strategy.parse(strategy)
    neg_rows = neg_rows if neg_rows is not None else negate_rows(pk, rows)
    merges = []
    pair_cache: dict = {}
    while flagged and len(active) > 1:
        t = min(flagged, key=lambda j: (sizes[j], j))
        candidates = [j for j in active if j != t]
        j = nearest_cluster(session, strategy, t, candidates, assignment, rows, neg_rows, centers,
                            len(merges), pair_cache)
        for row in assignment:
            row[j] = she.add(pk, row[j], row[t])
        active.remove(t)
        flagged.discard(t)
        if j in flagged:
            sizes[j] += sizes[t]
            if sizes[j] >= k:
                flagged.discard(j)
        merges.append((t, j))
        if strategy is not Strategy.P2P:
            new, _ = recompute_centers(session, assignment, rows, active, ("rcc", "merge", len(merges)))
            centers.update(new)
    if merges and strategy is Strategy.P2P:
        new, _ = recompute_centers(session, assignment, rows, active, ("rcc", "final"))
        centers.update(new)
    return merges


def anonymize_clusters(session: Session, table: CipherTable, assignment, centers: dict, active: Sequence[int],
                       report: KAnonReport | None = None) -> CipherTable:
    """Numeric cells become their cluster centroid; categorical cells the clusters' common ancestor."""
    pk = session.pk
    rows = table.cells
    n = len(rows)
    out = [[None] * table.d for _ in range(n)]
    counts = {j: she.enc_sum(pk, (a[j] for a in assignment)) for j in active}
    for l, col in enumerate(table.schema.columns):
        if col.kind == "numeric":
            for i in range(n):
                out[i][l] = she.enc_sum(pk, (she.mult(pk, assignment[i][j], centers[j][l]) for j in active))
            continue
        h = table.schema.hierarchies[col.hierarchy_ref]
        levels: dict[int, int] = {}
        by_level = {0: [r[l] for r in rows]}
        unresolved = list(active)
        for level in range(h.height):
            if not unresolved:
                break
            if level > 0:
                by_level[level] = [lift(session, rows[i][l], h, level, ("lift", l, level, i)) for i in range(n)]
            cur = by_level[level]
            spread = []
            for j in unresolved:
                s1 = she.enc_sum(pk, (she.mult(pk, assignment[i][j], cur[i]) for i in range(n)))
                s2 = she.enc_sum(pk, (she.mult(pk, assignment[i][j], she.mult(pk, cur[i], cur[i]))
                                      for i in range(n)))
                spread.append(she.sub(pk, she.mult(pk, counts[j], s2), she.mult(pk, s1, s1)))
            zero = zero_test(session, spread, ("ca", l, level))
            for j, z in zip(unresolved, zero):
                if z:
                    levels[j] = level
            unresolved = [j for j, z in zip(unresolved, zero) if not z]
        root = she.enc(pk, h.root.code)
        for j in unresolved:
            levels[j] = h.height
        for i in range(n):
            terms = []
            for j in active:
                code = root if levels[j] == h.height else by_level[levels[j]][i]
                terms.append(she.mult(pk, assignment[i][j], code))
            out[i][l] = she.enc_sum(pk, terms)
        if report is not None:
            report.generalization_levels[col.name] = dict(sorted(levels.items()))
    return CipherTable(table.schema, out, pk.key_id if out else None)


def secure_kanonymize(session: Session, cfg: AnonConfig, columns: Sequence[str] | None = None) -> KAnonResult:
    """Full pipeline: k-means rounds, non-k detection, suppression, merging, anonymization."""
    pk = session.pk
    table: CipherTable = session.p1.table
    if columns is not None:
        table = table.select(columns)
    if any(c.kind == "text" for c in table.schema.columns):
        raise ConfigError("text columns cannot be clustered; mask them instead")
    n = table.n_rows
    if n == 0:
        raise EmptyInput("no rows to anonymize")
    k = cfg.k
    rows = table.cells
    report = KAnonReport(iterations=cfg.rounds)
    clusters = list(range(n // k)) if k <= n else []
    centers = {j: list(rows[i]) for j, i in zip(clusters, init_centers(n, k, cfg.init_seed))}
    report.clusters = len(clusters)
    neg_rows = negate_rows(pk, rows)

    assignment: list[list[Ciphertext]] = []
    for rnd in range(1, cfg.rounds + 1):
        dists = [[sed(pk, centers[j], nr) for j in clusters] for nr in neg_rows]
        assignment = [compute_min_index(session, dists[i], ("assign", rnd, i)) for i in range(n)]
        centers, empty = recompute_centers(session, assignment, rows, clusters, ("rcc", rnd))
        empties = [j for j in clusters if empty[j]]
        if empties and rnd < cfg.rounds:
            _reseed(session, assignment, dists, rows, clusters, empties, centers, rnd, report)
    pre_merge = [list(a) for a in assignment]

    counts = [she.enc_sum(pk, (a[j] for a in assignment)) for j in clusters]
    flags = non_k_clusters(session, counts, k, ("nonk",))
    flagged = [j for j in clusters if flags[j]]
    report.non_k_initial = list(flagged)
    sizes = dict(zip(flagged, padded_counts(session, [counts[j] for j in flagged], ("supp",))))
    report.known_sizes = dict(sizes)
    active = [j for j in clusters if not (flags[j] and sizes[j] == 0)]

    suppressed = plan_suppression(sizes, flagged, cfg.suppression_threshold, n, k)
    for j in suppressed:
        active.remove(j)
    report.suppressed_clusters = list(suppressed)
    report.suppressed_count = sum(sizes[j] for j in suppressed)
    remaining = n - report.suppressed_count
    if 0 < remaining < k:
        raise Unsatisfiable(f"{remaining} rows remain after suppression, fewer than k={k}")
    supp_ind = [she.enc_sum(pk, (a[j] for j in suppressed)) for a in assignment]

    still = {j for j in active if flags[j]}
    merges = reassign_clusters(session, assignment, rows, centers, active, still, sizes, k,
                               cfg.reassign_strategy, neg_rows)
    report.merges = merges
    report.known_sizes = dict(sizes)
    report.final_clusters = list(active)

    anon = anonymize_clusters(session, table, assignment, centers, active, report)
    return KAnonResult(anon, assignment, pre_merge, {j: centers[j] for j in active}, list(active), supp_ind, report)
