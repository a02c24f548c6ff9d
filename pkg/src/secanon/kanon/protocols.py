"""Two-party building blocks for secure clustering.

Each function runs on P1's side of a ``Session`` and talks to P2 through
it. P1 only ever sees ciphertexts, plus the handful of plaintext facts the
protocols deliberately reveal (non-k flags, sizes of non-k clusters, merge
targets, empty-cluster flags).
"""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .. import she
from ..errors import EmptyInput, SizeMismatch
from ..she import Ciphertext
from ..twoparty.session import Session, StepTag


def sed(pk, xs: Sequence[Ciphertext], neg_ys: Sequence[Ciphertext]) -> Ciphertext:
    """Squared Euclidean distance from ``xs`` and the negation of the other point."""
    if len(xs) != len(neg_ys):
        raise SizeMismatch("points of different dimension")
    acc = None
    for x, ny in zip(xs, neg_ys):
        diff = she.add(pk, x, ny)
        sq = she.mult(pk, diff, diff)
        acc = sq if acc is None else she.add(pk, acc, sq)
    return acc


def negate_rows(pk, rows) -> list[list[Ciphertext]]:
    return [[she.neg(pk, c) for c in row] for row in rows]


def sed_matrix(pk, table_rows, centers) -> list[list[Ciphertext]]:
    """``D[i][j] = sum_l (t_il - c_jl)^2``."""
    neg_t = negate_rows(pk, table_rows)
    return [[sed(pk, c, nt) for c in centers] for nt in neg_t]


def compute_min_index(session: Session, values: Sequence[Ciphertext], label: tuple,
                      valid: Sequence[Ciphertext] | None = None, argmax: bool = False) -> list[Ciphertext]:
    """Encrypted one-hot at the smallest (or largest) of ``values``.

    P1 masks every value with one fresh monotone polynomial (negated for
    argmax), permutes, and lets P2 pick the first minimum in scan order.
    ``valid`` optionally carries encrypted 0/1 flags; P2 ignores entries
    flagged 0.
    """
    pk = session.pk
    m = len(values)
    if m == 0:
        raise EmptyInput("min-index over an empty vector")
    if valid is not None and len(valid) != m:
        raise SizeMismatch("validity flags do not match the value vector")
    if m == 1:
        return [she.enc(pk, 1)]
    depth = max(c.depth for c in values)
    poly = session.masking_poly(depth)
    coeffs = she.encrypt_coefficients(pk, poly, -1 if argmax else 1)
    masked = [she.eval_poly(pk, poly, c, coeffs) for c in values]
    perm = session.permutation(m, *label)
    payload = perm.apply(masked)
    if valid is not None:
        payload += perm.apply(list(valid))
    reply = session.exchange(
        StepTag.MININDEX_MASKED_VECTOR, payload, StepTag.MININDEX_ONEHOT, session.p2.argmin_onehot,
        params={"valid": valid is not None}, witness={"raw": perm.apply(list(values))})
    return perm.invert(list(reply))


def reveal_index(session: Session, onehot: Sequence[Ciphertext], label: tuple) -> int:
    """Let P1 learn the position of the 1 in an encrypted one-hot vector."""
    if len(onehot) == 1:
        return 0
    perm = session.permutation(len(onehot), *label)
    (pos,) = session.exchange(StepTag.REVEAL_ONEHOT, perm.apply(list(onehot)), StepTag.REVEAL_INDEX,
                              session.p2.reveal_index)
    return perm.mapping[pos]


def _blinders(session: Session) -> tuple[int, int]:
    u = session.blinder(low=2)
    v = session.blinder(low=2)
    while v == u:
        v = session.blinder(low=2)
    if session.faults.unit_rcc_blinder:
        u = 1
    return u, v


def aggregates(pk, assignment, rows, clusters: Sequence[int]):
    """Encrypted counts and per-dimension sums of the given assignment columns."""
    counts, sums = [], []
    for j in clusters:
        counts.append(she.enc_sum(pk, (a[j] for a in assignment)))
        d = len(rows[0]) if rows else 0
        sums.append([she.enc_sum(pk, (she.mult(pk, a[j], r[l]) for a, r in zip(assignment, rows)))
                     for l in range(d)])
    return counts, sums


def recompute_centers(session: Session, assignment, rows, clusters: Sequence[int], label: tuple):
    """Exact encrypted centroids for ``clusters``; returns ``(centers, empty)`` keyed by cluster.

    Counts are blinded by ``u_j``, sums by ``v_j`` (``u_j != v_j``, both
    at least 2), the vector is permuted, P2 divides, and P1 unblinds the
    quotient with the plaintext ratio ``u_j / v_j``. Empty clusters come
    back as zero centers with their flag set.
    """
    pk = session.pk
    counts, sums = aggregates(pk, assignment, rows, clusters)
    m = len(clusters)
    d = len(rows[0]) if rows else 0
    blind = [_blinders(session) for _ in range(m)]
    b_counts = [she.mult_const(pk, c, u) for c, (u, _) in zip(counts, blind)]
    b_sums = [[she.mult_const(pk, s, v) for s in row] for row, (_, v) in zip(sums, blind)]
    perm = session.permutation(m, *label)
    p_counts = perm.apply(b_counts)
    p_sums = perm.apply(b_sums)
    payload = p_counts + [c for row in p_sums for c in row]
    raw = perm.apply(counts) + [c for row in perm.apply(sums) for c in row]
    reply = session.exchange(
        StepTag.RCC_BLINDED_AGGREGATES, payload, StepTag.RCC_DIVISIONS, session.p2.divide,
        params={"m": m, "d": d}, witness={"raw": raw, "m": m})
    divs = [list(reply[j * d:(j + 1) * d]) for j in range(m)]
    empty = perm.invert(list(reply[m * d:]))
    divs = perm.invert(divs)
    centers, empties = {}, {}
    for pos, j in enumerate(clusters):
        u, v = blind[pos]
        ratio = Fraction(u, v)
        centers[j] = [she.mult_const(pk, c, ratio) for c in divs[pos]]
        empties[j] = bool(empty[pos])
    return centers, empties


def non_k_clusters(session: Session, counts: Sequence[Ciphertext], k: int, label: tuple) -> list[bool]:
    """Flags ``count_j < k`` by comparing ``poly(count_j)`` with ``poly(k)`` at P2."""
    pk = session.pk
    m = len(counts)
    poly = session.masking_poly(max(c.depth for c in counts))
    coeffs = she.encrypt_coefficients(pk, poly)
    masked = [she.eval_poly(pk, poly, c, coeffs) for c in counts]
    k_star = she.enc(pk, k)
    mark = she.eval_poly(pk, poly, k_star, coeffs)
    perm = session.permutation(m, *label)
    payload = [mark] + perm.apply(masked)
    reply = session.exchange(
        StepTag.NONK_MASKED_COUNTS, payload, StepTag.NONK_FLAGS, session.p2.nonk_flags,
        witness={"raw": [k_star] + perm.apply(list(counts))})
    return [bool(f) for f in perm.invert(list(reply))]


def padded_counts(session: Session, counts: Sequence[Ciphertext], label: tuple) -> list[int]:
    """Reveal counts to P1 only: P2 decrypts ``count + r`` and P1 removes ``r``."""
    pk = session.pk
    if not counts:
        return []
    pads = [session.blinder() for _ in counts]
    perm = session.permutation(len(counts), *label)
    padded = [she.add_const(pk, c, r) for c, r in zip(counts, pads)]
    reply = session.exchange(
        StepTag.SUPP_PADDED_COUNTS, perm.apply(padded), StepTag.SUPP_COUNTS, session.p2.padded_counts,
        witness={"raw": perm.apply(list(counts))})
    values = perm.invert(list(reply))
    return [int(v - r) for v, r in zip(values, pads)]


def zero_test(session: Session, values: Sequence[Ciphertext], label: tuple) -> list[bool]:
    """Which encrypted values are zero, learned through blinded differences."""
    pk = session.pk
    if not values:
        return []
    blinded = [she.mult_const(pk, c, session.blinder()) for c in values]
    perm = session.permutation(len(values), *label)
    reply = session.exchange(
        StepTag.CA_DIFFERENCE, perm.apply(blinded), StepTag.CA_FLAGS, session.p2.zero_flags,
        witness={"raw": perm.apply(list(values))})
    return [bool(f) for f in perm.invert(list(reply))]
