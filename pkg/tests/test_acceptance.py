"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Tolerances are pinned here as module constants. Expected values come from
independent oracles (Counter grouping, scipy binomials, closed-form rates).
"""
import gc
import itertools
import math
import random
import time
from collections import Counter
from fractions import Fraction
from statistics import mean

import pytest
from scipy.special import comb

from secanon import she
from secanon.datamodel import Column, PlainTable, Schema, decrypt_table, encode_hierarchy, encrypt_table
from secanon.dp import binary_encrypted, laplace_encrypted, make_bounds
from secanon.kanon import (
    Strategy, compute_min_index, init_centers, recompute_centers, reference_kanonymize, sed_matrix,
)
from secanon.metrics import equivalence_classes, reid_risk
from secanon.she import MaskingPolynomial
from secanon.twoparty import (
    Faults, PartyOne, PartyTwo, Permutation, Session, SessionConfig, StepTag, audit_leakage, brute_force_recovery,
    candidate_count,
)
from secanon.vulnerability import lattice_search, secure_direct_identifiers, secure_identify

from conftest import TABLE1, decode_assignment, make_session, numeric_table, run_encrypted

C1_MAX_SECONDS = 5.0
C2_INSTANCES = 50
C4_TRIALS = 1000
C4_TIE_TOL = 0.05
C5_TRIALS = 1000
C6_TRIALS = 100_000
C6_FLIP_TOL = 0.01
C6_MEAN_TOL = 0.3
C6_ABS_REL_TOL = 0.05
C8_LOG2_RANGE = (150, 170)
C9_RATIO_RANGE = (1.5, 3.0)
C9_INVARIANCE = 0.30
C10_INSTANCES = 100

TOY_TREE = {"label": "any", "children": [
    {"label": "p", "children": ["p1", "p2", "p3"]},
    {"label": "q", "children": ["q1", "q2"]},
]}


def _oracle_minimal_quasi(rows, k, attrs):
    found = []
    for size in range(1, len(attrs) + 1):
        for s in itertools.combinations(attrs, size):
            if min(Counter(tuple(r[a] for a in s) for r in rows).values()) < k and \
                    not any(set(q) < set(s) for q in found):
                found.append(s)
    return sorted(found, key=lambda s: (len(s), s))


# --------------------------------------------------------------------- 1

def test_c1_table1_identification(kp, table1, verdict):
    t0 = time.perf_counter()
    s = make_session(kp, table1, seed=1, k=2)
    rep = secure_identify(s, 2)
    elapsed = time.perf_counter() - t0
    names = ["Name", "Age", "Gender", "ZIP"]
    direct = [names[a] for a in range(4) if min(Counter(r[a] for r in TABLE1).values()) < 2]
    quasi = [[names[a] for a in q] for q in _oracle_minimal_quasi(TABLE1, 2, [1, 2, 3])]
    ok = rep.direct == direct == ["Name"] and rep.minimal_quasi == quasi and ["Age", "ZIP"] in quasi \
        and elapsed < C1_MAX_SECONDS
    verdict(1, ok, f"direct={rep.direct} quasi={rep.minimal_quasi} oracle={quasi} time={elapsed * 1e3:.1f}ms")


# ----------------------------------------------------------------- 2 + 3

def _instance(i):
    """Random instance: strategies rotate; P2P stays small since its merge step is N^2."""
    rng = random.Random(1000 + i)
    strategy = ["c2c", "p2c", "p2p"][i % 3]
    if i in (0, 1):
        n = 200
    else:
        n = rng.randint(8, 30 if strategy == "p2p" else 60)
    k = [2, 3, 5][i % 3 if i % 2 else (i // 3) % 3]
    d = rng.randint(1, 4)
    categorical = d >= 2 and i % 4 == 0
    hier = encode_hierarchy(TOY_TREE, 1000) if categorical else None
    rows = []
    for _ in range(n):
        row = [rng.randint(0, 40) for _ in range(d)]
        if categorical:
            row[-1] = hier.leaf_code(rng.choice(hier.leaf_labels))
        rows.append(row)
    cols = [Column(f"a{j}") for j in range(d)]
    if categorical:
        cols[-1] = Column(f"a{d - 1}", "categorical", "toy")
    plain = PlainTable(Schema(cols, {"toy": hier} if categorical else {}), rows)
    th = Fraction(rng.choice([0, 5, 10]), 100)
    return dict(rows=rows, plain=plain, k=k, strategy=strategy, th=th, seed=i,
                hierarchies=[hier if c.kind == "categorical" else None for c in cols])


@pytest.fixture(scope="module")
def runs(kp):
    out = []
    for i in range(C2_INSTANCES):
        inst = _instance(i)
        _, res = run_encrypted(kp, inst["plain"], inst["k"], inst["strategy"], inst["th"], inst["seed"])
        out.append((inst, res))
    return out


def test_c2_k_anonymity(kp, runs, verdict):
    violations = []
    for inst, res in runs:
        released = decrypt_table(kp.sk, res.table).rows
        supp = [i for i, c in enumerate(res.suppressed_indicator) if she.dec(kp.sk, c) == 1]
        kept = Counter(tuple(r) for i, r in enumerate(released) if i not in set(supp))
        ec = equivalence_classes(released, range(len(released[0])), supp)
        small = [s for s in kept.values() if s < inst["k"]]
        if small or (len(ec) and reid_risk(ec) > Fraction(1, inst["k"])):
            violations.append((inst["seed"], inst["strategy"], small))
    sizes = sorted({len(inst["rows"]) for inst, _ in runs})
    verdict(2, not violations, f"{len(runs)} instances, N in [{sizes[0]}, {sizes[-1]}], violations={violations}")


def test_c3_oracle_equivalence(kp, runs, verdict):
    mismatches = []
    for inst, res in runs:
        ref = reference_kanonymize(inst["rows"], inst["k"], 3, inst["th"], Strategy.parse(inst["strategy"]).value,
                                   inst["seed"], inst["seed"], inst["hierarchies"])
        pre = [max(range(len(a)), key=lambda j: she.dec(kp.sk, a[j])) for a in res.pre_merge_assignment]
        checks = {
            "pre_merge": pre == ref.pre_merge,
            "assignment": decode_assignment(kp, res) == ref.assignment,
            "centroids": {j: [she.dec(kp.sk, c) for c in v] for j, v in res.centers.items()} == ref.centers,
            "suppression": res.report.suppressed_clusters == ref.suppressed_clusters,
            "merges": res.report.merges == ref.merges,
            "table": decrypt_table(kp.sk, res.table).rows == ref.table,
        }
        bad = [name for name, ok in checks.items() if not ok]
        if bad:
            mismatches.append((inst["seed"], bad))
    verdict(3, not mismatches, f"{len(runs)} instances, mismatches={mismatches}")


# --------------------------------------------------------------------- 4

def test_c4_argmin_invariance(kp, verdict):
    rng = random.Random(4)
    wrong = 0
    for trial in range(C4_TRIALS):
        m = rng.randint(2, 8)
        values = rng.sample(range(0, 5000), m)
        s = make_session(kp, numeric_table([[0]]), seed=trial)
        poly = MaskingPolynomial.random(rng)
        s.masking_poly = lambda depth, poly=poly: poly
        onehot = compute_min_index(s, [she.enc(kp.pk, v) for v in values], ("argmin", trial))
        got = [she.dec(kp.sk, c) for c in onehot].index(1)
        wrong += got != values.index(min(values))
    tied = [4, 9, 4, 4, 12]
    hits = Counter()
    for seed in range(C4_TRIALS):
        s = make_session(kp, numeric_table([[0]]), seed=seed)
        onehot = compute_min_index(s, [she.enc(kp.pk, v) for v in tied], ("tie",))
        hits[[she.dec(kp.sk, c) for c in onehot].index(1)] += 1
    freqs = {j: hits[j] / C4_TRIALS for j in (0, 2, 3)}
    uniform = set(hits) <= {0, 2, 3} and all(abs(f - 1 / 3) <= C4_TIE_TOL for f in freqs.values())
    verdict(4, wrong == 0 and uniform, f"wrong={wrong}/{C4_TRIALS} tie frequencies={freqs}")


# --------------------------------------------------------------------- 5

def test_c5_blinding_identities(kp, verdict):
    rng = random.Random(5)
    s = make_session(kp, numeric_table([[0]]))
    errors = 0
    for _ in range(C5_TRIALS):
        count, total = rng.randint(1, 10**6), rng.randint(-10**9, 10**9)
        u = rng.randint(2, 2**32)
        v = rng.randint(2, 2**32)
        bc = she.mult_const(kp.pk, she.enc(kp.pk, count), u)
        bs = she.mult_const(kp.pk, she.enc(kp.pk, total), v)
        div = s.p2.divide((bc, bs), m=1, d=1)[0]
        center = she.mult_const(kp.pk, div, Fraction(u, v))
        errors += she.dec(kp.sk, center) != Fraction(total, count)
    # the protocol path end to end: two clusters of known means
    rows = [[she.enc(kp.pk, x)] for x in (2, 4, 10, 12)]
    assign = [[she.enc(kp.pk, int(a == j)) for j in range(2)] for a in (0, 0, 1, 1)]
    centers, _ = recompute_centers(s, assign, rows, [0, 1], ("rcc",))
    path_ok = [she.dec(kp.sk, centers[j][0]) for j in (0, 1)] == [3, 11]
    verdict(5, errors == 0 and path_ok, f"errors={errors}/{C5_TRIALS} protocol centroids exact={path_ok}")


# --------------------------------------------------------------------- 6

def test_c6_dp_empirics(kp, verdict):
    rng = random.Random(6)
    one = she.enc(kp.pk, 1)
    flips = {}
    for eps in (0.0, math.log(3), 2.0):
        b = make_bounds(kp.pk, 0, 1, eps)
        flipped = sum(she.dec(kp.sk, binary_encrypted(kp.pk, one, b, rng)) == 0 for _ in range(C6_TRIALS))
        flips[round(eps, 4)] = (flipped / C6_TRIALS, 1 / (math.exp(eps) + 1))
    flip_ok = all(abs(got - want) <= C6_FLIP_TOL for got, want in flips.values())
    b = make_bounds(kp.pk, 0, 10, 1)
    zero = she.enc(kp.pk, 0)
    noise = [float(she.dec(kp.sk, laplace_encrypted(kp.pk, zero, b, rng))) for _ in range(C6_TRIALS)]
    m, mabs = mean(noise), mean(abs(x) for x in noise)
    lap_ok = abs(m) <= C6_MEAN_TOL and abs(mabs - 10) <= C6_ABS_REL_TOL * 10
    verdict(6, flip_ok and lap_ok, f"flip (observed, expected)={flips} laplace mean={m:.4f} mean|L|={mabs:.4f}")


# --------------------------------------------------------------------- 7

def test_c7_leakage_audit(kp, table1, verdict):
    plain = table1.select(["Age", "Gender", "ZIP"])
    hier = {1: table1.schema.hierarchies["gender"]}
    s, _ = run_encrypted(kp, plain, 2, seed=7, hierarchies=hier)
    clean = audit_leakage(s.transcript, kp.sk)
    s, _ = run_encrypted(kp, plain, 2, seed=7, hierarchies=hier, faults=Faults(unit_rcc_blinder=True))
    unit = len(audit_leakage(s.transcript, kp.sk).by_tag(StepTag.RCC_BLINDED_AGGREGATES))
    s, _ = run_encrypted(kp, plain, 2, seed=7, hierarchies=hier,
                         faults=Faults(identity_permutation=True, identity_poly=True))
    ident = len(audit_leakage(s.transcript, kp.sk).by_tag(StepTag.MININDEX_MASKED_VECTOR))
    s = make_session(kp, table1, seed=7, k=2, faults=Faults(zero_di_blinder=True))
    secure_direct_identifiers(s, 2)
    zero = len(audit_leakage(s.transcript, kp.sk).by_tag(StepTag.DI_MASKED_MATRIX))
    ok = clean.ok and unit >= 1 and ident >= 1 and zero >= 1
    verdict(7, ok, f"clean violations={len(clean.violations)} unit blinder={unit} "
                   f"identity perm+poly={ident} zero DI blinder={zero}")


# --------------------------------------------------------------------- 8

def test_c8_appendix_check(verdict):
    count = candidate_count(16, 9)
    exact = count == comb(65536, 10, exact=True)
    log2 = math.log2(count)
    in_range = C8_LOG2_RANGE[0] <= log2 <= C8_LOG2_RANGE[1]
    ambiguity = brute_force_recovery([2 * 1 + 1, 2 * 3 + 1], 2, 1)
    verdict(8, exact and in_range and ambiguity >= 2,
            f"C(65536,10) exact={exact} log2={log2:.3f} (required {C8_LOG2_RANGE}) ambiguity={ambiguity}")


# --------------------------------------------------------------------- 9

class _quiet_gc:
    """Time compute, not collector pauses triggered by objects from earlier tests."""

    def __enter__(self):
        gc.collect()
        gc.disable()

    def __exit__(self, *exc):
        gc.enable()


def _iteration_time(kp, n, reps=3):
    rng = random.Random(n)
    rows = [[rng.randint(0, 1000), rng.randint(0, 1000)] for _ in range(n)]
    ct = encrypt_table(kp.pk, numeric_table(rows))
    idx = init_centers(n, n // 8, seed=9)
    centers = [ct.cells[i] for i in idx]
    best = math.inf
    for r in range(reps):
        s = Session(PartyOne(kp.pk, ct), PartyTwo(kp.sk, kp.pk), SessionConfig(seed=r))
        with _quiet_gc():
            t0 = time.perf_counter()
            dists = sed_matrix(kp.pk, ct.cells, centers)
            assign = [compute_min_index(s, dists[i], ("assign", i)) for i in range(n)]
            recompute_centers(s, assign, ct.cells, list(range(len(centers))), ("rcc",))
            best = min(best, time.perf_counter() - t0)
    return best


def _identifier_time_per_attribute(kp, d, n=40, reps=3):
    rng = random.Random(d)
    plain = numeric_table([[rng.randint(0, 5) for _ in range(d)] for _ in range(n)])
    best = math.inf
    for r in range(reps):
        s = make_session(kp, plain, seed=r)
        with _quiet_gc():
            t0 = time.perf_counter()
            secure_direct_identifiers(s, 2)
            best = min(best, (time.perf_counter() - t0) / d)
    return best


def test_c9_scaling_shape(kp, verdict):
    t1000, t2000 = _iteration_time(kp, 1000), _iteration_time(kp, 2000)
    ratio = t2000 / t1000
    d2, d8 = _identifier_time_per_attribute(kp, 2), _identifier_time_per_attribute(kp, 8)
    drift = abs(d8 - d2) / d2
    ok = C9_RATIO_RANGE[0] <= ratio <= C9_RATIO_RANGE[1] and drift <= C9_INVARIANCE
    verdict(9, ok, f"iteration N=1000 {t1000:.3f}s N=2000 {t2000:.3f}s ratio={ratio:.2f}; "
                   f"identifier check per attribute d=2 {d2 * 1e3:.1f}ms d=8 {d8 * 1e3:.1f}ms drift={drift:.1%}")


# -------------------------------------------------------------------- 10

def test_c10_pruning_soundness(verdict):
    rng = random.Random(10)
    agree = 0
    for _ in range(C10_INSTANCES):
        d, n, k = rng.randint(1, 6), rng.randint(1, 64), rng.randint(2, 4)
        rows = [[rng.randint(0, rng.randint(1, 4)) for _ in range(d)] for _ in range(n)]
        quasi = lambda s: min(Counter(tuple(r[a] for a in s) for r in rows).values()) < k
        pruned = lattice_search(range(d), quasi, prune=True).minimal
        full = lattice_search(range(d), quasi, prune=False).minimal
        agree += pruned == full == _oracle_minimal_quasi(rows, k, list(range(d)))
    verdict(10, agree == C10_INSTANCES, f"{agree}/{C10_INSTANCES} instances agree")
