from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from secanon import she
from secanon.errors import DepthExceeded, KeyMismatch, UnknownKey
from secanon.she import MaskingPolynomial, SchemeParams

rationals = st.fractions(max_denominator=10**6).filter(lambda f: abs(f) < 10**12)


def test_keygen_matches_ids():
    kp = she.keygen(SchemeParams(), seed=1)
    assert kp.pk.key_id == kp.sk.key_id


def test_keygen_deterministic_and_fresh():
    assert she.keygen(seed=1).pk.key_id == she.keygen(seed=1).pk.key_id
    assert she.keygen(seed=1).pk.key_id != she.keygen(seed=2).pk.key_id


def test_roundtrip_small(kp):
    assert she.dec(kp.sk, she.enc(kp.pk, 5)) == 5
    assert she.dec(kp.sk, she.enc(kp.pk, Fraction(-3, 2))) == Fraction(-3, 2)


def test_encryption_is_randomized(kp):
    a, b = she.enc(kp.pk, 5), she.enc(kp.pk, 5)
    assert a.to_bytes() != b.to_bytes()
    assert a.to_bytes(include_nonce=False) == b.to_bytes(include_nonce=False)


def test_wrong_key(kp):
    other = she.keygen(seed=99)
    with pytest.raises(KeyMismatch):
        she.dec(other.sk, she.enc(kp.pk, 1))


def test_unknown_key():
    rogue = she.PublicKey(12345, SchemeParams())
    with pytest.raises(UnknownKey):
        she.enc(rogue, 1)


def test_basic_arithmetic(kp):
    pk, sk = kp.pk, kp.sk
    e = lambda m: she.enc(pk, m)
    assert she.dec(sk, she.add(pk, e(1), e(1))) == 2
    assert she.dec(sk, she.add(pk, e(2), e(3))) == 5
    assert she.dec(sk, she.add(pk, e(-1), e(1))) == 0
    assert she.dec(sk, she.mult(pk, e(2), e(3))) == 6
    assert she.dec(sk, she.mult(pk, e(2), e(0))) == 0
    assert she.dec(sk, she.mult(pk, e(7), e(1))) == 7


def test_depth_accounting():
    kp = she.keygen(SchemeParams(max_depth=3), seed=5)
    c = she.enc(kp.pk, 2)
    for _ in range(3):
        c = she.mult(kp.pk, c, she.enc(kp.pk, 1))
    assert c.depth == 3
    with pytest.raises(DepthExceeded):
        she.mult(kp.pk, c, she.enc(kp.pk, 1))
    # additions never consume depth
    assert she.add(kp.pk, c, she.enc(kp.pk, 1)).depth == 3


def test_serialization_roundtrip(kp):
    c = she.mult(kp.pk, she.enc(kp.pk, Fraction(-7, 3)), she.enc(kp.pk, 2))
    data = c.to_bytes() + she.enc(kp.pk, 10**30).to_bytes()
    c2, pos = she.Ciphertext.from_bytes(data)
    c3, end = she.Ciphertext.from_bytes(data, pos)
    assert end == len(data)
    assert (c2.nonce, c2.depth, she.dec(kp.sk, c2)) == (c.nonce, 1, Fraction(-14, 3))
    assert she.dec(kp.sk, c3) == 10**30


def test_range_warning():
    kp = she.keygen(SchemeParams(plaintext_modulus_hint=100), seed=77)
    with pytest.warns(she.PlaintextRangeWarning):
        she.mult(kp.pk, she.enc(kp.pk, 50), she.enc(kp.pk, 50))


@given(rationals)
@settings(max_examples=200)
def test_roundtrip_property(kp, m):
    assert she.dec(kp.sk, she.enc(kp.pk, m)) == m


@given(rationals, rationals)
@settings(max_examples=200)
def test_homomorphism_property(kp, a, b):
    pk, sk = kp.pk, kp.sk
    assert she.dec(sk, she.add(pk, she.enc(pk, a), she.enc(pk, b))) == a + b
    assert she.dec(sk, she.mult(pk, she.enc(pk, a), she.enc(pk, b))) == a * b


@given(st.integers(1, 8), st.integers(0, 12))
def test_depth_budget_property(budget, circuit):
    kp = she.keygen(SchemeParams(max_depth=budget), seed=budget)
    c = she.enc(kp.pk, 1)
    if circuit <= budget:
        for _ in range(circuit):
            c = she.mult(kp.pk, c, c)
        assert c.depth == circuit
    else:
        with pytest.raises(DepthExceeded):
            for _ in range(circuit):
                c = she.mult(kp.pk, c, c)


def test_eval_poly_examples(kp):
    pk, sk = kp.pk, kp.sk
    assert she.dec(sk, she.eval_poly(pk, MaskingPolynomial((1, 0, 1)), she.enc(pk, 4))) == 17
    assert she.dec(sk, she.eval_poly(pk, MaskingPolynomial.identity(), she.enc(pk, 11))) == 11
    out = [she.dec(sk, she.eval_poly(pk, MaskingPolynomial((1, 2)), she.enc(pk, d))) for d in (9, 4, 16)]
    assert out == [19, 9, 33]


def test_eval_poly_depth_check():
    kp = she.keygen(SchemeParams(max_depth=4), seed=8)
    c = she.mult(kp.pk, she.enc(kp.pk, 2), she.enc(kp.pk, 1))
    with pytest.raises(DepthExceeded):
        she.eval_poly(kp.pk, MaskingPolynomial((1, 1, 1, 1, 1)), c)


def test_random_poly_shape(rng):
    for _ in range(100):
        p = MaskingPolynomial.random(rng)
        assert 2 <= p.degree <= 5
        assert all(1 <= a <= 2**16 for a in p.coefficients)
        assert p.is_strictly_increasing()
    with pytest.raises(DepthExceeded):
        MaskingPolynomial.random(rng, max_degree=1)


def test_derived_helpers(kp):
    pk, sk = kp.pk, kp.sk
    cs = [she.enc(pk, v) for v in (1, 2, 3)]
    assert she.dec(sk, she.enc_sum(pk, cs)) == 6
    assert she.dec(sk, she.dot(pk, cs, cs)) == 14
    assert she.dec(sk, she.sub(pk, cs[0], cs[2])) == -2
    assert she.dec(sk, she.mult_const(pk, cs[1], Fraction(1, 4))) == Fraction(1, 2)
    r = she.rerandomize(pk, cs[0])
    assert she.dec(sk, r) == 1 and r.nonce != cs[0].nonce
