"""Somewhat-homomorphic encryption interface and an exact simulation backend.

The simulation backend carries an exact rational plaintext inside each
ciphertext, draws a fresh 128-bit nonce per encryption and tracks
multiplicative depth against the key's budget. It offers no
confidentiality; it exists so protocols can be run and audited exactly.

Only five primitives are part of the scheme: ``keygen``, ``enc``, ``dec``,
``add`` and ``mult``. Everything else in this module (negation, constant
arithmetic, polynomial evaluation) is built from those.
"""
from __future__ import annotations

import hashlib
import os
import random
import struct
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence, Union

from .errors import DepthExceeded, KeyMismatch, ProtocolError, UnknownKey

Plaintext = Union[int, Fraction]

DEFAULT_PLAINTEXT_MODULUS = 1099511627689
DEFAULT_MAX_DEPTH = 10


class PlaintextRangeWarning(UserWarning):
    """An intermediate plaintext left the declared plaintext space."""


def derive_seed(master: int, *labels) -> int:
    """Derive a 64-bit seed from ``master`` and a tuple of labels."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(repr(label).encode())
    return int.from_bytes(h.digest(), "big")


def _normalize(m) -> Plaintext:
    if isinstance(m, bool):
        return int(m)
    if isinstance(m, int):
        return m
    if isinstance(m, Rational):
        f = Fraction(m)
        return f.numerator if f.denominator == 1 else f
    if isinstance(m, float):
        f = Fraction(m)
        return f.numerator if f.denominator == 1 else f
    raise TypeError(f"plaintext must be rational, got {type(m).__name__}")


@dataclass(frozen=True)
class SchemeParams:
    plaintext_modulus_hint: int = DEFAULT_PLAINTEXT_MODULUS
    max_depth: int = DEFAULT_MAX_DEPTH
    security_bits: int = 128

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass(frozen=True)
class PublicKey:
    key_id: int
    params: SchemeParams
    _nonce_rng: random.Random = field(default_factory=lambda: random.Random(os.urandom(16)),
                                      repr=False, compare=False)


@dataclass(frozen=True)
class SecretKey:
    key_id: int


@dataclass(frozen=True)
class KeyPair:
    pk: PublicKey
    sk: SecretKey

    @property
    def params(self) -> SchemeParams:
        return self.pk.params


@dataclass(frozen=True)
class Ciphertext:
    key_id: int
    _value: Plaintext = field(repr=False)
    nonce: int = 0
    depth: int = 0

    def to_bytes(self, include_nonce: bool = True) -> bytes:
        """Length-prefixed binary record ``{key_id, num, den, nonce, depth}``."""
        f = Fraction(self._value)
        num = _int_bytes(f.numerator)
        den = _int_bytes(f.denominator)
        nonce = self.nonce if include_nonce else 0
        body = (
            struct.pack(">QH", self.key_id, self.depth)
            + nonce.to_bytes(16, "big")
            + struct.pack(">I", len(num)) + num
            + struct.pack(">I", len(den)) + den
        )
        return struct.pack(">I", len(body)) + body

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> tuple["Ciphertext", int]:
        """Parse one record starting at ``offset``; returns (ciphertext, next offset)."""
        (length,) = struct.unpack_from(">I", data, offset)
        pos = offset + 4
        end = pos + length
        if end > len(data):
            raise ValueError("truncated ciphertext record")
        key_id, depth = struct.unpack_from(">QH", data, pos)
        pos += 10
        nonce = int.from_bytes(data[pos:pos + 16], "big")
        pos += 16
        (nlen,) = struct.unpack_from(">I", data, pos)
        pos += 4
        num = int.from_bytes(data[pos:pos + nlen], "big", signed=True)
        pos += nlen
        (dlen,) = struct.unpack_from(">I", data, pos)
        pos += 4
        den = int.from_bytes(data[pos:pos + dlen], "big", signed=True)
        pos += dlen
        if pos != end:
            raise ValueError("malformed ciphertext record")
        return cls(key_id, _normalize(Fraction(num, den)), nonce, depth), end


def _int_bytes(n: int) -> bytes:
    return n.to_bytes((n.bit_length() + 8) // 8 or 1, "big", signed=True)


class SimulatedScheme:
    """Exact-arithmetic, depth-tracked, non-deterministic reference backend."""

    name = "simulation"

    def __init__(self):
        self._known: set[int] = set()
        self._warned: set[int] = set()

    def keygen(self, params: SchemeParams, seed: int) -> KeyPair:
        key_id = derive_seed(seed, "keygen", params.max_depth, params.plaintext_modulus_hint)
        self._known.add(key_id)
        pk = PublicKey(key_id, params)
        return KeyPair(pk, SecretKey(key_id))

    def register(self, pk: PublicKey):
        self._known.add(pk.key_id)

    def _check_pk(self, pk: PublicKey):
        if not isinstance(pk, PublicKey):
            raise UnknownKey("a public key is required")
        if pk.key_id not in self._known:
            raise UnknownKey(f"unknown key id {pk.key_id:#x}")

    def enc(self, pk: PublicKey, m, rng: random.Random | None = None) -> Ciphertext:
        self._check_pk(pk)
        value = _normalize(m)
        self._range_check(pk, value)
        nonce = (rng or pk._nonce_rng).getrandbits(128)
        return Ciphertext(pk.key_id, value, nonce, 0)

    def dec(self, sk: SecretKey, c: Ciphertext) -> Plaintext:
        if not isinstance(sk, SecretKey):
            raise KeyMismatch("decryption requires a secret key")
        if c.key_id != sk.key_id:
            raise KeyMismatch(f"ciphertext key {c.key_id:#x} does not match secret key {sk.key_id:#x}")
        return c._value

    def add(self, pk: PublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
        self._same_key(pk, c1, c2)
        value = c1._value + c2._value
        if isinstance(value, Fraction) and value.denominator == 1:
            value = value.numerator
        self._range_check(pk, value)
        return Ciphertext(pk.key_id, value, pk._nonce_rng.getrandbits(128), max(c1.depth, c2.depth))

    def mult(self, pk: PublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
        self._same_key(pk, c1, c2)
        depth = max(c1.depth, c2.depth) + 1
        if depth > pk.params.max_depth:
            raise DepthExceeded(f"multiplicative depth {depth} exceeds budget {pk.params.max_depth}")
        value = c1._value * c2._value
        if isinstance(value, Fraction) and value.denominator == 1:
            value = value.numerator
        self._range_check(pk, value)
        return Ciphertext(pk.key_id, value, pk._nonce_rng.getrandbits(128), depth)

    def _same_key(self, pk, c1, c2):
        self._check_pk(pk)
        if c1.key_id != pk.key_id or c2.key_id != pk.key_id:
            raise KeyMismatch("operands were encrypted under different keys")

    def _range_check(self, pk, value):
        # warns once per key; the check itself stays on every operation
        if abs(value) > pk.params.plaintext_modulus_hint and pk.key_id not in self._warned:
            self._warned.add(pk.key_id)
            warnings.warn(
                "intermediate plaintext exceeds plaintext_modulus_hint; a modular backend would wrap",
                PlaintextRangeWarning,
                stacklevel=3,
            )


_SCHEME = SimulatedScheme()


def default_scheme() -> SimulatedScheme:
    return _SCHEME


def keygen(params: SchemeParams | None = None, seed: int = 0) -> KeyPair:
    return _SCHEME.keygen(params or SchemeParams(), seed)


def enc(pk: PublicKey, m, rng: random.Random | None = None) -> Ciphertext:
    return _SCHEME.enc(pk, m, rng)


def dec(sk: SecretKey, c: Ciphertext) -> Plaintext:
    return _SCHEME.dec(sk, c)


def add(pk: PublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    return _SCHEME.add(pk, c1, c2)


def mult(pk: PublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    return _SCHEME.mult(pk, c1, c2)


# Derived helpers. Each is a composition of the five primitives above.

def neg(pk: PublicKey, c: Ciphertext) -> Ciphertext:
    return mult(pk, c, enc(pk, -1))


def sub(pk: PublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    return add(pk, c1, neg(pk, c2))


def add_const(pk: PublicKey, c: Ciphertext, k) -> Ciphertext:
    return add(pk, c, enc(pk, k))


def mult_const(pk: PublicKey, c: Ciphertext, k) -> Ciphertext:
    return mult(pk, c, enc(pk, k))


def rerandomize(pk: PublicKey, c: Ciphertext) -> Ciphertext:
    """Same plaintext, fresh nonce."""
    return add(pk, c, enc(pk, 0))


def enc_sum(pk: PublicKey, cs: Iterable[Ciphertext]) -> Ciphertext:
    acc = None
    for c in cs:
        acc = c if acc is None else add(pk, acc, c)
    return acc if acc is not None else enc(pk, 0)


def dot(pk: PublicKey, xs: Sequence[Ciphertext], ys: Sequence[Ciphertext]) -> Ciphertext:
    if len(xs) != len(ys):
        raise ValueError("length mismatch")
    return enc_sum(pk, (mult(pk, x, y) for x, y in zip(xs, ys)))


@dataclass(frozen=True)
class MaskingPolynomial:
    """Polynomial ``a_0 + a_1 x + ... + a_q x^q`` with natural coefficients."""

    coefficients: tuple

    def __post_init__(self):
        if not self.coefficients:
            raise ValueError("polynomial needs at least one coefficient")
        if any(int(a) != a or a < 0 for a in self.coefficients):
            raise ValueError("coefficients must be natural numbers")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, x):
        acc = 0
        for a in reversed(self.coefficients):
            acc = acc * x + a
        return acc

    def is_strictly_increasing(self) -> bool:
        """True on the non-negative reals (some positive non-constant term)."""
        return any(a > 0 for a in self.coefficients[1:])

    @classmethod
    def identity(cls) -> "MaskingPolynomial":
        return cls((0, 1))

    @classmethod
    def random(cls, rng: random.Random, max_degree: int = 5, min_degree: int = 2,
               coef_bits: int = 16) -> "MaskingPolynomial":
        if max_degree < min_degree:
            raise DepthExceeded(f"polynomial of degree >= {min_degree} does not fit the remaining depth budget")
        q = rng.randint(min_degree, max_degree)
        return cls(tuple(rng.randint(1, 1 << coef_bits) for _ in range(q + 1)))


def encrypt_coefficients(pk: PublicKey, poly: MaskingPolynomial, sign: int = 1) -> tuple[Ciphertext, ...]:
    return tuple(enc(pk, sign * a) for a in poly.coefficients)


def eval_poly(pk: PublicKey, poly: MaskingPolynomial, c: Ciphertext,
              coeffs: Sequence[Ciphertext] | None = None) -> Ciphertext:
    """Horner evaluation; costs ``poly.degree`` levels of depth.

    ``coeffs`` may carry pre-encrypted (possibly negated) coefficients so a
    single polynomial can be applied to a whole vector cheaply.
    """
    if coeffs is None:
        coeffs = encrypt_coefficients(pk, poly)
    if c.depth + poly.degree > pk.params.max_depth:
        raise DepthExceeded(
            f"polynomial of degree {poly.degree} on depth-{c.depth} input exceeds budget {pk.params.max_depth}")
    acc = coeffs[-1]
    for a in reversed(coeffs[:-1]):
        acc = add(pk, mult(pk, acc, c), a)
    return acc


__all__ = [
    "Ciphertext", "KeyPair", "MaskingPolynomial", "PlaintextRangeWarning", "ProtocolError",
    "PublicKey", "SchemeParams", "SecretKey", "SimulatedScheme", "add", "add_const", "dec",
    "default_scheme", "derive_seed", "dot", "enc", "enc_sum", "encrypt_coefficients", "eval_poly",
    "keygen", "mult", "mult_const", "neg", "rerandomize", "sub",
]
