"""Masking operators that work on ciphertexts without ever seeing the plaintext."""
from __future__ import annotations

import random
from fractions import Fraction
from typing import Sequence

from . import she
from .datamodel import EncryptedDictionary
from .errors import ConfigError, EmptyDictionary
from .she import Ciphertext, PublicKey


def mask_dictionary(pk: PublicKey, cell: Ciphertext, dictionary: EncryptedDictionary,
                    rng: random.Random) -> Ciphertext:
    """Replace ``cell`` by a uniformly chosen dictionary entry (re-randomized)."""
    if not dictionary.entries:
        raise EmptyDictionary("cannot mask from an empty dictionary")
    return she.rerandomize(pk, rng.choice(dictionary.entries))


def pad_dictionary(pk: PublicKey, dictionary: EncryptedDictionary, target_min: int) -> EncryptedDictionary:
    """Append re-randomized copies until at least ``target_min`` entries exist."""
    entries = list(dictionary.entries)
    if not entries:
        raise EmptyDictionary("cannot pad an empty dictionary")
    base = len(entries)
    i = 0
    while len(entries) < target_min:
        entries.append(she.rerandomize(pk, entries[i % base]))
        i += 1
    return EncryptedDictionary(tuple(entries), dictionary.declared_kind)


def mask_shift(pk: PublicKey, cell: Ciphertext, s) -> Ciphertext:
    return she.add_const(pk, cell, s)


def noise_delta(bound, x, rng: random.Random) -> Fraction:
    """Uniform rational in ``[-bound*x, bound*x]`` at 2^-32 resolution."""
    if not 0 < x < 1:
        raise ConfigError("noise fraction must lie strictly between 0 and 1")
    width = Fraction(bound) * Fraction(x)
    u = Fraction(rng.getrandbits(32), 1 << 32)
    return -width + 2 * width * u


def mask_noise(pk: PublicKey, cell: Ciphertext, x, rng: random.Random, bound) -> Ciphertext:
    """Add noise drawn from ``[-bound*x, bound*x]``.

    P1 cannot read the cell, so the noise scale comes from a per-column
    magnitude bound supplied by the data owner instead of the value itself.
    """
    return she.add(pk, cell, she.enc(pk, noise_delta(bound, x, rng)))


def mask_random(pk: PublicKey, cell: Ciphertext, lo: int, hi: int, rng: random.Random) -> Ciphertext:
    if lo > hi:
        raise ConfigError("random range is empty")
    return she.enc(pk, rng.randint(lo, hi))


def redact(pk: PublicKey, cell: Ciphertext, fixed=0) -> Ciphertext:
    return she.enc(pk, fixed)


def plain_mask(op: str, value, rng: random.Random | None = None, **params):
    """Plaintext counterpart of the shift and noise operators (same rng stream)."""
    if op == "shift":
        return value + params["s"]
    if op == "noise":
        return value + noise_delta(params["bound"], params["x"], rng)
    raise ConfigError(f"no plaintext counterpart for {op!r}")


def mask_column(pk: PublicKey, cells: Sequence[Ciphertext], op: str, rng: random.Random,
                dictionary: EncryptedDictionary | None = None, **params) -> list[Ciphertext]:
    if op == "dictionary":
        if dictionary is None:
            raise ConfigError("dictionary masking needs a dictionary")
        if params.get("pad_min"):
            dictionary = pad_dictionary(pk, dictionary, params["pad_min"])
        return [mask_dictionary(pk, c, dictionary, rng) for c in cells]
    if op == "shift":
        return [mask_shift(pk, c, params["s"]) for c in cells]
    if op == "noise":
        return [mask_noise(pk, c, params["x"], rng, params["bound"]) for c in cells]
    if op == "random":
        return [mask_random(pk, c, params["lo"], params["hi"], rng) for c in cells]
    if op == "redact":
        return [redact(pk, c, params.get("fixed", 0)) for c in cells]
    raise ConfigError(f"unknown masking operator {op!r}")
