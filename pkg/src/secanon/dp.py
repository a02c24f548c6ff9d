"""Laplace and binary randomized-response mechanisms evaluated on ciphertexts.

The random draw and the logarithm happen at P1 in plaintext; the log is
rounded to 64 fractional bits and kept as an exact rational, so the
homomorphic part stays exact and matches the plaintext mechanism bit for bit.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction

import mpmath

from . import she
from .errors import ConfigError
from .she import Ciphertext, PublicKey

LOG_FRAC_BITS = 64


@dataclass(frozen=True)
class DpBounds:
    l_star: Ciphertext
    u_star: Ciphertext
    epsilon: float

    def __post_init__(self):
        _check_eps(self.epsilon, allow_zero=True)


def _check_eps(eps, allow_zero=False):
    if not math.isfinite(eps) or eps < 0 or (eps == 0 and not allow_zero):
        raise ConfigError(f"epsilon must be {'non-negative' if allow_zero else 'positive'}, got {eps}")


def make_bounds(pk: PublicKey, lower, upper, epsilon) -> DpBounds:
    if lower > upper:
        raise ConfigError("lower bound exceeds upper bound")
    return DpBounds(she.enc(pk, lower), she.enc(pk, upper), epsilon)


def fixed_log(x: Fraction) -> Fraction:
    """Natural log of a positive rational, rounded to 2^-64."""
    with mpmath.workprec(LOG_FRAC_BITS + 64):
        val = mpmath.log(mpmath.mpf(x.numerator) / x.denominator)
        scaled = int(mpmath.nint(val * (1 << LOG_FRAC_BITS)))
    return Fraction(scaled, 1 << LOG_FRAC_BITS)


def draw_r(rng: random.Random) -> Fraction:
    """Uniform on (-1/2, 1/2); the endpoints are resampled."""
    while True:
        r = Fraction(rng.getrandbits(53), 1 << 53) - Fraction(1, 2)
        if abs(r) != Fraction(1, 2):
            return r


def laplace_factor(r, epsilon) -> Fraction:
    """``-(1/eps) * sgn(r) * ln(1 - 2|r|)``; multiply by the diameter for the noise."""
    _check_eps(epsilon)
    r = Fraction(r)
    if r == 0:
        return Fraction(0)
    if abs(r) >= Fraction(1, 2):
        raise ValueError("r must lie strictly inside (-1/2, 1/2)")
    sgn = 1 if r > 0 else -1
    return -sgn * fixed_log(1 - 2 * abs(r)) / Fraction(epsilon)


def diam_star(pk: PublicKey, bounds: DpBounds) -> Ciphertext:
    return she.add(pk, bounds.u_star, she.mult(pk, she.enc(pk, -1), bounds.l_star))


def laplace_encrypted(pk: PublicKey, cell: Ciphertext, bounds: DpBounds, rng: random.Random,
                      r=None) -> Ciphertext:
    _check_eps(bounds.epsilon)
    factor = laplace_factor(draw_r(rng) if r is None else r, bounds.epsilon)
    noise = she.mult(pk, diam_star(pk, bounds), she.enc(pk, factor))
    return she.add(pk, cell, noise)


def keep_probability(epsilon) -> float:
    return math.exp(epsilon) / (1 + math.exp(epsilon)) if epsilon < 700 else 1.0


def binary_encrypted(pk: PublicKey, cell: Ciphertext, bounds: DpBounds, rng: random.Random) -> Ciphertext:
    """Keep with probability e^eps/(1+e^eps) (``r <= threshold`` keeps), else store ``u + l - d``."""
    _check_eps(bounds.epsilon, allow_zero=True)
    if rng.random() <= keep_probability(bounds.epsilon):
        return she.rerandomize(pk, cell)
    return she.add(pk, she.mult(pk, cell, she.enc(pk, -1)), she.add(pk, bounds.l_star, bounds.u_star))


def laplace_plain(d, lower, upper, epsilon, rng: random.Random):
    _check_eps(epsilon)
    return d + (upper - lower) * laplace_factor(draw_r(rng), epsilon)


def binary_plain(d, lower, upper, epsilon, rng: random.Random):
    return d if rng.random() <= keep_probability(epsilon) else upper + lower - d
