"""Leakage auditor: replays a transcript against P1's local witnesses.

Structural checks run on any backend. Value checks need an oracle able to
decrypt, which only the simulation backend offers; they compare what P2
actually received with the pre-masking values P1 started from.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .. import she
from ..she import Ciphertext, SecretKey
from .session import P2_INBOUND, Direction, StepTag, Transcript


@dataclass(frozen=True)
class Violation:
    seq_no: int
    step_tag: StepTag
    reason: str

    def __str__(self):
        return f"#{self.seq_no} {self.step_tag}: {self.reason}"


@dataclass
class AuditReport:
    violations: list = field(default_factory=list)
    checked: Counter = field(default_factory=Counter)
    structural_only: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations

    def by_tag(self, tag) -> list:
        return [v for v in self.violations if v.step_tag == StepTag(tag)]

    def summary(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [str(v) for v in self.violations],
            "checked": {str(k): n for k, n in sorted(self.checked.items())},
        }


def _oracle(plaintext_oracle) -> Callable | None:
    if plaintext_oracle is None:
        return None
    if isinstance(plaintext_oracle, SecretKey):
        sk = plaintext_oracle
        return lambda c: she.dec(sk, c)
    return plaintext_oracle


def audit_leakage(t: Transcript, plaintext_oracle=None) -> AuditReport:
    """Check every message of ``t``; violations are collected, never raised."""
    dec = _oracle(plaintext_oracle)
    report = AuditReport(structural_only=dec is None)
    seen = set()
    for msg in t.messages:
        if msg.seq_no in seen:
            report.violations.append(Violation(msg.seq_no, msg.step_tag, "duplicate sequence number"))
        seen.add(msg.seq_no)
        to_p2 = msg.direction is Direction.P1_TO_P2
        if to_p2 != (msg.step_tag in P2_INBOUND):
            report.violations.append(Violation(msg.seq_no, msg.step_tag, "step tag not allowed in this direction"))
            continue
        report.checked[msg.step_tag] += 1
        if not to_p2 or dec is None:
            continue
        witness = t.witness.get(msg.seq_no)
        check = _CHECKS.get(msg.step_tag)
        if check is None:
            continue
        if witness is None:
            report.violations.append(Violation(msg.seq_no, msg.step_tag, "no witness recorded for masked message"))
            continue
        for reason in check(msg, witness, dec):
            report.violations.append(Violation(msg.seq_no, msg.step_tag, reason))
    return report


def _values(dec, cs):
    return [dec(c) if isinstance(c, Ciphertext) else c for c in cs]


def _check_blinded_diff(msg, witness, dec):
    # zero exactly where the raw difference is zero; elsewhere not the raw value
    sent = _values(dec, msg.payload)
    raw = _values(dec, witness["raw"])
    if len(sent) != len(raw):
        yield "payload and witness lengths differ"
        return
    bad_zero = sum(1 for s, r in zip(sent, raw) if (s == 0) != (r == 0))
    if bad_zero:
        yield f"{bad_zero} entries have a zero pattern different from the raw values"
    exposed = sum(1 for s, r in zip(sent, raw) if r != 0 and s == r)
    if exposed:
        yield f"{exposed} nonzero entries reached P2 unblinded"


def _check_min_index(msg, witness, dec):
    raw = _values(dec, witness["raw"])
    sent = _values(dec, msg.payload[:len(raw)])
    if Counter(sent) == Counter(raw):
        yield "distances reached P2 without polynomial masking"
    elif any(s == r for s, r in zip(sent, raw)):
        yield "some distances reached P2 without polynomial masking"


def _check_rcc(msg, witness, dec):
    raw = _values(dec, witness["raw"])
    sent = _values(dec, msg.payload)
    m = witness["m"]
    exposed = sum(1 for s, r in zip(sent, raw) if r != 0 and s == r)
    if exposed:
        yield f"{exposed} aggregates reached P2 unblinded"
    d = (len(raw) - m) // m if m else 0
    for j in range(m):
        c, c2 = raw[j], sent[j]
        if c == 0:
            continue
        for l in range(d):
            s, s2 = raw[m + j * d + l], sent[m + j * d + l]
            if s != 0 and Fraction(s2) / c2 == Fraction(s) / c:
                yield f"cluster slot {j}: blinded ratio equals the centroid"
                break


def _check_nonk(msg, witness, dec):
    raw = _values(dec, witness["raw"])
    sent = _values(dec, msg.payload)
    if sent[0] == raw[0]:
        yield "threshold k reached P2 unmasked"
    exposed = sum(1 for s, r in zip(sent[1:], raw[1:]) if s == r)
    if exposed:
        yield f"{exposed} cluster counts reached P2 unmasked"


def _check_padded(msg, witness, dec):
    raw = _values(dec, witness["raw"])
    sent = _values(dec, msg.payload)
    exposed = sum(1 for s, r in zip(sent, raw) if s == r)
    if exposed:
        yield f"{exposed} counts reached P2 without a pad"


_CHECKS = {
    StepTag.DI_MASKED_MATRIX: _check_blinded_diff,
    StepTag.CA_DIFFERENCE: _check_blinded_diff,
    StepTag.MININDEX_MASKED_VECTOR: _check_min_index,
    StepTag.RCC_BLINDED_AGGREGATES: _check_rcc,
    StepTag.NONK_MASKED_COUNTS: _check_nonk,
    StepTag.SUPP_PADDED_COUNTS: _check_padded,
}
