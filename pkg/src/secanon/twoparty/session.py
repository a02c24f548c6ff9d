"""In-process two-party channel between P1 (public key, encrypted table) and P2 (secret key)."""
from __future__ import annotations

import enum
import hashlib
import itertools
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

from .. import she
from ..errors import EmptyInput, ProtocolError, SizeMismatch
from ..she import Ciphertext, PublicKey, SecretKey

_session_ids = itertools.count(1)


class PartyRole(enum.Enum):
    P1 = "P1"
    P2 = "P2"


class Direction(enum.Enum):
    P1_TO_P2 = "P1->P2"
    P2_TO_P1 = "P2->P1"


class StepTag(str, enum.Enum):
    DI_MASKED_MATRIX = "DI_MaskedMatrix"
    DI_VECTOR = "DI_Vector"
    QI_QUERY = "QI_Query"
    QI_FLAG = "QI_Flag"
    MININDEX_MASKED_VECTOR = "MinIndex_MaskedVector"
    MININDEX_ONEHOT = "MinIndex_OneHot"
    RCC_BLINDED_AGGREGATES = "RCC_BlindedAggregates"
    RCC_DIVISIONS = "RCC_Divisions"
    NONK_MASKED_COUNTS = "NonK_MaskedCounts"
    NONK_FLAGS = "NonK_Flags"
    SUPP_PADDED_COUNTS = "Supp_PaddedCounts"
    SUPP_COUNTS = "Supp_Counts"
    REVEAL_ONEHOT = "Reveal_OneHot"
    REVEAL_INDEX = "Reveal_Index"
    CA_DIFFERENCE = "CA_Difference"
    CA_FLAGS = "CA_Flags"

    def __str__(self):
        return self.value


# Tags P1 is allowed to send to P2. Anything else reaching P2 is an audit failure.
P2_INBOUND = frozenset({
    StepTag.DI_MASKED_MATRIX, StepTag.QI_QUERY, StepTag.MININDEX_MASKED_VECTOR,
    StepTag.RCC_BLINDED_AGGREGATES, StepTag.NONK_MASKED_COUNTS, StepTag.SUPP_PADDED_COUNTS,
    StepTag.REVEAL_ONEHOT, StepTag.CA_DIFFERENCE,
})


@dataclass(frozen=True)
class Permutation:
    """Seeded bijection on ``range(size)``; ``apply(v)[i] == v[mapping[i]]``."""

    seed: int
    size: int
    mapping: tuple

    @classmethod
    def from_seed(cls, seed: int, size: int) -> "Permutation":
        order = list(range(size))
        random.Random(seed).shuffle(order)  # Fisher-Yates
        return cls(seed, size, tuple(order))

    @classmethod
    def identity(cls, size: int) -> "Permutation":
        return cls(0, size, tuple(range(size)))

    @classmethod
    def from_mapping(cls, mapping: Sequence[int], one_based: bool = False) -> "Permutation":
        m = tuple(x - 1 for x in mapping) if one_based else tuple(mapping)
        if sorted(m) != list(range(len(m))):
            raise ValueError("mapping is not a bijection")
        return cls(0, len(m), m)

    def is_identity(self) -> bool:
        return all(i == j for i, j in enumerate(self.mapping))

    def apply(self, v: Sequence) -> list:
        if len(v) != self.size:
            raise SizeMismatch(f"vector of length {len(v)} for permutation of size {self.size}")
        return [v[j] for j in self.mapping]

    def invert(self, w: Sequence) -> list:
        if len(w) != self.size:
            raise SizeMismatch(f"vector of length {len(w)} for permutation of size {self.size}")
        out = [None] * self.size
        for i, j in enumerate(self.mapping):
            out[j] = w[i]
        return out


def permute(perm: Permutation, v: Sequence) -> list:
    return perm.apply(v)


def invert(perm: Permutation, v: Sequence) -> list:
    return perm.invert(v)


@dataclass
class Message:
    seq_no: int
    direction: Direction
    step_tag: StepTag
    payload: tuple
    params: dict = field(default_factory=dict)

    def payload_bytes(self, include_nonce: bool = True) -> bytes:
        parts = []
        for item in self.payload:
            if isinstance(item, Ciphertext):
                parts.append(item.to_bytes(include_nonce))
            else:
                parts.append(repr(item).encode())
        return b"\x00".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.payload_bytes()).hexdigest()

    def record(self) -> dict:
        return {
            "seq_no": self.seq_no,
            "direction": self.direction.value,
            "step_tag": self.step_tag.value,
            "payload_digest": self.digest(),
            "payload_len": len(self.payload),
        }


@dataclass
class Transcript:
    session_id: int
    rng_seeds: dict
    messages: list = field(default_factory=list)
    # P1-local, pre-masking ciphertexts keyed by seq_no. Never sent, never persisted;
    # the auditor uses them to check what reached P2 against what P1 started from.
    witness: dict = field(default_factory=dict, repr=False)

    def append(self, msg: Message):
        if self.messages and msg.seq_no <= self.messages[-1].seq_no:
            raise ProtocolError("transcript sequence numbers must increase")
        self.messages.append(msg)

    def by_tag(self, tag: StepTag) -> list:
        return [m for m in self.messages if m.step_tag == tag]

    def records(self) -> list[dict]:
        return [m.record() for m in self.messages]

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def fingerprint(self) -> str:
        """Digest of the whole transcript with nonces zeroed (for determinism checks)."""
        h = hashlib.sha256()
        for m in self.messages:
            h.update(f"{m.seq_no}|{m.direction.value}|{m.step_tag.value}|".encode())
            h.update(json.dumps(m.params, sort_keys=True, default=str).encode())
            h.update(m.payload_bytes(include_nonce=False))
        return h.hexdigest()


@dataclass(frozen=True)
class Faults:
    """Deliberate protocol faults, used only to test the leakage auditor."""

    identity_permutation: bool = False
    identity_poly: bool = False
    unit_rcc_blinder: bool = False
    zero_di_blinder: bool = False


@dataclass(frozen=True)
class SessionConfig:
    seed: int = 0
    faults: Faults = Faults()
    poly_max_degree: int = 5
    poly_min_degree: int = 2
    blinder_bits: int = 32


class PartyOne:
    """Holds the public key, the encrypted table and k. Cannot decrypt."""

    role = PartyRole.P1

    def __init__(self, pk: PublicKey, table=None, k: int | None = None, hierarchies=None):
        if isinstance(pk, SecretKey):
            raise TypeError("P1 must never hold the secret key")
        self.pk = pk
        self.table = table
        self.k = k
        self.hierarchies = dict(hierarchies or {})
        self.rng = random.Random(0)

    def enc(self, m) -> Ciphertext:
        return she.enc(self.pk, m)


class PartyTwo:
    """Holds the secret key; answers P1's requests on masked data."""

    role = PartyRole.P2

    def __init__(self, sk: SecretKey, pk: PublicKey):
        self._sk = sk
        self.pk = pk
        self.rng = random.Random(0)
        self.patterns: dict = {}

    def _dec(self, c: Ciphertext):
        return she.dec(self._sk, c)

    def _enc(self, m) -> Ciphertext:
        return she.enc(self.pk, m)

    # direct-identifier check, P2 side
    def zero_patterns(self, payload: Sequence[Ciphertext], n: int) -> list:
        if len(payload) != n * n:
            raise SizeMismatch("masked matrix is not N x N")
        flat = [self._dec(c) == 0 for c in payload]
        return [flat[u * n:(u + 1) * n] for u in range(n)]

    def receive_masked_matrix(self, payload, n, attr):
        self.patterns[attr] = self.zero_patterns(payload, n)
        return ()

    def direct_vector(self, payload, k):
        return tuple(any(sum(row) < k for row in self.patterns[a]) for a in sorted(self.patterns))

    def quasi_flag(self, payload, attrs, k):
        pats = [self.patterns[a] for a in attrs]
        n = len(pats[0])
        for j in range(n):
            count = sum(1 for l in range(n) if all(p[j][l] for p in pats))
            if count < k:
                return (True,)
        return (False,)

    def argmin_onehot(self, payload, valid: bool = False):
        if valid:
            m = len(payload) // 2
            values = [self._dec(c) for c in payload[:m]]
            flags = [self._dec(c) for c in payload[m:]]
        else:
            values = [self._dec(c) for c in payload]
            flags = [1] * len(values)
        best = None
        for j, (v, ok) in enumerate(zip(values, flags)):
            if ok and (best is None or v < values[best]):
                best = j
        if best is None:
            raise EmptyInput("no valid entry in masked vector")
        return tuple(self._enc(1 if j == best else 0) for j in range(len(values)))

    def divide(self, payload, m: int, d: int):
        counts = payload[:m]
        sums = payload[m:]
        divs, empty = [], []
        for j in range(m):
            c = self._dec(counts[j])
            if c == 0:
                empty.append(True)
                divs.extend(self._enc(0) for _ in range(d))
                continue
            empty.append(False)
            for l in range(d):
                divs.append(self._enc(Fraction(self._dec(sums[j * d + l])) / c))
        return tuple(divs) + tuple(empty)

    def nonk_flags(self, payload):
        mark = self._dec(payload[0])
        return tuple(self._dec(c) < mark for c in payload[1:])

    def padded_counts(self, payload):
        return tuple(self._dec(c) for c in payload)

    def reveal_index(self, payload):
        values = [self._dec(c) for c in payload]
        ones = [j for j, v in enumerate(values) if v == 1]
        if len(ones) != 1 or any(v not in (0, 1) for v in values):
            raise ProtocolError("reveal request is not a one-hot vector")
        return (ones[0],)

    def zero_flags(self, payload):
        return tuple(self._dec(c) == 0 for c in payload)


class Session:
    """One protocol run: both parties, the channel and its transcript."""

    def __init__(self, p1: PartyOne, p2: PartyTwo, config: SessionConfig | None = None):
        if p1.pk.key_id != p2.pk.key_id:
            raise ProtocolError("parties hold keys from different key pairs")
        self.p1 = p1
        self.p2 = p2
        self.config = config or SessionConfig()
        seed = self.config.seed
        self.rng_seeds = {
            "P1": she.derive_seed(seed, "P1"),
            "P2": she.derive_seed(seed, "P2"),
            "PRP": she.derive_seed(seed, "PRP"),
        }
        p1.rng = random.Random(self.rng_seeds["P1"])
        p2.rng = random.Random(self.rng_seeds["P2"])
        self.transcript = Transcript(next(_session_ids), dict(self.rng_seeds))
        self._seq = 0

    @property
    def pk(self) -> PublicKey:
        return self.p1.pk

    @property
    def faults(self) -> Faults:
        return self.config.faults

    def permutation(self, size: int, *label) -> Permutation:
        if self.faults.identity_permutation:
            return Permutation.identity(size)
        return Permutation.from_seed(she.derive_seed(self.rng_seeds["PRP"], *label), size)

    def masking_poly(self, input_depth: int) -> she.MaskingPolynomial:
        if self.faults.identity_poly:
            return she.MaskingPolynomial.identity()
        budget = self.pk.params.max_depth - input_depth
        return she.MaskingPolynomial.random(
            self.p1.rng, max_degree=min(self.config.poly_max_degree, budget),
            min_degree=self.config.poly_min_degree)

    def blinder(self, low: int = 1) -> int:
        return self.p1.rng.randint(low, 1 << self.config.blinder_bits)

    def _record(self, direction, tag, payload, params=None, witness=None) -> Message:
        self._seq += 1
        msg = Message(self._seq, direction, StepTag(tag), tuple(payload), dict(params or {}))
        self.transcript.append(msg)
        if witness is not None:
            self.transcript.witness[msg.seq_no] = witness
        return msg

    def send(self, tag, payload, handler: Callable, params=None, witness=None):
        """P1 -> P2 message; P2's handler output is returned without a reply record."""
        self._record(Direction.P1_TO_P2, tag, payload, params, witness)
        try:
            return handler(tuple(payload), **(params or {}))
        except ProtocolError as exc:
            raise exc.with_step(StepTag(tag))

    def reply(self, tag, handler: Callable, params=None):
        """P2 -> P1 message with no preceding request in the same step."""
        try:
            payload = handler((), **(params or {}))
        except ProtocolError as exc:
            raise exc.with_step(StepTag(tag))
        self._record(Direction.P2_TO_P1, tag, payload, params)
        return payload

    def exchange(self, tag, payload, reply_tag, handler: Callable, params=None, witness=None,
                 reply_params=None):
        """P1 -> P2 request, P2 -> P1 reply; both recorded."""
        reply = self.send(tag, payload, handler, params, witness)
        self._record(Direction.P2_TO_P1, reply_tag, reply, reply_params)
        return reply


class Protocol(str, enum.Enum):
    DIRECT_IDENTIFIER = "direct_identifier"
    VULNERABILITY = "vulnerability"
    KANON = "kanon"


def run_session(p1: PartyOne, p2: PartyTwo, protocol, config: SessionConfig | None = None,
                **kwargs) -> tuple[Any, Transcript]:
    """Run one protocol end to end; returns ``(result, transcript)``."""
    protocol = Protocol(protocol)
    if p1.table is None or p1.table.n_rows == 0:
        raise EmptyInput("P1 holds no rows")
    session = Session(p1, p2, config)
    if protocol is Protocol.DIRECT_IDENTIFIER:
        from ..vulnerability import secure_direct_identifiers
        result = secure_direct_identifiers(session, kwargs.get("k", p1.k))
    elif protocol is Protocol.VULNERABILITY:
        from ..vulnerability import secure_identify
        result = secure_identify(session, kwargs.get("k", p1.k), kwargs.get("max_combo"))
    else:
        from ..kanon import secure_kanonymize
        result = secure_kanonymize(session, kwargs["anon_config"], kwargs.get("columns"))
    return result, session.transcript
