import random
from pathlib import Path

import pytest

from secanon import she
from secanon.datamodel import Codebook, Column, PlainTable, Schema, encode_hierarchy, encrypt_table, load_csv
from secanon.twoparty import PartyOne, PartyTwo, Session, SessionConfig

DATA = Path(__file__).resolve().parent.parent / "data"

# The seven-row sample in data/table1.csv, kept literal so tests do not depend on the loader.
TABLE1 = [
    ("John", 18, "Male", 13122),
    ("Peter", 18, "Male", 13122),
    ("Mark", 19, "Male", 13122),
    ("Steven", 19, "Male", 13122),
    ("Jack", 18, "Male", 13121),
    ("Paul", 20, "Male", 13121),
    ("Andrew", 20, "Male", 13121),
]


@pytest.fixture(scope="session")
def kp():
    return she.keygen(seed=2024)


@pytest.fixture(scope="session")
def gender():
    return encode_hierarchy({"label": "Person", "children": ["Male", "Female"]}, name="gender")


@pytest.fixture
def table1(gender):
    schema = Schema([Column("Name", "text"), Column("Age"), Column("Gender", "categorical", "gender"),
                     Column("ZIP")], {"gender": gender})
    return load_csv(DATA / "table1.csv", schema, Codebook())


def numeric_table(rows):
    return PlainTable(Schema([Column(f"a{i}") for i in range(len(rows[0]))]), [list(r) for r in rows])


def make_session(kp, plain, seed=0, k=None, **cfg):
    ct = encrypt_table(kp.pk, plain)
    return Session(PartyOne(kp.pk, ct, k), PartyTwo(kp.sk, kp.pk), SessionConfig(seed=seed, **cfg))


@pytest.fixture
def rng():
    return random.Random(1234)


def decode_assignment(kp, result):
    """Plaintext cluster per row (``None`` for suppressed rows) from a ``KAnonResult``."""
    out = []
    for onehot, supp in zip(result.assignment, result.suppressed_indicator):
        if she.dec(kp.sk, supp) == 1:
            out.append(None)
            continue
        bits = [she.dec(kp.sk, c) for c in onehot]
        hits = [j for j in result.active if bits[j] == 1]
        assert len(hits) == 1
        out.append(hits[0])
    return out


def run_encrypted(kp, plain, k, strategy="c2c", threshold=0, seed=0, rounds=3, hierarchies=None, faults=None):
    from secanon.kanon import AnonConfig, secure_kanonymize
    from secanon.twoparty import Faults

    cfg = AnonConfig(k=k, rounds=rounds, suppression_threshold=threshold, reassign_strategy=strategy,
                     init_seed=seed)
    s = make_session(kp, plain, seed=seed, k=k, faults=faults or Faults())
    s.p1.hierarchies = dict(hierarchies or {})
    return s, secure_kanonymize(s, cfg)


# ------------------------------------------------------- acceptance report

def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config._acceptance_lines

    def _verdict(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return _verdict


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
