"""On-disk formats: key files and ``.ctab`` ciphertext tables.

A ``.ctab`` file is ``b"SCT1"``, a big-endian u32 header length, a UTF-8
JSON header, then named sections of length-prefixed ciphertext records in
the order the header lists them.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

from . import she
from .datamodel import CipherTable, Column, Schema
from .errors import ConfigError
from .she import Ciphertext, KeyPair, PublicKey, SchemeParams, SecretKey

MAGIC = b"SCT1"


def save_keys(kp: KeyPair, directory) -> tuple[Path, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    p = kp.params
    pub = {"key_id": kp.pk.key_id, "max_depth": p.max_depth,
           "plaintext_modulus_hint": p.plaintext_modulus_hint, "security_bits": p.security_bits}
    pk_path, sk_path = d / "pk.json", d / "sk.json"
    pk_path.write_text(json.dumps(pub, indent=1))
    sk_path.write_text(json.dumps({"key_id": kp.sk.key_id}))
    return pk_path, sk_path


def load_public_key(path) -> PublicKey:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read public key {path}: {exc}") from None
    params = SchemeParams(raw["plaintext_modulus_hint"], raw["max_depth"], raw["security_bits"])
    pk = PublicKey(raw["key_id"], params)
    she.default_scheme().register(pk)
    return pk


def load_secret_key(path) -> SecretKey:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read secret key {path}: {exc}") from None
    return SecretKey(raw["key_id"])


def save_ctab(path, table: CipherTable, extra: dict | None = None, meta: dict | None = None) -> None:
    """Write ``table`` plus optional extra ciphertext sections (name -> flat list)."""
    sections = {"cells": [c for row in table.cells for c in row]}
    sections.update(extra or {})
    header = {
        "columns": [{"name": c.name, "kind": c.kind, "hierarchy": c.hierarchy_ref} for c in table.schema.columns],
        "n_rows": table.n_rows,
        "key_id": table.key_id,
        "sections": {name: len(cs) for name, cs in sections.items()},
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack(">I", len(head)) + head)
        for cs in sections.values():
            for c in cs:
                fh.write(c.to_bytes())


def load_ctab(path, hierarchies: dict | None = None) -> tuple[CipherTable, dict, dict]:
    """Returns ``(table, extra_sections, meta)``."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if data[:4] != MAGIC:
        raise ConfigError(f"{path} is not a ciphertext table")
    (hlen,) = struct.unpack_from(">I", data, 4)
    header = json.loads(data[8:8 + hlen])
    pos = 8 + hlen
    sections = {}
    for name, count in header["sections"].items():
        out = []
        for _ in range(count):
            c, pos = Ciphertext.from_bytes(data, pos)
            out.append(c)
        sections[name] = out
    cols = [Column(c["name"], c["kind"], c["hierarchy"]) for c in header["columns"]]
    needed = {c.hierarchy_ref for c in cols if c.hierarchy_ref}
    hs = {k: v for k, v in (hierarchies or {}).items() if k in needed}
    schema = Schema(cols, hs)
    d = len(cols)
    flat = sections.pop("cells")
    cells = [flat[i * d:(i + 1) * d] for i in range(header["n_rows"])]
    return CipherTable(schema, cells, header["key_id"]), sections, header.get("meta", {})
