"""Command-line front end.

Every command reads a pipeline config and works on artifacts in its output
directory, so the stages can run one at a time or all at once via
``pipeline``. Exit codes: 0 ok, 2 config error, 3 protocol error,
4 k-anonymity unsatisfiable.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import random
import sys
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

from . import dp as dpm
from . import masking, metrics, she
from .config import load_config
from .datamodel import (
    CipherTable, Codebook, Column, EncryptedDictionary, Schema, decrypt_table, encrypt_dictionary, encrypt_table,
    load_csv, load_hierarchy, write_csv,
)
from .errors import ConfigError, ProtocolError, Unsatisfiable
from .kanon import AnonConfig, secure_kanonymize
from .storage import load_ctab, load_public_key, load_secret_key, save_ctab, save_keys
from .twoparty import PartyOne, PartyTwo, Session, SessionConfig
from .vulnerability import secure_identify

log = logging.getLogger("secanon")

STAGES = ("encrypted", "masked", "perturbed")


class Context:
    def __init__(self, args):
        self.args = args
        self.cfg, self.base = load_config(args.config, check_files=True)
        if args.seed is not None:
            self.cfg = self.cfg.model_copy(update={"seed": args.seed})
        self.out = self.base / self.cfg.output.dir
        self.seed = self.cfg.seed
        self._hier = None
        self.sessions: list[Session] = []

    def path(self, name) -> Path:
        return self.out / name

    def rng(self, *label) -> random.Random:
        return random.Random(she.derive_seed(self.seed, *label))

    @property
    def hierarchies(self) -> dict:
        if self._hier is None:
            self._hier = {
                name: load_hierarchy(self.base / h.path, h.gap, h.dummy_nodes, she.derive_seed(self.seed, "dummy", name))
                for name, h in self.cfg.data.hierarchies.items()
            }
        return self._hier

    def schema(self) -> Schema:
        cols = [Column(c.name, c.kind, c.hierarchy) for c in self.cfg.data.columns]
        return Schema(cols, self.hierarchies)

    def pk(self):
        return load_public_key(self.path("keys/pk.json"))

    def sk(self):
        return load_secret_key(self.path("keys/sk.json"))

    def latest(self) -> Path:
        for stage in reversed(STAGES):
            p = self.path(f"{stage}.ctab")
            if p.exists():
                return p
        raise ConfigError("no encrypted table yet; run `encrypt` first")

    def session(self, table) -> Session:
        pk = self.pk()
        s = Session(PartyOne(pk, table), PartyTwo(self.sk(), pk), SessionConfig(seed=self.seed))
        self.sessions.append(s)
        return s

    def write_json(self, name, obj):
        self.path(name).write_text(json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    raise TypeError(type(x).__name__)


# ------------------------------------------------------------------ commands

def cmd_keygen(ctx: Context) -> int:
    params = she.SchemeParams(ctx.cfg.scheme.plaintext_modulus_hint, ctx.cfg.scheme.max_depth)
    kp = she.keygen(params, seed=ctx.seed)
    save_keys(kp, ctx.path("keys"))
    log.info("key %#x written to %s", kp.pk.key_id, ctx.path("keys"))
    return 0


def cmd_encrypt(ctx: Context) -> int:
    pk = ctx.pk()
    codebook = Codebook()
    table = load_csv(ctx.base / ctx.cfg.data.csv, ctx.schema(), codebook)
    extra = {}
    for col, plan in ctx.cfg.masking.items():
        if plan.op == "dictionary":
            kind = ctx.schema().column(col).kind
            values = [codebook.encode(col, str(v)) if kind == "text" else v for v in plan.values]
            extra[f"dict:{col}"] = list(encrypt_dictionary(pk, values).entries)
    for col, plan in ctx.cfg.dp.items():
        b = dpm.make_bounds(pk, Fraction(plan.lower), Fraction(plan.upper), plan.epsilon)
        extra[f"dp:{col}"] = [b.l_star, b.u_star]
    (ctx.out / "owner").mkdir(parents=True, exist_ok=True)
    ctx.path("owner/codebook.json").write_text(codebook.to_json())
    save_ctab(ctx.path("encrypted.ctab"), encrypt_table(pk, table), extra)
    log.info("encrypted %d rows x %d columns", table.n_rows, table.d)
    return 0


def _identify(ctx: Context, table: CipherTable, k=None, max_combo=None):
    k = k or ctx.cfg.identification.k
    max_combo = max_combo or ctx.cfg.identification.max_combo
    s = ctx.session(table)
    rep = secure_identify(s, k, max_combo)
    out = rep.as_dict()
    out["k"] = k
    ctx.write_json("detect.json", out)
    return out


def cmd_detect(ctx: Context) -> int:
    table, _, _ = load_ctab(ctx.path("encrypted.ctab"), ctx.hierarchies)
    out = _identify(ctx, table, getattr(ctx.args, "k", None), getattr(ctx.args, "max_combo", None))
    print(json.dumps(out, sort_keys=True))
    return 0


def _roles(ctx: Context) -> tuple[list[str], list[str]]:
    direct, quasi = ctx.cfg.roles.direct, ctx.cfg.roles.quasi
    if direct is None or quasi is None:
        p = ctx.path("detect.json")
        if not p.exists():
            raise ConfigError("identifier roles unknown: set roles in the config or run `detect` first")
        found = json.loads(p.read_text())
        if direct is None:
            direct = found["direct"]
        if quasi is None:
            quasi = sorted({c for s in found["minimal_quasi"] for c in s} - set(direct),
                           key=[c.name for c in ctx.cfg.data.columns].index)
    if set(direct) & set(quasi):
        raise ConfigError("a column cannot be both a direct and a quasi identifier")
    return list(direct), list(quasi)


def cmd_mask(ctx: Context) -> int:
    pk = ctx.pk()
    table, extra, meta = load_ctab(ctx.path("encrypted.ctab"), ctx.hierarchies)
    direct, _ = _roles(ctx)
    plans = dict(ctx.cfg.masking)
    for col in direct:
        plans.setdefault(col, None)
    cells = [list(r) for r in table.cells]
    for col, plan in plans.items():
        j = table.schema.index(col)
        rng = ctx.rng("mask", col)
        column = table.column(j)
        if plan is None:
            new = masking.mask_column(pk, column, "redact", rng, fixed=-1)
        elif plan.op == "dictionary":
            new = masking.mask_column(pk, column, "dictionary", rng, EncryptedDictionary(tuple(extra[f"dict:{col}"])),
                                      pad_min=plan.pad_min)
        else:
            params = {k: v for k, v in plan.model_dump().items() if k not in ("op", "values", "pad_min")}
            if plan.op == "noise":
                params = {"x": Fraction(plan.x), "bound": Fraction(plan.bound)}
            new = masking.mask_column(pk, column, plan.op, rng, **params)
        for i, c in enumerate(new):
            cells[i][j] = c
    save_ctab(ctx.path("masked.ctab"), CipherTable(table.schema, cells, table.key_id), extra,
              {"masked": sorted(plans)})
    log.info("masked columns %s", sorted(plans))
    return 0


def cmd_dp(ctx: Context) -> int:
    pk = ctx.pk()
    src = ctx.path("masked.ctab") if ctx.path("masked.ctab").exists() else ctx.path("encrypted.ctab")
    table, extra, meta = load_ctab(src, ctx.hierarchies)
    cells = [list(r) for r in table.cells]
    for col, plan in ctx.cfg.dp.items():
        j = table.schema.index(col)
        l_star, u_star = extra[f"dp:{col}"]
        bounds = dpm.DpBounds(l_star, u_star, plan.epsilon)
        rng = ctx.rng("dp", col)
        mech = dpm.laplace_encrypted if plan.mechanism == "laplace" else dpm.binary_encrypted
        for i in range(table.n_rows):
            cells[i][j] = mech(pk, cells[i][j], bounds, rng)
    meta = dict(meta, perturbed=sorted(ctx.cfg.dp))
    save_ctab(ctx.path("perturbed.ctab"), CipherTable(table.schema, cells, table.key_id), extra, meta)
    return 0


def _anon_config(ctx: Context) -> AnonConfig:
    a = ctx.cfg.anonymize
    args = ctx.args
    return AnonConfig(
        k=getattr(args, "k", None) or a.k,
        rounds=getattr(args, "rounds", None) or a.rounds,
        suppression_threshold=(Fraction(str(args.suppress)) / 100 if getattr(args, "suppress", None) is not None
                               else Fraction(str(a.suppress))),
        reassign_strategy=getattr(args, "strategy", None) or a.strategy,
        init_seed=a.init_seed,
    )


def cmd_anonymize(ctx: Context) -> int:
    table, extra, meta = load_ctab(ctx.latest(), ctx.hierarchies)
    _, quasi = _roles(ctx)
    if not quasi:
        raise ConfigError("no quasi-identifier columns to anonymize")
    cfg = _anon_config(ctx)
    s = ctx.session(table)
    res = secure_kanonymize(s, cfg, quasi)
    cells = [list(r) for r in table.cells]
    for q, col in enumerate(quasi):
        j = table.schema.index(col)
        for i in range(table.n_rows):
            cells[i][j] = res.table.cells[i][q]
    extra["suppressed"] = res.suppressed_indicator
    meta = dict(meta, quasi=quasi, k=cfg.k)
    save_ctab(ctx.path("anonymized.ctab"), CipherTable(table.schema, cells, table.key_id), extra, meta)
    ctx.write_json("anonymize_report.json", res.report.as_dict())
    print(json.dumps(res.report.as_dict(), sort_keys=True))
    return 0


def cmd_finalize(ctx: Context) -> int:
    """Trusted step: decrypt the anonymized table with sk and write the release CSV."""
    sk = ctx.sk()
    table, extra, meta = load_ctab(ctx.path("anonymized.ctab"), ctx.hierarchies)
    plain = decrypt_table(sk, table)
    suppressed = [i for i, c in enumerate(extra.get("suppressed", [])) if she.dec(sk, c) == 1]
    codebook = Codebook.from_json(ctx.path("owner/codebook.json").read_text())
    write_csv(ctx.path("release.csv"), plain, codebook, ctx.cfg.release.rounding, suppressed)
    ctx.write_json("finalize.json", {"suppressed_rows": suppressed, "released_rows": plain.n_rows - len(suppressed),
                                     "quasi": meta.get("quasi", [])})
    return 0


def _parse_release_value(col: Column, schema: Schema, raw: str):
    if col.kind == "categorical":
        return schema.hierarchies[col.hierarchy_ref].node_by_label(raw).code
    if col.kind == "text":
        return raw
    return Fraction(raw) if "/" in raw else Fraction(Decimal(raw))


def cmd_metrics(ctx: Context) -> int:
    schema = ctx.schema()
    fin = json.loads(ctx.path("finalize.json").read_text())
    quasi = ctx.args.quasi.split(",") if getattr(ctx.args, "quasi", None) else fin["quasi"]
    original = load_csv(ctx.base / ctx.cfg.data.csv, schema)
    keep = [i for i in range(original.n_rows) if i not in set(fin["suppressed_rows"])]
    with open(ctx.path("release.csv"), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[_parse_release_value(schema.column(h), schema, v) for h, v in zip(header, r)] for r in reader]
    idx = [header.index(q) for q in quasi]
    hier = {header.index(c.name): schema.hierarchies[c.hierarchy_ref]
            for c in schema.columns if c.kind == "categorical" and c.name in quasi}
    orig_rows = [original.rows[i] for i in keep]
    numeric = {}
    for q in quasi:
        c = schema.column(q)
        if c.kind == "numeric":
            vals = original.column(q)
            numeric[header.index(q)] = (min(vals), max(vals))
    remap = [[r[schema.index(h)] for h in header] for r in orig_rows]
    rep = metrics.report(rows, idx, hier, (), original.n_rows, numeric, remap)
    rep["discernibility"] += original.n_rows * len(fin["suppressed_rows"])
    rep["suppressed"] = len(fin["suppressed_rows"])
    out = {k: (str(v) if isinstance(v, Fraction) else v) for k, v in rep.items()}
    ctx.write_json("metrics.json", out)
    print(json.dumps(out, sort_keys=True))
    return 0


PIPELINE = [
    ("keygen", cmd_keygen, "keys/pk.json, keys/sk.json"),
    ("encrypt", cmd_encrypt, "encrypted.ctab, owner/codebook.json"),
    ("detect", cmd_detect, "detect.json"),
    ("mask", cmd_mask, "masked.ctab"),
    ("dp", cmd_dp, "perturbed.ctab"),
    ("anonymize", cmd_anonymize, "anonymized.ctab, anonymize_report.json"),
    ("finalize", cmd_finalize, "release.csv, finalize.json"),
    ("metrics", cmd_metrics, "metrics.json"),
]


def cmd_pipeline(ctx: Context) -> int:
    for name, fn, _ in PIPELINE:
        if name == "dp" and not ctx.cfg.dp:
            continue
        log.info("stage %s", name)
        fn(ctx)
    return 0


COMMANDS = {name: fn for name, fn, _ in PIPELINE}
COMMANDS["pipeline"] = cmd_pipeline


def _plan(ctx: Context, command: str) -> str:
    steps = [s for s in PIPELINE if command == "pipeline" or s[0] == command]
    lines = [f"config: {ctx.args.config} (version {ctx.cfg.version}, seed {ctx.seed})",
             f"output: {ctx.out}"]
    for name, _, arts in steps:
        if name == "dp" and not ctx.cfg.dp:
            continue
        lines.append(f"  {name:<10} -> {arts}")
    return "\n".join(lines)


def _percent(raw: str) -> Decimal:
    try:
        v = Decimal(raw)
    except ArithmeticError:
        raise argparse.ArgumentTypeError(f"not a number: {raw!r}") from None
    if not 0 <= v <= 100:
        raise argparse.ArgumentTypeError("percentage must lie in [0, 100]")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline config (YAML or JSON)")
    common.add_argument("--seed", type=int, help="override the config seed (u64)")
    common.add_argument("--dump-transcript", metavar="PATH", help="write the protocol transcript as ndjson")
    common.add_argument("--dry-run", action="store_true", help="print the plan and exit without writing")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="secanon", description="De-identification over encrypted tables.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("keygen", "encrypt", "mask", "dp", "finalize", "pipeline"):
        sub.add_parser(name, parents=[common])
    d = sub.add_parser("detect", parents=[common])
    d.add_argument("--k", type=int)
    d.add_argument("--max-combo", type=int)
    a = sub.add_parser("anonymize", parents=[common])
    a.add_argument("--k", type=int)
    a.add_argument("--rounds", type=int)
    a.add_argument("--suppress", type=_percent, metavar="PCT", help="suppression threshold, percent of rows")
    a.add_argument("--strategy", choices=["c2c", "p2c", "p2p"])
    m = sub.add_parser("metrics", parents=[common])
    m.add_argument("--quasi", help="comma-separated quasi-identifier columns")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        ctx = Context(args)
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.dry_run:
            print(_plan(ctx, args.command))
            return 0
        ctx.out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](ctx)
        if args.dump_transcript:
            with open(args.dump_transcript, "w", encoding="utf-8") as fh:
                for s in ctx.sessions:
                    for rec in s.transcript.records():
                        fh.write(json.dumps(dict(rec, session_id=s.transcript.session_id), sort_keys=True) + "\n")
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Unsatisfiable as exc:
        print(f"unsatisfiable: {exc}", file=sys.stderr)
        return 4
    except ProtocolError as exc:
        tag = f" at {exc.step_tag}" if exc.step_tag else ""
        print(f"protocol error{tag}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
