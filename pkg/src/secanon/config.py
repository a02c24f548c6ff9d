"""Pipeline configuration: versioned YAML/JSON, unknown keys rejected."""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

CONFIG_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ColumnSpec(_Strict):
    name: str
    kind: Literal["numeric", "categorical", "text"] = "numeric"
    hierarchy: Optional[str] = None


class HierarchySpec(_Strict):
    path: str
    gap: int = Field(10_000, ge=1)
    dummy_nodes: int = Field(0, ge=0)


class DataSpec(_Strict):
    csv: str
    columns: list[ColumnSpec]
    hierarchies: dict[str, HierarchySpec] = {}


class SchemeSpec(_Strict):
    max_depth: int = Field(10, ge=1)
    plaintext_modulus_hint: int = 1099511627689


class IdentificationSpec(_Strict):
    k: int = Field(2, ge=1)
    max_combo: Optional[int] = Field(None, ge=1)


class RolesSpec(_Strict):
    direct: Optional[list[str]] = None
    quasi: Optional[list[str]] = None


class MaskSpec(_Strict):
    op: Literal["dictionary", "shift", "noise", "random", "redact"]
    values: Optional[list[Union[str, int]]] = None
    pad_min: int = Field(0, ge=0)
    s: Optional[int] = None
    x: Optional[float] = Field(None, gt=0, lt=1)
    bound: Optional[float] = Field(None, gt=0)
    lo: Optional[int] = None
    hi: Optional[int] = None
    fixed: int = -1

    @model_validator(mode="after")
    def _params(self):
        need = {"dictionary": ["values"], "shift": ["s"], "noise": ["x", "bound"], "random": ["lo", "hi"]}
        missing = [p for p in need.get(self.op, []) if getattr(self, p) is None]
        if missing:
            raise ValueError(f"masking op {self.op!r} needs {missing}")
        if self.op == "dictionary" and not self.values:
            raise ValueError("dictionary masking needs at least one value")
        return self


class DpSpec(_Strict):
    mechanism: Literal["laplace", "binary"]
    epsilon: float = Field(ge=0)
    lower: float
    upper: float

    @model_validator(mode="after")
    def _bounds(self):
        if self.lower > self.upper:
            raise ValueError("lower bound exceeds upper bound")
        if self.mechanism == "laplace" and self.epsilon <= 0:
            raise ValueError("laplace needs epsilon > 0")
        return self


class AnonSpec(_Strict):
    k: int = Field(2, ge=1)
    rounds: int = Field(3, ge=1)
    suppress: float = Field(0.0, ge=0, le=1)
    strategy: Literal["c2c", "p2c", "p2p"] = "c2c"
    init_seed: int = 0


class ReleaseSpec(_Strict):
    rounding: Literal["none", "nearest-integer", "float"] = "none"


class OutputSpec(_Strict):
    dir: str = "out"


class PipelineConfig(_Strict):
    version: int
    seed: int = Field(0, ge=0, lt=2 ** 64)
    scheme: SchemeSpec = SchemeSpec()
    data: DataSpec
    identification: IdentificationSpec = IdentificationSpec()
    roles: RolesSpec = RolesSpec()
    masking: dict[str, MaskSpec] = {}
    dp: dict[str, DpSpec] = {}
    anonymize: AnonSpec = AnonSpec()
    release: ReleaseSpec = ReleaseSpec()
    output: OutputSpec = OutputSpec()

    @field_validator("version")
    @classmethod
    def _version(cls, v):
        if v != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {v}; expected {CONFIG_VERSION}")
        return v

    @model_validator(mode="after")
    def _consistency(self):
        names = [c.name for c in self.data.columns]
        for c in self.data.columns:
            if c.kind == "categorical" and c.hierarchy not in self.data.hierarchies:
                raise ValueError(f"categorical column {c.name!r} references an undeclared hierarchy")
        for section, cols in (("masking", self.masking), ("dp", self.dp)):
            for col in cols:
                if col not in names:
                    raise ValueError(f"{section} refers to unknown column {col!r}")
        for role in ("direct", "quasi"):
            for col in getattr(self.roles, role) or []:
                if col not in names:
                    raise ValueError(f"roles.{role} refers to unknown column {col!r}")
        overlap = set(self.roles.direct or []) & set(self.roles.quasi or [])
        if overlap:
            raise ValueError(f"columns {sorted(overlap)} are both direct and quasi identifiers")
        clash = set(self.dp) & set(self.roles.quasi or [])
        if clash:
            raise ValueError(f"columns {sorted(clash)} cannot be both perturbed and generalized")
        return self


def load_config(path, check_files: bool = True) -> tuple[PipelineConfig, Path]:
    """Parse and validate a config file; relative paths resolve against its directory."""
    p = Path(path)
    try:
        raw = yaml.safe_load(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        cfg = PipelineConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    base = p.parent
    if check_files:
        files = [cfg.data.csv] + [h.path for h in cfg.data.hierarchies.values()]
        for f in files:
            if not (base / f).is_file():
                raise ConfigError(f"referenced file {f} does not exist")
    return cfg, base
