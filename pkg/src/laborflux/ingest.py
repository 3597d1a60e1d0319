"""Readers and writers for the delimited table formats.

Every file starts with a magic line `laborflux/<name>/<version>`, then a
column-header line, then comma-separated data rows (RFC quoting). Output is
byte-deterministic: fixed column order, floats at 10 significant digits,
'\n' line endings.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, DataError, SchemaError
from .model import (
    ClaimsRow,
    EmploymentRow,
    ExposureRow,
    LaborPanels,
    SeparationsRow,
    SkillRow,
    Taxonomy,
    UrateRow,
    load_taxonomy,
)
from .util import canonical_float

MAGIC_PREFIX = "laborflux"


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # "str" | "int" | "float"
    units: str = ""
    minimum: float | None = None
    maximum: float | None = None
    nullable: bool = False


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[Column, ...]
    key: tuple[str, ...]
    version: str = "v1"

    def __post_init__(self):
        names = [c.name for c in self.columns]
        for k in self.key:
            if k not in names:
                raise ConfigError(f"schema {self.name}: key column {k} not defined")

    @property
    def magic(self) -> str:
        return f"{MAGIC_PREFIX}/{self.name}/{self.version}"

    def key_indexes(self) -> tuple[int, ...]:
        names = [c.name for c in self.columns]
        return tuple(names.index(k) for k in self.key)


def _col(name, kind, units="", lo=None, hi=None, nullable=False):
    return Column(name, kind, units, lo, hi, nullable)


SCHEMAS: dict[str, TableSchema] = {}


def _register(name, columns, key):
    SCHEMAS[name] = TableSchema(name=name, columns=tuple(columns), key=tuple(key))


_register(
    "employment",
    [
        _col("state", "str"),
        _col("year", "int", "calendar year"),
        _col("occ", "str", "detailed SOC code"),
        _col("employment", "int", "workers", lo=0),
        _col("mean_wage", "float", "dollars/year", lo=0.0),
    ],
    ["state", "year", "occ"],
)
_register(
    "claims",
    [
        _col("state", "str"),
        _col("year", "int"),
        _col("month", "int", "1-12", lo=1, hi=12),
        _col("occ", "str", "major SOC group"),
        _col("recipients", "int", "benefit recipients", lo=0),
    ],
    ["state", "year", "month", "occ"],
)
_register(
    "urate",
    [
        _col("state", "str"),
        _col("year", "int"),
        _col("month", "int", "1-12", lo=1, hi=12),
        _col("rate", "float", "fraction of labor force", lo=0.0, hi=1.0),
    ],
    ["state", "year", "month"],
)
_register(
    "separations",
    [
        _col("state", "str"),
        _col("year", "int"),
        _col("month", "int", "1-12", lo=1, hi=12),
        _col("rate", "float", "separations per worker", lo=0.0, hi=1.0),
    ],
    ["state", "year", "month"],
)
_register(
    "skills",
    [
        _col("year", "int"),
        _col("occ", "str", "detailed SOC code"),
        _col("skill", "str", "skill identifier"),
        _col("importance", "float", "normalized importance", lo=0.0, hi=1.0),
    ],
    ["year", "occ", "skill"],
)
_register(
    "exposure",
    [
        _col("score", "str", "score short-hand"),
        _col("study", "str", "publishing study"),
        _col("wave", "int", "study wave", lo=1, hi=3),
        _col("occ", "str", "detailed SOC code"),
        _col("value", "float", "exposure score"),
    ],
    ["score", "occ"],
)
_register(
    "risk",
    [
        _col("state", "str"),
        _col("year", "int"),
        _col("month", "int", "1-12", lo=1, hi=12),
        _col("occ", "str", "major SOC group"),
        _col("p_soc_given_u", "float", "", lo=0.0, hi=1.0),
        _col("p_u", "float", "", lo=0.0, hi=1.0),
        _col("p_soc", "float", "", lo=0.0, hi=1.0),
        _col("risk", "float", "p(u|soc)", lo=0.0),
        _col("log10_risk", "float", "", nullable=True),
    ],
    ["state", "year", "month", "occ"],
)
_register(
    "risk_annual",
    [
        _col("state", "str"),
        _col("year", "int"),
        _col("occ", "str", "major SOC group"),
        _col("risk_median", "float", "median of monthly risk", lo=0.0),
        _col("log10_risk_median", "float", "", nullable=True),
    ],
    ["state", "year", "occ"],
)
_register(
    "state_exposure",
    [
        _col("score", "str"),
        _col("state", "str"),
        _col("year", "int"),
        _col("value", "float", "employment-weighted score"),
    ],
    ["score", "state", "year"],
)
_register(
    "skill_change",
    [
        _col("occ", "str", "detailed SOC code"),
        _col("year", "int", "update year"),
        _col("delta", "float", "1 - weighted Jaccard", lo=0.0, hi=1.0),
    ],
    ["occ"],
)
_register(
    "pca_components",
    [
        _col("component", "int", "0 = column means"),
        _col("skill", "str"),
        _col("value", "float", "loading or mean"),
    ],
    ["component", "skill"],
)
_register(
    "pca_variance",
    [
        _col("component", "int"),
        _col("fraction", "float", "explained-variance fraction", lo=0.0, hi=1.0),
        _col("cumulative", "float", "", lo=0.0),
    ],
    ["component"],
)
_register(
    "microtruth",
    [
        _col("state", "str"),
        _col("year", "int"),
        _col("month", "int", "1-12", lo=1, hi=12),
        _col("occ", "str", "detailed SOC code"),
        _col("employed", "int", "", lo=0),
        _col("unemployed", "int", "", lo=0),
    ],
    ["state", "year", "month", "occ"],
)


def _parse_cell(text: str, col: Column, row_idx: int, table: str):
    if col.nullable and text == "":
        return None
    try:
        if col.kind == "int":
            value = int(text)
        elif col.kind == "float":
            value = float(text)
            if math.isnan(value) or math.isinf(value):
                raise ValueError("non-finite")
        else:
            return text
    except ValueError:
        raise DataError(
            f"{table}: unparseable {col.kind} at row {row_idx}, column {col.name}: {text!r}"
        ) from None
    if col.minimum is not None and value < col.minimum:
        raise DataError(
            f"{table}: {col.name}={value} below {col.minimum} at row {row_idx}"
        )
    if col.maximum is not None and value > col.maximum:
        raise DataError(
            f"{table}: {col.name}={value} above {col.maximum} at row {row_idx}"
        )
    return value


def read_table(path: str | Path, schema: TableSchema) -> list[tuple]:
    """Read a table file into typed tuples, preserving file order."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"input file does not exist: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            magic_row = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected magic {schema.magic}") from None
        magic = magic_row[0] if magic_row else ""
        if magic != schema.magic:
            raise SchemaError(f"{path}: magic {magic!r} does not match {schema.magic!r}")
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: missing column header") from None
        expected = [c.name for c in schema.columns]
        if header != expected:
            raise SchemaError(f"{path}: columns {header} != {expected}")
        rows = []
        for idx, raw in enumerate(reader, start=1):
            if len(raw) != len(schema.columns):
                raise DataError(
                    f"{schema.name}: row {idx} has {len(raw)} fields, expected {len(schema.columns)}"
                )
            rows.append(
                tuple(
                    _parse_cell(cell, col, idx, schema.name)
                    for cell, col in zip(raw, schema.columns)
                )
            )
    return rows


def format_cell(value, col: Column) -> str:
    if value is None:
        if not col.nullable:
            raise DataError(f"column {col.name} is not nullable")
        return ""
    if col.kind == "int":
        return str(int(value))
    if col.kind == "float":
        return canonical_float(value)
    return str(value)


def render_table(rows, schema: TableSchema, sort_keys: bool = False) -> bytes:
    """Render rows to canonical bytes (used by write_table and tests)."""
    rows = list(rows)
    for idx, row in enumerate(rows, start=1):
        if len(row) != len(schema.columns):
            raise DataError(
                f"{schema.name}: row {idx} has {len(row)} fields, expected {len(schema.columns)}"
            )
    if sort_keys:
        ki = schema.key_indexes()
        rows.sort(key=lambda r: tuple(r[i] for i in ki))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([schema.magic])
    writer.writerow([c.name for c in schema.columns])
    for row in rows:
        writer.writerow([format_cell(v, c) for v, c in zip(row, schema.columns)])
    return buf.getvalue().encode("utf-8")


def write_table(rows, schema: TableSchema, path: str | Path, sort_keys: bool = False) -> int:
    """Write rows deterministically; returns the row count."""
    data = render_table(rows, schema, sort_keys=sort_keys)
    Path(path).write_bytes(data)
    return len(list(rows))


@dataclass(frozen=True)
class IngestPaths:
    employment: Path
    claims: Path
    urate: Path
    skills: Path
    exposure: Path
    separations: Path | None = None
    taxonomy: Path | None = None

    @classmethod
    def from_dir(cls, data_dir: str | Path, taxonomy: str | Path | None = None):
        d = Path(data_dir)
        sep = d / "separations.csv"
        tax = Path(taxonomy) if taxonomy else (d / "occupations.txt")
        return cls(
            employment=d / "employment.csv",
            claims=d / "claims.csv",
            urate=d / "urate.csv",
            skills=d / "skills.csv",
            exposure=d / "exposure.csv",
            separations=sep if sep.exists() else None,
            taxonomy=tax if tax.exists() else None,
        )


def _read_as(path, schema_name, row_type):
    try:
        return tuple(row_type(*r) for r in read_table(path, SCHEMAS[schema_name]))
    except (DataError, SchemaError) as exc:
        raise type(exc)(f"{path}: {exc}") from None


def load_all(paths: IngestPaths) -> LaborPanels:
    """Load the six input tables into validated-by-construction panels.

    Separations are optional; any per-file error propagates with the file
    path prepended.
    """
    taxonomy: Taxonomy | None = None
    if paths.taxonomy is not None:
        taxonomy = load_taxonomy(paths.taxonomy)
    employment = _read_as(paths.employment, "employment", EmploymentRow)
    claims = _read_as(paths.claims, "claims", ClaimsRow)
    urate = _read_as(paths.urate, "urate", UrateRow)
    skills = _read_as(paths.skills, "skills", SkillRow)
    exposures = _read_as(paths.exposure, "exposure", ExposureRow)
    separations = None
    if paths.separations is not None:
        separations = _read_as(paths.separations, "separations", SeparationsRow)
    return LaborPanels(
        employment=employment,
        claims=claims,
        urate=urate,
        skills=skills,
        exposures=exposures,
        separations=separations,
        taxonomy=taxonomy,
    )
