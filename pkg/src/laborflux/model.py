"""Domain types: occupation codes, taxonomies, ingested labor panels, validation.

Everything here is immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .errors import DataError

_OCC_RE = re.compile(r"^(\d{2})(?:-(\d{4}))?$")

# Postal codes for the 50 states plus DC, the default state universe.
DEFAULT_STATES = (
    "AK AL AR AZ CA CO CT DC DE FL GA HI IA ID IL IN KS KY LA MA MD ME MI MN "
    "MO MS MT NC ND NE NH NJ NM NV NY OH OK OR PA RI SC SD TN TX UT VA VT WA "
    "WI WV WY"
).split()

# Two-digit major occupation groups of the SOC system.
DEFAULT_MAJORS = (
    "11 13 15 17 19 21 23 25 27 29 31 33 35 37 39 41 43 45 47 49 51 53 55"
).split()


@dataclass(frozen=True)
class OccCode:
    """Occupation code: 2-digit major group, optionally a 4-digit detail."""

    major: str
    detail: str | None = None

    @property
    def is_major(self) -> bool:
        return self.detail is None

    def __str__(self) -> str:
        return self.major if self.detail is None else f"{self.major}-{self.detail}"


def parse_occ(code: str) -> OccCode:
    """Parse "XX" or "XX-XXXX"; raises DataError on malformed input."""
    m = _OCC_RE.match(code.strip()) if isinstance(code, str) else None
    if m is None:
        raise DataError(f"malformed occupation code: {code!r}")
    return OccCode(m.group(1), m.group(2))


def major_of(code: str) -> str:
    """Major (2-digit) group of an occupation code; idempotent on majors."""
    return parse_occ(code).major


@dataclass(frozen=True)
class Taxonomy:
    """One SOC vintage: the detailed codes in play plus the state universe."""

    codes: tuple[str, ...]
    states: tuple[str, ...] = tuple(DEFAULT_STATES)

    def __post_init__(self):
        for c in self.codes:
            parse_occ(c)

    @property
    def occ6(self) -> tuple[str, ...]:
        return tuple(c for c in self.codes if parse_occ(c).detail is not None)

    @property
    def majors(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for c in self.codes:
            seen.setdefault(major_of(c), None)
        return tuple(seen)

    def has_state(self, state: str) -> bool:
        return state in self.states


def load_taxonomy(path: str | Path, states=None) -> Taxonomy:
    """Read a taxonomy file: one code per line, '#' starts a comment."""
    codes = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            codes.append(str(parse_occ(line)))
    if not codes:
        raise DataError(f"taxonomy file {path} lists no occupation codes")
    return Taxonomy(tuple(codes), tuple(states) if states else tuple(DEFAULT_STATES))


class PanelKey(NamedTuple):
    state: str
    year: int
    month: int
    occ: str


class EmploymentRow(NamedTuple):
    state: str
    year: int
    occ: str  # detailed (6-digit) code
    employment: int
    mean_wage: float


class ClaimsRow(NamedTuple):
    state: str
    year: int
    month: int
    occ: str  # major (2-digit) code
    recipients: int


class UrateRow(NamedTuple):
    state: str
    year: int
    month: int
    rate: float


class SeparationsRow(NamedTuple):
    state: str
    year: int
    month: int
    rate: float


class SkillRow(NamedTuple):
    year: int
    occ: str
    skill: str
    importance: float


class ExposureRow(NamedTuple):
    score: str
    study: str
    wave: int
    occ: str
    value: float


def _index_unique(rows, keyfn, table):
    """Build key -> row dict, collecting duplicate keys."""
    out, dupes = {}, []
    for row in rows:
        k = keyfn(row)
        if k in out:
            dupes.append(k)
        else:
            out[k] = row
    return out, [(table, k) for k in dupes]


class LaborPanels:
    """The six ingested tables plus derived lookup indexes.

    Treat as immutable once built; all mutation happens in __init__.
    """

    def __init__(
        self,
        employment: tuple[EmploymentRow, ...],
        claims: tuple[ClaimsRow, ...],
        urate: tuple[UrateRow, ...],
        skills: tuple[SkillRow, ...],
        exposures: tuple[ExposureRow, ...],
        separations: tuple[SeparationsRow, ...] | None = None,
        taxonomy: Taxonomy | None = None,
    ):
        self.employment = tuple(employment)
        self.claims = tuple(claims)
        self.urate = tuple(urate)
        self.separations = tuple(separations) if separations is not None else None
        self.skills = tuple(skills)
        self.exposures = tuple(exposures)
        if taxonomy is None:
            codes: dict[str, None] = {}
            for r in self.employment:
                codes.setdefault(r.occ, None)
            states: dict[str, None] = {}
            for r in self.employment:
                states.setdefault(r.state, None)
            taxonomy = Taxonomy(tuple(codes), tuple(states))
        self.taxonomy = taxonomy
        self._collisions: list[tuple[str, tuple]] = []
        self._build_indexes()

    def _build_indexes(self):
        emp_map, d1 = _index_unique(
            self.employment, lambda r: (r.state, r.year, r.occ), "employment"
        )
        claims_map, d2 = _index_unique(
            self.claims, lambda r: (r.state, r.year, r.month, r.occ), "claims"
        )
        urate_map, d3 = _index_unique(
            self.urate, lambda r: (r.state, r.year, r.month), "urate"
        )
        sep_map, d4 = _index_unique(
            self.separations or (), lambda r: (r.state, r.year, r.month), "separations"
        )
        skill_map, d5 = _index_unique(
            self.skills, lambda r: (r.year, r.occ, r.skill), "skills"
        )
        expo_map, d6 = _index_unique(
            self.exposures, lambda r: (r.score, r.occ), "exposure"
        )
        self._collisions = d1 + d2 + d3 + d4 + d5 + d6

        # employment by (state, year): occ6 -> row
        self.employment_by_state_year: dict[tuple, dict[str, EmploymentRow]] = {}
        for r in self.employment:
            self.employment_by_state_year.setdefault((r.state, r.year), {})[r.occ] = r
        # claims by (state, year, month): major -> recipients
        self.claims_by_cell: dict[tuple, dict[str, int]] = {}
        for r in self.claims:
            self.claims_by_cell.setdefault((r.state, r.year, r.month), {})[r.occ] = r.recipients
        self.urate_by_cell = {(r.state, r.year, r.month): r.rate for r in urate_map.values()}
        self.separations_by_cell = {
            (r.state, r.year, r.month): r.rate for r in sep_map.values()
        }
        # skill profile lookup: (year, occ6) -> {skill: importance}
        self.skills_by_year_occ: dict[tuple, dict[str, float]] = {}
        for r in self.skills:
            self.skills_by_year_occ.setdefault((r.year, r.occ), {})[r.skill] = r.importance
        # exposure scores: name -> {occ6: value}; plus study/wave metadata
        self.score_values: dict[str, dict[str, float]] = {}
        self.score_meta: dict[str, tuple[str, int]] = {}
        for r in self.exposures:
            self.score_values.setdefault(r.score, {})[r.occ] = r.value
            self.score_meta.setdefault(r.score, (r.study, r.wave))

    @property
    def score_names(self) -> tuple[str, ...]:
        return tuple(self.score_values)

    def studies(self) -> dict[str, list[str]]:
        """Score names grouped by study, in first-appearance order."""
        out: dict[str, list[str]] = {}
        for name, (study, _wave) in self.score_meta.items():
            out.setdefault(study, []).append(name)
        return out

    def monthly_cells(self) -> list[tuple[str, int, int]]:
        """All (state, year, month) cells present in any monthly table."""
        cells: dict[tuple, None] = {}
        for src in (self.claims_by_cell, self.urate_by_cell, self.separations_by_cell):
            for k in src:
                cells.setdefault(k, None)
        return sorted(cells)

    def major_employment(self, state: str, year: int) -> dict[str, int]:
        """Employment counts aggregated from detailed to major codes."""
        out: dict[str, int] = {}
        for occ, row in self.employment_by_state_year.get((state, year), {}).items():
            out[major_of(occ)] = out.get(major_of(occ), 0) + row.employment
        return out


@dataclass(frozen=True)
class ValidationReport:
    row_counts: dict
    collisions: tuple
    missing_cells: dict
    coverage: dict
    low_coverage: tuple
    usable: bool
    coverage_threshold: float = 0.90
    notes: tuple = field(default_factory=tuple)

    def summary(self) -> str:
        lines = ["panel validation"]
        for table, n in self.row_counts.items():
            lines.append(f"  {table}: {n} rows")
        lines.append(f"  key collisions: {len(self.collisions)}")
        for table, k in self.collisions[:10]:
            lines.append(f"    {table} {k}")
        for table, n in self.missing_cells.items():
            lines.append(f"  missing (state, month) cells in {table}: {n}")
        for score, cov in self.coverage.items():
            flag = "  [below threshold]" if score in self.low_coverage else ""
            lines.append(f"  exposure coverage {score}: {cov:.4f}{flag}")
        lines.append(f"  usable: {self.usable}")
        return "\n".join(lines)


def _check_range(table, idx, name, value, lo=None, hi=None):
    if lo is not None and value < lo:
        raise DataError(f"{table} row {idx}: {name}={value} below {lo}")
    if hi is not None and value > hi:
        raise DataError(f"{table} row {idx}: {name}={value} above {hi}")


def validate_panels(panels: LaborPanels, strict: bool = True) -> ValidationReport:
    """Check key uniqueness, value ranges, grid completeness, score coverage.

    Range violations always raise. Duplicate keys raise when strict (the
    default); with strict=False they are only reported, and the panels are
    flagged unusable.
    """
    for i, r in enumerate(panels.employment, start=1):
        _check_range("employment", i, "employment", r.employment, lo=0)
        _check_range("employment", i, "mean_wage", r.mean_wage, lo=0.0)
    for i, r in enumerate(panels.claims, start=1):
        _check_range("claims", i, "recipients", r.recipients, lo=0)
    for i, r in enumerate(panels.urate, start=1):
        _check_range("urate", i, "rate", r.rate, lo=0.0, hi=1.0)
    for i, r in enumerate(panels.separations or (), start=1):
        _check_range("separations", i, "rate", r.rate, lo=0.0, hi=1.0)
    for i, r in enumerate(panels.skills, start=1):
        _check_range("skills", i, "importance", r.importance, lo=0.0, hi=1.0)
    for i, r in enumerate(panels.claims, start=1):
        if r.month < 1 or r.month > 12:
            raise DataError(f"claims row {i}: month={r.month} outside [1, 12]")

    if panels._collisions and strict:
        table, key = panels._collisions[0]
        raise DataError(f"duplicate key in {table}: {key}")

    row_counts = {
        "employment": len(panels.employment),
        "claims": len(panels.claims),
        "urate": len(panels.urate),
        "separations": len(panels.separations or ()),
        "skills": len(panels.skills),
        "exposure": len(panels.exposures),
    }

    # Missing (state, year, month) cells per monthly table, against the grid
    # observed across all monthly tables.
    grid = panels.monthly_cells()
    claim_cells = set(panels.claims_by_cell)
    urate_cells = set(panels.urate_by_cell)
    missing = {
        "claims": sum(1 for c in grid if c not in claim_cells),
        "urate": sum(1 for c in grid if c not in urate_cells),
    }
    if panels.separations is not None:
        sep_cells = set(panels.separations_by_cell)
        missing["separations"] = sum(1 for c in grid if c not in sep_cells)

    emp_occ6: dict[str, None] = {}
    for r in panels.employment:
        emp_occ6.setdefault(r.occ, None)
    coverage = {}
    for score in panels.score_names:
        covered = sum(1 for occ in emp_occ6 if occ in panels.score_values[score])
        coverage[score] = covered / len(emp_occ6) if emp_occ6 else 0.0
    threshold = 0.90
    low = tuple(s for s, c in coverage.items() if c < threshold)

    return ValidationReport(
        row_counts=row_counts,
        collisions=tuple(panels._collisions),
        missing_cells=missing,
        coverage=coverage,
        low_coverage=low,
        usable=not panels._collisions,
        coverage_threshold=threshold,
    )
