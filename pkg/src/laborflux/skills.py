"""Skill-profile handling: Likert normalization, PCA, within-occupation change.

Profiles are annual importance vectors per detailed occupation. PCA centers
columns but does not rescale them (importances already share the [0, 1]
scale after Likert normalization; rescaling would inflate near-constant
skills). Skill change is one minus the weighted Jaccard similarity between
an occupation's updated profile and its baseline-year profile.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataError
from .model import LaborPanels, major_of


def normalize_likert(raw: float, scale_min: float, scale_max: float) -> float:
    """Map a raw survey value onto [0, 1]."""
    if scale_max <= scale_min:
        raise DataError(f"invalid Likert scale [{scale_min}, {scale_max}]")
    if raw < scale_min or raw > scale_max:
        raise DataError(f"raw value {raw} outside scale [{scale_min}, {scale_max}]")
    return (raw - scale_min) / (scale_max - scale_min)


@dataclass(frozen=True)
class SkillMatrix:
    """Dense profile matrix; rows keyed by (year, occ), columns by skill id."""

    row_keys: tuple[tuple[int, str], ...]
    skills: tuple[str, ...]
    values: np.ndarray  # (n_rows, n_skills)

    def profile(self, year: int, occ: str) -> np.ndarray:
        idx = self.row_keys.index((year, occ))
        return self.values[idx]

    @property
    def years(self) -> tuple[int, ...]:
        seen: dict[int, None] = {}
        for y, _ in self.row_keys:
            seen.setdefault(y, None)
        return tuple(sorted(seen))

    @property
    def occs(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for _, occ in self.row_keys:
            seen.setdefault(occ, None)
        return tuple(sorted(seen))


def build_skill_matrix(panels: LaborPanels) -> SkillMatrix:
    """Assemble the dense (year, occ) x skill matrix from skill rows."""
    skills = sorted({r.skill for r in panels.skills})
    col = {s: i for i, s in enumerate(skills)}
    keys = sorted(panels.skills_by_year_occ)
    values = np.zeros((len(keys), len(skills)))
    for i, key in enumerate(keys):
        profile = panels.skills_by_year_occ[key]
        if len(profile) != len(skills):
            missing = sorted(set(skills) - set(profile))
            raise DataError(f"profile {key} missing skills {missing[:5]} (dense set required)")
        for s, v in profile.items():
            values[i, col[s]] = v
    return SkillMatrix(row_keys=tuple(keys), skills=tuple(skills), values=values)


@dataclass(frozen=True)
class PcaModel:
    means: np.ndarray          # (d,)
    components: np.ndarray     # (k, d), orthonormal rows
    explained: np.ndarray      # full spectrum of variance fractions, sums to 1
    k: int

    @property
    def cumulative_explained(self) -> float:
        return float(np.sum(self.explained[: self.k]))


def _fix_signs(components: np.ndarray) -> np.ndarray:
    out = components.copy()
    for i in range(out.shape[0]):
        j = int(np.argmax(np.abs(out[i])))
        if out[i, j] < 0:
            out[i] = -out[i]
    return out


def pca_fit(values: np.ndarray, k: int) -> PcaModel:
    """Top-k principal components of the column-centered matrix.

    Components carry a deterministic sign: the largest-magnitude loading of
    each component is positive.
    """
    values = np.asarray(values, dtype=float)
    n, d = values.shape
    if k < 1:
        raise DataError(f"k={k} must be at least 1")
    if n < k:
        raise DataError(f"k={k} exceeds row count {n}")
    means = values.mean(axis=0)
    centered = values - means
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    total = float(np.sum(s**2))
    if total <= 0.0:
        raise DataError("matrix is constant; achievable rank 0")
    rank = int(np.sum(s > s[0] * max(n, d) * np.finfo(float).eps))
    if k > rank:
        raise DataError(f"k={k} exceeds achievable rank {rank}")
    explained = s**2 / total
    components = _fix_signs(vt[:k])
    return PcaModel(means=means, components=components, explained=explained, k=k)


def pca_project(model: PcaModel, profile: np.ndarray) -> np.ndarray:
    """Project one profile (d,) or a batch (n, d) onto the components."""
    profile = np.asarray(profile, dtype=float)
    if profile.shape[-1] != model.means.shape[0]:
        raise DataError(
            f"profile dimension {profile.shape[-1]} != model dimension {model.means.shape[0]}"
        )
    return (profile - model.means) @ model.components.T


def weighted_jaccard_distance(current: np.ndarray, baseline: np.ndarray) -> float:
    """1 - sum(min)/sum(max) over paired entries; undefined for two zero vectors."""
    current = np.asarray(current, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    if current.shape != baseline.shape:
        raise DataError("profiles have different dimensions")
    denom = float(np.sum(np.maximum(current, baseline)))
    if denom <= 0.0:
        raise DataError("both profiles are all-zero; distance undefined")
    num = float(np.sum(np.minimum(current, baseline)))
    return 1.0 - num / denom


def skill_change(matrix: SkillMatrix, occ: str, year: int, baseline_year: int = 2010) -> float:
    """Within-occupation change between `year` and the baseline year."""
    keys = dict.fromkeys(matrix.row_keys)
    if (baseline_year, occ) not in keys:
        raise DataError(f"no {baseline_year} profile for {occ}")
    if (year, occ) not in keys:
        raise DataError(f"no {year} profile for {occ}")
    return weighted_jaccard_distance(
        matrix.profile(year, occ), matrix.profile(baseline_year, occ)
    )


def detect_update_years(matrix: SkillMatrix, tol: float = 1e-12) -> dict[str, tuple[int, ...]]:
    """Years in which each occupation's profile changed from the prior year."""
    years = matrix.years
    by_occ: dict[str, dict[int, np.ndarray]] = {}
    for (year, occ), row in zip(matrix.row_keys, matrix.values):
        by_occ.setdefault(occ, {})[year] = row
    out: dict[str, tuple[int, ...]] = {}
    for occ in sorted(by_occ):
        present = sorted(y for y in years if y in by_occ[occ])
        changed = []
        for prev, cur in zip(present, present[1:]):
            if np.max(np.abs(by_occ[occ][cur] - by_occ[occ][prev])) > tol:
                changed.append(cur)
        out[occ] = tuple(changed)
    return out


class SkillChangeRow(NamedTuple):
    occ: str
    year: int
    delta: float


def build_skill_change(
    matrix: SkillMatrix, baseline_year: int = 2010, max_year: int = 2017, tol: float = 1e-12
):
    """Skill-change dataset: one row per occupation at its first update year.

    Occupations update through a rolling survey, so each occupation enters
    once, at the first year after the baseline in which its profile changed
    (restricted to `max_year`, before the taxonomy revision).
    """
    updates = detect_update_years(matrix, tol=tol)
    keys = dict.fromkeys(matrix.row_keys)
    rows: list[SkillChangeRow] = []
    diagnostics = {"never_updated": 0, "missing_baseline": 0, "zero_profiles": 0, "after_window": 0}
    for occ in sorted(updates):
        if (baseline_year, occ) not in keys:
            diagnostics["missing_baseline"] += 1
            continue
        chosen = [y for y in updates[occ] if baseline_year < y <= max_year]
        if not chosen:
            if updates[occ]:
                diagnostics["after_window"] += 1
            else:
                diagnostics["never_updated"] += 1
            continue
        year = chosen[0]
        try:
            delta = skill_change(matrix, occ, year, baseline_year)
        except DataError:
            diagnostics["zero_profiles"] += 1
            continue
        rows.append(SkillChangeRow(occ, year, delta))
    return rows, diagnostics
