"""Synthetic labor-market microdata with planted score effects.

The market model keeps each occupation's employed headcount constant within
a year: displaced workers are replaced by fresh entrants the same month, and
benefit recipients leave the pool at a configurable exit rate (1.0 by
default, i.e. one-month spells). Monthly displacement is binomial with a
logistic hazard

    hazard = logistic(base + sum_i beta_i * score_i(occ) + state + seasonal + noise)

so every emitted aggregate table is an exact function of the retained counts
and the risk estimator can be checked against direct counting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .ingest import SCHEMAS, write_table
from .model import (
    DEFAULT_MAJORS,
    DEFAULT_STATES,
    ClaimsRow,
    EmploymentRow,
    ExposureRow,
    LaborPanels,
    SeparationsRow,
    SkillRow,
    Taxonomy,
    UrateRow,
    major_of,
)

EDUCATION_SCORE = "pct_college"


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 42
    n_states: int = 5
    n_majors: int = 10
    details_per_major: int = 3
    workers_per_state: int = 20000
    months: int = 36
    start_year: int = 2010
    n_scores: int = 8
    base_hazard_logit: float = -3.5
    beta: tuple[float, ...] = (0.0,) * 8  # per-score effect on the hazard log-odds
    state_effect_scale: float = 0.0
    seasonal_amplitude: float = 0.0
    hazard_noise_scale: float = 0.0
    spell_exit_rate: float = 1.0
    score_kind: str = "uniform"  # "major" (group-level) or "binary01" (occ parity)
    score_detail_jitter: float = 0.05  # detail spread inside a group for major scores
    share_concentration: float = 2.0
    employment_drift: float = 0.05  # lognormal sigma of annual headcount growth
    wage_low: float = 30000.0
    wage_high: float = 110000.0
    skill_years: tuple[int, ...] = tuple(range(2010, 2018))
    n_skills: int = 24
    skill_update_period: int = 5
    skill_drift_base: float = -1.0
    skill_drift_beta: float = 0.0
    skill_drift_noise: float = 0.4
    min_cell_workers: int = 5
    # Optional state-specific planted effect: one state gets extra hazard
    # loading on one score (for stratified-analysis ground truth).
    boost_state: int = -1
    boost_score: int = 0
    boost_beta: float = 0.0

    def __post_init__(self):
        if len(self.beta) != self.n_scores:
            raise ConfigError(
                f"beta has {len(self.beta)} entries for {self.n_scores} scores"
            )
        if not (0.0 < self.spell_exit_rate <= 1.0):
            raise ConfigError("spell_exit_rate must be in (0, 1]")

    @property
    def n_occ6(self) -> int:
        return self.n_majors * self.details_per_major

    @property
    def years(self) -> tuple[int, ...]:
        last = self.start_year + (self.months - 1) // 12
        return tuple(range(self.start_year, last + 1))


def preset(name: str, seed: int = 42, **overrides) -> SynthConfig:
    """Named configurations used throughout the test and acceptance suites."""
    if name == "null":
        cfg = SynthConfig(seed=seed)
    elif name == "default":
        cfg = SynthConfig(
            seed=seed,
            beta=(0.55,) * 8,
            state_effect_scale=0.25,
            seasonal_amplitude=0.20,
            hazard_noise_scale=0.05,
            skill_drift_beta=1.2,
        )
    elif name == "ensemble":
        # Wider taxonomy so 10 skill components cannot span the occupation
        # space, and enough states that state-level designs stay full rank;
        # equal moderate effects spread over all scores.
        cfg = SynthConfig(
            seed=seed,
            n_states=12,
            n_majors=21,
            details_per_major=4,
            workers_per_state=30000,
            beta=(0.65,) * 8,
            state_effect_scale=0.25,
            seasonal_amplitude=0.20,
            hazard_noise_scale=0.08,
            score_kind="major",
            skill_drift_beta=1.2,
        )
    elif name == "single":
        cfg = SynthConfig(
            seed=seed,
            n_states=8,
            n_majors=12,
            details_per_major=2,
            beta=(1.5,) + (0.0,) * 7,
            state_effect_scale=0.25,
            seasonal_amplitude=0.20,
            hazard_noise_scale=0.05,
            score_kind="major",
        )
    elif name == "ratio2":
        base = math.log(0.01 / 0.99)
        step = math.log(0.02 / 0.98) - base
        cfg = SynthConfig(
            seed=seed,
            n_majors=2,
            details_per_major=1,
            workers_per_state=20000,
            n_scores=1,
            beta=(step,),
            base_hazard_logit=base,
            score_kind="binary01",
        )
    else:
        raise ConfigError(f"unknown synth preset: {name}")
    return replace(cfg, **overrides) if overrides else cfg


def _occ_codes(config: SynthConfig) -> list[str]:
    majors = DEFAULT_MAJORS[: config.n_majors]
    if len(majors) < config.n_majors:
        raise ConfigError(f"at most {len(DEFAULT_MAJORS)} major groups available")
    return [f"{m}-{1000 + 10 * d + 1}" for m in majors for d in range(config.details_per_major)]


def _integer_allocation(total: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder rounding of total * weights to integers."""
    raw = weights / weights.sum() * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


@dataclass(frozen=True)
class MicroTruth:
    """Exact per-cell counts plus the hazards that generated them."""

    states: tuple[str, ...]
    occ6: tuple[str, ...]
    start_year: int
    months: int
    employed: np.ndarray    # (n_states, n_years, n_occ6), constant within a year
    unemployed: np.ndarray  # (n_states, n_occ6, months)
    displaced: np.ndarray   # (n_states, n_occ6, months)
    hazard: np.ndarray      # (n_states, n_occ6, months) realized hazards
    scores: dict            # name -> (n_occ6,) values
    wages: np.ndarray       # (n_occ6,)
    config: SynthConfig
    skill_updates: dict     # occ6 -> tuple of profile-update years

    def month_index(self, year: int, month: int) -> int:
        m = (year - self.start_year) * 12 + (month - 1)
        if m < 0 or m >= self.months:
            raise DataError(f"({year}, {month}) outside the generated horizon")
        return m

    def calendar(self, m: int) -> tuple[int, int]:
        return self.start_year + m // 12, m % 12 + 1

    @property
    def majors(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for occ in self.occ6:
            seen.setdefault(major_of(occ), None)
        return tuple(seen)

    def _occ_mask(self, occ: str) -> np.ndarray:
        if "-" in occ:
            return np.array([o == occ for o in self.occ6])
        return np.array([major_of(o) == occ for o in self.occ6])

    def employed_at(self, s: int, m: int) -> np.ndarray:
        return self.employed[s, m // 12]

    def enumerate_workers(self, state: str, year: int, month: int):
        """Expand the cell counts into per-worker (occ6, employed) records."""
        s = self.states.index(state)
        m = self.month_index(year, month)
        emp = self.employed_at(s, m)
        occ_idx: list[int] = []
        employed_flags: list[bool] = []
        for j in range(len(self.occ6)):
            occ_idx.extend([j] * int(emp[j]))
            employed_flags.extend([True] * int(emp[j]))
            occ_idx.extend([j] * int(self.unemployed[s, j, m]))
            employed_flags.extend([False] * int(self.unemployed[s, j, m]))
        return np.array(occ_idx), np.array(employed_flags)


def oracle_risk(truth: MicroTruth, state: str, year: int, month: int, occ: str):
    """Direct count: unemployed with last occupation `occ` over that
    occupation's labor-force members; None when the denominator is empty."""
    s = truth.states.index(state)
    m = truth.month_index(year, month)
    mask = truth._occ_mask(occ)
    unemployed = int(truth.unemployed[s, mask, m].sum())
    labor_force = int(truth.employed_at(s, m)[mask].sum()) + unemployed
    if labor_force == 0:
        return None
    return unemployed / labor_force


@dataclass(frozen=True)
class SynthResult:
    truth: MicroTruth
    panels: LaborPanels
    files: dict  # table name -> row list, in ingest schema order
    taxonomy_lines: tuple[str, ...]


def generate(config: SynthConfig) -> SynthResult:
    """Simulate the market and emit all six input tables plus the truth."""
    occ6 = _occ_codes(config)
    n_occ = len(occ6)
    states = list(DEFAULT_STATES[: config.n_states])
    ss = np.random.SeedSequence(config.seed)
    national_seed, *state_seeds = ss.spawn(config.n_states + 1)
    national = np.random.default_rng(national_seed)

    # National draws: scores, education share, wages, skill profiles.
    scores: dict[str, np.ndarray] = {}
    major_scores = None
    if config.score_kind == "major":
        # Scores vary across major groups along mutually orthogonal
        # directions (the published scores are largely uncorrelated), with
        # mild detail jitter inside each group.
        if config.n_scores > config.n_majors - 1:
            raise ConfigError("major-level scores need n_scores < n_majors")
        raw = national.normal(0.0, 1.0, (config.n_scores, config.n_majors))
        basis = []
        for v in raw:
            v = v - v.mean()
            for b in basis:
                v = v - (v @ b) * b
            v = v / np.linalg.norm(v)
            basis.append(v)
        major_scores = 0.5 + 0.17 * np.asarray(basis) * math.sqrt(config.n_majors)
    for i in range(config.n_scores):
        if config.score_kind == "binary01":
            z = (np.arange(n_occ) % 2).astype(float)
        elif config.score_kind == "major":
            j = config.score_detail_jitter
            jitter = national.uniform(-j, j, n_occ) if j > 0 else np.zeros(n_occ)
            z = np.clip(
                np.repeat(major_scores[i], config.details_per_major) + jitter, 0.0, 1.0
            )
        else:
            z = national.uniform(0.0, 1.0, n_occ)
        scores[f"score{i + 1:02d}"] = z
    education = national.uniform(0.0, 1.0, n_occ)
    wages = national.uniform(config.wage_low, config.wage_high, n_occ)

    beta = np.asarray(config.beta, dtype=float)
    score_stack = np.stack([scores[f"score{i + 1:02d}"] for i in range(config.n_scores)])
    occ_logit = config.base_hazard_logit + beta @ score_stack

    # Skill profiles with a rolling update schedule.
    baseline_profiles = national.uniform(0.0, 1.0, (n_occ, config.n_skills))
    drift_noise = national.normal(0.0, 1.0, n_occ)
    drift_intensity = 1.0 / (
        1.0
        + np.exp(
            -(
                config.skill_drift_base
                + config.skill_drift_beta * (beta @ score_stack)
                + config.skill_drift_noise * drift_noise
            )
        )
    )
    # Rolling survey: each occupation updates on its own cycle; offsets are
    # shuffled so update years stay unaligned with major groups.
    update_offset = national.permutation(n_occ) % config.skill_update_period
    first_update = config.skill_years[0] + 1 + update_offset
    skill_updates = {
        occ: tuple(
            y
            for y in config.skill_years
            if y >= first_update[j] and (y - first_update[j]) % config.skill_update_period == 0
        )
        for j, occ in enumerate(occ6)
    }
    skill_rows: list[SkillRow] = []
    profiles = baseline_profiles.copy()
    for year in config.skill_years:
        if year > config.skill_years[0]:
            for j, occ in enumerate(occ6):
                if year in skill_updates[occ]:
                    target = national.uniform(0.0, 1.0, config.n_skills)
                    profiles[j] = (1.0 - drift_intensity[j]) * profiles[j] + drift_intensity[j] * target
        for j, occ in enumerate(occ6):
            for k in range(config.n_skills):
                skill_rows.append(SkillRow(year, occ, f"sk{k + 1:03d}", float(profiles[j, k])))

    # Per-state simulation with independent sub-streams.
    n_years = len(config.years)
    employed = np.zeros((config.n_states, n_years, n_occ), dtype=np.int64)
    unemployed = np.zeros((config.n_states, n_occ, config.months), dtype=np.int64)
    displaced = np.zeros((config.n_states, n_occ, config.months), dtype=np.int64)
    hazard = np.zeros((config.n_states, n_occ, config.months))
    q = config.spell_exit_rate
    for s in range(config.n_states):
        rng = np.random.default_rng(state_seeds[s])
        weights = rng.dirichlet(np.full(n_occ, config.share_concentration))
        counts = _integer_allocation(config.workers_per_state, weights)
        if int(counts.min()) < config.min_cell_workers:
            raise ConfigError(
                f"state {states[s]}: occupation cell of {int(counts.min())} workers "
                f"below minimum {config.min_cell_workers}; raise workers_per_state"
            )
        state_effect = rng.normal(0.0, 1.0) * config.state_effect_scale
        state_logit = occ_logit
        if s == config.boost_state and config.boost_beta != 0.0:
            state_logit = occ_logit + config.boost_beta * score_stack[config.boost_score]
        pool = np.zeros(n_occ, dtype=np.int64)
        for m in range(config.months):
            if m % 12 == 0:
                if m > 0 and config.employment_drift > 0:
                    # Annual headcount revision: employed slots change at the
                    # January boundary and stay fixed for the year.
                    growth = np.exp(rng.normal(0.0, config.employment_drift, n_occ))
                    counts = np.maximum(
                        np.rint(counts * growth).astype(np.int64), config.min_cell_workers
                    )
                employed[s, m // 12] = counts
            seasonal = config.seasonal_amplitude * math.sin(2.0 * math.pi * (m % 12) / 12.0)
            noise = (
                rng.normal(0.0, 1.0, n_occ) * config.hazard_noise_scale
                if config.hazard_noise_scale > 0
                else np.zeros(n_occ)
            )
            logit = state_logit + state_effect + seasonal + noise
            h = 1.0 / (1.0 + np.exp(-logit))
            d = rng.binomial(counts, h)
            if q < 1.0:
                exits = rng.binomial(pool, q)
                pool = pool - exits + d
            else:
                pool = d.copy()
            hazard[s, :, m] = h
            displaced[s, :, m] = d
            unemployed[s, :, m] = pool

    truth = MicroTruth(
        states=tuple(states),
        occ6=tuple(occ6),
        start_year=config.start_year,
        months=config.months,
        employed=employed,
        unemployed=unemployed,
        displaced=displaced,
        hazard=hazard,
        scores={**scores, EDUCATION_SCORE: education},
        wages=wages,
        config=config,
        skill_updates=skill_updates,
    )

    # Emit tables, exact functions of the truth.
    employment_rows = []
    for s, state in enumerate(states):
        for yi, year in enumerate(config.years):
            for j, occ in enumerate(occ6):
                employment_rows.append(
                    EmploymentRow(state, year, occ, int(employed[s, yi, j]), float(wages[j]))
                )
    majors = truth.majors
    major_index = {mj: [j for j, o in enumerate(occ6) if major_of(o) == mj] for mj in majors}
    claims_rows, urate_rows, sep_rows = [], [], []
    for s, state in enumerate(states):
        for m in range(config.months):
            year, month = truth.calendar(m)
            e_total = int(employed[s, m // 12].sum())
            for mj in majors:
                count = int(unemployed[s, major_index[mj], m].sum())
                claims_rows.append(ClaimsRow(state, year, month, mj, count))
            u_total = int(unemployed[s, :, m].sum())
            urate_rows.append(UrateRow(state, year, month, u_total / (e_total + u_total)))
            d_total = int(displaced[s, :, m].sum())
            sep_rows.append(SeparationsRow(state, year, month, d_total / e_total))

    exposure_rows = []
    for i in range(config.n_scores):
        name = f"score{i + 1:02d}"
        wave = i % 3 + 1
        for j, occ in enumerate(occ6):
            exposure_rows.append(ExposureRow(name, name, wave, occ, float(scores[name][j])))
    for j, occ in enumerate(occ6):
        exposure_rows.append(ExposureRow(EDUCATION_SCORE, "education", 1, occ, float(education[j])))

    microtruth_rows = []
    for s, state in enumerate(states):
        for m in range(config.months):
            year, month = truth.calendar(m)
            for j, occ in enumerate(occ6):
                microtruth_rows.append(
                    (state, year, month, occ, int(employed[s, m // 12, j]), int(unemployed[s, j, m]))
                )

    taxonomy = Taxonomy(tuple(occ6), tuple(states))
    panels = LaborPanels(
        employment=tuple(employment_rows),
        claims=tuple(claims_rows),
        urate=tuple(urate_rows),
        skills=tuple(skill_rows),
        exposures=tuple(exposure_rows),
        separations=tuple(sep_rows),
        taxonomy=taxonomy,
    )
    files = {
        "employment": employment_rows,
        "claims": claims_rows,
        "urate": urate_rows,
        "separations": sep_rows,
        "skills": skill_rows,
        "exposure": exposure_rows,
        "microtruth": microtruth_rows,
    }
    lines = ["# synthetic occupation taxonomy"] + list(occ6)
    return SynthResult(truth=truth, panels=panels, files=files, taxonomy_lines=tuple(lines))


def write_files(result: SynthResult, out_dir: str | Path) -> dict:
    """Write the generated tables and taxonomy into a directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, rows in result.files.items():
        path = out / f"{name}.csv"
        write_table(rows, SCHEMAS[name], path, sort_keys=True)
        written[name] = path
    (out / "occupations.txt").write_text("\n".join(result.taxonomy_lines) + "\n")
    return written


def expected_log10_risk(truth: MicroTruth, state: str, year: int, month: int, occ: str):
    """Expectation of log10 risk under the realized hazards.

    Uses the recursive mean/variance of the recipient pool and a
    second-order delta correction, so planted-effect recovery can be judged
    against the true estimand rather than the sampled response.
    """
    s = truth.states.index(state)
    m = truth.month_index(year, month)
    mask = truth._occ_mask(occ)
    e = float(truth.employed_at(s, m)[mask].sum())
    q = truth.config.spell_exit_rate
    mean = 0.0
    var = 0.0
    for t in range(m + 1):
        emp_t = truth.employed_at(s, t)[mask]
        h_t = truth.hazard[s, mask, t]
        inflow_mean = float((emp_t * h_t).sum())
        inflow_var = float((emp_t * h_t * (1.0 - h_t)).sum())
        carried = (1.0 - q) * mean
        carried_var = (1.0 - q) ** 2 * var + q * (1.0 - q) * mean
        mean = inflow_mean + carried
        var = inflow_var + carried_var
    if mean <= 0.0:
        return None
    # E[ln U - ln(E+U)] ~ f(mean) + f''(mean) var / 2
    f = math.log(mean) - math.log(e + mean)
    fpp = -1.0 / mean**2 + 1.0 / (e + mean) ** 2
    return (f + 0.5 * fpp * var) / math.log(10.0)


@dataclass(frozen=True)
class RecoveryEntry:
    model: str
    name: str
    fitted: float
    implied: float
    se: float
    ok: bool


def planted_recovery_check(truth: MicroTruth, fits, n_se: float = 3.0):
    """Check fitted coefficients against the implied truth, within n_se SEs.

    `fits` maps a model label to (ModelFit, DesignMatrix); the design must
    carry (state, year, month, occ) row keys so the expected response can be
    reconstructed row by row.
    """
    entries: list[RecoveryEntry] = []
    for model, (fit, design) in fits.items():
        if design.row_keys is None:
            raise DataError(f"model {model}: design has no row keys")
        y_exp = np.array(
            [expected_log10_risk(truth, *key) for key in design.row_keys], dtype=float
        )
        if design.response_stats is not None:
            mean, sd = design.response_stats
            y_exp = (y_exp - mean) / sd
        implied, _, _, _ = np.linalg.lstsq(design.X, y_exp, rcond=None)
        for j, name in enumerate(design.names):
            if fit.se is None or not math.isfinite(fit.se[j]) or fit.se[j] <= 0:
                continue
            ok = abs(float(fit.coef[j]) - float(implied[j])) <= n_se * float(fit.se[j])
            entries.append(
                RecoveryEntry(model, name, float(fit.coef[j]), float(implied[j]), float(fit.se[j]), ok)
            )
    return entries
