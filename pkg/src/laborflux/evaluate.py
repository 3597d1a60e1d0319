"""The analysis program: correlations, model suites, cross-validation,
significance tests, and stratified breakdowns.

Occupation-level covariates (exposure scores, education share, skill PCA
components) live on detailed codes; risk lives on major groups. They are
attached to risk rows as national employment-weighted means within each
major group, year-matched where the covariate is annual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .model import LaborPanels, major_of
from .regress import (
    DesignMatrix,
    LambdaSelection,
    ModelFit,
    build_design,
    inference_refit,
    lasso_fit,
    ols_fit,
    select_lambda,
    t_two_sided_p,
)
from .risk import RiskPanel, log_wage_bill, state_exposure
from .skills import PcaModel, SkillMatrix, build_skill_change, pca_project
from .synth import EDUCATION_SCORE
from .util import pmap


# ---------------------------------------------------------------------------
# Score correlations (pairwise, over jointly covered occupations)

@dataclass(frozen=True)
class CorrelationReport:
    names: tuple[str, ...]
    matrix: np.ndarray          # Pearson r, NaN where undefined
    common_counts: np.ndarray   # occupations shared by each pair
    undefined_pairs: tuple
    mean_r2: float
    median_r2: float


def score_correlations(panels: LaborPanels, occs=None) -> CorrelationReport:
    """Pearson correlation of score pairs across jointly covered occupations."""
    names = panels.score_names
    if len(names) < 2:
        raise DataError("need at least two scores to correlate")
    k = len(names)
    matrix = np.eye(k)
    counts = np.zeros((k, k), dtype=int)
    undefined = []
    r2s = []
    for i in range(k):
        counts[i, i] = len(panels.score_values[names[i]])
        for j in range(i + 1, k):
            a, b = panels.score_values[names[i]], panels.score_values[names[j]]
            common = sorted(set(a) & set(b))
            if occs is not None:
                common = [o for o in common if o in occs]
            counts[i, j] = counts[j, i] = len(common)
            if len(common) < 3:
                matrix[i, j] = matrix[j, i] = math.nan
                undefined.append((names[i], names[j]))
                continue
            va = np.array([a[o] for o in common])
            vb = np.array([b[o] for o in common])
            if va.std() == 0 or vb.std() == 0:
                matrix[i, j] = matrix[j, i] = math.nan
                undefined.append((names[i], names[j]))
                continue
            r = float(np.corrcoef(va, vb)[0, 1])
            matrix[i, j] = matrix[j, i] = r
            r2s.append(r * r)
    mean_r2 = float(np.mean(r2s)) if r2s else math.nan
    median_r2 = float(np.median(r2s)) if r2s else math.nan
    return CorrelationReport(
        names=names,
        matrix=matrix,
        common_counts=counts,
        undefined_pairs=tuple(undefined),
        mean_r2=mean_r2,
        median_r2=median_r2,
    )


# ---------------------------------------------------------------------------
# Covariate attachment

def _national_weights(panels: LaborPanels) -> dict:
    """(year, occ6) -> national employment, summed over states."""
    weights: dict[tuple, float] = {}
    for r in panels.employment:
        weights[(r.year, r.occ)] = weights.get((r.year, r.occ), 0.0) + r.employment
    return weights


def _major_covariate(panels, weights, values, year, occ_major):
    """Employment-weighted mean of an occ6-level covariate within a major."""
    num = den = 0.0
    for (yr, occ), w in weights.items():
        if yr != year or major_of(occ) != occ_major or occ not in values:
            continue
        num += w * values[occ]
        den += w
    if den <= 0.0:
        return None
    return num / den


def build_risk_table(
    panels: LaborPanels,
    risk_panel: RiskPanel,
    pca: PcaModel,
    matrix: SkillMatrix,
    k: int,
    education: str = EDUCATION_SCORE,
):
    """Regression rows for the risk analyses.

    One row per positive-risk (state, month, major occupation) observation,
    carrying log10 risk, every exposure score, the education share, the
    first k skill components, and the fixed-effect labels. Rows lacking a
    covariate are dropped and counted.
    """
    weights = _national_weights(panels)
    emp_years = sorted({y for (y, _) in weights})
    skill_years = matrix.years
    proj = pca_project(pca, matrix.values)  # (rows, k_model)

    # (skill_year, occ6) -> projection
    proj_by_key = {key: proj[i, :k] for i, key in enumerate(matrix.row_keys)}

    def skill_year_for(year):
        eligible = [y for y in skill_years if y <= year]
        return eligible[-1] if eligible else None

    score_cache: dict[tuple, float | None] = {}
    pca_cache: dict[tuple, np.ndarray | None] = {}

    def score_at(score, year, occ_major):
        yr = year if year in emp_years else (max(emp_years) if emp_years else None)
        key = (score, yr, occ_major)
        if key not in score_cache:
            score_cache[key] = _major_covariate(
                panels, weights, panels.score_values[score], yr, occ_major
            )
        return score_cache[key]

    def pca_at(year, occ_major):
        sy = skill_year_for(year)
        key = (sy, occ_major)
        if key in pca_cache:
            return pca_cache[key]
        if sy is None:
            pca_cache[key] = None
            return None
        num = np.zeros(k)
        den = 0.0
        emp_year = year if year in emp_years else max(emp_years)
        for (yr, occ), w in weights.items():
            if yr != emp_year or major_of(occ) != occ_major:
                continue
            vec = proj_by_key.get((sy, occ))
            if vec is None:
                continue
            num += w * vec
            den += w
        pca_cache[key] = num / den if den > 0 else None
        return pca_cache[key]

    # State-level exposures give the within-occupation strata a regressor
    # that varies across states.
    state_exp: dict[str, dict] = {}
    for s in panels.score_names:
        rows, _rej = state_exposure(panels, s)
        state_exp[s] = {(r.state, r.year): r.value for r in rows}

    score_names = panels.score_names
    cols: dict[str, list] = {name: [] for name in score_names}
    cols.update({f"state_exp:{name}": [] for name in score_names})
    cols.update({f"pca_{i + 1}": [] for i in range(k)})
    cols.update({"log10_risk": [], "year": [], "month": [], "state": [], "occ": []})
    keys = []
    dropped = {"zero_risk": 0, "missing_score": 0, "missing_pca": 0, "missing_state_exposure": 0}
    for r in risk_panel.rows:
        if r.log10_risk is None:
            dropped["zero_risk"] += 1
            continue
        values = {}
        ok = True
        for s in score_names:
            v = score_at(s, r.year, r.occ)
            if v is None:
                ok = False
                dropped["missing_score"] += 1
                break
            values[s] = v
        if not ok:
            continue
        vec = pca_at(r.year, r.occ)
        if vec is None:
            dropped["missing_pca"] += 1
            continue
        if any((r.state, r.year) not in state_exp[s] for s in score_names):
            dropped["missing_state_exposure"] += 1
            continue
        for s in score_names:
            cols[s].append(values[s])
            cols[f"state_exp:{s}"].append(state_exp[s][(r.state, r.year)])
        for i in range(k):
            cols[f"pca_{i + 1}"].append(float(vec[i]))
        cols["log10_risk"].append(r.log10_risk)
        cols["year"].append(r.year)
        cols["month"].append(r.month)
        cols["state"].append(r.state)
        cols["occ"].append(r.occ)
        keys.append((r.state, r.year, r.month, r.occ))
    table = {
        name: np.array(vals)
        for name, vals in cols.items()
    }
    if education not in table:
        raise DataError(f"education score {education} not present in exposure tables")
    return table, tuple(keys), dropped


def subset_table(table: dict, idx) -> dict:
    return {name: values[idx] for name, values in table.items()}


# ---------------------------------------------------------------------------
# Model suites

@dataclass(frozen=True)
class ModelSpec:
    name: str
    covariates: tuple[str, ...]
    fixed_effects: tuple[str, ...] = ()
    method: str = "lasso"  # or "ols"


@dataclass(frozen=True)
class FitBundle:
    spec: ModelSpec
    design: DesignMatrix
    fit: ModelFit
    refit: ModelFit | None = None
    selection: LambdaSelection | None = None


@dataclass(frozen=True)
class ModelSuiteResult:
    bundles: dict  # name -> FitBundle
    simple_names: tuple[str, ...]
    fe_names: tuple[str, ...]
    headline: tuple[str, str, str] = ("model1", "model2", "model3")

    def r2(self, name: str) -> float:
        return self.bundles[name].fit.r2


def risk_model_specs(panels: LaborPanels, k: int, education: str = EDUCATION_SCORE):
    """The headline trio plus the per-study simple and fixed-effect families."""
    scores = tuple(s for s in panels.score_names if s != education)
    pca_cols = tuple(f"pca_{i + 1}" for i in range(k))
    fe = ("year", "month", "state")
    baseline_covs = (education,) + pca_cols
    specs = {
        "model1": ModelSpec("model1", scores, (), "lasso"),
        "model2": ModelSpec("model2", baseline_covs, fe, "lasso"),
        "model3": ModelSpec("model3", scores + baseline_covs, fe, "lasso"),
    }
    simple, fes = [], []
    for study, study_scores in panels.studies().items():
        name = f"simple:{study}"
        specs[name] = ModelSpec(name, tuple(study_scores), (), "ols")
        simple.append(name)
    fes.append("model2")
    for study, study_scores in panels.studies().items():
        if education in study_scores:
            continue
        name = f"fe:{study}"
        specs[name] = ModelSpec(name, tuple(study_scores) + baseline_covs, fe, "lasso")
        fes.append(name)
    fes.append("model3")
    return specs, tuple(simple), tuple(fes)


def fit_model(
    table,
    keys,
    spec: ModelSpec,
    seed=0,
    inner_folds: int = 5,
    grid_points: int = 20,
    min_ratio: float = 1e-4,
) -> FitBundle:
    design = build_design(
        table,
        spec_response(table),
        spec.covariates,
        spec.fixed_effects,
        row_keys=keys,
    )
    if spec.method == "ols":
        return FitBundle(spec=spec, design=design, fit=ols_fit(design))
    selection = select_lambda(
        design, folds=inner_folds, seed=seed, grid_points=grid_points, min_ratio=min_ratio
    )
    fit = lasso_fit(design, selection.lam)
    refit = inference_refit(design, fit)
    return FitBundle(spec=spec, design=design, fit=fit, refit=refit, selection=selection)


def spec_response(table) -> str:
    for candidate in ("log10_risk", "log10_urate", "log10_separations", "delta"):
        if candidate in table:
            return candidate
    raise DataError("no recognized response column in table")


def run_model_suite(
    panels: LaborPanels,
    table,
    keys,
    seed: int,
    k: int,
    education: str = EDUCATION_SCORE,
    inner_folds: int = 5,
    grid_points: int = 20,
    min_ratio: float = 1e-4,
) -> ModelSuiteResult:
    """Fit the headline trio and both SI-style table families on risk rows."""
    specs, simple, fes = risk_model_specs(panels, k, education)
    bundles = {}
    for idx, (name, spec) in enumerate(specs.items()):
        bundles[name] = fit_model(
            table,
            keys,
            spec,
            seed=np.random.SeedSequence((seed, idx)),
            inner_folds=inner_folds,
            grid_points=grid_points,
            min_ratio=min_ratio,
        )
    return ModelSuiteResult(bundles=bundles, simple_names=simple, fe_names=fes)


# ---------------------------------------------------------------------------
# Welch t-test

def two_sample_ttest(a, b) -> tuple[float, float]:
    """Welch unequal-variance t statistic and two-sided p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise DataError("need at least two observations per sample")
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    ma, mb = float(a.mean()), float(b.mean())
    if va == 0.0 and vb == 0.0:
        if ma == mb:
            return 0.0, 1.0
        return math.copysign(math.inf, ma - mb), 0.0
    se2 = va / a.size + vb / b.size
    t = (ma - mb) / math.sqrt(se2)
    df = se2**2 / (
        (va / a.size) ** 2 / (a.size - 1) + (vb / b.size) ** 2 / (b.size - 1)
    )
    return t, t_two_sided_p(abs(t), df)


# ---------------------------------------------------------------------------
# Cross-validation

@dataclass(frozen=True)
class CvComparison:
    base: str
    full: str
    t: float
    p: float
    factor_improvement: float


@dataclass(frozen=True)
class CvReport:
    model_names: tuple[str, ...]
    values: dict  # name -> tuple of trials*folds out-of-sample R^2
    means: dict
    comparisons: tuple[CvComparison, ...]
    trials: int
    folds: int
    seed: int
    unseen_level_rows: int
    notes: tuple = ()


def _oos_r2(y, yhat) -> float:
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst <= 0.0:
        return 0.0
    return 1.0 - float(np.sum((y - yhat) ** 2)) / sst


def cross_validate(
    table,
    models,
    trials: int = 10,
    folds: int = 10,
    seed: int = 0,
    comparisons=(),
    inner_folds: int = 5,
    grid_points: int = 20,
    min_ratio: float = 1e-4,
) -> CvReport:
    """Repeated k-fold out-of-sample evaluation with LASSO refits per fold.

    Standardization and penalty selection use training rows only. Test rows
    with fixed-effect levels unseen in training score at the reference level
    and are counted. Same seed, same report, at any parallelism degree.
    """
    response = spec_response(table)
    n = len(table[response])
    if n < folds:
        raise DataError(f"{n} rows cannot form {folds} folds")
    trial_seqs = np.random.SeedSequence(seed).spawn(trials)

    def run_trial(t):
        rng = np.random.default_rng(trial_seqs[t])
        order = rng.permutation(n)
        out = {m.name: [] for m in models}
        unseen_total = 0
        for f, test_idx in enumerate(np.array_split(order, folds)):
            train_mask = np.ones(n, dtype=bool)
            train_mask[test_idx] = False
            train = subset_table(table, train_mask)
            test = subset_table(table, np.sort(test_idx))
            for mi, spec in enumerate(models):
                design = build_design(
                    train, response, spec.covariates, spec.fixed_effects, check_rank=False
                )
                selection = select_lambda(
                    design,
                    folds=inner_folds,
                    seed=np.random.SeedSequence((seed, t, f, mi)),
                    grid_points=grid_points,
                    min_ratio=min_ratio,
                )
                fit = lasso_fit(design, selection.lam)
                Xt, yt, unseen = design.transform(test)
                unseen_total += unseen
                out[spec.name].append(_oos_r2(yt, fit.predict(Xt)))
        return out, unseen_total

    results = pmap(run_trial, range(trials))
    values = {m.name: [] for m in models}
    unseen_rows = 0
    for out, unseen in results:
        for name, vals in out.items():
            values[name].extend(vals)
        unseen_rows += unseen
    values = {name: tuple(vals) for name, vals in values.items()}
    means = {name: float(np.mean(vals)) for name, vals in values.items()}
    comps = []
    for base, full in comparisons:
        t, p = two_sample_ttest(values[full], values[base])
        factor = means[full] / means[base] - 1.0 if means[base] > 0 else math.nan
        comps.append(CvComparison(base=base, full=full, t=t, p=p, factor_improvement=factor))
    return CvReport(
        model_names=tuple(m.name for m in models),
        values=values,
        means=means,
        comparisons=tuple(comps),
        trials=trials,
        folds=folds,
        seed=seed,
        unseen_level_rows=unseen_rows,
    )


# ---------------------------------------------------------------------------
# Stratified analyses

@dataclass(frozen=True)
class StratumFit:
    level: object
    n: int
    coef: float
    se: float
    pvalue: float
    ci_low: float
    ci_high: float
    r2: float
    reported: bool | None = None


@dataclass(frozen=True)
class StratifiedResult:
    axis: str
    score: str
    fits: tuple[StratumFit, ...]
    skipped: tuple  # (level, n)


_AXIS_SETUP = {
    "occupation": ("occ", ("year", "month", "state")),
    "state": ("state", ("year", "month")),
    "year": ("year", ("state", "month")),
}


def stratified_analysis(
    table, axis: str, score: str, min_rows: int = 30, report_p: float = 1e-2
) -> StratifiedResult:
    """Per-level simple regressions of the response on one score.

    Within an occupation stratum the occupation-level score has no
    cross-state variation, so the state-level exposure column stands in as
    the regressor there, controlled by month, year, and state fixed effects
    (the annual skill controls are absorbed by the year effects). State
    strata regress on the occupation-level score with year and month
    effects; year strata likewise with state and month effects. Levels with
    fewer than `min_rows` rows, or where the regressor is degenerate, are
    skipped.
    """
    if axis not in _AXIS_SETUP:
        raise DataError(f"unknown stratification axis: {axis}")
    level_col, fe = _AXIS_SETUP[axis]
    regressor = f"state_exp:{score}" if axis == "occupation" else score
    if regressor not in table:
        raise DataError(f"missing regressor column: {regressor}")
    response = spec_response(table)
    levels = sorted(set(np.asarray(table[level_col]).tolist()))

    # Variables are standardized once over the whole panel, so per-level
    # coefficients stay comparable across strata.
    from .regress import standardize

    table = dict(table)
    table[response] = standardize(np.asarray(table[response], dtype=float))
    table[regressor] = standardize(np.asarray(table[regressor], dtype=float))

    def run_level(level):
        mask = np.asarray(table[level_col]) == level
        n = int(mask.sum())
        if n < min_rows:
            return ("skip", (level, n))
        sub = subset_table(table, mask)
        try:
            design = build_design(
                sub,
                response,
                (regressor,),
                fe,
                standardize_response=False,
                standardize_covariates=False,
            )
        except DataError:
            return ("skip", (level, n))
        if regressor not in design.names:
            return ("skip", (level, n))  # regressor constant within the stratum
        fit = ols_fit(design)
        coef = fit.coefficient(regressor)
        se = fit.se_of(regressor)
        p = fit.p_of(regressor)
        lo, hi = fit.ci95(regressor)
        reported = (p < report_p) if axis == "occupation" else None
        return ("fit", StratumFit(level, n, coef, se, p, lo, hi, fit.r2, reported))

    outcomes = pmap(run_level, levels)
    fits = tuple(item for kind, item in outcomes if kind == "fit")
    skipped = tuple(item for kind, item in outcomes if kind == "skip")
    return StratifiedResult(axis=axis, score=score, fits=fits, skipped=skipped)


# ---------------------------------------------------------------------------
# State-level and skill-change outcome regressions

def build_state_table(panels: LaborPanels, outcome: str):
    """Rows per (state, month): log10 outcome, state exposures, wage bill."""
    if outcome not in ("urate", "separations"):
        raise DataError(f"unknown state-level outcome: {outcome}")
    source = panels.urate_by_cell if outcome == "urate" else panels.separations_by_cell
    if not source:
        raise DataError(f"no {outcome} rows available")
    exposures = {}
    rejected = 0
    for score in panels.score_names:
        rows, rej = state_exposure(panels, score)
        rejected += len(rej)
        exposures[score] = {(r.state, r.year): r.value for r in rows}
    wage_bills = {
        (state, year): log_wage_bill(panels, state, year)
        for (state, year) in panels.employment_by_state_year
    }
    cols: dict[str, list] = {f"log10_{outcome}": [], "log10_wage_bill": [], "year": [], "month": [], "state": []}
    for s in panels.score_names:
        cols[s] = []
    keys = []
    dropped = {"nonpositive_outcome": 0, "missing_exposure": 0, "missing_wage_bill": 0, "rejected_exposure_cells": rejected}
    for (state, year, month) in sorted(source):
        value = source[(state, year, month)]
        if value <= 0.0:
            dropped["nonpositive_outcome"] += 1
            continue
        bill = wage_bills.get((state, year))
        if bill is None:
            dropped["missing_wage_bill"] += 1
            continue
        if any((state, year) not in exposures[s] for s in panels.score_names):
            dropped["missing_exposure"] += 1
            continue
        cols[f"log10_{outcome}"].append(math.log10(value))
        cols["log10_wage_bill"].append(bill)
        cols["year"].append(year)
        cols["month"].append(month)
        cols["state"].append(state)
        for s in panels.score_names:
            cols[s].append(exposures[s][(state, year)])
        keys.append((state, year, month))
    return {name: np.array(vals) for name, vals in cols.items()}, tuple(keys), dropped


def build_skillchange_table(panels: LaborPanels, matrix: SkillMatrix, baseline_year=2010, max_year=2017):
    """Rows per detailed occupation at its update year, with raw scores."""
    rows, diagnostics = build_skill_change(matrix, baseline_year, max_year)
    cols: dict[str, list] = {"delta": [], "year": [], "major": []}
    for s in panels.score_names:
        cols[s] = []
    keys = []
    dropped_scores = 0
    for row in rows:
        if any(row.occ not in panels.score_values[s] for s in panels.score_names):
            dropped_scores += 1
            continue
        cols["delta"].append(row.delta)
        cols["year"].append(row.year)
        cols["major"].append(major_of(row.occ))
        for s in panels.score_names:
            cols[s].append(panels.score_values[s][row.occ])
        keys.append((row.occ, row.year))
    diagnostics = dict(diagnostics)
    diagnostics["missing_score"] = dropped_scores
    return {name: np.array(vals) for name, vals in cols.items()}, tuple(keys), diagnostics


@dataclass(frozen=True)
class OutcomeFamily:
    outcome: str
    table: dict
    keys: tuple
    diagnostics: dict
    bundles: dict  # name -> FitBundle
    simple_names: tuple[str, ...]
    multiple_names: tuple[str, ...]


def outcome_regressions(
    panels: LaborPanels,
    outcome: str,
    matrix: SkillMatrix | None = None,
    baseline_year: int = 2010,
    max_year: int = 2017,
) -> OutcomeFamily:
    """SI-style simple and multiple OLS families for one labor outcome."""
    if outcome == "skill_change":
        if matrix is None:
            raise DataError("skill_change regressions need the skill matrix")
        table, keys, diagnostics = build_skillchange_table(panels, matrix, baseline_year, max_year)
        response = "delta"
        base_covs: tuple[str, ...] = ()
        base_fe = ("year", "major")
    else:
        table, keys, diagnostics = build_state_table(panels, outcome)
        response = f"log10_{outcome}"
        base_covs = ("log10_wage_bill",)
        base_fe = ("year", "month")

    studies = panels.studies()
    bundles: dict[str, FitBundle] = {}
    simple_names, multiple_names = [], []

    def fit(name, covariates, fe):
        design = build_design(table, response, covariates, fe, row_keys=keys)
        bundles[name] = FitBundle(
            spec=ModelSpec(name, tuple(covariates), tuple(fe), "ols"),
            design=design,
            fit=ols_fit(design),
        )

    for study, study_scores in studies.items():
        name = f"simple:{study}"
        fit(name, tuple(study_scores), ())
        simple_names.append(name)

    fit("multiple:baseline", base_covs, base_fe)
    multiple_names.append("multiple:baseline")
    for study, study_scores in studies.items():
        name = f"multiple:{study}"
        fit(name, tuple(study_scores) + base_covs, base_fe)
        multiple_names.append(name)
    all_scores = tuple(panels.score_names)
    fit("multiple:combined", all_scores + base_covs, base_fe)
    multiple_names.append("multiple:combined")

    return OutcomeFamily(
        outcome=outcome,
        table=table,
        keys=keys,
        diagnostics=diagnostics,
        bundles=bundles,
        simple_names=tuple(simple_names),
        multiple_names=tuple(multiple_names),
    )


def outcome_cv_specs(panels: LaborPanels, outcome: str):
    """Baseline and with-scores model pair for the CV comparisons."""
    scores = tuple(panels.score_names)
    if outcome == "skill_change":
        base = ModelSpec("base", (), ("year", "major"))
        full = ModelSpec("full", scores, ("year", "major"))
    elif outcome in ("urate", "separations"):
        base = ModelSpec("base", ("log10_wage_bill",), ("year", "month"))
        full = ModelSpec("full", scores + ("log10_wage_bill",), ("year", "month"))
    else:
        raise DataError(f"unknown outcome: {outcome}")
    return base, full
