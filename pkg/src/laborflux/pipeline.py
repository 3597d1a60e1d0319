"""Full-analysis orchestration: stages, output directory layout, report.json.

Stage outputs land under the output directory as:
    risk_panel.csv, risk_annual.csv, state_exposure.csv, skill_change.csv,
    pca_components.csv, pca_variance.csv
    tables/*.csv, tables/*.txt     regression table families
    figures/*.svg                  chart analogues of the headline displays
    report.json                    every headline statistic with its spec

The whole program is a pure function of (input files, config, seed): a rerun
writes byte-identical report.json and tables at any LABORFLUX_THREADS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

from . import evaluate, risk, skills
from .errors import ConfigError, DataError
from .ingest import SCHEMAS, IngestPaths, load_all, write_table
from .model import validate_panels
from .synth import EDUCATION_SCORE
from .tables import (
    render_correlations_csv,
    render_cv_csv,
    render_family_csv,
    render_family_txt,
    render_stratified_csv,
)
from .util import stable_json


@dataclass(frozen=True)
class RunConfig:
    data_dir: Path
    out_dir: Path
    seed: int | None = None
    pca_k: int = 10
    cv_trials: int = 10
    cv_folds: int = 10
    inner_folds: int = 5
    lambda_grid_points: int = 20
    lambda_min_ratio: float = 1e-4
    education_score: str = EDUCATION_SCORE
    baseline_year: int = 2010
    skill_change_max_year: int = 2017
    annual_median: bool = False
    models: tuple[int, ...] = (1, 2, 3)
    taxonomy: Path | None = None
    stratified_min_rows: int = 30
    figures: bool = True

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is mandatory for randomized stages (set seed=... or --seed)")
        return self.seed


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def parse_kv_file(path: str | Path) -> dict:
    """key = value lines; '#' starts a comment."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file does not exist: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def run_config_from(raw: dict, overrides: dict | None = None) -> RunConfig:
    merged = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(merged) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    if "data_dir" not in merged or "out_dir" not in merged:
        raise ConfigError("config must set data_dir and out_dir")
    kwargs: dict = {}
    for f in fields(RunConfig):
        if f.name not in merged:
            continue
        value = merged[f.name]
        if isinstance(value, str):
            if f.name in ("data_dir", "out_dir", "taxonomy"):
                value = Path(value)
            elif f.name == "models":
                value = tuple(int(v) for v in value.split(",") if v.strip())
            elif f.name in ("annual_median", "figures"):
                if value.lower() not in _BOOL:
                    raise ConfigError(f"{f.name}: expected a boolean, got {value!r}")
                value = _BOOL[value.lower()]
            elif f.name == "education_score":
                pass
            elif f.name == "lambda_min_ratio":
                value = float(value)
            else:
                value = int(value)
        kwargs[f.name] = value
    return RunConfig(**kwargs)


def load_panels(config: RunConfig):
    paths = IngestPaths.from_dir(config.data_dir, config.taxonomy)
    panels = load_all(paths)
    report = validate_panels(panels)
    if not report.usable:
        raise DataError("panels are not usable:\n" + report.summary())
    return panels, report


def _fit_payload(bundle) -> dict:
    fit = bundle.fit
    payload = {
        "r2": fit.r2,
        "adj_r2": fit.adj_r2,
        "n": fit.n,
        "covariates": list(bundle.spec.covariates),
        "fixed_effects": list(bundle.spec.fixed_effects),
        "method": bundle.spec.method,
        "coefficients": {name: fit.coefficient(name) for name in fit.names},
    }
    if fit.lam is not None:
        payload["lambda"] = fit.lam
        payload["sweeps"] = fit.iterations
    return payload


def _cv_payload(report) -> dict:
    def _num(x):
        return None if (isinstance(x, float) and math.isnan(x)) else x

    return {
        "trials": report.trials,
        "folds": report.folds,
        "means": dict(report.means),
        "unseen_level_rows": report.unseen_level_rows,
        "comparisons": [
            {
                "base": c.base,
                "full": c.full,
                "t": c.t,
                "p": c.p,
                "factor_improvement": _num(c.factor_improvement),
            }
            for c in report.comparisons
        ],
    }


def run_analyze(config: RunConfig) -> dict:
    """Run every stage and write the output directory; returns the report."""
    seed = config.require_seed()
    out = Path(config.out_dir)
    tables_dir = out / "tables"
    figures_dir = out / "figures"
    out.mkdir(parents=True, exist_ok=True)
    tables_dir.mkdir(exist_ok=True)
    if config.figures:
        figures_dir.mkdir(exist_ok=True)

    panels, validation = load_panels(config)
    report: dict = {
        "seed": seed,
        "config": {
            "pca_k": config.pca_k,
            "cv_trials": config.cv_trials,
            "cv_folds": config.cv_folds,
            "inner_folds": config.inner_folds,
            "lambda_grid_points": config.lambda_grid_points,
            "lambda_min_ratio": config.lambda_min_ratio,
            "education_score": config.education_score,
            "baseline_year": config.baseline_year,
            "skill_change_max_year": config.skill_change_max_year,
            "models": list(config.models),
        },
        "validation": {
            "row_counts": validation.row_counts,
            "collisions": len(validation.collisions),
            "missing_cells": validation.missing_cells,
            "coverage": validation.coverage,
            "usable": validation.usable,
        },
    }

    # Risk panel.
    risk_panel = risk.unemployment_risk(panels)
    write_table(list(risk_panel.rows), SCHEMAS["risk"], out / "risk_panel.csv")
    annual = risk.annual_median_panel(risk_panel)
    write_table(annual, SCHEMAS["risk_annual"], out / "risk_annual.csv")
    report["risk"] = {
        "rows": len(risk_panel.rows),
        "skipped_cells": risk_panel.skip_counts,
        "zero_risk_rows": risk_panel.zero_risk_rows,
        "annual_rows": len(annual),
    }

    # State exposure.
    exposure_rows = []
    rejected_cells = 0
    for score in panels.score_names:
        rows, rejected = risk.state_exposure(panels, score)
        exposure_rows.extend(rows)
        rejected_cells += len(rejected)
    write_table(exposure_rows, SCHEMAS["state_exposure"], out / "state_exposure.csv", sort_keys=True)
    report["state_exposure"] = {"rows": len(exposure_rows), "rejected_cells": rejected_cells}

    # Skill PCA and skill change.
    matrix = skills.build_skill_matrix(panels)
    pca = skills.pca_fit(matrix.values, config.pca_k)
    comp_rows = [(0, skill, float(m)) for skill, m in zip(matrix.skills, pca.means)]
    for ci in range(pca.k):
        for skill, loading in zip(matrix.skills, pca.components[ci]):
            comp_rows.append((ci + 1, skill, float(loading)))
    write_table(comp_rows, SCHEMAS["pca_components"], out / "pca_components.csv")
    var_rows = []
    cum = 0.0
    for ci, frac in enumerate(pca.explained, start=1):
        cum += float(frac)
        var_rows.append((ci, float(frac), cum))
    write_table(var_rows, SCHEMAS["pca_variance"], out / "pca_variance.csv")
    report["pca"] = {
        "k": pca.k,
        "cumulative_explained": pca.cumulative_explained,
        "fractions": [float(f) for f in pca.explained[: pca.k]],
    }

    change_rows, change_diag = skills.build_skill_change(
        matrix, config.baseline_year, config.skill_change_max_year
    )
    write_table(change_rows, SCHEMAS["skill_change"], out / "skill_change.csv")
    report["skill_change"] = {"rows": len(change_rows), "diagnostics": change_diag}

    # Score correlations.
    corr = evaluate.score_correlations(panels)
    (tables_dir / "score_correlations.csv").write_bytes(render_correlations_csv(corr))
    report["correlations"] = {
        "names": list(corr.names),
        "mean_r2": corr.mean_r2,
        "median_r2": corr.median_r2,
        "undefined_pairs": [list(p) for p in corr.undefined_pairs],
    }

    # Risk model suite.
    table, keys, dropped = evaluate.build_risk_table(
        panels, risk_panel, pca, matrix, config.pca_k, config.education_score
    )
    report["risk"]["regression_rows"] = len(keys)
    report["risk"]["dropped"] = dropped
    suite = evaluate.run_model_suite(
        panels,
        table,
        keys,
        seed=seed,
        k=config.pca_k,
        education=config.education_score,
        inner_folds=config.inner_folds,
        grid_points=config.lambda_grid_points,
        min_ratio=config.lambda_min_ratio,
    )
    headline = [f"model{i}" for i in config.models]
    report["models"] = {
        name: _fit_payload(suite.bundles[name]) for name in headline if name in suite.bundles
    }
    simple_entries = [(n.split(":", 1)[1], suite.bundles[n]) for n in suite.simple_names]
    fe_entries = [(n, suite.bundles[n]) for n in suite.fe_names]
    (tables_dir / "risk_simple.txt").write_text(
        render_family_txt("Dependent variable: log10 unemployment risk by occupation, month, & state", simple_entries)
    )
    (tables_dir / "risk_simple.csv").write_bytes(render_family_csv(simple_entries))
    (tables_dir / "risk_fe.txt").write_text(
        render_family_txt("Dependent variable: log10 unemployment risk by occupation, month, & state", fe_entries)
    )
    (tables_dir / "risk_fe.csv").write_bytes(render_family_csv(fe_entries))
    report["risk_tables"] = {
        "simple": {n.split(":", 1)[1]: suite.bundles[n].fit.r2 for n in suite.simple_names},
        "fe": {n: suite.bundles[n].fit.r2 for n in suite.fe_names},
    }

    # Cross-validation per outcome.
    specs, _, _ = evaluate.risk_model_specs(panels, config.pca_k, config.education_score)
    cv_reports = {}
    cv_reports["risk"] = evaluate.cross_validate(
        table,
        [specs["model2"], specs["model3"]],
        trials=config.cv_trials,
        folds=config.cv_folds,
        seed=seed,
        comparisons=[("model2", "model3")],
        inner_folds=config.inner_folds,
        grid_points=config.lambda_grid_points,
        min_ratio=config.lambda_min_ratio,
    )
    outcome_names = ["urate"] + (["separations"] if panels.separations else [])
    for outcome in outcome_names:
        otable, _okeys, _odiag = evaluate.build_state_table(panels, outcome)
        base, full = evaluate.outcome_cv_specs(panels, outcome)
        cv_reports[outcome] = evaluate.cross_validate(
            otable,
            [base, full],
            trials=config.cv_trials,
            folds=config.cv_folds,
            seed=seed,
            comparisons=[("base", "full")],
            inner_folds=config.inner_folds,
            grid_points=config.lambda_grid_points,
            min_ratio=config.lambda_min_ratio,
        )
    stable_sc, _sckeys, _scdiag = evaluate.build_skillchange_table(
        panels, matrix, config.baseline_year, config.skill_change_max_year
    )
    cv_notes = {}
    # Folds need enough rows per level; tiny skill-change panels are skipped.
    if len(stable_sc["delta"]) >= 3 * config.cv_folds:
        base, full = evaluate.outcome_cv_specs(panels, "skill_change")
        try:
            cv_reports["skill_change"] = evaluate.cross_validate(
                stable_sc,
                [base, full],
                trials=config.cv_trials,
                folds=config.cv_folds,
                seed=seed,
                comparisons=[("base", "full")],
                inner_folds=config.inner_folds,
                grid_points=config.lambda_grid_points,
                min_ratio=config.lambda_min_ratio,
            )
        except DataError as exc:
            cv_notes["skill_change"] = str(exc)
    else:
        cv_notes["skill_change"] = (
            f"skipped: {len(stable_sc['delta'])} rows is too few for "
            f"{config.cv_folds}-fold cross-validation"
        )
    (tables_dir / "cv_observations.csv").write_bytes(render_cv_csv(cv_reports))
    report["cv"] = {name: _cv_payload(rep) for name, rep in cv_reports.items()}
    if cv_notes:
        report["cv_notes"] = cv_notes

    # Stratified analyses.
    strat_results = []
    for axis in ("occupation", "state", "year"):
        for score in panels.score_names:
            strat_results.append(
                evaluate.stratified_analysis(
                    table, axis, score, min_rows=config.stratified_min_rows
                )
            )
    (tables_dir / "stratified.csv").write_bytes(render_stratified_csv(strat_results))
    report["stratified"] = {
        axis: {
            res.score: {"levels": len(res.fits), "skipped": len(res.skipped)}
            for res in strat_results
            if res.axis == axis
        }
        for axis in ("occupation", "state", "year")
    }

    # Outcome regression families.
    for outcome in outcome_names + ["skill_change"]:
        family = evaluate.outcome_regressions(
            panels,
            outcome,
            matrix=matrix,
            baseline_year=config.baseline_year,
            max_year=config.skill_change_max_year,
        )
        simple = [(n.split(":", 1)[1], family.bundles[n]) for n in family.simple_names]
        multiple = [(n.split(":", 1)[1], family.bundles[n]) for n in family.multiple_names]
        titles = {
            "urate": "Dependent variable: log10 total unemployment rate by state & month",
            "separations": "Dependent variable: log10 total separations by state & month",
            "skill_change": "Dependent variable: within-occupation skill change vs baseline year",
        }
        (tables_dir / f"{outcome}_simple.txt").write_text(render_family_txt(titles[outcome], simple))
        (tables_dir / f"{outcome}_simple.csv").write_bytes(render_family_csv(simple))
        (tables_dir / f"{outcome}_multiple.txt").write_text(render_family_txt(titles[outcome], multiple))
        (tables_dir / f"{outcome}_multiple.csv").write_bytes(render_family_csv(multiple))
        report.setdefault("outcomes", {})[outcome] = {
            "rows": len(family.keys),
            "diagnostics": family.diagnostics,
            "simple_r2": {n.split(":", 1)[1]: family.bundles[n].fit.r2 for n in family.simple_names},
            "multiple_r2": {n.split(":", 1)[1]: family.bundles[n].fit.r2 for n in family.multiple_names},
        }

    if config.figures:
        from . import figures as figmod

        figmod.figure_correlations(corr, figures_dir / "score_correlations.svg")
        figmod.figure_model_r2(suite, config.models, figures_dir / "model_r2.svg")
        figmod.figure_cv(cv_reports, figures_dir / "cv_distributions.svg")
        figmod.figure_factor_improvements(cv_reports, figures_dir / "factor_improvement.svg")
        figmod.figure_occupation_heatmap(
            [r for r in strat_results if r.axis == "occupation"],
            figures_dir / "occupation_coefficients.svg",
        )
        figmod.figure_state_r2(
            [r for r in strat_results if r.axis == "state"], figures_dir / "state_r2.svg"
        )
        figmod.figure_year_paths(
            [r for r in strat_results if r.axis == "year"], figures_dir / "year_coefficients.svg"
        )
        figmod.figure_risk_distribution(annual, figures_dir / "risk_distribution.svg")
        figmod.figure_pca_variance(pca, figures_dir / "pca_variance.svg")

    (out / "report.json").write_text(stable_json(report))
    return report


def summarize_report(report: dict) -> str:
    """Human-readable digest of a report.json payload."""
    lines = ["laborflux analysis report", ""]
    rk = report.get("risk", {})
    lines.append(
        f"risk panel: {rk.get('rows', 0)} rows "
        f"({rk.get('zero_risk_rows', 0)} zero-risk, {rk.get('regression_rows', 0)} regression rows)"
    )
    corr = report.get("correlations", {})
    if corr:
        lines.append(
            f"score correlations: mean R^2 {corr['mean_r2']:.3f}, median R^2 {corr['median_r2']:.3f}"
        )
    models = report.get("models", {})
    for name in sorted(models):
        m = models[name]
        lines.append(f"{name}: R^2 {m['r2']:.3f} (adj {m['adj_r2']:.3f}, n={m['n']})")
    for outcome, cv in sorted(report.get("cv", {}).items()):
        for comp in cv["comparisons"]:
            factor = comp["factor_improvement"]
            factor_txt = f"{factor:.3f}" if factor is not None else "undefined"
            lines.append(
                f"cv {outcome}: {comp['base']} {cv['means'][comp['base']]:.3f} -> "
                f"{comp['full']} {cv['means'][comp['full']]:.3f}, "
                f"t={comp['t']:.2f}, p={comp['p']:.2e}, "
                f"factor improvement {factor_txt}"
            )
    for outcome, note in sorted(report.get("cv_notes", {}).items()):
        lines.append(f"cv {outcome}: {note}")
    pca = report.get("pca", {})
    if pca:
        lines.append(
            f"pca: first {pca['k']} components explain {pca['cumulative_explained']:.3f} of variance"
        )
    sc = report.get("skill_change", {})
    if sc:
        lines.append(f"skill change: {sc.get('rows', 0)} occupations")
    return "\n".join(lines) + "\n"
