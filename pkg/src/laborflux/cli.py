"""Command-line entry point: one binary, one subcommand per pipeline stage.

Stages communicate only through files, so partial reruns are cheap. Exit
codes: 0 success, 1 data error, 2 configuration error. The only environment
variable consulted is LABORFLUX_THREADS (parallelism degree; results are
identical at any setting).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import evaluate, pipeline, risk, skills
from .errors import ConfigError, LaborfluxError
from .ingest import SCHEMAS, write_table
from .pipeline import RunConfig, parse_kv_file, run_config_from
from .synth import SynthConfig, generate, preset, write_files


def _parse_synth_config(path: str | None, seed_override=None, preset_override=None) -> SynthConfig:
    raw = parse_kv_file(path) if path else {}
    preset_name = preset_override or raw.pop("preset", None)
    cfg = preset(preset_name, seed=int(raw.pop("seed", 42))) if preset_name else None
    known = {f.name: f for f in fields(SynthConfig)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown synth config key: {key}")
        if key in ("beta",):
            kwargs[key] = tuple(float(v) for v in value.split(",") if v.strip())
        elif key in ("skill_years",):
            kwargs[key] = tuple(int(v) for v in value.split(",") if v.strip())
        elif key in ("score_kind",):
            kwargs[key] = value
        elif key in (
            "base_hazard_logit",
            "state_effect_scale",
            "seasonal_amplitude",
            "hazard_noise_scale",
            "spell_exit_rate",
            "share_concentration",
            "wage_low",
            "wage_high",
            "skill_drift_base",
            "skill_drift_beta",
            "skill_drift_noise",
        ):
            kwargs[key] = float(value)
        else:
            kwargs[key] = int(value)
    if cfg is None:
        cfg = SynthConfig(**kwargs)
    else:
        from dataclasses import replace

        cfg = replace(cfg, **kwargs)
    if seed_override is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=seed_override)
    return cfg


def _run_overrides(args) -> dict:
    out = {
        "data_dir": getattr(args, "data", None),
        "out_dir": getattr(args, "out", None),
        "seed": getattr(args, "seed", None),
        "pca_k": getattr(args, "k", None),
        "cv_trials": getattr(args, "trials", None),
        "cv_folds": getattr(args, "folds", None),
        "models": getattr(args, "models", None),
        "taxonomy": getattr(args, "taxonomy", None),
    }
    if getattr(args, "annual_median", False):
        out["annual_median"] = True
    if getattr(args, "no_figures", False):
        out["figures"] = False
    return out


def _load_run_config(args) -> RunConfig:
    raw = parse_kv_file(args.config) if getattr(args, "config", None) else {}
    return run_config_from(raw, _run_overrides(args))


def cmd_synth(args) -> int:
    cfg = _parse_synth_config(args.config, args.seed, args.preset)
    result = generate(cfg)
    written = write_files(result, args.out)
    truth_rows = len(result.files["microtruth"])
    print(f"wrote {len(written)} tables to {args.out} (truth rows: {truth_rows})")
    return 0


def cmd_ingest_check(args) -> int:
    config = run_config_from({"data_dir": args.data, "out_dir": "."}, {"taxonomy": args.taxonomy})
    panels, report = pipeline.load_panels(config)
    print(report.summary())
    return 0


def cmd_risk(args) -> int:
    config = _load_run_config(args)
    panels, _ = pipeline.load_panels(config)
    panel = risk.unemployment_risk(panels)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_table(list(panel.rows), SCHEMAS["risk"], out / "risk_panel.csv")
    print(f"risk rows: {len(panel.rows)}")
    print(f"zero-risk rows (excluded from log analyses): {panel.zero_risk_rows}")
    for reason, count in sorted(panel.skip_counts.items()):
        print(f"skipped cells ({reason}): {count}")
    if config.annual_median:
        annual = risk.annual_median_panel(panel)
        write_table(annual, SCHEMAS["risk_annual"], out / "risk_annual.csv")
        print(f"annual median rows: {len(annual)}")
    return 0


def cmd_exposure(args) -> int:
    config = _load_run_config(args)
    panels, _ = pipeline.load_panels(config)
    rows = []
    rejected = 0
    for score in panels.score_names:
        score_rows, rej = risk.state_exposure(panels, score)
        rows.extend(score_rows)
        rejected += len(rej)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_table(rows, SCHEMAS["state_exposure"], out / "state_exposure.csv", sort_keys=True)
    print(f"state exposure rows: {len(rows)} (rejected cells: {rejected})")
    return 0


def cmd_pca(args) -> int:
    config = _load_run_config(args)
    panels, _ = pipeline.load_panels(config)
    matrix = skills.build_skill_matrix(panels)
    model = skills.pca_fit(matrix.values, config.pca_k)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    comp_rows = [(0, skill, float(m)) for skill, m in zip(matrix.skills, model.means)]
    for ci in range(model.k):
        for skill, loading in zip(matrix.skills, model.components[ci]):
            comp_rows.append((ci + 1, skill, float(loading)))
    write_table(comp_rows, SCHEMAS["pca_components"], out / "pca_components.csv")
    var_rows, cum = [], 0.0
    for ci, frac in enumerate(model.explained, start=1):
        cum += float(frac)
        var_rows.append((ci, float(frac), cum))
    write_table(var_rows, SCHEMAS["pca_variance"], out / "pca_variance.csv")
    print(f"first {model.k} components explain {model.cumulative_explained:.4f} of variance")
    return 0


def cmd_skill_change(args) -> int:
    config = _load_run_config(args)
    panels, _ = pipeline.load_panels(config)
    matrix = skills.build_skill_matrix(panels)
    rows, diagnostics = skills.build_skill_change(
        matrix, config.baseline_year, config.skill_change_max_year
    )
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_table(rows, SCHEMAS["skill_change"], out / "skill_change.csv")
    print(f"skill change rows: {len(rows)}")
    for key, value in sorted(diagnostics.items()):
        print(f"  {key}: {value}")
    return 0


def cmd_regress(args) -> int:
    config = _load_run_config(args)
    seed = config.require_seed()
    panels, _ = pipeline.load_panels(config)
    panel = risk.unemployment_risk(panels)
    matrix = skills.build_skill_matrix(panels)
    pca = skills.pca_fit(matrix.values, config.pca_k)
    table, keys, _dropped = evaluate.build_risk_table(
        panels, panel, pca, matrix, config.pca_k, config.education_score
    )
    suite = evaluate.run_model_suite(
        panels, table, keys, seed=seed, k=config.pca_k, education=config.education_score,
        inner_folds=config.inner_folds, grid_points=config.lambda_grid_points,
        min_ratio=config.lambda_min_ratio,
    )
    for name in (f"model{i}" for i in config.models):
        if name in suite.bundles:
            fit = suite.bundles[name].fit
            print(f"{name}: R^2 {fit.r2:.3f} (adj {fit.adj_r2:.3f}, n={fit.n})")
    out = Path(config.out_dir)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    from .tables import render_family_csv, render_family_txt

    simple = [(n.split(":", 1)[1], suite.bundles[n]) for n in suite.simple_names]
    fes = [(n, suite.bundles[n]) for n in suite.fe_names]
    title = "Dependent variable: log10 unemployment risk by occupation, month, & state"
    (out / "tables" / "risk_simple.txt").write_text(render_family_txt(title, simple))
    (out / "tables" / "risk_simple.csv").write_bytes(render_family_csv(simple))
    (out / "tables" / "risk_fe.txt").write_text(render_family_txt(title, fes))
    (out / "tables" / "risk_fe.csv").write_bytes(render_family_csv(fes))
    print(f"wrote table families to {out / 'tables'}")
    return 0


def cmd_cv(args) -> int:
    config = _load_run_config(args)
    seed = config.require_seed()
    panels, _ = pipeline.load_panels(config)
    panel = risk.unemployment_risk(panels)
    matrix = skills.build_skill_matrix(panels)
    pca = skills.pca_fit(matrix.values, config.pca_k)
    table, _keys, _ = evaluate.build_risk_table(
        panels, panel, pca, matrix, config.pca_k, config.education_score
    )
    specs, _, _ = evaluate.risk_model_specs(panels, config.pca_k, config.education_score)
    report = evaluate.cross_validate(
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
    comp = report.comparisons[0]
    print(f"baseline mean oos R^2: {report.means['model2']:.4f}")
    print(f"with scores mean oos R^2: {report.means['model3']:.4f}")
    print(f"Welch t={comp.t:.3f}, p={comp.p:.3e}, factor improvement {comp.factor_improvement:.3f}")
    out = Path(config.out_dir)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    from .tables import render_cv_csv

    (out / "tables" / "cv_observations.csv").write_bytes(render_cv_csv({"risk": report}))
    return 0


def cmd_analyze(args) -> int:
    config = _load_run_config(args)
    report = pipeline.run_analyze(config)
    print(pipeline.summarize_report(report), end="")
    print(f"report written to {Path(config.out_dir) / 'report.json'}")
    return 0


def cmd_report(args) -> int:
    path = Path(args.out) / "report.json"
    if not path.exists():
        raise ConfigError(f"no report.json under {args.out}")
    report = json.loads(path.read_text())
    print(pipeline.summarize_report(report), end="")
    return 0


def _add_run_args(p):
    p.add_argument("--data", required=False, help="input data directory")
    p.add_argument("--out", required=False, help="output directory")
    p.add_argument("--config", help="run config file (key = value lines)")
    p.add_argument("--seed", type=int, required=False, help="seed for randomized stages")
    p.add_argument("--taxonomy", help="occupation taxonomy file")
    p.add_argument("--k", type=int, dest="k", help="number of skill components")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="laborflux",
        description="Occupation unemployment risk and exposure-model evaluation pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic input tables with planted effects")
    p.add_argument("--config", help="synth config file (key = value lines)")
    p.add_argument("--out", required=True, help="output directory for the generated tables")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--preset", help="named configuration: null, default, ensemble, single, ratio2")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("ingest-check", help="load and validate the input tables")
    p.add_argument("--data", required=True)
    p.add_argument("--taxonomy")
    p.set_defaults(fn=cmd_ingest_check)

    p = sub.add_parser("risk", help="estimate the unemployment-risk panel")
    _add_run_args(p)
    p.add_argument(
        "--annual-median",
        action="store_true",
        help="also emit one row per (state, year, occupation) using within-year medians",
    )
    p.set_defaults(fn=cmd_risk)

    p = sub.add_parser("exposure", help="employment-weighted state exposure per score")
    _add_run_args(p)
    p.set_defaults(fn=cmd_exposure)

    p = sub.add_parser("pca", help="fit the skill-profile principal components")
    _add_run_args(p)
    p.set_defaults(fn=cmd_pca)

    p = sub.add_parser("skill-change", help="within-occupation skill change dataset")
    _add_run_args(p)
    p.set_defaults(fn=cmd_skill_change)

    p = sub.add_parser("regress", help="fit the risk model suite and table families")
    _add_run_args(p)
    p.set_defaults(fn=cmd_regress)

    p = sub.add_parser("cv", help="repeated k-fold cross-validation of the risk models")
    _add_run_args(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--folds", type=int)
    p.set_defaults(fn=cmd_cv)

    p = sub.add_parser("analyze", help="run the full analysis program")
    _add_run_args(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--models", help="headline models to fit, e.g. 1,2,3")
    p.add_argument("--annual-median", action="store_true")
    p.add_argument("--no-figures", action="store_true", help="skip SVG figure output")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("report", help="print the summary of an existing report.json")
    p.add_argument("--out", required=True, help="analysis output directory")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LaborfluxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
