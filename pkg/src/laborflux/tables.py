"""Regression-table rendering: aligned monospaced text plus tidy CSV.

Text tables mirror the published layout: variable rows by model columns,
coefficients to three decimals with significance stars, fixed-effect Yes/No
rows, and an R^2 footer. LASSO zeros print as a bare 0.000; stars come from
the post-selection refit when one is attached.
"""

from __future__ import annotations

import csv
import io
import math

from .regress import stars
from .util import canonical_float

FE_LABELS = {
    "year": "Year F.E.",
    "month": "Month F.E.",
    "state": "State F.E.",
    "major": "Major SOC F.E.",
    "occ": "Major SOC F.E.",
}

STAR_LEGEND = "p<0.1*, p<0.01**, p<0.001***"


def _star_source(bundle):
    return bundle.refit if bundle.refit is not None else bundle.fit


def _cell(bundle, variable: str) -> str:
    fit = bundle.fit
    if variable not in fit.names:
        return ""
    coef = fit.coefficient(variable)
    source = _star_source(bundle)
    mark = ""
    if source.pvalue is not None and variable in source.names:
        mark = stars(source.p_of(variable))
    return f"{coef:.3f}{mark}"


def _ordered_variables(entries):
    seen: dict[str, None] = {}
    for _, bundle in entries:
        for name in bundle.spec.covariates:
            if name in bundle.fit.names:  # dropped covariates stay out
                seen.setdefault(name, None)
    return list(seen)


def _ordered_blocks(entries):
    seen: dict[str, None] = {}
    for _, bundle in entries:
        for block in bundle.spec.fixed_effects:
            seen.setdefault(block, None)
    return list(seen)


def render_family_txt(title: str, entries) -> str:
    """Aligned text table for a list of (label, FitBundle) columns."""
    variables = _ordered_variables(entries)
    blocks = _ordered_blocks(entries)
    header = ["Variable"] + [label for label, _ in entries]
    rows = [header]
    for var in variables:
        rows.append([var] + [_cell(bundle, var) for _, bundle in entries])
    for block in blocks:
        label = FE_LABELS.get(block, f"{block} F.E.")
        rows.append(
            [label]
            + [("Yes" if block in bundle.spec.fixed_effects else "No") for _, bundle in entries]
        )
    rows.append(["R^2"] + [f"{bundle.fit.r2:.3f}" for _, bundle in entries])
    rows.append(["adj. R^2"] + [f"{bundle.fit.adj_r2:.3f}" for _, bundle in entries])
    rows.append(["N"] + [str(bundle.fit.n) for _, bundle in entries])

    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    sep = "-" * (sum(widths) + 2 * (len(widths) - 1))
    lines = [title, sep]
    for i, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [
            c.rjust(w) for c, w in zip(row[1:], widths[1:])
        ]
        lines.append("  ".join(cells))
        if i == 0 or i == len(rows) - 4:
            lines.append(sep)
    lines.append(sep)
    lines.append(STAR_LEGEND)
    return "\n".join(lines) + "\n"


def render_family_csv(entries) -> bytes:
    """Tidy long-format CSV: one row per (model, variable)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "variable", "coefficient", "se", "pvalue", "stars"])
    for label, bundle in entries:
        fit = bundle.fit
        source = _star_source(bundle)
        for name in fit.names:
            coef = fit.coefficient(name)
            if source.pvalue is not None and name in source.names:
                se = source.se_of(name)
                p = source.p_of(name)
                mark = stars(p)
                se_txt = canonical_float(se) if math.isfinite(se) else ""
                p_txt = canonical_float(p) if math.isfinite(p) else ""
            else:
                se_txt = p_txt = mark = ""
            writer.writerow([label, name, canonical_float(coef), se_txt, p_txt, mark])
        writer.writerow([label, "R^2", canonical_float(fit.r2), "", "", ""])
        writer.writerow([label, "adj_R^2", canonical_float(fit.adj_r2), "", "", ""])
        writer.writerow([label, "N", str(fit.n), "", "", ""])
        if fit.lam is not None:
            writer.writerow([label, "lambda", canonical_float(fit.lam), "", "", ""])
    return buf.getvalue().encode("utf-8")


def render_stratified_csv(results) -> bytes:
    """CSV across stratified results: one row per (axis, score, level)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["axis", "score", "level", "n", "coefficient", "se", "pvalue", "ci_low", "ci_high", "r2", "reported"]
    )
    for res in results:
        for f in res.fits:
            writer.writerow(
                [
                    res.axis,
                    res.score,
                    f.level,
                    f.n,
                    canonical_float(f.coef),
                    canonical_float(f.se),
                    canonical_float(f.pvalue),
                    canonical_float(f.ci_low),
                    canonical_float(f.ci_high),
                    canonical_float(f.r2),
                    "" if f.reported is None else str(f.reported).lower(),
                ]
            )
        for level, n in res.skipped:
            writer.writerow([res.axis, res.score, level, n, "", "", "", "", "", "", "skipped"])
    return buf.getvalue().encode("utf-8")


def render_correlations_csv(report) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["score"] + list(report.names))
    for i, name in enumerate(report.names):
        row = [name]
        for j in range(len(report.names)):
            v = report.matrix[i, j]
            row.append("" if math.isnan(v) else canonical_float(v))
        writer.writerow(row)
    return buf.getvalue().encode("utf-8")


def render_cv_csv(reports: dict) -> bytes:
    """CSV of out-of-sample R^2 observations per outcome and model."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["outcome", "model", "trial", "fold", "oos_r2"])
    for outcome, report in reports.items():
        for model in report.model_names:
            values = report.values[model]
            for i, v in enumerate(values):
                trial, fold = divmod(i, report.folds)
                writer.writerow([outcome, model, trial, fold, canonical_float(v)])
    return buf.getvalue().encode("utf-8")
