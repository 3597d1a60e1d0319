"""Static SVG charts for the headline displays.

All figures go through one savefig helper that pins the SVG hash salt and
strips the creation date, so reruns produce stable files.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "laborflux"

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def figure_correlations(report, path):
    k = len(report.names)
    fig, ax = plt.subplots(figsize=(1.0 + 0.6 * k, 0.8 + 0.6 * k))
    data = np.where(np.isnan(report.matrix), 0.0, report.matrix)
    im = ax.imshow(data, vmin=-1, vmax=1, cmap="RdBu_r")
    ax.set_xticks(range(k), report.names, rotation=90, fontsize=7)
    ax.set_yticks(range(k), report.names, fontsize=7)
    for i in range(k):
        for j in range(k):
            v = report.matrix[i, j]
            txt = "na" if math.isnan(v) else f"{v:.2f}"
            ax.text(j, i, txt, ha="center", va="center", fontsize=6)
    ax.set_title("Pearson correlation of exposure scores")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    _save(fig, path)


def figure_model_r2(suite, models, path):
    names = [f"model{i}" for i in models if f"model{i}" in suite.bundles]
    values = [suite.bundles[n].fit.r2 for n in names]
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.bar(names, values, color=["#888888", "#5b8dbf", "#bf5b5b"][: len(names)])
    for i, v in enumerate(values):
        ax.text(i, v + 0.01, f"{v:.3f}", ha="center", fontsize=8)
    ax.set_ylabel("in-sample $R^2$")
    ax.set_ylim(0, 1.05)
    ax.set_title("Variance in unemployment risk explained")
    fig.tight_layout()
    _save(fig, path)


def figure_cv(reports: dict, path):
    outcomes = list(reports)
    fig, axes = plt.subplots(1, len(outcomes), figsize=(3.2 * len(outcomes), 3.2), squeeze=False)
    for ax, outcome in zip(axes[0], outcomes):
        report = reports[outcome]
        for i, model in enumerate(report.model_names):
            values = np.asarray(report.values[model])
            x = np.full(values.size, i) + np.linspace(-0.18, 0.18, values.size)
            ax.plot(x, values, ".", markersize=3, alpha=0.6)
            ax.hlines(values.mean(), i - 0.3, i + 0.3, color="black")
        ax.set_xticks(range(len(report.model_names)), report.model_names, fontsize=8)
        ax.set_title(outcome, fontsize=9)
        ax.set_ylabel("out-of-sample $R^2$", fontsize=8)
    fig.suptitle("Ten trials of ten-fold cross-validation")
    fig.tight_layout()
    _save(fig, path)


def figure_factor_improvements(reports: dict, path):
    labels, values = [], []
    for outcome, report in reports.items():
        for comp in report.comparisons:
            labels.append(outcome)
            values.append(comp.factor_improvement)
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(labels), 3))
    ax.bar(labels, values, color="#5b8dbf")
    for i, v in enumerate(values):
        if not math.isnan(v):
            ax.text(i, v, f"{100 * v:.1f}%", ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("factor improvement in mean oos $R^2$")
    ax.set_title("Gain from adding exposure scores")
    fig.tight_layout()
    _save(fig, path)


def figure_occupation_heatmap(results, path):
    """Occupation x score coefficients, masked at the reporting threshold."""
    scores = [r.score for r in results]
    levels = sorted({f.level for r in results for f in r.fits})
    data = np.full((len(levels), len(scores)), np.nan)
    for j, res in enumerate(results):
        for f in res.fits:
            if f.reported:
                data[levels.index(f.level), j] = f.coef
    fig, ax = plt.subplots(figsize=(1.5 + 0.5 * len(scores), 1.0 + 0.35 * len(levels)))
    span = np.nanmax(np.abs(data)) if np.isfinite(data).any() else 1.0
    masked = np.ma.masked_invalid(data)
    im = ax.imshow(masked, cmap="RdBu_r", vmin=-span, vmax=span, aspect="auto")
    ax.set_xticks(range(len(scores)), scores, rotation=90, fontsize=7)
    ax.set_yticks(range(len(levels)), levels, fontsize=7)
    ax.set_title("Score coefficients by major occupation (p < 0.01)")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    _save(fig, path)


def figure_state_r2(results, path):
    scores = [r.score for r in results]
    levels = sorted({f.level for r in results for f in r.fits})
    data = np.full((len(levels), len(scores)), np.nan)
    for j, res in enumerate(results):
        for f in res.fits:
            data[levels.index(f.level), j] = f.r2
    fig, ax = plt.subplots(figsize=(1.5 + 0.5 * len(scores), 1.0 + 0.35 * len(levels)))
    masked = np.ma.masked_invalid(data)
    im = ax.imshow(masked, cmap="viridis", vmin=0, aspect="auto")
    ax.set_xticks(range(len(scores)), scores, rotation=90, fontsize=7)
    ax.set_yticks(range(len(levels)), levels, fontsize=7)
    ax.set_title("Per-state $R^2$ by score")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    _save(fig, path)


def figure_year_paths(results, path):
    cols = min(4, max(1, len(results)))
    rows = (len(results) + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3.0 * cols, 2.4 * rows), squeeze=False)
    for idx, res in enumerate(results):
        ax = axes[idx // cols][idx % cols]
        years = [f.level for f in res.fits]
        coefs = [f.coef for f in res.fits]
        los = [f.ci_low for f in res.fits]
        his = [f.ci_high for f in res.fits]
        ax.errorbar(
            years,
            coefs,
            yerr=[np.subtract(coefs, los), np.subtract(his, coefs)],
            fmt="o-",
            markersize=3,
            capsize=2,
        )
        ax.axhline(0.0, color="gray", linewidth=0.6)
        ax.set_title(res.score, fontsize=8)
    for idx in range(len(results), rows * cols):
        axes[idx // cols][idx % cols].axis("off")
    fig.suptitle("Per-year coefficients with 95% CIs")
    fig.tight_layout()
    _save(fig, path)


def figure_risk_distribution(annual_rows, path):
    by_year: dict[int, list] = {}
    for row in annual_rows:
        if row.log10_risk_median is not None:
            by_year.setdefault(row.year, []).append(row.log10_risk_median)
    years = sorted(by_year)
    fig, ax = plt.subplots(figsize=(1.5 + 0.6 * len(years), 3.2))
    ax.boxplot([by_year[y] for y in years], tick_labels=[str(y) for y in years])
    ax.set_ylabel("median log10 risk within year")
    ax.set_title("Annual distributions of occupation unemployment risk")
    fig.tight_layout()
    _save(fig, path)


def figure_pca_variance(pca, path):
    cum = np.cumsum(pca.explained)
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(range(1, len(cum) + 1), cum, "o-", markersize=3)
    ax.axvline(pca.k, color="gray", linestyle="--", linewidth=0.8)
    ax.set_xlabel("components")
    ax.set_ylabel("cumulative variance explained")
    ax.set_ylim(0, 1.02)
    ax.set_title("Skill-profile PCA spectrum")
    fig.tight_layout()
    _save(fig, path)
