import pytest

from laborflux import evaluate, risk, skills
from laborflux.synth import generate, preset


@pytest.fixture(scope="session")
def default_result():
    return generate(preset("default"))


@pytest.fixture(scope="session")
def ensemble_result():
    return generate(preset("ensemble"))


@pytest.fixture(scope="session")
def ensemble_analysis(ensemble_result):
    """Risk panel, skill matrix, PCA, and regression table on ensemble data."""
    panels = ensemble_result.panels
    panel = risk.unemployment_risk(panels)
    matrix = skills.build_skill_matrix(panels)
    pca = skills.pca_fit(matrix.values, 10)
    table, keys, dropped = evaluate.build_risk_table(panels, panel, pca, matrix, 10)
    return {
        "panels": panels,
        "truth": ensemble_result.truth,
        "risk_panel": panel,
        "matrix": matrix,
        "pca": pca,
        "table": table,
        "keys": keys,
        "dropped": dropped,
    }
