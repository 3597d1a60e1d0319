import math
from dataclasses import replace

import numpy as np
import pytest

from laborflux import evaluate, risk, skills
from laborflux.errors import ConfigError
from laborflux.ingest import SCHEMAS, render_table
from laborflux.synth import (
    MicroTruth,
    SynthConfig,
    generate,
    oracle_risk,
    planted_recovery_check,
    preset,
)


def test_same_seed_gives_byte_identical_files():
    cfg = replace(preset("default"), workers_per_state=2000, months=12)
    a, b = generate(cfg), generate(cfg)
    for name, rows in a.files.items():
        assert render_table(rows, SCHEMAS[name]) == render_table(b.files[name], SCHEMAS[name])


def test_different_seed_changes_output():
    cfg = replace(preset("default"), workers_per_state=6000, months=12)
    a = generate(cfg)
    b = generate(replace(cfg, seed=43))
    assert render_table(a.files["claims"], SCHEMAS["claims"]) != render_table(
        b.files["claims"], SCHEMAS["claims"]
    )


def test_beta_dimension_mismatch_rejected():
    with pytest.raises(ConfigError):
        SynthConfig(n_scores=3, beta=(0.1, 0.2))


def test_empty_cells_rejected():
    cfg = replace(preset("null"), workers_per_state=40, min_cell_workers=5)
    with pytest.raises(ConfigError, match="below minimum"):
        generate(cfg)


def test_null_config_risk_tracks_state_rate():
    """With no planted effects every occupation's risk sits at the state
    rate, up to binomial sampling error."""
    result = generate(preset("null"))
    panel = risk.unemployment_risk(result.panels)
    truth = result.truth
    inside = 0
    checked = 0
    for row in panel.rows:
        s = truth.states.index(row.state)
        m = truth.month_index(row.year, row.month)
        mask = truth._occ_mask(row.occ)
        lf = float(truth.employed_at(s, m)[mask].sum()) + float(
            truth.unemployed[s, mask, m].sum()
        )
        h = float(truth.hazard[s, mask, m].mean())
        sigma = math.sqrt(h * (1.0 - h) / lf)
        checked += 1
        if abs(row.risk - row.p_u) <= 3.0 * sigma + 3.0 * sigma:  # both sides sampled
            inside += 1
    assert checked > 0
    assert inside / checked >= 0.99


def test_planted_hazard_ratio_two_to_one():
    result = generate(preset("ratio2"))
    panel = risk.unemployment_risk(result.panels)
    low = [r.risk for r in panel.rows if r.occ == "11"]  # score 0 -> hazard 0.01
    high = [r.risk for r in panel.rows if r.occ == "13"]  # score 1 -> hazard 0.02
    ratio = np.mean(high) / np.mean(low)
    # theory: risk \approx h / (1 + h) per occupation
    expected = (0.02 / 1.02) / (0.01 / 1.01)
    n_low, n_high = len(low), len(high)
    sigma = expected * math.sqrt(
        np.var(high) / (np.mean(high) ** 2 * n_high) + np.var(low) / (np.mean(low) ** 2 * n_low)
    )
    assert abs(ratio - expected) <= 3.0 * sigma
    assert abs(ratio - 2.0) <= 3.0 * sigma + abs(2.0 - expected)


def test_claims_sum_to_unemployed_exactly(default_result):
    truth = default_result.truth
    by_cell = {}
    for row in default_result.files["claims"]:
        key = (row.state, row.year, row.month)
        by_cell[key] = by_cell.get(key, 0) + row.recipients
    for s, state in enumerate(truth.states):
        for m in range(truth.months):
            year, month = truth.calendar(m)
            assert by_cell[(state, year, month)] == int(truth.unemployed[s, :, m].sum())


def test_aggregate_tables_re_derivable_from_truth(default_result):
    truth = default_result.truth
    for row in default_result.files["urate"]:
        s = truth.states.index(row.state)
        m = truth.month_index(row.year, row.month)
        u = int(truth.unemployed[s, :, m].sum())
        e = int(truth.employed_at(s, m).sum())
        assert row.rate == u / (e + u)
    for row in default_result.files["separations"]:
        s = truth.states.index(row.state)
        m = truth.month_index(row.year, row.month)
        d = int(truth.displaced[s, :, m].sum())
        e = int(truth.employed_at(s, m).sum())
        assert row.rate == d / e
    for row in default_result.files["employment"]:
        s = truth.states.index(row.state)
        yi = row.year - truth.start_year
        j = truth.occ6.index(row.occ)
        assert row.employment == int(truth.employed[s, yi, j])


def test_hazards_stay_in_unit_interval(default_result):
    h = default_result.truth.hazard
    assert np.all(h > 0.0) and np.all(h < 1.0)


def test_oracle_risk_counts_directly():
    employed = np.zeros((1, 1, 2), dtype=np.int64)
    employed[0, 0] = (3, 5)
    unemployed = np.zeros((1, 2, 1), dtype=np.int64)
    unemployed[0, :, 0] = (2, 0)
    truth = MicroTruth(
        states=("CA",),
        occ6=("11-1011", "13-1011"),
        start_year=2010,
        months=1,
        employed=employed,
        unemployed=unemployed,
        displaced=unemployed.copy(),
        hazard=np.full((1, 2, 1), 0.1),
        scores={},
        wages=np.array([1.0, 1.0]),
        config=preset("null"),
        skill_updates={},
    )
    # occupation 11: 2 unemployed among 3 employed + 2 -> 0.4
    assert oracle_risk(truth, "CA", 2010, 1, "11") == pytest.approx(0.4)
    assert oracle_risk(truth, "CA", 2010, 1, "13") == 0.0


def test_oracle_risk_zero_when_everyone_employed():
    cfg = replace(preset("null"), base_hazard_logit=-30.0, workers_per_state=5000, months=6)
    result = generate(cfg)
    truth = result.truth
    for occ in truth.majors:
        assert oracle_risk(truth, truth.states[0], 2010, 3, occ) == 0.0


def test_oracle_matches_risk_module(default_result):
    panel = risk.unemployment_risk(default_result.panels)
    worst = 0.0
    for row in panel.rows:
        o = oracle_risk(default_result.truth, row.state, row.year, row.month, row.occ)
        worst = max(worst, abs(o - row.risk))
    assert worst < 1e-10


def test_enumerate_workers_matches_counts(default_result):
    truth = default_result.truth
    occ_idx, employed_flags = truth.enumerate_workers(truth.states[1], 2011, 5)
    s = truth.states.index(truth.states[1])
    m = truth.month_index(2011, 5)
    assert employed_flags.sum() == truth.employed_at(s, m).sum()
    assert (~employed_flags).sum() == truth.unemployed[s, :, m].sum()


def test_recovery_check_flags_the_planted_score():
    result = generate(preset("single"))
    panels = result.panels
    panel = risk.unemployment_risk(panels)
    matrix = skills.build_skill_matrix(panels)
    pca = skills.pca_fit(matrix.values, 10)
    table, keys, _ = evaluate.build_risk_table(panels, panel, pca, matrix, 10)
    fits = {}
    for score in panels.score_names:
        if score == "pct_college":
            continue
        spec = evaluate.ModelSpec(score, (score,), (), "ols")
        bundle = evaluate.fit_model(table, keys, spec)
        fits[score] = (bundle.fit, bundle.design)
        p = bundle.fit.p_of(score)
        if score == "score01":
            assert p < 1e-6
        else:
            assert p > 1e-6
    entries = planted_recovery_check(result.truth, fits)
    by_model = {}
    for e in entries:
        if e.name in fits:  # the score coefficient itself
            by_model[e.model] = e
    assert by_model["score01"].ok
    assert all(e.ok for e in by_model.values())
