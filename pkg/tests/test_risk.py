import math
import statistics
from fractions import Fraction

import numpy as np
import pytest

from laborflux import risk
from laborflux.errors import DataError
from laborflux.model import ClaimsRow, EmploymentRow, LaborPanels, UrateRow
from laborflux.synth import generate, oracle_risk, preset
from laborflux.risk import (
    annual_median_panel,
    labor_force_occ_prob,
    log_wage_bill,
    occ_share_given_unemployed,
    state_exposure,
    unemployment_risk,
)


def make_panels(employment, claims, urate, exposures=()):
    return LaborPanels(
        employment=tuple(employment),
        claims=tuple(claims),
        urate=tuple(urate),
        skills=(),
        exposures=tuple(exposures),
    )


def test_occ_share_symmetric_counts():
    panels = make_panels(
        [EmploymentRow("CA", 2010, "11-1011", 100, 1.0)],
        [ClaimsRow("CA", 2010, 1, "11", 50), ClaimsRow("CA", 2010, 1, "13", 50)],
        [UrateRow("CA", 2010, 1, 0.1)],
    )
    assert occ_share_given_unemployed(panels, "CA", 2010, 1) == {"11": 0.5, "13": 0.5}


def test_occ_share_degenerate():
    panels = make_panels(
        [EmploymentRow("CA", 2010, "11-1011", 100, 1.0)],
        [ClaimsRow("CA", 2010, 1, "11", 100), ClaimsRow("CA", 2010, 1, "13", 0)],
        [UrateRow("CA", 2010, 1, 0.1)],
    )
    assert occ_share_given_unemployed(panels, "CA", 2010, 1) == {"11": 1.0, "13": 0.0}


def test_occ_share_zero_total_skipped():
    panels = make_panels(
        [EmploymentRow("CA", 2010, "11-1011", 100, 1.0)],
        [ClaimsRow("CA", 2010, 1, "11", 0)],
        [UrateRow("CA", 2010, 1, 0.0)],
    )
    assert occ_share_given_unemployed(panels, "CA", 2010, 1) is None


def test_occ_share_matches_integer_ratio_oracle():
    counts = {"11": 17, "13": 3, "15": 41, "17": 9, "19": 30}
    claims = [ClaimsRow("CA", 2010, 1, occ, c) for occ, c in counts.items()]
    panels = make_panels(
        [EmploymentRow("CA", 2010, "11-1011", 100, 1.0)], claims, [UrateRow("CA", 2010, 1, 0.1)]
    )
    shares = occ_share_given_unemployed(panels, "CA", 2010, 1)
    total = sum(counts.values())
    for occ, c in counts.items():
        assert shares[occ] == pytest.approx(float(Fraction(c, total)), abs=1e-15)
    assert sum(shares.values()) == pytest.approx(1.0, abs=1e-12)


def test_labor_force_one_occupation_state():
    for p_u in (0.0, 0.05, 0.4):
        panels = make_panels(
            [EmploymentRow("CA", 2010, "11-1011", 500, 1.0)],
            [ClaimsRow("CA", 2010, 1, "11", 25)],
            [UrateRow("CA", 2010, 1, p_u)],
        )
        probs, _ = labor_force_occ_prob(panels, "CA", 2010, 1)
        assert probs == {"11": pytest.approx(1.0, abs=1e-12)}


def test_labor_force_zero_unemployment_gives_employment_shares():
    panels = make_panels(
        [
            EmploymentRow("CA", 2010, "11-1011", 900, 1.0),
            EmploymentRow("CA", 2010, "13-1011", 100, 1.0),
        ],
        [ClaimsRow("CA", 2010, 1, "11", 0), ClaimsRow("CA", 2010, 1, "13", 0)],
        [UrateRow("CA", 2010, 1, 0.0)],
    )
    probs, _ = labor_force_occ_prob(panels, "CA", 2010, 1)
    assert probs["11"] == pytest.approx(0.9, abs=1e-12)
    assert probs["13"] == pytest.approx(0.1, abs=1e-12)


def test_labor_force_rejects_full_unemployment():
    panels = make_panels(
        [EmploymentRow("CA", 2010, "11-1011", 900, 1.0)],
        [ClaimsRow("CA", 2010, 1, "11", 10)],
        [UrateRow("CA", 2010, 1, 1.0)],
    )
    assert labor_force_occ_prob(panels, "CA", 2010, 1) is None


def test_labor_force_matches_micro_enumeration():
    """Enumerate ~10,000 synthetic workers and count the labor-force shares
    directly; the formula must agree to near machine precision."""
    result = generate(preset("default", seed=3))
    truth = result.truth
    state, year, month = truth.states[0], 2011, 7
    probs, _ = labor_force_occ_prob(result.panels, state, year, month)
    occ_idx, _employed = truth.enumerate_workers(state, year, month)
    majors = [truth.occ6[i][:2] for i in occ_idx]
    total = len(majors)
    for occ, p in probs.items():
        direct = sum(1 for m in majors if m == occ) / total
        assert p == pytest.approx(direct, abs=1e-12)


def test_risk_bayes_identity_neutral_occupation():
    # claims split equal to labor-force split -> risk equals the state rate
    panels = make_panels(
        [
            EmploymentRow("CA", 2010, "11-1011", 500, 1.0),
            EmploymentRow("CA", 2010, "13-1011", 500, 1.0),
        ],
        [ClaimsRow("CA", 2010, 1, "11", 30), ClaimsRow("CA", 2010, 1, "13", 30)],
        [UrateRow("CA", 2010, 1, 0.07)],
    )
    panel = unemployment_risk(panels)
    for row in panel.rows:
        assert row.risk == pytest.approx(0.07, abs=1e-12)


def test_risk_direct_arithmetic_case():
    # engineered cell: p(soc|u)=0.2, p_u=0.05, p(soc)=0.1 -> risk 0.1
    panels = make_panels(
        [
            EmploymentRow("CA", 2010, "11-1011", 180, 1.0),
            EmploymentRow("CA", 2010, "13-1011", 1720, 1.0),
        ],
        [ClaimsRow("CA", 2010, 1, "11", 20), ClaimsRow("CA", 2010, 1, "13", 80)],
        [UrateRow("CA", 2010, 1, 0.05)],
    )
    panel = unemployment_risk(panels)
    row = next(r for r in panel.rows if r.occ == "11")
    assert row.p_soc_given_u == pytest.approx(0.2, abs=1e-12)
    assert row.p_soc == pytest.approx(0.1, abs=1e-12)
    assert row.risk == pytest.approx(0.1, abs=1e-12)


def test_risk_matches_micro_counting(default_result):
    panel = unemployment_risk(default_result.panels)
    for row in panel.rows:
        direct = oracle_risk(default_result.truth, row.state, row.year, row.month, row.occ)
        assert row.risk == pytest.approx(direct, abs=1e-10)


def test_risk_inconsistent_cell_raises():
    # recipients present while the official rate says nobody is unemployed,
    # and the occupation has no employment -> p(soc)=0 with p(soc|u)>0
    panels = make_panels(
        [EmploymentRow("CA", 2010, "13-1011", 100, 1.0)],
        [ClaimsRow("CA", 2010, 1, "11", 5), ClaimsRow("CA", 2010, 1, "13", 5)],
        [UrateRow("CA", 2010, 1, 0.0)],
    )
    with pytest.raises(DataError, match="inconsistent"):
        unemployment_risk(panels)


def test_risk_zero_claim_rows_kept_without_log():
    panels = make_panels(
        [
            EmploymentRow("CA", 2010, "11-1011", 500, 1.0),
            EmploymentRow("CA", 2010, "13-1011", 500, 1.0),
        ],
        [ClaimsRow("CA", 2010, 1, "11", 60), ClaimsRow("CA", 2010, 1, "13", 0)],
        [UrateRow("CA", 2010, 1, 0.07)],
    )
    panel = unemployment_risk(panels)
    zero = next(r for r in panel.rows if r.occ == "13")
    assert zero.risk == 0.0
    assert zero.log10_risk is None
    assert panel.zero_risk_rows == 1


def test_risk_zero_recipient_cells_skipped():
    panels = make_panels(
        [EmploymentRow("CA", 2010, "11-1011", 500, 1.0)],
        [ClaimsRow("CA", 2010, 1, "11", 0), ClaimsRow("CA", 2010, 2, "11", 10)],
        [UrateRow("CA", 2010, 1, 0.0), UrateRow("CA", 2010, 2, 0.05)],
    )
    panel = unemployment_risk(panels)
    assert panel.skip_counts == {"zero recipients": 1}
    assert {(r.year, r.month) for r in panel.rows} == {(2010, 2)}


def test_risk_invariants_on_synth(default_result):
    panel = unemployment_risk(default_result.panels)
    cells = {}
    for r in panel.rows:
        assert abs(r.risk * r.p_soc - r.p_soc_given_u * r.p_u) < 1e-12
        cells.setdefault((r.state, r.year, r.month), []).append(r)
    for rows in cells.values():
        assert sum(r.p_soc_given_u for r in rows) == pytest.approx(1.0, abs=1e-9)
        assert sum(r.p_soc for r in rows) == pytest.approx(1.0, abs=1e-9)
        assert sum(r.risk * r.p_soc for r in rows) == pytest.approx(rows[0].p_u, abs=1e-9)


def test_state_exposure_constant_score(default_result):
    panels = default_result.panels
    occ6 = sorted({r.occ for r in panels.employment})
    from laborflux.model import ExposureRow

    uniform = tuple(ExposureRow("flat", "flat", 1, occ, 0.37) for occ in occ6)
    augmented = LaborPanels(
        employment=panels.employment,
        claims=panels.claims,
        urate=panels.urate,
        skills=panels.skills,
        exposures=uniform,
        separations=panels.separations,
        taxonomy=panels.taxonomy,
    )
    rows, rejected = state_exposure(augmented, "flat")
    assert not rejected
    assert all(r.value == pytest.approx(0.37, abs=1e-12) for r in rows)


def _exposure_panels(employment, exposures):
    return make_panels(
        employment,
        [ClaimsRow("CA", 2010, 1, "11", 1)],
        [UrateRow("CA", 2010, 1, 0.01)],
        exposures=exposures,
    )


def test_state_exposure_hand_weighted_mean():
    from laborflux.model import ExposureRow

    panels = _exposure_panels(
        [
            EmploymentRow("CA", 2010, "11-1011", 750, 1.0),
            EmploymentRow("CA", 2010, "13-1011", 250, 1.0),
        ],
        [ExposureRow("s", "s", 1, "11-1011", 1.0), ExposureRow("s", "s", 1, "13-1011", 0.0)],
    )
    rows, _ = state_exposure(panels, "s")
    assert rows[0].value == pytest.approx(0.75, abs=1e-12)


def test_state_exposure_permutation_invariant():
    from laborflux.model import ExposureRow

    emp = [
        EmploymentRow("CA", 2010, "11-1011", 750, 1.0),
        EmploymentRow("CA", 2010, "13-1011", 250, 1.0),
    ]
    expo = [ExposureRow("s", "s", 1, "11-1011", 0.8), ExposureRow("s", "s", 1, "13-1011", 0.3)]
    a, _ = state_exposure(_exposure_panels(emp, expo), "s")
    b, _ = state_exposure(_exposure_panels(emp[::-1], expo[::-1]), "s")
    assert a == b


def test_state_exposure_split_invariance():
    from laborflux.model import ExposureRow

    merged = _exposure_panels(
        [
            EmploymentRow("CA", 2010, "11-1011", 600, 1.0),
            EmploymentRow("CA", 2010, "13-1011", 400, 1.0),
        ],
        [ExposureRow("s", "s", 1, "11-1011", 0.9), ExposureRow("s", "s", 1, "13-1011", 0.2)],
    )
    split = _exposure_panels(
        [
            EmploymentRow("CA", 2010, "11-1011", 300, 1.0),
            EmploymentRow("CA", 2010, "11-1012", 300, 1.0),
            EmploymentRow("CA", 2010, "13-1011", 400, 1.0),
        ],
        [
            ExposureRow("s", "s", 1, "11-1011", 0.9),
            ExposureRow("s", "s", 1, "11-1012", 0.9),
            ExposureRow("s", "s", 1, "13-1011", 0.2),
        ],
    )
    a, _ = state_exposure(merged, "s")
    b, _ = state_exposure(split, "s")
    assert a[0].value == pytest.approx(b[0].value, abs=1e-12)


def test_state_exposure_low_coverage_rejected():
    from laborflux.model import ExposureRow

    panels = _exposure_panels(
        [
            EmploymentRow("CA", 2010, "11-1011", 100, 1.0),
            EmploymentRow("CA", 2010, "13-1011", 900, 1.0),
        ],
        [ExposureRow("s", "s", 1, "11-1011", 1.0)],  # covers 10% of employment
    )
    rows, rejected = state_exposure(panels, "s")
    assert rows == []
    assert len(rejected) == 1


def test_log_wage_bill_direct():
    panels = make_panels(
        [EmploymentRow("CA", 2010, "11-1011", 100, 1000.0)],
        [ClaimsRow("CA", 2010, 1, "11", 1)],
        [UrateRow("CA", 2010, 1, 0.01)],
    )
    assert log_wage_bill(panels, "CA", 2010) == pytest.approx(5.0, abs=1e-12)


def test_log_wage_bill_doubling_adds_log2():
    single = make_panels(
        [EmploymentRow("CA", 2010, "11-1011", 100, 1000.0)],
        [ClaimsRow("CA", 2010, 1, "11", 1)],
        [UrateRow("CA", 2010, 1, 0.01)],
    )
    double = make_panels(
        [EmploymentRow("CA", 2010, "11-1011", 200, 1000.0)],
        [ClaimsRow("CA", 2010, 1, "11", 1)],
        [UrateRow("CA", 2010, 1, 0.01)],
    )
    gap = log_wage_bill(double, "CA", 2010) - log_wage_bill(single, "CA", 2010)
    assert gap == pytest.approx(math.log10(2.0), abs=1e-12)


def test_log_wage_bill_empty_state_rejected(default_result):
    assert log_wage_bill(default_result.panels, "ZZ", 2010) is None


def test_annual_median_matches_statistics_oracle(default_result):
    panel = unemployment_risk(default_result.panels)
    annual = annual_median_panel(panel)
    groups = {}
    for r in panel.rows:
        groups.setdefault((r.state, r.year, r.occ), []).append(r.risk)
    assert len(annual) == len(groups)
    for row in annual:
        expected = statistics.median(groups[(row.state, row.year, row.occ)])
        assert row.risk_median == pytest.approx(expected, abs=0.0)
