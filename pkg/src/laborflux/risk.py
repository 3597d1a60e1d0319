"""Core estimators: occupation unemployment risk, state exposure, wage bills.

Risk combines three sources for each (state, month) cell: the distribution of
benefit recipients over major occupations, the official total unemployment
rate, and annual employment counts. Claim counts are treated as proportions
of the rate-implied unemployed stock, which reconciles monthly claims with
annual employment:

    U      = E * p_u / (1 - p_u)
    U_occ  = U * recipients_occ / total_recipients
    p(soc) = (E_occ + U_occ) / (E + U)
    risk   = p(soc|u) * p_u / p(soc)

Annual employment is held constant across the months of its year.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import DataError
from .model import LaborPanels
from .util import pmap


class RiskRow(NamedTuple):
    state: str
    year: int
    month: int
    occ: str  # major group
    p_soc_given_u: float
    p_u: float
    p_soc: float
    risk: float
    log10_risk: float | None


class StateExposureRow(NamedTuple):
    score: str
    state: str
    year: int
    value: float


@dataclass(frozen=True)
class RiskPanel:
    rows: tuple[RiskRow, ...]
    skipped_cells: tuple[tuple, ...]  # ((state, year, month), reason)
    zero_risk_rows: int

    @property
    def skip_counts(self) -> dict:
        out: dict[str, int] = {}
        for _cell, reason in self.skipped_cells:
            out[reason] = out.get(reason, 0) + 1
        return out


def occ_share_given_unemployed(panels: LaborPanels, state: str, year: int, month: int):
    """p(soc|u) over major occupations for one cell; None if no recipients."""
    cell = panels.claims_by_cell.get((state, year, month))
    if not cell:
        return None
    total = sum(cell.values())
    if total <= 0:
        return None
    return {occ: cell[occ] / total for occ in sorted(cell)}


def labor_force_occ_prob(panels: LaborPanels, state: str, year: int, month: int):
    """p(soc) over major occupations, relative to the full labor force.

    Returns (probs, implied_unemployed_by_occ) or None when the cell cannot
    be constructed (missing inputs, p_u = 1, or recipients missing while
    p_u > 0).
    """
    emp = panels.major_employment(state, year)
    if not emp:
        return None
    p_u = panels.urate_by_cell.get((state, year, month))
    if p_u is None:
        return None
    if p_u >= 1.0:
        return None  # singular labor-force construction
    cell = panels.claims_by_cell.get((state, year, month)) or {}
    total_claims = sum(cell.values())
    e_total = sum(emp.values())
    u_total = e_total * p_u / (1.0 - p_u)
    if u_total > 0 and total_claims <= 0:
        return None  # cannot distribute the unemployed stock
    occs = sorted(set(emp) | set(cell))
    u_by_occ = {}
    for occ in occs:
        share = (cell.get(occ, 0) / total_claims) if total_claims > 0 else 0.0
        u_by_occ[occ] = u_total * share
    denom = e_total + u_total
    probs = {occ: (emp.get(occ, 0) + u_by_occ[occ]) / denom for occ in occs}
    return probs, u_by_occ


def _risk_cell(panels: LaborPanels, cell_key):
    state, year, month = cell_key
    p_u = panels.urate_by_cell.get((state, year, month))
    if p_u is None:
        return None, (cell_key, "missing urate")
    emp = panels.major_employment(state, year)
    if not emp:
        return None, (cell_key, "missing employment")
    if p_u >= 1.0:
        return None, (cell_key, "urate = 1 (singular)")
    shares = occ_share_given_unemployed(panels, state, year, month)
    if shares is None:
        return None, (cell_key, "zero recipients")
    lf = labor_force_occ_prob(panels, state, year, month)
    if lf is None:
        return None, (cell_key, "labor force construction failed")
    p_soc, _ = lf
    rows = []
    for occ in sorted(set(p_soc) | set(shares)):
        sgu = shares.get(occ, 0.0)
        soc = p_soc.get(occ, 0.0)
        if soc <= 0.0:
            if sgu > 0.0:
                raise DataError(
                    f"inconsistent cell ({state}, {year}, {month}) occ {occ}: "
                    f"p(soc)=0 with p(soc|u)={sgu} (corrupted input)"
                )
            continue
        risk = sgu * p_u / soc
        log_risk = math.log10(risk) if risk > 0.0 else None
        rows.append(RiskRow(state, year, month, occ, sgu, p_u, soc, risk, log_risk))
    return rows, None


def unemployment_risk(panels: LaborPanels) -> RiskPanel:
    """One row per (state, month, major occupation) with the five risk fields.

    Cells that cannot be constructed are skipped and counted; rows with zero
    recipients in an occupation carry risk = 0 and no log value.
    """
    cells = sorted(panels.claims_by_cell)
    results = pmap(lambda key: _risk_cell(panels, key), cells)
    rows: list[RiskRow] = []
    skipped = []
    for cell_rows, skip in results:
        if skip is not None:
            skipped.append(skip)
        else:
            rows.extend(cell_rows)
    rows.sort(key=lambda r: (r.state, r.year, r.month, r.occ))
    zero = sum(1 for r in rows if r.risk == 0.0)
    return RiskPanel(rows=tuple(rows), skipped_cells=tuple(skipped), zero_risk_rows=zero)


class AnnualRiskRow(NamedTuple):
    state: str
    year: int
    occ: str
    risk_median: float
    log10_risk_median: float | None


def _median(values):
    values = sorted(values)
    n = len(values)
    mid = n // 2
    return values[mid] if n % 2 else 0.5 * (values[mid - 1] + values[mid])


def annual_median_panel(panel: RiskPanel) -> list[AnnualRiskRow]:
    """Within-year medians of monthly risk, per (state, year, occupation)."""
    groups: dict[tuple, list[RiskRow]] = {}
    for r in panel.rows:
        groups.setdefault((r.state, r.year, r.occ), []).append(r)
    out = []
    for (state, year, occ) in sorted(groups):
        rows = groups[(state, year, occ)]
        risk_med = _median([r.risk for r in rows])
        logs = [r.log10_risk for r in rows if r.log10_risk is not None]
        log_med = _median(logs) if logs else None
        out.append(AnnualRiskRow(state, year, occ, risk_med, log_med))
    return out


def state_exposure(panels: LaborPanels, score: str):
    """Employment-weighted mean exposure per (state, year).

    Weights renormalize over the occupations the score covers; cells where
    covered employment is below half the state's employment are rejected.
    """
    if score not in panels.score_values:
        raise DataError(f"unknown exposure score: {score}")
    values = panels.score_values[score]
    rows: list[StateExposureRow] = []
    rejected = []
    for (state, year) in sorted(panels.employment_by_state_year):
        emp = panels.employment_by_state_year[(state, year)]
        total = sum(r.employment for r in emp.values())
        covered = {occ: r for occ, r in emp.items() if occ in values}
        covered_emp = sum(r.employment for r in covered.values())
        if total <= 0 or covered_emp / total < 0.5:
            rejected.append(((state, year), f"score {score} covers {covered_emp}/{total} employment"))
            continue
        value = sum(r.employment * values[occ] for occ, r in covered.items()) / covered_emp
        rows.append(StateExposureRow(score, state, year, value))
    return rows, rejected


def log_wage_bill(panels: LaborPanels, state: str, year: int) -> float | None:
    """log10 of total wages paid in a state-year; None when undefined."""
    emp = panels.employment_by_state_year.get((state, year))
    if not emp:
        return None
    bill = sum(r.employment * r.mean_wage for r in emp.values())
    if bill <= 0.0:
        return None
    return math.log10(bill)
