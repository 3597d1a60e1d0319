"""Design-matrix construction, OLS with inference, and LASSO coordinate descent.

Conventions, fixed for reproducibility:
  * covariates and (by default) the response are standardized with sample
    statistics (ddof=1) computed on the stats rows only, which under
    cross-validation are the training rows;
  * one-hot fixed effects drop the lexicographically first level per block
    and are never L1-penalized, so LASSO results do not depend on the
    reference-level choice;
  * the LASSO objective is (1/2n)||y - X b||^2 + lambda * ||b_penalized||_1,
    giving lambda_max = max_j |x_j' r| / n over penalized columns, with r
    the residual from the unpenalized block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.special

from .errors import DataError

STAR_THRESHOLDS = ((0.001, "***"), (0.01, "**"), (0.1, "*"))


def stars(p: float) -> str:
    """Significance markers: p<0.1 *, p<0.01 **, p<0.001 ***."""
    if p is None or math.isnan(p):
        return ""
    for threshold, mark in STAR_THRESHOLDS:
        if p < threshold:
            return mark
    return ""


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t via the incomplete beta."""
    if df <= 0:
        raise DataError(f"nonpositive degrees of freedom: {df}")
    if math.isinf(t):
        return 0.0
    return float(scipy.special.betainc(df / 2.0, 0.5, df / (df + t * t)))


def t_quantile(prob: float, df: float) -> float:
    """Inverse CDF of Student's t."""
    return float(scipy.special.stdtrit(df, prob))


def standardize(column: np.ndarray, stats_source: np.ndarray | None = None) -> np.ndarray:
    """Center and scale by sample statistics of `stats_source` (default: itself)."""
    column = np.asarray(column, dtype=float)
    src = column if stats_source is None else np.asarray(stats_source, dtype=float)
    if src.size < 2:
        raise DataError("need at least two rows to standardize")
    mean = float(src.mean())
    sd = float(src.std(ddof=1))
    if sd <= 0.0 or not math.isfinite(sd):
        raise DataError("zero-variance column cannot be standardized")
    return (column - mean) / sd


@dataclass(frozen=True)
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]
    penalized: np.ndarray  # bool per column
    fe_blocks: dict        # block -> {"levels": tuple, "ref": level}
    cov_stats: dict        # covariate -> (mean, sd)
    response_name: str
    response_stats: tuple | None  # (mean, sd) when the response is standardized
    dropped: tuple = ()    # (name, reason) diagnostics
    row_keys: tuple | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset_rows(self, idx) -> "DesignMatrix":
        keys = tuple(self.row_keys[i] for i in idx) if self.row_keys is not None else None
        return replace(self, X=self.X[idx], y=self.y[idx], row_keys=keys)

    def subset_columns(self, mask) -> "DesignMatrix":
        mask = np.asarray(mask)
        names = tuple(n for n, m in zip(self.names, mask) if m)
        return replace(self, X=self.X[:, mask], names=names, penalized=self.penalized[mask])

    def transform(self, table, row_keys=None):
        """Build (X, y) for new rows using the stored stats and level maps.

        Rows carrying a fixed-effect level unseen at build time are scored at
        the reference level; their count is returned for diagnostics.
        """
        n = len(table[self.response_name])
        cols = [np.ones(n)]
        unseen = 0
        for name in self.names[1:]:
            if "=" in name and name.split("=", 1)[0] in self.fe_blocks:
                continue
            if name not in table:
                raise DataError(f"transform: missing covariate {name}")
            mean, sd = self.cov_stats[name]
            cols.append((np.asarray(table[name], dtype=float) - mean) / sd)
        for block, spec in self.fe_blocks.items():
            values = np.asarray(table[block])
            known = set(spec["levels"])
            unseen += int(np.sum(~np.isin(values, list(known))))
            for level in spec["levels"]:
                if level == spec["ref"]:
                    continue
                cols.append((values == level).astype(float))
        X = np.column_stack(cols)
        y = np.asarray(table[self.response_name], dtype=float)
        if self.response_stats is not None:
            mean, sd = self.response_stats
            y = (y - mean) / sd
        return X, y, unseen


def _collinear_names(X, names):
    _, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(X.shape) * np.finfo(float).eps if diag[0] > 0 else 0.0
    bad = [names[piv[i]] for i in range(len(diag)) if diag[i] <= tol]
    return sorted(bad)


def build_design(
    table,
    response: str,
    covariates,
    fixed_effects=(),
    stats_mask=None,
    standardize_response: bool = True,
    standardize_covariates: bool = True,
    row_keys=None,
    check_rank: bool = True,
) -> DesignMatrix:
    """Assemble intercept + standardized covariates + one-hot fixed effects.

    `table` maps column names to equal-length arrays. Zero-variance
    covariates are dropped with a diagnostic; a rank-deficient result is an
    error naming the collinear columns. Pass standardize_covariates=False
    when the columns were already standardized on a wider row set (as in
    the per-stratum analyses).
    """
    if response not in table:
        raise DataError(f"missing response column: {response}")
    y_raw = np.asarray(table[response], dtype=float)
    n = y_raw.shape[0]
    if n < 2:
        raise DataError("need at least two rows")
    mask = np.ones(n, dtype=bool) if stats_mask is None else np.asarray(stats_mask, dtype=bool)

    names = ["intercept"]
    cols = [np.ones(n)]
    penalized = [False]
    cov_stats = {}
    dropped = []
    for name in covariates:
        if name not in table:
            raise DataError(f"missing covariate column: {name}")
        raw = np.asarray(table[name], dtype=float)
        src = raw[mask]
        sd = float(src.std(ddof=1))
        if sd <= 0.0 or not math.isfinite(sd):
            dropped.append((name, "zero variance in stats rows"))
            continue
        if standardize_covariates:
            mean = float(src.mean())
        else:
            mean, sd = 0.0, 1.0
        names.append(name)
        cols.append((raw - mean) / sd)
        penalized.append(True)
        cov_stats[name] = (mean, sd)

    fe_blocks = {}
    for block in fixed_effects:
        if block not in table:
            raise DataError(f"missing fixed-effect column: {block}")
        values = np.asarray(table[block])
        levels = tuple(sorted(set(values.tolist())))
        if len(levels) < 2:
            dropped.append((block, "single level"))
            fe_blocks[block] = {"levels": levels, "ref": levels[0]}
            continue
        ref = levels[0]
        fe_blocks[block] = {"levels": levels, "ref": ref}
        for level in levels[1:]:
            names.append(f"{block}={level}")
            cols.append((values == level).astype(float))
            penalized.append(False)

    X = np.column_stack(cols)
    response_stats = None
    y = y_raw.astype(float)
    if standardize_response:
        src = y_raw[mask]
        mean = float(src.mean())
        sd = float(src.std(ddof=1))
        if sd <= 0.0 or not math.isfinite(sd):
            raise DataError(f"response {response} has zero variance")
        y = (y_raw - mean) / sd
        response_stats = (mean, sd)

    if check_rank and np.linalg.matrix_rank(X) < X.shape[1]:
        raise DataError(f"rank-deficient design; collinear columns: {_collinear_names(X, names)}")

    return DesignMatrix(
        X=X,
        y=y,
        names=tuple(names),
        penalized=np.asarray(penalized, dtype=bool),
        fe_blocks=fe_blocks,
        cov_stats=cov_stats,
        response_name=response,
        response_stats=response_stats,
        dropped=tuple(dropped),
        row_keys=tuple(row_keys) if row_keys is not None else None,
    )


@dataclass(frozen=True)
class ModelFit:
    names: tuple[str, ...]
    coef: np.ndarray
    r2: float
    adj_r2: float
    resid_var: float
    n: int
    se: np.ndarray | None = None
    tstat: np.ndarray | None = None
    pvalue: np.ndarray | None = None
    lam: float | None = None
    iterations: int | None = None
    gap: float | None = None
    objective_path: tuple | None = None
    notes: tuple = ()

    @property
    def p(self) -> int:
        return len(self.names)

    def coefficient(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])

    def p_of(self, name: str) -> float:
        if self.pvalue is None:
            return float("nan")
        return float(self.pvalue[self.names.index(name)])

    def se_of(self, name: str) -> float:
        if self.se is None:
            return float("nan")
        return float(self.se[self.names.index(name)])

    def ci95(self, name: str) -> tuple[float, float]:
        se = self.se_of(name)
        half = t_quantile(0.975, self.n - self.p) * se
        c = self.coefficient(name)
        return (c - half, c + half)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return X @ self.coef


def _r2_parts(y, resid):
    sst = float(np.sum((y - y.mean()) ** 2))
    ssr = float(np.sum(resid**2))
    r2 = 1.0 - ssr / sst if sst > 0 else 0.0
    return r2, ssr, sst


def ols_fit(design: DesignMatrix) -> ModelFit:
    """Least squares with classical standard errors and t-based p-values."""
    X, y = design.X, design.y
    n, p = X.shape
    if n <= p:
        raise DataError(f"not enough rows ({n}) for {p} columns")
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < p:
        raise DataError(
            f"singular normal equations; collinear columns: {_collinear_names(X, design.names)}"
        )
    resid = y - X @ coef
    r2, ssr, _ = _r2_parts(y, resid)
    dof = n - p
    sigma2 = ssr / dof
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(np.maximum(sigma2 * np.diag(xtx_inv), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = np.where(se > 0, coef / se, np.inf * np.sign(coef))
    pvalue = np.array([t_two_sided_p(abs(t), dof) for t in tstat])
    n_pred = p - 1  # predictors excluding the intercept
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - n_pred - 1)
    return ModelFit(
        names=design.names,
        coef=coef,
        r2=r2,
        adj_r2=adj,
        resid_var=sigma2,
        n=n,
        se=se,
        tstat=tstat,
        pvalue=pvalue,
    )


def _soft(value: float, threshold: float) -> float:
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


def lambda_max(design: DesignMatrix) -> float:
    """Smallest penalty at which every penalized coefficient is exactly zero.

    Computed as max_j |x_j' r| / n over penalized columns, with r the
    residual of the response on the unpenalized block.
    """
    return CdWorkspace(design.X, design.y, design.penalized).lambda_max()


def _cd_sweep(gram, corr, diag, pen, lam, beta, g) -> float:
    """One cyclic sweep in fixed column order; returns the largest update.

    The per-element g update is order-independent, so this reference
    implementation and the compiled kernel produce identical floats.
    """
    max_delta = 0.0
    p = gram.shape[0]
    for j in range(p):
        dj = diag[j]
        if dj <= 0.0:
            continue
        rho = corr[j] - g[j] + dj * beta[j]
        new = _soft(rho, lam) / dj if pen[j] else rho / dj
        delta = new - beta[j]
        if delta != 0.0:
            g += gram[j] * delta
            beta[j] = new
            if abs(delta) > max_delta:
                max_delta = abs(delta)
    return max_delta


def _cd_run_python(gram, corr, diag, pen, lam, beta, g, tol, max_sweeps):
    sweeps = 0
    max_delta = math.inf
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = _cd_sweep(gram, corr, diag, pen, lam, beta, g)
        if max_delta < tol:
            return sweeps, max_delta
    return -1, max_delta


try:  # optional compiled kernel; bitwise-identical math to _cd_run_python
    import numba

    @numba.njit(cache=True)
    def _cd_run_numba(gram, corr, diag, pen, lam, beta, g, tol, max_sweeps):  # pragma: no cover
        p = gram.shape[0]
        sweeps = 0
        max_delta = 1e308
        while sweeps < max_sweeps:
            sweeps += 1
            max_delta = 0.0
            for j in range(p):
                dj = diag[j]
                if dj <= 0.0:
                    continue
                rho = corr[j] - g[j] + dj * beta[j]
                if pen[j]:
                    if rho > lam:
                        new = (rho - lam) / dj
                    elif rho < -lam:
                        new = (rho + lam) / dj
                    else:
                        new = 0.0
                else:
                    new = rho / dj
                delta = new - beta[j]
                if delta != 0.0:
                    for i in range(p):
                        g[i] += gram[j, i] * delta
                    beta[j] = new
                    if abs(delta) > max_delta:
                        max_delta = abs(delta)
            if max_delta < tol:
                return sweeps, max_delta
        return -1, max_delta

    _cd_run = _cd_run_numba
except ImportError:  # pragma: no cover
    _cd_run = _cd_run_python


def _cd_solve(gram, corr, pen, lam, beta0, tol, max_sweeps, objective=None):
    """Cyclic coordinate descent on the Gram form; returns (beta, sweeps, gap).

    `objective`, when given, is called after every sweep and must observe a
    nonincreasing sequence (debug contract); that path runs sweep by sweep.
    """
    p = gram.shape[0]
    gram = np.ascontiguousarray(gram, dtype=float)
    corr = np.ascontiguousarray(corr, dtype=float)
    pen = np.ascontiguousarray(pen, dtype=bool)
    diag = np.diag(gram).copy()
    # Columns with numerically no curvature left (absorbed by the
    # unpenalized block) are unidentified; pin them at zero.
    if diag.size and diag.max() > 0:
        diag[diag <= diag.max() * 1e-10] = 0.0
    diag = np.ascontiguousarray(diag)
    beta = np.zeros(p) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    g = gram @ beta
    if objective is None:
        sweeps, max_delta = _cd_run(gram, corr, diag, pen, lam, beta, g, tol, max_sweeps)
        if sweeps < 0:
            raise DataError(
                f"coordinate descent did not converge; last max update {max_delta:.3e}"
            )
        return beta, sweeps, max_delta, None

    last_obj = objective(beta)
    path = [last_obj]
    sweeps = 0
    max_delta = math.inf
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = _cd_sweep(gram, corr, diag, pen, lam, beta, g)
        obj = objective(beta)
        if obj > last_obj + 1e-12 * max(1.0, abs(last_obj)):
            raise AssertionError(f"objective increased at sweep {sweeps}: {last_obj} -> {obj}")
        last_obj = obj
        path.append(obj)
        if max_delta < tol:
            return beta, sweeps, max_delta, path
    raise DataError(f"coordinate descent did not converge; last max update {max_delta:.3e}")


class CdWorkspace:
    """Shared precomputation for LASSO fits on one (X, y, penalized) triple.

    The unpenalized block (intercept, fixed effects) is profiled out: its
    column space is projected off the penalized columns and the response,
    and coordinate descent runs on the partialled problem only. The
    minimizer is unchanged; the unpenalized coefficients are recovered
    exactly by least squares, so ill-conditioned dummy blocks cannot slow
    or stall the sweeps.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray, penalized: np.ndarray):
        self.X, self.y = X, y
        self.pen = np.asarray(penalized, dtype=bool)
        n = X.shape[0]
        self.P = np.ascontiguousarray(X[:, self.pen])
        self.U = X[:, ~self.pen]
        if self.U.shape[1] > 0:
            a, s, vt = np.linalg.svd(self.U, full_matrices=False)
            keep = s > s[0] * max(self.U.shape) * np.finfo(float).eps
            self.Q = a[:, keep]
            self._pinv_u = (vt[keep].T / s[keep]) @ a[:, keep].T
        else:
            self.Q = np.zeros((n, 0))
            self._pinv_u = np.zeros((0, n))
        self.y_res = y - self.Q @ (self.Q.T @ y)
        self.P_res = self.P - self.Q @ (self.Q.T @ self.P)
        self.gram = self.P_res.T @ self.P_res / n
        self.corr = self.P_res.T @ self.y_res / n
        self._all_pen = np.ones(self.P.shape[1], dtype=bool)

    def lambda_max(self) -> float:
        if self.P.shape[1] == 0:
            return 0.0
        return float(np.max(np.abs(self.corr)))

    def full_beta(self, beta_pen: np.ndarray) -> np.ndarray:
        beta = np.zeros(self.X.shape[1])
        beta[self.pen] = beta_pen
        if self.U.shape[1] > 0:
            beta[~self.pen] = self._pinv_u @ (self.y - self.P @ beta_pen)
        return beta

    def solve(self, lam, beta0=None, tol=1e-7, max_sweeps=100_000, objective=None):
        if self.P.shape[1] == 0:
            return np.zeros(0), 0, 0.0, ([objective(np.zeros(0))] if objective else None)
        return _cd_solve(
            self.gram, self.corr, self._all_pen, lam, beta0, tol, max_sweeps, objective
        )


def lasso_fit(
    design: DesignMatrix,
    lam: float,
    tol: float = 1e-7,
    max_sweeps: int = 100_000,
    beta0: np.ndarray | None = None,
    debug: bool = False,
    workspace: CdWorkspace | None = None,
) -> ModelFit:
    """Coordinate descent on (1/2n)||y - X b||^2 + lam * ||b_pen||_1.

    The intercept and fixed-effect dummies are never penalized; they are
    profiled out exactly and recovered by least squares as the penalized
    coordinates converge (largest update in a sweep below `tol`). With
    debug=True the full objective is recorded every sweep and checked to be
    nonincreasing.
    """
    if lam < 0:
        raise DataError(f"negative penalty: {lam}")
    X, y = design.X, design.y
    n, p = X.shape
    pen = design.penalized
    ws = workspace if workspace is not None else CdWorkspace(X, y, pen)

    objective = None
    if debug:
        def objective(b_pen):
            b = ws.full_beta(b_pen)
            resid = y - X @ b
            return float(0.5 * np.mean(resid**2) + lam * np.sum(np.abs(b[pen])))

    warm = np.asarray(beta0, dtype=float)[pen] if beta0 is not None else None
    beta_pen, sweeps, max_delta, path = ws.solve(
        lam, beta0=warm, tol=tol, max_sweeps=max_sweeps, objective=objective
    )
    beta = ws.full_beta(beta_pen)

    resid = y - X @ beta
    r2, ssr, _ = _r2_parts(y, resid)
    dof = max(n - p, 1)
    n_pred = p - 1
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - n_pred - 1) if n - n_pred - 1 > 0 else r2
    return ModelFit(
        names=design.names,
        coef=beta,
        r2=r2,
        adj_r2=adj,
        resid_var=ssr / dof,
        n=n,
        lam=lam,
        iterations=sweeps,
        gap=max_delta,
        objective_path=tuple(path) if debug else None,
    )


@dataclass(frozen=True)
class LambdaSelection:
    lam: float
    grid: tuple[float, ...]
    mse: tuple[float, ...]


def default_grid(lam_max: float, points: int = 20, min_ratio: float = 1e-4):
    if lam_max <= 0:
        return (0.0,)
    return tuple(np.geomspace(lam_max, lam_max * min_ratio, points))


def select_lambda(
    design: DesignMatrix,
    grid=None,
    folds: int = 5,
    seed=0,
    grid_points: int = 20,
    min_ratio: float = 1e-4,
) -> LambdaSelection:
    """K-fold choice of the penalty, minimizing mean out-of-fold MSE.

    The grid is log-spaced from lambda_max down to lambda_max * min_ratio,
    largest first, so exact MSE ties resolve toward the larger penalty.
    """
    if grid is None:
        grid = default_grid(lambda_max(design), grid_points, min_ratio)
    grid = tuple(grid)
    if not grid:
        raise DataError("empty penalty grid")
    n = design.n
    if n < folds:
        raise DataError(f"{n} rows cannot form {folds} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    fold_mse = np.zeros((folds, len(grid)))
    for f, test_idx in enumerate(np.array_split(order, folds)):
        train_mask = np.ones(n, dtype=bool)
        train_mask[test_idx] = False
        ws = CdWorkspace(design.X[train_mask], design.y[train_mask], design.penalized)
        Xt, yt = design.X[test_idx], design.y[test_idx]
        beta_pen = None
        for gi, lam in enumerate(grid):
            beta_pen, _, _, _ = ws.solve(lam, beta0=beta_pen)
            resid = yt - Xt @ ws.full_beta(beta_pen)
            fold_mse[f, gi] = float(np.mean(resid**2))
    mean_mse = fold_mse.mean(axis=0)
    best = int(np.argmin(mean_mse))  # descending grid: first minimum = largest lambda
    return LambdaSelection(lam=float(grid[best]), grid=grid, mse=tuple(mean_mse))


def inference_refit(design: DesignMatrix, lasso: ModelFit) -> ModelFit:
    """OLS on the LASSO support plus intercept and fixed effects.

    Supplies the p-values attached to LASSO point estimates in rendered
    tables; flagged approximate because the support was data-selected.
    """
    keep = ~design.penalized.copy()
    for j, name in enumerate(design.names):
        if design.penalized[j] and lasso.coef[j] != 0.0:
            keep[j] = True
    restricted = design.subset_columns(keep)
    fit = ols_fit(restricted)
    return replace(fit, notes=("post-selection OLS refit; inference approximate",))
