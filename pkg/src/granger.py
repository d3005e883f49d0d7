"""Multivariate Granger causality baseline.

For every target variable the lagged history of all variables (lags 1..max_lag, never lag 0)
is regressed on with a cross-validated Lasso; the selected support is refit by ordinary least
squares and a link is kept when its one-sided t-test, taken in the direction of the Lasso
estimate, is significant.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import statsmodels.api as sm
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat
from scipy import stats

from src.errors import InsufficientDataError
from src.metrics import LinkSet
from src.seeding import make_rng
from src.simulate import Dataset

logger = logging.getLogger(__name__)

DEFAULT_CV_ALPHAS = (0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5)
MIN_ROWS_BEYOND_LAG = 10
DEGENERATE_STD = 1e-12


class GrangerParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cv_alphas: List[PositiveFloat] = Field(default_factory=lambda: list(DEFAULT_CV_ALPHAS), min_length=1)
    max_lag: int = Field(5, ge=1)
    k_folds: int = Field(5, ge=2)
    significance: float = Field(0.05, gt=0.0, lt=1.0)
    shuffle_folds: bool = False
    seed: int = Field(0, ge=0, description="seeds the fold shuffle; unused for contiguous folds")


@dataclass(frozen=True)
class LaggedDesign:
    y: np.ndarray
    X: np.ndarray
    column_index: Tuple[Tuple[int, int], ...]
    dropped: Tuple[Tuple[int, int], ...] = ()


@dataclass(frozen=True)
class LassoFit:
    coef: np.ndarray
    converged: bool
    sweeps: int
    objective_history: Tuple[float, ...] = ()


def build_lagged_design(values: np.ndarray, target: int, max_lag: int) -> LaggedDesign:
    """Regressors ``X_i(t - s)`` for all ``i`` and ``s`` in 1..max_lag, ordered (i asc, s asc).

    Regressors are standardized, the response centered and scaled; the first ``max_lag``
    rows are dropped.  Zero-variance regressors are dropped and recorded.
    """
    values = np.asarray(values, dtype=float)
    rows, m = values.shape
    if rows < max_lag + MIN_ROWS_BEYOND_LAG:
        raise InsufficientDataError(
            f"need at least {max_lag + MIN_ROWS_BEYOND_LAG} rows for max_lag={max_lag}, got {rows}"
        )
    columns, index, dropped = [], [], []
    for i in range(m):
        for s in range(1, max_lag + 1):
            column = values[max_lag - s:rows - s, i]
            std = column.std()
            if std <= DEGENERATE_STD * max(1.0, float(np.abs(column).max())):
                dropped.append((i, s))
                continue
            columns.append((column - column.mean()) / std)
            index.append((i, s))
    if dropped:
        logger.warning("Dropped %d degenerate regressor(s) for target %d: %s", len(dropped), target, dropped)

    y = values[max_lag:, target] - values[max_lag:, target].mean()
    y_std = y.std()
    if y_std > 0:
        y = y / y_std
    X = np.column_stack(columns) if columns else np.empty((rows - max_lag, 0))
    return LaggedDesign(y=y, X=X, column_index=tuple(index), dropped=tuple(dropped))


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _objective(gram: np.ndarray, xty: np.ndarray, yty: float, beta: np.ndarray, alpha: float) -> float:
    return 0.5 * yty - xty @ beta + 0.5 * beta @ gram @ beta + alpha * np.abs(beta).sum()


def _coordinate_descent(gram: np.ndarray, xty: np.ndarray, yty: float, alpha: float,
                        warm_start: Optional[np.ndarray] = None, max_sweeps: int = 10_000,
                        tol: float = 1e-8, track_objective: bool = False) -> LassoFit:
    p = gram.shape[0]
    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    diag = np.diag(gram).copy()
    gram_beta = gram @ beta
    history = [_objective(gram, xty, yty, beta, alpha)] if track_objective else []

    # full sweeps alternate with sweeps over the current support until a full sweep is quiet
    active = None
    converged = False
    sweeps = 0
    while sweeps < max_sweeps:
        coords = range(p) if active is None else active
        max_change = 0.0
        for k in coords:
            if diag[k] <= 0.0:
                continue
            old = beta[k]
            rho = xty[k] - gram_beta[k] + diag[k] * old
            new = float(soft_threshold(rho, alpha)) / diag[k]
            if new != old:
                delta = new - old
                gram_beta += gram[:, k] * delta
                beta[k] = new
                max_change = max(max_change, abs(delta))
        sweeps += 1
        if track_objective:
            history.append(_objective(gram, xty, yty, beta, alpha))
        if max_change < tol:
            if active is None:
                converged = True
                break
            active = None
        elif active is None:
            active = np.flatnonzero(beta)

    if not converged:
        logger.warning("Lasso did not converge in %d sweeps (alpha=%g)", max_sweeps, alpha)
    return LassoFit(coef=beta, converged=converged, sweeps=sweeps, objective_history=tuple(history))


def lasso_fit(X: np.ndarray, y: np.ndarray, alpha: float, *, warm_start: Optional[np.ndarray] = None,
              max_sweeps: int = 10_000, tol: float = 1e-8, track_objective: bool = False) -> LassoFit:
    """Minimize ``(1/2n)||y - X b||^2 + alpha ||b||_1`` by cyclic coordinate descent."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    return _coordinate_descent(X.T @ X / n, X.T @ y / n, float(y @ y) / n, alpha,
                               warm_start=warm_start, max_sweeps=max_sweeps, tol=tol,
                               track_objective=track_objective)


def cv_select_alpha(X: np.ndarray, y: np.ndarray, cv_alphas: Sequence[float], k_folds: int,
                    rng: Optional[np.random.Generator] = None, *, shuffle: bool = False) -> float:
    """Pick the penalty with the lowest mean held-out squared error over contiguous folds.

    Ties go to the larger penalty.  ``rng`` is only consulted when ``shuffle`` is set.
    """
    alphas = sorted({float(a) for a in cv_alphas if np.isfinite(a) and a > 0}, reverse=True)
    if not alphas:
        raise ValueError("no usable penalty in cv_alphas")
    if len(alphas) == 1:
        return alphas[0]

    n = len(y)
    order = np.arange(n)
    if shuffle:
        if rng is None:
            raise ValueError("shuffled folds need an rng")
        order = rng.permutation(n)
    errors = np.zeros(len(alphas))
    for fold in np.array_split(order, k_folds):
        train = np.ones(n, dtype=bool)
        train[fold] = False
        X_train, y_train = X[train], y[train]
        n_train = len(y_train)
        gram, xty, yty = X_train.T @ X_train / n_train, X_train.T @ y_train / n_train, float(y_train @ y_train) / n_train
        beta = None
        for position, alpha in enumerate(alphas):
            beta = _coordinate_descent(gram, xty, yty, alpha, warm_start=beta).coef
            residual = y[fold] - X[fold] @ beta
            errors[position] += residual @ residual / len(fold)
    errors /= k_folds

    best = 0
    for position in range(1, len(alphas)):
        if errors[position] < errors[best] - 1e-12 * abs(errors[best]):
            best = position
    logger.debug("CV errors %s -> alpha=%g", np.round(errors, 6).tolist(), alphas[best])
    return alphas[best]


def discover(dataset: Union[Dataset, np.ndarray], params: Optional[GrangerParams] = None,
             l_max: Optional[int] = None) -> LinkSet:
    """Lagged links ``(i, j, s)``, ``s >= 1``, found by Lasso selection plus t-test pruning."""
    params = params or GrangerParams()
    names = tuple(dataset.names) if isinstance(dataset, Dataset) else None
    values = dataset.values if isinstance(dataset, Dataset) else np.asarray(dataset, dtype=float)
    rows, m = values.shape
    n = rows - params.max_lag
    if params.k_folds > n // 10:
        raise InsufficientDataError(f"k_folds={params.k_folds} needs at least {10 * params.k_folds} usable rows, got {n}")

    rng = make_rng(params.seed) if params.shuffle_folds else None
    links = set()
    for target in range(m):
        design = build_lagged_design(values, target, params.max_lag)
        if design.X.shape[1] == 0:
            continue
        alpha = cv_select_alpha(design.X, design.y, params.cv_alphas, params.k_folds, rng,
                                shuffle=params.shuffle_folds)
        fit = lasso_fit(design.X, design.y, alpha)
        support = np.flatnonzero(fit.coef)
        if support.size == 0:
            continue
        if n - support.size - 1 <= 0:
            logger.warning("Skipping t-tests for target %d: support of %d leaves no residual dof", target, support.size)
            continue
        ols = sm.OLS(design.y, sm.add_constant(design.X[:, support], has_constant="add")).fit()
        t_values = np.asarray(ols.tvalues)[1:]
        p_values = stats.t.sf(t_values * np.sign(fit.coef[support]), ols.df_resid)
        for column, p_value in zip(support, p_values):
            if p_value < params.significance:
                source, lag = design.column_index[column]
                links.add((source, target, lag))

    logger.info("Granger discovery found %d lagged link(s) among %d variables", len(links), m)
    return LinkSet(m=m, l_max=params.max_lag if l_max is None else l_max, links=frozenset(links), names=names)
