"""Estimation of (gamma, beta, B) from observed capitalizations or market weights.

gamma is the negative realized covariance of log-weight increments per unit time. The
drift enters only through ``B^ = beta 1^T + B`` on the simplex and is fitted by generalized
least squares on the reduced weight increments, with the admissibility constraints
(nonnegative off-diagonal entries and zero column sums of ``B^``) built into the
parametrization.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union
import logging

import numpy as np
import pandas as pd
import scipy.optimize

from .exceptions import DataIOError, DomainError, RankDeficientError
from .model_params import AdmissibleSimplexParameterSet, validate_simplex_params
from .simplex_poly import SIMPLEX_TOL

SECONDS_PER_YEAR = 365.25 * 86400.0


@dataclass(frozen=True, eq=False)
class CapTimeSeries:
    timestamps: np.ndarray
    caps: np.ndarray

    def __post_init__(self):
        timestamps, values = _check_series(self.timestamps, self.caps)
        if np.any(values <= 0.0):
            raise DomainError("capitalizations must be positive", {"rows": np.flatnonzero((values <= 0).any(axis=1)).tolist()[:20]})
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "caps", values)

    @property
    def d(self) -> int:
        return self.caps.shape[1]


@dataclass(frozen=True, eq=False)
class WeightTimeSeries:
    timestamps: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        timestamps, values = _check_series(self.timestamps, self.weights)
        if np.any(values < 0.0) or np.any(np.abs(values.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise DomainError("every row of weights must lie on the simplex")
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "weights", values)

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    @property
    def span(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0])


def _check_series(timestamps, values) -> Tuple[np.ndarray, np.ndarray]:
    timestamps = np.asarray(timestamps, dtype=float).reshape(-1)
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[0] != timestamps.shape[0]:
        raise DomainError(f"{timestamps.shape[0]} timestamps for {values.shape[0]} rows")
    if values.shape[1] < 2:
        raise DomainError(f"at least two assets are needed, got {values.shape[1]}")
    if not (np.all(np.isfinite(timestamps)) and np.all(np.isfinite(values))):
        raise DomainError("time series contains non-finite values")
    if np.any(np.diff(timestamps) <= 0.0):
        raise DomainError("timestamps must be strictly increasing")
    return timestamps, values


def caps_to_weights(ts: CapTimeSeries) -> WeightTimeSeries:
    return WeightTimeSeries(ts.timestamps, ts.caps / ts.caps.sum(axis=1, keepdims=True))


@dataclass(frozen=True, eq=False)
class GammaEstimate:
    gamma_hat: np.ndarray
    stderr: np.ndarray
    span: float
    n_clipped: int = 0


def _require_interior(ws: WeightTimeSeries, min_rows: int = 2):
    if ws.weights.shape[0] < min_rows:
        raise DomainError(f"at least {min_rows} observations are needed, got {ws.weights.shape[0]}")
    boundary = np.flatnonzero((ws.weights <= 0.0).any(axis=1))
    if boundary.size:
        raise DomainError("observed weights must be strictly positive", {"rows": boundary.tolist()[:20]})


def estimate_gamma(ws: WeightTimeSeries) -> GammaEstimate:
    """Realized-covariance estimate ``gamma_ij = -(1 / T) sum_t dlog mu_i dlog mu_j``.

    Negative off-diagonal estimates are clipped to 0 with a warning.

    Args:
        ws (WeightTimeSeries): Interior observations

    Returns:
        GammaEstimate: Symmetric estimate with zero diagonal and entrywise standard errors
    """
    _require_interior(ws)
    increments = np.diff(np.log(ws.weights), axis=0)
    span = ws.span
    products = increments[:, :, None] * increments[:, None, :]
    gamma = -products.sum(axis=0) / span
    stderr = np.sqrt((products ** 2).sum(axis=0)) / span
    gamma = 0.5 * (gamma + gamma.T)
    np.fill_diagonal(gamma, 0.0)
    np.fill_diagonal(stderr, 0.0)

    negative = gamma < 0.0
    n_clipped = int(negative.sum() // 2)
    if n_clipped:
        pairs = [(int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(negative)))]
        logging.warning(f"Clipped {n_clipped} negative gamma estimate(s) to 0: {pairs[:10]}")
        gamma[negative] = 0.0
    return GammaEstimate(gamma, stderr, span, n_clipped)


def drift_matrix(beta: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``B^ = beta 1^T + B``, the drift of the weights as a linear map ``b(mu) = B^ mu``."""
    beta = np.asarray(beta, dtype=float)
    return beta[:, None] + np.asarray(B, dtype=float)


def split_drift_matrix(B_hat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Canonical ``(beta, B)`` with ``beta_i`` the mean off-diagonal entry of row ``i`` of ``B^``."""
    B_hat = np.asarray(B_hat, dtype=float)
    d = B_hat.shape[0]
    off = ~np.eye(d, dtype=bool)
    beta = np.array([B_hat[i, off[i]].mean() for i in range(d)])
    return beta, B_hat - beta[:, None]


@dataclass(frozen=True, eq=False)
class DriftEstimate:
    beta: np.ndarray
    B: np.ndarray
    drift_matrix: np.ndarray
    drift_matrix_stderr: np.ndarray
    beta_stderr: np.ndarray
    projected: bool


def _off_diagonal_pairs(d: int) -> List[Tuple[int, int]]:
    return [(k, j) for k in range(d) for j in range(d) if k != j]


def _design(mu: np.ndarray, pairs: List[Tuple[int, int]]) -> np.ndarray:
    """Design of shape (m, d - 1, len(pairs)) for the reduced increments with the
    diagonal of ``B^`` eliminated as minus its column's off-diagonal sum."""
    m, d = mu.shape
    X = np.zeros((m, d - 1, len(pairs)))
    for p, (k, j) in enumerate(pairs):
        if k < d - 1:
            X[:, k, p] += mu[:, j]
        if j < d - 1:
            X[:, j, p] -= mu[:, j]
    return X


def estimate_drift(ws: WeightTimeSeries, gamma_hat: np.ndarray) -> DriftEstimate:
    """Fits ``dmu = B^ mu dt`` by least squares whitened with the covariance implied by ``gamma_hat``.

    The drift is parametrized by the off-diagonal entries of ``B^ = B + beta 1^T`` only,
    with each diagonal entry minus the sum of the rest of its column. Every fitted drift
    therefore sums to zero across the weights. Regressing each increment separately on
    ``(1, mu) dt`` would ignore this constraint, and its estimates would generally not be
    admissible. The increments of different weights are correlated through ``c(mu)``, so
    the joint fit is whitened with the Cholesky factor of the reduced covariance at every
    observation.

    The unconstrained solution is kept when its off-diagonal entries are nonnegative;
    otherwise the fit is redone by nonnegative least squares, which keeps the drift
    pointing into the simplex on every face.

    Args:
        ws (WeightTimeSeries): Interior observations
        gamma_hat (np.ndarray): Covariance parameters used for whitening

    Returns:
        DriftEstimate: Admissible drift parameters with standard errors
    """
    _require_interior(ws, min_rows=3)
    d = ws.d
    n = d - 1
    mu = ws.weights[:-1]
    dt = np.diff(ws.timestamps)
    dmu = np.diff(ws.weights, axis=0)[:, :n]

    gamma = np.asarray(gamma_hat, dtype=float)
    outer = gamma[None] * mu[:, :, None] * mu[:, None, :]
    c = -outer
    c[:, np.arange(d), np.arange(d)] = outer.sum(axis=2)
    try:
        L = np.linalg.cholesky(c[:, :n, :n])
    except np.linalg.LinAlgError as e:
        raise RankDeficientError("the covariance implied by gamma is singular at some observation") from e

    pairs = _off_diagonal_pairs(d)
    X = _design(mu, pairs) * np.sqrt(dt)[:, None, None]
    y = dmu / np.sqrt(dt)[:, None]
    X = np.linalg.solve(L, X).reshape(-1, len(pairs))
    y = np.linalg.solve(L, y[:, :, None]).reshape(-1)

    rank = np.linalg.matrix_rank(X)
    if rank < len(pairs):
        raise RankDeficientError(
            f"drift regression has rank {rank} < {len(pairs)} parameters",
            {"rank": int(rank), "parameters": len(pairs)},
        )
    solution, *_ = np.linalg.lstsq(X, y, rcond=None)
    projected = bool(np.any(solution < 0.0))
    if projected:
        logging.info("Unconstrained drift estimate is not admissible; projecting by nonnegative least squares")
        solution, _ = scipy.optimize.nnls(X, y)

    variances = np.diag(np.linalg.inv(X.T @ X))
    B_hat = np.zeros((d, d))
    B_hat_stderr = np.zeros((d, d))
    for p, (k, j) in enumerate(pairs):
        B_hat[k, j] = solution[p]
        B_hat_stderr[k, j] = np.sqrt(variances[p])
    np.fill_diagonal(B_hat, -(B_hat.sum(axis=0) - np.diag(B_hat)))

    beta, B = split_drift_matrix(B_hat)
    beta_stderr = np.sqrt((B_hat_stderr ** 2).sum(axis=1)) / (d - 1)
    return DriftEstimate(beta, B, B_hat, B_hat_stderr, beta_stderr, projected)


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    params: AdmissibleSimplexParameterSet
    gamma: GammaEstimate
    drift: DriftEstimate

    def sidecar(self) -> dict:
        """Standard errors and diagnostics accompanying the parameter file."""
        return {
            "span": self.gamma.span,
            "gamma_stderr": self.gamma.stderr.tolist(),
            "gamma_clipped": self.gamma.n_clipped,
            "drift_matrix": self.drift.drift_matrix.tolist(),
            "drift_matrix_stderr": self.drift.drift_matrix_stderr.tolist(),
            "beta_stderr": self.drift.beta_stderr.tolist(),
            "drift_projected": self.drift.projected,
        }


def calibrate(series: Union[CapTimeSeries, WeightTimeSeries]) -> CalibrationResult:
    ws = caps_to_weights(series) if isinstance(series, CapTimeSeries) else series
    logging.info(f"Calibrating d={ws.d} on {ws.weights.shape[0]} observations spanning {ws.span:g}")
    gamma = estimate_gamma(ws)
    drift = estimate_drift(ws, gamma.gamma_hat)
    params = validate_simplex_params(drift.beta, drift.B, gamma.gamma_hat)
    return CalibrationResult(params, gamma, drift)


def _parse_time(column: pd.Series) -> np.ndarray:
    if pd.api.types.is_numeric_dtype(column):
        return column.to_numpy(dtype=float)
    parsed = pd.to_datetime(column, utc=True)
    return (parsed - pd.Timestamp(0, tz="UTC")).dt.total_seconds().to_numpy()


def read_cap_csv(path: Path, time_scale: float = 1.0) -> Union[CapTimeSeries, WeightTimeSeries]:
    """Reads ``time,cap_1,...,cap_d`` or ``time,mu_1,...,mu_d``.

    Times are epoch seconds or RFC3339 strings and are multiplied by ``time_scale``
    (``1 / SECONDS_PER_YEAR`` converts them to years). Rows with missing values are dropped.

    Raises:
        DataIOError: Unreadable file or unexpected header
    """
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataIOError(f"cannot read {path}: {e}", {"path": str(path)}) from e

    if "path" in frame.columns and frame["path"].nunique() > 1:
        first = frame["path"].iloc[0]
        logging.warning(f"{path} holds {frame['path'].nunique()} paths; calibrating on path {first} only")
        frame = frame[frame["path"] == first]
    if "time" not in frame.columns:
        raise DataIOError(f"{path} has no 'time' column", {"columns": list(frame.columns)})
    caps = [c for c in frame.columns if c.startswith("cap_")]
    mus = [c for c in frame.columns if c.startswith("mu_")]
    if bool(caps) == bool(mus):
        raise DataIOError(f"{path} must have either cap_* or mu_* columns", {"columns": list(frame.columns)})
    columns = caps or mus

    missing = frame[["time"] + columns].isna().any(axis=1)
    if missing.any():
        logging.warning(f"Dropping {int(missing.sum())} row(s) with missing values from {path}")
        frame = frame[~missing]
    try:
        timestamps = _parse_time(frame["time"]) * time_scale
    except (ValueError, TypeError) as e:
        raise DataIOError(f"cannot parse the time column of {path}: {e}") from e
    values = frame[columns].to_numpy(dtype=float)

    if caps:
        return CapTimeSeries(timestamps, values)
    deviation = np.abs(values.sum(axis=1) - 1.0).max(initial=0.0)
    if deviation > 1e-6:
        logging.warning(f"Weights in {path} deviate from the simplex by up to {deviation:.2e}; renormalizing")
    return WeightTimeSeries(timestamps, values / values.sum(axis=1, keepdims=True))
