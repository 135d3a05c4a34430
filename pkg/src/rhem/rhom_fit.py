"""Linear outcome model: OLS of event impact on standardized hyperedge statistics."""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy import stats as sps

from .results import FitResult
from .sampling import ObservationMatrix

__all__ = ["RankDeficient", "ols", "fit_rhom", "per_network_and_joint"]

log = logging.getLogger(__name__)

INTERCEPT = "(intercept)"


class RankDeficient(ArithmeticError):
    pass


def ols(X, y, names=None, intercept=True, rtol=1e-10):
    """Least squares through a column-pivoted QR decomposition.

    Returns ``(beta, se, t, p, info)`` where ``info`` has ``r2``, ``rmse``
    (``sqrt(RSS/N)``), ``sigma2`` (``RSS/(N-k-1)``), ``rss``, ``n``, ``df`` and
    ``residuals``.  Columns of ``X`` exclude the intercept, which is prepended
    when ``intercept`` is true.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    names = [f"x{i}" for i in range(k)] if names is None else list(names)
    if intercept:
        X = np.column_stack([np.ones(n), X])
        names = [INTERCEPT] + names
    p_cols = X.shape[1]
    df = n - p_cols
    if df < 1:
        raise ValueError(f"{n} observations for {p_cols} coefficients; need more rows than columns")
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = rtol * max(diag[0], 1.0) if len(diag) else 0.0
    rank = int(np.sum(diag > tol))
    if rank < p_cols:
        bad = sorted(names[i] for i in piv[rank:])
        raise RankDeficient(f"design matrix is rank deficient; aliased column(s): {', '.join(bad)}")
    z = Q.T @ y
    beta_p = scipy.linalg.solve_triangular(R, z)
    beta = np.empty(p_cols)
    beta[piv] = beta_p
    resid = y - X @ beta
    rss = float(resid @ resid)
    sigma2 = rss / df
    Rinv = scipy.linalg.solve_triangular(R, np.eye(p_cols))
    var_p = sigma2 * np.sum(Rinv * Rinv, axis=1)
    var = np.empty(p_cols)
    var[piv] = var_p
    se = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    p = 2 * sps.t.sf(np.abs(t), df)
    if intercept:
        tss = float(np.sum((y - y.mean()) ** 2))
    else:
        tss = float(y @ y)
    r2 = 1.0 - rss / tss if tss > 0 else (1.0 if rss == 0 else 0.0)
    info = {
        "names": names, "r2": r2, "rmse": float(np.sqrt(rss / n)), "sigma2": sigma2,
        "rss": rss, "n": n, "df": df, "residuals": resid,
    }
    return beta, se, t, p, info


def fit_rhom(obs: ObservationMatrix, means=None, sds=None) -> FitResult:
    """OLS of outcome on z-scored statistics over case rows; the outcome stays raw.

    Standardization constants default to mean and sample SD over the case rows
    used in the fit.  Rows without an outcome are dropped with a warning.
    """
    ev = obs.events_only()
    keep = np.isfinite(ev.outcome)
    dropped = int((~keep).sum())
    if dropped:
        log.warning("outcome model: dropped %d event(s) without an outcome", dropped)
        ev = ev.subset(keep)
    names = list(ev.names)
    X = np.asarray(ev.values, dtype=np.float64)
    if means is None or sds is None:
        if X.shape[0] < 2:
            raise ValueError("standardization needs at least 2 rows")
        mu = X.mean(axis=0)
        sd = X.std(axis=0, ddof=1)
        for name, s in zip(names, sd):
            if not s > 0:
                raise ValueError(f"column {name!r} has zero variance and cannot be standardized")
    else:
        mu = np.array([means[n] for n in names])
        sd = np.array([sds[n] for n in names])
    Z = (X - mu) / sd
    beta, se, t, p, info = ols(Z, ev.outcome, names)
    model = {
        "r2": info["r2"],
        "rmse": info["rmse"],
        "n_obs": info["n"],
        "df_resid": info["df"],
        "sigma2": info["sigma2"],
        "dropped_missing_outcome": dropped,
    }
    meta = {
        "method": "OLS via column-pivoted QR, intercept included, outcome unstandardized",
        "rmse_definition": "sqrt(RSS / N)",
        "sigma2_definition": "RSS / (N - k - 1)",
        "networks": ev.networks(),
    }
    return FitResult(
        kind="rhom", names=info["names"], estimates=beta, se=se, stat=t, p=p, stat_label="t",
        model=model,
        standardization={"means": dict(zip(names, mu.tolist())), "sds": dict(zip(names, sd.tolist()))},
        meta=meta,
    )


def per_network_and_joint(matrices: Sequence[ObservationMatrix]) -> dict:
    """``{network: result}`` for each input plus ``"joint"`` on the pooled rows."""
    matrices = list(matrices)
    if not matrices:
        raise ValueError("no observation matrices")
    out = {}
    for obs in matrices:
        for name in obs.networks():
            out[name] = fit_rhom(obs.for_network(name))
    pooled = ObservationMatrix.concat(matrices) if len(matrices) > 1 else matrices[0]
    out["joint"] = fit_rhom(pooled)
    return out
