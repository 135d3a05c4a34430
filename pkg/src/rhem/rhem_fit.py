"""Stratified Cox partial likelihood for size-conditioned case-control strata.

With one case per stratum the sampled partial likelihood is a conditional
logit.  Stratum ``j`` contributes ``theta . s_case - log sum_r exp(theta . s_r)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .results import FitResult
from .sampling import ObservationMatrix

__all__ = [
    "DesignMatrix",
    "FitError",
    "NonConvergence",
    "PerfectSeparation",
    "SingularHessian",
    "add_interactions",
    "fit_rhem",
    "joint_fit",
    "standardize",
]


class FitError(ArithmeticError):
    """Numerical failure of a model fit."""


class NonConvergence(FitError):
    pass


class PerfectSeparation(FitError):
    pass


class SingularHessian(FitError):
    pass


@dataclass
class DesignMatrix:
    """Standardized statistics plus stratum layout.

    ``means``/``sds`` hold the constants used for each base column; interaction
    columns are products of standardized parents and are not rescaled
    (``interactions`` maps their names to the parent pair).
    """

    X: np.ndarray
    names: list
    means: dict
    sds: dict
    strata: np.ndarray
    is_event: np.ndarray
    sizes: np.ndarray
    stratum_ids: list = field(default_factory=list)
    interactions: dict = field(default_factory=dict)
    size_constants: tuple | None = None

    def __len__(self):
        return self.X.shape[0]

    def column(self, name):
        return self.X[:, self.names.index(name)]


def _zscore(values, names):
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.shape[0] < 2:
        raise ValueError("standardization needs at least 2 rows")
    means = values.mean(axis=0)
    sds = values.std(axis=0, ddof=1)
    for name, sd in zip(names, sds):
        if not sd > 0:
            raise ValueError(f"column {name!r} has zero variance and cannot be standardized")
    return (values - means) / sds, means, sds


def standardize(obs: ObservationMatrix) -> DesignMatrix:
    """Z-score every statistic over all rows (cases and controls pooled), n-1 divisor."""
    names = list(obs.names)
    X, means, sds = _zscore(obs.values, names)
    codes = obs.stratum_codes()
    labels: dict = {}
    for c, n, s in zip(codes, obs.network, obs.stratum):
        labels.setdefault(int(c), (str(n), str(s)))
    return DesignMatrix(
        X=X, names=names,
        means=dict(zip(names, means.tolist())), sds=dict(zip(names, sds.tolist())),
        strata=codes, is_event=np.asarray(obs.is_event, dtype=bool), sizes=obs.sizes,
        stratum_ids=[labels[i] for i in range(len(labels))],
    )


def raw_design(obs: ObservationMatrix) -> DesignMatrix:
    """Unstandardized design (identity constants), for fits on the raw scale."""
    dm = standardize_like(obs, {n: 0.0 for n in obs.names}, {n: 1.0 for n in obs.names})
    return dm


def standardize_like(obs: ObservationMatrix, means: dict, sds: dict) -> DesignMatrix:
    names = list(obs.names)
    mu = np.array([means[n] for n in names])
    sd = np.array([sds[n] for n in names])
    codes = obs.stratum_codes()
    labels: dict = {}
    for c, n, s in zip(codes, obs.network, obs.stratum):
        labels.setdefault(int(c), (str(n), str(s)))
    return DesignMatrix(
        X=(np.ascontiguousarray(obs.values, dtype=np.float64) - mu) / sd, names=names,
        means=dict(means), sds=dict(sds), strata=codes,
        is_event=np.asarray(obs.is_event, dtype=bool), sizes=obs.sizes,
        stratum_ids=[labels[i] for i in range(len(labels))],
    )


SIZE = "size"


def add_interactions(dm: DesignMatrix, pairs: Sequence[tuple]) -> DesignMatrix:
    """Append products of standardized parent columns.

    ``"size"`` names the standardized hyperedge size, which may be used as a
    parent even though it is not itself a column.
    """
    X = dm.X
    names = list(dm.names)
    inter = dict(dm.interactions)
    size_constants = dm.size_constants
    size_col = None
    new_cols = []
    for a, b in pairs:
        cols = []
        for parent in (a, b):
            if parent == SIZE:
                if size_col is None:
                    sizes = dm.sizes.astype(np.float64)
                    if size_constants is None:
                        sd = sizes.std(ddof=1) if len(sizes) > 1 else 0.0
                        if not sd > 0:
                            raise ValueError("hyperedge size is constant; size interactions undefined")
                        size_constants = (float(sizes.mean()), float(sd))
                    size_col = (sizes - size_constants[0]) / size_constants[1]
                cols.append(size_col)
            elif parent in names:
                cols.append(X[:, names.index(parent)])
            else:
                raise KeyError(f"unknown interaction parent {parent!r}")
        name = f"{a}:{b}"
        if name in names:
            raise ValueError(f"duplicate column {name!r}")
        names.append(name)
        inter[name] = (a, b)
        new_cols.append(cols[0] * cols[1])
    if new_cols:
        X = np.column_stack([X] + new_cols)
    return DesignMatrix(
        X=X, names=names, means=dm.means, sds=dm.sds, strata=dm.strata,
        is_event=dm.is_event, sizes=dm.sizes, stratum_ids=dm.stratum_ids,
        interactions=inter, size_constants=size_constants,
    )


def size_interaction_pairs(names):
    return [(n, SIZE) for n in names]


class StratifiedLikelihood:
    """Log partial likelihood, gradient and Hessian over per-event strata."""

    def __init__(self, dm: DesignMatrix):
        order = np.argsort(dm.strata, kind="stable")
        strata = dm.strata[order]
        self.X = np.ascontiguousarray(dm.X[order])
        self.is_event = dm.is_event[order]
        if len(strata) == 0:
            raise ValueError("design matrix has no rows")
        starts = np.flatnonzero(np.r_[True, strata[1:] != strata[:-1]])
        self.starts = starts
        self.sizes = np.diff(np.r_[starts, len(strata)])
        self.row_stratum = np.repeat(np.arange(len(starts)), self.sizes)
        n_cases = np.add.reduceat(self.is_event.astype(np.int64), starts)
        if np.any(n_cases != 1):
            bad = int(np.flatnonzero(n_cases != 1)[0])
            raise ValueError(f"stratum {bad} has {n_cases[bad]} cases; each needs exactly one")
        if np.any(self.sizes < 2):
            raise ValueError("every stratum needs at least one control")
        self.X_case = self.X[self.is_event]
        self.case_sum = self.X_case.sum(axis=0)
        self.n_strata = len(starts)
        self.n_rows = len(strata)

    def _softmax(self, theta):
        eta = self.X @ theta
        mx = np.maximum.reduceat(eta, self.starts)
        ex = np.exp(eta - mx[self.row_stratum])
        tot = np.add.reduceat(ex, self.starts)
        return eta, mx, ex, tot

    def loglik(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        eta, mx, _, tot = self._softmax(theta)
        return self._ll(eta, mx, tot)

    def _ll(self, eta, mx, tot):
        # compensated sums keep the value independent of stratum order
        return math.fsum(eta[self.is_event]) - math.fsum(mx + np.log(tot))

    def derivatives(self, theta):
        """Return ``(loglik, gradient, hessian)``."""
        theta = np.asarray(theta, dtype=np.float64)
        eta, mx, ex, tot = self._softmax(theta)
        ll = self._ll(eta, mx, tot)
        p = ex / tot[self.row_stratum]
        px = self.X * p[:, None]
        xbar = np.add.reduceat(px, self.starts, axis=0)
        grad = self.case_sum - xbar.sum(axis=0)
        hess = -(self.X.T @ px - xbar.T @ xbar)
        return ll, grad, hess

    def probabilities(self, theta):
        _, _, ex, tot = self._softmax(np.asarray(theta, dtype=np.float64))
        return ex / tot[self.row_stratum]


def _normal_p(z):
    return np.array([math.erfc(abs(v) / math.sqrt(2.0)) if math.isfinite(v) else math.nan for v in z])


def separation_direction(lik: StratifiedLikelihood, tol: float = 1e-7):
    """Direction ``d`` with ``d . (s_case - s_r) >= 0`` for every control row and
    strict inequality somewhere, or ``None``.

    Such a ``d`` exists exactly when the partial likelihood has no finite
    maximizer: moving along it never lowers the likelihood.  Solved as a linear
    program over the box ``|d_i| <= 1``.
    """
    from scipy.optimize import linprog

    ctrl = ~lik.is_event
    D = lik.X_case[lik.row_stratum[ctrl]] - lik.X[ctrl]
    if D.shape[0] == 0:
        return None
    scale = max(1.0, float(np.abs(D).max()))
    D = D / scale
    res = linprog(-D.sum(axis=0), A_ub=-D, b_ub=np.zeros(D.shape[0]),
                  bounds=[(-1.0, 1.0)] * D.shape[1], method="highs")
    if res.status != 0 or -res.fun <= tol * D.shape[0]:
        return None
    return res.x


def _separation_error(lik, theta, it, ll):
    d = separation_direction(lik)
    if d is None:
        return None
    lead = ", ".join(f"{v:+.2f}" for v in d)
    return PerfectSeparation(
        f"cases are (quasi-)separated from their controls along direction [{lead}]; "
        f"the likelihood keeps rising as estimates diverge (max |theta| = "
        f"{np.max(np.abs(theta)):.3g} after {it} iterations, log-likelihood {ll:.6g}), "
        "so no finite estimate exists"
    )


def fit_rhem(dm: DesignMatrix, max_iter: int = 100, gtol: float = 1e-8, xtol: float = 1e-10,
             theta0=None, divergence_bound: float = 50.0) -> FitResult:
    """Maximize the stratified log partial likelihood by damped Newton-Raphson.

    Converged when ``max|gradient| < gtol`` or the accepted step norm is below
    ``xtol``.  Steps are halved while they fail to increase the likelihood.
    The data are checked for separation whenever estimates exceed
    ``divergence_bound`` in absolute value, the iteration stalls, or the
    information matrix at the optimum is numerically singular.

    Raises
    ------
    PerfectSeparation
        Some direction separates every case from its controls, so estimates
        diverge while the likelihood keeps rising.
    SingularHessian
        The observed information is not invertible.
    NonConvergence
        ``max_iter`` reached otherwise.
    """
    lik = StratifiedLikelihood(dm)
    k = dm.X.shape[1]
    if k == 0:
        raise ValueError("design matrix has no columns")
    theta = np.zeros(k) if theta0 is None else np.asarray(theta0, dtype=np.float64).copy()
    ll, grad, hess = lik.derivatives(theta)
    ll0 = lik.loglik(np.zeros(k))
    converged = False
    checked = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(grad)) < gtol:
            converged = True
            it -= 1
            break
        try:
            step = np.linalg.solve(-hess, grad)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            err = _separation_error(lik, theta, it, ll)
            if err is not None:
                raise err from None
            raise SingularHessian(
                f"singular information matrix at iteration {it} (collinear statistics?)"
            ) from None
        scale = 1.0
        for _ in range(60):
            cand = theta + scale * step
            ll_new = lik.loglik(cand)
            if ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            scale *= 0.5
        else:
            raise NonConvergence(f"step halving failed at iteration {it}")
        theta = cand
        ll, grad, hess = lik.derivatives(theta)
        if not checked and np.max(np.abs(theta)) > divergence_bound:
            checked = True
            err = _separation_error(lik, theta, it, ll)
            if err is not None:
                raise err
        if np.max(np.abs(grad)) < gtol or np.linalg.norm(scale * step) < xtol:
            converged = True
            break
    if not converged:
        err = None if checked else _separation_error(lik, theta, it, ll)
        if err is not None:
            raise err
        raise NonConvergence(
            f"no convergence in {max_iter} iterations (max |gradient| = {np.max(np.abs(grad)):.3g})"
        )
    info = -hess
    if not checked:
        # a flat likelihood direction at a "converged" point also signals separation
        eig = np.linalg.eigvalsh(info)
        if not eig[0] > 1e-6 * max(eig[-1], 1.0):
            err = _separation_error(lik, theta, it, ll)
            if err is not None:
                raise err
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise SingularHessian("information matrix singular at the optimum") from None
    var = np.diag(cov)
    if np.any(var <= 0) or not np.all(np.isfinite(var)):
        raise SingularHessian("information matrix not positive definite at the optimum")
    se = np.sqrt(var)
    z = theta / se
    model = {
        "loglik": ll,
        "loglik_null": ll0,
        "aic": 2 * k - 2 * ll,
        "n_events": lik.n_strata,
        "n_obs": lik.n_rows,
        "iterations": it,
        "max_abs_gradient": float(np.max(np.abs(grad))),
    }
    base = [n for n in dm.names if n not in dm.interactions]
    meta = {
        "method": "Newton-Raphson, stratified conditional logit, per-event strata",
        "interactions_restandardized": False,
        "interactions": {n: list(p) for n, p in dm.interactions.items()},
        "raw_scale": {
            n: {"estimate": float(theta[dm.names.index(n)] / dm.sds[n]),
                "se": float(se[dm.names.index(n)] / dm.sds[n])}
            for n in base
        },
    }
    return FitResult(
        kind="rhem", names=list(dm.names), estimates=theta, se=se, stat=z, p=_normal_p(z),
        stat_label="z", model=model,
        standardization={"means": dm.means, "sds": dm.sds,
                         "size": list(dm.size_constants) if dm.size_constants else None},
        meta=meta,
    )


def design_for(obs: ObservationMatrix, interactions: bool = False) -> DesignMatrix:
    dm = standardize(obs)
    if interactions:
        dm = add_interactions(dm, size_interaction_pairs(dm.names))
    return dm


def joint_fit(matrices: Sequence[ObservationMatrix], interactions: bool = False,
              **options) -> FitResult:
    """One parameter vector for the product of per-network likelihoods.

    Standardization is computed over the pooled rows of all networks.
    """
    matrices = list(matrices)
    if not matrices:
        raise ValueError("joint_fit needs at least one matrix")
    names = matrices[0].names
    for obs in matrices[1:]:
        if obs.names != names:
            raise ValueError(f"catalog mismatch across networks: {obs.names} vs {names}")
    pooled = ObservationMatrix.concat(matrices) if len(matrices) > 1 else matrices[0]
    result = fit_rhem(design_for(pooled, interactions), **options)
    result.meta["networks"] = sorted({str(n) for obs in matrices for n in obs.networks()})
    return result
