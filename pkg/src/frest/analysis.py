"""Correlation structure of signal ensembles, and the Gaussian bias of MSE training.

Correlation views over an ensemble of shape ``(M, T, N)``:

* ``temporal``: the T rows are the variables; observations pool samples and nodes.
* ``spatial``: the N columns are the variables; observations pool samples and steps.
* ``joint``: all T*N entries are variables; observations are the M samples.

Complex spectra are reduced to their modulus before correlating.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import (DecompositionError, InsufficientSamplesError, InvalidInputError,
                         InvalidParameterError)
from .rng import make_rng
from .transforms import apply_transform
from .validation import check_finite

VIEWS = ("temporal", "spatial", "joint")
DOMAINS = ("raw", "fft", "gft", "jft")


@dataclass(frozen=True)
class CorrelationReport:
    domain_label: str
    rho_temporal: float
    rho_spatial: float
    rho_joint: float

    def as_row(self):
        return [self.rho_temporal, self.rho_spatial, self.rho_joint]


def as_ensemble(samples):
    """Stack a list of equal-shape matrices (or pass through an ``(M, T, N)`` array)."""
    arr = np.asarray(samples)
    if arr.ndim != 3:
        raise InvalidInputError(f"ensemble must have shape (M, T, N), got {arr.shape}")
    if arr.shape[0] < 2 or 0 in arr.shape:
        raise InsufficientSamplesError(f"ensemble needs M >= 2 samples, got shape {arr.shape}")
    return check_finite(arr, "ensemble")


def _view_matrix(ens, view):
    m, t, n = ens.shape
    if view == "temporal":
        return np.transpose(ens, (0, 2, 1)).reshape(m * n, t)
    if view == "spatial":
        return ens.reshape(m * t, n)
    if view == "joint":
        return ens.reshape(m, t * n)
    raise InvalidParameterError(f"unknown view {view!r}")


def correlation_matrix(obs):
    """Pearson correlations of the columns of ``obs``; zero-variance columns give 0."""
    obs = np.asarray(obs, dtype=np.float64)
    mean = obs.mean(axis=0)
    centered = obs - mean
    std = np.sqrt(np.mean(centered * centered, axis=0))
    scale = np.maximum(np.abs(mean), np.max(np.abs(obs), axis=0, initial=0.0))
    dead = std <= 1e-12 * scale
    std = np.where(dead, 1.0, std)
    z = centered / std
    z[:, dead] = 0.0
    corr = (z.T @ z) / obs.shape[0]
    return np.clip(corr, -1.0, 1.0)


def mean_offdiag_abs_correlation(ensemble, view):
    """Mean of ``|rho_ij|`` over distinct variable pairs of the chosen view."""
    ens = np.asarray(ensemble)
    if ens.ndim != 3:
        raise InvalidInputError(f"ensemble must have shape (M, T, N), got {ens.shape}")
    if ens.shape[0] < 3:
        raise InsufficientSamplesError(f"need at least 3 samples, got {ens.shape[0]}")
    check_finite(ens, "ensemble")
    if np.iscomplexobj(ens):
        ens = np.abs(ens)
    obs = _view_matrix(ens, view)
    n = obs.shape[1]
    if n < 2:
        return 0.0
    corr = np.abs(correlation_matrix(obs))
    off = np.sum(corr) - np.trace(corr)
    return float(off / (n * (n - 1)))


def decorrelation_table(ensemble, spectrum, onesided=True):
    """``rho_bar`` for every (domain, view) pair; rows raw, fft, gft, jft.

    With ``onesided`` the frequency rows above ``T // 2`` are dropped for the
    time-transformed domains: for real input they are conjugates of the lower
    half, so their moduli duplicate it exactly and would register as perfect
    correlations.
    """
    ens = as_ensemble(ensemble).astype(np.float64)
    if ens.shape[2] != spectrum.n_nodes:
        raise InvalidInputError(
            f"ensemble has {ens.shape[2]} nodes but spectrum has {spectrum.n_nodes}")
    reports = []
    for domain in DOMAINS:
        z = apply_transform(ens, domain, spectrum)
        if domain in ("fft", "jft"):
            if onesided:
                z = z[:, : ens.shape[1] // 2 + 1, :]
            z = np.abs(z)
        rows = [mean_offdiag_abs_correlation(z, v) for v in VIEWS]
        reports.append(CorrelationReport(domain, *rows))
    return reports


def table_array(reports):
    return np.array([r.as_row() for r in reports])


@dataclass(frozen=True)
class GaussianFactorization:
    """Sequential Gaussian regression of each variable on its predecessors.

    Arrays are indexed by position in ``ordering``. ``coefficients[k, :k]``
    regress variable ``ordering[k]`` on the earlier ones. ``cumulative_strengths``
    is the sum over predecessors of squared partial correlations (conditioning
    on all remaining variables); ``multiple_r2`` is ``1 - residual/marginal``.
    """

    ordering: np.ndarray
    coefficients: np.ndarray
    residual_variances: np.ndarray
    marginal_variances: np.ndarray
    cumulative_strengths: np.ndarray
    multiple_r2: np.ndarray

    def reconstruct(self):
        """Covariance in the original variable order, rebuilt from the factors."""
        n = len(self.ordering)
        inv_l = np.eye(n) - self.coefficients
        l = np.linalg.solve(inv_l, np.eye(n))
        perm_cov = l @ np.diag(self.residual_variances) @ l.T
        out = np.empty_like(perm_cov)
        out[np.ix_(self.ordering, self.ordering)] = perm_cov
        return out


def raster_order(t, n):
    """Time-major order of the flattened ``T x N`` grid, i.e. the identity permutation."""
    return np.arange(t * n)


def _check_ordering(ordering, size):
    if ordering is None:
        return np.arange(size)
    ordering = np.asarray(ordering, dtype=np.intp)
    if ordering.shape != (size,) or not np.array_equal(np.sort(ordering), np.arange(size)):
        raise InvalidInputError("ordering must be a permutation of the variable indices")
    return ordering


def _check_cov(cov):
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] < 1:
        raise InvalidInputError(f"covariance must be square, got {cov.shape}")
    check_finite(cov, "covariance")
    if np.max(np.abs(cov - cov.T)) > 1e-8 * max(1.0, np.max(np.abs(cov))):
        raise DecompositionError("covariance is not symmetric")
    return 0.5 * (cov + cov.T)


def gaussian_factorize(covariance, ordering=None):
    cov = _check_cov(covariance)
    n = cov.shape[0]
    order = _check_ordering(ordering, n)
    p = cov[np.ix_(order, order)]
    try:
        chol = np.linalg.cholesky(p)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError("covariance is not positive definite") from exc
    d = np.diag(chol)
    if np.any(d <= 0) or not np.all(np.isfinite(chol)):
        raise DecompositionError("covariance is not positive definite")
    unit = chol / d[None, :]
    coeffs = np.eye(n) - np.linalg.solve(unit, np.eye(n))
    coeffs = np.tril(coeffs, -1)
    resid = d * d
    marg = np.diag(p).copy()

    prec = np.linalg.solve(p, np.eye(n))
    prec = 0.5 * (prec + prec.T)
    pd = np.sqrt(np.diag(prec))
    partial = -prec / np.outer(pd, pd)
    strengths = np.array([np.sum(partial[k, :k] ** 2) for k in range(n)])
    if np.any(strengths >= 1.0):
        raise DecompositionError(
            "cumulative partial-correlation strength reached 1; residual scaling undefined")
    return GaussianFactorization(
        ordering=order, coefficients=coeffs, residual_variances=resid,
        marginal_variances=marg, cumulative_strengths=strengths,
        multiple_r2=np.clip(1.0 - resid / marg, 0.0, None))


def df_bias_terms(y, fact, noise_var, predictor=None):
    """Per-sample ``(mse_term, nll_term)`` for samples ``y`` of shape ``(M, n)``."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.zeros(y.shape[1]) if predictor is None else np.ravel(predictor)
    mse_term = np.sum((y - yhat) ** 2, axis=1) / (2.0 * noise_var)
    yp = y[:, fact.ordering]
    cond_mean = yp @ fact.coefficients.T
    scale = 2.0 * noise_var * (1.0 - fact.cumulative_strengths)
    nll_term = np.sum((yp - cond_mean) ** 2 / scale, axis=1)
    return mse_term, nll_term


def estimate_df_bias(covariance, ordering=None, n_samples=10000, noise_var=1.0, seed=0,
                     predictor=None):
    """Monte-Carlo mean and standard error of the MSE-minus-NLL gap under ``N(0, cov)``.

    The MSE term uses ``predictor`` (zero, the unconditional mean, by default);
    the NLL term uses conditional means on the predecessors in ``ordering`` and
    the ``1 / (1 - P^2)`` inflation of the residual scale.
    """
    if n_samples < 100:
        raise InsufficientSamplesError(f"n_samples must be >= 100, got {n_samples}")
    if not noise_var > 0:
        raise InvalidParameterError(f"noise_var must be positive, got {noise_var}")
    cov = _check_cov(covariance)
    fact = gaussian_factorize(cov, ordering)
    chol = np.linalg.cholesky(cov)
    z = make_rng(seed, 0).standard_normal((int(n_samples), cov.shape[0]))
    y = z @ chol.T
    mse_term, nll_term = df_bias_terms(y, fact, noise_var, predictor)
    gap = mse_term - nll_term
    return {
        "bias_mean": float(np.mean(gap)),
        "bias_stderr": float(np.std(gap, ddof=1) / np.sqrt(len(gap))),
        "cumulative_strengths": fact.cumulative_strengths.tolist(),
        "n_samples": int(n_samples),
        "noise_var": float(noise_var),
    }


def expected_df_bias(covariance, ordering=None, noise_var=1.0, predictor=None):
    """Closed-form expectation of the gap estimated by :func:`estimate_df_bias`."""
    cov = _check_cov(covariance)
    fact = gaussian_factorize(cov, ordering)
    yhat = np.zeros(cov.shape[0]) if predictor is None else np.ravel(predictor)
    mse = np.sum(np.diag(cov) + yhat ** 2) / (2.0 * noise_var)
    nll = np.sum(fact.residual_variances / (1.0 - fact.cumulative_strengths)) / (2.0 * noise_var)
    return float(mse - nll)


def ar1_covariance(n, rho, variance=1.0):
    idx = np.arange(n)
    return variance * rho ** np.abs(idx[:, None] - idx[None, :])
