"""Entropy estimators built on Gaussian mixtures.

The main estimator is the mixture plug-in

    H_hat = -(1/n) sum_i log f_hat(y_i),

with ``f_hat`` a mixture fitted to the same sample. Alongside it live a
Monte Carlo reference, the Gaussian MLE plug-in, three deterministic
approximations of a mixture's entropy (unscented transform, variational,
second-order Taylor) and a log-transform variant for data bounded below.

All values are in nats.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .gaussian import GaussianComponent, CovarianceMatrix, eigen_sym, gaussian_entropy, gaussian_kl
from .mixture import (
    CovarianceFamily,
    FitConfig,
    MixtureModel,
    _logsumexp_rows,
    as_data,
    check_finite,
    select_model,
)

LN2 = math.log(2.0)


class EntropyMethod(enum.Enum):
    GMM = "gmm"
    MC = "mc"
    MLE_GAUSSIAN = "mle"
    UT = "ut"
    VAR = "var"
    SOTE = "sote"


class DensityUnderflow(FloatingPointError):
    def __init__(self, row: int):
        super().__init__(f"mixture density underflows to zero at data row {row}")
        self.row = row


class BoundViolation(ValueError):
    def __init__(self, column: int, bound: float):
        super().__init__(f"column {column} has observations at or below its bound {bound}")
        self.column = column
        self.bound = bound


@dataclass(frozen=True)
class ModelSummary:
    k: int
    family: str
    n_obs: int | None

    @classmethod
    def of(cls, model: MixtureModel, n_obs: int | None = None) -> "ModelSummary":
        return cls(model.k, model.family.value, n_obs if n_obs is not None else model.n_obs)


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    method: EntropyMethod
    model_summary: ModelSummary | None = None
    se: float | None = None
    ridge: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise FloatingPointError(f"non-finite entropy estimate {self.value}")

    @property
    def bits(self) -> float:
        return self.value / LN2

    def to_dict(self, bits: bool = False) -> dict:
        scale = 1.0 / LN2 if bits else 1.0
        d = {
            "value": self.value * scale,
            "unit": "bits" if bits else "nats",
            "method": self.method.value,
        }
        if self.se is not None:
            d["se"] = self.se * scale
        if self.model_summary is not None:
            d["model"] = {
                "k": self.model_summary.k,
                "family": self.model_summary.family,
                "n_obs": self.model_summary.n_obs,
            }
        if self.ridge:
            d["ridge"] = self.ridge
        return d


def _mixture_log_density(data, model: MixtureModel) -> np.ndarray:
    x = as_data(data, model.dim)
    check_finite(x)
    logf = model.log_density(x)
    bad = ~np.isfinite(logf)
    if bad.any():
        raise DensityUnderflow(int(np.flatnonzero(bad)[0]))
    return logf


def entropy_gmm(data, model: MixtureModel) -> EntropyEstimate:
    """Mixture plug-in entropy of ``data`` under ``model``."""
    logf = _mixture_log_density(data, model)
    return EntropyEstimate(float(-np.mean(logf)), EntropyMethod.GMM, ModelSummary.of(model, logf.shape[0]))


def weighted_form_terms(data, model: MixtureModel):
    """The per-component pieces of the weighted form.

    Returns ``(pi_hat, A_hat, w)`` where ``w[i, k]`` are the importance
    weights of observation i for component k (each column sums to one),
    ``A_hat[k] = sum_i w[i, k] log f(y_i)`` and ``pi_hat[k]`` is the
    responsibility mass ``mean_i tau_k(y_i)``. At an EM fixed point
    ``pi_hat`` equals the fitted mixing weights.
    """
    x = as_data(data, model.dim)
    lp = model.component_log_prob(x)
    logf = _logsumexp_rows(lp)
    bad = ~np.isfinite(logf)
    if bad.any():
        raise DensityUnderflow(int(np.flatnonzero(bad)[0]))
    tau = np.exp(lp - logf[:, None])
    mass = tau.sum(axis=0)
    keep = mass > 0
    w = np.zeros_like(tau)
    w[:, keep] = tau[:, keep] / mass[keep]
    a_hat = w.T @ logf
    return mass / x.shape[0], a_hat, w


def entropy_weighted_form(data, model: MixtureModel) -> EntropyEstimate:
    """Same estimate as :func:`entropy_gmm`, assembled as ``-sum_k pi_k A_k``."""
    pi_hat, a_hat, _ = weighted_form_terms(data, model)
    value = -float(np.sum(pi_hat * a_hat))
    return EntropyEstimate(value, EntropyMethod.GMM, ModelSummary.of(model, np.asarray(data).shape[0]))


def entropy_mc(model: MixtureModel, s: int = 100_000, seed: int = 0) -> EntropyEstimate:
    """Monte Carlo entropy of ``model`` from ``s`` draws, with standard error."""
    if s < 100:
        raise ValueError("Monte Carlo sample size must be at least 100")
    y = model.sample(s, make_rng(seed, "mc"))
    logf = model.log_density(y)
    se = float(np.std(logf, ddof=1) / math.sqrt(s))
    return EntropyEstimate(float(-np.mean(logf)), EntropyMethod.MC, ModelSummary.of(model), se=se)


def entropy_mle_gaussian(data) -> EntropyEstimate:
    """Gaussian entropy with the MLE (1/n) covariance plugged in."""
    x = as_data(data)
    check_finite(x)
    n, p = x.shape
    if n <= p:
        raise ValueError(f"need n > p (n={n}, p={p})")
    diff = x - x.mean(axis=0)
    cov = CovarianceMatrix.from_array(diff.T @ diff / n)
    comp = GaussianComponent(x.mean(axis=0), cov)
    summary = ModelSummary(1, CovarianceFamily.FULL_VARYING.value, n)
    return EntropyEstimate(gaussian_entropy(comp), EntropyMethod.MLE_GAUSSIAN, summary, ridge=cov.ridge)


def sigma_points(comp: GaussianComponent) -> np.ndarray:
    """The 2p points ``mu +/- sqrt(p lambda_j) u_j``."""
    p = comp.dim
    eig = eigen_sym(comp.cov)
    offsets = (eig.eigenvectors * np.sqrt(p * eig.eigenvalues)).T
    return np.vstack([comp.mean + offsets, comp.mean - offsets])


def entropy_ut(model: MixtureModel) -> EntropyEstimate:
    """Unscented-transform approximation of the mixture entropy."""
    p = model.dim
    total = 0.0
    for w, comp in zip(model.weights, model.components):
        total += w * float(np.sum(model.log_density(sigma_points(comp))))
    return EntropyEstimate(-total / (2 * p), EntropyMethod.UT, ModelSummary.of(model))


def entropy_var(model: MixtureModel) -> EntropyEstimate:
    """Variational approximation.

    ``-sum_k pi_k log sum_l pi_l exp(-KL(N_k || N_l)) + sum_k pi_k H(N_k)``,
    which is exact for a single component.
    """
    k = model.k
    log_w = np.log(model.weights)
    neg_kl = np.empty((k, k))
    for a, ca in enumerate(model.components):
        for b, cb in enumerate(model.components):
            neg_kl[a, b] = 0.0 if a == b else -gaussian_kl(ca, cb)
    inner = _logsumexp_rows(log_w[None, :] + neg_kl)
    ent = np.array([gaussian_entropy(c) for c in model.components])
    value = float(-np.sum(model.weights * inner) + np.sum(model.weights * ent))
    return EntropyEstimate(value, EntropyMethod.VAR, ModelSummary.of(model))


def log_density_hessian(model: MixtureModel, x) -> np.ndarray:
    """Analytic Hessian of ``log f`` at the point ``x``.

    With ``g_k = Sigma_k^{-1}(mu_k - x)`` and ``tau_k`` the posterior weights
    at x: ``sum_k tau_k (g_k g_k' - Sigma_k^{-1}) - g g'``, ``g = sum tau_k g_k``.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    lp = model.component_log_prob(x)[0]
    tau = np.exp(lp - _logsumexp_rows(lp[None, :])[0])
    p = model.dim
    hess = np.zeros((p, p))
    grad = np.zeros(p)
    for t, comp in zip(tau, model.components):
        g = comp.cov.solve(comp.mean - x[0])
        hess += t * (np.outer(g, g) - comp.cov.inverse())
        grad += t * g
    return hess - np.outer(grad, grad)


def entropy_sote(model: MixtureModel) -> EntropyEstimate:
    """Second-order Taylor expansion of ``-E log f`` about each component mean."""
    h0 = -float(np.sum(model.weights * model.log_density(model.means)))
    correction = 0.0
    for w, comp in zip(model.weights, model.components):
        correction += 0.5 * w * float(np.sum(log_density_hessian(model, comp.mean) * comp.cov.values))
    return EntropyEstimate(h0 - correction, EntropyMethod.SOTE, ModelSummary.of(model))


@dataclass(frozen=True)
class BoundedTransform:
    """Per-column lower bounds; ``None`` marks an unbounded column.

    Bounded columns are mapped through ``t = log(y - lower)`` before fitting.
    """

    lower: tuple[float | None, ...]

    @classmethod
    def identity(cls, p: int) -> "BoundedTransform":
        return cls((None,) * p)

    @classmethod
    def all_bounded(cls, p: int, lower: float = 0.0) -> "BoundedTransform":
        return cls((float(lower),) * p)

    @classmethod
    def columns(cls, p: int, cols, lower: float = 0.0) -> "BoundedTransform":
        cols = set(int(c) for c in cols)
        bad = [c for c in cols if not 0 <= c < p]
        if bad:
            raise ValueError(f"bounded column index out of range: {bad}")
        return cls(tuple(float(lower) if j in cols else None for j in range(p)))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def bounded(self) -> list[int]:
        return [j for j, b in enumerate(self.lower) if b is not None]

    def subset(self, cols) -> "BoundedTransform":
        return BoundedTransform(tuple(self.lower[c] for c in cols))

    def apply(self, data) -> tuple[np.ndarray, np.ndarray]:
        """Transformed data and the per-row log-Jacobian ``sum_j log(y_j - l_j)``."""
        x = as_data(data)
        if x.shape[1] != self.dim:
            raise ValueError(f"transform has {self.dim} columns, data has {x.shape[1]}")
        t = x.copy()
        log_jac = np.zeros(x.shape[0])
        for j in self.bounded:
            shifted = x[:, j] - self.lower[j]
            if np.any(~(shifted > 0)):
                raise BoundViolation(j, self.lower[j])
            t[:, j] = np.log(shifted)
            log_jac += t[:, j]
        return t, log_jac


def fit_bounded(data, transform: BoundedTransform, config: FitConfig | None = None):
    """Fit a mixture in transformed space; returns ``(estimate, model)``."""
    x = as_data(data)
    check_finite(x)
    t, log_jac = transform.apply(x)
    model = select_model(t, config)
    est = entropy_gmm(t, model)
    value = est.value + float(np.mean(log_jac))
    return EntropyEstimate(value, EntropyMethod.GMM, est.model_summary), model


def entropy_bounded_gmm(data, transform: BoundedTransform, config: FitConfig | None = None) -> EntropyEstimate:
    """Mixture entropy for data bounded below in some coordinates.

    Uses the change-of-variables identity ``H(Y) = H(T) + E[sum_j log(y_j - l_j)]``
    for ``T = log(Y - l)`` on the bounded coordinates.
    """
    return fit_bounded(data, transform, config)[0]


def estimate_entropy(
    data,
    method: EntropyMethod | str = EntropyMethod.GMM,
    config: FitConfig | None = None,
    transform: BoundedTransform | None = None,
    mc_samples: int = 100_000,
) -> tuple[EntropyEstimate, MixtureModel | None]:
    """Fit (where needed) and estimate in one call; used by the CLI."""
    method = EntropyMethod(method) if isinstance(method, str) else method
    config = config or FitConfig()
    x = as_data(data)
    if method is EntropyMethod.MLE_GAUSSIAN:
        if transform is not None and transform.bounded:
            t, log_jac = transform.apply(x)
            est = entropy_mle_gaussian(t)
            return EntropyEstimate(est.value + float(np.mean(log_jac)), est.method, est.model_summary), None
        return entropy_mle_gaussian(x), None
    if transform is not None and transform.bounded:
        if method is not EntropyMethod.GMM:
            raise ValueError("bounded columns are only supported with the gmm and mle methods")
        return fit_bounded(x, transform, config)
    model = select_model(x, config)
    if method is EntropyMethod.GMM:
        return entropy_gmm(x, model), model
    if method is EntropyMethod.MC:
        return entropy_mc(model, mc_samples, config.seed), model
    approx = {EntropyMethod.UT: entropy_ut, EntropyMethod.VAR: entropy_var, EntropyMethod.SOTE: entropy_sote}
    return approx[method](model), model
