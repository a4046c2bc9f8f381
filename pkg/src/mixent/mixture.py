"""Gaussian mixture fitting by EM, with BIC model selection.

Five covariance families are supported, from one shared spherical
covariance up to one unconstrained covariance per component. Each family
has a closed-form M-step, so every EM iteration is an exact maximisation
and the log-likelihood is non-decreasing.

Randomness (k-means++ seeding) is keyed by ``(seed, K, restart)``: all
families at a given K start from the same partitions, which keeps the BIC
comparison between families free of initialisation noise.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from ._rng import make_rng
from .gaussian import LOG_2PI, CovarianceMatrix, GaussianComponent, NotPositiveDefinite

log = logging.getLogger(__name__)

DEFAULT_SEED = 20240101
LLOYD_ITERATIONS = 10
DEGENERACY_RTOL = 1e-10


class CovarianceFamily(enum.Enum):
    """Covariance structure, named with the usual mclust codes.

    Declaration order is the final tie-break in :func:`select_model`.
    """

    SPHERICAL_EQUAL = "EII"
    SPHERICAL_VARYING = "VII"
    DIAGONAL_VARYING = "VVI"
    FULL_EQUAL = "EEE"
    FULL_VARYING = "VVV"

    @classmethod
    def parse(cls, name: str) -> "CovarianceFamily":
        key = name.strip()
        for fam in cls:
            if key.upper() == fam.value or key.upper() == fam.name:
                return fam
        raise ValueError(f"unknown covariance family {name!r}")

    @property
    def order(self) -> int:
        return list(CovarianceFamily).index(self)

    def n_cov_params(self, k: int, p: int) -> int:
        return {
            "EII": 1,
            "VII": k,
            "VVI": k * p,
            "EEE": p * (p + 1) // 2,
            "VVV": k * p * (p + 1) // 2,
        }[self.value]

    def univariate_alias(self) -> "CovarianceFamily":
        """Family that yields the identical model when p == 1."""
        if self in (CovarianceFamily.SPHERICAL_EQUAL, CovarianceFamily.FULL_EQUAL):
            return CovarianceFamily.SPHERICAL_EQUAL
        return CovarianceFamily.SPHERICAL_VARYING


ALL_FAMILIES = tuple(CovarianceFamily)


def n_free_params(k: int, p: int, family: CovarianceFamily) -> int:
    """Independent parameters of a K-component mixture in p dimensions."""
    return (k - 1) + k * p + family.n_cov_params(k, p)


class EmptyComponent(ValueError):
    """A component lost (almost) all its responsibility mass."""

    def __init__(self, index: int, mass: float):
        super().__init__(f"component {index} is empty (mass {mass:.3g})")
        self.index = index
        self.mass = mass


class DegenerateComponent(ValueError):
    """A component covariance became singular during EM."""


class AllInitsFailed(RuntimeError):
    pass


class NonFiniteDataError(ValueError):
    def __init__(self, row: int):
        super().__init__(f"non-finite value in data row {row}")
        self.row = row


@dataclass(frozen=True)
class FitConfig:
    k_range: tuple[int, int] = (1, 9)
    families: tuple[CovarianceFamily, ...] = ALL_FAMILIES
    tol: float = 1e-8
    max_iter: int = 500
    n_init: int = 5
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        lo, hi = self.k_range
        if lo < 1 or hi < lo:
            raise ValueError(f"empty or invalid k_range {self.k_range}")
        if not self.families:
            raise ValueError("no covariance families given")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    @property
    def ks(self) -> range:
        return range(self.k_range[0], self.k_range[1] + 1)

    def with_seed(self, seed: int) -> "FitConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return {
            "k_range": list(self.k_range),
            "families": [f.value for f in self.families],
            "tol": self.tol,
            "max_iter": self.max_iter,
            "n_init": self.n_init,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """A finite Gaussian mixture, optionally carrying fit diagnostics.

    ``loglik``, ``n_obs`` and ``bic`` are ``None`` for models built by hand
    rather than fitted.
    """

    weights: np.ndarray
    components: tuple[GaussianComponent, ...]
    family: CovarianceFamily = CovarianceFamily.FULL_VARYING
    loglik: float | None = None
    n_obs: int | None = None
    diagnostics: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, ndmin=1)
        comps = tuple(self.components)
        if w.ndim != 1 or len(comps) != w.shape[0] or not comps:
            raise ValueError("weights and components must have the same nonzero length")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("mixing weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixing weights sum to {w.sum()!r}, not 1")
        w = w / w.sum()
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise ValueError("components have differing dimensions")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_params(cls, weights, means, covs, family=CovarianceFamily.FULL_VARYING) -> "MixtureModel":
        comps = tuple(GaussianComponent.from_params(m, c) for m, c in zip(means, covs))
        return cls(weights, comps, family)

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def n_params(self) -> int:
        return n_free_params(self.k, self.dim, self.family)

    @property
    def bic(self) -> float | None:
        if self.loglik is None or self.n_obs is None:
            return None
        return 2.0 * self.loglik - self.n_params * math.log(self.n_obs)

    @cached_property
    def means(self) -> np.ndarray:
        return np.stack([c.mean for c in self.components])

    @cached_property
    def covariances(self) -> np.ndarray:
        return np.stack([c.cov.values for c in self.components])

    @cached_property
    def max_ridge(self) -> float:
        return max(c.cov.ridge for c in self.components)

    @cached_property
    def _factors(self) -> tuple[np.ndarray, np.ndarray]:
        chols = np.stack([c.cov.chol for c in self.components])
        log_dets = np.array([c.cov.log_det for c in self.components])
        return _inverse_factors(chols), log_dets

    def component_log_prob(self, data) -> np.ndarray:
        """``n x K`` matrix of ``log pi_k + log phi(y_i; mu_k, Sigma_k)``."""
        x = as_data(data, self.dim)
        linv, log_dets = self._factors
        return _log_prob(x, np.log(self.weights), self.means, linv, log_dets)

    def log_density(self, data) -> np.ndarray:
        return _logsumexp_rows(self.component_log_prob(data))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` points: component label first, then the Gaussian."""
        labels = rng.choice(self.k, size=n, p=self.weights)
        eps = rng.standard_normal((n, self.dim))
        out = np.empty((n, self.dim))
        for j, comp in enumerate(self.components):
            sel = labels == j
            out[sel] = comp.mean + eps[sel] @ comp.cov.chol.T
        return out

    def summary(self) -> dict:
        return {
            "k": self.k,
            "family": self.family.value,
            "n_obs": self.n_obs,
            "loglik": self.loglik,
            "n_params": self.n_params,
            "bic": self.bic,
        }

    def to_dict(self) -> dict:
        d = self.summary()
        d["weights"] = self.weights.tolist()
        d["means"] = self.means.tolist()
        d["covariances"] = [c.tolist() for c in self.covariances]
        return d


def as_data(data, dim: int | None = None) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"data must be an n x p matrix, got shape {x.shape}")
    if dim is not None and x.shape[1] != dim:
        raise ValueError(f"data has {x.shape[1]} columns, model expects {dim}")
    return x


def check_finite(x: np.ndarray) -> None:
    bad = ~np.all(np.isfinite(x), axis=1)
    if bad.any():
        raise NonFiniteDataError(int(np.flatnonzero(bad)[0]))


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = np.max(a, axis=1)
    m = np.where(np.isfinite(m), m, 0.0)
    return m + np.log(np.sum(np.exp(a - m[:, None]), axis=1))


# -- array core -------------------------------------------------------------
# EM runs on stacked arrays: means (K, p), covariances (K, p, p), inverse
# Cholesky factors (K, p, p). MixtureModel objects are built only at the end.


def _inverse_factors(chols: np.ndarray) -> np.ndarray:
    return np.tril(np.linalg.inv(chols))


def _log_prob(x, log_w, means, linv, log_dets) -> np.ndarray:
    p = x.shape[1]
    if p == 1:
        z = (x - means[:, 0]) * linv[:, 0, 0]
        maha = z * z
    else:
        diff = x[None, :, :] - means[:, None, :]
        z = diff @ np.swapaxes(linv, 1, 2)
        maha = np.einsum("knq,knq->nk", z, z)
    return log_w - 0.5 * (p * LOG_2PI + log_dets + maha)


def _factor(covs: np.ndarray, scale: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Batched Cholesky; a covariance whose smallest eigenvalue is below
    ``DEGENERACY_RTOL * scale`` counts as singular (a likelihood spike)."""
    if scale > 0 and np.min(np.linalg.eigvalsh(covs)) <= DEGENERACY_RTOL * scale:
        raise DegenerateComponent("component covariance is numerically singular")
    try:
        chols = np.linalg.cholesky(covs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateComponent("component covariance is singular") from exc
    diag = np.diagonal(chols, axis1=1, axis2=2)
    if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
        raise DegenerateComponent("component covariance is singular")
    return chols, 2.0 * np.sum(np.log(diag), axis=1)


def _project(scatter, nk, family):
    """Constrain per-component scatter matrices (K, p, p) to ``family``."""
    k, p, _ = scatter.shape
    n = nk.sum()
    idx = np.arange(p)
    if family is CovarianceFamily.FULL_VARYING:
        return scatter
    if family is CovarianceFamily.DIAGONAL_VARYING:
        covs = np.zeros_like(scatter)
        covs[:, idx, idx] = scatter[:, idx, idx]
        return covs
    if family is CovarianceFamily.SPHERICAL_VARYING:
        lam = np.trace(scatter, axis1=1, axis2=2) / p
        return lam[:, None, None] * np.eye(p)
    pooled = np.tensordot(nk, scatter, axes=1) / n
    if family is CovarianceFamily.SPHERICAL_EQUAL:
        pooled = np.eye(p) * (np.trace(pooled) / p)
    return np.broadcast_to(pooled, (k, p, p)).copy()


def _check_mass(nk, n):
    floor = max(10.0 * np.finfo(float).eps * n, 0.1)
    small = np.flatnonzero(nk < floor)
    if small.size:
        raise EmptyComponent(int(small[0]), float(nk[small[0]]))


def _m_step_arrays(x, resp, family):
    n, p = x.shape
    nk = resp.sum(axis=0)
    _check_mass(nk, n)
    means = (resp.T @ x) / nk[:, None]
    diff = x[None, :, :] - means[:, None, :]
    scatter = (diff * resp.T[:, :, None]).transpose(0, 2, 1) @ diff / nk[:, None, None]
    scatter = 0.5 * (scatter + np.swapaxes(scatter, 1, 2))
    return nk / n, means, _project(scatter, nk, family)


def _build_model(weights, means, covs, family) -> MixtureModel:
    shared = family in (CovarianceFamily.SPHERICAL_EQUAL, CovarianceFamily.FULL_EQUAL)
    if shared:
        cov = CovarianceMatrix.from_array(covs[0])
        cov_objs = [cov] * len(covs)
    else:
        cov_objs = [CovarianceMatrix.from_array(c) for c in covs]
    comps = tuple(GaussianComponent(m, c) for m, c in zip(means, cov_objs))
    return MixtureModel(weights, comps, family)


def e_step(data, model: MixtureModel) -> tuple[np.ndarray, float]:
    """Responsibilities and total log-likelihood, computed in log space."""
    x = as_data(data, model.dim)
    check_finite(x)
    lp = model.component_log_prob(x)
    norm = _logsumexp_rows(lp)
    resp = np.exp(lp - norm[:, None])
    return resp, float(np.sum(norm))


def m_step(data, resp, family: CovarianceFamily) -> MixtureModel:
    """Maximisation step; returns an unfitted model (no loglik).

    Raises :class:`EmptyComponent` when a component carries less mass than
    ``max(10 * eps * n, 0.1)`` points, i.e. weight below ``1/(10 n)``.
    Singular covariances go through the ridge path of
    :class:`~mixent.gaussian.CovarianceMatrix`.
    """
    x = as_data(data)
    weights, means, covs = _m_step_arrays(x, np.asarray(resp, dtype=float), family)
    return _build_model(weights, means, covs, family)


def kmeans_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding followed by a few Lloyd iterations; returns labels."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise EmptyComponent(j, 0.0)
        idx = rng.choice(n, p=d2 / total)
        centers[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    sq = np.sum(x * x, axis=1)[:, None]
    labels = np.full(n, -1)
    for _ in range(LLOYD_ITERATIONS):
        dist = sq - 2.0 * x @ centers.T + np.sum(centers * centers, axis=1)
        new = np.argmin(dist, axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
    return labels


class _Features:
    """Quadratic feature expansion ``[x_a x_b (a <= b), x, 1]`` of centred data.

    With it, every E-step is one product ``F @ C`` and every M-step's
    moments are one product ``resp.T @ F``.
    """

    def __init__(self, x: np.ndarray):
        self.shift = x.mean(axis=0)
        xc = x - self.shift
        n, p = xc.shape
        self.p = p
        self.scale = float(np.mean(np.var(xc, axis=0)))
        self.iu = np.triu_indices(p)
        quad = xc[:, self.iu[0]] * xc[:, self.iu[1]]
        self.m = quad.shape[1]
        self.F = np.hstack([quad, xc, np.ones((n, 1))])
        self.offdiag = self.iu[0] != self.iu[1]

    def log_prob(self, weights, means, covs) -> np.ndarray:
        chols, log_dets = _factor(covs, self.scale)
        linv = _inverse_factors(chols)
        prec = np.swapaxes(linv, 1, 2) @ linv
        k = weights.shape[0]
        coef = np.empty((self.F.shape[1], k))
        q = prec[:, self.iu[0], self.iu[1]]
        q[:, self.offdiag] *= 2.0
        coef[: self.m] = q.T
        pm = np.einsum("kab,kb->ka", prec, means)
        coef[self.m : self.m + self.p] = -2.0 * pm.T
        coef[-1] = np.einsum("ka,ka->k", means, pm)
        coef *= -0.5
        coef[-1] += np.log(weights) - 0.5 * (self.p * LOG_2PI + log_dets)
        return self.F @ coef

    def m_step(self, resp, family):
        n = resp.shape[0]
        stats = resp.T @ self.F
        nk = stats[:, -1]
        _check_mass(nk, n)
        means = stats[:, self.m : self.m + self.p] / nk[:, None]
        second = np.empty((nk.shape[0], self.p, self.p))
        moments = stats[:, : self.m] / nk[:, None]
        second[:, self.iu[0], self.iu[1]] = moments
        second[:, self.iu[1], self.iu[0]] = moments
        scatter = second - means[:, :, None] * means[:, None, :]
        return nk / n, means, _project(scatter, nk, family)


def _run_em(x, k, family, config, rng) -> MixtureModel:
    feats = _Features(x)
    labels = kmeans_init(x, k, rng)
    resp = np.zeros((x.shape[0], k))
    resp[np.arange(x.shape[0]), labels] = 1.0
    params = feats.m_step(resp, family)
    ll = -np.inf
    trace = []
    converged = False
    for it in range(config.max_iter + 1):
        lp = feats.log_prob(*params)
        norm = _logsumexp_rows(lp)
        new_ll = float(np.sum(norm))
        # M-steps are exact, so a drop beyond float noise means a bug
        assert new_ll >= ll - 1e-9 - 1e-10 * abs(new_ll), (ll, new_ll)
        trace.append(new_ll)
        converged = abs(new_ll - ll) <= config.tol * abs(new_ll)
        ll = new_ll
        if converged or it == config.max_iter:
            break
        params = feats.m_step(np.exp(lp - norm[:, None]), family)
    weights, means, covs = params
    model = _build_model(weights, means + feats.shift, covs, family)
    # report the likelihood from the direct (difference-based) evaluation
    loglik = float(np.sum(model.log_density(x)))
    return replace(
        model,
        loglik=loglik,
        n_obs=x.shape[0],
        diagnostics={"n_iter": len(trace) - 1, "converged": converged, "loglik_trace": trace},
    )


def fit_em(data, k: int, family: CovarianceFamily, config: FitConfig | None = None) -> MixtureModel:
    """Fit a K-component mixture by EM; best of ``config.n_init`` restarts.

    Restarts that empty a component or drive a covariance singular are
    abandoned; :class:`AllInitsFailed` is raised if none survive.
    """
    config = config or FitConfig()
    x = as_data(data)
    check_finite(x)
    n = x.shape[0]
    if n <= k:
        raise ValueError(f"need more observations than components (n={n}, K={k})")
    best = None
    failures = []
    for r in range(config.n_init):
        rng = make_rng(config.seed, k, r)
        try:
            model = _run_em(x, k, family, config, rng)
        except (EmptyComponent, DegenerateComponent, NotPositiveDefinite) as exc:
            failures.append(f"restart {r}: {exc}")
            continue
        if best is None or model.loglik > best.loglik:
            best = model
    if best is None:
        raise AllInitsFailed(f"K={k} {family.value}: every restart failed ({'; '.join(failures)})")
    best.diagnostics["failed_restarts"] = failures
    return best


def select_model(data, config: FitConfig | None = None) -> MixtureModel:
    """Fit every (K, family) cell of the grid and return the max-BIC model.

    Ties go to fewer parameters, then smaller K, then family declaration
    order. The full table is attached as ``diagnostics["bic_table"]``. For
    univariate data the families collapse to two distinct models; the
    duplicates are fitted once and reported under every family name.
    """
    config = config or FitConfig()
    x = as_data(data)
    check_finite(x)
    n, p = x.shape
    if n <= p:
        raise ValueError(f"need more observations than dimensions (n={n}, p={p})")
    table = []
    fitted: dict[tuple[int, CovarianceFamily], MixtureModel] = {}
    best = None
    best_key = None
    for k in config.ks:
        for fam in config.families:
            row = {"k": k, "family": fam.value, "n_params": n_free_params(k, p, fam)}
            target = fam.univariate_alias() if p == 1 else fam
            try:
                if (k, target) not in fitted:
                    fitted[(k, target)] = fit_em(x, k, target, config)
                model = fitted[(k, target)]
            except (AllInitsFailed, ValueError) as exc:
                row.update(bic=None, loglik=None, status=f"failed: {exc}")
                table.append(row)
                continue
            if target is not fam:
                model = replace(model, family=fam, diagnostics=dict(model.diagnostics))
            row.update(bic=model.bic, loglik=model.loglik, status="ok")
            table.append(row)
            key = (-model.bic, model.n_params, k, fam.order)
            if best_key is None or key < best_key:
                best, best_key = model, key
    if best is None:
        raise AllInitsFailed("every cell of the model grid failed")
    diagnostics = dict(best.diagnostics)
    diagnostics["bic_table"] = table
    return replace(best, diagnostics=diagnostics)
