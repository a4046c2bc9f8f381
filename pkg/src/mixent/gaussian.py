"""Dense multivariate Gaussian primitives.

Everything above this layer (EM, the entropy estimators, the image
pipeline) talks to Gaussians through :class:`GaussianComponent`, whose
covariance carries a cached lower Cholesky factor. Densities are evaluated
by triangular solves against that factor; inverses are never formed for
log-density evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

LOG_2PI = float(np.log(2.0 * np.pi))

# Ridge schedule applied when Cholesky fails: eps * mean(diag), eps x10 per retry.
RIDGE_EPS = 1e-8
RIDGE_RETRIES = 3
SYMMETRY_RTOL = 1e-12


class DimensionError(ValueError):
    """Raised when vector/matrix dimensions disagree."""


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a covariance cannot be factorised even after ridging."""


class EigenError(np.linalg.LinAlgError):
    """Raised when the symmetric eigen-solver fails to converge."""


def _cholesky_with_ridge(values: np.ndarray) -> tuple[np.ndarray, float]:
    try:
        return linalg.cholesky(values, lower=True, check_finite=False), 0.0
    except linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(values)))
    if not np.isfinite(scale) or scale <= 0.0:
        raise NotPositiveDefinite("covariance has non-positive mean diagonal")
    eps = RIDGE_EPS
    eye = np.eye(values.shape[0])
    for _ in range(RIDGE_RETRIES):
        ridge = eps * scale
        try:
            chol = linalg.cholesky(values + ridge * eye, lower=True, check_finite=False)
            return chol, ridge
        except linalg.LinAlgError:
            eps *= 10.0
    raise NotPositiveDefinite(
        f"covariance not positive definite after {RIDGE_RETRIES} ridge retries"
    )


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Symmetric positive-definite matrix with cached factorisation.

    Build it with :meth:`from_array`; ``values`` already includes any ridge
    that had to be added, and ``ridge`` records how much.
    """

    values: np.ndarray
    chol: np.ndarray
    log_det: float
    ridge: float = 0.0

    @classmethod
    def from_array(cls, values) -> "CovarianceMatrix":
        m = np.array(values, dtype=float, ndmin=2)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"covariance must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NotPositiveDefinite("covariance has non-finite entries")
        scale = max(float(np.max(np.abs(m))), np.finfo(float).tiny)
        if np.max(np.abs(m - m.T)) > SYMMETRY_RTOL * scale:
            raise ValueError("covariance is not symmetric")
        chol, ridge = _cholesky_with_ridge(m)
        if ridge:
            m = m + ridge * np.eye(m.shape[0])
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        m.setflags(write=False)
        chol.setflags(write=False)
        return cls(values=m, chol=chol, log_det=log_det, ridge=ridge)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Return ``Sigma^{-1} b`` using the cached factor."""
        return linalg.cho_solve((self.chol, True), b, check_finite=False)

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.dim))


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    mean: np.ndarray
    cov: CovarianceMatrix = field(repr=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float, ndmin=1)
        if mean.ndim != 1:
            raise DimensionError("mean must be a vector")
        if mean.shape[0] != self.cov.dim:
            raise DimensionError(
                f"mean has length {mean.shape[0]} but covariance is {self.cov.dim}x{self.cov.dim}"
            )
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)

    @classmethod
    def from_params(cls, mean, cov) -> "GaussianComponent":
        return cls(mean, CovarianceMatrix.from_array(cov))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def mahalanobis_sq(x, comp: GaussianComponent) -> np.ndarray:
    """Squared Mahalanobis distance of the rows of ``x`` (n x p) from ``comp``."""
    diff = np.asarray(x, dtype=float) - comp.mean
    z = linalg.solve_triangular(comp.cov.chol, diff.T, lower=True, check_finite=False)
    return np.einsum("ij,ij->j", z, z)


def log_pdf(x, comp: GaussianComponent):
    """Log-density of ``comp`` at ``x``.

    ``x`` is either a single point (vector of length p, returns a float) or
    an ``n x p`` array (returns a length-n array).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    pts = x.reshape(1, -1) if single else x
    if pts.ndim != 2 or pts.shape[1] != comp.dim:
        raise DimensionError(f"point dimension {pts.shape[-1]} != component dimension {comp.dim}")
    out = -0.5 * (comp.dim * LOG_2PI + comp.cov.log_det + mahalanobis_sq(pts, comp))
    return float(out[0]) if single else out


def gaussian_entropy(comp: GaussianComponent) -> float:
    """Differential entropy in nats, ``0.5 * log((2 pi e)^p |Sigma|)``."""
    return 0.5 * (comp.dim * (1.0 + LOG_2PI) + comp.cov.log_det)


def gaussian_kl(a: GaussianComponent, b: GaussianComponent) -> float:
    """KL(a || b) for two Gaussians of equal dimension."""
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    # tr(Sb^-1 Sa) = ||Lb^-1 La||_F^2
    m = linalg.solve_triangular(b.cov.chol, a.cov.chol, lower=True, check_finite=False)
    trace = float(np.sum(m * m))
    dmu = linalg.solve_triangular(b.cov.chol, b.mean - a.mean, lower=True, check_finite=False)
    maha = float(dmu @ dmu)
    kl = 0.5 * (trace + maha - a.dim + b.cov.log_det - a.cov.log_det)
    # float cancellation can leave a tiny negative for identical inputs
    return max(kl, 0.0)


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def eigen_sym(m) -> EigenDecomposition:
    """Eigen-decomposition of a symmetric matrix, eigenvalues descending.

    Eigenvector signs are fixed so the largest-magnitude entry of each
    column is positive, which makes the result deterministic.
    """
    values = m.values if isinstance(m, CovarianceMatrix) else np.asarray(m, dtype=float)
    try:
        w, v = np.linalg.eigh(values)
    except np.linalg.LinAlgError as exc:
        raise EigenError(str(exc)) from exc
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    w = np.clip(w, 0.0, None)
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return EigenDecomposition(eigenvalues=w, eigenvectors=v * signs)
