"""Benchmark distributions with known entropy, and the replication engine.

Each distribution can be sampled, evaluated (log-density) and knows its true
entropy. :func:`run_simulation` repeats sample -> fit -> estimate over a grid
of sample sizes and summarises bias, spread and MSE per method.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from ._rng import derive_seed, make_rng
from .entropy import (
    BoundedTransform,
    entropy_gmm,
    entropy_mc,
    entropy_mle_gaussian,
    entropy_sote,
    entropy_ut,
    entropy_var,
    fit_bounded,
)
from .gaussian import GaussianComponent, gaussian_entropy, log_pdf
from .info import mutual_information
from .mixture import FitConfig, select_model

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


def digamma(x: float) -> float:
    """Digamma for x > 0: upward recurrence to x >= 10, then the asymptotic series."""
    if not x > 0:
        raise ValueError("digamma is implemented for x > 0 only")
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    # Bernoulli terms B_2k / (2k x^2k), k = 1..7
    series = inv2 * (
        1.0 / 12
        - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12)))))
    )
    return acc + math.log(x) - 0.5 / x - series


def chi2_entropy(df: float) -> float:
    h = df / 2.0
    return math.log(2.0) + math.lgamma(h) + h + (1.0 - h) * digamma(h)


@dataclass(frozen=True)
class Gaussian:
    mean: tuple[float, ...] = (0.0, 0.0)
    cov: tuple[tuple[float, ...], ...] = ((1.0, 0.8), (0.8, 2.0))
    name = "gaussian"

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def component(self) -> GaussianComponent:
        return GaussianComponent.from_params(self.mean, self.cov)

    def sample(self, n, rng):
        comp = self.component
        return comp.mean + rng.standard_normal((n, self.dim)) @ comp.cov.chol.T

    def log_pdf(self, y):
        return log_pdf(np.asarray(y, dtype=float).reshape(-1, self.dim), self.component)

    def true_entropy(self) -> float:
        return gaussian_entropy(self.component)

    def params(self) -> dict:
        return {"mean": list(self.mean), "cov": [list(r) for r in self.cov]}


@dataclass(frozen=True)
class MixedGaussian:
    """Equal mixture of N(-mu, sigma^2) and N(mu, sigma^2)."""

    mu: float = 0.0
    sigma: float = 1.0
    name = "mixed-gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    dim = 1

    def sample(self, n, rng):
        signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return (signs * self.mu + self.sigma * rng.standard_normal(n))[:, None]

    def log_pdf(self, y):
        y = np.asarray(y, dtype=float).reshape(-1)
        a = -0.5 * ((y - self.mu) / self.sigma) ** 2
        b = -0.5 * ((y + self.mu) / self.sigma) ** 2
        return np.logaddexp(a, b) - math.log(2.0) - 0.5 * LOG_2PI - math.log(self.sigma)

    def true_entropy(self) -> float:
        """Adaptive Gauss-Kronrod quadrature of ``-int f log f``."""
        lo, hi = -self.mu - 10 * self.sigma, self.mu + 10 * self.sigma

        def integrand(y):
            lf = float(self.log_pdf(y)[0])
            return -math.exp(lf) * lf

        pts = sorted({-self.mu, 0.0, self.mu})
        value, _ = integrate.quad(integrand, lo, hi, points=pts, epsabs=1e-10, epsrel=1e-10, limit=200)
        return value

    def params(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class IndepChiSquared:
    df: float = 5.0
    dim: int = 10
    name = "chi-squared"

    def __post_init__(self):
        if not self.df > 0 or self.dim < 1:
            raise ValueError("need df > 0 and dim >= 1")

    def sample(self, n, rng):
        return rng.chisquare(self.df, size=(n, self.dim))

    def log_pdf(self, y):
        y = np.asarray(y, dtype=float).reshape(-1, self.dim)
        h = self.df / 2.0
        per = (h - 1.0) * np.log(y) - y / 2.0 - h * math.log(2.0) - math.lgamma(h)
        return per.sum(axis=1)

    def true_entropy(self) -> float:
        return self.dim * chi2_entropy(self.df)

    def params(self) -> dict:
        return {"df": self.df, "dim": self.dim}


@dataclass(frozen=True)
class LogNormal:
    """``exp(Z)`` with ``Z ~ N(mean, cov)``."""

    mean: tuple[float, ...] = (0.0, 0.0)
    cov: tuple[tuple[float, ...], ...] = ((1.0, 0.25), (0.25, 0.25))
    name = "log-normal"

    @classmethod
    def bivariate(cls, mu1, mu2, var1, var2, rho) -> "LogNormal":
        c = rho * math.sqrt(var1 * var2)
        return cls((float(mu1), float(mu2)), ((float(var1), c), (c, float(var2))))

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def component(self) -> GaussianComponent:
        return GaussianComponent.from_params(self.mean, self.cov)

    def sample(self, n, rng):
        comp = self.component
        return np.exp(comp.mean + rng.standard_normal((n, self.dim)) @ comp.cov.chol.T)

    def log_pdf(self, y):
        y = np.asarray(y, dtype=float).reshape(-1, self.dim)
        t = np.log(y)
        return log_pdf(t, self.component) - t.sum(axis=1)

    def true_entropy(self) -> float:
        comp = self.component
        return 0.5 * self.dim * (1.0 + LOG_2PI) + 0.5 * comp.cov.log_det + float(np.sum(comp.mean))

    def true_mutual_information(self) -> float:
        if self.dim != 2:
            raise ValueError("mutual information is defined here for the bivariate case")
        c = np.asarray(self.cov)
        rho = c[0, 1] / math.sqrt(c[0, 0] * c[1, 1])
        return -0.5 * math.log1p(-rho * rho)

    def params(self) -> dict:
        return {"mean": list(self.mean), "cov": [list(r) for r in self.cov]}


BenchmarkDistribution = Gaussian | MixedGaussian | IndepChiSquared | LogNormal


def sample(dist, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.asarray(dist.sample(n, make_rng(seed, "sample")), dtype=float).reshape(n, dist.dim)


def true_entropy(dist) -> float:
    return dist.true_entropy()


ENTROPY_METHODS = ("gmm", "bgmm", "mle", "ut", "var", "sote", "mc")
MI_METHODS = ("gmm", "bgmm")


@dataclass
class SimulationResult:
    dist: str
    params: dict
    quantity: str
    sizes: list[int]
    replicates: int
    methods: list[str]
    true_value: float
    seed: int
    rows: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    def estimates(self, method: str, n: int) -> np.ndarray:
        return np.array([r["estimate"] for r in self.rows if r["method"] == method and r["n"] == n])

    def summary(self) -> list[dict]:
        out = []
        for n in self.sizes:
            for m in self.methods:
                est = self.estimates(m, n)
                failed = sum(1 for f in self.failures if f["method"] == m and f["n"] == n)
                if est.size == 0:
                    out.append({"method": m, "n": n, "count": 0, "failed": failed})
                    continue
                lo, hi = np.percentile(est, [2.5, 97.5])
                out.append({
                    "method": m,
                    "n": n,
                    "count": int(est.size),
                    "failed": failed,
                    "mean": float(est.mean()),
                    "bias": float(est.mean() - self.true_value),
                    "q025": float(lo),
                    "q975": float(hi),
                    "mse": float(np.mean((est - self.true_value) ** 2)),
                })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dist", "method", "n", "replicate", "estimate", "true_value"])
        for r in self.rows:
            w.writerow([self.dist, r["method"], r["n"], r["replicate"], repr(r["estimate"]), repr(self.true_value)])
        return buf.getvalue()

    def summary_dict(self) -> dict:
        return {
            "dist": self.dist,
            "params": self.params,
            "quantity": self.quantity,
            "sizes": self.sizes,
            "replicates": self.replicates,
            "methods": self.methods,
            "true_value": self.true_value,
            "seed": self.seed,
            "n_failures": len(self.failures),
            "summary": self.summary(),
        }


def _entropy_job(dist, n, rep, methods, config, seed, mc_samples):
    job_seed = derive_seed(seed, n, rep)
    y = sample(dist, n, job_seed)
    cfg = config.with_seed(derive_seed(job_seed, "fit"))
    out, fails = [], []
    model = None
    for m in methods:
        try:
            if m == "mle":
                val = entropy_mle_gaussian(y).value
            elif m == "bgmm":
                val = fit_bounded(y, BoundedTransform.all_bounded(dist.dim), cfg)[0].value
            else:
                if model is None:
                    model = select_model(y, cfg)
                if m == "gmm":
                    val = entropy_gmm(y, model).value
                elif m == "mc":
                    val = entropy_mc(model, mc_samples, derive_seed(job_seed, "mc")).value
                else:
                    val = {"ut": entropy_ut, "var": entropy_var, "sote": entropy_sote}[m](model).value
            out.append({"method": m, "n": n, "replicate": rep, "estimate": float(val)})
        except Exception as exc:
            log.warning("n=%d replicate %d method %s failed: %s", n, rep, m, exc)
            fails.append({"method": m, "n": n, "replicate": rep, "error": f"{type(exc).__name__}: {exc}"})
    return out, fails


def _mi_job(dist, n, rep, methods, config, seed, mc_samples):
    job_seed = derive_seed(seed, n, rep)
    y = sample(dist, n, job_seed)
    cfg = config.with_seed(derive_seed(job_seed, "fit"))
    out, fails = [], []
    for m in methods:
        try:
            tr = BoundedTransform.all_bounded(dist.dim) if m == "bgmm" else None
            val = mutual_information(y, cfg, tr)
            out.append({"method": m, "n": n, "replicate": rep, "estimate": float(val)})
        except Exception as exc:
            log.warning("n=%d replicate %d method %s failed: %s", n, rep, m, exc)
            fails.append({"method": m, "n": n, "replicate": rep, "error": f"{type(exc).__name__}: {exc}"})
    return out, fails


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("MIXENT_THREADS", "1")))
    except ValueError:
        return 1


def run_simulation(
    dist,
    sizes,
    replicates: int,
    methods=("gmm",),
    seed: int = 20240101,
    config: FitConfig | None = None,
    quantity: str = "entropy",
    mc_samples: int = 10_000,
    n_jobs: int | None = None,
) -> SimulationResult:
    """Replicate sample -> fit -> estimate over ``sizes`` x ``replicates``.

    ``quantity="mi"`` estimates the mutual information of a bivariate
    distribution instead of its entropy. Every job's randomness is keyed by
    ``(seed, n, replicate)``, so the result is identical for any ``n_jobs``.
    """
    if replicates < 2:
        raise ValueError("replicates must be >= 2")
    config = config or FitConfig()
    methods = list(dict.fromkeys(methods))
    allowed = MI_METHODS if quantity == "mi" else ENTROPY_METHODS
    unknown = [m for m in methods if m not in allowed]
    if unknown:
        raise ValueError(f"unknown methods {unknown} for quantity {quantity!r}")
    if quantity == "mi":
        truth, job = dist.true_mutual_information(), _mi_job
    elif quantity == "entropy":
        truth, job = true_entropy(dist), _entropy_job
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    sizes = [int(n) for n in sizes]
    jobs = [(n, r) for n in sizes for r in range(replicates)]
    n_jobs = n_jobs or default_jobs()
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(job, dist, n, r, methods, config, seed, mc_samples) for n, r in jobs]
            results = [f.result() for f in futures]
    else:
        results = [job(dist, n, r, methods, config, seed, mc_samples) for n, r in jobs]
    res = SimulationResult(
        dist=dist.name,
        params=dist.params(),
        quantity=quantity,
        sizes=sizes,
        replicates=replicates,
        methods=methods,
        true_value=truth,
        seed=seed,
    )
    for rows, fails in results:
        res.rows.extend(rows)
        res.failures.extend(fails)
    return res
