"""Extended feature estimation with a discounted normal-inverse-Wishart recursion.

Batches of ``n`` points from ``N(0, Sigma)`` are assimilated one batch at a
time; each batch's consistency with the current NIW state decides how
strongly it is tempered. Whole batches are contaminated (covariance
inflated) with probability ``eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import invwishart

from .core import Consistency, PossibilityError
from .engine import DiscountPolicy
from .families import DomainError, NIWPoss, spd_logdet

__all__ = [
    "NIWState",
    "BatchStats",
    "FeatureConfig",
    "FeatureDataset",
    "FeatureTrace",
    "InsufficientRankError",
    "METHODS",
    "effective_dimension",
    "simulate_feature",
    "batch_stats",
    "niw_consistency",
    "niw_update",
    "run_feature",
    "permutation_study",
    "dimension_study",
]

METHODS = ("std-inliers", "std-all", "discount", "threshold")


class InsufficientRankError(PossibilityError):
    """The batch scatter matrix is singular (batch size too small for the dimension)."""


@dataclass(frozen=True)
class NIWState:
    mu: np.ndarray
    lam: float
    psi: np.ndarray
    nu: float

    @classmethod
    def uninformative(cls, d: int) -> "NIWState":
        return cls(np.zeros(d), 0.0, np.zeros((d, d)), 0.0)

    def as_possibility(self) -> NIWPoss:
        return NIWPoss(self.mu, self.lam, self.psi, self.nu)

    def covariance_estimate(self) -> np.ndarray:
        """Posterior expected value of Sigma, ``Psi / nu``."""
        if self.nu == 0:
            raise PossibilityError("uninformative state has no covariance estimate")
        return self.psi / self.nu


@dataclass(frozen=True)
class BatchStats:
    mean: np.ndarray
    scatter: np.ndarray
    n: int


@dataclass(frozen=True)
class FeatureConfig:
    d: int = 10
    n: int = 25
    T: int = 500
    eps: float = 0.02
    inflation: float = 3.0
    tau: float = 0.25
    first_inlier: bool = True

    def __post_init__(self):
        if self.d < 1 or self.n < 2 or self.T < 1:
            raise ValueError("need d >= 1, n >= 2, T >= 1")
        if not 0 <= self.eps <= 1:
            raise ValueError("eps must lie in [0, 1]")
        if not self.inflation > 1:
            raise ValueError("inflation must exceed 1")


@dataclass
class FeatureDataset:
    batches: np.ndarray          # (T, n, d)
    outliers: np.ndarray         # (T,) bool
    sigma: np.ndarray            # (d, d) true covariance
    stats: list = field(default_factory=list)

    def __post_init__(self):
        if not self.stats:
            self.stats = [batch_stats(b) for b in self.batches]


@dataclass
class FeatureTrace:
    method: str
    consistency: np.ndarray
    discount: np.ndarray
    error: np.ndarray
    state: NIWState

    @property
    def final_error(self) -> float:
        return float(self.error[-1])


def effective_dimension(d: int) -> int:
    """Number of free parameters of (mean, SPD covariance)."""
    return d + d * (d + 1) // 2


def simulate_feature(config: FeatureConfig, rng: np.random.Generator) -> FeatureDataset:
    d, n, T = config.d, config.n, config.T
    sigma = np.atleast_2d(invwishart(df=d * math.sqrt(d), scale=np.eye(d)).rvs(random_state=rng))
    outliers = rng.random(T) < config.eps
    if config.first_inlier:
        outliers[0] = False
    chol = np.linalg.cholesky(sigma)
    z = rng.standard_normal((T, n, d))
    batches = z @ chol.T
    batches[outliers] *= math.sqrt(config.inflation)
    return FeatureDataset(batches, outliers, sigma)


def batch_stats(batch) -> BatchStats:
    """Sample mean and outer-product scatter ``sum (y - ybar)(y - ybar)'``."""
    batch = np.asarray(batch, dtype=float)
    if batch.ndim == 1:
        batch = batch[:, None]
    n = batch.shape[0]
    if n < 2:
        raise InsufficientRankError("a batch needs at least two observations")
    mean = batch.mean(axis=0)
    centred = batch - mean
    return BatchStats(mean, centred.T @ centred, n)


def niw_update(state: NIWState, stats: BatchStats, gamma: float) -> NIWState:
    """Discounted conjugate NIW update; ``gamma = 1`` is the standard update."""
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    if gamma == 0:
        return state
    gn = gamma * stats.n
    lam = state.lam + gn
    mu = (state.lam * state.mu + gn * stats.mean) / lam
    diff = state.mu - stats.mean
    psi = state.psi + gamma * stats.scatter + (state.lam * gn / lam) * np.outer(diff, diff)
    return NIWState(mu, lam, 0.5 * (psi + psi.T), state.nu + gn)


def _logdet_scaled(psi, nu) -> float:
    d = psi.shape[0]
    return spd_logdet(psi) - d * math.log(nu)


def niw_consistency(state: NIWState, stats: BatchStats, updated: NIWState | None = None) -> Consistency:
    """Consistency of a batch with the NIW state, from the undiscounted update.

    ``2 log c = n log|S/n| + nu log|Psi/nu| - nu' log|Psi'/nu'|``; the
    middle term is absent when ``nu = 0``.
    """
    d = stats.scatter.shape[0]
    n = stats.n
    try:
        ld_s = spd_logdet(stats.scatter) - d * math.log(n)
    except DomainError:
        raise InsufficientRankError(f"scatter matrix is singular (n={n}, d={d})") from None
    if updated is None:
        updated = niw_update(state, stats, 1.0)
    two_log_c = n * ld_s - updated.nu * _logdet_scaled(updated.psi, updated.nu)
    if state.nu > 0:
        two_log_c += state.nu * _logdet_scaled(state.psi, state.nu)
    return Consistency(min(0.5 * two_log_c, 0.0))


def _policy(method: str, d: int, tau: float) -> DiscountPolicy:
    if method == "discount":
        return DiscountPolicy("plain", effective_dimension(d))
    if method == "threshold":
        return DiscountPolicy("threshold", effective_dimension(d), tau)
    return DiscountPolicy("none")


def run_feature(dataset: FeatureDataset, method: str, tau: float = 0.25, order=None) -> FeatureTrace:
    """Run one method over the dataset's batches (optionally in a given order)."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    d = dataset.sigma.shape[0]
    policy = _policy(method, d, tau)
    idx = np.arange(len(dataset.stats)) if order is None else np.asarray(order)
    T = idx.size
    cons = np.empty(T)
    disc = np.empty(T)
    err = np.empty(T)
    state = NIWState.uninformative(d)
    for t, i in enumerate(idx):
        stats = dataset.stats[i]
        full = niw_update(state, stats, 1.0)
        c = niw_consistency(state, stats, full)
        if method == "std-inliers" and dataset.outliers[i]:
            gamma = 0.0
        else:
            gamma = policy.discount(c)
        state = full if gamma == 1.0 else niw_update(state, stats, gamma)
        cons[t] = c.value
        disc[t] = gamma
        err[t] = (np.linalg.norm(dataset.sigma - state.covariance_estimate(), "fro")
                  if state.nu > 0 else math.nan)
    return FeatureTrace(method, cons, disc, err, state)


def permutation_study(dataset: FeatureDataset, n_perms: int, method: str,
                      rng: np.random.Generator, tau: float = 0.25):
    """Final-error spread over random batch orders whose first batch is an inlier.

    Returns ``(std, final_errors)``.
    """
    inliers = np.flatnonzero(~dataset.outliers)
    if inliers.size == 0:
        raise ValueError("dataset has no inlier batch")
    T = dataset.outliers.size
    finals = np.empty(n_perms)
    for k in range(n_perms):
        first = inliers[rng.integers(inliers.size)]
        rest = np.delete(np.arange(T), first)
        order = np.concatenate([[first], rng.permutation(rest)])
        finals[k] = run_feature(dataset, method, tau, order).final_error
    return float(np.std(finals, ddof=1)) if n_perms > 1 else 0.0, finals


def dimension_study(rng: np.random.Generator, dims=(4, 10, 20), T: int = 500, eps: float = 0.02,
                    inflation: float = 3.0, method: str = "discount"):
    """Per-iteration consistencies for several dimensions with ``n = 5 d / 2``.

    Returns ``{d: (consistency, outlier_flags)}``.
    """
    out = {}
    for d in dims:
        if (5 * d) % 2:
            raise ValueError(f"n = 5d/2 is not an integer for d = {d}")
        cfg = FeatureConfig(d=d, n=5 * d // 2, T=T, eps=eps, inflation=inflation)
        data = simulate_feature(cfg, rng)
        trace = run_feature(data, method)
        out[d] = (trace.consistency, data.outliers.copy())
    return out

