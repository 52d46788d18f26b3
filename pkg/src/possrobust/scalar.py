"""Scalar models: normal-gamma with information splitting, known-precision
Gaussian, and the uniform likelihood (hard Pareto and soft-uniform variants).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import median_abs_deviation

from .core import Consistency
from .engine import DiscountPolicy, robust_step
from .families import GaussianLikelihood, GaussianPoss, NormalGammaPoss, ParetoPoss

__all__ = [
    "NGState",
    "NGConfig",
    "KnownPrecisionConfig",
    "ParetoState",
    "SoftUniformPosterior",
    "SUConfig",
    "NG_METHODS",
    "KP_METHODS",
    "SU_METHODS",
    "ng_consistency",
    "ng_update",
    "ng_standard_update",
    "ng_filter",
    "simulate_ng",
    "ng_run",
    "known_precision_filter",
    "known_precision_run",
    "pareto_consistency",
    "pareto_update",
    "soft_likelihood",
    "su_norm_const",
    "su_discount",
    "su_filter",
    "simulate_su",
    "su_run",
    "rmse",
]

NG_METHODS = ("std-all", "std-inliers", "median", "threshold", "discount")
KP_METHODS = ("std-all", "median", "discount", "threshold")
SU_METHODS = ("discount", "std-inliers", "std-all")


def rmse(estimates, truth) -> float:
    estimates = np.asarray(estimates, dtype=float)
    return float(np.sqrt(np.mean((estimates - truth) ** 2)))


# -- normal-gamma with unknown precision ----------------------------------------

@dataclass(frozen=True)
class NGState:
    mu: float = 0.0
    k: float = 0.0
    alpha: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        if self.k < 0 or self.alpha < 0 or self.beta < 0:
            raise ValueError("k, alpha, beta must be non-negative")

    def as_possibility(self) -> NormalGammaPoss:
        return NormalGammaPoss(self.mu, self.k, self.alpha, self.beta)

    @property
    def precision_estimate(self) -> float:
        return self.alpha / self.beta


def ng_consistency(state: NGState, y: float, omega: float) -> Consistency:
    """Consistency of ``y`` when a fraction ``1 - omega`` of the precision
    information is invested in bounding the likelihood.
    """
    if not 0 <= omega < 1:
        raise ValueError("omega must lie in [0, 1)")
    if state.beta <= 0:
        raise ValueError("beta must be positive to bound the likelihood")
    a, b, k = state.alpha, state.beta, state.k
    a_inv, b_inv = (1 - omega) * a + 0.5, (1 - omega) * b
    beta_hat = b + k / (2 * (k + 1)) * (state.mu - y) ** 2
    log_c = a_inv * math.log(b_inv / a_inv) + (a + 0.5) * math.log((a + 0.5) / beta_hat)
    if a > 0:
        log_c += omega * a * math.log(b / a)
    return Consistency(min(log_c, 0.0))


def ng_update(state: NGState, y: float, gamma: float, omega: float) -> NGState:
    """Posterior of the split recursion ``L_t ** gamma * kept``.

    ``kept`` holds the location part and ``G(omega alpha, omega beta)``; the
    invested ``G((1 - omega) alpha, (1 - omega) beta)`` returns weighted by
    ``gamma`` through ``L_t``. With ``gamma = 1`` this is the standard
    conjugate update for any ``omega``.
    """
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    a, b, k, mu = state.alpha, state.beta, state.k, state.mu
    keep = omega + gamma * (1 - omega)
    if gamma == 0:
        return NGState(mu, k, keep * a, keep * b)
    return NGState(
        (k * mu + gamma * y) / (k + gamma),
        k + gamma,
        keep * a + 0.5 * gamma,
        keep * b + gamma * k / (2 * (k + gamma)) * (mu - y) ** 2,
    )


def ng_standard_update(state: NGState, y: float) -> NGState:
    return ng_update(state, y, 1.0, 0.0)


@dataclass(frozen=True)
class NGConfig:
    eps: float = 0.1
    T: int = 100
    mu: float = 2.0
    lam: float = 0.25
    beta0: float = 1.0
    omega: float = 0.99
    tau: float = 0.1
    first_inlier: bool = True

    def __post_init__(self):
        if not 0 <= self.eps <= 1:
            raise ValueError("eps must lie in [0, 1]")
        if not 0 < self.omega < 1:
            raise ValueError("omega must lie in (0, 1)")
        if not self.beta0 > 0 or not self.lam > 0 or self.T < 2:
            raise ValueError("need beta0 > 0, lam > 0, T >= 2")


def simulate_ng(config, rng: np.random.Generator):
    """Normal inliers ``N(mu, 1/lam)`` with standard-Cauchy replacement outliers.

    Cauchy draws are ratios of independent standard normals.
    """
    T = config.T
    y = config.mu + rng.standard_normal(T) / math.sqrt(config.lam)
    out = rng.random(T) < config.eps
    if config.first_inlier:
        out[0] = False
    num, den = rng.standard_normal(T), rng.standard_normal(T)
    y[out] = num[out] / den[out]
    return y, out


def ng_filter(y, method: str, omega: float = 0.99, beta0: float = 1.0, tau: float = 0.1):
    """Run the normal-gamma recursion; returns ``(state, consistencies, discounts)``."""
    state = NGState(0.0, 0.0, 0.0, beta0)
    T = len(y)
    cons = np.ones(T)
    disc = np.ones(T)
    if method in ("std-all", "std-inliers"):
        for yt in y:
            state = ng_standard_update(state, yt)
        return state, cons, disc
    policy = (DiscountPolicy("threshold", 2, tau) if method == "threshold"
              else DiscountPolicy("plain", 2))
    for t, yt in enumerate(y):
        c = ng_consistency(state, yt, omega)
        gamma = policy.discount(c)
        state = ng_update(state, yt, gamma, omega)
        cons[t], disc[t] = c.value, gamma
    return state, cons, disc


def _median_mad(y):
    med = float(np.median(y))
    mad = float(median_abs_deviation(y, scale="normal"))
    return med, (1.0 / mad ** 2 if mad > 0 else math.inf)


def ng_run(config: NGConfig, rng: np.random.Generator, methods=NG_METHODS):
    """One repeat of every method on one simulated dataset.

    Returns ``{method: (mu_hat, lam_hat)}`` and the outlier flags.
    """
    y, out = simulate_ng(config, rng)
    res = {}
    for m in methods:
        if m == "median":
            res[m] = _median_mad(y)
            continue
        data = y[~out] if m == "std-inliers" else y
        state, _, _ = ng_filter(data, m, config.omega, config.beta0, config.tau)
        res[m] = (state.mu, state.precision_estimate)
    return res, out


# -- known precision -------------------------------------------------------------

@dataclass(frozen=True)
class KnownPrecisionConfig:
    eps: float = 0.1
    T: int = 100
    mu: float = 2.0
    lam: float = 0.25
    tau: float = 0.1
    first_inlier: bool = True


def known_precision_filter(y, lam: float, method: str, tau: float = 0.1):
    """Gaussian location recursion via :func:`robust_step`; returns ``(posterior, trace)``."""
    lik = GaussianLikelihood(1.0 / lam)
    policy = {
        "std-all": DiscountPolicy("none"),
        "discount": DiscountPolicy("plain", 1),
        "threshold": DiscountPolicy("threshold", 1, tau),
    }[method]
    post = GaussianPoss(0.0, 0.0)
    trace = []
    for yt in y:
        post, gamma, c = robust_step(post, lik.info(yt), policy)
        trace.append((c.value, gamma))
    return post, trace


def known_precision_run(config: KnownPrecisionConfig, rng: np.random.Generator, methods=KP_METHODS):
    y, out = simulate_ng(config, rng)
    res = {}
    for m in methods:
        if m == "median":
            res[m] = float(np.median(y))
        else:
            post, _ = known_precision_filter(y, config.lam, m, config.tau)
            res[m] = float(post.mean[0])
    return res, out


# -- uniform likelihood ------------------------------------------------------------

@dataclass(frozen=True)
class ParetoState:
    alpha: float = 0.0
    s: float = 0.0

    def as_possibility(self) -> ParetoPoss:
        return ParetoPoss(self.alpha, self.s)


def pareto_consistency(state: ParetoState, y: float) -> Consistency:
    """Consistency of ``y`` with ``Pa(alpha, s)`` under the hard uniform likelihood."""
    if not y > 0:
        raise ValueError("observations must be positive")
    if state.alpha == 0 and state.s == 0:
        return Consistency(0.0)
    if y < state.s:
        return Consistency(math.log(y / state.s))
    return Consistency(state.alpha * (math.log(state.s) - math.log(y)))


def pareto_update(state: ParetoState, y: float, gamma: float = 1.0) -> ParetoState:
    """``Pa(alpha, s) * Pa(1, y) ** gamma``; the support bound cannot be discounted."""
    if gamma == 0:
        return state
    return ParetoState(state.alpha + gamma, max(state.s, y))


def soft_likelihood(y: float, decay: float, theta):
    """``y / max(theta, y) * exp(decay * (theta - max(theta, y)))``."""
    theta = np.asarray(theta, dtype=float)
    top = np.maximum(theta, y)
    return y / top * np.exp(decay * (theta - top))


def _log_soft_posterior(theta, ys, gs, decay):
    """``log f~(theta)`` from sorted observations ``ys`` with discounts ``gs``.

    With ``A`` the observations above ``theta``,
    ``log f~ = decay * sum_A g (theta - y) - (sum_not_A g) log theta - sum_A g log y``,
    evaluated through prefix sums.
    """
    theta = np.asarray(theta, dtype=float)
    cg = np.concatenate([[0.0], np.cumsum(gs)])
    cgy = np.concatenate([[0.0], np.cumsum(gs * ys)])
    cgl = np.concatenate([[0.0], np.cumsum(gs * np.log(ys))])
    k = np.searchsorted(ys, theta, side="right")
    g_above = cg[-1] - cg[k]
    return (decay * (theta * g_above - (cgy[-1] - cgy[k])) - cg[k] * np.log(theta)
            - (cgl[-1] - cgl[k]))


def _log_sup(ys, gs, decay):
    """``(log sup, argsup)`` of ``f~`` over ``theta > 0``.

    ``f~`` increases below the smallest observation, decreases above the
    largest, and ``log f~`` is convex between consecutive observations
    (second derivative ``G_below / theta^2``), so the sup is attained at an
    observation. Ties go to the smallest observation.
    """
    ys = np.asarray(ys, dtype=float)
    order = np.argsort(ys, kind="stable")
    ys, gs = ys[order], np.asarray(gs, dtype=float)[order]
    vals = _log_soft_posterior(ys, ys, gs, decay)
    j = int(np.argmax(vals))
    return float(vals[j]), float(ys[j])


@dataclass
class SoftUniformPosterior:
    """Unnormalized robust posterior ``f~``; each evaluation costs O(t log t) at most."""

    decay: float
    observations: list = field(default_factory=list)
    discounts: list = field(default_factory=list)
    _sup: tuple | None = field(default=None, repr=False)

    def _arrays(self):
        ys = np.asarray(self.observations, dtype=float)
        gs = np.asarray(self.discounts, dtype=float)
        order = np.argsort(ys, kind="stable")
        return ys[order], gs[order]

    def log_unnormalized(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if not self.observations:
            return np.zeros(theta.shape)
        ys, gs = self._arrays()
        return _log_soft_posterior(theta, ys, gs, self.decay)

    def _sup_pair(self):
        if self._sup is None:
            self._sup = (0.0, math.nan) if not self.observations else _log_sup(
                self.observations, self.discounts, self.decay)
        return self._sup

    def log_norm_const(self) -> float:
        return self._sup_pair()[0]

    def __call__(self, theta):
        return np.exp(self.log_unnormalized(theta) - self.log_norm_const())

    def estimate(self) -> float:
        """Most possible value of the parameter."""
        if not self.observations:
            raise ValueError("empty posterior")
        return self._sup_pair()[1]

    def add(self, y: float, gamma: float) -> None:
        if not y > 0:
            raise ValueError("observations must be positive")
        if not 0 <= gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        self.observations.append(float(y))
        self.discounts.append(float(gamma))
        self._sup = None


def su_norm_const(post: SoftUniformPosterior) -> float:
    """Normalizing constant ``C = sup f~``."""
    return math.exp(post.log_norm_const())


def su_discount(post: SoftUniformPosterior, y: float) -> float:
    """Consistency of ``y`` under the soft likelihood, used directly as the discount.

    ``gamma = y * C(with y at unit weight) / C``; the ``y`` factor is the
    constant dropped from the soft likelihood inside ``f~``.
    """
    if not y > 0:
        raise ValueError("observations must be positive")
    log_new, _ = _log_sup(post.observations + [float(y)], post.discounts + [1.0], post.decay)
    log_gamma = math.log(y) + log_new - post.log_norm_const()
    if log_gamma > 1e-9:
        raise ArithmeticError(f"discount exceeds one (log = {log_gamma})")
    return math.exp(min(log_gamma, 0.0))


def su_filter(y, decay: float = 10.0, robust: bool = True) -> SoftUniformPosterior:
    post = SoftUniformPosterior(decay)
    for yt in y:
        gamma = su_discount(post, yt) if robust else 1.0
        post.add(yt, gamma)
    return post


@dataclass(frozen=True)
class SUConfig:
    theta: float = 100.0
    T: int = 100
    eps: float = 0.25
    outlier_mean: float = 200.0
    outlier_std: float = 50.0
    decay: float = 10.0
    order: str = "ascending"

    def __post_init__(self):
        if self.order not in ("ascending", "arrival"):
            raise ValueError("order must be 'ascending' or 'arrival'")
        if not self.theta > 0 or not self.decay > 0 or self.T < 1:
            raise ValueError("need theta > 0, decay > 0, T >= 1")


def simulate_su(config: SUConfig, rng: np.random.Generator):
    """Uniform inliers on ``(0, theta)``; normal outliers redrawn until positive."""
    T = config.T
    y = rng.uniform(0.0, config.theta, T)
    out = rng.random(T) < config.eps
    for i in np.flatnonzero(out):
        v = -1.0
        while v <= 0:
            v = config.outlier_mean + config.outlier_std * rng.standard_normal()
        y[i] = v
    return y, out


def su_run(config: SUConfig, rng: np.random.Generator, methods=SU_METHODS):
    """Returns ``{method: estimate}`` and the outlier flags for one repeat.

    With ``order="ascending"`` the observations are processed sorted, as in
    the hard-Pareto recursion; an early large outlier otherwise fixes the
    support before any inlier information has accumulated.
    """
    y, out = simulate_su(config, rng)
    if config.order == "ascending":
        idx = np.argsort(y, kind="stable")
        y, out = y[idx], out[idx]
    res = {}
    for m in methods:
        data = y[~out] if m == "std-inliers" else y
        res[m] = su_filter(data, config.decay, robust=(m == "discount")).estimate()
    return res, out
