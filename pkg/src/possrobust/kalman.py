"""Possibilistic Kalman filter with consistency-based discounting.

The recursion is the textbook one. Robustness comes from tempering the
Gaussian likelihood information by ``gamma``, which for a Gaussian is the
same as inflating the observation variance to ``R / gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Consistency
from .engine import DiscountPolicy

__all__ = [
    "StateSpaceModel",
    "GaussInfo",
    "KalmanConfig",
    "KalmanSimulation",
    "KalmanTrace",
    "METHODS",
    "make_cv_model",
    "kf_predict",
    "kf_consistency",
    "kf_update",
    "simulate_kalman",
    "kalman_filter",
    "run_kalman",
]

METHODS = ("std-inliers", "std-all", "discount", "threshold")


@dataclass(frozen=True)
class StateSpaceModel:
    F: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R: float
    delta: float = 1.0
    sigma_a: float = 0.0


@dataclass(frozen=True)
class GaussInfo:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class KalmanConfig:
    T: int = 250
    eps: float = 0.1
    outlier_std: float = 10.0
    theta1: tuple = (0.0, 0.1)
    d_eff: float = 2
    tau: float | None = None

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not 0 <= self.eps <= 1:
            raise ValueError("eps must lie in [0, 1]")


@dataclass
class KalmanSimulation:
    states: np.ndarray      # (T, 2)
    obs: np.ndarray         # (T,)
    outliers: np.ndarray    # (T,) bool


@dataclass
class KalmanTrace:
    method: str
    estimates: np.ndarray
    consistency: np.ndarray
    discount: np.ndarray
    abs_error: np.ndarray

    @property
    def mean_abs_error(self) -> float:
        return float(self.abs_error.mean())


def make_cv_model(delta: float = 1.0, sigma_a: float = 0.05, R: float = 1.0) -> StateSpaceModel:
    """Nearly-constant-velocity model with scalar position observations."""
    if not delta > 0 or sigma_a < 0 or not R > 0:
        raise ValueError("need delta > 0, sigma_a >= 0, R > 0")
    F = np.array([[1.0, delta], [0.0, 1.0]])
    Q = sigma_a ** 2 * np.array([[delta ** 4 / 4, delta ** 3 / 2], [delta ** 3 / 2, delta ** 2]])
    H = np.array([[1.0, 0.0]])
    return StateSpaceModel(F, Q, H, float(R), float(delta), float(sigma_a))


def kf_predict(post: GaussInfo, model: StateSpaceModel) -> GaussInfo:
    F = model.F
    return GaussInfo(F @ post.mean, F @ post.cov @ F.T + model.Q)


def _innovation(pred: GaussInfo, y: float, model: StateSpaceModel, R: float):
    H = model.H
    resid = y - (H @ pred.mean)[0]
    s = (H @ pred.cov @ H.T)[0, 0] + R
    return resid, s


def kf_consistency(pred: GaussInfo, y: float, model: StateSpaceModel) -> Consistency:
    """``exp(-r^2 / (2 S))`` with innovation ``r`` and innovation variance ``S = H P H' + R``."""
    resid, s = _innovation(pred, y, model, model.R)
    return Consistency(-0.5 * resid ** 2 / s)


def kf_update(pred: GaussInfo, y: float, model: StateSpaceModel, gamma: float = 1.0) -> GaussInfo:
    """Kalman update with the likelihood information raised to ``gamma``."""
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    if gamma == 0:
        return pred
    H = model.H
    P = pred.cov
    resid, s = _innovation(pred, y, model, model.R / gamma)
    K = P @ H.T / s
    mean = pred.mean + K[:, 0] * resid
    cov = (np.eye(P.shape[0]) - K @ H) @ P
    return GaussInfo(mean, cov)


def simulate_kalman(config: KalmanConfig, model: StateSpaceModel,
                    rng: np.random.Generator) -> KalmanSimulation:
    """Nearly-constant-velocity trajectory with replacement outliers.

    The first observation is always an inlier: it initializes the filter.
    """
    T = config.T
    states = np.empty((T, 2))
    states[0] = config.theta1
    # Q is rank one: u = sigma_a * [d^2/2, d] * w
    g = model.sigma_a * np.array([model.delta ** 2 / 2, model.delta])
    w = rng.standard_normal(T)
    for t in range(1, T):
        states[t] = model.F @ states[t - 1] + g * w[t]
    outliers = rng.random(T) < config.eps
    outliers[0] = False
    noise = rng.standard_normal(T)
    std = np.where(outliers, config.outlier_std, math.sqrt(model.R))
    obs = states[:, 0] + std * noise
    return KalmanSimulation(states, obs, outliers)


def _policy(method, d_eff, tau):
    if method == "discount":
        return DiscountPolicy("plain", d_eff)
    if method == "threshold":
        return DiscountPolicy("threshold", d_eff, tau)
    return DiscountPolicy("none")


def kalman_filter(y, model: StateSpaceModel, policy: DiscountPolicy, skip=None):
    """Filter a scalar observation series; returns ``(means, covs, consistency, discount)``.

    The filter starts at ``(y_1, 0)`` with covariance ``diag(R, 1)``; the
    first step is never discounted. Steps flagged in ``skip`` get ``gamma = 0``.
    """
    y = np.asarray(y, dtype=float)
    T = y.size
    if T == 0:
        raise ValueError("empty observation series")
    d = model.F.shape[0]
    means = np.empty((T, d))
    covs = np.empty((T, d, d))
    cons = np.ones(T)
    disc = np.ones(T)
    x0 = np.zeros(d)
    x0[0] = y[0]
    post = GaussInfo(x0, np.diag([model.R] + [1.0] * (d - 1)))
    means[0], covs[0] = post.mean, post.cov
    for t in range(1, T):
        pred = kf_predict(post, model)
        c = kf_consistency(pred, y[t], model)
        gamma = 0.0 if skip is not None and skip[t] else policy.discount(c)
        post = kf_update(pred, y[t], model, gamma)
        means[t], covs[t] = post.mean, post.cov
        cons[t] = c.value
        disc[t] = gamma
    return means, covs, cons, disc


def run_kalman(sim: KalmanSimulation, model: StateSpaceModel, method: str = "discount",
               d_eff: float = 2, tau: float | None = None) -> KalmanTrace:
    """Filter the simulated observations and score the position estimates."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    policy = _policy(method, d_eff, tau)
    skip = sim.outliers if method == "std-inliers" else None
    est, _, cons, disc = kalman_filter(sim.obs, model, policy, skip)
    abs_err = np.abs(est[:, 0] - sim.states[:, 0])
    return KalmanTrace(method, est, cons, disc, abs_err)
