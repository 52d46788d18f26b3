"""Consistency-driven discounting of the information in the likelihood.

One robust step combines a prior with likelihood information ``L``:
the consistency ``c = sup L * prior`` is computed from the undiscounted
product, turned into an exponent ``gamma`` by a :class:`DiscountPolicy`,
and the posterior is the normalized ``L ** gamma * prior``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .core import (
    Consistency,
    InconsistentError,
    PossibilityFunction,
    combine,
    likelihood_info,
    normalize,
    power,
)

__all__ = [
    "DiscountPolicy",
    "SplitConfig",
    "discount_exponent",
    "apply_threshold",
    "robust_step",
    "split_step",
    "sequential_update",
]

VARIANTS = ("plain", "threshold", "none")


def _log_c(c) -> float:
    if isinstance(c, Consistency):
        return c.log_value
    c = float(c)
    if c < 0 or c > 1 + 1e-12:
        raise ValueError(f"consistency must lie in [0, 1], got {c}")
    return math.log(c) if c > 0 else -math.inf


def discount_exponent(c, d_eff: float = 1) -> float:
    """Geometric-average discount ``c ** (1 / d_eff)``, computed in the log domain."""
    if d_eff < 1:
        raise ValueError("effective dimension must be >= 1")
    log_c = _log_c(c)
    if log_c == -math.inf:
        return 0.0
    return min(math.exp(log_c / d_eff), 1.0)


def apply_threshold(gamma: float, tau: float) -> float:
    """Keep the discount only when it is at most ``tau``; otherwise use 1."""
    if not 0 < tau <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    return gamma if gamma <= tau else 1.0


@dataclass(frozen=True)
class DiscountPolicy:
    variant: str = "plain"
    d_eff: float = 1
    tau: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown discount variant {self.variant!r}")
        if self.d_eff < 1:
            raise ValueError("effective dimension must be >= 1")
        if self.variant == "threshold":
            if self.tau is None or not 0 < self.tau <= 1:
                raise ValueError("threshold policy needs tau in (0, 1]")

    def discount(self, c) -> float:
        if self.variant == "none":
            return 1.0
        gamma = discount_exponent(c, self.d_eff)
        if self.variant == "threshold":
            return apply_threshold(gamma, self.tau)
        return gamma


@dataclass(frozen=True)
class SplitConfig:
    omega: float = 0.99

    def __post_init__(self):
        if not 0 < self.omega < 1:
            raise ValueError("omega must lie in (0, 1)")


def robust_step(prior: PossibilityFunction, lik: PossibilityFunction, policy: DiscountPolicy,
                bounds=None):
    """Discounted update of ``prior`` with likelihood information ``lik``.

    Returns ``(posterior, gamma, consistency)``. Zero consistency is a
    defined outcome: the posterior is the prior and ``gamma = 0``.
    """
    try:
        standard, c = combine(prior, lik, bounds)
    except InconsistentError:
        return prior, 0.0, Consistency(-math.inf)
    gamma = policy.discount(c)
    if gamma == 1.0:
        return standard, gamma, c
    if gamma == 0.0:
        return prior, gamma, c
    posterior, _ = combine(prior, power(lik, gamma), bounds)
    return posterior, gamma, c


def split_step(prior: PossibilityFunction, loglik: Callable, y, split: SplitConfig,
               policy: DiscountPolicy, bounds=None, splitter: Callable | None = None):
    """Robust step for a likelihood that is unbounded on its own.

    The prior is split into a kept part and an invested part (by default
    ``prior ** omega`` and ``prior ** (1 - omega)``, or ``splitter(prior,
    omega)``). The invested part bounds the likelihood, whose normalized
    product with it is the likelihood information ``L_t``; the kept part
    then plays the role of the prior in :func:`robust_step`.

    Returns ``(posterior, gamma, consistency)``.
    """
    omega = split.omega
    if splitter is None:
        kept, invested = power(prior, omega), power(prior, 1 - omega)
    else:
        kept, invested = splitter(prior, omega)
    box = bounds if bounds is not None else prior.bounds
    if box is None:
        raise ValueError("split_step needs bounds for the grid-backed likelihood information")

    def log_raw(theta):
        return loglik(theta, y) + invested.log_eval(theta)

    lik = normalize(log_raw, box, log=True)
    return robust_step(kept, lik, policy, box)


def _batches(observations, batch_size: int) -> Iterable:
    obs = list(observations) if not isinstance(observations, np.ndarray) else observations
    if batch_size == 1:
        yield from obs
        return
    for start in range(0, len(obs), batch_size):
        yield np.asarray(obs[start:start + batch_size])


def sequential_update(prior: PossibilityFunction, observations, model, policy: DiscountPolicy,
                      batch_size: int = 1, bounds=None):
    """Fold :func:`robust_step` over observations (or batches) in the given order.

    ``model`` is a likelihood object (``info(y)`` closed form) or a
    log-likelihood callable used with ``bounds``. Returns the final
    posterior and the per-step list of ``(consistency, gamma)``.
    """
    post = prior
    trace = []
    for y in _batches(observations, batch_size):
        lik = likelihood_info(model, y, bounds)
        post, gamma, c = robust_step(post, lik, policy, bounds)
        trace.append((c, gamma))
    return post, trace
