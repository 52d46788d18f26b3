"""Possibilistic online change-point detection.

The run length ``r`` (observations since the last change, excluding the
current one) is tracked by a possibility function over a list of nodes.
Each node carries a Gaussian possibility ``N(mu_r, lam_r)`` on the segment
mean. Messages are max-product: the change hypothesis takes the best
predecessor, and weights are sup-normalized, so truncating the tail never
alters the surviving weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Consistency
from .engine import DiscountPolicy

__all__ = [
    "CPConfig",
    "CPState",
    "CPTrace",
    "METHODS",
    "cp_initial",
    "cp_predict",
    "cp_consistency",
    "cp_update",
    "cp_truncate",
    "cp_map_run_length",
    "extract_changepoints",
    "run_changepoint",
    "synthetic_well_log",
]

METHODS = ("std-all", "discount", "threshold")


@dataclass(frozen=True)
class CPConfig:
    sigma: float = 2500.0
    hazard: float | Callable = 2.5e-3
    precision_decay: float = 0.9
    trunc_threshold: float = math.log(1e-12)
    tau: float | None = None
    d_eff: float = 2
    min_run: int = 5

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not callable(self.hazard) and not 0 < self.hazard <= 1:
            raise ValueError("constant hazard must lie in (0, 1]")
        if not 0 < self.precision_decay <= 1:
            raise ValueError("precision decay must lie in (0, 1]")

    def log_hazard(self, r: np.ndarray) -> np.ndarray:
        if callable(self.hazard):
            h = np.asarray(self.hazard(r), dtype=float)
        else:
            h = np.full(np.shape(r), float(self.hazard))
        with np.errstate(divide="ignore"):
            return np.log(h)


@dataclass(frozen=True)
class CPState:
    """Run-length nodes, sorted by ``r``; ``log_w`` has maximum 0."""

    r: np.ndarray
    log_w: np.ndarray
    mu: np.ndarray
    lam: np.ndarray

    def __len__(self):
        return self.r.size

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_w)


@dataclass
class CPTrace:
    method: str
    map_run_length: np.ndarray
    consistency: np.ndarray
    discount: np.ndarray
    segment_mean: np.ndarray
    n_nodes: np.ndarray
    changepoints: list = field(default_factory=list)
    snapshots: list | None = None


def cp_initial() -> CPState:
    """Predicted state for the first observation: a change has just happened."""
    return CPState(np.array([0]), np.array([0.0]), np.array([0.0]), np.array([0.0]))


def cp_predict(state: CPState, config: CPConfig) -> CPState:
    """Grow every run by one and add the change hypothesis ``r = 0``."""
    log_h = config.log_hazard(state.r + 1)
    log_w0 = float(np.max(log_h + state.log_w))
    return CPState(
        np.concatenate([[0], state.r + 1]),
        np.concatenate([[log_w0], state.log_w]),
        np.concatenate([[0.0], state.mu]),
        np.concatenate([[0.0], config.precision_decay * state.lam]),
    )


def _log_fit(state: CPState, y: float, obs_var: float) -> np.ndarray:
    # log sup_theta N(theta; y, 1/obs_var) N(theta; mu_r, lam_r), zero for lam_r = 0
    lam = state.lam
    with np.errstate(divide="ignore"):
        inv_lam = np.where(lam > 0, 1.0 / np.where(lam > 0, lam, 1.0), np.inf)
    return -0.5 * (y - state.mu) ** 2 / (obs_var + inv_lam)


def cp_consistency(pred: CPState, y: float, config: CPConfig) -> Consistency:
    """Sup over (run length, segment mean) of the normalized likelihood times the prediction."""
    log_c = float(np.max(pred.log_w + _log_fit(pred, y, config.sigma ** 2)))
    return Consistency(min(log_c, 0.0))


def cp_update(pred: CPState, y: float, gamma: float, config: CPConfig) -> CPState:
    """Max-product update with the likelihood information raised to ``gamma``."""
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    if gamma == 0:
        return CPState(pred.r, pred.log_w - pred.log_w.max(), pred.mu, pred.lam)
    obs_var = config.sigma ** 2 / gamma
    log_w = pred.log_w + _log_fit(pred, y, obs_var)
    prec = 1.0 / obs_var
    lam = pred.lam + prec
    mu = (pred.lam * pred.mu + prec * y) / lam
    return CPState(pred.r, log_w - log_w.max(), mu, lam)


def cp_truncate(state: CPState, config: CPConfig) -> CPState:
    keep = state.log_w >= config.trunc_threshold
    keep[int(np.argmax(state.log_w))] = True
    if keep.all():
        return state
    return CPState(state.r[keep], state.log_w[keep], state.mu[keep], state.lam[keep])


def cp_map_run_length(state: CPState) -> int:
    """Most possible run length; ties go to the smallest ``r``."""
    return int(state.r[int(np.argmax(state.log_w))])


def _argmax_node(state: CPState) -> int:
    return int(np.argmax(state.log_w))


def extract_changepoints(map_run_length: np.ndarray, min_run: int = 5) -> list[int]:
    """Segment starts (0-based indices) that the MAP run length supports for ``min_run`` steps.

    The MAP run length at ``t`` points to a segment start ``t - r*_t``. A
    start is reported once it has been the pointed-to start for
    ``min_run`` consecutive steps; the initial segment is not reported.
    """
    starts = np.arange(map_run_length.size) - np.asarray(map_run_length)
    found = []
    current, streak = None, 0
    for s in starts:
        if s == current:
            streak += 1
        else:
            current, streak = s, 1
        if streak == min_run and s > 0 and (not found or found[-1] != s):
            found.append(int(s))
    return found


def _policy(method, config):
    if method == "discount":
        return DiscountPolicy("plain", config.d_eff)
    if method == "threshold":
        return DiscountPolicy("threshold", config.d_eff, config.tau)
    return DiscountPolicy("none")


def run_changepoint(series, config: CPConfig = CPConfig(), method: str = "discount",
                    keep_snapshots: bool = False, truncate: bool = True) -> CPTrace:
    """Full filtering pass over ``series``."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or not np.all(np.isfinite(y)):
        raise ValueError("series must be a finite one-dimensional array")
    policy = _policy(method, config)
    T = y.size
    map_r = np.empty(T, dtype=int)
    cons = np.empty(T)
    disc = np.empty(T)
    seg_mean = np.empty(T)
    n_nodes = np.empty(T, dtype=int)
    snapshots = [] if keep_snapshots else None
    pred = cp_initial()
    for t in range(T):
        c = cp_consistency(pred, y[t], config)
        gamma = policy.discount(c)
        post = cp_update(pred, y[t], gamma, config)
        if truncate:
            post = cp_truncate(post, config)
        j = _argmax_node(post)
        map_r[t] = post.r[j]
        seg_mean[t] = post.mu[j]
        cons[t] = c.value
        disc[t] = gamma
        n_nodes[t] = len(post)
        if keep_snapshots:
            snapshots.append((post.r.copy(), post.weights))
        pred = cp_predict(post, config)
    cps = extract_changepoints(map_r, config.min_run)
    return CPTrace(method, map_r, cons, disc, seg_mean, n_nodes, cps, snapshots)


def synthetic_well_log(rng: np.random.Generator, T: int = 4050, sigma: float = 2500.0,
                       n_spikes: int = 20):
    """Stand-in for the well-log series: piecewise-constant levels, Gaussian noise, isolated spikes.

    Returns ``(series, change_starts, spike_indices)``; change starts are the
    0-based index of the first observation of each new level.
    """
    changes = np.array([1000, 1800, 2600, 3400]) * T // 4050
    levels = np.array([110000.0, 130000.0, 112000.0, 135000.0, 118000.0])
    seg = np.searchsorted(changes, np.arange(T), side="right")
    y = levels[seg] + sigma * rng.standard_normal(T)
    forbidden = np.zeros(T, dtype=bool)
    forbidden[:30] = True
    for c in changes:
        forbidden[max(c - 30, 0):c + 30] = True
    candidates = np.flatnonzero(~forbidden)
    spikes = []
    while len(spikes) < n_spikes:
        s = int(rng.choice(candidates))
        if all(abs(s - o) > 20 for o in spikes):
            spikes.append(s)
    spikes = np.sort(np.array(spikes))
    mags = rng.uniform(6.0, 12.0, n_spikes) * sigma * rng.choice([-1.0, 1.0], n_spikes)
    y[spikes] += mags
    return y, [int(c) for c in changes], [int(s) for s in spikes]
