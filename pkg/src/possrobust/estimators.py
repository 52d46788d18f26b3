"""scikit-learn style wrappers over the functional recursions."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .changepoint import CPConfig, run_changepoint
from .engine import DiscountPolicy
from .feature import BatchStats, NIWState, batch_stats, effective_dimension, niw_consistency, niw_update
from .kalman import kalman_filter, make_cv_model
from .scalar import NGState, ng_filter, su_filter

__all__ = [
    "RobustNIWEstimator",
    "PossibilisticKalmanFilter",
    "PossibilisticChangePointDetector",
    "RobustNormalGamma",
    "SoftUniformEstimator",
]

_ROBUST = ("std-all", "discount", "threshold")


def _check_method(method, allowed):
    if method not in allowed:
        raise ValueError(f"unknown method {method!r}; expected one of {allowed}")


def _policy(method, d_eff, tau):
    if method == "discount":
        return DiscountPolicy("plain", d_eff)
    if method == "threshold":
        if tau is None:
            raise ValueError("method='threshold' needs tau")
        return DiscountPolicy("threshold", d_eff, tau)
    return DiscountPolicy("none")


def _series(y):
    y = check_array(np.asarray(y, dtype=float).reshape(-1, 1))[:, 0]
    return y


class RobustNIWEstimator(BaseEstimator):
    """Mean and covariance from consecutive batches with consistency discounting.

    Rows of ``X`` are observations; every ``batch_size`` consecutive rows
    form one batch. ``partial_fit`` assimilates ``X`` as a single batch.
    """

    def __init__(self, batch_size=25, method="discount", tau=0.25):
        self.batch_size = batch_size
        self.method = method
        self.tau = tau

    def _reset(self, d):
        self.state_ = NIWState.uninformative(d)
        self.n_features_in_ = d
        self.consistency_ = []
        self.discount_ = []

    def _assimilate(self, stats: BatchStats):
        policy = _policy(self.method, effective_dimension(self.n_features_in_), self.tau)
        full = niw_update(self.state_, stats, 1.0)
        c = niw_consistency(self.state_, stats, full)
        gamma = policy.discount(c)
        self.state_ = full if gamma == 1.0 else niw_update(self.state_, stats, gamma)
        self.consistency_.append(c.value)
        self.discount_.append(gamma)

    def fit(self, X, y=None):
        _check_method(self.method, _ROBUST)
        X = check_array(X)
        if self.batch_size < 2 or X.shape[0] % self.batch_size:
            raise ValueError("number of rows must be a multiple of batch_size >= 2")
        self._reset(X.shape[1])
        for b in X.reshape(-1, self.batch_size, X.shape[1]):
            self._assimilate(batch_stats(b))
        return self

    def partial_fit(self, X, y=None):
        _check_method(self.method, _ROBUST)
        X = check_array(X, ensure_min_samples=2)
        if not hasattr(self, "state_"):
            self._reset(X.shape[1])
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        self._assimilate(batch_stats(X))
        return self

    @property
    def covariance_(self):
        check_is_fitted(self, "state_")
        return self.state_.covariance_estimate()

    @property
    def location_(self):
        check_is_fitted(self, "state_")
        return self.state_.mu

    def score_batch(self, X) -> float:
        """Consistency of ``X`` (one batch) with the fitted state."""
        check_is_fitted(self, "state_")
        X = check_array(X, ensure_min_samples=2)
        return niw_consistency(self.state_, batch_stats(X)).value


class PossibilisticKalmanFilter(TransformerMixin, BaseEstimator):
    """Nearly-constant-velocity filter; ``transform`` returns filtered (position, velocity)."""

    def __init__(self, delta=1.0, sigma_a=0.05, R=1.0, method="discount", d_eff=2, tau=None):
        self.delta = delta
        self.sigma_a = sigma_a
        self.R = R
        self.method = method
        self.d_eff = d_eff
        self.tau = tau

    def _run(self, y):
        _check_method(self.method, _ROBUST)
        model = make_cv_model(self.delta, self.sigma_a, self.R)
        return kalman_filter(_series(y), model, _policy(self.method, self.d_eff, self.tau))

    def fit(self, X, y=None):
        means, covs, cons, disc = self._run(X)
        self.states_, self.covariances_ = means, covs
        self.consistency_, self.discount_ = cons, disc
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "states_")
        return self._run(X)[0]


class PossibilisticChangePointDetector(BaseEstimator):
    """Online run-length filter; ``predict`` labels each observation with its segment index."""

    def __init__(self, sigma=2500.0, hazard=2.5e-3, precision_decay=0.9, method="discount",
                 d_eff=2, tau=None, min_run=5):
        self.sigma = sigma
        self.hazard = hazard
        self.precision_decay = precision_decay
        self.method = method
        self.d_eff = d_eff
        self.tau = tau
        self.min_run = min_run

    def _config(self):
        return CPConfig(sigma=self.sigma, hazard=self.hazard, precision_decay=self.precision_decay,
                        tau=self.tau, d_eff=self.d_eff, min_run=self.min_run)

    def fit(self, X, y=None):
        _check_method(self.method, _ROBUST)
        if self.method == "threshold" and self.tau is None:
            raise ValueError("method='threshold' needs tau")
        trace = run_changepoint(_series(X), self._config(), self.method)
        self.changepoints_ = trace.changepoints
        self.map_run_length_ = trace.map_run_length
        self.segment_mean_ = trace.segment_mean
        self.consistency_ = trace.consistency
        self.discount_ = trace.discount
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "changepoints_")
        cps = run_changepoint(_series(X), self._config(), self.method).changepoints
        T = _series(X).size
        return np.searchsorted(np.asarray(cps, dtype=int), np.arange(T), side="right")

    def fit_predict(self, X, y=None):
        self.fit(X)
        return np.searchsorted(np.asarray(self.changepoints_, dtype=int),
                               np.arange(self.map_run_length_.size), side="right")


class RobustNormalGamma(BaseEstimator):
    """Mean and precision of a scalar series under unknown precision."""

    def __init__(self, omega=0.99, beta0=1.0, method="threshold", tau=0.1):
        self.omega = omega
        self.beta0 = beta0
        self.method = method
        self.tau = tau

    def fit(self, X, y=None):
        _check_method(self.method, _ROBUST)
        state, cons, disc = ng_filter(_series(X), self.method, self.omega, self.beta0, self.tau)
        self.state_: NGState = state
        self.mean_ = state.mu
        self.precision_ = state.precision_estimate
        self.consistency_, self.discount_ = cons, disc
        self.n_features_in_ = 1
        return self


class SoftUniformEstimator(BaseEstimator):
    """Upper end of a uniform support from contaminated positive observations."""

    def __init__(self, decay=10.0, sort=True, robust=True):
        self.decay = decay
        self.sort = sort
        self.robust = robust

    def fit(self, X, y=None):
        x = _series(X)
        if np.any(x <= 0):
            raise ValueError("observations must be positive")
        if self.sort:
            x = np.sort(x)
        self.posterior_ = su_filter(x, self.decay, self.robust)
        self.theta_ = self.posterior_.estimate()
        self.discount_ = np.asarray(self.posterior_.discounts)
        self.n_features_in_ = 1
        return self
