"""Closed-form possibility-function families and matching likelihoods.

Each family evaluates in the log domain, has an analytic mode, variance
and power, and where a conjugate pair exists an analytic combination
(``_combine_closed``) that :func:`possrobust.core.combine` picks up.
Conventions at degenerate parameters follow ``0 ** 0 = 1``, so every
family contains the constant one as the member with zero parameters.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .core import (
    Consistency,
    DomainError,
    ModeResult,
    PossibilityFunction,
    VarianceUndefinedError,
    _check_gamma,
)

__all__ = [
    "GaussianPoss",
    "BetaPoss",
    "GammaPoss",
    "InverseGammaPoss",
    "InverseWishartPoss",
    "NIWPoss",
    "NormalGammaPoss",
    "ParetoPoss",
    "GaussianLikelihood",
    "BinomialLikelihood",
    "UniformLikelihood",
    "eval_family",
    "power_family",
    "mode_family",
    "beta_binomial_consistency",
    "spd_logdet",
]

_SPAN = 12.0
_PIVOT_TOL = 1e-10


def spd_logdet(a: np.ndarray) -> float:
    """Log-determinant through a Cholesky factor; raises DomainError if not SPD."""
    a = np.asarray(a, dtype=float)
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise DomainError("matrix is not symmetric positive definite") from None
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    if np.any(diag <= _PIVOT_TOL * max(1.0, float(np.max(np.abs(diag))))):
        raise DomainError("matrix is numerically singular")
    return 2.0 * np.sum(np.log(diag), axis=-1)


def _check_sym_psd(m: np.ndarray, name: str):
    if not np.all(np.abs(m - m.T) < 1e-12 * max(1.0, float(np.max(np.abs(m))))):
        raise DomainError(f"{name} must be symmetric")
    if m.size and np.min(np.linalg.eigvalsh(m)) < -1e-12 * max(1.0, float(np.max(np.abs(m)))):
        raise DomainError(f"{name} must be positive semidefinite")


def _beta_lognorm(a, b):
    return xlogy(a + b, a + b) - xlogy(a, a) - xlogy(b, b)


def _gamma_lognorm(a, b):
    # log of (b/a)^a e^a, 0^0 = 1
    if a == 0:
        return 0.0
    return a * (math.log(b) - math.log(a)) + a


class GaussianPoss(PossibilityFunction):
    """``exp(-(x - mean)' P (x - mean) / 2)`` with precision ``P`` (PSD, may be 0)."""

    def __init__(self, mean, precision):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        prec = np.asarray(precision, dtype=float)
        d = mean.size
        prec = prec.reshape(1, 1) if prec.ndim == 0 else prec
        if prec.shape != (d, d):
            raise DomainError(f"precision must be {d}x{d}, got {prec.shape}")
        _check_sym_psd(prec, "precision")
        self.mean = mean
        self.precision = prec
        self.ndim = d
        self.bounds = self._box()

    def _box(self):
        try:
            cov = np.linalg.inv(self.precision)
        except np.linalg.LinAlgError:
            return None
        sd = np.sqrt(np.clip(np.diag(cov), 0, None))
        if not np.all(np.isfinite(sd)) or np.any(sd <= 0):
            return None
        return tuple((float(m - _SPAN * s), float(m + _SPAN * s)) for m, s in zip(self.mean, sd))

    def log_eval(self, x):
        x = np.asarray(x, dtype=float)
        if self.ndim == 1:
            return -0.5 * self.precision[0, 0] * (x - self.mean[0]) ** 2
        diff = x - self.mean
        return -0.5 * np.einsum("...i,ij,...j->...", diff, self.precision, diff)

    def mode(self):
        unique = bool(np.linalg.eigvalsh(self.precision).min() > 0)
        return ModeResult(float(self.mean[0]) if self.ndim == 1 else self.mean.copy(), unique)

    def variance(self):
        if np.linalg.eigvalsh(self.precision).min() <= 0:
            raise VarianceUndefinedError("precision is singular")
        cov = np.linalg.inv(self.precision)
        return float(cov[0, 0]) if self.ndim == 1 else cov

    def power(self, gamma):
        gamma = _check_gamma(gamma)
        return GaussianPoss(self.mean, gamma * self.precision)

    def _combine_closed(self, other):
        if not isinstance(other, GaussianPoss) or other.ndim != self.ndim:
            return None
        p1, p2 = self.precision, other.precision
        prec = p1 + p2
        rhs = p1 @ self.mean + p2 @ other.mean
        mean = np.linalg.lstsq(prec, rhs, rcond=None)[0] if self.ndim > 1 else (
            rhs / prec[0] if prec[0, 0] > 0 else self.mean.copy())
        # -(1/2) d' P1 (P1 + P2)^+ P2 d; exactly zero when the means agree
        diff = self.mean - other.mean
        quad = diff @ p1 @ np.linalg.pinv(prec) @ p2 @ diff
        log_c = min(-0.5 * float(quad), 0.0)
        return GaussianPoss(mean, 0.5 * (prec + prec.T)), Consistency(log_c)

    def __repr__(self):
        if self.ndim == 1:
            return f"GaussianPoss(mean={self.mean[0]:g}, precision={self.precision[0, 0]:g})"
        return f"GaussianPoss(mean={self.mean}, precision=...)"


class BetaPoss(PossibilityFunction):
    def __init__(self, alpha: float, beta: float):
        if alpha < 0 or beta < 0:
            raise DomainError("beta parameters must be non-negative")
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.ndim = 1
        self.bounds = ((0.0, 1.0),)

    def log_eval(self, x):
        x = np.asarray(x, dtype=float)
        if np.any((x < 0) | (x > 1)):
            raise DomainError("beta possibility is defined on [0, 1]")
        a, b = self.alpha, self.beta
        return _beta_lognorm(a, b) + xlogy(a, x) + xlog1py(b, -x)

    def mode(self):
        s = self.alpha + self.beta
        if s == 0:
            return ModeResult(0.0, unique=False)
        return ModeResult(self.alpha / s)

    def variance(self):
        a, b = self.alpha, self.beta
        if a <= 0 or b <= 0:
            raise VarianceUndefinedError("beta variance needs alpha, beta > 0")
        return a * b / (a + b) ** 3

    def power(self, gamma):
        gamma = _check_gamma(gamma)
        return BetaPoss(gamma * self.alpha, gamma * self.beta)

    def _combine_closed(self, other):
        if not isinstance(other, BetaPoss):
            return None
        a, b = self.alpha + other.alpha, self.beta + other.beta
        log_c = (_beta_lognorm(self.alpha, self.beta) + _beta_lognorm(other.alpha, other.beta)
                 - _beta_lognorm(a, b))
        return BetaPoss(a, b), Consistency(min(float(log_c), 0.0))

    def __repr__(self):
        return f"BetaPoss({self.alpha:g}, {self.beta:g})"


def _check_gamma_params(alpha, beta):
    if alpha < 0 or beta < 0 or (alpha > 0 and beta == 0):
        raise DomainError("gamma parameters must satisfy alpha = 0, beta >= 0 or alpha, beta > 0")


class GammaPoss(PossibilityFunction):
    """``(beta * x / alpha)^alpha exp(alpha - beta * x)`` on ``x > 0``."""

    def __init__(self, alpha: float, beta: float):
        _check_gamma_params(alpha, beta)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.ndim = 1
        if self.alpha > 0:
            m, sd = self.alpha / self.beta, math.sqrt(self.alpha) / self.beta
            self.bounds = ((0.0, m + _SPAN * max(sd, m)),)
        elif self.beta > 0:
            self.bounds = ((0.0, 40.0 / self.beta),)
        else:
            self.bounds = None

    def log_eval(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("gamma possibility is defined on (0, inf)")
        a, b = self.alpha, self.beta
        return _gamma_lognorm(a, b) + xlogy(a, x) - b * x

    def mode(self):
        if self.alpha == 0:
            return ModeResult(0.0, unique=False)
        return ModeResult(self.alpha / self.beta)

    def variance(self):
        if self.alpha <= 0:
            raise VarianceUndefinedError("gamma variance needs alpha > 0")
        return self.alpha / self.beta ** 2

    def power(self, gamma):
        gamma = _check_gamma(gamma)
        return GammaPoss(gamma * self.alpha, gamma * self.beta)

    def _combine_closed(self, other):
        if not isinstance(other, GammaPoss):
            return None
        a, b = self.alpha + other.alpha, self.beta + other.beta
        log_c = (_gamma_lognorm(self.alpha, self.beta) + _gamma_lognorm(other.alpha, other.beta)
                 - _gamma_lognorm(a, b))
        return GammaPoss(a, b), Consistency(min(float(log_c), 0.0))

    def __repr__(self):
        return f"GammaPoss({self.alpha:g}, {self.beta:g})"


class InverseGammaPoss(PossibilityFunction):
    """Gamma possibility of the reciprocal: ``IG(s; a, b) = G(1/s; a, b)``."""

    def __init__(self, alpha: float, beta: float):
        _check_gamma_params(alpha, beta)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.ndim = 1
        self.bounds = None if self.alpha == 0 else ((1e-12, _SPAN * self.beta / self.alpha),)

    def log_eval(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("inverse-gamma possibility is defined on (0, inf)")
        a, b = self.alpha, self.beta
        return _gamma_lognorm(a, b) - xlogy(a, x) - b / x

    def mode(self):
        if self.alpha == 0:
            return ModeResult(math.inf, unique=False)
        return ModeResult(self.beta / self.alpha)

    def variance(self):
        if self.alpha <= 0:
            raise VarianceUndefinedError("inverse-gamma variance needs alpha > 0")
        return self.beta ** 2 / self.alpha ** 3

    def power(self, gamma):
        gamma = _check_gamma(gamma)
        return InverseGammaPoss(gamma * self.alpha, gamma * self.beta)


class InverseWishartPoss(PossibilityFunction):
    """``[|Psi| / |nu Sigma|]^(nu/2) exp(-(tr(Psi Sigma^-1) - d nu) / 2)`` on SPD matrices."""

    def __init__(self, psi, nu: float):
        psi = np.atleast_2d(np.asarray(psi, dtype=float))
        if nu < 0:
            raise DomainError("nu must be non-negative")
        _check_sym_psd(psi, "Psi")
        self.psi = psi
        self.nu = float(nu)
        self.dim = psi.shape[0]
        self.ndim = self.dim * self.dim
        self._logdet_psi = spd_logdet(psi) if self.nu > 0 else 0.0

    def log_eval(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        d = self.dim
        if sigma.shape[-2:] != (d, d):
            raise DomainError(f"expected {d}x{d} matrices")
        logdet_sigma = spd_logdet(sigma)
        if self.nu == 0:
            return np.zeros(sigma.shape[:-2])
        trace = np.trace(np.linalg.solve(sigma, np.broadcast_to(self.psi, sigma.shape)),
                         axis1=-2, axis2=-1)
        nu = self.nu
        return (0.5 * nu * (self._logdet_psi - d * math.log(nu) - logdet_sigma)
                - 0.5 * (trace - d * nu))

    def mode(self):
        if self.nu == 0:
            return ModeResult(np.eye(self.dim), unique=False)
        return ModeResult(self.psi / self.nu)

    def variance(self):
        raise VarianceUndefinedError("variance of matrix-valued variables is not provided")

    def power(self, gamma):
        gamma = _check_gamma(gamma)
        return InverseWishartPoss(gamma * self.psi, gamma * self.nu)


class NIWPoss(PossibilityFunction):
    """``N(mu; mu0, lam Sigma^-1) * IW(Sigma; Psi, nu)``; evaluated as ``log_eval(mu, Sigma)``."""

    def __init__(self, mu0, lam: float, psi, nu: float):
        if lam < 0:
            raise DomainError("lambda must be non-negative")
        self.mu0 = np.atleast_1d(np.asarray(mu0, dtype=float))
        self.lam = float(lam)
        self.iw = InverseWishartPoss(psi, nu)
        self.dim = self.iw.dim

    @property
    def psi(self):
        return self.iw.psi

    @property
    def nu(self):
        return self.iw.nu

    def log_eval(self, mu, sigma=None):
        if sigma is None:
            raise DomainError("NIW possibility is evaluated at (mu, Sigma)")
        mu = np.asarray(mu, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        diff = mu - self.mu0
        quad = np.einsum("...i,...i->...", diff, np.linalg.solve(sigma, diff[..., None])[..., 0])
        return -0.5 * self.lam * quad + self.iw.log_eval(sigma)

    def __call__(self, mu, sigma=None):
        return np.exp(self.log_eval(mu, sigma))

    def mode(self):
        m = self.iw.mode()
        return ModeResult((self.mu0.copy(), m.point), unique=m.unique and self.lam > 0)

    def variance(self):
        raise VarianceUndefinedError("variance of matrix-valued variables is not provided")

    def power(self, gamma):
        gamma = _check_gamma(gamma)
        return NIWPoss(self.mu0, gamma * self.lam, gamma * self.psi, gamma * self.nu)


class NormalGammaPoss(PossibilityFunction):
    """``N(mu; mu0, k * lam) * G(lam; alpha, beta)`` on points ``(mu, lam)``."""

    def __init__(self, mu0: float, k: float, alpha: float, beta: float):
        if k < 0:
            raise DomainError("k must be non-negative")
        self.mu0 = float(mu0)
        self.k = float(k)
        self.gamma_part = GammaPoss(alpha, beta)
        self.ndim = 2
        lam_box = self.gamma_part.bounds
        if lam_box is not None and self.k > 0 and self.alpha > 0:
            sd = 1.0 / math.sqrt(self.k * self.alpha / self.beta)
            self.bounds = ((self.mu0 - _SPAN * sd, self.mu0 + _SPAN * sd), lam_box[0])
        else:
            self.bounds = None

    @property
    def alpha(self):
        return self.gamma_part.alpha

    @property
    def beta(self):
        return self.gamma_part.beta

    def log_eval(self, x):
        x = np.asarray(x, dtype=float)
        mu, lam = x[..., 0], x[..., 1]
        return -0.5 * self.k * lam * (mu - self.mu0) ** 2 + self.gamma_part.log_eval(lam)

    def mode(self):
        g = self.gamma_part.mode()
        return ModeResult(np.array([self.mu0, g.point]), unique=g.unique and self.k > 0)

    def variance(self):
        if self.k <= 0 or self.alpha <= 0:
            raise VarianceUndefinedError("normal-gamma variance needs k, alpha > 0")
        lam = self.alpha / self.beta
        return np.diag([1.0 / (self.k * lam), self.alpha / self.beta ** 2])

    def power(self, gamma):
        gamma = _check_gamma(gamma)
        return NormalGammaPoss(self.mu0, gamma * self.k, gamma * self.alpha, gamma * self.beta)

    def split(self, omega: float):
        """Split the precision information only: ``(kept, invested)``.

        ``kept = N(mu0, k lam) G(omega alpha, omega beta)`` and
        ``invested = G((1 - omega) alpha, (1 - omega) beta)`` (no location part).
        """
        kept = NormalGammaPoss(self.mu0, self.k, omega * self.alpha, omega * self.beta)
        invested = NormalGammaPoss(self.mu0, 0.0, (1 - omega) * self.alpha, (1 - omega) * self.beta)
        return kept, invested

    def __repr__(self):
        return f"NormalGammaPoss(mu0={self.mu0:g}, k={self.k:g}, alpha={self.alpha:g}, beta={self.beta:g})"


class ParetoPoss(PossibilityFunction):
    """``(s / x)^alpha`` on ``[s, inf)``, zero below ``s``."""

    def __init__(self, alpha: float, s: float):
        if alpha < 0 or s < 0 or (alpha > 0 and s == 0):
            raise DomainError("Pareto parameters must satisfy alpha >= 0, s >= 0, s > 0 if alpha > 0")
        self.alpha = float(alpha)
        self.s = float(s)
        self.ndim = 1
        self.bounds = ((self.s, max(self.s, 1.0) * 1e3),) if self.s > 0 else None

    def log_eval(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("Pareto possibility is defined on (0, inf)")
        if self.alpha == 0 and self.s == 0:
            return np.zeros(x.shape)
        with np.errstate(divide="ignore"):
            out = self.alpha * (math.log(self.s) - np.log(x)) if self.s > 0 else np.zeros(x.shape)
        return np.where(x >= self.s, out, -np.inf)

    def mode(self):
        return ModeResult(self.s, unique=self.alpha > 0)

    def variance(self):
        raise VarianceUndefinedError("Pareto possibility is not differentiable at its mode")

    def power(self, gamma):
        gamma = _check_gamma(gamma)
        if gamma == 0:
            return ParetoPoss(0.0, 0.0)
        return ParetoPoss(gamma * self.alpha, self.s)

    def _combine_closed(self, other):
        if not isinstance(other, ParetoPoss):
            return None
        s = max(self.s, other.s)
        a = self.alpha + other.alpha
        log_c = float(self.log_eval(s) + other.log_eval(s)) if s > 0 else 0.0
        return ParetoPoss(a, s), Consistency(min(log_c, 0.0))

    def __repr__(self):
        return f"ParetoPoss({self.alpha:g}, s={self.s:g})"


# -- likelihoods with closed-form information --------------------------------

class GaussianLikelihood:
    """Normal likelihood with known covariance; the parameter is the mean."""

    def __init__(self, cov):
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self.cov = cov
        self.dim = cov.shape[0]
        self._prec = np.linalg.inv(cov)
        self._logdet = spd_logdet(cov)

    def _batch(self, y):
        y = np.asarray(y, dtype=float)
        if self.dim == 1:
            return y.reshape(-1, 1)
        return y.reshape(-1, self.dim)

    def info(self, y) -> GaussianPoss:
        ys = self._batch(y)
        return GaussianPoss(ys.mean(axis=0), ys.shape[0] * self._prec)

    def logpdf(self, theta, y):
        ys = self._batch(y)
        theta = np.asarray(theta, dtype=float)
        th = theta[..., None] if self.dim == 1 else theta
        total = 0.0
        for row in ys:
            diff = (th - row) if self.dim > 1 else (th - row[0])
            if self.dim == 1:
                q = self._prec[0, 0] * diff[..., 0] ** 2
            else:
                q = np.einsum("...i,ij,...j->...", diff, self._prec, diff)
            total = total - 0.5 * q - 0.5 * (self.dim * math.log(2 * math.pi) + self._logdet)
        return total


class BinomialLikelihood:
    """Binomial count likelihood for ``n`` trials; the parameter is the success probability."""

    def __init__(self, n: int):
        self.n = int(n)

    def info(self, y) -> BetaPoss:
        y = float(y)
        if not 0 <= y <= self.n:
            raise DomainError("success count must lie in [0, n]")
        return BetaPoss(y, self.n - y)

    def logpdf(self, theta, y):
        theta = np.asarray(theta, dtype=float)
        n = self.n
        logc = gammaln(n + 1) - gammaln(y + 1) - gammaln(n - y + 1)
        return logc + xlogy(y, theta) + xlog1py(n - y, -theta)


class UniformLikelihood:
    """``p(y | theta) = 1[y <= theta] / theta``."""

    def info(self, y) -> ParetoPoss:
        return ParetoPoss(1.0, float(y))

    def logpdf(self, theta, y):
        theta = np.asarray(theta, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(theta >= y, -np.log(theta), -np.inf)


# -- functional surface --------------------------------------------------------

def eval_family(params: PossibilityFunction, *point):
    """Credibility of ``point`` under a family member."""
    return params(*point)


def power_family(params: PossibilityFunction, gamma: float) -> PossibilityFunction:
    return params.power(gamma)


def mode_family(params: PossibilityFunction):
    return params.mode().point


def beta_binomial_consistency(prior: BetaPoss, n: int, y: int) -> Consistency:
    """Consistency of a binomial count with a beta prior, evaluated at the joint mode."""
    if not 0 <= y <= n:
        raise DomainError("success count must lie in [0, n]")
    total = n + prior.alpha + prior.beta
    if total == 0:
        return Consistency(0.0)
    theta = (y + prior.alpha) / total
    lik = BetaPoss(y, n - y)
    return Consistency(min(float(lik.log_eval(theta) + prior.log_eval(theta)), 0.0))
