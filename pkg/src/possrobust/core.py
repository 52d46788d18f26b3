"""Generic possibility-function machinery.

A possibility function is a non-negative map on a parameter set whose
supremum is one. Everything here works in the log domain: ``log_eval``
is the primitive and ``__call__`` exponentiates it.

Closed-form families live in :mod:`possrobust.families`; this module
provides the grid-backed fallback used whenever no closed form exists,
together with the operations shared by both (mode, variance, power,
combination with consistency, Bayes update, change of variable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "PossibilityError",
    "DegenerateError",
    "UnboundedError",
    "InconsistentError",
    "VarianceUndefinedError",
    "DomainError",
    "Consistency",
    "ModeResult",
    "PossibilityFunction",
    "ConstantPossibility",
    "GridPossibility",
    "PowerPossibility",
    "ProductPossibility",
    "PushforwardPossibility",
    "grid_sup",
    "normalize",
    "mode",
    "variance",
    "power",
    "combine",
    "likelihood_info",
    "bayes_update",
    "pushforward",
]


class PossibilityError(ValueError):
    """Base class for errors raised by possibility-function operations."""


class DegenerateError(PossibilityError):
    """The function to normalize has supremum zero."""


class UnboundedError(PossibilityError):
    """The function to normalize does not have a finite supremum."""


class InconsistentError(PossibilityError):
    """Two pieces of information have consistency zero."""


class VarianceUndefinedError(PossibilityError):
    """The mode is not unique or the log-Hessian at the mode is singular."""


class DomainError(PossibilityError):
    """A point or parameter lies outside the admissible domain."""


Bounds = Sequence[tuple[float, float]]


@dataclass(frozen=True)
class Consistency:
    """Calibrated consistency, stored in the log domain."""

    log_value: float

    def __post_init__(self):
        if math.isnan(self.log_value) or self.log_value > 1e-9:
            raise ValueError(f"log-consistency must be <= 0, got {self.log_value}")
        if self.log_value > 0.0:
            object.__setattr__(self, "log_value", 0.0)

    @classmethod
    def from_value(cls, value: float) -> "Consistency":
        if value < 0 or value > 1 + 1e-12:
            raise ValueError(f"consistency must lie in [0, 1], got {value}")
        return cls(math.log(value) if value > 0 else -math.inf)

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class ModeResult:
    """Representative of the argsup set and whether it is a singleton."""

    point: np.ndarray | float
    unique: bool = True


def _as_points(x, ndim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if ndim > 1 and x.shape[-1:] != (ndim,):
        raise DomainError(f"expected points with trailing dimension {ndim}, got shape {x.shape}")
    return x


class PossibilityFunction:
    """Base class. Subclasses implement :meth:`log_eval`.

    ``ndim`` is the number of scalar coordinates of a point; 1-D functions
    accept arrays of scalars of any shape, ``ndim > 1`` functions accept
    arrays of shape ``(..., ndim)``. ``bounds`` is the box used by grid
    operations (``None`` when the function has no natural box).
    """

    ndim: int = 1
    bounds: tuple[tuple[float, float], ...] | None = None

    def log_eval(self, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        return np.exp(self.log_eval(x))

    def mode(self) -> ModeResult:
        if self.bounds is None:
            raise PossibilityError("mode of a grid-backed function requires bounds")
        _, point, unique = grid_sup(self.log_eval, self.bounds)
        return ModeResult(_squeeze_point(point), unique)

    def variance(self):
        return _numeric_variance(self)

    def power(self, gamma: float) -> "PossibilityFunction":
        gamma = _check_gamma(gamma)
        if gamma == 0.0:
            return ConstantPossibility(self.ndim, self.bounds)
        if gamma == 1.0:
            return self
        return PowerPossibility(self, gamma)


def _check_gamma(gamma) -> float:
    gamma = float(gamma)
    if not gamma >= 0.0:
        raise DomainError(f"power exponent must be >= 0, got {gamma}")
    return gamma


def _squeeze_point(point: np.ndarray):
    point = np.asarray(point, dtype=float)
    return float(point.reshape(-1)[0]) if point.size == 1 else point


class ConstantPossibility(PossibilityFunction):
    """The uninformative possibility function, equal to one everywhere."""

    def __init__(self, ndim: int = 1, bounds: Bounds | None = None):
        self.ndim = ndim
        self.bounds = None if bounds is None else tuple(tuple(map(float, b)) for b in bounds)

    def log_eval(self, x):
        x = _as_points(x, self.ndim)
        shape = x.shape if self.ndim == 1 else x.shape[:-1]
        return np.zeros(shape)

    def mode(self) -> ModeResult:
        if self.bounds is None:
            return ModeResult(0.0 if self.ndim == 1 else np.zeros(self.ndim), unique=False)
        lo = np.array([b[0] for b in self.bounds])
        return ModeResult(_squeeze_point(lo), unique=False)

    def variance(self):
        raise VarianceUndefinedError("constant possibility function has no unique mode")

    def power(self, gamma):
        _check_gamma(gamma)
        return self

    def __repr__(self):
        return f"ConstantPossibility(ndim={self.ndim})"


class GridPossibility(PossibilityFunction):
    """Possibility function ``exp(log_fn(x) - log_sup)`` with a numerically found sup."""

    def __init__(self, log_fn: Callable, bounds: Bounds, log_sup: float, ndim: int,
                 mode_point=None, unique: bool = True):
        self._log_fn = log_fn
        self.bounds = tuple(tuple(map(float, b)) for b in bounds)
        self.log_sup = float(log_sup)
        self.ndim = ndim
        self._mode = None if mode_point is None else ModeResult(_squeeze_point(mode_point), unique)

    def log_eval(self, x):
        x = _as_points(x, self.ndim)
        return np.asarray(self._log_fn(x), dtype=float) - self.log_sup

    def mode(self) -> ModeResult:
        if self._mode is None:
            self._mode = super().mode()
        return self._mode


class PowerPossibility(PossibilityFunction):
    def __init__(self, base: PossibilityFunction, gamma: float):
        if isinstance(base, PowerPossibility):
            base, gamma = base.base, base.gamma * gamma
        self.base = base
        self.gamma = gamma
        self.ndim = base.ndim
        self.bounds = base.bounds

    def log_eval(self, x):
        return self.gamma * self.base.log_eval(x)

    def mode(self) -> ModeResult:
        return self.base.mode()

    def variance(self):
        v = self.base.variance()
        return v / self.gamma


class ProductPossibility(PossibilityFunction):
    """Normalized pointwise product, as produced by :func:`combine`."""

    def __init__(self, factors: Sequence[PossibilityFunction], bounds: Bounds, log_sup: float,
                 mode_point, unique: bool):
        self.factors = tuple(factors)
        self.ndim = self.factors[0].ndim
        self.bounds = tuple(tuple(map(float, b)) for b in bounds)
        self.log_sup = float(log_sup)
        self._mode = ModeResult(_squeeze_point(mode_point), unique)

    def log_eval(self, x):
        total = self.factors[0].log_eval(x)
        for f in self.factors[1:]:
            total = total + f.log_eval(x)
        return total - self.log_sup

    def mode(self) -> ModeResult:
        return self._mode


class PushforwardPossibility(PossibilityFunction):
    """``f_psi(psi) = f(T^{-1}(psi))`` for an invertible map ``T``; no Jacobian."""

    def __init__(self, base: PossibilityFunction, transform: Callable, inverse: Callable,
                 bounds: Bounds | None = None):
        self.base = base
        self.transform = transform
        self.inverse = inverse
        self.ndim = base.ndim
        if bounds is None and base.bounds is not None:
            bounds = _image_bounds(base.bounds, transform)
        self.bounds = None if bounds is None else tuple(tuple(map(float, b)) for b in bounds)

    def log_eval(self, x):
        return self.base.log_eval(self.inverse(np.asarray(x, dtype=float)))

    def mode(self) -> ModeResult:
        m = self.base.mode()
        return ModeResult(_squeeze_point(self.transform(np.asarray(m.point, dtype=float))), m.unique)


def _image_bounds(bounds, transform):
    out = []
    for i, (lo, hi) in enumerate(bounds):
        if len(bounds) == 1:
            a, b = float(transform(np.asarray(lo))), float(transform(np.asarray(hi)))
        else:
            corners = np.array([[lo if j == i else bb[0] for j, bb in enumerate(bounds)],
                                [hi if j == i else bb[0] for j, bb in enumerate(bounds)]])
            img = transform(corners)
            a, b = float(img[0, i]), float(img[1, i])
        out.append((min(a, b), max(a, b)))
    return out


# -- numeric supremum -------------------------------------------------------

_TOTAL_POINT_CAP = 2 ** 21
_REFINE_POINTS = 65


def _axis_points(ndim: int, n: int) -> int:
    return max(9, min(n, int(_TOTAL_POINT_CAP ** (1.0 / ndim))))


def _mesh(axes: list[np.ndarray]) -> np.ndarray:
    if len(axes) == 1:
        return axes[0]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _finite_box(bounds: Bounds) -> list[tuple[float, float]]:
    box = []
    for lo, hi in bounds:
        lo, hi = float(lo), float(hi)
        if not (math.isfinite(lo) and math.isfinite(hi)) or not hi > lo:
            raise PossibilityError(f"grid operations need a finite, non-empty box, got ({lo}, {hi})")
        box.append((lo, hi))
    return box


def grid_sup(log_fn: Callable, bounds: Bounds, points_per_axis: int = 2 ** 10,
             rounds: int = 5, tie_tol: float = 1e-12):
    """Numerical ``log sup`` of ``log_fn`` over a box.

    A uniform grid (``points_per_axis`` per axis, capped in total) is
    followed by ``rounds`` of local re-gridding around the incumbent, each
    shrinking the spacing by a factor 16. Returns ``(log_sup, argmax,
    unique)``. Ties on the coarse grid spanning more than one cell mark the
    argsup as non-unique; the representative is the lexicographically
    smallest tied point and no refinement is done.
    """
    box = _finite_box(bounds)
    ndim = len(box)
    n = _axis_points(ndim, points_per_axis)
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    pts = _mesh(axes)
    vals = np.asarray(log_fn(pts), dtype=float).reshape(-1)
    if np.any(np.isnan(vals)) or np.any(vals == np.inf):
        raise UnboundedError("function is not finite on the grid")
    best = vals.max()
    if best == -np.inf:
        raise DegenerateError("degenerate function: supremum is zero")
    tied = np.flatnonzero(vals >= best - tie_tol * max(1.0, abs(best)))
    idx = tied[0]
    x0 = pts[idx] if ndim > 1 else np.array([pts[idx]])
    if tied.size > 1:
        tied_pts = pts[tied] if ndim > 1 else pts[tied][:, None]
        spacing = np.array([(hi - lo) / (n - 1) for lo, hi in box])
        if np.any(tied_pts.max(axis=0) - tied_pts.min(axis=0) > spacing * (1 + 1e-9)):
            return float(best), x0, False

    h = np.array([(hi - lo) / (n - 1) for lo, hi in box])
    gain = 0.0
    for _ in range(rounds):
        local = []
        for i, (lo, hi) in enumerate(box):
            a, b = max(lo, x0[i] - 2 * h[i]), min(hi, x0[i] + 2 * h[i])
            local.append(np.linspace(a, b, _REFINE_POINTS))
        lpts = _mesh(local)
        lvals = np.asarray(log_fn(lpts), dtype=float).reshape(-1)
        if np.any(np.isnan(lvals)) or np.any(lvals == np.inf):
            raise UnboundedError("function is not finite near its incumbent maximum")
        j = int(np.argmax(lvals))
        gain = lvals[j] - best
        if lvals[j] > best:
            best = lvals[j]
            x0 = lpts[j] if ndim > 1 else np.array([lpts[j]])
        h = h * 4.0 / (_REFINE_POINTS - 1)
    if gain > 1.0:
        raise UnboundedError("grid maximum keeps growing under refinement")
    return float(best), x0, True


def normalize(g: Callable, bounds: Bounds, *, log: bool = False) -> GridPossibility:
    """Rescale a non-negative bounded function so that its supremum is one.

    ``g`` may return values or, with ``log=True``, log values.
    """
    if log:
        log_fn = g
    else:
        def log_fn(x):
            with np.errstate(divide="ignore"):
                return np.log(np.asarray(g(x), dtype=float))
    ndim = len(bounds)
    log_sup, point, unique = grid_sup(log_fn, bounds)
    return GridPossibility(log_fn, bounds, log_sup, ndim, point, unique)


def mode(f: PossibilityFunction) -> ModeResult:
    return f.mode()


def variance(f: PossibilityFunction):
    """Inverse negative log-Hessian at the mode."""
    return f.variance()


def _numeric_variance(f: PossibilityFunction):
    m = f.mode()
    if not m.unique:
        raise VarianceUndefinedError("mode is not unique")
    x0 = np.atleast_1d(np.asarray(m.point, dtype=float))
    k = x0.size
    h = 1e-4 * (1.0 + np.abs(x0))

    def lf(x):
        return float(f.log_eval(x if k > 1 else x[0]))

    hess = np.empty((k, k))
    f0 = lf(x0)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        hess[i, i] = (lf(x0 + ei) - 2 * f0 + lf(x0 - ei)) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            hij = (lf(x0 + ei + ej) - lf(x0 + ei - ej) - lf(x0 - ei + ej) + lf(x0 - ei - ej)) / (4 * h[i] * h[j])
            hess[i, j] = hess[j, i] = hij
    neg = -hess
    if not np.all(np.isfinite(neg)):
        raise VarianceUndefinedError("log-Hessian is not finite at the mode")
    try:
        np.linalg.cholesky(neg)
    except np.linalg.LinAlgError:
        raise VarianceUndefinedError("negative log-Hessian is singular or indefinite") from None
    var = np.linalg.inv(neg)
    return float(var[0, 0]) if k == 1 else var


def power(f: PossibilityFunction, gamma: float) -> PossibilityFunction:
    """Pointwise ``f ** gamma``; ``gamma = 0`` gives the constant one."""
    return f.power(gamma)


def _intersect(b1, b2):
    if b1 is None:
        return b2
    if b2 is None:
        return b1
    out = [(max(a[0], b[0]), min(a[1], b[1])) for a, b in zip(b1, b2)]
    for lo, hi in out:
        if not hi > lo:
            raise InconsistentError("inconsistent information: disjoint supports")
    return out


def combine(f: PossibilityFunction, g: PossibilityFunction, bounds: Bounds | None = None):
    """Combine two independently described pieces of information.

    Returns the normalized product and the consistency ``sup f*g``.
    Raises :class:`InconsistentError` when the consistency is zero.
    """
    if f.ndim != g.ndim:
        raise DomainError("cannot combine possibility functions on different domains")
    if isinstance(f, ConstantPossibility):
        return g, Consistency(0.0)
    if isinstance(g, ConstantPossibility):
        return f, Consistency(0.0)
    closed = getattr(f, "_combine_closed", None)
    if closed is not None:
        out = closed(g)
        if out is not None:
            return out
    closed = getattr(g, "_combine_closed", None)
    if closed is not None:
        out = closed(f)
        if out is not None:
            return out
    box = bounds if bounds is not None else _intersect(f.bounds, g.bounds)
    if box is None:
        raise PossibilityError("combine needs bounds when neither function carries a box")

    def log_prod(x):
        return f.log_eval(x) + g.log_eval(x)

    try:
        log_c, point, unique = grid_sup(log_prod, box)
    except DegenerateError:
        raise InconsistentError("inconsistent information: consistency is zero") from None
    log_c = min(log_c, 0.0)
    post = ProductPossibility((f, g), box, log_c, point, unique)
    return post, Consistency(log_c)


def likelihood_info(p, y, bounds: Bounds | None = None) -> PossibilityFunction:
    """Likelihood normalized by its supremum over the parameter.

    ``p`` is either a likelihood object with an ``info(y)`` closed form or a
    callable ``p(theta, y)`` returning the log-likelihood, in which case
    ``bounds`` must be given and the supremum is found on a grid.
    """
    info = getattr(p, "info", None)
    if info is not None and bounds is None:
        return info(y)
    logpdf = getattr(p, "logpdf", p)
    if bounds is None:
        raise PossibilityError("grid-backed likelihood information needs bounds")
    return normalize(lambda th: logpdf(th, y), bounds, log=True)


def bayes_update(prior: PossibilityFunction, p, y, bounds: Bounds | None = None):
    """Possibilistic Bayes update; returns ``(posterior, consistency)``.

    The consistency is the calibrated ``sup L(.|y) * prior``, not the
    reference-measure dependent evidence.
    """
    lik = likelihood_info(p, y, bounds)
    return combine(prior, lik, bounds)


def pushforward(f: PossibilityFunction, transform: Callable, inverse: Callable,
                bounds: Bounds | None = None, check_points: int = 64) -> PushforwardPossibility:
    """Change of variable ``psi = T(theta)`` for an invertible ``T``."""
    if f.bounds is not None:
        box = _finite_box([(lo if math.isfinite(lo) else -1e3, hi if math.isfinite(hi) else 1e3)
                           for lo, hi in f.bounds])
        rng = np.random.default_rng(0)
        pts = np.column_stack([rng.uniform(lo, hi, check_points) for lo, hi in box])
        if f.ndim == 1:
            pts = pts[:, 0]
        with np.errstate(all="ignore"):
            back = np.asarray(inverse(np.asarray(transform(pts), dtype=float)), dtype=float)
        ok = np.isfinite(back) & np.isfinite(pts)
        if not np.allclose(back[ok], pts[ok], rtol=1e-8, atol=1e-10):
            raise PossibilityError("inverse map is inconsistent with the forward map")
    return PushforwardPossibility(f, transform, inverse, bounds)
