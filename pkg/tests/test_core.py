import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from possrobust.core import (
    Consistency,
    ConstantPossibility,
    DegenerateError,
    InconsistentError,
    PossibilityError,
    UnboundedError,
    VarianceUndefinedError,
    bayes_update,
    combine,
    grid_sup,
    likelihood_info,
    normalize,
    power,
    pushforward,
)
from possrobust.families import BetaPoss, GaussianLikelihood, GaussianPoss, ParetoPoss


def test_consistency_log_domain():
    c = Consistency.from_value(0.25)
    assert c.value == pytest.approx(0.25)
    assert float(Consistency.from_value(0.0)) == 0.0
    assert Consistency(1e-12).log_value == 0.0
    with pytest.raises(ValueError):
        Consistency(0.1)
    with pytest.raises(ValueError):
        Consistency.from_value(1.5)


def test_grid_sup_quadratic_refines_past_grid_spacing():
    log_sup, x, unique = grid_sup(lambda x: -(x - 0.123456789) ** 2 + 0.5, [(-3, 3)])
    assert unique
    assert x[0] == pytest.approx(0.123456789, abs=1e-7)
    assert log_sup == pytest.approx(0.5, abs=1e-12)


def test_grid_sup_two_dimensional():
    f = lambda p: -((p[:, 0] - 0.3) ** 2) - 2 * (p[:, 1] + 0.7) ** 2
    log_sup, x, unique = grid_sup(f, [(-2, 2), (-2, 2)])
    assert unique and np.allclose(x, [0.3, -0.7], atol=1e-6)
    assert abs(log_sup) < 1e-10


def test_grid_sup_flat_region_not_unique():
    _, x, unique = grid_sup(lambda x: np.where(np.abs(x) < 0.5, 0.0, -1.0), [(-1, 1)])
    assert not unique
    assert x[0] == pytest.approx(-0.5, abs=2e-3)


def test_grid_sup_failures():
    with pytest.raises(DegenerateError):
        grid_sup(lambda x: np.full(np.shape(x), -np.inf), [(0, 1)])
    with pytest.raises(UnboundedError), np.errstate(divide="ignore"):
        grid_sup(lambda x: -np.log(np.abs(x - 1 / 3)), [(0, 1)])
    with pytest.raises(PossibilityError):
        grid_sup(lambda x: x, [(0, np.inf)])


def test_normalize_sup_is_one():
    f = normalize(lambda x: 3.0 * np.exp(-(x - 1) ** 2), [(-5, 5)])
    assert f(1.0) == pytest.approx(1.0, abs=1e-10)
    assert f.mode().point == pytest.approx(1.0, abs=1e-6)


def test_numeric_variance_matches_gaussian():
    g = normalize(lambda x: -0.5 * 4.0 * (x - 2) ** 2, [(-5, 5)], log=True)
    assert g.variance() == pytest.approx(0.25, rel=1e-5)


def test_numeric_variance_undefined_for_flat():
    with pytest.raises(VarianceUndefinedError):
        ConstantPossibility().variance()
    g = normalize(lambda x: np.where(np.abs(x) < 0.5, 0.0, -1.0), [(-1, 1)], log=True)
    with pytest.raises(VarianceUndefinedError):
        g.variance()


@given(st.floats(-3, 3), st.floats(0.2, 5), st.floats(-3, 3), st.floats(0.2, 5))
def test_combine_closed_gaussian_matches_grid(m1, p1, m2, p2):
    f, g = GaussianPoss(m1, p1), GaussianPoss(m2, p2)
    post, c = combine(f, g)
    log_sup, x, _ = grid_sup(lambda t: f.log_eval(t) + g.log_eval(t), [(-15, 15)])
    assert c.log_value == pytest.approx(log_sup, abs=1e-9)
    assert post.mode().point == pytest.approx(x[0], abs=1e-6)


def test_combine_grid_fallback_and_inconsistency():
    f = normalize(lambda x: -np.abs(x), [(-4, 4)], log=True)
    g = GaussianPoss(1.0, 1.0)
    post, c = combine(f, g, [(-4, 4)])
    # sup of -|x| - (x-1)^2/2 at x = 0 would be -0.5; on x > 0 it is -x - (x-1)^2/2, max at x=0
    assert c.log_value == pytest.approx(-0.5, abs=1e-9)
    assert post.log_eval(np.array([0.0])) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(InconsistentError):
        combine(ParetoPoss(1, 5.0).power(1.0), normalize(lambda x: np.where(x < 2, 0.0, -np.inf),
                                                          [(0.1, 10)], log=True))


def test_combine_with_constant_is_identity():
    g = GaussianPoss(0.3, 2.0)
    post, c = combine(ConstantPossibility(), g)
    assert post is g and c.value == 1.0


def test_power_zero_is_constant_and_power_one_is_identity():
    f = normalize(lambda x: -(x ** 2), [(-3, 3)], log=True)
    assert isinstance(power(f, 0.0), ConstantPossibility)
    assert power(f, 1.0) is f
    x = np.linspace(-2, 2, 7)
    assert np.allclose(power(f, 0.3)(x), f(x) ** 0.3)


def test_likelihood_info_closed_form_matches_grid():
    lik = GaussianLikelihood(2.0)
    y = np.array([0.4, 1.1, -0.2])
    closed = likelihood_info(lik, y)
    grid = likelihood_info(lik, y, bounds=[(-10, 10)])
    x = np.linspace(-3, 3, 41)
    assert np.allclose(closed(x), grid(x), atol=1e-9)


def test_bayes_update_uninformative_prior_has_unit_consistency():
    post, c = bayes_update(GaussianPoss(0.0, 0.0), GaussianLikelihood(1.0), 2.5)
    assert c.value == 1.0
    assert post.mode().point == pytest.approx(2.5)


def test_pushforward_mode_without_jacobian():
    f = GaussianPoss(1.0, 4.0)
    g = pushforward(f, np.exp, np.log)
    assert g.mode().point == pytest.approx(math.e)
    assert g(math.e) == pytest.approx(1.0)
    with pytest.raises(PossibilityError):
        pushforward(f, np.exp, lambda y: y)
