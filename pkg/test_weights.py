import math

import numpy as np
import pytest
from scipy import integrate, stats

from src.core.exceptions import DimensionError, WeightError
from src.linalg.pd_matrix import IndexSet, PDMatrix, random_pd
from src.montecarlo.engine import SampleSpec
from src.weights.derived import reduce_wf, sum_conditioned_wfs, theta_wfs
from src.weights.weight_function import (
    Constant, ExpTilt, HostRoutine, Product, as_host_routine, eval_wf, is_product_form, tilt_of,
    weight_from_json,
)

RHO_HALF = PDMatrix([[1.0, 0.5], [0.5, 1.0]])


def test_families_evaluate_pointwise():
    assert eval_wf(Constant(3.0), [0.2, -1.0]) == 3.0
    assert eval_wf(ExpTilt([1.0, -1.0], scale=2.0), [0.5, 0.25]) == pytest.approx(2.0 * math.exp(0.25))
    prod = Product([ExpTilt([0.5]), Constant(2.0), ExpTilt([1.0])])
    assert eval_wf(prod, [1.0, 7.0, 2.0]) == pytest.approx(2.0 * math.exp(2.5))
    assert tilt_of(prod, 3)[1] == pytest.approx(2.0)


def test_negative_weights_rejected():
    with pytest.raises(WeightError):
        Constant(-1.0)
    routine = HostRoutine(lambda x: -np.ones(len(x)), 2)
    with pytest.raises(WeightError, match="nonnegative"):
        routine.evaluate(np.zeros((4, 2)))


def test_dimension_mismatch_rejected():
    with pytest.raises(DimensionError):
        eval_wf(ExpTilt([1.0, 2.0]), [1.0, 2.0, 3.0])


def test_product_form_detection():
    assert is_product_form(Constant(2.0))
    assert is_product_form(ExpTilt([0.3, 0.3, 0.3]))
    assert not is_product_form(ExpTilt([0.3, 0.1]))
    assert is_product_form(Product([ExpTilt([0.2]), ExpTilt([0.2])]))
    assert not is_product_form(as_host_routine(Constant(1.0), 2))


def test_weight_json():
    phi = weight_from_json({"type": "exp_tilt", "t": [0.1, 0.2], "scale": 3.0})
    assert isinstance(phi, ExpTilt)
    assert phi.to_json() == {"type": "exp_tilt", "t": [0.1, 0.2], "scale": 3.0}
    with pytest.raises(WeightError, match="unknown weight type"):
        weight_from_json({"type": "spline"})


def test_reduced_constant_is_constant():
    C = random_pd(4, 1)
    psi = reduce_wf(Constant(3.0), C, IndexSet(4, (2, 3)))
    x = np.random.default_rng(0).standard_normal((5, 2))
    assert np.allclose(psi.evaluate(x), 3.0)


def test_reduced_full_set_is_identity():
    phi = ExpTilt([0.1, 0.2])
    assert reduce_wf(phi, RHO_HALF, IndexSet.full(2)) is phi


def test_reduced_tilt_under_independence():
    C = PDMatrix(np.diag([1.0, 2.0, 3.0]))
    t = np.array([0.3, -0.2, 0.5])
    psi = reduce_wf(ExpTilt(t), C, IndexSet(3, (1,)))
    expected = math.exp(0.3 * 0.7 + 0.5 * (0.04 * 2.0 + 0.25 * 3.0))
    assert eval_wf(psi, [0.7]) == pytest.approx(expected)


def _conditional_oracle(x1: float) -> float:
    """∫ exp(x2) f(x2 | x1) dx2 under RHO_HALF"""
    law = stats.norm(loc=0.5 * x1, scale=math.sqrt(0.75))
    value, _ = integrate.quad(lambda y: math.exp(y) * law.pdf(y), -np.inf, np.inf)
    return value


def test_reduced_tilt_matches_quadrature():
    psi = reduce_wf(ExpTilt([0.0, 1.0]), RHO_HALF, IndexSet(2, (1,)))
    assert eval_wf(psi, [1.0]) == pytest.approx(math.exp(0.875), rel=1e-12)
    assert eval_wf(psi, [1.0]) == pytest.approx(_conditional_oracle(1.0), rel=1e-7)
    assert psi.method == "closed_form"


def test_reduced_host_routine_by_monte_carlo():
    phi = as_host_routine(ExpTilt([0.0, 1.0]), 2)
    psi = reduce_wf(phi, RHO_HALF, IndexSet(2, (1,)), SampleSpec(n_samples=100000, seed=4))
    assert psi.method == "monte_carlo"
    est = psi.estimate_at([1.0])
    assert abs(est.value - _conditional_oracle(1.0)) <= 4.0 * est.stderr
    # pointwise seeds depend on the point only
    assert psi.estimate_at([1.0]) == est


def test_theta_weights_closed_forms():
    one = PDMatrix([[1.0]])
    theta, theta_star = theta_wfs(ExpTilt([0.0, 1.0]), one, one)
    assert eval_wf(theta_star, [0.3]) == pytest.approx(math.exp(0.5))
    assert eval_wf(theta_star, [-2.0]) == pytest.approx(math.exp(0.5))
    assert eval_wf(theta, [0.0]) == pytest.approx(math.exp(0.25))
    assert eval_wf(theta, [1.0]) == pytest.approx(math.exp(0.75))


def test_theta_weights_of_constant():
    C1, C2 = random_pd(2, 3), random_pd(2, 4)
    theta, theta_star = theta_wfs(Constant(1.0), C1, C2)
    x = np.ones((3, 2))
    assert np.allclose(theta.evaluate(x), 1.0)
    assert np.allclose(theta_star.evaluate(x), 1.0)


def test_sum_conditioned_weights_of_constant():
    A, B = random_pd(3, 5), random_pd(3, 6)
    psi, chi, gamma = sum_conditioned_wfs(Constant(2.0), A, B)
    x = np.zeros((2, 3))
    for w in (psi, chi, gamma):
        assert w.dim == 3
        assert np.allclose(w.evaluate(x), 2.0)
    with pytest.raises(DimensionError):
        sum_conditioned_wfs(Constant(1.0, dim=4), A, B)


def test_sum_conditioned_weights_of_scalar_tilt():
    one, two = PDMatrix([[1.0]]), PDMatrix([[2.0]])
    psi, chi, gamma = sum_conditioned_wfs(ExpTilt([1.0]), one, two)
    assert eval_wf(psi, [0.4]) == pytest.approx(math.exp(0.4))
    assert eval_wf(chi, [0.4]) == pytest.approx(math.exp(1.4))
    assert eval_wf(gamma, [0.4]) == pytest.approx(math.exp(0.9))
    # with d = 1 the weight sees only the sum, so swapping A and B swaps χ and γ
    _, chi_swapped, gamma_swapped = sum_conditioned_wfs(ExpTilt([1.0]), two, one)
    assert eval_wf(chi_swapped, [0.4]) == pytest.approx(eval_wf(gamma, [0.4]))
    assert eval_wf(gamma_swapped, [0.4]) == pytest.approx(eval_wf(chi, [0.4]))


def test_sum_conditioned_weight_by_monte_carlo():
    one = PDMatrix([[1.0]])
    phi = as_host_routine(ExpTilt([1.0]), 1)
    _, chi, _ = sum_conditioned_wfs(phi, one, one, SampleSpec(n_samples=100000, seed=2))
    est = chi.estimate_at([0.0])
    assert abs(est.value - math.exp(0.5)) <= 4.0 * est.stderr
