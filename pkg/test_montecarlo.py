import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from src.core.exceptions import IntegrandError
from src.linalg.pd_matrix import PDMatrix
from src.montecarlo.engine import (
    Direction, Estimate, SampleSpec, Verdict, aggregate_verdicts, derive_seed, expect, expect_many,
    mixture_contrast, sample_gaussian, signed_verdict,
)

ONE = PDMatrix([[1.0]])


def test_expectation_of_exponential_matches_quadrature():
    oracle, _ = integrate.quad(lambda x: math.exp(x) * stats.norm.pdf(x), -np.inf, np.inf)
    assert oracle == pytest.approx(math.exp(0.5), rel=1e-9)
    est = expect(lambda x: np.exp(x[:, 0]), ONE, SampleSpec(n_samples=100000, seed=1))
    assert abs(est.value - oracle) <= 4.0 * est.stderr
    assert est.n == 100000


def test_same_spec_same_estimate():
    spec = SampleSpec(n_samples=20000, seed=42, chunk_size=1000)
    C = PDMatrix([[2.0, 0.3], [0.3, 1.0]])
    g = lambda x: x[:, 0] ** 2 + x[:, 1]
    assert expect(g, C, spec) == expect(g, C, spec)
    assert expect(g, C, spec) != expect(g, C, spec.derive(1))


def test_worker_count_does_not_change_results():
    C = PDMatrix([[1.0, 0.2], [0.2, 1.0]])
    g = lambda x, _aux: np.column_stack([x[:, 0] * x[:, 1], np.exp(0.1 * x[:, 0])])
    serial = expect_many(g, C, SampleSpec(n_samples=30000, seed=5, chunk_size=4096, workers=1))
    threaded = expect_many(g, C, SampleSpec(n_samples=30000, seed=5, chunk_size=4096, workers=4))
    assert serial == threaded


def test_sampled_covariance():
    C = PDMatrix([[2.0, 0.5], [0.5, 1.0]])
    chunks = list(sample_gaussian(C, SampleSpec(n_samples=50000, seed=9, chunk_size=10000)))
    assert len(chunks) == 5
    x = np.vstack(chunks)
    assert np.allclose(np.cov(x.T), C.entries, atol=0.08)


def test_chunk_sizes_cover_every_sample():
    assert SampleSpec(n_samples=10, chunk_size=4).chunk_sizes() == [4, 4, 2]
    with pytest.raises(ValueError):
        SampleSpec(n_samples=0)


def test_derived_seeds_are_stable_and_distinct():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    assert len({derive_seed(0, k) for k in range(50)}) == 50
    assert derive_seed(0, 1) != derive_seed(1, 1)


def test_non_finite_integrand_raises():
    with pytest.raises(IntegrandError, match="not finite"):
        expect(lambda x: np.full(x.shape[0], np.inf), ONE, SampleSpec(n_samples=100))


def test_mixture_contrast_second_moment():
    two = PDMatrix([[2.0]])
    est = mixture_contrast(lambda x: x[:, 0] ** 2, [(1.0, two)], [(1.0, ONE)],
                           SampleSpec(n_samples=100000, seed=3))[0]
    assert abs(est.value - 1.0) <= 4.0 * est.stderr


def test_mixture_contrast_against_quadrature():
    mix_a = [(0.3, PDMatrix([[0.5]])), (0.7, PDMatrix([[3.0]]))]
    mix_b = [(1.0, PDMatrix([[2.25]]))]

    def density(mix, x):
        return sum(w * stats.norm.pdf(x, scale=math.sqrt(c.entries[0, 0])) for w, c in mix)

    oracle, _ = integrate.quad(lambda x: math.exp(0.4 * x) * (density(mix_a, x) - density(mix_b, x)),
                               -np.inf, np.inf)
    est = mixture_contrast(lambda x: np.exp(0.4 * x[:, 0]), mix_a, mix_b,
                           SampleSpec(n_samples=200000, seed=8))[0]
    assert abs(est.value - oracle) <= 4.0 * est.stderr + 1e-9


def test_combined_stderr_is_root_sum_square():
    a = Estimate(1.0, 0.3, 10)
    b = Estimate(2.0, 0.4, 10)
    total = Estimate.combine([(1.0, a), (-2.0, b)])
    assert total.value == pytest.approx(-3.0)
    assert total.stderr == pytest.approx(math.sqrt(0.09 + 0.64))
    assert (a * -2.0).stderr == pytest.approx(0.6)
    assert Estimate.exact(1.5).is_exact


@pytest.mark.parametrize("value, stderr, direction, expected", [
    (1.0, 0.1, Direction.GE, Verdict.HOLDS),
    (-1.0, 0.1, Direction.GE, Verdict.FAILS),
    (0.2, 0.1, Direction.GE, Verdict.INCONCLUSIVE),
    (-0.05, 0.1, Direction.GE, Verdict.INCONCLUSIVE),
    (-1.0, 0.1, Direction.LE, Verdict.HOLDS),
    (0.3, 0.1, Direction.EQ, Verdict.HOLDS),
    (0.5, 0.1, Direction.EQ, Verdict.FAILS),
    (-1e-12, 0.0, Direction.GE, Verdict.HOLDS),
    (-1e-6, 0.0, Direction.GE, Verdict.FAILS),
])
def test_signed_verdicts(value, stderr, direction, expected):
    assert signed_verdict(Estimate(value, stderr, 100), direction, 4.0, 1e-9) == expected


def test_aggregate_verdicts():
    assert aggregate_verdicts([Verdict.HOLDS, Verdict.HOLDS]) == Verdict.HOLDS
    assert aggregate_verdicts([Verdict.HOLDS, Verdict.INCONCLUSIVE]) == Verdict.INCONCLUSIVE
    assert aggregate_verdicts([Verdict.INCONCLUSIVE, Verdict.FAILS]) == Verdict.FAILS


@pytest.mark.parametrize("seed", range(20))
def test_doubling_samples_shrinks_stderr(seed):
    C = PDMatrix([[1.0, 0.3], [0.3, 2.0]])
    g = lambda x: np.exp(0.2 * x[:, 0]) + x[:, 1] ** 2
    single = expect(g, C, SampleSpec(n_samples=20000, seed=seed))
    double = expect(g, C, SampleSpec(n_samples=40000, seed=seed))
    assert 0.6 <= double.stderr / single.stderr <= 0.8


FLIPPED = {Verdict.HOLDS: Verdict.FAILS, Verdict.FAILS: Verdict.HOLDS,
           Verdict.INCONCLUSIVE: Verdict.INCONCLUSIVE}


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-2.0, max_value=2.0), st.floats(min_value=1e-3, max_value=1.0),
       st.sampled_from([Direction.GE, Direction.LE]))
def test_verdict_is_antisymmetric(value, stderr, direction):
    other = Direction.LE if direction == Direction.GE else Direction.GE
    verdict = signed_verdict(Estimate(value, stderr, 100), direction, 4.0)
    assert signed_verdict(Estimate(-value, stderr, 100), direction, 4.0) == FLIPPED[verdict]
    assert signed_verdict(Estimate(value, stderr, 100), other, 4.0) == FLIPPED[verdict]
    assert signed_verdict(Estimate(-value, stderr, 100), other, 4.0) == verdict


def test_equality_verdict_has_two_outcomes():
    assert signed_verdict(Estimate(0.39, 0.1, 100), Direction.EQ, 4.0) == Verdict.HOLDS
    assert signed_verdict(Estimate(0.41, 0.1, 100), Direction.EQ, 4.0) == Verdict.FAILS
    assert signed_verdict(Estimate(0.0, 0.0, 0), Direction.EQ, 4.0) == Verdict.HOLDS
