import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.exceptions import DimensionError, NotPositiveDefiniteError, SingularUpdateError
from src.linalg.pd_matrix import (
    IndexSet, PDMatrix, RankOneUpdate, complete_covariance, conditional_law, conditional_params,
    is_toeplitz, random_cyclic_toeplitz, random_pd, sherman_morrison_inverse, submatrix,
    subsets_of_size, toeplitz, update_trace,
)

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)
dims = st.integers(min_value=1, max_value=8)


def test_rejects_asymmetric_and_indefinite():
    with pytest.raises(NotPositiveDefiniteError):
        PDMatrix([[1.0, 0.2], [0.3, 1.0]])
    with pytest.raises(NotPositiveDefiniteError, match="not positive definite"):
        PDMatrix([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(DimensionError):
        PDMatrix(np.ones((2, 3)))


@settings(max_examples=40, deadline=None)
@given(dims, seeds)
def test_log_det_matches_slogdet(d, seed):
    C = random_pd(d, seed)
    sign, expected = np.linalg.slogdet(C.entries)
    assert sign > 0
    assert C.log_det() == pytest.approx(expected, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(dims, seeds)
def test_inverse_and_solve(d, seed):
    C = random_pd(d, seed)
    assert np.allclose(C.inverse @ C.entries, np.eye(d), atol=1e-8)
    b = np.arange(1.0, d + 1.0)
    assert np.allclose(C.entries @ C.solve(b), b, atol=1e-8)


def cofactor_det(a):
    if a.shape[0] == 1:
        return a[0, 0]
    return sum((-1) ** j * a[0, j] * cofactor_det(np.delete(a[1:], j, axis=1)) for j in range(a.shape[0]))


@pytest.mark.parametrize("d, seed", [(1, 0), (2, 5), (3, 11), (5, 2)])
def test_log_det_against_cofactor_expansion(d, seed):
    C = random_pd(d, seed)
    assert C.log_det() == pytest.approx(np.log(cofactor_det(C.entries)), abs=1e-10)


def test_inverse_against_power_iteration():
    C = random_pd(4, 9)
    v = np.ones(4)
    for _ in range(5000):
        v = C.inverse @ v
        v /= np.linalg.norm(v)
    largest = float(v @ C.inverse @ v)
    assert largest == pytest.approx(1.0 / np.linalg.eigvalsh(C.entries)[0], rel=1e-6)


def test_index_set_masks_and_complements():
    S = IndexSet(5, (1, 3, 4))
    assert S.mask == 0b01101
    assert IndexSet.from_mask(5, S.mask) == S
    assert S.complement().members == (2, 5)
    assert IndexSet.span(5, 2, 4).members == (2, 3, 4)
    assert IndexSet.span(5, 3, 2).members == ()
    assert S.label() == "{1,3,4}"
    with pytest.raises(DimensionError):
        IndexSet(3, (2, 1))
    with pytest.raises(DimensionError):
        IndexSet(3, (4,))


def test_subsets_of_size_counts():
    assert len(list(subsets_of_size(6, 3))) == 20
    assert [S.members for S in subsets_of_size(3, 2)] == [(1, 2), (1, 3), (2, 3)]


def test_submatrix_picks_principal_block():
    C = toeplitz([1.0, 0.5, 0.25])
    block = submatrix(C, IndexSet(3, (1, 3)))
    assert np.allclose(block.entries, [[1.0, 0.25], [0.25, 1.0]])
    with pytest.raises(DimensionError):
        submatrix(C, IndexSet(3, ()))


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=2, max_value=7), seeds)
def test_conditional_covariance_is_schur_complement(d, seed):
    C = random_pd(d, seed)
    given_set = IndexSet.span(d, 1, d // 2)
    M, K = conditional_law(C, given_set)
    r = given_set.complement().positions
    # the conditional covariance is the inverse of the precision block
    assert np.allclose(K.entries, np.linalg.inv(C.inverse[np.ix_(r, r)]), atol=1e-7)
    g = given_set.positions
    assert np.allclose(M @ C.entries[np.ix_(g, g)], C.entries[np.ix_(r, g)], atol=1e-8)


def test_conditional_params_block_split():
    C = PDMatrix([[2.0, 1.0], [1.0, 2.0]])
    D, K = conditional_params(C, 1)
    assert D[0, 0] == pytest.approx(0.5)
    assert K.entries[0, 0] == pytest.approx(1.5)
    with pytest.raises(DimensionError):
        conditional_params(C, 2)


def test_complete_covariance_restores_model():
    C = random_pd(5, 11)
    S = IndexSet(5, (2, 4))
    completed = complete_covariance(C, S, submatrix(C, S).entries)
    assert np.allclose(completed, C.entries, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(dims, seeds, st.sampled_from([1, -1]))
def test_sherman_morrison_matches_dense_inverse(d, seed, sign):
    G = random_pd(d, seed)
    v = np.random.default_rng(seed).standard_normal(d) * 0.3
    E = RankOneUpdate(v + 0.01, sign)
    g = update_trace(G, E)
    if abs(1.0 + g) < 1e-3:
        return
    expected = np.linalg.inv(G.entries + E.dense())
    assert np.allclose(sherman_morrison_inverse(G, E), expected, rtol=1e-6, atol=1e-6)


def test_singular_update_raises():
    with pytest.raises(SingularUpdateError, match="g = -1"):
        sherman_morrison_inverse(PDMatrix([[1.0]]), RankOneUpdate([1.0], -1))


def test_rank_one_from_matrix():
    v = np.array([1.0, -2.0, 0.5])
    E = RankOneUpdate.from_matrix(-np.outer(v, v))
    assert E.sign == -1
    assert np.allclose(E.dense(), -np.outer(v, v))
    with pytest.raises(DimensionError):
        RankOneUpdate.from_matrix(np.eye(2))


def test_toeplitz_constructors():
    T = toeplitz([1.0, 0.5, 0.25])
    assert is_toeplitz(T)
    assert not is_toeplitz(T, cyclic=True)
    cyc = random_cyclic_toeplitz(6, 3)
    assert is_toeplitz(cyc, cyclic=True)
    assert is_toeplitz(cyc)
    assert not is_toeplitz(random_pd(4, 0))


def test_json_round_trip_keeps_entries():
    C = random_pd(3, 5)
    assert PDMatrix.from_json(C.to_json()) == C
