import math

import numpy as np
import pytest
from scipy.linalg import solve_triangular
from scipy.stats import multivariate_normal

from vecchia.core import (
    LOG_2PI,
    FactorizationError,
    LikelihoodPlan,
    RankDeficientError,
    build_gamma_tilde,
    dense_loglik,
    loglik,
    profile_beta,
    vecchia_loglik,
)
from vecchia.covariance import CovarianceModel, build_cov_matrix
from vecchia.grouping import BlockPartition, group_blocks, lossless_partition
from vecchia.locations import LocationSet
from vecchia.neighbors import NeighborSets, full_conditioning, nn_ordered_fast
from vecchia.ordering import Permutation, order_points


def setup(rng, n=60, d=2, nu=0.5, nugget=0.0, scheme="ammd", m=6):
    locs = LocationSet(rng.uniform(size=(n, d)))
    model = CovarianceModel(variance=1.3, range=0.25, smoothness=nu, nugget=nugget)
    perm = order_points(locs, scheme, seed=1)
    sets = nn_ordered_fast(locs, perm, m)
    return locs, model, perm, sets


def rowwise_oracle(model, locs, perm, sets):
    """Each row from its own conditional regression, solved densely."""
    S = build_cov_matrix(model, locs.subset(perm.forward))
    n = S.shape[0]
    G = np.zeros((n, n))
    for i in range(n):
        J = sets[i][:-1]
        if J.size:
            w = np.linalg.solve(S[np.ix_(J, J)], S[J, i])
            v = S[i, i] - S[i, J] @ w
        else:
            w, v = np.zeros(0), S[i, i]
        G[i, i] = 1 / math.sqrt(v)
        G[i, J] = -w / math.sqrt(v)
    return G


def test_scalar_factor():
    model = CovarianceModel(variance=2.0, nugget=0.25)
    locs = LocationSet(np.array([[0.3, 0.4]]))
    G = build_gamma_tilde(model, locs, Permutation.identity(1), full_conditioning(1))
    np.testing.assert_allclose(G.to_dense(), [[1 / math.sqrt(2.25)]], rtol=1e-15)


def test_scalar_loglik_at_mean():
    model = CovarianceModel(variance=2.0, nugget=0.25, mean=0.7)
    locs = LocationSet(np.array([[0.3, 0.4]]))
    res = vecchia_loglik(model, locs, (Permutation.identity(1), full_conditioning(1)), [0.7])
    assert res.loglik == pytest.approx(-0.5 * LOG_2PI - 0.5 * math.log(2.25), rel=1e-15)


@pytest.mark.parametrize("nu", [0.5, 1.0, 1.5])
def test_full_conditioning_equals_dense_inverse_cholesky(backend, rng, nu):
    locs, model, perm, _ = setup(rng, n=50, nu=nu, nugget=1e-4)
    G = build_gamma_tilde(model, locs, perm, full_conditioning(50))
    L = np.linalg.cholesky(build_cov_matrix(model, locs.subset(perm.forward)))
    np.testing.assert_allclose(G.to_dense(), np.linalg.inv(L), rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("grouped", [False, True])
@pytest.mark.parametrize("nu", [0.5, 1.3])
def test_factor_rows_match_conditional_regressions(backend, rng, nu, grouped):
    locs, model, perm, sets = setup(rng, nu=nu, nugget=0.01)
    part = group_blocks(sets) if grouped else sets
    G = build_gamma_tilde(model, locs, perm, part)
    ref_sets = part.expanded() if grouped else sets
    np.testing.assert_allclose(G.to_dense(), rowwise_oracle(model, locs, perm, ref_sets),
                               rtol=1e-9, atol=1e-11)


def test_singleton_blocks_bit_identical(rng):
    locs, model, perm, sets = setup(rng)
    a = build_gamma_tilde(model, locs, perm, sets)
    b = build_gamma_tilde(model, locs, perm, blocks=BlockPartition.singletons(sets))
    np.testing.assert_array_equal(a.data, b.data)
    np.testing.assert_array_equal(a.indices, b.indices)


def test_lossless_partition_same_factor(rng):
    locs, model, perm, _ = setup(rng, n=40)
    sets = full_conditioning(40)
    a = build_gamma_tilde(model, locs, perm, sets)
    b = build_gamma_tilde(model, locs, perm, lossless_partition(sets))
    np.testing.assert_allclose(a.data, b.data, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("nu", [0.5, 1.0, 1.5])
def test_full_conditioning_loglik_equals_dense(backend, rng, d, nu):
    locs, model, perm, _ = setup(rng, n=70, d=d, nu=nu, nugget=1e-3)
    y = rng.standard_normal(70)
    exact = multivariate_normal(np.zeros(70), build_cov_matrix(model, locs)).logpdf(y)
    plan = LikelihoodPlan.build(perm, lossless_partition(full_conditioning(70)))
    assert vecchia_loglik(model, locs, plan, y).loglik == pytest.approx(exact, rel=1e-8)
    G = build_gamma_tilde(model, locs, perm, full_conditioning(70))
    assert loglik(G, y) == pytest.approx(exact, rel=1e-8)
    assert dense_loglik(model, locs, y) == pytest.approx(exact, rel=1e-10)


def test_exponential_1d_sorted_single_neighbor_exact(rng):
    x = np.sort(rng.uniform(size=80))
    locs = LocationSet(x[:, None])
    model = CovarianceModel(variance=1.0, range=0.1, smoothness=0.5)
    perm = order_points(locs, "coord")
    sets = nn_ordered_fast(locs, perm, 1)
    y = rng.standard_normal(80)
    ll = vecchia_loglik(model, locs, (perm, sets), y).loglik
    assert ll == pytest.approx(dense_loglik(model, locs, y), rel=1e-10)


@pytest.mark.parametrize("grouped", [False, True])
def test_factor_and_direct_loglik_agree(backend, rng, grouped):
    locs, model, perm, sets = setup(rng, n=120, nugget=0.05)
    part = group_blocks(sets) if grouped else sets
    y = rng.standard_normal(120) + 0.3
    model = model.replace(mean=0.3)
    G = build_gamma_tilde(model, locs, perm, part)
    direct = vecchia_loglik(model, locs, (perm, part), y).loglik
    assert direct == pytest.approx(loglik(G, y, mean=0.3), rel=1e-12)


def test_decorrelation_moments(rng):
    locs, model, perm, sets = setup(rng, n=80, nugget=0.01)
    G = build_gamma_tilde(model, locs, perm, sets).to_dense()
    S = build_cov_matrix(model, locs.subset(perm.forward))
    V = G @ S @ G.T
    np.testing.assert_allclose(np.diag(V), 1.0, rtol=1e-10)
    assert np.trace(G.T @ G @ S) == pytest.approx(80, rel=1e-10)


def test_diagonal_monotone_in_nested_sets(rng):
    locs, model, perm, _ = setup(rng, n=100)
    d_small = build_gamma_tilde(model, locs, perm, nn_ordered_fast(locs, perm, 3)).diag
    d_big = build_gamma_tilde(model, locs, perm, nn_ordered_fast(locs, perm, 9)).diag
    assert np.all(d_small <= d_big * (1 + 1e-12))


def test_grouped_equals_ungrouped_when_sets_match(rng):
    locs, model, perm, sets = setup(rng, n=90)
    part = lossless_partition(sets)
    y = rng.standard_normal(90)
    a = vecchia_loglik(model, locs, (perm, sets), y).loglik
    b = vecchia_loglik(model, locs, (perm, part), y).loglik
    assert a == pytest.approx(b, rel=1e-12)


def test_profile_beta_gls(rng):
    locs, model, perm, _ = setup(rng, n=60, nugget=0.01)
    y = rng.standard_normal(60) + 2.0
    X = np.ones((60, 1))
    S = build_cov_matrix(model, locs)
    Si = np.linalg.inv(S)
    gls = (X.T @ Si @ y) / (X.T @ Si @ X)
    G = build_gamma_tilde(model, locs, perm, full_conditioning(60))
    beta, ll = profile_beta(G, X, y)
    np.testing.assert_allclose(beta, gls.ravel(), rtol=1e-9)
    res = vecchia_loglik(model, locs, (perm, lossless_partition(full_conditioning(60))), y, X=X)
    np.testing.assert_allclose(res.beta, gls.ravel(), rtol=1e-9)
    assert res.loglik == pytest.approx(ll, rel=1e-10)
    assert ll == pytest.approx(dense_loglik(model, locs, y, X=X, beta=beta), rel=1e-9)


def test_profile_beta_exact_fit(rng):
    locs, model, perm, sets = setup(rng, n=50)
    X = np.column_stack([np.ones(50), locs.coords[:, 0]])
    beta0 = np.array([1.5, -2.0])
    y = X @ beta0
    res = vecchia_loglik(model, locs, (perm, sets), y, X=X)
    np.testing.assert_allclose(res.beta, beta0, rtol=1e-10)
    G = build_gamma_tilde(model, locs, perm, sets)
    assert res.loglik == pytest.approx(-25 * LOG_2PI + G.logdet(), rel=1e-10)


def test_profile_beta_identity_factor_is_ols(rng):
    from vecchia.core import SparseInverseCholesky

    n = 30
    G = SparseInverseCholesky(np.arange(n + 1), np.arange(n), np.ones(n), Permutation.identity(n))
    X = np.column_stack([np.ones(n), rng.standard_normal(n)])
    y = rng.standard_normal(n)
    beta, _ = profile_beta(G, X, y)
    np.testing.assert_allclose(beta, np.linalg.lstsq(X, y, rcond=None)[0], rtol=1e-12)


def test_rank_deficient_design(rng):
    locs, model, perm, sets = setup(rng, n=40)
    X = np.column_stack([np.ones(40), np.ones(40)])
    with pytest.raises(RankDeficientError):
        vecchia_loglik(model, locs, (perm, sets), rng.standard_normal(40), X=X)


def test_coincident_points_raise_factorization_error():
    locs = LocationSet(np.array([[0.1, 0.1], [0.5, 0.5], [0.5, 0.5]]))
    model = CovarianceModel()
    perm = Permutation.identity(3)
    with pytest.raises(FactorizationError) as info:
        build_gamma_tilde(model, locs, perm, full_conditioning(3))
    assert "nugget" in str(info.value)
    with pytest.raises(FactorizationError):
        vecchia_loglik(model, locs, (perm, full_conditioning(3)), np.zeros(3))
    # a little jitter fixes it
    build_gamma_tilde(model, locs, perm, full_conditioning(3), jitter=1e-8)


def test_forward_solve_matches_dense(backend, rng):
    locs, model, perm, sets = setup(rng, n=200, nugget=0.01)
    G = build_gamma_tilde(model, locs, perm, group_blocks(sets))
    B = rng.standard_normal((200, 3))
    got = G.solve(B)
    ref = solve_triangular(G.to_dense(), B, lower=True)
    assert np.max(np.abs(got - ref)) <= 1e-10
    np.testing.assert_allclose(G.solve(B[:, 0]), ref[:, 0], atol=1e-10)


def test_matvec_matches_dense(rng):
    locs, model, perm, sets = setup(rng, n=50)
    G = build_gamma_tilde(model, locs, perm, sets)
    v = rng.standard_normal(50)
    np.testing.assert_allclose(G.matvec(v), G.to_dense() @ v, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(G.unpermute(G.permute(v)), v)


def test_sets_roundtrip(rng):
    locs, model, perm, sets = setup(rng, n=30)
    assert build_gamma_tilde(model, locs, perm, sets).sets().same_sets(sets)


def test_spacetime_full_conditioning(rng):
    locs = LocationSet(rng.uniform(size=(40, 2)), rng.uniform(0, 3, 40))
    model = CovarianceModel(variance=1.0, range=0.3, smoothness=0.8, nugget=0.01,
                            family="matern-spacetime", time_range=1.5)
    perm = order_points(locs, "random", seed=2)
    y = rng.standard_normal(40)
    plan = (perm, lossless_partition(full_conditioning(40)))
    exact = multivariate_normal(np.zeros(40), build_cov_matrix(model, locs)).logpdf(y)
    assert vecchia_loglik(model, locs, plan, y).loglik == pytest.approx(exact, rel=1e-9)


def test_length_mismatch(rng):
    locs, model, perm, sets = setup(rng, n=20)
    with pytest.raises(ValueError):
        vecchia_loglik(model, locs, (perm, sets), np.zeros(19))


def test_threads_give_identical_results(rng):
    locs, model, perm, sets = setup(rng, n=300)
    part = group_blocks(sets)
    y = rng.standard_normal(300)
    a = vecchia_loglik(model, locs, (perm, part), y, threads=1).loglik
    b = vecchia_loglik(model, locs, (perm, part), y, threads=4).loglik
    assert a == b


def test_neighbor_sets_from_custom_rows(rng):
    locs, model, _, _ = setup(rng, n=5)
    sets = NeighborSets.from_rows([[], [0], [0], [1, 2], [0, 3]])
    perm = Permutation.identity(5)
    G = build_gamma_tilde(model, locs, perm, sets)
    np.testing.assert_allclose(G.to_dense(), rowwise_oracle(model, locs, perm, sets), rtol=1e-12,
                               atol=1e-14)
