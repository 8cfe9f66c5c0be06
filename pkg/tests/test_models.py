import numpy as np
import pytest
import scipy.sparse as sp

from implicitslim.errors import ParameterError, ShapeError
from implicitslim.extraction import ImplicitSlimParams, iterate_implicit_slim
from implicitslim.models import (
    MatrixFactorization,
    PLRec,
    compute_bias,
    fold_in_users,
    item_norm_vector,
    mf_item_update,
    mf_objective,
    mf_user_update,
    plrec_q_update,
)

from conftest import random_interactions


class TestComputeBias:
    def test_empty_matrix(self):
        np.testing.assert_array_equal(compute_bias(sp.csr_array((3, 4))),
                                      np.zeros(4))

    def test_all_ones(self):
        np.testing.assert_array_equal(compute_bias(sp.csr_array(np.ones((3, 2)))),
                                      np.array([1.0, 1.0]))

    def test_matches_column_mean_oracle(self, rng):
        X = random_interactions(rng, 50, 20, 0.2)
        np.testing.assert_allclose(compute_bias(X), X.toarray().mean(axis=0),
                                   atol=1e-15)


class TestMfUserUpdate:
    def test_empty_row_gives_zero_column(self, rng):
        dense = (rng.random((6, 10)) < 0.4).astype(float)
        dense[2] = 0.0
        Q = rng.standard_normal((3, 10))
        P = mf_user_update(sp.csr_array(dense), Q, None, 0.5)
        np.testing.assert_array_equal(P[:, 2], np.zeros(3))

    def test_identity_projector_recovers_row(self, rng):
        # Q selects the first L items; with no ridge the embedding is the
        # restriction of the user row.
        Q = np.hstack([np.eye(3), np.zeros((3, 7))])
        dense = (rng.random((5, 10)) < 0.5).astype(float)
        P = mf_user_update(sp.csr_array(dense), Q, None, 0.0)
        np.testing.assert_allclose(P, dense[:, :3].T, atol=1e-12)

    def test_gradient_oracle(self, rng):
        X = random_interactions(rng, 30, 15, 0.3)
        Q = rng.standard_normal((4, 15))
        bias = compute_bias(X)
        P = mf_user_update(X, Q, bias, 0.7)
        residual = X.toarray() - bias[None, :]
        grad = 2.0 * (Q @ Q.T @ P - Q @ residual.T) + 2.0 * 0.7 * P
        assert np.abs(grad).max() <= 1e-8


class TestMfItemUpdate:
    def test_huge_attachment_pins_to_target(self, rng):
        X = random_interactions(rng, 30, 15, 0.3)
        P = rng.standard_normal((4, 30))
        V = rng.standard_normal((4, 15))
        Q = mf_item_update(X, P, V, None, 0.0, 1e12)
        assert np.abs(Q - V).max() / np.abs(V).max() <= 1e-4

    def test_zero_attachment_is_plain_ridge(self, rng):
        X = random_interactions(rng, 30, 15, 0.3)
        P = rng.standard_normal((4, 30))
        Q = mf_item_update(X, P, None, None, 0.9, 0.0)
        oracle = np.linalg.solve(P @ P.T + 0.9 * np.eye(4), P @ X.toarray())
        np.testing.assert_allclose(Q, oracle, atol=1e-12)

    def test_gradient_oracle(self, rng):
        X = random_interactions(rng, 30, 15, 0.3)
        P = rng.standard_normal((4, 30))
        V = rng.standard_normal((4, 15))
        bias = compute_bias(X)
        Q = mf_item_update(X, P, V, bias, 0.5, 1.2)
        residual = X.toarray() - bias[None, :]
        grad = (2.0 * (P @ P.T @ Q - P @ residual)
                + 2.0 * 0.5 * Q + 2.0 * 1.2 * (Q - V))
        assert np.abs(grad).max() <= 1e-8

    def test_target_presence_must_match_strength(self, rng):
        X = random_interactions(rng, 10, 6, 0.5)
        P = rng.standard_normal((2, 10))
        with pytest.raises(ParameterError):
            mf_item_update(X, P, None, None, 0.1, 1.0)
        with pytest.raises(ParameterError):
            mf_item_update(X, P, rng.standard_normal((2, 6)), None, 0.1, 0.0)


class TestPlrecQUpdate:
    def test_zero_exponent_is_identity_normalization(self, rng):
        X = random_interactions(rng, 20, 8, 0.4)
        np.testing.assert_array_equal(item_norm_vector(X, 0.0), np.ones(8))

    def test_hand_case_single_latent(self):
        X = sp.csr_array(np.eye(4))
        w = np.full((1, 4), 0.5)  # unit row
        Q = plrec_q_update(X, w, None, 0.0, 0.3, 0.0)
        np.testing.assert_allclose(Q, w / 1.3, atol=1e-12)

    def test_gradient_oracle(self, rng):
        X = random_interactions(rng, 30, 12, 0.3)
        W = rng.standard_normal((4, 12))
        V = rng.standard_normal((4, 12))
        Q = plrec_q_update(X, W, V, 0.5, 0.4, 0.8)
        norm = item_norm_vector(X, 0.5)
        H = X.toarray() @ (W / norm[None, :]).T
        grad = (2.0 * (H.T @ H @ Q - H.T @ X.toarray())
                + 2.0 * 0.4 * Q + 2.0 * 0.8 * (Q - V))
        assert np.abs(grad).max() <= 1e-8

    def test_empty_column_normalizes_by_one(self, rng):
        dense = (rng.random((10, 5)) < 0.5).astype(float)
        dense[:, 3] = 0.0
        norm = item_norm_vector(sp.csr_array(dense), 1.0)
        assert norm[3] == 1.0


class TestMfObjective:
    def test_matches_dense_oracle(self, rng):
        X = random_interactions(rng, 25, 12, 0.3)
        P = rng.standard_normal((4, 25))
        Q = rng.standard_normal((4, 12))
        bias = compute_bias(X)
        dense = X.toarray()
        oracle = (np.linalg.norm(dense - P.T @ Q - np.outer(np.ones(25), bias)) ** 2
                  + 0.3 * np.linalg.norm(P) ** 2 + 0.7 * np.linalg.norm(Q) ** 2)
        value = mf_objective(X, P, Q, 0.3, 0.7, bias=bias)
        assert abs(value - oracle) <= 1e-8 * max(oracle, 1.0)


class TestMatrixFactorizationTraining:
    def test_vanilla_overfits_identity(self):
        X = sp.csr_array(np.eye(12))
        model = MatrixFactorization(latent_dim=12, r_p=1e-6, r_q=1e-6,
                                    max_iters=10, seed=0)
        model.fit(X)
        recon = model.P_.T @ model.Q_
        assert np.linalg.norm(np.eye(12) - recon) < 0.1

    def test_objective_non_increasing(self, rng):
        for seed in range(5):
            X = random_interactions(np.random.default_rng(seed), 40, 20, 0.2)
            model = MatrixFactorization(latent_dim=5, r_p=0.5, r_q=0.5,
                                        max_iters=8, seed=seed,
                                        track_objective=True)
            model.fit(X)
            history = model.objective_history_
            assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_init_only_setup_equals_iterated_extraction(self, rng):
        X = random_interactions(rng, 30, 12, 0.3)
        model = MatrixFactorization(latent_dim=4, setup="islim_init",
                                    lam=2.0, alpha=1.0, repeat=2, seed=5)
        model.fit(X)
        params = ImplicitSlimParams(lam=2.0, alpha=1.0, repeat=2)
        expected = iterate_implicit_slim(X, None, params, latent_dim=4, seed=5)
        np.testing.assert_array_equal(model.Q_, expected)

    def test_early_stopping_keeps_best_iterate(self, rng):
        X = random_interactions(rng, 60, 20, 0.3)
        fold = random_interactions(rng, 10, 20, 0.3)
        hold = random_interactions(rng, 10, 20, 0.2)
        model = MatrixFactorization(latent_dim=4, max_iters=15, seed=0)
        model.fit(X, validation=(fold, hold))
        assert model.best_score_ is not None
        assert 1 <= model.n_iters_ <= 15

    def test_unknown_setup_rejected(self, rng):
        X = random_interactions(rng, 10, 6, 0.5)
        with pytest.raises(ParameterError):
            MatrixFactorization(setup="bogus").fit(X)

    def test_init_reg_setup_trains(self, rng):
        X = random_interactions(rng, 40, 15, 0.3)
        model = MatrixFactorization(latent_dim=4, setup="islim_init_reg",
                                    lam=5.0, alpha=1.0, s_q=0.5, max_iters=3,
                                    seed=0, use_bias=True)
        model.fit(X)
        assert model.Q_.shape == (4, 15)
        assert model.bias_ is not None

    def test_slimlle_init_setup(self, rng):
        X = random_interactions(rng, 40, 15, 0.3)
        model = MatrixFactorization(latent_dim=4, setup="slimlle_init",
                                    lam=2.0, seed=0)
        model.fit(X)
        np.testing.assert_allclose(model.Q_ @ model.Q_.T / 15.0, np.eye(4),
                                   atol=1e-8)


class TestFoldIn:
    def test_training_users_reproduce_their_embeddings(self, rng):
        X = random_interactions(rng, 30, 15, 0.3)
        model = MatrixFactorization(latent_dim=4, max_iters=3, seed=0).fit(X)
        refolded = fold_in_users(X, model)
        np.testing.assert_allclose(refolded, model.P_, atol=1e-9)

    def test_single_row_matches_batch_column(self, rng):
        X = random_interactions(rng, 30, 15, 0.3)
        model = MatrixFactorization(latent_dim=4, max_iters=3, seed=0).fit(X)
        one = fold_in_users(X[[7]], model)
        np.testing.assert_allclose(one[:, 0], model.P_[:, 7], atol=1e-9)

    def test_empty_user_gives_zero_embedding(self, rng):
        X = random_interactions(rng, 30, 15, 0.3)
        model = MatrixFactorization(latent_dim=4, max_iters=3, seed=0).fit(X)
        emb = fold_in_users(sp.csr_array((1, 15)), model)
        np.testing.assert_array_equal(emb, np.zeros((4, 1)))

    def test_item_mismatch_rejected(self, rng):
        X = random_interactions(rng, 30, 15, 0.3)
        model = MatrixFactorization(latent_dim=4, max_iters=3, seed=0).fit(X)
        with pytest.raises(ShapeError):
            fold_in_users(sp.csr_array((2, 14)), model)

    def test_plrec_ridge_gradient_for_new_users(self, rng):
        # PLRec fold-in is a deterministic projection with training-time
        # normalizers; verify against the direct product.
        X = random_interactions(rng, 40, 15, 0.3)
        model = PLRec(latent_dim=4, norm_exponent=0.5, seed=0).fit(X)
        X_new = random_interactions(rng, 6, 15, 0.3)
        emb = fold_in_users(X_new, model)
        oracle = (X_new.toarray() @ (model.W_ / model.norm_[None, :]).T).T
        np.testing.assert_allclose(emb, oracle, atol=1e-12)


class TestPLRecTraining:
    def test_vanilla_near_exact_on_full_rank(self):
        X = sp.csr_array(np.eye(6))
        model = PLRec(latent_dim=6, r_q=1e-8, seed=0).fit(X)
        H = X.toarray() @ (model.W_ / model.norm_[None, :]).T
        assert np.linalg.norm(X.toarray() - H @ model.Q_) < 0.1

    def test_init_reg_projector_is_orthonormal(self, rng):
        X = random_interactions(rng, 40, 15, 0.3)
        model = PLRec(latent_dim=4, setup="islim_init_reg", lam=5.0,
                      alpha=1.0, s_q=0.5, max_iters=1, seed=0).fit(X)
        np.testing.assert_allclose(model.W_ @ model.W_.T, np.eye(4), atol=1e-9)

    def test_break_on_decrease_returns_best(self, rng):
        X = random_interactions(rng, 60, 20, 0.3)
        fold = random_interactions(rng, 10, 20, 0.3)
        hold = random_interactions(rng, 10, 20, 0.2)
        model = PLRec(latent_dim=4, setup="islim_init_reg", lam=5.0,
                      alpha=1.0, s_q=0.5, max_iters=10, seed=0)
        model.fit(X, validation=(fold, hold))
        assert model.best_score_ is not None
        # Refitting with max_iters = the stopping point reproduces W and Q.
        again = PLRec(latent_dim=4, setup="islim_init_reg", lam=5.0,
                      alpha=1.0, s_q=0.5, max_iters=model.n_iters_, seed=0)
        again.fit(X, validation=(fold, hold))
        np.testing.assert_allclose(model.Q_, again.Q_, atol=1e-12)

    def test_mf_only_setup_rejected(self, rng):
        X = random_interactions(rng, 10, 6, 0.5)
        with pytest.raises(ParameterError):
            PLRec(setup="islim_init").fit(X)
