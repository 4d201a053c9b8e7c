import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from gem.crossval import CvScheme
from gem.enet import (
    BINOMIAL,
    classify_enet,
    cv_enet,
    fit_enet_path,
    lambda_grid,
    nonzero_set,
    predict_enet,
)
from gem.errors import ModelError
from gem.oracles import kkt_check, ols_oracle


def _gaussian(seed: int, n: int = 40, N: int = 30):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, N))
    beta = np.zeros(N)
    beta[:4] = (2.0, -1.5, 1.0, 0.5)
    return X, X @ beta + rng.standard_normal(n)


def _binomial(seed: int = 0, n: int = 30, N: int = 60):
    rng = np.random.default_rng(seed)
    labels = np.array(["ctrl"] * (n // 2) + ["case"] * (n - n // 2), dtype=object)
    X = rng.standard_normal((n, N))
    X[:, :3] += np.where(labels == "case", 1.5, -1.5)[:, None]
    return X, labels


def test_lambda_max_gives_an_empty_model():
    X, y = _gaussian(0)
    path = fit_enet_path(X, y, alpha=0.5, nlambda=10)
    assert np.all(path.coefs[0] == 0.0)
    assert path.intercepts[0] == pytest.approx(y.mean())
    assert path.df[-1] > 0
    assert np.all(np.diff(path.lambdas) < 0)


def test_lambda_grid_ratio_depends_on_shape():
    assert lambda_grid(1.0, 5, 50, 10)[-1] == pytest.approx(1e-4)
    assert lambda_grid(1.0, 5, 10, 50)[-1] == pytest.approx(1e-2)
    assert lambda_grid(2.0, 3, 10, 50, lambda_min_ratio=0.5)[-1] == pytest.approx(1.0)
    with pytest.raises(ModelError):
        lambda_grid(0.0, 5, 10, 5)


@pytest.mark.parametrize("seed", range(5))
def test_every_path_point_satisfies_kkt(seed):
    X, y = _gaussian(seed)
    path = fit_enet_path(X, y, alpha=0.5)
    for k, lam in enumerate(path.lambdas):
        assert kkt_check(X, y, (path.intercepts[k], path.coefs[k]), lam, 0.5) <= 1e-6


def test_binomial_path_satisfies_kkt():
    X, labels = _binomial(1)
    path = fit_enet_path(X, labels, alpha=0.5, family=BINOMIAL, nlambda=20, lambda_min_ratio=0.05)
    for k, lam in enumerate(path.lambdas):
        assert kkt_check(X, labels, (path.intercepts[k], path.coefs[k]), lam, 0.5, BINOMIAL) <= 1e-5


def test_kkt_check_notices_perturbed_coefficients():
    X, y = _gaussian(3)
    path = fit_enet_path(X, y, alpha=0.5, nlambda=20)
    k = 10
    coefs = np.array(path.coefs[k])
    coefs[0] += 0.1
    assert kkt_check(X, y, (path.intercepts[k], coefs), path.lambdas[k], 0.5) > 1e-3


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_vanishing_lambda_reaches_least_squares(alpha):
    rng = np.random.default_rng(5)
    X = rng.standard_normal((20, 5))
    y = X @ np.array([1.0, -1.0, 0.5, 0.0, 2.0]) + 3.0 + 0.3 * rng.standard_normal(20)
    path = fit_enet_path(X, y, alpha=alpha, lambdas=[1e-10])
    reference = ols_oracle(np.column_stack([np.ones(20), X]), y)
    assert path.intercepts[0] == pytest.approx(reference[0], abs=1e-6)
    assert_allclose(path.coefs[0], reference[1:], atol=1e-6)


def test_duplicated_columns_share_their_coefficient():
    X, y = _gaussian(6, n=30, N=8)
    doubled = fit_enet_path(np.column_stack([X, X[:, 0]]), y, alpha=0.5, lambdas=[0.5, 0.1])
    assert doubled.coefs[1, 0] == pytest.approx(doubled.coefs[1, 8], abs=1e-8)
    ridge_like = fit_enet_path(X, y, alpha=0.0, lambdas=[0.5])
    assert np.count_nonzero(ridge_like.coefs[0]) == 8


def test_constant_columns_stay_at_zero():
    X, y = _gaussian(7, n=30, N=6)
    X[:, 2] = 5.0
    path = fit_enet_path(X, y, alpha=1.0, nlambda=10)
    assert np.all(path.coefs[:, 2] == 0.0)


def test_binomial_classification_and_cross_validation():
    X, labels = _binomial(2)
    path = cv_enet(X, labels, alpha=0.5, family=BINOMIAL, scheme=CvScheme.parse("loo"), nlambda=30)
    assert path.n_folds == 30
    assert path.levels == ("case", "ctrl")
    assert path.cv_error.shape == (30,)
    best = path.index(path.lambda_opt)
    assert path.cv_error[best] <= 0.10
    chosen = {j for j, _ in nonzero_set(path, path.lambda_opt)}
    assert len(chosen) == path.df[best]
    assert chosen & {0, 1, 2}

    prob = predict_enet(path, X)
    assert np.all((prob > 0) & (prob < 1))
    assert (classify_enet(path, X) == labels).mean() >= 0.9


def test_lambda_opt_is_the_largest_within_one_se():
    X, y = _gaussian(8)
    path = cv_enet(X, y, alpha=0.5, scheme=CvScheme.parse("kfold:5", seed=3), nlambda=25)
    best = path.index(path.lambda_opt)
    minimum = int(np.argmin(path.cv_error))
    assert best <= minimum
    assert path.cv_error[best] <= path.cv_error[minimum] + path.cv_se[minimum]
    if best > 0:
        assert path.cv_error[best - 1] > path.cv_error[minimum] + path.cv_se[minimum]


def test_nonzero_set_needs_a_grid_lambda():
    X, y = _gaussian(9)
    path = fit_enet_path(X, y, nlambda=10, names=[f"v{j}" for j in range(30)])
    lam = path.lambdas[5]
    assert all(name == f"v{j}" for j, name in nonzero_set(path, lam))
    with pytest.raises(ModelError, match="not on the fitted grid"):
        nonzero_set(path, lam * 1.01)


def test_bad_inputs():
    X, y = _gaussian(10)
    with pytest.raises(ModelError, match="exactly 2 classes"):
        fit_enet_path(X, ["a"] * 40, family=BINOMIAL)
    with pytest.raises(ModelError):
        fit_enet_path(X, y, alpha=1.5)
    with pytest.raises(ModelError):
        fit_enet_path(X, y, family="poisson")
    with pytest.raises(ModelError):
        fit_enet_path(X, np.ones(40))
    with pytest.raises(ModelError):
        classify_enet(fit_enet_path(X, y, nlambda=5), X)


def test_refit_on_the_active_set_is_a_fixed_point():
    """Refitting with only the selected variables reproduces their coefficients
    when the penalty is pure lasso and columns are orthogonal."""
    rng = np.random.default_rng(11)
    A = rng.standard_normal((50, 6))
    Q, _ = np.linalg.qr(A - A.mean(axis=0))
    X = Q * np.sqrt(50)
    y = X @ np.array([1.0, -0.8, 0.0, 0.0, 0.3, 0.0]) + 0.1 * rng.standard_normal(50)
    lam = 0.2
    full = fit_enet_path(X, y, alpha=1.0, lambdas=[lam])
    chosen = [j for j, _ in nonzero_set(full, lam)]
    refit = fit_enet_path(X[:, chosen], y, alpha=1.0, lambdas=[lam])
    assert_allclose(refit.coefs[0], full.coefs[0, chosen], atol=1e-8)


def test_binomial_loo_on_a_wide_problem_finishes_quickly():
    fit_enet_path(*_binomial(2, n=10, N=5), alpha=0.5, family=BINOMIAL, nlambda=3)
    X, labels = _binomial(1, n=50, N=100)
    start = time.perf_counter()
    path = cv_enet(X, labels, 0.5, BINOMIAL, CvScheme.parse("loo"))
    assert time.perf_counter() - start < 10.0
    assert path.n_folds == 50
    assert path.cv_error.shape == (100,)


def test_pure_noise_keeps_lambda_opt_near_lambda_max():
    labels = np.array(["a"] * 20 + ["b"] * 20, dtype=object)
    near = 0
    for seed in range(20):
        X = np.random.default_rng(100 + seed).standard_normal((40, 60))
        path = cv_enet(X, labels, 0.5, BINOMIAL, CvScheme.parse("kfold:5", seed=seed), nlambda=20)
        near += path.index(path.lambda_opt) <= 3
    assert near >= 5
