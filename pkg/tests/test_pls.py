import numpy as np
import pytest
from numpy.testing import assert_allclose
from sklearn.cross_decomposition import PLSRegression

from gem.crossval import CvScheme
from gem.design import parse_formula
from gem.errors import ModelError
from gem.ingest import CATEGORICAL, CONTINUOUS, VariableSpec
from gem.model import er_matrix, fit_dataset
from gem.oracles import pls_oracle
from gem.pls import (
    MULTI_CLASS,
    TWO_CLASS,
    TargetCoding,
    classify,
    contrast_label,
    cross_validate,
    encode_target,
    fit_pls,
    fit_target,
    jackknife,
    majority_class_error,
    predict,
    predict_target,
    shave,
    smc_importance,
)
from gem.simulate import CovariateSpec, FactorSpec, PlantedEffect, SynthSpec, plant_effects


def _groups(n: int) -> VariableSpec:
    return VariableSpec("g", CATEGORICAL, np.array(["ctrl"] * (n // 2) + ["case"] * (n - n // 2), dtype=object))


def _planted(seed: int = 0, n: int = 20, N: int = 30, shift: float = 2.0):
    """Two classes separated on the first five columns."""
    variable = _groups(n)
    coding = encode_target(variable)
    X = np.random.default_rng(seed).standard_normal((n, N))
    X[:, :5] += shift * coding.dummy
    return X, coding


@pytest.mark.parametrize("seed", range(10))
def test_matches_textbook_pls(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((12, 8))
    y = np.where(rng.random(12) > 0.5, 1.0, -1.0)
    y[:2] = (-1.0, 1.0)
    model = fit_pls(X, y, 4)
    for a in range(1, 5):
        assert_allclose(model.coefficients[:, a - 1], pls_oracle(X, y, a), atol=1e-8)


def test_agrees_with_scikit_learn_predictions():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((25, 10))
    y = X[:, 0] - 0.5 * X[:, 3] + 0.1 * rng.standard_normal(25)
    Xnew = rng.standard_normal((5, 10))
    ours = predict(fit_pls(X, y, 3), Xnew)
    reference = PLSRegression(n_components=3, scale=False).fit(X, y).predict(Xnew).ravel()
    assert_allclose(ours, reference, atol=1e-8)


def test_full_rank_model_fits_exactly():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((10, 3))
    y = X @ np.array([1.0, -2.0, 0.5]) + 4.0
    model = fit_pls(X, y, 3)
    assert_allclose(model.coefficients[:, 2], [1.0, -2.0, 0.5], atol=1e-10)
    assert_allclose(predict(model, X), y, atol=1e-10)


def test_scores_orthogonal_and_explained_variance():
    X, coding = _planted(1)
    model = fit_pls(X, coding, 3)
    gram = model.scores.T @ model.scores
    assert_allclose(gram - np.diag(np.diag(gram)), 0.0, atol=1e-9)
    assert_allclose(np.linalg.norm(model.weights, axis=0), 1.0)
    assert np.all(model.explained_y >= 0)
    assert model.explained_y.sum() <= 1.0 + 1e-12
    assert model.explained_x.sum() <= 1.0 + 1e-12


@pytest.mark.parametrize("ncomp", [0, 20])
def test_component_count_checked(ncomp):
    X, coding = _planted()
    with pytest.raises(ModelError):
        fit_pls(X, coding, ncomp)


def test_two_class_coding_and_sign_rule():
    coding = encode_target(_groups(4))
    assert coding.kind == TWO_CLASS
    assert coding.levels == ("case", "ctrl")
    assert_allclose(coding.dummy[:, 0], [1, 1, -1, -1])
    labels = classify(np.array([[0.3], [-0.2], [0.0], [2.0]]), coding)
    assert list(labels) == ["ctrl", "case", "case", "ctrl"]


def test_multi_class_coding_and_argmax():
    variable = VariableSpec("g", CATEGORICAL, np.array(["b", "a", "c", "a", "b", "c"], dtype=object))
    coding = encode_target(variable)
    assert coding.kind == MULTI_CLASS
    assert coding.dummy.shape == (6, 3)
    assert_allclose(coding.dummy[0], [-1, 1, -1])
    labels = classify(np.array([[0.1, 0.5, -1.0], [1.0, 0.0, 0.2]]), coding)
    assert list(labels) == ["b", "a"]


def test_contrast_labels():
    assert contrast_label(encode_target(_groups(4))) == "ctrl vs case"
    multi = encode_target(VariableSpec("g", CATEGORICAL, np.array(["a", "b", "c"], dtype=object)))
    assert contrast_label(multi, 2) == "c vs rest"
    with pytest.raises(ModelError):
        contrast_label(encode_target(VariableSpec("age", CONTINUOUS, np.array([1.0, 2.0, 4.0]))))


def test_single_observed_level_rejected():
    variable = VariableSpec("g", CATEGORICAL, np.array(["x"] * 5, dtype=object), levels=("x", "y"))
    with pytest.raises(ModelError, match="single observed level"):
        encode_target(variable)


def test_continuous_target_is_centered_and_not_classified():
    coding = encode_target(VariableSpec("age", CONTINUOUS, np.array([1.0, 2.0, 6.0])))
    assert_allclose(coding.dummy[:, 0], [-2.0, -1.0, 3.0])
    with pytest.raises(ModelError):
        classify(coding.dummy, coding)


def test_majority_class_error():
    assert majority_class_error(["a", "a", "b"]) == pytest.approx(1 / 3)
    assert majority_class_error(encode_target(_groups(10))) == pytest.approx(0.5)


def test_loo_predictions_are_out_of_fold():
    X, coding = _planted(3)
    cv = cross_validate(X, coding, 2, CvScheme.parse("loo"))
    assert cv.n_segments == X.shape[0]
    assert cv.predictions.shape == (20, 2, 1)
    keep = np.arange(20) != 7
    refit = fit_pls(X[keep], coding.dummy[keep, 0], 2)
    for a in (1, 2):
        assert cv.predictions[7, a - 1, 0] == pytest.approx(predict(refit, X[[7]], a)[0], abs=1e-10)
    assert cv.classes.shape == (20, 2)
    assert cv.error[0] <= 0.1
    assert 1 <= cv.ncomp_selected <= 2


def test_strong_effect_is_classified_without_error():
    X, coding = _planted(14, n=24, N=50, shift=2.5)
    assert cross_validate(X, coding, 1).error[0] == 0.0


def test_pure_noise_error_is_near_the_majority_error():
    coding = encode_target(_groups(30))
    errors = [cross_validate(np.random.default_rng(seed).standard_normal((30, 60)), coding, 1).error[0] for seed in range(5)]
    assert abs(np.mean(errors) - majority_class_error(coding)) <= 0.15


def test_kfold_continuous_target_reports_rmse():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((24, 3))
    age = VariableSpec("age", CONTINUOUS, X[:, 0] * 3.0 + 40.0 + 0.01 * rng.standard_normal(24))
    cv = cross_validate(X, encode_target(age), 3, CvScheme.parse("kfold:4", seed=1))
    assert cv.n_segments == 4
    assert cv.classes is None
    assert cv.error[2] < 0.1
    assert cv.error[2] < cv.error[0]
    assert np.all(cv.se >= 0)


def test_class_missing_from_a_training_fold():
    labels = np.array(["a"] * 5 + ["b"] * 5 + ["c"], dtype=object)
    coding = encode_target(VariableSpec("g", CATEGORICAL, labels))
    X = np.random.default_rng(5).standard_normal((11, 6))
    cv = cross_validate(X, coding, 1)
    assert_allclose(cv.predictions[10, :, 2], -1.0)
    assert cv.classes[10, 0] != "c"


def test_multi_class_models_per_column():
    labels = np.repeat(np.array(["a", "b", "c"], dtype=object), 6)
    coding = encode_target(VariableSpec("g", CATEGORICAL, labels))
    X = np.random.default_rng(6).standard_normal((18, 9))
    X[:, 0] += 4.0 * (labels == "a")
    X[:, 1] += 4.0 * (labels == "b")
    models = fit_target(X, coding, 2)
    assert len(models) == 3
    assert (classify(predict_target(models, X), coding) == labels).mean() >= 0.9
    with pytest.raises(ModelError):
        fit_pls(X, coding, 2)


def test_jackknife_separates_planted_from_noise():
    X, coding = _planted(7, n=30)
    p = jackknife(X, coding, 2)
    assert p.shape == (30, 2)
    assert np.all((p >= 0) & (p <= 1))
    assert np.all(p[:5, 0] < 0.01)
    assert np.median(p[5:, 0]) > 0.05


def test_jackknife_is_calibrated_on_pure_noise():
    coding = encode_target(_groups(30))
    p = np.concatenate([jackknife(np.random.default_rng(seed).standard_normal((30, 200)), coding, 1)[:, 0] for seed in range(3)])
    assert 0.005 <= np.mean(p < 0.05) <= 0.15


def test_jackknife_invariant_to_target_sign():
    X, coding = _planted(8)
    flipped = TargetCoding(coding.kind, -coding.dummy, coding.levels, coding.labels)
    assert_allclose(jackknife(X, flipped, 2), jackknife(X, coding, 2), atol=1e-12)


def test_jackknife_needs_three_segments():
    X, coding = _planted(9)
    with pytest.raises(ModelError, match="at least 3 segments"):
        jackknife(X, coding, 1, CvScheme.parse("kfold:2"))


def test_smc_ranks_planted_variables_first():
    X, coding = _planted(10)
    X[:, 29] = 0.0
    model = fit_pls(X, coding, 2)
    importance = smc_importance(model, X, 2)
    assert importance[29] == 0.0
    assert importance[:5].min() > importance[5:].max()


def test_shaving_trace():
    X, coding = _planted(12)
    result = shave(X, coding, 2, fraction=0.2)
    cv = cross_validate(X, coding, 2)
    assert result.trace[0].error == pytest.approx(cv.error[1])
    assert list(result.sizes) == [30, 24, 19, 15, 12, 9, 7, 5, 4, 3]
    assert set(result.trace[-1].variables) <= set(range(5))
    assert result.errors[result.min_red] == result.errors.min()
    assert np.all(result.errors[: result.min_red] > result.errors.min())


def test_shaving_keeps_every_planted_variable():
    X, coding = _planted(13, n=20, N=50)
    result = shave(X, coding, 2)
    cv = cross_validate(X, coding, 2)
    assert result.trace[0].error == cv.error[1]
    assert set(range(5)) <= set(result.optimal_subset)


def test_shaving_options_checked():
    X, coding = _planted()
    with pytest.raises(ModelError):
        shave(X, coding, 2, fraction=1.0)
    with pytest.raises(ModelError):
        shave(X[:, :2], coding, 2)


def test_effect_removal_rescues_classification():
    """Age drives every response; disease shifts 20 of 200. Removing age first
    makes the disease classes separable."""
    spec = SynthSpec(
        factors=(FactorSpec("disease", 2),),
        replicates=20,
        n_responses=200,
        seed=2024,
        covariates=(CovariateSpec("age", 20.0, 70.0),),
        effects=(PlantedEffect("disease", 1.0, (0, 20)), PlantedEffect("age", 0.38)),
    )
    d = plant_effects(spec).dataset
    fit = fit_dataset(parse_formula("y ~ disease + age"), d)
    coding = encode_target(d.variable("disease"))

    on_er = cross_validate(er_matrix(fit, "disease"), coding, 1)
    on_raw = cross_validate(d.Y - d.Y.mean(axis=0), coding, 1)
    assert on_er.error[0] <= 0.05
    assert on_raw.error[0] >= 0.20
