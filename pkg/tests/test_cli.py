from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from typer.testing import CliRunner

from gem.cli import app

runner = CliRunner()

MODEL = "y ~ group + batch + group:batch"


def _args(csv: Path, out: Path, *extra: str):
    return [
        "--data",
        str(csv),
        "--responses",
        "m",
        "--id-column",
        "id",
        "--categorical",
        "group",
        "--categorical",
        "batch",
        "--model",
        MODEL,
        "--out",
        str(out),
        *extra,
    ]


def _invoke(*args: str, env=None):
    return runner.invoke(app, list(args), env=env)


def _tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_fit_writes_the_decomposition(two_class_csv, tmp_path):
    out = tmp_path / "run"
    result = _invoke("fit", *_args(two_class_csv, out, "--export-er"))
    assert result.exit_code == 0, result.output
    assert (out / "fit" / "gemfit.json").is_file()
    variance = pd.read_csv(out / "fit" / "variance.csv")
    assert list(variance["term"]) == ["group", "batch", "group:batch", "residual", "overlap"]
    balance = pd.read_csv(out / "fit" / "balance.csv")
    assert set(balance["count"]) == {4}
    er = pd.read_csv(out / "fit" / "er_group.csv")
    assert er.shape == (16, 9)
    assert (out / "fit" / "er_group_x_batch.csv").is_file()


def test_pls_with_jackknife_and_shaving(two_class_csv, tmp_path):
    out = tmp_path / "pls"
    result = _invoke("analyze", *_args(two_class_csv, out, "--effect", "group", "--ncomp", "2", "--jackknife", "--shave"))
    assert result.exit_code == 0, result.output

    cv = pd.read_csv(out / "pls" / "cv_error.csv")
    assert list(cv["component"]) == [1, 2]
    assert cv["selected"].sum() == 1
    assert cv["error"].iloc[0] <= 0.1
    assert cv["majority_error"].iloc[0] == pytest.approx(0.5)

    classes = pd.read_csv(out / "pls" / "classes.csv")
    assert list(classes.columns) == ["sample_id", "observed", "comp1", "comp2"]
    assert len(classes) == 16

    jack = pd.read_csv(out / "pls" / "jackknife.csv")
    assert list(jack.columns) == ["response", "contrast", "comp1", "comp2"]
    assert set(jack["contrast"]) == {"ctrl vs case"}
    assert jack[["comp1", "comp2"]].stack().between(0, 1).all()
    loadings = pd.read_csv(out / "pls" / "loadings.csv")
    assert list(loadings["significant"]) == list(loadings["p_value"] < 0.05)

    trace = pd.read_csv(out / "pls" / "shave_trace.csv")
    assert trace["n_active"].iloc[0] == 8
    assert trace["optimal"].sum() == 1
    twin = pd.read_csv(out / "plots" / "pls_shaving.csv")
    assert twin["majority_error"].iloc[0] == cv["majority_error"].iloc[0]
    subset = (out / "pls" / "subset.txt").read_text(encoding="utf-8").split()
    assert len(subset) == trace.loc[trace["optimal"], "n_active"].iloc[0]

    for name in ("pls_cv", "pls_scores", "pls_loadings", "pls_correlation_loadings", "pls_shaving"):
        assert (out / "plots" / f"{name}.svg").read_text(encoding="utf-8").startswith("<?xml")
        assert (out / "plots" / f"{name}.csv").is_file()


def test_repeated_runs_are_byte_identical(two_class_csv, tmp_path):
    for name in ("a", "b"):
        result = _invoke("analyze", *_args(two_class_csv, tmp_path / name, "--effect", "group", "--cv", "kfold:4", "--seed", "3"))
        assert result.exit_code == 0, result.output
    first, second = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert first.keys() == second.keys()
    assert first == second


def test_pca_correlation_loadings_are_bounded(two_class_csv, tmp_path):
    out = tmp_path / "pca"
    result = _invoke("analyze", *_args(two_class_csv, out, "--effect", "group", "--analysis", "pca", "--ncomp", "3"))
    assert result.exit_code == 0, result.output
    corr = pd.read_csv(out / "pca" / "correlation_loadings.csv")
    values = corr[["PC1", "PC2", "PC3"]].to_numpy()
    assert np.all(np.abs(values) <= 1.0)
    explained = pd.read_csv(out / "pca" / "explvar.csv")
    assert explained["cumulative"].iloc[-1] <= 1.0 + 1e-12
    assert (out / "plots" / "pca_correlation_loadings.svg").is_file()


def test_enet_nonzero_count_matches_df(two_class_csv, tmp_path):
    out = tmp_path / "enet"
    result = _invoke("analyze", *_args(two_class_csv, out, "--effect", "group", "--analysis", "enet", "--nlambda", "20"))
    assert result.exit_code == 0, result.output
    cv = pd.read_csv(out / "enet" / "enet_cv.csv")
    best = cv.loc[cv["selected"]]
    assert len(best) == 1
    nonzero = (out / "enet" / "nonzero.txt").read_text(encoding="utf-8").split()
    assert len(nonzero) == best["df"].iloc[0]
    assert set(nonzero) <= {f"m{j}" for j in range(1, 9)}
    path = pd.read_csv(out / "enet" / "enet_path.csv")
    assert len(path) == 20


def test_analyze_from_a_saved_fit_and_combined_effects(two_class_csv, tmp_path):
    fit_out = tmp_path / "fit"
    assert _invoke("fit", *_args(two_class_csv, fit_out, "--embed-matrices")).exit_code == 0
    out = tmp_path / "combined"
    result = _invoke(
        "analyze",
        *_args(two_class_csv, out, "--fit", str(fit_out / "fit" / "gemfit.json"), "--effect", "group", "--effect", "batch", "--ncomp", "3", "--jackknife"),
    )
    assert result.exit_code == 0, result.output
    predictions = pd.read_csv(out / "pls" / "predictions.csv")
    assert set(predictions["observed"]) == {"case|b1", "case|b2", "ctrl|b1", "ctrl|b2"}
    jack = pd.read_csv(out / "pls" / "jackknife.csv")
    assert list(jack["contrast"].unique()) == ["case|b1 vs rest", "case|b2 vs rest", "ctrl|b1 vs rest", "ctrl|b2 vs rest"]
    assert len(jack) == 4 * 8
    loadings = pd.read_csv(out / "pls" / "loadings.csv")
    assert set(loadings["contrast"]) == {"case|b1 vs rest"}


def test_unknown_effect_is_a_model_error(two_class_csv, tmp_path):
    result = _invoke("analyze", *_args(two_class_csv, tmp_path / "x", "--effect", "dose"))
    assert result.exit_code == 1
    assert "dose" in result.output


def test_missing_data_file_is_a_data_error(tmp_path):
    result = _invoke("fit", *_args(tmp_path / "absent.csv", tmp_path / "x"))
    assert result.exit_code == 1


def test_bad_cv_scheme_is_a_usage_error(two_class_csv, tmp_path):
    result = _invoke("analyze", *_args(two_class_csv, tmp_path / "x", "--effect", "group", "--cv", "bootstrap"))
    assert result.exit_code == 2


def test_bad_thread_count_is_a_usage_error(two_class_csv, tmp_path):
    result = _invoke("fit", *_args(two_class_csv, tmp_path / "x"), env={"GEM_THREADS": "many"})
    assert result.exit_code == 2
    assert "GEM_THREADS" in result.output


def test_config_file_with_command_line_override(two_class_csv, tmp_path):
    config = tmp_path / "run.json"
    config.write_text(
        '{"data": "%s", "responses": "m", "id_column": "id", "categorical": ["group", "batch"],'
        ' "model": "%s", "effects": ["group"], "analysis": "pca", "ncomp": 2}' % (two_class_csv.as_posix(), MODEL),
        encoding="utf-8",
    )
    out = tmp_path / "cfg"
    result = _invoke("analyze", "--config", str(config), "--ncomp", "3", "--out", str(out))
    assert result.exit_code == 0, result.output
    assert len(pd.read_csv(out / "pca" / "explvar.csv")) == 3


def test_simulate_is_seeded(tmp_path):
    spec = tmp_path / "sim.yaml"
    spec.write_text(
        "factors: {a: 2, b: 2}\nreplicates: 3\nn_responses: 5\nseed: 1\n"
        "effects:\n  - {term: a, size: 1.5, responses: [0, 2]}\n",
        encoding="utf-8",
    )
    for name in ("one.csv", "two.csv"):
        result = _invoke("simulate", "--spec", str(spec), "--out", str(tmp_path / name))
        assert result.exit_code == 0, result.output
    assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "two.csv").read_bytes()
    assert (tmp_path / "one.truth.json").read_bytes() == (tmp_path / "two.truth.json").read_bytes()
    frame = pd.read_csv(tmp_path / "one.csv")
    assert len(frame) == 12
    assert list(frame["a"]) == ["L1"] * 6 + ["L2"] * 6

    result = _invoke("simulate", "--spec", str(spec), "--out", str(tmp_path / "three.csv"), "--seed", "2")
    assert result.exit_code == 0
    assert (tmp_path / "three.csv").read_bytes() != (tmp_path / "one.csv").read_bytes()


def test_invalid_simulation_spec_is_a_usage_error(tmp_path):
    spec = tmp_path / "bad.yaml"
    spec.write_text("factors: {a: 1}\nn_responses: 3\n", encoding="utf-8")
    result = _invoke("simulate", "--spec", str(spec), "--out", str(tmp_path / "x.csv"))
    assert result.exit_code == 2
    assert not (tmp_path / "x.csv").exists()


def test_demo_pca_vs_pls(tmp_path):
    out = tmp_path / "demo"
    result = _invoke("demo", "pca-vs-pls", "--out", str(out))
    assert result.exit_code == 0, result.output
    table = pd.read_csv(out / "pca_vs_pls.csv").set_index("method")
    assert table.loc["PCA", "explained_x"] >= table.loc["PLS", "explained_x"]
    assert table.loc["PLS", "explained_y"] >= table.loc["PCA", "explained_y"]
    assert (out / "plots" / "demo_pca_vs_pls.svg").is_file()
    assert len(pd.read_csv(out / "plots" / "demo_pca_vs_pls.segments.csv")) == 2


def test_analyze_help_lists_the_shaving_options():
    result = _invoke("analyze", "--help")
    assert result.exit_code == 0
    assert "--shave" in result.output
    assert "--shave-fraction" in result.output
