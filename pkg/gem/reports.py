import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from gem import plots
from gem.config import RunConfig
from gem.design import Term, parse_formula
from gem.enet import BINOMIAL, GAUSSIAN, cv_enet, nonzero_set
from gem.errors import DataError, FormulaError, ModelError
from gem.ingest import CATEGORICAL, CONTINUOUS, ID_COLUMN, Dataset, Schema, VariableSpec, load_dataset, preprocess, validate_dataset
from gem.model import GemFit, combined_er, er_matrix, fit_dataset, variance_summary
from gem.pca import correlation_loadings, explained_y, fit_pca
from gem.pls import contrast_label, cross_validate, encode_target, fit_pls, fit_target, jackknife, majority_class_error, shave
from gem.store import FIT_FILE, load_fit, save_fit
from gem.utils import safe_name, write_csv, write_lines

log = logging.getLogger(__name__)

FIT_DIR = "fit"
PCA_DIR = "pca"
PLS_DIR = "pls"
ENET_DIR = "enet"
PLOTS_DIR = "plots"

SIGNIFICANCE = 0.05
# 50% and 100% explained variance
CIRCLES = (float(np.sqrt(0.5)), 1.0)


@dataclass
class RunSummary:
    out: Path
    files: List[Path] = field(default_factory=list)
    metrics: Dict[str, object] = field(default_factory=dict)
    table: Optional[pd.DataFrame] = None
    notes: List[str] = field(default_factory=list)

    def add(self, path: Path) -> Path:
        self.files.append(Path(path))
        return path

    def csv(self, frame: pd.DataFrame, path: Path) -> Path:
        write_csv(frame, path)
        return self.add(path)


def schema_from_config(config: RunConfig) -> Schema:
    if not config.responses:
        raise DataError("No response columns given (--responses).")
    responses = [c.strip() for c in config.responses.split(",")] if "," in config.responses else config.responses

    variables: Dict[str, str] = {}
    for name in config.categorical:
        variables[name] = CATEGORICAL
    for name in config.continuous:
        if name in variables:
            raise DataError(f"Variable '{name}' is declared both categorical and continuous.")
        variables[name] = CONTINUOUS
    if variables and config.model:
        for name in parse_formula(config.model).variables:
            variables.setdefault(name, "auto")
    return Schema(responses=responses, id_column=config.id_column, variables=variables)


def load_input(config: RunConfig) -> Dataset:
    if not config.data:
        raise DataError("No data file given (--data).")
    d = load_dataset(config.data, schema_from_config(config))
    return preprocess(d, log_transform=config.log, center=config.center)


def obtain_fit(config: RunConfig, d: Dataset) -> GemFit:
    """Loads the persisted fit when one is configured, otherwise fits inline."""
    if config.fit:
        fit = load_fit(config.fit, Y=d.Y)
        if fit.response_names and tuple(fit.response_names) != d.response_names:
            raise DataError(f"Fit file '{config.fit}' was made on different responses.")
        return fit
    if not config.model:
        raise FormulaError("No model formula given (--model).")
    return fit_dataset(parse_formula(config.model), d)


def _sample_frame(d: Dataset, matrix: np.ndarray, columns: Sequence[str]) -> pd.DataFrame:
    frame = pd.DataFrame(np.asarray(matrix), columns=list(columns))
    frame.insert(0, ID_COLUMN, list(d.sample_ids))
    return frame


def run_fit(config: RunConfig) -> RunSummary:
    """Fits the effect model and persists it with its decomposition tables."""
    out = Path(config.out)
    summary = RunSummary(out=out)
    d = load_input(config)
    report = validate_dataset(d)
    for name in report.zero_variance_responses:
        log.warning("Response '%s' has zero variance.", name)
    for factor, level in report.empty_levels:
        log.warning("Level '%s' of '%s' has no samples.", level, factor)

    fit = obtain_fit(config, d)
    fit_dir = out / FIT_DIR
    save_fit(fit, str(fit_dir / FIT_FILE), embed_matrices=config.embed_matrices)
    summary.add(fit_dir / FIT_FILE)

    variance = variance_summary(fit)
    summary.csv(variance, fit_dir / "variance.csv")
    summary.table = variance

    if report.balance:
        factors = [v.name for v in d.variables if v.is_categorical]
        balance = pd.DataFrame([list(cell) + [count] for cell, count in report.balance.items()], columns=factors + ["count"])
        summary.csv(balance, fit_dir / "balance.csv")

    if config.export_er:
        for term in fit.spec.terms:
            summary.csv(_sample_frame(d, er_matrix(fit, term), d.response_names), fit_dir / f"er_{safe_name(term.label)}.csv")

    overlap = float(variance.loc[variance["term"] == "overlap", "fraction"].iloc[0])
    summary.metrics.update({"samples": d.n, "responses": d.N, "balanced": report.balanced, "overlap": overlap})
    if not report.balanced:
        summary.notes.append(f"Design is unbalanced: effect matrices are not orthogonal (overlap fraction {overlap:.3g}).")
    log.info("Fitted '%s' on %d samples x %d responses.", fit.spec.formula, d.n, d.N)
    return summary


def target_variable(d: Dataset, terms: Sequence[Term]) -> VariableSpec:
    """The design variable(s) behind the selected terms, as an analysis target.

    Several categorical variables combine into one factor whose labels join
    the member labels with '|'.
    """
    names = list(dict.fromkeys(v for term in terms for v in term.variables))
    variables = [d.variable(name) for name in names]
    if len(variables) == 1:
        return variables[0]
    continuous = [v.name for v in variables if not v.is_categorical]
    if continuous:
        raise ModelError(f"Combined targets need categorical variables; '{continuous[0]}' is continuous.")
    labels = ["|".join(parts) for parts in zip(*(v.values for v in variables))]
    return VariableSpec("|".join(names), CATEGORICAL, np.asarray(labels, dtype=object))


def analysis_input(config: RunConfig, d: Dataset, fit: GemFit) -> Tuple[np.ndarray, VariableSpec, List[Term]]:
    if not config.effects:
        raise ModelError("Select at least one effect term (--effect).")
    terms = list(dict.fromkeys(fit.term(t) for t in config.effects))
    X = combined_er(fit, terms) if len(terms) > 1 else er_matrix(fit, terms[0])
    if config.add_intercept:
        X = X + fit.mu
    return np.array(X, dtype=float), target_variable(d, terms), terms


def autoscale(X: np.ndarray) -> np.ndarray:
    sd = X.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise ModelError(f"Cannot autoscale constant column {int(np.flatnonzero(sd == 0)[0]) + 1}.")
    return (X - X.mean(axis=0)) / sd


def run_analyze(config: RunConfig) -> RunSummary:
    """Step two: PCA, PLS or elastic net on the ER matrix of the selected effect(s)."""
    config.validate()
    out = Path(config.out)
    summary = RunSummary(out=out)
    d = load_input(config)
    fit = obtain_fit(config, d)
    X, target, terms = analysis_input(config, d, fit)
    summary.metrics["effect"] = " + ".join(t.label for t in terms)
    log.info("Analysing ER matrix of %s (%d x %d) with %s.", summary.metrics["effect"], X.shape[0], X.shape[1], config.analysis)

    if config.analysis == "pca":
        _analyze_pca(config, d, X, target, summary)
    elif config.analysis == "pls":
        _analyze_pls(config, d, autoscale(X) if config.scale else X, target, summary)
    else:
        _analyze_enet(config, d, autoscale(X) if config.scale else X, target, summary)
    return summary


def _pair(matrix: np.ndarray, prefix: str) -> pd.DataFrame:
    """First two columns of a matrix, padding a missing second one with zeros."""
    first = matrix[:, 0]
    second = matrix[:, 1] if matrix.shape[1] > 1 else np.zeros(matrix.shape[0])
    return pd.DataFrame({f"{prefix}1": first, f"{prefix}2": second})


def _group_column(target: VariableSpec) -> np.ndarray:
    return np.asarray(target.values) if target.is_categorical else np.asarray(target.values, dtype=float)


def _analyze_pca(config: RunConfig, d: Dataset, X: np.ndarray, target: VariableSpec, summary: RunSummary):
    model = fit_pca(X, config.ncomp, scale=config.scale)
    comps = [f"PC{a + 1}" for a in range(model.ncomp)]
    pca_dir, plot_dir = summary.out / PCA_DIR, summary.out / PLOTS_DIR

    scores = _sample_frame(d, model.scores, comps)
    scores.insert(1, target.name, _group_column(target))
    summary.csv(scores, pca_dir / "scores.csv")
    loadings = pd.DataFrame(model.loadings, columns=comps)
    loadings.insert(0, "response", list(d.response_names))
    summary.csv(loadings, pca_dir / "loadings.csv")

    explained = pd.DataFrame(
        {
            "component": comps,
            "explained_variance": model.explained_variance,
            "cumulative": np.cumsum(model.explained_variance),
        }
    )
    coding = encode_target(target)
    if coding.dummy.shape[1] == 1:
        explained["explained_y"] = explained_y(model, coding.dummy[:, 0])
    summary.csv(explained, pca_dir / "explvar.csv")

    corr = pd.DataFrame(correlation_loadings(model, X), columns=comps)
    corr.insert(0, "response", list(d.response_names))
    summary.csv(corr, pca_dir / "correlation_loadings.csv")

    score_plot = pd.concat([scores[[ID_COLUMN, target.name]], _pair(model.scores, "PC")], axis=1)
    summary.add(plots.scatter(score_plot, "PC1", "PC2", plot_dir / "pca_scores.svg", "PCA scores", group=target.name if target.is_categorical else None))
    loading_plot = pd.concat([loadings[["response"]], _pair(model.loadings, "PC")], axis=1)
    summary.add(plots.scatter(loading_plot, "PC1", "PC2", plot_dir / "pca_loadings.svg", "PCA loadings", label="response"))
    corr_plot = pd.concat([corr[["response"]], _pair(corr[comps].to_numpy(), "PC")], axis=1)
    summary.add(plots.scatter(corr_plot, "PC1", "PC2", plot_dir / "pca_correlation_loadings.svg", "PCA correlation loadings", circles=CIRCLES))
    summary.add(plots.bars(explained[["component", "explained_variance"]], "component", "explained_variance", plot_dir / "pca_explained_variance.svg", "Explained variance"))

    summary.table = explained
    summary.metrics["explained_variance_pc1"] = float(model.explained_variance[0])


def _analyze_pls(config: RunConfig, d: Dataset, X: np.ndarray, target: VariableSpec, summary: RunSummary):
    coding = encode_target(target)
    scheme = config.scheme()
    pls_dir, plot_dir = summary.out / PLS_DIR, summary.out / PLOTS_DIR

    cv = cross_validate(X, coding, config.ncomp, scheme)
    selected = cv.ncomp_selected
    cv_frame = pd.DataFrame(
        {
            "component": np.arange(1, config.ncomp + 1),
            "error": cv.error,
            "se": cv.se,
            "selected": np.arange(1, config.ncomp + 1) == selected,
        }
    )
    majority = majority_class_error(coding) if coding.is_categorical else None
    if majority is not None:
        cv_frame["majority_error"] = majority
    summary.csv(cv_frame, pls_dir / "cv_error.csv")
    summary.add(
        plots.curve(
            cv_frame,
            "component",
            ["error"],
            plot_dir / "pls_cv.svg",
            f"PLS cross-validation ({scheme.label})",
            ylabel="misclassification" if coding.is_categorical else "RMSE",
            error="se",
            reference="majority_error" if majority is not None else None,
            mark="selected",
        )
    )

    models = fit_target(X, coding, config.ncomp)
    lead = models[0]
    comps = [f"comp{a + 1}" for a in range(config.ncomp)]

    observed = _group_column(target)
    if coding.is_categorical:
        classes = pd.DataFrame(cv.classes, columns=comps)
        classes.insert(0, "observed", observed)
        classes.insert(0, ID_COLUMN, list(d.sample_ids))
        summary.csv(classes, pls_dir / "classes.csv")
        predicted = cv.classes[:, selected - 1]
    else:
        predicted = cv.predictions[:, selected - 1, 0] + float(np.mean(target.values))
    predictions = pd.DataFrame({ID_COLUMN: list(d.sample_ids), "observed": observed, "predicted": predicted})
    summary.csv(predictions, pls_dir / "predictions.csv")

    explained = pd.DataFrame({"component": comps, "explained_x": lead.explained_x, "explained_y": lead.explained_y})
    summary.csv(explained, pls_dir / "explained_variance.csv")

    scores = pd.concat([pd.DataFrame({ID_COLUMN: list(d.sample_ids), target.name: observed}), _pair(lead.scores, "comp")], axis=1)
    summary.add(plots.scatter(scores, "comp1", "comp2", plot_dir / "pls_scores.svg", "PLS scores", group=target.name if coding.is_categorical else None))

    loadings = pd.concat([pd.DataFrame({"response": list(d.response_names)}), _pair(lead.weights, "w")], axis=1)
    if coding.is_categorical:
        loadings.insert(1, "contrast", contrast_label(coding))
    loadings["coefficient"] = lead.coefficients[:, selected - 1]
    highlight = None
    if config.jackknife:
        blocks = []
        for column in range(coding.dummy.shape[1]):
            block = pd.DataFrame(jackknife(X, coding, config.ncomp, scheme, column=column), columns=comps)
            block.insert(0, "response", list(d.response_names))
            if coding.is_categorical:
                block.insert(1, "contrast", contrast_label(coding, column))
            blocks.append(block)
        summary.csv(pd.concat(blocks, ignore_index=True), pls_dir / "jackknife.csv")
        p = blocks[0][comps[selected - 1]].to_numpy()
        loadings["p_value"] = p
        loadings["significant"] = p < SIGNIFICANCE
        highlight = "significant"
        summary.metrics["significant_variables"] = int(np.sum(p < SIGNIFICANCE))
    if coding.dummy.shape[1] > 1:
        summary.notes.append(f"Loadings show the '{contrast_label(coding)}' model; jackknife.csv has one block per class.")
    summary.csv(loadings, pls_dir / "loadings.csv")
    title = f"PLS loading weights ({contrast_label(coding)})" if coding.is_categorical else "PLS loading weights"
    summary.add(plots.scatter(loadings, "w1", "w2", plot_dir / "pls_loadings.svg", title, label="response" if highlight else None, highlight=highlight))

    corr = pd.DataFrame(correlation_loadings(lead, X)[:, : min(2, config.ncomp)])
    corr_plot = pd.concat([pd.DataFrame({"response": list(d.response_names)}), _pair(corr.to_numpy(), "comp")], axis=1)
    summary.add(plots.scatter(corr_plot, "comp1", "comp2", plot_dir / "pls_correlation_loadings.svg", "PLS correlation loadings", circles=CIRCLES))

    summary.metrics.update({"ncomp_selected": selected, "cv_error": float(cv.error[selected - 1])})
    if majority is not None:
        summary.metrics["majority_error"] = majority

    if config.shave:
        result = shave(X, coding, selected, config.shave_fraction, scheme)
        trace = pd.DataFrame(
            {
                "step": np.arange(len(result.trace)),
                "n_active": result.sizes,
                "error": result.errors,
                "optimal": np.arange(len(result.trace)) == result.min_red,
            }
        )
        if majority is not None:
            trace["majority_error"] = majority
        summary.csv(trace, pls_dir / "shave_trace.csv")
        summary.add(
            plots.curve(
                trace,
                "n_active",
                ["error"],
                plot_dir / "pls_shaving.svg",
                "Shaving",
                ylabel="cross-validated error",
                reference="majority_error" if majority is not None else None,
                mark="optimal",
            )
        )
        names = [d.response_names[j] for j in result.optimal_subset]
        write_lines(names, pls_dir / "subset.txt")
        summary.add(pls_dir / "subset.txt")
        summary.metrics.update({"shaving_min_red": result.min_red, "shaving_variables": len(names)})

    summary.table = cv_frame


def _analyze_enet(config: RunConfig, d: Dataset, X: np.ndarray, target: VariableSpec, summary: RunSummary):
    family = config.family or (BINOMIAL if target.is_categorical else GAUSSIAN)
    if family == BINOMIAL and not target.is_categorical:
        raise ModelError(f"Binomial family needs a categorical target; '{target.name}' is continuous.")
    if family == GAUSSIAN and target.is_categorical:
        raise ModelError(f"Gaussian family needs a continuous target; '{target.name}' is categorical.")
    scheme = config.scheme()
    enet_dir, plot_dir = summary.out / ENET_DIR, summary.out / PLOTS_DIR

    path = cv_enet(X, target.values, config.alpha, family, scheme, config.nlambda, names=d.response_names)
    best = path.index(path.lambda_opt)
    selected = np.arange(path.lambdas.size) == best

    coefs = pd.DataFrame(path.coefs, columns=list(d.response_names))
    coefs.insert(0, "selected", selected)
    coefs.insert(0, "df", path.df)
    coefs.insert(0, "log_lambda", np.log(path.lambdas))
    coefs.insert(0, "lambda", path.lambdas)
    summary.csv(coefs, enet_dir / "enet_path.csv")
    summary.add(plots.curve(coefs, "log_lambda", list(d.response_names), plot_dir / "enet_path.svg", "Elastic-net coefficient paths", ylabel="coefficient", mark="selected", legend=False))

    cv_frame = pd.DataFrame(
        {
            "lambda": path.lambdas,
            "log_lambda": np.log(path.lambdas),
            "error": path.cv_error,
            "se": path.cv_se,
            "df": path.df,
            "selected": selected,
        }
    )
    summary.csv(cv_frame, enet_dir / "enet_cv.csv")
    ylabel = "misclassification" if family == BINOMIAL else "MSE"
    summary.add(plots.curve(cv_frame, "log_lambda", ["error"], plot_dir / "enet_cv.svg", f"Elastic-net cross-validation ({scheme.label})", ylabel=ylabel, error="se", mark="selected"))

    chosen = nonzero_set(path, path.lambda_opt)
    write_lines([name for _, name in chosen], enet_dir / "nonzero.txt")
    summary.add(enet_dir / "nonzero.txt")

    summary.metrics.update(
        {
            "family": family,
            "lambda_opt": path.lambda_opt,
            "cv_error": float(path.cv_error[best]),
            "nonzero": len(chosen),
        }
    )
    summary.table = cv_frame.loc[selected, ["lambda", "error", "se", "df"]].reset_index(drop=True)


def demo_data(seed: int = 7, n: int = 100, isotropic: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Two correlated variables whose minor axis carries the response.

    With ``isotropic`` the variables are uncorrelated with equal variance.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    if isotropic:
        X = rng.standard_normal((n, 2))
        y = X[:, 1] + 0.5 * rng.standard_normal(n)
        return X, y
    major = 3.0 * rng.standard_normal(n)
    minor = rng.standard_normal(n)
    X = np.column_stack([major + minor, major - minor]) / np.sqrt(2.0)
    y = minor + 0.3 * rng.standard_normal(n)
    return X, y


def compare_pca_pls(X: np.ndarray, y: np.ndarray) -> pd.DataFrame:
    """First-component explained variance of X and y for PCA and PLS."""
    pca = fit_pca(X, 1)
    pls = fit_pls(X, y, 1)
    return pd.DataFrame(
        {
            "method": ["PCA", "PLS"],
            "explained_x": [float(pca.explained_variance[0]), float(pls.explained_x[0])],
            "explained_y": [float(explained_y(pca, y)[0]), float(pls.explained_y[0])],
            "direction_1": [float(pca.loadings[0, 0]), float(pls.weights[0, 0])],
            "direction_2": [float(pca.loadings[1, 0]), float(pls.weights[1, 0])],
        }
    )


def run_demo_pca_vs_pls(out: str, seed: int = 7) -> RunSummary:
    summary = RunSummary(out=Path(out))
    X, y = demo_data(seed)
    table = compare_pca_pls(X, y)
    summary.csv(table, summary.out / "pca_vs_pls.csv")

    Xc = X - X.mean(axis=0)
    points = pd.DataFrame({"x1": Xc[:, 0], "x2": Xc[:, 1], "y": y})
    reach = 2.0 * float(np.max(Xc.std(axis=0)))
    segments = pd.DataFrame(
        {
            "label": [f"{m} component 1" for m in table["method"]],
            "x0": -reach * table["direction_1"],
            "y0": -reach * table["direction_2"],
            "x1": reach * table["direction_1"],
            "y1": reach * table["direction_2"],
        }
    )
    summary.add(plots.scatter(points, "x1", "x2", summary.out / PLOTS_DIR / "demo_pca_vs_pls.svg", "PCA and PLS first components", segments=segments))
    summary.add(summary.out / PLOTS_DIR / "demo_pca_vs_pls.segments.csv")
    summary.table = table[["method", "explained_x", "explained_y"]]
    return summary
