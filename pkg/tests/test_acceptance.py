"""End-to-end gates for the package, one test per contract.

Each test prints a single PASS or FAIL line naming its gate, so a -s run
reads as a checklist. The expensive benchmark grid runs once in a
module-scoped fixture and feeds the ordering, envelope, and figure
gates. Oracles reused from the module test files: the exhaustive
subset search for the weighting window, the grid-plus-refinement simplex
projection, central finite differences for the gradient, and the
closed-form Gaussian kernel integral for population quadratic terms.
"""

import math
import time
from itertools import combinations

import numpy as np
import pytest

from test_kernels import gaussian_pair_expectation
from test_simplex import project_simplex_oracle

from lsr.bench import (
    ExperimentGrid,
    misclassification_error,
    run_experiment_grid,
    write_results_csv,
)
from lsr.classifier import predict_labels, train_calibrated_classifier
from lsr.datasets import LabeledDataset, UnlabeledDataset
from lsr.figures import FigureSpec, _series, render_metric_panels
from lsr.kernels import (
    KernelSpec,
    MmdQuadratic,
    fit_mmd_terms,
    mmd_gradient,
    mmd_loss,
)
from lsr.simplex import (
    OptimizerConfig,
    baseline_estimate,
    project_simplex,
    rod_estimate,
    roe_estimate,
)
from lsr.simulate import default_mixture, generate_sources
from lsr.weighting import WeightingConfig, mwv_weights

Q_STAR = np.array([0.6, 0.4])
BAYES_ERROR = 0.022205210270823812
ALL_ESTIMATORS = ["single", "average", "trim", "rod", "roe", "roe-multi",
                  "oracle"]


def gate(name: str, ok: bool, detail: str = "") -> bool:
    line = f"{'PASS' if ok else 'FAIL'} {name}"
    if detail:
        line += f" ({detail})"
    print(line)
    return ok


@pytest.fixture(scope="module")
def benchmark():
    """Shared 100-replication grid at (m, n, eps_h) = (40, 100, 0.2)."""
    grid = ExperimentGrid.from_dict({
        "m": 40, "n": 100, "N": None, "eps": [0.2, 0.4], "eps_h": 0.2,
        "replications": 100, "base_seed": 2026,
        "estimators": ALL_ESTIMATORS, "metrics": ["mse", "fsn"],
    })
    start = time.time()
    rows = run_experiment_grid(grid)
    return {"rows": rows, "elapsed": time.time() - start}


def mean_metric(rows, eps, estimator, metric):
    values = [row[9] for row in rows
              if row[4] == eps and row[7] == estimator and row[8] == metric
              and row[10] == "ok"]
    assert len(values) == 100, f"{estimator}/{metric} lost replications"
    return float(np.mean(values))


def test_mwv_exhaustive_equivalence():
    # every instance: the selected set must equal the variance-minimal
    # size-s subset found by full enumeration
    rng = np.random.default_rng(13)
    cache = {}
    start = time.time()
    mismatches = 0
    for m in range(4, 13):
        for _ in range(1000):
            values = rng.standard_normal(m) * (1.0 + 9.0 * rng.random())
            eps_h = float(rng.uniform(0.0, 0.5))
            s = m - math.floor(eps_h * m)
            key = (m, s)
            if key not in cache:
                cache[key] = np.array(list(combinations(range(m), s)))
            subsets = cache[key]
            variances = values[subsets].var(axis=1)
            want = set(subsets[int(np.argmin(variances))].tolist())
            got = set(mwv_weights(values, eps_h).selected.tolist())
            mismatches += got != want
    elapsed = time.time() - start
    assert gate("mwv-exhaustive-equivalence",
                mismatches == 0 and elapsed < 10.0,
                f"{mismatches} mismatches over 9000, {elapsed:.1f}s")


def test_mwv_window_contiguity():
    rng = np.random.default_rng(14)
    broken = 0
    for _ in range(10000):
        m = int(rng.integers(3, 41))
        values = rng.standard_normal(m)
        if rng.random() < 0.3:
            values[rng.integers(m)] += rng.lognormal(3.0)
        eps_h = float(rng.uniform(0.0, 0.5))
        selected = mwv_weights(values, eps_h).selected
        rank = {int(idx): r for r, idx in enumerate(np.argsort(values))}
        positions = sorted(rank[int(j)] for j in selected)
        if positions != list(range(positions[0], positions[0] + len(positions))):
            broken += 1
    assert gate("mwv-window-contiguity", broken == 0,
                f"{broken} non-window selections over 10000")


def test_simplex_projection_matches_grid_oracle():
    rng = np.random.default_rng(15)
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(2, 5))
        v = rng.normal(scale=2.0, size=k)
        gap = float(np.linalg.norm(project_simplex(v) - project_simplex_oracle(v)))
        worst = max(worst, gap)
    assert gate("simplex-projection-grid-oracle", worst <= 1e-6,
                f"worst l2 gap {worst:.2e}")


def test_mmd_gradient_central_differences():
    rng = np.random.default_rng(16)
    h = 1e-6
    worst = 0.0
    for _ in range(500):
        k = int(rng.integers(2, 5))
        m = rng.normal(size=(k, k))
        quad = MmdQuadratic((m + m.T) / 2, rng.normal(size=k), np.full(k, 3))
        q = rng.dirichlet(np.ones(k))
        grad = mmd_gradient(quad, q)
        for i in range(k):
            e = np.zeros(k)
            e[i] = h
            fd = (mmd_loss(quad, q + e) - mmd_loss(quad, q - e)) / (2 * h)
            worst = max(worst, abs(grad[i] - fd) / max(abs(fd), 1.0))
    assert gate("mmd-gradient-central-differences", worst <= 1e-6,
                f"worst relative error {worst:.2e}")


def test_mmd_terms_unbiased():
    # population terms from the closed-form Gaussian kernel integral;
    # Monte-Carlo means over 2000 resamples must sit within 3 SE per entry
    rng = np.random.default_rng(11)
    n_k, n_t = 20, 60
    mus = np.array([0.0, 4.0])
    draws = {key: np.empty(2000) for key in ("a00", "a01", "a11", "b0", "b1")}
    for r in range(2000):
        x = np.concatenate([rng.normal(mus[0], 1, n_k),
                            rng.normal(mus[1], 1, n_k)])
        labels = np.array([1] * n_k + [2] * n_k)
        y_t = 1 + (rng.random(n_t) >= Q_STAR[0]).astype(int)
        x_t = rng.normal(mus[y_t - 1], 1.0)
        quad = fit_mmd_terms(LabeledDataset(x[:, None], labels),
                             UnlabeledDataset(x_t[:, None]), KernelSpec())
        draws["a00"][r] = quad.a_matrix[0, 0]
        draws["a01"][r] = quad.a_matrix[0, 1]
        draws["a11"][r] = quad.a_matrix[1, 1]
        draws["b0"][r] = quad.b_vector[0]
        draws["b1"][r] = quad.b_vector[1]
    population = {
        "a00": gaussian_pair_expectation(0, 1, 0, 1),
        "a01": gaussian_pair_expectation(0, 1, 4, 1),
        "a11": gaussian_pair_expectation(4, 1, 4, 1),
        "b0": Q_STAR[0] * gaussian_pair_expectation(0, 1, 0, 1)
              + Q_STAR[1] * gaussian_pair_expectation(0, 1, 4, 1),
        "b1": Q_STAR[0] * gaussian_pair_expectation(4, 1, 0, 1)
              + Q_STAR[1] * gaussian_pair_expectation(4, 1, 4, 1),
    }
    z_scores = {
        key: abs(draws[key].mean() - population[key])
        / (draws[key].std(ddof=1) / math.sqrt(2000))
        for key in draws
    }
    worst = max(z_scores.values())
    assert gate("mmd-terms-unbiased", worst <= 3.0,
                f"worst entry z-score {worst:.2f}")


def test_single_source_consistency_at_scale():
    mixture = default_mixture()
    start = time.time()
    errors = []
    for seed in range(20):
        sources, target, _ = generate_sources(mixture, 1, 20000, 20000, seed)
        quad = fit_mmd_terms(sources[0], target, KernelSpec())
        result = baseline_estimate([quad], "average", OptimizerConfig())
        errors.append(float(np.linalg.norm(result.q_hat - Q_STAR)))
    elapsed = time.time() - start
    mean_error = float(np.mean(errors))
    assert gate("single-source-consistency-at-scale",
                mean_error <= 0.02 and elapsed < 60.0,
                f"mean l2 error {mean_error:.4f}, {elapsed:.0f}s")


def test_benchmark_mse_fsn_ordering(benchmark):
    rows = benchmark["rows"]
    mse = {est: mean_metric(rows, 0.2, est, "mse")
           for est in ("average", "trim", "rod", "roe")}
    fsn = {est: mean_metric(rows, 0.2, est, "fsn")
           for est in ("trim", "rod", "roe", "oracle")}
    ok = (mse["roe"] < mse["rod"]
          and mse["roe"] < mse["trim"]
          and mse["roe"] < mse["average"]
          and fsn["roe"] <= fsn["rod"]
          and fsn["roe"] <= fsn["trim"]
          and fsn["oracle"] == 0.0
          and benchmark["elapsed"] < 300.0)
    assert gate(
        "benchmark-mse-fsn-ordering", ok,
        f"mse roe {mse['roe']:.2e} vs rod {mse['rod']:.2e}, "
        f"trim {mse['trim']:.2e}, avg {mse['average']:.2e}; "
        f"fsn roe {fsn['roe']:.2f} vs rod {fsn['rod']:.2f}, "
        f"trim {fsn['trim']:.2f}; {benchmark['elapsed']:.0f}s")


def test_high_contamination_envelope(benchmark):
    rows = benchmark["rows"]
    roe = mean_metric(rows, 0.4, "roe", "mse")
    oracle = mean_metric(rows, 0.4, "oracle", "mse")
    assert gate("high-contamination-envelope", roe <= 3.0 * oracle,
                f"mse roe {roe:.2e} vs 3x oracle {3 * oracle:.2e}")


def test_zero_budget_collapse():
    # with no contamination budget every estimator solves the same
    # uniformly weighted problem, so the answers must agree to 10*tol
    kernel = KernelSpec()
    mixture = default_mixture()
    rng = np.random.default_rng(55)
    cfg = OptimizerConfig(max_iters=5000, tol=1e-8)
    wcfg = WeightingConfig(rule="mwv", eps_h=0.0)
    worst = 0.0
    for _ in range(50):
        m = int(rng.integers(3, 9))
        n = int(rng.integers(60, 200))
        seed = np.random.SeedSequence(int(rng.integers(0, 2 ** 31)))
        sources, target, _ = generate_sources(mixture, m, n, m * n, seed)
        quads = [fit_mmd_terms(source, target, kernel) for source in sources]
        anchor = baseline_estimate(quads, "average", cfg).q_hat
        others = (
            baseline_estimate(quads, "trim", cfg, eps_h=0.0).q_hat,
            rod_estimate(quads, cfg, wcfg).q_hat,
            roe_estimate(quads, cfg, wcfg,
                         q_prime=rng.dirichlet(np.ones(2))).q_hat,
        )
        for q_hat in others:
            worst = max(worst, float(np.linalg.norm(q_hat - anchor)))
    assert gate("zero-budget-collapse", worst <= 10 * cfg.tol,
                f"worst l2 gap {worst:.2e} vs {10 * cfg.tol:.0e}")


def test_excess_variance_reduction():
    # the excess value at two nearby points varies far less than at two
    # distant ones; squared-distance scaling predicts a ratio near 100
    rng = np.random.default_rng(12)
    mus = np.array([0.0, 4.0])
    center = Q_STAR
    direction = np.array([1.0, -1.0]) / math.sqrt(2.0)
    pairs = {d: (center + d / 2 * direction, center - d / 2 * direction)
             for d in (0.2, 0.02)}
    values = {d: np.empty(2000) for d in pairs}
    for r in range(2000):
        x = np.concatenate([rng.normal(0.0, 1, 50), rng.normal(4.0, 1, 50)])
        labels = np.array([1] * 50 + [2] * 50)
        y_t = 1 + (rng.random(200) >= Q_STAR[0]).astype(int)
        x_t = rng.normal(mus[y_t - 1], 1.0)
        quad = fit_mmd_terms(LabeledDataset(x[:, None], labels),
                             UnlabeledDataset(x_t[:, None]), KernelSpec())
        for d, (qa, qb) in pairs.items():
            values[d][r] = mmd_loss(quad, qa) - mmd_loss(quad, qb)
    ratio = float(values[0.2].var(ddof=1) / values[0.02].var(ddof=1))
    assert gate("excess-variance-reduction", 30.0 <= ratio <= 300.0,
                f"variance ratio {ratio:.1f}")


def test_calibrated_classifier_near_bayes():
    mixture = default_mixture()
    sources, target, target_labels = generate_sources(mixture, 5, 5000,
                                                      20000, 77)
    cfg = OptimizerConfig(max_iters=800, tol=1e-10)
    wcfg = WeightingConfig(rule="mwv", eps_h=0.2)
    params = train_calibrated_classifier(sources, Q_STAR, cfg, wcfg)
    predicted = predict_labels(params, target.covariates)
    error = misclassification_error(predicted, target_labels)
    bound = BAYES_ERROR + 0.02
    assert gate("calibrated-classifier-near-bayes", error <= bound,
                f"error {error:.4f} vs bound {bound:.4f}")


def test_benchmark_determinism_across_workers(tmp_path):
    grid = ExperimentGrid.from_dict({
        "m": 6, "n": 60, "eps": [0.0, 0.3], "eps_h": 0.2,
        "replications": 3, "base_seed": 5,
        "estimators": ALL_ESTIMATORS, "metrics": ["mse", "fsn"],
    })
    serial = tmp_path / "serial.csv"
    pooled = tmp_path / "pooled.csv"
    write_results_csv(run_experiment_grid(grid, workers=1), str(serial))
    write_results_csv(run_experiment_grid(grid, workers=8), str(pooled))
    identical = serial.read_bytes() == pooled.read_bytes()
    assert gate("benchmark-determinism-across-workers", identical,
                "1 vs 8 workers byte-identical" if identical
                else "worker count changed the results file")


def test_figure_panel_smoke(benchmark, tmp_path):
    results = tmp_path / "results.csv"
    write_results_csv(benchmark["rows"], str(results))
    rendered = []
    for metric in ("mse", "fsn"):
        out = tmp_path / f"{metric}_vs_eps.png"
        render_metric_panels(FigureSpec(
            input_path=str(results), metric=metric, x_axis="eps",
            output_path=str(out), estimators=tuple(ALL_ESTIMATORS)))
        rendered.append(out.exists() and out.stat().st_size > 0)

    # hand-built sweep where one estimator dominates: its aggregated
    # series must sit below every other series at every x
    rows = []
    for i, eps in enumerate((0.1, 0.2, 0.3)):
        for rep in range(3):
            for est, level in (("roe", 0.1), ("rod", 0.3), ("trim", 0.4),
                               ("average", 0.6)):
                rows.append((i, 40, 100, 4000, eps, 0.2, rep, est, "mse",
                             level + 0.01 * rep, "ok"))
    dominated = tmp_path / "dominated.csv"
    write_results_csv(rows, str(dominated))
    spec = FigureSpec(input_path=str(dominated), metric="mse", x_axis="eps",
                      output_path=str(tmp_path / "dominated.png"),
                      estimators=("roe", "rod", "trim", "average"))
    render_metric_panels(spec)
    from lsr.bench import load_results_csv
    series = _series(load_results_csv(str(dominated)), spec)
    below = all(np.all(series["roe"][1] < series[other][1])
                for other in ("rod", "trim", "average"))
    ok = all(rendered) and below and (tmp_path / "dominated.png").exists()
    assert gate("figure-panel-smoke", ok,
                "one panel per metric, dominant series lowest at every x")
