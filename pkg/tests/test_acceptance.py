"""Acceptance criteria, one test each, at their stated tolerances.

Each test records a one-line PASS/FAIL verdict; the lines are repeated in
the terminal summary (see ``conftest.py``).
"""

import math
import time

import numpy as np
import pytest
from scipy.special import ndtr

from conftest import record_criterion
from fldtransfer.cli import main
from fldtransfer.dataset import signed_rank_brute_force, signed_rank_test, synthetic_sessions, write_sessions, write_source_vectors
from fldtransfer.fld import FldFit, fit_fld, projection_covariance
from fldtransfer.simlab import CLASSIFIERS, run_dimension_sweep, run_kappa_sweep, run_validation
from fldtransfer.stats import RngStream, TaskDistribution, VmfModel, sample_task, sample_vmf
from fldtransfer.transfer import AlphaGrid, SourceSummary, closed_form_risk, combine, expected_risk_mc, summarize_sources

pytestmark = pytest.mark.slow
BAYES = 0.5 * math.erfc(-1 / math.sqrt(2))


@pytest.fixture(scope="module")
def validation_cells():
    t = time.perf_counter()
    cells = run_validation(threads=1, replicates=200)
    return cells, time.perf_counter() - t


@pytest.fixture(scope="module")
def kappa_cells():
    t = time.perf_counter()
    cells = run_kappa_sweep(threads=1, replicates=200)
    return cells, time.perf_counter() - t


@pytest.fixture(scope="module")
def dimension_cells():
    return run_dimension_sweep(threads=1, replicates=200)


def test_c01_closed_form_risk_oracle():
    g = np.random.default_rng(20240101)
    t = time.perf_counter()
    n, chunk = 10**7, 10**6
    worst, fails = 0.0, 0
    for k in range(20):
        d = (2, 5, 10)[k % 3]
        w = g.standard_normal(d)
        nu = g.standard_normal(d) / math.sqrt(d)
        A = g.standard_normal((d, d))
        sigma = A @ A.T / d + 0.2 * np.eye(d)
        L = np.linalg.cholesky(sigma)
        R = closed_form_risk(w, nu, sigma)
        errors = 0
        for _ in range(n // chunk):
            y = g.random(chunk) < 0.5
            X = g.standard_normal((chunk, d)) @ L.T
            X += np.where(y[:, None], nu, -nu)
            errors += np.count_nonzero((X @ w > 0) != y)
        z = abs(errors / n - R) / math.sqrt(R * (1 - R) / n)
        worst = max(worst, z)
        fails += z > 3
    elapsed = time.perf_counter() - t
    ok = fails == 0 and elapsed <= 120
    record_criterion(1, "closed-form risk vs 1e7 labelled draws", ok,
                     f"max |z| = {worst:.2f} over 20 triples (limit 3), {elapsed:.0f} s (limit 120)")
    assert ok


def test_c02_degenerate_variance():
    worst = 0.0
    g = np.random.default_rng(2)
    for _ in range(20):
        d = int(g.integers(2, 8))
        A = g.standard_normal((d, d))
        sigma = A @ A.T + 0.1 * np.eye(d)
        w = g.standard_normal(d)
        fit = FldFit(w, w / np.linalg.norm(w), g.standard_normal(d), sigma, 10, np.zeros((d, d)))
        mu = g.standard_normal(d)
        src = SourceSummary(mu / np.linalg.norm(mu), 0.0, 3, 0.5)
        for i, a in enumerate(AlphaGrid()):
            mc = expected_risk_mc(a, fit, src, 17, RngStream(5, (i,)))
            cf = closed_form_risk(combine(a, fit.omega, src.mu_hat), fit.nu_hat, fit.sigma_hat)
            worst = max(worst, abs(mc - cf))
    ok = worst <= 1e-12
    record_criterion(2, "zero-variance MC risk equals closed form", ok, f"max difference {worst:.2e} (limit 1e-12)")
    assert ok


def test_c03_projection_covariance_asymptotics():
    d, n, fits = 4, 200, 20_000
    nu, sigma = np.eye(d)[0], np.eye(d)
    task = TaskDistribution(nu, sigma)
    t = time.perf_counter()
    rs = RngStream(33)
    W = np.empty((fits, d))
    for i in range(fits):
        W[i] = fit_fld(*sample_task(task, n, rs.child(i))).omega_raw
    emp = np.cov(W.T)
    theory = projection_covariance(nu, sigma, n)
    rel = np.linalg.norm(emp - theory) / np.linalg.norm(theory)
    elapsed = time.perf_counter() - t
    ok = rel <= 0.25 and elapsed <= 180
    record_criterion(3, "covariance of the fitted projection vector", ok,
                     f"relative Frobenius error {rel:.3f} (limit 0.25), {elapsed:.0f} s (limit 180)")
    assert ok


def test_c04_vmf_statistics():
    mu = np.array([0.0, 0.0, 1.0])
    devs = {}
    for kappa in (1.0, 10.0, 100.0):
        w = sample_vmf(VmfModel(mu, kappa), 10**5, RngStream(44, (int(kappa),)))
        devs[kappa] = abs((w @ mu).mean() - (1 / math.tanh(kappa) - 1 / kappa))
    u = sample_vmf(VmfModel(np.eye(5)[0], 0.0), 10**5, RngStream(45))
    resultant = float(np.linalg.norm(u.mean(axis=0)))
    ok = max(devs.values()) < 0.01 and resultant < 0.02
    detail = ", ".join(f"kappa={k:g}: {v:.4f}" for k, v in devs.items())
    record_criterion(4, "vMF sampler statistics", ok, f"{detail} (limit 0.01); uniform resultant {resultant:.4f} (limit 0.02)")
    assert ok


def test_c05_validation_trends(validation_cells):
    cells, elapsed = validation_cells
    by = {(c.config.n, c.config.j_count): c for c in cells}
    ns, js = (10, 20, 50, 100), (10, 100, 1000)
    problems = []
    for j in js:
        gaps = [by[n, j].gap("target") for n in ns]
        if any(b > a for a, b in zip(gaps, gaps[1:])):
            problems.append(f"target gap J={j}: " + ", ".join(f"{x:.4f}" for x in gaps))
    for n in ns:
        if by[n, 1000].gap("source") > by[n, 10].gap("source"):
            problems.append(f"source gap n={n}: J=1000 {by[n, 1000].gap('source'):.4f} > J=10 {by[n, 10].gap('source'):.4f}")
    worst = min(by[k].mean("empirical", "optimal") - by[k].mean("empirical", "target") for k in by)
    if worst < -0.005:
        problems.append(f"optimal - target = {worst:.4f}")
    ok = not problems and elapsed <= 600
    record_criterion(5, "validation experiment trends", ok,
                     f"min optimal - target {worst:+.4f} (limit -0.005), {elapsed:.0f} s; " + ("; ".join(problems) or "all trends hold"))
    assert ok


def test_c06_kappa_trends(kappa_cells):
    cells, elapsed = kappa_cells
    alphas = [c.mean("alpha", "optimal") for c in cells]
    opt = [c.mean("empirical", "optimal") for c in cells]
    tgt = [c.mean("empirical", "target") for c in cells]
    src = [c.mean("empirical", "source") for c in cells]
    mono = all(b <= a for a, b in zip(alphas, alphas[1:]))
    vs_target = min(o - t for o, t in zip(opt, tgt))
    vs_source = min(o - s for o, s in zip(opt, src))
    ok = mono and vs_target >= -0.005 and vs_source >= -0.02 and elapsed <= 600
    record_criterion(6, "kappa sweep trends", ok,
                     "mean alpha* " + ", ".join(f"{a:.3f}" for a in alphas)
                     + f"; min optimal - target {vs_target:+.4f} (limit -0.005)"
                     + f"; min optimal - source {vs_source:+.4f} (limit -0.02); {elapsed:.0f} s")
    assert ok


def test_c07_bayes_ceiling(validation_cells, kappa_cells, dimension_cells):
    cells = validation_cells[0] + kappa_cells[0] + dimension_cells
    top = max(r.analytical[c] for cell in cells for r in cell.records for c in CLASSIFIERS)
    ok = top <= BAYES + 1e-12
    record_criterion(7, "Bayes ceiling on analytical accuracy", ok,
                     f"max analytical accuracy {top:.6f} over {len(cells)} cells (ceiling {BAYES:.6f})")
    assert ok


def test_c08_mc_variance_law():
    g = np.random.default_rng(8)
    d = 5
    X, y = sample_task(TaskDistribution(np.eye(d)[0], np.eye(d)), 20, g)
    fit = fit_fld(X, y)
    src = summarize_sources(sample_vmf(VmfModel(np.eye(d)[1], 5.0), 10, RngStream(81)))
    bs = (10**2, 10**3, 10**4)
    var = [np.var([expected_risk_mc(0.5, fit, src, b, RngStream(seed, (b,))) for seed in range(30)], ddof=1)
           for b in bs]
    slope = np.polyfit(np.log10(bs), np.log10(var), 1)[0]
    ok = abs(slope + 1) <= 0.2
    record_criterion(8, "MC variance scales as 1/B", ok, f"log-log slope {slope:.3f} (limit -1 +/- 0.2)")
    assert ok


def test_c09_signed_rank_exact():
    g = np.random.default_rng(9)
    worst = 0.0
    for k in range(100):
        n = int(g.integers(5, 13))
        diffs = np.round(g.standard_normal(n) + 0.3, 1 if k % 2 else 6)  # odd k: ties
        diffs[diffs == 0] = 0.1
        worst = max(worst, abs(signed_rank_test(diffs) - signed_rank_brute_force(diffs)))
    ok = worst < 1e-12
    record_criterion(9, "exact signed-rank p-values vs enumeration", ok, f"max difference {worst:.2e} over 100 vectors")
    assert ok


@pytest.fixture(scope="module")
def eval_fixture(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    sessions, _ = synthetic_sessions(6, d=6, windows=200, seed=10)
    write_sessions(sessions, root / "sessions")
    write_source_vectors(sample_vmf(VmfModel(np.eye(6)[0], 10.0), 40, RngStream(11)), root / "src.csv")
    return root


def _same(a, b, names):
    return all((a / n).read_bytes() == (b / n).read_bytes() for n in names)


def test_c10_end_to_end_determinism(eval_fixture, tmp_path):
    sim = ["simulate", "--experiment", "kappa", "--replicates", "20", "--test-size", "2000", "--seed", "7"]
    ev = ["eval", "--sessions", str(eval_fixture / "sessions"), "--source-vectors", str(eval_fixture / "src.csv"),
          "--splits", "5", "--seed", "3"]
    codes = [
        main(sim + ["--threads", "1", "--out", str(tmp_path / "s1")]),
        main(sim + ["--threads", "4", "--out", str(tmp_path / "s4")]),
        main(ev + ["--threads", "1", "--out", str(tmp_path / "e1")]),
        main(ev + ["--threads", "4", "--out", str(tmp_path / "e4")]),
    ]
    ok = (codes == [0] * 4
          and _same(tmp_path / "s1", tmp_path / "s4", ["simulate_kappa.csv", "simulate_kappa.json"])
          and _same(tmp_path / "e1", tmp_path / "e4", ["records.csv", "aggregate.csv"]))
    record_criterion(10, "byte-identical outputs across thread counts", ok, f"exit codes {codes}")
    assert ok


def test_c11_privacy_equivalence(eval_fixture, tmp_path):
    codes = [main(["aggregate-sources", "--source-vectors", str(eval_fixture / "src.csv"), "--out", str(tmp_path / "agg")])]
    common = ["eval", "--sessions", str(eval_fixture / "sessions"), "--splits", "5", "--seed", "5"]
    codes.append(main(common + ["--source-vectors", str(eval_fixture / "src.csv"), "--out", str(tmp_path / "direct")]))
    codes.append(main(common + ["--privacy-aggregate", str(tmp_path / "agg" / "aggregate.json"),
                                "--out", str(tmp_path / "private")]))
    ok = codes == [0, 0, 0] and _same(tmp_path / "direct", tmp_path / "private", ["records.csv", "aggregate.csv"])
    record_criterion(11, "aggregate-then-eval equals direct eval", ok, f"exit codes {codes}")
    assert ok
