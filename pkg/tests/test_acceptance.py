"""Acceptance gate: each numbered criterion asserted at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL line
per criterion.  The two large Monte Carlo runs share one set of paths.
"""

import math
import time

import numpy as np
import pytest

import mtemsim as m
from mtemsim.cli import parse_config, run_command

DELTA_41 = 5e-4  # acceptance step size for example41, below 4^-5


def _report(number: int, ok: bool, elapsed: float, budget: float, detail: str) -> None:
    verdict = "PASS" if ok else "FAIL"
    print(f"[criterion {number:2d}] {verdict} ({elapsed:6.2f}s / budget {budget:g}s)  {detail}", flush=True)


@pytest.fixture(scope="module")
def ex41():
    return m.example41()


@pytest.fixture(scope="module")
def policy():
    return m.example41_policy()


@pytest.fixture(scope="module")
def example41_run(ex41, policy):
    """Shared Monte Carlo run for criteria 6 and 7: p=1/2, delta=5e-4, x0=2, T=5, N=1e4."""
    start = time.perf_counter()
    run = m.run_stability_mc(
        ex41, policy, "mtem", 0.5, 2.0, DELTA_41, 10_000, 10_000, 670,
        refinement=1, workers=4,
    )
    return run, time.perf_counter() - start


def test_criterion_01_global_lipschitz_bound(ex41):
    start = time.perf_counter()
    worst = []
    for h in (1.0, 2.0, 5.0):
        report = m.verify_lemma_global_lipschitz(ex41, h, trials=100_000, seed=101)
        bound = 3.0 * max(1.0 + 3.0 * h * h, 2.0 + 2.0 * h)
        assert report.bound == pytest.approx(bound)
        assert report.inside_pairs > 0 and report.outside_pairs > 0 and report.straddling_pairs > 0
        worst.append((h, max(report.max_ratio_drift, report.max_ratio_diffusion), bound, report.passed))
    elapsed = time.perf_counter() - start
    ok = all(w[3] and w[1] <= w[2] * (1.0 + 1e-9) for w in worst)
    detail = "; ".join(f"h={h:g}: max ratio {r:.3f} <= 3L_h={b:g}" for h, r, b, _ in worst)
    _report(1, ok, elapsed, 10.0, detail)
    assert ok
    assert elapsed < 10.0


def test_criterion_02_lambda_preserved_and_estimated(ex41, policy):
    start = time.perf_counter()
    h = policy.radius(DELTA_41)
    report = m.verify_lemma_lambda_preserved(ex41, h, 0.5, 1.0)
    worst_dev = max(abs(report.supremum + 1.0), abs(report.minimum + 1.0))
    lam_hat = m.estimate_lambda(ex41, 0.5)
    elapsed = time.perf_counter() - start
    ok = report.passed and worst_dev <= 1e-9 and abs(lam_hat - 1.0) <= 1e-9
    _report(2, ok, elapsed, 5.0,
            f"every sampled point within {worst_dev:.2e} of -1 over {report.points} points; "
            f"lambda_hat = {lam_hat:.12f}")
    assert ok
    assert elapsed < 5.0


def test_criterion_03_step_condition_identity(ex41, policy):
    start = time.perf_counter()
    deltas = [1e-5, 1e-6, 1e-7]
    report = m.verify_step_condition(policy, ex41.lipschitz_bound, deltas)
    rel_errs = [abs(row.product - row.delta**0.2) / row.delta**0.2 for row in report.rows]
    elapsed = time.perf_counter() - start
    ok = report.passed and max(rel_errs) <= 1e-12
    _report(3, ok, elapsed, 5.0,
            f"L_h^4*delta = delta^(1/5) to {max(rel_errs):.2e} relative over {deltas}")
    assert ok
    assert elapsed < 5.0


def test_criterion_04_radius_inversion(ex41):
    start = time.perf_counter()
    delta = 1.0 / (2.0 * 13.0**4)  # l(2) with L_2 = 13
    root = m.derive_h_from_lipschitz(ex41.lipschitz_bound, delta, tol=1e-12)
    elapsed = time.perf_counter() - start
    ok = abs(root - 2.0) <= 1e-9
    _report(4, ok, elapsed, 5.0, f"h({delta:.6e}) = {root:.12f} (target 2)")
    assert ok
    assert elapsed < 5.0


def test_criterion_05_linear_model_exponent_oracle():
    start = time.perf_counter()
    model = m.linear(-1.0, 0.5)
    lin_policy = m.policy_from_lipschitz(model.lipschitz_bound)
    run = m.run_stability_mc(model, lin_policy, "mtem", 0.5, 1.0, 1e-3, 10_000, 10_000, 510,
                             refinement=1, workers=4)
    fit = m.fit_exponent(run.moments, (4.0, 10.0))
    elapsed = time.perf_counter() - start
    target = 0.5 * (-1.0 + (0.5 - 1.0) * 0.25 / 2.0)  # p (mu + (p-1) sigma^2 / 2)
    assert target == pytest.approx(-0.53125)
    rel_err = abs(fit.slope - target) / abs(target)
    ok = rel_err <= 0.15
    _report(5, ok, elapsed, 60.0,
            f"fitted slope {fit.slope:.5f} vs closed form {target} (rel err {rel_err:.3%})")
    assert ok
    assert elapsed < 60.0


def test_criterion_06_example41_moment_decay(example41_run):
    run, elapsed = example41_run
    fit = m.fit_exponent(run.moments, (2.0, 5.0))  # last 60% of T = 5
    decays = run.moments.means[-1] < run.moments.means[0]
    ok = fit.slope <= -0.25 and run.moments.diverged_paths == 0 and decays
    _report(6, ok, elapsed, 120.0,
            f"fitted slope {fit.slope:.4f} <= -p(lambda-eps) = -0.25 (eps = 0.5)")
    assert ok
    assert elapsed < 120.0


def test_criterion_07_example41_pathwise_decay(example41_run):
    run, _ = example41_run
    start = time.perf_counter()
    pw = run.pathwise
    elapsed = time.perf_counter() - start
    ok = pw.q95 <= -0.5 and pw.diverged == 0
    _report(7, ok, elapsed, 120.0,
            f"95% quantile of log|X_K|/(K delta) = {pw.q95:.4f} <= -(1-eps) = -0.5 "
            f"(median {pw.q50:.4f}, censored {pw.censored})")
    assert ok


def test_criterion_08_one_step_contraction(ex41, policy):
    start = time.perf_counter()
    h = policy.radius(DELTA_41)
    nodes, weights = np.polynomial.hermite.hermgauss(201)
    bound = 1.0 - 0.25 * DELTA_41  # 1 - p(lambda - eps) delta
    ratios = {}
    for x in (0.5, 1.0, 2.0):
        fd = float(m.eval_f_delta(ex41, h, x)[0])
        gd = float(m.eval_g_delta(ex41, h, x)[0])
        x1 = x + fd * DELTA_41 + gd * math.sqrt(2.0 * DELTA_41) * nodes
        expectation = float(np.sum(weights * np.abs(x1) ** 0.5) / math.sqrt(math.pi))
        ratios[x] = expectation / x**0.5
    elapsed = time.perf_counter() - start
    ok = all(r <= bound for r in ratios.values())
    detail = ", ".join(f"x={x:g}: {r:.8f}" for x, r in ratios.items())
    _report(8, ok, elapsed, 5.0, f"{detail} all <= {bound:.8f}")
    assert ok
    assert elapsed < 5.0


def test_criterion_09_fixed_point_and_determinism(tmp_path):
    start = time.perf_counter()

    zero_cfg = parse_config(flags=dict(
        model="example41", delta="5e-4", steps="100", paths="4", seed="11",
        refinement="1", x0="0.0", out=str(tmp_path / "zero")))
    assert run_command("simulate", zero_cfg) == 0
    rows = (tmp_path / "zero_paths.csv").read_text().splitlines()[1:]
    zero_ok = all(row.split(",")[3] == "0" for row in rows)

    blobs = {}
    manifests = {}
    for workers in (1, 4, 8):
        out = tmp_path / f"w{workers}"
        cfg = parse_config(flags=dict(
            model="example41", delta="5e-4", steps="200", paths="96", seed="11",
            refinement="1", x0="2.0", window="0.2:1.0", out=str(out)))
        assert run_command("exponent", cfg, workers=workers) == 0
        assert run_command("simulate", cfg, workers=workers) == 0
        blobs[workers] = tuple(
            (out.parent / f"{out.name}_{suffix}").read_bytes()
            for suffix in ("moment.csv", "fit.csv", "paths.csv")
        )
        # manifests differ only in the out prefix each run had to write under
        manifests[workers] = [
            line for line in (out.parent / f"{out.name}_manifest.txt").read_text().splitlines()
            if not line.startswith("out=")
        ]
    identical = blobs[1] == blobs[4] == blobs[8] and manifests[1] == manifests[4] == manifests[8]
    elapsed = time.perf_counter() - start
    ok = zero_ok and identical
    _report(9, ok, elapsed, 10.0,
            f"x0=0 rows all zero: {zero_ok}; CSV bytes identical across 1/4/8 workers: {identical}")
    assert ok
    assert elapsed < 10.0


def test_criterion_10_em_baseline_contrast(tmp_path):
    start = time.perf_counter()
    cfg = parse_config(flags=dict(
        model="example41", delta="5e-4", steps="10000", paths="1000", seed="20260810",
        refinement="1", x0="2.0", out=str(tmp_path / "cmp")))
    assert run_command("compare", cfg, workers=4) == 0
    tallies = {}
    for line in (tmp_path / "cmp_tallies.csv").read_text().splitlines()[1:]:
        scheme, paths, diverged, fraction = line.split(",")
        tallies[scheme] = (int(diverged), float(fraction))
    elapsed = time.perf_counter() - start
    em_count, em_fraction = tallies["em"]
    mtem_count, _ = tallies["mtem"]
    # pilot run at these settings recorded 153/1000 EM divergences; the band
    # below guards the recorded value without asserting it from theory
    ok = em_count > 0 and mtem_count == 0 and 0.02 <= em_fraction <= 0.60
    _report(10, ok, elapsed, 60.0,
            f"EM diverged {em_count}/1000 (pilot: 153), MTEM diverged {mtem_count}/1000")
    assert ok
