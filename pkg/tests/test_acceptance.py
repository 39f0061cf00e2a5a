"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s``.  Criterion 5 replicates
the full paper-scale Monte Carlo and runs only with RUN_PAPER_SCALE=1 in
the environment (nightly budget).
"""

import itertools
import os
import time

import numpy as np
import pytest

from ctgames import GameConfig, Theta
from ctgames.diagnostics import (
    best_response_jacobian,
    stability_objects,
    stability_sweep,
)
from ctgames.equilibrium import solve_mpe
from ctgames.estimate import ctnpl, init_ccp, rmse_relative
from ctgames.experiments import (
    counterfactual,
    experiment_spec,
    run_monte_carlo,
    simulate_dataset,
    solve_spec,
)
from ctgames.likelihood import loglik_discrete
from ctgames.markov import (
    stationary_distribution,
    transition_matrix,
    uniformization_matrix,
)
from ctgames.simulate import descriptive_stats, sample_discrete, simulate_continuous

from conftest import random_generator


def report(number, passed, detail):
    status = "PASS" if passed else "FAIL"
    print(f"\nACCEPTANCE {number}: {status} -- {detail}")
    assert passed, f"criterion {number}: {detail}"


@pytest.fixture(scope="module")
def exp1_paper():
    spec = experiment_spec(1, scale="paper")
    mpe, pi = solve_spec(spec)
    return spec, mpe, pi


def test_criterion_1_kernel_oracle_equivalence():
    rng = np.random.default_rng(1)
    start = time.monotonic()
    worst_gap, worst_rowsum = 0.0, 0.0
    for trial in range(50):
        k = int(rng.choice([8, 24, 160]))
        scale = float(rng.choice([0.5, 1.0, 5.0]))
        q = random_generator(rng, k, scale=scale)
        pade = transition_matrix(q, 1.0)
        series = uniformization_matrix(q, 1.0)
        worst_gap = max(worst_gap, float(np.abs(pade - series).max()))
        worst_rowsum = max(worst_rowsum,
                           float(np.abs(pade.sum(axis=1) - 1).max()),
                           float(np.abs(series.sum(axis=1) - 1).max()))
    elapsed = time.monotonic() - start
    ok = worst_gap < 1e-10 and worst_rowsum < 1e-10 and elapsed < 30
    report(1, ok, f"50 generators: max |pade - uniformization| = {worst_gap:.2e}, "
                  f"max row-sum error = {worst_rowsum:.2e}, {elapsed:.1f}s")


def test_criterion_2_zero_jacobian_single_agent():
    start = time.monotonic()
    norms = {}
    for label, levels in (("2-state", 1), ("10-state", 5)):
        config = GameConfig(n_players=1, market_levels=levels, lam=1.0, rho=0.05,
                            q_up=0.2 if levels > 1 else 0.0,
                            q_down=0.2 if levels > 1 else 0.0)
        theta = Theta(fc=(-1.9,), rs=1.0, rn=0.0, ec=1.0)
        mpe = solve_mpe(theta, config, tol=1e-13)
        jac = best_response_jacobian(theta, mpe.ccp, config, wrt="sigma",
                                     fd_step=1e-6)
        norms[label] = float(np.abs(jac).max())
    elapsed = time.monotonic() - start
    ok = all(v < 1e-5 for v in norms.values()) and elapsed < 5
    report(2, ok, f"fd |jacobian| at fixed point: 2-state {norms['2-state']:.2e}, "
                  f"10-state {norms['10-state']:.2e}, {elapsed:.1f}s")


def test_criterion_3_paper_scale_mpe_and_steady_state(exp1_paper):
    spec, mpe, pi = exp1_paper
    start = time.monotonic()
    panel = sample_discrete(spec.theta_true, mpe.ccp, spec.config,
                            n_markets=1000, periods=1000, seed=33)
    stats = descriptive_stats(panel, spec.config)
    elapsed = time.monotonic() - start
    avg, firm5 = stats["avg_active"], stats["activity_prob"][4]
    ok = (mpe.residual < 1e-10 and mpe.iterations <= 2000
          and abs(avg - 3.71) <= 0.05 and abs(firm5 - 0.779) <= 0.01
          and elapsed < 300)
    report(3, ok, f"residual {mpe.residual:.1e} in {mpe.iterations} iters; "
                  f"1e6 periods: avg active {avg:.4f} (3.71 +/- 0.05), "
                  f"firm-5 activity {firm5:.4f} (0.779 +/- 0.01), {elapsed:.0f}s")


def test_criterion_4_desk_scale_recovery_and_start_robustness():
    start = time.monotonic()
    spec = experiment_spec(2, scale="desk", sampling="discrete", seed=42,
                           estimators=("CTNPL",), ctnpl_init="frequency")
    assert spec.config.n_states == 24 and spec.n_markets == 200
    mpe, _ = solve_spec(spec)
    mc = run_monte_carlo(spec, ccp_star=mpe.ccp)
    estimates = mc.estimates["CTNPL"]
    truth = spec.theta_true.as_vector()
    mean = estimates.mean(axis=0)
    mc_se = estimates.std(axis=0, ddof=1) / np.sqrt(estimates.shape[0])
    z_scores = np.abs(mean - truth) / mc_se

    data = simulate_dataset(spec, mpe.ccp, spec.seed)
    fits = {}
    for method, seed in (("frequency", None), ("logit", None), ("random", 7)):
        start_ccp = init_ccp(method, data, spec.config, seed=seed)
        fits[method] = ctnpl(data, spec.config, start_ccp, max_stages=100, tol=1e-6)
    gaps = [np.abs(fits[a].ccp_hat - fits[b].ccp_hat).max()
            for a, b in itertools.combinations(fits, 2)]
    elapsed = time.monotonic() - start
    ok = (len(mc.failures) == 0 and np.all(z_scores < 3.0)
          and all(f.converged for f in fits.values())
          and max(gaps) < 1e-4 and elapsed < 1200)
    report(4, ok, f"R=25 CTNPL |z| max {z_scores.max():.2f} (< 3); "
                  f"3-start max |ccp gap| {max(gaps):.1e} (< 1e-4); "
                  f"{len(mc.failures)} failures; {elapsed:.0f}s")


@pytest.mark.skipif(not os.environ.get("RUN_PAPER_SCALE"),
                    reason="nightly paper-scale gate; set RUN_PAPER_SCALE=1")
def test_criterion_5_paper_scale_spot_check():
    start = time.monotonic()
    spec = experiment_spec(1, scale="paper", sampling="continuous",
                           seed=20230815,
                           estimators=("2S-True", "2S-Freq", "2S-Logit",
                                       "2S-Random", "CTNPL"))
    mpe, _ = solve_spec(spec)
    mc = run_monte_carlo(spec, ccp_star=mpe.ccp)
    idx = [0, 5, 7, 6]  # fc1, rs, ec, rn
    target = np.array([-1.9144, 1.0072, 1.0273, 0.0190])
    mean = mc.estimates["CTNPL"].mean(axis=0)[idx]
    gaps = np.abs(mean - target)
    ratios = rmse_relative(mc.estimates, "2S-True", spec.theta_true)
    fc1_ratio = float(ratios["CTNPL"][0])
    elapsed = time.monotonic() - start
    ok = bool(np.all(gaps <= 0.10) and 0.9 <= fc1_ratio <= 1.2)
    report(5, ok, f"CTNPL means {np.round(mean, 4).tolist()} vs published "
                  f"{target.tolist()} (max gap {gaps.max():.3f} <= 0.10); "
                  f"fc1 relative RMSE {fc1_ratio:.4f} in [0.9, 1.2]; {elapsed:.0f}s")


def test_criterion_6_convergence_diagnostics(exp1_paper):
    spec, mpe, _ = exp1_paper
    start = time.monotonic()
    rows = stability_sweep(spec.config, spec.theta_true, [0, 1, 2, 3, 4, 5])
    objects = stability_objects(spec.theta_true, mpe.ccp, spec.config)
    m = objects.annihilator
    idem = float(np.abs(m @ m - m).max())
    annihilation = float(np.abs(m @ objects.theta_jacobian).max())
    elapsed = time.monotonic() - start
    radii = [row.get("rho", np.inf) for row in rows]
    ok = (radii[0] < 1e-4 and all(r < 1.0 for r in radii)
          and 0.3 <= radii[-1] <= 0.9
          and idem < 1e-8 and annihilation < 1e-8 and elapsed < 1800)
    report(6, ok, f"npl radii over rn grid {np.round(radii, 4).tolist()} "
                  f"(0 at rn=0, < 1 everywhere, rn=5 in [0.3, 0.9]); "
                  f"projector idempotency {idem:.1e}, annihilation "
                  f"{annihilation:.1e}; {elapsed:.0f}s")


def test_criterion_7_counterfactual_reproduction():
    start = time.monotonic()
    exp1 = counterfactual(experiment_spec(1, scale="paper"), fc_shift=-0.2,
                          n_draws=50000, seed=77)
    exp6 = counterfactual(experiment_spec(6, scale="paper"), fc_shift=-0.2,
                          n_draws=50000, seed=78)
    elapsed = time.monotonic() - start
    ok = (4.1 <= exp1["pct_change"] <= 7.1 and 27.0 <= exp6["pct_change"] <= 33.0
          and elapsed < 600)
    report(7, ok, f"subsidy effect: benchmark-1 {exp1['pct_change']:.1f}% "
                  f"(band [4.1, 7.1], published 5.6); benchmark-6 "
                  f"{exp6['pct_change']:.1f}% (band [27, 33], published 30.1); "
                  f"{elapsed:.0f}s")


def test_criterion_8_likelihood_identity():
    start = time.monotonic()
    spec = experiment_spec(2, scale="desk", sampling="discrete", seed=88)
    mpe, _ = solve_spec(spec)
    panel = sample_discrete(spec.theta_true, mpe.ccp, spec.config,
                            n_markets=1000, periods=1, seed=88)
    via_expm = loglik_discrete(spec.theta_true, mpe.ccp, panel, spec.config,
                               pmatrix_method="expm")
    via_unif = loglik_discrete(spec.theta_true, mpe.ccp, panel, spec.config,
                               pmatrix_method="uniformization")
    gap = abs(via_expm - via_unif)
    elapsed = time.monotonic() - start
    ok = gap < 1e-8 and elapsed < 10
    report(8, ok, f"K=24, 1000 transitions: |expm - uniformization| = {gap:.2e} "
                  f"(< 1e-8); {elapsed:.1f}s")


def test_criterion_9_hazard_ccp_estimator():
    start = time.monotonic()
    config = GameConfig(n_players=2, market_levels=2, lam=1.0, rho=0.05,
                        q_up=0.3, q_down=0.3)
    theta = Theta(fc=(-1.2, -0.9), rs=1.0, rn=1.0, ec=1.0)
    mpe = solve_mpe(theta, config, tol=1e-12)
    log = simulate_continuous(theta, mpe.ccp, config, n_markets=2000, seed=101,
                              events_per_market=50)
    freq = init_ccp("frequency", log, config)
    gap = float(np.abs(freq[:, 1, :] - mpe.ccp[:, 1, :]).max())
    elapsed = time.monotonic() - start
    ok = log.n_events >= 100000 and gap < 0.05 and elapsed < 60
    report(9, ok, f"{log.n_events} events: max |freq - truth| = {gap:.4f} "
                  f"(< 0.05); {elapsed:.0f}s")
