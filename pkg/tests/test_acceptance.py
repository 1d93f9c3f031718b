"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""

import math
import os
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from commcert.certify import certify, region_table
from commcert.estimate import beta_quantile, clopper_pearson_lower
from commcert.evalharness import SPLITTING, sweep_curves, validate_guarantee
from commcert.graphio import parse_edge_list, parse_node_labels, structure_vector
from commcert.oracle import (
    check_lemma,
    check_region_tables,
    check_soundness,
    check_tightness,
    exact_output_prob,
    random_biased_table,
)
from commcert.smoothing import CommunityFunction, NoiseSpec, TruthTableFunction

from conftest import email_missing_message, email_paths, planted_partition, write_dataset
from protocol_checks import ALPHAS, BETAS, SAMPLE_SIZES, qualitative_checks


def report(num, title, ok, detail):
    print(f"\n{'PASS' if ok else 'FAIL'} criterion {num}: {title} :: {detail}")
    assert ok, f"criterion {num} failed: {detail}"


def test_01_region_tables_equal_enumeration():
    t0 = time.time()
    row = check_region_tables(12)
    elapsed = time.time() - t0
    report(1, "region tables == enumeration (n<=12, exact)", row.passed and elapsed < 300,
           f"{row.cases} tables, {row.violations} mismatches, {elapsed:.1f}s")


def test_02_partition_identity_hundred_node_space():
    t0 = time.time()
    bad = []
    for l in (1, 10, 50, 100):
        t = region_table(4950, l, NoiseSpec("7/10"))
        if t.total_x != 1 or t.total_y != 1:
            bad.append(l)
    elapsed = time.time() - t0
    report(2, "sum Pr(X in H) = sum Pr(Y in H) = 1 at n=4950", not bad and elapsed < 120,
           f"failing l={bad}, {elapsed:.1f}s")


def test_03_soundness_by_exhaustion():
    row = check_soundness(200, n=10, seed=0)
    report(3, "exact soundness for every delta within L (200 functions, n=10)", row.passed,
           f"{row.cases} perturbations checked, {row.violations} violations")


def test_04_tightness():
    row = check_tightness(range(4, 11), ("0.6", "0.7", "0.8"))
    report(4, "worst case at |delta| = L+1 has Pr(f*(Y)=y) <= 1/2", row.passed,
           f"{row.cases} constructions, {row.violations} violations")


def test_05_lemma_stress():
    row = check_lemma(10_000, n=8, beta="0.7", l=3, seed=0)
    report(5, "likelihood-ratio lemma stress (n=8)", row.passed and row.cases >= 10_000,
           f"{row.cases} trials, {row.violations} violations")


def test_06_clopper_pearson():
    worst = 0.0
    for N in (1, 5, 50, 500, 1000, 10_000):
        for q in (1e-6, 0.001, 0.05, 0.5):
            worst = max(worst, abs(beta_quantile(q, N, 1) - q ** (1.0 / N)))
    rng = np.random.default_rng(0)
    N, p, alpha, trials = 1000, 0.8, 0.001, 10_000
    m = rng.binomial(N, p, size=trials)
    covered = np.mean([clopper_pearson_lower(int(k), N, alpha) <= p for k in m])
    sigma = math.sqrt(alpha * (1 - alpha) / trials)
    ok = worst <= 1e-12 and covered >= 1 - alpha - 3 * sigma
    report(6, "Clopper-Pearson closed form and coverage", ok,
           f"max closed-form error {worst:.2e}, coverage {covered:.4f} (need >= {1 - alpha - 3 * sigma:.4f})")


def test_07_confidence_statement():
    rng = np.random.default_rng(7)
    n, x = 10, np.zeros(10, dtype=np.uint8)
    spec = NoiseSpec("7/10")
    while True:
        f = TruthTableFunction(random_biased_table(n, rng))
        _, p1 = exact_output_prob(f, x, spec)
        if 0.7 <= p1 <= 0.9:
            break
    p = float(p1)
    runs, alpha = 1000, 0.05
    over = 0
    for r in range(runs):
        res = certify(f, x, spec, 500, alpha, seed=r)
        p_true = p if res.y_hat == 1 else 1 - p
        over += res.p_lower > p_true
    frac = over / runs
    bound = alpha + 3 * math.sqrt(alpha * (1 - alpha) / runs)
    report(7, "Pr(p_lower > p) <= alpha over independent runs", frac <= bound,
           f"p={p:.4f}, p_lower > p in {over}/{runs} = {frac:.3f} (bound {bound:.3f})")


@pytest.fixture(scope="module")
def email_sweep():
    paths = email_paths()
    if paths is None:
        return None
    graph = parse_edge_list(paths[0])
    gt = parse_node_labels(paths[1])
    t0 = time.time()
    sw = sweep_curves(graph, gt, BETAS, SAMPLE_SIZES, ALPHAS, seed=0)
    return graph, gt, sw, time.time() - t0


def test_08_email_qualitative(email_sweep):
    if email_sweep is None:
        report(8, "Email certified-accuracy protocol", False, email_missing_message())
    _, _, sw, elapsed = email_sweep
    checks = qualitative_checks(sw)
    for name, ok, detail in checks:
        print(f"  {'ok ' if ok else 'BAD'} {name}: {detail}")
    report(8, "Email certified-accuracy protocol", all(ok for _, ok, _ in checks) and elapsed < 7200,
           f"{sum(ok for _, ok, _ in checks)}/{len(checks)} checks, {elapsed / 60:.1f} min")


def test_09_email_validation(email_sweep):
    if email_sweep is None:
        report(9, "Email guarantee validation", False, email_missing_message())
    graph, _, sw, _ = email_sweep
    exp = sw.experiments[SPLITTING]
    results = sw.results[(0.7, 1000, 0.001, SPLITTING)]
    x = structure_vector(exp.graph, exp.space)
    chosen = [(r, v) for r, v in zip(results, exp.victim_sets) if not r.abstain and r.L][:20]
    flips = checked = 0
    for i, (res, vs) in enumerate(chosen):
        f = CommunityFunction(exp.graph, exp.space, vs.nodes, detector_seed=0)
        rep = validate_guarantee(res, f, x, trials=200, seed=i)
        flips += rep.high_confidence_flips
        checked += rep.checked
    report(9, "Email guarantee validation", len(chosen) == 20 and flips == 0,
           f"{len(chosen)} sets, {checked} perturbations, {flips} high-confidence flips")


def test_10_cli_determinism(tmp_path):
    graph, gt = planted_partition([20] * 6, 0.3, 0.02, seed=1)
    edges, labels = write_dataset(tmp_path, graph, gt)
    curves = {}
    for mode in ("splitting", "merging"):
        for run in ("a", "b"):
            out = tmp_path / f"{mode}_{run}"
            cfg = tmp_path / f"{mode}_{run}.cfg"
            cfg.write_text(
                f"dataset = {edges}\ncommunities = {labels}\nbeta = 0.7\nalpha = 0.001\n"
                f"n_samples = 80\nvictim_size = 2\nattacker_nodes = 25\nseed = 11\nl_max = 60\n"
                f"out_dir = {out}\nvictim_count = 40\n"
            )
            subprocess.run([sys.executable, "-m", "commcert.cli", "evaluate", "--config", str(cfg), "--mode", mode],
                           check=True, capture_output=True)
            curves[mode, run] = (out / "curve.csv").read_bytes()
    same = all(curves[m, "a"] == curves[m, "b"] for m in ("splitting", "merging"))
    report(10, "repeated CLI runs give byte-identical curve.csv", same,
           f"{len(curves)} runs, {len(curves['splitting', 'a'])} bytes per splitting curve")
