"""Acceptance suite: every advertised identity at its contract tolerance.

One test per criterion; each prints a single PASS/FAIL line so the suite
doubles as a human-readable conformance report
(``pytest -s tests/test_acceptance.py``).
"""

import subprocess
import sys
import time

import numpy as np

from vattn import (
    RegularizerSpec,
    Scores,
    SimplexDistribution,
    UtilityVector,
    advantage_gradient,
    alibi_softmax,
    attention_matrix,
    chain_rule_gradient,
    cost_matrix,
    entmax,
    envelope_check,
    eot_matrix_objective,
    fenchel_conjugate,
    finite_difference_gradient,
    grid_search_simplex,
    lse,
    lse_hessian_check,
    minimize_on_simplex,
    natural_gradient_identity_check,
    primal_value,
    prior_softmax,
    softmax,
    solve,
    solve_full_eot,
    sparsemax,
)
from vattn.core import QueryKeyBatch, objective_rows, objective_value, regularizer_value


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _sup(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def test_criterion_1_entropy_solver_equals_softmax():
    rng = np.random.default_rng(101)
    started = time.perf_counter()
    worst_eg, worst_grid = 0.0, 0.0
    for index in range(50):
        m = int(rng.integers(2, 17))
        s = Scores(rng.uniform(-5, 5, m))
        tau = [0.5, 1.0, float(np.sqrt(m))][index % 3]
        closed = softmax(s, tau).distribution.weights
        found = minimize_on_simplex(s, RegularizerSpec.shannon(tau))
        assert found.converged
        worst_eg = max(worst_eg, _sup(found.distribution.weights, closed))
        if m <= 3:
            resolution = 10**6 if m == 2 else 2000
            grid = grid_search_simplex(s, RegularizerSpec.shannon(tau), resolution)
            gap = _sup(grid.distribution.weights, closed)
            # the exhaustive search locates the optimum to twice its spacing
            # (2e-6 at resolution 10^6), measured here in spacing units
            worst_grid = max(worst_grid, gap * resolution)
    elapsed = time.perf_counter() - started
    ok = worst_eg < 1e-6 and worst_grid < 2.0 and elapsed < 30.0
    _report(
        "criterion-1 entropy-solver-equals-softmax",
        ok,
        f"eg sup-norm {worst_eg:.3e} (tol 1e-6), grid gap {worst_grid:.3f} grid spacings "
        f"(tol 2), runtime {elapsed:.1f}s (< 30s)",
    )


def test_criterion_2_regularizer_family_coverage():
    rng = np.random.default_rng(102)
    worst = {}

    def oracle_gap(s, reg, closed):
        found = minimize_on_simplex(s, reg)
        assert found.converged
        return _sup(found.distribution.weights, closed)

    for name, make in (
        ("sparsemax", lambda s, m: (RegularizerSpec.l2(), sparsemax(s))),
        ("entmax-1.5", lambda s, m: (RegularizerSpec.tsallis(1.5), entmax(s, 1.5))),
        ("entmax-2", lambda s, m: (RegularizerSpec.tsallis(2.0), entmax(s, 2.0))),
        ("entmax-3", lambda s, m: (RegularizerSpec.tsallis(3.0), entmax(s, 3.0))),
        (
            "alibi",
            lambda s, m: (
                reg := RegularizerSpec.alibi(
                    float(rng.uniform(0, 2)), int(rng.integers(1, m + 1)), 1.0
                ),
                alibi_softmax(s, reg.query_position, reg.gamma, reg.temperature),
            ),
        ),
        (
            "prior-softmax",
            lambda s, m: (
                reg := RegularizerSpec.kl_prior(
                    SimplexDistribution(0.9 * rng.dirichlet(np.ones(m)) + 0.1 / m), 1.0
                ),
                prior_softmax(s, reg.prior, reg.temperature),
            ),
        ),
    ):
        gap = 0.0
        for _ in range(50):
            m = int(rng.integers(2, 17))
            s = Scores(rng.uniform(-5, 5, m))
            reg, closed = make(s, m)
            gap = max(gap, oracle_gap(s, reg, closed.distribution.weights))
        worst[name] = gap
    identities = {"entmax2-vs-sparsemax": 0.0, "prior-uniform": 0.0, "alibi-gamma0": 0.0}
    for _ in range(50):
        m = int(rng.integers(2, 17))
        s = Scores(rng.uniform(-5, 5, m))
        identities["entmax2-vs-sparsemax"] = max(
            identities["entmax2-vs-sparsemax"],
            _sup(entmax(s, 2.0).distribution.weights, sparsemax(s).distribution.weights),
        )
        identities["prior-uniform"] = max(
            identities["prior-uniform"],
            _sup(
                prior_softmax(s, SimplexDistribution.uniform(m), 1.0).distribution.weights,
                softmax(s, 1.0).distribution.weights,
            ),
        )
        identities["alibi-gamma0"] = max(
            identities["alibi-gamma0"],
            _sup(
                alibi_softmax(s, 1, 0.0, 1.0).distribution.weights,
                softmax(s, 1.0).distribution.weights,
            ),
        )
    ok = (
        all(gap < 1e-6 for gap in worst.values())
        and identities["entmax2-vs-sparsemax"] < 1e-10
        and identities["prior-uniform"] < 1e-12
        and identities["alibi-gamma0"] < 1e-15
    )
    _report(
        "criterion-2 regularizer-family-coverage",
        ok,
        f"oracle gaps {max(worst.values()):.3e} (tol 1e-6), "
        f"entmax2=sparsemax {identities['entmax2-vs-sparsemax']:.3e} (1e-10), "
        f"prior-uniform {identities['prior-uniform']:.3e} (1e-12), "
        f"alibi-gamma0 {identities['alibi-gamma0']:.3e} (1e-15)",
    )


def test_criterion_3_advantage_gradient_identity():
    rng = np.random.default_rng(103)
    worst_gap, worst_sum = 0.0, 0.0
    for _ in range(1000):
        m = int(rng.integers(2, 17))
        t = float(rng.uniform(0.25, 4.0))
        p = softmax(Scores(rng.uniform(-5, 5, m)), t).distribution
        u = UtilityVector(rng.uniform(-3, 3, m))
        report = advantage_gradient(p, u, t)
        worst_gap = max(worst_gap, _sup(report.score_gradient, chain_rule_gradient(p, u, t)))
        worst_sum = max(worst_sum, abs(float(report.score_gradient.sum())))
    ok = worst_gap < 1e-12 and worst_sum < 1e-10
    _report(
        "criterion-3 advantage-gradient",
        ok,
        f"chain-rule gap {worst_gap:.3e} (tol 1e-12), gradient sum {worst_sum:.3e} (tol 1e-10)",
    )


def test_criterion_4_natural_gradient_duality():
    rng = np.random.default_rng(104)
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(2, 17))
        t = float(rng.uniform(0.25, 4.0))
        p = softmax(Scores(rng.uniform(-5, 5, m)), t).distribution
        u = UtilityVector(rng.uniform(-3, 3, m))
        worst = max(worst, natural_gradient_identity_check(p, u, t))
    ok = worst < 1e-12
    _report("criterion-4 natural-gradient-duality", ok, f"residual {worst:.3e} (tol 1e-12)")


def test_criterion_5_geometry_and_envelope():
    rng = np.random.default_rng(105)
    worst_hess, worst_lse_grad, worst_envelope = 0.0, 0.0, 0.0
    for _ in range(100):
        m = int(rng.integers(2, 9))
        s = Scores(rng.uniform(-5, 5, m))
        t = float(rng.uniform(0.5, 2.0))
        worst_hess = max(worst_hess, lse_hessian_check(s, t, 1e-4))
        numeric = finite_difference_gradient(lambda x: lse(Scores(x), t), s.values, 1e-5)
        worst_lse_grad = max(
            worst_lse_grad, _sup(numeric, softmax(s, t).distribution.weights)
        )
        worst_envelope = max(worst_envelope, envelope_check(s, t, 1e-5))
    ok = worst_hess < 1e-6 and worst_lse_grad < 1e-7 and worst_envelope < 1e-7
    _report(
        "criterion-5 geometry-and-envelope",
        ok,
        f"hessian {worst_hess:.3e} (tol 1e-6), lse-grad {worst_lse_grad:.3e} (tol 1e-7), "
        f"envelope {worst_envelope:.3e} (tol 1e-7)",
    )


def test_criterion_6_strong_duality_and_conjugacy():
    rng = np.random.default_rng(106)
    worst_dual, worst_conj, worst_young = 0.0, 0.0, 0.0
    for _ in range(50):
        m = int(rng.integers(2, 9))
        s = Scores(rng.uniform(-5, 5, m))
        t = float(rng.uniform(0.5, 2.0))
        reg = RegularizerSpec.shannon(t)
        worst_dual = max(worst_dual, abs(primal_value(s, t) + lse(s, t)))
        conjugate = fenchel_conjugate(reg, s)
        worst_conj = max(worst_conj, abs(conjugate - lse(s, t)))
        p_star = softmax(s, t).distribution
        worst_young = max(
            worst_young,
            abs(
                regularizer_value(p_star, reg)
                + conjugate
                - float(np.dot(p_star.weights, s.values))
            ),
        )
    ok = worst_dual < 1e-10 and worst_conj < 1e-8 and worst_young < 1e-8
    _report(
        "criterion-6 strong-duality-and-conjugacy",
        ok,
        f"primal+lse {worst_dual:.3e} (tol 1e-10), conjugate-vs-lse {worst_conj:.3e} (1e-8), "
        f"conjugacy equality {worst_young:.3e} (1e-8)",
    )


def test_criterion_7_full_transport_plan():
    rng = np.random.default_rng(107)
    worst_gap, worst_row, worst_opt = 0.0, 0.0, -np.inf
    for _ in range(20):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(1, 9))
        d = int(rng.integers(1, 17))
        scale = 1.0 / np.sqrt(d)
        batch = QueryKeyBatch(
            rng.uniform(-1, 1, (n, d)) * scale, rng.uniform(-1, 1, (m, d)) * scale
        )
        eps = float(rng.choice([0.5, 1.0, np.sqrt(d)]))
        closed = attention_matrix(batch, eps)
        solved = solve_full_eot(batch, eps)
        worst_gap = max(worst_gap, _sup(solved.entries, closed.entries))
        for plan in (closed, solved):
            worst_row = max(worst_row, float(np.max(np.abs(plan.entries.sum(axis=1) - 1.0))))
        cost = cost_matrix(batch)
        target = eot_matrix_objective(closed, cost, eps)
        rivals = rng.dirichlet(np.ones(m), size=(1000, n))
        safe = np.where(rivals > 0.0, rivals, 1.0)
        rival_objectives = np.sum(rivals * cost.entries, axis=(1, 2)) + eps * np.sum(
            rivals * np.log(safe), axis=(1, 2)
        )
        worst_opt = max(worst_opt, target - float(np.min(rival_objectives)))
    ok = worst_gap < 1e-6 and worst_row < 1e-12 and worst_opt <= 1e-9
    _report(
        "criterion-7 full-transport-plan",
        ok,
        f"solver gap {worst_gap:.3e} (tol 1e-6), row sums {worst_row:.3e} (1e-12), "
        f"optimality slack {worst_opt:.3e} (<= 1e-9)",
    )


def test_criterion_8_optimality_certificates():
    rng = np.random.default_rng(108)
    worst = -np.inf
    for kind in ("shannon", "l2", "tsallis", "alibi", "kl_prior"):
        for _ in range(100):
            m = int(rng.integers(2, 17))
            s = Scores(rng.uniform(-5, 5, m))
            if kind == "shannon":
                reg = RegularizerSpec.shannon(float(rng.uniform(0.5, 2.0)))
            elif kind == "l2":
                reg = RegularizerSpec.l2()
            elif kind == "tsallis":
                reg = RegularizerSpec.tsallis(float(rng.choice([1.5, 2.0, 3.0])))
            elif kind == "alibi":
                reg = RegularizerSpec.alibi(
                    float(rng.uniform(0, 2)), int(rng.integers(1, m + 1)), 1.0
                )
            else:
                reg = RegularizerSpec.kl_prior(
                    SimplexDistribution(0.9 * rng.dirichlet(np.ones(m)) + 0.1 / m), 1.0
                )
            best = objective_value(solve(s, reg).distribution, s, reg)
            sampled = objective_rows(rng.dirichlet(np.ones(m), size=1000), s, reg)
            worst = max(worst, best - float(sampled.min()))
    ok = worst <= 1e-9
    _report(
        "criterion-8 optimality-certificates",
        ok,
        f"worst closed-form excess over 1000 random points {worst:.3e} (<= 1e-9)",
    )


def test_criterion_9_verify_all_command():
    started = time.perf_counter()
    completed = subprocess.run(
        [sys.executable, "-m", "vattn", "verify", "all", "--seed", "0", "--trials", "100"],
        capture_output=True,
        text=True,
        timeout=300,
    )
    elapsed = time.perf_counter() - started
    ok = completed.returncode == 0 and elapsed < 300.0
    _report(
        "criterion-9 verify-all-command",
        ok,
        f"exit {completed.returncode}, runtime {elapsed:.1f}s (< 300s)"
        + ("" if ok else f"; stderr: {completed.stderr[-400:]}"),
    )
