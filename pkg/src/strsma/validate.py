"""Fast self-checks of the library's invariants, used by ``strsma validate``.

Each check returns ``(passed, detail)``.  The checks are scaled-down versions
of the test suite's oracles so they finish in well under a minute.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import harness, qcqp
from .channel import ChannelSet, ntn_feasibility
from .spacetime import (FeedPair, common_rate_st, effective_matrix, private_rates,
                        select_feed_pair, simulate_link)
from .wmmse import Mode, WmmseParams, mmse_update, solve_maxmin


def _cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def check_wmmse_identity(rng):
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(1, 5))
        h = _cn(rng, k, 2) * 3
        P = _cn(rng, 2, k)
        pc = float(rng.uniform(0, 2))
        w = mmse_update(h, pc, P)
        rc = common_rate_st(h, pc, P)
        rp = private_rates(h, P)
        worst = max(worst, np.max(np.abs(1 - w.xi_c[:, 0] - rc)),
                    np.max(np.abs(1 - w.xi_p[:, 0] - rp)))
    return worst <= 1e-10, f"max |1 - xi - R| = {worst:.2e}"


@dataclass
class _Sol:
    p_c: float
    P: np.ndarray
    pair: FeedPair | None = None


def check_alamouti(rng):
    err = max(np.max(np.abs(effective_matrix(h) - np.vdot(h, h).real * np.eye(2)))
              for h in _cn(rng, 1000, 2))
    worst = 0.0
    for _ in range(2):
        k = 3
        h = _cn(rng, k, 2) * 2
        sol = _Sol(float(rng.uniform(0.5, 2)), _cn(rng, 2, k) * 0.5)
        ch = ChannelSet(h_true=h)
        m = simulate_link(ch, sol, 100_000, int(rng.integers(1 << 30)))
        interf = np.abs(np.conj(h) @ sol.P) ** 2
        c_ref = np.sum(np.abs(h) ** 2, axis=1) * sol.p_c / 2 / (interf.sum(1) + 1)
        own = np.diag(interf)
        p_ref = own / (interf.sum(1) - own + 1)
        worst = max(worst, np.max(np.abs(m.common_sinr / c_ref - 1)),
                    np.max(np.abs(m.private_sinr / p_ref - 1)))
    ok = err <= 1e-12 and worst <= 0.02
    return ok, f"orthogonality err {err:.1e}, SINR rel err {worst:.3%}"


def check_qcqp(rng):
    # maximise c^T x over a random ellipsoid: closed form c^T x0 + sqrt(c^T A^-1 c)
    worst, kkt = 0.0, 0.0
    for _ in range(10):
        n = int(rng.integers(2, 6))
        B = rng.standard_normal((n, n))
        A = B @ B.T + n * np.eye(n)
        x0 = rng.standard_normal(n) * 0.3
        c = rng.standard_normal(n)
        # (x - x0)^T A (x - x0) <= 1
        prob = qcqp.QcqpProblem(objective=c, Q=A[None], a=(2 * A @ x0)[None],
                                b=np.array([x0 @ A @ x0 - 1.0]))
        sol = qcqp.solve(prob, x0)
        exact = c @ x0 + math.sqrt(c @ np.linalg.solve(A, c))
        worst = max(worst, abs(sol.objective_value - exact))
        kkt = max(kkt, sol.kkt_residual)
    return worst <= 1e-6 and kkt <= 1e-6, f"objective err {worst:.1e}, KKT {kkt:.1e}"


def check_single_user(rng):
    worst = 0.0
    for _ in range(3):
        h = _cn(rng, 1, 2) * 3
        ch = ChannelSet(h_true=h, h_est=h, error_cov=np.zeros((1, 2, 2)), samples=h[:, None, :])
        bound = math.log2(1 + np.vdot(h, h).real)
        for mode in (Mode.ST_RSMA, Mode.RSMA):
            sol = solve_maxmin(ch, mode, WmmseParams())
            worst = max(worst, abs(sol.in_sample.min_rate / bound - 1))
    return worst <= 0.01, f"worst gap to log2(1 + ||h||^2 P) {worst:.3%}"


def check_feasibility(rng):
    got = [ntn_feasibility(s, 0.07, d) for s in (60e3, 120e3) for d in (8.4e3, 21e3)]
    vals = {(g.as_dict()["symbol_duration_us"], g.as_dict()["total_symbol_duration_us"])
            for g in got} | {(None, g.as_dict()["coherence_time_us"]) for g in got}
    want = {(16.67, 17.84), (8.33, 8.91), (None, 50.37), (None, 20.15)}
    verdicts = [g.st_block_feasible for g in got]
    ok = vals == want and verdicts == [True, False, True, True]
    return ok, f"durations/coherence {sorted(vals, key=str)}, feasible {verdicts}"


def check_pair_selection(rng):
    mismatches = 0
    for _ in range(100):
        h = _cn(rng, 4, 4) * rng.uniform(0.1, 5, size=(4, 4))
        cov = np.stack([np.eye(4) * rng.uniform(0, 1)] * 4)
        ch = ChannelSet(h_true=h, h_est=h, error_cov=cov)
        e = np.abs(h) ** 2 + np.real(np.diagonal(cov, axis1=1, axis2=2))
        scores = {p: np.min(e[:, p[0]] + e[:, p[1]])
                  for p in itertools.combinations(range(4), 2)}
        best = max(scores, key=scores.get)
        got = select_feed_pair(ch)
        scaled = select_feed_pair(ChannelSet(h_true=h * 3, h_est=h * 3, error_cov=cov * 9))
        mismatches += (got.m, got.n) != best or scaled != got
    return mismatches == 0, f"{mismatches} mismatches in 100 instances"


def check_determinism(rng):
    cfg = harness.ScenarioConfig(k_users=2, s_samples=5, n_trials=2,
                                 modes=("SDMA", "FRR"), sigma_e=(0.0, 1.0),
                                 master_seed=int(rng.integers(1 << 30)))
    a = harness.to_csv(harness.sweep(cfg), runtime=False)
    b = harness.to_csv(harness.sweep(cfg), runtime=False)
    return a == b, f"{a.count(chr(10)) - 1} rows compared"


CHECKS = {
    "wmmse-rate identity": check_wmmse_identity,
    "alamouti orthogonality and SINR": check_alamouti,
    "qcqp closed-form ellipsoids": check_qcqp,
    "single-user optimality": check_single_user,
    "ntn feasibility arithmetic": check_feasibility,
    "feed-pair selection": check_pair_selection,
    "sweep determinism": check_determinism,
}


def run_all(seed: int = 2024, out=print) -> bool:
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crash is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
