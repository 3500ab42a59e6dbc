import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import expected_power
from strsma.channel import ChannelSet, SatelliteGeometry, draw_saa_samples, impair_csit, \
    place_users, synth_channel
from strsma.spacetime import FeedPair, common_rate_st, private_rates
from strsma.wmmse import (INV_LN2, EqualizerWeights, Layout, Mode, WmmseParams, average_terms,
                          build_subproblem, conventional_rsma_subproblem, evaluate_rates,
                          frr_rate, lift_hermitian, lift_vector, mmse_update, mse, mse_terms,
                          per_sample_terms, solve_maxmin, wmse)

KAPPA = 1 / math.log(2)


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def perfect_csit(h):
    h = np.asarray(h, dtype=complex)
    k, n = h.shape
    return ChannelSet(h_true=h, h_est=h, error_cov=np.zeros((k, n, n)), samples=h[:, None, :])


def scenario(k, sigma_e, s, seed, n_t=2):
    geom = SatelliteGeometry()
    ch = synth_channel(geom, place_users(geom, n_t, k, seed))
    return draw_saa_samples(impair_csit(ch, sigma_e, seed + 1), s, seed + 2)


class TestMseTerms:
    def test_zero_power(self):
        assert mse_terms(np.array([1.0, 2.0]), 0.0, np.zeros((2, 1))) == (1.0, 1.0)

    def test_hand_point(self):
        t_c, t_p = mse_terms(np.array([1.0, 0.0]), 2.0, np.zeros((2, 1)))
        assert (t_c, t_p) == (2.0, 1.0)

    def test_brute_force_moments(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            h, P = cn(rng, 2), cn(rng, 2, 3)
            pc, s2 = rng.uniform(0, 3), rng.uniform(0.1, 2)
            interf = [np.vdot(h, P[:, j]) for j in range(3)]
            want_p = expected_power(interf + [math.sqrt(s2)])
            want_c = expected_power([np.linalg.norm(h) * math.sqrt(pc / 2)] + interf
                                    + [math.sqrt(s2)])
            t_c, t_p = mse_terms(h, pc, P, s2)
            assert t_c == pytest.approx(want_c, rel=1e-12)
            assert t_p == pytest.approx(want_p, rel=1e-12)
            assert t_c >= t_p >= s2

    def test_pair_restricts_common_energy(self):
        h = np.array([1.0, 5.0, 2.0])
        t_c, t_p = mse_terms(h, 2.0, np.zeros((3, 1)), 1.0, FeedPair(0, 2, 3))
        assert t_c - t_p == pytest.approx(5.0)

    def test_negative_power(self):
        with pytest.raises(ValueError):
            mse_terms(np.ones(2), -1.0, np.zeros((2, 1)))


class TestMmseUpdate:
    def test_scalar_point(self):
        w = mmse_update(np.array([[1.0]]), 2.0, np.zeros((1, 1)))
        assert w.eps_c[0, 0] == pytest.approx(0.5)
        assert w.u_c[0, 0] == pytest.approx(2.0)
        assert w.xi_c[0, 0] == pytest.approx(0.0, abs=1e-15)
        assert w.g_c[0, 0] == pytest.approx(0.5)

    def test_zero_common_power(self):
        w = mmse_update(np.array([[1.0, 1j]]), 0.0, np.zeros((2, 1)))
        assert w.g_c[0, 0] == 0 and w.u_c[0, 0] == 1.0
        assert w.eps_c[0, 0] == 1.0 and w.xi_c[0, 0] == pytest.approx(1.0)

    def test_closed_forms(self):
        rng = np.random.default_rng(1)
        h, P, pc = cn(rng, 3, 2), cn(rng, 2, 3), 1.3
        w = mmse_update(h, pc, P)
        gains = np.abs(np.conj(h) @ P) ** 2
        t_p = gains.sum(1) + 1
        t_c = t_p + np.sum(np.abs(h) ** 2, 1) * pc / 2
        assert np.allclose(w.g_c[:, 0], np.linalg.norm(h, axis=1) * math.sqrt(pc / 2) / t_c)
        assert np.allclose(w.g_p[:, 0], [np.vdot(P[:, k], h[k]) / t_p[k] for k in range(3)])
        assert np.allclose(1 / w.u_c[:, 0], (t_c - np.sum(np.abs(h) ** 2, 1) * pc / 2) / t_c)
        assert np.allclose(1 / w.u_p[:, 0], (t_p - np.diag(gains)) / t_p)
        assert np.all(w.u_c > 0) and np.all(w.u_p >= 1)

    def test_local_minimality(self):
        rng = np.random.default_rng(2)
        h, P, pc = cn(rng, 2, 2), cn(rng, 2, 2), 0.8
        w = mmse_update(h, pc, P)
        for _ in range(100):
            d = cn(rng, 2, 1) * 0.1
            assert np.all(w.eps_c <= mse(w.g_c + d, w.t_c, w.amp_c) + 1e-15)
            assert np.all(w.eps_p <= mse(w.g_p + d, w.t_p, w.amp_p) + 1e-15)

    @settings(max_examples=100)
    @given(st.integers(0, 2**31), st.integers(1, 4))
    def test_rate_identity(self, seed, k):
        rng = np.random.default_rng(seed)
        h, P = cn(rng, k, 2) * rng.uniform(0.1, 10), cn(rng, 2, k)
        pc = rng.uniform(0, 5)
        w = mmse_update(h, pc, P)
        assert np.allclose(1 - w.xi_c[:, 0], common_rate_st(h, pc, P), atol=1e-10, rtol=0)
        assert np.allclose(1 - w.xi_p[:, 0], private_rates(h, P), atol=1e-10, rtol=0)

    @settings(max_examples=100)
    @given(st.integers(0, 2**31))
    def test_fixed_weights_lower_bound(self, seed):
        rng = np.random.default_rng(seed)
        h, P, pc = cn(rng, 2, 2), cn(rng, 2, 2), rng.uniform(0, 3)
        w = mmse_update(h, pc, P)
        g = cn(rng, 2, 1)
        u = rng.uniform(0.05, 20, (2, 1))
        xi_c = wmse(mse(g, w.t_c, w.amp_c), u)
        xi_p = wmse(mse(g, w.t_p, w.amp_p), u)
        assert np.all(1 - xi_c[:, 0] <= common_rate_st(h, pc, P) + 1e-12)
        assert np.all(1 - xi_p[:, 0] <= private_rates(h, P) + 1e-12)


class TestAverages:
    def test_scalar_point(self):
        h = np.array([[1.0]])
        t = average_terms(h, mmse_update(h, 2.0, np.zeros((1, 1))))
        assert t.tau_c[0] == pytest.approx(0.5)
        assert t.psi_c[0] == pytest.approx(0.5)
        assert t.w_c[0] == pytest.approx(1.0)
        assert t.v_c[0] == pytest.approx(1.0)
        assert t.u_c[0] == pytest.approx(2.0)

    def test_identical_samples(self):
        rng = np.random.default_rng(3)
        h, P = cn(rng, 2, 2), cn(rng, 2, 2)
        one = average_terms(h, mmse_update(h, 1.0, P))
        rep = np.repeat(h[:, None, :], 5, axis=1)
        many = average_terms(rep, mmse_update(rep, 1.0, P))
        for name in ("tau_c", "tau_p", "psi_c", "Psi_c", "Psi_p", "w_c", "w_p", "v_c", "v_p"):
            assert np.allclose(getattr(one, name), getattr(many, name), rtol=1e-13)

    def test_halves_combine(self):
        rng = np.random.default_rng(4)
        h, P = cn(rng, 3, 8, 2), cn(rng, 2, 3)
        full = average_terms(h, mmse_update(h, 0.7, P))
        a = average_terms(h[:, :4], mmse_update(h[:, :4], 0.7, P))
        b = average_terms(h[:, 4:], mmse_update(h[:, 4:], 0.7, P))
        for name in ("tau_c", "Psi_p", "w_p", "v_c"):
            assert np.allclose(getattr(full, name),
                               (getattr(a, name) + getattr(b, name)) / 2, rtol=1e-13)

    def test_recompute_from_definitions(self):
        rng = np.random.default_rng(5)
        h, P, pc = cn(rng, 2, 6, 2), cn(rng, 2, 2), 1.1
        w = mmse_update(h, pc, P)
        t = average_terms(h, w)
        k = 1
        tau = w.u_p[k] * np.abs(w.g_p[k]) ** 2
        Psi = np.mean([tau[s] * np.outer(h[k, s], h[k, s].conj()) for s in range(6)], axis=0)
        assert np.allclose(t.Psi_p[k], Psi)
        wp = np.mean([w.u_p[k, s] * np.conj(w.g_p[k, s]) * h[k, s] for s in range(6)], axis=0)
        assert np.allclose(t.w_p[k], wp)
        wc = np.mean(w.u_c[k] * w.g_c[k] * np.linalg.norm(h[k], axis=1))
        assert t.w_c[k] == pytest.approx(wc)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(6)
        h = cn(rng, 2, 4, 2)
        w = mmse_update(h, 1.0, cn(rng, 2, 2))
        with pytest.raises(ValueError):
            average_terms(h[:, :3], w)

    def test_psd_audit(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            k = int(rng.integers(1, 5))
            h = cn(rng, k, int(rng.integers(1, 30)), 2) * rng.uniform(0.1, 10)
            P = cn(rng, 2, k)
            for beam in (False, True):
                pc = cn(rng, 2) if beam else rng.uniform(0, 2)
                t = average_terms(h, mmse_update(h, pc, P), beamformed=beam)
                for M in (t.Psi_c, t.Psi_p):
                    assert np.allclose(M, np.conj(np.swapaxes(M, 1, 2)))
                    assert np.linalg.eigvalsh(M).min() >= -1e-12 * max(1, np.abs(M).max())
                sub = build_subproblem(t, 1.0, Mode.RSMA if beam else Mode.ST_RSMA)
                quad = sub.problem.Q
                assert np.linalg.eigvalsh(quad).min() >= -1e-9


class TestLifting:
    def test_hermitian_form(self):
        rng = np.random.default_rng(8)
        B = cn(rng, 3, 3)
        A = B @ B.conj().T
        p = cn(rng, 3)
        x = np.concatenate([p.real, p.imag])
        assert x @ lift_hermitian(A) @ x == pytest.approx(np.vdot(p, A @ p).real)
        w = cn(rng, 3)
        assert lift_vector(w) @ x == pytest.approx(np.vdot(w, p).real)

    def test_layout_round_trip(self):
        lay = Layout(Mode.RSMA, 3, 2)
        rng = np.random.default_rng(9)
        pc, P = cn(rng, 2), cn(rng, 2, 3)
        out = lay.unpack(lay.pack(pc=pc, P=P, c=[1, 2, 3], alpha=[4, 5, 6], q=7))
        assert np.allclose(out["pc"], pc) and np.allclose(out["P"], P)
        assert out["q"] == 7 and list(out["c"]) == [1, 2, 3]


class TestSubproblem:
    def test_hand_built_scalar_problem(self):
        h = np.array([[1.0]])
        terms = average_terms(h, mmse_update(h, 2.0, np.zeros((1, 1))))
        sub = build_subproblem(terms, 1.0, Mode.ST_RSMA)
        # variables: y, Re p, Im p, C, alpha, q
        k = KAPPA
        Q = np.zeros((4, 6, 6))
        a = np.zeros((4, 6))
        b = np.zeros(4)
        a[0, 4] = -1.0                                   # private: alpha <= 0 at P = 0
        Q[1, 0, 0] = 0.5 * k                             # common: psi_c y^2
        Q[1, 1, 1] = Q[1, 2, 2] = 0.5 * k                # common: p^H Psi_c p
        a[1, 0], a[1, 3] = 2 * k, -1.0
        b[1] = 1.5 * k - 1.0
        Q[2, 0, 0], Q[2, 1, 1], Q[2, 2, 2] = 2.0, 1.0, 1.0  # power
        b[2] = -1.0
        a[3, 5], a[3, 4], a[3, 3] = -1.0, 1.0, 1.0      # epigraph
        p = sub.problem
        assert np.allclose(p.Q, Q, atol=1e-15)
        assert np.allclose(p.a, a, atol=1e-15)
        assert np.allclose(p.b, b, atol=1e-15)
        assert np.array_equal(p.objective, [0, 0, 0, 0, 0, 1])
        assert np.array_equal(p.lower, [0, -np.inf, -np.inf, 0, 0, -np.inf])

    @pytest.mark.parametrize("mode", [Mode.ST_RSMA, Mode.RSMA, Mode.SDMA, Mode.MULTICAST])
    def test_constraints_equal_fixed_weight_bounds(self, mode):
        """Each rate row evaluates to (variable) - mean_s(1 - xi_s) at the new precoders."""
        rng = np.random.default_rng(10)
        k, s = 3, 5
        h = cn(rng, k, s, 2) * 2
        pc_old = cn(rng, 2) if mode.beamformed_common else 0.9
        w = mmse_update(h, pc_old, cn(rng, 2, k))
        terms = average_terms(h, w, mode.beamformed_common)
        sub = build_subproblem(terms, 1.0, mode)
        lay = sub.layout
        y, pc, P = 0.4, cn(rng, 2), cn(rng, 2, k)
        c, alpha = rng.uniform(0, 1, k), rng.uniform(0, 1, k)
        g = sub.problem.constraint_values(lay.pack(y=y, pc=pc, P=P, c=c, alpha=alpha, q=0.3))
        P_eff = P if mode.has_private else np.zeros((2, k))
        t_c, t_p = mse_terms(h, pc if mode.beamformed_common else 2 * y**2, P_eff)
        if mode.has_private:
            amp_p = np.stack([np.conj(h[i]) @ P[:, i] for i in range(k)])
            bound = np.mean(1 - wmse(mse(w.g_p, t_p, amp_p), w.u_p), axis=1)
            assert np.allclose(g[sub.private_rows], alpha - bound, atol=1e-12)
        else:
            assert sub.private_rows.size == 0
        if mode.has_common:
            amp_c = (np.conj(h) @ pc if mode.beamformed_common
                     else np.linalg.norm(h, axis=-1) * y)
            bound = np.mean(1 - wmse(mse(w.g_c, t_c, amp_c), w.u_c), axis=1)
            assert np.allclose(g[sub.common_rows], c.sum() - bound, atol=1e-12)
        else:
            assert sub.common_rows.size == 0

    def test_sdma_has_no_common_variables(self):
        h = np.ones((2, 1, 2))
        t = average_terms(h, mmse_update(h, 0.0, np.eye(2)))
        lay = build_subproblem(t, 1.0, Mode.SDMA).layout
        assert lay.slices["y"].stop == lay.slices["y"].start
        assert lay.slices["c"].stop == lay.slices["c"].start
        assert lay.slices["pc"].stop == lay.slices["pc"].start

    def test_multicast_has_no_private_variables(self):
        h = np.ones((2, 1, 2))
        t = average_terms(h, mmse_update(h, np.ones(2), np.zeros((2, 0))), beamformed=True)
        lay = build_subproblem(t, 1.0, Mode.MULTICAST).layout
        assert lay.slices["P"].stop == lay.slices["P"].start

    def test_conventional_alias(self):
        h = np.ones((1, 1, 2))
        t = average_terms(h, mmse_update(h, np.ones(2), np.eye(2)[:, :1]), beamformed=True)
        a = conventional_rsma_subproblem(t, 1.0).problem
        b = build_subproblem(t, 1.0, Mode.RSMA).problem
        assert np.array_equal(a.Q, b.Q) and np.array_equal(a.b, b.b)

    def test_rejects_frr(self):
        h = np.ones((1, 1, 2))
        t = average_terms(h, mmse_update(h, 1.0, np.eye(2)[:, :1]))
        with pytest.raises(ValueError):
            build_subproblem(t, 1.0, Mode.FRR)


class TestSolveMaxmin:
    @pytest.mark.parametrize("seed", range(4))
    @pytest.mark.parametrize("mode", [Mode.ST_RSMA, Mode.RSMA])
    def test_single_user_capacity(self, seed, mode):
        h = cn(np.random.default_rng(seed), 1, 2) * 3
        sol = solve_maxmin(perfect_csit(h), mode)
        bound = math.log2(1 + np.vdot(h, h).real)
        assert sol.in_sample.min_rate == pytest.approx(bound, rel=0.01)
        assert sol.in_sample.min_rate <= bound + 1e-9

    @pytest.mark.parametrize("mode", [Mode.ST_RSMA, Mode.RSMA, Mode.SDMA])
    def test_symmetric_users_equalised(self, mode):
        a, b = 3.0 * np.exp(0.4j), 1.2 * np.exp(-1.1j)
        h = np.array([[a, b], [b, a]])
        sol = solve_maxmin(perfect_csit(h), mode)
        r = sol.in_sample.per_user
        assert abs(r[0] - r[1]) <= 1e-3

    @pytest.mark.parametrize("mode", [Mode.ST_RSMA, Mode.RSMA, Mode.SDMA, Mode.MULTICAST])
    def test_output_invariants(self, mode):
        ch = scenario(4, 1.0, 20, 11)
        sol = solve_maxmin(ch, mode, WmmseParams(p_t=1.0))
        assert np.all(np.diff(sol.trace) >= -1e-6)
        assert sol.converged and abs(sol.trace[-1] - sol.trace[-2]) <= 1e-4
        assert sol.total_power <= 1.0 + 1e-8
        assert np.all(sol.c >= 0) and np.all(sol.alpha_p >= 0)
        rep = sol.in_sample
        if mode.has_common:
            assert rep.min_common >= np.sum(sol.c) - 1e-5
        assert sol.q <= rep.min_rate + 1e-6

    def test_rsma_power_counts_common_beam(self):
        ch = scenario(3, 0.5, 10, 12)
        sol = solve_maxmin(ch, Mode.RSMA)
        assert sol.common_beam is not None
        total = np.sum(np.abs(sol.common_beam) ** 2) + np.sum(np.abs(sol.P) ** 2)
        assert total <= 1.0 + 1e-8
        assert sol.p_c == pytest.approx(np.sum(np.abs(sol.common_beam) ** 2))

    def test_multicast_rate_definition(self):
        ch = scenario(3, 0.0, 1, 13)
        sol = solve_maxmin(ch, Mode.MULTICAST)
        h = ch.samples[:, 0, :]
        direct = np.min(np.log2(1 + np.abs(np.conj(h) @ sol.common_beam) ** 2))
        assert sol.in_sample.min_common == pytest.approx(direct, rel=1e-12)
        # one stream carries all K messages, so each user gets a 1/K share
        assert sol.q == pytest.approx(direct / 3, abs=1e-3)
        assert sol.q <= direct / 3 + 1e-6

    def test_sdma_matches_rsma_without_common(self):
        ch = scenario(3, 1.0, 10, 14)
        sol = solve_maxmin(ch, Mode.SDMA)
        forced = evaluate_rates(ch.samples, Mode.RSMA, np.zeros(2), sol.P, np.zeros(3))
        assert np.allclose(forced.per_user, sol.in_sample.per_user)
        assert np.allclose(forced.common_mean, 0)

    def test_pair_selection_for_more_feeds(self):
        ch = scenario(4, 0.5, 10, 15, n_t=4)
        sol = solve_maxmin(ch, Mode.ST_RSMA)
        assert sol.pair is not None and sol.pair.n_t == 4
        assert np.all(np.diff(sol.trace) >= -1e-6)

    @pytest.mark.parametrize("seed", range(20))
    def test_perfect_csit_modes_converge(self, seed):
        h = cn(np.random.default_rng(100 + seed), 3, 2) * 4
        for mode in (Mode.ST_RSMA, Mode.RSMA):
            assert solve_maxmin(perfect_csit(h), mode).converged

    def test_held_out_close_to_in_sample(self):
        gaps = []
        for seed in range(5):
            ch = scenario(4, 1.0, 100, 20 + seed)
            sol = solve_maxmin(ch, Mode.ST_RSMA, WmmseParams(seed=999 + seed))
            a, b = sol.in_sample.per_user, sol.held_out.per_user
            gaps.append(np.mean(np.abs(a - b) / a))
        assert np.mean(gaps) <= 3 / math.sqrt(100)

    def test_deterministic_and_serialisable(self):
        ch = scenario(2, 1.0, 10, 30)
        a = solve_maxmin(ch, Mode.ST_RSMA, WmmseParams(seed=5))
        b = solve_maxmin(ch, Mode.ST_RSMA, WmmseParams(seed=5))
        assert a.trace == b.trace and np.array_equal(a.P, b.P)
        doc = json.loads(a.to_json())
        assert doc["mode"] == "ST_RSMA" and doc["pair"] == [0, 1]
        flat = np.array(doc["P"])
        assert np.allclose(flat[0::2] + 1j * flat[1::2], a.P.ravel())
        assert doc["params"]["seed"] == 5 and doc["trace"] == a.trace

    def test_needs_samples(self):
        with pytest.raises(ValueError):
            solve_maxmin(ChannelSet(h_true=np.ones((2, 2))), Mode.ST_RSMA)


class TestFrr:
    def test_single_user(self):
        h = np.array([[1.0, 2.0j]])
        assert frr_rate(perfect_csit(h), 2.0).min_rate == pytest.approx(math.log2(1 + 10))

    def test_two_equal_users(self):
        h = np.array([[1.0, 2.0j], [2.0, -1.0]])
        r = frr_rate(perfect_csit(h), 2.0).per_user
        assert np.allclose(r, math.log2(1 + 10) / 2)

    def test_permutation(self):
        rng = np.random.default_rng(40)
        ch = draw_saa_samples(impair_csit(ChannelSet(h_true=cn(rng, 4, 2)), 0.5, 1), 20, 2)
        perm = [2, 0, 3, 1]
        swapped = ChannelSet(h_true=ch.h_true[perm], h_est=ch.h_est[perm],
                             error_cov=ch.error_cov[perm], samples=ch.samples[perm])
        assert np.allclose(frr_rate(ch, 1.0).per_user[perm], frr_rate(swapped, 1.0).per_user)

    def test_solver_bypassed(self):
        sol = solve_maxmin(perfect_csit(np.array([[1.0, 0.0]])), Mode.FRR)
        assert sol.trace == [] and sol.q == pytest.approx(1.0)


def test_per_sample_terms_shapes():
    rng = np.random.default_rng(50)
    h = cn(rng, 2, 3, 2)
    w = mmse_update(h, cn(rng, 2), cn(rng, 2, 2))
    d = per_sample_terms(h, w, beamformed=True)
    assert d["w_c"].shape == (2, 3, 2) and d["Psi_c"].shape == (2, 3, 2, 2)
    assert isinstance(w, EqualizerWeights)
    assert INV_LN2 == pytest.approx(KAPPA)
