import math

import numpy as np
import pytest

from rnl.entropy import WeightFunction, eta_zero
from rnl.qkd import (
    EXACT_MAX_N,
    InfeasibleStatisticsError,
    KeyLengthFunction,
    ProtocolRound,
    ScheduleEntry,
    SizeError,
    ToeplitzHash,
    asymptotic_rates,
    binary_entropy,
    bb84_honest_state,
    build_bb84_round,
    build_constant_round,
    build_g_n,
    build_qrng_round,
    delta_penalty,
    exact_security,
    expected_key_length,
    key_rate_h,
    load_schedule,
    probe_hyperplane,
    random_feasible_state,
    simulate_protocol,
    supporting_hyperplane,
)


@pytest.fixture(scope="module")
def bb84():
    return build_bb84_round(0.1)


def mismatch(rnd, basis):
    q = dict(zip(rnd.symbols, rnd.statistics()))
    tests = {x: v for x, v in q.items() if x.startswith(f"T:{basis}{basis}:")}
    bad = sum(v for x, v in tests.items() if x[-2] != x[-1])
    return bad / sum(tests.values())


class TestBinaryEntropy:
    def test_values(self):
        assert binary_entropy(0.5) == 1.0
        assert binary_entropy(0.0) == 0.0 and binary_entropy(1.0) == 0.0
        assert binary_entropy(0.067) == pytest.approx(0.354, abs=1e-3)
        assert 1 - 2 * binary_entropy(0.067) == pytest.approx(0.291, abs=1e-3)

    def test_range(self):
        with pytest.raises(ValueError):
            binary_entropy(1.2)


class TestBB84Round:
    def test_noiseless_state(self):
        phi = np.zeros(4)
        phi[[0, 3]] = 1 / math.sqrt(2)
        assert np.allclose(bb84_honest_state(0.0), np.outer(phi, phi))
        r = build_bb84_round(0.0)
        assert mismatch(r, "X") == pytest.approx(0, abs=1e-12)
        assert mismatch(r, "Z") == pytest.approx(0, abs=1e-12)

    def test_error_rates(self, bb84):
        assert mismatch(bb84, "X") == pytest.approx(0.1)
        assert mismatch(bb84, "Z") == pytest.approx(0.1)

    @pytest.mark.parametrize("p", [0.0, 0.05, 0.2, 0.49])
    def test_trace(self, p):
        assert np.trace(bb84_honest_state(p)).real == pytest.approx(1.0)

    def test_channel_block_diagonal(self, bb84):
        phi = bb84.m_map
        assert phi.out_labels == ["X", "A"]
        s = sum(k.conj().T @ k for k in phi.kraus)
        assert np.allclose(s, np.eye(4))
        out = phi.apply_matrix(bb84.honest_input.entries).reshape(20, 2, 20, 2)
        off = out.copy()
        for i in range(20):
            off[i, :, i, :] = 0
        assert np.max(np.abs(off)) < 1e-10

    def test_alphabet(self, bb84):
        assert len(bb84.symbols) == 20

    def test_invalid(self):
        with pytest.raises(ValueError):
            build_bb84_round(0.5)
        with pytest.raises(ValueError):
            build_bb84_round(0.1, 0.0)

    def test_json_round_trip(self, bb84):
        back = ProtocolRound.from_json(bb84.to_json())
        assert back.symbols == bb84.symbols
        assert np.allclose(back.statistics(), bb84.statistics())
        assert back.params == {"p": 0.1, "p_test": 0.1}


class TestKeyRate:
    @pytest.mark.parametrize("p", [0.0, 0.1, 0.25])
    def test_shor_preskill(self, p):
        assert key_rate_h(build_bb84_round(p)) == pytest.approx(1 - binary_entropy(p), abs=1e-2)

    def test_per_round_units(self, bb84):
        per_key = key_rate_h(bb84)
        per_round = key_rate_h(bb84, per_key_round=False)
        assert per_round == pytest.approx(0.9 * per_key)

    def test_infeasible_statistics(self, bb84):
        q = np.zeros(len(bb84.symbols))
        q[0] = 1.0
        with pytest.raises((InfeasibleStatisticsError, ValueError)):
            key_rate_h(bb84, q)

    def test_not_a_distribution(self, bb84):
        with pytest.raises(ValueError):
            key_rate_h(bb84, np.ones(len(bb84.symbols)))

    def test_midpoint_convexity(self, bb84):
        rng = np.random.default_rng(0)
        for _ in range(20):
            r1, r2 = random_feasible_state(bb84, rng), random_feasible_state(bb84, rng)
            q1, q2 = bb84.statistics(r1), bb84.statistics(r2)
            h1 = key_rate_h(bb84, q1, rho_start=r1)
            h2 = key_rate_h(bb84, q2, rho_start=r2)
            hm = key_rate_h(bb84, (q1 + q2) / 2, rho_start=(r1 + r2) / 2)
            assert hm <= (h1 + h2) / 2 + 1e-3


class TestHyperplane:
    def test_tangent_and_below(self, bb84):
        f = supporting_hyperplane(bb84, probes=0)
        q = bb84.statistics()
        fv = np.array([f(x) for x in bb84.symbols])
        h = key_rate_h(bb84, per_key_round=False)
        assert fv @ q == pytest.approx(h, abs=1e-3)
        assert fv @ q / 0.9 == pytest.approx(1 - binary_entropy(0.1), abs=1e-2)
        assert probe_hyperplane(bb84, f, 20, seed=1) <= 5e-3

    def test_affine_surface(self):
        r = build_qrng_round(0.05)
        f = supporting_hyperplane(r, probes=5)
        assert f("0") == pytest.approx(key_rate_h(r), abs=1e-9)


class TestPostProcessing:
    def test_eta(self):
        assert eta_zero(WeightFunction({"a": 0.0}), 2) == 5
        assert eta_zero(WeightFunction({"a": 0.0, "b": 1.0}), 2) == 7

    def test_floor(self):
        g = KeyLengthFunction([WeightFunction({"x": 10.0})], 3.2, 1.1, 5.0)
        assert g(["x"]) == 6

    def test_always_abort(self):
        r = build_constant_round()
        r.f = WeightFunction({"0": 0.0})
        g = build_g_n([r] * 4, 4, 0.1)
        assert g(["0"] * 4) == 0

    def test_delta_sign(self):
        a, eta = 1.1, 5.0
        smooth = 100 * 0.1 * math.log2(eta) ** 2
        assert delta_penalty(100, 1e-6, a, eta) == pytest.approx(smooth + 11 * math.log2(1e6))
        assert delta_penalty(100, 1e-6, a, eta, "verbatim") == pytest.approx(smooth - 11 * math.log2(1e6))
        # tighter security never lengthens the key
        assert delta_penalty(100, 1e-9, a, eta) > delta_penalty(100, 1e-6, a, eta)
        with pytest.raises(ValueError):
            delta_penalty(100, 1e-6, a, eta, "other")

    def test_alpha_window(self):
        r = build_constant_round()
        r.f = WeightFunction({"0": 0.0})
        with pytest.raises(ValueError):
            build_g_n([r], 1, 0.1, alpha=1 + 1 / math.log2(5) + 0.01)
        g = build_g_n([r] * 100, 100, 0.01)
        assert g.alpha == pytest.approx(1.1)

    def test_monotone_in_delta(self):
        f = WeightFunction({"x": 1.0})
        lens = [KeyLengthFunction([f] * 10, d, 1.1, 5.0)(["x"] * 10) for d in (0.0, 2.5, 5.0, 20.0)]
        assert lens == sorted(lens, reverse=True)


class TestRates:
    def test_paper_schedule(self):
        sched = [ScheduleEntry(build_bb84_round(0.001), 1 / 3), ScheduleEntry(build_bb84_round(0.1), 2 / 3)]
        rb = asymptotic_rates(sched)
        assert rb.ec_error == pytest.approx(0.067, abs=1e-3)
        assert rb.sk_adaptive == pytest.approx(0.329, abs=2e-3)
        assert rb.sk_static == pytest.approx(0.291, abs=2e-3)
        assert rb.r_ad > rb.r_na
        assert rb.r_ad == pytest.approx(np.mean([rb.per_round[0], rb.per_round[1], rb.per_round[1]]))
        assert rb.sk_adaptive == pytest.approx(rb.r_ad - rb.ec_cost)
        analytic = (1 - binary_entropy(0.001)) / 3 + 2 * (1 - binary_entropy(0.1)) / 3
        assert rb.r_ad == pytest.approx(analytic, abs=1e-2)

    def test_constant_schedule(self):
        r = build_bb84_round(0.05)
        rb = asymptotic_rates([ScheduleEntry(r, 0.5), ScheduleEntry(r, 0.5)])
        assert rb.r_ad == rb.r_na

    def test_load_schedule(self):
        sched, ec = load_schedule({"rounds": [{"bb84": {"p": 0.1}, "weight": 2}, {"bb84": {"p": 0.001}}],
                                   "ec_error": 0.07})
        assert ec == 0.07
        assert [e.weight for e in sched] == pytest.approx([2 / 3, 1 / 3])
        with pytest.raises(ValueError):
            load_schedule([{"bb84": {"p": 0.1}, "weight": -1}])
        with pytest.raises(ValueError):
            load_schedule([{"mystery": {}}])

    def test_rate_trend(self):
        sched = [ScheduleEntry(build_qrng_round(0.05), 1.0)]
        r_ad = asymptotic_rates(sched).r_ad
        rates = [expected_key_length(sched, n, samples=50) for n in (100, 1000, 10000)]
        assert rates[0] < rates[1] < rates[2] <= r_ad
        assert r_ad - rates[2] < r_ad - rates[0]


class TestSecurity:
    def test_toeplitz(self):
        h = ToeplitzHash(3, 2)
        assert h.seed_bits == 4
        t = h.matrix(0b1011)
        assert all(t[i, j] == t[i + 1, j + 1] for i in range(1) for j in range(2))
        assert h(0, 0b111) == 0

    def test_zero_key(self):
        seq = [build_bb84_round(0.1)] * 2
        rep = exact_security(seq, lambda xs: 0)
        assert rep.epsilon == 0

    def test_constant_key(self):
        rep = exact_security([build_constant_round()], lambda xs: 1)
        assert rep.epsilon == pytest.approx(0.5)

    def test_below_bound(self):
        r = build_qrng_round(0.05)
        rep = exact_security([r, r], lambda xs: 1)
        assert 0 <= rep.epsilon <= rep.bound

    def test_simulate_exact(self):
        sched = [ScheduleEntry(build_qrng_round(0.05), 1.0)]
        rep = simulate_protocol(sched, 2, seed=3, exact=True, key_length=1)
        assert rep.security.epsilon <= rep.security.bound

    def test_size_guard(self):
        sched = [ScheduleEntry(build_qrng_round(0.05), 1.0)]
        with pytest.raises(SizeError):
            simulate_protocol(sched, EXACT_MAX_N + 1, exact=True)

    def test_rate_only_deterministic(self):
        sched = [ScheduleEntry(build_qrng_round(0.05), 1.0)]
        a = simulate_protocol(sched, 500, seed=4, samples=3)
        b = simulate_protocol(sched, 500, seed=4, samples=3)
        assert a.key_lengths == b.key_lengths
        assert len(a.xs) == 500
