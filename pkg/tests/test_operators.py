import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnl.operators import (
    DensityOperator,
    KrausChannel,
    LabelError,
    LabeledOperator,
    NotPSDError,
    RandomKind,
    RandomSpec,
    apply_channel,
    depolarizing_channel,
    frac_power,
    identity_channel,
    partial_trace,
    permute,
    purify,
    random_channel,
    random_state,
    sample,
    support_projector,
    tensor,
)


def op(m, factors):
    return LabeledOperator(np.asarray(m, dtype=complex), factors)


def rand_op(rng, factors):
    n = int(np.prod([d for _, d in factors]))
    return op(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)), factors)


class TestTensor:
    def test_identities(self):
        t = tensor(op(np.eye(2), [("A", 2)]), op(np.eye(3), [("B", 3)]))
        assert np.array_equal(t.entries, np.eye(6))
        assert t.factors == (("A", 2), ("B", 3))

    def test_diagonal(self):
        t = tensor(op(np.diag([1, 2]), [("A", 2)]), op(np.diag([3, 4]), [("B", 2)]))
        assert np.allclose(t.entries, np.diag([3, 4, 6, 8]))

    def test_entrywise_oracle(self):
        rng = np.random.default_rng(0)
        a, b = rand_op(rng, [("A", 2)]), rand_op(rng, [("B", 2)])
        t = tensor(a, b).entries
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    for l in range(2):
                        assert t[2 * i + k, 2 * j + l] == pytest.approx(a.entries[i, j] * b.entries[k, l])

    def test_label_collision(self):
        with pytest.raises(LabelError):
            tensor(op(np.eye(2), [("A", 2)]), op(np.eye(2), [("A", 2)]))

    def test_associative(self):
        rng = np.random.default_rng(1)
        a, b, c = rand_op(rng, [("A", 2)]), rand_op(rng, [("B", 3)]), rand_op(rng, [("C", 2)])
        left, right = tensor(tensor(a, b), c), tensor(a, tensor(b, c))
        assert left.factors == right.factors
        assert np.allclose(left.entries, right.entries, atol=1e-14)


class TestPartialTrace:
    def test_product_splits(self):
        rng = np.random.default_rng(2)
        a = random_state(rng, [("A", 2)]).op
        b = rand_op(rng, [("B", 3)])
        r = partial_trace(tensor(a, b), {"B"})
        assert np.allclose(r.entries, a.entries * np.trace(b.entries))
        assert r.labels == ["A"]

    def test_bell_marginal(self):
        v = np.zeros(4)
        v[[0, 3]] = 1 / np.sqrt(2)
        r = partial_trace(op(np.outer(v, v), [("A", 2), ("B", 2)]), {"B"})
        assert np.allclose(r.entries, np.eye(2) / 2)

    def test_double_sum_oracle(self):
        rng = np.random.default_rng(3)
        x = rand_op(rng, [("A", 2), ("B", 3)])
        m = x.entries.reshape(2, 3, 2, 3)
        want_a = sum(m[:, k, :, k] for k in range(3))
        want_b = sum(m[k, :, k, :] for k in range(2))
        assert np.allclose(partial_trace(x, {"B"}).entries, want_a)
        assert np.allclose(partial_trace(x, {"A"}).entries, want_b)
        assert partial_trace(x, {"A"}).trace() == pytest.approx(np.trace(x.entries))

    def test_order_preserved(self):
        rng = np.random.default_rng(4)
        x = rand_op(rng, [("A", 2), ("B", 2), ("C", 3)])
        assert partial_trace(x, {"B"}).labels == ["A", "C"]

    def test_unknown_label(self):
        with pytest.raises(LabelError):
            partial_trace(op(np.eye(2), [("A", 2)]), {"Z"})


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 3))
def test_partial_trace_of_tensor(seed, da, db):
    rng = np.random.default_rng(seed)
    a, b = rand_op(rng, [("A", da)]), rand_op(rng, [("B", db)])
    r = partial_trace(tensor(a, b), ["B"])
    assert np.allclose(r.entries, a.entries * np.trace(b.entries), atol=1e-10)


class TestPurify:
    def test_pure_input(self):
        p = purify(DensityOperator(op(np.diag([1, 0]), [("Q", 2)])))
        want = np.zeros((4, 4))
        want[0, 0] = 1
        assert np.allclose(p.entries, want)
        assert p.labels == ["~Q", "Q"]

    def test_maximally_mixed(self):
        p = purify(DensityOperator(op(np.eye(2) / 2, [("Q", 2)])))
        v = np.zeros(4)
        v[[0, 3]] = 1 / np.sqrt(2)
        assert np.allclose(p.entries, np.outer(v, v))

    def test_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            rho = random_state(rng, [("Q", 3)])
            back = partial_trace(purify(rho), {"~Q"})
            assert np.max(np.abs(back.entries - rho.entries)) < 1e-10


class TestFracPower:
    def test_identity(self):
        for t in (-1.0, 0.5, 3.0):
            assert np.allclose(frac_power(op(np.eye(3), [("A", 3)]), t).entries, np.eye(3))

    def test_sqrt(self):
        assert np.allclose(frac_power(op(np.diag([4, 9]), [("A", 2)]), 0.5).entries, np.diag([2, 3]))

    def test_pseudo_inverse(self):
        assert np.allclose(frac_power(op(np.diag([2, 0]), [("A", 2)]), -1).entries, np.diag([0.5, 0]))

    def test_not_psd(self):
        with pytest.raises(NotPSDError):
            frac_power(op(np.diag([1, -1]), [("A", 2)]), 0.5)

    def test_inverse_powers_give_support_projector(self):
        rng = np.random.default_rng(6)
        g = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
        h = op(g @ g.conj().T, [("A", 3)])
        proj = support_projector(h).entries
        for t in (0.3, 0.7, 2.0):
            assert np.allclose(frac_power(h, t).entries @ frac_power(h, -t).entries, proj, atol=1e-10)
            assert np.allclose(frac_power(frac_power(h, t), 1 / t).entries, h.entries, atol=1e-10)
        assert np.trace(proj).real == pytest.approx(2)


class TestChannels:
    def test_identity_channel(self):
        rng = np.random.default_rng(7)
        rho = random_state(rng, [("Q", 2)]).op
        out = apply_channel(identity_channel("Q", 2), rho)
        assert np.allclose(out.entries, rho.entries)

    def test_fully_depolarizing(self):
        rng = np.random.default_rng(8)
        rho = random_state(rng, [("Q", 2)]).op
        out = apply_channel(depolarizing_channel(1.0, 2, "Q", "S"), rho)
        assert np.allclose(out.entries, np.eye(2) / 2)
        assert out.labels == ["S"]

    def test_kraus_loop_oracle_with_passthrough(self):
        rng = np.random.default_rng(9)
        phi = random_channel(rng, [("Q", 2)], [("R", 2), ("S", 3)], env=3)
        rho = random_state(rng, [("E", 2), ("Q", 2), ("T", 2)]).op
        out = apply_channel(phi, rho)
        assert out.labels == ["E", "R", "S", "T"]
        want = np.zeros((24, 24), dtype=complex)
        for k in phi.kraus:
            big = np.kron(np.kron(np.eye(2), k), np.eye(2))
            want += big @ rho.entries @ big.conj().T
        assert np.allclose(out.entries, want)

    def test_trace_preserved(self):
        rng = np.random.default_rng(10)
        phi = random_channel(rng, [("Q", 2)], [("S", 3)], env=2)
        for _ in range(100):
            rho = random_state(rng, [("Q", 2)]).op
            assert abs(apply_channel(phi, rho).trace() - 1) < 1e-10

    def test_non_tp_rejected(self):
        with pytest.raises(ValueError, match="Σ K\\*K"):
            KrausChannel((np.eye(2) * 0.5,), [("Q", 2)], [("S", 2)], True)

    def test_dimension_mismatch(self):
        phi = identity_channel("Q", 2)
        with pytest.raises(Exception):
            apply_channel(phi, op(np.eye(3) / 3, [("Q", 3)]))


class TestSampling:
    def test_deterministic(self):
        spec = RandomSpec(42, RandomKind.GINIBRE_STATE, {"factors": [("A", 2), ("B", 2)]})
        assert np.array_equal(sample(spec).entries, sample(spec).entries)
        ch = RandomSpec(3, RandomKind.HAAR_STINESPRING_CHANNEL, {"in": [("Q", 2)], "out": [("S", 2)], "env": 2})
        assert all(np.array_equal(a, b) for a, b in zip(sample(ch).kraus, sample(ch).kraus))
        p = RandomSpec(5, RandomKind.CLASSICAL_DISTRIBUTION, {"n": 4})
        assert np.array_equal(sample(p), sample(p))

    def test_ginibre_invariants(self):
        for seed in range(20):
            rho = sample(RandomSpec(seed, RandomKind.GINIBRE_STATE, {"factors": [("A", 3)]}))
            assert np.linalg.eigvalsh(rho.entries)[0] >= -1e-12
            assert abs(np.trace(rho.entries) - 1) < 1e-12

    def test_stinespring_tp(self):
        phi = sample(RandomSpec(1, RandomKind.HAAR_STINESPRING_CHANNEL,
                                {"in": [("Q", 2)], "out": [("R", 2), ("S", 2)], "env": 3}))
        s = sum(k.conj().T @ k for k in phi.kraus)
        assert np.max(np.abs(s - np.eye(2))) < 1e-10


def test_json_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    rho = random_state(rng, [("A", 2), ("B", 2)]).op
    path = tmp_path / "state.json"
    path.write_text(json.dumps(rho.to_json()))
    back = LabeledOperator.from_json(json.loads(path.read_text()))
    assert np.array_equal(back.entries, rho.entries)
    assert back.factors == rho.factors
    phi = random_channel(rng, [("Q", 2)], [("S", 2)])
    again = KrausChannel.from_json(json.loads(json.dumps(phi.to_json())))
    assert all(np.array_equal(a, b) for a, b in zip(again.kraus, phi.kraus))


def test_permute_round_trip():
    rng = np.random.default_rng(12)
    x = rand_op(rng, [("A", 2), ("B", 3), ("C", 2)])
    y = permute(permute(x, ["C", "A", "B"]), ["A", "B", "C"])
    assert np.allclose(y.entries, x.entries)
