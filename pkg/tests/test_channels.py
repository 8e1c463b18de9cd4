import math

import numpy as np
import pytest

from rnl.channels import (
    InfeasibleConstraintError,
    LinearConstraint,
    cb_entropy,
    cb_objective_at,
    dual_certificate_check,
    general_input_norm,
    min_output_entropy,
    restricted_cb_entropy,
    trivial_constraint,
)
from rnl.entropy import cond_renyi_up, renyi_from_log_norm
from rnl.operators import (
    KrausChannel,
    LabeledOperator,
    apply_channel,
    channel_tensor,
    classical_copy_channel,
    compose,
    depolarizing_channel,
    identity_channel,
    random_channel,
    random_unitary,
)
from rnl.schatten import OptimizerConfig

CFG = OptimizerConfig(restarts=2)


def bloch_grid(step=0.05):
    for x in np.arange(-1, 1 + 1e-9, step):
        for y in np.arange(-1, 1 + 1e-9, step):
            for z in np.arange(-1, 1 + 1e-9, step):
                if x * x + y * y + z * z <= 1 + 1e-12:
                    yield 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]])


class TestPlain:
    def test_fully_depolarizing(self):
        assert min_output_entropy(depolarizing_channel(1.0, 2), 2, CFG).log_value == pytest.approx(1.0, abs=1e-9)

    def test_identity(self):
        assert min_output_entropy(identity_channel("Q", 2), 2, CFG).log_value == pytest.approx(0.0, abs=1e-9)

    def test_bloch_grid_oracle(self):
        rng = np.random.default_rng(0)
        phi = random_channel(rng, [("Q", 2)], [("R", 2), ("S", 2)], env=2)
        alpha = 2.0
        res = min_output_entropy(phi, alpha, CFG)
        # pure inputs suffice, so the sphere is enough
        grid = []
        for th in np.linspace(0, math.pi, 21):
            for ph in np.linspace(0, 2 * math.pi, 41):
                v = np.array([math.cos(th / 2), np.exp(1j * ph) * math.sin(th / 2)])
                rho = LabeledOperator(np.outer(v, v.conj()), [("Q", 2)])
                grid.append(cond_renyi_up(apply_channel(phi, rho), alpha, OptimizerConfig(restarts=0),
                                          cross_check=False).value)
        assert res.log_value <= min(grid) + 1e-6
        assert res.log_value >= min(grid) - 5e-3


class TestCB:
    def test_fully_depolarizing(self):
        assert cb_entropy(depolarizing_channel(1.0, 2), 2, CFG).log_value == pytest.approx(1.0, abs=1e-9)

    def test_identity(self):
        res = cb_entropy(identity_channel("Q", 2), 2, CFG)
        assert res.log_value == pytest.approx(-1.0, abs=1e-9)
        assert np.allclose(res.witness_state.entries, np.eye(2) / 2, atol=1e-4)

    def test_identity_grid(self):
        best = min(renyi_from_log_norm(cb_objective_at(identity_channel("Q", 2), rho, 2.0).log_value, 2.0)
                   for rho in bloch_grid(0.25))
        assert cb_entropy(identity_channel("Q", 2), 2, CFG).log_value <= best + 1e-9
        assert best == pytest.approx(-1.0, abs=1e-9)

    def test_classical_copy(self):
        phi = classical_copy_channel(2, "Q", "R")
        assert phi.out_factors == (("R", 2), ("S", 1))
        assert cb_entropy(phi, 2, CFG).log_value == pytest.approx(0.0, abs=1e-9)

    def test_ordering(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            phi = random_channel(rng, [("Q", 2)], [("R", 2), ("S", 2)], env=2)
            plain = min_output_entropy(phi, 2.0, CFG).log_value
            cb = cb_entropy(phi, 2.0, CFG).log_value
            assert plain - cb >= -1e-4

    def test_unitary_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(3):
            phi = random_channel(rng, [("Q", 2)], [("S", 2)], env=2)
            u = KrausChannel((random_unitary(rng, 2),), [("Q", 2)], [("Q", 2)])
            a = cb_entropy(phi, 2.0, CFG).log_value
            b = cb_entropy(compose(phi, u), 2.0, CFG).log_value
            assert a == pytest.approx(b, abs=1e-5)

    def test_psd_inputs_suffice(self):
        rng = np.random.default_rng(3)
        phi = random_channel(rng, [("Q", 2)], [("R", 2), ("S", 2)], env=2)
        gen = general_input_norm(phi, 2.0, OptimizerConfig(restarts=4))
        pos = min_output_entropy(phi, 2.0, OptimizerConfig(restarts=4))
        assert gen.log_norm == pytest.approx(pos.log_norm, abs=1e-4)


class TestRestricted:
    def test_trivial_matches_cb(self):
        rng = np.random.default_rng(4)
        phi = random_channel(rng, [("Q", 2)], [("S", 2)], env=2)
        r = restricted_cb_entropy(phi, 2.0, trivial_constraint(2), CFG)
        assert r.log_value == pytest.approx(cb_entropy(phi, 2.0, CFG).log_value, abs=1e-5)

    def test_pinned(self):
        phi = depolarizing_channel(0.3, 2)
        pin = LinearConstraint(identity_channel("Q", 2, "P"), LabeledOperator(np.eye(2) / 2, [("P", 2)]))
        res = restricted_cb_entropy(phi, 2.0, pin, CFG)
        want = renyi_from_log_norm(cb_objective_at(phi, np.eye(2) / 2, 2.0).log_value, 2.0)
        assert res.log_value == pytest.approx(want, abs=1e-7)
        assert pin.violation(res.witness_state.entries) < 1e-8

    def test_marginal_constraint_grid(self):
        rng = np.random.default_rng(5)
        phi = random_channel(rng, [("A", 2), ("B", 2)], [("S", 2)], env=2)
        tr_b = KrausChannel(tuple(np.kron(np.eye(2), np.eye(2)[[i]]) for i in range(2)),
                            [("A", 2), ("B", 2)], [("A", 2)])
        r = LinearConstraint(tr_b, LabeledOperator(np.eye(2) / 2, [("A", 2)]))
        res = restricted_cb_entropy(phi, 2.0, r, CFG)
        assert r.violation(res.witness_state.entries) < 1e-8
        # feasible states: purifications of 1/2 on A mixed with product states
        vals = []
        for _ in range(200):
            u = random_unitary(rng, 2)
            v = (np.kron(np.eye(2), u) @ np.array([1, 0, 0, 1])) / math.sqrt(2)
            w = rng.random()
            rho = w * np.outer(v, v.conj()) + (1 - w) * np.kron(np.eye(2) / 2, _pure(rng))
            vals.append(renyi_from_log_norm(cb_objective_at(phi, rho, 2.0).log_value, 2.0))
        assert res.log_value <= min(vals) + 1e-6

    def test_infeasible(self):
        bad = LinearConstraint(depolarizing_channel(1.0, 2, "Q", "P"), LabeledOperator(np.diag([1.0, 0]), [("P", 2)]))
        with pytest.raises(InfeasibleConstraintError):
            restricted_cb_entropy(depolarizing_channel(0.5, 2), 2.0, bad, CFG)

    def test_target_validated(self):
        with pytest.raises(ValueError):
            LinearConstraint(identity_channel("Q", 2, "P"), LabeledOperator(np.eye(2), [("P", 2)]))


def _pure(rng):
    v = random_unitary(rng, 2)[:, 0]
    return np.outer(v, v.conj())


class TestDual:
    def test_scaled_identity_feasible(self):
        phi = depolarizing_channel(0.4, 2)
        r = trivial_constraint(2)
        c = math.exp(cb_entropy(phi, 2.0, CFG).log_norm) + 1
        ok, obj, gap = dual_certificate_check(phi, 2.0, r, np.eye(1) * c, samples=30)
        assert ok and obj == pytest.approx(c) and gap < 0

    def test_zero_infeasible(self):
        ok, obj, gap = dual_certificate_check(depolarizing_channel(0.4, 2), 2.0, trivial_constraint(2),
                                              np.zeros((1, 1)), samples=10)
        assert not ok and obj == 0 and gap > 0

    def test_product_of_feasible(self):
        p1, p2 = depolarizing_channel(0.4, 2, "Q1", "S1"), depolarizing_channel(0.7, 2, "Q2", "S2")
        c1 = math.exp(cb_entropy(p1, 2.0, CFG).log_norm) + 0.1
        c2 = math.exp(cb_entropy(p2, 2.0, CFG).log_norm) + 0.1
        prod = channel_tensor(p1, p2)
        ks = tuple(np.eye(4)[i : i + 1] for i in range(4))
        r = LinearConstraint(KrausChannel(ks, [("Q1", 2), ("Q2", 2)], []), LabeledOperator(np.eye(1), []))
        ok, obj, _ = dual_certificate_check(prod, 2.0, r, np.eye(1) * c1 * c2, samples=20,
                                            condition=[])
        assert ok and obj == pytest.approx(c1 * c2)
