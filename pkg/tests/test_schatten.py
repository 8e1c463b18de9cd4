import math

import numpy as np
import pytest

from rnl.entropy import cond_renyi_up
from rnl.operators import LabeledOperator, random_state, random_unitary, tensor
from rnl.schatten import (
    FAST_CFG,
    IndexProfile,
    OptimizerConfig,
    UnsupportedProfileError,
    chain_norm,
    check_swap_contraction,
    merge_profile,
    norm_multi_index,
    norm_two_index,
    schatten_norm,
    vector_nested_norm,
)

CFG = OptimizerConfig(restarts=1)


def op(m, factors):
    return LabeledOperator(np.asarray(m, dtype=complex), factors)


def ginibre(rng, n):
    return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))


class TestSchattenNorm:
    def test_identity(self):
        assert schatten_norm(np.eye(2), 2) == pytest.approx(math.sqrt(2))

    def test_inf(self):
        assert schatten_norm(np.diag([3, -4]), math.inf) == pytest.approx(4)

    def test_eigen_oracle(self):
        rng = np.random.default_rng(0)
        x = ginibre(rng, 3)
        w = np.linalg.eigvalsh(x.conj().T @ x)
        assert schatten_norm(x, 3) == pytest.approx(np.sum(np.maximum(w, 0) ** 1.5) ** (1 / 3))

    def test_p_below_one(self):
        with pytest.raises(ValueError):
            schatten_norm(np.eye(2), 0.5)

    @pytest.mark.parametrize("p", [1, 1.5, 2, math.inf])
    def test_norm_axioms(self, p):
        rng = np.random.default_rng(1)
        for _ in range(100):
            x, y = ginibre(rng, 3), ginibre(rng, 3)
            assert schatten_norm(x + y, p) <= schatten_norm(x, p) + schatten_norm(y, p) + 1e-12
            c = rng.standard_normal() + 1j * rng.standard_normal()
            assert schatten_norm(c * x, p) == pytest.approx(abs(c) * schatten_norm(x, p))

    def test_holder_duality(self):
        rng = np.random.default_rng(2)
        for p in (1.5, 3.0):
            x = ginibre(rng, 3)
            q = p / (p - 1)
            u, s, vh = np.linalg.svd(x)
            # dual witness y = U diag(s^{p-1}) V*, the maximizer of |tr y*x| / ‖y‖_q
            y = u @ np.diag(s ** (p - 1)) @ vh
            ratio = abs(np.trace(y.conj().T @ x)) / schatten_norm(y, q)
            assert ratio == pytest.approx(schatten_norm(x, p), rel=1e-10)
            for _ in range(50):
                z = ginibre(rng, 3)
                assert abs(np.trace(z.conj().T @ x)) / schatten_norm(z, q) <= schatten_norm(x, p) + 1e-10


class TestVectorNorm:
    def test_ones(self):
        assert vector_nested_norm(np.ones((2, 2)), [1, 1]) == pytest.approx(4)

    @pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0])
    def test_uniform_classical(self, alpha):
        assert vector_nested_norm(np.full((2, 2), 0.25), [1, alpha]) == pytest.approx(2 ** ((1 - alpha) / alpha))

    def test_single_index(self):
        v = np.arange(1.0, 7.0)
        assert vector_nested_norm(v, [3]) == pytest.approx(np.sum(v**3) ** (1 / 3))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            vector_nested_norm(np.ones((2, 2)), [1, 2, 3])


class TestProfiles:
    def test_parse(self):
        p = IndexProfile.parse("Q:1, T:2,R:inf")
        assert p.labels == ["Q", "T", "R"]
        assert p.ps == [1, 2, math.inf]
        assert str(p) == "Q:1,T:2,R:inf"

    def test_duplicate(self):
        with pytest.raises(ValueError):
            IndexProfile.parse("Q:1,Q:2")

    def test_merge(self):
        assert merge_profile([2, 3, 2], [2, 2, 3]) == ([6, 2], [2.0, 3.0])


class TestTwoIndex:
    @pytest.mark.parametrize("q,p", [(1, 2), (2, 1), (1.5, 3), (3, 1.5), (2, 2)])
    def test_product_splits(self, q, p):
        rng = np.random.default_rng(3)
        s = random_state(rng, [("B", 2)]).op
        t = random_state(rng, [("A", 2)]).op
        res = norm_two_index(tensor(s, t), (["B"], ["A"]), q, p, CFG)
        assert res.value == pytest.approx(schatten_norm(s.entries, q) * schatten_norm(t.entries, p), rel=1e-6)

    @pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0])
    def test_classical_matches_vector_norm(self, alpha):
        rng = np.random.default_rng(4)
        p = rng.random((2, 3))
        p /= p.sum()
        x = op(np.diag(p.ravel()), [("B", 2), ("A", 3)])
        res = norm_two_index(x, (["B"], ["A"]), 1, alpha, CFG)
        assert res.value == pytest.approx(vector_nested_norm(p, [1, alpha]), abs=1e-8)

    def test_bell_state_grid(self):
        v = np.zeros(4)
        v[[0, 3]] = 1 / math.sqrt(2)
        x = op(np.outer(v, v), [("B", 2), ("A", 2)])
        res = norm_two_index(x, (["B"], ["A"]), 1, 2, CFG)
        # grid over the Bloch ball for σ = F = G
        best = math.inf
        for r in np.linspace(0, 0.999, 40):
            for th in np.linspace(0, math.pi, 13):
                for ph in np.linspace(0, 2 * math.pi, 13):
                    n = r * np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
                    sig = 0.5 * np.array([[1 + n[2], n[0] - 1j * n[1]], [n[0] + 1j * n[1], 1 - n[2]]])
                    w, u = np.linalg.eigh(sig)
                    s = np.kron(u @ np.diag(w**-0.25) @ u.conj().T, np.eye(2))
                    best = min(best, schatten_norm(s @ x.entries @ s, 2))
        assert res.value <= best + 1e-9
        assert res.value == pytest.approx(best, rel=1e-3)
        assert res.bound == "upper"

    def test_equal_indices_is_schatten(self):
        rng = np.random.default_rng(5)
        x = op(ginibre(rng, 4), [("B", 2), ("A", 2)])
        res = norm_two_index(x, (["B"], ["A"]), 2, 2)
        assert res.value == schatten_norm(x.entries, 2)
        assert res.mode == "exact"

    @pytest.mark.parametrize("alpha", [1.5, 2.0])
    def test_entropy_consistency(self, alpha):
        rng = np.random.default_rng(6)
        rho = random_state(rng, [("B", 2), ("A", 2)])
        res = norm_two_index(rho.op, (["B"], ["A"]), 1, alpha, CFG)
        h = cond_renyi_up(rho, alpha, CFG)
        assert alpha / (1 - alpha) * math.log2(res.value) == pytest.approx(h.value, abs=1e-6)

    def test_unitary_invariance_first_factor(self):
        rng = np.random.default_rng(7)
        rho = random_state(rng, [("B", 2), ("A", 2)]).op
        u = np.kron(random_unitary(rng, 2), np.eye(2))
        rot = op(u @ rho.entries @ u.conj().T, rho.factors)
        for q, p in [(1, 2), (3, 1.5)]:
            a = norm_two_index(rho, (["B"], ["A"]), q, p, CFG).value
            b = norm_two_index(rot, (["B"], ["A"]), q, p, CFG).value
            assert abs(a - b) < 1e-6

    def test_non_hermitian_input_uses_two_weights(self):
        rng = np.random.default_rng(8)
        x = op(ginibre(rng, 4), [("B", 2), ("A", 2)])
        untied = norm_two_index(x, (["B"], ["A"]), 1, 2, CFG)
        assert len(untied.witness) == 2
        for w in untied.witness:
            assert np.trace(w).real == pytest.approx(1)
            assert np.linalg.eigvalsh(w)[0] >= -1e-12


def test_tied_matches_untied_for_psd():
    rng = np.random.default_rng(9)
    for _ in range(3):
        rho = random_state(rng, [("B", 2), ("A", 2)]).entries
        for ps in ([1, 2], [2, 1]):
            tied = chain_norm(rho, [2, 2], ps, OptimizerConfig(restarts=2, tied=True))
            full = chain_norm(rho, [2, 2], ps, OptimizerConfig(restarts=2, tied=False))
            assert tied.value == pytest.approx(full.value, abs=1e-4)


def test_support_reduction_matches_regularized_problem():
    rng = np.random.default_rng(10)
    g = rng.standard_normal((12, 2)) + 1j * rng.standard_normal((12, 2))
    m = g @ g.conj().T  # marginal on the first factor has rank 4 of 6
    for ps in ([1, 2], [2, 1]):
        red = chain_norm(m, [6, 2], ps, FAST_CFG, need_x=True)
        reg = chain_norm(m + 1e-11 * np.eye(12), [6, 2], ps, FAST_CFG)
        assert red.value == pytest.approx(reg.value, rel=1e-7)
        assert red.x_weight.shape == (12, 12)
    # the lifted dual weight is the derivative along rank-preserving directions
    h = rng.standard_normal((12, 2)) + 1j * rng.standard_normal((12, 2))
    t = 1e-6
    f = lambda gg: chain_norm(gg @ gg.conj().T, [6, 2], [1, 2], FAST_CFG).log_value
    fd = (f(g + t * h) - f(g - t * h)) / (2 * t)
    res = chain_norm(m, [6, 2], [1, 2], FAST_CFG, need_x=True)
    dm = h @ g.conj().T + g @ h.conj().T
    assert np.trace(res.x_weight @ dm).real == pytest.approx(fd, rel=1e-5, abs=1e-7)


class TestMultiIndex:
    def test_merge_equal_adjacent(self):
        rng = np.random.default_rng(11)
        rho = random_state(rng, [("A", 2), ("A2", 2), ("B", 2)]).op
        a = norm_multi_index(rho, "A:1,A2:1,B:2", CFG)
        merged = op(rho.entries, [("AA", 4), ("B", 2)])
        b = norm_multi_index(merged, "AA:1,B:2", CFG)
        assert a.value == pytest.approx(b.value, rel=1e-7)

    def test_product_monotone(self):
        rng = np.random.default_rng(12)
        xs = [random_state(rng, [(l, 2)]).op for l in "ABC"]
        x = tensor(tensor(xs[0], xs[1]), xs[2])
        for prof, ps in [("A:1,B:2,C:3", [1, 2, 3]), ("A:3,B:2,C:1", [3, 2, 1])]:
            want = math.prod(schatten_norm(m.entries, p) for m, p in zip(xs, ps))
            assert norm_multi_index(x, prof, CFG).value == pytest.approx(want, rel=1e-6)

    def test_trailing_one(self):
        rng = np.random.default_rng(13)
        rho = random_state(rng, [("Q1", 2), ("T", 2), ("Q2", 2)]).op
        a = norm_multi_index(rho, "Q1:1,T:2,Q2:1", CFG)
        from rnl.operators import partial_trace

        b = norm_two_index(partial_trace(rho, ["Q2"]), (["Q1"], ["T"]), 1, 2, CFG)
        assert a.value == pytest.approx(b.value, rel=1e-9)
        # on a product across Q2 the trailing factor contributes its trace
        s = random_state(rng, [("Q2", 2)]).op
        prod = tensor(partial_trace(rho, ["Q2"]), s)
        assert norm_multi_index(prod, "Q1:1,T:2,Q2:1", CFG).value == pytest.approx(b.value, rel=1e-7)

    def test_unsupported(self):
        rng = np.random.default_rng(14)
        rho = random_state(rng, [("A", 2), ("B", 2), ("C", 2), ("D", 2)]).op
        with pytest.raises(UnsupportedProfileError):
            norm_multi_index(rho, "A:1,B:2,C:1,D:2", CFG)

    def test_label_mismatch(self):
        with pytest.raises(ValueError):
            norm_multi_index(op(np.eye(4), [("A", 2), ("B", 2)]), "A:1,C:2")


class TestSwapContraction:
    def test_product_equality(self):
        rng = np.random.default_rng(15)
        x = tensor(random_state(rng, [("A", 2)]).op, random_state(rng, [("B", 2)]).op)
        lhs, rhs, ok = check_swap_contraction(x, 1, 2, CFG)
        assert ok and lhs == pytest.approx(rhs, rel=1e-6)

    def test_equal_indices(self):
        rng = np.random.default_rng(16)
        x = op(ginibre(rng, 4), [("A", 2), ("B", 2)])
        lhs, rhs, ok = check_swap_contraction(x, 2, 2)
        assert ok and lhs == pytest.approx(rhs, rel=1e-12)

    def test_random(self):
        rng = np.random.default_rng(17)
        for i in range(10):
            x = op(ginibre(rng, 4), [("A", 2), ("B", 2)])
            p, q = (1, 2) if i % 2 == 0 else (1.5, 3)
            assert check_swap_contraction(x, p, q, CFG)[2]

    def test_order(self):
        with pytest.raises(ValueError):
            check_swap_contraction(op(np.eye(4), [("A", 2), ("B", 2)]), 2, 1)
