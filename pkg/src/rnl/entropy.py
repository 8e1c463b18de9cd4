"""Sandwiched Rényi divergences and conditional entropies (all in bits)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .operators import (
    DensityOperator,
    LabeledOperator,
    as_operator,
    entropy_bits,
    frac_power_matrix,
    hermitian_part,
    partial_trace,
    permute,
    von_neumann_entropy,
)
from .schatten import DEFAULT_CFG, OptimizerConfig, chain_norm

LN2 = math.log(2.0)
SUPPORT_TOL = 1e-10


def _matrix(x) -> np.ndarray:
    if isinstance(x, (LabeledOperator, DensityOperator)):
        return as_operator(x).entries
    return np.asarray(x, dtype=complex)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not alpha > 1:
        raise ValueError(f"Rényi order must exceed 1, got {alpha}")
    return alpha


def _support_contained(rho: np.ndarray, sigma: np.ndarray) -> bool:
    w, v = np.linalg.eigh(hermitian_part(sigma))
    ker = v[:, w <= 1e-12 * max(w[-1], 0.0)]
    if ker.shape[1] == 0:
        return True
    leak = np.abs(np.trace(ker.conj().T @ rho @ ker))
    return leak <= SUPPORT_TOL * max(1.0, abs(np.trace(rho)))


def sandwiched_divergence(rho, sigma, alpha: float) -> float:
    """``D_α(ρ‖σ) = α/(α-1) log ‖σ^{(1-α)/2α} ρ σ^{(1-α)/2α}‖_α`` in bits.

    Returns ``math.inf`` when the support of ρ is not inside that of σ.
    """
    alpha = _check_alpha(alpha)
    r, s = _matrix(rho), _matrix(sigma)
    if r.shape != s.shape:
        raise ValueError("ρ and σ must act on the same space")
    if not _support_contained(r, s):
        return math.inf
    sp = frac_power_matrix(s, (1 - alpha) / (2 * alpha))
    w = np.linalg.eigvalsh(hermitian_part(sp @ r @ sp))
    w = np.maximum(w, 0.0)
    norm = float(np.sum(w**alpha)) ** (1 / alpha)
    if norm <= 0:
        return -math.inf
    return alpha / (alpha - 1) * math.log2(norm)


def _split_condition(rho, condition: Sequence[str] | None):
    """Reorder ``rho`` so that the conditioning factors come first."""
    op = as_operator(rho)
    cond = list(condition) if condition is not None else op.labels[:1]
    for lbl in cond:
        if lbl not in op.labels:
            raise ValueError(f"unknown conditioning label {lbl!r}")
    rest = [lbl for lbl in op.labels if lbl not in cond]
    op = permute(op, cond + rest)
    d_b = int(np.prod([op.dim_of(l) for l in cond])) if cond else 1
    return op, d_b, op.dim // d_b


def renyi_from_log_norm(log_norm: float, alpha: float) -> float:
    """Map a natural-log (1, α) norm to ``α/(1-α) log2 N``."""
    return alpha / (1 - alpha) * log_norm / LN2


@dataclass
class CondEntropyResult:
    value: float
    sigma: np.ndarray
    converged: bool
    norm_path: float
    sigma_path: float

    @property
    def paths_gap(self) -> float:
        return abs(self.norm_path - self.sigma_path)


def cond_renyi_norm(rho, alpha: float, condition=None, cfg: OptimizerConfig = DEFAULT_CFG):
    """``H↑_α(A|B)`` through the ``(B:1, A:α)`` norm; returns ``(value, NormResult)``."""
    alpha = _check_alpha(alpha)
    op, d_b, d_a = _split_condition(rho, condition)
    res = chain_norm(op.entries, [d_b, d_a], [1.0, alpha], cfg)
    return renyi_from_log_norm(res.log_value, alpha), res


def _sigma_path(m: np.ndarray, d_b: int, d_a: int, alpha: float, cfg: OptimizerConfig, starts):
    """Minimize ``D_α(ρ‖σ_B ⊗ 1_A)`` with central finite-difference gradients."""
    h = cfg.fd_step

    def sig_of(z):
        l = (z[: d_b * d_b] + 1j * z[d_b * d_b :]).reshape(d_b, d_b)
        s = l @ l.conj().T
        return s / np.trace(s).real

    def obj(z):
        s = np.kron(sig_of(z), np.eye(d_a))
        return sandwiched_divergence(m, s, alpha)

    def fun(z):
        f0 = obj(z)
        g = np.empty_like(z)
        for i in range(z.size):
            e = np.zeros_like(z)
            e[i] = h
            g[i] = (obj(z + e) - obj(z - e)) / (2 * h)
        return f0, g

    best = None
    for s0 in starts:
        w, u = np.linalg.eigh(hermitian_part(s0))
        l0 = u * np.sqrt(np.maximum(w, 1e-8))
        z0 = np.concatenate([l0.real.ravel(), l0.imag.ravel()])
        res = minimize(fun, z0, jac=True, method="L-BFGS-B",
                       options={"maxiter": cfg.max_iters, "ftol": 1e-15, "gtol": 1e-10})
        if best is None or res.fun < best[0]:
            best = (float(res.fun), sig_of(res.x), bool(res.success) or np.max(np.abs(res.jac)) < 1e-6)
    return best


def cond_renyi_up(rho, alpha: float, cfg: OptimizerConfig = DEFAULT_CFG, condition=None,
                  cross_check: bool = True) -> CondEntropyResult:
    """Optimized conditional entropy ``H↑_α(A|B) = -min_σ D_α(ρ_BA ‖ σ_B ⊗ 1_A)``.

    ``condition`` lists the conditioning labels (default: the first factor).
    Two independent minimizations are run: the analytic-gradient norm
    path and a finite-difference search directly over σ_B.  Every σ
    evaluated is feasible, so the returned value (the better of the two) is
    a lower bound on the true entropy.  ``cross_check=False`` skips the
    second path.
    """
    alpha = _check_alpha(alpha)
    op, d_b, d_a = _split_condition(rho, condition)
    m = op.entries
    h_norm, res = cond_renyi_norm(op, alpha, op.labels[:len(condition) if condition else 1], cfg)
    if d_b == 1:
        return CondEntropyResult(h_norm, np.eye(1), True, h_norm, h_norm)
    if not cross_check:
        sig = res.witness[0] if res.witness else np.eye(d_b) / d_b
        return CondEntropyResult(h_norm, sig, res.converged, h_norm, math.nan)
    sig_norm = res.witness[0] if res.witness else np.eye(d_b) / d_b
    rng = np.random.default_rng(cfg.seed)
    starts = [np.eye(d_b) / d_b]
    for _ in range(min(cfg.restarts, 2)):
        g = rng.standard_normal((d_b, d_b)) + 1j * rng.standard_normal((d_b, d_b))
        starts.append(g @ g.conj().T)
    d_min, sig_fd, ok_fd = _sigma_path(m, d_b, d_a, alpha, cfg, starts)
    h_sig = -d_min
    if h_sig > h_norm:
        return CondEntropyResult(h_sig, sig_fd, ok_fd, h_norm, h_sig)
    return CondEntropyResult(h_norm, sig_norm, res.converged, h_norm, h_sig)


def von_neumann_conditional(rho, condition_labels: Sequence[str]) -> float:
    """``H(A|B) = H(AB) - H(B)`` in bits, ``B`` = ``condition_labels``."""
    op = as_operator(rho)
    rest = [lbl for lbl in op.labels if lbl not in condition_labels]
    h_ab = von_neumann_entropy(op.entries)
    h_b = von_neumann_entropy(partial_trace(op, rest).entries) if condition_labels else 0.0
    return h_ab - h_b


def renyi_entropy(rho, alpha: float) -> float:
    """Unconditional ``H_α(A) = 1/(1-α) log tr ρ^α``."""
    w = np.maximum(np.linalg.eigvalsh(hermitian_part(_matrix(rho))), 0.0)
    if alpha == 1:
        return entropy_bits(w)
    return math.log2(float(np.sum(w**alpha))) / (1 - alpha)


def arimoto_conditional(p_ba: np.ndarray, alpha: float) -> float:
    """Classical ``H↑_α(A|B) = α/(1-α) log Σ_b (Σ_a p(a,b)^α)^{1/α}``; rows index b."""
    p = np.asarray(p_ba, dtype=float)
    inner = np.sum(p**alpha, axis=1) ** (1 / alpha)
    return alpha / (1 - alpha) * math.log2(float(inner.sum()))


# ---------------------------------------------------------------- cq-states


@dataclass(frozen=True)
class WeightFunction:
    table: Mapping

    def __post_init__(self):
        tab = {k: float(v) for k, v in dict(self.table).items()}
        if not all(math.isfinite(v) for v in tab.values()):
            raise ValueError("weight function values must be finite")
        object.__setattr__(self, "table", tab)

    def __call__(self, x) -> float:
        return self.table[x]

    @property
    def max(self) -> float:
        return max(self.table.values())

    @property
    def min(self) -> float:
        return min(self.table.values())

    def shifted(self, c: float) -> WeightFunction:
        return WeightFunction({k: v + c for k, v in self.table.items()})


@dataclass(frozen=True)
class ClassicalQuantumState:
    """``ρ_XEA = Σ_x p_x |x⟩⟨x| ⊗ ρ^x_EA`` with normalized blocks ``ρ^x_EA``.

    ``e_labels`` come first in each block's factor order.
    """

    outcomes: tuple
    e_labels: tuple
    a_labels: tuple
    tol: float = 1e-8

    def __post_init__(self):
        outs = []
        for x, w, block in self.outcomes:
            block = as_operator(block)
            w = float(w)
            if w < -self.tol:
                raise ValueError("outcome weights must be nonnegative")
            if block.labels != list(self.e_labels) + list(self.a_labels):
                raise ValueError(f"block labels {block.labels} do not match E{list(self.e_labels)} A{list(self.a_labels)}")
            if np.linalg.eigvalsh(hermitian_part(block.entries))[0] < -self.tol:
                raise ValueError("cq blocks must be PSD")
            if w > 0 and abs(block.trace().real - 1) > self.tol:
                raise ValueError("cq blocks must have unit trace")
            outs.append((x, max(w, 0.0), block))
        total = sum(w for _, w, _ in outs)
        if abs(total - 1) > self.tol:
            raise ValueError(f"cq weights sum to {total:.6g}")
        object.__setattr__(self, "outcomes", tuple(outs))
        object.__setattr__(self, "e_labels", tuple(self.e_labels))
        object.__setattr__(self, "a_labels", tuple(self.a_labels))

    @property
    def symbols(self) -> list:
        return [x for x, _, _ in self.outcomes]

    @property
    def dim_e(self) -> int:
        b = self.outcomes[0][2]
        return int(np.prod([b.dim_of(l) for l in self.e_labels])) if self.e_labels else 1

    @property
    def dim_a(self) -> int:
        return self.outcomes[0][2].dim // self.dim_e

    def distribution(self) -> dict:
        return {x: w for x, w, _ in self.outcomes}

    def to_operator(self, x_label: str = "X") -> LabeledOperator:
        """Block-diagonal operator on ``X E A``."""
        n = len(self.outcomes)
        d = self.outcomes[0][2].dim
        m = np.zeros((n * d, n * d), dtype=complex)
        for i, (_, w, b) in enumerate(self.outcomes):
            m[i * d : (i + 1) * d, i * d : (i + 1) * d] = w * b.entries
        return LabeledOperator(m, ((x_label, n),) + self.outcomes[0][2].factors)

    @classmethod
    def from_blocks(cls, blocks: Mapping, e_labels, a_labels) -> ClassicalQuantumState:
        """Build from subnormalized blocks ``{x: ρ^x}`` (weights = traces)."""
        outs = []
        for x, b in blocks.items():
            b = as_operator(b)
            w = b.trace().real
            nb = b.scaled(1 / w) if w > 1e-15 else b
            outs.append((x, w, nb))
        return cls(tuple(outs), tuple(e_labels), tuple(a_labels))

    def to_json(self) -> dict:
        return {
            "e_labels": list(self.e_labels),
            "a_labels": list(self.a_labels),
            "outcomes": [{"x": x, "weight": w, "block": b.to_json()} for x, w, b in self.outcomes],
        }

    @classmethod
    def from_json(cls, obj: dict) -> ClassicalQuantumState:
        outs = [(o["x"], o["weight"], LabeledOperator.from_json(o["block"])) for o in obj["outcomes"]]
        return cls(tuple(outs), tuple(obj.get("e_labels", [])), tuple(obj["a_labels"]))


def _block_norms(state: ClassicalQuantumState, alpha: float, cfg: OptimizerConfig) -> list[tuple]:
    d_e, d_a = state.dim_e, state.dim_a
    out = []
    for x, w, b in state.outcomes:
        if w <= 0:
            out.append((x, w, -math.inf, True))
            continue
        r = chain_norm(b.entries, [d_e, d_a], [1.0, alpha], cfg)
        out.append((x, w, math.log(w) + r.log_value, r.converged))
    return out


def f_weighted_entropy(state: ClassicalQuantumState, f: WeightFunction | None, alpha: float,
                       cfg: OptimizerConfig = DEFAULT_CFG) -> float:
    """``α/(1-α) log Σ_x 2^{((α-1)/α) f(x)} ‖ρ^x_EA‖_{(E:1, A:α)}`` in bits."""
    alpha = _check_alpha(alpha)
    terms = []
    for x, w, lognorm, _ in _block_norms(state, alpha, cfg):
        if w <= 0:
            continue
        fx = f(x) if f is not None else 0.0
        terms.append((alpha - 1) / alpha * fx * LN2 + lognorm)
    total = np.logaddexp.reduce(np.array(terms))
    return alpha / (1 - alpha) * float(total) / LN2


def cq_conditional_entropy(state: ClassicalQuantumState) -> float:
    """``H(A|XE) = Σ_x p_x H(A|E)_{ρ^x}``."""
    tot = 0.0
    for _, w, b in state.outcomes:
        if w > 0:
            tot += w * von_neumann_conditional(b, list(state.e_labels))
    return tot


def eta_zero(f: WeightFunction, dim_a: int) -> float:
    """``|A| (2^{max f} + 2^{-min f}) + 1``."""
    return dim_a * (2.0**f.max + 2.0 ** (-f.min)) + 1.0


def alpha_window(f: WeightFunction, dim_a: int) -> float:
    """Largest admissible order ``1 + 1/log η₀`` (exclusive)."""
    return 1.0 + 1.0 / math.log2(eta_zero(f, dim_a))


@dataclass
class ContinuityBound:
    lower: float
    upper: float
    eta0: float
    alpha_ok: bool

    def __iter__(self):
        return iter((self.lower, self.upper, self.eta0, self.alpha_ok))


def continuity_bound(state: ClassicalQuantumState, f: WeightFunction, alpha: float) -> ContinuityBound:
    """Sandwich ``upper - (α-1)(log η₀)² <= H^{↑,f}_α <= upper``, ``upper = H(A|XE) - E f``."""
    alpha = _check_alpha(alpha)
    eta0 = eta_zero(f, state.dim_a)
    ef = sum(w * f(x) for x, w, _ in state.outcomes)
    upper = cq_conditional_entropy(state) - ef
    lower = upper - (alpha - 1) * math.log2(eta0) ** 2
    return ContinuityBound(lower, upper, eta0, alpha < 1 + 1 / math.log2(eta0))
