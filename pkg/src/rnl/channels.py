"""Channel norms 1 → (1, α) and their entropy forms.

For a channel Φ: Q → RS the plain quantity is the minimal output entropy
``inf_ρ H↑_α(S|R)_{Φ(ρ)}`` and the completely bounded one conditions on a
purifying copy Q̃ ≅ Q as well.  Results are reported in entropy form,
``α/(1-α) log2 ‖Φ‖``.

The outer supremum over inputs is a smooth maximization over (unnormalized)
input vectors.  The inner infimum over σ is re-solved at every step from a
warm start, and its optimal dual weight supplies the outer gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .entropy import renyi_from_log_norm
from .operators import (
    DensityOperator,
    KrausChannel,
    LabeledOperator,
    hermitian_part,
    permutation_matrix,
    purification_vector,
)
from .schatten import DEFAULT_CFG, OptimizerConfig, chain_norm

INNER_CFG = OptimizerConfig(restarts=0, max_iters=2000)
# looser inner solves while the outer search moves; final values use INNER_CFG
SEARCH_CFG = OptimizerConfig(restarts=0, max_iters=400, rel_tol=1e-6)


class InfeasibleConstraintError(ValueError):
    """Raised when no density operator satisfies a linear constraint."""


@dataclass(frozen=True)
class LinearConstraint:
    """``N(ρ) = τ tr ρ`` for a CPTP map ``N`` and a unit-trace target ``τ``."""

    n_map: KrausChannel
    tau: LabeledOperator

    def __post_init__(self):
        if not self.n_map.trace_preserving:
            raise ValueError("constraint map must be trace preserving")
        t = self.tau.entries
        if t.shape != (self.n_map.d_out, self.n_map.d_out):
            raise ValueError("target dimension does not match constraint map output")
        if abs(np.trace(t) - 1) > 1e-8 or np.linalg.eigvalsh(hermitian_part(t))[0] < -1e-8:
            raise ValueError("target must be a density operator")

    def residual(self, rho: np.ndarray) -> np.ndarray:
        return self.n_map.apply_matrix(rho) - self.tau.entries * np.trace(rho)

    def violation(self, rho: np.ndarray) -> float:
        """Trace-norm violation ``‖N(ρ) - τ tr ρ‖_1``."""
        return float(np.sum(np.abs(np.linalg.eigvalsh(hermitian_part(self.residual(rho))))))

    def quadratic_forms(self) -> list[np.ndarray]:
        """Independent Hermitian ``A_l`` with ``tr[A_l ρ] = 0`` equivalent to the constraint."""
        d = self.n_map.d_out
        tau = self.tau.entries
        forms = []
        for h in _hermitian_basis(d):
            forms.append(self.n_map.adjoint_matrix(h) - np.trace(h @ tau).real * np.eye(self.n_map.d_in))
        flat = np.array([np.concatenate([f.real.ravel(), f.imag.ravel()]) for f in forms])
        u, s, vh = np.linalg.svd(flat, full_matrices=False)
        keep = s > 1e-10 * max(s[0], 1e-300) if s.size else []
        d_in = self.n_map.d_in
        out = []
        for row, sv in zip(vh[: int(np.sum(keep))], s):
            m = row[: d_in * d_in].reshape(d_in, d_in) + 1j * row[d_in * d_in :].reshape(d_in, d_in)
            out.append(hermitian_part(m))
        return out

    def to_json(self) -> dict:
        return {"n_map": self.n_map.to_json(), "tau": self.tau.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> LinearConstraint:
        return cls(KrausChannel.from_json(obj["n_map"]), LabeledOperator.from_json(obj["tau"]))


def trivial_constraint(d: int, label: str = "Q") -> LinearConstraint:
    """The full trace with target 1: every state is feasible."""
    ks = tuple(np.eye(d)[i : i + 1, :] for i in range(d))
    return LinearConstraint(KrausChannel(ks, [(label, d)], []), LabeledOperator(np.eye(1), []))


def _hermitian_basis(d: int) -> list[np.ndarray]:
    out = []
    for i in range(d):
        m = np.zeros((d, d), dtype=complex)
        m[i, i] = 1
        out.append(m)
    for i in range(d):
        for j in range(i + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[i, j] = m[j, i] = 1 / math.sqrt(2)
            out.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[i, j], m[j, i] = -1j / math.sqrt(2), 1j / math.sqrt(2)
            out.append(m)
    return out


@dataclass
class ChannelNormResult:
    log_value: float  # entropy form α/(1-α) log2 ‖Φ‖
    witness_state: DensityOperator | None
    converged: bool
    log_norm: float = 0.0  # natural log of the norm
    witness_vector: np.ndarray | None = None
    kind: str = "cb"

    @property
    def norm(self) -> float:
        return math.exp(self.log_norm)


# ---------------------------------------------------------------- objective


def _output_split(phi: KrausChannel, condition: Sequence[str] | None):
    labels = phi.out_labels
    cond = list(condition) if condition is not None else labels[:-1]
    for lbl in cond:
        if lbl not in labels:
            raise ValueError(f"unknown conditioning label {lbl!r}")
    rest = [lbl for lbl in labels if lbl not in cond]
    perm = [labels.index(lbl) for lbl in cond + rest]
    dims = [d for _, d in phi.out_factors]
    p = permutation_matrix(dims, perm) if dims else np.eye(1)
    d_r = int(np.prod([dims[labels.index(l)] for l in cond])) if cond else 1
    d_s = phi.d_out // d_r
    return p, d_r, d_s


class InputObjective:
    """``v ↦ log ‖Σ K v v* K*‖_{(C:1, S:α)} - 2 log|v|`` with its gradient."""

    def __init__(self, kraus: Sequence[np.ndarray], d_c: int, d_s: int, alpha: float, inner: OptimizerConfig):
        self.kraus = [np.asarray(k, dtype=complex) for k in kraus]
        self.d_c, self.d_s = d_c, d_s
        self.alpha = alpha
        self.inner = replace(inner, tied=True)
        self.warm = None
        self.last = None

    def output(self, v: np.ndarray) -> np.ndarray:
        out = sum(np.outer(k @ v, (k @ v).conj()) for k in self.kraus)
        return hermitian_part(out)

    def log_norm(self, v: np.ndarray, warm=None, cfg=None):
        w = self.output(v)
        res = chain_norm(w, [self.d_c, self.d_s], [1.0, self.alpha], cfg or self.inner, warm=warm, need_x=True)
        return res

    def __call__(self, z: np.ndarray):
        n = z.size // 2
        v = z[:n] + 1j * z[n:]
        nv2 = float(np.real(v.conj() @ v))
        res = self.log_norm(v, self.warm)
        if res.params is not None:
            self.warm = res.params
        self.last = res
        zmat = sum(k.conj().T @ res.x_weight @ k for k in self.kraus)
        g = 2 * hermitian_part(zmat) @ v - 2 * v / nv2
        val = res.log_value - math.log(nv2)
        return -val, -np.concatenate([g.real, g.imag])


def _maximize_over_vectors(obj: InputObjective, starts: Sequence[np.ndarray], cfg: OptimizerConfig):
    best = None
    for v0 in starts:
        obj.warm = None
        z0 = np.concatenate([v0.real, v0.imag])
        res = minimize(obj, z0, jac=True, method="L-BFGS-B",
                       options={"maxiter": min(cfg.max_iters, 500), "ftol": 1e-14, "gtol": 1e-9})
        n = res.x.size // 2
        v = res.x[:n] + 1j * res.x[n:]
        v = v / np.linalg.norm(v)
        # re-solve the inner problem cold and with restarts for a clean final value
        fin = obj.log_norm(v, cfg=replace(INNER_CFG, tied=True))
        warmfin = obj.log_norm(v, warm=obj.warm) if obj.warm is not None else fin
        if warmfin.log_value < fin.log_value:
            fin = warmfin
        gnorm = float(np.max(np.abs(res.jac))) if res.jac is not None else np.inf
        ok = (bool(res.success) or gnorm < 1e-5) and fin.converged
        cand = (fin.log_value, v, ok)
        if best is None or cand[0] > best[0] + 1e-12:
            best = cand
    return best


def _random_vectors(rng, n: int, count: int) -> list[np.ndarray]:
    return [rng.standard_normal(n) + 1j * rng.standard_normal(n) for _ in range(count)]


def _purified_kraus(phi: KrausChannel, p: np.ndarray, d_env: int) -> list[np.ndarray]:
    """Kraus operators of ``id_Q̃ ⊗ Φ`` with outputs reordered to ``Q̃ R S``."""
    return [np.kron(np.eye(d_env), p @ k) for k in phi.kraus]


def _marginal(v: np.ndarray, d_env: int, d_q: int) -> np.ndarray:
    m = v.reshape(d_env, d_q)
    return hermitian_part(m.T @ m.conj())


def _density_from(rho: np.ndarray, phi: KrausChannel) -> DensityOperator:
    rho = hermitian_part(rho / np.trace(rho).real)
    return DensityOperator(LabeledOperator(rho, phi.in_factors), 1e-6)


def min_output_entropy(phi: KrausChannel, alpha: float, cfg: OptimizerConfig = DEFAULT_CFG,
                       condition: Sequence[str] | None = None) -> ChannelNormResult:
    """``inf_ρ H↑_α(S|R)_{Φ(ρ)}`` with ``R`` = ``condition`` (default: all outputs but the last).

    The output norm is convex in ρ, so the supremum is attained on pure inputs.
    """
    alpha = float(alpha)
    p, d_r, d_s = _output_split(phi, condition)
    kraus = [p @ k for k in phi.kraus]
    obj = InputObjective(kraus, d_r, d_s, alpha, SEARCH_CFG)
    d = phi.d_in
    rng = np.random.default_rng(cfg.seed)
    starts = [np.eye(d)[i].astype(complex) for i in range(d)]
    starts += _random_vectors(rng, d, max(cfg.restarts, 1))
    val, v, ok = _maximize_over_vectors(obj, starts, cfg)
    rho = np.outer(v, v.conj())
    return ChannelNormResult(renyi_from_log_norm(val, alpha), _density_from(rho, phi), ok, val, v, "plain")


def cb_entropy(phi: KrausChannel, alpha: float, cfg: OptimizerConfig = DEFAULT_CFG,
               condition: Sequence[str] | None = None, starts: Sequence[np.ndarray] | None = None) -> ChannelNormResult:
    """``inf_ρ H↑_α(S|RQ̃)`` at the canonical purification, Q̃ ≅ Q."""
    alpha = float(alpha)
    p, d_r, d_s = _output_split(phi, condition)
    d = phi.d_in
    kraus = _purified_kraus(phi, p, d)
    obj = InputObjective(kraus, d * d_r, d_s, alpha, SEARCH_CFG)
    rng = np.random.default_rng(cfg.seed)
    init = list(starts or [])
    init.append(np.eye(d).reshape(-1).astype(complex))
    init += _random_vectors(rng, d * d, max(cfg.restarts // 2, 1))
    val, v, ok = _maximize_over_vectors(obj, init, cfg)
    rho = _marginal(v, d, d)
    return ChannelNormResult(renyi_from_log_norm(val, alpha), _density_from(rho, phi), ok, val, v, "cb")


cb_norm_1_to_1p = cb_entropy


def cb_objective_at(phi: KrausChannel, rho: np.ndarray, alpha: float,
                    condition: Sequence[str] | None = None, cfg: OptimizerConfig = INNER_CFG):
    """Natural-log norm ``‖(id ⊗ Φ)(|√ρ⟩⟨√ρ|)‖_{(Q̃R:1, S:α)}`` for a PSD ``ρ`` (any trace)."""
    p, d_r, d_s = _output_split(phi, condition)
    d = phi.d_in
    obj = InputObjective(_purified_kraus(phi, p, d), d * d_r, d_s, alpha, cfg)
    v = purification_vector(rho)
    return obj.log_norm(v, cfg=cfg)


# ---------------------------------------------------------------- restricted


def feasible_points(r: LinearConstraint, count: int = 0, seed: int = 0) -> list[np.ndarray]:
    """A central feasible density operator followed by ``count`` random ones."""
    import cvxpy as cp

    d = r.n_map.d_in
    forms = r.quadratic_forms()
    x = cp.Variable((d, d), hermitian=True)
    cons = [x >> 0, cp.real(cp.trace(x)) == 1]
    cons += [cp.real(cp.trace(a @ x)) == 0 for a in forms]
    prob = cp.Problem(cp.Minimize(cp.sum_squares(x - np.eye(d) / d)), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise InfeasibleConstraintError(f"constraint infeasible ({prob.status})")
    center = _clean_feasible(x.value, forms)
    out = [center]
    rng = np.random.default_rng(seed)
    for _ in range(count):
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        h = hermitian_part(g)
        prob = cp.Problem(cp.Maximize(cp.real(cp.trace(h @ x))), cons)
        prob.solve(solver=cp.CLARABEL)
        ext = _clean_feasible(x.value, forms)
        lam = rng.uniform(0.3, 0.9)
        out.append(lam * ext + (1 - lam) * center)
    return out


def _clean_feasible(x: np.ndarray, forms: Sequence[np.ndarray]) -> np.ndarray:
    """Remove residual constraint violation by projecting onto the affine set."""
    x = hermitian_part(np.asarray(x, dtype=complex))
    x = x / np.trace(x).real
    if forms:
        d = x.shape[0]
        a = np.array([np.concatenate([f.real.ravel(), f.imag.ravel()]) for f in forms])
        t = np.eye(d).reshape(-1)
        a = np.vstack([a, np.concatenate([t.real, t.imag])])
        xv = np.concatenate([x.real.ravel(), x.imag.ravel()])
        b = a @ xv - np.concatenate([np.zeros(len(forms)), [1.0]])
        corr = np.linalg.lstsq(a, b, rcond=None)[0]
        xv = xv - corr
        x = hermitian_part(xv[: d * d].reshape(d, d) + 1j * xv[d * d :].reshape(d, d))
    w, u = np.linalg.eigh(x)
    if w[0] < 0:
        x = (u * np.maximum(w, 0)) @ u.conj().T
    return x


def restricted_cb_entropy(phi: KrausChannel, alpha: float, r: LinearConstraint,
                          cfg: OptimizerConfig = DEFAULT_CFG, condition: Sequence[str] | None = None,
                          starts: Sequence[np.ndarray] | None = None) -> ChannelNormResult:
    """``inf H↑_α(S|RQ̃)`` over ρ with ``N(ρ) = τ``, at the canonical purification.

    Solved by SLSQP over purification vectors with the constraint imposed as
    quadratic equalities ``⟨v|1 ⊗ A_l|v⟩ = 0`` and ``|v| = 1``.
    """
    alpha = float(alpha)
    if r.n_map.d_in != phi.d_in:
        raise ValueError("constraint and channel inputs differ")
    p, d_r, d_s = _output_split(phi, condition)
    d = phi.d_in
    obj = InputObjective(_purified_kraus(phi, p, d), d * d_r, d_s, alpha, SEARCH_CFG)
    forms = [np.kron(np.eye(d), a) for a in r.quadratic_forms()]
    init = [purification_vector(x) for x in feasible_points(r, max(cfg.restarts // 4, 1), cfg.seed)]
    if starts:
        init = list(starts) + init

    def cons_fun(z):
        n = z.size // 2
        v = z[:n] + 1j * z[n:]
        vals = [float(np.real(v.conj() @ m @ v)) for m in forms]
        vals.append(float(np.real(v.conj() @ v)) - 1.0)
        return np.array(vals)

    def cons_jac(z):
        n = z.size // 2
        v = z[:n] + 1j * z[n:]
        rows = []
        for m in forms + [np.eye(n)]:
            g = 2 * (m @ v)
            rows.append(np.concatenate([g.real, g.imag]))
        return np.array(rows)

    best = None
    for v0 in init:
        obj.warm = None
        z0 = np.concatenate([v0.real, v0.imag])
        res = minimize(obj, z0, jac=True, method="SLSQP",
                       constraints=[{"type": "eq", "fun": cons_fun, "jac": cons_jac}],
                       options={"maxiter": min(cfg.max_iters, 300), "ftol": 1e-12})
        n = res.x.size // 2
        v = res.x[:n] + 1j * res.x[n:]
        v = _restore_feasible(v, r, d)
        fin = obj.log_norm(v, cfg=INNER_CFG)
        rho = _marginal(v, d, d)
        ok = bool(res.success) and fin.converged and r.violation(rho) < 1e-8
        cand = (fin.log_value, v, ok)
        if best is None or cand[0] > best[0] + 1e-12:
            best = cand
    val, v, ok = best
    rho = _marginal(v, d, d)
    return ChannelNormResult(renyi_from_log_norm(val, alpha), _density_from(rho, phi), ok, val, v, "restricted")


def _restore_feasible(v: np.ndarray, r: LinearConstraint, d: int) -> np.ndarray:
    """Snap a nearly feasible purification onto the constraint set."""
    v = v / np.linalg.norm(v)
    rho = _marginal(v, d, d)
    if r.violation(rho) < 1e-12:
        return v
    fixed = _clean_feasible(rho, r.quadratic_forms())
    # keep the Q̃ frame of v: v = (U ⊗ 1)|√ρ⟩ up to the polar part
    m = v.reshape(d, d)  # rows Q̃, columns Q
    s_old = _psd_sqrt(rho)
    s_new = _psd_sqrt(fixed)
    # m = W s_old^T with W an isometry on the support
    w = m @ np.linalg.pinv(s_old.T, rcond=1e-10)
    u, _, vh = np.linalg.svd(w)
    w = u @ vh
    out = (w @ s_new.T).reshape(-1)
    return out / np.linalg.norm(out)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, u = np.linalg.eigh(hermitian_part(m))
    return (u * np.sqrt(np.maximum(w, 0))) @ u.conj().T


restricted_cb_norm = restricted_cb_entropy


# ---------------------------------------------------------------- general inputs


class GeneralInputObjective:
    """``(ψ, φ) ↦ log‖Σ K ψ φ* K*‖_{(R:1,S:α)} - log|ψ| - log|φ|``."""

    def __init__(self, kraus, d_r, d_s, alpha):
        self.kraus = [np.asarray(k, dtype=complex) for k in kraus]
        self.d_r, self.d_s, self.alpha = d_r, d_s, alpha
        self.inner = replace(INNER_CFG, tied=False)
        self.warm = None

    def evaluate(self, psi, phi, warm=None, cfg=None):
        y = sum(np.outer(k @ psi, (k @ phi).conj()) for k in self.kraus)
        return chain_norm(y, [self.d_r, self.d_s], [1.0, self.alpha], cfg or self.inner, warm=warm, need_x=True)

    def __call__(self, z):
        n = z.size // 4
        psi = z[:n] + 1j * z[n : 2 * n]
        phi = z[2 * n : 3 * n] + 1j * z[3 * n :]
        res = self.evaluate(psi, phi, self.warm)
        if res.params is not None:
            self.warm = res.params
        zh = sum(k.conj().T @ res.x_weight @ k for k in self.kraus)
        gpsi = zh.conj().T @ phi - psi / np.real(psi.conj() @ psi)
        gphi = zh @ psi - phi / np.real(phi.conj() @ phi)
        val = res.log_value - 0.5 * math.log(np.real(psi.conj() @ psi)) - 0.5 * math.log(np.real(phi.conj() @ phi))
        return -val, -np.concatenate([gpsi.real, gpsi.imag, gphi.real, gphi.imag])


def general_input_norm(phi: KrausChannel, alpha: float, cfg: OptimizerConfig = DEFAULT_CFG,
                       condition: Sequence[str] | None = None) -> ChannelNormResult:
    """Supremum of ``‖Φ(X)‖_{(R:1,S:α)} / ‖X‖_1`` over all operators X.

    Extreme points of the trace-norm ball are rank one, so X = |ψ⟩⟨φ|; the
    inner norm of the non-Hermitian output uses independent left and right
    weights.
    """
    alpha = float(alpha)
    p, d_r, d_s = _output_split(phi, condition)
    obj = GeneralInputObjective([p @ k for k in phi.kraus], d_r, d_s, alpha)
    d = phi.d_in
    rng = np.random.default_rng(cfg.seed)
    best = None
    starts = []
    for i in range(d):
        e = np.eye(d)[i].astype(complex)
        starts.append((e + 0.01 * (rng.standard_normal(d) + 1j * rng.standard_normal(d)), e))
    for _ in range(max(cfg.restarts, 1)):
        starts.append(tuple(_random_vectors(rng, d, 2)))
    for psi0, phi0 in starts:
        obj.warm = None
        z0 = np.concatenate([psi0.real, psi0.imag, phi0.real, phi0.imag])
        res = minimize(obj, z0, jac=True, method="L-BFGS-B",
                       options={"maxiter": min(cfg.max_iters, 500), "ftol": 1e-14, "gtol": 1e-9})
        n = d
        z = res.x
        psi = z[:n] + 1j * z[n : 2 * n]
        ph = z[2 * n : 3 * n] + 1j * z[3 * n :]
        psi, ph = psi / np.linalg.norm(psi), ph / np.linalg.norm(ph)
        fin = obj.evaluate(psi, ph, cfg=replace(obj.inner, restarts=2))
        cand = (fin.log_value, psi, ph, bool(res.success) or np.max(np.abs(res.jac)) < 1e-5)
        if best is None or cand[0] > best[0]:
            best = cand
    val, psi, ph, ok = best
    return ChannelNormResult(renyi_from_log_norm(val, alpha), None, ok, val, np.concatenate([psi, ph]), "general")


# ---------------------------------------------------------------- duality


@dataclass
class DualCheck:
    feasible: bool
    objective: float
    worst_gap: float

    def __iter__(self):
        return iter((self.feasible, self.objective, self.worst_gap))


def dual_certificate_check(phi: KrausChannel, alpha: float, r: LinearConstraint, sigma, samples: int = 50,
                           seed: int = 0, condition: Sequence[str] | None = None, tol: float = 1e-6) -> DualCheck:
    """Randomized falsifier for dual feasibility of ``Σ``.

    Checks ``g(ρ) <= tr[Σ N(ρ)]`` on ``samples`` random PSD ρ, where ``g`` is
    the cb objective (norm form, homogeneous of degree one).  This can only
    refute feasibility; passing is evidence, not proof.  The inner norm is an
    infimum evaluated from above, so reported violations are genuine.
    """
    s = np.asarray(sigma.entries if hasattr(sigma, "entries") else sigma, dtype=complex)
    rng = np.random.default_rng(seed)
    d = phi.d_in
    worst = -math.inf
    for _ in range(samples):
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        rho = g @ g.conj().T
        rho *= rng.uniform(0.2, 2.0) / np.trace(rho).real
        gval = math.exp(cb_objective_at(phi, rho, alpha, condition).log_value)
        rhs = float(np.real(np.trace(s @ r.n_map.apply_matrix(rho))))
        worst = max(worst, gval - rhs)
    objective = float(np.real(np.trace(s @ r.tau.entries)))
    return DualCheck(worst <= tol, objective, worst)
