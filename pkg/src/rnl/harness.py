"""Randomized property suites for the chain rules, multiplicativity and the
norm/entropy invariants, with a deterministic machine-readable report.

Every inequality is checked one-sided against an explicit tolerance.  A
trial whose optimizers did not converge and whose slack falls below the
tolerance is recorded as inconclusive, never as a violation.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .channels import (
    LinearConstraint,
    cb_entropy,
    general_input_norm,
    min_output_entropy,
    restricted_cb_entropy,
)
from .entropy import (
    ClassicalQuantumState,
    WeightFunction,
    alpha_window,
    arimoto_conditional,
    cond_renyi_up,
    continuity_bound,
    f_weighted_entropy,
    renyi_from_log_norm,
    sandwiched_divergence,
    von_neumann_conditional,
)
from .operators import (
    DensityOperator,
    KrausChannel,
    LabeledOperator,
    apply_channel,
    channel_tensor,
    compose,
    dephasing_channel,
    depolarizing_channel,
    embed_channel,
    measure_prepare_channel,
    permutation_matrix,
    permute,
    permute_outputs,
    random_channel,
    random_distribution,
    random_state,
    random_unitary,
    tensor,
)
from .schatten import OptimizerConfig, check_swap_contraction, norm_multi_index

HARNESS_CFG = OptimizerConfig(restarts=2, seed=0)


@dataclass
class SuiteConfig:
    seed: int = 0
    trials: int = 50
    dims: dict = field(default_factory=dict)
    alphas: tuple = (1.5, 2.0, 3.0)
    tol: float = 1e-4
    checks: tuple | None = None
    jobs: int = 1
    multiplicativity_trials: int = 20
    restricted_trials: int = 6
    positivity_trials: int = 20

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if any(int(d) < 2 for d in self.dims.values()):
            raise ValueError("dimensions must be at least 2")
        self.alphas = tuple(float(a) for a in self.alphas)
        if not self.alphas or any(a <= 1 for a in self.alphas):
            raise ValueError("orders must exceed 1")

    def dim(self, role: str) -> int:
        return int(self.dims.get(role, 2))


@dataclass
class CheckResult:
    slack: float
    converged: bool
    parts: dict = field(default_factory=dict)


def _ok(*results) -> bool:
    return all(getattr(r, "converged", True) for r in results)


# ---------------------------------------------------------------- theorem checks


def check_chain_rule(phi: KrausChannel, rho: DensityOperator, alpha: float,
                     cfg: OptimizerConfig = HARNESS_CFG, condition: Sequence[str] | None = None) -> CheckResult:
    """``H↑(ST|R)_{(Φ⊗id)ρ} - H↑(T|Q)_ρ - min-output entropy of Φ`` (expected ≥ 0)."""
    cond = list(condition) if condition is not None else phi.out_labels[:-1]
    omega = apply_channel(phi, rho)
    left = cond_renyi_up(omega, alpha, cfg, condition=cond, cross_check=False)
    mid = cond_renyi_up(rho, alpha, cfg, condition=phi.in_labels, cross_check=False)
    mo = min_output_entropy(phi, alpha, cfg, condition=cond)
    slack = left.value - mid.value - mo.log_value
    return CheckResult(slack, _ok(left, mid, mo), {"lhs": left.value, "h_tq": mid.value, "min_output": mo.log_value})


def check_cb_chain_rule(phi: KrausChannel, rho: DensityOperator, alpha: float, e_labels: Sequence[str] = ("E",),
                        cfg: OptimizerConfig = HARNESS_CFG, condition: Sequence[str] | None = None) -> CheckResult:
    """``H↑(ST|RE) - H↑(T|QE) - cb entropy of Φ`` for ρ on E Q T (expected ≥ 0)."""
    cond = list(condition) if condition is not None else phi.out_labels[:-1]
    omega = apply_channel(phi, rho)
    left = cond_renyi_up(omega, alpha, cfg, condition=list(e_labels) + cond, cross_check=False)
    mid = cond_renyi_up(rho, alpha, cfg, condition=list(e_labels) + phi.in_labels, cross_check=False)
    cb = cb_entropy(phi, alpha, cfg, condition=cond)
    slack = left.value - mid.value - cb.log_value
    return CheckResult(slack, _ok(left, mid, cb), {"lhs": left.value, "h_tqe": mid.value, "cb": cb.log_value})


def check_product_chain_rule(phi1: KrausChannel, phi2: KrausChannel, rho: DensityOperator, alpha: float,
                             t_label: str = "T", cfg: OptimizerConfig = HARNESS_CFG) -> CheckResult:
    """``H↑(ST|R) - H↑(T|Q₁) - cb entropy of Φ₁⊗Φ₂`` with Φ₁: Q₁→R, Φ₂: Q₂→S.

    ``H↑(T|Q₁)`` is read off the trailing-1 profile ``(Q₁:1, T:α, Q₂:1)``.
    """
    q1, q2 = phi1.in_labels[0], phi2.in_labels[0]
    r_lbl = phi1.out_labels
    omega = apply_channel(phi2, apply_channel(phi1, rho))
    left = cond_renyi_up(omega, alpha, cfg, condition=r_lbl, cross_check=False)
    ordered = permute(rho.op if hasattr(rho, "op") else rho, [q1, t_label, q2])
    nres = norm_multi_index(ordered, f"{q1}:1,{t_label}:{alpha},{q2}:1", cfg)
    h_tq1 = renyi_from_log_norm(nres.log_value, alpha)
    cb = cb_entropy(channel_tensor(phi1, phi2), alpha, cfg, condition=r_lbl)
    slack = left.value - h_tq1 - cb.log_value
    return CheckResult(slack, _ok(left, nres, cb), {"lhs": left.value, "h_tq1": h_tq1, "cb": cb.log_value})


def _product_vector(v1: np.ndarray, v2: np.ndarray, d1: int, d2: int) -> np.ndarray:
    """``v₁ ⊗ v₂`` on ``Q̃₁Q₁Q̃₂Q₂`` reordered to ``Q̃₁Q̃₂Q₁Q₂``."""
    v = np.kron(v1, v2)
    return permutation_matrix([d1, d1, d2, d2], [0, 2, 1, 3]) @ v


def _product_channel(phi1: KrausChannel, phi2: KrausChannel, cond1, cond2):
    prod = channel_tensor(phi1, phi2)
    rest1 = [l for l in phi1.out_labels if l not in cond1]
    rest2 = [l for l in phi2.out_labels if l not in cond2]
    return permute_outputs(prod, list(cond1) + list(cond2) + rest1 + rest2), list(cond1) + list(cond2)


def check_multiplicativity_1_1p(phi1: KrausChannel, phi2: KrausChannel, alpha: float,
                                cfg: OptimizerConfig = HARNESS_CFG) -> CheckResult:
    """cb entropy of ``Φ₁⊗Φ₂`` (outputs R₁R₂S₁S₂) minus the sum of the factors (expected 0).

    The product search starts from the product of the factor witnesses.
    """
    c1, c2 = phi1.out_labels[:-1], phi2.out_labels[:-1]
    a = cb_entropy(phi1, alpha, cfg, condition=c1)
    b = cb_entropy(phi2, alpha, cfg, condition=c2)
    prod, cond = _product_channel(phi1, phi2, c1, c2)
    start = _product_vector(a.witness_vector, b.witness_vector, phi1.d_in, phi2.d_in)
    lhs = cb_entropy(prod, alpha, replace(cfg, restarts=0), condition=cond, starts=[start])
    rhs = a.log_value + b.log_value
    return CheckResult(lhs.log_value - rhs, _ok(a, b, lhs), {"lhs": lhs.log_value, "rhs": rhs})


def product_constraint(r1: LinearConstraint, r2: LinearConstraint) -> LinearConstraint:
    return LinearConstraint(channel_tensor(r1.n_map, r2.n_map), tensor(r1.tau, r2.tau))


def check_restricted_multiplicativity(phi1: KrausChannel, phi2: KrausChannel, r1: LinearConstraint,
                                      r2: LinearConstraint, alpha: float,
                                      cfg: OptimizerConfig = HARNESS_CFG) -> CheckResult:
    """Restricted cb entropy of the product under ``r₁⊗r₂`` minus the factor sum (expected 0)."""
    c1, c2 = phi1.out_labels[:-1], phi2.out_labels[:-1]
    a = restricted_cb_entropy(phi1, alpha, r1, cfg, condition=c1)
    b = restricted_cb_entropy(phi2, alpha, r2, cfg, condition=c2)
    prod, cond = _product_channel(phi1, phi2, c1, c2)
    start = _product_vector(a.witness_vector, b.witness_vector, phi1.d_in, phi2.d_in)
    lhs = restricted_cb_entropy(prod, alpha, product_constraint(r1, r2), replace(cfg, restarts=0),
                                condition=cond, starts=[start])
    rhs = a.log_value + b.log_value
    return CheckResult(lhs.log_value - rhs, _ok(a, b, lhs), {"lhs": lhs.log_value, "rhs": rhs})


def check_sequential(phi: KrausChannel, psi: KrausChannel, alpha: float,
                     cfg: OptimizerConfig = HARNESS_CFG) -> CheckResult:
    """Composition bound for Φ: Q₁→R₁Q₂S₁ and Ψ: Q₂→R₂S₂ (expected slack ≥ 0).

    The middle quantity conditions on ``R₁Q₂`` (the merged ``(R₁:1, Q₂:1)``
    profile) with S₁ at order α.
    """
    r1, q2, s1 = phi.out_labels
    r2 = psi.out_labels[0]
    comp = compose(psi, phi)
    lhs = cb_entropy(comp, alpha, cfg, condition=[r1, r2])
    a = cb_entropy(psi, alpha, cfg, condition=[r2])
    b = cb_entropy(phi, alpha, cfg, condition=[r1, q2])
    slack = lhs.log_value - a.log_value - b.log_value
    return CheckResult(slack, _ok(lhs, a, b), {"lhs": lhs.log_value, "psi": a.log_value, "phi": b.log_value})


# ---------------------------------------------------------------- sampling


def structured_channel(rng, in_factors, out_factors, kind: int) -> KrausChannel:
    """Depolarizing, dephasing-with-record or measure-and-prepare channel.

    The first output factor receives the classical record (or a fixed
    state), the remaining factors the processed system.
    """
    (q_lbl, d), = in_factors
    outs = list(out_factors)
    d_first = outs[0][1]
    d_rest = int(np.prod([f[1] for f in outs[1:]])) if len(outs) > 1 else 1
    if len(outs) == 1:
        if kind == 0:
            ch = depolarizing_channel(float(rng.uniform(0.2, 1.0)), d, q_lbl, outs[0][0])
        elif kind == 1:
            ch = dephasing_channel(float(rng.uniform(0.2, 1.0)), d, q_lbl, outs[0][0])
        else:
            basis = random_unitary(rng, d)
            states = [random_state(rng, [("S", d_first)]).entries for _ in range(d)]
            ch = measure_prepare_channel(basis, states, q_lbl, [("S", d_first)])
        if ch.d_out != d_first:
            raise ValueError("structured single-output channel needs matching dimensions")
        return embed_channel(ch, outs)
    ks = []
    if kind == 0:
        dep = depolarizing_channel(float(rng.uniform(0.2, 1.0)), d, q_lbl, "S")
        emb = np.eye(d_rest)[:, :d] if d_rest >= d else None
        if emb is None:
            raise ValueError("output too small for the depolarized system")
        e0 = np.eye(d_first)[:, :1]
        ks = [np.kron(e0, emb @ k) for k in dep.kraus]
    else:
        basis = np.eye(d) if kind == 1 else random_unitary(rng, d)
        for i in range(d):
            rec = np.eye(d_first)[:, i % d_first : i % d_first + 1]
            if kind == 1:
                st = np.zeros((d_rest, 1))
                st[i % d_rest, 0] = 1
                ks.append(np.kron(rec, st @ basis[:, i : i + 1].conj().T))
            else:
                w, v = np.linalg.eigh(random_state(rng, [("S", d_rest)]).entries)
                for lam, vec in zip(w, v.T):
                    if lam > 1e-14:
                        ks.append(np.kron(rec, math.sqrt(lam) * np.outer(vec, basis[:, i].conj())))
    return KrausChannel(tuple(ks), in_factors, outs)


def sample_channel(rng, in_factors, out_factors, index: int) -> KrausChannel:
    """Haar-Stinespring and structured channels at ratio 2:1 (by trial index)."""
    if index % 3 == 2:
        return structured_channel(rng, in_factors, out_factors, (index // 3) % 3)
    return random_channel(rng, in_factors, out_factors, env=2)


def _trial_rng(seed: int, check: int, trial: int):
    return np.random.default_rng([seed, check, trial])


# ---------------------------------------------------------------- suite


CHECK_NAMES = (
    "chain_rule",
    "chain_rule_saturation",
    "cb_chain_rule",
    "product_chain_rule",
    "sequential",
    "multiplicativity",
    "restricted_multiplicativity",
    "swap_contraction",
    "entropy_dictionary",
    "limits_monotonicity",
    "data_processing",
    "continuity_bound",
    "positivity_sufficiency",
)


@dataclass
class TrialRecord:
    trial: int
    alpha: float | None
    slack: float
    status: str  # pass | violation | inconclusive
    detail: dict = field(default_factory=dict)


@dataclass
class CheckReport:
    name: str
    tol: float
    records: list
    runtime: float = 0.0

    @property
    def violations(self) -> int:
        return sum(r.status == "violation" for r in self.records)

    @property
    def inconclusive(self) -> int:
        return sum(r.status == "inconclusive" for r in self.records)

    @property
    def worst_slack(self) -> float:
        vals = [r.slack for r in self.records if math.isfinite(r.slack)]
        return min(vals) if vals else math.nan

    def as_dict(self, timings: bool = False) -> dict:
        out = {
            "name": self.name,
            "trials": len(self.records),
            "tol": self.tol,
            "violations": self.violations,
            "inconclusive": self.inconclusive,
            "worst_slack": _num(self.worst_slack),
            "records": [
                {"trial": r.trial, "alpha": r.alpha, "slack": _num(r.slack), "status": r.status,
                 "detail": {k: _num(v) for k, v in r.detail.items()}}
                for r in self.records
            ],
        }
        if timings:
            out["runtime"] = round(self.runtime, 3)
        return out


def _num(x):
    if isinstance(x, (bool, str)) or x is None:
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.12e}")


@dataclass
class SuiteReport:
    config: dict
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.violations == 0 for c in self.checks)

    def as_dict(self, timings: bool = False) -> dict:
        return {
            "config": self.config,
            "pass": self.passed,
            "checks": [c.as_dict(timings) for c in self.checks],
        }

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.as_dict(timings), indent=2, sort_keys=True)

    def check(self, name: str) -> CheckReport:
        return next(c for c in self.checks if c.name == name)


def _status(slack: float, tol: float, converged: bool) -> str:
    if slack >= -tol:
        return "pass"
    return "violation" if converged else "inconclusive"


def _one_sided(res: CheckResult, tol: float, trial: int, alpha) -> TrialRecord:
    return TrialRecord(trial, alpha, res.slack, _status(res.slack, tol, res.converged),
                       dict(res.parts, converged=res.converged))


def _trial_chain_rule(cfg: SuiteConfig, t: int) -> TrialRecord:
    rng = _trial_rng(cfg.seed, 0, t)
    alpha = cfg.alphas[t % len(cfg.alphas)]
    q, r, s, tt = cfg.dim("Q"), cfg.dim("R"), cfg.dim("S"), cfg.dim("T")
    phi = sample_channel(rng, [("Q", q)], [("R", r), ("S", s)], t)
    rho = random_state(rng, [("Q", q), ("T", tt)])
    return _one_sided(check_chain_rule(phi, rho, alpha), cfg.tol, t, alpha)


def _trial_saturation(cfg: SuiteConfig, t: int) -> TrialRecord:
    """Product input ρ_Q* ⊗ ρ_T with ρ_Q* the min-output minimizer: two-sided |slack| ≤ 1e-3."""
    rng = _trial_rng(cfg.seed, 1, t)
    alpha = cfg.alphas[t % len(cfg.alphas)]
    q, r, s, tt = cfg.dim("Q"), cfg.dim("R"), cfg.dim("S"), cfg.dim("T")
    phi = sample_channel(rng, [("Q", q)], [("R", r), ("S", s)], t)
    mo = min_output_entropy(phi, alpha, HARNESS_CFG)
    rho_t = random_state(rng, [("T", tt)])
    rho = DensityOperator(tensor(mo.witness_state.op, rho_t.op), 1e-6)
    res = check_chain_rule(phi, rho, alpha)
    dev = -abs(res.slack)
    return TrialRecord(t, alpha, dev, _status(dev, 1e-3, res.converged), dict(res.parts, converged=res.converged))


def _trial_cb_chain_rule(cfg: SuiteConfig, t: int) -> TrialRecord:
    rng = _trial_rng(cfg.seed, 2, t)
    alpha = cfg.alphas[t % len(cfg.alphas)]
    e, q, r, s, tt = cfg.dim("E"), cfg.dim("Q"), cfg.dim("R"), cfg.dim("S"), cfg.dim("T")
    phi = sample_channel(rng, [("Q", q)], [("R", r), ("S", s)], t)
    rho = random_state(rng, [("E", e), ("Q", q), ("T", tt)])
    return _one_sided(check_cb_chain_rule(phi, rho, alpha), cfg.tol, t, alpha)


def _trial_product_chain_rule(cfg: SuiteConfig, t: int) -> TrialRecord:
    rng = _trial_rng(cfg.seed, 3, t)
    alpha = cfg.alphas[t % len(cfg.alphas)]
    q1, q2, r, s, tt = cfg.dim("Q1"), cfg.dim("Q2"), cfg.dim("R"), cfg.dim("S"), cfg.dim("T")
    phi1 = sample_channel(rng, [("Q1", q1)], [("R", r)], t)
    phi2 = sample_channel(rng, [("Q2", q2)], [("S", s)], t + 1)
    rho = random_state(rng, [("Q1", q1), ("Q2", q2), ("T", tt)])
    return _one_sided(check_product_chain_rule(phi1, phi2, rho, alpha), cfg.tol, t, alpha)


def _trial_sequential(cfg: SuiteConfig, t: int) -> TrialRecord:
    rng = _trial_rng(cfg.seed, 4, t)
    alpha = cfg.alphas[t % len(cfg.alphas)]
    q1, q2 = cfg.dim("Q1"), cfg.dim("Q2")
    phi = sample_channel(rng, [("Q1", q1)], [("R1", cfg.dim("R1")), ("Q2", q2), ("S1", cfg.dim("S1"))], t)
    psi = sample_channel(rng, [("Q2", q2)], [("R2", cfg.dim("R2")), ("S2", cfg.dim("S2"))], t + 1)
    return _one_sided(check_sequential(phi, psi, alpha), cfg.tol, t, alpha)


def _trial_multiplicativity(cfg: SuiteConfig, t: int) -> TrialRecord:
    """Equality as two one-sided checks: gap ≥ -1e-6 (theorem) and gap ≤ 1e-3 (product witness).

    Every channel pair is tried at every order: trial t is pair t // |alphas|.
    """
    k = len(cfg.alphas)
    rng = _trial_rng(cfg.seed, 5, t // k)
    alpha, pair = cfg.alphas[t % k], t // k
    phi1 = sample_channel(rng, [("Q1", 2)], [("R1", 2), ("S1", 2)], pair)
    phi2 = sample_channel(rng, [("Q2", 2)], [("R2", 2), ("S2", 2)], pair + 1)
    res = check_multiplicativity_1_1p(phi1, phi2, alpha)
    return _equality_record(res, t, alpha, 1e-6, 1e-3)


def _equality_record(res: CheckResult, t, alpha, tol_low, tol_high) -> TrialRecord:
    gap = res.slack
    low = _status(gap, tol_low, res.converged)
    high = _status(-gap, tol_high, res.converged)
    status = "violation" if "violation" in (low, high) else ("inconclusive" if "inconclusive" in (low, high) else "pass")
    # report the binding side as the slack
    slack = min(gap + tol_low, tol_high - gap) - min(tol_low, tol_high)
    return TrialRecord(t, alpha, slack, status, dict(res.parts, gap=gap, converged=res.converged))


def _random_constraint(rng, label: str, d: int, kind: int) -> LinearConstraint:
    """Trivial, pinned-Z-marginal (BB84-style) or fully pinned constraints."""
    c = "C" + label
    if kind == 0:
        n = KrausChannel(tuple(np.eye(d)[i : i + 1, :] for i in range(d)), [(label, d)], [(c, 1)])
        return LinearConstraint(n, LabeledOperator(np.eye(1), [(c, 1)]))
    if kind == 1:
        n = dephasing_channel(1.0, d, label, c)
        p = random_distribution(rng, d)
        return LinearConstraint(n, LabeledOperator(np.diag(p), [(c, d)]))
    n = KrausChannel((np.eye(d),), [(label, d)], [(c, d)])
    return LinearConstraint(n, LabeledOperator(random_state(rng, [(c, d)]).entries, [(c, d)]))


def _trial_restricted(cfg: SuiteConfig, t: int) -> TrialRecord:
    rng = _trial_rng(cfg.seed, 6, t)
    alpha = cfg.alphas[t % len(cfg.alphas)]
    phi1 = sample_channel(rng, [("Q1", 2)], [("R1", 2), ("S1", 2)], t)
    phi2 = sample_channel(rng, [("Q2", 2)], [("R2", 2), ("S2", 2)], t + 1)
    kind = (1, 2, 0)[t % 3]
    r1 = _random_constraint(rng, "Q1", 2, kind)
    r2 = _random_constraint(rng, "Q2", 2, kind)
    res = check_restricted_multiplicativity(phi1, phi2, r1, r2, alpha)
    return _equality_record(res, t, alpha, 1e-4, 1e-3)


def _trial_swap(cfg: SuiteConfig, t: int) -> TrialRecord:
    rng = _trial_rng(cfg.seed, 7, t)
    p, q = ((1.0, 2.0), (1.5, 3.0))[t % 2]
    d1, d2 = cfg.dim("A"), cfg.dim("B")
    x = rng.standard_normal((d1 * d2, d1 * d2)) + 1j * rng.standard_normal((d1 * d2, d1 * d2))
    op = LabeledOperator(x, [("A", d1), ("B", d2)])
    lhs, rhs, _ = check_swap_contraction(op, p, q, HARNESS_CFG)
    slack = (rhs - lhs) / max(rhs, 1e-300)
    return TrialRecord(t, None, slack, _status(slack, 1e-6, True), {"lhs": lhs, "rhs": rhs, "p": p, "q": q})


def _trial_entropy_dictionary(cfg: SuiteConfig, t: int) -> TrialRecord:
    """Arimoto formula on a classical state and agreement of the two H↑ paths on a random state."""
    rng = _trial_rng(cfg.seed, 8, t)
    alpha = cfg.alphas[t % len(cfg.alphas)]
    db, da = cfg.dim("B"), cfg.dim("A")
    p = random_distribution(rng, db * da).reshape(db, da)
    cl = LabeledOperator(np.diag(p.reshape(-1)), [("B", db), ("A", da)])
    h_cl = cond_renyi_up(DensityOperator(cl), alpha, HARNESS_CFG, condition=["B"], cross_check=False).value
    h_ar = arimoto_conditional(p, alpha)
    rho = random_state(rng, [("B", db), ("A", da)])
    res = cond_renyi_up(rho, alpha, HARNESS_CFG, condition=["B"])
    slack = min(1e-8 - abs(h_cl - h_ar), 1e-5 - res.paths_gap) - min(1e-8, 1e-5)
    status = "pass" if slack >= -1e-12 else ("violation" if res.converged else "inconclusive")
    return TrialRecord(t, alpha, slack, status,
                       {"arimoto_error": abs(h_cl - h_ar), "paths_gap": res.paths_gap, "converged": res.converged})


def _trial_limits(cfg: SuiteConfig, t: int) -> TrialRecord:
    """|H↑_{1.001} - H(A|B)| ≤ 5e-2 and H↑_α non-increasing over α ∈ {1.1, 1.5, 2, 3}."""
    rng = _trial_rng(cfg.seed, 9, t)
    rho = random_state(rng, [("B", cfg.dim("B")), ("A", cfg.dim("A"))])
    vn = von_neumann_conditional(rho, ["B"])
    near = cond_renyi_up(rho, 1.001, HARNESS_CFG, condition=["B"], cross_check=False)
    vals = [cond_renyi_up(rho, a, HARNESS_CFG, condition=["B"], cross_check=False).value for a in (1.1, 1.5, 2.0, 3.0)]
    mono = min(vals[i] - vals[i + 1] for i in range(3))
    slack = min(5e-2 - abs(near.value - vn), mono + 1e-4)
    return TrialRecord(t, None, slack, _status(slack, 0.0, near.converged),
                       {"limit_error": abs(near.value - vn), "monotone_slack": mono})


def _trial_data_processing(cfg: SuiteConfig, t: int) -> TrialRecord:
    rng = _trial_rng(cfg.seed, 10, t)
    alpha = cfg.alphas[t % len(cfg.alphas)]
    d = cfg.dim("Q")
    rho = random_state(rng, [("Q", d)])
    sigma = random_state(rng, [("Q", d)])
    phi = random_channel(rng, [("Q", d)], [("S", cfg.dim("S"))], env=2)
    before = sandwiched_divergence(rho, sigma, alpha)
    after = sandwiched_divergence(apply_channel(phi, rho), apply_channel(phi, sigma), alpha)
    slack = before - after
    return TrialRecord(t, alpha, slack, _status(slack, 1e-6, True), {"before": before, "after": after})


def _trial_continuity(cfg: SuiteConfig, t: int) -> TrialRecord:
    rng = _trial_rng(cfg.seed, 11, t)
    nx = 3
    de, da = cfg.dim("E"), cfg.dim("A")
    p = random_distribution(rng, nx)
    blocks = {x: random_state(rng, [("E", de), ("A", da)]).op.scaled(float(p[x])) for x in range(nx)}
    state = ClassicalQuantumState.from_blocks(blocks, ["E"], ["A"])
    f = WeightFunction({x: float(rng.uniform(-1.0, 2.0)) for x in range(nx)})
    alpha = 1 + 0.5 * (alpha_window(f, da) - 1)
    b = continuity_bound(state, f, alpha)
    h = f_weighted_entropy(state, f, alpha, HARNESS_CFG)
    slack = min(h - b.lower, b.upper - h)
    return TrialRecord(t, alpha, slack, _status(slack, 1e-6, b.alpha_ok),
                       {"lower": b.lower, "value": h, "upper": b.upper, "eta0": b.eta0})


def _trial_positivity(cfg: SuiteConfig, t: int) -> TrialRecord:
    """General rank-one inputs vs PSD inputs for the (R:1, S:α) output norm at d = 2."""
    rng = _trial_rng(cfg.seed, 12, t)
    alpha = cfg.alphas[t % len(cfg.alphas)]
    phi = sample_channel(rng, [("Q", 2)], [("R", 2), ("S", 2)], t)
    g = general_input_norm(phi, alpha, HARNESS_CFG)
    m = min_output_entropy(phi, alpha, HARNESS_CFG)
    diff = abs(g.log_value - m.log_value)
    slack = 1e-4 - diff
    return TrialRecord(t, alpha, slack, _status(slack, 0.0, g.converged and m.converged),
                       {"general": g.log_value, "psd": m.log_value})


_TRIALS: dict[str, tuple[Callable, Callable[[SuiteConfig], int], float]] = {
    "chain_rule": (_trial_chain_rule, lambda c: c.trials, None),
    "chain_rule_saturation": (_trial_saturation, lambda c: len(c.alphas), 1e-3),
    "cb_chain_rule": (_trial_cb_chain_rule, lambda c: c.trials, None),
    "product_chain_rule": (_trial_product_chain_rule, lambda c: c.trials, None),
    "sequential": (_trial_sequential, lambda c: c.trials, None),
    "multiplicativity": (_trial_multiplicativity,
                         lambda c: len(c.alphas) * min(c.trials, c.multiplicativity_trials), 1e-3),
    "restricted_multiplicativity": (_trial_restricted, lambda c: min(c.trials, c.restricted_trials), 1e-3),
    "swap_contraction": (_trial_swap, lambda c: 4 * c.trials, 1e-6),
    "entropy_dictionary": (_trial_entropy_dictionary, lambda c: c.trials, 1e-8),
    "limits_monotonicity": (_trial_limits, lambda c: c.trials, 1e-4),
    "data_processing": (_trial_data_processing, lambda c: c.trials, 1e-6),
    "continuity_bound": (_trial_continuity, lambda c: c.trials, 1e-6),
    "positivity_sufficiency": (_trial_positivity, lambda c: min(c.trials, c.positivity_trials), 1e-4),
}


def _run_trial(name: str, cfg: SuiteConfig, t: int) -> TrialRecord:
    fn = _TRIALS[name][0]
    try:
        with np.errstate(all="ignore"):
            return fn(cfg, t)
    except Exception as exc:  # recorded, not thrown
        return TrialRecord(t, None, math.nan, "inconclusive", {"error": f"{type(exc).__name__}: {exc}"})


def run_suite(cfg: SuiteConfig, progress: Callable[[str], None] | None = None) -> SuiteReport:
    """Run every check (or ``cfg.checks``); deterministic given ``cfg.seed``.

    Trials are independent and may run in parallel (``cfg.jobs``); records are
    assembled in trial order.
    """
    names = cfg.checks or CHECK_NAMES
    unknown = set(names) - set(CHECK_NAMES)
    if unknown:
        raise ValueError(f"unknown checks {sorted(unknown)}")
    reports = []
    for name in names:
        _, count, tol = _TRIALS[name]
        n = count(cfg)
        t0 = time.perf_counter()
        if cfg.jobs and cfg.jobs != 1:
            from joblib import Parallel, delayed

            records = Parallel(n_jobs=cfg.jobs)(delayed(_run_trial)(name, cfg, t) for t in range(n))
        else:
            records = [_run_trial(name, cfg, t) for t in range(n)]
        rep = CheckReport(name, cfg.tol if tol is None else tol, records, time.perf_counter() - t0)
        reports.append(rep)
        if progress:
            progress(f"{name}: {n} trials, {rep.violations} violations, {rep.inconclusive} inconclusive, "
                     f"worst slack {rep.worst_slack:.3g} ({rep.runtime:.1f}s)")
    conf = {
        "seed": cfg.seed,
        "trials": cfg.trials,
        "dims": dict(sorted(cfg.dims.items())),
        "alphas": list(cfg.alphas),
        "tol": cfg.tol,
        "checks": list(names),
        "multiplicativity_trials": cfg.multiplicativity_trials,
        "restricted_trials": cfg.restricted_trials,
        "positivity_trials": cfg.positivity_trials,
    }
    return SuiteReport(conf, reports)
