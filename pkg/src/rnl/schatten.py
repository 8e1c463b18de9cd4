"""Single-, two- and multi-index Schatten norms.

Monotone multi-index norms are evaluated through their variational forms:
for a merged profile ``(A1:p1, ..., Ak:pk)`` with strictly monotone exponents
the value is

    inf / sup over unit-trace PSD σ_i, τ_i on A1...Ai of
        ‖ S_{k-1} ... S_1 X T_1 ... T_{k-1} ‖_{pk},
    S_i = σ_i^{e_i} ⊗ 1,  T_i = τ_i^{e_i} ⊗ 1,  e_i = (1/p_{i+1} - 1/p_i) / 2,

an infimum when the exponents increase and a supremum when they decrease.
Any feasible σ gives a one-sided bound, so infimum results are upper bounds
and supremum results are lower bounds regardless of convergence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .operators import (
    LabeledOperator,
    as_operator,
    hermitian_part,
    partial_trace,
    permute,
)

INF = math.inf
GRAD_TOL = 1e-7


class UnsupportedProfileError(ValueError):
    """Raised for index profiles with no evaluation recipe."""


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 8
    max_iters: int = 5000
    rel_tol: float = 1e-9
    fd_step: float = 1e-6
    seed: int = 0
    tied: bool | None = None  # None: tie F = G automatically for PSD inputs

    def with_seed(self, seed: int) -> OptimizerConfig:
        return replace(self, seed=int(seed))


DEFAULT_CFG = OptimizerConfig()
FAST_CFG = OptimizerConfig(restarts=0)


@dataclass
class NormResult:
    value: float
    log_value: float
    mode: str  # "exact", "inf" (upper bound) or "sup" (lower bound)
    converged: bool
    iterations: int = 0
    witness: list = field(default_factory=list)
    x_weight: np.ndarray | None = None  # d log‖·‖ = Re tr[W dX]
    params: np.ndarray | None = None

    @property
    def bound(self) -> str:
        return {"inf": "upper", "sup": "lower"}.get(self.mode, "exact")


# ---------------------------------------------------------------- profiles


@dataclass(frozen=True)
class IndexProfile:
    entries: tuple

    def __post_init__(self):
        ents = tuple((str(lbl), _check_p(p)) for lbl, p in self.entries)
        labels = [lbl for lbl, _ in ents]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in profile {labels}")
        if not ents:
            raise ValueError("empty profile")
        object.__setattr__(self, "entries", ents)

    @classmethod
    def parse(cls, text: str) -> IndexProfile:
        """Parse ``"Q:1,T:2,R:inf"``."""
        out = []
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if ":" not in part:
                raise ValueError(f"profile entry {part!r} is not label:index")
            lbl, p = part.rsplit(":", 1)
            p = p.strip().lower()
            out.append((lbl.strip(), INF if p in ("inf", "infinity", "∞") else float(p)))
        return cls(tuple(out))

    @property
    def labels(self) -> list[str]:
        return [lbl for lbl, _ in self.entries]

    @property
    def ps(self) -> list[float]:
        return [p for _, p in self.entries]

    def is_non_decreasing(self) -> bool:
        ps = self.ps
        return all(a <= b for a, b in zip(ps, ps[1:]))

    def is_non_increasing(self) -> bool:
        ps = self.ps
        return all(a >= b for a, b in zip(ps, ps[1:]))

    def is_monotone(self) -> bool:
        return self.is_non_decreasing() or self.is_non_increasing()

    def __str__(self) -> str:
        return ",".join(f"{lbl}:{_fmt_p(p)}" for lbl, p in self.entries)


def _fmt_p(p: float) -> str:
    return "inf" if math.isinf(p) else f"{p:g}"


def _check_p(p) -> float:
    p = float(p)
    if not p >= 1:
        raise ValueError(f"Schatten index must be >= 1, got {p}")
    return p


def _inv(p: float) -> float:
    return 0.0 if math.isinf(p) else 1.0 / p


def merge_profile(dims: Sequence[int], ps: Sequence[float]) -> tuple[list[int], list[float]]:
    """Merge adjacent factors sharing one index into a single block."""
    bd, bp = [], []
    for d, p in zip(dims, ps):
        if bp and bp[-1] == p:
            bd[-1] *= d
        else:
            bd.append(int(d))
            bp.append(p)
    return bd, bp


# ---------------------------------------------------------------- plain norms


def schatten_norm(x, p: float) -> float:
    """``(Σ s_i^p)^{1/p}`` over singular values; ``max s_i`` for ``p = inf``."""
    p = _check_p(p)
    m = as_operator(x).entries if isinstance(x, LabeledOperator) or hasattr(x, "op") else np.asarray(x)
    s = np.linalg.svd(m, compute_uv=False)
    return _pnorm(s, p)


def _pnorm(s: np.ndarray, p: float) -> float:
    if s.size == 0:
        return 0.0
    if math.isinf(p):
        return float(np.max(np.abs(s)))
    smax = float(np.max(np.abs(s)))
    if smax == 0.0:
        return 0.0
    return smax * float(np.sum((np.abs(s) / smax) ** p)) ** (1.0 / p)


def vector_nested_norm(v, ps: Sequence[float]) -> float:
    """Nested ℓ-norm ``‖v‖_{(p1,...,pk)}``; the last axis is reduced first."""
    a = np.abs(np.asarray(v))
    if a.ndim != len(ps):
        raise ValueError(f"array of rank {a.ndim} does not match {len(ps)} indices")
    for p in reversed([_check_p(p) for p in ps]):
        if math.isinf(p):
            a = a.max(axis=-1)
        else:
            a = np.sum(a**p, axis=-1) ** (1.0 / p)
    return float(a)


def _log_pnorm_and_dual(t: np.ndarray, p: float) -> tuple[float, np.ndarray]:
    """``log‖T‖_p`` and ``P̂`` with ``d log‖T‖_p = Re tr[P̂ dT]``."""
    u, s, vh = np.linalg.svd(t)
    smax = s[0] if s.size else 0.0
    if smax <= 0.0:
        return -np.inf, np.zeros_like(t.conj().T)
    if math.isinf(p):
        return float(np.log(smax)), np.outer(vh[0].conj(), u[:, 0].conj()) / smax
    r = s / smax
    w = r**p
    tot = w.sum()
    # P̂ = V Σ^{p-1} U* / Σ s^p, written in scaled form
    coef = np.where(r > 0, r ** (p - 1), 0.0) / (tot * smax)
    k = len(s)
    pd = (vh[:k].conj().T * coef) @ u[:, :k].conj().T
    return float(np.log(smax) + np.log(tot) / p), pd


# ---------------------------------------------------------------- spectral helpers


def _power_and_frechet(sig: np.ndarray, e: float):
    """``σ^e`` together with the data needed for its Fréchet derivative."""
    w, u = np.linalg.eigh(sig)
    # relative floor keeps negative powers finite on rank-deficient σ
    w = np.maximum(w, 1e-15 * max(w[-1], 1e-300))
    we = w**e
    dw = w[:, None] - w[None, :]
    diff = we[:, None] - we[None, :]
    mean = 0.5 * (w[:, None] + w[None, :])
    close = np.abs(dw) <= 1e-10 * mean
    with np.errstate(divide="ignore", invalid="ignore"):
        gam = np.where(close, e * mean ** (e - 1), diff / np.where(close, 1.0, dw))
    return (u * we) @ u.conj().T, u, gam


def _frechet_pullback(wred: np.ndarray, u: np.ndarray, gam: np.ndarray) -> np.ndarray:
    """Hermitian ``G`` with ``Re tr[W d(σ^e)] = tr[G dσ]``."""
    m = u.conj().T @ hermitian_part(wred) @ u
    return u @ (gam * m) @ u.conj().T


def _lift(a: np.ndarray, d_rest: int) -> np.ndarray:
    return a if d_rest == 1 else np.kron(a, np.eye(d_rest))


def _ptr_right(m: np.ndarray, d_left: int, d_right: int) -> np.ndarray:
    if d_right == 1:
        return m
    return np.einsum("ajbj->ab", m.reshape(d_left, d_right, d_left, d_right))


def _params_to_mats(z: np.ndarray, sizes: Sequence[int]) -> list[np.ndarray]:
    out, k = [], 0
    for d in sizes:
        n = d * d
        out.append((z[k : k + n] + 1j * z[k + n : k + 2 * n]).reshape(d, d))
        k += 2 * n
    return out


def _mats_to_params(ms: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.concatenate([m.real.ravel(), m.imag.ravel()]) for m in ms])


def _l_from_state(sig: np.ndarray) -> np.ndarray:
    w, u = np.linalg.eigh(hermitian_part(sig))
    w = np.maximum(w, 1e-14 * max(w[-1], 1e-300))
    return u * np.sqrt(w)


# ---------------------------------------------------------------- chain problem


class ChainProblem:
    """``log‖S_L...S_1 X T_1...T_L‖_p`` as a smooth function of Cholesky-like factors.

    Each level i has prefix dimension ``prefix[i]`` and exponent ``exps[i]``.
    When ``tied`` the right factors reuse the left level states.
    """

    def __init__(self, x: np.ndarray, prefix: Sequence[int], exps: Sequence[float], p: float, tied: bool):
        self.x = np.asarray(x, dtype=complex)
        self.n = self.x.shape[0]
        self.prefix = [int(d) for d in prefix]
        self.exps = [float(e) for e in exps]
        self.p = p
        self.tied = tied
        self.levels = len(self.prefix)
        self.sizes = self.prefix if tied else self.prefix + self.prefix

    def states(self, z: np.ndarray) -> list[np.ndarray]:
        out = []
        for l in _params_to_mats(z, self.sizes):
            l = l / max(np.linalg.norm(l), 1e-300)
            s = l @ l.conj().T
            out.append(s / np.trace(s).real)
        return out

    def evaluate(self, z: np.ndarray, need_grad: bool = True, need_x: bool = False):
        raw = _params_to_mats(z, self.sizes)
        scales = [max(np.linalg.norm(l), 1e-300) for l in raw]
        ls = [l / c for l, c in zip(raw, scales)]
        nl = self.levels
        lefts, rights, data = [], [], []
        for i, l in enumerate(ls):
            g = l @ l.conj().T
            t = np.trace(g).real
            sig = g / t
            e = self.exps[i % nl]
            pw, u, gam = _power_and_frechet(sig, e)
            data.append((l, t, sig, u, gam))
            lifted = _lift(pw, self.n // self.prefix[i % nl])
            if i < nl:
                lefts.append(lifted)
            if self.tied or i >= nl:
                rights.append(lifted)
        # pre[j] = S_j ... S_1 X, post[j] = T_1 ... T_j
        pre = [self.x]
        for a in lefts:
            pre.append(a @ pre[-1])
        post = [np.eye(self.n, dtype=complex)]
        for b in rights:
            post.append(post[-1] @ b)
        t_op = pre[-1] @ post[-1]
        val, pd = _log_pnorm_and_dual(t_op, self.p)
        if not need_grad:
            return val
        grads_sig = [np.zeros((d, d), dtype=complex) for d in self.sizes]
        # left factors: T = (S_L..S_{i+1}) S_i (S_{i-1}..S_1 X post)
        suffix = np.eye(self.n, dtype=complex)
        left_suffix = [None] * nl
        for i in range(nl - 1, -1, -1):
            left_suffix[i] = suffix
            suffix = suffix @ lefts[i]
        for i in range(nl):
            w = pre[i] @ post[-1] @ pd @ left_suffix[i]
            grads_sig[i] += self._pull(w, i, data[i])
        for j in range(nl):
            right_rest = np.eye(self.n, dtype=complex)
            for b in rights[j + 1 :]:
                right_rest = right_rest @ b
            w = right_rest @ pd @ pre[-1] @ post[j]
            idx = j if self.tied else nl + j
            grads_sig[idx] += self._pull(w, j, data[idx])
        grad = []
        for (l, t, sig, _, _), g, sc in zip(data, grads_sig, scales):
            g = hermitian_part(g)
            g = g - np.trace(g @ sig).real * np.eye(g.shape[0])
            c = (2.0 / (t * sc)) * (g @ l)
            grad.append(c)
        gz = _mats_to_params(grad)
        if need_x:
            wx = post[-1] @ pd @ suffix
            return val, gz, wx
        return val, gz

    def _pull(self, w: np.ndarray, level: int, dat) -> np.ndarray:
        d = self.prefix[level]
        wred = _ptr_right(w, d, self.n // d)
        _, _, _, u, gam = dat
        return _frechet_pullback(wred, u, gam)


def _initial_points(problem: ChainProblem, cfg: OptimizerConfig, warm=None) -> list[np.ndarray]:
    if warm is not None:
        pts = [np.asarray(warm, dtype=float)]
    else:
        pts = [_mats_to_params([np.eye(d, dtype=complex) for d in problem.sizes])]
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.restarts):
        ms = []
        for d in problem.sizes:
            g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            ms.append(g)
        pts.append(_mats_to_params(ms))
    return pts


def _optimize_chain(problem: ChainProblem, sense: int, cfg: OptimizerConfig, warm=None):
    """Minimize ``sense * value``; returns (best z, best value, converged, iterations)."""

    def fun(z):
        try:
            v, g = problem.evaluate(z)
        except np.linalg.LinAlgError:
            v = math.nan
        if not np.isfinite(v) or not np.all(np.isfinite(g)):
            return 1e30, np.zeros_like(z)  # reject the step
        return sense * v, sense * g

    best = None
    for z0 in _initial_points(problem, cfg, warm):
        res = minimize(
            fun,
            z0,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": cfg.max_iters, "ftol": cfg.rel_tol * 1e-3, "gtol": cfg.rel_tol * 1e-2, "maxcor": 30},
        )
        gnorm = float(np.max(np.abs(res.jac))) if res.jac is not None else np.inf
        zn = float(np.max(np.abs(res.x))) or 1.0
        ok = bool(res.success) or gnorm <= GRAD_TOL * max(1.0, zn)
        cand = (float(res.fun), res.x, ok, int(res.nit))
        if best is None or cand[0] < best[0] - 1e-13:
            best = cand
        elif abs(cand[0] - best[0]) <= 1e-9 and ok and not best[2]:
            best = cand
    return best[1], sense * best[0], best[2], best[3]


# ---------------------------------------------------------------- public evaluators


def _is_psd_hermitian(m: np.ndarray, tol: float = 1e-10) -> bool:
    scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
    if np.max(np.abs(m - m.conj().T), initial=0.0) > tol * scale:
        return False
    return np.linalg.eigvalsh(hermitian_part(m))[0] >= -tol * scale


def _support_reduce(m: np.ndarray, d1: int, d2: int, rel: float = 1e-12):
    # isometry onto the support of the first-factor marginal, if it is deficient
    w, u = np.linalg.eigh(hermitian_part(_ptr_right(m, d1, d2)))
    keep = w > rel * max(w[-1], 1e-300)
    r = int(keep.sum())
    if r == d1 or r == 0:
        return None
    return u[:, keep]


def _reduced_chain(m, v, bd, bp, exps, inc, cfg, warm, need_x) -> NormResult:
    # exact for PSD input: the optimal state lives on the support, and the
    # lifted dual weight is the true derivative while the rank is stable
    d1, d2 = bd
    r = v.shape[1]
    big = np.kron(v, np.eye(d2))
    problem = ChainProblem(big.conj().T @ m @ big, [r], exps, bp[-1], True)
    wz = None
    if warm is not None and np.size(warm) == 2 * d1 * d1:
        (l,) = _params_to_mats(np.asarray(warm, dtype=float), [d1])
        wz = _mats_to_params([_l_from_state(v.conj().T @ (l @ l.conj().T) @ v)])
    z, val, ok, nit = _optimize_chain(problem, 1 if inc else -1, cfg, wz)
    (l,) = _params_to_mats(z, [r])
    lf = np.zeros((d1, d1), dtype=complex)
    lf[:, :r] = v @ l
    sig = lf @ lf.conj().T
    out = NormResult(
        float(np.exp(val)), val, "inf" if inc else "sup", ok, nit, [sig / np.trace(sig).real], params=_mats_to_params([lf])
    )
    if need_x:
        _, _, wx = problem.evaluate(z, need_x=True)
        out.x_weight = big @ wx @ big.conj().T
    return out


def chain_norm(
    m: np.ndarray,
    dims: Sequence[int],
    ps: Sequence[float],
    cfg: OptimizerConfig = DEFAULT_CFG,
    warm=None,
    need_x: bool = False,
) -> NormResult:
    """Norm of a matrix whose factors ``dims`` carry indices ``ps`` (in order).

    The merged profile must be monotone.
    """
    m = np.asarray(m, dtype=complex)
    kept = [(d, float(p)) for d, p in zip(dims, ps) if d > 1] or [(1, float(ps[-1]))]
    bd, bp = merge_profile([d for d, _ in kept], [p for _, p in kept])
    if len(bd) == 1:
        # same code path as schatten_norm, so q = p agrees bit for bit
        value = schatten_norm(m, bp[0])
        pd = _log_pnorm_and_dual(m, bp[0])[1] if need_x else None
        return NormResult(value, math.log(value) if value > 0 else -math.inf, "exact", True, 0, [], pd)
    inc = all(a < b for a, b in zip(bp, bp[1:]))
    dec = all(a > b for a, b in zip(bp, bp[1:]))
    if not (inc or dec):
        raise UnsupportedProfileError(f"profile {bp} is not monotone")
    prefix = list(np.cumprod(bd[:-1]))
    exps = [(_inv(bp[i + 1]) - _inv(bp[i])) / 2 for i in range(len(bd) - 1)]
    tied = cfg.tied if cfg.tied is not None else _is_psd_hermitian(m)
    if tied and len(bd) == 2:
        red = _support_reduce(m, bd[0], bd[1])
        if red is not None:
            return _reduced_chain(m, red, bd, bp, exps, inc, cfg, warm, need_x)
    problem = ChainProblem(m, prefix, exps, bp[-1], tied)
    sense = 1 if inc else -1
    z, val, ok, nit = _optimize_chain(problem, sense, cfg, warm)
    out = NormResult(float(np.exp(val)), val, "inf" if inc else "sup", ok, nit, problem.states(z), params=z)
    if need_x:
        _, _, wx = problem.evaluate(z, need_x=True)
        out.x_weight = wx
    return out


def norm_two_index(
    x,
    split: tuple[Sequence[str], Sequence[str]],
    q: float,
    p: float,
    cfg: OptimizerConfig = DEFAULT_CFG,
) -> NormResult:
    """``‖X‖_{(1:q, 2:p)}`` with system 1 = ``split[0]`` (a prefix of the factors)."""
    x = as_operator(x)
    first, second = list(split[0]), list(split[1])
    if x.labels != first + second:
        raise ValueError(f"split {first}|{second} does not match factor order {x.labels}")
    q, p = _check_p(q), _check_p(p)
    d1 = int(np.prod([x.dim_of(l) for l in first])) if first else 1
    return chain_norm(x.entries, [d1, x.dim // d1], [q, p], cfg)


def norm_multi_index(x, profile: IndexProfile | str, cfg: OptimizerConfig = DEFAULT_CFG) -> NormResult:
    """Multi-index norm for monotone profiles and the trailing-1 pattern."""
    x = as_operator(x)
    if isinstance(profile, str):
        profile = IndexProfile.parse(profile)
    if sorted(profile.labels) != sorted(x.labels):
        raise ValueError(f"profile labels {profile.labels} do not match operator labels {x.labels}")
    x = permute(x, profile.labels)
    dims = x.dims
    ps = profile.ps
    bd, bp = merge_profile(dims, ps)
    if all(a <= b for a, b in zip(bp, bp[1:])) or all(a >= b for a, b in zip(bp, bp[1:])):
        return chain_norm(x.entries, dims, ps, cfg)
    # trailing-1 pattern (Q1:1, T:..., Q2:1): trace out the trailing block
    tail = len(ps)
    while tail > 0 and ps[tail - 1] == 1:
        tail -= 1
    if 1 <= tail < len(ps) and ps[0] == 1:
        sub = IndexProfile(profile.entries[:tail])
        if sub.is_non_decreasing():
            if not _is_psd_hermitian(x.entries):
                raise UnsupportedProfileError("trailing-1 reduction requires a PSD operator")
            reduced = partial_trace(x, profile.labels[tail:])
            return chain_norm(reduced.entries, reduced.dims, sub.ps, cfg)
    raise UnsupportedProfileError(f"profile {profile} is neither monotone nor trailing-1")


def check_swap_contraction(x, p: float, q: float, cfg: OptimizerConfig = DEFAULT_CFG, tol: float = 1e-6):
    """Compare ``‖X‖_{(B:q, A:p)}`` with ``‖X‖_{(A:p, B:q)}`` for ``q >= p``.

    Returns ``(lhs, rhs, ok)``; the left side is a supremum (lower bound)
    and the right side an infimum (upper bound), so ``ok`` is a certified
    comparison whenever it fails.
    """
    x = as_operator(x)
    if q < p:
        raise ValueError("swap contraction needs q >= p")
    if len(x.labels) != 2:
        raise ValueError("swap contraction needs exactly two factors")
    a, b = x.labels
    rhs = norm_multi_index(x, IndexProfile(((a, p), (b, q))), cfg)
    lhs = norm_multi_index(x, IndexProfile(((b, q), (a, p))), cfg)
    return lhs.value, rhs.value, lhs.value <= rhs.value * (1 + tol) + tol
