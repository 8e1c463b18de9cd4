"""Time-adaptive QKD / QRNG rates.

A round is a measurement map Q → X A with a classical announcement X,
a linear constraint on the input, and an honest input state.  The
asymptotic rate of a round is the convex program

    h(q) = min H(A|XE)  over ρ_Q ≥ 0 with N(ρ_Q) = τ and tr_A M(ρ_Q) = q,

with E purifying Q.  For a purification both entropies in
``H(A|XE) = Σ_x S(ω^x_EA) - S(ω^x_E)`` are spectra of maps that are linear
in ρ (a Gram matrix of the Kraus vectors and ``√Π_x ρ √Π_x``), so the
objective and its gradient need no matrix square roots.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .channels import LinearConstraint, _hermitian_basis
from .entropy import WeightFunction, eta_zero
from .operators import (
    DensityOperator,
    KrausChannel,
    LabeledOperator,
    hermitian_part,
    purification_vector,
)
from .schatten import DEFAULT_CFG, OptimizerConfig, chain_norm

LN2 = math.log(2.0)


class InfeasibleStatisticsError(ValueError):
    """Raised when no admissible input reproduces the target statistics."""


class CertificateError(RuntimeError):
    """Raised when a supporting hyperplane fails its probe check."""


class SizeError(ValueError):
    """Raised when the exact security computation would be too large."""


def binary_entropy(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


# ---------------------------------------------------------------- rounds


@dataclass
class ProtocolRound:
    """One protocol round.

    ``blocks`` maps each announcement symbol x to Kraus operators Q → A of
    the branch that announces x.  ``key_fraction`` is the probability that a
    round generates key, used to quote rates per key generation round.
    """

    blocks: dict
    dim_a: int
    constraint: LinearConstraint
    honest_input: DensityOperator
    in_factors: tuple = (("Q", 2),)
    f: WeightFunction | None = None
    key_fraction: float = 1.0
    name: str = "round"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.blocks = {x: [np.asarray(k, dtype=complex) for k in ks] for x, ks in self.blocks.items()}
        d = self.dim_q
        s = sum(k.conj().T @ k for ks in self.blocks.values() for k in ks)
        if np.max(np.abs(s - np.eye(d))) > 1e-9:
            raise ValueError("round map is not trace preserving")
        for ks in self.blocks.values():
            for k in ks:
                if k.shape != (self.dim_a, d):
                    raise ValueError("Kraus operators must map Q to A")

    @property
    def symbols(self) -> list:
        return list(self.blocks)

    @property
    def dim_q(self) -> int:
        return int(np.prod([d for _, d in self.in_factors]))

    def povm(self) -> dict:
        return {x: hermitian_part(sum(k.conj().T @ k for k in ks)) for x, ks in self.blocks.items()}

    def statistics(self, rho=None) -> np.ndarray:
        """Announcement distribution ``tr_A M(ρ)`` (honest input by default)."""
        r = self.honest_input.entries if rho is None else _mat(rho)
        return np.array([np.trace(p @ r).real for p in self.povm().values()])

    def channel(self) -> KrausChannel:
        """The round as a channel Q → X A with X block diagonal."""
        n = len(self.blocks)
        ks = []
        for i, x in enumerate(self.blocks):
            e = np.zeros((n, 1))
            e[i, 0] = 1
            ks += [np.kron(e, k) for k in self.blocks[x]]
        return KrausChannel(tuple(ks), self.in_factors, [("X", n), ("A", self.dim_a)])

    @property
    def m_map(self) -> KrausChannel:
        return self.channel()

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "dim_a": self.dim_a,
            "in_factors": [list(f) for f in self.in_factors],
            "key_fraction": self.key_fraction,
            "blocks": {str(x): [{"re": k.real.tolist(), "im": k.imag.tolist()} for k in ks] for x, ks in self.blocks.items()},
            "constraint": self.constraint.to_json(),
            "honest_input": self.honest_input.op.to_json(),
            "params": dict(self.params),
            **({"f": dict(self.f.table)} if self.f is not None else {}),
        }

    @classmethod
    def from_json(cls, obj: dict) -> ProtocolRound:
        """Inverse of :meth:`to_json`; also accepts ``{"bb84": {...}}``, ``{"qrng": {...}}``, ``{"constant": {}}``."""
        short = round_from_shorthand(obj)
        if short is not None:
            return short
        blocks = {}
        for x, ks in obj["blocks"].items():
            blocks[x] = [np.asarray(k["re"], dtype=float) + 1j * np.asarray(k.get("im", 0.0), dtype=float) for k in ks]
        honest = LabeledOperator.from_json(obj["honest_input"])
        return cls(
            blocks,
            int(obj["dim_a"]),
            LinearConstraint.from_json(obj["constraint"]),
            DensityOperator(honest),
            tuple(tuple(f) for f in obj.get("in_factors", [("Q", honest.dim)])),
            WeightFunction(obj["f"]) if "f" in obj else None,
            float(obj.get("key_fraction", 1.0)),
            obj.get("name", "round"),
            dict(obj.get("params", {})),
        )


def round_from_shorthand(e: Mapping) -> ProtocolRound | None:
    if "bb84" in e:
        spec = e["bb84"]
        return build_bb84_round(float(spec["p"]), float(spec.get("p_test", 0.1)))
    if "qrng" in e:
        return build_qrng_round(float(e["qrng"].get("noise", 0.05)))
    if "constant" in e:
        return build_constant_round()
    return None


def _mat(x) -> np.ndarray:
    return np.asarray(x.entries if hasattr(x, "entries") else x, dtype=complex)


_Z = np.eye(2)
_X = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
BASES = {"Z": _Z, "X": _X}


def bb84_honest_state(p: float) -> np.ndarray:
    phi = np.zeros(4)
    phi[[0, 3]] = 1 / math.sqrt(2)
    return (1 - 2 * p) * np.outer(phi, phi) + (p / 2) * np.eye(4)


def build_bb84_round(p: float, p_test: float = 0.1) -> ProtocolRound:
    """Entanglement-based BB84 round on ``Q = Q_A Q_B``.

    Both parties pick uniform bases and measure.  With probability
    ``p_test`` the round is a test: both outcomes are announced and A is set
    to the fixed symbol ⊥ (stored as 0).  Otherwise Alice's outcome goes to
    A and Bob's outcome is discarded.  Symbols are ``K:ab`` for key rounds
    and ``T:ab:ij`` for test rounds.
    """
    if not 0 <= p < 0.5:
        raise ValueError("error rate must lie in [0, 1/2)")
    if not 0 < p_test < 1:
        raise ValueError("test probability must lie in (0, 1)")
    blocks = {}
    for a, b in itertools.product("ZX", repeat=2):
        ks = []
        w = math.sqrt((1 - p_test) / 4)
        for i, j in itertools.product(range(2), repeat=2):
            bra = np.kron(BASES[a][:, i], BASES[b][:, j]).conj()
            ks.append(w * np.outer(np.eye(2)[i], bra))
        blocks[f"K:{a}{b}"] = ks
    for a, b in itertools.product("ZX", repeat=2):
        for i, j in itertools.product(range(2), repeat=2):
            bra = np.kron(BASES[a][:, i], BASES[b][:, j]).conj()
            blocks[f"T:{a}{b}:{i}{j}"] = [math.sqrt(p_test / 4) * np.outer(np.eye(2)[0], bra)]
    tr_b = KrausChannel(
        tuple(np.kron(np.eye(2), np.eye(2)[j : j + 1, :]) for j in range(2)),
        [("QA", 2), ("QB", 2)],
        [("QA", 2)],
    )
    cons = LinearConstraint(tr_b, LabeledOperator(np.eye(2) / 2, [("QA", 2)]))
    honest = DensityOperator(LabeledOperator(bb84_honest_state(p), [("QA", 2), ("QB", 2)]))
    return ProtocolRound(blocks, 2, cons, honest, (("QA", 2), ("QB", 2)), None, 1 - p_test, "bb84",
                         {"p": p, "p_test": p_test})


def build_qrng_round(noise: float = 0.05) -> ProtocolRound:
    """Single-qubit source measured in Z, input pinned to ``(1-ν)|+⟩⟨+| + ν 1/2``.

    There is a single announcement symbol; the rate is the coherence of the
    pinned state, so h is the same for every admissible input.
    """
    plus = np.full((2, 2), 0.5)
    rho = (1 - noise) * plus + noise * np.eye(2) / 2
    blocks = {"0": [np.outer(np.eye(2)[i], np.eye(2)[i]) for i in range(2)]}
    ident = KrausChannel((np.eye(2),), [("Q", 2)], [("Q", 2)])
    cons = LinearConstraint(ident, LabeledOperator(rho, [("Q", 2)]))
    honest = DensityOperator(LabeledOperator(rho, [("Q", 2)]))
    return ProtocolRound(blocks, 2, cons, honest, (("Q", 2),), None, 1.0, "qrng", {"noise": noise})


def build_constant_round() -> ProtocolRound:
    """A round whose raw key is always 0 (no randomness at all)."""
    blocks = {"0": [np.outer(np.eye(2)[0], np.eye(2)[i]) for i in range(2)]}
    ident = KrausChannel((np.eye(2),), [("Q", 2)], [("Q", 2)])
    cons = LinearConstraint(ident, LabeledOperator(np.eye(2) / 2, [("Q", 2)]))
    honest = DensityOperator(LabeledOperator(np.eye(2) / 2, [("Q", 2)]))
    return ProtocolRound(blocks, 2, cons, honest, (("Q", 2),), None, 1.0, "constant")


# ---------------------------------------------------------------- entropy objective


class _RoundEntropy:
    """``ρ ↦ H(A|XE)`` at the purification, as ``Σ_x S(G_x(ρ)) - S(C_x(ρ))`` (bits).

    ``G_x(ρ)_{kl} = tr[K_k ρ K_l†]`` is the Gram matrix of the branch and
    ``C_x(ρ) = W_x ρ W_x†`` with ``W_x = V_x† √Π_x`` restricted to the support
    of the POVM element.  Both maps are stored as matrices on row-major
    ``vec(ρ)``.  Kraus operators are compressed to an independent set so that
    ``G_x`` is nonsingular whenever ρ > 0.
    """

    def __init__(self, rnd: ProtocolRound):
        d = rnd.dim_q
        self.maps = []  # (sign, matrix, out_dim)
        for ks in rnd.blocks.values():
            stack = np.array([k.reshape(-1) for k in ks])
            u, s, vh = np.linalg.svd(stack, full_matrices=False)
            keep = s > 1e-12 * s[0]
            ind = [(s[i] * vh[i]).reshape(ks[0].shape) for i in np.flatnonzero(keep)]
            # G_{kl} = Σ_ij K_k[a,i] ρ[i,j] conj(K_l[a,j])
            g = np.einsum("kai,laj->klij", np.array(ind), np.array(ind).conj()).reshape(len(ind) ** 2, d * d)
            self.maps.append((1.0, g, len(ind)))
            pov = sum(k.conj().T @ k for k in ks)
            w, v = np.linalg.eigh(hermitian_part(pov))
            sup = w > 1e-12 * max(w[-1], 1e-300)
            wmat = (v[:, sup] * np.sqrt(w[sup])).conj().T
            self.maps.append((-1.0, np.kron(wmat, wmat.conj()), int(sup.sum())))

    @staticmethod
    def _spectral(m: np.ndarray):
        w, u = np.linalg.eigh(hermitian_part(m))
        return np.maximum(w, 0.0), u

    def value(self, rho: np.ndarray) -> float:
        r = np.asarray(rho, dtype=complex).reshape(-1)
        tot = 0.0
        for sign, mp, n in self.maps:
            w, _ = self._spectral((mp @ r).reshape(n, n))
            w = w[w > 1e-300]
            tot -= sign * float(np.sum(w * np.log2(w)))
        return tot

    def derivatives(self, rho: np.ndarray, dirs: np.ndarray):
        """Value, gradient and Hessian along ``vec`` directions ``dirs`` (rows)."""
        r = np.asarray(rho, dtype=complex).reshape(-1)
        k = dirs.shape[0]
        val, grad, hess = 0.0, np.zeros(k), np.zeros((k, k))
        for sign, mp, n in self.maps:
            w, u = self._spectral((mp @ r).reshape(n, n))
            wc = np.maximum(w, 1e-300)
            lw = np.log(wc)
            pos = w > 1e-300
            val -= sign * float(np.sum(w[pos] * np.log2(w[pos])))
            # directions in the eigenbasis of the image
            dm = (dirs @ mp.T).reshape(k, n, n)
            dm = np.einsum("ia,kab,bj->kij", u.conj().T, dm, u)
            grad -= sign * np.einsum("kii,i->k", dm, lw).real / LN2
            diff = lw[:, None] - lw[None, :]
            den = wc[:, None] - wc[None, :]
            close = np.abs(den) <= 1e-12 * np.maximum(wc[:, None], wc[None, :])
            dd = np.where(close, 1.0 / np.maximum(wc[:, None], wc[None, :]), diff / np.where(close, 1.0, den))
            hess -= sign * np.einsum("kij,lji,ij->kl", dm, dm, dd).real / LN2
        return val, grad, hess


def _constraint_system(rnd: ProtocolRound, q: np.ndarray | None):
    """Rows ``tr[H_i ·]`` of all affine constraints and their right-hand sides."""
    d = rnd.dim_q
    basis = _hermitian_basis(d)
    rows, rhs = [], []
    if q is not None:
        for pov, qx in zip(rnd.povm().values(), q):
            rows.append([np.trace(pov @ h).real for h in basis])
            rhs.append(qx)
    for a in rnd.constraint.quadratic_forms():
        rows.append([np.trace(a @ h).real for h in basis])
        rhs.append(0.0)
    rows.append([np.trace(h).real for h in basis])
    rhs.append(1.0)
    return np.array(rows), np.array(rhs), basis


def _null_basis(a: np.ndarray, basis) -> list[np.ndarray]:
    _, s, vh = np.linalg.svd(a)
    rank = int(np.sum(s > 1e-10 * max(s[0], 1e-300)))
    return [hermitian_part(sum(c * h for c, h in zip(row, basis))) for row in vh[rank:]]


@dataclass
class KeyRateResult:
    value: float  # bits per round
    per_key_round: float
    state: np.ndarray
    converged: bool


def _interior_point(rnd: ProtocolRound, a, b, basis) -> np.ndarray:
    """Feasible state maximizing the smallest eigenvalue."""
    import cvxpy as cp

    d = rnd.dim_q
    x = cp.Variable((d, d), hermitian=True)
    t = cp.Variable()
    cons = [x - t * np.eye(d) >> 0]
    for row, val in zip(a, b):
        m = sum(c * h for c, h in zip(row, basis))
        cons.append(cp.real(cp.trace(m @ x)) == val)
    prob = cp.Problem(cp.Maximize(t), cons)
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.error.SolverError as exc:
        raise InfeasibleStatisticsError(str(exc)) from exc
    if prob.status not in ("optimal", "optimal_inaccurate") or x.value is None or t.value < -1e-7:
        raise InfeasibleStatisticsError(f"statistics are not achievable ({prob.status})")
    r = hermitian_part(np.asarray(x.value))
    coords = np.array([np.trace(h @ r).real for h in basis])
    coords -= np.linalg.lstsq(a, a @ coords - b, rcond=None)[0]
    return hermitian_part(sum(c * h for c, h in zip(coords, basis)))


def _newton_barrier(ent: _RoundEntropy, rho0, nulls, vsup, mu0=1e-3, mu_min=1e-12, max_steps=200):
    """Barrier path ``H(ρ) - μ log det(V†ρV)`` with damped Newton steps."""
    dirs = np.array([bk.reshape(-1) for bk in nulls])
    red = [vsup.conj().T @ bk @ vsup for bk in nulls]
    c = np.zeros(len(nulls))

    def rho_of(c):
        return rho0 + np.tensordot(c, np.array(nulls), axes=1)

    def barrier(c, mu, need=True):
        m = vsup.conj().T @ rho_of(c) @ vsup
        w, u = np.linalg.eigh(hermitian_part(m))
        if w[0] <= 0:
            return None
        val = -mu * float(np.sum(np.log(w)))
        if not need:
            return val
        inv = (u / w) @ u.conj().T
        ib = [inv @ rk for rk in red]
        g = -mu * np.array([np.trace(x).real for x in ib])
        h = mu * np.array([[np.sum(x * y.T).real for y in ib] for x in ib])
        return val, g, h

    mu, ok, steps = mu0, True, 0
    while True:
        for _ in range(max_steps):
            v, g, h = ent.derivatives(rho_of(c), dirs)
            bv, bg, bh = barrier(c, mu)
            f, gt, ht = v + bv, g + bg, h + bh
            try:
                step = -np.linalg.solve(ht + 1e-14 * np.eye(len(c)), gt)
            except np.linalg.LinAlgError:
                step = -gt
            dec = -float(gt @ step)
            if dec < 1e-13:
                break
            t = 1.0
            while t > 1e-6:
                cand = barrier(c + t * step, mu, need=False)
                if cand is not None and ent.value(rho_of(c + t * step)) + cand <= f - 0.25 * t * dec:
                    break
                t *= 0.5
            if t <= 1e-6:
                break
            c = c + t * step
            steps += 1
        else:
            ok = False
        if mu <= mu_min:
            break
        mu *= 0.1
    return rho_of(c), ok


def solve_key_rate(rnd: ProtocolRound, q_target=None, cfg: OptimizerConfig = DEFAULT_CFG,
                   rho_start=None, restarts: int | None = None) -> KeyRateResult:
    """Minimize ``H(A|XE)`` over admissible inputs reproducing ``q_target``.

    The program is convex, so a single barrier path from a relative interior
    point is used; ``restarts`` is accepted for interface symmetry.
    """
    q = rnd.statistics() if q_target is None else np.asarray(q_target, dtype=float)
    if q.shape != (len(rnd.blocks),):
        raise ValueError("target distribution does not match the announcement alphabet")
    if np.any(q < -1e-12) or abs(q.sum() - 1) > 1e-8:
        raise ValueError("target must be a probability vector")
    a, b, basis = _constraint_system(rnd, q)
    coords_ls, *_ = np.linalg.lstsq(a, b, rcond=None)
    if np.max(np.abs(a @ coords_ls - b)) > 1e-8:
        raise InfeasibleStatisticsError("statistics are inconsistent with the round")
    rho0 = None
    for r in ([_mat(rho_start)] if rho_start is not None else []) + [rnd.honest_input.entries]:
        coords = np.array([np.trace(h @ r).real for h in basis])
        if np.max(np.abs(a @ coords - b)) < 1e-9 and np.linalg.eigvalsh(r)[0] > 1e-9:
            rho0 = hermitian_part(r)
            break
    if rho0 is None:
        rho0 = _interior_point(rnd, a, b, basis)
    nulls = _null_basis(a, basis)
    ent = _RoundEntropy(rnd)
    w, u = np.linalg.eigh(rho0)
    sup = w > 1e-9 * w[-1]
    vsup = u[:, sup]
    if not sup.all() and nulls:
        # the feasible set lies in a face: keep directions supported on it
        perp = u[:, ~sup]
        rows = np.array([np.concatenate([(perp.conj().T @ bk).reshape(-1).real, (perp.conj().T @ bk).reshape(-1).imag])
                         for bk in nulls]).T
        _, s, vh = np.linalg.svd(rows)
        rank = int(np.sum(s > 1e-10))
        nulls = [sum(cf * bk for cf, bk in zip(row, nulls)) for row in vh[rank:]]
    if not nulls:
        v = ent.value(rho0)
        return KeyRateResult(v, v / rnd.key_fraction, rho0, True)
    r, ok = _newton_barrier(ent, rho0, nulls, vsup)
    v = ent.value(r)
    return KeyRateResult(v, v / rnd.key_fraction, r, ok)


def key_rate_h(rnd: ProtocolRound, q_target=None, cfg: OptimizerConfig = DEFAULT_CFG,
               per_key_round: bool = True, rho_start=None) -> float:
    """``min H(A|XE)`` subject to the round constraint and statistics ``q_target``.

    Returned in bits per key generation round (``per_key_round``) or per
    protocol round.
    """
    res = solve_key_rate(rnd, q_target, cfg, rho_start)
    return res.per_key_round if per_key_round else res.value


# ---------------------------------------------------------------- hyperplanes


def _achievable_directions(rnd: ProtocolRound) -> tuple[np.ndarray, list[np.ndarray]]:
    """Orthonormal directions spanning the affine hull of achievable statistics."""
    a, b, basis = _constraint_system(rnd, None)
    nulls = _null_basis(a, basis)
    povs = list(rnd.povm().values())
    img = np.array([[np.trace(p @ bk).real for p in povs] for bk in nulls])
    if img.size == 0:
        return np.zeros((0, len(povs))), []
    u, s, vh = np.linalg.svd(img, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * max(s[0], 1e-300)))
    return vh[:rank], nulls


def supporting_hyperplane(rnd: ProtocolRound, q_hon=None, cfg: OptimizerConfig = DEFAULT_CFG,
                          step: float = 1e-3, probes: int = 20, probe_tol: float = 5e-3,
                          seed: int = 0) -> WeightFunction:
    """Weights f with ``Σ f q <= h(q)`` for feasible q and equality at ``q_hon``.

    The gradient of h along achievable directions comes from central
    differences with step ``step · min_x q(x)``; the constant term is absorbed using ``Σ q = 1``.  The
    result is checked against h on random feasible probe distributions.
    Units are bits per protocol round.
    """
    if np.linalg.eigvalsh(rnd.honest_input.entries)[0] <= 1e-12:
        raise ValueError("honest input must be strictly positive")
    q0 = rnd.statistics() if q_hon is None else np.asarray(q_hon, dtype=float)
    rho_h = rnd.honest_input.entries
    h0 = solve_key_rate(rnd, q0, cfg, rho_start=rho_h, restarts=0).value
    dirs, _ = _achievable_directions(rnd)
    grad = np.zeros_like(q0)
    q_min = float(q0[q0 > 0].min())
    for dq in dirs:
        # h curves sharply where q is small, so the step is relative to min q
        s = step * q_min / float(np.abs(dq).max())
        drho = _state_shift(rnd, dq)
        hp = solve_key_rate(rnd, q0 + s * dq, cfg, rho_start=rho_h + s * drho, restarts=0).value
        hm = solve_key_rate(rnd, q0 - s * dq, cfg, rho_start=rho_h - s * drho, restarts=0).value
        grad += (hp - hm) / (2 * s) * dq
    f = grad + (h0 - grad @ q0)
    wf = WeightFunction(dict(zip(rnd.symbols, f)))
    if probes:
        worst = probe_hyperplane(rnd, wf, probes, seed, cfg)
        if worst > probe_tol:
            raise CertificateError(f"hyperplane exceeds h by {worst:.3g} on a probe distribution")
    return wf


def _state_shift(rnd: ProtocolRound, dq: np.ndarray) -> np.ndarray:
    """Hermitian traceless shift inside the constraint set with statistics change ``dq``."""
    a, b, basis = _constraint_system(rnd, None)
    nulls = _null_basis(a, basis)
    povs = list(rnd.povm().values())
    img = np.array([[np.trace(p @ bk).real for p in povs] for bk in nulls])
    coef = np.linalg.lstsq(img.T, dq, rcond=None)[0]
    return sum(c * bk for c, bk in zip(coef, nulls))


def random_feasible_state(rnd: ProtocolRound, rng, spread: float = 1.0) -> np.ndarray:
    """A random admissible input: the honest state shifted inside the constraint set."""
    _, nulls = _achievable_directions(rnd)
    rho_h = rnd.honest_input.entries
    if not nulls:
        return rho_h
    d = sum(c * bk for c, bk in zip(rng.standard_normal(len(nulls)), nulls))
    t = spread
    while np.linalg.eigvalsh(rho_h + t * d)[0] < 0:
        t *= 0.7
    return hermitian_part(rho_h + t * rng.uniform(0.2, 1.0) * d)


def probe_hyperplane(rnd: ProtocolRound, f: WeightFunction, probes: int, seed: int,
                     cfg: OptimizerConfig = DEFAULT_CFG) -> float:
    """Largest ``Σ f q - h(q)`` over random feasible distributions."""
    rng = np.random.default_rng(seed)
    fv = np.array([f(x) for x in rnd.symbols])
    worst = -math.inf
    for _ in range(probes):
        r = random_feasible_state(rnd, rng)
        q = rnd.statistics(r)
        h = solve_key_rate(rnd, q, cfg, rho_start=r, restarts=0).value
        worst = max(worst, float(fv @ q - h))
    return worst


# ---------------------------------------------------------------- post-processing


def delta_penalty(n: int, eps: float, alpha: float, eta: float, penalty_sign: str = "conservative") -> float:
    """``n(α-1)(log η)² ± α/(α-1) log(1/ε)``.

    ``conservative`` adds the security term (shorter keys for smaller ε);
    ``verbatim`` subtracts it as in the displayed formula it reproduces.
    """
    smooth = n * (alpha - 1) * math.log2(eta) ** 2
    sec = alpha / (alpha - 1) * math.log2(1 / eps)
    if penalty_sign == "conservative":
        return smooth + sec
    if penalty_sign == "verbatim":
        return smooth - sec
    raise ValueError(f"unknown penalty sign {penalty_sign!r}")


@dataclass
class KeyLengthFunction:
    fs: list  # per-round weight functions
    delta: float
    alpha: float
    eta: float

    def __call__(self, xs: Sequence) -> int:
        tot = sum(f(x) for f, x in zip(self.fs, xs))
        return max(0, math.floor(tot - self.delta))


def build_g_n(rounds: Sequence[ProtocolRound], n: int, eps: float, alpha: float | None = None,
              penalty_sign: str = "conservative", fs: Sequence[WeightFunction] | None = None) -> KeyLengthFunction:
    """``g_n(xⁿ) = max(0, ⌊Σ_t f_t(x_t) - δ⌋)``.

    ``rounds`` lists the round used at each position (length n); weights come
    from ``fs`` or each round's ``f``.  ``alpha`` defaults to ``1 + 1/√n``.
    """
    if len(rounds) != n:
        raise ValueError("need one round per position")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    fs = list(fs) if fs is not None else [r.f for r in rounds]
    if any(f is None for f in fs):
        raise ValueError("every round needs a weight function")
    eta = max(eta_zero(f, r.dim_a) for f, r in zip(fs, rounds))
    upper = 1 + 1 / math.log2(eta)
    if alpha is None:
        # short blocks: 1 + 1/√n can leave the window, fall back to its midpoint
        alpha = min(1 + 1 / math.sqrt(n), (1 + upper) / 2)
    alpha = float(alpha)
    if not 1 < alpha < upper:
        raise ValueError(f"alpha={alpha:.6g} outside the admissible window (1, {upper:.6g})")
    return KeyLengthFunction(fs, delta_penalty(n, eps, alpha, eta, penalty_sign), alpha, eta)


# ---------------------------------------------------------------- schedules and rates


@dataclass
class ScheduleEntry:
    round: ProtocolRound
    weight: float


def load_schedule(obj) -> tuple[list[ScheduleEntry], float | None]:
    """Parse a schedule: a list (or ``{"rounds": [...], "ec_error": p}``) of entries.

    Entries are ``{"bb84": {"p": 0.1, "p_test": 0.1}, "weight": 2/3}`` or
    ``{"qrng": {"noise": 0.05}, "weight": 1}``.
    """
    ec = None
    entries = obj
    if isinstance(obj, dict):
        entries = obj["rounds"]
        ec = obj.get("ec_error")
    out = []
    for e in entries:
        w = float(e.get("weight", 1.0))
        if w < 0:
            raise ValueError("schedule weights must be nonnegative")
        rnd = round_from_shorthand(e)
        if rnd is None:
            if "round" not in e:
                raise ValueError(f"unknown schedule entry {sorted(e)}")
            rnd = ProtocolRound.from_json(e["round"])
        out.append(ScheduleEntry(rnd, w))
    tot = sum(e.weight for e in out)
    if not out or tot <= 0:
        raise ValueError("schedule must contain positive weights")
    for e in out:
        e.weight /= tot
    return out, ec


@dataclass
class RateBreakdown:
    per_round: list
    r_ad: float
    r_na: float
    ec_cost: float
    sk_adaptive: float
    sk_static: float
    ec_error: float = math.nan

    @property
    def improvement(self) -> float:
        return self.sk_adaptive / self.sk_static - 1 if self.sk_static else math.inf

    def as_dict(self) -> dict:
        return {
            "per_round_h": self.per_round,
            "r_ad": self.r_ad,
            "r_na": self.r_na,
            "ec_error": self.ec_error,
            "ec_cost": self.ec_cost,
            "sk_adaptive": self.sk_adaptive,
            "sk_static": self.sk_static,
            "improvement": self.improvement,
        }


def asymptotic_rates(schedule: Sequence[ScheduleEntry], ec_error: float | None = None,
                     cfg: OptimizerConfig = DEFAULT_CFG) -> RateBreakdown:
    """Adaptive rate (weighted mean of per-round h) versus the rate at the average statistics.

    Rates are per key generation round.  ``ec_error`` defaults to the
    weighted mean BB84 error rate.
    """
    rounds = [e.round for e in schedule]
    ws = np.array([e.weight for e in schedule])
    syms = rounds[0].symbols
    if any(r.symbols != syms for r in rounds):
        raise ValueError("schedule rounds must share one announcement alphabet")
    hs = [solve_key_rate(r, None, cfg, restarts=0).per_key_round for r in rounds]
    r_ad = float(ws @ np.array(hs))
    qbar = sum(w * r.statistics() for w, r in zip(ws, rounds))
    rho_bar = sum(w * r.honest_input.entries for w, r in zip(ws, rounds))
    r_na = solve_key_rate(rounds[0], qbar, cfg, rho_start=rho_bar, restarts=0).per_key_round
    if ec_error is None:
        ps = [r.params.get("p") for r in rounds]
        ec_error = float(ws @ np.array(ps)) if all(p is not None for p in ps) else 0.0
    ec = binary_entropy(ec_error)
    return RateBreakdown(hs, r_ad, r_na, ec, r_ad - ec, r_na - ec, float(ec_error))


# ---------------------------------------------------------------- extraction and security


class ToeplitzHash:
    """Toeplitz 2-universal family {0,1}^m → {0,1}^l with seeds of m + l - 1 bits."""

    def __init__(self, m: int, l: int):
        if l < 0 or m < 1:
            raise ValueError("need m >= 1 and l >= 0")
        self.m, self.l = m, l

    @property
    def seed_bits(self) -> int:
        return max(self.m + self.l - 1, 0)

    def matrix(self, seed: int) -> np.ndarray:
        bits = [(seed >> i) & 1 for i in range(self.seed_bits)]
        t = np.zeros((self.l, self.m), dtype=np.int64)
        for i in range(self.l):
            for j in range(self.m):
                t[i, j] = bits[i - j + self.m - 1]
        return t

    def __call__(self, seed: int, a: int) -> int:
        if self.l == 0:
            return 0
        x = np.array([(a >> (self.m - 1 - j)) & 1 for j in range(self.m)])
        y = self.matrix(seed) @ x % 2
        return int("".join(map(str, y)), 2)


def _round_branches(rnd: ProtocolRound, rho: np.ndarray) -> dict:
    """Per symbol x and key value a, the subnormalized Eve state ``ω^{x,a}_E`` (E = Q̃)."""
    v = purification_vector(rho)
    d = rnd.dim_q
    psi = v.reshape(d, d)  # rows Q̃, columns Q
    out = {}
    for x, ks in rnd.blocks.items():
        per_a = [np.zeros((d, d), dtype=complex) for _ in range(rnd.dim_a)]
        for k in ks:
            m = psi @ k.T  # rows Q̃, columns A
            for a in range(rnd.dim_a):
                col = m[:, a]
                per_a[a] += np.outer(col, col.conj())
        out[x] = per_a
    return out


@dataclass
class SecurityReport:
    epsilon: float
    bound: float
    bound_alpha: float
    seeds: int
    exact_seed_average: bool


def exact_security(rounds: Sequence[ProtocolRound], key_length: Callable, inputs=None,
                   alphas: Sequence[float] = (1.05, 1.1, 1.25, 1.5, 1.75, 2.0), max_dim: int = 4096,
                   seed_samples: int = 256, seed: int = 0, cfg: OptimizerConfig = DEFAULT_CFG,
                   max_branches: int = 200_000) -> SecurityReport:
    """Trace-distance security of Toeplitz extraction for a product input.

    ``key_length`` maps a tuple of symbols to a key length in bits.  Also
    returns the Rényi leftover-hash bound
    ``2^{2/α-2} Σ_x 2^{((α-1)/α) k(x)} ‖ρ^x_EA‖_{(E:1,A:α)}`` minimized over α,
    evaluated exactly through multiplicativity of the norm on product blocks.
    """
    n = len(rounds)
    if any(r.dim_a != 2 for r in rounds):
        raise SizeError("exact path supports binary raw keys only")
    inputs = [r.honest_input.entries for r in rounds] if inputs is None else [_mat(x) for x in inputs]
    d_e = int(np.prod([r.dim_q for r in rounds]))
    if d_e > max_dim or 2**n * d_e > 16 * max_dim:
        raise SizeError(f"full state on E A has dimension {2**n * d_e}; limits are E <= {max_dim}, EA <= {16 * max_dim}")
    branches = [_round_branches(r, rho) for r, rho in zip(rounds, inputs)]
    if math.prod(len(b) for b in branches) > max_branches:
        raise SizeError(f"{math.prod(len(b) for b in branches)} announcement strings exceed {max_branches}")
    # per-round block norms for the bound, by α; the σ problem is convex so one start suffices
    inner = replace(cfg, restarts=0)
    cache = {}
    log_norms = {a_: [] for a_ in alphas}
    for r, rho, br in zip(rounds, inputs, branches):
        key = (id(r), rho.tobytes())
        if key not in cache:
            tabs = {}
            for alpha in alphas:
                tab = {}
                for x, per_a in br.items():
                    blk = _cq_block(per_a)
                    w = np.trace(blk).real
                    if w <= 1e-15:
                        tab[x] = -math.inf
                        continue
                    res = chain_norm(blk / w, [r.dim_q, r.dim_a], [1.0, alpha], inner)
                    tab[x] = math.log(w) + res.log_value
                tabs[alpha] = tab
            cache[key] = tabs
        for alpha in alphas:
            log_norms[alpha].append(cache[key][alpha])
    eps_total = 0.0
    bound_terms = {a: [] for a in alphas}
    seeds_used, exact_avg = 0, True
    rng = np.random.default_rng(seed)
    for xs in itertools.product(*[list(b) for b in branches]):
        per_a_lists = [br[x] for br, x in zip(branches, xs)]
        if any(all(np.trace(m).real <= 1e-15 for m in pa) for pa in per_a_lists):
            continue
        k = int(key_length(xs))
        for a_ in alphas:
            ln = sum(pr[x] for pr, x in zip(log_norms[a_], xs))
            bound_terms[a_].append((a_ - 1) / a_ * k * LN2 + ln)
        if k <= 0:
            continue
        states = {}
        for avec in itertools.product(range(2), repeat=n):
            m = per_a_lists[0][avec[0]]
            for t in range(1, n):
                m = np.kron(m, per_a_lists[t][avec[t]])
            idx = int("".join(map(str, avec)), 2)
            states[idx] = m
        rho_e = sum(states.values())
        h = ToeplitzHash(n, k)
        n_seeds = 2**h.seed_bits
        if n_seeds <= seed_samples:
            seeds = range(n_seeds)
        else:
            seeds = rng.integers(0, n_seeds, size=seed_samples)
            exact_avg = False
        seeds_used = max(seeds_used, len(seeds))
        acc = 0.0
        for s in seeds:
            buckets = {}
            for idx, m in states.items():
                key = h(int(s), idx)
                buckets[key] = buckets.get(key, 0) + m
            for kv in range(2**k):
                diff = buckets.get(kv, 0) - rho_e / 2**k
                acc += float(np.sum(np.abs(np.linalg.eigvalsh(hermitian_part(np.asarray(diff) * np.ones((1, 1)))))))
        eps_total += 0.5 * acc / len(seeds)
    best_bound, best_alpha = math.inf, float("nan")
    for a_ in alphas:
        terms = bound_terms[a_]
        if not terms:
            val = 0.0
        else:
            val = 2 ** (2 / a_ - 2) * math.exp(float(np.logaddexp.reduce(np.array(terms))))
        if val < best_bound:
            best_bound, best_alpha = val, a_
    return SecurityReport(eps_total, min(best_bound, 1.0), best_alpha, seeds_used, exact_avg)


def _cq_block(per_a: Sequence[np.ndarray]) -> np.ndarray:
    """``Σ_a ω^{x,a}_E ⊗ |a⟩⟨a|`` ordered E then A."""
    d = per_a[0].shape[0]
    na = len(per_a)
    m = np.zeros((d * na, d * na), dtype=complex)
    for a, blk in enumerate(per_a):
        proj = np.zeros((na, na))
        proj[a, a] = 1
        m += np.kron(blk, proj)
    return m


# ---------------------------------------------------------------- simulation


EXACT_MAX_N = 8


def expand_schedule(schedule: Sequence[ScheduleEntry], n: int) -> list[ProtocolRound]:
    """Deterministic length-n sequence with round counts proportional to the weights."""
    counts = [int(math.floor(e.weight * n)) for e in schedule]
    i = 0
    while sum(counts) < n:
        counts[i % len(counts)] += 1
        i += 1
    seq = []
    for e, c in zip(schedule, counts):
        seq += [e.round] * c
    return seq


@dataclass
class SimulationReport:
    xs: list
    key_lengths: list
    empirical_rate: float
    expected_rate_estimate: float
    delta: float
    alpha: float
    security: SecurityReport | None = None


def simulate_protocol(schedule: Sequence[ScheduleEntry], n: int, seed: int = 0, eps: float | None = None,
                      samples: int = 1, penalty_sign: str = "conservative",
                      cfg: OptimizerConfig = DEFAULT_CFG, exact: bool = False,
                      key_length: int | None = None) -> SimulationReport:
    """Draw xⁿ from the honest statistics and evaluate g_n.

    Rounds without weights get a supporting hyperplane computed on the fly.
    With ``exact`` (n <= 8, binary raw key) the full cq-state of the honest
    product input is also built and the trace-distance security of Toeplitz
    extraction computed; ``key_length`` then overrides g_n with a fixed length.
    """
    if exact and n > EXACT_MAX_N:
        raise SizeError(f"exact security path needs n <= {EXACT_MAX_N}, got {n}")
    eps = 1 / n if eps is None else eps
    seq = expand_schedule(schedule, n)
    fs_cache = {}
    for e in schedule:
        r = e.round
        if r.f is None and id(r) not in fs_cache:
            fs_cache[id(r)] = supporting_hyperplane(r, cfg=cfg, probes=0)
    fs = [r.f if r.f is not None else fs_cache[id(r)] for r in seq]
    g = build_g_n(seq, n, eps, None, penalty_sign, fs)
    rng = np.random.default_rng(seed)
    stats = {id(r): r.statistics() for r in {id(r): r for r in seq}.values()}
    sym = {id(r): r.symbols for r in seq}
    # group positions by round for vectorized sampling
    xs_all, lengths = [], []
    for _ in range(max(samples, 1)):
        xs = []
        for r in seq:
            q = np.clip(stats[id(r)], 0, None)
            xs.append(sym[id(r)][rng.choice(len(q), p=q / q.sum())])
        xs_all.append(xs)
        lengths.append(g(xs))
    rate = lengths[0] / n
    security = None
    if exact:
        kfn = g if key_length is None else (lambda xs: int(key_length))
        security = exact_security(seq, kfn, seed=seed, cfg=cfg)
    return SimulationReport(xs_all[0], lengths, rate, float(np.mean(lengths)) / n, g.delta, g.alpha, security)


def expected_key_length(schedule: Sequence[ScheduleEntry], n: int, eps: float | None = None,
                        samples: int = 200, seed: int = 0, penalty_sign: str = "conservative",
                        fs: Mapping | None = None) -> float:
    """Monte-Carlo estimate of ``(1/n) E[g_n]`` under the honest statistics.

    The sum ``Σ f_t(x_t)`` is sampled per round type with numpy, so large n
    stay cheap.
    """
    eps = 1 / n if eps is None else eps
    seq = expand_schedule(schedule, n)
    fs = fs or {}
    f_of = {}
    for e in schedule:
        f_of[id(e.round)] = fs.get(e.round.name) or e.round.f or supporting_hyperplane(e.round, probes=0)
    g = build_g_n(seq, n, eps, None, penalty_sign, [f_of[id(r)] for r in seq])
    rng = np.random.default_rng(seed)
    totals = np.zeros(samples)
    counts = {}
    for r in seq:
        counts[id(r)] = counts.get(id(r), 0) + 1
    for e in schedule:
        r = e.round
        c = counts.get(id(r), 0)
        if not c:
            continue
        q = np.clip(r.statistics(), 0, None)
        q = q / q.sum()
        fv = np.array([f_of[id(r)](x) for x in r.symbols])
        draws = rng.multinomial(c, q, size=samples)
        totals += draws @ fv
    lengths = np.maximum(0, np.floor(totals - g.delta))
    return float(lengths.mean()) / n
