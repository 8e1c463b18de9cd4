"""Labeled operators, density operators and Kraus channels.

Every operator carries an ordered list of ``(label, dim)`` factors describing
the tensor decomposition of its row space (and column space, for square
operators).  Factor order is significant everywhere and never sorted
implicitly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-8
KERNEL_CUTOFF = 1e-12

Factors = tuple[tuple[str, int], ...]


class LabelError(ValueError):
    """Raised for duplicate, missing or unknown subsystem labels."""


class DimensionError(ValueError):
    """Raised when factor dimensions do not match the matrix shape."""


class NotPSDError(ValueError):
    """Raised when an operator required to be PSD has a negative eigenvalue."""


def _as_factors(factors: Iterable) -> Factors:
    out = tuple((str(lbl), int(d)) for lbl, d in factors)
    labels = [lbl for lbl, _ in out]
    if len(set(labels)) != len(labels):
        raise LabelError(f"duplicate labels in {labels}")
    for lbl, d in out:
        if d < 1:
            raise DimensionError(f"factor {lbl!r} has non-positive dimension {d}")
    return out


def _dims(factors: Factors) -> list[int]:
    return [d for _, d in factors]


@dataclass(frozen=True)
class LabeledOperator:
    """A dense complex matrix with a labeled tensor factorization.

    For square operators ``factors`` describes both rows and columns.  For
    rectangular operators (rarely needed) ``col_factors`` holds the column
    factorization.
    """

    entries: np.ndarray
    factors: Factors
    col_factors: Factors | None = None

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "factors", _as_factors(self.factors))
        if self.col_factors is not None:
            object.__setattr__(self, "col_factors", _as_factors(self.col_factors))
        if m.ndim != 2:
            raise DimensionError("entries must be a matrix")
        rows = int(np.prod(_dims(self.factors))) if self.factors else 1
        cols_f = self.col_factors if self.col_factors is not None else self.factors
        cols = int(np.prod(_dims(cols_f))) if cols_f else 1
        if m.shape != (rows, cols):
            raise DimensionError(
                f"matrix shape {m.shape} does not match factor dims ({rows}, {cols})"
            )
        if not np.all(np.isfinite(m)):
            raise ValueError("operator entries must be finite")

    @property
    def square(self) -> bool:
        return self.col_factors is None

    @property
    def labels(self) -> list[str]:
        return [lbl for lbl, _ in self.factors]

    @property
    def dims(self) -> list[int]:
        return _dims(self.factors)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def dim_of(self, label: str) -> int:
        for lbl, d in self.factors:
            if lbl == label:
                return d
        raise LabelError(f"unknown label {label!r}")

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def relabel(self, mapping: dict[str, str]) -> LabeledOperator:
        f = [(mapping.get(lbl, lbl), d) for lbl, d in self.factors]
        cf = None
        if self.col_factors is not None:
            cf = [(mapping.get(lbl, lbl), d) for lbl, d in self.col_factors]
        return LabeledOperator(self.entries, f, cf)

    def scaled(self, c: complex) -> LabeledOperator:
        return LabeledOperator(c * self.entries, self.factors, self.col_factors)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.square and np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0) <= tol

    def is_psd(self, tol: float = HERMITIAN_TOL) -> bool:
        if not self.is_hermitian(tol):
            return False
        return np.linalg.eigvalsh(hermitian_part(self.entries))[0] >= -tol

    def to_json(self) -> dict:
        return {
            "factors": [[lbl, d] for lbl, d in self.factors],
            "re": self.entries.real.tolist(),
            "im": self.entries.imag.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> LabeledOperator:
        m = np.asarray(obj["re"], dtype=float)
        if "im" in obj:
            m = m + 1j * np.asarray(obj["im"], dtype=float)
        return cls(m, [tuple(f) for f in obj["factors"]])


def labeled(matrix, factors) -> LabeledOperator:
    return LabeledOperator(np.asarray(matrix, dtype=complex), factors)


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def symmetrize(m: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``(m + m*)/2``, refusing matrices that are far from Hermitian."""
    asym = np.max(np.abs(m - m.conj().T), initial=0.0)
    scale = max(1.0, np.max(np.abs(m), initial=0.0))
    if asym > tol * scale:
        raise ValueError(f"matrix is not Hermitian (asymmetry {asym:.3g})")
    return hermitian_part(m)


@dataclass(frozen=True)
class DensityOperator:
    """A validated density operator (PSD, unit trace within ``trace_tol``)."""

    op: LabeledOperator
    trace_tol: float = 1e-8

    def __post_init__(self):
        if not self.op.square:
            raise DimensionError("density operator must be square")
        m = self.op.entries
        if np.max(np.abs(m - m.conj().T), initial=0.0) > self.trace_tol:
            raise ValueError("density operator is not Hermitian")
        if np.linalg.eigvalsh(hermitian_part(m))[0] < -self.trace_tol:
            raise NotPSDError("density operator has a negative eigenvalue")
        if abs(np.trace(m) - 1.0) > self.trace_tol:
            raise ValueError(f"density operator has trace {np.trace(m).real:.6g}")

    @property
    def entries(self) -> np.ndarray:
        return self.op.entries

    @property
    def factors(self) -> Factors:
        return self.op.factors

    @property
    def labels(self) -> list[str]:
        return self.op.labels


def as_operator(x) -> LabeledOperator:
    if isinstance(x, DensityOperator):
        return x.op
    if isinstance(x, LabeledOperator):
        return x
    raise TypeError(f"expected LabeledOperator or DensityOperator, got {type(x).__name__}")


def density(matrix, factors, trace_tol: float = 1e-8) -> DensityOperator:
    return DensityOperator(labeled(matrix, factors), trace_tol)


# ---------------------------------------------------------------- tensor algebra


def tensor(a, b) -> LabeledOperator:
    """Kronecker product with factors ``factors(a) + factors(b)``."""
    a, b = as_operator(a), as_operator(b)
    clash = set(a.labels) & set(b.labels)
    if clash:
        raise LabelError(f"label collision: {sorted(clash)}")
    if not (a.square and b.square):
        raise DimensionError("tensor of rectangular operators is not supported")
    return LabeledOperator(np.kron(a.entries, b.entries), a.factors + b.factors)


def tensor_all(ops: Sequence) -> LabeledOperator:
    out = as_operator(ops[0])
    for op in ops[1:]:
        out = tensor(out, op)
    return out


def identity(factors) -> LabeledOperator:
    f = _as_factors(factors)
    return LabeledOperator(np.eye(int(np.prod(_dims(f))) if f else 1), f)


def permute(x, order: Sequence[str]) -> LabeledOperator:
    """Reorder the tensor factors of a square operator to ``order``."""
    x = as_operator(x)
    if sorted(order) != sorted(x.labels) or len(order) != len(x.labels):
        raise LabelError(f"order {list(order)} is not a permutation of {x.labels}")
    if list(order) == x.labels:
        return x
    perm = [x.labels.index(lbl) for lbl in order]
    m = _permute_matrix(x.entries, x.dims, perm)
    return LabeledOperator(m, [x.factors[i] for i in perm])


def _permute_matrix(m: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    k = len(dims)
    t = m.reshape(list(dims) + list(dims))
    t = t.transpose(list(perm) + [k + i for i in perm])
    n = m.shape[0]
    return t.reshape(n, n)


def permutation_matrix(dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Unitary P with ``P (v_0 ⊗ ... ⊗ v_k) = v_perm[0] ⊗ ...``."""
    n = int(np.prod(dims)) if dims else 1
    idx = np.arange(n).reshape(dims).transpose(perm).reshape(-1)
    p = np.zeros((n, n))
    p[np.arange(n), idx] = 1.0
    return p


def partial_trace(x, drop: Iterable[str]) -> LabeledOperator:
    """Trace out the factors in ``drop``; remaining order is preserved."""
    x = as_operator(x)
    if not x.square:
        raise DimensionError("partial trace needs a square operator")
    drop = list(drop)
    for lbl in drop:
        if lbl not in x.labels:
            raise LabelError(f"unknown label {lbl!r}")
    keep = [i for i, lbl in enumerate(x.labels) if lbl not in drop]
    m = ptrace_matrix(x.entries, x.dims, keep)
    return LabeledOperator(m, [x.factors[i] for i in keep])


def ptrace_matrix(m: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Partial trace on raw matrices, keeping factor indices ``keep`` in order."""
    k = len(dims)
    keep = list(keep)
    gone = [i for i in range(k) if i not in keep]
    t = m.reshape(list(dims) + list(dims))
    t = t.transpose(keep + gone + [k + i for i in keep] + [k + i for i in gone])
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    dg = int(np.prod([dims[i] for i in gone])) if gone else 1
    t = t.reshape(dk, dg, dk, dg)
    return np.einsum("ajbj->ab", t)


def ptrace_right(m: np.ndarray, d_left: int, d_right: int) -> np.ndarray:
    """Trace out the trailing factor of dimension ``d_right``."""
    return np.einsum("ajbj->ab", m.reshape(d_left, d_right, d_left, d_right))


# ---------------------------------------------------------------- spectral calculus


def frac_power_matrix(h: np.ndarray, t: float, tol: float = HERMITIAN_TOL) -> np.ndarray:
    h = symmetrize(h, tol)
    w, v = np.linalg.eigh(h)
    lam_max = max(w[-1], 0.0)
    if w[0] < -tol * max(1.0, lam_max):
        raise NotPSDError(f"eigenvalue {w[0]:.3g} below tolerance")
    cut = KERNEL_CUTOFF * lam_max
    wp = np.zeros_like(w)
    pos = w > cut
    wp[pos] = w[pos] ** t
    return (v * wp) @ v.conj().T


def frac_power(h, t: float) -> LabeledOperator:
    """Spectral power ``h**t`` with the Moore-Penrose convention on the kernel.

    Eigenvalues below ``1e-12 * max eigenvalue`` are treated as exact zeros,
    so negative powers act as generalized inverses on the support.
    """
    h = as_operator(h)
    return LabeledOperator(frac_power_matrix(h.entries, t), h.factors)


def support_projector(h) -> LabeledOperator:
    h = as_operator(h)
    w, v = np.linalg.eigh(hermitian_part(h.entries))
    pos = w > KERNEL_CUTOFF * max(w[-1], 0.0)
    return LabeledOperator(v[:, pos] @ v[:, pos].conj().T, h.factors)


def entropy_bits(w: np.ndarray) -> float:
    """Shannon entropy (bits) of a nonnegative vector, ``0 log 0 = 0``."""
    w = np.asarray(w, dtype=float)
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log2(w)))


def von_neumann_entropy(m: np.ndarray) -> float:
    return entropy_bits(np.linalg.eigvalsh(hermitian_part(m)))


def purify(rho) -> LabeledOperator:
    """Canonical purification ``|√ρ⟩ = Σ_i |i⟩_Q̃ ⊗ √ρ|i⟩_Q`` as a projector on Q̃Q.

    The purifying factors are named by prefixing ``~`` to each label of
    ``rho``; they come first in the factor order.
    """
    if isinstance(rho, DensityOperator):
        op = rho.op
    else:
        op = as_operator(rho)
        DensityOperator(op)
    vec = purification_vector(op.entries)
    env = [("~" + lbl, d) for lbl, d in op.factors]
    return LabeledOperator(np.outer(vec, vec.conj()), tuple(env) + op.factors)


def purification_vector(rho: np.ndarray) -> np.ndarray:
    s = frac_power_matrix(rho, 0.5)
    # Σ_i |i⟩ ⊗ s|i⟩ has amplitude s[j, i] at index (i, j).
    return s.T.reshape(-1).copy()


# ---------------------------------------------------------------- channels


@dataclass(frozen=True)
class KrausChannel:
    """A CP map given by Kraus operators ``Φ(ρ) = Σ K ρ K*``."""

    kraus: tuple
    in_factors: Factors
    out_factors: Factors
    trace_preserving: bool = True
    tol: float = 1e-8

    def __post_init__(self):
        ks = tuple(np.array(k, dtype=complex) for k in self.kraus)
        if not ks:
            raise ValueError("channel needs at least one Kraus operator")
        for k in ks:
            k.setflags(write=False)
        object.__setattr__(self, "kraus", ks)
        object.__setattr__(self, "in_factors", _as_factors(self.in_factors))
        object.__setattr__(self, "out_factors", _as_factors(self.out_factors))
        shape = ks[0].shape
        if any(k.shape != shape for k in ks):
            raise DimensionError("Kraus operators must share one shape")
        d_in = int(np.prod(_dims(self.in_factors))) if self.in_factors else 1
        d_out = int(np.prod(_dims(self.out_factors))) if self.out_factors else 1
        if shape != (d_out, d_in):
            raise DimensionError(f"Kraus shape {shape} does not match ({d_out}, {d_in})")
        s = sum(k.conj().T @ k for k in ks)
        if self.trace_preserving:
            if np.max(np.abs(s - np.eye(d_in))) > self.tol:
                raise ValueError("Kraus operators do not satisfy Σ K*K = 1")
        elif np.linalg.eigvalsh(np.eye(d_in) - hermitian_part(s))[0] < -self.tol:
            raise ValueError("Kraus operators are not trace non-increasing")

    @property
    def d_in(self) -> int:
        return self.kraus[0].shape[1]

    @property
    def d_out(self) -> int:
        return self.kraus[0].shape[0]

    @property
    def in_labels(self) -> list[str]:
        return [lbl for lbl, _ in self.in_factors]

    @property
    def out_labels(self) -> list[str]:
        return [lbl for lbl, _ in self.out_factors]

    def apply_matrix(self, m: np.ndarray) -> np.ndarray:
        return sum(k @ m @ k.conj().T for k in self.kraus)

    def adjoint_matrix(self, m: np.ndarray) -> np.ndarray:
        return sum(k.conj().T @ m @ k for k in self.kraus)

    def to_json(self) -> dict:
        return {
            "in_factors": [[lbl, d] for lbl, d in self.in_factors],
            "out_factors": [[lbl, d] for lbl, d in self.out_factors],
            "kraus": [{"re": k.real.tolist(), "im": k.imag.tolist()} for k in self.kraus],
            "tp": self.trace_preserving,
        }

    @classmethod
    def from_json(cls, obj: dict) -> KrausChannel:
        ks = []
        for k in obj["kraus"]:
            m = np.asarray(k["re"], dtype=float)
            if "im" in k:
                m = m + 1j * np.asarray(k["im"], dtype=float)
            ks.append(m)
        return cls(
            tuple(ks),
            [tuple(f) for f in obj["in_factors"]],
            [tuple(f) for f in obj["out_factors"]],
            bool(obj.get("tp", True)),
        )


def apply_channel(phi: KrausChannel, x) -> LabeledOperator:
    """Apply ``id ⊗ Φ ⊗ id`` to ``x``.

    The input factors of ``phi`` must appear contiguously (and in order) in
    the factor list of ``x``; the output factors are spliced in at that
    position.
    """
    x = as_operator(x)
    labels = x.labels
    n_in = len(phi.in_factors)
    start = None
    if n_in == 0:
        start = len(labels)
    else:
        for i in range(len(labels) - n_in + 1):
            if labels[i : i + n_in] == phi.in_labels:
                start = i
                break
    if start is None:
        raise DimensionError(f"channel inputs {phi.in_labels} not contiguous in {labels}")
    if list(x.factors[start : start + n_in]) != list(phi.in_factors):
        raise DimensionError("channel input dimensions do not match operator factors")
    before = x.factors[:start]
    after = x.factors[start + n_in :]
    clash = set(phi.out_labels) & {lbl for lbl, _ in before + after}
    if clash:
        raise LabelError(f"output labels collide with untouched factors: {sorted(clash)}")
    d_b = int(np.prod(_dims(before))) if before else 1
    d_a = int(np.prod(_dims(after))) if after else 1
    d_in, d_out = phi.d_in, phi.d_out
    if x.square:
        t = x.entries.reshape(d_b, d_in, d_a, d_b, d_in, d_a)
        out = np.zeros((d_b, d_out, d_a, d_b, d_out, d_a), dtype=complex)
        for k in phi.kraus:
            out += np.einsum("ij,ajbckd,lk->aibcld", k, t, k.conj(), optimize=True)
        n = d_b * d_out * d_a
        return LabeledOperator(out.reshape(n, n), before + phi.out_factors + after)
    raise DimensionError("apply_channel needs a square operator")


def lift_kraus(phi: KrausChannel, d_before: int = 1, d_after: int = 1) -> list[np.ndarray]:
    """Kraus operators of ``id_before ⊗ Φ ⊗ id_after``."""
    eb, ea = np.eye(d_before), np.eye(d_after)
    return [np.kron(np.kron(eb, k), ea) for k in phi.kraus]


def compose(psi: KrausChannel, phi: KrausChannel) -> KrausChannel:
    """``ψ ∘ φ`` where ψ acts on a contiguous block of φ's outputs."""
    labels = phi.out_labels
    n_in = len(psi.in_factors)
    start = next(
        (i for i in range(len(labels) - n_in + 1) if labels[i : i + n_in] == psi.in_labels),
        None,
    )
    if start is None:
        raise DimensionError(f"ψ inputs {psi.in_labels} not contiguous in φ outputs {labels}")
    before = phi.out_factors[:start]
    after = phi.out_factors[start + n_in :]
    d_b = int(np.prod(_dims(before))) if before else 1
    d_a = int(np.prod(_dims(after))) if after else 1
    lifted = lift_kraus(psi, d_b, d_a)
    ks = [a @ b for a in lifted for b in phi.kraus]
    return KrausChannel(
        _compress_kraus(ks),
        phi.in_factors,
        before + psi.out_factors + after,
        phi.trace_preserving and psi.trace_preserving,
    )


def channel_tensor(phi1: KrausChannel, phi2: KrausChannel) -> KrausChannel:
    """``Φ₁ ⊗ Φ₂`` with inputs ``Q₁Q₂`` and outputs ``out(Φ₁) + out(Φ₂)``."""
    ks = [np.kron(a, b) for a in phi1.kraus for b in phi2.kraus]
    return KrausChannel(
        _compress_kraus(ks),
        phi1.in_factors + phi2.in_factors,
        phi1.out_factors + phi2.out_factors,
        phi1.trace_preserving and phi2.trace_preserving,
    )


def permute_outputs(phi: KrausChannel, order: Sequence[str]) -> KrausChannel:
    labels = phi.out_labels
    if sorted(order) != sorted(labels):
        raise LabelError(f"{list(order)} is not a permutation of {labels}")
    perm = [labels.index(lbl) for lbl in order]
    p = permutation_matrix(_dims(phi.out_factors), perm)
    return KrausChannel(
        tuple(p @ k for k in phi.kraus),
        phi.in_factors,
        [phi.out_factors[i] for i in perm],
        phi.trace_preserving,
    )


def _compress_kraus(ks: list[np.ndarray], tol: float = 1e-13) -> tuple:
    """Reduce a Kraus list to a minimal one via the Gram matrix."""
    if len(ks) <= 1:
        return tuple(ks)
    flat = np.array([k.reshape(-1) for k in ks])
    gram = flat.conj() @ flat.T
    w, v = np.linalg.eigh(hermitian_part(gram))
    keep = w > tol * max(w[-1], 1e-300)
    if keep.sum() == len(ks):
        return tuple(ks)
    # unitary remixing by v^T gives orthogonal Kraus operators with norms w
    shape = ks[0].shape
    return tuple((v[:, j] @ flat).reshape(shape) for j in np.nonzero(keep)[0])


def choi_rank(phi: KrausChannel) -> int:
    flat = np.array([k.reshape(-1) for k in phi.kraus])
    return int(np.linalg.matrix_rank(flat, tol=1e-10))


# ---------------------------------------------------------------- structured channels


def identity_channel(label: str = "Q", d: int = 2, out_label: str | None = None) -> KrausChannel:
    return KrausChannel((np.eye(d),), [(label, d)], [(out_label or label, d)])


def depolarizing_channel(
    p: float = 1.0, d: int = 2, in_label: str = "Q", out_label: str = "S"
) -> KrausChannel:
    """``ρ ↦ (1-p) ρ + p tr(ρ) 1/d``; ``p = 1`` is fully depolarizing."""
    ks = []
    if p < 1:
        ks.append(np.sqrt(1 - p) * np.eye(d))
    for i in range(d):
        for j in range(d):
            k = np.zeros((d, d))
            k[i, j] = np.sqrt(p / d)
            ks.append(k)
    return KrausChannel(_compress_kraus(ks), [(in_label, d)], [(out_label, d)])


def dephasing_channel(
    p: float = 1.0, d: int = 2, in_label: str = "Q", out_label: str = "S"
) -> KrausChannel:
    ks = [np.sqrt(1 - p) * np.eye(d)] if p < 1 else []
    for i in range(d):
        k = np.zeros((d, d))
        k[i, i] = np.sqrt(p)
        ks.append(k)
    return KrausChannel(_compress_kraus(ks), [(in_label, d)], [(out_label, d)])


def classical_copy_channel(
    d: int = 2, in_label: str = "Q", r_label: str = "R", s_label: str = "S", d_s: int = 1
) -> KrausChannel:
    """Measure in the computational basis and announce the outcome on R.

    S carries a fixed state ``|0⟩`` of dimension ``d_s`` (trivial by default).
    """
    ks = []
    for i in range(d):
        k = np.zeros((d * d_s, d))
        k[i * d_s, i] = 1.0
        ks.append(k)
    return KrausChannel(tuple(ks), [(in_label, d)], [(r_label, d), (s_label, d_s)])


def measure_prepare_channel(
    basis: np.ndarray,
    states: Sequence[np.ndarray],
    in_label: str = "Q",
    out_factors=(("S", 2),),
) -> KrausChannel:
    """Measure in the orthonormal ``basis`` columns, prepare ``states[i]``."""
    ks = []
    for i, st in enumerate(states):
        w, v = np.linalg.eigh(hermitian_part(np.asarray(st, dtype=complex)))
        for lam, vec in zip(w, v.T):
            if lam > 1e-14:
                ks.append(np.sqrt(lam) * np.outer(vec, basis[:, i].conj()))
    d = basis.shape[0]
    return KrausChannel(tuple(ks), [(in_label, d)], out_factors)


def embed_channel(phi: KrausChannel, out_factors) -> KrausChannel:
    """Re-declare the output factorization of ``phi`` (same total dimension)."""
    return KrausChannel(phi.kraus, phi.in_factors, out_factors, phi.trace_preserving)


# ---------------------------------------------------------------- random sampling


class RandomKind(str, Enum):
    GINIBRE_STATE = "ginibre_state"
    HAAR_STINESPRING_CHANNEL = "haar_stinespring_channel"
    CLASSICAL_DISTRIBUTION = "classical_distribution"


@dataclass(frozen=True)
class RandomSpec:
    """Reproducible sampling request.

    ``dims`` meaning by kind: ``ginibre_state`` - the state factors (and an
    optional ``rank``); ``haar_stinespring_channel`` - ``in``, ``out`` factor
    lists and ``env`` dimension; ``classical_distribution`` - ``n`` outcomes.
    """

    seed: int
    kind: RandomKind
    dims: dict = field(default_factory=dict)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def ginibre(rng, n: int, m: int | None = None) -> np.ndarray:
    m = n if m is None else m
    return (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / np.sqrt(2)


def random_state(rng, factors, rank: int | None = None) -> DensityOperator:
    rng = _rng(rng)
    f = _as_factors(factors)
    n = int(np.prod(_dims(f))) if f else 1
    g = ginibre(rng, n, rank or n)
    m = g @ g.conj().T
    m = hermitian_part(m / np.trace(m).real)
    return DensityOperator(LabeledOperator(m, f))


def random_pure_state(rng, factors) -> DensityOperator:
    return random_state(rng, factors, rank=1)


def random_channel(rng, in_factors, out_factors, env: int = 2) -> KrausChannel:
    """Haar-Stinespring channel: QR-orthonormalized Gaussian isometry, sliced."""
    rng = _rng(rng)
    fi, fo = _as_factors(in_factors), _as_factors(out_factors)
    d_in = int(np.prod(_dims(fi))) if fi else 1
    d_out = int(np.prod(_dims(fo))) if fo else 1
    if d_out * env < d_in:
        raise DimensionError("environment too small for an isometry")
    g = ginibre(rng, d_out * env, d_in)
    v, r = np.linalg.qr(g)
    v = v * (np.diag(r) / np.abs(np.diag(r)))  # fix phases so V is Haar distributed
    v = v.reshape(d_out, env, d_in)
    ks = tuple(np.ascontiguousarray(v[:, e, :]) for e in range(env))
    return KrausChannel(ks, fi, fo)


def random_unitary(rng, d: int) -> np.ndarray:
    rng = _rng(rng)
    q, r = np.linalg.qr(ginibre(rng, d))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_distribution(rng, n: int) -> np.ndarray:
    rng = _rng(rng)
    w = rng.exponential(size=n)
    return w / w.sum()


def sample(spec: RandomSpec):
    """Draw the object described by ``spec``; identical seeds give identical output."""
    rng = np.random.default_rng(spec.seed)
    kind = RandomKind(spec.kind)
    d = dict(spec.dims)
    if kind is RandomKind.GINIBRE_STATE:
        return random_state(rng, d.get("factors", [("A", 2)]), d.get("rank"))
    if kind is RandomKind.HAAR_STINESPRING_CHANNEL:
        return random_channel(
            rng, d.get("in", [("Q", 2)]), d.get("out", [("S", 2)]), int(d.get("env", 2))
        )
    return random_distribution(rng, int(d.get("n", 2)))


# ---------------------------------------------------------------- JSON helpers


def save_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj.to_json(), fh)
