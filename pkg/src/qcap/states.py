"""Density matrices, POVMs, CPTP channels in Kraus form and named channel families."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    BadParameter,
    DimensionMismatch,
    DimensionOverflow,
    ElementsExceedIdentity,
    InvalidPovm,
    NotCompletelyPositive,
    NotDensityMatrix,
    NotTracePreserving,
)
from .linalg import MAX_DIM, as_matrix, eig_hermitian, hermitian_part, min_eigenvalue

DENSITY_TOL = 1e-10
POVM_TOL = 1e-9
CHANNEL_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def as_density(rho, tol: float = DENSITY_TOL) -> np.ndarray:
    """Validate ``rho`` as a density matrix and return a read-only Hermitian copy."""
    m = as_matrix(rho)
    if np.max(np.abs(m - m.conj().T)) > tol:
        raise NotDensityMatrix("density matrix is not Hermitian")
    m = hermitian_part(m)
    tr = np.trace(m).real
    if abs(tr - 1.0) > tol:
        raise NotDensityMatrix(f"density matrix has trace {tr!r}")
    lam = min_eigenvalue(m)
    if lam < -tol:
        raise NotDensityMatrix(f"density matrix has negative eigenvalue {lam:.3g}")
    return _frozen(m)


def is_density(rho, tol: float = DENSITY_TOL) -> bool:
    try:
        as_density(rho, tol)
    except (NotDensityMatrix, ValueError):
        return False
    return True


def pure_state(ket) -> np.ndarray:
    v = np.asarray(ket, dtype=complex).ravel()
    v = v / np.linalg.norm(v)
    return _frozen(np.outer(v, v.conj()))


def basis_state(d: int, i: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[i] = 1.0
    return pure_state(v)


def maximally_mixed(d: int) -> np.ndarray:
    return _frozen(np.eye(d) / d)


@dataclass(frozen=True)
class Povm:
    """Positive operator-valued measure; element ``i`` is outcome ``i``."""

    elements: tuple

    def __post_init__(self):
        elems = tuple(_frozen(as_matrix(e)) for e in self.elements)
        if not elems:
            raise InvalidPovm("a POVM needs at least one element")
        d = elems[0].shape[0]
        if any(e.shape != (d, d) for e in elems):
            raise InvalidPovm("POVM elements have inconsistent shapes")
        eye = np.eye(d)
        for i, e in enumerate(elems):
            if np.max(np.abs(e - e.conj().T)) > POVM_TOL:
                raise InvalidPovm(f"element {i} is not Hermitian")
            if min_eigenvalue(e) < -POVM_TOL or min_eigenvalue(eye - e) < -POVM_TOL:
                raise InvalidPovm(f"element {i} is not between 0 and I")
        dev = np.max(np.abs(sum(elems) - eye))
        if dev > POVM_TOL:
            raise InvalidPovm(f"POVM elements sum to I only within {dev:.3g}")
        object.__setattr__(self, "elements", elems)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self) -> int:
        return len(self.elements)

    def probabilities(self, rho) -> np.ndarray:
        return np.array([np.real(np.trace(e @ rho)) for e in self.elements])


def complete_povm(partial: Sequence, dim: int | None = None) -> Povm:
    """Append the erasure element ``I - sum(partial)`` and validate.

    ``dim`` is required only when ``partial`` is empty.
    """
    partial = [as_matrix(e) for e in partial]
    if not partial:
        if dim is None:
            raise BadParameter("dim is required to complete an empty POVM")
        return Povm((np.eye(dim, dtype=complex),))
    d = partial[0].shape[0]
    if dim is not None and dim != d:
        raise DimensionMismatch(f"elements have dim {d}, expected {dim}")
    rest = np.eye(d) - sum(partial)
    rest = hermitian_part(rest)
    lam = min_eigenvalue(rest)
    if lam < -POVM_TOL:
        raise ElementsExceedIdentity(f"elements sum above identity (min eig of I - sum = {lam:.3g})")
    if lam < 0:
        # clip round-off so the erasure element stays PSD
        w, u = np.linalg.eigh(rest)
        rest = (u * np.clip(w, 0.0, None)) @ u.conj().T
    return Povm(tuple(partial) + (rest,))


@dataclass(frozen=True)
class QuantumChannel:
    """CPTP map ``rho -> sum_k K rho K^H`` given by Kraus operators (``dim_out x dim_in``)."""

    kraus: tuple
    dim_in: int
    dim_out: int
    name: str = field(default="", compare=False)

    def __call__(self, rho) -> np.ndarray:
        return apply_channel(self, rho)

    def adjoint(self, x) -> np.ndarray:
        """Heisenberg-picture action ``sum_k K^H x K``."""
        x = np.asarray(x)
        return sum(k.conj().T @ x @ k for k in self.kraus)

    def choi(self) -> np.ndarray:
        return choi_matrix(self.kraus, self.dim_in)

    def stacked(self) -> np.ndarray:
        """Kraus operators as one ``(K, dim_out, dim_in)`` array."""
        return np.stack(self.kraus)


def choi_matrix(kraus: Sequence[np.ndarray], dim_in: int) -> np.ndarray:
    """Unnormalized Choi matrix ``sum_ij |i><j| (x) N(|i><j|)``."""
    dim_out = kraus[0].shape[0]
    c = np.zeros((dim_in * dim_out, dim_in * dim_out), dtype=complex)
    for k in kraus:
        # vec of K in column order: |Omega> = sum_i |i>|K i>
        v = np.concatenate([k[:, i] for i in range(dim_in)])
        c += np.outer(v, v.conj())
    return c


def validate_channel(kraus: Sequence, tol: float = CHANNEL_TOL, name: str = "") -> QuantumChannel:
    """Build a :class:`QuantumChannel` after checking trace preservation and complete positivity.

    Raises:
        NotTracePreserving: if ``sum K^H K`` differs from the identity by more than ``tol``.
        NotCompletelyPositive: if the Choi matrix has an eigenvalue below ``-tol``.
    """
    ks = [np.asarray(k, dtype=complex) for k in kraus]
    if not ks:
        raise BadParameter("empty Kraus list")
    if any(k.ndim != 2 for k in ks) or len({k.shape for k in ks}) != 1:
        raise DimensionMismatch("Kraus operators must be matrices of one common shape")
    if not all(np.all(np.isfinite(k)) for k in ks):
        raise BadParameter("Kraus operators contain non-finite entries")
    dim_out, dim_in = ks[0].shape
    s = sum(k.conj().T @ k for k in ks)
    dev = np.max(np.abs(s - np.eye(dim_in)))
    if dev > tol:
        raise NotTracePreserving(f"sum K^H K deviates from I by {dev:.3g}")
    lam = min_eigenvalue(choi_matrix(ks, dim_in))
    if lam < -tol:
        raise NotCompletelyPositive(f"Choi matrix has eigenvalue {lam:.3g}", lam)
    return QuantumChannel(tuple(_frozen(k) for k in ks), dim_in, dim_out, name)


def apply_channel(ch: QuantumChannel, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (ch.dim_in, ch.dim_in):
        raise DimensionMismatch(f"state has shape {rho.shape}, channel expects dim {ch.dim_in}")
    k = ch.stacked()
    out = np.einsum("kij,jl,kml->im", k, rho, k.conj())
    return hermitian_part(out)


def apply_channel_slotwise(ch: QuantumChannel, rho, n: int) -> np.ndarray:
    """Apply ``ch`` to every one of the ``n`` tensor slots of ``rho``.

    Equivalent to ``channel_tensor_power(ch, n)(rho)`` without materializing
    ``K**n`` Kraus operators.
    """
    rho = np.asarray(rho, dtype=complex)
    din, dout = ch.dim_in, ch.dim_out
    if rho.shape != (din**n, din**n):
        raise DimensionMismatch(f"state has shape {rho.shape}, expected {din ** n}-dim")
    if dout**n > MAX_DIM:
        raise DimensionOverflow(f"output dimension {dout ** n} exceeds cap {MAX_DIM}")
    k = ch.stacked()
    t = rho.reshape([din] * (2 * n))
    for slot in range(n):
        # move slot's row/col axes to the front, act, and move back
        t = np.moveaxis(t, [slot, n + slot], [0, 1])
        t = np.einsum("kij,jl...,kml->im...", k, t, k.conj())
        t = np.moveaxis(t, [0, 1], [slot, n + slot])
    d = dout**n
    return hermitian_part(t.reshape(d, d))


def channel_tensor_power(ch: QuantumChannel, k: int, max_dim: int = MAX_DIM) -> QuantumChannel:
    """Explicit Kraus form of ``ch`` tensored ``k`` times (re-validated)."""
    if k < 1:
        raise BadParameter("tensor power must be positive")
    if ch.dim_out**k > max_dim or ch.dim_in**k > max_dim:
        raise DimensionOverflow(f"dimension {max(ch.dim_in, ch.dim_out) ** k} exceeds cap {max_dim}")
    if k == 1:
        return ch
    ops = []
    for combo in itertools.product(ch.kraus, repeat=k):
        op = combo[0]
        for c in combo[1:]:
            op = np.kron(op, c)
        ops.append(op)
    name = f"{ch.name}^{k}" if ch.name else ""
    return validate_channel(ops, name=name)


def weyl_operators(d: int) -> list:
    """The ``d**2`` generalized Pauli unitaries ``X^a Z^b``."""
    omega = np.exp(2j * np.pi / d)
    x = np.roll(np.eye(d), 1, axis=0)
    z = np.diag(omega ** np.arange(d))
    return [np.linalg.matrix_power(x, a) @ np.linalg.matrix_power(z, b) for a in range(d) for b in range(d)]


def depolarizing(d: int, p: float) -> QuantumChannel:
    """``rho -> (1 - p) rho + p Tr(rho) I / d``."""
    if d < 1 or not 0.0 <= p <= 1.0:
        raise BadParameter(f"depolarizing needs d >= 1 and 0 <= p <= 1, got d={d}, p={p}")
    ops = [np.sqrt(1.0 - p) * np.eye(d)]
    if p > 0:
        ops += [np.sqrt(p) / d * w for w in weyl_operators(d)]
    return validate_channel(ops, name=f"depolarizing(d={d},p={p})")


def identity_channel(d: int) -> QuantumChannel:
    return validate_channel([np.eye(d)], name=f"identity({d})")


def _spectral_kets(m: np.ndarray):
    es = eig_hermitian(m, 1e-9)
    for w, v in zip(es.eigenvalues, es.eigenvectors.T):
        if w > 1e-14:
            yield float(w), v


def entanglement_breaking(povm: Povm | Sequence, prep_states: Sequence) -> QuantumChannel:
    """Measure-and-prepare map ``rho -> sum_x Tr(E_x rho) sigma_x``."""
    if not isinstance(povm, Povm):
        try:
            povm = Povm(tuple(povm))
        except InvalidPovm as exc:
            raise BadParameter(f"invalid POVM: {exc}") from None
    try:
        preps = [as_density(s) for s in prep_states]
    except NotDensityMatrix as exc:
        raise BadParameter(f"invalid preparation state: {exc}") from None
    if len(preps) != len(povm):
        raise BadParameter("one preparation state per POVM outcome is required")
    ops = []
    for e, s in zip(povm.elements, preps):
        for lam, a in _spectral_kets(e):
            for mu, b in _spectral_kets(s):
                ops.append(np.sqrt(lam * mu) * np.outer(b, a.conj()))
    return validate_channel(ops, name="entanglement-breaking")


def cq_channel(signal_states: Sequence, povm: Povm | Sequence | None = None) -> QuantumChannel:
    """Classical-quantum channel: measure the input (computational basis by
    default) and emit the matching signal state."""
    if povm is None:
        d = len(signal_states)
        povm = Povm(tuple(basis_state(d, i) for i in range(d)))
    ch = entanglement_breaking(povm, signal_states)
    return QuantumChannel(ch.kraus, ch.dim_in, ch.dim_out, "cq")


def constant_channel(sigma, dim_in: int | None = None) -> QuantumChannel:
    """Replacement channel ``rho -> Tr(rho) sigma``."""
    try:
        s = as_density(sigma)
    except NotDensityMatrix as exc:
        raise BadParameter(f"invalid output state: {exc}") from None
    din = s.shape[0] if dim_in is None else int(dim_in)
    ops = []
    for mu, b in _spectral_kets(s):
        for j in range(din):
            ej = np.zeros(din)
            ej[j] = 1.0
            ops.append(np.sqrt(mu) * np.outer(b, ej))
    return validate_channel(ops, name="constant")


def make_standard_channel(family: str, **params) -> QuantumChannel:
    """Factory for the named families: ``depolarizing``, ``cq``,
    ``entanglement_breaking``, ``constant`` and ``identity``."""
    if family == "depolarizing":
        return depolarizing(int(params["d"]), float(params["p"]))
    if family == "cq":
        return cq_channel(params["signal_states"], params.get("povm"))
    if family in ("entanglement_breaking", "entanglement-breaking"):
        return entanglement_breaking(params["povm"], params["prep_states"])
    if family == "constant":
        return constant_channel(params["sigma"], params.get("dim_in"))
    if family == "identity":
        return identity_channel(int(params["d"]))
    raise BadParameter(f"unknown channel family {family!r}")


@dataclass(frozen=True)
class Ensemble:
    """Finite ensemble of states with a probability vector."""

    probs: tuple
    states: tuple

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float).ravel()
        if len(probs) < 1 or len(probs) != len(self.states):
            raise BadParameter("ensemble needs matching, non-empty probs and states")
        if np.any(probs < -DENSITY_TOL) or abs(probs.sum() - 1.0) > DENSITY_TOL:
            raise BadParameter(f"ensemble probabilities must be a distribution (sum={probs.sum()!r})")
        probs = np.clip(probs, 0.0, None)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "states", tuple(as_density(s) for s in self.states))

    def __len__(self) -> int:
        return len(self.probs)

    def average(self) -> np.ndarray:
        return sum(p * s for p, s in zip(self.probs, self.states))


# ---------------------------------------------------------------------------
# random sampling


def random_pure_ket(d: int, rng: np.random.Generator) -> np.ndarray:
    """Unit vector drawn from the unitarily invariant measure."""
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_pure_kets(count: int, d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal((count, d)) + 1j * rng.standard_normal((count, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Hilbert-Schmidt (``rank = d``) or induced-measure random density matrix."""
    r = d if rank is None else rank
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    m = g @ g.conj().T
    return _frozen(hermitian_part(m / np.trace(m).real))


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_channel(d_in: int, d_out: int, n_kraus: int, rng: np.random.Generator) -> QuantumChannel:
    """Channel from a random isometry ``C^d_in -> C^(n_kraus d_out)``."""
    if n_kraus * d_out < d_in:
        raise BadParameter(f"{n_kraus} Kraus operators of shape {d_out}x{d_in} cannot be trace preserving")
    z = rng.standard_normal((n_kraus * d_out, d_in)) + 1j * rng.standard_normal((n_kraus * d_out, d_in))
    q, _ = np.linalg.qr(z)
    ops = [q[i * d_out : (i + 1) * d_out, :] for i in range(n_kraus)]
    return validate_channel(ops, name="random")


def random_povm(d: int, outcomes: int, rng: np.random.Generator) -> Povm:
    """POVM ``S^{-1/2} G_i S^{-1/2}`` from random positive ``G_i``."""
    gs = []
    for _ in range(outcomes):
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        gs.append(a @ a.conj().T)
    s = sum(gs)
    w, u = np.linalg.eigh(s)
    inv_sqrt = (u / np.sqrt(w)) @ u.conj().T
    return Povm(tuple(hermitian_part(inv_sqrt @ g @ inv_sqrt) for g in gs))


# ---------------------------------------------------------------------------
# serialization


def channel_to_json(ch: QuantumChannel) -> dict:
    from .linalg import matrix_to_json

    def rect(k):
        return {"rows": k.shape[0], "cols": k.shape[1],
                "entries": [[float(z.real), float(z.imag)] for z in k.ravel()]}

    return {"dim_in": ch.dim_in, "dim_out": ch.dim_out,
            "kraus": [matrix_to_json(k) if k.shape[0] == k.shape[1] else rect(k) for k in ch.kraus]}


def _kraus_from_json(obj) -> np.ndarray:
    from .linalg import matrix_from_json

    if "rows" in obj:
        r, c = int(obj["rows"]), int(obj["cols"])
        arr = np.array([complex(float(a), float(b)) for a, b in obj["entries"]]).reshape(r, c)
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite Kraus entries")
        return arr
    return matrix_from_json(obj)


def channel_from_json(obj) -> QuantumChannel:
    """Parse a channel file (explicit Kraus list or named-family shorthand)."""
    from .linalg import matrix_from_json

    if "family" in obj:
        params = {k: v for k, v in obj.items() if k != "family"}
        for key in ("sigma",):
            if key in params:
                params[key] = matrix_from_json(params[key])
        for key in ("signal_states", "prep_states", "povm"):
            if key in params and params[key] is not None:
                params[key] = [matrix_from_json(m) for m in params[key]]
        return make_standard_channel(obj["family"], **params)
    ch = validate_channel([_kraus_from_json(k) for k in obj["kraus"]])
    if "dim_in" in obj and int(obj["dim_in"]) != ch.dim_in or "dim_out" in obj and int(obj["dim_out"]) != ch.dim_out:
        raise DimensionMismatch("declared channel dimensions disagree with the Kraus operators")
    return ch
