"""Classical codes over quantum channels: construction, decoding, evaluation."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    BadParameter,
    DimensionMismatch,
    DimensionOverflow,
    EnumerationTooLarge,
)
from .linalg import MAX_DIM, hermitian_part, kernel_mask, matrix_from_json, matrix_to_json, tensor_all
from .states import (
    Ensemble,
    Povm,
    QuantumChannel,
    apply_channel,
    apply_channel_slotwise,
    as_density,
    complete_povm,
)

ENCODER_KINDS = ("deterministic-block", "deterministic-general", "stochastic-averaged")
ENUMERATION_CAP = 10**6


@dataclass(frozen=True)
class ClassicalQuantumCode:
    """An ``(n, M)`` code: one codeword per message plus a decoding POVM.

    Block codewords are tuples of ``n`` single-slot density matrices; general
    codewords are single density matrices on the ``n``-fold input space.
    Decoder element ``m`` decodes message ``m``; surplus elements are erasures.
    """

    n: int
    codewords: tuple
    decoder: Povm
    encoder_kind: str = "deterministic-block"

    def __post_init__(self):
        if self.encoder_kind not in ENCODER_KINDS:
            raise BadParameter(f"unknown encoder kind {self.encoder_kind!r}")
        if self.n < 1 or len(self.codewords) < 1:
            raise BadParameter("a code needs n >= 1 and at least one codeword")
        if self.encoder_kind == "deterministic-block":
            words = []
            for w in self.codewords:
                if isinstance(w, np.ndarray) and w.ndim == 2:
                    raise BadParameter("block codewords must list one state per slot")
                slots = tuple(as_density(s) for s in w)
                if len(slots) != self.n:
                    raise BadParameter(f"block codeword has {len(slots)} slots, expected {self.n}")
                words.append(slots)
            dims = {s.shape[0] for w in words for s in w}
            if len(dims) != 1:
                raise DimensionMismatch("block codeword slots have different dimensions")
        else:
            words = [as_density(w) for w in self.codewords]
            if len({w.shape for w in words}) != 1:
                raise DimensionMismatch("codewords have different dimensions")
        if len(self.decoder) < len(words):
            raise BadParameter(f"decoder has {len(self.decoder)} elements for {len(words)} messages")
        object.__setattr__(self, "codewords", tuple(words))

    @property
    def M(self) -> int:
        return len(self.codewords)

    @property
    def is_block(self) -> bool:
        return self.encoder_kind == "deterministic-block"

    @property
    def slot_dim(self) -> int:
        if self.is_block:
            return self.codewords[0][0].shape[0]
        return round(self.codewords[0].shape[0] ** (1.0 / self.n))

    def codeword_state(self, m: int) -> np.ndarray:
        w = self.codewords[m]
        return tensor_all(w) if self.is_block else w


@dataclass(frozen=True)
class CodePerformance:
    max_error: float
    avg_error: float
    per_message: tuple


def _check_channel(code: ClassicalQuantumCode, ch: QuantumChannel) -> None:
    if code.slot_dim != ch.dim_in:
        raise DimensionMismatch(f"codeword slots have dim {code.slot_dim}, channel input is {ch.dim_in}")
    if ch.dim_out**code.n > MAX_DIM:
        raise DimensionOverflow(f"output dimension {ch.dim_out ** code.n} exceeds cap {MAX_DIM}")
    if code.decoder.dim != ch.dim_out**code.n:
        raise DimensionMismatch(f"decoder acts on dim {code.decoder.dim}, outputs have dim {ch.dim_out ** code.n}")


def output_slots(code: ClassicalQuantumCode, ch: QuantumChannel) -> list:
    """Per-slot channel outputs ``[[N(rho_m1), ..., N(rho_mn)], ...]`` of a block code."""
    if not code.is_block:
        raise BadParameter("per-slot outputs exist only for block codes")
    return [[apply_channel(ch, s) for s in w] for w in code.codewords]


def output_states(code: ClassicalQuantumCode, ch: QuantumChannel) -> list:
    """``N^(x)n(rho_m)`` for every message."""
    _check_channel(code, ch)
    if code.is_block:
        return [tensor_all(slots) for slots in output_slots(code, ch)]
    return [apply_channel_slotwise(ch, w, code.n) for w in code.codewords]


def random_codebook(ch: QuantumChannel, ensemble: Ensemble, blocklength: int, M: int, seed=0) -> list:
    """``M`` block codewords whose slots are i.i.d. draws from ``ensemble``."""
    if M < 1 or blocklength < 1:
        raise BadParameter("need M >= 1 and blocklength >= 1")
    if ch.dim_out**blocklength > MAX_DIM:
        raise DimensionOverflow(f"output dimension {ch.dim_out ** blocklength} exceeds cap {MAX_DIM}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(ensemble), size=(M, blocklength), p=ensemble.probs)
    return [tuple(ensemble.states[i] for i in row) for row in idx]


def pgm_decoder(output_states: Sequence[np.ndarray], priors: Sequence[float] | None = None) -> Povm:
    """Pretty good measurement ``S^-1/2 p_m rho_m S^-1/2`` with ``S = sum_m p_m rho_m``.

    The inverse square root is taken on ``supp(S)``; the complement becomes
    an erasure element.
    """
    states = [np.asarray(s, dtype=complex) for s in output_states]
    if not states:
        raise BadParameter("no output states")
    if len({s.shape for s in states}) != 1:
        raise DimensionMismatch("output states have different dimensions")
    priors = np.full(len(states), 1.0 / len(states)) if priors is None else np.asarray(priors, dtype=float)
    if len(priors) != len(states) or np.any(priors < 0) or abs(priors.sum() - 1.0) > 1e-10:
        raise BadParameter("priors must be a probability vector matching the states")
    s = hermitian_part(sum(p * r for p, r in zip(priors, states)))
    w, u = np.linalg.eigh(s)
    kern = kernel_mask(w) | (w <= 0)
    inv_sqrt = np.where(kern, 0.0, 1.0 / np.sqrt(np.where(kern, 1.0, w)))
    s_inv = (u * inv_sqrt) @ u.conj().T
    elements = [hermitian_part(s_inv @ (p * r) @ s_inv) for p, r in zip(priors, states)]
    # the elements sum to the support projector of S; trim round-off above I
    total = sum(elements)
    excess = np.linalg.eigvalsh(total)[-1]
    if excess > 1.0:
        elements = [e / excess for e in elements]
    return complete_povm(elements)


def evaluate_code(code: ClassicalQuantumCode, ch: QuantumChannel) -> CodePerformance:
    """Per-message errors ``1 - Tr(N^(x)n(rho_m) E_m)`` and their max / mean."""
    outs = output_states(code, ch)
    errs = []
    for m, o in enumerate(outs):
        succ = float(np.real(np.sum(o * code.decoder.elements[m].T)))
        errs.append(min(max(1.0 - succ, 0.0), 1.0))
    return CodePerformance(max(errs), float(np.mean(errs)), tuple(errs))


def induced_output_state(code: ClassicalQuantumCode, ch: QuantumChannel) -> np.ndarray:
    """Uniform average of the channel outputs of all codewords."""
    outs = output_states(code, ch)
    return hermitian_part(sum(outs) / len(outs))


def make_code(codewords, ch: QuantumChannel, decoder: Povm | None = None,
              encoder_kind: str = "deterministic-block") -> ClassicalQuantumCode:
    """Build a code, defaulting to the PGM decoder for the channel outputs."""
    codewords = list(codewords)
    n = _blocklength(codewords, encoder_kind, ch)
    if decoder is None:
        if encoder_kind == "deterministic-block":
            outs = [tensor_all([apply_channel(ch, as_density(s)) for s in w]) for w in codewords]
        else:
            outs = [apply_channel_slotwise(ch, as_density(w), n) for w in codewords]
        decoder = pgm_decoder(outs)
    return ClassicalQuantumCode(n, tuple(codewords), decoder, encoder_kind)


def _blocklength(codewords, kind, ch) -> int:
    if kind == "deterministic-block":
        return len(codewords[0])
    d = np.asarray(codewords[0]).shape[0]
    n = round(math.log(d) / math.log(ch.dim_in)) if ch.dim_in > 1 else 1
    if ch.dim_in**n != d:
        raise DimensionMismatch(f"codeword dim {d} is not a power of the input dim {ch.dim_in}")
    return n


def stochastic_code(encoders: Sequence[Sequence[tuple]], decoder: Povm, n: int) -> ClassicalQuantumCode:
    """Code whose message ``m`` sends ``rho_a`` with probability ``p(a|m)``.

    Stored pre-averaged: codeword ``m`` is ``sum_a p(a|m) rho_a``.
    """
    words = []
    for mixture in encoders:
        probs = np.array([p for p, _ in mixture], dtype=float)
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-10:
            raise BadParameter("encoder probabilities must form a distribution")
        words.append(sum(p * np.asarray(s, dtype=complex) for p, s in mixture))
    return ClassicalQuantumCode(n, tuple(words), decoder, "stochastic-averaged")


def good_code_surrogate(ch: QuantumChannel, ensemble: Ensemble, chi: float, n: int, rate: float,
                        seed=0) -> ClassicalQuantumCode:
    """Random codebook at ``M = round(exp(rate * n * chi))`` with PGM decoding."""
    M = max(1, int(round(math.exp(rate * n * chi))))
    words = random_codebook(ch, ensemble, n, M, seed)
    return make_code(words, ch)


def enumerate_tiny_codes(
    symbol_set: Sequence[np.ndarray],
    blocklength: int,
    M: int,
    decoder_family: str = "pgm",
    channel: QuantumChannel | None = None,
    cap: int = ENUMERATION_CAP,
) -> Iterator[ClassicalQuantumCode]:
    """Yield every deterministic block code with slots drawn from ``symbol_set``.

    ``decoder_family="pgm"`` pairs each codebook with its PGM decoder for the
    channel outputs; ``"all-projective-from-basis"`` pairs it with every
    assignment of computational-basis projectors of the output space to
    messages.
    """
    symbols = [as_density(s) for s in symbol_set]
    if channel is None:
        from .states import identity_channel

        channel = identity_channel(symbols[0].shape[0])
    n_codebooks = len(symbols) ** (blocklength * M)
    if decoder_family == "pgm":
        total = n_codebooks
    elif decoder_family == "all-projective-from-basis":
        total = n_codebooks * M ** (channel.dim_out**blocklength)
    else:
        raise BadParameter(f"unknown decoder family {decoder_family!r}")
    if total > cap:
        raise EnumerationTooLarge(f"{total} codes exceed the enumeration cap {cap}")
    for assignment in itertools.product(range(len(symbols)), repeat=blocklength * M):
        words = [tuple(symbols[assignment[m * blocklength + i]] for i in range(blocklength)) for m in range(M)]
        if decoder_family == "pgm":
            yield make_code(words, channel)
        else:
            for povm in basis_projective_decoders(channel.dim_out**blocklength, M):
                yield ClassicalQuantumCode(blocklength, tuple(words), povm)


def basis_projective_decoders(dim: int, M: int) -> Iterator[Povm]:
    """Every POVM that assigns each computational-basis projector to one of ``M`` messages."""
    for labels in itertools.product(range(M), repeat=dim):
        elems = [np.diag((np.array(labels) == m).astype(float)).astype(complex) for m in range(M)]
        yield Povm(tuple(elems))


def basis_labelings(dim: int, M: int) -> np.ndarray:
    """All ``M**dim`` maps from basis index to message, one per row."""
    grids = np.indices((M,) * dim).reshape(dim, -1).T
    return grids


def projective_decoder_errors(output_states: Sequence[np.ndarray], labelings: np.ndarray | None = None) -> np.ndarray:
    """Per-message errors of every basis-projective decoder at once.

    Returns an array of shape ``(len(labelings), M)``.
    """
    outs = np.array([np.real(np.diag(o)) for o in output_states])
    M, dim = outs.shape
    if labelings is None:
        labelings = basis_labelings(dim, M)
    onehot = labelings[:, None, :] == np.arange(M)[None, :, None]
    success = np.einsum("lmb,mb->lm", onehot, outs)
    return np.clip(1.0 - success, 0.0, 1.0)


# ---------------------------------------------------------------------------
# serialization


def code_to_json(code: ClassicalQuantumCode) -> dict:
    if code.is_block:
        words = [[matrix_to_json(s) for s in w] for w in code.codewords]
    else:
        words = [[matrix_to_json(w)] for w in code.codewords]
    return {"n": code.n, "codewords": words,
            "decoder": [matrix_to_json(e) for e in code.decoder.elements], "kind": code.encoder_kind}


def code_from_json(obj: dict) -> ClassicalQuantumCode:
    kind = obj.get("kind", "deterministic-block")
    decoder = Povm(tuple(matrix_from_json(e) for e in obj["decoder"]))
    if kind == "deterministic-block":
        words = tuple(tuple(matrix_from_json(s) for s in w) for w in obj["codewords"])
    else:
        words = tuple(matrix_from_json(w[0] if isinstance(w, list) else w) for w in obj["codewords"])
    return ClassicalQuantumCode(int(obj["n"]), words, decoder, kind)
