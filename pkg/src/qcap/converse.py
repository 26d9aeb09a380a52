"""Converse bounds for classical codes over quantum channels.

Every check returns a :class:`BoundReport` describing one inequality
``lhs <= rhs`` evaluated on a concrete code. All quantities are in nats.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .capacity import CapacityResult
from .codes import (
    ClassicalQuantumCode,
    enumerate_tiny_codes,
    evaluate_code,
    output_slots,
    output_states,
    projective_decoder_errors,
)
from .entropy import (
    cq_mutual_information,
    measured_renyi_divergence,
    petz_renyi_divergence,
    relative_entropies,
    relative_entropy,
    variational_renyi_objective,
    weighted_lp_norm,
    weighted_lp_norm_inverse_form,
)
from .errors import (
    DimensionMismatch,
    NotBlockCode,
    ParameterOutOfRange,
    SingularElement,
)
from .linalg import hermitian_part, min_eigenvalue, tensor_all
from .states import Povm, QuantumChannel

DEFAULT_TOL = 1e-8
EPSILON_ONE = 1.0 - 1e-12
#: order used to sample the ``alpha -> 0`` limit of the Petz divergence
LIMIT_ALPHA = 1e-3
LIMIT_TOL = 1e-4
#: Violation size (nats) for a sign-flipped failure to be logged as an example.
EXAMPLE_MARGIN = 1e-2


def _jsonable(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    return x


@dataclass
class BoundReport:
    """One evaluated inequality ``lhs <= rhs``."""

    name: str
    lhs: float
    rhs: float
    slack: float
    holds: bool
    components: dict = field(default_factory=dict)

    @classmethod
    def compare(cls, name: str, lhs: float, rhs: float, tol: float = DEFAULT_TOL, **components) -> "BoundReport":
        lhs, rhs = float(lhs), float(rhs)
        if math.isinf(rhs) and rhs > 0 or math.isinf(lhs) and lhs < 0:
            slack = math.inf
        else:
            slack = rhs - lhs
        components["tol"] = tol
        return cls(name, lhs, rhs, slack, bool(slack >= -tol), components)

    def to_json(self) -> dict:
        return _jsonable({"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                          "slack": self.slack, "holds": self.holds, "components": self.components})


def reports_to_csv(reports: Sequence[BoundReport]) -> str:
    """One row per report: name, lhs, rhs, slack, holds."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "lhs", "rhs", "slack", "holds"])
    for r in reports:
        w.writerow([r.name, repr(r.lhs), repr(r.rhs), repr(r.slack), int(r.holds)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# depolarizing-type semigroup maps


@dataclass(frozen=True)
class SemigroupMap:
    """``T -> e^-t T + (1 - e^-t) c(T) I``.

    ``c(T) = Tr(sigma T)`` for kind ``"phi"`` and ``c(T) = Tr(T)`` for kind ``"psi"``.
    """

    kind: str
    t: float
    sigma: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("phi", "psi"):
            raise ValueError(f"unknown semigroup kind {self.kind!r}")
        if not self.t > 0:
            raise ValueError("semigroup time must be positive")
        if self.kind == "phi":
            if self.sigma is None:
                raise ValueError("phi maps need a reference state")
            from .states import as_density

            object.__setattr__(self, "sigma", as_density(self.sigma))

    @classmethod
    def psi(cls, t: float) -> "SemigroupMap":
        return cls("psi", t)

    @classmethod
    def phi(cls, t: float, sigma) -> "SemigroupMap":
        return cls("phi", t, sigma)

    def weight(self, d: int) -> np.ndarray:
        if self.kind == "psi":
            return np.eye(d, dtype=complex)
        if self.sigma.shape[0] != d:
            raise DimensionMismatch(f"reference state has dim {self.sigma.shape[0]}, operator slot has dim {d}")
        return self.sigma


def semigroup_apply(m: SemigroupMap, x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    d = x.shape[0]
    c = np.trace(m.weight(d) @ x)
    e = math.exp(-m.t)
    return e * x + (1.0 - e) * c * np.eye(d)


def semigroup_product_apply(maps: Sequence[SemigroupMap], x, dims: Sequence[int] | None = None) -> np.ndarray:
    """Apply ``maps[0] (x) ... (x) maps[n-1]`` to an operator on the product space."""
    x = np.asarray(x, dtype=complex)
    n = len(maps)
    if dims is None:
        dims = []
        for m in maps:
            dims.append(m.sigma.shape[0] if m.kind == "phi" else None)
        if any(d is None for d in dims):
            known = int(np.prod([d for d in dims if d is not None])) if any(d is not None for d in dims) else 1
            free = sum(d is None for d in dims)
            side = round((x.shape[0] / known) ** (1.0 / free))
            dims = [side if d is None else d for d in dims]
    dims = [int(d) for d in dims]
    if len(dims) != n or int(np.prod(dims)) != x.shape[0]:
        raise DimensionMismatch(f"slot dims {dims} do not factor a {x.shape} operator")
    t = x.reshape(dims + dims)
    for i, m in enumerate(maps):
        w = m.weight(dims[i])
        y = np.moveaxis(t, (i, n + i), (0, 1))
        c = np.einsum("ba,ab...->...", w, y)
        e = math.exp(-m.t)
        y = e * y + (1.0 - e) * np.einsum("ab,...->ab...", np.eye(dims[i]), c)
        t = np.moveaxis(y, (0, 1), (i, n + i))
    return t.reshape(x.shape)


def psi_identity_closed_form(d: int, n: int, t: float) -> float:
    """Scalar ``(e^-t + d (1 - e^-t))^n`` with ``Psi_t^(x)n(I) = scalar * I``."""
    e = math.exp(-t)
    return (e + d * (1.0 - e)) ** n


# ---------------------------------------------------------------------------
# shared helpers


def _error_terms(eps: float, n: int, d_out: int) -> tuple[float, float]:
    """``(L, 2 sqrt(n (d-1) L))`` with ``L = ln(1/(1-eps))``."""
    L = -math.log1p(-eps) if eps < 1 else math.inf
    return L, 2.0 * math.sqrt(n * (d_out - 1) * L)


def optimal_t(eps: float, n: int, d_out: int) -> float:
    """Minimizer ``sqrt(-ln(1-eps) / (n (d-1)))`` of the second-order trade-off."""
    if eps >= 1:
        return math.inf
    return math.sqrt(-math.log1p(-eps) / (n * (d_out - 1)))


def second_order_rhs(info: float, eps: float, n: int, d_out: int) -> float:
    L, root = _error_terms(eps, n, d_out)
    return info + root + L


def _product_reference(cap: CapacityResult, n: int, chi_n: float | None, omega_bar_n):
    """``(chi(N^n), omega_bar_n)``; tensor powers of the single-letter optimum by default."""
    if omega_bar_n is None:
        omega_bar_n = tensor_all([cap.omega_bar] * n)
    if chi_n is None:
        chi_n = n * cap.chi
    return float(chi_n), np.asarray(omega_bar_n)


def _require_block(code: ClassicalQuantumCode) -> None:
    if not code.is_block:
        raise NotBlockCode(f"second-order bounds need a deterministic block code, got {code.encoder_kind}")


def code_information(outputs: Sequence[np.ndarray]) -> tuple[float, np.ndarray]:
    """``I(M;B^n)`` under uniform messages and the averaged output state."""
    M = len(outputs)
    avg = hermitian_part(sum(outputs) / M)
    return cq_mutual_information(np.full(M, 1.0 / M), outputs), avg


# ---------------------------------------------------------------------------
# Theorem-level checks


def theorem1_check(code: ClassicalQuantumCode, ch: QuantumChannel, cap: CapacityResult,
                   chi_n: float | None = None, omega_bar_n=None, tol: float = DEFAULT_TOL) -> BoundReport:
    """``D(omega_n || omega_bar_n) <= chi(N^n) + ln 2 - (1 - eps_max) ln M``.

    ``omega_n`` is the output state induced by the code. Without explicit
    ``chi_n``/``omega_bar_n`` the channel is treated as additive.
    """
    outs = output_states(code, ch)
    perf = evaluate_code(code, ch)
    chi_n, omega_bar_n = _product_reference(cap, code.n, chi_n, omega_bar_n)
    info, induced = code_information(outs)
    lhs = relative_entropy(induced, omega_bar_n)
    log_m = math.log(code.M)
    rhs = chi_n + math.log(2.0) - (1.0 - perf.max_error) * log_m
    avg_div = float(np.mean(relative_entropies(outs, omega_bar_n)))
    return BoundReport.compare(
        "theorem1", lhs, rhs, tol,
        n=code.n, M=code.M, log_M=log_m, chi=chi_n, eps=perf.max_error, eps_avg=perf.avg_error,
        mutual_information=info,
        fano_gap=info - ((1.0 - perf.max_error) * log_m - math.log(2.0)),
        average_divergence=avg_div,
        golden_residual=avg_div - (float(lhs) + info) if math.isfinite(lhs) else math.nan,
        support_violated=bool(lhs.support_violated),
    )


def second_order_converse_check(code: ClassicalQuantumCode, ch: QuantumChannel,
                                tol: float = DEFAULT_TOL) -> BoundReport:
    """``ln M <= I(M;B^n) + 2 sqrt(n (d_B - 1) ln(1/(1-eps))) + ln(1/(1-eps))``."""
    _require_block(code)
    outs = output_states(code, ch)
    perf = evaluate_code(code, ch)
    info, avg = code_information(outs)
    eps = perf.max_error
    vacuous = eps >= EPSILON_ONE
    rhs = math.inf if vacuous else second_order_rhs(info, eps, code.n, ch.dim_out)
    div_form = float(np.mean(relative_entropies(outs, avg)))
    return BoundReport.compare(
        "theorem2", math.log(code.M), rhs, tol,
        n=code.n, M=code.M, eps=eps, eps_avg=perf.avg_error, d_B=ch.dim_out,
        mutual_information=info, mutual_information_divergence_form=div_form,
        t_star=optimal_t(eps, code.n, ch.dim_out), vacuous=vacuous,
    )


def lemma5_bounds(lhs: float, chi_n: float, log_m: float, eps: float, n: int, d_out: int):
    """Derived and printed right-hand sides of the output-divergence bound."""
    L, root = _error_terms(eps, n, d_out)
    derived = chi_n - log_m + root + L
    printed = chi_n - log_m - L - root
    return derived, printed


def lemma5_check(code: ClassicalQuantumCode, ch: QuantumChannel, cap: CapacityResult,
                 chi_n: float | None = None, omega_bar_n=None, tol: float = DEFAULT_TOL) -> BoundReport:
    """``D(N^n(rho~) || omega_bar_n) <= chi(N^n) - ln M + 2 sqrt(...) + ln(1/(1-eps))``.

    The variant with both correction terms negated is evaluated alongside and
    reported under ``printed_*`` components; it is never asserted.
    """
    _require_block(code)
    outs = output_states(code, ch)
    perf = evaluate_code(code, ch)
    chi_n, omega_bar_n = _product_reference(cap, code.n, chi_n, omega_bar_n)
    _, avg = code_information(outs)
    lhs = relative_entropy(avg, omega_bar_n)
    eps = perf.max_error
    vacuous = eps >= EPSILON_ONE
    derived, printed = lemma5_bounds(float(lhs), chi_n, math.log(code.M), eps, code.n, ch.dim_out)
    if vacuous:
        derived = math.inf
    return BoundReport.compare(
        "lemma5", lhs, derived, tol,
        n=code.n, M=code.M, eps=eps, chi=chi_n, vacuous=vacuous,
        printed_rhs=printed, printed_slack=printed - float(lhs),
        printed_holds=bool(printed - float(lhs) >= -tol),
    )


# ---------------------------------------------------------------------------
# step-by-step verification of the second-order argument


def _hat(alpha: float) -> float:
    return alpha / (alpha - 1.0)


def chain_parameters(alpha: float, t: float) -> tuple[float, float]:
    """``(alpha_hat, q)`` with ``q = 1 + (alpha_hat - 1) e^-t``.

    Raises:
        ParameterOutOfRange: unless ``0 < alpha < 1/2``, ``t > 0`` and ``q > 0``.
    """
    if not 0 < alpha < 0.5:
        raise ParameterOutOfRange(f"alpha={alpha} must lie in (0, 1/2)")
    if not t > 0:
        raise ParameterOutOfRange(f"t={t} must be positive")
    a_hat = _hat(alpha)
    q = 1.0 + (a_hat - 1.0) * math.exp(-t)
    if q <= 0:
        raise ParameterOutOfRange(
            f"q={q:.4g} <= 0 at alpha={alpha}, t={t}; need t > {math.log(1.0 - a_hat):.4g}")
    return a_hat, q


def min_valid_t(alpha: float) -> float:
    """Infimum of the times ``t`` with ``q > 0`` at order ``alpha``."""
    return math.log(1.0 - _hat(alpha))


def regularize_povm(povm: Povm, delta: float) -> Povm:
    """``(1 - delta) E_k + (delta / K) I``; keeps the completeness relation."""
    K = len(povm)
    eye = np.eye(povm.dim, dtype=complex)
    return Povm(tuple((1.0 - delta) * e + (delta / K) * eye for e in povm.elements))


def _pd_power(m: np.ndarray, p: float) -> np.ndarray:
    w, u = np.linalg.eigh(hermitian_part(m))
    return (u * w**p) @ u.conj().T


def _links(values: Sequence[float]) -> list:
    """Slacks of a chain ``values[0] <= values[1] <= ...``."""
    return [float(b - a) for a, b in zip(values[:-1], values[1:])]


def _worst(per_msg: list, key: str = "slack") -> dict:
    return min(per_msg, key=lambda r: r[key])


def proof_chain_verify(code: ClassicalQuantumCode, ch: QuantumChannel, alpha: float, t: float,
                       delta_reg: float = 1e-9, tol: float = DEFAULT_TOL,
                       measured_iters: int = 300) -> list:
    """Evaluate both sides of each inequality in the second-order argument.

    Returns eight reports, one per step:

    1. substituting ``omega = Psi_t(E_m)`` lower-bounds the measured divergence of order ``1 - alpha``
    2. Araki-Lieb-Thirring turns the first term into a weighted norm
    3. ``Psi_t(E) >= Phi_t(E)`` and the induced norm comparison
    4. reverse hypercontractivity ``||Phi_t(E)||_{alpha_hat} >= ||E||_q``
    5. ``||E||_q >= (1 - eps)^(1/q)``
    6. averaged second term ``<= e^((d-1) t n) / M``
    7. measured ``<=`` Petz ``<=`` Umegaki, and the small-``alpha`` limit
    8. ``ln M`` against the assembled bound at ``t`` and at ``t*``

    The decoder is regularized by ``delta_reg`` and every quantity,
    including ``eps``, refers to the regularized decoder.
    """
    _require_block(code)
    a_hat, q = chain_parameters(alpha, t)
    r = -a_hat
    povm = regularize_povm(code.decoder, delta_reg) if delta_reg else code.decoder
    n, M, d = code.n, code.M, ch.dim_out
    slots = output_slots(code, ch)
    outs = [tensor_all(s) for s in slots]
    if povm.dim != outs[0].shape[0]:
        raise DimensionMismatch(f"decoder acts on dim {povm.dim}, outputs have dim {outs[0].shape[0]}")
    tau = hermitian_part(sum(outs) / M)
    success = [float(np.real(np.trace(o @ povm.elements[m]))) for m, o in enumerate(outs)]
    eps = min(max(1.0 - min(success), 0.0), 1.0)
    log1m = math.log1p(-eps) if eps < 1 else -math.inf

    psi = [SemigroupMap.psi(t)] * n
    per = []
    for m in range(M):
        E = povm.elements[m]
        sig = outs[m]
        P = semigroup_product_apply(psi, E, [d] * n)
        F = semigroup_product_apply([SemigroupMap.phi(t, s) for s in slots[m]], E, [d] * n)
        for name, op in (("Psi_t(E)", P), ("Phi_t(E)", F)):
            if min_eigenvalue(op) <= 0:
                raise SingularElement(f"{name} for message {m} is not positive definite; increase delta_reg")
        # step 1
        first = math.log(float(np.real(np.trace(sig @ _pd_power(P, a_hat))))) / a_hat
        second = math.log(float(np.real(np.trace(tau @ P))))
        x_m = first - second
        x_direct = variational_renyi_objective(1.0 - alpha, sig, tau, _pd_power(P, a_hat))
        meas = measured_renyi_divergence(1.0 - alpha, sig, tau, initial=[_pd_power(P, a_hat)],
                                         max_iters=measured_iters, delta=0.0, warn=False)
        # steps 2-5 (log domain)
        norm_p_inv = math.log(weighted_lp_norm_inverse_form(P, r, sig, precise=True))
        norm_f_inv = math.log(weighted_lp_norm_inverse_form(F, r, sig, precise=True))
        norm_e_q = math.log(weighted_lp_norm(E, q, sig, precise=True))
        alt_term = math.log(float(np.real(np.trace(sig @ _pd_power(E, q))))) / q
        lin_term = math.log(max(float(np.real(np.trace(sig @ E))), 1e-300)) / q
        per.append({
            "m": m, "x": x_m, "x_direct": x_direct, "measured": meas.value, "first": first, "second": second,
            "norm_p_inv": norm_p_inv, "norm_f_inv": norm_f_inv, "norm_e_q": norm_e_q,
            "alt_term": alt_term, "lin_term": lin_term,
            "loewner_margin": min_eigenvalue(P - F),
            "tr_tau_p": math.exp(second),
        })

    reports = []
    # (1)
    w = min(per, key=lambda p: p["measured"] - p["x"])
    reports.append(BoundReport.compare(
        "step1_variational_substitution", w["x"], w["measured"], tol, message=w["m"],
        substitution_identity_residual=max(abs(p["x"] - p["x_direct"]) for p in per),
        per_message_slack=[p["measured"] - p["x"] for p in per]))
    # (2)
    w = min(per, key=lambda p: p["first"] - p["norm_p_inv"])
    reports.append(BoundReport.compare(
        "step2_araki_lieb", w["norm_p_inv"], w["first"], tol, message=w["m"],
        per_message_slack=[p["first"] - p["norm_p_inv"] for p in per]))
    # (3)
    w = min(per, key=lambda p: p["norm_p_inv"] - p["norm_f_inv"])
    reports.append(BoundReport.compare(
        "step3_loewner_monotonicity", w["norm_f_inv"], w["norm_p_inv"], tol, message=w["m"],
        loewner_margin=min(p["loewner_margin"] for p in per),
        per_message_slack=[p["norm_p_inv"] - p["norm_f_inv"] for p in per]))
    # (4)
    w = min(per, key=lambda p: p["norm_f_inv"] - p["norm_e_q"])
    reports.append(BoundReport.compare(
        "step4_hypercontractivity", w["norm_e_q"], w["norm_f_inv"], tol, message=w["m"],
        alpha_hat=a_hat, q=q, per_message_slack=[p["norm_f_inv"] - p["norm_e_q"] for p in per]))
    # (5)
    w = min(per, key=lambda p: p["norm_e_q"] - log1m / q)
    links = [_links([log1m / q, p["lin_term"], p["alt_term"], p["norm_e_q"]]) for p in per]
    reports.append(BoundReport.compare(
        "step5_error_criterion", log1m / q, w["norm_e_q"], tol, message=w["m"], eps=eps, q=q,
        min_link_slack=min(min(l) for l in links), links=links[w["m"]]))
    # (6)
    avg_tr = float(np.mean([p["tr_tau_p"] for p in per]))
    scalar = psi_identity_closed_form(d, n, t)
    mid = [math.log(avg_tr), math.log(scalar / M), (d - 1) * t * n - math.log(M)]
    reports.append(BoundReport.compare(
        "step6_second_term", mid[0], mid[-1], tol, links=_links(mid), min_link_slack=min(_links(mid)),
        psi_identity_scalar=scalar,
        jensen_slack=math.log(avg_tr) - float(np.mean([p["second"] for p in per]))))
    # (7)
    avg_meas = float(np.mean([p["measured"] for p in per]))
    petz = [float(petz_renyi_divergence(1.0 - alpha, o, tau)) for o in outs]
    umegaki = [float(v) for v in relative_entropies(outs, tau)]
    petz_limit = [float(petz_renyi_divergence(1.0 - LIMIT_ALPHA, o, tau)) for o in outs]
    avg_petz, info = float(np.mean(petz)), float(np.mean(umegaki))
    limit_gap = info - float(np.mean(petz_limit))
    chain7 = [avg_meas, avg_petz, info]
    reports.append(BoundReport.compare(
        "step7_divergence_order", avg_meas, avg_petz, tol, petz=avg_petz, mutual_information=info,
        links=_links(chain7), min_link_slack=min(_links(chain7)),
        limit_alpha=LIMIT_ALPHA, limit_gap=limit_gap, limit_within_tol=bool(-1e-6 <= limit_gap <= LIMIT_TOL)))
    # (8)
    log_m = math.log(M)
    avg_x = float(np.mean([p["x"] for p in per]))
    bound_t = avg_x - log1m / q + (d - 1) * t * n
    t_star = optimal_t(eps, n, d)
    if eps == 0:
        bound_star = info
    elif math.isfinite(t_star):
        bound_star = info - log1m / (-math.expm1(-t_star)) + (d - 1) * t_star * n
    else:
        bound_star = math.inf
    thm2 = second_order_rhs(info, eps, n, d) if eps < 1 else math.inf
    reports.append(BoundReport.compare(
        "step8_assembled_bound", log_m, min(bound_t, bound_star), tol,
        bound_at_t=bound_t, bound_at_t_star=bound_star, t=t, t_star=t_star, theorem2_rhs=thm2,
        ordering_slack=(thm2 - bound_star) if math.isfinite(thm2) else math.inf,
        alpha=alpha, alpha_hat=a_hat, q=q, eps=eps, n=n, M=M, d_B=d,
        petz_bound_at_t=avg_petz - log1m / q + (d - 1) * t * n))
    return reports


def t_grid_bound(log_m: float, eps: float, n: int, d_out: int, grid: Sequence[float]) -> dict:
    """Assembled small-``alpha`` lower bounds on ``I(M;B^n)`` over a grid of times.

    ``relaxed`` uses ``1/(1-e^-t) <= 1 + 1/t`` and peaks at ``t*``; ``exact``
    keeps ``1/(1-e^-t)``.
    """
    grid = np.asarray(grid, dtype=float)
    log1m = math.log1p(-eps)
    relaxed = log_m + (1.0 + 1.0 / grid) * log1m - n * (d_out - 1) * grid
    exact = log_m + log1m / (-np.expm1(-grid)) - n * (d_out - 1) * grid
    return {
        "grid": grid.tolist(), "relaxed": relaxed.tolist(), "exact": exact.tolist(),
        "t_star": optimal_t(eps, n, d_out),
        "argmax_relaxed": float(grid[int(np.argmax(relaxed))]),
        "argmax_exact": float(grid[int(np.argmax(exact))]),
    }


# ---------------------------------------------------------------------------
# exhaustive sweep over tiny codes


@dataclass
class SweepSummary:
    instances: int = 0
    theorem2_min_slack: float = math.inf
    lemma5_min_slack: float = math.inf
    vacuous: int = 0
    printed_failures: int = 0
    printed_failure_examples: list = field(default_factory=list)
    theorem2_violations: int = 0
    lemma5_violations: int = 0

    def to_json(self) -> dict:
        return _jsonable(self.__dict__)


def _sweep_points(summary: SweepSummary, info: float, lemma_lhs: float, eps: np.ndarray, n: int, M: int,
                  d_out: int, chi_n: float, tol: float, tag: str, max_examples: int) -> None:
    log_m = math.log(M)
    eps = np.asarray(eps, dtype=float)
    vac = eps >= EPSILON_ONE
    L = -np.log1p(-np.where(vac, 0.0, eps))
    root = 2.0 * np.sqrt(n * (d_out - 1) * L)
    thm2 = np.where(vac, np.inf, info + root + L) - log_m
    derived = np.where(vac, np.inf, chi_n - log_m + root + L) - lemma_lhs
    printed = chi_n - log_m - L - root - lemma_lhs
    summary.instances += eps.size
    summary.vacuous += int(vac.sum())
    summary.theorem2_min_slack = min(summary.theorem2_min_slack, float(thm2.min()))
    summary.lemma5_min_slack = min(summary.lemma5_min_slack, float(derived.min()))
    summary.theorem2_violations += int((thm2 < -tol).sum())
    summary.lemma5_violations += int((derived < -tol).sum())
    bad = (printed < -tol) & ~vac
    summary.printed_failures += int(bad.sum())
    clear = bad & (printed < -EXAMPLE_MARGIN)
    if clear.any():
        # keep the lowest-error codes on which the sign-flipped variant clearly fails
        k = int(np.argmin(np.where(clear, eps, np.inf)))
        same = [e for e in summary.printed_failure_examples if e["decoder"] == tag]
        if len(same) < max_examples or eps.flat[k] < same[-1]["eps"]:
            same.append(
                {"decoder": tag, "n": n, "M": M, "eps": float(eps.flat[k]), "lhs": lemma_lhs,
                 "printed_rhs": float(printed.flat[k] + lemma_lhs), "printed_slack": float(printed.flat[k]),
                 "derived_rhs": float(derived.flat[k] + lemma_lhs)})
            same.sort(key=lambda e: (e["eps"], e["printed_slack"]))
            others = [e for e in summary.printed_failure_examples if e["decoder"] != tag]
            summary.printed_failure_examples[:] = others + same[:max_examples]


def exhaustive_tiny_sweep(symbols: Sequence[np.ndarray], ch: QuantumChannel, cap: CapacityResult,
                          n_max: int = 3, M_max: int = 4, tol: float = DEFAULT_TOL,
                          max_examples: int = 3) -> SweepSummary:
    """Second-order and output-divergence bounds on every tiny block code.

    Codebooks are enumerated exhaustively; each is paired with its PGM decoder
    and with every computational-basis projective decoder. Decoders enter the
    bounds only through ``eps_max``, so the projective family is evaluated in
    one vectorized pass per codebook.
    """
    summary = SweepSummary()
    for n in range(1, n_max + 1):
        chi_n, omega_bar_n = _product_reference(cap, n, None, None)
        for M in range(1, M_max + 1):
            for code in enumerate_tiny_codes(symbols, n, M, "pgm", ch):
                outs = output_states(code, ch)
                info, avg = code_information(outs)
                lemma_lhs = float(relative_entropy(avg, omega_bar_n))
                eps_pgm = evaluate_code(code, ch).max_error
                _sweep_points(summary, info, lemma_lhs, np.array([eps_pgm]), n, M, ch.dim_out, chi_n,
                              tol, "pgm", max_examples)
                eps_proj = projective_decoder_errors(outs).max(axis=1)
                _sweep_points(summary, info, lemma_lhs, eps_proj, n, M, ch.dim_out, chi_n,
                              tol, "projective", max_examples)
    return summary


__all__ = [
    "BoundReport", "SemigroupMap", "SweepSummary", "chain_parameters", "exhaustive_tiny_sweep",
    "lemma5_check", "min_valid_t", "optimal_t", "proof_chain_verify",
    "psi_identity_closed_form", "regularize_povm", "reports_to_csv", "second_order_converse_check",
    "second_order_rhs", "semigroup_apply", "semigroup_product_apply", "t_grid_bound", "theorem1_check",
]
