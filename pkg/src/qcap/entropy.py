"""Entropic functionals in nats: von Neumann entropy, relative entropy,
Holevo quantity, Petz and measured Renyi divergences, weighted L_p norms."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import DimensionMismatch, InternalInconsistency, SingularArgument
from .linalg import KERNEL_TOL, hermitian_part, kernel_mask
from .states import QuantumChannel, apply_channel

log = logging.getLogger(__name__)

#: Regularization weight for inputs that must be full rank.
DEFAULT_DELTA = 1e-9
#: Agreement required between the two Holevo/mutual-information formulas.
CROSS_CHECK_WARN = 1e-8
CROSS_CHECK_FAIL = 1e-6


class DivergenceValue(float):
    """A divergence in nats; ``inf`` exactly when the support condition fails."""

    @property
    def support_violated(self) -> bool:
        return math.isinf(self)

    @property
    def nats(self) -> float:
        return float(self)

    def to_json(self) -> dict:
        return {"infinite": True} if self.support_violated else {"nats": float(self)}


def _eigh(m):
    return np.linalg.eigh(hermitian_part(np.asarray(m, dtype=complex)))


def _spectrum(m) -> np.ndarray:
    return np.linalg.eigvalsh(hermitian_part(np.asarray(m, dtype=complex)))


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def binary_entropy(x: float) -> float:
    return shannon_entropy([x, 1.0 - x])


def von_neumann_entropy(rho) -> float:
    """``-Tr(rho ln rho)`` with ``0 ln 0 = 0``."""
    w = _spectrum(rho)
    w = w[~kernel_mask(w)]
    w = w[w > 0]
    return max(0.0, float(-np.sum(w * np.log(w))))


def _neg_entropy(rho, kernel_tol: float = KERNEL_TOL) -> float:
    w = _spectrum(rho)
    w = w[~kernel_mask(w, kernel_tol) & (w > 0)]
    return float(np.sum(w * np.log(w)))


class _ReferenceLog:
    """Eigendecomposition of a reference state, reused across divergences."""

    def __init__(self, sigma, kernel_tol: float = KERNEL_TOL):
        self.sigma = np.asarray(sigma, dtype=complex)
        w, self.u = _eigh(self.sigma)
        self.kern = kernel_mask(w, kernel_tol)
        self.log_w = np.zeros_like(w)
        pos = ~self.kern & (w > 0)
        self.log_w[pos] = np.log(w[pos])
        self.kernel_tol = kernel_tol

    def diagonal(self, rho: np.ndarray) -> np.ndarray:
        """Diagonal of ``rho`` in the reference eigenbasis."""
        return np.real(np.sum(self.u.conj() * (rho @ self.u), axis=0))

    def leaks(self, rho: np.ndarray, diag: np.ndarray) -> bool:
        if not np.any(self.kern):
            return False
        scale = max(float(np.real(np.trace(rho))), 1e-300)
        return float(np.sum(diag[self.kern])) > self.kernel_tol * scale

    def divergence(self, rho) -> "DivergenceValue":
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != self.sigma.shape:
            raise DimensionMismatch(f"shapes {rho.shape} and {self.sigma.shape} differ")
        diag = self.diagonal(rho)
        if self.leaks(rho, diag):
            return DivergenceValue(math.inf)
        value = _neg_entropy(rho, self.kernel_tol) - float(np.sum(diag * self.log_w))
        return DivergenceValue(max(value, 0.0) if value > -1e-12 else value)


def support_contained(rho, sigma, kernel_tol: float = KERNEL_TOL) -> bool:
    """True iff ``supp(rho)`` lies inside ``supp(sigma)`` up to the kernel threshold."""
    ref = _ReferenceLog(sigma, kernel_tol)
    rho = np.asarray(rho, dtype=complex)
    return not ref.leaks(rho, ref.diagonal(rho))


def relative_entropy(rho, sigma, kernel_tol: float = KERNEL_TOL) -> DivergenceValue:
    """Umegaki relative entropy ``Tr(rho ln rho - rho ln sigma)``; ``+inf`` off-support."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise DimensionMismatch(f"shapes {rho.shape} and {sigma.shape} differ")
    return _ReferenceLog(sigma, kernel_tol).divergence(rho)


def relative_entropies(rhos: Sequence[np.ndarray], sigma, kernel_tol: float = KERNEL_TOL) -> list:
    """``[D(rho || sigma) for rho in rhos]`` with one decomposition of ``sigma``."""
    ref = _ReferenceLog(sigma, kernel_tol)
    return [ref.divergence(r) for r in rhos]


def holevo_from_outputs(probs: Sequence[float], outputs: Sequence[np.ndarray]) -> float:
    """Holevo quantity of the output ensemble, cross-checked in two forms.

    Returns ``sum_x p_x D(out_x || avg)``. The entropy-difference form
    ``H(avg) - sum_x p_x H(out_x)`` must agree within 1e-6.
    """
    probs = np.asarray(probs, dtype=float)
    if len(probs) != len(outputs):
        raise DimensionMismatch("one probability per output state is required")
    avg = sum(p * o for p, o in zip(probs, outputs))
    ref = _ReferenceLog(avg)
    rel_form = 0.0
    ent_form = von_neumann_entropy(avg)
    for p, o in zip(probs, outputs):
        if p <= 0:
            continue
        rel_form += p * float(ref.divergence(o))
        ent_form -= p * von_neumann_entropy(o)
    gap = abs(rel_form - ent_form)
    if gap > CROSS_CHECK_FAIL:
        raise InternalInconsistency(f"Holevo forms disagree by {gap:.3g} nats")
    if gap > CROSS_CHECK_WARN:
        log.warning("Holevo forms disagree by %.3g nats", gap)
    return rel_form


def holevo_quantity(ensemble, channel: QuantumChannel) -> float:
    """chi(N, {p_x, rho_x}) in nats."""
    outputs = [apply_channel(channel, s) for s in ensemble.states]
    return holevo_from_outputs(ensemble.probs, outputs)


def cq_mutual_information(probs: Sequence[float], output_states: Sequence[np.ndarray]) -> float:
    """``I(M;B)`` of ``sum_m p_m |m><m| (x) rho_m`` in nats."""
    return holevo_from_outputs(probs, output_states)


def petz_renyi_divergence(alpha: float, rho, sigma, kernel_tol: float = KERNEL_TOL) -> DivergenceValue:
    """``ln Tr(rho^a sigma^(1-a)) / (a - 1)`` with powers taken on supports."""
    if alpha <= 0 or alpha == 1:
        raise ValueError("alpha must lie in (0, 1) or (1, inf)")
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise DimensionMismatch(f"shapes {rho.shape} and {sigma.shape} differ")
    if alpha > 1 and not support_contained(rho, sigma, kernel_tol):
        return DivergenceValue(math.inf)
    wr, ur = _eigh(rho)
    ws, us = _eigh(sigma)
    kr, ks = kernel_mask(wr, kernel_tol) | (wr < 0), kernel_mask(ws, kernel_tol) | (ws < 0)
    fr = np.zeros_like(wr)
    fr[~kr] = wr[~kr] ** alpha
    fs = np.zeros_like(ws)
    fs[~ks] = ws[~ks] ** (1.0 - alpha)
    # Tr(rho^a sigma^(1-a)) = sum_ij fr_i fs_j |<r_i|s_j>|^2
    overlap = np.abs(ur.conj().T @ us) ** 2
    q = float(fr @ overlap @ fs)
    if q <= 0:
        return DivergenceValue(math.inf)
    return DivergenceValue(math.log(q) / (alpha - 1.0))


def classical_renyi_divergence(alpha: float, p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = (p > 0) & (q > 0)
    s = float(np.sum(p[mask] ** alpha * q[mask] ** (1.0 - alpha)))
    return math.log(s) / (alpha - 1.0) if s > 0 else math.inf


def regularize(x, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """``(1 - delta) x + delta I / d``."""
    x = np.asarray(x, dtype=complex)
    d = x.shape[0]
    return (1.0 - delta) * x + delta * np.eye(d) / d


# ---------------------------------------------------------------------------
# measured Renyi divergence via its variational form


def _divided_differences_exp(lam: np.ndarray, c: float) -> np.ndarray:
    """Matrix of divided differences of ``x -> exp(c x)`` at ``lam``."""
    li = lam[:, None]
    lj = lam[None, :]
    diff = li - lj
    ej = np.exp(c * lj)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = ej * np.expm1(c * diff) / diff
    close = np.abs(diff) < 1e-12
    mid = np.exp(c * 0.5 * (li + lj))
    out = np.where(close, c * np.broadcast_to(mid, out.shape), out)
    return out


def _herm_from_vec(v: np.ndarray, d: int) -> np.ndarray:
    h = np.zeros((d, d), dtype=complex)
    iu = np.triu_indices(d, 1)
    k = len(iu[0])
    h[np.diag_indices(d)] = v[:d]
    h[iu] = v[d : d + k] + 1j * v[d + k :]
    return h + np.triu(h, 1).conj().T


def _vec_from_herm_grad(g: np.ndarray, d: int) -> np.ndarray:
    # derivative of a real function along the real coordinates of _herm_from_vec
    iu = np.triu_indices(d, 1)
    diag = np.real(np.diag(g))
    off = g[iu] + g.T[iu]  # (g_ij + g_ji) for the real part
    offi = 1j * (g[iu] - g.T[iu])
    return np.concatenate([diag, np.real(off), np.real(offi)])


@dataclass
class MeasuredRenyiResult:
    """Lower bound on the measured Renyi divergence with the certifying operator."""

    value: float
    omega: np.ndarray
    converged: bool
    iterations: int

    def __float__(self) -> float:
        return self.value


def variational_renyi_objective(alpha: float, rho, sigma, omega) -> float:
    """``ln(Tr(rho w)^a Tr(sigma w^(a/(a-1)))^(1-a)) / (a - 1)`` for ``w > 0``.

    Any positive definite ``omega`` gives a lower bound on the measured
    Renyi divergence of order ``alpha`` in (0, 1).
    """
    w, u = _eigh(omega)
    if np.min(w) <= 0:
        raise SingularArgument("the variational operator must be positive definite")
    a_hat = alpha / (alpha - 1.0)
    w_hat = (u * w**a_hat) @ u.conj().T
    t1 = np.real(np.trace(np.asarray(rho) @ omega))
    t2 = np.real(np.trace(np.asarray(sigma) @ w_hat))
    if t1 <= 0 or t2 <= 0:
        return math.inf if t1 <= 0 else -math.inf
    return (alpha * math.log(t1) + (1.0 - alpha) * math.log(t2)) / (alpha - 1.0)


def measured_renyi_divergence(
    alpha: float,
    rho,
    sigma,
    initial: Sequence[np.ndarray] = (),
    max_iters: int = 2000,
    tol: float = 1e-9,
    delta: float = DEFAULT_DELTA,
    warn: bool = True,
) -> MeasuredRenyiResult:
    """Measured Renyi divergence of order ``alpha`` in (0, 1).

    Maximizes the variational objective over ``omega = exp(H)`` with
    L-BFGS and exact gradients. Inputs are regularized with ``delta``. The
    search starts from the best of ``initial`` (positive definite guesses),
    the identity, and the projector-weighted guess built from the spectral
    decomposition of ``rho - sigma``.
    """
    if not 0 < alpha < 1:
        raise ValueError("measured Renyi divergence is implemented for alpha in (0, 1)")
    rho = regularize(rho, delta) if delta else np.asarray(rho, dtype=complex)
    sigma = regularize(sigma, delta) if delta else np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise DimensionMismatch(f"shapes {rho.shape} and {sigma.shape} differ")
    d = rho.shape[0]
    a_hat = alpha / (alpha - 1.0)
    scale = 1.0 / (alpha - 1.0)

    def objective(v):
        # value and gradient of -(objective) in the real coordinates of H
        h = _herm_from_vec(v, d)
        lam, u = np.linalg.eigh(h)
        lam = lam - lam.max()
        r_t = u.conj().T @ rho @ u
        s_t = u.conj().T @ sigma @ u
        e1 = np.exp(lam)
        e2 = np.exp(a_hat * lam)
        t1 = float(np.real(np.diag(r_t)) @ e1)
        t2 = float(np.real(np.diag(s_t)) @ e2)
        f = scale * (alpha * math.log(t1) + (1.0 - alpha) * math.log(t2))
        g1 = u @ (_divided_differences_exp(lam, 1.0) * r_t) @ u.conj().T
        g2 = u @ (_divided_differences_exp(lam, a_hat) * s_t) @ u.conj().T
        g = scale * (alpha * g1 / t1 + (1.0 - alpha) * g2 / t2)
        return -f, -_vec_from_herm_grad(g.T, d)

    guesses = [np.eye(d, dtype=complex)]
    w, u = _eigh(rho - sigma)
    guesses.append((u * np.where(w > 0, 2.0, 0.5)) @ u.conj().T)
    for g in initial:
        gw, gu = _eigh(g)
        if np.min(gw) > 0:
            guesses.append((gu * gw) @ gu.conj().T)

    def to_vec(omega):
        lw, lu = _eigh(omega)
        h = (lu * np.log(lw)) @ lu.conj().T
        iu = np.triu_indices(d, 1)
        return np.concatenate([np.real(np.diag(h)), np.real(h[iu]), np.imag(h[iu])])

    starts = [to_vec(g) for g in guesses]
    vals = [objective(s)[0] for s in starts]
    x0 = starts[int(np.argmin(vals))]
    best_val = min(vals)
    res = minimize(objective, x0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iters, "ftol": tol * 1e-3, "gtol": 1e-10})
    x = res.x if res.fun <= best_val else x0
    val = -min(res.fun, best_val)
    h = _herm_from_vec(x, d)
    lam, u = np.linalg.eigh(h)
    omega = (u * np.exp(lam - lam.max())) @ u.conj().T
    converged = bool(res.success) or res.nit < max_iters
    if not converged and warn:
        log.warning("measured Renyi optimizer stopped after %d iterations", res.nit)
    return MeasuredRenyiResult(val, omega, converged, int(res.nit))


def measured_renyi_projective(alpha: float, rho, sigma, basis: np.ndarray) -> float:
    """Classical Renyi divergence of the outcome distributions of the
    projective measurement onto the columns of ``basis``."""
    p = np.real(np.einsum("ji,jk,ki->i", basis.conj(), rho, basis))
    q = np.real(np.einsum("ji,jk,ki->i", basis.conj(), sigma, basis))
    return classical_renyi_divergence(alpha, np.clip(p, 0, None), np.clip(q, 0, None))


# ---------------------------------------------------------------------------
# weighted norms


def _power_psd(m, p: float) -> np.ndarray:
    w, u = _eigh(m)
    w = np.clip(w, 0.0, None)
    with np.errstate(divide="ignore"):
        fw = np.where(w > 0, w**p, 0.0) if p > 0 else w**p
    return (u * fw) @ u.conj().T


def _graded_spectrum(y: np.ndarray, sigma, a: float, dps: int) -> np.ndarray:
    """Eigenvalues of ``sigma^a y sigma^a`` for ``a > 0``, computed in the
    eigenbasis of ``sigma`` with ``dps`` significant digits.

    The spectrum of such a congruence can span many decades when ``sigma``
    is nearly singular; the graded form keeps small eigenvalues accurate.
    """
    import mpmath

    lam, u = _eigh(sigma)
    lam = np.clip(lam, 0.0, None)
    yb = u.conj().T @ y @ u
    with mpmath.workdps(dps):
        scale = [mpmath.mpf(float(v)) ** a if v > 0 else mpmath.mpf(0) for v in lam]
        d = len(lam)
        m = mpmath.matrix(d, d)
        for i in range(d):
            for j in range(d):
                m[i, j] = scale[i] * mpmath.mpc(complex(yb[i, j])) * scale[j]
        m = (m + m.H) / 2
        w = mpmath.eigh(m, eigvals_only=True)
        return np.array([float(v) for v in w])


def weighted_lp_norm(x, p: float, sigma, precise: bool = False, dps: int = 40) -> float:
    """``Tr(|sigma^(1/2p) x sigma^(1/2p)|^p)^(1/p)``.

    With ``precise=True`` the spectrum is computed in extended precision
    (positive ``p`` only; use :func:`weighted_lp_norm_inverse_form` for
    negative orders).

    Raises:
        SingularArgument: if ``p < 0`` and either ``sigma`` or ``x`` is not
            positive definite.
    """
    if p == 0:
        raise ValueError("p must be nonzero")
    x = hermitian_part(np.asarray(x, dtype=complex))
    sigma = np.asarray(sigma, dtype=complex)
    if x.shape != sigma.shape:
        raise DimensionMismatch(f"shapes {x.shape} and {sigma.shape} differ")
    if precise:
        if p < 0:
            raise ValueError("precise evaluation is implemented for p > 0")
        w = np.abs(_graded_spectrum(x, sigma, 1.0 / (2.0 * p), dps))
        return float(np.sum(w**p) ** (1.0 / p))
    ws = _spectrum(sigma)
    if p < 0 and ws[0] <= 0:
        raise SingularArgument("negative-order norms need a positive definite weight")
    if p < 0 and _spectrum(x)[0] <= 0:
        raise SingularArgument("negative-order norms need a positive definite argument")
    s = _power_psd(sigma, 1.0 / (2.0 * p))
    inner = s @ x @ s
    w = np.abs(_spectrum(inner))
    return float(np.sum(w**p) ** (1.0 / p))


def weighted_lp_norm_inverse_form(x, r: float, sigma, precise: bool = False, dps: int = 40) -> float:
    """``||x^-1||_{r,sigma}^-1`` for ``r > 0``; equals ``||x||_{-r,sigma}``
    for positive definite ``sigma`` and stays defined when ``sigma`` is singular."""
    if r <= 0:
        raise ValueError("r must be positive")
    xw, xu = _eigh(x)
    if xw[0] <= 0:
        raise SingularArgument("argument must be positive definite")
    inv = (xu / xw) @ xu.conj().T
    if precise:
        w = np.clip(_graded_spectrum(inv, sigma, 1.0 / (2.0 * r), dps), 0.0, None)
    else:
        s = _power_psd(sigma, 1.0 / (2.0 * r))
        w = np.clip(_spectrum(s @ inv @ s), 0.0, None)
    return float(np.sum(w**r) ** (-1.0 / r))
