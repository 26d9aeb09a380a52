"""Holevo capacity by alternating maximization, with max-distance certificates."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, DimensionOverflow, NotConverged
from .entropy import holevo_from_outputs, relative_entropy
from .linalg import KERNEL_TOL, hermitian_part, kernel_mask, trace_distance
from .states import Ensemble, QuantumChannel, channel_tensor_power, random_pure_kets

log = logging.getLogger(__name__)

#: Largest input dimension the general solver accepts.
SOLVER_MAX_DIM_IN = 8


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-7
    max_iters: int = 5000
    prune: float = 1e-6
    probes: int = 10000
    refinements: int = 32
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict | None) -> "SolverConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown solver options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class CapacityResult:
    chi: float
    ensemble: Ensemble
    omega_bar: np.ndarray
    certificate_gap: float
    iterations: int
    converged: bool
    kets: np.ndarray = field(repr=False, default=None)
    history: list = field(repr=False, default_factory=list)
    atom_divergences: np.ndarray = field(repr=False, default=None)

    @property
    def certified(self) -> bool:
        return self.certificate_gap >= -1e-8 and self.converged


@dataclass
class Certificate:
    gap: float
    max_divergence: float
    maximizer: np.ndarray


# ---------------------------------------------------------------------------
# batched helpers over pure inputs


def _outputs_for_kets(ch: QuantumChannel, kets: np.ndarray) -> np.ndarray:
    """``N(|psi><psi|)`` for each row of ``kets``; shape ``(n, d_out, d_out)``."""
    a = np.einsum("kij,nj->nki", ch.stacked(), kets)
    x = np.einsum("nki,nkj->nij", a, a.conj())
    return hermitian_part(x)


def _neg_entropies(x: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(x)
    w = np.where(kernel_mask(w) | (w <= 0), 1.0, w)
    return np.sum(w * np.log(w), axis=-1)


class _LogOmega:
    """``ln(omega)`` on its support plus the kernel projector used for leak checks."""

    def __init__(self, omega: np.ndarray):
        w, u = np.linalg.eigh(hermitian_part(omega))
        kern = kernel_mask(w) | (w <= 0)
        lw = np.where(kern, 0.0, np.log(np.where(kern, 1.0, w)))
        self.log = (u * lw) @ u.conj().T
        self.kernel = u[:, kern]

    def divergences(self, x: np.ndarray, neg_ent: np.ndarray) -> np.ndarray:
        cross = np.real(np.einsum("nij,ji->n", x, self.log))
        d = neg_ent - cross
        if self.kernel.shape[1]:
            leak = np.real(np.einsum("ia,nij,ja->n", self.kernel.conj(), x, self.kernel))
            scale = np.max(np.abs(np.linalg.eigvalsh(x)), axis=-1)
            d = np.where(leak > KERNEL_TOL * scale, np.inf, d)
        return d


def _ket_ascent(ch: QuantumChannel, log_omega: _LogOmega, ket: np.ndarray, max_iter: int = 200):
    """Local maximization of ``D(N(|psi><psi|) || omega)`` over unit vectors."""
    d = ch.dim_in
    kraus = ch.stacked()
    kraus_h = np.conj(np.transpose(kraus, (0, 2, 1)))

    def fun(v):
        psi = v[:d] + 1j * v[d:]
        nrm2 = float(np.real(np.vdot(psi, psi)))
        phi = psi / math.sqrt(nrm2)
        a = kraus @ phi
        x = hermitian_part(np.einsum("ki,kj->ij", a, a.conj()))
        w, u = np.linalg.eigh(x)
        kern = kernel_mask(w) | (w <= 0)
        lw = np.where(kern, 0.0, np.log(np.where(kern, 1.0, w)))
        lx = (u * lw) @ u.conj().T
        val = float(np.sum(np.where(kern, 0.0, w * lw))) - float(np.real(np.trace(x @ log_omega.log)))
        g_op = np.einsum("kij,jl,klm->im", kraus_h, lx - log_omega.log, kraus)
        gphi = g_op @ phi
        w_vec = gphi - np.real(np.vdot(phi, gphi)) * phi
        # chain rule through the normalization psi -> psi / |psi|
        grad = 2.0 * w_vec / math.sqrt(nrm2)
        return -val, -np.concatenate([grad.real, grad.imag])

    v0 = np.concatenate([ket.real, ket.imag])
    res = minimize(fun, v0, jac=True, method="L-BFGS-B", options={"maxiter": max_iter, "gtol": 1e-12, "ftol": 1e-15})
    v = res.x if res.fun <= fun(v0)[0] else v0
    psi = v[:d] + 1j * v[d:]
    return psi / np.linalg.norm(psi), -min(res.fun, fun(v0)[0])


def lemma2_certificate(
    ch: QuantumChannel,
    chi: float,
    omega: np.ndarray,
    n_probes: int = 10000,
    seed: int | np.random.SeedSequence = 0,
    refinements: int = 32,
    extra_kets: np.ndarray | None = None,
) -> Certificate:
    """Search for an input whose output is farther than ``chi`` from ``omega``.

    Returns ``max D(N(rho) || omega) - chi`` over ``n_probes`` random pure
    inputs (plus ``extra_kets``), after local ascent from the ``refinements``
    best probes. A gap at or below the solver tolerance certifies the pair
    ``(chi, omega)``.
    """
    rng = np.random.default_rng(seed)
    lo = _LogOmega(omega)
    kets = random_pure_kets(n_probes, ch.dim_in, rng) if n_probes else np.zeros((0, ch.dim_in), complex)
    if extra_kets is not None and len(extra_kets):
        kets = np.vstack([np.asarray(extra_kets, dtype=complex), kets])
    if len(kets) == 0:
        kets = random_pure_kets(1, ch.dim_in, rng)
    divs = np.empty(len(kets))
    for start in range(0, len(kets), 2048):
        chunk = kets[start : start + 2048]
        x = _outputs_for_kets(ch, chunk)
        divs[start : start + 2048] = lo.divergences(x, _neg_entropies(x))
    order = np.argsort(-divs)
    best_ket = kets[order[0]]
    best = float(divs[order[0]])
    if math.isinf(best):
        return Certificate(math.inf, math.inf, np.outer(best_ket, best_ket.conj()))
    for idx in order[: max(refinements, 0)]:
        ket, val = _ket_ascent(ch, lo, kets[idx])
        if val > best:
            best, best_ket = val, ket
    return Certificate(best - chi, best, np.outer(best_ket, best_ket.conj()))


# ---------------------------------------------------------------------------
# solver


class _Atoms:
    """Candidate pure inputs with cached outputs and output entropies."""

    def __init__(self, ch: QuantumChannel, kets: np.ndarray, probs: np.ndarray):
        self.ch = ch
        self.kets = np.array(kets, dtype=complex)
        self.probs = np.array(probs, dtype=float)
        self._refresh()

    def _refresh(self):
        self.out = _outputs_for_kets(self.ch, self.kets)
        self.neg_ent = _neg_entropies(self.out)

    def omega(self) -> np.ndarray:
        return np.einsum("n,nij->ij", self.probs, self.out)

    def divergences(self, omega=None):
        lo = _LogOmega(self.omega() if omega is None else omega)
        return lo.divergences(self.out, self.neg_ent), lo

    def chi(self) -> float:
        d, _ = self.divergences()
        m = self.probs > 0
        return float(np.dot(self.probs[m], d[m]))

    def copy(self) -> "_Atoms":
        new = object.__new__(_Atoms)
        new.ch = self.ch
        new.kets = self.kets.copy()
        new.probs = self.probs.copy()
        new.out = self.out.copy()
        new.neg_ent = self.neg_ent.copy()
        return new

    def set_ket(self, i: int, ket: np.ndarray):
        self.kets[i] = ket
        x = _outputs_for_kets(self.ch, ket[None, :])
        self.out[i] = x[0]
        self.neg_ent[i] = _neg_entropies(x)[0]

    def add(self, ket: np.ndarray, weight: float):
        self.probs = np.append(self.probs * (1.0 - weight), weight)
        self.kets = np.vstack([self.kets, ket[None, :]])
        x = _outputs_for_kets(self.ch, ket[None, :])
        self.out = np.concatenate([self.out, x])
        self.neg_ent = np.append(self.neg_ent, _neg_entropies(x))

    def keep(self, mask: np.ndarray):
        self.kets = self.kets[mask]
        self.probs = self.probs[mask] / self.probs[mask].sum()
        self.out = self.out[mask]
        self.neg_ent = self.neg_ent[mask]


def _weight_updates(atoms: _Atoms, steps: int, tol: float, history: list) -> int:
    """Blahut-Arimoto style multiplicative updates ``p_x <- p_x exp(D_x) / Z``."""
    done = 0
    for _ in range(steps):
        d, _ = atoms.divergences()
        m = atoms.probs > 0
        chi = float(np.dot(atoms.probs[m], d[m]))
        history.append(chi)
        if np.max(d[m]) - chi <= tol:
            break
        logw = np.log(np.where(m, atoms.probs, 1.0)) + np.where(m, d - d[m].max(), 0.0)
        w = np.where(m, np.exp(logw - logw[m].max()), 0.0)
        atoms.probs = w / w.sum()
        done += 1
    return done


def _refine_atoms(atoms: _Atoms, prune: float, history: list) -> None:
    """Move each significant atom uphill in ``D(N(psi) || omega)``; keep only
    moves that increase the Holevo quantity of the ensemble."""
    d, lo = atoms.divergences()
    base = atoms.chi()
    for i in np.argsort(-atoms.probs):
        if atoms.probs[i] <= prune:
            continue
        ket, val = _ket_ascent(atoms.ch, lo, atoms.kets[i], max_iter=50)
        if val <= d[i] + 1e-13:
            continue
        old = atoms.kets[i].copy()
        for frac in (1.0, 0.5, 0.25, 0.125):
            trial = old + frac * (ket * np.exp(-1j * np.angle(np.vdot(old, ket))) - old)
            trial = trial / np.linalg.norm(trial)
            atoms.set_ket(i, trial)
            new = atoms.chi()
            if new >= base:
                base = new
                history.append(new)
                break
        else:
            atoms.set_ket(i, old)


def _joint_polish(atoms: _Atoms, history: list, max_iter: int = 300) -> None:
    """L-BFGS ascent of the Holevo quantity jointly in all atom kets and
    (softmax) weights, using exact gradients."""
    ch = atoms.ch
    kraus = ch.stacked()
    kraus_h = np.conj(np.transpose(kraus, (0, 2, 1)))
    n, d = atoms.kets.shape
    live = atoms.probs > 0
    if live.sum() < 1:
        return

    def unpack(v):
        kets = (v[: n * d] + 1j * v[n * d : 2 * n * d]).reshape(n, d)
        z = v[2 * n * d :]
        return kets, z

    def fun(v):
        raw, z = unpack(v)
        nrm = np.linalg.norm(raw, axis=1)
        phi = raw / nrm[:, None]
        zz = np.where(live, z, -np.inf)
        p = np.exp(zz - zz[live].max())
        p = p / p.sum()
        x = _outputs_for_kets(ch, phi)
        w, u = np.linalg.eigh(x)
        kern = kernel_mask(w) | (w <= 0)
        lw = np.where(kern, 0.0, np.log(np.where(kern, 1.0, w)))
        neg_ent = np.sum(np.where(kern, 0.0, w * lw), axis=1)
        logx = np.einsum("nij,nj,nkj->nik", u, lw, u.conj())
        omega = np.einsum("n,nij->ij", p, x)
        lo = _LogOmega(omega)
        cross = np.real(np.einsum("nij,ji->n", x, lo.log))
        divs = neg_ent - cross
        chi = float(np.dot(p[live], divs[live]))
        g_op = np.einsum("kij,njl,klm->nim", kraus_h, logx - lo.log[None], kraus)
        gphi = np.einsum("nij,nj->ni", g_op, phi)
        w_vec = gphi - np.real(np.einsum("ni,ni->n", phi.conj(), gphi))[:, None] * phi
        gk = 2.0 * (p / nrm)[:, None] * w_vec
        gz = np.where(live, p * (divs - chi), 0.0)
        grad = np.concatenate([gk.real.ravel(), gk.imag.ravel(), gz])
        return -chi, -grad

    z0 = np.log(np.where(live, atoms.probs, 1.0))
    v0 = np.concatenate([atoms.kets.real.ravel(), atoms.kets.imag.ravel(), z0])
    f0 = fun(v0)[0]
    res = minimize(fun, v0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": 1e-13, "ftol": 1e-16})
    if not res.fun < f0:
        return
    raw, z = unpack(res.x)
    kets = raw / np.linalg.norm(raw, axis=1)[:, None]
    zz = np.where(live, z, -np.inf)
    p = np.exp(zz - zz[live].max())
    trial = _Atoms(ch, kets, p / p.sum())
    c = trial.chi()
    if c > atoms.chi():
        atoms.__dict__.update(trial.__dict__)
        history.append(c)


def _insert_atom(atoms: _Atoms, ket: np.ndarray, history: list) -> bool:
    base = atoms.chi()
    for weight in (0.5, 0.25, 0.1, 0.03, 0.01, 1e-3, 1e-4):
        trial = atoms.copy()
        trial.add(ket, weight)
        c = trial.chi()
        if c > base:
            atoms.__dict__.update(trial.__dict__)
            history.append(c)
            return True
    return False


def _caratheodory_mask(atoms: _Atoms):
    """Support of a vertex solution of ``sum_x q_x N(psi_x) = omega``, ``q >= 0``."""
    from scipy.optimize import linprog

    d = atoms.out.shape[1]
    iu = np.triu_indices(d)
    a = np.vstack([atoms.out[:, iu[0], iu[1]].real.T, atoms.out[:, iu[0], iu[1]].imag.T])
    om = atoms.omega()
    b = np.concatenate([om[iu].real, om[iu].imag])
    res = linprog(np.zeros(len(atoms.probs)), A_eq=a, b_eq=b, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        return None
    return res.x > 1e-12, res.x


def _prune(atoms: _Atoms, prune: float, cap: int, history: list) -> None:
    base = atoms.chi()
    mask = atoms.probs >= prune
    if mask.sum() > cap:
        found = _caratheodory_mask(atoms)
        if found is not None and found[0].sum() <= cap:
            trial = atoms.copy()
            trial.probs = found[1]
            trial.keep(found[0])
            c = trial.chi()
            if c >= base - 1e-10:
                atoms.__dict__.update(trial.__dict__)
                history.append(c)
                return
        mask = np.zeros_like(mask)
        mask[np.argsort(-atoms.probs)[:cap]] = True
    if mask.all() or not mask.any():
        return
    trial = atoms.copy()
    trial.keep(mask)
    c = trial.chi()
    if c >= base - 1e-10:
        atoms.__dict__.update(trial.__dict__)
        history.append(c)


def holevo_capacity(ch: QuantumChannel, cfg: SolverConfig | None = None, seed=None) -> CapacityResult:
    """Compute chi(N) with an optimal ensemble and the optimal output state.

    Alternates multiplicative weight updates with local ascent of the
    candidate pure inputs, inserting the worst-case input found by the
    max-distance certificate until its gap drops below ``cfg.tol``.

    Raises:
        DimensionOverflow: if ``ch.dim_in`` exceeds the solver cap.
        NotConverged: if ``cfg.max_iters`` weight updates pass without
            certification; the exception carries the best iterate.
    """
    cfg = cfg or SolverConfig()
    if ch.dim_in > SOLVER_MAX_DIM_IN:
        raise DimensionOverflow(f"input dimension {ch.dim_in} exceeds solver cap {SOLVER_MAX_DIM_IN}")
    seed = cfg.seed if seed is None else seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init_seq, cert_seq = ss.spawn(2)
    rng = np.random.default_rng(init_seq)
    d = ch.dim_in
    cap = max(d * d, 2)
    n0 = min(cap, max(2 * d, 2))
    atoms = _Atoms(ch, random_pure_kets(n0, d, rng), np.full(n0, 1.0 / n0))
    history: list = []
    iters = 0
    gap = math.inf
    converged = False
    round_idx = 0
    while iters < cfg.max_iters:
        budget = 25 if gap > 1e3 * cfg.tol else 200
        iters += _weight_updates(atoms, min(budget, cfg.max_iters - iters), cfg.tol * 0.05, history) + 1
        _refine_atoms(atoms, cfg.prune, history)
        _joint_polish(atoms, history)
        iters += _weight_updates(atoms, min(budget, max(cfg.max_iters - iters, 0)), cfg.tol * 0.05, history)
        _prune(atoms, cfg.prune, cap, history)
        chi = atoms.chi()
        # cheap probe first, the full certificate only when it looks converged
        probe_seq = np.random.SeedSequence(entropy=cert_seq.entropy, spawn_key=(round_idx,))
        round_idx += 1
        cert = lemma2_certificate(ch, chi, atoms.omega(), n_probes=256, seed=probe_seq,
                                  refinements=4, extra_kets=atoms.kets)
        if cert.gap <= cfg.tol:
            cert = lemma2_certificate(ch, chi, atoms.omega(), n_probes=cfg.probes, seed=cert_seq,
                                      refinements=cfg.refinements, extra_kets=atoms.kets)
            if cert.gap <= cfg.tol:
                gap = cert.gap
                converged = True
                break
        gap = cert.gap
        w, u = np.linalg.eigh(cert.maximizer)
        if not _insert_atom(atoms, u[:, -1], history):
            # no improving insertion: let the weight updates run longer
            iters += _weight_updates(atoms, min(1000, max(cfg.max_iters - iters, 0)), cfg.tol * 0.01, history)
    result = _finish(ch, atoms, gap, iters, converged, history)
    if not converged:
        raise NotConverged(f"capacity solver stopped at gap {gap:.3g} after {iters} iterations", result)
    return result


def _finish(ch, atoms: _Atoms, gap, iters, converged, history) -> CapacityResult:
    mask = atoms.probs > 0
    kets = atoms.kets[mask]
    probs = atoms.probs[mask] / atoms.probs[mask].sum()
    states = [np.outer(k, k.conj()) for k in kets]
    outputs = list(atoms.out[mask])
    chi = holevo_from_outputs(probs, outputs)
    omega = hermitian_part(sum(p * o for p, o in zip(probs, outputs)))
    divs, _ = atoms.divergences()
    return CapacityResult(
        chi=chi,
        ensemble=Ensemble(tuple(probs), tuple(states)),
        omega_bar=omega,
        certificate_gap=gap,
        iterations=iters,
        converged=converged,
        kets=kets,
        history=history,
        atom_divergences=divs[mask],
    )


def optimal_output_state(result: CapacityResult) -> np.ndarray:
    if not result.converged:
        raise NotConverged("optimal output state requested from an unconverged result", result)
    return result.omega_bar


def capacity_restarts(ch: QuantumChannel, n_restarts: int, seed: int = 0, cfg: SolverConfig | None = None) -> list:
    cfg = cfg or SolverConfig()
    seqs = np.random.SeedSequence(seed).spawn(n_restarts)
    return [holevo_capacity(ch, cfg, seed=s) for s in seqs]


def uniqueness_probe(ch: QuantumChannel, n_restarts: int = 20, seed: int = 0,
                     cfg: SolverConfig | None = None) -> float:
    """Largest trace distance between optimal output states over independent restarts."""
    results = capacity_restarts(ch, n_restarts, seed, cfg)
    return max_pairwise_distance([r.omega_bar for r in results])


def max_pairwise_distance(states) -> float:
    return max((trace_distance(a, b) for a, b in itertools.combinations(states, 2)), default=0.0)


def regularized_capacity_estimate(ch: QuantumChannel, k: int, cfg: SolverConfig | None = None) -> float:
    """``chi(N^(x)k) / k``."""
    if k < 1 or k > 2:
        raise ValueError("regularized estimates are supported for k in {1, 2}")
    if ch.dim_in**k > SOLVER_MAX_DIM_IN:
        raise DimensionOverflow(f"input dimension {ch.dim_in ** k} exceeds solver cap {SOLVER_MAX_DIM_IN}")
    power = channel_tensor_power(ch, k)
    return holevo_capacity(power, cfg).chi / k


def atom_divergences(ch: QuantumChannel, result: CapacityResult) -> np.ndarray:
    """``D(N(rho_x) || omega_bar)`` for each ensemble atom."""
    from .states import apply_channel

    return np.array([float(relative_entropy(apply_channel(ch, s), result.omega_bar)) for s in result.ensemble.states])


def capacity_to_json(result: CapacityResult) -> dict:
    """Plain-JSON view of a capacity result (values in nats)."""
    from .linalg import matrix_to_json

    return {
        "chi": float(result.chi),
        "certificate_gap": float(result.certificate_gap),
        "iterations": int(result.iterations),
        "converged": bool(result.converged),
        "omega_bar": matrix_to_json(result.omega_bar),
        "ensemble": {"probs": [float(p) for p in result.ensemble.probs],
                     "states": [matrix_to_json(s) for s in result.ensemble.states]},
        "atom_divergences": [float(v) for v in (result.atom_divergences if result.atom_divergences is not None else [])],
    }
