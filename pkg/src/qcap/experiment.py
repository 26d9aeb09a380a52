"""Config-driven experiments: capacity runs, code simulations and bound sweeps."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import converse
from .capacity import (
    CapacityResult,
    SolverConfig,
    capacity_restarts,
    capacity_to_json,
    holevo_capacity,
    lemma2_certificate,
    max_pairwise_distance,
)
from .codes import ClassicalQuantumCode, evaluate_code, make_code, output_states, random_codebook
from .entropy import relative_entropy
from .errors import ConfigError, DimensionOverflow, NotConverged, QcapError
from .linalg import MAX_DIM, matrix_to_json, tensor_all
from .states import (
    Povm,
    QuantumChannel,
    basis_state,
    channel_from_json,
    channel_tensor_power,
    channel_to_json,
    random_channel,
    random_density,
    random_povm,
)

TASKS = ("capacity", "certify", "uniqueness", "simulate", "theorem1", "theorem2", "lemma5", "proof-chain")
SUMMARY_COLUMNS = ("n", "M", "eps_max", "eps_avg", "lhs", "rhs", "slack", "lhs_per_n")

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_DIMENSION = 3
EXIT_NOT_CONVERGED = 4

CERTIFICATE_TOL = 1e-5
UNIQUENESS_TOL = 1e-5

_TASK_PARAMS = {
    "capacity": set(),
    "certify": {"probes"},
    "uniqueness": {"restarts", "tol"},
    "simulate": {"code", "additive"},
    "theorem1": {"code", "additive"},
    "theorem2": {"code"},
    "lemma5": {"code", "additive"},
    "proof-chain": {"alpha_values", "t_values", "delta_reg", "decoder", "max_n", "max_M"},
}
_TOP_KEYS = {"task", "channel", "seed", "solver", "sweep", "output"}


@dataclass(frozen=True)
class SweepConfig:
    n_values: tuple = ()
    rates: tuple = ()
    M_values: tuple = ()
    trials: int = 1

    @classmethod
    def from_dict(cls, d: dict | None) -> "SweepConfig":
        d = dict(d or {})
        unknown = set(d) - {"n_values", "rates", "M_values", "trials"}
        if unknown:
            raise ConfigError(f"unknown sweep options: {sorted(unknown)}")
        try:
            n_values = tuple(int(v) for v in d.get("n_values", ()))
            rates = tuple(float(v) for v in d.get("rates", ()))
            m_values = tuple(int(v) for v in d.get("M_values", ()))
            trials = int(d.get("trials", 1))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed sweep: {exc}") from None
        if rates and m_values:
            raise ConfigError("give either rates or M_values, not both")
        if any(n < 1 for n in n_values) or any(m < 1 for m in m_values) or trials < 1:
            raise ConfigError("n_values, M_values and trials must be positive")
        if any(not r > 0 for r in rates):
            raise ConfigError("rates must be positive")
        return cls(n_values, rates, m_values, trials)

    @property
    def sizes(self) -> tuple:
        """Second sweep axis: ``("rate", r)`` or ``("M", m)`` entries."""
        if self.rates:
            return tuple(("rate", r) for r in self.rates)
        if self.M_values:
            return tuple(("M", m) for m in self.M_values)
        return (("auto", None),)

    def to_json(self) -> dict:
        return {"n_values": list(self.n_values), "rates": list(self.rates),
                "M_values": list(self.M_values), "trials": self.trials}


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    channel: dict
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: str = "qcap"
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        task = d.get("task")
        if task not in TASKS:
            raise ConfigError(f"task must be one of {', '.join(TASKS)}; got {task!r}")
        extra = set(d) - _TOP_KEYS - _TASK_PARAMS[task]
        if extra:
            raise ConfigError(f"unknown keys for task {task}: {sorted(extra)}")
        if "channel" not in d:
            raise ConfigError("config needs a channel")
        channel = _resolve_channel_spec(d["channel"], base_dir)
        try:
            seed = int(d.get("seed", 0))
        except (TypeError, ValueError):
            raise ConfigError("seed must be an integer") from None
        if seed < 0 or seed >= 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        try:
            solver = SolverConfig.from_dict(d.get("solver"))
        except TypeError as exc:
            raise ConfigError(f"malformed solver options: {exc}") from None
        sweep = SweepConfig.from_dict(d.get("sweep"))
        params = {k: d[k] for k in _TASK_PARAMS[task] if k in d}
        cfg = cls(task, channel, seed, solver, sweep, str(d.get("output", "qcap")), params)
        cfg._validate()
        return cfg

    def _validate(self) -> None:
        if self.task in ("simulate", "theorem1", "theorem2", "lemma5"):
            if not self.sweep.n_values:
                raise ConfigError(f"task {self.task} needs sweep.n_values")
            kind = self.params.get("code", "random")
            if kind not in ("random", "basis"):
                raise ConfigError("code must be 'random' or 'basis'")
            if kind == "random" and not (self.sweep.rates or self.sweep.M_values):
                raise ConfigError("random codes need sweep.rates or sweep.M_values")
        if self.task == "proof-chain":
            for key in ("alpha_values", "t_values"):
                vals = self.params.get(key)
                if vals is not None and (not isinstance(vals, list) or not vals):
                    raise ConfigError(f"{key} must be a non-empty list")
            if self.params.get("decoder", "mixed") not in ("mixed", "pgm", "random"):
                raise ConfigError("decoder must be 'mixed', 'pgm' or 'random'")
        if self.channel.get("family") == "random" and self.task != "proof-chain":
            raise ConfigError("random channels are only supported by proof-chain")
        d_out = _declared_output_dim(self.channel)
        for n in self.sweep.n_values:
            if d_out is not None and d_out**n > MAX_DIM:
                raise DimensionOverflow(f"n={n} gives output dimension {d_out ** n} > {MAX_DIM}")

    def to_json(self) -> dict:
        return {"task": self.task, "channel": self.channel, "seed": self.seed,
                "solver": self.solver.__dict__, "sweep": self.sweep.to_json(),
                "output": self.output, "params": self.params}


def _resolve_channel_spec(spec, base_dir: str) -> dict:
    if isinstance(spec, str):
        spec = {"file": spec}
    if not isinstance(spec, dict):
        raise ConfigError("channel must be an object or a file path")
    if "file" in spec:
        path = spec["file"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        try:
            with open(path) as fh:
                spec = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read channel file {path}: {exc}") from None
    if spec.get("family") != "random":
        try:
            channel_from_json(spec)
        except (QcapError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid channel spec: {exc}") from None
    return spec


def _declared_output_dim(spec: dict) -> int | None:
    if spec.get("family") == "random":
        return int(spec.get("d", 2))
    return channel_from_json(spec).dim_out


# ---------------------------------------------------------------------------
# sweep points (pure functions of their arguments; run in worker processes)


def basis_code(ch: QuantumChannel, n: int) -> ClassicalQuantumCode:
    """All computational-basis product codewords with the computational-basis projective decoder."""
    d = ch.dim_in
    import itertools

    words = [tuple(basis_state(d, i) for i in idx) for idx in itertools.product(range(d), repeat=n)]
    dim = ch.dim_out**n
    if dim < len(words):
        raise ConfigError("basis codes need dim_out >= dim_in")
    elems = [np.diag(np.eye(dim)[k]).astype(complex) for k in range(dim)]
    return ClassicalQuantumCode(n, tuple(words), Povm(tuple(elems)))


def _code_for_point(ch, cap, n, size, seed, kind) -> ClassicalQuantumCode:
    if kind == "basis":
        return basis_code(ch, n)
    axis, value = size
    M = max(1, int(round(math.exp(value * n * cap.chi)))) if axis == "rate" else int(value)
    if ch.dim_out**n > MAX_DIM:
        raise DimensionOverflow(f"output dimension {ch.dim_out ** n} exceeds cap {MAX_DIM}")
    return make_code(random_codebook(ch, cap.ensemble, n, M, seed), ch)


def _row(n, M, perf, lhs, rhs, slack) -> dict:
    return {"n": n, "M": M, "eps_max": perf.max_error, "eps_avg": perf.avg_error,
            "lhs": lhs, "rhs": rhs, "slack": slack, "lhs_per_n": lhs / n}


def _reference(ch, cap, n, additive, solver):
    if additive:
        return None, None
    power = channel_tensor_power(ch, n)
    cap_n = holevo_capacity(power, solver)
    return cap_n.chi, cap_n.omega_bar


def _code_point(task, ch, cap, n, size, seed, kind, additive, solver):
    code = _code_for_point(ch, cap, n, size, seed, kind)
    perf = evaluate_code(code, ch)
    point = {"n": n, "M": code.M, "size": list(size), "seed": seed,
             "performance": {"max_error": perf.max_error, "avg_error": perf.avg_error}}
    if task == "simulate":
        chi_n, omega_n = _reference(ch, cap, n, additive, solver)
        if omega_n is None:
            omega_n = tensor_all([cap.omega_bar] * n)
        outs = output_states(code, ch)
        lhs = float(relative_entropy(sum(outs) / len(outs), omega_n))
        point["output_divergence"] = lhs
        return point, _row(n, code.M, perf, lhs, math.nan, math.nan), True
    if task == "theorem1":
        chi_n, omega_n = _reference(ch, cap, n, additive, solver)
        rep = converse.theorem1_check(code, ch, cap, chi_n, omega_n)
    elif task == "theorem2":
        rep = converse.second_order_converse_check(code, ch)
    else:
        chi_n, omega_n = _reference(ch, cap, n, additive, solver)
        rep = converse.lemma5_check(code, ch, cap, chi_n, omega_n)
    point["report"] = rep.to_json()
    return point, _row(n, code.M, perf, rep.lhs, rep.rhs, rep.slack), rep.holds


def valid_chain_pairs(alphas, ts) -> list:
    """``(alpha, t)`` grid points where the chain parameters are admissible."""
    return [(a, t) for a in alphas for t in ts if 0 < a < 0.5 and t > converse.min_valid_t(a)]


def random_chain_instance(rng: np.random.Generator, spec: dict, n: int | None, M: int | None,
                          decoder: str, max_n: int = 3, max_M: int = 4):
    """Random channel (or the configured one), block code and decoder."""
    if spec.get("family") == "random":
        d = int(spec.get("d", 2))
        lo, hi = spec.get("kraus_range", [1, 3])
        ch = random_channel(d, d, int(rng.integers(lo, hi + 1)), rng)
    else:
        ch = channel_from_json(spec)
    n = int(rng.integers(1, max_n + 1)) if n is None else n
    M = int(rng.integers(1, max_M + 1)) if M is None else M
    words = [tuple(random_density(ch.dim_in, rng, rank=int(rng.integers(1, ch.dim_in + 1))) for _ in range(n))
             for _ in range(M)]
    use_pgm = decoder == "pgm" or (decoder == "mixed" and rng.random() < 0.5)
    if use_pgm:
        code = make_code(words, ch)
    else:
        code = make_code(words, ch, random_povm(ch.dim_out**n, M + int(rng.integers(0, 2)), rng))
    return ch, code


def _chain_point(spec, n, M, seed, pairs, delta_reg, decoder, max_n, max_M):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    ch, code = random_chain_instance(rng, spec, n, M, decoder, max_n, max_M)
    alpha, t = pairs[int(rng.integers(len(pairs)))]
    reports = converse.proof_chain_verify(code, ch, alpha, t, delta_reg)
    perf = evaluate_code(code, ch)
    last = reports[-1]
    point = {"n": code.n, "M": code.M, "alpha": alpha, "t": t, "seed": seed,
             "channel": channel_to_json(ch) if spec.get("family") == "random" else None,
             "steps": [r.to_json() for r in reports],
             "failed_steps": [r.name for r in reports if not r.holds]}
    row = _row(code.n, code.M, perf, last.lhs, last.rhs, last.slack)
    return point, row, all(r.holds for r in reports)


def _call(job):
    fn, args = job
    return fn(*args)


def _map(jobs: list, n_jobs: int) -> list:
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(_call, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))


def _point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# orchestration


@dataclass
class ExperimentResult:
    status: int
    report: dict
    rows: list

    @property
    def ok(self) -> bool:
        return self.status == EXIT_OK


def _solve(ch, solver, seed) -> CapacityResult:
    return holevo_capacity(ch, solver, seed=seed)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Execute ``cfg`` and return the report, summary rows and exit status."""
    report: dict[str, Any] = {"task": cfg.task, "config": cfg.to_json()}
    rows: list = []
    failures: list = []
    spec = cfg.channel

    if cfg.task == "proof-chain":
        alphas = cfg.params.get("alpha_values", [0.1, 0.25, 0.4])
        ts = cfg.params.get("t_values", [0.1, 0.5, 1.0])
        pairs = valid_chain_pairs(alphas, ts)
        if not pairs:
            raise ConfigError("no admissible (alpha, t) pair in the configured grids")
        report["admissible_pairs"] = [list(p) for p in pairs]
        n_axis = cfg.sweep.n_values or (None,)
        m_axis = cfg.sweep.M_values or (None,)
        jobs_list = []
        for n in n_axis:
            for M in m_axis:
                for _ in range(cfg.sweep.trials):
                    seed = _point_seed(cfg.seed, len(jobs_list))
                    jobs_list.append((_chain_point, (spec, n, M, seed, pairs,
                                                     float(cfg.params.get("delta_reg", 1e-9)),
                                                     cfg.params.get("decoder", "mixed"),
                                                     int(cfg.params.get("max_n", 3)),
                                                     int(cfg.params.get("max_M", 4)))))
        results = _map(jobs_list, jobs)
    else:
        ch = channel_from_json(spec)
        report["channel"] = channel_to_json(ch)
        cap = _solve(ch, cfg.solver, cfg.seed)
        report["capacity"] = capacity_to_json(cap)
        results = []
        if cfg.task in ("capacity", "certify"):
            gap = cap.certificate_gap
            if cfg.task == "certify":
                probes = int(cfg.params.get("probes", cfg.solver.probes))
                cert = lemma2_certificate(ch, cap.chi, cap.omega_bar, n_probes=probes, seed=cfg.seed,
                                          refinements=cfg.solver.refinements, extra_kets=cap.kets)
                gap = cert.gap
                report["certificate"] = {"gap": cert.gap, "max_divergence": cert.max_divergence,
                                         "probes": probes}
            holds = cap.converged and gap <= CERTIFICATE_TOL
            report["holds"] = holds
            rows.append({"n": 1, "M": "", "eps_max": "", "eps_avg": "", "lhs": cap.chi + gap,
                         "rhs": cap.chi, "slack": -gap, "lhs_per_n": cap.chi + gap})
            if not holds:
                failures.append(f"certificate gap {gap:.3g} exceeds {CERTIFICATE_TOL}")
        elif cfg.task == "uniqueness":
            restarts = int(cfg.params.get("restarts", 20))
            tol = float(cfg.params.get("tol", UNIQUENESS_TOL))
            runs = capacity_restarts(ch, restarts, cfg.seed, cfg.solver)
            dist = max_pairwise_distance([r.omega_bar for r in runs])
            report["restarts"] = [{"chi": r.chi, "omega_bar": matrix_to_json(r.omega_bar),
                                   "certificate_gap": r.certificate_gap} for r in runs]
            report["max_pairwise_distance"] = dist
            report["holds"] = dist <= tol
            rows.append({"n": 1, "M": "", "eps_max": "", "eps_avg": "", "lhs": dist, "rhs": tol,
                         "slack": tol - dist, "lhs_per_n": dist})
            if dist > tol:
                failures.append(f"optimal output states differ by {dist:.3g} > {tol}")
        else:
            kind = cfg.params.get("code", "random")
            additive = bool(cfg.params.get("additive", True))
            jobs_list = []
            for n in cfg.sweep.n_values:
                for size in cfg.sweep.sizes:
                    for _ in range(1 if kind == "basis" else cfg.sweep.trials):
                        seed = _point_seed(cfg.seed, len(jobs_list))
                        jobs_list.append((_code_point, (cfg.task, ch, cap, n, size, seed, kind, additive,
                                                        cfg.solver)))
            results = _map(jobs_list, jobs)

    if results:
        points = []
        for i, (point, row, holds) in enumerate(results):
            point["holds"] = bool(holds)
            points.append(point)
            rows.append(row)
            if not holds:
                which = point.get("failed_steps")
                detail = f": {', '.join(which)}" if which else ""
                failures.append(f"point {i} (n={row['n']}, M={row['M']}) violates its bound{detail}")
        report["points"] = points
        report["holds"] = not failures
    report["failures"] = failures
    status = EXIT_INVARIANT if failures else EXIT_OK
    return ExperimentResult(status, converse._jsonable(report), rows)


def summary_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    return buf.getvalue()


def write_outputs(result: ExperimentResult, prefix: str) -> tuple[str, str]:
    """Write ``<prefix>.report.json`` and ``<prefix>.summary.csv``."""
    parent = os.path.dirname(prefix)
    if parent:
        os.makedirs(parent, exist_ok=True)
    rep_path, csv_path = f"{prefix}.report.json", f"{prefix}.summary.csv"
    with open(rep_path, "w") as fh:
        json.dump(result.report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(csv_path, "w") as fh:
        fh.write(summary_csv(result.rows))
    return rep_path, csv_path


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return ExperimentConfig.from_dict(raw, os.path.dirname(os.path.abspath(path)))


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DimensionOverflow):
        return EXIT_DIMENSION
    if isinstance(exc, NotConverged):
        return EXIT_NOT_CONVERGED
    return EXIT_INVARIANT
