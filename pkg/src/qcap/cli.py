"""Command-line entry point: ``qcap <task> --config FILE``."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace

from .errors import ConfigError, QcapError
from .experiment import (
    EXIT_CONFIG,
    EXIT_DIMENSION,
    EXIT_INVARIANT,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    TASKS,
    ExperimentConfig,
    exit_code_for,
    load_config,
    run_experiment,
    write_outputs,
)

EPILOG = f"""\
exit status:
  {EXIT_OK}  every asserted invariant holds
  {EXIT_INVARIANT}  an asserted invariant failed (see the report's "failures")
  {EXIT_CONFIG}  configuration error
  {EXIT_DIMENSION}  a tensor-power dimension exceeds the cap
  {EXIT_NOT_CONVERGED}  the capacity solver did not converge

Reports are stored in nats; --bits only changes what is printed.
"""


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qcap",
        description="Holevo capacities, code simulations and converse-bound checks.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps (default 1)")
    p.add_argument("--out", help="output prefix (overrides the config)")
    p.add_argument("--bits", action="store_true", help="print entropic values in bits")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _override(cfg: ExperimentConfig, task: str, seed: int | None, out: str | None) -> ExperimentConfig:
    if cfg.task != task:
        raise ConfigError(f"config task {cfg.task!r} does not match command {task!r}")
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if out is not None:
        changes["output"] = out
    return replace(cfg, **changes) if changes else cfg


def _fmt(v, scale: float) -> str:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = float(v)
        return f"{v * scale:.6g}" if math.isfinite(v) else str(v)
    return str(v)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _override(load_config(args.config), args.task, args.seed, args.out)
        result = run_experiment(cfg, jobs=max(1, args.jobs))
    except QcapError as exc:
        print(f"qcap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    rep_path, csv_path = write_outputs(result, cfg.output)
    scale = 1.0 / math.log(2.0) if args.bits else 1.0
    unit = "bits" if args.bits else "nats"
    cap = result.report.get("capacity")
    if cap:
        print(f"chi = {_fmt(cap['chi'], scale)} {unit}, certificate gap = {_fmt(cap['certificate_gap'], scale)}")
    for row in result.rows[:20]:
        print("  " + ", ".join(f"{k}={_fmt(row[k], scale if k in ('lhs', 'rhs', 'slack', 'lhs_per_n') else 1.0)}"
                                for k in row))
    if len(result.rows) > 20:
        print(f"  ... {len(result.rows) - 20} more rows in {csv_path}")
    for f in result.report.get("failures", [])[:10]:
        print(f"FAILED: {f}", file=sys.stderr)
    print(f"wrote {rep_path} and {csv_path}")
    return result.status


if __name__ == "__main__":
    sys.exit(main())
