"""Command line interface.

Exit codes: 0 success, 1 configuration error, 2 runtime invariant
violation, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import report
from .config import build_network, check_mapping, load_config, load_task_lib
from .errors import ConfigError, ConfigWarning, RoutingError, SimulationError, TopologyError
from .power import load_coefficients
from .routing import canonical_algorithm, port_directions, turn_report
from .sim import run_simulation, validate_routes

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_IO = 3


@dataclass(frozen=True)
class Job:
    rate_index: int
    rate: float
    restart: int
    seed: int
    out_dir: str


def job_seed(base: int, rate_index: int, restart: int) -> int:
    """Distinct deterministic seed per (base seed, rate index, restart)."""
    return int(np.random.SeedSequence([base, rate_index, restart]).generate_state(1, np.uint32)[0])


def plan_jobs(rates: Sequence[float], restarts: int, base_seed: int, out_dir: Path) -> List[Job]:
    jobs = []
    for i, rate in enumerate(rates):
        for k in range(restarts):
            jobs.append(Job(i, rate, k, job_seed(base_seed, i, k),
                            str(out_dir / f"rate_{rate:.4f}" / f"run_{k}")))
    return jobs


def _config_id(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _load(args):
    cfg, shorthand = load_config(args.config)
    graph = build_network(shorthand)
    return cfg, shorthand, graph


def run_job(config_path: str, job: Job) -> report.RunSummary:
    """Execute one sweep job and write its bundle (runs in a worker process)."""
    cfg, shorthand = load_config(config_path)
    result = run_simulation(cfg, shorthand, rate=job.rate, seed=job.seed)
    result.extra.update(rate=job.rate, restart=job.restart)
    report.write_bundle(result, job.out_dir, cfg.report_routers,
                        header={"benchmark": cfg.benchmark, "rate": job.rate, "seed": job.seed})
    if not result.conservation_holds():
        raise SimulationError(f"flit conservation violated in job rate={job.rate} restart={job.restart}")
    return report.summarize(result, job.rate, job.restart)


# -- subcommands -------------------------------------------------------------


def cmd_validate(args) -> int:
    cfg, shorthand, graph = _load(args)
    pes = graph.processing_elements
    if cfg.benchmark == "task":
        app, mapping = load_task_lib(cfg.task_lib_dir)
        check_mapping(mapping, app, graph)
        print(f"application: {len(app.tasks)} tasks, {len(app.data_types)} data types")
    else:
        validate_routes(graph, None, ((s, d) for s in pes for d in pes))
    print(f"network: {graph.summary()}")
    print(f"benchmark: {cfg.benchmark}")
    if cfg.benchmark == "synthetic":
        print(f"rates: {', '.join(report.fmt(r) for r in cfg.synthetic.rates())}")
    print("ok")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg, shorthand, graph = _load(args)
    seed = cfg.seed if args.seed is None else args.seed
    rate = args.rate if args.rate is not None else cfg.synthetic.run_rate_min
    result = run_simulation(cfg, shorthand, rate=rate, seed=seed, graph=graph)
    coeffs = load_coefficients(args.coeffs) if args.coeffs else None
    out = Path(args.out) if args.out else Path(args.config).parent / cfg.synthetic.sim_dir / "run"
    header = {"benchmark": cfg.benchmark, "seed": seed}
    if cfg.benchmark == "synthetic":
        header["rate"] = rate
        result.extra["rate"] = rate
    report.write_bundle(result, out, cfg.report_routers, coeffs, header)
    if not result.conservation_holds():
        print("error: flit conservation violated", file=sys.stderr)
        return EXIT_RUNTIME
    lat = result.latency
    print(f"flit latency mean {report.fmt(lat.flit.mean / 1000)} ns over {lat.flit.count} flits")
    print(f"reports written to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, shorthand, graph = _load(args)
    if cfg.benchmark != "synthetic":
        raise ConfigError(Path(args.config).name, "[Config] benchmark", "sweep requires benchmark = synthetic")
    pes = graph.processing_elements
    validate_routes(graph, None, ((s, d) for s in pes for d in pes))
    base = cfg.seed if args.seed is None else args.seed
    out = Path(args.out) if args.out else Path(args.config).parent / cfg.synthetic.sim_dir
    jobs = plan_jobs(cfg.synthetic.rates(), cfg.synthetic.restarts, base, out)
    workers = max(1, args.jobs or cfg.synthetic.num_cores)
    config_path = str(Path(args.config).resolve())
    summaries: List[report.RunSummary] = []
    if workers == 1:
        outcomes = ((job, lambda job=job: run_job(config_path, job)) for job in jobs)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        futures = [(job, pool.submit(run_job, config_path, job)) for job in jobs]
        outcomes = ((job, fut.result) for job, fut in futures)
    try:
        for job, get in outcomes:
            try:
                summaries.append(get())
            except Exception as exc:
                print(f"error: job rate={report.fmt(job.rate)} restart={job.restart} "
                      f"seed={job.seed} failed: {exc}", file=sys.stderr)
                if isinstance(exc, (ConfigError, TopologyError)):
                    return EXIT_CONFIG
                if isinstance(exc, (SimulationError, RoutingError)):
                    return EXIT_RUNTIME
                return EXIT_IO
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    rows = report.aggregate_sweep(summaries, [_config_id(Path(config_path))])
    out.mkdir(parents=True, exist_ok=True)
    (out / report.SWEEP_FILE).write_text(report.sweep_csv(rows))
    print(f"{len(jobs)} jobs, {workers} workers; aggregate written to {out / report.SWEEP_FILE}")
    return EXIT_OK


def cmd_turns(args) -> int:
    cfg, shorthand, graph = _load(args)
    try:
        algorithm = canonical_algorithm(args.algorithm or shorthand.routing)
    except KeyError:
        raise ConfigError("turns", "algorithm", f"unknown routing algorithm {args.algorithm!r}") from None
    rep = turn_report(graph, algorithm, fully_connected=args.fully_connected)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["router", "ports", "allowed", "candidates", "reduction", "turns"])
    for r in sorted(rep.masks):
        ports = port_directions(graph, r)
        n_ports = len(ports)
        cands = n_ports * (n_ports - 1)
        turns = " ".join(f"{a.label}>{b.label}" for a, b in sorted(rep.masks[r].allowed))
        w.writerow([r, n_ports, len(rep.masks[r]), cands, report.fmt(rep.reductions[r]), turns])
    w.writerow(["average", "", "", "", report.fmt(rep.average_reduction), ""])
    text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_energy(args) -> int:
    coeffs = load_coefficients(args.coeffs)
    energy, power = report.energy_from_run(args.run_dir, coeffs)
    out = Path(args.out) if args.out else Path(args.run_dir) / report.ENERGY_FILE
    if out.is_dir():
        out = out / report.ENERGY_FILE
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.energy_csv(energy, power))
    print(f"total {report.fmt(energy.total)} pJ, {report.fmt(energy.energy_per_flit)} pJ/flit -> {out}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetnoc", description="Heterogeneous 2D/3D NoC simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", required=True, help="INI entry file")
        return p

    p = with_config(sub.add_parser("validate", help="check a configuration without simulating"))
    p.set_defaults(func=cmd_validate)

    p = with_config(sub.add_parser("run", help="run one simulation and write reports"))
    p.add_argument("--out", help="report directory (default: <simDir>/run next to the config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--rate", type=float, help="injection rate for synthetic runs (default runRateMin)")
    p.add_argument("--coeffs", help="energy coefficient CSV")
    p.set_defaults(func=cmd_run)

    p = with_config(sub.add_parser("sweep", help="injection-rate sweep with restarts"))
    p.add_argument("--out", help="sweep directory (default: <simDir> next to the config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker processes (overrides numCores)")
    p.set_defaults(func=cmd_sweep)

    p = with_config(sub.add_parser("turns", help="turn masks and crossbar reduction as CSV"))
    p.add_argument("--algorithm", help="routing algorithm (default: the configured one)")
    p.add_argument("--fully-connected", action="store_true", help="baseline without turn removal")
    p.add_argument("--out", help="also write the CSV to this file")
    p.set_defaults(func=cmd_turns)

    p = sub.add_parser("energy", help="re-evaluate energy of a finished run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--coeffs", required=True, help="energy coefficient CSV")
    p.add_argument("--out", help="output file or directory (default: <run-dir>/report_Energy.csv)")
    p.set_defaults(func=cmd_energy)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings():
        warnings.simplefilter("always", ConfigWarning)
        warnings.showwarning = lambda msg, *a, **k: print(f"warning: {msg}", file=sys.stderr)
        try:
            return args.func(args)
        except (ConfigError, TopologyError, RoutingError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except SimulationError as exc:
            print(f"error: invariant violated: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
