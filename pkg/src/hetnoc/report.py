"""Report files.

Layout of one run directory::

    report.txt                 latencies, clocks per layer, energy, normalised matrices
    report_Links.csv           raw data-flow matrices, one row per link
    report_Routers_Power.csv   event counts, energy and power per router
    VCUsage/<router>.csv       rows = ports, columns = number of non-empty VCs
    VCUsage/layer_<z>.csv      per-layer average
    BuffUsage/<router>_<dir>.csv  rows = depth positions, columns = VCs
    BuffUsage/layer_<z>_<dir>.csv
    summary.csv                one-line latency summary used by sweeps

Numbers are written with 6 significant digits so that identical runs give
byte-identical files.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .monitor import DataFlowMatrix, normalize, state_labels
from .power import (
    ColorActivity,
    EnergyCoefficients,
    EnergyReport,
    RouterEventCounts,
    default_table,
    evaluate,
    power_mw,
)
from .router import EVENT_NAMES
from .kernel import PS_PER_NS

LINKS_FILE = "report_Links.csv"
POWER_FILE = "report_Routers_Power.csv"
ENERGY_FILE = "report_Energy.csv"
REPORT_FILE = "report.txt"
SUMMARY_FILE = "summary.csv"
SWEEP_FILE = "sweep.csv"
VC_DIR = "VCUsage"
BUFF_DIR = "BuffUsage"

DEFAULT_ACTIVITY = ColorActivity(0.5, 0.0)


def fmt(x) -> str:
    """Fixed 6-significant-digit rendering (integers verbatim)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if x == 0.0:
        return "0"
    return f"{x:.6g}"


def _csv(rows: Iterable[Sequence[object]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([c if isinstance(c, str) else fmt(c) for c in row])
    return buf.getvalue()


def default_coefficients(n_colors: int, flit_size: int) -> EnergyCoefficients:
    return default_table([DEFAULT_ACTIVITY] * n_colors, flit_size)


def _port_labels(result, router: int) -> List[str]:
    ports = result.graph.ports_of(router)
    labels = []
    for p in ports:
        dup = sum(1 for q in ports if q.direction == p.direction) > 1
        labels.append(f"{p.direction.label}_{p.peer[0]}" if dup else p.direction.label)
    return labels


def _report_routers(result, report_routers: Optional[Sequence[int]]) -> List[int]:
    if not report_routers:
        return list(result.graph.routers)
    wanted = []
    for r in report_routers:
        if r in result.graph.nodes and result.graph.nodes[r].is_router and r not in wanted:
            wanted.append(r)
    return wanted


# -- summaries -----------------------------------------------------------------


@dataclass(frozen=True)
class RunSummary:
    rate: float
    restart: int
    seed: int
    flit_mean: float
    flit_median: float
    packet_mean: float
    packet_median: float
    network_mean: float
    network_median: float
    flits_injected: int
    flits_ejected: int


def summarize(result, rate: float = float("nan"), restart: int = 0) -> RunSummary:
    lat = result.latency
    ns = float(PS_PER_NS)
    return RunSummary(
        rate=rate,
        restart=restart,
        seed=int(result.extra.get("seed", 0)),
        flit_mean=lat.flit.mean / ns,
        flit_median=lat.flit.median / ns,
        packet_mean=lat.packet.mean / ns,
        packet_median=lat.packet.median / ns,
        network_mean=lat.network.mean / ns,
        network_median=lat.network.median / ns,
        flits_injected=result.injected_flits,
        flits_ejected=result.ejected_flits,
    )


def summary_to_csv(s: RunSummary) -> str:
    names = [f.name for f in fields(RunSummary)]
    return _csv([names, [getattr(s, n) for n in names]])


def summary_from_csv(text: str) -> RunSummary:
    rows = list(csv.reader(io.StringIO(text)))
    data = dict(zip(rows[0], rows[1]))
    kw = {}
    for f in fields(RunSummary):
        raw = data[f.name]
        kw[f.name] = int(raw) if f.type in ("int", int) else float(raw)
    return RunSummary(**kw)


# -- bundle ----------------------------------------------------------------------


def _matrix_block(m: DataFlowMatrix, title: str) -> List[str]:
    labels = m.labels
    width = max(len(x) for x in labels) + 2
    lines = [title, " " * width + "".join(f"{lab:>{width}}" for lab in labels)]
    if m.cycles_recorded == 0:
        lines.append("  (no cycles recorded)")
        return lines
    norm = normalize(m)
    for i, lab in enumerate(labels):
        lines.append(f"{lab:<{width}}" + "".join(f"{fmt(v):>{width}}" for v in norm[i]))
    return lines


def links_csv(result) -> str:
    labels = state_labels(result.n_colors)
    header = ["link", "driver", "driver_port", "sink", "sink_port", "cycles", "flits"]
    header += [f"{a}>{b}" for a in labels for b in labels]
    rows = [header]
    for link in result.links:
        m = result.matrices[link.id]
        rows.append(
            [link.id, link.driver[0], link.driver[1].label, link.sink[0], link.sink[1].label,
             m.cycles_recorded, m.flits] + [int(v) for v in m.counts.ravel()]
        )
    return _csv(rows)


def power_csv(events: Dict[int, RouterEventCounts], graph, cycles: Dict[int, int],
              energy: EnergyReport) -> str:
    header = ["router", "layer", "period_ps", "cycles", *EVENT_NAMES, "energy_pj", "power_mw"]
    rows = [header]
    for r in sorted(events):
        node = graph.nodes[r] if graph is not None else None
        period = node.clock_period_ps if node else 0
        layer = node.position[2] if node else 0
        dur_ns = cycles[r] * period / PS_PER_NS
        e = energy.router_pj[r]
        rows.append([r, layer, period, cycles[r], *events[r].as_tuple(), e, power_mw(e, dur_ns)])
    return _csv(rows)


def write_bundle(
    result,
    out_dir,
    report_routers: Optional[Sequence[int]] = None,
    coeffs: Optional[EnergyCoefficients] = None,
    header: Optional[Dict[str, object]] = None,
) -> List[Path]:
    """Write every report file for ``result`` into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / VC_DIR).mkdir(exist_ok=True)
        (out / BUFF_DIR).mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc.strerror}") from exc
    graph = result.graph
    coeffs = coeffs or default_coefficients(result.n_colors, graph.flit_size)
    energy = evaluate(result.events, result.matrices, coeffs, result.duration_ns)
    written: List[Path] = []

    def put(rel: str, text: str) -> None:
        p = out / rel
        p.write_text(text)
        written.append(p)

    # report.txt
    lines = ["hetnoc simulation report", ""]
    for k, v in (header or {}).items():
        lines.append(f"{k}: {v if isinstance(v, str) else fmt(v)}")
    lines += [
        f"simulated time [ns]: {fmt(result.duration_ns)}",
        f"flits injected: {result.injected_flits}",
        f"flits ejected: {result.ejected_flits}",
        f"flits resident: {result.resident_flits}",
        f"packets created: {result.packets_created}",
        f"packets completed: {result.packets_completed}",
        "",
        "latency [ns]   mean        median      std         samples",
    ]
    for name, st in result.latency.metrics().items():
        vals = [st.mean / PS_PER_NS, st.median / PS_PER_NS, st.std / PS_PER_NS]
        lines.append(f"{name:<14} " + "".join(f"{fmt(v):<12}" for v in vals) + str(st.count))
    lines += ["", "clocks per layer", "layer  period_ns  cycles"]
    layer_clock: Dict[int, Tuple[int, int]] = {}
    for r in graph.routers:
        z = graph.nodes[r].position[2]
        layer_clock.setdefault(z, (graph.nodes[r].clock_period_ps, result.node_cycles[r]))
    for z in sorted(layer_clock):
        period, cyc = layer_clock[z]
        lines.append(f"{z:<6} {fmt(period / PS_PER_NS):<10} {cyc}")
    lines += [
        "",
        "dynamic energy [pJ]",
        f"routers: {fmt(energy.router_total)}",
        f"links: {fmt(energy.link_total)}",
        f"total: {fmt(energy.total)}",
        f"link flits: {energy.flits}",
        f"energy per flit: {fmt(energy.energy_per_flit)}",
        "",
        "normalized data-flow matrices",
    ]
    for link in result.links:
        m = result.matrices[link.id]
        title = (f"link {link.id}: {link.driver[0]} ({link.driver[1].label}) -> "
                 f"{link.sink[0]} ({link.sink[1].label})")
        lines += [""] + _matrix_block(m, title)
    put(REPORT_FILE, "\n".join(lines) + "\n")

    put(LINKS_FILE, links_csv(result))
    put(POWER_FILE, power_csv(result.events, graph, result.node_cycles, energy))

    # usage histograms
    routers = _report_routers(result, report_routers)
    layer_vc: Dict[int, Dict[str, List[np.ndarray]]] = defaultdict(lambda: defaultdict(list))
    layer_buf: Dict[int, Dict[str, List[np.ndarray]]] = defaultdict(lambda: defaultdict(list))
    for r in routers:
        ports = result.usage.routers[r]
        labels = _port_labels(result, r)
        vmax = max(len(p.vc_usage) for p in ports)
        rows = [["port"] + [str(k) for k in range(vmax)]]
        for lab, pu in zip(labels, ports):
            vals = list(pu.vc_usage) + [0] * (vmax - len(pu.vc_usage))
            rows.append([lab] + [int(v) for v in vals])
        put(f"{VC_DIR}/{r}.csv", _csv(rows))
        z = graph.nodes[r].position[2]
        for lab, pu in zip(labels, ports):
            pos = pu.buffer_positions
            brows = [["position"] + [f"vc{v}" for v in range(pos.shape[1])]]
            for k in range(pos.shape[0]):
                brows.append([k] + [int(x) for x in pos[k]])
            put(f"{BUFF_DIR}/{r}_{lab}.csv", _csv(brows))
            layer_vc[z][pu.direction.label].append(np.asarray(pu.vc_usage, dtype=np.float64))
            layer_buf[z][pu.direction.label].append(pos.astype(np.float64))
    order = ["local", "east", "west", "north", "south", "up", "down"]
    for z in sorted(layer_vc):
        by_dir = layer_vc[z]
        width = max(len(a) for arrs in by_dir.values() for a in arrs)
        rows = [["port"] + [str(k) for k in range(width)]]
        for d in order:
            if d in by_dir:
                arrs = [np.pad(a, (0, width - len(a))) for a in by_dir[d]]
                rows.append([d] + [float(v) for v in np.mean(arrs, axis=0)])
        put(f"{VC_DIR}/layer_{z}.csv", _csv(rows))
        for d in order:
            arrs = layer_buf[z].get(d)
            if not arrs:
                continue
            h = max(a.shape[0] for a in arrs)
            w = max(a.shape[1] for a in arrs)
            padded = [np.pad(a, ((0, h - a.shape[0]), (0, w - a.shape[1]))) for a in arrs]
            avg = np.mean(padded, axis=0)
            brows = [["position"] + [f"vc{v}" for v in range(w)]]
            for k in range(h):
                brows.append([k] + [float(x) for x in avg[k]])
            put(f"{BUFF_DIR}/layer_{z}_{d}.csv", _csv(brows))

    rate = float(result.extra.get("rate", float("nan")))
    restart = int(result.extra.get("restart", 0))
    put(SUMMARY_FILE, summary_to_csv(summarize(result, rate, restart)))
    return written


# -- loaders -----------------------------------------------------------------------


def _read_rows(path) -> List[List[str]]:
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if row]


@dataclass
class LinkTable:
    labels: List[str]
    matrices: Dict[int, DataFlowMatrix]
    endpoints: Dict[int, Tuple[int, str, int, str]]


def load_links_csv(path) -> LinkTable:
    rows = _read_rows(path)
    header = rows[0]
    pairs = header[7:]
    s = math.isqrt(len(pairs))
    if s * s != len(pairs) or s < 3 or (s - 3) % 2:
        raise ValueError(f"{path}: malformed matrix header")
    n_colors = (s - 3) // 2
    labels = state_labels(n_colors)
    expect = [f"{a}>{b}" for a in labels for b in labels]
    if pairs != expect:
        raise ValueError(f"{path}: unexpected state labels")
    mats, ends = {}, {}
    for row in rows[1:]:
        lid = int(row[0])
        counts = np.array([int(v) for v in row[7:]], dtype=np.int64).reshape(s, s)
        mats[lid] = DataFlowMatrix(lid, n_colors, counts)
        ends[lid] = (int(row[1]), row[2], int(row[3]), row[4])
    return LinkTable(labels, mats, ends)


@dataclass
class RouterPowerRow:
    router: int
    layer: int
    period_ps: int
    cycles: int
    events: RouterEventCounts
    energy_pj: float
    power_mw: float


def load_power_csv(path) -> Dict[int, RouterPowerRow]:
    rows = _read_rows(path)
    header = rows[0]
    if header[4:9] != list(EVENT_NAMES):
        raise ValueError(f"{path}: unexpected header")
    out = {}
    for row in rows[1:]:
        r = int(row[0])
        out[r] = RouterPowerRow(
            r, int(row[1]), int(row[2]), int(row[3]),
            RouterEventCounts.from_tuple([int(v) for v in row[4:9]]),
            float(row[9]), float(row[10]),
        )
    return out


def load_usage_csv(path) -> Tuple[List[str], np.ndarray]:
    """Row labels and the numeric table of a VCUsage or BuffUsage file."""
    rows = _read_rows(path)
    labels = [r[0] for r in rows[1:]]
    data = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return labels, data


# -- energy re-evaluation --------------------------------------------------------


def energy_from_run(run_dir, coeffs: EnergyCoefficients) -> Tuple[EnergyReport, Dict[int, RouterPowerRow]]:
    """Evaluate ``coeffs`` on a finished run's stored matrices and counts."""
    run = Path(run_dir)
    links_path, power_path = run / LINKS_FILE, run / POWER_FILE
    for p in (links_path, power_path):
        if not p.is_file():
            raise FileNotFoundError(f"{p} is missing; not a run directory")
    table = load_links_csv(links_path)
    power = load_power_csv(power_path)
    n_colors = (len(table.labels) - 3) // 2
    if n_colors != coeffs.n_colors:
        raise ValueError(
            f"state mismatch: run has {len(table.labels)} link states, coefficients have "
            f"{len(coeffs.labels)}"
        )
    duration = max((row.cycles * row.period_ps for row in power.values()), default=0) / PS_PER_NS
    events = {r: row.events for r, row in power.items()}
    return evaluate(events, table.matrices, coeffs, duration), power


def energy_csv(energy: EnergyReport, power: Dict[int, RouterPowerRow]) -> str:
    rows: List[List[object]] = [["kind", "id", "energy_pj", "power_mw"]]
    for r in sorted(energy.router_pj):
        row = power.get(r)
        dur = row.cycles * row.period_ps / PS_PER_NS if row else energy.duration_ns
        rows.append(["router", r, energy.router_pj[r], power_mw(energy.router_pj[r], dur)])
    for l in sorted(energy.link_pj):
        rows.append(["link", l, energy.link_pj[l], power_mw(energy.link_pj[l], energy.duration_ns)])
    rows.append(["total", "routers", energy.router_total, power_mw(energy.router_total, energy.duration_ns)])
    rows.append(["total", "links", energy.link_total, power_mw(energy.link_total, energy.duration_ns)])
    rows.append(["total", "all", energy.total, power_mw(energy.total, energy.duration_ns)])
    rows.append(["per_flit", "links", energy.link_energy_per_flit, ""])
    rows.append(["per_flit", "all", energy.energy_per_flit, ""])
    return _csv(rows)


# -- sweeps ------------------------------------------------------------------------

SWEEP_COLUMNS = [
    "rate", "runs",
    "flit_mean", "flit_median", "flit_std",
    "packet_mean", "packet_median", "packet_std",
    "network_mean", "network_median", "network_std",
]


@dataclass(frozen=True)
class SweepRow:
    rate: float
    runs: int
    flit_mean: float
    flit_median: float
    flit_std: float
    packet_mean: float
    packet_median: float
    packet_std: float
    network_mean: float
    network_median: float
    network_std: float


def aggregate_sweep(summaries: Sequence[RunSummary], config_ids: Optional[Sequence[str]] = None) -> List[SweepRow]:
    """Mean, median and standard deviation of per-run mean latencies, per rate."""
    if not summaries:
        raise ValueError("no runs to aggregate")
    if config_ids is not None and len(set(config_ids)) > 1:
        raise ValueError("cannot aggregate runs from different configurations")
    by_rate: Dict[float, List[RunSummary]] = defaultdict(list)
    for s in summaries:
        by_rate[s.rate].append(s)
    rows = []
    for rate in sorted(by_rate):
        runs = sorted(by_rate[rate], key=lambda s: s.restart)
        stats = []
        for metric in ("flit", "packet", "network"):
            vals = np.array([getattr(s, f"{metric}_mean") for s in runs], dtype=np.float64)
            stats += [float(np.mean(vals)), float(np.median(vals)), float(np.std(vals))]
        rows.append(SweepRow(rate, len(runs), *stats))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    return _csv([SWEEP_COLUMNS] + [[getattr(r, c) for c in SWEEP_COLUMNS] for r in rows])


def load_sweep_csv(path) -> List[SweepRow]:
    rows = _read_rows(path)
    if rows[0] != SWEEP_COLUMNS:
        raise ValueError(f"{path}: unexpected header")
    out = []
    for row in rows[1:]:
        vals = dict(zip(SWEEP_COLUMNS, row))
        out.append(SweepRow(float(vals["rate"]), int(vals["runs"]),
                            *[float(vals[c]) for c in SWEEP_COLUMNS[2:]]))
    return out
