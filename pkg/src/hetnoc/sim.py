"""Simulation assembly: graph to engine layout, traffic binding and results."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from . import _backend
from .config import NetworkShorthand, SimulationConfig, build_network, check_mapping, load_task_lib
from .errors import ConfigError, RoutingError, SimulationError
from .kernel import PS_PER_NS
from .monitor import DataFlowMatrix, LatencyAccumulator, PortUsage, UsageHistograms
from .power import RouterEventCounts
from .router import EVENT_NAMES, PortView, RouterView
from .routing import next_hop, trace_path
from .topology import Direction, LinkRecord, NetworkGraph, links_of
from .traffic import ApplicationSpec, TaskEngine, synthetic_phases, uniform_packets

DEFAULT_CHUNK_CYCLES = 20000


@dataclass
class Layout:
    """Flat arrays for the engine plus the maps back to graph identifiers."""

    arrays: Dict[str, object]
    node_ids: List[int]
    index: Dict[int, int]
    port_keys: List[Tuple[int, int]]
    port_dirs: List[Direction]
    links: List[LinkRecord]


def build_layout(
    graph: NetworkGraph,
    flits_per_packet: int,
    n_colors: int = 1,
    routing: Optional[str] = None,
    task_pes: Iterable[int] = (),
) -> Layout:
    node_ids = sorted(graph.nodes)
    index = {nid: i for i, nid in enumerate(node_ids)}
    port_keys: List[Tuple[int, int]] = []
    port_dirs: List[Direction] = []
    node_port_start, node_port_count = [], []
    for nid in node_ids:
        node_port_start.append(len(port_keys))
        plist = graph.ports_of(nid)
        node_port_count.append(len(plist))
        for p in plist:
            port_keys.append(p.key)
            port_dirs.append(p.direction)
    port_index = {k: i for i, k in enumerate(port_keys)}
    port_peer = [port_index[(peer, owner)] for owner, peer in port_keys]
    port_vc_count, port_vc_base, vc_depth, vc_buf_base = [], [], [], []
    buf_total = 0
    for owner, peer in port_keys:
        rec = graph.ports[(owner, peer)]
        port_vc_base.append(len(vc_depth))
        port_vc_count.append(rec.vc_count)
        for d in rec.vc_depths:
            vc_depth.append(d)
            vc_buf_base.append(buf_total)
            buf_total += d
    # link i is driven from port i towards its peer, matching links_of order
    links = links_of(graph)
    for i, link in enumerate(links):
        owner, peer = port_keys[i]
        if link.driver[0] != owner or graph.nodes[link.sink[0]].id != peer:
            raise SimulationError("link order does not match port order")
    cq_cap = [sum(graph.ports[port_keys[port_peer[i]]].vc_depths) for i in range(len(port_keys))]
    cq_base = list(np.cumsum([0] + cq_cap[:-1]).tolist()) if cq_cap else []

    n = len(node_ids)
    route_port = [-1] * (n * n)
    for r in graph.routers:
        ri = index[r]
        for pe in graph.processing_elements:
            try:
                nxt = next_hop(graph, routing, r, pe)
            except RoutingError:
                nxt = None
            if nxt is not None:
                route_port[ri * n + index[pe]] = port_index[(r, nxt)]
    task_set = set(task_pes)
    arrays = {
        "n_nodes": n,
        "n_ports": len(port_keys),
        "n_vcs": len(vc_depth),
        "n_links": len(port_keys),
        "stride": flits_per_packet,
        "n_colors": n_colors,
        "vmax": max(port_vc_count, default=1),
        "dmax": max(vc_depth, default=1),
        "maxp": max(node_port_count, default=1),
        "buf_total": buf_total,
        "node_is_router": [1 if graph.nodes[nid].is_router else 0 for nid in node_ids],
        "node_period": [graph.nodes[nid].clock_period_ps for nid in node_ids],
        "node_port_start": node_port_start,
        "node_port_count": node_port_count,
        "node_has_tasks": [1 if nid in task_set else 0 for nid in node_ids],
        "port_peer": port_peer,
        "port_vc_count": port_vc_count,
        "port_vc_base": port_vc_base,
        "port_in_link": port_peer,
        "port_out_link": list(range(len(port_keys))),
        "vc_depth": vc_depth,
        "vc_buf_base": vc_buf_base,
        "route_port": route_port,
        "link_cq_base": cq_base,
        "link_cq_cap": cq_cap,
    }
    return Layout(arrays, node_ids, index, port_keys, port_dirs, links)


def validate_routes(graph: NetworkGraph, routing: Optional[str], pairs: Iterable[Tuple[int, int]]) -> None:
    """Walk every (src PE, dst PE) path; raises :class:`RoutingError` if one breaks."""
    for src, dst in pairs:
        if src != dst:
            trace_path(graph, routing, src, dst)


@dataclass
class RunResult:
    graph: NetworkGraph
    until_ps: int
    n_colors: int
    node_cycles: Dict[int, int]
    latency: LatencyAccumulator
    matrices: Dict[int, DataFlowMatrix]
    links: List[LinkRecord]
    events: Dict[int, RouterEventCounts]
    usage: UsageHistograms
    injected_flits: int
    ejected_flits: int
    resident_flits: int
    packets_created: int
    packets_completed: int
    turn_counts: Dict[int, Dict[Tuple[Direction, Direction], int]]
    backend: str = "compiled"
    extra: Dict[str, object] = field(default_factory=dict)

    @property
    def duration_ns(self) -> float:
        return (self.until_ps + 1) / PS_PER_NS if self.until_ps >= 0 else 0.0

    def conservation_holds(self) -> bool:
        return self.injected_flits == self.ejected_flits + self.resident_flits


class _TaskHook:
    def __init__(self, engine: TaskEngine, node_ids: Sequence[int]):
        self.tasks = engine
        self.node_ids = node_ids

    def on_edge(self, node_index: int, now: int) -> None:
        self.tasks.on_edge(self.node_ids[node_index], now)

    def on_delivery(self, pid: int, now: int) -> None:
        self.tasks.on_delivery(pid, now)


class Simulation:
    """One network instance driven by the engine.

    Node identifiers in the public API are graph ids; times are picoseconds.
    """

    def __init__(
        self,
        graph: NetworkGraph,
        flits_per_packet: int,
        n_colors: int = 1,
        routing: Optional[str] = None,
        backend: Optional[str] = None,
        task_engine: Optional[TaskEngine] = None,
        trace_links: bool = False,
        trace_edges: bool = False,
        seed: int = 0,
    ):
        self.graph = graph
        self.flits_per_packet = flits_per_packet
        self.n_colors = n_colors
        self.routing = routing
        task_pes = task_engine.hosting_pes if task_engine is not None else ()
        self.layout = build_layout(graph, flits_per_packet, n_colors, routing, task_pes)
        self.module = _backend.load(backend)
        hook = _TaskHook(task_engine, self.layout.node_ids) if task_engine is not None else None
        self.engine = self.module.Engine(self.layout.arrays, hook, trace_links, trace_edges)
        self.task_engine = task_engine
        if task_engine is not None:
            task_engine.bind(self._task_packet)
        self.latency = LatencyAccumulator(seed)
        self.packets_completed = 0
        self.until_ps = -1

    @property
    def backend(self) -> str:
        return _backend.backend_name(self.module)

    def _task_packet(self, src: int, dst: int, color: int, created: int) -> int:
        return self.add_packet(src, dst, color, created)

    def add_packet(
        self, src: int, dst: int, color: int, created_ps: int, measured: bool = True, length: Optional[int] = None
    ) -> int:
        idx = self.layout.index
        return self.engine.add_packet(
            idx[src], idx[dst], color, length or self.flits_per_packet, created_ps, measured
        )

    def arrays(self) -> Dict[str, np.ndarray]:
        return {k: np.asarray(v) for k, v in self.engine.arrays().items()}

    def next_edge(self) -> int:
        a = self.engine.arrays()
        return int(min(np.asarray(a["dom_next"])))

    def _drain(self) -> None:
        acc = self.latency
        for v in self.engine.drain_latencies():
            acc.flit.add(v)
        done = self.engine.drain_completed()
        if done:
            a = self.engine.arrays()
            created, injected, ejected, measured = (
                np.asarray(a["pkt_created"]), np.asarray(a["pkt_injected"]),
                np.asarray(a["pkt_ejected"]), np.asarray(a["pkt_measured"]),
            )
            for pid in done:
                self.packets_completed += 1
                if measured[pid]:
                    acc.record_packet(int(created[pid]), int(injected[pid]), int(ejected[pid]))

    def run(
        self,
        until_ps: int,
        on_edge: Optional[Callable[["Simulation", int], None]] = None,
        chunk_cycles: int = DEFAULT_CHUNK_CYCLES,
    ) -> None:
        """Advance through every clock edge ``<= until_ps``.

        ``on_edge`` is called after each timestamp (slow; for instrumented
        runs only).
        """
        if until_ps < self.until_ps:
            raise SimulationError("simulation time cannot go backwards")
        if on_edge is not None:
            while True:
                t = self.next_edge()
                if t > until_ps:
                    break
                self.engine.run(t)
                self._drain()
                on_edge(self, t)
        else:
            step = chunk_cycles * min(self.layout.arrays["node_period"])
            t = max(self.until_ps, 0)
            while t < until_ps:
                t = min(t + step, until_ps)
                self.engine.run(t)
                self._drain()
            if until_ps == 0:
                self.engine.run(0)
                self._drain()
        self.until_ps = until_ps

    # -- views and checks ------------------------------------------------

    def router_view(self, router: int) -> RouterView:
        a = self.arrays()
        i = self.layout.index[router]
        start = self.layout.arrays["node_port_start"][i]
        count = self.layout.arrays["node_port_count"][i]
        lay = self.layout.arrays
        ports = []
        for p in range(start, start + count):
            base, nv = lay["port_vc_base"][p], lay["port_vc_count"][p]
            q = lay["port_peer"][p]
            qb, qn = lay["port_vc_base"][q], lay["port_vc_count"][q]
            ports.append(
                PortView(
                    self.layout.port_dirs[p],
                    self.layout.port_keys[p][1],
                    tuple(int(x) for x in a["vc_count"][base:base + nv]),
                    tuple(int(x) for x in a["vc_depth"][base:base + nv]),
                    tuple(int(x) for x in a["credits"][qb:qb + qn]),
                    tuple(int(x) for x in a["vc_owner"][qb:qb + qn]),
                )
            )
        return RouterView(router, tuple(ports))

    def credit_violations(self) -> List[Tuple[int, int]]:
        """(link, vc) pairs where occupancy + credits + in flight != depth."""
        a = self.arrays()
        lay = self.layout.arrays
        bad = []
        for p in range(lay["n_ports"]):
            link = lay["port_in_link"][p]
            head, n = int(a["cq_head"][link]), int(a["cq_len"][link])
            cap, base = lay["link_cq_cap"][link], lay["link_cq_base"][link]
            queued = [int(a["cq_vc"][base + (head + k) % cap]) for k in range(n)]
            for v in range(lay["port_vc_count"][p]):
                g = lay["port_vc_base"][p] + v
                in_reg = 1 if a["reg_flit"][link] >= 0 and a["reg_vc"][link] == g else 0
                total = int(a["vc_count"][g]) + int(a["credits"][g]) + queued.count(g) + in_reg
                if total != lay["vc_depth"][g]:
                    bad.append((link, v))
        return bad

    def resident_flits(self) -> int:
        a = self.arrays()
        return int(a["vc_count"].sum()) + int((a["reg_flit"] >= 0).sum())

    # -- results -------------------------------------------------------------

    def result(self) -> RunResult:
        a = self.arrays()
        lay = self.layout.arrays
        graph = self.graph
        ids = self.layout.node_ids
        dom = a["node_domain"]
        node_cycles = {nid: int(a["dom_edges"][dom[i]]) for i, nid in enumerate(ids)}
        s = 2 * self.n_colors + 3
        counts = a["link_counts"].reshape(lay["n_links"], s, s)
        matrices = {l: DataFlowMatrix(l, self.n_colors, counts[l].copy()) for l in range(lay["n_links"])}
        ev = a["events"].reshape(-1, len(EVENT_NAMES))
        events = {r: RouterEventCounts.from_tuple(ev[self.layout.index[r]]) for r in graph.routers}
        usage = UsageHistograms()
        turns: Dict[int, Dict[Tuple[Direction, Direction], int]] = {}
        row = lay["vmax"] + 1
        maxp = lay["maxp"]
        for r in graph.routers:
            i = self.layout.index[r]
            start, count = lay["node_port_start"][i], lay["node_port_count"][i]
            ports = []
            tmap: Dict[Tuple[Direction, Direction], int] = {}
            for p in range(start, start + count):
                nv = lay["port_vc_count"][p]
                base = lay["port_vc_base"][p]
                depth = max(lay["vc_depth"][base:base + nv])
                vcu = a["vc_usage"][p * row:p * row + nv + 1].copy()
                hist = np.zeros((depth, nv), dtype=np.int64)
                for v in range(nv):
                    g = base + v
                    hist[:, v] = a["buff_hist"][g * lay["dmax"]:g * lay["dmax"] + depth]
                ports.append(PortUsage(self.layout.port_dirs[p], vcu, hist))
                for o in range(start, start + count):
                    c = int(a["turn_counts"][p * maxp + (o - start)])
                    if c:
                        tmap[(self.layout.port_dirs[p].inverse, self.layout.port_dirs[o])] = c
            usage.add_router(r, ports, node_cycles[r])
            turns[r] = tmap
        return RunResult(
            graph=graph,
            until_ps=self.until_ps,
            n_colors=self.n_colors,
            node_cycles=node_cycles,
            latency=self.latency,
            matrices=matrices,
            links=self.layout.links,
            events=events,
            usage=usage,
            injected_flits=int(self.engine.injected_flits),
            ejected_flits=int(self.engine.ejected_flits),
            resident_flits=self.resident_flits(),
            packets_created=int(self.engine.pkt_count),
            packets_completed=self.packets_completed,
            turn_counts=turns,
            backend=self.backend,
        )


# -- workload drivers ---------------------------------------------------------


def run_synthetic(
    graph: NetworkGraph,
    cfg: SimulationConfig,
    rate: float,
    seed: Optional[int] = None,
    routing: Optional[str] = None,
    backend: Optional[str] = None,
    **sim_kwargs,
) -> RunResult:
    """Uniform random traffic with the configured warmup and run phases."""
    seed = cfg.seed if seed is None else seed
    pes = graph.processing_elements
    validate_routes(graph, routing, ((s, d) for s in pes for d in pes))
    sim = Simulation(graph, cfg.flits_per_packet, 1, routing, backend, seed=seed, **sim_kwargs)
    phases = synthetic_phases(cfg.synthetic, rate)
    periods = {pe: graph.nodes[pe].clock_period_ps for pe in pes}
    schedule = uniform_packets(pes, periods, phases, cfg.flits_per_packet, seed)
    for pe in pes:
        for pkt in schedule[pe]:
            sim.add_packet(pkt.src_pe, pkt.dst_pe, 0, pkt.created_ps, pkt.measured)
    sim.run(cfg.simulation_time_ns * PS_PER_NS)
    res = sim.result()
    res.extra.update(rate=rate, seed=seed, benchmark="synthetic")
    return res


def run_tasks(
    graph: NetworkGraph,
    cfg: SimulationConfig,
    app: ApplicationSpec,
    mapping: Mapping[int, int],
    seed: Optional[int] = None,
    routing: Optional[str] = None,
    backend: Optional[str] = None,
    **sim_kwargs,
) -> RunResult:
    """Petri-net driven run; every packet is measured."""
    seed = cfg.seed if seed is None else seed
    check_mapping(dict(mapping), app, graph)
    pairs = set()
    for spec in app.tasks.values():
        for poss in spec.possibilities:
            for dest in poss.destinations:
                pairs.add((mapping[spec.id], mapping[dest.task]))
    validate_routes(graph, routing, pairs)
    engine = TaskEngine(app, mapping, seed)
    sim = Simulation(graph, cfg.flits_per_packet, max(len(app.data_types), 1), routing, backend,
                     task_engine=engine, seed=seed, **sim_kwargs)
    sim.run(cfg.simulation_time_ns * PS_PER_NS)
    res = sim.result()
    res.extra.update(seed=seed, benchmark="task", tokens_resident=engine.store.resident,
                     tokens_produced=engine.store.produced, tokens_consumed=engine.store.consumed)
    return res


def run_simulation(
    cfg: SimulationConfig,
    shorthand: NetworkShorthand,
    rate: Optional[float] = None,
    seed: Optional[int] = None,
    backend: Optional[str] = None,
    graph: Optional[NetworkGraph] = None,
) -> RunResult:
    """Run the workload described by a parsed configuration."""
    graph = graph or build_network(shorthand)
    if cfg.benchmark == "task":
        if not cfg.task_lib_dir:
            raise ConfigError("config", "[Task] libDir", "required when benchmark = task")
        app, mapping = load_task_lib(cfg.task_lib_dir)
        return run_tasks(graph, cfg, app, mapping, seed, backend=backend)
    r = cfg.synthetic.run_rate_min if rate is None else rate
    return run_synthetic(graph, cfg, r, seed, backend=backend)
