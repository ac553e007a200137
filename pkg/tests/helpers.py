"""Shared builders for small networks, workloads and configuration text."""

from __future__ import annotations

from typing import Optional, Sequence

from hetnoc.config import expand_mesh, parse_config
from hetnoc.topology import NetworkGraph, NodeKind, NodeRecord, build_graph
from hetnoc.traffic import ApplicationSpec, Destination, IntRange, Possibility, TaskSpec

UNBOUNDED = IntRange(-1, -1)


def config_text(
    z: int = 1,
    x: Sequence[int] = (2,),
    y: Sequence[int] = (2,),
    clocks: Optional[Sequence[float]] = None,
    sim_ns: int = 2000,
    fpp: int = 4,
    rate: float = 0.05,
    rate_max: Optional[float] = None,
    step: float = 0.01,
    warmup_ns: int = 0,
    restarts: int = 1,
    vcs: int = 2,
    depth: int = 4,
    routing: str = "XYZ",
    seed: int = 0,
    extra: str = "",
) -> str:
    join = lambda v: ", ".join(str(i) for i in v)
    clocks = (1,) * z if clocks is None else clocks
    return f"""[Config]
simulationTime = {sim_ns}
flitsPerPacket = {fpp}
benchmark = synthetic
seed = {seed}

[Synthetic]
restarts = {restarts}
warmupStart = 0
warmupDuration = {warmup_ns}
warmupRate = {rate}
runRateMin = {rate}
runRateMax = {rate if rate_max is None else rate_max}
runRateStep = {step}
runStartAfterWarmup = 0
runDuration = {sim_ns - warmup_ns}
numCores = 1
simDir = sim

[Network]
z = {z}
x = {join(x)}
y = {join(y)}
routing = {routing}
clockDelay = {join(clocks)}
bufferDepth = {depth}
vcCount = {vcs}
{extra}"""


def mesh(**kw):
    """(cfg, shorthand, graph) for a mesh described by :func:`config_text` arguments."""
    cfg, sh = parse_config(config_text(**kw))
    return cfg, sh, expand_mesh(sh)


def line_graph(n_routers: int = 2, period_ps: int = 1000, vcs: int = 1, depth: int = 4) -> NetworkGraph:
    """Routers 0..n-1 along x, PE n+i attached to router i."""
    nodes = [NodeRecord(i, NodeKind.ROUTER, (i, 0, 0), period_ps, "XYZ") for i in range(n_routers)]
    nodes += [NodeRecord(n_routers + i, NodeKind.PROCESSING_ELEMENT, (i, 0, 0), period_ps) for i in range(n_routers)]
    port = (vcs, (depth,) * vcs)
    conns = [((i, *port), (n_routers + i, *port)) for i in range(n_routers)]
    conns += [((i, *port), (i + 1, *port)) for i in range(n_routers - 1)]
    return build_graph(nodes, conns)


def star_graph(n_pes: int = 3, vcs: int = 1, depth: int = 4, period_ps: int = 1000) -> NetworkGraph:
    """One router (id 0) with ``n_pes`` processing elements (ids 1..n) on local ports."""
    nodes = [NodeRecord(0, NodeKind.ROUTER, (0, 0, 0), period_ps, "XYZ")]
    nodes += [NodeRecord(i, NodeKind.PROCESSING_ELEMENT, (0, 0, 0), period_ps) for i in range(1, n_pes + 1)]
    port = (vcs, (depth,) * vcs)
    return build_graph(nodes, [((0, *port), (i, *port)) for i in range(1, n_pes + 1)])


def two_stream_app(fpp_cycles=(16, 48), spread: int = 4) -> ApplicationSpec:
    """Two unbounded sources sending one packet every ~``fpp_cycles`` ns to a passive sink.

    Task 0 sends type 0, task 1 sends type 1, task 2 never fires.
    """
    tasks = {}
    for tid, (mean, type_id) in enumerate(zip(fpp_cycles, (0, 1))):
        dest = Destination(IntRange(mean - spread, mean + spread), IntRange(0, 0), IntRange(1, 1), type_id, 2)
        tasks[tid] = TaskSpec(tid, IntRange(0, 0), UNBOUNDED, UNBOUNDED, (), (Possibility(0, 1.0, (dest,)),))
    tasks[2] = TaskSpec(2, IntRange(0, 0), UNBOUNDED, IntRange(0, 0))
    return ApplicationSpec(tasks, {0: "stream_a", 1: "stream_b"})


TOY_MAPPING = {0: 1, 1: 2, 2: 3}
