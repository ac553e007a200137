"""Configuration loading.

The entry point is an INI file with sections ``Config``, ``Task``,
``Synthetic``, ``Report`` and ``Network``.  The network is either expanded
from the mesh shorthand in ``Network`` or loaded from an explicit topology
XML file.  Task-driven runs read ``data.xml`` (application) and ``map.xml``
(task to PE mapping) from ``Task.libDir``.

Mapping schema::

    <map>
      <bind><task value="0"/><node value="8"/></bind>
      ...
    </map>
"""

from __future__ import annotations

import configparser
import math
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import ConfigError, ConfigWarning, TopologyError
from .kernel import ns_to_ps
from .routing import ALGORITHMS, canonical_algorithm
from .topology import NetworkGraph, NodeKind, NodeRecord, build_graph
from .traffic import (
    ApplicationSpec,
    Destination,
    IntRange,
    Possibility,
    Requirement,
    TaskSpec,
)

APPLICATION_FILE = "data.xml"
MAPPING_FILE = "map.xml"

ROUTER_MODEL = "RouterVC"
PE_MODEL = "ProcessingElement"


@dataclass(frozen=True)
class SyntheticConfig:
    restarts: int = 1
    warmup_start_ns: int = 0
    warmup_duration_ns: int = 0
    warmup_rate: float = 0.0
    run_rate_min: float = 0.01
    run_rate_max: float = 0.01
    run_rate_step: float = 0.01
    run_start_after_warmup_ns: int = 0
    run_duration_ns: int = 0
    num_cores: int = 1
    sim_dir: str = "sim"

    def rates(self) -> List[float]:
        """Injection rates of the sweep grid, ascending."""
        n = int(math.floor((self.run_rate_max - self.run_rate_min) / self.run_rate_step + 1e-9)) + 1
        return [round(self.run_rate_min + k * self.run_rate_step, 10) for k in range(n)]


@dataclass(frozen=True)
class SimulationConfig:
    simulation_time_ns: int
    flits_per_packet: int
    benchmark: str = "synthetic"
    task_lib_dir: Optional[str] = None
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    report_routers: Tuple[int, ...] = ()
    seed: int = 0


@dataclass(frozen=True)
class NetworkShorthand:
    z: int
    x: Tuple[int, ...]
    y: Tuple[int, ...]
    routing: str
    clock_delay: Tuple[float, ...]
    buffer_depth_type: str = "single"
    buffer_depth: int = 4
    buffers_depths: Tuple[int, ...] = ()
    vc_count: int = 4
    topology_file: Optional[str] = None
    flit_size: int = 32

    @property
    def vc_depths(self) -> Tuple[int, ...]:
        if self.buffer_depth_type == "perVC":
            return tuple(self.buffers_depths)
        return (self.buffer_depth,) * self.vc_count


# -- INI -------------------------------------------------------------------

_KNOWN_KEYS = {
    "Config": {"simulationTime", "flitsPerPacket", "benchmark", "seed"},
    "Task": {"libDir"},
    "Synthetic": {
        "simDir", "restarts", "warmupStart", "warmupDuration", "warmupRate",
        "runRateMin", "runRateMax", "runRateStep", "runStartAfterWarmup",
        "runDuration", "numCores",
    },
    "Report": {"bufferReportRouters"},
    "Network": {
        "z", "x", "y", "routing", "clockDelay", "bufferDepthType", "bufferDepth",
        "buffersDepths", "vcCount", "topologyFile", "flitSize",
    },
}


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, source: str):
        self.p = parser
        self.source = source

    def raw(self, section: str, key: str) -> Optional[str]:
        if not self.p.has_section(section) or not self.p.has_option(section, key):
            return None
        return self.p.get(section, key).strip()

    def _fail(self, section: str, key: str, reason: str) -> ConfigError:
        return ConfigError(self.source, f"[{section}] {key}", reason)

    def required(self, section: str, key: str) -> str:
        v = self.raw(section, key)
        if v is None or v == "":
            raise self._fail(section, key, "missing required key")
        return v

    def int(self, section: str, key: str, default=None, minimum: Optional[int] = None) -> int:
        v = self.raw(section, key)
        if v is None or v == "":
            if default is None:
                raise self._fail(section, key, "missing required key")
            return default
        try:
            f = float(v)
        except ValueError:
            raise self._fail(section, key, f"not a number: {v!r}") from None
        if f != int(f):
            raise self._fail(section, key, f"not an integer: {v!r}")
        out = int(f)
        if minimum is not None and out < minimum:
            raise self._fail(section, key, f"must be >= {minimum}, got {out}")
        return out

    def float(self, section: str, key: str, default=None, lo: float = 0.0, hi: Optional[float] = None) -> float:
        v = self.raw(section, key)
        if v is None or v == "":
            if default is None:
                raise self._fail(section, key, "missing required key")
            return default
        try:
            out = float(v)
        except ValueError:
            raise self._fail(section, key, f"not a number: {v!r}") from None
        if out < lo or (hi is not None and out > hi):
            rng = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
            raise self._fail(section, key, f"must be in {rng}, got {out}")
        return out

    def list(self, section: str, key: str, cast, default=None) -> list:
        v = self.raw(section, key)
        if v is None or v == "":
            if default is None:
                raise self._fail(section, key, "missing required key")
            return list(default)
        return parse_list(v, cast, lambda why: self._fail(section, key, why))

    def str(self, section: str, key: str, default: Optional[str] = None) -> Optional[str]:
        v = self.raw(section, key)
        if v is None or v == "":
            return default
        return v.strip().strip('"').strip("'")


def parse_list(text: str, cast=int, fail=None) -> list:
    """Parse ``[1, 2, 3]``, ``1, 2, 3`` or a single value."""
    body = text.strip()
    if body.startswith("[") != body.endswith("]"):
        raise (fail or ValueError)(f"malformed list {text!r}")
    body = body.strip("[]").strip()
    if not body:
        return []
    out = []
    for item in body.split(","):
        item = item.strip().strip('"').strip("'")
        if not item:
            raise (fail or ValueError)(f"malformed list {text!r}")
        try:
            value = float(item) if cast is float else cast(float(item)) if cast is int else cast(item)
        except ValueError:
            raise (fail or ValueError)(f"malformed list element {item!r}") from None
        if cast is int and float(item) != int(float(item)):
            raise (fail or ValueError)(f"list element {item!r} is not an integer")
        out.append(value)
    return out


def parse_config(
    text: str, source: str = "config.ini", base_dir: Optional[Path] = None
) -> Tuple[SimulationConfig, NetworkShorthand]:
    """Parse the INI entry file.

    Unknown sections and keys raise :class:`ConfigWarning`; missing required
    keys, out-of-domain values and malformed lists raise
    :class:`ConfigError`.  ``base_dir`` resolves relative paths and enables
    existence checks for the task library.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(source, "file", f"not a valid INI file ({exc.__class__.__name__})") from None
    for section in parser.sections():
        known = _KNOWN_KEYS.get(section)
        if known is None:
            warnings.warn(f"{source}: unknown section [{section}] ignored", ConfigWarning, stacklevel=2)
            continue
        for key in parser.options(section):
            if key not in known:
                warnings.warn(f"{source}: unknown key [{section}] {key} ignored", ConfigWarning, stacklevel=2)

    r = _Reader(parser, source)
    sim_time = r.int("Config", "simulationTime", minimum=1)
    fpp = r.int("Config", "flitsPerPacket", minimum=1)
    benchmark = r.str("Config", "benchmark", "synthetic")
    if benchmark not in ("synthetic", "task"):
        raise ConfigError(source, "[Config] benchmark", f"must be 'synthetic' or 'task', got {benchmark!r}")
    seed = r.int("Config", "seed", default=0, minimum=0)

    lib_dir = r.str("Task", "libDir")
    if benchmark == "task":
        if not lib_dir:
            raise ConfigError(source, "[Task] libDir", "required when benchmark = task")
        if base_dir is not None:
            path = Path(lib_dir)
            if not path.is_absolute():
                path = Path(base_dir) / path
            if not path.is_dir():
                raise ConfigError(source, "[Task] libDir", f"directory {lib_dir!r} does not exist")
            for name in (APPLICATION_FILE, MAPPING_FILE):
                if not (path / name).is_file():
                    raise ConfigError(source, "[Task] libDir", f"{name} missing in {lib_dir!r}")
            lib_dir = str(path)

    rmin = r.float("Synthetic", "runRateMin", 0.01, 0.0, 1.0)
    rmax = r.float("Synthetic", "runRateMax", rmin, 0.0, 1.0)
    rstep = r.float("Synthetic", "runRateStep", 0.01, 0.0, 1.0)
    if rstep <= 0:
        raise ConfigError(source, "[Synthetic] runRateStep", "must be > 0")
    if rmin > rmax:
        raise ConfigError(source, "[Synthetic] runRateMax", f"runRateMin {rmin} exceeds runRateMax {rmax}")
    w_start = r.int("Synthetic", "warmupStart", 0, minimum=0)
    w_dur = r.int("Synthetic", "warmupDuration", 0, minimum=0)
    run_after = r.int("Synthetic", "runStartAfterWarmup", 0, minimum=0)
    default_run = max(sim_time - (w_start + w_dur + run_after), 0)
    synth = SyntheticConfig(
        restarts=r.int("Synthetic", "restarts", 1, minimum=1),
        warmup_start_ns=w_start,
        warmup_duration_ns=w_dur,
        warmup_rate=r.float("Synthetic", "warmupRate", 0.0, 0.0, 1.0),
        run_rate_min=rmin,
        run_rate_max=rmax,
        run_rate_step=rstep,
        run_start_after_warmup_ns=run_after,
        run_duration_ns=r.int("Synthetic", "runDuration", default_run, minimum=0),
        num_cores=r.int("Synthetic", "numCores", 1, minimum=1),
        sim_dir=r.str("Synthetic", "simDir", "sim"),
    )
    report_routers = tuple(r.list("Report", "bufferReportRouters", int, default=[]))

    z = r.int("Network", "z", minimum=1)
    xs = tuple(r.list("Network", "x", int))
    ys = tuple(r.list("Network", "y", int))
    clocks = tuple(r.list("Network", "clockDelay", float))
    for key, values in (("x", xs), ("y", ys), ("clockDelay", clocks)):
        if len(values) != z:
            raise ConfigError(source, f"[Network] {key}", f"expected {z} entries (one per layer), got {len(values)}")
        if any(v <= 0 for v in values):
            raise ConfigError(source, f"[Network] {key}", "entries must be positive")
    for c in clocks:
        try:
            ns_to_ps(c)
        except ConfigError as exc:
            raise ConfigError(source, "[Network] clockDelay", exc.reason) from None
    routing = r.required("Network", "routing").strip('"').strip("'")
    try:
        routing = canonical_algorithm(routing)
    except KeyError:
        raise ConfigError(
            source, "[Network] routing", f"unknown routing algorithm {routing!r} (known: {', '.join(ALGORITHMS)})"
        ) from None
    depth_type = r.str("Network", "bufferDepthType", "single")
    if depth_type not in ("single", "perVC"):
        raise ConfigError(source, "[Network] bufferDepthType", f"must be 'single' or 'perVC', got {depth_type!r}")
    vc_list = r.list("Network", "vcCount", int, default=[4])
    if len(vc_list) != 1 and len(set(vc_list)) != 1:
        raise ConfigError(source, "[Network] vcCount", "per-layer VC counts must be equal in mesh shorthand")
    vc_count = vc_list[0]
    if vc_count < 1:
        raise ConfigError(source, "[Network] vcCount", "must be >= 1")
    depth = r.int("Network", "bufferDepth", 4, minimum=1)
    depths: Tuple[int, ...] = ()
    if depth_type == "perVC":
        depths = tuple(r.list("Network", "buffersDepths", int))
        if len(depths) != vc_count:
            raise ConfigError(
                source, "[Network] buffersDepths", f"expected {vc_count} entries (vcCount), got {len(depths)}"
            )
        if any(d < 1 for d in depths):
            raise ConfigError(source, "[Network] buffersDepths", "depths must be >= 1")
    topo = r.str("Network", "topologyFile")
    if topo and base_dir is not None and not Path(topo).is_absolute():
        topo = str(Path(base_dir) / topo)
    shorthand = NetworkShorthand(
        z=z,
        x=xs,
        y=ys,
        routing=routing,
        clock_delay=clocks,
        buffer_depth_type=depth_type,
        buffer_depth=depth,
        buffers_depths=depths,
        vc_count=vc_count,
        topology_file=topo or None,
        flit_size=r.int("Network", "flitSize", 32, minimum=1),
    )
    cfg = SimulationConfig(
        simulation_time_ns=sim_time,
        flits_per_packet=fpp,
        benchmark=benchmark,
        task_lib_dir=lib_dir,
        synthetic=synth,
        report_routers=report_routers,
        seed=seed,
    )
    return cfg, shorthand


def load_config(path) -> Tuple[SimulationConfig, NetworkShorthand]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), "file", f"cannot read ({exc.strerror})") from None
    return parse_config(text, source=path.name, base_dir=path.parent)


# -- mesh shorthand --------------------------------------------------------


def expand_mesh(shorthand: NetworkShorthand) -> NetworkGraph:
    """Regular (possibly heterogeneous) 3D mesh with one PE per router.

    Routers are numbered layer by layer, row-major (y then x); PEs follow
    with the same ordering.  Vertical links join routers whose (x, y)
    coincide on adjacent layers.
    """
    depths = shorthand.vc_depths
    vcs = shorthand.vc_count
    routers: List[NodeRecord] = []
    index: Dict[Tuple[int, int, int], int] = {}
    for layer in range(shorthand.z):
        period = ns_to_ps(shorthand.clock_delay[layer])
        for yy in range(shorthand.y[layer]):
            for xx in range(shorthand.x[layer]):
                nid = len(routers)
                index[(xx, yy, layer)] = nid
                routers.append(
                    NodeRecord(nid, NodeKind.ROUTER, (xx, yy, layer), period, shorthand.routing, 2 * layer, ROUTER_MODEL)
                )
    n_r = len(routers)
    pes = [
        NodeRecord(n_r + r.id, NodeKind.PROCESSING_ELEMENT, r.position, r.clock_period_ps, None,
                   2 * r.position[2] + 1, PE_MODEL)
        for r in routers
    ]
    port = (vcs, depths)
    conns = []
    for r in routers:
        conns.append(((r.id, *port), (n_r + r.id, *port)))
    for (xx, yy, layer), nid in sorted(index.items(), key=lambda kv: kv[1]):
        for nb in ((xx + 1, yy, layer), (xx, yy + 1, layer), (xx, yy, layer + 1)):
            other = index.get(nb)
            if other is not None:
                conns.append(((nid, *port), (other, *port)))
    return build_graph(routers + pes, conns, shorthand.flit_size)


def build_network(cfg_shorthand: NetworkShorthand) -> NetworkGraph:
    if cfg_shorthand.topology_file:
        path = Path(cfg_shorthand.topology_file)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(str(path), "file", f"cannot read ({exc.strerror})") from None
        return parse_topology(text, source=path.name, flit_size=cfg_shorthand.flit_size)
    return expand_mesh(cfg_shorthand)


# -- XML helpers -----------------------------------------------------------


def _xml_root(text: str, source: str) -> ET.Element:
    try:
        return ET.fromstring(text)
    except ET.ParseError as exc:
        raise ConfigError(source, "document", f"malformed XML ({exc})") from None


def _value(elem: ET.Element, tag: str, source: str, where: str, attr: str = "value") -> str:
    child = elem.find(tag)
    if child is None or child.get(attr) is None:
        raise ConfigError(source, where, f"missing <{tag} {attr}=...>")
    return child.get(attr).strip()


def _int(text: str, source: str, where: str) -> int:
    try:
        f = float(text)
    except ValueError:
        raise ConfigError(source, where, f"not a number: {text!r}") from None
    if f != int(f):
        raise ConfigError(source, where, f"not an integer: {text!r}")
    return int(f)


def _range(elem: ET.Element, tag: str, source: str, where: str, allow_unbounded: bool = False) -> IntRange:
    child = elem.find(tag)
    if child is None:
        raise ConfigError(source, where, f"missing <{tag} min=... max=...>")
    lo = _int(child.get("min", ""), source, f"{where} <{tag}> min")
    hi = _int(child.get("max", ""), source, f"{where} <{tag}> max")
    rng = IntRange(lo, hi)
    if allow_unbounded and rng.unbounded:
        return rng
    if lo < 0:
        raise ConfigError(source, f"{where} <{tag}>", f"negative bound {lo}")
    if lo > hi:
        raise ConfigError(source, f"{where} <{tag}>", f"min {lo} > max {hi}")
    return rng


def parse_topology(text: str, source: str = "network.xml", flit_size: Optional[int] = None) -> NetworkGraph:
    """Parse an explicit network description (nodeTypes, nodes, connections)."""
    root = _xml_root(text, source)
    if flit_size is None:
        fs = root.find("flitSize")
        flit_size = _int(fs.get("value", ""), source, "flitSize") if fs is not None else 32
    types: Dict[int, Tuple[str, Optional[str], int]] = {}
    for nt in root.iterfind("nodeTypes/nodeType"):
        tid = _int(nt.get("id", ""), source, "nodeType id")
        where = f"nodeType {tid}"
        if tid in types:
            raise ConfigError(source, where, "duplicate nodeType id")
        model = _value(nt, "model", source, where)
        clock = float(_value(nt, "clockDelay", source, where))
        if clock <= 0:
            raise ConfigError(source, where, "clockDelay must be positive")
        period = ns_to_ps(clock, where)
        routing = None
        if model.startswith("Router"):
            try:
                routing = canonical_algorithm(_value(nt, "routing", source, where))
            except KeyError as exc:
                raise ConfigError(source, where, f"unknown routing algorithm {exc.args[0]!r}") from None
        elif not model.startswith(PE_MODEL):
            raise ConfigError(source, where, f"unknown model {model!r}")
        types[tid] = (model, routing, period)

    nodes: List[NodeRecord] = []
    seen = set()
    for n in root.iterfind("nodes/node"):
        nid = _int(n.get("id", ""), source, "node id")
        where = f"node {nid}"
        if nid in seen:
            raise ConfigError(source, where, "duplicate node id")
        seen.add(nid)
        pos = tuple(_int(_value(n, t, source, where), source, f"{where} {t}") for t in ("xPos", "yPos", "zPos"))
        tid = _int(_value(n, "nodeType", source, where), source, f"{where} nodeType")
        if tid not in types:
            raise ConfigError(source, where, f"undeclared nodeType {tid}")
        model, routing, period = types[tid]
        kind = NodeKind.ROUTER if model.startswith("Router") else NodeKind.PROCESSING_ELEMENT
        nodes.append(NodeRecord(nid, kind, pos, period, routing, tid, model))

    conns = []
    for c in root.iterfind("connections/con"):
        cid = c.get("id", "?")
        where = f"connection {cid}"
        ports = c.findall("ports/port")
        if len(ports) != 2:
            raise ConfigError(source, where, f"expected 2 ports, got {len(ports)}")
        ends = []
        for p in ports:
            pw = f"{where} port {p.get('id', '?')}"
            nid = _int(_value(p, "node", source, pw), source, f"{pw} node")
            if nid not in seen:
                raise ConfigError(source, pw, f"dangling node id {nid}")
            vcs = _int(_value(p, "vcCount", source, pw), source, f"{pw} vcCount")
            if vcs < 1:
                raise ConfigError(source, pw, "vcCount must be >= 1")
            if p.find("buffersDepths") is not None:
                depths = parse_list(
                    _value(p, "buffersDepths", source, pw), int, lambda why: ConfigError(source, pw, why)
                )
                if len(depths) != vcs:
                    raise ConfigError(source, pw, f"buffersDepths has {len(depths)} entries, vcCount is {vcs}")
            else:
                d = _int(_value(p, "bufferDepth", source, pw), source, f"{pw} bufferDepth")
                depths = [d] * vcs
            if any(d < 1 for d in depths):
                raise ConfigError(source, pw, "buffer depths must be >= 1")
            ends.append((nid, vcs, tuple(depths)))
        conns.append((ends[0], ends[1]))
    try:
        return build_graph(nodes, conns, flit_size)
    except TopologyError as exc:
        raise ConfigError(source, "connections", str(exc)) from None


def topology_to_xml(graph: NetworkGraph) -> str:
    """Serialise ``graph`` in the schema read by :func:`parse_topology`."""
    root = ET.Element("network-on-chip")
    ET.SubElement(root, "flitSize", value=str(graph.flit_size))
    nts = ET.SubElement(root, "nodeTypes")
    types: Dict[int, NodeRecord] = {}
    for rec in sorted(graph.nodes.values(), key=lambda r: r.id):
        prev = types.setdefault(rec.node_type, rec)
        if (prev.kind, prev.routing_id, prev.clock_period_ps) != (rec.kind, rec.routing_id, rec.clock_period_ps):
            raise TopologyError(f"node type {rec.node_type} is used inconsistently")
    for tid in sorted(types):
        rec = types[tid]
        nt = ET.SubElement(nts, "nodeType", id=str(tid))
        ET.SubElement(nt, "model", value=rec.model or (ROUTER_MODEL if rec.is_router else PE_MODEL))
        if rec.is_router:
            ET.SubElement(nt, "routing", value=rec.routing_id or "XYZ")
        ET.SubElement(nt, "clockDelay", value=_fmt_ns(rec.clock_period_ps))
    ns = ET.SubElement(root, "nodes")
    for rec in sorted(graph.nodes.values(), key=lambda r: r.id):
        n = ET.SubElement(ns, "node", id=str(rec.id))
        for tag, v in zip(("xPos", "yPos", "zPos"), rec.position):
            ET.SubElement(n, tag, value=str(v))
        ET.SubElement(n, "nodeType", value=str(rec.node_type))
    cs = ET.SubElement(root, "connections")
    for i, (ka, kb) in enumerate(graph.connections):
        c = ET.SubElement(cs, "con", id=str(i))
        ps = ET.SubElement(c, "ports")
        for j, key in enumerate((ka, kb)):
            port = graph.ports[key]
            p = ET.SubElement(ps, "port", id=str(j))
            ET.SubElement(p, "node", value=str(port.owner))
            if len(set(port.vc_depths)) == 1:
                ET.SubElement(p, "bufferDepth", value=str(port.vc_depths[0]))
            else:
                ET.SubElement(p, "buffersDepths", value=", ".join(map(str, port.vc_depths)))
            ET.SubElement(p, "vcCount", value=str(port.vc_count))
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def _fmt_ns(ps: int) -> str:
    return str(ps // 1000) if ps % 1000 == 0 else repr(ps / 1000)


# -- application and mapping -------------------------------------------------


def parse_data_types(elem: Optional[ET.Element], source: str) -> Dict[int, str]:
    out: Dict[int, str] = {}
    if elem is None:
        return out
    for dt in elem.iterfind("dataType"):
        tid = _int(dt.get("id", ""), source, "dataType id")
        if tid in out:
            raise ConfigError(source, f"dataType {tid}", "duplicate dataType id")
        name_el = dt.find("name")
        out[tid] = name_el.get("value", f"type{tid}") if name_el is not None else f"type{tid}"
    return out


def parse_application(
    text: str, data_types: Optional[str] = None, source: str = APPLICATION_FILE
) -> ApplicationSpec:
    """Parse tasks and data types.

    ``data_types`` may hold a separate ``<dataTypes>`` document; otherwise the
    section is read from the application document itself.
    """
    root = _xml_root(text, source)
    if data_types is not None:
        dt_root = _xml_root(data_types, source)
        dt_elem = dt_root if dt_root.tag == "dataTypes" else dt_root.find("dataTypes")
    else:
        dt_elem = root.find("dataTypes")
    types = parse_data_types(dt_elem, source)

    if root.tag == "task":
        task_elems = [root]
    elif root.tag == "tasks":
        task_elems = root.findall("task")
    else:
        task_elems = root.findall("tasks/task")
    tasks: Dict[int, TaskSpec] = {}
    for t in task_elems:
        tid = _int(t.get("id", ""), source, "task id")
        where = f"task {tid}"
        if tid in tasks:
            raise ConfigError(source, where, "duplicate task id")
        start = _range(t, "start", source, where)
        duration = _range(t, "duration", source, where, allow_unbounded=True)
        repeat = _range(t, "repeat", source, where, allow_unbounded=True)
        reqs = []
        for rq in t.iterfind("requires/requirement"):
            rw = f"{where} requirement {rq.get('id', '?')}"
            reqs.append(
                Requirement(
                    type_id=_int(_value(rq, "type", source, rw), source, f"{rw} type"),
                    source_task=_int(_value(rq, "source", source, rw), source, f"{rw} source"),
                    count=_range(rq, "count", source, rw),
                )
            )
        posses = []
        for ps in t.iterfind("generates/possibility"):
            pid = _int(ps.get("id", "0"), source, f"{where} possibility id")
            pw = f"{where} possibility {pid}"
            prob = float(_value(ps, "probability", source, pw))
            if not 0.0 <= prob <= 1.0:
                raise ConfigError(source, pw, f"probability {prob} outside [0, 1]")
            dests = []
            for d in ps.iterfind("destinations/destination"):
                dw = f"{pw} destination {d.get('id', '?')}"
                dests.append(
                    Destination(
                        delay=_range(d, "delay", source, dw),
                        interval=_range(d, "interval", source, dw),
                        count=_range(d, "count", source, dw),
                        type_id=_int(_value(d, "type", source, dw), source, f"{dw} type"),
                        task=_int(_value(d, "task", source, dw), source, f"{dw} task"),
                    )
                )
            posses.append(Possibility(pid, prob, tuple(dests)))
        if posses:
            total = sum(p.probability for p in posses)
            if abs(total - 1.0) > 1e-9:
                raise ConfigError(source, where, f"possibility probabilities sum to {total!r}, not 1")
        tasks[tid] = TaskSpec(tid, start, duration, repeat, tuple(reqs), tuple(posses))

    for tid, spec in tasks.items():
        for req in spec.requirements:
            if req.type_id not in types:
                raise ConfigError(source, f"task {tid}", f"requirement references undeclared type {req.type_id}")
            if req.source_task not in tasks:
                raise ConfigError(source, f"task {tid}", f"requirement references unknown task {req.source_task}")
        for poss in spec.possibilities:
            for dest in poss.destinations:
                if dest.type_id not in types:
                    raise ConfigError(source, f"task {tid}", f"destination references undeclared type {dest.type_id}")
                if dest.task not in tasks:
                    raise ConfigError(source, f"task {tid}", f"destination references unknown task {dest.task}")
    return ApplicationSpec(dict(sorted(tasks.items())), types)


def parse_mapping(text: str, source: str = MAPPING_FILE) -> Dict[int, int]:
    root = _xml_root(text, source)
    out: Dict[int, int] = {}
    for b in root.iter("bind"):
        where = "bind"
        task = _int(_value(b, "task", source, where), source, "bind task")
        node = _int(_value(b, "node", source, where), source, "bind node")
        if task in out:
            raise ConfigError(source, f"task {task}", "mapped twice")
        out[task] = node
    return out


def check_mapping(mapping: Dict[int, int], app: ApplicationSpec, graph: NetworkGraph, source: str = MAPPING_FILE):
    for task, node in mapping.items():
        if node not in graph.nodes:
            raise ConfigError(source, f"task {task}", f"mapped to unknown node {node}")
        if graph.nodes[node].is_router:
            raise ConfigError(source, f"task {task}", f"mapped to router {node}; tasks run on PEs")
    for task in app.tasks:
        if task not in mapping:
            raise ConfigError(source, f"task {task}", "task is not mapped")


def load_task_lib(lib_dir) -> Tuple[ApplicationSpec, Dict[int, int]]:
    lib = Path(lib_dir)
    try:
        app_text = (lib / APPLICATION_FILE).read_text()
        map_text = (lib / MAPPING_FILE).read_text()
    except OSError as exc:
        raise ConfigError(str(lib), "task library", f"cannot read ({exc.strerror})") from None
    return parse_application(app_text), parse_mapping(map_text)


def application_to_xml(app: ApplicationSpec) -> str:
    root = ET.Element("data")
    dts = ET.SubElement(root, "dataTypes")
    for tid, name in sorted(app.data_types.items()):
        dt = ET.SubElement(dts, "dataType", id=str(tid))
        ET.SubElement(dt, "name", value=name)
    ts = ET.SubElement(root, "tasks")

    def rng(parent, tag, r: IntRange):
        ET.SubElement(parent, tag, min=str(r.min), max=str(r.max))

    for spec in app.tasks.values():
        t = ET.SubElement(ts, "task", id=str(spec.id))
        rng(t, "start", spec.start)
        rng(t, "duration", spec.duration)
        rng(t, "repeat", spec.repeat)
        if spec.requirements:
            rq = ET.SubElement(t, "requires")
            for i, req in enumerate(spec.requirements):
                e = ET.SubElement(rq, "requirement", id=str(i))
                ET.SubElement(e, "type", value=str(req.type_id))
                ET.SubElement(e, "source", value=str(req.source_task))
                rng(e, "count", req.count)
        if spec.possibilities:
            gen = ET.SubElement(t, "generates")
            for poss in spec.possibilities:
                p = ET.SubElement(gen, "possibility", id=str(poss.id))
                ET.SubElement(p, "probability", value=repr(poss.probability))
                ds = ET.SubElement(p, "destinations")
                for i, dest in enumerate(poss.destinations):
                    d = ET.SubElement(ds, "destination", id=str(i))
                    rng(d, "delay", dest.delay)
                    rng(d, "interval", dest.interval)
                    rng(d, "count", dest.count)
                    ET.SubElement(d, "type", value=str(dest.type_id))
                    ET.SubElement(d, "task", value=str(dest.task))
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def mapping_to_xml(mapping: Dict[int, int]) -> str:
    root = ET.Element("map")
    for task, node in sorted(mapping.items()):
        b = ET.SubElement(root, "bind")
        ET.SubElement(b, "task", value=str(task))
        ET.SubElement(b, "node", value=str(node))
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"
