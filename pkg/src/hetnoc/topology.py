"""In-memory network graph: nodes, typed ports and unidirectional links.

Coordinates follow one fixed convention: east = +x, west = -x,
north = +y, south = -y, up = +z, down = -z.  A processing element always
attaches to its router through a ``local`` port.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Dict, Iterable, List, Optional, Tuple

from .errors import TopologyError

Position = Tuple[int, int, int]


class Direction(IntEnum):
    """Port directions, in the fixed report order."""

    LOCAL = 0
    EAST = 1
    WEST = 2
    NORTH = 3
    SOUTH = 4
    UP = 5
    DOWN = 6

    @property
    def inverse(self) -> "Direction":
        return _INVERSE[self]

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, text: str) -> "Direction":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown direction {text!r}") from None


_INVERSE = {
    Direction.LOCAL: Direction.LOCAL,
    Direction.EAST: Direction.WEST,
    Direction.WEST: Direction.EAST,
    Direction.NORTH: Direction.SOUTH,
    Direction.SOUTH: Direction.NORTH,
    Direction.UP: Direction.DOWN,
    Direction.DOWN: Direction.UP,
}

_UNIT_STEPS = {
    (1, 0, 0): Direction.EAST,
    (-1, 0, 0): Direction.WEST,
    (0, 1, 0): Direction.NORTH,
    (0, -1, 0): Direction.SOUTH,
    (0, 0, 1): Direction.UP,
    (0, 0, -1): Direction.DOWN,
}


class NodeKind(Enum):
    ROUTER = "router"
    PROCESSING_ELEMENT = "processing_element"


@dataclass(frozen=True)
class NodeRecord:
    id: int
    kind: NodeKind
    position: Position
    clock_period_ps: int
    routing_id: Optional[str] = None
    node_type: int = 0
    model: str = ""

    @property
    def is_router(self) -> bool:
        return self.kind is NodeKind.ROUTER


@dataclass(frozen=True)
class PortRecord:
    """One end of a connection, holding the input buffers of ``owner``."""

    owner: int
    direction: Direction
    vc_count: int
    vc_depths: Tuple[int, ...]
    peer: Tuple[int, Direction]

    @property
    def key(self) -> Tuple[int, int]:
        return (self.owner, self.peer[0])

    @property
    def sort_key(self) -> Tuple[int, int, int]:
        return (self.owner, int(self.direction), self.peer[0])


@dataclass(frozen=True)
class LinkRecord:
    id: int
    driver: Tuple[int, Direction]
    sink: Tuple[int, Direction]
    width_bits: int


@dataclass
class NetworkGraph:
    """Validated network description.

    ``ports`` is keyed by ``(owner, peer node)``; at most one connection may
    join a given pair of nodes.
    """

    nodes: Dict[int, NodeRecord]
    ports: Dict[Tuple[int, int], PortRecord]
    connections: List[Tuple[Tuple[int, int], Tuple[int, int]]]
    flit_size: int = 32
    _ports_by_node: Dict[int, List[PortRecord]] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        by_node: Dict[int, List[PortRecord]] = {nid: [] for nid in self.nodes}
        for port in self.ports.values():
            by_node[port.owner].append(port)
        for plist in by_node.values():
            plist.sort(key=lambda p: p.sort_key)
        self._ports_by_node = by_node
        self.validate()

    def validate(self) -> None:
        for port in self.ports.values():
            if port.owner not in self.nodes or port.peer[0] not in self.nodes:
                raise TopologyError(f"port {port.key} references an unknown node")
            if port.vc_count < 1 or len(port.vc_depths) != port.vc_count:
                raise TopologyError(f"port {port.key}: vc_depths must have vc_count entries")
            if any(d < 1 for d in port.vc_depths):
                raise TopologyError(f"port {port.key}: buffer depths must be >= 1")
            peer = self.ports.get((port.peer[0], port.owner))
            if peer is None or peer.peer != (port.owner, port.direction):
                raise TopologyError(f"port {port.key} has no symmetric peer")
        for nid, plist in self._ports_by_node.items():
            node = self.nodes[nid]
            if node.clock_period_ps <= 0:
                raise TopologyError(f"node {nid}: clock period must be positive")
            if node.is_router:
                seen = [p.direction for p in plist if p.direction is not Direction.LOCAL]
                if len(seen) != len(set(seen)):
                    raise TopologyError(f"router {nid} has two ports facing the same direction")
            elif len(plist) > 1:
                raise TopologyError(f"processing element {nid} has more than one connection")

    # -- queries ---------------------------------------------------------

    def ports_of(self, node: int) -> List[PortRecord]:
        """Ports of ``node`` in direction order (ties broken by peer id)."""
        return self._ports_by_node[node]

    def port(self, owner: int, peer: int) -> PortRecord:
        return self.ports[(owner, peer)]

    def neighbor(self, node: int, direction: Direction) -> Optional[int]:
        """Peer of the first port of ``node`` facing ``direction``."""
        for p in self._ports_by_node[node]:
            if p.direction is direction:
                return p.peer[0]
        return None

    @property
    def routers(self) -> List[int]:
        return sorted(n for n, rec in self.nodes.items() if rec.is_router)

    @property
    def processing_elements(self) -> List[int]:
        return sorted(n for n, rec in self.nodes.items() if not rec.is_router)

    def router_of(self, pe: int) -> int:
        plist = self._ports_by_node[pe]
        if not plist:
            raise TopologyError(f"processing element {pe} is not connected")
        return plist[0].peer[0]

    def pes_of(self, router: int) -> List[int]:
        return [
            p.peer[0]
            for p in self._ports_by_node[router]
            if not self.nodes[p.peer[0]].is_router
        ]

    def layers(self) -> List[int]:
        return sorted({rec.position[2] for rec in self.nodes.values()})

    def summary(self) -> str:
        return (
            f"{len(self.routers)} routers, {len(self.processing_elements)} PEs, "
            f"{len(self.connections)} connections"
        )


def direction_between(graph: NetworkGraph, a: int, b: int) -> Direction:
    """Compass direction of the step from node ``a`` to node ``b``.

    Router/PE pairs are always ``local``.  Raises :class:`TopologyError` if
    the nodes are not one unit step apart.
    """
    na, nb = graph.nodes[a], graph.nodes[b]
    if not (na.is_router and nb.is_router):
        return Direction.LOCAL
    return step_direction(na.position, nb.position)


def step_direction(a: Position, b: Position) -> Direction:
    delta = (b[0] - a[0], b[1] - a[1], b[2] - a[2])
    try:
        return _UNIT_STEPS[delta]
    except KeyError:
        raise TopologyError(f"positions {a} and {b} are not adjacent") from None


def links_of(graph: NetworkGraph) -> List[LinkRecord]:
    """Both unidirectional links of every connection, in stable order.

    Ordered by driver node id, then driver port direction, then sink id, so
    that identical graphs always number their links identically.
    """
    pairs = []
    for ka, kb in graph.connections:
        pa, pb = graph.ports[ka], graph.ports[kb]
        pairs.append((pa, pb))
        pairs.append((pb, pa))
    pairs.sort(key=lambda ab: ab[0].sort_key)
    return [
        LinkRecord(
            id=i,
            driver=(drv.owner, drv.direction),
            sink=(snk.owner, snk.direction),
            width_bits=graph.flit_size,
        )
        for i, (drv, snk) in enumerate(pairs)
    ]


def build_graph(
    nodes: Iterable[NodeRecord],
    connections: Iterable[Tuple[Tuple[int, int, Tuple[int, ...]], Tuple[int, int, Tuple[int, ...]]]],
    flit_size: int = 32,
) -> NetworkGraph:
    """Assemble a graph from nodes and ``((node, vcs, depths), (node, vcs, depths))`` pairs.

    Port directions are derived from node positions.
    """
    node_map: Dict[int, NodeRecord] = {}
    for rec in nodes:
        if rec.id in node_map:
            raise TopologyError(f"duplicate node id {rec.id}")
        node_map[rec.id] = rec
    ports: Dict[Tuple[int, int], PortRecord] = {}
    conns = []
    for (na, vca, da), (nb, vcb, db) in connections:
        for nid in (na, nb):
            if nid not in node_map:
                raise TopologyError(f"connection references unknown node {nid}")
        if na == nb:
            raise TopologyError(f"node {na} connected to itself")
        if (na, nb) in ports:
            raise TopologyError(f"nodes {na} and {nb} are connected twice")
        dab = direction_between_records(node_map[na], node_map[nb])
        dba = dab.inverse
        ports[(na, nb)] = PortRecord(na, dab, vca, tuple(da), (nb, dba))
        ports[(nb, na)] = PortRecord(nb, dba, vcb, tuple(db), (na, dab))
        conns.append(((na, nb), (nb, na)))
    return NetworkGraph(node_map, ports, conns, flit_size)


def direction_between_records(a: NodeRecord, b: NodeRecord) -> Direction:
    if not (a.is_router and b.is_router):
        return Direction.LOCAL
    return step_direction(a.position, b.position)
