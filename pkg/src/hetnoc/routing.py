"""Deterministic routing, turn masks and crossbar-reduction estimates.

Turns are written as ``(travel-in, out)``: ``travel-in`` is the direction a
flit was moving when it entered the router (the inverse of the input port's
facing direction, or ``LOCAL`` for injection), ``out`` is the output port.
With that convention ``(EAST, NORTH)`` reads "was heading east, turns north".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .errors import RoutingError
from .topology import Direction, NetworkGraph, Position

Turn = Tuple[Direction, Direction]

ALGORITHMS = ("XY", "XYZ", "ZplusXYZminus")

_ALIASES = {
    "xy": "XY",
    "xyz": "XYZ",
    "zplusxyzminus": "ZplusXYZminus",
    "z+(xy)z-": "ZplusXYZminus",
    "z+xyz-": "ZplusXYZminus",
    "zxyz": "ZplusXYZminus",
}


def canonical_algorithm(name: str) -> str:
    """Normalise a routing identifier; raises ``KeyError`` if unknown."""
    key = name.strip().strip('"').lower()
    if key not in _ALIASES:
        raise KeyError(name)
    return _ALIASES[key]


def _x_then_y(dx: int, dy: int) -> Optional[Direction]:
    if dx > 0:
        return Direction.EAST
    if dx < 0:
        return Direction.WEST
    if dy > 0:
        return Direction.NORTH
    if dy < 0:
        return Direction.SOUTH
    return None


def route(algorithm: str, current: Position, dest: Position) -> Direction:
    """Output direction at ``current`` for a packet heading to ``dest``.

    >>> route("XYZ", (0, 0, 0), (2, 1, 1))
    <Direction.EAST: 1>
    >>> route("ZplusXYZminus", (0, 0, 2), (1, 0, 0))
    <Direction.EAST: 1>
    """
    try:
        alg = canonical_algorithm(algorithm)
    except KeyError:
        raise RoutingError(f"unknown routing algorithm {algorithm!r}") from None
    dx = dest[0] - current[0]
    dy = dest[1] - current[1]
    dz = dest[2] - current[2]
    if alg == "XY":
        if dz != 0:
            raise RoutingError(f"XY routing cannot reach layer {dest[2]} from layer {current[2]}")
        return _x_then_y(dx, dy) or Direction.LOCAL
    if alg == "XYZ":
        d = _x_then_y(dx, dy)
        if d is not None:
            return d
        if dz > 0:
            return Direction.UP
        if dz < 0:
            return Direction.DOWN
        return Direction.LOCAL
    # ZplusXYZminus: ascend, then x, then y, then descend
    if dz > 0:
        return Direction.UP
    d = _x_then_y(dx, dy)
    if d is not None:
        return d
    if dz < 0:
        return Direction.DOWN
    return Direction.LOCAL


@dataclass(frozen=True)
class Hop:
    router: int
    travel_in: Direction
    out: Direction
    next_node: int


def trace_path(graph: NetworkGraph, algorithm: str, src_pe: int, dst_pe: int) -> List[Hop]:
    """Router-by-router path of a packet from ``src_pe`` to ``dst_pe``.

    Raises :class:`RoutingError` when a required port is missing or the walk
    exceeds the minimal hop bound.
    """
    cur = graph.router_of(src_pe)
    target = graph.router_of(dst_pe)
    dest_pos = graph.nodes[target].position
    start = graph.nodes[cur].position
    bound = sum(abs(a - b) for a, b in zip(start, dest_pos)) + 1
    travel = Direction.LOCAL
    hops: List[Hop] = []
    while True:
        node = graph.nodes[cur]
        alg = algorithm or node.routing_id or "XYZ"
        d = route(alg, node.position, dest_pos)
        if d is Direction.LOCAL:
            if cur != target:
                raise RoutingError(f"router {cur} shares position {node.position} with destination router {target}")
            hops.append(Hop(cur, travel, Direction.LOCAL, dst_pe))
            return hops
        nxt = graph.neighbor(cur, d)
        if nxt is None or not graph.nodes[nxt].is_router:
            raise RoutingError(f"router {cur} has no {d.label} port on the way to node {dst_pe}")
        hops.append(Hop(cur, travel, d, nxt))
        if len(hops) > bound:
            raise RoutingError(f"route from {src_pe} to {dst_pe} is not minimal")
        travel = d
        cur = nxt


def route_table(graph: NetworkGraph, algorithm: str) -> Dict[Tuple[int, int], int]:
    """Next node for every (router, destination PE) pair on some path.

    Only pairs that a packet can actually visit are included, and every
    route is checked to terminate.
    """
    table: Dict[Tuple[int, int], int] = {}
    pes = graph.processing_elements
    for src in pes:
        for dst in pes:
            if src == dst:
                continue
            for hop in trace_path(graph, algorithm, src, dst):
                table[(hop.router, dst)] = hop.next_node
    return table


def next_hop(graph: NetworkGraph, algorithm: str, router: int, dst_pe: int) -> Optional[int]:
    """Next node from ``router`` towards ``dst_pe`` or ``None`` if unreachable."""
    node = graph.nodes[router]
    target = graph.router_of(dst_pe)
    try:
        d = route(algorithm or node.routing_id or "XYZ", node.position, graph.nodes[target].position)
    except RoutingError:
        return None
    if d is Direction.LOCAL:
        return dst_pe if router == target else None
    nxt = graph.neighbor(router, d)
    if nxt is None or not graph.nodes[nxt].is_router:
        return None
    return nxt


# -- turn masks ------------------------------------------------------------


@dataclass(frozen=True)
class TurnMask:
    router: int
    allowed: FrozenSet[Turn]

    def __contains__(self, turn: Turn) -> bool:
        return turn in self.allowed

    def __len__(self) -> int:
        return len(self.allowed)


def all_turn_masks(graph: NetworkGraph, algorithm: str) -> Dict[int, TurnMask]:
    """Masks of every router by exhaustive enumeration of (src, dst) PE pairs."""
    seen: Dict[int, set] = {r: set() for r in graph.routers}
    pes = graph.processing_elements
    for src in pes:
        for dst in pes:
            if src == dst:
                continue
            for hop in trace_path(graph, algorithm, src, dst):
                seen[hop.router].add((hop.travel_in, hop.out))
    return {r: TurnMask(r, frozenset(s)) for r, s in seen.items()}


def allowed_turns(algorithm: str, graph: NetworkGraph, node: int) -> TurnMask:
    if not graph.nodes[node].is_router:
        raise RoutingError(f"node {node} is not a router")
    return all_turn_masks(graph, algorithm)[node]


def port_directions(graph: NetworkGraph, node: int) -> List[Direction]:
    return sorted({p.direction for p in graph.ports_of(node)})


def candidate_turns(ports: Iterable[Direction]) -> FrozenSet[Turn]:
    """All (travel-in, out) pairs over ``ports`` except u-turns."""
    dirs = sorted(set(ports))
    return frozenset(
        (d_in.inverse, d_out) for d_in in dirs for d_out in dirs if d_out != d_in
    )


def fully_connected_mask(router: int, ports: Iterable[Direction]) -> TurnMask:
    return TurnMask(router, candidate_turns(ports))


def crossbar_reduction(mask: TurnMask, ports: Sequence[Direction]) -> float:
    """Fraction of non-u-turn crossbar connections the mask removes."""
    cands = candidate_turns(ports)
    if not cands:
        raise ValueError("crossbar_reduction needs at least two ports")
    return 1.0 - len(mask.allowed & cands) / len(cands)


_XYZ_RANK = {
    Direction.EAST: 0, Direction.WEST: 0,
    Direction.NORTH: 1, Direction.SOUTH: 1,
    Direction.UP: 2, Direction.DOWN: 2,
}


def analytic_xyz_mask(router: int, ports: Iterable[Direction]) -> TurnMask:
    """Dimension-order closed form: never turn back to a lower dimension."""
    allowed = set()
    for d_in, d_out in candidate_turns(ports):
        if d_in is Direction.LOCAL or d_out is Direction.LOCAL:
            allowed.add((d_in, d_out))
        elif d_in == d_out or _XYZ_RANK[d_out] > _XYZ_RANK[d_in]:
            allowed.add((d_in, d_out))
    return TurnMask(router, frozenset(allowed))


@dataclass(frozen=True)
class TurnReport:
    algorithm: str
    masks: Dict[int, TurnMask]
    reductions: Dict[int, float]

    @property
    def average_reduction(self) -> float:
        vals = list(self.reductions.values())
        return sum(vals) / len(vals) if vals else 0.0


def turn_report(graph: NetworkGraph, algorithm: str, fully_connected: bool = False) -> TurnReport:
    if fully_connected:
        masks = {r: fully_connected_mask(r, port_directions(graph, r)) for r in graph.routers}
    else:
        masks = all_turn_masks(graph, algorithm)
    reductions = {}
    for r, mask in masks.items():
        ports = port_directions(graph, r)
        reductions[r] = crossbar_reduction(mask, ports) if len(ports) > 1 else 0.0
    return TurnReport(canonical_algorithm(algorithm), masks, reductions)
