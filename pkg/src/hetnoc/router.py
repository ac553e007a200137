"""Virtual-channel router model: pipeline constants, flit kinds and state views.

The per-cycle behaviour lives in the engine (one flat implementation for all
routers).  Each router cycle runs, in order:

1. sample flits and credits from its link registers,
2. route computation for buffer-front heads,
3. VC allocation: every output walks the waiting heads round-robin and hands
   each the lowest-numbered free downstream VC,
4. separable input-first switch allocation: each input nominates one VC
   round-robin, each output grants one nominating input round-robin,
5. switch traversal: pop, decrement the credit, write the output register,
   return a credit upstream; a tail releases the downstream VC.

A flit sampled at an edge becomes eligible for steps 2-3 at the following
edge, and a VC granted at an edge becomes usable for steps 4-5 at the
following edge.  With one cycle on the link this gives the fixed zero-load
cost of :data:`HOP_CYCLES` per router.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from .topology import Direction

ROUTER_PIPELINE_CYCLES = 2
LINK_CYCLES = 1
HOP_CYCLES = ROUTER_PIPELINE_CYCLES + LINK_CYCLES

EVENT_NAMES = ("buffer_write", "buffer_read", "buffer_pop", "routing_calc", "crossbar_traversal")


class FlitKind(Enum):
    HEAD = "head"
    BODY = "body"
    TAIL = "tail"
    HEAD_TAIL = "head_tail"

    @property
    def is_head(self) -> bool:
        return self in (FlitKind.HEAD, FlitKind.HEAD_TAIL)

    @property
    def is_tail(self) -> bool:
        return self in (FlitKind.TAIL, FlitKind.HEAD_TAIL)


def flit_kind(sequence: int, length: int) -> FlitKind:
    if not 0 <= sequence < length:
        raise ValueError(f"sequence {sequence} outside packet of length {length}")
    if length == 1:
        return FlitKind.HEAD_TAIL
    if sequence == 0:
        return FlitKind.HEAD
    if sequence == length - 1:
        return FlitKind.TAIL
    return FlitKind.BODY


def decode_flit(handle: int, stride: int) -> Tuple[int, int]:
    """(packet id, sequence) of an engine flit handle."""
    return handle // stride, handle % stride


@dataclass(frozen=True)
class Flit:
    kind: FlitKind
    packet_id: int
    sequence: int
    color: int
    src: int
    dst: int
    created_at: int
    injected_at: int = -1
    ejected_at: int = -1


def zero_load_head_cycles(routers_on_path: int) -> int:
    """Cycles from head injection to head ejection on an idle network.

    One link cycle from the PE into the first router, then a full hop per
    router (the last hop's link is the ejection link).
    """
    if routers_on_path < 1:
        raise ValueError("a path crosses at least one router")
    return LINK_CYCLES + routers_on_path * HOP_CYCLES


def zero_load_packet_cycles(routers_on_path: int, flits: int) -> int:
    """Tail ejection time on an idle network: head latency plus serialisation."""
    return zero_load_head_cycles(routers_on_path) + (flits - 1)


@dataclass(frozen=True)
class PortView:
    direction: Direction
    peer: int
    occupancy: Tuple[int, ...]
    depths: Tuple[int, ...]
    credits_out: Tuple[int, ...]
    owners_out: Tuple[int, ...]


@dataclass(frozen=True)
class RouterView:
    """Snapshot of one router's buffers, credits and output-VC ownership."""

    node: int
    ports: Tuple[PortView, ...]

    @property
    def occupied_vcs(self) -> List[int]:
        return [sum(1 for c in p.occupancy if c > 0) for p in self.ports]

    @property
    def resident(self) -> int:
        return sum(sum(p.occupancy) for p in self.ports)


def event_counts_table(events: np.ndarray, routers: List[int]) -> Dict[int, Tuple[int, ...]]:
    """Per-router event tuples from the engine's flat event array."""
    ev = np.asarray(events).reshape(-1, len(EVENT_NAMES))
    return {r: tuple(int(v) for v in ev[r]) for r in routers}


def check_event_order(counts: Tuple[int, ...], resident: int = 0) -> Optional[str]:
    """pop <= read <= write; reads occur only on buffered flits."""
    write, read, pop = counts[0], counts[1], counts[2]
    if pop > read:
        return f"buffer_pop {pop} exceeds buffer_read {read}"
    if read > write:
        return f"buffer_read {read} exceeds buffer_write {write}"
    if write - read != resident:
        return f"write - read = {write - read} but {resident} flits are buffered"
    return None
