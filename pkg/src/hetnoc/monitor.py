"""Observation: link data-flow matrices, latency statistics and usage histograms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .router import FlitKind
from .topology import Direction

INITIAL = 0
HEAD_ACTIVE = 1
HEAD_IDLE = 2


def state_count(n_colors: int) -> int:
    return 2 * n_colors + 3


def color_active(color: int) -> int:
    return 3 + 2 * color


def color_idle(color: int) -> int:
    return 4 + 2 * color


def state_labels(n_colors: int) -> List[str]:
    labels = ["initial", "head_active", "head_idle"]
    for c in range(n_colors):
        labels += [f"c{c}_active", f"c{c}_idle"]
    return labels


def is_active(state: int) -> bool:
    return state == HEAD_ACTIVE or (state >= 3 and (state - 3) % 2 == 0)


def active_states(n_colors: int) -> List[int]:
    return [HEAD_ACTIVE] + [color_active(c) for c in range(n_colors)]


@dataclass
class DataFlowMatrix:
    """Transition counts over link states, one transition per driver cycle."""

    link_id: int
    n_colors: int
    counts: np.ndarray = None

    def __post_init__(self):
        s = state_count(self.n_colors)
        if self.counts is None:
            self.counts = np.zeros((s, s), dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != (s, s):
                raise ValueError(f"counts must be {s}x{s} for {self.n_colors} colors")

    @property
    def n_states(self) -> int:
        return state_count(self.n_colors)

    @property
    def labels(self) -> List[str]:
        return state_labels(self.n_colors)

    @property
    def cycles_recorded(self) -> int:
        return int(self.counts.sum())

    @property
    def flits(self) -> int:
        """Cycles that ended in an active state."""
        return int(self.counts[:, active_states(self.n_colors)].sum())

    @property
    def utilization(self) -> float:
        cyc = self.cycles_recorded
        return self.flits / cyc if cyc else 0.0

    def active_mass(self, color: int) -> float:
        """Normalised mass of transitions into ``(color, active)``."""
        return float(normalize(self)[:, color_active(color)].sum())

    def chain_imbalance(self) -> int:
        """Largest |row sum - column sum| over states."""
        return int(np.abs(self.counts.sum(axis=1) - self.counts.sum(axis=0)).max())

    def structural_violations(self) -> int:
        """Direct colour-to-colour active transitions between different colours."""
        total = 0
        for i in range(self.n_colors):
            for j in range(self.n_colors):
                if i != j:
                    total += int(self.counts[color_active(i), color_active(j)])
        return total


def link_observe(
    matrix: DataFlowMatrix, prev_state: int, flit: Optional[Tuple[FlitKind, int]]
) -> int:
    """Record one driver cycle; ``flit`` is ``(kind, color)`` or ``None``.

    >>> m = DataFlowMatrix(0, 1)
    >>> s = INITIAL
    >>> for f in [(FlitKind.HEAD, 0), (FlitKind.BODY, 0), None]:
    ...     s = link_observe(m, s, f)
    >>> state_labels(1)[s], m.cycles_recorded
    ('c0_idle', 3)
    """
    if flit is not None:
        kind, color = flit
        if kind.is_head:
            new = HEAD_ACTIVE
        else:
            if not 0 <= color < matrix.n_colors:
                raise ValueError(f"undeclared color {color}")
            new = color_active(color)
    elif prev_state == INITIAL:
        new = INITIAL
    elif prev_state in (HEAD_ACTIVE, HEAD_IDLE):
        new = HEAD_IDLE
    else:
        new = color_idle((prev_state - 3) // 2)
    matrix.counts[prev_state, new] += 1
    return new


def normalize(matrix: DataFlowMatrix) -> np.ndarray:
    total = matrix.cycles_recorded
    if total == 0:
        raise ValueError(f"link {matrix.link_id}: no cycles recorded")
    return matrix.counts / float(total)


# -- latency ------------------------------------------------------------------

RESERVOIR_SIZE = 4096


@dataclass
class RunningStat:
    """Exact count/mean/std plus a bounded reservoir for the median."""

    name: str
    seed: int = 0
    count: int = 0
    total: int = 0
    total_sq: int = 0
    reservoir: List[int] = field(default_factory=list)

    def __post_init__(self):
        self._rng = np.random.default_rng([self.seed, sum(map(ord, self.name))])

    def add(self, value: int) -> None:
        if value < 0:
            raise ValueError(f"negative {self.name} latency {value}")
        self.count += 1
        self.total += value
        self.total_sq += value * value
        if len(self.reservoir) < RESERVOIR_SIZE:
            self.reservoir.append(value)
        else:
            j = int(self._rng.integers(0, self.count))
            if j < RESERVOIR_SIZE:
                self.reservoir[j] = value

    def extend(self, values: Sequence[int]) -> None:
        for v in values:
            self.add(int(v))

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else float("nan")

    @property
    def std(self) -> float:
        if self.count == 0:
            return float("nan")
        var = self.total_sq / self.count - (self.total / self.count) ** 2
        return math.sqrt(max(var, 0.0))

    @property
    def median(self) -> float:
        if not self.reservoir:
            return float("nan")
        return float(np.median(np.asarray(self.reservoir, dtype=np.float64)))


@dataclass
class LatencyAccumulator:
    """Flit, packet and network latency statistics in picoseconds."""

    seed: int = 0
    flit: RunningStat = None
    packet: RunningStat = None
    network: RunningStat = None

    def __post_init__(self):
        self.flit = self.flit or RunningStat("flit", self.seed)
        self.packet = self.packet or RunningStat("packet", self.seed)
        self.network = self.network or RunningStat("network", self.seed)

    def record_flit(self, created: int, ejected: int) -> None:
        self.flit.add(ejected - created)

    def record_packet(self, created: int, injected: int, ejected: int) -> None:
        if not created <= injected <= ejected:
            raise ValueError(f"timestamps out of order: {created}, {injected}, {ejected}")
        self.packet.add(ejected - created)
        self.network.add(ejected - injected)

    def metrics(self) -> Dict[str, RunningStat]:
        return {"flit": self.flit, "packet": self.packet, "network": self.network}


def record_latency(acc: LatencyAccumulator, created: int, injected: int, ejected: int, flits: int = 1) -> None:
    """Record a completed packet whose flits all ejected at ``ejected``."""
    for _ in range(flits):
        acc.record_flit(created, ejected)
    acc.record_packet(created, injected, ejected)


# -- usage histograms --------------------------------------------------------


@dataclass
class PortUsage:
    direction: Direction
    vc_usage: np.ndarray
    occupancy_hist: np.ndarray

    @property
    def buffer_positions(self) -> np.ndarray:
        """Cycles each depth position was filled: rows = positions, columns = VCs.

        Position k is filled whenever occupancy exceeds k, so this is the
        reversed cumulative sum of the occupancy-level histogram.
        """
        h = self.occupancy_hist
        return np.flip(np.cumsum(np.flip(h, axis=0), axis=0), axis=0)


@dataclass
class UsageHistograms:
    """Per router, per port: VC-occupancy counts and buffer fill statistics.

    ``vc_usage[k]`` counts router cycles with exactly ``k`` non-empty VCs.
    ``occupancy_hist[level-1, vc]`` counts cycles the VC held ``level`` flits.
    """

    routers: Dict[int, List[PortUsage]] = field(default_factory=dict)
    cycles: Dict[int, int] = field(default_factory=dict)

    def add_router(self, router: int, ports: List[PortUsage], cycles: int) -> None:
        self.routers[router] = ports
        self.cycles[router] = cycles


def sample_usage(hist: UsageHistograms, view) -> None:
    """Add one cycle of a :class:`hetnoc.router.RouterView` to ``hist``."""
    ports = hist.routers.get(view.node)
    if ports is None:
        ports = []
        for pv in view.ports:
            depth = max(pv.depths) if pv.depths else 1
            ports.append(
                PortUsage(
                    pv.direction,
                    np.zeros(len(pv.occupancy) + 1, dtype=np.int64),
                    np.zeros((depth, len(pv.occupancy)), dtype=np.int64),
                )
            )
        hist.routers[view.node] = ports
        hist.cycles[view.node] = 0
    for pu, pv in zip(ports, view.ports):
        occ = sum(1 for c in pv.occupancy if c > 0)
        pu.vc_usage[occ] += 1
        for v, c in enumerate(pv.occupancy):
            if c > 0:
                pu.occupancy_hist[c - 1, v] += 1
    hist.cycles[view.node] += 1
