"""Multi-clock discrete-event kernel.

Time is an integer number of picoseconds.  Every node owns a periodic clock
starting at t = 0.  At each timestamp the firing nodes are visited twice in
ascending node id: first all *sample* handlers run, then all *cycle*
handlers.  Values written during the cycle pass become visible to a reader
only at the reader's first edge strictly after the write, so the order of
nodes within one timestamp never changes what anybody observes.

The compiled simulation engine embeds the same schedule natively; this
module is the reference used by tests and by small hand-written models.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, Iterable, List, Optional, Protocol, Tuple

from .errors import ConfigError, SimulationError

PS_PER_NS = 1000


def ns_to_ps(value_ns: float, what: str = "clock period") -> int:
    """Convert nanoseconds to integer picoseconds, rejecting inexact values."""
    ps = round(float(value_ns) * PS_PER_NS)
    if abs(ps - float(value_ns) * PS_PER_NS) > 1e-6:
        raise ConfigError("clock", what, f"{value_ns} ns is not a whole number of picoseconds")
    return int(ps)


def cycles_elapsed(period_ps: int, until_ps: int) -> int:
    """Number of clock edges in ``[0, until]`` for a clock starting at 0."""
    if period_ps <= 0:
        raise ValueError("period must be positive")
    if until_ps < 0:
        return 0
    return until_ps // period_ps + 1


class CycleHandler(Protocol):
    def sample(self, now: int) -> None: ...

    def cycle(self, now: int) -> None: ...


@dataclass
class KernelOutcome:
    until_ps: int
    edges: Dict[int, int]
    periods: Dict[int, int]

    def cycles_elapsed(self, node: int) -> int:
        if node not in self.edges:
            raise KeyError(f"unknown node {node}")
        return self.edges[node]


class ClockKernel:
    """Reference scheduler driving arbitrary per-node handlers.

    >>> k = ClockKernel()
    >>> seen = []
    >>> k.add(0, 1000, on_cycle=lambda t: seen.append((t, 0)))
    >>> k.add(1, 2000, on_cycle=lambda t: seen.append((t, 1)))
    >>> _ = k.run(2000)
    >>> seen
    [(0, 0), (0, 1), (1000, 0), (2000, 0), (2000, 1)]
    """

    def __init__(self) -> None:
        self._nodes: Dict[int, Tuple[int, Optional[Callable[[int], None]], Optional[Callable[[int], None]]]] = {}
        self._next: Dict[int, int] = {}
        self._edges: Dict[int, int] = {}
        self.now = -1

    def add(
        self,
        node: int,
        period_ps: int,
        on_cycle: Optional[Callable[[int], None]] = None,
        on_sample: Optional[Callable[[int], None]] = None,
    ) -> None:
        if node in self._nodes:
            raise ValueError(f"node {node} registered twice")
        if period_ps <= 0:
            raise ValueError("period must be positive")
        self._nodes[node] = (period_ps, on_sample, on_cycle)
        self._next[node] = 0
        self._edges[node] = 0

    def add_handler(self, node: int, period_ps: int, handler: CycleHandler) -> None:
        self.add(node, period_ps, on_cycle=handler.cycle, on_sample=handler.sample)

    def run(self, until_ps: int) -> KernelOutcome:
        if until_ps < 0:
            raise ValueError("until must be non-negative")
        while self._nodes:
            t = min(self._next.values())
            if t > until_ps:
                break
            if t < self.now:
                raise SimulationError(f"event at {t} ps scheduled in the past (now {self.now})")
            self.now = t
            firing = sorted(n for n, nt in self._next.items() if nt == t)
            for n in firing:
                sample = self._nodes[n][1]
                if sample is not None:
                    sample(t)
            for n in firing:
                cycle = self._nodes[n][2]
                if cycle is not None:
                    cycle(t)
            for n in firing:
                self._next[n] += self._nodes[n][0]
                self._edges[n] += 1
        return KernelOutcome(
            until_ps, dict(self._edges), {n: v[0] for n, v in self._nodes.items()}
        )


@dataclass
class LinkRegister:
    """One-flit pipeline register between two (possibly foreign) clock domains.

    Data and credits follow the same rule: visible to the reader at its
    first edge strictly after the write.
    """

    current_flit: object = None
    written_at: int = -1
    credit_backchannel: Deque[Tuple[int, int]] = field(default_factory=deque)

    @property
    def busy(self) -> bool:
        return self.current_flit is not None

    def write(self, flit: object, now: int) -> None:
        if self.current_flit is not None:
            raise SimulationError("link register overwritten before it was sampled")
        self.current_flit = flit
        self.written_at = now

    def sample(self, now: int) -> object:
        """Take the flit if it was written strictly before ``now``."""
        if self.current_flit is not None and self.written_at < now:
            flit, self.current_flit = self.current_flit, None
            return flit
        return None

    def return_credit(self, vc: int, now: int) -> None:
        self.credit_backchannel.append((vc, now))

    def take_credits(self, now: int) -> List[int]:
        out = []
        q = self.credit_backchannel
        while q and q[0][1] < now:
            out.append(q.popleft()[0])
        return out
