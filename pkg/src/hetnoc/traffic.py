"""Workload generation.

Two sources feed the processing elements:

* a colored stochastic Petri-net task engine.  Tasks are places with a
  start/duration window and a repeat budget; a firing consumes the
  required tokens, picks one send possibility by probability and schedules
  ``count`` packets per destination (first after ``delay``, then every
  ``interval``).  A delivered packet of type t from task a adds one token
  (t, a) to the receiving task.
* synthetic uniform random traffic with warmup and run phases.  Injection
  is packet granular: each PE cycle starts a packet with probability
  ``rate / flits_per_packet``.

All randomness comes from numpy generators seeded per PE, so a fixed seed
reproduces the full send schedule.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, SimulationError
from .kernel import PS_PER_NS

# -- application model ---------------------------------------------------


@dataclass(frozen=True)
class IntRange:
    """Inclusive integer range; ``(-1, -1)`` means unbounded where allowed."""

    min: int
    max: int

    @property
    def unbounded(self) -> bool:
        return self.min == -1 and self.max == -1

    def sample(self, rng: np.random.Generator) -> int:
        if self.min == self.max:
            return self.min
        return int(rng.integers(self.min, self.max + 1))


@dataclass(frozen=True)
class Requirement:
    type_id: int
    source_task: int
    count: IntRange


@dataclass(frozen=True)
class Destination:
    delay: IntRange
    interval: IntRange
    count: IntRange
    type_id: int
    task: int


@dataclass(frozen=True)
class Possibility:
    id: int
    probability: float
    destinations: Tuple[Destination, ...]


@dataclass(frozen=True)
class TaskSpec:
    id: int
    start: IntRange
    duration: IntRange
    repeat: IntRange
    requirements: Tuple[Requirement, ...] = ()
    possibilities: Tuple[Possibility, ...] = ()

    @property
    def is_source(self) -> bool:
        return not self.requirements


@dataclass(frozen=True)
class ApplicationSpec:
    tasks: Dict[int, TaskSpec]
    data_types: Dict[int, str]

    @property
    def color_ids(self) -> List[int]:
        return sorted(self.data_types)


# -- token bookkeeping ---------------------------------------------------


class TokenStore:
    """Token counts keyed by (task, type, source task)."""

    def __init__(self) -> None:
        self.counts: Dict[Tuple[int, int, int], int] = {}
        self.produced = 0
        self.consumed = 0

    def add(self, task: int, type_id: int, source: int, n: int = 1) -> None:
        key = (task, type_id, source)
        self.counts[key] = self.counts.get(key, 0) + n
        self.produced += n

    def available(self, task: int, type_id: int, source: int) -> int:
        return self.counts.get((task, type_id, source), 0)

    def consume(self, task: int, type_id: int, source: int, n: int) -> None:
        key = (task, type_id, source)
        have = self.counts.get(key, 0)
        if have < n:
            raise SimulationError(f"task {task} consumed {n} tokens of {key} but holds {have}")
        self.counts[key] = have - n
        self.consumed += n

    @property
    def resident(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class SendRequest:
    release_ps: int
    src_task: int
    dst_task: int
    type_id: int


class TaskRuntime:
    """Mutable firing state of one mapped task.

    The window, duration and repeat budget are drawn once; requirement
    counts are redrawn for every repetition.  After a firing the task stays
    busy until its last scheduled send is released (retention time).
    """

    def __init__(self, spec: TaskSpec, rng: np.random.Generator):
        self.spec = spec
        self.start_ps = spec.start.sample(rng) * PS_PER_NS
        duration = None if spec.duration.unbounded else spec.duration.sample(rng)
        self.end_ps = None if duration is None else self.start_ps + duration * PS_PER_NS
        self.repeat = None if spec.repeat.unbounded else spec.repeat.sample(rng)
        self.repetitions = 0
        self.busy_until = -1
        self.last_fired = -1
        self._needed: Optional[List[int]] = None
        cum = np.cumsum([p.probability for p in spec.possibilities]) if spec.possibilities else np.array([])
        self._cumulative = cum

    @property
    def exhausted(self) -> bool:
        return self.repeat is not None and self.repetitions >= self.repeat

    def in_window(self, now: int) -> bool:
        return now >= self.start_ps and (self.end_ps is None or now <= self.end_ps)

    def step(self, store: TokenStore, now: int, rng: np.random.Generator) -> List[SendRequest]:
        """Fire at most once at ``now``; return the scheduled sends."""
        if self.exhausted or not self.in_window(now):
            return []
        if now < self.busy_until or now == self.last_fired:
            return []
        spec = self.spec
        if self._needed is None:
            self._needed = [r.count.sample(rng) for r in spec.requirements]
        for req, need in zip(spec.requirements, self._needed):
            if store.available(spec.id, req.type_id, req.source_task) < need:
                return []
        for req, need in zip(spec.requirements, self._needed):
            store.consume(spec.id, req.type_id, req.source_task, need)
        self._needed = None
        self.repetitions += 1
        self.last_fired = now
        sends: List[SendRequest] = []
        if spec.possibilities:
            u = rng.random()
            idx = int(np.searchsorted(self._cumulative, u, side="right"))
            idx = min(idx, len(spec.possibilities) - 1)
            for dest in spec.possibilities[idx].destinations:
                delay = dest.delay.sample(rng) * PS_PER_NS
                interval = dest.interval.sample(rng) * PS_PER_NS
                count = dest.count.sample(rng)
                for k in range(count):
                    sends.append(SendRequest(now + delay + k * interval, spec.id, dest.task, dest.type_id))
        if sends:
            self.busy_until = max(s.release_ps for s in sends)
        return sends


def task_step(runtime: TaskRuntime, store: TokenStore, now: int, rng: np.random.Generator) -> List[SendRequest]:
    return runtime.step(store, now, rng)


class TaskEngine:
    """Drives all mapped tasks from the simulation's PE clock edges.

    ``bind`` connects the engine to a packet sink ``add_packet(src_pe, dst_pe,
    color, created_ps) -> packet id``.  The simulation calls ``on_edge`` at
    every edge of a PE hosting tasks and ``on_delivery`` when a packet's tail
    reaches its destination.
    """

    def __init__(
        self,
        app: ApplicationSpec,
        mapping: Mapping[int, int],
        seed: int = 0,
        color_index: Optional[Mapping[int, int]] = None,
    ):
        for tid, spec in app.tasks.items():
            if tid not in mapping:
                raise ConfigError("mapping", f"task {tid}", "task is not mapped to a PE")
            for poss in spec.possibilities:
                for dest in poss.destinations:
                    if dest.task not in mapping:
                        raise ConfigError("mapping", f"task {dest.task}", "destination task is unmapped")
        self.app = app
        self.mapping = dict(mapping)
        self.store = TokenStore()
        self.color_index = dict(color_index) if color_index else {t: i for i, t in enumerate(app.color_ids)}
        self._rngs: Dict[int, np.random.Generator] = {}
        self._tasks_by_pe: Dict[int, List[TaskRuntime]] = {}
        for pe in sorted(set(self.mapping.values())):
            self._rngs[pe] = np.random.default_rng([seed, pe])
        for tid in sorted(app.tasks):
            pe = self.mapping[tid]
            self._tasks_by_pe.setdefault(pe, []).append(TaskRuntime(app.tasks[tid], self._rngs[pe]))
        self._pending: Dict[int, List[Tuple[int, int, SendRequest]]] = {pe: [] for pe in self._tasks_by_pe}
        self._seq = 0
        self._in_flight: Dict[int, SendRequest] = {}
        self._add_packet: Optional[Callable[[int, int, int, int], int]] = None
        self.sent_packets = 0
        self.local_deliveries = 0

    @property
    def hosting_pes(self) -> List[int]:
        return sorted(self._tasks_by_pe)

    def runtimes(self, pe: int) -> List[TaskRuntime]:
        return self._tasks_by_pe.get(pe, [])

    def bind(self, add_packet: Callable[[int, int, int, int], int]) -> None:
        self._add_packet = add_packet

    def on_edge(self, pe: int, now: int) -> None:
        rng = self._rngs[pe]
        pending = self._pending[pe]
        for rt in self._tasks_by_pe[pe]:
            for req in rt.step(self.store, now, rng):
                heapq.heappush(pending, (req.release_ps, self._seq, req))
                self._seq += 1
        while pending and pending[0][0] <= now:
            _, _, req = heapq.heappop(pending)
            self._release(pe, req, now)

    def _release(self, pe: int, req: SendRequest, now: int) -> None:
        dst_pe = self.mapping[req.dst_task]
        if dst_pe == pe:
            self.local_deliveries += 1
            self.store.add(req.dst_task, req.type_id, req.src_task)
            return
        if self._add_packet is None:
            raise SimulationError("task engine is not bound to a simulation")
        pid = self._add_packet(pe, dst_pe, self.color_index[req.type_id], now)
        self._in_flight[pid] = req
        self.sent_packets += 1

    def on_delivery(self, pid: int, now: int) -> None:
        req = self._in_flight.pop(pid, None)
        if req is None:
            return
        self.store.add(req.dst_task, req.type_id, req.src_task)

    @property
    def packets_in_flight(self) -> int:
        return len(self._in_flight)


# -- synthetic uniform random traffic -----------------------------------


@dataclass(frozen=True)
class SyntheticPhase:
    start_ps: int
    end_ps: int
    rate: float
    measured: bool


def inject_uniform(
    rate: float,
    flits_per_packet: int,
    pe_index: int,
    n_pes: int,
    bern_rng: np.random.Generator,
    dest_rng: np.random.Generator,
) -> Optional[int]:
    """One PE cycle of uniform random injection.

    Returns the destination PE index (never ``pe_index``) or ``None``.
    Exactly one uniform draw is taken from ``bern_rng`` per call and one from
    ``dest_rng`` per created packet, the same consumption as
    :func:`uniform_schedule`.
    """
    u = bern_rng.random()
    if n_pes < 2 or u >= rate / flits_per_packet:
        return None
    return _pick_destination(dest_rng.random(), pe_index, n_pes)


def _pick_destination(u: float, pe_index: int, n_pes: int) -> int:
    d = min(int(u * (n_pes - 1)), n_pes - 2)
    return d + 1 if d >= pe_index else d


def uniform_schedule(
    rate: float,
    flits_per_packet: int,
    pe_index: int,
    n_pes: int,
    n_cycles: int,
    bern_rng: np.random.Generator,
    dest_rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`inject_uniform` over ``n_cycles`` consecutive cycles.

    Returns (cycle offsets, destination PE indices).
    """
    if n_cycles <= 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    u = bern_rng.random(n_cycles)
    if n_pes < 2:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    hits = np.flatnonzero(u < rate / flits_per_packet).astype(np.int64)
    du = dest_rng.random(hits.size)
    d = np.minimum((du * (n_pes - 1)).astype(np.int64), n_pes - 2)
    d = np.where(d >= pe_index, d + 1, d)
    return hits, d


def synthetic_phases(synth, rate: float) -> List[SyntheticPhase]:
    """Warmup and measured run phases (times converted to ps)."""
    phases = []
    w0 = synth.warmup_start_ns * PS_PER_NS
    w1 = w0 + synth.warmup_duration_ns * PS_PER_NS
    if w1 > w0 and synth.warmup_rate > 0:
        phases.append(SyntheticPhase(w0, w1, synth.warmup_rate, False))
    r0 = w1 + synth.run_start_after_warmup_ns * PS_PER_NS
    r1 = r0 + synth.run_duration_ns * PS_PER_NS
    if r1 > r0:
        phases.append(SyntheticPhase(r0, r1, rate, True))
    return phases


@dataclass
class UniformPacket:
    created_ps: int
    src_pe: int
    dst_pe: int
    measured: bool


def uniform_packets(
    pes: Sequence[int],
    periods_ps: Mapping[int, int],
    phases: Sequence[SyntheticPhase],
    flits_per_packet: int,
    seed: int,
) -> Dict[int, List[UniformPacket]]:
    """Complete injection schedule, per source PE, in creation order.

    Uniform injection does not depend on network state (the source queue is
    unbounded), so the whole schedule is drawn up front.
    """
    pes = list(pes)
    n = len(pes)
    out: Dict[int, List[UniformPacket]] = {pe: [] for pe in pes}
    for idx, pe in enumerate(pes):
        period = periods_ps[pe]
        for ph_i, ph in enumerate(phases):
            if ph.rate <= 0:
                continue
            first = -(-ph.start_ps // period)
            last = (ph.end_ps - 1) // period
            n_cycles = last - first + 1
            bern = np.random.default_rng([seed, pe, ph_i, 0])
            dest = np.random.default_rng([seed, pe, ph_i, 1])
            hits, dsts = uniform_schedule(ph.rate, flits_per_packet, idx, n, n_cycles, bern, dest)
            for c, d in zip(hits.tolist(), dsts.tolist()):
                out[pe].append(UniformPacket((first + c) * period, pe, pes[d], ph.measured))
    return out


def binomial_bounds(n_cycles: int, p: float, k: float = 3.0) -> Tuple[float, float]:
    """Mean +- k standard deviations of a Binomial(n, p) count."""
    mean = n_cycles * p
    sd = math.sqrt(n_cycles * p * (1.0 - p))
    return mean - k * sd, mean + k * sd
