"""Dynamic energy accounting for routers and links.

Router energy is a weighted sum of five event counters.  Link energy weights
each recorded state transition of a data-flow matrix with a per-transition
coefficient, so a new coefficient table can be evaluated on stored matrices
without simulating again.

The built-in coefficients are stand-ins: every router event costs 1 pJ and
link transitions follow :func:`default_table`.  Technology-specific values
belong in a coefficient file.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .monitor import (
    HEAD_ACTIVE,
    DataFlowMatrix,
    color_active,
    state_count,
    state_labels,
)
from .router import EVENT_NAMES

DEFAULT_EVENT_PJ = 1.0
DEFAULT_UNIT_PJ_PER_BIT = 0.01


@dataclass(frozen=True)
class RouterEventCounts:
    buffer_write: int = 0
    buffer_read: int = 0
    buffer_pop: int = 0
    routing_calc: int = 0
    crossbar_traversal: int = 0

    def as_tuple(self) -> Tuple[int, ...]:
        return tuple(getattr(self, name) for name in EVENT_NAMES)

    @classmethod
    def from_tuple(cls, values: Sequence[int]) -> "RouterEventCounts":
        return cls(*[int(v) for v in values])

    def scaled(self, k: int) -> "RouterEventCounts":
        return RouterEventCounts(*[k * v for v in self.as_tuple()])


def count_event(counts: RouterEventCounts, event: str) -> RouterEventCounts:
    if event not in EVENT_NAMES:
        raise ValueError(f"unknown router event {event!r}")
    return replace(counts, **{event: getattr(counts, event) + 1})


@dataclass(frozen=True)
class ColorActivity:
    """Switching statistics of one data stream."""

    toggle_probability: float
    coupling: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.toggle_probability <= 1.0:
            raise ValueError(f"toggle probability {self.toggle_probability} outside [0, 1]")
        if self.coupling < 0:
            raise ValueError("coupling factor must be >= 0")


@dataclass
class EnergyCoefficients:
    """Event energies and a transition table over link states, all in pJ."""

    n_colors: int
    events: Dict[str, float] = field(default_factory=lambda: {e: DEFAULT_EVENT_PJ for e in EVENT_NAMES})
    transitions: np.ndarray = None

    def __post_init__(self):
        s = state_count(self.n_colors)
        if self.transitions is None:
            self.transitions = np.zeros((s, s), dtype=np.float64)
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        if self.transitions.shape != (s, s):
            raise ValueError(f"transition table must be {s}x{s}")
        if (self.transitions < 0).any() or any(v < 0 for v in self.events.values()):
            raise ValueError("energy coefficients must be non-negative")

    @property
    def labels(self) -> List[str]:
        return state_labels(self.n_colors)


def default_table(
    colors: Sequence[ColorActivity],
    flit_size: int,
    unit_pj: float = DEFAULT_UNIT_PJ_PER_BIT,
    interleave_activity: Optional[float] = None,
) -> EnergyCoefficients:
    """Stand-in link table from per-colour activity.

    Entering ``(color i, active)`` costs ``flit_size * alpha_i * (1 + coupling_i)
    * unit``; entering ``(head, active)`` costs ``flit_size * 0.5 * unit``;
    entering any idle state costs nothing.  When ``interleave_activity`` is
    given, a direct switch from one colour's data to another's uses that
    toggle probability instead, modelling uncorrelated consecutive words.
    """
    n = len(colors)
    s = state_count(n)
    table = np.zeros((s, s), dtype=np.float64)
    table[:, HEAD_ACTIVE] = flit_size * 0.5 * unit_pj
    for i, c in enumerate(colors):
        table[:, color_active(i)] = flit_size * c.toggle_probability * (1.0 + c.coupling) * unit_pj
    if interleave_activity is not None:
        if not 0.0 <= interleave_activity <= 1.0:
            raise ValueError("interleave activity outside [0, 1]")
        for i in range(n):
            for j, c in enumerate(colors):
                if i != j:
                    table[color_active(i), color_active(j)] = (
                        flit_size * interleave_activity * (1.0 + c.coupling) * unit_pj
                    )
    return EnergyCoefficients(n, transitions=table)


def router_energy(counts: RouterEventCounts, coeffs: EnergyCoefficients) -> float:
    """Sum of count x coefficient over the five events, in a fixed order."""
    total = 0.0
    for name in EVENT_NAMES:
        if name not in coeffs.events:
            raise KeyError(f"missing coefficient for event {name!r}")
        total += getattr(counts, name) * coeffs.events[name]
    return total


def link_energy(matrix: DataFlowMatrix, coeffs: EnergyCoefficients) -> float:
    """Sum of count x coefficient over all transitions (correctly rounded)."""
    if matrix.n_colors != coeffs.n_colors:
        raise ValueError(
            f"state mismatch: matrix has {matrix.n_states} states, table has {state_count(coeffs.n_colors)}"
        )
    prod = matrix.counts.astype(np.float64) * coeffs.transitions
    return math.fsum(prod.ravel().tolist())


@dataclass
class EnergyReport:
    router_pj: Dict[int, float]
    link_pj: Dict[int, float]
    link_flits: Dict[int, int]
    duration_ns: float

    @property
    def router_total(self) -> float:
        return math.fsum(self.router_pj[k] for k in sorted(self.router_pj))

    @property
    def link_total(self) -> float:
        return math.fsum(self.link_pj[k] for k in sorted(self.link_pj))

    @property
    def total(self) -> float:
        return math.fsum([self.router_pj[k] for k in sorted(self.router_pj)] + [self.link_pj[k] for k in sorted(self.link_pj)])

    @property
    def flits(self) -> int:
        return sum(self.link_flits.values())

    @property
    def link_energy_per_flit(self) -> float:
        return self.link_total / self.flits if self.flits else 0.0

    @property
    def energy_per_flit(self) -> float:
        return self.total / self.flits if self.flits else 0.0


def evaluate(
    events: Mapping[int, RouterEventCounts],
    matrices: Mapping[int, DataFlowMatrix],
    coeffs: EnergyCoefficients,
    duration_ns: float,
) -> EnergyReport:
    return EnergyReport(
        router_pj={r: router_energy(c, coeffs) for r, c in sorted(events.items())},
        link_pj={l: link_energy(m, coeffs) for l, m in sorted(matrices.items())},
        link_flits={l: m.flits for l, m in sorted(matrices.items())},
        duration_ns=duration_ns,
    )


def power_mw(energy_pj: float, duration_ns: float) -> float:
    """Average power; pJ per ns is mW."""
    return energy_pj / duration_ns if duration_ns > 0 else 0.0


# -- coefficient files -------------------------------------------------------

_HEADER = ["kind", "a", "b", "energy_pj"]


def coefficients_to_csv(coeffs: EnergyCoefficients) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_HEADER)
    for name in EVENT_NAMES:
        w.writerow(["event", name, "", repr(float(coeffs.events[name]))])
    labels = coeffs.labels
    for i, a in enumerate(labels):
        for j, b in enumerate(labels):
            w.writerow(["transition", a, b, repr(float(coeffs.transitions[i, j]))])
    return buf.getvalue()


def coefficients_from_csv(text: str, source: str = "coefficients") -> EnergyCoefficients:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != _HEADER:
        raise ValueError(f"{source}: header must be {','.join(_HEADER)}")
    events: Dict[str, float] = {}
    trans: Dict[Tuple[str, str], float] = {}
    for n, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ValueError(f"{source}: line {n}: expected 4 fields")
        kind, a, b, value = (c.strip() for c in row)
        v = float(value)
        if kind == "event":
            if a not in EVENT_NAMES:
                raise ValueError(f"{source}: line {n}: unknown event {a!r}")
            events[a] = v
        elif kind == "transition":
            trans[(a, b)] = v
        else:
            raise ValueError(f"{source}: line {n}: unknown row kind {kind!r}")
    missing = [e for e in EVENT_NAMES if e not in events]
    if missing:
        raise ValueError(f"{source}: missing event coefficients {missing}")
    n_states = math.isqrt(len(trans)) if trans else 3
    n_colors = (n_states - 3) // 2
    labels = state_labels(n_colors)
    if n_states * n_states != len(trans) or state_count(n_colors) != n_states:
        raise ValueError(f"{source}: transition rows do not form a square table over link states")
    table = np.zeros((n_states, n_states), dtype=np.float64)
    for i, a in enumerate(labels):
        for j, b in enumerate(labels):
            if (a, b) not in trans:
                raise ValueError(f"{source}: missing transition {a}>{b}")
            table[i, j] = trans[(a, b)]
    return EnergyCoefficients(n_colors, events=events, transitions=table)


def save_coefficients(coeffs: EnergyCoefficients, path) -> None:
    Path(path).write_text(coefficients_to_csv(coeffs))


def load_coefficients(path) -> EnergyCoefficients:
    p = Path(path)
    return coefficients_from_csv(p.read_text(), source=p.name)
