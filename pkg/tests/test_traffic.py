import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetnoc.config import SimulationConfig, SyntheticConfig, parse_application
from hetnoc.errors import ConfigError, SimulationError
from hetnoc.kernel import PS_PER_NS
from hetnoc.sim import run_tasks
from hetnoc.traffic import (
    ApplicationSpec,
    Destination,
    IntRange,
    Possibility,
    Requirement,
    TaskEngine,
    TaskRuntime,
    TaskSpec,
    TokenStore,
    binomial_bounds,
    inject_uniform,
    synthetic_phases,
    task_step,
    uniform_packets,
    uniform_schedule,
)

from helpers import UNBOUNDED, line_graph, mesh
from test_config import DATA_TYPES, branching_app_text


def rngs(seed=0):
    return np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1])


def test_rate_zero_never_injects():
    hits, _ = uniform_schedule(0.0, 4, 0, 8, 10_000, *rngs())
    assert hits.size == 0


def test_injection_count_within_binomial_bounds():
    n, p = 100_000, 0.08 / 32
    lo, hi = binomial_bounds(n, p)
    assert (lo, hi) == pytest.approx((250 - 3 * np.sqrt(n * p * (1 - p)), 250 + 3 * np.sqrt(n * p * (1 - p))))
    for pe in range(4):
        hits, _ = uniform_schedule(0.08, 32, pe, 16, n, *rngs(pe))
        assert lo <= hits.size <= hi
        assert lo * 32 <= hits.size * 32 <= hi * 32


@settings(max_examples=50, deadline=None)
@given(pe=st.integers(0, 9), n_pes=st.integers(2, 10), seed=st.integers(0, 2**16))
def test_destination_is_never_the_source(pe, n_pes, seed):
    pe = pe % n_pes
    _, d = uniform_schedule(0.9, 1, pe, n_pes, 500, *rngs(seed))
    assert d.size > 0 and not (d == pe).any()
    assert d.min() >= 0 and d.max() < n_pes


def test_vectorised_schedule_matches_per_cycle_draws():
    hits, dsts = uniform_schedule(0.3, 4, 2, 5, 2000, *rngs(3))
    bern, dest = rngs(3)
    loop = [(c, inject_uniform(0.3, 4, 2, 5, bern, dest)) for c in range(2000)]
    loop = [(c, d) for c, d in loop if d is not None]
    assert [c for c, _ in loop] == hits.tolist()
    assert [d for _, d in loop] == dsts.tolist()


def test_destinations_are_uniform():
    _, d = uniform_schedule(1.0, 1, 0, 5, 40_000, *rngs(1))
    counts = np.bincount(d, minlength=5)
    assert counts[0] == 0
    assert np.all(np.abs(counts[1:] - 10_000) < 4 * np.sqrt(40_000 * 0.25 * 0.75))


def test_phases_are_disjoint():
    synth = SyntheticConfig(warmup_start_ns=5, warmup_duration_ns=100, warmup_rate=0.02,
                            run_start_after_warmup_ns=10, run_duration_ns=50)
    warm, run = synthetic_phases(synth, 0.07)
    assert (warm.start_ps, warm.end_ps, warm.rate, warm.measured) == (5000, 105000, 0.02, False)
    assert (run.start_ps, run.end_ps, run.rate, run.measured) == (115000, 165000, 0.07, True)


def test_uniform_packets_is_reproducible_and_tagged():
    synth = SyntheticConfig(warmup_duration_ns=1000, warmup_rate=0.5, run_duration_ns=1000)
    phases = synthetic_phases(synth, 0.5)
    periods = {10: 1000, 11: 2000, 12: 1000}
    a = uniform_packets([10, 11, 12], periods, phases, 2, seed=9)
    b = uniform_packets([10, 11, 12], periods, phases, 2, seed=9)
    c = uniform_packets([10, 11, 12], periods, phases, 2, seed=10)
    assert a == b and a != c
    for pe, pkts in a.items():
        assert all(p.created_ps % periods[pe] == 0 and p.dst_pe != pe for p in pkts)
        assert all(p.measured == (p.created_ps >= 1_000_000) for p in pkts)
        assert [p.created_ps for p in pkts] == sorted(p.created_ps for p in pkts)


# -- Petri net ---------------------------------------------------------------


def branching_runtime(seed):
    app = parse_application(branching_app_text(), DATA_TYPES)
    rng = np.random.default_rng(seed)
    return TaskRuntime(app.tasks[1], rng), rng


@pytest.mark.parametrize("seed", range(5))
def test_published_task_firing(seed):
    rt, rng = branching_runtime(seed)
    store = TokenStore()
    store.add(1, 1, 0, 5)
    sends = []
    for now in range(0, 400 * PS_PER_NS, PS_PER_NS):
        sends += [(now, s) for s in task_step(rt, store, now, rng)]
    firings = sorted({t for t, _ in sends})
    assert 1 <= len(firings) <= 2
    for t in firings:
        batch = [s for f, s in sends if f == t]
        assert len(batch) == 3 and all(s.type_id == 1 and s.dst_task == 3 for s in batch)
        rel = [s.release_ps for s in batch]
        assert 0 <= rel[0] - t <= 50 * PS_PER_NS
        assert np.diff(rel).tolist() == [10 * PS_PER_NS] * 2
        assert t <= 100 * PS_PER_NS
    assert store.consumed == len(firings)


def test_window_and_repeat_rules():
    dest = Destination(IntRange(0, 0), IntRange(0, 0), IntRange(1, 1), 0, 0)
    spec = TaskSpec(0, IntRange(5, 5), IntRange(3, 3), IntRange(-1, -1), (), (Possibility(0, 1.0, (dest,)),))
    rng = np.random.default_rng(0)
    rt = TaskRuntime(spec, rng)
    store = TokenStore()
    fired = [t for t in range(0, 20_000, 1000) if rt.step(store, t, rng)]
    assert fired == [5000, 6000, 7000, 8000]

    spec = TaskSpec(0, IntRange(0, 0), UNBOUNDED, IntRange(2, 2), (), (Possibility(0, 1.0, (dest,)),))
    rt = TaskRuntime(spec, rng)
    fired = [t for t in range(0, 10_000, 1000) if rt.step(store, t, rng)]
    assert fired == [0, 1000] and rt.exhausted


def test_firing_waits_for_tokens_and_consumes_atomically():
    req = (Requirement(0, 7, IntRange(2, 2)), Requirement(1, 8, IntRange(1, 1)))
    spec = TaskSpec(0, IntRange(0, 0), UNBOUNDED, UNBOUNDED, req, ())
    rng = np.random.default_rng(0)
    rt = TaskRuntime(spec, rng)
    store = TokenStore()
    store.add(0, 0, 7, 2)
    rt.step(store, 0, rng)
    assert rt.repetitions == 0 and store.available(0, 0, 7) == 2
    store.add(0, 1, 8)
    rt.step(store, 1000, rng)
    assert rt.repetitions == 1 and store.resident == 0 and store.consumed == 3


def test_token_store_rejects_overdraw():
    store = TokenStore()
    with pytest.raises(SimulationError):
        store.consume(0, 0, 0, 1)


def test_possibility_frequencies_follow_probabilities():
    d0 = Destination(IntRange(0, 0), IntRange(0, 0), IntRange(1, 1), 0, 1)
    d1 = Destination(IntRange(0, 0), IntRange(0, 0), IntRange(1, 1), 0, 2)
    spec = TaskSpec(0, IntRange(0, 0), UNBOUNDED, UNBOUNDED, (),
                    (Possibility(0, 0.25, (d0,)), Possibility(1, 0.75, (d1,))))
    rng = np.random.default_rng(1)
    rt = TaskRuntime(spec, rng)
    store = TokenStore()
    dst = [rt.step(store, t * 1000, rng)[0].dst_task for t in range(8000)]
    share = dst.count(1) / len(dst)
    assert abs(share - 0.25) < 4 * np.sqrt(0.25 * 0.75 / 8000)


def test_unmapped_destination_is_rejected():
    dest = Destination(IntRange(0, 0), IntRange(0, 0), IntRange(1, 1), 0, 5)
    app = ApplicationSpec({0: TaskSpec(0, IntRange(0, 0), UNBOUNDED, UNBOUNDED, (), (Possibility(0, 1.0, (dest,)),)),
                           5: TaskSpec(5, IntRange(0, 0), UNBOUNDED, IntRange(0, 0))}, {0: "a"})
    with pytest.raises(ConfigError):
        TaskEngine(app, {0: 3})


def relay_app():
    """Task 1 emits type 0 to task 2, which relays each token back as type 1.

    Task 1 never consumes what it gets back, so returned tokens stay resident.
    """
    one = IntRange(1, 1)

    def dest(task, type_id):
        return (Possibility(0, 1.0, (Destination(IntRange(2, 5), IntRange(0, 0), one, type_id, task),)),)

    tasks = {
        1: TaskSpec(1, IntRange(0, 0), UNBOUNDED, UNBOUNDED, (), dest(2, 0)),
        2: TaskSpec(2, IntRange(0, 0), UNBOUNDED, UNBOUNDED, (Requirement(0, 1, one),), dest(1, 1)),
    }
    return ApplicationSpec(tasks, {0: "ping", 1: "pong"})


def test_task_run_conserves_tokens_and_flits():
    g = line_graph(3, vcs=2)
    cfg = SimulationConfig(simulation_time_ns=3000, flits_per_packet=3)
    app = relay_app()
    res = run_tasks(g, cfg, app, {1: 3, 2: 5}, seed=4)
    produced, consumed, resident = (res.extra["tokens_produced"], res.extra["tokens_consumed"],
                                    res.extra["tokens_resident"])
    assert produced == consumed + resident
    assert consumed > 100 and resident > 100
    assert res.conservation_holds()
    again = run_tasks(g, cfg, app, {1: 3, 2: 5}, seed=4)
    assert again.packets_created == res.packets_created
    assert again.latency.packet.total == res.latency.packet.total


def test_task_engine_delivers_local_sends_without_network():
    g = line_graph(2)
    cfg = SimulationConfig(simulation_time_ns=200, flits_per_packet=2)
    res = run_tasks(g, cfg, relay_app(), {1: 2, 2: 2}, seed=0)
    assert res.packets_created == 0
    assert res.extra["tokens_produced"] > 40
