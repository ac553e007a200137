import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetnoc.errors import RoutingError
from hetnoc.routing import (
    ALGORITHMS,
    all_turn_masks,
    allowed_turns,
    analytic_xyz_mask,
    candidate_turns,
    canonical_algorithm,
    crossbar_reduction,
    fully_connected_mask,
    port_directions,
    route,
    TurnMask,
    trace_path,
    turn_report,
)
from hetnoc.topology import Direction

from helpers import mesh

E, W, N, S, U, D, L = (Direction.EAST, Direction.WEST, Direction.NORTH, Direction.SOUTH,
                       Direction.UP, Direction.DOWN, Direction.LOCAL)
STEP = {E: (1, 0, 0), W: (-1, 0, 0), N: (0, 1, 0), S: (0, -1, 0), U: (0, 0, 1), D: (0, 0, -1)}


@pytest.fixture(scope="module")
def cube():
    return mesh(z=4, x=(4,) * 4, y=(4,) * 4)[2]


def router_at(g, pos):
    return next(n for n in g.routers if g.nodes[n].position == pos)


def test_route_examples():
    assert route("XYZ", (0, 0, 0), (2, 1, 1)) is E
    assert route("ZplusXYZminus", (1, 1, 0), (1, 1, 2)) is U
    assert route("ZplusXYZminus", (0, 0, 2), (1, 0, 0)) is E
    assert route("ZplusXYZminus", (1, 0, 2), (1, 0, 0)) is D
    assert route("XY", (3, 3, 0), (3, 0, 0)) is S
    for alg in ALGORITHMS:
        assert route(alg, (1, 2, 0), (1, 2, 0)) is L


def test_route_errors():
    with pytest.raises(RoutingError):
        route("WESTFIRST", (0, 0, 0), (1, 0, 0))
    with pytest.raises(RoutingError):
        route("XY", (0, 0, 0), (0, 0, 1))


def test_aliases():
    assert canonical_algorithm("Z+(XY)Z-") == "ZplusXYZminus"
    assert canonical_algorithm("xyz") == "XYZ"
    with pytest.raises(KeyError):
        canonical_algorithm("negative-first")


coords = st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3))


@settings(max_examples=300, deadline=None)
@given(alg=st.sampled_from(["XYZ", "ZplusXYZminus"]), src=coords, dst=coords)
def test_routes_terminate_minimally(alg, src, dst):
    # walk positions only, independent of any graph
    cur, hops = src, 0
    bound = sum(abs(a - b) for a, b in zip(src, dst))
    while True:
        d = route(alg, cur, dst)
        if d is L:
            break
        cur = tuple(c + s for c, s in zip(cur, STEP[d]))
        hops += 1
        assert hops <= bound
    assert cur == dst and hops == bound


def test_route_is_pure():
    assert [route("XYZ", (0, 0, 0), (3, 2, 1)) for _ in range(3)] == [E, E, E]


def test_every_pe_pair_traces(cube):
    pes = cube.processing_elements
    for alg in ("XYZ", "ZplusXYZminus"):
        for s, d in itertools.product(pes[::7], pes[::5]):
            if s != d:
                path = trace_path(cube, alg, s, d)
                assert path[-1].out is L and path[-1].next_node == d


def test_inner_router_turn_examples(cube):
    inner = router_at(cube, (1, 1, 1))
    mask = allowed_turns("XYZ", cube, inner)
    assert (N, E) not in mask
    assert (E, N) in mask


def test_inner_router_turn_counts(cube):
    inner = router_at(cube, (1, 1, 1))
    assert len(candidate_turns(port_directions(cube, inner))) == 42
    # regression values from exhaustive enumeration; both equal the hand count 6+6+5+5+3+3+1+1
    assert len(allowed_turns("XYZ", cube, inner)) == 30
    assert len(allowed_turns("ZplusXYZminus", cube, inner)) == 30


def test_enumerated_xyz_mask_equals_dimension_order_rule(cube):
    masks = all_turn_masks(cube, "XYZ")
    for r in cube.routers:
        assert masks[r] == analytic_xyz_mask(r, port_directions(cube, r))


def test_ascend_first_turn_counts_per_layer(cube):
    # enumeration regression: fewer turns on the bottom layer, equal in the
    # middle, more on the top layer where ascending traffic turns laterally
    xyz = all_turn_masks(cube, "XYZ")
    zxz = all_turn_masks(cube, "ZplusXYZminus")
    per_layer = {}
    for r in cube.routers:
        z = cube.nodes[r].position[2]
        a, b = per_layer.get(z, (0, 0))
        per_layer[z] = (a + len(xyz[r]), b + len(zxz[r]))
    assert per_layer == {0: (244, 196), 1: (356, 356), 2: (356, 356), 3: (244, 292)}
    top = [r for r in cube.routers if cube.nodes[r].position[2] == 3]
    assert all((U, E) in zxz[r] or (U, W) in zxz[r] for r in top)
    assert all(not any(i is U and o not in (U, L) for i, o in xyz[r].allowed) for r in cube.routers)


def test_no_u_turns(cube):
    for alg in ("XYZ", "ZplusXYZminus"):
        for mask in all_turn_masks(cube, alg).values():
            assert all(d_out is not d_in.inverse or d_in is L for d_in, d_out in mask.allowed)


def test_local_injection_reaches_every_output(cube):
    for r, mask in all_turn_masks(cube, "XYZ").items():
        outs = set(port_directions(cube, r)) - {L}
        assert {d for (i, d) in mask.allowed if i is L} == outs


def test_reduction_bounds(cube):
    r = router_at(cube, (1, 1, 1))
    ports = port_directions(cube, r)
    assert crossbar_reduction(fully_connected_mask(r, ports), ports) == 0.0
    assert crossbar_reduction(TurnMask(r, frozenset()), ports) == 1.0
    assert crossbar_reduction(allowed_turns("XYZ", cube, r), ports) == pytest.approx(12 / 42)
    with pytest.raises(ValueError):
        crossbar_reduction(TurnMask(r, frozenset()), [])


def test_network_average_reduction(cube):
    analytic = [
        crossbar_reduction(analytic_xyz_mask(r, port_directions(cube, r)), port_directions(cube, r))
        for r in cube.routers
    ]
    rep = turn_report(cube, "XYZ")
    assert rep.average_reduction == pytest.approx(sum(analytic) / len(analytic), abs=1e-12)
    assert rep.average_reduction == pytest.approx(0.2607142857142859, abs=1e-12)
    assert turn_report(cube, "XYZ", fully_connected=True).average_reduction == 0.0


def test_xy_inner_router_on_2d_mesh():
    g = mesh(x=(4,), y=(4,))[2]
    inner = router_at(g, (1, 1, 0))
    assert len(allowed_turns("XY", g, inner)) == 16


def test_missing_port_is_a_routing_error():
    # layers of different size: XYZ from the wide layer's corner has no vertical link
    g = mesh(z=2, x=(3, 1), y=(1, 1))[2]
    top_pe = next(p for p in g.processing_elements if g.nodes[p].position[2] == 1)
    far_pe = next(p for p in g.processing_elements if g.nodes[p].position == (2, 0, 0))
    with pytest.raises(RoutingError):
        trace_path(g, "XYZ", top_pe, far_pe)


def test_explicit_algorithm_overrides_node_routing():
    g = mesh(z=2, x=(2, 2), y=(2, 2), routing="XYZ")[2]
    pes = g.processing_elements
    src = next(p for p in pes if g.nodes[p].position == (0, 0, 0))
    dst = next(p for p in pes if g.nodes[p].position == (1, 0, 1))
    assert trace_path(g, None, src, dst)[0].out is E
    assert trace_path(g, "ZplusXYZminus", src, dst)[0].out is U
