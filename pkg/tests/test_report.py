import filecmp

import numpy as np
import pytest

from hetnoc import report
from hetnoc.config import build_network, parse_config
from hetnoc.monitor import normalize
from hetnoc.power import EnergyCoefficients, evaluate
from hetnoc.sim import Simulation, run_synthetic

from helpers import config_text, mesh

NS = 1000


@pytest.fixture(scope="module")
def small_run():
    cfg, _, g = mesh(x=(2,), y=(2,), vcs=2, sim_ns=1500)
    res = run_synthetic(g, cfg, 0.2, seed=3)
    res.extra["rate"] = 0.2
    return res


def tree(path):
    return sorted(p.relative_to(path) for p in path.rglob("*") if p.is_file())


def test_fmt():
    assert report.fmt(3) == "3"
    assert report.fmt(np.int64(7)) == "7"
    assert report.fmt(0.0) == "0"
    assert report.fmt(float("nan")) == "nan"
    assert report.fmt(1 / 3) == "0.333333"
    assert report.fmt(123456789.0) == "1.23457e+08"


def test_bundle_layout(small_run, tmp_path):
    written = report.write_bundle(small_run, tmp_path, header={"benchmark": "synthetic"})
    names = {str(p.relative_to(tmp_path)) for p in written}
    for f in (report.REPORT_FILE, report.LINKS_FILE, report.POWER_FILE, report.SUMMARY_FILE):
        assert f in names
    routers = small_run.graph.routers
    for r in routers:
        assert f"{report.VC_DIR}/{r}.csv" in names
    assert f"{report.VC_DIR}/layer_0.csv" in names
    assert f"{report.BUFF_DIR}/layer_0_local.csv" in names
    text = (tmp_path / report.REPORT_FILE).read_text()
    assert "benchmark: synthetic" in text and "normalized data-flow matrices" in text


def test_links_csv_round_trip(small_run, tmp_path):
    report.write_bundle(small_run, tmp_path)
    table = report.load_links_csv(tmp_path / report.LINKS_FILE)
    assert set(table.matrices) == set(small_run.matrices)
    for lid, m in small_run.matrices.items():
        assert np.array_equal(table.matrices[lid].counts, m.counts)
        assert abs(normalize(table.matrices[lid]).sum() - 1.0) <= 1e-9


def test_power_csv_round_trip(small_run, tmp_path):
    report.write_bundle(small_run, tmp_path, coeffs=EnergyCoefficients(1))
    rows = report.load_power_csv(tmp_path / report.POWER_FILE)
    assert set(rows) == set(small_run.graph.routers)
    for r, row in rows.items():
        assert row.events == small_run.events[r]
        assert row.cycles == small_run.node_cycles[r]
        assert row.energy_pj == pytest.approx(sum(row.events.as_tuple()), rel=1e-6)


def test_usage_csv_round_trip(small_run, tmp_path):
    report.write_bundle(small_run, tmp_path)
    r = small_run.graph.routers[0]
    labels, data = report.load_usage_csv(tmp_path / report.VC_DIR / f"{r}.csv")
    ports = small_run.usage.routers[r]
    assert len(labels) == len(ports)
    for row, pu in zip(data, ports):
        assert row.tolist() == pu.vc_usage.tolist()
        assert row.sum() == small_run.usage.cycles[r]


def test_summary_round_trip(small_run):
    s = report.summarize(small_run, 0.2, 1)
    back = report.summary_from_csv(report.summary_to_csv(s))
    assert back.restart == 1 and back.flits_injected == small_run.injected_flits
    assert back.flit_mean == pytest.approx(s.flit_mean, rel=1e-5)


def test_bundle_is_byte_stable(small_run, tmp_path):
    report.write_bundle(small_run, tmp_path / "a")
    report.write_bundle(small_run, tmp_path / "b")
    assert tree(tmp_path / "a") == tree(tmp_path / "b")
    for rel in tree(tmp_path / "a"):
        assert filecmp.cmp(tmp_path / "a" / rel, tmp_path / "b" / rel, shallow=False), rel


def test_idle_router_vcusage_mass_in_column_zero(tmp_path):
    g = build_network(parse_config(config_text(x=(1,), y=(1,), sim_ns=100))[1])
    sim = Simulation(g, 4)
    sim.run(100 * NS)
    report.write_bundle(sim.result(), tmp_path)
    r = g.routers[0]
    labels, data = report.load_usage_csv(tmp_path / report.VC_DIR / f"{r}.csv")
    assert labels == ["local"]
    assert data[0, 0] == 101 and data[0, 1:].sum() == 0


def test_report_routers_subset(small_run, tmp_path):
    r = small_run.graph.routers[1]
    report.write_bundle(small_run, tmp_path, report_routers=[r, r, 999])
    files = sorted(p.name for p in (tmp_path / report.VC_DIR).iterdir())
    assert files == [f"{r}.csv", "layer_0.csv"]


def summary(rate, restart, mean):
    return report.RunSummary(rate, restart, 0, mean, mean, mean + 1, mean + 1, mean, mean, 10, 10)


def test_sweep_aggregation_and_round_trip(tmp_path):
    rows = report.aggregate_sweep([summary(0.02, 0, 10.0), summary(0.01, 0, 5.0), summary(0.02, 1, 14.0)])
    assert [r.rate for r in rows] == [0.01, 0.02]
    assert rows[1].runs == 2 and rows[1].flit_mean == 12.0 and rows[1].flit_std == 2.0
    assert rows[1].packet_mean == 13.0
    path = tmp_path / report.SWEEP_FILE
    path.write_text(report.sweep_csv(rows))
    back = report.load_sweep_csv(path)
    assert back == rows


def test_single_restart_has_zero_std():
    (row,) = report.aggregate_sweep([summary(0.05, 0, 8.0)])
    assert row.runs == 1 and row.flit_std == 0.0 and row.flit_median == 8.0


def test_mixed_configurations_cannot_be_aggregated():
    with pytest.raises(ValueError, match="different configurations"):
        report.aggregate_sweep([summary(0.01, 0, 1.0)], ["a", "b"])
    with pytest.raises(ValueError):
        report.aggregate_sweep([])


def test_energy_from_run_matches_direct_evaluation(small_run, tmp_path):
    report.write_bundle(small_run, tmp_path)
    coeffs = report.default_coefficients(1, small_run.graph.flit_size)
    energy, power = report.energy_from_run(tmp_path, coeffs)
    direct = evaluate(small_run.events, small_run.matrices, coeffs, small_run.duration_ns)
    assert energy.total == direct.total
    assert energy.flits == direct.flits
    text = report.energy_csv(energy, power)
    assert text.splitlines()[0] == "kind,id,energy_pj,power_mw"


def test_energy_from_run_errors(small_run, tmp_path):
    with pytest.raises(FileNotFoundError):
        report.energy_from_run(tmp_path, EnergyCoefficients(1))
    report.write_bundle(small_run, tmp_path)
    with pytest.raises(ValueError, match="state mismatch"):
        report.energy_from_run(tmp_path, EnergyCoefficients(2))


def test_unwritable_output_is_an_os_error(small_run, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        report.write_bundle(small_run, blocker / "sub")
