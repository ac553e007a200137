import subprocess
import sys
from pathlib import Path

import pytest

from hetnoc import cli, report
from hetnoc.errors import SimulationError
from hetnoc.power import ColorActivity, EnergyCoefficients, default_table, save_coefficients

from helpers import config_text


def write_config(tmp_path, **kw):
    kw.setdefault("sim_ns", 1200)
    kw.setdefault("warmup_ns", 200)
    path = tmp_path / "config.ini"
    path.write_text(config_text(**kw))
    return path


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_validate(tmp_path, capsys):
    cfg = write_config(tmp_path, z=2, x=(2, 2), y=(2, 2), rate=0.01, rate_max=0.03)
    assert cli.main(["validate", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "benchmark: synthetic" in out and "rates: 0.01, 0.02, 0.03" in out and out.endswith("ok\n")


def test_unknown_key_is_a_warning_not_an_error(tmp_path, capsys):
    cfg = write_config(tmp_path, extra="\n[Extra]\nfoo = 1\n")
    assert cli.main(["validate", "--config", str(cfg)]) == 0
    assert "warning:" in capsys.readouterr().err


def test_bad_routing_exits_with_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, routing="ZigZag")
    assert cli.main(["validate", "--config", str(cfg)]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "routing" in err and "config.ini" in err


def test_missing_config_exits_with_io_error(tmp_path):
    assert cli.main(["validate", "--config", str(tmp_path / "nope.ini")]) in (cli.EXIT_CONFIG, cli.EXIT_IO)


def test_run_writes_bundle(tmp_path, capsys):
    cfg = write_config(tmp_path, rate=0.1)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == 0
    for f in (report.REPORT_FILE, report.LINKS_FILE, report.POWER_FILE, report.SUMMARY_FILE):
        assert (out / f).is_file()
    assert "rate: 0.1" in (out / report.REPORT_FILE).read_text()
    assert "flit latency mean" in capsys.readouterr().out


def test_run_default_output_next_to_config(tmp_path):
    cfg = write_config(tmp_path)
    assert cli.main(["run", "--config", str(cfg)]) == 0
    assert (tmp_path / "sim" / "run" / report.LINKS_FILE).is_file()


def test_run_into_unwritable_location_is_io_error(tmp_path):
    cfg = write_config(tmp_path)
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert cli.main(["run", "--config", str(cfg), "--out", str(blocker / "x")]) == cli.EXIT_IO


def test_plan_jobs_grid():
    jobs = cli.plan_jobs([round(0.01 * k, 2) for k in range(1, 9)], 10, 0, Path("o"))
    assert len(jobs) == 80
    assert len({j.seed for j in jobs}) == 80
    assert jobs[0].out_dir.endswith("rate_0.0100/run_0")
    assert cli.job_seed(0, 1, 2) == cli.job_seed(0, 1, 2) != cli.job_seed(1, 1, 2)


def test_sweep_writes_one_bundle_per_job(tmp_path, capsys):
    cfg = write_config(tmp_path, rate=0.02, rate_max=0.04, step=0.02, restarts=2)
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    runs = sorted(p.parent.relative_to(tmp_path / "s").as_posix() for p in (tmp_path / "s").rglob(report.SUMMARY_FILE))
    assert runs == ["rate_0.0200/run_0", "rate_0.0200/run_1", "rate_0.0400/run_0", "rate_0.0400/run_1"]
    rows = report.load_sweep_csv(tmp_path / "s" / report.SWEEP_FILE)
    assert [(r.rate, r.runs) for r in rows] == [(0.02, 2), (0.04, 2)]
    assert "4 jobs" in capsys.readouterr().out


def test_sweep_is_deterministic_across_worker_counts(tmp_path):
    cfg = write_config(tmp_path, rate=0.02, rate_max=0.04, step=0.02, restarts=2)
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "11"]) == 0
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "11", "--jobs", "2"]) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "c"), "--seed", "12"]) == 0
    assert tree_bytes(tmp_path / "a") != tree_bytes(tmp_path / "c")


def test_rerunning_one_job_reproduces_it(tmp_path):
    cfg = write_config(tmp_path, rate=0.02, rate_max=0.04, step=0.02, restarts=1)
    out = tmp_path / "s"
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    before = tree_bytes(out / "rate_0.0400")
    job = cli.plan_jobs([0.02, 0.04], 1, 0, out)[1]
    for p in sorted((out / "rate_0.0400").rglob("*"), reverse=True):
        p.unlink() if p.is_file() else p.rmdir()
    cli.run_job(str(cfg), job)
    assert tree_bytes(out / "rate_0.0400") == before


def test_failing_job_is_identified(tmp_path, capsys, monkeypatch):
    cfg = write_config(tmp_path, rate=0.02, rate_max=0.04, step=0.02)
    real = cli.run_job

    def flaky(path, job):
        if job.rate_index == 1:
            raise SimulationError("credit counter exceeds depth")
        return real(path, job)

    monkeypatch.setattr(cli, "run_job", flaky)
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == cli.EXIT_RUNTIME
    err = capsys.readouterr().err
    assert "job rate=0.04 restart=0" in err and "credit counter" in err
    assert not (tmp_path / "s" / report.SWEEP_FILE).exists()


def test_sweep_requires_synthetic_benchmark(tmp_path):
    path = write_config(tmp_path)
    path.write_text(path.read_text().replace("benchmark = synthetic", "benchmark = task"))
    assert cli.main(["sweep", "--config", str(path)]) == cli.EXIT_CONFIG


def test_turns_csv(tmp_path, capsys):
    cfg = write_config(tmp_path, z=2, x=(2, 2), y=(2, 2))
    out = tmp_path / "turns.csv"
    assert cli.main(["turns", "--config", str(cfg), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert text == out.read_text()
    lines = text.splitlines()
    assert lines[0] == "router,ports,allowed,candidates,reduction,turns"
    assert len(lines) == 2 + 8 and lines[-1].startswith("average,")
    assert float(lines[-1].split(",")[4]) > 0


def test_turns_fully_connected_has_zero_reduction(tmp_path, capsys):
    cfg = write_config(tmp_path, z=2, x=(2, 2), y=(2, 2))
    assert cli.main(["turns", "--config", str(cfg), "--fully-connected"]) == 0
    rows = [l.split(",") for l in capsys.readouterr().out.splitlines()[1:]]
    assert all(float(r[4]) == 0.0 for r in rows)


def test_turns_unknown_algorithm(tmp_path):
    cfg = write_config(tmp_path)
    assert cli.main(["turns", "--config", str(cfg), "--algorithm", "spiral"]) == cli.EXIT_CONFIG


def test_energy_two_tables_leave_matrices_untouched(tmp_path, capsys):
    cfg = write_config(tmp_path, rate=0.2)
    run = tmp_path / "run"
    assert cli.main(["run", "--config", str(cfg), "--out", str(run)]) == 0
    before = tree_bytes(run)
    save_coefficients(EnergyCoefficients(1), tmp_path / "a.csv")
    save_coefficients(default_table([ColorActivity(0.9, 1.0)], 32), tmp_path / "b.csv")
    assert cli.main(["energy", "--run-dir", str(run), "--coeffs", str(tmp_path / "a.csv"), "--out", str(tmp_path / "ea.csv")]) == 0
    assert cli.main(["energy", "--run-dir", str(run), "--coeffs", str(tmp_path / "b.csv"), "--out", str(tmp_path / "eb.csv")]) == 0
    assert tree_bytes(run) == before
    assert (tmp_path / "ea.csv").read_text() != (tmp_path / "eb.csv").read_text()


def test_energy_on_missing_run_dir(tmp_path):
    save_coefficients(EnergyCoefficients(1), tmp_path / "a.csv")
    assert cli.main(["energy", "--run-dir", str(tmp_path / "none"), "--coeffs", str(tmp_path / "a.csv")]) == cli.EXIT_IO


def test_idle_run_with_zero_idle_table_costs_nothing(tmp_path, capsys):
    cfg = write_config(tmp_path, rate=0.0)
    run = tmp_path / "run"
    assert cli.main(["run", "--config", str(cfg), "--out", str(run)]) == 0
    save_coefficients(default_table([ColorActivity(0.5)], 32), tmp_path / "c.csv")
    assert cli.main(["energy", "--run-dir", str(run), "--coeffs", str(tmp_path / "c.csv")]) == 0
    assert capsys.readouterr().out.splitlines()[-1].startswith("total 0 pJ")


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path)
    proc = subprocess.run([sys.executable, "-m", "hetnoc", "validate", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.endswith("ok\n")
