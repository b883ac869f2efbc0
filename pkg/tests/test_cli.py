import csv
import io
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oddgauge import cli
from oddgauge.config import ConfigError, RunConfig, dump, parse
from oddgauge.evolve import DataKind, InitialDataSpec
from oddgauge.grid import GridSpec

SMALL_GRID = GridSpec(-40.0, 150.0, 256)


def small(**kw):
    run = dict(t_final=4.0, energy_stride=5, grid=SMALL_GRID)
    run.update(kw)
    return RunConfig(**run)


def write_cfg(path, cfg):
    path.write_text(dump(cfg), encoding="utf-8")
    return str(path)


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# --- config ---------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(
    st.floats(min_value=0.1, max_value=10.0),
    st.integers(min_value=1, max_value=6),
    st.floats(min_value=0.0, max_value=500.0),
    st.lists(st.floats(min_value=2.5, max_value=100.0), min_size=1, max_size=4),
    st.sampled_from(list(DataKind)),
    st.floats(min_value=0.1, max_value=20.0),
)
def test_config_roundtrip(mass, ell, t_final, probes, kind, width):
    cfg = RunConfig(
        mass=mass,
        ell=ell,
        t_final=t_final,
        probes=tuple(probes),
        initial_data=InitialDataSpec(kind=kind, width=width),
    )
    assert parse(dump(cfg)) == cfg


def test_config_defaults_and_partial_text():
    assert parse("") == RunConfig()
    cfg = parse("[run]\nell = 3\n[grid]\nn_points = 512\n")
    assert cfg.ell == 3 and cfg.grid.n_points == 512 and cfg.grid.rstar_min == -40.0


@pytest.mark.parametrize(
    "text",
    [
        "[run]\nbogus = 1\n",
        "[nowhere]\nx = 1\n",
        "[run]\nell = two\n",
        "[run]\nell = 0\n",
        "[run]\nmass = -1\n",
        "[run]\nsystem = kepler\n",
        "[run]\ndeterministic = false\n",
        "[run]\nmonitor_window = 1.0\n",
        "[run]\nenergies = 3.0\n",
        "[grid]\nn_points = 8\n",
        "[initial_data]\nkind = comet\n",
        "[initial_data]\nwidth = 0\n",
        "no section header\n",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse(text)


def test_dump_is_canonical():
    text = dump(RunConfig())
    assert text.endswith("\n") and "\r" not in text
    assert text.splitlines()[0] == "[run]" and "t_final = 100.0" in text


# --- harmonics-selftest and certify ----------------------------------------------


def test_harmonics_selftest_exit_codes(tmp_path):
    out = tmp_path / "h.csv"
    assert cli.main(["harmonics-selftest", "--ell-max", "2", "--out", str(out)]) == 0
    assert out.read_text().count("\n") >= 2
    assert cli.main(["harmonics-selftest", "--ell-max", "2", "--out", str(out), "--corrupt"]) == 1
    assert cli.main(["harmonics-selftest", "--ell-max", "99", "--out", str(out)]) == 64


def test_certify_outputs(tmp_path):
    out = tmp_path / "cert"
    assert cli.main(["certify", "quintic", "--out", str(out)]) == 0
    rows = read_csv(out / "certificates.csv")
    assert rows[0]["bound"] == "7/32"
    assert (out / "quintic.csv").exists()
    assert cli.main(["certify", "no-such-claim", "--out", str(out)]) == 0


def test_certify_status_codes(tmp_path, monkeypatch):
    from oddgauge import certificates

    def fake(status):
        rep = certificates.CertificateReport("x", status, 0, None, ())
        return lambda pattern, workers=1: [rep]

    monkeypatch.setattr(certificates, "run_claims", fake(certificates.Status.FAILED))
    assert cli.main(["certify", "--out", str(tmp_path)]) == 1
    monkeypatch.setattr(certificates, "run_claims", fake(certificates.Status.INCONCLUSIVE))
    assert cli.main(["certify", "--out", str(tmp_path)]) == 2


def test_workers_env(monkeypatch, tmp_path):
    monkeypatch.setenv(cli.WORKERS_ENV, "2")
    assert cli.workers_from_env() == 2
    monkeypatch.setenv(cli.WORKERS_ENV, "zero")
    assert cli.main(["certify", "quintic", "--out", str(tmp_path)]) == 64
    monkeypatch.setenv(cli.WORKERS_ENV, "0")
    with pytest.raises(ValueError):
        cli.workers_from_env()
    monkeypatch.delenv(cli.WORKERS_ENV)
    assert cli.workers_from_env() == 1


# --- evolve -------------------------------------------------------------------


def test_evolve_zero_amplitude_writes_zeros(tmp_path):
    cfg = small(initial_data=InitialDataSpec(amplitude=0.0), snapshot_stride=10)
    out = tmp_path / "run"
    assert cli.main(["evolve", write_cfg(tmp_path / "c.ini", cfg), "--out", str(out)]) == 0
    probes = read_csv(out / "probes.csv")
    assert probes and all(float(v) == 0.0 for row in probes for k, v in row.items() if k != "time")
    energy = read_csv(out / "energy.csv")
    assert {r["field_id"] for r in energy} == {"H0", "H1H2"}
    assert all(float(r["E_p"]) == 0.0 for r in energy)
    assert float(energy[-1]["time"]) == pytest.approx(4.0)
    snaps = sorted(out.glob("snapshot_*.csv"))
    assert snaps and snaps[0].name == "snapshot_0000000.csv"
    assert parse((out / "config.ini").read_text()) == cfg


def test_evolve_pure_gauge_has_no_invariant_content(tmp_path):
    cfg = small(initial_data=InitialDataSpec(kind=DataKind.PURE_GAUGE, center=20.0, width=4.0))
    out = tmp_path / "pg"
    assert cli.main(["evolve", write_cfg(tmp_path / "c.ini", cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "probes.csv")
    h = max(abs(float(r["h1@r=20"])) for r in rows)
    for col in ("p@r=10", "q@r=20", "p@r=20"):
        assert max(abs(float(r[col])) for r in rows) < 1e-3 * h


def test_evolve_kerr_series_is_constant(tmp_path):
    cfg = small(
        ell=1,
        grid=GridSpec(-40.0, 150.0, 1024),
        initial_data=InitialDataSpec(kind=DataKind.KERR, amplitude=2.0),
        monitor_window=(20.0, 90.0),
    )
    out = tmp_path / "kerr"
    assert cli.main(["evolve", write_cfg(tmp_path / "c.ini", cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "probes.csv")
    p10 = [float(r["p@r=10"]) for r in rows]
    assert max(p10) - min(p10) < 1e-7
    assert p10[0] == pytest.approx(0.6, rel=1e-2)  # nearest node to r = 10
    assert max(float(r["gauge_l2"]) for r in rows) < 1e-8


def test_evolve_is_byte_deterministic(tmp_path):
    cfg = small(snapshot_stride=20)
    path = write_cfg(tmp_path / "c.ini", cfg)
    assert cli.main(["evolve", path, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["evolve", path, "--out", str(tmp_path / "b")]) == 0
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    assert b"\r" not in (tmp_path / "a" / "probes.csv").read_bytes()


def test_evolve_bad_config(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nwat = 1\n")
    assert cli.main(["evolve", str(bad)]) == 64
    assert cli.main(["evolve", str(tmp_path / "missing.ini")]) == 64
    kerr2 = write_cfg(tmp_path / "k.ini", small(initial_data=InitialDataSpec(kind=DataKind.KERR)))
    assert cli.main(["evolve", kerr2, "--out", str(tmp_path / "k")]) == 64


def test_evolve_instability_keeps_partial_output(tmp_path, monkeypatch):
    import oddgauge.evolve as ev

    real = ev.evolve
    monkeypatch.setattr(cli, "evolve", lambda *a, **kw: real(*a, growth_limit=0.5, **kw))
    out = tmp_path / "boom"
    assert cli.main(["evolve", write_cfg(tmp_path / "c.ini", small()), "--out", str(out)]) == 70
    assert len(read_csv(out / "probes.csv")) == 2
    assert read_csv(out / "energy.csv")


# --- report -------------------------------------------------------------------


def synthetic_energy(path, slope=-2.0):
    t = np.linspace(10.0, 200.0, 40)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "field_id", "p", "E_p", "E_p_deg"])
    for ti in t:
        for p in (0.0625, 1.0):
            w.writerow([cli.fmt(ti), "H0", cli.fmt(p), cli.fmt(5 * ti**slope), cli.fmt(5 * ti**slope)])
    path.write_text(buf.getvalue())
    return str(path)


def test_report_recovers_slope(tmp_path, capsys):
    src = synthetic_energy(tmp_path / "e.csv")
    out = tmp_path / "r.csv"
    assert cli.main(["report", src, "20", "180", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 2
    for row in rows:
        assert float(row["slope"]) == pytest.approx(-2.0, abs=1e-9)
        assert float(row["target"]) == pytest.approx(-2.0 + float(row["p"]) + 1 / 16)
        assert row["flag"] == "ok"
    assert "field_id,p,slope" in capsys.readouterr().out


def test_report_flags_slow_decay(tmp_path):
    src = synthetic_energy(tmp_path / "e.csv", slope=-1.5)
    out = tmp_path / "r.csv"
    assert cli.main(["report", src, "20", "180", "--out", str(out)]) == 0
    flags = {float(r["p"]): r["flag"] for r in read_csv(out)}
    assert flags[0.0625] == "above_target" and flags[1.0] == "ok"


def test_report_data_errors(tmp_path):
    src = synthetic_energy(tmp_path / "e.csv")
    assert cli.main(["report", src, "500", "600"]) == 65
    assert cli.main(["report", str(tmp_path / "missing.csv"), "0", "1"]) == 65
    (tmp_path / "cols.csv").write_text("a,b\n1,2\n")
    assert cli.main(["report", str(tmp_path / "cols.csv"), "0", "1"]) == 65
    (tmp_path / "empty.csv").write_text("time,field_id,p,E_p\n")
    assert cli.main(["report", str(tmp_path / "empty.csv"), "0", "1"]) == 65
    (tmp_path / "junk.csv").write_text("time,field_id,p,E_p\nx,H0,1,2\n")
    assert cli.main(["report", str(tmp_path / "junk.csv"), "0", "1"]) == 65


def test_usage_errors():
    with pytest.raises(SystemExit) as info:
        cli.main([])
    assert info.value.code == 64
    with pytest.raises(SystemExit) as info:
        cli.main(["report", "x.csv", "lo", "1"])
    assert info.value.code == 64


def test_fmt_round_trips():
    for v in (0.1, 1 / 3, 2.5e-300, math.pi):
        assert float(cli.fmt(v)) == v
