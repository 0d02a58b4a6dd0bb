import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dgff.cli import main
from dgff.config import parse_config_text
from dgff.experiments import build_cells, run_experiment, serialize_report, verify_report
from dgff.seeding import StreamFactory, StreamId
from dgff.sobolev import SobolevExponentWarning

LATTICE = """
[run]
manifold = torus1
grid = lattice
n_list = 16, 32, 64
seed = 5
draws = 3000

[functions]
cos1 = 2:1.0
zero = 0

[semigroup]
times = 0.5

[sobolev]
s = 1.0
probes_per_cell = 100
draws = 1000
"""

IID = """
[run]
manifold = torus1
grid = iid
n_list = 32, 64
seed = 3
draws = 500

[bandwidth]
policy = schedule
max_j = 4
ladder = 16, 24, 32, 48, 64

[functions]
cos1 = 2:1.0

[sobolev]
probes_per_cell = 50
draws = 200
"""


@pytest.fixture(scope="module")
def lattice_report():
    return run_experiment(parse_config_text(LATTICE), "full")


def rows(report, section, **match):
    return [r for r in report.sections[section].rows if all(r[k] == v for k, v in match.items())]


# -- seeding ----------------------------------------------------------------


def test_streams_independent_of_order():
    a = StreamFactory(42)
    x1 = a.rng("dgff", 64, "samples").random(3)
    a.rng("grid", 0, "points").random(100)
    b = StreamFactory(42)
    b.rng("voronoi", 8, "probes").random(7)
    assert np.array_equal(b.rng("dgff", 64, "samples").random(3), x1)
    assert not np.array_equal(StreamFactory(43).rng("dgff", 64, "samples").random(3), x1)
    assert "dgff/64/samples/0" in a.used()


@given(st.integers(0, 2**64 - 1))
def test_stream_keys_distinct(master):
    f = StreamFactory(master)
    draws = {f.rng(m, n, p).integers(2**63) for m in ("grid", "dgff") for n in (16, 32) for p in ("points", "samples")}
    assert len(draws) == 8
    assert StreamId("dgff", 16, "samples").key == (3, 16, 3, 0)


def test_bad_master_seed():
    with pytest.raises(ValueError):
        StreamFactory(-1)


# -- sections ---------------------------------------------------------------


def test_assumption_examples(lattice_report):
    sec = lattice_report.sections["assumptions"]
    # the infimum sits at N=16: (256 / pi^2) sin^2(pi / 16) = 0.98721...
    assert sec.summary["gap_inf"] == pytest.approx(256 / math.pi**2 * math.sin(math.pi / 16) ** 2, rel=1e-12)
    assert sec.summary["gap_inf"] >= 0.98
    r = rows(lattice_report, "assumptions", N=64, function="cos1")[0]
    assert r["semigroup_gap"] <= 1e-2
    assert r["semigroup_target"] == pytest.approx(math.exp(-0.5))


def test_covariance_examples(lattice_report):
    r = rows(lattice_report, "covariance", N=64, function="cos1")[0]
    assert r["form"] == pytest.approx(1 / (4096 / math.pi**2 * math.sin(math.pi / 64) ** 2), rel=1e-12)
    assert r["target"] == 1.0
    z = rows(lattice_report, "covariance", N=64, function="zero")[0]
    assert z["form"] == 0 and z["target"] == 0
    for r in rows(lattice_report, "covariance", function="cos1"):
        assert abs(r["mc_var"] - r["form"]) < 5 * r["mc_se"]
        assert abs(r["char_mean"] - r["char_target"]) < 5 * r["char_se"]


def test_sobolev_examples(lattice_report):
    for r in rows(lattice_report, "sobolev", function="cos1"):
        assert abs(r["var_diff"]) <= r["envelope"] + 5 * r["var_diff_se"]
        assert abs(r["lift_form"] - r["pair_form"]) <= r["envelope"]
    for r in lattice_report.sections["tightness"].rows:
        assert r["statistic"] <= r["bound_series"]
    assert lattice_report.passed


def test_exponent_boundary_warns_and_runs():
    cfg = parse_config_text(LATTICE.replace("s = 1.0", "s = 0.5").replace("16, 32, 64", "16"))
    with pytest.warns(SobolevExponentWarning):
        report = run_experiment(cfg, "sobolev")
    assert report.sections["tightness"].rows
    assert any("d - 1/2" in n for n in report.notes)


def test_iid_schedule_cells():
    cfg = parse_config_text(IID)
    cells, schedule, notes = build_cells(cfg, StreamFactory(cfg.seed))
    assert schedule is not None
    for n, cell in cells.items():
        assert cell.t >= cell.t_prime
        assert np.array_equal(cell.grid.points, cells[64].grid.points[:n])
    ts = [cells[n].t for n in sorted(cells)]
    assert ts == sorted(ts, reverse=True)


def test_threads_do_not_change_results():
    cfg = parse_config_text(IID)
    a, b = run_experiment(cfg, "full", threads=1), run_experiment(cfg, "full", threads=3)
    for name in a.sections:
        assert a.sections[name].rows == b.sections[name].rows
    assert a.substreams == b.substreams


# -- reports and CLI --------------------------------------------------------


def test_report_contents_and_staleness(lattice_report, tmp_path):
    serialize_report(lattice_report, tmp_path, dump_spectra=True, dump_samples=True)
    meta = json.loads((tmp_path / "report.json").read_text())
    assert meta["seed"] == 5
    assert "dgff/64/samples/0" in meta["substreams"]
    assert (tmp_path / "covariance.csv").read_text().startswith("# dgff-report/1 section=covariance")
    assert (tmp_path / "spectrum_N16.csv").exists()
    samples = np.load(tmp_path / "samples_N16.npy")
    assert samples.shape == (3000, 16)
    assert verify_report(tmp_path) == []
    # a stale target is caught
    path = tmp_path / "covariance.csv"
    path.write_text(path.read_text().replace(",1.0,", ",1.0000001,", 1))
    assert verify_report(tmp_path)


def _cli(tmp_path, text, *extra):
    cfg = tmp_path / "c.ini"
    cfg.write_text(text)
    return main(["full", "--config", str(cfg), *extra])


def test_cli_byte_identical(tmp_path):
    text = LATTICE.replace("16, 32, 64", "16, 32")
    assert _cli(tmp_path, text, "--out", str(tmp_path / "a")) == 0
    assert _cli(tmp_path, text, "--out", str(tmp_path / "b"), "--threads", "2") == 0
    for name in ("report.json", "assumptions.csv", "covariance.csv", "sobolev.csv", "tightness.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_seed_override_changes_mc(tmp_path):
    text = LATTICE.replace("16, 32, 64", "16")
    _cli(tmp_path, text, "--out", str(tmp_path / "a"))
    _cli(tmp_path, text, "--out", str(tmp_path / "b"), "--seed", "6")
    assert (tmp_path / "a" / "covariance.csv").read_bytes() != (tmp_path / "b" / "covariance.csv").read_bytes()
    assert json.loads((tmp_path / "b" / "report.json").read_text())["seed"] == 6


def test_cli_exit_codes(tmp_path, capsys):
    # threshold violation: demand an impossible covariance match
    strict = LATTICE.replace("16, 32, 64", "16") + "\n[thresholds]\ncovariance_rel = 1e-9\n"
    assert _cli(tmp_path, strict, "--out", str(tmp_path / "v")) == 2
    assert "VIOLATION" in capsys.readouterr().out
    # config error
    assert _cli(tmp_path, LATTICE.replace("16, 32, 64", "64, 32"), "--out", str(tmp_path / "e")) == 1
    # missing output directory
    assert _cli(tmp_path, LATTICE) == 1
