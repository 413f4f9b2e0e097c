"""End-to-end command line behaviour: artifacts, diagnostics, exit codes."""
import dataclasses
import json
import os

import pytest

from gridswing import cli, netmodel

HEADER = ("t_s,f_coi_hz,f_gen1_hz,f_gen2_hz,f_gen3_hz,"
          "p_attack_pu,p_reserve_up_pu,p_reserve_down_pu")


def write_scenario(tmp_path, name="case.scn", system=None, attack=None,
                   output=None, raw=None):
    doc = raw if raw is not None else {
        "system": {"duration_s": 5.0, **(system or {})},
        "attack": {"family": "static", "type": "DI",
                   "magnitude_percent": 8.0, **(attack or {})},
        **({"output": output} if output is not None else {}),
    }
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return str(path)


def test_simulate_writes_both_artifacts(tmp_path, capsys):
    scn = write_scenario(tmp_path)
    rc = cli.main(["simulate", scn, "--out-dir", str(tmp_path)])
    assert rc == 0
    trace = tmp_path / "case_trace.csv"
    report = tmp_path / "case_report.json"
    assert trace.exists() and report.exists()
    lines = trace.read_text().splitlines()
    assert lines[0] == HEADER
    assert len(lines) == 1 + 501  # 5 s at 10 ms plus the t = 0 sample
    for cell in lines[250].split(","):
        assert len(cell.split(".")[1]) == 6  # fixed 6-decimal cells

    doc = json.loads(report.read_text())
    assert doc["samples"] == 501
    assert doc["config"]["attack"]["family"] == "static"
    # nadir in the report is exactly the smallest f_coi cell in the CSV
    coi_cells = [ln.split(",")[1] for ln in lines[1:]]
    assert min(coi_cells) == f"{doc['metrics']['nadir_hz']:.6f}"
    out = capsys.readouterr().out
    assert "nadir" in out


def test_simulate_reruns_byte_identical(tmp_path):
    scn = write_scenario(tmp_path)
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert cli.main(["simulate", scn, "--out-dir", str(a)]) == 0
    assert cli.main(["simulate", scn, "--out-dir", str(b)]) == 0
    assert (a / "case_trace.csv").read_bytes() == (b / "case_trace.csv").read_bytes()
    ra = json.loads((a / "case_report.json").read_text())
    rb = json.loads((b / "case_report.json").read_text())
    # reports embed their own artifact paths; everything else must agree
    ra["config"].pop("output")
    rb["config"].pop("output")
    assert ra == rb


def test_simulate_equilibrium_trace(tmp_path):
    scn = write_scenario(tmp_path, system={"duration_s": 0.03, "dt_s": 0.01},
                         attack={"t_start": 10.0})  # never fires
    assert cli.main(["simulate", scn, "--out-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "case_trace.csv").read_text().splitlines()
    assert len(lines) == 5  # header + samples at 0.00 .. 0.03
    for ln in lines[1:]:
        cells = ln.split(",")
        assert cells[1] == "50.000000"
        assert cells[5] == "0.000000"


def test_missing_family_is_config_error(tmp_path, capsys):
    scn = write_scenario(tmp_path, raw={"attack": {"type": "DI",
                                                   "magnitude_percent": 8.0}})
    assert cli.main(["simulate", scn]) == 2
    assert "family" in capsys.readouterr().err


def test_bad_interval_names_key_and_line(tmp_path, capsys):
    scn = write_scenario(tmp_path, attack={"family": "periodic",
                                           "interval": -4.0, "count": 3})
    assert cli.main(["simulate", scn]) == 2
    err = capsys.readouterr().err
    assert "interval" in err
    with open(scn) as fh:
        line_no = next(i for i, ln in enumerate(fh, start=1)
                       if '"interval"' in ln)
    assert f":{line_no}" in err


def test_unknown_key_rejected(tmp_path, capsys):
    scn = write_scenario(tmp_path, attack={"colour": "red"})
    assert cli.main(["simulate", scn]) == 2
    assert "colour" in capsys.readouterr().err


def test_unknown_section_rejected(tmp_path, capsys):
    scn = write_scenario(tmp_path, raw={"attack": {"family": "static",
                                                   "type": "DI",
                                                   "magnitude_percent": 8.0},
                                        "plotting": {}})
    assert cli.main(["simulate", scn]) == 2
    assert "plotting" in capsys.readouterr().err


def test_invalid_json_reports_line(tmp_path, capsys):
    path = tmp_path / "broken.scn"
    path.write_text('{"attack": {,}}')
    assert cli.main(["simulate", str(path)]) == 2
    assert "JSON" in capsys.readouterr().err


def test_unknown_reserve_preset(tmp_path, capsys):
    scn = write_scenario(tmp_path, system={"reserves": "lots"})
    assert cli.main(["simulate", scn]) == 2
    assert "reserves" in capsys.readouterr().err


def test_instability_exit_code_and_no_partial_artifacts(tmp_path, capsys):
    scn = write_scenario(tmp_path,
                         attack={"type": "DR", "magnitude_percent": 200.0},
                         system={"duration_s": 20.0})
    out = tmp_path / "out"
    rc = cli.main(["simulate", scn, "--out-dir", str(out)])
    assert rc == 4
    leftovers = list(out.iterdir()) if out.exists() else []
    assert leftovers == []  # nothing half-written, no temp files


def test_powerflow_subcommand(capsys):
    assert cli.main(["powerflow"]) == 0
    out = capsys.readouterr().out
    assert "converged" in out
    assert out.count("\n") >= 10  # one row per bus plus headers


def test_powerflow_divergence_exit_code(tmp_path, capsys):
    m = netmodel.builtin_wscc9()
    heavy = dataclasses.replace(
        m,
        generators=tuple(
            dataclasses.replace(
                g, p_set=g.p_set * 10,
                governor=dataclasses.replace(g.governor, p_max=g.p_set * 12))
            for g in m.generators),
        loads=tuple(dataclasses.replace(ld, p=ld.p * 10, q=ld.q * 10)
                    for ld in m.loads))
    case = tmp_path / "heavy.json"
    netmodel.to_file(heavy, str(case))
    assert cli.main(["powerflow", str(case)]) == 3
    assert "error" in capsys.readouterr().err


def test_target_bus_override(tmp_path):
    scn = write_scenario(tmp_path)
    assert cli.main(["simulate", scn, "--out-dir", str(tmp_path),
                     "--target-bus", "largest"]) == 0
    doc = json.loads((tmp_path / "case_report.json").read_text())
    assert doc["config"]["attack"]["target_bus"] == 5


def test_sweep_magnitudes(tmp_path, capsys):
    scn = write_scenario(tmp_path, system={"duration_s": 20.0})
    rc = cli.main(["sweep", scn, "--magnitudes", "4,8",
                   "--out-dir", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "case_sweep.json").read_text())
    assert doc["sweep"] == "magnitude"
    assert doc["fit"]["slope_hz_per_percent"] < 0
    assert len(doc["points"]) == 2
    assert "slope" in capsys.readouterr().out


def test_sweep_timings(tmp_path, capsys):
    scn = write_scenario(tmp_path, system={"duration_s": 15.0})
    rc = cli.main(["sweep", scn, "--timings", "3,5",
                   "--out-dir", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "case_sweep.json").read_text())
    assert doc["sweep"] == "timing"
    assert doc["optimal_t1_s"] in (3.0, 5.0)
    assert "optimal" in capsys.readouterr().out


def test_sweep_requires_exactly_one_mode(tmp_path):
    scn = write_scenario(tmp_path)
    assert cli.main(["sweep", scn]) == 2
    assert cli.main(["sweep", scn, "--magnitudes", "4", "--timings", "3"]) == 2


def test_calibrate_with_anchor_file(tmp_path, capsys):
    anchors = tmp_path / "anchors.json"
    anchors.write_text(json.dumps([{"percent": 12.0, "settled_hz": 49.8}]))
    rc = cli.main(["calibrate", "--anchors", str(anchors),
                   "--out-dir", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "calibrated_params.json").read_text())
    assert doc["quality_warning"] is False
    assert 0.02 <= doc["params"]["r_droop"] <= 0.08
    assert capsys.readouterr().err == ""  # no warning on a clean fit


def test_calibrate_rejects_bad_anchor_file(tmp_path):
    anchors = tmp_path / "anchors.json"
    anchors.write_text("[]")
    assert cli.main(["calibrate", "--anchors", str(anchors)]) == 2


def test_feasibility_emits_json(capsys):
    assert cli.main(["feasibility", "1400", "2025"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["feasible"] is True
    assert doc["margin_mw"] == pytest.approx(347.0)


def test_feasibility_unknown_year(capsys):
    assert cli.main(["feasibility", "1400", "2040"]) == 2
    assert "no forecast" in capsys.readouterr().err


def test_seedless_flag_accepted_bare(capsys):
    assert cli.main(["--seedless", "powerflow"]) == 0


def test_seedless_flag_rejects_value(capsys):
    assert cli.main(["--seedless=yes", "powerflow"]) == 2


def test_missing_scenario_file(tmp_path, capsys):
    assert cli.main(["simulate", str(tmp_path / "nope.scn")]) == 2


def test_shipped_scenarios_parse():
    import glob
    here = os.path.dirname(os.path.abspath(__file__))
    shipped = sorted(glob.glob(os.path.join(here, "..", "scenarios", "*.scn")))
    assert len(shipped) >= 6
    for path in shipped:
        model, scenario, cfg = cli.parse_scenario(path)
        assert scenario.family in ("static", "switching", "periodic",
                                   "combination")
        assert cfg.duration_s > 0


def test_shipped_switching_scenario_runs(tmp_path):
    here = os.path.dirname(os.path.abspath(__file__))
    scn = os.path.join(here, "..", "scenarios", "switching_di_8.scn")
    assert cli.main(["simulate", scn, "--out-dir", str(tmp_path),
                     "--duration", "20"]) == 0
    assert (tmp_path / "switching_di_8_trace.csv").exists()
