import csv
import json

import numpy as np
import pytest

from ghisd.cli import bundled_configs, main

from oracles import TABLE1, discrete_ac_index


def write_config(path, doc):
    path.write_text(json.dumps(doc, indent=1))
    return str(path)


def phase_field_config(tmp_path, plan, kappa=0.03, N=16):
    return write_config(tmp_path / "pf.json", {
        "system": {"kind": "allen-cahn", "kappa": kappa, "N": N},
        "seeds": {"phi0": {"constant": 0.0}},
        "plan": plan,
    })


# run

def test_bundled_configs_are_listed():
    names = bundled_configs()
    assert {"quartic2d.json", "toy3d.json", "allen-cahn-k0.03.json"} <= set(names)


def test_run_quartic(tmp_path, capsys):
    assert main(["run", "--config", "quartic2d", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "landscape.json").read_text())
    assert len(doc["nodes"]) == 9 and len(doc["edges"]) == 12
    assert sorted(n["index"] for n in doc["nodes"]) == [0, 0, 0, 0, 1, 1, 1, 1, 2]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["nodes"] == 9 and manifest["exit_code"] == 0
    assert (tmp_path / "landscape.dot").read_text().startswith("digraph")
    assert "9 nodes" in capsys.readouterr().out


def test_run_writes_field_dumps_for_grids(tmp_path):
    cfg = phase_field_config(tmp_path, [{"op": "downward", "from": "phi0"}])
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "landscape.json").read_text())
    assert len(doc["nodes"]) == 3
    assert list((tmp_path / "o" / "fields").glob("*.pgm"))


def test_seed_label_replaces_the_plan(tmp_path):
    cfg = phase_field_config(tmp_path, [])
    main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
    assert json.loads((tmp_path / "a" / "landscape.json").read_text())["nodes"] == []
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed-label", "phi0"])
    assert len(json.loads((tmp_path / "b" / "landscape.json").read_text())["nodes"]) == 3


def test_nonpositive_kappa_is_rejected(tmp_path, capsys):
    cfg = phase_field_config(tmp_path, [], kappa=-0.01)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "system.kappa" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_malformed_json_reports_the_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n "system": {"kind": "toy3d"},\n "plan": [\n}\n')
    assert main(["run", "--config", str(bad)]) == 2
    assert f"{bad}:4:" in capsys.readouterr().err


def test_missing_config_is_invalid(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    assert "no such config" in capsys.readouterr().err


def test_bad_thread_count():
    assert main(["run", "--config", "quartic2d", "--threads", "0"]) == 2


# sweep

def test_sweep_without_values_is_invalid(tmp_path):
    cfg = phase_field_config(tmp_path, [{"op": "seed", "seed": "phi0"}])
    assert main(["sweep", "--config", cfg, "--param", "kappa", "--values", "--out", str(tmp_path)]) == 2


def test_sweep_rejects_nonpositive_kappa(tmp_path, capsys):
    cfg = phase_field_config(tmp_path, [{"op": "seed", "seed": "phi0"}])
    code = main(["sweep", "--config", cfg, "--param", "kappa", "--values", "0.02", "0",
                 "--out", str(tmp_path / "s")])
    assert code == 2 and "kappa must be > 0" in capsys.readouterr().err


def test_kappa_sweep_tracks_the_homogeneous_index(tmp_path):
    cfg = phase_field_config(tmp_path, [{"op": "seed", "seed": "phi0"}])
    out = tmp_path / "s"
    assert main(["sweep", "--config", cfg, "--param", "kappa", "--values", "0.03", "0.02",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "summary.csv").open()))
    assert [r["parameter_value"] for r in rows] == ["0.03", "0.02"]
    assert [int(r["root_index"]) for r in rows] == [discrete_ac_index(0.03, 16), discrete_ac_index(0.02, 16)]
    assert [int(r["root_index"]) for r in rows] == [1, 5]
    assert (out / "kappa=0.03" / "landscape.json").exists()
    assert (out / "kappa=0.02" / "manifest.json").exists()


# inspect

def test_inspect_quartic_maximum(tmp_path, capsys):
    state = tmp_path / "zero.json"
    state.write_text("[0.0, 0.0]")
    assert main(["inspect", str(state), "--system", '{"kind": "quartic2d"}']) == 0
    assert capsys.readouterr().out.startswith("index 2, residual 0, zero-count 0")


def test_inspect_toy3d_source(tmp_path, capsys):
    state = tmp_path / "a1.txt"
    state.write_text(" ".join(map(str, TABLE1["a1"])))
    assert main(["inspect", str(state), "--config", "toy3d", "--K", "3"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("index 3,")
    assert "not stationary" in out  # the tabulated point is a 4-decimal rounding


def test_inspect_phi0_dump(tmp_path, capsys):
    state = tmp_path / "phi0.bin"
    np.zeros(64 * 64).astype("<f8").tofile(state)
    spec = '{"kind": "allen-cahn", "kappa": 0.006, "N": 64}'
    assert main(["inspect", str(state), "--system", spec, "--K", "8"]) == 0
    out = capsys.readouterr().out
    assert out.startswith(f"index {discrete_ac_index(0.006, 64)},")
    assert out.startswith("index 13,")


def test_inspect_rejects_wrong_length(tmp_path, capsys):
    state = tmp_path / "x.json"
    state.write_text("[1.0, 2.0]")
    assert main(["inspect", str(state), "--system", '{"kind": "toy3d"}']) == 2


def test_inspect_needs_a_system(tmp_path):
    state = tmp_path / "x.json"
    state.write_text("[1.0, 2.0]")
    assert main(["inspect", str(state)]) == 2


# export

def test_export_round_trip(tmp_path, capsys):
    main(["run", "--config", "quartic2d", "--out", str(tmp_path)])
    capsys.readouterr()
    src = tmp_path / "landscape.json"
    assert main(["export", str(src), "--format", "json", "--out", str(tmp_path / "again.json")]) == 0
    assert (tmp_path / "again.json").read_bytes() == src.read_bytes()
    assert main(["export", str(src), "--format", "dot"]) == 0
    assert capsys.readouterr().out == (tmp_path / "landscape.dot").read_text()


def test_export_grid_landscape_round_trip(tmp_path):
    cfg = phase_field_config(tmp_path, [{"op": "downward", "from": "phi0"}])
    out = tmp_path / "o"
    main(["run", "--config", cfg, "--out", str(out)])
    src = out / "landscape.json"
    assert main(["export", str(src), "--format", "json", "--out", str(out / "again.json")]) == 0
    assert (out / "again.json").read_bytes() == src.read_bytes()


def test_export_malformed_landscape(tmp_path):
    bad = tmp_path / "l.json"
    bad.write_text("{}")
    assert main(["export", str(bad)]) == 2


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
