import copy
import hashlib
import json

import pytest

from bgqt.cli import (EXIT_CHECKS_FAILED, EXIT_CONFIG, EXIT_OK, EXIT_SIMULATION, build_parser,
                      main)
from bgqt.config import build_experiment, load_config, shipped_configs
from bgqt.errors import ConfigError

GRW_SINGLE = {
    "model": "grw",
    "grid": {"dims": 1, "points_per_dim": 128, "box_length": 40.0, "dt": 0.01},
    "potential": {"kind": "free"},
    "initial_state": {"type": "gaussian_packet", "center": 0.0, "width": 1.0},
    "collapse": {"lambda": 0.0, "sigma": 1.0},
    "horizon": 1.0,
    "observables": [{"name": "n", "extractor": "flash_count"}],
    "ensemble_size": 1,
    "master_seed": 7,
}

BOHM_PAIR = {
    "model": "bohm",
    "grid": {"dims": 2, "points_per_dim": 64, "box_length": 20.0, "dt": 0.01, "masses": [1.0, 1.0]},
    "potential": {"kind": "free"},
    "initial_state": {"type": "gaussian_packet", "center": [-1.5, 1.5], "width": 1.0},
    "horizon": 0.5,
    "record_stride": 10,
    "weight": {"source": "exp(-supt(sep2(1,2))/(a*a))", "bindings": {"a": 3.0}},
    "observables": [{"name": "sep", "extractor": "sep_at", "t": 0.5}],
    "ensemble_size": 20,
    "master_seed": 1,
}

COSMO = {
    "model": "cosmo",
    "chain": {"levels": 4, "transition": {"type": "lazy_walk", "stay": 0.5}},
    "sequence_length": 3,
    "constraint": {"type": "hard", "intervals": [None, [1e-5, 5e-4], None]},
    "observables": [{"name": "d3", "extractor": "delta_at", "step": 3}],
    "ensemble_size": 500,
    "master_seed": 3,
}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def run(tmp_path, cfg, *extra):
    out = tmp_path / "out"
    return main(["run", str(write(tmp_path, cfg)), "--out", str(out), *extra]), out


# -- run --------------------------------------------------------------------------------

def test_single_member_unitary_grw(tmp_path):
    code, out = run(tmp_path, GRW_SINGLE)
    assert code == EXIT_OK
    est = json.loads((out / "estimates.json").read_text())
    assert est["records"][0]["estimate"] == 0.0
    assert (out / "flashes.csv").read_text().strip() == "run_id,t,particle,x"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"] == GRW_SINGLE
    assert manifest["weight_source_text"] == "1"
    assert set(manifest["outputs"]) == {"estimates.json", "flashes.csv"}


def test_manifest_hashes_match_files(tmp_path):
    code, out = run(tmp_path, BOHM_PAIR)
    assert code == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    for name, digest in manifest["outputs"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert manifest["config_sha256"] == hashlib.sha256((tmp_path / "cfg.json").read_bytes()).hexdigest()
    assert manifest["parameter_bindings"] == {"a": 3.0}
    est = json.loads((out / "estimates.json").read_text())
    assert est["diagnostics"]["record_stride"] == 10
    assert est["comparison"][0]["observable"] == "sep"


def test_cosmo_run_writes_marginals(tmp_path):
    code, out = run(tmp_path, COSMO)
    assert code == EXIT_OK
    for name in ("sequences.csv", "marginals.csv", "exact_marginals.csv", "estimates.json"):
        assert (out / name).is_file()
    est = json.loads((out / "estimates.json").read_text())
    names = [r["observable"] for r in est["records"]]
    assert "p[2,0]" in names and names[-1] == "d3"


def test_rerun_is_byte_identical(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    path = write(tmp_path, BOHM_PAIR)
    assert main(["run", str(path), "--out", str(a)]) == EXIT_OK
    assert main(["run", str(path), "--out", str(b)]) == EXIT_OK
    for name in ("manifest.json", "estimates.json", "trajectories.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_override_changes_results(tmp_path):
    path = write(tmp_path, BOHM_PAIR)
    main(["run", str(path), "--out", str(tmp_path / "a")])
    main(["run", str(path), "--out", str(tmp_path / "b"), "--seed", "99"])
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert mb["master_seed"] == 99 and ma["content_hash"] != mb["content_hash"]


def test_worker_count_does_not_change_output(tmp_path, monkeypatch):
    cfg = dict(GRW_SINGLE, collapse={"lambda": 2.0, "sigma": 1.0}, ensemble_size=300)
    path = write(tmp_path, cfg)
    main(["run", str(path), "--out", str(tmp_path / "one")])
    monkeypatch.setenv("BGQT_WORKERS", "4")
    main(["run", str(path), "--out", str(tmp_path / "four")])
    assert ((tmp_path / "one" / "manifest.json").read_bytes()
            == (tmp_path / "four" / "manifest.json").read_bytes())


def test_unbound_parameter_exits_2_naming_it(tmp_path, capsys):
    cfg = copy.deepcopy(BOHM_PAIR)
    cfg["weight"]["bindings"] = {}
    code, out = run(tmp_path, cfg)
    assert code == EXIT_CONFIG
    assert "'a'" in capsys.readouterr().err
    assert not out.exists()


@pytest.mark.parametrize("mutate,needle", [
    (lambda c: c.pop("master_seed"), "master_seed"),
    (lambda c: c.update(ensemble_size=0), "ensemble_size"),
    (lambda c: c.update(model="pilot"), "model"),
    (lambda c: c.update(colour="blue"), "colour"),
    (lambda c: c.pop("horizon"), "horizon"),
    (lambda c: c["weight"].update(source="exp("), "weight"),
    (lambda c: c["weight"].update(source="supt(sep2(1,2))", bindings={}) or c.update(model="grw"), ""),
    (lambda c: c.update(weight={"builtin": "grw_pairmin", "bindings": {"T": 1, "X": 1}}), "grw"),
    (lambda c: c.update(weight={"builtin": "nope"}), "nope"),
    (lambda c: c["observables"].append({"name": "sep", "extractor": "sep_at", "t": 1.0}), "unique"),
    (lambda c: c["grid"].update(points_per_dim=3), ""),
])
def test_config_errors_exit_2(tmp_path, capsys, mutate, needle):
    cfg = copy.deepcopy(BOHM_PAIR)
    mutate(cfg)
    code, _ = run(tmp_path, cfg)
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "config error" in err and needle in err


def test_unreadable_and_invalid_json(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == EXIT_CONFIG
    assert "not valid JSON" in capsys.readouterr().err


def test_degenerate_measure_exits_3(tmp_path, capsys):
    cfg = copy.deepcopy(COSMO)
    cfg["constraint"]["intervals"][1] = [0.5, 0.9]  # above every level
    code, _ = run(tmp_path, cfg)
    assert code == EXIT_SIMULATION
    assert "DegenerateMeasureError" in capsys.readouterr().err


def test_negative_weight_exits_3(tmp_path, capsys):
    cfg = copy.deepcopy(BOHM_PAIR)
    cfg["weight"] = {"source": "supt(sep2(1,2)) - b", "bindings": {"b": 1000.0}}
    code, _ = run(tmp_path, cfg)
    assert code == EXIT_SIMULATION
    err = capsys.readouterr().err
    assert "NonNegativityError" in err and "(supt(sep2(1, 2)) - b)" in err


def test_cosmo_rejects_weight_and_mismatched_constraint():
    cfg = dict(COSMO, weight={"source": "1"})
    with pytest.raises(ConfigError):
        build_experiment(cfg)
    with pytest.raises(ConfigError, match="steps"):
        build_experiment(dict(COSMO, sequence_length=4))


def test_grw_rejects_record_stride():
    with pytest.raises(ConfigError, match="record_stride"):
        build_experiment(dict(GRW_SINGLE, record_stride=2))


@pytest.mark.parametrize("name,text", sorted(shipped_configs().items()))
def test_shipped_configs_validate(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    exp, data = load_config(path)
    assert data == text.encode()
    assert exp.ensemble_size >= 1


# -- other subcommands --------------------------------------------------------------------

def test_parse_weight_prints_tree(tmp_path, capsys):
    path = tmp_path / "w.txt"
    path.write_text("exp(-supt(sep2(1,2))/(a*a))\n")
    assert main(["parse-weight", str(path), "--kind", "bohm"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "exp(((-supt(sep2(1, 2))) / (a * a)))"
    assert out[1].startswith("Call exp/1 : Scalar")
    assert any("Call sep2/2 : Series" in line for line in out)


def test_parse_weight_reports_position(tmp_path, capsys, monkeypatch):
    import io
    monkeypatch.setattr("sys.stdin", io.StringIO("exp("))
    assert main(["parse-weight", "-"]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "WeightSyntaxError" in err and "offset 4" in err
    assert err.rstrip().endswith("    ^")


def test_parse_weight_kind_mismatch(tmp_path, capsys):
    path = tmp_path / "w.txt"
    path.write_text("supt(sep2(1,2))")
    assert main(["parse-weight", str(path), "--kind", "grw"]) == EXIT_CONFIG
    assert "KindMismatchError" in capsys.readouterr().err


def test_list_builtins(capsys):
    assert main(["list-builtins"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("bohm_limsup", "bohm_timeavg", "bohm_baroque", "grw_pairmin"):
        assert name in out


def test_validate_filter(capsys):
    assert main(["validate", "--filter", "forward"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("PASS  forward_backward") and "1/1 checks passed" in out
    assert main(["validate", "--filter", "nothing-matches"]) == EXIT_CONFIG


def test_validate_reports_failures(monkeypatch, capsys):
    import bgqt.validate as v
    monkeypatch.setattr(v, "CHECKS", {"always_fails": lambda: (1.0, 0.5, "dummy")})
    assert main(["validate"]) == EXIT_CHECKS_FAILED
    assert capsys.readouterr().out.startswith("FAIL  always_fails")


def test_help_documents_defaults(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run", "--help"])
    out = capsys.readouterr().out
    assert "--seed" in out and "--out" in out and "bgqt_output" in out
