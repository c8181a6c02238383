"""Command-line interface tests: config loading, outputs, determinism."""

import json

import pytest

from qsum.cli import load_scenario, main


def test_validate_default_scenario_passes(tmp_path):
    out = tmp_path / "out"
    assert main(["--out", str(out), "validate"]) == 0
    rows = (out / "validation.csv").read_text().strip().splitlines()
    assert rows[0] == "scope,violation"
    assert len(rows) == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "validate"
    assert manifest["results"]["violations"] == []


def test_validate_bad_problem_exits_2_with_named_clause(tmp_path):
    cfg = tmp_path / "bad.json"
    # Delta < d in the first lower-level term violates admissibility
    cfg.write_text(json.dumps({
        "problem": {"levels": [
            {"delta": 1, "terms": [{"d": 2, "Delta": 1}]},
            {"delta": 2, "terms": [{"d": 2, "Delta": 3,
                                    "R": [1.0, 1.0],
                                    "C": {"amp": 0.05,
                                          "eps_linear": -0.25}}]},
        ]}}))
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "--out", str(out), "validate"]) == 2
    err = json.loads((out / "error.json").read_text())
    assert err["error"]["kind"] == "validation"
    assert "Delta >= d" in err["error"]["clause"]


def test_broken_config_exits_2(tmp_path):
    cfg = tmp_path / "broken.json"
    cfg.write_text("{not json")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o"),
                 "validate"]) == 2
    err = json.loads((tmp_path / "o" / "error.json").read_text())
    assert err["error"]["kind"] == "config"


def test_unsupported_schema_version_rejected(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"schema_version": 99}))
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o"),
                 "validate"]) == 2


def test_config_overrides_problem_and_grids(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "problem": {"q": 3.0, "n_points": 201},
        "grids": {"t_count": 4, "alpha": 7.0},
        "fixedpoint": {"tol": 1e-9},
    }))
    sc = load_scenario(str(cfg))
    assert sc.spec.q == 3.0
    assert sc.spec.n_points == 201
    assert sc.t_count == 4
    assert sc.alpha == 7.0
    assert sc.fp.tol == 1e-9


def test_formal_output_is_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["--out", str(out), "--seed", "0", "formal",
                     "--N", "6"]) == 0
        outs.append((out / "formal_coefficients.csv").read_bytes())
    assert outs[0] == outs[1]
    header = outs[0].decode().splitlines()[0]
    assert header.startswith("n,sup_abs_U_n")


def test_requires_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["--out", "x"])
    assert exc.value.code == 2
