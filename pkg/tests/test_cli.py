import json
import subprocess
import sys

import pytest

from bsderep.cli import EXIT_NONCONVERGED, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, main
from bsderep.config import DEFAULTS, build_config, load_schema
from bsderep.errors import ConfigError

QUAD = {"schema_version": 1, "generator": {"family": "pure-quadratic", "params": {"gamma": 0.5}},
        "target": {"y": 1.0, "z": [2.0]}}
FAST_LADDER = {"epsilons": [0.125, 0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625],
               "n_paths": 3000}
FAST_ORACLES = {"mesh_size": 400, "replicates": 6, "solver_paths": 4000}


def _write(tmp_path, tree, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(tree))
    return str(path)


def _with(**parts):
    tree = json.loads(json.dumps(QUAD))
    tree.update(parts)
    return tree


class TestConfig:
    def test_schema_loads(self):
        schema = load_schema()
        assert schema["required"] == ["generator", "target"]

    def test_defaults_filled(self):
        cfg = build_config(QUAD, environ={})
        assert cfg.tree["ladder"]["n_paths"] == DEFAULTS["ladder"]["n_paths"]
        assert cfg.seed == 0 and cfg.d == 1

    def test_seed_precedence(self):
        assert build_config(QUAD, environ={"BSDE_REP_SEED": "9"}).seed == 9
        assert build_config(QUAD, seed=4, environ={"BSDE_REP_SEED": "9"}).seed == 4
        with pytest.raises(ConfigError):
            build_config(QUAD, environ={"BSDE_REP_SEED": "x"})

    @pytest.mark.parametrize("tree", [
        {"target": {"y": 1, "z": 1}},
        {"generator": {"family": "pure-quadratic"}, "target": {"y": 1}},
        {"generator": {"family": "nope"}, "target": {"y": 1, "z": 1}},
        dict(QUAD, schema_version=2),
        dict(QUAD, extra=1),
        dict(QUAD, mode="sup"),
    ])
    def test_schema_errors(self, tree):
        with pytest.raises(ConfigError) as info:
            build_config(tree, environ={})
        assert info.value.diagnostics

    def test_bad_family_params(self):
        tree = _with(generator={"family": "pure-quadratic", "params": {"amp": 1.0}})
        with pytest.raises(ConfigError, match="parameters"):
            build_config(tree, environ={})


class TestExitCodes:
    def test_verify_pass(self, tmp_path):
        code = main(["verify-assumptions", "--config", _write(tmp_path, QUAD), "--out",
                     str(tmp_path)])
        assert code == EXIT_OK
        body = json.loads((tmp_path / "compliance.json").read_text())
        assert [r["assumption"] for r in body["reports"]] == ["H1", "H2", "H3"]

    def test_verify_negative_control(self, tmp_path):
        tree = _with(generator={"family": "y-squared"})
        assert main(["verify-assumptions", "--config", _write(tmp_path, tree), "--out",
                     str(tmp_path)]) == EXIT_VIOLATION
        assert (tmp_path / "compliance.json").exists()

    def test_missing_generator(self, tmp_path):
        path = _write(tmp_path, {"target": {"y": 1, "z": 1}})
        assert main(["verify-assumptions", "--config", path]) == EXIT_USAGE

    def test_malformed_json_and_missing_file(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert main(["run-oracles", "--config", str(bad)]) == EXIT_USAGE
        assert main(["run-oracles", "--config", str(tmp_path / "none.json")]) == EXIT_USAGE
        assert main(["run-oracles"]) == EXIT_USAGE
        assert main(["no-such-command"]) == EXIT_USAGE

    def test_bad_jobs(self, tmp_path):
        assert main(["verify-assumptions", "--config", _write(tmp_path, QUAD), "--jobs",
                     "0"]) == EXIT_USAGE

    def test_epsilon_out_of_range(self, tmp_path):
        tree = _with(ladder={"epsilons": [2.0]})
        assert main(["run-representation", "--config", _write(tmp_path, tree), "--out",
                     str(tmp_path)]) == EXIT_USAGE

    def test_refusal_and_force(self, tmp_path):
        tree = _with(generator={"family": "y-squared"},
                     ladder={"epsilons": [0.125, 0.0625], "n_paths": 500}, target={"y": 0.5,
                                                                                   "z": 0.5})
        path = _write(tmp_path, tree)
        assert main(["run-representation", "--config", path, "--out", str(tmp_path)]) == 2
        code = main(["run-representation", "--config", path, "--out", str(tmp_path), "--force"])
        assert code in (EXIT_OK, EXIT_VIOLATION)
        assert (tmp_path / "representation.json").exists()

    def test_quadratic_representation(self, tmp_path):
        path = _write(tmp_path, _with(ladder=FAST_LADDER))
        assert main(["run-representation", "--config", path, "--out", str(tmp_path)]) == 0
        assert main(["report", str(tmp_path / "representation.json")]) == EXIT_OK
        assert main(["report", "--config", path, "--out", str(tmp_path)]) == EXIT_OK

    def test_nonconvergence(self, tmp_path):
        tree = _with(generator={"family": "cubic-damped", "params": {"horizon": 0.125}},
                     target={"y": 0.1, "z": 0.2},
                     ladder={"epsilons": [0.125, 0.0625], "n_paths": 500},
                     solver={"picard_iters": 1, "tolerance": 1e-300})
        code = main(["run-representation", "--config", _write(tmp_path, tree), "--out",
                     str(tmp_path)])
        assert code == EXIT_NONCONVERGED
        body = json.loads((tmp_path / "representation.json").read_text())
        assert body["verdict"] == "non-converged"
        assert main(["report", str(tmp_path / "representation.json")]) == EXIT_NONCONVERGED

    def test_report_rejects_garbage(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text("[]")
        assert main(["report", str(path)]) == EXIT_USAGE

    def test_oracles_default_and_tight(self, tmp_path):
        ok = main(["run-oracles", "--config", _write(tmp_path, _with(oracles=FAST_ORACLES)),
                   "--out", str(tmp_path / "a")])
        assert ok == EXIT_OK
        header = (tmp_path / "a" / "oracles.csv").read_text().splitlines()[0]
        assert "delta_nested" in header and "nested_se" in header
        tight = dict(FAST_ORACLES, tolerance=1e-9)
        assert main(["run-oracles", "--config", _write(tmp_path, _with(oracles=tight)),
                     "--out", str(tmp_path / "b")]) == EXIT_VIOLATION

    def test_oracle_seed_changes_errors_not_verdicts(self, tmp_path):
        path = _write(tmp_path, _with(oracles=FAST_ORACLES))
        assert main(["run-oracles", "--config", path, "--out", str(tmp_path / "s1"),
                     "--seed", "1"]) == EXIT_OK
        assert main(["run-oracles", "--config", path, "--out", str(tmp_path / "s2"),
                     "--seed", "2"]) == EXIT_OK
        a = (tmp_path / "s1" / "oracles.csv").read_text()
        b = (tmp_path / "s2" / "oracles.csv").read_text()
        assert a != b


def test_byte_identical_reports(tmp_path, monkeypatch):
    tree = _with(ladder={"epsilons": [0.125, 0.0625], "n_paths": 2000})
    path = _write(tmp_path, tree)
    monkeypatch.setenv("BSDE_REP_SEED", "11")
    main(["run-representation", "--config", path, "--out", str(tmp_path / "r1")])
    main(["run-representation", "--config", path, "--out", str(tmp_path / "r2"), "--jobs", "2"])
    for name in ("representation.csv", "representation.json"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    assert json.loads((tmp_path / "r1" / "representation.json").read_text())[
        "problem"]["seed"] == 11


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "bsderep", "verify-assumptions", "--config",
                          _write(tmp_path, QUAD), "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "H1: pass-at-sampled-points" in out.stdout
