import csv
import io
import json
import subprocess
import sys
from dataclasses import replace

import pytest

from treegibbs.catalog import boundary_family
from treegibbs.cli import (ConfigError, main, parse_config, run_classify, run_solve, run_sweep,
                           run_verify, sweep_csv)

ONES = {"kernel": {"degenerate": {"psi1": "1", "psi2": "1", "phi1": "1", "phi2": "1"}}}
AFFINE = {"kernel": {"degenerate": {"psi1": "1", "psi2": "t", "phi1": "1", "phi2": "v"}}}
FLAT = {"kernel": {"general": {"J": 0, "J1": 0, "J3": 0, "alpha": 0, "beta": 1,
                               "xi1": "t*u*v", "xi2": "u*v", "xi3": "t*u"}},
        "numerics": {"n_starts": 4}}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


class TestConfig:
    def test_defaults_materialized(self):
        cfg = parse_config(AFFINE)
        assert cfg.resolved()["numerics"] == {"quad_order": 64, "tol": 1e-10, "max_iter": 10000,
                                              "n_starts": 16, "seed": 0, "cluster_eps": 1e-4,
                                              "damping": 1.0}

    @pytest.mark.parametrize("doc, path", [
        ([], "config"),
        ({}, "kernel"),
        ({"kernel": {}}, "kernel"),
        ({"kernel": {"general": {}, "degenerate": {}}}, "kernel"),
        ({"kernel": {"degenerate": {"psi1": "1"}}}, "kernel.degenerate.psi2"),
        ({"kernel": {"degenerate": {**AFFINE["kernel"]["degenerate"], "psi1": "1 + + 2"}}},
         "kernel.degenerate.psi1"),
        ({"kernel": {"degenerate": {**AFFINE["kernel"]["degenerate"], "phi1": "t"}}},
         "kernel.degenerate.phi1"),
        ({"kernel": {"degenerate": {**AFFINE["kernel"]["degenerate"], "psi1": 3}}},
         "kernel.degenerate.psi1"),
        ({"kernel": {"general": {"beta": 0}}}, "kernel.general.beta"),
        ({"kernel": {"general": {"J": "x"}}}, "kernel.general.J"),
        ({"kernel": {"general": {"xi2": "t"}}}, "kernel.general.xi2"),
        ({"kernel": {"general": {"K": 1}}}, "kernel.general.K"),
        ({**AFFINE, "numerics": {"quad_order": 0}}, "numerics.quad_order"),
        ({**AFFINE, "numerics": {"quad_order": 513}}, "numerics.quad_order"),
        ({**AFFINE, "numerics": {"tol": 0}}, "numerics.tol"),
        ({**AFFINE, "numerics": {"tol": True}}, "numerics.tol"),
        ({**AFFINE, "numerics": {"damping": 2}}, "numerics.damping"),
        ({**AFFINE, "numerics": {"n_starts": 1.5}}, "numerics.n_starts"),
        ({**AFFINE, "numerics": {"bogus": 1}}, "numerics.bogus"),
        ({**AFFINE, "sweep": {"parameter": "$theta", "from": 0, "to": 1, "steps": 1}},
         "sweep.steps"),
        ({**AFFINE, "sweep": {"parameter": "J3", "from": 0, "to": 1, "steps": 3}},
         "sweep.parameter"),
        ({**AFFINE, "sweep": {"parameter": "$theta", "from": 0, "to": 1, "steps": 3}},
         "sweep.parameter"),
        ({**FLAT, "sweep": {"parameter": "gamma", "from": 0, "to": 1, "steps": 3}},
         "sweep.parameter"),
        ({**FLAT, "sweep": {"parameter": "beta", "from": 0, "to": 1, "steps": 3}}, "sweep.from"),
        ({**FLAT, "sweep": {"parameter": "beta", "from": 1, "to": 2}}, "sweep.steps"),
        ({"kernel": {"degenerate": {**AFFINE["kernel"]["degenerate"], "psi1": "$theta"}}},
         "kernel.degenerate.psi1"),
    ])
    def test_errors_name_the_field(self, doc, path):
        with pytest.raises(ConfigError) as info:
            parse_config(doc)
        assert info.value.path == path

    def test_sweep_paths(self):
        for name in ("J3", "kernel.general.J3"):
            cfg = parse_config({**FLAT, "sweep": {"parameter": name, "from": 0, "to": 1,
                                                  "steps": 2}})
            assert cfg.sweep.parameter == name

    def test_bad_json_exit_code(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{nope")
        assert main(["classify", "--config", str(p)]) == 2
        assert "invalid JSON" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["classify", "--config", str(tmp_path / "none.json")]) == 2

    def test_flag_overrides(self, tmp_path, capsys):
        p = write(tmp_path, {**AFFINE, "numerics": {"quad_order": 8, "seed": 1}})
        assert main(["classify", "--config", p, "--quad-order", "32", "--seed", "9",
                     "--tol", "1e-11"]) == 0
        num = json.loads(capsys.readouterr().out)["config"]["numerics"]
        assert (num["quad_order"], num["seed"], num["tol"]) == (32, 9, 1e-11)

    def test_bad_override(self, tmp_path):
        assert main(["classify", "--config", write(tmp_path, AFFINE), "--quad-order", "0"]) == 2


class TestClassify:
    def test_ones(self):
        out = run_classify(parse_config(ONES))
        assert out["classification"]["matched_case"] == "T41-iii"
        assert out["classification"]["predicted_count"] == 1
        assert out["coefficients"]["A12"] == 2.0

    def test_affine(self):
        out = run_classify(parse_config(AFFINE))
        assert out["classification"]["predicted_count"] == 1
        assert 1.8 < out["roots"][0]["value"] < 1.9

    def test_general_rejected(self, tmp_path, capsys):
        assert main(["classify", "--config", write(tmp_path, FLAT)]) == 2
        assert "classify requires a degenerate kernel" in capsys.readouterr().err

    def test_csv_not_available(self, tmp_path):
        assert main(["classify", "--config", write(tmp_path, ONES), "--format", "csv"]) == 2

    def test_numeric_failure(self, tmp_path, capsys):
        cfg = {"kernel": {"general": {"J3": 800.0, "xi1": "t*u*v"}}}
        assert main(["solve", "--config", write(tmp_path, cfg)]) == 3
        assert "numeric failure" in capsys.readouterr().err


class TestSolve:
    def test_ones(self):
        out = run_solve(parse_config(ONES))
        assert out["agreement"] is True
        (sol,) = out["oracle"]["solutions"]
        assert max(abs(x - 1.0) for x in sol["values"]) < 1e-12

    def test_flat_general(self):
        out = run_solve(parse_config(FLAT))
        assert out["analytic"] is None and out["agreement"] is None
        (sol,) = out["oracle"]["solutions"]
        assert max(abs(x - 1.0) for x in sol["values"]) < 1e-12

    def test_boundary_kernel(self):
        kernel, theta = boundary_family()
        deg = {k: v.replace("$theta", repr(theta)) for k, v in kernel["degenerate"].items()}
        out = run_solve(parse_config({"kernel": {"degenerate": deg},
                                      "numerics": {"n_starts": 4, "max_iter": 2000}}))
        assert out["classification"]["matched_case"] == "T42-ii"
        assert len(out["analytic"]) == 2 and out["agreement"] is True


class TestSweep:
    def test_constant_count(self):
        cfg = parse_config({"kernel": {"degenerate": {"psi1": "1", "psi2": "1",
                                                      "phi1": "$theta", "phi2": "1"}},
                            "numerics": {"n_starts": 3, "quad_order": 16},
                            "sweep": {"parameter": "$theta", "from": 0.5, "to": 2.0,
                                      "steps": 4}})
        rows = run_sweep(cfg)
        assert [r.parameter for r in rows] == [0.5, 1.0, 1.5, 2.0]
        assert all(r.predicted_count == 1 and r.agreement for r in rows)
        assert not any(r.transition for r in rows)

    def test_general_coupling(self, tmp_path, capsys):
        cfg = {**FLAT, "numerics": {"n_starts": 2, "quad_order": 12},
               "sweep": {"parameter": "J3", "from": 0.0, "to": 1.0, "steps": 3}}
        assert main(["sweep", "--config", write(tmp_path, cfg)]) == 0
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert [r["oracle_count"] for r in rows] == ["1", "1", "1"]
        assert rows[0]["case"] == "" and rows[0]["agreement"] == ""

    def test_boundary_transition(self):
        kernel, theta = boundary_family()
        cfg = parse_config({"kernel": kernel, "numerics": {"n_starts": 4, "max_iter": 2000},
                            "sweep": {"parameter": "$theta", "from": 0.9 * theta,
                                      "to": 1.1 * theta, "steps": 3}})
        rows = run_sweep(cfg)
        assert [r.predicted_count for r in rows] == [3, 2, 1]
        assert [r.oracle_count for r in rows] == [3, 2, 1]
        assert [r.transition for r in rows] == [False, True, True]
        text = sweep_csv(rows)
        assert text.splitlines()[0] == ("parameter,case,predicted_count,oracle_count,"
                                        "root1,root2,root3,agreement,transition")
        assert text.endswith("\n") and "\r" not in text

    def test_json_format(self, tmp_path):
        kernel, theta = boundary_family()
        cfg = {"kernel": kernel, "numerics": {"n_starts": 2, "max_iter": 500},
               "sweep": {"parameter": "$theta", "from": 1.2 * theta, "to": 1.3 * theta,
                         "steps": 2}}
        out = tmp_path / "o.json"
        assert main(["sweep", "--config", write(tmp_path, cfg), "--format", "json",
                     "--output", str(out)]) == 0
        rows = json.loads(out.read_text())
        assert [r["predicted_count"] for r in rows] == [1, 1]
        assert [r["transition"] for r in rows] == [False, False]


class TestVerify:
    @pytest.mark.parametrize("doc", [ONES, AFFINE])
    def test_passes(self, doc):
        checks = run_verify(parse_config(doc))
        assert [c.name for c in checks] == ["coefficient positivity", "case/count consistency",
                                            "reconstruction defects", "oracle agreement",
                                            "eigen defects"]
        assert all(c.passed for c in checks)

    def test_fault_injection(self):
        checks = run_verify(parse_config(AFFINE),
                            coefficient_hook=lambda qs: replace(qs, A11=qs.A11 * 1.01))
        bad = [c.name for c in checks if not c.passed]
        assert bad == ["reconstruction defects"]

    def test_exit_codes(self, tmp_path, capsys, monkeypatch):
        p = write(tmp_path, AFFINE)
        assert main(["verify", "--config", p]) == 0
        assert capsys.readouterr().out.count("PASS") == 5
        import treegibbs.cli as cli

        original = cli.run_verify
        monkeypatch.setattr(cli, "run_verify", lambda cfg: original(
            cfg, coefficient_hook=lambda qs: replace(qs, B22=qs.B22 + 0.1)))
        assert main(["verify", "--config", p]) == 4
        assert "FAIL reconstruction defects" in capsys.readouterr().out

    def test_general_rejected(self, tmp_path):
        assert main(["verify", "--config", write(tmp_path, FLAT)]) == 2


def test_output_is_byte_identical(tmp_path):
    p = write(tmp_path, AFFINE)
    outs = []
    for i in range(2):
        o = tmp_path / f"out{i}.json"
        assert main(["solve", "--config", p, "--output", str(o)]) == 0
        outs.append(o.read_bytes())
    assert outs[0] == outs[1]


def test_module_entry_point(tmp_path):
    p = write(tmp_path, ONES)
    proc = subprocess.run([sys.executable, "-m", "treegibbs", "classify", "--config", p],
                          capture_output=True, check=True)
    assert json.loads(proc.stdout)["classification"]["matched_case"] == "T41-iii"
