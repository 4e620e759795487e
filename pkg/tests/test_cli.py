import csv
import json

import pytest
from click.testing import CliRunner

from qnsub.cli import main

SQUARE = {"lo": [-1, -1], "hi": [1, 1], "h": 0.0625}
UNIT = {"lo": [0, 0], "hi": [1, 1], "h": 0.03125}
SUBGRID = {"kind": "subgrid", "r_max": 0.5, "n_radii": 2, "stride": 4}
PAIR = {"phi": {"kind": "power", "params": [2]}, "p": 1.0, "K": 1.0, "n": 2}


def run(tmp_path, args, cfg=None, name="cfg.json"):
    cmd = list(args)
    if cfg is not None:
        path = tmp_path / name
        path.write_text(json.dumps(cfg))
        cmd += ["--config", str(path)]
    out = tmp_path / "out"
    cmd += ["--out", str(out)]
    return CliRunner().invoke(main, cmd), out


def test_catalog_lists_and_filters():
    res = CliRunner().invoke(main, ["catalog"])
    assert res.exit_code == 0 and "log-norm" in res.output
    res = CliRunner().invoke(main, ["catalog", "harmonic"])
    assert res.exit_code == 0 and "log-spike" not in res.output
    res = CliRunner().invoke(main, ["catalog", "zzz-nothing"])
    assert res.exit_code == 0 and res.output == ""


def test_check_pass_writes_outputs(tmp_path):
    cfg = {"domain": SQUARE, "function": {"kind": "norm-power", "params": [2]}, "samples": SUBGRID}
    res, out = run(tmp_path, ["check"], cfg)
    assert res.exit_code == 0, res.output
    summary = json.loads((out / "check_summary.json").read_text())
    assert summary["n_failures"] == 0 and summary["estimated_min_K"] <= 1.01
    rows = list(csv.reader((out / "check.csv").open()))
    assert len(rows) == summary["n_samples"] + 1
    assert len(list(csv.reader((out / "violations.csv").open()))) == 1
    assert len((out / "check.jsonl").read_text().splitlines()) == summary["n_samples"]


def test_check_violation_exits_one(tmp_path):
    cfg = {"domain": SQUARE, "samples": SUBGRID,
           # max(2 - |x|, 0): superharmonic spike at the origin
           "function": {"kind": "positive-part", "args": [
               {"kind": "scale", "params": [-1, 2], "args": [{"kind": "norm-power", "params": [1]}]}]}}
    res, out = run(tmp_path, ["check"], cfg)
    assert res.exit_code == 1
    assert len(list(csv.reader((out / "violations.csv").open()))) > 1


def test_check_truncations(tmp_path):
    cfg = {"domain": SQUARE, "function": {"kind": "log-norm"}, "check": {"M": [0, 1, 10]},
           "samples": {**SUBGRID, "exclude": [[0, 0]]}}
    res, _ = run(tmp_path, ["check"], cfg)
    assert res.exit_code == 0, res.output


@pytest.mark.parametrize("cfg", [
    {"domain": SQUARE, "function": {"kind": "norm-power"}, "samples": SUBGRID, "colour": 1},
    {"domain": SQUARE, "function": {"kind": "no-such-kind"}, "samples": SUBGRID},
    {"domain": SQUARE, "samples": SUBGRID},
    {"domain": SQUARE, "function": {"kind": "norm-power"}, "samples": {"kind": "random", "r_max": 0.5}},
    {"domain": {"lo": [0, 0], "hi": [1, 1], "h": 0.3}, "function": {"kind": "norm-power"}, "samples": SUBGRID},
], ids=["unknown-key", "unknown-kind", "missing-function", "incomplete-samples", "bad-spacing"])
def test_configuration_errors_exit_two(tmp_path, cfg):
    res, _ = run(tmp_path, ["check"], cfg)
    assert res.exit_code == 2, res.output


def test_missing_and_malformed_config_exit_two(tmp_path):
    res, _ = run(tmp_path, ["check"])
    assert res.exit_code == 2
    res = CliRunner().invoke(main, ["check", "--config", str(tmp_path / "absent.json")])
    assert res.exit_code == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    res = CliRunner().invoke(main, ["check", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert res.exit_code == 2


def test_validate_pair(tmp_path):
    res, out = run(tmp_path, ["validate-pair"], {"pair": PAIR})
    assert res.exit_code == 0, res.output
    assert json.loads((out / "pair_report.json").read_text())["passed"] is True
    failing = {"pair": {"phi": {"kind": "power", "params": [2]}, "K": 10.0, "n": 2, "s0": 1, "s1": 2,
                        "psi": {"kind": "log-plus-power", "params": [2]}}}
    res, _ = run(tmp_path, ["validate-pair"], failing)
    assert res.exit_code == 1 and "condition (ii): FAIL" in res.output
    divergent = {"pair": {"phi": {"kind": "power", "params": [1]}, "K": 1.0, "n": 2, "s0": 1, "s1": 2,
                          "psi": {"kind": "log-plus-power", "params": [1]}}}
    res, out = run(tmp_path, ["validate-pair"], divergent)
    assert res.exit_code == 1 and "condition (iv): FAIL" in res.output
    assert json.loads((out / "pair_report.json").read_text())["failed"] == ["iv"]


def test_pair_with_equal_indices_is_a_config_error(tmp_path):
    cfg = {"pair": {"phi": {"kind": "power", "params": [2]}, "K": 1.0, "n": 2, "s0": 2, "s1": 2,
                    "psi": {"kind": "log-plus-power", "params": [2]}}}
    res, _ = run(tmp_path, ["validate-pair"], cfg)
    assert res.exit_code == 2


def test_build_pair(tmp_path):
    res, out = run(tmp_path, ["build-pair"], {"pair": {**PAIR, "K": 4.0}})
    assert res.exit_code == 0 and "s0=3 s1=4" in res.output
    assert json.loads((out / "pair.json").read_text())["pair"]["s0"] == 3
    res, _ = run(tmp_path, ["build-pair"], {"pair": {**PAIR, "phi": {"kind": "power", "params": [1]}}})
    assert res.exit_code == 1


def test_phi_table(tmp_path):
    res, out = run(tmp_path, ["phi"], {"pair": PAIR, "phi": {"t": [0, 10, 100, 1000]}})
    assert res.exit_code == 0, res.output
    rows = list(csv.DictReader((out / "phi.csv").open()))
    assert [float(r["t"]) for r in rows] == [0, 10, 100, 1000]
    assert float(rows[0]["Phi"]) == 0.0
    vals = [float(r["Phi"]) for r in rows]
    assert vals == sorted(vals)


def test_bound_on_a_small_family(tmp_path):
    cfg = {"domain": UNIT, "family_generator": {"count": 6, "seed": 1, "avoid_h": 1 / 64},
           "samples": {"kind": "subgrid", "r_max": 0.2, "n_radii": 2, "stride": 4},
           "pair": {"phi": {"kind": "power", "params": [4]}, "p": 16.0, "K": 3.4, "n": 2},
           "bound": {"E_lo": [0.375, 0.375], "E_hi": [0.625, 0.625]}}
    res, out = run(tmp_path, ["bound"], cfg)
    assert res.exit_code == 0, res.output
    data = json.loads((out / "bound.json").read_text())
    assert data["passed"] and data["report"]["empirical_sup"] <= data["bound"]


def test_bound_with_a_non_dominating_function_fails(tmp_path):
    cfg = {"domain": UNIT, "family": [{"kind": "constant", "params": [2.0]}],
           "pair": {"phi": {"kind": "power", "params": [2]}, "p": 1.0, "K": 1.0, "n": 2},
           "bound": {"E_lo": [0.375, 0.375], "E_hi": [0.625, 0.625], "C": 1.0,
                     "dominant": {"kind": "constant", "params": [1.0]}}}
    res, out = run(tmp_path, ["bound"], cfg)
    assert res.exit_code == 1
    assert json.loads((out / "bound.json").read_text())["report"]["dominant_dominates_family"] is False


def test_envelope(tmp_path):
    cfg = {"domain": UNIT, "family": [{"kind": "norm-power", "params": [2, 0.5, 0.5]},
                                       {"kind": "norm-power", "params": [2, 0.3, 0.6]}],
           "samples": {"kind": "subgrid", "r_max": 0.2, "n_radii": 2, "stride": 4}}
    res, out = run(tmp_path, ["envelope"], cfg)
    assert res.exit_code == 0, res.output
    for name in ("w.csv", "w_star.csv", "envelope_check.csv", "envelope_summary.json"):
        assert (out / name).exists()
    assert json.loads((out / "envelope_summary.json").read_text())["envelope"]["raised_nodes"] == 0


def test_regularize(tmp_path):
    cfg = {"domain": UNIT, "function": {"kind": "norm-power", "params": [2, 0.5, 0.5]},
           "samples": {"kind": "subgrid", "r_max": 0.2, "n_radii": 2, "stride": 4},
           "regularize": {"lower_nodes": [[0.25, 0.25], [0.75, 0.5]], "delta": 0.1}}
    res, out = run(tmp_path, ["regularize"], cfg)
    assert res.exit_code == 0, res.output
    assert json.loads((out / "regularize_summary.json").read_text())["nodes_changed"] == 2
    cfg["regularize"]["lower_nodes"] = [[0.26, 0.25]]
    res, _ = run(tmp_path, ["regularize"], cfg)
    assert res.exit_code == 2


def test_overrides_and_determinism(tmp_path):
    cfg = {"domain": SQUARE, "function": {"kind": "norm-power", "params": [2]},
           "samples": {"kind": "random", "count": 20, "r_min": 0.1, "r_max": 0.5}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        res = CliRunner().invoke(main, ["check", "--config", str(path), "--out", str(out), "--seed", "3",
                                        "--resolution", "0.03125", "--tol", "0.001"])
        assert res.exit_code == 0, res.output
        outs.append(out)
    for name in ("check.csv", "check.jsonl", "check_summary.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    summary = json.loads((outs[0] / "check_summary.json").read_text())
    assert summary["tol"] == 0.001
