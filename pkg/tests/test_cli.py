import json
import logging

import pytest

from xvabsde.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from xvabsde.config import PRESETS, config_from_dict, dump_config, load_preset, parse_config
from xvabsde.errors import ConfigError


def test_presets_parse():
    d = load_preset("forward_discva")
    env, assets, pf, cand, solver = d.build()
    assert env.r(0.5) == 0.01 and env.rfl(0.5) == 0.05 and env.rfb(0.5) == 0.05
    assert assets[0].s0 == 100.0 and assets[0].sigma(0) == 0.25
    claim = pf.claims["fwd1"]
    assert claim.payoff.strike == 80.0 and claim.notional == 1000.0 and claim.maturity == 1.0
    assert claim.csa_rate(0.3) == 0.05 and cand is None

    i = load_preset("forward_incremental_cva")
    env, assets, pf, (cand, placement), solver = i.build()
    assert env.lambdaC(0) == 0.04 and env.RC == 0.4 and env.lambdaB(0) == 0.0
    assert pf.claims["fwd1"].payoff.strike == 100.0 and cand.payoff.strike == 90.0
    assert cand.payoff.direction == "short"
    assert placement.netting_set_id == "ns1" and placement.margin_set_id == "ms1"


def test_unknown_field_rejected():
    data = json.loads(json.dumps(PRESETS["forward_discva"]))
    data["claims"][0]["colour"] = "blue"
    with pytest.raises(ConfigError, match="colour"):
        config_from_dict(data)


def test_dangling_reference_named():
    data = json.loads(json.dumps(PRESETS["forward_discva"]))
    data["margin_sets"][0]["claims"] = ["ghost"]
    with pytest.raises(ConfigError, match="ghost"):
        config_from_dict(data)


def test_malformed_json_located(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"environment": {"r": 0.01,}')
    with pytest.raises(ConfigError, match="line 1"):
        parse_config(p)


def test_round_trip(tmp_path):
    for name in PRESETS:
        cfg = load_preset(name)
        p = tmp_path / f"{name}.json"
        p.write_text(dump_config(cfg))
        again = parse_config(p)
        assert again == cfg
        assert dump_config(again) == dump_config(cfg)


def _zero_spread_config(tmp_path):
    cfg = {
        "environment": {"r": [[0, 0.01], [0.5, 0.02]]},
        "assets": [{"s0": 100, "sigma": 0.3}],
        "claims": [{"id": "c", "type": "option", "kind": "call", "strike": 100, "maturity": 1}],
        "margin_sets": [{"id": "m", "claims": ["c"]}],
        "netting_sets": [{"id": "n", "margin_sets": ["m"]}],
        "simulation": {"n_paths": 500, "n_steps": 10, "seed": 3},
    }
    path = tmp_path / "zero.json"
    path.write_text(json.dumps(cfg))
    return path


def test_zero_spread_run(tmp_path):
    out = tmp_path / "out"
    assert main(["--config", str(_zero_spread_config(tmp_path)), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "report.json").read_text())["portfolio"]
    for key in ("cva", "dva", "fva", "colva", "mva", "xva"):
        assert rep[key] == 0.0
    assert (out / "summary.txt").exists() and (out / "exposure_n.csv").exists()
    assert (out / "report.csv").read_text().count("\n") == 2


def test_byte_identical_reports(tmp_path):
    runs = []
    out = tmp_path / "out"
    for _ in range(2):
        assert main(["--config", "forward_incremental_cva", "--paths", "800", "--steps",
                     "10", "--out", str(out)]) == EXIT_OK
        runs.append((out / "report.json").read_bytes())
    assert runs[0] == runs[1]


def test_overrides_logged(tmp_path, caplog):
    with caplog.at_level(logging.INFO, logger="xvabsde"):
        assert main(["--config", "forward_discva", "--paths", "200", "--steps", "5",
                     "--seed", "9", "--quantile", "0.9", "--mode", "exposure",
                     "--out", str(tmp_path)]) == EXIT_OK
    for flag in ("--paths", "--steps", "--seed", "--quantile", "--mode", "--out"):
        assert f"({flag})" in caplog.text
    assert (tmp_path / "exposure_ns1.csv").exists()


def test_config_error_exit_code(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"environment": {"r": 0.01}, "assets": []}))
    assert main(["--config", str(p), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["--config", "no_such_preset_or_file"]) == EXIT_CONFIG
    assert main(["--config", "forward_discva", "--paths", "0"]) == EXIT_CONFIG


def test_non_convergence_exit_code(tmp_path):
    data = json.loads(json.dumps(PRESETS["forward_discva"]))
    data["solver"] = {"max_picard": 1}
    data["simulation"] = {"n_paths": 300, "n_steps": 10}
    p = tmp_path / "c.json"
    p.write_text(json.dumps(data))
    out = tmp_path / "out"
    assert main(["--config", str(p), "--out", str(out)]) == EXIT_NUMERICAL
    rep = json.loads((out / "report.json").read_text())
    assert rep["converged"] is False
    assert rep["portfolio"]["picard_distances"] and rep["portfolio"]["warnings"]


def test_validate_g_mode(tmp_path):
    assert main(["--config", "forward_incremental_cva", "--mode", "validate-g",
                 "--paths", "3000", "--steps", "20", "--out", str(tmp_path)]) == EXIT_OK
    rec = json.loads((tmp_path / "report.json").read_text())["validate_g"]["ns1"]
    assert rec["n_defaults"] > 0 and rec["agrees_3se"]


def test_discva_preset_summary(tmp_path):
    assert main(["--config", "forward_discva", "--paths", "20000", "--steps", "50",
                 "--out", str(tmp_path)]) == EXIT_OK
    text = (tmp_path / "summary.txt").read_text()
    assert "front office value: 19980.5900" in text
    rep = json.loads((tmp_path / "report.json").read_text())["portfolio"]
    assert rep["discva"] == pytest.approx(-815.4, rel=0.01)
    assert rep["discva"] == pytest.approx(-814.70, rel=0.01)


def test_list_presets(capsys):
    assert main(["--list-presets"]) == EXIT_OK
    assert "forward_discva" in capsys.readouterr().out
