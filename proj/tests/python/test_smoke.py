import csv
import json
import os
from pathlib import Path

import pytest

import gridfm

CONFIGS = Path(os.environ.get("GRIDFM_CONFIG_DIR", Path(__file__).parents[2] / "configs"))


def test_environment_round_trip():
    world = gridfm.GridWorld(gridfm.GridConfig(n=5))
    assert world.reset(0)["agent"] == (0, 0)
    for action in ["up"] * 4 + ["right"] * 3:
        assert world.step(action)["reward"] == 0
    last = world.step("right")
    assert last["reward"] == 1 and last["terminated"]


def test_enumeration_size():
    assert len(gridfm.enumerate_transitions(16)) == 1024
    first = gridfm.enumerate_transitions(2)[0]
    assert first == ((0, 0), "up", (0, 1), 0)


def test_templates_and_parsing():
    assert len(gridfm.template_names()) == 10
    text = gridfm.render_template("RewardSample", {"<n>": "5"})
    assert "<n>" not in text
    assert gridfm.parse_transition("moves to [3, 4], reward 0", True) == ((3, 4), 0)
    with pytest.raises(gridfm.ParseError):
        gridfm.parse_transition("no coordinates")


def test_advantages_hand_case():
    adv, ret = gridfm.compute_advantages([0, 0, 1], [0.2, 0.3, 0.5], [False, False, True], 0.9, 0.8)
    assert adv == pytest.approx([0.4372, 0.51, 0.5], abs=1e-12)
    assert ret[2] == pytest.approx(1.0)


def test_chi_square():
    assert gridfm.chi_square_critical(24, 0.01) == pytest.approx(42.9798, abs=1e-3)


def test_fidelity_run_and_report(tmp_path):
    out = tmp_path / "fid"
    result = gridfm.run_config_file(CONFIGS / "fidelity_oracle_n5.json", out=str(out))
    assert result["ok"]
    with open(out / "accuracy.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 4
    assert all(r["accuracy"] == "1" for r in rows)
    report = gridfm.build_report(str(tmp_path))
    assert report["ok"]
    assert (tmp_path / "report.svg").exists()


def test_bad_config_is_rejected(tmp_path):
    doc = {"experiment": "fidelity", "unexpected": True}
    with pytest.raises(gridfm.ConfigError):
        gridfm.run_experiment(json.dumps(doc), out=str(tmp_path / "x"))
    assert not (tmp_path / "x").exists()


def test_empty_report_dir(tmp_path):
    with pytest.raises(gridfm.UsageError, match="no runs found"):
        gridfm.build_report(str(tmp_path))
