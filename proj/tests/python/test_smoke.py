"""Smoke tests for the python surface of the lab."""

import json
import math
from pathlib import Path

import pytest

miaa = pytest.importorskip("miaa")


def test_softmax_is_a_probability_vector():
    probs = miaa.softmax([1.0, 2.0, 3.0], 1.0)
    assert math.isclose(sum(probs), 1.0, abs_tol=1e-12)
    assert probs[2] > probs[1] > probs[0]
    assert miaa.winning_probs([5.0, 1.0], 0.001)[0] > 0.999


def test_reward_loss_hand_value():
    assert math.isclose(
        miaa.reward_loss([0.5, 0.5], [1.0, 0.0], [0.0, 2.0], 0.5), -1.0, abs_tol=1e-12
    )


def test_enumeration_counts():
    lines = miaa.sample_requests(json.dumps({"n": 2, "m": 4}), 1, 7)
    assert len(lines) == 1
    pairs = miaa.enumerate_allocations(lines[0])
    assert len(pairs) == 8
    assert pairs[0] == (1, 1)
    assert pairs[-1] == (2, 4)


def test_vcg_second_price():
    line = miaa.sample_requests(json.dumps({"n": 2, "m": 1}), 1, 3)[0]
    request = json.loads(line)
    request["ads"][0]["bid"] = 0.8
    request["ads"][1]["bid"] = 0.5
    outcome = json.loads(miaa.run_vcg(json.dumps(request), [[1.0], [1.0]]))
    assert outcome["winner_ad_index"] == 1
    assert math.isclose(outcome["payment_per_click"], 0.5, abs_tol=1e-12)


def test_avito_recipe_means():
    mu2, mu6 = miaa.avito_simulated_ctr_means(0.10, 0.02)
    assert math.isclose(mu2, 0.084, abs_tol=1e-12)
    assert math.isclose(mu6, 0.036, abs_tol=1e-12)


def test_cli_pipeline(tmp_path: Path):
    out_dir = tmp_path / "run"
    config = {
        "market": {"n": 2, "m": 3},
        "data": {"train_requests": 80, "test_requests": 24},
        "epm": {"embedding_dim": 4, "position_dim": 2, "hidden": [12, 6]},
        "pointwise": {"hidden": [8, 4]},
        "epm_train": {"epochs": 1, "batch_size": 32},
        "mechanism": {"mu_hidden": [4], "lambda_hidden": [6]},
        "mech_train": {"epochs": 1, "batch_size": 16},
        "eval": {"audit_grid": 5, "audit_sample": 5, "ic_grid": 5},
        "seed": 11,
        "out_dir": str(out_dir),
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))

    for verb in ["generate", "train-epm", "train-mechanism", "evaluate", "audit"]:
        assert miaa.run_cli([verb, "--config", str(config_path)]) == 0

    report = json.loads((out_dir / "reports" / "eval_report.json").read_text())
    names = {row["mechanism"] for row in report}
    assert names == {"miaa", "vcg", "gsp_fixed", "gsp_dynamic"}
    summary = json.loads((out_dir / "reports" / "audit_summary.json").read_text())
    assert summary["miaa"]["ic_max_regret"] <= 1e-9
    assert summary["miaa"]["ir_violations"] == 0
