import csv
import io
import json

import pytest
from pydantic import ValidationError

from wptsim import experiments as ex
from wptsim.cli import main
from wptsim.config import SimConfig, load_config, load_preset


def test_table_defaults():
    cfg = load_preset("full")
    sc = cfg.to_scenario()
    assert sc.budget == 1.0
    assert sc.channel.center_frequency == 915e6 and sc.channel.n_subchannels == 50
    assert sc.channel.subchannel_bandwidth == 10e3 and sc.channel.path_loss_exponent == 2.0
    assert sc.block_length == 0.1
    assert sc.consumption.mean_rate == pytest.approx(7e-3)
    assert sc.battery.capacity == pytest.approx(64.8)
    assert sc.initial_energy == pytest.approx(0.8 * 64.8)
    assert sc.feedback.pilot_power == pytest.approx(0.02e-3)
    assert (sc.feedback.m_low, sc.feedback.m_moderate, sc.feedback.m_high) == (4, 2, 1)
    assert sc.feedback.tau_low == pytest.approx(0.4 * 64.8)
    assert sc.battery.harvest_efficiency == 1.0
    assert (sc.channel.tx_antenna_gain, sc.channel.rx_antenna_gain) == (2.5, 2.0)
    assert cfg == SimConfig()


def test_desk_preset_scales_capacity():
    sc = load_preset("desk").to_scenario()
    assert sc.battery.capacity == pytest.approx(0.648)
    assert sc.feedback.tau_high == pytest.approx(0.9 * 0.648)


def test_unknown_keys_rejected(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"battery": {"capacity_mah": 6, "colour": "red"}}))
    with pytest.raises(ValidationError):
        load_config(p)


def test_feedback_larger_than_band_rejected():
    with pytest.raises(ValidationError):
        SimConfig.model_validate({"feedback": {"m_low": 64, "m_moderate": 2, "m_high": 1}})


def test_dotted_updates():
    cfg = load_preset("desk").updated(**{"policy.name": "uni", "seed": 5})
    assert cfg.policy.name == "uni" and cfg.seed == 5
    with pytest.raises(KeyError):
        cfg.updated(**{"policy.nmae": "uni"})


def test_hash_tracks_content():
    a = load_preset("desk")
    assert a.digest() == load_preset("desk").digest()
    assert a.digest() != a.updated(seed=1).digest()
    assert a.digest() != a.updated(**{"policy.name": "uni"}).digest()


def test_feedback_sweep_validation():
    cfg = load_preset("desk")
    with pytest.raises(ValueError):
        ex.exp_lifetime_vs_feedback(cfg, ml_sweep=[6])
    with pytest.raises(ValueError):
        ex.exp_lifetime_vs_feedback(cfg, ml_sweep=[52])
    with pytest.raises(ValueError):
        ex.exp_lifetime_vs_d(cfg, d_sweep=[])
    with pytest.raises(ValueError):
        ex.exp_lifetime_vs_d(cfg, d_sweep=[4.0])


def test_single_point_sweep_one_row_per_policy():
    cfg = load_preset("desk").updated(**{"replication.n_placements": 2, "replication.n_runs": 1})
    rows = ex.exp_lifetime_vs_d(cfg, d_sweep=[0.6])
    assert [r["policy"] for r in rows] == list(ex.ALL_POLICIES)
    assert all(r["d"] == 0.6 and r["n_placements"] == 2 for r in rows)


def test_feedback_rows_derive_counts():
    cfg = load_preset("desk").updated(**{"replication.n_placements": 1, "replication.n_runs": 1})
    rows = ex.exp_lifetime_vs_feedback(cfg, ml_sweep=[4, 8], pilot_powers=[0.02e-3])
    assert [(r["m_l"], r["m_m"], r["m_h"]) for r in rows] == [(4, 2, 1), (8, 4, 2)]


def test_zero_power_predictor_row():
    cfg = load_preset("desk").updated(**{"power_budget_w": 0.0})
    (row,) = ex.exp_validate_predictor(cfg, policies=("uni",), n_runs=200)
    assert row["status"] == "ok"
    assert abs(row["relative_error"]) <= 0.01


def test_mcc_predictor_row_is_reported():
    cfg = load_preset("desk")
    (row,) = ex.exp_validate_predictor(cfg, policies=("mcc",), n_runs=50)
    assert set(ex.PREDICTOR_COLUMNS) <= set(row)


def _run_cli(args, capsys):
    code = main(args)
    return code, capsys.readouterr()


def test_cli_run_csv(capsys, tmp_path):
    out = tmp_path / "r.csv"
    code, _ = _run_cli(["run", "--config", "desk", "--policy", "uni", "--seed", "3",
                        "--placements", "2", "--runs", "2", "--out", str(out)], capsys)
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 4
    assert list(rows[0]) == list(ex.RUN_COLUMNS)
    assert {r["seed"] for r in rows} == {"3"} and {r["policy"] for r in rows} == {"uni"}


def test_cli_run_stdout(capsys):
    code, cap = _run_cli(["run", "--config", "desk", "--placements", "1", "--runs", "1"], capsys)
    assert code == 0
    assert cap.out.splitlines()[0] == ",".join(ex.RUN_COLUMNS)


def test_cli_rejects_bad_config(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"seed": -1}))
    code, cap = _run_cli(["run", "--config", str(bad)], capsys)
    assert code != 0 and "invalid configuration" in cap.err
    code, _ = _run_cli(["run", "--config", str(tmp_path / "missing.json")], capsys)
    assert code != 0


def test_cli_rejects_bad_sweep(capsys, tmp_path):
    code, _ = _run_cli(["exp", "lifetime_vs_feedback", "--config", "desk", "--out", str(tmp_path),
                        "--ml-sweep", "6"], capsys)
    assert code != 0
    assert not (tmp_path / "lifetime_vs_feedback.csv").exists()


def test_cli_experiment_writes_csv(capsys, tmp_path):
    code, _ = _run_cli(["exp", "lifetime_vs_d", "--config", "desk", "--out", str(tmp_path),
                        "--d-sweep", "0,1.2", "--policies", "uni,mcc", "--placements", "2",
                        "--runs-per-placement", "1"], capsys)
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "lifetime_vs_d.csv").open()))
    assert [(r["d"], r["policy"]) for r in rows] == [("0.0", "uni"), ("0.0", "mcc"),
                                                      ("1.2", "uni"), ("1.2", "mcc")]


def test_write_csv_roundtrips_floats():
    buf = io.StringIO()
    ex.write_csv([{"a": 0.1 + 0.2, "b": None, "c": True}], ("a", "b", "c"), stream=buf)
    assert buf.getvalue() == "a,b,c\n0.30000000000000004,,true\n"
