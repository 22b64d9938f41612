import json

import numpy as np
import pytest

from trisense import allocation, session as ss
from trisense.cli import main
from trisense.costs import CostConfig


def test_plan_jnd_initial(capsys):
    assert main(["plan-jnd", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "pedestal_ppm=1.2" in out
    assert out.count("stimulus_ppm") == 80      # one line per scheduled trial


def test_plan_jnd_adapted(capsys):
    assert main(["plan-jnd", "--pedestal", "3.5", "--k", "1.9167"]) == 0
    out = capsys.readouterr().out
    assert "step_ppm=0.8" in out


def test_plan_jnd_terminal(capsys):
    assert main(["plan-jnd", "--pedestal", "10.13", "--k", "1.9167"]) == 0
    out = capsys.readouterr().out
    assert "terminal" in out


def test_simulate_jnd(capsys):
    assert main(["simulate-jnd", "--observer", "k=1.91", "--seed", "5",
                 "--beta", "3.0"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["n_phases"] >= 1
    assert body["phase_steps_ppm"][0] == 0.4


def test_fit_pf_cli(tmp_path, capsys):
    from trisense import psychometric as pf
    truth = pf.PsychometricFit(pf.PFFamily.LOGISTIC, 3.5, 1.12, 0.5, 0.0, 0.0, 0)
    trials = pf.simulate_trials(truth, [1.6, 2.4, 3.2, 4.0], 20,
                                np.random.default_rng(0), pedestal=1.2)
    path = tmp_path / "trials.csv"
    pf.write_trials_csv(trials, str(path))
    assert main(["fit-pf", str(path), "--bootstrap", "50",
                 "--gof-sims", "30"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["family"] == "logistic"
    assert body["gamma"] == 0.5
    assert body["p_value"] is not None


def test_simulate_smell_writes_csv(tmp_path, capsys):
    out = tmp_path / "series.csv"
    assert main(["simulate-smell", "--cells", "512", "--duration", "10",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t_s,c_ppm"
    assert len(lines) == 42  # header + 41 samples at 4 Hz


def test_print_costs(capsys):
    assert main(["print-costs"]) == 0
    out = capsys.readouterr().out
    assert "B4: value=1.0" in out
    assert "Kitchen: 0.04" in out
    assert "3840x2160" in out


def test_predict_cli(capsys):
    assert main(["predict", "--model", "m1", "--budget", "B4"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["smell_logit"] == pytest.approx(1.69)
    assert body["visual_pct"] == pytest.approx(59.89)


def test_fit_validate_cycle(tmp_path, capsys):
    budgets = [("B1", 6.25), ("B2", 11.0), ("B4", 100.0)]
    records = allocation.make_model_records(allocation.DEFAULT_M1, budgets,
                                            [None])
    rec_path = tmp_path / "records.csv"
    allocation.write_records_csv(records, str(rec_path))
    coeff_path = tmp_path / "coeffs.json"
    assert main(["fit-model", "--records", str(rec_path), "--kind", "m1",
                 "--out", str(coeff_path)]) == 0
    capsys.readouterr()
    assert main(["validate", "--records", str(rec_path),
                 "--coeffs", str(coeff_path)]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["visual_mae_pct"] == pytest.approx(0.0, abs=1e-6)
    assert body["n_groups"] == 3


def test_replay_and_export(tmp_path, capsys):
    cfg = CostConfig()
    sess = ss.Session(cfg, "p1", seed=4, budgets=["B1", "B4"],
                      scenarios=["Car"])
    while not sess.completed:
        sess.set_level("visual", 5)
        sess.commit()
    store = tmp_path / "store.jsonl"
    ss.persist(sess.log, str(store))
    assert main(["replay", str(store)]) == 0
    assert "replayed OK" in capsys.readouterr().out
    out_csv = tmp_path / "records.csv"
    assert main(["export-csv", str(store), "--out", str(out_csv)]) == 0
    back = allocation.read_records_csv(str(out_csv))
    assert back == sess.log.records
