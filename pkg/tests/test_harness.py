import json
import math
from dataclasses import replace

import numpy as np
import pytest

from ddamsim import ExperimentConfig, load_config, run_scenario, sweep, validate
from ddamsim.harness import (apply_axis, dbm_to_watts, draw_psi, papr_study,
                             run_trial, watts_to_dbm)
from ddamsim import report
from ddamsim.cli import main as cli_main


def tiny_config(**overrides):
    base = {
        "frame": {"samples_per_block": 1000, "pilot_len": 32, "guard_len": 40,
                  "blocks_per_invariant": 10, "phase1_blocks": 3, "delay_taps": 40},
        "trials": 2,
        "noise": {"snr_db": 25.0},
        "seed": 7,
    }
    base.update(overrides)
    return ExperimentConfig.from_dict(base)


def test_dbm_round_trip():
    assert abs(dbm_to_watts(30.0) - 1.0) < 1e-15
    assert abs(dbm_to_watts(-94.0) - 10 ** (-12.4)) < 1e-27
    assert abs(watts_to_dbm(dbm_to_watts(17.0)) - 17.0) < 1e-12


def test_config_unknown_key_rejected():
    with pytest.raises(ValueError, match="config.bogus"):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError, match="config.frame.bogus"):
        ExperimentConfig.from_dict({"frame": {"bogus": 1}})


def test_config_round_trip_and_hash(tmp_path):
    cfg = tiny_config()
    as_dict = cfg.to_dict()
    again = ExperimentConfig.from_dict(json.loads(json.dumps(as_dict)))
    assert again == cfg
    assert again.hash() == cfg.hash()
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(as_dict))
    assert load_config(str(p)) == cfg
    assert load_config(None) == ExperimentConfig()


def test_draw_psi_on_grid_properties():
    cfg = ExperimentConfig()
    rng = np.random.default_rng(0)
    t_s = 1.0 / cfg.system.bandwidth_hz
    t_c = cfg.frame.samples_per_block * t_s
    m = cfg.system.antennas
    for _ in range(20):
        psi = draw_psi(cfg, rng, t_c)
        taps = psi.delays / t_s
        np.testing.assert_allclose(taps, np.round(taps), atol=1e-9)
        bins = psi.normalized_aods * m + m / 2
        np.testing.assert_allclose(bins, np.round(bins), atol=1e-9)
        assert np.all(np.abs(psi.dopplers) < 0.5 / t_c)
        sep = cfg.scene.min_separation_bins
        itaps = np.round(taps).astype(int)
        ibins = np.round(bins).astype(int)
        for i in range(psi.path_count):
            for j in range(i + 1, psi.path_count):
                dt = abs(itaps[i] - itaps[j])
                db = abs(ibins[i] - ibins[j])
                assert dt >= sep or db >= sep


def test_run_trial_keys_and_determinism():
    cfg = tiny_config()
    row1 = run_trial(cfg, 0)
    row2 = run_trial(cfg, 0)
    assert row1 == row2
    for key in ("nmse_omp", "nmse_somp", "nmse_asomp_sr", "doppler_error_hz",
                "rate_zf", "rate_ofdm", "sinr_db_mmse", "paths_est"):
        assert key in row1


def test_seed_extension_stability():
    rec2 = run_scenario(tiny_config())
    rec3 = run_scenario(replace(tiny_config(), trials=3))
    assert rec3.rows[:2] == rec2.rows


def test_aggregate_matches_recomputation():
    rec = run_scenario(tiny_config())
    for key, val in rec.aggregate.items():
        if key in ("trials", "trial"):
            continue
        vals = [r[key] for r in rec.rows]
        if all(isinstance(v, (int, float)) for v in vals):
            clean = [v for v in vals if not (isinstance(v, float) and math.isnan(v))]
            if clean:
                assert abs(val - sum(clean) / len(clean)) < 1e-12 * max(1.0, abs(val))


def test_apply_axis_all_axes():
    cfg = ExperimentConfig()
    assert apply_axis(cfg, "snr", 10).noise.snr_db == 10.0
    assert apply_axis(cfg, "transmit_power", 17).power.transmit_dbm == 17.0
    assert apply_axis(cfg, "J", 4).frame.phase1_blocks == 4
    assert apply_axis(cfg, "N_o", 10).doppler.sampling_factor == 10
    assert apply_axis(cfg, "N_p", 100).frame.pilot_len == 100
    assert apply_axis(cfg, "M", 16).system.antennas == 16
    assert apply_axis(cfg, "B", 2e8).system.bandwidth_hz == 2e8
    assert apply_axis(cfg, "L", 3).scene.paths == 3
    with pytest.raises(ValueError, match="unknown sweep axis"):
        apply_axis(cfg, "speed", 1)


def test_sweep_single_value_equals_run():
    cfg = tiny_config()
    records = sweep(cfg, "snr", [25.0])
    assert len(records) == 1
    direct = run_scenario(apply_axis(cfg, "snr", 25.0))
    assert records[0].rows == direct.rows
    assert records[0].axis_value == 25.0


def test_validate_default_passes():
    rep = validate(ExperimentConfig())
    assert rep.ok, [c.name for c in rep.checks if not c.passed]


def test_validate_flags_guard_violation():
    cfg = ExperimentConfig.from_dict({"frame": {"guard_len": 8}})
    rep = validate(cfg)
    bad = [c for c in rep.checks if not c.passed]
    assert any("N_g >= P" in c.name for c in bad)


def test_validate_flags_zf_infeasible():
    cfg = ExperimentConfig.from_dict({"system": {"antennas": 4},
                                      "scene": {"paths": 5}})
    rep = validate(cfg)
    bad = [c for c in rep.checks if not c.passed]
    assert any("M >= L" in c.name for c in bad)


def test_csv_bytes_deterministic(tmp_path):
    cfg = tiny_config()
    paths = []
    for run_dir in ("a", "b"):
        rec = run_scenario(cfg)
        trials, agg = report.record_rows(rec)
        out = tmp_path / run_dir
        out.mkdir()
        report.write_csv(out / "trials.csv", trials)
        report.write_csv(out / "summary.csv", [agg])
        paths.append(out)
    assert (paths[0] / "trials.csv").read_bytes() == (paths[1] / "trials.csv").read_bytes()
    assert (paths[0] / "summary.csv").read_bytes() == (paths[1] / "summary.csv").read_bytes()


def test_papr_study_outputs():
    cfg = ExperimentConfig.from_dict({"papr": {"blocks": 200, "antennas": 8,
                                               "path_counts": [4]}, "seed": 3})
    study = papr_study(cfg)
    assert set(study["curves"]) == {"ddam_l4", "ddam_l4_antenna", "ofdm"}
    for curve in study["curves"].values():
        assert np.all(np.diff(curve) <= 1e-12)   # CCDF non-increasing
    assert study["level_1e2"]["ddam_l4"] <= study["level_1e2"]["ofdm"]


def test_cli_run_and_outputs(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(tiny_config().to_dict()))
    out = tmp_path / "out"
    code = cli_main(["run", "--config", str(cfg_path), "--out", str(out),
                     "--trials", "1"])
    assert code == 0
    assert (out / "run_trials.csv").exists()
    assert (out / "run_summary.csv").exists()
    assert (out / "manifest.json").exists()
    assert (out / "sensing_map.png").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7 and "wall_time_s" in manifest


def test_cli_sweep_with_figures(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(tiny_config().to_dict()))
    out = tmp_path / "sweepout"
    code = cli_main(["sweep", "--config", str(cfg_path), "--out", str(out),
                     "--axis", "snr", "--values", "15,25", "--trials", "1"])
    assert code == 0
    assert (out / "sweep_trials.csv").exists()
    assert (out / "sweep_summary.csv").exists()
    figures = list(out.glob("*.png"))
    assert figures, "sweep should render figures next to the tables"
    header = (out / "sweep_trials.csv").read_text().splitlines()[0]
    assert header.startswith("snr,")


def test_cli_sweep_json_format(tmp_path):
    out = tmp_path / "j"
    code = cli_main(["sweep", "--out", str(out), "--axis", "snr",
                     "--values", "20", "--trials", "1", "--no-figures"])
    assert code == 0
    data = json.loads((out / "sweep_summary.json").read_text()) if (out / "sweep_summary.json").exists() else None
    assert (out / "sweep_trials.csv").exists() or data is not None


def test_cli_papr(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg = ExperimentConfig.from_dict({"papr": {"blocks": 100, "antennas": 4,
                                               "path_counts": [3]}})
    cfg_path.write_text(json.dumps(cfg.to_dict()))
    out = tmp_path / "papr"
    code = cli_main(["papr", "--config", str(cfg_path), "--out", str(out)])
    assert code == 0
    assert (out / "papr_trials.csv").exists()
    assert (out / "papr_ccdf.png").exists()


def test_cli_validate_exit_codes(tmp_path):
    assert cli_main(["validate"]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"system": {"antennas": 4}, "scene": {"paths": 5}}))
    assert cli_main(["validate", "--config", str(bad)]) == 1
