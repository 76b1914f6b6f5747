"""Acceptance suite: one test per release criterion, each printing a
pass/fail line with the measured value. Tolerances are pinned here, not in
any helper, so a change to them is visible in review."""

import json
import math
from dataclasses import replace

import numpy as np
import pytest

import ddamsim as dd
from conftest import BANDWIDTH, T_S, flat_indices, on_grid_psi
from ddamsim import ExperimentConfig
from ddamsim.channel import virtual_channel_closed_form
from ddamsim.cli import main as cli_main
from ddamsim.ddam import true_path_components
from ddamsim.doppler import DopplerConfig, assemble_psi, estimate_path_dopplers
from ddamsim.geometry import SPEED_OF_LIGHT, Scatterer, Scene, propagate_scene, variation_bounds
from ddamsim.harness import apply_axis, papr_study, run_scenario, sweep
from ddamsim.sensing import RecoveryConfig, RecoveryResult, SensingProblem


def report_line(num, name, passed, detail):
    print(f"ACCEPTANCE {num:02d} {name}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, f"criterion {num}: {detail}"


# --------------------------------------------------------------------------
def test_criterion_01_timescale_golden():
    value = dd.path_invariant_time(50.0, 100e6, 128, 100.0)
    report_line(1, "path-invariant-time golden value", value == 20e-3,
                f"T_bar = {value * 1e3:.6f} ms, expected exactly 20 ms")


# --------------------------------------------------------------------------
def test_criterion_02_coherence_golden():
    value = dd.coherence_time(4e3)
    ok = 0.10e-3 <= value <= 0.11e-3
    report_line(2, "coherence-time golden value", ok,
                f"T_c = {value * 1e3:.6f} ms, expected in [0.10, 0.11] ms")


# --------------------------------------------------------------------------
def test_criterion_03_drift_bound_soundness():
    rng = np.random.default_rng(33)
    violations = 0
    for _ in range(10_000):
        r_s = rng.uniform(2.0, 80.0)
        ang = rng.uniform(-np.pi, np.pi)
        v_max = rng.uniform(0.5, 50.0)

        def vel():
            speed = rng.uniform(0.0, v_max)
            d = rng.uniform(0.0, 2 * np.pi)
            return np.array([speed * np.cos(d), speed * np.sin(d)])

        sc = Scatterer(position=np.array([r_s * np.cos(ang), r_s * np.sin(ang)]),
                       velocity=vel())
        scene = Scene(ue_position=np.array([rng.uniform(5.0, 150.0), 0.0]),
                      ue_velocity=vel(), scatterers=[sc],
                      carrier_frequency=30e9, bandwidth=1e8, antennas=8)
        horizon = rng.uniform(0.0, 0.9) * r_s / v_max
        bounds = variation_bounds(v_max, r_s, horizon)
        moved = propagate_scene(scene, horizon)
        sc2 = moved.scatterers[0]
        d0 = np.linalg.norm(sc.position) + np.linalg.norm(scene.ue_position - sc.position)
        d1 = np.linalg.norm(sc2.position) + np.linalg.norm(moved.ue_position - sc2.position)
        if abs(d1 - d0) / SPEED_OF_LIGHT > bounds["delta_tau_max"] + 1e-15:
            violations += 1
        a0 = math.atan2(sc.position[1], sc.position[0])
        a1 = math.atan2(sc2.position[1], sc2.position[0])
        if 0.5 * abs(math.sin(a1 - a0)) > bounds["delta_theta_bar_max"] + 1e-15:
            violations += 1
    report_line(3, "drift bounds sound over 1e4 scenes", violations == 0,
                f"{violations} violations")


# --------------------------------------------------------------------------
def test_criterion_04_observation_model_consistency():
    rng = np.random.default_rng(44)
    m = p_taps = 16
    pulse = dd.make_pulse()
    worst = 0.0
    for _ in range(100):
        psi = on_grid_psi(rng, m, p_taps, 3, nu_span=3000.0)
        cir = dd.build_cir_block(psi, 0, 2000 * T_S, pulse, m, BANDWIDTH, p_taps)
        pilots = dd.generate_pilots(64, m, 1.0, rng)
        prob = dd.make_sensing_problem(cir, pilots)
        h_tilde = dd.vec_angular_delay(dd.virtual_channel(cir).matrix)
        rel = (np.linalg.norm(prob.observation - prob.matrix @ h_tilde)
               / np.linalg.norm(prob.observation))
        worst = max(worst, rel)
    report_line(4, "stacked observation equals sensing model", worst < 1e-8,
                f"worst relative error {worst:.2e} over 100 channels")


# --------------------------------------------------------------------------
def test_criterion_05_oracle_equivalence():
    rng = np.random.default_rng(55)
    m = p_taps = 8
    pulse = dd.make_pulse()
    matches = 0
    for _ in range(100):
        psi = on_grid_psi(rng, m, p_taps, 2)
        cir = dd.build_cir_block(psi, 0, 2000 * T_S, pulse, m, BANDWIDTH, p_taps)
        prob = dd.make_sensing_problem(cir, dd.generate_pilots(16, m, 1.0, rng))
        rec = dd.asomp_sr(iter([prob]), RecoveryConfig(v_r=2, v_p=2, force_j=1))
        oracle = dd.l0_oracle(prob.observation, prob.matrix, 2)
        if sorted(rec.pre_refine_support) == sorted(oracle):
            matches += 1
    report_line(5, "greedy support equals exhaustive oracle", matches >= 99,
                f"{matches}/100 matches")


# --------------------------------------------------------------------------
def _sensing_trial(rng, grid, snr_db, m=32, p_taps=32, paths=5, j=4, n_pilot=64,
                   methods=("omp", "somp"), cfg=None, t_c=2000 * T_S):
    pulse = dd.make_pulse()
    taps_f = rng.uniform(9.0, 23.0, paths)
    theta_bars = rng.uniform(-0.45, 0.45, paths)
    if grid == "on":
        taps_f = np.round(taps_f)
        theta_bars = (np.round(theta_bars * m + m / 2) - m / 2) / m
    gains = (rng.normal(size=paths) + 1j * rng.normal(size=paths)) / np.sqrt(2)
    nus = rng.uniform(-0.4 / t_c, 0.4 / t_c, paths)
    psi = dd.PathStateInfo(gains=gains, dopplers=nus, delays=taps_f * T_S,
                           aods=np.arcsin(2 * theta_bars))
    clean, pilots, truths = [], [], []
    for k in range(j):
        cir = dd.build_cir_block(psi, k, t_c, pulse, m, BANDWIDTH, p_taps)
        truths.append(dd.vec_angular_delay(dd.virtual_channel(cir).matrix))
        pb = dd.generate_pilots(n_pilot, m, 1.0, rng, block_index=k)
        from ddamsim.sensing import simulate_pilot_observation

        clean.append(simulate_pilot_observation(cir, pb))
        pilots.append(pb)
    signal = np.mean([np.vdot(c, c).real for c in clean])
    sigma2 = signal / clean[0].size / 10 ** (snr_db / 10)
    problems = []
    for pb, c in zip(pilots, clean):
        z = (rng.normal(scale=np.sqrt(sigma2 / 2), size=c.size)
             + 1j * rng.normal(scale=np.sqrt(sigma2 / 2), size=c.size))
        y = dd.build_observation(c + z, pb.length, p_taps)
        phi = dd.build_sensing_matrix(pb, m, p_taps)
        problems.append(SensingProblem(observation=y, matrix=phi, antennas=m,
                                       delay_taps=p_taps))
    cfg = cfg or RecoveryConfig(force_j=j)
    out = {}
    if "omp" in methods:
        ests = [dd.omp(q.observation, q.matrix, cfg=cfg)[0] for q in problems]
        out["omp"] = dd.nmse(ests, truths)
    if "somp" in methods:
        _, ests, _ = dd.somp_joint(problems, cfg)
        out["somp"] = dd.nmse(ests, truths)
    if "asomp" in methods:
        rec = dd.asomp_sr(iter(problems), cfg)
        out["asomp"] = dd.nmse(rec.estimates, truths)
    return out


def test_criterion_06_nmse_snr_trends():
    snrs = [0, 5, 10, 15, 20]
    means = {}
    for grid in ("on", "off"):
        rng = np.random.default_rng(66)   # common draws across the grid modes
        for snr in snrs:
            omp_vals, somp_vals = [], []
            for _ in range(100):
                r = _sensing_trial(rng, grid, snr)
                omp_vals.append(r["omp"])
                somp_vals.append(r["somp"])
            means[(grid, snr, "omp")] = float(np.mean(omp_vals))
            means[(grid, snr, "somp")] = float(np.mean(somp_vals))
    ok = True
    details = []
    for grid in ("on", "off"):
        for method in ("omp", "somp"):
            seq = [means[(grid, s, method)] for s in snrs]
            if not all(a > b for a, b in zip(seq, seq[1:])):
                ok = False
                details.append(f"{method}/{grid} not strictly decreasing: {seq}")
        for s in snrs:
            if means[(grid, s, "somp")] > means[(grid, s, "omp")]:
                ok = False
                details.append(f"somp>omp at {grid},{s}")
    for s in snrs:
        for method in ("omp", "somp"):
            if means[("on", s, method)] > means[("off", s, method)]:
                ok = False
                details.append(f"on>off for {method} at snr {s}")
    summary = "; ".join(details) if details else (
        "omp on-grid " + "->".join(f"{means[('on', s, 'omp')]:.3g}" for s in snrs))
    report_line(6, "NMSE trends over the SNR sweep", ok, summary)


# --------------------------------------------------------------------------
def test_criterion_07_joint_recovery_gain():
    rng = np.random.default_rng(77)
    omp_vals, asomp_vals = [], []
    for _ in range(100):
        r = _sensing_trial(rng, "off", 10.0, j=10, n_pilot=100,
                           methods=("omp", "asomp"),
                           cfg=RecoveryConfig(force_j=10))
        omp_vals.append(r["omp"])
        asomp_vals.append(r["asomp"])
    gain_db = 10 * math.log10(np.mean(omp_vals) / np.mean(asomp_vals))
    report_line(7, "adaptive joint recovery beats per-block greedy", gain_db >= 3.0,
                f"gain {gain_db:.2f} dB (need >= 3), omp={np.mean(omp_vals):.3g}, "
                f"asomp={np.mean(asomp_vals):.3g}")


# --------------------------------------------------------------------------
def _doppler_trial(rng, m, p_taps, paths, blocks, t_c, snr_db=None, n_o=100,
                   fine_grid_doppler=False):
    """Fig.-7 protocol: the angular-delay estimates are given (true per-block
    images plus optional estimate-domain noise); only Doppler is estimated."""
    pulse = dd.make_pulse()
    while True:
        taps = rng.choice(np.arange(2, p_taps - 2), size=paths, replace=False)
        bins = rng.choice(m, size=paths, replace=False)
        if all(abs(taps[i] - taps[j]) >= 3 or abs(int(bins[i]) - int(bins[j])) >= 3
               for i in range(paths) for j in range(i + 1, paths)):
            break
    gains = np.exp(1j * rng.uniform(0, 2 * np.pi, paths))   # equal-strength paths
    cfg = DopplerConfig(n_o, t_c, blocks)
    nus = rng.uniform(-4000.0, 4000.0, paths)
    if fine_grid_doppler:
        nus = np.round(nus / cfg.grid_step) * cfg.grid_step
    psi = dd.PathStateInfo(gains=gains, dopplers=nus, delays=taps * T_S,
                           aods=np.arcsin(2 * (bins - m / 2) / m))
    supports, peaks = [], []
    for t, b in zip(taps, bins):
        r_n = np.mod(np.arange(b - 2, b + 2), m)
        p_n = np.mod(np.arange(t - 2, t + 2), p_taps)
        supports.append(sorted({int(pp) * m + int(rr) for rr in r_n for pp in p_n}))
        peaks.append((int(t), int(b)))
    union = sorted({g for s in supports for g in s})
    ests = []
    for k in range(blocks):
        h = dd.vec_angular_delay(virtual_channel_closed_form(
            psi, k, t_c, pulse, m, BANDWIDTH, p_taps))
        out = np.zeros_like(h)
        out[union] = h[union]
        ests.append(out)
    if snr_db is not None:
        # estimate-domain SNR: block energy over total noise energy on the support
        power = np.mean([np.vdot(e, e).real for e in ests])
        sigma2 = power / len(union) / 10 ** (snr_db / 10)
        for e in ests:
            w = (rng.normal(scale=np.sqrt(sigma2 / 2), size=len(union))
                 + 1j * rng.normal(scale=np.sqrt(sigma2 / 2), size=len(union)))
            e[union] += w
    rec = RecoveryResult(support=union, estimates=ests, raw_estimates=ests,
                         pre_refine_support=union, path_supports=supports,
                         path_peaks=peaks, path_count=paths)
    dops = estimate_path_dopplers(rec, cfg)
    psi_hat = assemble_psi(rec, dops, m, T_S, t_c)
    return dd.doppler_error(psi_hat, psi, t_c)


def test_criterion_08_doppler_accuracy():
    rng = np.random.default_rng(88)
    t_c = 1e-4
    noiseless = [_doppler_trial(rng, 32, 32, 5, 10, t_c, snr_db=None,
                                fine_grid_doppler=False) for _ in range(40)]
    worst_clean = max(noiseless)
    noisy = [_doppler_trial(rng, 32, 32, 5, 10, t_c, snr_db=20.0) for _ in range(100)]
    mean_noisy = float(np.mean(noisy))
    ok = worst_clean <= 5.0 + 1e-9 and mean_noisy < 20.0
    report_line(8, "Doppler error at the desk operating point", ok,
                f"noiseless worst {worst_clean:.3f} Hz (<=5), "
                f"mean at 20 dB {mean_noisy:.2f} Hz (<20)")


# --------------------------------------------------------------------------
def test_criterion_09_end_to_end_awgn_reduction():
    rng = np.random.default_rng(99)
    m, paths, p_taps = 32, 5, 24
    pulse = dd.make_pulse()
    psi = on_grid_psi(rng, m, p_taps, paths, nu_span=0.25 / (2000 * T_S))
    sensed = dd.SensedPsi.from_true(psi, m, T_S)
    bf = dd.zf_beamformers(sensed, 1.0)
    h = sensed.path_vectors()
    worst_cross = max(
        abs(np.vdot(h[:, l1], bf.vectors[:, l2]))
        / (np.linalg.norm(h[:, l1]) * np.linalg.norm(bf.vectors[:, l2]))
        for l1 in range(paths) for l2 in range(paths) if l1 != l2)
    syms = dd.qam_symbols(rng, 16, 500)
    x = dd.ddam_transmit(syms, bf)
    y = dd.apply_channel(x, psi, pulse, T_S)
    gmap = dd.delay_group_map(true_path_components(psi, m, T_S), bf)
    gain = gmap.coefficients[gmap.selected_tap]
    p_max = int(bf.delay_taps.max())
    expected = np.zeros_like(y)
    expected[p_max:p_max + syms.size] = gain * syms
    dev = float(np.max(np.abs(y - expected)))
    ok = dev < 1e-9 and worst_cross < 1e-10
    report_line(9, "aligned chain reduces to one AWGN tap", ok,
                f"max sample dev {dev:.2e} (<1e-9), worst ZF cross {worst_cross:.2e} (<1e-10)")


# --------------------------------------------------------------------------
def test_criterion_10_rate_exceeds_baseline():
    cfg = ExperimentConfig.from_dict({"trials": 25, "seed": 1010})
    powers = [10, 15, 20, 25, 30, 35, 40]
    records = sweep(cfg, "transmit_power", powers)
    ok = True
    details = []
    for p, rec in zip(powers, records):
        agg = rec.aggregate
        if not agg["rate_zf"] > agg["rate_ofdm"]:
            ok = False
            details.append(f"zf<=ofdm at {p} dBm ({agg['rate_zf']:.3f} vs {agg['rate_ofdm']:.3f})")
    top = records[-1].aggregate
    if not (top["rate_mmse"] >= top["rate_zf"] - 1e-9):
        ok = False
        details.append(f"mmse<zf-1e-9 at top ({top['rate_mmse']} vs {top['rate_zf']})")
    if not (top["rate_zf"] >= top["rate_mrt"]):
        ok = False
        details.append(f"zf<mrt at top ({top['rate_zf']} vs {top['rate_mrt']})")
    zf_curve = "->".join(f"{r.aggregate['rate_zf']:.2f}" for r in records)
    ofdm_curve = "->".join(f"{r.aggregate['rate_ofdm']:.2f}" for r in records)
    report_line(10, "aligned transmission beats the multicarrier baseline", ok,
                "; ".join(details) if details else f"zf {zf_curve} vs ofdm {ofdm_curve}")


# --------------------------------------------------------------------------
def test_criterion_11_papr_separation():
    cfg = ExperimentConfig.from_dict({"seed": 1111, "papr": {"blocks": 10_000}})
    study = papr_study(cfg)
    lvl = study["level_1e2"]
    gap = lvl["ofdm"] - lvl["ddam_l10"]
    ordering = lvl["ddam_l10_antenna"] <= lvl["ddam_l20_antenna"]
    ok = gap >= 3.0 and ordering
    report_line(11, "peak-power separation at the 1e-2 level", ok,
                f"total-envelope gap {gap:.2f} dB (>=3); per-antenna L10 "
                f"{lvl['ddam_l10_antenna']:.2f} <= L20 {lvl['ddam_l20_antenna']:.2f} dB: {ordering}")


# --------------------------------------------------------------------------
def test_criterion_12_waterfilling_kkt():
    rng = np.random.default_rng(1212)
    worst_budget = 0.0
    worst_slack = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 128))
        gains = rng.uniform(0.0, 3.0, size=n)
        gains[int(rng.integers(0, n))] = rng.uniform(0.5, 3.0)
        total = rng.uniform(0.05, 20.0)
        noise = rng.uniform(1e-4, 2.0)
        p = dd.waterfill(gains, total, noise)
        worst_budget = max(worst_budget, abs(p.sum() - total) / total)
        active = p > 0
        if np.any(active):
            levels = p[active] + noise / gains[active]
            mu = np.max(levels)
            worst_slack = max(worst_slack, (np.max(levels) - np.min(levels)) / mu)
            inactive = (~active) & (gains > 0)
            if np.any(inactive):
                shortfall = mu - np.min(noise / gains[inactive])
                worst_slack = max(worst_slack, shortfall / mu)
    ok = worst_budget < 1e-9 and worst_slack < 1e-9
    report_line(12, "water-filling satisfies the optimality conditions", ok,
                f"worst budget residual {worst_budget:.2e}, worst KKT slack {worst_slack:.2e}")


# --------------------------------------------------------------------------
def test_criterion_13_deterministic_outputs(tmp_path):
    cfg = {
        "frame": {"samples_per_block": 1000, "pilot_len": 32, "guard_len": 40,
                  "blocks_per_invariant": 10, "phase1_blocks": 3, "delay_taps": 40},
        "trials": 2, "seed": 13, "noise": {"snr_db": 20.0},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    digests = {}
    for tag in ("x", "y"):
        run_dir = tmp_path / f"run_{tag}"
        assert cli_main(["run", "--config", str(cfg_path), "--out", str(run_dir),
                         "--no-figures"]) == 0
        sweep_dir = tmp_path / f"sweep_{tag}"
        assert cli_main(["sweep", "--config", str(cfg_path), "--out", str(sweep_dir),
                         "--axis", "snr", "--values", "15,25", "--no-figures"]) == 0
        digests[tag] = tuple(
            (p.name, p.read_bytes())
            for p in sorted(list(run_dir.glob("*.csv")) + list(sweep_dir.glob("*.csv"))))
    ok = digests["x"] == digests["y"]
    n_files = len(digests["x"])
    report_line(13, "repeated runs emit identical tables", ok,
                f"{n_files} CSV files byte-identical across repeats")
