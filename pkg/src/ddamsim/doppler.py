"""Per-path Doppler estimation from the refined angular-delay coefficients,
and assembly of the complete sensed path state.

A path's coefficient vector repeats across coherence blocks up to the phase
e^{-i 2 pi nu k T_c}; correlating the block-0 reference against every block
therefore yields a single complex tone whose frequency is read off an
oversampled inverse-DFT grid search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import steering_vector
from .geometry import PathStateInfo
from .sensing import RecoveryResult


@dataclass
class DopplerConfig:
    """Grid parameters: J blocks of length T_c searched at N_o-fold oversampling."""

    sampling_factor: int
    coherence_time: float
    blocks: int

    def __post_init__(self):
        if self.sampling_factor < 1:
            raise ValueError("sampling factor must be >= 1")
        if self.coherence_time <= 0:
            raise ValueError("coherence time must be positive")
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")

    @property
    def grid_step(self) -> float:
        return 1.0 / (self.sampling_factor * self.blocks * self.coherence_time)

    @property
    def unambiguous_range(self) -> float:
        return 0.5 / self.coherence_time


@dataclass
class SensedPsi:
    """Estimated per-path state on the angular-delay grid.

    gains hold the raw peak-bin values of the angular-delay image (for an
    on-grid path that is sqrt(M) * conj(alpha), referenced to block 0);
    path_vectors() undoes the sqrt(M) so the columns are directly comparable
    to conj(alpha) a(theta).
    """

    gains: np.ndarray          # complex, block-0 referenced
    dopplers: np.ndarray       # Hz
    delay_taps: np.ndarray     # int
    angle_bins: np.ndarray     # int
    antennas: int
    sample_period: float
    processed_gains: np.ndarray | None = None   # diagnostic only
    path_supports: list = field(default_factory=list)

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=np.complex128).reshape(-1)
        self.dopplers = np.asarray(self.dopplers, dtype=float).reshape(-1)
        self.delay_taps = np.asarray(self.delay_taps, dtype=int).reshape(-1)
        self.angle_bins = np.asarray(self.angle_bins, dtype=int).reshape(-1)
        n = self.gains.size
        if n < 1:
            raise ValueError("at least one sensed path required")
        if not (self.dopplers.size == self.delay_taps.size == self.angle_bins.size == n):
            raise ValueError("per-path arrays must share one length")
        if np.any(np.abs(2.0 * (self.angle_bins - self.antennas / 2.0) / self.antennas) > 1.0):
            raise AssertionError("angle bin maps outside the valid angle range")

    @property
    def path_count(self) -> int:
        return self.gains.size

    @property
    def delays(self) -> np.ndarray:
        return self.delay_taps * self.sample_period

    @property
    def normalized_aods(self) -> np.ndarray:
        return (self.angle_bins - self.antennas / 2.0) / self.antennas

    @property
    def aods(self) -> np.ndarray:
        return np.arcsin(2.0 * (self.angle_bins - self.antennas / 2.0) / self.antennas)

    def path_vectors(self) -> np.ndarray:
        """(M, L_hat) matrix whose column l is (gain_l/sqrt(M)) a(theta_l)."""
        m = self.antennas
        cols = [self.gains[l] / np.sqrt(m) * steering_vector(self.normalized_aods[l], m)
                for l in range(self.path_count)]
        return np.stack(cols, axis=1)

    @classmethod
    def from_true(cls, psi: PathStateInfo, m: int, sample_period: float) -> "SensedPsi":
        """Perfect-PSI view of an on-grid truth (for oracle evaluations)."""
        taps = np.round(psi.delays / sample_period).astype(int)
        bins = np.round(psi.normalized_aods * m + m / 2.0).astype(int)
        if not np.allclose(taps * sample_period, psi.delays, rtol=0, atol=1e-9 * sample_period):
            raise ValueError("truth delays are not on the tap grid")
        if not np.allclose((bins - m / 2.0) / m, psi.normalized_aods, atol=1e-12):
            raise ValueError("truth angles are not on the beamspace grid")
        return cls(gains=np.sqrt(m) * np.conj(psi.gains), dopplers=psi.dopplers.copy(),
                   delay_taps=taps, angle_bins=bins, antennas=m, sample_period=sample_period)


def doppler_correlate(path_block_0, all_blocks) -> np.ndarray:
    """Entry k is <path reference of block 0, full block-k vector>.

    For well-separated paths this is approximately the processed path gain
    times e^{-i 2 pi nu k T_c}.
    """
    ref = np.asarray(path_block_0, dtype=np.complex128).reshape(-1)
    if np.vdot(ref, ref).real <= 0.0:
        raise ValueError("zero reference vector")
    return np.array([np.vdot(ref, np.asarray(b).reshape(-1)) for b in all_blocks])


def estimate_doppler(u, cfg: DopplerConfig) -> float:
    """Grid argmax of |sum_k u[k] e^{i 2 pi omega k/(N_o J)}| over the integer
    grid omega = -N_o J/2 .. N_o J/2 - 1, mapped back to Hz."""
    u = np.asarray(u, dtype=np.complex128).reshape(-1)
    j = cfg.blocks
    if u.size != j:
        raise ValueError("correlation length must equal the block count")
    n_grid = cfg.sampling_factor * j
    omegas = np.arange(-(n_grid // 2), n_grid - n_grid // 2)
    k = np.arange(j)
    basis = np.exp(2j * np.pi * np.outer(omegas, k) / n_grid)
    scores = np.abs(basis @ u)
    return float(omegas[int(np.argmax(scores))] / (n_grid * cfg.coherence_time))


def fold_doppler(nu: float, coherence_time: float) -> float:
    """Alias a Doppler into the unambiguous range [-1/(2T_c), 1/(2T_c))."""
    span = 1.0 / coherence_time
    return float((nu + span / 2.0) % span - span / 2.0)


def path_block_vectors(recovery: RecoveryResult, path: int) -> list:
    """Per-block vectors of one refined path (zero off its support)."""
    sel = recovery.path_supports[path]
    out = []
    for h in recovery.estimates:
        v = np.zeros_like(h)
        v[sel] = h[sel]
        out.append(v)
    return out


def estimate_path_dopplers(recovery: RecoveryResult, cfg: DopplerConfig) -> np.ndarray:
    """Doppler per refined path from the block sequence of its coefficients."""
    dops = []
    for l in range(recovery.path_count):
        ref = path_block_vectors(recovery, l)[0]
        u = doppler_correlate(ref, recovery.estimates)
        dops.append(estimate_doppler(u, cfg))
    return np.array(dops)


def assemble_psi(recovery: RecoveryResult, dopplers, m: int, sample_period: float,
                 coherence_time: float) -> SensedPsi:
    """Fuse refined supports, peak gains, and Doppler estimates into one PSI.

    Per-path gains are averaged across blocks after de-rotating each block to
    the block-0 phase reference, then read at the peak bin.
    """
    if recovery.path_count < 1:
        raise ValueError("no sensed paths to assemble")
    dopplers = np.asarray(dopplers, dtype=float).reshape(-1)
    j = len(recovery.estimates)
    gains = []
    sigmas = []
    for l, (p_hat, r_hat) in enumerate(recovery.path_peaks):
        g = p_hat * m + r_hat
        derot = np.zeros(recovery.estimates[0].size, dtype=np.complex128)
        for k in range(j):
            derot += recovery.estimates[k] * np.exp(2j * np.pi * dopplers[l] * k * coherence_time)
        derot /= j
        gains.append(derot[g])
        block0 = path_block_vectors(recovery, l)[0]
        sigmas.append(float(np.vdot(block0, block0).real))
    taps = np.array([p for p, _ in recovery.path_peaks], dtype=int)
    bins = np.array([r for _, r in recovery.path_peaks], dtype=int)
    return SensedPsi(gains=np.array(gains), dopplers=dopplers, delay_taps=taps,
                     angle_bins=bins, antennas=m, sample_period=sample_period,
                     processed_gains=np.array(sigmas),
                     path_supports=list(recovery.path_supports))


def per_block_psi(block_estimate, path_peaks, m: int, sample_period: float) -> SensedPsi:
    """Snapshot of the sensed paths in one block with no Doppler attached
    (the view the first-phase per-block transmission works from)."""
    block_estimate = np.asarray(block_estimate, dtype=np.complex128).reshape(-1)
    gains = [block_estimate[p_hat * m + r_hat] for p_hat, r_hat in path_peaks]
    taps = np.array([p for p, _ in path_peaks], dtype=int)
    bins = np.array([r for _, r in path_peaks], dtype=int)
    return SensedPsi(gains=np.array(gains), dopplers=np.zeros(len(gains)),
                     delay_taps=taps, angle_bins=bins, antennas=m,
                     sample_period=sample_period)


def doppler_error(estimated: SensedPsi, truth: PathStateInfo, coherence_time: float) -> float:
    """Mean absolute Doppler error after matching paths by nearest
    (delay-tap, angle-bin); unmatched true paths count at the half-width of
    the unambiguous range."""
    m = estimated.antennas
    t_s = estimated.sample_period
    true_taps = np.round(truth.delays / t_s).astype(int)
    true_bins = np.round(truth.normalized_aods * m + m / 2.0).astype(int)
    n_true = truth.path_count
    n_est = estimated.path_count

    pairs = []
    for i in range(n_est):
        for j in range(n_true):
            dr = abs(int(estimated.angle_bins[i]) - int(true_bins[j]))
            dr = min(dr, m - dr)
            dp = int(estimated.delay_taps[i]) - int(true_taps[j])
            dist = math.hypot(dp, dr)
            pairs.append((dist, true_taps[j], j, i))
    pairs.sort()       # ties resolve toward the lower true delay, then index
    used_est, used_true = set(), set()
    err = 0.0
    for _, _, j, i in pairs:
        if i in used_est or j in used_true:
            continue
        used_est.add(i)
        used_true.add(j)
        err += abs(estimated.dopplers[i] - truth.dopplers[j])
    unmatched = n_true - len(used_true)
    err += unmatched * (0.5 / coherence_time)
    return err / n_true
