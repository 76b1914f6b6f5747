"""Multicarrier baseline: frequency-domain channels, water-filling, the
overhead-weighted rate, and time-domain synthesis for peak-power statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import CirBlock
from .ddam import FrameConfig


@dataclass
class OfdmConfig:
    subcarriers: int        # W, power of two
    cyclic_prefix: int      # N_cp taps
    qam_order: int = 16

    def __post_init__(self):
        w = self.subcarriers
        if w < 2 or (w & (w - 1)):
            raise ValueError("subcarriers must be a power of two >= 2")
        if self.cyclic_prefix < 0:
            raise ValueError("cyclic prefix must be non-negative")
        side = int(round(math.sqrt(self.qam_order)))
        if side * side != self.qam_order or side < 2:
            raise ValueError("qam_order must be a square (4, 16, 64, ...)")


def subcarrier_channels(cir: CirBlock, w: int) -> np.ndarray:
    """Frequency response per subcarrier: h_w = sum_p h[p] e^{-i 2 pi w p / W}.

    Returns a (W, M) array; requires the delay spread to fit inside W taps.
    """
    p = cir.delay_taps
    if p > w:
        raise ValueError("delay taps exceed the subcarrier count")
    taps = np.arange(p)
    subs = np.arange(w).reshape(-1, 1)
    twiddle = np.exp(-2j * np.pi * subs * taps / w)    # (W, P)
    return twiddle @ cir.matrix.T                      # (W, M)


def waterfill(gains, total_power: float, noise_per_subcarrier: float) -> np.ndarray:
    """Closed-form water-filling: p_w = max(0, mu - n/g_w) with the level mu
    set so the active set exactly spends the budget."""
    g = np.asarray(gains, dtype=float).reshape(-1)
    if np.any(g < 0):
        raise ValueError("gains must be non-negative")
    if not np.any(g > 0):
        raise ValueError("all subcarrier gains are zero")
    if total_power <= 0:
        raise ValueError("total power must be positive")
    floors = np.full(g.size, np.inf)
    pos = g > 0
    floors[pos] = noise_per_subcarrier / g[pos]
    order = np.argsort(floors)
    sorted_floors = floors[order]
    # grow the active set while the implied water level clears the next floor
    active = 1
    cum = sorted_floors[0]
    while active < g.size and np.isfinite(sorted_floors[active]):
        mu = (total_power + cum) / active
        if mu <= sorted_floors[active]:
            break
        cum += sorted_floors[active]
        active += 1
    mu = (total_power + cum) / active
    powers = np.maximum(0.0, mu - floors)
    powers[~np.isfinite(floors)] = 0.0
    return powers


def ofdm_rate(frame: FrameConfig, cfg: OfdmConfig, channels, total_power: float,
              noise_power: float, estimated_channels=None) -> float:
    """Rate of per-subcarrier matched beamforming with water-filled power.

    channels is one (W, M) array or a list of them (averaged). Beamforming
    directions and the water-filling gains come from estimated_channels when
    given (imperfect state), while the realized signal power always uses the
    true responses. The overhead factor charges per-block pilots, guards,
    and one prefix per multicarrier symbol.
    """
    if isinstance(channels, np.ndarray):
        channels = [channels]
        estimated_channels = [estimated_channels] if estimated_channels is not None else None
    w = cfg.subcarriers
    n_ofdm = frame.payload_len // (w + cfg.cyclic_prefix)
    if n_ofdm < 1:
        raise ValueError("frame too short for one multicarrier symbol")
    overhead = (frame.payload_len - n_ofdm * cfg.cyclic_prefix) / frame.samples_per_block
    noise_per_sub = noise_power / w

    rates = []
    for bi, h_true in enumerate(channels):
        h_est = h_true if estimated_channels is None else estimated_channels[bi]
        est_norms = np.linalg.norm(h_est, axis=1)
        powers = waterfill(est_norms**2, total_power, noise_per_sub)
        snr = np.zeros(w)
        ok = est_norms > 0
        beams = np.zeros_like(h_est)
        beams[ok] = h_est[ok] / est_norms[ok, None]
        gains = np.abs(np.einsum("wm,wm->w", np.conj(h_true), beams)) ** 2
        snr[ok] = powers[ok] * gains[ok] / noise_per_sub
        rates.append(np.mean(np.log2(1.0 + snr)))
    return overhead * float(np.mean(rates))


def ofdm_modulate(freq_symbols, n_cp: int) -> np.ndarray:
    """Unitary inverse DFT of one symbol's spectrum with a cyclic prefix."""
    s = np.asarray(freq_symbols, dtype=np.complex128).reshape(-1)
    time = np.fft.ifft(s) * np.sqrt(s.size)
    if n_cp > 0:
        return np.concatenate([time[-n_cp:], time])
    return time


def qam_symbols(rng, order: int, size) -> np.ndarray:
    """Unit-average-power square QAM draws."""
    side = int(round(math.sqrt(order)))
    levels = 2.0 * np.arange(side) - side + 1.0
    scale = math.sqrt(2.0 * np.mean(levels**2))
    re = rng.integers(0, side, size=size)
    im = rng.integers(0, side, size=size)
    return (levels[re] + 1j * levels[im]) / scale


def papr(blocks) -> np.ndarray:
    """Peak-to-average power ratio per block, in dB."""
    out = []
    for b in blocks:
        b = np.asarray(b, dtype=np.complex128).reshape(-1)
        p = np.abs(b) ** 2
        mean = p.mean()
        if mean <= 0:
            raise ValueError("zero block has no PAPR")
        out.append(10.0 * math.log10(p.max() / mean))
    return np.array(out)


def papr_ccdf(values_db, thresholds_db) -> np.ndarray:
    """Pr(PAPR > threshold) at each threshold."""
    v = np.asarray(values_db, dtype=float).reshape(-1)
    return np.array([(v > t).mean() for t in np.asarray(thresholds_db, dtype=float)])


def papr_at_ccdf(values_db, level: float) -> float:
    """PAPR threshold exceeded with probability `level` (CCDF quantile)."""
    v = np.asarray(values_db, dtype=float).reshape(-1)
    return float(np.quantile(v, 1.0 - level))
