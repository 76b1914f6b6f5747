"""Sampled multipath channel: per-block CIR matrices, the angular-delay
(beamspace) representation, and waveform-level channel application.

Conventions, fixed once and pinned by tests:
  * steering vectors are unnormalized, entries exp(i 2 pi theta_bar m);
  * CirBlock stores column p = h_k[p], i.e. the vector whose Hermitian
    product with x gives the tap-p contribution to the received sample;
  * the Doppler phase of a received sample is referenced to the receive
    index n (the phase a moving path accrues over its own propagation).

build_cir_block freezes the Doppler phase at the block start (the model the
estimator works with); apply_channel rotates it continuously per sample (the
waveform truth). Keeping both is deliberate: their difference is exactly the
intra-block variation the frame design treats as negligible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import PathStateInfo
from .numerics import dft_matrix

TRUNCATION_WARN_LEVEL = 1e-3  # relative clipped-tail amplitude that triggers a report


def steering_vector(theta_bar: float, m: int) -> np.ndarray:
    """Unnormalized ULA response: entries exp(i 2 pi theta_bar m), m=0..M-1."""
    if m < 1:
        raise ValueError("M must be >= 1")
    if not (-0.5 <= theta_bar < 0.5):
        raise ValueError("theta_bar must lie in [-1/2, 1/2)")
    return np.exp(2j * np.pi * theta_bar * np.arange(m))


def dirichlet(x, m: int):
    """Periodic-sinc kernel sin(pi x)/(M sin(pi x/M)) * exp(i pi x (M-1)/M).

    Governs the angular leakage of an off-grid path; equals 1 at x = 0
    (mod M) by continuity and 0 at other integers.
    """
    if m < 1:
        raise ValueError("M must be >= 1")
    x = np.asarray(x, dtype=float)
    num = np.sin(np.pi * x)
    den = m * np.sin(np.pi * x / m)
    near_pole = np.isclose(np.mod(x, m), 0.0) | np.isclose(np.mod(x, m), float(m))
    ratio = np.divide(num, den, out=np.ones_like(num), where=~near_pole)
    ratio = np.where(near_pole, 1.0, ratio)
    out = ratio * np.exp(1j * np.pi * x * (m - 1) / m)
    # at exact multiples of M the limit (ratio * phase) is identically 1
    out = np.where(near_pole, 1.0 + 0.0j, out)
    return out if out.ndim else complex(out)


@dataclass
class PulseShape:
    """Nyquist band-limited pulse with finite two-sided support.

    support_taps is the total two-sided support V: psi(tau) = 0 beyond
    |tau| >= (V/2) T_s. psi(k T_s) = delta(k) exactly for integer k.
    """

    kind: str
    support_taps: int

    def __post_init__(self):
        if self.support_taps < 2 or self.support_taps % 2:
            raise ValueError("support_taps must be an even count >= 2")

    @property
    def half_support(self) -> int:
        return self.support_taps // 2

    def evaluate(self, tau, sample_period: float):
        """psi(tau); vectorized in tau."""
        t = np.asarray(tau, dtype=float) / sample_period
        half = self.half_support
        core = np.sinc(t)
        if self.kind == "truncated_sinc":
            # flat out to half the support, raised-cosine roll-off on the tail
            knee = half / 2.0
            a = np.abs(t)
            taper = np.where(
                a <= knee, 1.0,
                0.5 * (1.0 + np.cos(np.pi * np.clip((a - knee) / (half - knee), 0.0, 1.0))),
            )
            out = np.where(a < half, core * taper, 0.0)
        else:
            raise ValueError(f"unknown pulse kind: {self.kind}")
        return out if out.ndim else float(out)


def make_pulse(kind: str = "truncated_sinc", support_taps: int = 16) -> PulseShape:
    if kind not in PULSE_KINDS:
        raise ValueError(f"unknown pulse kind: {kind}")
    return PulseShape(kind=kind, support_taps=support_taps)


PULSE_KINDS = ("truncated_sinc",)


@dataclass
class CirBlock:
    """Frozen CIR of one coherence block: M x P matrix, column p = h_k[p]."""

    block_index: int
    matrix: np.ndarray
    sample_period: float
    truncated: bool = False

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.complex128)
        if self.matrix.ndim != 2:
            raise ValueError("CIR matrix must be 2-D (M x P)")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("CIR matrix has non-finite entries")

    @property
    def antennas(self) -> int:
        return self.matrix.shape[0]

    @property
    def delay_taps(self) -> int:
        return self.matrix.shape[1]


@dataclass
class VirtualChannel:
    """Angular-delay image H_tilde = A^H H of a CIR block, plus its support."""

    matrix: np.ndarray
    support: set = field(default_factory=set)

    @property
    def sparsity_level(self) -> int:
        return len(self.support)


def required_taps(psi_info: PathStateInfo, pulse: PulseShape, sample_period: float) -> int:
    """Smallest P that holds every path's pulse tail."""
    max_tap = int(np.ceil(np.max(psi_info.delays) / sample_period))
    return max_tap + pulse.half_support


def build_cir_block(psi_info: PathStateInfo, k: int, coherence_time: float,
                    pulse: PulseShape, m: int, bandwidth: float, p: int) -> CirBlock:
    """Sampled block-k CIR with per-path phase frozen at the block start.

    Column p holds sum_l conj(alpha_l) e^{-i 2 pi nu_l k T_c} psi(p T_s - tau_l) a(theta_l).
    Pulse energy falling outside taps [0, P) is reported via a warning and the
    `truncated` flag, never clipped silently.
    """
    if p < 1:
        raise ValueError("P must be >= 1")
    t_s = 1.0 / bandwidth
    taps = np.arange(p) * t_s
    h = np.zeros((m, p), dtype=np.complex128)
    truncated = False
    theta_bars = psi_info.normalized_aods
    for l in range(psi_info.path_count):
        weights = pulse.evaluate(taps - psi_info.delays[l], t_s)
        coeff = np.conj(psi_info.gains[l]) * np.exp(-2j * np.pi * psi_info.dopplers[l] * k * coherence_time)
        h += np.outer(steering_vector(theta_bars[l], m), coeff * weights)
        # check the clipped portion of the tail on both sides
        center = psi_info.delays[l] / t_s
        lo = int(np.floor(center)) - pulse.half_support
        hi = int(np.ceil(center)) + pulse.half_support
        outside = [q for q in range(lo, hi + 1) if q < 0 or q >= p]
        if outside:
            clipped = np.abs(pulse.evaluate(np.array(outside) * t_s - psi_info.delays[l], t_s))
            if clipped.size and clipped.max() > TRUNCATION_WARN_LEVEL:
                truncated = True
    if truncated:
        warnings.warn("pulse tail extends beyond the configured delay taps; "
                      "energy was truncated", stacklevel=2)
    return CirBlock(block_index=k, matrix=h, sample_period=t_s, truncated=truncated)


def virtual_channel(cir: CirBlock, support_tol: float = 1e-12) -> VirtualChannel:
    """Beamspace transform H_tilde = A^H H with the significant-bin support set."""
    a = dft_matrix(cir.antennas)
    ht = a.conj().T @ cir.matrix
    mags = np.abs(ht)
    peak = mags.max() if mags.size else 0.0
    support = set()
    if peak > 0:
        rr, pp = np.nonzero(mags > support_tol * peak)
        support = set(zip(rr.tolist(), pp.tolist()))
    return VirtualChannel(matrix=ht, support=support)


def virtual_channel_closed_form(psi_info: PathStateInfo, k: int, coherence_time: float,
                                pulse: PulseShape, m: int, bandwidth: float,
                                p: int) -> np.ndarray:
    """Per-path separable angular-delay image, summed over paths.

    Entry (r, p') is sum_l sqrt(M) conj(alpha_{l,k}) Gamma_M(theta_bar_l M - (r - M/2))
    * psi(p' T_s - tau_l); the per-path outer-product structure is what support
    refinement and Doppler correlation rely on.
    """
    t_s = 1.0 / bandwidth
    taps = np.arange(p) * t_s
    r_offsets = np.arange(m) - m / 2.0
    out = np.zeros((m, p), dtype=np.complex128)
    for l in range(psi_info.path_count):
        alpha_k = psi_info.gains[l] * np.exp(2j * np.pi * psi_info.dopplers[l] * k * coherence_time)
        ang = dirichlet(psi_info.normalized_aods[l] * m - r_offsets, m)
        dly = pulse.evaluate(taps - psi_info.delays[l], t_s)
        out += np.sqrt(m) * np.conj(alpha_k) * np.outer(ang, dly)
    return out


def vec_angular_delay(h_tilde: np.ndarray) -> np.ndarray:
    """Flatten an M x P angular-delay matrix with the index rule g = p*M + r."""
    return np.asarray(h_tilde).T.reshape(-1)


def correlation_ratio(h1, h2) -> float:
    """|<h1, h2>| / (||h1|| ||h2||); 1 iff collinear, 0 iff orthogonal."""
    h1 = np.asarray(h1, dtype=np.complex128).reshape(-1)
    h2 = np.asarray(h2, dtype=np.complex128).reshape(-1)
    n1 = np.linalg.norm(h1)
    n2 = np.linalg.norm(h2)
    if n1 == 0 or n2 == 0:
        raise ValueError("correlation_ratio is undefined for zero vectors")
    return float(np.abs(h1.conj() @ h2) / (n1 * n2))


def apply_channel(x, psi_info: PathStateInfo, pulse: PulseShape, sample_period: float,
                  noise_power: float = 0.0, rng=None, n0: int = 0,
                  doppler_mode: str = "continuous",
                  samples_per_block: int | None = None) -> np.ndarray:
    """Convolve a transmit sequence of M-vectors with the time-varying CIR.

    y[n] = sum_p h^H[n0+n, p] x[n-p] + z[n], with the per-path Doppler phase
    referenced to the receive index. doppler_mode "continuous" rotates the
    phase every sample; "block" freezes it at the start of each coherence
    block of samples_per_block samples (the estimator's idealized model).
    Noise is circular Gaussian with per-sample variance noise_power.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 2:
        raise ValueError("x must be an (N, M) array of transmit vectors")
    n_in, m = x.shape
    if doppler_mode not in ("continuous", "block"):
        raise ValueError("doppler_mode must be 'continuous' or 'block'")
    if doppler_mode == "block" and not samples_per_block:
        raise ValueError("block mode needs samples_per_block")

    max_tap = int(np.ceil(np.max(psi_info.delays) / sample_period)) + pulse.half_support
    n_out = n_in + max_tap
    y = np.zeros(n_out, dtype=np.complex128)
    n_idx = np.arange(n_out) + n0
    theta_bars = psi_info.normalized_aods
    for l in range(psi_info.path_count):
        # h^H[n,p] x[n-p] = alpha_l e^{i phi_l(n)} psi(p T_s - tau_l) a^H x[n-p]
        beam = x @ np.conj(steering_vector(theta_bars[l], m))
        taps = pulse.evaluate(np.arange(max_tap + 1) * sample_period - psi_info.delays[l],
                              sample_period)
        stream = np.convolve(beam, taps)[:n_out]
        if doppler_mode == "continuous":
            phase = 2.0 * np.pi * psi_info.dopplers[l] * n_idx * sample_period
        else:
            block_of = n_idx // samples_per_block
            phase = 2.0 * np.pi * psi_info.dopplers[l] * block_of * samples_per_block * sample_period
        y += psi_info.gains[l] * np.exp(1j * phase) * stream
    if noise_power > 0:
        if rng is None:
            raise ValueError("noise_power > 0 requires an rng")
        scale = np.sqrt(noise_power / 2.0)
        y = y + rng.normal(scale=scale, size=n_out) + 1j * rng.normal(scale=scale, size=n_out)
    return y
