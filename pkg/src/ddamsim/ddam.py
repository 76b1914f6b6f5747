"""Delay-Doppler alignment transmission with sensed path state.

Each path gets its own beamforming vector, a delay pre-compensation that
lines every path up on the latest tap, and a Doppler pre-rotation. The
receiver model groups (true path, precoded path) pairs by their combined
delay tap; the tap holding the strongest coherent sum carries the data and
everything else is counted as worst-case constructive interference.

The Doppler pre-rotation anticipates the path's own propagation delay
(phase -2 pi nu (n + p_l) T_s at transmit index n), so that with perfect
state the rotation cancels exactly at the receiver and the end-to-end chain
collapses to a single-tap AWGN channel to machine precision.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import PulseShape, steering_vector
from .doppler import SensedPsi
from .geometry import PathStateInfo

PHASE2_VALIDITY_THRESHOLD = 0.1   # delta-nu * (K-J) * T_c below this counts as "static"


@dataclass
class FrameConfig:
    """Per-coherence-block sample budget and the two-phase split of the
    path-invariant window."""

    samples_per_block: int      # N
    pilot_len: int              # N_p
    guard_len: int              # N_g
    blocks_per_invariant: int   # K
    phase1_blocks: int          # J
    sample_period: float        # T_s

    def __post_init__(self):
        if min(self.samples_per_block, self.pilot_len, self.guard_len) < 0:
            raise ValueError("frame sample counts must be non-negative")
        if self.payload_len < 0:
            raise ValueError("frame too short: N - N_p - 2*N_g must be >= 0")
        if not (0 <= self.phase1_blocks < self.blocks_per_invariant):
            raise ValueError("need J < K")
        if self.sample_period <= 0:
            raise ValueError("sample period must be positive")

    @property
    def payload_len(self) -> int:
        return self.samples_per_block - self.pilot_len - 2 * self.guard_len

    @property
    def coherence_time(self) -> float:
        return self.samples_per_block * self.sample_period

    @property
    def overhead_saving(self) -> int:
        """Signalling samples saved versus per-block training."""
        k, j = self.blocks_per_invariant, self.phase1_blocks
        return (k - j) * (self.pilot_len + 2 * self.guard_len) - self.guard_len


@dataclass
class BeamformerSet:
    """Per-path precoders plus the delay/Doppler pre-compensation schedule."""

    vectors: np.ndarray        # (M, L_hat)
    delay_taps: np.ndarray     # sensed tap per path
    dopplers: np.ndarray       # sensed Doppler per path (Hz)
    data_power: float
    criterion: str
    sample_period: float
    annihilated: list = field(default_factory=list)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.complex128)
        self.delay_taps = np.asarray(self.delay_taps, dtype=int).reshape(-1)
        self.dopplers = np.asarray(self.dopplers, dtype=float).reshape(-1)
        total = float(np.sum(np.abs(self.vectors) ** 2))
        if total > self.data_power * (1.0 + 1e-9):
            raise ValueError("beamformer power exceeds the data power budget")

    @property
    def path_count(self) -> int:
        return self.vectors.shape[1]

    @property
    def max_tap(self) -> int:
        return int(self.delay_taps.max())

    @property
    def kappas(self) -> np.ndarray:
        """Delay pre-compensation per path; the latest path gets zero."""
        return self.max_tap - self.delay_taps


def _normalize(cols: np.ndarray, p_d: float) -> np.ndarray:
    total = float(np.sum(np.abs(cols) ** 2))
    if total <= 0.0:
        raise ValueError("all beamforming directions vanished")
    return cols * math.sqrt(p_d / total)


def mrt_beamformers(psi: SensedPsi, p_d: float) -> BeamformerSet:
    """Match each path's vector; joint scaling puts power proportional to
    per-path channel energy."""
    h = psi.path_vectors()
    norms = np.linalg.norm(h, axis=0)
    keep = norms > 0
    if not np.all(keep):
        warnings.warn("dropping zero-gain sensed paths from MRT", stacklevel=2)
        h = h[:, keep]
        if h.shape[1] == 0:
            raise ValueError("no usable sensed paths")
    return BeamformerSet(vectors=_normalize(h, p_d),
                         delay_taps=psi.delay_taps[keep],
                         dopplers=psi.dopplers[keep],
                         data_power=p_d, criterion="mrt",
                         sample_period=psi.sample_period)


def zf_beamformers(psi: SensedPsi, p_d: float) -> BeamformerSet:
    """Project each path's vector onto the null space of all the others.

    Feasible for M >= L_hat. Two sensed paths sharing one angular bin make
    the projector annihilate both; the affected indices are reported in
    `annihilated` rather than patched over.
    """
    h = psi.path_vectors()
    m, l_hat = h.shape
    if m < l_hat:
        raise ValueError(f"ZF infeasible: requires M >= L (M={m}, L={l_hat})")
    cols = np.zeros_like(h)
    annihilated = []
    for l in range(l_hat):
        others = np.delete(h, l, axis=1)
        if others.shape[1]:
            coef, _, _, _ = np.linalg.lstsq(others, h[:, l], rcond=1e-10)
            cols[:, l] = h[:, l] - others @ coef
        else:
            cols[:, l] = h[:, l]
        if np.linalg.norm(cols[:, l]) <= 1e-9 * np.linalg.norm(h[:, l]):
            annihilated.append(l)
    if annihilated:
        warnings.warn(f"ZF projection annihilated paths {annihilated} "
                      "(shared angular bin)", stacklevel=2)
    return BeamformerSet(vectors=_normalize(cols, p_d),
                         delay_taps=psi.delay_taps, dopplers=psi.dopplers,
                         data_power=p_d, criterion="zf",
                         sample_period=psi.sample_period, annihilated=annihilated)


def mmse_beamformers(psi: SensedPsi, p_d: float, noise_power: float) -> BeamformerSet:
    """Regularized-inverse per-path design with loading L sigma^2 / P_d.

    Converges to the matched directions as sigma^2/P_d grows and to the
    zero-forcing projector as it vanishes.
    """
    h = psi.path_vectors()
    m, l_hat = h.shape
    reg = l_hat * noise_power / p_d
    cols = np.zeros_like(h)
    for l in range(l_hat):
        others = np.delete(h, l, axis=1)
        a = others @ others.conj().T + reg * np.eye(m)
        if reg > 0:
            cols[:, l] = np.linalg.solve(a, h[:, l])
        else:
            cols[:, l] = np.linalg.pinv(a, rcond=1e-12) @ h[:, l]
    return BeamformerSet(vectors=_normalize(cols, p_d),
                         delay_taps=psi.delay_taps, dopplers=psi.dopplers,
                         data_power=p_d, criterion="mmse",
                         sample_period=psi.sample_period)


def make_beamformers(criterion: str, psi: SensedPsi, p_d: float,
                     noise_power: float = 0.0) -> BeamformerSet:
    if criterion == "mrt":
        return mrt_beamformers(psi, p_d)
    if criterion == "zf":
        return zf_beamformers(psi, p_d)
    if criterion == "mmse":
        return mmse_beamformers(psi, p_d, noise_power)
    raise ValueError(f"unknown beamforming criterion: {criterion}")


def ddam_transmit(symbols, bf: BeamformerSet, horizon: int | None = None,
                  n0: int = 0) -> np.ndarray:
    """x[n] = sum_l f_l s[n - kappa_l] e^{-i 2 pi nu_l (n0 + n + p_l) T_s}.

    Symbols are zero outside their span; the default horizon covers the full
    delay spread of the pre-compensation schedule.
    """
    s = np.asarray(symbols, dtype=np.complex128).reshape(-1)
    kappas = bf.kappas
    if horizon is None:
        horizon = s.size + int(kappas.max())
    n = np.arange(horizon)
    x = np.zeros((horizon, bf.vectors.shape[0]), dtype=np.complex128)
    for l in range(bf.path_count):
        shifted = np.zeros(horizon, dtype=np.complex128)
        k = int(kappas[l])
        seg = min(s.size, horizon - k)
        if seg > 0:
            shifted[k:k + seg] = s[:seg]
        phase = -2.0 * np.pi * bf.dopplers[l] * (n0 + n + int(bf.delay_taps[l])) * bf.sample_period
        x += np.outer(shifted * np.exp(1j * phase), bf.vectors[:, l])
    return x


@dataclass
class PathComponent:
    """One true on-grid channel component: tap, vector, Doppler."""

    tap: int
    vector: np.ndarray
    doppler: float = 0.0


def true_path_components(psi: PathStateInfo, m: int, sample_period: float,
                         pulse: PulseShape | None = None,
                         delay_taps: int | None = None,
                         block_phase: float = 0.0) -> list:
    """Expand a true path state into discrete (tap, vector) components.

    With no pulse the delays must sit on the tap grid and each path
    contributes one component conj(alpha) a(theta). With a pulse, off-grid
    delays leak into every tap the pulse touches and each (path, tap) pair
    becomes its own component. block_phase rotates the gains to a specific
    coherence block (2 pi nu k T_c).
    """
    comps = []
    for l in range(psi.path_count):
        gain = np.conj(psi.gains[l] * np.exp(2j * np.pi * psi.dopplers[l] * block_phase))
        a = steering_vector(psi.normalized_aods[l], m)
        if pulse is None:
            tap_f = psi.delays[l] / sample_period
            tap = int(round(tap_f))
            if abs(tap_f - tap) > 1e-6:
                raise ValueError("off-grid delay requires a pulse shape")
            comps.append(PathComponent(tap=tap, vector=gain * a, doppler=psi.dopplers[l]))
        else:
            if delay_taps is None:
                raise ValueError("pulse expansion needs the tap count")
            center = psi.delays[l] / sample_period
            lo = max(0, int(math.floor(center)) - pulse.half_support)
            hi = min(delay_taps - 1, int(math.ceil(center)) + pulse.half_support)
            for q in range(lo, hi + 1):
                w = pulse.evaluate(q * sample_period - psi.delays[l], sample_period)
                if abs(w) > 1e-12:
                    comps.append(PathComponent(tap=q, vector=gain * w * a,
                                               doppler=psi.dopplers[l]))
    return comps


@dataclass
class DelayGroupMap:
    """Pairs (true component, precoded path) partitioned by combined tap."""

    groups: dict                 # tap -> list of (component index, path index)
    coefficients: dict           # tap -> complex sum of h^H f over the group
    selected_tap: int
    max_doppler_mismatch: float  # over the selected group

    @property
    def tap_range(self):
        taps = sorted(self.groups)
        return taps[0], taps[-1]


def delay_group_map(components, bf: BeamformerSet) -> DelayGroupMap:
    """Group every (component, path) pair by kappa_l' + p and pick the tap
    with the strongest coherent sum (ties to the smaller tap)."""
    kappas = bf.kappas
    groups: dict[int, list] = {}
    coeffs: dict[int, complex] = {}
    for ci, comp in enumerate(components):
        for l in range(bf.path_count):
            tap = int(kappas[l]) + comp.tap
            c = complex(np.vdot(comp.vector, bf.vectors[:, l]))
            groups.setdefault(tap, []).append((ci, l))
            coeffs[tap] = coeffs.get(tap, 0.0 + 0.0j) + c
    best_tap = min(coeffs, key=lambda t: (-abs(coeffs[t]), t))
    mismatch = max((abs(components[ci].doppler - bf.dopplers[l])
                    for ci, l in groups[best_tap]), default=0.0)
    return DelayGroupMap(groups=groups, coefficients=coeffs,
                         selected_tap=best_tap, max_doppler_mismatch=mismatch)


def min_sinr(gmap: DelayGroupMap, noise_power: float) -> float:
    """Worst-case SINR: desired power at the selected tap over the sum of all
    other taps' coherent powers plus noise."""
    desired = abs(gmap.coefficients[gmap.selected_tap]) ** 2
    interference = sum(abs(c) ** 2 for t, c in gmap.coefficients.items()
                       if t != gmap.selected_tap)
    return desired / (interference + noise_power)


def phase1_dam_sinr(block_psi: SensedPsi, true_components, p_d: float,
                    noise_power: float, criterion: str = "zf") -> float:
    """Per-block SINR of delay-only alignment: the block's sensed gains drive
    the precoder, no Doppler pre-rotation is applied."""
    psi = SensedPsi(gains=block_psi.gains, dopplers=np.zeros(block_psi.path_count),
                    delay_taps=block_psi.delay_taps, angle_bins=block_psi.angle_bins,
                    antennas=block_psi.antennas, sample_period=block_psi.sample_period)
    bf = make_beamformers(criterion, psi, p_d, noise_power)
    return min_sinr(delay_group_map(true_components, bf), noise_power)


@dataclass
class SpectralEfficiencyReport:
    rate: float                 # bits/s/Hz over the whole invariant window
    rate_approx: float          # the J << K approximation log2(1 + gamma)
    overhead_saving: int        # signalling samples saved vs per-block training


def spectral_efficiency(frame: FrameConfig, phase1_sinrs, phase2_sinr: float
                        ) -> SpectralEfficiencyReport:
    """Average rate of the two-phase frame: payload-only transmission during
    the training blocks, full blocks afterwards."""
    phase1_sinrs = list(phase1_sinrs)
    if len(phase1_sinrs) != frame.phase1_blocks:
        raise ValueError("need one phase-1 SINR per training block")
    k, n = frame.blocks_per_invariant, frame.samples_per_block
    phase1 = frame.payload_len * sum(math.log2(1.0 + g) for g in phase1_sinrs)
    phase2 = (k - frame.phase1_blocks) * n * math.log2(1.0 + phase2_sinr)
    return SpectralEfficiencyReport(
        rate=(phase1 + phase2) / (k * n),
        rate_approx=math.log2(1.0 + phase2_sinr),
        overhead_saving=frame.overhead_saving,
    )


def phase2_validity(gmap: DelayGroupMap, frame: FrameConfig) -> dict:
    """Residual-Doppler drift over the second phase; small values mean the
    aligned channel stays effectively static."""
    drift = gmap.max_doppler_mismatch * (frame.blocks_per_invariant - frame.phase1_blocks) \
        * frame.coherence_time
    return {"drift": drift, "static_ok": drift < PHASE2_VALIDITY_THRESHOLD}
