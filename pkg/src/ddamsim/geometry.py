"""Planar bi-static scene geometry and the dual-timescale bookkeeping.

A Scene holds the base station (fixed at the origin), a user terminal, and a
set of point scatterers, all in the azimuth plane. From it we derive per-path
state (gain, Doppler, delay, departure angle) via the bi-static radar
equation, and the two timescales that drive the frame design: the channel
coherence time and the much longer path invariant time.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

# Radio-engineering convention; the worked timescale numbers in the test
# suite (e.g. the 20 ms golden value) assume this rounding of c.
SPEED_OF_LIGHT = 3.0e8

# Clarke-model constant sqrt(9/(16*pi)) used by the default coherence-time mode.
CLARKE_XI = math.sqrt(9.0 / (16.0 * math.pi))

# Eq.-form switch: below this antenna count the exact (M+2) denominator is used.
EXACT_FORM_MAX_M = 32


def _vec2(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != 2 or not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be a finite 2-D vector")
    return v


@dataclass
class Scatterer:
    """Point scatterer with constant velocity and a radar cross section (m^2)."""

    position: np.ndarray
    velocity: np.ndarray
    rcs: float = 1.0

    def __post_init__(self):
        self.position = _vec2(self.position, "position")
        self.velocity = _vec2(self.velocity, "velocity")
        if self.rcs <= 0:
            raise ValueError("rcs must be positive")
        if np.linalg.norm(self.position) <= 0:
            raise ValueError("scatterer must not be co-located with the BS")


@dataclass
class Scene:
    """Physical ground truth: BS at the origin, one UE, L scatterers.

    Treated as immutable after construction; propagate_scene returns a copy.
    """

    ue_position: np.ndarray
    ue_velocity: np.ndarray
    scatterers: list
    carrier_frequency: float
    bandwidth: float
    antennas: int
    bs_position: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.ue_position = _vec2(self.ue_position, "ue_position")
        self.ue_velocity = _vec2(self.ue_velocity, "ue_velocity")
        self.bs_position = _vec2(self.bs_position, "bs_position")
        if np.any(self.bs_position != 0.0):
            raise ValueError("BS is fixed at the origin")
        if self.antennas < 1:
            raise ValueError("antennas must be >= 1")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.carrier_frequency <= self.bandwidth:
            raise ValueError("carrier frequency must exceed the bandwidth")
        if np.linalg.norm(self.ue_position) <= 0:
            raise ValueError("UE must not be co-located with the BS")
        if not self.scatterers:
            raise ValueError("scene needs at least one scatterer")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def sample_period(self) -> float:
        return 1.0 / self.bandwidth


@dataclass
class PathStateInfo:
    """Per-path {gain, Doppler, delay, AoD}; the quantity sensing estimates."""

    gains: np.ndarray      # complex alpha_l
    dopplers: np.ndarray   # Hz
    delays: np.ndarray     # s
    aods: np.ndarray       # rad, departure angle from array broadside

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=np.complex128).reshape(-1)
        self.dopplers = np.asarray(self.dopplers, dtype=float).reshape(-1)
        self.delays = np.asarray(self.delays, dtype=float).reshape(-1)
        self.aods = np.asarray(self.aods, dtype=float).reshape(-1)
        n = self.gains.size
        if n < 1:
            raise ValueError("at least one path is required")
        if not (self.dopplers.size == self.delays.size == self.aods.size == n):
            raise ValueError("per-path arrays must share one length")
        for arr, name in ((self.gains, "gains"), (self.dopplers, "dopplers"),
                          (self.delays, "delays"), (self.aods, "aods")):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contain non-finite values")
        if np.any(self.delays < 0):
            raise ValueError("delays must be non-negative")
        if np.any(np.abs(np.sin(self.aods)) > 1.0 + 1e-12):
            raise ValueError("invalid departure angles")

    @property
    def path_count(self) -> int:
        return self.gains.size

    @property
    def normalized_aods(self) -> np.ndarray:
        """theta_bar = sin(theta)/2, in [-1/2, 1/2) for theta in [-pi/2, pi/2)."""
        return 0.5 * np.sin(self.aods)


@dataclass
class TimescaleReport:
    """Coherence time, path invariant time, and their block ratio."""

    coherence_time: float
    path_invariant_time: float
    blocks_per_invariant: int
    xi: float
    far_field_ok: bool = True
    far_field_bound: float = 0.0
    invariant_time_lower_bound: float = 0.0

    def __post_init__(self):
        if self.path_invariant_time < self.coherence_time:
            raise ValueError("path invariant time must be >= coherence time")
        if self.blocks_per_invariant < 1:
            raise ValueError("blocks_per_invariant must be >= 1")
        if not (0.0 < self.xi <= 1.0):
            raise ValueError("xi must be in (0, 1]")


def derive_path_parameters(scene: Scene) -> PathStateInfo:
    """Trace each BS -> scatterer -> UE path into {gain, Doppler, delay, AoD}.

    The gain follows the bi-static radar equation with the carrier phase
    exp(-i 2 pi d/lambda); the Doppler is the instantaneous rate of change of
    the total two-leg path length, evaluated analytically at t=0, divided by
    the wavelength (positive when the path shortens).
    """
    lam = scene.wavelength
    gains, dopplers, delays, aods = [], [], [], []
    for sc in scene.scatterers:
        r_s = float(np.linalg.norm(sc.position))
        leg_su = scene.ue_position - sc.position
        r_su = float(np.linalg.norm(leg_su))
        if r_s <= 0 or r_su <= 0:
            raise ValueError("zero-length propagation leg")
        d = r_s + r_su
        # range rate of each leg; bistatic velocity is minus their sum
        u_bs = sc.position / r_s
        dr_s = float(u_bs @ sc.velocity)
        dr_su = float((leg_su / r_su) @ (scene.ue_velocity - sc.velocity))
        v_bi = -(dr_s + dr_su)

        beta_over_d = math.sqrt(lam**2 * sc.rcs / ((4.0 * math.pi) ** 3 * r_s**2 * r_su**2))
        gains.append(beta_over_d * np.exp(-2j * np.pi * d / lam))
        dopplers.append(v_bi / lam)
        delays.append(d / SPEED_OF_LIGHT)
        # AoD measured from the +x axis of the ULA broadside convention
        aods.append(math.atan2(sc.position[1], sc.position[0]))
    return PathStateInfo(np.array(gains), np.array(dopplers), np.array(delays), np.array(aods))


def path_invariant_time(v_max: float, bandwidth: float, antennas: int, r_min: float) -> float:
    """Longest horizon over which delays and angles stay within one resolution bin.

    min{c / (3 v B), 2 R_min / (v (M+2))}; the (M+2) denominator is replaced
    by M once M >= 32 where the large-array approximation is accurate.
    """
    if v_max <= 0 or bandwidth <= 0 or antennas < 1 or r_min <= 0:
        raise ValueError("all arguments must be positive")
    delay_term = SPEED_OF_LIGHT / (3.0 * v_max * bandwidth)
    denom = antennas if antennas >= EXACT_FORM_MAX_M else antennas + 2
    angle_term = 2.0 * r_min / (v_max * denom)
    return min(delay_term, angle_term)


def coherence_time(nu_max: float, xi: float | None = None) -> float:
    """Coherence time xi/nu_max; xi=None selects the Clarke-style default."""
    if nu_max <= 0:
        raise ValueError("nu_max must be positive")
    if xi is None:
        xi = CLARKE_XI
    if not (0.0 < xi <= 1.0):
        raise ValueError("xi must be in (0, 1]")
    return xi / nu_max


def variation_bounds(v_max: float, r_min: float, horizon: float) -> dict:
    """Worst-case delay and normalized-AoD drift over a horizon T.

    delta_tau_max = 3 v T / c; delta_theta_bar_max = v T / (2 (R_min - v T)).
    Degenerates (and raises) once v*T reaches R_min.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if v_max * horizon >= r_min:
        raise ValueError("bound degenerate: v_max * T must stay below R_min")
    return {
        "delta_tau_max": 3.0 * v_max * horizon / SPEED_OF_LIGHT,
        "delta_theta_bar_max": v_max * horizon / (2.0 * (r_min - v_max * horizon)),
    }


def propagate_scene(scene: Scene, t: float) -> Scene:
    """Advance UE and scatterers along their constant velocities by t seconds."""
    if t < 0:
        raise ValueError("t must be non-negative")
    moved = [Scatterer(sc.position + sc.velocity * t, sc.velocity.copy(), sc.rcs)
             for sc in scene.scatterers]
    return Scene(
        ue_position=scene.ue_position + scene.ue_velocity * t,
        ue_velocity=scene.ue_velocity.copy(),
        scatterers=moved,
        carrier_frequency=scene.carrier_frequency,
        bandwidth=scene.bandwidth,
        antennas=scene.antennas,
    )


def timescale_report(v_max: float, nu_max: float, bandwidth: float, antennas: int,
                     r_min: float, carrier_frequency: float,
                     xi: float | None = None) -> TimescaleReport:
    """Bundle both timescales, check the far-field premise, and report K.

    In the far field R_min >= 2 D^2 / lambda with aperture D = lambda M / 2;
    violating that does not stop the simulation but is recorded (and warned)
    because the planar-wave steering model is then optimistic. The invariant
    time is reported alongside its far-field lower bound rather than choosing
    between the two forms.
    """
    t_c = coherence_time(nu_max, xi)
    t_bar = path_invariant_time(v_max, bandwidth, antennas, r_min)
    lam = SPEED_OF_LIGHT / carrier_frequency
    aperture = 0.5 * lam * antennas
    far_field_bound = 2.0 * aperture**2 / lam
    far_field_ok = r_min >= far_field_bound
    if not far_field_ok:
        warnings.warn(
            f"R_min={r_min:.3g} m is inside the far-field bound "
            f"2D^2/lambda={far_field_bound:.3g} m; steering model is optimistic",
            stacklevel=2,
        )
    lower = min(SPEED_OF_LIGHT / (3.0 * v_max * bandwidth), lam * antennas / v_max)
    if t_bar < t_c:
        t_bar = t_c  # pathological configs (huge nu_max); keep the report valid
    return TimescaleReport(
        coherence_time=t_c,
        path_invariant_time=t_bar,
        blocks_per_invariant=int(math.ceil(t_bar / t_c)),
        xi=CLARKE_XI if xi is None else xi,
        far_field_ok=far_field_ok,
        far_field_bound=far_field_bound,
        invariant_time_lower_bound=lower,
    )
