import numpy as np
import pytest

from ddamsim import PathStateInfo, make_pulse

T_S = 1e-8          # 100 MHz grid
BANDWIDTH = 1e8


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


def on_grid_psi(rng, m, p_taps, paths, nu_span=0.0, tap_lo=1, gain_scale=1.0):
    """Random paths sitting exactly on the tap/bin grids, distinct bins."""
    taps = rng.choice(np.arange(tap_lo, p_taps - 1), size=paths, replace=False)
    bins = rng.choice(m, size=paths, replace=False)
    gains = gain_scale * (rng.normal(size=paths) + 1j * rng.normal(size=paths)) / np.sqrt(2)
    dops = rng.uniform(-nu_span, nu_span, size=paths) if nu_span else np.zeros(paths)
    return PathStateInfo(gains=gains, dopplers=dops, delays=taps * T_S,
                         aods=np.arcsin(2.0 * (bins - m / 2.0) / m))


def off_grid_psi(rng, m, p_taps, paths, nu_span=0.0, tap_lo=9.0, tap_hi=None):
    tap_hi = (p_taps - 9.0) if tap_hi is None else tap_hi
    taps = rng.uniform(tap_lo, tap_hi, size=paths)
    theta_bars = rng.uniform(-0.45, 0.45, size=paths)
    gains = (rng.normal(size=paths) + 1j * rng.normal(size=paths)) / np.sqrt(2)
    dops = rng.uniform(-nu_span, nu_span, size=paths) if nu_span else np.zeros(paths)
    return PathStateInfo(gains=gains, dopplers=dops, delays=taps * T_S,
                         aods=np.arcsin(2.0 * theta_bars))


def psi_bins(psi, m):
    """(tap, bin) pairs of an on-grid path state."""
    taps = np.round(psi.delays / T_S).astype(int)
    bins = np.round(psi.normalized_aods * m + m / 2.0).astype(int)
    return list(zip(taps.tolist(), bins.tolist()))


def flat_indices(psi, m):
    return sorted(t * m + b for t, b in psi_bins(psi, m))


@pytest.fixture
def pulse():
    return make_pulse()
