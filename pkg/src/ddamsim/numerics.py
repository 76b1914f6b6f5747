"""Complex linear-algebra kernel shared by the channel, sensing, and precoding code.

Everything here is a thin, contract-checked layer over numpy: dense complex
matrices, an SVD-based pseudo-inverse with a relative singular-value cutoff,
and a block-wise applicator for (I_P kron A) products that never materializes
the Kronecker factor.
"""

from __future__ import annotations

import numpy as np

DEFAULT_PINV_TOL = 1e-10


def _as_complex_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _as_complex_vector(x, name: str = "vector") -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def dft_matrix(m: int) -> np.ndarray:
    """Unitary beamspace DFT matrix with half-shifted column frequencies.

    Column r has entries (1/sqrt(M)) * exp(i 2 pi (r - M/2) m' / M) for
    m' = 0..M-1, so the column grid spans normalized angles in [-1/2, 1/2).
    """
    if m < 1:
        raise ValueError("dft_matrix requires M >= 1")
    rows = np.arange(m).reshape(-1, 1)
    freqs = (np.arange(m) - m / 2.0).reshape(1, -1)
    return np.exp(2j * np.pi * rows * freqs / m) / np.sqrt(m)


def pseudo_inverse(a, tol: float = DEFAULT_PINV_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse; singular values below tol*sigma_max are zeroed."""
    a = _as_complex_matrix(a)
    if tol <= 0:
        raise ValueError("tol must be positive")
    return np.linalg.pinv(a, rcond=tol)


def kron_identity_apply(a, p: int, x) -> np.ndarray:
    """Apply (I_P kron A) to x without building the MP x MP matrix.

    x is read as P stacked blocks of length cols(A); block b of the result is
    A @ x_b.
    """
    a = _as_complex_matrix(a)
    x = _as_complex_vector(x)
    if p < 1:
        raise ValueError("P must be >= 1")
    if x.size != p * a.shape[1]:
        raise ValueError(f"length(x)={x.size} does not match P*cols(A)={p * a.shape[1]}")
    blocks = x.reshape(p, a.shape[1])
    return (blocks @ a.T).reshape(-1)
