"""Pilot design, sensing-matrix construction, and joint sparse recovery.

The observation model ties everything together: stacking the conjugated
received pilot samples of one coherence block gives y = Phi h_tilde + z,
where h_tilde is the vectorized angular-delay channel (index g = p*M + r)
and column g of Phi correlates the pilot stream delayed by p taps with the
r-th beamspace grid vector. Blocks within one path invariant window share
the support of h_tilde, which the adaptive simultaneous-OMP recovery with
support refinement exploits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import CirBlock
from .numerics import dft_matrix

RESIDUAL_FLOOR = 1e-24  # fraction of initial power treated as exhausted


@dataclass
class PilotBlock:
    """Constant-modulus random-phase pilots for one coherence block."""

    block_index: int
    samples: np.ndarray       # (N_p, M), row n = pilot vector at time n
    training_power: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 2:
            raise ValueError("pilot samples must be (N_p, M)")

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def antennas(self) -> int:
        return self.samples.shape[1]


@dataclass
class SensingProblem:
    """One block's stacked observation and its sensing matrix."""

    observation: np.ndarray   # (N_p + P - 1,)
    matrix: np.ndarray        # (N_p + P - 1, M*P)
    antennas: int
    delay_taps: int
    block_index: int = 0

    def __post_init__(self):
        self.observation = np.asarray(self.observation, dtype=np.complex128).reshape(-1)
        self.matrix = np.asarray(self.matrix, dtype=np.complex128)
        if self.matrix.shape[0] != self.observation.size:
            raise ValueError("observation length does not match the sensing matrix")
        if self.matrix.shape[1] != self.antennas * self.delay_taps:
            raise ValueError("sensing matrix must have M*P columns")


@dataclass
class RecoveryConfig:
    """Knobs for the greedy recovery loops.

    eps_th is the inner residual-difference stop; sr_tol the minimum power
    ratio gain a refined path must bring; force_j pins the number of outer
    steps for experiments that sweep the block count.
    """

    eps_th: float = 0.02
    expected_paths: int = 12
    max_inner: int | None = None
    j_max: int = 16
    v_r: int = 4
    v_p: int = 4
    sr_tol: float = 1e-3
    refit: bool = False
    force_j: int | None = None
    pinv_tol: float = 1e-10
    stagnation_slack: float = 1e-6

    def __post_init__(self):
        if self.eps_th <= 0:
            raise ValueError("eps_th must be positive")
        for name, v in (("v_r", self.v_r), ("v_p", self.v_p)):
            if v < 2 or v % 2:
                raise ValueError(f"{name} must be even and >= 2")
        if self.j_max < 1:
            raise ValueError("j_max must be >= 1")

    @property
    def inner_cap(self) -> int:
        return self.max_inner if self.max_inner is not None else 4 * self.expected_paths


@dataclass
class RecoveryResult:
    """Joint-recovery output: refined per-block vectors plus per-path supports."""

    support: list                 # refined common support (sorted union of path supports)
    estimates: list               # final per-block vectors on `support` (refit if enabled)
    raw_estimates: list           # pre-refinement per-block vectors on `pre_refine_support`
    pre_refine_support: list      # SOMP-selected indices, selection order
    path_supports: list           # per-path index lists
    path_peaks: list              # per-path (delay_tap, angle_bin)
    path_count: int
    diagnostics: dict = field(default_factory=dict)


def generate_pilots(n_pilot: int, m: int, training_power: float, seed,
                    block_index: int = 0) -> PilotBlock:
    """Pilots with entries sqrt(P_t/M) e^{i phi}, phi i.i.d. uniform on [0, 2pi)."""
    if n_pilot < 1:
        raise ValueError("n_pilot must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_pilot, m))
    samples = np.sqrt(training_power / m) * np.exp(1j * phases)
    return PilotBlock(block_index=block_index, samples=samples, training_power=training_power)


def simulate_pilot_observation(cir: CirBlock, pilots: PilotBlock,
                               noise_power: float = 0.0, rng=None) -> np.ndarray:
    """Received pilot samples over one block under the frozen block CIR.

    y[n] = sum_p h_k^H[p] p_k[n-p] + z[n] for n = 0..N_p+P-2, pilots zero
    outside their span.
    """
    n_p = pilots.length
    p = cir.delay_taps
    n_total = n_p + p - 1
    inner = pilots.samples @ np.conj(cir.matrix)   # (N_p, P): h[p]^H p[n']
    y = np.zeros(n_total, dtype=np.complex128)
    for tap in range(p):
        y[tap:tap + n_p] += inner[:, tap]
    if noise_power > 0:
        if rng is None:
            raise ValueError("noise_power > 0 requires an rng")
        s = np.sqrt(noise_power / 2.0)
        y = y + rng.normal(scale=s, size=n_total) + 1j * rng.normal(scale=s, size=n_total)
    return y


def build_observation(rx, n_pilot: int, delay_taps: int) -> np.ndarray:
    """Stack received pilot samples into the recovery observation vector.

    The stack carries a conjugation so that y = Phi h_tilde holds with the
    sensing matrix below; length must be exactly N_p + P - 1.
    """
    rx = np.asarray(rx, dtype=np.complex128).reshape(-1)
    expected = n_pilot + delay_taps - 1
    if rx.size != expected:
        raise ValueError(f"expected {expected} samples, got {rx.size}")
    return np.conj(rx)


def build_sensing_matrix(pilots: PilotBlock, m: int, p: int) -> np.ndarray:
    """Sensing matrix with column g = p*M + r holding the lag-p pilot stream
    correlated against beamspace grid vector r."""
    if pilots.antennas != m:
        raise ValueError("pilot antenna count mismatch")
    n_p = pilots.length
    n_total = n_p + p - 1
    a = dft_matrix(m)
    q = np.conj(pilots.samples) @ a        # (N_p, M): p[n']^H a_tilde(r)
    phi = np.zeros((n_total, m * p), dtype=np.complex128)
    for tap in range(p):
        phi[tap:tap + n_p, tap * m:(tap + 1) * m] = q
    return phi


def make_sensing_problem(cir: CirBlock, pilots: PilotBlock, noise_power: float = 0.0,
                         rng=None) -> SensingProblem:
    rx = simulate_pilot_observation(cir, pilots, noise_power, rng)
    y = build_observation(rx, pilots.length, cir.delay_taps)
    phi = build_sensing_matrix(pilots, cir.antennas, cir.delay_taps)
    return SensingProblem(observation=y, matrix=phi, antennas=cir.antennas,
                          delay_taps=cir.delay_taps, block_index=cir.block_index)


def _joint_greedy(observations, matrices, cfg: RecoveryConfig, max_paths=None):
    """Shared SOMP core; returns (support order, estimates, diagnostics).

    Residuals are maintained through an incrementally grown orthonormal basis
    of the selected columns (one Gram-Schmidt step per iteration), which is
    the same projection the per-iteration least-squares refit would produce.
    The coefficients themselves are solved once at the end.
    """
    n_blocks = len(observations)
    n_cols = matrices[0].shape[1]
    n_rows = matrices[0].shape[0]
    residuals = [y.copy() for y in observations]
    init_power = sum(float(np.vdot(r, r).real) for r in residuals)
    diag = {"residual_history": [init_power], "eps_history": [], "rank_deficient": False}
    support: list[int] = []
    if init_power <= 0.0:
        return support, [np.zeros(n_cols, dtype=np.complex128) for _ in range(n_blocks)], diag

    cap = min(cfg.inner_cap, n_cols, n_rows)
    if max_paths is not None:
        cap = min(cap, max_paths)
    bases = [np.zeros((n_rows, 0), dtype=np.complex128) for _ in range(n_blocks)]
    while len(support) < cap:
        scores = np.zeros(n_cols)
        for k in range(n_blocks):
            scores += np.abs(matrices[k].conj().T @ residuals[k])
        g = int(np.argmax(scores))      # lowest index wins on ties
        support.append(g)
        new_power = 0.0
        diff_power = 0.0
        for k in range(n_blocks):
            c = matrices[k][:, g]
            v = c - bases[k] @ (bases[k].conj().T @ c)
            v -= bases[k] @ (bases[k].conj().T @ v)   # re-orthogonalize
            norm = np.linalg.norm(v)
            if norm <= cfg.pinv_tol * max(np.linalg.norm(c), 1e-300):
                diag["rank_deficient"] = True
            else:
                q = (v / norm).reshape(-1, 1)
                bases[k] = np.hstack([bases[k], q])
                step = q[:, 0] * (q[:, 0].conj() @ residuals[k])
                residuals[k] = residuals[k] - step
                diff_power += float(np.vdot(step, step).real)
            new_power += float(np.vdot(residuals[k], residuals[k]).real)
        diag["residual_history"].append(new_power)
        if new_power <= RESIDUAL_FLOOR * init_power:
            diag["eps_history"].append(float("inf"))
            break
        eps = diff_power / new_power
        diag["eps_history"].append(eps)
        if max_paths is None and eps <= cfg.eps_th:
            break

    estimates = []
    for k in range(n_blocks):
        h = np.zeros(n_cols, dtype=np.complex128)
        if support:
            cols = matrices[k][:, support]
            coef, _, rank, _ = np.linalg.lstsq(cols, observations[k], rcond=cfg.pinv_tol)
            if rank < len(support):
                diag["rank_deficient"] = True
            h[support] = coef
        estimates.append(h)
    return support, estimates, diag


def omp(y, phi, max_paths: int | None = None, cfg: RecoveryConfig | None = None):
    """Greedy single-block recovery; stops on the residual-difference rule
    unless max_paths pins the sparsity."""
    cfg = cfg or RecoveryConfig()
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    phi = np.asarray(phi, dtype=np.complex128)
    if phi.shape[1] < 1:
        raise ValueError("sensing matrix needs at least one column")
    support, estimates, _ = _joint_greedy([y], [phi], cfg, max_paths=max_paths)
    return estimates[0], support


def somp_joint(problems, cfg: RecoveryConfig):
    """Simultaneous OMP across blocks sharing one support.

    Selection sums per-block correlation magnitudes; estimates are per-block
    least squares on the common selected columns.
    """
    if not problems:
        raise ValueError("no sensing problems supplied")
    n_cols = problems[0].matrix.shape[1]
    if any(p.matrix.shape[1] != n_cols for p in problems):
        raise ValueError("all blocks must share M*P columns")
    obs = [p.observation for p in problems]
    mats = [p.matrix for p in problems]
    return _joint_greedy(obs, mats, cfg)


def support_refine(estimates, m: int, p: int, cfg: RecoveryConfig, problems=None):
    """Cluster leakage around successive peaks into per-path supports.

    Iteratively takes the strongest remaining bin of the block-0 estimate,
    claims its V_r x V_p wrapped neighborhood, and keeps the path while the
    retained-power ratio grows by at least sr_tol. Returns the refined
    per-block vectors (entry copies by default, per-block least squares on
    the union when refit is enabled and the system stays overdetermined),
    the per-path supports/peaks, and the accepted path count.
    """
    n_cols = m * p
    estimates = [np.asarray(h, dtype=np.complex128).reshape(-1) for h in estimates]
    total_power = sum(float(np.vdot(h, h).real) for h in estimates)
    diag = {"xi_history": [], "refit_applied": False}
    if total_power <= 0.0:
        refined = [np.zeros(n_cols, dtype=np.complex128) for _ in estimates]
        return refined, [], [], 0, diag

    h_t = estimates[0].copy()
    union: set[int] = set()
    path_supports: list[list[int]] = []
    path_peaks: list[tuple[int, int]] = []
    best_xi = 0.0
    max_iters = math.ceil(n_cols / (cfg.v_r * cfg.v_p))
    for _ in range(max_iters):
        mags = np.abs(h_t)
        g = int(np.argmax(mags))
        if mags[g] == 0.0:
            break
        p_hat, r_hat = g // m, g % m
        r_nbhd = np.mod(np.arange(r_hat - cfg.v_r // 2, r_hat + (cfg.v_r - 2) // 2 + 1), m)
        p_nbhd = np.mod(np.arange(p_hat - cfg.v_p // 2, p_hat + (cfg.v_p - 2) // 2 + 1), p)
        theta_l = sorted({int(pp) * m + int(rr) for rr in r_nbhd for pp in p_nbhd})
        trial = union | set(theta_l)
        idx = np.fromiter(trial, dtype=int)
        xi = sum(float(np.vdot(h[idx], h[idx]).real) for h in estimates) / total_power
        if xi - best_xi < cfg.sr_tol:
            break
        union = trial
        best_xi = xi
        diag["xi_history"].append(xi)
        path_supports.append(theta_l)
        path_peaks.append((p_hat, r_hat))
        h_t[theta_l] = 0.0

    keep = sorted(union)
    refined = []
    for h in estimates:
        out = np.zeros(n_cols, dtype=np.complex128)
        out[keep] = h[keep]
        refined.append(out)
    if cfg.refit and problems is not None and keep:
        n_rows = problems[0].matrix.shape[0]
        if len(keep) <= n_rows:    # refit only while the fit stays overdetermined
            refined = []
            for prob in problems:
                cols = prob.matrix[:, keep]
                coef, _, _, _ = np.linalg.lstsq(cols, prob.observation, rcond=cfg.pinv_tol)
                out = np.zeros(n_cols, dtype=np.complex128)
                out[keep] = coef
                refined.append(out)
            diag["refit_applied"] = True
    return refined, path_supports, path_peaks, len(path_supports), diag


def asomp_sr(block_stream, cfg: RecoveryConfig, hook=None) -> RecoveryResult:
    """Adaptive SOMP with support refinement over a stream of blocks.

    Pulls one more coherence block per outer step, reruns the joint recovery
    plus refinement, and stops once the relative change between consecutive
    refined estimates stops decreasing (or j_max / the stream runs out).
    force_j pins the number of outer steps instead. Returns the step with
    the smallest recovery difference; ties go to the earlier step.
    """
    it = iter(block_stream)
    blocks: list[SensingProblem] = []
    per_step = []        # (support, raw_estimates, somp_diag, refined, paths, peaks, count, sr_diag)
    theta_hist: list[float] = []
    exhausted = False
    target = cfg.force_j if cfg.force_j is not None else cfg.j_max
    u = 0
    while u < target:
        try:
            blocks.append(next(it))
        except StopIteration:
            exhausted = True
            break
        u += 1
        support, raw, somp_diag = somp_joint(blocks, cfg)
        refined, paths, peaks, count, sr_diag = support_refine(
            raw, blocks[0].antennas, blocks[0].delay_taps, cfg, problems=blocks)
        per_step.append((support, raw, somp_diag, refined, paths, peaks, count, sr_diag))
        if hook is not None:
            hook(u, blocks, refined, paths, peaks, count)
        if u == 1:
            theta_hist.append(float("inf"))
        else:
            prev_refined = per_step[u - 2][3]
            j_prev = u - 1
            num = sum(float(np.vdot(refined[k] - prev_refined[k],
                                    refined[k] - prev_refined[k]).real)
                      for k in range(j_prev))
            den = sum(float(np.vdot(refined[k], refined[k]).real) for k in range(j_prev))
            theta_hist.append(num / den if den > 0 else 0.0)
            if cfg.force_j is None and theta_hist[-1] >= theta_hist[-2] * (1.0 - cfg.stagnation_slack):
                break

    if not per_step:
        raise ValueError("block stream supplied no sensing problems")
    if cfg.force_j is not None:
        best_u = len(per_step)
    else:
        finite = [(theta, i + 1) for i, theta in enumerate(theta_hist) if math.isfinite(theta)]
        best_u = min(finite)[1] if finite else len(per_step)
    support, raw, somp_diag, refined, paths, peaks, count, sr_diag = per_step[best_u - 1]
    diagnostics = {
        "blocks_used": best_u,
        "outer_steps": len(per_step),
        "theta_history": theta_hist,
        "residual_history": somp_diag["residual_history"],
        "eps_history": somp_diag["eps_history"],
        "rank_deficient": somp_diag["rank_deficient"],
        "refit_applied": sr_diag["refit_applied"],
        "xi_history": sr_diag["xi_history"],
        "stream_exhausted": exhausted,
    }
    union = sorted({g for s in paths for g in s})
    return RecoveryResult(
        support=union,
        estimates=refined,
        raw_estimates=raw,
        pre_refine_support=support,
        path_supports=paths,
        path_peaks=peaks,
        path_count=count,
        diagnostics=diagnostics,
    )


def l0_oracle(y, phi, sparsity: int, budget: int = 10**6):
    """Exhaustive best-support search; ties resolve to the lexicographically
    first support. Only for desk-scale validation."""
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    phi = np.asarray(phi, dtype=np.complex128)
    n_cols = phi.shape[1]
    if math.comb(n_cols, sparsity) > budget:
        raise ValueError("combinatorial budget exceeded")
    best_support = None
    best_res = np.inf
    for support in itertools.combinations(range(n_cols), sparsity):
        cols = phi[:, support]
        coef, _, _, _ = np.linalg.lstsq(cols, y, rcond=None)
        r = y - cols @ coef
        res = float(np.vdot(r, r).real)
        if res < best_res:
            best_res = res
            best_support = support
    return list(best_support)


def nmse(estimates, truths) -> float:
    """Mean over blocks of ||h_hat - h||^2 / ||h||^2."""
    if len(estimates) != len(truths):
        raise ValueError("estimate/truth block counts differ")
    total = 0.0
    for h_hat, h in zip(estimates, truths):
        h_hat = np.asarray(h_hat, dtype=np.complex128).reshape(-1)
        h = np.asarray(h, dtype=np.complex128).reshape(-1)
        denom = float(np.vdot(h, h).real)
        if denom <= 0.0:
            raise ValueError("zero-norm truth block")
        diff = h_hat - h
        total += float(np.vdot(diff, diff).real) / denom
    return total / len(estimates)
