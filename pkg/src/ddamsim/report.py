"""Result emission: delimited tables, the sidecar manifest, and rendered
figures next to them.

CSV bytes are a pure function of the rows (floats via repr, stable column
order), so identical configs and seeds reproduce identical files; wall time
and versions live only in the manifest.
"""

from __future__ import annotations

import json
import platform
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import __version__


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, rows, columns=None) -> None:
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    if columns is None:
        columns = list(rows[0].keys())
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(c, "")) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


def write_manifest(path, cfg, wall_time_s: float, command: str) -> None:
    write_json(path, {
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "command": command,
        "wall_time_s": wall_time_s,
        "versions": {
            "ddamsim": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "argv": sys.argv[1:],
        "config": cfg.to_dict(),
    })


def record_rows(record, axis_name=None):
    """Flatten a ResultRecord into trial rows and one aggregate row."""
    trials = []
    for row in record.rows:
        out = dict(row)
        if axis_name is not None:
            out = {axis_name: record.axis_value, **out}
        trials.append(out)
    agg = dict(record.aggregate)
    if axis_name is not None:
        agg = {axis_name: record.axis_value, **agg}
    return trials, agg


# ----------------------------------------------------------------------------
# figures
# ----------------------------------------------------------------------------

_METRIC_FAMILIES = (
    ("nmse", ("nmse_omp", "nmse_somp", "nmse_asomp_sr"), "NMSE", True),
    ("rate", ("rate_mrt", "rate_zf", "rate_mmse", "rate_ofdm"), "rate (bits/s/Hz)", False),
    ("doppler", ("doppler_error_hz",), "Doppler error (Hz)", True),
    ("sinr", ("sinr_db_mrt", "sinr_db_zf", "sinr_db_mmse"), "worst-case SINR (dB)", False),
)


def render_sweep_figures(aggregates, axis: str, outdir) -> list:
    """One PNG per metric family present in the aggregate rows."""
    outdir = Path(outdir)
    written = []
    xs = [row[axis] for row in aggregates]
    for name, cols, ylabel, logy in _METRIC_FAMILIES:
        present = [c for c in cols if c in aggregates[0]]
        if not present:
            continue
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for c in present:
            ys = [row[c] for row in aggregates]
            ax.plot(xs, ys, marker="o", label=c)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(axis)
        ax.set_ylabel(ylabel)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = outdir / f"{name}_vs_{axis}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def render_papr_figure(study: dict, outdir) -> Path:
    outdir = Path(outdir)
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    thr = study["thresholds_db"]
    for name, curve in study["curves"].items():
        ax.semilogy(thr, np.maximum(curve, 1e-6), label=name)
    ax.axhline(1e-2, color="gray", lw=0.8, ls="--")
    ax.set_xlabel("PAPR threshold (dB)")
    ax.set_ylabel("CCDF")
    ax.set_ylim(1e-4, 1.1)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = outdir / "papr_ccdf.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_sensing_map(truth_mag, estimate_mag, outdir) -> Path:
    """Side-by-side angular-delay magnitude maps (truth vs estimate)."""
    outdir = Path(outdir)
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.4), sharey=True)
    for ax, mat, title in zip(axes, (truth_mag, estimate_mag), ("truth", "estimate")):
        floor = max(np.max(mat), 1e-30) * 1e-4
        img = ax.imshow(20 * np.log10(np.maximum(mat, floor)), aspect="auto",
                        origin="lower", cmap="viridis")
        ax.set_title(title)
        ax.set_xlabel("delay tap")
    axes[0].set_ylabel("angular bin")
    fig.colorbar(img, ax=axes, shrink=0.85, label="dB")
    path = outdir / "sensing_map.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
