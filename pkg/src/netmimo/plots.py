"""Figure rendering for sweep and convergence reports.

CSV stays the data contract; these helpers draw the standard companion
figures (BER and MSE versus SNR per scheme, worst-MSE versus iteration)
next to the delimited output when plotting is requested.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_MARKERS = {"GP": "s", "AGP": "o", "SIP": "^", "ST": "v"}


def _series_by_scheme(rows):
    series: dict[str, list] = {}
    for r in rows:
        series.setdefault(f"{r.scheme} d={r.d}" if r.feedback == "codebook" else r.scheme, []).append(r)
    return series


def render_sweep_figures(rows, csv_path: str | Path) -> list[Path]:
    """BER and mean-max-MSE curves next to the CSV file; returns the paths."""
    csv_path = Path(csv_path)
    written = []
    panels = [
        ("ber", "Average BER", lambda r: r.ber, True),
        ("max_mse", "Mean of max sub-stream MSE", lambda r: r.mean_max_mse, True),
        ("mean_mse", "Mean MSE", lambda r: r.mean_mse, True),
    ]
    for stem, label, getter, logy in panels:
        fig, ax = plt.subplots(figsize=(6.0, 4.2))
        for name, cell_rows in _series_by_scheme(rows).items():
            cell_rows = sorted(cell_rows, key=lambda r: r.snr_db)
            x = [r.snr_db for r in cell_rows]
            y = [getter(r) for r in cell_rows]
            marker = _MARKERS.get(name.split()[0], "x")
            ax.plot(x, y, marker=marker, label=name)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel("SINR (dB)")
        ax.set_ylabel(label)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        fig.tight_layout()
        out = csv_path.with_name(csv_path.stem + f"_{stem}.png")
        fig.savefig(out, dpi=150)
        plt.close(fig)
        written.append(out)
    return written


def render_trace_figure(trace: list[tuple[int, float]], csv_path: str | Path) -> Path:
    """Worst-stream MSE versus iteration for the helper refinement loop."""
    csv_path = Path(csv_path)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot([n for n, _ in trace], [m for _, m in trace], marker=".")
    ax.set_xlabel("Iteration")
    ax.set_ylabel("Mean of max sub-stream MSE")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = csv_path.with_name(csv_path.stem + "_convergence.png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
