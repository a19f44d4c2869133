"""CSV tables, a JSON run manifest and optional SVG plots for experiment results."""

from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import numpy as np

from .. import __version__
from .experiments import ExperimentResult

CSV_NAMES = {"MSE_curve": "mse_curve.csv", "SER_curve": "ser_curve.csv"}


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows(res: ExperimentResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(res.columns)
        for row in res.rows:
            writer.writerow([_fmt(row[c]) for c in res.columns])


def read_rows(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_manifest(res: ExperimentResult, path: Path, files: list[str]) -> None:
    manifest = {
        "kind": res.kind,
        "config": res.config.to_dict() if res.config is not None else None,
        "config_hash": res.config_hash,
        "tool_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "wall_time_s": res.wall_time,
        "files": files,
    }
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def _plot_mse(res: ExperimentResult, out_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    families = sorted({(r["snr_db"], r["channel_draw"]) for r in res.rows})
    designs = list(dict.fromkeys(r["design"] for r in res.rows))
    for snr, draw in families:
        fig, ax = plt.subplots(figsize=(7, 4))
        for k, name in enumerate(designs):
            sel = [r for r in res.rows if r["design"] == name and r["snr_db"] == snr and r["channel_draw"] == draw]
            m = [r["subcarrier"] for r in sel]
            color = f"C{k}"
            ax.plot(m, [r["mse_theory_db"] for r in sel], color=color, label=f"{name} theory")
            ax.plot(m, [r["mse_sim_db"] for r in sel], "x", color=color, ms=4, label=f"{name} simulated")
        ax.set_xlabel("subcarrier index m")
        ax.set_ylabel("MSE [dB]")
        ax.set_title(f"SNR {snr:g} dB, channel draw {draw}")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        path = out_dir / f"mse_curve_snr{snr:g}_draw{draw}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths


def _plot_ser(res: ExperimentResult, out_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    designs = list(dict.fromkeys(r["design"] for r in res.rows))
    for name in designs:
        sel = [r for r in res.rows if r["design"] == name and np.isfinite(r["snr_db"]) and r["ser"] > 0]
        ax.errorbar([r["snr_db"] for r in sel], [r["ser"] for r in sel], yerr=[r["ci95"] for r in sel], marker="o", capsize=3, label=name)
    ax.set_yscale("log")
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("SER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    path = out_dir / "ser_curve.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return [path]


def emit_report(res: ExperimentResult, out_dir: str | Path, plot: bool = False) -> list[Path]:
    """Write the result CSV, ``manifest.json`` and, with ``plot``, SVG figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / CSV_NAMES[res.kind]
    write_rows(res, csv_path)
    written = [csv_path]
    if plot:
        written += _plot_mse(res, out_dir) if res.kind == "MSE_curve" else _plot_ser(res, out_dir)
    manifest = out_dir / "manifest.json"
    write_manifest(res, manifest, [p.name for p in written])
    return written + [manifest]
