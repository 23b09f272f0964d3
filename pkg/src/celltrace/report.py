"""Render figures from an experiment run directory, next to its CSV files.

Consumes the delimited outputs of the simulate command (scatter.csv,
counts.csv, covariance.csv, scenarios.csv) and writes PNGs alongside them;
the CSVs stay the canonical record.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

MAX_SCATTER_TRIALS = 4

_ROLE_LABELS = {"all": "any phone", "smart": "smartphone only"}


def _read_csv(path: Path) -> list[dict[str, str]]:
    with path.open("r", newline="") as fh:
        return list(csv.DictReader(fh))


def _scatter_figure(rows: list[dict[str, str]], role: str, out_path: Path) -> None:
    trials = sorted({int(r["trial"]) for r in rows if r["role"] == role})
    trials = trials[:MAX_SCATTER_TRIALS]
    if not trials:
        return
    ncols = min(2, len(trials))
    nrows = (len(trials) + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(5 * ncols, 5 * nrows),
                             squeeze=False)
    for ax in axes.flat:
        ax.set_visible(False)
    for i, trial in enumerate(trials):
        ax = axes[i // ncols][i % ncols]
        ax.set_visible(True)
        healthy_x, healthy_y, pos_x, pos_y = [], [], [], []
        for r in rows:
            if r["role"] != role or int(r["trial"]) != trial:
                continue
            if r["infected"] == "1":
                pos_x.append(float(r["x"]))
                pos_y.append(float(r["y"]))
            else:
                healthy_x.append(float(r["x"]))
                healthy_y.append(float(r["y"]))
        ax.scatter(healthy_x, healthy_y, s=12, color="tab:blue", label="not infected")
        ax.scatter(pos_x, pos_y, s=16, color="tab:red", label="infected")
        circle = plt.Circle((0, 0), 1.0, fill=False, color="gray", linewidth=0.8)
        ax.add_patch(circle)
        ax.set_xlim(-1.1, 1.1)
        ax.set_ylim(-1.1, 1.1)
        ax.set_aspect("equal")
        ax.set_title(f"trial {trial}")
        if i == 0:
            ax.legend(loc="upper right", fontsize=8)
    fig.suptitle(f"Population scatter ({_ROLE_LABELS.get(role, role)})")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def _counts_figure(rows: list[dict[str, str]], out_path: Path) -> None:
    trials = [int(r["trial"]) for r in rows]
    count_all = [int(r["count_all"]) for r in rows]
    count_smart = [int(r["count_smart"]) for r in rows]
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(6, len(trials) * 0.9), 4.5))
    ax.bar([t - width / 2 for t in trials], count_all, width, label="any phone",
           color="tab:orange")
    ax.bar([t + width / 2 for t in trials], count_smart, width,
           label="smartphone only", color="tab:blue")
    ax.set_xlabel("trial")
    ax.set_ylabel("traced contacts")
    ax.set_title("Contact count per trial")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def _covariance_figure(rows: list[dict[str, str]], out_path: Path) -> None:
    trials, cov_smart, cov_all = [], [], []
    for r in rows:
        if r["cov_smart"] and r["cov_all"]:
            trials.append(int(r["trial"]))
            cov_smart.append(float(r["cov_smart"]))
            cov_all.append(float(r["cov_all"]))
    if not trials:
        return
    fig, ax = plt.subplots(figsize=(max(6, len(trials) * 0.9), 4.5))
    ax.plot(trials, cov_smart, "o-", label="smartphone only", color="tab:blue")
    ax.plot(trials, cov_all, "s-", label="any phone", color="tab:orange")
    ax.set_xlabel("trial")
    ax.set_ylabel("|cov(x, y)|")
    ax.set_title("Coordinate covariance per trial")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def _scenario_figures(rows: list[dict[str, str]], counts_path: Path,
                      pct_path: Path) -> None:
    countries = [r["country"] for r in rows]
    mean_all = [float(r["mean_count_all"]) for r in rows]
    mean_smart = [float(r["mean_count_smart"]) for r in rows]
    xs = range(len(countries))
    width = 0.38

    fig, ax = plt.subplots(figsize=(max(6, len(countries) * 1.6), 4.5))
    ax.bar([x - width / 2 for x in xs], mean_all, width, label="any phone",
           color="tab:orange")
    ax.bar([x + width / 2 for x in xs], mean_smart, width,
           label="smartphone only", color="tab:blue")
    ax.set_xticks(list(xs), countries)
    ax.set_ylabel("mean traced contacts")
    ax.set_title("Country comparison: mean contact count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(counts_path, dpi=120)
    plt.close(fig)

    pct = [float(r["mean_pct_change"]) if r["mean_pct_change"] else 0.0 for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, len(countries) * 1.6), 4.5))
    ax.bar(list(xs), pct, 0.5, color="tab:green")
    ax.set_xticks(list(xs), countries)
    ax.set_ylabel("% change vs smartphone-only")
    ax.set_title("Country comparison: percentage change of mean counts")
    fig.tight_layout()
    fig.savefig(pct_path, dpi=120)
    plt.close(fig)


def render_run_figures(run_dir: str | Path) -> list[Path]:
    """Render every figure the run directory's CSVs support; returns paths."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory not found: {run_dir}")
    written: list[Path] = []

    scatter_csv = run_dir / "scatter.csv"
    if scatter_csv.exists():
        rows = _read_csv(scatter_csv)
        for role in ("smart", "all"):
            out = run_dir / f"scatter_{role}.png"
            _scatter_figure(rows, role, out)
            if out.exists():
                written.append(out)

    counts_csv = run_dir / "counts.csv"
    if counts_csv.exists():
        rows = _read_csv(counts_csv)
        if rows:
            out = run_dir / "counts_comparison.png"
            _counts_figure(rows, out)
            written.append(out)

    covariance_csv = run_dir / "covariance.csv"
    if covariance_csv.exists():
        rows = _read_csv(covariance_csv)
        out = run_dir / "covariance_comparison.png"
        _covariance_figure(rows, out)
        if out.exists():
            written.append(out)

    scenarios_csv = run_dir / "scenarios.csv"
    if scenarios_csv.exists():
        rows = _read_csv(scenarios_csv)
        if rows:
            counts_png = run_dir / "country_counts.png"
            pct_png = run_dir / "country_pct_change.png"
            _scenario_figures(rows, counts_png, pct_png)
            written.extend([counts_png, pct_png])

    if not written:
        raise FileNotFoundError(f"no experiment CSV files under {run_dir}")
    return written
