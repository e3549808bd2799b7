"""Figure rendering for run and sweep outputs.

Strictly downstream of the CSVs: every figure is recomputable from the
delimited files alone, and the files are written next to them.  Uses the
Agg backend so reports render identically on headless machines.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import DataFormatError


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return header, rows


def _column(header: list[str], rows: list[list[str]], name: str) -> list[float]:
    idx = header.index(name)
    return [float(r[idx]) for r in rows]


def render(input_path: Path, output_dir: Path | None = None) -> list[Path]:
    """Render the figures appropriate to the input; returns the files written."""
    if input_path.is_dir():
        summary = input_path / "summary.csv"
        acct = input_path / "accountant_sweep.csv"
        if summary.exists():
            return render_sweep_summary(summary, output_dir or input_path)
        if acct.exists():
            return render_accountant_sweep(acct, output_dir or input_path)
        raise DataFormatError(f"{input_path}: no summary.csv or accountant_sweep.csv found")
    header, _ = _read_csv(input_path)
    out = output_dir or input_path.parent
    if header[:2] == ["round", "participants"]:
        return render_run(input_path, out)
    if header[0] == "axis" and "eps_c_round" in header:
        return render_accountant_sweep(input_path, out)
    if header[0] == "axis":
        return render_sweep_summary(input_path, out)
    raise DataFormatError(f"{input_path}: unrecognized CSV header {header!r}")


def render_run(path: Path, out_dir: Path) -> list[Path]:
    header, rows = _read_csv(path)
    rounds = _column(header, rows, "round")
    written = []

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(rounds, _column(header, rows, "test_accuracy"))
    ax1.set_xlabel("round")
    ax1.set_ylabel("test accuracy")
    ax2.plot(rounds, _column(header, rows, "train_loss"), color="tab:orange")
    ax2.set_xlabel("round")
    ax2.set_ylabel("train loss")
    fig.tight_layout()
    target = out_dir / f"{path.stem}_learning.png"
    fig.savefig(target, dpi=150)
    plt.close(fig)
    written.append(target)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(rounds, _column(header, rows, "eps_c_total"), label="global total")
    ax.plot(rounds, _column(header, rows, "eps_local_max"), label="local max")
    ax.set_xlabel("round")
    ax.set_ylabel("epsilon")
    ax.legend()
    fig.tight_layout()
    target = out_dir / f"{path.stem}_privacy.png"
    fig.savefig(target, dpi=150)
    plt.close(fig)
    written.append(target)
    return written


def render_sweep_summary(path: Path, out_dir: Path) -> list[Path]:
    header, rows = _read_csv(path)
    axis = rows[0][header.index("axis")]
    labels = [r[header.index("value")] for r in rows]
    x = range(len(labels))
    written = []

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(
        x,
        _column(header, rows, "final_accuracy_mean"),
        yerr=_column(header, rows, "final_accuracy_std"),
        marker="o",
        capsize=3,
    )
    ax.set_xticks(list(x), labels)
    ax.set_xlabel(axis)
    ax.set_ylabel("final test accuracy")
    fig.tight_layout()
    target = out_dir / f"{path.stem}_accuracy.png"
    fig.savefig(target, dpi=150)
    plt.close(fig)
    written.append(target)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(
        x,
        _column(header, rows, "global_total_eps_mean"),
        yerr=_column(header, rows, "global_total_eps_std"),
        marker="o",
        capsize=3,
        label="global total",
    )
    ax.errorbar(
        x,
        _column(header, rows, "local_total_eps_mean"),
        yerr=_column(header, rows, "local_total_eps_std"),
        marker="s",
        capsize=3,
        label="local max",
    )
    ax.set_xticks(list(x), labels)
    ax.set_xlabel(axis)
    ax.set_ylabel("total epsilon")
    ax.legend()
    fig.tight_layout()
    target = out_dir / f"{path.stem}_privacy.png"
    fig.savefig(target, dpi=150)
    plt.close(fig)
    written.append(target)
    return written


def render_accountant_sweep(path: Path, out_dir: Path) -> list[Path]:
    header, rows = _read_csv(path)
    axis = rows[0][header.index("axis")]
    x = _column(header, rows, "value")

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(x, _column(header, rows, "eps_c_round"), marker="o")
    ax1.set_xlabel(axis)
    ax1.set_ylabel("per-round central epsilon")
    ax2.plot(x, _column(header, rows, "eps_c_total"), marker="o", label="global total")
    finite_local = [
        (xv, lv)
        for xv, lv in zip(x, _column(header, rows, "eps_local_total"))
        if lv != float("inf")
    ]
    if finite_local:
        ax2.plot(*zip(*finite_local), marker="s", label="local total")
    ax2.set_xlabel(axis)
    ax2.set_ylabel("total epsilon")
    ax2.legend()
    fig.tight_layout()
    target = out_dir / f"{path.stem}_curves.png"
    fig.savefig(target, dpi=150)
    plt.close(fig)
    return [target]
