"""Figures rendered next to the CSV reports (PNG, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiments import ReportRow, summarize  # noqa: E402

_DPI = 150


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def _curves(rows: Sequence[ReportRow]) -> Dict[Tuple[str, str], List[ReportRow]]:
    out: Dict[Tuple[str, str], List[ReportRow]] = {}
    for r in rows:
        out.setdefault((r.variant, r.setting), []).append(r)
    for v in out.values():
        v.sort(key=lambda r: r.step)
    return out


def _label(variant: str, setting: str) -> str:
    return variant if not setting else f"{variant} ({setting})"


def plot_steps(rows: Sequence[ReportRow], path, title: str = "") -> Path:
    """New-domain and all-domain accuracy per adaptation step, one line per curve."""
    fig, (ax_new, ax_all) = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for (variant, setting), curve in _curves(rows).items():
        steps = [r.step for r in curve]
        label = _label(variant, setting)
        ax_new.plot(steps, [r.new_domain for r in curve], marker=".", label=label)
        ax_all.plot(steps, [r.all_domains for r in curve], marker=".", label=label)
    ax_new.set_title("new domain")
    ax_all.set_title("all known domains")
    for ax in (ax_new, ax_all):
        ax.set_xlabel("adaptation step")
        ax.set_ylim(-0.02, 1.02)
        ax.grid(alpha=0.3)
    ax_new.set_ylabel("accuracy")
    ax_all.legend(fontsize=7, loc="lower left")
    if title:
        fig.suptitle(title)
    return _save(fig, Path(path))


def plot_sweep(rows: Sequence[ReportRow], path, title: str = "") -> Path:
    """Summary accuracies against the swept value, one panel per swept parameter."""
    studies = sorted({r.study for r in rows})
    fig, axes = plt.subplots(1, len(studies), figsize=(5 * len(studies), 4), squeeze=False)
    for ax, study in zip(axes[0], studies):
        by_setting: Dict[float, List[ReportRow]] = {}
        for r in rows:
            if r.study == study:
                by_setting.setdefault(float(r.setting), []).append(r)
        xs = sorted(by_setting)
        new, final = zip(*(summarize(by_setting[x]) for x in xs))
        ax.plot(xs, new, marker="o", label="mean new-domain")
        ax.plot(xs, final, marker="s", label="final all-domain")
        ax.set_xlabel(study.replace("sweep-", ""))
        ax.set_ylabel("accuracy")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    if title:
        fig.suptitle(title)
    return _save(fig, Path(path))


def plot_table1(rows: Sequence[ReportRow], path) -> Path:
    """Initial-training accuracy for each classifier mode against domain count."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for mode in sorted({r.variant for r in rows}):
        pts = sorted((int(r.setting), r.all_domains) for r in rows if r.variant == mode)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=mode)
    ax.set_xlabel("initial domains")
    ax.set_ylabel("test accuracy")
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, Path(path))


def plot_report(rows: Sequence[ReportRow], csv_path) -> List[Path]:
    """Pick the figure that fits the report and write it beside ``csv_path``."""
    csv_path = Path(csv_path)
    if not rows:
        return []
    studies = {r.study for r in rows}
    if studies == {"table1"}:
        return [plot_table1(rows, csv_path.with_suffix(".png"))]
    if all(s.startswith("sweep-") for s in studies):
        return [plot_sweep(rows, csv_path.with_suffix(".png")),
                plot_steps(rows, csv_path.with_suffix(".steps.png"))]
    return [plot_steps(rows, csv_path.with_suffix(".png"), title=", ".join(sorted(studies)))]
