"""Report rendering: every CLI report writes delimited data plus figures."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import KPMReport
from .planner import OpenLoopMetrics


def _ensure(out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "figures").mkdir(exist_ok=True)
    return out


def save_json(out_dir: str | Path, name: str, payload: dict) -> Path:
    out = _ensure(out_dir) / name
    out.write_text(json.dumps(payload, indent=1, sort_keys=True))
    return out


def save_curation_report(out_dir: str | Path, before: np.ndarray,
                         after: np.ndarray) -> None:
    """Action-bin occupancy heatmaps before/after re-sampling + counts CSV."""
    out = _ensure(out_dir)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, grid, title in ((axes[0], before, "before re-sampling"),
                            (axes[1], after, "after re-sampling")):
        im = ax.imshow(grid.T, aspect="auto", origin="lower", cmap="viridis")
        ax.set_xlabel("steering bin")
        ax.set_ylabel("speed bin")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(out / "figures" / "action_bins.png", dpi=110)
    plt.close(fig)
    with open(out / "action_bins.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["steer_bin", "speed_bin", "count_before", "count_after"])
        for i in range(before.shape[0]):
            for j in range(before.shape[1]):
                writer.writerow([i, j, int(before[i, j]), int(after[i, j])])


def save_kpm_report(out_dir: str | Path, reports: dict[str, KPMReport],
                    ffd: dict[str, float] | None = None) -> None:
    out = _ensure(out_dir)
    fig, ax = plt.subplots(figsize=(6, 4))
    names = list(reports)
    ax.bar(names, [reports[n].ratio * 100 for n in names], color="#4878d0")
    ax.set_ylabel("KPM (%)")
    ax.set_title("matched-keypoint ratio vs real frames")
    for i, n in enumerate(names):
        ax.text(i, reports[n].ratio * 100, f"{reports[n].ratio * 100:.1f}",
                ha="center", va="bottom")
    fig.tight_layout()
    fig.savefig(out / "figures" / "kpm.png", dpi=110)
    plt.close(fig)
    with open(out / "kpm.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pipeline", "scene", "t", "view", "real_matches",
                         "generated_matches", "ratio"])
        for name, rep in reports.items():
            for e in rep.per_image:
                writer.writerow([name, e["scene"], e["t"], e["view"],
                                 e["real"], e["generated"], f"{e['ratio']:.4f}"])
    if ffd:
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.bar(list(ffd), list(ffd.values()), color="#d65f5f")
        ax.set_ylabel("Frechet feature distance")
        fig.tight_layout()
        fig.savefig(out / "figures" / "ffd.png", dpi=110)
        plt.close(fig)


def save_planning_report(out_dir: str | Path,
                         metrics: dict[str, OpenLoopMetrics]) -> None:
    out = _ensure(out_dir)
    marks = ["1s", "2s", "3s", "avg"]
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    width = 0.8 / max(len(metrics), 1)
    xs = np.arange(len(marks))
    for i, (name, m) in enumerate(metrics.items()):
        axes[0].bar(xs + i * width, [m.l2[k] for k in marks], width, label=name)
        axes[1].bar(xs + i * width, [m.collision[k] for k in marks], width, label=name)
    for ax, title in ((axes[0], "L2 to expert (m)"), (axes[1], "collision rate")):
        ax.set_xticks(xs + width * (len(metrics) - 1) / 2)
        ax.set_xticklabels(marks)
        ax.set_title(title)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "figures" / "planning.png", dpi=110)
    plt.close(fig)
    with open(out / "planning.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "metric"] + marks)
        for name, m in metrics.items():
            writer.writerow([name, "l2"] + [f"{m.l2[k]:.4f}" for k in marks])
            writer.writerow([name, "collision"] + [f"{m.collision[k]:.4f}" for k in marks])


def save_frame_grid(out_dir: str | Path, clip: np.ndarray, name: str = "rollout",
                    max_frames: int = 16) -> None:
    """Frame directory of per-step view strips plus one contact-sheet PNG."""
    out = _ensure(out_dir)
    frames_dir = out / f"{name}_frames"
    frames_dir.mkdir(exist_ok=True)
    t_total, k = clip.shape[0], clip.shape[1]
    import cv2
    strips = []
    for t in range(t_total):
        strip = np.concatenate([np.transpose(clip[t, v], (1, 2, 0))
                                for v in range(k)], axis=1)
        strips.append(strip)
        bgr = (strip[:, :, ::-1] * 255).round().astype(np.uint8)
        cv2.imwrite(str(frames_dir / f"frame_{t:03d}.png"), bgr)
    shown = strips[:max_frames]
    fig, axes = plt.subplots(len(shown), 1, figsize=(10, 1.2 * len(shown)))
    if len(shown) == 1:
        axes = [axes]
    for ax, strip, t in zip(axes, shown, range(len(shown))):
        ax.imshow(strip)
        ax.set_ylabel(f"t={t}", fontsize=7)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(out / "figures" / f"{name}.png", dpi=110)
    plt.close(fig)


def save_training_curve(out_dir: str | Path, losses: dict[str, list[float]]) -> None:
    out = _ensure(out_dir)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, values in losses.items():
        if not values:
            continue
        window = max(1, min(50, len(values) // 10))
        kernel = np.ones(window) / window
        smooth = np.convolve(values, kernel, mode="valid")
        ax.plot(smooth, label=name)
    ax.set_xlabel("step")
    ax.set_ylabel("denoising loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "figures" / "training.png", dpi=110)
    plt.close(fig)
    with open(out / "training.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "step", "loss"])
        for name, values in losses.items():
            for i, v in enumerate(values):
                writer.writerow([name, i, f"{v:.6f}"])
