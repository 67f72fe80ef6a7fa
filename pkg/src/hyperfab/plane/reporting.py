"""Job reports: delimited/text/JSON output plus rendered figures.

The CSV has one row per completed task: ``task_id, iteration, state,
scalar_reward, duration_s`` followed by one column per flattened parameter
path in layout order. Figure rendering writes PNGs (convergence, importance
bars, 2D candidate map) next to the delimited output.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any

from ..space import SearchSpace, space_layout
from .jobs import Engine, JobState


def report_rows(state: JobState, space: SearchSpace) -> tuple[list[str], list[list[Any]]]:
    layout = space_layout(space)
    header = ["task_id", "iteration", "state", "scalar_reward", "duration_s"]
    header += [dim.path for dim in layout]
    rows = []
    for task in sorted(state.tasks.values(), key=lambda t: t["task_id"]):
        if task["state"] != "COMPLETED":
            continue
        row = [task["task_id"], task["iteration"], task["state"],
               task["scalar_reward"], task["duration_s"]]
        config = task.get("config", {})
        row += [config.get(dim.path, "") for dim in layout]
        rows.append(row)
    return header, rows


def render_csv(state: JobState, space: SearchSpace) -> str:
    header, rows = report_rows(state, space)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def render_text(state: JobState, space: SearchSpace) -> str:
    summary = state.summary()
    lines = [
        f"job {summary['job_id']} ({summary['name']})",
        f"  status:       {summary['status']}"
        + (f" ({summary['diagnostic']})" if summary.get("diagnostic") else ""),
        f"  iterations:   {summary['iteration']}",
        f"  observations: {summary['n_observations']}",
        f"  tasks:        " + ", ".join(f"{k}={v}" for k, v in sorted(summary["tasks"].items())),
    ]
    if summary.get("best"):
        best = summary["best"]
        lines.append(f"  best reward:  {best['reward']:.6g} (task {best['task_id']})")
        lines.append("  best config:")
        for path, value in sorted(best["config"].items()):
            lines.append(f"    {path} = {value}")
    return "\n".join(lines) + "\n"


def render_document(state: JobState, space: SearchSpace) -> str:
    header, rows = report_rows(state, space)
    doc = {
        "summary": state.summary(),
        "columns": header,
        "completed_tasks": [dict(zip(header, row)) for row in rows],
    }
    return json.dumps(doc, indent=2, default=str) + "\n"


def render_report(state: JobState, space: SearchSpace, fmt: str) -> str:
    if fmt == "csv":
        return render_csv(state, space)
    if fmt == "text":
        return render_text(state, space)
    if fmt == "document":
        return render_document(state, space)
    raise ValueError(f"unknown report format {fmt!r}")


def render_figures(engine: Engine, job_id: str, outdir: str | Path) -> list[Path]:
    """Write convergence / importance / candidate-map PNGs; returns the paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    state = engine.status(job_id)
    written: list[Path] = []

    observations = sorted(state.observations, key=lambda o: o["task_id"])
    if observations:
        maximize = state.spec_doc.get("objective", {}).get("direction", "maximize") == "maximize"
        rewards = [o["reward"] for o in observations]
        best_so_far, running = [], rewards[0]
        for reward in rewards:
            running = max(running, reward) if maximize else min(running, reward)
            best_so_far.append(running)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(range(1, len(rewards) + 1), rewards, ".", alpha=0.45, label="observed")
        ax.plot(range(1, len(best_so_far) + 1), best_so_far, "-", label="best so far")
        ax.set_xlabel("evaluation")
        ax.set_ylabel("reward")
        ax.set_title("convergence")
        ax.legend()
        fig.tight_layout()
        path = outdir / "convergence.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)

    try:
        report = engine.importance(job_id)
        pairs = sorted(report["fractions"].items(), key=lambda kv: kv[1], reverse=True)[:20]
        if pairs:
            fig, ax = plt.subplots(figsize=(6, max(2.5, 0.35 * len(pairs))))
            names = [k for k, _ in pairs][::-1]
            values = [v for _, v in pairs][::-1]
            ax.barh(names, values)
            ax.set_xlabel("fraction of performance variance")
            ax.set_title("hyperparameter importance")
            fig.tight_layout()
            path = outdir / "importance.png"
            fig.savefig(path, dpi=110)
            plt.close(fig)
            written.append(path)
    except Exception:
        pass  # too few observations or constant rewards

    try:
        points = engine.projection(job_id)
        if points:
            fig, ax = plt.subplots(figsize=(5.5, 4.5))
            sc = ax.scatter([p["x"] for p in points], [p["y"] for p in points],
                            c=[p["reward"] for p in points], cmap="viridis", s=36)
            fig.colorbar(sc, ax=ax, label="reward")
            ax.set_title("candidate map (2D projection)")
            ax.set_xticks([])
            ax.set_yticks([])
            fig.tight_layout()
            path = outdir / "candidate_map.png"
            fig.savefig(path, dpi=110)
            plt.close(fig)
            written.append(path)
    except Exception:
        pass

    return written
