"""Language-agnostic evaluator and probe protocol over subprocess stdio.

An evaluator is any executable. It receives one single-line JSON document on
stdin:

    {"task_id": 7, "config": {"x1": 0.3, ...}, "fidelity": {"resource": 1.0,
     "is_final": true}, "artifact_dir": "/tmp/..."}

and must write exactly one single-line JSON document to stdout:

    {"metrics": {"score": 0.92, ...}, "artifact": "optional/path"}

Exit code 0 means success. The deployment probe speaks the same dialect with
``{"artifact": path}`` in and ``{"metrics": {...}}`` out. Documents are UTF-8;
key order is irrelevant. Anything else is a protocol violation and fails the
task.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from typing import Any, Callable, Mapping

from .broker import Task
from .rewards import RewardRecord


class EvaluatorError(Exception):
    """Protocol violation, crash or timeout; the message is the diagnostic."""


EvaluatorFn = Callable[[Task], Mapping[str, float]]


def _as_argv(cmd: str | list[str]) -> list[str]:
    return shlex.split(cmd) if isinstance(cmd, str) else list(cmd)


def _parse_result_line(stdout: str) -> dict[str, Any]:
    lines = [line for line in stdout.splitlines() if line.strip()]
    if not lines:
        raise EvaluatorError("evaluator wrote no result document")
    try:
        doc = json.loads(lines[-1])
    except json.JSONDecodeError as exc:
        raise EvaluatorError(f"malformed result document: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("metrics"), dict):
        raise EvaluatorError(f"result document missing metrics map: {doc!r}")
    metrics = {}
    for name, value in doc["metrics"].items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise EvaluatorError(f"metric {name!r} is not a number: {value!r}")
        metrics[str(name)] = float(value)
    doc["metrics"] = metrics
    return doc


def _run_protocol(cmd: str | list[str], payload: dict[str, Any],
                  timeout: float | None) -> dict[str, Any]:
    argv = _as_argv(cmd)
    try:
        proc = subprocess.run(
            argv, input=json.dumps(payload) + "\n", capture_output=True,
            text=True, timeout=timeout)
    except subprocess.TimeoutExpired as exc:
        raise EvaluatorError(f"wall-clock cap of {timeout}s exceeded") from exc
    except OSError as exc:
        raise EvaluatorError(f"cannot launch {argv[0]!r}: {exc}") from exc
    if proc.returncode != 0:
        stderr = (proc.stderr or "").strip()[-500:]
        raise EvaluatorError(f"exit code {proc.returncode}: {stderr}")
    return _parse_result_line(proc.stdout or "")


def task_payload(task: Task, artifact_dir: str) -> dict[str, Any]:
    return {
        "task_id": task.task_id,
        "config": dict(task.config.assignments),
        "fidelity": {"resource": task.fidelity.resource, "is_final": task.fidelity.is_final},
        "artifact_dir": artifact_dir,
    }


def evaluate(evaluator_cmd: str | list[str], task: Task, artifact_dir: str = "",
             timeout: float | None = None) -> RewardRecord:
    """Run the training-side evaluator for one task."""
    doc = _run_protocol(evaluator_cmd, task_payload(task, artifact_dir), timeout)
    artifact = doc.get("artifact")
    return RewardRecord(train_metrics=doc["metrics"],
                        artifact=str(artifact) if artifact else None)


def deploy_probe(artifact: str, probe_cmd: str | list[str],
                 timeout: float | None = None) -> dict[str, float]:
    """Run the deployment-side probe against a trained artifact."""
    doc = _run_protocol(probe_cmd, {"artifact": artifact}, timeout)
    return doc["metrics"]
