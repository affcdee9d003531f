"""Deterministic artifact I/O helpers.

All numeric output is rendered with %.17g so reruns are byte-identical, and
JSON is dumped with sorted keys.  No timestamps, hostnames or other
run-varying fields belong in any artifact.
"""
from __future__ import annotations

import json
import os
from pathlib import Path


def fmt(x) -> str:
    return "%.17g" % float(x)


def write_csv(path: str | Path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path: str | Path) -> tuple[list[str], list[list[float]]]:
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    rows = [[float(v) for v in line.split(",")] for line in text[1:]]
    return header, rows


def dump_json(path: str | Path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def worker_count(n_tasks: int) -> int:
    """Worker cap for parallel assembly; CMC_SCRI_THREADS overrides the CPU count."""
    env = os.environ.get("CMC_SCRI_THREADS")
    if env is not None:
        try:
            cap = int(env)
        except ValueError:
            cap = 1
        cap = max(1, cap)
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_tasks))
