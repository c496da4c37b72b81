"""CSV and JSONL writers. Floats are written with ``repr`` so reruns are byte-identical."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

from .episode import EpisodeLog
from .metrics import MetricsReport
from .phase import PHASE_COLUMNS, PhaseGrid

RESULT_COLUMNS = (
    "scenario", "seed", "algorithm", "dmin", "k", "c1", "c2", "eta", "lambda",
    "efficiency", "safety", "collided", "intervention_rate", "min_distance", "valid",
)
POINT_COLUMNS = (
    "algorithm", "index", "dmin", "k", "c1", "c2", "eta", "lambda",
    "safety", "efficiency", "collided", "collisions", "invalid",
)
FRONTIER_COLUMNS = ("algorithm", "safety", "efficiency")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])


def result_row(scenario_index: int, log: EpisodeLog, report: MetricsReport) -> dict:
    row = {
        "scenario": scenario_index,
        "seed": log.scenario_seed,
        "algorithm": log.algorithm,
        "efficiency": report.efficiency,
        "safety": report.safety,
        "collided": report.collided,
        "intervention_rate": report.intervention_rate,
        "min_distance": report.min_distance,
        "valid": report.valid,
    }
    row.update({k: float(v) for k, v in log.params.items()})
    return row


def write_jsonl(path, log: EpisodeLog):
    """One frame per line; events and validity go to a sibling ``.events.json``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for frame in log.frames():
            fh.write(json.dumps(frame) + "\n")
    summary = {"events": [asdict(e) for e in log.events], "valid": log.valid, "error": log.error}
    path.with_suffix(".events.json").write_text(json.dumps(summary, indent=1) + "\n")


def write_phase_csv(path, grid: PhaseGrid):
    def cell(v):
        v = float(v)
        return "nan" if v != v else repr(v)

    rows = [dict(zip(PHASE_COLUMNS, (cell(v) for v in r))) for r in grid.rows()]
    write_csv(path, PHASE_COLUMNS, rows)


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
