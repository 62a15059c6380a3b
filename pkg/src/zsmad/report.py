"""Artifact writers: score dumps, DET curves, run JSON, figure CSVs.

Every writer is byte-deterministic for equal inputs: dict keys are
sorted, floats go through Python's shortest round-trip repr, and rows
follow a stated order. Reruns with the same config therefore produce
identical files, which is what makes the printed config digest a
reproducibility handle.
"""

from __future__ import annotations

import hashlib
import json
from typing import Mapping, Optional, Sequence

from .classifier import ScoreRecord
from .experiments import AggregateStat, CellKey, ComparisonRow, ExperimentResult
from .metrics import DetPoint, OperatingPoint

_SCORE_HEADER = "sample_id,prompt_id,p_morph,cos_bonafide,cos_morph,predicted_text"
_DET_HEADER = "threshold,macer,bpcer"
_CELL_HEADER = "prompt_id,generator,medium,bpcer,achieved_macer,threshold,feasible"
_BAR_HEADER = "group_key,mean"
_BOX_HEADER = "group_key,mean,min,q1,median,q3,max"
_COMPARE_HEADER = "model,medium,prompt_id,bpcer,achieved_macer,threshold"


def _fmt(x: float) -> str:
    return repr(float(x))


def _csv_field(text: str) -> str:
    if any(c in text for c in ',"\n\r'):
        return '"' + text.replace('"', '""') + '"'
    return text


def _write_lines(path, lines: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def config_digest(config: Mapping) -> str:
    """sha256 over the canonical JSON encoding of the run configuration."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def score_csv_lines(records: Sequence[ScoreRecord]) -> list[str]:
    lines = [_SCORE_HEADER]
    for r in records:
        lines.append(",".join([
            _csv_field(r.sample_id), _csv_field(r.prompt_id), _fmt(r.p_morph),
            _fmt(r.cos_bonafide), _fmt(r.cos_morph), _csv_field(r.predicted_text),
        ]))
    return lines


def write_scores_csv(records: Sequence[ScoreRecord], path) -> None:
    _write_lines(path, score_csv_lines(records))


def write_det_csv(points: Sequence[DetPoint], path) -> None:
    lines = [_DET_HEADER]
    lines += [f"{_fmt(p.threshold)},{_fmt(p.macer)},{_fmt(p.bpcer)}" for p in points]
    _write_lines(path, lines)


def _cell_key_str(key: CellKey) -> str:
    return "|".join(key)


def _point_payload(point: Optional[OperatingPoint]):
    if point is None:
        return None
    return {
        "target_macer": point.target_macer,
        "achieved_macer": point.achieved_macer,
        "bpcer": point.bpcer,
        "threshold": point.threshold,
        "feasible": point.feasible,
    }


def _stat_payload(stat: AggregateStat) -> dict:
    return {
        "group_key": stat.group_key, "mean": stat.mean, "min": stat.min,
        "q1": stat.q1, "median": stat.median, "q3": stat.q3, "max": stat.max,
    }


def run_payload(
    result: ExperimentResult,
    aggregates: Sequence[AggregateStat],
    prompt_means: Sequence[AggregateStat],
    best_prompt: str,
    digest: str,
) -> dict:
    return {
        "config_digest": digest,
        "target_macer": result.target_macer,
        "per_cell": {
            _cell_key_str(k): _point_payload(v)
            for k, v in sorted(result.per_cell.items())
        },
        "aggregates": [_stat_payload(s) for s in aggregates],
        "prompt_means": [_stat_payload(s) for s in prompt_means],
        "best_prompt": best_prompt,
        "skipped": sorted(result.skipped),
    }


def write_run_json(payload: Mapping, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_cell_csv(result: ExperimentResult, path) -> None:
    """One row per non-degenerate cell, sorted by (prompt, generator, medium)."""
    lines = [_CELL_HEADER]
    for key in sorted(result.per_cell):
        point = result.per_cell[key]
        if point is None:
            continue
        lines.append(",".join([
            *key, _fmt(point.bpcer), _fmt(point.achieved_macer),
            _fmt(point.threshold), str(point.feasible).lower(),
        ]))
    _write_lines(path, lines)


def write_bar_csv(stats: Sequence[AggregateStat], path) -> None:
    """Bar-chart shape: one mean per group."""
    lines = [_BAR_HEADER]
    lines += [f"{_csv_field(s.group_key)},{_fmt(s.mean)}" for s in stats]
    _write_lines(path, lines)


def write_box_csv(stats: Sequence[AggregateStat], path) -> None:
    """Box-plot shape: five-number summary plus mean per group."""
    lines = [_BOX_HEADER]
    lines += [
        ",".join([_csv_field(s.group_key), _fmt(s.mean), _fmt(s.min),
                  _fmt(s.q1), _fmt(s.median), _fmt(s.q3), _fmt(s.max)])
        for s in stats
    ]
    _write_lines(path, lines)


def write_comparison_csv(rows: Sequence[ComparisonRow], path) -> None:
    lines = [_COMPARE_HEADER]
    for r in rows:
        lines.append(",".join([
            _csv_field(r.model), r.medium, r.prompt_id or "-",
            _fmt(r.bpcer), _fmt(r.achieved_macer), _fmt(r.threshold),
        ]))
    _write_lines(path, lines)


def comparison_payload(rows: Sequence[ComparisonRow]) -> list[dict]:
    return [
        {
            "model": r.model, "medium": r.medium, "prompt_id": r.prompt_id,
            "bpcer": r.bpcer, "achieved_macer": r.achieved_macer,
            "threshold": r.threshold,
        }
        for r in rows
    ]
