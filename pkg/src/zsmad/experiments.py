"""The three evaluation protocols and their aggregation statistics.

Protocol 1 scores every (prompt, generator, medium) cell at the target
operating point. Protocol 2 aggregates cells by generator/medium and by
prompt category. Protocol 3 ranks prompts by their mean across all cells.
The model comparison re-scores each medium with the best prompt alongside
image-only baselines.

Aggregation operates on per-cell operating-point error values, not pooled
scores; degenerate cells (missing morphs or bona fide in a slice) are
excluded from means and listed explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .baselines import PrototypeScorer
from .classifier import BankRun, PromptBank, PromptCategory, run_bank
from .errors import ConstraintError, DegenerateError
from .manifest import Generator, Label, Manifest, Medium, slice_manifest
from .metrics import LabeledScores, OperatingPoint, bpcer_at_macer

CellKey = tuple[str, str, str]  # (prompt_id, generator, medium)


@dataclass(frozen=True)
class ExperimentResult:
    per_cell: dict[CellKey, Optional[OperatingPoint]]
    skipped: tuple[str, ...]
    target_macer: float
    prompt_categories: dict[str, str] = field(default_factory=dict)

    def degenerate_cells(self) -> list[CellKey]:
        return sorted(k for k, v in self.per_cell.items() if v is None)

    def cell_values(self) -> dict[CellKey, float]:
        return {k: v.bpcer for k, v in self.per_cell.items() if v is not None}


@dataclass(frozen=True)
class AggregateStat:
    group_key: str
    mean: float
    min: float
    q1: float
    median: float
    q3: float
    max: float


def five_number(values: Sequence[float], group_key: str) -> AggregateStat:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise DegenerateError(f"no values to aggregate for {group_key!r}")
    q1, med, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
    return AggregateStat(
        group_key=group_key,
        mean=float(arr.mean()),
        min=float(arr.min()),
        q1=float(q1),
        median=float(med),
        q3=float(q3),
        max=float(arr.max()),
    )


def _cell_scores(run: BankRun, cell_manifest: Manifest, prompt_id: str) -> LabeledScores:
    wanted = {s.id: s.label for s in cell_manifest}
    bona, morph = [], []
    for rec in run.records:
        if rec.prompt_id != prompt_id:
            continue
        label = wanted.get(rec.sample_id)
        if label is Label.BONA_FIDE:
            bona.append(rec.p_morph)
        elif label is Label.MORPH:
            morph.append(rec.p_morph)
    return LabeledScores(np.asarray(bona), np.asarray(morph))


def cells_from_run(
    run: BankRun,
    manifest: Manifest,
    bank: PromptBank,
    target_macer: float,
) -> dict[CellKey, Optional[OperatingPoint]]:
    """Operating point per (prompt, generator, medium); None when degenerate."""
    per_cell: dict[CellKey, Optional[OperatingPoint]] = {}
    for generator in manifest.generators():
        for medium in manifest.mediums():
            cell_manifest = slice_manifest(manifest, generator, medium)
            for pair in bank:
                key = (pair.id, generator.value, medium.value)
                scores = _cell_scores(run, cell_manifest, pair.id)
                if scores.morph_scores.size == 0 or scores.bonafide_scores.size == 0:
                    per_cell[key] = None
                else:
                    per_cell[key] = bpcer_at_macer(scores, target_macer)
    return per_cell


def experiment1(
    manifest: Manifest,
    bank: PromptBank,
    bundle,
    target_macer: float = 0.10,
    parallel: Optional[int] = None,
) -> ExperimentResult:
    """Per-prompt detection accuracy on every generator x medium slice."""
    run = run_bank(manifest, bank, bundle, parallel=parallel)
    per_cell = cells_from_run(run, manifest, bank, target_macer)
    return ExperimentResult(
        per_cell=per_cell,
        skipped=run.skipped,
        target_macer=target_macer,
        prompt_categories={p.id: p.category.value for p in bank},
    )


def experiment2(result: ExperimentResult) -> list[AggregateStat]:
    """Influence of generator, medium, and prompt length.

    Emits one stat per (generator, medium) over prompts, per
    (generator, medium, category), per medium over everything, and per
    (medium, category).
    """
    values = result.cell_values()
    categories = result.prompt_categories
    groups: dict[str, list[float]] = {}
    for (prompt_id, generator, medium), v in sorted(values.items()):
        cat = categories.get(prompt_id, "")
        for key in (
            f"generator={generator}|medium={medium}",
            f"generator={generator}|medium={medium}|category={cat}",
            f"medium={medium}",
            f"medium={medium}|category={cat}",
        ):
            groups.setdefault(key, []).append(v)
    return [five_number(vals, key) for key, vals in sorted(groups.items())]


def experiment3(result: ExperimentResult) -> tuple[list[AggregateStat], str]:
    """Mean per prompt across all cells; returns (stats, best prompt id)."""
    values = result.cell_values()
    groups: dict[str, list[float]] = {}
    for (prompt_id, _, _), v in sorted(values.items()):
        groups.setdefault(f"prompt={prompt_id}", []).append(v)
    if not groups:
        raise DegenerateError("no non-degenerate cells to aggregate")
    stats = [five_number(vals, key) for key, vals in sorted(groups.items())]
    best = min(stats, key=lambda s: (s.mean, s.group_key))
    return stats, best.group_key.split("=", 1)[1]


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    medium: str
    prompt_id: Optional[str]
    bpcer: float
    achieved_macer: float
    threshold: float


def _pooled_scores(run: BankRun, manifest: Manifest, medium: Medium,
                   prompt_id: str) -> LabeledScores:
    return _cell_scores(run, slice_manifest(manifest, medium=medium), prompt_id)


def compare_models(
    manifest: Manifest,
    bank: PromptBank,
    bundle,
    baseline_scorers: dict[str, PrototypeScorer],
    target_macer: float = 0.10,
    parallel: Optional[int] = None,
    model_name: str = "dual-encoder",
) -> list[ComparisonRow]:
    """Best-prompt engine vs image-only baselines, one row per model x medium."""
    eval_ids = {s.id for s in manifest}
    for name, scorer in baseline_scorers.items():
        overlap = set(scorer.ref_ids) & eval_ids
        if overlap:
            raise ConstraintError(
                f"baseline {name!r}: reference and evaluation manifests share ids "
                f"({sorted(overlap)[:5]})"
            )

    run = run_bank(manifest, bank, bundle, parallel=parallel)
    per_cell = cells_from_run(run, manifest, bank, target_macer)
    result = ExperimentResult(
        per_cell=per_cell, skipped=run.skipped, target_macer=target_macer,
        prompt_categories={p.id: p.category.value for p in bank},
    )
    _, best_prompt = experiment3(result)

    rows: list[ComparisonRow] = []
    for medium in manifest.mediums():
        pooled = _pooled_scores(run, manifest, medium, best_prompt)
        if pooled.morph_scores.size == 0 or pooled.bonafide_scores.size == 0:
            continue
        point = bpcer_at_macer(pooled, target_macer)
        rows.append(ComparisonRow(
            model=model_name, medium=medium.value, prompt_id=best_prompt,
            bpcer=point.bpcer, achieved_macer=point.achieved_macer,
            threshold=point.threshold,
        ))
        for name in sorted(baseline_scorers):
            scorer = baseline_scorers[name]
            bona, morph = [], []
            for sample in slice_manifest(manifest, medium=medium):
                if sample.id in run.skipped:
                    continue
                s = scorer.score_path(sample.path)
                (bona if sample.label is Label.BONA_FIDE else morph).append(s)
            if not bona or not morph:
                continue
            bpoint = bpcer_at_macer(LabeledScores(np.asarray(bona), np.asarray(morph)),
                                    target_macer)
            rows.append(ComparisonRow(
                model=name, medium=medium.value, prompt_id=None,
                bpcer=bpoint.bpcer, achieved_macer=bpoint.achieved_macer,
                threshold=bpoint.threshold,
            ))
    return rows
