"""
Variant comparison across seeds, and parameter summaries per variant.
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Optional

from modetr.evaluation import MetricReport
from modetr.model import Variant, init_params, parameter_groups
from modetr.runner.config import RunConfig
from modetr.runner.evaluate import evaluate
from modetr.runner.train import StepRecord, check_compatible, train
from modetr.synth import Dataset

__all__ = [
    'VariantResult', 'compare_variants', 'results_to_dict', 'format_results_table',
    'VariantSummary', 'summarize_variants', 'format_summary',
]

logger = logging.getLogger(__name__)


@dataclass
class VariantResult:
    variant: Variant
    seeds: list[int]
    per_seed: list[MetricReport]

    @property
    def mean(self) -> MetricReport:
        return MetricReport.average(self.per_seed)


def compare_variants(
        config: RunConfig,
        train_set: Dataset,
        val_set: Dataset,
        variants: Sequence[Variant],
        num_seeds: int = 3,
        on_step: Optional[Callable[[Variant, int, StepRecord], None]] = None,
) -> list[VariantResult]:
    """
    Trains every variant once per seed (``config.seed + k`` for ``k < num_seeds``)
    and evaluates it on the validation set.
    """
    for variant in variants:
        model = config.model.with_variant(variant)
        check_compatible(model, train_set)
        check_compatible(model, val_set)

    results = []
    for variant in variants:
        seeds = [config.seed + offset for offset in range(num_seeds)]
        reports = []
        for seed in seeds:
            run = config.with_variant(variant).replace(seed=seed)
            callback = None
            if on_step is not None:
                def callback(record: StepRecord, variant=variant, seed=seed):
                    on_step(variant, seed, record)
            ckpt = train(run, train_set, on_step=callback)
            report = evaluate(run.model, ckpt.params, val_set)
            logger.info("%s seed %d: mAP50 %.4f", variant.value, seed, report.map50)
            reports.append(report)
        results.append(VariantResult(variant, seeds, reports))
    return results


def results_to_dict(results: Sequence[VariantResult]) -> dict:
    return {
        'variants': [
            {
                'variant': result.variant.value,
                'seeds': result.seeds,
                'per_seed': [report.to_dict() for report in result.per_seed],
                'mean': result.mean.to_dict(),
            }
            for result in results
        ],
    }


def format_results_table(results: Sequence[VariantResult]) -> str:
    """
    Seed-averaged headline metrics as a plain text table, in percent.
    """
    rows = [('Method', 'mAP_Total', 'mAP50', 'mAP75')]
    for result in results:
        mean = result.mean
        rows.append((
            result.variant.value,
            f"{100 * mean.map_total:.1f}%", f"{100 * mean.map50:.1f}%", f"{100 * mean.map75:.1f}%",
        ))
    widths = [max(len(row[col]) for row in rows) for col in range(4)]
    return '\n'.join(
        ' | '.join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
        for row in rows
    )


@dataclass
class VariantSummary:
    variant: Variant
    total: int
    groups: dict[str, int]


def summarize_variants(config: RunConfig, variants: Sequence[Variant]) -> list[VariantSummary]:
    summaries = []
    for variant in variants:
        params = init_params(config.model.with_variant(variant), seed=config.seed)
        groups = parameter_groups(params)
        summaries.append(VariantSummary(variant, sum(groups.values()), groups))
    return summaries


def format_summary(summaries: Sequence[VariantSummary]) -> str:
    lines = []
    for summary in summaries:
        lines.append(f"{summary.variant.value}: {summary.total} parameters")
        for name, count in summary.groups.items():
            lines.append(f"  {name:<15} {count}")
    return '\n'.join(lines)
