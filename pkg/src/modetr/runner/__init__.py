"""
This modetr subpackage drives whole runs:
configuration, training, checkpoints, evaluation, attention export
and variant comparisons.
"""
from __future__ import annotations

from modetr.runner.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from modetr.runner.compare import (
    VariantResult, VariantSummary, compare_variants,
    format_results_table, format_summary, results_to_dict, summarize_variants,
)
from modetr.runner.config import RunConfig, load_json_object
from modetr.runner.evaluate import (
    detect_dataset, evaluate, model_detector, oracle_detector, predict_sample,
)
from modetr.runner.export import export_attention
from modetr.runner.optim import Adam
from modetr.runner.train import LOG_COLUMNS, CsvStepLog, StepRecord, check_compatible, train

__all__ = [
    'RunConfig', 'load_json_object',
    'Checkpoint', 'save_checkpoint', 'load_checkpoint',
    'Adam', 'LOG_COLUMNS', 'StepRecord', 'CsvStepLog', 'check_compatible', 'train',
    'predict_sample', 'model_detector', 'oracle_detector', 'detect_dataset', 'evaluate',
    'export_attention',
    'VariantResult', 'compare_variants', 'results_to_dict', 'format_results_table',
    'VariantSummary', 'summarize_variants', 'format_summary',
]
