from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest

from modetr.autograd import Tensor
from modetr.evaluation import ClassMetrics, MetricReport
from modetr.exceptions import ModetrConfigError, ModetrContractError, ModetrDataError, ModetrFormatError
from modetr.model import ModelConfig, Variant, init_params, parameter_groups
from modetr.nn import named_parameters
from modetr.runner import (
    LOG_COLUMNS, Adam, Checkpoint, CsvStepLog, RunConfig, StepRecord, VariantResult,
    check_compatible, compare_variants, detect_dataset, evaluate, export_attention,
    format_results_table, format_summary, load_checkpoint, load_json_object,
    oracle_detector, predict_sample, results_to_dict, save_checkpoint, summarize_variants, train,
)
from modetr.runner import export
from modetr.runner.checkpoint import CHECKPOINT_MAGIC, decode_checkpoint, encode_checkpoint
from modetr.runner.export import attention_maps, normalize_map
from modetr.synth import Dataset, SceneSpec, generate_samples

SMALL = ModelConfig(
    height=16, width=16, d_model=16, num_heads=2,
    num_encoder_layers=1, num_decoder_layers=1, d_ff=16,
    num_queries=4, backbone_channels=(4, 8),
)

TINY_SCENES = SceneSpec(
    height=16, width=16, n_min=1, n_max=2, size_min=0.2, size_max=0.3, speed_min=1, speed_max=2,
)

CONFIG = RunConfig(model=SMALL, lr=3e-3, steps=3, batch_size=2, checkpoint_every=0, seed=5)

VARIANTS = [pytest.param(variant, id=variant.value) for variant in Variant]


@pytest.fixture(scope='module')
def dataset():
    return Dataset(generate_samples(TINY_SCENES, 6, seed=0), has_flow=True, spec=TINY_SCENES)


def param_arrays(params) -> dict[str, np.ndarray]:
    return {name: tensor.data.copy() for name, tensor in named_parameters(params)}


def assert_same_params(first, second):
    left, right = param_arrays(first), param_arrays(second)
    assert left.keys() == right.keys()
    for name in left:
        np.testing.assert_array_equal(left[name], right[name], err_msg=name)


#
# Configuration
#

def test_run_config_accepts_flat_model_fields():
    config = RunConfig.from_dict({'variant': 'RgbOf', 'num_queries': 7, 'lr': 0.01})
    assert config.variant is Variant.RGB_OF
    assert config.model.num_queries == 7
    assert config.lr == 0.01


def test_run_config_nested_and_flat_agree():
    flat = RunConfig.from_dict({'variant': 'LateTPE', 'd_model': 32})
    nested = RunConfig.from_dict({'model': {'variant': 'LateTPE', 'd_model': 32}})
    assert flat == nested


def test_run_config_dict_round_trip():
    config = CONFIG.with_variant(Variant.EARLY_TPE).replace(train_data='data/train')
    again = RunConfig.from_dict(json.loads(json.dumps(config.to_dict())))
    assert again == config


@pytest.mark.parametrize(
    ("data", "field"),
    [
        pytest.param({'variant': 'Baseline', 'model': {'variant': 'RgbOf'}}, 'variant', id="given_twice"),
        pytest.param({'lr': 0}, 'lr', id="zero_learning_rate"),
        pytest.param({'grad_clip': -1.0}, 'grad_clip', id="negative_clip"),
        pytest.param({'betas': [0.9, 1.0]}, 'betas', id="beta_of_one"),
        pytest.param({'batch_size': 0}, 'batch_size', id="empty_batch"),
        pytest.param({'steps': 2.5}, 'steps', id="fractional_steps"),
        pytest.param({'model': {'depth': 3}}, 'model.depth', id="unknown_model_key"),
        pytest.param({'cost': {'l1': -2}}, 'cost.l1', id="negative_cost"),
        pytest.param({'model': 'Baseline'}, 'model', id="model_not_object"),
    ],
)
def test_run_config_errors(data, field):
    with pytest.raises(ModetrConfigError) as excinfo:
        RunConfig.from_dict(data)
    assert excinfo.value.field == field


def test_invalid_json_reports_byte_offset(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text('{"lr": 0.1,\n "steps": }')
    with pytest.raises(ModetrConfigError) as excinfo:
        load_json_object(path)
    assert excinfo.value.positions['pos'].offset == 22


#
# Optimizer
#

def test_adam_first_step_moves_by_learning_rate():
    weight = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    weight.accumulate_grad(np.array([0.5, -0.1, 0.0]))
    optimizer = Adam([('w', weight)], lr=0.1, grad_clip=0.0)
    optimizer.step()
    np.testing.assert_allclose(weight.data, [0.9, -1.9, 3.0], atol=1e-6)
    assert optimizer.t == 1


def test_adam_clips_global_gradient_norm():
    first = Tensor(np.zeros(2), requires_grad=True)
    second = Tensor(np.zeros(1), requires_grad=True)
    first.accumulate_grad(np.array([3.0, 0.0]))
    second.accumulate_grad(np.array([4.0]))
    optimizer = Adam([('a', first), ('b', second)], lr=1.0, betas=(0.0, 0.0), grad_clip=1.0)
    assert optimizer.step() == pytest.approx(5.0)
    # with both decay rates zero each moment holds the clipped gradient itself
    np.testing.assert_allclose(optimizer.m['a'], [0.6, 0.0])
    np.testing.assert_allclose(optimizer.m['b'], [0.8])


def test_adam_treats_missing_gradient_as_zero():
    weight = Tensor(np.ones(2), requires_grad=True)
    optimizer = Adam([('w', weight)])
    optimizer.step()
    np.testing.assert_array_equal(weight.data, np.ones(2))


def test_adam_state_round_trip():
    weight = Tensor(np.ones(3), requires_grad=True)
    weight.accumulate_grad(np.array([0.1, 0.2, 0.3]))
    optimizer = Adam([('w', weight)])
    optimizer.step()
    again = Adam([('w', Tensor(np.ones(3), requires_grad=True))])
    again.load_state(optimizer.t, optimizer.state_arrays())
    assert again.t == 1
    np.testing.assert_array_equal(again.m['w'], optimizer.m['w'])
    np.testing.assert_array_equal(again.v['w'], optimizer.v['w'])


@pytest.mark.parametrize(
    "arrays",
    [
        pytest.param({'m.w': np.zeros(3)}, id="missing_second_moment"),
        pytest.param({'m.w': np.zeros(2), 'v.w': np.zeros(2)}, id="wrong_shape"),
    ],
)
def test_adam_rejects_bad_state(arrays):
    optimizer = Adam([('w', Tensor(np.ones(3), requires_grad=True))])
    with pytest.raises(ModetrContractError):
        optimizer.load_state(1, arrays)


#
# Step log
#

def test_csv_step_log_rows():
    stream = io.StringIO()
    log = CsvStepLog(stream)
    log(StepRecord(step=1, total=0.5, loss_cls=0.25, loss_l1=0.125, loss_giou=0.1))
    rows = list(csv.reader(io.StringIO(stream.getvalue())))
    assert rows[0] == list(LOG_COLUMNS)
    assert rows[1] == ['1', '0.5', '0.25', '0.125', '0.1']


#
# Compatibility
#

def test_check_compatible_rejects_empty_dataset():
    with pytest.raises(ModetrDataError):
        check_compatible(SMALL, Dataset([], has_flow=True))


def test_check_compatible_rejects_flowless_rgbof(dataset):
    flowless = Dataset([s.without_flow() for s in dataset.samples], has_flow=False)
    check_compatible(SMALL, flowless)
    with pytest.raises(ModetrDataError):
        check_compatible(SMALL.with_variant(Variant.RGB_OF), flowless)


@pytest.mark.parametrize(
    "changes",
    [
        pytest.param({'height': 24, 'width': 24}, id="frame_size"),
        pytest.param({'num_queries': 1}, id="too_few_queries"),
    ],
)
def test_check_compatible_rejects_mismatched_model(changes):
    crowded = Dataset(generate_samples(SceneSpec(**{**TINY_SCENES.to_dict(), 'n_min': 2}), 2), has_flow=True)
    model = ModelConfig.from_dict({**SMALL.to_dict(), **changes})
    with pytest.raises(ModetrDataError):
        check_compatible(model, crowded)


#
# Training and checkpoints
#

def test_training_is_deterministic(dataset):
    records = [[], []]
    first = train(CONFIG, dataset, on_step=records[0].append)
    second = train(CONFIG, dataset, on_step=records[1].append)
    assert records[0] == records[1]
    assert [r.step for r in records[0]] == [1, 2, 3]
    assert all(np.isfinite(r.total) for r in records[0])
    assert_same_params(first.params, second.params)


def test_training_changes_parameters(dataset):
    ckpt = train(CONFIG, dataset, steps=1)
    fresh = init_params(SMALL, seed=CONFIG.seed)
    changed = [
        name for name, array in param_arrays(ckpt.params).items()
        if not np.array_equal(array, param_arrays(fresh)[name])
    ]
    assert 'class_head.bias' in changed
    assert ckpt.step == ckpt.optimizer_t == 1


def test_checkpoint_round_trip_is_bit_exact(dataset, tmp_path):
    ckpt = train(CONFIG.with_variant(Variant.LATE_TPE), dataset, steps=2)
    path = tmp_path / 'run.ckpt'
    save_checkpoint(path, ckpt)
    loaded = load_checkpoint(path)
    assert loaded.config == ckpt.config
    assert loaded.step == 2
    assert loaded.rng_state == ckpt.rng_state
    assert_same_params(loaded.params, ckpt.params)
    sample = dataset[0]
    before = predict_sample(ckpt.config.model, ckpt.params, sample)
    after = predict_sample(loaded.config.model, loaded.params, sample)
    np.testing.assert_array_equal(before.class_logits.data, after.class_logits.data)
    np.testing.assert_array_equal(before.boxes.data, after.boxes.data)
    assert path.read_bytes()[:len(CHECKPOINT_MAGIC)] == CHECKPOINT_MAGIC
    assert [p.name for p in tmp_path.iterdir()] == ['run.ckpt']


def test_resume_matches_uninterrupted_run(dataset, tmp_path):
    config = CONFIG.replace(steps=4)
    uninterrupted = train(config, dataset)
    path = tmp_path / 'half.ckpt'
    train(config, dataset, steps=2, checkpoint_path=path)
    resumed = train(config, dataset, steps=2, resume=load_checkpoint(path))
    assert resumed.step == 4
    assert_same_params(resumed.params, uninterrupted.params)


def test_resume_without_steps_rewrites_identical_bytes(dataset, tmp_path):
    first, second = tmp_path / 'first.ckpt', tmp_path / 'second.ckpt'
    train(CONFIG, dataset, steps=2, checkpoint_path=first)
    train(CONFIG, dataset, steps=0, resume=load_checkpoint(first), checkpoint_path=second)
    assert first.read_bytes() == second.read_bytes()


def test_periodic_checkpoints(dataset, tmp_path):
    path = tmp_path / 'periodic.ckpt'
    seen = []

    def on_step(record):
        if path.exists():
            seen.append((record.step, load_checkpoint(path).step))

    train(CONFIG.replace(checkpoint_every=2), dataset, steps=3, on_step=on_step, checkpoint_path=path)
    # the callback of a step runs before that step's checkpoint is written
    assert seen == [(3, 2)]
    assert load_checkpoint(path).step == 3


def test_missing_checkpoint(tmp_path):
    with pytest.raises(ModetrFormatError):
        load_checkpoint(tmp_path / 'absent.ckpt')


def _blob():
    return encode_checkpoint(Checkpoint(config=CONFIG, params=init_params(SMALL, seed=0)))


@pytest.mark.parametrize(
    ("mutate", "offset"),
    [
        pytest.param(lambda blob: blob[:10], 10, id="truncated_preamble"),
        pytest.param(lambda blob: b'NOTMODE' + blob[7:], 0, id="bad_magic"),
        pytest.param(lambda blob: b'%PDF-%s' + blob[7:], 0, id="percent_in_magic"),
        pytest.param(lambda blob: blob[:40], 40, id="truncated_header"),
        pytest.param(lambda blob: blob[:15] + b'#' + blob[16:], 15, id="invalid_header"),
        pytest.param(lambda blob: blob[:-8], len(_blob()) - 8, id="truncated_payload"),
    ],
)
def test_checkpoint_decode_errors(mutate, offset):
    with pytest.raises(ModetrFormatError) as excinfo:
        decode_checkpoint(mutate(_blob()), 'run.ckpt')
    assert excinfo.value.positions['pos'].offset == offset
    assert 'run.ckpt' in str(excinfo.value)


#
# Evaluation
#

def test_oracle_detector_scores_perfectly(dataset):
    params = init_params(SMALL, seed=0)
    report = evaluate(SMALL, params, dataset, detector=oracle_detector)
    assert report.num_images == len(dataset)
    assert report.map_total == report.map50 == report.map75 == 1.0
    assert report.mean.map_total == 1.0


def test_evaluation_is_deterministic_across_workers(dataset):
    config = SMALL.with_variant(Variant.TWO_STREAM_RGB)
    params = init_params(config, seed=1)
    serial = evaluate(config, params, dataset)
    threaded = evaluate(config, params, dataset, workers=3)
    assert serial.to_dict() == threaded.to_dict()
    assert evaluate(config, params, dataset).to_dict() == serial.to_dict()


def test_detect_dataset_keeps_sample_order(dataset):
    dets = detect_dataset(dataset, oracle_detector, workers=4)
    assert [len(d) for d in dets] == [len(s.objects) for s in dataset.samples]
    with pytest.raises(ModetrContractError):
        detect_dataset(dataset, oracle_detector, workers=0)


def test_predict_sample_records_no_tape(dataset):
    preds = predict_sample(SMALL, init_params(SMALL, seed=0), dataset[0])
    assert preds.class_logits.entry is None
    assert preds.class_logits.shape == (SMALL.num_queries, 3)


#
# Attention export
#

@pytest.mark.parametrize(
    ("values", "expected"),
    [
        pytest.param(np.array([[0.0, 0.5], [1.0, 0.25]]), [[0, 128], [255, 64]], id="spread"),
        pytest.param(np.full((2, 2), 0.3), [[0, 0], [0, 0]], id="flat"),
    ],
)
def test_normalize_map(values, expected):
    gray = normalize_map(values)
    assert gray.dtype == np.uint8
    np.testing.assert_array_equal(gray, expected)


def test_attention_maps_fold_memory_blocks():
    attn = np.arange(2 * 2 * 3 * 8, dtype=float).reshape(2, 2, 3, 8)
    maps = attention_maps(attn, 2, (2, 2))
    assert maps.shape == (2, 3, 2, 2, 2)
    np.testing.assert_allclose(maps[1, 2, 1], attn[1, :, 2, 4:].mean(axis=0).reshape(2, 2))
    with pytest.raises(ModetrContractError):
        attention_maps(attn, 3, (2, 2))


@pytest.mark.parametrize("variant", VARIANTS)
def test_export_attention_files(dataset, tmp_path, variant):
    config = SMALL.with_variant(variant)
    written = export_attention(config, init_params(config, seed=0), dataset[0], tmp_path / 'maps')
    names = sorted(path.name for path in written)
    assert names == sorted(path.name for path in (tmp_path / 'maps').iterdir())
    pgms = [name for name in names if name.endswith('.pgm')]
    ppms = [name for name in names if name.endswith('.ppm')]
    if variant is Variant.EARLY_TPE:
        assert len(pgms) == 2 * SMALL.num_queries
        assert 'layer0_query00_t0.pgm' in pgms and 'layer0_query03_t1.pgm' in pgms
    else:
        assert pgms == [f"layer0_query{q:02d}.pgm" for q in range(SMALL.num_queries)]
    if variant in (Variant.BASELINE, Variant.RGB_OF):
        assert ppms == ['frame_t1.ppm']
    else:
        assert ppms == ['frame_t.ppm', 'frame_t1.ppm']
    assert (tmp_path / 'maps' / pgms[0]).read_bytes().startswith(b'P5')
    assert (tmp_path / 'maps' / ppms[0]).read_bytes().startswith(b'P6')


def test_export_counts_scale_with_layers_and_queries(dataset, tmp_path):
    config = ModelConfig.from_dict({**SMALL.to_dict(), 'num_decoder_layers': 2, 'num_queries': 10})
    written = export_attention(config, init_params(config, seed=0), dataset[0], tmp_path / 'maps')
    assert sum(path.suffix == '.pgm' for path in written) == 20
    assert sum(path.suffix == '.ppm' for path in written) == 1


def test_failed_export_leaves_no_partial_maps(dataset, tmp_path, monkeypatch):
    config = SMALL.with_variant(Variant.TWO_STREAM_RGB)
    params = init_params(config, seed=0)

    def failing_write(path, frame):
        raise OSError("disk full")

    monkeypatch.setattr(export, 'write_ppm', failing_write)
    with pytest.raises(OSError, match="disk full"):
        export_attention(config, params, dataset[0], tmp_path / 'maps')
    assert list(tmp_path.iterdir()) == []


def test_failed_export_keeps_previous_maps(dataset, tmp_path, monkeypatch):
    config = SMALL.with_variant(Variant.BASELINE)
    params = init_params(config, seed=0)
    written = export_attention(config, params, dataset[0], tmp_path / 'maps')
    before = {path.name: path.read_bytes() for path in written}

    def failing_write(path, gray):
        raise OSError("disk full")

    monkeypatch.setattr(export, 'write_pgm', failing_write)
    with pytest.raises(OSError):
        export_attention(config, params, dataset[1], tmp_path / 'maps')
    assert [path.name for path in tmp_path.iterdir()] == ['maps']
    assert {path.name: path.read_bytes() for path in (tmp_path / 'maps').iterdir()} == before


def test_export_replaces_previous_maps(dataset, tmp_path):
    early = SMALL.with_variant(Variant.EARLY_TPE)
    export_attention(early, init_params(early, seed=0), dataset[0], tmp_path / 'maps')
    baseline = SMALL.with_variant(Variant.BASELINE)
    written = export_attention(baseline, init_params(baseline, seed=0), dataset[0], tmp_path / 'maps')
    names = sorted(path.name for path in written)
    assert sorted(path.name for path in (tmp_path / 'maps').iterdir()) == names
    assert not any('_t0' in path.name for path in written)
    assert [path.name for path in tmp_path.iterdir()] == ['maps']


def test_export_refuses_directory_with_other_files(dataset, tmp_path):
    (tmp_path / 'maps').mkdir()
    (tmp_path / 'maps' / 'notes.txt').write_text('keep me')
    config = SMALL.with_variant(Variant.BASELINE)
    with pytest.raises(ModetrDataError, match="notes.txt"):
        export_attention(config, init_params(config, seed=0), dataset[0], tmp_path / 'maps')
    assert (tmp_path / 'maps' / 'notes.txt').read_text() == 'keep me'

#
# Comparison and summaries
#

def test_compare_variants_structure(dataset):
    config = CONFIG.replace(steps=1)
    variants = [Variant.BASELINE, Variant.EARLY_TPE]
    results = compare_variants(config, dataset, dataset, variants, num_seeds=2)
    assert [r.variant for r in results] == variants
    assert all(r.seeds == [5, 6] and len(r.per_seed) == 2 for r in results)
    data = results_to_dict(results)
    assert [entry['variant'] for entry in data['variants']] == ['Baseline', 'EarlyTPE']
    lines = format_results_table(results).splitlines()
    assert lines[0].split(' | ')[0].strip() == 'Method'
    assert lines[1].startswith('Baseline') and lines[2].startswith('EarlyTPE')


def test_compare_checks_every_variant_first():
    flowless = Dataset(generate_samples(TINY_SCENES, 2, with_flow=False), has_flow=False)
    with pytest.raises(ModetrDataError):
        compare_variants(CONFIG, flowless, flowless, [Variant.BASELINE, Variant.RGB_OF], num_seeds=1)


def test_results_table_formats_percentages():
    metrics = ClassMetrics(0.4567, 0.75, 0.125)
    report = MetricReport({'moving': metrics}, metrics, 2)
    table = format_results_table([VariantResult(Variant.RGB_OF, [0], [report])])
    assert table.splitlines()[1].split(' | ') == ['RgbOf ', '45.7%    ', '75.0%', '12.5%']


def test_summaries_match_parameter_groups():
    summaries = summarize_variants(CONFIG, list(Variant))
    for summary in summaries:
        groups = parameter_groups(init_params(SMALL.with_variant(summary.variant), seed=0))
        assert summary.groups == groups
        assert summary.total == sum(groups.values())
    text = format_summary(summaries)
    assert text.splitlines()[0].startswith('Baseline: ')


#
# Long experiments
#

@pytest.mark.slow
def test_overfits_small_dataset(dataset):
    small_set = Dataset(dataset.samples[:2], has_flow=True)
    config = CONFIG.replace(steps=200, lr=3e-3, batch_size=2)
    records = []
    train(config, small_set, on_step=records.append)
    early = np.mean([r.total for r in records[:10]])
    late = np.mean([r.total for r in records[-10:]])
    assert late < 0.5 * early


@pytest.mark.slow
def test_default_training_quarters_the_loss():
    data = Dataset(generate_samples(SceneSpec(), 16, seed=0), has_flow=True, spec=SceneSpec())
    records = []
    train(RunConfig(checkpoint_every=0), data, on_step=records.append)
    assert len(records) == 300
    assert records[-1].total < 0.25 * records[0].total


@pytest.mark.slow
@pytest.mark.parametrize("variant", VARIANTS)
def test_every_variant_overfits_sixteen_samples(variant):
    data = Dataset(generate_samples(SceneSpec(), 16, seed=0), has_flow=True, spec=SceneSpec())
    config = RunConfig(steps=1500, checkpoint_every=0).with_variant(variant)
    ckpt = train(config, data)
    assert evaluate(config.model, ckpt.params, data).map50 >= 0.90


@pytest.mark.slow
def test_flow_beats_two_frames_beats_single_frame_under_ego_motion():
    spec = SceneSpec(ego_motion=True)
    train_set = Dataset(generate_samples(spec, 64, seed=0), has_flow=True, spec=spec)
    val_set = Dataset(generate_samples(spec, 32, seed=10_000), has_flow=True, spec=spec)
    variants = [Variant.BASELINE, Variant.TWO_STREAM_RGB, Variant.RGB_OF]
    config = RunConfig(steps=1500, checkpoint_every=0)
    results = compare_variants(config, train_set, val_set, variants, num_seeds=3)
    baseline, two_stream, rgb_of = (result.mean.map50 for result in results)
    assert rgb_of >= two_stream >= baseline


@pytest.mark.slow
def test_full_comparison_runs_every_variant(dataset):
    results = compare_variants(CONFIG.replace(steps=20), dataset, dataset, list(Variant), num_seeds=3)
    assert [result.variant for result in results] == list(Variant)
    for result in results:
        assert result.seeds == [5, 6, 7]
        assert all(report.num_images == len(dataset) for report in result.per_seed)
        assert 0.0 <= result.mean.map_total <= result.mean.map50 <= 1.0
    lines = format_results_table(results).splitlines()
    assert [line.split()[0] for line in lines[1:]] == [variant.value for variant in Variant]
