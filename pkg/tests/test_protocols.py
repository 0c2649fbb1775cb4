"""Experiment protocol orchestration."""

import numpy as np
import pytest

from gwrnet.datasets import SyntheticSpec, generate_synthetic, split_by_sessions
from gwrnet.labeling import LabelAssociations
from gwrnet.model import HyperParams, init_growing, init_static
from gwrnet.protocols import (
    MetricsRecord,
    ProtocolSpec,
    evaluate,
    forgetting_metrics,
    incremental_plan,
    metrics_census,
    run_batch,
    run_incremental,
    run_protocol,
    summarize,
    write_metrics_csv,
)
from gwrnet.snapshot import load_snapshot

TINY = SyntheticSpec(
    categories=3,
    instances=2,
    sessions=4,
    dim=6,
    frames_per_seq=5,
    cluster_spread=0.5,
    walk_step=0.05,
    noise=0.02,
)
TEST_SESSIONS = (2,)


def tiny_dataset():
    return generate_synthetic(TINY, seed=5)


def tiny_spec(**overrides):
    base = dict(
        kind="incremental",
        mode="growing",
        replay=False,
        n_max=30,
        trials=2,
        seed=3,
        test_sessions=TEST_SESSIONS,
    )
    base.update(overrides)
    return ProtocolSpec(**base)


def strip_wall(records):
    return [
        (r.trial, r.checkpoint, r.mode, r.replay, r.n_neurons, r.acc_overall,
         r.acc_seen, r.forgetting_mean, r.replay_steps, tuple(sorted(r.per_category.items())))
        for r in records
    ]


# -- spec validation ---------------------------------------------------------


def test_spec_batch_requires_epochs():
    with pytest.raises(ValueError, match="epochs"):
        tiny_spec(kind="batch")


def test_spec_incremental_rejects_multi_epoch():
    with pytest.raises(ValueError, match="one iteration"):
        tiny_spec(epochs=3)


def test_spec_rejects_bad_fields():
    with pytest.raises(ValueError):
        tiny_spec(trials=0)
    with pytest.raises(ValueError):
        tiny_spec(kind="stream")
    with pytest.raises(ValueError):
        tiny_spec(mode="frozen")
    with pytest.raises(ValueError):
        tiny_spec(test_sessions=())


# -- evaluation ---------------------------------------------------------------


def test_evaluate_perfect_memorization():
    dataset = tiny_dataset()
    _, test = split_by_sessions(dataset, TEST_SESSIONS)
    seq = test.sequences[0]
    hyper = HyperParams(num_contexts=0, alpha=(1.0,), n_max=test.num_frames + 2)
    net = init_growing(test.dim, hyper, (seq.features[0], seq.features[1]))
    counts = LabelAssociations()
    counts.record(0, seq.instance)
    counts.record(1, seq.instance)
    # memorize every frame of every test sequence as its own neuron
    for s in test.sequences:
        for t in range(len(s)):
            nid = net._append_neuron(s.features[t], np.zeros((0, test.dim)), 1.0)
            counts.record(nid, s.instance)
    result = evaluate(net, counts, test)
    assert result.overall == 1.0


def test_evaluate_unlabeled_network_scores_zero():
    dataset = tiny_dataset()
    _, test = split_by_sessions(dataset, TEST_SESSIONS)
    hyper = HyperParams(num_contexts=0, alpha=(1.0,), n_max=5)
    net = init_static(test.dim, hyper, -1.0, 1.0, 3)
    result = evaluate(net, LabelAssociations(), test)
    assert result.overall == 0.0
    assert all(c == 0 for c, _ in result.per_category.values())


def test_evaluate_rejects_empty_split():
    dataset = tiny_dataset()
    _, test = split_by_sessions(dataset, TEST_SESSIONS)
    empty = split_by_sessions(dataset, dataset.sessions)[0]
    hyper = HyperParams(num_contexts=0, alpha=(1.0,), n_max=5)
    net = init_static(test.dim, hyper, -1.0, 1.0, 3)
    with pytest.raises(ValueError, match="empty test split"):
        evaluate(net, LabelAssociations(), empty)


def test_evaluate_per_category_totals_cover_split():
    dataset = tiny_dataset()
    _, test = split_by_sessions(dataset, TEST_SESSIONS)
    hyper = HyperParams(num_contexts=0, alpha=(1.0,), n_max=5)
    net = init_static(test.dim, hyper, -1.0, 1.0, 3)
    result = evaluate(net, LabelAssociations(), test)
    assert sum(t for _, t in result.per_category.values()) == test.num_frames


# -- incremental protocol -------------------------------------------------------


def test_incremental_plan_is_mode_independent_and_seeded():
    dataset = tiny_dataset()
    train, _ = split_by_sessions(dataset, TEST_SESSIONS)
    grow = tiny_spec(mode="growing")
    static = tiny_spec(mode="static")
    for trial in range(3):
        order_g, batches_g = incremental_plan(grow, train, trial)
        order_s, batches_s = incremental_plan(static, train, trial)
        assert order_g == order_s
        assert [[s.sequence_id for s in b] for b in batches_g] == [
            [s.sequence_id for s in b] for b in batches_s
        ]
    a, _ = incremental_plan(grow, train, 0)
    b, _ = incremental_plan(grow, train, 1)
    assert set(a) == set(b)


def test_incremental_minibatch_covers_all_category_sequences():
    dataset = tiny_dataset()
    train, _ = split_by_sessions(dataset, TEST_SESSIONS)
    order, batches = incremental_plan(tiny_spec(), train, 0)
    for category, batch in zip(order, batches):
        expected = {s.sequence_id for s in train.sequences_of(category)}
        assert {s.sequence_id for s in batch} == expected


def test_incremental_one_checkpoint_per_category():
    dataset = tiny_dataset()
    spec = tiny_spec()
    records = run_incremental(spec, dataset)
    checkpoints = sorted({r.checkpoint for r in records})
    assert checkpoints == [1, 2, 3]
    for trial in range(spec.trials):
        assert len([r for r in records if r.trial == trial]) == 3


def test_incremental_single_pass_over_training_frames():
    dataset = tiny_dataset()
    train, _ = split_by_sessions(dataset, TEST_SESSIONS)
    spec = tiny_spec(trials=1)
    result = run_protocol(spec, dataset, with_snapshots=True)
    net, synapses, _ = load_snapshot(result.snapshots[0])
    assert net.step_count == train.num_frames
    # transitions: one per non-boundary step
    boundaries = len(train.sequences)
    assert synapses.total() == train.num_frames - boundaries


def test_incremental_growing_neuron_count_is_monotone():
    records = run_incremental(tiny_spec(), tiny_dataset())
    for trial in (0, 1):
        counts = [r.n_neurons for r in sorted(
            (x for x in records if x.trial == trial), key=lambda r: r.checkpoint)]
        assert all(a <= b for a, b in zip(counts, counts[1:]))
        assert counts[-1] <= 30


def test_incremental_static_keeps_capacity_count():
    records = run_incremental(tiny_spec(mode="static"), tiny_dataset())
    assert all(r.n_neurons == 30 for r in records)
    assert all(r.replay_steps == 0 for r in records)


def test_incremental_replay_reports_steps():
    records = run_incremental(tiny_spec(replay=True), tiny_dataset())
    finals = [r for r in records if r.checkpoint == 3]
    assert all(r.replay_steps > 0 for r in finals)
    for trial in (0, 1):
        steps = [r.replay_steps for r in sorted(
            (x for x in records if x.trial == trial), key=lambda r: r.checkpoint)]
        assert all(a <= b for a, b in zip(steps, steps[1:]))


def test_trial_records_do_not_depend_on_trial_count():
    dataset = tiny_dataset()
    two = run_incremental(tiny_spec(trials=2), dataset)
    three = run_incremental(tiny_spec(trials=3), dataset)
    assert strip_wall([r for r in three if r.trial < 2]) == strip_wall(two)


def test_acc_seen_tracks_encountered_categories():
    records = run_incremental(tiny_spec(), tiny_dataset())
    first = [r for r in records if r.trial == 0 and r.checkpoint == 1][0]
    # only one category encountered: its accuracy is the seen accuracy
    assert first.acc_seen >= first.acc_overall


# -- batch protocol ---------------------------------------------------------------


def test_batch_one_record_per_epoch():
    spec = tiny_spec(kind="batch", epochs=4)
    records = run_batch(spec, tiny_dataset())
    assert sorted({r.checkpoint for r in records}) == [1, 2, 3, 4]


def test_batch_growing_neuron_count_monotone():
    spec = tiny_spec(kind="batch", epochs=4)
    records = run_batch(spec, tiny_dataset())
    for trial in (0, 1):
        counts = [r.n_neurons for r in sorted(
            (x for x in records if x.trial == trial), key=lambda r: r.checkpoint)]
        assert all(a <= b for a, b in zip(counts, counts[1:]))


def test_batch_static_constant_count():
    spec = tiny_spec(kind="batch", epochs=3, mode="static")
    records = run_batch(spec, tiny_dataset())
    assert all(r.n_neurons == 30 for r in records)


def test_batch_rerun_is_deterministic():
    spec = tiny_spec(kind="batch", epochs=3)
    dataset = tiny_dataset()
    assert strip_wall(run_batch(spec, dataset)) == strip_wall(run_batch(spec, dataset))


def test_batch_kind_guard():
    with pytest.raises(ValueError):
        run_batch(tiny_spec(), tiny_dataset())
    with pytest.raises(ValueError):
        run_incremental(tiny_spec(kind="batch", epochs=2), tiny_dataset())


# -- parallel execution -------------------------------------------------------------


def test_parallel_trials_match_serial():
    dataset = tiny_dataset()
    spec = tiny_spec(trials=4)
    serial = run_protocol(spec, dataset, workers=1, with_snapshots=True)
    parallel = run_protocol(spec, dataset, workers=4, with_snapshots=True)
    assert strip_wall(serial.records) == strip_wall(parallel.records)
    assert serial.snapshots == parallel.snapshots


# -- metrics ------------------------------------------------------------------------


def fake_record(trial, checkpoint, per_category, acc=None):
    return MetricsRecord(
        trial=trial,
        checkpoint=checkpoint,
        mode="growing",
        replay=False,
        n_neurons=5,
        acc_overall=acc if acc is not None else float(np.mean(list(per_category.values()))),
        acc_seen=0.0,
        forgetting_mean=0.0,
        replay_steps=0,
        wall_ms=1.0,
        per_category=per_category,
    )


def test_forgetting_zero_without_decline():
    records = [fake_record(0, i + 1, {"a": 0.9}) for i in range(3)]
    assert forgetting_metrics(records) == {"a": pytest.approx(0.0)}


def test_forgetting_peak_minus_final():
    records = [
        fake_record(0, 1, {"a": 0.9}),
        fake_record(0, 2, {"a": 0.5}),
        fake_record(0, 3, {"a": 0.4}),
    ]
    assert forgetting_metrics(records)["a"] == pytest.approx(0.5)


def test_forgetting_needs_two_checkpoints():
    with pytest.raises(ValueError):
        forgetting_metrics([fake_record(0, 1, {"a": 0.9})])


def test_metrics_csv_is_deterministic_and_excludes_wall_time(tmp_path):
    records = run_incremental(tiny_spec(), tiny_dataset())
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_metrics_csv(records, a)
    write_metrics_csv(records, b)
    assert a.read_bytes() == b.read_bytes()
    header = a.read_text().splitlines()[0].split(",")
    assert "wall_ms" not in header
    assert header[:9] == [
        "trial", "checkpoint", "mode", "replay", "n_neurons",
        "acc_overall", "acc_seen", "forgetting_mean", "replay_steps",
    ]
    _, categories = metrics_census(records)
    assert header[9:] == [f"acc_{c}" for c in categories]


def test_summarize_mean_and_std():
    records = [
        fake_record(0, 1, {"a": 0.8}, acc=0.6),
        fake_record(1, 1, {"a": 0.4}, acc=0.8),
    ]
    doc = summarize(tiny_spec(), records)
    cell = doc["by_checkpoint"]["1"]["acc_overall"]
    assert cell["mean"] == pytest.approx(0.7)
    assert cell["std"] == pytest.approx(0.1)
    assert doc["by_checkpoint"]["1"]["acc_a"]["mean"] == pytest.approx(0.6)
