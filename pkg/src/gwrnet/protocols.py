"""Experiment protocols: batch and class-incremental training.

Both protocols train static and growing networks under one capacity bound so
that runs differ only in mode; paired comparisons therefore isolate the
effect of growth. Batch training reshuffles the sequence order every epoch
and evaluates after each one. Incremental training presents one category
mini-batch at a time, exactly one iteration each, optionally followed by a
replay episode, and evaluates after each category.

All randomness is keyed by (seed, trial), so trials are independent,
reproducible and order-insensitive, which also makes them safe to run in
parallel worker processes.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import Dataset, split_by_sessions
from .labeling import LabelAssociations, classify_sample
from .model import GROWING, STATIC, HyperParams, Network, init_growing, init_static
from .replay import TemporalSynapses, replay_episode
from .snapshot import save_snapshot

log = logging.getLogger(__name__)

BATCH = "batch"
INCREMENTAL = "incremental"

# static-mode weight support: bounding box of the first presented batch,
# expanded by this fraction of the per-dimension range
BOUNDS_MARGIN = 0.05

DEFAULT_TEST_SESSIONS = (3, 7, 10)


@dataclass(frozen=True)
class ProtocolSpec:
    kind: str = INCREMENTAL
    mode: str = GROWING
    replay: bool = False
    n_max: int = 300
    epochs: int = 0
    trials: int = 10
    seed: int = 1
    test_sessions: tuple[int, ...] = DEFAULT_TEST_SESSIONS
    hyper: HyperParams = field(default_factory=HyperParams)

    def __post_init__(self):
        if self.kind not in (BATCH, INCREMENTAL):
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        if self.mode not in (GROWING, STATIC):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.kind == BATCH and self.epochs < 1:
            raise ValueError("batch protocol needs epochs >= 1")
        if self.kind == INCREMENTAL and self.epochs not in (0, 1):
            raise ValueError("incremental protocol fixes one iteration per mini-batch")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.n_max < 2:
            raise ValueError("n_max must be at least 2")
        if not self.test_sessions:
            raise ValueError("test_sessions must not be empty")

    def resolved_hyper(self) -> HyperParams:
        return replace(self.hyper, n_max=self.n_max)


@dataclass
class MetricsRecord:
    trial: int
    checkpoint: int
    mode: str
    replay: bool
    n_neurons: int
    acc_overall: float
    acc_seen: float
    forgetting_mean: float
    replay_steps: int
    wall_ms: float
    per_category: dict[str, float]


@dataclass
class EvalResult:
    overall: float
    correct: int
    total: int
    per_category: dict[str, tuple[int, int]]  # category -> (correct, frames)

    def category_accuracy(self, category: str) -> float:
        correct, total = self.per_category[category]
        return correct / total if total else 0.0

    def subset_accuracy(self, categories) -> float:
        pairs = [self.per_category[c] for c in categories if c in self.per_category]
        total = sum(t for _, t in pairs)
        return sum(c for c, _ in pairs) / total if total else 0.0


def evaluate(network: Network, label_counts: LabelAssociations, test_split: Dataset) -> EvalResult:
    """Frame-level instance accuracy over the test split.

    Test sequences are walked in order with a fresh context per sequence;
    absent predictions count as wrong.
    """
    if test_split.num_frames == 0:
        raise ValueError("empty test split")
    per_category = {c: [0, 0] for c in test_split.categories}
    correct = 0
    for seq in test_split.sequences:
        ctx = network.new_match_context()
        bucket = per_category[seq.category]
        for t in range(len(seq)):
            pred = classify_sample(network, label_counts, seq.features[t], ctx)
            bucket[1] += 1
            if pred == seq.instance:
                bucket[0] += 1
                correct += 1
    total = test_split.num_frames
    return EvalResult(
        overall=correct / total,
        correct=correct,
        total=total,
        per_category={c: (v[0], v[1]) for c, v in per_category.items()},
    )


def forgetting_metrics(records: list[MetricsRecord]) -> dict[str, float]:
    """Per-category forgetting over one trial: peak accuracy minus final."""
    ordered = sorted(records, key=lambda r: r.checkpoint)
    if len(ordered) < 2:
        raise ValueError("forgetting needs at least two checkpoints")
    final = ordered[-1].per_category
    result = {}
    for category in final:
        peak = max(r.per_category[category] for r in ordered)
        result[category] = peak - final[category]
    return result


def _expand_bounds(frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    low = frames.min(axis=0)
    high = frames.max(axis=0)
    span = high - low
    return low - BOUNDS_MARGIN * span, high + BOUNDS_MARGIN * span


def _trial_rng(spec: ProtocolSpec, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((spec.seed, trial, 0)))


def _init_network(spec: ProtocolSpec, dim: int, first_batch: np.ndarray, trial: int) -> Network:
    hyper = spec.resolved_hyper()
    if spec.mode == STATIC:
        low, high = _expand_bounds(first_batch)
        init_seed = int(np.random.SeedSequence((spec.seed, trial, 1)).generate_state(1)[0])
        return init_static(dim, hyper, low, high, init_seed)
    if first_batch.shape[0] < 2:
        raise ValueError("growing mode needs at least two training frames")
    return init_growing(dim, hyper, (first_batch[0], first_batch[1]))


@dataclass
class _TrialOutput:
    records: list[MetricsRecord]
    snapshot: str | None


def _checkpoint_record(
    spec,
    trial,
    checkpoint,
    network,
    result,
    encountered,
    peaks,
    replay_steps,
    wall_ms,
) -> MetricsRecord:
    per_cat = {c: result.category_accuracy(c) for c in result.per_category}
    for c in encountered:
        if c in per_cat:
            peaks[c] = max(peaks.get(c, 0.0), per_cat[c])
    tracked = [c for c in encountered if c in peaks]
    forgetting = (
        sum(peaks[c] - per_cat[c] for c in tracked) / len(tracked) if tracked else 0.0
    )
    return MetricsRecord(
        trial=trial,
        checkpoint=checkpoint,
        mode=spec.mode,
        replay=spec.replay,
        n_neurons=network.num_neurons,
        acc_overall=result.overall,
        acc_seen=result.subset_accuracy(encountered),
        forgetting_mean=forgetting,
        replay_steps=replay_steps,
        wall_ms=wall_ms,
        per_category=per_cat,
    )


def _train_sequence(network, seq, synapses, label_counts):
    network.reset_context()
    features = seq.features
    for t in range(features.shape[0]):
        network.step(features[t], seq.instance, synapses, label_counts)


def incremental_plan(
    spec: ProtocolSpec, train: Dataset, trial: int
) -> tuple[list[str], list[list]]:
    """Category presentation order and per-category mini-batches for a trial.

    Each mini-batch holds every training sequence of the category's
    instances, in the trial's shuffled session order; the plan depends only
    on (seed, trial), never on the network mode, so paired static and
    growing runs see identical streams.
    """
    rng = _trial_rng(spec, trial)
    categories = train.categories
    category_order = [categories[i] for i in rng.permutation(len(categories))]
    sessions = train.sessions
    session_order = [sessions[i] for i in rng.permutation(len(sessions))]
    minibatches = []
    for category in category_order:
        seqs = []
        for session in session_order:
            seqs.extend(
                sorted(train.sequences_of(category, session), key=lambda s: s.instance)
            )
        minibatches.append(seqs)
    return category_order, minibatches


def _run_incremental_trial(spec: ProtocolSpec, dataset: Dataset, trial: int, with_snapshot: bool) -> _TrialOutput:
    train, test = split_by_sessions(dataset, spec.test_sessions)
    if train.num_frames == 0:
        raise ValueError("train split is empty")
    category_order, minibatches = incremental_plan(spec, train, trial)

    first_batch = np.concatenate([s.features for s in minibatches[0]])
    network = _init_network(spec, train.dim, first_batch, trial)
    synapses = TemporalSynapses()
    label_counts = LabelAssociations()

    records: list[MetricsRecord] = []
    peaks: dict[str, float] = {}
    replay_steps = 0
    last = time.perf_counter()
    for index, category in enumerate(category_order):
        for seq in minibatches[index]:
            _train_sequence(network, seq, synapses, label_counts)
        network.reset_context()
        if spec.replay:
            report = replay_episode(network, synapses, label_counts)
            replay_steps += report.steps_applied
        result = evaluate(network, label_counts, test)
        now = time.perf_counter()
        records.append(
            _checkpoint_record(
                spec,
                trial,
                index + 1,
                network,
                result,
                category_order[: index + 1],
                peaks,
                replay_steps,
                (now - last) * 1000.0,
            )
        )
        last = now
    snapshot = save_snapshot(network, synapses, label_counts) if with_snapshot else None
    return _TrialOutput(records=records, snapshot=snapshot)


def _run_batch_trial(spec: ProtocolSpec, dataset: Dataset, trial: int, with_snapshot: bool) -> _TrialOutput:
    train, test = split_by_sessions(dataset, spec.test_sessions)
    if train.num_frames == 0:
        raise ValueError("train split is empty")
    rng = _trial_rng(spec, trial)
    sequences = train.sequences
    epoch_orders = [rng.permutation(len(sequences)) for _ in range(spec.epochs)]

    # the first presented batch is a full epoch, so static bounds and the
    # growing seed pair both come from the whole training split
    network = _init_network(spec, train.dim, train.all_features(), trial)
    synapses = TemporalSynapses()
    label_counts = LabelAssociations()

    categories = train.categories
    records: list[MetricsRecord] = []
    peaks: dict[str, float] = {}
    replay_steps = 0
    last = time.perf_counter()
    for epoch in range(spec.epochs):
        for seq_index in epoch_orders[epoch]:
            _train_sequence(network, sequences[seq_index], synapses, label_counts)
        network.reset_context()
        if spec.replay:
            report = replay_episode(network, synapses, label_counts)
            replay_steps += report.steps_applied
        result = evaluate(network, label_counts, test)
        now = time.perf_counter()
        records.append(
            _checkpoint_record(
                spec,
                trial,
                epoch + 1,
                network,
                result,
                categories,
                peaks,
                replay_steps,
                (now - last) * 1000.0,
            )
        )
        last = now
    snapshot = save_snapshot(network, synapses, label_counts) if with_snapshot else None
    return _TrialOutput(records=records, snapshot=snapshot)


def _trial_job(args) -> _TrialOutput:
    spec, dataset, trial, with_snapshot = args
    if spec.kind == BATCH:
        return _run_batch_trial(spec, dataset, trial, with_snapshot)
    return _run_incremental_trial(spec, dataset, trial, with_snapshot)


@dataclass
class ProtocolResult:
    spec: ProtocolSpec
    records: list[MetricsRecord]
    snapshots: dict[int, str]


def run_protocol(
    spec: ProtocolSpec,
    dataset: Dataset,
    workers: int = 1,
    with_snapshots: bool = False,
) -> ProtocolResult:
    """Run all trials of a protocol; record order is (trial, checkpoint)."""
    log.info(
        "running %s/%s%s: %d trial(s), n_max=%d, %d workers",
        spec.kind, spec.mode, "+replay" if spec.replay else "",
        spec.trials, spec.n_max, workers,
    )
    jobs = [(spec, dataset, trial, with_snapshots) for trial in range(spec.trials)]
    if workers <= 1 or spec.trials == 1:
        outputs = [_trial_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, spec.trials)) as pool:
            outputs = list(pool.map(_trial_job, jobs))
    records: list[MetricsRecord] = []
    snapshots: dict[int, str] = {}
    for trial, output in enumerate(outputs):
        records.extend(output.records)
        if output.snapshot is not None:
            snapshots[trial] = output.snapshot
    return ProtocolResult(spec=spec, records=records, snapshots=snapshots)


def run_batch(spec: ProtocolSpec, dataset: Dataset, workers: int = 1) -> list[MetricsRecord]:
    if spec.kind != BATCH:
        raise ValueError("spec.kind must be 'batch'")
    return run_protocol(spec, dataset, workers=workers).records


def run_incremental(spec: ProtocolSpec, dataset: Dataset, workers: int = 1) -> list[MetricsRecord]:
    if spec.kind != INCREMENTAL:
        raise ValueError("spec.kind must be 'incremental'")
    return run_protocol(spec, dataset, workers=workers).records


# -- reporting ---------------------------------------------------------------


def metrics_census(records: list[MetricsRecord]) -> tuple[list[int], list[str]]:
    checkpoints = sorted({r.checkpoint for r in records})
    categories = sorted({c for r in records for c in r.per_category})
    return checkpoints, categories


def write_metrics_csv(records: list[MetricsRecord], path) -> None:
    """Deterministic per-(trial, checkpoint) metrics table.

    Wall times are intentionally not part of this file (they are not
    reproducible); they go to the timing sidecar instead.
    """
    _, categories = metrics_census(records)
    header = [
        "trial",
        "checkpoint",
        "mode",
        "replay",
        "n_neurons",
        "acc_overall",
        "acc_seen",
        "forgetting_mean",
        "replay_steps",
    ] + [f"acc_{c}" for c in categories]
    ordered = sorted(records, key=lambda r: (r.trial, r.checkpoint))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in ordered:
            cells = [
                str(r.trial),
                str(r.checkpoint),
                r.mode,
                str(int(r.replay)),
                str(r.n_neurons),
                repr(r.acc_overall),
                repr(r.acc_seen),
                repr(r.forgetting_mean),
                str(r.replay_steps),
            ] + [repr(r.per_category.get(c, 0.0)) for c in categories]
            fh.write(",".join(cells) + "\n")


def write_timing_csv(records: list[MetricsRecord], path) -> None:
    ordered = sorted(records, key=lambda r: (r.trial, r.checkpoint))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("trial,checkpoint,wall_ms\n")
        for r in ordered:
            fh.write(f"{r.trial},{r.checkpoint},{r.wall_ms:.3f}\n")


def summarize(spec: ProtocolSpec, records: list[MetricsRecord], config_echo=None) -> dict:
    """Per-checkpoint mean and stddev across trials, JSON-ready."""
    checkpoints, categories = metrics_census(records)
    by_checkpoint = {}
    for cp in checkpoints:
        rows = [r for r in records if r.checkpoint == cp]
        entry = {}
        for name, getter in (
            ("acc_overall", lambda r: r.acc_overall),
            ("acc_seen", lambda r: r.acc_seen),
            ("forgetting_mean", lambda r: r.forgetting_mean),
            ("n_neurons", lambda r: float(r.n_neurons)),
            ("replay_steps", lambda r: float(r.replay_steps)),
        ):
            values = np.array([getter(r) for r in rows])
            entry[name] = {"mean": float(values.mean()), "std": float(values.std())}
        for category in categories:
            values = np.array([r.per_category.get(category, 0.0) for r in rows])
            entry[f"acc_{category}"] = {
                "mean": float(values.mean()),
                "std": float(values.std()),
            }
        by_checkpoint[str(cp)] = entry
    doc = {
        "protocol": {
            "kind": spec.kind,
            "mode": spec.mode,
            "replay": spec.replay,
            "n_max": spec.n_max,
            "epochs": spec.epochs,
            "trials": spec.trials,
            "seed": spec.seed,
            "test_sessions": list(spec.test_sessions),
        },
        "checkpoints": checkpoints,
        "categories": categories,
        "by_checkpoint": by_checkpoint,
    }
    if config_echo is not None:
        doc["config"] = config_echo
    return doc
