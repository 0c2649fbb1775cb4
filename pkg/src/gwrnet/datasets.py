"""Temporally correlated labeled feature-vector streams.

A dataset is a collection of sequences, each one the frames of a single
object instance recorded in a single session. The synthetic generator builds
a desk-scale stand-in with the same shape as a multi-session object
recognition corpus: category centers on the unit sphere, instance prototypes
scattered around them, per-session shifts, and a mean-reverting random walk
within each sequence. Real pre-extracted features load from a flat CSV.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

log = logging.getLogger(__name__)

# pullback factor of the within-sequence walk; keeps the walk stationary
# around the session prototype instead of drifting off
WALK_PULLBACK = 0.9

CSV_FIXED_COLUMNS = ["label_category", "label_instance", "session", "sequence", "frame"]


@dataclass
class Frame:
    features: np.ndarray
    category: str
    instance: str
    session: int
    sequence: int
    frame_index: int


@dataclass
class Sequence:
    """Ordered frames of one (instance, session) recording."""

    category: str
    instance: str
    session: int
    sequence_id: int
    features: np.ndarray  # (frames, dim)

    def __len__(self) -> int:
        return self.features.shape[0]

    def frames(self) -> Iterator[Frame]:
        for t in range(len(self)):
            yield Frame(
                features=self.features[t],
                category=self.category,
                instance=self.instance,
                session=self.session,
                sequence=self.sequence_id,
                frame_index=t,
            )


class Dataset:
    """Sequences ordered by (session, sequence id)."""

    def __init__(self, sequences: list[Sequence], dim: Optional[int] = None):
        dims = {seq.features.shape[1] for seq in sequences}
        if len(dims) > 1:
            raise ValueError(f"inconsistent feature dimensions: {sorted(dims)}")
        if dims:
            found = dims.pop()
            if dim is not None and dim != found:
                raise ValueError(f"declared dim {dim} does not match data dim {found}")
            dim = found
        elif dim is None:
            raise ValueError("empty dataset needs an explicit dim")
        self.sequences = sorted(sequences, key=lambda s: (s.session, s.sequence_id))
        self.dim = dim

    @property
    def categories(self) -> list[str]:
        return sorted({s.category for s in self.sequences})

    @property
    def instances(self) -> list[str]:
        return sorted({s.instance for s in self.sequences})

    @property
    def sessions(self) -> list[int]:
        return sorted({s.session for s in self.sequences})

    @property
    def num_frames(self) -> int:
        return sum(len(s) for s in self.sequences)

    def frames(self) -> Iterator[Frame]:
        for seq in self.sequences:
            yield from seq.frames()

    def sequences_of(
        self, category: Optional[str] = None, session: Optional[int] = None
    ) -> list[Sequence]:
        return [
            s
            for s in self.sequences
            if (category is None or s.category == category)
            and (session is None or s.session == session)
        ]

    def all_features(self) -> np.ndarray:
        if not self.sequences:
            return np.zeros((0, self.dim))
        return np.concatenate([s.features for s in self.sequences], axis=0)


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape and dispersion of the synthetic benchmark.

    ``cluster_spread`` is the per-dimension std of instance prototypes around
    their category center; session shifts use half of it. ``walk_step`` is
    the per-frame step std of the mean-reverting within-sequence walk and
    ``noise`` the i.i.d. observation noise std.
    """

    categories: int = 10
    instances: int = 5
    sessions: int = 11
    dim: int = 16
    frames_per_seq: int = 20
    cluster_spread: float = 0.7
    walk_step: float = 0.1
    noise: float = 0.02

    def __post_init__(self):
        if min(self.categories, self.instances, self.sessions) < 1:
            raise ValueError("categories, instances and sessions must be at least 1")
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        if self.frames_per_seq < 1:
            raise ValueError("frames_per_seq must be at least 1")
        if min(self.cluster_spread, self.walk_step, self.noise) < 0:
            raise ValueError("spread, walk and noise must be nonnegative")


def _rng(*entropy) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy))


def generate_synthetic(spec: SyntheticSpec, seed: int) -> Dataset:
    """Deterministic synthetic dataset for the given spec and seed.

    Every random draw is keyed by (seed, role, indices), so sequences could
    be generated independently in any order and still come out identical.
    """
    centers = _rng(seed, 0).standard_normal((spec.categories, spec.dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    sequences = []
    for ci in range(spec.categories):
        category = f"c{ci:02d}"
        for ii in range(spec.instances):
            instance = f"{category}o{ii}"
            proto = centers[ci] + spec.cluster_spread * _rng(
                seed, 1, ci, ii
            ).standard_normal(spec.dim)
            for si in range(1, spec.sessions + 1):
                rng = _rng(seed, 2, ci, ii, si)
                shifted = proto + (spec.cluster_spread / 2.0) * rng.standard_normal(
                    spec.dim
                )
                frames = np.empty((spec.frames_per_seq, spec.dim))
                dev = np.zeros(spec.dim)
                for t in range(spec.frames_per_seq):
                    dev = WALK_PULLBACK * dev + spec.walk_step * rng.standard_normal(
                        spec.dim
                    )
                    frames[t] = shifted + dev + spec.noise * rng.standard_normal(
                        spec.dim
                    )
                sequences.append(
                    Sequence(
                        category=category,
                        instance=instance,
                        session=si,
                        sequence_id=0,  # assigned below
                        features=frames,
                    )
                )
    # stable global sequence ids in (session, category, instance) order
    sequences.sort(key=lambda s: (s.session, s.category, s.instance))
    renumbered = [
        Sequence(s.category, s.instance, s.session, seq_id, s.features)
        for seq_id, s in enumerate(sequences)
    ]
    return Dataset(renumbered)


def write_features(dataset: Dataset, path) -> None:
    """Write the flat feature CSV; floats use shortest round-trip form."""
    header = CSV_FIXED_COLUMNS + [f"f{i}" for i in range(dataset.dim)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for frame in dataset.frames():
            cells = [
                frame.category,
                frame.instance,
                str(frame.session),
                str(frame.sequence),
                str(frame.frame_index),
            ] + [repr(float(v)) for v in frame.features]
            fh.write(",".join(cells) + "\n")


class FeatureFileError(ValueError):
    """Malformed feature CSV; message carries the offending line number."""


def load_features(path) -> Dataset:
    """Load a feature CSV written by :func:`write_features` (or compatible)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FeatureFileError("line 1: empty file")
    header = lines[0].split(",")
    if header[: len(CSV_FIXED_COLUMNS)] != CSV_FIXED_COLUMNS:
        raise FeatureFileError(
            f"line 1: header must start with {','.join(CSV_FIXED_COLUMNS)}"
        )
    feature_cols = header[len(CSV_FIXED_COLUMNS) :]
    dim = len(feature_cols)
    if dim < 1 or feature_cols != [f"f{i}" for i in range(dim)]:
        raise FeatureFileError("line 1: feature columns must be f0..f{n-1}")

    # sequence id -> (category, instance, session, [rows]); frame indices must
    # rise strictly within a sequence and a sequence id must not reappear
    # after another sequence started
    open_seq: Optional[int] = None
    seen: dict[int, tuple] = {}
    rows: dict[int, list[np.ndarray]] = {}
    last_frame: dict[int, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise FeatureFileError(
                f"line {lineno}: expected {len(header)} columns, got {len(cells)}"
            )
        category, instance = cells[0], cells[1]
        try:
            session = int(cells[2])
            seq_id = int(cells[3])
            frame_index = int(cells[4])
            features = np.array([float(v) for v in cells[5:]])
        except ValueError as exc:
            raise FeatureFileError(f"line {lineno}: {exc}") from None
        key = (category, instance, session)
        if seq_id in seen:
            if seen[seq_id] != key:
                raise FeatureFileError(
                    f"line {lineno}: sequence {seq_id} changes labels mid-stream"
                )
            if open_seq != seq_id:
                raise FeatureFileError(
                    f"line {lineno}: sequence {seq_id} is not contiguous"
                )
            if frame_index <= last_frame[seq_id]:
                raise FeatureFileError(
                    f"line {lineno}: frame index {frame_index} does not increase"
                )
        else:
            seen[seq_id] = key
            rows[seq_id] = []
        rows[seq_id].append(features)
        last_frame[seq_id] = frame_index
        open_seq = seq_id
    if not rows:
        raise FeatureFileError("line 2: no data rows")
    sequences = [
        Sequence(
            category=seen[seq_id][0],
            instance=seen[seq_id][1],
            session=seen[seq_id][2],
            sequence_id=seq_id,
            features=np.vstack(rows[seq_id]),
        )
        for seq_id in rows
    ]
    return Dataset(sequences)


def split_by_sessions(dataset: Dataset, test_sessions) -> tuple[Dataset, Dataset]:
    """Disjoint (train, test) partition by session id."""
    test_ids = set(test_sessions)
    known = set(dataset.sessions)
    unknown = test_ids - known
    if unknown:
        raise ValueError(f"unknown session ids: {sorted(unknown)}")
    train = [s for s in dataset.sequences if s.session not in test_ids]
    test = [s for s in dataset.sequences if s.session in test_ids]
    if not train:
        log.warning("train split is empty: all %d sessions are test sessions", len(known))
    if not test:
        log.warning("test split is empty: no test sessions selected")
    return Dataset(train, dim=dataset.dim), Dataset(test, dim=dataset.dim)
