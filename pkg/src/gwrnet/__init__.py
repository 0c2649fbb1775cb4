"""Recurrent grow-when-required networks with trajectory replay."""

from .labeling import LabelAssociations, classify_sample, record_label
from .model import (
    GROWING,
    STATIC,
    HyperParams,
    MatchContext,
    Network,
    Neuron,
    StepOutcome,
    activity,
    habituate,
    init_growing,
    init_static,
)
from .replay import (
    ReplayReport,
    Rnat,
    TemporalSynapses,
    generate_rnat,
    record_transition,
    replay_episode,
)
from .snapshot import load_snapshot, load_snapshot_file, save_snapshot, save_snapshot_file

__all__ = [
    "GROWING",
    "STATIC",
    "HyperParams",
    "LabelAssociations",
    "MatchContext",
    "Network",
    "Neuron",
    "ReplayReport",
    "Rnat",
    "StepOutcome",
    "TemporalSynapses",
    "activity",
    "classify_sample",
    "generate_rnat",
    "habituate",
    "init_growing",
    "init_static",
    "load_snapshot",
    "load_snapshot_file",
    "record_label",
    "record_transition",
    "replay_episode",
    "save_snapshot",
    "save_snapshot_file",
]

__version__ = "0.1.0"
