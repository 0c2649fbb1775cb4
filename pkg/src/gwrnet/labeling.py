"""Frequency-based label readout for the unsupervised network.

Each neuron accumulates a histogram of the labels whose inputs it won; the
predicted label of a neuron is the histogram argmax. Labels are discovered
online, nothing has to be declared up front. Histogram increments caused by
trajectory replay are tallied separately so that training-presentation
accounting stays checkable.
"""

from __future__ import annotations

from typing import Hashable, Optional

from .model import MatchContext, Network

Label = Hashable


class LabelAssociations:
    """Per-neuron label frequency histograms with a replay-attributed tally."""

    def __init__(self):
        self._rows: dict[int, dict[Label, int]] = {}
        self.total_records = 0
        self.replay_records = 0

    def record(self, neuron_id: int, label: Label, replay: bool = False) -> None:
        """Count one win of ``label`` for ``neuron_id``."""
        row = self._rows.setdefault(neuron_id, {})
        row[label] = row.get(label, 0) + 1
        self.total_records += 1
        if replay:
            self.replay_records += 1

    def row(self, neuron_id: int) -> dict[Label, int]:
        return dict(self._rows.get(neuron_id, {}))

    def predict(self, neuron_id: int) -> Optional[Label]:
        """Most frequent label for a neuron; ties go to the label recorded
        first; None for a neuron that never won a labeled input."""
        row = self._rows.get(neuron_id)
        if not row:
            return None
        best = None
        best_count = 0
        for label, count in row.items():
            if count > best_count:
                best, best_count = label, count
        return best

    def items(self):
        """Iterate (neuron_id, label, count) in per-row recording order,
        rows ordered by neuron id."""
        for neuron_id in sorted(self._rows):
            for label, count in self._rows[neuron_id].items():
                yield neuron_id, label, count

    def total(self) -> int:
        return sum(count for _, _, count in self.items())


def record_label(
    network: Network, counts: LabelAssociations, neuron_id: int, label: Label
) -> None:
    """Existence-checked label recording."""
    if not network.has_neuron(neuron_id):
        raise KeyError(f"no neuron with id {neuron_id}")
    counts.record(neuron_id, label)


def classify_sample(
    network: Network,
    counts: LabelAssociations,
    x,
    ctx: Optional[MatchContext] = None,
) -> Optional[Label]:
    """Predicted label of the winner for ``x`` in evaluation mode.

    No network, histogram, or counter state is mutated; ``ctx`` carries the
    temporal context across the frames of one test sequence and is advanced
    in place. A fresh (sequence-start) context is used when ``ctx`` is None.
    """
    if ctx is None:
        ctx = network.new_match_context()
    bmu_id, _, _ = network.match(x, ctx)
    return counts.predict(bmu_id)
