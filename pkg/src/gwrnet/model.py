"""Recurrent grow-when-required network with habituation-gated growth.

Each neuron stores a weight vector plus a stack of temporal context
descriptors. Matching blends the input-to-weight distance with distances
between the network's global context and the per-neuron descriptors, so the
winner depends on the recent input history, not just the current frame.

Two operating modes share the same learning dynamics:

* ``growing``: starts with two neurons and inserts a new one whenever the
  network activity falls below the insertion threshold while the winner is
  already strongly habituated, up to the capacity bound ``n_max``.
* ``static``: starts with ``n_max`` randomly initialized neurons and never
  inserts.

Transition counts and label histograms are bookkeeping side tables owned by
the caller and passed into :meth:`Network.step`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

GROWING = "growing"
STATIC = "static"

# How the global context is advanced from the previous winner: "recursive"
# blends the winner's weight with its next-shallower descriptor (depth-k
# contexts see k steps back); "literal" blends with the same-depth
# descriptor, which makes all depths evolve identically and exists only for
# comparison runs.
CONTEXT_RECURSIVE = "recursive"
CONTEXT_LITERAL = "literal"


@dataclass(frozen=True)
class HyperParams:
    """Training constants for both modes.

    ``alpha`` holds the distance weights for the input term followed by one
    weight per context depth, so it must have ``num_contexts + 1`` entries.
    Defaults are the reference configuration used throughout the tests.
    """

    insertion_threshold: float = 0.3
    habituation_threshold: float = 0.1
    tau_b: float = 0.3
    tau_n: float = 0.1
    kappa: float = 1.05
    eps_b: float = 0.5
    eps_n: float = 0.005
    beta: float = 0.7
    num_contexts: int = 2
    alpha: tuple[float, ...] = (0.67, 0.24, 0.09)
    n_max: int = 2500
    context_form: str = CONTEXT_RECURSIVE

    def __post_init__(self):
        if not 0.0 < self.insertion_threshold < 1.0:
            raise ValueError("insertion_threshold must lie in (0, 1)")
        if not 0.0 < self.habituation_threshold < 1.0:
            raise ValueError("habituation_threshold must lie in (0, 1)")
        if self.tau_b <= 0.0 or self.tau_n <= 0.0:
            raise ValueError("tau_b and tau_n must be positive")
        if self.kappa <= 1.0:
            raise ValueError("kappa must exceed 1")
        if not (0.0 < self.eps_n < self.eps_b < 1.0):
            raise ValueError("need 0 < eps_n < eps_b < 1")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.num_contexts < 0:
            raise ValueError("num_contexts must be nonnegative")
        if len(self.alpha) != self.num_contexts + 1:
            raise ValueError(
                f"alpha needs {self.num_contexts + 1} entries, got {len(self.alpha)}"
            )
        if any(a < 0.0 for a in self.alpha):
            raise ValueError("alpha entries must be nonnegative")
        if self.n_max < 2:
            raise ValueError("n_max must be at least 2")
        if self.context_form not in (CONTEXT_RECURSIVE, CONTEXT_LITERAL):
            raise ValueError(f"unknown context_form {self.context_form!r}")


@dataclass
class Neuron:
    """Read-only view of one unit: weight, context stack, habituation."""

    id: int
    weight: np.ndarray
    contexts: np.ndarray  # (num_contexts, dim)
    habituation: float


@dataclass
class StepOutcome:
    """What one learning iteration did."""

    bmu_id: int
    second_id: int
    distance: float
    activity: float
    inserted: Optional[int] = None
    adapted_ids: list[int] = field(default_factory=list)


def activity(d_b: float) -> float:
    """Network activity for a winner distance: exp(-d_b), in (0, 1]."""
    if d_b < 0.0:
        raise ValueError("winner distance must be nonnegative")
    return math.exp(-d_b)


def habituate(h: float, tau: float, kappa: float) -> float:
    """One habituation update, clamped to [0, 1].

    The update h + tau*kappa*(1-h) - tau decays h monotonically toward the
    fixed point 1 - 1/kappa when starting above it.
    """
    return min(1.0, max(0.0, h + tau * kappa * (1.0 - h) - tau))


@dataclass
class MatchContext:
    """Per-sequence context scratchpad for read-only matching.

    Evaluation walks test sequences through the same matching rule as
    training but must not disturb the trained state; each evaluation sequence
    owns one of these. ``query`` row 0 is input scratch space, rows 1.. hold
    the context stack.
    """

    query: np.ndarray  # (num_contexts + 1, dim)
    prev_bmu: Optional[int] = None

    @property
    def context(self) -> np.ndarray:
        return self.query[1:]


class Network:
    """Dynamic neuron set with undirected topology and global temporal context.

    Construct through :func:`init_growing` or :func:`init_static`. Neuron ids
    are dense integers assigned in creation order and never reused (nothing
    is ever removed), so id k lives in storage row k.
    """

    def __init__(self, dim: int, hyper: HyperParams, mode: str, rng_seed: int = 0):
        if mode not in (GROWING, STATIC):
            raise ValueError(f"unknown mode {mode!r}")
        if dim < 1:
            raise ValueError("input dimension must be positive")
        self.dim = dim
        self.hyper = hyper
        self.mode = mode
        self.rng_seed = rng_seed
        self.step_count = 0
        self.prev_bmu: Optional[int] = None
        k = hyper.num_contexts
        # Row j of _units is neuron j as [weight, context_1, ..., context_K];
        # _query holds [input, C_1, ..., C_K] in the same layout so matching,
        # adaptation and insertion are single fused array operations.
        self._units = np.zeros((hyper.n_max, k + 1, dim))
        self._hab = np.ones(hyper.n_max)
        self._query = np.zeros((k + 1, dim))
        self._alpha = np.asarray(hyper.alpha, dtype=float)
        self._adj: dict[int, set[int]] = {}
        self.num_neurons = 0

    # -- introspection ----------------------------------------------------

    @property
    def neuron_ids(self) -> range:
        return range(self.num_neurons)

    @property
    def global_context(self) -> np.ndarray:
        """Current context stack C_1..C_K, shape (num_contexts, dim)."""
        return self._query[1:].copy()

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted(
            (i, j) for i, nbrs in self._adj.items() for j in nbrs if i < j
        )

    def has_neuron(self, neuron_id: int) -> bool:
        return 0 <= neuron_id < self.num_neurons

    def neuron(self, neuron_id: int) -> Neuron:
        self._check_id(neuron_id)
        return Neuron(
            id=neuron_id,
            weight=self._units[neuron_id, 0].copy(),
            contexts=self._units[neuron_id, 1:].copy(),
            habituation=float(self._hab[neuron_id]),
        )

    def neighbors(self, neuron_id: int) -> list[int]:
        self._check_id(neuron_id)
        return sorted(self._adj[neuron_id])

    def has_edge(self, i: int, j: int) -> bool:
        return self.has_neuron(i) and j in self._adj[i]

    def _check_id(self, neuron_id: int) -> None:
        if not self.has_neuron(neuron_id):
            raise KeyError(f"no neuron with id {neuron_id}")

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"input shape {x.shape} does not match dimension {self.dim}")
        return x

    # -- matching ----------------------------------------------------------

    def _distances(self, query: np.ndarray) -> np.ndarray:
        diff = self._units[: self.num_neurons] - query
        return np.einsum("j,ijk,ijk->i", self._alpha, diff, diff)

    def distance(self, neuron_id: int, x: np.ndarray) -> float:
        """Context-weighted squared distance between a neuron and an input."""
        self._check_id(neuron_id)
        x = self._check_input(x)
        self._query[0] = x
        diff = self._units[neuron_id] - self._query
        return float(np.einsum("j,jk,jk->", self._alpha, diff, diff))

    def find_bmu(self, x: np.ndarray) -> tuple[int, int, float]:
        """Best and second-best matching unit under the current context.

        Ties resolve to the smaller neuron id. Requires at least two neurons.
        """
        if self.num_neurons < 2:
            raise RuntimeError("matching needs at least two neurons")
        x = self._check_input(x)
        self._query[0] = x
        d = self._distances(self._query)
        b = int(np.argmin(d))
        d_b = float(d[b])
        d[b] = np.inf
        s = int(np.argmin(d))
        return b, s, d_b

    def _context_from(self, bmu_id: int) -> np.ndarray:
        unit = self._units[bmu_id]
        k = self.hyper.num_contexts
        beta = self.hyper.beta
        if self.hyper.context_form == CONTEXT_RECURSIVE:
            # C_k(t) = beta*w_b + (1-beta)*c_{b,k-1} with c_{b,0} = w_b;
            # unit[0:k] is exactly [c_{b,0}, ..., c_{b,K-1}].
            return beta * unit[0] + (1.0 - beta) * unit[0:k]
        return beta * unit[0] + (1.0 - beta) * unit[1 : k + 1]

    def update_global_context(self) -> np.ndarray:
        """Advance C_1..C_K from the previous winner; zero at sequence start."""
        if self.prev_bmu is None:
            self._query[1:] = 0.0
        else:
            self._query[1:] = self._context_from(self.prev_bmu)
        return self.global_context

    def reset_context(self) -> None:
        """Mark a sequence boundary: clear the context stack and the winner."""
        self._query[1:] = 0.0
        self.prev_bmu = None

    def new_match_context(self) -> MatchContext:
        return MatchContext(query=np.zeros((self.hyper.num_contexts + 1, self.dim)))

    def match(self, x: np.ndarray, ctx: MatchContext) -> tuple[int, int, float]:
        """Evaluation-mode matching: advances ctx, mutates no network state."""
        if self.num_neurons < 2:
            raise RuntimeError("matching needs at least two neurons")
        x = self._check_input(x)
        ctx.query[0] = x
        if ctx.prev_bmu is None:
            ctx.query[1:] = 0.0
        else:
            ctx.query[1:] = self._context_from(ctx.prev_bmu)
        diff = self._units[: self.num_neurons] - ctx.query
        d = np.einsum("j,ijk,ijk->i", self._alpha, diff, diff)
        b = int(np.argmin(d))
        d_b = float(d[b])
        d[b] = np.inf
        s = int(np.argmin(d))
        ctx.prev_bmu = b
        return b, s, d_b

    # -- plasticity ----------------------------------------------------------

    def adapt(self, bmu_id: int, x: np.ndarray) -> list[int]:
        """Pull the winner and its neighbors toward the input and current
        context, then habituate them. Returns the touched ids."""
        self._check_id(bmu_id)
        x = self._check_input(x)
        hy = self.hyper
        self._query[0] = x
        h_b = self._hab[bmu_id]
        self._units[bmu_id] += hy.eps_b * h_b * (self._query - self._units[bmu_id])
        nbrs = sorted(self._adj[bmu_id])
        if nbrs:
            rates = (hy.eps_n * self._hab[nbrs])[:, None, None]
            self._units[nbrs] += rates * (self._query - self._units[nbrs])
        self._hab[bmu_id] = habituate(h_b, hy.tau_b, hy.kappa)
        for n in nbrs:
            self._hab[n] = habituate(self._hab[n], hy.tau_n, hy.kappa)
        return [bmu_id] + nbrs

    def connect(self, i: int, j: int) -> None:
        """Ensure the undirected edge {i, j} exists. Self-edges are rejected."""
        if i == j:
            raise ValueError("self-edges are not allowed")
        self._check_id(i)
        self._check_id(j)
        self._adj[i].add(j)
        self._adj[j].add(i)

    def _disconnect(self, i: int, j: int) -> None:
        self._adj[i].discard(j)
        self._adj[j].discard(i)

    def maybe_insert(
        self, x: np.ndarray, bmu_id: int, second_id: int, act: float
    ) -> Optional[int]:
        """Insert a neuron halfway between winner and input when the activity
        and habituation gates both pass and capacity remains; rewires the
        winner pair through the new unit. Returns the new id, or None."""
        if self.mode != GROWING:
            return None
        hy = self.hyper
        if act >= hy.insertion_threshold:
            return None
        if self._hab[bmu_id] >= hy.habituation_threshold:
            return None
        if self.num_neurons >= hy.n_max:
            return None
        x = self._check_input(x)
        self._query[0] = x
        new_id = self.num_neurons
        self._units[new_id] = 0.5 * (self._units[bmu_id] + self._query)
        self._hab[new_id] = 1.0
        self._adj[new_id] = set()
        self.num_neurons += 1
        self.connect(new_id, bmu_id)
        self.connect(new_id, second_id)
        self._disconnect(bmu_id, second_id)
        return new_id

    def _append_neuron(
        self, weight: np.ndarray, contexts: np.ndarray, hab: float
    ) -> int:
        if self.num_neurons >= self.hyper.n_max:
            raise RuntimeError("capacity exhausted")
        new_id = self.num_neurons
        self._units[new_id, 0] = weight
        self._units[new_id, 1:] = contexts
        self._hab[new_id] = hab
        self._adj[new_id] = set()
        self.num_neurons += 1
        return new_id

    # -- learning iterations --------------------------------------------------

    def step(self, x, label=None, transitions=None, label_counts=None) -> StepOutcome:
        """One full learning iteration on a labeled input frame.

        Order: context update, matching, activity, transition recording,
        insertion attempt (growing mode), otherwise adaptation plus winner
        pair wiring. The label is credited to the inserted neuron when one is
        created, else to the winner. ``transitions`` and ``label_counts`` are
        optional side tables.
        """
        return self._iterate(x, label, transitions, label_counts, replay=False)

    def replay_step(self, x, label=None, label_counts=None) -> StepOutcome:
        """Consolidation iteration for replayed patterns: same dynamics with
        insertion disabled, no transition recording, and replay-attributed
        label credit."""
        return self._iterate(x, label, None, label_counts, replay=True)

    def _iterate(self, x, label, transitions, label_counts, replay: bool) -> StepOutcome:
        x = self._check_input(x)
        self.update_global_context()
        bmu_id, second_id, d_b = self.find_bmu(x)
        act = activity(d_b)
        if transitions is not None and self.prev_bmu is not None:
            transitions.record(self.prev_bmu, bmu_id)
        inserted = None
        adapted: list[int] = []
        if not replay:
            inserted = self.maybe_insert(x, bmu_id, second_id, act)
        if inserted is None:
            adapted = self.adapt(bmu_id, x)
            self.connect(bmu_id, second_id)
        if label_counts is not None and label is not None:
            credit = bmu_id if inserted is None else inserted
            label_counts.record(credit, label, replay=replay)
        self.prev_bmu = bmu_id
        self.step_count += 1
        return StepOutcome(
            bmu_id=bmu_id,
            second_id=second_id,
            distance=d_b,
            activity=act,
            inserted=inserted,
            adapted_ids=adapted,
        )


def init_growing(dim: int, hyper: HyperParams, first_two_inputs) -> Network:
    """Growing-mode network seeded with two neurons copying the given inputs."""
    a, b = first_two_inputs
    net = Network(dim, hyper, GROWING)
    for vec in (a, b):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (dim,):
            raise ValueError(f"seed input shape {vec.shape} does not match dimension {dim}")
        net._append_neuron(vec, np.zeros((hyper.num_contexts, dim)), 1.0)
    return net


def init_static(
    dim: int,
    hyper: HyperParams,
    bounds_low,
    bounds_high,
    seed: int,
) -> Network:
    """Static-mode network with n_max neurons drawn uniformly per dimension."""
    low = np.broadcast_to(np.asarray(bounds_low, dtype=float), (dim,))
    high = np.broadcast_to(np.asarray(bounds_high, dtype=float), (dim,))
    if np.any(low > high):
        raise ValueError("bounds_low must not exceed bounds_high")
    net = Network(dim, hyper, STATIC, rng_seed=seed)
    rng = np.random.default_rng(seed)
    weights = rng.uniform(low, high, size=(hyper.n_max, dim))
    for row in weights:
        net._append_neuron(row, np.zeros((hyper.num_contexts, dim)), 1.0)
    return net
