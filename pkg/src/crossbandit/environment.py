"""Oblivious adversaries, context sampling, and the cross-learning reveal.

Every oracle is a deterministic map (t, c, a) -> loss in [0, 1], fixed before
the run: querying never mutates state, so reveals can be replayed in any
order. Stochastic losses are pre-materialized in chunks from a seeded
counter-style stream, which keeps the adversary genuinely oblivious and runs
replayable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import FeedbackGraph
from .simplex import check_simplex, sample_arm

# Rounds per materialized chunk are sized so one chunk stays around 2 MB.
_CHUNK_BUDGET = 1 << 18


def sample_context(nu: np.ndarray, rng: np.random.Generator) -> int:
    """One i.i.d. categorical context draw."""
    return sample_arm(nu, rng)


def context_distribution(probs) -> np.ndarray:
    """Validated context distribution as a float64 vector."""
    return check_simplex(probs)


@dataclass(frozen=True)
class Reveal:
    """Feedback from one round: losses of N_out(played_arm) across all contexts.

    ``losses[c, j]`` is the loss of ``arms[j]`` under context c; nothing
    outside the played arm's out-neighborhood is included.
    """

    t: int
    played_arm: int
    arms: np.ndarray  # revealed arm indices, sorted
    losses: np.ndarray  # shape (M, len(arms))


class LossOracle:
    """Base oblivious adversary. Subclasses implement ``loss_slice``."""

    num_rounds: int
    num_contexts: int
    num_arms: int

    def loss_slice(self, t: int) -> np.ndarray:
        """Full (M, K) loss table of round t. Read-only; do not mutate."""
        raise NotImplementedError

    def loss(self, t: int, c: int, a: int) -> float:
        if not 0 <= t < self.num_rounds:
            raise ValueError(f"round {t} out of range [0, {self.num_rounds})")
        if not 0 <= c < self.num_contexts:
            raise ValueError(f"context {c} out of range [0, {self.num_contexts})")
        if not 0 <= a < self.num_arms:
            raise ValueError(f"arm {a} out of range [0, {self.num_arms})")
        return float(self.loss_slice(t)[c, a])


def reveal(oracle: LossOracle, graph: FeedbackGraph, t: int, played_arm: int) -> Reveal:
    """Exactly the cross-learning feedback set for one round."""
    if not 0 <= played_arm < graph.num_arms:
        raise ValueError(f"played arm {played_arm} out of range")
    arms = np.asarray(graph.out_neighbors[played_arm], dtype=np.int64)
    losses = oracle.loss_slice(t)[:, arms].copy()
    return Reveal(t=t, played_arm=played_arm, arms=arms, losses=losses)


class TableOracle(LossOracle):
    """Losses stored explicitly as a (T, M, K) tensor."""

    def __init__(self, tensor: np.ndarray):
        tensor = np.asarray(tensor, dtype=np.float64)
        if tensor.ndim != 3:
            raise ValueError(f"expected a (T, M, K) tensor, got shape {tensor.shape}")
        if tensor.size and ((tensor < 0).any() or (tensor > 1).any()):
            raise ValueError("losses must lie in [0, 1]")
        self._tensor = tensor
        self.num_rounds, self.num_contexts, self.num_arms = tensor.shape

    def loss_slice(self, t: int) -> np.ndarray:
        return self._tensor[t]

    @classmethod
    def from_npy(cls, path: str | Path) -> "TableOracle":
        return cls(np.load(path))

    @classmethod
    def from_csv(cls, path: str | Path) -> "TableOracle":
        """Long format with columns t,c,a,loss (header optional). The tensor
        must be fully covered."""
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or not rec[0].strip():
                    continue
                if rec[0].strip().lower() == "t":
                    continue
                rows.append((int(rec[0]), int(rec[1]), int(rec[2]), float(rec[3])))
        if not rows:
            raise ValueError(f"loss table {path} is empty")
        T = max(r[0] for r in rows) + 1
        M = max(r[1] for r in rows) + 1
        K = max(r[2] for r in rows) + 1
        tensor = np.full((T, M, K), np.nan)
        for t, c, a, v in rows:
            tensor[t, c, a] = v
        if np.isnan(tensor).any():
            raise ValueError(f"loss table {path} does not cover every (t, c, a)")
        return cls(tensor)


class _ChunkedOracle(LossOracle):
    """Deterministic chunked materialization keyed by (seed, chunk index)."""

    def __init__(self, num_rounds: int, num_contexts: int, num_arms: int):
        self.num_rounds = num_rounds
        self.num_contexts = num_contexts
        self.num_arms = num_arms
        self._chunk_len = max(1, _CHUNK_BUDGET // max(1, num_contexts * num_arms))
        self._cache: dict[int, np.ndarray] = {}

    def _make_chunk(self, j: int) -> np.ndarray:
        raise NotImplementedError

    def loss_slice(self, t: int) -> np.ndarray:
        j = t // self._chunk_len
        chunk = self._cache.get(j)
        if chunk is None:
            chunk = self._make_chunk(j)
            self._cache.clear()  # keep at most one chunk resident
            self._cache[j] = chunk
        return chunk[t - j * self._chunk_len]


class StochasticGapOracle(_ChunkedOracle):
    """Bernoulli losses with per-(context, arm) means."""

    def __init__(self, means: np.ndarray, num_rounds: int, seed: int):
        means = np.asarray(means, dtype=np.float64)
        if means.ndim != 2:
            raise ValueError(f"means must be (M, K), got shape {means.shape}")
        if (means < 0).any() or (means > 1).any():
            raise ValueError("Bernoulli means must lie in [0, 1]")
        super().__init__(num_rounds, means.shape[0], means.shape[1])
        self.means = means
        self.seed = int(seed)

    def _make_chunk(self, j: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence([0x10A4, self.seed, j]))
        u = rng.random((self._chunk_len, self.num_contexts, self.num_arms))
        return (u < self.means).astype(np.float64)


def gap_means(num_contexts: int, num_arms: int, base: float = 0.4, gap: float = 0.2,
              best_stride: int = 5) -> np.ndarray:
    """Mean table with one best arm per context at ``base`` and the rest at
    ``base + gap``. The stride spreads best arms across the arm range."""
    if not 0 <= base <= 1 or not 0 <= base + gap <= 1:
        raise ValueError("means must stay within [0, 1]")
    means = np.full((num_contexts, num_arms), base + gap)
    for c in range(num_contexts):
        means[c, (c * best_stride) % num_arms] = base
    return means


class AdversarialShiftOracle(LossOracle):
    """Piecewise-constant adversary: the best arm per context shifts at
    quarter-horizon boundaries."""

    def __init__(self, num_rounds: int, num_contexts: int, num_arms: int,
                 low: float = 0.2, high: float = 0.8):
        if not 0 <= low <= high <= 1:
            raise ValueError("need 0 <= low <= high <= 1")
        self.num_rounds = num_rounds
        self.num_contexts = num_contexts
        self.num_arms = num_arms
        self.low = float(low)
        self.high = float(high)
        self._phase_len = max(1, -(-num_rounds // 4))  # ceil(T / 4)

    def loss_slice(self, t: int) -> np.ndarray:
        phase = min(3, t // self._phase_len)
        out = np.full((self.num_contexts, self.num_arms), self.high)
        for c in range(self.num_contexts):
            out[c, (c + phase) % self.num_arms] = self.low
        return out


class AuctionOracle(LossOracle):
    """Repeated sealed-bid pricing: context = private value, arm = bid.

    Utility of bidding b with value v against the opposing bid m is
    (v - b) * 1[b >= m]; it is clamped to [-1, 1] and mapped to
    loss = (1 - u) / 2 so losses stay in [0, 1]. Losing gives u = 0,
    hence loss 0.5; overbidding keeps its penalty visible. Pairs naturally
    with the ordered_triangular graph, where winning at a bid reveals the
    outcome of all higher bids.
    """

    def __init__(self, value_grid: np.ndarray, bid_grid: np.ndarray,
                 opposing_bids: np.ndarray):
        value_grid = np.asarray(value_grid, dtype=np.float64)
        bid_grid = np.asarray(bid_grid, dtype=np.float64)
        opposing_bids = np.asarray(opposing_bids, dtype=np.float64)
        for name, grid in (("value_grid", value_grid), ("bid_grid", bid_grid)):
            if grid.ndim != 1 or grid.size == 0:
                raise ValueError(f"{name} must be a nonempty 1-D array")
            if (np.diff(grid) < 0).any():
                raise ValueError(f"{name} must be sorted ascending")
            if (grid < 0).any() or (grid > 1).any():
                raise ValueError(f"{name} entries must lie in [0, 1]")
        self.value_grid = value_grid
        self.bid_grid = bid_grid
        self.opposing_bids = opposing_bids
        self.num_rounds = len(opposing_bids)
        self.num_contexts = len(value_grid)
        self.num_arms = len(bid_grid)

    def loss_slice(self, t: int) -> np.ndarray:
        m = self.opposing_bids[t]
        win = self.bid_grid >= m
        u = (self.value_grid[:, None] - self.bid_grid[None, :]) * win[None, :]
        np.clip(u, -1.0, 1.0, out=u)
        return (1.0 - u) / 2.0


def auction_losses(value_grid, bid_grid, opposing_bids) -> AuctionOracle:
    """Build the auction adversary from sorted grids and a fixed opposing-bid
    sequence."""
    return AuctionOracle(value_grid, bid_grid, opposing_bids)


def uniform_opposing_bids(num_rounds: int, seed: int) -> np.ndarray:
    """Deterministic opposing-bid sequence, i.i.d. uniform on [0, 1]."""
    rng = np.random.default_rng(np.random.SeedSequence([0xB1D, seed]))
    return rng.random(num_rounds)


def load_opposing_bids(path: str | Path) -> np.ndarray:
    """One opposing bid per CSV line (header optional)."""
    vals = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or not rec[0].strip():
                continue
            try:
                vals.append(float(rec[0]))
            except ValueError:
                continue  # header
    if not vals:
        raise ValueError(f"opposing-bid file {path} is empty")
    return np.asarray(vals, dtype=np.float64)
