"""Sequential model-based search over a discrete hyper-parameter grid.

After a uniformly random warm-up, trials are split at a score quantile
into top performers and the rest; per-dimension categorical densities
are estimated for both groups with additive smoothing, and the next
configuration takes, in every dimension independently, the candidate
maximizing the density ratio (the expected improvement). The grid is
tiny, so maximization is exact enumeration.

Dimensions are independent categoricals: the grid has no conditional
structure for a tree to condition on.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

Config = dict[str, Any]


@dataclass(frozen=True)
class SearchSpace:
    """Ordered (name, candidate values) dimensions."""

    dims: tuple[tuple[str, tuple], ...]

    def __post_init__(self) -> None:
        for name, candidates in self.dims:
            if not candidates:
                raise ValueError(f"dimension {name!r} has no candidates")
            if len(set(candidates)) != len(candidates):
                raise ValueError(f"dimension {name!r} has duplicate candidates")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.dims)


@dataclass(frozen=True)
class Trial:
    """One evaluated configuration. Failures carry score 0 and always
    land in the low-performing density group."""

    config: Config
    score: float
    index: int
    failed: bool = False
    wall_seconds: float = 0.0


@dataclass
class TpeState:
    space: SearchSpace
    history: list[Trial] = field(default_factory=list)
    n_startup: int = 20
    n_total: int = 225
    gamma: float = 0.5
    prior_weight: float = 1.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        # n_startup == n_total degenerates to pure random search
        if not 0 < self.n_startup <= self.n_total:
            raise ValueError(
                f"need 0 < n_startup <= n_total, got {self.n_startup}/{self.n_total}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.prior_weight <= 0:
            raise ValueError(f"prior_weight must be positive, got {self.prior_weight}")


def densities(observed: Sequence, candidates: Sequence,
              prior_weight: float) -> np.ndarray:
    """Smoothed categorical density: (count + w) / (N + w*K).

    Always a valid probability vector with strictly positive entries,
    so density ratios stay defined; with no observations it degrades to
    the uniform prior.
    """
    counts = np.array([sum(1 for o in observed if o == c) for c in candidates],
                      dtype=np.float64)
    n = float(len(observed))
    k = len(candidates)
    return (counts + prior_weight) / (n + prior_weight * k)


def split_by_quantile(history: Sequence[Trial],
                      gamma: float) -> tuple[list[Trial], list[Trial]]:
    """Top ceil(gamma*N) trials by score against the rest; equal scores
    enter the top group in trial order."""
    if not history:
        raise ValueError("cannot split an empty history")
    ranked = sorted(history, key=lambda t: (-t.score, t.index))
    n_top = math.ceil(gamma * len(ranked))
    return ranked[:n_top], ranked[n_top:]


def expected_improvement(state: TpeState) -> dict[str, np.ndarray]:
    """Per-dimension EI over every candidate: the ratio of the top-group
    density to the rest-group density."""
    top, rest = split_by_quantile(state.history, state.gamma)
    out: dict[str, np.ndarray] = {}
    for name, candidates in state.space.dims:
        p_top = densities([t.config[name] for t in top], candidates,
                          state.prior_weight)
        p_rest = densities([t.config[name] for t in rest], candidates,
                           state.prior_weight)
        out[name] = p_top / p_rest
    return out


def suggest(state: TpeState) -> Config:
    """Next configuration to evaluate.

    Warm-up trials are uniform over the grid, seeded by (rng_seed, trial
    index); afterwards each dimension takes its EI argmax, ties broken
    toward the lower candidate index. Deterministic given the history,
    the seed and the trial index.
    """
    index = len(state.history)
    if index >= state.n_total:
        raise RuntimeError(f"search budget of {state.n_total} trials exhausted")
    if index < state.n_startup:
        rng = np.random.default_rng([state.rng_seed, index])
        return {name: candidates[int(rng.integers(len(candidates)))]
                for name, candidates in state.space.dims}
    ei = expected_improvement(state)
    return {name: candidates[int(np.argmax(ei[name]))]
            for name, candidates in state.space.dims}


class SearchResult(NamedTuple):
    best: Trial
    history: list[Trial]
    ei_traces: list[tuple[int, str, Any, float]]  # (trial, dim, candidate, ei)


def run_search(objective: Callable[[Config], float],
               state: TpeState) -> SearchResult:
    """Evaluate suggestions until the budget is spent.

    Objective exceptions are recorded as failed trials with score 0 and
    the search continues. EI snapshots are captured at every
    post-warm-up suggestion for later plotting.
    """
    traces: list[tuple[int, str, Any, float]] = []
    while len(state.history) < state.n_total:
        index = len(state.history)
        if index >= state.n_startup:
            ei = expected_improvement(state)
            for name, candidates in state.space.dims:
                for candidate, value in zip(candidates, ei[name]):
                    traces.append((index, name, candidate, float(value)))
        config = suggest(state)
        start = time.perf_counter()
        try:
            score = float(objective(config))
            failed = False
        except Exception:
            score = 0.0
            failed = True
        wall = time.perf_counter() - start
        state.history.append(Trial(config, score, index, failed, wall))
    best = max(state.history, key=lambda t: (t.score, -t.index))
    return SearchResult(best, state.history, traces)


def write_search_log(path, history: Sequence[Trial], space: SearchSpace,
                     n_startup: int) -> None:
    """Search log CSV: trial index, one column per dimension, the score,
    the phase tag (random warm-up vs model-driven) and wall seconds."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_index", *space.names, "score", "phase",
                         "wall_seconds"])
        for t in history:
            phase = "random" if t.index < n_startup else "tpe"
            writer.writerow([t.index,
                             *[t.config[name] for name in space.names],
                             repr(t.score), phase, f"{t.wall_seconds:.6f}"])


def write_ei_trace(path, traces: Sequence[tuple[int, str, Any, float]]) -> None:
    """EI trace CSV: one row per (trial, dimension, candidate) snapshot."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_index", "dimension", "candidate", "ei"])
        for index, name, candidate, value in traces:
            writer.writerow([index, name, candidate, repr(value)])
