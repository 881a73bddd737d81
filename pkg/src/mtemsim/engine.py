"""Chunked multi-path simulation with worker-count-independent reductions.

Paths are processed in fixed-size chunks regardless of how many workers are
deployed, each chunk is reduced with a fixed operation order, and chunk
partials are combined sequentially in chunk order with compensated
summation.  Together with the per-path seed derivation in :mod:`.schemes`
this makes every aggregate bit-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .models import SdeModel, as_state, state_norms
from .schemes import OVERFLOW_GUARD, advance_states, fine_increments

__all__ = ["CHUNK_PATHS", "RunResult", "run_paths"]

# Fixed chunk width: the unit of work handed to a worker.  Must not depend on
# the worker count or reductions would change with it.
CHUNK_PATHS = 512


@dataclass
class _ChunkResult:
    start: int
    count: int
    first_divergence: np.ndarray  # (count,), -1 where the path never diverged
    terminal_norm: np.ndarray | None  # (count,), nan for diverged lanes
    moment_sum: np.ndarray | None  # (steps + 1,)
    moment_sqsum: np.ndarray | None
    alive: np.ndarray | None  # (steps + 1,) int
    states: np.ndarray | None  # (count, steps + 1, d)


@dataclass
class RunResult:
    """Merged output of a multi-path run."""

    paths: int
    steps: int
    delta: float
    first_divergence: np.ndarray
    terminal_norm: np.ndarray | None
    moment_sum: np.ndarray | None
    moment_sqsum: np.ndarray | None
    alive: np.ndarray | None
    states: np.ndarray | None

    @property
    def diverged_paths(self) -> int:
        return int(np.count_nonzero(self.first_divergence >= 0))


def _simulate_chunk(
    model: SdeModel,
    radius: float,
    x0: np.ndarray,
    delta: float,
    steps: int,
    refinement: int,
    master_seed: int,
    start: int,
    count: int,
    moment_p: float | None,
    want_terminal: bool,
    record_states: bool,
    overflow_guard: float,
) -> _ChunkResult:
    d = model.dimension
    coarse = np.empty((count, steps))
    for i in range(count):
        coarse[i] = fine_increments(master_seed, start + i, delta, steps, refinement).sum(axis=1)

    x = np.tile(x0, (count, 1))
    alive = np.ones(count, dtype=bool)
    first_div = np.full(count, -1, dtype=np.int64)

    states = None
    if record_states:
        states = np.zeros((count, steps + 1, d))
        states[:, 0] = x

    mom_sum = mom_sq = alive_count = None
    if moment_p is not None:
        mom_sum = np.empty(steps + 1)
        mom_sq = np.empty(steps + 1)
        alive_count = np.empty(steps + 1, dtype=np.int64)
        npow = state_norms(x) ** moment_p
        mom_sum[0] = npow.sum()
        mom_sq[0] = (npow * npow).sum()
        alive_count[0] = count

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            xn = advance_states(model, radius, x, delta, coarse[:, k])
            norms = state_norms(xn)
            bad = alive & (~np.isfinite(norms) | (norms > overflow_guard))
            if record_states:
                # keep the flagged state visible, then freeze the lane
                states[alive, k + 1] = xn[alive]
            if bad.any():
                first_div[bad] = k + 1
                alive &= ~bad
            xn[~alive] = 0.0
            x = xn
            if moment_p is not None:
                live_norms = np.where(alive, norms, 0.0)
                npow = live_norms**moment_p
                mom_sum[k + 1] = npow.sum()
                mom_sq[k + 1] = (npow * npow).sum()
                alive_count[k + 1] = alive.sum()

    terminal = None
    if want_terminal:
        terminal = np.where(alive, state_norms(x), np.nan)

    return _ChunkResult(start, count, first_div, terminal, mom_sum, mom_sq, alive_count, states)


def _kahan_accumulate(total: np.ndarray, compensation: np.ndarray, term: np.ndarray) -> None:
    y = term - compensation
    t = total + y
    compensation[:] = (t - total) - y
    total[:] = t


def run_paths(
    model: SdeModel,
    radius: float,
    x0,
    delta: float,
    steps: int,
    paths: int,
    master_seed: int,
    refinement: int = 1,
    *,
    moment_p: float | None = None,
    want_terminal: bool = False,
    record_states: bool = False,
    overflow_guard: float = OVERFLOW_GUARD,
    workers: int = 1,
    chunk_paths: int = CHUNK_PATHS,
) -> RunResult:
    """Simulate ``paths`` independent paths and merge per-chunk reductions.

    ``moment_p`` switches on accumulation of per-step sums of |X_k|^p and
    |X_k|^(2p) over the paths still alive at k; ``want_terminal`` collects
    terminal state norms; ``record_states`` keeps full trajectories (memory
    scales with paths * steps, meant for small runs).
    """
    if paths < 1:
        raise InputError(f"paths must be >= 1, got {paths}")
    if steps < 1:
        raise InputError(f"steps must be >= 1, got {steps}")
    if not delta > 0.0:
        raise InputError(f"step size must be positive, got {delta}")
    x0_row = as_state(model, x0)

    chunks = [(s, min(chunk_paths, paths - s)) for s in range(0, paths, chunk_paths)]

    def job(chunk):
        start, count = chunk
        return _simulate_chunk(
            model, radius, x0_row, delta, steps, refinement, master_seed,
            start, count, moment_p, want_terminal, record_states, overflow_guard,
        )

    if workers <= 1 or len(chunks) == 1:
        results = [job(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(job, c) for c in chunks]
            results = [f.result() for f in futures]

    first_div = np.concatenate([r.first_divergence for r in results])
    terminal = np.concatenate([r.terminal_norm for r in results]) if want_terminal else None
    states = np.concatenate([r.states for r in results], axis=0) if record_states else None

    mom_sum = mom_sq = alive = None
    if moment_p is not None:
        mom_sum = np.zeros(steps + 1)
        mom_sq = np.zeros(steps + 1)
        alive = np.zeros(steps + 1, dtype=np.int64)
        comp_sum = np.zeros(steps + 1)
        comp_sq = np.zeros(steps + 1)
        for r in results:  # chunk order: identical for any worker count
            _kahan_accumulate(mom_sum, comp_sum, r.moment_sum)
            _kahan_accumulate(mom_sq, comp_sq, r.moment_sqsum)
            alive += r.alive

    return RunResult(paths, steps, delta, first_div, terminal, mom_sum, mom_sq, alive, states)
