"""Brownian path generation and explicit time stepping.

Each path owns an independent random stream derived from
``SeedSequence(entropy=master_seed, spawn_key=(path_index,))`` feeding a
Philox counter-based bit generator; Gaussians come from numpy's
``Generator.standard_normal``.  That derivation is the package's pinned
reproducibility contract: a (master seed, path index, step, refinement,
horizon) tuple determines a trajectory bit-for-bit, independent of execution
order or how paths are grouped into batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .models import SdeModel, as_state, state_norms
from .truncation import resolve_radius, truncated_batch

__all__ = [
    "OVERFLOW_GUARD",
    "DEFAULT_REFINEMENT",
    "SCHEMES",
    "BrownianPath",
    "TrajectoryRecord",
    "fine_increments",
    "scheme_radius",
    "advance_states",
    "step_mtem",
    "simulate_path",
    "interpolate_step_process",
    "interpolate_continuous_mtem",
]

# Trajectories are flagged as diverged, not aborted, beyond this magnitude;
# the explicit EM baseline is expected to blow up on superlinear models.
OVERFLOW_GUARD = 1e10

DEFAULT_REFINEMENT = 16

SCHEMES = ("mtem", "em")

_GRID_SNAP = 1e-9


def fine_increments(master_seed: int, path_index: int, delta: float, steps: int, refinement: int) -> np.ndarray:
    """Fine-grid Wiener increments for one path, shape (steps, refinement).

    Each entry is N(0, delta / refinement); summing a row yields the coarse
    increment for that step.
    """
    if not delta > 0.0:
        raise InputError(f"step size must be positive, got {delta}")
    if steps < 1 or refinement < 1:
        raise InputError("steps and refinement must be >= 1")
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(path_index,))
    rng = np.random.Generator(np.random.Philox(seq))
    z = rng.standard_normal(steps * refinement)
    return (math.sqrt(delta / refinement) * z).reshape(steps, refinement)


@dataclass(frozen=True)
class BrownianPath:
    """Seeded fine-grid Wiener increments for one path."""

    master_seed: int
    path_index: int
    delta: float
    refinement: int
    fine: np.ndarray  # (steps, refinement)

    @classmethod
    def generate(
        cls,
        master_seed: int,
        path_index: int,
        delta: float,
        steps: int,
        refinement: int = DEFAULT_REFINEMENT,
    ) -> "BrownianPath":
        fine = fine_increments(master_seed, path_index, delta, steps, refinement)
        return cls(master_seed, path_index, delta, refinement, fine)

    @property
    def steps(self) -> int:
        return self.fine.shape[0]

    def coarse(self) -> np.ndarray:
        """Coarse increments, exactly the row sums of the fine grid."""
        return self.fine.sum(axis=1)


@dataclass(frozen=True)
class TrajectoryRecord:
    """States of one simulated path under a named scheme.

    On divergence the record stops at the first offending state (which is
    kept, flagged, so the blow-up is visible); otherwise it holds all
    ``steps + 1`` states.
    """

    scheme: str
    x0: np.ndarray
    delta: float
    states: np.ndarray  # (n_recorded, d)
    diverged: bool
    first_divergence_step: int | None = None

    @property
    def num_steps(self) -> int:
        return self.states.shape[0] - 1

    def times(self) -> np.ndarray:
        return np.arange(self.states.shape[0]) * self.delta


def scheme_radius(model: SdeModel, policy_or_radius, scheme: str, delta: float) -> float:
    """Truncation radius for a scheme: h(delta) for mtem, +inf for plain em."""
    if scheme == "em":
        return math.inf
    if scheme == "mtem":
        if policy_or_radius is None:
            raise InputError("the mtem scheme requires a truncation policy or radius")
        return resolve_radius(policy_or_radius, delta)
    raise InputError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def advance_states(model: SdeModel, radius: float, states: np.ndarray, delta: float, db: np.ndarray) -> np.ndarray:
    """One explicit step x + f_h(x) delta + g_h(x) dB over a batch of states.

    ``states`` has shape (n, d) and ``db`` shape (n,); all lanes share the
    step size.  This is the single stepping kernel used everywhere, so a path
    advances bit-identically whether it is simulated alone or in a batch.
    """
    f_vals = truncated_batch(model.drift, states, radius)
    g_vals = truncated_batch(model.diffusion, states, radius)
    return states + f_vals * delta + g_vals * db[..., None]


def step_mtem(model: SdeModel, policy_or_radius, x, delta: float, db: float) -> np.ndarray:
    """Single truncated Euler step from state ``x`` with increment ``db``."""
    if not delta > 0.0:
        raise InputError(f"step size must be positive, got {delta}")
    h = resolve_radius(policy_or_radius, delta)
    xs = as_state(model, x)[None, :]
    return advance_states(model, h, xs, delta, np.array([float(db)]))[0]


def simulate_path(
    model: SdeModel,
    policy_or_radius,
    scheme: str,
    x0,
    delta: float,
    steps: int,
    path: BrownianPath,
    overflow_guard: float = OVERFLOW_GUARD,
) -> TrajectoryRecord:
    """Advance one path for ``steps`` coarse steps of size ``delta``.

    Halts early with the divergence flag set as soon as the state magnitude
    exceeds ``overflow_guard`` or any coordinate becomes non-finite.
    """
    if steps < 1:
        raise InputError(f"steps must be >= 1, got {steps}")
    if path.delta != delta:
        raise InputError(f"path was generated with delta = {path.delta}, not {delta}")
    if path.steps < steps:
        raise InputError(f"path holds {path.steps} steps, {steps} requested")
    radius = scheme_radius(model, policy_or_radius, scheme, delta)
    x = as_state(model, x0)
    coarse = path.coarse()
    states = np.empty((steps + 1, model.dimension))
    states[0] = x
    diverged = False
    first = None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            x = advance_states(model, radius, x[None, :], delta, coarse[k : k + 1])[0]
            states[k + 1] = x
            r = float(state_norms(x))
            if not math.isfinite(r) or r > overflow_guard:
                diverged = True
                first = k + 1
                break
    if diverged:
        states = states[: first + 1]
    return TrajectoryRecord(scheme, states[0].copy(), delta, states, diverged, first)


def interpolate_step_process(record: TrajectoryRecord, t: float) -> np.ndarray:
    """Piecewise-constant interpolant: the state at step floor(t / delta).

    Right-continuous on [k delta, (k+1) delta); the terminal time maps to the
    last recorded state.  Times within a relative 1e-9 of a grid point snap
    to it.
    """
    horizon = record.num_steps * record.delta
    if t < 0.0 or t > horizon * (1.0 + _GRID_SNAP) + _GRID_SNAP * record.delta:
        raise InputError(f"time {t} outside the recorded horizon [0, {horizon}]")
    u = t / record.delta
    k = int(math.floor(u))
    if u - k > 1.0 - _GRID_SNAP:
        k += 1
    k = min(k, record.num_steps)
    return record.states[k].copy()


def interpolate_continuous_mtem(
    model: SdeModel,
    policy_or_radius,
    record: TrajectoryRecord,
    path: BrownianPath,
    t: float,
) -> np.ndarray:
    """Frozen-coefficient continuous interpolant on the path's fine grid.

    Within a coarse interval the coefficients stay evaluated at the step's
    starting state, and the Brownian displacement is the partial sum of that
    step's fine increments, so the interpolant hits every recorded state
    exactly at the coarse grid points.  ``t`` must lie on the fine grid
    (multiples of delta / refinement); anything else is rejected rather than
    silently bridged.
    """
    if path.delta != record.delta:
        raise InputError(f"path delta {path.delta} differs from record delta {record.delta}")
    if path.steps < record.num_steps:
        raise InputError("path is shorter than the recorded trajectory")
    h = resolve_radius(policy_or_radius, record.delta)
    m = path.refinement
    fine_dt = record.delta / m
    u = t / fine_dt
    idx = int(math.floor(u + 0.5))
    if abs(u - idx) > _GRID_SNAP * max(1.0, abs(u)):
        raise InputError(f"time {t} is not on the fine grid of spacing {fine_dt}")
    if idx < 0 or idx > record.num_steps * m:
        raise InputError(f"time {t} outside the recorded horizon")
    k, j = divmod(idx, m)
    if j == 0:
        return record.states[k].copy()
    x = record.states[k]
    db = float(np.sum(path.fine[k, :j]))
    dt = j * fine_dt
    return advance_states(model, h, x[None, :], dt, np.array([db]))[0]
