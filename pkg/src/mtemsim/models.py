"""SDE models driven by scalar Brownian noise, and their moment-stability functional.

A model is the pair of coefficient maps (f, g) for

    dx(t) = f(x(t)) dt + g(x(t)) dB(t),    x(0) = x0 in R^d,

together with a local Lipschitz bound R -> L_R valid for both coefficients on
the closed ball of radius R.  Coefficients must broadcast over leading axes:
an input of shape (..., d) yields an output of shape (..., d).  This lets the
same callables serve single-state evaluation and batched path simulation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, EvaluationError, InputError

__all__ = [
    "SdeModel",
    "StabilityParams",
    "SamplingPlan",
    "MODEL_KEYS",
    "as_state",
    "state_norms",
    "evaluate_drift",
    "evaluate_diffusion",
    "check_trivial_solution",
    "stability_functional",
    "functional_values",
    "sample_states",
    "estimate_lambda",
    "cross_check_lambda",
    "example41",
    "linear",
    "get_model",
]

Coefficient = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SdeModel:
    """An autonomous d-dimensional SDE with scalar driving Brownian motion.

    ``lipschitz_bound`` maps a radius R > 0 to a constant L_R with

        |f(x) - f(y)| v |g(x) - g(y)| <= L_R |x - y|   for |x| v |y| <= R,

    and must be nondecreasing in R.  Models with f(0) = g(0) = 0 admit the
    trivial solution x == 0; use :func:`check_trivial_solution` to test this.

    Instances are immutable and shared freely across threads; the callables
    must be pure (path simulation invokes them concurrently from worker
    threads).
    """

    name: str
    dimension: int
    drift: Coefficient
    diffusion: Coefficient
    lipschitz_bound: Callable[[float], float]

    def __post_init__(self):
        if not isinstance(self.dimension, int) or self.dimension < 1:
            raise InputError(f"dimension must be a positive integer, got {self.dimension!r}")


@dataclass(frozen=True)
class StabilityParams:
    """Moment order p, decay rate lambda, and the slack epsilon used in verdicts.

    ``epsilon`` defaults to ``lam / 2`` when omitted.
    """

    p: float
    lam: float
    epsilon: float | None = None

    def __post_init__(self):
        _check_moment_order(self.p)
        if not self.lam > 0.0:
            raise InputError(f"lambda must be positive, got {self.lam}")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", 0.5 * self.lam)
        if not 0.0 < self.epsilon < self.lam:
            raise InputError(f"epsilon must lie in (0, lambda), got {self.epsilon}")


@dataclass(frozen=True)
class SamplingPlan:
    """Deterministic sample of states: log-spaced radii times random unit directions.

    Directions for radius index i are drawn from a dedicated stream seeded by
    (seed, i), so enlarging ``directions_per_radius`` extends the sample
    without disturbing the points already drawn.
    """

    r_min: float = 1e-3
    r_max: float = 1e3
    radii_per_decade: int = 8
    directions_per_radius: int = 16
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.r_min < self.r_max:
            raise InputError(f"need 0 < r_min < r_max, got [{self.r_min}, {self.r_max}]")
        if self.radii_per_decade < 1 or self.directions_per_radius < 1:
            raise InputError("radii_per_decade and directions_per_radius must be >= 1")


def _check_moment_order(p) -> None:
    if not 0.0 < p < 1.0:
        raise InputError(f"moment order p must lie in (0, 1), got {p}")


def as_state(model: SdeModel, x) -> np.ndarray:
    """Coerce ``x`` to a float vector of the model's dimension."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (model.dimension,):
        raise InputError(
            f"state has shape {arr.shape}, expected ({model.dimension},) for model {model.name!r}"
        )
    if not np.all(np.isfinite(arr)):
        raise InputError(f"state must be finite, got {arr!r}")
    return arr


def state_norms(xs: np.ndarray) -> np.ndarray:
    """Euclidean norm over the trailing state axis."""
    return np.sqrt(np.einsum("...i,...i->...", xs, xs))


def evaluate_drift(model: SdeModel, x) -> np.ndarray:
    """f(x) with dimension validation."""
    return np.asarray(model.drift(as_state(model, x)), dtype=float)


def evaluate_diffusion(model: SdeModel, x) -> np.ndarray:
    """g(x) with dimension validation."""
    return np.asarray(model.diffusion(as_state(model, x)), dtype=float)


def check_trivial_solution(model: SdeModel) -> bool:
    """True iff f(0) = 0 and g(0) = 0 exactly, so x == 0 solves the SDE."""
    zero = np.zeros(model.dimension)
    f0 = np.asarray(model.drift(zero), dtype=float)
    g0 = np.asarray(model.diffusion(zero), dtype=float)
    return bool(np.all(f0 == 0.0) and np.all(g0 == 0.0))


def functional_values(xs: np.ndarray, f_vals: np.ndarray, g_vals: np.ndarray, p: float) -> np.ndarray:
    """Stability functional evaluated from precomputed coefficient values.

    For each state x with coefficient values f, g this is

        (<x, f> + |g|^2 / 2) / |x|^2 + (p - 2) / 2 * <x, g>^2 / |x|^4.

    The p-th moment of the solution decays at rate at least p * lambda when
    the supremum of this quantity over x != 0 equals -lambda < 0.
    """
    r2 = np.einsum("...i,...i->...", xs, xs)
    xf = np.einsum("...i,...i->...", xs, f_vals)
    xg = np.einsum("...i,...i->...", xs, g_vals)
    g2 = np.einsum("...i,...i->...", g_vals, g_vals)
    return (xf + 0.5 * g2) / r2 + 0.5 * (p - 2.0) * (xg * xg) / (r2 * r2)


def stability_functional(model: SdeModel, p: float, x) -> float:
    """Evaluate the stability functional at a single nonzero state.

    Raises ``DomainError`` at x = 0, where the quotient is undefined.
    """
    _check_moment_order(p)
    xs = as_state(model, x)
    if not np.any(xs != 0.0):
        raise DomainError("stability functional is undefined at x = 0")
    f_vals = np.asarray(model.drift(xs), dtype=float)
    g_vals = np.asarray(model.diffusion(xs), dtype=float)
    return float(functional_values(xs, f_vals, g_vals, p))


def sample_states(plan: SamplingPlan, dimension: int) -> np.ndarray:
    """Materialize the plan's sample points, shape (n_points, dimension)."""
    decades = np.log10(plan.r_max / plan.r_min)
    n_radii = max(int(np.ceil(decades * plan.radii_per_decade)) + 1, 2)
    radii = np.geomspace(plan.r_min, plan.r_max, n_radii)
    n_dir = plan.directions_per_radius
    points = np.empty((n_radii * n_dir, dimension))
    for i, r in enumerate(radii):
        seq = np.random.SeedSequence(entropy=plan.seed, spawn_key=(i,))
        rng = np.random.Generator(np.random.Philox(seq))
        vecs = rng.standard_normal((n_dir, dimension))
        norms = np.sqrt(np.einsum("ij,ij->i", vecs, vecs))
        degenerate = norms == 0.0
        if np.any(degenerate):
            vecs[degenerate] = 0.0
            vecs[degenerate, 0] = 1.0
            norms[degenerate] = 1.0
        points[i * n_dir : (i + 1) * n_dir] = (r / norms)[:, None] * vecs
    return points


def _functional_supremum(model: SdeModel, p: float, plan: SamplingPlan) -> float:
    points = sample_states(plan, model.dimension)
    f_vals = np.asarray(model.drift(points), dtype=float)
    g_vals = np.asarray(model.diffusion(points), dtype=float)
    values = functional_values(points, f_vals, g_vals, p)
    if not np.all(np.isfinite(values)):
        bad = points[~np.isfinite(values)][0]
        raise EvaluationError(f"stability functional is not finite at x = {bad!r}")
    return float(np.max(values))


def estimate_lambda(model: SdeModel, p: float, plan: SamplingPlan | None = None) -> float:
    """Sampled estimate of the decay rate lambda.

    Negates the maximum of the stability functional over the plan's points.
    The result is deterministic given the plan's seed, and can only decrease
    as the sample set is enlarged (the sampled maximum can only grow).  A
    sampled supremum is a lower bound on the true one, so for models whose
    functional is not constant the estimate may overstate lambda; defaults
    cover radii in [1e-3, 1e3].
    """
    _check_moment_order(p)
    plan = plan if plan is not None else SamplingPlan()
    return -_functional_supremum(model, p, plan)


def cross_check_lambda(model: SdeModel, params: StabilityParams, plan: SamplingPlan | None = None) -> float:
    """Check an asserted lambda against the sampled functional supremum.

    Returns the sampled supremum and warns if it exceeds ``-params.lam`` by
    more than 1e-6, which means the asserted rate is too optimistic.
    """
    plan = plan if plan is not None else SamplingPlan()
    sup = _functional_supremum(model, params.p, plan)
    if sup > -params.lam + 1e-6:
        warnings.warn(
            f"sampled functional supremum {sup:.6g} exceeds -lambda = {-params.lam:.6g}; "
            "the asserted decay rate is not supported by the sampled points",
            stacklevel=2,
        )
    return sup


# --- built-in models -------------------------------------------------------

MODEL_KEYS = ("example41", "linear")


def example41() -> SdeModel:
    """Scalar SDE dx = (x + x^3) dt + 2 sqrt(x^4 + 2 x^2) dB.

    Both coefficients grow superlinearly and the drift is not one-sided
    Lipschitz, so the classical explicit EM scheme is unstable for it.  Local
    Lipschitz bound: L_R = max(1 + 3 R^2, 2 + 2 R).
    """

    def drift(x):
        return x + x**3

    def diffusion(x):
        return 2.0 * np.sqrt(x**4 + 2.0 * x**2)

    def lipschitz_bound(radius):
        return max(1.0 + 3.0 * radius * radius, 2.0 + 2.0 * radius)

    return SdeModel("example41", 1, drift, diffusion, lipschitz_bound)


def linear(mu: float, sigma: float) -> SdeModel:
    """Scalar linear SDE dx = mu x dt + sigma x dB (geometric Brownian motion)."""
    mu = float(mu)
    sigma = float(sigma)
    level = max(abs(mu), abs(sigma))

    def drift(x):
        return mu * x

    def diffusion(x):
        return sigma * x

    return SdeModel("linear", 1, drift, diffusion, lambda radius: level)


def get_model(key: str, mu: float | None = None, sigma: float | None = None) -> SdeModel:
    """Build a registered model from its key.

    ``linear`` requires ``mu`` and ``sigma``; ``example41`` takes no parameters.
    """
    if key == "example41":
        if mu is not None or sigma is not None:
            raise InputError("model 'example41' takes no parameters")
        return example41()
    if key == "linear":
        if mu is None or sigma is None:
            raise InputError("model 'linear' requires mu and sigma")
        return linear(mu, sigma)
    raise InputError(f"unknown model key {key!r}; known keys: {', '.join(MODEL_KEYS)}")
