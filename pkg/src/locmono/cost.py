"""Monte Carlo evaluation of the quadratic tracking cost.

The running/control/terminal integrands are nonnegative convex quadratics

    running   w_r * |u(s) - u_ref|_V^2
    control   kappa * |Phi(s, u(s))|_H^2
    terminal  w_T * |u(T) - u_T|_H^2

integrated by the left-endpoint rectangle rule on the solver's time grid
(the state convention of the stepper).  Expectations are common-random-
number averages over a fixed set of Wiener paths, identified by a tag so
that two estimates are comparable exactly when their tags coincide.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .controls import FeedbackControl
from .errors import InsufficientDataError, ParameterError, UsageError
from .operators import DriftOperator, NoiseOperator
from .solver import TimeGrid, Trajectory, WienerPath, simulate
from .spaces import Grid, conform, h_norm, v_norm

__all__ = ["CostSpec", "CostEstimate", "CRNSet", "ModelBundle",
           "pathwise_cost", "evaluate_cost", "pmap"]

FRESH_OFFSET = 1_000_000


def pmap(fn, items, threads: int = 1) -> list:
    """Map preserving input order; thread count never changes the result."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True, eq=False)
class ModelBundle:
    """One simulatable model: drift + noise + initial state on a grid."""

    drift: DriftOperator
    noise: NoiseOperator
    u0: np.ndarray
    grid: Grid


@dataclass(frozen=True, eq=False)
class CostSpec:
    running_weight: float
    control_weight: float
    terminal_weight: float
    u_ref: np.ndarray
    u_T: np.ndarray

    def __post_init__(self):
        for name in ("running_weight", "control_weight", "terminal_weight"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                raise ParameterError(f"{name} must be finite and >= 0, got {val}")


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    std_error: float
    n_paths: int
    crn_tag: str

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "crn_tag": self.crn_tag,
        }


@dataclass(frozen=True)
class CRNSet:
    """A reusable family of Wiener paths keyed by (seed, offset, index)."""

    seed: int
    n_paths: int
    offset: int = 0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ParameterError(f"need at least one path, got {self.n_paths}")

    def path(self, i: int, tg: TimeGrid, m_modes: int) -> WienerPath:
        return WienerPath.generate(self.seed, self.offset + i, tg, m_modes)

    def fresh(self) -> "CRNSet":
        """Held-out set of equal size on a disjoint index range."""
        return CRNSet(self.seed, self.n_paths, self.offset + FRESH_OFFSET)

    def tag(self, tg: TimeGrid, m_modes: int) -> str:
        return (
            f"philox:{self.seed}:{self.offset}:{self.n_paths}"
            f":{tg.n_steps}x{m_modes}"
        )


def pathwise_cost(
    spec: CostSpec,
    traj: Trajectory,
    control: FeedbackControl | None,
    tg: TimeGrid,
    grid: Grid,
) -> float:
    """Single-path cost (the bracketed integrand, before expectation)."""
    if traj.mode != "full":
        raise UsageError(f"pathwise cost needs a full-mode trajectory, got {traj.mode!r}")
    u_ref = conform(spec.u_ref, grid)
    total = 0.0
    dt = tg.dt
    for k in range(tg.n_steps):
        u = traj.states[k]
        step = 0.0
        if spec.running_weight:
            step += spec.running_weight * v_norm(u - u_ref, grid) ** 2
        if spec.control_weight and control is not None:
            phi = control.evaluate(k * dt, u, grid)
            step += spec.control_weight * h_norm(phi, grid) ** 2
        total += dt * step
    if spec.terminal_weight:
        total += spec.terminal_weight * h_norm(traj.states[-1] - spec.u_T, grid) ** 2
    return total


def evaluate_cost(
    spec: CostSpec,
    control: FeedbackControl | None,
    bundle: ModelBundle,
    tg: TimeGrid,
    crn: CRNSet,
    threads: int = 1,
) -> CostEstimate:
    """Common-random-number cost estimate.

    Identical (tag, control, model) inputs give bit-identical estimates;
    divergence on any path propagates with its path index.
    """
    grid = bundle.grid
    m = bundle.noise.m_modes

    def one(i: int) -> float:
        w = crn.path(i, tg, m)
        traj = simulate(bundle.drift, bundle.noise, control, bundle.u0, tg, w, grid)
        return pathwise_cost(spec, traj, control, tg, grid)

    vals = np.array(pmap(one, range(crn.n_paths), threads))
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return CostEstimate(mean, se, crn.n_paths, crn.tag(tg, m))
