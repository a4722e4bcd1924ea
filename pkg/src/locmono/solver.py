"""Path simulation by a semi-implicit Euler scheme with tamed remainder.

One step of the full equation reads

    (I + dt * c_k * (-laplacian)) u_{k+1}
        = u_k + dt * (N_tamed(t_k, u_k) + Phi(t_k, u_k))
          + u_k .* (E @ (amp(t_k) * dW_k))

where ``c_k`` is the Laplacian coefficient of the drift (frozen at the
current state for the nonlocal kind), ``N`` is the non-Laplacian drift part
tamed as ``N / (1 + dt |N|_H)``, and the last term is the truncated modal
noise increment.  Noise and control are evaluated at the left endpoint (Ito
convention).  The linear solve is a banded Cholesky factorization reused
across steps whenever the coefficient is constant.

The same stepper drives the frozen-coefficient comparison equations: in
*auxiliary* mode the first drift slot, the noise and the control argument
are all evaluated along a reference trajectory, in *control_free* mode
additionally the control term is dropped.

Wiener increments are generated per ``(seed, path_index)`` from a
counter-based Philox stream, so paths are reproducible independent of
evaluation order; aggregation in :func:`energy_statistics` reduces per-path
statistics in path-index order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded

from .controls import FeedbackControl
from .errors import ConformanceError, DivergenceError, InsufficientDataError, ParameterError
from .operators import DriftOperator, NoiseOperator
from .spaces import Grid, conform

__all__ = [
    "TimeGrid",
    "WienerPath",
    "Trajectory",
    "EnergyReport",
    "simulate",
    "simulate_auxiliary",
    "simulate_control_free",
    "energy_statistics",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise ParameterError(f"horizon T must be positive, got {self.T}")
        if self.n_steps < 1:
            raise ParameterError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True, eq=False)
class WienerPath:
    """Gaussian increments ~ N(0, dt), shape (n_steps, m_modes).

    ``generate`` derives the stream from (seed, path_index) alone, so the
    same pair always reproduces the same increments.
    """

    seed: int
    path_index: int
    increments: np.ndarray

    @classmethod
    def generate(cls, seed: int, path_index: int, tg: TimeGrid, m_modes: int):
        key = np.array([seed & _MASK64, path_index & _MASK64], dtype=np.uint64)
        rng = np.random.Generator(np.random.Philox(key=key))
        inc = rng.standard_normal((tg.n_steps, m_modes)) * math.sqrt(tg.dt)
        return cls(seed, path_index, inc)

    def coarsen(self) -> "WienerPath":
        """Pairwise-summed increments: the same Brownian path at 2x dt."""
        if self.increments.shape[0] % 2:
            raise ParameterError("coarsening needs an even number of steps")
        inc = self.increments[0::2] + self.increments[1::2]
        return WienerPath(self.seed, self.path_index, inc)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-indexed states with per-step H / V norms.

    ``mode`` is one of ``full``, ``auxiliary``, ``control_free``;
    ``frozen_source`` references the trajectory supplying the frozen slots.
    """

    states: np.ndarray
    h_norms: np.ndarray
    v_norms: np.ndarray
    mode: str
    path_index: int
    frozen_source: "Trajectory | None" = None

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1


def _integrate(drift, noise, control, u0, tg, w, grid, frozen, mode):
    n = grid.n_interior
    u0 = conform(u0, grid)
    m = noise.m_modes
    if w.increments.shape != (tg.n_steps, m):
        raise ConformanceError(
            f"Wiener increments of shape {w.increments.shape} do not match "
            f"{tg.n_steps} steps x {m} modes"
        )
    if frozen is not None and frozen.states.shape != (tg.n_steps + 1, n):
        raise ConformanceError("frozen reference does not match grid/time layout")

    dt = tg.dt
    h2 = grid.h * grid.h
    E = grid.eigen_basis[:, :m]
    sqrt_h = math.sqrt(grid.h)

    states = np.empty((tg.n_steps + 1, n))
    h_norms = np.empty(tg.n_steps + 1)
    v_norms = np.empty(tg.n_steps + 1)

    def record(k, u):
        states[k] = u
        h_norms[k] = sqrt_h * math.sqrt(float(u @ u))
        d = np.diff(u, prepend=0.0, append=0.0)
        v_norms[k] = math.sqrt(float(d @ d) / grid.h)

    u = u0.copy()
    record(0, u)

    constant_coeff = drift.kind != "nonlocal"
    factor = None

    def factorize(coeff):
        a = dt * coeff / h2
        ab = np.zeros((2, n))
        ab[0, 1:] = -a
        ab[1, :] = 1.0 + 2.0 * a
        return cholesky_banded(ab, lower=False, check_finite=False)

    if constant_coeff:
        factor = factorize(drift.laplace_coefficient(0.0, u, grid))

    for k in range(tg.n_steps):
        t = k * dt
        src = frozen.states[k] if frozen is not None else u
        rhs = u.copy()
        rem = drift.remainder(t, src, u, grid)
        if rem is not None:
            nn = sqrt_h * math.sqrt(float(rem @ rem))
            rhs += (dt / (1.0 + dt * nn)) * rem
        if control is not None:
            rhs += dt * control.evaluate(t, src, grid)
        rhs += src * (E @ (noise.amplitudes(t) * w.increments[k]))
        if constant_coeff:
            u = cho_solve_banded((factor, False), rhs, check_finite=False)
        else:
            coeff = drift.laplace_coefficient(t, src, grid)
            a = dt * coeff / h2
            ab = np.zeros((3, n))
            ab[0, 1:] = -a
            ab[1, :] = 1.0 + 2.0 * a
            ab[2, :-1] = -a
            u = solve_banded((1, 1), ab, rhs, check_finite=False)
        if not np.isfinite(u).all():
            raise DivergenceError(step=k + 1, path_index=w.path_index)
        record(k + 1, u)

    return Trajectory(states, h_norms, v_norms, mode, w.path_index, frozen)


def simulate(
    drift: DriftOperator,
    noise: NoiseOperator,
    control: FeedbackControl | None,
    u0: np.ndarray,
    tg: TimeGrid,
    w: WienerPath,
    grid: Grid,
) -> Trajectory:
    """Simulate the full controlled equation along one Wiener path."""
    return _integrate(drift, noise, control, u0, tg, w, grid, None, "full")


def simulate_auxiliary(
    drift: DriftOperator,
    noise: NoiseOperator,
    control_n: FeedbackControl | None,
    base: Trajectory,
    u0: np.ndarray,
    tg: TimeGrid,
    w: WienerPath,
    grid: Grid,
) -> Trajectory:
    """Simulate the comparison equation with coefficients frozen on ``base``.

    The first drift slot, the noise argument and the control argument all
    follow the reference path; only the second drift slot evolves.
    """
    return _integrate(drift, noise, control_n, u0, tg, w, grid, base, "auxiliary")


def simulate_control_free(
    drift: DriftOperator,
    noise: NoiseOperator,
    base: Trajectory,
    u0: np.ndarray,
    tg: TimeGrid,
    w: WienerPath,
    grid: Grid,
) -> Trajectory:
    """Frozen-coefficient equation without any control term."""
    return _integrate(drift, noise, None, u0, tg, w, grid, base, "control_free")


@dataclass(frozen=True)
class EnergyReport:
    """Monte Carlo energy statistics over a trajectory set.

    ``c_hat = (E sup |u|_H^2 + E int |u|_V^2 dt) / E |u0|_H^2`` (None when
    the denominator vanishes).  Standard errors assume the initial state is
    the same on every path.
    """

    n_paths: int
    mean_sup_h2: float
    se_sup_h2: float
    mean_int_v2: float
    se_int_v2: float
    mean_sup_h4: float
    mean_int_h2_sq: float
    mean_u0_h2: float
    c_hat: float | None
    c_hat_se: float | None

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "mean_sup_h2": self.mean_sup_h2,
            "se_sup_h2": self.se_sup_h2,
            "mean_int_v2": self.mean_int_v2,
            "se_int_v2": self.se_int_v2,
            "mean_sup_h4": self.mean_sup_h4,
            "mean_int_h2_sq": self.mean_int_h2_sq,
            "mean_u0_h2": self.mean_u0_h2,
            "c_hat": self.c_hat,
            "c_hat_se": self.c_hat_se,
        }


def _se(arr: np.ndarray) -> float:
    if arr.size < 2:
        return 0.0
    return float(arr.std(ddof=1) / math.sqrt(arr.size))


def energy_statistics(trajs, grid: Grid, tg: TimeGrid) -> EnergyReport:
    """Pathwise sup/integral energies and their Monte Carlo means.

    Time integrals use the left-endpoint rectangle rule, matching the
    stepper's evaluation convention.
    """
    trajs = list(trajs)
    if len(trajs) < 2:
        raise InsufficientDataError("energy statistics need at least 2 trajectories")
    dt = tg.dt
    sup_h2 = np.array([float(np.max(tr.h_norms**2)) for tr in trajs])
    int_v2 = np.array([dt * float(np.sum(tr.v_norms[:-1] ** 2)) for tr in trajs])
    int_h2 = np.array([dt * float(np.sum(tr.h_norms[:-1] ** 2)) for tr in trajs])
    u0_h2 = np.array([float(tr.h_norms[0] ** 2) for tr in trajs])
    mean_u0 = float(u0_h2.mean())
    combined = sup_h2 + int_v2
    if mean_u0 > 0.0:
        c_hat = float(combined.mean()) / mean_u0
        c_hat_se = _se(combined) / mean_u0
    else:
        c_hat = None
        c_hat_se = None
    return EnergyReport(
        n_paths=len(trajs),
        mean_sup_h2=float(sup_h2.mean()),
        se_sup_h2=_se(sup_h2),
        mean_int_v2=float(int_v2.mean()),
        se_int_v2=_se(int_v2),
        mean_sup_h4=float((sup_h2**2).mean()),
        mean_int_h2_sq=float((int_h2**2).mean()),
        mean_u0_h2=mean_u0,
        c_hat=c_hat,
        c_hat_se=c_hat_se,
    )
