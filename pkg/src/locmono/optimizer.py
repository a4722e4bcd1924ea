"""Derivative-free search for a cost-minimizing control.

The search is a Nelder-Mead loop over the flat control parameters with two
twists that keep every visited point meaningful:

* every proposed point is projected onto the admissible set *before*
  evaluation and the projected point is what enters the simplex, so all
  recorded iterates are admissible by construction;
* all evaluations share one common-random-number Wiener set, turning the
  stochastic objective into a deterministic surrogate, so the best-so-far
  column is a genuine minimizing sequence for the surrogate.  The final
  control is re-estimated on a held-out set of equal size.

When the simplex diameter collapses below a threshold the search restarts
from the incumbent with a fresh simplex at half the previous scale.

:func:`diagnose_convergence` measures, along the tail of improving
iterates, the mean-square distances between each iterate's trajectories and
the final control's trajectories (state-space convergence that mirrors how
cost convergence should propagate to the paths), both for the full equation
and for the frozen-coefficient comparison equation, optionally truncated at
the energy stopping index of :func:`truncation_rule`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .controls import AdmissibleBounds, FeedbackControl, project_admissible
from .cost import CostEstimate, CRNSet, ModelBundle, evaluate_cost, pmap
from .errors import (
    DivergenceError,
    InsufficientDataError,
    OptimizationFailure,
    ParameterError,
    UsageError,
)
from .solver import TimeGrid, Trajectory, simulate, simulate_auxiliary

__all__ = [
    "SearchConfig",
    "IterateRecord",
    "OptimizationRecord",
    "ConvergenceDiagnostics",
    "minimize",
    "diagnose_convergence",
    "truncation_rule",
]

SCOPES = ("all", "gammas", "gamma1")


@dataclass(frozen=True)
class SearchConfig:
    m_c: int = 4
    n_knots: int = 9
    max_iters: int = 200
    simplex_scale: float = 0.25
    crn_paths: int = 64
    restart_diameter: float = 1e-9
    scope: str = "all"
    max_restarts: int = 8

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise UsageError(f"scope must be one of {SCOPES}, got {self.scope!r}")
        if self.max_iters < 1 or self.m_c < 1 or self.n_knots < 1:
            raise ParameterError("max_iters, m_c and n_knots must all be >= 1")

    def free_indices(self) -> np.ndarray:
        dim = self.m_c + self.n_knots * self.m_c
        if self.scope == "all":
            return np.arange(dim)
        if self.scope == "gammas":
            return np.arange(self.m_c)
        return np.arange(1)


@dataclass(frozen=True)
class IterateRecord:
    params: np.ndarray
    estimate: CostEstimate
    best_so_far: float
    improving: bool


@dataclass(frozen=True, eq=False)
class OptimizationRecord:
    iterates: list
    final_control: FeedbackControl
    fresh_estimate: CostEstimate
    config: dict
    diverged: int

    def improving_iterates(self) -> list:
        return [it for it in self.iterates if it.improving]

    def best_estimate(self) -> CostEstimate:
        return min(self.iterates, key=lambda it: it.estimate.mean).estimate


def _decode(flat, search: SearchConfig, bounds, horizon) -> FeedbackControl:
    return FeedbackControl.from_flat(flat, search.m_c, search.n_knots, bounds, horizon)


def minimize(
    cost_spec,
    bundle: ModelBundle,
    bounds: AdmissibleBounds,
    tg: TimeGrid,
    search: SearchConfig,
    seed: int,
    threads: int = 1,
) -> OptimizationRecord:
    """Projected Nelder-Mead under common random numbers.

    Every objective evaluation is recorded as an iterate; ``best_so_far`` is
    the running minimum, so it is non-increasing by construction.  Raises
    :class:`OptimizationFailure` only if every evaluation diverged.
    """
    zero = FeedbackControl.zero(bounds, search.m_c, search.n_knots, tg.T)
    base_flat = zero.flat()
    free = search.free_indices()
    crn = CRNSet(seed, search.crn_paths)
    iterates: list = []
    state = {"best": math.inf, "best_flat": base_flat.copy(), "diverged": 0,
             "last_failure": None}

    def evaluate(sub: np.ndarray):
        full = base_flat.copy()
        full[free] = sub
        raw = _decode(full, search, bounds, tg.T)
        ctl = project_admissible(raw.gammas, raw.knot_coeffs, bounds, tg.T)
        flat_p = ctl.flat()
        try:
            est = evaluate_cost(cost_spec, ctl, bundle, tg, crn, threads=threads)
        except DivergenceError as err:
            state["diverged"] += 1
            state["last_failure"] = err
            return flat_p[free], math.inf
        improving = est.mean < state["best"]
        if improving:
            state["best"] = est.mean
            state["best_flat"] = flat_p.copy()
        iterates.append(IterateRecord(flat_p, est, state["best"], improving))
        return flat_p[free], est.mean

    dim = free.size
    scale = search.simplex_scale
    restarts = 0

    def init_simplex(center_sub, s):
        pts = [evaluate(center_sub)]
        for i in range(dim):
            shifted = center_sub.copy()
            shifted[i] += s
            pts.append(evaluate(shifted))
        return pts

    simplex = init_simplex(base_flat[free].copy(), scale)

    for _ in range(search.max_iters):
        simplex.sort(key=lambda p: p[1])
        diameter = max(
            float(np.linalg.norm(p[0] - simplex[0][0])) for p in simplex[1:]
        ) if dim else 0.0
        if diameter < search.restart_diameter:
            if restarts >= search.max_restarts:
                break
            restarts += 1
            scale *= 0.5
            simplex = init_simplex(state["best_flat"][free].copy(), scale)
            continue
        best, worst = simplex[0], simplex[-1]
        centroid = np.mean([p[0] for p in simplex[:-1]], axis=0)
        reflected = evaluate(centroid + (centroid - worst[0]))
        if reflected[1] < best[1]:
            expanded = evaluate(centroid + 2.0 * (centroid - worst[0]))
            simplex[-1] = expanded if expanded[1] < reflected[1] else reflected
        elif reflected[1] < simplex[-2][1]:
            simplex[-1] = reflected
        else:
            if reflected[1] < worst[1]:
                contracted = evaluate(centroid + 0.5 * (centroid - worst[0]))
                better_than = reflected[1]
            else:
                contracted = evaluate(centroid - 0.5 * (centroid - worst[0]))
                better_than = worst[1]
            if contracted[1] < better_than:
                simplex[-1] = contracted
            else:
                simplex = [best] + [
                    evaluate(best[0] + 0.5 * (p[0] - best[0])) for p in simplex[1:]
                ]

    if not math.isfinite(state["best"]):
        raise OptimizationFailure(state["last_failure"])

    final = _decode(state["best_flat"], search, bounds, tg.T)
    fresh_estimate = evaluate_cost(
        cost_spec, final, bundle, tg, crn.fresh(), threads=threads
    )
    config = {
        "m_c": search.m_c,
        "n_knots": search.n_knots,
        "max_iters": search.max_iters,
        "simplex_scale": search.simplex_scale,
        "crn_paths": search.crn_paths,
        "restart_diameter": search.restart_diameter,
        "scope": search.scope,
        "seed": seed,
        "crn_tag": crn.tag(tg, bundle.noise.m_modes),
        "restarts": restarts,
    }
    return OptimizationRecord(iterates, final, fresh_estimate, config, state["diverged"])


def truncation_rule(traj: Trajectory, M: float, tg: TimeGrid) -> int:
    """First step where the running V-energy integral or the running sup of
    the squared H norm reaches M; ``n_steps`` if neither does."""
    if not M > 0:
        raise ParameterError(f"truncation level M must be positive, got {M}")
    dt = tg.dt
    int_prefix = np.concatenate(([0.0], dt * np.cumsum(traj.v_norms[:-1] ** 2)))
    sup_run = np.maximum.accumulate(traj.h_norms**2)
    hit = np.flatnonzero((int_prefix >= M) | (sup_run >= M))
    return int(hit[0]) if hit.size else tg.n_steps


@dataclass(frozen=True)
class ConvergenceDiagnostics:
    """Tail-of-sequence state-space convergence metrics.

    ``pairs`` rows are (iterate index, D_V, D_H_T) for the full equation;
    ``aux_pairs`` the same for the frozen-coefficient comparison solutions.
    When a truncation level is set, ``truncated_pairs``/``truncated_aux``
    hold the variants restricted to [0, T_M].
    """

    pairs: list
    aux_pairs: list
    truncation_M: float | None = None
    truncated_pairs: list | None = None
    truncated_aux: list | None = None

    @staticmethod
    def _non_increasing(rows, col):
        vals = [r[col] for r in rows]
        return all(b <= a * (1.0 + 1e-12) + 1e-300 for a, b in zip(vals, vals[1:]))

    def monotone(self) -> dict:
        return {
            "D_V": self._non_increasing(self.pairs, 1),
            "D_H_T": self._non_increasing(self.pairs, 2),
            "aux_D_V": self._non_increasing(self.aux_pairs, 1),
            "aux_D_H_T": self._non_increasing(self.aux_pairs, 2),
        }

    def final_values(self) -> dict:
        return {
            "D_V": self.pairs[-1][1],
            "D_H_T": self.pairs[-1][2],
            "aux_D_V": self.aux_pairs[-1][1],
            "aux_D_H_T": self.aux_pairs[-1][2],
        }


def diagnose_convergence(
    record: OptimizationRecord,
    tail_k: int,
    bundle: ModelBundle,
    tg: TimeGrid,
    crn: CRNSet,
    M: float | None = None,
    threads: int = 1,
) -> ConvergenceDiagnostics:
    """Distances between tail-iterate solutions and the final control's.

    For each of the last ``tail_k`` improving iterates Phi_n this computes,
    on the shared CRN set against the final control Phi*:

        D_V    = mean_paths int_0^T |u_{Phi_n} - u_{Phi*}|_V^2 dt
        D_H_T  = mean_paths |u_{Phi_n}(T) - u_{Phi*}(T)|_H^2

    and the same metrics for the comparison solutions of the
    frozen-coefficient equation driven by Phi_n along the Phi* paths.
    Truncated variants integrate only up to the stopping index of the Phi*
    trajectory at level M.
    """
    improving = record.improving_iterates()
    if len(improving) < 2:
        raise InsufficientDataError(
            f"need at least 2 improving iterates, got {len(improving)}"
        )
    tail = improving[-min(tail_k, len(improving)):]
    bounds = record.final_control.bounds
    search_cfg = record.config
    grid = bundle.grid
    dt = tg.dt
    m = bundle.noise.m_modes
    star = record.final_control

    def star_traj(i):
        return simulate(bundle.drift, bundle.noise, star, bundle.u0, tg,
                        crn.path(i, tg, m), grid)

    star_trajs = pmap(star_traj, range(crn.n_paths), threads)
    taus = None
    if M is not None:
        taus = [truncation_rule(tr, M, tg) for tr in star_trajs]

    def metrics_for(control_n):
        def one(i):
            w = crn.path(i, tg, m)
            ref = star_trajs[i]
            traj = simulate(bundle.drift, bundle.noise, control_n, bundle.u0,
                            tg, w, grid)
            aux = simulate_auxiliary(bundle.drift, bundle.noise, control_n,
                                     ref, bundle.u0, tg, w, grid)
            out = []
            for cand in (traj, aux):
                diff = cand.states - ref.states
                sq = np.sum(np.diff(diff, prepend=0.0, append=0.0, axis=1) ** 2,
                            axis=1) / grid.h
                d_v = dt * float(np.sum(sq[:-1]))
                d_h = grid.h * float(diff[-1] @ diff[-1])
                if taus is not None:
                    tau = taus[i]
                    d_v_t = dt * float(np.sum(sq[:tau]))
                    d_h_t = grid.h * float(diff[tau] @ diff[tau])
                    out.append((d_v, d_h, d_v_t, d_h_t))
                else:
                    out.append((d_v, d_h, None, None))
            return out

        rows = pmap(one, range(crn.n_paths), threads)
        full = np.array([[r[0][0], r[0][1]] for r in rows])
        aux = np.array([[r[1][0], r[1][1]] for r in rows])
        result = [full.mean(axis=0), aux.mean(axis=0)]
        if taus is not None:
            full_t = np.array([[r[0][2], r[0][3]] for r in rows])
            aux_t = np.array([[r[1][2], r[1][3]] for r in rows])
            result += [full_t.mean(axis=0), aux_t.mean(axis=0)]
        return result

    pairs, aux_pairs, trunc_pairs, trunc_aux = [], [], [], []
    for idx, it in enumerate(tail):
        ctl = FeedbackControl.from_flat(
            it.params, search_cfg["m_c"], search_cfg["n_knots"], bounds, tg.T
        )
        res = metrics_for(ctl)
        pairs.append((idx, float(res[0][0]), float(res[0][1])))
        aux_pairs.append((idx, float(res[1][0]), float(res[1][1])))
        if taus is not None:
            trunc_pairs.append((idx, float(res[2][0]), float(res[2][1])))
            trunc_aux.append((idx, float(res[3][0]), float(res[3][1])))

    return ConvergenceDiagnostics(
        pairs=pairs,
        aux_pairs=aux_pairs,
        truncation_M=M,
        truncated_pairs=trunc_pairs if taus is not None else None,
        truncated_aux=trunc_aux if taus is not None else None,
    )
