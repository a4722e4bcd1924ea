"""Randomized numerical audits of the structural operator conditions.

For a given (drift, noise, control) triple on a grid, each audit samples
states and times, evaluates both sides of one of the inequalities below, and
reports the worst margin ``RHS - LHS`` together with the witness sample that
attains it (margin >= 0 on every sample means the condition held on the
sampled set; a negative margin is a concrete refutation).

Audited inequalities (duality pairings are discrete, ``<f, v> = (f, v)_H``):

* ``A1``  hemicontinuity of ``s -> <A(t, v1+s v2, v1+s v2), v> + <Phi(t, v1+s v2), v>``
  (refinement heuristic: gross jumps only),
* ``A2``  local monotonicity:
  ``2<A(v1,v1)-A(v2,v2), w> + 2<Phi(v1)-Phi(v2), w> + |Xi(v1)-Xi(v2)|_2^2
  <= (K + rho(v2)) |w|_H^2`` with ``w = v1 - v2``,
* ``A3``  coercivity:
  ``2<A(v,v), v> + 2<Phi(v), v> + |Xi(v)|_2^2 <= -theta |v|_V^2 + K |v|_H^2 + 1``,
* ``A4``  growth:
  ``|A(v,v)|_{V'}^2 + |Phi(v)|_{V'}^2 <= (1 + K |v|_V^2)(1 + |v|_H^beta)``,
* ``C1``  noise Lipschitz bound and ``Xi(0, .) = 0``,
* ``C2``  ``<A(t,v,v1), v1> <= -K1 |v1|_V^2 + J1 |v1|_H^2``,
* ``C3``  ``<A(t,v,v1) - A(t,v,v2), v1-v2> <= -theta1 |v1-v2|_V^2``,
* ``C4``  the frozen-slot mixed inequality with constants c1..c5,
* ``C5``  ``|A(t,v,v1)|_{V'}^2 <= theta2 |v1|_V^2 + p3 |v|^2 |v|_V^2
  + p4 |v1|^2 |v1|_V^2 + p5``,
* ``CTRL3`` / ``CTRL4``  the control admissibility bounds.

States are drawn as random sine-mode combinations with configurable
spectral decay and are rescaled to a uniformly random V-norm radius in
``(0, R]``.  The per-sample generator is keyed by ``(seed, sample index)``
(counter-based Philox), so reports are bit-identical regardless of the
evaluation schedule.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .controls import AdmissibleBounds, FeedbackControl
from .errors import ConfigError
from .operators import DriftOperator, NoiseOperator
from .spaces import Grid, embedding_constant, h_inner, h_norm, v_norm, vprime_norm

__all__ = [
    "CONDITION_IDS",
    "SamplerConfig",
    "ConditionConstants",
    "AuditReport",
    "build_constants",
    "audit_condition",
    "audit_local_monotonicity",
    "audit_coercivity",
    "audit_growth",
    "audit_C",
    "audit_hemicontinuity",
    "audit_control",
    "evaluate_margin",
]

CONDITION_IDS = ("A1", "A2", "A3", "A4", "C1", "C2", "C3", "C4", "C5", "CTRL3", "CTRL4")

_MASK64 = (1 << 64) - 1

# Hemicontinuity heuristic: a jump is flagged when it exceeds this multiple
# of the mean per-step variation along the segment.
_HEMI_FACTOR = 50.0


def _rng(seed: int, index: int) -> np.random.Generator:
    key = np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SamplerConfig:
    """State/time sampling policy shared by all audits."""

    samples: int = 10_000
    radius: float = 5.0
    modes: int = 16
    decay: float = 1.0
    horizon: float = 0.1
    seed: int = 42
    hemi_probes: int = 50
    hemi_steps: int = 200


@dataclass(frozen=True)
class ConditionConstants:
    """Declared constants for every audited inequality.

    ``rho(v) = rho_c * |v|_V^rho_p``; ``radius`` records the V-norm ball on
    which radius-dependent rows were certified.
    """

    theta: float
    K: float
    beta: float
    rho_c: float
    rho_p: float
    K1: float
    J1: float
    theta1: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    theta2: float
    p3: float
    p4: float
    p5: float
    L: float
    radius: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ConfigError(f"coercivity rate theta must be > 0, got {self.theta}")
        if not self.theta1 > 0:
            raise ConfigError(f"theta1 must be > 0, got {self.theta1}")
        if not self.c5 > 0:
            raise ConfigError(f"c5 must be > 0, got {self.c5}")
        for name in ("K", "beta", "rho_c", "K1", "J1", "c1", "c2", "c3", "c4",
                     "theta2", "p3", "p4", "p5", "L"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")

    def rho(self, v: np.ndarray, g: Grid) -> float:
        if self.rho_c == 0.0:
            return 0.0
        return self.rho_c * v_norm(v, g) ** self.rho_p

    def to_dict(self) -> dict:
        return asdict(self)


def build_constants(
    drift: DriftOperator,
    noise: NoiseOperator,
    bounds: AdmissibleBounds,
    grid: Grid,
    horizon: float,
    radius: float,
    theta1_override: float | None = None,
    rho_scale: float = 1.0,
) -> ConditionConstants:
    """Assemble the declared constants for one model triple.

    Drift rows come from the per-kind verifications; the shared K of the
    monotonicity/coercivity/growth rows folds in the control budgets
    (Lipschitz ``sqrt(alpha)``, anchor ``sqrt(eta) + sqrt(lambda) T``) and the
    noise Lipschitz constant, then takes the max over the three rows.
    """
    rows = drift.condition_rows(grid, radius)
    L = noise.lipschitz_bound(grid)
    c_hv = embedding_constant(grid)
    anchor = (math.sqrt(bounds.eta) + math.sqrt(bounds.lam) * horizon) ** 2
    k_a2 = drift.monotonicity_K(L, bounds.alpha)
    k_a3 = 2.0 * rows["J1"] + anchor + 2.0 * math.sqrt(bounds.alpha) + L
    k_a4 = rows["theta2"] + rows["p3"] + rows["p4"] + 2.0 * c_hv * bounds.alpha
    return ConditionConstants(
        theta=rows["K1"],
        K=max(k_a2, k_a3, k_a4),
        beta=2.0,
        rho_c=rows["rho_c"] * rho_scale,
        rho_p=rows["rho_p"],
        K1=rows["K1"],
        J1=rows["J1"],
        theta1=rows["theta1"] if theta1_override is None else theta1_override,
        c1=rows["c1"],
        c2=rows["c2"],
        c3=rows["c3"],
        c4=rows["c4"],
        c5=rows["c5"],
        theta2=rows["theta2"],
        p3=rows["p3"],
        p4=rows["p4"],
        p5=rows["p5"],
        L=L,
        radius=radius,
    )


@dataclass(frozen=True)
class AuditReport:
    condition_id: str
    samples: int
    worst_margin: float
    witness: dict
    constants: ConditionConstants
    extras: dict = field(default_factory=dict)

    def passed(self, tolerance: float = 1e-9) -> bool:
        return self.worst_margin >= -tolerance

    def to_dict(self) -> dict:
        witness = {
            k: (v.tolist() if isinstance(v, np.ndarray) else v)
            for k, v in self.witness.items()
        }
        return {
            "condition_id": self.condition_id,
            "samples": self.samples,
            "worst_margin": self.worst_margin,
            "witness": witness,
            "constants": self.constants.to_dict(),
            "extras": dict(self.extras),
        }


# -- sampling ---------------------------------------------------------------


def _draw_state(rng: np.random.Generator, grid: Grid, cfg: SamplerConfig) -> np.ndarray:
    m = min(cfg.modes, grid.n_interior)
    xi = rng.standard_normal(m)
    lam = grid.eigenvalues[:m]
    coeff = xi / lam ** (cfg.decay / 2.0)
    vn = math.sqrt(float((coeff * coeff) @ lam))
    target = rng.uniform() * cfg.radius
    if vn > 0.0:
        coeff *= target / vn
    return grid.eigen_basis[:, :m] @ coeff


_STATE_COUNT = {"A2": 2, "A3": 1, "A4": 1, "C1": 2, "C2": 2, "C3": 3, "C4": 3,
                "C5": 2, "CTRL4": 2}


def _draw_sample(cond: str, rng, grid: Grid, cfg: SamplerConfig) -> dict:
    sample = {"t": float(rng.uniform(0.0, cfg.horizon))}
    for i in range(_STATE_COUNT[cond]):
        sample[f"v{i + 1}"] = _draw_state(rng, grid, cfg)
    if cond == "CTRL4":
        sample["s"] = float(rng.uniform(0.0, cfg.horizon))
    return sample


# -- margins ----------------------------------------------------------------


def evaluate_margin(
    cond: str,
    sample: dict,
    drift: DriftOperator,
    noise: NoiseOperator,
    control: FeedbackControl,
    grid: Grid,
    c: ConditionConstants,
) -> float:
    """RHS - LHS of one condition at one sample; >= 0 means satisfied there.

    Re-evaluating a stored witness reproduces the recorded margin exactly
    (same code path, same operation order).
    """
    t = sample["t"]
    if cond == "A2":
        v1, v2 = sample["v1"], sample["v2"]
        w = v1 - v2
        lhs = 2.0 * h_inner(
            drift.apply(t, v1, v1, grid) - drift.apply(t, v2, v2, grid), w, grid
        )
        lhs += 2.0 * h_inner(
            control.evaluate(t, v1, grid) - control.evaluate(t, v2, grid), w, grid
        )
        lhs += noise.hs_distance(t, v1, v2, grid)
        return (c.K + c.rho(v2, grid)) * h_norm(w, grid) ** 2 - lhs
    if cond == "A3":
        v = sample["v1"]
        lhs = 2.0 * h_inner(drift.apply(t, v, v, grid), v, grid)
        lhs += 2.0 * h_inner(control.evaluate(t, v, grid), v, grid)
        lhs += noise.hs_norm_sq(t, v, grid)
        return -c.theta * v_norm(v, grid) ** 2 + c.K * h_norm(v, grid) ** 2 + 1.0 - lhs
    if cond == "A4":
        v = sample["v1"]
        lhs = vprime_norm(drift.apply(t, v, v, grid), grid) ** 2
        lhs += vprime_norm(control.evaluate(t, v, grid), grid) ** 2
        rhs = (1.0 + c.K * v_norm(v, grid) ** 2) * (1.0 + h_norm(v, grid) ** c.beta)
        return rhs - lhs
    if cond == "C1":
        v1, v2 = sample["v1"], sample["v2"]
        return c.L * h_norm(v1 - v2, grid) ** 2 - noise.hs_distance(t, v1, v2, grid)
    if cond == "C2":
        w, v1 = sample["v1"], sample["v2"]
        lhs = h_inner(drift.apply(t, w, v1, grid), v1, grid)
        return -c.K1 * v_norm(v1, grid) ** 2 + c.J1 * h_norm(v1, grid) ** 2 - lhs
    if cond == "C3":
        w, v1, v2 = sample["v1"], sample["v2"], sample["v3"]
        d = v1 - v2
        lhs = h_inner(
            drift.apply(t, w, v1, grid) - drift.apply(t, w, v2, grid), d, grid
        )
        return -c.theta1 * v_norm(d, grid) ** 2 - lhs
    if cond == "C4":
        v1, v2, v3 = sample["v1"], sample["v2"], sample["v3"]
        w = v2 - v3
        lhs = h_inner(
            drift.apply(t, v1, v2, grid) - drift.apply(t, v3, v3, grid), w, grid
        )
        rho1 = c.rho(v1, grid)
        rhs = (
            -c.c5 * v_norm(w, grid) ** 2
            + (c.c4 + c.c1 * rho1) * h_norm(w, grid) ** 2
            + (c.c2 + c.c3 * rho1) * v_norm(v2 - v1, grid) ** 2
        )
        return rhs - lhs
    if cond == "C5":
        w, v1 = sample["v1"], sample["v2"]
        lhs = vprime_norm(drift.apply(t, w, v1, grid), grid) ** 2
        rhs = (
            c.theta2 * v_norm(v1, grid) ** 2
            + c.p3 * h_norm(w, grid) ** 2 * v_norm(w, grid) ** 2
            + c.p4 * h_norm(v1, grid) ** 2 * v_norm(v1, grid) ** 2
            + c.p5
        )
        return rhs - lhs
    if cond == "CTRL4":
        x, y, s = sample["v1"], sample["v2"], sample["s"]
        b = control.bounds
        d = control.evaluate(t, x, grid) - control.evaluate(s, y, grid)
        return (
            b.lam * (t - s) ** 2
            + b.alpha * h_norm(x - y, grid) ** 2
            - h_norm(d, grid) ** 2
        )
    raise ConfigError(
        f"unknown condition id {cond!r}; valid: {', '.join(CONDITION_IDS)}"
    )


def _scan(cond, drift, noise, control, grid, sampler, constants):
    worst = math.inf
    witness: dict = {}
    for i in range(sampler.samples):
        sample = _draw_sample(cond, _rng(sampler.seed, i), grid, sampler)
        margin = evaluate_margin(cond, sample, drift, noise, control, grid, constants)
        if margin < worst:
            worst = margin
            witness = dict(sample, index=i)
    return AuditReport(cond, sampler.samples, worst, witness, constants)


def audit_local_monotonicity(drift, noise, control, grid, sampler, constants):
    return _scan("A2", drift, noise, control, grid, sampler, constants)


def audit_coercivity(drift, noise, control, grid, sampler, constants):
    return _scan("A3", drift, noise, control, grid, sampler, constants)


def audit_growth(drift, control, grid, sampler, constants):
    return _scan("A4", drift, None, control, grid, sampler, constants)


def audit_C(cond, drift, noise, grid, sampler, constants):
    if cond not in ("C1", "C2", "C3", "C4", "C5"):
        raise ConfigError(
            f"unknown condition id {cond!r}; valid: {', '.join(CONDITION_IDS)}"
        )
    return _scan(cond, drift, noise, None, grid, sampler, constants)


def audit_control(cond, control, grid, sampler):
    """CTRL3 (anchor bound) and CTRL4 (sampled joint Lipschitz bound)."""
    b = control.bounds
    if cond == "CTRL3":
        zero = np.zeros(grid.n_interior)
        margin = b.eta - h_norm(control.evaluate(0.0, zero, grid), grid) ** 2
        constants = _ctrl_constants(b, sampler.radius)
        return AuditReport("CTRL3", 1, margin, {"t": 0.0}, constants)
    if cond == "CTRL4":
        constants = _ctrl_constants(b, sampler.radius)
        return _scan("CTRL4", None, None, control, grid, sampler, constants)
    raise ConfigError(
        f"unknown condition id {cond!r}; valid: {', '.join(CONDITION_IDS)}"
    )


def _ctrl_constants(b: AdmissibleBounds, radius: float) -> ConditionConstants:
    # dummy positive entries in the drift rows; only the control budgets matter
    return ConditionConstants(
        theta=1.0, K=0.0, beta=2.0, rho_c=0.0, rho_p=2.0, K1=0.0, J1=0.0,
        theta1=1.0, c1=0.0, c2=0.0, c3=0.0, c4=0.0, c5=1.0, theta2=0.0,
        p3=0.0, p4=0.0, p5=0.0, L=0.0, radius=radius,
    )


# -- hemicontinuity ----------------------------------------------------------


def hemi_profile(drift, control, grid, t, v1, v2, v, steps):
    """Values of s -> <A(t, v1+s v2, v1+s v2), v> + <Phi(t, v1+s v2), v>."""
    out = np.empty(steps + 1)
    for i, s in enumerate(np.linspace(0.0, 1.0, steps + 1)):
        vs = v1 + s * v2
        val = h_inner(drift.apply(t, vs, vs, grid), v, grid)
        if control is not None:
            val += h_inner(control.evaluate(t, vs, grid), v, grid)
        out[i] = val
    return out


def audit_hemicontinuity(drift, control, grid, sampler, steps=None):
    """Line-segment continuity probe.

    For each probe the drift+control pairing is tabulated along a random
    segment; the worst adjacent jump is compared against ``_HEMI_FACTOR``
    times the mean per-step variation.  Continuity cannot be proven by
    sampling; this flags gross discontinuities only.
    """
    steps = sampler.hemi_steps if steps is None else steps
    if steps < 100:
        raise ConfigError(f"hemicontinuity needs steps >= 100, got {steps}")
    worst = math.inf
    witness: dict = {}
    max_second = 0.0
    for i in range(sampler.hemi_probes):
        rng = _rng(sampler.seed, i)
        t = float(rng.uniform(0.0, sampler.horizon))
        v1 = _draw_state(rng, grid, sampler)
        v2 = _draw_state(rng, grid, sampler)
        v = _draw_state(rng, grid, sampler)
        vals = hemi_profile(drift, control, grid, t, v1, v2, v, steps)
        jumps = np.abs(np.diff(vals))
        scale = 1e-12 * (1.0 + float(np.max(np.abs(vals))))
        margin = _HEMI_FACTOR * (float(np.sum(jumps)) / steps + scale) - float(
            np.max(jumps)
        )
        second = float(np.max(np.abs(np.diff(vals, n=2)))) if steps >= 2 else 0.0
        max_second = max(max_second, second)
        if margin < worst:
            worst = margin
            witness = {"t": t, "v1": v1, "v2": v2, "v": v, "index": i}
    dummy = _ctrl_constants(AdmissibleBounds(1.0, 1.0, 1.0), sampler.radius)
    return AuditReport(
        "A1", sampler.hemi_probes, worst, witness, dummy,
        extras={"steps": steps, "max_second_difference": max_second},
    )


# -- dispatch ----------------------------------------------------------------


def audit_condition(cond, drift, noise, control, grid, sampler, constants):
    """Run one audit by id.  ``constants`` may be None for A1/CTRL audits."""
    if cond == "A1":
        return audit_hemicontinuity(drift, control, grid, sampler)
    if cond == "A2":
        return audit_local_monotonicity(drift, noise, control, grid, sampler, constants)
    if cond == "A3":
        return audit_coercivity(drift, noise, control, grid, sampler, constants)
    if cond == "A4":
        return audit_growth(drift, control, grid, sampler, constants)
    if cond in ("C1", "C2", "C3", "C4", "C5"):
        return audit_C(cond, drift, noise, grid, sampler, constants)
    if cond in ("CTRL3", "CTRL4"):
        return audit_control(cond, control, grid, sampler)
    raise ConfigError(
        f"unknown condition id {cond!r}; valid: {', '.join(CONDITION_IDS)}"
    )
