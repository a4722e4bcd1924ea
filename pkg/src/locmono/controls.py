"""Admissible feedback controls.

A control maps (t, x) to a forcing term in H:

    Phi(t, x) = g(t) + sum_k gamma_k * (x, e_k) * e_k

where g is piecewise linear between uniformly spaced time knots and the sum
runs over the first ``m_c`` sine modes.  Knot values are stored as mode
coefficients, so H norms of offsets are plain Euclidean norms of
coefficient rows.

Admissibility is guaranteed by construction from three budget caps:

* |gamma_k| <= sqrt(alpha/2)         (state-Lipschitz budget, halved)
* knot slope <= sqrt(lambda/2)       (time-Lipschitz budget, halved)
* |g(0)|_H^2 <= eta                  (anchoring bound)

Via (a+b)^2 <= 2a^2 + 2b^2 these imply

    |Phi(t,x) - Phi(s,y)|_H^2 <= lambda |t-s|^2 + alpha |x-y|_H^2
    |Phi(0,0)|_H^2 <= eta.

:func:`project_admissible` clamps arbitrary parameters onto this set and is
idempotent; admissible inputs are returned unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericDomainError, ParameterError, RangeError
from .spaces import Grid

__all__ = ["AdmissibleBounds", "FeedbackControl", "project_admissible", "probe_control"]

# relative slack when *checking* a budget, so that projection output
# re-checks as admissible despite rounding
_SLACK = 1e-9


@dataclass(frozen=True)
class AdmissibleBounds:
    eta: float
    lam: float
    alpha: float

    def __post_init__(self):
        for name in ("eta", "lam", "alpha"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ParameterError(f"{name} must be positive and finite, got {val}")

    @property
    def gain_cap(self) -> float:
        return math.sqrt(self.alpha / 2.0)

    @property
    def slope_cap(self) -> float:
        return math.sqrt(self.lam / 2.0)


@dataclass(frozen=True, eq=False)
class FeedbackControl:
    """Immutable admissible control; evaluation is pure.

    ``gammas`` has shape (m_c,); ``knot_coeffs`` has shape (n_knots, m_c)
    and holds the sine-mode coefficients of g at each time knot.
    """

    gammas: np.ndarray
    knot_coeffs: np.ndarray
    bounds: AdmissibleBounds
    horizon: float

    @property
    def m_c(self) -> int:
        return int(self.gammas.size)

    @property
    def n_knots(self) -> int:
        return int(self.knot_coeffs.shape[0])

    @property
    def knot_dt(self) -> float:
        return self.horizon / (self.n_knots - 1) if self.n_knots > 1 else self.horizon

    @classmethod
    def zero(cls, bounds: AdmissibleBounds, m_c: int, n_knots: int, horizon: float):
        if m_c < 1 or n_knots < 1:
            raise ParameterError("need m_c >= 1 and n_knots >= 1")
        return cls(np.zeros(m_c), np.zeros((n_knots, m_c)), bounds, horizon)

    def offset_coeffs(self, t: float) -> np.ndarray:
        """Mode coefficients of g(t), piecewise linear between knots."""
        if self.n_knots == 1:
            return self.knot_coeffs[0]
        pos = t / self.knot_dt
        i = min(int(pos), self.n_knots - 2)
        frac = pos - i
        return (1.0 - frac) * self.knot_coeffs[i] + frac * self.knot_coeffs[i + 1]

    def evaluate(self, t: float, x: np.ndarray, g: Grid) -> np.ndarray:
        """Phi(t, x) as a nodal H vector."""
        if not 0.0 <= t <= self.horizon * (1.0 + 1e-12):
            raise RangeError(f"time {t} outside [0, {self.horizon}]")
        E = g.eigen_basis[:, : self.m_c]
        proj = g.h * (E.T @ x)
        return E @ (self.offset_coeffs(t) + self.gammas * proj)

    def flat(self) -> np.ndarray:
        """Parameter encoding [gamma_1..gamma_mc, knot coefficients row-major]."""
        return np.concatenate([self.gammas, self.knot_coeffs.ravel()])

    @classmethod
    def from_flat(cls, vec, m_c: int, n_knots: int, bounds, horizon: float):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (m_c + n_knots * m_c,):
            raise ParameterError(
                f"flat vector of length {vec.size} does not match "
                f"m_c={m_c}, knots={n_knots}"
            )
        return cls(vec[:m_c].copy(), vec[m_c:].reshape(n_knots, m_c).copy(),
                   bounds, horizon)

    def is_admissible(self) -> bool:
        b = self.bounds
        if np.any(np.abs(self.gammas) > b.gain_cap * (1.0 + _SLACK)):
            return False
        if float(self.knot_coeffs[0] @ self.knot_coeffs[0]) > b.eta * (1.0 + _SLACK):
            return False
        if self.n_knots > 1:
            incs = np.diff(self.knot_coeffs, axis=0)
            budget = b.slope_cap * self.knot_dt
            if np.any(np.sqrt(np.sum(incs * incs, axis=1)) > budget * (1.0 + _SLACK)):
                return False
        return True


def project_admissible(
    gammas, knot_coeffs, bounds: AdmissibleBounds, horizon: float
) -> FeedbackControl:
    """Clamp raw parameters onto the admissible set.

    Gains are clipped coordinate-wise, the initial offset is radially
    rescaled onto the eta-ball, and each knot increment is rescaled onto the
    slope ball before the knot path is rebuilt cumulatively.  Idempotent;
    admissible inputs come back unchanged.
    """
    gammas = np.asarray(gammas, dtype=float)
    knot_coeffs = np.asarray(knot_coeffs, dtype=float)
    if knot_coeffs.ndim != 2 or gammas.ndim != 1:
        raise ParameterError("gammas must be 1-d and knot_coeffs 2-d")
    if not (np.isfinite(gammas).all() and np.isfinite(knot_coeffs).all()):
        raise NumericDomainError("control parameters must be finite")

    candidate = FeedbackControl(gammas.copy(), knot_coeffs.copy(), bounds, horizon)
    if candidate.is_admissible():
        return candidate

    cap = bounds.gain_cap
    new_gammas = np.clip(gammas, -cap, cap)

    k0 = knot_coeffs[0].copy()
    r0_sq = float(k0 @ k0)
    if r0_sq > bounds.eta * (1.0 + _SLACK):
        k0 *= math.sqrt(bounds.eta / r0_sq)

    n_knots = knot_coeffs.shape[0]
    new_knots = np.empty_like(knot_coeffs)
    new_knots[0] = k0
    if n_knots > 1:
        step = horizon / (n_knots - 1)
        budget = bounds.slope_cap * step
        for i in range(n_knots - 1):
            inc = knot_coeffs[i + 1] - knot_coeffs[i]
            norm = math.sqrt(float(inc @ inc))
            if norm > budget * (1.0 + _SLACK):
                inc = inc * (budget / norm)
            new_knots[i + 1] = new_knots[i] + inc
    return FeedbackControl(new_gammas, new_knots, bounds, horizon)


def probe_control(
    bounds: AdmissibleBounds, m_c: int, n_knots: int, horizon: float
) -> FeedbackControl:
    """Deterministic nonzero admissible control used by the audit commands.

    Gains alternate at half the cap; the offset starts at half the eta
    radius in mode 1 and ramps mode 2 at half the slope budget.
    """
    gammas = 0.5 * bounds.gain_cap * (-1.0) ** np.arange(m_c)
    knots = np.zeros((n_knots, m_c))
    knots[0, 0] = 0.5 * math.sqrt(bounds.eta)
    if n_knots > 1 and m_c > 1:
        step = horizon / (n_knots - 1)
        inc = 0.5 * bounds.slope_cap * step
        knots[:, 1] = inc * np.arange(n_knots)
        knots[1:, 0] = knots[0, 0]
    ctl = FeedbackControl(gammas, knots, bounds, horizon)
    assert ctl.is_admissible()
    return ctl
