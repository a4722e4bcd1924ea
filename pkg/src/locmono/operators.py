"""Drift and noise coefficients for the four example equations.

Every drift is a two-slot map ``A(t, w, v)``: the first slot ``w`` feeds the
state-dependent coefficients, the second slot ``v`` is where the spatial
operator acts.  The single-argument drift of the evolution equation is the
diagonal ``A(t, u, u)``.  Kinds:

``linear``
    ``nu * laplacian v``
``reaction_diffusion``
    ``laplacian v - v |v|^(q-2)``  (second slot only, monotone reaction)
``nonlocal``
    ``a(int w dx) * laplacian v`` with ``0 < p <= a(s) <= P``
``semilinear``
    ``laplacian v + f(w) * d_x v`` with ``|f| <= J < 1`` (one space dimension)

Each kind exposes the split used by the semi-implicit integrator
(:meth:`DriftOperator.laplace_coefficient` + :meth:`DriftOperator.remainder`)
and its declared condition-constant rows (:meth:`DriftOperator.condition_rows`).

The noise is multiplicative and modal: mode j of ``Xi(t, u)`` is
``sigma_j * ramp(t) * (u .* e_j)`` with ``ramp(t) = min(t / t_r, 1)``, so
``Xi(0, u) = 0`` exactly and the Hilbert-Schmidt Lipschitz constant is
``L = sum_j sigma_j^2 * max_i e_j(x_i)^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConformanceError, NumericDomainError, ParameterError
from .spaces import Grid, conform, embedding_constant, h_norm

__all__ = [
    "DriftOperator",
    "NoiseOperator",
    "linear_drift",
    "reaction_diffusion_drift",
    "nonlocal_drift",
    "semilinear_drift",
    "modal_noise",
]

KINDS = ("linear", "reaction_diffusion", "nonlocal", "semilinear")

# Slope of the default nonlocal coefficient a(s) = p + (P-p)/(1+s^2):
# max |d/ds 1/(1+s^2)| = 3*sqrt(3)/8, attained at s = 1/sqrt(3).
_A_SLOPE = 3.0 * math.sqrt(3.0) / 8.0


@dataclass(frozen=True, eq=False)
class DriftOperator:
    """Immutable drift coefficient; all apply methods are pure.

    Only the parameters of the active ``kind`` are meaningful.  ``a_table``
    optionally replaces the default smooth nonlocal coefficient with a
    piecewise-linear table ``(s_values, a_values)``.
    """

    kind: str
    nu: float = 1.0
    q: float = 2.0
    p: float = 0.5
    P: float = 0.9
    J: float = 0.5
    a_table: tuple | None = None

    # -- coefficient pieces ------------------------------------------------

    def coefficient(self, w: np.ndarray, g: Grid) -> float:
        """Nonlocal diffusion coefficient a(h * sum w_i); 1-bounded kinds aside."""
        if self.kind != "nonlocal":
            return self.nu if self.kind == "linear" else 1.0
        s = g.h * float(np.sum(w))
        if self.a_table is not None:
            s_grid, a_vals = self.a_table
            val = float(np.interp(s, s_grid, a_vals))
        else:
            val = self.p + (self.P - self.p) / (1.0 + s * s)
        return val

    def a_lipschitz(self) -> float:
        """Lipschitz constant of the nonlocal coefficient s -> a(s)."""
        if self.kind != "nonlocal":
            return 0.0
        if self.a_table is not None:
            s_grid, a_vals = self.a_table
            slopes = np.abs(np.diff(a_vals) / np.diff(s_grid))
            return float(np.max(slopes)) if slopes.size else 0.0
        return (self.P - self.p) * _A_SLOPE

    def transport_field(self, w: np.ndarray) -> np.ndarray:
        """Pointwise transport coefficient f(w) = J * tanh(w)."""
        return self.J * np.tanh(w)

    def laplace_coefficient(self, t: float, w: np.ndarray, g: Grid) -> float:
        """Scalar multiplying the Laplacian for the implicit solve."""
        return self.coefficient(w, g)

    def remainder(self, t: float, w: np.ndarray, v: np.ndarray, g: Grid):
        """Non-Laplacian drift part; ``None`` when identically zero."""
        if self.kind == "reaction_diffusion":
            return -v * np.abs(v) ** (self.q - 2.0)
        if self.kind == "semilinear":
            return self.transport_field(w) * _centered_diff(v, g.h)
        return None

    def apply(self, t: float, w: np.ndarray, v: np.ndarray, g: Grid) -> np.ndarray:
        """Nodal V'-representative of A(t, w, v)."""
        w = conform(w, g)
        v = conform(v, g)
        if not (np.isfinite(w).all() and np.isfinite(v).all()):
            raise NumericDomainError("drift arguments must be finite")
        out = self.laplace_coefficient(t, w, g) * g.laplacian(v)
        rem = self.remainder(t, w, v, g)
        if rem is not None:
            out += rem
        return out

    # -- declared condition constants --------------------------------------

    def condition_rows(self, g: Grid, radius: float) -> dict:
        """Drift-only condition constants, certified on the ball |v|_V <= radius.

        Rows follow the per-kind verifications; where only "suitable
        constants" exist, radius-dependent ones are derived from the
        one-dimensional bounds |u|_inf^2 <= 2 |u|_H |u|_V and
        |f|_{V'}^2 <= c_HV |f|_H^2.
        """
        c_hv = embedding_constant(g)
        if self.kind == "linear":
            nu = self.nu
            return dict(
                K1=nu, J1=0.0, theta1=nu,
                c1=0.0, c2=0.0, c3=0.0, c4=0.0, c5=nu,
                theta2=nu if nu <= 1.0 else nu * nu, p3=0.0, p4=0.0, p5=0.0,
                rho_c=0.0, rho_p=2.0,
            )
        if self.kind == "reaction_diffusion":
            # theta2: |lap v1 - v1|v1|^(q-2)|_{V'}^2 <= 2|v1|_V^2 + 2 c_HV |reaction|^2
            # and |reaction|^2 <= (2 sqrt(c_HV) R^2)^(q-2) * c_HV |v1|_V^2 on the ball.
            theta2 = 2.0 + 2.0 * c_hv * c_hv * (
                2.0 * math.sqrt(c_hv) * radius * radius
            ) ** (self.q - 2.0)
            return dict(
                K1=1.0, J1=0.0, theta1=1.0,
                c1=0.0, c2=1.0, c3=0.0, c4=1.0, c5=1.0,
                theta2=theta2, p3=0.0, p4=0.0, p5=0.0,
                rho_c=0.0, rho_p=2.0,
            )
        if self.kind == "nonlocal":
            l1 = self.a_lipschitz()
            return dict(
                K1=self.p, J1=0.0, theta1=self.p,
                c1=4.0 * l1, c2=2.0 * self.P / self.p, c3=4.0 * l1,
                c4=0.0, c5=0.75 * self.p,
                theta2=self.P if self.P <= 1.0 else self.P * self.P,
                p3=0.0, p4=0.0, p5=0.0,
                rho_c=l1 / self.p, rho_p=2.0,
            )
        # semilinear, d = 1 branch: K2 from the local-monotonicity bound
        # 2<A(u)-A(v), u-v> <= -|u-v|_V^2 + (K2 + K2 |v|_V^2)|u-v|^2
        # with K2 = 2 J^2 + (3/2) L1^(4/3) (Young against the Agmon bound).
        l1 = self.J
        k2 = 2.0 * self.J * self.J + 1.5 * l1 ** (4.0 / 3.0)
        return dict(
            K1=1.0 - self.J, J1=0.0, theta1=1.0 - self.J,
            c1=1.0 / k2, c2=1.0 + l1 ** 4 / 2.0, c3=1.0 / (2.0 * k2),
            c4=2.0 * self.J * self.J, c5=0.25,
            theta2=1.0 + l1, p3=0.0, p4=0.0, p5=1.0,
            rho_c=k2, rho_p=2.0,
        )

    def monotonicity_K(self, noise_L: float, alpha: float) -> float:
        """Declared K of the local-monotonicity row (control/noise folded in)."""
        if self.kind == "linear":
            return 2.0 * noise_L / self.nu + alpha
        if self.kind == "reaction_diffusion":
            return noise_L
        if self.kind == "nonlocal":
            return noise_L + 2.0 * alpha / self.p
        k2 = 2.0 * self.J * self.J + 1.5 * self.J ** (4.0 / 3.0)
        return k2 + 2.0 * math.sqrt(alpha) + noise_L


def _centered_diff(u: np.ndarray, h: float) -> np.ndarray:
    """Centered first difference with zero ghosts."""
    d = np.empty_like(u)
    d[1:-1] = u[2:] - u[:-2]
    d[0] = u[1]
    d[-1] = -u[-2]
    d /= 2.0 * h
    return d


def linear_drift(nu: float = 1.0) -> DriftOperator:
    if not (math.isfinite(nu) and nu > 0):
        raise ParameterError(f"nu must be positive and finite, got {nu}")
    return DriftOperator(kind="linear", nu=nu)


def reaction_diffusion_drift(q: float = 4.0) -> DriftOperator:
    if not math.isfinite(q) or q < 2.0:
        raise ParameterError(f"reaction exponent q must satisfy q >= 2, got {q}")
    return DriftOperator(kind="reaction_diffusion", q=q)


def nonlocal_drift(p: float = 0.5, P: float = 0.9, a_table=None) -> DriftOperator:
    if not (math.isfinite(p) and math.isfinite(P) and 0.0 < p <= P):
        raise ParameterError(f"nonlocal bounds need 0 < p <= P, got p={p}, P={P}")
    if a_table is not None:
        s_grid = np.asarray(a_table[0], dtype=float)
        a_vals = np.asarray(a_table[1], dtype=float)
        if s_grid.ndim != 1 or s_grid.shape != a_vals.shape or s_grid.size < 2:
            raise ParameterError("coefficient table needs matching 1-d s/a arrays")
        if np.any(np.diff(s_grid) <= 0):
            raise ParameterError("coefficient table s-values must increase")
        if np.any(a_vals < p) or np.any(a_vals > P):
            raise ParameterError(
                f"coefficient table violates bounds [{p}, {P}]: "
                f"range [{a_vals.min()}, {a_vals.max()}]"
            )
        a_table = (s_grid, a_vals)
    return DriftOperator(kind="nonlocal", p=p, P=P, a_table=a_table)


def semilinear_drift(J: float = 0.5) -> DriftOperator:
    if not (math.isfinite(J) and 0.0 < J < 1.0):
        raise ParameterError(f"transport bound must satisfy 0 < J < 1, got {J}")
    return DriftOperator(kind="semilinear", J=J)


@dataclass(frozen=True, eq=False)
class NoiseOperator:
    """Multiplicative modal noise with a start-up ramp.

    ``sigma`` holds the per-mode amplitudes; ``ramp_time`` the time over
    which amplitudes grow linearly from zero.
    """

    sigma: np.ndarray
    ramp_time: float

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim != 1 or sigma.size < 1:
            raise ParameterError("sigma must be a 1-d amplitude vector")
        if not np.isfinite(sigma).all() or np.any(sigma < 0):
            raise ParameterError("sigma amplitudes must be finite and >= 0")
        if not (math.isfinite(self.ramp_time) and self.ramp_time > 0):
            raise ParameterError(f"ramp_time must be positive, got {self.ramp_time}")
        object.__setattr__(self, "sigma", sigma)

    @property
    def m_modes(self) -> int:
        return int(self.sigma.size)

    def amplitudes(self, t: float) -> np.ndarray:
        return self.sigma * min(t / self.ramp_time, 1.0)

    def apply(self, t: float, u: np.ndarray, g: Grid) -> np.ndarray:
        """Per-mode outputs as rows of an (m_modes, n) array."""
        u = conform(u, g)
        if self.m_modes > g.n_interior:
            raise ConformanceError(
                f"{self.m_modes} noise modes exceed {g.n_interior} grid modes"
            )
        amp = self.amplitudes(t)
        return (amp[:, None] * g.eigen_basis[:, : self.m_modes].T) * u[None, :]

    def hs_norm_sq(self, t: float, u: np.ndarray, g: Grid) -> float:
        modes = self.apply(t, u, g)
        return g.h * float(np.sum(modes * modes))

    def hs_distance(self, t: float, u1: np.ndarray, u2: np.ndarray, g: Grid) -> float:
        """Squared Hilbert-Schmidt distance sum_j |mode_j(u1) - mode_j(u2)|_H^2."""
        d = self.apply(t, u1, g) - self.apply(t, u2, g)
        return g.h * float(np.sum(d * d))

    def lipschitz_bound(self, g: Grid) -> float:
        """L with hs_distance <= L |u1 - u2|_H^2 (grid-sharp mode maxima)."""
        E = g.eigen_basis[:, : self.m_modes]
        peaks = np.max(E * E, axis=0)
        return float(np.sum(self.sigma**2 * peaks))


def modal_noise(
    m_modes: int, sigma0: float, decay: float = 1.0, ramp_time: float = 0.025
) -> NoiseOperator:
    """Amplitudes sigma_j = sigma0 / j^decay for j = 1..m_modes."""
    if m_modes < 1:
        raise ParameterError(f"need at least one noise mode, got {m_modes}")
    if sigma0 < 0 or not math.isfinite(sigma0):
        raise ParameterError(f"sigma0 must be finite and >= 0, got {sigma0}")
    j = np.arange(1, m_modes + 1, dtype=float)
    return NoiseOperator(sigma=sigma0 / j**decay, ramp_time=ramp_time)
