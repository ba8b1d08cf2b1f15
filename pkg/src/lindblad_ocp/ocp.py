"""Problem data for the time/energy-optimal transfer with a purity band.

Cost:  Gamma * t_f + eta * integral(u^2) (+ w_reg * integral(nu^2) during
regularization continuation).  The purity band  f * P0 <= P <= P0  is the
state constraint; the control bound is handled by the logistic saturation
map u = phi(nu), which turns the inequality into the equality u - phi(nu) = 0
on an unconstrained variable nu.

Note on symbols: the source material overloads one greek letter for the
purity floor fraction, the regularization weight, and a Hessian bound; here
they are ``purity_floor_fraction``, ``w_reg``, and the saturation curvature
bound, respectively.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .superop import DensityState, LindbladSpec


@dataclass(frozen=True)
class SaturationFunction:
    """Smooth monotone map from R onto the open interval (u_min, u_max).

    phi(nu) = u_max - (u_max - u_min) / (1 + exp(s * nu)),
    s = slope_c / (u_max - u_min).
    Equivalently u_min + (u_max - u_min) * logistic(s * nu), which is the
    overflow-safe form used here.
    """

    u_min: float
    u_max: float
    slope_c: float = 10.0

    def __post_init__(self):
        if not self.u_min < self.u_max:
            raise ValueError("need u_min < u_max")
        if not self.slope_c > 0:
            raise ValueError("saturation slope constant must be positive")

    @property
    def s(self) -> float:
        return self.slope_c / (self.u_max - self.u_min)

    @property
    def span(self) -> float:
        return self.u_max - self.u_min

    def value(self, nu):
        return self.u_min + self.span * expit(self.s * np.asarray(nu, dtype=float))

    def d1(self, nu):
        g = expit(self.s * np.asarray(nu, dtype=float))
        return self.span * self.s * g * (1.0 - g)

    def d2(self, nu):
        g = expit(self.s * np.asarray(nu, dtype=float))
        return self.span * self.s**2 * g * (1.0 - g) * (1.0 - 2.0 * g)

    def max_abs_d2(self) -> float:
        """Closed-form max over nu of |phi''|: s^2 (u_max - u_min) / (6 sqrt 3).

        The extremum sits where the logistic g solves 6g^2 - 6g + 1 = 0, at
        which g(1-g)(1-2g) = 1/(6 sqrt 3).
        """
        return self.s**2 * self.span / (6.0 * np.sqrt(3.0))

    def inverse(self, u):
        """nu with phi(nu) = u, for u strictly inside the bounds."""
        u = np.asarray(u, dtype=float)
        frac = (u - self.u_min) / self.span
        if np.any(frac <= 0) or np.any(frac >= 1):
            raise ValueError("saturation inverse needs u strictly inside bounds")
        return np.log(frac / (1.0 - frac)) / self.s


def saturation(nu, sat: SaturationFunction):
    return sat.value(nu)


def saturation_d1(nu, sat: SaturationFunction):
    return sat.d1(nu)


def saturation_d2(nu, sat: SaturationFunction):
    return sat.d2(nu)


DEFAULT_REG_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4)


@dataclass(frozen=True)
class ProblemSpec:
    """Everything that defines one transfer problem instance."""

    lindblad: LindbladSpec
    rho0: DensityState
    rhof: DensityState
    time_weight: float = 1.0          # Gamma
    energy_weight: float = 0.1        # eta
    u_min: float = -3.0
    u_max: float = 3.0
    slope_c: float = 10.0
    purity_floor_fraction: float = 0.9
    purity_constrained: bool = True
    w_reg: float = 1e-4
    reg_schedule: tuple = DEFAULT_REG_SCHEDULE

    def __post_init__(self):
        if self.rho0.dim != self.lindblad.dim or self.rhof.dim != self.lindblad.dim:
            raise ValueError("state dimension does not match the Lindblad spec")
        if not self.u_min < self.u_max:
            raise ValueError("need u_min < u_max")
        if self.time_weight <= 0 or self.energy_weight <= 0:
            raise ValueError("cost weights must be positive")
        if not 0 < self.purity_floor_fraction < 1:
            raise ValueError("purity floor fraction must lie in (0, 1)")
        if self.w_reg <= 0:
            raise ValueError("regularization weight must be positive")
        sched = tuple(float(w) for w in self.reg_schedule)
        if len(sched) == 0 or any(w <= 0 for w in sched):
            raise ValueError("regularization schedule must be positive")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("regularization schedule must be strictly decreasing")
        object.__setattr__(self, "reg_schedule", sched)

    @property
    def saturation(self) -> SaturationFunction:
        return SaturationFunction(self.u_min, self.u_max, self.slope_c)

    @property
    def initial_purity(self) -> float:
        return self.rho0.purity


def purity(v: np.ndarray):
    """tr(rho^2) in embedded coordinates: plain squared norm."""
    v = np.asarray(v, dtype=float)
    return np.einsum("...i,...i->...", v, v)


def purity_gradient(v: np.ndarray) -> np.ndarray:
    return 2.0 * np.asarray(v, dtype=float)


def state_constraint(v: np.ndarray, p0: float, floor_fraction: float) -> np.ndarray:
    """Two-sided purity band as (h1, h2) with feasibility iff both <= 0.

    h1 = P - P0, h2 = f*P0 - P; note h1 + h2 = (f - 1) * P0 identically.
    """
    p = purity(v)
    return np.stack([p - p0, floor_fraction * p0 - p], axis=-1)


def quadrature(times: np.ndarray, values: np.ndarray) -> float:
    """Trapezoidal integral on the (possibly nonuniform) grid."""
    return float(np.trapezoid(values, times))


def cost(traj, nu_samples, spec: ProblemSpec, w_reg: float = None) -> float:
    """Regularized objective Gamma*t_f + eta*int u^2 + w_reg*int nu^2."""
    if w_reg is None:
        w_reg = spec.w_reg
    times = np.asarray(traj.times, dtype=float)
    u = np.asarray(traj.controls, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    nu = np.asarray(nu_samples, dtype=float)
    if nu.ndim == 1:
        nu = nu[:, None]
    if nu.shape[0] != times.size or u.shape[0] != times.size:
        raise ValueError("control and nu samples must live on the trajectory grid")
    tf = times[-1] - times[0]
    return (
        spec.time_weight * tf
        + spec.energy_weight * quadrature(times, np.sum(u**2, axis=1))
        + w_reg * quadrature(times, np.sum(nu**2, axis=1))
    )
