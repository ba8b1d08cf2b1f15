"""First-order necessary conditions for the purity-constrained transfer.

The Pontryagin Hamiltonian in Gamkrelidze form with the saturation extension:

    H = (lambda - 2 delta v)^T Ltilde(u) v + eta |u|^2 + w_reg |nu|^2
        + beta . (u - phi(nu))

where v is the embedded state, delta = mu1 - mu2 collapses the two purity
multipliers through the constraint gradient 2v, and beta enforces the
saturation equality.  Every residual here is the exact partial derivative of
this H; the finite-difference master test in the suite pins that down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ocp import ProblemSpec, SaturationFunction
from .superop import build_liouvillian


@dataclass(frozen=True)
class GamkrelidzeMultipliers:
    """Pointwise purity-band multipliers, both nonnegative."""

    mu1: np.ndarray
    mu2: np.ndarray

    def __post_init__(self):
        mu1 = np.asarray(self.mu1, dtype=float)
        mu2 = np.asarray(self.mu2, dtype=float)
        if mu1.shape != mu2.shape:
            raise ValueError("multiplier shapes differ")
        if np.any(mu1 < 0) or np.any(mu2 < 0):
            raise ValueError("multipliers must be nonnegative")
        object.__setattr__(self, "mu1", mu1)
        object.__setattr__(self, "mu2", mu2)

    @property
    def delta(self) -> np.ndarray:
        return self.mu1 - self.mu2


def _embedded_operators(spec: ProblemSpec, u):
    liou = build_liouvillian(spec.lindblad, u)
    return liou.real_matrix, liou.real_controls


def pontryagin_hamiltonian(v, lam, u, nu, delta, beta, spec: ProblemSpec,
                           w_reg: float) -> float:
    v = np.asarray(v, dtype=float)
    lam = np.asarray(lam, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    lr, _ = _embedded_operators(spec, u)
    sat = spec.saturation
    core = (lam - 2.0 * delta * v) @ (lr @ v)
    return float(
        core
        + spec.energy_weight * np.dot(u, u)
        + w_reg * np.dot(nu, nu)
        + np.dot(beta, u - sat.value(nu))
    )


def costate_rhs(v, lam, u, delta, spec: ProblemSpec) -> np.ndarray:
    """-dH/dv:  -Ltilde^T lambda + 2 delta (Ltilde + Ltilde^T) v."""
    v = np.asarray(v, dtype=float)
    lam = np.asarray(lam, dtype=float)
    lr, _ = _embedded_operators(spec, u)
    return -(lr.T @ lam) + 2.0 * delta * ((lr + lr.T) @ v)


def stationarity_u(v, lam, u, delta, beta, spec: ProblemSpec) -> np.ndarray:
    """dH/du per channel: (lambda - 2 delta v)^T Ltilde_l v + 2 eta u_l + beta_l."""
    v = np.asarray(v, dtype=float)
    lam = np.asarray(lam, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    _, channels = _embedded_operators(spec, u)
    adj = lam - 2.0 * delta * v
    bilinear = np.array([adj @ (ch @ v) for ch in channels])
    return bilinear + 2.0 * spec.energy_weight * u + beta


def stationarity_nu(nu, beta, w_reg: float, sat: SaturationFunction):
    """dH/dnu per channel: 2 w_reg nu - beta phi'(nu)."""
    nu = np.asarray(nu, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return 2.0 * w_reg * nu - beta * sat.d1(nu)


def transversality(v_f, lam_f, u_f, nu_f, delta_f, beta_f, spec: ProblemSpec,
                   w_reg: float, time_weight: float = None) -> float:
    """Free-final-time condition H(t_f) + Gamma."""
    if time_weight is None:
        time_weight = spec.time_weight
    h = pontryagin_hamiltonian(v_f, lam_f, u_f, nu_f, delta_f, beta_f, spec, w_reg)
    return h + time_weight


def legendre_clebsch(eta: float, w_reg: float, beta, sat: SaturationFunction,
                     nu=None):
    """Strengthened second-order check on the control Hessian diag(2 eta, ...).

    With ``nu`` omitted this is the global sufficient condition: the second
    diagonal entry 2 w_reg - beta phi''(nu) stays positive for every nu, i.e.
    w_reg > |beta| max|phi''| / 2.  With ``nu`` given, the entry is evaluated
    pointwise at (beta, nu) pairs.  Returns (ok, margin) where margin is the
    minimum Hessian diagonal value encountered.
    """
    beta = np.asarray(beta, dtype=float)
    if nu is None:
        second = 2.0 * w_reg - np.abs(beta) * sat.max_abs_d2()
    else:
        second = 2.0 * w_reg - beta * sat.d2(np.asarray(nu, dtype=float))
    margin = float(min(2.0 * eta, np.min(second)))
    return margin > 0.0, margin
