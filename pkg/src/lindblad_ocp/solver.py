"""Damped least-squares training of the collocation residual.

The first-order conditions of the control problem are collected into one
residual vector over the collocation grid: state and costate dynamics,
stationarity in the control and in the saturation input, the saturation
link u - phi(nu), the free-final-time condition, and (when the purity band
is active) complementarity mu_i h_i plus a smooth one-sided feasibility
penalty (softplus(k h_i)/k)^2.  The band multipliers are expanded as
squared networks so they stay nonnegative without inequality handling.

Training is Levenberg-Marquardt style: solve (J^T J + d I) step = -J^T r,
multiply d by ten on a rejected step and divide by ten on an accepted one.
The Jacobian used inside training is assembled in closed form; a central
finite-difference Jacobian is kept as an independent cross-check.
Continuation runs the same problem over a decreasing schedule of the
saturation-input weight, warm-starting each stage from the previous one.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lstsq
from scipy.special import expit

from .metrics import fidelity
from .superop import build_liouvillian, unembed_density
from .tfc import (
    ElmBasis,
    PinnParams,
    collocation_grid,
    costate_feature_matrix,
    final_time,
    state_feature_matrix,
    switching,
)

FEASIBILITY_SHARPNESS = 1e3


@dataclass(frozen=True)
class SolverConfig:
    """Discretization and training knobs; defaults match the two-level demo."""

    neurons: int = 60
    collocation_points: int = 80
    grid: str = "chebyshev"
    seed: int = 7
    basis_scale: float = 4.0
    initial_c: float = 1.0
    mu_init: float = 0.05             # multiplier nets start here, not at the m=0 saddle
    feasibility_sharpness: float = FEASIBILITY_SHARPNESS
    ls_method: str = "normal"         # "normal" (Cholesky) or "augmented" (lstsq)
    damping_init: float = 1e-3
    damping_floor: float = 1e-12
    damping_max: float = 1e10
    max_iterations: int = 250
    loss_target: float = 1e-7         # stop a stage once ||r||_2 falls below
    theta_c_max_step: float = 0.25    # per-step cap on the log time-dilation
    stall_rel_decrease: float = 1e-5
    stall_patience: int = 10
    fd_step: float = 1e-7
    resimulation_substeps: int = 40
    verbose: bool = False

    def __post_init__(self):
        if self.neurons < 1 or self.collocation_points < 2:
            raise ValueError("need at least one neuron and two collocation points")
        if self.ls_method not in ("normal", "augmented"):
            raise ValueError(f"unknown least-squares method {self.ls_method!r}")
        if self.damping_init <= 0 or self.damping_floor <= 0:
            raise ValueError("damping values must be positive")
        if self.initial_c <= 0:
            raise ValueError("initial morph rate must be positive")


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def block_slices(n_points: int, dim: int, channels: int, constrained: bool):
    """Named slices into the flat residual, in assembly order."""
    sizes = [
        ("dynamics", n_points * dim),
        ("costate", n_points * dim),
        ("stationarity_u", n_points * channels),
        ("stationarity_nu", n_points * channels),
        ("saturation_gap", n_points * channels),
        ("transversality", 1),
    ]
    if constrained:
        sizes += [
            ("complementarity_upper", n_points),
            ("complementarity_lower", n_points),
            ("feasibility_upper", n_points),
            ("feasibility_lower", n_points),
        ]
    out = {}
    k = 0
    for name, size in sizes:
        out[name] = slice(k, k + size)
        k += size
    return out, k


class _Workspace:
    """Grid-fixed quantities shared by residual and Jacobian assembly."""

    def __init__(self, problem, basis: ElmBasis, tau: np.ndarray,
                 sharpness: float = FEASIBILITY_SHARPNESS):
        self.problem = problem
        self.basis = basis
        self.tau = np.asarray(tau, dtype=float)
        lind = problem.lindblad
        liou = build_liouvillian(lind, np.zeros(lind.n_controls))
        self.A0 = liou.real_drift
        self.Ac = np.stack(liou.real_controls)
        self.Asym = self.Ac + np.transpose(self.Ac, (0, 2, 1))
        self.D = self.A0.shape[0]
        self.m = self.Ac.shape[0]
        self.N = self.tau.size
        self.L = basis.neurons
        self.H = basis.features(self.tau)
        self.Phi, self.Phid = state_feature_matrix(self.tau, basis)
        self.Psi, self.Psid = costate_feature_matrix(self.tau, basis)
        o1, o2, o1d, o2d = switching(self.tau)
        r0e = problem.rho0.embedded()
        rfe = problem.rhof.embedded()
        self.rho0_embedded = r0e
        self.rhof_embedded = rfe
        self.v_fix = np.multiply.outer(o1, r0e) + np.multiply.outer(o2, rfe)
        self.w_fix = np.multiply.outer(o1d, r0e) + np.multiply.outer(o2d, rfe)
        self.P0 = problem.initial_purity
        self.floor = problem.purity_floor_fraction * self.P0
        self.sat = problem.saturation
        self.eta = problem.energy_weight
        self.gamma_t = problem.time_weight
        self.k = float(sharpness)
        self.constrained = problem.purity_constrained
        self.slices, self.n_loss = block_slices(self.N, self.D, self.m,
                                                self.constrained)

    def fields(self, params: PinnParams) -> SimpleNamespace:
        """All grid quantities derived from one parameter set."""
        if params.include_mu != self.constrained:
            raise ValueError("parameter layout does not match the problem's "
                             "constraint mode")
        c = params.c
        V = self.Phi @ params.xi_rho + self.v_fix
        W = self.Phid @ params.xi_rho + self.w_fix   # d/dtau part; dt needs * c
        Lam = self.Psi @ params.xi_lam
        Y = self.Psid @ params.xi_lam
        U = self.H @ params.xi_u
        Nu = self.H @ params.xi_nu
        Beta = self.H @ params.xi_beta
        if self.constrained:
            m1 = self.H @ params.xi_mu1
            m2 = self.H @ params.xi_mu2
        else:
            m1 = np.zeros(self.N)
            m2 = np.zeros(self.N)
        mu1 = m1**2
        mu2 = m2**2
        delta = mu1 - mu2
        Lt = self.A0 + np.einsum("il,lde->ide", U, self.Ac)
        LtV = np.einsum("ide,ie->id", Lt, V)
        LtTLam = np.einsum("ied,ie->id", Lt, Lam)
        S = Lt + np.transpose(Lt, (0, 2, 1))
        SV = np.einsum("ide,ie->id", S, V)
        AlV = np.einsum("lde,ie->ild", self.Ac, V)
        G = Lam - 2.0 * delta[:, None] * V
        phi = self.sat.value(Nu)
        phid1 = self.sat.d1(Nu)
        phid2 = self.sat.d2(Nu)
        P = np.einsum("id,id->i", V, V)
        h1 = P - self.P0
        h2 = self.floor - P
        return SimpleNamespace(
            c=c, V=V, W=W, Lam=Lam, Y=Y, U=U, Nu=Nu, Beta=Beta,
            m1=m1, m2=m2, mu1=mu1, mu2=mu2, delta=delta,
            Lt=Lt, LtV=LtV, LtTLam=LtTLam, S=S, SV=SV, AlV=AlV, G=G,
            phi=phi, phid1=phid1, phid2=phid2, P=P, h1=h1, h2=h2,
        )

    def residual(self, params: PinnParams, w_reg: float,
                 fl: SimpleNamespace = None) -> np.ndarray:
        if fl is None:
            fl = self.fields(params)
        r_dyn = fl.c * fl.W - fl.LtV
        r_cos = fl.c * fl.Y + fl.LtTLam - 2.0 * fl.delta[:, None] * fl.SV
        r_u = np.einsum("id,ild->il", fl.G, fl.AlV) \
            + 2.0 * self.eta * fl.U + fl.Beta
        r_nu = 2.0 * w_reg * fl.Nu - fl.Beta * fl.phid1
        r_gap = fl.U - fl.phi
        hamil_f = float(
            fl.G[-1] @ fl.LtV[-1]
            + self.eta * np.dot(fl.U[-1], fl.U[-1])
            + w_reg * np.dot(fl.Nu[-1], fl.Nu[-1])
            + np.dot(fl.Beta[-1], r_gap[-1])
        )
        parts = [r_dyn.ravel(), r_cos.ravel(), r_u.ravel(), r_nu.ravel(),
                 r_gap.ravel(), np.array([hamil_f + self.gamma_t])]
        if self.constrained:
            sp1 = _softplus(self.k * fl.h1) / self.k
            sp2 = _softplus(self.k * fl.h2) / self.k
            parts += [fl.mu1 * fl.h1, fl.mu2 * fl.h2, sp1**2, sp2**2]
        return np.concatenate(parts)

    def jacobian(self, params: PinnParams, w_reg: float,
                 fl: SimpleNamespace = None) -> np.ndarray:
        if fl is None:
            fl = self.fields(params)
        N, D, L, m = self.N, self.D, self.L, self.m
        eye_d = np.eye(D)
        eye_m = np.eye(m)
        n_par = params.size
        jac = np.zeros((self.n_loss, n_par))

        o_rho = 0
        o_lam = L * D
        o_u = 2 * L * D
        o_nu = o_u + L * m
        o_beta = o_nu + L * m
        o_mu1 = o_beta + L * m
        o_mu2 = o_mu1 + L
        o_c = n_par - 1
        sl = self.slices

        # dynamics rows: c dV/dtau - Ltilde(u) V
        rows = sl["dynamics"]
        jac[rows, o_rho:o_lam] = (
            fl.c * np.einsum("ip,dq->idpq", self.Phid, eye_d)
            - np.einsum("ip,idq->idpq", self.Phi, fl.Lt)
        ).reshape(N * D, L * D)
        jac[rows, o_u:o_nu] = -np.einsum("ild,ip->idpl", fl.AlV,
                                         self.H).reshape(N * D, L * m)
        jac[rows, o_c] = (fl.c * fl.W).ravel()

        # costate rows: c dLam/dtau + Ltilde^T Lam - 2 delta (Lt + Lt^T) V
        rows = sl["costate"]
        jac[rows, o_lam:o_u] = (
            fl.c * np.einsum("ip,dq->idpq", self.Psid, eye_d)
            + np.einsum("ip,iqd->idpq", self.Psi, fl.Lt)
        ).reshape(N * D, L * D)
        jac[rows, o_rho:o_lam] = (
            -2.0 * np.einsum("i,ip,idq->idpq", fl.delta, self.Phi, fl.S)
        ).reshape(N * D, L * D)
        cross = np.einsum("led,ie->ild", self.Ac, fl.Lam) \
            - 2.0 * np.einsum("i,lde,ie->ild", fl.delta, self.Asym, fl.V)
        jac[rows, o_u:o_nu] = np.einsum("ild,ip->idpl", cross,
                                        self.H).reshape(N * D, L * m)
        if self.constrained:
            jac[rows, o_mu1:o_mu2] = (
                -4.0 * np.einsum("i,id,ip->idp", fl.m1, fl.SV, self.H)
            ).reshape(N * D, L)
            jac[rows, o_mu2:o_mu2 + L] = (
                4.0 * np.einsum("i,id,ip->idp", fl.m2, fl.SV, self.H)
            ).reshape(N * D, L)
        jac[rows, o_c] = (fl.c * fl.Y).ravel()

        # control stationarity rows; ``cross`` is also d^2H/(du dv)
        rows = sl["stationarity_u"]
        jac[rows, o_rho:o_lam] = np.einsum("ip,ilq->ilpq", self.Phi,
                                           cross).reshape(N * m, L * D)
        jac[rows, o_lam:o_u] = np.einsum("ip,ilq->ilpq", self.Psi,
                                         fl.AlV).reshape(N * m, L * D)
        jac[rows, o_u:o_nu] = 2.0 * self.eta * np.einsum(
            "ip,lk->ilpk", self.H, eye_m).reshape(N * m, L * m)
        jac[rows, o_beta:o_beta + L * m] = np.einsum(
            "ip,lk->ilpk", self.H, eye_m).reshape(N * m, L * m)
        if self.constrained:
            quad = np.einsum("id,ild->il", fl.V, fl.AlV)
            jac[rows, o_mu1:o_mu2] = (
                -4.0 * np.einsum("i,il,ip->ilp", fl.m1, quad, self.H)
            ).reshape(N * m, L)
            jac[rows, o_mu2:o_mu2 + L] = (
                4.0 * np.einsum("i,il,ip->ilp", fl.m2, quad, self.H)
            ).reshape(N * m, L)

        # saturation-input stationarity rows
        rows = sl["stationarity_nu"]
        jac[rows, o_nu:o_beta] = np.einsum(
            "il,ip,lk->ilpk", 2.0 * w_reg - fl.Beta * fl.phid2, self.H,
            eye_m).reshape(N * m, L * m)
        jac[rows, o_beta:o_beta + L * m] = -np.einsum(
            "il,ip,lk->ilpk", fl.phid1, self.H, eye_m).reshape(N * m, L * m)

        # saturation link rows
        rows = sl["saturation_gap"]
        jac[rows, o_u:o_nu] = np.einsum("ip,lk->ilpk", self.H,
                                        eye_m).reshape(N * m, L * m)
        jac[rows, o_nu:o_beta] = -np.einsum(
            "il,ip,lk->ilpk", fl.phid1, self.H, eye_m).reshape(N * m, L * m)

        # free-final-time row; boundary features vanish, partials w.r.t. the
        # state/costate nets are kept in general form anyway
        row = sl["transversality"].start
        grad_v = fl.LtTLam[-1] - 2.0 * fl.delta[-1] * fl.SV[-1]
        jac[row, o_rho:o_lam] = np.outer(self.Phi[-1], grad_v).ravel()
        jac[row, o_lam:o_u] = np.outer(self.Psi[-1], fl.LtV[-1]).ravel()
        ru_f = fl.AlV[-1] @ fl.G[-1] + 2.0 * self.eta * fl.U[-1] + fl.Beta[-1]
        rnu_f = 2.0 * w_reg * fl.Nu[-1] - fl.Beta[-1] * fl.phid1[-1]
        rgap_f = fl.U[-1] - fl.phi[-1]
        jac[row, o_u:o_nu] = np.outer(self.H[-1], ru_f).ravel()
        jac[row, o_nu:o_beta] = np.outer(self.H[-1], rnu_f).ravel()
        jac[row, o_beta:o_beta + L * m] = np.outer(self.H[-1], rgap_f).ravel()
        if self.constrained:
            quad_f = float(fl.V[-1] @ fl.LtV[-1])
            jac[row, o_mu1:o_mu2] = -4.0 * fl.m1[-1] * quad_f * self.H[-1]
            jac[row, o_mu2:o_mu2 + L] = 4.0 * fl.m2[-1] * quad_f * self.H[-1]

        if self.constrained:
            sig1 = expit(self.k * fl.h1)
            sig2 = expit(self.k * fl.h2)
            sp1 = _softplus(self.k * fl.h1) / self.k
            sp2 = _softplus(self.k * fl.h2) / self.k
            rows = sl["complementarity_upper"]
            jac[rows, o_rho:o_lam] = 2.0 * np.einsum(
                "i,ip,iq->ipq", fl.mu1, self.Phi, fl.V).reshape(N, L * D)
            jac[rows, o_mu1:o_mu2] = (2.0 * fl.m1 * fl.h1)[:, None] * self.H
            rows = sl["complementarity_lower"]
            jac[rows, o_rho:o_lam] = -2.0 * np.einsum(
                "i,ip,iq->ipq", fl.mu2, self.Phi, fl.V).reshape(N, L * D)
            jac[rows, o_mu2:o_mu2 + L] = (2.0 * fl.m2 * fl.h2)[:, None] * self.H
            rows = sl["feasibility_upper"]
            jac[rows, o_rho:o_lam] = 4.0 * np.einsum(
                "i,ip,iq->ipq", sp1 * sig1, self.Phi, fl.V).reshape(N, L * D)
            rows = sl["feasibility_lower"]
            jac[rows, o_rho:o_lam] = -4.0 * np.einsum(
                "i,ip,iq->ipq", sp2 * sig2, self.Phi, fl.V).reshape(N, L * D)

        return jac


def assemble_loss(problem, params: PinnParams, basis: ElmBasis, tau,
                  w_reg: float = None,
                  sharpness: float = FEASIBILITY_SHARPNESS) -> np.ndarray:
    """Flat residual of all first-order conditions on the given grid."""
    if w_reg is None:
        w_reg = problem.w_reg
    ws = _Workspace(problem, basis, tau, sharpness)
    return ws.residual(params, w_reg)


def residual_blocks(problem, params: PinnParams, basis: ElmBasis, tau,
                    w_reg: float = None,
                    sharpness: float = FEASIBILITY_SHARPNESS) -> dict:
    """Residual split into named blocks, in assembly order."""
    if w_reg is None:
        w_reg = problem.w_reg
    ws = _Workspace(problem, basis, tau, sharpness)
    r = ws.residual(params, w_reg)
    return {name: r[s] for name, s in ws.slices.items()}


def jacobian(problem, params: PinnParams, basis: ElmBasis, tau,
             w_reg: float = None, method: str = "fd", step: float = 1e-7,
             sharpness: float = FEASIBILITY_SHARPNESS) -> np.ndarray:
    """Residual Jacobian w.r.t. the packed parameter vector.

    ``method="fd"`` central differences (independent of the closed-form
    assembly, kept as its cross-check); ``method="analytic"`` closed form.
    """
    if w_reg is None:
        w_reg = problem.w_reg
    ws = _Workspace(problem, basis, tau, sharpness)
    if method == "analytic":
        return ws.jacobian(params, w_reg)
    if method != "fd":
        raise ValueError(f"unknown jacobian method {method!r}")
    theta = params.pack()
    cols = []
    for j in range(theta.size):
        bump = np.zeros_like(theta)
        bump[j] = step
        r_plus = ws.residual(params.unpack(theta + bump), w_reg)
        r_minus = ws.residual(params.unpack(theta - bump), w_reg)
        cols.append((r_plus - r_minus) / (2.0 * step))
    return np.stack(cols, axis=1)


def ls_step(jac: np.ndarray, residual: np.ndarray, damping: float,
            method: str = "normal") -> np.ndarray:
    """Damped least-squares direction solving (J^T J + d I) step = -J^T r.

    "normal" factors the damped normal matrix (Cholesky); "augmented" solves
    the equivalent stacked system [J; sqrt(d) I] step = [-r; 0] by
    orthogonal methods, slower but immune to the squared conditioning.
    A failed factorization falls back to the augmented path.
    """
    if damping < 0:
        raise ValueError("damping must be nonnegative")
    n = jac.shape[1]
    if method == "normal":
        jtj = jac.T @ jac
        jtj[np.diag_indices(n)] += damping
        try:
            factor = cho_factor(jtj, lower=True, check_finite=False)
            step = cho_solve(factor, -(jac.T @ residual), check_finite=False)
            if np.all(np.isfinite(step)):
                return step
        except LinAlgError:
            pass
    elif method != "augmented":
        raise ValueError(f"unknown least-squares method {method!r}")
    aug = np.vstack([jac, np.sqrt(damping) * np.eye(n)])
    rhs = np.concatenate([-residual, np.zeros(n)])
    step, *_ = lstsq(aug, rhs, lapack_driver="gelsy", check_finite=False)
    return step


@dataclass
class StageRecord:
    """One continuation stage: its weight, convergence trace, and costs."""

    w_reg: float
    iterations: int
    loss_history: list        # squared residual norm per accepted iterate
    final_loss_l2: float
    true_cost: float          # Gamma t_f + eta int u^2
    augmented_cost: float     # true cost + w_reg int nu^2
    final_time: float
    wall_time: float          # informational; never written to artifacts


@dataclass
class SolveReport:
    """Solution container: problem, trained parameters, and stage records."""

    problem: object
    config: SolverConfig
    basis: ElmBasis
    params: PinnParams
    tau: np.ndarray
    stages: list
    converged: bool

    @property
    def loss_l2(self) -> float:
        return self.stages[-1].final_loss_l2

    @property
    def final_w_reg(self) -> float:
        return self.stages[-1].w_reg

    @property
    def c(self) -> float:
        return self.params.c

    @property
    def final_time(self) -> float:
        return final_time(self.c)

    @property
    def total_iterations(self) -> int:
        return sum(s.iterations for s in self.stages)

    def evaluate(self, tau=None) -> dict:
        """Dense arrays of every solved quantity on ``tau`` (default: grid)."""
        tau = self.tau if tau is None else np.asarray(tau, dtype=float)
        ws = _Workspace(self.problem, self.basis, tau,
                        self.config.feasibility_sharpness)
        fl = ws.fields(self.params)
        w_reg = self.final_w_reg
        hamil = (
            np.einsum("id,id->i", fl.G, fl.LtV)
            + self.problem.energy_weight * np.sum(fl.U**2, axis=1)
            + w_reg * np.sum(fl.Nu**2, axis=1)
            + np.sum(fl.Beta * (fl.U - fl.phi), axis=1)
        )
        n = self.problem.lindblad.dim
        pops = fl.V[:, [i * n + i for i in range(n)]]
        return {
            "tau": tau,
            "t": tau / fl.c,
            "state": fl.V,
            "costate": fl.Lam,
            "u": fl.U,
            "nu": fl.Nu,
            "beta": fl.Beta,
            "mu1": fl.mu1,
            "mu2": fl.mu2,
            "purity": fl.P,
            "h_upper": fl.h1,
            "h_lower": fl.h2,
            "hamiltonian": hamil,
            "populations": pops,
        }

    def control_signal(self):
        """The trained control as a callable signal in physical time."""
        from .propagator import ControlSignal

        basis, xi_u, c = self.basis, self.params.xi_u, self.c
        return ControlSignal.sampled(
            lambda t: basis.features(c * t) @ xi_u,
            n_channels=xi_u.shape[1],
        )

    def residual_norms(self) -> dict:
        """Per-block L2 norms of the final residual on the training grid."""
        blocks = residual_blocks(self.problem, self.params, self.basis,
                                 self.tau, self.final_w_reg,
                                 self.config.feasibility_sharpness)
        return {name: float(np.linalg.norm(v)) for name, v in blocks.items()}


def _stage_costs(ws: _Workspace, fl: SimpleNamespace, w_reg: float):
    times = ws.tau / fl.c
    energy = np.trapezoid(np.sum(fl.U**2, axis=1), times)
    reg = np.trapezoid(np.sum(fl.Nu**2, axis=1), times)
    tf = times[-1]
    true_cost = ws.gamma_t * tf + ws.eta * energy
    return true_cost, true_cost + w_reg * reg, tf


def _run_stage(ws: _Workspace, params: PinnParams, w_reg: float,
               config: SolverConfig):
    theta = params.pack()
    res = ws.residual(params, w_reg)
    loss = float(res @ res)
    history = [loss]
    damping = config.damping_init
    stalled = 0
    iterations = 0
    while iterations < config.max_iterations:
        if np.sqrt(loss) <= config.loss_target:
            break
        jac = ws.jacobian(params, w_reg)
        accepted = False
        while True:
            step = ls_step(jac, res, damping, config.ls_method)
            # an unchecked jump in the time dilation can park the solve on
            # the no-control branch (slow decay, dead transversality row)
            cap = config.theta_c_max_step
            step[-1] = np.clip(step[-1], -cap, cap)
            cand = params.unpack(theta + step)
            res_new = ws.residual(cand, w_reg)
            loss_new = float(res_new @ res_new)
            if np.isfinite(loss_new) and loss_new < loss:
                accepted = True
                break
            damping *= 10.0
            if damping > config.damping_max:
                break
        if not accepted:
            break
        rel_drop = (loss - loss_new) / loss if loss > 0 else 1.0
        params, theta, res, loss = cand, theta + step, res_new, loss_new
        history.append(loss)
        damping = max(damping / 10.0, config.damping_floor)
        iterations += 1
        if rel_drop < config.stall_rel_decrease:
            stalled += 1
            if stalled >= config.stall_patience:
                break
        else:
            stalled = 0
    return params, history, iterations


def solve(problem, config: SolverConfig = None) -> SolveReport:
    """Train the collocation residual to zero over the continuation schedule."""
    config = config if config is not None else SolverConfig()
    basis = ElmBasis(config.neurons, config.seed, config.basis_scale)
    tau = collocation_grid(config.collocation_points, config.grid)
    ws = _Workspace(problem, basis, tau, config.feasibility_sharpness)
    params = PinnParams.zeros(
        ws.L, ws.D, ws.m,
        initial_c=config.initial_c,
        include_mu=problem.purity_constrained,
        mu_init=config.mu_init if problem.purity_constrained else 0.0,
    )
    stages = []
    for w_reg in problem.reg_schedule:
        tic = time.perf_counter()
        params, history, iterations = _run_stage(ws, params, w_reg, config)
        wall = time.perf_counter() - tic
        fl = ws.fields(params)
        res = ws.residual(params, w_reg, fl)
        l2 = float(np.linalg.norm(res))
        true_cost, aug_cost, tf = _stage_costs(ws, fl, w_reg)
        stages.append(StageRecord(
            w_reg=w_reg, iterations=iterations, loss_history=history,
            final_loss_l2=l2, true_cost=true_cost, augmented_cost=aug_cost,
            final_time=tf, wall_time=wall,
        ))
        if config.verbose:
            print(
                f"[stage w_reg={w_reg:g}] iters={iterations} "
                f"loss_l2={l2:.3e} t_f={tf:.6f} cost={aug_cost:.6f} "
                f"({wall:.1f}s)",
                file=sys.stderr,
            )
    converged = stages[-1].final_loss_l2 <= config.loss_target
    return SolveReport(problem=problem, config=config, basis=basis,
                       params=params, tau=tau, stages=stages,
                       converged=converged)


@dataclass(frozen=True)
class AuditReport:
    """Optimality and feasibility checks for one solution."""

    loss_l2: float
    final_time: float
    true_cost: float
    augmented_cost: float
    transversality_abs: float
    lc_ok: bool
    lc_margin: float
    band_violation: float
    complementarity_max: float
    resim_max_error: float
    final_state_fidelity: float

    def to_dict(self) -> dict:
        return {
            "loss_l2": self.loss_l2,
            "final_time": self.final_time,
            "true_cost": self.true_cost,
            "augmented_cost": self.augmented_cost,
            "transversality_abs": self.transversality_abs,
            "lc_ok": self.lc_ok,
            "lc_margin": self.lc_margin,
            "band_violation": self.band_violation,
            "complementarity_max": self.complementarity_max,
            "resim_max_error": self.resim_max_error,
            "final_state_fidelity": self.final_state_fidelity,
        }


def _resimulate(ws: _Workspace, params: PinnParams, substeps: int) -> np.ndarray:
    """Integrate the true dynamics under the trained control, RK4 between
    collocation times, evaluating the control network exactly."""
    c = params.c
    times = ws.tau / c
    xi_u = params.xi_u

    def rhs(t, v):
        u = ws.basis.features(c * t) @ xi_u
        return (ws.A0 + np.einsum("l,lde->de", u, ws.Ac)) @ v

    out = np.empty((ws.N, ws.D))
    v = ws.rho0_embedded.copy()
    out[0] = v
    for i in range(ws.N - 1):
        h = (times[i + 1] - times[i]) / substeps
        t = times[i]
        for _ in range(substeps):
            k1 = rhs(t, v)
            k2 = rhs(t + 0.5 * h, v + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, v + 0.5 * h * k2)
            k4 = rhs(t + h, v + h * k3)
            v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
        out[i + 1] = v
    return out


def audit_solution(problem, params: PinnParams, basis: ElmBasis, tau,
                   w_reg: float = None, substeps: int = 40,
                   sharpness: float = FEASIBILITY_SHARPNESS) -> AuditReport:
    """Check a trained parameter set against the conditions it should satisfy.

    Everything is recomputed from (problem, params); no training history is
    needed.  Resimulation integrates the dynamics independently under the
    trained control and reports the worst embedded-state discrepancy on the
    grid plus the fidelity of the resimulated final state to the target.
    """
    if w_reg is None:
        w_reg = problem.reg_schedule[-1]
    ws = _Workspace(problem, basis, tau, sharpness)
    fl = ws.fields(params)
    res = ws.residual(params, w_reg, fl)
    transv = float(np.abs(res[ws.slices["transversality"]][0]))

    second = 2.0 * w_reg - fl.Beta * fl.phid2
    lc_margin = float(min(2.0 * ws.eta, np.min(second)))

    if ws.constrained:
        band = float(max(0.0, np.max(fl.h1), np.max(fl.h2)))
        comp = float(max(np.max(np.abs(fl.mu1 * fl.h1)),
                         np.max(np.abs(fl.mu2 * fl.h2))))
    else:
        band = 0.0
        comp = 0.0

    sim = _resimulate(ws, params, substeps)
    resim_err = float(np.max(np.abs(sim - fl.V)))
    rho_final = unembed_density(sim[-1])
    fid = fidelity(rho_final, problem.rhof.matrix)

    true_cost, aug_cost, tf = _stage_costs(ws, fl, w_reg)
    return AuditReport(
        loss_l2=float(np.linalg.norm(res)),
        final_time=tf,
        true_cost=true_cost,
        augmented_cost=aug_cost,
        transversality_abs=transv,
        lc_ok=lc_margin > 0.0,
        lc_margin=lc_margin,
        band_violation=band,
        complementarity_max=comp,
        resim_max_error=resim_err,
        final_state_fidelity=fid,
    )


def audit(report: SolveReport, substeps: int = None) -> AuditReport:
    """Audit a solve result; see ``audit_solution``."""
    if substeps is None:
        substeps = report.config.resimulation_substeps
    return audit_solution(
        report.problem, report.params, report.basis, report.tau,
        w_reg=report.final_w_reg, substeps=substeps,
        sharpness=report.config.feasibility_sharpness,
    )
