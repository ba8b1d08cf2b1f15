"""Reference time integrator for the embedded linear system.

Piecewise-constant controls are advanced segment by segment with the exact
matrix exponential (scipy's Pade scaling-and-squaring), which makes this
module a trustworthy oracle for anything the collocation solver produces.
Arbitrary sampled controls fall back to fixed-step classical Runge-Kutta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, null_space

from .superop import (
    DensityState,
    DimensionError,
    LindbladSpec,
    build_liouvillian,
    devectorize,
    embed_density,
    lindblad_rhs,
    unembed_density,
)

DEFAULT_STEPS_PER_UNIT_TIME = 2000


@dataclass(frozen=True)
class ControlSignal:
    """Control u(t): constant, piecewise-constant on a grid, or callable.

    ``kind`` is one of "constant", "piecewise", "sampled". For "piecewise"
    the value on [grid[k], grid[k+1]) is values[k] (one fewer value than grid
    points). For "sampled", ``function`` is evaluated pointwise.
    """

    kind: str
    values: np.ndarray = None
    grid: np.ndarray = None
    function: object = None
    n_channels: int = 1

    @classmethod
    def constant(cls, value) -> "ControlSignal":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        if not np.all(np.isfinite(v)):
            raise ValueError("control value must be finite")
        return cls(kind="constant", values=v, n_channels=v.size)

    @classmethod
    def piecewise(cls, grid, values) -> "ControlSignal":
        grid = np.asarray(grid, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[0] == 1 and values.shape[1] == grid.size - 1:
            values = values.T  # row of scalars -> column per segment
        if np.any(np.diff(grid) <= 0):
            raise ValueError("control grid must be strictly increasing")
        if values.shape[0] != grid.size - 1:
            raise ValueError("need one control value per grid segment")
        if not np.all(np.isfinite(values)):
            raise ValueError("control values must be finite")
        return cls(kind="piecewise", values=values, grid=grid,
                   n_channels=values.shape[1])

    @classmethod
    def sampled(cls, function, n_channels: int = 1) -> "ControlSignal":
        return cls(kind="sampled", function=function, n_channels=n_channels)

    def __call__(self, t: float) -> np.ndarray:
        if self.kind == "constant":
            return self.values
        if self.kind == "piecewise":
            k = np.searchsorted(self.grid, t, side="right") - 1
            k = min(max(k, 0), self.values.shape[0] - 1)
            return self.values[k]
        u = np.atleast_1d(np.asarray(self.function(t), dtype=float))
        if not np.all(np.isfinite(u)):
            raise ValueError(f"sampled control is not finite at t={t}")
        return u


@dataclass(frozen=True)
class Trajectory:
    """Times, embedded states (rows), and sampled controls (rows)."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.states.shape[1] // 2)))

    def density_matrices(self) -> np.ndarray:
        return np.stack([unembed_density(w) for w in self.states])

    def purities(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.states, self.states)

    def populations(self) -> np.ndarray:
        """Real diagonal entries rho_ii, shape (len(times), n)."""
        n = self.dim
        idx = [i * n + i for i in range(n)]
        return self.states[:, idx]


def propagate(spec: LindbladSpec, rho0, u: ControlSignal, t0: float, tf: float,
              steps: int = None) -> Trajectory:
    """Advance the embedded state from t0 to tf under control ``u``.

    Constant and piecewise-constant controls use the exact segment matrix
    exponential; sampled controls use fixed-step RK4 (default
    2000 steps per unit time).
    """
    if not tf > t0:
        raise ValueError(f"need tf > t0, got [{t0}, {tf}]")
    if steps is None:
        steps = max(int(np.ceil((tf - t0) * DEFAULT_STEPS_PER_UNIT_TIME)), 1)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if u.n_channels != spec.n_controls:
        raise DimensionError("control channel count does not match the spec")

    w0 = embed_density(rho0)
    times = np.linspace(t0, tf, steps + 1)

    if u.kind in ("constant", "piecewise"):
        states = _propagate_expm(spec, w0, u, times)
    else:
        states = _propagate_rk4(spec, w0, u, times)

    controls = np.stack([u(t) for t in times])
    return Trajectory(times=times, states=states, controls=controls)


def _propagate_expm(spec, w0, u, times):
    states = np.empty((times.size, w0.size))
    states[0] = w0
    cache = {}
    w = w0
    for k in range(times.size - 1):
        dt = times[k + 1] - times[k]
        uk = tuple(u(times[k]))
        key = (uk, round(dt, 15))
        if key not in cache:
            lr = build_liouvillian(spec, np.asarray(uk)).real_matrix
            cache[key] = expm(lr * dt)
        w = cache[key] @ w
        states[k + 1] = w
    return states


def _propagate_rk4(spec, w0, u, times):
    l0 = build_liouvillian(spec, np.zeros(spec.n_controls))
    drift = l0.real_drift
    channels = l0.real_controls

    def rhs(t, w):
        ut = u(t)
        out = drift @ w
        for ul, mat in zip(ut, channels):
            out = out + ul * (mat @ w)
        return out

    states = np.empty((times.size, w0.size))
    states[0] = w0
    w = w0
    for k in range(times.size - 1):
        t, dt = times[k], times[k + 1] - times[k]
        k1 = rhs(t, w)
        k2 = rhs(t + dt / 2, w + dt / 2 * k1)
        k3 = rhs(t + dt / 2, w + dt / 2 * k2)
        k4 = rhs(t + dt, w + dt * k3)
        w = w + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        states[k + 1] = w
    return states


class DegenerateKernelError(RuntimeError):
    """The generator kernel is not one-dimensional."""


def steady_state(spec: LindbladSpec, u) -> DensityState:
    """Trace-normalized kernel vector of the generator at constant control.

    Raises DegenerateKernelError when the kernel dimension differs from one
    (e.g. a purely Hamiltonian diagonal system, where every diagonal state
    is stationary).
    """
    liou = build_liouvillian(spec, u)
    kernel = null_space(liou.complex_matrix, rcond=1e-10)
    if kernel.shape[1] != 1:
        raise DegenerateKernelError(
            f"generator kernel has dimension {kernel.shape[1]}, expected 1"
        )
    m = devectorize(kernel[:, 0])
    m = m / np.trace(m)
    m = 0.5 * (m + m.conj().T)  # scrub roundoff asymmetry
    return DensityState(m)
