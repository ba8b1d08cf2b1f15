"""Lindblad dynamics, Fock-Liouville vectorization, and the real embedding.

The master equation

    drho/dt = -i [H(u), rho] + sum_k gamma_k (L_k rho L_k^+ - 1/2 {L_k^+ L_k, rho})

is turned into a linear ODE  d|rho>>/dt = L |rho>>  by column-stacking
(|i><j| -> |j> (x) |i|>, i.e. vec[j*n + i] = rho[i, j]), and then into a real
linear system of dimension 2 n^2 by stacking real over imaginary parts.
The column-stacking convention fixes every Kronecker ordering below; it is
property-tested against the dense right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-9


class DimensionError(ValueError):
    """Operator dimensions are inconsistent."""


def _require_square(m: np.ndarray, what: str) -> int:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{what} must be a square matrix, got shape {m.shape}")
    return m.shape[0]


@dataclass(frozen=True)
class DensityState:
    """Hermitian, positive semidefinite, trace-one matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        _require_square(m, "density matrix")
        if np.max(np.abs(m - m.conj().T)) > HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace {tr} differs from 1")
        w = np.linalg.eigvalsh(m)
        if w.min() < -PSD_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {w.min()}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def embedded(self) -> np.ndarray:
        return real_embed_state(vectorize(self.matrix))

    @classmethod
    def pure(cls, index: int, n: int) -> "DensityState":
        """Projector |index><index| in an n-level system."""
        m = np.zeros((n, n), dtype=complex)
        m[index, index] = 1.0
        return cls(m)


@dataclass(frozen=True)
class LindbladSpec:
    """Drift Hamiltonian (diagonal), control Hamiltonians, and dissipators.

    ``h_drift`` must be diagonal with real entries (the energies E_i);
    each control Hamiltonian must be Hermitian; every rate nonnegative.
    """

    h_drift: np.ndarray
    controls: tuple = ()
    dissipators: tuple = ()  # tuple of (operator, rate)

    def __post_init__(self):
        hd = np.asarray(self.h_drift, dtype=complex)
        n = _require_square(hd, "drift Hamiltonian")
        if np.max(np.abs(hd - np.diag(np.diag(hd)))) > HERMITICITY_TOL:
            raise ValueError("drift Hamiltonian must be diagonal")
        if np.max(np.abs(np.diag(hd).imag)) > HERMITICITY_TOL:
            raise ValueError("drift energies must be real")
        controls = tuple(np.asarray(h, dtype=complex) for h in self.controls)
        for h in controls:
            if _require_square(h, "control Hamiltonian") != n:
                raise DimensionError("control Hamiltonian dimension mismatch")
            if np.max(np.abs(h - h.conj().T)) > HERMITICITY_TOL:
                raise ValueError("control Hamiltonian is not Hermitian")
        dissipators = tuple(
            (np.asarray(op, dtype=complex), float(rate))
            for op, rate in self.dissipators
        )
        for op, rate in dissipators:
            if _require_square(op, "Lindblad operator") != n:
                raise DimensionError("Lindblad operator dimension mismatch")
            if rate < 0:
                raise ValueError(f"negative dissipation rate {rate}")
        object.__setattr__(self, "h_drift", hd)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "dissipators", dissipators)

    @property
    def dim(self) -> int:
        return self.h_drift.shape[0]

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    def hamiltonian(self, u) -> np.ndarray:
        """H(u) = H_d + sum_l u_l H_l."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.n_controls,):
            raise DimensionError(
                f"expected {self.n_controls} control values, got shape {u.shape}"
            )
        h = self.h_drift.copy()
        for ul, hl in zip(u, self.controls):
            h = h + ul * hl
        return h

    @classmethod
    def two_level(cls, energy: float = 1.0, gamma: float = 0.1) -> "LindbladSpec":
        """Driven two-level atom with spontaneous decay |1> -> |0>."""
        h_drift = np.diag([0.0, energy]).astype(complex)
        h_ctrl = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
        lower = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |0><1|
        return cls(h_drift, (h_ctrl,), ((lower, gamma),))


def vectorize(m: np.ndarray) -> np.ndarray:
    """Column-stack a matrix: vec[j*n + i] = m[i, j]."""
    m = np.asarray(m, dtype=complex)
    _require_square(m, "matrix")
    return m.flatten(order="F")


def devectorize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    n = int(round(np.sqrt(v.size)))
    if n * n != v.size:
        raise DimensionError(f"vector of length {v.size} is not a square matrix")
    return v.reshape((n, n), order="F")


def real_embed_state(v: np.ndarray) -> np.ndarray:
    """Stack real over imaginary parts of a complex vector."""
    v = np.asarray(v, dtype=complex)
    return np.concatenate([v.real, v.imag])


def unembed_state(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    half = w.size // 2
    if 2 * half != w.size:
        raise DimensionError("embedded vector must have even length")
    return w[:half] + 1j * w[half:]


def embed_density(rho) -> np.ndarray:
    """DensityState or raw matrix -> real vector of length 2 n^2."""
    m = rho.matrix if isinstance(rho, DensityState) else np.asarray(rho, dtype=complex)
    return real_embed_state(vectorize(m))


def unembed_density(w: np.ndarray) -> np.ndarray:
    """Real vector of length 2 n^2 -> complex n x n matrix."""
    return devectorize(unembed_state(w))


def real_embed(mat: np.ndarray) -> np.ndarray:
    """Complex matrix -> real block matrix [[Re, -Im], [Im, Re]]."""
    mat = np.asarray(mat, dtype=complex)
    return np.block([[mat.real, -mat.imag], [mat.imag, mat.real]])


def lindblad_rhs(rho, spec: LindbladSpec, u) -> np.ndarray:
    """Dense right-hand side of the master equation at state ``rho``."""
    m = rho.matrix if isinstance(rho, DensityState) else np.asarray(rho, dtype=complex)
    if _require_square(m, "state") != spec.dim:
        raise DimensionError("state dimension does not match the Lindblad spec")
    h = spec.hamiltonian(u)
    out = -1j * (h @ m - m @ h)
    for op, rate in spec.dissipators:
        anti = op.conj().T @ op
        out = out + rate * (op @ m @ op.conj().T - 0.5 * (anti @ m + m @ anti))
    return out


def _superoperator(h: np.ndarray, dissipators) -> np.ndarray:
    n = h.shape[0]
    eye = np.eye(n, dtype=complex)
    sup = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for op, rate in dissipators:
        anti = op.conj().T @ op
        sup = sup + rate * (
            np.kron(op.conj(), op)
            - 0.5 * np.kron(eye, anti)
            - 0.5 * np.kron(anti.T, eye)
        )
    return sup


@dataclass(frozen=True)
class Liouvillian:
    """Superoperator at a fixed control value, with its control decomposition.

    The generator is affine in the control:
    ``complex_matrix = drift_part + sum_l u_l control_parts[l]`` exactly,
    and likewise for the real embedding.
    """

    complex_matrix: np.ndarray
    drift_part: np.ndarray
    control_parts: tuple
    control_value: np.ndarray
    real_matrix: np.ndarray = field(init=False)
    real_drift: np.ndarray = field(init=False)
    real_controls: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "real_matrix", real_embed(self.complex_matrix))
        object.__setattr__(self, "real_drift", real_embed(self.drift_part))
        object.__setattr__(
            self, "real_controls", tuple(real_embed(c) for c in self.control_parts)
        )


def build_liouvillian(spec: LindbladSpec, u) -> Liouvillian:
    """Assemble the vectorized generator at control value ``u``.

    The drift part carries the diagonal Hamiltonian and all dissipators; each
    control part is the commutator superoperator of one control Hamiltonian,
    so the result is affine in u.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (spec.n_controls,):
        raise DimensionError(
            f"expected {spec.n_controls} control values, got shape {u.shape}"
        )
    drift = _superoperator(spec.h_drift, spec.dissipators)
    parts = tuple(_superoperator(h, ()) for h in spec.controls)
    full = drift.copy()
    for ul, part in zip(u, parts):
        full = full + ul * part
    return Liouvillian(full, drift, parts, u)


def trace_functional(dim: int) -> np.ndarray:
    """Row vector f with f @ embedded(rho) = Re(tr rho)."""
    eye_vec = real_embed_state(vectorize(np.eye(dim, dtype=complex)))
    return eye_vec
