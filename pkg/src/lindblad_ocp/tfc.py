"""Constrained functional expressions over a random-feature basis.

The boundary-value problem is parametrized on the fixed unit interval
tau in [0, 1]; physical time is recovered through the trainable morph rate c
(t = t0 + tau / c, so t_f moves with c).  State and costate are written as
constrained expressions that satisfy their boundary conditions exactly for
*any* value of the trainable weights; the free function behind each quantity
is a single-hidden-layer tanh network whose input weights and biases are
drawn once from a seeded generator and never trained.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TAU0 = 0.0
TAUF = 1.0


def morph(t, c: float, t0: float = 0.0):
    """Physical time -> collocation coordinate, tau = tau0 + c (t - t0)."""
    if c <= 0:
        raise ValueError("morph rate must be positive")
    return TAU0 + c * (np.asarray(t, dtype=float) - t0)


def unmorph(tau, c: float, t0: float = 0.0):
    if c <= 0:
        raise ValueError("morph rate must be positive")
    return t0 + (np.asarray(tau, dtype=float) - TAU0) / c


def final_time(c: float, t0: float = 0.0) -> float:
    return t0 + (TAUF - TAU0) / c


def switching(tau):
    """Cubic Hermite pair (O1, O2, O1', O2') with O1+O2 = 1.

    O1 is 1 at tau0 with zero slope and 0 at tauf with zero slope; O2 is its
    complement.
    """
    s = (np.asarray(tau, dtype=float) - TAU0) / (TAUF - TAU0)
    o1 = 1.0 + 2.0 * s**3 - 3.0 * s**2
    o2 = 3.0 * s**2 - 2.0 * s**3
    d = 1.0 / (TAUF - TAU0)
    o1d = (6.0 * s**2 - 6.0 * s) * d
    o2d = (6.0 * s - 6.0 * s**2) * d
    return o1, o2, o1d, o2d


@dataclass(frozen=True)
class ElmBasis:
    """Fixed random tanh features h_l(tau) = tanh(w_l tau + b_l).

    Input weights are uniform on [-weight_scale, weight_scale], biases
    uniform on [-1, 1], drawn once from ``seed``.
    """

    neurons: int = 60
    seed: int = 7
    weight_scale: float = 4.0
    input_weights: np.ndarray = field(init=False, repr=False)
    biases: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.neurons < 1:
            raise ValueError("need at least one neuron")
        rng = np.random.default_rng(self.seed)
        w = rng.uniform(-self.weight_scale, self.weight_scale, self.neurons)
        b = rng.uniform(-1.0, 1.0, self.neurons)
        object.__setattr__(self, "input_weights", w)
        object.__setattr__(self, "biases", b)

    def features(self, tau) -> np.ndarray:
        """h(tau); shape (..., L)."""
        tau = np.asarray(tau, dtype=float)
        return np.tanh(np.multiply.outer(tau, self.input_weights) + self.biases)

    def features_d1(self, tau) -> np.ndarray:
        """dh/dtau = w * (1 - tanh^2)."""
        h = self.features(tau)
        return self.input_weights * (1.0 - h**2)


def collocation_grid(n_points: int, kind: str = "chebyshev") -> np.ndarray:
    """Collocation nodes on [tau0, tauf]; Chebyshev-Gauss-Lobatto default."""
    if n_points < 2:
        raise ValueError("need at least two collocation points")
    if kind == "chebyshev":
        j = np.arange(n_points)
        x = 0.5 * (1.0 - np.cos(np.pi * j / (n_points - 1)))
    elif kind == "uniform":
        x = np.linspace(0.0, 1.0, n_points)
    else:
        raise ValueError(f"unknown grid kind {kind!r}")
    return TAU0 + (TAUF - TAU0) * x


def state_feature_matrix(tau, basis: ElmBasis):
    """Boundary-vanishing features for the state and their tau derivative.

    phi(tau) = h(tau) - O1 h(tau0) - O2 h(tauf) vanishes at both ends, so the
    constrained state hits rho0 and rhof for any weights.
    """
    h = basis.features(tau)
    hd = basis.features_d1(tau)
    h0 = basis.features(TAU0)
    h1 = basis.features(TAUF)
    o1, o2, o1d, o2d = switching(tau)
    phi = h - np.multiply.outer(o1, h0) - np.multiply.outer(o2, h1)
    phid = hd - np.multiply.outer(o1d, h0) - np.multiply.outer(o2d, h1)
    return phi, phid


def costate_feature_matrix(tau, basis: ElmBasis, pin_terminal: bool = True):
    """Costate features and their tau derivative.

    With ``pin_terminal`` the features vanish at tauf so the costate is
    zero there (free-final-state transversality, and the band-constrained
    problem).  Without it the expansion is unrestricted at both ends, the
    correct setting when the final state is prescribed and the terminal
    costate is an unknown of the problem.
    """
    h = basis.features(tau)
    hd = basis.features_d1(tau)
    if not pin_terminal:
        return h, hd
    h1 = basis.features(TAUF)
    o1, o2, o1d, o2d = switching(tau)
    phi = h - np.multiply.outer(o2, h1)
    phid = hd - np.multiply.outer(o2d, h1)
    return phi, phid


def constrained_state(tau, xi_rho: np.ndarray, basis: ElmBasis,
                      rho0: np.ndarray, rhof: np.ndarray) -> np.ndarray:
    """Embedded state; equals rho0 at tau0 and rhof at tauf for any xi_rho."""
    phi, _ = state_feature_matrix(tau, basis)
    o1, o2, _, _ = switching(tau)
    return phi @ xi_rho + np.multiply.outer(o1, rho0) + np.multiply.outer(o2, rhof)


def constrained_state_dt(tau, xi_rho: np.ndarray, basis: ElmBasis,
                         rho0: np.ndarray, rhof: np.ndarray, c: float) -> np.ndarray:
    """Time derivative of the constrained state; carries the chain-rule c."""
    _, phid = state_feature_matrix(tau, basis)
    _, _, o1d, o2d = switching(tau)
    return c * (phid @ xi_rho + np.multiply.outer(o1d, rho0)
                + np.multiply.outer(o2d, rhof))


def constrained_costate(tau, xi_lam: np.ndarray, basis: ElmBasis) -> np.ndarray:
    """Costate; vanishes at tauf for any xi_lam, free at tau0."""
    phi, _ = costate_feature_matrix(tau, basis)
    return phi @ xi_lam


def constrained_costate_dt(tau, xi_lam: np.ndarray, basis: ElmBasis,
                           c: float) -> np.ndarray:
    _, phid = costate_feature_matrix(tau, basis)
    return c * (phid @ xi_lam)


def expand_scalar(tau, xi: np.ndarray, basis: ElmBasis):
    """Plain feature expansion h(tau)^T xi, no boundary conditions."""
    return basis.features(tau) @ xi


@dataclass
class PinnParams:
    """Trainable weights for all expanded quantities plus the morph rate.

    State/costate weights have one column per embedded dimension; control
    weights one column per channel; the purity multipliers are squared
    downstream, so their expansions are unconstrained.  The morph rate is
    stored as theta_c with c = exp(theta_c) to keep c positive.
    """

    xi_rho: np.ndarray
    xi_lam: np.ndarray
    xi_u: np.ndarray
    xi_nu: np.ndarray
    xi_beta: np.ndarray
    xi_mu1: np.ndarray
    xi_mu2: np.ndarray
    theta_c: float
    include_mu: bool = True

    @property
    def c(self) -> float:
        return float(np.exp(self.theta_c))

    @classmethod
    def zeros(cls, neurons: int, embedded_dim: int, n_channels: int,
              initial_c: float = 1.0, include_mu: bool = True,
              mu_init: float = 0.0) -> "PinnParams":
        """Cold start: zero weights (state = pure Hermite blend).

        ``mu_init`` seeds each multiplier expansion with a uniform weight;
        the squared reparametrization has zero gradient at exactly zero, so
        constrained solves start the multipliers slightly away from it.
        """
        return cls(
            xi_rho=np.zeros((neurons, embedded_dim)),
            xi_lam=np.zeros((neurons, embedded_dim)),
            xi_u=np.zeros((neurons, n_channels)),
            xi_nu=np.zeros((neurons, n_channels)),
            xi_beta=np.zeros((neurons, n_channels)),
            xi_mu1=np.full(neurons, mu_init, dtype=float),
            xi_mu2=np.full(neurons, mu_init, dtype=float),
            theta_c=float(np.log(initial_c)),
            include_mu=include_mu,
        )

    def pack(self) -> np.ndarray:
        parts = [
            self.xi_rho.ravel(), self.xi_lam.ravel(), self.xi_u.ravel(),
            self.xi_nu.ravel(), self.xi_beta.ravel(),
        ]
        if self.include_mu:
            parts += [self.xi_mu1.ravel(), self.xi_mu2.ravel()]
        parts.append(np.array([self.theta_c]))
        return np.concatenate(parts)

    def unpack(self, vec: np.ndarray) -> "PinnParams":
        """New PinnParams with the same shapes, values taken from ``vec``."""
        vec = np.asarray(vec, dtype=float)
        out = {}
        k = 0
        for name in ("xi_rho", "xi_lam", "xi_u", "xi_nu", "xi_beta"):
            arr = getattr(self, name)
            out[name] = vec[k:k + arr.size].reshape(arr.shape)
            k += arr.size
        if self.include_mu:
            for name in ("xi_mu1", "xi_mu2"):
                arr = getattr(self, name)
                out[name] = vec[k:k + arr.size].reshape(arr.shape)
                k += arr.size
        else:
            out["xi_mu1"] = self.xi_mu1
            out["xi_mu2"] = self.xi_mu2
        theta_c = float(vec[k])
        k += 1
        if k != vec.size:
            raise ValueError(f"parameter vector has length {vec.size}, expected {k}")
        return PinnParams(theta_c=theta_c, include_mu=self.include_mu, **out)

    @property
    def size(self) -> int:
        return self.pack().size
