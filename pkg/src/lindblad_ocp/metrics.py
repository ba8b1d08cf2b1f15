"""Purity-normalized fidelity measures between density matrices.

Both measures normalize the overlap tr(rho sigma) by purities so that a
mixed state compared with itself scores 1.  Note the two formulas are not
interchangeable: for a pure target, ``fidelity`` squares the overlap while
``fidelity_to_pure`` does not, so
fidelity(rho, |psi><psi|) = fidelity_to_pure(rho, psi) * <psi|rho|psi>.
"""

from __future__ import annotations

import numpy as np

from .superop import DensityState


def _as_matrix(state) -> np.ndarray:
    if isinstance(state, DensityState):
        return state.matrix
    return np.asarray(state, dtype=complex)


def fidelity(rho, sigma) -> float:
    """tr(rho sigma)^2 / (tr(rho^2) tr(sigma^2)); symmetric in arguments."""
    r = _as_matrix(rho)
    s = _as_matrix(sigma)
    if r.shape != s.shape:
        raise ValueError(f"shape mismatch {r.shape} vs {s.shape}")
    overlap = np.trace(r @ s).real
    pr = np.trace(r @ r).real
    ps = np.trace(s @ s).real
    if pr <= 0 or ps <= 0:
        raise ValueError("fidelity needs states with positive purity")
    return float(overlap**2 / (pr * ps))


def fidelity_to_pure(rho, psi) -> float:
    """<psi|rho|psi> / tr(rho^2) for a normalized pure target |psi>."""
    r = _as_matrix(rho)
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if psi.size != r.shape[0]:
        raise ValueError(f"target has dim {psi.size}, state has dim {r.shape[0]}")
    norm = np.vdot(psi, psi).real
    if not np.isclose(norm, 1.0, atol=1e-10):
        raise ValueError("pure target must be normalized")
    overlap = np.vdot(psi, r @ psi).real
    pr = np.trace(r @ r).real
    if pr <= 0:
        raise ValueError("fidelity needs a state with positive purity")
    return float(overlap / pr)
