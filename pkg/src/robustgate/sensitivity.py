"""Differential sensitivity of the gate-fidelity error and its bounds.

For a trajectory with total propagator Phi and fidelity phase phi, the
derivative of the error with respect to an uncertainty of strength delta in
direction D (per-step Hermitian increments D(k)) is

    zeta = Re{ -(exp(-i*phi)/N) * sum_k Tr[ W(k) X(k) ] },

where W(k) = Phi(k-1,0) target^dag Phi(kappa,k) collects the cached
prefix/suffix products and X(k) is the coupling integral of step k's
generator with D(k).  Expanding D over a structure basis gives the
kappa x (M+1) matrix Z with row sums Gamma, from which three bounds follow:

    B1 = delta_t * ||H^||_2 * sum_k |alpha^(k)|   (per fixed structure),
    B2 = ||Gamma||_2, attained by the static unit vector Gamma^T / B2,
    B3 = sum_k ||Z(k)||_2, attained by the per-step unit vectors
         Z(k)^T / ||Z(k)||_2.

All evaluations are pure; a (controller x structure x strength) grid can be
mapped in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import coupling_from_eigh, spectral_norm
from .system import (
    ControlSystem,
    FidelityValue,
    PropagationResult,
    PulseSequence,
    UndefinedPhaseError,
    gate_fidelity,
    propagate,
    step_hamiltonian,
)
from .uncertainty import StructureBasis

__all__ = [
    "SensitivityReport",
    "step_derivative",
    "zeta",
    "zeta_at",
    "build_Z",
    "bound_B1",
    "bound_B2_and_worst",
    "bound_B3_and_worst",
    "sensitivity_report",
]


@dataclass(frozen=True, eq=False)
class SensitivityReport:
    """Differential sensitivities, decomposition, bounds, worst directions.

    ``z`` is the kappa x (M+1) decomposition matrix, ``gamma`` its column
    sums.  ``worst_static`` is None when gamma vanishes (flat sensitivity);
    rows of ``worst_sequence`` at indices in ``degenerate_rows`` carry the
    arbitrary fallback unit vector e_0 and contribute nothing to ``b3``.
    """

    labels: tuple
    zeta_per_structure: dict
    z: np.ndarray
    gamma: np.ndarray
    b1_per_structure: dict
    b2: float
    b3: float
    worst_static: np.ndarray | None
    worst_sequence: np.ndarray
    row_norms: np.ndarray
    degenerate_rows: tuple
    nominal: FidelityValue


def _require_phase(fv: FidelityValue) -> float:
    if not fv.phase_defined:
        raise UndefinedPhaseError(
            "fidelity trace is zero: the sensitivity phase is undefined"
        )
    return fv.phase


def _weights(prop: PropagationResult, target: np.ndarray) -> np.ndarray:
    """W(k) = Phi(k-1,0) target^dag Phi(kappa,k) for k = 1..kappa."""
    return prop.prefix[:-1] @ target.conj().T @ prop.suffix[1:]


def _sensitivity_table(prop: PropagationResult, target: np.ndarray,
                       fv: FidelityValue, directions: np.ndarray) -> np.ndarray:
    """Per-step sensitivity contributions for stacked directions.

    ``directions`` has shape (kappa, N, N) or (kappa, J, N, N); the result
    has shape (kappa,) or (kappa, J).
    """
    phase = _require_phase(fv)
    n = prop.dim
    w = _weights(prop, target)
    x = coupling_from_eigh(prop.eigvals, prop.eigvecs, directions, prop.dt)
    if directions.ndim == 4:
        tr = np.einsum("kij,kmji->km", w, x)
    else:
        tr = np.einsum("kij,kji->k", w, x)
    return np.real(-np.exp(-1j * phase) / n * tr)


def step_derivative(system: ControlSystem, pulse: PulseSequence, k: int,
                    structure) -> np.ndarray:
    """Derivative of step k's propagator with respect to the strength.

    Equals the coupling integral of H(k) with the structure's per-step
    increment D(k); zero whenever the step scaling vanishes.  ``k`` is
    1-based.
    """
    h = step_hamiltonian(system, pulse, k)
    d = structure.step_matrices(pulse, system.kappa)[k - 1]
    w, v = np.linalg.eigh(h)
    return coupling_from_eigh(w, v, d, system.delta)


def _zeta_from_prop(prop, target, fv, pulse, structure) -> float:
    d = structure.step_matrices(pulse, prop.kappa)
    contrib = _sensitivity_table(prop, target, fv, d)
    return float(np.sum(contrib))


def zeta(system: ControlSystem, pulse: PulseSequence, target: np.ndarray,
         structure) -> float:
    """Differential sensitivity of the error in the given direction at delta = 0.

    Raises
    ------
    UndefinedPhaseError
        If the nominal fidelity is zero.
    """
    prop = propagate(system, pulse)
    fv = gate_fidelity(target, prop)
    return _zeta_from_prop(prop, target, fv, pulse, structure)


def zeta_at(system: ControlSystem, pulse: PulseSequence, target: np.ndarray,
            structure, delta0: float) -> float:
    """Differential sensitivity evaluated on the perturbed trajectory at delta0.

    Same construction as `zeta` with every step generator shifted by
    delta0 * D(k) and the phase frozen from the perturbed trajectory.
    """
    prop = propagate(system, pulse, perturbation=(float(delta0), structure))
    fv = gate_fidelity(target, prop)
    return _zeta_from_prop(prop, target, fv, pulse, structure)


def _build_Z_from_prop(prop, target, fv, pulse, basis) -> tuple:
    d = basis.direction_stack(pulse, prop.kappa)
    z = _sensitivity_table(prop, target, fv, d)
    return z, z.sum(axis=0)


def build_Z(system: ControlSystem, pulse: PulseSequence, target: np.ndarray,
            basis: StructureBasis) -> tuple:
    """Decomposition matrix Z (kappa x (M+1)) and its column sums Gamma.

    Z[k-1, m] is step k's sensitivity contribution for basis slot m; the
    sensitivity of any static direction s is Gamma @ s, and of any per-step
    sequence {s^(k)} is sum_k Z[k-1] @ s^(k).
    """
    prop = propagate(system, pulse)
    fv = gate_fidelity(target, prop)
    return _build_Z_from_prop(prop, target, fv, pulse, basis)


def bound_B1(system: ControlSystem, pulse: PulseSequence, structure) -> float:
    """Strength-independent bound delta_t * ||H^||_2 * sum_k |alpha^(k)|."""
    a = structure.alphas(pulse, system.kappa)
    return system.delta * spectral_norm(structure.matrix) * float(np.abs(a).sum())


def bound_B2_and_worst(gamma: np.ndarray) -> tuple:
    """Static worst case: B2 = ||Gamma||_2 and the maximizing unit vector.

    Returns (B2, v_hat); v_hat is None when Gamma = 0 (flat sensitivity,
    every static direction gives zero to first order).
    """
    gamma = np.asarray(gamma, dtype=float)
    b2 = float(np.linalg.norm(gamma))
    if b2 == 0.0:
        return 0.0, None
    return b2, gamma / b2


def bound_B3_and_worst(z: np.ndarray) -> tuple:
    """Per-step worst case: B3 = sum of row norms and the maximizing sequence.

    Returns (B3, s_bars, row_norms, degenerate_rows).  Row k of ``s_bars``
    is Z(k)^T / ||Z(k)||_2; zero rows (listed 0-based in degenerate_rows)
    get the arbitrary unit vector e_0 and contribute nothing to B3.
    """
    z = np.asarray(z, dtype=float)
    row_norms = np.linalg.norm(z, axis=1)
    b3 = float(row_norms.sum())
    s_bars = np.zeros_like(z)
    degenerate = []
    for k in range(z.shape[0]):
        if row_norms[k] > 0.0:
            s_bars[k] = z[k] / row_norms[k]
        else:
            s_bars[k, 0] = 1.0
            degenerate.append(k)
    return b3, s_bars, row_norms, tuple(degenerate)


def sensitivity_report(system: ControlSystem, pulse: PulseSequence,
                       target: np.ndarray, basis: StructureBasis) -> SensitivityReport:
    """Full per-controller sensitivity analysis over a structure basis."""
    prop = propagate(system, pulse)
    fv = gate_fidelity(target, prop)
    z, gamma = _build_Z_from_prop(prop, target, fv, pulse, basis)
    b2, v_hat = bound_B2_and_worst(gamma)
    b3, s_bars, row_norms, degenerate = bound_B3_and_worst(z)
    zetas = {}
    b1s = {}
    for el in basis.elements:
        zetas[el.label] = _zeta_from_prop(prop, target, fv, pulse, el)
        b1s[el.label] = bound_B1(system, pulse, el)
    return SensitivityReport(
        labels=basis.labels,
        zeta_per_structure=zetas,
        z=z,
        gamma=gamma,
        b1_per_structure=b1s,
        b2=b2,
        b3=b3,
        worst_static=v_hat,
        worst_sequence=s_bars,
        row_norms=row_norms,
        degenerate_rows=degenerate,
        nominal=fv,
    )
