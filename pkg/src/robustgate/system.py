"""Controlled system model: step Hamiltonians, propagators, gate fidelity.

A control problem is a drift Hamiltonian H0 plus M interaction Hamiltonians
H_1..H_M driven by piecewise-constant fields on kappa uniform steps of
length delta.  In step k the generator is

    H(k) = H0 + sum_m H_m f[m, k],

the step propagator is exp(-i*H(k)*delta), and the total propagator is the
time-ordered product (later steps multiply on the left).  Propagation
returns cumulative prefix/suffix products and the per-step
eigendecompositions so that sensitivity evaluations cost O(kappa)
exponentials.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    NumericalError,
    StructureError,
    UNITARY_TOL,
    require_hermitian,
    require_unitary,
)

__all__ = [
    "ControlSystem",
    "PulseSequence",
    "PropagationResult",
    "FidelityValue",
    "UndefinedPhaseError",
    "ZERO_TRACE_TOL",
    "step_hamiltonian",
    "step_hamiltonians",
    "propagate",
    "propagate_hamiltonians",
    "gate_fidelity",
]

# |Tr[U_f^dag Phi]| below this times N flags the fidelity phase as undefined.
ZERO_TRACE_TOL = 1e-14


class UndefinedPhaseError(ValueError):
    """Raised when an operation needs the fidelity phase but the trace is zero."""


def _frozen_array(a, dtype=complex):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ControlSystem:
    """Drift + interaction Hamiltonians on a uniform time grid.

    Attributes
    ----------
    h0 : (N, N) ndarray
        Drift Hamiltonian (hbar = 1).
    interactions : tuple of (N, N) ndarray
        Interaction Hamiltonians H_1..H_M, one per control field.
    kappa : int
        Number of time steps (>= 1).
    delta : float
        Step length (> 0).  Gate time is t_f = kappa * delta.
    """

    h0: np.ndarray
    interactions: tuple
    kappa: int
    delta: float

    def __post_init__(self):
        h0 = _frozen_array(require_hermitian(self.h0, what="h0"))
        object.__setattr__(self, "h0", h0)
        ints = tuple(
            _frozen_array(require_hermitian(hm, what=f"interaction {m + 1}"))
            for m, hm in enumerate(self.interactions)
        )
        for m, hm in enumerate(ints):
            if hm.shape != h0.shape:
                raise StructureError(
                    f"interaction {m + 1} has shape {hm.shape}, expected {h0.shape}"
                )
        object.__setattr__(self, "interactions", ints)
        if int(self.kappa) < 1:
            raise ValueError("kappa must be >= 1")
        object.__setattr__(self, "kappa", int(self.kappa))
        if not (float(self.delta) > 0):
            raise ValueError("delta must be > 0")
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def dim(self) -> int:
        return self.h0.shape[0]

    @property
    def n_controls(self) -> int:
        return len(self.interactions)

    @property
    def t_f(self) -> float:
        return self.kappa * self.delta


@dataclass(frozen=True, eq=False)
class PulseSequence:
    """Control amplitude table f with shape (M, kappa); f[m-1, k-1] = f_m^(k)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        f = np.array(self.amplitudes, dtype=float)
        if f.ndim != 2:
            raise ValueError(f"amplitudes must be 2-dimensional, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("amplitudes contain non-finite entries")
        f.setflags(write=False)
        object.__setattr__(self, "amplitudes", f)

    @property
    def n_controls(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def kappa(self) -> int:
        return self.amplitudes.shape[1]

    def require_conforming(self, system: ControlSystem) -> None:
        if self.amplitudes.shape != (system.n_controls, system.kappa):
            raise ValueError(
                f"pulse shape {self.amplitudes.shape} does not match system "
                f"(M={system.n_controls}, kappa={system.kappa})"
            )


@dataclass(frozen=True, eq=False)
class PropagationResult:
    """Step propagators with cached cumulative products and eigendecompositions.

    ``prefix[k]`` is the propagator from t=0 to t_k (prefix[0] = I,
    prefix[kappa] = full gate); ``suffix[k]`` is the propagator from t_k to
    t_f (suffix[kappa] = I).  ``step_props[k-1]`` covers step k.  The per-step
    eigendecompositions of the generators are kept so downstream coupling
    integrals reuse them.
    """

    step_props: np.ndarray   # (kappa, N, N)
    prefix: np.ndarray       # (kappa+1, N, N)
    suffix: np.ndarray       # (kappa+1, N, N)
    hams: np.ndarray         # (kappa, N, N)
    eigvals: np.ndarray      # (kappa, N)
    eigvecs: np.ndarray      # (kappa, N, N)
    dt: float

    @property
    def kappa(self) -> int:
        return self.step_props.shape[0]

    @property
    def dim(self) -> int:
        return self.step_props.shape[1]

    @property
    def final(self) -> np.ndarray:
        """Total propagator from t=0 to t_f."""
        return self.prefix[-1]


@dataclass(frozen=True)
class FidelityValue:
    """Gate fidelity F, error e = 1 - F, and trace phase.

    ``phase_defined`` is False when |Tr| is numerically zero; the phase is
    then reported as 0.0 and operations that need it must refuse.
    """

    fidelity: float
    error: float
    phase: float
    phase_defined: bool = True


def step_hamiltonian(system: ControlSystem, pulse: PulseSequence, k: int) -> np.ndarray:
    """Generator H0 + sum_m H_m f_m^(k) for step k (1-based, 1 <= k <= kappa)."""
    pulse.require_conforming(system)
    if not 1 <= k <= system.kappa:
        raise IndexError(f"step index {k} out of range 1..{system.kappa}")
    h = system.h0.copy()
    for m in range(system.n_controls):
        h = h + system.interactions[m] * pulse.amplitudes[m, k - 1]
    return h


def step_hamiltonians(system: ControlSystem, pulse: PulseSequence) -> np.ndarray:
    """All step generators stacked, shape (kappa, N, N)."""
    pulse.require_conforming(system)
    hams = np.broadcast_to(system.h0, (system.kappa,) + system.h0.shape).copy()
    for m in range(system.n_controls):
        hams += pulse.amplitudes[m][:, None, None] * system.interactions[m]
    return hams


def propagate_hamiltonians(hams: np.ndarray, dt: float) -> PropagationResult:
    """Propagate an explicit stack of step generators (kappa, N, N)."""
    hams = np.asarray(hams, dtype=complex)
    if hams.ndim != 3 or hams.shape[1] != hams.shape[2]:
        raise StructureError(f"expected (kappa, N, N) stack, got shape {hams.shape}")
    kappa, n = hams.shape[0], hams.shape[1]
    try:
        w, v = np.linalg.eigh(hams)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    phases = np.exp(-1j * w * float(dt))
    props = (v * phases[:, None, :]) @ np.swapaxes(v.conj(), -1, -2)
    prefix = np.empty((kappa + 1, n, n), dtype=complex)
    suffix = np.empty((kappa + 1, n, n), dtype=complex)
    prefix[0] = np.eye(n)
    for k in range(kappa):
        prefix[k + 1] = props[k] @ prefix[k]
    suffix[kappa] = np.eye(n)
    for k in range(kappa - 1, -1, -1):
        suffix[k] = suffix[k + 1] @ props[k]
    return PropagationResult(
        step_props=props, prefix=prefix, suffix=suffix,
        hams=hams, eigvals=w, eigvecs=v, dt=float(dt),
    )


def propagate(system: ControlSystem, pulse: PulseSequence,
              perturbation=None) -> PropagationResult:
    """Propagate the system under a pulse, optionally perturbed.

    Parameters
    ----------
    system, pulse
        The control problem and amplitude table.
    perturbation : (delta, direction), optional
        ``direction`` is any uncertainty direction exposing
        ``step_matrices(pulse, kappa)`` (see `robustgate.uncertainty`); the
        step generators become H(k) + delta * D(k).  ``delta = 0`` leaves
        the generators bit-for-bit untouched.
    """
    hams = step_hamiltonians(system, pulse)
    if perturbation is not None:
        delta, direction = perturbation
        if float(delta) != 0.0:
            d = direction.step_matrices(pulse, system.kappa)
            if d.shape != hams.shape:
                raise StructureError(
                    f"direction shape {d.shape} does not match system {hams.shape}"
                )
            hams = hams + float(delta) * d
    return propagate_hamiltonians(hams, system.delta)


def gate_fidelity(target: np.ndarray, prop: PropagationResult) -> FidelityValue:
    """Normalized gate fidelity |Tr[target^dag final]| / N and its phase."""
    target = require_unitary(target, tol=UNITARY_TOL, what="target")
    final = prop.final
    if target.shape != final.shape:
        raise StructureError(
            f"target shape {target.shape} does not match propagator {final.shape}"
        )
    n = target.shape[0]
    tr = complex(np.trace(target.conj().T @ final))
    fid = abs(tr) / n
    if abs(tr) < ZERO_TRACE_TOL * n:
        return FidelityValue(fidelity=fid, error=1.0 - fid, phase=0.0,
                             phase_defined=False)
    return FidelityValue(fidelity=fid, error=1.0 - fid, phase=float(np.angle(tr)))
