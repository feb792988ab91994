"""Performance guarantees: analytic margins, iterated worst case, sweeps.

Two certified strengths are produced for an error threshold epsilon.  The
analytic margin (epsilon - e(0)) / B1 follows from the error being
Lipschitz in the strength with constant B1; it is conservative but free.
The iterated margin quantizes the strength into steps of size d, repeatedly
adds the current worst per-step direction (the B3 maximizer recomputed on
the accumulated perturbed generators) and stops one step before the
evaluated error reaches epsilon.  Sweeps record the perturbed error and
sensitivity over a strength grid for verification and plotting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sensitivity import (
    _build_Z_from_prop,
    _zeta_from_prop,
    bound_B1,
    bound_B3_and_worst,
)
from .system import (
    ControlSystem,
    PulseSequence,
    gate_fidelity,
    propagate,
    propagate_hamiltonians,
    step_hamiltonians,
)
from .uncertainty import StructureBasis

__all__ = [
    "Theorem3Margin",
    "PerformanceCertificate",
    "SweepTrace",
    "theorem3_margin",
    "algorithm1_margin",
    "error_sweep",
]


@dataclass(frozen=True)
class Theorem3Margin:
    """Analytic margin (epsilon - e0) / B1 with its edge-case flags.

    ``unbounded`` marks B1 = 0 (no first-order effect anywhere; delta_bar
    is the +inf sentinel).  ``already_violating`` marks e0 >= epsilon
    (delta_bar = 0).
    """

    delta_bar: float
    already_violating: bool = False
    unbounded: bool = False


@dataclass(frozen=True, eq=False)
class PerformanceCertificate:
    """Certified margins for one controller against a structure basis.

    ``trace`` holds the iterated-worst-case evaluations as (delta_n, error)
    pairs, one per iteration including the terminating one, so
    trace[n_bar - 1] is the error at the certified delta_bar and trace[n_bar]
    is the first evaluation at or above epsilon.
    """

    epsilon: float
    nominal_error: float
    labels: tuple
    theorem3: dict            # label -> Theorem3Margin
    alg1_delta_bar: float
    alg1_step: float
    alg1_n_bar: int
    trace: tuple              # ((delta, error), ...)
    exceeded_cap: bool = False


@dataclass(frozen=True, eq=False)
class SweepTrace:
    """Perturbed error and sensitivity over a strength grid.

    ``phase_defined[i]`` is False where the perturbed fidelity vanished; the
    sensitivity is recorded as NaN there.
    """

    structure_label: str
    deltas: np.ndarray
    errors: np.ndarray
    zetas: np.ndarray
    phase_defined: np.ndarray


def theorem3_margin(nominal_error: float, epsilon: float, b1: float) -> Theorem3Margin:
    """Largest strength with guaranteed error below epsilon, from the B1 bound."""
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon!r}")
    if b1 < 0.0:
        raise ValueError(f"B1 must be non-negative, got {b1!r}")
    if nominal_error >= epsilon:
        return Theorem3Margin(delta_bar=0.0, already_violating=True)
    if b1 == 0.0:
        return Theorem3Margin(delta_bar=math.inf, unbounded=True)
    return Theorem3Margin(delta_bar=(epsilon - nominal_error) / b1)


def algorithm1_margin(system: ControlSystem, pulse: PulseSequence,
                      target: np.ndarray, basis: StructureBasis,
                      epsilon: float, step: float = 1e-4,
                      n_max: int = 10 ** 6) -> PerformanceCertificate:
    """Iterated worst-case margin plus the analytic margins per structure.

    Starting from the nominal generators, each iteration adds
    step * sum_m alpha_m^(k) H^_m s_m^(k) to every step generator, where
    {s^(k)} is the per-step worst direction recomputed from the
    decomposition matrix of the accumulated generators (alphas stay those
    of the nominal pulse).  Iteration stops at the first evaluated error
    >= epsilon; the certified strength is one step before it.

    Raises
    ------
    ValueError
        If the nominal error already reaches epsilon, or step <= 0.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon!r}")
    if not step > 0.0:
        raise ValueError(f"step must be > 0, got {step!r}")
    pulse.require_conforming(system)
    kappa = system.kappa

    prop = propagate(system, pulse)
    fv = gate_fidelity(target, prop)
    e0 = fv.error
    if e0 >= epsilon:
        raise ValueError(
            f"nominal error {e0:.3e} already reaches epsilon = {epsilon:.3e}"
        )

    thm3 = {
        el.label: theorem3_margin(e0, epsilon, bound_B1(system, pulse, el))
        for el in basis.elements
    }

    directions = basis.direction_stack(pulse, kappa)  # (kappa, M+1, N, N)
    z, _ = _build_Z_from_prop(prop, target, fv, pulse, basis)
    _, s_bars, _, _ = bound_B3_and_worst(z)

    hams = step_hamiltonians(system, pulse)
    trace = []
    n = 0
    exceeded = False
    while True:
        n += 1
        hams = hams + step * np.einsum("km,kmij->kij", s_bars, directions)
        prop = propagate_hamiltonians(hams, system.delta)
        fv = gate_fidelity(target, prop)
        trace.append((n * step, fv.error))
        if fv.error >= epsilon:
            break
        if n >= n_max:
            exceeded = True
            break
        z, _ = _build_Z_from_prop(prop, target, fv, pulse, basis)
        _, s_bars, _, _ = bound_B3_and_worst(z)

    n_bar = n if exceeded else n - 1
    return PerformanceCertificate(
        epsilon=float(epsilon),
        nominal_error=e0,
        labels=basis.labels,
        theorem3=thm3,
        alg1_delta_bar=n_bar * step,
        alg1_step=float(step),
        alg1_n_bar=n_bar,
        trace=tuple(trace),
        exceeded_cap=exceeded,
    )


def _sweep_grid(delta1: float, delta2: float, n_points: int) -> np.ndarray:
    grid = np.linspace(delta1, delta2, n_points)
    if delta1 <= 0.0 <= delta2:
        # snap the nearest point to exactly zero so the nominal point is on the grid
        i = int(np.argmin(np.abs(grid)))
        grid[i] = 0.0
    return grid


def error_sweep(system: ControlSystem, pulse: PulseSequence, target: np.ndarray,
                structure, delta1: float, delta2: float,
                n_points: int) -> SweepTrace:
    """Perturbed error and sensitivity on a grid over [delta1, delta2].

    The grid is uniform except that, when the interval contains zero, the
    nearest point is snapped to exactly zero.  Points where the perturbed
    fidelity vanishes are recorded with an undefined-phase flag instead of
    failing the sweep.
    """
    if not delta1 < delta2:
        raise ValueError(f"need delta1 < delta2, got [{delta1!r}, {delta2!r}]")
    if n_points < 2:
        raise ValueError(f"need at least 2 grid points, got {n_points}")
    grid = _sweep_grid(float(delta1), float(delta2), int(n_points))
    errors = np.empty_like(grid)
    zetas = np.empty_like(grid)
    defined = np.ones(grid.shape, dtype=bool)
    for i, d in enumerate(grid):
        prop = propagate(system, pulse, perturbation=(float(d), structure))
        fv = gate_fidelity(target, prop)
        errors[i] = fv.error
        if fv.phase_defined:
            zetas[i] = _zeta_from_prop(prop, target, fv, pulse, structure)
        else:
            zetas[i] = np.nan
            defined[i] = False
    return SweepTrace(
        structure_label=getattr(structure, "label", ""),
        deltas=grid,
        errors=errors,
        zetas=zetas,
        phase_defined=defined,
    )
