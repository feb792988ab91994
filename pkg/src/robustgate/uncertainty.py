"""Structured Hermitian uncertainty directions and their step scalings.

A structure is a unit-Frobenius-norm Hermitian matrix applied either to the
drift (scaling 1 in every step) or to one interaction Hamiltonian (scaling
equal to that control's amplitude in each step).  A basis stacks the drift
structure in slot 0 and the control structures in slots 1..M; arbitrary
directions are real coefficient vectors over the slots, either static or
one vector per time step.  Every direction kind can produce its per-step,
per-unit-strength Hermitian increment, which is all that propagation and
sensitivity need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    DegenerateStructureError,
    StructureError,
    frobenius_norm,
    require_hermitian,
    trace_inner,
)
from .system import PulseSequence

__all__ = [
    "DRIFT",
    "CONTROL",
    "DIRECTION_NORM_TOL",
    "UncertaintyStructure",
    "StructureBasis",
    "CompositeDirection",
    "TimeVaryingDirection",
    "normalize_structure",
    "compose_direction",
    "alpha",
]

DRIFT = "drift"
CONTROL = "control"

# ||s||_2 must equal 1 within this tolerance for composed directions.
DIRECTION_NORM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class UncertaintyStructure:
    """A normalized Hermitian direction with its per-step scaling rule.

    ``kind`` is "drift" (scaling 1 every step) or "control" (scaling equal
    to control ``control_index``'s amplitude, 1-based).  ``slot`` is the
    basis position: 0 for drift, m for control m.
    """

    matrix: np.ndarray
    kind: str
    control_index: int | None = None
    label: str = ""

    def __post_init__(self):
        m = require_hermitian(self.matrix, what="structure matrix")
        nrm = frobenius_norm(m)
        if abs(nrm - 1.0) > 1e-12:
            raise StructureError(
                f"structure matrix must have unit Frobenius norm, got {nrm!r}"
            )
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.kind not in (DRIFT, CONTROL):
            raise ValueError(f"kind must be {DRIFT!r} or {CONTROL!r}, got {self.kind!r}")
        if self.kind == CONTROL:
            if self.control_index is None or int(self.control_index) < 1:
                raise ValueError("control structures need control_index >= 1")
            object.__setattr__(self, "control_index", int(self.control_index))
        elif self.control_index is not None:
            raise ValueError("drift structures take no control_index")
        if not self.label:
            object.__setattr__(self, "label", f"H{self.slot}")

    @property
    def slot(self) -> int:
        return 0 if self.kind == DRIFT else self.control_index

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def alphas(self, pulse: PulseSequence, kappa: int) -> np.ndarray:
        """Per-step scaling alpha^(k), shape (kappa,)."""
        if self.kind == DRIFT:
            return np.ones(kappa)
        m = self.control_index
        if m > pulse.n_controls:
            raise IndexError(
                f"structure references control {m} but pulse has {pulse.n_controls}"
            )
        return pulse.amplitudes[m - 1, :kappa].copy()

    def step_matrices(self, pulse: PulseSequence, kappa: int) -> np.ndarray:
        """Per-unit-strength Hermitian increment per step, shape (kappa, N, N)."""
        a = self.alphas(pulse, kappa)
        return a[:, None, None] * self.matrix


@dataclass(frozen=True, eq=False)
class StructureBasis:
    """Ordered structures {H^_0, ..., H^_M}: slot 0 drift, slot m control m."""

    elements: tuple

    def __post_init__(self):
        elems = tuple(self.elements)
        if not elems:
            raise ValueError("basis must contain at least the drift structure")
        if elems[0].kind != DRIFT:
            raise ValueError("basis slot 0 must be the drift structure")
        dim = elems[0].dim
        for m, el in enumerate(elems[1:], start=1):
            if el.kind != CONTROL or el.control_index != m:
                raise ValueError(f"basis slot {m} must be the control-{m} structure")
            if el.dim != dim:
                raise StructureError("basis elements must share one dimension")
        if len(elems) > dim * dim:
            raise ValueError(f"basis size {len(elems)} exceeds N^2 = {dim * dim}")
        object.__setattr__(self, "elements", elems)

    def __len__(self) -> int:
        return len(self.elements)

    def __getitem__(self, i: int) -> UncertaintyStructure:
        return self.elements[i]

    @property
    def dim(self) -> int:
        return self.elements[0].dim

    @property
    def labels(self) -> tuple:
        return tuple(el.label for el in self.elements)

    @property
    def matrices(self) -> np.ndarray:
        """Stacked structure matrices, shape (M+1, N, N)."""
        return np.stack([el.matrix for el in self.elements])

    def gram(self) -> np.ndarray:
        """Frobenius Gram matrix G[i, j] = Tr[H^_i^dag H^_j].

        Diagnostic only: composition assumes the coefficient-vector
        normalization ||s||_2 = 1, which equals Frobenius normalization of
        the composite exactly when this matrix is the identity.
        """
        mats = self.matrices
        n = len(self.elements)
        g = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                g[i, j] = trace_inner(mats[i], mats[j]).real
        return g

    def alphas_table(self, pulse: PulseSequence, kappa: int) -> np.ndarray:
        """alpha_m^(k) for every slot, shape (kappa, M+1)."""
        return np.stack(
            [el.alphas(pulse, kappa) for el in self.elements], axis=1
        )

    def direction_stack(self, pulse: PulseSequence, kappa: int) -> np.ndarray:
        """Per-step per-slot scaled directions alpha_m^(k) H^_m, (kappa, M+1, N, N)."""
        a = self.alphas_table(pulse, kappa)
        return a[:, :, None, None] * self.matrices[None, :, :, :]


@dataclass(frozen=True, eq=False)
class CompositeDirection:
    """Static direction sum_m s_m H^_m over a basis; slot kinds retained.

    The effective matrix is ``matrix``; during propagation each term still
    scales with its own slot's per-step alpha.
    """

    basis: StructureBasis
    coeffs: np.ndarray
    label: str = "composite"

    def __post_init__(self):
        s = np.array(self.coeffs, dtype=float)
        if s.shape != (len(self.basis),):
            raise ValueError(
                f"coefficient vector has shape {s.shape}, expected ({len(self.basis)},)"
            )
        s.setflags(write=False)
        object.__setattr__(self, "coeffs", s)

    @property
    def matrix(self) -> np.ndarray:
        """Effective Hermitian matrix sum_m s_m H^_m."""
        return np.einsum("m,mij->ij", self.coeffs, self.basis.matrices)

    def step_matrices(self, pulse: PulseSequence, kappa: int) -> np.ndarray:
        d = self.basis.direction_stack(pulse, kappa)
        return np.einsum("m,kmij->kij", self.coeffs, d)


@dataclass(frozen=True, eq=False)
class TimeVaryingDirection:
    """One coefficient vector per step: H^(k) = sum_m s_m^(k) H^_m."""

    basis: StructureBasis
    coeffs: np.ndarray  # (kappa, M+1)
    label: str = "time-varying"

    def __post_init__(self):
        s = np.array(self.coeffs, dtype=float)
        if s.ndim != 2 or s.shape[1] != len(self.basis):
            raise ValueError(
                f"coefficient table has shape {s.shape}, expected (kappa, {len(self.basis)})"
            )
        s.setflags(write=False)
        object.__setattr__(self, "coeffs", s)

    @property
    def kappa(self) -> int:
        return self.coeffs.shape[0]

    def matrices(self) -> np.ndarray:
        """Per-step effective matrices sum_m s_m^(k) H^_m, (kappa, N, N)."""
        return np.einsum("km,mij->kij", self.coeffs, self.basis.matrices)

    def step_matrices(self, pulse: PulseSequence, kappa: int) -> np.ndarray:
        if kappa != self.kappa:
            raise ValueError(
                f"direction defined on {self.kappa} steps, system has {kappa}"
            )
        d = self.basis.direction_stack(pulse, kappa)
        return np.einsum("km,kmij->kij", self.coeffs, d)


def normalize_structure(h, kind: str, control_index: int | None = None,
                        label: str = "") -> UncertaintyStructure:
    """Frobenius-normalize a Hermitian matrix into an uncertainty structure.

    Raises
    ------
    DegenerateStructureError
        If ``h`` is the zero matrix.
    """
    h = require_hermitian(h, what="structure matrix")
    nrm = frobenius_norm(h)
    if nrm == 0.0:
        raise DegenerateStructureError("cannot normalize the zero matrix")
    return UncertaintyStructure(
        matrix=h / nrm, kind=kind, control_index=control_index, label=label
    )


def compose_direction(basis: StructureBasis, s, *, require_normalized: bool = True):
    """Build a direction from coefficients over a basis.

    A 1-D ``s`` of length M+1 gives a static `CompositeDirection`; a 2-D
    ``s`` of shape (kappa, M+1) gives a `TimeVaryingDirection` with one
    unit vector per step.  Each coefficient vector must satisfy
    ||s||_2 = 1 within `DIRECTION_NORM_TOL` unless ``require_normalized``
    is disabled (used for linearity checks).
    """
    s = np.asarray(s, dtype=float)
    if s.ndim == 1:
        if require_normalized:
            nrm = float(np.linalg.norm(s))
            if abs(nrm - 1.0) > DIRECTION_NORM_TOL:
                raise ValueError(f"||s||_2 = {nrm!r}, expected 1 within tolerance")
        return CompositeDirection(basis=basis, coeffs=s)
    if s.ndim == 2:
        if require_normalized:
            nrms = np.linalg.norm(s, axis=1)
            bad = np.abs(nrms - 1.0) > DIRECTION_NORM_TOL
            if np.any(bad):
                k = int(np.argmax(bad))
                raise ValueError(
                    f"||s^({k + 1})||_2 = {nrms[k]!r}, expected 1 within tolerance"
                )
        return TimeVaryingDirection(basis=basis, coeffs=s)
    raise ValueError(f"coefficients must be 1-D or 2-D, got shape {s.shape}")


def alpha(slot: int, pulse: PulseSequence, k: int) -> float:
    """Step scaling for a basis slot: 1 for drift (slot 0), f_m^(k) for slot m."""
    if not 1 <= k <= pulse.kappa:
        raise IndexError(f"step index {k} out of range 1..{pulse.kappa}")
    if slot == 0:
        return 1.0
    if not 1 <= slot <= pulse.n_controls:
        raise IndexError(f"slot {slot} out of range 0..{pulse.n_controls}")
    return float(pulse.amplitudes[slot - 1, k - 1])
