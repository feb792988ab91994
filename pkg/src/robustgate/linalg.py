"""Dense complex matrix kernel.

Everything downstream (propagation, sensitivity, certification) is built on
three primitives: the unitary exponential exp(-i*H*tau) of a Hermitian
matrix, the coupling integral

    integral_0^tau exp(-i*H*(tau-s)) (-i*B) exp(-i*H*s) ds,

which is the first-order response of the step propagator to a generator
perturbation, and the usual norms / trace inner product.

The Hermitian exponential is computed by eigendecomposition, which is
unitary up to rounding.  The coupling integral has two independent routes:
an augmented-block exponential (the 2Nx2N upper-triangular block matrix,
evaluated with scipy's scaling-and-squaring Pade-13 expm) and an
eigendecomposition route based on divided differences of exp.  The block
route is the default for single calls; the eigendecomposition route
supports stacked operands and is what the batched sensitivity code uses.
The two must agree to 1e-10, which the test suite checks on random inputs.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = [
    "StructureError",
    "DegenerateStructureError",
    "NumericalError",
    "HERMITIAN_RTOL",
    "UNITARY_TOL",
    "is_hermitian",
    "require_hermitian",
    "is_unitary",
    "require_unitary",
    "expm_neg_i_hermitian",
    "coupling_integral",
    "coupling_from_eigh",
    "frobenius_norm",
    "spectral_norm",
    "trace_inner",
]

# Relative tolerance for Hermiticity: ||A - A^dag||_F <= rtol * max(1, ||A||_F)
HERMITIAN_RTOL = 1e-12
# Unitarity: ||U^dag U - I||_F <= tol * N
UNITARY_TOL = 1e-10


class StructureError(ValueError):
    """A matrix violates a required structure (Hermitian, unitary, shape)."""


class DegenerateStructureError(StructureError):
    """A structure matrix that cannot be normalized (zero matrix)."""


class NumericalError(RuntimeError):
    """A numerical routine (eigensolver, expm) failed to converge."""


def _as_complex_matrix(a, what="matrix"):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise StructureError(f"{what} must be 2-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a.view(float))):
        raise StructureError(f"{what} contains non-finite entries")
    return a


def is_hermitian(a, rtol: float = HERMITIAN_RTOL) -> bool:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(1.0, float(np.linalg.norm(a)))
    return float(np.linalg.norm(a - a.conj().T)) <= rtol * scale


def require_hermitian(a, rtol: float = HERMITIAN_RTOL, what="matrix") -> np.ndarray:
    """Validate that ``a`` is square Hermitian within tolerance and return it."""
    a = _as_complex_matrix(a, what)
    if a.shape[0] != a.shape[1]:
        raise StructureError(f"{what} must be square, got shape {a.shape}")
    scale = max(1.0, float(np.linalg.norm(a)))
    dev = float(np.linalg.norm(a - a.conj().T))
    if dev > rtol * scale:
        raise StructureError(
            f"{what} is not Hermitian: ||A - A^dag||_F = {dev:.3e} "
            f"exceeds {rtol:g} * max(1, ||A||_F)"
        )
    return a


def is_unitary(u, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    n = u.shape[0]
    return float(np.linalg.norm(u.conj().T @ u - np.eye(n))) <= tol * n


def require_unitary(u, tol: float = UNITARY_TOL, what="matrix") -> np.ndarray:
    """Validate that ``u`` is unitary within ``tol * N`` in Frobenius norm."""
    u = _as_complex_matrix(u, what)
    if u.shape[0] != u.shape[1]:
        raise StructureError(f"{what} must be square, got shape {u.shape}")
    n = u.shape[0]
    dev = float(np.linalg.norm(u.conj().T @ u - np.eye(n)))
    if dev > tol * n:
        raise StructureError(
            f"{what} is not unitary: ||U^dag U - I||_F = {dev:.3e} exceeds {tol:g} * N"
        )
    return u


def expm_neg_i_hermitian(h, tau: float) -> np.ndarray:
    """exp(-i*h*tau) for Hermitian ``h`` via eigendecomposition.

    Parameters
    ----------
    h : (N, N) array_like
        Hermitian matrix (validated within `HERMITIAN_RTOL`).
    tau : float
        Duration.  Negative values are accepted; exp(-i*h*(-tau)) is the
        inverse of exp(-i*h*tau).

    Returns
    -------
    (N, N) ndarray
        Unitary matrix V diag(exp(-i*lambda*tau)) V^dag.
    """
    h = require_hermitian(h)
    tau = float(tau)
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    phases = np.exp(-1j * w * tau)
    return (v * phases) @ v.conj().T


def _phi1(z: np.ndarray) -> np.ndarray:
    """(exp(z) - 1)/z elementwise, Taylor series below |z| = 0.1."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 0.1
    zb = z[~small]
    out[~small] = (np.exp(zb) - 1.0) / zb
    zs = z[small]
    acc = np.zeros_like(zs)
    term = np.ones_like(zs)
    for n in range(1, 11):
        acc += term
        term = term * zs / (n + 1)
    out[small] = acc
    return out


def coupling_from_eigh(w, v, b, tau: float) -> np.ndarray:
    """Coupling integral from a precomputed eigendecomposition of H.

    Evaluates integral_0^tau exp(-i*H*(tau-s)) (-i*b) exp(-i*H*s) ds with
    H = v diag(w) v^dag, using divided differences of exp(-i*x*tau).

    Accepts stacked operands: ``w`` of shape (..., N), ``v`` of shape
    (..., N, N) and ``b`` broadcastable to (..., N, N); an extra axis in
    ``b`` directly after the stack axes (shape (..., J, N, N)) evaluates J
    directions per eigendecomposition.
    """
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=complex)
    b = np.asarray(b, dtype=complex)
    tau = float(tau)
    vh = np.swapaxes(v.conj(), -1, -2)
    lam = w[..., :, None] - w[..., None, :]
    psi = tau * np.exp(-1j * w[..., :, None] * tau) * _phi1(1j * lam * tau)
    if b.ndim == w.ndim + 2:
        # one eigendecomposition, J direction matrices
        bt = vh[..., None, :, :] @ b @ v[..., None, :, :]
        core = -1j * bt * psi[..., None, :, :]
        return v[..., None, :, :] @ core @ vh[..., None, :, :]
    bt = vh @ b @ v
    return v @ (-1j * bt * psi) @ vh


def coupling_integral(h, b, tau: float, method: str = "block") -> np.ndarray:
    """First-order response of exp(-i*(h + delta*b)*tau) to delta at 0.

    Evaluates integral_0^tau exp(-i*h*(tau-s)) (-i*b) exp(-i*h*s) ds.

    Parameters
    ----------
    h, b : (N, N) array_like
        Hermitian matrices of equal dimension.
    tau : float
        Integration length (>= 0).
    method : {"block", "eig"}
        "block" exponentiates the augmented matrix [[-i*h, -i*b], [0, -i*h]]
        scaled by tau with a general-purpose (Pade-13, scaling-and-squaring)
        expm and reads the upper-right block.  "eig" uses the Hermitian
        eigendecomposition of h and divided differences.  The two agree to
        better than 1e-10.
    """
    h = require_hermitian(h, what="h")
    b = require_hermitian(b, what="b")
    if h.shape != b.shape:
        raise StructureError(f"dimension mismatch: h is {h.shape}, b is {b.shape}")
    tau = float(tau)
    if tau < 0:
        raise ValueError("tau must be non-negative")
    n = h.shape[0]
    if method == "block":
        blk = np.zeros((2 * n, 2 * n), dtype=complex)
        blk[:n, :n] = -1j * h
        blk[n:, n:] = -1j * h
        blk[:n, n:] = -1j * b
        try:
            full = scipy.linalg.expm(blk * tau)
        except Exception as exc:  # scipy raises LinAlgError or ValueError
            raise NumericalError(f"block expm failed: {exc}") from exc
        return np.ascontiguousarray(full[:n, n:])
    if method == "eig":
        try:
            w, v = np.linalg.eigh(h)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigendecomposition failed: {exc}") from exc
        return coupling_from_eigh(w, v, b, tau)
    raise ValueError(f"unknown method {method!r}, expected 'block' or 'eig'")


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=complex)))


def spectral_norm(a) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(np.asarray(a, dtype=complex), 2))


def trace_inner(a, b) -> complex:
    """Tr[a^dag b]."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise StructureError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))
