"""Generators, semigroup evaluation and resolvents.

The sign convention is fixed once for the whole package: a generator A
produces the semigroup T(t, A) = exp(-A t), so a positive-definite A
gives a decaying family.  The growth bound reported is the spectral
bound -min Re Spec(A), which is exact in finite dimension; an empirical
log-norm slope is fitted as a cross-check only.
"""

from __future__ import annotations

import warnings
from typing import Sequence, Union

import numpy as np
import scipy.linalg

from .errors import CrossCheckWarning, InputError, NumericalError, SpectrumError
from .schatten import DenseOperator, OperatorLike, as_operator

__all__ = [
    "Generator",
    "evolve",
    "evolve_many",
    "resolvent",
    "growth_bound",
    "perturbed_generator",
]

# Eigenvector condition number above which a matrix is treated as
# numerically defective and the exponential falls back to
# scaling-and-squaring (Pade order 13, as implemented by scipy).
DIAGONALIZABLE_COND_LIMIT = 1e6

# The cached eigendecomposition must reproduce A this well (relative
# Frobenius error) to be trusted.
RECONSTRUCTION_TOL = 1e-10

# Relative distance to the spectrum below which resolvents are refused.
SPECTRUM_MARGIN = 1e-12


class Generator:
    """A dense matrix A together with cached spectral data for exp(-At).

    Construction is the only mutating step; afterwards instances are
    immutable and safe to share between threads.

    Attributes
    ----------
    a : DenseOperator
        The generator matrix.
    diagonalizable : bool
        True when a well-conditioned eigendecomposition was cached and
        reproduces A to ``RECONSTRUCTION_TOL``.
    eigenvalues : ndarray
        Spectrum of A (always available; dense solver).
    """

    def __init__(self, a: OperatorLike):
        op = as_operator(a)
        self.a = op
        mat = op.entries
        self._hermitian = bool(np.allclose(mat, mat.conj().T, rtol=0, atol=1e-14))
        scale = np.linalg.norm(mat)
        try:
            if self._hermitian:
                w, v = np.linalg.eigh(mat)
                w = w.astype(np.complex128)
            else:
                w, v = np.linalg.eig(mat)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - rare
            raise NumericalError(f"eigendecomposition failed: {exc}") from exc
        self.eigenvalues = w
        self.diagonalizable = False
        self._eigvecs = None
        self._eigvecs_inv = None
        cond = np.linalg.cond(v) if v.size else np.inf
        if np.isfinite(cond) and cond < DIAGONALIZABLE_COND_LIMIT:
            vinv = np.linalg.inv(v)
            recon = (v * w) @ vinv
            err = np.linalg.norm(recon - mat)
            if err <= RECONSTRUCTION_TOL * max(scale, 1e-300):
                self.diagonalizable = True
                self._eigvecs = v
                self._eigvecs_inv = vinv

    @property
    def dim(self) -> int:
        return self.a.dim

    @property
    def spectral_bound(self) -> float:
        """-min Re Spec(A): the exact growth rate of ||exp(-At)||."""
        return float(-np.min(self.eigenvalues.real))

    def spectrum_distance(self, z: complex) -> float:
        return float(np.min(np.abs(z - self.eigenvalues)))


def perturbed_generator(g: Generator, b: OperatorLike) -> Generator:
    """Generator of A + B for a perturbation B of matching dimension."""
    bop = as_operator(b)
    if bop.dim != g.dim:
        raise InputError(f"dimension mismatch: {g.dim} != {bop.dim}")
    return Generator(g.a.entries + bop.entries)


def evolve(g: Generator, t: float) -> DenseOperator:
    """Evaluate T(t, A) = exp(-A t) for t >= 0.

    Uses the cached eigendecomposition when available, otherwise
    scipy's scaling-and-squaring exponential.  ``t = 0`` returns the
    identity exactly.
    """
    t = float(t)
    if not np.isfinite(t) or t < 0:
        raise InputError(f"time must be finite and nonnegative, got {t}")
    if t == 0.0:
        return DenseOperator(np.eye(g.dim, dtype=np.complex128))
    return DenseOperator(_expm(g, t))


def evolve_many(g: Generator, ts: Sequence[float]) -> np.ndarray:
    """Stack exp(-A t) over a vector of times; shape (len(ts), dim, dim)."""
    ts = np.asarray(ts, dtype=float)
    if ts.ndim != 1:
        raise InputError("ts must be one-dimensional")
    if np.any(~np.isfinite(ts)) or np.any(ts < 0):
        raise InputError("times must be finite and nonnegative")
    if g.diagonalizable:
        v, vinv, w = g._eigvecs, g._eigvecs_inv, g.eigenvalues
        with np.errstate(over="ignore"):  # growing modes may saturate to inf
            phases = np.exp(-np.outer(ts, w))  # (K, dim)
            return np.einsum("ab,kb,bc->kac", v, phases, vinv, optimize=True)
    out = np.empty((ts.size, g.dim, g.dim), dtype=np.complex128)
    for k, t in enumerate(ts):
        out[k] = np.eye(g.dim) if t == 0.0 else scipy.linalg.expm(-g.a.entries * t)
    return out


def _expm(g: Generator, t: float) -> np.ndarray:
    if g.diagonalizable:
        return (g._eigvecs * np.exp(-g.eigenvalues * t)) @ g._eigvecs_inv
    return scipy.linalg.expm(-g.a.entries * t)


def resolvent(g: Generator, z: complex) -> DenseOperator:
    """R(z, A) = (z - A)^{-1} for z off the spectrum.

    Raises :class:`SpectrumError` when z is within
    ``SPECTRUM_MARGIN * ||A||`` of an eigenvalue.
    """
    z = complex(z)
    scale = max(float(np.linalg.norm(g.a.entries, 2)), 1.0)
    if g.spectrum_distance(z) < SPECTRUM_MARGIN * scale:
        raise SpectrumError(f"z = {z} is within tolerance of Spec(A)")
    lhs = z * np.eye(g.dim, dtype=np.complex128) - g.a.entries
    try:
        res = np.linalg.solve(lhs, np.eye(g.dim, dtype=np.complex128))
    except np.linalg.LinAlgError as exc:
        raise SpectrumError(f"(z - A) is numerically singular at z = {z}") from exc
    return DenseOperator(res)


def growth_bound(g: Generator, fit_points: int = 9) -> float:
    """Growth rate of log ||T(t, A)|| per unit time.

    Returns the spectral bound -min Re Spec(A), which is the exact value
    in finite dimension.  A least-squares slope of log ||exp(-At)|| over
    t in [T0, 2 T0] is fitted as an independent cross-check; if the two
    disagree by more than 0.05 * (1 + |value|) a
    :class:`~semipert.errors.CrossCheckWarning` is emitted (diagnostic,
    not a failure: transients of non-normal matrices can dominate any
    finite window).
    """
    value = g.spectral_bound
    re = np.sort(g.eigenvalues.real)
    gap = float(re[1] - re[0]) if re.size > 1 else 1.0
    # T0 large enough for the slowest mode to dominate, small enough to
    # keep exp(|value| * 2 T0) representable.
    t0 = 12.0 / max(gap, 0.05)
    t0 = min(max(t0, 1.0), 300.0 / (1.0 + abs(value)))
    ts = np.linspace(t0, 2.0 * t0, fit_points)
    norms = np.array([np.linalg.norm(_expm(g, t), 2) for t in ts])
    if np.all(norms > 0) and np.all(np.isfinite(norms)):
        slope = float(np.polyfit(ts, np.log(norms), 1)[0])
        if abs(slope - value) > 0.05 * (1.0 + abs(value)):
            warnings.warn(
                f"growth-bound cross-check mismatch: spectral bound {value:.6g}, "
                f"fitted slope {slope:.6g} over [{t0:.3g}, {2 * t0:.3g}]",
                CrossCheckWarning,
                stacklevel=2,
            )
    return value
