"""Resolvent-decay diagnostics along vertical lines and spectral enclosures.

For a fixed real part x, the scans evaluate norms of B R(x+iy, A) or of
resolvent differences on a log-spaced ladder of heights y and fit the
decay rate of the top decade.  Finite matrices give the exact 1/y decay
for bounded perturbations and 1/y^2 for resolvent differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import InputError
from .schatten import DenseOperator, IndexLike, OperatorLike, _as_index, as_operator, schatten_norm
from .semigroup import Generator, resolvent

__all__ = [
    "VerticalScan",
    "vertical_decay_scan",
    "resolvent_difference_scan",
    "EnclosureEnvelope",
    "spectral_enclosure",
]

POINTS_PER_DECADE = 16

# Points whose z = x + iy is closer than this to the spectrum are
# skipped and flagged rather than evaluated.
GRAZE_TOL = 1e-8


@dataclass(frozen=True)
class VerticalScan:
    """Norms along a vertical line x + iy, maximized over +/- y.

    ``fitted_decay`` is the least-squares slope of log norm against
    log y over the top decade of heights.  ``skipped`` lists heights at
    which the line grazed the spectrum.  For difference scans,
    ``identity_residuals`` holds the second-resolvent-identity defect
    at each height.
    """

    x: float
    ys: np.ndarray
    norms: np.ndarray
    fitted_decay: float
    skipped: Tuple[float, ...] = ()
    identity_residuals: Optional[np.ndarray] = None

    def __post_init__(self):
        ys = np.asarray(self.ys, dtype=float)
        norms = np.asarray(self.norms, dtype=float)
        ys.setflags(write=False)
        norms.setflags(write=False)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "norms", norms)


def _height_ladder(y_max: float, n_points: int) -> np.ndarray:
    decades = max((n_points - 1) / POINTS_PER_DECADE, 1.0)
    return np.geomspace(y_max / 10.0**decades, y_max, n_points)


def _fit_top_decade(ys: np.ndarray, norms: np.ndarray) -> float:
    mask = (ys >= ys[-1] / 10.0) & (norms > 0)
    if np.count_nonzero(mask) < 2:
        return 0.0
    return float(np.polyfit(np.log(ys[mask]), np.log(norms[mask]), 1)[0])


def vertical_decay_scan(
    gA: Generator,
    b: OperatorLike,
    q: IndexLike,
    x: float,
    y_max: float,
    n_points: int = 48,
) -> VerticalScan:
    """Scan ``||B R(x + iy, A)||_q`` on a log-spaced ladder of heights.

    The reported norm at height y is the larger of the two values at
    +/- iy.  Heights whose line grazes the spectrum (within
    ``GRAZE_TOL``) are skipped and recorded.
    """
    bop = as_operator(b)
    idx = _as_index(q)
    if bop.dim != gA.dim:
        raise InputError(f"dimension mismatch: {gA.dim} != {bop.dim}")
    if n_points < 8:
        raise InputError("n_points must be at least 8")
    if not y_max > 0:
        raise InputError("y_max must be positive")
    ys, norms, skipped = [], [], []
    for y in _height_ladder(float(y_max), int(n_points)):
        pair = []
        for z in (complex(x, y), complex(x, -y)):
            if gA.spectrum_distance(z) < GRAZE_TOL:
                continue
            pair.append(schatten_norm(bop @ resolvent(gA, z), idx))
        if not pair:
            skipped.append(float(y))
            continue
        ys.append(float(y))
        norms.append(max(pair))
    ys_arr, norms_arr = np.array(ys), np.array(norms)
    return VerticalScan(
        x=float(x), ys=ys_arr, norms=norms_arr,
        fitted_decay=_fit_top_decade(ys_arr, norms_arr),
        skipped=tuple(skipped),
    )


def resolvent_difference_scan(
    gA1: Generator,
    gA2: Generator,
    q: IndexLike,
    x: float,
    y_max: float,
    n_points: int = 48,
) -> VerticalScan:
    """Scan ``||R(z, A2) - R(z, A1)||_q`` along a vertical line.

    Alongside the difference norms, the defect of the second resolvent
    identity (R2 - R1) - R2 (A2 - A1) R1 is evaluated at every height as
    a consistency certificate.
    """
    idx = _as_index(q)
    if gA1.dim != gA2.dim:
        raise InputError(f"dimension mismatch: {gA1.dim} != {gA2.dim}")
    if n_points < 8:
        raise InputError("n_points must be at least 8")
    diff = gA2.a.entries - gA1.a.entries
    ys, norms, residuals, skipped = [], [], [], []
    for y in _height_ladder(float(y_max), int(n_points)):
        pair, res_pair = [], []
        for z in (complex(x, y), complex(x, -y)):
            if min(gA1.spectrum_distance(z), gA2.spectrum_distance(z)) < GRAZE_TOL:
                continue
            r1 = resolvent(gA1, z).entries
            r2 = resolvent(gA2, z).entries
            delta = r2 - r1
            pair.append(schatten_norm(DenseOperator(delta), idx))
            # with R = (z - A)^{-1}: R2 - R1 = R2 (A2 - A1) R1
            res_pair.append(schatten_norm(DenseOperator(delta - r2 @ diff @ r1), idx))
        if not pair:
            skipped.append(float(y))
            continue
        ys.append(float(y))
        norms.append(max(pair))
        residuals.append(max(res_pair))
    ys_arr, norms_arr = np.array(ys), np.array(norms)
    return VerticalScan(
        x=float(x), ys=ys_arr, norms=norms_arr,
        fitted_decay=_fit_top_decade(ys_arr, norms_arr),
        skipped=tuple(skipped),
        identity_residuals=np.array(residuals),
    )


@dataclass(frozen=True)
class EnclosureEnvelope:
    """Spectral enclosure |Im lambda| <= F(|Re lambda|).

    F is built from the computed spectrum: F(|w|) is the largest
    |Im lambda| among eigenvalues whose real part is within ``margin``
    of +/- w, plus the margin itself.  The envelope is sampled at the
    eigenvalue abscissae in ``xs`` and evaluable anywhere via
    :meth:`bound`.
    """

    xs: np.ndarray
    F: np.ndarray
    eigenvalues: np.ndarray
    margin: float

    def bound(self, x: float) -> float:
        w = abs(float(x))
        near = np.abs(np.abs(self.eigenvalues.real) - w) <= self.margin
        tall = float(np.max(np.abs(self.eigenvalues.imag[near]))) if np.any(near) else 0.0
        return tall + self.margin

    def contains(self, lam: complex) -> bool:
        return abs(lam.imag) <= self.bound(abs(lam.real))


def spectral_enclosure(gA: Generator, margin: float) -> EnclosureEnvelope:
    """Envelope function confining Spec(A) to |Im| <= F(|Re|)."""
    if not margin > 0:
        raise InputError("margin must be positive")
    eig = np.asarray(gA.eigenvalues)
    xs = np.unique(np.abs(eig.real))
    env = EnclosureEnvelope(xs=xs, F=np.zeros_like(xs), eigenvalues=eig,
                            margin=float(margin))
    f_vals = np.array([env.bound(x) for x in xs])
    f_vals.setflags(write=False)
    xs.setflags(write=False)
    object.__setattr__(env, "F", f_vals)
    return env
