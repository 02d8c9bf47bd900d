"""Spectra of perturbed grid Laplacians and eigenvalue growth checks.

For H = -Laplace + V with complex V, the real parts of the (sorted)
eigenvalues eventually dominate c * n^(2/d) with the explicit constant
c = 4 pi / (4 e |Omega|)^(2/d); the heat trace of the perturbed
semigroup is controlled by the unperturbed Hilbert-Schmidt norm plus a
constant measured from the semigroup difference.  This module verifies
those statements at grid scale and reports margins.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional, Sequence

import numpy as np

from .errors import InputError, NumericalError, ResolutionError
from .schrodinger import GridDomain, Potential, build_dirichlet_laplacian
from .semigroup import Generator, evolve_many

__all__ = [
    "SpectralReport",
    "perturbed_spectrum",
    "weyl_lower_bound_check",
    "WeylCheck",
    "heat_trace_check",
    "TraceCheck",
    "report_as_dict",
    "write_report_json",
    "write_report_csv",
]

# Window (0, gamma] over which the semigroup-difference constant is
# measured.  Any fixed gamma gives a testable statement; 1 keeps all
# acceptance times inside the window.
GAMMA = 1.0

# Number of sample times for the constant measurement.
M1_SAMPLES = 25


def weyl_constant(volume: float, d: int) -> float:
    """4 pi / (4 e |Omega|)^(2/d)."""
    return 4.0 * math.pi / (4.0 * math.e * volume) ** (2.0 / d)


@dataclass(frozen=True)
class SpectralReport:
    """Sorted spectrum of a perturbed grid operator.

    Eigenvalues are sorted by nondecreasing real part (ties by
    imaginary part).  ``m1`` is the measured semigroup-difference
    constant: max over t in (0, gamma] of
    ||exp(-Ht)||_2 - ||exp(-A0 t)||_2, clipped at zero, with the time
    ladder floored at the mesh scale h^2.
    """

    eigenvalues: np.ndarray
    weyl_constant: float
    volume: float
    d: int
    m1: float
    gamma: float = GAMMA

    def __post_init__(self):
        eig = np.asarray(self.eigenvalues, dtype=np.complex128)
        eig.setflags(write=False)
        object.__setattr__(self, "eigenvalues", eig)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size


def _sorted_eigenvalues(mat: np.ndarray) -> np.ndarray:
    try:
        eig = np.linalg.eigvals(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"dense eigensolver failed on a {mat.shape[0]}x{mat.shape[0]} matrix "
            f"(norm {np.linalg.norm(mat):.3e})"
        ) from exc
    order = np.lexsort((eig.imag, eig.real))
    return eig[order]


def _hs_norms(g: Generator, ts: np.ndarray) -> np.ndarray:
    stacks = evolve_many(g, ts)
    with np.errstate(over="ignore"):  # strongly growing semigroups -> inf
        return np.sqrt(np.sum(np.abs(stacks) ** 2, axis=(1, 2)))


def _m1_constant(gA: Generator, g_pert: Generator, dom: GridDomain) -> float:
    t_floor = max(dom.h_max**2, 1e-4)
    ts = np.geomspace(t_floor, GAMMA, M1_SAMPLES)
    diff = _hs_norms(g_pert, ts) - _hs_norms(gA, ts)
    return max(0.0, float(np.max(diff)))


def perturbed_spectrum(gA: Generator, v: Potential) -> SpectralReport:
    """Spectrum of A + diag(V), sorted, with the trace-constant measurement.

    ``gA`` is expected to come from :func:`build_dirichlet_laplacian` on
    the potential's domain.
    """
    if v.dom.num_nodes != gA.dim:
        raise InputError("potential grid does not match the generator dimension")
    h_mat = gA.a.entries + np.diag(v.samples)
    eig = _sorted_eigenvalues(h_mat)
    g_pert = Generator(h_mat)
    m1 = _m1_constant(gA, g_pert, v.dom)
    return SpectralReport(
        eigenvalues=eig,
        weyl_constant=weyl_constant(v.dom.volume, v.dom.d),
        volume=v.dom.volume,
        d=v.dom.d,
        m1=m1,
    )


class WeylCheck(NamedTuple):
    n_star: Optional[int]
    margins: np.ndarray
    bounds: np.ndarray


def weyl_lower_bound_check(
    rep: SpectralReport, dom: GridDomain, n_check: int
) -> WeylCheck:
    """Margins Re(lambda_n) - c n^(2/d) for n = 1..n_check.

    ``n_star`` is the first index from which every margin through
    ``n_check`` is nonnegative, or None when even the last margin is
    negative (a bound violation; the caller decides how loud to be).
    Only the lower third of the grid spectrum is eligible, the upper
    part being discretization artifact.
    """
    reliable = rep.dim // 3
    if not 1 <= n_check <= reliable:
        raise InputError(
            f"n_check must lie in [1, {reliable}] (first third of the spectrum), "
            f"got {n_check}"
        )
    ns = np.arange(1, n_check + 1)
    bounds = rep.weyl_constant * ns ** (2.0 / rep.d)
    margins = rep.eigenvalues[:n_check].real - bounds
    n_star: Optional[int] = None
    if margins[-1] >= 0:
        negative = np.nonzero(margins < 0)[0]
        n_star = int(negative[-1]) + 2 if negative.size else 1
    return WeylCheck(n_star=n_star, margins=margins, bounds=bounds)


class TraceCheck(NamedTuple):
    ts: np.ndarray
    hs_bound_ok: Dict[float, bool]
    series_bound_ok: Dict[float, bool]
    m1: float
    hs_lhs: Dict[float, float]
    hs_rhs: Dict[float, float]
    series_lhs: Dict[float, float]
    series_rhs: Dict[float, float]
    eps_disc: Dict[float, float]


def heat_trace_check(
    gA: Generator,
    v: Potential,
    dom: GridDomain,
    ts: Sequence[float],
    eps_disc: Optional[float] = None,
) -> TraceCheck:
    """Hilbert-Schmidt and eigenvalue-series heat-trace bounds.

    Per time t, checks

    * ||exp(-A0 t/2)||_2^2 <= |Omega| / (4 pi t)^{d/2} * (1 + eps), and
    * sum_k exp(-Re(lambda_k) t) <= 2 |Omega| / (4 pi t)^{d/2} + 2 M1^2 + eps,

    where the discretization slack eps is estimated from a coarse/fine
    refinement pair unless supplied explicitly.
    """
    ts = np.sort(np.asarray(ts, dtype=float))
    if np.any(ts <= 0):
        raise InputError("sample times must be positive")
    if float(ts[0]) < dom.h_max**2:
        raise ResolutionError(
            f"smallest time {ts[0]:.3g} is below the mesh scale h^2 = {dom.h_max ** 2:.3g}"
        )
    if np.any(ts > GAMMA * (1 + 1e-12)):
        raise InputError(f"sample times must lie within (0, {GAMMA}]")

    rep = perturbed_spectrum(gA, v)
    mu = np.sort(gA.eigenvalues.real)
    re_lam = rep.eigenvalues.real

    def lhs_pair(mu_vals, lam_vals):
        hs = {float(t): float(np.sum(np.exp(-mu_vals * t))) for t in ts}
        series = {float(t): float(np.sum(np.exp(-lam_vals * t))) for t in ts}
        return hs, series

    hs_lhs, series_lhs = lhs_pair(mu, re_lam)

    if eps_disc is None:
        coarse_dom = dom.with_n(max(dom.n // 2, 8))
        coarse_gA = build_dirichlet_laplacian(coarse_dom)
        coarse_rep = perturbed_spectrum(coarse_gA, v.regrid(coarse_dom))
        mu_c = np.sort(coarse_gA.eigenvalues.real)
        hs_c, series_c = lhs_pair(mu_c, coarse_rep.eigenvalues.real)
        # Richardson slack for an O(h^2) quantity measured at h and 2h
        eps_map = {
            t: (4.0 / 3.0)
            * max(abs(hs_lhs[t] - hs_c[t]), abs(series_lhs[t] - series_c[t]))
            + 1e-12
            for t in hs_lhs
        }
    else:
        eps_map = {float(t): float(eps_disc) for t in ts}

    hs_rhs, series_rhs, hs_ok, series_ok = {}, {}, {}, {}
    for t in hs_lhs:
        envelope = rep.volume / (4.0 * math.pi * t) ** (rep.d / 2.0)
        hs_rhs[t] = envelope * (1.0 + eps_map[t] / max(envelope, 1e-300))
        series_rhs[t] = 2.0 * envelope + 2.0 * rep.m1**2 + eps_map[t]
        hs_ok[t] = hs_lhs[t] <= hs_rhs[t]
        series_ok[t] = series_lhs[t] <= series_rhs[t]
    return TraceCheck(
        ts=ts, hs_bound_ok=hs_ok, series_bound_ok=series_ok, m1=rep.m1,
        hs_lhs=hs_lhs, hs_rhs=hs_rhs, series_lhs=series_lhs,
        series_rhs=series_rhs, eps_disc=eps_map,
    )


# -- report emission -----------------------------------------------------


def report_as_dict(
    rep: SpectralReport,
    weyl: Optional[WeylCheck] = None,
    trace: Optional[TraceCheck] = None,
) -> dict:
    """JSON-ready dictionary view of a spectral report."""
    out = {
        "eigenvalues": [[float(z.real), float(z.imag)] for z in rep.eigenvalues],
        "weyl_constant": rep.weyl_constant,
        "volume": rep.volume,
        "dimension": rep.d,
        "m1": rep.m1,
        "gamma": rep.gamma,
    }
    if weyl is not None:
        out["n_star"] = weyl.n_star
        out["margins"] = [float(m) for m in weyl.margins]
    if trace is not None:
        out["trace_checks"] = [
            {
                "t": float(t),
                "hs_ok": bool(trace.hs_bound_ok[t]),
                "series_ok": bool(trace.series_bound_ok[t]),
                "hs_lhs": trace.hs_lhs[t],
                "hs_rhs": trace.hs_rhs[t],
                "series_lhs": trace.series_lhs[t],
                "series_rhs": trace.series_rhs[t],
                "eps_disc": trace.eps_disc[t],
            }
            for t in sorted(trace.hs_bound_ok)
        ]
    return out


def write_report_json(path, rep, weyl=None, trace=None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report_as_dict(rep, weyl, trace), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report_csv(path, rep: SpectralReport, weyl: WeylCheck) -> None:
    """Rows of (n, Re lambda_n, Im lambda_n, bound, margin)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "re_lambda", "im_lambda", "bound", "margin"])
        for k, margin in enumerate(weyl.margins):
            lam = rep.eigenvalues[k]
            writer.writerow([
                k + 1,
                repr(float(lam.real)),
                repr(float(lam.imag)),
                repr(float(weyl.bounds[k])),
                repr(float(margin)),
            ])
