"""Scalar majorant functions and their convolution calculus.

A :class:`ScalarMajorant` is a nonnegative function on (0, t_max]
sampled on a geometrically graded grid, optionally with an exact
callable attached.  Behaviour outside the grid is controlled by two
declared exponents:

* ``integrable_exponent`` alpha < 1: value ~ c * t^(-alpha) as t -> 0,
  so integrals over (0, b) can be taken analytically;
* ``growth_exponent`` a: value <= value(t_max) * exp(a (t - t_max))
  beyond the grid, which is what the submultiplicative semigroup
  estimate provides for operator-norm majorants.

On top of these the module builds Laplace-type weighted integrals,
pairwise convolutions, and upper bounds for tails of iterated
convolution series sum_{n >= start} (envelope * kernel^{[n*]})(t) with a
certified geometric remainder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DivergenceError, InputError

__all__ = [
    "ScalarMajorant",
    "graded_grid",
    "convolve",
    "convolve_many",
    "CachedConvolver",
    "majorant_integral",
    "weighted_integral",
    "iterated_convolution_tail",
    "TailEstimate",
]

# Grid grading: at least this many sample points per decade.
GRID_POINTS_PER_DECADE = 64

# Quadrature: geometric panels per decade and Gauss-Legendre order.
QUAD_PANELS_PER_DECADE = 8
QUAD_ORDER = 7

# Relative size of the analytically integrated endpoint caps.
CAP_FRACTION = 1e-9

# Largest exponential weight tried when searching for a convergence
# certificate, as an offset above the growth rate.
OMEGA_SEARCH_CAP = float(2**20)


def graded_grid(t_min: float, t_max: float, per_decade: int = GRID_POINTS_PER_DECADE) -> np.ndarray:
    """Geometric grid on [t_min, t_max] with ``per_decade`` points per decade."""
    if not (0 < t_min < t_max):
        raise InputError(f"need 0 < t_min < t_max, got ({t_min}, {t_max})")
    decades = math.log10(t_max / t_min)
    n = max(int(math.ceil(decades * per_decade)) + 1, 2)
    return np.geomspace(t_min, t_max, n)


@dataclass(frozen=True)
class ScalarMajorant:
    """Sampled nonnegative function on (0, t_max] on a graded grid."""

    grid: np.ndarray
    values: np.ndarray
    integrable_exponent: Optional[float] = None
    growth_exponent: Optional[float] = None
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise InputError("grid must be a 1-d array with at least two points")
        if grid[0] <= 0 or np.any(np.diff(grid) <= 0):
            raise InputError("grid must be strictly increasing and positive")
        if values.shape != grid.shape:
            raise InputError("values must match the grid shape")
        if np.any(~np.isfinite(values)) or np.any(values < 0):
            raise InputError("values must be finite and nonnegative")
        if self.integrable_exponent is not None and not self.integrable_exponent < 1.0:
            raise InputError(
                f"integrable_exponent must be < 1, got {self.integrable_exponent}"
            )
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    # -- construction ------------------------------------------------

    @classmethod
    def from_function(
        cls,
        fn: Callable[[np.ndarray], np.ndarray],
        t_max: float,
        t_min: Optional[float] = None,
        per_decade: int = GRID_POINTS_PER_DECADE,
        integrable_exponent: Optional[float] = None,
        growth_exponent: Optional[float] = None,
    ) -> "ScalarMajorant":
        """Sample a vectorized callable; the callable is kept for exact
        evaluation between grid points."""
        if t_min is None:
            t_min = t_max * 1e-4
        grid = graded_grid(t_min, t_max, per_decade)
        values = np.asarray(fn(grid), dtype=float)
        return cls(grid, values, integrable_exponent, growth_exponent, fn)

    @classmethod
    def from_samples(
        cls,
        grid: Sequence[float],
        values: Sequence[float],
        integrable_exponent: Optional[float] = None,
        growth_exponent: Optional[float] = None,
    ) -> "ScalarMajorant":
        return cls(np.asarray(grid, float), np.asarray(values, float),
                   integrable_exponent, growth_exponent)

    # -- basic queries -----------------------------------------------

    @property
    def t_max(self) -> float:
        return float(self.grid[-1])

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.values == 0.0))

    def growth_rate(self) -> float:
        """Declared growth exponent, or a semilog slope fitted over the
        last decade of samples (with a small safety margin, since the
        fitted value feeds upper-bound certificates)."""
        if self.growth_exponent is not None:
            return float(self.growth_exponent)
        cached = self.__dict__.get("_growth_cache")
        if cached is not None:
            return cached
        if self.is_zero:
            rate = 0.0
        else:
            mask = self.grid >= self.t_max / 10.0
            ts = self.grid[mask]
            vs = np.maximum(self.values[mask], np.max(self.values) * 1e-300)
            if ts.size < 2:
                rate = 0.0
            else:
                slope = float(np.polyfit(ts, np.log(vs), 1)[0])
                rate = slope + 0.05 * (1.0 + abs(slope))
        object.__setattr__(self, "_growth_cache", rate)
        return rate

    def zero_exponent(self) -> float:
        """The power alpha in value ~ c * t^(-alpha) used below the grid."""
        return 0.0 if self.integrable_exponent is None else float(self.integrable_exponent)

    # -- evaluation --------------------------------------------------

    def eval(self, s) -> np.ndarray:
        """Evaluate at positive times (vectorized).

        Uses the exact callable when present.  Sampled majorants use
        piecewise power-law (log-log linear) interpolation, which is
        exact for pure power laws; below the grid the declared
        ``integrable_exponent`` model applies and above it the
        exponential growth model.
        """
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        s = np.atleast_1d(s).astype(float)
        if np.any(s <= 0):
            raise InputError("majorants are defined for t > 0 only")
        if self.fn is not None:
            out = np.asarray(self.fn(s), dtype=float)
        elif self.is_zero:
            out = np.zeros_like(s)
        else:
            out = self._interp(s)
        return float(out[0]) if scalar else out

    __call__ = eval

    def _tables(self):
        cached = self.__dict__.get("_table_cache")
        if cached is None:
            floor = np.max(self.values) * 1e-300
            cached = (np.log(self.grid), np.log(np.maximum(self.values, floor)))
            object.__setattr__(self, "_table_cache", cached)
        return cached

    def _interp(self, s: np.ndarray) -> np.ndarray:
        grid, values = self.grid, self.values
        log_grid, log_values = self._tables()
        out = np.exp(np.interp(np.log(s), log_grid, log_values))
        below = s < grid[0]
        if np.any(below):
            alpha = self.zero_exponent()
            out[below] = values[0] * (s[below] / grid[0]) ** (-alpha)
        above = s > grid[-1]
        if np.any(above):
            a = self.growth_rate()
            out[above] = values[-1] * np.exp(a * (s[above] - grid[-1]))
        return out

    def integral_near_zero(self, b) -> np.ndarray:
        """int_0^b of the function under the power-law model anchored at b.

        Exact for a pure power t^(-alpha); for bounded majorants
        (alpha = 0) this is the rectangle rule at the right endpoint,
        adequate because the caps are a ``CAP_FRACTION`` of the range.
        """
        alpha = self.zero_exponent()
        b = np.asarray(b, dtype=float)
        return self.eval(b) * b / (1.0 - alpha)

    def sup_on(self, t: float) -> float:
        """Supremum over (0, t], using grid samples plus the endpoint
        models.  Requires a majorant bounded near zero."""
        if self.zero_exponent() > 0:
            raise InputError("sup_on requires a majorant bounded near 0")
        if self.is_zero:
            return 0.0
        mask = self.grid <= t
        cands = [float(self.eval(min(t, self.grid[0]))), float(self.eval(t))]
        if np.any(mask):
            cands.append(float(np.max(self.values[mask])))
        cands.append(float(self.values[0]))  # limit value for alpha <= 0
        return max(cands)


# -- quadrature helpers ----------------------------------------------


@lru_cache(maxsize=64)
def _gauss_unit(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


@lru_cache(maxsize=64)
def _geometric_panel_nodes(a_over_b: float, panels: int, order: int):
    """Nodes/weights for int_a^b with a/b = ``a_over_b`` in units of b."""
    bounds = np.geomspace(a_over_b, 1.0, panels + 1)
    x, w = _gauss_unit(order)
    lo, hi = bounds[:-1], bounds[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _panel_rule(a: float, b: float):
    """Geometric Gauss-Legendre rule on [a, b] (0 < a < b)."""
    decades = math.log10(b / a)
    panels = max(int(math.ceil(decades * QUAD_PANELS_PER_DECADE)), 1)
    nodes, weights = _geometric_panel_nodes(a / b, panels, QUAD_ORDER)
    return nodes * b, weights * b


def majorant_integral(f: ScalarMajorant, t: float) -> float:
    """int_0^t f(s) ds with the near-zero cap taken analytically."""
    t = float(t)
    if not 0 < t <= f.t_max:
        raise InputError(f"t must lie in (0, t_max], got {t}")
    s_min = t * CAP_FRACTION
    nodes, weights = _panel_rule(s_min, t)
    return float(f.integral_near_zero(s_min)) + float(np.dot(weights, f.eval(nodes)))


# -- convolution ------------------------------------------------------


@lru_cache(maxsize=8)
def _convolution_rule(cap_fraction: float):
    """Scale-free nodes/weights for int_{cap}^{1/2} in units of t."""
    decades = math.log10(0.5 / cap_fraction)
    panels = max(int(math.ceil(decades * QUAD_PANELS_PER_DECADE)), 1)
    nodes, weights = _geometric_panel_nodes(cap_fraction / 0.5, panels, QUAD_ORDER)
    return nodes * 0.5, weights * 0.5


class CachedConvolver:
    """``(fixed * g)(t)`` over a frozen target set, with the fixed
    factor's node evaluations amortized across many ``g``.

    The interval (0, t) is split at t/2 and mapped to one dimensionless
    node set, so the panel grading is identical (relative to t) for
    every target.  The two panels touching the endpoints are integrated
    analytically against the declared power-law exponents.
    """

    def __init__(self, fixed: ScalarMajorant, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if np.any(ts <= 0):
            raise InputError("convolution times must be positive")
        if np.any(ts > fixed.t_max * (1 + 1e-12)):
            raise InputError(f"t exceeds t_max = {fixed.t_max} of the majorant")
        xi, w = _convolution_rule(CAP_FRACTION)
        self.ts = ts
        self.weights = w
        self.nodes = ts[:, None] * xi[None, :]            # in (cap, t/2]
        self.nodes_mirror = ts[:, None] * (1.0 - xi)[None, :]
        self.caps = ts * CAP_FRACTION
        self.fixed_nodes = fixed.eval(self.nodes)
        self.fixed_mirror = fixed.eval(self.nodes_mirror)
        self.fixed_ts = fixed.eval(ts)
        self.fixed_cap_mass = fixed.integral_near_zero(self.caps)
        self.t_lim = fixed.t_max

    def apply(self, g: ScalarMajorant) -> np.ndarray:
        if self.ts[-1] > g.t_max * (1 + 1e-12):
            raise InputError(f"t exceeds t_max = {g.t_max} of the majorant")
        inner = self.ts * (
            (self.fixed_mirror * g.eval(self.nodes)) @ self.weights
            + (self.fixed_nodes * g.eval(self.nodes_mirror)) @ self.weights
        )
        caps = (self.fixed_ts * g.integral_near_zero(self.caps)
                + g.eval(self.ts) * self.fixed_cap_mass)
        return inner + caps


def convolve_many(f: ScalarMajorant, g: ScalarMajorant, ts) -> np.ndarray:
    """Vectorized ``(f * g)(t) = int_0^t f(t-s) g(s) ds`` over times ts."""
    return CachedConvolver(f, ts).apply(g)


def convolve(f: ScalarMajorant, g: ScalarMajorant, t: float) -> float:
    """``(f * g)(t)`` for a single positive time; see :func:`convolve_many`."""
    return float(convolve_many(f, g, np.array([float(t)]))[0])


# -- weighted integrals ------------------------------------------------


def weighted_integral(f: ScalarMajorant, omega: float) -> float:
    """``int_0^inf exp(-omega s) f(s) ds``.

    The integral over the grid is taken by panel quadrature; the part
    beyond t_max is bounded analytically with the exponential growth
    model, which is what the submultiplicative estimate
    f(t_max + u) <= f(t_max) exp(a u) provides.  Requires
    ``omega`` strictly above the growth rate ``a``.
    """
    omega = float(omega)
    if f.is_zero:
        return 0.0
    a = f.growth_rate()
    if not omega > a:
        raise DivergenceError(
            f"weight omega = {omega} does not dominate the growth rate {a}"
        )
    s_min = float(f.grid[0]) * 1e-6
    nodes, weights = _panel_rule(s_min, f.t_max)
    body = float(np.dot(weights, np.exp(-omega * nodes) * f.eval(nodes)))
    head = float(f.integral_near_zero(s_min))  # exp(-omega s) ~ 1 below s_min
    tail = float(f.eval(f.t_max)) * math.exp(-omega * f.t_max) / (omega - a)
    return head + body + tail


# -- iterated convolution tails ----------------------------------------

# Grid density used for the sampled convolution iterates; power-law
# interpolation keeps these exact on power-law data, so the iterates
# tolerate a coarser grid than the primary majorants.
ITERATE_POINTS_PER_DECADE = 16


class TailEstimate(NamedTuple):
    value: float
    terms_used: int
    omega: float
    rho: float


def _find_certificate_weight(kernel: ScalarMajorant) -> tuple[float, float]:
    """Smallest weight of the form growth + 2^k whose weighted integral
    of the kernel drops below 1/2."""
    base = kernel.growth_rate()
    offset = 1.0
    while offset <= OMEGA_SEARCH_CAP:
        omega = base + offset
        rho = weighted_integral(kernel, omega)
        if rho < 0.5:
            return omega, rho
        offset *= 2.0
    raise DivergenceError(
        "no exponential weight below the search cap certifies convergence "
        "of the iterated convolution series"
    )


def _weighted_sup(f: ScalarMajorant, omega: float) -> float:
    """sup over (0, inf) of exp(-omega u) f(u) for f bounded near 0."""
    if f.zero_exponent() > 0:
        raise InputError(
            "the convolution envelope must be bounded near 0 for the "
            "geometric remainder certificate"
        )
    if f.is_zero:
        return 0.0
    cands = np.exp(-omega * f.grid) * f.values
    sup = float(np.max(cands))
    sup = max(sup, float(f.values[0]))  # limiting value toward 0
    if f.growth_rate() >= omega:  # pragma: no cover - envelope check
        raise DivergenceError("envelope grows faster than the weight")
    return sup


def iterated_convolution_tail(
    kernel: ScalarMajorant,
    envelope: ScalarMajorant,
    start: int,
    t: float,
    tol: float,
) -> TailEstimate:
    """Certified upper bound for ``sum_{n >= start} (envelope * kernel^{[n*]})(t)``.

    ``kernel^{[n*]}`` is the n-fold convolution power.  Terms are
    accumulated until the running term falls below ``tol`` and a
    geometric remainder certificate is below ``tol``; the certificate is
    the smaller of

    * the Laplace bound  exp(omega t) * sup(e^{-omega u} envelope) *
      rho^{n+1} / (1 - rho)  with rho = int e^{-omega s} kernel < 1/2, and
    * the mass bound  sup_{(0,t]} envelope * J^{n+1} / (1 - J) with
      J = int_0^t kernel, valid once J < 1 (and vanishing as t -> 0).

    The returned value is the partial sum plus the remainder bound, so it
    dominates every partial sum and exceeds the true series by at most
    ``tol`` plus quadrature error.
    """
    if start < 1:
        raise InputError("start index must be >= 1")
    t = float(t)
    if not 0 < t <= min(kernel.t_max, envelope.t_max):
        raise InputError(f"t must lie in (0, t_max], got {t}")
    if tol < 0:
        raise InputError("tol must be nonnegative")
    if kernel.is_zero:
        return TailEstimate(value=0.0, terms_used=0, omega=0.0, rho=0.0)

    omega, rho = _find_certificate_weight(kernel)
    env_growth = envelope.growth_rate()
    if omega <= env_growth:
        omega = env_growth + 1.0
        rho = weighted_integral(kernel, omega)
    phi_sup = _weighted_sup(envelope, omega)
    sup_t = envelope.sup_on(t)
    mass_t = majorant_integral(kernel, t)

    def remainder(n: int) -> float:
        lap = math.exp(omega * t) * phi_sup * rho ** (n + 1) / (1.0 - rho)
        if mass_t < 1.0:
            mass = sup_t * mass_t ** (n + 1) / (1.0 - mass_t)
            return min(lap, mass)
        return lap

    if remainder(start - 1) <= tol:
        return TailEstimate(value=remainder(start - 1), terms_used=0,
                            omega=omega, rho=rho)

    iterate_grid = graded_grid(float(kernel.grid[0]), kernel.t_max,
                               ITERATE_POINTS_PER_DECADE)
    step = CachedConvolver(kernel, iterate_grid)
    term_eval = CachedConvolver(envelope, np.array([t]))
    alpha1 = kernel.zero_exponent()
    growth1 = kernel.growth_rate()
    mu = kernel
    alpha = alpha1
    level = 1
    value = 0.0
    terms_used = 0
    max_level = start + 200
    while True:
        if level >= start:
            term = float(term_eval.apply(mu)[0])
            value += term
            terms_used += 1
            rem = remainder(level)
            if term < tol and rem < tol:
                return TailEstimate(value=value + rem, terms_used=terms_used,
                                    omega=omega, rho=rho)
        level += 1
        if level > max_level:  # pragma: no cover - rho < 1/2 forces exit
            raise DivergenceError("iterated convolution tail failed to settle")
        alpha = alpha + alpha1 - 1.0
        mu = ScalarMajorant(
            iterate_grid,
            step.apply(mu),
            integrable_exponent=min(alpha, 0.99),
            growth_exponent=growth1,
        )
