"""Discretized Dirichlet Laplacians, potentials, and membership probes.

Domains are finite-difference grids: an interval (0, L), a rectangle
(0, L1) x (0, L2), or a symmetric truncated line [-R, R] standing in
for the whole line (the potential's mass outside the box is expected to
be negligible; Gaussian kernels localize, so the truncation error is
quantifiable).  Potentials are complex node samples; multiplication
operators are diagonal in the nodal basis.  Function-space norms carry
the cell volume h^d so they are stable under refinement, while operator
Schatten norms need no weight (the nodal basis is orthogonal up to one
global scalar factor, which cancels in singular values of products of
the diagonal potential with the propagator).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import InputError, ResolutionError
from .schatten import DenseOperator, IndexLike, _as_index, schatten_norm
from .semigroup import Generator, evolve_many

__all__ = [
    "GridDomain",
    "Potential",
    "parse_potential_expression",
    "HeatKernelModel",
    "dirichlet_gaussian_model",
    "build_dirichlet_laplacian",
    "heat_kernel_bound_check",
    "KernelBoundCheck",
    "birman_solomjak_norm",
    "bq_membership_probe",
    "MembershipProbe",
]

MIN_POINTS = 8


@dataclass(frozen=True)
class GridDomain:
    """Uniform interior grid of a box domain with Dirichlet walls.

    ``n`` interior points per axis; the spacing per axis is
    length / (n + 1).  ``kind`` records the modeling intent:
    ``truncated-line`` is a proxy for the real line.
    """

    kind: str
    lengths: Tuple[float, ...]
    origin: Tuple[float, ...]
    n: int

    def __post_init__(self):
        if self.kind not in ("interval", "rectangle", "truncated-line"):
            raise InputError(f"unknown domain kind: {self.kind!r}")
        if len(self.lengths) not in (1, 2):
            raise InputError("only 1- and 2-dimensional grids are supported")
        if any(not length > 0 for length in self.lengths):
            raise InputError("domain lengths must be positive")
        if self.n < MIN_POINTS:
            raise InputError(f"need at least {MIN_POINTS} interior points, got {self.n}")

    # -- factories -----------------------------------------------------

    @classmethod
    def interval(cls, length: float, n: int) -> "GridDomain":
        return cls("interval", (float(length),), (0.0,), int(n))

    @classmethod
    def rectangle(cls, length1: float, length2: float, n: int) -> "GridDomain":
        return cls("rectangle", (float(length1), float(length2)), (0.0, 0.0), int(n))

    @classmethod
    def truncated_line(cls, radius: float, n: int) -> "GridDomain":
        return cls("truncated-line", (2.0 * float(radius),), (-float(radius),), int(n))

    # -- geometry --------------------------------------------------------

    @property
    def d(self) -> int:
        return len(self.lengths)

    @property
    def h(self) -> Tuple[float, ...]:
        return tuple(length / (self.n + 1) for length in self.lengths)

    @property
    def h_max(self) -> float:
        return max(self.h)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def num_nodes(self) -> int:
        return self.n**self.d

    def axis_nodes(self, axis: int) -> np.ndarray:
        step = self.h[axis]
        return self.origin[axis] + step * np.arange(1, self.n + 1)

    def node_coords(self) -> np.ndarray:
        """Interior node coordinates, shape (num_nodes, d), C-ordered."""
        axes = [self.axis_nodes(i) for i in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def with_n(self, n: int) -> "GridDomain":
        return GridDomain(self.kind, self.lengths, self.origin, int(n))


def _lap1d(n: int, h: float) -> np.ndarray:
    diag = np.full(n, 2.0 / h / h)
    off = np.full(n - 1, -1.0 / h / h)
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def build_dirichlet_laplacian(dom: GridDomain) -> Generator:
    """Second-order finite-difference -Laplace with Dirichlet walls.

    Symmetric positive definite; the 1D stencil has the classical
    eigenvalues (4/h^2) sin^2(k pi / (2(n+1))).
    """
    if dom.d == 1:
        mat = _lap1d(dom.n, dom.h[0])
    else:
        lx = _lap1d(dom.n, dom.h[0])
        ly = _lap1d(dom.n, dom.h[1])
        eye = np.eye(dom.n)
        mat = np.kron(lx, eye) + np.kron(eye, ly)
    return Generator(mat.astype(np.complex128))


# -- potentials --------------------------------------------------------


_FACTOR_SPLIT = re.compile(r"\*")


def _split_factors(expr: str) -> list:
    """Split a product on '*' at parenthesis depth zero."""
    parts, depth, cur = [], 0, []
    for ch in expr:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise InputError(f"unbalanced parentheses in {expr!r}")
        if ch == "*" and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise InputError(f"unbalanced parentheses in {expr!r}")
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _parse_complex(token: str) -> complex:
    token = token.strip()
    if token.startswith("(") and token.endswith(")"):
        token = token[1:-1].strip()
    try:
        return complex(token.replace(" ", ""))
    except ValueError:
        try:
            return complex(token.replace(" ", "").replace("i", "j"))
        except ValueError:
            raise InputError(f"cannot parse {token!r} as a complex constant") from None


def parse_potential_expression(expr: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile a small product grammar into a callable of x (1D only).

    Factors are separated by '*' and may be:

    * a complex constant, e.g. ``2``, ``1.5j``, ``(1+2j)``;
    * ``x`` or ``x^k`` for a monomial;
    * ``poly(c0,c1,...)`` for c0 + c1 x + c2 x^2 + ...;
    * ``gauss(a)`` or ``gauss(a,c)`` for exp(-a (x - c)^2).

    Example: ``(1+1j)*poly(0,1)*gauss(0.5)`` is (1+i) x exp(-x^2/2).
    """
    factors = []
    for token in _split_factors(expr):
        low = token.lower()
        if low == "x":
            factors.append(lambda x: x.astype(np.complex128))
        elif low.startswith("x^"):
            k = int(token[2:])
            factors.append(lambda x, k=k: x.astype(np.complex128) ** k)
        elif low.startswith("gauss(") and token.endswith(")"):
            args = [_parse_complex(a) for a in token[6:-1].split(",")]
            if len(args) == 1:
                a, c = args[0], 0.0
            elif len(args) == 2:
                a, c = args
            else:
                raise InputError(f"gauss takes 1 or 2 arguments, got {token!r}")
            factors.append(lambda x, a=a, c=c: np.exp(-a * (x - c) ** 2))
        elif low.startswith("poly(") and token.endswith(")"):
            coeffs = [_parse_complex(a) for a in token[5:-1].split(",")]
            factors.append(
                lambda x, cs=coeffs: sum(
                    c * x.astype(np.complex128) ** k for k, c in enumerate(cs)
                )
            )
        else:
            value = _parse_complex(token)
            factors.append(lambda x, v=value: np.full_like(x, v, dtype=np.complex128))
    if not factors:
        raise InputError(f"empty potential expression: {expr!r}")

    def evaluate(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.ones_like(x, dtype=np.complex128)
        for factor in factors:
            out = out * factor(x)
        return out

    return evaluate


@dataclass(frozen=True)
class Potential:
    """Complex node samples of a potential on a grid domain.

    ``l2_norm`` approximates the continuum L2 norm with the cell-volume
    weight (boundary values vanish, so nodal summation is the
    trapezoidal value).  Block norms are cached per summability index by
    :func:`birman_solomjak_norm`.
    """

    dom: GridDomain
    samples: np.ndarray
    expression: Optional[str] = None
    fn: Optional[Callable] = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128).reshape(-1).copy()
        if samples.size != self.dom.num_nodes:
            raise InputError(
                f"expected {self.dom.num_nodes} samples, got {samples.size}"
            )
        if not np.all(np.isfinite(samples.view(np.float64))):
            raise InputError("potential samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        norm = math.sqrt(self.dom.cell_volume * float(np.sum(np.abs(samples) ** 2)))
        object.__setattr__(self, "l2_norm", norm)
        object.__setattr__(self, "bs_norms", {})

    # -- constructors --------------------------------------------------

    @classmethod
    def zero(cls, dom: GridDomain) -> "Potential":
        return cls(dom, np.zeros(dom.num_nodes, dtype=np.complex128))

    @classmethod
    def from_callable(cls, dom: GridDomain, fn: Callable, expression: Optional[str] = None) -> "Potential":
        coords = dom.node_coords()
        arg = coords[:, 0] if dom.d == 1 else coords
        return cls(dom, np.asarray(fn(arg), dtype=np.complex128), expression, fn)

    @classmethod
    def from_expression(cls, dom: GridDomain, expr: str) -> "Potential":
        if dom.d != 1:
            raise InputError("expression potentials are supported on 1-d grids only")
        return cls.from_callable(dom, parse_potential_expression(expr), expression=expr)

    @classmethod
    def from_csv(cls, dom: GridDomain, path: str) -> "Potential":
        """Load (coordinate, Re V, Im V) rows; linear interpolation onto
        the grid, zero outside the tabulated range."""
        if dom.d != 1:
            raise InputError("CSV potentials are supported on 1-d grids only")
        data = np.atleast_2d(np.loadtxt(path, delimiter=",", comments="#", dtype=float))
        if data.shape[1] != 3:
            raise InputError(f"expected 3 columns (x, Re V, Im V) in {path}")
        order = np.argsort(data[:, 0])
        xs, re_v, im_v = data[order, 0], data[order, 1], data[order, 2]
        nodes = dom.axis_nodes(0)
        vals = np.interp(nodes, xs, re_v, left=0.0, right=0.0) + 1j * np.interp(
            nodes, xs, im_v, left=0.0, right=0.0
        )
        return cls(dom, vals)

    # -- derived quantities ---------------------------------------------

    def delta_norm(self, delta: float) -> float:
        """Weighted norm || (1 + |x|^2)^{delta/2} V ||_{L2}."""
        coords = self.dom.node_coords()
        w = (1.0 + np.sum(coords**2, axis=1)) ** (float(delta) / 2.0)
        return math.sqrt(
            self.dom.cell_volume * float(np.sum(w**2 * np.abs(self.samples) ** 2))
        )

    def scaled(self, c: complex) -> "Potential":
        return Potential(self.dom, c * self.samples, None, None)

    def regrid(self, new_dom: GridDomain) -> "Potential":
        """Resample on another grid: exactly when a callable is known,
        else by linear interpolation (1-d)."""
        if self.fn is not None:
            return Potential.from_callable(new_dom, self.fn, self.expression)
        if self.dom.d != 1 or new_dom.d != 1:
            raise InputError("sample-based regridding is supported on 1-d grids only")
        old_nodes = self.dom.axis_nodes(0)
        new_nodes = new_dom.axis_nodes(0)
        vals = np.interp(new_nodes, old_nodes, self.samples.real, left=0.0, right=0.0)
        vals = vals + 1j * np.interp(new_nodes, old_nodes, self.samples.imag, left=0.0, right=0.0)
        return Potential(new_dom, vals)

    def diagonal_operator(self) -> DenseOperator:
        return DenseOperator(np.diag(self.samples))


def birman_solomjak_norm(v: Potential, p: float, cube_size: float = 1.0) -> float:
    """Lattice-block norm: l^p aggregation over unit cubes of local L2 norms.

    Cubes of side ``cube_size`` are centered at the scaled integer
    lattice; nodes outside any cube simply pad with zero blocks.  For
    1 <= p <= 2 this dominates the plain L2 norm.
    """
    p = float(p)
    if not 1.0 <= p <= 2.0:
        raise InputError(f"block index must satisfy 1 <= p <= 2, got {p}")
    if not cube_size > 0:
        raise InputError("cube_size must be positive")
    cache: Dict = getattr(v, "bs_norms")
    key = (p, cube_size)
    if key in cache:
        return cache[key]
    coords = v.dom.node_coords()
    # half-open cubes [beta - 1/2, beta + 1/2); round-half-up keeps nodes
    # sitting exactly on a face in the cube above
    beta = np.floor(coords / cube_size + 0.5).astype(np.int64)
    _, inverse = np.unique(beta, axis=0, return_inverse=True)
    weights = v.dom.cell_volume * np.abs(v.samples) ** 2
    block_sq = np.bincount(inverse, weights=weights)
    block_norms = np.sqrt(block_sq)
    value = float(np.sum(block_norms**p) ** (1.0 / p))
    cache[key] = value
    return value


# -- heat kernel bounds --------------------------------------------------


@dataclass(frozen=True)
class HeatKernelModel:
    """Pointwise Gaussian kernel model k(t) exp(-b |x-y|^2 / t).

    ``k_exponent`` declares the power-law blow-up of the prefactor near
    t = 0 (k(t) ~ c t^{-k_exponent}); integrability of k(s) s^{d/4} on
    (0, 1) requires k_exponent - d/4 < 1, which is checked on
    construction along with a quadrature probe.
    """

    b: float
    k_of_t: Callable[[float], float]
    d: int
    k_exponent: float

    def __post_init__(self):
        if not self.b > 0:
            raise InputError("Gaussian decay coefficient b must be positive")
        if self.d not in (1, 2, 3):
            raise InputError("kernel model dimension must be 1, 2 or 3")
        if not self.k_exponent - self.d / 4.0 < 1.0:
            raise InputError(
                "prefactor exponent violates integrability of k(s) s^{d/4} near 0"
            )
        probe = np.geomspace(1e-8, 1.0, 257)
        vals = np.array([self.k_of_t(t) for t in probe]) * probe ** (self.d / 4.0)
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise InputError("prefactor samples must be finite and nonnegative")


def dirichlet_gaussian_model(d: int) -> HeatKernelModel:
    """The free/Dirichlet heat-kernel bound (4 pi t)^{-d/2} e^{-|x-y|^2/4t}."""
    return HeatKernelModel(
        b=0.25,
        k_of_t=lambda t, d=d: (4.0 * math.pi * t) ** (-d / 2.0),
        d=d,
        k_exponent=d / 2.0,
    )


class KernelBoundCheck(NamedTuple):
    max_violation: float
    per_t: Dict[float, float]
    kernel_min: float


def heat_kernel_bound_check(
    gA: Generator,
    dom: GridDomain,
    model: HeatKernelModel,
    ts: Sequence[float],
) -> KernelBoundCheck:
    """Compare the discrete propagator kernel against the Gaussian model.

    The nodal kernel is (exp(-At))_{ij} / h^d.  Reports the largest
    excess over the model bound across all node pairs and times
    (positive values are expected at the h^2 discretization scale), and
    the smallest kernel entry as a positivity diagnostic.
    """
    ts = np.asarray(ts, dtype=float)
    if np.any(ts <= 0):
        raise InputError("sample times must be positive")
    if float(np.min(ts)) < dom.h_max**2:
        raise ResolutionError(
            f"smallest time {np.min(ts):.3g} is below the mesh scale "
            f"h^2 = {dom.h_max ** 2:.3g}; the kernel is unresolved"
        )
    coords = dom.node_coords()
    dist_sq = np.sum((coords[:, None, :] - coords[None, :, :]) ** 2, axis=-1)
    per_t: Dict[float, float] = {}
    kernel_min = math.inf
    stacks = evolve_many(gA, ts)
    for t, e_t in zip(ts, stacks):
        kernel = e_t.real / dom.cell_volume
        bound = model.k_of_t(float(t)) * np.exp(-model.b * dist_sq / t)
        per_t[float(t)] = float(np.max(kernel - bound))
        kernel_min = min(kernel_min, float(np.min(kernel)))
    return KernelBoundCheck(
        max_violation=max(per_t.values()), per_t=per_t, kernel_min=kernel_min
    )


# -- membership probes ----------------------------------------------------


class MembershipProbe(NamedTuple):
    ts: np.ndarray
    norms: np.ndarray
    fitted_exponent: float
    integrable: bool
    certificate: Optional[np.ndarray]


def bq_membership_probe(
    gA: Generator,
    dom: GridDomain,
    v: Potential,
    q: IndexLike,
    ts: Sequence[float],
) -> MembershipProbe:
    """Probe ||V exp(-At)||_q on a ladder of times.

    ``fitted_exponent`` is the log-log slope over the smallest decade of
    the ladder, where the t -> 0 singularity dominates; the membership
    question is about integrability there, so ``integrable`` simply
    records slope > -1.  For q = 2 on a Gaussian-kernel operator the
    explicit Hilbert-Schmidt certificate (8 pi t)^{-d/4} ||V||_L2 is
    returned alongside for comparison.
    """
    idx = _as_index(q)
    ts = np.sort(np.asarray(ts, dtype=float))
    if np.any(ts <= 0):
        raise InputError("sample times must be positive")
    if float(ts[0]) < dom.h_max**2:
        raise ResolutionError(
            f"smallest time {ts[0]:.3g} is below the mesh scale "
            f"h^2 = {dom.h_max ** 2:.3g}"
        )
    if v.dom.num_nodes != gA.dim:
        raise InputError("potential grid does not match the generator")
    stacks = evolve_many(gA, ts)
    weighted = v.samples[None, :, None] * stacks
    sv = np.linalg.svd(weighted, compute_uv=False)
    if idx.is_operator_norm:
        norms = sv[:, 0]
    else:
        top = np.maximum(sv[:, 0], 1e-300)
        norms = top * np.sum((sv / top[:, None]) ** idx.q, axis=1) ** (1.0 / idx.q)
        norms = np.where(sv[:, 0] > 0, norms, 0.0)
    mask = ts <= ts[0] * 10.0 * (1 + 1e-12)
    if np.count_nonzero(mask & (norms > 0)) >= 2:
        sel = mask & (norms > 0)
        fitted = float(np.polyfit(np.log(ts[sel]), np.log(norms[sel]), 1)[0])
    else:
        fitted = 0.0
    certificate = None
    if not idx.is_operator_norm and idx.q == 2.0:
        certificate = (8.0 * math.pi * ts) ** (-dom.d / 4.0) * v.l2_norm
    return MembershipProbe(
        ts=ts, norms=np.asarray(norms), fitted_exponent=fitted,
        integrable=fitted > -1.0, certificate=certificate,
    )
