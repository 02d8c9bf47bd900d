"""Dense complex operators, singular values and Schatten q-norms.

The Schatten norm of a matrix is the l^q norm of its singular values,
with q = inf meaning the operator (spectral) norm.  The module also
provides the product interpolation check ||ST||_p <= ||S||_q ||T||_r
for 1/p = 1/q + 1/r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .errors import InputError

__all__ = [
    "DenseOperator",
    "SchattenIndex",
    "as_operator",
    "identity",
    "singular_values",
    "schatten_norm",
    "holder_product_check",
]

# Relative slack used when turning a norm inequality into a boolean verdict;
# sized for SVD backward error on desk-scale matrices.
INEQUALITY_SLACK = 1e-10

# Singular values below this fraction of the largest one are discarded
# before raising to non-integer powers.
SIGMA_CLIP = 1e-14

# Admissibility tolerance for the index relation 1/p = 1/q + 1/r.
INDEX_RELATION_TOL = 1e-12


@dataclass(frozen=True)
class DenseOperator:
    """A finite square complex matrix standing in for a bounded operator.

    Parameters
    ----------
    entries : array_like
        Square two-dimensional array of finite complex numbers.  The data
        is copied and frozen, so instances are safe to share between
        threads.
    """

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.complex128, copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InputError(f"operator must be a square matrix, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise InputError("operator dimension must be >= 1")
        if not np.all(np.isfinite(arr.view(np.float64))):
            raise InputError("operator entries must be finite (no NaN/Inf)")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __matmul__(self, other: "DenseOperator") -> "DenseOperator":
        return DenseOperator(self.entries @ as_operator(other).entries)

    def __add__(self, other: "DenseOperator") -> "DenseOperator":
        return DenseOperator(self.entries + as_operator(other).entries)

    def __sub__(self, other: "DenseOperator") -> "DenseOperator":
        return DenseOperator(self.entries - as_operator(other).entries)

    def __neg__(self) -> "DenseOperator":
        return DenseOperator(-self.entries)


OperatorLike = Union[DenseOperator, np.ndarray]


def as_operator(value: OperatorLike) -> DenseOperator:
    """Coerce a matrix-like value to a validated :class:`DenseOperator`."""
    if isinstance(value, DenseOperator):
        return value
    return DenseOperator(np.asarray(value))


def identity(dim: int) -> DenseOperator:
    return DenseOperator(np.eye(dim, dtype=np.complex128))


@dataclass(frozen=True)
class SchattenIndex:
    """An extended-real summability index q in [1, inf].

    ``math.inf`` is the distinguished operator-norm variant; it is kept
    exact rather than approximated by a large float.
    """

    q: float

    def __post_init__(self):
        q = float(self.q)
        if math.isnan(q) or q < 1.0:
            raise InputError(f"Schatten index must satisfy q >= 1, got {self.q}")
        object.__setattr__(self, "q", q)

    @property
    def is_operator_norm(self) -> bool:
        return math.isinf(self.q)

    @property
    def reciprocal(self) -> float:
        """1/q with the convention 1/inf = 0."""
        return 0.0 if self.is_operator_norm else 1.0 / self.q

    def __float__(self) -> float:
        return self.q


IndexLike = Union[SchattenIndex, float, int]


def _as_index(q: IndexLike) -> SchattenIndex:
    if isinstance(q, SchattenIndex):
        return q
    return SchattenIndex(float(q))


def singular_values(t: OperatorLike) -> np.ndarray:
    """Singular values of ``t`` in non-increasing order, via full SVD."""
    return np.linalg.svd(as_operator(t).entries, compute_uv=False)


def schatten_norm(t: OperatorLike, q: IndexLike) -> float:
    """Schatten q-norm ``(sum_i sigma_i^q)^(1/q)``.

    ``q = inf`` returns the largest singular value.  For non-integer q the
    singular values below ``SIGMA_CLIP`` times the largest are discarded
    first: raising near-zero singular values to fractional powers only
    amplifies rounding noise.
    """
    sigma = singular_values(t)
    idx = _as_index(q)
    top = float(sigma[0]) if sigma.size else 0.0
    if idx.is_operator_norm or top == 0.0:
        return top
    qv = idx.q
    if qv != round(qv):
        sigma = sigma[sigma > SIGMA_CLIP * top]
    # scale by the largest singular value to keep powers in range
    return top * float(np.sum((sigma / top) ** qv)) ** (1.0 / qv)


class HolderCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def holder_product_check(
    s: OperatorLike,
    t: OperatorLike,
    p: IndexLike,
    q: IndexLike,
    r: IndexLike,
) -> HolderCheck:
    """Evaluate ``||ST||_p <= ||S||_q ||T||_r`` for an admissible triple.

    The triple must satisfy 1/p = 1/q + 1/r within ``INDEX_RELATION_TOL``
    (with 1/inf = 0).  Returns the two sides and the boolean verdict with
    ``INEQUALITY_SLACK`` of relative slack on the right hand side.
    """
    sp, tp = as_operator(s), as_operator(t)
    if sp.dim != tp.dim:
        raise InputError(f"dimension mismatch: {sp.dim} != {tp.dim}")
    ip, iq, ir = _as_index(p), _as_index(q), _as_index(r)
    if abs(ip.reciprocal - iq.reciprocal - ir.reciprocal) > INDEX_RELATION_TOL:
        raise InputError(
            f"indices violate 1/p = 1/q + 1/r: p={ip.q}, q={iq.q}, r={ir.q}"
        )
    lhs = schatten_norm(sp @ tp, ip)
    rhs = schatten_norm(sp, iq) * schatten_norm(tp, ir)
    return HolderCheck(lhs=lhs, rhs=rhs, holds=lhs <= rhs * (1.0 + INEQUALITY_SLACK))
