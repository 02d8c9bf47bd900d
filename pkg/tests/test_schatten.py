import math

import numpy as np
import pytest

from semipert.errors import InputError
from semipert.schatten import (
    DenseOperator,
    SchattenIndex,
    holder_product_check,
    identity,
    schatten_norm,
    singular_values,
)

from conftest import random_complex, random_operator, random_unitary


class TestDenseOperator:
    def test_rejects_non_square(self):
        with pytest.raises(InputError):
            DenseOperator(np.zeros((2, 3)))

    def test_rejects_nan(self):
        with pytest.raises(InputError):
            DenseOperator(np.array([[np.nan, 0], [0, 1]]))

    def test_rejects_inf(self):
        with pytest.raises(InputError):
            DenseOperator(np.array([[1, 0], [0, np.inf]], dtype=complex))

    def test_entries_frozen(self):
        op = identity(2)
        with pytest.raises(ValueError):
            op.entries[0, 0] = 5.0


class TestSchattenIndex:
    def test_rejects_below_one(self):
        with pytest.raises(InputError):
            SchattenIndex(0.5)

    def test_infinity_is_distinguished(self):
        idx = SchattenIndex(math.inf)
        assert idx.is_operator_norm
        assert idx.reciprocal == 0.0

    def test_reciprocal(self):
        assert SchattenIndex(2.0).reciprocal == 0.5


class TestSchattenNorm:
    def test_identity_q2(self):
        assert schatten_norm(identity(3), 2) == pytest.approx(math.sqrt(3), rel=1e-14)

    def test_diagonal_q1(self):
        assert schatten_norm(np.diag([3.0, 4.0]), 1) == pytest.approx(7.0, rel=1e-14)

    def test_q2_matches_frobenius_oracle(self, rng):
        # independent oracle: entrywise sqrt of sum of squared moduli
        m = random_complex(rng, 4)
        oracle = math.sqrt(float(np.sum(np.abs(m) ** 2)))
        assert schatten_norm(m, 2) == pytest.approx(oracle, rel=1e-12)

    def test_operator_norm_is_top_singular_value(self, rng):
        m = random_complex(rng, 5)
        assert schatten_norm(m, math.inf) == pytest.approx(
            float(np.linalg.norm(m, 2)), rel=1e-12
        )

    def test_monotone_in_q(self, rng):
        qs = [1.0, 1.5, 2.0, 3.0, 7.0, math.inf]
        for _ in range(20):
            m = random_complex(rng, 5)
            norms = [schatten_norm(m, q) for q in qs]
            for lo, hi in zip(norms, norms[1:]):
                assert lo >= hi * (1 - 1e-12)

    def test_unitarily_invariant(self, rng):
        for _ in range(10):
            m = random_complex(rng, 4)
            u, v = random_unitary(rng, 4), random_unitary(rng, 4)
            for q in (1, 2, 3.5, math.inf):
                assert schatten_norm(u @ m @ v, q) == pytest.approx(
                    schatten_norm(m, q), rel=1e-10
                )

    def test_triangle_inequality(self, rng):
        for _ in range(20):
            s, t = random_complex(rng, 4), random_complex(rng, 4)
            for q in (1, 2, 4, math.inf):
                assert schatten_norm(s + t, q) <= (
                    schatten_norm(s, q) + schatten_norm(t, q)
                ) * (1 + 1e-12)

    def test_singular_values_sorted(self, rng):
        sv = singular_values(random_complex(rng, 6))
        assert np.all(np.diff(sv) <= 0)


class TestHolderCheck:
    def test_identity_equality(self):
        chk = holder_product_check(identity(2), identity(2), 1, 2, 2)
        assert chk.lhs == pytest.approx(2.0, rel=1e-14)
        assert chk.rhs == pytest.approx(2.0, rel=1e-14)
        assert chk.holds

    def test_rank_one_projector(self, rng):
        u = random_complex(rng, 3)[:, 0]
        u = u / np.linalg.norm(u)
        proj = np.outer(u, u.conj())
        chk = holder_product_check(proj, proj, 1, 2, 2)
        assert chk.lhs == pytest.approx(1.0, rel=1e-12)
        assert chk.rhs == pytest.approx(1.0, rel=1e-12)
        assert chk.holds

    def test_rejects_inadmissible_indices(self):
        with pytest.raises(InputError):
            holder_product_check(identity(2), identity(2), 1, 2, 3)

    def test_rejects_dim_mismatch(self):
        with pytest.raises(InputError):
            holder_product_check(identity(2), identity(3), 1, 2, 2)

    def test_admits_infinite_indices(self, rng):
        s, t = random_complex(rng, 4), random_complex(rng, 4)
        chk = holder_product_check(s, t, 2, 2, math.inf)
        assert chk.holds

    def test_fuzz_no_violations(self, rng):
        # sampled admissible triples never violate the product inequality
        for _ in range(300):
            dim = int(rng.integers(2, 6))
            s = random_operator(rng, dim, scale=float(rng.uniform(0.1, 4.0)))
            t = random_operator(rng, dim, scale=float(rng.uniform(0.1, 4.0)))
            u = float(rng.uniform(0.0, 1.0))
            v = float(rng.uniform(0.0, 1.0 - u))
            q = 1.0 / u if u > 1e-3 else math.inf
            r = 1.0 / v if v > 1e-3 else math.inf
            inv_p = (0.0 if math.isinf(q) else 1.0 / q) + (
                0.0 if math.isinf(r) else 1.0 / r
            )
            p = 1.0 / inv_p if inv_p > 1e-3 else math.inf
            assert holder_product_check(s, t, p, q, r).holds
