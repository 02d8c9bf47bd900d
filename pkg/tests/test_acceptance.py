"""Acceptance suite: one test per release criterion, at the stated
tolerances.  The terminal summary prints one pass/fail line per
criterion (see conftest)."""

import json
import math
import time

import numpy as np
import pytest

from semipert.cli import main as cli_main
from semipert.dyson import dyson_terms, mixed_expansion, tail_certificate
from semipert.resolvent import resolvent_difference_scan, vertical_decay_scan
from semipert.schatten import holder_product_check
from semipert.schrodinger import (
    GridDomain,
    Potential,
    bq_membership_probe,
    birman_solomjak_norm,
    build_dirichlet_laplacian,
    dirichlet_gaussian_model,
    heat_kernel_bound_check,
)
from semipert.asymptotics import heat_trace_check, perturbed_spectrum, weyl_lower_bound_check
from semipert.semigroup import Generator, evolve, perturbed_generator

from conftest import random_complex, random_operator


def seeded_pair(rng, dim, a_scale=1.5, b_scale=0.75):
    return (
        Generator(random_operator(rng, dim, a_scale)),
        random_operator(rng, dim, b_scale),
    )


def trace_norm(mat):
    return float(np.linalg.svd(mat, compute_uv=False).sum())


def test_criterion_01_dyson_oracle_equivalence():
    """50 seeded pairs, dim <= 8, q in {1,2,3}, t in {0.1,0.5,1}:
    truncated expansion within max(tail_bound, 1e-6) of the direct
    exponential, in trace norm, under 60 s."""
    rng = np.random.default_rng(101)
    start = time.time()
    checked = 0
    for case in range(50):
        dim = int(rng.integers(2, 9))
        g, b = seeded_pair(rng, dim)
        target_cache = {}
        for q in (1, 2, 3):
            for t in (0.1, 0.5, 1.0):
                ledger = dyson_terms(g, b, q, t)
                if t not in target_cache:
                    target_cache[t] = evolve(perturbed_generator(g, b), t).entries
                approx = evolve(g, t).entries + ledger.partial_sum()
                defect = trace_norm(approx - target_cache[t])
                assert defect <= max(ledger.tail_bound, 1e-6), (
                    f"case {case} dim {dim} q={q} t={t}: defect {defect:.3e} "
                    f"> max(tail {ledger.tail_bound:.3e}, 1e-6)"
                )
                checked += 1
    elapsed = time.time() - start
    assert checked == 450
    assert elapsed < 60.0, f"runtime {elapsed:.1f}s exceeded the 60 s target"


def test_criterion_02_term_norm_envelope():
    """Per-term Schatten norms stay under exp(omega t) / (2^n t^2) for
    the certified omega, at every computed n."""
    rng = np.random.default_rng(102)
    for case in range(12):
        dim = int(rng.integers(2, 9))
        g, b = seeded_pair(rng, dim)
        q = (1, 2, 3)[case % 3]
        for t in (0.1, 0.5, 1.0):
            ledger = dyson_terms(g, b, q, t)
            cert = tail_certificate(g, b, q, t, ledger=ledger)
            for n, norm in enumerate(ledger.term_norms, start=1):
                bound = cert.bound_fn(n)
                assert norm <= bound * (1 + 1e-8), (
                    f"case {case} q={q} t={t} n={n}: {norm:.3e} > {bound:.3e}"
                )


def test_criterion_03_holder_fuzz():
    """10^3 random admissible triples with zero violations beyond the
    1e-10 relative slack."""
    rng = np.random.default_rng(103)
    violations = 0
    for _ in range(1000):
        dim = int(rng.integers(2, 7))
        s = random_complex(rng, dim) * rng.uniform(0.2, 3.0)
        t = random_complex(rng, dim) * rng.uniform(0.2, 3.0)
        u = float(rng.uniform(0.0, 1.0))
        v = float(rng.uniform(0.0, 1.0 - u))
        q = 1.0 / u if u > 1e-3 else math.inf
        r = 1.0 / v if v > 1e-3 else math.inf
        inv_p = (0.0 if math.isinf(q) else 1.0 / q) + (
            0.0 if math.isinf(r) else 1.0 / r
        )
        p = 1.0 / inv_p if inv_p > 1e-3 else math.inf
        if not holder_product_check(s, t, p, q, r).holds:
            violations += 1
    assert violations == 0


def test_criterion_04_mixed_index_arithmetic():
    """r_n = pq/(np+q) and ell = floor(q - q/p) reproduce the stated
    worked instances exactly."""
    rng = np.random.default_rng(104)
    g, b = seeded_pair(rng, 4)
    mix = mixed_expansion(g, b, b, 2, 2, 0.5)
    assert mix.ell == 1
    assert mix.r_indices[1] == 1.0
    mix2 = mixed_expansion(g, b, b, 4, 2, 0.5)
    assert mix2.ell == 1
    assert mix2.r_indices[1] == 4.0 / 3.0
    # the closed forms behind those instances
    assert math.floor(2.0 - 2.0 / 2.0) == 1
    assert 2.0 * 2.0 / (1 * 2.0 + 2.0) == 1.0
    assert 4.0 * 2.0 / (1 * 4.0 + 2.0) == 4.0 / 3.0


def test_criterion_05_resolvent_decay():
    """20 seeded pairs: fitted vertical-decay slope <= -0.9 and second
    resolvent identity residual <= 1e-9 at every scan point."""
    rng = np.random.default_rng(105)
    for case in range(20):
        dim = int(rng.integers(3, 8))
        g, b = seeded_pair(rng, dim, a_scale=2.0, b_scale=0.6)
        scan = vertical_decay_scan(g, b, 2, x=0.2, y_max=1e4)
        assert scan.fitted_decay <= -0.9, (
            f"case {case}: slope {scan.fitted_decay:.3f}"
        )
        diff = resolvent_difference_scan(
            g, Generator(g.a.entries + b), 2, x=0.2, y_max=1e4
        )
        assert float(np.max(diff.identity_residuals)) <= 1e-9


def test_criterion_06_heat_kernel_bound():
    """1D Dirichlet kernel on (0, pi), n = 256, stays under the Gaussian
    envelope up to the refinement-estimated discretization slack, under
    30 s."""
    start = time.time()
    model = dirichlet_gaussian_model(1)
    ts = [0.05, 0.1, 0.5]
    checks = {}
    for n in (128, 256):
        dom = GridDomain.interval(math.pi, n)
        checks[n] = heat_kernel_bound_check(
            build_dirichlet_laplacian(dom), dom, model, ts
        )
    for t in ts:
        v_coarse, v_fine = checks[128].per_t[t], checks[256].per_t[t]
        eps_disc = (4.0 / 3.0) * max(v_coarse - v_fine, 0.0) + 1e-9
        assert v_fine <= eps_disc, (
            f"t={t}: violation {v_fine:.3e} above slack {eps_disc:.3e}"
        )
    elapsed = time.time() - start
    assert elapsed < 30.0, f"runtime {elapsed:.1f}s exceeded the 30 s target"


def test_criterion_07_hilbert_schmidt_certificate():
    """Five sampled square-integrable potentials on the truncated line:
    probe norms under (8 pi t)^{-1/4} ||V|| times (1 + eps_disc), and
    fitted t-exponent in [-0.35, -0.15]."""
    expressions = [
        "gauss(1.0)",
        "gauss(0.5,1.0)",
        "poly(0,1)*gauss(1.0)",
        "(1+1j)*gauss(2.0,-0.5)",
        "poly(1,0,0.2)*gauss(1.5)",
    ]
    ts = np.geomspace(0.03, 0.3, 9)
    doms = {n: GridDomain.truncated_line(8.0, n) for n in (127, 255)}
    gens = {n: build_dirichlet_laplacian(d) for n, d in doms.items()}
    for expr in expressions:
        probes = {}
        for n in (127, 255):
            v = Potential.from_expression(doms[n], expr)
            probes[n] = bq_membership_probe(gens[n], doms[n], v, 2, ts)
        excess = {
            n: float(np.max(p.norms / p.certificate - 1.0))
            for n, p in probes.items()
        }
        eps_disc = (4.0 / 3.0) * max(excess[127] - excess[255], 0.0) + 1e-9
        fine = probes[255]
        assert np.all(fine.norms <= fine.certificate * (1.0 + eps_disc)), (
            f"{expr}: excess {excess[255]:.3e} above eps {eps_disc:.3e}"
        )
        assert -0.35 <= fine.fitted_exponent <= -0.15, (
            f"{expr}: fitted exponent {fine.fitted_exponent:.3f}"
        )


def test_criterion_08_gaussian_block_norm_bound():
    """||exp(-|x|^2 t)||_{2;p} < 2^{d/p} sqrt(pi/p) (1 + t^{-1/2})^{d/p}
    for d = 1, p in {1, 2}, t in {0.1, 1, 10}."""
    dom = GridDomain.truncated_line(16.0, 1200)
    for t in (0.1, 1.0, 10.0):
        v = Potential.from_callable(dom, lambda x, t=t: np.exp(-(x**2) * t))
        for p in (1.0, 2.0):
            lhs = birman_solomjak_norm(v, p)
            rhs = 2.0 ** (1.0 / p) * math.sqrt(math.pi / p) * (1 + t**-0.5) ** (1.0 / p)
            assert lhs < rhs, f"t={t} p={p}: {lhs:.4f} >= {rhs:.4f}"


def test_criterion_09_weyl_lower_bound():
    """d=1, (0, pi), V in {0, ix, complex Gaussian bump}, n=256: N_star
    exists with nonnegative margins through n = 80, under 60 s."""
    start = time.time()
    dom = GridDomain.interval(math.pi, 256)
    g = build_dirichlet_laplacian(dom)
    potentials = {
        "zero": Potential.zero(dom),
        "imaginary-ramp": Potential.from_expression(dom, "1j*x"),
        "complex-bump": Potential.from_expression(dom, "(1+1j)*gauss(1.0,1.5)"),
    }
    for name, v in potentials.items():
        rep = perturbed_spectrum(g, v)
        check = weyl_lower_bound_check(rep, dom, 80)
        assert check.n_star is not None, f"{name}: no onset index found"
        tail = check.margins[check.n_star - 1 :]
        assert np.all(tail >= 0.0), f"{name}: negative margin past onset"
    elapsed = time.time() - start
    assert elapsed < 60.0, f"runtime {elapsed:.1f}s exceeded the 60 s target"


def test_criterion_10_heat_trace_bounds():
    """Same setting, t in {0.05, 0.1, 0.2, 0.5}: Hilbert-Schmidt and
    eigenvalue-series heat-trace bounds hold with refinement slack."""
    dom = GridDomain.interval(math.pi, 256)
    g = build_dirichlet_laplacian(dom)
    ts = [0.05, 0.1, 0.2, 0.5]
    for expr in (None, "1j*x", "(1+1j)*gauss(1.0,1.5)"):
        v = Potential.zero(dom) if expr is None else Potential.from_expression(dom, expr)
        check = heat_trace_check(g, v, dom, ts)
        assert all(check.hs_bound_ok.values()), f"{expr}: HS bound failed"
        assert all(check.series_bound_ok.values()), f"{expr}: series bound failed"


def test_criterion_11_round_trip_symmetry():
    """Expanding around A+B with increment -B reconstructs exp(-At)
    within the certified bound, for 20 seeded cases."""
    rng = np.random.default_rng(111)
    for case in range(20):
        dim = int(rng.integers(2, 9))
        g, b = seeded_pair(rng, dim)
        gab = perturbed_generator(g, b)
        ledger = dyson_terms(gab, -b, 2, 0.5)
        approx = evolve(gab, 0.5).entries + ledger.partial_sum()
        defect = trace_norm(approx - evolve(g, 0.5).entries)
        assert defect <= max(ledger.tail_bound, 1e-6), (
            f"case {case}: round-trip defect {defect:.3e}"
        )


def test_criterion_12_deterministic_reports(tmp_path):
    """Repeated CLI runs with a fixed seed produce byte-identical JSON."""
    cfg = {
        "experiment": "dyson-verify",
        "seed": 424242,
        "dimension": 6,
        "q": 2,
        "t_grid": [0.25, 1.0],
        "cases": 2,
    }
    cfg_path = tmp_path / "dyson.json"
    cfg_path.write_text(json.dumps(cfg))
    blobs = []
    for sub in ("first", "second"):
        out = tmp_path / sub
        assert cli_main(["run", str(cfg_path), "--out", str(out)]) == 0
        blobs.append((out / "dyson-verify.json").read_bytes())
        blobs.append((out / "dyson-verify-terms.csv").read_bytes())
    assert blobs[0] == blobs[2], "JSON reports differ between runs"
    assert blobs[1] == blobs[3], "CSV tables differ between runs"
