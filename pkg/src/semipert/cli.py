"""Batch experiment driver.

Reads a JSON config describing one named experiment, runs it through
the library, and writes a JSON summary plus CSV tables.  Reports are
deterministic for a fixed config and seed: keys are sorted, values are
plain Python floats, and nothing environment-dependent is embedded.

Exit codes: 0 all inequality verdicts pass, 2 at least one verdict
failed, 1 malformed input or a numerical error.

Config schema (JSON object; unknown keys rejected):

    experiment   one of: dyson-verify, duhamel, mixed, resolvent-scan,
                 heat-kernel, bq-probe, weyl-check, heat-trace
    seed         integer seed for the randomized cases (default 0)
    cases        number of seeded repetitions for matrix experiments
    dimension    matrix dimension for random-operator experiments
    q, p         Schatten indices (numbers, or "inf")
    t_grid       list of times, or {"start","stop","num","spacing"}
    panels       quadrature subintervals for the expansion integrals
    n_max        number of expansion terms
    domain       {"kind": "interval"|"rectangle"|"truncated-line",
                  "length"|"lengths"|"radius": ..., "n": int}
    potential    {"expression": "..."} or {"csv": "file"} or {"zero": true}
    x, y_max, n_points, margin     resolvent-scan controls
    n_check      number of eigenvalues checked by weyl-check
    output       report file stem (default: the experiment name)

The default output directory is the SEMIPERT_OUT environment variable,
falling back to ``./semipert-reports``; ``--out`` overrides both.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import asymptotics, dyson, resolvent, schrodinger
from .errors import DivergenceError, InputError, NumericalError, ResolutionError, SpectrumError
from .semigroup import Generator
from .schrodinger import GridDomain, Potential

__all__ = ["ExperimentConfig", "run_experiment", "main", "EXPERIMENTS"]

SCHEMA_VERSION = 1

OUT_ENV_VAR = "SEMIPERT_OUT"
DEFAULT_OUT = "semipert-reports"

_KNOWN_KEYS = {
    "experiment", "seed", "cases", "dimension", "q", "p", "t_grid", "panels",
    "n_max", "domain", "potential", "x", "y_max", "n_points", "margin",
    "n_check", "output", "schema_version",
}


@dataclass
class ExperimentConfig:
    """Validated view of a config file; see the module docstring."""

    experiment: str
    seed: int = 0
    cases: int = 1
    dimension: int = 6
    q: float = 2.0
    p: Optional[float] = None
    t_grid: Tuple[float, ...] = (0.1, 0.5, 1.0)
    panels: int = 128
    n_max: Optional[int] = None
    domain: Optional[GridDomain] = None
    potential_spec: Optional[dict] = None
    x: float = 0.0
    y_max: float = 1e4
    n_points: int = 48
    margin: float = 0.1
    n_check: Optional[int] = None
    output: Optional[str] = None
    base_dir: Path = field(default_factory=Path)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        cfg_path = Path(path)
        if not cfg_path.is_file():
            raise InputError(f"config file does not exist: {path}")
        try:
            raw = json.loads(cfg_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise InputError("config root must be a JSON object")
        unknown = set(raw) - _KNOWN_KEYS
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls._from_dict(raw, cfg_path.parent)

    @classmethod
    def _from_dict(cls, raw: dict, base_dir: Path) -> "ExperimentConfig":
        if "experiment" not in raw:
            raise InputError("config must name an experiment")
        cfg = cls(experiment=str(raw["experiment"]), base_dir=base_dir)
        cfg.seed = int(raw.get("seed", 0))
        cfg.cases = int(raw.get("cases", 1))
        cfg.dimension = int(raw.get("dimension", 6))
        cfg.q = _parse_index(raw.get("q", 2), "q")
        cfg.p = _parse_index(raw["p"], "p") if "p" in raw else None
        cfg.t_grid = _parse_t_grid(raw.get("t_grid", [0.1, 0.5, 1.0]))
        cfg.panels = int(raw.get("panels", 128))
        cfg.n_max = int(raw["n_max"]) if "n_max" in raw else None
        if "domain" in raw:
            cfg.domain = _parse_domain(raw["domain"])
        cfg.potential_spec = raw.get("potential")
        cfg.x = float(raw.get("x", 0.0))
        cfg.y_max = float(raw.get("y_max", 1e4))
        cfg.n_points = int(raw.get("n_points", 48))
        cfg.margin = float(raw.get("margin", 0.1))
        cfg.n_check = int(raw["n_check"]) if "n_check" in raw else None
        cfg.output = raw.get("output")
        return cfg

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise InputError(
                f"unknown experiment {self.experiment!r}; known: {sorted(EXPERIMENTS)}"
            )
        if self.q < 1:
            raise InputError(f"index invariant violated: q must be >= 1, got {self.q}")
        if self.p is not None and self.p < 1:
            raise InputError(f"index invariant violated: p must be >= 1, got {self.p}")
        if not self.t_grid:
            raise InputError("t_grid must contain at least one time")
        if any(not (0 < t) or not math.isfinite(t) for t in self.t_grid):
            raise InputError("t_grid times must be finite and positive")
        if self.experiment == "heat-trace" and any(t > asymptotics.GAMMA for t in self.t_grid):
            raise InputError(
                f"t_grid invariant violated: heat-trace times must lie in "
                f"(0, {asymptotics.GAMMA}]"
            )
        if self.panels < 8:
            raise InputError("panels must be at least 8")
        if self.cases < 1:
            raise InputError("cases must be >= 1")
        if self.dimension < 1:
            raise InputError("dimension must be >= 1")
        needs_domain = self.experiment in (
            "heat-kernel", "bq-probe", "weyl-check", "heat-trace"
        )
        if needs_domain and self.domain is None:
            raise InputError(f"experiment {self.experiment} requires a domain")
        if self.potential_spec is not None:
            self._resolve_potential_path()

    def _resolve_potential_path(self) -> Optional[Path]:
        spec = self.potential_spec
        if spec is None or "csv" not in spec:
            return None
        path = Path(spec["csv"])
        if not path.is_absolute():
            path = self.base_dir / path
        if not path.is_file():
            raise InputError(f"referenced potential file does not exist: {path}")
        return path

    def build_potential(self, dom: GridDomain) -> Potential:
        spec = self.potential_spec
        if spec is None or spec.get("zero"):
            return Potential.zero(dom)
        if "expression" in spec:
            return Potential.from_expression(dom, spec["expression"])
        if "csv" in spec:
            return Potential.from_csv(dom, str(self._resolve_potential_path()))
        raise InputError(
            "potential must specify one of: expression, csv, zero"
        )


def _parse_index(value, name: str) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity", "oo"):
            return math.inf
        raise InputError(f"{name} must be a number or 'inf', got {value!r}")
    return float(value)


def _parse_t_grid(value) -> Tuple[float, ...]:
    if isinstance(value, dict):
        missing = {"start", "stop", "num"} - set(value)
        if missing:
            raise InputError(f"t_grid spec missing keys: {sorted(missing)}")
        start, stop, num = float(value["start"]), float(value["stop"]), int(value["num"])
        spacing = value.get("spacing", "log")
        if spacing == "log":
            return tuple(float(t) for t in np.geomspace(start, stop, num))
        if spacing == "linear":
            return tuple(float(t) for t in np.linspace(start, stop, num))
        raise InputError(f"t_grid spacing must be 'log' or 'linear', got {spacing!r}")
    return tuple(float(t) for t in value)


def _parse_domain(spec: dict) -> GridDomain:
    if not isinstance(spec, dict):
        raise InputError("domain must be a JSON object")
    kind = spec.get("kind")
    n = int(spec.get("n", 0))
    if kind == "interval":
        return GridDomain.interval(float(spec["length"]), n)
    if kind == "rectangle":
        lengths = spec.get("lengths")
        if not lengths or len(lengths) != 2:
            raise InputError("rectangle domain needs lengths: [L1, L2]")
        return GridDomain.rectangle(float(lengths[0]), float(lengths[1]), n)
    if kind == "truncated-line":
        return GridDomain.truncated_line(float(spec["radius"]), n)
    raise InputError(f"unknown domain kind: {kind!r}")


# -- seeded operators ----------------------------------------------------


def seeded_pair(dim: int, rng: np.random.Generator,
                a_scale: float = 1.5, b_scale: float = 0.75):
    """A random generator/perturbation pair with controlled norms."""
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    a *= a_scale / np.linalg.norm(a, 2)
    b = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    b *= b_scale / np.linalg.norm(b, 2)
    return Generator(a), b


# -- verdicts ------------------------------------------------------------


def _verdict(name: str, observed: float, limit: float, tolerance: float) -> dict:
    return {
        "name": name,
        "observed": float(observed),
        "limit": float(limit),
        "tolerance": float(tolerance),
        "passed": bool(observed <= limit),
    }


def _ordered_map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- experiments ---------------------------------------------------------


def _exp_dyson_verify(cfg: ExperimentConfig, threads: int):
    rng = np.random.default_rng(cfg.seed)
    verdicts, rows, case_data = [], [], []
    for case in range(cfg.cases):
        gA, b = seeded_pair(cfg.dimension, rng)

        def one_time(t, gA=gA, b=b, case=case):
            ledger = dyson.dyson_terms(gA, b, cfg.q, t, n_max=cfg.n_max,
                                       quad_panels=cfg.panels)
            cert = dyson.tail_certificate(gA, b, cfg.q, t, n_max=cfg.n_max,
                                          quad_panels=cfg.panels, ledger=ledger)
            return ledger, cert

        for t, (ledger, cert) in zip(cfg.t_grid,
                                     _ordered_map(one_time, cfg.t_grid, threads)):
            limit = max(ledger.tail_bound, 1e-6)
            verdicts.append(_verdict(
                f"dyson-defect[case={case},t={t:g}]", ledger.defect_1, limit, limit))
            envelope_excess = 0.0
            for n, norm in enumerate(ledger.term_norms, start=1):
                bound = cert.bound_fn(n)
                rows.append([case, t, n, float(ledger.indices[n - 1]), norm, bound])
                if bound > 0:
                    envelope_excess = max(envelope_excess, norm / bound - 1.0)
            verdicts.append(_verdict(
                f"dyson-envelope[case={case},t={t:g}]", envelope_excess, 1e-8, 1e-8))
            case_data.append({
                "case": case, "t": t, "tail_bound": ledger.tail_bound,
                "defect_1": ledger.defect_1, "quad_error": ledger.quad_error,
                "omega": cert.omega, "start_index": cert.start_index,
            })
    tables = {"terms": (["case", "t", "n", "index", "term_norm", "envelope"], rows)}
    return verdicts, {"cases": case_data}, tables


def _exp_duhamel(cfg: ExperimentConfig, threads: int):
    rng = np.random.default_rng(cfg.seed)
    verdicts, data = [], []
    for case in range(cfg.cases):
        gA, b = seeded_pair(cfg.dimension, rng)
        residuals = _ordered_map(
            lambda t, gA=gA, b=b: dyson.duhamel_residual(
                gA, b, cfg.q, t, quad_panels=cfg.panels),
            cfg.t_grid, threads)
        for t, res in zip(cfg.t_grid, residuals):
            verdicts.append(_verdict(f"duhamel[case={case},t={t:g}]", res, 1e-7, 1e-7))
            data.append({"case": case, "t": t, "residual": res})
    return verdicts, {"residuals": data}, {}


def _exp_mixed(cfg: ExperimentConfig, threads: int):
    if cfg.p is None:
        raise InputError("mixed experiment requires the index p")
    rng = np.random.default_rng(cfg.seed)
    verdicts, data = [], []
    for case in range(cfg.cases):
        gA, b = seeded_pair(cfg.dimension, rng)
        _, b0 = seeded_pair(cfg.dimension, rng)
        for t in cfg.t_grid:
            mix = dyson.mixed_expansion(gA, b, b0, cfg.p, cfg.q, t, n_max=cfg.n_max,
                                        quad_panels=cfg.panels)
            verdicts.append(_verdict(
                f"mixed-tail[case={case},t={t:g}]",
                mix.observed_tail, mix.w_norm_bound * (1 + 1e-6) + 1e-12, 1e-6))
            data.append({
                "case": case, "t": t, "ell": mix.ell,
                "r_indices": [float(r) for r in mix.r_indices],
                "w_norm_bound": mix.w_norm_bound,
                "observed_tail": mix.observed_tail,
            })
    return verdicts, {"expansions": data}, {}


def _exp_resolvent_scan(cfg: ExperimentConfig, threads: int):
    rng = np.random.default_rng(cfg.seed)
    verdicts, rows, data = [], [], []
    for case in range(cfg.cases):
        gA, b = seeded_pair(cfg.dimension, rng)
        gA2 = Generator(gA.a.entries + b)
        scan = resolvent.vertical_decay_scan(gA, b, cfg.q, cfg.x, cfg.y_max,
                                             cfg.n_points)
        diff = resolvent.resolvent_difference_scan(gA, gA2, cfg.q, cfg.x,
                                                   cfg.y_max, cfg.n_points)
        verdicts.append(_verdict(
            f"decay-slope[case={case}]", scan.fitted_decay, -0.9, 0.0))
        residual_max = float(np.max(diff.identity_residuals)) if diff.ys.size else 0.0
        verdicts.append(_verdict(
            f"second-resolvent-identity[case={case}]", residual_max, 1e-9, 1e-9))
        for y, norm in zip(scan.ys, scan.norms):
            rows.append([case, y, norm])
        data.append({
            "case": case, "fitted_decay": scan.fitted_decay,
            "difference_decay": diff.fitted_decay,
            "identity_residual_max": residual_max,
            "skipped": list(scan.skipped),
        })
    tables = {"scan": (["case", "y", "norm"], rows)}
    return verdicts, {"scans": data}, tables


def _exp_heat_kernel(cfg: ExperimentConfig, threads: int):
    dom = cfg.domain
    model = schrodinger.dirichlet_gaussian_model(dom.d)
    fine = schrodinger.heat_kernel_bound_check(
        schrodinger.build_dirichlet_laplacian(dom), dom, model, cfg.t_grid)
    coarse_dom = dom.with_n(max(dom.n // 2, 8))
    coarse = schrodinger.heat_kernel_bound_check(
        schrodinger.build_dirichlet_laplacian(coarse_dom), coarse_dom, model,
        cfg.t_grid)
    verdicts, rows = [], []
    for t in cfg.t_grid:
        v_fine, v_coarse = fine.per_t[t], coarse.per_t[t]
        eps = (4.0 / 3.0) * max(v_coarse - v_fine, 0.0) + 1e-9
        verdicts.append(_verdict(f"kernel-bound[t={t:g}]", v_fine, eps, eps))
        rows.append([t, v_fine, v_coarse, eps])
    verdicts.append(_verdict("kernel-positivity", -fine.kernel_min, 1e-12, 1e-12))
    tables = {"violations": (["t", "violation_fine", "violation_coarse", "eps_disc"], rows)}
    data = {"max_violation": fine.max_violation, "kernel_min": fine.kernel_min}
    return verdicts, data, tables


def _exp_bq_probe(cfg: ExperimentConfig, threads: int):
    dom = cfg.domain
    gA = schrodinger.build_dirichlet_laplacian(dom)
    v = cfg.build_potential(dom)
    probe = schrodinger.bq_membership_probe(gA, dom, v, cfg.q, cfg.t_grid)
    verdicts, rows = [], []
    finite = float(np.max(probe.norms)) if probe.norms.size else 0.0
    verdicts.append(_verdict("norms-finite", 0.0 if math.isfinite(finite) else 1.0,
                             0.5, 0.0))
    if probe.certificate is not None and v.l2_norm > 0:
        coarse_dom = dom.with_n(max(dom.n // 2, 8))
        coarse = schrodinger.bq_membership_probe(
            schrodinger.build_dirichlet_laplacian(coarse_dom), coarse_dom,
            v.regrid(coarse_dom), cfg.q, cfg.t_grid)
        excess_f = float(np.max(probe.norms / probe.certificate - 1.0))
        excess_c = float(np.max(coarse.norms / coarse.certificate - 1.0))
        eps = (4.0 / 3.0) * max(excess_c - excess_f, 0.0) + 1e-9
        verdicts.append(_verdict("hs-certificate", excess_f, eps, eps))
    for t, norm in zip(probe.ts, probe.norms):
        cert = None
        if probe.certificate is not None:
            cert = float(probe.certificate[list(probe.ts).index(t)])
        rows.append([float(t), float(norm), cert if cert is not None else ""])
    data = {
        "fitted_exponent": probe.fitted_exponent,
        "integrable": probe.integrable,
        "l2_norm": v.l2_norm,
    }
    tables = {"norms": (["t", "norm", "certificate"], rows)}
    return verdicts, data, tables


def _exp_weyl_check(cfg: ExperimentConfig, threads: int):
    dom = cfg.domain
    gA = schrodinger.build_dirichlet_laplacian(dom)
    v = cfg.build_potential(dom)
    rep = asymptotics.perturbed_spectrum(gA, v)
    n_check = cfg.n_check if cfg.n_check is not None else min(80, rep.dim // 3)
    weyl = asymptotics.weyl_lower_bound_check(rep, dom, n_check)
    verdicts = []
    found = weyl.n_star is not None
    verdicts.append(_verdict("weyl-n-star-exists", 0.0 if found else 1.0, 0.5, 0.0))
    if found:
        tail_min = float(np.min(weyl.margins[weyl.n_star - 1:]))
        verdicts.append(_verdict("weyl-margins", -tail_min, 0.0, 0.0))
    rows = [
        [k + 1, repr(float(rep.eigenvalues[k].real)),
         repr(float(rep.eigenvalues[k].imag)), repr(float(weyl.bounds[k])),
         repr(float(weyl.margins[k]))]
        for k in range(n_check)
    ]
    data = asymptotics.report_as_dict(rep, weyl=weyl)
    tables = {"margins": (["n", "re_lambda", "im_lambda", "bound", "margin"], rows)}
    return verdicts, data, tables


def _exp_heat_trace(cfg: ExperimentConfig, threads: int):
    dom = cfg.domain
    gA = schrodinger.build_dirichlet_laplacian(dom)
    v = cfg.build_potential(dom)
    trace = asymptotics.heat_trace_check(gA, v, dom, cfg.t_grid)
    verdicts, rows = [], []
    for t in sorted(trace.hs_bound_ok):
        verdicts.append(_verdict(
            f"hs-trace[t={t:g}]", trace.hs_lhs[t], trace.hs_rhs[t],
            trace.eps_disc[t]))
        verdicts.append(_verdict(
            f"series-trace[t={t:g}]", trace.series_lhs[t], trace.series_rhs[t],
            trace.eps_disc[t]))
        rows.append([t, trace.hs_lhs[t], trace.hs_rhs[t], trace.series_lhs[t],
                     trace.series_rhs[t], trace.eps_disc[t]])
    data = {"m1": trace.m1}
    tables = {
        "traces": (["t", "hs_lhs", "hs_rhs", "series_lhs", "series_rhs",
                    "eps_disc"], rows)
    }
    return verdicts, data, tables


EXPERIMENTS: Dict[str, Callable] = {
    "dyson-verify": _exp_dyson_verify,
    "duhamel": _exp_duhamel,
    "mixed": _exp_mixed,
    "resolvent-scan": _exp_resolvent_scan,
    "heat-kernel": _exp_heat_kernel,
    "bq-probe": _exp_bq_probe,
    "weyl-check": _exp_weyl_check,
    "heat-trace": _exp_heat_trace,
}


# -- report emission ------------------------------------------------------


def _sanitize(value):
    """Recursively convert to JSON-safe deterministic primitives."""
    if isinstance(value, dict):
        return {str(k): _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (np.floating, float)):
        out = float(value)
        if not math.isfinite(out):
            raise NumericalError(f"non-finite value in report: {out}")
        return out
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_sanitize(v) for v in value.tolist()]
    return value


def run_experiment(
    cfg: ExperimentConfig, out_dir: Path, threads: int = 1
) -> Tuple[int, dict]:
    """Execute one experiment, write report files, return (exit code, report)."""
    cfg.validate()
    verdicts, data, tables = EXPERIMENTS[cfg.experiment](cfg, threads)
    report = {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "verdicts": _sanitize(verdicts),
        "data": _sanitize(data),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = cfg.output or cfg.experiment
    json_path = out_dir / f"{stem}.json"
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, (header, rows) in tables.items():
        with open(out_dir / f"{stem}-{name}.csv", "w", encoding="utf-8",
                  newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    failed = [v for v in report["verdicts"] if not v["passed"]]
    return (2 if failed else 0), report


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semipert",
        description="Run verification experiments for semigroup perturbations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config", help="path to a JSON config file")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--seed", type=int, default=None, help="override the seed")
    run_p.add_argument("--threads", type=int, default=1,
                       help="worker threads for independent cells")
    val_p = sub.add_parser("validate", help="validate a config without running")
    val_p.add_argument("config", help="path to a JSON config file")
    sub.add_parser("list-experiments", help="list known experiment names")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "list-experiments":
        for name in sorted(EXPERIMENTS):
            print(name)
        return 0
    try:
        cfg = ExperimentConfig.from_file(args.config)
        if args.command == "validate":
            cfg.validate()
            print(f"config ok: experiment {cfg.experiment}")
            return 0
        if args.seed is not None:
            cfg.seed = args.seed
        out_dir = Path(
            args.out or os.environ.get(OUT_ENV_VAR) or DEFAULT_OUT
        )
        code, report = run_experiment(cfg, out_dir, threads=max(1, args.threads))
        n_fail = sum(1 for v in report["verdicts"] if not v["passed"])
        n_total = len(report["verdicts"])
        print(f"{cfg.experiment}: {n_total - n_fail}/{n_total} verdicts passed")
        return code
    except (InputError, ResolutionError, DivergenceError, SpectrumError,
            NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
