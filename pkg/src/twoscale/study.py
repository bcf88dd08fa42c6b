"""Convergence studies: oscillating problems against their effective limit."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .cell import solve_correctors
from .coeffs import make_preset
from .effective import assemble_effective, effective_index, solve_homogenized
from .errors import ConfigurationError
from .forms import assemble_delta_form, diagnose, form_index, default_mode
from .grid import DIRICHLET, PERIODIC, ScalarField, build_grid, h1_norm, l2_norm
from .solver import ResolventOperator, load_vector
from .unfold import is_aligned, build_partition, two_scale_error

TWO_PI = 2.0 * np.pi


def _one(p):
    return np.ones(p.shape[:-1])


def _sine(p):
    return np.sin(np.pi * p[..., 0]) * np.sin(np.pi * p[..., 1])


def _eigen(p):
    return 2.0 * np.pi**2 * _sine(p)


def _bump(p):
    r2 = (p[..., 0] - 0.4) ** 2 + (p[..., 1] - 0.6) ** 2
    return np.exp(-r2 / 0.05)


def _cosines(p):
    return np.cos(TWO_PI * p[..., 0]) * np.cos(TWO_PI * p[..., 1])


#: named right-hand sides ``f(points) -> values``
RHS = {"one": _one, "sine": _sine, "eigen": _eigen, "bump": _bump, "cosines": _cosines}


def rhs_function(name):
    try:
        return RHS[name]
    except KeyError:
        raise ConfigurationError(f"unknown rhs {name!r}; choose from {sorted(RHS)}") from None


@dataclass
class StudyConfig:
    """Parameters of a convergence study.

    ``lam`` is a number or ``"auto"`` (index plus ``lam_margin``).  ``g``
    names the perturbation in ``f_delta = f + delta g`` used by resolvent
    studies.
    """

    preset: str = "layered"
    params: dict = field(default_factory=dict)
    deltas: tuple = (0.25, 0.125, 0.0625)
    n: int = 256
    m: int = 128
    lam: object = "auto"
    lam_margin: float = 1.0
    rhs: str = "one"
    g: str = "cosines"
    seed: int = 0
    tol: float = 1e-10
    corrector_tol: float = 1e-9
    quad_order: int = 2
    beta0_mode: Optional[str] = None
    diag_n: int = 16
    threads: int = 1

    def validate(self):
        """Static checks; the index condition is checked in :func:`prepare`."""
        deltas = tuple(float(d) for d in self.deltas)
        if not deltas:
            raise ConfigurationError("delta list is empty")
        if any(not 0 < d <= 1 for d in deltas):
            raise ConfigurationError(f"every delta must lie in (0, 1], got {list(deltas)}")
        if any(b >= a for a, b in zip(deltas, deltas[1:])):
            raise ConfigurationError(f"delta list must be strictly decreasing, got {list(deltas)}")
        for d in deltas:
            if self.n * d < 8 - 1e-9:
                raise ConfigurationError(
                    f"mesh size 1/{self.n} is coarser than delta/8 for delta={d}")
        if self.m < 2:
            raise ConfigurationError("Y-grid needs m >= 2")
        if self.lam != "auto" and not isinstance(self.lam, (int, float)):
            raise ConfigurationError(f"lam must be a number or 'auto', got {self.lam!r}")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        rhs_function(self.rhs)
        rhs_function(self.g)
        self.deltas = deltas
        return self

    def to_dict(self):
        d = asdict(self)
        d["deltas"] = list(self.deltas)
        return d

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigurationError(f"unknown study keys: {sorted(extra)}")
        return cls(**data)


@dataclass
class StudyReport:
    config: dict
    rows: list
    effective: dict
    diagnostics: dict
    timing: dict = field(default_factory=dict)
    kind: str = "convergence"

    def column(self, key):
        return np.array([r[key] for r in self.rows])

    def to_dict(self, with_timing=True):
        d = {"kind": self.kind, "config": self.config, "rows": self.rows,
             "effective": self.effective, "diagnostics": self.diagnostics}
        if with_timing:
            d["timing"] = self.timing
        return d

    def to_json(self, with_timing=True):
        """Deterministic JSON; all timing lives under ``"timing"``."""
        return json.dumps(self.to_dict(with_timing), indent=2, sort_keys=True)


def _annotate(exc, **ctx):
    tag = ", ".join(f"{k}={v}" for k, v in ctx.items())
    if exc.args:
        exc.args = (f"[{tag}] {exc.args[0]}",) + exc.args[1:]
    for k, v in ctx.items():
        setattr(exc, k, v)
    return exc


@dataclass
class Prepared:
    coeff: object
    macro: object
    y_grid: object
    correctors: object
    eff: object
    beta0: float
    beta_prime: float
    lam: float
    f: object


def study_index(coeff, deltas, mode=None, seed=0):
    """Largest form index over the delta list.

    The empirical estimate runs on a grid resolving each delta with eight
    cells (at least 32, at most 64 cells per side).
    """
    if not coeff.has_drift:
        return 0.0
    mode = mode or default_mode(coeff)
    if mode == "analytic":
        return form_index(coeff, mode)
    out = 0.0
    for d in deltas:
        n = int(min(64, max(32, math.ceil(8.0 / d))))
        out = max(out, form_index(coeff, mode, delta=d, seed=seed, grid=build_grid(DIRICHLET, n)))
    return out


def prepare(config):
    """Coefficients, grids, correctors, effective data and the index check."""
    config.validate()
    timing = {}
    t0 = time.perf_counter()
    coeff = make_preset(config.preset, **config.params)
    macro = build_grid(DIRICHLET, config.n, config.quad_order)
    y_grid = build_grid(PERIODIC, config.m, config.quad_order)
    beta0 = study_index(coeff, config.deltas, config.beta0_mode, config.seed)
    timing["index"] = time.perf_counter() - t0
    if config.lam != "auto" and not float(config.lam) > beta0:
        raise ConfigurationError(f"lambda={float(config.lam)} must exceed the index beta0={beta0}")

    t0 = time.perf_counter()
    x_points = None if coeff.is_periodic_only else macro.quad_points
    try:
        correctors = solve_correctors(coeff, y_grid, x_points, tol=config.corrector_tol)
        eff = assemble_effective(coeff, correctors)
    except Exception as exc:
        raise _annotate(exc, stage="correctors")
    timing["correctors"] = time.perf_counter() - t0
    beta_prime = effective_index(eff, macro, seed=config.seed)

    if config.lam == "auto":
        lam = max(beta0, beta_prime) + config.lam_margin
    else:
        lam = float(config.lam)
    if not lam > beta0:
        raise ConfigurationError(f"lambda={lam} must exceed the index beta0={beta0}")
    if not lam > beta_prime:
        raise ConfigurationError(
            f"lambda={lam} must exceed the effective index beta'={beta_prime} (beta0={beta0})")
    f = rhs_function(config.rhs)
    return Prepared(coeff, macro, y_grid, correctors, eff, beta0, beta_prime, lam, f), timing


def _diagnostics(prep, config):
    out = {"beta0": prep.beta0, "beta_prime": prep.beta_prime, "lambda": prep.lam,
           "M": prep.eff.M, "M_squared": prep.eff.M_squared}
    grid = build_grid(DIRICHLET, config.diag_n)
    diag = diagnose(grid, prep.coeff, config.deltas[0], config.beta0_mode, seed=config.seed)
    out.update({"kappa1": diag.kappa1, "kappa2": diag.kappa2, "sector": diag.sector,
                "sector_sampled": diag.sector_sampled, "diag_n": config.diag_n,
                "diag_delta": config.deltas[0], "seed": config.seed})
    return out


def _map(func, items, threads):
    if threads <= 1:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def _solve_delta(prep, config, delta, dual):
    stage = "assemble"
    try:
        form = assemble_delta_form(prep.macro, prep.coeff, delta, prep.lam)
        stage = "solve"
        u = ScalarField(prep.macro, ResolventOperator(form, config.tol).solve_vector(dual))
    except Exception as exc:
        raise _annotate(exc, delta=delta, stage=stage)
    return form, u


def run_convergence(config):
    """Per-delta errors of ``u_delta`` against the homogenized ``u0``.

    Rows hold the L2 and H1 distances, both energies and their gap and the
    two-scale gradient error (``nan`` when the grids do not align).
    """
    t_all = time.perf_counter()
    prep, timing = prepare(config)
    t0 = time.perf_counter()
    u0, form0 = solve_homogenized(prep.macro, prep.eff, prep.lam, prep.f, prep.beta_prime, config.tol)
    e0 = form0.energy(u0)
    timing["homogenized"] = time.perf_counter() - t0
    dual = load_vector(prep.macro, prep.f)

    def row(delta):
        t = time.perf_counter()
        form, u = _solve_delta(prep, config, delta, dual)
        diff = u - u0
        try:
            part = build_partition(delta)
            ts = (two_scale_error(u, u0, prep.correctors, delta)
                  if is_aligned(part, prep.macro, prep.y_grid) else math.nan)
        except Exception as exc:
            raise _annotate(exc, delta=delta, stage="two-scale")
        e = form.energy(u)
        return {
            "delta": delta,
            "l2_error": l2_norm(diff),
            "h1_error": h1_norm(diff),
            "energy_delta": e,
            "energy_0": e0,
            "energy_gap": abs(e - e0),
            "two_scale_error": ts,
        }, time.perf_counter() - t

    results = _map(row, config.deltas, config.threads)
    rows = [r for r, _ in results]
    timing["per_delta"] = [t for _, t in results]
    diagnostics = _diagnostics(prep, config)
    timing["total"] = time.perf_counter() - t_all
    return StudyReport(config.to_dict(), rows, prep.eff.to_dict(), diagnostics, timing)


def run_resolvent_convergence(config):
    """Rows ``||G^delta_lam f_delta - G^0_lam f||`` with ``f_delta = f + delta g``."""
    t_all = time.perf_counter()
    prep, timing = prepare(config)
    u0, form0 = solve_homogenized(prep.macro, prep.eff, prep.lam, prep.f, prep.beta_prime, config.tol)
    e0 = form0.energy(u0)
    base = load_vector(prep.macro, prep.f)
    pert = load_vector(prep.macro, rhs_function(config.g))

    def row(delta):
        t = time.perf_counter()
        form, u = _solve_delta(prep, config, delta, base + delta * pert)
        e = form.energy(u)
        return {
            "delta": delta,
            "resolvent_distance": l2_norm(u - u0),
            "energy_delta": e,
            "energy_0": e0,
            "energy_gap": abs(e - e0),
        }, time.perf_counter() - t

    results = _map(row, config.deltas, config.threads)
    timing["per_delta"] = [t for _, t in results]
    timing["total"] = time.perf_counter() - t_all
    diagnostics = {"beta0": prep.beta0, "beta_prime": prep.beta_prime, "lambda": prep.lam}
    return StudyReport(config.to_dict(), [r for r, _ in results], prep.eff.to_dict(),
                       diagnostics, timing, kind="resolvent")


def is_decreasing(values, last_slack=0.0):
    """Strict decrease, allowing ``last_slack`` relative growth on the final step."""
    v = list(values)
    for i in range(1, len(v)):
        slack = last_slack if i == len(v) - 1 else 0.0
        if not v[i] < v[i - 1] * (1 + slack):
            return False
    return True
