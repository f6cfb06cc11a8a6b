"""
Experiment harness
------------------

Plain ``[section]`` / ``key = value`` configuration files drive every
experiment. Each subcommand declares the sections and keys it understands;
unknown keys, missing required keys and out-of-range values raise
:class:`~apfv.errors.ConfigurationError` naming the key.

Every run writes its CSV files (header row, shortest round-trip floats)
plus a JSON sidecar ``<subcommand>.json`` holding the resolved
configuration, the seed, library versions and the wall-clock time.

.. autofunction:: load_config
.. autofunction:: run_experiment
.. autofunction:: convergence_table
"""

from __future__ import annotations

import configparser
import csv
import json
import platform
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from apfv.errors import (
    APFVError,
    ConfigurationError,
    DomainError,
    HyperbolicityError,
    InvariantViolation,
    NumericalFailure,
    PreconditionError,
    StructureError,
    UnsupportedError,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_INVARIANT = 3

REQUIRED = object()


# {{{ typed keys

def _float_list(text):
    return [float(x) for x in text.replace(",", " ").split()]


def _int_list(text):
    return [int(x) for x in text.replace(",", " ").split()]


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any = REQUIRED
    check: Callable[[Any], bool] | None = None
    requirement: str = ""


def positive(v):
    return v > 0


def nonnegative(v):
    return v >= 0


def unit_interval(v):
    return 0 < v <= 1


def all_in_unit_interval(v):
    return len(v) > 0 and all(0 < x <= 1 for x in v)


# }}}


# {{{ schemas

MODEL = {"name": Key(str)}  # model parameters are validated by the model itself
GRID = {
    "cells": Key(int, 200, lambda v: v >= 4, "cells >= 4"),
    "length": Key(float, 20.0, positive, "> 0"),
}
INITIAL = {
    "profile": Key(str, "gaussian",
                   lambda v: v in ("gaussian", "sine", "random-equilibrium", "random-states"),
                   "gaussian, sine, random-equilibrium or random-states"),
    "base": Key(float, 0.5),
    "amplitude": Key(float, 1.0),
    "center": Key(float, None),
    "width": Key(float, 2.0, positive, "> 0"),
    "modes": Key(int, 4, lambda v: v >= 1, ">= 1"),
}
RUN = {"seed": Key(int, 0, nonnegative, ">= 0")}

SCHEMAS: dict[str, dict[str, dict[str, Key]]] = {
    "models-check": {
        "run": RUN,
        "model": {"name": Key(str, "all")},
        "check": {
            "samples": Key(int, 1000, lambda v: v >= 1, ">= 1"),
        },
    },
    "effective": {
        "run": RUN,
        "model": MODEL,
        "effective": {"samples": Key(int, 10, lambda v: v >= 1, ">= 1")},
    },
    "run-hll": {
        "run": RUN, "model": MODEL, "grid": GRID, "initial": INITIAL,
        "hll": {
            "t_final": Key(float, REQUIRED, positive, "> 0"),
            "safety": Key(float, 0.9, unit_interval, "in (0, 1]"),
            "b": Key(float, None, positive, "> 0"),
        },
    },
    "run-ap": {
        "run": RUN, "model": MODEL, "grid": GRID, "initial": INITIAL,
        "ap": {
            "epsilon": Key(float, REQUIRED, unit_interval, "in (0, 1]"),
            "t_final": Key(float, REQUIRED, positive, "> 0"),
            "safety": Key(float, 0.9, unit_interval, "in (0, 1]"),
            "b": Key(float, None, positive, "> 0"),
            "check_invariant_domain": Key(_bool, False),
            "max_steps": Key(int, None, lambda v: v >= 1, ">= 1"),
        },
    },
    "run-parabolic": {
        "run": RUN, "model": MODEL, "grid": GRID, "initial": INITIAL,
        "parabolic": {
            "t_final": Key(float, REQUIRED, positive, "> 0"),
            "delta": Key(float, 1e-8, positive, "> 0"),
        },
    },
    "compare-asymptotic": {
        "run": RUN, "model": MODEL, "grid": GRID, "initial": INITIAL,
        "compare": {
            "epsilon": Key(_float_list, REQUIRED, all_in_unit_interval,
                           "a nonempty list of values in (0, 1]"),
            "t_final": Key(float, REQUIRED, positive, "> 0"),
            "safety": Key(float, 0.9, unit_interval, "in (0, 1]"),
        },
    },
    "run-spacetime": {
        "run": RUN,
        "spacetime": {
            "preset": Key(str, "flat-burgers"),
            "elements": Key(int, 100, lambda v: v >= 3, ">= 3"),
            "slabs": Key(int, 0, nonnegative, ">= 0 (0 picks a stable count)"),
            "t_final": Key(float, 1.0, positive, "> 0"),
            "jitter": Key(float, 0.0, lambda v: 0 <= v < 0.5, "in [0, 0.5)"),
            "initial": Key(str, "riemann", lambda v: v in ("riemann", "sine"),
                           "riemann or sine"),
            "u_left": Key(float, 1.0),
            "u_right": Key(float, 0.0),
            "safety": Key(float, 0.9, unit_interval, "in (0, 1]"),
            "diagnostics": Key(_bool, True),
            "kruzkov_samples": Key(int, 50, lambda v: v >= 1, ">= 1"),
            "enforce_entropy": Key(_bool, False),
            "entropy_tolerance": Key(float, 1e-12, nonnegative, ">= 0"),
        },
    },
    "convergence": {
        "run": RUN, "model": {"name": Key(str, "euler-friction")}, "initial": INITIAL,
        "convergence": {
            "solver": Key(str, "ap", lambda v: v in ("ap", "heat"), "ap or heat"),
            "cells": Key(_int_list, REQUIRED, lambda v: len(v) >= 3 and min(v) >= 4,
                         "at least three resolutions with >= 4 cells"),
            "length": Key(float, 20.0, positive, "> 0"),
            "epsilon": Key(float, 1e-4, unit_interval, "in (0, 1]"),
            "t_final": Key(float, REQUIRED, positive, "> 0"),
            "reference_factor": Key(int, 4, lambda v: v >= 1, ">= 1"),
            "coefficient": Key(float, 1.0, positive, "> 0"),
            "mode": Key(int, 1, lambda v: v >= 1, ">= 1"),
        },
    },
}

#: sections whose keys beyond the schema are passed to the model constructor
OPEN_SECTIONS = {"model"}

# }}}


# {{{ configuration

@dataclass
class ExperimentConfig:
    subcommand: str
    sections: dict[str, dict[str, Any]]
    raw: dict[str, dict[str, str]]

    def __getitem__(self, section):
        return self.sections[section]

    @property
    def seed(self):
        return self.sections["run"]["seed"]

    def model_params(self):
        known = set(SCHEMAS[self.subcommand]["model"])
        params = {}
        for k, v in self.raw.get("model", {}).items():
            if k in known:
                continue
            try:
                params[k] = float(v)
            except ValueError:
                raise ConfigurationError(f"[model] {k}: expected a number, got {v!r}") from None
        return params


def load_config(subcommand: str, text: str = "", *, seed: int | None = None) -> ExperimentConfig:
    """Parse and validate ``text`` against the schema of ``subcommand``."""
    if subcommand not in SCHEMAS:
        raise ConfigurationError(f"unknown subcommand '{subcommand}'")
    schema = SCHEMAS[subcommand]

    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"unreadable configuration: {exc}") from None

    raw = {s: dict(parser[s]) for s in parser.sections()}
    for s in raw:
        if s not in schema:
            raise ConfigurationError(f"unknown section [{s}] for '{subcommand}'")

    sections: dict[str, dict[str, Any]] = {}
    for s, keys in schema.items():
        given = raw.get(s, {})
        if s not in OPEN_SECTIONS:
            for k in given:
                if k not in keys:
                    raise ConfigurationError(f"unknown key '{k}' in [{s}]")
        out = {}
        for k, spec in keys.items():
            if k in given:
                try:
                    value = spec.parse(given[k])
                except ValueError:
                    raise ConfigurationError(
                        f"[{s}] {k}: cannot parse {given[k]!r}") from None
                if spec.check is not None and not spec.check(value):
                    raise ConfigurationError(f"[{s}] {k} = {given[k]} must be {spec.requirement}")
                out[k] = value
            elif spec.default is REQUIRED:
                raise ConfigurationError(f"missing required key '{k}' in [{s}]")
            else:
                out[k] = spec.default
        sections[s] = out

    if seed is not None:
        if seed < 0:
            raise ConfigurationError("seed must be >= 0")
        sections["run"]["seed"] = seed
    return ExperimentConfig(subcommand, sections, raw)

# }}}


# {{{ output

def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])


def _versions():
    import numba

    from apfv import __version__

    return {"apfv": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "numba": numba.__version__}


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v

# }}}


# {{{ initial data

def initial_equilibrium(model, x, length, section, rng):
    """Equilibrium variable ``u`` of shape ``(cells, n)`` from an ``[initial]`` section."""
    base, amp = section["base"], section["amplitude"]
    center = 0.5 * length if section["center"] is None else section["center"]
    profile = section["profile"]
    if profile == "gaussian":
        u = base + amp * np.exp(-((x - center) / section["width"]) ** 2)
    elif profile == "sine":
        u = base + amp * np.sin(2 * np.pi * x / length)
    elif profile == "random-equilibrium":
        u = np.full_like(x, base)
        for k in range(1, section["modes"] + 1):
            a, p = rng.uniform(0, 1), rng.uniform(0, 2 * np.pi)
            u = u + amp * a / k * np.sin(2 * np.pi * k * x / length + p)
    else:
        raise ConfigurationError(f"profile '{profile}' does not define an equilibrium")
    u = np.repeat(u[:, None], model.n, axis=1)
    try:
        model.check_equilibrium(u)
    except DomainError as exc:
        raise ConfigurationError(f"[initial] profile leaves the equilibrium domain: {exc}") from None
    return u


def initial_states(model, grid, section, rng):
    if section["profile"] == "random-states":
        return model.sample_states(rng, grid.cells)
    return model.equilibrium_lift(initial_equilibrium(model, grid.centers, grid.length,
                                                      section, rng))

# }}}


# {{{ convergence table

@dataclass(frozen=True)
class ConvergenceRow:
    cells: int
    dx: float
    error: float
    order: float | None


def restrict(values, factor):
    """Cell averages of a fine periodic field on a grid ``factor`` times coarser."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] % factor:
        raise PreconditionError("fine grid is not a refinement of the coarse grid")
    return values.reshape(values.shape[0] // factor, factor, *values.shape[1:]).mean(axis=1)


def convergence_table(runs, reference, length):
    """L1 errors of coarse runs against a reference and observed orders.

    ``runs`` is a sequence of ``(cells, u)`` with ``u`` of shape ``(cells, n)``
    on ``[0, length)``; ``reference`` is ``(cells_ref, u_ref)`` on the same
    domain, or a callable ``cells -> u`` giving exact cell values. The
    reference is averaged onto each coarse grid.
    """
    runs = list(runs)
    if len(runs) < 3:
        raise PreconditionError("a convergence table needs at least three resolutions")
    rows = []
    prev = None
    for cells, u in runs:
        u = np.asarray(u, dtype=np.float64).reshape(cells, -1)
        if callable(reference):
            ref = np.asarray(reference(cells), dtype=np.float64).reshape(cells, -1)
        else:
            ncells, uref = reference
            if ncells % cells:
                raise PreconditionError(
                    f"reference grid ({ncells} cells) does not refine {cells} cells")
            ref = restrict(np.asarray(uref).reshape(ncells, -1), ncells // cells)
        if ref.shape != u.shape:
            raise PreconditionError("run and reference have mismatched component counts")
        dx = length / cells
        err = float(np.sum(np.abs(u - ref)) * dx)
        order = None
        if prev is not None and err > 0 and prev[1] > 0:
            order = float(np.log(prev[1] / err) / np.log(cells / prev[0]))
        rows.append(ConvergenceRow(cells, dx, err, order))
        prev = (cells, err)
    return rows

# }}}


# {{{ drivers

def _model(cfg):
    from apfv.models import get_model

    return get_model(cfg["model"]["name"], **cfg.model_params())


def _grid(cfg):
    from apfv.hyperbolic import UniformGrid1D

    return UniformGrid1D(cfg["grid"]["cells"], cfg["grid"]["length"])


def _state_rows(grid, U, extra=None):
    rows = []
    for i, x in enumerate(grid.centers):
        row = [x, *U[i]]
        if extra is not None:
            row.extend(extra[i])
        rows.append(row)
    return rows


def drive_models_check(cfg, out, meta):
    from apfv.models import MODELS, get_model, verify_structural_conditions

    name = cfg["model"]["name"]
    names = list(MODELS) if name == "all" else [name]
    rows, failed = [], []
    for n in names:
        model = get_model(n) if name == "all" else _model(cfg)
        rep = verify_structural_conditions(model, cfg["check"]["samples"], seed=cfg.seed)
        for r in rep.results:
            rows.append([n, r.name, r.passed, r.max_residual, r.tolerance])
            if not r.passed:
                failed.append(f"{n}:{r.name}")
    write_csv(out / "models_check.csv", ["model", "condition", "passed", "residual", "tolerance"],
              rows)
    meta["outputs"].append("models_check.csv")
    if failed:
        raise InvariantViolation("structural conditions failed: " + ", ".join(failed))


def drive_effective(cfg, out, meta):
    from apfv.chapman_enskog import (
        closed_form_effective,
        effective_diffusion_matrix,
        nonlinear_relaxation_coefficient,
    )

    model = _model(cfg)
    rng = np.random.default_rng(cfg.seed)
    samples = model.sample_equilibria(rng, cfg["effective"]["samples"])
    rows = []
    if model.q != 1:
        for u in samples:
            slope = float(rng.uniform(-1, 1))
            c = nonlinear_relaxation_coefficient(model, u, np.array([slope]))
            rows.append([*u, slope, c.c, c.residual])
        header = [f"u{k}" for k in range(model.n)] + ["du_dx", "coefficient", "residual"]
    else:
        eq = closed_form_effective(model)
        for u in samples:
            M = effective_diffusion_matrix(model, u).M
            Mc = np.asarray(eq.diffusion(u))
            rel = float(np.max(np.abs(M - Mc)) / max(np.max(np.abs(Mc)), 1e-300))
            rows.append([*u, *M.ravel(), *Mc.ravel(), rel])
        nn = [f"{i}{j}" for i in range(model.n) for j in range(model.n)]
        header = ([f"u{k}" for k in range(model.n)] + [f"M{k}" for k in nn]
                  + [f"closed{k}" for k in nn] + ["relative_error"])
    write_csv(out / "effective.csv", header, rows)
    meta["outputs"].append("effective.csv")


def drive_run_hll(cfg, out, meta):
    from apfv.hyperbolic import DiscreteField, run_hll

    model, grid = _model(cfg), _grid(cfg)
    rng = np.random.default_rng(cfg.seed)
    field = DiscreteField(grid, initial_states(model, grid, cfg["initial"], rng))
    sec = cfg["hll"]
    res = run_hll(model, field, sec["t_final"], sec["safety"], sec["b"])
    write_csv(out / "hll.csv", ["x"] + [f"U{k}" for k in range(model.N)],
              _state_rows(grid, res.states))
    meta["outputs"].append("hll.csv")


def drive_run_ap(cfg, out, meta):
    from apfv.ap import APConfig, ap_invariant_domain_check, run_ap
    from apfv.hyperbolic import DiscreteField

    model, grid = _model(cfg), _grid(cfg)
    rng = np.random.default_rng(cfg.seed)
    sec = cfg["ap"]
    apc = APConfig(sec["epsilon"], b=sec["b"])
    field = DiscreteField(grid, initial_states(model, grid, cfg["initial"], rng))

    ent = model.entropy
    history = []

    def record(f):
        if ent is not None:
            history.append((f.time, grid.dx * float(np.sum(ent.entropy(f.states)))))
        if sec["check_invariant_domain"]:
            bad = ap_invariant_domain_check(model, f, apc)
            if bad:
                raise InvariantViolation(
                    f"starred state {bad[0].side} at interface {bad[0].interface}: "
                    f"{bad[0].message}", index=bad[0].interface)

    record(field)
    res = run_ap(model, field, apc, sec["t_final"], sec["safety"], callback=record,
                 max_steps=sec["max_steps"])
    u = res.states @ model.Q.T
    write_csv(out / "ap.csv", ["x"] + [f"U{k}" for k in range(model.N)]
              + [f"u{k}" for k in range(model.n)], _state_rows(grid, res.states, u))
    meta["outputs"].append("ap.csv")
    meta["steps"] = len(history) - 1 if history else None
    if history:
        write_csv(out / "ap_entropy.csv", ["time", "entropy"], history)
        meta["outputs"].append("ap_entropy.csv")


def drive_run_parabolic(cfg, out, meta):
    from apfv.parabolic import parabolic_problem, solve_parabolic

    model, grid = _model(cfg), _grid(cfg)
    rng = np.random.default_rng(cfg.seed)
    u0 = initial_equilibrium(model, grid.centers, grid.length, cfg["initial"], rng)
    sec = cfg["parabolic"]
    u = solve_parabolic(parabolic_problem(model, sec["delta"]), u0, sec["t_final"], grid.dx)
    write_csv(out / "parabolic.csv", ["x"] + [f"u{k}" for k in range(model.n)],
              _state_rows(grid, u))
    meta["outputs"].append("parabolic.csv")


def drive_compare_asymptotic(cfg, out, meta):
    from apfv.ap import APConfig, run_ap
    from apfv.hyperbolic import DiscreteField
    from apfv.parabolic import parabolic_problem, solve_parabolic

    model, grid = _model(cfg), _grid(cfg)
    rng = np.random.default_rng(cfg.seed)
    sec = cfg["compare"]
    u0 = initial_equilibrium(model, grid.centers, grid.length, cfg["initial"], rng)
    ref = solve_parabolic(parabolic_problem(model), u0, sec["t_final"], grid.dx)
    norm = float(np.sum(np.abs(ref)) * grid.dx)
    rows = []
    for eps in sec["epsilon"]:
        t0 = time.perf_counter()
        res = run_ap(model, DiscreteField(grid, model.equilibrium_lift(u0)), APConfig(eps),
                     sec["t_final"], sec["safety"])
        d = float(np.sum(np.abs(res.states @ model.Q.T - ref)) * grid.dx)
        rows.append([eps, d, d / norm])
        meta.setdefault("wall_clock_per_epsilon", []).append(time.perf_counter() - t0)
    write_csv(out / "compare_asymptotic.csv", ["epsilon", "l1_distance", "relative"], rows)
    meta["outputs"].append("compare_asymptotic.csv")


def spacetime_initial(sec):
    if sec["initial"] == "riemann":
        ul, ur = sec["u_left"], sec["u_right"]
        return lambda th: np.where(np.mod(th, 2 * np.pi) < np.pi, ul, ur)
    ul, ur = sec["u_left"], sec["u_right"]
    return lambda th: 0.5 * (ul + ur) + 0.5 * (ul - ur) * np.sin(th)


def drive_run_spacetime(cfg, out, meta):
    from apfv.spacetime import (
        SpacetimeTriangulation,
        entropy_residual,
        get_preset,
        kruzkov_contraction,
        solve_spacetime,
        stable_slab_count,
    )

    sec = cfg["spacetime"]
    omega = get_preset(sec["preset"])
    u0 = spacetime_initial(sec)
    lo, hi = sorted((sec["u_left"], sec["u_right"]))
    if hi == lo:
        hi = lo + 1e-3
    rng_data = (lo, hi)
    J, T = sec["elements"], sec["t_final"]
    if sec["slabs"]:
        if sec["jitter"]:
            mesh = SpacetimeTriangulation.jittered(J, sec["slabs"], T, sec["jitter"], cfg.seed)
        else:
            mesh = SpacetimeTriangulation.uniform(J, sec["slabs"], T)
    else:
        _, mesh = stable_slab_count(omega, J, T, rng_data, safety=sec["safety"],
                                    jitter=sec["jitter"], seed=cfg.seed)
    meta["slabs"] = mesh.slabs

    sol = solve_spacetime(omega, mesh, u0, data_range=rng_data)
    a, b = mesh.nodes, np.roll(mesh.nodes, -1, axis=1)
    b[:, -1] += 2 * np.pi
    centers = 0.5 * (a + b)
    rows = [[i, mesh.slice_times[i], centers[i, j], sol.values[i, j]]
            for i in range(mesh.slabs + 1) for j in range(J)]
    write_csv(out / "spacetime_slices.csv", ["slice", "t", "theta_center", "u"], rows)
    meta["outputs"].append("spacetime_slices.csv")
    meta["max_decomposition_residual"] = sol.max_decomposition_residual

    if not sec["diagnostics"]:
        return
    const = 0.5 * (lo + hi)
    ref = solve_spacetime(omega, mesh, lambda th: np.full_like(th, const), data_range=rng_data)
    contraction = kruzkov_contraction(sol, ref)
    span = hi - lo
    cs = np.linspace(lo - 0.1 * span, hi + 0.1 * span, sec["kruzkov_samples"])
    dissipation = 0.0
    rows = [[0, contraction[0], 0.0, 0.0]]
    worst = -np.inf
    for s in sol.slabs:
        d = s.intermediates - s.u_plus[:, None]
        dissipation += float(np.sum(s.upper.measure[:, None] / 2 * d * d))
        r = float(np.max(entropy_residual(omega, s, cs)))
        worst = max(worst, r)
        rows.append([s.index + 1, contraction[s.index + 1], dissipation, r])
    write_csv(out / "spacetime_diagnostics.csv",
              ["slice", "contraction", "dissipation_total", "max_entropy_residual"], rows)
    meta["outputs"].append("spacetime_diagnostics.csv")
    meta["max_entropy_residual"] = worst
    if sec["enforce_entropy"] and worst > sec["entropy_tolerance"]:
        raise InvariantViolation(f"entropy residual {worst:.3e} above tolerance "
                                 f"{sec['entropy_tolerance']:g}")


def drive_convergence(cfg, out, meta):
    from apfv.hyperbolic import UniformGrid1D

    sec = cfg["convergence"]
    length = sec["length"]
    cells = sorted(sec["cells"])
    rng = np.random.default_rng(cfg.seed)
    T = sec["t_final"]

    if sec["solver"] == "heat":
        from apfv.parabolic import heat_problem, solve_parabolic

        D, k = sec["coefficient"], sec["mode"]
        wave = 2 * np.pi * k / length

        def exact(n):
            # exact cell averages of sin(wave x) exp(-D wave^2 T)
            x = np.arange(n + 1) * length / n
            return (-(np.cos(wave * x[1:]) - np.cos(wave * x[:-1])) / (wave * length / n)
                    * np.exp(-D * wave * wave * T))

        runs = []
        for n in cells:
            g = UniformGrid1D(n, length)
            x = np.arange(n + 1) * g.dx
            u0 = -(np.cos(wave * x[1:]) - np.cos(wave * x[:-1])) / (wave * g.dx)
            runs.append((n, solve_parabolic(heat_problem(D), u0, T, g.dx)))
        rows = convergence_table(runs, exact, length)
    else:
        from apfv.ap import APConfig, run_ap
        from apfv.hyperbolic import DiscreteField
        from apfv.parabolic import parabolic_problem, solve_parabolic

        model = _model(cfg)
        nref = cells[-1] * sec["reference_factor"]
        gref = UniformGrid1D(nref, length)
        # the initial profile is sampled on the finest grid and averaged down
        u_fine = initial_equilibrium(model, gref.centers, length, cfg["initial"], rng)
        ref = solve_parabolic(parabolic_problem(model), u_fine, T, gref.dx)
        runs = []
        for n in cells:
            if nref % n:
                raise ConfigurationError(f"[convergence] cells: {n} does not divide {nref}")
            g = UniformGrid1D(n, length)
            u0 = restrict(u_fine, nref // n)
            res = run_ap(model, DiscreteField(g, model.equilibrium_lift(u0)),
                         APConfig(sec["epsilon"]), T)
            runs.append((n, res.states @ model.Q.T))
        rows = convergence_table(runs, (nref, ref), length)

    write_csv(out / "convergence.csv", ["cells", "dx", "l1_error", "observed_order"],
              [[r.cells, r.dx, r.error, "" if r.order is None else r.order] for r in rows])
    meta["outputs"].append("convergence.csv")


DRIVERS = {
    "models-check": drive_models_check,
    "effective": drive_effective,
    "run-hll": drive_run_hll,
    "run-ap": drive_run_ap,
    "run-parabolic": drive_run_parabolic,
    "compare-asymptotic": drive_compare_asymptotic,
    "run-spacetime": drive_run_spacetime,
    "convergence": drive_convergence,
}

# }}}


# {{{ dispatch

def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, InvariantViolation):
        return EXIT_INVARIANT
    if isinstance(exc, (NumericalFailure, HyperbolicityError, StructureError,
                        np.linalg.LinAlgError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (ConfigurationError, DomainError, PreconditionError, UnsupportedError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


@dataclass
class RunResult:
    status: int
    message: str
    outputs: list


def run_experiment(cfg: ExperimentConfig, out_dir) -> RunResult:
    """Run one experiment; never raises for package errors, returns the exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta: dict[str, Any] = {"outputs": []}
    t0 = time.perf_counter()
    status, message = EXIT_OK, "ok"
    try:
        DRIVERS[cfg.subcommand](cfg, out, meta)
    except (APFVError, np.linalg.LinAlgError) as exc:
        status, message = exit_code_for(exc), f"{type(exc).__name__}: {exc}"

    sidecar = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": cfg.subcommand,
        "config": {s: {k: _jsonable(v) for k, v in sec.items()}
                   for s, sec in cfg.sections.items()},
        "model_parameters": cfg.model_params() if "model" in cfg.sections else {},
        "seed": cfg.seed,
        "versions": _versions(),
        "wall_clock_seconds": time.perf_counter() - t0,
        "status": status,
        "message": message,
        **{k: _jsonable(v) for k, v in meta.items()},
    }
    with open(out / f"{cfg.subcommand}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return RunResult(status, message, list(meta["outputs"]))

# }}}
