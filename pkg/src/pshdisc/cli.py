"""Scenario runner.

A scenario is an INI-style key-value file.  The ``[scenario]`` section fixes
the structure, the domain, the function and the seed; every following
section ``[task <type> <label>]`` is one task, executed in file order.  The
grammar is documented in ``docs/scenario.md``.

Usage::

    pshdisc run <scenario-file> [--out DIR] [--seed N] [--verbose]
    pshdisc validate <scenario-file>
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .disc_calculus import DiscField, sup_norm
from .disc_solver import (
    SolverConfig,
    SolveTrace,
    TranslationTrace,
    estimate_c0,
    pde_residual,
    psi_map,
    select_mode,
    solve_disc,
    structural_residual,
    translate_disc,
)
from .domain import Domain, GridSpec, as_point, to_real
from .envelope import (
    SampledField,
    SearchConfig,
    boundary_mean,
    constant_function,
    continuity_report,
    envelope_field,
    neg_sq_z1,
    poletsky_envelope,
    re_z1,
    sq_distance,
    write_field_json,
)
from .errors import (
    BoundViolation,
    CertificationFailure,
    EmptyCollar,
    NotAContraction,
    ParseError,
    PshDiscError,
    PshFailure,
    RangeError,
    SandwichFailure,
    ScenarioError,
    StageError,
    UnknownName,
)
from .psh_approx import PipelineConfig, approximation_pipeline
from .structure import PERTURBATIONS, QTensor, named_structure, validate_structure

log = logging.getLogger(__name__)

EXIT_OK, EXIT_RUNTIME, EXIT_CERTIFICATION = 0, 1, 2

# errors that mean "a check failed" rather than "the computation broke"
CERTIFICATION_ERRORS = (CertificationFailure, SandwichFailure, PshFailure, EmptyCollar, BoundViolation,
                        NotAContraction)

FUNCTIONS = ("sq_distance", "neg_sq_z1", "re_z1", "constant", "grid")
STRUCTURES = ("standard", "conjugated")
STRUCTURAL_TOL = 1e-6
TRANSLATION_TOL = 1e-8
TRANSLATION_SLACK = 1.1


# ---------------------------------------------------------------------------
# value converters

def _complex(tok: str) -> complex:
    return complex(tok.replace(" ", ""))


def to_point(text: str) -> np.ndarray:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if len(parts) != 2:
        raise ValueError(f"expected two complex numbers, got {text!r}")
    return as_point([_complex(p) for p in parts])


def to_taylor(text: str) -> np.ndarray:
    rows = [to_point(r) for r in text.split(";") if r.strip()]
    if not rows:
        raise ValueError("empty Taylor coefficient list")
    return np.array(rows)


def to_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def to_ints(text: str) -> tuple:
    return tuple(int(p) for p in re.split(r"[,\s]+", text.strip()) if p)


def to_floats(text: str) -> tuple:
    return tuple(float(p) for p in re.split(r"[,\s]+", text.strip()) if p)


# (converter, default, range check, message); a default of ``...`` means required
_POS = (lambda v: v > 0, "must be positive")
_NONNEG = (lambda v: v >= 0, "must be non-negative")
_ATLEAST1 = (lambda v: v >= 1, "must be at least 1")
_ATLEAST2 = (lambda v: v >= 2, "must be at least 2")
_RADII = (lambda v: len(v) > 0 and all(0 < r <= 1 for r in v), "must lie in (0, 1]")
_AXES = (lambda v: len(v) in (2, 4) and len(set(v)) == len(v) and set(v) <= {0, 1, 2, 3},
         "must be 2 or 4 distinct coordinates among 0..3")
_NONE = (lambda v: True, "")

SCENARIO_KEYS = {
    "structure": (str, "standard", _NONE),
    "perturbation": (str, "bump", _NONE),
    "amplitude": (float, 0.0, (lambda v: v >= 0, "amplitude t must be non-negative")),
    "center": (to_point, "0, 0", _NONE),
    "radius": (float, 1.0, (lambda v: v > 0, "radius epsilon must be positive")),
    "function": (str, "sq_distance", _NONE),
    "value": (float, 0.0, _NONE),
    "file": (str, "", _NONE),
    "seed": (int, 0, _NONE),
    "output": (str, "out", _NONE),
}

_SEARCH_KEYS = {
    "degree": (int, 3, _ATLEAST1),
    "starts": (int, 8, _ATLEAST1),
    "max_evals": (int, 300, _ATLEAST1),
    "truncation_degree": (int, 16, _ATLEAST1),
    "radii": (to_floats, "0.25 0.5 0.75 1", _RADII),
}
_SOLVER_KEYS = {
    "degree": (int, 16, _ATLEAST1),
    "tolerance": (float, 1e-9, _POS),
    "max_iterations": (int, 200, _ATLEAST1),
    "continuation_steps": (int, 16, _ATLEAST1),
}

TASK_KEYS = {
    "validate": {"samples_per_axis": (int, 5, _ATLEAST2), "mode_check": (to_bool, "yes", _NONE)},
    "solve-disc": {"taylor": (to_taylor, ..., _NONE), **_SOLVER_KEYS},
    "translate": {"taylor": (to_taylor, ..., _NONE), "shift": (to_point, ..., _NONE),
                  **_SOLVER_KEYS, "continuation_steps": (int, 8, _ATLEAST1)},
    "envelope": {"point": (to_point, "", _NONE), **_SEARCH_KEYS},
    "envelope-field": {
        "grid_center": (to_point, "", _NONE),
        "half_width": (float, 0.3, _POS),
        "nodes": (int, 5, _ATLEAST2),
        "axes": (to_ints, "0 1", _AXES),
        "warm_start": (to_bool, "yes", _NONE),
        "lipschitz": (float, -1.0, _NONE),
        "continuity_tolerance": (float, 5e-3, _NONNEG),
        **_SEARCH_KEYS,
        "degree": (int, 1, _ATLEAST1),
        "starts": (int, 2, _ATLEAST1),
        "max_evals": (int, 60, _ATLEAST1),
    },
    "pipeline": {
        "K": (int, 4, (lambda v: v >= 2, "K must be at least 2")),
        "nodes": (int, 7, (lambda v: v >= 3, "must be at least 3")),
        "half_width": (float, 0.6, _POS),
        "psh_samples": (int, 50, _ATLEAST1),
        "exhaustion_samples": (int, 30, _ATLEAST1),
        **_SEARCH_KEYS,
        "degree": (int, 1, _ATLEAST1),
        "starts": (int, 2, _ATLEAST1),
        "max_evals": (int, 40, _ATLEAST1),
    },
}


# ---------------------------------------------------------------------------
# scenario

@dataclass
class Task:
    kind: str
    label: str
    params: dict
    line: int | None = None


@dataclass
class Scenario:
    structure: str
    perturbation: str
    amplitude: float
    center: np.ndarray
    radius: float
    function: str
    value: float
    file: str
    seed: int
    output: str
    tasks: list = field(default_factory=list)
    base_dir: Path = Path(".")

    @property
    def domain(self) -> Domain:
        return Domain(self.center, self.radius)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("structure", "perturbation", "amplitude", "radius", "function",
                                           "value", "file", "seed", "output")}
        d["center"] = [[float(c.real), float(c.imag)] for c in self.center]
        d["tasks"] = [{"type": t.kind, "label": t.label, "params": _jsonable(t.params)} for t in self.tasks]
        return d


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    where, section = {}, None
    for n, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            where[(section, None)] = n
        elif section is not None and re.match(r"^[^=:\s][^=:]*[=:]", s):
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            where.setdefault((section, key), n)
    return where


def _convert(section: str, items: dict, schema: dict, lines: dict) -> dict:
    out = {}
    for key in items:
        if key not in schema:
            raise UnknownName(f"unknown key {key!r}", lines.get((section, key)), f"{section}.{key}")
    for key, (conv, default, (check, msg)) in schema.items():
        name = f"{section}.{key}"
        line = lines.get((section, key), lines.get((section, None)))
        if key in items:
            raw = items[key]
        elif default is ...:
            raise ParseError(f"missing required key {key!r}", lines.get((section, None)), name)
        elif default == "":
            out[key] = None
            continue
        else:
            raw = default
        try:
            val = conv(raw) if isinstance(raw, str) else raw
        except (ValueError, TypeError) as exc:
            raise ParseError(f"cannot read {raw!r}: {exc}", line, name) from None
        if not check(val):
            raise RangeError(f"{key} = {raw!r} {msg}", line, name)
        out[key] = val
    return out


def parse_scenario(text: str, base_dir=".") -> Scenario:
    """Parse scenario text into a fully resolved :class:`Scenario`.

    Raises
    ------
    ParseError
        Malformed text, a value that cannot be read, or a missing key.
    UnknownName
        An unknown section, key, task type, structure, perturbation or
        function.
    RangeError
        A value outside its range (``radius <= 0``, ``amplitude < 0``,
        ``K < 2``, ...).
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParseError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from None
    lines = _line_index(text)
    if not cp.has_section("scenario"):
        raise ParseError("missing [scenario] section")
    top = _convert("scenario", dict(cp["scenario"]), SCENARIO_KEYS, lines)
    for key, allowed in (("structure", STRUCTURES), ("function", FUNCTIONS),
                         ("perturbation", tuple(PERTURBATIONS))):
        if top[key] not in allowed:
            raise UnknownName(f"unknown {key} {top[key]!r} (expected one of {', '.join(allowed)})",
                              lines.get(("scenario", key)), f"scenario.{key}")
    if top["function"] == "grid" and not top["file"]:
        raise ParseError("function = grid needs a file", lines.get(("scenario", "function")), "scenario.file")
    sc = Scenario(**top, base_dir=Path(base_dir))
    labels = set()
    for name in cp.sections():
        if name == "scenario":
            continue
        parts = name.split()
        line = lines.get((name, None))
        if parts[0] != "task" or len(parts) not in (2, 3):
            raise UnknownName(f"unknown section [{name}]", line, name)
        kind = parts[1]
        if kind not in TASK_KEYS:
            raise UnknownName(f"unknown task type {kind!r}", line, name)
        label = parts[2] if len(parts) == 3 else kind
        if not re.fullmatch(r"[A-Za-z0-9_.-]+", label):
            raise ParseError(f"task label {label!r} must be a plain file name", line, name)
        if label in labels:
            raise ParseError(f"duplicate task label {label!r}", line, name)
        labels.add(label)
        sc.tasks.append(Task(kind, label, _convert(name, dict(cp[name]), TASK_KEYS[kind], lines), line))
    if not sc.tasks:
        raise ParseError("scenario has no tasks")
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), base_dir=path.parent)


def read_field_csv(path) -> SampledField:
    """Read a grid field written by :meth:`SampledField.write_csv` (or any CSV
    with columns ``x1, y1, x2, y2, value`` on a C-ordered axis-aligned lattice)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ParseError(f"empty field file {path}")
    try:
        x = np.array([[float(r[k]) for k in ("x1", "y1", "x2", "y2")] for r in rows])
        v = np.array([float(r["value"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad field file {path}: {exc}") from None
    axes = tuple(a for a in range(4) if np.ptp(x[:, a]) > 0)
    lo, hi = x.min(axis=0), x.max(axis=0)
    n = tuple(len(np.unique(x[:, a])) for a in axes)
    center = 0.5 * (lo + hi)
    try:
        grid = GridSpec(center[0::2] + 1j * center[1::2], tuple(0.5 * (hi - lo)[list(axes)]), n, axes)
    except ValueError as exc:
        raise ParseError(f"field file {path} is not a 2D or 4D lattice: {exc}") from None
    if len(rows) != int(np.prod(n)) or not np.allclose(to_real(grid.nodes()).reshape(-1, 4), x, atol=1e-9):
        raise ParseError(f"field file {path} is not a C-ordered lattice")
    return SampledField(grid, v.reshape(n), "usc", name=Path(path).stem)


# ---------------------------------------------------------------------------
# running

class _TaskRecord:
    def __init__(self, task: Task):
        self.task = task
        self.certificates = []
        self.outputs = []
        self.error = None
        self.results = {}

    def certify(self, name, passed, worst, detail=""):
        self.certificates.append({"name": name, "passed": bool(passed), "worst": float(worst), "detail": detail})

    @property
    def status(self) -> str:
        if self.error is not None:
            return self.error["kind"]
        return "passed" if all(c["passed"] for c in self.certificates) else "certification_failure"

    def to_dict(self) -> dict:
        d = {"type": self.task.kind, "label": self.task.label, "status": self.status,
             "certificates": self.certificates, "outputs": self.outputs, "results": _jsonable(self.results)}
        if self.error is not None:
            d["error"] = self.error
        return d


class _Runner:
    def __init__(self, sc: Scenario, out: Path, verbose: bool):
        self.sc, self.out, self.verbose = sc, out, verbose
        self.domain = sc.domain
        self.J = named_structure(sc.structure, sc.perturbation, sc.amplitude, self.domain)
        self.Q = QTensor(self.J)
        self._f = None

    # helpers
    def path(self, rec, name) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        rec.outputs.append(name)
        return p

    def write_json(self, rec, name, obj):
        with open(self.path(rec, name), "w") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_rows(self, rec, name, header, rows):
        with open(self.path(rec, name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    def write_disc(self, rec, name, disc: DiscField):
        with open(self.path(rec, f"discs/{name}.json"), "w") as fh:
            fh.write(disc.to_json())
            fh.write("\n")

    @property
    def f(self):
        if self._f is None:
            sc = self.sc
            if sc.function == "sq_distance":
                self._f = sq_distance(sc.center, self.domain)
            elif sc.function == "neg_sq_z1":
                self._f = neg_sq_z1(self.domain)
            elif sc.function == "re_z1":
                self._f = re_z1(self.domain)
            elif sc.function == "constant":
                self._f = constant_function(sc.value, self.domain)
            else:
                self._f = read_field_csv(sc.base_dir / sc.file)
        return self._f

    def solver(self, p) -> SolverConfig:
        return SolverConfig(max_iterations=p["max_iterations"], residual_tolerance=p["tolerance"],
                            continuation_steps=p["continuation_steps"])

    def search(self, p) -> SearchConfig:
        return SearchConfig(degree=p["degree"], n_starts=p["starts"], max_evals=p["max_evals"],
                            truncation_degree=p["truncation_degree"], radii=p["radii"], seed=self.sc.seed)

    # tasks
    def task_validate(self, rec, p, index):
        samples = self.domain.dense_samples(p["samples_per_axis"])
        rep = validate_structure(self.J, samples)
        rec.results["structure"] = rep.to_dict()
        rec.certify("structure_valid", rep.passed, rep.empirical_distance,
                    f"delta={rep.closeness_delta:.3e}, |J^2+Id|={rep.max_axiom_error:.2e}")
        if p["mode_check"] and not self.J.is_standard:
            h = DiscField.holomorphic([self.sc.center, [0.1 * self.sc.radius, 0.05j * self.sc.radius]])
            try:
                mode, report = select_mode(h, self.J)
                rec.results["mode"] = mode.value
                ok = True
            except RuntimeError:
                report, ok = {}, False
                rec.results["mode"] = None
            rec.results["mode_residuals"] = {k: float(v) for k, v in report.items()}
            rec.certify("unique_q_mode", ok, min(report.values()) if report else np.inf)
        self.write_json(rec, f"{rec.task.label}.json", rec.results)

    def task_solve_disc(self, rec, p, index):
        h = DiscField.holomorphic(p["taylor"], p["degree"])
        tr = SolveTrace()
        try:
            v = solve_disc(h, self.Q, self.solver(p), trace=tr)
        finally:
            if self.verbose:
                self.write_rows(rec, f"{rec.task.label}_trace.csv", ["iteration", "residual"],
                                [(i, f"{r:.12e}") for i, r in tr.rows()])
        res = structural_residual(v, self.J)
        rec.results.update(iterations=tr.iterations, structural_residual=res, pde_residual=pde_residual(v, self.Q))
        rec.certify("j_holomorphic", res <= STRUCTURAL_TOL, res)
        self.write_disc(rec, rec.task.label, v)

    def task_translate(self, rec, p, index):
        cfg = self.solver(p)
        u = solve_disc(DiscField.holomorphic(p["taylor"], p["degree"]), self.Q, cfg)
        V = p["shift"]
        c0 = estimate_c0(self.Q, [u, u + V])
        tr = TranslationTrace()
        try:
            v = translate_disc(u, V, self.Q, cfg, c0=c0, trace=tr)
        finally:
            if self.verbose:
                self.write_rows(rec, f"{rec.task.label}_trace.csv", ["t", "distance", "iterations"],
                                [(f"{t:.12e}", f"{d:.12e}", n) for t, d, n in
                                 zip(tr.ts, tr.distances, tr.iterations)])
        shift_err = sup_norm(psi_map(v, self.Q) - psi_map(u, self.Q) - V)
        dist = sup_norm(u - v)
        bound = TRANSLATION_SLACK * c0.value * float(np.linalg.norm(V))
        rec.results.update(c0=c0.value, shift_error=shift_err, distance=dist, bound=bound)
        rec.certify("psi_shift", shift_err <= TRANSLATION_TOL, shift_err)
        rec.certify("distance_bound", dist <= bound, dist - bound, f"bound={bound:.6e}")
        self.write_disc(rec, f"{rec.task.label}_start", u)
        self.write_disc(rec, rec.task.label, v)

    def task_envelope(self, rec, p, index):
        pt = self.sc.center if p["point"] is None else p["point"]
        rng = np.random.default_rng([self.sc.seed, index])
        res = poletsky_envelope(self.f, self.domain, pt, self.Q, self.search(p), rng=rng)
        rec.results.update(point=pt, value=res.value, f_at_p=res.upper_bound_f_at_p, evaluations=res.evaluations,
                           rejected=res.rejected, best_radius=res.best_radius)
        rec.certify("below_f_at_p", res.value <= res.upper_bound_f_at_p, res.value - res.upper_bound_f_at_p)
        check = boundary_mean(self.f, res.best_disc)
        rec.certify("disc_attains_value", abs(check - res.value) <= 1e-12, abs(check - res.value))
        if self.verbose:
            self.write_rows(rec, f"{rec.task.label}_trace.csv", ["start", "degree", "evaluations", "best"],
                            [(r["start"], r["degree"], r["evaluations"], f"{r['best']:.12e}") for r in res.trace])
        self.write_json(rec, f"{rec.task.label}.json", rec.results)
        self.write_disc(rec, rec.task.label, res.best_disc)

    def task_envelope_field(self, rec, p, index):
        c = self.sc.center if p["grid_center"] is None else p["grid_center"]
        grid = GridSpec(c, p["half_width"] * self.sc.radius, p["nodes"], p["axes"])
        search = self.search(p)
        env = envelope_field(self.f, self.domain, self.Q, grid, search, warm_start=p["warm_start"],
                             name=rec.task.label)
        fld = env.field
        fld.write_csv(self.path(rec, f"{rec.task.label}.csv"))
        f_nodes = np.asarray(self.f(grid.nodes()), dtype=float)
        excess = np.nanmax(fld.values - f_nodes) if np.any(np.isfinite(fld.values)) else np.inf
        rec.certify("below_f", excess <= 0, excess)
        rec.certify("all_nodes_solved", not env.partial, len(env.failures))
        c0 = env.c0.value if env.c0 is not None else 1.0
        omega = getattr(self.f, "modulus", None)
        if p["lipschitz"] > 0:
            omega = lambda x, L=p["lipschitz"]: L * np.asarray(x, dtype=float)
        if omega is not None:
            slack = 1.0 if self.Q.is_zero else TRANSLATION_SLACK
            rep = continuity_report(fld, omega, c0, tolerance=p["continuity_tolerance"], slack=slack)
            rec.results["continuity"] = rep.to_dict()
            rec.certify("modulus_bound", rep.passed, rep.worst_excess, f"C0={c0:.6g}")
        rec.results["failures"] = {",".join(map(str, k)): v for k, v in sorted(env.failures.items())}
        write_field_json(self.path(rec, f"{rec.task.label}.json"), fld, {"results": _jsonable(rec.results)})

    def task_pipeline(self, rec, p, index):
        search = self.search(p)
        cfg = PipelineConfig(nodes_per_axis=p["nodes"], half_width=p["half_width"], search=search,
                             psh_samples=p["psh_samples"], exhaustion_samples=p["exhaustion_samples"],
                             seed=self.sc.seed)
        seq = approximation_pipeline(self.f, self.domain, self.Q, p["K"], cfg)
        for c in seq.certificates:
            rec.certify(f"{c.name}[k={c.k}]", c.passed, c.worst, c.detail)
        for st in seq.stages:
            for name in ("phi", "phi_tilde", "phi_hat", "psi"):
                getattr(st, name).write_csv(self.path(rec, f"{rec.task.label}_k{st.k}_{name}.csv"))
        rec.results.update(seq.manifest())
        self.write_json(rec, f"{rec.task.label}.json", seq.manifest())

    def run_task(self, index, task) -> _TaskRecord:
        rec = _TaskRecord(task)
        fn = getattr(self, "task_" + task.kind.replace("-", "_"))
        try:
            fn(rec, task.params, index)
        except PshDiscError as exc:
            rec.error = _describe(exc)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            rec.error = {"kind": "runtime_error", "stage": None, "type": type(exc).__name__, "message": str(exc)}
        if rec.error is not None:
            # non-pipeline tasks are a single stage named after the task
            rec.error["stage"] = rec.error["stage"] or task.kind
            rec.error["task"] = task.label
        return rec


def _describe(exc) -> dict:
    stage = None
    cause = exc
    if isinstance(exc, StageError):
        stage, cause = f"{exc.stage}[k={exc.k}]", exc.cause
    kind = "certification_failure" if isinstance(cause, CERTIFICATION_ERRORS) else "runtime_error"
    d = {"kind": kind, "stage": stage, "type": type(cause).__name__, "message": str(exc)}
    t = getattr(cause, "t", None)
    if t is not None:
        d["t"] = float(t)
    return d


def run_scenario(sc: Scenario, out=None, verbose: bool = False) -> int:
    """Execute every task of ``sc`` in order and write ``manifest.json``.

    Returns the exit code: 0 when every certificate passes, 2 when a
    certificate fails (or a certification error is raised), 1 when a task
    hits a runtime error.  Tasks after a failing one still run.
    """
    out = output_dir(sc, out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    try:
        runner = _Runner(sc, out, verbose)
    except PshDiscError as exc:
        runner = None
        setup_error = _describe(exc)
    if runner is not None:
        for i, task in enumerate(sc.tasks):
            log.info("task %d: %s %s", i, task.kind, task.label)
            rec = runner.run_task(i, task)
            log.info("task %s: %s", task.label, rec.status)
            records.append(rec)
    statuses = [r.status for r in records]
    if runner is None or "runtime_error" in statuses:
        code = EXIT_RUNTIME
    elif "certification_failure" in statuses:
        code = EXIT_CERTIFICATION
    else:
        code = EXIT_OK
    manifest = {"scenario": sc.to_dict(), "tasks": [r.to_dict() for r in records], "exit_code": code,
                "passed": code == EXIT_OK}
    if runner is None:
        manifest["error"] = setup_error
    write_manifest(out, manifest)
    return code


def output_dir(sc: Scenario, out=None) -> Path:
    """``out`` if given, else the scenario's ``output`` relative to its file."""
    if out is not None:
        return Path(out)
    return sc.base_dir / sc.output


def write_manifest(out: Path, manifest: dict) -> None:
    with open(Path(out) / "manifest.json", "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pshdisc", description="Run disc-envelope and psh-approximation scenarios.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a scenario")
    run.add_argument("scenario")
    run.add_argument("--out", help="output directory (overrides the scenario)")
    run.add_argument("--seed", type=int, help="seed override")
    run.add_argument("--verbose", action="store_true", help="log progress and write solver traces")
    val = sub.add_parser("validate", help="parse a scenario without running it")
    val.add_argument("scenario")
    args = ap.parse_args(argv)

    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        sc = load_scenario(args.scenario)
    except (ScenarioError, OSError) as exc:
        print(f"{args.scenario}: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.command == "run" and args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            write_manifest(args.out, {"scenario": None, "tasks": [], "exit_code": EXIT_RUNTIME, "passed": False,
                                      "error": {"kind": "parse_error", "type": type(exc).__name__,
                                                "message": str(exc)}})
        return EXIT_RUNTIME
    if args.command == "validate":
        print(f"{args.scenario}: ok ({len(sc.tasks)} task(s): {', '.join(t.label for t in sc.tasks)})")
        return EXIT_OK
    if args.seed is not None:
        sc.seed = args.seed
    code = run_scenario(sc, args.out, args.verbose)
    print(f"exit {code}: manifest in {output_dir(sc, args.out) / 'manifest.json'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
