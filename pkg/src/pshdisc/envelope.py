"""Disc envelopes of scalar functions under an almost complex structure.

The envelope of ``f`` at ``p`` is the infimum, over J-holomorphic discs
``lambda`` centred at ``p`` with image in the domain, of the boundary mean
``(1/2pi) int f(lambda(e^{it})) dt``.  Here the infimum runs over discs
obtained by pushing holomorphic polynomial targets ``h = p + sum a_k z^k``
through :func:`solve_disc`, together with their rescalings
``z -> lambda(r z)``, so every computed value bounds the true envelope from
above.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator
from scipy.optimize import minimize

from .disc_calculus import DEFAULT_DEGREE, DEFAULT_NTHETA, DiscField, _polar_points, eval_field
from .disc_solver import (
    C0Estimate,
    SolverConfig,
    estimate_c0,
    psi_map,
    solve_disc,
    translate_disc,
)
from .domain import Domain, GridSpec, as_point, norm2, sqnorm, to_real
from .errors import BoundViolation, NoConvergence, NoFeasibleDisc, OutsideDomain
from .structure import QTensor

__all__ = [
    "Domain",
    "GridSpec",
    "ScalarField",
    "SampledField",
    "SearchConfig",
    "EnvelopeResult",
    "EnvelopeField",
    "ContinuityReport",
    "boundary_mean",
    "poletsky_envelope",
    "envelope_field",
    "continuity_report",
    "empirical_modulus",
    "sq_distance",
    "neg_sq_z1",
    "re_z1",
    "constant_function",
]

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# scalar fields

@dataclass(frozen=True)
class ScalarField:
    """A real function on (part of) C^2.

    Parameters
    ----------
    fn : callable
        Maps complex points of shape ``(..., 2)`` to reals of shape ``(...)``.
    modulus : callable, optional
        Nondecreasing ``omega`` with ``|f(x) - f(y)| <= omega(|x - y|)``.
    domain : Domain, optional
        Where ``fn`` may be evaluated; boundary means check against it.
    """

    fn: Callable
    modulus: Callable | None = None
    domain: Domain | None = None
    name: str = "f"

    def __call__(self, z) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(z, dtype=complex)), dtype=float)

    evaluate = __call__

    def shifted(self, a) -> "ScalarField":
        """``z -> f(z - a)``."""
        a = as_point(a)
        dom = None if self.domain is None else Domain(self.domain.center + a, self.domain.radius)
        return ScalarField(lambda z: self.fn(z - a), self.modulus, dom, f"{self.name}(.-a)")


def sq_distance(P=(0, 0), domain: Domain | None = None) -> ScalarField:
    """``|z - P|^2``; Lipschitz with constant ``2 (eps + |P - c|)`` on a ball."""
    P = as_point(P)
    lip = None if domain is None else 2 * (domain.radius + float(norm2(P - domain.center)))
    mod = None if lip is None else (lambda x, L=lip: L * np.asarray(x, dtype=float))
    return ScalarField(lambda z: sqnorm(z - P), mod, domain, "sq_distance")


def neg_sq_z1(domain: Domain | None = None) -> ScalarField:
    """``-|z1|^2``, which is not psh."""
    lip = None if domain is None else 2 * (domain.radius + abs(domain.center[0]))
    mod = None if lip is None else (lambda x, L=lip: L * np.asarray(x, dtype=float))
    return ScalarField(lambda z: -(z[..., 0].real ** 2 + z[..., 0].imag ** 2), mod, domain, "neg_sq_z1")


def re_z1(domain: Domain | None = None) -> ScalarField:
    return ScalarField(lambda z: z[..., 0].real, lambda x: np.asarray(x, dtype=float), domain, "re_z1")


def constant_function(c: float, domain: Domain | None = None) -> ScalarField:
    return ScalarField(lambda z: np.full(np.shape(z)[:-1], float(c)), lambda x: 0.0 * np.asarray(x, dtype=float),
                       domain, "constant")


class SampledField:
    """Values on a :class:`GridSpec`, extended off the grid.

    Points off the slice are first projected onto it.  ``mode`` picks the
    extension: ``"usc"`` takes the max of the surrounding cell corners (and
    the node value on nodes), ``"spline"`` uses an interpolating quintic
    spline on 2D grids, ``"linear"`` multilinear interpolation.

    Attributes
    ----------
    feasible : bool array
        Per-node success flags; failed nodes hold NaN.
    iterations : int array
        Per-node optimizer evaluation counts (zero for non-envelope fields).
    """

    def __init__(self, grid: GridSpec, values, mode: str = "usc", feasible=None, iterations=None,
                 name: str = "field", modulus=None):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {grid.shape}")
        if mode not in ("usc", "spline", "linear"):
            raise ValueError(f"unknown interpolation mode {mode!r}")
        self.grid = grid
        self.values = values
        self.mode = mode
        self.name = name
        self.modulus = modulus
        self.feasible = np.isfinite(values) if feasible is None else np.asarray(feasible, dtype=bool)
        self.iterations = np.zeros(grid.shape, dtype=int) if iterations is None else np.asarray(iterations)
        self._interp = None

    @property
    def partial(self) -> bool:
        return not bool(np.all(self.feasible))

    def nodes(self) -> np.ndarray:
        return self.grid.nodes()

    def _interpolant(self):
        if self._interp is None:
            axes = self.grid.axis_values()
            if self.mode == "spline" and len(axes) == 2:
                kx, ky = (min(5, len(a) - 1) for a in axes)
                if kx % 2 == 0:
                    kx -= 1
                if ky % 2 == 0:
                    ky -= 1
                self._interp = RectBivariateSpline(axes[0], axes[1], self.values, kx=kx, ky=ky, s=0)
            else:
                self._interp = RegularGridInterpolator(axes, self.values, bounds_error=False, fill_value=None)
        return self._interp

    def _usc(self, x):
        axes = self.grid.axis_values()
        shape = x.shape[:-1]
        x = x.reshape(-1, len(axes))
        lo = np.empty(x.shape, dtype=int)
        on = np.empty(x.shape, dtype=bool)
        for j, a in enumerate(axes):
            h = a[1] - a[0]
            s = np.clip((x[:, j] - a[0]) / h, 0, len(a) - 1)
            r = np.rint(s)
            on[:, j] = np.abs(s - r) <= 1e-9
            lo[:, j] = np.where(on[:, j], r, np.minimum(np.floor(s), len(a) - 2)).astype(int)
        out = np.full(len(x), -np.inf)
        for corner in np.ndindex(*(2,) * len(axes)):
            c = np.asarray(corner)
            idx = lo + np.where(on, 0, c)
            out = np.maximum(out, self.values[tuple(idx.T)])
        return out.reshape(shape)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        x = self.grid.slice_coords(z)
        if self.mode == "usc":
            return self._usc(x)
        f = self._interpolant()
        if isinstance(f, RectBivariateSpline):
            return f.ev(x[..., 0], x[..., 1])
        return f(x.reshape(-1, x.shape[-1])).reshape(x.shape[:-1])

    evaluate = __call__

    def with_values(self, values, mode=None, name=None) -> "SampledField":
        return SampledField(self.grid, values, mode or self.mode, name=name or self.name)

    def write_csv(self, path) -> None:
        """One row per node: real coordinates, value, feasible flag, iteration count."""
        nodes = to_real(self.grid.nodes()).reshape(-1, 4)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x1", "y1", "x2", "y2", "value", "feasible", "iterations"])
            for x, v, ok, it in zip(nodes, self.values.ravel(), self.feasible.ravel(), self.iterations.ravel()):
                w.writerow([f"{c:.12e}" for c in x] + [f"{v:.12e}", int(bool(ok)), int(it)])

    def summary(self) -> dict:
        vals = self.values[np.isfinite(self.values)]
        return {
            "name": self.name,
            "grid": self.grid.to_dict(),
            "min": float(vals.min()) if vals.size else None,
            "max": float(vals.max()) if vals.size else None,
            "partial": self.partial,
            "failed_nodes": int(np.sum(~self.feasible)),
        }


# ---------------------------------------------------------------------------
# boundary means

def _in_domain(domain: Domain | None, pts) -> bool:
    return domain is None or bool(np.all(domain.contains(pts)))


def boundary_mean(f, lam: DiscField, n_theta: int = DEFAULT_NTHETA, domain: Domain | None = None) -> float:
    """Rectangle-rule mean of ``f`` over ``n_theta`` equispaced boundary samples.

    Raises
    ------
    OutsideDomain
        If a boundary sample lies outside ``domain`` (default ``f.domain``).
    """
    domain = domain if domain is not None else getattr(f, "domain", None)
    t = 2 * np.pi * np.arange(n_theta) / n_theta
    pts = eval_field(lam, np.exp(1j * t))
    if not _in_domain(domain, pts):
        raise OutsideDomain("boundary trace leaves the domain")
    return float(np.mean(f(pts)))


# ---------------------------------------------------------------------------
# envelope search

@dataclass(frozen=True)
class SearchConfig:
    """Parameters of the multi-start simplex search over polynomial targets.

    ``degree`` is the polynomial degree ``d`` of the targets, ``max_evals``
    the objective budget per start, ``init_scale`` the spread of random
    starts relative to the distance from ``p`` to the boundary.
    """

    degree: int = 3
    n_starts: int = 8
    radii: tuple = (0.25, 0.5, 0.75, 1.0)
    max_evals: int = 300
    xatol: float = 1e-4
    fatol: float = 1e-8
    init_scale: float = 0.5
    simplex_step: float = 0.25
    shrink_factor: float = 0.9
    max_shrinks: int = 5
    n_theta: int = DEFAULT_NTHETA
    truncation_degree: int = 16
    prescreen_margin: float = 0.05
    feasibility_n_r: int = 9
    feasibility_n_theta: int = 64
    seed: int = 0
    solver: SolverConfig = SolverConfig()

    def __post_init__(self):
        if self.degree < 1 or self.n_starts < 1 or self.max_evals < 1:
            raise ValueError("degree, n_starts and max_evals must be positive")
        if not self.radii or any(not 0 < r <= 1 for r in self.radii):
            raise ValueError("radii must lie in (0, 1]")
        if not 0 < self.shrink_factor < 1:
            raise ValueError("shrink_factor must lie in (0, 1)")


@dataclass
class EnvelopeResult:
    """Outcome of :func:`poletsky_envelope`.

    ``value`` never exceeds ``upper_bound_f_at_p``; ``trace`` holds one row
    per start (start index, evaluations, best value after the start).
    """

    value: float
    best_disc: DiscField
    upper_bound_f_at_p: float
    trace: list = field(default_factory=list)
    feasible: bool = True
    evaluations: int = 0
    rejected: int = 0
    best_radius: float = 1.0


class _Objective:
    """Boundary-mean objective over polynomial coefficient vectors."""

    def __init__(self, f, domain, p, Q, search):
        self.f, self.domain, self.p, self.Q, self.s = f, domain, p, Q, search
        self.M = max(4, search.degree) if Q.is_zero else search.truncation_degree
        self.best = (np.inf, None, 1.0)
        self.cache = {}
        self.evaluations = 0
        self.rejected = 0
        self._last = None
        t = 2 * np.pi * np.arange(search.n_theta) / search.n_theta
        self.circles = np.asarray(search.radii)[:, None] * np.exp(1j * t)[None, :]
        self.feas_pts = np.concatenate([_polar_points(search.feasibility_n_r, search.feasibility_n_theta).ravel(),
                                        np.exp(1j * t)])

    def target(self, x) -> DiscField:
        a = np.asarray(x, dtype=float).reshape(-1, 2, 2)
        taylor = np.vstack([self.p[None, :], a[..., 0] + 1j * a[..., 1]])
        return DiscField.holomorphic(taylor, self.M)

    def solve(self, h: DiscField) -> DiscField:
        if self.Q.is_zero:
            return h
        init = None
        if self._last is not None:
            init = self._last[1] + (h - self._last[0])
        v = solve_disc(h, self.Q, self.s.solver, initial=init)
        self._last = (h, v)
        return v

    def feasible(self, lam: DiscField) -> bool:
        return _in_domain(self.domain, eval_field(lam, self.feas_pts, check=False))

    def plausible(self, h: DiscField) -> bool:
        """Cheap pre-screen on the target before paying for a solve."""
        if self.domain is None:
            return True
        pts = eval_field(h, self.feas_pts, check=False)
        reach = self.domain.radius * (1 + self.s.prescreen_margin)
        return bool(np.all(norm2(pts - self.domain.center) < reach))

    def score(self, lam: DiscField) -> float:
        """Best mean over rescalings; updates the running best."""
        vals = np.mean(self.f(eval_field(lam, self.circles, check=False)), axis=-1)
        j = int(np.argmin(vals))
        if vals[j] < self.best[0]:
            self.best = (float(vals[j]), lam, float(self.s.radii[j]))
        return float(vals[j])

    def __call__(self, x) -> float:
        key = np.asarray(x, dtype=float).tobytes()
        if key in self.cache:
            return self.cache[key]
        self.evaluations += 1
        x = np.asarray(x, dtype=float)
        val = np.inf
        for _ in range(self.s.max_shrinks + 1):
            h = self.target(x)
            lam = None
            if self.plausible(h):
                try:
                    lam = self.solve(h)
                except NoConvergence as exc:
                    log.debug("candidate rejected: %s", exc)
            if lam is not None and self.feasible(lam):
                val = self.score(lam)
                break
            x = x * self.s.shrink_factor
        if not np.isfinite(val):
            self.rejected += 1
        self.cache[key] = val
        return val


def _hint_start(hint: DiscField, Q: QTensor, degree: int) -> np.ndarray:
    """Taylor coefficients ``1..d`` of the holomorphic part of ``Psi(hint)``."""
    h = psi_map(hint, Q)
    a = h.coeffs[1 : degree + 1, 0]
    x = np.zeros((degree, 2, 2))
    x[: len(a), :, 0] = a.real
    x[: len(a), :, 1] = a.imag
    return x.ravel()


def poletsky_envelope(f, domain: Domain, p, Q: QTensor, search: SearchConfig = SearchConfig(),
                      hints=(), rng: np.random.Generator | None = None) -> EnvelopeResult:
    """Upper approximation of the disc envelope of ``f`` at ``p``.

    The search runs in degree stages.  At degree one the starts are the
    constant disc, the ``hints`` (J-discs centred at ``p``, scored directly
    and used as simplex starts) and ``n_starts - 1`` random vectors; each
    higher degree starts from the best disc found so far.  Candidates whose image leaves ``domain`` or whose
    solve fails are shrunk by ``shrink_factor`` and retried, then rejected.

    Raises
    ------
    NoFeasibleDisc
        If ``p`` is not in ``domain``.
    """
    p = as_point(p)
    if not domain.contains(p):
        raise NoFeasibleDisc(f"p = {p} is not in the domain")
    rng = np.random.default_rng(search.seed) if rng is None else rng
    obj = _Objective(f, domain, p, Q, search)
    fp = float(f(p[None, :])[0])
    const = DiscField.constant(p, obj.M)
    obj.best = (fp, const, 1.0)

    dist = float(domain.boundary_distance(p))
    starts = [np.zeros(4)]
    for hint in hints:
        if hint is None or not np.allclose(hint.center, p, atol=1e-9):
            continue
        if hint.degree == obj.M and obj.feasible(hint):
            obj.score(hint)
        starts.append(_hint_start(hint, Q, 1))
    for _ in range(search.n_starts - 1):
        starts.append(rng.normal(scale=search.init_scale * dist / 2, size=4))
    # higher degrees continue from the best disc found so far
    for deg in range(2, search.degree + 1):
        starts.append(deg)

    trace = []
    step = search.simplex_step * dist
    for i, x0 in enumerate(starts):
        if isinstance(x0, int):
            x0 = _hint_start(obj.best[1], Q, x0)
        dim = len(x0)
        simplex = np.vstack([x0, x0 + step * np.eye(dim)])
        before = obj.evaluations
        minimize(obj, x0, method="Nelder-Mead",
                 options={"maxfev": search.max_evals, "xatol": search.xatol, "fatol": search.fatol,
                          "initial_simplex": simplex, "adaptive": dim > 8})
        trace.append({"start": i, "degree": dim // 4, "evaluations": obj.evaluations - before,
                      "best": obj.best[0]})

    value, disc, r = obj.best
    if r != 1.0:
        disc = disc.rescaled(r)
    if value > fp:
        value, disc = fp, const
    return EnvelopeResult(value=float(value), best_disc=disc, upper_bound_f_at_p=fp, trace=trace,
                          feasible=obj.feasible(disc), evaluations=obj.evaluations, rejected=obj.rejected,
                          best_radius=r)


# ---------------------------------------------------------------------------
# envelope fields

@dataclass
class EnvelopeField:
    """A sampled envelope together with the per-node optimal discs."""

    field: SampledField
    discs: dict
    failures: dict
    c0: C0Estimate | None = None

    @property
    def partial(self) -> bool:
        return bool(self.failures)


def _neighbours(index, shape):
    for ax in range(len(shape)):
        for d in (-1, 1):
            j = list(index)
            j[ax] += d
            if 0 <= j[ax] < shape[ax]:
                yield tuple(j)


def envelope_field(f, domain: Domain, Q: QTensor, grid: GridSpec, search: SearchConfig = SearchConfig(),
                   warm_start: bool = True, c0: C0Estimate | None = None, extra_hints=None,
                   name: str = "envelope") -> EnvelopeField:
    """Envelope of ``f`` at every node of ``grid``, swept in C order.

    With ``warm_start`` the best discs at already computed neighbours are
    moved to the current node with :func:`translate_disc` and passed as
    hints.  ``extra_hints`` maps node index tuples to additional hint discs.
    Each node draws its random starts from a generator seeded by
    ``(search.seed, flat node index)``, so results do not depend on the
    sweep order.  A node whose search raises is recorded in ``failures``
    and holds NaN.
    """
    if not grid.inside(domain):
        raise ValueError("grid must lie inside the domain")
    nodes = grid.nodes()
    values = np.full(grid.shape, np.nan)
    feasible = np.zeros(grid.shape, dtype=bool)
    iters = np.zeros(grid.shape, dtype=int)
    discs, failures = {}, {}
    extra_hints = extra_hints or {}
    hint_cfg = SolverConfig(
        max_iterations=search.solver.max_iterations,
        residual_tolerance=search.solver.residual_tolerance,
        continuation_steps=4,
        n_theta=search.solver.n_theta,
    )
    if warm_start and not Q.is_zero and c0 is None:
        ctr = DiscField.constant(grid.center, search.truncation_degree)
        c0 = estimate_c0(Q, [ctr, ctr + DiscField.holomorphic([[0, 0], [0.1, 0.1]], search.truncation_degree)])
    for flat, index in enumerate(np.ndindex(*grid.shape)):
        p = nodes[index]
        hints = list(extra_hints.get(index, []))
        if warm_start:
            for j in _neighbours(index, grid.shape):
                if j not in discs:
                    continue
                try:
                    hints.append(translate_disc(discs[j], p - nodes[j], Q, hint_cfg, c0=c0))
                except (NoConvergence, BoundViolation) as exc:
                    log.debug("warm start from %s failed: %s", j, exc)
        rng = np.random.default_rng([search.seed, flat])
        try:
            res = poletsky_envelope(f, domain, p, Q, search, hints=hints, rng=rng)
        except Exception as exc:  # recorded per node, field marked partial
            failures[index] = f"{type(exc).__name__}: {exc}"
            log.warning("envelope failed at node %s: %s", index, exc)
            continue
        values[index] = res.value
        feasible[index] = res.feasible
        iters[index] = res.evaluations
        discs[index] = res.best_disc
    fld = SampledField(grid, values, "usc", feasible, iters, name=name)
    return EnvelopeField(fld, discs, failures, c0)


def write_field_json(path, fld: SampledField, extra=None) -> None:
    d = fld.summary()
    if extra:
        d.update(extra)
    with open(path, "w") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# continuity diagnostics

def empirical_modulus(fld: SampledField):
    """Distances and running-max value gaps over all pairs of finite nodes.

    Returns ``(x, w)`` with ``x`` the sorted distinct pair distances and
    ``w[i]`` the largest ``|f(a) - f(b)|`` over pairs at distance ``<= x[i]``.
    """
    pts = fld.grid.nodes().reshape(-1, 2)
    vals = fld.values.ravel()
    ok = np.isfinite(vals)
    pts, vals = pts[ok], vals[ok]
    i, j = np.triu_indices(len(vals), k=1)
    d = np.round(norm2(pts[i] - pts[j]), 12)
    gap = np.abs(vals[i] - vals[j])
    xs, inv = np.unique(d, return_inverse=True)
    w = np.zeros(len(xs))
    np.maximum.at(w, inv, gap)
    return xs, np.maximum.accumulate(w)


@dataclass
class ContinuityReport:
    distances: np.ndarray
    empirical: np.ndarray
    bound: np.ndarray
    worst_ratio: float
    worst_excess: float
    passed: bool

    def to_dict(self) -> dict:
        return {"worst_ratio": self.worst_ratio, "worst_excess": self.worst_excess, "passed": self.passed}


def continuity_report(env: SampledField, omega: Callable, c0=1.0, tolerance: float = 5e-3,
                      slack: float = 1.0) -> ContinuityReport:
    """Compare the empirical modulus of ``env`` with ``omega(slack * C0 * x)``.

    Passes when ``empirical(x) <= omega(slack C0 x) + tolerance`` at every
    sampled distance.
    """
    c = c0.value if isinstance(c0, C0Estimate) else float(c0)
    xs, w = empirical_modulus(env)
    bound = np.asarray(omega(slack * c * xs), dtype=float) * np.ones_like(xs)
    excess = w - bound
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, w / bound, np.where(w > 0, np.inf, 0.0))
    return ContinuityReport(
        distances=xs,
        empirical=w,
        bound=bound,
        worst_ratio=float(ratio.max(initial=0.0)),
        worst_excess=float(excess.max(initial=-np.inf)),
        passed=bool(np.all(excess <= tolerance)),
    )
