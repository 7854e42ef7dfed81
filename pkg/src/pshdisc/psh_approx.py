"""Smooth decreasing approximation of plurisubharmonic functions on a ball.

Stage ``k`` of the construction:

1. ``phi_k``: Lipschitz sup-convolution of ``u`` with slope ``2^k``;
2. ``phi~_k = max(phi_k, rho - k)`` with an exhaustion ``rho`` of the ball;
3. ``phi^_k``: disc envelope of ``phi~_k`` at the nodes of a grid;
4. ``psi_k``: mollification of ``phi^_k + (3/4) 2^-k rho`` with a width that
   keeps ``phi^_k + 2^-k-1 rho <= psi_k <= phi^_k + 2^-k rho`` on the grid.

Every property the construction promises is checked numerically and
recorded as a :class:`Certificate`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .disc_calculus import DiscField, _polar_points, eval_field
from .disc_solver import SolverConfig, solve_disc
from .domain import Domain, GridSpec, norm2, sqnorm, to_complex, to_real
from .envelope import SampledField, ScalarField, SearchConfig, envelope_field, poletsky_envelope
from .errors import (
    CertificationFailure,
    EmptyCollar,
    NoConvergence,
    PshDiscError,
    PshFailure,
    SandwichFailure,
    StageError,
)
from .structure import QTensor

log = logging.getLogger(__name__)

COLLAR_MARGIN = 1e-6
DECREASE_TOL = 1e-9
SANDWICH_TOL = 1e-12
PSH_TOL = 5e-3


# ---------------------------------------------------------------------------
# sub-mean-value test

@dataclass
class SubMeanReport:
    """Outcome of :func:`sub_mean_check`.

    ``max_violation`` is the largest ``u(lambda(0)) - mean u(lambda(r e^it))``
    (positive means a violation); ``margin`` the smallest
    ``(mean - value) / r^2`` over all samples, positive for strictly psh
    functions.
    """

    max_violation: float
    margin: float
    samples: int
    worst_center: np.ndarray
    worst_radius: float

    def passes(self, tol: float) -> bool:
        return self.max_violation <= tol

    def to_dict(self) -> dict:
        return {
            "max_violation": self.max_violation,
            "margin": self.margin,
            "samples": self.samples,
            "worst_center": [[float(c.real), float(c.imag)] for c in self.worst_center],
            "worst_radius": self.worst_radius,
        }


def disc_violations(u, lam: DiscField, radii, n_theta: int = 64) -> np.ndarray:
    """``u(lam(0)) - mean_t u(lam(r e^it))`` for each ``r`` in ``radii``."""
    t = 2 * np.pi * np.arange(n_theta) / n_theta
    circles = np.asarray(radii, dtype=float)[:, None] * np.exp(1j * t)[None, :]
    means = np.mean(u(eval_field(lam, circles)), axis=-1)
    return float(u(lam.center[None, :])[0]) - means


def sample_discs(domain: Domain, Q: QTensor, n: int, rng, center_fraction: float = 0.5,
                 size: tuple = (0.15, 0.4), degree: int = 2, admissible=None,
                 truncation_degree: int = 16, solver: SolverConfig = SolverConfig(), max_tries: int = 20):
    """Random J-holomorphic discs with image in ``domain``.

    Centres are uniform in the concentric ball of radius ``center_fraction``
    times the radius; the linear coefficient has length drawn from ``size``
    (relative to the distance to the boundary) and the higher ones are
    smaller.  A disc is kept when its sampled image lies in ``domain`` and
    satisfies ``admissible``; otherwise it is shrunk by 0.8 and retried.
    """
    P, eps = domain.center, domain.radius
    pts = np.concatenate([_polar_points(9, 48).ravel()])
    discs = []
    attempts = 0
    while len(discs) < n:
        attempts += 1
        if attempts > max_tries * n:
            raise PshDiscError(f"could only sample {len(discs)} admissible discs out of {n}")
        x = rng.normal(size=4)
        c = P + to_complex(x / np.linalg.norm(x) * eps * center_fraction * rng.uniform() ** 0.25)
        dist = eps - float(norm2(c - P))
        taylor = [c]
        for j in range(1, degree + 1):
            d = rng.normal(size=4)
            lo, hi = size
            scale = rng.uniform(lo, hi) if j == 1 else 0.3 * rng.uniform(0, lo)
            taylor.append(to_complex(d / np.linalg.norm(d)) * scale * dist)
        taylor = np.array(taylor)
        for _ in range(6):
            h = DiscField.holomorphic(taylor, truncation_degree)
            try:
                lam = solve_disc(h, Q, solver)
            except NoConvergence:
                lam = None
            if lam is not None:
                img = eval_field(lam, pts)
                if np.all(domain.contains(img)) and (admissible is None or admissible(img)):
                    discs.append(lam)
                    break
            taylor[1:] *= 0.8
    return discs


def sub_mean_check(u, domain: Domain, Q: QTensor, disc_samples: int = 50, radii=(0.25, 0.5, 0.75, 1.0),
                   rng=None, discs=None, **sample_kw) -> SubMeanReport:
    """Sub-mean-value test of ``u`` on random solved J-discs inside ``domain``.

    Pass ``discs`` to reuse a fixed sample; otherwise ``disc_samples`` discs
    are drawn with :func:`sample_discs`.
    """
    radii = tuple(float(r) for r in radii)
    if any(not 0 < r <= 1 for r in radii):
        raise ValueError("radii must lie in (0, 1]")
    if discs is None:
        rng = np.random.default_rng(0) if rng is None else rng
        discs = sample_discs(domain, Q, disc_samples, rng, **sample_kw)
    worst, worst_c, worst_r, margin = -np.inf, None, radii[0], np.inf
    r2 = np.asarray(radii) ** 2
    for lam in discs:
        v = disc_violations(u, lam, radii)
        j = int(np.argmax(v))
        if v[j] > worst:
            worst, worst_c, worst_r = float(v[j]), lam.center, radii[j]
        margin = min(margin, float(np.min(-v / r2)))
    return SubMeanReport(worst, margin, len(discs), worst_c, worst_r)


# ---------------------------------------------------------------------------
# exhaustion

@dataclass
class ExhaustionFunction:
    """``rho(z) = A |z - P|^2 - B log(eps^2 - |z - P|^2)`` on the ball ``D``."""

    domain: Domain
    A: float
    B: float
    margin: float = float("nan")
    report: SubMeanReport | None = None

    def __call__(self, z) -> np.ndarray:
        s = sqnorm(np.asarray(z, dtype=complex) - self.domain.center)
        gap = self.domain.radius**2 - s
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.A * s - self.B * np.log(gap)
        return np.where(gap > 0, out, np.inf)

    evaluate = __call__

    @property
    def minimum(self) -> float:
        return float(-self.B * np.log(self.domain.radius**2))

    def as_field(self) -> ScalarField:
        return ScalarField(self, domain=self.domain, name=f"rho(A={self.A:g},B={self.B:g})")


def boundary_probes(domain: Domain, grid: GridSpec | None = None, levels: int = 30) -> np.ndarray:
    """Points on rays from the centre approaching the sphere geometrically.

    Rays run along the grid slice directions (both signs) and along the
    remaining complex direction.  Radii are ``eps (1 - 2^-j)``, ``j = 1..levels``.
    Shape ``(n_rays, levels, 2)``.
    """
    axes = (0, 1) if grid is None else grid.axes
    dirs = []
    for a in axes[:2]:
        for sgn in (1.0, -1.0):
            x = np.zeros(4)
            x[a] = sgn
            dirs.append(to_complex(x))
    other = [a for a in range(4) if a not in axes[:2]][0]
    for sgn in (1.0, -1.0):
        x = np.zeros(4)
        x[other] = sgn
        dirs.append(to_complex(x))
    r = domain.radius * (1 - 2.0 ** -np.arange(1, levels + 1))
    return domain.center + np.asarray(dirs)[:, None, :] * r[None, :, None]


def build_exhaustion(domain: Domain, Q: QTensor, phi1=None, stages: int | None = None,
                     As=(1.0, 2.0, 4.0, 8.0), Bs=(0.1, 1.0), disc_samples: int = 30, rng=None,
                     probes: np.ndarray | None = None) -> ExhaustionFunction:
    """Pick the first ``(A, B)`` whose ``rho`` is certified strictly psh.

    Certification asks for a non-positive worst sub-mean violation and a
    positive fitted margin on a fixed disc sample.  When ``stages`` is given
    the boundary blow-up must also be visible at sample resolution:
    ``rho - phi1 >= stages`` at the outermost probe of every ray, so that
    every truncation stage ``k <= stages`` has a collar.

    Raises
    ------
    CertificationFailure
        If no pair in the search set certifies.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    discs = sample_discs(domain, Q, disc_samples, rng)
    if probes is None:
        probes = boundary_probes(domain)
    reasons = []
    for A, B in product(As, Bs):
        rho = ExhaustionFunction(domain, float(A), float(B))
        rep = sub_mean_check(rho, domain, Q, discs=discs)
        if not (rep.max_violation <= 0 and rep.margin > 0):
            reasons.append(f"(A={A:g}, B={B:g}): violation {rep.max_violation:.2e}, margin {rep.margin:.2e}")
            continue
        if stages is not None and phi1 is not None:
            outer = probes[:, -1]
            reach = float(np.min(rho(outer) - phi1(outer)))
            if reach < stages + COLLAR_MARGIN:
                reasons.append(f"(A={A:g}, B={B:g}): rho - phi1 reaches only {reach:.2f} < {stages}")
                continue
        rho.margin, rho.report = rep.margin, rep
        return rho
    raise CertificationFailure("no exhaustion parameters certified: " + "; ".join(reasons))


# ---------------------------------------------------------------------------
# regularisation and truncation

def default_stencil(spacing: float = 0.05, reach: int = 2) -> np.ndarray:
    """Lattice offsets ``spacing * n`` with ``|n| <= reach``, as points of C^2."""
    n = np.array(list(product(range(-reach, reach + 1), repeat=4)), dtype=float)
    n = n[np.sum(n**2, axis=1) <= reach**2]
    return to_complex(n * spacing)


class SupConvolution:
    """``phi(z) = max_w (u(w) - L |z - w|)`` over ``w`` in a finite set.

    For sampled ``u`` the set is the grid; otherwise it is ``z + stencil``.
    """

    def __init__(self, u, L: float, stencil: np.ndarray | None = None):
        self.u, self.L = u, float(L)
        self.sampled = isinstance(u, SampledField)
        if self.sampled:
            ok = np.isfinite(u.values.ravel())
            self.nodes = u.grid.nodes().reshape(-1, 2)[ok]
            self.node_vals = u.values.ravel()[ok]
        else:
            self.stencil = default_stencil() if stencil is None else np.asarray(stencil, dtype=complex)
            self.pen = self.L * norm2(self.stencil)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        shape = z.shape[:-1]
        z = z.reshape(-1, 2)
        out = np.empty(len(z))
        chunk = 2048
        for i in range(0, len(z), chunk):
            zc = z[i : i + chunk]
            if self.sampled:
                d = norm2(zc[:, None, :] - self.nodes[None, :, :])
                out[i : i + chunk] = np.max(self.node_vals[None, :] - self.L * d, axis=1)
            else:
                vals = self.u(zc[:, None, :] + self.stencil[None, :, :])
                out[i : i + chunk] = np.max(vals - self.pen[None, :], axis=1)
        return out.reshape(shape)


def upper_regularize(u, k: int, stencil: np.ndarray | None = None) -> ScalarField:
    """Lipschitz sup-convolution of ``u`` with slope ``L_k = 2^k``.

    The result is ``>= u`` (the zero offset is in every stencil) and
    decreasing in ``k`` (same offsets, larger penalty).
    """
    sc = SupConvolution(u, 2.0**k, stencil)
    return ScalarField(sc, modulus=lambda x, L=2.0**k: L * np.asarray(x, dtype=float),
                       domain=getattr(u, "domain", None), name=f"phi_{k}")


@dataclass
class Truncation:
    """``max(phi_k, rho - k)`` with the detected collar.

    ``collar`` flags probe points where ``rho - k >= phi_k + margin``;
    ``collar_points`` holds, per ray, the innermost point from which the
    collar persists to the outermost probe.
    """

    field: ScalarField
    k: int
    collar: np.ndarray
    collar_points: np.ndarray
    grid_collar: np.ndarray | None = None


def truncate_with_exhaustion(phi, rho: ExhaustionFunction, k: int, probes: np.ndarray | None = None,
                             grid: GridSpec | None = None, margin: float = COLLAR_MARGIN) -> Truncation:
    """Pointwise ``max(phi, rho - k)`` and its collar near the sphere.

    Raises
    ------
    EmptyCollar
        If on some probe ray ``rho - k`` fails to dominate ``phi`` even at the
        outermost probe.
    """
    def fn(z):
        return np.maximum(phi(z), rho(z) - k)

    out = ScalarField(fn, domain=rho.domain, name=f"phi_tilde_{k}")
    if probes is None:
        probes = boundary_probes(rho.domain, grid)
    collar = rho(probes) - k >= phi(probes) + margin
    if not np.all(collar[:, -1]):
        bad = int(np.argmin(collar[:, -1]))
        raise EmptyCollar(f"rho - {k} does not dominate phi_{k} near the boundary along ray {bad}")
    first = []
    for ray, flags in zip(probes, collar):
        j = len(flags) - 1
        while j > 0 and flags[j - 1]:
            j -= 1
        first.append(ray[j])
    grid_collar = None
    if grid is not None:
        nodes = grid.nodes()
        grid_collar = rho(nodes) - k >= phi(nodes) + margin
    return Truncation(out, k, collar, np.asarray(first), grid_collar)


# ---------------------------------------------------------------------------
# smoothing

def _bump_quadrature(n_r: int = 6, n_ang: int = 12):
    """Nodes and weights of the normalised kernel ``exp(-1/(1-|s|^2))`` on the unit disc."""
    x, w = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * (x + 1)
    wr = 0.5 * w * r * np.exp(-1.0 / (1.0 - r**2))
    ang = 2 * np.pi * (np.arange(n_ang) + 0.5) / n_ang
    nodes = np.stack([np.outer(r, np.cos(ang)).ravel(), np.outer(r, np.sin(ang)).ravel()], axis=-1)
    weights = np.repeat(wr, n_ang)
    return nodes, weights / weights.sum()


class MollifiedField:
    """``psi(z) = sum_j w_j S(x + sigma(x) s_j)`` with ``x`` the slice coordinates of ``z``.

    ``S`` is an interpolating spline of grid samples and
    ``sigma(x) = s0 h rho(x) / (rho(x) + rho_ref)`` with ``h`` the grid
    spacing, so the width vanishes where ``rho`` does.
    """

    def __init__(self, spline: SampledField, rho: ExhaustionFunction, s0: float, rho_ref: float):
        self.spline, self.rho, self.s0, self.rho_ref = spline, rho, float(s0), float(rho_ref)
        self.grid = spline.grid
        self.h = float(np.min(self.grid.spacing))
        self.nodes, self.weights = _bump_quadrature()

    def sigma(self, z) -> np.ndarray:
        r = self.rho(self.grid.project(z))
        return self.s0 * self.h * r / (r + self.rho_ref)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.s0 == 0.0:
            return self.spline(z)
        zp = self.grid.project(z)
        sig = self.sigma(zp)
        x = to_real(zp)
        axes = list(self.grid.axes[:2])
        shifted = np.repeat(x[..., None, :], len(self.weights), axis=-2)
        shifted[..., axes] += sig[..., None, None] * self.nodes
        vals = self.spline(to_complex(shifted))
        return vals @ self.weights

    evaluate = __call__


@dataclass
class SmoothResult:
    psi: MollifiedField
    values: np.ndarray
    s0: float
    sandwich_low: float
    sandwich_high: float
    psh: SubMeanReport | None


def richberg_smooth(phi_hat: SampledField, rho: ExhaustionFunction, k: int, Q: QTensor,
                    widths=(1.0, 0.5, 0.25, 0.125, 0.0625, 0.0), psh_discs=None, psh_tol: float = PSH_TOL,
                    sandwich_tol: float = SANDWICH_TOL) -> SmoothResult:
    """Mollify ``phi_hat + (3/4) 2^-k rho`` keeping the grid sandwich.

    The widths ``s0`` are tried from large to small; the first one for which
    ``phi_hat + 2^-k-1 rho <= psi <= phi_hat + 2^-k rho`` holds at every node
    (up to ``sandwich_tol`` for rounding) is kept.  With ``psh_discs`` the
    result must then pass the sub-mean test at ``psh_tol``.

    Raises
    ------
    SandwichFailure
        If no width satisfies the sandwich.
    PshFailure
        If the sub-mean test fails.
    """
    grid = phi_hat.grid
    if grid.shape and len(grid.axes) != 2:
        raise ValueError("smoothing needs a 2D slice grid")
    nodes = grid.nodes()
    r = rho(nodes)
    g = phi_hat.values + 0.75 * 2.0**-k * r
    lo = phi_hat.values + 2.0 ** (-k - 1) * r
    hi = phi_hat.values + 2.0**-k * r
    spline = SampledField(grid, g, "spline", name=f"G_{k}")
    rho_ref = float(np.median(r[np.isfinite(r)])) or 1.0
    for s0 in widths:
        psi = MollifiedField(spline, rho, s0, rho_ref)
        vals = psi(nodes)
        low = float(np.max(lo - vals))
        high = float(np.max(vals - hi))
        if low <= sandwich_tol and high <= sandwich_tol:
            break
    else:
        raise SandwichFailure(f"no width keeps the sandwich at k={k} (worst gaps {low:.2e}, {high:.2e})")
    rep = None
    if psh_discs is not None:
        rep = sub_mean_check(psi, rho.domain, Q, discs=psh_discs)
        if not rep.passes(psh_tol):
            raise PshFailure(f"psi_{k} violates the sub-mean test by {rep.max_violation:.2e}")
    return SmoothResult(psi, vals, float(s0), low, high, rep)


def second_difference_stability(fn, grid: GridSpec, step: float, fraction: float = 0.6,
                                n: int = 5) -> float:
    """Largest relative change of second differences when ``step`` is halved.

    Evaluated along both slice axes at an ``n x n`` sample of the inner
    ``fraction`` of the grid box.
    """
    axes = grid.axis_values()
    c = [0.5 * (a[0] + a[-1]) for a in axes]
    hw = [fraction * 0.5 * (a[-1] - a[0]) for a in axes]
    pts = np.array(list(product(*[np.linspace(ci - hi, ci + hi, n) for ci, hi in zip(c, hw)])))
    base = np.broadcast_to(to_real(grid.center), (len(pts), 4)).copy()
    base[:, list(grid.axes)] = pts
    worst = 0.0
    for a in grid.axes:
        e = np.zeros(4)
        e[a] = 1.0

        def d2(h):
            return (fn(to_complex(base + h * e)) - 2 * fn(to_complex(base)) + fn(to_complex(base - h * e))) / h**2

        coarse, fine = d2(step), d2(step / 2)
        worst = max(worst, float(np.max(np.abs(coarse - fine) / np.maximum(np.abs(fine), 1e-8))))
    return worst


# ---------------------------------------------------------------------------
# the pipeline

@dataclass
class Certificate:
    name: str
    k: int
    passed: bool
    worst: float
    witness: list | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "k": self.k, "passed": self.passed, "worst": self.worst,
                "witness": self.witness, "detail": self.detail}


@dataclass(frozen=True)
class PipelineConfig:
    nodes_per_axis: int = 7
    half_width: float = 0.6
    interior_fraction: float = 0.5
    search: SearchConfig = SearchConfig(degree=1, n_starts=2, max_evals=40)
    warm_start: bool = False
    psh_samples: int = 50
    exhaustion_samples: int = 30
    psh_tol: float = PSH_TOL
    collar_tol: float = 1e-3
    slack: float = 5e-3
    seed: int = 0


@dataclass
class Stage:
    k: int
    phi: SampledField
    phi_tilde: SampledField
    phi_hat: SampledField
    psi: SampledField
    smooth: SmoothResult
    truncation: Truncation
    collar_values: np.ndarray
    discs: dict


@dataclass
class ApproximationSequence:
    grid: GridSpec
    rho: ExhaustionFunction
    stages: list = field(default_factory=list)
    certificates: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.certificates)

    def certify(self, name, k, worst, ok, witness=None, detail=""):
        w = None if witness is None else [[float(c.real), float(c.imag)] for c in np.asarray(witness).reshape(2)]
        self.certificates.append(Certificate(name, int(k), bool(ok), float(worst), w, detail))

    def manifest(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "exhaustion": {"A": self.rho.A, "B": self.rho.B, "margin": self.rho.margin},
            "stages": [
                {"k": s.k, "mollifier_width": s.smooth.s0, "collar_points": len(s.truncation.collar_points)}
                for s in self.stages
            ],
            "certificates": [c.to_dict() for c in self.certificates],
            "passed": self.passed,
        }


def _witness(values, nodes, idx_fn=np.argmax):
    flat = int(idx_fn(values))
    return nodes.reshape(-1, 2)[flat]


def approximation_pipeline(u, domain: Domain, Q: QTensor, K: int, config: PipelineConfig = PipelineConfig(),
                           grid: GridSpec | None = None) -> ApproximationSequence:
    """Run the stages ``k = 1..K`` on a complex-line grid through the centre.

    Raises
    ------
    StageError
        Wrapping any error raised inside a stage, with the stage name and ``k``.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    P, eps = domain.center, domain.radius
    if grid is None:
        grid = GridSpec(P, config.half_width * eps, config.nodes_per_axis, axes=(0, 1))
    nodes = grid.nodes()
    interior = norm2(nodes - P) <= config.interior_fraction * eps + 1e-12
    inner_box = GridSpec(grid.center, tuple(0.9 * h for h in grid.half_widths), grid.nodes_per_axis, grid.axes)

    def seeded(*tags):
        return np.random.default_rng([config.seed, *tags])

    def run(stage, k, fn, *a, **kw):
        try:
            return fn(*a, **kw)
        except PshDiscError as exc:
            raise StageError(stage, k, exc) from exc

    def in_box(img):
        x = inner_box.slice_coords(img)
        c = inner_box.slice_coords(inner_box.center)
        return bool(np.all(np.abs(x - c) <= np.asarray(inner_box.half_widths)))

    # precondition: u is psh at tolerance
    pre = run("input", 0, sub_mean_check, u, domain, Q, config.psh_samples, rng=seeded(0, 1))
    if not pre.passes(config.psh_tol):
        raise StageError("input", 0, PshFailure(f"u violates the sub-mean test by {pre.max_violation:.2e}"))

    probes = boundary_probes(domain, grid)
    phi1 = upper_regularize(u, 1)
    rho = run("exhaustion", 1, build_exhaustion, domain, Q, phi1, stages=K,
              disc_samples=config.exhaustion_samples, rng=seeded(0, 2), probes=probes)
    seq = ApproximationSequence(grid, rho)
    seq.certify("exhaustion_strict_psh", 0, -rho.margin, rho.margin > 0, rho.report.worst_center,
                f"A={rho.A:g}, B={rho.B:g}")
    box_discs = run("psh_discs", 0, sample_discs, domain, Q, config.psh_samples, seeded(0, 3),
                    center_fraction=0.3, size=(0.1, 0.25), admissible=in_box)
    rho_vals = rho(nodes)
    sup_rho = float(np.max(rho_vals[interior]))
    u_vals = u(nodes)

    prev = None
    for k in range(1, K + 1):
        phi = upper_regularize(u, k)
        trunc = run("truncate", k, truncate_with_exhaustion, phi, rho, k, probes, grid)
        hints = {} if prev is None else {idx: [d] for idx, d in prev.discs.items()}
        env = run("envelope", k, envelope_field, trunc.field, domain, Q, grid, config.search,
                  warm_start=config.warm_start, extra_hints=hints, name=f"phi_hat_{k}")
        if env.partial:
            raise StageError("envelope", k, PshDiscError(f"envelope failed at nodes {sorted(env.failures)}"))
        phi_hat = SampledField(grid, env.field.values, "spline", env.field.feasible, env.field.iterations,
                               name=f"phi_hat_{k}")
        # collar: the envelope must reproduce rho - k where the truncation does
        cpts = trunc.collar_points
        cvals = np.array([
            run("collar", k, poletsky_envelope, trunc.field, domain, p, Q, config.search,
                rng=seeded(k, 4, i)).value
            for i, p in enumerate(cpts)
        ])
        cdev = np.abs(cvals - (rho(cpts) - k))
        seq.certify("collar_envelope", k, float(cdev.max()), bool(cdev.max() <= config.collar_tol),
                    cpts[int(np.argmax(cdev))])

        env_psh = sub_mean_check(phi_hat, domain, Q, discs=box_discs)
        seq.certify("envelope_psh", k, env_psh.max_violation, env_psh.passes(config.psh_tol), env_psh.worst_center)

        sm = run("smooth", k, richberg_smooth, phi_hat, rho, k, Q, psh_discs=box_discs, psh_tol=config.psh_tol)
        seq.certify("sandwich", k, max(sm.sandwich_low, sm.sandwich_high),
                    max(sm.sandwich_low, sm.sandwich_high) <= SANDWICH_TOL, None, f"s0={sm.s0:g}")
        seq.certify("psi_psh", k, sm.psh.max_violation, sm.psh.passes(config.psh_tol), sm.psh.worst_center)

        phi_vals = phi(nodes)
        tilde_vals = trunc.field(nodes)
        stage = Stage(
            k,
            SampledField(grid, phi_vals, "usc", name=f"phi_{k}"),
            SampledField(grid, tilde_vals, "usc", name=f"phi_tilde_{k}"),
            phi_hat,
            SampledField(grid, sm.values, "spline", name=f"psi_{k}"),
            sm,
            trunc,
            cvals,
            env.discs,
        )
        err = np.abs(sm.values - u_vals)[interior]
        bound = 2.0**-k * sup_rho + config.slack
        seq.certify("interior_error", k, float(err.max()), bool(err.max() <= bound),
                    nodes[interior][int(np.argmax(err))], f"bound={bound:.6g}")
        if prev is not None:
            for name, new, old in (("phi_decreasing", phi_vals, prev.phi.values),
                                   ("phi_tilde_decreasing", tilde_vals, prev.phi_tilde.values),
                                   ("phi_hat_decreasing", phi_hat.values, prev.phi_hat.values),
                                   ("psi_decreasing", sm.values, prev.psi.values)):
                d = new - old
                seq.certify(name, k, float(d.max()), bool(d.max() <= DECREASE_TOL), _witness(d, nodes))
            e_prev = np.abs(prev.psi.values - u_vals)[interior].max()
            seq.certify("interior_error_decreasing", k, float(err.max() - e_prev),
                        bool(err.max() <= e_prev + DECREASE_TOL))
        seq.stages.append(stage)
        prev = stage
        log.info("stage %d done: s0=%g, interior error %.3e", k, sm.s0, err.max())
    return seq
