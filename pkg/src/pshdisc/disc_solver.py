"""J-holomorphic discs: the maps Phi and Psi, their inversion, and disc translation.

For a disc ``u`` write ``K(u) = T(Q(u) dz u) - T(Q(u) dz u)(0)``, so that
``Phi u = u + T(Q(u) dz u)`` and ``Psi u = u + K(u)``.  A disc with
``Psi v = h`` for holomorphic ``h`` solves ``dbar v + Q(v) dz v = 0`` (with
``dz v`` conjugated in antilinear mode) and has ``v(0) = h(0)``.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .disc_calculus import (
    DEFAULT_NTHETA,
    DiscField,
    _polar_points,
    cg_transform,
    dbar,
    dz,
    eval_field,
    polar_grid,
    real_jacobian,
    sup_norm,
)
from .domain import norm2, to_real
from .errors import BoundViolation, NoConvergence, NotAContraction, UnderResolved
from .structure import J_ST, AlmostComplexStructure, QMode, QTensor

log = logging.getLogger(__name__)

SLACK = 1.1
STAGNATION_WINDOW = 10
DIVERGENCE_LEVEL = 1e6


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 200
    residual_tolerance: float = 1e-9
    continuation_steps: int = 16
    relaxation: float = 1.0
    n_theta: int = DEFAULT_NTHETA
    max_halvings: int = 3
    certify: bool = True

    def __post_init__(self):
        if self.max_iterations <= 0 or self.residual_tolerance <= 0 or self.continuation_steps <= 0:
            raise ValueError("solver parameters must be positive")
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must lie in (0, 1]")


class C0Method(enum.Enum):
    CONTRACTION_BOUND = "contraction_bound"
    LINEARIZED_SAMPLING = "linearized_sampling"


@dataclass(frozen=True)
class C0Estimate:
    value: float
    method: C0Method
    kappa: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 1:
            raise ValueError(f"C0 must be a finite number >= 1, got {self.value}")


@dataclass
class SolveTrace:
    residuals: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    def rows(self):
        return [(i, r) for i, r in enumerate(self.residuals)]


# ---------------------------------------------------------------------------
# Phi and Psi

def _grid(u: DiscField, n_theta=DEFAULT_NTHETA):
    return polar_grid(u.degree, max(n_theta, 2 * u.degree + 2))


def nonlinear_term(u: DiscField, Q: QTensor, n_theta=DEFAULT_NTHETA) -> DiscField:
    """Projection of ``Q(u) dz u`` onto monomials with zbar-degree ``<= M - 1``.

    ``Q`` is sampled along the image of ``u`` on the collocation grid.
    """
    if Q.is_zero:
        return DiscField.zeros(u.degree)
    g = _grid(u, n_theta)
    pts = g.values(u)
    du = g.values(dz(u))
    return g.project(Q.apply(pts, du), n_max=u.degree - 1)


def _k_map(u: DiscField, Q: QTensor, n_theta=DEFAULT_NTHETA) -> DiscField:
    tg = cg_transform(nonlinear_term(u, Q, n_theta))
    return tg - tg.center


def phi_map(u: DiscField, Q: QTensor) -> DiscField:
    if Q.is_zero:
        return u
    return u + cg_transform(nonlinear_term(u, Q))


def psi_map(u: DiscField, Q: QTensor) -> DiscField:
    if Q.is_zero:
        return u
    phi = phi_map(u, Q)
    return phi + (u.center - phi.center)


def _grid_sup(u: DiscField, n_theta=DEFAULT_NTHETA) -> float:
    return float(norm2(_grid(u, n_theta).values(u)).max())


# ---------------------------------------------------------------------------
# inversion of Psi

def solve_disc(h: DiscField, Q: QTensor, cfg: SolverConfig = SolverConfig(), initial: DiscField | None = None,
               trace: SolveTrace | None = None) -> DiscField:
    """Find ``v`` with ``Psi v = h`` by relaxed Picard iteration.

    The iteration is ``v <- h - K(v)``.  The residual ``sup |Psi v - h|`` is
    measured on the collocation grid, boundary circle included.

    With ``cfg.certify`` the pointwise residual ``dbar v + Q(v) dz v`` is
    checked against ``10 * residual_tolerance`` before returning; a failure
    means the truncation degree cannot resolve ``Q`` along the disc.

    Raises
    ------
    NoConvergence
        If the residual fails to decrease for ten consecutive iterations,
        becomes non-finite, or ``max_iterations`` is exhausted.
    UnderResolved
        If the converged disc fails the pointwise certificate.
    """
    if np.any(dbar(h).coeffs):
        raise ValueError("target disc must be holomorphic")
    if trace is None:
        trace = SolveTrace()
    if Q.is_zero:
        trace.residuals.append(0.0)
        return h
    v = h if initial is None else initial
    w = cfg.relaxation
    prev = np.inf
    bad = 0
    for _ in range(cfg.max_iterations):
        k = _k_map(v, Q, cfg.n_theta)
        res = _grid_sup(v + k - h, cfg.n_theta)
        trace.residuals.append(res)
        if not np.isfinite(res) or res > DIVERGENCE_LEVEL:
            raise NoConvergence(f"iteration diverged (residual {res:.3e})", history=trace.residuals)
        if res <= cfg.residual_tolerance:
            if cfg.certify:
                pde = pde_residual(v, Q)
                if pde > 10 * cfg.residual_tolerance:
                    raise UnderResolved(
                        f"PDE residual {pde:.3e} exceeds {10 * cfg.residual_tolerance:.1e} at degree {v.degree}",
                        history=trace.residuals,
                    )
            return v
        bad = bad + 1 if res >= prev * (1 - 1e-3) else 0
        if bad >= STAGNATION_WINDOW:
            raise NoConvergence(
                f"residual stagnated at {res:.3e} for {STAGNATION_WINDOW} iterations", history=trace.residuals
            )
        prev = res
        v = h - k if w == 1.0 else v * (1 - w) + (h - k) * w
    raise NoConvergence(
        f"no convergence in {cfg.max_iterations} iterations (residual {trace.residuals[-1]:.3e})",
        history=trace.residuals,
    )


# ---------------------------------------------------------------------------
# residual certificates

def structural_residual(u: DiscField, J: AlmostComplexStructure, n_r: int = 17, n_theta: int = 64) -> float:
    """``max |du o i - J(u) o du|_F`` over a polar sample grid."""
    pts = _polar_points(n_r, n_theta)
    jac = real_jacobian(u, pts)  # (..., 4, 2): [u_x | u_y]
    jm = J.matrix_at(eval_field(u, pts, check=False))
    ux, uy = jac[..., 0], jac[..., 1]
    jux = np.einsum("...ij,...j->...i", jm, ux)
    juy = np.einsum("...ij,...j->...i", jm, uy)
    # du(i e_x) = u_y, du(i e_y) = -u_x
    r1 = uy - jux
    r2 = -ux - juy
    return float(np.sqrt(np.sum(r1**2, axis=-1) + np.sum(r2**2, axis=-1)).max())


def pde_residual(u: DiscField, Q: QTensor, n_r: int = 17, n_theta: int = 64) -> float:
    """``sup |dbar u + Q(u) dz u|`` with pointwise (unprojected) products."""
    pts = _polar_points(n_r, n_theta)
    val = eval_field(u, pts, check=False)
    du = eval_field(dz(u), pts, check=False)
    res = eval_field(dbar(u), pts, check=False)
    if not Q.is_zero:
        res = res + Q.apply(val, du)
    return float(norm2(res).max())


def jholomorphy_residuals(u: DiscField, J: AlmostComplexStructure, Q: QTensor) -> tuple:
    return pde_residual(u, Q), structural_residual(u, J)


def select_mode(h: DiscField, J: AlmostComplexStructure, cfg: SolverConfig = SolverConfig(),
                threshold: float = 1e-6):
    """Solve under both Q-modes and keep the one whose disc is J-holomorphic.

    Returns ``(mode, report)`` where ``report`` maps each mode name to its
    structural residual (``inf`` if the solve failed).  Raises
    ``RuntimeError`` unless exactly one mode passes.
    """
    report = {}
    for mode in QMode:
        try:
            v = solve_disc(h, QTensor(J, mode), cfg)
            report[mode.value] = structural_residual(v, J)
        except NoConvergence:
            report[mode.value] = np.inf
    passing = [m for m in QMode if report[m.value] <= threshold]
    if len(passing) != 1 and not J.is_standard:
        raise RuntimeError(f"mode selection ambiguous: {report}")
    return (passing[0] if passing else QMode.ANTILINEAR), report


# ---------------------------------------------------------------------------
# C0

def _probe_directions(degree):
    dirs = []
    for vec in ([1, 0], [1j, 0], [0, 1], [0, 1j], [0.6, 0.8j], [-0.8, 0.6]):
        dirs.append(DiscField.constant(vec, degree))
    for vec in ([1, 0], [0, 1]):
        dirs.append(DiscField.holomorphic([[0, 0], vec], degree))
    return dirs


def _linearized_solve(u, b, Q, eps, n_theta, iters=60, tol=1e-10):
    """Solve ``dPsi_u x = b`` with ``dK_u`` from central differences."""
    def dk(x):
        return (_k_map(u + x * eps, Q, n_theta) - _k_map(u - x * eps, Q, n_theta)) * (0.5 / eps)

    x = b
    for _ in range(iters):
        x_new = b - dk(x)
        if _grid_sup(x_new - x, n_theta) <= tol * _grid_sup(b, n_theta):
            x = x_new
            break
        x = x_new
    return x


def estimate_c0(Q: QTensor, probes, method: C0Method = C0Method.CONTRACTION_BOUND, eps: float = 1e-4,
                n_theta: int = DEFAULT_NTHETA) -> C0Estimate:
    """Estimate a bound ``C0`` for ``|(dPsi)^{-1}|`` in the sup norm.

    CONTRACTION_BOUND measures ``kappa``, the largest Lipschitz ratio of
    ``K = Psi - Id`` over all probe pairs and over pairs ``u +- eps x`` for
    the linearised solutions ``x``, and returns ``1 / (1 - kappa)``.
    LINEARIZED_SAMPLING solves ``dPsi_u x = b`` for a fixed set of directions
    ``b`` at every probe and returns the largest ``|x| / |b|`` (at least 1).
    Because CONTRACTION_BOUND sees the same linearised pairs, it is never
    smaller on a given probe set.

    Raises
    ------
    NotAContraction
        If ``kappa >= 1``.
    """
    probes = list(probes)
    if not probes:
        raise ValueError("need at least one probe disc")
    if Q.is_zero:
        return C0Estimate(1.0, method, 0.0)
    degree = probes[0].degree
    dirs = _probe_directions(degree)
    amplification = 1.0
    kappa = 0.0
    ks = [_k_map(p, Q, n_theta) for p in probes]
    for u in probes:
        for b in dirs:
            x = _linearized_solve(u, b, Q, eps, n_theta)
            amplification = max(amplification, _grid_sup(x, n_theta) / _grid_sup(b, n_theta))
            if method is C0Method.CONTRACTION_BOUND:
                d = _k_map(u + x * eps, Q, n_theta) - _k_map(u - x * eps, Q, n_theta)
                kappa = max(kappa, _grid_sup(d, n_theta) / (2 * eps * _grid_sup(x, n_theta)))
    if method is C0Method.LINEARIZED_SAMPLING:
        return C0Estimate(float(amplification), method, 1.0 - 1.0 / amplification)
    for i in range(len(probes)):
        for j in range(i + 1, len(probes)):
            den = _grid_sup(probes[i] - probes[j], n_theta)
            if den > 0:
                kappa = max(kappa, _grid_sup(ks[i] - ks[j], n_theta) / den)
    if kappa >= 1:
        raise NotAContraction(f"measured Lipschitz constant {kappa:.3f} >= 1")
    return C0Estimate(float(1.0 / (1.0 - kappa)), method, float(kappa))


# ---------------------------------------------------------------------------
# translation by continuation

@dataclass
class TranslationTrace:
    ts: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    iterations: list = field(default_factory=list)


def translate_disc(u: DiscField, V, Q: QTensor, cfg: SolverConfig = SolverConfig(), c0: C0Estimate | None = None,
                   trace: TranslationTrace | None = None) -> DiscField:
    """Move a J-holomorphic disc so that its Psi-image shifts by the constant ``V``.

    Follows ``U_t = Psi(u) + t V`` over ``continuation_steps`` uniform steps,
    each solved from the previous disc.  A failing step is retried with the
    step halved, at most ``max_halvings`` times.  At every accepted ``t`` the
    distance ``sup |u - v_t|`` must be nondecreasing and at most
    ``1.1 t C0 |V|``.

    Raises
    ------
    NoConvergence
        With ``.t`` set to the failing continuation parameter.
    BoundViolation
        If the distance bound or its monotonicity fails.
    """
    V = np.asarray(V, dtype=complex).reshape(2)
    if trace is None:
        trace = TranslationTrace()
    size = float(np.linalg.norm(V))
    if size == 0.0:
        trace.ts.append(1.0)
        trace.distances.append(0.0)
        trace.iterations.append(0)
        return u
    if Q.is_zero:
        trace.ts.append(1.0)
        trace.distances.append(size)
        trace.iterations.append(0)
        return u + V
    if c0 is None:
        c0 = estimate_c0(Q, [u, u + V])
    target0 = psi_map(u, Q)
    hol = np.zeros_like(target0.coeffs)
    hol[:, 0] = target0.coeffs[:, 0]
    target0 = DiscField(hol)

    v = u
    t = 0.0
    dt = 1.0 / cfg.continuation_steps
    halvings = 0
    last_dist = 0.0
    while t < 1.0 - 1e-15:
        step = min(dt, 1.0 - t)
        t_next = t + step
        tr = SolveTrace()
        try:
            w = solve_disc(target0 + V * t_next, Q, cfg, initial=v, trace=tr)
        except NoConvergence as exc:
            if halvings >= cfg.max_halvings:
                raise NoConvergence(f"continuation failed at t = {t_next:.6g}: {exc}", t=t_next,
                                    history=exc.history) from exc
            halvings += 1
            dt = step / 2
            log.debug("halving continuation step to %g at t=%g", dt, t)
            continue
        dist = sup_norm(u - w)
        bound = SLACK * t_next * c0.value * size
        if dist > bound:
            raise BoundViolation(f"|u - v_t| = {dist:.3e} > {bound:.3e} at t = {t_next:.4g}")
        if dist < last_dist - 1e-12:
            raise BoundViolation(f"|u - v_t| decreased from {last_dist:.3e} to {dist:.3e} at t = {t_next:.4g}")
        trace.ts.append(t_next)
        trace.distances.append(dist)
        trace.iterations.append(tr.iterations)
        last_dist = dist
        v = w
        t = t_next
    return v
