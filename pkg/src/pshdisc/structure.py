"""Almost complex structures on open subsets of C^2 and the deformation tensor Q.

Matrices act on R^4 in the ordering ``(x1, y1, x2, y2)``; ``J_ST`` is
multiplication by ``i``.  Every evaluator is vectorised: it accepts complex
points of shape ``(..., 2)`` and returns arrays of shape ``(..., 4, 4)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .domain import Domain, to_complex, to_real
from .errors import NotAlmostComplex, SingularFrame, SingularStructure

J_ST = np.array(
    [
        [0.0, -1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 1.0, 0.0],
    ]
)
ID4 = np.eye(4)

FD_STEP = 1e-5
AXIOM_TOL = 1e-10
AXIOM_ERROR_TOL = 1e-8
SINGULAR_TOL = 1e-8


class QMode(enum.Enum):
    """How Q enters the Cauchy-Riemann system: ``Q dz(u)`` or ``Q conj(dz(u))``."""

    LINEAR = "linear"
    ANTILINEAR = "antilinear"


def _fd_derivative(fn, z, step):
    """Centered differences of a matrix field along the 4 real axes.

    Returns shape ``(..., 4, 4, 4)`` with the differentiation axis first
    after the batch axes.
    """
    x = to_real(z)
    out = []
    for a in range(4):
        e = np.zeros(4)
        e[a] = step
        out.append((fn(to_complex(x + e)) - fn(to_complex(x - e))) / (2 * step))
    return np.stack(out, axis=-3)


@dataclass(frozen=True)
class AlmostComplexStructure:
    """A field ``z -> J(z)`` of real 4x4 matrices with ``J^2 = -Id``.

    Parameters
    ----------
    matrix_fn : callable
        Vectorised evaluator ``(..., 2) complex -> (..., 4, 4)``.
    closeness_delta : float
        Upper bound for ``max(|J - J_st|, |DJ|)`` over the working domain.
    derivative_fn : callable, optional
        Analytic ``DJ``; centered differences with step ``FD_STEP`` otherwise.
    """

    matrix_fn: Callable
    closeness_delta: float
    derivative_fn: Optional[Callable] = None
    name: str = "custom"
    is_standard: bool = False
    frame_fn: Optional[Callable] = None

    def matrix_at(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.is_standard:
            return np.broadcast_to(J_ST, z.shape[:-1] + (4, 4)).copy()
        return self.matrix_fn(z)

    def derivative_at(self, z, step: float = FD_STEP) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.is_standard:
            return np.zeros(z.shape[:-1] + (4, 4, 4))
        if self.derivative_fn is not None:
            return self.derivative_fn(z)
        return _fd_derivative(self.matrix_fn, z, step)


def standard_structure() -> AlmostComplexStructure:
    return AlmostComplexStructure(
        matrix_fn=lambda z: np.broadcast_to(J_ST, np.shape(z)[:-1] + (4, 4)).copy(),
        closeness_delta=0.0,
        name="standard",
        is_standard=True,
    )


# ---------------------------------------------------------------------------
# perturbation fields used to build test structures

def _antilinear_unit(seed_matrix):
    b = 0.5 * (seed_matrix + J_ST @ seed_matrix @ J_ST)
    return b / np.linalg.norm(b, 2)


_BASE = _antilinear_unit(
    np.array(
        [
            [0.3, 1.0, -0.2, 0.5],
            [0.8, -0.1, 0.4, 0.0],
            [-0.3, 0.6, 0.2, 1.0],
            [0.5, 0.1, 0.9, -0.4],
        ]
    )
)
_SHEAR_A = _antilinear_unit(np.array([[1.0, 0, 0.5, 0], [0, 0, 0, 0.5], [0, 0.3, 1.0, 0], [0.2, 0, 0, 0]]))
_SHEAR_B = _antilinear_unit(np.array([[0, 0.4, 0, 1.0], [0.6, 0, 0.2, 0], [0, 1.0, 0, 0], [0, 0, 0.7, 0.1]]))


def bump_field(z, center=(0.0, 0.0), width=1.0):
    """``exp(-|z - c|^2 / w^2) B`` with a fixed unit-norm J_st-antilinear ``B``.

    Frames ``Id + t E`` with E antilinear move J away from J_st at first
    order; complex-linear frames would leave it unchanged.
    """
    z = np.asarray(z, dtype=complex)
    r2 = np.sum(np.abs(z - np.asarray(center, dtype=complex)) ** 2, axis=-1)
    return np.exp(-r2 / width**2)[..., None, None] * _BASE


def shear_field(z):
    """Frame perturbation depending linearly on ``Re z1`` and ``Im z2``."""
    x = to_real(np.asarray(z, dtype=complex))
    return 0.5 * (x[..., 0, None, None] * _SHEAR_A + x[..., 3, None, None] * _SHEAR_B) + 0.5 * _BASE


def constant_field(z):
    return np.broadcast_to(_BASE, np.shape(z)[:-1] + (4, 4)).copy()


PERTURBATIONS = {"bump": bump_field, "shear": shear_field, "constant": constant_field}


def perturbed_frame(name: str, amplitude: float) -> Callable:
    """``z -> Id + amplitude * E(z)`` for a named perturbation field."""
    if name not in PERTURBATIONS:
        raise KeyError(name)
    field = PERTURBATIONS[name]
    return lambda z: ID4 + amplitude * field(z)


def conjugated_structure(G: Callable, base_domain: Domain, per_axis: int = 7, name: str = "conjugated"):
    """Build ``J = G J_st G^{-1}`` from an invertible frame field ``G``.

    ``closeness_delta`` comes from the perturbation bounds
    ``|J - J_st| <= 2 eta / (1 - eta)`` and
    ``|DJ| <= 2 eta' / (1 - eta) + 2 eta eta' / (1 - eta)^2``, where ``eta``
    and ``eta'`` are sampled sup norms of ``G - Id`` and ``DG`` on
    ``base_domain``, inflated by 10% to cover the gaps between samples.
    """
    samples = base_domain.dense_samples(per_axis)
    g = G(samples)
    sv = np.linalg.svd(g, compute_uv=False)
    if np.any(sv[..., -1] < SINGULAR_TOL * np.maximum(sv[..., 0], 1.0)) or not np.all(np.isfinite(sv)):
        bad = samples[np.argmin(sv[..., -1])]
        raise SingularFrame(f"frame not invertible near z = {bad}")

    eta = float(np.max(np.linalg.norm(g - ID4, 2, axis=(-2, -1))))
    dg = _fd_derivative(G, samples, FD_STEP)
    eta1 = float(np.max(np.linalg.norm(dg, 2, axis=(-2, -1))))
    if eta < 1:
        delta = 1.1 * max(2 * eta / (1 - eta), 2 * eta1 / (1 - eta) + 2 * eta * eta1 / (1 - eta) ** 2)
    else:
        delta = np.inf

    def matrix_fn(z):
        gz = G(z)
        # J = G J_st G^{-1}  <=>  J^T = G^{-T} (G J_st)^T
        gj = gz @ J_ST
        return np.swapaxes(np.linalg.solve(np.swapaxes(gz, -1, -2), np.swapaxes(gj, -1, -2)), -1, -2)

    if eta == 0.0 and eta1 == 0.0:
        delta = 0.0
    return AlmostComplexStructure(matrix_fn=matrix_fn, closeness_delta=delta, name=name, frame_fn=G)


def named_structure(kind: str, perturbation: str = "bump", amplitude: float = 0.0, base_domain=None):
    """Structure factory used by scenario configs."""
    if kind == "standard":
        return standard_structure()
    if kind == "conjugated":
        if base_domain is None:
            base_domain = Domain(np.zeros(2), 1.0)
        return conjugated_structure(
            perturbed_frame(perturbation, amplitude), base_domain, name=f"{perturbation}:{amplitude:g}"
        )
    raise KeyError(kind)


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class ValidationReport:
    max_axiom_error: float
    min_singular_value: float
    empirical_distance: float
    closeness_delta: float
    passed: bool

    def to_dict(self):
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v)) for k, v in self.__dict__.items()}


def empirical_c1_distance(J: AlmostComplexStructure, samples) -> float:
    """``max(|J - J_st|_2, max_a |d_a J|_2)`` over the samples."""
    samples = np.asarray(samples, dtype=complex)
    if J.is_standard:
        return 0.0
    m = J.matrix_at(samples)
    d = J.derivative_at(samples)
    dist0 = np.linalg.norm(m - J_ST, 2, axis=(-2, -1))
    dist1 = np.linalg.norm(d, 2, axis=(-2, -1)).max(axis=-1)
    return float(max(dist0.max(), dist1.max()))


def validate_structure(J: AlmostComplexStructure, samples) -> ValidationReport:
    """Check ``J^2 = -Id``, invertibility of ``J + J_st`` and C^1 closeness.

    Raises
    ------
    NotAlmostComplex
        If ``|J^2 + Id|_inf > 1e-8`` at some sample.
    SingularStructure
        If the smallest singular value of ``J + J_st`` drops below 1e-8.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=complex))
    if samples.size == 0:
        raise ValueError("need at least one sample point")
    m = J.matrix_at(samples)
    axiom = float(np.abs(m @ m + ID4).max())
    if axiom > AXIOM_ERROR_TOL:
        raise NotAlmostComplex(f"|J^2 + Id| = {axiom:.3e}")
    smin = float(np.linalg.svd(m + J_ST, compute_uv=False)[..., -1].min())
    if smin < SINGULAR_TOL:
        raise SingularStructure(f"sigma_min(J + J_st) = {smin:.3e}")
    dist = empirical_c1_distance(J, samples)
    passed = axiom <= AXIOM_TOL and dist <= J.closeness_delta
    return ValidationReport(axiom, smin, dist, float(J.closeness_delta), bool(passed))


# ---------------------------------------------------------------------------
# the deformation tensor

def complex_blocks(m: np.ndarray) -> np.ndarray:
    """Read a real ``(..., 4, 4)`` operator as a complex ``(..., 2, 2)`` matrix.

    Entry ``(k, j)`` is the image of the real unit vector ``e_{x_j}`` in the
    ``z_k`` component.  For a J_st-antilinear operator ``M`` this is the
    matrix ``A`` with ``M v = A conj(v)``; for a linear one ``M v = A v``.
    """
    return m[..., 0::2, 0::2] + 1j * m[..., 1::2, 0::2]


def q_real(J: AlmostComplexStructure, z) -> np.ndarray:
    """``(J + J_st)^{-1} (J - J_st)`` as a real ``(..., 4, 4)`` field.

    With ``J^2 = -Id`` this equals ``-(J - J_st)(J + J_st)^{-1}``.
    """
    m = J.matrix_at(z)
    a = m + J_ST
    det = np.linalg.det(a)
    if np.any(~np.isfinite(det)) or np.any(np.abs(det) < SINGULAR_TOL):
        raise SingularStructure("J + J_st is singular along the sampled points")
    return np.linalg.solve(a, m - J_ST)


def split_linear_antilinear(m: np.ndarray):
    """Complex ``A, B`` with ``M v = A v + B conj(v)`` for real ``(..., 4, 4)`` ``M``."""
    c1 = m[..., 0::2, 0::2] + 1j * m[..., 1::2, 0::2]
    c2 = m[..., 0::2, 1::2] + 1j * m[..., 1::2, 1::2]
    return 0.5 * (c1 - 1j * c2), 0.5 * (c1 + 1j * c2)


def _inv2(a):
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    out = np.empty_like(a)
    out[..., 0, 0] = a[..., 1, 1]
    out[..., 1, 1] = a[..., 0, 0]
    out[..., 0, 1] = -a[..., 0, 1]
    out[..., 1, 0] = -a[..., 1, 0]
    return out / det[..., None, None], det


def frame_Q(G, z) -> np.ndarray:
    """Q of ``J = G J_st G^{-1}`` from the frame alone: ``Q = -B conj(A)^{-1}``.

    If ``G = A + B conj`` then ``u = A w + B conj(w)`` with ``w`` holomorphic is
    J-holomorphic for frozen ``G``, and ``dbar u = B conj(A)^{-1} conj(dz u)``.
    """
    a, b = split_linear_antilinear(G(z))
    inv, det = _inv2(np.conj(a))
    if np.any(~np.isfinite(det)) or np.any(np.abs(det) < SINGULAR_TOL):
        raise SingularStructure("linear part of the frame is singular; J + J_st degenerates")
    return -b @ inv


def compute_Q(J: AlmostComplexStructure, z, mode: QMode = QMode.ANTILINEAR) -> np.ndarray:
    """Complex 2x2 deformation tensor at ``z``.

    The matrix is the same for both modes; ``mode`` only fixes how it is
    applied (see :class:`QTensor`).  With the convention ``du o i = J(u) o du``
    the antilinear application makes ``dbar u + Q(u) conj(dz u) = 0``
    equivalent to J-holomorphy.
    """
    z = np.asarray(z, dtype=complex)
    if J.is_standard:
        return np.zeros(z.shape[:-1] + (2, 2), dtype=complex)
    if J.frame_fn is not None:
        return frame_Q(J.frame_fn, z)
    return complex_blocks(q_real(J, z))


@dataclass(frozen=True)
class QTensor:
    """Q attached to a structure together with its application mode."""

    structure: AlmostComplexStructure
    mode: QMode = QMode.ANTILINEAR

    @property
    def is_zero(self) -> bool:
        return self.structure.is_standard

    def q_at(self, z) -> np.ndarray:
        return compute_Q(self.structure, z, self.mode)

    def apply(self, points, w) -> np.ndarray:
        """``Q(points) w`` (LINEAR) or ``Q(points) conj(w)`` (ANTILINEAR)."""
        q = self.q_at(points)
        if self.mode is QMode.ANTILINEAR:
            w = np.conj(w)
        return np.einsum("...ij,...j->...i", q, w)

    def with_mode(self, mode: QMode) -> "QTensor":
        return QTensor(self.structure, mode)
