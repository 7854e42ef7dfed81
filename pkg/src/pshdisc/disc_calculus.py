"""Maps on the closed unit disc in bigraded monomial form, and the Cauchy-Green operator.

A :class:`DiscField` stores coefficients ``c[m, n, k]`` of ``z^m zbar^n`` for
each C^2 component ``k``.  On this representation ``dz``, ``dbar`` and the
solid Cauchy transform

    T g(z) = (1/pi) int_D g(zeta) / (z - zeta) dA(zeta)

are exact sparse coefficient maps.  Pointwise products are formed by
collocation on a polar grid followed by per-frequency least squares.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from .domain import norm2
from .errors import OutsideDisc, TruncationOverflow

DEFAULT_DEGREE = 24
DEFAULT_NTHETA = 128
DEFAULT_ALPHA = 0.5
DISC_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class DiscField:
    """Truncated expansion ``u(z) = sum c[m, n] z^m zbar^n`` with values in C^2."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[0] != c.shape[1] or c.shape[2] != 2:
            raise ValueError(f"coefficients must have shape (M+1, M+1, 2), got {c.shape}")
        if c.shape[0] < 5:
            raise ValueError("truncation degree must be at least 4")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # construction -------------------------------------------------------
    @classmethod
    def zeros(cls, degree: int = DEFAULT_DEGREE) -> "DiscField":
        return cls(np.zeros((degree + 1, degree + 1, 2), dtype=complex))

    @classmethod
    def constant(cls, value, degree: int = DEFAULT_DEGREE) -> "DiscField":
        c = np.zeros((degree + 1, degree + 1, 2), dtype=complex)
        c[0, 0] = np.asarray(value, dtype=complex).reshape(2)
        return cls(c)

    @classmethod
    def holomorphic(cls, taylor, degree: int = DEFAULT_DEGREE) -> "DiscField":
        """From Taylor coefficients ``taylor[j]`` (each in C^2) of ``z^j``."""
        taylor = np.asarray(taylor, dtype=complex).reshape(-1, 2)
        if len(taylor) > degree + 1:
            raise TruncationOverflow(f"{len(taylor) - 1} > degree {degree}")
        c = np.zeros((degree + 1, degree + 1, 2), dtype=complex)
        c[: len(taylor), 0] = taylor
        return cls(c)

    @classmethod
    def from_monomials(cls, terms: dict, degree: int = DEFAULT_DEGREE) -> "DiscField":
        """``terms`` maps ``(m, n)`` to a C^2 coefficient."""
        c = np.zeros((degree + 1, degree + 1, 2), dtype=complex)
        for (m, n), v in terms.items():
            if m > degree or n > degree:
                raise TruncationOverflow(f"monomial z^{m} zbar^{n} exceeds degree {degree}")
            c[m, n] = np.asarray(v, dtype=complex).reshape(2)
        return cls(c)

    # basic algebra ------------------------------------------------------
    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def center(self) -> np.ndarray:
        return self.coeffs[0, 0].copy()

    def _check(self, other):
        if self.degree != other.degree:
            raise ValueError("degree mismatch")

    def __add__(self, other):
        if isinstance(other, DiscField):
            self._check(other)
            return DiscField(self.coeffs + other.coeffs)
        c = self.coeffs.copy()
        c[0, 0] += np.asarray(other, dtype=complex).reshape(2)
        return DiscField(c)

    def __sub__(self, other):
        if isinstance(other, DiscField):
            self._check(other)
            return DiscField(self.coeffs - other.coeffs)
        return self + (-np.asarray(other, dtype=complex))

    def __neg__(self):
        return DiscField(-self.coeffs)

    def __mul__(self, scalar):
        return DiscField(self.coeffs * scalar)

    __rmul__ = __mul__

    def allclose(self, other, atol=0.0) -> bool:
        return bool(np.max(np.abs(self.coeffs - other.coeffs), initial=0.0) <= atol)

    def max_abs_coeff(self) -> float:
        return float(np.abs(self.coeffs).max())

    def is_holomorphic(self) -> bool:
        return not np.any(self.coeffs[:, 1:])

    def rescaled(self, r: float) -> "DiscField":
        """The disc ``z -> u(r z)``."""
        m = np.arange(self.degree + 1)
        powers = float(r) ** (m[:, None] + m[None, :])
        return DiscField(self.coeffs * powers[:, :, None])

    def with_degree(self, degree: int) -> "DiscField":
        M = self.degree
        if degree < M and (np.any(self.coeffs[degree + 1 :]) or np.any(self.coeffs[:, degree + 1 :])):
            raise TruncationOverflow(f"field has monomials above degree {degree}")
        c = np.zeros((degree + 1, degree + 1, 2), dtype=complex)
        k = min(degree, M) + 1
        c[:k, :k] = self.coeffs[:k, :k]
        return DiscField(c)

    # evaluation ---------------------------------------------------------
    def __call__(self, z):
        return eval_field(self, z)

    # serialisation ------------------------------------------------------
    def to_json_dict(self) -> dict:
        M = self.degree
        flat = self.coeffs.reshape((M + 1) * (M + 1), 2)
        return {
            "degree": M,
            "components": [[[float(v.real), float(v.imag)] for v in flat[:, k]] for k in range(2)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, d) -> "DiscField":
        M = int(d["degree"])
        comps = np.asarray(d["components"], dtype=float)
        if comps.shape != (2, (M + 1) ** 2, 2):
            raise ValueError(f"bad component array shape {comps.shape}")
        vals = comps[..., 0] + 1j * comps[..., 1]
        return cls(vals.T.reshape(M + 1, M + 1, 2))

    @classmethod
    def from_json(cls, text: str) -> "DiscField":
        return cls.from_json_dict(json.loads(text))


# ---------------------------------------------------------------------------
# exact coefficient maps

def dbar(u: DiscField) -> DiscField:
    c = u.coeffs
    out = np.zeros_like(c)
    n = np.arange(1, u.degree + 1)
    out[:, :-1] = c[:, 1:] * n[None, :, None]
    return DiscField(out)


def dz(u: DiscField) -> DiscField:
    c = u.coeffs
    out = np.zeros_like(c)
    m = np.arange(1, u.degree + 1)
    out[:-1, :] = c[1:, :] * m[:, None, None]
    return DiscField(out)


def cg_transform(g: DiscField) -> DiscField:
    """Solid Cauchy transform on the unit disc, monomial by monomial.

    ``T(z^m zbar^n) = z^m zbar^(n+1) / (n+1) - [m >= n+1] z^(m-n-1) / (n+1)``:
    the first term is a dbar-antiderivative and the second removes its
    Cauchy integral over the circle, where ``zbar = 1/z``.
    """
    c = g.coeffs
    M = g.degree
    if np.any(c[:, M]):
        raise TruncationOverflow("Cauchy-Green transform needs zbar-degree <= M - 1")
    out = np.zeros_like(c)
    for n in range(M):
        col = c[:, n] / (n + 1)
        out[:, n + 1] += col
        # m >= n + 1  ->  z^(m-n-1)
        out[: M - n, 0] -= col[n + 1 :]
    return DiscField(out)


# ---------------------------------------------------------------------------
# evaluation

def _powers(w, M):
    out = np.empty(w.shape + (M + 1,), dtype=complex)
    out[..., 0] = 1.0
    for k in range(1, M + 1):
        out[..., k] = out[..., k - 1] * w
    return out


def eval_field(u: DiscField, z, check: bool = True) -> np.ndarray:
    """Values of ``u`` at complex points ``z``; result shape ``z.shape + (2,)``."""
    z = np.asarray(z, dtype=complex)
    if check and np.any(np.abs(z) > 1 + DISC_EPS):
        raise OutsideDisc(f"|z| = {np.abs(z).max():.6g} > 1")
    M = u.degree
    zp = _powers(z, M)
    zbp = _powers(np.conj(z), M)
    tmp = np.tensordot(zbp, u.coeffs, axes=([-1], [1]))  # (..., m, 2)
    return np.einsum("...m,...mc->...c", zp, tmp)


@dataclass(frozen=True)
class BoundaryTrace:
    """Values at ``t_j = 2 pi j / N`` on the unit circle, shape ``(N, 2)``."""

    values: np.ndarray

    def __post_init__(self):
        n = len(self.values)
        if n < 4 or n & (n - 1):
            raise ValueError(f"number of boundary samples must be a power of two, got {n}")

    @property
    def n_theta(self) -> int:
        return len(self.values)

    @property
    def angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_theta) / self.n_theta


def boundary_trace(u: DiscField, n_theta: int = DEFAULT_NTHETA) -> BoundaryTrace:
    if n_theta < 4 * u.degree:
        raise ValueError(f"n_theta = {n_theta} < 4 * degree = {4 * u.degree}")
    t = 2 * np.pi * np.arange(n_theta) / n_theta
    return BoundaryTrace(eval_field(u, np.exp(1j * t), check=False))


# ---------------------------------------------------------------------------
# collocation grid and least-squares re-projection

class PolarGrid:
    """Collocation grid ``r_j e^{i theta_l}`` with evaluation and projection.

    Radial nodes are Chebyshev-Lobatto points in ``s = r^2``, so each Fourier
    mode ``r^|k| p(r^2)`` is fitted on well-spread abscissae and ``r = 1`` is
    always a node.  The per-frequency fits use a QR factorisation: the
    monomial Vandermonde matrices are far too ill-conditioned for an
    explicit pseudo-inverse.
    """

    def __init__(self, degree: int, n_theta: int, n_r: int):
        self.degree = M = degree
        if n_theta < 2 * M + 2:
            raise ValueError("n_theta must exceed twice the degree")
        self.n_theta = n_theta
        self.n_r = n_r
        s = 0.5 * (1 - np.cos(np.pi * np.arange(n_r) / (n_r - 1)))
        self.r = np.sqrt(s)
        self.theta = 2 * np.pi * np.arange(n_theta) / n_theta
        self.points = self.r[:, None] * np.exp(1j * self.theta)[None, :]
        self._modes = []
        for k in range(-M, M + 1):
            ms = np.arange(max(0, k), M + 1 + min(0, k))
            ns = ms - k
            self._modes.append((k, ms, ns, self.r[:, None] ** (ms + ns)[None, :]))
        self._fits = {}

    def values(self, u: DiscField) -> np.ndarray:
        """``u`` at the grid points, shape ``(n_r, n_theta, 2)``."""
        F = np.zeros((self.n_r, self.n_theta, 2), dtype=complex)
        c = u.coeffs
        for k, ms, ns, V in self._modes:
            F[:, k % self.n_theta] = V @ c[ms, ns]
        return np.fft.ifft(F, axis=1) * self.n_theta

    def _fit_ops(self, n_max):
        if n_max in self._fits:
            return self._fits[n_max]
        ops = []
        for k, ms, ns, V in self._modes:
            keep = ns <= n_max
            if not np.any(keep):
                continue
            q, r = np.linalg.qr(V[:, keep])
            ops.append((k, ms[keep], ns[keep], q.conj().T, r))
        self._fits[n_max] = ops
        return ops

    def project(self, values: np.ndarray, n_max: int | None = None) -> DiscField:
        """Least-squares coefficients (``m <= M``, ``n <= n_max``) of grid samples."""
        M = self.degree
        if n_max is None:
            n_max = M
        F = np.fft.fft(values, axis=1) / self.n_theta
        c = np.zeros((M + 1, M + 1, 2), dtype=complex)
        for k, ms, ns, qh, r in self._fit_ops(n_max):
            c[ms, ns] = solve_triangular(r, qh @ F[:, k % self.n_theta, :], check_finite=False)
        return DiscField(c)


@lru_cache(maxsize=16)
def polar_grid(degree: int = DEFAULT_DEGREE, n_theta: int = DEFAULT_NTHETA, n_r: int | None = None) -> PolarGrid:
    if n_r is None:
        n_r = degree + 1
    return PolarGrid(degree, n_theta, n_r)


def multiply_project(grid: PolarGrid, values_fn, n_max=None) -> DiscField:
    """Project a pointwise expression evaluated on ``grid.points``."""
    return grid.project(values_fn(grid.points), n_max=n_max)


# ---------------------------------------------------------------------------
# norms

def _polar_points(n_r, n_theta, include_center=True):
    r = np.linspace(0.0, 1.0, n_r)
    t = 2 * np.pi * np.arange(n_theta) / n_theta
    pts = (r[1:, None] * np.exp(1j * t)[None, :]).ravel()
    return np.concatenate([[0.0], pts]) if include_center else pts


def sup_norm(u: DiscField, n_r: int = 33, n_theta: int = 128) -> float:
    """Max of ``|u(z)|`` (Euclidean in C^2) over a polar grid.

    The grid has ``n_r`` equispaced radii in ``[0, 1]`` (both ends included)
    and ``n_theta`` equispaced angles.
    """
    return float(norm2(eval_field(u, _polar_points(n_r, n_theta), check=False)).max())


def real_jacobian(u: DiscField, z) -> np.ndarray:
    """Real 4x2 Jacobian ``[u_x | u_y]`` at points ``z``."""
    uz = eval_field(dz(u), z, check=False)
    uzb = eval_field(dbar(u), z, check=False)
    ux = uz + uzb
    uy = 1j * (uz - uzb)
    out = np.empty(np.shape(z) + (4, 2))
    out[..., 0::2, 0] = ux.real
    out[..., 1::2, 0] = ux.imag
    out[..., 0::2, 1] = uy.real
    out[..., 1::2, 1] = uy.imag
    return out


def c1_alpha_seminorm(u: DiscField, alpha: float = DEFAULT_ALPHA, n_r: int = 8, n_theta: int = 24,
                      chunk: int = 512) -> float:
    """Grid estimate of the Hoelder seminorm of ``Du``.

    Maximum over pairs of polar grid points (``n_r`` radii, ``n_theta``
    angles) with ``|x - y| >= 1 / (n_r - 1)`` of
    ``|Du(x) - Du(y)|_F / |x - y|^alpha``.  This is an estimate, not a bound.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    pts = _polar_points(n_r, n_theta)
    jac = real_jacobian(u, pts).reshape(len(pts), 8)
    h = 1.0 / (n_r - 1)
    best = 0.0
    for start in range(0, len(pts), chunk):
        p = pts[start : start + chunk]
        d = np.abs(p[:, None] - pts[None, :])
        diff = np.linalg.norm(jac[start : start + chunk, None, :] - jac[None, :, :], axis=-1)
        mask = d >= h * (1 - 1e-12)
        if np.any(mask):
            best = max(best, float(np.max(np.where(mask, diff / np.where(mask, d, 1.0) ** alpha, 0.0))))
    return best
