"""Points of C^2, ball domains and axis-aligned sampling lattices.

Points of C^2 are stored as complex arrays whose last axis has length 2.
The real identification used throughout the package is
``(z1, z2) <-> (x1, y1, x2, y2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np


def as_point(z) -> np.ndarray:
    """Coerce to a finite complex point of shape ``(2,)``."""
    p = np.asarray(z, dtype=complex).reshape(2)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"non-finite point {p}")
    return p


def to_real(z: np.ndarray) -> np.ndarray:
    """``(..., 2)`` complex -> ``(..., 4)`` real, ordered ``(x1, y1, x2, y2)``."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape[:-1] + (4,))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def to_complex(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_real`."""
    x = np.asarray(x, dtype=float)
    return x[..., 0::2] + 1j * x[..., 1::2]


def sqnorm(z: np.ndarray) -> np.ndarray:
    """Squared Euclidean norm over the last (C^2) axis."""
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return np.sum(z.real**2 + z.imag**2, axis=-1)
    return np.sum(z**2, axis=-1)


def norm2(z: np.ndarray) -> np.ndarray:
    """Euclidean norm over the last (C^2) axis."""
    return np.sqrt(sqnorm(z))


@dataclass(frozen=True)
class Domain:
    """The open ball ``{|z - center| < radius}`` in C^2."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"radius must be positive, got {self.radius}")

    def contains(self, z) -> np.ndarray:
        return norm2(np.asarray(z) - self.center) < self.radius

    def boundary_distance(self, z) -> np.ndarray:
        return self.radius - norm2(np.asarray(z) - self.center)

    def dense_samples(self, per_axis: int = 7, fill: float = 0.95) -> np.ndarray:
        """Lattice points of the cube ``[-fill r, fill r]^4`` that lie in the ball."""
        ax = np.linspace(-fill * self.radius, fill * self.radius, per_axis)
        pts = np.array(list(product(ax, repeat=4)))
        pts = pts[np.sum(pts**2, axis=1) < (fill * self.radius) ** 2]
        z = to_complex(pts) + self.center
        return np.vstack([self.center[None, :], z])


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned lattice in a real 2D or 4D slice of C^2.

    ``axes`` lists the real coordinates (0..3 for x1, y1, x2, y2) that vary;
    the remaining coordinates are frozen at the center.
    """

    center: np.ndarray
    half_widths: tuple
    nodes_per_axis: tuple
    axes: tuple = (0, 1)

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        axes = tuple(int(a) for a in self.axes)
        hw = tuple(float(h) for h in np.broadcast_to(self.half_widths, (len(axes),)))
        nn = tuple(int(n) for n in np.broadcast_to(self.nodes_per_axis, (len(axes),)))
        if len(axes) not in (2, 4) or len(set(axes)) != len(axes) or not set(axes) <= {0, 1, 2, 3}:
            raise ValueError(f"axes must be 2 or 4 distinct real coordinates, got {axes}")
        if any(h <= 0 for h in hw) or any(n < 2 for n in nn):
            raise ValueError("half widths must be positive and at least 2 nodes per axis")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "half_widths", hw)
        object.__setattr__(self, "nodes_per_axis", nn)

    @property
    def shape(self) -> tuple:
        return self.nodes_per_axis

    @property
    def spacing(self) -> np.ndarray:
        return np.array([2 * h / (n - 1) for h, n in zip(self.half_widths, self.nodes_per_axis)])

    def axis_values(self) -> list:
        c = to_real(self.center)
        return [
            c[a] + np.linspace(-h, h, n)
            for a, h, n in zip(self.axes, self.half_widths, self.nodes_per_axis)
        ]

    def slice_coords(self, z) -> np.ndarray:
        """Real coordinates of ``z`` along the grid axes, shape ``(..., len(axes))``."""
        return to_real(z)[..., list(self.axes)]

    def project(self, z) -> np.ndarray:
        """Orthogonal projection onto the affine slice spanned by the grid."""
        x = to_real(z)
        c = to_real(self.center)
        frozen = [a for a in range(4) if a not in self.axes]
        x[..., frozen] = c[frozen]
        return to_complex(x)

    def nodes(self) -> np.ndarray:
        """Grid nodes as complex points, shape ``shape + (2,)``, C order."""
        mesh = np.meshgrid(*self.axis_values(), indexing="ij")
        x = np.broadcast_to(to_real(self.center), self.shape + (4,)).copy()
        for a, m in zip(self.axes, mesh):
            x[..., a] = m
        return to_complex(x)

    def inside(self, domain: Domain) -> bool:
        corners = np.array(list(product(*[(-h, h) for h in self.half_widths])))
        x = np.broadcast_to(to_real(self.center), (len(corners), 4)).copy()
        x[:, list(self.axes)] += corners
        return bool(np.all(domain.contains(to_complex(x))))

    def to_dict(self) -> dict:
        return {
            "center": [[float(c.real), float(c.imag)] for c in self.center],
            "half_widths": list(self.half_widths),
            "nodes_per_axis": list(self.nodes_per_axis),
            "axes": list(self.axes),
        }
