"""Periodic channel geometry, Fourier x finite-element fields and their norms.

A field lives on one of three vertical slabs of the reference channel
``(0, L)^2 x (0, h)``:

* ``"solid"``   -- ``0 <= x3 <= h_e``
* ``"fluid"``   -- ``h_e <= x3 <= h``
* ``"channel"`` -- the whole height, solid and fluid sharing the interface node

Horizontally a field is stored by its complex Fourier coefficients
``c[k1, k2]`` for ``|k1|, |k2| <= M`` (array index ``k + M``); vertically by
nodal values of a continuous piecewise polynomial (degree 2 for velocities
and displacements, degree 1 for pressures) on a uniform grid.  The array is
``coeffs[i1, i2, node, component]``.  Real functions satisfy
``c[-k] = conj(c[k])``.

Nonlinear terms are evaluated on a padded physical grid of ``n_quad`` points
per horizontal direction (``n_quad > 3 M``, the 2/3 rule) times Gauss points
in each vertical element.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field, replace
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.fft

SLABS = ("solid", "fluid", "channel")


@dataclass(frozen=True)
class DomainConfig:
    """Geometry, physics, discretization and run parameters.

    ``h_s`` is the natural height of the elastic body, ``h_e`` the reference
    interface height (average height of the initial interface).  They
    coincide unless an h-shift scenario is configured.
    """

    L: float = 1.0
    h: float = 2.0
    h_s: float = 1.0
    h_e: Optional[float] = None
    nu: float = 1.0
    lam: float = 4.0
    g: float = 0.0
    M: int = 4
    Ns: int = 16
    Nf: int = 16
    dt: Optional[float] = None
    T_end: float = 1.0
    # warn when g > 0 and lam / g is not above this
    lambda_over_g_min: float = 4.0
    n_quad: Optional[int] = None
    n_gauss: int = 3
    jacobian_window: tuple = (0.99, 1.01)
    ainv_tol: Optional[float] = None
    tol_picard: float = 1e-10
    atol_picard: float = 1e-13
    max_sweeps: int = 5
    tol_div: float = 1e-10

    def __post_init__(self):
        if self.h_e is None:
            object.__setattr__(self, "h_e", self.h_s)
        if self.dt is None:
            object.__setattr__(self, "dt", 0.01 * self.h_e / math.sqrt(self.lam) if self.lam > 0 else 0.0)
        if isinstance(self.jacobian_window, list):
            object.__setattr__(self, "jacobian_window", tuple(self.jacobian_window))
        self.validate()

    def validate(self):
        if not self.L > 0 or not self.h > 0:
            raise ValueError("L and h must be positive")
        if not 0 < self.h_s < self.h:
            raise ValueError(f"need 0 < h_s < h, got h_s={self.h_s}, h={self.h}")
        if not 0 < self.h_e < self.h:
            raise ValueError(f"need 0 < h_e < h, got h_e={self.h_e}, h={self.h}")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.g < 0:
            raise ValueError("gravity must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T_end < 0:
            raise ValueError("T_end must be non-negative")
        for name in ("M", "Ns", "Nf"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value}")
        if self.n_gauss < 3:
            raise ValueError("n_gauss must be at least 3")
        if self.n_quad is not None and self.n_quad <= 2 * self.M:
            raise ValueError("n_quad must exceed 2 M")
        if self.g > 0 and self.lam / self.g <= self.lambda_over_g_min:
            warnings.warn(
                f"lambda/g = {self.lam / self.g:.3g} is not above {self.lambda_over_g_min}; "
                "the small-data regime assumes a stiff solid relative to gravity",
                stacklevel=3,
            )

    @property
    def stiffness_scale(self) -> float:
        """Vertical stiffness factor ``(h_e/h_s)^2`` of the solid operator."""
        return (self.h_e / self.h_s) ** 2

    @property
    def solid_weight(self) -> float:
        """Reference-volume weight ``h_s/h_e`` of the solid equation."""
        return self.h_s / self.h_e

    @property
    def traction_offset(self) -> float:
        """Constant ``lambda (h_s - h_e)/h_s`` of the interface traction."""
        return self.lam * (self.h_s - self.h_e) / self.h_s

    @property
    def fluid_volume(self) -> float:
        return self.L**2 * (self.h - self.h_e)

    @property
    def ainv_guard(self) -> float:
        if self.ainv_tol is not None:
            return self.ainv_tol
        return 0.01 * min(1.0, 1.0 / math.sqrt(self.fluid_volume))

    def with_(self, **changes) -> "DomainConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class HorizontalMode:
    """One horizontal wavevector with its Laplacian eigenvalue."""

    k: tuple
    eigenvalue: float
    basis_kind: str


def _p2_local(xi):
    """Quadratic Lagrange shape functions on [0, 1] and derivatives."""
    xi = np.asarray(xi, dtype=float)
    n = np.stack([2 * xi**2 - 3 * xi + 1, 4 * xi * (1 - xi), 2 * xi**2 - xi], axis=-1)
    dn = np.stack([4 * xi - 3, 4 - 8 * xi, 4 * xi - 1], axis=-1)
    d2n = np.broadcast_to(np.array([4.0, -8.0, 4.0]), n.shape).copy()
    return n, dn, d2n


class P2Space:
    """Continuous piecewise quadratics on a uniform grid of ``[a, b]``."""

    degree = 2

    def __init__(self, a: float, b: float, n_el: int, n_gauss: int = 4):
        self.a, self.b, self.n_el = float(a), float(b), int(n_el)
        self.dx = (self.b - self.a) / self.n_el
        self.ndof = 2 * self.n_el + 1
        self.nodes = self.a + 0.5 * self.dx * np.arange(self.ndof)
        self.vertices = self.a + self.dx * np.arange(self.n_el + 1)
        gx, gw = np.polynomial.legendre.leggauss(n_gauss)
        xi = 0.5 * (gx + 1.0)
        n, dn, d2n = _p2_local(xi)
        nq = self.n_el * n_gauss
        self.zq = (self.a + self.dx * (np.arange(self.n_el)[:, None] + xi[None, :])).ravel()
        self.wq = np.tile(0.5 * gw * self.dx, self.n_el)
        self.E = np.zeros((nq, self.ndof))
        self.D = np.zeros((nq, self.ndof))
        self.D2 = np.zeros((nq, self.ndof))
        for e in range(self.n_el):
            rows = slice(e * n_gauss, (e + 1) * n_gauss)
            cols = slice(2 * e, 2 * e + 3)
            self.E[rows, cols] = n
            self.D[rows, cols] = dn / self.dx
            self.D2[rows, cols] = d2n / self.dx**2
        W = self.wq[:, None]
        self.wE = W * self.E
        self.wD = W * self.D
        self.mass = self.E.T @ (W * self.E)
        self.stiffness = self.D.T @ (W * self.D)

    @cached_property
    def nodal_derivative(self) -> np.ndarray:
        """Matrix mapping nodal values to nodal values of the derivative.

        Element derivatives are sampled at the local nodes; the two one-sided
        values at a shared vertex are averaged.
        """
        Dn = np.zeros((self.ndof, self.ndof))
        counts = np.zeros(self.ndof)
        local = np.array([[-3.0, 4.0, -1.0], [-1.0, 0.0, 1.0], [1.0, -4.0, 3.0]]) / self.dx
        for e in range(self.n_el):
            idx = np.arange(2 * e, 2 * e + 3)
            for r in range(3):
                Dn[idx[r], idx] += local[r]
                counts[idx[r]] += 1
        return Dn / counts[:, None]

    def boundary_derivative(self, end: str) -> np.ndarray:
        """Row vector giving the one-sided derivative at ``a`` or ``b``."""
        row = np.zeros(self.ndof)
        if end == "a":
            row[:3] = np.array([-3.0, 4.0, -1.0]) / self.dx
        else:
            row[-3:] = np.array([1.0, -4.0, 3.0]) / self.dx
        return row


class P1Space:
    """Continuous piecewise linears on the vertices of a :class:`P2Space`."""

    degree = 1

    def __init__(self, p2: P2Space, n_gauss: int = 4):
        self.a, self.b, self.n_el, self.dx = p2.a, p2.b, p2.n_el, p2.dx
        self.ndof = self.n_el + 1
        self.nodes = p2.vertices.copy()
        gx, _ = np.polynomial.legendre.leggauss(n_gauss)
        xi = 0.5 * (gx + 1.0)
        self.E = np.zeros((self.n_el * n_gauss, self.ndof))
        for e in range(self.n_el):
            rows = slice(e * n_gauss, (e + 1) * n_gauss)
            self.E[rows, e] = 1 - xi
            self.E[rows, e + 1] = xi
        self.zq, self.wq = p2.zq, p2.wq
        self.wE = self.wq[:, None] * self.E


class Grid:
    """Mode list plus the vertical spaces of the solid and fluid slabs."""

    def __init__(self, config: DomainConfig):
        config.validate()
        self.config = config
        self.L = config.L
        self.M = int(config.M)
        self.nm = 2 * self.M + 1
        self.kidx = np.arange(-self.M, self.M + 1)
        kk = 2 * np.pi * self.kidx / self.L
        self.K1 = np.repeat(kk[:, None], self.nm, axis=1)
        self.K2 = np.repeat(kk[None, :], self.nm, axis=0)
        self.lam = self.K1**2 + self.K2**2
        nq = config.n_quad or 2 * math.ceil((3 * self.M + 1) / 2)
        self.n_quad = max(int(nq), 2 * self.M + 2)
        self.x_quad = self.L * np.arange(self.n_quad) / self.n_quad
        self.solid = P2Space(0.0, config.h_e, config.Ns, config.n_gauss)
        self.fluid = P2Space(config.h_e, config.h, config.Nf, config.n_gauss)
        self.fluid_p1 = P1Space(self.fluid, config.n_gauss)
        self.solid_nodes = self.solid.vertices
        self.fluid_nodes = self.fluid.vertices
        self.n_solid = self.solid.ndof
        self.n_fluid = self.fluid.ndof
        self.n_channel = self.n_solid + self.n_fluid - 1
        self.solid_slice = slice(0, self.n_solid)
        self.fluid_slice = slice(self.n_solid - 1, self.n_channel)
        self.area = self.L**2
        self.modes = [
            HorizontalMode(
                k=(int(k1), int(k2)),
                eigenvalue=float((2 * np.pi / self.L) ** 2 * (k1**2 + k2**2)),
                basis_kind=_basis_tag(k1, k2),
            )
            for k1 in self.kidx
            for k2 in self.kidx
        ]

    # -- vertical nodes --------------------------------------------------
    def nodes(self, slab: str, degree: int = 2) -> np.ndarray:
        if slab == "solid":
            return self.solid.nodes if degree == 2 else self.solid.vertices
        if slab == "fluid":
            return self.fluid.nodes if degree == 2 else self.fluid_p1.nodes
        if slab == "channel":
            if degree != 2:
                raise ValueError("channel fields are degree 2")
            return np.concatenate([self.solid.nodes, self.fluid.nodes[1:]])
        raise ValueError(f"unknown slab {slab!r}")

    def space(self, slab: str, degree: int = 2):
        if slab == "solid":
            return self.solid
        if slab == "fluid":
            return self.fluid if degree == 2 else self.fluid_p1
        raise ValueError(f"no single space for slab {slab!r}")

    def mode_index(self, k1: int, k2: int) -> tuple:
        if abs(k1) > self.M or abs(k2) > self.M:
            raise IndexError(f"mode ({k1}, {k2}) outside |k| <= {self.M}")
        return (k1 + self.M, k2 + self.M)

    # -- transforms ------------------------------------------------------
    def to_physical(self, c: np.ndarray) -> np.ndarray:
        """Evaluate coefficients ``c[i1, i2, ...]`` on the padded grid."""
        return spectral_to_grid(c, self.n_quad)

    def to_spectral(self, values: np.ndarray) -> np.ndarray:
        """Truncated Fourier coefficients of grid values ``v[x1, x2, ...]``."""
        return grid_to_spectral(values, self.M)

    def horizontal_mesh(self):
        return np.meshgrid(self.x_quad, self.x_quad, indexing="ij")


def _basis_tag(k1, k2) -> str:
    if k1 == 0 and k2 == 0:
        return "constant"
    return f"{'cos' if k1 >= 0 else 'sin'}({abs(k1)})*{'cos' if k2 >= 0 else 'sin'}({abs(k2)})"


def build_grid(config: DomainConfig) -> Grid:
    """Realise the reference channel of ``config`` as a :class:`Grid`."""
    return Grid(config)


def spectral_to_grid(c: np.ndarray, nq: int) -> np.ndarray:
    nm = c.shape[0]
    M = (nm - 1) // 2
    padded = np.zeros((nq, nq // 2 + 1) + c.shape[2:], dtype=complex)
    rows = np.arange(-M, M + 1) % nq
    padded[rows, : M + 1] = c[:, M:]
    return scipy.fft.irfft2(padded, s=(nq, nq), axes=(0, 1)) * (nq * nq)


def grid_to_spectral(values: np.ndarray, M: int) -> np.ndarray:
    nq = values.shape[0]
    F = scipy.fft.rfft2(values, axes=(0, 1)) / (nq * nq)
    rows = np.arange(-M, M + 1) % nq
    out = np.empty((2 * M + 1, 2 * M + 1) + values.shape[2:], dtype=complex)
    out[:, M:] = F[rows, : M + 1]
    # c[k1, -k2] = conj(c[-k1, k2])
    out[:, :M] = np.conj(out[::-1, :M:-1])
    return out


def enforce_real(c: np.ndarray) -> np.ndarray:
    """Project coefficients onto the conjugate-symmetric (real) subspace."""
    return 0.5 * (c + np.conj(c[::-1, ::-1]))


def is_real(c: np.ndarray, tol: float = 1e-12) -> bool:
    scale = max(float(np.max(np.abs(c))), 1.0) if c.size else 1.0
    return bool(np.max(np.abs(c - np.conj(c[::-1, ::-1]))) <= tol * scale) if c.size else True


@dataclass
class Field:
    """Scalar or vector function on one slab of the reference channel."""

    grid: Grid
    slab: str
    coeffs: np.ndarray
    degree: int = 2

    def __post_init__(self):
        if self.slab not in SLABS:
            raise ValueError(f"unknown slab {self.slab!r}")
        c = self.coeffs
        if c.ndim == 3:
            c = c[..., None]
            self.coeffs = c
        expected = (self.grid.nm, self.grid.nm, len(self.grid.nodes(self.slab, self.degree)))
        if c.shape[:3] != expected:
            raise ValueError(f"coefficient shape {c.shape} does not match {expected} + (ncomp,)")

    @classmethod
    def zeros(cls, grid: Grid, slab: str, ncomp: int = 3, degree: int = 2) -> "Field":
        nz = len(grid.nodes(slab, degree))
        return cls(grid, slab, np.zeros((grid.nm, grid.nm, nz, ncomp), dtype=complex), degree)

    @classmethod
    def from_function(cls, grid: Grid, slab: str, func: Callable, ncomp: int = 3, degree: int = 2) -> "Field":
        """Sample ``func(x1, x2, x3) -> (..., ncomp)`` at grid nodes.

        Horizontally the samples are taken on the padded grid and truncated,
        which is exact for band-limited functions.
        """
        z = grid.nodes(slab, degree)
        X1, X2 = grid.horizontal_mesh()
        vals = np.asarray(func(X1[:, :, None], X2[:, :, None], z[None, None, :]), dtype=float)
        if vals.ndim == 3:
            vals = vals[..., None]
        vals = np.broadcast_to(vals, (grid.n_quad, grid.n_quad, len(z), vals.shape[-1]))
        if vals.shape[-1] != ncomp:
            raise ValueError(f"function returned {vals.shape[-1]} components, expected {ncomp}")
        return cls(grid, slab, grid.to_spectral(np.ascontiguousarray(vals)), degree)

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[-1]

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes(self.slab, self.degree)

    def copy(self) -> "Field":
        return Field(self.grid, self.slab, self.coeffs.copy(), self.degree)

    def component(self, i: int) -> "Field":
        return Field(self.grid, self.slab, self.coeffs[..., i : i + 1].copy(), self.degree)

    def restrict(self, slab: str) -> "Field":
        """Restriction of a channel field to the solid or fluid slab."""
        if self.slab == slab:
            return self
        if self.slab != "channel":
            raise ValueError("only channel fields can be restricted")
        sl = self.grid.solid_slice if slab == "solid" else self.grid.fluid_slice
        return Field(self.grid, slab, self.coeffs[:, :, sl].copy(), self.degree)

    def trace(self, where: str = "interface") -> "TraceField":
        """Trace on the interface (``"interface"``), bottom or top plane."""
        if where == "interface":
            idx = -1 if self.slab == "solid" else (0 if self.slab == "fluid" else self.grid.n_solid - 1)
        elif where == "bottom":
            idx = 0
        elif where == "top":
            idx = -1
        else:
            raise ValueError(where)
        return TraceField(self.grid, self.coeffs[:, :, idx].copy())

    def values(self) -> np.ndarray:
        """Physical values on the padded horizontal grid, at the nodes."""
        return self.grid.to_physical(self.coeffs)

    def _binary(self, other, op):
        if isinstance(other, Field):
            if other.slab != self.slab or other.degree != self.degree:
                raise ValueError("fields live on different spaces")
            return Field(self.grid, self.slab, op(self.coeffs, other.coeffs), self.degree)
        return Field(self.grid, self.slab, op(self.coeffs, other), self.degree)

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        return Field(self.grid, self.slab, self.coeffs * scalar, self.degree)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


@dataclass
class TraceField:
    """Function on a horizontal plane: coefficients ``c[i1, i2, component]``."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.ndim == 2:
            self.coeffs = self.coeffs[..., None]
        if self.coeffs.shape[:2] != (self.grid.nm, self.grid.nm):
            raise ValueError("trace coefficients do not match the mode grid")

    @classmethod
    def zeros(cls, grid: Grid, ncomp: int = 3) -> "TraceField":
        return cls(grid, np.zeros((grid.nm, grid.nm, ncomp), dtype=complex))

    @classmethod
    def from_function(cls, grid: Grid, func: Callable, ncomp: int = 1) -> "TraceField":
        X1, X2 = grid.horizontal_mesh()
        vals = np.asarray(func(X1, X2), dtype=float)
        if vals.ndim == 2:
            vals = vals[..., None]
        if vals.shape[-1] != ncomp:
            raise ValueError("component count mismatch")
        return cls(grid, grid.to_spectral(vals))

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[-1]

    def values(self) -> np.ndarray:
        return self.grid.to_physical(self.coeffs)

    def __add__(self, other):
        o = other.coeffs if isinstance(other, TraceField) else other
        return TraceField(self.grid, self.coeffs + o)

    def __sub__(self, other):
        o = other.coeffs if isinstance(other, TraceField) else other
        return TraceField(self.grid, self.coeffs - o)

    def __mul__(self, scalar):
        return TraceField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__


# -- real orthonormal basis e_n ---------------------------------------------

def real_basis_function(grid: Grid, k: Sequence[int], kind: str = "cc") -> Callable:
    """Orthonormal (in L^2 of the periodic cell) product of sines/cosines.

    ``k = (k1, k2)`` with ``k1, k2 >= 0`` and ``kind`` one of ``cc``, ``cs``,
    ``sc``, ``ss`` (first letter for ``x1``); a zero wavenumber only admits
    the cosine factor.
    """
    k1, k2 = int(k[0]), int(k[1])
    if k1 < 0 or k2 < 0 or len(kind) != 2 or any(ch not in "cs" for ch in kind):
        raise ValueError("need k1, k2 >= 0 and kind in {cc, cs, sc, ss}")
    if (k1 == 0 and kind[0] == "s") or (k2 == 0 and kind[1] == "s"):
        raise ValueError("sine factor with zero wavenumber vanishes identically")
    L = grid.L
    norm = math.sqrt((L / 2 if k1 else L) * (L / 2 if k2 else L))
    f1 = np.cos if kind[0] == "c" else np.sin
    f2 = np.cos if kind[1] == "c" else np.sin

    def e(x1, x2):
        return f1(2 * np.pi * k1 * x1 / L) * f2(2 * np.pi * k2 * x2 / L) / norm

    return e


def trace_from_mode(grid: Grid, k: Sequence[int], kind: str = "cc", amplitude: float = 1.0,
                    component: int = 0, ncomp: int = 1) -> TraceField:
    """Trace field ``amplitude * e_n`` placed in one component."""
    e = real_basis_function(grid, k, kind)
    X1, X2 = grid.horizontal_mesh()
    vals = np.zeros((grid.n_quad, grid.n_quad, ncomp))
    vals[..., component] = amplitude * e(X1, X2)
    return TraceField(grid, grid.to_spectral(vals))


# -- operators ---------------------------------------------------------------

def horizontal_derivative(f, axis: int):
    """d/dx_axis (axis 1 or 2) of a :class:`Field` or :class:`TraceField`."""
    if axis not in (1, 2):
        raise ValueError("axis must be 1 or 2")
    K = f.grid.K1 if axis == 1 else f.grid.K2
    mult = 1j * K
    if isinstance(f, TraceField):
        return TraceField(f.grid, f.coeffs * mult[:, :, None])
    return Field(f.grid, f.slab, f.coeffs * mult[:, :, None, None], f.degree)


def horizontal_average(f) -> np.ndarray:
    """Horizontal mean: the (0, 0) coefficient profile (or scalar for traces)."""
    M = f.grid.M
    if isinstance(f, TraceField):
        out = f.coeffs[M, M].real
        return float(out[0]) if out.shape[0] == 1 else out
    out = f.coeffs[M, M].real
    return out[:, 0] if out.shape[1] == 1 else out


def vertical_derivative(f: Field) -> Field:
    """Nodal d/dx3 of a degree-2 field (element derivatives, vertex-averaged)."""
    if f.degree != 2:
        raise ValueError("vertical derivative implemented for degree-2 fields")
    if f.slab == "channel":
        s = vertical_derivative(f.restrict("solid")).coeffs
        fl = vertical_derivative(f.restrict("fluid")).coeffs
        c = np.concatenate([s[:, :, :-1], 0.5 * (s[:, :, -1:] + fl[:, :, :1]), fl[:, :, 1:]], axis=2)
        return Field(f.grid, "channel", c)
    Dn = f.grid.space(f.slab).nodal_derivative
    return Field(f.grid, f.slab, np.matmul(Dn, f.coeffs), f.degree)


def fractional_norm(f: TraceField, s: float) -> float:
    """``H^s`` norm on a horizontal plane via the Fourier characterisation.

    ``|mean|^2 + sum_n lambda_n^s (f^n)^2`` summed over components, where
    ``f^n`` are coefficients in the orthonormal real basis.
    """
    if s < 0:
        raise ValueError("s must be non-negative")
    g = f.grid
    M = g.M
    c2 = np.abs(f.coeffs) ** 2
    weight = np.zeros_like(g.lam)
    nz = g.lam > 0
    weight[nz] = g.lam[nz] ** s
    osc = g.area * np.einsum("ab,abc->", weight, c2)
    mean = np.sum(c2[M, M])
    return float(math.sqrt(max(mean + osc, 0.0)))


def _vertical_energy(space, c: np.ndarray, order: int) -> np.ndarray:
    """Per-mode ``int |d^order c / dz^order|^2 dz`` summed over components."""
    if order == 0:
        return np.einsum("abic,abic->ab", np.conj(c), np.matmul(space.mass, c)).real
    if order == 1:
        return np.einsum("abic,abic->ab", np.conj(c), np.matmul(space.stiffness, c)).real
    d = np.matmul(space.nodal_derivative, c)
    return _vertical_energy(space, d, order - 1)


def sobolev_norm(f: Field, k: int) -> float:
    """Discrete ``H^k`` norm, ``0 <= k <= 3``.

    Horizontal derivatives are spectral; first vertical derivatives are the
    exact element derivatives, higher ones are recovered from nodal values.
    """
    if k not in (0, 1, 2, 3):
        raise ValueError("k must be 0, 1, 2 or 3")
    if f.slab == "channel":
        a = sobolev_norm(f.restrict("solid"), k)
        b = sobolev_norm(f.restrict("fluid"), k)
        return math.hypot(a, b)
    g = f.grid
    if f.degree == 1:
        if k > 0:
            raise ValueError("degree-1 fields support k = 0 only")
        sp = g.fluid_p1
        vals = np.einsum("qj,abjc->abqc", sp.E, f.coeffs)
        return float(math.sqrt(g.area * np.einsum("q,abqc->", sp.wq, np.abs(vals) ** 2)))
    space = g.space(f.slab)
    K1sq, K2sq = g.K1**2, g.K2**2
    total = 0.0
    for a3 in range(k + 1):
        ev = _vertical_energy(space, f.coeffs, a3)
        hweight = np.zeros_like(K1sq)
        for a1 in range(k - a3 + 1):
            for a2 in range(k - a3 - a1 + 1):
                hweight += K1sq**a1 * K2sq**a2
        total += float(np.sum(hweight * ev))
    return float(math.sqrt(max(g.area * total, 0.0)))


def l2_inner(f: Field, other: Field) -> float:
    """L^2 inner product of two degree-2 fields on the same slab."""
    space = f.grid.space(f.slab)
    return float(f.grid.area * np.vdot(f.coeffs, np.matmul(space.mass, other.coeffs)).real)


def apply_vertical(mat: np.ndarray, c: np.ndarray) -> np.ndarray:
    """``out[a, b, q, ...] = sum_j mat[q, j] c[a, b, j, ...]``."""
    return np.moveaxis(np.tensordot(c, mat, axes=([2], [1])), -1, 2)


def quadrature_values(f: Field, grad: bool = True):
    """Physical values (and gradients) of ``f`` at the slab quadrature points.

    Returns ``values[x1, x2, zq, comp]`` and, if ``grad``, also
    ``gradient[x1, x2, zq, comp, j]`` with ``j`` the derivative direction.
    """
    g = f.grid
    sp = g.space(f.slab, f.degree)
    val = apply_vertical(sp.E, f.coeffs)
    if not grad:
        return g.to_physical(val)
    if f.degree != 2:
        raise ValueError("gradients need degree-2 fields")
    dz = apply_vertical(sp.D, f.coeffs)
    k1 = 1j * g.K1[:, :, None, None]
    k2 = 1j * g.K2[:, :, None, None]
    phys = g.to_physical(np.stack([val, k1 * val, k2 * val, dz], axis=-1))
    return phys[..., 0], phys[..., 1:]


def project_quadrature(grid: Grid, slab: str, values: np.ndarray) -> Field:
    """L^2 projection of quadrature-point values onto the degree-2 field space."""
    sp = grid.space(slab)
    hat = grid.to_spectral(values)
    shape = hat.shape
    hat = hat.reshape(shape[:3] + (-1,))
    rhs = np.einsum("q,qj,abqc->abjc", sp.wq, sp.E, hat)
    coeffs = np.linalg.solve(sp.mass, rhs.transpose(2, 0, 1, 3).reshape(sp.ndof, -1))
    coeffs = coeffs.reshape((sp.ndof,) + rhs.shape[:2] + rhs.shape[3:]).transpose(1, 2, 0, 3)
    return Field(grid, slab, coeffs)


def quadrature_integral(grid: Grid, slab: str, values: np.ndarray) -> float:
    """Integral over the slab of a scalar given at quadrature points."""
    sp = grid.space(slab)
    return float(grid.area * np.einsum("abq,q->", values, sp.wq) / grid.n_quad**2)
