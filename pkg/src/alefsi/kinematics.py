"""Geometry of the ALE map ``X = Id + eta_tilde`` on the fluid slab.

All tensors are sampled at the fluid quadrature points (padded horizontal
grid times vertical Gauss points).  Index convention: ``F[..., i, j] =
d_j X^i``, ``cof[..., i, j] = a_i^j`` (the cofactor matrix of ``F``, whose
rows are divergence free), ``J = det F`` and ``Ainv = cof / J = F^{-T}``, so
that the ALE divergence of ``v`` reads ``sum_ij Ainv[i, j] d_j v^i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from alefsi.core_domain import DomainConfig, Field, Grid, project_quadrature, quadrature_values


class GuardViolation(RuntimeError):
    """The map left the near-identity neighbourhood assumed by the scheme."""


def cofactor(F: np.ndarray) -> np.ndarray:
    """Cofactor matrix from explicit 2x2 minors (cyclic index form)."""
    # component-first copy keeps the products on contiguous arrays
    T = np.ascontiguousarray(np.moveaxis(F, (-2, -1), (0, 1)))
    C = np.empty_like(T)
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            C[i, j] = T[i1, j1] * T[i2, j2] - T[i1, j2] * T[i2, j1]
    return np.moveaxis(C, (0, 1), (-2, -1))


@dataclass
class KinematicPackage:
    grid: Grid
    eta_tilde: np.ndarray
    grad_X: np.ndarray
    J: np.ndarray
    cof: np.ndarray
    Ainv: np.ndarray
    valid: bool
    J_range: tuple
    ainv_deviation: float

    def tensor_field(self, name: str) -> Field:
        """Project one of ``grad_X``, ``cof``, ``Ainv`` or ``J`` onto the fluid field space."""
        vals = getattr(self, name)
        shape = vals.shape
        if vals.ndim == 3:
            flat = vals[..., None]
        else:
            flat = vals.reshape(shape[:3] + (-1,))
        return project_quadrature(self.grid, "fluid", np.ascontiguousarray(flat))

    def require_valid(self):
        if not self.valid:
            raise GuardViolation(
                f"kinematic guard violated: J in [{self.J_range[0]:.6f}, {self.J_range[1]:.6f}], "
                f"max|Ainv - Id| = {self.ainv_deviation:.3e}"
            )


def assemble(eta_tilde: Field, config: Optional[DomainConfig] = None) -> KinematicPackage:
    """Gradient, cofactor, Jacobian and inverse factor of ``Id + eta_tilde``."""
    if eta_tilde.slab != "fluid" or eta_tilde.ncomp != 3:
        raise ValueError("assemble needs a 3-component fluid field")
    grid = eta_tilde.grid
    config = config or grid.config
    vals, G = quadrature_values(eta_tilde)
    return package_from_gradient(grid, vals, G, config)


def package_from_gradient(grid: Grid, vals: np.ndarray, G: np.ndarray, config: DomainConfig) -> KinematicPackage:
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(vals))):
        raise FloatingPointError("NaN or inf in the extension field")
    F = G + np.eye(3)
    cof = cofactor(F)
    J = (F[..., 0, :] * cof[..., 0, :]).sum(axis=-1)
    Ainv = cof / J[..., None, None]
    jlo, jhi = float(J.min()), float(J.max())
    dev = float(np.max(np.abs(Ainv - np.eye(3))))
    lo, hi = config.jacobian_window
    valid = bool(lo <= jlo and jhi <= hi and dev <= config.ainv_guard)
    return KinematicPackage(grid, vals, F, J, cof, Ainv, valid, (jlo, jhi), dev)


def identity_package(grid: Grid) -> KinematicPackage:
    shape = (grid.n_quad, grid.n_quad, len(grid.fluid.zq))
    eye = np.broadcast_to(np.eye(3), shape + (3, 3)).copy()
    return KinematicPackage(grid, np.zeros(shape + (3,)), eye, np.ones(shape), eye.copy(), eye.copy(),
                            True, (1.0, 1.0), 0.0)


def algebraic_defect(pkg: KinematicPackage) -> float:
    """``max |Ainv J - cof|`` (identity by construction)."""
    return float(np.max(np.abs(pkg.Ainv * pkg.J[..., None, None] - pkg.cof)))


def inverse_defect(pkg: KinematicPackage) -> float:
    """``max |Ainv - inv(F)^T|`` with the inverse computed independently."""
    inv = np.linalg.inv(pkg.grad_X)
    return float(np.max(np.abs(pkg.Ainv - np.swapaxes(inv, -1, -2))))


def normal_defect(pkg: KinematicPackage) -> float:
    """Third cofactor column against ``X_,1 x X_,2``, over all quadrature points.

    On the interface this column is the (unnormalised) normal.
    """
    cross = np.cross(pkg.grad_X[..., :, 0], pkg.grad_X[..., :, 1])
    return float(np.max(np.abs(cross - pkg.cof[..., :, 2])))


def piola_residual(pkg: KinematicPackage) -> float:
    """``max_i |d_j a_i^j|_{L^2(fluid)}`` for the cofactor projected onto the field space.

    Zero for affine maps; for general maps it measures the vertical
    projection error and vanishes under refinement.
    """
    grid = pkg.grid
    cof = pkg.tensor_field("cof")
    c = cof.coeffs.reshape(cof.coeffs.shape[:3] + (3, 3))
    sp = grid.fluid
    val = np.einsum("qj,abjmn->abqmn", sp.E, c)
    dz = np.einsum("qj,abjm->abqm", sp.D, c[..., 2])
    div = (1j * grid.K1[:, :, None, None] * val[..., 0]
           + 1j * grid.K2[:, :, None, None] * val[..., 1] + dz)
    # Parseval: int |f|^2 = L^2 sum_k |f_k|^2
    sq = grid.area * np.einsum("q,abqi->i", sp.wq, np.abs(div) ** 2)
    return float(math.sqrt(float(np.max(sq))))


def jacobian_identity_check(eta_tilde: Field) -> float:
    """``max |J - (1 + div + B(G) + C(G))|`` with ``G = grad eta_tilde``.

    ``B`` is the sum of principal 2x2 minors of ``G`` and ``C = det G``; both
    are assembled here independently of the cofactor route.
    """
    _, G = quadrature_values(eta_tilde)
    pkg = package_from_gradient(eta_tilde.grid, np.zeros(G.shape[:-1]), G, eta_tilde.grid.config)
    tr = G[..., 0, 0] + G[..., 1, 1] + G[..., 2, 2]
    B = (G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
         + G[..., 0, 0] * G[..., 2, 2] - G[..., 0, 2] * G[..., 2, 0]
         + G[..., 1, 1] * G[..., 2, 2] - G[..., 1, 2] * G[..., 2, 1])
    C = np.linalg.det(G)
    return float(np.max(np.abs(pkg.J - (1.0 + tr + B + C))))


def ale_divergence_values(pkg: KinematicPackage, grad_v: np.ndarray) -> np.ndarray:
    """``sum_ij Ainv[i, j] d_j v^i`` at quadrature points."""
    return np.einsum("...ij,...ij->...", pkg.Ainv, grad_v)
