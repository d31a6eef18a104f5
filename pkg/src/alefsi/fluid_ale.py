"""Fluid momentum, divergence constraint and pressure formulas in ALE variables.

The weak momentum operator is written as ``int F . phi + int G : grad phi``
with integrands sampled at fluid quadrature points; :func:`weak_residual`
turns such integrands into per-mode coefficients against the degree-2 test
basis.  Advection uses the skew-symmetric splitting

    (b . grad) v . phi  ->  1/2 (b . grad) v . phi - 1/2 (b . grad) phi . v + 1/2 J_t v . phi,

``b^j = (v - v_tilde)_l a_l^j``, which equals the convective form when the
ALE divergence vanishes and makes the advection energy neutral.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from alefsi.core_domain import (DomainConfig, Field, Grid, TraceField, apply_vertical, project_quadrature,
                                quadrature_values)
from alefsi.kinematics import KinematicPackage, cofactor


@dataclass
class FluidState:
    v: Field
    q: Field
    pkg: KinematicPackage
    v_tilde: Field
    eta_tilde: Field

    def __post_init__(self):
        if self.v.slab != "fluid" or self.q.slab != "fluid" or self.q.degree != 1:
            raise ValueError("fluid state needs a degree-2 velocity and degree-1 pressure on the fluid slab")


def pressure_values(q: Field) -> np.ndarray:
    """Pressure at the fluid quadrature points, shape ``(nq, nq, nzq)``."""
    return quadrature_values(q, grad=False)[..., 0]


def weak_residual(grid: Grid, F: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Per-mode coefficients of ``int F . conj(phi) + G : grad conj(phi)`` per unit area.

    ``F[..., i]`` and ``G[..., i, l]`` live at the fluid quadrature points;
    the output has shape ``(nm, nm, n_fluid_dofs, 3)``.
    """
    sp = grid.fluid
    stack = np.concatenate([F[..., None], G], axis=-1)
    hat = grid.to_spectral(stack)
    k1 = -1j * grid.K1[:, :, None, None]
    k2 = -1j * grid.K2[:, :, None, None]
    val = hat[..., 0] + k1 * hat[..., 1] + k2 * hat[..., 2]
    return apply_vertical(sp.wE.T, val) + apply_vertical(sp.wD.T, hat[..., 3])


def test_against_pressure(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Per-mode coefficients of ``int values * conj(psi)`` for the degree-1 basis."""
    pp = grid.fluid_p1
    hat = grid.to_spectral(values)
    return apply_vertical(pp.wE.T, hat)


def viscous_matrix(pkg_cof: np.ndarray, pkg_Ainv: np.ndarray) -> np.ndarray:
    """``Q_lk = sum_j a_j^l A_j^k`` (symmetric, positive definite near identity)."""
    return np.matmul(np.swapaxes(pkg_cof, -1, -2), pkg_Ainv)


def momentum_integrands(v: np.ndarray, grad_v: np.ndarray, v_t: np.ndarray, vt_mesh: np.ndarray,
                        grad_vt_mesh: np.ndarray, q: np.ndarray, J: np.ndarray, cof: np.ndarray,
                        Ainv: np.ndarray, nu: float, g: float):
    """Instantaneous ALE integrands ``(F, G)``.

    ``vt_mesh`` is the extension velocity and ``grad_vt_mesh`` its gradient;
    ``v_t`` multiplies ``J`` (the time-derivative term).
    """
    b = np.einsum("...l,...lj->...j", v - vt_mesh, cof)
    Jt = np.einsum("...ij,...ij->...", cof, grad_vt_mesh)
    adv = np.einsum("...j,...ij->...i", b, grad_v)
    F = J[..., None] * v_t + 0.5 * adv + 0.5 * Jt[..., None] * v
    F[..., 2] += g * J
    Q = viscous_matrix(cof, Ainv)
    G = nu * np.einsum("...lk,...ik->...il", Q, grad_v) - 0.5 * v[..., :, None] * b[..., None, :] - q[..., None, None] * cof
    return F, G


def momentum_residual(state: FluidState, v_t: Field, config: Optional[DomainConfig] = None) -> Field:
    """Weak residual of the ALE momentum equation against the fluid test basis.

    Rows at the top wall are zeroed (Dirichlet); the interface row keeps the
    natural boundary term, i.e. it equals ``int_Gamma sigma_solid . phi``
    when the fluid is in balance with the solid.
    """
    grid = state.v.grid
    config = config or grid.config
    v, gv = quadrature_values(state.v)
    vt = quadrature_values(v_t, grad=False)
    w, gw = quadrature_values(state.v_tilde)
    q = pressure_values(state.q)
    pkg = state.pkg
    F, G = momentum_integrands(v, gv, vt, w, gw, q, pkg.J, pkg.cof, pkg.Ainv, config.nu, config.g)
    R = weak_residual(grid, F, G)
    R[:, :, -1] = 0.0
    return Field(grid, "fluid", R)


def interface_functional(traction: TraceField) -> Field:
    """Coefficients of ``int_Gamma T . conj(phi)`` on the fluid test basis."""
    grid = traction.grid
    R = np.zeros((grid.nm, grid.nm, grid.n_fluid, 3), dtype=complex)
    R[:, :, 0] = traction.coeffs
    return Field(grid, "fluid", R)


def ale_divergence_quad(pkg: KinematicPackage, grad_v: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...ij->...", pkg.Ainv, grad_v)


def ale_divergence(state: FluidState) -> Field:
    """``A_i^j v^i_,j`` projected onto the degree-2 fluid space."""
    _, gv = quadrature_values(state.v)
    d = ale_divergence_quad(state.pkg, gv)
    return project_quadrature(state.v.grid, "fluid", d[..., None])


def divergence_constraint(pkg_cof: np.ndarray, grad_v: np.ndarray, grid: Grid) -> np.ndarray:
    """Discrete constraint ``int a_i^j v^i_,j conj(psi)`` for every pressure test function."""
    return test_against_pressure(grid, np.einsum("...ij,...ij->...", pkg_cof, grad_v))


def pressure_gradient_recovery(state: FluidState, v_t: Field, config: Optional[DomainConfig] = None) -> np.ndarray:
    """``grad q`` recovered from the momentum balance, at fluid quadrature points.

    ``-q_,m = (v_t^i + (v - v_tilde)_l A_l^j v^i_,j - nu A_j^l (A_j^k v^i_,k)_,l + g e3^i) X^i_,m``.
    The viscous second derivatives come from projecting ``A_j^k v^i_,k``
    onto the field space and differentiating.
    """
    grid = state.v.grid
    config = config or grid.config
    pkg = state.pkg
    v, gv = quadrature_values(state.v)
    vt = quadrature_values(v_t, grad=False)
    w = quadrature_values(state.v_tilde, grad=False)
    T = np.einsum("...jk,...ik->...ij", pkg.Ainv, gv)
    Tf = project_quadrature(grid, "fluid", np.ascontiguousarray(T.reshape(T.shape[:3] + (9,))))
    _, gT = quadrature_values(Tf)
    gT = gT.reshape(gT.shape[:3] + (3, 3, 3))
    visc = np.einsum("...jl,...ijl->...i", pkg.Ainv, gT)
    adv = np.einsum("...l,...lj,...ij->...i", v - w, pkg.Ainv, gv)
    vec = vt + adv - config.nu * visc
    vec[..., 2] += config.g
    return -np.einsum("...i,...im->...m", vec, pkg.grad_X)


def boundary_pressure(state: FluidState, solid_traction: TraceField, config: Optional[DomainConfig] = None) -> TraceField:
    """Interface pressure from stress continuity.

    ``q J = (T^i + nu a_j^3 A_j^k v^i_,k) X^i_,3`` with ``T`` the solid
    traction (already including the reference-height offset).
    """
    grid = state.v.grid
    config = config or grid.config
    sp = grid.fluid
    bd = sp.boundary_derivative("a")

    def plane(c):
        val = c[:, :, 0]
        dz = np.einsum("j,abj...->ab...", bd, c)
        return val, dz

    v0, v3 = plane(state.v.coeffs)
    e0, e3 = plane(state.eta_tilde.coeffs)

    def grads(val, dz):
        k1 = 1j * grid.K1[:, :, None]
        k2 = 1j * grid.K2[:, :, None]
        return grid.to_physical(np.stack([k1 * val, k2 * val, dz], axis=-1))

    Gv = grads(v0, v3)
    Ge = grads(e0, e3)
    F = Ge + np.eye(3)
    cof = cofactor(F)
    J = np.einsum("...j,...j->...", F[..., 0, :], cof[..., 0, :])
    A = cof / J[..., None, None]
    visc = config.nu * np.einsum("...j,...jk,...ik->...i", cof[..., :, 2], A, Gv)
    T = grid.to_physical(solid_traction.coeffs)
    qJ = np.einsum("...i,...i->...", T + visc, F[..., :, 2])
    return TraceField(grid, grid.to_spectral((qJ / J)[..., None]))

