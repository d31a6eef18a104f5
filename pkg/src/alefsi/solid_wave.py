"""Linear wave operator of the elastic slab ``0 <= x3 <= h_e``.

The solid obeys ``v_t = lam (Lap_h eta + s eta_,33) - g e3`` with
``s = (h_e/h_s)^2``; ``s = 1`` unless the reference height differs from the
natural one.  The displacement vanishes at the bottom wall; the interface
condition is natural and is supplied by the coupled weak form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from alefsi.core_domain import DomainConfig, Field, Grid, TraceField, l2_inner


@dataclass
class SolidState:
    eta: Field
    v: Field

    def __post_init__(self):
        for f in (self.eta, self.v):
            if f.slab != "solid":
                raise ValueError("solid state fields must live on the solid slab")


@dataclass(frozen=True)
class SolidOperatorParams:
    lam: float
    scale: float
    g: float
    traction_offset: float
    weight: float = 1.0

    @classmethod
    def from_config(cls, config: DomainConfig) -> "SolidOperatorParams":
        return cls(config.lam, config.stiffness_scale, config.g, config.traction_offset, config.solid_weight)


def modal_stiffness(grid: Grid, params: SolidOperatorParams) -> np.ndarray:
    """Per-mode matrices of ``int grad_h u . grad_h w + s u_,3 w_,3`` (no ``lam``)."""
    sp = grid.solid
    return grid.lam[:, :, None, None] * sp.mass[None, None] + params.scale * sp.stiffness[None, None]


def elastic_form(eta: Field, params: SolidOperatorParams) -> np.ndarray:
    """Coefficients of ``lam int (grad_h eta . grad_h phi + s eta_,3 phi_,3)`` per unit area."""
    K = modal_stiffness(eta.grid, params)
    return params.lam * np.matmul(K, eta.coeffs)


def wave_apply(eta: Field, params: SolidOperatorParams) -> Field:
    """Nodal values of ``lam (Lap_h eta + s eta_,33)``.

    The vertical second derivative is recovered by applying the averaged
    element derivative twice, which is exact for data quadratic in ``x3``.
    The Galerkin counterpart used by the time stepper is :func:`elastic_form`.
    """
    grid = eta.grid
    Dn = grid.solid.nodal_derivative
    d33 = np.einsum("ij,jk,abkc->abic", Dn, Dn, eta.coeffs)
    out = params.lam * (-grid.lam[:, :, None, None] * eta.coeffs + params.scale * d33)
    return Field(grid, "solid", out)


def equilibrium_displacement(config: DomainConfig, grid: Grid | None = None) -> SolidState:
    """Gravity equilibrium ``eta_e = (0, 0, g/(2 lam) (h_s/h_e)^2 x3 (x3 - h_e))``, ``v = 0``."""
    from alefsi.core_domain import build_grid

    grid = grid or build_grid(config)
    z = grid.solid.nodes
    prof = equilibrium_profile(config, z)
    eta = Field.zeros(grid, "solid")
    eta.coeffs[grid.M, grid.M, :, 2] = prof
    return SolidState(eta, Field.zeros(grid, "solid"))


def equilibrium_profile(config: DomainConfig, z: np.ndarray) -> np.ndarray:
    return config.g / (2 * config.lam) * (config.h_s / config.h_e) ** 2 * z * (z - config.h_e)


def solid_traction(state: SolidState, params: SolidOperatorParams) -> TraceField:
    """``-lam (h_e/h_s) eta_,3 + lam (h_s - h_e)/h_s e3`` on the interface."""
    grid = state.eta.grid
    top = grid.solid.boundary_derivative("b")
    d3 = np.einsum("j,abjc->abc", top, state.eta.coeffs)
    ratio = params.scale * params.weight  # (h_e/h_s)^2 * h_s/h_e = h_e/h_s
    t = -params.lam * ratio * d3
    t[grid.M, grid.M, 2] += params.traction_offset
    return TraceField(grid, t)


def solid_energy(state: SolidState, params: SolidOperatorParams):
    """(kinetic, elastic, gravitational) energies of the solid slab."""
    grid = state.eta.grid
    kinetic = 0.5 * l2_inner(state.v, state.v)
    elastic = 0.5 * grid.area * float(np.einsum("abic,abic->", np.conj(state.eta.coeffs),
                                                 elastic_form(state.eta, params)).real)
    # only the mean mode survives the horizontal integral
    mean3 = state.eta.coeffs[grid.M, grid.M, :, 2].real
    grav = params.g * grid.area * float(np.sum(grid.solid.mass @ mean3))
    return kinetic, elastic, grav


def clamped_midpoint_step(state: SolidState, dt: float, params: SolidOperatorParams) -> SolidState:
    """Implicit-midpoint step with the interface clamped (Dirichlet at both ends).

    Only used to check the conservative core of the wave operator.
    """
    grid = state.eta.grid
    sp = grid.solid
    n = sp.ndof
    idx = np.arange(1, n - 1)
    Kfull = params.lam * modal_stiffness(grid, params)
    Ki = Kfull[:, :, idx][:, :, :, idx]
    Mi = sp.mass[np.ix_(idx, idx)]
    eta = state.eta.coeffs[:, :, idx]
    v = state.v.coeffs[:, :, idx]
    # (v1 - v0)/dt = -M^-1 K (eta0 + eta1)/2 - g e3, eta1 = eta0 + dt (v0 + v1)/2
    lhs = Mi[None, None] + 0.25 * dt**2 * Ki
    grav = np.zeros_like(v)
    grav[grid.M, grid.M, :, 2] = params.g * sp.mass[np.ix_(idx, np.arange(n))].sum(axis=1)
    rhs = np.einsum("ij,abjc->abic", Mi, v) - dt * np.einsum("abij,abjc->abic", Ki, eta + 0.25 * dt * v) - dt * grav
    v1 = np.linalg.solve(lhs, rhs)
    eta1 = eta + 0.5 * dt * (v + v1)
    out_eta = state.eta.coeffs.copy()
    out_v = state.v.coeffs.copy()
    out_eta[:, :, idx] = eta1
    out_v[:, :, idx] = v1
    out_v[:, :, [0, -1]] = 0.0
    return SolidState(Field(grid, "solid", out_eta), Field(grid, "solid", out_v))
