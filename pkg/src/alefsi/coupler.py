"""Monolithic implicit-midpoint time stepping of the coupled channel.

One velocity field lives on the whole channel (solid and fluid share the
interface node), the pressure lives on the fluid slab.  A step solves the
nonlinear midpoint system

    fluid:  J_bar (a - b)/dt + 1/2 (w . grad) v_m + 1/2 J_t v_m + g J_bar e3
            + weak[ nu Q_bar grad v_m - 1/2 v_m (x) w - q cof_bar ]
    solid:  r (a - b)/dt + lam r (grad_h eta_m . grad_h + s eta_m,3 d3) + r g e3 - lam c e3|_Gamma
    constraint:  int psi cof(X^{n+1}) : grad a = 0

for ``a = v^{n+1}`` and the midpoint pressure ``q``, where ``b = v^n``,
``v_m = (a + b)/2``, ``eta^{n+1} = eta^n + dt v_m`` on the solid and the
geometry at ``n+1`` is the Stokes extension of the new interface trace.
Bars are averages of the two geometries, ``J_t = (J^{n+1} - J^n)/dt`` and
``w^j = (v_m - v_mesh)_l cof_bar_l^j`` with ``v_mesh = (eta_tilde^{n+1} -
eta_tilde^n)/dt``.  ``r = h_s/h_e`` and ``c = (h_s - h_e)/h_s`` are 1 and
0 unless the reference height differs from the natural one.

The system is solved by defect correction: each sweep evaluates the full
residual and corrects with the per-mode linear operator of the flat
geometry, which is factorised once.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from alefsi.core_domain import (DomainConfig, Field, Grid, TraceField, apply_vertical, build_grid,
                                enforce_real, quadrature_values)
from alefsi.fluid_ale import momentum_integrands, test_against_pressure, viscous_matrix, weak_residual
from alefsi.kinematics import GuardViolation, KinematicPackage, cofactor, package_from_gradient
from alefsi.solid_wave import SolidOperatorParams, equilibrium_profile, modal_stiffness
from alefsi.stokes_extension import ExtensionResult, extend

log = logging.getLogger(__name__)


class PicardNonConvergence(RuntimeError):
    """Defect correction did not converge within ``max_sweeps``."""


class SolverBreakdown(RuntimeError):
    """Non-finite iterate or divergence constraint not met."""


@dataclass
class StepInfo:
    sweeps: int
    increment: float
    div_residual: float
    dissipation: float
    converged: bool


@dataclass
class State:
    t: float
    v: Field
    eta: Field
    q: Field
    ext: ExtensionResult
    pkg: KinematicPackage
    step_index: int = 0
    v_prev: Optional[Field] = None
    info: Optional[StepInfo] = None
    # acceleration from the consistency solve, seeds the first predictor
    accel: Optional[np.ndarray] = dc_field(default=None, repr=False)
    # cached fluid quadrature values of v and its gradient
    _fluid_quad: Optional[tuple] = dc_field(default=None, repr=False)

    @property
    def grid(self) -> Grid:
        return self.v.grid

    def fluid_velocity(self) -> Field:
        return self.v.restrict("fluid")

    def solid_velocity(self) -> Field:
        return self.v.restrict("solid")

    def interface_trace(self) -> TraceField:
        return TraceField(self.grid, self.eta.coeffs[:, :, -1].copy())

    def fluid_quad(self):
        if self._fluid_quad is None:
            self._fluid_quad = quadrature_values(self.fluid_velocity())
        return self._fluid_quad


def geometry(eta_solid: Field, config: DomainConfig):
    """Extension and kinematic package for a solid displacement."""
    grid = eta_solid.grid
    trace = TraceField(grid, eta_solid.coeffs[:, :, -1].copy())
    ext = extend(trace, grid)
    vals, G = quadrature_values(ext.eta_tilde)
    pkg = package_from_gradient(grid, vals, G, config)
    return ext, pkg, G


class FlatOperator:
    """Per-mode saddle matrices of the flat-geometry linearisation, inverted once."""

    def __init__(self, grid: Grid, config: DomainConfig, dt: float, params: SolidOperatorParams,
                 mass_only: bool = False):
        ns, nf, nc = grid.n_solid, grid.n_fluid, grid.n_channel
        sl_s, sl_f = grid.solid_slice, grid.fluid_slice
        sp_s, sp_f, pp = grid.solid, grid.fluid, grid.fluid_p1
        w = params.weight
        m = pp.ndof
        self.nv = nc - 2
        self.m = m
        interior = np.arange(1, nc - 1)
        Mc = np.zeros((nc, nc))
        Mc[sl_s, sl_s] += w * sp_s.mass
        Mc[sl_f, sl_f] += sp_f.mass
        W = sp_f.wq[:, None]
        Mp = pp.E.T @ (W * sp_f.E)
        Gp = pp.E.T @ (W * sp_f.D)
        nm = grid.nm
        size = 3 * self.nv + m
        Lmat = np.zeros((nm, nm, size, size), dtype=complex)
        Ks = modal_stiffness(grid, params)
        for i1 in range(nm):
            for i2 in range(nm):
                K1, K2 = grid.K1[i1, i2], grid.K2[i1, i2]
                if mass_only:
                    A = Mc.copy()
                else:
                    A = Mc / dt
                    Af = np.zeros((nc, nc))
                    Af[sl_f, sl_f] = (K1**2 + K2**2) * sp_f.mass + sp_f.stiffness
                    As = np.zeros((nc, nc))
                    As[sl_s, sl_s] = Ks[i1, i2]
                    A = A + 0.5 * config.nu * Af + 0.25 * dt * params.lam * w * As
                Ai = A[np.ix_(interior, interior)]
                Bf = np.zeros((m, 3, nc), dtype=complex)
                Bf[:, 0, sl_f] = 1j * K1 * Mp
                Bf[:, 1, sl_f] = 1j * K2 * Mp
                Bf[:, 2, sl_f] = Gp
                B = Bf[:, :, interior].reshape(m, 3 * self.nv)
                L = Lmat[i1, i2]
                for c in range(3):
                    L[c * self.nv:(c + 1) * self.nv, c * self.nv:(c + 1) * self.nv] = Ai
                L[:3 * self.nv, 3 * self.nv:] = -B.conj().T
                L[3 * self.nv:, :3 * self.nv] = B
        # real data: only half the modes are solved, the rest follow by conjugation
        half = np.zeros((nm, nm), dtype=bool)
        M = grid.M
        half[M + 1:, :] = True
        half[M, M:] = True
        self.half = half
        self.inv = np.linalg.inv(Lmat[half])
        self.interior = interior

    def solve(self, R_mom: np.ndarray, R_div: np.ndarray):
        """Return ``(da, dq)`` solving ``L (da, dq) = -(R_mom, R_div)``."""
        nm = R_mom.shape[0]
        rv = R_mom[:, :, self.interior, :].transpose(0, 1, 3, 2).reshape(nm, nm, 3 * self.nv)
        rhs = -np.concatenate([rv, R_div], axis=-1)
        sol = np.empty_like(rhs)
        sol[self.half] = np.matmul(self.inv, rhs[self.half][..., None])[..., 0]
        mirror = self.half[::-1, ::-1]
        sol[mirror & ~self.half] = np.conj(sol[::-1, ::-1][mirror & ~self.half])
        da = np.zeros_like(R_mom)
        da[:, :, self.interior, :] = sol[..., :3 * self.nv].reshape(nm, nm, 3, self.nv).transpose(0, 1, 3, 2)
        dq = sol[..., 3 * self.nv:]
        return da, dq


class Stepper:
    """Implicit-midpoint stepper for one grid and time step."""

    def __init__(self, config: DomainConfig, grid: Optional[Grid] = None, dt: Optional[float] = None):
        self.config = config
        self.grid = grid or build_grid(config)
        self.dt = float(dt if dt is not None else config.dt)
        self.params = SolidOperatorParams.from_config(config)
        self.flat = FlatOperator(self.grid, config, self.dt, self.params)
        g = self.grid
        self.Ks = modal_stiffness(g, self.params)
        # int phi^3 over the solid for the mean mode (gravity load)
        self.solid_load = g.solid.mass.sum(axis=1)

    # -- residual --------------------------------------------------------
    def solid_residual(self, a_s, b_s, eta_m):
        p, g = self.params, self.grid
        w = p.weight
        R = w * apply_vertical(g.solid.mass, a_s - b_s) / self.dt
        R += p.lam * w * np.matmul(self.Ks, eta_m)
        M = g.M
        R[M, M, :, 2] += w * p.g * self.solid_load
        R[M, M, -1, 2] -= p.traction_offset
        return R

    def evaluate(self, state: State, a: np.ndarray, q: np.ndarray, momentum: bool = True):
        """Residual of the midpoint system at ``(a, q)`` plus the new geometry.

        With ``momentum=False`` only the geometry, the divergence residual
        and the dissipation are computed (``R`` is returned as ``None``).
        """
        g, cfg, dt = self.grid, self.config, self.dt
        ns = g.n_solid
        b = state.v.coeffs
        a_s, b_s = a[:, :, :ns], b[:, :, :ns]
        eta1 = state.eta.coeffs + 0.5 * dt * (a_s + b_s)
        eta1_field = Field(g, "solid", eta1)
        ext1, pkg1, G1 = geometry(eta1_field, cfg)
        pkg0 = state.pkg

        af = Field(g, "fluid", a[:, :, ns - 1:])
        va, ga = quadrature_values(af)
        vb, gb = state.fluid_quad()
        vm, gm = 0.5 * (va + vb), 0.5 * (ga + gb)
        cof_bar = 0.5 * (pkg0.cof + pkg1.cof)
        J_bar = 0.5 * (pkg0.J + pkg1.J)
        A_bar = cof_bar / J_bar[..., None, None]
        Q = viscous_matrix(cof_bar, A_bar)
        visc = np.matmul(gm, np.swapaxes(Q, -1, -2))
        R_div = test_against_pressure(g, (pkg1.cof * ga).sum(axis=(-1, -2)))
        diss = cfg.nu * g.area * float(np.dot((visc * gm).sum(axis=(0, 1, 3, 4)), g.fluid.wq)) / g.n_quad**2
        aux = dict(eta1=eta1_field, ext1=ext1, pkg1=pkg1, quad=(va, ga), dissipation=diss)
        if not momentum:
            return None, R_div, aux
        vmesh = (pkg1.eta_tilde - pkg0.eta_tilde) / dt
        qv = g.to_physical(apply_vertical(g.fluid_p1.E, q))
        Jt = (pkg1.J - pkg0.J) / dt
        w_adv = np.matmul((vm - vmesh)[..., None, :], cof_bar)[..., 0, :]
        adv = np.matmul(gm, w_adv[..., :, None])[..., 0]
        F = J_bar[..., None] * (va - vb) / dt + 0.5 * adv + 0.5 * Jt[..., None] * vm
        F[..., 2] += cfg.g * J_bar
        G = cfg.nu * visc - 0.5 * vm[..., :, None] * w_adv[..., None, :] - qv[..., None, None] * cof_bar
        R_f = weak_residual(g, F, G)

        eta_m = 0.5 * (state.eta.coeffs + eta1)
        R_s = self.solid_residual(a_s, b_s, eta_m)
        R = np.zeros_like(a)
        R[:, :, :ns] += R_s
        R[:, :, ns - 1:] += R_f
        R[:, :, 0] = 0.0
        R[:, :, -1] = 0.0
        return R, R_div, aux

    # -- step --------------------------------------------------------------
    def step(self, state: State) -> State:
        cfg = self.config
        b = state.v.coeffs
        if state.v_prev is not None:
            a = 2 * b - state.v_prev.coeffs
        elif state.accel is not None:
            a = b + self.dt * state.accel
        else:
            a = b.copy()
        a[:, :, [0, -1]] = 0.0
        q = state.q.coeffs[..., 0].copy()
        scale = max(float(np.max(np.abs(b))), float(np.max(np.abs(a))))
        converged = False
        inc = math.inf
        prev_inc = math.inf
        sweeps = 0
        for sweeps in range(1, cfg.max_sweeps + 1):
            R, R_div, _ = self.evaluate(state, a, q)
            da, dq = self.flat.solve(R, R_div)
            a = a + da
            q = q + dq
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(q))):
                raise SolverBreakdown(f"non-finite iterate at t={state.t:.6g}")
            inc = float(np.max(np.abs(da)))
            scale = max(scale, float(np.max(np.abs(a))))
            target = cfg.tol_picard * scale + cfg.atol_picard
            # the error left after this update is about rho * inc for a linear contraction rho
            rho = inc / prev_inc
            if inc <= target or (sweeps > 1 and rho < 0.1 and rho * inc <= target):
                converged = True
                break
            prev_inc = inc
        if not converged:
            raise PicardNonConvergence(
                f"no convergence after {cfg.max_sweeps} sweeps at t={state.t:.6g}: increment {inc:.3e}, "
                f"scale {scale:.3e}; reduce dt"
            )
        a = enforce_real(a)
        q = enforce_real(q)
        _, R_div, aux = self.evaluate(state, a, q, momentum=False)
        div = float(np.max(np.abs(R_div)))
        if div > cfg.tol_div * max(1.0, scale):
            raise SolverBreakdown(f"divergence residual {div:.3e} exceeds {cfg.tol_div:.1e}")
        pkg1 = aux["pkg1"]
        if not pkg1.valid:
            raise GuardViolation(
                f"kinematic guard violated at t={state.t + self.dt:.6g}: J in "
                f"[{pkg1.J_range[0]:.6f}, {pkg1.J_range[1]:.6f}], max|A - Id| = {pkg1.ainv_deviation:.3e}"
            )
        info = StepInfo(sweeps, inc, div, aux["dissipation"], converged)
        new = State(
            t=state.t + self.dt,
            v=Field(self.grid, "channel", a),
            eta=aux["eta1"],
            q=Field(self.grid, "fluid", q[..., None], degree=1),
            ext=aux["ext1"],
            pkg=pkg1,
            step_index=state.step_index + 1,
            v_prev=state.v,
            info=info,
        )
        new._fluid_quad = aux["quad"]
        return new


# -- initial data -------------------------------------------------------------

def equilibrium_pressure_profile(config: DomainConfig, z: np.ndarray) -> np.ndarray:
    """``q_e = -g (x3 - h_e) - g h_s/2 + lam (h_s - h_e)/h_s``."""
    return -config.g * (z - config.h_e) - 0.5 * config.g * config.h_s + config.traction_offset


def make_state(grid: Grid, config: DomainConfig, v: Field, eta: Field, q: Optional[Field] = None, t: float = 0.0) -> State:
    """Assemble a state from velocity, displacement and (optional) pressure."""
    if v.slab != "channel" or eta.slab != "solid":
        raise ValueError("velocity lives on the channel and displacement on the solid")
    v = Field(grid, "channel", enforce_real(v.coeffs))
    v.coeffs[:, :, [0, -1]] = 0.0
    eta = Field(grid, "solid", enforce_real(eta.coeffs))
    eta.coeffs[:, :, 0] = 0.0
    ext, pkg, _ = geometry(eta, config)
    if q is None:
        q = Field.zeros(grid, "fluid", 1, degree=1)
        q.coeffs[grid.M, grid.M, :, 0] = equilibrium_pressure_profile(config, grid.fluid_p1.nodes)
    return State(t=t, v=v, eta=eta, q=q, ext=ext, pkg=pkg)


def consistent_pressure(state: State, config: DomainConfig, iterations: int = 8, tol: float = 1e-13) -> State:
    """Pressure from the instantaneous coupled balance at the current state.

    Solves for ``(v_t, q)`` from the momentum equation tested against the
    whole channel, with the time-differentiated divergence constraint
    ``cof : grad v_t + cof_t : grad v = 0``; the flat mass operator drives
    a defect correction that absorbs the geometric terms.
    """
    g = state.grid
    params = SolidOperatorParams.from_config(config)
    flat = FlatOperator(g, config, 1.0, params, mass_only=True)
    Ks = modal_stiffness(g, params)
    ns = g.n_solid
    pkg = state.pkg
    vb, gb = state.fluid_quad()
    trace_v = TraceField(g, state.v.coeffs[:, :, ns - 1].copy())
    ext_v = extend(trace_v, g)
    wv, gw = quadrature_values(ext_v.eta_tilde)
    # cofactor is quadratic in F, so the central difference is its exact derivative
    cof_t = 0.5 * (cofactor(pkg.grad_X + gw) - cofactor(pkg.grad_X - gw))
    div_rhs = test_against_pressure(g, np.einsum("...ij,...ij->...", cof_t, gb))
    vt = np.zeros_like(state.v.coeffs)
    q = state.q.coeffs[..., 0].copy()
    w = params.weight
    M = g.M
    for _ in range(iterations):
        aF = Field(g, "fluid", vt[:, :, ns - 1:])
        vt_q, gvt = quadrature_values(aF)
        qv = g.to_physical(apply_vertical(g.fluid_p1.E, q))
        F, G = momentum_integrands(vb, gb, vt_q, wv, gw, qv, pkg.J, pkg.cof, pkg.Ainv, config.nu, config.g)
        R = np.zeros_like(vt)
        R[:, :, ns - 1:] += weak_residual(g, F, G)
        Rs = w * np.einsum("ij,abjc->abic", g.solid.mass, vt[:, :, :ns])
        Rs += params.lam * w * np.einsum("abij,abjc->abic", Ks, state.eta.coeffs)
        Rs[M, M, :, 2] += w * params.g * g.solid.mass.sum(axis=1)
        Rs[M, M, -1, 2] -= params.traction_offset
        R[:, :, :ns] += Rs
        R[:, :, [0, -1]] = 0.0
        R_div = test_against_pressure(g, np.einsum("...ij,...ij->...", pkg.cof, gvt)) + div_rhs
        dvt, dq = flat.solve(R, R_div)
        vt += dvt
        q += dq
        if np.max(np.abs(dvt)) <= tol * max(1.0, float(np.max(np.abs(vt)))) and np.max(np.abs(dq)) <= tol * max(1.0, float(np.max(np.abs(q)))):
            break
    q = enforce_real(q)
    out = State(t=state.t, v=state.v, eta=state.eta, q=Field(g, "fluid", q[..., None], degree=1),
                ext=state.ext, pkg=state.pkg, step_index=state.step_index, v_prev=state.v_prev,
                accel=enforce_real(vt))
    out._fluid_quad = state._fluid_quad
    return out


def adjust_volume(eta: Field) -> Field:
    """Shift the interface mean of ``eta^3`` so the solid keeps its reference volume."""
    from alefsi.diagnostics import solid_volume_from_trace

    g = eta.grid
    trace = TraceField(g, eta.coeffs[:, :, -1].copy())
    vol = solid_volume_from_trace(trace, g.config)
    target = g.area * g.config.h_e
    shift = (target - vol) / g.area
    if shift == 0.0:
        return eta
    out = eta.copy()
    # shift the vertical mean mode linearly from 0 at the bottom to `shift` at the interface
    out.coeffs[g.M, g.M, :, 2] += shift * g.solid.nodes / g.config.h_e
    return out


def equilibrium_state(config: DomainConfig, grid: Optional[Grid] = None) -> State:
    grid = grid or build_grid(config)
    eta = Field.zeros(grid, "solid")
    eta.coeffs[grid.M, grid.M, :, 2] = equilibrium_profile(config, grid.solid.nodes)
    return make_state(grid, config, Field.zeros(grid, "channel"), eta)
