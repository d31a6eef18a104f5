"""Energy functionals, dissipation norms and conservation checks of a run.

Time derivatives of the velocity are backward differences over the last
stored states: three points for ``v_t`` and four for ``v_tt`` (both second
order).  Until enough history exists lower-order formulas are used and the
record is flagged.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from alefsi.core_domain import (DomainConfig, Field, TraceField, fractional_norm, horizontal_derivative,
                                l2_inner, quadrature_values, sobolev_norm)
from alefsi.solid_wave import SolidOperatorParams, elastic_form, equilibrium_profile

C_MAX = 50.0


@dataclass
class DiagnosticsRecord:
    """One sample of the run's time series.

    ``energy_residual`` is the signed largest-magnitude step defect
    ``dE + dt * dissipation`` among the steps since the previous record.
    ``low_order`` flags samples whose time derivatives used fewer than four
    stored velocities.
    """

    t: float
    N: float
    D: float
    E_cum: float
    flatness: float
    crucial_lhs: float
    crucial_rhs: float
    volume_err: float
    energy_residual: float
    q_gamma_mean: float
    picard_iters: int = 0
    energy: float = 0.0
    dissipation: float = 0.0
    v_H2_fluid: float = 0.0
    vt_H1_fluid: float = 0.0
    vh_H1_solid: float = 0.0
    etah_H2_solid: float = 0.0
    low_order: bool = False

    @property
    def crucial_ratio(self) -> float:
        return self.crucial_lhs / self.crucial_rhs if self.crucial_rhs > 0 else 0.0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["crucial_ratio"] = self.crucial_ratio
        return d


# -- energies -------------------------------------------------------------

def energy_terms(state, config: Optional[DomainConfig] = None) -> dict:
    """Discrete energy of a state, split by contribution.

    Integrals use the same quadrature as the time stepper, so the energy
    law of the scheme is measured without extra discretisation error.
    """
    grid = state.grid
    config = config or grid.config
    p = SolidOperatorParams.from_config(config)
    w = p.weight
    vf, _ = state.fluid_quad()
    pkg = state.pkg
    sp = grid.fluid
    nq2 = grid.n_quad**2
    kin_f = 0.5 * grid.area * float(np.dot((pkg.J[..., None] * vf**2).sum(axis=(0, 1, 3)), sp.wq)) / nq2
    vs = state.solid_velocity()
    kin_s = 0.5 * w * l2_inner(vs, vs)
    el = 0.5 * w * grid.area * float(np.einsum("abic,abic->", np.conj(state.eta.coeffs),
                                                elastic_form(state.eta, p)).real)
    out = dict(kinetic_fluid=kin_f, kinetic_solid=kin_s, elastic=el,
               gravity_fluid=0.0, gravity_solid=0.0, traction=0.0)
    M = grid.M
    if config.g:
        height = sp.zq[None, None, :] + pkg.eta_tilde[..., 2]
        out["gravity_fluid"] = config.g * grid.area * float(np.dot((pkg.J * height).sum(axis=(0, 1)), sp.wq)) / nq2
        mean3 = state.eta.coeffs[M, M, :, 2].real
        out["gravity_solid"] = w * config.g * grid.area * float(np.sum(grid.solid.mass @ mean3))
    if p.traction_offset:
        out["traction"] = -p.traction_offset * grid.area * float(state.eta.coeffs[M, M, -1, 2].real)
    out["total"] = sum(out.values())
    return out


def total_energy(state, config: Optional[DomainConfig] = None) -> float:
    return energy_terms(state, config)["total"]


def energy_increment(prev, new, config: Optional[DomainConfig] = None) -> float:
    """``E(new) - E(prev)`` assembled from differences of the fields.

    Algebraically equal to subtracting two :func:`total_energy` values but
    free of the cancellation between two nearly equal totals.
    """
    grid = new.grid
    config = config or grid.config
    p = SolidOperatorParams.from_config(config)
    w = p.weight
    sp = grid.fluid
    nq2 = grid.n_quad**2
    a, _ = new.fluid_quad()
    b, _ = prev.fluid_quad()
    J1, J0 = new.pkg.J, prev.pkg.J
    dens = J1 * ((a - b) * (a + b)).sum(axis=-1) + (J1 - J0) * (b**2).sum(axis=-1)
    d_kin_f = 0.5 * grid.area * float(np.dot(dens.sum(axis=(0, 1)), sp.wq)) / nq2
    va, vb = new.solid_velocity(), prev.solid_velocity()
    d_kin_s = 0.5 * w * l2_inner(va - vb, va + vb)
    de = new.eta - prev.eta
    se = new.eta + prev.eta
    d_el = 0.5 * w * grid.area * float(np.einsum("abic,abic->", np.conj(de.coeffs), elastic_form(se, p)).real)
    total = d_kin_f + d_kin_s + d_el
    M = grid.M
    if config.g:
        e0, e1 = prev.pkg.eta_tilde[..., 2], new.pkg.eta_tilde[..., 2]
        dens = (J1 - J0) * (sp.zq[None, None, :] + e0) + J1 * (e1 - e0)
        total += config.g * grid.area * float(np.dot(dens.sum(axis=(0, 1)), sp.wq)) / nq2
        total += w * config.g * grid.area * float(np.sum(grid.solid.mass @ de.coeffs[M, M, :, 2].real))
    if p.traction_offset:
        total -= p.traction_offset * grid.area * float(de.coeffs[M, M, -1, 2].real)
    return total


def energy_ledger(prev, new, config: Optional[DomainConfig] = None) -> float:
    """Defect ``E^{n+1} - E^n + dt * dissipation`` of one step."""
    if new.info is None:
        raise ValueError("the newer state carries no step information")
    dt = new.t - prev.t
    return energy_increment(prev, new, config) + dt * new.info.dissipation


# -- geometry ---------------------------------------------------------------

def solid_volume_from_trace(trace: TraceField, config: DomainConfig) -> float:
    """``int_Gamma (h_e + eta^3) ((1 + eta^1_,1)(1 + eta^2_,2) - eta^1_,2 eta^2_,1)``."""
    grid = trace.grid
    c = trace.coeffs
    k1 = 1j * grid.K1[:, :, None]
    k2 = 1j * grid.K2[:, :, None]
    vals = grid.to_physical(np.concatenate([c, k1 * c[..., :2], k2 * c[..., :2]], axis=-1))
    e3 = vals[..., 2]
    d11, d21 = vals[..., 3], vals[..., 4]
    d12, d22 = vals[..., 5], vals[..., 6]
    jac = (1 + d11) * (1 + d22) - d12 * d21
    return float(grid.area * np.mean((config.h_e + e3) * jac))


def solid_volume(state, config: Optional[DomainConfig] = None) -> float:
    return solid_volume_from_trace(state.interface_trace(), config or state.grid.config)


def flatness(state) -> float:
    """``|eta|_{H^{5/2}(Gamma)}`` of the interface displacement."""
    return fractional_norm(state.interface_trace(), 2.5)


def crucial_integrand(state, config: Optional[DomainConfig] = None) -> float:
    """``lam * sum_alpha |d_alpha eta|^2_{H^{3/2}(Gamma)}``."""
    config = config or state.grid.config
    tr = state.interface_trace()
    return config.lam * sum(fractional_norm(horizontal_derivative(tr, ax), 1.5) ** 2 for ax in (1, 2))


def q_gamma_mean(state, config: Optional[DomainConfig] = None) -> float:
    """Mean over the interface of ``q - q_e``."""
    from alefsi.coupler import equilibrium_pressure_profile

    grid = state.grid
    config = config or grid.config
    qe = float(equilibrium_pressure_profile(config, np.array([config.h_e]))[0])
    return float(state.q.coeffs[grid.M, grid.M, 0, 0].real) - qe


# -- norms of the run -------------------------------------------------------

def _horizontal_part(f: Field) -> Field:
    return Field(f.grid, f.slab, f.coeffs[..., :2].copy(), f.degree)


def _eta_minus_equilibrium(state, config) -> Field:
    grid = state.grid
    d = state.eta.copy()
    d.coeffs[grid.M, grid.M, :, 2] -= equilibrium_profile(config, grid.solid.nodes)
    return d


def time_derivatives(history: list, dt: float):
    """``(v_t, v_tt, low_order)`` from the most recent velocities (newest last)."""
    n = len(history)
    c = [h.coeffs for h in history]
    grid = history[-1].grid
    zero = np.zeros_like(c[-1])
    if n >= 3:
        vt = (3 * c[-1] - 4 * c[-2] + c[-3]) / (2 * dt)
    elif n == 2:
        vt = (c[-1] - c[-2]) / dt
    else:
        vt = zero
    if n >= 4:
        vtt = (2 * c[-1] - 5 * c[-2] + 4 * c[-3] - c[-4]) / dt**2
    elif n == 3:
        vtt = (c[-1] - 2 * c[-2] + c[-3]) / dt**2
    else:
        vtt = zero
    return Field(grid, "channel", vt), Field(grid, "channel", vtt), n < 4


def norm_N(v: Field, vt: Field, vtt: Field, eta_dev: Field) -> float:
    total = 0.0
    for slab in ("fluid", "solid"):
        total += sobolev_norm(v.restrict(slab), 2) + sobolev_norm(vt.restrict(slab), 1) + sobolev_norm(vtt.restrict(slab), 0)
    return total + sobolev_norm(eta_dev, 3)


def norm_D(v: Field, vt: Field, vtt: Field) -> float:
    return (sobolev_norm(v.restrict("fluid"), 3) + sobolev_norm(vt.restrict("fluid"), 2)
            + sobolev_norm(vtt.restrict("fluid"), 1))


class DiagnosticsTracker:
    """Accumulates the time series of a run, one :meth:`record` per sample.

    Velocities of the last four steps are kept for the backward differences
    (the caller feeds every step through :meth:`push`).
    """

    def __init__(self, config: DomainConfig, dt: float, initial_state, initial_accel: Optional[np.ndarray] = None,
                 c_max: float = C_MAX):
        self.config = config
        self.dt = dt
        self.c_max = c_max
        self.history: deque = deque(maxlen=4)
        self.records: list[DiagnosticsRecord] = []
        self.sup_N2 = 0.0
        self.int_D2 = 0.0
        self.crucial_lhs = 0.0
        self.E0: Optional[float] = None
        self.volume0 = solid_volume(initial_state, config)
        self._last = None  # (t, D^2, crucial integrand)
        self._prev_state = None
        self.initial_accel = initial_accel
        self._pending_residual = 0.0
        self.max_energy_increase = -math.inf
        self.push(initial_state)

    def push(self, state):
        """Feed one step; updates the energy ledger of that step."""
        self.history.append(state.v)
        self.last_energy_change = 0.0
        self.last_residual = 0.0
        if self._prev_state is not None and state.info is not None:
            dE = energy_increment(self._prev_state, state, self.config)
            self.last_energy_change = dE
            self.last_residual = dE + (state.t - self._prev_state.t) * state.info.dissipation
            if abs(self.last_residual) > abs(self._pending_residual):
                self._pending_residual = self.last_residual
            self.max_energy_increase = max(self.max_energy_increase, dE)
        self._prev_state = state

    def record(self, state) -> DiagnosticsRecord:
        cfg = self.config
        hist = list(self.history)
        if len(hist) == 1 and self.initial_accel is not None:
            vt = Field(state.grid, "channel", self.initial_accel)
            vtt = Field.zeros(state.grid, "channel")
            low = True
        else:
            vt, vtt, low = time_derivatives(hist, self.dt)
        v = state.v
        eta_dev = _eta_minus_equilibrium(state, cfg)
        N = norm_N(v, vt, vtt, eta_dev)
        D = norm_D(v, vt, vtt)
        ci = crucial_integrand(state, cfg)
        if self._last is None:
            self.E0 = N**2
        else:
            t0, D0, c0 = self._last
            h = state.t - t0
            self.int_D2 += 0.5 * h * (D0**2 + D**2)
            self.crucial_lhs += 0.5 * h * (c0 + ci)
        self._last = (state.t, D, ci)
        self.sup_N2 = max(self.sup_N2, N**2)
        vol = solid_volume(state, cfg)
        terms = energy_terms(state, cfg)
        vf = v.restrict("fluid")
        vs = v.restrict("solid")
        rec = DiagnosticsRecord(
            t=state.t,
            N=N,
            D=D,
            E_cum=self.sup_N2 + self.int_D2,
            flatness=flatness(state),
            crucial_lhs=self.crucial_lhs,
            crucial_rhs=self.int_D2 + (self.E0 or 0.0),
            volume_err=abs(vol / self.volume0 - 1.0),
            energy_residual=self._pending_residual,
            q_gamma_mean=q_gamma_mean(state, cfg),
            picard_iters=state.info.sweeps if state.info else 0,
            energy=terms["total"],
            dissipation=state.info.dissipation if state.info else 0.0,
            v_H2_fluid=sobolev_norm(vf, 2),
            vt_H1_fluid=sobolev_norm(vt.restrict("fluid"), 1),
            vh_H1_solid=sobolev_norm(_horizontal_part(vs), 1),
            etah_H2_solid=sobolev_norm(_horizontal_part(state.eta), 2),
            low_order=low,
        )
        self.records.append(rec)
        self._pending_residual = 0.0
        return rec


def crucial_inequality(records: list) -> tuple:
    """``(lhs, rhs, ratio)`` at the last record."""
    if not records:
        return 0.0, 0.0, 0.0
    r = records[-1]
    return r.crucial_lhs, r.crucial_rhs, r.crucial_ratio


def report_summary(records: list, c_max: float = C_MAX) -> dict:
    """Summary numbers for ``report.json``."""
    if not records:
        return {}
    ratios = [r.crucial_ratio for r in records]
    return dict(
        n_records=len(records),
        t_final=records[-1].t,
        max_N=max(r.N for r in records),
        final_D=records[-1].D,
        max_flatness=max(r.flatness for r in records),
        final_flatness=records[-1].flatness,
        crucial_ratio_sup=max(ratios),
        crucial_ratio_bounded=bool(max(ratios) <= c_max),
        volume_drift_max=max(r.volume_err for r in records),
        energy_residual_max=max(abs(r.energy_residual) for r in records),
        picard_iters_max=max(r.picard_iters for r in records),
    )
