"""Flat-interface reference solutions and the long-time convergence report.

Flat-interface solutions have a fluid at rest, a flat interface and a solid
moving vertically as a function of ``x3`` only, governed by

    alpha_tt = lam s alpha_33 - g,   alpha(0) = alpha(h_e) = 0,

with ``s = (h_e/h_s)^2``.  The 1D problem is discretised with the vertical
space and the implicit midpoint rule of the coupled solver, so a coupled run
whose solid motion is flat reproduces it up to round-off.

The lift ``Lambda`` subtracts from a solid field its (per mode) harmonic
interpolant of the boundary values; the time-``n`` wave problems take the
horizontal means of the lifted displacement and velocity of a stored state
as data at ``t = n``.  Since the limiting data of the long-time theory are
not constructive, the report exposes these time-``n`` surrogates and their
mutual distances.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from alefsi.core_domain import DomainConfig, Field, Grid, P2Space, sobolev_norm

log = logging.getLogger(__name__)

NORM_SERIES = ("v_H2_fluid", "vt_H1_fluid", "flatness", "vh_H1_solid", "etah_H2_solid")

SUBSTITUTION_NOTE = (
    "The limit data (alpha_0, alpha_1) are obtained by compactness and are not computable; "
    "mismatches are measured against the time-n surrogates alpha^n, and the backward profiles "
    "alpha^n(., 0) with their pairwise distances stand in for the limit."
)


@dataclass(frozen=True)
class WaveParams:
    lam: float
    scale: float = 1.0
    g: float = 0.0

    @classmethod
    def from_config(cls, config: DomainConfig) -> "WaveParams":
        return cls(config.lam, config.stiffness_scale, config.g)


@dataclass
class FlatSolution:
    """Samples of a flat-interface solution on the solid nodes."""

    z: np.ndarray
    t: np.ndarray
    alpha: np.ndarray
    alpha_t: np.ndarray
    params: WaveParams
    h_e: float
    # interface pressure at each sample (fluid q = q_gamma - g (x3 - h_e))
    q_gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def at(self, t: float):
        """Profiles ``(alpha, alpha_t)`` at the sample closest to ``t``."""
        i = int(np.argmin(np.abs(self.t - t)))
        return self.alpha[i], self.alpha_t[i]

    def pressure(self, i: int, z_fluid: np.ndarray) -> np.ndarray:
        """Induced fluid pressure profile at sample ``i``."""
        return self.q_gamma[i] - self.params.g * (np.asarray(z_fluid) - self.h_e)

    def energy(self, space: P2Space) -> np.ndarray:
        """``1/2 |alpha_t|^2 + lam s/2 |alpha_3|^2 + g alpha`` integrated over ``[0, h_e]``."""
        p = self.params
        load = space.mass.sum(axis=1)
        kin = 0.5 * np.einsum("ti,ij,tj->t", self.alpha_t, space.mass, self.alpha_t)
        el = 0.5 * p.lam * p.scale * np.einsum("ti,ij,tj->t", self.alpha, space.stiffness, self.alpha)
        return kin + el + p.g * self.alpha @ load


def _profile(space: P2Space, data) -> np.ndarray:
    if callable(data):
        return np.asarray(data(space.nodes), dtype=float)
    arr = np.asarray(data, dtype=float)
    if arr.shape != (space.ndof,):
        raise ValueError(f"profile needs {space.ndof} nodal values, got shape {arr.shape}")
    return arr


class _MidpointWave:
    """Factorised midpoint updates of the 1D wave, one per step size."""

    def __init__(self, space: P2Space, params: WaveParams):
        self.space = space
        self.params = params
        n = space.ndof
        self.idx = np.arange(1, n - 1)
        self.M = space.mass[np.ix_(self.idx, self.idx)]
        self.K = params.lam * params.scale * space.stiffness[np.ix_(self.idx, self.idx)]
        self.load = params.g * space.mass[self.idx].sum(axis=1)
        self._fac = {}

    def step(self, eta: np.ndarray, v: np.ndarray, h: float):
        key = round(h, 15)
        if key not in self._fac:
            self._fac[key] = scipy.linalg.lu_factor(self.M / h + 0.25 * h * self.K)
        i = self.idx
        e0, b = eta[i], v[i]
        rhs = self.M @ b / h - self.K @ (e0 + 0.25 * h * b) - self.load
        a = scipy.linalg.lu_solve(self._fac[key], rhs)
        eta1 = np.zeros_like(eta)
        v1 = np.zeros_like(v)
        eta1[i] = e0 + 0.5 * h * (a + b)
        v1[i] = a
        return eta1, v1


def _interface_pressure(space: P2Space, params: WaveParams, alpha: np.ndarray, offset: float, weight: float) -> np.ndarray:
    top = space.boundary_derivative("b")
    return -params.lam * params.scale * weight * (alpha @ top) + offset


def solve_wave_1d(alpha0, alpha1, space: P2Space, params: WaveParams, t_span: Sequence[float], dt: float,
                  direction: str = "forward", store_every: int = 1, traction_offset: float = 0.0,
                  weight: float = 1.0) -> FlatSolution:
    """Midpoint solve of the flat-interface wave equation over ``t_span``.

    ``alpha0``, ``alpha1`` are nodal profiles (or callables of ``x3``) that
    must vanish at both ends.  ``direction="backward"`` integrates towards
    ``t_span[1] < t_span[0]``; the rule is symmetric so forward and backward
    solves invert each other up to round-off.
    """
    a0 = _profile(space, alpha0)
    a1 = _profile(space, alpha1)
    scale = max(1.0, float(np.max(np.abs(a0))), float(np.max(np.abs(a1))))
    for name, prof in (("alpha0", a0), ("alpha1", a1)):
        if max(abs(prof[0]), abs(prof[-1])) > 1e-12 * scale:
            raise ValueError(f"{name} must vanish at x3 = 0 and x3 = h_e (got {prof[0]:.3e}, {prof[-1]:.3e})")
    a0 = a0.copy()
    a1 = a1.copy()
    a0[[0, -1]] = 0.0
    a1[[0, -1]] = 0.0
    t0, t1 = float(t_span[0]), float(t_span[1])
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    if (direction == "forward" and t1 < t0) or (direction == "backward" and t1 > t0):
        raise ValueError(f"t_span {t_span} does not match direction {direction!r}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = int(round(abs(t1 - t0) / dt))
    h = (t1 - t0) / n if n else 0.0
    stepper = _MidpointWave(space, params)
    ts, al, alt = [t0], [a0], [a1]
    eta, v = a0, a1
    for i in range(1, n + 1):
        eta, v = stepper.step(eta, v, h)
        if i % store_every == 0 or i == n:
            ts.append(t0 + i * h)
            al.append(eta)
            alt.append(v)
    al = np.array(al)
    qg = np.array([_interface_pressure(space, params, a, traction_offset, weight) for a in al])
    return FlatSolution(space.nodes.copy(), np.array(ts), al, np.array(alt), params, space.b, qg)


def sample_wave_1d(alpha0, alpha1, t0: float, t_eval: Sequence[float], space: P2Space, params: WaveParams,
                   dt: float) -> FlatSolution:
    """Flat solution with data at ``t0`` sampled at arbitrary times (either side of ``t0``)."""
    a0, a1 = _profile(space, alpha0), _profile(space, alpha1)
    t_eval = np.asarray(sorted(set(float(t) for t in t_eval)))
    out = {}
    stepper = _MidpointWave(space, params)
    for side in (t_eval[t_eval >= t0], t_eval[t_eval < t0][::-1]):
        eta, v, tc = a0.copy(), a1.copy(), t0
        eta[[0, -1]] = 0.0
        v[[0, -1]] = 0.0
        for t in side:
            n = int(round(abs(t - tc) / dt))
            if n:
                h = (t - tc) / n
                for _ in range(n):
                    eta, v = stepper.step(eta, v, h)
            tc = t
            out[t] = (eta, v)
    al = np.array([out[t][0] for t in t_eval])
    alt = np.array([out[t][1] for t in t_eval])
    return FlatSolution(space.nodes.copy(), t_eval, al, alt, params, space.b)


# -- lift ----------------------------------------------------------------------

def lambda_lift(f: Field) -> Field:
    """``Lambda f``: ``f`` minus its discrete harmonic interpolant, per horizontal mode.

    Solves ``Delta(Lambda f) = Delta f`` weakly with zero values on both
    solid boundaries; ``Lambda`` is the energy-orthogonal projection onto the
    fields vanishing there, so ``Lambda Lambda = Lambda`` and constants are
    annihilated.
    """
    if f.slab != "solid" or f.degree != 2:
        raise ValueError("the lift acts on degree-2 solid fields")
    grid = f.grid
    sp = grid.solid
    n = sp.ndof
    idx = np.arange(1, n - 1)
    A = grid.lam[:, :, None, None] * sp.mass[None, None] + sp.stiffness[None, None]
    Ai = A[:, :, idx][:, :, :, idx]
    rhs = np.matmul(A[:, :, idx], f.coeffs)
    out = np.zeros_like(f.coeffs)
    out[:, :, idx] = np.linalg.solve(Ai, rhs)
    res = Field(grid, "solid", out)
    if log.isEnabledFor(logging.DEBUG):
        nf = sobolev_norm(f, 1)
        if nf > 0:
            log.debug("lift stability ratio %.4f", sobolev_norm(res, 1) / nf)
    return res


def lift_stability(f: Field) -> float:
    """``|Lambda f|_{H^1} / |f|_{H^1}`` (0 for ``f = 0``)."""
    nf = sobolev_norm(f, 1)
    return sobolev_norm(lambda_lift(f), 1) / nf if nf > 0 else 0.0


def _mean_vertical(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    return coeffs[grid.M, grid.M, :, 2].real.copy()


def alpha_n_data(grid: Grid, v_solid: np.ndarray, eta: np.ndarray):
    """``(m(Lambda eta^3), m(Lambda v^3))`` of solid coefficient arrays."""
    le = lambda_lift(Field(grid, "solid", eta)).coeffs
    lv = lambda_lift(Field(grid, "solid", v_solid)).coeffs
    return _mean_vertical(grid, le), _mean_vertical(grid, lv)


def alpha_n_problem(snapshot, n: float, t_eval: Sequence[float], grid: Grid, config: Optional[DomainConfig] = None,
                    dt: Optional[float] = None) -> FlatSolution:
    """Time-``n`` wave problem of a stored state, sampled at ``t_eval``.

    ``snapshot`` is a :class:`~alefsi.snapshots.StateSnapshot` (or a state)
    taken at time ``n``; evaluation times before ``n`` are reached by
    integrating backward.
    """
    if snapshot is None:
        raise ValueError(f"no snapshot available at n = {n}")
    config = config or grid.config
    v = snapshot.v.coeffs if isinstance(snapshot.v, Field) else snapshot.v
    eta = snapshot.eta.coeffs if isinstance(snapshot.eta, Field) else snapshot.eta
    if abs(snapshot.t - n) > 1e-9 * max(1.0, abs(n)):
        raise ValueError(f"snapshot time {snapshot.t} does not match n = {n}")
    a0, a1 = alpha_n_data(grid, v[:, :, :grid.n_solid], eta)
    return sample_wave_1d(a0, a1, n, t_eval, grid.solid, WaveParams.from_config(config), dt or config.dt)


# -- report --------------------------------------------------------------------

def _solid_scalar(grid: Grid, coeffs3: np.ndarray, profile: np.ndarray) -> Field:
    c = coeffs3.copy()
    c[grid.M, grid.M, :] -= profile
    return Field(grid, "solid", c[..., None])


def profile_h1(grid: Grid, p: np.ndarray) -> float:
    """``H^1(solid)`` norm of a profile depending on ``x3`` only."""
    sp = grid.solid
    return float(math.sqrt(grid.area * max(p @ sp.mass @ p + p @ sp.stiffness @ p, 0.0)))


def log_slope(t: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of ``log y`` against ``t`` (``nan`` without positive samples)."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    ok = y > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(t[ok], np.log(y[ok]), 1)[0])


@dataclass
class ConvergenceReport:
    times: list
    norms: dict
    norm_summary: dict
    checkpoints: list
    mismatch: dict
    backward_profiles: dict
    pairwise_h1: list
    z: list
    note: str = SUBSTITUTION_NOTE

    def to_dict(self) -> dict:
        return dict(times=self.times, norms=self.norms, norm_summary=self.norm_summary,
                    checkpoints=self.checkpoints,
                    mismatch={str(k): v for k, v in self.mismatch.items()},
                    backward_profiles={str(k): v for k, v in self.backward_profiles.items()},
                    pairwise_h1=self.pairwise_h1, z=self.z, note=self.note)

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1, default=float))
        return path

    def write_profiles(self, directory, samples: dict) -> list:
        """Per-checkpoint CSVs ``x3, alpha, alpha_t`` at the checkpoint time."""
        directory = Path(directory)
        out = []
        for n, (a, at) in samples.items():
            p = directory / f"alpha_n{n:g}.csv"
            np.savetxt(p, np.column_stack([self.z, a, at]), delimiter=",", header="x3,alpha,alpha_t", comments="")
            out.append(p)
        return out


def convergence_report(trajectory, checkpoints: Sequence[float], tail_fraction: float = 0.5):
    """Long-time metrics of a trajectory.

    ``trajectory`` needs ``grid``, ``config``, ``dt``, ``records`` (the
    diagnostics series) and ``snapshots`` (state snapshots, including one at
    every checkpoint).  Returns ``(report, samples)`` where ``samples`` maps
    each checkpoint to the ``(alpha, alpha_t)`` profiles at that time.
    """
    grid, config, dt = trajectory.grid, trajectory.config, trajectory.dt
    recs = trajectory.records
    times = np.array([r.t for r in recs])
    norms = {name: [float(getattr(r, name)) for r in recs] for name in NORM_SERIES}
    t_end = float(times[-1]) if len(times) else 0.0
    summary = {}
    for name, series in norms.items():
        y = np.array(series)
        tail = times >= t_end * (1 - tail_fraction)
        peak = float(y.max()) if y.size else 0.0
        summary[name] = dict(max=peak, final=float(y[-1]) if y.size else 0.0,
                             final_over_max=float(y[-1] / peak) if peak > 0 else 0.0,
                             tail_log_slope=log_slope(times[tail], y[tail]))
    snaps = sorted(trajectory.snapshots, key=lambda s: s.t)
    by_time = {round(s.t / dt): s for s in snaps}
    params = WaveParams.from_config(config)
    mismatch, backward, samples = {}, {}, {}
    ns = grid.n_solid
    for n in checkpoints:
        snap = by_time.get(round(n / dt))
        if snap is None:
            raise ValueError(f"trajectory has no snapshot at checkpoint {n}")
        later = [s for s in snaps if s.t >= snap.t - 0.5 * dt]
        t_eval = [s.t for s in later] + [0.0]
        sol = alpha_n_problem(snap, snap.t, t_eval, grid, config, dt)
        v3, e3 = [], []
        for s in later:
            a, at = sol.at(s.t)
            v3.append(sobolev_norm(_solid_scalar(grid, s.v[:, :, :ns, 2], at), 0))
            e3.append(sobolev_norm(_solid_scalar(grid, s.eta[:, :, :, 2], a), 1))
        ts = [s.t for s in later]
        mismatch[n] = dict(t=ts, v3_L2=v3, eta3_H1=e3, tail_mean_v3=float(np.mean(v3)),
                           tail_mean_eta3=float(np.mean(e3)), log_slope_v3=log_slope(np.array(ts), np.array(v3)))
        a0, a1 = sol.at(0.0)
        backward[n] = dict(alpha0=a0.tolist(), alpha1=a1.tolist())
        samples[n] = sol.at(snap.t)
    keys = list(checkpoints)
    pair = [profile_h1(grid, np.array(backward[keys[i + 1]]["alpha0"]) - np.array(backward[keys[i]]["alpha0"]))
            for i in range(len(keys) - 1)]
    rep = ConvergenceReport(times=times.tolist(), norms=norms, norm_summary=summary, checkpoints=keys,
                            mismatch=mismatch, backward_profiles=backward, pairwise_h1=pair,
                            z=grid.solid.nodes.tolist())
    return rep, samples
