"""Scenario files, initial data and the run loop.

A scenario is an INI-style file::

    [domain]        L, h, h_s, h_e
    [physics]       nu, lambda, g
    [discretization] M, Ns, Nf, dt, n_gauss, tol_picard, atol_picard, max_sweeps, tol_div
    [run]           T_end, diag_every, snapshot_every, checkpoints, seed
    [scenario]      name, kind, plus kind parameters

``kind`` is one of ``equilibrium``, ``perturbed``, ``flat-interface``,
``h-shift-equilibrium``, ``h-shift-perturbed`` or ``file``.  Perturbations
take ``mode = k1,k2`` (or ``random``), ``amplitude`` and ``basis`` (``cc``,
``cs``, ...); flat-interface data take ``amplitude``, ``velocity`` and
``vertical_mode``; ``file`` takes ``directory`` and ``step`` of a stored
snapshot.  Anything missing falls back to :class:`DomainConfig` defaults.
"""

from __future__ import annotations

import configparser
import logging
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from alefsi.core_domain import DomainConfig, Field, Grid, build_grid, real_basis_function
from alefsi.coupler import (PicardNonConvergence, SolverBreakdown, State, Stepper, adjust_volume,
                            consistent_pressure, equilibrium_pressure_profile, equilibrium_state, make_state)
from alefsi.diagnostics import DiagnosticsTracker, energy_ledger
from alefsi.kinematics import GuardViolation
from alefsi.snapshots import StateSnapshot, read_state
from alefsi.solid_wave import equilibrium_profile

log = logging.getLogger(__name__)

KINDS = ("equilibrium", "perturbed", "flat-interface", "h-shift-equilibrium", "h-shift-perturbed", "file")

_FLOAT_KEYS = {
    "domain": ("L", "h", "h_s", "h_e"),
    "physics": ("nu", "lam", "g"),
    "discretization": ("dt", "tol_picard", "atol_picard", "tol_div", "lambda_over_g_min", "ainv_tol"),
}
_INT_KEYS = {"discretization": ("M", "Ns", "Nf", "n_gauss", "max_sweeps", "n_quad")}
_ALIASES = {"lambda": "lam"}


@dataclass
class Scenario:
    name: str
    kind: str
    config: DomainConfig
    params: dict = field(default_factory=dict)
    diag_every: int = 1
    snapshot_every: int = 0
    checkpoints: tuple = ()
    seed: Optional[int] = None
    source: Optional[Path] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        amp = float(self.params.get("amplitude", 0.0))
        if self.kind in ("perturbed", "h-shift-perturbed") and amp > 0.05 * self.config.h_e:
            raise ValueError(f"perturbation amplitude {amp} is far outside the small-data regime")
        if self.diag_every < 1:
            raise ValueError("diag_every must be >= 1")


def preset_path(name: str) -> Path:
    """Path of a shipped preset (``equilibrium``, ``perturbed``, ...)."""
    base = resources.files("alefsi") / "presets"
    p = Path(str(base / (name if name.endswith(".cfg") else name + ".cfg")))
    if not p.exists():
        raise FileNotFoundError(f"no preset named {name!r}")
    return p


def list_presets() -> list:
    base = Path(str(resources.files("alefsi") / "presets"))
    return sorted(p.stem for p in base.glob("*.cfg"))


def parse_scenario(text: str, source: Optional[Path] = None) -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string(text)
    kw = {}
    for section, keys in _FLOAT_KEYS.items():
        if cp.has_section(section):
            for key, value in cp.items(section):
                key = _ALIASES.get(key, key)
                if section in _INT_KEYS and key in _INT_KEYS[section]:
                    kw[key] = int(value)
                elif key in keys:
                    kw[key] = float(value)
                else:
                    raise ValueError(f"unknown key {key!r} in [{section}]")
    run = dict(cp.items("run")) if cp.has_section("run") else {}
    if "T_end" in run:
        kw["T_end"] = float(run.pop("T_end"))
    diag_every = int(run.pop("diag_every", 1))
    snapshot_every = int(run.pop("snapshot_every", 0))
    checkpoints = tuple(float(x) for x in run.pop("checkpoints", "").replace(",", " ").split())
    seed = run.pop("seed", None)
    if run:
        raise ValueError(f"unknown keys in [run]: {', '.join(run)}")
    sc = dict(cp.items("scenario")) if cp.has_section("scenario") else {}
    kind = sc.pop("kind", "equilibrium")
    name = sc.pop("name", source.stem if source else kind)
    config = DomainConfig(**kw)
    return Scenario(name=name, kind=kind, config=config, params=sc, diag_every=diag_every,
                    snapshot_every=snapshot_every, checkpoints=checkpoints,
                    seed=int(seed) if seed is not None else None, source=source)


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scenario file {path} does not exist")
    return parse_scenario(path.read_text(), path)


def with_overrides(scenario: Scenario, t_end=None, dt=None, snapshot_every=None, seed=None, diag_every=None) -> Scenario:
    changes = {}
    if t_end is not None:
        changes["T_end"] = float(t_end)
    if dt is not None:
        changes["dt"] = float(dt)
    cfg = scenario.config.with_(**changes) if changes else scenario.config
    return Scenario(scenario.name, scenario.kind, cfg, dict(scenario.params),
                    diag_every if diag_every is not None else scenario.diag_every,
                    snapshot_every if snapshot_every is not None else scenario.snapshot_every,
                    scenario.checkpoints, seed if seed is not None else scenario.seed, scenario.source)


# -- initial data ---------------------------------------------------------------

def _mode_list(params: dict, grid: Grid, seed: Optional[int]):
    """``[(k, kind, weight)]`` of the horizontal shape of a perturbation."""
    mode = str(params.get("mode", "1,0")).strip()
    if mode == "random":
        rng = np.random.default_rng(seed)
        kmax = max(1, min(grid.M, int(params.get("max_wavenumber", 2))))
        out = []
        for k1 in range(kmax + 1):
            for k2 in range(kmax + 1):
                if (k1, k2) == (0, 0):
                    continue
                for kind in ("cc", "cs", "sc", "ss"):
                    if (k1 == 0 and kind[0] == "s") or (k2 == 0 and kind[1] == "s"):
                        continue
                    out.append(((k1, k2), kind, rng.standard_normal()))
        norm = math.sqrt(sum(w * w for *_, w in out))
        return [(k, kind, w / norm) for k, kind, w in out]
    k1, k2 = (int(x) for x in mode.split(","))
    return [((k1, k2), str(params.get("basis", "cc")), 1.0)]


def perturbation_shape(grid: Grid, params: dict, seed: Optional[int]) -> Callable:
    """``(x1, x2, x3) -> eta^3`` perturbation, vanishing at the solid bottom."""
    amp = float(params.get("amplitude", 1e-3))
    h_e = grid.config.h_e
    modes = [(real_basis_function(grid, k, kind), w) for k, kind, w in _mode_list(params, grid, seed)]

    def shape(x1, x2, x3):
        hor = sum(w * e(x1, x2) for e, w in modes)
        return amp * hor * np.sin(0.5 * np.pi * x3 / h_e)

    return shape


def flat_profiles(config: DomainConfig, params: dict, z: np.ndarray):
    """(displacement, velocity) profiles of a flat-interface standing wave."""
    m = int(params.get("vertical_mode", 1))
    phi = np.sin(m * np.pi * z / config.h_e)
    a0 = equilibrium_profile(config, z) + float(params.get("amplitude", 1e-3)) * phi
    a1 = float(params.get("velocity", 0.0)) * phi
    return a0, a1


def initial_data(scenario: Scenario, grid: Optional[Grid] = None) -> State:
    """Admissible initial state of a scenario (pressure from a consistency solve)."""
    cfg = scenario.config
    grid = grid or build_grid(cfg)
    kind = scenario.kind
    if kind in ("equilibrium", "h-shift-equilibrium"):
        return equilibrium_state(cfg, grid)
    if kind in ("perturbed", "h-shift-perturbed"):
        amp = float(scenario.params.get("amplitude", 1e-3))
        eq = equilibrium_state(cfg, grid)
        if amp == 0.0:
            return eq
        shape = perturbation_shape(grid, scenario.params, scenario.seed)
        pert = Field.from_function(grid, "solid", lambda x, y, z: np.stack(
            np.broadcast_arrays(0 * z, 0 * z, shape(x, y, z)), -1))
        eta = adjust_volume(eq.eta + pert)
        state = make_state(grid, cfg, Field.zeros(grid, "channel"), eta)
        return consistent_pressure(state, cfg)
    if kind == "flat-interface":
        z = grid.solid.nodes
        a0, a1 = flat_profiles(cfg, scenario.params, z)
        eta = Field.zeros(grid, "solid")
        eta.coeffs[grid.M, grid.M, :, 2] = a0
        v = Field.zeros(grid, "channel")
        v.coeffs[grid.M, grid.M, :grid.n_solid, 2] = a1
        state = make_state(grid, cfg, v, eta)
        return consistent_pressure(state, cfg)
    if kind == "file":
        directory = Path(scenario.params["directory"])
        if scenario.source is not None and not directory.is_absolute():
            directory = scenario.source.parent / directory
        snap = read_state(directory, int(scenario.params.get("step", 0)), grid)
        v, eta, q = snap.fields(grid)
        state = make_state(grid, cfg, v, eta, q, t=0.0)
        return consistent_pressure(state, cfg)
    raise ValueError(f"unknown scenario kind {kind!r}")


# -- run ------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Result of :func:`run`: diagnostics series, snapshots and final state."""

    scenario: Scenario
    grid: Grid
    dt: float
    records: list
    snapshots: list
    initial: State
    final: State
    energy_steps: list = field(default_factory=list)
    status: str = "ok"
    error: str = ""
    wall_time: float = 0.0

    @property
    def config(self) -> DomainConfig:
        return self.scenario.config

    @property
    def last_valid(self) -> State:
        return self.final

    def __len__(self):
        return len(self.records)


def _steps_for(t: float, dt: float) -> int:
    return int(round(t / dt))


def run(scenario: Scenario, grid: Optional[Grid] = None, initial: Optional[State] = None,
        callback: Optional[Callable] = None, track_energy: bool = True) -> Trajectory:
    """March a scenario from ``t = 0`` to ``T_end``.

    Diagnostics are recorded every ``diag_every`` steps (and at the last
    step), state snapshots every ``snapshot_every`` steps and at the
    checkpoint times.  Guard violations and solver failures stop the run; the
    trajectory then ends at the last valid state with ``status = "error"``.
    """
    cfg = scenario.config
    grid = grid or build_grid(cfg)
    t0 = time.perf_counter()
    state = initial if initial is not None else initial_data(scenario, grid)
    dt = cfg.dt
    n_steps = _steps_for(cfg.T_end, dt)
    if n_steps * dt - cfg.T_end > 1e-9 * max(1.0, cfg.T_end):
        log.warning("T_end %.6g is not a multiple of dt %.6g; stopping at %.6g", cfg.T_end, dt, n_steps * dt)
    tracker = DiagnosticsTracker(cfg, dt, state, state.accel)
    tracker.record(state)
    ck_steps = {_steps_for(c, dt) for c in scenario.checkpoints}
    snaps = [StateSnapshot.from_state(state)]
    energy_steps = []
    traj = Trajectory(scenario, grid, dt, tracker.records, snaps, state, state, energy_steps)
    stepper = Stepper(cfg, grid, dt) if n_steps else None
    for i in range(1, n_steps + 1):
        try:
            new = stepper.step(state)
        except (GuardViolation, PicardNonConvergence, SolverBreakdown, FloatingPointError) as exc:
            traj.status, traj.error = "error", f"{type(exc).__name__}: {exc}"
            log.error("run stopped at t=%.6g: %s", state.t, exc)
            break
        tracker.push(new)
        if track_energy:
            energy_steps.append((new.t, tracker.last_energy_change, tracker.last_residual))
        last = i == n_steps
        if i % scenario.diag_every == 0 or last:
            rec = tracker.record(new)
            if callback is not None:
                callback(new, rec)
        if (scenario.snapshot_every and i % scenario.snapshot_every == 0) or i in ck_steps or last:
            snaps.append(StateSnapshot.from_state(new))
        state = new
        traj.final = state
    traj.wall_time = time.perf_counter() - t0
    return traj
