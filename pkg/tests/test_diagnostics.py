import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alefsi.core_domain import DomainConfig, Field, TraceField, build_grid, real_basis_function
from alefsi.coupler import Stepper, equilibrium_state, make_state
from alefsi.diagnostics import (DiagnosticsTracker, crucial_inequality, energy_increment, energy_ledger, flatness,
                                report_summary, solid_volume_from_trace, time_derivatives, total_energy)
from alefsi.scenario import Scenario, initial_data, run


def _cfg(**kw):
    base = dict(L=1.0, h=2.0, h_s=1.0, lam=10.0, g=1.0, M=2, Ns=4, Nf=4, dt=0.01, T_end=0.1)
    base.update(kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return DomainConfig(**base)


def _state_with_trace(cfg, func3, func1=None):
    """State whose solid displacement is linear in ``x3`` with the given interface trace."""
    g = build_grid(cfg)

    def eta(x1, x2, z):
        s = z / cfg.h_e
        e1 = func1(x1, x2) * s if func1 else 0 * z
        return np.stack(np.broadcast_arrays(e1, 0 * z, func3(x1, x2) * s), -1)

    return make_state(g, cfg, Field.zeros(g, "channel"), Field.from_function(g, "solid", eta))


def test_equilibrium_diagnostics_vanish():
    cfg = _cfg()
    s = equilibrium_state(cfg)
    tr = DiagnosticsTracker(cfg, cfg.dt, s)
    rec = tr.record(s)
    assert rec.N == pytest.approx(0.0, abs=1e-14)
    assert rec.D == pytest.approx(0.0, abs=1e-14)
    assert rec.flatness == pytest.approx(0.0, abs=1e-14)
    assert rec.volume_err == 0.0
    assert rec.q_gamma_mean == pytest.approx(0.0, abs=1e-14)
    assert crucial_inequality(tr.records) == (0.0, 0.0, 0.0)


def test_volume_examples():
    cfg = _cfg(L=1.5)
    g = build_grid(cfg)
    c = 0.003
    flat = TraceField.zeros(g)
    flat.coeffs[g.M, g.M, 2] = c
    assert solid_volume_from_trace(flat, cfg) == pytest.approx(cfg.L**2 * (cfg.h_e + c), rel=1e-15)
    a, b = 0.01, 0.02
    L = cfg.L
    tr = TraceField.from_function(g, lambda x1, x2: np.stack([a * np.sin(2 * np.pi * x1 / L), 0 * x1,
                                                               b * np.cos(2 * np.pi * x1 / L)], -1), ncomp=3)
    # int (h_e + b cos)(1 + (2 pi a / L) cos) = L^2 (h_e + pi a b / L)
    assert solid_volume_from_trace(tr, cfg) == pytest.approx(L**2 * (cfg.h_e + math.pi * a * b / L), rel=1e-14)


@pytest.mark.parametrize("k", [(1, 0), (2, 1)])
def test_flatness_of_single_mode(k):
    cfg = _cfg(L=1.2)
    delta = 1e-3
    e = real_basis_function(build_grid(cfg), k, "cc")
    s = _state_with_trace(cfg, lambda x1, x2: delta * e(x1, x2))
    lam_n = (2 * math.pi / cfg.L) ** 2 * (k[0] ** 2 + k[1] ** 2)
    assert flatness(s) == pytest.approx(delta * lam_n ** 1.25, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_flatness_translation_invariant(a1, a2):
    cfg = _cfg()
    f = lambda x1, x2: 1e-3 * (np.cos(2 * np.pi * x1) + 0.5 * np.sin(2 * np.pi * (x1 + 2 * x2)))
    s0 = _state_with_trace(cfg, f)
    s1 = _state_with_trace(cfg, lambda x1, x2: f(x1 - a1, x2 - a2))
    assert flatness(s1) == pytest.approx(flatness(s0), rel=1e-11)


def test_time_derivatives_exact_for_cubics():
    g = build_grid(_cfg())
    dt = 0.1
    base = np.random.default_rng(0).standard_normal((g.nm, g.nm, g.n_channel, 3))
    hist = [Field(g, "channel", (1 + 2 * t - t**2 + 0.5 * t**3) * base) for t in (-3 * dt, -2 * dt, -dt, 0.0)]
    vt, vtt, low = time_derivatives(hist, dt)
    assert not low
    assert np.allclose(vtt.coeffs, (-2.0) * base, atol=1e-10)
    # second-order one-sided first derivative: exact for quadratics, O(dt^2) error on the cubic term
    assert np.allclose(vt.coeffs, (2.0 - 0.5 * 2 * dt**2) * base, atol=1e-12)
    _, _, low = time_derivatives(hist[-2:], dt)
    assert low


def test_energy_increment_matches_difference_of_totals():
    cfg = _cfg(g=1.0, h_e=0.95)
    sc = Scenario("p", "perturbed", cfg, dict(amplitude=5e-4, mode="1,0"), diag_every=1)
    s0 = initial_data(sc)
    s1 = Stepper(cfg, s0.grid).step(s0)
    dE = energy_increment(s0, s1, cfg)
    assert dE == pytest.approx(total_energy(s1, cfg) - total_energy(s0, cfg), abs=1e-13)
    assert dE < 0
    # the ledger defect is a time-discretisation term, far below the step's energy change
    assert abs(energy_ledger(s0, s1, cfg)) < 1e-2 * abs(dE)


def test_tracker_series_on_short_run():
    cfg = _cfg(g=0.0, lam=4.0, T_end=0.3)
    traj = run(Scenario("p", "perturbed", cfg, dict(amplitude=1e-3), diag_every=3))
    recs = traj.records
    assert len(recs) == 11
    E = [r.E_cum for r in recs]
    assert all(b >= a for a, b in zip(E, E[1:]))
    assert all(r.crucial_lhs >= 0 and r.crucial_rhs > 0 for r in recs[1:])
    assert recs[0].low_order and not recs[-1].low_order
    # energy defect column holds the worst step since the previous record
    worst = max((abs(r) for _, _, r in traj.energy_steps[:3]))
    assert abs(recs[1].energy_residual) == pytest.approx(worst)
    summ = report_summary(recs)
    assert summ["n_records"] == 11 and summ["crucial_ratio_bounded"]
    assert report_summary([]) == {}
