import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alefsi.core_domain import DomainConfig, Field, build_grid, enforce_real
from alefsi.coupler import equilibrium_pressure_profile
from alefsi.solid_wave import (SolidOperatorParams, SolidState, clamped_midpoint_step, elastic_form,
                               equilibrium_displacement, modal_stiffness, solid_energy, solid_traction, wave_apply)


def _cfg(**kw):
    base = dict(L=1.0, h=2.0, h_s=1.0, lam=10.0, g=1.0, M=2, Ns=6, Nf=4)
    base.update(kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return DomainConfig(**base)


@pytest.mark.parametrize("h_e", [1.0, 0.95, 1.04])
def test_equilibrium_balances_gravity(h_e):
    cfg = _cfg(h_e=h_e)
    st_ = equilibrium_displacement(cfg)
    p = SolidOperatorParams.from_config(cfg)
    out = wave_apply(st_.eta, p)
    g = st_.eta.grid
    assert np.allclose(out.coeffs[g.M, g.M, :, 2], cfg.g, atol=1e-11)
    out.coeffs[g.M, g.M, :, 2] = 0.0
    assert np.max(np.abs(out.coeffs)) < 1e-13
    assert np.all(st_.v.coeffs == 0)


@pytest.mark.parametrize("h_e", [1.0, 0.95])
def test_equilibrium_traction_matches_fluid_pressure(h_e):
    cfg = _cfg(h_e=h_e)
    st_ = equilibrium_displacement(cfg)
    t = solid_traction(st_, SolidOperatorParams.from_config(cfg))
    g = st_.eta.grid
    expected = -0.5 * cfg.g * cfg.h_s + cfg.lam * (cfg.h_s - cfg.h_e) / cfg.h_s
    assert t.coeffs[g.M, g.M, 2].real == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(equilibrium_pressure_profile(cfg, np.array([cfg.h_e]))[0])


def test_traction_of_linear_displacement():
    cfg = _cfg(h_e=0.9, g=0.0)
    g = build_grid(cfg)
    eta = Field.from_function(g, "solid", lambda x1, x2, z: np.stack(np.broadcast_arrays(0.1 * z, 0 * z, -0.2 * z), -1))
    t = solid_traction(SolidState(eta, Field.zeros(g, "solid")), SolidOperatorParams.from_config(cfg))
    ratio = cfg.h_e / cfg.h_s
    assert np.allclose(t.coeffs[g.M, g.M], [-cfg.lam * ratio * 0.1, 0.0, cfg.lam * ratio * 0.2 + cfg.traction_offset])


def test_eigenfunction_converges():
    errs = []
    for ns in (4, 8, 16):
        cfg = _cfg(Ns=ns, g=0.0)
        g = build_grid(cfg)
        eta = Field.from_function(g, "solid", lambda x1, x2, z: np.stack(np.broadcast_arrays(
            0 * z, 0 * z, np.cos(2 * np.pi * x1) * np.sin(np.pi * z)), -1))
        p = SolidOperatorParams.from_config(cfg)
        lam_n = 4 * math.pi**2 + math.pi**2
        out = wave_apply(eta, p)
        interior = slice(1, -1)
        errs.append(np.max(np.abs(out.coeffs[:, :, interior] + cfg.lam * lam_n * eta.coeffs[:, :, interior])))
    assert errs[0] > errs[1] > errs[2]
    assert math.log2(errs[1] / errs[2]) > 1.5


def test_energy_of_simple_states():
    cfg = _cfg(L=1.5)
    g = build_grid(cfg)
    c = 0.01
    eta = Field.zeros(g, "solid")
    eta.coeffs[g.M, g.M, :, 2] = c * g.solid.nodes
    v = Field.zeros(g, "solid")
    v.coeffs[g.M, g.M, :, 0] = 0.3
    kin, el, grav = solid_energy(SolidState(eta, v), SolidOperatorParams.from_config(cfg))
    area = cfg.L**2
    assert kin == pytest.approx(0.5 * 0.09 * cfg.h_e * area)
    assert el == pytest.approx(0.5 * cfg.lam * c**2 * cfg.h_e * area)
    assert grav == pytest.approx(cfg.g * area * c * cfg.h_e**2 / 2)


def test_modal_stiffness_symmetric_positive():
    cfg = _cfg(h_e=0.95)
    g = build_grid(cfg)
    K = modal_stiffness(g, SolidOperatorParams.from_config(cfg))
    assert np.allclose(K, np.swapaxes(K, -1, -2))
    eig = np.linalg.eigvalsh(K)
    # mode zero has the constant as kernel; all other modes are positive definite
    assert np.all(eig[g.lam > 0] > 0)
    assert abs(eig[g.M, g.M, 0]) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_elastic_form_self_adjoint(seed):
    cfg = _cfg(h_e=0.97, g=0.0)
    g = build_grid(cfg)
    rng = np.random.default_rng(seed)
    shape = (g.nm, g.nm, g.n_solid, 3)
    u = Field(g, "solid", enforce_real(rng.standard_normal(shape) + 1j * rng.standard_normal(shape)))
    w = Field(g, "solid", enforce_real(rng.standard_normal(shape) + 1j * rng.standard_normal(shape)))
    p = SolidOperatorParams.from_config(cfg)
    a = np.vdot(u.coeffs, elastic_form(w, p))
    b = np.vdot(elastic_form(u, p), w.coeffs)
    assert a == pytest.approx(b, rel=1e-12)
    assert np.vdot(u.coeffs, elastic_form(u, p)).real >= 0


def test_clamped_step_conserves_energy():
    cfg = _cfg(g=0.0, Ns=6)
    g = build_grid(cfg)
    rng = np.random.default_rng(1)
    shape = (g.nm, g.nm, g.n_solid, 3)
    eta = enforce_real(1e-3 * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)))
    v = enforce_real(1e-3 * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)))
    eta[:, :, [0, -1]] = 0.0
    v[:, :, [0, -1]] = 0.0
    s = SolidState(Field(g, "solid", eta), Field(g, "solid", v))
    p = SolidOperatorParams.from_config(cfg)
    E0 = sum(solid_energy(s, p)[:2])
    for _ in range(1000):
        s = clamped_midpoint_step(s, 0.01, p)
    E1 = sum(solid_energy(s, p)[:2])
    assert abs(E1 - E0) <= 1e-12 * E0
    assert np.all(s.eta.coeffs[:, :, [0, -1]] == 0)


def test_solid_state_checks_slab():
    g = build_grid(_cfg())
    with pytest.raises(ValueError):
        SolidState(Field.zeros(g, "fluid"), Field.zeros(g, "solid"))
