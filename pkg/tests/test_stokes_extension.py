import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alefsi.core_domain import (DomainConfig, TraceField, build_grid, enforce_real, horizontal_derivative,
                                quadrature_values, trace_from_mode)
from alefsi.fluid_ale import test_against_pressure as pressure_test
from alefsi.stokes_extension import divergence_values, extend, extend_velocity
from alefsi.verification import stokes_mode_oracle


def _grid(M=2, Nf=8, L=1.0):
    return build_grid(DomainConfig(L=L, M=M, Ns=4, Nf=Nf))


def _random_trace(g, seed, scale=1e-2):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((g.nm, g.nm, 3)) + 1j * rng.standard_normal((g.nm, g.nm, 3))
    return TraceField(g, scale * enforce_real(c))


def closed_form_mode(kappa, h_e, h):
    """``W = U3`` for trace ``(0, 0, 1)``: combination of ``cosh, sinh, z cosh, z sinh`` fixed by four conditions."""
    H = h - h_e

    def basis(s):
        c, sh = np.cosh(kappa * s), np.sinh(kappa * s)
        val = np.array([c, sh, s * c, s * sh])
        der = np.array([kappa * sh, kappa * c, c + kappa * s * sh, sh + kappa * s * c])
        dd = np.array([kappa**2 * c, kappa**2 * sh, 2 * kappa * sh + kappa**2 * s * c,
                       2 * kappa * c + kappa**2 * s * sh])
        return val, der, dd

    v0, d0, _ = basis(0.0)
    vH, dH, _ = basis(H)
    coef = np.linalg.solve(np.array([v0, d0, vH, dH]), np.array([1.0, 0.0, 0.0, 0.0]))

    def profile(z):
        val, der, dd = basis(np.asarray(z) - h_e)
        W, Wp, Wpp = coef @ val, coef @ der, coef @ dd
        return 1j * Wp / kappa, W, 1j * Wpp / kappa, Wp

    return profile


def test_zero_trace_gives_zero():
    g = _grid()
    res = extend(TraceField.zeros(g), g)
    assert np.all(res.eta_tilde.coeffs == 0)
    assert res.mean_flux == 0.0


def test_boundary_values():
    g = _grid()
    tr = _random_trace(g, 3)
    et = extend(tr, g).eta_tilde
    assert np.allclose(et.coeffs[:, :, 0], tr.coeffs, atol=1e-15)
    assert np.allclose(et.coeffs[:, :, -1], 0.0, atol=1e-15)


def test_constant_trace_closed_form():
    g = _grid()
    cfg = g.config
    tr = TraceField.zeros(g)
    tr.coeffs[g.M, g.M] = [0.1, -0.2, 0.3]
    res = extend(tr, g)
    prof = (cfg.h - g.fluid.nodes) / (cfg.h - cfg.h_e)
    assert np.allclose(res.eta_tilde.coeffs[g.M, g.M], np.outer(prof, [0.1, -0.2, 0.3]), atol=1e-15)
    assert res.mean_flux == pytest.approx(-0.3 / (cfg.h - cfg.h_e))
    # divergence of the mean part equals the flux constant
    d = divergence_values(res)
    assert np.allclose(d, res.mean_flux, atol=1e-13)


def test_oscillatory_trace_is_discretely_divergence_free():
    g = _grid()
    tr = _random_trace(g, 5)
    tr.coeffs[g.M, g.M] = 0.0
    res = extend(tr, g)
    _, G = quadrature_values(res.eta_tilde)
    div = G[..., 0, 0] + G[..., 1, 1] + G[..., 2, 2]
    assert np.max(np.abs(pressure_test(g, div))) < 1e-15


def test_closed_form_against_collocation_oracle():
    kappa = 2.0
    a = closed_form_mode(kappa, 1.0, 2.0)
    b = stokes_mode_oracle(kappa, 1.0, 2.0)
    z = np.linspace(1.0, 2.0, 41)
    for u, v in zip(a(z), b(z)):
        assert np.max(np.abs(u - v)) < 1e-6


@pytest.mark.parametrize("L", [2 * math.pi, 1.0])
def test_mode_against_closed_form_converges(L):
    kappa = 2 * math.pi / L
    oracle = closed_form_mode(kappa, 1.0, 2.0)
    errs = []
    for nf in (8, 16, 32):
        g = _grid(M=1, Nf=nf, L=L)
        tr = trace_from_mode(g, (1, 0), component=2, ncomp=3)
        ext = extend(tr, g)
        i = g.mode_index(1, 0)
        U = ext.eta_tilde.coeffs[i] / tr.coeffs[i][2]
        o1, o3, _, _ = oracle(g.fluid.zq)
        uq = g.fluid.E @ U
        errs.append(math.sqrt(np.dot(g.fluid.wq, np.abs(uq[:, 0] - o1) ** 2 + np.abs(uq[:, 2] - o3) ** 2)))
    # L^2 error of degree-2 elements: third order
    assert math.log2(errs[0] / errs[1]) > 2.7
    assert math.log2(errs[1] / errs[2]) > 2.7
    if L > 1:
        assert errs[1] < 1e-4


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(s1, s2, a, b):
    g = _grid(Nf=4)
    t1, t2 = _random_trace(g, s1), _random_trace(g, s2)
    lhs = extend(t1 * a + t2 * b, g)
    r1, r2 = extend(t1, g), extend(t2, g)
    assert np.allclose(lhs.eta_tilde.coeffs, a * r1.eta_tilde.coeffs + b * r2.eta_tilde.coeffs, atol=1e-14)
    assert lhs.mean_flux == pytest.approx(a * r1.mean_flux + b * r2.mean_flux, abs=1e-14)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2]))
def test_commutes_with_horizontal_derivative(seed, axis):
    g = _grid(Nf=4)
    tr = _random_trace(g, seed)
    lhs = extend(horizontal_derivative(tr, axis), g).eta_tilde
    rhs = horizontal_derivative(extend(tr, g).eta_tilde, axis)
    assert np.allclose(lhs.coeffs, rhs.coeffs, atol=1e-14)


def test_velocity_extension_is_the_same_map():
    g = _grid()
    tr = _random_trace(g, 11)
    assert np.array_equal(extend_velocity(tr, g).eta_tilde.coeffs, extend(tr, g).eta_tilde.coeffs)


def test_stability_ratio_bounded_under_refinement():
    ratios = []
    for nf in (4, 8, 16):
        g = _grid(Nf=nf)
        tr = _random_trace(g, 2)
        ratios.append(extend(tr, g).stability_ratio())
    assert max(ratios) < 10.0
    assert max(ratios) / min(ratios) < 1.5


def test_rejects_bad_traces():
    g = _grid()
    with pytest.raises(ValueError):
        extend(TraceField.zeros(g, ncomp=1), g)
    bad = TraceField.zeros(g)
    bad.coeffs[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        extend(bad, g)
