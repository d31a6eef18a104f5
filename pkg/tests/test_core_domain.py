import itertools
import math
import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from alefsi.core_domain import (DomainConfig, Field, TraceField, build_grid, enforce_real, fractional_norm,
                                horizontal_average, horizontal_derivative, is_real, l2_inner, real_basis_function,
                                sobolev_norm, trace_from_mode, vertical_derivative)


def _random_real(grid, shape, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return scale * enforce_real(c)


# -- configuration ----------------------------------------------------------------

def test_default_dt_and_reference_height():
    cfg = DomainConfig(lam=4.0, h_s=1.0)
    assert cfg.h_e == 1.0
    assert cfg.dt == pytest.approx(0.01 * 1.0 / 2.0)
    assert cfg.traction_offset == 0.0
    assert cfg.stiffness_scale == 1.0


def test_h_shift_constants():
    cfg = DomainConfig(h_s=1.0, h_e=0.95, lam=10.0)
    assert cfg.stiffness_scale == pytest.approx(0.9025)
    assert cfg.solid_weight == pytest.approx(1 / 0.95)
    assert cfg.traction_offset == pytest.approx(10.0 * 0.05)


@pytest.mark.parametrize("kw", [dict(h_s=2.5, h=2.0), dict(lam=-1.0), dict(M=0), dict(nu=0.0), dict(g=-1.0),
                                dict(Ns=2.5), dict(n_gauss=2), dict(h_e=2.0), dict(L=0.0)])
def test_invalid_config_rejected(kw):
    with pytest.raises(ValueError):
        DomainConfig(**kw)


def test_stiff_regime_warning():
    with pytest.warns(UserWarning, match="lambda/g"):
        DomainConfig(lam=2.0, g=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        DomainConfig(lam=10.0, g=1.0)


# -- grid ---------------------------------------------------------------------------

def test_build_grid_mode_list():
    g = build_grid(DomainConfig(L=1.0, M=2, Ns=4, Nf=4))
    assert g.nm == 5
    assert len(g.modes) == 25
    assert g.n_quad == 8
    m = g.modes[g.mode_index(1, 0)[0] * g.nm + g.mode_index(1, 0)[1]]
    assert m.k == (1, 0)
    assert m.eigenvalue == pytest.approx(4 * math.pi**2)
    assert g.lam[g.M, g.M] == 0.0
    with pytest.raises(IndexError):
        g.mode_index(3, 0)


def test_build_grid_other_length():
    g = build_grid(DomainConfig(L=2 * math.pi, M=4, Ns=4, Nf=4))
    assert g.n_quad == 14
    i = g.mode_index(3, 4)
    assert g.lam[i] == pytest.approx(25.0)


def test_vertical_nodes_and_channel_layout(small_grid):
    g = small_grid
    z = g.nodes("channel")
    assert len(z) == g.n_channel == g.n_solid + g.n_fluid - 1
    assert z[0] == 0.0 and z[-1] == pytest.approx(g.config.h)
    assert z[g.n_solid - 1] == pytest.approx(g.config.h_e)
    assert np.allclose(z[g.fluid_slice], g.fluid.nodes)
    assert len(g.nodes("fluid", 1)) == g.config.Nf + 1


def test_real_basis_orthonormal():
    g = build_grid(DomainConfig(L=1.7, M=3, Ns=2, Nf=2))
    X1, X2 = g.horizontal_mesh()
    fns = [real_basis_function(g, k, kind) for k, kind in [((0, 0), "cc"), ((1, 0), "cc"), ((1, 0), "sc"),
                                                              ((1, 2), "cs"), ((2, 1), "ss"), ((3, 3), "cc")]]
    vals = np.stack([f(X1, X2) for f in fns])
    gram = g.area * np.einsum("iab,jab->ij", vals, vals) / g.n_quad**2
    assert np.allclose(gram, np.eye(len(fns)), atol=1e-13)
    with pytest.raises(ValueError):
        real_basis_function(g, (0, 1), "sc")


def test_spectral_round_trip(small_grid):
    g = small_grid
    c = _random_real(g, (g.nm, g.nm, 3), 0)
    back = g.to_spectral(g.to_physical(c))
    assert np.allclose(back, c, atol=1e-14)
    assert is_real(c)


# -- operators ------------------------------------------------------------------------

def test_horizontal_derivative_of_sine():
    g = build_grid(DomainConfig(L=1.0, M=2, Ns=2, Nf=2))
    tr = TraceField.from_function(g, lambda x1, x2: np.sin(2 * np.pi * x1) * np.cos(4 * np.pi * x2))
    X1, X2 = g.horizontal_mesh()
    d1 = horizontal_derivative(tr, 1).values()[..., 0]
    d2 = horizontal_derivative(tr, 2).values()[..., 0]
    assert np.allclose(d1, 2 * np.pi * np.cos(2 * np.pi * X1) * np.cos(4 * np.pi * X2), atol=1e-12)
    assert np.allclose(d2, -4 * np.pi * np.sin(2 * np.pi * X1) * np.sin(4 * np.pi * X2), atol=1e-12)
    with pytest.raises(ValueError):
        horizontal_derivative(tr, 3)


def test_horizontal_average_of_constant_and_mode(small_grid):
    g = small_grid
    f = Field.from_function(g, "fluid", lambda x1, x2, z: (2.0 + np.cos(2 * np.pi * x1)) * z, ncomp=1)
    assert np.allclose(horizontal_average(f), 2.0 * g.fluid.nodes, atol=1e-14)


def test_vertical_derivative_exact_for_quadratics(small_grid):
    g = small_grid
    f = Field.from_function(g, "channel", lambda x1, x2, z: np.sin(2 * np.pi * x2) * (z**2 - 3 * z), ncomp=1)
    d = vertical_derivative(f)
    exact = Field.from_function(g, "channel", lambda x1, x2, z: np.sin(2 * np.pi * x2) * (2 * z - 3), ncomp=1)
    assert np.allclose(d.coeffs, exact.coeffs, atol=1e-12)


# -- norms ------------------------------------------------------------------------------

@pytest.mark.parametrize("k,kind", [((1, 0), "cc"), ((0, 1), "cs"), ((2, 1), "ss"), ((1, 2), "sc")])
@pytest.mark.parametrize("s", [0.0, 0.5, 1.0, 1.5, 2.5])
def test_fractional_norm_of_basis_function(k, kind, s):
    g = build_grid(DomainConfig(L=1.3, M=2, Ns=2, Nf=2))
    lam_n = (2 * math.pi / g.L) ** 2 * (k[0] ** 2 + k[1] ** 2)
    assert fractional_norm(trace_from_mode(g, k, kind), s) == pytest.approx(lam_n ** (s / 2), rel=1e-13)


def test_fractional_norm_of_constant():
    g = build_grid(DomainConfig(L=1.0, M=2, Ns=2, Nf=2))
    tr = TraceField.from_function(g, lambda x1, x2: 3.0 + 0 * x1)
    for s in (0.0, 1.5, 2.5):
        assert fractional_norm(tr, s) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        fractional_norm(tr, -1.0)


def _sympy_sobolev_sq(expr, k, L, a, b):
    x1, x2, z = sp.symbols("x1 x2 z", real=True)
    total = 0
    for a1, a2, a3 in itertools.product(range(k + 1), repeat=3):
        if a1 + a2 + a3 > k:
            continue
        d = sp.diff(expr(x1, x2, z), x1, a1, x2, a2, z, a3) if (a1 + a2 + a3) else expr(x1, x2, z)
        total += sp.integrate(d**2, (x1, 0, L), (x2, 0, L), (z, a, b))
    return float(total)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_sobolev_norm_against_symbolic_integral(k):
    cfg = DomainConfig(L=1.0, M=2, Ns=3, Nf=3)
    g = build_grid(cfg)

    def sym(x1, x2, z):
        return sp.sin(2 * sp.pi * x1) * sp.cos(2 * sp.pi * x2) * (z**2 - z) + sp.Rational(1, 2) * z**2

    f = Field.from_function(g, "fluid", lambda x1, x2, z: np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * x2) * (z**2 - z)
                            + 0.5 * z**2, ncomp=1)
    exact = math.sqrt(_sympy_sobolev_sq(sym, k, 1, cfg.h_e, cfg.h))
    assert sobolev_norm(f, k) == pytest.approx(exact, rel=1e-12)


def test_sobolev_norm_channel_splits(small_grid):
    g = small_grid
    f = Field(g, "channel", _random_real(g, (g.nm, g.nm, g.n_channel, 3), 4))
    for k in (0, 2):
        assert sobolev_norm(f, k) == pytest.approx(math.hypot(sobolev_norm(f.restrict("solid"), k),
                                                              sobolev_norm(f.restrict("fluid"), k)))
    with pytest.raises(ValueError):
        sobolev_norm(f, 4)


def test_l2_inner_matches_norm(small_grid):
    g = small_grid
    f = Field(g, "solid", _random_real(g, (g.nm, g.nm, g.n_solid, 2), 9))
    assert l2_inner(f, f) == pytest.approx(sobolev_norm(f, 0) ** 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_parseval_on_unit_cell(seed):
    g = build_grid(DomainConfig(L=1.0, M=2, Ns=2, Nf=2))
    c = _random_real(g, (g.nm, g.nm, 2), seed)
    tr = TraceField(g, c)
    vals = tr.values()
    # unit cell: the L^2 norm squared is the grid mean of the squared values
    assert fractional_norm(tr, 0.0) ** 2 == pytest.approx(float(np.mean(np.sum(vals**2, axis=-1))), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_norms_translation_invariant(seed, a1, a2):
    g = build_grid(DomainConfig(L=1.0, M=2, Ns=2, Nf=2))
    c = _random_real(g, (g.nm, g.nm, g.n_fluid, 3), seed)
    phase = np.exp(1j * (g.K1 * a1 + g.K2 * a2))
    f = Field(g, "fluid", c)
    fs = Field(g, "fluid", c * phase[:, :, None, None])
    for k in (0, 1, 2, 3):
        assert sobolev_norm(fs, k) == pytest.approx(sobolev_norm(f, k), rel=1e-12)
    tr = f.trace()
    trs = fs.trace()
    for s in (0.5, 1.5, 2.5):
        assert fractional_norm(trs, s) == pytest.approx(fractional_norm(tr, s), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_average_commutes_with_vertical_derivative(seed):
    g = build_grid(DomainConfig(L=1.0, M=2, Ns=3, Nf=3))
    f = Field(g, "solid", _random_real(g, (g.nm, g.nm, g.n_solid, 3), seed))
    lhs = horizontal_average(vertical_derivative(f))
    rhs = g.solid.nodal_derivative @ horizontal_average(f)
    assert np.max(np.abs(lhs - rhs)) < 1e-13


def test_field_shape_checks(small_grid):
    g = small_grid
    with pytest.raises(ValueError):
        Field(g, "fluid", np.zeros((g.nm, g.nm, 3, 1)))
    with pytest.raises(ValueError):
        Field(g, "air", np.zeros((g.nm, g.nm, g.n_fluid, 1)))
    with pytest.raises(ValueError):
        Field.zeros(g, "solid").restrict("fluid")
