import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from alefsi.core_domain import DomainConfig, Field, build_grid, quadrature_values, trace_from_mode
from alefsi.kinematics import (GuardViolation, algebraic_defect, ale_divergence_values, assemble, cofactor,
                               identity_package, inverse_defect, jacobian_identity_check, normal_defect,
                               piola_residual)
from alefsi.stokes_extension import extend
from alefsi.verification import _random_eta_tilde


@pytest.fixture(scope="module")
def grid():
    return build_grid(DomainConfig(L=1.0, M=2, Ns=4, Nf=6))


def _vertical_stretch(grid, c):
    """``eta_tilde^3 = c (x3 - h)``: gradient ``diag(0, 0, c)``."""
    f = Field.zeros(grid, "fluid")
    f.coeffs[grid.M, grid.M, :, 2] = c * (grid.fluid.nodes - grid.config.h)
    return f


def test_zero_displacement_is_identity(grid):
    pkg = assemble(Field.zeros(grid, "fluid"))
    ref = identity_package(grid)
    assert np.allclose(pkg.J, 1.0)
    assert np.allclose(pkg.Ainv, ref.Ainv)
    assert pkg.valid and pkg.ainv_deviation == 0.0


def test_vertical_stretch_closed_form(grid):
    c = 0.004
    pkg = assemble(_vertical_stretch(grid, c))
    assert np.allclose(pkg.J, 1 + c, atol=1e-15)
    assert np.allclose(pkg.Ainv, np.diag([1.0, 1.0, 1 / (1 + c)]), atol=1e-15)
    assert np.allclose(pkg.cof, np.diag([1 + c, 1 + c, 1.0]), atol=1e-15)
    assert pkg.valid
    assert piola_residual(pkg) < 1e-14


def test_guard_flags_large_deformation(grid):
    pkg = assemble(_vertical_stretch(grid, 0.05))
    assert not pkg.valid
    with pytest.raises(GuardViolation, match="kinematic guard"):
        pkg.require_valid()


def test_random_field_identities(grid):
    et = _random_eta_tilde(grid, 1e-2, seed=3)
    pkg = assemble(et)
    assert algebraic_defect(pkg) < 1e-15
    assert inverse_defect(pkg) < 1e-14
    assert normal_defect(pkg) < 1e-15
    assert jacobian_identity_check(et) < 1e-15


def test_piola_residual_shrinks_under_refinement():
    res = []
    for nf in (4, 8, 16):
        g = build_grid(DomainConfig(L=1.0, M=2, Ns=4, Nf=nf))
        ext = extend(trace_from_mode(g, (1, 1), amplitude=1e-2, component=2, ncomp=3), g)
        res.append(piola_residual(assemble(ext.eta_tilde)))
    assert res[0] > res[1] > res[2]
    assert np.log2(res[1] / res[2]) > 1.0


def test_ale_divergence_reduces_to_trace(grid):
    pkg = identity_package(grid)
    rng = np.random.default_rng(0)
    gv = rng.standard_normal(pkg.J.shape + (3, 3))
    assert np.allclose(ale_divergence_values(pkg, gv), np.trace(gv, axis1=-2, axis2=-1))


def test_assemble_rejects_wrong_field(grid):
    with pytest.raises(ValueError):
        assemble(Field.zeros(grid, "solid"))
    with pytest.raises(ValueError):
        assemble(Field.zeros(grid, "fluid", ncomp=1))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-0.3, 0.3)))
def test_cofactor_is_det_times_inverse_transpose(G):
    F = np.eye(3) + G
    expected = np.linalg.det(F) * np.linalg.inv(F).T
    assert np.allclose(cofactor(F[None]), expected[None], atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-0.2, 0.2)))
def test_piola_columns_divergence_free_for_affine_maps(G):
    # constant gradient: every cofactor column is constant, hence divergence free
    F = np.eye(3) + G
    C = cofactor(np.broadcast_to(F, (4, 3, 3)).copy())
    assert np.allclose(C - C[0], 0.0)
    # cofactor rows contract the cross product of the other two columns
    assert np.allclose(C[0][:, 2], np.cross(F[:, 0], F[:, 1]))


def test_quadrature_gradient_of_stretch(grid):
    vals, G = quadrature_values(_vertical_stretch(grid, 0.01))
    assert np.allclose(G[..., 2, 2], 0.01)
    assert np.allclose(G[..., :2, :], 0.0)
