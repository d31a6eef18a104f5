"""Stokes extension of the interface displacement into the fluid slab.

Given a vector trace ``t`` on the interface, find ``(eta_tilde, f)`` with

    -Lap eta_tilde + grad f = 0,    div eta_tilde = -(1/|fluid|) int_Gamma t^3,
    eta_tilde = t on the interface, eta_tilde = 0 on the top wall.

Each horizontal mode ``k != 0`` is a small Taylor-Hood saddle problem in
``x3``; the divergence constant only lives in mode ``k = 0``, whose solution
is linear in ``x3`` and written down directly.  The operator is linear in
the trace, so the solution for unit data is precomputed once per grid and
applying the extension is a tensor contraction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from alefsi.core_domain import DomainConfig, Field, Grid, TraceField, fractional_norm, horizontal_derivative, sobolev_norm

log = logging.getLogger(__name__)


class SingularExtensionError(RuntimeError):
    """The modal saddle-point matrix is singular (inf-sup failure)."""


@dataclass
class ExtensionResult:
    eta_tilde: Field
    f_multiplier: Field
    mean_flux: float
    trace: Optional[TraceField] = None

    def stability_ratio(self) -> float:
        """``|d_h eta_tilde|_{H^2(fluid)} / |d_h trace|_{H^{3/2}}`` summed over both horizontal directions."""
        if self.trace is None:
            raise ValueError("trace not recorded")
        num = 0.0
        den = 0.0
        for ax in (1, 2):
            num += sobolev_norm(horizontal_derivative(self.eta_tilde, ax), 2) ** 2
            den += fractional_norm(horizontal_derivative(self.trace, ax), 1.5) ** 2
        if den == 0.0:
            return 0.0
        return math.sqrt(num / den)


def _modal_saddle(K1: float, K2: float, sp, pp):
    """Full (all-dof) modal matrices ``A`` (3n x 3n) and ``B`` (m x 3n)."""
    n = sp.ndof
    lam = K1**2 + K2**2
    a = lam * sp.mass + sp.stiffness
    A = np.zeros((3 * n, 3 * n), dtype=complex)
    for c in range(3):
        A[c * n : (c + 1) * n, c * n : (c + 1) * n] = a
    W = sp.wq[:, None]
    Mp = pp.E.T @ (W * sp.E)
    Gp = pp.E.T @ (W * sp.D)
    B = np.concatenate([1j * K1 * Mp, 1j * K2 * Mp, Gp.astype(complex)], axis=1)
    return A, B


class StokesExtension:
    """Precomputed linear map trace -> (eta_tilde, f) on one grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        sp, pp = grid.fluid, grid.fluid_p1
        n, m, nm = sp.ndof, pp.ndof, grid.nm
        self.n, self.m = n, m
        # response[i1, i2, node, comp_out, comp_in] and pressure response
        self.response = np.zeros((nm, nm, n, 3, 3), dtype=complex)
        self.p_response = np.zeros((nm, nm, m, 3), dtype=complex)
        interior = np.arange(1, n - 1)
        free = np.concatenate([c * n + interior for c in range(3)])
        bnd = np.array([0, n, 2 * n])  # interface dof of each component
        M = grid.M
        for i1 in range(nm):
            for i2 in range(nm):
                if i1 == M and i2 == M:
                    continue
                A, B = _modal_saddle(grid.K1[i1, i2], grid.K2[i1, i2], sp, pp)
                nf = len(free)
                S = np.zeros((nf + m, nf + m), dtype=complex)
                S[:nf, :nf] = A[np.ix_(free, free)]
                S[:nf, nf:] = -B[:, free].conj().T
                S[nf:, :nf] = B[:, free]
                rhs = np.zeros((nf + m, 3), dtype=complex)
                rhs[:nf] = -A[np.ix_(free, bnd)]
                rhs[nf:] = -B[:, bnd]
                try:
                    sol = np.linalg.solve(S, rhs)
                except np.linalg.LinAlgError as exc:
                    raise SingularExtensionError(f"singular extension matrix at mode index {(i1, i2)}") from exc
                if not np.all(np.isfinite(sol)):
                    raise SingularExtensionError(f"non-finite extension at mode index {(i1, i2)}")
                full = np.zeros((3 * n, 3), dtype=complex)
                full[free] = sol[:nf]
                full[bnd, [0, 1, 2]] = 1.0
                self.response[i1, i2] = full.reshape(3, n, 3).transpose(1, 0, 2)
                self.p_response[i1, i2] = sol[nf:]
        # mode (0, 0): every component linear from the trace value to 0 at the top
        z = sp.nodes
        prof = (grid.config.h - z) / (grid.config.h - grid.config.h_e)
        for c in range(3):
            self.response[M, M, :, c, c] = prof

    def apply(self, trace: TraceField) -> ExtensionResult:
        if trace.ncomp != 3:
            raise ValueError("extension needs a 3-component trace")
        c = trace.coeffs
        if not np.all(np.isfinite(c)):
            raise ValueError("trace contains NaN or inf")
        g = self.grid
        eta = np.einsum("abzij,abj->abzi", self.response, c)
        p = np.einsum("abzj,abj->abz", self.p_response, c)
        mean3 = c[g.M, g.M, 2].real
        flux = -mean3 / (g.config.h - g.config.h_e)
        return ExtensionResult(
            eta_tilde=Field(g, "fluid", eta),
            f_multiplier=Field(g, "fluid", p[..., None], degree=1),
            mean_flux=float(flux),
            trace=trace,
        )


_CACHE: dict = {}


def extension_operator(grid: Grid) -> StokesExtension:
    """Cached :class:`StokesExtension` for ``grid``."""
    key = id(grid)
    op = _CACHE.get(key)
    if op is None or op.grid is not grid:
        op = StokesExtension(grid)
        _CACHE[key] = op
    return op


def extend(trace: TraceField, grid: Optional[Grid] = None, config: Optional[DomainConfig] = None) -> ExtensionResult:
    """Stokes extension of an interface displacement trace."""
    grid = grid or trace.grid
    res = extension_operator(grid).apply(trace)
    if log.isEnabledFor(logging.DEBUG):
        log.debug("extension stability ratio %.4g", res.stability_ratio())
    return res


def extend_velocity(trace_v: TraceField, grid: Optional[Grid] = None) -> ExtensionResult:
    """Same operator applied to a velocity (or acceleration) trace."""
    return extend(trace_v, grid)


def divergence_values(result: ExtensionResult) -> np.ndarray:
    """Pointwise divergence of ``eta_tilde`` at the fluid quadrature points."""
    g = result.eta_tilde.grid
    sp = g.fluid
    c = result.eta_tilde.coeffs
    ev = np.einsum("qj,abjc->abqc", sp.E, c)
    dz = np.einsum("qj,abj->abq", sp.D, c[..., 2])
    d = 1j * g.K1[:, :, None] * ev[..., 0] + 1j * g.K2[:, :, None] * ev[..., 1] + dz
    return g.to_physical(d)
