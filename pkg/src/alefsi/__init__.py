"""Fluid / linear-wave interaction in a periodic channel, ALE representation.

The package is organised bottom-up:

* :mod:`alefsi.core_domain` -- geometry, Fourier x P2 fields, norms
* :mod:`alefsi.stokes_extension` -- Stokes extension of the interface trace
* :mod:`alefsi.kinematics` -- gradient / cofactor / Jacobian of the ALE map
* :mod:`alefsi.solid_wave` -- elastic phase operators
* :mod:`alefsi.fluid_ale` -- fluid phase operators in ALE variables
* :mod:`alefsi.coupler` -- monolithic implicit-midpoint time stepping
* :mod:`alefsi.diagnostics` -- energy functionals and conservation checks
* :mod:`alefsi.asymptotics` -- flat-interface solutions and convergence report
* :mod:`alefsi.scenario` -- scenario files, initial data, run loop
* :mod:`alefsi.snapshots` -- binary field snapshots
* :mod:`alefsi.verification` -- acceptance checks grouped in suites
* :mod:`alefsi.plotting` -- figures of a run
* :mod:`alefsi.cli` -- command line entry point
"""

from alefsi.core_domain import DomainConfig, Field, TraceField, Grid, build_grid

__version__ = "0.1.0"

__all__ = ["DomainConfig", "Field", "TraceField", "Grid", "build_grid", "__version__"]
