"""Binary snapshots of fields and states.

A snapshot file is an ASCII header followed by one little-endian complex128
block::

    ALEFSI-SNAPSHOT 1
    kind=field            (field | trace)
    slab=fluid            (solid | fluid | channel; "-" for traces)
    degree=2
    M=4
    L=1.0
    n_vertical=33         (0 for traces)
    ncomp=3
    t=0.25
    name=v
    END
    <coefficients>

The coefficient block is C-ordered with shape ``(2M+1, 2M+1, n_vertical,
ncomp)`` (``(2M+1, 2M+1, ncomp)`` for traces); index ``k + M`` holds the
wavenumber ``k`` in each horizontal direction.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from alefsi.core_domain import Field, Grid, TraceField

MAGIC = "ALEFSI-SNAPSHOT 1"
_DTYPE = np.dtype("<c16")


def _header(meta: dict) -> bytes:
    lines = [MAGIC] + [f"{k}={v}" for k, v in meta.items()] + ["END"]
    return ("\n".join(lines) + "\n").encode("ascii")


def write_snapshot(path: Union[str, os.PathLike], f: Union[Field, TraceField], t: float = 0.0, name: str = "") -> Path:
    """Write one field or trace; returns the path written."""
    path = Path(path)
    grid = f.grid
    if isinstance(f, TraceField):
        meta = dict(kind="trace", slab="-", degree=0, M=grid.M, L=repr(grid.L), n_vertical=0, ncomp=f.ncomp)
    else:
        meta = dict(kind="field", slab=f.slab, degree=f.degree, M=grid.M, L=repr(grid.L),
                    n_vertical=f.coeffs.shape[2], ncomp=f.ncomp)
    meta.update(t=repr(float(t)), name=name or "-")
    with open(path, "wb") as fh:
        fh.write(_header(meta))
        fh.write(np.ascontiguousarray(f.coeffs, dtype=_DTYPE).tobytes())
    return path


def read_header(fh) -> dict:
    first = fh.readline().decode("ascii").strip()
    if first != MAGIC:
        raise ValueError(f"not a snapshot file (header {first!r})")
    meta = {}
    while True:
        line = fh.readline()
        if not line:
            raise ValueError("truncated snapshot header")
        line = line.decode("ascii").strip()
        if line == "END":
            break
        key, _, value = line.partition("=")
        meta[key] = value
    for key in ("degree", "M", "n_vertical", "ncomp"):
        meta[key] = int(meta[key])
    meta["L"] = float(meta["L"])
    meta["t"] = float(meta["t"])
    return meta


def read_snapshot(path: Union[str, os.PathLike], grid: Optional[Grid] = None):
    """Read a snapshot.

    Returns ``(meta, coeffs)`` without a grid, or ``(meta, field)`` with one;
    the grid must match the stored mode count and vertical size.
    """
    with open(path, "rb") as fh:
        meta = read_header(fh)
        data = np.frombuffer(fh.read(), dtype=_DTYPE)
    nm = 2 * meta["M"] + 1
    if meta["kind"] == "trace":
        shape = (nm, nm, meta["ncomp"])
    else:
        shape = (nm, nm, meta["n_vertical"], meta["ncomp"])
    if data.size != int(np.prod(shape)):
        raise ValueError(f"snapshot {path}: expected {int(np.prod(shape))} coefficients, found {data.size}")
    coeffs = data.reshape(shape).astype(complex)
    if grid is None:
        return meta, coeffs
    if grid.M != meta["M"] or abs(grid.L - meta["L"]) > 1e-12 * grid.L:
        raise ValueError(f"snapshot {path} was written for M={meta['M']}, L={meta['L']}")
    if meta["kind"] == "trace":
        return meta, TraceField(grid, coeffs)
    return meta, Field(grid, meta["slab"], coeffs, meta["degree"])


@dataclass
class StateSnapshot:
    """Coefficient copy of a state (velocity, displacement, pressure)."""

    t: float
    step_index: int
    v: np.ndarray
    eta: np.ndarray
    q: np.ndarray

    @classmethod
    def from_state(cls, state) -> "StateSnapshot":
        return cls(state.t, state.step_index, state.v.coeffs.copy(), state.eta.coeffs.copy(), state.q.coeffs.copy())

    def fields(self, grid: Grid):
        return (Field(grid, "channel", self.v), Field(grid, "solid", self.eta), Field(grid, "fluid", self.q, degree=1))


def write_state(directory: Union[str, os.PathLike], snap: StateSnapshot, grid: Grid) -> list:
    """Write ``v``, ``eta`` and ``q`` of a snapshot as three files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    v, eta, q = snap.fields(grid)
    out = []
    for name, f in (("v", v), ("eta", eta), ("q", q)):
        out.append(write_snapshot(directory / f"snap_{snap.step_index:06d}_{name}.bin", f, snap.t, name))
    return out


def read_state(directory: Union[str, os.PathLike], step_index: int, grid: Grid) -> StateSnapshot:
    directory = Path(directory)
    parts = {}
    t = 0.0
    for name in ("v", "eta", "q"):
        meta, f = read_snapshot(directory / f"snap_{step_index:06d}_{name}.bin", grid)
        parts[name] = f.coeffs
        t = meta["t"]
    return StateSnapshot(t, step_index, parts["v"], parts["eta"], parts["q"])
