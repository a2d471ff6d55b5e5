"""Grids, finite-difference stencils, field containers and gauge-invariant
diagnostics for the (2+1)-dimensional Abelian-Higgs model.

Conventions
-----------
Metric signature (+,-,-).  The gauge potential is stored by its lower
components ``A_mu = (a0, a1, a2)`` and the covariant derivative is
``D_mu = d_mu - i A_mu``.  Array axis 0 is x1, axis 1 is x2, and the grid is
origin-centred.

Two kinds of spatial derivative live here:

* ``fd_d1`` / ``fd_d2`` act on arrays carrying two ghost layers per side and
  return values on the interior.  The time stepper uses these.
* ``d1_edge`` works on plain interior arrays and switches to one-sided
  fourth-order stencils on the two outermost nodes.  Diagnostics use this so
  that energies and fluxes do not depend on how ghosts were filled.

The Higgs covariant derivative used by the diagnostics is built from line
transporters, ``D_i Phi = exp(iP) d_i(exp(-iP) Phi)`` with ``P`` the
cumulative integral of ``A_i`` along the axis.  This makes energies exactly
gauge invariant for any gauge function whose gradient the quadrature
integrates exactly (polynomials up to degree four).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "GridSpec",
    "ModelParams",
    "FieldState",
    "fd_d1",
    "fd_d2",
    "d1_edge",
    "transport_phase",
    "covariant_derivative",
    "trapezoid",
    "energy_density",
    "potential_density",
    "total_energy",
    "potential_energy",
    "kinetic_energy",
    "magnetic_field",
    "magnetic_flux",
    "degree",
    "lorenz_residual",
    "gauge_transform",
    "write_vxl1",
    "read_vxl1",
    "write_plane_csv",
    "write_plane_pgm",
    "FIELD_NAMES",
]

GHOST = 2
FIELD_NAMES = ("phi1", "phi2", "a0", "a1", "a2", "dphi1", "dphi2", "da0", "da1", "da2")
VXL1_MAGIC = b"VXL1"


@dataclass(frozen=True)
class GridSpec:
    """Uniform, origin-centred 2D lattice."""

    n1: int
    n2: int
    h: float

    def __post_init__(self):
        if self.n1 < 9 or self.n2 < 9:
            raise ValueError(f"grid needs at least 9 sites per axis, got {self.n1}x{self.n2}")
        if not self.h > 0:
            raise ValueError(f"lattice spacing must be positive, got {self.h}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def half_widths(self) -> tuple[float, float]:
        return (0.5 * (self.n1 - 1) * self.h, 0.5 * (self.n2 - 1) * self.h)

    @property
    def x1(self) -> np.ndarray:
        return (np.arange(self.n1) - 0.5 * (self.n1 - 1)) * self.h

    @property
    def x2(self) -> np.ndarray:
        return (np.arange(self.n2) - 0.5 * (self.n2 - 1)) * self.h

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


@dataclass(frozen=True)
class ModelParams:
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")


@dataclass
class FieldState:
    """Higgs field, gauge potential and their first time derivatives on a grid."""

    grid: GridSpec
    phi1: np.ndarray
    phi2: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    dphi1: np.ndarray
    dphi2: np.ndarray
    da0: np.ndarray
    da1: np.ndarray
    da2: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in FIELD_NAMES:
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != self.grid.shape:
                raise ValueError(f"{name} has shape {arr.shape}, grid is {self.grid.shape}")
            setattr(self, name, arr)

    @classmethod
    def vacuum(cls, grid: GridSpec) -> FieldState:
        arrays = {name: grid.zeros() for name in FIELD_NAMES}
        arrays["phi1"] = np.ones(grid.shape)
        return cls(grid=grid, **arrays)

    @classmethod
    def from_stack(cls, grid: GridSpec, fields: np.ndarray, velocities: np.ndarray, t: float = 0.0) -> FieldState:
        """Build from (5, n1, n2) stacks ordered (phi1, phi2, a0, a1, a2)."""
        names = FIELD_NAMES
        kw = {names[k]: fields[k] for k in range(5)}
        kw.update({names[5 + k]: velocities[k] for k in range(5)})
        return cls(grid=grid, t=t, **kw)

    @property
    def fields(self) -> np.ndarray:
        return np.stack([self.phi1, self.phi2, self.a0, self.a1, self.a2])

    @property
    def velocities(self) -> np.ndarray:
        return np.stack([self.dphi1, self.dphi2, self.da0, self.da1, self.da2])

    @property
    def phi(self) -> np.ndarray:
        return self.phi1 + 1j * self.phi2

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in FIELD_NAMES]

    def copy(self) -> FieldState:
        return replace(self, **{name: getattr(self, name).copy() for name in FIELD_NAMES})

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


# ---------------------------------------------------------------------------
# stencils
# ---------------------------------------------------------------------------

def _check_stencil(field: np.ndarray, axis: int) -> None:
    if field.shape[axis] < 2 * GHOST + 5:
        raise ValueError(
            f"axis {axis} has {field.shape[axis]} points; a 4th-order stencil with "
            f"{GHOST} ghost layers needs at least {2 * GHOST + 5}"
        )


def _interior(field: np.ndarray, skip_axis: int) -> tuple:
    return tuple(
        slice(None) if ax == skip_axis else slice(GHOST, -GHOST) for ax in range(field.ndim)
    )


def _shifted(field: np.ndarray, axis: int, k: int) -> np.ndarray:
    n = field.shape[axis]
    sl = [slice(GHOST, -GHOST)] * field.ndim
    sl[axis] = slice(GHOST + k, n - GHOST + k)
    return field[tuple(sl)]


def fd_d1(field: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Fourth-order central first derivative.

    ``field`` carries ``GHOST`` ghost layers on every side of every axis; the
    result has the interior shape.
    """
    _check_stencil(field, axis)
    s = lambda k: _shifted(field, axis, k)  # noqa: E731
    return (-s(2) + 8.0 * s(1) - 8.0 * s(-1) + s(-2)) / (12.0 * h)


def fd_d2(field: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Fourth-order central second derivative, same ghost convention as fd_d1."""
    _check_stencil(field, axis)
    s = lambda k: _shifted(field, axis, k)  # noqa: E731
    return (-s(2) + 16.0 * s(1) - 30.0 * s(0) + 16.0 * s(-1) - s(-2)) / (12.0 * h * h)


def d1_edge(field: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Fourth-order first derivative without ghosts.

    Central in the bulk, one-sided on the two outermost nodes of each end.
    """
    f = np.moveaxis(np.asarray(field), axis, 0)
    n = f.shape[0]
    if n < 5:
        raise ValueError(f"need at least 5 points along axis {axis}, got {n}")
    out = np.empty_like(f, dtype=np.result_type(f, np.float64))
    out[2:-2] = (-f[4:] + 8.0 * f[3:-1] - 8.0 * f[1:-3] + f[:-4]) / 12.0
    out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / 12.0
    out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / 12.0
    out[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / 12.0
    out[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) / 12.0
    return np.moveaxis(out / h, 0, axis)


def transport_phase(a: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Cumulative line integral of ``a`` along ``axis``, zero at the first node.

    Cell integrals use cubic interpolation (exact for cubic ``a``).
    """
    f = np.moveaxis(np.asarray(a, dtype=np.float64), axis, 0)
    n = f.shape[0]
    if n < 4:
        raise ValueError("need at least 4 points for the transport quadrature")
    cells = np.empty((n - 1,) + f.shape[1:])
    cells[1:-1] = -f[:-3] + 13.0 * f[1:-2] + 13.0 * f[2:-1] - f[3:]
    cells[0] = 9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]
    cells[-1] = f[-4] - 5.0 * f[-3] + 19.0 * f[-2] + 9.0 * f[-1]
    phase = np.zeros_like(f)
    np.cumsum(cells * (h / 24.0), axis=0, out=phase[1:])
    return np.moveaxis(phase, 0, axis)


def covariant_derivative(phi: np.ndarray, a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Gauge-covariant ``D_i Phi = (d_i - i A_i) Phi`` built from transporters."""
    p = transport_phase(a, h, axis)
    u = np.exp(1j * p)
    return u * d1_edge(np.conj(u) * phi, h, axis)


def trapezoid(density: np.ndarray, h: float) -> float:
    """Trapezoid rule over the whole grid (half weights on the boundary ring)."""
    w1 = np.ones(density.shape[0])
    w1[[0, -1]] = 0.5
    w2 = np.ones(density.shape[1])
    w2[[0, -1]] = 0.5
    return float(h * h * (w1 @ density @ w2))


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def magnetic_field(state: FieldState) -> np.ndarray:
    h = state.grid.h
    return d1_edge(state.a2, h, 0) - d1_edge(state.a1, h, 1)


def potential_density(state: FieldState, params: ModelParams = ModelParams()) -> np.ndarray:
    h = state.grid.h
    phi = state.phi
    d1 = covariant_derivative(phi, state.a1, h, 0)
    d2 = covariant_derivative(phi, state.a2, h, 1)
    b = magnetic_field(state)
    mod2 = phi.real**2 + phi.imag**2
    return 0.5 * (
        np.abs(d1) ** 2 + np.abs(d2) ** 2 + b * b + 0.25 * params.lam * (1.0 - mod2) ** 2
    )


def kinetic_density(state: FieldState) -> np.ndarray:
    h = state.grid.h
    d0 = (state.dphi1 + 1j * state.dphi2) - 1j * state.a0 * state.phi
    e1 = state.da1 - d1_edge(state.a0, h, 0)
    e2 = state.da2 - d1_edge(state.a0, h, 1)
    return 0.5 * (np.abs(d0) ** 2 + e1 * e1 + e2 * e2)


def energy_density(state: FieldState, params: ModelParams = ModelParams()) -> np.ndarray:
    return potential_density(state, params) + kinetic_density(state)


def potential_energy(state: FieldState, params: ModelParams = ModelParams()) -> float:
    """Static energy of (Phi, A_i): gradient, magnetic and potential terms."""
    return trapezoid(potential_density(state, params), state.grid.h)


def kinetic_energy(state: FieldState) -> float:
    return trapezoid(kinetic_density(state), state.grid.h)


def total_energy(state: FieldState, params: ModelParams = ModelParams()) -> float:
    return trapezoid(energy_density(state, params), state.grid.h)


def magnetic_flux(state: FieldState) -> float:
    """Integral of f_12 over the grid; a degree-N vortex carries -2 pi N."""
    return trapezoid(magnetic_field(state), state.grid.h)


def degree(state: FieldState) -> float:
    return -magnetic_flux(state) / (2.0 * np.pi)


def lorenz_residual(state: FieldState) -> np.ndarray:
    """Pointwise d_mu A^mu = d_t A_0 - d_1 A_1 - d_2 A_2 (lower components stored)."""
    h = state.grid.h
    return state.da0 - d1_edge(state.a1, h, 0) - d1_edge(state.a2, h, 1)


def gauge_transform(
    state: FieldState,
    alpha: np.ndarray,
    alpha_t: np.ndarray | None = None,
    alpha_tt: np.ndarray | None = None,
) -> FieldState:
    """Apply Phi -> exp(i alpha) Phi, A_mu -> A_mu + d_mu alpha.

    ``alpha`` is sampled on the grid; ``alpha_t`` and ``alpha_tt`` are its first
    and second time derivatives (zero when omitted).  Spatial gradients use
    ``d1_edge``, the same operator as the diagnostics.
    """
    grid = state.grid
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != grid.shape:
        raise ValueError(f"alpha has shape {alpha.shape}, grid is {grid.shape}")
    if not np.isfinite(alpha).all():
        raise ValueError("alpha must be finite")
    at = np.zeros(grid.shape) if alpha_t is None else np.asarray(alpha_t, dtype=np.float64)
    att = np.zeros(grid.shape) if alpha_tt is None else np.asarray(alpha_tt, dtype=np.float64)
    h = grid.h

    rot = np.exp(1j * alpha)
    phi = rot * state.phi
    dphi = rot * ((state.dphi1 + 1j * state.dphi2) + 1j * at * state.phi)
    return FieldState(
        grid=grid,
        t=state.t,
        phi1=phi.real,
        phi2=phi.imag,
        a0=state.a0 + at,
        a1=state.a1 + d1_edge(alpha, h, 0),
        a2=state.a2 + d1_edge(alpha, h, 1),
        dphi1=dphi.real,
        dphi2=dphi.imag,
        da0=state.da0 + att,
        da1=state.da1 + d1_edge(at, h, 0),
        da2=state.da2 + d1_edge(at, h, 1),
    )


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def write_vxl1(state: FieldState, path: str | Path) -> None:
    """Binary grid dump: magic, n1, n2 (int64 LE), h, t (float64 LE), ten planes."""
    g = state.grid
    with open(path, "wb") as fh:
        fh.write(VXL1_MAGIC)
        fh.write(struct.pack("<qqdd", g.n1, g.n2, g.h, state.t))
        for arr in state.arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes(order="C"))


def read_vxl1(path: str | Path) -> FieldState:
    data = Path(path).read_bytes()
    if data[:4] != VXL1_MAGIC:
        raise ValueError(f"{path}: not a VXL1 record")
    n1, n2, h, t = struct.unpack("<qqdd", data[4:36])
    plane = n1 * n2 * 8
    expected = 36 + 10 * plane
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    planes = np.frombuffer(data[36:], dtype="<f8").reshape(10, n1, n2)
    grid = GridSpec(int(n1), int(n2), float(h))
    return FieldState(grid=grid, t=float(t), **{n: planes[k].copy() for k, n in enumerate(FIELD_NAMES)})


def _plane(state: FieldState, name: str, params: ModelParams = ModelParams()) -> np.ndarray:
    if name == "energy_density":
        return energy_density(state, params)
    if name not in FIELD_NAMES:
        raise ValueError(f"unknown plane {name!r}")
    return getattr(state, name)


def write_plane_csv(state: FieldState, name: str, path: str | Path, params: ModelParams = ModelParams()) -> None:
    """One plane (a field or ``energy_density``) as CSV rows ``x1, x2, value``."""
    values = _plane(state, name, params)
    x1, x2 = state.grid.mesh()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", name])
        for a, b, c in zip(x1.ravel(), x2.ravel(), values.ravel()):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(c))])


def write_plane_pgm(state: FieldState, name: str, path: str | Path, params: ModelParams = ModelParams()) -> None:
    """8-bit binary PGM of one plane, linearly scaled to its range; x2 increases upwards."""
    values = _plane(state, name, params)
    lo, hi = float(values.min()), float(values.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img = np.round((values - lo) * scale).astype(np.uint8).T[::-1]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())
