"""Nonlinear evolution in Lorenz gauge.

All five real fields obey wave equations; with the gauge condition
d_t A_0 = d_1 A_1 + d_2 A_2 the Maxwell equations reduce to

    d_tt A_0 = lap A_0 + Im(conj(Phi) d_t Phi) - A_0 |Phi|^2
    d_tt A_i = lap A_i + Im(conj(Phi) d_i Phi) - A_i |Phi|^2

and the Higgs equation D_mu D^mu Phi = (lam/2)(1 - |Phi|^2) Phi is expanded
with every A_0 term kept.  Its i (d_mu A^mu) Phi term vanishes by the gauge
condition and is left out: on the lattice it would only add the mismatch
between the 4th-order Laplacian and the squared 4th-order gradient, which
is a growing mode.  The Lorenz residual is only monitored.

Time stepping is kick-drift-kick.  The velocity-dependent couplings
(A_0 and d_t A_0 in the Higgs equation, the charge density in the A_0
equation) are pointwise linear in the velocities, so the first half kick
treats them implicitly and the second explicitly; without damping this makes
the map exactly reversible under (dphi, da1, da2, a0) -> -(...).
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernels as K_
from .lattice import (
    FIELD_NAMES,
    FieldState,
    GridSpec,
    d1_edge,
    ModelParams,
    kinetic_density,
    lorenz_residual,
    magnetic_flux,
    potential_density,
    trapezoid,
    write_vxl1,
)

__all__ = [
    "EvolutionConfig",
    "RunRecord",
    "Stepper",
    "InstabilityError",
    "eom_rhs",
    "ghost_fill",
    "boundary_residuals",
    "damping_profile",
    "default_damping_alpha",
    "leapfrog_step",
    "evolve",
    "advance",
    "find_zeros",
    "time_reverse",
]

G = K_.G
P1_, P2_, A0_, A1_, A2_ = 0, 1, 2, 3, 4


class InstabilityError(FloatingPointError):
    pass


@dataclass
class EvolutionConfig:
    dt: float | None = None  # None: 0.1 h
    t_end: float = 100.0
    damping_alpha: float | None = None  # None: K = 1e-3 at the inner edge of the layer
    damping_fraction: float = 0.10
    damping: bool = True
    layer_dissipation: float = 0.1  # Kreiss-Oliger strength inside the layer
    snapshot_cadence: int = 0
    diagnostic_cadence: int = 10
    snapshot_dir: str | None = None
    track_zeros: bool = True
    stop_at_layer: bool = True  # end the run once a Higgs zero enters the damping layer

    def resolved_dt(self, grid: GridSpec) -> float:
        dt = 0.1 * grid.h if self.dt is None else float(self.dt)
        if not dt > 0:
            raise ValueError("dt must be positive")
        if dt > 0.5 * grid.h:
            raise ValueError(f"dt={dt} exceeds the CFL guard 0.5 h = {0.5 * grid.h}")
        return dt

    def validate(self, grid: GridSpec) -> None:
        self.resolved_dt(grid)
        if not 0.0 < self.damping_fraction < 0.5:
            raise ValueError("damping_fraction must lie in (0, 0.5)")
        if self.damping_alpha is not None and not self.damping_alpha < 0:
            raise ValueError("damping_alpha must be negative")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if not 0.0 <= self.layer_dissipation <= 0.5:
            raise ValueError("layer_dissipation must lie in [0, 0.5]")
        if self.diagnostic_cadence < 1:
            raise ValueError("diagnostic_cadence must be at least 1")


# ---------------------------------------------------------------------------
# damping layer
# ---------------------------------------------------------------------------

def default_damping_alpha(grid: GridSpec, fraction: float = 0.10, level: float = 1e-3) -> tuple[float, float]:
    """Per-axis alpha giving K = ``level`` at the inner edge of the layer."""
    hx, hy = grid.half_widths
    return math.log(level) / (fraction * hx) ** 2, math.log(level) / (fraction * hy) ** 2


def damping_profile(grid: GridSpec, alpha: float | tuple[float, float] | None = None, fraction: float = 0.10) -> np.ndarray:
    """K = 1 - (1 - exp(a (|x1| - b1)^2)) (1 - exp(a (|x2| - b2)^2)), a < 0."""
    if not 0.0 < fraction < 0.5:
        raise ValueError("fraction must lie in (0, 0.5)")
    if alpha is None:
        a1, a2 = default_damping_alpha(grid, fraction)
    elif np.ndim(alpha) == 0:
        a1 = a2 = float(alpha)
    else:
        a1, a2 = alpha
    if not (a1 < 0 and a2 < 0):
        raise ValueError("damping alpha must be negative")
    b1, b2 = grid.half_widths
    x1, x2 = grid.mesh()
    e1 = np.exp(a1 * (np.abs(x1) - b1) ** 2)
    e2 = np.exp(a2 * (np.abs(x2) - b2) ** 2)
    return 1.0 - (1.0 - e1) * (1.0 - e2)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def _pad(state: FieldState) -> np.ndarray:
    X = np.zeros((5, state.grid.n1 + 2 * G, state.grid.n2 + 2 * G))
    X[:, G:-G, G:-G] = state.fields
    return X


def ghost_fill(state: FieldState) -> np.ndarray:
    """Padded (5, n1+4, n2+4) field stack with natural-boundary ghosts."""
    X = _pad(state)
    K_.fill_ghosts(X, np.ascontiguousarray(state.velocities), state.grid.h)
    return X


def eom_rhs(state: FieldState, params: ModelParams = ModelParams()) -> np.ndarray:
    """Second time derivatives of (phi1, phi2, a0, a1, a2), shape (5, n1, n2)."""
    V = np.ascontiguousarray(state.velocities)
    X = ghost_fill(state)
    S = np.empty_like(V)
    K_.static_accel(X, state.grid.h, params.lam, S)
    # velocity couplings; the explicit kick with tau = 1 from zero adds them
    out = V.copy()
    K_.kick_explicit(X, out, S, S, 1.0, False)
    acc = out - V
    if not np.isfinite(acc).all():
        raise InstabilityError("non-finite right-hand side")
    return acc


def boundary_residuals(state: FieldState) -> dict:
    """Natural boundary relations on the boundary ring, evaluated through the ghosts.

    Normal derivatives use the central 4th-order stencil over the ghost
    layers, tangential ones the one-sided stencils of the ghost fill.
    Returns max |B| and max |n.D Phi| over the ring.
    """
    X = ghost_fill(state)
    h = state.grid.h
    n1, n2 = state.grid.shape

    def central(k, axis, idx):
        sl = [k, slice(G, G + n1), slice(G, G + n2)]
        sl[1 + axis] = idx + G
        out = []
        for m in (-2, -1, 1, 2):
            s2 = list(sl)
            s2[1 + axis] = idx + G + m
            out.append(X[tuple(s2)])
        return (out[0] - 8.0 * out[1] + 8.0 * out[2] - out[3]) / (12.0 * h)

    f = state
    b_max = 0.0
    dn_max = 0.0
    for axis, idxs in ((0, (0, n1 - 1)), (1, (0, n2 - 1))):
        for idx in idxs:
            edge = (idx, slice(None)) if axis == 0 else (slice(None), idx)
            an = (f.a1 if axis == 0 else f.a2)[edge]
            p, q = f.phi1[edge], f.phi2[edge]
            dp = central(P1_, axis, idx) + an * q
            dq = central(P2_, axis, idx) - an * p
            dn_max = max(dn_max, float(np.abs(np.hypot(dp, dq)).max()))
            if axis == 0:
                b = central(A2_, 0, idx) - d1_edge(f.a1, h, 1)[edge]
            else:
                b = d1_edge(f.a2, h, 0)[edge] - central(A1_, 1, idx)
            b_max = max(b_max, float(np.abs(b).max()))
    return {"B": b_max, "DnPhi": dn_max}


class Stepper:
    """Holds padded fields, velocities and the cached static acceleration."""

    def __init__(self, state: FieldState, config: EvolutionConfig, params: ModelParams = ModelParams(), K: np.ndarray | None = None):
        config.validate(state.grid)
        self.grid = state.grid
        self.params = params
        self.config = config
        self.dt = config.resolved_dt(state.grid)
        self.X = _pad(state)
        self.V = np.ascontiguousarray(state.velocities.copy())
        # d_t A_0 is frozen on the boundary ring
        self.t = state.t
        self.steps = 0
        if config.damping:
            self.K = damping_profile(state.grid, config.damping_alpha, config.damping_fraction) if K is None else K
            self.use_d = True
        else:
            self.K = np.zeros(state.grid.shape)
            self.use_d = False
        self.D = np.zeros_like(self.V)
        self.beta = np.zeros(state.grid.shape)
        self.S = np.empty_like(self.V)
        self._refresh()

    def _refresh(self):
        K_.fill_ghosts(self.X, self.V, self.grid.h)
        K_.static_accel(self.X, self.grid.h, self.params.lam, self.S)

    def step(self, n: int = 1) -> None:
        h, dt = self.grid.h, self.dt
        tau = 0.5 * dt
        for _ in range(n):
            if self.use_d:
                K_.damping_term(self.X, self.V, self.K, h, self.D, self.beta, self.config.layer_dissipation)
            K_.kick_implicit(self.X, self.V, self.S, self.D, tau, self.use_d)
            K_.drift(self.X, self.V, dt)
            self._refresh()
            if self.use_d:
                K_.damping_term(self.X, self.V, self.K, h, self.D, self.beta, self.config.layer_dissipation)
            K_.kick_explicit(self.X, self.V, self.S, self.D, tau, self.use_d)
            self.steps += 1
        self.t += n * dt

    def state(self) -> FieldState:
        return FieldState.from_stack(self.grid, self.X[:, G:-G, G:-G], self.V, t=self.t)

    def finite(self) -> bool:
        return bool(np.isfinite(self.S).all() and np.isfinite(self.V).all())


def leapfrog_step(state: FieldState, config: EvolutionConfig, K: np.ndarray | None = None, params: ModelParams = ModelParams()) -> FieldState:
    """One kick-drift-kick step (damping from ``K`` when config.damping)."""
    st = Stepper(state, config, params, K)
    st.step()
    if not st.finite():
        raise InstabilityError(f"non-finite fields after the step from t={state.t}")
    return st.state()


def advance(state: FieldState, config: EvolutionConfig, params: ModelParams, duration: float) -> FieldState:
    """Evolve without diagnostics for roughly ``duration`` (rounded to whole steps)."""
    st = Stepper(state, config, params)
    n = int(round(duration / st.dt))
    chunk = 200
    done = 0
    while done < n:
        k = min(chunk, n - done)
        st.step(k)
        done += k
        if not st.finite():
            raise InstabilityError(f"non-finite fields at step {done}")
    return st.state()


def time_reverse(state: FieldState) -> FieldState:
    """T: dphi, da1, da2 and a0 change sign; da0 is kept."""
    out = state.copy()
    out.dphi1 = -out.dphi1
    out.dphi2 = -out.dphi2
    out.da1 = -out.da1
    out.da2 = -out.da2
    out.a0 = -out.a0
    return out


# ---------------------------------------------------------------------------
# zeros of the Higgs field
# ---------------------------------------------------------------------------

def _cell_root(c00, c10, c01, c11):
    """Root of the bilinear interpolant in the unit cell, (s, t) or None."""
    a = c00
    b = c10 - c00
    c = c01 - c00
    d = c11 - c10 - c01 + c00
    # Im[(a + b s) conj(c + d s)] = 0
    q2 = (b * np.conj(d)).imag
    q1 = (a * np.conj(d) + b * np.conj(c)).imag
    q0 = (a * np.conj(c)).imag
    if abs(q2) > 1e-14 * (abs(q1) + abs(q0) + 1e-300):
        disc = q1 * q1 - 4.0 * q2 * q0
        if disc < 0:
            return None
        sq = math.sqrt(disc)
        roots = [(-q1 + sq) / (2.0 * q2), (-q1 - sq) / (2.0 * q2)]
    elif abs(q1) > 0:
        roots = [-q0 / q1]
    else:
        roots = [0.5]
    best = None
    for s in roots:
        den = c + d * s
        if abs(den) == 0:
            continue
        t = (-(a + b * s) / den).real
        err = max(0.0, -s, s - 1.0, -t, t - 1.0)
        if best is None or err < best[0]:
            best = (err, s, t)
    if best is None or best[0] > 1e-6:
        return None
    return min(max(best[1], 0.0), 1.0), min(max(best[2], 0.0), 1.0)


def find_zeros(state: FieldState, with_winding: bool = False):
    """Zeros of Phi from plaquette windings, refined by bilinear interpolation.

    Phase increments live on edges so that neighbouring plaquettes share
    them; the windings of a block then always add up, even when a zero sits
    on a lattice line.  A plaquette with |winding| = 2 (coincident zeros)
    contributes its position twice.  Output is sorted lexicographically.
    """
    phi = state.phi
    g = state.grid
    # an exact zero on a node has no phase; nudge it into a definite cell
    tiny = np.abs(phi) < 1e-13
    if tiny.any():
        phi = np.where(tiny, 1e-13 * (1.0 + 0.5j), phi)
    dx = np.angle(phi[1:, :] * np.conj(phi[:-1, :]))
    dy = np.angle(phi[:, 1:] * np.conj(phi[:, :-1]))
    wind = dx[:, :-1] + dy[1:, :] - dx[:, 1:] - dy[:-1, :]
    w = np.rint(wind / (2.0 * np.pi)).astype(int)
    x1, x2 = g.x1, g.x2
    out = []
    winds = []
    for i, j in zip(*np.nonzero(w)):
        r = _cell_root(phi[i, j], phi[i + 1, j], phi[i, j + 1], phi[i + 1, j + 1])
        if r is None:
            corners = np.abs([phi[i, j], phi[i + 1, j], phi[i, j + 1], phi[i + 1, j + 1]])
            k = int(np.argmin(corners))
            r = (float(k % 2), float(k // 2))
        pos = (x1[i] + r[0] * g.h, x2[j] + r[1] * g.h)
        for _ in range(abs(int(w[i, j]))):
            out.append(pos)
            winds.append(int(np.sign(w[i, j])))
    order = sorted(range(len(out)), key=lambda k: out[k])
    pts = np.array([out[k] for k in order]).reshape(-1, 2)
    if with_winding:
        return pts, np.array([winds[k] for k in order], dtype=int)
    return pts


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------

CSV_COLUMNS = ["t", "energy", "flux", "lorenz_max", "n_zeros", "x1_1", "x2_1", "x1_2", "x2_2", "separation", "potential"]


@dataclass
class RunRecord:
    times: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    potential: list = field(default_factory=list)
    flux: list = field(default_factory=list)
    lorenz_max: list = field(default_factory=list)
    zeros: list = field(default_factory=list)
    tracked: list = field(default_factory=list)  # (2, 2) arrays or None
    collision: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    final_state: FieldState | None = None
    steps: int = 0
    wall_time: float = 0.0
    stopped_early: bool = False
    stop_reason: str = ""

    def arrays(self) -> dict:
        return {
            "t": np.asarray(self.times),
            "energy": np.asarray(self.energy),
            "potential": np.asarray(self.potential),
            "flux": np.asarray(self.flux),
            "lorenz_max": np.asarray(self.lorenz_max),
        }

    @property
    def separation(self) -> np.ndarray:
        out = np.full(len(self.times), np.nan)
        for k, tr in enumerate(self.tracked):
            if tr is not None:
                out[k] = float(np.hypot(*(tr[0] - tr[1])))
        return out

    def to_csv(self, path: str | Path) -> None:
        sep = self.separation
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for k, t in enumerate(self.times):
                tr = self.tracked[k] if k < len(self.tracked) else None
                pos = [np.nan] * 4 if tr is None else [tr[0, 0], tr[0, 1], tr[1, 0], tr[1, 1]]
                nz = len(self.zeros[k]) if k < len(self.zeros) else 0
                row = [t, self.energy[k], self.flux[k], self.lorenz_max[k], nz, *pos, sep[k], self.potential[k]]
                w.writerow([repr(float(x)) if not isinstance(x, int) else x for x in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> RunRecord:
        rec = cls()
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        for r in rows:
            rec.times.append(float(r["t"]))
            rec.energy.append(float(r["energy"]))
            rec.flux.append(float(r["flux"]))
            rec.lorenz_max.append(float(r["lorenz_max"]))
            rec.potential.append(float(r.get("potential", "nan")))
            nz = int(r["n_zeros"])
            pos = np.array([[float(r["x1_1"]), float(r["x2_1"])], [float(r["x1_2"]), float(r["x2_2"])]])
            if np.isfinite(pos).all():
                rec.tracked.append(pos)
                rec.zeros.append(pos[:nz] if nz <= 2 else pos)
                rec.collision.append(float(r["separation"]) == 0.0)
            else:
                rec.tracked.append(None)
                rec.zeros.append(np.zeros((nz, 2)) * np.nan)
                rec.collision.append(False)
        return rec


def _track(prev: np.ndarray | None, zeros: np.ndarray, expected: int):
    """Order two zeros consistently with the previous frame.

    Returns (tracked (2, 2) or None, collision flag).
    """
    if expected != 2:
        return None, False
    if len(zeros) == 2:
        z = zeros
        if prev is not None:
            straight = np.sum((z - prev) ** 2)
            swapped = np.sum((z[::-1] - prev) ** 2)
            if swapped < straight:
                z = z[::-1]
        coincident = bool(np.allclose(z[0], z[1]))
        return z.copy(), coincident
    if len(zeros) == 1:
        # merged zeros: both at the single location
        z = np.vstack([zeros[0], zeros[0]])
        return z, True
    return None, False


def evolve(
    initial: FieldState,
    config: EvolutionConfig,
    params: ModelParams = ModelParams(),
    expected_zeros: int | None = None,
    stop: Callable[[RunRecord], bool] | None = None,
    progress: Callable[[RunRecord], None] | None = None,
) -> RunRecord:
    """Run the step loop from ``initial`` to ``config.t_end``.

    Diagnostics every ``diagnostic_cadence`` steps: total and potential
    energy, flux, max |Lorenz residual| and (optionally) the Higgs zeros.
    ``stop(record)`` is polled after each diagnostic frame.
    """
    t0 = time.perf_counter()
    st = Stepper(initial, config, params)
    n_total = int(round(config.t_end / st.dt))
    rec = RunRecord(config=asdict(config) | {"dt_resolved": st.dt, "lam": params.lam})
    prev = None
    if expected_zeros is None and config.track_zeros:
        expected_zeros = len(find_zeros(initial))
    snap_dir = Path(config.snapshot_dir) if config.snapshot_dir else None
    if snap_dir is not None:
        snap_dir.mkdir(parents=True, exist_ok=True)

    def record():
        nonlocal prev
        s = st.state()
        pd = potential_density(s, params)
        kd = kinetic_density(s)
        rec.times.append(s.t)
        rec.potential.append(trapezoid(pd, s.grid.h))
        rec.energy.append(trapezoid(pd + kd, s.grid.h))
        rec.flux.append(magnetic_flux(s))
        rec.lorenz_max.append(float(np.abs(lorenz_residual(s)).max()))
        if config.track_zeros:
            z = find_zeros(s)
            rec.zeros.append(z)
            tr, col = _track(prev, z, expected_zeros)
            rec.tracked.append(tr)
            rec.collision.append(col)
            if tr is not None:
                prev = tr
        else:
            rec.zeros.append(np.zeros((0, 2)))
            rec.tracked.append(None)
            rec.collision.append(False)
        if config.snapshot_cadence and st.steps % config.snapshot_cadence == 0:
            if snap_dir is not None:
                write_vxl1(s, snap_dir / f"snap_{st.steps:08d}.vxl1")
            else:
                rec.snapshots.append(s)
        return s

    # a zero crossing the natural boundary carries flux out of the box, which
    # the ghost relations do not model
    inner = [(1.0 - config.damping_fraction) * w for w in initial.grid.half_widths]

    def in_layer() -> bool:
        z = rec.zeros[-1]
        return bool(len(z) and (np.any(np.abs(z[:, 0]) > inner[0]) or np.any(np.abs(z[:, 1]) > inner[1])))

    record()
    cad = config.diagnostic_cadence
    while st.steps < n_total:
        k = min(cad - st.steps % cad, n_total - st.steps)
        st.step(k)
        if st.steps % cad == 0 or st.steps == n_total:
            if not st.finite():
                raise InstabilityError(f"non-finite fields at step {st.steps} (t={st.t:.4f})")
            record()
            if progress is not None:
                progress(rec)
            if stop is not None and stop(rec):
                rec.stopped_early = True
                rec.stop_reason = "stop condition"
                break
            if config.track_zeros and config.stop_at_layer and in_layer():
                rec.stopped_early = True
                rec.stop_reason = f"Higgs zero entered the damping layer at t={rec.times[-1]:.2f}"
                break
    rec.steps = st.steps
    rec.final_state = st.state()
    rec.wall_time = time.perf_counter() - t0
    return rec
