"""Initial data: excited, Derrick-scaled and boosted vortices, Abrikosov superposition.

A *generator* is a callable ``g(t, x1, x2) -> (F, Ft, Fx1)``; each output has
shape (5, ...) in component order (phi1, phi2, a0, a1, a2) and holds the
fields, their exact time derivative and their exact x1-derivative.  The x1
derivative is what a boost along x1 needs for the chain rule, so boosts,
translations and products compose without finite differencing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .lattice import FieldState, GridSpec, ModelParams, trapezoid
from .modes import ModeInterpolant, ModeProfile
from .profile import ProfileInterpolant, VortexProfile

__all__ = [
    "VortexSpec",
    "InitialConfig",
    "static_vortex",
    "excited_vortex_at_rest",
    "derrick_vortex",
    "boost",
    "translate",
    "superpose_generators",
    "sample",
    "superpose",
    "static_state",
    "overlap_norm",
    "derrick_perturbation",
    "linear_perturbation",
    "amplitude_from_epsilon",
    "displacement_shift_time",
    "OutsideValidity",
]

Generator = Callable[[float, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]

EXCITATIONS = ("none", "linear", "derrick")


class OutsideValidity(ValueError):
    pass


@dataclass
class VortexSpec:
    position: tuple[float, float] = (0.0, 0.0)
    N: int = 1
    v: float = 0.0
    excitation: str = "none"
    epsilon: float = 0.0
    mu: float = 1.0
    sigma0: float = 0.0

    def __post_init__(self):
        self.position = (float(self.position[0]), float(self.position[1]))
        if not abs(self.v) < 1.0:
            raise ValueError(f"|v| must be below 1, got {self.v}")
        if self.excitation not in EXCITATIONS:
            raise ValueError(f"unknown excitation {self.excitation!r}; expected one of {EXCITATIONS}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if int(self.N) != self.N or self.N == 0:
            raise ValueError("degree must be a non-zero integer")
        self.sigma0 = float(self.sigma0) % (2.0 * np.pi)

    @property
    def gamma(self) -> float:
        return 1.0 / np.sqrt(1.0 - self.v * self.v)


@dataclass
class InitialConfig:
    vortices: list[VortexSpec]
    grid: GridSpec
    params: ModelParams = field(default_factory=ModelParams)
    phase_method: str = "direct"  # or "shift": displacement-shift pre-evolution

    def __post_init__(self):
        if not self.vortices:
            raise ValueError("at least one vortex is required")
        if self.phase_method not in ("direct", "shift"):
            raise ValueError(f"unknown phase method {self.phase_method!r}")
        pos = np.array([v.position for v in self.vortices])
        for a in range(len(pos)):
            for b in range(a + 1, len(pos)):
                d = np.hypot(*(pos[a] - pos[b]))
                if d < 8.0:
                    warnings.warn(f"vortices {a} and {b} only {d:.2f} apart; superposition is unreliable", stacklevel=2)
        hx, hy = self.grid.half_widths
        margin = 5.0 * self.grid.h
        for k, (x, y) in enumerate(pos):
            if abs(x) > hx - margin or abs(y) > hy - margin:
                raise ValueError(f"vortex {k} at ({x}, {y}) lies within 5h of the boundary")


# ---------------------------------------------------------------------------
# rest-frame generators
# ---------------------------------------------------------------------------

def _stack(*comps):
    return np.stack(np.broadcast_arrays(*comps))


def static_vortex(profile: VortexProfile, interp: ProfileInterpolant | None = None) -> Generator:
    """Phi = (x1 - i x2)^N F(s), A = (x2, -x1) G(s), A0 = 0."""
    interp = ProfileInterpolant(profile) if interp is None else interp
    N = profile.N

    def gen(t, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        s = x1 * x1 + x2 * x2
        F, Fs = interp.F(s)
        Gv, Gs = interp.G(s)
        z = x1 - 1j * x2
        zN = z**N
        zN1 = N * z ** (N - 1)
        phi = zN * F
        phi_x1 = zN1 * F + zN * Fs * 2.0 * x1
        zero = np.zeros_like(s)
        Fv = _stack(phi.real, phi.imag, zero, x2 * Gv, -x1 * Gv)
        Fx = _stack(phi_x1.real, phi_x1.imag, zero, 2.0 * x1 * x2 * Gs, -Gv - 2.0 * x1 * x1 * Gs)
        return Fv, np.zeros_like(Fv), Fx

    return gen


def _mode_fields(minterp: ModeInterpolant, x1, x2):
    s = x1 * x1 + x2 * x2
    S, Ss = minterp.S(s)
    T, Ts = minterp.T(s)
    zero = np.zeros_like(s)
    m = _stack(x1 * S, -x2 * S, zero, x2 * T, -x1 * T)
    mx = _stack(
        S + 2.0 * x1 * x1 * Ss,
        -2.0 * x1 * x2 * Ss,
        zero,
        2.0 * x1 * x2 * Ts,
        -T - 2.0 * x1 * x1 * Ts,
    )
    return m, mx


def excited_vortex_at_rest(
    profile: VortexProfile,
    mode: ModeProfile,
    epsilon: float,
    sigma0: float = 0.0,
    interp: ProfileInterpolant | None = None,
    minterp: ModeInterpolant | None = None,
    check_grid: GridSpec | None = None,
) -> Generator:
    """Static vortex plus epsilon * shape mode * cos(omega t - sigma0)."""
    if profile.N != 1:
        raise ValueError("the shape mode is only available for N = 1")
    base = static_vortex(profile, interp)
    minterp = ModeInterpolant(mode) if minterp is None else minterp
    w = mode.omega
    if check_grid is not None and epsilon > 0:
        x1, x2 = check_grid.mesh()
        F, _, _ = base(0.0, x1, x2)
        m, _ = _mode_fields(minterp, x1, x2)
        # worst case over the oscillation: amplitude +-epsilon
        big = max(np.hypot(F[0] + epsilon * m[0], F[1] + epsilon * m[1]).max(),
                  np.hypot(F[0] - epsilon * m[0], F[1] - epsilon * m[1]).max())
        if big > 2.0:
            raise OutsideValidity(f"epsilon={epsilon} drives |Phi| to {big:.2f} > 2")

    def gen(t, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        F, _, Fx = base(t, x1, x2)
        if epsilon == 0.0:
            return F, np.zeros_like(F), Fx
        m, mx = _mode_fields(minterp, x1, x2)
        ph = w * np.asarray(t, dtype=float) - sigma0
        c = epsilon * np.cos(ph)
        sdot = -epsilon * w * np.sin(ph)
        return F + c * m, sdot * m, Fx + c * mx

    return gen


def derrick_vortex(profile: VortexProfile, mu: float, v: float = 0.0, interp: ProfileInterpolant | None = None) -> Generator:
    """(Phi(mu x), mu A(mu x)) taken static in its rest frame, then boosted by v."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    base = static_vortex(profile, interp)

    def gen(t, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        F, _, Fx = base(t, mu * x1, mu * x2)
        scale = np.array([1.0, 1.0, mu, mu, mu]).reshape((5,) + (1,) * np.ndim(x1))
        F = F * scale
        Fx = Fx * scale * mu
        return F, np.zeros_like(F), Fx

    return gen if v == 0.0 else boost(gen, v)


# ---------------------------------------------------------------------------
# operations on generators
# ---------------------------------------------------------------------------

def _mix(F: np.ndarray, gamma: float, v: float) -> np.ndarray:
    """Lower-index covector boost on (A0, A1); Higgs and A2 unchanged."""
    out = F.copy()
    out[2] = gamma * (F[2] - v * F[3])
    out[3] = gamma * (F[3] - v * F[2])
    return out


def boost(gen: Generator, v: float) -> Generator:
    """Lorentz boost along x1 with signed lab velocity v.

    Fields at lab point (t, x) are the source fields at t' = g(t - v x1),
    x1' = g(x1 - v t), with the gauge covector mixed accordingly.
    """
    if not abs(v) < 1.0:
        raise ValueError(f"|v| must be below 1, got {v}")
    if v == 0.0:
        return gen
    g = 1.0 / np.sqrt(1.0 - v * v)

    def boosted(t, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        tp = g * (t - v * x1)
        x1p = g * (x1 - v * t)
        F, Ft, Fx = gen(tp, x1p, x2)
        return (
            _mix(F, g, v),
            _mix(g * Ft - g * v * Fx, g, v),
            _mix(-g * v * Ft + g * Fx, g, v),
        )

    return boosted


def translate(gen: Generator, d: Sequence[float]) -> Generator:
    d1, d2 = float(d[0]), float(d[1])

    def moved(t, x1, x2):
        return gen(t, np.asarray(x1, dtype=float) - d1, np.asarray(x2, dtype=float) - d2)

    return moved


def superpose_generators(gens: Sequence[Generator]) -> Generator:
    """Abrikosov product: Higgs fields multiply, gauge potentials add."""
    gens = list(gens)
    if len(gens) == 1:
        return gens[0]

    def combined(t, x1, x2):
        F, Ft, Fx = gens[0](t, x1, x2)
        phi = F[0] + 1j * F[1]
        phit = Ft[0] + 1j * Ft[1]
        phix = Fx[0] + 1j * Fx[1]
        A, At, Ax = F[2:].copy(), Ft[2:].copy(), Fx[2:].copy()
        for g in gens[1:]:
            G_, Gt, Gx = g(t, x1, x2)
            psi = G_[0] + 1j * G_[1]
            psit = Gt[0] + 1j * Gt[1]
            psix = Gx[0] + 1j * Gx[1]
            phit = phit * psi + phi * psit
            phix = phix * psi + phi * psix
            phi = phi * psi
            A += G_[2:]
            At += Gt[2:]
            Ax += Gx[2:]
        pack = lambda c, a: np.concatenate([np.stack([c.real, c.imag]), a])  # noqa: E731
        return pack(phi, A), pack(phit, At), pack(phix, Ax)

    return combined


def sample(gen: Generator, grid: GridSpec, t: float = 0.0) -> FieldState:
    x1, x2 = grid.mesh()
    F, Ft, _ = gen(t, x1, x2)
    return FieldState.from_stack(grid, F, Ft, t=0.0)


# ---------------------------------------------------------------------------
# building configurations
# ---------------------------------------------------------------------------

def vortex_generator(
    spec: VortexSpec,
    profile: VortexProfile,
    mode: ModeProfile | None = None,
    sigma0: float | None = None,
    interp: ProfileInterpolant | None = None,
    minterp: ModeInterpolant | None = None,
) -> Generator:
    """Rest-frame excitation, boost and translation for one vortex."""
    if spec.N != profile.N:
        raise ValueError(f"spec degree {spec.N} does not match profile degree {profile.N}")
    sig = spec.sigma0 if sigma0 is None else sigma0
    if spec.excitation == "linear" and spec.epsilon > 0:
        if mode is None:
            raise ValueError("linear excitation needs a solved shape mode")
        rest = excited_vortex_at_rest(profile, mode, spec.epsilon, sig, interp, minterp)
    elif spec.excitation == "derrick" and spec.mu != 1.0:
        if sig != 0.0:
            raise ValueError("a Derrick excitation has no ansatz phase; use the displacement shift")
        rest = derrick_vortex(profile, spec.mu, 0.0, interp)
    else:
        rest = static_vortex(profile, interp)
    return translate(boost(rest, spec.v), spec.position)


def static_state(pairs: Sequence[tuple[VortexSpec, VortexProfile]], grid: GridSpec) -> FieldState:
    """Superpose unexcited or Derrick-scaled vortices at rest (helper for energies)."""
    gens = [vortex_generator(s, p) for s, p in pairs]
    return sample(superpose_generators(gens), grid)


def amplitude_from_epsilon(epsilon: float, omega: float) -> float:
    """Initial mode amplitude A(0) = (epsilon omega)^2 / 2."""
    return 0.5 * (epsilon * omega) ** 2


def displacement_shift_time(sigma0: float, omega: float, v: float = 0.0) -> float:
    """Lab-frame pre-evolution time that turns a sigma = 0 start into phase sigma0.

    cos(omega tau) evaluated at proper time tau equals cos(omega t' - sigma0) at
    t' = 0 when tau = (-sigma0 mod 2 pi)/omega; a moving vortex ages by tau in
    lab time gamma * tau.
    """
    g = 1.0 / np.sqrt(1.0 - v * v)
    return g * ((-sigma0) % (2.0 * np.pi)) / omega


def superpose(
    config: InitialConfig,
    profile: VortexProfile,
    mode: ModeProfile | None = None,
    evolution_config=None,
) -> FieldState:
    """Sample the Abrikosov superposition described by ``config`` at t = 0.

    With ``phase_method == "shift"`` every vortex is built at sigma = 0 and the
    whole configuration is pre-evolved for the lab time that realises the
    requested phase; all vortices must then share sigma0 and |v|.
    """
    interp = ProfileInterpolant(profile)
    minterp = ModeInterpolant(mode) if mode is not None else None
    if config.phase_method == "direct":
        gens = [vortex_generator(s, profile, mode, None, interp, minterp) for s in config.vortices]
        state = sample(superpose_generators(gens), config.grid)
        _check_validity(state, config)
        return state

    sigmas = {round(s.sigma0, 12) for s in config.vortices if s.excitation != "none"}
    speeds = {round(abs(s.v), 12) for s in config.vortices}
    t_pre = 0.0
    if sigmas != {0.0} and sigmas:
        if len(sigmas) > 1 or len(speeds) > 1:
            raise ValueError("displacement shift needs one common sigma0 and |v| for all vortices")
        t_pre = displacement_shift_time(sigmas.pop(), _omega_for(config, mode), speeds.pop())
    moved = []
    for s in config.vortices:
        back = (s.position[0] - s.v * t_pre, s.position[1])
        moved.append(VortexSpec(back, s.N, s.v, s.excitation, s.epsilon, s.mu, 0.0))
    gens = [vortex_generator(s, profile, mode, 0.0, interp, minterp) for s in moved]
    state = sample(superpose_generators(gens), config.grid)
    _check_validity(state, config)
    if t_pre > 0:
        from .evolution import EvolutionConfig, advance

        ec = EvolutionConfig() if evolution_config is None else evolution_config
        state = advance(state, ec, config.params, t_pre)
    state.t = 0.0
    return state


def _omega_for(config: InitialConfig, mode: ModeProfile | None) -> float:
    if mode is not None:
        return mode.omega
    raise ValueError("displacement shift needs the mode frequency; pass the solved mode")


def _check_validity(state: FieldState, config: InitialConfig) -> None:
    if np.hypot(state.phi1, state.phi2).max() > 2.0:
        raise OutsideValidity("initial |Phi| exceeds 2; excitation amplitude outside the ansatz's validity")


# ---------------------------------------------------------------------------
# perturbation comparisons
# ---------------------------------------------------------------------------

def linear_perturbation(mode: ModeProfile, grid: GridSpec) -> np.ndarray:
    """(psi1, psi2, chi1, chi2) of the shape mode, stacked."""
    m, _ = _mode_fields(ModeInterpolant(mode), *grid.mesh())
    return m[[0, 1, 3, 4]]


def derrick_perturbation(profile: VortexProfile, mu: float, grid: GridSpec) -> np.ndarray:
    """Difference between the Derrick-scaled and the unscaled vortex, as (psi1, psi2, chi1, chi2)."""
    x1, x2 = grid.mesh()
    interp = ProfileInterpolant(profile)
    F0, _, _ = static_vortex(profile, interp)(0.0, x1, x2)
    F1, _, _ = derrick_vortex(profile, mu, 0.0, interp)(0.0, x1, x2)
    d = F1 - F0
    return d[[0, 1, 3, 4]]


def overlap_norm(pert_a: np.ndarray, pert_b: np.ndarray, h: float = 1.0) -> float:
    """|<f, g>| / (|f| |g|) with <f, g> = int f . g d^2x (trapezoid rule)."""
    pert_a = np.asarray(pert_a)
    pert_b = np.asarray(pert_b)
    if pert_a.shape != pert_b.shape:
        raise ValueError("perturbations must share a grid")
    ab = trapezoid(np.sum(pert_a * pert_b, axis=0), h)
    aa = trapezoid(np.sum(pert_a * pert_a, axis=0), h)
    bb = trapezoid(np.sum(pert_b * pert_b, axis=0), h)
    if aa <= 0 or bb <= 0:
        raise ValueError("zero-norm perturbation")
    return float(abs(ab) / np.sqrt(aa * bb))
