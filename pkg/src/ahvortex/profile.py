"""Axially symmetric static vortices.

The degree-N vortex is

    Phi = f(rho) exp(-i N theta),   A_i dx^i = -a_theta(rho) d theta,

so that the flux is -2 pi N.  Substituting into the static field equations
gives the pair of radial ODEs

    f'' + f'/rho - (N - a)^2 f / rho^2 + (lam/2)(1 - f^2) f = 0
    a'' - a'/rho + (N - a) f^2 = 0

with f(0) = a(0) = 0, f(inf) = 1, a(inf) = N.  They are discretised with
fourth-order central differences (mirror ghost at rho = -h), relaxed by a
short gradient flow and then polished with Newton's method.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline
from scipy.special import k0, k1

__all__ = [
    "RadialGrid",
    "VortexProfile",
    "TailCharges",
    "ProfileNotConverged",
    "solve_profile",
    "profile_residual",
    "radial_energy",
    "profile_to_FG",
    "origin_consistency",
    "fit_tails",
    "interaction_energy_point",
    "interaction_energy_scaled",
    "pinned_pair_interaction",
    "EvenRadialSpline",
    "ProfileInterpolant",
]


class ProfileNotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class RadialGrid:
    m: int
    rho_max: float

    def __post_init__(self):
        if self.m < 16:
            raise ValueError(f"radial grid needs at least 16 points, got {self.m}")
        if not self.rho_max > 0:
            raise ValueError("rho_max must be positive")

    @classmethod
    def from_spacing(cls, h_rho: float, rho_max: float) -> RadialGrid:
        return cls(int(round(rho_max / h_rho)) + 1, rho_max)

    @property
    def h_rho(self) -> float:
        return self.rho_max / (self.m - 1)

    @property
    def rho(self) -> np.ndarray:
        return np.linspace(0.0, self.rho_max, self.m)


@dataclass
class VortexProfile:
    N: int
    lam: float
    grid: RadialGrid
    f: np.ndarray
    a_theta: np.ndarray
    residual: float = np.nan
    newton_iterations: int = 0
    flow_steps: int = 0

    @property
    def rho(self) -> np.ndarray:
        return self.grid.rho

    def energy(self) -> float:
        return radial_energy(self)

    def to_csv(self, path: str | Path) -> None:
        F, G = profile_to_FG(self)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rho", "f", "a_theta", "F", "G"])
            for row in zip(self.rho, self.f, self.a_theta, F, G):
                w.writerow([repr(float(x)) for x in row])


@dataclass
class TailCharges:
    q: float
    m_dip: float
    window: tuple[float, float] = (np.nan, np.nan)
    window_m: tuple[float, float] = (np.nan, np.nan)
    residual_q: float = np.nan
    residual_m: float = np.nan
    shrunk: bool = False

    def to_json(self, N: int, lam: float) -> dict:
        return {
            "N": N,
            "lambda": lam,
            "q": self.q,
            "m": self.m_dip,
            "window": list(self.window),
            "window_m": list(self.window_m),
            "residual": max(self.residual_q, self.residual_m),
            "window_shrunk": self.shrunk,
        }


# ---------------------------------------------------------------------------
# discretisation
# ---------------------------------------------------------------------------

@dataclass
class _RadialOps:
    """Interior derivative operators with the boundary data folded in.

    For unknowns x (values at j = 1..m-2) the full nodal vector is
    P @ x + c, and D1 @ (P x + c) = L1 @ x + c1, etc.
    """

    L1: sp.csr_matrix
    c1: np.ndarray
    L2: sp.csr_matrix
    c2: np.ndarray


def _derivative_ops(m: int, h: float, parity: int, origin: float, ghost: float) -> _RadialOps:
    """Ghost u(-h) = parity*u(h) + ghost; u(0) = origin; u(rho_max) = 0."""
    n = m - 2
    # full vector index k <-> node j = k - 1, covering j = -1 .. m-1
    rows1, cols1, vals1 = [], [], []
    rows2, cols2, vals2 = [], [], []
    w1_4 = {-2: 1.0, -1: -8.0, 1: 8.0, 2: -1.0}
    w2_4 = {-2: -1.0, -1: 16.0, 0: -30.0, 1: 16.0, 2: -1.0}
    for r, j in enumerate(range(1, m - 1)):
        if j + 2 <= m - 1:
            for o, w in w1_4.items():
                rows1.append(r); cols1.append(j + o + 1); vals1.append(w / (12.0 * h))
            for o, w in w2_4.items():
                rows2.append(r); cols2.append(j + o + 1); vals2.append(w / (12.0 * h * h))
        else:
            # last interior node: second-order stencil
            for o, w in {-1: -0.5, 1: 0.5}.items():
                rows1.append(r); cols1.append(j + o + 1); vals1.append(w / h)
            for o, w in {-1: 1.0, 0: -2.0, 1: 1.0}.items():
                rows2.append(r); cols2.append(j + o + 1); vals2.append(w / (h * h))
    D1 = sp.csr_matrix((vals1, (rows1, cols1)), shape=(n, m + 1))
    D2 = sp.csr_matrix((vals2, (rows2, cols2)), shape=(n, m + 1))

    # P: unknowns -> full vector; ghost at j=-1 mirrors j=1 with the given parity
    prow = list(range(2, m)) + [0]
    pcol = list(range(n)) + [0]
    pval = [1.0] * n + [float(parity)]
    P = sp.csr_matrix((pval, (prow, pcol)), shape=(m + 1, n))
    c = np.zeros(m + 1)
    c[0] = ghost
    c[1] = origin
    return _RadialOps((D1 @ P).tocsr(), D1 @ c, (D2 @ P).tocsr(), D2 @ c)


class _RadialSystem:
    """Radial equations in the vacuum deviations u = 1 - f, w = N - a.

    Working with the deviations keeps full relative precision in the
    exponentially small tails, which the charge fit relies on.
    """

    def __init__(self, N: int, lam: float, grid: RadialGrid):
        self.N, self.lam, self.grid = N, lam, grid
        h = grid.h_rho
        self.r = grid.rho[1:-1]
        p = (-1) ** N
        self.ou = _derivative_ops(grid.m, h, p, 1.0, 1.0 - p)
        self.ow = _derivative_ops(grid.m, h, 1, float(N), 0.0)

    def residual(self, u: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lam, r, ou, ow = self.lam, self.r, self.ou, self.ow
        up = ou.L1 @ u + ou.c1
        upp = ou.L2 @ u + ou.c2
        wp = ow.L1 @ w + ow.c1
        wpp = ow.L2 @ w + ow.c2
        f = 1.0 - u
        rf = -upp - up / r - w * w * f / (r * r) + 0.5 * lam * u * (2.0 - u) * f
        ra = -wpp + wp / r + w * f * f
        return rf, ra

    def jacobian(self, u: np.ndarray, w: np.ndarray) -> sp.csr_matrix:
        lam, r, ou, ow = self.lam, self.r, self.ou, self.ow
        f = 1.0 - u
        inv_r = sp.diags(1.0 / r)
        juu = -ou.L2 - inv_r @ ou.L1 + sp.diags(w * w / (r * r) + 0.5 * lam * (3.0 * f * f - 1.0))
        juw = sp.diags(-2.0 * w * f / (r * r))
        jwu = sp.diags(-2.0 * w * f)
        jww = -ow.L2 + inv_r @ ow.L1 + sp.diags(f * f)
        return sp.bmat([[juu, juw], [jwu, jww]], format="csc")


def _full(x: np.ndarray, origin: float) -> np.ndarray:
    return np.concatenate([[origin], x, [0.0]])


def radial_energy(profile: VortexProfile) -> float:
    """pi * int [f'^2 + (N-a)^2 f^2/rho^2 + a'^2/rho^2 + (lam/4)(1-f^2)^2] rho drho."""
    N, lam = profile.N, profile.lam
    h = profile.grid.h_rho
    rho = profile.rho
    f, a = profile.f, profile.a_theta
    fp = _nodal_d1(f, h, (-1) ** N)
    ap = _nodal_d1(a, h, 1)
    dens = np.zeros_like(rho)
    r = rho[1:]
    dens[1:] = (
        fp[1:] ** 2
        + (N - a[1:]) ** 2 * f[1:] ** 2 / r**2
        + ap[1:] ** 2 / r**2
        + 0.25 * lam * (1.0 - f[1:] ** 2) ** 2
    ) * r
    return float(np.pi * np.trapezoid(dens, rho))


def _nodal_d1(u: np.ndarray, h: float, parity: int) -> np.ndarray:
    """4th-order derivative at every node, mirror ghosts at the origin."""
    ext = np.concatenate([[parity * u[2], parity * u[1]], u])
    out = np.empty_like(u)
    out[:-2] = (-ext[4:] + 8.0 * ext[3:-1] - 8.0 * ext[1:-3] + ext[:-4])[: len(u) - 2] / (12.0 * h)
    out[-2] = (3.0 * u[-1] + 10.0 * u[-2] - 18.0 * u[-3] + 6.0 * u[-4] - u[-5]) / (12.0 * h)
    out[-1] = (25.0 * u[-1] - 48.0 * u[-2] + 36.0 * u[-3] - 16.0 * u[-4] + 3.0 * u[-5]) / (12.0 * h)
    return out


def profile_residual(profile: VortexProfile) -> float:
    """Max-norm residual of both radial ODEs over interior nodes."""
    sys_ = _RadialSystem(profile.N, profile.lam, profile.grid)
    rf, ra = sys_.residual(1.0 - profile.f[1:-1], profile.N - profile.a_theta[1:-1])
    return float(max(np.abs(rf).max(), np.abs(ra).max()))


def solve_profile(
    N: int,
    lam: float,
    grid: RadialGrid,
    tol: float = 1e-8,
    flow_steps: int = 500,
    max_newton: int = 60,
) -> VortexProfile:
    """Relax the radial vortex equations.

    A forward-Euler gradient flow (step halved whenever the energy rises)
    removes the roughness of the initial guess; Newton's method on the
    discrete residual then converges it to ``tol`` in max norm.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"degree must be a positive integer, got {N}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    N = int(N)
    rho = grid.rho
    h = grid.h_rho
    system = _RadialSystem(N, lam, grid)
    n = grid.m - 2
    r = rho[1:-1]

    u = 1.0 - (1.0 - np.exp(-r)) ** N
    w = 2.0 * N / (r * r + 2.0)

    def energy(ux, wx):
        f = 1.0 - _full(ux, 1.0)
        a = N - _full(wx, float(N))
        return radial_energy(VortexProfile(N, lam, grid, f, a))

    # gradient flow: f_t = R_f, a_t = R_a, i.e. u_t = -R_f, w_t = -R_a
    tau = 0.3 * h * h
    e_old = energy(u, w)
    steps = 0
    for steps in range(1, flow_steps + 1):
        rf, ra = system.residual(u, w)
        un, wn = u - tau * rf, w - tau * ra
        e_new = energy(un, wn)
        while e_new > e_old and tau > 1e-6 * h * h:
            tau *= 0.5
            un, wn = u - tau * rf, w - tau * ra
            e_new = energy(un, wn)
        u, w, e_old = un, wn, e_new

    x = np.concatenate([u, w])
    rf, ra = system.residual(u, w)
    res = max(np.abs(rf).max(), np.abs(ra).max())
    it = 0
    extra = 2  # Newton is cheap here; polishing past tol cleans the far tail
    for it in range(1, max_newton + 1):
        if res < tol:
            if extra == 0:
                it -= 1
                break
            extra -= 1
        J = system.jacobian(x[:n], x[n:])
        dx = spla.spsolve(J, -np.concatenate([rf, ra]))
        step = 1.0
        while True:
            xt = x + step * dx
            rft, rat = system.residual(xt[:n], xt[n:])
            rest = max(np.abs(rft).max(), np.abs(rat).max())
            if rest < res or step < 1e-4:
                break
            step *= 0.5
        if res < tol and rest >= res:
            break
        x, rf, ra, res = xt, rft, rat, rest
    if res >= tol:
        raise ProfileNotConverged(f"radial solve stalled at residual {res:.3e} after {it} Newton steps")
    return VortexProfile(
        N=N,
        lam=float(lam),
        grid=grid,
        f=1.0 - _full(x[:n], 1.0),
        a_theta=N - _full(x[n:], float(N)),
        residual=float(res),
        newton_iterations=it,
        flow_steps=steps,
    )


# ---------------------------------------------------------------------------
# F, G forms and origin behaviour
# ---------------------------------------------------------------------------

def _origin_poly(rho: np.ndarray, u: np.ndarray, npts: int = 8, deg: int = 4) -> np.poly1d:
    """Polynomial in s = rho^2 fitted to u at the first nonzero nodes."""
    s = rho[1 : npts + 1] ** 2
    return np.poly1d(np.polyfit(s, u[1 : npts + 1], deg))


def profile_to_FG(profile: VortexProfile) -> tuple[np.ndarray, np.ndarray]:
    """F = f/rho^N and G = a_theta/rho^2 on the radial grid; origin by extrapolation in rho^2."""
    if profile.N < 1:
        raise ValueError("F, G forms need N >= 1")
    rho = profile.rho
    F = np.empty_like(rho)
    G = np.empty_like(rho)
    F[1:] = profile.f[1:] / rho[1:] ** profile.N
    G[1:] = profile.a_theta[1:] / rho[1:] ** 2
    F[0] = _origin_poly(rho, F)(0.0)
    G[0] = _origin_poly(rho, G)(0.0)
    return F, G


def origin_consistency(profile: VortexProfile) -> tuple[float, float]:
    """Residuals of the leading-order series relations at rho = 0.

    8(N+1) F'(0) + F(0) (lam + 4 N G(0)) = 0  and  8 G'(0) + [N=1] F(0)^2 = 0,
    primes with respect to s = rho^2.
    """
    N, lam = profile.N, profile.lam
    rho = profile.rho
    F, G = profile_to_FG(profile)
    pF = _origin_poly(rho, F)
    pG = _origin_poly(rho, G)
    F0, Fs = pF(0.0), pF.deriv()(0.0)
    G0, Gs = pG(0.0), pG.deriv()(0.0)
    r1 = 8.0 * (N + 1) * Fs + F0 * (lam + 4.0 * N * G0)
    r2 = 8.0 * Gs + (F0 * F0 if N == 1 else 0.0)
    return float(r1), float(r2)


# ---------------------------------------------------------------------------
# tails
# ---------------------------------------------------------------------------

def _ratio_fit(y: np.ndarray, basis: np.ndarray) -> tuple[float, float]:
    # minimise sum ((y - c b)/y)^2
    t = basis / y
    c = float(np.sum(t) / np.sum(t * t))
    return c, float(np.max(np.abs(c * t - 1.0)))


def fit_tails(
    profile: VortexProfile,
    lam: float | None = None,
    window: tuple[float, float] = (0.6, 0.9),
    floor: float = 1e-10,
) -> TailCharges:
    """Fit f ~ 1 - (q/2pi) K0(sqrt(lam) rho), a ~ N - (m/2pi) rho K1(rho).

    Points where the deviation from the vacuum is below ``floor`` are dropped
    (window shrinks from the outside).  Residuals are max relative misfits.
    """
    lam = profile.lam if lam is None else lam
    rho = profile.rho
    lo, hi = window[0] * profile.grid.rho_max, window[1] * profile.grid.rho_max
    sel = (rho >= lo) & (rho <= hi)
    yf = 1.0 - profile.f
    ya = profile.N - profile.a_theta
    shrunk = False

    def usable(y):
        nonlocal shrunk
        ok = sel & (y > floor)
        if ok.sum() < sel.sum():
            shrunk = True
            # keep a contiguous window starting at lo
            idx = np.flatnonzero(sel)
            bad = idx[~(y[idx] > floor)]
            if bad.size:
                ok = sel & (rho < rho[bad[0]])
        if ok.sum() < 5:
            raise ValueError("tail window holds fewer than 5 points above the noise floor; reduce rho_max or the window")
        return ok

    okf = usable(yf)
    oka = usable(ya)
    sq = np.sqrt(lam)
    cq, resq = _ratio_fit(yf[okf], k0(sq * rho[okf]))
    cm, resm = _ratio_fit(ya[oka], rho[oka] * k1(rho[oka]))
    if shrunk:
        warnings.warn("tail fit window shrunk to stay above the noise floor", RuntimeWarning, stacklevel=2)
    return TailCharges(
        q=2.0 * np.pi * cq,
        m_dip=2.0 * np.pi * cm,
        window=(float(rho[okf][0]), float(rho[okf][-1])),
        window_m=(float(rho[oka][0]), float(rho[oka][-1])),
        residual_q=resq,
        residual_m=resm,
        shrunk=shrunk,
    )


def interaction_energy_point(R, charges: TailCharges, lam: float = 1.0):
    """Point-source interaction -(q^2/2pi) K0(sqrt(lam) R) + (m^2/2pi) K0(R)."""
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0):
        raise ValueError("separation must be positive")
    q, m = charges.q, charges.m_dip
    out = (-q * q * k0(np.sqrt(lam) * R) + m * m * k0(R)) / (2.0 * np.pi)
    return out if out.ndim else float(out)


def interaction_energy_scaled(R, charges: TailCharges, mu: float):
    """Interaction of two Derrick-rescaled critical vortices, (mu^2 - 1)(m^2/2pi) K0(mu R)."""
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0):
        raise ValueError("separation must be positive")
    if not mu > 0:
        raise ValueError("mu must be positive")
    m = charges.m_dip
    out = (mu * mu - 1.0) * m * m * k0(mu * R) / (2.0 * np.pi)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# smooth interpolation onto the plane
# ---------------------------------------------------------------------------

class EvenRadialSpline:
    """Cubic spline of a function of s = rho^2 built from nodal samples.

    ``values`` are samples of the smooth reduced function (e.g. f/rho^N) on the
    radial grid, index 0 at the origin.  Beyond ``rho_max`` the callable
    ``tail(rho) -> (value, d value / d s)`` takes over.
    """

    def __init__(self, rho: np.ndarray, values: np.ndarray, tail=None):
        self.rho_max = float(rho[-1])
        self.spline = CubicSpline(rho**2, values, bc_type="not-a-knot")
        self.dspline = self.spline.derivative()
        self.tail = tail

    def __call__(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=float)
        val = np.empty_like(s)
        der = np.empty_like(s)
        inside = s <= self.rho_max**2
        val[inside] = self.spline(s[inside])
        der[inside] = self.dspline(s[inside])
        if (~inside).any():
            if self.tail is None:
                val[~inside] = self.spline(self.rho_max**2)
                der[~inside] = 0.0
            else:
                v, d = self.tail(np.sqrt(s[~inside]))
                val[~inside] = v
                der[~inside] = d
        return val, der


class ProfileInterpolant:
    """F(s), G(s) and their s-derivatives for arbitrary s = rho^2."""

    def __init__(self, profile: VortexProfile, charges: TailCharges | None = None):
        self.profile = profile
        N, lam = profile.N, profile.lam
        F, G = profile_to_FG(profile)
        rho = profile.rho
        if charges is None:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    charges = fit_tails(profile)
            except ValueError:
                charges = None
        self.charges = charges
        cq = charges.q / (2 * np.pi) if charges else 0.0
        cm = charges.m_dip / (2 * np.pi) if charges else 0.0
        sl = np.sqrt(lam)

        def tail_F(r):
            fv = 1.0 - cq * k0(sl * r)
            fp = cq * sl * k1(sl * r)
            val = fv / r**N
            return val, (fp / r**N - N * fv / r ** (N + 1)) / (2.0 * r)

        def tail_G(r):
            av = N - cm * r * k1(r)
            ap = cm * r * k0(r)
            return av / r**2, (ap / r**2 - 2.0 * av / r**3) / (2.0 * r)

        self.F = EvenRadialSpline(rho, F, tail_F)
        self.G = EvenRadialSpline(rho, G, tail_G)


# ---------------------------------------------------------------------------
# interaction of a pinned pair on the plane
# ---------------------------------------------------------------------------

def pinned_pair_interaction(
    profile_a: VortexProfile,
    profile_b: VortexProfile | None,
    d: float,
    grid=None,
    mu_a: float = 1.0,
    mu_b: float = 1.0,
) -> float:
    """E_int = V_2 - V_1(a) - V_1(b) for static vortices at (-d, 0) and (+d, 0).

    Each single-vortex energy is evaluated on the same lattice with the
    vortex at its pinned position, so discretisation errors largely cancel.
    ``mu_a``/``mu_b`` apply a Derrick rescaling to the respective vortex.
    """
    from .initial import VortexSpec, static_state
    from .lattice import GridSpec, ModelParams, potential_energy

    profile_b = profile_a if profile_b is None else profile_b
    if profile_a.lam != profile_b.lam:
        raise ValueError("both profiles must share lambda")
    if grid is None:
        h = 0.15
        half_x = d + 14.0
        half_y = 14.0
        grid = GridSpec(2 * int(np.ceil(half_x / h)) + 1, 2 * int(np.ceil(half_y / h)) + 1, h)
    hx, hy = grid.half_widths
    if hx < d + 8.0 or hy < 8.0:
        raise ValueError(f"grid half-widths {hx:.1f} x {hy:.1f} too small for cores at +-{d}")
    params = ModelParams(profile_a.lam)
    va = VortexSpec(position=(-d, 0.0), N=profile_a.N, excitation="derrick" if mu_a != 1.0 else "none", mu=mu_a)
    vb = VortexSpec(position=(d, 0.0), N=profile_b.N, excitation="derrick" if mu_b != 1.0 else "none", mu=mu_b)
    v2 = potential_energy(static_state([(va, profile_a), (vb, profile_b)], grid), params)
    v1a = potential_energy(static_state([(va, profile_a)], grid), params)
    v1b = potential_energy(static_state([(vb, profile_b)], grid), params)
    return float(v2 - v1a - v1b)
