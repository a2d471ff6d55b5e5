"""Shape mode of the degree-one vortex.

Radial perturbations f -> f + s0(rho) cos(w t), a_theta -> a_theta + rho alpha0(rho) cos(w t)
obey w^2 (alpha0, s0) = H (alpha0, s0) with

    H = [ -L + f^2 + 1/rho^2         2 f (a - 1)/rho                      ]
        [ 2 f (a - 1)/rho            -L + (lam/2)(3 f^2 - 1) + (a - 1)^2/rho^2 ]

and L = d_rr + (1/rho) d_r.  L is discretised in conservative form on the
profile's interior nodes; the similarity transform u -> sqrt(rho) u turns the
result into a symmetric pentadiagonal matrix once the two components are
interleaved node by node.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import eig_banded, solve_banded
from scipy.special import k0, k1

from .lattice import GridSpec
from .profile import EvenRadialSpline, RadialGrid, VortexProfile

__all__ = [
    "ModeOperator",
    "ModeProfile",
    "NoBoundMode",
    "assemble_operator",
    "solve_shape_mode",
    "mode_norm",
    "ModeInterpolant",
    "lift_to_plane",
]


class NoBoundMode(RuntimeError):
    pass


@dataclass
class ModeOperator:
    """Symmetrised operator in lower banded storage plus its building blocks."""

    lam: float
    profile: VortexProfile
    grid: RadialGrid
    band: np.ndarray  # (3, 2M) lower form, interleaved (alpha_j, s_j)
    lap_diag: np.ndarray  # unsymmetrised -L: diagonal and off-diagonals
    lap_lower: np.ndarray
    lap_upper: np.ndarray
    pot_alpha: np.ndarray
    pot_s: np.ndarray
    coupling: np.ndarray

    @property
    def M(self) -> int:
        return self.pot_alpha.size

    def apply(self, alpha: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Apply the unsymmetrised discrete operator to interior samples."""

        def lap(u):
            out = self.lap_diag * u
            out[1:] += self.lap_lower * u[:-1]
            out[:-1] += self.lap_upper * u[1:]
            return out

        return (
            lap(alpha) + self.pot_alpha * alpha + self.coupling * s,
            lap(s) + self.pot_s * s + self.coupling * alpha,
        )

    def dense_symmetric(self) -> np.ndarray:
        n = self.band.shape[1]
        H = np.diag(self.band[0])
        H += np.diag(self.band[1, :-1], -1) + np.diag(self.band[1, :-1], 1)
        H += np.diag(self.band[2, :-2], -2) + np.diag(self.band[2, :-2], 2)
        return H[:n, :n]


@dataclass
class ModeProfile:
    omega2: float
    alpha0: np.ndarray
    s0: np.ndarray
    grid: RadialGrid
    lam: float = 1.0
    residual: float = np.nan

    @property
    def omega(self) -> float:
        return float(np.sqrt(self.omega2))

    @property
    def rho(self) -> np.ndarray:
        return self.grid.rho

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rho", "alpha0", "s0"])
            for row in zip(self.rho, self.alpha0, self.s0):
                w.writerow([repr(float(x)) for x in row])

    def to_json(self) -> dict:
        return {
            "lambda": self.lam,
            "omega2": self.omega2,
            "M": self.grid.m - 2,
            "rho_max": self.grid.rho_max,
            "residual": self.residual,
        }


def assemble_operator(profile: VortexProfile, lam: float | None = None) -> ModeOperator:
    lam = profile.lam if lam is None else lam
    if abs(lam - profile.lam) > 1e-12:
        raise ValueError(f"profile solved at lambda={profile.lam}, operator requested at {lam}")
    if profile.N != 1:
        raise ValueError("only the degree-one shape mode is implemented")
    grid = profile.grid
    h = grid.h_rho
    rho = grid.rho
    r = rho[1:-1]
    f = profile.f[1:-1]
    a = profile.a_theta[1:-1]
    M = r.size

    # -(1/rho) d_r(rho d_r u), Dirichlet zero at both ends
    rp = r + 0.5 * h
    rm = r - 0.5 * h
    lap_diag = (rp + rm) / (r * h * h)
    lap_lower = -rm[1:] / (r[1:] * h * h)  # row j, column j-1
    lap_upper = -rp[:-1] / (r[:-1] * h * h)  # row j, column j+1

    pot_alpha = f * f + 1.0 / (r * r)
    pot_s = 0.5 * lam * (3.0 * f * f - 1.0) + (a - 1.0) ** 2 / (r * r)
    coupling = 2.0 * f * (a - 1.0) / r

    # sqrt(rho) similarity: off-diagonal -rho_{j+1/2}/(h^2 sqrt(rho_j rho_{j+1}))
    off = -rp[:-1] / (h * h * np.sqrt(r[:-1] * r[1:]))
    band = np.zeros((3, 2 * M))
    band[0, 0::2] = lap_diag + pot_alpha
    band[0, 1::2] = lap_diag + pot_s
    band[1, 0::2] = coupling  # (alpha_j, s_j)
    band[2, 0:-2:2] = off  # (alpha_j, alpha_{j+1})
    band[2, 1:-2:2] = off  # (s_j, s_{j+1})
    return ModeOperator(lam, profile, grid, band, lap_diag, lap_lower, lap_upper, pot_alpha, pot_s, coupling)


def mode_norm(rho: np.ndarray, alpha0: np.ndarray, s0: np.ndarray) -> float:
    """2 pi int (alpha0^2 + s0^2) rho d rho, trapezoid rule."""
    return float(2.0 * np.pi * np.trapezoid((alpha0**2 + s0**2) * rho, rho))


def _inverse_iteration(band: np.ndarray, shift: float, iters: int = 4) -> np.ndarray:
    n = band.shape[1]
    ab = np.zeros((5, n))  # general banded storage for solve_banded with (2, 2)
    ab[2] = band[0] - shift
    ab[3, :-1] = band[1, :-1]
    ab[4, :-2] = band[2, :-2]
    ab[1, 1:] = band[1, :-1]
    ab[0, 2:] = band[2, :-2]
    v = np.ones(n) / np.sqrt(n)
    for _ in range(iters):
        v = solve_banded((2, 2), ab, v)
        v /= np.linalg.norm(v)
    return v


def solve_shape_mode(op: ModeOperator, window: tuple[float, float] = (0.0, 1.0)) -> ModeProfile:
    """Return the discrete eigenpair below the continuum threshold."""
    upper = min(window[1], 1.0, op.lam)
    # eigenvalues by banded bisection; the vector by inverse iteration, which
    # avoids forming the dense band-reduction transform
    vals = eig_banded(op.band, lower=True, eigvals_only=True, select="v", select_range=(window[0], upper))
    if vals.size == 0:
        raise NoBoundMode(
            f"no eigenvalue in ({window[0]}, {upper}) for lambda={op.lam}, "
            f"M={op.M}, rho_max={op.grid.rho_max}"
        )
    # a box-truncated continuum can leak below threshold when rho_max is small;
    # the bound state is the lowest one
    w2 = float(np.min(vals))
    v = _inverse_iteration(op.band, w2)
    r = op.grid.rho[1:-1]
    alpha = v[0::2] / np.sqrt(r)
    s = v[1::2] / np.sqrt(r)

    ra, rs = op.apply(alpha, s)
    resid = np.sqrt(np.sum((ra - w2 * alpha) ** 2 + (rs - w2 * s) ** 2) / np.sum(alpha**2 + s**2))

    rho = op.grid.rho
    alpha_full = np.concatenate([[0.0], alpha, [0.0]])
    s_full = np.concatenate([[0.0], s, [0.0]])
    nrm = np.sqrt(mode_norm(rho, alpha_full, s_full))
    alpha_full /= nrm
    s_full /= nrm
    if s_full[np.argmax(np.abs(s_full))] < 0:
        alpha_full, s_full = -alpha_full, -s_full
    return ModeProfile(w2, alpha_full, s_full, op.grid, op.lam, float(resid))


class ModeInterpolant:
    """Smooth evaluation of s0/rho and alpha0/rho as functions of s = rho^2.

    Inside ``match * rho_max`` a cubic spline in rho^2 is used; beyond it the
    modified-Bessel decay of the far field, matched in value, takes over (this
    also discards the part of the solution bent by the outer Dirichlet wall).
    """

    def __init__(self, mode: ModeProfile, match: float = 0.7):
        rho = mode.rho
        j = int(np.searchsorted(rho, match * rho[-1]))
        rc = rho[j]
        sl = rho[: j + 1]
        S = np.empty(j + 1)
        T = np.empty(j + 1)
        S[1:] = mode.s0[1 : j + 1] / sl[1:]
        T[1:] = mode.alpha0[1 : j + 1] / sl[1:]
        for arr, src in ((S, mode.s0), (T, mode.alpha0)):
            p = np.polyfit(rho[1:9] ** 2, src[1:9] / rho[1:9], 4)
            arr[0] = np.polyval(p, 0.0)
        ks = np.sqrt(max(mode.lam - mode.omega2, 1e-12))
        ka = np.sqrt(max(1.0 - mode.omega2, 1e-12))
        self.kappa = (ka, ks)
        cs = S[-1] * rc / k0(ks * rc)
        ca = T[-1] * rc / k1(ka * rc)

        # value and d/ds of K0(ks r)/r and K1(ka r)/r
        def tail_S(r):
            v = cs * k0(ks * r) / r
            dv_dr = cs * (-ks * k1(ks * r) / r - k0(ks * r) / r**2)
            return v, dv_dr / (2.0 * r)

        def tail_T(r):
            kr = ka * r
            v = ca * k1(kr) / r
            # K1'(z) = -K0(z) - K1(z)/z
            dv_dr = ca * (ka * (-k0(kr) - k1(kr) / kr) / r - k1(kr) / r**2)
            return v, dv_dr / (2.0 * r)

        self.S = EvenRadialSpline(sl, S, tail_S)
        self.T = EvenRadialSpline(sl, T, tail_T)


def lift_to_plane(
    mode: ModeProfile,
    grid: GridSpec,
    center: tuple[float, float] = (0.0, 0.0),
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sample (psi1, psi2, chi1, chi2) on the lattice.

    For the orientation used throughout (Phi ~ exp(-i theta)):
    psi1 = cos(th) s0, psi2 = -sin(th) s0, chi1 = sin(th) alpha0, chi2 = -cos(th) alpha0.
    """
    x1, x2 = grid.mesh()
    x1 = x1 - center[0]
    x2 = x2 - center[1]
    interp = ModeInterpolant(mode)
    s = x1 * x1 + x2 * x2
    S, _ = interp.S(s)
    T, _ = interp.T(s)
    return x1 * S, -x2 * S, x2 * T, -x1 * T


def write_mode(mode: ModeProfile, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mode.to_csv(out / "mode.csv")
    (out / "mode.json").write_text(json.dumps(mode.to_json(), indent=2))
