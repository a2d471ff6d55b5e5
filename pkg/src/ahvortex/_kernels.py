"""Compiled stencil kernels for the time stepper.

Layout: fields ``X`` have shape (5, n1 + 4, n2 + 4) with two ghost layers and
component order (phi1, phi2, a0, a1, a2); velocities ``V`` and accelerations
have the interior shape (5, n1, n2).
"""

from __future__ import annotations

import numpy as np
from numba import njit

G = 2
P1, P2, A0, A1, A2 = 0, 1, 2, 3, 4


@njit(cache=True)
def _tangent_d1(X, k, i0, j0, di, dj, idx, n, h):
    """4th-order derivative along (di, dj) of X[k] at line position idx in [0, n).

    The line starts at padded index (i0, j0); one-sided near the ends, so only
    the n physical nodes are used.
    """
    if idx >= 2 and idx <= n - 3:
        a = X[k, i0 + (idx - 2) * di, j0 + (idx - 2) * dj]
        b = X[k, i0 + (idx - 1) * di, j0 + (idx - 1) * dj]
        c = X[k, i0 + (idx + 1) * di, j0 + (idx + 1) * dj]
        d = X[k, i0 + (idx + 2) * di, j0 + (idx + 2) * dj]
        return (a - 8.0 * b + 8.0 * c - d) / (12.0 * h)
    f = np.empty(5)
    if idx < 2:
        for m in range(5):
            f[m] = X[k, i0 + m * di, j0 + m * dj]
        if idx == 0:
            return (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
        return (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h)
    for m in range(5):
        f[m] = X[k, i0 + (n - 1 - m) * di, j0 + (n - 1 - m) * dj]
    if idx == n - 1:
        return (25.0 * f[0] - 48.0 * f[1] + 36.0 * f[2] - 16.0 * f[3] + 3.0 * f[4]) / (12.0 * h)
    return (3.0 * f[0] + 10.0 * f[1] - 18.0 * f[2] + 6.0 * f[3] - f[4]) / (12.0 * h)


@njit(cache=True)
def fill_ghosts(X, V, h):
    """Natural boundary conditions via reflected ghosts.

    For a boundary node whose derivative along the axis must equal c, ghosts are set to u(-k) = u(+k) - 2 k h c (sign flipped on the far
    side), which makes the 4th-order central derivative at the node equal c.

    x1 faces:  d1 phi1 = -A1 phi2,  d1 phi2 = A1 phi1,  d1 A0 = d0 A1,
               d1 A2 = d2 A1,       d1 A1 = -d2 A2 (Lorenz with d0 A0 = 0)
    x2 faces:  the same with 1 <-> 2.
    """
    nx = X.shape[1] - 2 * G
    ny = X.shape[2] - 2 * G
    c = np.empty(5)
    # x1 faces
    for side in range(2):
        ib = G if side == 0 else G + nx - 1
        sgn = -1.0 if side == 0 else 1.0
        iv = 0 if side == 0 else nx - 1
        for jj in range(ny):
            j = jj + G
            p = X[P1, ib, j]
            q = X[P2, ib, j]
            a1 = X[A1, ib, j]
            c[P1] = -a1 * q
            c[P2] = a1 * p
            c[A0] = V[A1, iv, jj]
            c[A1] = -_tangent_d1(X, A2, ib, G, 0, 1, jj, ny, h)
            c[A2] = _tangent_d1(X, A1, ib, G, 0, 1, jj, ny, h)
            for k in range(5):
                for m in range(1, G + 1):
                    X[k, ib + int(sgn) * m, j] = X[k, ib - int(sgn) * m, j] + sgn * 2.0 * m * h * c[k]
    # x2 faces; tangential derivatives stay on physical nodes on both faces,
    # reading x1 ghosts here feeds the corner back on itself
    for side in range(2):
        jb = G if side == 0 else G + ny - 1
        sgn = -1.0 if side == 0 else 1.0
        jv = 0 if side == 0 else ny - 1
        for ii in range(nx):
            i = ii + G
            p = X[P1, i, jb]
            q = X[P2, i, jb]
            a2 = X[A2, i, jb]
            c[P1] = -a2 * q
            c[P2] = a2 * p
            c[A0] = V[A2, ii, jv]
            c[A2] = -_tangent_d1(X, A1, G, jb, 1, 0, ii, nx, h)
            c[A1] = _tangent_d1(X, A2, G, jb, 1, 0, ii, nx, h)
            for k in range(5):
                for m in range(1, G + 1):
                    X[k, i, jb + int(sgn) * m] = X[k, i, jb - int(sgn) * m] + sgn * 2.0 * m * h * c[k]


@njit(cache=True, inline="always")
def _stencil(X, k, i, j, i12, i12s):
    c0 = X[k, i, j]
    xm2 = X[k, i - 2, j]
    xm1 = X[k, i - 1, j]
    xp1 = X[k, i + 1, j]
    xp2 = X[k, i + 2, j]
    ym2 = X[k, i, j - 2]
    ym1 = X[k, i, j - 1]
    yp1 = X[k, i, j + 1]
    yp2 = X[k, i, j + 2]
    lap = (-xp2 + 16.0 * xp1 - 30.0 * c0 + 16.0 * xm1 - xm2 - yp2 + 16.0 * yp1 - 30.0 * c0 + 16.0 * ym1 - ym2) * i12s
    d1 = (-xp2 + 8.0 * xp1 - 8.0 * xm1 + xm2) * i12
    d2 = (-yp2 + 8.0 * yp1 - 8.0 * ym1 + ym2) * i12
    return lap, d1, d2


@njit(cache=True, inline="always")
def _d2_line(X, k, i, j, di, dj, idx, n, h):
    """Second derivative along (di, dj); one node in from either end it uses
    the one-sided 4th-order form on physical nodes only."""
    if idx == 1:
        return (10.0 * X[k, i - di, j - dj] - 15.0 * X[k, i, j] - 4.0 * X[k, i + di, j + dj]
                + 14.0 * X[k, i + 2 * di, j + 2 * dj] - 6.0 * X[k, i + 3 * di, j + 3 * dj]
                + X[k, i + 4 * di, j + 4 * dj]) / (12.0 * h * h)
    if idx == n - 2:
        return (10.0 * X[k, i + di, j + dj] - 15.0 * X[k, i, j] - 4.0 * X[k, i - di, j - dj]
                + 14.0 * X[k, i - 2 * di, j - 2 * dj] - 6.0 * X[k, i - 3 * di, j - 3 * dj]
                + X[k, i - 4 * di, j - 4 * dj]) / (12.0 * h * h)
    return (-X[k, i + 2 * di, j + 2 * dj] + 16.0 * X[k, i + di, j + dj] - 30.0 * X[k, i, j]
            + 16.0 * X[k, i - di, j - dj] - X[k, i - 2 * di, j - 2 * dj]) / (12.0 * h * h)


@njit(cache=True)
def _a0_lap_inner(X, i, j, ii, jj, nx, ny, h):
    # the A0 ghosts carry d0 A_n, a velocity; keeping them out of the
    # acceleration keeps the kick-drift-kick step time-reversible
    return _d2_line(X, A0, i, j, 1, 0, ii, nx, h) + _d2_line(X, A0, i, j, 0, 1, jj, ny, h)


@njit(cache=True)
def static_accel(X, h, lam, S):
    """Velocity-independent part of the second time derivatives.

    The Higgs equation carries no i (d_mu A^mu) Phi term: it vanishes in
    Lorenz gauge, and keeping its discrete remainder (d0 A0 against the
    stencil divergence) couples the Goldstone and gauge sectors into a
    growing mode.  The full accelerations add, pointwise,
        phi1: -2 a0 dphi2
        phi2: +2 a0 dphi1
        a0:   phi1 dphi2 - phi2 dphi1
    and d0 d0 A0 = 0 on the boundary ring.
    """
    nx = S.shape[1]
    ny = S.shape[2]
    i12 = 1.0 / (12.0 * h)
    i12s = 1.0 / (12.0 * h * h)
    half_lam = 0.5 * lam
    for ii in range(nx):
        i = ii + G
        for jj in range(ny):
            j = jj + G
            p = X[P1, i, j]
            q = X[P2, i, j]
            a0 = X[A0, i, j]
            a1 = X[A1, i, j]
            a2 = X[A2, i, j]
            lp, p1, p2 = _stencil(X, P1, i, j, i12, i12s)
            lq, q1, q2 = _stencil(X, P2, i, j, i12, i12s)
            l0, _u, _v = _stencil(X, A0, i, j, i12, i12s)
            l1, _w, _x = _stencil(X, A1, i, j, i12, i12s)
            l2, _y, _z = _stencil(X, A2, i, j, i12, i12s)
            mod2 = p * p + q * q
            pot = half_lam * (1.0 - mod2) - (a1 * a1 + a2 * a2) + a0 * a0
            S[P1, ii, jj] = lp + 2.0 * (a1 * q1 + a2 * q2) + pot * p
            S[P2, ii, jj] = lq - 2.0 * (a1 * p1 + a2 * p2) + pot * q
            if ii == 0 or jj == 0 or ii == nx - 1 or jj == ny - 1:
                S[A0, ii, jj] = 0.0
            else:
                if ii == 1 or ii == nx - 2 or jj == 1 or jj == ny - 2:
                    l0 = _a0_lap_inner(X, i, j, ii, jj, nx, ny, h)
                S[A0, ii, jj] = l0 - a0 * mod2
            S[A1, ii, jj] = l1 + p * q1 - q * p1 - a1 * mod2
            S[A2, ii, jj] = l2 + p * q2 - q * p2 - a2 * mod2


@njit(cache=True)
def kick_implicit(X, V, S, D, tau, use_d):
    """v <- solution of v' = v + tau (S + D + B(x) v'), in place.

    B(x) is the velocity coupling listed in ``static_accel``: a rotation of
    (dphi1, dphi2) by 2 a0, solved in closed form, after which the charge
    density feeding da0 uses the updated Higgs velocity (da0 is frozen on
    the ring).
    """
    nx = V.shape[1]
    ny = V.shape[2]
    for ii in range(nx):
        i = ii + G
        for jj in range(ny):
            j = jj + G
            p = X[P1, i, j]
            q = X[P2, i, j]
            a0 = X[A0, i, j]
            rp = V[P1, ii, jj] + tau * S[P1, ii, jj]
            rq = V[P2, ii, jj] + tau * S[P2, ii, jj]
            r0 = V[A0, ii, jj] + tau * S[A0, ii, jj]
            r3 = V[A1, ii, jj] + tau * S[A1, ii, jj]
            r4 = V[A2, ii, jj] + tau * S[A2, ii, jj]
            if use_d:
                rp += tau * D[P1, ii, jj]
                rq += tau * D[P2, ii, jj]
                r0 += tau * D[A0, ii, jj]
                r3 += tau * D[A1, ii, jj]
                r4 += tau * D[A2, ii, jj]
            V[A1, ii, jj] = r3
            V[A2, ii, jj] = r4
            # u1' + b u2' = rp, -b u1' + u2' = rq
            b = 2.0 * tau * a0
            det = 1.0 + b * b
            u1 = (rp - b * rq) / det
            u2 = (rq + b * rp) / det
            V[P1, ii, jj] = u1
            V[P2, ii, jj] = u2
            if not (ii == 0 or jj == 0 or ii == nx - 1 or jj == ny - 1):
                V[A0, ii, jj] = r0 + tau * (p * u2 - q * u1)


@njit(cache=True)
def kick_explicit(X, V, S, D, tau, use_d):
    """v <- v + tau (S + D + B(x) v), in place."""
    nx = V.shape[1]
    ny = V.shape[2]
    for ii in range(nx):
        i = ii + G
        for jj in range(ny):
            j = jj + G
            p = X[P1, i, j]
            q = X[P2, i, j]
            a0 = X[A0, i, j]
            u1 = V[P1, ii, jj]
            u2 = V[P2, ii, jj]
            w = V[A0, ii, jj]
            ring = ii == 0 or jj == 0 or ii == nx - 1 or jj == ny - 1
            acc0 = S[P1, ii, jj] - 2.0 * a0 * u2
            acc1 = S[P2, ii, jj] + 2.0 * a0 * u1
            acc2 = 0.0 if ring else S[A0, ii, jj] + p * u2 - q * u1
            acc3 = S[A1, ii, jj]
            acc4 = S[A2, ii, jj]
            if use_d:
                acc0 += D[P1, ii, jj]
                acc1 += D[P2, ii, jj]
                if not ring:
                    acc2 += D[A0, ii, jj]
                acc3 += D[A1, ii, jj]
                acc4 += D[A2, ii, jj]
            V[P1, ii, jj] = u1 + tau * acc0
            V[P2, ii, jj] = u2 + tau * acc1
            V[A0, ii, jj] = w + tau * acc2
            V[A1, ii, jj] += tau * acc3
            V[A2, ii, jj] += tau * acc4


@njit(cache=True)
def drift(X, V, dt):
    nx = V.shape[1]
    ny = V.shape[2]
    for k in range(5):
        for ii in range(nx):
            for jj in range(ny):
                X[k, ii + G, jj + G] += dt * V[k, ii, jj]


@njit(cache=True)
def _edge_d1(beta, ii, jj, axis, h):
    n = beta.shape[axis]
    idx = ii if axis == 0 else jj
    di = 1 if axis == 0 else 0
    dj = 1 - di
    if idx >= 2 and idx <= n - 3:
        return (beta[ii - 2 * di, jj - 2 * dj] - 8.0 * beta[ii - di, jj - dj]
                + 8.0 * beta[ii + di, jj + dj] - beta[ii + 2 * di, jj + 2 * dj]) / (12.0 * h)
    # one-sided: walk inward from the nearest end
    if idx < 2:
        i0 = ii - idx * di
        j0 = jj - idx * dj
        s = 1
    else:
        i0 = ii + (n - 1 - idx) * di
        j0 = jj + (n - 1 - idx) * dj
        s = -1
    f0 = beta[i0, j0]
    f1 = beta[i0 + s * di, j0 + s * dj]
    f2 = beta[i0 + 2 * s * di, j0 + 2 * s * dj]
    f3 = beta[i0 + 3 * s * di, j0 + 3 * s * dj]
    f4 = beta[i0 + 4 * s * di, j0 + 4 * s * dj]
    if idx == 0 or idx == n - 1:
        d = (-25.0 * f0 + 48.0 * f1 - 36.0 * f2 + 16.0 * f3 - 3.0 * f4) / (12.0 * h)
    else:
        d = (-3.0 * f0 - 10.0 * f1 + 18.0 * f2 - 6.0 * f3 + f4) / (12.0 * h)
    return d * s


@njit(cache=True, inline="always")
def _refl(i, n):
    if i < 0:
        return -i
    if i >= n:
        return 2 * (n - 1) - i
    return i


@njit(cache=True, inline="always")
def _delta4(V, c, ii, jj):
    """Undivided 4th difference (x1 plus x2) of V[c], mirrored at the edges."""
    nx = V.shape[1]
    ny = V.shape[2]
    out = 6.0 * V[c, ii, jj] * 2.0
    out += V[c, _refl(ii - 2, nx), jj] - 4.0 * V[c, _refl(ii - 1, nx), jj]
    out += V[c, _refl(ii + 2, nx), jj] - 4.0 * V[c, _refl(ii + 1, nx), jj]
    out += V[c, ii, _refl(jj - 2, ny)] - 4.0 * V[c, ii, _refl(jj - 1, ny)]
    out += V[c, ii, _refl(jj + 2, ny)] - 4.0 * V[c, ii, _refl(jj + 1, ny)]
    return out


@njit(cache=True)
def damping_term(X, V, K, h, D, beta, sigma):
    """D = -K v_perp - (sigma/h) K delta4(v).

    beta = Im(conj(Phi) dPhi/dt)/|Phi|^2 is the local gauge-orbit rate; the
    Higgs velocity loses its component along i Phi and A_i velocities lose
    d_i beta.  d0 A0 lies wholly along the orbit (its generator d_t alpha is
    free at fixed time), and friction on it would feed the negative-norm
    Lorenz-gauge sector, so it is left alone.  The 4th-difference term is
    Kreiss-Oliger dissipation confined to the layer; the ghost closure at
    the corners otherwise feeds grid-scale growing modes.
    """
    nx = V.shape[1]
    ny = V.shape[2]
    for ii in range(nx):
        for jj in range(ny):
            p = X[P1, ii + G, jj + G]
            q = X[P2, ii + G, jj + G]
            m2 = p * p + q * q
            if m2 > 1e-12:
                beta[ii, jj] = (p * V[P2, ii, jj] - q * V[P1, ii, jj]) / m2
            else:
                beta[ii, jj] = 0.0
    for ii in range(nx):
        for jj in range(ny):
            k = K[ii, jj]
            if k <= 1e-14:
                for c in range(5):
                    D[c, ii, jj] = 0.0
                continue
            p = X[P1, ii + G, jj + G]
            q = X[P2, ii + G, jj + G]
            b = beta[ii, jj]
            D[P1, ii, jj] = -k * (V[P1, ii, jj] + b * q)
            D[P2, ii, jj] = -k * (V[P2, ii, jj] - b * p)
            D[A0, ii, jj] = 0.0
            D[A1, ii, jj] = -k * (V[A1, ii, jj] - _edge_d1(beta, ii, jj, 0, h))
            D[A2, ii, jj] = -k * (V[A2, ii, jj] - _edge_d1(beta, ii, jj, 1, h))
            if sigma > 0.0:
                ks = k * sigma / h
                for c in range(5):
                    D[c, ii, jj] -= ks * _delta4(V, c, ii, jj)
