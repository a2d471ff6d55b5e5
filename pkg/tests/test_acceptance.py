"""End-to-end acceptance checks at desk resolution.

Every test records one summary line through the ``criterion`` fixture before
asserting, so the terminal summary lists each criterion with its measured
numbers whether it passes or not.
"""
import numpy as np
import pytest
from scipy.optimize import curve_fit

from ahvortex.analysis import (
    PairSetup,
    decay_fit,
    mode_amplitude_series,
    relative_phase_study,
    run_pair,
    run_scan,
    velocity_rescale_check,
)
from ahvortex.cli import cmd_modes
from ahvortex.config import from_dict
from ahvortex.evolution import EvolutionConfig, advance, boundary_residuals, evolve, time_reverse
from ahvortex.initial import (
    InitialConfig,
    VortexSpec,
    amplitude_from_epsilon,
    boost,
    derrick_perturbation,
    linear_perturbation,
    overlap_norm,
    sample,
    static_state,
    static_vortex,
    superpose,
)
from ahvortex.lattice import GridSpec, ModelParams, fd_d1, fd_d2, gauge_transform, magnetic_flux, total_energy

pytestmark = pytest.mark.acceptance


# -- 1 ----------------------------------------------------------------------

def test_shape_mode_frequency(tmp_path, criterion):
    cfg = from_dict({"model": {"lambda": 1, "N": 1}, "radial": {"m": 3001, "rho_max": 30}})
    info = cmd_modes(cfg, tmp_path / "modes")
    w2 = info["omega2"]
    ok = info["bound_mode"] and abs(w2 - 0.77747) <= 1e-3
    criterion(1, "shape-mode frequency", ok, f"omega^2 = {w2:.6f} (target 0.77747 +- 0.001)")
    assert ok


# -- 2 ----------------------------------------------------------------------

def test_bogomolny_energy(profile1, profile2, criterion):
    g = GridSpec(301, 301, 0.15)
    e1 = total_energy(static_state([(VortexSpec(), profile1)], g))
    e2 = total_energy(static_state([(VortexSpec(N=2), profile2)], g))
    r1, r2 = e1 / np.pi - 1, e2 / (2 * np.pi) - 1
    ok = abs(r1) < 0.01 and abs(r2) < 0.01
    criterion(2, "static energy", ok, f"N=1 E/pi - 1 = {r1:+.2e}, N=2 E/2pi - 1 = {r2:+.2e}")
    assert ok


# -- 3, 4: one unexcited head-on collision at v = 0.1 ------------------------

@pytest.fixture(scope="module")
def collision():
    st = PairSetup(n=301, h=0.15, method="none", t_max=190.0, evolution=EvolutionConfig(diagnostic_cadence=20))
    rec, series, summary = run_pair(st, 0.1)
    return rec, series, summary


def test_flux_quantisation(collision, criterion):
    rec, _, _ = collision
    n = -np.asarray(rec.flux) / (2 * np.pi)
    d0, dmax = abs(n[0] - 2), np.abs(n - 2).max()
    ok = d0 < 0.02 and dmax < 0.05
    criterion(3, "flux quantisation", ok, f"|-flux/2pi - 2| = {d0:.2e} at t=0, max {dmax:.2e} up to t={rec.times[-1]:.0f}")
    assert ok


def _outgoing_angle(rec, r_min=4.0):
    """Angle (deg) of the outgoing zeros from the x1 axis, from straight-line fits."""
    t = np.asarray(rec.times)
    k0 = int(np.argmin([np.inf if z is None else np.hypot(*(z[0] - z[1])) for z in rec.tracked]))
    rows = [(ti, z) for ti, z in zip(t[k0:], rec.tracked[k0:]) if z is not None and np.hypot(*(z[0] - z[1])) > 2 * r_min]
    if len(rows) < 5:
        return []
    tt = np.array([r[0] for r in rows])
    angles = []
    for j in range(2):
        P = np.array([r[1][j] for r in rows])
        vx = np.polyfit(tt, P[:, 0], 1)[0]
        vy = np.polyfit(tt, P[:, 1], 1)[0]
        angles.append(np.degrees(np.arctan2(abs(vy), abs(vx))))
    return angles


def test_right_angle_scattering(collision, criterion):
    rec, _, summary = collision
    each = _outgoing_angle(rec)
    ok = len(each) == 2 and all(abs(a - 90.0) <= 2.0 for a in each) and summary.n_bounces == 1
    criterion(4, "right-angle scattering", ok, f"outgoing angles {', '.join(f'{a:.2f}' for a in each)} deg, bounces {summary.n_bounces}")
    assert ok


# -- 5 ----------------------------------------------------------------------

def test_moduli_collapse(criterion):
    # the slow curves must coincide up to v t = 8; the fast one is allowed to
    # agree there too and has to leave the band later, after the collision
    x_end = 16.0
    runs = {}
    for v in (0.1, 0.2, 0.3, 0.6):
        st = PairSetup(n=241, h=0.15, method="none", t_max=(x_end + 0.5) / v, evolution=EvolutionConfig(diagnostic_cadence=5))
        _, s, _ = run_pair(st, v)
        runs[v] = s
    slow = [(v, runs[v]) for v in (0.1, 0.2, 0.3)]
    x_common = min(v * (s.times[-1] - s.times[0]) for v, s in runs.items())
    dev_slow = velocity_rescale_check(slow, x_max=8.0)
    dev_slow_all = velocity_rescale_check(slow, x_max=x_common)
    dev_fast_8 = velocity_rescale_check(slow + [(0.6, runs[0.6])], x_max=8.0)
    dev_fast_all = velocity_rescale_check(slow + [(0.6, runs[0.6])], x_max=x_common)
    ok = dev_slow < 0.05 and dev_fast_all > 0.05
    criterion(5, "moduli collapse", ok,
              f"v 0.1-0.3 gap {dev_slow:.4f} to vt=8 ({dev_slow_all:.4f} to vt={x_common:.1f}); "
              f"with v=0.6 gap {dev_fast_8:.4f} to vt=8, {dev_fast_all:.4f} to vt={x_common:.1f}")
    assert ok


# -- 6 ----------------------------------------------------------------------

def test_derrick_frequency(profile1, mode1, criterion):
    g = GridSpec(201, 201, 0.15)
    state = superpose(InitialConfig([VortexSpec(excitation="derrick", mu=0.93)], g), profile1)
    rec = evolve(state, EvolutionConfig(t_end=60.0, diagnostic_cadence=5, track_zeros=False))
    t, V = np.asarray(rec.times), np.asarray(rec.potential)
    sel = t > 5.0
    f = lambda t, c, a, w, p, gam: c + a * np.exp(-gam * t) * np.cos(w * t + p)
    p, _ = curve_fit(f, t[sel], V[sel], p0=(V[sel].mean(), np.ptp(V[sel]) / 2, 2 * mode1.omega, 0.0, 0.0))
    w2 = (abs(p[2]) / 2) ** 2
    rel = w2 / mode1.omega2 - 1
    ok = abs(rel) < 0.01
    criterion(6, "Derrick frequency", ok, f"omega^2 = {w2:.5f} vs linear {mode1.omega2:.5f} ({100 * rel:+.3f}%)")
    assert ok


# -- 7 ----------------------------------------------------------------------

def test_mode_overlap(profile1, mode1, criterion):
    g = GridSpec(151, 151, 0.2)
    lin = linear_perturbation(mode1, g)
    ov = {mu: overlap_norm(lin, derrick_perturbation(profile1, mu, g), g.h)
          for mu in (0.95, 0.98, 0.995, 1.005, 1.02, 1.05, 0.8, 0.9, 1.1, 1.2)}
    small = min(v for mu, v in ov.items() if abs(mu - 1) <= 0.05)
    large = min(ov.values())
    ok = small >= 0.95 and large >= 0.91
    criterion(7, "Derrick/linear overlap", ok, f"min over |mu-1|<=0.05: {small:.4f}; min over |mu-1|<=0.2: {large:.4f}")
    assert ok


# -- 8 ----------------------------------------------------------------------

def test_amplitude_formula(profile1, mode1, criterion):
    g = GridSpec(201, 201, 0.15)
    rel = {}
    for eps in (0.5, 0.75, 0.9):
        state = superpose(InitialConfig([VortexSpec(excitation="linear", epsilon=eps)], g), profile1, mode1)
        rec = evolve(state, EvolutionConfig(t_end=20.0, diagnostic_cadence=5, track_zeros=False))
        _, env = mode_amplitude_series(rec, mode1.omega)
        rel[eps] = env[0] / amplitude_from_epsilon(eps, mode1.omega) - 1
    ok = all(abs(r) < 0.10 for r in rel.values())
    criterion(8, "initial amplitude", ok, ", ".join(f"eps {e}: {100 * r:+.1f}%" for e, r in rel.items()))
    assert ok


# -- 9 ----------------------------------------------------------------------

def test_decay_linearity(profile1, mode1, criterion):
    g = GridSpec(241, 241, 0.15)
    state = superpose(InitialConfig([VortexSpec(excitation="linear", epsilon=0.5)], g), profile1, mode1)
    rec = evolve(state, EvolutionConfig(t_end=205.0, diagnostic_cadence=5, track_zeros=False))
    c, env = mode_amplitude_series(rec, mode1.omega)
    fit = decay_fit(c, env, (20.0, 200.0))
    ok = fit.r2 > 0.99
    criterion(9, "envelope decay", ok, f"R^2 = {fit.r2:.5f}, slope {fit.slope:.3e} over {fit.n} windows")
    assert ok


# -- 10 ---------------------------------------------------------------------

def test_multi_bounce_points(tmp_path, criterion):
    sig = {"0": 0.0, "15pi/16": 15 * np.pi / 16, "pi": np.pi, "5pi/4": 5 * np.pi / 4}
    st = PairSetup(n=181, h=0.2, epsilon=0.9, t_max=600.0)
    res = run_scan([0.06725], list(sig.values()), st, tmp_path / "scan.csv", workers=1)
    n = dict(zip(sig, res.table()[0].tolist()))
    p0 = res.points[0]
    counts = list(n.values())
    has_multi, has_single = max(counts) >= 2, 1 in counts
    zero_ok = n["0"] == 1 and p0.v_out is not None and p0.v_out > 0.06725
    ok = has_multi and has_single and zero_ok and n["15pi/16"] >= 2 and n["5pi/4"] >= 2
    band = all(abs(n[k] - 2) <= 1 for k in ("15pi/16", "5pi/4"))
    criterion(10, "multi-bounce points", ok,
              "bounces " + ", ".join(f"sigma {k}: {c}" for k, c in n.items())
              + f"; v_out(sigma 0) = {p0.v_out}; labelled points within 2 +- 1: {band}")
    assert ok


# -- 11 ---------------------------------------------------------------------

def test_out_of_phase_repulsion(criterion):
    st = PairSetup(n=181, h=0.2, epsilon=0.5, t_max=2500.0)
    rows = relative_phase_study([0.01, 0.03, 0.06, 0.1], st, delta_sigma=np.pi)
    dmin = [r["min_separation"] for r in rows]
    first = rows[0]
    ok = first["n_bounces"] == 0 and dmin[0] > 2.0 and all(np.diff(dmin) < 0)
    criterion(11, "out-of-phase repulsion", ok,
              "v/min separation/bounces " + ", ".join(f"{r['v_in']}: {r['min_separation']:.2f}/{r['n_bounces']}" for r in rows))
    assert ok


# -- 12 ---------------------------------------------------------------------

def _stencil_orders():
    orders = []
    for op, f, df in ((fd_d1, np.sin, np.cos), (fd_d2, np.cos, lambda x: -np.cos(x))):
        errs = []
        for h in (0.1, 0.05):
            n = int(round(4.0 / h)) + 1
            x = (np.arange(n + 4) - 0.5 * (n + 3)) * h
            F = np.repeat(f(x)[:, None], 9, axis=1)
            errs.append(np.abs(op(F, h, 0)[:, 2] - df(x[2:-2])).max())
        orders.append(np.log2(errs[0] / errs[1]))
    return orders


def test_numerical_integrity(profile1, criterion):
    out = {}
    s = static_state([(VortexSpec(), profile1)], GridSpec(121, 121, 0.15))
    out["static drift"] = np.abs(advance(s, EvolutionConfig(), ModelParams(), 50.0).phi - s.phi).max()

    moving = sample(boost(static_vortex(profile1), 0.3), GridSpec(81, 81, 0.15))
    cfg = EvolutionConfig(damping=False, layer_dissipation=0.0)
    fwd = advance(moving, cfg, ModelParams(), 2.0)
    back = time_reverse(advance(time_reverse(fwd), cfg, ModelParams(), 2.0))
    out["time reversal"] = max(np.abs(back.fields - moving.fields).max(), np.abs(back.velocities - moving.velocities).max())

    g = moving.grid
    x1, x2 = g.mesh()
    alpha = 0.05 * x1**2 - 0.02 * x1 * x2
    gt = gauge_transform(moving, alpha, alpha_t=0.1 * x2)
    out["gauge"] = max(abs(total_energy(gt) / total_energy(moving) - 1),
                       abs(magnetic_flux(gt) - magnetic_flux(moving)) / (2 * np.pi))
    # quartic-exact stencils make the polynomial case exact; a generic alpha
    # only agrees to the O(h^4) truncation error, reported but not gated
    generic = gauge_transform(moving, 0.5 * np.sin(x1) * np.cos(0.7 * x2))
    gauge_generic = abs(total_energy(generic) / total_energy(moving) - 1)

    orders = _stencil_orders()
    out["boundary"] = max(max(boundary_residuals(s).values()), max(boundary_residuals(fwd).values()))

    ok = (out["static drift"] < 5e-3 and out["time reversal"] < 1e-6 and out["gauge"] < 1e-10
          and all(abs(p - 4) < 0.2 for p in orders) and out["boundary"] < 1e-6)
    criterion(12, "integrity suite", ok,
              ", ".join(f"{k} {v:.1e}" for k, v in out.items()) + f", stencil orders {orders[0]:.2f}/{orders[1]:.2f}, gauge (generic alpha) {gauge_generic:.1e}")
    assert ok
