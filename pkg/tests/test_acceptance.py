"""Acceptance criteria A1-A10; each test prints one ``A<k> PASS|FAIL: ...`` line.

The slow criteria (A5-A7, A9, A10) use the grids documented next to each
test; A5 and the A10 grid-doubling check run at the default 200 + 200 grid.
"""

import json
import math

import numpy as np
import pytest

from tfdmagic import cli, ed, fitkit, verify
from tfdmagic.contour import ContourSpec
from tfdmagic.dynamics import DynamicsOptions, find_transition, m2_curve
from tfdmagic.saddle import POLARIZED, sre_solve, sre_value
from tfdmagic.thermal import free_energy, renyi2_per_mode, sff_slope

LN2 = math.log(2.0)
A1_SIZES = (4, 6, 8)
A1_BETAS = (0.0, 1.0, 2.0)
A1_TIMES = (0.0, 0.5, 2.0)
N_REALIZATIONS = 10


@pytest.fixture(scope="module")
def ed_states():
    """Every (N, realization, beta, t) state of A1, with its system."""
    out = []
    for n in A1_SIZES:
        epr = ed.build_epr(n)
        for r in range(N_REALIZATIONS):
            system = ed.SYKSystem(ed.sample_couplings(ed.ModelParams(n, 4, 1.0, seed=2024), r))
            for beta in A1_BETAS:
                tfd, _ = ed.build_tfd(system, beta, epr)
                for t in A1_TIMES:
                    out.append((n, r, beta, t, system, ed.majorana_spectrum(ed.evolve(system, t, tfd))))
    return out


def prediction(beta, t):
    f_beta = free_energy(beta).real
    return 2 * LN2 - 4 * (sff_slope(beta, [t]).ln_sff_per_mode[0] - f_beta)


# ---------------------------------------------------------------------- ED


def test_a1_averaged_diagonal_identity(ed_states, criterion):
    worst = max(
        abs(float(np.mean(spec.diagonal())) - ed.averaged_diagonal_prediction(system, beta, t))
        for _, _, beta, t, system, spec in ed_states
    )
    criterion("A1", worst <= 1e-10, f"max |mean diag - |Z(beta/2+it)|^2/(Z 2^(N/2))| = {worst:.2e} over {len(ed_states)} states (tol 1e-10)")


def test_a2_wightman_coefficients(ed_states, criterion):
    worst, count = 0.0, 0
    for n, r, beta, t, system, spec in ed_states:
        if (beta, t) != (1.0, 0.5):
            continue
        rng = ed.realization_rng(99, r)
        for _ in range(100):
            vl, vr = (int(v) for v in rng.integers(0, 1 << n, size=2))
            w = ed.wightman_coefficient(system, beta, t, vl, vr)
            worst = max(worst, abs(w - spec.coefficients[ed.string_index(vl, vr, n)]))
            count += 1
    criterion("A2", worst <= 1e-10, f"max |Wightman - coefficient| = {worst:.2e} on {count} strings (tol 1e-10)")


def test_a3_bounds_and_normalization(ed_states, criterion):
    imag = max(spec.max_imag for *_, spec in ed_states)
    norm = max(abs(spec.power2 - 2**n) for n, *_, spec in ed_states)
    m2 = [(n, ed.stabilizer_renyi(spec)) for n, *_, spec in ed_states]
    # -1e-12: summation round-off at exactly stabilizer states
    bounds = all(-1e-12 <= v <= n * LN2 + 1e-9 for n, v in m2)
    epr = max(abs(ed.stabilizer_renyi(ed.majorana_spectrum(ed.build_epr(n)))) for n in A1_SIZES)
    free = ed.SYKSystem.free(6)
    free_m2 = max(
        abs(ed.stabilizer_renyi(ed.majorana_spectrum(ed.evolve(free, t, ed.build_epr(6))))) for t in (0.0, 1.0, 5.0, 20.0)
    )
    ok = imag <= 1e-10 and norm <= 1e-9 and bounds and epr <= 1e-10 and free_m2 <= 1e-10
    criterion(
        "A3",
        ok,
        f"max Im c = {imag:.1e}, max |sum c^2 - 2^N| = {norm:.1e}, bounds {'hold' if bounds else 'violated'}, "
        f"M2(EPR) = {epr:.1e}, M2(J=0) = {free_m2:.1e}",
    )


def test_a4_single_string_oracle(criterion):
    jp = 1.3
    system = ed.SYKSystem(ed.CouplingTensor.single(4, (0, 1, 2, 3), jp))
    epr = ed.build_epr(4)
    times = np.linspace(0.0, 20.0, 50)
    m2 = np.array([ed.stabilizer_renyi(ed.majorana_spectrum(ed.evolve(system, t, epr))) for t in times])
    err_m2 = float(np.abs(m2 - verify.single_string_m2(jp, times)).max())
    err_sff = float(np.abs(ed.exact_sff(system, 0.8, times) - verify.two_level_sff(jp, 0.8, times)).max())
    criterion("A4", err_m2 <= 1e-9 and err_sff <= 1e-10, f"M2 oracle error {err_m2:.1e} (tol 1e-9), SFF error {err_sff:.1e} (tol 1e-10)")


# ------------------------------------------------------------- large N


@pytest.mark.slow
def test_a5_symmetric_saddle_matches_prediction(criterion):
    rows = []
    for beta in (1.0, 2.0):
        f_beta = free_energy(beta).real
        for t in (0.5, 1.0, 2.0, 4.0):
            pred = prediction(beta, t)
            errs = []
            for n in (100, 200):
                sol = sre_solve(beta, t, spec=ContourSpec(beta, t, n, n))
                errs.append(abs(sre_value(sol, f_beta) / pred - 1))
            rows.append((beta, t, errs[0], errs[1]))
    worst = max(r[3] for r in rows)
    improving = all(r[3] < r[2] for r in rows)
    detail = ", ".join(f"({b:g},{t:g}) {e:.1e}" for b, t, _, e in rows)
    criterion("A5", worst <= 1e-3 and improving, f"relative error at 200+200 (tol 1e-3, all below 100+100: {improving}): {detail}")


@pytest.mark.slow
def test_a6_transition_beta_one(criterion):
    # coarse grid: 40 imaginary points, real-time spacing 0.1
    opts = DynamicsOptions(n_im=40, re_step=0.1, scan_step=1.0, resolution=0.05)
    res = find_transition(1.0, (0.0, 10.0), opts)
    rows = {t: (a, b) for t, a, b in res.scan}
    lo, hi = res.bracket if res.bracket else (math.nan, math.nan)
    kink = False
    if res.t_star is not None:
        a0, b0 = rows[lo]
        a1, b1 = rows[hi]
        slope_sym, slope_ssb = (a1 - a0) / (hi - lo), (b1 - b0) / (hi - lo)
        kink = abs(slope_sym - slope_ssb) > 0.1 * abs(slope_sym)
    sol = sre_solve(1.0, 10.0, spec=opts.spec(1.0, 10.0), seed_strategy=POLARIZED)
    t_star = math.nan if res.t_star is None else res.t_star
    ok = abs(t_star - 4.8) <= 0.3 and kink and sol.order_parameter > 0.99
    criterion("A6", ok, f"t*J = {t_star:.3f} (4.8 +- 0.3), kink {'present' if kink else 'absent'}, <sigma>(tJ=10) = {sol.order_parameter:.6f}")


@pytest.mark.slow
def test_a7_low_temperature_transitions(criterion):
    # coarse grid: 10 imaginary points, real-time spacing 0.25; scan step 5,
    # bisected to 0.25. Both branches carry the same O(t h^2) grid drift.
    opts = DynamicsOptions(n_im=10, re_step=0.25, scan_step=5.0, resolution=0.25)
    r2 = find_transition(2.0, (0.0, 50.0), opts)
    r3 = find_transition(3.0, (0.0, 50.0), opts)
    logged = all(not (math.isnan(a) or math.isnan(b)) for t, a, b in r2.scan if t >= 10)
    if r2.status == "crossing-found":
        part2 = abs(r2.t_star / 48.3 - 1) <= 0.1
        d2 = f"beta=2 crossing at t*J = {r2.t_star:.2f} (48.3 +- 10%)"
    else:
        part2 = r2.status == "none-below-tmax" and logged
        d2 = f"beta=2 {r2.status}, both actions logged: {logged}"
    part3 = r3.status != "crossing-found"
    d3 = f"beta=3 {r3.status}" + ("" if part3 else f" at t*J = {r3.t_star:.2f}")
    criterion("A7", part2 and part3, f"{d2}; {d3}")


def test_a8_thermal_solver(criterion):
    s2 = renyi2_per_mode(30.0)
    free = abs(free_energy(1.0, 4, 0.0).real - 0.5 * LN2)
    beta = 0.05
    curv = (free_energy(beta).real - 0.5 * LN2) / (beta**2 / 128)
    ok = abs(s2 / 0.2324 - 1) <= 0.05 and free <= 1e-12 and abs(curv - 1) <= 0.01
    criterion("A8", ok, f"S2(beta J=30)/N = {s2:.5f} (0.2324 +- 5%), J=0 error {free:.1e}, <H^2>/N ratio to J^2/64 = {curv:.5f}")


@pytest.mark.slow
def test_a9_fits(criterion):
    x = np.linspace(0.5, 12.0, 24)
    synth = {
        "saturation": ((0.3, 0.7), fitkit.fit_saturation),
        "lorentzian": ((0.75, -2.0, 10.0), fitkit.fit_lorentzian),
        "boundary": ((1.0, 40.0, 30.0), fitkit.fit_boundary),
    }
    worst = 0.0
    for model_id, (true, fit) in synth.items():
        y = fitkit.MODELS[model_id].func(np.array(true), x)
        res = fit(np.column_stack([x, y]))
        worst = max(worst, float(np.max(np.abs(res.param_vector() / np.array(true) - 1))))
    # beta J = 1 ssb branch past the transition, and the symmetric branch at
    # long times; both followed by continuation in t on coarse grids
    curve = m2_curve(1.0, np.arange(3.0, 12.5, 0.5), DynamicsOptions(n_im=40, re_step=0.1), branches=("ssb",))
    ssb = [(p.t, p.m2_ssb) for p in curve.points if not math.isnan(p.m2_ssb)]
    sat = fitkit.fit_saturation(ssb)
    long = m2_curve(1.0, np.arange(10.0, 41.0, 2.0), DynamicsOptions(n_im=40, re_step=0.25), branches=("symmetric",))
    lor = fitkit.fit_lorentzian([(p.t, p.m2_symmetric) for p in long.points])
    ok = worst <= 1e-8 and sat.r_squared > 0.99 and lor.r_squared > 0.98
    criterion(
        "A9",
        ok,
        f"synthetic max relative parameter error {worst:.1e} (tol 1e-8), ssb saturation r2 = {sat.r_squared:.5f} "
        f"on {sat.n_points} points, symmetric Lorentzian r2 = {lor.r_squared:.5f}",
    )


@pytest.mark.slow
def test_a10_properties(criterion, tmp_path):
    spec = ContourSpec(1.0, 8.0, 20, 40)
    sol = sre_solve(1.0, 8.0, spec=spec, seed_strategy=POLARIZED)
    flipped = np.outer(sol.grid.gauge, sol.grid.gauge) * sol.green
    mirror = sre_solve(1.0, 8.0, spec=spec, seed_strategy=POLARIZED, initial=flipped)
    z2 = abs(mirror.order_parameter + sol.order_parameter) <= 1e-9 and abs(mirror.action_per_mode - sol.action_per_mode) <= 1e-9

    f1 = free_energy(1.0).real
    coarse = sre_value(sre_solve(1.0, 2.0, spec=ContourSpec(1.0, 2.0, 200, 200)), f1)
    fine = sre_value(sre_solve(1.0, 2.0, spec=ContourSpec(1.0, 2.0, 400, 400)), f1)
    doubling = abs(fine - coarse)

    cfg = {"mode": "ed", "model": {"q": 4, "n_majorana": 6}, "sweep": {"beta": [0.0, 1.0], "t": [0.0, 1.5], "realizations": 4}}
    path = tmp_path / "ed.json"
    path.write_text(json.dumps(cfg))
    codes = [cli.main(["ed", "--config", str(path), "--seed", "5", "--workers", str(w), "--out", str(tmp_path / f"w{w}")]) for w in (1, 2)]
    same = codes == [0, 0] and all(
        (tmp_path / "w1" / f).read_bytes() == (tmp_path / "w2" / f).read_bytes() for f in ("ed_m2.csv", "ed_realizations.csv")
    )
    ok = z2 and doubling < 1e-3 and same
    criterion(
        "A10",
        ok,
        f"Z2 flip <sigma> {sol.order_parameter:.6f} -> {mirror.order_parameter:.6f}, action change "
        f"{abs(mirror.action_per_mode - sol.action_per_mode):.1e}; grid doubling at (1,2) changes M2/N by {doubling:.1e}; "
        f"outputs byte-identical across worker counts: {same}",
    )
