"""Identity checks run by ``tfdmagic verify``.

Each check compares two independent evaluations of the same quantity and
reports the largest residual against its tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ed
from .contour import ContourSpec, build_contour, derivative_operator
from .saddle import sre_solve, sre_value
from .thermal import free_energy, sff_slope

LN2 = math.log(2.0)


@dataclass
class CheckResult:
    name: str
    max_residual: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_residual) and self.max_residual <= self.tolerance)


def single_string_m2(j_prime: float, t) -> np.ndarray:
    """SRE of the evolved EPR state for ``H = J' 4 psi_1 psi_2 psi_3 psi_4`` at N = 4.

    Conjugation by ``U = cos(J't/4) + i sin(J't/4) P`` rotates each string that
    anticommutes with ``P`` into its partner, giving 8 coefficients 1, 8 equal
    to ``cos(J't/2)`` and 8 equal to ``sin(J't/2)``.
    """
    phi = 0.5 * j_prime * np.asarray(t, dtype=float)
    return -np.log((1 + np.cos(phi) ** 4 + np.sin(phi) ** 4) / 2)


def two_level_sff(j_prime: float, beta: float, t) -> np.ndarray:
    """``|2 e^{-(beta+it)J'/4} + 2 e^{(beta+it)J'/4}|^2`` for the N = 4 single-coupling model."""
    z = beta + 1j * np.asarray(t, dtype=float)
    return np.abs(2 * np.exp(-z * j_prime / 4) + 2 * np.exp(z * j_prime / 4)) ** 2


def check_epr(n_values=(4, 6)) -> CheckResult:
    worst = 0.0
    for n in n_values:
        spec = ed.majorana_spectrum(ed.build_epr(n))
        diag = spec.diagonal()
        worst = max(worst, float(np.abs(diag - 1).max()), abs(ed.stabilizer_renyi(spec)))
        worst = max(worst, abs(spec.power2 - 2**n) / 2**n)
    return CheckResult("epr_string_phases", worst, 1e-10, "(-i)^n c_vv = 1 and M2 = 0 for EPR")


def check_averaged_identity(n: int = 6, seed: int = 0, betas=(0.0, 1.0, 2.0), times=(0.0, 0.5, 2.0)) -> CheckResult:
    system = ed.SYKSystem(ed.sample_couplings(ed.ModelParams(n, 4, 1.0, seed)))
    epr = ed.build_epr(n)
    worst = 0.0
    for beta in betas:
        tfd, _ = ed.build_tfd(system, beta, epr)
        for t in times:
            spec = ed.majorana_spectrum(ed.evolve(system, t, tfd))
            lhs = float(np.mean(spec.diagonal()))
            worst = max(worst, abs(lhs - ed.averaged_diagonal_prediction(system, beta, t)))
    return CheckResult("averaged_diagonal_identity", worst, 1e-10, f"N={n}")


def check_wightman(n: int = 6, seed: int = 0, n_strings: int = 20) -> CheckResult:
    system = ed.SYKSystem(ed.sample_couplings(ed.ModelParams(n, 4, 1.0, seed)))
    rng = ed.realization_rng(seed, 10_000)
    beta, t = 1.0, 0.7
    tfd, _ = ed.build_tfd(system, beta, ed.build_epr(n))
    spec = ed.majorana_spectrum(ed.evolve(system, t, tfd))
    worst = 0.0
    for _ in range(n_strings):
        vl, vr = (int(v) for v in rng.integers(0, 1 << n, size=2))
        w = ed.wightman_coefficient(system, beta, t, vl, vr)
        worst = max(worst, abs(w - spec.coefficients[ed.string_index(vl, vr, n)]))
    return CheckResult("wightman_vs_spectrum", worst, 1e-10, f"N={n}, {n_strings} strings")


def check_single_string(j_prime: float = 1.3, n_times: int = 50) -> CheckResult:
    system = ed.SYKSystem(ed.CouplingTensor.single(4, (0, 1, 2, 3), j_prime))
    epr = ed.build_epr(4)
    times = np.linspace(0.0, 20.0, n_times)
    m2 = np.array([ed.stabilizer_renyi(ed.majorana_spectrum(ed.evolve(system, t, epr))) for t in times])
    worst = float(np.abs(m2 - single_string_m2(j_prime, times)).max())
    sff = ed.exact_sff(system, 0.8, times)
    worst_sff = float(np.abs(sff - two_level_sff(j_prime, 0.8, times)).max())
    return CheckResult("single_string_oracle", max(worst, worst_sff), 1e-9, "N=4 closed forms for M2 and SFF")


def check_free_energy() -> CheckResult:
    return CheckResult("free_energy_J0", abs(free_energy(1.0, 4, 0.0).real - 0.5 * LN2), 1e-12)


def check_derivative_inverse(beta: float = 1.0, t: float = 1.0, n: int = 10) -> CheckResult:
    grid = build_contour(ContourSpec(beta, t, n, n))
    worst = 0.0
    for sigma in (1, -1):
        d = derivative_operator(grid, sigma).matrix
        worst = max(worst, float(np.abs(d @ grid.free_propagator(sigma) - np.eye(grid.n_points)).max()))
    return CheckResult("derivative_inverts_free_propagator", worst, 1e-12)


def check_symmetric_identity(beta: float = 1.0, t: float = 0.5, n: int = 40) -> CheckResult:
    f_beta = free_energy(beta).real
    sol = sre_solve(beta, t, spec=ContourSpec(beta, t, n, n))
    pred = 2 * LN2 - 4 * (sff_slope(beta, [t]).ln_sff_per_mode[0] - f_beta)
    rel = abs(sre_value(sol, f_beta) - pred) / abs(pred)
    return CheckResult("symmetric_saddle_vs_sff", rel, 1e-3, f"beta={beta}, t={t}, n_im=n_re={n} (relative)")


CHECKS = (
    check_epr,
    check_averaged_identity,
    check_wightman,
    check_single_string,
    check_free_energy,
    check_derivative_inverse,
    check_symmetric_identity,
)


def run_checks() -> list[CheckResult]:
    return [check() for check in CHECKS]
