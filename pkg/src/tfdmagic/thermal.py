"""Large-N SYK partition function at complex inverse temperature.

The Schwinger-Dyson equations only involve ``beta * J``, so a solve at
complex ``beta_c`` is done at unit inverse temperature with the complex
coupling ``g^2 = (beta_c J)^2``. In these units

    G(i w_n) = 1 / (-i w_n - Sigma(i w_n)),   Sigma(tau) = g^2 G(tau)^{q-1},
    w_n = pi (2n + 1),  tau in (0, 1).

The per-mode free energy ``f = ln Z / N`` is

    f = ln2/2 + 1/2 sum_n ln(1 + Sigma_n / (i w_n)) - (1 - 1/q) g^2/2 int G^q,

whose real part is independent of the logarithm branch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import polygamma

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class BranchLossError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    n_freq: int = 2**14
    tol: float = 1e-10
    damping: float = 0.5
    damping_floor: float = 0.05
    max_iter: int = 5000


@dataclass
class ThermalSolution:
    """Converged thermal propagator.

    ``omega``, ``green`` and ``self_energy`` are in physical units on the
    Matsubara window ``w_n = pi(2n+1)/beta_c``; ``green_unit`` is the same
    propagator at unit inverse temperature, used to seed continuation.
    """

    beta_complex: complex
    q: int
    j_coupling: float
    omega: np.ndarray
    green: np.ndarray
    self_energy: np.ndarray
    green_unit: np.ndarray
    green_tau: np.ndarray
    ln_z_per_mode: complex
    iterations: int
    residual: float


class _Matsubara:
    """FFT plumbing between ``tau_k = (k + 1/2)/L`` and ``w_n``, ``n = -L/2 .. L/2-1``."""

    def __init__(self, n_freq: int):
        if n_freq < 16 or n_freq & (n_freq - 1):
            raise ValueError(f"n_freq must be a power of two >= 16, got {n_freq}")
        self.n_freq = n_freq
        L = 2 * n_freq
        self.L = L
        self.n = np.arange(-n_freq, n_freq)
        self.omega = np.pi * (2 * self.n + 1)
        self.tau = (np.arange(L) + 0.5) / L
        self._pos = self.n % L
        self._pre = np.exp(-1j * np.pi * self.n / L)
        self._post = np.exp(-1j * np.pi * (np.arange(L) + 0.5) / L)
        self.g0 = 1.0 / (-1j * self.omega)

    def sigma_to_freq(self, sig_tau: np.ndarray, sigma0: complex) -> np.ndarray:
        """Transform of a self-energy with ``Sigma(0+) = Sigma(1-) = sigma0``.

        The constant carrying the endpoint jumps is transformed exactly; the
        remainder is continuous under antiperiodic extension.
        """
        return self.to_freq(sig_tau - sigma0) + sigma0 * 2j / self.omega

    def to_tau(self, xn: np.ndarray) -> np.ndarray:
        """``sum_n exp(-i w_n tau_k) x_n``."""
        buf = np.zeros(self.L, dtype=complex)
        buf[self._pos] = xn * self._pre
        return np.fft.fft(buf) * self._post

    def to_freq(self, xt: np.ndarray) -> np.ndarray:
        """Midpoint rule for ``int_0^1 exp(i w_n tau) x(tau) dtau``."""
        buf = np.fft.ifft(xt * np.conj(self._post))
        return buf[self._pos] * np.conj(self._pre)


_GRIDS: dict[int, _Matsubara] = {}


def _grid(n_freq: int) -> _Matsubara:
    if n_freq not in _GRIDS:
        _GRIDS[n_freq] = _Matsubara(n_freq)
    return _GRIDS[n_freq]


def _free_energy(grid: _Matsubara, g2: complex, q: int, sig_n, g_tau) -> complex:
    log_sum = np.sum(np.log1p(sig_n / (1j * grid.omega)))
    # high-frequency tail: Sigma_n ~ -2 Sigma(0+)/(i w) beyond the window
    sigma0 = g2 * 0.5 ** (q - 1)
    tail = sigma0 * polygamma(1, grid.n_freq + 0.5) / (2 * np.pi**2)
    interaction = (1 - 1 / q) * g2 * np.mean(g_tau**q)
    return 0.5 * math.log(2.0) + 0.5 * log_sum + tail - 0.5 * interaction


def thermal_solve(
    beta_complex,
    q: int = 4,
    j_coupling: float = 1.0,
    n_freq: int | None = None,
    tol: float | None = None,
    damping: float | None = None,
    options: SolverOptions | None = None,
    seed: np.ndarray | None = None,
) -> ThermalSolution:
    """Damped fixed-point solve of the Matsubara Schwinger-Dyson equations.

    ``seed`` is a previous ``green_unit`` (same ``n_freq``) to continue from.
    Raises :class:`ConvergenceError` after ``max_iter`` iterations.
    """
    opts = options or SolverOptions()
    n_freq = n_freq or opts.n_freq
    tol = opts.tol if tol is None else tol
    x0 = x = opts.damping if damping is None else damping
    beta_c = complex(beta_complex)
    if beta_c.real <= 0 and beta_c != 0:
        raise ValueError(f"Re(beta) must be positive, got {beta_c}")
    if q % 2 or q < 2:
        raise ValueError(f"q must be even, got {q}")
    grid = _grid(n_freq)
    g2 = (beta_c * j_coupling) ** 2
    if abs(beta_c) * abs(j_coupling) * 50 > grid.omega[-1]:
        raise ValueError("Matsubara window too small for this beta*J; increase n_freq")

    sigma0 = g2 * 0.5 ** (q - 1)
    gn = grid.g0.copy() if seed is None else np.array(seed, dtype=complex)
    res_prev = np.inf
    residual = np.inf
    it = 0
    for it in range(1, opts.max_iter + 1):
        g_tau = 0.5 + grid.to_tau(gn - grid.g0)
        sig_n = grid.sigma_to_freq(g2 * g_tau ** (q - 1), sigma0)
        g_new = 1.0 / (-1j * grid.omega - sig_n)
        residual = float(np.max(np.abs(g_new - gn)))
        if residual < tol:
            gn = g_new
            break
        if residual > res_prev:
            x = max(x / 2, opts.damping_floor)
        else:
            # recover slowly, or a transient can pin the mixing at the floor
            x = min(x * 1.1, x0)
        res_prev = residual
        gn = (1 - x) * gn + x * g_new
    else:
        raise ConvergenceError(
            f"thermal solve at beta={beta_c} did not converge in {opts.max_iter} iterations "
            f"(residual {residual:.3g})",
            residual,
        )
    g_tau = 0.5 + grid.to_tau(gn - grid.g0)
    sig_n = grid.sigma_to_freq(g2 * g_tau ** (q - 1), sigma0)
    f = _free_energy(grid, g2, q, sig_n, g_tau)
    scale = beta_c if beta_c != 0 else 1.0
    return ThermalSolution(
        beta_complex=beta_c,
        q=q,
        j_coupling=j_coupling,
        omega=grid.omega / scale,
        green=gn * scale,
        self_energy=sig_n / scale,
        green_unit=gn,
        green_tau=g_tau,
        ln_z_per_mode=complex(f),
        iterations=it,
        residual=residual,
    )


def free_energy(beta, q: int = 4, j_coupling: float = 1.0, options: SolverOptions | None = None) -> complex:
    """``ln Z(beta) / N``; exact ``ln2/2`` at ``beta J = 0``."""
    if beta * j_coupling == 0:
        return complex(0.5 * math.log(2.0))
    return thermal_solve(beta, q, j_coupling, options=options).ln_z_per_mode


def renyi2_per_mode(beta: float, q: int = 4, j_coupling: float = 1.0, options: SolverOptions | None = None) -> float:
    """Thermal second Renyi entropy per mode, ``2 f(beta) - f(2 beta)``."""
    return float((2 * free_energy(beta, q, j_coupling, options) - free_energy(2 * beta, q, j_coupling, options)).real)


@dataclass
class SlopeCurve:
    beta: float
    times: np.ndarray
    ln_sff_per_mode: np.ndarray  # 2 Re f(beta/2 + it)
    ln_z_complex: np.ndarray  # f(beta/2 + it)


def sff_slope(
    beta: float,
    t,
    q: int = 4,
    j_coupling: float = 1.0,
    options: SolverOptions | None = None,
    t_step: float = 0.25,
    jump_tol: float = 0.05,
) -> SlopeCurve:
    """Slope (disconnected) ``ln SFF_{beta/2}(t) / N = 2 Re f(beta/2 + it)``.

    The requested times are visited in increasing order, inserting
    intermediate points no more than ``t_step`` apart; each solve is seeded
    with the previous one so that the continued saddle is followed. A jump
    in ``Re f`` larger than ``jump_tol`` between neighbours raises
    :class:`BranchLossError`.
    """
    opts = options or SolverOptions()
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0):
        raise ValueError("times must be non-negative")
    if j_coupling == 0:
        fval = np.full(times.shape, 0.5 * math.log(2.0), dtype=complex)
        return SlopeCurve(beta, times, 2 * fval.real, fval)
    if beta <= 0:
        raise ValueError("the slope continuation needs beta > 0")
    order = np.argsort(times)
    path = _continuation_path(times[order], t_step)
    values: dict[float, complex] = {}
    seed = None
    prev = None
    for tt in path:
        sol = thermal_solve(beta / 2 + 1j * tt, q, j_coupling, options=opts, seed=seed)
        seed = sol.green_unit
        f = sol.ln_z_per_mode
        if prev is not None and abs(f.real - prev.real) > jump_tol:
            raise BranchLossError(f"Re f jumped by {f.real - prev.real:.3g} at t={tt}")
        prev = f
        values[tt] = f
    fz = np.array([values[float(tt)] for tt in times])
    return SlopeCurve(beta, times, 2 * fz.real, fz)


def _continuation_path(sorted_times: np.ndarray, t_step: float) -> list[float]:
    path: list[float] = []
    last = 0.0
    for tt in sorted_times:
        tt = float(tt)
        n_sub = max(int(math.ceil((tt - last) / t_step)), 0)
        for k in range(1, n_sub):
            path.append(last + (tt - last) * k / n_sub)
        path.append(tt)
        last = tt
    if not path or path[0] != 0.0:
        path.insert(0, 0.0)
    return path
