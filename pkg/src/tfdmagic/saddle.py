"""Z2-weighted Schwinger-Dyson solver on the replica contour.

Every replicated field sees the same loop (:mod:`tfdmagic.contour`); its two
``u``-``l`` junctions carry a common phase ``sigma = +-1``. At large N the
equations are

    Sigma(a, b) = J^2 f_a f_b G(a, b)^{q-1}
    g_sigma     = (D_sigma - W Sigma W)^{-1} = (1 - S_sigma W Sigma W)^{-1} S_sigma
    G           = sum_sigma w_sigma g_sigma,   w_sigma ~ exp(2 Re L_sigma)

with ``S_sigma`` the free propagator, ``W`` the quadrature weights and
``L_sigma = logdet(1 - S_sigma W Sigma W)`` (the log-determinant relative to
the free loop). The per-mode SRE partition function is

    ln Z_SRE / N = 3 ln2 + ln(sum_sigma e^{2 L_sigma} / 2)
                   - 2 (1 - 1/q) J^2 <f f, G^q>

with ``<X, Y> = sum_ab W_a W_b X_ab Y_ab``; the constant makes the free
theory give ``Z_SRE = 2^{3N}``.

The symmetric saddle keeps ``G`` on the block mask (both points on ``u`` or
both on ``l``); there ``L_+ = L_-``. The polarised saddle is seeded from
the single-sector (``sigma = +1``) solution, which is the ordinary Keldysh
problem.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .contour import ContourGrid, ContourSpec, build_contour
from .thermal import ConvergenceError

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
SYMMETRIC, POLARIZED = "symmetric", "polarized"
_PLAIN_STEPS = 10


class IllConditionedError(RuntimeError):
    pass


@dataclass(frozen=True)
class SaddleOptions:
    tol: float = 1e-10
    damping: float = 0.5
    damping_floor: float = 0.05
    max_iter: int = 3000
    phase_warn: float = 0.1
    class_threshold: float = 0.5
    symmetric_threshold: float = 0.01
    anderson_depth: int = 5
    growth_tolerance: float = 1.5


@dataclass
class SaddleSolution:
    grid: ContourGrid
    q: int
    j_coupling: float
    strategy: str
    green: np.ndarray
    self_energy: np.ndarray
    sector_logdets: dict[int, complex]
    weights: dict[int, float]
    order_parameter: float
    action_per_mode: float
    saddle_class: str
    iterations: int
    residual: float
    notes: list[str] = field(default_factory=list)

    @property
    def beta(self) -> float:
        return self.grid.spec.beta

    @property
    def t(self) -> float:
        return self.grid.spec.t

    def off_block_max(self) -> float:
        return float(np.abs(self.green[~self.grid.block_mask]).max(initial=0.0))


@dataclass
class _Eval:
    g: np.ndarray
    sigma: np.ndarray
    logdets: dict[int, complex]
    weights: dict[int, float]


class _Kernel:
    """One application of the saddle-point map at fixed grid and coupling."""

    def __init__(self, grid: ContourGrid, q: int, j_coupling: float):
        self.grid = grid
        self.q = q
        self.j2 = j_coupling**2
        self.ff = np.outer(grid.factor, grid.factor)
        self.ww = np.outer(grid.weights, grid.weights)
        self.s_plus = grid.free_propagator(1).astype(complex)
        self.phi = grid.gauge
        self.mask = grid.block_mask

    def self_energy(self, g: np.ndarray) -> np.ndarray:
        return self.j2 * self.ff * g ** (self.q - 1)

    def _sector(self, sig_hat: np.ndarray):
        a = np.eye(len(sig_hat)) - self.s_plus @ sig_hat
        lu, piv = sla.lu_factor(a, check_finite=False)
        diag = np.diag(lu)
        amin = np.abs(diag).min()
        if not np.isfinite(amin) or amin < 1e-13 * np.abs(diag).max():
            raise IllConditionedError("singular (D - Sigma) on the contour")
        # row interchanges flip the determinant sign
        n_swaps = int(np.count_nonzero(piv != np.arange(len(piv))))
        logdet = np.sum(np.log(diag)) + (1j * math.pi if n_swaps % 2 else 0.0)
        g = sla.lu_solve((lu, piv), self.s_plus, check_finite=False)
        return logdet, g

    def apply(self, g_in: np.ndarray, mode: str) -> _Eval:
        sig = self.self_energy(g_in)
        sig_hat = self.ww * sig
        logdet_p, g_p = self._sector(sig_hat)
        flip = np.outer(self.phi, self.phi)
        if mode == SYMMETRIC:
            # gauge copy: g_- = Phi g_+ Phi, equal determinants
            logdet_m, g_m = logdet_p, flip * g_p
        else:
            logdet_m, g_m = self._sector(flip * sig_hat)
            g_m = flip * g_m
        if mode == "sector+":
            w_p, w_m = 1.0, 0.0
        else:
            x = 2.0 * (logdet_m.real - logdet_p.real)
            w_p = 1.0 / (1.0 + math.exp(min(x, 700.0)))
            w_m = 1.0 - w_p
        g = w_p * g_p + w_m * g_m
        g = 0.5 * (g - g.T)
        if mode == SYMMETRIC:
            g = g * self.mask
        return _Eval(g, sig, {1: logdet_p, -1: logdet_m}, {1: w_p, -1: w_m})

    def action(self, g: np.ndarray, ev: _Eval) -> complex:
        """``ln Z_SRE / N`` at a fixed point (complex; real part is physical)."""
        l_p, l_m = 2 * ev.logdets[1], 2 * ev.logdets[-1]
        top = l_p if l_p.real >= l_m.real else l_m
        lse = top + np.log(np.exp(l_p - top) + np.exp(l_m - top))
        quad = np.sum(self.ww * self.ff * g**self.q)
        action = 3 * LN2 + (lse - LN2) - 2 * (1 - 1 / self.q) * self.j2 * quad
        return action + self.diagonal_correction()

    def diagonal_correction(self) -> float:
        """Coincident-point cells dropped by the midpoint rule.

        ``tr(S Sigma)`` and ``<Sigma, G>`` have integrands that are continuous
        across the diagonal, ``-J^2 f^2 2^-q`` and ``J^2 f^2 2^-q``, while the
        matrix diagonal is zero. Restoring them turns an O(h) error into O(h^2).
        """
        w2f2 = np.sum(self.grid.weights**2 * self.grid.factor**2).real
        return (2 / self.q) * self.j2 * 0.5**self.q * w2f2


def _free_green(grid: ContourGrid, mode: str) -> np.ndarray:
    g = grid.free_propagator(1).astype(complex)
    if mode == SYMMETRIC:
        g = g * grid.block_mask
    return g


def _iterate(kernel: _Kernel, g: np.ndarray, mode: str, opts: SaddleOptions):
    """Damped fixed-point iteration with safeguarded Anderson extrapolation.

    The damping halves (floor ``damping_floor``) when the residual grows and
    recovers slowly otherwise. Extrapolated residuals are not monotone, so
    only growth beyond ``growth_tolerance`` times the best residual so far
    counts as failure: the iteration then returns to the best iterate,
    halves the damping, clears the Anderson history and takes
    ``_PLAIN_STEPS`` plain damped steps before extrapolating again. Far from
    the solution, unguarded extrapolation can wander off or land on a
    spurious fixed point. ``anderson_depth = 0`` gives plain mixing.
    """
    x = opts.damping
    grow = opts.growth_tolerance if opts.anderson_depth > 0 else 1.0
    res_prev = np.inf
    residual = np.inf
    best_res, best_g, best_f = np.inf, g, None
    plain = 0
    hist_g: list[np.ndarray] = []
    hist_f: list[np.ndarray] = []
    for it in range(1, opts.max_iter + 1):
        ev = kernel.apply(g, mode)
        f = ev.g - g
        residual = float(np.abs(f).max())
        if residual < opts.tol:
            return ev.g, it, residual
        if residual < best_res:
            best_res, best_g, best_f = residual, g, f
        elif residual > grow * best_res and x > opts.damping_floor:
            x = max(x / 2, opts.damping_floor)
            hist_g.clear()
            hist_f.clear()
            plain = _PLAIN_STEPS
            res_prev = best_res
            g = best_g + x * best_f
            continue
        if residual > res_prev:
            x = max(x / 2, opts.damping_floor) if opts.anderson_depth == 0 else x
        else:
            x = min(x * 1.1, opts.damping)
        res_prev = residual
        step = x * f
        if plain > 0:
            plain -= 1
        elif opts.anderson_depth > 0:
            hist_g.append(g.ravel())
            hist_f.append(f.ravel())
            if len(hist_g) > opts.anderson_depth + 1:
                hist_g.pop(0)
                hist_f.pop(0)
            if len(hist_g) > 1:
                dg = np.diff(np.array(hist_g), axis=0).T
                df = np.diff(np.array(hist_f), axis=0).T
                gamma = np.linalg.lstsq(df, f.ravel(), rcond=None)[0]
                step = (x * f.ravel() - (dg + x * df) @ gamma).reshape(g.shape)
        g = g + step
    raise ConvergenceError(
        f"contour solve ({mode}) did not converge in {opts.max_iter} iterations (residual {residual:.3g})",
        residual,
    )


def sre_solve(
    beta: float,
    t: float,
    q: int = 4,
    j_coupling: float = 1.0,
    spec: ContourSpec | None = None,
    seed_strategy: str = SYMMETRIC,
    tol: float | None = None,
    damping: float | None = None,
    options: SaddleOptions | None = None,
    initial: np.ndarray | None = None,
) -> SaddleSolution:
    """Solve the replica-contour saddle-point equations.

    ``seed_strategy="symmetric"`` iterates inside the Z2-symmetric sector
    (``G`` supported on the block mask). ``"polarized"`` first solves the
    single-sector Keldysh problem, then releases both sectors. ``initial``
    overrides the starting ``G`` (same grid size), e.g. for continuation.
    """
    opts = options or SaddleOptions()
    if tol is not None or damping is not None:
        opts = replace(opts, tol=opts.tol if tol is None else tol, damping=opts.damping if damping is None else damping)
    if seed_strategy not in (SYMMETRIC, POLARIZED):
        raise ValueError(f"unknown seed strategy {seed_strategy!r}")
    spec = spec or ContourSpec(beta, t)
    if (spec.beta, spec.t) != (beta, t):
        spec = ContourSpec(beta, t, spec.n_im, spec.n_re)
    grid = build_contour(spec)
    kernel = _Kernel(grid, q, j_coupling)
    notes: list[str] = []

    if initial is not None:
        g0 = np.array(initial, dtype=complex)
        if g0.shape != (grid.n_points,) * 2:
            raise ValueError("initial Green's function has the wrong shape")
        if seed_strategy == SYMMETRIC:
            g0 = g0 * grid.block_mask
        mode = SYMMETRIC if seed_strategy == SYMMETRIC else "full"
        g, iters, residual = _iterate(kernel, g0, mode, opts)
    elif seed_strategy == SYMMETRIC:
        g, iters, residual = _iterate(kernel, _free_green(grid, SYMMETRIC), SYMMETRIC, opts)
    else:
        g, it1, _ = _iterate(kernel, _free_green(grid, "full"), "sector+", opts)
        g, it2, residual = _iterate(kernel, g, "full", opts)
        iters = it1 + it2

    mode = SYMMETRIC if seed_strategy == SYMMETRIC else "full"
    ev = kernel.apply(g, mode)
    phase_gap = abs(np.angle(np.exp(2j * (ev.logdets[1].imag - ev.logdets[-1].imag))))
    if phase_gap > opts.phase_warn:
        msg = f"sector weight phases differ by {phase_gap:.3g} rad"
        log.warning(msg)
        notes.append(msg)
    order = ev.weights[1] - ev.weights[-1]
    action = kernel.action(ev.g, ev)
    if abs(order) < opts.symmetric_threshold:
        cls = SYMMETRIC
    elif abs(order) >= opts.class_threshold:
        cls = "ssb"
    else:
        cls = "unconverged-class"
    return SaddleSolution(
        grid=grid,
        q=q,
        j_coupling=j_coupling,
        strategy=seed_strategy,
        green=ev.g,
        self_energy=ev.sigma,
        sector_logdets=ev.logdets,
        weights=ev.weights,
        order_parameter=float(order),
        action_per_mode=float(action.real),
        saddle_class=cls,
        iterations=iters,
        residual=residual,
        notes=notes,
    )


def evaluate_action(sol: SaddleSolution) -> float:
    """``ln Z_SRE / N`` recomputed from the stored Green's function."""
    kernel = _Kernel(sol.grid, sol.q, sol.j_coupling)
    mode = SYMMETRIC if sol.strategy == SYMMETRIC else "full"
    ev = kernel.apply(sol.green, mode)
    return float(kernel.action(sol.green, ev).real)


def fixed_point_residual(sol: SaddleSolution) -> float:
    """Max change of ``G`` under one unrestricted application of the map."""
    kernel = _Kernel(sol.grid, sol.q, sol.j_coupling)
    return float(np.abs(kernel.apply(sol.green, "full").g - sol.green).max())


def sre_value(sol_or_action, ln_z_beta_per_mode: float) -> float:
    """``M2 / N = ln2 - ln Z_SRE / N + 4 f(beta)``."""
    action = sol_or_action.action_per_mode if isinstance(sol_or_action, SaddleSolution) else float(sol_or_action)
    return LN2 - action + 4 * float(np.real(ln_z_beta_per_mode))


def order_parameter(sol_or_logdets) -> float:
    """``<sigma>`` from the two sector log-determinants, phases discarded."""
    logdets = sol_or_logdets.sector_logdets if isinstance(sol_or_logdets, SaddleSolution) else sol_or_logdets
    x = 2.0 * (logdets[-1].real - logdets[1].real)
    return -math.tanh(x / 2)
