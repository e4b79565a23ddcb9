"""SRE curves per saddle, dominant-saddle selection and the dynamical transition.

Two branches are followed in time:

* the symmetric saddle, swept forward in ``t`` (``<sigma> = 0``), whose
  ``M2/N`` equals ``2 ln2 - 4 (ln SFF_{beta/2}(t)/N - f(beta))``;
* the symmetry-broken (ssb) saddle, swept forward from where the
  single-sector seed first polarises and then continued backward, so that
  it is followed as a metastable branch below ``t*``.

Both are always stored; the dominant curve is a view taking, at each ``t``,
the branch with the larger ``ln Z_SRE`` (smaller ``M2``). The transition
time ``t*`` is the zero of ``ln Z_SRE(sym) - ln Z_SRE(ssb)``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import fitkit
from .contour import ContourGrid, ContourSpec, build_contour
from .saddle import POLARIZED, SYMMETRIC, IllConditionedError, SaddleOptions, SaddleSolution, sre_solve, sre_value
from .thermal import BranchLossError, ConvergenceError, SolverOptions, free_energy, sff_slope

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
CONTOUR, THERMAL = "contour", "thermal"


@dataclass(frozen=True)
class PredictionParams:
    """Constants of the SFF-based prediction.

    ``c0_const`` is the O(1) additive constant of the finite-N sum (kept for
    reference, unused at large N); ``schwarzian_c`` is the per-mode Schwarzian
    coefficient, a fit parameter.
    """

    c0_const: float | None = None
    schwarzian_c: float | None = None


@dataclass(frozen=True)
class DynamicsOptions:
    """Grid and solver settings for a sweep.

    ``re_step`` (if set) chooses ``n_re = max(re_min, ceil(t / re_step))`` per
    time instead of the fixed ``n_re``. ``symmetric_engine="thermal"`` takes
    the symmetric branch from the complex-beta solver (exact for that saddle)
    instead of solving it on the contour.
    """

    q: int = 4
    j_coupling: float = 1.0
    n_im: int = 200
    n_re: int = 200
    re_step: float | None = None
    re_min: int = 8
    symmetric_engine: str = CONTOUR
    saddle: SaddleOptions = field(default_factory=SaddleOptions)
    thermal: SolverOptions = field(default_factory=SolverOptions)
    resolution: float = 0.05
    scan_step: float = 1.0

    def spec(self, beta: float, t: float) -> ContourSpec:
        if t == 0:
            return ContourSpec(beta, 0.0, self.n_im, 0)
        n_re = self.n_re if self.re_step is None else max(self.re_min, math.ceil(t / self.re_step))
        return ContourSpec(beta, t, self.n_im, max(n_re, 2))


@dataclass
class CurvePoint:
    t: float
    m2_symmetric: float
    m2_ssb: float
    m2_dominant: float
    order_param: float
    lnz_symmetric: float
    lnz_ssb: float
    flags: tuple[str, ...] = ()


@dataclass
class SRECurve:
    beta: float
    points: list[CurvePoint]
    ln_z_beta: float = float("nan")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points], dtype=float)

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def dominant_branch(self) -> list[str]:
        return [_dominant(p.lnz_symmetric, p.lnz_ssb)[0] for p in self.points]


@dataclass
class PhasePoint:
    beta_j: float
    t_star_j: float | None
    status: str  # crossing-found | none-below-tmax | undetermined
    detail: dict = field(default_factory=dict)


@dataclass
class PhaseDiagram:
    points: list[PhasePoint]
    boundary_fit: fitkit.FitResult | None
    notes: list[str] = field(default_factory=list)

    def crossings(self) -> list[tuple[float, float]]:
        return [(p.t_star_j, p.beta_j) for p in self.points if p.status == "crossing-found"]


def _dominant(lnz_sym: float, lnz_ssb: float) -> tuple[str, float]:
    if np.isnan(lnz_ssb) or (not np.isnan(lnz_sym) and lnz_sym >= lnz_ssb):
        return SYMMETRIC, lnz_sym
    return "ssb", lnz_ssb


# ----------------------------------------------------------------- predictions


def predicted_m2(beta: float, t, q: int = 4, j_coupling: float = 1.0, options: SolverOptions | None = None):
    """``M2^(p)/N = 2 ln2 - 4 (ln SFF_{beta/2}(t)/N - f(beta))`` (array over ``t``)."""
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if beta == 0 or j_coupling == 0:
        if j_coupling != 0 and np.any(times > 0):
            raise ValueError("the prediction at beta = 0 needs t = 0 (no real part to continue from)")
        return np.zeros(times.shape)
    f_beta = free_energy(beta, q, j_coupling, options).real
    slope = sff_slope(beta, times, q, j_coupling, options)
    return 2 * LN2 - 4 * (slope.ln_sff_per_mode - f_beta)


def schwarzian_m2p(beta: float, t, m2_0: float, c: float, j_coupling: float = 1.0, include_log: bool = True):
    """Low-temperature Schwarzian form of the predicted SRE.

    ``M2(0) + (32 pi^2 C / beta J) 4t^2/(beta^2 + 4t^2) + 6 ln((beta^2 + 4t^2)/beta^2)``;
    the logarithm is the non-extensive part and is dropped with ``include_log=False``.
    """
    t = np.asarray(t, dtype=float)
    x = 4 * t**2
    out = m2_0 + 32 * math.pi**2 * c / (beta * j_coupling) * x / (beta**2 + x)
    if include_log:
        out = out + 6 * np.log((beta**2 + x) / beta**2)
    return out


# ---------------------------------------------------------------- continuation


def _coordinates(grid: ContourGrid) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per segment: indices and normalised positions in (0, 1)."""
    out = []
    for b in range(4):
        idx = np.nonzero(grid.branch == b)[0]
        n = len(idx)
        out.append((idx, (np.arange(n) + 0.5) / n if n else np.zeros(0)))
    return out


def transfer_green(old: ContourGrid, g_old: np.ndarray, new: ContourGrid) -> np.ndarray | None:
    """Interpolate ``G`` segment-pair by segment-pair onto another grid.

    Positions are normalised to each segment's length, so a solution at one
    ``t`` seeds the next. Returns ``None`` when the segment structure differs
    (e.g. from ``t = 0`` without real segments).
    """
    co, cn = _coordinates(old), _coordinates(new)
    if any((len(a[0]) == 0) != (len(b[0]) == 0) for a, b in zip(co, cn)):
        return None
    g = np.zeros((new.n_points, new.n_points), dtype=complex)
    for a in range(4):
        ia, ua = co[a]
        ja, va = cn[a]
        if len(ia) == 0:
            continue
        for b in range(4):
            ib, ub = co[b]
            jb, vb = cn[b]
            if len(ib) == 0:
                continue
            block = g_old[np.ix_(ia, ib)]
            if len(ia) == len(ja) and len(ib) == len(jb):
                g[np.ix_(ja, jb)] = block
                continue
            pts = np.stack(np.meshgrid(va, vb, indexing="ij"), axis=-1)
            re = RegularGridInterpolator((ua, ub), block.real, bounds_error=False, fill_value=None)(pts)
            im = RegularGridInterpolator((ua, ub), block.imag, bounds_error=False, fill_value=None)(pts)
            g[np.ix_(ja, jb)] = re + 1j * im
    g = 0.5 * (g - g.T)
    return g


def _solve(beta, t, opts: DynamicsOptions, strategy: str, prev: SaddleSolution | None) -> SaddleSolution:
    spec = opts.spec(beta, t)
    initial = None
    if prev is not None:
        initial = transfer_green(prev.grid, prev.green, build_contour(spec))
    return sre_solve(
        beta, t, opts.q, opts.j_coupling, spec=spec, seed_strategy=strategy, options=opts.saddle, initial=initial
    )


def _safe(fn, *args):
    try:
        return fn(*args), None
    except (ConvergenceError, IllConditionedError, BranchLossError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


# ----------------------------------------------------------------------- sweeps


class _Tracker:
    """Solutions on one branch, each new solve seeded from the nearest solved time.

    The ssb branch is swept forward from the single-sector seed (which
    converges quickly at short times) and then continued backward from its
    earliest solution, so that it is followed below the transition as a
    metastable branch.
    """

    def __init__(self, beta: float, opts: DynamicsOptions, strategy: str):
        self.beta = beta
        self.opts = opts
        self.strategy = strategy
        self.solutions: dict[float, SaddleSolution] = {}
        self.lnz: dict[float, float] = {}
        self.order: dict[float, float] = {}
        self.flags: dict[float, list[str]] = {}

    def _seed(self, t: float) -> SaddleSolution | None:
        cands = list(self.solutions)
        if not cands:
            return None
        return self.solutions[min(cands, key=lambda s: abs(s - t))]

    def _record(self, t: float, lnz: float, order: float, flags: list[str]) -> None:
        self.lnz[t], self.order[t], self.flags[t] = lnz, order, flags

    def solve(self, t: float) -> None:
        t = float(t)
        if t in self.lnz:
            return
        if self.strategy == POLARIZED:
            self._solve_ssb(t)
        elif self.opts.symmetric_engine == THERMAL:
            self._solve_thermal([t])
        else:
            sol, err = _safe(_solve, self.beta, t, self.opts, SYMMETRIC, self._seed(t))
            if sol is None:
                self._record(t, math.nan, math.nan, [f"symmetric: {err}"])
            else:
                self.solutions[t] = sol
                self._record(t, sol.action_per_mode, sol.order_parameter, list(sol.notes))

    def _solve_ssb(self, t: float) -> None:
        if t == 0:
            self._record(t, math.nan, math.nan, ["ssb: not defined at t = 0"])
            return
        seed = self._seed(t)
        sol, err = _safe(_solve, self.beta, t, self.opts, POLARIZED, seed)
        if sol is not None and sol.saddle_class != "ssb" and seed is not None:
            # continuation may have drifted; retry from the Keldysh seed
            sol, err = _safe(_solve, self.beta, t, self.opts, POLARIZED, None)
        if sol is not None and sol.saddle_class != "ssb":
            err = f"ssb branch absent (relaxed to {sol.saddle_class}, <sigma> = {sol.order_parameter:.3g})"
            sol = None
        if sol is None:
            self._record(t, math.nan, math.nan, [f"ssb: {err}"])
            return
        self.solutions[t] = sol
        self._record(t, sol.action_per_mode, sol.order_parameter, list(sol.notes))

    def _solve_thermal(self, times) -> None:
        o = self.opts
        times = [float(t) for t in times if float(t) not in self.lnz]
        if not times:
            return
        if self.beta == 0:
            for t in times:
                ok = t == 0
                self._record(t, 3 * LN2 if ok else math.nan, 0.0 if ok else math.nan,
                             [] if ok else ["symmetric: thermal engine needs beta > 0"])
            return
        slope, err = _safe(sff_slope, self.beta, np.array(times), o.q, o.j_coupling, o.thermal)
        for k, t in enumerate(times):
            if slope is None:
                self._record(t, math.nan, math.nan, [f"symmetric: {err}"])
            else:
                self._record(t, float(4 * slope.ln_sff_per_mode[k] - LN2), 0.0, [])

    def sweep(self, times) -> None:
        ordered = sorted(float(x) for x in times)
        if self.strategy == SYMMETRIC and self.opts.symmetric_engine == THERMAL:
            self._solve_thermal(ordered)
            return
        for t in ordered:
            self.solve(t)
        if self.strategy == POLARIZED:
            # continue backward into times where the single-sector seed relaxed
            for t in reversed(ordered):
                if t > 0 and t not in self.solutions and any(s > t for s in self.solutions):
                    del self.lnz[t]
                    self.solve(t)


def m2_curve(
    beta: float,
    t_grid,
    opts: DynamicsOptions | None = None,
    ln_z_beta: float | None = None,
    branches=(SYMMETRIC, "ssb"),
) -> SRECurve:
    """``M2(t)/N`` on both branches plus the dominant view (min ``M2``).

    ``branches`` restricts the solve to one branch; the other's columns are
    NaN. Each branch is followed by continuation in ``t``: at long times the
    discretised equations have further fixed points, and the free-propagator
    seed alone need not land on the physical one.
    """
    opts = opts or DynamicsOptions()
    unknown = set(branches) - {SYMMETRIC, "ssb"}
    if unknown or not branches:
        raise ValueError(f"branches must be drawn from ('symmetric', 'ssb'), got {branches!r}")
    times = np.unique(np.asarray(t_grid, dtype=float))
    if np.any(times < 0):
        raise ValueError("times must be non-negative")
    if opts.j_coupling == 0:
        pts = [CurvePoint(float(t), 0.0, math.nan, 0.0, 0.0, 3 * LN2, math.nan, ("free",)) for t in times]
        return SRECurve(beta, pts, 0.5 * LN2)
    if ln_z_beta is None:
        ln_z_beta = free_energy(beta, opts.q, opts.j_coupling, opts.thermal).real
    sym = _Tracker(beta, opts, SYMMETRIC)
    ssb = _Tracker(beta, opts, POLARIZED)
    if SYMMETRIC in branches:
        sym.sweep(times)
    if "ssb" in branches:
        ssb.sweep(times)
    points = []
    for t in times:
        t = float(t)
        ls, lb = sym.lnz.get(t, math.nan), ssb.lnz.get(t, math.nan)
        branch, lnz = _dominant(ls, lb)
        order = sym.order.get(t, math.nan) if branch == SYMMETRIC else ssb.order[t]
        points.append(
            CurvePoint(
                t=t,
                m2_symmetric=sre_value(ls, ln_z_beta),
                m2_ssb=sre_value(lb, ln_z_beta),
                m2_dominant=sre_value(lnz, ln_z_beta),
                order_param=order,
                lnz_symmetric=ls,
                lnz_ssb=lb,
                flags=tuple(sym.flags.get(t, []) + ssb.flags.get(t, [])),
            )
        )
    return SRECurve(beta, points, ln_z_beta)


# ------------------------------------------------------------------- transition


@dataclass
class TransitionResult:
    beta: float
    t_star: float | None
    status: str
    bracket: tuple[float, float] | None
    scan: list[tuple[float, float, float]]  # (t, lnZ_sym, lnZ_ssb)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "t_star": self.t_star,
            "status": self.status,
            "bracket": list(self.bracket) if self.bracket else None,
            "scan": [list(row) for row in self.scan],
        }


def find_transition(beta: float, t_window=(0.0, 50.0), opts: DynamicsOptions | None = None) -> TransitionResult:
    """Crossing of the two branch actions inside ``t_window``.

    The window is scanned at ``opts.scan_step`` (both branches with
    continuation) and the first sign change of
    ``lnZ_sym - lnZ_ssb`` from + to - is bisected to ``opts.resolution``.
    """
    opts = opts or DynamicsOptions()
    t0, t1 = float(t_window[0]), float(t_window[1])
    if not t1 > t0 >= 0:
        raise ValueError(f"bad window {t_window}")
    n = max(int(math.ceil((t1 - t0) / opts.scan_step)), 1)
    grid = np.linspace(t0, t1, n + 1)
    sym = _Tracker(beta, opts, SYMMETRIC)
    ssb = _Tracker(beta, opts, POLARIZED)
    sym.sweep(grid)
    ssb.sweep(grid)
    scan = [(float(t), sym.lnz[float(t)], ssb.lnz[float(t)]) for t in grid]
    diff = np.array([a - b for _, a, b in scan])
    valid = ~np.isnan(diff)
    if not valid.any():
        return TransitionResult(beta, None, "undetermined", None, scan)
    bracket = None
    for k in range(len(grid) - 1):
        if valid[k] and valid[k + 1] and diff[k] >= 0 > diff[k + 1]:
            bracket = (float(grid[k]), float(grid[k + 1]))
            break
    if bracket is None:
        # only one branch anywhere in the window -> cannot decide
        both = valid & ~np.isnan([s for _, s, _ in scan])
        status = "none-below-tmax" if both.any() else "undetermined"
        return TransitionResult(beta, None, status, None, scan)
    lo, hi = bracket
    while hi - lo > opts.resolution:
        mid = 0.5 * (lo + hi)
        sym.solve(mid)
        ssb.solve(mid)
        scan.append((mid, sym.lnz[mid], ssb.lnz[mid]))
        gap = sym.lnz[mid] - ssb.lnz[mid]
        if np.isnan(gap):
            break
        if gap >= 0:
            lo = mid
        else:
            hi = mid
    t_star = _linear_root(scan, lo, hi)
    return TransitionResult(beta, t_star, "crossing-found", (lo, hi), sorted(scan))


def _linear_root(scan, lo: float, hi: float) -> float:
    rows = {t: (a - b) for t, a, b in scan}
    dl, dh = rows.get(lo), rows.get(hi)
    if dl is None or dh is None or np.isnan(dl) or np.isnan(dh) or dl == dh:
        return 0.5 * (lo + hi)
    return lo + (hi - lo) * dl / (dl - dh)


# ---------------------------------------------------------------- phase diagram


def _transition_task(args):
    beta, t_max, opts = args
    return find_transition(beta, (0.0, t_max), opts)


def phase_diagram(beta_list, t_max: float = 50.0, opts: DynamicsOptions | None = None, workers: int = 1) -> PhaseDiagram:
    """``(beta J, t* J)`` per temperature plus the fitted boundary.

    Temperatures run in parallel over ``workers`` processes; the result order
    follows ``beta_list`` regardless of completion order.
    """
    opts = opts or DynamicsOptions()
    tasks = [(float(b), float(t_max), opts) for b in beta_list]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_transition_task, tasks))
    else:
        results = [_transition_task(task) for task in tasks]
    points = [
        PhasePoint(
            beta_j=r.beta * opts.j_coupling,
            t_star_j=None if r.t_star is None else r.t_star * opts.j_coupling,
            status=r.status,
            detail=r.to_dict(),
        )
        for r in results
    ]
    notes = []
    fit = None
    crossings = [(p.t_star_j, p.beta_j) for p in points if p.status == "crossing-found"]
    if len(crossings) >= 3:
        fit = fitkit.fit_boundary(crossings)
    else:
        notes.append(f"boundary fit refused: {len(crossings)} crossing point(s), need 3")
    return PhaseDiagram(points, fit, notes)


def with_grid(opts: DynamicsOptions, **changes) -> DynamicsOptions:
    return replace(opts, **changes)
