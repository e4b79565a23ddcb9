"""Closed complex-time contour for the replicated fields.

After the fermionic-swap gluing each field lives on one loop made of four
segments, traversed in order

    imaginary-u (beta/2) -> forward (t) -> backward (t) -> imaginary-l (beta/2)

and then back to the start. The ``u`` branch is the first two segments and
the ``l`` branch the last two; the two ``u``-``l`` junctions are the
real-time tip and the wrap-around point, which is the fermionic
(antiperiodic) link.

Points sit at the centres of equal cells on every segment; ``weights`` are
the real arc-length cell sizes (midpoint quadrature).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

IMAG_U, FORWARD, BACKWARD, IMAG_L = 0, 1, 2, 3
BRANCH_NAMES = ("imaginary-u", "forward", "backward", "imaginary-l")

# dtheta / ds on each segment: exp(-H dtheta) is imaginary-time evolution on
# the thermal segments and exp(-iH dt) / exp(+iH dt) on forward / backward.
BRANCH_FACTOR = np.array([1.0, 1.0j, -1.0j, 1.0])


@dataclass(frozen=True)
class ContourSpec:
    beta: float
    t: float
    n_im: int = 200
    n_re: int = 200

    def __post_init__(self):
        if self.beta < 0 or self.t < 0:
            raise ValueError(f"beta and t must be non-negative (beta={self.beta}, t={self.t})")
        if self.n_im < 2:
            raise ValueError(f"n_im must be >= 2, got {self.n_im}")
        if self.n_re < 0 or self.n_re == 1 or (self.t > 0 and self.n_re < 2):
            raise ValueError(f"n_re must be >= 2 (or 0 when t = 0), got {self.n_re}")

    @property
    def n_points(self) -> int:
        return 2 * self.n_im + 2 * self.n_re

    def refined(self, factor: int = 2) -> "ContourSpec":
        return ContourSpec(self.beta, self.t, self.n_im * factor, self.n_re * factor)


@dataclass(frozen=True, eq=False)
class ContourGrid:
    spec: ContourSpec
    theta: np.ndarray  # complex positions
    branch: np.ndarray  # segment tag per point
    weights: np.ndarray  # arc-length cell sizes
    factor: np.ndarray  # dtheta/ds per point

    @property
    def n_points(self) -> int:
        return len(self.theta)

    @cached_property
    def is_upper(self) -> np.ndarray:
        return (self.branch == IMAG_U) | (self.branch == FORWARD)

    @cached_property
    def block_mask(self) -> np.ndarray:
        """``P[a, b]``: both points on ``u`` or both on ``l``."""
        u = self.is_upper
        return u[:, None] == u[None, :]

    @cached_property
    def junction_links(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """``(last u, first l)`` at the real-time tip and ``(last l, first u)`` at the wrap."""
        n_u = int(self.is_upper.sum())
        return (n_u - 1, n_u), (self.n_points - 1, 0)

    @cached_property
    def gauge(self) -> np.ndarray:
        """+1 on ``u``, -1 on ``l``: flipping ``l`` swaps the two junction sectors."""
        return np.where(self.is_upper, 1.0, -1.0)

    @property
    def arc_length(self) -> float:
        return float(np.sum(self.weights))

    def free_propagator(self, sigma: int = 1) -> np.ndarray:
        """Free Majorana two-point function ``1/2 sgn`` with junction phase ``sigma``.

        Points are ordered along the loop, so the contour ordering is the index
        ordering; crossing one ``u``-``l`` junction multiplies by ``sigma``.
        """
        _check_sigma(sigma)
        m = self.n_points
        k = np.arange(m)
        s = 0.5 * np.sign(k[:, None] - k[None, :])
        if sigma == -1:
            s *= np.outer(self.gauge, self.gauge)
        return s


def _check_sigma(sigma):
    if sigma not in (1, -1):
        raise ValueError(f"junction phase must be +1 or -1, got {sigma}")


def build_contour(spec: ContourSpec) -> ContourGrid:
    half = spec.beta / 2
    h_im = half / spec.n_im
    cells_im = (np.arange(spec.n_im) + 0.5) * h_im
    h_re = spec.t / spec.n_re if spec.n_re else 0.0
    cells_re = (np.arange(spec.n_re) + 0.5) * h_re
    theta = np.concatenate(
        [
            cells_im.astype(complex),
            half + 1j * cells_re,
            half + 1j * (spec.t - cells_re),
            half + cells_im,
        ]
    )
    branch = np.repeat([IMAG_U, FORWARD, BACKWARD, IMAG_L], [spec.n_im, spec.n_re, spec.n_re, spec.n_im])
    weights = np.repeat([h_im, h_re, h_re, h_im], [spec.n_im, spec.n_re, spec.n_re, spec.n_im])
    return ContourGrid(spec, theta, branch, weights, BRANCH_FACTOR[branch])


@dataclass(frozen=True, eq=False)
class DerivativeOperator:
    """Discrete ``d/ds`` on the loop with junction phase ``sigma``.

    Defined as the exact inverse of :meth:`ContourGrid.free_propagator`, so
    the free limit is reproduced pointwise on any grid. It is antisymmetric
    and ``D_{-1} = Phi D_{+1} Phi`` with ``Phi`` the ``u``/``l`` gauge sign.
    """

    sigma: int
    matrix: np.ndarray


def derivative_operator(grid: ContourGrid, sigma: int) -> DerivativeOperator:
    _check_sigma(sigma)
    d = _inverse_sign_matrix(grid.n_points)
    if sigma == -1:
        d = d * np.outer(grid.gauge, grid.gauge)
    return DerivativeOperator(sigma, d)


def _inverse_sign_matrix(m: int) -> np.ndarray:
    """Closed form of ``(1/2 sgn(k - l))^{-1}`` for even ``m``.

    The inverse is ``2 (-1)^{l-k+1} sgn(l - k)``; exact in floating point.
    """
    if m % 2:
        raise ValueError("contour needs an even number of points")
    k = np.arange(m)
    diff = k[None, :] - k[:, None]
    return 2.0 * np.where(diff % 2 == 0, -1.0, 1.0) * np.sign(diff)
