"""Exact diagonalisation of the doubled SYK system at small N.

The left system carries N Majoranas ``psi_j`` and the right system N
Majoranas ``xi_j``; together they live on ``N`` qubits (Hilbert space
dimension ``2^N``). Because of the blocked Jordan-Wigner ordering (see
:mod:`tfdmagic.majorana`) the left modes act only on the low ``N/2`` qubits,
so a left Hamiltonian is ``H_L (x) 1`` and state vectors reshape to
``(2^{N/2} right, 2^{N/2} left)`` matrices.

Partition functions ``Z(beta) = tr exp(-beta H)`` are traces over the left
system alone (dimension ``2^{N/2}``).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .majorana import (
    jordan_wigner,
    pauli_dense,
    pauli_expectations,
    pauli_mul,
    popcount,
    string_table,
)

log = logging.getLogger(__name__)

MAX_SPECTRUM_N = 10


@dataclass(frozen=True)
class ModelParams:
    n_majorana: int
    q: int = 4
    j_coupling: float = 1.0
    seed: int = 0

    def __post_init__(self):
        n, q = self.n_majorana, self.q
        if n < 2 or n % 2:
            raise ValueError(f"n_majorana must be even and >= 2, got {n}")
        if q % 2 or q < 2:
            raise ValueError(f"q must be even and >= 2, got {q}")
        if q > n:
            raise ValueError(f"q={q} exceeds n_majorana={n}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def variance(self) -> float:
        """Coupling variance ``(q-1)! J^2 / N^{q-1}``."""
        return math.factorial(self.q - 1) * self.j_coupling**2 / self.n_majorana ** (self.q - 1)


@dataclass(frozen=True)
class CouplingTensor:
    """Antisymmetric couplings stored on increasing index tuples."""

    n_majorana: int
    q: int
    indices: np.ndarray  # (K, q) int, rows strictly increasing
    values: np.ndarray  # (K,) float

    @property
    def entries(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(i) for i in row): float(v) for row, v in zip(self.indices, self.values)}

    def __len__(self):
        return len(self.values)

    @classmethod
    def single(cls, n_majorana: int, indices, value: float) -> "CouplingTensor":
        idx = np.array([sorted(indices)], dtype=np.int64)
        return cls(n_majorana, idx.shape[1], idx, np.array([float(value)]))


def realization_rng(seed: int, realization: int = 0) -> np.random.Generator:
    """PCG64 stream for one disorder realization; stable across platforms."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, realization])))


def sample_couplings(params: ModelParams, realization: int = 0) -> CouplingTensor:
    """Draw Gaussian couplings with mean zero and variance ``(q-1)! J^2/N^{q-1}``."""
    idx = np.array(list(itertools.combinations(range(params.n_majorana), params.q)), dtype=np.int64)
    rng = realization_rng(params.seed, realization)
    values = rng.normal(0.0, math.sqrt(params.variance), size=len(idx))
    return CouplingTensor(params.n_majorana, params.q, idx, values)


def _majorana_sum(couplings: CouplingTensor, n_modes: int, offset: int) -> np.ndarray:
    """Dense ``sum_I i^{q(q-1)/2} J_I psi_{i1}...psi_{iq}`` with modes shifted by ``offset``."""
    gk, gx, gz = jordan_wigner(n_modes)
    q = couplings.q
    n_qubits = n_modes // 2
    dim = 1 << n_qubits
    k = np.zeros(len(couplings), dtype=np.int64)
    x = np.zeros(len(couplings), dtype=np.int64)
    z = np.zeros(len(couplings), dtype=np.int64)
    for col in range(q):
        m = couplings.indices[:, col] + offset
        k, x, z = pauli_mul(k, x, z, gk[m], gx[m], gz[m])
    # psi = gamma / sqrt(2)
    coef = (1j ** (q * (q - 1) // 2)) * couplings.values * 2.0 ** (-q / 2)
    b = np.arange(dim)
    h = np.zeros((dim, dim), dtype=complex)
    for c, kk, xx, zz in zip(coef, k, x, z):
        h[b ^ xx, b] += c * (1j**kk) * (1 - 2 * (popcount(b & zz) % 2))
    return h


def build_hamiltonian(couplings: CouplingTensor, side: str = "left") -> np.ndarray:
    """SYK Hamiltonian of one side as a dense matrix on the doubled space.

    ``side="left"`` uses the ``psi`` modes, ``side="right"`` the ``xi`` modes.
    """
    n = couplings.n_majorana
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    offset = 0 if side == "left" else n
    return _majorana_sum(couplings, 2 * n, offset)


def system_hamiltonian(couplings: CouplingTensor) -> np.ndarray:
    """SYK Hamiltonian on the left system alone (dimension ``2^{N/2}``)."""
    return _majorana_sum(couplings, couplings.n_majorana, 0)


class SYKSystem:
    """Left-system Hamiltonian with a cached eigendecomposition.

    Accepts either a :class:`CouplingTensor` or a dense Hermitian matrix on
    the ``2^{N/2}``-dimensional left space.
    """

    def __init__(self, couplings_or_matrix, n_majorana: int | None = None):
        if isinstance(couplings_or_matrix, CouplingTensor):
            self.couplings = couplings_or_matrix
            self.n_majorana = couplings_or_matrix.n_majorana
            self.matrix = system_hamiltonian(couplings_or_matrix)
        else:
            self.couplings = None
            self.matrix = np.asarray(couplings_or_matrix, dtype=complex)
            dim = self.matrix.shape[0]
            self.n_majorana = n_majorana or 2 * int(round(math.log2(dim)))
        if self.matrix.shape[0] != 1 << (self.n_majorana // 2):
            raise ValueError("matrix dimension does not match n_majorana")

    @classmethod
    def free(cls, n_majorana: int) -> "SYKSystem":
        dim = 1 << (n_majorana // 2)
        return cls(np.zeros((dim, dim)), n_majorana)

    @cached_property
    def _eigh(self):
        return np.linalg.eigh(self.matrix)

    @property
    def energies(self) -> np.ndarray:
        return self._eigh[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._eigh[1]

    def operator_exp(self, zeta) -> np.ndarray:
        """``exp(-zeta H)`` on the left space for complex ``zeta``."""
        e, u = self._eigh
        # shift by the ground energy to keep exp finite at large beta
        return (u * np.exp(-zeta * (e - e[0]))) @ u.conj().T * np.exp(-zeta * e[0])

    def partition(self, zeta) -> complex:
        """``Z(zeta) = tr exp(-zeta H)`` for complex (array) ``zeta``."""
        zeta = np.asarray(zeta, dtype=complex)
        return np.exp(-np.multiply.outer(zeta, self.energies)).sum(axis=-1)

    def apply_left(self, op: np.ndarray, state: np.ndarray) -> np.ndarray:
        """Act with a left-system operator on a doubled-system state vector."""
        dim = op.shape[0]
        mat = np.asarray(state).reshape(dim, dim)
        return (mat @ op.T).reshape(-1)


@lru_cache(maxsize=None)
def _strings(n_modes: int):
    return string_table(n_modes)


def string_index(v_left, v_right, n_majorana: int):
    """Index into a Majorana-spectrum vector; bit vectors as ints or 0/1 arrays."""

    def as_int(v):
        if np.ndim(v) == 0:
            return int(v)
        return int(sum(int(b) << j for j, b in enumerate(v)))

    return as_int(v_left) | (as_int(v_right) << n_majorana)


def phase_exponent(v_left, v_right) -> int:
    """``n = (|v_L| + 1) |v_R|`` for int bit masks."""
    return (bin(int(v_left)).count("1") + 1) * bin(int(v_right)).count("1")


def build_epr(n_majorana: int) -> np.ndarray:
    """State annihilated by every ``psi_j + i xi_j``.

    Found as the zero mode of ``sum_j (psi_j + i xi_j)^dag (psi_j + i xi_j) / 2``;
    the global phase is fixed so that the largest component is real positive.
    """
    n = n_majorana
    gk, gx, gz = jordan_wigner(2 * n)
    n_qubits = n
    gam = [pauli_dense(int(gk[m]), int(gx[m]), int(gz[m]), n_qubits) for m in range(2 * n)]
    dim = 1 << n_qubits
    h = np.zeros((dim, dim), dtype=complex)
    for j in range(n):
        a = (gam[j] + 1j * gam[n + j]) / math.sqrt(2)
        h += a.conj().T @ a / 2
    w, v = np.linalg.eigh(h)
    if w[0] > 1e-10 or w[1] < 1e-6:
        raise RuntimeError(f"EPR ground space is not unique (lowest levels {w[:2]})")
    s = v[:, 0]
    k = np.argmax(np.abs(s))
    return s * (abs(s[k]) / s[k])


def build_tfd(system: SYKSystem, beta: float, epr: np.ndarray):
    """Normalised ``exp(-beta H / 2)|EPR>`` and ``Z(beta)``.

    Before normalisation the squared norm equals ``Z(beta) / 2^{N/2}``.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    state = system.apply_left(system.operator_exp(beta / 2), epr)
    norm2 = np.vdot(state, state).real
    z = system.partition(beta).real
    dim = system.matrix.shape[0]
    if not np.isclose(norm2, z / dim, rtol=1e-9, atol=0.0):
        raise AssertionError(f"TFD norm {norm2} != Z/2^(N/2) = {z / dim}")
    return state / math.sqrt(norm2), z


def evolve(system: SYKSystem, t: float, state: np.ndarray) -> np.ndarray:
    """``exp(-i H t)|state>`` through the cached eigenbasis."""
    return system.apply_left(system.operator_exp(1j * t), state)


@dataclass
class MajoranaSpectrum:
    """Coefficients ``c_{v_L, v_R}`` indexed by ``v_L | v_R << N``."""

    n_majorana: int
    coefficients: np.ndarray
    max_imag: float = 0.0

    @property
    def power2(self) -> float:
        return math.fsum(self.coefficients**2)

    @property
    def power4(self) -> float:
        return math.fsum(self.coefficients**4)

    def diagonal(self) -> np.ndarray:
        """``(-i)^n c_{v,v}`` for all ``v`` (real, ``n`` is always even)."""
        n = self.n_majorana
        v = np.arange(1 << n)
        w = popcount(v)
        sign = np.where(((w + 1) * w // 2) % 2 == 0, 1.0, -1.0)
        return sign * self.coefficients[v | (v << n)]


def majorana_spectrum(state: np.ndarray) -> MajoranaSpectrum:
    """``c = <state|Psi|state>`` for all ``4^N`` Majorana strings."""
    state = np.asarray(state, dtype=complex)
    n = int(round(math.log2(state.shape[0])))
    if n > MAX_SPECTRUM_N:
        raise MemoryError(f"Majorana spectrum limited to N <= {MAX_SPECTRUM_N}, got N = {n}")
    sign, x, z = _strings(2 * n)
    table = pauli_expectations(state)
    c = sign * table[x, z]
    max_imag = float(np.abs(c.imag).max())
    if max_imag > 1e-8:
        log.warning("Majorana spectrum has imaginary parts up to %.3g", max_imag)
    return MajoranaSpectrum(n, np.ascontiguousarray(c.real), max_imag)


def stabilizer_renyi(spectrum: MajoranaSpectrum) -> float:
    """Second stabilizer Renyi entropy ``-ln(2^{-N} sum c^4)``."""
    n = spectrum.n_majorana
    return -math.log(spectrum.power4) + n * math.log(2.0)


def left_string(v_left: int, n_majorana: int) -> np.ndarray:
    """Dense ``Psi_{v, 0}`` on the left space."""
    sign, x, z = _strings(n_majorana)
    v = int(v_left)
    xx, zz = int(x[v]), int(z[v])
    return sign[v] * pauli_dense(bin(xx & zz).count("1") % 4, xx, zz, n_majorana // 2)


def wightman_coefficient(system: SYKSystem, beta: float, t: float, v_left: int, v_right: int) -> float:
    """Spectrum entry from the two-sided Wightman function.

    ``i^n tr(e^{-(beta/2 - it)H} Psi_{vL,0} e^{-(beta/2 + it)H} Psi_{vR,0}) / Z(beta)``.
    """
    n = system.n_majorana
    a = system.operator_exp(beta / 2 - 1j * t)
    b = system.operator_exp(beta / 2 + 1j * t)
    val = np.trace(a @ left_string(v_left, n) @ b @ left_string(v_right, n))
    val *= 1j ** (phase_exponent(v_left, v_right) % 4) / system.partition(beta).real
    if abs(val.imag) > 1e-8 * max(1.0, abs(val)):
        log.warning("Wightman coefficient has imaginary part %.3g", val.imag)
    return float(val.real)


def averaged_diagonal_prediction(system: SYKSystem, beta: float, t: float) -> float:
    """``|Z(beta/2 + it)|^2 / (Z(beta) 2^{N/2})``."""
    zc = system.partition(beta / 2 + 1j * t)
    return float(abs(zc) ** 2 / (system.partition(beta).real * system.matrix.shape[0]))


def exact_sff(system: SYKSystem, beta: float, t):
    """``|Z(beta + it)|^2``; vectorised over ``t``."""
    t = np.asarray(t, dtype=float)
    return np.abs(system.partition(beta + 1j * t)) ** 2


def exact_renyi2(system: SYKSystem, beta: float) -> float:
    """Second Renyi entropy of the thermal state, ``-ln(Z(2beta)/Z(beta)^2)``."""
    e = system.energies - system.energies[0]
    # ground-energy shifts cancel between numerator and denominator
    z1 = np.exp(-beta * e).sum()
    z2 = np.exp(-2 * beta * e).sum()
    return float(-math.log(z2) + 2 * math.log(z1))


@dataclass
class EDPoint:
    beta: float
    t: float
    m2: float
    power2: float
    max_imag: float
    z_beta: float
    sff_half: float  # |Z(beta/2 + it)|^2


@dataclass
class EDRun:
    """Single-realization M2(t) curves for a list of betas."""

    params: ModelParams
    realization: int
    points: list[EDPoint] = field(default_factory=list)


def ed_m2_curve(params: ModelParams, betas, times, realization: int = 0) -> EDRun:
    """SRE of the evolved TFD for one disorder realization."""
    system = SYKSystem(sample_couplings(params, realization))
    epr = build_epr(params.n_majorana)
    run = EDRun(params, realization)
    for beta in betas:
        tfd, z = build_tfd(system, beta, epr)
        for t in times:
            spec = majorana_spectrum(evolve(system, t, tfd))
            run.points.append(
                EDPoint(
                    beta=float(beta),
                    t=float(t),
                    m2=stabilizer_renyi(spec),
                    power2=spec.power2,
                    max_imag=spec.max_imag,
                    z_beta=float(z),
                    sff_half=float(abs(system.partition(beta / 2 + 1j * t)) ** 2),
                )
            )
    return run
