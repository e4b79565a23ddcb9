"""Majorana operators as Pauli strings.

Operators on ``n`` qubits are stored symbolically as ``i**k * X^x Z^z`` with
``x`` and ``z`` integer bit masks (bit ``m`` is qubit ``m``, all X factors to
the left of all Z factors). Majoranas are realised by the Jordan-Wigner map

    gamma_{2m}   = Z_0 ... Z_{m-1} X_m
    gamma_{2m+1} = Z_0 ... Z_{m-1} Y_m

with ``gamma**2 = 1``; the physical modes are ``psi = gamma / sqrt(2)``.

On the doubled (left + right) system the ordering is blocked: left modes
``psi_j = gamma_j`` for ``j < N`` come first, then right modes
``xi_j = gamma_{N+j}``. String phases depend on this ordering.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "popcount",
    "pauli_mul",
    "jordan_wigner",
    "pauli_dense",
    "string_table",
    "pauli_expectations",
    "walsh_hadamard",
]

_I_POW = np.array([1, 1j, -1, -1j])


def popcount(a):
    """Bit count, elementwise for integer arrays."""
    a = np.asarray(a, dtype=np.int64)
    out = np.zeros(a.shape, dtype=np.int64)
    while np.any(a):
        out += a & 1
        a = a >> 1
    return out


def pauli_mul(k1, x1, z1, k2, x2, z2):
    """Product of ``i^k1 X^x1 Z^z1`` and ``i^k2 X^x2 Z^z2`` (vectorised).

    Moving ``Z^z1`` past ``X^x2`` costs ``(-1)^{|z1 & x2|}``.
    """
    k = (np.asarray(k1) + np.asarray(k2) + 2 * popcount(np.asarray(z1) & np.asarray(x2))) % 4
    return k, np.asarray(x1) ^ np.asarray(x2), np.asarray(z1) ^ np.asarray(z2)


def jordan_wigner(n_modes: int):
    """Symbolic ``(k, x, z)`` arrays of the ``n_modes`` Majoranas ``gamma``.

    ``n_modes`` must be even; the operators act on ``n_modes // 2`` qubits.
    """
    if n_modes % 2:
        raise ValueError(f"need an even number of Majorana modes, got {n_modes}")
    idx = np.arange(n_modes)
    m = idx // 2
    x = (1 << m).astype(np.int64)
    z = ((1 << (m + (idx % 2))) - 1).astype(np.int64)
    k = (idx % 2).astype(np.int64)
    return k, x, z


def pauli_dense(k: int, x: int, z: int, n_qubits: int) -> np.ndarray:
    """Dense matrix of ``i^k X^x Z^z``."""
    dim = 1 << n_qubits
    b = np.arange(dim)
    out = np.zeros((dim, dim), dtype=complex)
    out[b ^ x, b] = _I_POW[k % 4] * (1 - 2 * (popcount(b & z) % 2))
    return out


def string_table(n_modes: int):
    """Pauli data of every Majorana string on ``n_modes`` Majoranas.

    The string for bit vector ``v`` (bit ``k`` selects ``gamma_k``) is

        Psi_v = i^{w(w-1)/2} gamma_{k_1} gamma_{k_2} ...  (k_1 < k_2 < ...)

    with ``w = |v|``; this equals ``i^{w(w-1)/2} 2^{w/2} psi_{k_1} ...``, is
    Hermitian and squares to one. Returns ``(sign, x, z)`` with
    ``Psi_v = sign[v] * P(x[v], z[v])`` where ``P(x, z) = i^{|x&z|} X^x Z^z``
    is the Hermitian Pauli string and ``sign`` is +-1.
    """
    gk, gx, gz = jordan_wigner(n_modes)
    k = np.zeros(1, dtype=np.int64)
    x = np.zeros(1, dtype=np.int64)
    z = np.zeros(1, dtype=np.int64)
    for mode in range(n_modes):
        k2, x2, z2 = pauli_mul(k, x, z, gk[mode], gx[mode], gz[mode])
        k = np.concatenate([k, k2])
        x = np.concatenate([x, x2])
        z = np.concatenate([z, z2])
    w = popcount(np.arange(1 << n_modes))
    phase = (w * (w - 1) // 2 + k - popcount(x & z)) % 4
    if np.any(phase % 2):
        raise AssertionError("non-Hermitian Majorana string; ordering bug")
    sign = 1 - phase  # 0 -> +1, 2 -> -1
    return sign.astype(np.int64), x, z


def walsh_hadamard(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unnormalised Walsh-Hadamard transform along ``axis``.

    ``out[..., z] = sum_b (-1)^{|z & b|} a[..., b]``.
    """
    a = np.moveaxis(np.array(a, copy=True), axis, -1)
    n = a.shape[-1]
    lead = a.shape[:-1]
    h = 1
    while h < n:
        a = a.reshape(lead + (n // (2 * h), 2, h))
        lo = a[..., 0, :] + a[..., 1, :]
        hi = a[..., 0, :] - a[..., 1, :]
        a = np.stack([lo, hi], axis=-2)
        h *= 2
    return np.moveaxis(a.reshape(lead + (n,)), -1, axis)


def pauli_expectations(state: np.ndarray) -> np.ndarray:
    """All Hermitian Pauli expectation values ``<s|P(x, z)|s>``.

    Returns a complex ``(2^n, 2^n)`` array indexed ``[x, z]``. Cost is
    ``O(n 4^n)`` via one Walsh-Hadamard transform per X pattern.
    """
    state = np.asarray(state, dtype=complex)
    dim = state.shape[0]
    b = np.arange(dim)
    # w[x, b] = conj(s[b ^ x]) s[b]
    w = np.conj(state[b[None, :] ^ b[:, None]]) * state[None, :]
    raw = walsh_hadamard(w, axis=1)
    xz = popcount(b[:, None] & b[None, :])
    return _I_POW[xz % 4] * raw
