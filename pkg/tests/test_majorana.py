import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfdmagic.majorana import (
    jordan_wigner,
    pauli_dense,
    pauli_expectations,
    pauli_mul,
    popcount,
    string_table,
    walsh_hadamard,
)


def dense_majoranas(n_modes):
    k, x, z = jordan_wigner(n_modes)
    return [pauli_dense(int(k[m]), int(x[m]), int(z[m]), n_modes // 2) for m in range(n_modes)]


@pytest.mark.parametrize("n_modes", [2, 4, 6, 8])
def test_clifford_algebra(n_modes):
    gam = dense_majoranas(n_modes)
    eye = np.eye(gam[0].shape[0])
    for a in range(n_modes):
        assert np.allclose(gam[a], gam[a].conj().T)
        for b in range(n_modes):
            anti = gam[a] @ gam[b] + gam[b] @ gam[a]
            assert np.allclose(anti, 2 * eye * (a == b), atol=1e-14)


def test_odd_mode_count_rejected():
    with pytest.raises(ValueError):
        jordan_wigner(3)


@given(
    st.integers(0, 3), st.integers(0, 15), st.integers(0, 15), st.integers(0, 3), st.integers(0, 15), st.integers(0, 15)
)
@settings(max_examples=60, deadline=None)
def test_pauli_mul_matches_dense(k1, x1, z1, k2, x2, z2):
    k, x, z = pauli_mul(k1, x1, z1, k2, x2, z2)
    lhs = pauli_dense(k1, x1, z1, 4) @ pauli_dense(k2, x2, z2, 4)
    assert np.allclose(lhs, pauli_dense(int(k), int(x), int(z), 4))


@pytest.mark.parametrize("n_modes", [2, 4, 6])
def test_strings_hermitian_and_square_to_one(n_modes):
    sign, x, z = string_table(n_modes)
    gam = dense_majoranas(n_modes)
    dim = gam[0].shape[0]
    for v in range(1 << n_modes):
        w = bin(v).count("1")
        op = np.eye(dim, dtype=complex)
        for m in range(n_modes):
            if v >> m & 1:
                op = op @ gam[m]
        op = op * 1j ** (w * (w - 1) // 2)
        herm = sign[v] * pauli_dense(popcount(x[v] & z[v]) % 4, int(x[v]), int(z[v]), n_modes // 2)
        assert np.allclose(op, herm)
        assert np.allclose(op, op.conj().T)
        assert np.allclose(op @ op, np.eye(dim))


def test_walsh_hadamard_matches_definition(rng):
    a = rng.normal(size=(3, 16))
    out = walsh_hadamard(a, axis=1)
    b = np.arange(16)
    h = (-1.0) ** popcount(b[:, None] & b[None, :])
    assert np.allclose(out, a @ h.T)


def test_pauli_expectations_match_dense(rng):
    n = 3
    s = rng.normal(size=8) + 1j * rng.normal(size=8)
    s /= np.linalg.norm(s)
    table = pauli_expectations(s)
    for x in range(8):
        for z in range(8):
            p = pauli_dense(popcount(x & z) % 4, x, z, n)
            assert abs(table[x, z] - np.vdot(s, p @ s)) < 1e-13
    assert np.allclose(table.imag, 0, atol=1e-14)
