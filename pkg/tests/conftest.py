"""Shared test oracles.

The dense helpers here are deliberately independent of probetomo.sim: tests
that validate the algebra or the symbolic engine build their matrices from
scratch so the two routes share no code.
"""

import numpy as np
import pytest

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA = {0: I2, 1: SX, 2: SY, 3: SZ}


def kron_chain(letters):
    """Tensor product of single-qubit Paulis given a list of letter codes."""
    out = np.array([[1.0 + 0j]])
    for l in letters:
        out = np.kron(out, SIGMA[l])
    return out


def dense_expr(expr, sites):
    """Dense matrix of a scalar-coefficient PauliExpr on an explicit site list."""
    index = {s: i for i, s in enumerate(sites)}
    n = len(sites)
    dim = 2**n
    out = np.zeros((dim, dim), dtype=complex)
    for sites_key, coef in expr.terms.items():
        letters = [0] * n
        for coord, letter in sites_key:
            letters[index[coord]] = letter
        out += complex(coef) * kron_chain(letters)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
