import itertools

import numpy as np
import pytest

from probetomo.pauli import (
    PauliExpr,
    PauliString,
    commutator,
    conjugate_observable,
    expr_from_text,
    expr_to_text,
    nested_commutator,
    normalized_trace,
)
from probetomo.polysys import MultiPoly, QQi

from conftest import SIGMA, dense_expr

X, Y, Z = 1, 2, 3


def S(*pairs):
    return PauliString(tuple(pairs))


def E(*pairs, coef=1 + 0j):
    return PauliExpr.from_string(S(*pairs), coef)


def test_single_qubit_table():
    a = S((0, X)).mul(S((0, Y)))
    assert a.sites == (((0,), Z),) and a.phase_power == 1  # XY = iZ
    b = S((0, X)).mul(S((0, X)))
    assert b.sites == () and b.phase_power == 0  # XX = I


def test_two_site_product():
    # (X0 Z1)(Y0 Z1) = i Z0
    p = S((0, X), (1, Z)).mul(S((0, Y), (1, Z)))
    assert p.sites == (((0,), Z),) and p.phase_power == 1


def test_support_containment(rng):
    sites = [(-1,), (0,), (1,)]
    for _ in range(50):
        a = _random_string(rng, sites)
        b = _random_string(rng, sites)
        prod = a.mul(b)
        assert set(prod.support()) <= set(a.support()) | set(b.support())


def _random_string(rng, sites):
    pairs = []
    for s in sites:
        l = rng.integers(0, 4)
        if l:
            pairs.append((s, int(l)))
    return PauliString(tuple(pairs), phase_power=int(rng.integers(0, 4)))


def test_associativity_and_self_inverse(rng):
    sites = [(-1,), (0,), (1,)]
    for _ in range(80):
        a, b, c = (_random_string(rng, sites) for _ in range(3))
        assert a.mul(b).mul(c) == a.mul(b.mul(c))
        sq = a.mul(a)
        assert sq.sites == ()  # a * a = I up to phase


def test_commutator_basic():
    # [Z0 Z1, X0] = 2i Y0 Z1
    h = E((0, Z), (1, Z))
    got = commutator(h, E((0, X)))
    want = PauliExpr.from_string(S((0, Y), (1, Z)), 2j)
    assert got == want
    assert commutator(h, h) == PauliExpr.zero()


def test_nested_commutator_against_dense(rng):
    # j = 2 on two qubits, H = X0 + Z0 Z1, O = Z0; brute-force 4x4 oracle
    sites = [(0,), (1,)]
    h = E((0, X)) + E((0, Z), (1, Z))
    o = E((0, Z))
    hm = dense_expr(h, sites)
    om = dense_expr(o, sites)
    want = om
    for j in range(5):
        got = dense_expr(nested_commutator(h, o, j), sites)
        assert np.allclose(got, want, atol=1e-12)
        want = hm @ want - want @ hm
    assert nested_commutator(h, o, 0) == o
    assert nested_commutator(h, o, 1) == commutator(h, o)


def test_nested_commutator_support_growth():
    # nearest-neighbor H on a 7-site chain: support stays within j hops
    chain = [(i,) for i in range(-3, 4)]
    h = PauliExpr.zero()
    for i in range(-3, 3):
        h = h + E((i, X), (i + 1, X)) + E((i, Z), (i + 1, Z), coef=0.5 + 0j)
    for i in range(-3, 4):
        h = h + E((i, Z), coef=0.3 + 0j)
    o = E((0, Y))
    for j in range(5):
        sup = nested_commutator(h, o, j).support()
        assert all(abs(c[0]) <= j for c in sup)


def test_normalized_trace():
    assert normalized_trace(E((0, X))) == 0
    assert normalized_trace(PauliExpr.identity(3 + 0j)) == 3 + 0j
    # tr(X * h1 X)/d = h1 on the symbolic path
    h1 = MultiPoly.variable(0)
    sym = PauliExpr({(((0,), X),): h1})
    prod = E((0, X), coef=MultiPoly.constant(1)).opmul(sym)
    assert normalized_trace(prod) == h1


def test_pauli_orthogonality_exhaustive():
    # tr(a b)/d = 0 unless b = a, over all strings on two sites
    sites = [(0,), (1,)]
    strings = []
    for l0 in range(4):
        for l1 in range(4):
            pairs = tuple(p for p in (((0,), l0), ((1,), l1)) if p[1])
            strings.append(PauliString(pairs))
    for a, b in itertools.product(strings, strings):
        tr = normalized_trace(PauliExpr.from_string(a).opmul(PauliExpr.from_string(b)))
        if a.sites == b.sites:
            assert tr != 0
        else:
            assert tr == 0


@pytest.mark.parametrize("channel", range(10))
@pytest.mark.parametrize("letter", [X, Y, Z])
def test_channel_conjugation_against_dense(channel, letter):
    # C^dag[O] = U^dag O U, checked against 2x2 matrices for all channels
    s2 = 1 / np.sqrt(2)
    U = [
        SIGMA[0], SIGMA[1], SIGMA[2], SIGMA[3],
        s2 * (SIGMA[1] + SIGMA[2]), s2 * (SIGMA[2] + SIGMA[3]), s2 * (SIGMA[3] + SIGMA[1]),
        s2 * (SIGMA[0] + 1j * SIGMA[1]), s2 * (SIGMA[0] + 1j * SIGMA[2]), s2 * (SIGMA[0] + 1j * SIGMA[3]),
    ][channel]
    got = conjugate_observable(channel, E((0, letter)), (0,))
    want = U.conj().T @ SIGMA[letter] @ U
    assert np.allclose(dense_expr(got, [(0,)]), want, atol=1e-12)
    # Hermiticity preserved: single signed letter out
    assert len(got.terms) == 1


def test_channel_identity_and_sign():
    o = E((0, Z)) + E((1, X), coef=2 + 0j)
    assert conjugate_observable(0, o, (0,)) == o
    assert conjugate_observable(1, E((0, Z)), (0,)) == E((0, Z), coef=-1 + 0j)  # X Z X = -Z
    with pytest.raises(ValueError):
        conjugate_observable(10, o, (0,))


def test_symbolic_equals_scalar_path(rng):
    # evaluate-then-compute == compute-then-evaluate over 100 random lambda
    h_sym = PauliExpr(
        {
            (((0,), X),): MultiPoly.variable(0),
            (((0,), Z), ((1,), Z)): MultiPoly.variable(3),
            (((1,), Y),): MultiPoly.variable(1),
        }
    )
    o = E((0, Y))
    sym_result = nested_commutator(h_sym, PauliExpr({(((0,), Y),): MultiPoly.constant(1)}), 2)
    for _ in range(100):
        lam = rng.uniform(-1, 1, 12)
        h_num = h_sym.map_coefficients(lambda p: p.evaluate_float(lam))
        num_result = nested_commutator(h_num, o, 2)
        evaluated = sym_result.map_coefficients(lambda p: p.evaluate_float(lam))
        assert set(evaluated.terms) == set(num_result.terms)
        for k, v in evaluated.terms.items():
            assert abs(v - num_result.terms[k]) < 1e-12


def test_text_round_trip_scalar():
    e = E((0, X), (1, Z), coef=0.5 - 0.25j) + E((-1, Y), coef=2 + 0j)
    text = expr_to_text(e)
    back = expr_from_text(text)
    assert set(back.terms) == set(e.terms)
    for k in e.terms:
        assert abs(back.terms[k] - e.terms[k]) < 1e-15


def test_text_round_trip_exact():
    from fractions import Fraction

    e = PauliExpr(
        {
            (((0,), X),): QQi(Fraction(3, 4)),
            (((0,), Y), ((2,), Z)): QQi(Fraction(-1, 3), Fraction(2, 7)),
        }
    )
    back = expr_from_text(expr_to_text(e))
    assert back.terms == e.terms
