"""Symbolic Taylor coefficients of the probe observable.

The probe signal A(beta, t) = tr(sigma^mu_0 (C_B[rho_beta])(t)) expands as

    A = sum_j t^j Delta_j(beta),
    Delta_j(beta) = (i^j / j!) tr(C_B^dag[[H, sigma^mu_0]_j] rho_beta),

and the coefficient of t^j beta^k is a polynomial in the 12 Hamiltonian
parameters.  This module derives those polynomials exactly: the Heisenberg
side via nested commutators, the Gibbs side via symbolic powers of H and
exact power-series division of tr(O e^{-beta H}) / tr(e^{-beta H}) (tr H = 0,
so the denominator is 1 + O(beta^2)).

The trace accumulation is the hot path.  It runs on a flattened
Gaussian-integer representation with support-size pruning: a term of
O . H^m can still reach the identity (and hence contribute to a trace at
order <= k_max) only if its support has at most 2*(k_max - m) sites, since
each remaining H factor can clear at most two sites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .family import LatticeSpec, symbolic_hamiltonian
from .pauli import PauliExpr, PauliString, _mul_sites, _pair_commutes, _times_phase, conjugate_observable
from .polysys import NVARS, MultiPoly, PolynomialSystem, QQi

MAX_TOTAL_ORDER = 6


class RadiusTooSmallError(ValueError):
    """Lattice too small for boundary-free coefficients at the requested order."""


class OrderTooLargeError(ValueError):
    """Requested expansion order exceeds the symbolic cost guard."""


class DerivationMismatchError(AssertionError):
    """Derived canonical polynomials disagree with the stored reference forms."""


@dataclass(frozen=True)
class CoefficientSpec:
    """One line of the canonical table: scale * sum_w weight * A^{beta(k), t(j)}_{mu, B}.

    readouts are (mu, channel, weight) triples; the scale carries all sign and
    1/4 bookkeeping so that the finished polynomial is exactly the closed form.
    """

    name: str
    j: int
    k: int
    readouts: tuple
    scale: Fraction


_Q = Fraction


def _spec(name, j, k, readouts, scale) -> CoefficientSpec:
    return CoefficientSpec(name, j, k, tuple(readouts), _Q(scale))


# Canonical 13-line table.  mu letters: 1=X, 2=Y, 3=Z; channels 0..9.
# Scales follow the explicit trace formulas (see decisions ledger for the
# odd-j sign convention note).
CANONICAL_SPECS = (
    _spec("q", 2, 1, [(1, 1, 1), (1, 2, 1)], _Q(1, 4)),
    _spec("p1", 0, 1, [(1, 0, 1)], -1),
    _spec("p2", 0, 1, [(2, 0, 1)], -1),
    _spec("p3", 0, 1, [(3, 0, 1)], -1),
    _spec("p4", 0, 2, [(1, 0, 1)], 1),
    _spec("p5", 0, 2, [(2, 0, 1)], 1),
    _spec("p6", 0, 2, [(3, 0, 1)], 1),
    _spec("p7", 1, 1, [(1, 2, 1)], _Q(1, 4)),
    _spec("p8", 1, 1, [(2, 3, 1)], _Q(1, 4)),
    _spec("p9", 1, 1, [(3, 1, 1)], _Q(1, 4)),
    _spec("p10", 1, 1, [(3, 9, 1), (3, 4, -1)], _Q(1, 4)),
    _spec("p11", 1, 1, [(1, 7, 1), (1, 5, -1)], _Q(1, 4)),
    _spec("p12", 1, 1, [(2, 8, 1), (2, 6, -1)], _Q(1, 4)),
)

CANONICAL_SPECS_BY_NAME = {s.name: s for s in CANONICAL_SPECS}


def min_stable_radius(j: int, k: int) -> int:
    """Radius at which the finite box reproduces translation-invariant coefficients."""
    return j + k + 1


# ---------------------------------------------------------------------------
# Hamiltonian term tables and the integer trace engine
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _h_int_terms(lattice: LatticeSpec):
    """Hamiltonian as (sites, var) pairs, a site -> term-id index, and field ids."""
    terms = []
    for v in lattice.sites():
        for mu in range(3):
            terms.append((((v, mu + 1),), mu))
    n_fields = len(terms)
    for v, w in lattice.edges():
        for mu in range(3):
            for nu in range(3):
                terms.append((((v, mu + 1), (w, nu + 1)), 3 + 3 * mu + nu))
    index: dict = {}
    for tid, (sites, _) in enumerate(terms):
        for coord, _l in sites:
            index.setdefault(coord, []).append(tid)
    return tuple(terms), index, range(n_fields)


@lru_cache(maxsize=None)
def _h_expr_index(lattice: LatticeSpec):
    """Symbolic H terms grouped by touched site, for indexed commutators."""
    h = symbolic_hamiltonian(lattice)
    items = tuple(h.terms.items())
    index: dict = {}
    for tid, (sites, _c) in enumerate(items):
        for coord, _l in sites:
            index.setdefault(coord, []).append(tid)
    return items, index


def _commutator_with_h(lattice: LatticeSpec, o: PauliExpr) -> PauliExpr:
    """[H, O] visiting only H terms whose support meets supp(O)."""
    items, index = _h_expr_index(lattice)
    out: dict = {}
    for sb, cb in o.terms.items():
        cand: set = set()
        for coord, _l in sb:
            cand.update(index.get(coord, ()))
        for tid in cand:
            sa, ca = items[tid]
            if _pair_commutes(sa, sb):
                continue
            sites, phase = _mul_sites(sa, sb)
            c = _times_phase(ca * cb * 2, phase)
            if sites in out:
                s = out[sites] + c
                if s:
                    out[sites] = s
                else:
                    del out[sites]
            elif c:
                out[sites] = c
    return PauliExpr(out)


def _nested_commutator_fast(lattice: LatticeSpec, o: PauliExpr, j: int) -> PauliExpr:
    for _ in range(j):
        o = _commutator_with_h(lattice, o)
    return o


def _expr_to_int_rep(o: PauliExpr):
    """Clear denominators: returns ({sites: {exps: (re, im)}}, den) with ints."""
    den = 1
    for poly in o.terms.values():
        for c in poly.terms.values():
            den = math.lcm(den, c.re.denominator, c.im.denominator)
    rep = {}
    for sites, poly in o.terms.items():
        d = {}
        for e, c in poly.terms.items():
            re = int(c.re * den)
            im = int(c.im * den)
            if re or im:
                d[e] = (re, im)
        if d:
            rep[sites] = d
    return rep, den


def _mul_pruned(P: dict, h_terms, h_index, field_ids, bound: int) -> dict:
    """One H-multiplication of the flattened rep, dropping unclearable supports.

    Disjoint field (1-site) terms grow the support by 1 and coupling (2-site)
    terms by 2, so the candidate cut distinguishes them.
    """
    out: dict = {}
    n_terms = len(h_terms)
    for sites_s, poly_s in P.items():
        ns = len(sites_s)
        if ns - 2 > bound:
            continue
        if ns + 2 <= bound:
            candidates = range(n_terms)
        else:
            cand: set = set()
            for coord, _l in sites_s:
                cand.update(h_index.get(coord, ()))
            if ns + 1 <= bound:
                cand.update(field_ids)
            candidates = cand
        for tid in candidates:
            t_sites, var = h_terms[tid]
            new_sites, phase = _mul_sites(sites_s, t_sites)
            if len(new_sites) > bound:
                continue
            phase &= 3
            tgt = out.get(new_sites)
            if tgt is None:
                tgt = out[new_sites] = {}
            for exps, (re, im) in poly_s.items():
                e2 = exps[:var] + (exps[var] + 1,) + exps[var + 1 :]
                if phase == 1:
                    re2, im2 = -im, re
                elif phase == 2:
                    re2, im2 = -re, -im
                elif phase == 3:
                    re2, im2 = im, -re
                else:
                    re2, im2 = re, im
                cur = tgt.get(e2)
                if cur is None:
                    tgt[e2] = (re2, im2)
                else:
                    tgt[e2] = (cur[0] + re2, cur[1] + im2)
    # sweep exact cancellations
    clean: dict = {}
    for sites_s, poly_s in out.items():
        kept = {e: c for e, c in poly_s.items() if c[0] or c[1]}
        if kept:
            clean[sites_s] = kept
    return clean


def _trace_powers(o: PauliExpr, lattice: LatticeSpec, k_max: int):
    """Gaussian-integer polynomials T_k ~ tr(O . H^k)/d for k = 0..k_max.

    Returns ([T_0..T_k_max], den) with the common integer denominator of O.
    """
    rep, den = _expr_to_int_rep(o)
    h_terms, h_index, field_ids = _h_int_terms(lattice)
    traces = [dict(rep.get((), {}))]
    P = rep
    for m in range(1, k_max + 1):
        P = _mul_pruned(P, h_terms, h_index, field_ids, 2 * (k_max - m))
        traces.append(dict(P.get((), {})))
    return traces, den


def _int_poly_to_multipoly(d: dict, scale: Fraction) -> MultiPoly:
    terms = {}
    for e, (re, im) in d.items():
        c = QQi(re * scale, im * scale)
        if c:
            terms[e] = c
    return MultiPoly(terms)


@lru_cache(maxsize=None)
def _gibbs_inverse_series(lattice: LatticeSpec, k_max: int):
    """Coefficients w_k of 1 / (tr(e^{-beta H})/d) up to beta^k_max."""
    ident = PauliExpr({(): MultiPoly.constant(1)})
    traces, den = _trace_powers(ident, lattice, k_max)
    assert den == 1
    z = [
        _int_poly_to_multipoly(traces[k], Fraction((-1) ** k, math.factorial(k)))
        for k in range(k_max + 1)
    ]
    if z[0] != MultiPoly.constant(1):
        raise AssertionError("partition-function series must start at 1")
    if z[1]:
        raise AssertionError("tr(H) = 0 is violated")
    w = [MultiPoly.constant(1)]
    for k in range(1, k_max + 1):
        acc = MultiPoly.zero()
        for m in range(1, k + 1):
            acc = acc + z[m] * w[k - m]
        w.append(-acc)
    return tuple(w)


def _guard_orders(lattice: LatticeSpec, j_max: int, k_max: int, require_stable_radius: bool):
    if j_max < 0 or k_max < 0:
        raise ValueError("orders must be nonnegative")
    if j_max + k_max > MAX_TOTAL_ORDER:
        raise OrderTooLargeError(
            f"total order {j_max + k_max} exceeds the cost guard {MAX_TOTAL_ORDER}"
        )
    if require_stable_radius and lattice.radius < min_stable_radius(j_max, k_max):
        raise RadiusTooSmallError(
            f"radius {lattice.radius} < {min_stable_radius(j_max, k_max)} needed for "
            f"boundary-free coefficients at order (j={j_max}, k={k_max}); "
            "pass require_stable_radius=False to derive the finite chain's own series"
        )


@lru_cache(maxsize=None)
def _raw_series(lattice: LatticeSpec, mu: int, channel: int, j: int, k_max: int):
    """A^{beta(k), t(j)}_{mu, B} polynomials for k = 0..k_max (exact, real)."""
    sigma = PauliExpr({((lattice.origin, mu),): MultiPoly.constant(1)})
    kj = _nested_commutator_fast(lattice, sigma, j)
    o = conjugate_observable(channel, kj, lattice.origin)
    traces, den = _trace_powers(o, lattice, k_max)
    n = [
        _int_poly_to_multipoly(traces[k], Fraction((-1) ** k, math.factorial(k) * den))
        for k in range(k_max + 1)
    ]
    w = _gibbs_inverse_series(lattice, k_max)
    out = []
    for k in range(k_max + 1):
        acc = MultiPoly.zero()
        for m in range(k + 1):
            acc = acc + n[m] * w[k - m]
        acc = acc.times_i_power(j) * Fraction(1, math.factorial(j))
        if not acc.is_real():
            raise AssertionError(
                f"imaginary residue in exact coefficient (mu={mu}, B={channel}, j={j}, k={k})"
            )
        out.append(acc)
    return tuple(out)


def series_observable(
    lattice: LatticeSpec,
    spec: CoefficientSpec,
    j_max: int | None = None,
    k_max: int | None = None,
    require_stable_radius: bool = True,
) -> dict:
    """Grid {(j,k): MultiPoly} of weighted readout combinations, unscaled.

    The (j,k) entry is sum_w weight * A^{beta(k), t(j)}_{mu_w, B_w}; the
    spec's overall scale is applied by :func:`spec_polynomial`.
    """
    j_max = spec.j if j_max is None else j_max
    k_max = spec.k if k_max is None else k_max
    _guard_orders(lattice, j_max, k_max, require_stable_radius)
    grid = {}
    for j in range(j_max + 1):
        rows = []
        for mu, channel, weight in spec.readouts:
            rows.append((weight, _raw_series(lattice, mu, channel, j, k_max)))
        for k in range(k_max + 1):
            acc = MultiPoly.zero()
            for weight, series in rows:
                acc = acc + series[k] * weight
            grid[(j, k)] = acc
    return grid


def spec_polynomial(
    lattice: LatticeSpec, spec: CoefficientSpec, require_stable_radius: bool = True
) -> MultiPoly:
    """The finished canonical polynomial for one table line."""
    grid = series_observable(lattice, spec, require_stable_radius=require_stable_radius)
    return grid[(spec.j, spec.k)] * spec.scale


def truncated_series_poly(
    lattice: LatticeSpec,
    spec: CoefficientSpec,
    k_bar: int,
    beta,
    require_stable_radius: bool = True,
) -> MultiPoly:
    """Higher-degree truncation sum_{k<=k'<=k_bar} beta^{k'-k} C(k',k) A_{j,k'}.

    Unscaled, like :func:`series_observable`; the k'=k term is exactly the
    base Taylor polynomial, so k_bar=k or beta=0 reduce to it.
    """
    if k_bar < spec.k:
        raise ValueError("k_bar must be >= the spec's beta order")
    _guard_orders(lattice, spec.j, k_bar, require_stable_radius)
    grid = series_observable(
        lattice, spec, j_max=spec.j, k_max=k_bar, require_stable_radius=require_stable_radius
    )
    beta_f = Fraction(beta) if not isinstance(beta, Fraction) else beta
    acc = MultiPoly.zero()
    for kp in range(spec.k, k_bar + 1):
        coef = beta_f ** (kp - spec.k) * math.comb(kp, spec.k)
        acc = acc + grid[(spec.j, kp)] * coef
    return acc


# ---------------------------------------------------------------------------
# Canonical system and its closed-form reference
# ---------------------------------------------------------------------------


def _vars():
    return [MultiPoly.variable(i) for i in range(NVARS)]


@lru_cache(maxsize=None)
def reference_system(D: int) -> PolynomialSystem:
    """The explicit closed forms of (q, p1..p12) for dimension D.

    These duplicate the derivation route on purpose: canonical_system checks
    the symbolic engine against them termwise, and the test suite checks both
    against dense-simulator finite differences.
    """
    if D not in (1, 2, 3):
        raise ValueError("dimension must be 1, 2 or 3")
    h1, h2, h3, J11, J12, J13, J21, J22, J23, J31, J32, J33 = _vars()
    p1, p2, p3 = h1, h2, h3
    p4 = (h1 * J11 * 2 + h2 * (J12 + J21) + h3 * (J13 + J31)) * D
    p5 = (h2 * J22 * 2 + h1 * (J21 + J12) + h3 * (J23 + J32)) * D
    p6 = (h3 * J33 * 2 + h1 * (J31 + J13) + h2 * (J32 + J23)) * D
    p7 = h2 * h3 + (J12 * J13 + J22 * J23 + J21 * J31 + J22 * J32 + J23 * J33 + J32 * J33) * D
    p8 = h1 * h3 + (J11 * J13 + J21 * J23 + J11 * J31 + J12 * J32 + J13 * J33 + J31 * J33) * D
    p9 = h1 * h2 + (J11 * J12 + J11 * J21 + J12 * J22 + J21 * J22 + J13 * J23 + J31 * J32) * D
    p10 = h1 * h1 + (J11 * J11 * 2 + J12 * J12 + J21 * J21 + J13 * J13 + J31 * J31) * D
    p11 = h2 * h2 + (J21 * J21 + J12 * J12 + J22 * J22 * 2 + J23 * J23 + J32 * J32) * D
    p12 = h3 * h3 + (J31 * J31 + J13 * J13 + J23 * J23 + J32 * J32 + J33 * J33 * 2) * D
    q = h1 * h3 * h3 + (
        (h2 * 3) * (-(J23 * J31) - J13 * J32 + (J12 + J21) * J33)
        + h1 * (J13 * J13 + J23 * J23 + J31 * J31 + J32 * J32 + J23 * J32 * 6 + J33 * (J33 - J22 * 3) * 2)
        + h3 * (
            J21 * (J23 * 2 - J32 * 3)
            + J12 * (J32 * 2 - J23 * 3)
            + (J13 + J31) * (J11 * 2 + J22 * 3 + J33 * 2)
        )
    ) * D
    return PolynomialSystem(G=q, F=[p1, p2, p3, p4, p5, p6, p7, p8, p9, p10, p11, p12])


@lru_cache(maxsize=None)
def canonical_system(D: int, radius: int | None = None) -> PolynomialSystem:
    """Derive P = (q, p1..p12) symbolically and verify against the closed forms."""
    if D not in (1, 2, 3):
        raise ValueError("dimension must be 1, 2 or 3")
    r_min = max(min_stable_radius(s.j, s.k) for s in CANONICAL_SPECS)
    radius = r_min if radius is None else radius
    if radius < r_min:
        raise RadiusTooSmallError(f"canonical system needs radius >= {r_min}")
    lattice = LatticeSpec(dimension=D, radius=radius)
    derived = {s.name: spec_polynomial(lattice, s) for s in CANONICAL_SPECS}
    system = PolynomialSystem(
        G=derived["q"], F=[derived[f"p{i}"] for i in range(1, 13)]
    )
    ref = reference_system(D)
    diffs = []
    for name, got, want in zip(system.names, system.components(), ref.components()):
        if got != want:
            diffs.append(f"{name}:\n  derived : {got}\n  expected: {want}")
    if diffs:
        raise DerivationMismatchError(
            "derived canonical polynomials disagree with reference forms:\n"
            + "\n".join(diffs)
        )
    return system
