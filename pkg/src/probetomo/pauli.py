"""Exact Pauli-string algebra over arbitrary finite site sets.

Operators are sparse linear combinations of tensor products of single-site
Pauli matrices.  Sites are labelled by D-tuples of signed integers (the probe
site is the coordinate origin), so the same algebra serves chains, square and
cubic lattices without committing to a lattice extent.

Coefficients are duck-typed: any ring object supporting ``+``, ``*``, unary
``-``, truthiness (falsy iff zero) and multiplication by ``Fraction`` works.
Two instantiations are used throughout the package: plain Python ``complex``
for numerics, and :class:`probetomo.polysys.MultiPoly` (with exact
Gaussian-rational scalars) for symbolic derivation.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable

X, Y, Z = 1, 2, 3
LETTER_NAMES = {X: "X", Y: "Y", Z: "Z"}
LETTER_CODES = {"X": X, "Y": Y, "Z": Z}

# i**p for the scalar (complex) coefficient path; exact constants, computed
# nowhere via floating ** which is not exact for complex bases.
_IPOW = (1 + 0j, 1j, -1 + 0j, -1j)

# Single-qubit products sigma_a . sigma_b = i**phase . sigma_c, for a != b.
# Cyclic pairs (X,Y),(Y,Z),(Z,X) pick up +i, anticyclic -i; c is the third letter.
_CYCLIC = {(X, Y), (Y, Z), (Z, X)}


def _letter_mul(a: int, b: int) -> tuple[int, int]:
    """Product of two non-identity Pauli letters: (result letter or 0, phase power)."""
    if a == b:
        return 0, 0
    return 6 - a - b, 1 if (a, b) in _CYCLIC else 3


def _norm_coord(c):
    return (c,) if isinstance(c, int) else tuple(c)


class PauliString:
    """A signed-phase tensor product of single-site Paulis.

    Attributes
    ----------
    phase_power : int
        Exponent of i, reduced mod 4.
    sites : tuple of (coord, letter)
        Sorted by coordinate; identity sites are never stored and letters are
        always in {X, Y, Z}.
    """

    __slots__ = ("phase_power", "sites")

    def __init__(self, sites: Iterable = (), phase_power: int = 0):
        pairs = []
        for coord, letter in sites:
            if letter not in (X, Y, Z):
                raise ValueError(f"letter must be 1..3 (X,Y,Z), got {letter!r}")
            pairs.append((_norm_coord(coord), letter))
        pairs.sort(key=lambda p: p[0])
        for i in range(1, len(pairs)):
            if pairs[i][0] == pairs[i - 1][0]:
                raise ValueError(f"duplicate site {pairs[i][0]}")
        self.sites = tuple(pairs)
        self.phase_power = phase_power & 3

    @classmethod
    def single(cls, coord, letter: int) -> "PauliString":
        return cls(((coord, letter),))

    @classmethod
    def identity(cls) -> "PauliString":
        return cls()

    def support(self) -> tuple:
        return tuple(c for c, _ in self.sites)

    def mul(self, other: "PauliString") -> "PauliString":
        """Group product with accumulated phase; support(ab) within support union."""
        sites, phase = _mul_sites(self.sites, other.sites)
        out = PauliString.__new__(PauliString)
        out.sites = sites
        out.phase_power = (self.phase_power + other.phase_power + phase) & 3
        return out

    __mul__ = mul

    def commutes_with(self, other: "PauliString") -> bool:
        """Pauli strings either commute or anticommute; True iff they commute."""
        clashes = 0
        j = 0
        osites = other.sites
        no = len(osites)
        for coord, letter in self.sites:
            while j < no and osites[j][0] < coord:
                j += 1
            if j < no and osites[j][0] == coord and osites[j][1] != letter:
                clashes += 1
        return clashes % 2 == 0

    def __eq__(self, other):
        return (
            isinstance(other, PauliString)
            and self.sites == other.sites
            and self.phase_power == other.phase_power
        )

    def __hash__(self):
        return hash((self.sites, self.phase_power))

    def __repr__(self):
        body = " ".join(f"{_coord_str(c)}:{LETTER_NAMES[l]}" for c, l in self.sites) or "I"
        pre = ("", "i ", "- ", "-i ")[self.phase_power]
        return f"{pre}{body}"


def _mul_sites(a: tuple, b: tuple) -> tuple[tuple, int]:
    """Merge two sorted site tuples under sitewise Pauli multiplication."""
    out = []
    phase = 0
    i = j = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        ca, la = a[i]
        cb, lb = b[j]
        if ca < cb:
            out.append(a[i])
            i += 1
        elif cb < ca:
            out.append(b[j])
            j += 1
        else:
            letter, p = _letter_mul(la, lb)
            phase += p
            if letter:
                out.append((ca, letter))
            i += 1
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return tuple(out), phase


def _coord_str(coord: tuple) -> str:
    return ",".join(str(x) for x in coord)


def _parse_coord(text: str) -> tuple:
    return tuple(int(x) for x in text.split(","))


def _times_phase(coef, p: int):
    """Multiply a coefficient by i**p, exactly for exact rings."""
    p &= 3
    if p == 0:
        return coef
    f = getattr(coef, "times_i_power", None)
    if f is not None:
        return f(p)
    return coef * _IPOW[p]


class PauliExpr:
    """Linear combination of phase-normalized Pauli strings.

    ``terms`` maps the ``sites`` tuple of a string (phase folded into the
    coefficient, so keys are canonical) to its coefficient.  Instances are
    immutable by convention: no method mutates ``terms`` after construction,
    so values are safe to share across parallel workers.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: dict | None = None):
        self.terms = {} if terms is None else terms

    # ---- constructors ----

    @classmethod
    def zero(cls) -> "PauliExpr":
        return cls({})

    @classmethod
    def from_string(cls, s: PauliString, coef=1 + 0j) -> "PauliExpr":
        c = _times_phase(coef, s.phase_power)
        return cls({s.sites: c} if c else {})

    @classmethod
    def identity(cls, coef=1 + 0j) -> "PauliExpr":
        return cls({(): coef} if coef else {})

    # ---- linear structure ----

    def __add__(self, other: "PauliExpr") -> "PauliExpr":
        out = dict(self.terms)
        for k, c in other.terms.items():
            if k in out:
                s = out[k] + c
                if s:
                    out[k] = s
                else:
                    del out[k]
            else:
                out[k] = c
        return PauliExpr(out)

    def __sub__(self, other: "PauliExpr") -> "PauliExpr":
        return self + (-other)

    def __neg__(self) -> "PauliExpr":
        return PauliExpr({k: -c for k, c in self.terms.items()})

    def scale(self, scalar) -> "PauliExpr":
        if not scalar:
            return PauliExpr({})
        return PauliExpr({k: c * scalar for k, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, PauliExpr):
            return self.opmul(other)
        return self.scale(other)

    def __rmul__(self, scalar):
        return self.scale(scalar)

    # ---- operator structure ----

    def opmul(self, other: "PauliExpr") -> "PauliExpr":
        """Operator product, distributing over terms with exact phase folding."""
        out: dict = {}
        for sa, ca in self.terms.items():
            for sb, cb in other.terms.items():
                sites, phase = _mul_sites(sa, sb)
                c = _times_phase(ca * cb, phase)
                if sites in out:
                    s = out[sites] + c
                    if s:
                        out[sites] = s
                    else:
                        del out[sites]
                elif c:
                    out[sites] = c
        return PauliExpr(out)

    def __eq__(self, other):
        return isinstance(other, PauliExpr) and self.terms == other.terms

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        if not self.terms:
            return "0"
        bits = []
        for sites in sorted(self.terms):
            body = " ".join(f"{_coord_str(c)}:{LETTER_NAMES[l]}" for c, l in sites) or "I"
            bits.append(f"({self.terms[sites]})*{body}")
        return " + ".join(bits)

    def strings(self):
        """Iterate (PauliString, coef) with phase 0 on the strings."""
        for sites, c in self.terms.items():
            s = PauliString.__new__(PauliString)
            s.sites = sites
            s.phase_power = 0
            yield s, c

    def map_coefficients(self, fn) -> "PauliExpr":
        out = {}
        for k, c in self.terms.items():
            v = fn(c)
            if v:
                out[k] = v
        return PauliExpr(out)

    def support(self) -> set:
        sup = set()
        for sites in self.terms:
            sup.update(c for c, _ in sites)
        return sup


def commutator(a: PauliExpr, b: PauliExpr) -> PauliExpr:
    """AB - BA, using that Pauli strings either commute or anticommute.

    Anticommuting string pairs contribute 2*(product); commuting pairs vanish,
    so the result is assembled directly instead of as two full products.
    """
    out: dict = {}
    for sa, ca in a.terms.items():
        for sb, cb in b.terms.items():
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


def _pair_commutes(a: tuple, b: tuple) -> bool:
    clashes = 0
    i = j = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        if a[i][0] < b[j][0]:
            i += 1
        elif b[j][0] < a[i][0]:
            j += 1
        else:
            if a[i][1] != b[j][1]:
                clashes += 1
            i += 1
            j += 1
    return clashes % 2 == 0


def nested_commutator(h: PauliExpr, o: PauliExpr, j: int) -> PauliExpr:
    """j-fold nested commutator [H,[H,...,[H,O]]]; j=0 returns O."""
    if j < 0:
        raise ValueError("nesting depth must be >= 0")
    out = o
    for _ in range(j):
        out = commutator(h, out)
    return out


def normalized_trace(a: PauliExpr):
    """tr(A)/2^n: the coefficient of the identity string (0 if absent)."""
    return a.terms.get((), 0)


# ---------------------------------------------------------------------------
# Single-site control channels.
#
# C_B[rho] = U_B rho U_B^dagger with
#   U_0..U_3 = I, X, Y, Z
#   U_4..U_6 = (X+Y)/sqrt2, (Y+Z)/sqrt2, (Z+X)/sqrt2
#   U_7..U_9 = (I+iX)/sqrt2, (I+iY)/sqrt2, (I+iZ)/sqrt2
# Heisenberg picture on observables: C_B^dagger[O] = U_B^dagger O U_B.
# Each adjoint action sends a Pauli letter to +/- a single letter; the tables
# are derived here from the string algebra itself (the 1/sqrt2 pairs collapse
# to exact rational 1/2 weights) rather than hard-coded.
# ---------------------------------------------------------------------------

N_CHANNELS = 10
_PAIR_BC = {4: (X, Y), 5: (Y, Z), 6: (Z, X)}
_ROT_AXIS = {7: X, 8: Y, 9: Z}


def _derive_adjoint_table(channel: int) -> dict:
    """Map letter a -> (letter, sign) for sigma_a -> sign*sigma_letter under C^dagger."""
    table = {}
    site = (0,)
    for a in (X, Y, Z):
        if channel == 0:
            table[a] = (a, 1)
            continue
        sa = PauliExpr.from_string(PauliString.single(site, a))
        if channel in (1, 2, 3):
            u = PauliExpr.from_string(PauliString.single(site, channel))
            res = u.opmul(sa).opmul(u)
        elif channel in _PAIR_BC:
            b, c = _PAIR_BC[channel]
            ub = PauliExpr.from_string(PauliString.single(site, b))
            uc = PauliExpr.from_string(PauliString.single(site, c))
            upc = ub + uc
            res = upc.opmul(sa).opmul(upc).scale(Fraction(1, 2))
        else:
            b = _ROT_AXIS[channel]
            ub = PauliExpr.from_string(PauliString.single(site, b))
            ident = PauliExpr.identity()
            left = ident - ub.scale(1j)   # U^dagger = (I - i sigma_b)/sqrt2
            right = ident + ub.scale(1j)
            res = left.opmul(sa).opmul(right).scale(Fraction(1, 2))
        if len(res.terms) != 1:
            raise AssertionError(f"channel {channel} image of {a} is not a single Pauli")
        (sites, coef), = res.terms.items()
        letter = sites[0][1]
        sign = int(coef.real)
        if complex(coef) != sign or sign not in (1, -1):
            raise AssertionError(f"channel {channel} produced non-unit coefficient {coef}")
        table[a] = (letter, sign)
    return table


ADJOINT_LETTER_MAPS = {b: _derive_adjoint_table(b) for b in range(N_CHANNELS)}


def conjugate_observable(channel: int, o: PauliExpr, site) -> PauliExpr:
    """Heisenberg-picture observable C_B^dagger[O] for the channel acting at `site`.

    Hermiticity is preserved: every letter maps to a signed single letter.
    """
    if channel not in range(N_CHANNELS):
        raise ValueError(f"channel index must be 0..9, got {channel}")
    if channel == 0:
        return o
    site = _norm_coord(site)
    table = ADJOINT_LETTER_MAPS[channel]
    out = {}
    for sites, c in o.terms.items():
        new_sites = sites
        for idx, (coord, letter) in enumerate(sites):
            if coord == site:
                new_letter, sign = table[letter]
                new_sites = sites[:idx] + ((coord, new_letter),) + sites[idx + 1 :]
                if sign < 0:
                    c = -c
                break
        if new_sites in out:
            s = out[new_sites] + c
            if s:
                out[new_sites] = s
            else:
                del out[new_sites]
        else:
            out[new_sites] = c
    return PauliExpr(out)


# ---------------------------------------------------------------------------
# Text serialization: one term per line, "<coef> <site:letter> ...", sites in
# lexicographic coordinate order.  Scalar path writes "re,im" decimals; exact
# scalars (QQi / Fraction / int) write "num/den" or "renum/reden,imnum/imden".
# ---------------------------------------------------------------------------


def _coef_to_text(c) -> str:
    if isinstance(c, complex):
        return f"{c.real!r},{c.imag!r}"
    re = getattr(c, "re", None)
    if re is not None:  # QQi
        if c.im:
            return f"{c.re.numerator}/{c.re.denominator},{c.im.numerator}/{c.im.denominator}"
        return f"{c.re.numerator}/{c.re.denominator}"
    f = Fraction(c)
    return f"{f.numerator}/{f.denominator}"


def expr_to_text(e: PauliExpr) -> str:
    lines = []
    for sites in sorted(e.terms):
        body = " ".join(f"{_coord_str(c)}:{LETTER_NAMES[l]}" for c, l in sites)
        lines.append((_coef_to_text(e.terms[sites]) + " " + body).rstrip())
    return "\n".join(lines) + ("\n" if lines else "")


def expr_from_text(text: str) -> PauliExpr:
    from .polysys import QQi  # local import; polysys depends on pauli otherwise

    terms = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        bits = line.split()
        ctext = bits[0]
        if "/" in ctext:
            parts = ctext.split(",")
            re = Fraction(parts[0])
            im = Fraction(parts[1]) if len(parts) > 1 else Fraction(0)
            coef = QQi(re, im)
        else:
            re_s, im_s = ctext.split(",")
            coef = complex(float(re_s), float(im_s))
        sites = []
        for tok in bits[1:]:
            coord_s, letter_s = tok.rsplit(":", 1)
            sites.append((_parse_coord(coord_s), LETTER_CODES[letter_s]))
        terms[tuple(sorted(sites))] = coef
    return PauliExpr(terms)
