"""Sparse multivariate polynomials in the 12 Hamiltonian parameters.

Exact rational (or Gaussian-rational) arithmetic throughout; floats appear
only at evaluation time.  The canonical parameter order is

    (h1, h2, h3, J11, J12, J13, J21, J22, J23, J31, J32, J33)

and the rectangular system P = (q, p1..p12) is carried as a
:class:`PolynomialSystem` with the extra row G = q first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

NVARS = 12
VAR_NAMES = (
    "h1", "h2", "h3",
    "J11", "J12", "J13",
    "J21", "J22", "J23",
    "J31", "J32", "J33",
)

# Exponent-index permutation realizing the parameter involution J_munu <-> J_numu.
TRANSPOSE_PERM = (0, 1, 2, 3, 6, 9, 4, 7, 10, 5, 8, 11)


class QQi:
    """Gaussian rational a + b*i with exact Fraction components."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = re if isinstance(re, Fraction) else Fraction(re)
        self.im = im if isinstance(im, Fraction) else Fraction(im)

    def __add__(self, other):
        other = _as_qqi(other)
        return QQi(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_qqi(other)
        return QQi(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        return _as_qqi(other) - self

    def __neg__(self):
        return QQi(-self.re, -self.im)

    def __mul__(self, other):
        other = _as_qqi(other)
        return QQi(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_qqi(other)
        d = other.re * other.re + other.im * other.im
        return QQi(
            (self.re * other.re + self.im * other.im) / d,
            (self.im * other.re - self.re * other.im) / d,
        )

    def times_i_power(self, p: int) -> "QQi":
        p &= 3
        if p == 0:
            return self
        if p == 1:
            return QQi(-self.im, self.re)
        if p == 2:
            return QQi(-self.re, -self.im)
        return QQi(self.im, -self.re)

    def conjugate(self) -> "QQi":
        return QQi(self.re, -self.im)

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __eq__(self, other):
        other = _as_qqi(other)
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __float__(self):
        if self.im:
            raise ValueError(f"nonzero imaginary part {self.im}")
        return float(self.re)

    @property
    def is_real(self) -> bool:
        return not self.im

    def __repr__(self):
        if not self.im:
            return str(self.re)
        return f"({self.re}{'+' if self.im >= 0 else ''}{self.im}i)"


def _as_qqi(x) -> QQi:
    if isinstance(x, QQi):
        return x
    if isinstance(x, (int, Fraction)):
        return QQi(x)
    if isinstance(x, complex):
        raise TypeError("inexact complex mixed into exact QQi arithmetic")
    return QQi(x)


QQI_ZERO = QQi()
QQI_ONE = QQi(1)


class MultiPoly:
    """Polynomial as a map exponent-vector (12 nonnegative ints) -> QQi.

    Zero coefficients are never stored; equality is exact and termwise.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: dict | None = None):
        self.terms = {} if terms is None else terms

    # ---- constructors ----

    @classmethod
    def zero(cls) -> "MultiPoly":
        return cls({})

    @classmethod
    def constant(cls, c) -> "MultiPoly":
        c = _as_qqi(c)
        return cls({(0,) * NVARS: c} if c else {})

    @classmethod
    def variable(cls, idx: int) -> "MultiPoly":
        e = [0] * NVARS
        e[idx] = 1
        return cls({tuple(e): QQI_ONE})

    @classmethod
    def from_name(cls, name: str) -> "MultiPoly":
        return cls.variable(VAR_NAMES.index(name))

    # ---- ring operations ----

    def __add__(self, other):
        if not isinstance(other, MultiPoly):
            other = MultiPoly.constant(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            if e in out:
                s = out[e] + c
                if s:
                    out[e] = s
                else:
                    del out[e]
            else:
                out[e] = c
        return MultiPoly(out)

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, MultiPoly):
            other = MultiPoly.constant(other)
        return self + (-other)

    def __rsub__(self, other):
        return MultiPoly.constant(other) - self

    def __neg__(self):
        return MultiPoly({e: -c for e, c in self.terms.items()})

    def __mul__(self, other):
        if not isinstance(other, MultiPoly):
            c = _as_qqi(other)
            if not c:
                return MultiPoly({})
            return MultiPoly({e: v * c for e, v in self.terms.items()})
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                c = c1 * c2
                if e in out:
                    s = out[e] + c
                    if s:
                        out[e] = s
                    else:
                        del out[e]
                elif c:
                    out[e] = c
        return MultiPoly(out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative power")
        out = MultiPoly.constant(1)
        for _ in range(n):
            out = out * self
        return out

    def times_i_power(self, p: int) -> "MultiPoly":
        p &= 3
        if p == 0:
            return self
        return MultiPoly({e: c.times_i_power(p) for e, c in self.terms.items()})

    def __bool__(self):
        return bool(self.terms)

    def __eq__(self, other):
        if not isinstance(other, MultiPoly):
            other = MultiPoly.constant(other)
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    # ---- queries ----

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_homogeneous(self, d: int | None = None) -> bool:
        degs = {sum(e) for e in self.terms}
        if not degs:
            return True
        if d is None:
            return len(degs) == 1
        return degs == {d}

    def is_real(self) -> bool:
        return all(c.is_real for c in self.terms.values())

    def coefficient(self, exps) -> QQi:
        return self.terms.get(tuple(exps), QQI_ZERO)

    # ---- calculus / symmetry ----

    def derivative(self, var: int) -> "MultiPoly":
        out = {}
        for e, c in self.terms.items():
            k = e[var]
            if k:
                e2 = e[:var] + (k - 1,) + e[var + 1 :]
                v = c * k
                if e2 in out:
                    v = out[e2] + v
                out[e2] = v
        return MultiPoly({e: c for e, c in out.items() if c})

    def transpose_coupling(self) -> "MultiPoly":
        """Pullback under the involution J_munu <-> J_numu."""
        out = {}
        for e, c in self.terms.items():
            e2 = tuple(e[TRANSPOSE_PERM[i]] for i in range(NVARS))
            out[e2] = out[e2] + c if e2 in out else c
        return MultiPoly({e: c for e, c in out.items() if c})

    # ---- evaluation ----

    def evaluate(self, x):
        """Evaluate at a 12-sequence; exact for Fraction/int/QQi inputs."""
        exact = all(isinstance(v, (int, Fraction, QQi)) for v in x)
        acc = QQi() if exact else 0j
        for e, c in self.terms.items():
            mon = QQi(1) if exact else (1 + 0j)
            for v, k in zip(x, e):
                for _ in range(k):
                    mon = mon * v
            acc = acc + (c if exact else complex(c)) * mon
        return acc

    def evaluate_float(self, x) -> complex:
        return complex(self.evaluate([complex(v) for v in x]))

    # ---- serialization (graded-lex monomial order) ----

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda t: (sum(t[0]), t[0]))

    def to_lines(self) -> list[str]:
        lines = []
        for e, c in self.sorted_terms():
            if not c.is_real:
                raise ValueError("file format covers real-coefficient polynomials only")
            f = c.re
            lines.append(f"{f.numerator}/{f.denominator} " + " ".join(map(str, e)))
        return lines

    @classmethod
    def from_lines(cls, lines) -> "MultiPoly":
        terms = {}
        for line in lines:
            bits = line.split()
            if len(bits) != NVARS + 1:
                raise ValueError(f"bad monomial line: {line!r}")
            terms[tuple(int(b) for b in bits[1:])] = QQi(Fraction(bits[0]))
        return cls(terms)

    def __repr__(self):
        if not self.terms:
            return "0"
        bits = []
        for e, c in self.sorted_terms():
            mon = "*".join(
                (VAR_NAMES[i] if k == 1 else f"{VAR_NAMES[i]}^{k}")
                for i, k in enumerate(e)
                if k
            )
            bits.append(f"{c}" if not mon else (f"({c})*{mon}" if (c.im or c.re < 0 or c.re.denominator != 1) else (mon if c == QQI_ONE else f"{c}*{mon}")))
        return " + ".join(bits)


def poly_jacobian(polys: list[MultiPoly]) -> list[list[MultiPoly]]:
    """Symbolic Jacobian: rows follow `polys`, columns the 12 variables."""
    return [[p.derivative(v) for v in range(NVARS)] for p in polys]


def poly_hessian(p: MultiPoly) -> list[list[MultiPoly]]:
    grads = [p.derivative(v) for v in range(NVARS)]
    return [[g.derivative(w) for w in range(NVARS)] for g in grads]


class BatchPolyEval:
    """Vectorized float evaluation of a fixed list of polynomials.

    Precomputes the joint monomial table; `__call__` accepts an (B, 12) real
    or complex array and returns (B, n_polys).
    """

    def __init__(self, polys: list[MultiPoly]):
        mon_index: dict = {}
        rows, cols, vals = [], [], []
        for i, p in enumerate(polys):
            for e, c in p.terms.items():
                j = mon_index.setdefault(e, len(mon_index))
                rows.append(i)
                cols.append(j)
                vals.append(complex(c))
        self.n_polys = len(polys)
        self.exps = np.array(list(mon_index.keys()), dtype=np.int64).reshape(
            len(mon_index), NVARS
        )
        coefs = np.zeros((self.n_polys, len(mon_index)), dtype=complex)
        for r, c_, v in zip(rows, cols, vals):
            coefs[r, c_] += v
        if np.allclose(coefs.imag, 0.0):
            coefs = coefs.real
        self.coefs = coefs
        self.maxdeg = self.exps.max(axis=0) if len(mon_index) else np.zeros(NVARS, int)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        B = x.shape[0]
        if self.exps.shape[0] == 0:
            out = np.zeros((B, self.n_polys), dtype=x.dtype)
            return out[0] if squeeze else out
        mon = np.ones((B, self.exps.shape[0]), dtype=x.dtype)
        for v in range(NVARS):
            d = int(self.maxdeg[v])
            if d == 0:
                continue
            powers = np.ones((B, d + 1), dtype=x.dtype)
            for k in range(1, d + 1):
                powers[:, k] = powers[:, k - 1] * x[:, v]
            mon *= powers[:, self.exps[:, v]]
        out = mon @ self.coefs.T
        if np.iscomplexobj(self.coefs) and not np.iscomplexobj(x):
            pass  # result stays complex
        return out[0] if squeeze else out


class BatchJacobianEval:
    """Vectorized Jacobian of a polynomial list: returns (B, n_polys, 12)."""

    def __init__(self, polys: list[MultiPoly]):
        flat = [p.derivative(v) for p in polys for v in range(NVARS)]
        self._eval = BatchPolyEval(flat)
        self.n_polys = len(polys)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        squeeze = x.ndim == 1
        vals = self._eval(x if not squeeze else x[None, :])
        out = vals.reshape(-1, self.n_polys, NVARS)
        return out[0] if squeeze else out


@dataclass
class PolynomialSystem:
    """The rectangular system P = (G | F) with the parameter involution.

    G is the extra row (the cubic q); F is the square 12-polynomial subsystem
    (p1..p12).  Component order everywhere is (G, F1..F12).
    """

    G: MultiPoly
    F: list[MultiPoly]
    names: tuple = ("q",) + tuple(f"p{i}" for i in range(1, 13))

    def __post_init__(self):
        if len(self.F) != NVARS:
            raise ValueError(f"square subsystem must have {NVARS} rows")

    # ---- exact evaluation ----

    def components(self) -> list[MultiPoly]:
        return [self.G, *self.F]

    def evaluate(self, x) -> list:
        """13 values ordered (G, F1..F12); exact when x is rational."""
        return [p.evaluate(x) for p in self.components()]

    def evaluate_F(self, x) -> list:
        return [p.evaluate(x) for p in self.F]

    # ---- float/batch evaluation (built lazily, cached) ----

    def _ensure_numeric(self):
        if not hasattr(self, "_batch_full"):
            self._batch_full = BatchPolyEval(self.components())
            self._batch_F = BatchPolyEval(self.F)
            self._jac_full = BatchJacobianEval(self.components())
            self._jac_F = BatchJacobianEval(self.F)

    def eval_full(self, x: np.ndarray) -> np.ndarray:
        self._ensure_numeric()
        return self._batch_full(x)

    def eval_square(self, x: np.ndarray) -> np.ndarray:
        self._ensure_numeric()
        return self._batch_F(x)

    def jacobian_full(self, x: np.ndarray) -> np.ndarray:
        self._ensure_numeric()
        return self._jac_full(x)

    def jacobian_square(self, x: np.ndarray) -> np.ndarray:
        self._ensure_numeric()
        return self._jac_F(x)

    # ---- structure checks ----

    def check_transpose_invariance(self) -> None:
        for name, p in zip(self.names, self.components()):
            if p.transpose_coupling() != p:
                raise AssertionError(f"{name} is not invariant under J <-> J^T")

    # ---- serialization: 13 named blocks of graded-lex monomial lines ----

    def to_text(self) -> str:
        blocks = []
        for name, p in zip(self.names, self.components()):
            blocks.append(name + "\n" + "\n".join(p.to_lines()))
        return "\n\n".join(blocks) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PolynomialSystem":
        blocks: dict[str, MultiPoly] = {}
        current: str | None = None
        lines: list[str] = []
        for raw in text.splitlines() + [""]:
            line = raw.strip()
            if not line:
                if current is not None:
                    blocks[current] = MultiPoly.from_lines(lines)
                current, lines = None, []
            elif current is None:
                current = line
            else:
                lines.append(line)
        expected = ["q"] + [f"p{i}" for i in range(1, 13)]
        missing = [n for n in expected if n not in blocks]
        if missing:
            raise ValueError(f"system file missing blocks: {missing}")
        return cls(G=blocks["q"], F=[blocks[f"p{i}"] for i in range(1, 13)])


def naive_evaluate(p: MultiPoly, x) -> complex:
    """Independent brute-force monomial summation used as a test oracle."""
    total = 0j
    for e, c in p.terms.items():
        term = complex(c)
        for xi, k in zip(x, e):
            term *= complex(xi) ** k
        total += term
    return total
