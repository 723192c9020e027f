"""The translation- and rotation-invariant nearest-neighbor Hamiltonian family.

H(lambda) = sum_<v,v'> sum_{mu,nu} J_munu sigma^mu_v sigma^nu_v' +
            sum_v sum_mu h_mu sigma^mu_v

on the finite box {-r..r}^D with open (hard-wall) boundary.  Edges are
directed along increasing coordinate: for the edge (v, v+e_d) the first Pauli
index of J sits on v.  A lattice reflection about the origin then maps
H(lambda) to H(transpose_params(lambda)), which is the inversion symmetry the
probe cannot resolve.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .pauli import PauliExpr, PauliString
from .polysys import NVARS, VAR_NAMES, MultiPoly

DENSE_QUBIT_CAP = 14


@dataclass(frozen=True)
class LatticeSpec:
    """Finite box {-radius..radius}^dimension with the probe site at the origin."""

    dimension: int
    radius: int
    boundary: str = "open"

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if self.boundary != "open":
            raise ValueError("only open (hard-wall) boundary is supported")

    @property
    def n_qubits(self) -> int:
        return (2 * self.radius + 1) ** self.dimension

    @property
    def origin(self) -> tuple:
        return (0,) * self.dimension

    def sites(self) -> list[tuple]:
        rng = range(-self.radius, self.radius + 1)
        return sorted(itertools.product(rng, repeat=self.dimension))

    def edges(self) -> list[tuple[tuple, tuple]]:
        """Nearest-neighbor pairs (v, v+e_d), directed along +e_d, inside the box."""
        out = []
        for v in self.sites():
            for d in range(self.dimension):
                if v[d] + 1 <= self.radius:
                    w = v[:d] + (v[d] + 1,) + v[d + 1 :]
                    out.append((v, w))
        return sorted(out)

    def site_index(self, site: tuple) -> int:
        """Position of a site in the lexicographic qubit ordering."""
        side = 2 * self.radius + 1
        idx = 0
        for c in site:
            if abs(c) > self.radius:
                raise ValueError(f"site {site} outside lattice")
            idx = idx * side + (c + self.radius)
        return idx

    def to_json(self) -> dict:
        return {"dimension": self.dimension, "radius": self.radius, "boundary": self.boundary}

    @classmethod
    def from_json(cls, d: dict) -> "LatticeSpec":
        return cls(dimension=d["dimension"], radius=d["radius"], boundary=d.get("boundary", "open"))


@dataclass(frozen=True)
class ParamVector:
    """The 12 learning targets: field vector h and coupling matrix J.

    Entries may be floats or exact rationals; canonical flat order is
    (h1,h2,h3,J11,J12,J13,J21,J22,J23,J31,J32,J33).
    """

    h: tuple
    J: tuple  # 3 rows of 3

    def __post_init__(self):
        if len(self.h) != 3 or len(self.J) != 3 or any(len(r) != 3 for r in self.J):
            raise ValueError("h must have 3 entries and J must be 3x3")

    @classmethod
    def from_vector(cls, vec) -> "ParamVector":
        vec = list(vec)
        if len(vec) != NVARS:
            raise ValueError(f"expected {NVARS} entries")
        return cls(h=tuple(vec[:3]), J=tuple(tuple(vec[3 + 3 * m : 6 + 3 * m]) for m in range(3)))

    def to_vector(self) -> list:
        return list(self.h) + [self.J[m][n] for m in range(3) for n in range(3)]

    def to_array(self) -> np.ndarray:
        return np.array([float(v) for v in self.to_vector()], dtype=float)

    def to_json(self) -> dict:
        return {name: float(v) for name, v in zip(VAR_NAMES, self.to_vector())}

    @classmethod
    def from_json(cls, d: dict) -> "ParamVector":
        return cls.from_vector([d[name] for name in VAR_NAMES])

    def inf_norm(self) -> float:
        return max(abs(float(v)) for v in self.to_vector())


def transpose_params(lam: ParamVector) -> ParamVector:
    """Swap J_munu <-> J_numu, fix h; an involution."""
    J = lam.J
    return ParamVector(h=lam.h, J=tuple(tuple(J[n][m] for n in range(3)) for m in range(3)))


def effective_radius(R: float, varsigma: float, delta: float = 0.01) -> float:
    """Box radius Lambda = R + 2*varsigma*sqrt(log(N/delta)) for the smoothed model."""
    return R + 2.0 * varsigma * math.sqrt(math.log(NVARS / delta))


@dataclass(frozen=True)
class SmoothedSampler:
    """Smoothed instances mu + varsigma * N(0, I), deterministic in (seed, index)."""

    mu: ParamVector
    varsigma: float
    seed: int = 0

    def sample(self, index: int = 0) -> ParamVector:
        if self.varsigma < 0:
            raise ValueError("varsigma must be >= 0")
        rng = np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=(index,)))
        base = np.array([float(v) for v in self.mu.to_vector()])
        return ParamVector.from_vector(base + self.varsigma * rng.standard_normal(NVARS))


def sample_smoothed(sampler: SmoothedSampler, index: int = 0) -> ParamVector:
    return sampler.sample(index)


def _coef_index(kind: str, m: int, n: int = 0) -> int:
    # kind "h": variable m in 0..2; kind "J": 3 + 3m + n
    return m if kind == "h" else 3 + 3 * m + n


def build_hamiltonian(lattice: LatticeSpec, lam: ParamVector) -> PauliExpr:
    """Numeric Hamiltonian as a PauliExpr with complex coefficients; tr H = 0."""
    vec = [complex(float(v)) for v in lam.to_vector()]
    expr = PauliExpr.zero()
    terms: dict = {}
    for v in lattice.sites():
        for mu in range(3):
            c = vec[_coef_index("h", mu)]
            if c:
                key = (((v, mu + 1)),)
                terms[key] = terms.get(key, 0j) + c
    for v, w in lattice.edges():
        for mu in range(3):
            for nu in range(3):
                c = vec[_coef_index("J", mu, nu)]
                if c:
                    key = tuple(sorted(((v, mu + 1), (w, nu + 1))))
                    terms[key] = terms.get(key, 0j) + c
    expr = PauliExpr({k: c for k, c in terms.items() if c})
    return expr


def symbolic_hamiltonian(lattice: LatticeSpec) -> PauliExpr:
    """Hamiltonian with MultiPoly coefficients, linear in the 12 parameters."""
    terms: dict = {}
    for v in lattice.sites():
        for mu in range(3):
            key = ((v, mu + 1),)
            terms[key] = MultiPoly.variable(_coef_index("h", mu))
    for v, w in lattice.edges():
        for mu in range(3):
            for nu in range(3):
                key = tuple(sorted(((v, mu + 1), (w, nu + 1))))
                poly = MultiPoly.variable(_coef_index("J", mu, nu))
                terms[key] = terms[key] + poly if key in terms else poly
    return PauliExpr(terms)


def hamiltonian_term_count(lattice: LatticeSpec) -> int:
    """Number of Pauli terms: 3 per site plus 9 per edge."""
    return 3 * lattice.n_qubits + 9 * len(lattice.edges())


def param_vector_from_file(path: str) -> ParamVector:
    with open(path) as f:
        return ParamVector.from_json(json.load(f))
