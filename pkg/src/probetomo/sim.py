"""Exact dense-matrix simulator of the probe experiment.

One experiment = thermalize to the Gibbs state at inverse temperature beta,
apply a single-qubit control channel at the probe site, evolve under H for
time t, measure a single-site Pauli.  Expectations are exact (shots=0) or
binomially sampled: the protocol ends at its single terminal measurement, so
sampling Bernoulli((1+<sigma>)/2) outcomes is distributionally identical to
projective collapse.

Qubits are ordered by lexicographic site coordinate; states are full 2^n x 2^n
complex matrices with n capped at 14.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .family import DENSE_QUBIT_CAP, LatticeSpec
from .pauli import PauliExpr

PAULI_MATS = {
    0: np.eye(2, dtype=complex),
    1: np.array([[0, 1], [1, 0]], dtype=complex),
    2: np.array([[0, -1j], [1j, 0]], dtype=complex),
    3: np.array([[1, 0], [0, -1]], dtype=complex),
}

_S2 = 1.0 / np.sqrt(2.0)
# C_B[rho] = U_B rho U_B^dagger
CHANNEL_UNITARIES = [
    PAULI_MATS[0],
    PAULI_MATS[1],
    PAULI_MATS[2],
    PAULI_MATS[3],
    _S2 * (PAULI_MATS[1] + PAULI_MATS[2]),
    _S2 * (PAULI_MATS[2] + PAULI_MATS[3]),
    _S2 * (PAULI_MATS[3] + PAULI_MATS[1]),
    _S2 * (PAULI_MATS[0] + 1j * PAULI_MATS[1]),
    _S2 * (PAULI_MATS[0] + 1j * PAULI_MATS[2]),
    _S2 * (PAULI_MATS[0] + 1j * PAULI_MATS[3]),
]

HERMITICITY_TOL = 1e-12
PSD_TOL = 1e-10
TRACE_TOL = 1e-10


class DimensionError(ValueError):
    """Dense simulation requested beyond the qubit cap."""


@dataclass
class DenseState:
    """2^n x 2^n density matrix with Hermiticity/PSD/trace validation."""

    matrix: np.ndarray
    n: int

    def check(self) -> "DenseState":
        m = self.matrix
        if m.shape != (2**self.n, 2**self.n):
            raise ValueError("matrix shape does not match qubit count")
        if np.max(np.abs(m - m.conj().T)) > HERMITICITY_TOL:
            raise ValueError("state is not Hermitian")
        evals = np.linalg.eigvalsh(m)
        if evals.min() < -PSD_TOL:
            raise ValueError(f"state is not PSD (min eigenvalue {evals.min():.3e})")
        if abs(np.trace(m).real - 1.0) > TRACE_TOL:
            raise ValueError("state trace is not 1")
        return self


@dataclass(frozen=True)
class ExperimentSpec:
    """One probe experiment: (beta, channel, t, observable, shots); shots=0 = exact."""

    beta: float
    channel: int
    time: float
    observable: int  # 1=X, 2=Y, 3=Z
    shots: int = 0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.channel not in range(10):
            raise ValueError("channel must be 0..9")
        if self.observable not in (1, 2, 3):
            raise ValueError("observable must be 1 (X), 2 (Y) or 3 (Z)")
        if self.shots < 0:
            raise ValueError("shots must be >= 0")

    def to_json(self) -> dict:
        return {
            "beta": self.beta,
            "channel": self.channel,
            "time": self.time,
            "observable": "IXYZ"[self.observable],
            "shots": self.shots,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentSpec":
        obs = d["observable"]
        if isinstance(obs, str):
            obs = {"X": 1, "Y": 2, "Z": 3}[obs]
        return cls(
            beta=float(d["beta"]),
            channel=int(d["channel"]),
            time=float(d["time"]),
            observable=obs,
            shots=int(d.get("shots", 0)),
        )


def _guard_qubits(n: int):
    if n > DENSE_QUBIT_CAP:
        raise DimensionError(f"{n} qubits exceeds the dense cap of {DENSE_QUBIT_CAP}")


def to_matrix(a: PauliExpr, lattice: LatticeSpec) -> np.ndarray:
    """Dense operator for a PauliExpr, qubits in lexicographic site order."""
    n = lattice.n_qubits
    _guard_qubits(n)
    dim = 2**n
    out = np.zeros((dim, dim), dtype=complex)
    for sites, coef in a.terms.items():
        letters = [0] * n
        for coord, letter in sites:
            letters[lattice.site_index(coord)] = letter
        op = np.array([[1.0 + 0j]])
        for l in letters:
            op = np.kron(op, PAULI_MATS[l])
        out += complex(coef) * op
    return out


def apply_single_site(mat2: np.ndarray, rho: np.ndarray, idx: int, n: int) -> np.ndarray:
    """U rho U^dagger for a 2x2 unitary on qubit idx, without forming the big kron."""
    dim = 2**n
    left, right = 2**idx, 2 ** (n - idx - 1)
    r = rho.reshape(left, 2, right, dim)
    r = np.einsum("ab,xbyk->xayk", mat2, r).reshape(dim, left, 2, right)
    r = np.einsum("kxby,ab->kxay", r, mat2.conj()).reshape(dim, dim)
    return r


def expect_single_site(mat2: np.ndarray, rho: np.ndarray, idx: int, n: int) -> float:
    """tr((I x mat2 x I) rho) for a Hermitian 2x2 observable on qubit idx."""
    dim = 2**n
    left, right = 2**idx, 2 ** (n - idx - 1)
    r = rho.reshape(left, 2, right, left, 2, right)
    reduced = np.einsum("aibajb->ij", r)
    return float(np.trace(mat2 @ reduced).real)


def gibbs(h_dense: np.ndarray, beta: float) -> DenseState:
    """rho_beta = e^{-beta H} / tr(e^{-beta H}) via eigendecomposition.

    The spectrum is shifted by its minimum before exponentiation so large
    beta*||H|| cannot overflow; beta=0 gives the maximally mixed state.
    """
    if np.max(np.abs(h_dense - h_dense.conj().T)) > 1e-10:
        raise ValueError("Hamiltonian must be Hermitian")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    n = int(round(np.log2(h_dense.shape[0])))
    evals, vecs = scipy.linalg.eigh(h_dense)
    weights = np.exp(-beta * (evals - evals.min()))
    weights /= weights.sum()
    rho = (vecs * weights) @ vecs.conj().T
    return DenseState(matrix=rho, n=n)


class ProbeInterface:
    """Callable probe (beta, channel, t, observable, shots) -> real estimate.

    Caches the eigendecomposition of H (shared by Gibbs preparation and
    evolution) and per-beta Gibbs states.  Keeps an exact ledger: number of
    experiment calls, total shots, and total evolution time (sum of |t| per
    shot; exact-mode calls count one evolution each).  Every call is appended
    to `log` as (spec, estimate) for replay.
    """

    def __init__(self, h_dense: np.ndarray, lattice: LatticeSpec, seed: int = 0):
        _guard_qubits(lattice.n_qubits)
        if h_dense.shape != (2**lattice.n_qubits,) * 2:
            raise ValueError("Hamiltonian dimension does not match lattice")
        self.lattice = lattice
        self.n = lattice.n_qubits
        self.probe_index = lattice.site_index(lattice.origin)
        self.evals, self.vecs = scipy.linalg.eigh(h_dense)
        self.rng = np.random.default_rng(seed)
        self._gibbs_cache: dict = {}
        self._obs_eig_cache: dict = {}
        self.query_count = 0
        self.total_shots = 0
        self.total_evolution_time = 0.0
        self.log: list = []

    # ---- state preparation ----

    def _gibbs_weights(self, beta: float) -> np.ndarray:
        w = self._gibbs_cache.get(beta)
        if w is None:
            e = np.exp(-beta * (self.evals - self.evals.min()))
            w = e / e.sum()
            self._gibbs_cache[beta] = w
        return w

    def _observable_in_eigenbasis(self, mu: int) -> np.ndarray:
        m = self._obs_eig_cache.get(mu)
        if m is None:
            dim = 2**self.n
            left = 2**self.probe_index
            right = 2 ** (self.n - self.probe_index - 1)
            sig = np.kron(np.kron(np.eye(left), PAULI_MATS[mu]), np.eye(right))
            m = self.vecs.conj().T @ sig @ self.vecs
            self._obs_eig_cache[mu] = m
        return m

    def exact_expectation(self, spec: ExperimentSpec) -> float:
        """tr(sigma^mu_0 e^{-iHt} C_B[rho_beta] e^{iHt}), computed in the eigenbasis."""
        w = self._gibbs_weights(spec.beta)
        u = CHANNEL_UNITARIES[spec.channel]
        # rho_beta in the eigenbasis is diag(w); channel acts in the site basis.
        rho = (self.vecs * w) @ self.vecs.conj().T
        rho = apply_single_site(u, rho, self.probe_index, self.n)
        rho_eig = self.vecs.conj().T @ rho @ self.vecs
        phases = np.exp(-1j * spec.time * self.evals)
        rho_eig = (phases[:, None] * rho_eig) * phases.conj()[None, :]
        sig = self._observable_in_eigenbasis(spec.observable)
        return float(np.real(np.sum(sig.T * rho_eig)))

    # ---- experiments ----

    def run(self, spec: ExperimentSpec) -> float:
        value = self.exact_expectation(spec)
        if spec.shots:
            p = min(1.0, max(0.0, 0.5 * (1.0 + value)))
            ups = self.rng.binomial(spec.shots, p)
            value = 2.0 * ups / spec.shots - 1.0
        self.query_count += 1
        self.total_shots += spec.shots
        self.total_evolution_time += abs(spec.time) * max(spec.shots, 1)
        self.log.append((spec, value))
        return value

    def __call__(self, beta: float, channel: int, t: float, observable: int, shots: int = 0) -> float:
        return self.run(ExperimentSpec(beta=beta, channel=channel, time=t, observable=observable, shots=shots))

    def replay(self, log) -> list:
        """Re-run logged specs (in order) and return the fresh estimates."""
        return [self.run(spec) for spec, _old in log]


def run_experiment(h_dense: np.ndarray, lattice: LatticeSpec, spec: ExperimentSpec, rng=None, seed: int = 0) -> float:
    """One-shot convenience wrapper around ProbeInterface."""
    probe = ProbeInterface(h_dense, lattice, seed=seed)
    if rng is not None:
        probe.rng = rng
    return probe.run(spec)


def probe_interface(h_dense: np.ndarray, lattice: LatticeSpec, seed: int = 0) -> ProbeInterface:
    return ProbeInterface(h_dense, lattice, seed=seed)
