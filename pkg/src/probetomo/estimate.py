"""Finite-difference reconstruction of probe-observable Taylor coefficients.

The t-direction uses the forward alternating-binomial combination of
A(beta, l*t_step), l = 0..j, divided by j! t^j; the beta-direction differences
the resulting Delta_j estimates over {0, beta, .., k*beta}, with the beta=0
value hardwired to zero (the infinite-temperature state is maximally mixed,
so no experiment is needed there).  Forward differences are kept on purpose:
the bias is then O(t_step) + O(beta) with constants growing like exp(O(j)),
which is what the step-choice guards assume.  Richardson extrapolation is
deliberately omitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .series import CANONICAL_SPECS, CoefficientSpec

MAX_TIME_ORDER = 4
MAX_BETA_ORDER = 3


@dataclass
class EstimatorConfig:
    """Step sizes and budgets shared by the estimators.

    beta_crit is the configured safe ceiling on the largest inverse
    temperature any difference stencil may touch (k*beta or beta + k*h).
    """

    t_step: float = 1e-3
    beta: float = 1e-3
    h: float = 1e-4
    shots_per_point: int = 0
    beta_crit: float = 0.1

    def __post_init__(self):
        if self.t_step <= 0:
            raise ValueError("t_step must be > 0")
        if self.shots_per_point < 0:
            raise ValueError("shots_per_point must be >= 0")


class StepGuardError(ValueError):
    """A difference stencil would leave the configured safe regime."""


def _check_orders(j: int, k: int):
    if j < 0 or k < 0:
        raise ValueError("orders must be >= 0")
    if j > MAX_TIME_ORDER:
        raise StepGuardError(f"time order {j} > {MAX_TIME_ORDER} refused (conditioning guard)")
    if k > MAX_BETA_ORDER:
        raise StepGuardError(f"beta order {k} > {MAX_BETA_ORDER} refused (conditioning guard)")


def est_time_derivative(probe, j: int, beta: float, mu: int, channel: int, cfg: EstimatorConfig) -> float:
    """Estimate Delta_j(beta), the t^j series coefficient at fixed beta."""
    _check_orders(j, 0)
    t = cfg.t_step
    acc = 0.0
    for ell in range(j + 1):
        a = probe(beta, channel, ell * t, mu, cfg.shots_per_point)
        acc += (-1) ** (j - ell) * math.comb(j, ell) * a
    return acc / (t**j * math.factorial(j))


def est_taylor_coeff(probe, j: int, k: int, mu: int, channel: int, cfg: EstimatorConfig) -> float:
    """Estimate the t^j beta^k Taylor coefficient of the probe observable."""
    _check_orders(j, k)
    if k == 0:
        return est_time_derivative(probe, j, 0.0, mu, channel, cfg)
    beta = cfg.beta
    if k * beta > cfg.beta_crit + 1e-15:
        raise StepGuardError(f"k*beta = {k * beta:g} exceeds beta_crit = {cfg.beta_crit:g}")
    acc = 0.0
    for m in range(k + 1):
        if m == 0:
            dj = 0.0  # Delta_j(0) = 0: maximally mixed state, no experiment needed
        else:
            dj = est_time_derivative(probe, j, m * beta, mu, channel, cfg)
        acc += (-1) ** (k - m) * math.comb(k, m) * dj
    return acc / (beta**k * math.factorial(k))


def est_truncated(
    probe, j: int, k: int, k_bar: int, mu: int, channel: int, beta: float, h: float, cfg: EstimatorConfig
) -> float:
    """Estimate the higher-degree truncation D^{(j)}_{k, k_bar} at base beta.

    Differencing runs over beta, beta+h, .., beta+k*h, so the bias scales with
    the (small) offset h rather than beta; the truncation order k_bar is the
    caller's choice (per the tail-length rule) and only labels what the
    estimate converges to.
    """
    _check_orders(j, k)
    if k_bar < k:
        raise ValueError("k_bar must be >= k")
    if h <= 0:
        raise ValueError("h must be > 0")
    if beta + k * h > cfg.beta_crit + 1e-15:
        raise StepGuardError(
            f"beta + k*h = {beta + k * h:g} exceeds beta_crit = {cfg.beta_crit:g}"
        )
    acc = 0.0
    for m in range(k + 1):
        dj = est_time_derivative(probe, j, beta + m * h, mu, channel, cfg)
        acc += (-1) ** (k - m) * math.comb(k, m) * dj
    return acc / (h**k * math.factorial(k))


@dataclass
class EstimateReport:
    """Per-component record of what one estimator run used and promises."""

    name: str
    value: float
    shots: int
    t_step: float
    beta: float
    predicted_bias_bound: float

    def to_json(self) -> dict:
        return {
            "spec": self.name,
            "value": self.value,
            "shots": self.shots,
            "t_step": self.t_step,
            "beta": self.beta,
            "predicted_bias_bound": self.predicted_bias_bound,
        }


def _bias_bound(j: int, k: int, t: float, beta_like: float) -> float:
    # Empirical envelope of the forward-difference bias: O(t e^{O(j)}) + O(beta k^{k+1} e^{O(j)}).
    return t * math.exp(j + 1) + beta_like * (k + 1) ** (k + 1) * math.exp(j)


def estimate_spec(probe, spec: CoefficientSpec, cfg: EstimatorConfig) -> float:
    """Scaled, combo-weighted estimate of one canonical-table line."""
    acc = 0.0
    for mu, channel, weight in spec.readouts:
        acc += weight * est_taylor_coeff(probe, spec.j, spec.k, mu, channel, cfg)
    return acc * float(spec.scale)


def estimate_system_rhs(
    probe, specs=CANONICAL_SPECS, cfg: EstimatorConfig | None = None
) -> tuple[np.ndarray, list[EstimateReport]]:
    """Right-hand side c~ = (c~_0 .. c~_12) plus a per-component report."""
    cfg = cfg or EstimatorConfig()
    values = []
    reports = []
    for spec in specs:
        v = estimate_spec(probe, spec, cfg)
        values.append(v)
        reports.append(
            EstimateReport(
                name=spec.name,
                value=v,
                shots=cfg.shots_per_point,
                t_step=cfg.t_step,
                beta=cfg.beta,
                predicted_bias_bound=abs(float(spec.scale))
                * len(spec.readouts)
                * _bias_bound(spec.j, spec.k, cfg.t_step, cfg.beta),
            )
        )
    return np.array(values), reports


def estimate_truncated_spec(
    probe, spec: CoefficientSpec, k_bar: int, beta: float, h: float, cfg: EstimatorConfig
) -> float:
    """Unscaled combo-weighted estimate of D^{(j)}_{k, k_bar}, matching
    :func:`probetomo.series.truncated_series_poly`."""
    _check_orders(spec.j, spec.k)
    if beta + spec.k * h > cfg.beta_crit + 1e-15:
        raise StepGuardError("beta + k*h exceeds beta_crit")
    acc = 0.0
    for mu, channel, weight in spec.readouts:
        comb_acc = 0.0
        for m in range(spec.k + 1):
            dj = est_time_derivative(probe, spec.j, beta + m * h, mu, channel, cfg)
            comb_acc += (-1) ** (spec.k - m) * math.comb(spec.k, m) * dj
        acc += weight * comb_acc / (h**spec.k * math.factorial(spec.k))
    return acc
