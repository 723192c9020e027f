import math

import numpy as np
import pytest

from probetomo.estimate import (
    EstimatorConfig,
    StepGuardError,
    est_taylor_coeff,
    est_time_derivative,
    est_truncated,
    estimate_spec,
    estimate_system_rhs,
    estimate_truncated_spec,
)
from probetomo.family import LatticeSpec, ParamVector, build_hamiltonian
from probetomo.series import CANONICAL_SPECS, CANONICAL_SPECS_BY_NAME, canonical_system, truncated_series_poly
from probetomo.sim import ProbeInterface, to_matrix


def vec(**kw):
    base = dict.fromkeys(
        ["h1", "h2", "h3", "J11", "J12", "J13", "J21", "J22", "J23", "J31", "J32", "J33"], 0.0
    )
    base.update(kw)
    return ParamVector.from_json(base)


def make_probe(lam, radius=1, seed=0):
    lat = LatticeSpec(1, radius)
    return ProbeInterface(to_matrix(build_hamiltonian(lat, lam), lat), lat, seed=seed), lat


def test_time_derivative_j0_single_call():
    probe, _ = make_probe(vec(h3=0.4))
    cfg = EstimatorConfig(t_step=1e-3)
    got = est_time_derivative(probe, 0, 0.5, mu=3, channel=0, cfg=cfg)
    assert probe.query_count == 1
    assert abs(got - (-math.tanh(0.5 * 0.4))) < 1e-12


def test_time_derivative_conserved_signal_is_flat():
    # H = h1 X: the identity-channel Z signal is identically zero, so the
    # first time derivative must vanish up to the O(t) bias
    probe, _ = make_probe(vec(h1=0.7))
    cfg = EstimatorConfig(t_step=1e-3)
    got = est_time_derivative(probe, 1, 0.4, mu=3, channel=0, cfg=cfg)
    assert abs(got) < 1e-10


def test_time_derivative_bias_is_linear(rng):
    # exact probe: |estimate - symbolic Delta_j| halves with the step
    lam = ParamVector.from_vector(rng.uniform(-0.6, 0.6, 12))
    probe, lat = make_probe(lam, radius=2)
    spec = CANONICAL_SPECS_BY_NAME["p7"]  # (mu=X, channel=2), j=1
    beta = 0.04
    # reference via the chain's own series in beta (orders up to 5 suffice)
    from probetomo.series import series_observable

    grid = series_observable(lat, spec, j_max=1, k_max=5, require_stable_radius=False)
    lamv = lam.to_array()
    ref = sum(
        beta**k * complex(grid[(1, k)].evaluate_float(lamv)).real for k in range(6)
    )
    errs = []
    steps = [4e-3, 2e-3, 1e-3, 5e-4]
    for t in steps:
        cfg = EstimatorConfig(t_step=t)
        got = sum(
            w * est_time_derivative(probe, 1, beta, mu, ch, cfg)
            for mu, ch, w in spec.readouts
        )
        errs.append(abs(got - ref))
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    assert abs(slope - 1.0) < 0.2


def test_taylor_coeff_tanh_and_reductions():
    probe, _ = make_probe(vec(h3=0.3))
    cfg = EstimatorConfig(t_step=1e-3, beta=1e-2)
    got = est_taylor_coeff(probe, 0, 1, mu=3, channel=0, cfg=cfg)
    # d/dbeta of -tanh(beta h3) at 0 is -h3, up to O(beta)
    assert abs(got - (-0.3)) < 0.3 * cfg.beta + 1e-6
    # k = 0 reduces to the time derivative
    a = est_taylor_coeff(probe, 0, 0, mu=3, channel=0, cfg=cfg)
    b = est_time_derivative(probe, 0, 0.0, mu=3, channel=0, cfg=cfg)
    assert a == b


def test_p1_scale_end_to_end(rng):
    # bias of the scaled p1 estimate is linear in beta with a modest constant
    lam = ParamVector.from_vector(rng.uniform(-0.35, 0.35, 12))
    probe, _ = make_probe(lam, radius=3)
    cfg = EstimatorConfig(t_step=1e-3, beta=1e-2)
    got = estimate_spec(probe, CANONICAL_SPECS_BY_NAME["p1"], cfg)
    assert abs(got - lam.h[0]) <= 0.2 * cfg.beta + 1e-6
    cfg_half = EstimatorConfig(t_step=1e-3, beta=5e-3)
    got_half = estimate_spec(probe, CANONICAL_SPECS_BY_NAME["p1"], cfg_half)
    assert abs(got_half - lam.h[0]) <= 0.6 * abs(got - lam.h[0]) + 1e-9


def test_truncated_tanh_series():
    probe, lat = make_probe(vec(h3=0.5))
    x, beta, h = 0.5, 0.04, 1e-3
    cfg = EstimatorConfig(t_step=1e-3, beta=beta, h=h)
    got = est_truncated(probe, 0, 1, 3, mu=3, channel=0, beta=beta, h=h, cfg=cfg)
    # first beta-derivative of -tanh(beta x): -x sech^2(beta x)
    analytic = -x / math.cosh(beta * x) ** 2
    assert abs(got - analytic) < 2.0 * h
    # and it converges to the truncated polynomial, linearly in h
    spec = CANONICAL_SPECS_BY_NAME["p3"]
    poly = truncated_series_poly(lat, spec, 3, beta, require_stable_radius=False)
    lamv = vec(h3=x).to_array()
    want = complex(poly.evaluate_float(lamv)).real
    errs = []
    for hs in (4e-3, 2e-3, 1e-3):
        got = estimate_truncated_spec(probe, spec, 3, beta, hs, cfg)
        errs.append(abs(got - want))
    assert errs[0] > errs[1] > errs[2]
    slope = np.polyfit(np.log([4e-3, 2e-3, 1e-3]), np.log(errs), 1)[0]
    assert abs(slope - 1.0) < 0.35


def test_truncated_vs_oracle_on_chain(rng):
    lam = ParamVector.from_vector(rng.uniform(-0.5, 0.5, 12))
    probe, lat = make_probe(lam, radius=3)
    spec = CANONICAL_SPECS_BY_NAME["p4"]
    beta = 0.04
    poly = truncated_series_poly(lat, spec, 4, beta, require_stable_radius=False)
    want = complex(poly.evaluate_float(lam.to_array())).real
    errs = []
    for h in (2e-3, 1e-3, 5e-4):
        cfg = EstimatorConfig(t_step=1e-4, beta=beta, h=h)
        errs.append(abs(estimate_truncated_spec(probe, spec, 4, beta, h, cfg) - want))
    assert errs[2] < errs[0]


def test_estimate_system_rhs_vs_oracle(rng):
    system = canonical_system(1)
    for _ in range(3):
        lam = ParamVector.from_vector(rng.uniform(-0.5, 0.5, 12))
        probe, _ = make_probe(lam, radius=3)
        cfg = EstimatorConfig(t_step=1e-3, beta=1e-3)
        c, reports = estimate_system_rhs(probe, CANONICAL_SPECS, cfg)
        want = np.real(system.eval_full(lam.to_array()))
        scale = max(1.0, lam.inf_norm() ** 3)
        assert np.max(np.abs(c - want)) <= 1e-2 * scale
        assert len(reports) == 13
        # halving both steps shrinks the error
        cfg2 = EstimatorConfig(t_step=5e-4, beta=5e-4)
        probe2, _ = make_probe(lam, radius=3)
        c2, _ = estimate_system_rhs(probe2, CANONICAL_SPECS, cfg2)
        assert np.max(np.abs(c - want)) / np.max(np.abs(c2 - want)) >= 1.5


def test_zero_lambda_gives_zero_rhs():
    probe, _ = make_probe(vec(), radius=2)
    c, _ = estimate_system_rhs(probe, CANONICAL_SPECS, EstimatorConfig(t_step=1e-3, beta=1e-3))
    assert np.max(np.abs(c)) < 1e-10


def test_combo_linearity(rng):
    # weighted channel combinations equal the weighted combination of estimates
    lam = ParamVector.from_vector(rng.uniform(-0.5, 0.5, 12))
    probe, _ = make_probe(lam, radius=2)
    cfg = EstimatorConfig(t_step=1e-3, beta=1e-2)
    spec = CANONICAL_SPECS_BY_NAME["p10"]
    combo = estimate_spec(probe, spec, cfg)
    parts = [
        w * est_taylor_coeff(probe, spec.j, spec.k, mu, ch, cfg)
        for mu, ch, w in spec.readouts
    ]
    assert abs(combo - float(spec.scale) * sum(parts)) < 1e-12


def test_guards():
    probe, _ = make_probe(vec(h1=0.1))
    cfg = EstimatorConfig(t_step=1e-3, beta=0.06, beta_crit=0.1)
    with pytest.raises(StepGuardError):
        est_taylor_coeff(probe, 0, 2, mu=1, channel=0, cfg=cfg)  # 2*0.06 > 0.1
    with pytest.raises(StepGuardError):
        est_time_derivative(probe, 5, 0.0, mu=1, channel=0, cfg=cfg)
    with pytest.raises(StepGuardError):
        est_truncated(probe, 0, 2, 3, mu=1, channel=0, beta=0.099, h=1e-3, cfg=cfg)
    with pytest.raises(ValueError):
        EstimatorConfig(t_step=0)
