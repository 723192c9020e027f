from fractions import Fraction

import numpy as np
import pytest

from probetomo.polysys import NVARS, TRANSPOSE_PERM
from probetomo.series import canonical_system
from probetomo.solve import (
    FiberReport,
    NoCandidateError,
    SearchConfig,
    SingularJacobianError,
    ToySystem,
    certify_fiber,
    find_root,
    newton_refine,
    toy_find_root,
)


def orbit_dist(x, lam):
    tau = lam[list(TRANSPOSE_PERM)]
    return min(np.max(np.abs(x - lam)), np.max(np.abs(x - tau)))


def test_newton_scalar_quadratic():
    # f(x) = x^2 - 4 from x0 = 3 reaches 2 within 6 iterations to 1e-10
    f = lambda x: np.array([x[0] ** 2 - 4.0])
    J = lambda x: np.array([[2.0 * x[0]]])
    x, trace = newton_refine(f, J, np.array([0.0]), np.array([3.0]), box_radius=10.0, iters=6)
    assert abs(x[0] - 2.0) < 1e-10
    assert not trace.diverged


def test_newton_linear_one_step():
    A = np.array([[2.0, 1.0], [0.5, -1.0]])
    b = np.array([1.0, 2.0])
    f = lambda x: A @ x
    J = lambda x: A
    x, trace = newton_refine(f, J, b, np.array([5.0, -3.0]), iters=1)
    assert np.allclose(A @ x, b, atol=1e-12)


def test_newton_singular_jacobian_aborts():
    f = lambda x: np.array([x[0] ** 2])
    J = lambda x: np.array([[2.0 * x[0]]])
    with pytest.raises(SingularJacobianError):
        newton_refine(f, J, np.array([0.0]), np.array([0.0]), iters=3)


def test_newton_in_basin_canonical(rng):
    # x0 = lam + 0.02 * unit perturbation, exact rhs: contracts to 1e-10
    system = canonical_system(1)
    lam = rng.uniform(-1, 1, NVARS)
    target = np.real(system.eval_full(lam))
    pert = rng.standard_normal(NVARS)
    x0 = lam + 0.02 * pert / np.max(np.abs(pert))

    def ev(x):
        return np.real(system.eval_full(x))

    def jc(x):
        return np.real(system.jacobian_full(x))

    x, trace = newton_refine(ev, jc, target, x0, box_radius=2.0, iters=12)
    assert np.max(np.abs(x - lam)) <= 1e-10
    # residuals decrease monotonically after the first step until the floor
    rs = trace.residuals
    floor = max(rs[-1], 1e-13)
    core = [r for r in rs if r > 10 * floor]
    assert all(core[i + 1] < core[i] for i in range(len(core) - 1))


def _toy_system():
    # F = (x + y, x y) with swap symmetry; G = x^2 y + x y^2 (symmetric)
    def F_eval(X):
        X = np.atleast_2d(X)
        return np.stack([X[:, 0] + X[:, 1], X[:, 0] * X[:, 1]], axis=1)

    def F_jac(X):
        X = np.atleast_2d(X)
        B = len(X)
        J = np.empty((B, 2, 2), dtype=X.dtype)
        J[:, 0, 0] = 1.0
        J[:, 0, 1] = 1.0
        J[:, 1, 0] = X[:, 1]
        J[:, 1, 1] = X[:, 0]
        return J

    def G_eval(X):
        X = np.atleast_2d(X)
        return X[:, 0] ** 2 * X[:, 1] + X[:, 0] * X[:, 1] ** 2

    def G_jac(X):
        X = np.atleast_2d(X)
        B = len(X)
        J = np.empty((B, 1, 2), dtype=X.dtype)
        J[:, 0, 0] = 2 * X[:, 0] * X[:, 1] + X[:, 1] ** 2
        J[:, 0, 1] = X[:, 0] ** 2 + 2 * X[:, 0] * X[:, 1]
        return J

    return ToySystem.from_callables(F_eval, F_jac, G_eval, G_jac, nvars=2)


def test_toy_find_root_grid():
    # truth (1, 3): the only solutions of F = (4, 3) are (1,3) and (3,1)
    toy = _toy_system()
    c = np.array([1.0 * 3 * (1 + 3), 4.0, 3.0])  # (G, F1, F2)
    cfg = SearchConfig(
        box_radius=4.0, grid_step=0.5, strategy="grid", residual_tol_F=1e-6, residual_tol_G=1e-4
    )
    x, trace = toy_find_root(toy, c, cfg)
    roots = [np.array([1.0, 3.0]), np.array([3.0, 1.0])]  # quadratic formula
    assert min(np.max(np.abs(x - r)) for r in roots) < 1e-8


def test_toy_fiber_count_two():
    # multistart over the toy square system finds exactly the two swap images
    toy = _toy_system()
    rng = np.random.default_rng(0)
    starts = rng.uniform(-4, 4, (500, 2))
    from probetomo.solve import _batch_gauss_newton, _dedupe

    X = _batch_gauss_newton(
        lambda Z: np.atleast_2d(toy.F_eval(Z)), toy.F_jac, np.array([4.0, 3.0]), starts, 40, None
    )
    good = X[np.linalg.norm(np.atleast_2d(toy.F_eval(X)) - np.array([4.0, 3.0]), axis=1) < 1e-8]
    points = _dedupe(good, 1e-6)
    assert len(points) == 2


def test_grid_refused_for_many_vars():
    system = canonical_system(1)
    cfg = SearchConfig(strategy="grid")
    with pytest.raises(ValueError, match="grid"):
        find_root(system, np.zeros(13), cfg)


def test_find_root_exact_and_perturbed(rng):
    system = canonical_system(1)
    lam = rng.uniform(-1, 1, NVARS)
    c = np.real(system.eval_full(lam))
    cfg = SearchConfig(n_starts=8000, seed=4, residual_tol_F=1e-6, residual_tol_G=1e-4)
    res = find_root(system, c, cfg)
    assert orbit_dist(np.real(res.x), lam) < 1e-6
    assert res.residual_F < 1e-8 and res.residual_G < 1e-8
    # graceful degradation under a 1e-4 right-hand-side perturbation
    c2 = c + 1e-4 * rng.standard_normal(13)
    cfg2 = SearchConfig(n_starts=8000, seed=4, residual_tol_F=1e-2, residual_tol_G=1e-2)
    res2 = find_root(system, c2, cfg2)
    assert orbit_dist(np.real(res2.x), lam) < 1e-2


def test_find_root_failure_is_explicit(rng):
    system = canonical_system(1)
    # consistent square rows but an extra-row value far from every fiber value:
    # the G filter rejects all square-fiber candidates
    lam = rng.uniform(-1, 1, NVARS)
    c = np.real(system.eval_full(lam))
    c[0] += 10.0
    cfg = SearchConfig(n_starts=2000, seed=1, residual_tol_F=1e-8, residual_tol_G=1e-4)
    with pytest.raises(NoCandidateError):
        find_root(system, c, cfg)


def test_find_root_deterministic(rng):
    system = canonical_system(1)
    lam = rng.uniform(-1, 1, NVARS)
    c = np.real(system.eval_full(lam))
    cfg = SearchConfig(n_starts=5000, seed=7)
    a = find_root(system, c, cfg)
    b = find_root(system, c, cfg)
    assert np.array_equal(a.x, b.x)
    assert a.candidate_index == b.candidate_index


CERT_CFG = SearchConfig(
    n_starts=4000, seed=3, gn_iters=35, residual_tol_F=1e-8, residual_tol_G=1e-6
)


def test_certify_fiber_canonical_rational():
    system = canonical_system(1)
    x0 = [
        Fraction(1, 3), Fraction(-2, 5), Fraction(1, 2),
        Fraction(3, 4), Fraction(1, 5), Fraction(-1, 3),
        Fraction(2, 7), Fraction(-1, 2), Fraction(1, 6),
        Fraction(-2, 3), Fraction(1, 4), Fraction(3, 5),
    ]
    report = certify_fiber(system, x0, CERT_CFG, reseeds=2)
    assert report.count == 2
    assert report.verdict == "certified"
    assert report.closed_under_symmetry
    assert all(s > 1e-8 for s in report.sigma_mins)
    x0f = np.array([float(v) for v in x0])
    tau = x0f[list(TRANSPOSE_PERM)]
    sols = [np.array(s) for s in report.solutions]
    for target in (x0f, tau):
        assert min(np.max(np.abs(np.real(s) - target) + np.abs(np.imag(s))) for s in sols) < 1e-8


def test_certify_symmetric_fixed_point():
    system = canonical_system(1)
    x0 = np.array([0.3, -0.2, 0.5, 0.7, 0.1, -0.4, 0.1, 0.6, 0.2, -0.4, 0.2, 0.8])
    # symmetric J: tau(x0) = x0
    report = certify_fiber(system, x0, CERT_CFG, reseeds=2)
    assert report.verdict == "symmetry fixed point (measure zero)"
    assert report.count == 1


def test_certify_report_json_round_trippable():
    system = canonical_system(1)
    x0 = np.array([0.31, -0.22, 0.53, 0.71, 0.13, -0.41, 0.27, 0.61, 0.19, -0.37, 0.23, 0.79])
    report = certify_fiber(system, x0, CERT_CFG, reseeds=2)
    js = report.to_json()
    assert js["count"] == report.count
    assert len(js["solutions"]) == report.count
    import json

    json.dumps(js)  # serializable
