"""Root machinery for the canonical polynomial system.

Three layers:

* newton_refine — projected Gauss-Newton with an SVD pseudo-inverse on the
  rectangular system, returning the full iterate/residual trace.
* find_root — candidate generation (exhaustive grid for toy systems with at
  most 4 variables, batched multistart Gauss-Newton on the square subsystem
  for the 12-parameter system), residual filters on F and G, then Newton
  refinement against the full rectangular target.  The exhaustive net of the
  original scheme is exponential in the variable count; multistart keeps the
  filter-then-refine structure and the coverage gap is surfaced in the result
  rather than hidden.
* certify_fiber — complex-capable multistart on both the square-then-filtered
  route and the rectangular route, deduplication, Jacobian smallest-singular-
  value checks and symmetry closure, reporting the empirical fiber size.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .polysys import NVARS, BatchJacobianEval, BatchPolyEval, MultiPoly, PolynomialSystem

PINV_CUTOFF = 1e-12


class SingularJacobianError(RuntimeError):
    """Pseudo-inverse undefined: smallest singular value below the cutoff."""


class NoCandidateError(RuntimeError):
    """No multistart/grid candidate passed the residual filters."""


@dataclass
class SearchConfig:
    """Knobs for find_root / certify_fiber.

    The residual thresholds play the roles of the acceptance cuts xi' (on the
    square subsystem against c~') and xi_0 (on the extra row against c~_0);
    the underlying theory expresses them through constants that are never
    computed, so they are configuration here.
    """

    box_radius: float = 2.0
    residual_tol_F: float = 1e-6
    residual_tol_G: float = 1e-4
    max_newton_iters: int = 40
    dedupe_tol: float = 1e-6
    sigma_min_tol: float = 1e-8
    strategy: str = "multistart"  # or "grid"
    n_starts: int = 100_000
    grid_step: float = 0.25
    gn_iters: int = 30
    batch_chunk: int = 20_000
    seed: int = 0

    def __post_init__(self):
        for name in ("residual_tol_F", "residual_tol_G", "dedupe_tol", "sigma_min_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.strategy not in ("multistart", "grid"):
            raise ValueError("strategy must be 'multistart' or 'grid'")


@dataclass
class NewtonTrace:
    """Per-step record of a projected Gauss-Newton run."""

    iterates: list
    residuals: list
    sigma_mins: list
    diverged: bool = False

    @property
    def final_residual(self) -> float:
        return self.residuals[-1]


def _pinv_step(J: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, float]:
    """J^+ r via SVD with an absolute singular-value threshold."""
    U, s, Vh = np.linalg.svd(J, full_matrices=False)
    sig_min = s.min() if len(s) else 0.0
    if sig_min < PINV_CUTOFF:
        raise SingularJacobianError(
            f"Jacobian effectively singular (sigma_min = {sig_min:.3e} < {PINV_CUTOFF:g})"
        )
    step = Vh.conj().T @ ((U.conj().T @ r) / s)
    return step, sig_min


def newton_refine(
    eval_fn,
    jac_fn,
    target: np.ndarray,
    x0: np.ndarray,
    box_radius: float | None = None,
    iters: int = 40,
) -> tuple[np.ndarray, NewtonTrace]:
    """Projected Gauss-Newton x <- proj_box(x - J(x)^+ (P(x) - target)).

    Works for real or complex iterates (projection applies to real boxes
    only).  Divergence (residual growing three consecutive steps) stops the
    loop and flags the trace.
    """
    x = np.array(x0, dtype=complex if np.iscomplexobj(x0) else float)
    target = np.asarray(target)
    trace = NewtonTrace(iterates=[x.copy()], residuals=[], sigma_mins=[])
    r = np.asarray(eval_fn(x)) - target
    trace.residuals.append(float(np.linalg.norm(r)))
    best_x, best_r = x.copy(), trace.residuals[0]
    grow = 0
    for _ in range(iters):
        J = np.asarray(jac_fn(x))
        step, sig_min = _pinv_step(J, r)
        trace.sigma_mins.append(sig_min)
        x = x - step
        if box_radius is not None and not np.iscomplexobj(x):
            x = np.clip(x, -box_radius, box_radius)
        r = np.asarray(eval_fn(x)) - target
        trace.iterates.append(x.copy())
        res = float(np.linalg.norm(r))
        trace.residuals.append(res)
        if res < best_r:
            best_x, best_r = x.copy(), res
        # plateau jitter at the float floor is not divergence; genuine runaway is
        if res > 2.0 * best_r + 1e-13 * (1.0 + float(np.linalg.norm(target))):
            grow += 1
            if grow >= 3:
                trace.diverged = True
                break
        else:
            grow = 0
    return best_x, trace


def _batch_gauss_newton(
    f_eval, j_eval, target: np.ndarray, X: np.ndarray, iters: int, box_radius: float | None
) -> np.ndarray:
    """Vectorized Gauss-Newton over a batch of starts (real or complex).

    Damped normal equations keep rank-deficient starts from aborting the
    batch; starts that blow up (possible off-box in the complex route) are
    parked at the origin and simply fail the downstream residual filters.
    """
    n = X.shape[1]
    eye = np.eye(n)
    for _ in range(iters):
        bad = ~(np.isfinite(X).all(axis=1) & (np.abs(X) < 1e8).all(axis=1))
        if bad.any():
            X[bad] = 0
        R = f_eval(X) - target[None, :]
        J = j_eval(X)
        JH = np.conj(np.swapaxes(J, 1, 2))
        A = JH @ J
        damp = 1e-12 * (1.0 + np.abs(np.trace(A, axis1=1, axis2=2)))[:, None, None]
        A = A + damp * eye[None, :, :]
        g = JH @ R[..., None]
        try:
            step = np.linalg.solve(A, g)[..., 0]
        except np.linalg.LinAlgError:
            step = (np.linalg.pinv(J, rcond=1e-10) @ R[..., None])[..., 0]
        X = X - step
        if box_radius is not None and not np.iscomplexobj(X):
            X = np.clip(X, -box_radius, box_radius)
    return X


def _chunked_gauss_newton(
    f_eval, j_eval, target, X, iters, box_radius, chunk: int
) -> np.ndarray:
    if len(X) <= chunk:
        return _batch_gauss_newton(f_eval, j_eval, target, X, iters, box_radius)
    parts = [
        _batch_gauss_newton(f_eval, j_eval, target, X[i : i + chunk], iters, box_radius)
        for i in range(0, len(X), chunk)
    ]
    return np.concatenate(parts)


def _grid_points(nvars: int, box_radius: float, step: float) -> np.ndarray:
    axis = np.arange(-box_radius, box_radius + step / 2, step)
    return np.array(list(itertools.product(axis, repeat=nvars)))


@dataclass
class FindRootResult:
    x: np.ndarray
    residual_F: float
    residual_G: float
    candidate_index: int
    n_candidates_passed: int
    trace: NewtonTrace
    coverage_note: str
    alternates: list = field(default_factory=list)  # runner-up starts, residual-ranked

    def to_json(self) -> dict:
        return {
            "x": [float(v) for v in np.real(self.x)],
            "residual_F": self.residual_F,
            "residual_G": self.residual_G,
            "candidate_index": self.candidate_index,
            "n_candidates_passed": self.n_candidates_passed,
            "newton_residuals": self.trace.residuals,
            "diverged": self.trace.diverged,
            "coverage_note": self.coverage_note,
            "n_alternates": len(self.alternates),
        }


def find_root(system: PolynomialSystem, c_tilde: np.ndarray, cfg: SearchConfig) -> FindRootResult:
    """Filter-then-refine root search for P(x) = c~ with c~ = (c~_0 | c~').

    Candidates passing both residual filters are ranked by start index (the
    accept-first rule stays deterministic under parallel generation); the
    winner is polished by projected Gauss-Newton on the rectangular system.
    """
    c_tilde = np.asarray(c_tilde, dtype=float)
    if c_tilde.shape != (NVARS + 1,):
        raise ValueError(f"c_tilde must have {NVARS + 1} components (G first)")
    c0, c_prime = c_tilde[0], c_tilde[1:]

    if cfg.strategy == "grid":
        if NVARS > 4:
            raise ValueError("grid strategy is only allowed for toy systems with <= 4 variables")
        starts = _grid_points(NVARS, cfg.box_radius, cfg.grid_step)
        coverage = f"exhaustive grid, step {cfg.grid_step}"
    else:
        rng = np.random.default_rng(cfg.seed)
        starts = rng.uniform(-cfg.box_radius, cfg.box_radius, size=(cfg.n_starts, NVARS))
        coverage = (
            f"multistart with {cfg.n_starts} box-uniform starts (seed {cfg.seed}); "
            "coverage of root basins is empirical, not exhaustive"
        )

    X = _chunked_gauss_newton(
        system.eval_square, system.jacobian_square, c_prime, starts.copy(), cfg.gn_iters, cfg.box_radius, cfg.batch_chunk
    )
    rF = np.linalg.norm(system.eval_square(X) - c_prime[None, :], axis=1)
    rG = np.abs(system.eval_full(X)[:, 0] - c0)
    # When c~ carries estimation bias it can sit outside the real image of the
    # square map, so every candidate has a positive residual floor; the F cut
    # then plays its calibrated role relative to that floor.
    tol_F = max(cfg.residual_tol_F, 1.5 * float(rF.min()))
    passing = np.flatnonzero((rF <= tol_F) & (rG <= cfg.residual_tol_G))
    if passing.size == 0:
        raise NoCandidateError(
            "no candidate passed the residual filters "
            f"(best F-residual {rF.min():.3e} vs tol {tol_F:g}, "
            f"best G-residual {rG.min():.3e} vs tol {cfg.residual_tol_G:g}); "
            "loosen the tolerances or raise the multistart count"
        )
    # deterministic accept-first under a residual-sorted enumeration order
    order = np.lexsort((passing, rF[passing] + rG[passing]))
    ranked = passing[order]
    best = int(ranked[0])
    # Fallback candidates, one per well-separated basin, ranked over the whole
    # batch rather than only the filter survivors: a wrong fiber can fit a
    # biased right-hand side exactly, in which case no residual cut at this
    # accuracy can prefer the true basin and the caller's refinement stage
    # (which sees a much sharper residual) must arbitrate.  The separation cut
    # is coarse on purpose: partially converged starts spread in a cloud
    # around their basin's least-squares point.
    full_order = np.lexsort((np.arange(len(rF)), rF + rG))
    alternates: list = []
    reps = [X[best]]
    for idx in full_order:
        if len(alternates) >= 32:
            break
        xc = X[int(idx)]
        if all(np.max(np.abs(xc - r)) > 0.05 for r in reps):
            reps.append(xc)
            alternates.append(np.array(xc))
    x_hat, trace = newton_refine(
        system.eval_full,
        system.jacobian_full,
        c_tilde,
        X[best],
        box_radius=cfg.box_radius,
        iters=cfg.max_newton_iters,
    )
    final = system.eval_full(x_hat)
    return FindRootResult(
        x=x_hat,
        residual_F=float(np.linalg.norm(final[1:] - c_prime)),
        residual_G=float(abs(final[0] - c0)),
        candidate_index=best,
        n_candidates_passed=int(passing.size),
        trace=trace,
        coverage_note=coverage,
        alternates=alternates,
    )


@dataclass
class FiberReport:
    """Empirical certificate for the fiber size of the rectangular system."""

    solutions: list
    sigma_mins: list
    closed_under_symmetry: bool
    count: int
    verdict: str  # "certified" | "degenerate instance" | "inconclusive" | "symmetry fixed point (measure zero)"
    counts_per_seed: list
    max_residual: float
    coverage_note: str

    def to_json(self) -> dict:
        return {
            "solutions": [[[float(v.real), float(v.imag)] for v in sol] for sol in self.solutions],
            "sigma_mins": [float(s) for s in self.sigma_mins],
            "closed_under_symmetry": self.closed_under_symmetry,
            "count": self.count,
            "verdict": self.verdict,
            "counts_per_seed": self.counts_per_seed,
            "max_residual": self.max_residual,
            "coverage_note": self.coverage_note,
        }


def _dedupe(points: np.ndarray, tol: float) -> np.ndarray:
    kept: list = []
    for p in points:
        if not any(np.max(np.abs(p - q)) <= tol for q in kept):
            kept.append(p)
    return np.array(kept) if kept else np.zeros((0, points.shape[1]), dtype=points.dtype)


def _transpose_vector(x: np.ndarray) -> np.ndarray:
    from .polysys import TRANSPOSE_PERM

    return x[..., list(TRANSPOSE_PERM)]


def certify_fiber(system: PolynomialSystem, x0, cfg: SearchConfig, reseeds: int = 3) -> FiberReport:
    """Solve P(x) = P(x0) over C^12 by multistart and certify the fiber size.

    Runs two routes per seed: square-subsystem Gauss-Newton followed by the
    G-filter, and rectangular Gauss-Newton; both must agree.  Each retained
    solution is checked for smallest singular value of the square Jacobian
    above sigma_min_tol, and the set is checked for closure under the
    coupling transpose.  Unstable counts across reseeds => "inconclusive";
    any near-singular Jacobian => "degenerate instance".
    """
    x0 = np.array([complex(v) for v in x0])
    if x0.shape != (NVARS,):
        raise ValueError(f"x0 must have {NVARS} entries")
    target = np.asarray(system.eval_full(x0), dtype=complex)
    c0, c_prime = target[0], target[1:]
    fixed_point = bool(np.max(np.abs(x0 - _transpose_vector(x0))) <= cfg.dedupe_tol)

    per_seed_solutions = []
    counts = []
    for s in range(reseeds):
        rng = np.random.default_rng((cfg.seed, s))
        starts = rng.uniform(-cfg.box_radius, cfg.box_radius, size=(cfg.n_starts, NVARS)) + 1j * (
            0.5 * rng.standard_normal((cfg.n_starts, NVARS))
        )
        sols = []
        # route 1: square subsystem, then filter on the extra row
        Xs = _chunked_gauss_newton(
            system.eval_square, system.jacobian_square, c_prime, starts.copy(), cfg.gn_iters, None, cfg.batch_chunk
        )
        rF = np.linalg.norm(system.eval_square(Xs) - c_prime[None, :], axis=1)
        rG = np.abs(system.eval_full(Xs)[:, 0] - c0)
        good = Xs[(rF <= cfg.residual_tol_F) & (rG <= cfg.residual_tol_G)]
        sols.append(_dedupe(good, cfg.dedupe_tol))
        # route 2: rectangular system directly
        Xr = _chunked_gauss_newton(
            system.eval_full, system.jacobian_full, target, starts.copy(), cfg.gn_iters, None, cfg.batch_chunk
        )
        rful = np.linalg.norm(system.eval_full(Xr) - target[None, :], axis=1)
        good_r = Xr[rful <= cfg.residual_tol_F]
        sols.append(_dedupe(good_r, cfg.dedupe_tol))
        merged = _dedupe(np.concatenate([s_ for s_ in sols if len(s_)]) if any(len(s_) for s_ in sols) else np.zeros((0, NVARS), dtype=complex), cfg.dedupe_tol)
        per_seed_solutions.append(merged)
        counts.append(len(merged))

    stable = len(set(counts)) == 1 and counts[0] > 0
    solutions = per_seed_solutions[0] if len(per_seed_solutions[0]) else np.zeros((0, NVARS), dtype=complex)

    # polish and vet each solution
    polished = []
    sigma_mins = []
    max_resid = 0.0
    for sol in solutions:
        x_fin, _tr = newton_refine(
            system.eval_full, system.jacobian_full, target, sol, box_radius=None, iters=12
        )
        polished.append(x_fin)
        JF = system.jacobian_square(x_fin)
        sigma_mins.append(float(np.linalg.svd(JF, compute_uv=False).min()))
        max_resid = max(max_resid, float(np.linalg.norm(system.eval_full(x_fin) - target)))
    polished_arr = _dedupe(np.array(polished) if polished else solutions, cfg.dedupe_tol)

    closed = True
    for sol in polished_arr:
        mirror = _transpose_vector(sol)
        if not any(np.max(np.abs(mirror - other)) <= max(cfg.dedupe_tol, 1e-7) for other in polished_arr):
            closed = False

    count = len(polished_arr)
    if fixed_point:
        # the orbit collapses on the branch locus, so a small Jacobian
        # singular value is expected there rather than disqualifying
        verdict = "symmetry fixed point (measure zero)"
    elif any(s < cfg.sigma_min_tol for s in sigma_mins):
        verdict = "degenerate instance"
    elif not stable:
        verdict = "inconclusive"
    else:
        verdict = "certified"
    return FiberReport(
        solutions=[list(sol) for sol in polished_arr],
        sigma_mins=sigma_mins[: len(polished_arr)],
        closed_under_symmetry=closed,
        count=count,
        verdict=verdict,
        counts_per_seed=counts,
        max_residual=max_resid,
        coverage_note=(
            f"{cfg.n_starts} complex multistarts x {reseeds} reseeds x 2 routes; "
            "fiber size is an empirical count, stable across reseeds"
            if stable
            else "counts varied across reseeds"
        ),
    )


# ---------------------------------------------------------------------------
# Generic-target variants for toy systems (used by tests and demos)
# ---------------------------------------------------------------------------


@dataclass
class ToySystem:
    """A small rectangular map (G | F) over few variables for exercising the
    grid strategy and fiber logic without the 12-parameter machinery."""

    F_eval: object
    F_jac: object
    full_eval: object
    full_jac: object
    nvars: int

    @classmethod
    def from_callables(cls, F_eval, F_jac, G_eval, G_jac, nvars):
        def full_eval(x):
            x = np.atleast_2d(x)
            out = np.concatenate([np.asarray(G_eval(x)).reshape(len(x), 1), np.asarray(F_eval(x))], axis=1)
            return out if len(out) > 1 else out[0]

        def full_jac(x):
            x = np.atleast_2d(x)
            jg = np.asarray(G_jac(x)).reshape(len(x), 1, nvars)
            jf = np.asarray(F_jac(x))
            out = np.concatenate([jg, jf], axis=1)
            return out if len(out) > 1 else out[0]

        return cls(F_eval=F_eval, F_jac=F_jac, full_eval=full_eval, full_jac=full_jac, nvars=nvars)


def toy_find_root(system: ToySystem, c_tilde: np.ndarray, cfg: SearchConfig):
    """Grid or multistart filter-then-refine on a ToySystem."""
    c_tilde = np.asarray(c_tilde, dtype=float)
    c0, c_prime = c_tilde[0], c_tilde[1:]
    if cfg.strategy == "grid":
        if system.nvars > 4:
            raise ValueError("grid strategy refused for more than 4 variables")
        starts = _grid_points(system.nvars, cfg.box_radius, cfg.grid_step)
    else:
        rng = np.random.default_rng(cfg.seed)
        starts = rng.uniform(-cfg.box_radius, cfg.box_radius, size=(cfg.n_starts, system.nvars))

    def f_eval(X):
        return np.atleast_2d(system.F_eval(X))

    def f_jac(X):
        return np.asarray(system.F_jac(X))

    X = _batch_gauss_newton(f_eval, f_jac, c_prime, starts.astype(float), cfg.gn_iters, cfg.box_radius)
    rF = np.linalg.norm(f_eval(X) - c_prime[None, :], axis=1)
    full_vals = np.atleast_2d(system.full_eval(X))
    rG = np.abs(full_vals[:, 0] - c0)
    passing = np.flatnonzero((rF <= cfg.residual_tol_F) & (rG <= cfg.residual_tol_G))
    if passing.size == 0:
        raise NoCandidateError("no toy candidate passed the filters")
    best = int(passing[0])
    x_hat, trace = newton_refine(
        system.full_eval, system.full_jac, c_tilde, X[best], box_radius=cfg.box_radius, iters=cfg.max_newton_iters
    )
    return x_hat, trace
