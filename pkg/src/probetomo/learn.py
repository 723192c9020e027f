"""Three-stage probe learner and the sweep harness.

Stage 1 estimates the 13 canonical right-hand sides by finite differencing.
Stage 2 runs filter-then-refine root search on the canonical system to get a
crude parameter estimate.  Stage 3 re-estimates higher-degree truncated
series at a small beta offset h and polishes with projected Gauss-Newton on
that rectangular system; the truncation keeps enough extra beta orders that
the symbolic model matches the probe signal down to the step-size floor.

Stage-3 polynomials are intentionally derived on the probe's own finite
lattice (stability-radius guard bypassed): the estimator measures the finite
chain, so the matching symbolic object is that chain's own Taylor series,
boundary effects included.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .estimate import (
    EstimatorConfig,
    estimate_system_rhs,
    estimate_truncated_spec,
)
from .family import LatticeSpec, ParamVector, SmoothedSampler, build_hamiltonian, transpose_params
from .polysys import TRANSPOSE_PERM, BatchJacobianEval, BatchPolyEval, PolynomialSystem
from .series import CANONICAL_SPECS, canonical_system, truncated_series_poly
from .sim import ProbeInterface, to_matrix
from .solve import (
    NewtonTrace,
    NoCandidateError,
    SearchConfig,
    SingularJacobianError,
    find_root,
    newton_refine,
)

SCHEMA_VERSION = 1


@dataclass
class LearnConfig:
    """Budgets and steps for the three stages."""

    epsilon: float = 1e-3
    beta: float = 0.05
    t_step: float = 1e-3
    h: float = 1e-4
    shots: int = 0
    stage3_t_step: float = 1e-5
    stage3_h_fine: float = 3e-6  # beta offset for the Stage-3 square rows
    stage3_accept_residual: float = 1e-3  # early-exit cut for phase-A candidate vetting
    k_bar_c: float = 1.0
    k_bar_cap: int = 5  # cap on j + k_bar (symbolic order guard)
    newton_iters: int | None = None
    beta_crit: float = 0.1
    solver: SearchConfig = field(
        default_factory=lambda: SearchConfig(residual_tol_F=1e-4, residual_tol_G=2.0)
    )

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.beta > self.beta_crit:
            raise ValueError("beta exceeds beta_crit")

    def k_bar(self, j: int, k: int) -> int:
        extra = max(1, math.ceil(self.k_bar_c * math.log(1 / self.epsilon) / math.log(1 / self.beta)))
        return min(k + extra, self.k_bar_cap - j)

    def newton_steps(self) -> int:
        if self.newton_iters is not None:
            return self.newton_iters
        return math.ceil(math.log2(1 / self.epsilon)) + 2


@dataclass
class LearnReport:
    """Everything one learn run produced, with exact resource counters."""

    lambda_hat: list
    lambda_stage2: list
    orbit_distance: float | None
    stage2_orbit_distance: float | None
    stage1_rhs: list
    stage2_residual_F: float
    stage2_residual_G: float
    stage3_residuals: list
    queries: int
    total_shots: int
    total_evolution_time: float
    flags: list
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "lambda_hat": self.lambda_hat,
            "lambda_stage2": self.lambda_stage2,
            "orbit_distance": self.orbit_distance,
            "stage2_orbit_distance": self.stage2_orbit_distance,
            "stage1_rhs": self.stage1_rhs,
            "stage2_residual_F": self.stage2_residual_F,
            "stage2_residual_G": self.stage2_residual_G,
            "stage3_residuals": self.stage3_residuals,
            "queries": self.queries,
            "total_shots": self.total_shots,
            "total_evolution_time": self.total_evolution_time,
            "flags": self.flags,
        }


def _real_batch(evaluator):
    def fn(x):
        out = evaluator(np.atleast_2d(x))
        return np.real(out[0] if np.ndim(x) == 1 else out)

    return fn


def orbit_distance(lam_hat, lam_true) -> float:
    """min over the inversion orbit {lam*, tau(lam*)} of the inf-norm distance."""
    a = np.asarray([float(v) for v in _as_vector(lam_hat)])
    b = np.asarray([float(v) for v in _as_vector(lam_true)])
    bt = b[list(TRANSPOSE_PERM)]
    return float(min(np.max(np.abs(a - b)), np.max(np.abs(a - bt))))


def _as_vector(x):
    if isinstance(x, ParamVector):
        return x.to_vector()
    return list(x)


def probe_learn(
    probe: ProbeInterface,
    dimension: int,
    cfg: LearnConfig | None = None,
    lam_true: ParamVector | None = None,
) -> LearnReport:
    """Run the full pipeline against a probe and report the recovered parameters."""
    cfg = cfg or LearnConfig()
    flags: list = []
    system = canonical_system(dimension)

    # Stage 1: crude right-hand side (bias O(beta) + O(t_step)).
    cfg1 = EstimatorConfig(
        t_step=cfg.t_step, beta=cfg.beta, h=cfg.h, shots_per_point=cfg.shots, beta_crit=cfg.beta_crit
    )
    c_tilde, _reports = estimate_system_rhs(probe, CANONICAL_SPECS, cfg1)

    # Stage 2: filter-then-refine on the canonical system.  At crude accuracy
    # the filters cannot always separate nearby fibers, so the runner-up
    # candidates are kept; Stage 3's far sharper residual arbitrates.
    result = find_root(system, c_tilde, cfg.solver)
    candidates = [np.real(result.x).astype(float)] + [
        np.real(a).astype(float) for a in result.alternates
    ]

    # Stage 3, phase A: full rectangular truncated system.  The extra row's
    # second time order cannot be estimated below ~1e-3 with forward
    # differences in float64, but that is still sharp enough to tell fibers
    # apart (their gaps on this row sit orders of magnitude higher), so the
    # 13-row residual arbitrates between the Stage-2 candidates.
    def _truncated(spec, h_row, cfg3):
        k_bar = cfg.k_bar(spec.j, spec.k)
        poly = truncated_series_poly(
            probe.lattice, spec, k_bar, cfg.beta, require_stable_radius=False
        )
        target = estimate_truncated_spec(probe, spec, k_bar, cfg.beta, h_row, cfg3)
        return poly, target

    polys, targets = [], []
    for spec in CANONICAL_SPECS:
        h_row = cfg.h if spec.j >= 2 else cfg.stage3_h_fine
        cfg3 = EstimatorConfig(
            t_step=cfg.stage3_t_step,
            beta=cfg.beta,
            h=h_row,
            shots_per_point=cfg.shots,
            beta_crit=cfg.beta_crit,
        )
        poly, target = _truncated(spec, h_row, cfg3)
        polys.append(poly)
        targets.append(target)
    full_targets = np.asarray(targets)
    square_targets = full_targets[1:]
    full_eval = _real_batch(BatchPolyEval(polys))
    full_jac = _real_batch(BatchJacobianEval(polys))
    square_eval = _real_batch(BatchPolyEval(polys[1:]))
    square_jac = _real_batch(BatchJacobianEval(polys[1:]))

    accept = cfg.stage3_accept_residual
    chosen = None  # (residual, candidate index, stage2 start, phase-A point)
    for ci, start in enumerate(candidates):
        try:
            x_a, tr_a = newton_refine(
                full_eval,
                full_jac,
                full_targets,
                start,
                box_radius=cfg.solver.box_radius,
                iters=cfg.newton_steps(),
            )
        except SingularJacobianError:
            continue
        res = min(tr_a.residuals)
        if chosen is None or res < chosen[0]:
            chosen = (res, ci, start, x_a)
        if res <= accept:
            break
    if chosen is None:
        flags.append("stage3_all_candidates_singular_returning_stage2")
        chosen = (float("inf"), 0, candidates[0], candidates[0])
    res_a, ci, lam0, x_a = chosen
    if ci > 0:
        flags.append(f"stage2_candidate_{ci}_selected_by_stage3_residual")
    if res_a > accept:
        flags.append("stage3_residual_above_accept_threshold")

    # Stage 3, phase B: local Newton polish on the square truncated rows only,
    # so the extra row's estimation floor stops limiting the final accuracy.
    try:
        lam_hat, trace = newton_refine(
            square_eval,
            square_jac,
            square_targets,
            x_a,
            box_radius=cfg.solver.box_radius,
            iters=cfg.newton_steps(),
        )
    except SingularJacobianError:
        flags.append("stage3_polish_singular_kept_phase_a")
        lam_hat, trace = x_a, NewtonTrace(iterates=[x_a], residuals=[float("nan")], sigma_mins=[])
    if trace.diverged and trace.residuals and min(trace.residuals) >= trace.residuals[0]:
        flags.append("stage3_diverged_returning_stage2")
        lam_hat = lam0
    elif trace.diverged:
        flags.append("stage3_flagged_divergent_kept_best_iterate")

    d_final = orbit_distance(lam_hat, lam_true) if lam_true is not None else None
    d_stage2 = orbit_distance(lam0, lam_true) if lam_true is not None else None
    return LearnReport(
        lambda_hat=[float(v) for v in lam_hat],
        lambda_stage2=[float(v) for v in lam0],
        orbit_distance=d_final,
        stage2_orbit_distance=d_stage2,
        stage1_rhs=[float(v) for v in c_tilde],
        stage2_residual_F=result.residual_F,
        stage2_residual_G=result.residual_G,
        stage3_residuals=trace.residuals,
        queries=probe.query_count,
        total_shots=probe.total_shots,
        total_evolution_time=probe.total_evolution_time,
        flags=flags,
    )


def learn_from_lambda(
    lattice: LatticeSpec,
    lam: ParamVector,
    cfg: LearnConfig | None = None,
    seed: int = 0,
) -> LearnReport:
    """Build the dense probe for a known lambda and learn it back."""
    h = to_matrix(build_hamiltonian(lattice, lam), lattice)
    probe = ProbeInterface(h, lattice, seed=seed)
    return probe_learn(probe, lattice.dimension, cfg, lam_true=lam)


# ---------------------------------------------------------------------------
# Sweep harness
# ---------------------------------------------------------------------------

SWEEP_FIELDS = [
    "row_id",
    "seed",
    "varsigma",
    "beta",
    "shots",
    "orbit_distance",
    "stage2_orbit_distance",
    "queries",
    "total_shots",
    "total_evolution_time",
    "status",
    "flags",
]


def _sweep_rows(plan: dict) -> list[dict]:
    rows = []
    rid = 0
    for varsigma in plan.get("varsigma", [0.1]):
        for beta in plan.get("beta", [0.05]):
            for shots in plan.get("shots", [0]):
                for seed in plan.get("seeds", [0]):
                    rows.append(
                        {
                            "row_id": rid,
                            "seed": seed,
                            "varsigma": varsigma,
                            "beta": beta,
                            "shots": shots,
                        }
                    )
                    rid += 1
    return rows


def _run_sweep_row(plan: dict, row: dict) -> dict:
    lattice = LatticeSpec(
        dimension=plan.get("dimension", 1), radius=plan.get("radius", 3)
    )
    mu_spec = plan.get("mu", "zero")
    rng = np.random.default_rng((plan.get("mu_seed", 0), row["seed"]))
    if mu_spec == "zero":
        mu = ParamVector.from_vector([0.0] * 12)
    elif isinstance(mu_spec, str) and mu_spec.startswith("uniform:"):
        lo, hi = (float(v) for v in mu_spec.split(":", 1)[1].split(","))
        mu = ParamVector.from_vector(rng.uniform(lo, hi, 12))
    else:
        mu = ParamVector.from_json(mu_spec)
    sampler = SmoothedSampler(mu=mu, varsigma=row["varsigma"], seed=row["seed"])
    lam = sampler.sample(0)
    overrides = dict(plan.get("learn", {}))
    overrides["beta"] = row["beta"]
    overrides["shots"] = row["shots"]
    cfg = LearnConfig(**overrides)
    out = dict(row)
    try:
        report = learn_from_lambda(lattice, lam, cfg, seed=row["seed"])
        out.update(
            orbit_distance=report.orbit_distance,
            stage2_orbit_distance=report.stage2_orbit_distance,
            queries=report.queries,
            total_shots=report.total_shots,
            total_evolution_time=report.total_evolution_time,
            status="ok",
            flags=";".join(report.flags),
        )
    except Exception as exc:  # partial-failure rows are recorded, run continues
        out.update(
            orbit_distance="",
            stage2_orbit_distance="",
            queries="",
            total_shots="",
            total_evolution_time="",
            status=f"failed:{type(exc).__name__}",
            flags=str(exc)[:120].replace("\n", " "),
        )
    return out


def sweep(plan: dict, out_path: str) -> list[dict]:
    """Run the plan grid, emit a CSV, and return the rows.

    Resumable by row: rows already present in the output file are kept and
    skipped.  Worker parallelism is capped by PROBE_TOMO_THREADS (default 1).
    """
    rows = _sweep_rows(plan)
    done: dict = {}
    if os.path.exists(out_path):
        with open(out_path, newline="") as f:
            for rec in csv.DictReader(f):
                if rec.get("status") == "ok":
                    done[int(rec["row_id"])] = rec
    pending = [r for r in rows if r["row_id"] not in done]

    n_workers = int(os.environ.get("PROBE_TOMO_THREADS", "1"))
    results: dict[int, dict] = dict(done)
    if n_workers > 1 and len(pending) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for rec in pool.map(_run_sweep_row, [plan] * len(pending), pending):
                results[int(rec["row_id"])] = rec
    else:
        for row in pending:
            results[int(row["row_id"])] = _run_sweep_row(plan, row)

    ordered = [results[r["row_id"]] for r in rows]
    with open(out_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_FIELDS)
        writer.writeheader()
        for rec in ordered:
            writer.writerow({k: rec.get(k, "") for k in SWEEP_FIELDS})
    return ordered
