"""Command-line entry points: derive / simulate / certify / findroot / learn / sweep.

Thin adapters only: every subcommand parses arguments, validates the config
against its JSON schema, calls into the library, writes versioned outputs,
and emits exactly one run manifest.  All randomness derives from --seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time

import numpy as np

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from . import __version__
from .family import LatticeSpec, ParamVector, SmoothedSampler
from .learn import LearnConfig, learn_from_lambda, sweep as run_sweep
from .polysys import PolynomialSystem
from .series import canonical_system
from .sim import ExperimentSpec, ProbeInterface, to_matrix
from .solve import SearchConfig, certify_fiber, find_root
from .family import build_hamiltonian

SIMULATE_SCHEMA = {
    "type": "object",
    "required": ["lattice", "lambda", "experiments"],
    "properties": {
        "lattice": {
            "type": "object",
            "required": ["dimension", "radius"],
            "properties": {
                "dimension": {"type": "integer", "minimum": 1, "maximum": 3},
                "radius": {"type": "integer", "minimum": 1},
                "boundary": {"type": "string"},
            },
        },
        "lambda": {"type": "object"},
        "experiments": {"type": "array", "items": {"type": "object"}},
        "seed": {"type": "integer"},
    },
}

SWEEP_SCHEMA = {
    "type": "object",
    "properties": {
        "dimension": {"type": "integer"},
        "radius": {"type": "integer"},
        "varsigma": {"type": "array"},
        "beta": {"type": "array"},
        "shots": {"type": "array"},
        "seeds": {"type": "array"},
    },
}


class CliError(Exception):
    def __init__(self, message: str, code: int = 1, pointer: str | None = None):
        super().__init__(message)
        self.code = code
        self.pointer = pointer


def _fail(message: str, code: int = 1, pointer: str | None = None) -> int:
    payload = {"error": message}
    if pointer:
        payload["json_pointer"] = pointer
    print(json.dumps(payload), file=sys.stderr)
    return code


def _validate(config: dict, schema: dict):
    if jsonschema is None:
        return
    try:
        jsonschema.validate(config, schema)
    except jsonschema.ValidationError as e:
        pointer = "/" + "/".join(str(p) for p in e.absolute_path)
        raise CliError(f"config schema violation: {e.message}", code=1, pointer=pointer)


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _write_manifest(subcommand: str, config_digest: str, seed, t0: float, outputs: list[str], out: str | None):
    manifest = {
        "subcommand": subcommand,
        "config_digest": config_digest,
        "seed": seed,
        "artifact_version": __version__,
        "schema_version": 1,
        "wall_clock_s": round(time.time() - t0, 3),
        "outputs": outputs,
    }
    if out:
        path = out + ".manifest.json"
        with open(path, "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
    else:
        print(json.dumps(manifest, sort_keys=True))


def _load_json(path: str) -> dict:
    with open(path) as f:
        return json.load(f)


def _emit(payload, out: str | None):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _search_config(args, seed: int) -> SearchConfig:
    kw = {}
    if getattr(args, "config", None):
        kw = _load_json(args.config).get("solver", _load_json(args.config))
    kw.setdefault("seed", seed)
    return SearchConfig(**kw)


def _cmd_derive(args) -> int:
    t0 = time.time()
    system = canonical_system(args.dimension, radius=args.radius)
    text = system.to_text()
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    _write_manifest("derive", _digest({"dimension": args.dimension, "radius": args.radius}), args.seed, t0, [args.out] if args.out else [], args.out)
    return 0


def _cmd_simulate(args) -> int:
    t0 = time.time()
    config = _load_json(args.config)
    _validate(config, SIMULATE_SCHEMA)
    lattice = LatticeSpec.from_json(config["lattice"])
    lam = ParamVector.from_json(config["lambda"])
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    h = to_matrix(build_hamiltonian(lattice, lam), lattice)
    probe = ProbeInterface(h, lattice, seed=seed)
    results = []
    for exp_json in config["experiments"]:
        spec = ExperimentSpec.from_json(exp_json)
        value = probe.run(spec)
        results.append({"spec": spec.to_json(), "estimate": value, "shots_used": spec.shots})
    _emit(results, args.out)
    _write_manifest("simulate", _digest(config), seed, t0, [args.out] if args.out else [], args.out)
    return 0


def _cmd_certify(args) -> int:
    t0 = time.time()
    with open(args.system) as f:
        system = PolynomialSystem.from_text(f.read())
    point = _load_json(args.point)
    x0 = ParamVector.from_json(point).to_vector() if isinstance(point, dict) else list(point)
    cfg = _search_config(args, args.seed or 0)
    report = certify_fiber(system, x0, cfg)
    _emit(report.to_json(), args.out)
    _write_manifest("certify", _digest({"system": args.system, "point": point}), cfg.seed, t0, [args.out] if args.out else [], args.out)
    return 0


def _cmd_findroot(args) -> int:
    t0 = time.time()
    with open(args.system) as f:
        system = PolynomialSystem.from_text(f.read())
    rhs = _load_json(args.rhs)
    c = np.asarray(rhs["c"] if isinstance(rhs, dict) else rhs, dtype=float)
    cfg = _search_config(args, args.seed or 0)
    result = find_root(system, c, cfg)
    _emit(result.to_json(), args.out)
    _write_manifest("findroot", _digest({"system": args.system, "rhs": c.tolist()}), cfg.seed, t0, [args.out] if args.out else [], args.out)
    return 0


def _cmd_learn(args) -> int:
    t0 = time.time()
    lattice = LatticeSpec.from_json(_load_json(args.lattice))
    seed = args.seed or 0
    source = args.lambda_source
    if source.startswith("smoothed:"):
        mu_s, sigma_s, seed_s = source.split(":", 1)[1].split(",")
        mu = ParamVector.from_vector([float(mu_s)] * 12)
        lam = SmoothedSampler(mu=mu, varsigma=float(sigma_s), seed=int(seed_s)).sample()
    else:
        path = source.split(":", 1)[1] if source.startswith("file:") else source
        lam = ParamVector.from_json(_load_json(path))
    overrides = _load_json(args.config) if args.config else {}
    solver_kw = overrides.pop("solver", {})
    solver_kw.setdefault("seed", seed)
    cfg = LearnConfig(solver=SearchConfig(**solver_kw), **overrides)
    report = learn_from_lambda(lattice, lam, cfg, seed=seed)
    _emit(report.to_json(), args.out)
    _write_manifest("learn", _digest({"lattice": lattice.to_json(), "source": source, "config": overrides}), seed, t0, [args.out] if args.out else [], args.out)
    return 0


def _cmd_sweep(args) -> int:
    t0 = time.time()
    plan = _load_json(args.plan)
    _validate(plan, SWEEP_SCHEMA)
    rows = run_sweep(plan, args.out)
    _write_manifest("sweep", _digest(plan), args.seed, t0, [args.out], args.out)
    print(f"{len(rows)} rows -> {args.out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probe-tomo",
        description="Single-site quantum probe tomography: derive, simulate, certify, solve, learn.",
    )
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("derive", help="emit the canonical polynomial system")
    p.add_argument("--dimension", type=int, required=True, choices=(1, 2, 3))
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_derive)

    p = sub.add_parser("simulate", help="run probe experiments from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("certify", help="certify the generic fiber size at a point")
    p.add_argument("--system", required=True)
    p.add_argument("--point", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_certify)

    p = sub.add_parser("findroot", help="solve P(x) = c~ by filter-then-refine")
    p.add_argument("--system", required=True)
    p.add_argument("--rhs", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_findroot)

    p = sub.add_parser("learn", help="run the three-stage learner against a simulated probe")
    p.add_argument("--lattice", required=True)
    p.add_argument("--lambda-source", dest="lambda_source", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_learn)

    p = sub.add_parser("sweep", help="run a grid of learn instances to CSV")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as e:
        return _fail(str(e), e.code, e.pointer)
    except FileNotFoundError as e:
        return _fail(f"file not found: {e.filename}")
    except (ValueError, KeyError, RuntimeError) as e:
        return _fail(f"{type(e).__name__}: {e}")


if __name__ == "__main__":
    sys.exit(main())
