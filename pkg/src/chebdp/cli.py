"""Command line interface: ``python3 -m chebdp {generate,evaluate,rates,hard-instance}``.

Settings come from built-in defaults, then an optional flat JSON ``--config``
file, then explicit flags.  Errors are printed to stderr as one JSON object
and mapped to exit codes: 2 validation, 3 cap exceeded, 4 solver failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import utility
from .basis import MomentIndexSet
from .bumps import hard_instance
from .errors import CapExceededError, ChebDPError, SolverError
from .experiments import ExperimentSpec, run_rates
from .io import ingest, write_json, write_points, write_synthetic
from .queries import FAMILIES, default_family
from .solver import SolverOptions
from .synth import MechanismConfig, run

log = logging.getLogger("chebdp")

EXIT_OK, EXIT_VALIDATION, EXIT_CAP, EXIT_SOLVER = 0, 2, 3, 4

DEFAULTS = {
    "generate": {
        "k": 1, "seed": 0, "normalize": False, "cap_grid": 2**22, "cap_moments": 2**20,
        "unsafe_no_privacy": False, "expand": False, "sensitivity": "sup",
        "max_iters": SolverOptions.max_iters, "tol": SolverOptions.tol,
    },
    "evaluate": {"k": 1, "m": 16, "normalize": False, "families": ",".join(FAMILIES + ("bump",)),
                 "bump_cells": 4, "seed": 0},
    "rates": {"k": 1, "epsilon": 1.0, "delta": 1e-5, "reps": 10, "seed": 0, "data_kind": "beta",
              "workers": 1, "cap_grid": 2**22, "cap_moments": 2**20},
    "hard_instance": {"k": 1, "epsilon": 1.0, "seed": 0, "c1": 1.0},
}

REQUIRED = {
    "generate": ("data", "out", "epsilon", "delta"),
    "evaluate": ("data", "synthetic"),
    "rates": ("d", "ns", "out"),
    "hard_instance": ("n", "d", "m_cells", "out"),
}


class UsageError(Exception):
    pass


def _add(p, *flags, **kw):
    p.add_argument(*flags, default=argparse.SUPPRESS, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chebdp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="run the mechanism on a CSV and write synthetic data")
    _add(g, "--config", help="flat JSON file of settings; flags override it")
    _add(g, "--data", help="input CSV, rows in [-1,1]^d")
    _add(g, "--out", help="output directory")
    _add(g, "--d", type=int, help="dimension (default: number of CSV columns)")
    _add(g, "--k", type=int)
    _add(g, "--epsilon", type=float)
    _add(g, "--delta", type=float)
    _add(g, "--m", type=int, help="override the degree chosen from (eps, delta, n)")
    _add(g, "--seed", type=int)
    _add(g, "--normalize", action="store_true", help="min-max rescale each column onto [-1,1]")
    _add(g, "--cap-grid", type=int)
    _add(g, "--cap-moments", type=int)
    _add(g, "--sensitivity", choices=("sup", "measure"))
    _add(g, "--max-iters", type=int)
    _add(g, "--tol", type=float)
    _add(g, "--expand", action="store_true", help="one row per synthetic record instead of counts")
    _add(g, "--unsafe-no-privacy", action="store_true", help="disable noise (tests only; output is watermarked)")

    e = sub.add_parser("evaluate", help="compare an original and a synthetic dataset")
    _add(e, "--config")
    _add(e, "--data", help="original CSV")
    _add(e, "--synthetic", help="synthetic CSV (a count column is honoured)")
    _add(e, "--d", type=int)
    _add(e, "--k", type=int)
    _add(e, "--m", type=int, help="moment degree for Gamma")
    _add(e, "--normalize", action="store_true")
    _add(e, "--families", help=f"comma list from {', '.join(FAMILIES + ('bump',))}")
    _add(e, "--bump-cells", type=int)
    _add(e, "--seed", type=int)
    _add(e, "--out", help="report JSON path (default: stdout)")

    r = sub.add_parser("rates", help="sweep n and fit log-log utility slopes")
    _add(r, "--config")
    _add(r, "--d", type=int)
    _add(r, "--k", type=int)
    _add(r, "--epsilon", type=float)
    _add(r, "--delta", type=float)
    _add(r, "--ns", help="comma list of sample sizes, e.g. 512,1024,2048")
    _add(r, "--reps", type=int)
    _add(r, "--seed", type=int)
    _add(r, "--data-kind", choices=("beta", "uniform", "mixture"))
    _add(r, "--workers", type=int)
    _add(r, "--cap-grid", type=int)
    _add(r, "--cap-moments", type=int)
    _add(r, "--out", help="output directory for rates.json and rates.csv")

    h = sub.add_parser("hard-instance", help="write a bump-family hard dataset")
    _add(h, "--config")
    _add(h, "--n", type=int)
    _add(h, "--d", type=int)
    _add(h, "--k", type=int)
    _add(h, "--m-cells", type=int)
    _add(h, "--epsilon", type=float)
    _add(h, "--seed", type=int)
    _add(h, "--c1", type=float)
    _add(h, "--out")
    return parser


def resolve(command: str, ns: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags, then check required keys."""
    key = command.replace("-", "_")
    settings = dict(DEFAULTS[key])
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "verbose")}
    if "config" in flags:
        try:
            cfg = json.loads(Path(flags.pop("config")).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config must be a flat JSON object")
        settings.update({k.replace("-", "_"): v for k, v in cfg.items()})
    settings.update(flags)
    missing = [k for k in REQUIRED[key] if settings.get(k) is None]
    if missing:
        raise UsageError("missing required setting(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return settings


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def cmd_generate(s: dict) -> dict:
    data = ingest(s["data"], s.get("d"), normalize=s["normalize"])
    cfg = MechanismConfig(
        d=data.d, k=s["k"], epsilon=s["epsilon"], delta=s["delta"], m=s.get("m"), seed=s["seed"],
        cap_grid=s["cap_grid"], cap_moments=s["cap_moments"], sensitivity=s["sensitivity"],
        unsafe_no_privacy=s["unsafe_no_privacy"],
        solver=SolverOptions(max_iters=s["max_iters"], tol=s["tol"]),
    )
    if data.weights is not None:
        raise UsageError("generate expects one row per record, not a count column")
    synthetic, report = run(data.points, cfg)
    report.manifest["data_hash"] = _file_digest(s["data"])
    if data.normalization is not None:
        report.manifest["normalization"] = data.normalization
    if report.watermark:
        report.manifest["watermark"] = report.watermark
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_synthetic(out / "synthetic.csv", synthetic, report.manifest, expand=s["expand"])
    write_json(out / "report.json", report.to_dict())
    return {"synthetic": str(out / "synthetic.csv"), "report": str(out / "report.json"),
            "m": report.m, "m_prime": report.m_prime, "solver_converged": report.solver_converged}


def cmd_evaluate(s: dict) -> dict:
    orig = ingest(s["data"], s.get("d"), normalize=s["normalize"])
    syn = ingest(s["synthetic"], orig.d)
    if syn.d != orig.d:
        raise UsageError(f"arity mismatch: original d={orig.d}, synthetic d={syn.d}")
    d, k, m = orig.d, s["k"], s["m"]
    index_set = MomentIndexSet(d, m)
    p, q = orig.as_distribution(), syn.as_distribution()
    gam = utility.gamma(p, q, index_set, k)
    families = [f.strip() for f in s["families"].split(",") if f.strip()]
    lower = {}
    for name in families:
        if name == "bump":
            lower[name] = utility.bump_lower_estimate(p, q, s["bump_cells"], k)
        else:
            lower[name] = utility.dk_lower_estimate(p, q, [f.scaled() for f in default_family(name, d, k, s["seed"])])
    return {
        "n_original": orig.n, "n_synthetic": syn.n if syn.weights is None else int(syn.weights.sum()),
        "d": d, "k": k, "m": m, "gamma": gam.gamma,
        "dk_upper_bound": utility.dk_bound(gam, m, d, k),
        "lower_estimates": lower,
        "dk_lower_bound": max(lower.values(), default=0.0),
    }


def cmd_rates(s: dict) -> dict:
    ns = [int(x) for x in str(s["ns"]).split(",")] if isinstance(s["ns"], str) else list(s["ns"])
    spec = ExperimentSpec(
        d=s["d"], k=s["k"], ns=ns, delta=s["delta"], epsilon=s["epsilon"], repetitions=s["reps"],
        seed=s["seed"], data=s["data_kind"], workers=s["workers"], cap_grid=s["cap_grid"],
        cap_moments=s["cap_moments"], out_dir=s["out"],
    )
    result = run_rates(spec)
    return {"slopes": result.slopes, "skipped": result.skipped, "out": s["out"]}


def cmd_hard_instance(s: dict) -> dict:
    inst = hard_instance(s["n"], s["d"], s["k"], s["m_cells"], s["epsilon"], seed=s["seed"], c1=s["c1"])
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config_hash": hashlib.sha256(json.dumps(s, sort_keys=True).encode()).hexdigest()[:16],
                "seed": s["seed"]}
    write_points(out / "points.csv", inst.points, manifest)
    doc = {
        "manifest": manifest, "n": inst.n, "d": s["d"], "k": s["k"], "m_cells": s["m_cells"],
        "M": inst.bumps.M, "r": inst.bumps.r, "C0": inst.bumps.C0, "beta": inst.beta, "flips": inst.flips,
        "theta": inst.theta.tolist(), "cell_counts": inst.cell_counts.tolist(),
        "tau": [inst.tau(i) for i in range(inst.bumps.M)],
    }
    write_json(out / "instance.json", doc)
    return {"points": str(out / "points.csv"), "instance": str(out / "instance.json")}


COMMANDS = {"generate": cmd_generate, "evaluate": cmd_evaluate, "rates": cmd_rates, "hard-instance": cmd_hard_instance}


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve(ns.command, ns)
        result = COMMANDS[ns.command](settings)
    except CapExceededError as exc:
        return _fail(EXIT_CAP, exc)
    except SolverError as exc:
        return _fail(EXIT_SOLVER, exc)
    except (UsageError, ChebDPError, ValueError, OSError) as exc:
        return _fail(EXIT_VALIDATION, exc)
    out = settings.get("out") if ns.command == "evaluate" else None
    if out:
        write_json(out, result)
    print(json.dumps(result, indent=2, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
