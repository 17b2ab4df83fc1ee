"""Command-line runner: ``bsderep <subcommand> --config PATH [flags]``.

Exit codes: 0 success, 2 a check or invariant failed, 3 the solver did not
converge (partial report written), 64 malformed configuration or ladder.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import SEED_ENV, load_config
from .errors import AssumptionViolation, ConfigError, ParameterError
from .generators import check_h1, check_h2, check_h3, DomainSampler
from .harness import run_representation
from .oracles import default_cases, run_oracle_suite

EXIT_OK = 0
EXIT_VIOLATION = 2
EXIT_NONCONVERGED = 3
EXIT_USAGE = 64

log = logging.getLogger("bsderep")


def _out_dir(args, cfg):
    out = args.out or cfg.tree["output"]["dir"]
    os.makedirs(out, exist_ok=True)
    return out


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def cmd_verify_assumptions(args, cfg):
    spec = cfg.generator()
    n = cfg.tree["checks"]["n_samples"]
    t_max = spec.horizon if spec.horizon != float("inf") else 1.0
    sampler = DomainSampler(d=cfg.d, t_max=t_max, seed=cfg.seed)
    reports = [check_h1(spec, sampler, n=n, d=cfg.d), check_h2(spec, sampler, n=n, d=cfg.d),
               check_h3(spec, sampler, n=n,
                        modulus_tolerance=cfg.tree["checks"]["modulus_tolerance"], d=cfg.d)]
    out = _out_dir(args, cfg)
    body = {"family": spec.name, "seed": cfg.seed, "reports": [r.to_dict() for r in reports]}
    _write(cfg.output_path(out, "compliance.json"),
           json.dumps(body, sort_keys=True, indent=2) + "\n")
    for r in reports:
        print(f"{r.assumption}: {r.verdict} ({len(r.violations)} violations / {r.n_samples})")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VIOLATION


def cmd_run_oracles(args, cfg):
    o = cfg.tree["oracles"]
    result = run_oracle_suite(
        cases=default_cases(o["gamma"]), y=o["y"], z=o["z"], epsilon=o["epsilon"],
        seed=cfg.seed, mesh_size=o["mesh_size"], replicates=o["replicates"],
        nested_steps=o["nested_steps"], solver_steps=o["solver_steps"],
        solver_paths=o["solver_paths"], nx=o["nx"], tolerance=o["tolerance"])
    out = _out_dir(args, cfg)
    _write(cfg.output_path(out, "oracles.csv"), result.csv_text())
    for r in result.rows:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.case}: closed form {r.closed_form:.6f}, "
              f"|d| nested {r.delta_nested:.2e} pde {r.delta_pde:.2e} "
              f"solver {r.delta_solver:.2e}")
    return EXIT_OK if result.passed else EXIT_VIOLATION


def cmd_run_representation(args, cfg):
    problem = cfg.problem()
    ladder = cfg.ladder()
    ladder.validate_for(problem.t, problem.spec.horizon)
    if args.force:
        log.warning("--force: running even if sampled growth checks fail")

    def progress(rung):
        log.info("eps=%g g_hat=%.6f se=%.2e flags=%s", rung.epsilon, rung.g_hat, rung.se,
                 ";".join(rung.flags) or "-")

    try:
        report = run_representation(problem, ladder, cfg.solver(), seed=cfg.seed,
                                    outer_seeds=cfg.tree["outer_seeds"],
                                    outer_paths=cfg.tree["outer_paths"], force=args.force,
                                    progress=progress, jobs=args.jobs)
    except AssumptionViolation as exc:
        out = _out_dir(args, cfg)
        _write(cfg.output_path(out, "compliance.json"),
               json.dumps({"reports": [r.to_dict() for r in exc.reports]}, sort_keys=True,
                          indent=2) + "\n")
        print(f"refused: {exc} (use --force to override)", file=sys.stderr)
        return EXIT_VIOLATION
    out = _out_dir(args, cfg)
    report.write(cfg.output_path(out, "representation.csv"),
                 cfg.output_path(out, "representation.json"))
    _print_verdict(report.to_json_dict())
    return {"pass": EXIT_OK, "violated": EXIT_VIOLATION,
            "non-converged": EXIT_NONCONVERGED}[report.verdict]


def _print_verdict(body):
    print(f"verdict: {body['verdict']}")
    print(f"g_target: {body['g_target']}")
    print(f"fitted_order: {body['fitted_order']}")
    for name, ok in sorted(body["invariants"].items()):
        print(f"  {'PASS' if ok else 'FAIL'} {name}")


def cmd_report(args, cfg=None):
    path = args.report
    if path is None:
        if cfg is None:
            raise ConfigError("report needs a JSON path or --config", ["no input given"])
        path = cfg.output_path(args.out or cfg.tree["output"]["dir"], "representation.json")
    try:
        with open(path) as fh:
            body = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report {path}", [str(exc)]) from None
    if not isinstance(body, dict) or "verdict" not in body:
        raise ConfigError(f"{path} is not a representation report", ["missing 'verdict'"])
    _print_verdict(body)
    return {"pass": EXIT_OK, "violated": EXIT_VIOLATION}.get(body["verdict"], EXIT_NONCONVERGED)


COMMANDS = {
    "verify-assumptions": cmd_verify_assumptions,
    "run-oracles": cmd_run_oracles,
    "run-representation": cmd_run_representation,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="bsderep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment configuration (JSON)")
        p.add_argument("--seed", type=int, default=None,
                       help=f"overrides {SEED_ENV} and the config seed")
        p.add_argument("--jobs", type=int, default=1, help="worker cap")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--force", action="store_true",
                       help="run even when sampled growth checks fail")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "report":
            p.add_argument("report", nargs="?", default=None, help="representation JSON")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1", [f"--jobs={args.jobs}"])
        if args.config is None:
            if args.command != "report":
                raise ConfigError("--config is required", ["missing --config"])
            cfg = None
        else:
            cfg = load_config(args.config, seed=args.seed)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        for d in exc.diagnostics:
            print(f"  {d}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
