"""Command line entry point: validate, solve, study, spectrum, oracle.

Exit codes: 0 success, 1 assumption/solver/verdict failure, 2 bad input
(schema errors, unreadable files, family index out of range).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analysis import run_concentration_study
from .config import ConfigError, StudyConfig, load_config
from .problem import validate_assumptions
from .solver import NoAdmissibleStartError, SolverError, save_ground_state, solve_ground_state
from .spectral import norm_equivalence_bounds, smallest_eigenvalue

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _out_dir(cfg: StudyConfig, override: str | None) -> Path:
    out = Path(override) if override is not None else cfg.base_dir / cfg.output
    out.mkdir(parents=True, exist_ok=True)
    return out


def _family(cfg: StudyConfig):
    try:
        return cfg.build_family()
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot build family: {exc}") from None


def _member(family, n: int | None):
    if n is None:
        return family[0]
    for inst in family:
        if inst.n == n:
            return inst
    raise InputError(f"n={n} outside the family (n = {family[0].n}..{family[-1].n})")


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_validate(cfg: StudyConfig, args) -> int:
    family = _family(cfg)
    probes = cfg.analysis.probe_eps or cfg.analysis.eps_list or [family[0].scale]
    report = validate_assumptions(family, probes)
    d = report.to_dict()
    _dump(d, _out_dir(cfg, args.out) / "assumptions.json")
    print(json.dumps({"flags": d["flags"], "uniform_delta": d["uniform_delta"], "min_eig": d["min_eig"],
                      "passed": d["passed"]}, indent=2, sort_keys=True))
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_solve(cfg: StudyConfig, args) -> int:
    inst = _member(_family(cfg), args.n)
    try:
        gs = solve_ground_state(inst, cfg.solver)
    except (NoAdmissibleStartError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    save_ground_state(gs, _out_dir(cfg, args.out) / f"solve_n{inst.n}")
    print(f"n={inst.n} s={gs.s!r} residual={gs.residual:.3e} alpha_check={gs.alpha_check:.3e} "
          f"start={gs.start_label}")
    if not gs.converged:
        print(f"error: residual {gs.residual:.3e} above tolerance {cfg.solver.residual_tol:.1e}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_study(cfg: StudyConfig, args) -> int:
    family = _family(cfg)
    a = cfg.analysis
    try:
        report = run_concentration_study(family, cfg.solver, a.eps_list, a.q_list, a.decay_settings(),
                                         a.split_eps, a.threshold, jobs=cfg.solver.jobs)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = _out_dir(cfg, args.out)
    report.write_csv(out / "study.csv")
    report.write_json(out / "study.json")
    for r in report.rows:
        print(f"n={r.n} status={r.status} norm_n={r.norm_n:.6g} start={r.start_label}")
    for name, ok in report.verdicts.items():
        print(f"{name}: {'n/a' if ok is None else ok}")
    for note in report.notes:
        print(f"note: {note}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_spectrum(cfg: StudyConfig, args) -> int:
    inst = _member(_family(cfg), args.n)
    res = smallest_eigenvalue(inst.V)
    print(f"min_eig={res.min_eig!r} converged={res.converged} method={res.method}")
    if res.min_eig > 0:
        c1, c2 = norm_equivalence_bounds(inst.V, inst.K, res.min_eig)
        print(f"c1={c1!r} c2={c2!r}")
        return EXIT_OK
    print("error: -Lap_h + V is not positive definite", file=sys.stderr)
    return EXIT_FAIL


def cmd_oracle(cfg: StudyConfig, args) -> int:
    from .oracle import BlowUpError, NoBracketError, even_problem_from_family, save_oracle, shoot_1d
    grid = cfg.build_grid()
    family = _family(cfg)
    inst = _member(family, args.n)
    try:
        problem = even_problem_from_family(cfg.family, grid, inst.n)
    except (ValueError, IndexError) as exc:
        raise InputError(str(exc)) from None
    try:
        res = shoot_1d(problem)
    except (NoBracketError, BlowUpError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    save_oracle(res, grid, _out_dir(cfg, args.out) / f"oracle_n{inst.n}")
    print(f"n={inst.n} u0={res.u0!r} s_value={res.s_value!r} match_norm={res.match_norm:.3e}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "study": cmd_study,
    "spectrum": cmd_spectrum,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="indefconc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="study config (JSON)")
        p.add_argument("--out", help="output directory (default: the config's 'output', relative to it)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--jobs", type=int, help="parallel solves")
        p.add_argument("--n", type=int, help="family index (solve, spectrum, oracle)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(seed=args.seed, jobs=args.jobs)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
