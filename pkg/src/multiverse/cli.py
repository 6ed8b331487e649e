"""Command-line driver.

Commands: init, run, resume, analyze {interaction|sensitivity|correlations},
grid.  Exit codes: 0 success, 1 validation error, 2 evaluator/protocol
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import (
    coregional_correlations,
    grid_to_csv,
    interaction_bayes_factor,
    prediction_grid,
    sobol_indices,
)
from .contour import render_contour_svg
from .design import LoopSettings, load_state, resume_loop, run_loop
from .errors import EvaluatorError, MultiverseError, NumericalError, ValidationError
from .harness import make_evaluator
from .runconfig import load_config, save_config, template_config
from .space import space_from_dict
from .surrogate import template_for_space

RUNS_ROOT_ENV = "MULTIVERSE_RUNS_ROOT"


def runs_root() -> Path:
    return Path(os.environ.get(RUNS_ROOT_ENV, "runs"))


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as validation errors (exit 1)."""

    def error(self, message):
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="multiverse", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="scaffold a run directory with a template config")
    p_init.add_argument("name")

    p_run = sub.add_parser("run", help="execute the exploration loop")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--run-dir", default=None)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--workers", type=int, default=1)

    p_resume = sub.add_parser("resume", help="continue an interrupted run")
    p_resume.add_argument("--run-dir", required=True)
    p_resume.add_argument("--workers", type=int, default=1)

    p_an = sub.add_parser("analyze", help="post-hoc reports from a finished run")
    p_an.add_argument("subcommand", choices=("interaction", "sensitivity", "correlations"))
    p_an.add_argument("--run-dir", required=True)
    p_an.add_argument("--exact-function", action="store_true",
                      help="sensitivity: evaluate the builtin directly instead of the surrogate mean")
    p_an.add_argument("--n-base", type=int, default=1024)

    p_grid = sub.add_parser("grid", help="mean/variance grid CSV and SVG contours")
    p_grid.add_argument("--run-dir", required=True)
    p_grid.add_argument("--free-dims", required=True, help="two numeric dimension names, comma-separated")
    p_grid.add_argument("--fix", action="append", default=[], metavar="DIM=VALUE")
    p_grid.add_argument("--resolution", type=int, default=32)

    return p


# ---------------------------------------------------------------------------
# Lock file
# ---------------------------------------------------------------------------


class _RunLock:
    """Advisory writer lock: a pid file in the run directory."""

    def __init__(self, run_dir: Path):
        self.path = Path(run_dir) / "lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists():
            try:
                pid = int(self.path.read_text().strip())
                os.kill(pid, 0)
            except (ValueError, ProcessLookupError, PermissionError):
                self.path.unlink()  # stale lock
            else:
                raise ValidationError(
                    f"run directory is locked by pid {pid} ({self.path})"
                )
        self.path.write_text(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass
        return False


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_init(args) -> int:
    run_dir = runs_root() / args.name
    if run_dir.exists():
        raise ValidationError(f"run directory already exists: {run_dir}")
    run_dir.mkdir(parents=True)
    save_config(template_config(args.name), run_dir / "config.json")
    print(f"initialized {run_dir}")
    print(f"edit {run_dir / 'config.json'} then: multiverse run --config {run_dir / 'config.json'}")
    return 0


def _print_summaries(state) -> None:
    for s in state.summaries:
        line = (
            f"batch {s.batch_index}: ok {s.n_ok}, failed {s.n_failed}, "
            f"excluded {s.n_excluded} | mean grid variance {s.mean_grid_variance:.6g}"
        )
        if s.bayes_factor is not None:
            line += f" | K = {s.bayes_factor:.4g}"
        print(line)


def cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(
            config, seed=args.seed, space=replace(config.space, seed=args.seed)
        )
    run_dir = Path(args.run_dir) if args.run_dir else runs_root() / config.name
    with _RunLock(run_dir):
        save_config(config, run_dir / "config.json")
        evaluator = make_evaluator(config.evaluator, seed=config.seed, workers=args.workers)
        template = template_for_space(
            config.space, config.surrogate.base, config.surrogate.ard,
            groups=config.surrogate_groups(),
        )
        settings = LoopSettings(
            initial_n=config.initial_n,
            batch_size=config.batch_size,
            interaction_groups=config.group_indices(),
            success_predicate=config.evaluator.success_predicate,
        )
        state = run_loop(
            config.space, evaluator, template=template, acq=config.acquisition,
            settings=settings, stopping=config.stopping, run_dir=run_dir,
            seed=config.seed,
        )
    _print_summaries(state)
    print(f"done: {state.observations.n} observations in {run_dir}")
    return 0


def cmd_resume(args) -> int:
    run_dir = Path(args.run_dir)
    config = load_config(run_dir / "config.json")
    with _RunLock(run_dir):
        evaluator = make_evaluator(config.evaluator, seed=config.seed, workers=args.workers)
        state = resume_loop(run_dir, evaluator)
    _print_summaries(state)
    print(f"done: {state.observations.n} observations in {run_dir}")
    return 0


def _load_run(run_dir: Path):
    state, payload = load_state(run_dir)
    if state.model is None:
        raise ValidationError(f"run at {run_dir} has no fitted model")
    space = space_from_dict(payload["space"])
    return state, payload, space


def cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    state, payload, space = _load_run(run_dir)
    config = load_config(run_dir / "config.json")

    if args.subcommand == "interaction":
        groups = config.group_indices()
        if groups is None:
            raise ValidationError(
                "interaction analysis requires interaction_groups in the config"
            )
        report = interaction_bayes_factor(
            state.observations, space, groups,
            base=config.surrogate.base, ard=config.surrogate.ard,
            threshold=config.stopping.threshold,
        )
        out = run_dir / "interaction.json"
        _write_json(out, report.to_dict())
        names = [[space.numeric[i].name for i in g] for g in report.groups]
        print(f"interaction test between {names[0]} and {names[1]}")
        print(f"  log evidence (additive): {report.log_evidence_additive:.4f}")
        print(f"  log evidence (shared):   {report.log_evidence_shared:.4f}")
        print(f"  K = {report.K:.4g}  ({'no interaction' if report.K > 1 else 'interaction'}; "
              f"{'conclusive' if report.conclusive else 'inconclusive'} at K0 = {report.threshold:g})")
        print(f"wrote {out}")
        return 0

    if args.subcommand == "sensitivity":
        if args.exact_function:
            if config.evaluator.kind != "builtin":
                raise ValidationError("--exact-function requires a builtin evaluator")
            evaluator = make_evaluator(config.evaluator, seed=config.seed)

            def target(cfg):
                return evaluator([cfg])[0].outcome

        else:
            target = state.model
        report = sobol_indices(target, space, n_base=args.n_base, seed=config.seed)
        out = run_dir / "sensitivity.json"
        _write_json(out, report.to_dict())
        print(f"Sobol indices ({report.estimator}, n_base = {report.n_base})")
        print(f"  {'input':<16} {'main':>8} {'±':>7}   {'total':>8} {'±':>7}")
        for name, m, ms, t, ts in zip(
            report.names, report.main, report.main_std, report.total, report.total_std
        ):
            print(f"  {name:<16} {m:8.4f} {ms:7.4f}   {t:8.4f} {ts:7.4f}")
        print(f"wrote {out}")
        return 0

    # correlations
    report = coregional_correlations(state.model, space)
    out = run_dir / "correlations.json"
    _write_json(out, report.to_dict())
    for name, levels, matrix in zip(report.names, report.levels, report.matrices):
        print(f"correlations for {name!r} ({', '.join(levels)}):")
        for row in matrix:
            print("   " + "  ".join(f"{v:7.4f}" for v in row))
    print(f"wrote {out}")
    return 0


def cmd_grid(args) -> int:
    run_dir = Path(args.run_dir)
    state, payload, space = _load_run(run_dir)
    free = tuple(n.strip() for n in args.free_dims.split(",") if n.strip())
    fixed = {}
    for item in args.fix:
        if "=" not in item:
            raise ValidationError(f"--fix expects DIM=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        dim = space.dimension(key.strip())
        fixed[dim.name] = raw.strip() if dim.kind == "categorical" else float(raw)
    grid = prediction_grid(state.model, space, free, fixed, resolution=args.resolution)

    csv_path = run_dir / "grid.csv"
    grid_to_csv(grid, csv_path)
    outputs = [str(csv_path)]
    for fld in ("mean", "variance"):
        svg = render_contour_svg(
            grid, space, field=fld, observations=state.observations,
            title=f"posterior {fld}",
        )
        path = run_dir / f"grid-{fld}.svg"
        path.write_text(svg)
        outputs.append(str(path))
    for p in outputs:
        print(f"wrote {p}")
    return 0


def _write_json(path: Path, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


COMMANDS = {
    "init": cmd_init,
    "run": cmd_run,
    "resume": cmd_resume,
    "analyze": cmd_analyze,
    "grid": cmd_grid,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EvaluatorError as exc:
        print(f"evaluator error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except MultiverseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
