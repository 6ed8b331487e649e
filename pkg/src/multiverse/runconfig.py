"""Run configuration: a strict JSON schema covering the search space, the
evaluator, the surrogate structure, acquisition, and loop settings.

Unknown keys are rejected everywhere so typos fail before any evaluation
starts.  A top-level "notes" field carries free-text commentary (JSON has
no comments).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .design import AcquisitionSpec, StoppingRule
from .errors import ValidationError
from .harness import EvaluatorSpec
from .space import SearchSpace, dimension_from_dict, dimension_to_dict

_TOP_KEYS = {
    "name", "notes", "seed", "space", "evaluator", "surrogate", "acquisition",
    "initial_n", "batch_size", "stopping", "interaction_groups",
}


@dataclass(frozen=True)
class SurrogateConfig:
    base: str = "matern52"
    ard: bool = True
    groups: tuple[tuple[str, ...], ...] | None = None  # dimension names


@dataclass(frozen=True)
class RunConfig:
    name: str
    seed: int
    space: SearchSpace
    evaluator: EvaluatorSpec
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    acquisition: AcquisitionSpec = field(default_factory=AcquisitionSpec)
    initial_n: int = 8
    batch_size: int = 8
    stopping: StoppingRule = field(default_factory=StoppingRule)
    interaction_groups: tuple[tuple[str, ...], tuple[str, ...]] | None = None
    notes: str = ""

    def group_indices(self) -> tuple[tuple[int, ...], tuple[int, ...]] | None:
        """interaction_groups resolved to numeric-dimension indices."""
        if self.interaction_groups is None:
            return None
        return tuple(
            tuple(sorted(self.space.numeric_index(n) for n in g))
            for g in self.interaction_groups
        )

    def surrogate_groups(self) -> tuple[tuple[int, ...], ...] | None:
        if self.surrogate.groups is None:
            return None
        return tuple(
            tuple(sorted(self.space.numeric_index(n) for n in g))
            for g in self.surrogate.groups
        )


def _require_keys(d: dict, allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ValidationError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    _require_keys(data, _TOP_KEYS, "config")
    for key in ("name", "seed", "space", "evaluator"):
        if key not in data:
            raise ValidationError(f"config is missing required key {key!r}")

    space_d = data["space"]
    _require_keys(space_d, {"dimensions"}, "space")
    dims = tuple(_parse_dimension(x) for x in space_d["dimensions"])
    space = SearchSpace(dimensions=dims, seed=int(data["seed"]))

    ev_d = dict(data["evaluator"])
    _require_keys(
        ev_d, {"kind", "name", "params", "command", "timeout", "success_predicate"},
        "evaluator",
    )
    evaluator = EvaluatorSpec(
        kind=ev_d.get("kind", "builtin"),
        name=ev_d.get("name", ""),
        params=ev_d.get("params", {}),
        command=ev_d.get("command", ""),
        timeout=float(ev_d.get("timeout", 3600.0)),
        success_predicate=ev_d.get("success_predicate"),
    )

    sur_d = dict(data.get("surrogate", {}))
    _require_keys(sur_d, {"base", "ard", "groups"}, "surrogate")
    groups = sur_d.get("groups")
    surrogate = SurrogateConfig(
        base=sur_d.get("base", "matern52"),
        ard=bool(sur_d.get("ard", True)),
        groups=tuple(tuple(g) for g in groups) if groups else None,
    )

    acq_d = dict(data.get("acquisition", {}))
    _require_keys(acq_d, {"kind", "mc_points", "beta", "candidates"}, "acquisition")
    acquisition = AcquisitionSpec(
        kind=acq_d.get("kind", "ivr"),
        mc_points=int(acq_d.get("mc_points", 512)),
        beta=float(acq_d.get("beta", 2.0)),
        candidates=int(acq_d.get("candidates", 2048)),
    )

    stop_d = dict(data.get("stopping", {"kind": "fixed_batches", "batches": 3}))
    _require_keys(stop_d, {"kind", "batches", "threshold", "max_batches"}, "stopping")
    stopping = StoppingRule(
        kind=stop_d.get("kind", "fixed_batches"),
        batches=int(stop_d.get("batches", 3)),
        threshold=float(stop_d.get("threshold", 10.0)),
        max_batches=int(stop_d.get("max_batches", 6)),
    )

    ig = data.get("interaction_groups")
    interaction_groups = (
        tuple(tuple(g) for g in ig) if ig else None
    )

    config = RunConfig(
        name=str(data["name"]),
        seed=int(data["seed"]),
        space=space,
        evaluator=evaluator,
        surrogate=surrogate,
        acquisition=acquisition,
        initial_n=int(data.get("initial_n", 8)),
        batch_size=int(data.get("batch_size", 8)),
        stopping=stopping,
        interaction_groups=interaction_groups,
        notes=str(data.get("notes", "")),
    )
    _validate(config)
    return config


def _parse_dimension(d: dict):
    _require_keys(d, {"name", "kind", "lower", "upper", "levels"}, "dimension")
    return dimension_from_dict(d)


def _validate(config: RunConfig) -> None:
    if config.initial_n < 2:
        raise ValidationError("initial_n must be >= 2 (fitting needs two points)")
    if config.batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    if config.acquisition.candidates < config.batch_size:
        raise ValidationError("acquisition.candidates must be >= batch_size")
    if config.surrogate.base not in ("matern52", "rbf"):
        raise ValidationError(f"unknown kernel base {config.surrogate.base!r}")
    names = {d.name for d in config.space.dimensions}
    for groups, label in (
        (config.surrogate.groups, "surrogate.groups"),
        (config.interaction_groups, "interaction_groups"),
    ):
        if groups is None:
            continue
        numeric = [d.name for d in config.space.numeric]
        flat = [n for g in groups for n in g]
        if sorted(flat) != sorted(numeric):
            raise ValidationError(
                f"{label} must partition the numeric dimensions {numeric}"
            )
    if config.interaction_groups is not None and len(config.interaction_groups) != 2:
        raise ValidationError("interaction_groups must be exactly two groups")
    if (
        config.stopping.kind == "bayes_factor_conclusive"
        and config.interaction_groups is None
    ):
        raise ValidationError(
            "bayes_factor_conclusive stopping requires interaction_groups"
        )
    if config.evaluator.kind == "builtin":
        from .harness import benchmark_space

        canonical = benchmark_space(config.evaluator.name)
        expected = [d.name for d in canonical.dimensions]
        got = [d.name for d in config.space.dimensions]
        if expected != got:
            raise ValidationError(
                f"builtin {config.evaluator.name!r} expects dimensions {expected}, got {got}"
            )


def config_to_dict(config: RunConfig) -> dict:
    return {
        "name": config.name,
        "notes": config.notes,
        "seed": config.seed,
        "space": {
            "dimensions": [dimension_to_dict(d) for d in config.space.dimensions]
        },
        "evaluator": {
            "kind": config.evaluator.kind,
            "name": config.evaluator.name,
            "params": dict(config.evaluator.params),
            "command": config.evaluator.command,
            "timeout": config.evaluator.timeout,
            "success_predicate": config.evaluator.success_predicate,
        },
        "surrogate": {
            "base": config.surrogate.base,
            "ard": config.surrogate.ard,
            "groups": (
                [list(g) for g in config.surrogate.groups]
                if config.surrogate.groups
                else None
            ),
        },
        "acquisition": {
            "kind": config.acquisition.kind,
            "mc_points": config.acquisition.mc_points,
            "beta": config.acquisition.beta,
            "candidates": config.acquisition.candidates,
        },
        "initial_n": config.initial_n,
        "batch_size": config.batch_size,
        "stopping": {
            "kind": config.stopping.kind,
            "batches": config.stopping.batches,
            "threshold": config.stopping.threshold,
            "max_batches": config.stopping.max_batches,
        },
        "interaction_groups": (
            [list(g) for g in config.interaction_groups]
            if config.interaction_groups
            else None
        ),
    }


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"config is not valid JSON: {exc}") from exc
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from exc
    return parse_config(data)


def save_config(config: RunConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(config), fh, indent=2)
        fh.write("\n")


def template_config(name: str, seed: int = 0) -> RunConfig:
    """A complete, runnable starting configuration (builtin additive-sine)."""
    from dataclasses import replace

    from .harness import benchmark_space

    return RunConfig(
        name=name,
        seed=seed,
        space=replace(benchmark_space("additive-sine"), seed=seed),
        evaluator=EvaluatorSpec(kind="builtin", name="additive-sine"),
        surrogate=SurrogateConfig(),
        acquisition=AcquisitionSpec(kind="ivr", mc_points=256, candidates=512),
        initial_n=8,
        batch_size=4,
        stopping=StoppingRule(kind="fixed_batches", batches=2),
        interaction_groups=(("u1",), ("u2",)),
        notes=(
            "Template run: IVR exploration of the additive-sine benchmark. "
            "Edit space/evaluator for your own study; dimension kinds: "
            "continuous-linear, continuous-log10, integer-log2, categorical."
        ),
    )
