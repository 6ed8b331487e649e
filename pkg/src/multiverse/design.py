"""The exploration loop: acquisition scoring, greedy batch selection, and the
design -> evaluate -> fit -> acquire driver with per-batch persistence.

IVR (integrated variance reduction) scores a candidate by the average drop in
posterior variance over a quasirandom probe set if the candidate were added to
the training set.  The drop is exact without knowing the candidate's outcome,
because GP posterior variance does not depend on observed values.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError
from .quasirandom import shifted_sobol_stream, sobol_points, substream_rng
from .space import (
    Configuration,
    SearchSpace,
    from_unit,
    sobol_design,
    space_from_dict,
    space_to_dict,
    to_unit,
)
from .surrogate import (
    FitSettings,
    ObservationSet,
    SurrogateModel,
    extend_for_variance,
    fit,
    model_from_dict,
    model_to_dict,
    posterior_cov,
    predict,
    spec_from_dict,
    spec_to_dict,
    template_for_space,
)

KINDS = ("ivr", "ucb")
PROBE_POINTS = 256


@dataclass(frozen=True)
class AcquisitionSpec:
    kind: str = "ivr"
    mc_points: int = 512
    beta: float = 2.0
    candidates: int = 2048

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown acquisition kind {self.kind!r}")
        if self.mc_points < 16:
            raise ValidationError("mc_points must be >= 16")
        if self.beta < 0:
            raise ValidationError("beta must be non-negative")
        if self.candidates < 1:
            raise ValidationError("candidate count must be >= 1")


@dataclass(frozen=True)
class StoppingRule:
    """fixed_batches(n) or bayes_factor_conclusive(threshold, max_batches)."""

    kind: str = "fixed_batches"
    batches: int = 3
    threshold: float = 10.0
    max_batches: int = 6

    def __post_init__(self):
        if self.kind not in ("fixed_batches", "bayes_factor_conclusive"):
            raise ValidationError(f"unknown stopping rule {self.kind!r}")
        if self.kind == "fixed_batches" and self.batches < 0:
            raise ValidationError("batch count must be >= 0")
        if self.kind == "bayes_factor_conclusive":
            if self.threshold <= 1:
                raise ValidationError("conclusiveness threshold must exceed 1")
            if self.max_batches < 1:
                raise ValidationError("max_batches must be >= 1")


def fixed_batches(n: int) -> StoppingRule:
    return StoppingRule(kind="fixed_batches", batches=n)


def bayes_factor_conclusive(threshold: float = 10.0, max_batches: int = 6) -> StoppingRule:
    return StoppingRule(
        kind="bayes_factor_conclusive", threshold=threshold, max_batches=max_batches
    )


@dataclass
class BatchSummary:
    batch_index: int
    n_ok: int
    n_failed: int
    n_excluded: int
    mean_grid_variance: float
    bayes_factor: float | None = None


@dataclass
class LoopState:
    batch_index: int
    observations: ObservationSet
    model: SurrogateModel
    stopping: StoppingRule
    summaries: list[BatchSummary] = field(default_factory=list)
    complete: bool = False


# ---------------------------------------------------------------------------
# Acquisition scores
# ---------------------------------------------------------------------------


def _standardized_posterior(model: SurrogateModel, U, L):
    mean, var = predict(model, (U, L))
    return (mean - model.y_mean) / model.y_scale, var / model.y_scale**2


def ivr_scores(model: SurrogateModel, candidates, mc_sample) -> np.ndarray:
    """Vectorized IVR: expected change in mean probe variance per candidate.

    score(z) = -mean_p cov_post(p, z)^2 / (sigma_post^2(z) + sigma_n^2),
    in standardized outcome units.  Always <= 0.
    """
    cand_U, cand_L = _as_arrays(candidates)
    mc_U, mc_L = _as_arrays(mc_sample)
    if mc_U.shape[0] == 0:
        raise ValidationError("mc_sample must be non-empty")
    cov = posterior_cov(model, (mc_U, mc_L), (cand_U, cand_L))
    _, var_c = _standardized_posterior(model, cand_U, cand_L)
    denom = var_c + model.noise_variance
    return -np.mean(cov**2, axis=0) / denom


def ivr_score(model: SurrogateModel, candidate, mc_sample) -> float:
    """IVR score of a single candidate point (<= 0; lower is better)."""
    cand_U, cand_L = _as_arrays([candidate])
    return float(ivr_scores(model, (cand_U, cand_L), mc_sample)[0])


def ucb_score(model: SurrogateModel, candidate, beta: float) -> float:
    """Upper confidence bound mu + beta*sigma in standardized units."""
    if beta < 0:
        raise ValidationError("beta must be non-negative")
    cand_U, cand_L = _as_arrays([candidate])
    mu, var = _standardized_posterior(model, cand_U, cand_L)
    return float(mu[0] + beta * math.sqrt(max(var[0], 0.0)))


def _as_arrays(points) -> tuple[np.ndarray, np.ndarray]:
    from .kernels import _pack

    return _pack(points)


# ---------------------------------------------------------------------------
# Candidate / probe streams
# ---------------------------------------------------------------------------


def proposal_points(
    space: SearchSpace, n: int, seed: int, stream: str, batch_index: int
) -> tuple[np.ndarray, np.ndarray]:
    """n quasirandom points over the unit cube with uniform level draws,
    from the named substream for this batch."""
    sobol = shifted_sobol_stream(space.n_numeric, seed, stream, batch_index)
    U = sobol.take(n)
    cats = space.categorical
    L = np.zeros((n, len(cats)), dtype=int)
    rng = substream_rng(seed, stream, batch_index, "levels")
    for j, dim in enumerate(cats):
        L[:, j] = rng.integers(0, len(dim.levels), size=n)
    return U, L


def probe_set(space: SearchSpace) -> tuple[np.ndarray, np.ndarray]:
    """Fixed 256-point probe grid used for mean-variance summaries: raw
    Sobol points with levels cycled, identical across seeds and batches."""
    U = sobol_points(PROBE_POINTS, space.n_numeric, skip=1)
    cats = space.categorical
    L = np.zeros((PROBE_POINTS, len(cats)), dtype=int)
    for j, dim in enumerate(cats):
        L[:, j] = np.arange(PROBE_POINTS) % len(dim.levels)
    return U, L


def mean_grid_variance(model: SurrogateModel, space: SearchSpace) -> float:
    U, L = probe_set(space)
    _, var = predict(model, (U, L))
    return float(np.mean(var))


# ---------------------------------------------------------------------------
# Batch selection
# ---------------------------------------------------------------------------


def select_batch(
    model: SurrogateModel,
    space: SearchSpace,
    acq: AcquisitionSpec,
    batch_size: int,
    seed: int,
    batch_index: int,
) -> list[Configuration]:
    """Greedy batch: IVR argmin with exact fantasy updates, or UCB argmax
    with within-batch exclusion.  Deterministic given (model, seed, spec)."""
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    if acq.candidates < batch_size:
        raise ValidationError("candidate count must be >= batch size")
    cand_U, cand_L = proposal_points(space, acq.candidates, seed, "candidates", batch_index)

    if acq.kind == "ucb":
        mu, var = _standardized_posterior(model, cand_U, cand_L)
        scores = mu + acq.beta * np.sqrt(np.maximum(var, 0.0))
        order = np.argsort(-scores, kind="stable")[:batch_size]
        chosen = list(order)
    else:
        mc_U, mc_L = proposal_points(space, acq.mc_points, seed, "mc", batch_index)
        fantasy = model
        remaining = list(range(acq.candidates))
        chosen = []
        for _ in range(batch_size):
            scores = ivr_scores(
                fantasy, (cand_U[remaining], cand_L[remaining]), (mc_U, mc_L)
            )
            k = int(np.argmin(scores))
            idx = remaining.pop(k)
            chosen.append(idx)
            fantasy = extend_for_variance(
                fantasy, cand_U[idx : idx + 1], cand_L[idx : idx + 1]
            )
    return [from_unit(space, cand_U[i], cand_L[i]) for i in chosen]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _obs_to_dict(obs: ObservationSet) -> dict:
    return {
        "U": obs.U.tolist(),
        "L": obs.L.tolist(),
        "y": obs.y.tolist(),
        "status": list(obs.status),
        "batch": obs.batch.tolist(),
    }


def _obs_from_dict(d: dict, space: SearchSpace) -> ObservationSet:
    n = len(d["y"])
    return ObservationSet(
        U=np.asarray(d["U"], dtype=float).reshape(n, space.n_numeric),
        L=np.asarray(d["L"], dtype=int).reshape(n, -1),
        y=np.asarray(d["y"], dtype=float),
        status=list(d["status"]),
        batch=np.asarray(d["batch"], dtype=int),
    )


def _stopping_to_dict(rule: StoppingRule) -> dict:
    return {
        "kind": rule.kind,
        "batches": rule.batches,
        "threshold": rule.threshold,
        "max_batches": rule.max_batches,
    }


def _stopping_from_dict(d: dict) -> StoppingRule:
    return StoppingRule(**d)


def write_observations_csv(path: Path, obs: ObservationSet, space: SearchSpace) -> None:
    """Full rewrite each batch; float cells use repr so reruns are
    byte-identical."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([d.name for d in space.dimensions] + ["outcome", "status", "batch"])
        for i in range(obs.n):
            config = from_unit(space, obs.U[i], obs.L[i])
            row = []
            for dim in space.dimensions:
                v = config.values[dim.name]
                row.append(repr(v) if isinstance(v, float) else str(v))
            row.append(repr(float(obs.y[i])))
            row.append(obs.status[i])
            row.append(str(int(obs.batch[i])))
            writer.writerow(row)


def _persist(
    run_dir: Path,
    state: LoopState,
    space: SearchSpace,
    seed: int,
    acq: AcquisitionSpec,
    template,
    settings: "LoopSettings",
) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "batch_index": state.batch_index,
        "seed": seed,
        "complete": state.complete,
        "space": space_to_dict(space),
        "observations": _obs_to_dict(state.observations),
        "model": model_to_dict(state.model) if state.model is not None else None,
        "stopping": _stopping_to_dict(state.stopping),
        "acquisition": {
            "kind": acq.kind,
            "mc_points": acq.mc_points,
            "beta": acq.beta,
            "candidates": acq.candidates,
        },
        "template": spec_to_dict(template),
        "settings": {
            "initial_n": settings.initial_n,
            "batch_size": settings.batch_size,
            "interaction_groups": (
                [list(g) for g in settings.interaction_groups]
                if settings.interaction_groups
                else None
            ),
            "success_predicate": settings.success_predicate,
        },
        "summaries": [
            {
                "batch_index": s.batch_index,
                "n_ok": s.n_ok,
                "n_failed": s.n_failed,
                "n_excluded": s.n_excluded,
                "mean_grid_variance": s.mean_grid_variance,
                "bayes_factor": s.bayes_factor,
            }
            for s in state.summaries
        ],
    }
    with open(run_dir / f"state-{state.batch_index}.json", "w") as fh:
        json.dump(payload, fh, indent=1)
    write_observations_csv(run_dir / "observations.csv", state.observations, space)


@dataclass
class LoopSettings:
    initial_n: int = 8
    batch_size: int = 8
    interaction_groups: tuple[tuple[int, ...], tuple[int, ...]] | None = None
    success_predicate: dict | None = None
    pause_after: int | None = None
    fit_settings: FitSettings = field(default_factory=FitSettings)


# ---------------------------------------------------------------------------
# The loop
# ---------------------------------------------------------------------------


def _apply_status(result, predicate: dict | None) -> str:
    status = result.status
    if status != "ok":
        return "failed"
    if predicate is not None:
        metric = predicate["metric"]
        value = result.auxiliary.get(metric)
        if value is None or not np.isfinite(value) or value < predicate["min"]:
            return "excluded"
    return "ok"


def _evaluate_into(
    obs: ObservationSet,
    configs: list[Configuration],
    evaluator,
    space: SearchSpace,
    batch_index: int,
    predicate: dict | None,
) -> tuple[int, int, int]:
    results = evaluator(configs)
    n_ok = n_failed = n_excluded = 0
    for config, result in zip(configs, results):
        u, levels = to_unit(space, config)
        status = _apply_status(result, predicate)
        outcome = result.outcome if status != "failed" else float("nan")
        if status == "ok":
            n_ok += 1
        elif status == "failed":
            n_failed += 1
        else:
            n_excluded += 1
        obs.append(u, levels, outcome, status, batch_index)
    return n_ok, n_failed, n_excluded


def _loop_bayes_factor(obs, space, groups, template, settings) -> float:
    from .analysis import interaction_bayes_factor

    report = interaction_bayes_factor(
        obs,
        space,
        groups,
        base=template.base,
        ard=template.ard,
        settings=settings.fit_settings,
    )
    return report.K


def run_loop(
    space: SearchSpace,
    evaluator,
    template=None,
    acq: AcquisitionSpec = AcquisitionSpec(),
    settings: LoopSettings = None,
    stopping: StoppingRule = None,
    run_dir=None,
    seed: int | None = None,
) -> LoopState:
    """Execute the full exploration loop, persisting state after every batch.

    ``evaluator`` maps a list of Configurations to a list of results with
    .outcome/.status/.auxiliary.  Point failures are recorded and skipped;
    a surrogate fit failure persists state and re-raises.
    """
    settings = settings or LoopSettings()
    stopping = stopping or fixed_batches(3)
    seed = space.seed if seed is None else seed
    template = template if template is not None else template_for_space(space)
    run_dir = Path(run_dir) if run_dir is not None else None
    if stopping.kind == "bayes_factor_conclusive" and settings.interaction_groups is None:
        raise ValidationError(
            "bayes_factor_conclusive stopping requires interaction_groups"
        )

    obs = ObservationSet.empty(space.n_numeric, len(space.categorical))
    configs = sobol_design(space, settings.initial_n, seed=seed)
    counts = _evaluate_into(obs, configs, evaluator, space, 0, settings.success_predicate)
    state = LoopState(batch_index=0, observations=obs, model=None, stopping=stopping)
    return _drive(
        state, space, evaluator, template, acq, settings, stopping, run_dir, seed, counts
    )


def _drive(
    state: LoopState,
    space: SearchSpace,
    evaluator,
    template,
    acq: AcquisitionSpec,
    settings: LoopSettings,
    stopping: StoppingRule,
    run_dir,
    seed: int,
    pending_counts: tuple[int, int, int] | None,
) -> LoopState:
    """Shared driver for fresh and resumed loops.  ``pending_counts`` holds
    the (ok, failed, excluded) counts of a just-evaluated, not-yet-fitted
    batch; None means state already holds a fitted model for its batch."""
    obs = state.observations

    def fit_and_summarize(batch_index: int, counts) -> None:
        try:
            state.model = fit(obs, template, settings.fit_settings)
        except NumericalError:
            # abort, but leave the evaluated observations on disk
            state.batch_index = batch_index
            if run_dir is not None:
                _persist(run_dir, state, space, seed, acq, template, settings)
            raise
        K = None
        if settings.interaction_groups is not None:
            K = _loop_bayes_factor(
                obs, space, settings.interaction_groups, template, settings
            )
        state.summaries.append(
            BatchSummary(
                batch_index=batch_index,
                n_ok=counts[0],
                n_failed=counts[1],
                n_excluded=counts[2],
                mean_grid_variance=mean_grid_variance(state.model, space),
                bayes_factor=K,
            )
        )
        state.batch_index = batch_index
        if run_dir is not None:
            _persist(run_dir, state, space, seed, acq, template, settings)

    if pending_counts is not None:
        fit_and_summarize(state.batch_index, pending_counts)

    def should_stop() -> bool:
        b = state.batch_index
        if stopping.kind == "fixed_batches":
            return b >= stopping.batches
        if b >= stopping.max_batches:
            return True
        K = state.summaries[-1].bayes_factor if state.summaries else None
        if K is None:
            return False
        return K >= stopping.threshold or K <= 1.0 / stopping.threshold

    while not should_stop():
        if settings.pause_after is not None and state.batch_index >= settings.pause_after:
            return state
        batch_index = state.batch_index + 1
        configs = select_batch(
            state.model, space, acq, settings.batch_size, seed, batch_index
        )
        counts = _evaluate_into(
            obs, configs, evaluator, space, batch_index, settings.success_predicate
        )
        fit_and_summarize(batch_index, counts)

    state.complete = True
    if run_dir is not None:
        _persist(run_dir, state, space, seed, acq, template, settings)
    return state


def latest_state_path(run_dir) -> Path:
    run_dir = Path(run_dir)
    paths = sorted(
        run_dir.glob("state-*.json"),
        key=lambda p: int(p.stem.split("-")[1]),
    )
    if not paths:
        raise ValidationError(f"no persisted state under {run_dir}")
    return paths[-1]


def load_state(run_dir) -> tuple[LoopState, dict]:
    """Load the newest persisted LoopState plus its raw payload."""
    with open(latest_state_path(run_dir)) as fh:
        payload = json.load(fh)
    space = space_from_dict(payload["space"])
    obs = _obs_from_dict(payload["observations"], space)
    model = model_from_dict(payload["model"]) if payload["model"] else None
    state = LoopState(
        batch_index=payload["batch_index"],
        observations=obs,
        model=model,
        stopping=_stopping_from_dict(payload["stopping"]),
        summaries=[BatchSummary(**s) for s in payload["summaries"]],
        complete=payload["complete"],
    )
    return state, payload


def resume_loop(run_dir, evaluator, pause_after: int | None = None) -> LoopState:
    """Continue an interrupted run from its newest persisted state.

    With a deterministic evaluator the resumed run reproduces exactly what
    an uninterrupted run would have produced: all streams are keyed by
    (seed, batch index) and refits are pure functions of the observations.
    """
    state, payload = load_state(run_dir)
    space = space_from_dict(payload["space"])
    seed = payload["seed"]
    acq = AcquisitionSpec(**payload["acquisition"])
    template = spec_from_dict(payload["template"])
    s = payload["settings"]
    settings = LoopSettings(
        initial_n=s["initial_n"],
        batch_size=s["batch_size"],
        interaction_groups=(
            tuple(tuple(g) for g in s["interaction_groups"])
            if s["interaction_groups"]
            else None
        ),
        success_predicate=s["success_predicate"],
        pause_after=pause_after,
    )
    if state.complete:
        return state
    return _drive(
        state, space, evaluator, template, acq, settings,
        state.stopping, Path(run_dir), seed, None,
    )
