"""Post-hoc analysis of an explored decision space.

Three lenses on the fitted surrogate: a Bayes-factor test for interaction
between two groups of numeric inputs (additive vs. shared kernel), Saltelli
Monte Carlo sensitivity indices of the posterior mean, and output
correlations recovered from coregional blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .quasirandom import sobol_points, substream_rng
from .space import SearchSpace, from_unit
from .surrogate import (
    FitSettings,
    ObservationSet,
    SurrogateModel,
    fit,
    predict,
    template_for_space,
)


@dataclass(frozen=True)
class InteractionReport:
    K: float
    log_evidence_additive: float
    log_evidence_shared: float
    groups: tuple[tuple[int, ...], tuple[int, ...]]
    conclusive: bool
    threshold: float

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "log_evidence_additive": self.log_evidence_additive,
            "log_evidence_shared": self.log_evidence_shared,
            "groups": [list(g) for g in self.groups],
            "conclusive": self.conclusive,
            "threshold": self.threshold,
        }


@dataclass(frozen=True)
class SensitivityReport:
    names: tuple[str, ...]
    main: tuple[float, ...]
    main_std: tuple[float, ...]
    total: tuple[float, ...]
    total_std: tuple[float, ...]
    n_base: int
    estimator: str = "saltelli-jansen"

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "n_base": self.n_base,
            "inputs": [
                {
                    "name": n,
                    "main": m,
                    "main_std": ms,
                    "total": t,
                    "total_std": ts,
                }
                for n, m, ms, t, ts in zip(
                    self.names, self.main, self.main_std, self.total, self.total_std
                )
            ],
        }


@dataclass(frozen=True)
class CorrelationReport:
    names: tuple[str, ...]
    levels: tuple[tuple[str, ...], ...]
    matrices: tuple[np.ndarray, ...]

    def to_dict(self) -> dict:
        return {
            "dimensions": [
                {"name": n, "levels": list(ls), "correlation": m.tolist()}
                for n, ls, m in zip(self.names, self.levels, self.matrices)
            ]
        }


# ---------------------------------------------------------------------------
# Interaction Bayes factor
# ---------------------------------------------------------------------------


def interaction_bayes_factor(
    obs: ObservationSet,
    space: SearchSpace,
    groups: tuple[tuple[int, ...], tuple[int, ...]],
    base: str = "matern52",
    ard: bool = True,
    threshold: float = 10.0,
    settings: FitSettings = FitSettings(),
) -> InteractionReport:
    """K = evidence(additive) / evidence(shared) on identical data.

    The additive model sums an independent kernel per input group; the
    shared model couples all inputs in one kernel.  K > 1 favors the
    additive explanation (no interaction).  Any coregional structure is
    kept identical in both models, so the comparison isolates the numeric
    kernel structure.
    """
    if space.n_numeric < 2:
        raise ValidationError("interaction test needs at least 2 numeric inputs")
    if len(groups) != 2 or not groups[0] or not groups[1]:
        raise ValidationError("groups must be a partition into two non-empty sets")
    flat = sorted(groups[0]) + sorted(groups[1])
    if sorted(flat) != list(range(space.n_numeric)):
        raise ValidationError("groups must partition the numeric input indices")

    shared_template = template_for_space(space, base, ard, groups=None)
    additive_template = template_for_space(
        space, base, ard, groups=(tuple(sorted(groups[0])), tuple(sorted(groups[1])))
    )
    shared = fit(obs, shared_template, settings)
    additive = fit(obs, additive_template, settings)
    log_K = additive.log_evidence - shared.log_evidence
    K = float(np.exp(log_K))
    conclusive = K >= threshold or K <= 1.0 / threshold
    return InteractionReport(
        K=K,
        log_evidence_additive=additive.log_evidence,
        log_evidence_shared=shared.log_evidence,
        groups=(tuple(sorted(groups[0])), tuple(sorted(groups[1]))),
        conclusive=conclusive,
        threshold=threshold,
    )


# ---------------------------------------------------------------------------
# Sobol sensitivity on the posterior mean
# ---------------------------------------------------------------------------


def _surface_function(target, space: SearchSpace):
    """Normalize the sensitivity target to f(U, Lidx) -> outcomes.

    ``target`` is either a fitted SurrogateModel (posterior mean is used)
    or a callable taking a Configuration (exact-function mode).
    """
    if isinstance(target, SurrogateModel):

        def f(U, L):
            mean, _ = predict(target, (U, L))
            return mean

        return f
    if callable(target):

        def f(U, L):
            out = np.empty(U.shape[0])
            for i in range(U.shape[0]):
                out[i] = target(from_unit(space, U[i], L[i]))
            return out

        return f
    raise ValidationError("sensitivity target must be a model or a callable")


def sobol_indices(
    target,
    space: SearchSpace,
    n_base: int = 1024,
    n_bootstrap: int = 50,
    seed: int | None = None,
) -> SensitivityReport:
    """Saltelli-scheme main and total effects with bootstrap uncertainty.

    Categorical dimensions participate as discrete inputs sampled uniformly
    from their levels.  Estimators (Var-normalized):
      S_i   = (1/n) sum_j f(B)_j (f(AB_i)_j - f(A)_j) / Var
      S_Ti  = (1/2n) sum_j (f(A)_j - f(AB_i)_j)^2 / Var
    """
    if n_base < 256:
        raise ValidationError("n_base must be >= 256")
    f = _surface_function(target, space)
    d_num = space.n_numeric
    cats = space.categorical
    d = d_num + len(cats)
    names = tuple(dim.name for dim in space.numeric) + tuple(dim.name for dim in cats)

    raw = sobol_points(n_base, 2 * d, skip=1)
    A_raw, B_raw = raw[:, :d], raw[:, d:]

    def split(M):
        U = M[:, :d_num]
        L = np.zeros((n_base, len(cats)), dtype=int)
        for j, dim in enumerate(cats):
            L[:, j] = np.minimum(
                (M[:, d_num + j] * len(dim.levels)).astype(int), len(dim.levels) - 1
            )
        return U, L

    fA = f(*split(A_raw))
    fB = f(*split(B_raw))
    fAB = np.empty((d, n_base))
    for i in range(d):
        ABi = A_raw.copy()
        ABi[:, i] = B_raw[:, i]
        fAB[i] = f(*split(ABi))

    var = float(np.var(np.concatenate([fA, fB])))
    if var < 1e-12:
        raise NumericalError("surface variance below 1e-12: constant outcome")

    def estimates(idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a, b = fA[idx], fB[idx]
        v = np.var(np.concatenate([a, b]))
        n = len(idx)
        main = np.empty(d)
        total = np.empty(d)
        for i in range(d):
            ab = fAB[i][idx]
            main[i] = np.sum(b * (ab - a)) / n / v
            total[i] = np.sum((a - ab) ** 2) / (2 * n) / v
        return main, total

    full_idx = np.arange(n_base)
    main, total = estimates(full_idx)

    rng = substream_rng(seed if seed is not None else space.seed, "bootstrap")
    boot_main = np.empty((n_bootstrap, d))
    boot_total = np.empty((n_bootstrap, d))
    for r in range(n_bootstrap):
        idx = rng.integers(0, n_base, size=n_base)
        boot_main[r], boot_total[r] = estimates(idx)

    return SensitivityReport(
        names=names,
        main=tuple(float(x) for x in main),
        main_std=tuple(float(x) for x in boot_main.std(axis=0)),
        total=tuple(float(x) for x in total),
        total_std=tuple(float(x) for x in boot_total.std(axis=0)),
        n_base=n_base,
    )


# ---------------------------------------------------------------------------
# Coregional correlations
# ---------------------------------------------------------------------------


def coregional_correlations(model: SurrogateModel, space: SearchSpace | None = None) -> CorrelationReport:
    """corr[i,j] = B[i,j] / sqrt(B[i,i] B[j,j]) for each block B = WW^T + diag(kappa)."""
    blocks = model.spec.coregional
    if not blocks:
        raise ValidationError("model has no coregional dimensions")
    names, level_labels, matrices = [], [], []
    for block in blocks:
        B = block.matrix()
        diag = np.diag(B)
        if np.any(diag <= 0):
            raise NumericalError(
                f"coregional block {block.name!r} has a zero diagonal entry"
            )
        corr = B / np.sqrt(np.outer(diag, diag))
        names.append(block.name)
        if space is not None:
            level_labels.append(tuple(space.dimension(block.name).levels))
        else:
            level_labels.append(tuple(str(i) for i in range(block.n_levels)))
        matrices.append(corr)
    return CorrelationReport(
        names=tuple(names), levels=tuple(level_labels), matrices=tuple(matrices)
    )


# ---------------------------------------------------------------------------
# Prediction grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PredictionGrid:
    x_name: str
    y_name: str
    x_values: np.ndarray
    y_values: np.ndarray
    mean: np.ndarray      # shape (len(y_values), len(x_values))
    variance: np.ndarray

    def rows(self):
        for iy, yv in enumerate(self.y_values):
            for ix, xv in enumerate(self.x_values):
                yield xv, yv, self.mean[iy, ix], self.variance[iy, ix]


def _axis_values(dim, resolution: int) -> np.ndarray:
    if dim.kind == "continuous-log10":
        return np.logspace(math.log10(dim.lower), math.log10(dim.upper), resolution)
    if dim.kind == "integer-log2":
        return np.logspace(math.log2(dim.lower), math.log2(dim.upper), resolution, base=2.0)
    return np.linspace(dim.lower, dim.upper, resolution)


def prediction_grid(
    model: SurrogateModel,
    space: SearchSpace,
    free: tuple[str, str],
    fixed: dict | None = None,
    resolution: int = 32,
) -> PredictionGrid:
    """Posterior mean/variance over a dense 2-d slice in native units.

    ``free`` names exactly two numeric dimensions; every other dimension
    must get a value (numeric) or level (categorical) in ``fixed``.
    Log-kind axes are log-spaced.
    """
    if resolution < 2:
        raise ValidationError("resolution must be >= 2")
    if len(free) != 2 or free[0] == free[1]:
        raise ValidationError("exactly two distinct free dimensions required")
    fixed = dict(fixed or {})
    for name in free:
        dim = space.dimension(name)
        if not dim.is_numeric:
            raise ValidationError(f"free dimension {name!r} must be numeric")
        if name in fixed:
            raise ValidationError(f"dimension {name!r} is both free and fixed")
    for dim in space.dimensions:
        if dim.name in free:
            continue
        if dim.name not in fixed:
            raise ValidationError(f"dimension {dim.name!r} needs a fixed value")

    x_dim, y_dim = space.dimension(free[0]), space.dimension(free[1])
    x_vals = _axis_values(x_dim, resolution)
    y_vals = _axis_values(y_dim, resolution)

    base_u = np.zeros(space.n_numeric)
    for dim in space.numeric:
        if dim.name not in free:
            base_u[space.numeric_index(dim.name)] = dim.to_unit(fixed[dim.name])
    levels = np.zeros(len(space.categorical), dtype=int)
    for j, dim in enumerate(space.categorical):
        levels[j] = dim.level_index(fixed[dim.name])

    ix_x = space.numeric_index(free[0])
    ix_y = space.numeric_index(free[1])
    XX, YY = np.meshgrid(x_vals, y_vals)
    n_cells = XX.size
    U = np.tile(base_u, (n_cells, 1))
    U[:, ix_x] = [x_dim.to_unit(v) for v in XX.ravel()]
    U[:, ix_y] = [y_dim.to_unit(v) for v in YY.ravel()]
    L = np.tile(levels, (n_cells, 1))

    mean, var = predict(model, (U, L))
    shape = XX.shape
    return PredictionGrid(
        x_name=free[0],
        y_name=free[1],
        x_values=x_vals,
        y_values=y_vals,
        mean=mean.reshape(shape),
        variance=var.reshape(shape),
    )


def grid_to_csv(grid: PredictionGrid, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([grid.x_name, grid.y_name, "mean", "variance"])
        for xv, yv, m, v in grid.rows():
            writer.writerow([repr(float(xv)), repr(float(yv)), repr(float(m)), repr(float(v))])
