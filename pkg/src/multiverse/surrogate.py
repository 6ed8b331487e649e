"""Gaussian Process regression on unit-cube inputs.

Hyperparameters are chosen by type-II maximum likelihood: a deterministic
multi-start Nelder-Mead search over log-space parameters, so repeated fits
of the same data give identical models.  Outcomes are standardized before
fitting and the transform is inverted on prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .errors import NumericalError, ValidationError
from .kernels import CoregionalBlock, KernelSpec, _pack, cov_diag, cov_matrix
from .quasirandom import sobol_points

LOG2PI = float(np.log(2.0 * np.pi))
NOISE_FLOOR = 1e-10
JITTER_START = 1e-8
JITTER_MAX = 1e-4

# Multi-start box in log10 coordinates.
LS_RANGE = (-2.0, 1.0)
SIGNAL_RANGE = (-2.0, 2.0)
NOISE_RANGE = (-6.0, 0.0)
COREG_W_START = 0.5
COREG_KAPPA_START = 0.5

OK, FAILED, EXCLUDED = "ok", "failed", "excluded"
STATUSES = (OK, FAILED, EXCLUDED)


@dataclass
class ObservationSet:
    """Evaluated configurations: unit coordinates, level indices, outcomes,
    and a per-row status.  Only status=ok rows enter fitting."""

    U: np.ndarray
    L: np.ndarray
    y: np.ndarray
    status: list[str] = field(default_factory=list)
    batch: np.ndarray = None

    def __post_init__(self):
        self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
        if self.U.size == 0:
            self.U = self.U.reshape(0, self.U.shape[-1] if self.U.ndim > 1 else 0)
        self.L = np.asarray(self.L, dtype=int)
        if self.L.ndim != 2:
            cols = self.L.shape[0] // self.U.shape[0] if self.U.shape[0] else 0
            self.L = self.L.reshape(self.U.shape[0], cols)
        if self.L.shape[0] != self.U.shape[0]:
            raise ValidationError("points and level indices must have the same length")
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.y.shape[0] != self.U.shape[0]:
            raise ValidationError("points and outcomes must have the same length")
        if not self.status:
            self.status = [OK] * self.U.shape[0]
        if len(self.status) != self.U.shape[0]:
            raise ValidationError("status list must match the number of points")
        for s in self.status:
            if s not in STATUSES:
                raise ValidationError(f"unknown status {s!r}")
        if self.batch is None:
            self.batch = np.zeros(self.U.shape[0], dtype=int)
        self.batch = np.asarray(self.batch, dtype=int).reshape(-1)

    @classmethod
    def empty(cls, n_numeric: int, n_categorical: int) -> "ObservationSet":
        return cls(
            U=np.zeros((0, n_numeric)),
            L=np.zeros((0, n_categorical), dtype=int),
            y=np.zeros(0),
            status=[],
            batch=np.zeros(0, dtype=int),
        )

    def append(self, u, levels, outcome: float, status: str, batch: int) -> None:
        if status not in STATUSES:
            raise ValidationError(f"unknown status {status!r}")
        self.U = np.vstack([self.U, np.atleast_2d(np.asarray(u, float))])
        self.L = np.vstack([self.L, np.atleast_2d(np.asarray(levels, int))])
        self.y = np.append(self.y, float(outcome))
        self.status.append(status)
        self.batch = np.append(self.batch, int(batch))

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def ok_mask(self) -> np.ndarray:
        return np.array([s == OK for s in self.status])

    @property
    def n_ok(self) -> int:
        return int(self.ok_mask.sum())

    def ok_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        m = self.ok_mask
        return self.U[m], self.L[m], self.y[m]


@dataclass(frozen=True)
class SurrogateModel:
    """Fitted GP: kernel, homoscedastic noise, training data, and the cached
    Cholesky factor of (K + noise I + jitter I) on standardized outcomes."""

    spec: KernelSpec
    noise_variance: float
    U: np.ndarray
    L: np.ndarray
    y_raw: np.ndarray
    y_mean: float
    y_scale: float
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float
    log_evidence: float

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def y_std(self) -> np.ndarray:
        return (self.y_raw - self.y_mean) / self.y_scale


def _chol_with_jitter(K: np.ndarray, noise_variance: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky of K + noise I + jitter I, escalating jitter on failure."""
    n = K.shape[0]
    mean_diag = float(np.trace(K)) / n if n else 1.0
    jitter = JITTER_START * mean_diag
    limit = JITTER_MAX * mean_diag
    while True:
        try:
            L = cholesky(K + (noise_variance + jitter) * np.eye(n), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            pass
        except ValueError:
            pass
        if jitter >= limit:
            raise NumericalError(
                f"Cholesky factorization failed at maximum jitter {limit:.3e}"
            )
        jitter = min(jitter * 10.0, limit)


def make_model(
    U,
    L,
    y,
    spec: KernelSpec,
    noise_variance: float,
    standardize: bool = True,
) -> SurrogateModel:
    """Build a model with fixed hyperparameters (no optimization)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if L is None:
        L = np.zeros((U.shape[0], 0), dtype=int)
    L = np.asarray(L, dtype=int).reshape(U.shape[0], -1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if U.shape[0] < 1:
        raise ValidationError("model needs at least one observation")
    noise_variance = max(float(noise_variance), NOISE_FLOOR)
    if standardize:
        y_mean = float(np.mean(y))
        scale = float(np.std(y))
        y_scale = scale if scale > 1e-12 else 1.0
    else:
        y_mean, y_scale = 0.0, 1.0
    y_std = (y - y_mean) / y_scale
    K = cov_matrix(spec, U, L)
    chol, jitter = _chol_with_jitter(K, noise_variance)
    alpha = cho_solve((chol, True), y_std)
    n = U.shape[0]
    log_evidence = float(
        -0.5 * y_std @ alpha - np.sum(np.log(np.diag(chol))) - 0.5 * n * LOG2PI
    )
    return SurrogateModel(
        spec=spec,
        noise_variance=noise_variance,
        U=U,
        L=L,
        y_raw=y,
        y_mean=y_mean,
        y_scale=y_scale,
        chol=chol,
        alpha=alpha,
        jitter=jitter,
        log_evidence=log_evidence,
    )


def predict(model: SurrogateModel, query) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance (outcome units) at the query points.

    Both the mean and the variance use the noise-inclusive solve; the
    returned variance is that of the latent function, clamped at zero.
    """
    Uq, Lq = _pack(query)
    if Uq.shape[1] != model.U.shape[1]:
        raise ValidationError(
            f"query dimension {Uq.shape[1]} does not match model dimension {model.U.shape[1]}"
        )
    kstar = cov_matrix(model.spec, model.U, model.L, Uq, Lq)
    mean_std = kstar.T @ model.alpha
    v = solve_triangular(model.chol, kstar, lower=True)
    var_std = cov_diag(model.spec, Uq, Lq) - np.einsum("ij,ij->j", v, v)
    var_std = np.maximum(var_std, 0.0)
    return mean_std * model.y_scale + model.y_mean, var_std * model.y_scale**2


def posterior_cov(model: SurrogateModel, query_a, query_b) -> np.ndarray:
    """Posterior covariance between two query sets, standardized scale."""
    Ua, La = _pack(query_a)
    Ub, Lb = _pack(query_b)
    prior = cov_matrix(model.spec, Ua, La, Ub, Lb)
    ka = cov_matrix(model.spec, model.U, model.L, Ua, La)
    kb = cov_matrix(model.spec, model.U, model.L, Ub, Lb)
    va = solve_triangular(model.chol, ka, lower=True)
    vb = solve_triangular(model.chol, kb, lower=True)
    return prior - va.T @ vb


def log_marginal_likelihood(model: SurrogateModel) -> float:
    """Log marginal likelihood of the (standardized) training outcomes."""
    return model.log_evidence


def extend_for_variance(model: SurrogateModel, U_new, L_new=None) -> SurrogateModel:
    """Fantasy model with extra observations whose outcomes are unknown.

    Posterior variance is independent of outcome values, so the extended
    model's variances are exact; its mean is meaningless (fantasy zeros).
    """
    U_new = np.atleast_2d(np.asarray(U_new, dtype=float))
    if L_new is None:
        L_new = np.zeros((U_new.shape[0], model.L.shape[1]), dtype=int)
    L_new = np.asarray(L_new, dtype=int).reshape(U_new.shape[0], -1)
    U = np.vstack([model.U, U_new])
    L = np.vstack([model.L, L_new])
    y = np.concatenate([model.y_raw, np.full(U_new.shape[0], model.y_mean)])
    K = cov_matrix(model.spec, U, L)
    chol, jitter = _chol_with_jitter(K, model.noise_variance)
    alpha = cho_solve((chol, True), (y - model.y_mean) / model.y_scale)
    return replace(
        model, U=U, L=L, y_raw=y, chol=chol, alpha=alpha, jitter=jitter
    )


def template_for_space(space, base: str = "matern52", ard: bool = True, groups=None) -> KernelSpec:
    """Kernel structure matching a search space: one input per numeric
    dimension, one coregional block per categorical dimension."""
    from .kernels import default_spec

    return default_spec(
        base,
        ard,
        space.n_numeric,
        groups=groups,
        level_counts=tuple(len(d.levels) for d in space.categorical),
        coregional_names=tuple(d.name for d in space.categorical),
    )


# ---------------------------------------------------------------------------
# Hyperparameter fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitSettings:
    """Multi-start local search budget."""

    n_starts: int = 8
    max_evals: int = 500


class _Packing:
    """Maps between a flat log-space parameter vector and a KernelSpec.

    Layout: per-input (or per-group) log10 lengthscales, log10 noise,
    per-group log10 signal variances (group 0 fixed to 1 when coregional
    blocks are present), then raw W and log10 kappa per coregional block.
    The lengthscale/noise prefix is layout-identical across kernel
    structures over the same inputs, so competing model fits share those
    start coordinates.
    """

    def __init__(self, template: KernelSpec):
        self.template = template
        self.n_ls = sum(
            len(g) if template.ard else 1 for g in template.groups
        )
        self.has_coreg = bool(template.coregional)
        self.fixed_first_signal = self.has_coreg
        self.n_sv = template.n_groups - (1 if self.fixed_first_signal else 0)
        self.n_box = self.n_ls + 1 + self.n_sv
        self.n_coreg = sum(2 * b.n_levels for b in template.coregional)
        self.n_params = self.n_box + self.n_coreg

    def box_ranges(self) -> list[tuple[float, float]]:
        ranges = [LS_RANGE] * self.n_ls
        ranges.append(NOISE_RANGE)
        ranges.extend([SIGNAL_RANGE] * self.n_sv)
        return ranges

    def start_vectors(self, settings: FitSettings) -> np.ndarray:
        if self.n_box > 16:
            raise ValidationError(
                "hyperparameter start box exceeds 16 dimensions; reduce ARD inputs or groups"
            )
        unit = sobol_points(settings.n_starts, self.n_box)
        ranges = np.array(self.box_ranges())
        box = ranges[:, 0] + unit * (ranges[:, 1] - ranges[:, 0])
        coreg = []
        for block in self.template.coregional:
            coreg.extend([COREG_W_START] * block.n_levels)
            coreg.extend([np.log10(COREG_KAPPA_START)] * block.n_levels)
        if coreg:
            box = np.hstack([box, np.tile(coreg, (settings.n_starts, 1))])
        return box

    def unpack(self, theta: np.ndarray) -> tuple[KernelSpec, float]:
        theta = np.clip(np.asarray(theta, dtype=float), -12.0, 12.0)
        pos = 0
        lengthscales = []
        for g in self.template.groups:
            count = len(g) if self.template.ard else 1
            lengthscales.append(tuple(10.0 ** theta[pos : pos + count]))
            pos += count
        noise = 10.0 ** theta[pos]
        pos += 1
        signal = []
        for g in range(self.template.n_groups):
            if g == 0 and self.fixed_first_signal:
                signal.append(1.0)
            else:
                signal.append(10.0 ** theta[pos])
                pos += 1
        blocks = []
        for block in self.template.coregional:
            n = block.n_levels
            w = tuple(float(x) for x in theta[pos : pos + n])
            pos += n
            kappa = tuple(10.0 ** theta[pos : pos + n])
            pos += n
            blocks.append(CoregionalBlock(block.name, w, kappa))
        spec = KernelSpec(
            base=self.template.base,
            ard=self.template.ard,
            groups=self.template.groups,
            signal_variance=tuple(signal),
            lengthscales=tuple(lengthscales),
            coregional=tuple(blocks),
        )
        return spec, float(max(noise, NOISE_FLOOR))


def _neg_log_marginal(theta, packing: _Packing, U, L, y_std) -> float:
    try:
        spec, noise = packing.unpack(theta)
        K = cov_matrix(spec, U, L)
        chol, _ = _chol_with_jitter(K, noise)
    except (NumericalError, FloatingPointError, ValidationError):
        return 1e25
    alpha = cho_solve((chol, True), y_std)
    value = 0.5 * y_std @ alpha + np.sum(np.log(np.diag(chol))) + 0.5 * len(y_std) * LOG2PI
    if not np.isfinite(value):
        return 1e25
    return float(value)


def fit(
    obs: ObservationSet,
    template: KernelSpec,
    settings: FitSettings = FitSettings(),
) -> SurrogateModel:
    """Maximize the log marginal likelihood over kernel and noise parameters.

    The template fixes the kernel structure (base, ARD, groups, coregional
    blocks); its parameter values are ignored in favor of the multi-start
    box.  Deterministic: same observations in, same model out.
    """
    U, L, y = obs.ok_arrays()
    if U.shape[0] < 2:
        raise ValidationError("fitting requires at least 2 ok observations")
    y_mean = float(np.mean(y))
    scale = float(np.std(y))
    y_scale = scale if scale > 1e-12 else 1.0
    y_std = (y - y_mean) / y_scale

    packing = _Packing(template)
    best_theta, best_value = None, np.inf
    for theta0 in packing.start_vectors(settings):
        result = minimize(
            _neg_log_marginal,
            theta0,
            args=(packing, U, L, y_std),
            method="Nelder-Mead",
            options={"maxfev": settings.max_evals, "xatol": 1e-4, "fatol": 1e-6},
        )
        if result.fun < best_value:
            best_value, best_theta = result.fun, result.x
    if best_theta is None or best_value >= 1e25:
        raise NumericalError("all hyperparameter starts failed to factorize")
    spec, noise = packing.unpack(best_theta)
    return make_model(U, L, y, spec, noise, standardize=True)


def fit_from_observations(
    obs: ObservationSet, template: KernelSpec, settings: FitSettings = FitSettings()
) -> SurrogateModel:
    """Alias kept for symmetry with loop code."""
    return fit(obs, template, settings)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def spec_to_dict(spec: KernelSpec) -> dict:
    return {
        "base": spec.base,
        "ard": spec.ard,
        "groups": [list(g) for g in spec.groups],
        "signal_variance": list(spec.signal_variance),
        "lengthscales": [list(ls) for ls in spec.lengthscales],
        "coregional": [
            {"name": b.name, "w": list(b.w), "kappa": list(b.kappa)}
            for b in spec.coregional
        ],
    }


def spec_from_dict(d: dict) -> KernelSpec:
    return KernelSpec(
        base=d["base"],
        ard=bool(d["ard"]),
        groups=tuple(tuple(g) for g in d["groups"]),
        signal_variance=tuple(d["signal_variance"]),
        lengthscales=tuple(tuple(ls) for ls in d["lengthscales"]),
        coregional=tuple(
            CoregionalBlock(b["name"], tuple(b["w"]), tuple(b["kappa"]))
            for b in d.get("coregional", [])
        ),
    )


def model_to_dict(model: SurrogateModel) -> dict:
    return {
        "kernel": spec_to_dict(model.spec),
        "noise_variance": model.noise_variance,
        "U": model.U.tolist(),
        "L": model.L.tolist(),
        "y": model.y_raw.tolist(),
        "y_mean": model.y_mean,
        "y_scale": model.y_scale,
        "log_evidence": model.log_evidence,
    }


def model_from_dict(d: dict) -> SurrogateModel:
    spec = spec_from_dict(d["kernel"])
    U = np.asarray(d["U"], dtype=float)
    L = np.asarray(d["L"], dtype=int).reshape(U.shape[0], -1)
    y = np.asarray(d["y"], dtype=float)
    y_mean, y_scale = float(d["y_mean"]), float(d["y_scale"])
    noise = float(d["noise_variance"])
    K = cov_matrix(spec, U, L)
    chol, jitter = _chol_with_jitter(K, noise)
    alpha = cho_solve((chol, True), (y - y_mean) / y_scale)
    return SurrogateModel(
        spec=spec,
        noise_variance=noise,
        U=U,
        L=L,
        y_raw=y,
        y_mean=y_mean,
        y_scale=y_scale,
        chol=chol,
        alpha=alpha,
        jitter=jitter,
        log_evidence=float(d["log_evidence"]),
    )
