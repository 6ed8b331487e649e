"""Evaluation functions: analytic benchmarks, a bundled kernel-classifier
case study, and a line-delimited JSON protocol for external evaluators.

The classifier is a least-squares kernel machine (closed-form solve), kept
deliberately small so the C/gamma regularization trade-off can be explored
in-process with no training framework involved.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .errors import EvaluatorError, ValidationError
from .quasirandom import substream_rng
from .space import Configuration, Dimension, SearchSpace

DEFAULT_TIMEOUT = 3600.0


@dataclass(frozen=True)
class EvaluatorSpec:
    kind: str  # "builtin" | "external"
    name: str = ""
    params: dict = field(default_factory=dict)
    command: str = ""
    timeout: float = DEFAULT_TIMEOUT
    success_predicate: dict | None = None

    def __post_init__(self):
        if self.kind not in ("builtin", "external"):
            raise ValidationError(f"unknown evaluator kind {self.kind!r}")
        if self.kind == "builtin" and self.name not in BENCHMARKS:
            raise ValidationError(f"unknown builtin evaluator {self.name!r}")
        if self.kind == "external":
            if not self.command:
                raise ValidationError("external evaluator needs a command")
            if self.timeout <= 0:
                raise ValidationError("timeout must be positive")
        if self.success_predicate is not None:
            if set(self.success_predicate) != {"metric", "min"}:
                raise ValidationError(
                    "success_predicate must have exactly the keys 'metric' and 'min'"
                )


@dataclass(frozen=True)
class EvaluationResult:
    outcome: float
    auxiliary: dict = field(default_factory=dict)
    status: str = "ok"
    duration: float = 0.0

    def __post_init__(self):
        if self.status not in ("ok", "failed"):
            raise ValidationError(f"unknown result status {self.status!r}")
        if self.status == "ok" and not math.isfinite(self.outcome):
            raise ValidationError("ok results must carry a finite outcome")


# ---------------------------------------------------------------------------
# Analytic benchmarks
# ---------------------------------------------------------------------------


def ishigami(x1: float, x2: float, x3: float, a: float = 7.0, b: float = 0.1) -> float:
    return math.sin(x1) + a * math.sin(x2) ** 2 + b * x3**4 * math.sin(x1)


def additive_sine(u1: float, u2: float) -> float:
    return math.sin(3.0 * u1) + u2


def product(u1: float, u2: float) -> float:
    return u1 * u2


def branin(x1: float, x2: float) -> float:
    a, b, c = 1.0, 5.1 / (4.0 * math.pi**2), 5.0 / math.pi
    r, s, t = 6.0, 10.0, 1.0 / (8.0 * math.pi)
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1.0 - t) * math.cos(x1) + s


def _angle_dim(name: str) -> Dimension:
    return Dimension(name=name, kind="continuous-linear", lower=-math.pi, upper=math.pi)


def _unit_dim(name: str) -> Dimension:
    return Dimension(name=name, kind="continuous-linear", lower=0.0, upper=1.0)


def _benchmark_spaces() -> dict[str, SearchSpace]:
    return {
        "ishigami": SearchSpace((_angle_dim("x1"), _angle_dim("x2"), _angle_dim("x3"))),
        "additive-sine": SearchSpace((_unit_dim("u1"), _unit_dim("u2"))),
        "product": SearchSpace((_unit_dim("u1"), _unit_dim("u2"))),
        "branin": SearchSpace(
            (
                Dimension(name="x1", kind="continuous-linear", lower=-5.0, upper=10.0),
                Dimension(name="x2", kind="continuous-linear", lower=0.0, upper=15.0),
            )
        ),
        "classifier": SearchSpace(
            (
                Dimension(name="C", kind="continuous-log10", lower=1e-3, upper=1e3),
                Dimension(name="gamma", kind="continuous-log10", lower=1e-4, upper=1e1),
            )
        ),
    }


BENCHMARKS = ("ishigami", "additive-sine", "product", "branin", "classifier")


def benchmark_space(name: str) -> SearchSpace:
    spaces = _benchmark_spaces()
    if name not in spaces:
        raise ValidationError(f"unknown builtin evaluator {name!r}")
    return spaces[name]


def benchmark_registry() -> dict[str, SearchSpace]:
    """Registered builtin names with their canonical search spaces."""
    return _benchmark_spaces()


# ---------------------------------------------------------------------------
# Bundled classifier study
# ---------------------------------------------------------------------------

_DATASET_CACHE: dict[str, tuple[np.ndarray, np.ndarray]] = {}


def load_dataset(path=None) -> tuple[np.ndarray, np.ndarray]:
    """CSV with header and a 'label' column holding -1/1; all other columns
    are numeric features."""
    key = str(path) if path is not None else "__bundled__"
    if key in _DATASET_CACHE:
        return _DATASET_CACHE[key]
    if path is None:
        text = (
            resources.files("multiverse").joinpath("data/breast_cancer.csv").read_text()
        )
    else:
        text = Path(path).read_text()
    lines = text.strip().splitlines()
    header = lines[0].split(",")
    if "label" not in header:
        raise ValidationError("dataset must have a 'label' column")
    label_ix = header.index("label")
    rows = [line.split(",") for line in lines[1:]]
    y = np.array([float(r[label_ix]) for r in rows])
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValidationError("labels must be -1 or 1")
    X = np.array(
        [[float(v) for i, v in enumerate(r) if i != label_ix] for r in rows]
    )
    _DATASET_CACHE[key] = (X, y)
    return X, y


def classifier_accuracy(
    config: Configuration | dict,
    dataset: tuple[np.ndarray, np.ndarray] | None = None,
    seed: int = 0,
) -> EvaluationResult:
    """Held-out accuracy of a least-squares RBF kernel classifier.

    Solve (G + I/C) alpha = y on the training split, where G is the RBF
    Gram matrix with lengthscale gamma over standardized features; predict
    sign of the kernel expansion.  The 70/30 split is a deterministic
    function of the seed, so identical (config, dataset, seed) always give
    bit-identical accuracy.
    """
    start = time.monotonic()
    values = config.values if isinstance(config, Configuration) else config
    C, gamma = float(values["C"]), float(values["gamma"])
    if C <= 0 or gamma <= 0:
        raise ValidationError("C and gamma must be positive")
    X, y = dataset if dataset is not None else load_dataset()
    n = X.shape[0]
    if n < 10:
        raise ValidationError("dataset must have at least 10 rows")
    if len(np.unique(y)) < 2:
        raise ValidationError("dataset must contain both classes")

    rng = substream_rng(seed, "split")
    perm = rng.permutation(n)
    n_train = int(0.7 * n)
    train, test = perm[:n_train], perm[n_train:]

    mu = X[train].mean(axis=0)
    sd = X[train].std(axis=0)
    sd[sd < 1e-12] = 1.0
    Xtr = (X[train] - mu) / sd
    Xte = (X[test] - mu) / sd

    G = np.exp(-cdist(Xtr, Xtr, "sqeuclidean") / (2.0 * gamma**2))
    alpha = cho_solve(cho_factor(G + np.eye(n_train) / C, lower=True), y[train])
    train_scores = G @ alpha
    test_scores = np.exp(-cdist(Xte, Xtr, "sqeuclidean") / (2.0 * gamma**2)) @ alpha

    train_acc = float(np.mean(np.sign(train_scores) == y[train]))
    test_acc = float(np.mean(np.sign(test_scores) == y[test]))
    return EvaluationResult(
        outcome=test_acc,
        auxiliary={"train_accuracy": train_acc},
        status="ok",
        duration=time.monotonic() - start,
    )


# ---------------------------------------------------------------------------
# Evaluation dispatch
# ---------------------------------------------------------------------------


def _builtin_result(name: str, params: dict, config: Configuration, seed: int) -> EvaluationResult:
    start = time.monotonic()
    v = config.values
    if name == "ishigami":
        out = ishigami(v["x1"], v["x2"], v["x3"], **params)
    elif name == "additive-sine":
        out = additive_sine(v["u1"], v["u2"])
    elif name == "product":
        out = product(v["u1"], v["u2"])
    elif name == "branin":
        out = branin(v["x1"], v["x2"])
    elif name == "classifier":
        return classifier_accuracy(config, seed=seed, **params)
    else:
        raise ValidationError(f"unknown builtin evaluator {name!r}")
    return EvaluationResult(outcome=float(out), duration=time.monotonic() - start)


def _external_result(
    command: str, timeout: float, config: Configuration, eval_id: str
) -> EvaluationResult:
    start = time.monotonic()
    request = json.dumps({"id": eval_id, "params": config.values}) + "\n"
    argv = shlex.split(command)
    if not argv:
        raise EvaluatorError("external evaluator command is empty")

    def failed() -> EvaluationResult:
        return EvaluationResult(
            outcome=float("nan"),
            status="failed",
            duration=time.monotonic() - start,
        )

    try:
        proc = subprocess.run(
            argv, input=request, capture_output=True, text=True, timeout=timeout
        )
    except FileNotFoundError as exc:
        raise EvaluatorError(f"evaluator command not found: {argv[0]}") from exc
    except subprocess.TimeoutExpired:
        return failed()
    if proc.returncode != 0:
        return failed()
    line = proc.stdout.splitlines()[0] if proc.stdout.strip() else ""
    try:
        response = json.loads(line)
    except json.JSONDecodeError:
        return failed()
    if not isinstance(response, dict) or response.get("id") != eval_id:
        return failed()
    outcome = response.get("outcome")
    if not isinstance(outcome, (int, float)) or not math.isfinite(outcome):
        return failed()
    aux = response.get("aux", {})
    if not isinstance(aux, dict):
        return failed()
    return EvaluationResult(
        outcome=float(outcome),
        auxiliary={k: float(v) for k, v in aux.items()},
        status="ok",
        duration=time.monotonic() - start,
    )


def evaluate(spec: EvaluatorSpec, config: Configuration, seed: int = 0, eval_id: str = "0") -> EvaluationResult:
    """One evaluation: analytic for builtins, one subprocess for external."""
    if spec.kind == "builtin":
        return _builtin_result(spec.name, spec.params, config, seed)
    return _external_result(spec.command, spec.timeout, config, eval_id)


class Evaluator:
    """Callable batch evaluator: list of Configurations in, results out, in
    order.  External points may run concurrently up to ``workers``."""

    def __init__(self, spec: EvaluatorSpec, seed: int = 0, workers: int = 1):
        if workers < 1:
            raise ValidationError("workers must be >= 1")
        self.spec = spec
        self.seed = seed
        self.workers = workers
        self._counter = 0

    @property
    def space(self) -> SearchSpace:
        if self.spec.kind != "builtin":
            raise ValidationError("external evaluators have no canonical space")
        return benchmark_space(self.spec.name)

    def __call__(self, configs: list[Configuration]) -> list[EvaluationResult]:
        ids = []
        for _ in configs:
            ids.append(f"{self.seed}-{self._counter}")
            self._counter += 1
        if self.spec.kind == "builtin" or self.workers == 1 or len(configs) <= 1:
            return [
                evaluate(self.spec, cfg, seed=self.seed, eval_id=i)
                for cfg, i in zip(configs, ids)
            ]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            futures = [
                pool.submit(evaluate, self.spec, cfg, self.seed, i)
                for cfg, i in zip(configs, ids)
            ]
            return [f.result() for f in futures]


def make_evaluator(spec: EvaluatorSpec, seed: int = 0, workers: int = 1) -> Evaluator:
    return Evaluator(spec, seed=seed, workers=workers)
