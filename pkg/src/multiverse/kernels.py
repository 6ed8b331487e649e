"""Covariance functions: Matern-5/2 and RBF bases with optional ARD,
additive combinations over input groups, and a rank-1 intrinsic
coregionalization wrapper for categorical dimensions.

All kernels operate on unit-cube coordinates, so lengthscales are
dimensionless.  Categorical dimensions enter through per-dimension
mixing matrices B = w w^T + diag(kappa) multiplying the base kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

SQRT5 = np.sqrt(5.0)
BASES = ("matern52", "rbf")


@dataclass(frozen=True)
class CoregionalBlock:
    """Rank-1 coregionalization for one categorical dimension.

    B = w w^T + diag(kappa); w couples the levels, kappa lets each level
    vary independently.
    """

    name: str
    w: tuple[float, ...]
    kappa: tuple[float, ...]

    def __post_init__(self):
        if len(self.w) != len(self.kappa) or not self.w:
            raise ValidationError(
                f"coregional block {self.name!r}: w and kappa must share a positive length"
            )
        if any(k < 0 for k in self.kappa):
            raise ValidationError(f"coregional block {self.name!r}: kappa entries must be >= 0")

    @property
    def n_levels(self) -> int:
        return len(self.w)

    def matrix(self) -> np.ndarray:
        w = np.asarray(self.w)
        return np.outer(w, w) + np.diag(self.kappa)


@dataclass(frozen=True)
class KernelSpec:
    """Composable covariance definition.

    ``groups`` partitions the numeric input indices; one group means a
    shared kernel, several mean an additive combination with per-group
    signal variance and lengthscales.  With ARD each group carries one
    lengthscale per input, otherwise a single shared lengthscale.
    """

    base: str
    ard: bool
    groups: tuple[tuple[int, ...], ...]
    signal_variance: tuple[float, ...]
    lengthscales: tuple[tuple[float, ...], ...]
    coregional: tuple[CoregionalBlock, ...] = ()

    def __post_init__(self):
        if self.base not in BASES:
            raise ValidationError(f"unknown base kernel {self.base!r}")
        if not self.groups or any(len(g) == 0 for g in self.groups):
            raise ValidationError("each kernel group needs at least one input")
        flat = sorted(i for g in self.groups for i in g)
        if flat != list(range(len(flat))):
            raise ValidationError("kernel groups must partition the numeric inputs")
        if len(self.signal_variance) != len(self.groups):
            raise ValidationError("one signal variance per group required")
        if any(v <= 0 for v in self.signal_variance):
            raise ValidationError("signal variances must be strictly positive")
        if len(self.lengthscales) != len(self.groups):
            raise ValidationError("one lengthscale tuple per group required")
        for g, ls in zip(self.groups, self.lengthscales):
            expected = len(g) if self.ard else 1
            if len(ls) != expected:
                raise ValidationError(
                    f"group {g} expects {expected} lengthscale(s), got {len(ls)}"
                )
            if any(l <= 0 for l in ls):
                raise ValidationError("lengthscales must be strictly positive")

    @property
    def n_inputs(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def group_lengthscales(self, g: int) -> np.ndarray:
        """Per-coordinate lengthscales of group g (broadcast when not ARD)."""
        ls = np.asarray(self.lengthscales[g])
        if not self.ard:
            ls = np.full(len(self.groups[g]), ls[0])
        return ls


def default_spec(
    base: str,
    ard: bool,
    n_inputs: int,
    groups: tuple[tuple[int, ...], ...] | None = None,
    level_counts: tuple[int, ...] = (),
    coregional_names: tuple[str, ...] = (),
) -> KernelSpec:
    """Neutral starting values: unit variance, mid-range lengthscales,
    half-strength coregional mixing."""
    if groups is None:
        groups = (tuple(range(n_inputs)),)
    lengthscales = tuple(
        tuple(0.3 for _ in (g if ard else (0,))) for g in groups
    )
    if not coregional_names:
        coregional_names = tuple(f"cat{i}" for i in range(len(level_counts)))
    blocks = tuple(
        CoregionalBlock(name, (0.5,) * n, (0.5,) * n)
        for name, n in zip(coregional_names, level_counts)
    )
    return KernelSpec(
        base=base,
        ard=ard,
        groups=groups,
        signal_variance=(1.0,) * len(groups),
        lengthscales=lengthscales,
        coregional=blocks,
    )


def _base_form(base: str, sq_dist: np.ndarray, variance: float) -> np.ndarray:
    if base == "matern52":
        r = np.sqrt(np.maximum(sq_dist, 0.0))
        return variance * (1.0 + SQRT5 * r + (5.0 / 3.0) * sq_dist) * np.exp(-SQRT5 * r)
    return variance * np.exp(-0.5 * sq_dist)


def _pack(points) -> tuple[np.ndarray, np.ndarray]:
    """Normalize a point collection into (U, L) arrays.

    Accepts an (n, d) array, a (U, L) pair of arrays, a list of unit
    vectors, or a list of (unit-vector, level-indices) pairs.
    """
    if isinstance(points, np.ndarray):
        U = np.atleast_2d(np.asarray(points, dtype=float))
        return U, np.zeros((U.shape[0], 0), dtype=int)
    if (
        isinstance(points, tuple)
        and len(points) == 2
        and isinstance(points[0], np.ndarray)
        and points[0].ndim == 2
    ):
        U = np.asarray(points[0], dtype=float)
        if points[1] is None:
            return U, np.zeros((U.shape[0], 0), dtype=int)
        L = np.asarray(points[1], dtype=int)
        if L.ndim != 2:
            cols = L.shape[0] // U.shape[0] if U.shape[0] else 0
            L = L.reshape(U.shape[0], cols)
        return U, L
    rows, levels = [], []
    for p in points:
        if isinstance(p, tuple) and len(p) == 2 and not np.isscalar(p[1]):
            rows.append(np.asarray(p[0], dtype=float))
            levels.append(np.asarray(p[1], dtype=int))
        else:
            rows.append(np.asarray(p, dtype=float))
            levels.append(np.zeros(0, dtype=int))
    return np.stack(rows), np.stack(levels)


def cov_matrix(
    spec: KernelSpec,
    U1: np.ndarray,
    L1: np.ndarray | None = None,
    U2: np.ndarray | None = None,
    L2: np.ndarray | None = None,
) -> np.ndarray:
    """Cross-covariance of two point sets under the full configured kernel."""
    U1 = np.atleast_2d(U1)
    sym = U2 is None
    U2 = U1 if sym else np.atleast_2d(U2)
    if U1.shape[1] != spec.n_inputs or U2.shape[1] != spec.n_inputs:
        raise ValidationError(
            f"points have {U1.shape[1]}/{U2.shape[1]} coordinates, kernel expects {spec.n_inputs}"
        )
    total = np.zeros((U1.shape[0], U2.shape[0]))
    for g in range(spec.n_groups):
        idx = list(spec.groups[g])
        ls = spec.group_lengthscales(g)
        diff = (U1[:, None, idx] - U2[None, :, idx]) / ls
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        total += _base_form(spec.base, sq, spec.signal_variance[g])
    if spec.coregional:
        if L1 is None:
            L1 = np.zeros((U1.shape[0], len(spec.coregional)), dtype=int)
        L2 = L1 if sym else (
            np.zeros((U2.shape[0], len(spec.coregional)), dtype=int) if L2 is None else L2
        )
        for c, block in enumerate(spec.coregional):
            B = block.matrix()
            _check_levels(L1[:, c], block)
            _check_levels(L2[:, c], block)
            total *= B[np.ix_(L1[:, c], L2[:, c])]
    return total


def cov_diag(spec: KernelSpec, U: np.ndarray, L: np.ndarray | None = None) -> np.ndarray:
    """Prior variance k(x, x) at each point."""
    U = np.atleast_2d(U)
    diag = np.full(U.shape[0], float(sum(spec.signal_variance)))
    if spec.coregional:
        if L is None:
            L = np.zeros((U.shape[0], len(spec.coregional)), dtype=int)
        for c, block in enumerate(spec.coregional):
            B = block.matrix()
            _check_levels(L[:, c], block)
            diag = diag * B[L[:, c], L[:, c]]
    return diag


def _check_levels(idx: np.ndarray, block: CoregionalBlock) -> None:
    if idx.size and (idx.min() < 0 or idx.max() >= block.n_levels):
        raise ValidationError(
            f"coregional dimension {block.name!r}: level index out of range 0..{block.n_levels - 1}"
        )


def _require_same_dim(u: np.ndarray, v: np.ndarray, spec: KernelSpec) -> None:
    if u.shape != v.shape or u.shape[-1] != spec.n_inputs:
        raise ValidationError(
            f"points of dimension {u.shape[-1]}/{v.shape[-1]} do not match kernel inputs "
            f"({spec.n_inputs})"
        )


def matern52(u: np.ndarray, v: np.ndarray, spec: KernelSpec) -> float:
    """Matern-5/2 value between two unit vectors under group-0 hyperparameters."""
    u, v = np.atleast_1d(np.asarray(u, float)), np.atleast_1d(np.asarray(v, float))
    _require_same_dim(u, v, spec)
    ls = spec.group_lengthscales(0) if spec.n_groups == 1 else None
    if ls is None:
        raise ValidationError("matern52 expects a shared (single-group) kernel spec")
    sq = float(np.sum(((u - v) / ls) ** 2))
    return float(_base_form("matern52", np.asarray(sq), spec.signal_variance[0]))


def rbf(u: np.ndarray, v: np.ndarray, spec: KernelSpec) -> float:
    """Squared-exponential value between two unit vectors (group 0)."""
    u, v = np.atleast_1d(np.asarray(u, float)), np.atleast_1d(np.asarray(v, float))
    _require_same_dim(u, v, spec)
    if spec.n_groups != 1:
        raise ValidationError("rbf expects a shared (single-group) kernel spec")
    sq = float(np.sum(((u - v) / spec.group_lengthscales(0)) ** 2))
    return float(_base_form("rbf", np.asarray(sq), spec.signal_variance[0]))


def additive_cov(u: np.ndarray, v: np.ndarray, spec: KernelSpec) -> float:
    """Sum of the base kernel over the declared input groups."""
    u, v = np.atleast_1d(np.asarray(u, float)), np.atleast_1d(np.asarray(v, float))
    _require_same_dim(u, v, spec)
    total = 0.0
    for g in range(spec.n_groups):
        idx = list(spec.groups[g])
        sq = float(np.sum(((u[idx] - v[idx]) / spec.group_lengthscales(g)) ** 2))
        total += float(_base_form(spec.base, np.asarray(sq), spec.signal_variance[g]))
    return total


def icm_cov(p, q, spec: KernelSpec) -> float:
    """Coregionalized covariance between (unit-vector, level-indices) pairs.

    Equals prod_c B_c[level_p, level_q] times the base (shared or additive)
    covariance, the entrywise form of the Kronecker product kernel.
    """
    u, lp = p
    v, lq = q
    value = additive_cov(u, v, spec)
    lp = np.atleast_1d(np.asarray(lp, dtype=int))
    lq = np.atleast_1d(np.asarray(lq, dtype=int))
    if len(lp) != len(spec.coregional) or len(lq) != len(spec.coregional):
        raise ValidationError(
            f"expected {len(spec.coregional)} level indices per point"
        )
    for c, block in enumerate(spec.coregional):
        _check_levels(lp[c : c + 1], block)
        _check_levels(lq[c : c + 1], block)
        value *= block.matrix()[lp[c], lq[c]]
    return float(value)


def kernel_matrix(points, spec: KernelSpec) -> np.ndarray:
    """Gram matrix of the configured covariance; symmetric by construction."""
    U, L = _pack(points)
    if U.shape[0] == 0:
        raise ValidationError("kernel matrix needs at least one point")
    return cov_matrix(spec, U, L)
