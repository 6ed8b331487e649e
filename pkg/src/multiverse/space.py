"""Search-space declaration and coordinate transforms.

A search space is an ordered list of dimensions.  Numeric dimensions map
to the unit hypercube (linearly, or affinely in log10/log2 coordinates);
categorical dimensions stay outside the cube and travel as level indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .quasirandom import SobolSequence, substream_rng

NUMERIC_KINDS = ("continuous-linear", "continuous-log10", "integer-log2")
KINDS = NUMERIC_KINDS + ("categorical",)


@dataclass(frozen=True)
class Dimension:
    """One researcher decision: a named numeric range or a set of levels."""

    name: str
    kind: str
    lower: float | None = None
    upper: float | None = None
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"dimension {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.levels:
                raise ValidationError(f"dimension {self.name!r}: categorical needs levels")
            if len(set(self.levels)) != len(self.levels):
                raise ValidationError(f"dimension {self.name!r}: duplicate levels")
            return
        if self.lower is None or self.upper is None:
            raise ValidationError(f"dimension {self.name!r}: numeric bounds required")
        if not self.lower < self.upper:
            raise ValidationError(
                f"dimension {self.name!r}: lower {self.lower} must be < upper {self.upper}"
            )
        if self.kind == "continuous-log10" and self.lower <= 0:
            raise ValidationError(f"dimension {self.name!r}: log10 bounds must be positive")
        if self.kind == "integer-log2":
            for bound in (self.lower, self.upper):
                exp = math.log2(bound)
                if bound <= 0 or abs(exp - round(exp)) > 1e-9:
                    raise ValidationError(
                        f"dimension {self.name!r}: log2 bounds must be exact powers of two"
                    )

    @property
    def is_numeric(self) -> bool:
        return self.kind != "categorical"

    def to_unit(self, value) -> float:
        """Map a native value into [0, 1]."""
        if self.kind == "continuous-linear":
            lo, hi = self.lower, self.upper
            x = float(value)
        elif self.kind == "continuous-log10":
            lo, hi = math.log10(self.lower), math.log10(self.upper)
            if value <= 0:
                raise ValidationError(f"dimension {self.name!r}: value {value} not positive")
            x = math.log10(value)
        elif self.kind == "integer-log2":
            lo, hi = math.log2(self.lower), math.log2(self.upper)
            if value <= 0:
                raise ValidationError(f"dimension {self.name!r}: value {value} not positive")
            x = math.log2(value)
        else:
            raise ValidationError(f"dimension {self.name!r}: categorical has no unit coordinate")
        u = (x - lo) / (hi - lo)
        if not -1e-9 <= u <= 1 + 1e-9:
            raise ValidationError(
                f"dimension {self.name!r}: value {value} outside bounds "
                f"[{self.lower}, {self.upper}]"
            )
        return min(max(u, 0.0), 1.0)

    def from_unit(self, u: float):
        """Map a unit coordinate back to native units."""
        if not 0.0 <= u <= 1.0:
            raise ValidationError(f"dimension {self.name!r}: unit coordinate {u} outside [0,1]")
        if self.kind == "continuous-linear":
            return self.lower + u * (self.upper - self.lower)
        if self.kind == "continuous-log10":
            lo, hi = math.log10(self.lower), math.log10(self.upper)
            return 10.0 ** (lo + u * (hi - lo))
        if self.kind == "integer-log2":
            lo, hi = math.log2(self.lower), math.log2(self.upper)
            # round half up in log2 coordinates, deterministic and order preserving
            exp = math.floor(lo + u * (hi - lo) + 0.5)
            return int(2 ** int(exp))
        raise ValidationError(f"dimension {self.name!r}: categorical has no unit coordinate")

    def level_index(self, label: str) -> int:
        try:
            return self.levels.index(label)
        except ValueError:
            raise ValidationError(
                f"dimension {self.name!r}: unknown level {label!r} (have {list(self.levels)})"
            ) from None


@dataclass(frozen=True)
class SearchSpace:
    """Ordered dimensions plus the seed that fixes design reproducibility."""

    dimensions: tuple[Dimension, ...]
    seed: int = 0

    def __post_init__(self):
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise ValidationError("dimension names must be unique")
        if not any(d.is_numeric for d in self.dimensions):
            raise ValidationError("search space needs at least one numeric dimension")
        if self.seed < 0:
            raise ValidationError("seed must be a non-negative integer")

    @property
    def numeric(self) -> tuple[Dimension, ...]:
        return tuple(d for d in self.dimensions if d.is_numeric)

    @property
    def categorical(self) -> tuple[Dimension, ...]:
        return tuple(d for d in self.dimensions if not d.is_numeric)

    @property
    def n_numeric(self) -> int:
        return len(self.numeric)

    def dimension(self, name: str) -> Dimension:
        for d in self.dimensions:
            if d.name == name:
                return d
        raise ValidationError(f"unknown dimension {name!r}")

    def numeric_index(self, name: str) -> int:
        for i, d in enumerate(self.numeric):
            if d.name == name:
                return i
        raise ValidationError(f"{name!r} is not a numeric dimension")


@dataclass(frozen=True)
class Configuration:
    """One point of the multiverse, in native units keyed by dimension name."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.values[name]


def validate_config(space: SearchSpace, config: Configuration) -> None:
    missing = [d.name for d in space.dimensions if d.name not in config.values]
    if missing:
        raise ValidationError(f"configuration missing dimensions: {missing}")
    extra = [k for k in config.values if all(d.name != k for d in space.dimensions)]
    if extra:
        raise ValidationError(f"configuration has unknown dimensions: {extra}")
    for dim in space.dimensions:
        value = config.values[dim.name]
        if dim.is_numeric:
            dim.to_unit(value)  # raises on out-of-bounds
        else:
            dim.level_index(value)


def to_unit(space: SearchSpace, config: Configuration) -> tuple[np.ndarray, np.ndarray]:
    """Unit-cube coordinates of the numeric dims plus categorical level indices."""
    validate_config(space, config)
    u = np.array([d.to_unit(config.values[d.name]) for d in space.numeric])
    levels = np.array(
        [d.level_index(config.values[d.name]) for d in space.categorical], dtype=int
    )
    return u, levels


def from_unit(space: SearchSpace, u: np.ndarray, levels: np.ndarray | None = None) -> Configuration:
    """Inverse of :func:`to_unit` up to integer rounding."""
    u = np.asarray(u, dtype=float)
    if u.shape != (space.n_numeric,):
        raise ValidationError(
            f"unit vector has shape {u.shape}, expected ({space.n_numeric},)"
        )
    cats = space.categorical
    if levels is None:
        levels = np.zeros(len(cats), dtype=int)
    levels = np.asarray(levels, dtype=int)
    if levels.shape != (len(cats),):
        raise ValidationError(f"level indices have shape {levels.shape}, expected ({len(cats)},)")
    values = {}
    for dim, coord in zip(space.numeric, u):
        values[dim.name] = dim.from_unit(float(coord))
    for dim, idx in zip(cats, levels):
        if not 0 <= idx < len(dim.levels):
            raise ValidationError(f"dimension {dim.name!r}: level index {idx} out of range")
        values[dim.name] = dim.levels[idx]
    return Configuration(values)


def stratified_levels(space: SearchSpace, n: int, seed: int | None = None) -> np.ndarray:
    """Level indices for the initial design: each level of each categorical
    dimension appears floor(n/L) or ceil(n/L) times, order fixed by the seed."""
    cats = space.categorical
    root = space.seed if seed is None else seed
    out = np.zeros((n, len(cats)), dtype=int)
    for j, dim in enumerate(cats):
        n_levels = len(dim.levels)
        cycled = np.array([i % n_levels for i in range(n)], dtype=int)
        rng = substream_rng(root, "design", "levels", dim.name)
        out[:, j] = rng.permutation(cycled)
    return out


def sobol_design(space: SearchSpace, n: int, seed: int | None = None) -> list[Configuration]:
    """Initial design: first ``n`` Sobol points (index 0 skipped) mapped to
    native units, with categorical levels assigned by stratified round-robin."""
    if n < 1:
        raise ValidationError("design size must be >= 1")
    stream = SobolSequence(space.n_numeric, skip=1)
    unit = stream.take(n)
    levels = stratified_levels(space, n, seed=seed)
    return [from_unit(space, unit[i], levels[i]) for i in range(n)]


def dimension_to_dict(dim: Dimension) -> dict:
    d = {"name": dim.name, "kind": dim.kind}
    if dim.kind == "categorical":
        d["levels"] = list(dim.levels)
    else:
        d["lower"], d["upper"] = dim.lower, dim.upper
    return d


def dimension_from_dict(d: dict) -> Dimension:
    if d["kind"] == "categorical":
        return Dimension(name=d["name"], kind="categorical", levels=tuple(d["levels"]))
    return Dimension(name=d["name"], kind=d["kind"], lower=d["lower"], upper=d["upper"])


def space_to_dict(space: SearchSpace) -> dict:
    return {
        "dimensions": [dimension_to_dict(d) for d in space.dimensions],
        "seed": space.seed,
    }


def space_from_dict(d: dict) -> SearchSpace:
    return SearchSpace(
        dimensions=tuple(dimension_from_dict(x) for x in d["dimensions"]),
        seed=int(d.get("seed", 0)),
    )
