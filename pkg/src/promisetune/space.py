"""Configuration spaces, configurations and measured-sample bookkeeping.

A configuration is a tuple of ints aligned with the space's option order:
binary options are 0/1, integer options carry their value and enumerated
options carry the index of their label.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

BINARY = "binary"
INT = "int"
ENUM = "enum"
KINDS = (BINARY, INT, ENUM)

# consecutive duplicate draws tolerated before a space counts as exhausted
MAX_REDRAWS = 1000

Configuration = tuple


class InvalidSpaceError(ValueError):
    pass


class EmptyRegionError(ValueError):
    pass


class BudgetExceededError(RuntimeError):
    pass


class SpaceExhaustedWarning(UserWarning):
    pass


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class OptionDef:
    name: str
    kind: str
    lo: int = 0
    hi: int = 1
    labels: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpaceError(f"unknown option kind {self.kind!r} for {self.name!r}")
        if self.kind == BINARY:
            object.__setattr__(self, "lo", 0)
            object.__setattr__(self, "hi", 1)
        elif self.kind == INT:
            if int(self.lo) != self.lo or int(self.hi) != self.hi:
                raise InvalidSpaceError(f"{self.name}: integer bounds required")
            object.__setattr__(self, "lo", int(self.lo))
            object.__setattr__(self, "hi", int(self.hi))
            if self.lo > self.hi:
                raise InvalidSpaceError(f"{self.name}: lo={self.lo} > hi={self.hi}")
        else:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) < 2 or len(set(labels)) != len(labels):
                raise InvalidSpaceError(f"{self.name}: enumerated options need >= 2 distinct labels")
            object.__setattr__(self, "labels", labels)
            object.__setattr__(self, "lo", 0)
            object.__setattr__(self, "hi", len(labels) - 1)

    @property
    def categorical(self) -> bool:
        """Binary and enumerated options are unordered; splits on them are equalities."""
        return self.kind != INT

    @property
    def cardinality(self) -> int:
        return self.hi - self.lo + 1

    def values(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1, dtype=np.int64)

    def contains(self, v) -> bool:
        return self.lo <= v <= self.hi and int(v) == v

    def format_value(self, v) -> str:
        if self.kind == ENUM:
            return self.labels[int(v)]
        return str(int(v))

    def parse_value(self, text):
        """Inverse of :meth:`format_value` (labels for enums, ints otherwise)."""
        if self.kind == ENUM:
            text = str(text)
            if text in self.labels:
                return self.labels.index(text)
            raise ValueError(f"{self.name}: unknown label {text!r}")
        v = float(text)
        if not self.contains(v):
            raise ValueError(f"{self.name}: value {text!r} outside domain")
        return int(v)

    def to_json(self) -> dict:
        if self.kind == BINARY:
            return {"name": self.name, "kind": BINARY}
        if self.kind == INT:
            return {"name": self.name, "kind": INT, "lo": self.lo, "hi": self.hi}
        return {"name": self.name, "kind": ENUM, "labels": list(self.labels)}

    @classmethod
    def from_json(cls, obj: dict) -> "OptionDef":
        try:
            kind = obj["kind"]
            if kind == INT:
                return cls(obj["name"], INT, obj["lo"], obj["hi"])
            if kind == ENUM:
                return cls(obj["name"], ENUM, labels=tuple(obj["labels"]))
            return cls(obj["name"], kind)
        except KeyError as exc:
            raise InvalidSpaceError(f"option definition missing field {exc}") from None


@dataclass(frozen=True)
class ConfigSpace:
    """Ordered option definitions; the objective is always minimized."""

    options: tuple
    kinds: np.ndarray = field(init=False, repr=False, compare=False)
    lows: np.ndarray = field(init=False, repr=False, compare=False)
    highs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        opts = tuple(self.options)
        if not opts:
            raise InvalidSpaceError("configuration space has no options")
        names = [o.name for o in opts]
        if len(set(names)) != len(names):
            raise InvalidSpaceError("option names must be unique")
        object.__setattr__(self, "options", opts)
        object.__setattr__(self, "kinds", np.array([1 if o.categorical else 0 for o in opts], np.int8))
        object.__setattr__(self, "lows", np.array([o.lo for o in opts], np.int64))
        object.__setattr__(self, "highs", np.array([o.hi for o in opts], np.int64))

    def __len__(self):
        return len(self.options)

    def __iter__(self) -> Iterator[OptionDef]:
        return iter(self.options)

    @property
    def names(self) -> list[str]:
        return [o.name for o in self.options]

    @property
    def size(self) -> int:
        return math.prod(o.cardinality for o in self.options)

    def index(self, name: str) -> int:
        for i, o in enumerate(self.options):
            if o.name == name:
                return i
        raise KeyError(name)

    def validate(self, config: Sequence) -> Configuration:
        if len(config) != len(self.options):
            raise ValueError(f"configuration has {len(config)} values, space has {len(self.options)} options")
        for o, v in zip(self.options, config):
            if not o.contains(v):
                raise ValueError(f"{o.name}: value {v!r} outside domain")
        return tuple(int(v) for v in config)

    def enumerate(self) -> np.ndarray:
        """Every configuration as rows of an int matrix (small spaces only)."""
        if self.size > 2 ** 22:
            raise ValueError(f"space of size {self.size} is too large to enumerate")
        grids = np.meshgrid(*[o.values() for o in self.options], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def decode(self, config: Sequence) -> dict:
        return {o.name: (o.labels[v] if o.kind == ENUM else int(v)) for o, v in zip(self.options, config)}

    def to_json(self) -> dict:
        return {"options": [o.to_json() for o in self.options]}

    @classmethod
    def from_json(cls, obj: dict) -> "ConfigSpace":
        if not isinstance(obj, dict) or "options" not in obj:
            raise InvalidSpaceError('space definition must be an object with an "options" list')
        return cls(tuple(OptionDef.from_json(o) for o in obj["options"]))

    @classmethod
    def load(cls, path) -> "ConfigSpace":
        return cls.from_json(json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))


def draw(space: ConfigSpace, count: int, rng: np.random.Generator, region=None) -> np.ndarray:
    """Draw ``count`` configurations uniformly from ``region`` (whole space if None).

    ``region`` is anything with an ``admissible(space)`` method returning
    ``(lows, highs, allowed)`` where ``allowed`` maps an option index to the
    array of admissible categorical values. Duplicates are not filtered.
    """
    if region is None:
        lows, highs, allowed = space.lows, space.highs, {}
    else:
        lows, highs, allowed = region.admissible(space)
    d = len(space)
    out = np.empty((count, d), np.int64)
    for o in range(d):
        if o in allowed:
            vals = allowed[o]
            if vals.size == 0:
                raise EmptyRegionError(f"no admissible value for {space.options[o].name}")
            out[:, o] = vals[rng.integers(0, vals.size, size=count)]
        else:
            if lows[o] > highs[o]:
                raise EmptyRegionError(f"empty range for {space.options[o].name}")
            out[:, o] = rng.integers(lows[o], highs[o] + 1, size=count)
    return out


def random_sample(space: ConfigSpace, count: int, seed=None, exclude: Iterable = ()) -> list:
    """Draw up to ``count`` distinct configurations uniformly at random.

    Duplicates (and anything in ``exclude``) are re-drawn. After
    ``MAX_REDRAWS`` consecutive rejected draws the space is treated as
    exhausted: fewer configurations are returned and a
    :class:`SpaceExhaustedWarning` is emitted.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = as_rng(seed)
    seen = set(exclude)
    out = []
    misses = 0
    while len(out) < count:
        batch = draw(space, max(count - len(out), 1), rng)
        for row in batch:
            c = tuple(int(v) for v in row)
            if c in seen:
                misses += 1
                if misses >= MAX_REDRAWS:
                    break
                continue
            misses = 0
            seen.add(c)
            out.append(c)
            if len(out) == count:
                break
        if misses >= MAX_REDRAWS:
            warnings.warn(
                f"space exhausted after {len(out)} distinct configurations", SpaceExhaustedWarning, stacklevel=2
            )
            break
    return out


def sample_within_rule(space: ConfigSpace, rule, seed=None) -> Configuration:
    """One configuration drawn uniformly from the region bounded by ``rule``."""
    row = draw(space, 1, as_rng(seed), region=rule)[0]
    return tuple(int(v) for v in row)


@dataclass(frozen=True)
class Sample:
    config: Configuration
    performance: float
    failed: bool = False

    def __post_init__(self):
        if self.failed:
            object.__setattr__(self, "performance", math.inf)
        elif not math.isfinite(self.performance):
            raise ValueError(f"performance must be finite, got {self.performance!r}")


class SampleSet:
    """Measured samples with budget accounting.

    ``budget`` is B, ``initial_size`` is s and ``consumed`` is b (measurements
    made after initialization). Redundant configurations are rejected without
    touching the budget.
    """

    def __init__(self, space: ConfigSpace, budget: int, initial_size: int):
        if initial_size > budget:
            raise ValueError("initial size exceeds budget")
        self.space = space
        self.budget = budget
        self.initial_size = initial_size
        self.consumed = 0
        self.n_initial = 0
        self.samples: list[Sample] = []
        self._seen: set = set()

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __contains__(self, config) -> bool:
        return tuple(config) in self._seen

    @property
    def configs(self) -> set:
        """Measured configurations (read-only view)."""
        return self._seen

    @property
    def remaining(self) -> int:
        return self.budget - self.initial_size - self.consumed

    def add(self, config, performance: float, *, initial: bool = False, failed: bool = False) -> bool:
        """Record a measurement; returns False (and consumes nothing) if redundant."""
        config = tuple(int(v) for v in config)
        if config in self._seen:
            return False
        if initial:
            if self.n_initial >= self.initial_size:
                raise BudgetExceededError("initial sample size exhausted")
        elif self.consumed + self.initial_size >= self.budget:
            raise BudgetExceededError("tuning budget exhausted")
        self.samples.append(Sample(config, performance, failed))
        self._seen.add(config)
        if initial:
            self.n_initial += 1
        else:
            self.consumed += 1
        return True

    def arrays(self, finite_only: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """``(X, y)`` matrices; failed measurements are dropped by default."""
        rows = [s for s in self.samples if not (finite_only and s.failed)]
        X = np.array([s.config for s in rows], np.int64).reshape(len(rows), len(self.space))
        y = np.array([s.performance for s in rows], np.float64)
        return X, y

    def best(self) -> Sample | None:
        ok = [s for s in self.samples if not s.failed]
        if not ok:
            return self.samples[0] if self.samples else None
        return min(ok, key=lambda s: s.performance)
