"""Rules: conjunctions of per-option constraints bounding a landscape region.

Integer options are constrained by half-open intervals ``[lo, hi)`` with
integral bounds (``-inf``/``inf`` when open). Binary and enumerated options are
constrained by the set of admissible values, written ``==``/``!=``/``in``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .forest import Split
from .space import ConfigSpace, SampleSet

INF = math.inf


class SchemaError(ValueError):
    pass


class EmptyFeaturesError(ValueError):
    pass


@dataclass(frozen=True)
class Constraint:
    option: int
    lo: float = -INF
    hi: float = INF
    allowed: frozenset | None = None

    @property
    def categorical(self) -> bool:
        return self.allowed is not None

    def satisfied(self, v) -> bool:
        if self.allowed is not None:
            return int(v) in self.allowed
        return self.lo <= v < self.hi

    def bounds(self, space: ConfigSpace) -> tuple[int, int]:
        """Inclusive integer range admitted within the option's domain."""
        o = space.options[self.option]
        lo = o.lo if self.lo == -INF else max(o.lo, int(self.lo))
        hi = o.hi if self.hi == INF else min(o.hi, int(self.hi) - 1)
        return lo, hi

    def admitted(self, space: ConfigSpace) -> np.ndarray:
        if self.allowed is not None:
            return np.array(sorted(self.allowed), np.int64)
        lo, hi = self.bounds(space)
        return np.arange(lo, hi + 1, dtype=np.int64)

    def to_json(self, space: ConfigSpace) -> list[dict]:
        o = space.options[self.option]
        if self.allowed is not None:
            vals = sorted(self.allowed)
            rest = [v for v in o.values().tolist() if v not in self.allowed]
            if len(vals) == 1:
                return [{"option": o.name, "op": "==", "value": _jsonv(o, vals[0])}]
            if len(rest) == 1:
                return [{"option": o.name, "op": "!=", "value": _jsonv(o, rest[0])}]
            return [{"option": o.name, "op": "in", "values": [_jsonv(o, v) for v in vals]}]
        out = []
        if self.lo != -INF:
            out.append({"option": o.name, "op": ">=", "value": int(self.lo)})
        if self.hi != INF:
            out.append({"option": o.name, "op": "<", "value": int(self.hi)})
        return out

    def describe(self, space: ConfigSpace) -> str:
        o = space.options[self.option]
        if self.allowed is not None:
            vals = sorted(self.allowed)
            rest = [v for v in o.values().tolist() if v not in self.allowed]
            if len(vals) == 1:
                return f"{o.name}={o.format_value(vals[0])}"
            if len(rest) == 1:
                return f"{o.name}!={o.format_value(rest[0])}"
            return f"{o.name} in {{{','.join(o.format_value(v) for v in vals)}}}"
        if self.lo == -INF:
            return f"{o.name}<{int(self.hi)}"
        if self.hi == INF:
            return f"{o.name}>={int(self.lo)}"
        return f"{int(self.lo)}<={o.name}<{int(self.hi)}"


def _jsonv(option, v):
    return option.labels[v] if option.kind == "enum" else int(v)


@dataclass(frozen=True)
class Rule:
    """Conjunction of constraints, at most one per option, sorted by option."""

    constraints: tuple = ()
    provenance: int | None = field(default=None, compare=False, hash=False)

    def __len__(self):
        return len(self.constraints)

    @property
    def options(self) -> list[int]:
        return [c.option for c in self.constraints]

    def constraint_for(self, option: int) -> Constraint | None:
        for c in self.constraints:
            if c.option == option:
                return c
        return None

    def admissible(self, space: ConfigSpace):
        """``(lows, highs, allowed)`` used by :func:`promisetune.space.draw`."""
        lows = space.lows.copy()
        highs = space.highs.copy()
        allowed = {}
        for c in self.constraints:
            if c.categorical:
                allowed[c.option] = c.admitted(space)
            else:
                lows[c.option], highs[c.option] = c.bounds(space)
        return lows, highs, allowed

    def satisfiable(self, space: ConfigSpace) -> bool:
        return all(c.admitted(space).size > 0 for c in self.constraints)

    def to_path(self) -> list[Split]:
        path = []
        for c in self.constraints:
            if c.categorical:
                continue
            if c.lo != -INF:
                path.append(Split(c.option, False, float(c.lo), False))
            if c.hi != INF:
                path.append(Split(c.option, False, float(c.hi), True))
        return path

    def to_json(self, space: ConfigSpace) -> list[dict]:
        return [item for c in self.constraints for item in c.to_json(space)]

    def describe(self, space: ConfigSpace) -> str:
        return "<" + ", ".join(c.describe(space) for c in self.constraints) + ">"


class RuleSet(tuple):
    """Ordered collection of structurally unique rules."""

    def __new__(cls, rules: Iterable[Rule] = ()):
        return super().__new__(cls, rules)

    def to_json(self, space: ConfigSpace) -> list:
        return [r.to_json(space) for r in self]

    @classmethod
    def from_json(cls, obj: list, space: ConfigSpace) -> "RuleSet":
        return cls(rule_from_json(r, space) for r in obj)


def _merge(space: ConfigSpace, option: int, lo, hi, allowed) -> Constraint | None:
    o = space.options[option]
    if allowed is not None:
        if not allowed:
            raise ValueError(f"contradictory constraints on {o.name}")
        if len(allowed) == o.cardinality:
            return None
        return Constraint(option, allowed=frozenset(allowed))
    lo = -INF if lo <= o.lo else lo
    hi = INF if hi > o.hi else hi
    eff_lo = o.lo if lo == -INF else lo
    eff_hi = o.hi if hi == INF else hi - 1
    if eff_lo > eff_hi:
        raise ValueError(f"contradictory constraints on {o.name}")
    if lo == -INF and hi == INF:
        return None
    return Constraint(option, lo, hi)


def canonicalize(path: Sequence, space: ConfigSpace, provenance: int | None = None) -> Rule:
    """Intersect the predicates of a path option by option into one rule.

    Accepts a list of :class:`~promisetune.forest.Split` or a :class:`Rule`.
    Numeric thresholds are snapped to integral half-open bounds
    (``x < 4.5`` becomes ``x < 5``), bounds implied by the option's domain
    are dropped, and constraints admitting the whole domain vanish.
    """
    if isinstance(path, Rule):
        base = {c.option: c for c in path.constraints}
        provenance = path.provenance if provenance is None else provenance
        path_items = path.to_path()
    else:
        base = {}
        path_items = path
    lo: dict[int, float] = {}
    hi: dict[int, float] = {}
    allowed: dict[int, set] = {o: set(c.allowed) for o, c in base.items() if c.categorical}
    for sp in path_items:
        o = sp.option
        if not 0 <= o < len(space):
            raise SchemaError(f"predicate references unknown option index {o}")
        opt = space.options[o]
        if sp.categorical != opt.categorical:
            raise SchemaError(f"predicate kind does not match option {opt.name}")
        if sp.categorical:
            cur = allowed.setdefault(o, set(opt.values().tolist()))
            v = int(sp.value)
            if sp.holds:
                cur &= {v}
            else:
                cur.discard(v)
        else:
            t = math.ceil(sp.value)
            if sp.holds:
                hi[o] = min(hi.get(o, INF), t)
            else:
                lo[o] = max(lo.get(o, -INF), t)
    constraints = []
    for o in sorted(set(lo) | set(hi) | set(allowed)):
        c = _merge(space, o, lo.get(o, -INF), hi.get(o, INF), allowed.get(o))
        if c is not None:
            constraints.append(c)
    return Rule(tuple(constraints), provenance)


def dedupe(rules: Iterable[Rule]) -> RuleSet:
    """Drop structural duplicates, keeping first occurrences in order."""
    seen = set()
    out = []
    for r in rules:
        if r not in seen:
            seen.add(r)
            out.append(r)
    return RuleSet(out)


def rules_from_paths(paths, space: ConfigSpace, provenance: int | None = None) -> RuleSet:
    return dedupe(canonicalize(p, space, provenance) for p in paths)


def fits(config, rule: Rule) -> bool:
    """True iff the configuration satisfies every constraint of ``rule``."""
    return all(c.satisfied(config[c.option]) for c in rule.constraints)


def _encode(rules: Sequence[Rule]):
    c_rule, c_opt, c_lo, c_hi, c_start, c_len, vals = [], [], [], [], [], [], []
    for k, r in enumerate(rules):
        for c in r.constraints:
            c_rule.append(k)
            c_opt.append(c.option)
            if c.categorical:
                c_lo.append(0.0)
                c_hi.append(0.0)
                c_start.append(len(vals))
                c_len.append(len(c.allowed))
                vals.extend(sorted(c.allowed))
            else:
                c_lo.append(c.lo)
                c_hi.append(c.hi)
                c_start.append(0)
                c_len.append(-1)
    return (
        np.array(c_rule, np.int64),
        np.array(c_opt, np.int64),
        np.array(c_lo, np.float64),
        np.array(c_hi, np.float64),
        np.array(c_start, np.int64),
        np.array(c_len, np.int64),
        np.array(vals, np.int64),
    )


def fits_matrix(X, rules: Sequence[Rule]) -> np.ndarray:
    """Binary matrix with entry ``(i, k) = fits(X[i], rules[k])``."""
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, np.int64)))
    return _kernels.fits_matrix(X, *_encode(rules), len(rules))


@dataclass(frozen=True)
class FeaturizedSet:
    """Rule-feature matrix (samples x rules) with the aligned performance column."""

    matrix: np.ndarray
    performance: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_rules(self) -> int:
        return self.matrix.shape[1]

    def data(self) -> np.ndarray:
        """Float matrix with rule columns followed by the performance column."""
        return np.column_stack([self.matrix.astype(np.float64), self.performance])


def featurize(samples: SampleSet | tuple, rules: Sequence[Rule]) -> FeaturizedSet:
    """Re-encode measured configurations as rule fit/violate indicators.

    ``samples`` is a :class:`SampleSet` (failed measurements are skipped) or
    an ``(X, y)`` pair.
    """
    if len(rules) == 0:
        raise EmptyFeaturesError("no rules to featurize")
    X, y = samples.arrays() if isinstance(samples, SampleSet) else samples
    return FeaturizedSet(fits_matrix(X, rules), np.asarray(y, np.float64).copy())


_OPS = ("<", ">=", "==", "!=", "in")


def rule_from_json(items: list[dict], space: ConfigSpace) -> Rule:
    """Parse the JSON rule form (a list of ``{option, op, value(s)}`` items)."""
    path = []
    extra: dict[int, set] = {}
    for it in items:
        try:
            o = space.index(it["option"])
        except KeyError:
            raise SchemaError(f"unknown option {it.get('option')!r}") from None
        op = it.get("op")
        if op not in _OPS:
            raise SchemaError(f"unknown operator {op!r}")
        opt = space.options[o]
        if op in ("<", ">="):
            if opt.categorical:
                raise SchemaError(f"interval constraint on unordered option {opt.name}")
            path.append(Split(o, False, float(it["value"]), op == "<"))
        elif op == "in":
            vals = {opt.parse_value(v) for v in it["values"]}
            extra[o] = extra.get(o, set(opt.values().tolist())) & vals
        else:
            if not opt.categorical:
                v = float(it["value"])
                if op == "==":
                    path += [Split(o, False, v, False), Split(o, False, v + 1, True)]
                    continue
                raise SchemaError(f"'!=' on integer option {opt.name}")
            path.append(Split(o, True, float(opt.parse_value(it["value"])), op == "=="))
    for o, vals in extra.items():
        for v in space.options[o].values().tolist():
            if v not in vals:
                path.append(Split(o, True, float(v), False))
    return canonicalize(path, space)
