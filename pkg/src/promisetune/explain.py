"""Post-run explanation: rules fitted by the best configurations and what they share."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .rules import INF, Constraint, Rule, RuleSet, canonicalize, fits
from .space import ConfigSpace, Sample, SampleSet

MAX_REGIONS = 256


@dataclass(frozen=True)
class ExplainConfig:
    k: float = 10.0  # percent of measured configurations taken as the top set
    min_hits: int = 1  # top configurations that must fit a rule for it to be explainable

    def __post_init__(self):
        if not 0 < self.k <= 100:
            raise ValueError("k must lie in (0, 100]")
        if self.min_hits < 1:
            raise ValueError("min_hits must be >= 1")


@dataclass(frozen=True)
class PromisingRegion:
    rule: Rule
    coverage: tuple  # (option index, number of rules covering the chosen cell)

    def to_json(self, space: ConfigSpace) -> dict:
        return {
            "rule": self.rule.to_json(space),
            "coverage": {space.options[o].name: c for o, c in self.coverage},
        }


@dataclass
class ExplanationReport:
    k: float
    n_rules: int
    explainable: RuleSet
    important_options: list  # (option name, rule count), most frequent first
    interactions: list  # ((name, name), rule count), most frequent first
    regions: list = field(default_factory=list)
    no_overlap: list = field(default_factory=list)  # options constrained but without a shared cell
    regions_truncated: bool = False

    def to_json(self, space: ConfigSpace) -> dict:
        return {
            "k": self.k,
            "n_rules": self.n_rules,
            "explainable_rules": self.explainable.to_json(space),
            "important_options": [{"option": n, "rules": c} for n, c in self.important_options],
            "interactions": [{"options": list(pair), "rules": c} for pair, c in self.interactions],
            "promising_regions": [r.to_json(space) for r in self.regions],
            "no_common_overlap": list(self.no_overlap),
            "regions_truncated": self.regions_truncated,
        }

    def to_text(self, space: ConfigSpace) -> str:
        lines = [f"explainable rules at k={self.k:g}%: {len(self.explainable)} of {self.n_rules}"]
        for i, r in enumerate(self.explainable, start=1):
            lines.append(f"  R{i} {r.describe(space)}")
        lines.append("important options:")
        lines += [f"  {n}: {c}" for n, c in self.important_options] or ["  (none)"]
        lines.append("option interactions:")
        lines += [f"  {a} x {b}: {c}" for (a, b), c in self.interactions] or ["  (none)"]
        lines.append("promising regions:")
        for reg in self.regions:
            cov = ", ".join(f"{space.options[o].name}:{c}" for o, c in reg.coverage)
            lines.append(f"  {reg.rule.describe(space)} covered by {cov}")
        if not self.regions:
            lines.append("  (none)")
        if self.no_overlap:
            lines.append("no common overlap: " + ", ".join(self.no_overlap))
        if self.regions_truncated:
            lines.append(f"(region list truncated at {MAX_REGIONS})")
        return "\n".join(lines) + "\n"


def top_samples(samples: SampleSet | Iterable[Sample], k: float) -> list:
    """The ceil(k% * n) best samples; failed ones rank last, ties keep measurement order."""
    pool = list(samples)
    if not pool:
        raise ValueError("no measured samples")
    m = math.ceil(k / 100.0 * len(pool) - 1e-9)
    order = sorted(range(len(pool)), key=lambda i: (pool[i].failed, pool[i].performance))
    return [pool[i] for i in order[:max(m, 1)]]


def extract_explainable(rules: Sequence[Rule], samples, cfg: ExplainConfig = ExplainConfig()) -> RuleSet:
    """Rules fitted by at least ``cfg.min_hits`` of the top-k% measured configurations."""
    top = top_samples(samples, cfg.k)
    out = []
    for r in rules:
        hits = sum(1 for s in top if fits(s.config, r))
        if hits >= cfg.min_hits:
            out.append(r)
    return RuleSet(out)


def important_options(rules: Sequence[Rule], space: ConfigSpace) -> list:
    counts = [0] * len(space)
    for r in rules:
        for o in r.options:
            counts[o] += 1
    ranked = sorted((o for o in range(len(space)) if counts[o]), key=lambda o: (-counts[o], o))
    return [(space.options[o].name, counts[o]) for o in ranked]


def analyze_interactions(rules: Sequence[Rule], space: ConfigSpace | None = None) -> list:
    """Option pairs ranked by how many rules constrain both.

    Pairs are option names when ``space`` is given, option indices otherwise.
    """
    counts: dict = {}
    for r in rules:
        for a, b in itertools.combinations(sorted(r.options), 2):
            counts[(a, b)] = counts.get((a, b), 0) + 1
    ranked = sorted(counts, key=lambda ab: (-counts[ab], ab))
    if space is None:
        return [((a, b), counts[(a, b)]) for a, b in ranked]
    return [((space.options[a].name, space.options[b].name), counts[(a, b)]) for a, b in ranked]


def _cells(option: int, constraints: list, space: ConfigSpace) -> list:
    """Per-cell ``(constraint, count)`` for one option over the constraining rules."""
    o = space.options[option]
    if o.categorical:
        out = []
        for v in o.values().tolist():
            n = sum(1 for c in constraints if v in c.allowed)
            out.append((Constraint(option, allowed=frozenset({v})), n))
        return out
    cuts = {o.lo, o.hi + 1}
    for c in constraints:
        for b in (c.lo, c.hi):
            if b != -INF and b != INF and o.lo < b <= o.hi:
                cuts.add(int(b))
    cuts = sorted(cuts)
    out = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        n = sum(1 for c in constraints if c.lo <= lo and hi <= c.hi)
        out.append((Constraint(option, float(lo), float(hi)), n))
    return out


def most_common_overlaps(rules: Sequence[Rule], space: ConfigSpace) -> tuple[list, list, bool]:
    """Candidate promising regions from the cells covered by the most rules.

    Each option is cut at every constraint endpoint; a cell's count is the
    number of rules whose constraint on that option covers it (rules that
    leave the option free do not count). The maximal cells of each option are
    kept and crossed into regions, one region per combination of tied cells.
    An option constrained by several rules whose cells are never shared
    (maximum count 1) has no common overlap and stays unbounded, unless no
    option has a shared cell at all.

    Returns ``(regions, options without a common overlap, truncated)``.
    """
    if len(rules) == 0:
        return [], [], False
    per_option = {}
    no_overlap = []
    for o in range(len(space)):
        cons = [c for r in rules for c in r.constraints if c.option == o]
        if not cons:
            continue
        cells = _cells(o, cons, space)
        top = max(n for _, n in cells)
        best = [(c, n) for c, n in cells if n == top]
        if top <= 1 and len(cons) > 1:
            no_overlap.append(o)
        per_option[o] = best
    chosen = {o: v for o, v in per_option.items() if o not in no_overlap}
    if not chosen:
        chosen = per_option
        no_overlap = []
    options = sorted(chosen)
    regions = []
    truncated = False
    for combo in itertools.product(*(chosen[o] for o in options)):
        if len(regions) == MAX_REGIONS:
            truncated = True
            break
        rule = canonicalize(Rule(tuple(c for c, _ in combo)), space)
        regions.append(PromisingRegion(rule, tuple((o, n) for o, (_, n) in zip(options, combo))))
    return regions, [space.options[o].name for o in no_overlap], truncated


def explain(rules: Sequence[Rule], samples, space: ConfigSpace, cfg: ExplainConfig = ExplainConfig()) -> ExplanationReport:
    """Explainable rules at ``cfg.k`` plus option importance, interactions and regions."""
    expl = extract_explainable(rules, samples, cfg)
    regions, no_overlap, truncated = most_common_overlaps(expl, space)
    return ExplanationReport(
        cfg.k,
        len(rules),
        expl,
        important_options(expl, space),
        analyze_interactions(expl, space),
        regions,
        no_overlap,
        truncated,
    )
