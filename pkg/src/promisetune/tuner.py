"""Rule-guided Bayesian optimization loop and its baselines."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .causal import DEFAULT_CI, CausalReport, CiTestConfig, purify
from .forest import DEFAULT_TREES, RegressionForest, extract_paths, train_arrays
from .rules import Rule, RuleSet, featurize, rules_from_paths
from .space import ConfigSpace, Sample, SampleSet, as_rng, draw, random_sample

log = logging.getLogger(__name__)

INIT = "init"
FALLBACK = "fallback"
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ObjectiveError(RuntimeError):
    """A measurement that failed; the tuner records it and moves on."""


@dataclass(frozen=True)
class GkdeConfig:
    warmup: int = 10
    max_draws: int = 100
    threshold: float = 0.05


@dataclass(frozen=True)
class TunerConfig:
    budget: int = 100
    initial_size: int = 10
    leaf_param: int = 10
    tree_count: int = DEFAULT_TREES
    gkde: GkdeConfig = GkdeConfig()
    ci: CiTestConfig = DEFAULT_CI
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.initial_size < 1 or self.initial_size > self.budget:
            raise ValueError("need 1 <= initial_size <= budget")
        if self.leaf_param < 1:
            raise ValueError("leaf_param must be >= 1")


@dataclass(frozen=True)
class AcquisitionCandidate:
    config: tuple
    predicted_mean: float
    predicted_std: float
    ei: float
    source: int = -1  # index into the purified rules, -1 for the whole space


@dataclass(frozen=True)
class Trial:
    iteration: int
    sample: Sample
    source: str


@dataclass
class TunerResult:
    best_config: tuple
    best_performance: float
    history: list
    final_rules: RuleSet
    space: ConfigSpace
    causal_report: CausalReport | None = None
    final_rules_iteration: int | None = None
    evaluations: int = 0
    notes: list = field(default_factory=list)

    def trajectory(self) -> list[float]:
        """Best performance after each measurement."""
        best = math.inf
        out = []
        for t in self.history:
            best = min(best, t.sample.performance)
            out.append(best)
        return out


def expected_improvement(mean, std, p_best):
    """Closed-form expected improvement below ``p_best`` under a Gaussian predictive.

    Vectorized over ``mean``/``std``; zero spread degenerates to
    ``max(0, p_best - mean)``.
    """
    mean = np.asarray(mean, np.float64)
    std = np.asarray(std, np.float64)
    if np.any(std < 0):
        raise ValueError("std must be non-negative")
    gap = p_best - mean
    safe = np.where(std > 0, std, 1.0)
    with np.errstate(over="ignore"):
        z = gap / safe
        ei = gap * ndtr(z) + safe * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    ei = np.where(std > 0, ei, np.maximum(gap, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def improvement_probability(values, current_max: float) -> float:
    """Gaussian-KDE estimate of P(next value > current_max).

    Bandwidth follows Silverman's rule of thumb, ``1.06 * sd * m**-0.2``.
    A sample without spread puts all its mass at or below the maximum.
    """
    v = np.asarray(values, np.float64)
    m = v.size
    if m < 2:
        return 0.0
    sd = v.std(ddof=1)
    h = 1.06 * sd * m ** -0.2
    if not h > 0:
        return 0.0
    return float(ndtr((v - current_max) / h).mean())


def sample_rule_region(space: ConfigSpace, rule: Rule | None, forest: RegressionForest, p_best: float,
                       gkde: GkdeConfig = GkdeConfig(), seed=None, exclude=(), source: int = -1) -> list:
    """Draw and score candidates inside ``rule``'s region until GKDE says stop.

    Draws repeat configurations freely; repeats, and configurations in
    ``exclude`` (already measured), count as draws but yield no candidate.
    After ``gkde.warmup`` draws, sampling stops once the estimated chance of
    beating the region's best EI drops below ``gkde.threshold``, or at
    ``gkde.max_draws``.
    """
    rng = as_rng(seed)
    X = draw(space, gkde.max_draws, rng, region=rule)
    # most regions stop shortly after the warm-up, so score draws in chunks
    chunk = gkde.warmup + 6
    means = np.empty(X.shape[0])
    stds = np.empty(X.shape[0])
    eis = np.empty(X.shape[0])
    scored = 0
    seen = set()
    out = []
    vals = []
    for t in range(gkde.max_draws):
        if t == scored:
            hi = min(scored + chunk, X.shape[0])
            means[scored:hi], stds[scored:hi] = forest.predict_many(X[scored:hi])
            eis[scored:hi] = expected_improvement(means[scored:hi], stds[scored:hi], p_best)
            scored = hi
        c = tuple(int(v) for v in X[t])
        if c not in seen:
            seen.add(c)
            if c not in exclude:
                out.append(AcquisitionCandidate(c, float(means[t]), float(stds[t]), float(eis[t]), source))
                vals.append(float(eis[t]))
        if t + 1 > gkde.warmup:
            top = max(vals) if vals else 0.0
            if improvement_probability(vals, top) < gkde.threshold:
                break
    return out


def _measure(objective: Callable, config: tuple) -> tuple[float, bool]:
    try:
        value = float(objective(config))
    except ObjectiveError as exc:
        log.warning("measurement of %s failed: %s", config, exc)
        return math.inf, True
    if not math.isfinite(value):
        log.warning("measurement of %s returned %r", config, value)
        return math.inf, True
    return value, False


def _iteration_seeds(seed: int, it: int) -> list:
    return np.random.SeedSequence(entropy=seed, spawn_key=(1, it)).spawn(3)


def _initial(space, objective, cfg: TunerConfig, samples: SampleSet, history: list) -> None:
    init_ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0,))
    for c in random_sample(space, cfg.initial_size, np.random.default_rng(init_ss)):
        perf, failed = _measure(objective, c)
        samples.add(c, perf, initial=True, failed=failed)
        history.append(Trial(0, samples.samples[-1], INIT))


def _result(space, samples: SampleSet, history, rules, report, rules_it, notes) -> TunerResult:
    best = samples.best()
    return TunerResult(
        best.config if best else None,
        best.performance if best else math.inf,
        history,
        RuleSet(rules),
        space,
        report,
        rules_it,
        len(history),
        notes,
    )


def run(space: ConfigSpace, objective: Callable, cfg: TunerConfig = TunerConfig(), *, use_rules: bool = True) -> TunerResult:
    """Tune ``objective`` (minimized) within ``cfg.budget`` measurements.

    Each iteration learns rules from a forest with leaf parameter
    ``cfg.leaf_param``, purifies them causally, samples inside every purified
    region scored by expected improvement from a surrogate forest, and
    measures the single best candidate. Without purified rules the iteration
    samples the whole space instead, which is all ``use_rules=False`` ever does.
    """
    samples = SampleSet(space, cfg.budget, cfg.initial_size)
    history: list[Trial] = []
    notes: list[str] = []
    _initial(space, objective, cfg, samples, history)
    if len(samples) < cfg.initial_size:
        notes.append("space exhausted during initial sampling")
        return _result(space, samples, history, (), None, None, notes)

    rules: RuleSet = RuleSet()
    report = None
    rules_it = None
    it = 0
    while samples.consumed + samples.initial_size < cfg.budget:
        it += 1
        ss_rule, ss_perf, ss_draw = _iteration_seeds(cfg.seed, it)
        rng = np.random.default_rng(ss_draw)
        X, y = samples.arrays()
        rules, report = RuleSet(), None
        pool: list[AcquisitionCandidate] = []
        if len(y) >= 2:
            if use_rules:
                rules, report = learn_purified_rules(space, X, y, cfg, ss_rule, it)
                rules_it = it
            f_perf = train_arrays(X, y, space.kinds, 1, cfg.tree_count, ss_perf, cfg.n_jobs)
            p_best = float(y.min())
            for i, rule in enumerate(rules):
                pool += sample_rule_region(space, rule, f_perf, p_best, cfg.gkde, rng, samples, source=i)
            if not pool:
                pool = sample_rule_region(space, None, f_perf, p_best, cfg.gkde, rng, samples)
        if pool:
            best = pool[int(np.argmax([c.ei for c in pool]))]
            pick, source = best.config, (f"rule:{best.source}" if best.source >= 0 else FALLBACK)
        else:
            extra = random_sample(space, 1, rng, exclude=samples.configs)
            if not extra:
                notes.append(f"space exhausted at iteration {it}")
                break
            pick, source = extra[0], FALLBACK
        perf, failed = _measure(objective, pick)
        samples.add(pick, perf, failed=failed)
        history.append(Trial(it, samples.samples[-1], source))
        log.debug("iteration %d: %s -> %g (%s, %d rules)", it, pick, perf, source, len(rules))
    return _result(space, samples, history, rules, report, rules_it, notes)


def learn_purified_rules(space: ConfigSpace, X, y, cfg: TunerConfig, seed, provenance: int | None = None):
    """Learn rules from a forest on ``(X, y)`` and purify them; returns ``(R_p, report)``."""
    f_rule = train_arrays(X, y, space.kinds, cfg.leaf_param, cfg.tree_count, seed, cfg.n_jobs)
    learned = rules_from_paths(extract_paths(f_rule), space, provenance)
    if not learned:
        return RuleSet(), None
    return purify(learned, featurize((X, y), learned), cfg.ci)


def run_without_rules(space: ConfigSpace, objective: Callable, cfg: TunerConfig = TunerConfig()) -> TunerResult:
    """Ablation: the same loop with rule learning and purification switched off."""
    return run(space, objective, cfg, use_rules=False)


def run_random_search(space: ConfigSpace, objective: Callable, cfg: TunerConfig = TunerConfig()) -> TunerResult:
    """Measure ``cfg.budget`` distinct uniformly random configurations."""
    samples = SampleSet(space, cfg.budget, cfg.initial_size)
    history: list[Trial] = []
    notes: list[str] = []
    _initial(space, objective, cfg, samples, history)
    rest = cfg.budget - cfg.initial_size
    if rest > 0 and len(samples) == cfg.initial_size:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(2,)))
        picks = random_sample(space, rest, rng, exclude=samples.configs)
        for k, c in enumerate(picks, start=1):
            perf, failed = _measure(objective, c)
            samples.add(c, perf, failed=failed)
            history.append(Trial(k, samples.samples[-1], FALLBACK))
        if len(picks) < rest:
            notes.append("space exhausted")
    return _result(space, samples, history, (), None, None, notes)


TUNERS = {
    "promisetune": run,
    "without-rules": run_without_rules,
    "random-search": run_random_search,
}


# --------------------------------------------------------------------------
# trial log
# --------------------------------------------------------------------------

def trials_csv(result: TunerResult) -> str:
    space = result.space
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", *space.names, "performance", "source"])
    for t in result.history:
        vals = [o.format_value(v) for o, v in zip(space.options, t.sample.config)]
        w.writerow([t.iteration, *vals, repr(float(t.sample.performance)), t.source])
    return buf.getvalue()


def read_trials(text: str, space: ConfigSpace) -> list[Trial]:
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    if header[1:-2] != space.names or header[0] != "iteration":
        raise ValueError("trial log columns do not match the space")
    out = []
    for row in rows[1:]:
        config = tuple(o.parse_value(v) for o, v in zip(space.options, row[1:-2]))
        perf = float(row[-2])
        failed = not math.isfinite(perf)
        out.append(Trial(int(row[0]), Sample(config, perf, failed), row[-1]))
    return out
