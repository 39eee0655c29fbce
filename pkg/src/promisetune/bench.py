"""Objectives and the tuner comparison harness."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import re
import shlex
import subprocess
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .rules import Constraint, Rule
from .space import BINARY, ENUM, INT, ConfigSpace, InvalidSpaceError, OptionDef
from .tuner import TUNERS, ObjectiveError, TunerConfig

NEGLIGIBLE_D = 0.2
SK_ALPHA = 0.05


class Objective:
    """A minimized performance function over a configuration space.

    ``evaluate`` maps a configuration tuple to a float; ``evaluations``
    counts calls made through ``__call__``.
    """

    def __init__(self, name: str, space: ConfigSpace, provenance: str = ""):
        self.name = name
        self.space = space
        self.provenance = provenance
        self.evaluations = 0

    def evaluate(self, config) -> float:
        raise NotImplementedError

    def __call__(self, config) -> float:
        self.evaluations += 1
        return self.evaluate(tuple(config))


class FunctionObjective(Objective):
    def __init__(self, name: str, space: ConfigSpace, fn: Callable, provenance: str = "function"):
        super().__init__(name, space, provenance)
        self.fn = fn

    def evaluate(self, config) -> float:
        return float(self.fn(config))


# --------------------------------------------------------------------------
# synthetic landscapes
# --------------------------------------------------------------------------

SYNTHETIC_KINDS = ("rugged-wells", "deceptive", "flat")


class SyntheticLandscape(Objective):
    """Separable rugged background minus the depth of every box containing the point.

    Integer options sit at even positions, binary options at odd positions.
    The background assigns each option value an independent offset in
    [0, 1), so every integer option is rugged on its own; boxes are
    axis-aligned promising regions deep enough that any point inside one
    beats every point outside all of them.
    """

    def __init__(self, kind: str, space: ConfigSpace, offsets: list, boxes: list, depths: list, seed: int):
        super().__init__(f"{kind}-{len(space)}d-s{seed}", space, f"synthetic:{kind}")
        self.kind = kind
        self.offsets = offsets
        self.boxes = boxes
        self.depths = depths
        self.seed = seed
        self._optimum = None

    def background(self, config) -> float:
        return float(sum(off[v - o.lo] for off, o, v in zip(self.offsets, self.space.options, config)))

    def evaluate(self, config) -> float:
        if self.kind == "flat":
            return 1.0
        value = self.background(config)
        for box, depth in zip(self.boxes, self.depths):
            if all(c.satisfied(config[c.option]) for c in box.constraints):
                value -= depth
        return value

    def evaluate_many(self, X) -> np.ndarray:
        X = np.asarray(X, np.int64)
        if self.kind == "flat":
            return np.ones(X.shape[0])
        value = np.zeros(X.shape[0])
        for o, (off, opt) in enumerate(zip(self.offsets, self.space.options)):
            value += np.asarray(off)[X[:, o] - opt.lo]
        for box, depth in zip(self.boxes, self.depths):
            inside = np.ones(X.shape[0], bool)
            for c in box.constraints:
                col = X[:, c.option]
                inside &= np.isin(col, list(c.allowed)) if c.categorical else (col >= c.lo) & (col < c.hi)
            value -= depth * inside
        return value

    def optimum(self) -> tuple[float, tuple]:
        """Exact global minimum and a minimizer, from the separable structure."""
        if self._optimum is not None:
            return self._optimum
        if self.kind == "flat":
            self._optimum = (1.0, tuple(int(o.lo) for o in self.space.options))
            return self._optimum
        best = (math.inf, None)
        for r in range(len(self.boxes) + 1):
            for subset in itertools.combinations(range(len(self.boxes)), r):
                admissible = [set(o.values().tolist()) for o in self.space.options]
                for b in subset:
                    for c in self.boxes[b].constraints:
                        admissible[c.option] &= set(c.admitted(self.space).tolist())
                if any(not a for a in admissible):
                    continue
                config = []
                total = -sum(self.depths[b] for b in subset)
                for off, o, adm in zip(self.offsets, self.space.options, admissible):
                    v = min(sorted(adm), key=lambda x: off[x - o.lo])
                    config.append(int(v))
                    total += off[v - o.lo]
                value = self.evaluate(tuple(config))
                if value < best[0]:
                    best = (value, tuple(config))
        self._optimum = best
        return best


def synthetic_space(dims: int, levels: int = 16) -> ConfigSpace:
    opts = []
    for i in range(dims):
        if i % 2 == 0:
            opts.append(OptionDef(f"o{i}", INT, 0, levels - 1))
        else:
            opts.append(OptionDef(f"o{i}", BINARY))
    return ConfigSpace(tuple(opts))


def _box(space: ConfigSpace, rng, options, width: int) -> Rule:
    cons = []
    for o in sorted(options):
        opt = space.options[o]
        if opt.categorical:
            cons.append(Constraint(o, allowed=frozenset({int(rng.integers(opt.lo, opt.hi + 1))})))
        else:
            start = int(rng.integers(opt.lo, opt.hi - width + 2))
            cons.append(Constraint(o, float(start), float(start + width)))
    return Rule(tuple(cons))


def synthetic_landscape(kind: str, dims: int = 10, seed: int = 0, n_boxes: int = 2, levels: int = 16) -> SyntheticLandscape:
    """Deterministic synthetic objective with a known optimum and known promising boxes.

    ``rugged-wells`` places ``n_boxes`` boxes over three options each.
    ``deceptive`` pairs a wide, moderately deep basin with a narrow, deeper
    box at the opposite corner of the integer options. ``flat`` is constant.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown landscape kind {kind!r}; choose from {SYNTHETIC_KINDS}")
    if dims < 2:
        raise ValueError("synthetic landscapes need at least 2 options")
    space = synthetic_space(dims, levels)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(7,)))
    offsets = [rng.uniform(0.0, 1.0, size=o.cardinality).round(6).tolist() for o in space.options]
    boxes: list[Rule] = []
    depths: list[float] = []
    if kind == "rugged-wells":
        width = max(1, levels // 4)
        for b in range(n_boxes):
            chosen = rng.choice(dims, size=min(3, dims), replace=False)
            boxes.append(_box(space, rng, chosen.tolist(), width))
            depths.append(float(dims + 1 + 2 * b))
    elif kind == "deceptive":
        ints = [i for i, o in enumerate(space.options) if not o.categorical][:2]
        half = levels // 2
        basin = Rule(tuple(Constraint(o, -math.inf, float(half)) for o in ints))
        narrow = Rule(tuple(Constraint(o, float(levels - 2), math.inf) for o in ints))
        boxes = [basin, narrow]
        depths = [float(dims + 1), float(dims + 4)]
    return SyntheticLandscape(kind, space, offsets, boxes, depths, seed)


# --------------------------------------------------------------------------
# offline measurement tables
# --------------------------------------------------------------------------

class MissingConfigurationError(ObjectiveError):
    pass


class OfflineTable(Objective):
    """Exact-match lookup of tabulated measurements."""

    def __init__(self, name: str, space: ConfigSpace, rows: Mapping):
        super().__init__(name, space, "offline")
        self.rows = dict(rows)

    def __len__(self):
        return len(self.rows)

    @property
    def exhaustive(self) -> bool:
        return len(self.rows) == self.space.size

    def evaluate(self, config) -> float:
        try:
            return self.rows[tuple(config)]
        except KeyError:
            raise MissingConfigurationError(f"configuration {config} is not in the table") from None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*self.space.names, "performance"])
        for config, perf in self.rows.items():
            w.writerow([*(o.format_value(v) for o, v in zip(self.space.options, config)), repr(perf)])
        return buf.getvalue()


class OfflineFormatError(ValueError):
    pass


def _infer_option(name: str, column: list[str]) -> OptionDef:
    try:
        nums = [float(v) for v in column]
        ints = all(x == int(x) for x in nums)
    except ValueError:
        ints = False
    if ints:
        vals = sorted({int(x) for x in nums})
        if vals == [0, 1]:
            return OptionDef(name, BINARY)
        return OptionDef(name, INT, vals[0], vals[-1])
    labels = sorted(set(column))
    return OptionDef(name, ENUM, labels=tuple(labels))


def load_offline(path) -> tuple[ConfigSpace, OfflineTable]:
    """Read a measurement CSV (option columns then ``performance``).

    Columns holding exactly {0, 1} become binary options, other integer
    columns become integer ranges over the observed min..max, anything else
    becomes an enumerated option with sorted labels.
    """
    text = Path(path).read_text()
    return parse_offline(text, Path(path).stem)


def parse_offline(text: str, name: str = "table") -> tuple[ConfigSpace, OfflineTable]:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if len(rows) < 2:
        raise OfflineFormatError("need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[-1] != "performance":
        raise OfflineFormatError('last column must be "performance"')
    body = rows[1:]
    for k, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise OfflineFormatError(f"line {k}: expected {len(header)} fields, got {len(r)}")
    try:
        space = ConfigSpace(tuple(_infer_option(h, [r[i].strip() for r in body]) for i, h in enumerate(header[:-1])))
    except InvalidSpaceError as exc:
        raise OfflineFormatError(str(exc)) from None
    table: dict = {}
    for k, r in enumerate(body, start=2):
        config = tuple(o.parse_value(v.strip()) for o, v in zip(space.options, r[:-1]))
        try:
            perf = float(r[-1])
        except ValueError:
            raise OfflineFormatError(f"line {k}: non-numeric performance {r[-1]!r}") from None
        if not math.isfinite(perf):
            raise OfflineFormatError(f"line {k}: performance must be finite")
        if config in table and table[config] != perf:
            raise OfflineFormatError(f"line {k}: conflicting duplicate measurement for {config}")
        table[config] = perf
    return space, OfflineTable(name, space, table)


# --------------------------------------------------------------------------
# external commands
# --------------------------------------------------------------------------

class SpawnError(ObjectiveError):
    pass


class CommandTimeout(ObjectiveError):
    pass


class ParseError(ObjectiveError):
    pass


def render_command(template: str, space: ConfigSpace, config) -> str:
    values = {o.name: o.format_value(v) for o, v in zip(space.options, config)}
    return template.format_map(values)


class CommandObjective(Objective):
    """Runs a shell-free command per configuration and parses its output."""

    def __init__(self, template: str, space: ConfigSpace, parser_regex: str = r"(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)",
                 timeout: float = 60.0, name: str = "command"):
        super().__init__(name, space, "command")
        self.template = template
        self.pattern = re.compile(parser_regex)
        self.timeout = timeout

    def evaluate(self, config) -> float:
        cmd = render_command(self.template, self.space, config)
        try:
            proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True, timeout=self.timeout)
        except subprocess.TimeoutExpired:
            raise CommandTimeout(f"{cmd!r} exceeded {self.timeout}s") from None
        except OSError as exc:
            raise SpawnError(f"could not run {cmd!r}: {exc}") from None
        m = self.pattern.search(proc.stdout)
        if m is None:
            raise ParseError(f"no performance value in output of {cmd!r}")
        try:
            return float(m.group(1) if m.groups() else m.group(0))
        except ValueError:
            raise ParseError(f"unparseable performance {m.group(0)!r}") from None


def command_objective(template: str, parser_regex: str, timeout: float, space: ConfigSpace) -> CommandObjective:
    return CommandObjective(template, space, parser_regex, timeout)


# --------------------------------------------------------------------------
# Scott-Knott ESD
# --------------------------------------------------------------------------

def cohen_d(a, b) -> float:
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    na, nb = a.size, b.size
    diff = a.mean() - b.mean()
    pooled = math.sqrt(((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2))
    if pooled == 0:
        return 0.0 if diff == 0 else math.inf
    return abs(diff) / pooled


def _distinct(a, b) -> bool:
    if cohen_d(a, b) < NEGLIGIBLE_D:
        return False
    a = np.asarray(a)
    b = np.asarray(b)
    if a.var() == 0 and b.var() == 0:
        return a.mean() != b.mean()
    return stats.ttest_ind(a, b, equal_var=False).pvalue < SK_ALPHA


def scott_knott_esd(groups: Mapping[str, Sequence[float]]) -> dict:
    """Rank groups by mean into statistically distinct, non-negligible clusters.

    The mean-ordered list is split recursively at the point maximizing the
    between-part sum of squares; a split stands only if the two parts differ
    by Welch's t-test and by a non-negligible Cohen's d. Rank 1 holds the
    smallest means.
    """
    if not groups:
        raise ValueError("no groups to rank")
    data = {k: np.asarray(v, np.float64) for k, v in groups.items()}
    for k, v in data.items():
        if v.size < 2:
            raise ValueError(f"group {k!r} needs at least 2 observations")
    order = sorted(data, key=lambda k: data[k].mean())

    def split(seq):
        if len(seq) < 2:
            return [seq]
        allv = np.concatenate([data[k] for k in seq])
        mu = allv.mean()
        best_k, best_ss = None, -1.0
        for k in range(1, len(seq)):
            left = np.concatenate([data[x] for x in seq[:k]])
            right = np.concatenate([data[x] for x in seq[k:]])
            ss = left.size * (left.mean() - mu) ** 2 + right.size * (right.mean() - mu) ** 2
            if ss > best_ss:
                best_k, best_ss = k, ss
        left = np.concatenate([data[x] for x in seq[:best_k]])
        right = np.concatenate([data[x] for x in seq[best_k:]])
        if not _distinct(left, right):
            return [seq]
        return split(seq[:best_k]) + split(seq[best_k:])

    ranks = {}
    for r, part in enumerate(split(order), start=1):
        for k in part:
            ranks[k] = r
    return {k: ranks[k] for k in groups}


# --------------------------------------------------------------------------
# comparison harness
# --------------------------------------------------------------------------

@dataclass
class RankTable:
    rows: list = field(default_factory=list)  # dicts: objective, budget, tuner, mean, std, rank, values

    def cell(self, objective: str, budget: int, tuner: str) -> dict:
        for r in self.rows:
            if (r["objective"], r["budget"], r["tuner"]) == (objective, budget, tuner):
                return r
        raise KeyError((objective, budget, tuner))

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows}, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["objective", "budget", "tuner", "repeat", "best", "normalized"])
        for r in self.rows:
            for k, (raw, norm) in enumerate(zip(r["raw"], r["values"])):
                w.writerow([r["objective"], r["budget"], r["tuner"], k, repr(raw), repr(norm)])
        return buf.getvalue()

    def to_markdown(self) -> str:
        tuners = list(dict.fromkeys(r["tuner"] for r in self.rows))
        cells = list(dict.fromkeys((r["objective"], r["budget"]) for r in self.rows))
        lines = ["| objective | B | " + " | ".join(tuners) + " |", "|---|---|" + "---|" * len(tuners)]
        for obj, b in cells:
            row = [format_cell(self.cell(obj, b, t)) for t in tuners]
            lines.append(f"| {obj} | {b} | " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"


def format_cell(row: dict) -> str:
    return f"[{row['rank']}] {row['mean']:.3f} ({row['std']:.3f})"


def normalize(values: np.ndarray) -> np.ndarray:
    """Min-max to [0, 1]; all-equal input maps to 0."""
    values = np.asarray(values, np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def run_comparison(objectives: Sequence[Objective], tuners: Sequence[str] | Mapping[str, Callable],
                   budgets: Sequence[int], repeats: int = 30, seed: int = 0,
                   base: TunerConfig | None = None, progress: Callable | None = None) -> RankTable:
    """Repeat every tuner on every (objective, budget) cell and rank them.

    Repeat ``r`` uses the same derived seed for every tuner. Best-found
    values are min-max normalized per cell across tuners and repeats before
    ranking with :func:`scott_knott_esd`.
    """
    if repeats < 2:
        raise ValueError("repeats must be >= 2")
    if not isinstance(tuners, Mapping):
        tuners = {t: TUNERS[t] for t in tuners}
    base = base or TunerConfig()
    table = RankTable()
    for obj in objectives:
        for budget in budgets:
            raw = {}
            for name, fn in tuners.items():
                vals = []
                for r in range(repeats):
                    rseed = int(np.random.SeedSequence(entropy=seed, spawn_key=(r,)).generate_state(1)[0])
                    cfg = replace(base, budget=budget, seed=rseed, initial_size=min(base.initial_size, budget))
                    res = fn(obj.space, obj, cfg)
                    vals.append(res.best_performance)
                    if progress:
                        progress(obj.name, budget, name, r, res.best_performance)
                raw[name] = np.array(vals)
            allv = np.concatenate(list(raw.values()))
            norm_all = normalize(allv)
            norm = {}
            k = 0
            for name, vals in raw.items():
                norm[name] = norm_all[k:k + vals.size]
                k += vals.size
            ranks = scott_knott_esd(norm)
            for name in tuners:
                table.rows.append({
                    "objective": obj.name,
                    "budget": budget,
                    "tuner": name,
                    "mean": float(norm[name].mean()),
                    "std": float(norm[name].std()),
                    "rank": ranks[name],
                    "raw": raw[name].tolist(),
                    "values": norm[name].tolist(),
                })
    return table
