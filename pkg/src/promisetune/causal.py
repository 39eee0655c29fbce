"""Rule purification by causal discovery.

FCI runs over the rule-feature columns plus the performance column (always
the last node). Rules that cannot reach performance along a path free of
edges directed against the travel direction are dropped, then rules whose average causal effect on
performance is not negative are dropped too.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .rules import FeaturizedSet, Rule, RuleSet

NO_EDGE, CIRCLE, ARROW, TAIL = 0, 1, 2, 3
_GLYPH_LEFT = {CIRCLE: "o", ARROW: "<", TAIL: "-"}
_GLYPH_RIGHT = {CIRCLE: "o", ARROW: ">", TAIL: "-"}


class UndefinedEffectError(ValueError):
    pass


@dataclass(frozen=True)
class CiTestConfig:
    alpha: float = 0.05
    max_conditioning_size: int = 3
    # possible-d-sep phase skips an edge when the candidate set is larger
    max_pds_size: int = 25
    # at most this many distinct rule-feature columns enter FCI
    max_rules: int = 200

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.max_conditioning_size < 0:
            raise ValueError("max_conditioning_size must be >= 0")


DEFAULT_CI = CiTestConfig()


class CiResult(NamedTuple):
    independent: bool
    p_value: float
    inconclusive: bool = False


def correlation(D: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Correlation matrix with zero rows/columns for constant variables."""
    D = np.asarray(D, np.float64)
    sd = D.std(axis=0)
    const = sd <= 1e-12 * np.maximum(1.0, np.abs(D).max(axis=0))
    Z = np.zeros_like(D)
    ok = ~const
    Z[:, ok] = (D[:, ok] - D[:, ok].mean(axis=0)) / sd[ok]
    C = (Z.T @ Z) / D.shape[0]
    np.fill_diagonal(C, 1.0)
    np.clip(C, -1.0, 1.0, out=C)
    return C, const


def ci_test(data: FeaturizedSet | np.ndarray, i: int, j: int, cond: Sequence[int] = (),
            cfg: CiTestConfig = DEFAULT_CI) -> CiResult:
    """Fisher-z test of ``i _||_ j | cond`` on partial correlation.

    Nodes index the rule columns, with performance as the last node. Constant
    columns are independent of everything. Too few samples, or a variable
    fully determined by ``cond``, give an inconclusive result that counts as
    dependent.
    """
    D = data.data() if isinstance(data, FeaturizedSet) else np.asarray(data, np.float64)
    n = D.shape[0]
    C, const = correlation(D)
    if const[i] or const[j]:
        return CiResult(True, 1.0)
    if n < len(cond) + 4:
        return CiResult(False, float("nan"), True)
    pv = _kernels.ci_pvalue(C, n, i, j, list(cond))
    if pv < 0:
        return CiResult(False, float("nan"), True)
    return CiResult(pv > cfg.alpha, pv)


@dataclass
class Pag:
    """Partial ancestral graph; ``marks[i, j]`` is the mark at ``j`` on edge i-j."""

    names: list
    marks: np.ndarray
    # separating sets: has[i, j] marks a known one, stored in sep[i, j, :sepn[i, j]]
    sep_has: np.ndarray | None = field(default=None, repr=False)
    sep: np.ndarray | None = field(default=None, repr=False)
    sepn: np.ndarray | None = field(default=None, repr=False)

    def sepset(self, i: int, j: int) -> tuple | None:
        """Separating set found for non-adjacent ``i`` and ``j`` (None if never tested apart)."""
        if self.sep_has is None or not self.sep_has[i, j]:
            return None
        return tuple(self.sep[i, j, : self.sepn[i, j]].tolist())

    @property
    def target(self) -> int:
        return len(self.names) - 1

    def adjacent(self, i: int, j: int) -> bool:
        return self.marks[i, j] != NO_EDGE

    def neighbors(self, i: int) -> list[int]:
        return np.flatnonzero(self.marks[i]).tolist()

    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(self.marks)))]

    def edge_str(self, i: int, j: int) -> str:
        return f"{self.names[i]} {_GLYPH_LEFT[self.marks[j, i]]}-{_GLYPH_RIGHT[self.marks[i, j]]} {self.names[j]}"

    def to_json(self) -> dict:
        return {"nodes": list(self.names), "edges": [self.edge_str(i, j) for i, j in self.edges()]}


def possible_dsep(M: np.ndarray, a: int) -> set:
    """Nodes reachable from ``a`` along paths whose inner nodes are colliders or sit in triangles."""
    return set(np.flatnonzero(_kernels.possible_dsep(np.ascontiguousarray(M, np.int8), int(a))).tolist())


def fci(data: FeaturizedSet | np.ndarray, cfg: CiTestConfig = DEFAULT_CI, names: Sequence[str] | None = None) -> Pag:
    """Fast Causal Inference over the rule columns plus performance.

    Adjacency search is order independent: each level tests every remaining
    edge against the adjacencies frozen at the start of the level and removes
    edges afterwards. Conditioning sets are enumerated in lexicographic order
    and the first separating set found is kept.
    """
    D = data.data() if isinstance(data, FeaturizedSet) else np.asarray(data, np.float64)
    n, p = D.shape
    if p < 2:
        raise ValueError("FCI needs at least two nodes")
    if names is None:
        names = [f"r{i + 1}" for i in range(p - 1)] + ["p"]
    C, const = correlation(D)
    C = np.ascontiguousarray(C)
    width = max(cfg.max_conditioning_size, 1)
    adj = ~np.eye(p, dtype=bool)
    has = np.zeros((p, p), np.bool_)
    sep = np.zeros((p, p, width), np.int64)
    sepn = np.zeros((p, p), np.int64)
    for i in np.flatnonzero(const):
        has[i, :] = has[:, i] = True
        adj[i, :] = adj[:, i] = False
    np.fill_diagonal(has, False)

    for d in range(cfg.max_conditioning_size + 1):
        if n < d + 4 or (adj.sum(axis=1) - 1).max(initial=0) < d:
            break
        remove, lsep, lsepn = _kernels.skeleton_level(C, n, adj, d, cfg.alpha)
        has |= remove
        sep[remove, :d] = lsep[remove, :d]
        sepn[remove] = lsepn[remove]
        adj &= ~remove

    M = np.where(adj, CIRCLE, NO_EDGE).astype(np.int8)
    _kernels.orient_colliders(M, has, sep, sepn)

    if cfg.max_conditioning_size > 0:
        removals = []
        pds_of: dict = {}
        for i, j in zip(*np.nonzero(np.triu(adj))):
            for a, b in ((int(i), int(j)), (int(j), int(i))):
                if a not in pds_of:
                    pds_of[a] = possible_dsep(M, a)
                pds = pds_of[a] - {a, b}
                if not pds or len(pds) > cfg.max_pds_size:
                    continue
                cand = np.array(sorted(pds), np.int64)
                found, s, ns, _ = _kernels.find_sepset(C, n, a, b, cand, 1, cfg.max_conditioning_size, cfg.alpha)
                if found:
                    removals.append((int(i), int(j), s[:ns].copy()))
                    break
        if removals:
            for i, j, s in removals:
                adj[i, j] = adj[j, i] = False
                for u, v in ((i, j), (j, i)):
                    has[u, v] = True
                    sep[u, v, : s.size] = s
                    sepn[u, v] = s.size
            M = np.where(adj, CIRCLE, NO_EDGE).astype(np.int8)
            _kernels.orient_colliders(M, has, sep, sepn)

    _kernels.orient_rules(M, has, sep, sepn)
    return Pag(list(names), M, has, sep, sepn)


def reaches_target(pag: Pag) -> np.ndarray:
    """Boolean mask of nodes with a path to the target node that never runs against a directed edge.

    Only an edge ``v -> u`` (tail at ``v``, arrowhead at ``u``) blocks travel
    from ``u`` to ``v``; circle marks and bidirected edges are permissive.
    """
    M = pag.marks
    t = pag.target
    ok = np.zeros(M.shape[0], bool)
    ok[t] = True
    queue = deque([t])
    while queue:
        v = queue.popleft()
        for u in np.flatnonzero(M[v]):
            if not ok[u] and not (M[v, u] == ARROW and M[u, v] == TAIL):
                ok[u] = True
                queue.append(int(u))
    return ok


def prune_disconnected(pag: Pag, rules: Sequence[Rule]) -> RuleSet:
    """Keep rules (aligned with the PAG's non-target nodes) that can reach performance.

    A path qualifies when none of its edges is directed back against the
    direction of travel; see :func:`reaches_target`.
    """
    ok = reaches_target(pag)
    return RuleSet(r for k, r in enumerate(rules) if ok[k])


def average_causal_effect(data: FeaturizedSet, rule_index: int) -> float:
    """Mean performance of fitting rows minus mean performance of violating rows."""
    col = data.matrix[:, rule_index].astype(bool)
    n_fit = int(col.sum())
    if n_fit == 0 or n_fit == col.size:
        raise UndefinedEffectError("rule column is constant; effect undefined")
    p = data.performance
    return float(p[col].mean() - p[~col].mean())


@dataclass(frozen=True)
class RuleVerdict:
    connected_to_p: bool
    theta: float | None
    kept: bool
    truncated: bool = False
    group: int | None = None


@dataclass
class CausalReport:
    verdicts: list
    n_groups: int = 0
    n_truncated: int = 0
    pag: Pag | None = None
    rules: RuleSet | None = None  # the rules judged, aligned with verdicts

    def to_json(self, rules: Sequence[Rule] | None = None, space=None) -> dict:
        rules = self.rules if rules is None else rules
        out = []
        for k, v in enumerate(self.verdicts):
            item = {
                "index": k,
                "connected_to_p": v.connected_to_p,
                "theta": v.theta,
                "kept": v.kept,
                "truncated": v.truncated,
                "group": v.group,
            }
            if rules is not None and space is not None:
                item["rule"] = rules[k].to_json(space)
            out.append(item)
        return {
            "n_rules": len(self.verdicts),
            "n_groups": self.n_groups,
            "n_truncated": self.n_truncated,
            "pag": self.pag.to_json() if self.pag is not None else None,
            "rules": out,
        }


def column_groups(matrix: np.ndarray) -> tuple[np.ndarray, list]:
    """Group rule columns that are identical or exact complements on the data.

    Returns ``(group_of_column, representative_columns)``; group ids follow
    first appearance.
    """
    group = np.empty(matrix.shape[1], np.int64)
    reps: list[int] = []
    index: dict[bytes, int] = {}
    for k in range(matrix.shape[1]):
        col = matrix[:, k]
        key = (col ^ 1 if col.size and col[0] == 1 else col).tobytes()
        g = index.get(key)
        if g is None:
            g = len(reps)
            index[key] = g
            reps.append(k)
        group[k] = g
    return group, reps


def purify(rules: Sequence[Rule], data: FeaturizedSet, cfg: CiTestConfig = DEFAULT_CI) -> tuple[RuleSet, CausalReport]:
    """Rules connected to performance in the PAG and with negative causal effect.

    Identical or complementary rule columns cannot be told apart by any
    conditional independence test, so FCI runs on one column per group and
    every member inherits the group's connectivity. When more than
    ``cfg.max_rules`` groups remain, only those most correlated with
    performance enter FCI; the rest are reported as truncated.
    """
    if len(rules) == 0 or data.n_samples == 0:
        raise ValueError("purify needs rules and samples")
    if len(rules) != data.n_rules:
        raise ValueError("rules and feature columns are misaligned")
    group, reps = column_groups(data.matrix)
    kept_groups = list(range(len(reps)))
    if len(reps) > cfg.max_rules:
        C, _ = correlation(np.column_stack([data.matrix[:, reps].astype(float), data.performance]))
        strength = np.abs(C[:-1, -1])
        order = np.argsort(-strength, kind="stable")[: cfg.max_rules]
        kept_groups = sorted(order.tolist())
    node_of_group = {g: i for i, g in enumerate(kept_groups)}
    cols = [reps[g] for g in kept_groups]
    sub = FeaturizedSet(data.matrix[:, cols], data.performance)
    names = [f"g{g}" for g in kept_groups] + ["p"]
    pag = fci(sub, cfg, names)
    reach = reaches_target(pag)

    verdicts = []
    kept = []
    for k, rule in enumerate(rules):
        g = int(group[k])
        node = node_of_group.get(g)
        if node is None:
            verdicts.append(RuleVerdict(False, None, False, truncated=True, group=g))
            continue
        connected = bool(reach[node])
        try:
            theta = average_causal_effect(data, k)
        except UndefinedEffectError:
            theta = None
        keep = connected and theta is not None and theta < 0
        verdicts.append(RuleVerdict(connected, theta, keep, group=g))
        if keep:
            kept.append(rule)
    report = CausalReport(verdicts, len(reps), len(reps) - len(kept_groups), pag, RuleSet(rules))
    return RuleSet(kept), report
