import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from promisetune import _kernels
from promisetune.causal import (ARROW, CIRCLE, NO_EDGE, TAIL, CiTestConfig, Pag, UndefinedEffectError,
                                average_causal_effect, ci_test, column_groups, correlation, fci, possible_dsep,
                                prune_disconnected, purify, reaches_target)
from promisetune.rules import Constraint, FeaturizedSet, Rule, RuleSet


def make_pag(names, edges):
    """edges: (a, mark_at_a, mark_at_b, b) with marks as glyph characters."""
    glyph = {"o": CIRCLE, "<": ARROW, ">": ARROW, "-": TAIL}
    idx = {n: k for k, n in enumerate(names)}
    M = np.zeros((len(names), len(names)), np.int8)
    for a, ma, mb, b in edges:
        M[idx[b], idx[a]] = glyph[ma]
        M[idx[a], idx[b]] = glyph[mb]
    return Pag(list(names), M)


def rules_n(k):
    return [Rule((Constraint(0, float(i), float(i + 1)),)) for i in range(k)]


# -------------------------------------------------------------- effect

def test_worked_effect_example():
    rng = np.random.default_rng(0)
    fit = rng.normal(0, 5, 27)
    fit += 354.44 - fit.mean()
    vio = rng.normal(0, 5, 23)
    vio += 486.89 - vio.mean()
    col = np.r_[np.ones(27), np.zeros(23)].astype(np.uint8)
    data = FeaturizedSet(col[:, None], np.r_[fit, vio])
    assert average_causal_effect(data, 0) == pytest.approx(-132.45, abs=1e-9)


def test_effect_hand_arithmetic():
    data = FeaturizedSet(np.array([[1], [1], [0]], np.uint8), np.array([10.0, 20.0, 40.0]))
    assert average_causal_effect(data, 0) == -25.0


def test_equal_performance_gives_zero_effect():
    data = FeaturizedSet(np.array([[1], [0], [1]], np.uint8), np.full(3, 7.0))
    assert average_causal_effect(data, 0) == 0.0


@pytest.mark.parametrize("col", [[1, 1, 1], [0, 0, 0]])
def test_constant_column_effect_undefined(col):
    with pytest.raises(UndefinedEffectError):
        average_causal_effect(FeaturizedSet(np.array(col, np.uint8)[:, None], np.arange(3.0)), 0)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3), st.floats(0.01, 100))
def test_effect_invariances(seed, shift, scale):
    rng = np.random.default_rng(seed)
    n = 12
    col = rng.integers(0, 2, n).astype(np.uint8)
    col[0], col[1] = 0, 1
    y = rng.normal(size=n)
    theta = average_causal_effect(FeaturizedSet(col[:, None], y), 0)
    perm = rng.permutation(n)
    assert average_causal_effect(FeaturizedSet(col[perm, None], y[perm]), 0) == pytest.approx(theta, abs=1e-12)
    shifted = average_causal_effect(FeaturizedSet(col[:, None], y + shift), 0)
    assert shifted == pytest.approx(theta, abs=1e-9 * (1 + abs(shift)))
    assert average_causal_effect(FeaturizedSet(col[:, None], y * scale), 0) == pytest.approx(theta * scale, rel=1e-9, abs=1e-12)


# -------------------------------------------------------------- CI test

def fisher_oracle(D, i, j, S):
    """Partial correlation from least-squares residuals, then the Fisher z p-value."""
    D = np.asarray(D, float)
    n = D.shape[0]
    A = np.column_stack([np.ones(n), D[:, list(S)]])
    ri = D[:, i] - A @ np.linalg.lstsq(A, D[:, i], rcond=None)[0]
    rj = D[:, j] - A @ np.linalg.lstsq(A, D[:, j], rcond=None)[0]
    r = ri @ rj / np.sqrt((ri @ ri) * (rj @ rj))
    z = np.arctanh(r) * np.sqrt(n - len(S) - 3)
    return 2 * stats.norm.sf(abs(z))


def test_fisher_z_matches_regression_oracle():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(20, 120))
        D = rng.normal(size=(n, 5))
        D[:, 1] += 0.4 * D[:, 0]
        D[:, 4] += 0.3 * D[:, 2] - 0.2 * D[:, 3]
        D[:, :2] = (D[:, :2] > 0)
        S = tuple(sorted(rng.choice([2, 3], size=int(rng.integers(0, 3)), replace=False).tolist()))
        res = ci_test(D, 0, 4, S)
        assert res.p_value == pytest.approx(fisher_oracle(D, 0, 4, S), rel=1e-6, abs=1e-12)
        assert res.independent == (res.p_value > 0.05)


def test_constant_column_is_independent():
    rng = np.random.default_rng(0)
    D = np.column_stack([np.ones(30), rng.normal(size=30)])
    assert ci_test(D, 0, 1) == (True, 1.0, False)


def test_median_binarized_copy_is_dependent():
    rng = np.random.default_rng(1)
    p = rng.normal(size=50)
    col = (p > np.median(p)).astype(float)
    res = ci_test(np.column_stack([col, p]), 0, 1)
    assert not res.independent
    assert res.p_value == pytest.approx(fisher_oracle(np.column_stack([col, p]), 0, 1, ()), rel=1e-9)


def test_bernoulli_columns_mostly_independent():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        D = rng.integers(0, 2, size=(200, 2)).astype(float)
        hits += ci_test(D, 0, 1).independent
    assert hits >= 90


def test_too_few_samples_is_inconclusive_and_dependent():
    D = np.random.default_rng(0).normal(size=(5, 4))
    res = ci_test(D, 0, 1, (2, 3))
    assert res.inconclusive and not res.independent


def test_collinear_conditioning_is_inconclusive():
    rng = np.random.default_rng(2)
    x = rng.normal(size=40)
    D = np.column_stack([x, rng.normal(size=40), x])
    res = ci_test(D, 0, 1, (2,))
    assert res.inconclusive and not res.independent


def test_ci_config_validation():
    with pytest.raises(ValueError):
        CiTestConfig(alpha=0)
    with pytest.raises(ValueError):
        CiTestConfig(max_conditioning_size=-1)


# -------------------------------------------------------------- FCI

def test_two_independent_nodes_have_no_edge():
    rng = np.random.default_rng(3)
    pag = fci(rng.normal(size=(200, 2)))
    assert pag.edges() == []


def test_strong_rule_adjacent_noise_isolated():
    rng = np.random.default_rng(4)
    r1 = rng.integers(0, 2, 200)
    r2 = rng.integers(0, 2, 200)
    p = 5.0 * r1 + rng.normal(0, 0.5, 200)
    pag = fci(np.column_stack([r1, r2, p]))
    assert pag.adjacent(0, 2)
    assert pag.neighbors(1) == []


def test_chain_separates_ends():
    rng = np.random.default_rng(6)
    r1 = rng.normal(size=300)
    r2 = r1 + rng.normal(0, 0.6, 300)
    p = r2 + rng.normal(0, 0.6, 300)
    pag = fci(np.column_stack([r1, r2, p]))
    assert not pag.adjacent(0, 2)
    assert pag.adjacent(0, 1) and pag.adjacent(1, 2)
    assert pag.sepset(0, 2) == (1,)


def test_unshielded_collider_is_oriented():
    rng = np.random.default_rng(7)
    a = rng.normal(size=400)
    b = rng.normal(size=400)
    p = a + b + rng.normal(0, 0.5, 400)
    pag = fci(np.column_stack([a, b, p]))
    assert pag.marks[0, 2] == ARROW and pag.marks[1, 2] == ARROW
    assert pag.sepset(0, 1) == ()


def random_dataset(seed, p=7, n=120):
    rng = np.random.default_rng(seed)
    D = (rng.random((n, p)) < 0.5).astype(float)
    for k in range(1, p - 1):
        flip = rng.random(n) < rng.uniform(0.1, 0.6)
        src = int(rng.integers(0, k))
        D[flip, k] = D[flip, src]
    D[:, -1] = D[:, :-1] @ rng.normal(size=p - 1) + rng.normal(0, 0.5, n)
    return D


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_pag_invariants_and_determinism(seed):
    D = random_dataset(seed)
    a = fci(D)
    b = fci(D.copy())
    assert np.array_equal(a.marks, b.marks)
    M = a.marks
    assert np.all(np.diag(M) == NO_EDGE)
    assert np.array_equal(M != NO_EDGE, (M != NO_EDGE).T)
    for i, j in zip(*np.nonzero(M == NO_EDGE)):
        if i != j:
            assert a.sepset(int(i), int(j)) is not None


def test_fallback_interpreter_gives_same_pag():
    code = (
        "import json, sys, numpy as np\n"
        "sys.path.insert(0, %r)\n"
        "from test_causal import random_dataset\n"
        "from promisetune.causal import fci\n"
        "print(json.dumps([fci(random_dataset(s)).marks.tolist() for s in range(8)]))\n"
    ) % os.path.dirname(__file__)
    env = dict(os.environ, PROMISETUNE_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    want = [fci(random_dataset(s)).marks.tolist() for s in range(8)]
    assert json.loads(out.stdout) == want


def test_skeleton_kernel_matches_python():
    for seed in range(10):
        D = random_dataset(seed, p=8, n=80)
        C, _ = correlation(D)
        adj = ~np.eye(8, dtype=bool)
        for d in range(3):
            a = _kernels.skeleton_level(C, 80, adj, d, 0.05)
            b = _kernels._skeleton_level_py(C, 80, adj, d, 0.05)
            for x, y in zip(a, b):
                assert np.array_equal(x, y)
            adj = adj & ~a[0]


def brute_possible_dsep(M, a):
    """Enumerate simple paths from a; keep endpoints of paths where each inner node is a collider or in a triangle."""
    p = M.shape[0]
    out = set()

    def walk(path):
        last = path[-1]
        for z in range(p):
            if M[last, z] == NO_EDGE or z in path:
                continue
            if len(path) >= 2:
                x = path[-2]
                if not ((M[x, last] == ARROW and M[z, last] == ARROW) or M[x, z] != NO_EDGE):
                    continue
            out.add(z)
            walk(path + [z])

    walk([a])
    return out


def walk_possible_dsep(M, a):
    """Fixed point over (previous, current) steps; walks may revisit nodes other than a."""
    p = M.shape[0]
    steps = {(a, b) for b in range(p) if M[a, b] != NO_EDGE}
    while True:
        new = {(y, z) for x, y in steps for z in range(p)
               if M[y, z] != NO_EDGE and z not in (x, a)
               and ((M[x, y] == ARROW and M[z, y] == ARROW) or M[x, z] != NO_EDGE)}
        if new <= steps:
            return {y for _, y in steps}
        steps |= new


def test_possible_dsep_matches_walk_closure():
    rng = np.random.default_rng(9)
    for _ in range(200):
        p = int(rng.integers(2, 7))
        M = np.zeros((p, p), np.int8)
        for i in range(p):
            for j in range(i + 1, p):
                if rng.random() < 0.5:
                    M[i, j] = rng.choice([CIRCLE, ARROW, TAIL])
                    M[j, i] = rng.choice([CIRCLE, ARROW, TAIL])
        for a in range(p):
            got = possible_dsep(M, a)
            assert got == walk_possible_dsep(M, a)
            assert brute_possible_dsep(M, a) <= got


# -------------------------------------------------------------- pruning

def test_pag_prunes_rules_downstream_of_p():
    names = ["R1", "R2", "R3", "R4", "R5", "p"]
    pag = make_pag(names, [("R1", "o", ">", "R2"), ("R2", "-", ">", "p"), ("R5", "o", "o", "p"),
                           ("p", "-", ">", "R3"), ("R3", "-", ">", "R4")])
    assert reaches_target(pag).tolist() == [True, True, False, False, True, True]
    rules = rules_n(5)
    assert list(prune_disconnected(pag, rules)) == [rules[0], rules[1], rules[4]]


def test_disconnected_pag_prunes_everything():
    pag = make_pag(["r1", "r2", "p"], [("r1", "o", "o", "r2")])
    assert len(prune_disconnected(pag, rules_n(2))) == 0


@pytest.mark.parametrize("ma,mb", [("o", "o"), ("-", ">"), ("<", ">"), ("o", ">"), ("-", "-")])
def test_direct_neighbor_is_kept(ma, mb):
    pag = make_pag(["r1", "p"], [("r1", ma, mb, "p")])
    assert len(prune_disconnected(pag, rules_n(1))) == 1


def test_edge_out_of_p_blocks():
    pag = make_pag(["r1", "p"], [("p", "-", ">", "r1")])
    assert len(prune_disconnected(pag, rules_n(1))) == 0


# -------------------------------------------------------------- purify

def test_aligned_rule_kept_and_constant_rule_discarded():
    rng = np.random.default_rng(11)
    col = rng.integers(0, 2, 60).astype(np.uint8)
    y = 10.0 - 5.0 * col + rng.normal(0, 0.3, 60)
    data = FeaturizedSet(np.column_stack([col, np.ones(60, np.uint8)]), y)
    rules = [Rule((Constraint(0, 1.0, 2.0),)), Rule(())]
    kept, report = purify(rules, data)
    assert list(kept) == [rules[0]]
    assert report.verdicts[1].theta is None and not report.verdicts[1].kept
    assert all(v.kept == (v.connected_to_p and v.theta is not None and v.theta < 0) for v in report.verdicts)


def test_positive_effect_rule_discarded():
    rng = np.random.default_rng(12)
    col = rng.integers(0, 2, 60).astype(np.uint8)
    y = 10.0 + 5.0 * col + rng.normal(0, 0.3, 60)
    kept, report = purify(rules_n(1), FeaturizedSet(col[:, None], y))
    assert len(kept) == 0 and report.verdicts[0].connected_to_p and report.verdicts[0].theta > 0


def test_zero_effect_rule_discarded():
    col = np.array([0, 1] * 10, np.uint8)
    y = np.array([1.0, 1.0, 3.0, 3.0] * 5)
    kept, report = purify(rules_n(1), FeaturizedSet(col[:, None], y))
    assert report.verdicts[0].theta == 0.0 and len(kept) == 0


def test_complement_columns_share_a_group():
    m = np.array([[1, 0, 1], [0, 1, 1], [1, 0, 0]], np.uint8)
    group, reps = column_groups(m)
    assert group.tolist() == [0, 0, 1] and reps == [0, 2]


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_purify_is_monotone_filter(seed):
    D = random_dataset(seed)
    data = FeaturizedSet(D[:, :-1].astype(np.uint8), D[:, -1])
    rules = rules_n(data.n_rules)
    kept, report = purify(rules, data)
    assert len(report.verdicts) == len(rules)
    connected = [r for r, v in zip(rules, report.verdicts) if v.connected_to_p]
    assert set(kept) <= set(connected) <= set(rules)
    doc = json.loads(json.dumps(report.to_json()))
    assert doc["n_rules"] == len(rules)


def test_rule_cap_truncates_weakest():
    rng = np.random.default_rng(13)
    m = rng.integers(0, 2, size=(80, 6)).astype(np.uint8)
    y = -3.0 * m[:, 0] - 2.0 * m[:, 1] + rng.normal(0, 0.2, 80)
    kept, report = purify(rules_n(6), FeaturizedSet(m, y), CiTestConfig(max_rules=2))
    assert report.n_truncated == 4
    assert [v.truncated for v in report.verdicts] == [False, False, True, True, True, True]
    assert len(kept) == 2
