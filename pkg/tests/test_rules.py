import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from promisetune import _kernels
from promisetune.forest import Split, extract_paths, train_arrays
from promisetune.rules import (Constraint, EmptyFeaturesError, Rule, RuleSet, SchemaError, canonicalize, dedupe,
                               featurize, fits, fits_matrix, rule_from_json, rules_from_paths)
from promisetune.space import BINARY, ENUM, INT, ConfigSpace, OptionDef, SampleSet


@pytest.fixture
def sevenzip():
    return ConfigSpace((OptionDef("BZip2", BINARY), OptionDef("BlockSize", INT, 0, 30)))


def test_merge_overlapping_ranges(sevenzip):
    # <BZip2=True, BlockSize<7, BlockSize<5> -> <BZip2=True, BlockSize<5>
    path = [Split(0, True, 1.0, True), Split(1, False, 7.0, True), Split(1, False, 5.0, True)]
    rule = canonicalize(path, sevenzip)
    assert rule == Rule((Constraint(0, allowed=frozenset({1})), Constraint(1, -math.inf, 5.0)))
    assert rule.describe(sevenzip) == "<BZip2=1, BlockSize<5>"


def test_interval_intersection(sevenzip):
    path = [Split(1, False, 3.0, False), Split(1, False, 10.0, True), Split(1, False, 5.0, False)]
    assert canonicalize(path, sevenzip) == Rule((Constraint(1, 5.0, 10.0),))


def test_empty_path_gives_empty_rule(sevenzip):
    rule = canonicalize([], sevenzip)
    assert rule == Rule(())
    assert all(fits(c, rule) for c in [(0, 0), (1, 30)])


def test_midpoint_thresholds_snap_to_integers(sevenzip):
    rule = canonicalize([Split(1, False, 4.5, True), Split(1, False, 1.5, False)], sevenzip)
    assert rule == Rule((Constraint(1, 2.0, 5.0),))


def test_bounds_implied_by_domain_are_dropped(sevenzip):
    assert canonicalize([Split(1, False, 0.0, False), Split(1, False, 40.0, True)], sevenzip) == Rule(())


def test_unknown_option_is_schema_error(sevenzip):
    with pytest.raises(SchemaError):
        canonicalize([Split(5, False, 1.0, True)], sevenzip)
    with pytest.raises(SchemaError):
        canonicalize([Split(1, True, 1.0, True)], sevenzip)


def test_contradiction_rejected(sevenzip):
    with pytest.raises(ValueError):
        canonicalize([Split(1, False, 3.0, True), Split(1, False, 5.0, False)], sevenzip)


def test_dedupe_keeps_first_in_order(sevenzip):
    a = canonicalize([Split(1, False, 5.0, True)], sevenzip)
    b = canonicalize([Split(0, True, 1.0, True)], sevenzip)
    a2 = canonicalize([Split(1, False, 5.0, True), Split(1, False, 9.0, True)], sevenzip)
    assert list(dedupe([a, b, a2, b])) == [a, b]


def test_identical_trees_halve_rule_count():
    rng = np.random.default_rng(0)
    X = rng.integers(0, 10, size=(30, 2))
    y = X[:, 0] + 0.1 * X[:, 1]
    space = ConfigSpace((OptionDef("x", INT, 0, 9), OptionDef("z", INT, 0, 9)))
    f = train_arrays(X, y, space.kinds, l=2, tree_count=2, seed=0, bootstrap=False)
    paths = extract_paths(f)
    assert len(rules_from_paths(paths, space)) == len(paths) // 2


def test_featurization_example(sevenzip):
    r1 = Rule((Constraint(0, allowed=frozenset({1})),))
    r2 = Rule((Constraint(0, allowed=frozenset({0})), Constraint(1, 5.0, 10.0)))
    c = (0, 8)
    assert not fits(c, r1) and fits(c, r2)
    fs = featurize((np.array([c]), np.array([1.0])), [r1, r2])
    assert fs.matrix.tolist() == [[0, 1]]
    assert not fits((0, 10), r2)


def test_empty_rule_featurizes_to_ones(sevenzip):
    X = np.array([[0, 1], [1, 7], [1, 30]])
    fs = featurize((X, np.zeros(3)), [Rule(())])
    assert fs.matrix[:, 0].tolist() == [1, 1, 1]


def test_empty_rule_set_is_an_error(sevenzip):
    with pytest.raises(EmptyFeaturesError):
        featurize((np.zeros((1, 2), int), np.zeros(1)), [])


def test_featurize_from_sampleset_skips_failures(sevenzip):
    ss = SampleSet(sevenzip, 5, 0)
    ss.add((0, 3), 1.0)
    ss.add((1, 3), 0.0, failed=True)
    fs = featurize(ss, [Rule((Constraint(1, -math.inf, 5.0),))])
    assert fs.matrix.tolist() == [[1]] and fs.performance.tolist() == [1.0]


def random_space(rng):
    opts = []
    for i in range(int(rng.integers(1, 5))):
        kind = rng.choice([BINARY, INT, ENUM])
        if kind == INT:
            lo = int(rng.integers(-5, 5))
            opts.append(OptionDef(f"o{i}", INT, lo, lo + int(rng.integers(0, 12))))
        elif kind == ENUM:
            opts.append(OptionDef(f"o{i}", ENUM, labels=tuple(f"v{k}" for k in range(int(rng.integers(2, 5))))))
        else:
            opts.append(OptionDef(f"o{i}", BINARY))
    return ConfigSpace(tuple(opts))


def random_path(space, rng, length):
    path = []
    for _ in range(length):
        o = int(rng.integers(0, len(space)))
        opt = space.options[o]
        if opt.categorical:
            path.append(Split(o, True, float(rng.integers(opt.lo, opt.hi + 1)), bool(rng.integers(0, 2))))
        else:
            path.append(Split(o, False, float(rng.integers(opt.lo, opt.hi + 2)) - 0.5, bool(rng.integers(0, 2))))
    return path


def path_holds(c, path):
    for sp in path:
        got = c[sp.option] == sp.value if sp.categorical else c[sp.option] < sp.value
        if got != sp.holds:
            return False
    return True


def test_featurize_equals_brute_force_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        space = random_space(rng)
        rules = []
        while len(rules) < 3:
            try:
                rules.append(canonicalize(random_path(space, rng, int(rng.integers(0, 4))), space))
            except ValueError:
                continue
        X = np.array([[int(rng.integers(o.lo, o.hi + 1)) for o in space.options] for _ in range(5)])
        fs = featurize((X, np.arange(5.0)), rules)
        brute = [[int(fits(tuple(x), r)) for r in rules] for x in X]
        assert fs.matrix.tolist() == brute


def test_region_semantics_exhaustive():
    rng = np.random.default_rng(77)
    for _ in range(60):
        space = random_space(rng)
        if space.size > 4096:
            continue
        path = random_path(space, rng, int(rng.integers(0, 5)))
        try:
            rule = canonicalize(path, space)
        except ValueError:
            # contradictory path: no configuration satisfies it
            assert not any(path_holds(tuple(c), path) for c in space.enumerate())
            continue
        allc = space.enumerate()
        got = {tuple(c) for c in allc if fits(tuple(c), rule)}
        want = {tuple(c) for c in allc if path_holds(tuple(c), path)}
        assert got == want
        lows, highs, allowed = rule.admissible(space)
        axes = [allowed[o].tolist() if o in allowed else range(lows[o], highs[o] + 1) for o in range(len(space))]
        assert got == set(itertools.product(*axes))


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1), st.integers(0, 6))
def test_canonicalize_idempotent(seed, length):
    rng = np.random.default_rng(seed)
    space = random_space(rng)
    try:
        rule = canonicalize(random_path(space, rng, length), space)
    except ValueError:
        return
    assert canonicalize(rule, space) == rule
    assert rule_from_json(rule.to_json(space), space) == rule
    assert len(set(rule.options)) == len(rule.options) == len(rule.constraints)
    assert rule.satisfiable(space)


def test_json_forms(sevenzip):
    space = ConfigSpace((OptionDef("m", ENUM, labels=("a", "b", "c")), OptionDef("x", INT, 0, 9)))
    r = Rule((Constraint(0, allowed=frozenset({0, 2})), Constraint(1, 3.0, math.inf)))
    assert r.to_json(space) == [{"option": "m", "op": "!=", "value": "b"}, {"option": "x", "op": ">=", "value": 3}]
    assert RuleSet.from_json(RuleSet([r]).to_json(space), space) == RuleSet([r])
    with pytest.raises(SchemaError):
        rule_from_json([{"option": "nope", "op": "<", "value": 1}], space)
    with pytest.raises(SchemaError):
        rule_from_json([{"option": "x", "op": "~", "value": 1}], space)


def test_fits_kernel_matches_fallback():
    rng = np.random.default_rng(8)
    space = ConfigSpace((OptionDef("a", BINARY), OptionDef("b", INT, 0, 15), OptionDef("c", ENUM, labels=tuple("pqrs"))))
    rules = []
    while len(rules) < 40:
        try:
            rules.append(canonicalize(random_path(space, rng, 3), space))
        except ValueError:
            pass
    X = np.ascontiguousarray(np.column_stack([rng.integers(0, 2, 300), rng.integers(0, 16, 300), rng.integers(0, 4, 300)]))
    from promisetune.rules import _encode
    enc = _encode(rules)
    assert np.array_equal(_kernels.fits_matrix(X, *enc, len(rules)), _kernels._fits_py(X, *enc, len(rules)))
    assert np.array_equal(fits_matrix(X, rules), np.array([[fits(tuple(x), r) for r in rules] for x in X], np.uint8))
