import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from promisetune.explain import (ExplainConfig, analyze_interactions, explain, extract_explainable, important_options,
                                 most_common_overlaps, top_samples)
from promisetune.rules import Constraint, Rule, RuleSet, canonicalize, fits
from promisetune.space import BINARY, ENUM, INT, ConfigSpace, OptionDef, Sample, random_sample

INF = math.inf


@pytest.fixture
def encoder():
    return ConfigSpace((
        OptionDef("Crf", INT, 0, 51),
        OptionDef("Seek", INT, 0, 1000),
        OptionDef("Ipratio", INT, -5, 5),
        OptionDef("Qp", INT, 0, 69),
        OptionDef("B_bias", INT, -90, 100),
        OptionDef("Scenecut", INT, 0, 250),
    ))


def R(space, **bounds):
    names = space.names
    cons = [Constraint(names.index(k), float(lo), float(hi)) for k, (lo, hi) in bounds.items()]
    return canonicalize(Rule(tuple(sorted(cons, key=lambda c: c.option))), space)


@pytest.fixture
def encoder_rules(encoder):
    # ten encoder rules, strict bounds snapped to integers
    s = encoder
    return [
        R(s, Crf=(34, INF), Seek=(-INF, 541)),
        R(s, Crf=(37, INF), Seek=(-INF, 541)),
        R(s, Crf=(27, INF), Seek=(-INF, 523)),
        R(s, Crf=(37, INF), Ipratio=(-INF, 0)),
        R(s, Crf=(27, INF), Qp=(31, INF)),
        R(s, Crf=(27, INF), B_bias=(16, INF), Scenecut=(45, INF)),
        R(s, Crf=(37, INF), Ipratio=(1, INF)),
        R(s, Crf=(27, INF), Qp=(-INF, 30)),
        R(s, Crf=(-INF, 36), Seek=(-INF, 627), Qp=(21, INF)),
        R(s, Crf=(-INF, 36), Seek=(-INF, 731), B_bias=(-15, INF)),
    ]


def test_encoder_promising_regions(encoder, encoder_rules):
    regions, no_overlap, truncated = most_common_overlaps(encoder_rules, encoder)
    assert not truncated and no_overlap == ["Ipratio"]
    got = [r.rule.describe(encoder) for r in regions]
    assert got == [
        "<Crf>=37, Seek<523, 21<=Qp<30, B_bias>=16, Scenecut>=45>",
        "<Crf>=37, Seek<523, Qp>=31, B_bias>=16, Scenecut>=45>",
    ]
    cov = dict(regions[0].coverage)
    names = encoder.names
    assert cov[names.index("Crf")] == 8 and cov[names.index("Seek")] == 5 and cov[names.index("Qp")] == 2
    assert dict(regions[1].coverage)[names.index("Qp")] == 2


def test_encoder_interactions_and_importance(encoder, encoder_rules):
    inter = analyze_interactions(encoder_rules, encoder)
    assert inter[0] == (("Crf", "Seek"), 5)
    imp = important_options(encoder_rules, encoder)
    assert imp[:2] == [("Crf", 10), ("Seek", 5)]
    assert {n for n, _ in imp} == {"Crf", "Seek", "Ipratio", "Qp", "B_bias", "Scenecut"}


def test_interaction_pair_from_two_rules():
    space = ConfigSpace((OptionDef("BZip2", BINARY), OptionDef("BlockSize", INT, 0, 30), OptionDef("c", INT, 0, 9)))
    r1 = Rule((Constraint(0, allowed=frozenset({1})), Constraint(1, -INF, 5.0)))
    r2 = Rule((Constraint(0, allowed=frozenset({0})), Constraint(1, 5.0, 10.0)))
    r3 = Rule((Constraint(2, 3.0, INF),))
    assert analyze_interactions([r1, r2, r3], space) == [(("BZip2", "BlockSize"), 2)]
    assert analyze_interactions([r3]) == []


def test_single_rule_region_is_itself():
    space = ConfigSpace((OptionDef("m", ENUM, labels=("a", "b", "c")), OptionDef("x", INT, 0, 9)))
    rule = Rule((Constraint(0, allowed=frozenset({0, 2})), Constraint(1, 2.0, 7.0)))
    regions, no_overlap, _ = most_common_overlaps([rule], space)
    # each admitted enum value is its own cell; x keeps the rule's interval
    assert [r.rule for r in regions] == [
        Rule((Constraint(0, allowed=frozenset({0})), Constraint(1, 2.0, 7.0))),
        Rule((Constraint(0, allowed=frozenset({2})), Constraint(1, 2.0, 7.0))),
    ]
    interval = Rule((Constraint(1, 2.0, 7.0),))
    assert [r.rule for r in most_common_overlaps([interval], space)[0]] == [interval]
    assert no_overlap == []


def test_disjoint_rules_give_two_tied_regions():
    space = ConfigSpace((OptionDef("x", INT, 0, 9),))
    a, b = Rule((Constraint(0, -INF, 5.0),)), Rule((Constraint(0, 5.0, INF),))
    regions, no_overlap, _ = most_common_overlaps([a, b], space)
    assert [r.rule for r in regions] == [a, b] and no_overlap == []


def test_empty_rule_set():
    space = ConfigSpace((OptionDef("x", INT, 0, 9),))
    samples = [Sample((i,), float(i)) for i in range(10)]
    rep = explain([], samples, space)
    assert len(rep.explainable) == 0 and rep.regions == [] and rep.interactions == []
    assert "(none)" in rep.to_text(space)


def test_top_samples():
    samples = [Sample((i,), float(10 - i)) for i in range(10)] + [Sample((99,), 0.0, failed=True)]
    assert [s.config for s in top_samples(samples, 10)] == [(9,), (8,)]
    assert len(top_samples(samples, 100)) == 11
    assert len(top_samples(samples, 0.1)) == 1
    with pytest.raises(ValueError):
        top_samples([], 10)


def test_explain_config_validation():
    for bad in (0, -1, 101):
        with pytest.raises(ValueError):
            ExplainConfig(k=bad)
    with pytest.raises(ValueError):
        ExplainConfig(min_hits=0)


def test_k_bounds():
    space = ConfigSpace((OptionDef("x", INT, 0, 99),))
    samples = [Sample((i,), float(i)) for i in range(0, 100, 2)]
    low = Rule((Constraint(0, -INF, 4.0),))
    odd = Rule((Constraint(0, 51.0, 52.0),))
    mid = Rule((Constraint(0, 40.0, 60.0),))
    assert list(extract_explainable([low, odd, mid], samples, ExplainConfig(k=100))) == [low, mid]
    assert list(extract_explainable([mid], samples, ExplainConfig(k=10))) == []
    assert list(extract_explainable([low, mid], samples, ExplainConfig(k=10, min_hits=3))) == []


def random_setup(seed):
    rng = np.random.default_rng(seed)
    space = ConfigSpace((OptionDef("a", BINARY), OptionDef("x", INT, 0, 15), OptionDef("m", ENUM, labels=tuple("pqr")),
                         OptionDef("y", INT, -3, 3)))
    rules = []
    while len(rules) < int(rng.integers(1, 8)):
        cons = []
        for o in sorted(rng.choice(4, size=int(rng.integers(1, 4)), replace=False).tolist()):
            opt = space.options[o]
            if opt.categorical:
                vals = rng.choice(opt.cardinality, size=int(rng.integers(1, opt.cardinality)), replace=False)
                cons.append(Constraint(o, allowed=frozenset(int(v) + opt.lo for v in vals)))
            else:
                lo = int(rng.integers(opt.lo, opt.hi + 1))
                hi = int(rng.integers(lo + 1, opt.hi + 2))
                cons.append(Constraint(o, float(lo), float(hi)))
        rules.append(canonicalize(Rule(tuple(cons)), space))
    configs = random_sample(space, 40, rng)
    samples = [Sample(c, float(rng.normal())) for c in configs]
    return space, rules, samples, rng


@settings(max_examples=80)
@given(st.integers(0, 100_000))
def test_explain_properties(seed):
    space, rules, samples, rng = random_setup(seed)
    counts = []
    for k in range(5, 55, 5):
        expl = extract_explainable(rules, samples, ExplainConfig(k=k))
        assert set(expl) <= set(rules)
        counts.append(len(expl))
    assert counts == sorted(counts)

    rep = explain(rules, samples, space, ExplainConfig(k=50))
    used = {space.options[o].name for r in rep.explainable for o in r.options}
    assert {n for n, _ in rep.important_options} == used
    for reg in rep.regions:
        assert reg.rule.satisfiable(space)
        # a region's own cells are covered as claimed
        for o, n in reg.coverage:
            cell = next(c for c in reg.rule.constraints if c.option == o) if o in reg.rule.options else None
            if cell is not None:
                covering = sum(1 for r in rep.explainable for c in r.constraints
                               if c.option == o and all(c.satisfied(v) for v in cell.admitted(space)))
                assert covering == n

    perm = [rules[i] for i in rng.permutation(len(rules))]
    assert sorted(analyze_interactions(perm)) == sorted(analyze_interactions(rules))
    mirrored = [canonicalize(r, space) for r in rules]
    assert analyze_interactions(mirrored) == analyze_interactions(rules)
    for (a, b), _ in analyze_interactions(rules):
        assert a < b


def test_report_json_and_text(encoder, encoder_rules):
    samples = [Sample((40, 100, 0, 25, 20, 50), 1.0), Sample((10, 900, 0, 10, 0, 0), 2.0)]
    rep = explain(encoder_rules, samples, encoder, ExplainConfig(k=50))
    doc = rep.to_json(encoder)
    assert doc["n_rules"] == 10 and doc["k"] == 50
    assert len(doc["explainable_rules"]) == len(rep.explainable)
    assert all(fits(samples[0].config, r) for r in rep.explainable)
    assert "option interactions:" in rep.to_text(encoder)
