"""Configuration tuning guided by causally purified rules."""

from .space import ConfigSpace, OptionDef, Sample, SampleSet, random_sample, sample_within_rule
from .rules import Constraint, Rule, RuleSet, canonicalize, dedupe, featurize, fits
from .causal import CiTestConfig, average_causal_effect, fci, purify
from .tuner import TunerConfig, TunerResult, run, run_random_search, run_without_rules

__version__ = "0.1.0"
