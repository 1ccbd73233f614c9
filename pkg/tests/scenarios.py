"""Seeded Monte Carlo scenarios shared by several test modules.

Each is computed once per test process.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from seqdamage.evaluation import ScenarioSpec, compare_mp_local, generate_streams
from seqdamage.graph import build_model
from seqdamage.inference import RuleSpec
from seqdamage.simnet import run_local_baseline, run_session
from seqdamage.topologies import asce_config, shake_table_config

ALPHA_GRID = (0.5, 1e-2, 1e-4, 1e-6, 1e-8, 1e-10)
REPLICATIONS = 200
ASCE_RULES = ("min:1,3", "max:1,3")


@lru_cache(maxsize=None)
def shake_table_taus(reps: int = REPLICATIONS):
    """Stopping times of MP and of LOCAL on floors 1 and 3; damage on floor 1 at step 41."""
    model = build_model(shake_table_config())
    scenario = ScenarioSpec(model, {1: 41}, 60, reps, seed=1)
    rule = RuleSpec("min", (1,), 1e-8)
    out = {"mp": [], 1: [], 3: []}
    for rep in range(reps):
        streams = generate_streams(scenario, rep)
        out["mp"].append(run_session(model, streams, [rule]).verdicts[rule.label].tau)
        for sid in (1, 3):
            out[sid].append(run_local_baseline(model, sid, streams, [rule]).verdicts[rule.label].tau)
    # a run that never stops counts as stopping after the stream ends
    return {k: np.array([t if t is not None else 10**6 for t in v]) for k, v in out.items()}


@lru_cache(maxsize=None)
def asce_delay_points():
    """Paired MP / LOCAL(sensor 6) curves with floors 1 and 3 damaged at step 10."""
    model = build_model(asce_config())
    scenario = ScenarioSpec(model, {1: 10, 3: 10}, 50, REPLICATIONS, seed=2)
    rules = [RuleSpec.parse(r) for r in ASCE_RULES]
    return compare_mp_local(scenario, rules, ALPHA_GRID, local_sensor=6)


@lru_cache(maxsize=None)
def asce_no_change_points(length: int = 10):
    """Paired curves on undamaged streams of ``length`` steps."""
    model = build_model(asce_config())
    scenario = ScenarioSpec(model, {}, length, REPLICATIONS, seed=3)
    rules = [RuleSpec.parse(r) for r in ASCE_RULES]
    return compare_mp_local(scenario, rules, ALPHA_GRID, local_sensor=6)
