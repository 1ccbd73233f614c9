import math

import numpy as np
import pytest

from oracles import brute_joint, marginal
from seqdamage.errors import ModelError
from seqdamage.graph import build_model, kernel_tables
from seqdamage.inference import (
    BeliefTable,
    RuleSpec,
    compute_message,
    delay_bound_rule,
    full_sweep,
    normalize_log,
    posterior_max,
    posterior_min,
    posterior_single,
    rule_ccdf,
    rule_posterior,
    schedule,
    sensors_containing,
    single_kl,
)
from seqdamage.models import kl_divergence
from seqdamage.topologies import additive_config, asce_config, chain4_config, shake_table_config


def streams_for(model, N, seed=0, scale=1.5):
    rng = np.random.default_rng(seed)
    return {sid: rng.normal(0.0, scale, (N, 1)) for sid in model.sensor_ids}


def sweep(cfg, N, seed=0, root=None):
    model = build_model(cfg)
    streams = streams_for(model, N, seed)
    kernels, _ = kernel_tables(model, streams, N)
    beliefs, sent = full_sweep(model, kernels, root)
    return model, streams, beliefs, sent


@pytest.mark.parametrize("N", [1, 3, 5])
def test_chain4_beliefs_match_enumeration(N):
    cfg = chain4_config(seed=11)
    model, streams, beliefs, _ = sweep(cfg, N, seed=N)
    var_ids, joint = brute_joint(cfg, streams, N)
    for sid, b in beliefs.items():
        ref = marginal(var_ids, joint, b.scope)
        assert np.max(np.abs(b.probs - ref)) <= 1e-9
        assert abs(b.probs.sum() - 1) < 1e-10


def test_two_sensor_model_matches_enumeration():
    cfg = additive_config(
        {1: 0.2, 2: 0.3},
        {1: (1, 2), 2: (2,)},
        {1: {1: 1.0, 2: -1.5}, 2: {2: 2.0}},
        [(1, 2)],
        root=2,
        owned_priors={1: (1,), 2: (2,)},
    )
    N = 4
    model, streams, beliefs, _ = sweep(cfg, N, seed=9)
    var_ids, joint = brute_joint(cfg, streams, N)
    for b in beliefs.values():
        assert np.max(np.abs(b.probs - marginal(var_ids, joint, b.scope))) <= 1e-9


def test_message_scope_and_leaf_message():
    model = build_model(chain4_config())
    N = 3
    kernels, _ = kernel_tables(model, streams_for(model, N), N)
    m43 = compute_message(model, 4, 3, kernels[4], {})
    assert m43.scope == (4,)
    # S_4 is inside S_3 and sensor 4 is a leaf: the message is its kernel
    assert np.allclose(m43.log_values, kernels[4])
    m32 = compute_message(model, 3, 2, kernels[3], {4: m43})
    assert m32.scope == (3,) and m32.log_values.shape == (N + 1,)
    with pytest.raises(ModelError, match="no message"):
        compute_message(model, 3, 2, kernels[3], {})
    with pytest.raises(ModelError, match="no edge"):
        compute_message(model, 1, 3, kernels[1], {})


def test_message_counts():
    _, _, _, sent = sweep(chain4_config(), 2)
    assert len(sent) == 6
    _, _, _, sent = sweep(shake_table_config(), 2)
    assert len(sent) == 4
    assert len({(m.sender, m.receiver) for m in sent}) == 4


def test_schedule_sends_up_then_down():
    model = build_model(chain4_config())
    assert schedule(model, 1) == [(4, 3), (3, 2), (2, 1), (1, 2), (2, 3), (3, 4)]
    assert schedule(model, 3) == [(1, 2), (4, 3), (2, 3), (3, 2), (3, 4), (2, 1)]


def test_adjacent_beliefs_are_consistent():
    model, _, beliefs, _ = sweep(chain4_config(seed=3), 4, seed=4)
    a = beliefs[1].marginal((1, 2))
    b = beliefs[2].marginal((1, 2))
    assert np.max(np.abs(a - b)) <= 1e-10
    for i, q in [(2, 3), (3, 4)]:
        sep = model.separator(i, q)
        assert np.max(np.abs(beliefs[i].marginal(sep) - beliefs[q].marginal(sep))) <= 1e-10


@pytest.mark.parametrize("root", [1, 2, 3, 4])
def test_root_invariance(root):
    cfg = chain4_config(seed=2)
    _, _, ref, _ = sweep(cfg, 4, seed=5, root=1)
    _, _, other, _ = sweep(cfg, 4, seed=5, root=root)
    for sid in ref:
        assert np.max(np.abs(ref[sid].probs - other[sid].probs)) <= 1e-12


def uniform_belief(d, N):
    return BeliefTable(0, tuple(range(1, d + 1)), np.full((N + 1,) * d, 1.0 / (N + 1) ** d))


def test_rule_extractors_on_uniform_belief():
    b = uniform_belief(2, 1)
    assert posterior_min(b, (1, 2)) == pytest.approx(0.75)
    assert posterior_max(b, (1, 2)) == pytest.approx(0.25)
    assert posterior_single(b, 1) == pytest.approx(0.5)
    assert posterior_min(b, (1,)) == posterior_single(b, 1) == posterior_max(b, (1,))
    with pytest.raises(ModelError):
        posterior_min(b, (3,))


def test_single_variable_belief():
    b = BeliefTable(0, (1,), np.array([0.1, 0.2, 0.7]))
    assert posterior_single(b, 1) == pytest.approx(0.3)


def test_extractors_match_direct_summation():
    rng = np.random.default_rng(12)
    N = 3
    p = rng.random((N + 1,) * 3)
    p /= p.sum()
    b = BeliefTable(0, (1, 2, 3), p)
    S = (1, 3)
    tot_min = tot_max = tot_1 = 0.0
    for a1 in range(N + 1):
        for a2 in range(N + 1):
            for a3 in range(N + 1):
                v = p[a1, a2, a3]
                if min(a1, a3) < N:
                    tot_min += v
                if max(a1, a3) < N:
                    tot_max += v
                if a1 < N:
                    tot_1 += v
    assert posterior_min(b, S) == pytest.approx(tot_min, abs=1e-14)
    assert posterior_max(b, S) == pytest.approx(tot_max, abs=1e-14)
    assert posterior_single(b, 1) == pytest.approx(tot_1, abs=1e-14)
    for kind in ("min", "max"):
        r = RuleSpec(kind, S)
        assert rule_posterior(b, r) + rule_ccdf(b, r) == pytest.approx(1.0, abs=1e-14)


def test_min_rule_agrees_across_sensors():
    _, _, beliefs, _ = sweep(asce_config(), 3, seed=6)
    vals = [posterior_min(beliefs[s], (3, 4)) for s in (6, 10, 14)]
    assert max(vals) - min(vals) <= 1e-10


def test_normalize_rejects_impossible_evidence():
    with pytest.raises(ModelError):
        normalize_log(np.full((2, 2), -np.inf))


def test_rule_spec_parsing():
    r = RuleSpec.parse("min:3,1", 1e-4)
    assert r.targets == (1, 3) and r.label == "min:1,3" and r.alpha_fa == 1e-4
    assert RuleSpec.parse("subset-max:1,2").family == "max"
    for bad in ("min", "foo:1", "single:1,2", "min:"):
        with pytest.raises(ValueError):
            RuleSpec.parse(bad)
    with pytest.raises(ValueError):
        RuleSpec("min", (1,), 1.0)


def test_bound_sensor_sets():
    model = build_model(chain4_config())
    assert sensors_containing(model, 1) == [1, 2]
    assert sensors_containing(model, 3) == [2, 3]


def test_bound_formulas():
    model = build_model(chain4_config(seed=4))
    a = 1e-6
    la = abs(math.log(a))
    q = -math.log(1 - 0.05)
    single = delay_bound_rule(model, RuleSpec("single", (1,)), a)
    assert delay_bound_rule(model, RuleSpec("min", (1,)), a) == pytest.approx(single)
    assert single == pytest.approx(la / (q + single_kl(model, 1, 1) + single_kl(model, 2, 1)))
    mn = delay_bound_rule(model, RuleSpec("min", (1, 3)), a)
    info = sum(single_kl(model, i, j) for j, Q in [(1, (1, 2)), (3, (2, 3))] for i in Q)
    assert mn == pytest.approx(la / (2 * q + info))
    assert mn <= single
    mx = delay_bound_rule(model, RuleSpec("max", (1, 3)), a)
    d2 = model.registry[2]
    assert mx == pytest.approx(la / (2 * q + kl_divergence(d2.post[frozenset({1, 3})], d2.pre)))
    with pytest.raises(ModelError, match="undefined"):
        delay_bound_rule(model, RuleSpec("max", (1, 4)), a)


@pytest.mark.parametrize("seed", range(5))
def test_posterior_ordering(seed):
    _, _, beliefs, _ = sweep(chain4_config(seed=seed), 3, seed=seed)
    b = beliefs[2]
    S = (1, 2, 3)
    for j in S:
        assert posterior_max(b, S) <= posterior_single(b, j) + 1e-15
        assert posterior_single(b, j) <= posterior_min(b, S) + 1e-15
