import csv
import math

import numpy as np
import pytest

from scenarios import asce_delay_points
from seqdamage.errors import DataError, ModelError
from seqdamage.evaluation import (
    CURVE_COLUMNS,
    ScenarioSpec,
    compare_mp_local,
    curve_table,
    generate_streams,
    monte_carlo_curve,
    write_curve_csv,
)
from seqdamage.graph import build_model
from seqdamage.inference import RuleSpec
from seqdamage.models import fit_gaussian, log_density
from seqdamage.simnet import run_session
from seqdamage.topologies import chain4_config, shake_table_config


@pytest.fixture(scope="module")
def chain4():
    return build_model(chain4_config())


def test_no_change_streams_follow_pre_change_model(chain4):
    sc = ScenarioSpec(chain4, {}, 5000, 1, seed=1)
    streams = generate_streams(sc)
    for sid in chain4.sensor_ids:
        g = fit_gaussian(streams[sid].features)
        pre = chain4.registry[sid].pre
        assert abs(g.mean[0] - pre.mean[0]) < 4 * math.sqrt(pre.cov[0, 0] / 5000)
        assert abs(g.cov[0, 0] / pre.cov[0, 0] - 1) < 0.06


def test_unaffected_sensor_is_untouched(chain4):
    base = generate_streams(ScenarioSpec(chain4, {}, 12, 1, seed=2))
    hit = generate_streams(ScenarioSpec(chain4, {1: 5}, 12, 1, seed=2))
    assert np.array_equal(base[4].features, hit[4].features)
    assert not np.array_equal(base[1].features, hit[1].features)


def test_segments_follow_active_sets(chain4):
    base = generate_streams(ScenarioSpec(chain4, {}, 10, 1, seed=3))
    hit = generate_streams(ScenarioSpec(chain4, {1: 3, 2: 6}, 10, 1, seed=3))
    d = chain4.registry[1]
    z = (base[1].features[:, 0] - d.pre.mean[0]) / math.sqrt(d.pre.cov[0, 0])
    for t in range(1, 11):
        active = frozenset(j for j, lam in [(1, 3), (2, 6)] if t >= lam)
        m = d.model_for(active)
        assert hit[1].features[t - 1, 0] == pytest.approx(m.mean[0] + math.sqrt(m.cov[0, 0]) * z[t - 1], abs=1e-12)


def test_scenario_validation(chain4):
    with pytest.raises(DataError):
        ScenarioSpec(chain4, {1: 0}, 10)
    with pytest.raises(DataError):
        ScenarioSpec(chain4, {1: 11}, 10)
    with pytest.raises(DataError):
        ScenarioSpec(chain4, {}, 10, 0)
    with pytest.raises(ModelError):
        ScenarioSpec(chain4, {9: 2}, 10)
    with pytest.raises(ValueError):
        monte_carlo_curve(ScenarioSpec(chain4, {}, 3, 1), RuleSpec("min", (1,)), [1.5])


def test_rule_change_times(chain4):
    sc = ScenarioSpec(chain4, {1: 4, 2: 7}, 10)
    assert sc.rule_change_time(RuleSpec("min", (1, 2))) == 4
    assert sc.rule_change_time(RuleSpec("max", (1, 2))) == 7
    assert sc.rule_change_time(RuleSpec("max", (1, 3))) is None
    assert sc.rule_change_time(RuleSpec("single", (3,))) is None


def test_high_information_scenario_detects_fast():
    model = build_model(shake_table_config())
    sc = ScenarioSpec(model, {1: 20}, 30, 60, seed=4)
    (pt,) = monte_carlo_curve(sc, RuleSpec("min", (1,)), [1e-8])
    assert pt.mean_delay <= 2.0
    assert pt.bound == pytest.approx(abs(math.log(1e-8)) / (-math.log(0.999) + 16.77), rel=1e-3)
    assert pt.n_delay + pt.censored + round(pt.fa_rate * 60) == 60


def test_uninformative_scenario_reports_without_delays():
    cfg = chain4_config(shift=0.0)
    model = build_model(cfg)
    sc = ScenarioSpec(model, {1: 3}, 12, 20, seed=5)
    pts = monte_carlo_curve(sc, RuleSpec("min", (1,)), [0.5, 1e-2], method="local")
    assert all(0.0 <= p.fa_rate <= 1.0 for p in pts)
    assert all(p.replications == 20 for p in pts)


def test_posterior_mode_recovers_planted_time():
    model = build_model(chain4_config(shift=2.0))
    sc = ScenarioSpec(model, {1: 8}, 20, 50, seed=6)
    hits = 0
    for rep in range(50):
        log = run_session(model, generate_streams(sc, rep), [RuleSpec("min", (1,))], stop_when_done=False, record_beliefs=True)
        marg = log.beliefs[-1][1].marginal((1,))
        hits += abs(int(np.argmax(marg)) + 1 - 8) <= 1
    assert hits / 50 >= 0.8


def test_curve_csv(tmp_path, chain4):
    sc = ScenarioSpec(chain4, {1: 3}, 10, 5, seed=7)
    pts = compare_mp_local(sc, [RuleSpec("min", (1,))], [0.5, 1e-3])
    assert {(p.method, p.alpha_fa) for p in pts} == {("mp", 0.5), ("mp", 1e-3), ("local", 0.5), ("local", 1e-3)}
    p = tmp_path / "curve.csv"
    write_curve_csv(pts, p, ["config: x"])
    lines = p.read_text().splitlines()
    assert lines[0] == "# config: x"
    rows = list(csv.DictReader(lines[1:]))
    assert list(rows[0]) == CURVE_COLUMNS
    assert len(rows) == 4
    table = curve_table(pts)
    assert table[("local", "min:1")][1e-3].method == "local"


def test_monte_carlo_is_deterministic(chain4):
    sc = ScenarioSpec(chain4, {1: 3}, 10, 8, seed=8)
    a = monte_carlo_curve(sc, RuleSpec("min", (1, 2)), [0.5, 1e-4])
    b = monte_carlo_curve(sc, RuleSpec("min", (1, 2)), [0.5, 1e-4])
    assert [p.row() for p in a] == [p.row() for p in b]


def _slopes(points, method, rule, min_log_alpha=0.0):
    pts = sorted((p for p in points if p.method == method and p.rule == rule), key=lambda p: p.log_alpha_abs)
    return [p.delay_slope for p in pts if p.log_alpha_abs >= min_log_alpha]


def _non_increasing(seq, allowance=0.10):
    return all(b <= a * (1 + allowance) for a, b in zip(seq, seq[1:]))


def test_normalized_delay_slope_flattens():
    pts = asce_delay_points()
    assert _non_increasing(_slopes(pts, "mp", "max:1,3"))
    # once delays exceed a couple of steps the min-rule slope is flat as well
    assert _non_increasing(_slopes(pts, "mp", "min:1,3", min_log_alpha=abs(math.log(1e-4))))


def test_mp_beats_local_per_point():
    table = curve_table(asce_delay_points())
    for rule in ("min:1,3", "max:1,3"):
        for a, p in table[("mp", rule)].items():
            local = table[("local", rule)][a]
            assert p.mean_delay <= local.mean_delay or math.isnan(local.mean_delay)
