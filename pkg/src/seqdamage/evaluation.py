"""Synthetic streams with planted change points and Monte Carlo estimates of
expected detection delay and false-alarm rate over a grid of thresholds."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dsf import DsfStream
from .errors import DataError, ModelError
from .graph import DamageModel
from .inference import RuleSpec, delay_bound_rule
from .simnet import first_crossing, run_local_baseline, run_session

CURVE_COLUMNS = ["alpha", "log_alpha_abs", "rule", "method", "mean_delay", "delay_slope", "fa_rate", "censored", "bound"]


@dataclass(frozen=True)
class ScenarioSpec:
    model: DamageModel
    planted: Mapping[int, int | None]
    length: int
    replications: int = 200
    seed: int = 0

    def __post_init__(self):
        for j, t in self.planted.items():
            if j not in self.model.variables:
                raise ModelError(f"planted change for unknown variable {j}")
            if t is not None and not 1 <= t <= self.length:
                raise DataError(f"planted change time {t} of variable {j} outside 1..{self.length}")
        if self.length < 1:
            raise DataError("stream length must be positive")
        if self.replications < 1:
            raise DataError("need at least one replication")

    def change_time(self, j) -> int | None:
        return self.planted.get(j)

    def rule_change_time(self, rule: RuleSpec) -> int | None:
        """Planted value of ``min`` / ``max`` / single over the rule's targets (None: never)."""
        times = [self.change_time(j) for j in rule.targets]
        if rule.family == "max":
            return None if any(t is None for t in times) else max(times)
        finite = [t for t in times if t is not None]
        return min(finite) if finite else None

    def rng(self, replication: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, replication])


@dataclass(frozen=True)
class CurvePoint:
    alpha_fa: float
    rule: str
    method: str
    mean_delay: float
    fa_rate: float
    n_delay: int
    censored: int
    replications: int
    bound: float = math.nan

    @property
    def log_alpha_abs(self) -> float:
        return abs(math.log(self.alpha_fa))

    @property
    def delay_slope(self) -> float:
        return self.mean_delay / self.log_alpha_abs

    def row(self) -> dict:
        return {
            "alpha": self.alpha_fa,
            "log_alpha_abs": self.log_alpha_abs,
            "rule": self.rule,
            "method": self.method,
            "mean_delay": self.mean_delay,
            "delay_slope": self.delay_slope,
            "fa_rate": self.fa_rate,
            "censored": self.censored,
            "bound": self.bound,
        }


def generate_streams(scenario: ScenarioSpec, replication: int = 0, rng=None) -> dict[int, DsfStream]:
    """Draw every sensor's stream from the density of its currently active set."""
    model = scenario.model
    rng = scenario.rng(replication) if rng is None else rng
    T = scenario.length
    t = np.arange(1, T + 1)
    out = {}
    for sid in model.sensor_ids:
        node = model.sensors[sid]
        dens = model.registry[sid]
        z = rng.standard_normal((T, node.dim))
        active = np.zeros((T, len(node.domain)), dtype=bool)
        for k, j in enumerate(node.domain):
            lam = scenario.change_time(j)
            if lam is not None:
                active[:, k] = t >= lam
        x = np.empty((T, node.dim))
        for pattern in np.unique(active, axis=0):
            rows = np.all(active == pattern, axis=1)
            A = frozenset(j for j, on in zip(node.domain, pattern) if on)
            m = dens.model_for(A)
            x[rows] = m.mean + z[rows] @ m._chol.T
        out[sid] = DsfStream(sid, x)
    return out


def _outcomes(traces: Mapping[str, list], rule: RuleSpec, lam, alpha):
    """Delays, false alarms and censored counts of one rule at one threshold."""
    delays, fa, cens = [], 0, 0
    for trace in traces:
        tau = first_crossing(trace, alpha)
        if tau is None:
            cens += 1
        elif lam is None or tau < lam:
            fa += 1
        else:
            delays.append(tau - lam)
    return delays, fa, cens


def _sessions(scenario, rules, alpha_min, methods, local_sensor, window):
    """Posterior traces per (method, rule label) over all replications."""
    strict = [r.with_alpha(alpha_min) for r in rules]
    traces = {(m, r.label): [] for m in methods for r in rules}
    for rep in range(scenario.replications):
        streams = generate_streams(scenario, rep)
        for m in methods:
            if m == "mp":
                log = run_session(scenario.model, streams, strict, window=window)
            else:
                log = run_local_baseline(scenario.model, local_sensor, streams, strict, window=window)
            for r in strict:
                traces[(m, r.label)].append(log.posterior_trace(r.label))
    return traces


def default_local_sensor(model: DamageModel, rules: Sequence[RuleSpec]) -> int:
    targets = set().union(*(r.targets for r in rules))
    return model.covering_sensor(targets)


def _curve_points(scenario, rules, alpha_grid, traces, methods, local_sensor):
    out = []
    local_model = scenario.model.restricted_to(local_sensor) if "local" in methods else None
    for m in methods:
        bound_model = scenario.model if m == "mp" else local_model
        for r in rules:
            lam = scenario.rule_change_time(r)
            for a in alpha_grid:
                delays, fa, cens = _outcomes(traces[(m, r.label)], r, lam, a)
                try:
                    bound = delay_bound_rule(bound_model, r, a)
                except (ModelError, ZeroDivisionError):
                    bound = math.nan
                out.append(
                    CurvePoint(
                        a,
                        r.label,
                        m,
                        float(np.mean(delays)) if delays else math.nan,
                        fa / scenario.replications,
                        len(delays),
                        cens,
                        scenario.replications,
                        bound,
                    )
                )
    return out


def _check_grid(alpha_grid):
    grid = [float(a) for a in alpha_grid]
    if not grid or any(not 0.0 < a < 1.0 for a in grid):
        raise ValueError("alpha grid values must lie in (0, 1)")
    return grid


def monte_carlo_curve(
    scenario: ScenarioSpec,
    rule: RuleSpec,
    alpha_grid: Sequence[float],
    method: str = "mp",
    local_sensor: int | None = None,
    window: int | None = None,
) -> list[CurvePoint]:
    """Delay / false-alarm curve of one rule for MP (``method="mp"``) or LOCAL.

    Each replication runs one session at the strictest threshold; the first
    crossing of every looser threshold is read off the same posterior trace.
    """
    grid = _check_grid(alpha_grid)
    if method not in ("mp", "local"):
        raise ValueError("method must be 'mp' or 'local'")
    if method == "local" and local_sensor is None:
        local_sensor = default_local_sensor(scenario.model, [rule])
    traces = _sessions(scenario, [rule], min(grid), [method], local_sensor, window)
    return _curve_points(scenario, [rule], grid, traces, [method], local_sensor)


def compare_mp_local(
    scenario: ScenarioSpec,
    rules: Sequence[RuleSpec],
    alpha_grid: Sequence[float],
    local_sensor: int | None = None,
    window: int | None = None,
) -> list[CurvePoint]:
    """Paired MP and LOCAL curves for several rules on identical streams."""
    grid = _check_grid(alpha_grid)
    rules = list(rules)
    if local_sensor is None:
        local_sensor = default_local_sensor(scenario.model, rules)
    traces = _sessions(scenario, rules, min(grid), ["mp", "local"], local_sensor, window)
    return _curve_points(scenario, rules, grid, traces, ["mp", "local"], local_sensor)


def write_curve_csv(points: Sequence[CurvePoint], path, comments: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for p in points:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in p.row().items()})


def curve_table(points: Sequence[CurvePoint]) -> dict[tuple[str, str], dict[float, CurvePoint]]:
    """Index points as ``table[(method, rule)][alpha]``."""
    table: dict = {}
    for p in points:
        table.setdefault((p.method, p.rule), {})[p.alpha_fa] = p
    return table
