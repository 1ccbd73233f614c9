"""Exact sum-product inference over the sensor tree, posterior extraction for
the minimum / maximum / single-variable rules, and asymptotic delay bounds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ModelError
from .graph import DamageModel
from .models import kl_divergence

RULE_KINDS = ("min", "max", "single", "subset-min", "subset-max")


@dataclass(frozen=True)
class MessageTable:
    sender: int
    receiver: int
    scope: tuple[int, ...]
    log_values: np.ndarray

    @property
    def n_entries(self) -> int:
        return int(self.log_values.size)


@dataclass(frozen=True)
class BeliefTable:
    sensor: int
    scope: tuple[int, ...]
    probs: np.ndarray

    def marginal(self, variables: Sequence[int]) -> np.ndarray:
        """Marginal table over ``variables`` (axes in sorted variable order)."""
        keep = sorted(variables)
        missing = set(keep) - set(self.scope)
        if missing:
            raise ModelError(f"variables {sorted(missing)} are not in the scope of sensor {self.sensor}")
        drop = tuple(ax for ax, j in enumerate(self.scope) if j not in keep)
        return self.probs.sum(axis=drop)


@dataclass(frozen=True)
class RuleSpec:
    kind: str
    targets: tuple[int, ...]
    alpha_fa: float = 1e-8

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}; expected one of {RULE_KINDS}")
        targets = tuple(sorted(set(int(j) for j in self.targets)))
        if not targets:
            raise ValueError("rule needs at least one target variable")
        if self.kind == "single" and len(targets) != 1:
            raise ValueError("a single rule takes exactly one variable")
        if not 0.0 < self.alpha_fa < 1.0:
            raise ValueError("alpha_fa must lie in (0, 1)")
        object.__setattr__(self, "targets", targets)

    @property
    def family(self) -> str:
        return {"subset-min": "min", "subset-max": "max"}.get(self.kind, self.kind)

    @property
    def label(self) -> str:
        return f"{self.kind}:{','.join(str(j) for j in self.targets)}"

    @classmethod
    def parse(cls, text: str, alpha_fa: float = 1e-8) -> "RuleSpec":
        """Parse ``min:1,3`` / ``max:1,3`` / ``single:3`` style rule strings."""
        try:
            kind, rest = text.strip().split(":", 1)
            targets = tuple(int(s) for s in rest.split(",") if s.strip())
        except ValueError:
            raise ValueError(f"bad rule {text!r}; expected e.g. 'min:1,3'") from None
        return cls(kind.strip(), targets, alpha_fa)

    def with_alpha(self, alpha_fa: float) -> "RuleSpec":
        return RuleSpec(self.kind, self.targets, alpha_fa)


def align(table: np.ndarray, scope: Sequence[int], target: Sequence[int]) -> np.ndarray:
    """Reshape ``table`` over ``scope`` so it broadcasts against axes ``target``."""
    pos = {j: ax for ax, j in enumerate(target)}
    shape = [1] * len(target)
    for ax, j in enumerate(scope):
        shape[pos[j]] = table.shape[ax]
    return table.reshape(shape)


def compute_message(
    model: DamageModel,
    sender: int,
    receiver: int,
    kernel: np.ndarray,
    incoming: Mapping[int, MessageTable],
) -> MessageTable:
    """Message ``sender -> receiver``: marginalize the kernel times all other incoming messages."""
    if receiver not in model.neighbors(sender):
        raise ModelError(f"no edge between sensors {sender} and {receiver}")
    scope = model.separator(sender, receiver)
    if not scope:
        raise ModelError(f"edge ({sender}, {receiver}) has an empty separator")
    dom = model.sensors[sender].domain
    acc = kernel
    for r in model.neighbors(sender):
        if r == receiver:
            continue
        if r not in incoming:
            raise ModelError(f"sensor {sender} has no message from {r} yet")
        m = incoming[r]
        acc = acc + align(m.log_values, m.scope, dom)
    drop = tuple(ax for ax, j in enumerate(dom) if j not in scope)
    vals = logsumexp(acc, axis=drop) if drop else acc
    return MessageTable(sender, receiver, scope, np.asarray(vals))


def normalize_log(table: np.ndarray) -> np.ndarray:
    top = table.max()
    if not np.isfinite(top):
        raise ModelError("belief has no finite mass (observations impossible under the model)")
    out = np.subtract(table, top)
    np.exp(out, out=out)
    out /= out.sum()
    return out


def compute_belief(model: DamageModel, sensor: int, kernel: np.ndarray, incoming: Mapping[int, MessageTable]):
    dom = model.sensors[sensor].domain
    acc = kernel
    for r in model.neighbors(sensor):
        m = incoming[r]
        acc = acc + align(m.log_values, m.scope, dom)
    return BeliefTable(sensor, dom, normalize_log(acc))


def schedule(model: DamageModel, root=None) -> list[tuple[int, int]]:
    """Directed edges in sending order: leaves to root, then root to leaves."""
    order, parent = model.rooted_order(root)
    up = [(v, parent[v]) for v in reversed(order) if parent[v] is not None]
    down = [(parent[v], v) for v in order if parent[v] is not None]
    return up + down


def full_sweep(model: DamageModel, kernels: Mapping[int, np.ndarray], root=None):
    """Run both message phases and return ``(beliefs, messages)``.

    ``messages`` lists every directed message in sending order; there are
    exactly ``2 * (n_sensors - 1)`` of them.
    """
    inbox: dict[int, dict[int, MessageTable]] = {sid: {} for sid in model.sensor_ids}
    sent = []
    for a, b in schedule(model, root):
        msg = compute_message(model, a, b, kernels[a], inbox[a])
        inbox[b][a] = msg
        sent.append(msg)
    beliefs = {sid: compute_belief(model, sid, kernels[sid], inbox[sid]) for sid in model.sensor_ids}
    return beliefs, sent


# ---------------------------------------------------------------------------
# rule posteriors; the last bin on every axis is "not triggered by N"


def _check(belief: BeliefTable, S) -> list[int]:
    S = sorted(set(S))
    if not S or not set(S) <= set(belief.scope):
        raise ModelError(f"variables {S} are not within the scope {belief.scope} of sensor {belief.sensor}")
    return S


def posterior_min(belief: BeliefTable, S) -> float:
    """``P(min_{j in S} lambda_j <= N)``: one minus the mass where all of S are untriggered."""
    marg = belief.marginal(_check(belief, S))
    return float(1.0 - marg[(-1,) * marg.ndim])


def posterior_max(belief: BeliefTable, S) -> float:
    """``P(max_{j in S} lambda_j <= N)``: mass where every variable of S has triggered."""
    marg = belief.marginal(_check(belief, S))
    return float(marg[(slice(0, -1),) * marg.ndim].sum())


def posterior_single(belief: BeliefTable, j: int) -> float:
    marg = belief.marginal(_check(belief, [j]))
    return float(marg[:-1].sum())


def rule_posterior(belief: BeliefTable, rule: RuleSpec) -> float:
    if rule.family == "min":
        return posterior_min(belief, rule.targets)
    if rule.family == "max":
        return posterior_max(belief, rule.targets)
    return posterior_single(belief, rule.targets[0])


def rule_ccdf(belief: BeliefTable, rule: RuleSpec) -> float:
    """``1 - P(...)`` summed from the complementary cells (keeps precision near 1)."""
    marg = belief.marginal(_check(belief, rule.targets))
    if rule.family in ("min", "single"):
        return float(marg[(-1,) * marg.ndim])
    late = np.zeros(marg.shape, dtype=bool)
    for ax in range(marg.ndim):
        idx = [slice(None)] * marg.ndim
        idx[ax] = -1
        late[tuple(idx)] = True
    return float(marg[late].sum())


# ---------------------------------------------------------------------------
# delay bounds


def sensors_containing(model: DamageModel, j: int) -> list[int]:
    return [sid for sid in model.sensor_ids if j in model.sensors[sid].domain]


def single_kl(model: DamageModel, sensor: int, j: int) -> float:
    """KL of the post-change model with only ``j`` triggered against the pre-change model."""
    d = model.registry[sensor]
    return kl_divergence(d.post[frozenset([j])], d.pre)


def delay_bound_rule(model: DamageModel, rule: RuleSpec, alpha_fa: float | None = None) -> float:
    """Asymptotic expected delay ``|ln alpha| / (prior term + information term)`` for a rule."""
    alpha = rule.alpha_fa if alpha_fa is None else alpha_fa
    S = rule.targets
    for j in S:
        if j not in model.variables:
            raise ModelError(f"unknown damage variable {j}")
    prior_term = -sum(np.log1p(-model.prior(j).rho) for j in S)
    if rule.family in ("single", "min"):
        info = sum(single_kl(model, i, j) for j in S for i in sensors_containing(model, j))
    else:
        holders = [sid for sid in model.sensor_ids if set(S) <= set(model.sensors[sid].domain)]
        if not holders:
            raise ModelError(f"max-rule bound undefined: no sensor's domain contains {list(S)}")
        info = sum(
            kl_divergence(model.registry[i].post[frozenset(S)], model.registry[i].pre) for i in holders
        )
    return float(abs(np.log(alpha)) / (prior_term + info))
