"""Damage variables, sensors with local domains, and the sensor communication tree.

Each sensor ``i`` sees a set ``S_i`` of damage variables. Its local kernel is
the likelihood of its own feature history given the change times of ``S_i``,
times the prior factors of the variables it owns. Every prior factor is owned
by exactly one sensor, so the product of all kernels is the joint
distribution of change times and features.

Change times live on a shared grid of bins. Bin ``k`` covers change times
``starts[k] .. starts[k+1]-1`` and the last bin (start ``N + 1``) means
"not triggered yet". Without a window the bins are the single times
``1..N+1``.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DataError, ModelError, TreeValidationError
from .models import (
    DistributionRegistry,
    GaussianModel,
    GeometricPrior,
    SensorDensities,
    log_density,
    nonempty_subsets,
    parse_subset_key,
    prior_mass,
    subset_key,
)


@dataclass(frozen=True)
class DamageVariable:
    id: int
    prior: GeometricPrior


@dataclass(frozen=True)
class SensorNode:
    id: int
    domain: tuple[int, ...]
    owned_priors: frozenset
    dim: int


@dataclass(frozen=True)
class SensorTree:
    edges: tuple[tuple[int, int], ...]
    root: int

    def adjacency(self) -> dict[int, list[int]]:
        adj = defaultdict(list)
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return {k: sorted(v) for k, v in adj.items()}


@dataclass
class DamageModel:
    variables: dict[int, DamageVariable]
    sensors: dict[int, SensorNode]
    tree: SensorTree
    registry: DistributionRegistry
    _adj: dict = field(default=None, repr=False)

    def __post_init__(self):
        self._adj = self.tree.adjacency()

    @property
    def sensor_ids(self) -> list[int]:
        return sorted(self.sensors)

    def neighbors(self, sensor_id) -> list[int]:
        return self._adj.get(sensor_id, [])

    def prior(self, j) -> GeometricPrior:
        return self.variables[j].prior

    def separator(self, i, q) -> tuple[int, ...]:
        return tuple(sorted(set(self.sensors[i].domain) & set(self.sensors[q].domain)))

    def covering_sensor(self, target) -> int:
        """Lowest-id sensor whose local domain contains every variable in ``target``."""
        target = set(target)
        for sid in self.sensor_ids:
            if target <= set(self.sensors[sid].domain):
                return sid
        raise ModelError(f"no sensor covers variables {sorted(target)}")

    def rooted_order(self, root=None) -> tuple[list[int], dict[int, int | None]]:
        """Breadth-first order from ``root`` and the parent of each sensor."""
        root = self.tree.root if root is None else root
        parent = {root: None}
        order = [root]
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in self.neighbors(u):
                if v not in parent:
                    parent[v] = u
                    order.append(v)
                    queue.append(v)
        return order, parent

    def restricted_to(self, sensor_id) -> "DamageModel":
        """Single-sensor model: only ``sensor_id``'s data and all priors of its domain."""
        s = self.sensors[sensor_id]
        variables = {j: self.variables[j] for j in s.domain}
        node = SensorNode(s.id, s.domain, frozenset(s.domain), s.dim)
        reg = DistributionRegistry({sensor_id: self.registry[sensor_id]})
        return DamageModel(variables, {sensor_id: node}, SensorTree((), sensor_id), reg)

    def with_root(self, root) -> "DamageModel":
        if root not in self.sensors:
            raise ModelError(f"unknown root sensor {root}")
        return DamageModel(self.variables, self.sensors, SensorTree(self.tree.edges, root), self.registry)


# ---------------------------------------------------------------------------
# construction and validation


def build_model(config: Mapping, check: bool = True) -> DamageModel:
    """Cross-reference a config mapping into a :class:`DamageModel`.

    With ``check=False`` tree violations are left for :func:`validate_tree` to
    report; reference and registry errors always raise.
    """
    try:
        var_cfg = config["variables"]
        sensor_cfg = config["sensors"]
    except KeyError as exc:
        raise ModelError(f"config is missing {exc.args[0]!r}") from None

    variables = {}
    for v in var_cfg:
        j = int(v["id"])
        if j in variables:
            raise ModelError(f"duplicate damage variable id {j}")
        variables[j] = DamageVariable(j, GeometricPrior(float(v["rho"])))

    sensors, dens = {}, {}
    owned_by = {}
    explicit = any("owned_priors" in s for s in sensor_cfg)
    for s in sensor_cfg:
        sid = int(s["id"])
        if sid in sensors:
            raise ModelError(f"duplicate sensor id {sid}")
        domain = tuple(sorted(int(j) for j in s["domain"]))
        if not domain:
            raise ModelError(f"sensor {sid}: empty local domain")
        for j in domain:
            if j not in variables:
                raise ModelError(f"sensor {sid}: unknown damage variable {j}")
        g = GaussianModel.from_dict(s["g"])
        dim = int(s.get("dim", g.dim))
        if g.dim != dim:
            raise ModelError(f"sensor {sid}: pre-change model has dimension {g.dim}, declared {dim}")
        post = {}
        for key, fd in (s.get("f") or {}).items():
            A = parse_subset_key(key)
            if not A or not A <= set(domain):
                raise ModelError(f"sensor {sid}: subset {{{key}}} is not a nonempty subset of its domain")
            post[A] = GaussianModel.from_dict(fd)
        dens[sid] = SensorDensities(domain, g, post)
        owned = frozenset(int(j) for j in s.get("owned_priors", []))
        if not owned <= set(domain):
            raise ModelError(f"sensor {sid}: owned priors {sorted(owned)} outside its domain")
        for j in owned:
            if j in owned_by:
                raise ModelError(f"prior of variable {j} owned by both sensor {owned_by[j]} and sensor {sid}")
            owned_by[j] = sid
        sensors[sid] = SensorNode(sid, domain, owned, dim)

    if not explicit:
        # default: lowest-id sensor containing the variable owns its prior
        owned = defaultdict(set)
        for j in sorted(variables):
            holders = [sid for sid in sorted(sensors) if j in sensors[sid].domain]
            if holders:
                owned[holders[0]].add(j)
                owned_by[j] = holders[0]
        sensors = {sid: SensorNode(n.id, n.domain, frozenset(owned[sid]), n.dim) for sid, n in sensors.items()}
    orphans = sorted(set(variables) - set(owned_by))
    if orphans:
        raise ModelError(f"damage variables {orphans} are not in any sensor's domain (prior unowned)")

    edges = []
    for e in config.get("edges", []):
        a, b = int(e[0]), int(e[1])
        for x in (a, b):
            if x not in sensors:
                raise ModelError(f"edge ({a}, {b}) refers to unknown sensor {x}")
        edges.append((a, b))
    root = int(config.get("root", min(sensors)))
    if root not in sensors:
        raise ModelError(f"root {root} is not a sensor")

    registry = DistributionRegistry(dens)
    registry.validate()
    model = DamageModel(variables, sensors, SensorTree(tuple(edges), root), registry)
    if check:
        problems = validate_tree(model)
        if problems:
            raise TreeValidationError(problems)
    return model


def validate_tree(model: DamageModel) -> list[str]:
    """Structural violations of the sensor tree; an empty list means OK."""
    out = []
    ids = set(model.sensors)
    seen = set()
    for a, b in model.tree.edges:
        if a == b:
            out.append(f"self-loop at sensor {a}")
        key = frozenset((a, b))
        if key in seen:
            out.append(f"duplicate edge ({a}, {b})")
        seen.add(key)
        if not set(model.sensors[a].domain) & set(model.sensors[b].domain):
            out.append(f"edge ({a}, {b}): no shared variable")

    # union-find for cycles
    parent = {i: i for i in ids}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in model.tree.edges:
        if a == b:
            continue
        ra, rb = find(a), find(b)
        if ra == rb:
            out.append(f"edge ({a}, {b}) closes a cycle")
        else:
            parent[ra] = rb
    comps = {find(i) for i in ids}
    if len(comps) > 1:
        out.append(f"sensor graph is disconnected ({len(comps)} components)")

    adj = model.tree.adjacency()
    for j in sorted(model.variables):
        holders = {sid for sid in ids if j in model.sensors[sid].domain}
        if len(holders) <= 1:
            continue
        start = min(holders)
        reach, queue = {start}, deque([start])
        while queue:
            u = queue.popleft()
            for v in adj.get(u, []):
                if v in holders and v not in reach:
                    reach.add(v)
                    queue.append(v)
        if reach != holders:
            out.append(
                f"running intersection violated for variable {j}: sensors {sorted(holders)} are not connected in the tree"
            )
    return out


def model_to_config(model: DamageModel) -> dict:
    sensors = []
    for sid in model.sensor_ids:
        s = model.sensors[sid]
        d = model.registry[sid]
        sensors.append(
            {
                "id": sid,
                "domain": list(s.domain),
                "dim": s.dim,
                "owned_priors": sorted(s.owned_priors),
                "g": d.pre.to_dict(),
                "f": {subset_key(A): d.post[A].to_dict() for A in nonempty_subsets(s.domain)},
            }
        )
    return {
        "variables": [{"id": j, "rho": model.variables[j].prior.rho} for j in sorted(model.variables)],
        "sensors": sensors,
        "edges": [list(e) for e in model.tree.edges],
        "root": model.tree.root,
    }


# ---------------------------------------------------------------------------
# kernels


def local_kernel(model: DamageModel, sensor_id, assignment: Mapping[int, int], history) -> float:
    """Log local kernel at one change-time assignment, evaluated directly.

    ``history`` holds the sensor's features ``x[1..N]`` as an ``(N, m)`` array;
    every change time must lie in ``1..N+1``.
    """
    s = model.sensors[sensor_id]
    x = np.asarray(history, dtype=float).reshape(len(history), -1)
    N = x.shape[0]
    for j in s.domain:
        if not 1 <= assignment[j] <= N + 1:
            raise ModelError(f"change time {assignment[j]} for variable {j} outside 1..{N + 1}")
    total = sum(np.log(prior_mass(model.prior(j), assignment[j], N)) for j in s.owned_priors)
    for t in range(1, N + 1):
        active = frozenset(j for j in s.domain if assignment[j] <= t)
        total += model.registry.active_set_log_density(sensor_id, active, x[t - 1])
    return float(total)


def advance_starts(starts: np.ndarray, window: int | None) -> tuple[np.ndarray, int]:
    """Bin starts after one more step, and how many leading bins were merged into one."""
    N_next = int(starts[-1]) + 1
    grown = np.append(starts, N_next)
    if window is not None and grown.size > window + 1:
        k = grown.size - window
        return np.concatenate([[grown[0]], grown[k:]]), k
    return grown, 0


def bin_log_prior(prior: GeometricPrior, starts: np.ndarray) -> np.ndarray:
    """Log prior mass of every bin; the last bin holds the survival mass."""
    starts = np.asarray(starts)
    out = np.empty(starts.size)
    if starts.size > 1:
        out[:-1] = prior.log_mass(starts[:-1], starts[1:] - 1)
    out[-1] = prior.log_mass(starts[-1])
    return out


def _axis_shape(k, n, B):
    shape = [1] * n
    shape[k] = B
    return shape


class KernelCache:
    """Incremental log local kernel of one sensor over the bin grid.

    ``loglik`` has one axis per domain variable (sorted ids). Each step costs
    one density evaluation per active subset plus one pass over the table.
    """

    def __init__(self, model: DamageModel, sensor_id, window: int | None = None):
        self.model = model
        self.sensor_id = sensor_id
        self.node = model.sensors[sensor_id]
        self.window = window
        self.domain = self.node.domain
        self.starts = np.array([1])
        self.loglik = np.zeros((1,) * len(self.domain))
        self._buf = self.loglik
        dens = model.registry[sensor_id]
        k = len(self.domain)
        # subset code: bit b set <=> domain[b] active
        self._models = []
        for code in range(2**k):
            A = frozenset(self.domain[b] for b in range(k) if code >> b & 1)
            self._models.append(dens.model_for(A))

    @property
    def horizon(self) -> int:
        return int(self.starts[-1]) - 1

    def step(self, x) -> None:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.node.dim,):
            raise DataError(f"sensor {self.sensor_id}: feature shape {x.shape} != ({self.node.dim},)")
        if not np.all(np.isfinite(x)):
            raise DataError(f"sensor {self.sensor_id}: non-finite feature value")
        k = len(self.domain)
        B = self.starts.size
        buf = self._reserve(B + 1)
        # the "not yet" bin splits into "now" and "not yet"; both share the past
        for ax in range(k):
            dst = tuple(slice(0, B + 1) if b < ax else (B if b == ax else slice(0, B)) for b in range(k))
            src = dst[:ax] + (B - 1,) + dst[ax + 1 :]
            buf[dst] = buf[src]
        ll = buf[(slice(0, B + 1),) * k]
        dens = [log_density(m, x) for m in self._models]
        # at this step every bin but the last is active
        for code, d in enumerate(dens):
            block = tuple(slice(0, B) if code >> b & 1 else slice(B, B + 1) for b in range(k))
            ll[block] += d
        starts, merged = advance_starts(self.starts, self.window)
        if merged:
            ll = self._buf = self._merge(ll, merged)
        self.loglik = ll
        self.starts = starts

    def _reserve(self, size: int) -> np.ndarray:
        """Backing array with room for ``size`` bins per axis, holding the current table."""
        if self._buf.shape[0] < size:
            k = len(self.domain)
            grown = np.empty((max(size, int(1.25 * size) + 1),) * k)
            grown[(slice(0, self.loglik.shape[0]),) * k] = self.loglik
            self._buf = grown
        return self._buf

    def _merge(self, ll, k_merge):
        grown = np.append(self.starts, self.starts[-1] + 1)
        k = len(self.domain)
        for ax, j in enumerate(self.domain):
            lp = bin_log_prior(self.model.prior(j), grown)[:k_merge]
            w = (lp - logsumexp(lp)).reshape(_axis_shape(ax, k, k_merge))
            head = np.take(ll, np.arange(k_merge), axis=ax)
            head = logsumexp(head + w, axis=ax, keepdims=True)
            ll = np.concatenate([head, np.take(ll, np.arange(k_merge, ll.shape[ax]), axis=ax)], axis=ax)
        return ll

    def kernel(self) -> np.ndarray:
        """Log local kernel table (likelihood plus owned prior factors)."""
        k = len(self.domain)
        B = self.starts.size
        # the owned priors are separable: sum them on a small grid, then add once
        prior = np.zeros((1,) * k)
        for ax, j in enumerate(self.domain):
            if j in self.node.owned_priors:
                prior = prior + bin_log_prior(self.model.prior(j), self.starts).reshape(_axis_shape(ax, k, B))
        return self.loglik + prior


def kernel_tables(model: DamageModel, streams: Mapping[int, np.ndarray], N: int | None = None, window=None):
    """Kernel tables of every sensor after ingesting ``N`` steps of each stream."""
    caches = {sid: KernelCache(model, sid, window) for sid in model.sensor_ids}
    arrays = {sid: np.asarray(streams[sid], dtype=float).reshape(len(streams[sid]), -1) for sid in caches}
    T = min(a.shape[0] for a in arrays.values()) if N is None else N
    for t in range(T):
        for sid, c in caches.items():
            c.step(arrays[sid][t])
    return {sid: c.kernel() for sid, c in caches.items()}, caches[model.sensor_ids[0]].starts
