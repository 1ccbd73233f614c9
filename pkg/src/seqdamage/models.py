"""Gaussian feature models, geometric change-time priors and the registry of
post-change densities indexed by the set of triggered damage variables."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DataError, ModelError, ModelIncompleteError

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianModel:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ModelError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if not np.allclose(cov, cov.T, atol=1e-12, rtol=0):
            raise ModelError("covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ModelError("covariance is not positive definite") from None
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_chol_inv", solve_triangular(chol, np.eye(mean.size), lower=True))
        object.__setattr__(self, "_logdet", 2.0 * float(np.sum(np.log(np.diag(chol)))))

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def from_dict(cls, d: Mapping) -> "GaussianModel":
        return cls(d["mean"], d["cov"])

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        shape = (self.dim,) if size is None else (int(size), self.dim)
        return self.mean + rng.standard_normal(shape) @ self._chol.T


@dataclass(frozen=True)
class GeometricPrior:
    rho: float

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ModelError(f"geometric prior parameter must lie in (0, 1), got {self.rho}")

    def log_mass(self, lo, hi=None):
        """Log prior mass of change times in ``[lo, hi]`` (``hi=None`` means unbounded)."""
        lo = np.asarray(lo, dtype=float)
        log_q = np.log1p(-self.rho)
        head = (lo - 1.0) * log_q
        if hi is None:
            return head
        width = np.asarray(hi, dtype=float) - lo + 1.0
        return head + np.log(-np.expm1(width * log_q))


def fit_gaussian(samples, ridge: float | None = None) -> GaussianModel:
    """Sample mean and covariance with ``ridge * I`` added.

    The default ridge is ``1e-6 * trace(cov) / m``; if that is zero (all
    samples identical) a floor of 1e-12 keeps the covariance invertible.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, m = x.shape
    if n < m + 1:
        raise DataError(f"need at least {m + 1} samples to fit a {m}-dimensional Gaussian, got {n}")
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    if ridge is None:
        ridge = 1e-6 * np.trace(cov) / m
        if ridge <= 0:
            ridge = 1e-12
    elif ridge < 0:
        raise DataError("ridge must be nonnegative")
    return GaussianModel(mean, cov + ridge * np.eye(m))


def log_density(model: GaussianModel, x) -> np.ndarray | float:
    """Multivariate normal log-pdf; ``x`` may be one vector or an ``(n, m)`` batch."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim <= 1
    xb = np.atleast_2d(x) if model.dim > 1 or x.ndim == 2 else x.reshape(-1, 1)
    if xb.shape[-1] != model.dim:
        raise DataError(f"feature dimension {xb.shape[-1]} does not match model dimension {model.dim}")
    z = model._chol_inv @ (xb - model.mean).T
    out = -0.5 * (model.dim * _LOG_2PI + model._logdet + np.sum(z * z, axis=0))
    return float(out[0]) if scalar and out.size == 1 else out


def kl_divergence(f: GaussianModel, g: GaussianModel) -> float:
    """``D_KL(f || g)`` for Gaussians (natural log)."""
    if f.dim != g.dim:
        raise ModelError(f"dimension mismatch: {f.dim} vs {g.dim}")
    g_inv = np.linalg.inv(g.cov)
    diff = g.mean - f.mean
    val = 0.5 * (np.trace(g_inv @ f.cov) + diff @ g_inv @ diff - f.dim + g._logdet - f._logdet)
    return max(float(val), 0.0)


def prior_mass(prior: GeometricPrior, n: int, horizon: int) -> float:
    """``P(change at n)`` for ``n <= horizon``; the survival mass for ``n = horizon + 1``."""
    if not 1 <= n <= horizon + 1:
        raise ModelError(f"change time {n} outside 1..{horizon + 1}")
    q = 1.0 - prior.rho
    if n == horizon + 1:
        return q**horizon
    return prior.rho * q ** (n - 1)


def subset_key(subset: Iterable[int]) -> str:
    return ",".join(str(j) for j in sorted(subset))


def parse_subset_key(key: str) -> frozenset[int]:
    try:
        return frozenset(int(s) for s in key.split(",") if s.strip())
    except ValueError:
        raise ModelError(f"bad subset key {key!r}") from None


def nonempty_subsets(domain: Iterable[int]):
    dom = sorted(domain)
    for r in range(1, len(dom) + 1):
        for combo in combinations(dom, r):
            yield frozenset(combo)


@dataclass
class SensorDensities:
    """Pre-change model and post-change models for one sensor, keyed by active set."""

    domain: tuple[int, ...]
    pre: GaussianModel
    post: dict[frozenset, GaussianModel] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.pre.dim

    def model_for(self, active) -> GaussianModel:
        active = frozenset(active)
        if not active:
            return self.pre
        return self.post[active]


class DistributionRegistry:
    """Per-sensor ``g_i`` and ``f_i^A`` for every nonempty ``A`` in the local domain."""

    def __init__(self, sensors: Mapping[object, SensorDensities]):
        self._sensors = dict(sensors)

    def __contains__(self, sensor_id):
        return sensor_id in self._sensors

    def __getitem__(self, sensor_id) -> SensorDensities:
        return self._sensors[sensor_id]

    def sensor_ids(self):
        return list(self._sensors)

    def missing(self) -> list[tuple[object, frozenset]]:
        out = []
        for sid, dens in self._sensors.items():
            for A in nonempty_subsets(dens.domain):
                if A not in dens.post:
                    out.append((sid, A))
        return out

    def validate(self) -> None:
        missing = self.missing()
        if missing:
            raise ModelIncompleteError(*missing[0])
        for sid, dens in self._sensors.items():
            for A, f in dens.post.items():
                if not A <= set(dens.domain):
                    raise ModelError(f"sensor {sid}: subset {subset_key(A)} is outside its local domain")
                if f.dim != dens.dim:
                    raise ModelError(f"sensor {sid}, subset {subset_key(A)}: dimension {f.dim} != {dens.dim}")

    def active_set_log_density(self, sensor_id, active, x) -> float:
        dens = self._sensors[sensor_id]
        active = frozenset(active)
        if active and active not in dens.post:
            raise ModelIncompleteError(sensor_id, active)
        return log_density(dens.model_for(active), x)


def active_set_log_density(registry: DistributionRegistry, sensor_id, active, x) -> float:
    return registry.active_set_log_density(sensor_id, active, x)


def gaussian_pair_for_kl(kl: float, scale_ratio: float = 1.0, mean0: float = 0.0, sd0: float = 1.0, sign: float = 1.0):
    """1-D ``(g, f)`` with ``D_KL(f || g) = kl`` and ``sd_f = scale_ratio * sd_g``.

    The mean shift is solved from the closed form; raises if ``scale_ratio``
    alone already exceeds the requested divergence.
    """
    r = float(scale_ratio)
    shift2 = 2.0 * kl - r * r + 1.0 + 2.0 * np.log(r)
    if shift2 < 0:
        raise ModelError(f"scale ratio {r} gives KL above {kl} without any mean shift")
    g = GaussianModel([mean0], [[sd0**2]])
    f = GaussianModel([mean0 + np.copysign(np.sqrt(shift2), sign) * sd0], [[(r * sd0) ** 2]])
    return g, f
