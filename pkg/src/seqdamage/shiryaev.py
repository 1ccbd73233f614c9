"""Shiryaev posterior for a single damage variable observed by several
conditionally independent sensors, the stopping rule and its delay bound."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DataError, ModelError
from .models import GaussianModel, GeometricPrior, kl_divergence, log_density


@dataclass(frozen=True)
class SingleVarProblem:
    prior: GeometricPrior
    pre: tuple[GaussianModel, ...]
    post: tuple[GaussianModel, ...]

    def __post_init__(self):
        pre, post = tuple(self.pre), tuple(self.post)
        if not pre or len(pre) != len(post):
            raise ModelError("need one pre- and one post-change model per sensor (at least one sensor)")
        for i, (g, f) in enumerate(zip(pre, post)):
            if g.dim != f.dim:
                raise ModelError(f"sensor {i}: pre/post dimensions differ")
        object.__setattr__(self, "pre", pre)
        object.__setattr__(self, "post", post)

    @property
    def n_sensors(self) -> int:
        return len(self.pre)

    def log_ratio_terms(self, xs) -> tuple[float, float]:
        """Summed ``log f_i(x_i)`` and ``log g_i(x_i)`` over sensors."""
        if len(xs) != self.n_sensors:
            raise DataError(f"expected features for {self.n_sensors} sensors, got {len(xs)}")
        lf = lg = 0.0
        for g, f, x in zip(self.pre, self.post, xs):
            x = np.atleast_1d(np.asarray(x, dtype=float))
            if x.shape != (g.dim,):
                raise DataError(f"feature of shape {x.shape} does not match dimension {g.dim}")
            if not np.all(np.isfinite(x)):
                raise DataError("non-finite feature value")
            lf += log_density(f, x)
            lg += log_density(g, x)
        return lf, lg


@dataclass(frozen=True)
class PosteriorState:
    """Log joint weights over change-time bins at horizon ``N``.

    ``starts[k]`` is the first change time covered by bin ``k``; the last bin
    always starts at ``N + 1`` and stands for "no change yet". Without a
    window every bin is a single time ``1..N+1``.
    """

    horizon: int
    starts: np.ndarray
    log_weights: np.ndarray

    @property
    def posterior(self) -> np.ndarray:
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    @property
    def prob_changed(self) -> float:
        """``P(lambda <= N | x^N)``."""
        return float(np.exp(logsumexp(self.log_weights[:-1]) - logsumexp(self.log_weights))) if self.horizon else 0.0

    @property
    def prob_not_changed(self) -> float:
        return float(np.exp(self.log_weights[-1] - logsumexp(self.log_weights)))


def initial_state() -> PosteriorState:
    return PosteriorState(0, np.array([1]), np.array([0.0]))


def update_posterior(
    problem: SingleVarProblem,
    state: PosteriorState | None,
    xs: Sequence,
    window: int | None = None,
) -> PosteriorState:
    """Advance the posterior from ``N - 1`` to ``N`` with the features ``xs`` of all sensors.

    Existing change hypotheses absorb ``sum_i log f_i``; the "not yet" bin
    splits into "change at N" and "not yet". With ``window=W`` the oldest
    bins are merged so at most ``W + 1`` remain; this is exact for
    ``P(lambda <= N)`` because merged hypotheses share all future factors.
    """
    if state is None:
        state = initial_state()
    if window is not None and window < 1:
        raise ValueError("window must be a positive integer or None")
    lf, lg = problem.log_ratio_terms(xs)
    rho = problem.prior.rho
    N = state.horizon + 1
    w = state.log_weights
    new = np.empty(w.size + 1)
    new[:-2] = w[:-1] + lf
    new[-2] = w[-1] + np.log(rho) + lf
    new[-1] = w[-1] + np.log1p(-rho) + lg
    starts = np.append(state.starts, N + 1)
    if window is not None and new.size > window + 1:
        k = new.size - window
        new = np.concatenate([[logsumexp(new[:k])], new[k:]])
        starts = np.concatenate([[starts[0]], starts[k:]])
    # rescale to keep magnitudes bounded on long runs; only ratios matter
    new = new - new.max()
    return PosteriorState(N, starts, new)


def run_posterior(problem: SingleVarProblem, streams: Sequence[np.ndarray], window: int | None = None):
    """Posterior trajectory over aligned per-sensor feature arrays; yields one state per step."""
    arrays = [np.asarray(s, dtype=float).reshape(len(s), -1) for s in streams]
    T = {a.shape[0] for a in arrays}
    if len(T) != 1:
        raise DataError("sensor streams have different lengths")
    state = None
    for t in range(T.pop()):
        state = update_posterior(problem, state, [a[t] for a in arrays], window)
        yield state


def stopping_decision(posterior_changed: float | PosteriorState, alpha_fa: float) -> bool:
    """True iff ``P(lambda <= N | x^N) >= 1 - alpha_fa`` (inclusive)."""
    if not 0.0 < alpha_fa < 1.0:
        raise ValueError("alpha_fa must lie in (0, 1)")
    p = posterior_changed.prob_changed if isinstance(posterior_changed, PosteriorState) else posterior_changed
    return p >= 1.0 - alpha_fa


def delay_bound_single(rho: float, kl_list: Sequence[float], alpha_fa: float) -> float:
    """Asymptotic expected delay ``|ln a| / (-ln(1 - rho) + sum KL)``."""
    kls = np.asarray(kl_list, dtype=float)
    if kls.size == 0 or np.any(kls < 0) or not np.any(kls > 0):
        raise ValueError("KL values must be nonnegative and not all zero")
    if not 0.0 < rho < 1.0 or not 0.0 < alpha_fa < 1.0:
        raise ValueError("rho and alpha_fa must lie in (0, 1)")
    return abs(np.log(alpha_fa)) / (-np.log1p(-rho) + float(kls.sum()))


def problem_kls(problem: SingleVarProblem) -> list[float]:
    return [kl_divergence(f, g) for g, f in zip(problem.pre, problem.post)]
