"""Ready-made model configs for the three sensor layouts used throughout the
tests and demos, with synthetic 1-D Gaussian feature registries.

Post-change models are built additively: variable ``j`` shifts sensor ``i``'s
feature mean by ``shift[i][j]`` pre-change standard deviations, a set of
triggered variables shifts it by the sum, and any triggered set scales the
standard deviation by ``scale_ratio``.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .models import gaussian_pair_for_kl, nonempty_subsets, subset_key


def shift_for_kl(kl: float, scale_ratio: float = 1.0) -> float:
    """Mean shift (in pre-change sd units) giving ``D_KL(f || g) = kl`` at the given sd ratio."""
    g, f = gaussian_pair_for_kl(kl, scale_ratio)
    return float(f.mean[0] - g.mean[0])


def additive_config(
    variables: Mapping[int, float],
    domains: Mapping[int, tuple[int, ...]],
    shifts: Mapping[int, Mapping[int, float]],
    edges,
    root: int,
    scale_ratio: float = 1.0,
    owned_priors: Mapping[int, tuple[int, ...]] | None = None,
    pre_mean: float = 0.0,
    pre_sd: float = 1.0,
) -> dict:
    sensors = []
    for sid in sorted(domains):
        dom = tuple(sorted(domains[sid]))
        f = {}
        for A in nonempty_subsets(dom):
            mu = pre_mean + pre_sd * sum(shifts[sid][j] for j in A)
            f[subset_key(A)] = {"mean": [mu], "cov": [[(scale_ratio * pre_sd) ** 2]]}
        entry = {
            "id": sid,
            "domain": list(dom),
            "dim": 1,
            "g": {"mean": [pre_mean], "cov": [[pre_sd**2]]},
            "f": f,
        }
        if owned_priors is not None:
            entry["owned_priors"] = list(owned_priors.get(sid, ()))
        sensors.append(entry)
    return {
        "variables": [{"id": j, "rho": float(r)} for j, r in sorted(variables.items())],
        "sensors": sensors,
        "edges": [list(e) for e in edges],
        "root": root,
    }


# per-variable mean shifts with mixed signs and magnitudes, so that no two
# subsets of a sensor's domain produce the same post-change mean
CHAIN4_PATTERN = {1: 1.0, 2: -0.55, 3: 0.8, 4: -0.65}


def chain4_config(rho: float = 0.05, shift: float = 1.5, scale_ratio: float = 1.0, seed: int | None = None) -> dict:
    """Four variables, four sensors on a chain 1-2-3-4.

    Domains {1,2}, {1,2,3}, {3,4}, {4}; sensor ``i`` owns the prior of
    variable ``i``. Variable ``j`` shifts every sensor that sees it by
    ``shift * CHAIN4_PATTERN[j]``; with ``seed`` the per-(sensor, variable)
    shifts are drawn at random instead.
    """
    domains = {1: (1, 2), 2: (1, 2, 3), 3: (3, 4), 4: (4,)}
    rng = np.random.default_rng(seed) if seed is not None else None
    shifts = {}
    for sid, dom in domains.items():
        shifts[sid] = {}
        for j in dom:
            shifts[sid][j] = float(rng.uniform(-2.0, 2.0)) if rng is not None else shift * CHAIN4_PATTERN[j]
    return additive_config(
        {j: rho for j in range(1, 5)},
        domains,
        shifts,
        [(1, 2), (2, 3), (3, 4)],
        root=1,
        scale_ratio=scale_ratio,
        owned_priors={1: (1,), 2: (2,), 3: (3,), 4: (4,)},
    )


# per-floor KL of the floor-1 damage at floors 1, 2, 3 (sum 16.77)
SHAKE_TABLE_KLS = (6.27, 6.06, 4.44)
# post-damage features are taken to have half the pre-damage spread
SHAKE_TABLE_SCALE_RATIO = 0.5


def shake_table_config(
    kls=SHAKE_TABLE_KLS,
    rho: float = 0.001,
    scale_ratio: float = SHAKE_TABLE_SCALE_RATIO,
    other_kl: float = 4.0,
) -> dict:
    """Three floors, one variable per floor; damage on floor ``j`` affects floors ``j`` and above.

    ``kls[i-1]`` is the divergence of floor ``i``'s features when only floor 1
    is damaged. Damage on floors 2 and 3 shifts features the other way with
    divergence ``other_kl``.
    """
    domains = {1: (1,), 2: (1, 2), 3: (1, 2, 3)}
    d_other = -shift_for_kl(other_kl, scale_ratio)
    shifts = {
        1: {1: shift_for_kl(kls[0], scale_ratio)},
        2: {1: shift_for_kl(kls[1], scale_ratio), 2: d_other},
        3: {1: shift_for_kl(kls[2], scale_ratio), 2: d_other, 3: d_other},
    }
    return additive_config(
        {1: rho, 2: rho, 3: rho},
        domains,
        shifts,
        [(1, 2), (2, 3)],
        root=1,
        scale_ratio=scale_ratio,
        owned_priors={1: (1,), 2: (2,), 3: (3,)},
    )


# floors 2 and 4 pull features the opposite way so that subsets stay separable
ASCE_SHIFTS = {
    2: {1: 1.5, 2: -0.8, 3: 1.0},
    6: {1: 1.5, 2: -0.8, 3: 1.0, 4: -0.8},
    10: {2: -0.8, 3: 1.2, 4: -0.8},
    14: {3: 1.2, 4: -0.8},
}


def asce_config(rho: float = 0.05, shifts=None, scale_ratio: float = 1.0) -> dict:
    """Four floors, sensors 2 / 6 / 10 / 14 on a chain.

    Domains {1,2,3}, {1,2,3,4}, {2,3,4}, {3,4}; sensors own the priors of
    variables 1..4 in that order.
    """
    domains = {2: (1, 2, 3), 6: (1, 2, 3, 4), 10: (2, 3, 4), 14: (3, 4)}
    return additive_config(
        {j: rho for j in range(1, 5)},
        domains,
        shifts or ASCE_SHIFTS,
        [(2, 6), (6, 10), (10, 14)],
        root=2,
        scale_ratio=scale_ratio,
        owned_priors={2: (1,), 6: (2,), 10: (3,), 14: (4,)},
    )
