"""Garnet random MDPs: fixed branching factor, uniform rewards."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .mdp import TabularMdp
from .rng import make_rng


@dataclass(frozen=True)
class GarnetSpec:
    num_states: int
    num_actions: int
    branching: int
    seed: int = 0
    gamma: float = 0.9

    def __post_init__(self):
        if self.num_states < 1 or self.num_actions < 1:
            raise ValidationError("garnet: state and action counts must be positive")
        if not 1 <= self.branching <= self.num_states:
            raise ValidationError(f"branching: must lie in [1, {self.num_states}], got {self.branching}")


def gen_garnet(spec: GarnetSpec) -> TabularMdp:
    """Each (s, a) gets ``b`` distinct successors chosen uniformly; the mass is split
    by the spacings of ``b - 1`` sorted uniforms.  Rewards are uniform on [0, 1]."""
    rng = make_rng(spec.seed)
    S, A, b = spec.num_states, spec.num_actions, spec.branching
    p = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            succ = rng.choice(S, size=b, replace=False)
            cuts = np.sort(rng.random(b - 1))
            mass = np.diff(np.concatenate(([0.0], cuts, [1.0])))
            p[s, a, succ] = mass
    # renormalize so each row sums to one up to a single rounding
    p /= p.sum(axis=2, keepdims=True)
    r = rng.random((S, A))
    return TabularMdp(p, r, spec.gamma)
