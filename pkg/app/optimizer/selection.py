"""
Choosing the plan to execute from a Pareto front
"""

import math
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple, Union

from app.core.errors import EmptyFrontError
from app.core.models import IntersectionConfig, SignalPlan
from app.optimizer.nsga2 import Individual, ParetoFront
from app.optimizer.objectives import plan_from_genome


class SelectionPolicy(Enum):
    """How one operating point is picked from the front"""
    KNEE = "knee"
    WEIGHTED = "weighted"
    MIN_F1 = "min_f1"
    MIN_F2 = "min_f2"


def _normalized(members: Sequence[Individual]) -> Iterable[Tuple[Individual, float, float]]:
    f1s = [m.objectives.f1 for m in members]
    f2s = [m.objectives.f2 for m in members]
    lo1, hi1, lo2, hi2 = min(f1s), max(f1s), min(f2s), max(f2s)
    span1, span2 = hi1 - lo1, hi2 - lo2
    for m in members:
        n1 = (m.objectives.f1 - lo1) / span1 if span1 else 0.0
        n2 = (m.objectives.f2 - lo2) / span2 if span2 else 0.0
        yield m, n1, n2


def select_individual(
    front: Union[ParetoFront, Sequence[Individual]],
    policy: Union[SelectionPolicy, str] = SelectionPolicy.KNEE,
    weights: Tuple[float, float] = (0.5, 0.5)
) -> Individual:
    """
    Pick one front member

    Objectives are normalized to [0, 1] over the front. KNEE minimizes Euclidean
    distance to the ideal point, WEIGHTED minimizes w1*n1 + w2*n2. Ties go to
    lower f1, then lower f2, then the lexicographically smaller genome.

    Raises:
        EmptyFrontError: the front has no members
        ValueError: unknown policy, or negative or all-zero weights for WEIGHTED
    """
    members = list(front)
    if not members:
        raise EmptyFrontError("cannot select an operating point from an empty front")
    policy = SelectionPolicy(policy)
    w1, w2 = weights
    if policy is SelectionPolicy.WEIGHTED and (w1 < 0 or w2 < 0 or w1 + w2 == 0):
        raise ValueError(f"weights must be non-negative and not both zero, got {tuple(weights)}")

    def score(n1: float, n2: float) -> float:
        if policy is SelectionPolicy.KNEE:
            return math.hypot(n1, n2)
        if policy is SelectionPolicy.WEIGHTED:
            return w1 * n1 + w2 * n2
        if policy is SelectionPolicy.MIN_F1:
            return n1
        return n2

    best = min(
        _normalized(members),
        key=lambda item: (
            score(item[1], item[2]),
            item[0].objectives.f1,
            item[0].objectives.f2,
            item[0].genome,
        ),
    )
    return best[0]


def select_operating_point(
    front: Union[ParetoFront, Sequence[Individual]],
    policy: Union[SelectionPolicy, str],
    cfg: IntersectionConfig,
    weights: Tuple[float, float] = (0.5, 0.5),
    guidance_pad_s: int = 0
) -> SignalPlan:
    """Selected front member as an executable, link-ordered signal plan."""
    chosen = select_individual(front, policy, weights)
    return plan_from_genome(chosen.genome, cfg, guidance_pad_s)
