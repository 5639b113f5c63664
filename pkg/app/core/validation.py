"""
Signal-plan validation against an intersection config
"""

from collections import Counter
from typing import List

from app.core.models import IntersectionConfig, SignalPlan


def validate_plan(plan: SignalPlan, cfg: IntersectionConfig) -> List[str]:
    """
    Check a plan against every SignalPlan invariant

    Args:
        plan: Candidate signal plan
        cfg: Intersection the plan is meant for

    Returns:
        Violation messages; an empty list means the plan is valid
    """
    violations: List[str] = []
    served = Counter(p.link for p in plan.phases)

    for link in sorted(served):
        if link >= cfg.num_links:
            violations.append(f"link {link} outside [0, {cfg.num_links})")
        elif served[link] > 1:
            violations.append(f"link {link} served {served[link]} times")

    for link in range(cfg.num_links):
        if link not in served:
            violations.append(f"link {link} unserved")

    for phase in plan.phases:
        if not cfg.min_green_s <= phase.green_s <= cfg.max_green_s:
            violations.append(
                f"link {phase.link} green {phase.green_s}s outside green bound "
                f"[{cfg.min_green_s}, {cfg.max_green_s}]"
            )

    if plan.inter_green_s != cfg.inter_green_s:
        violations.append(
            f"inter_green_s {plan.inter_green_s} differs from config {cfg.inter_green_s}"
        )

    if plan.cycle_length <= 0:
        violations.append("cycle length must be positive")

    return violations
