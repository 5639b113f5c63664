"""
Signal controllers driven by the simulator

A controller is consulted once per completed cycle with the queue state the
sensors report and answers with the plan for the next cycle.
"""

import logging
from typing import Optional, Protocol, Sequence, Tuple, runtime_checkable

from app.core.errors import InvalidPlanError
from app.core.models import IntersectionConfig, QueueState, SignalPlan
from app.core.validation import validate_plan
from app.optimizer import nsga2
from app.optimizer.nsga2 import OptimizerParams, ParetoFront
from app.optimizer.objectives import DEFAULT_OPTIONS, ObjectiveOptions
from app.optimizer.selection import SelectionPolicy, select_operating_point

logger = logging.getLogger(__name__)

_SEED_SPACE = 2 ** 64


@runtime_checkable
class Controller(Protocol):
    name: str

    def next_plan(self, observed: QueueState) -> SignalPlan:
        ...

    def reset(self) -> None:
        ...


class FixedTimeController:
    """
    Pre-timed control: the same plan every cycle, whatever the queues

    Stands in for manual police control in comparisons.
    """

    def __init__(
        self,
        greens: Sequence[int],
        cfg: IntersectionConfig,
        order: Optional[Sequence[int]] = None,
        guidance_pad_s: int = 0,
        name: str = "fixed"
    ):
        self.name = name
        self.plan = SignalPlan.from_greens(greens, cfg.inter_green_s, guidance_pad_s, order)
        violations = validate_plan(self.plan, cfg)
        if violations:
            raise InvalidPlanError(violations)

    @classmethod
    def equal_greens(cls, cfg: IntersectionConfig, green_s: int, **kwargs) -> "FixedTimeController":
        return cls([green_s] * cfg.num_links, cfg, **kwargs)

    def next_plan(self, observed: QueueState) -> SignalPlan:
        return self.plan

    def reset(self) -> None:
        pass


class AdaptiveController:
    """
    Re-optimizes the plan from every observation with NSGA-II

    Invocation k runs with rng_seed + k, so a reset controller replays the same
    sequence of plans for the same observations.
    """

    def __init__(
        self,
        cfg: IntersectionConfig,
        params: Optional[OptimizerParams] = None,
        policy: SelectionPolicy = SelectionPolicy.KNEE,
        weights: Tuple[float, float] = (0.5, 0.5),
        guidance_pad_s: int = 0,
        options: ObjectiveOptions = DEFAULT_OPTIONS,
        name: str = "adaptive"
    ):
        self.name = name
        self.cfg = cfg
        self.params = params or OptimizerParams()
        self.policy = SelectionPolicy(policy)
        self.weights = weights
        self.guidance_pad_s = guidance_pad_s
        self.options = options
        self.invocations = 0
        self.last_front: Optional[ParetoFront] = None

    def next_plan(self, observed: QueueState) -> SignalPlan:
        seed = (self.params.rng_seed + self.invocations) % _SEED_SPACE
        self.invocations += 1
        params = self.params.model_copy(update={"rng_seed": seed})
        front = nsga2.run(observed, self.cfg, params, options=self.options, guidance_pad_s=self.guidance_pad_s)
        self.last_front = front
        plan = select_operating_point(front, self.policy, self.cfg, self.weights, self.guidance_pad_s)
        logger.debug(f"{self.name}: queue {observed.per_link_totals} -> greens {plan.greens()}")
        return plan

    def reset(self) -> None:
        self.invocations = 0
        self.last_front = None
