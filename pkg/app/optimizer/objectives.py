"""
Discharge model and the two objectives the optimizer minimizes

f1: vehicles still queued after every link has used its green (residual congestion)
f2: total red seconds over all links in one cycle (waiting-time proxy)

Everything here is a pure function of its inputs.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.core.errors import DimensionMismatchError
from app.core.models import IntersectionConfig, ObjectiveVector, QueueState, SignalPlan

# Absorbs binary rounding in rate * green so decimal rates give exact capacities
_CAPACITY_EPS = 1e-9


@dataclass(frozen=True)
class ObjectiveOptions:
    """
    Variants of the red-time objective

    Attributes:
        include_inter_green: Count clearance intervals as red time
        queue_weighted_red_time: Weight each link's red time by its waiting vehicles
    """
    include_inter_green: bool = True
    queue_weighted_red_time: bool = False


DEFAULT_OPTIONS = ObjectiveOptions()


class RedTimeVector(tuple):
    """Per-link red seconds, indexed by link."""

    @property
    def total(self) -> int:
        return sum(self)


def served_capacity(rate: float, green_s: int) -> int:
    """Vehicles a queue discharging at `rate` veh/s can clear in `green_s` seconds."""
    return int(math.floor(rate * green_s + _CAPACITY_EPS))


def discharge(queue: QueueState, plan: SignalPlan, cfg: IntersectionConfig) -> QueueState:
    """
    Drain each link's queue at the saturation rates for its green time

    Raises:
        DimensionMismatchError: queue width differs from cfg.num_links
    """
    queue.require_links(cfg.num_links)
    greens = plan.greens_by_link
    motorized = []
    non_motorized = []
    for link in range(cfg.num_links):
        green = greens.get(link, 0)
        motorized.append(max(0, queue.motorized[link] - served_capacity(cfg.sat_flow_motorized, green)))
        non_motorized.append(
            max(0, queue.non_motorized[link] - served_capacity(cfg.sat_flow_non_motorized, green))
        )
    return QueueState(
        motorized=tuple(motorized),
        non_motorized=tuple(non_motorized),
        timestamp=queue.timestamp,
        stale_links=queue.stale_links,
    )


def f1(updated_queue: QueueState) -> int:
    """Residual congestion: every motorized and non-motorized vehicle left waiting."""
    return updated_queue.total_vehicles


def red_times(plan: SignalPlan, options: ObjectiveOptions = DEFAULT_OPTIONS) -> RedTimeVector:
    """Red seconds of each link: cycle length minus that link's own service."""
    cycle = plan.cycle_length
    if not options.include_inter_green:
        cycle -= plan.num_links * plan.inter_green_s
    by_link = {p.link: cycle - plan.service_time(p.green_s) for p in plan.phases}
    return RedTimeVector(by_link[link] for link in sorted(by_link))


def f2(
    plan: SignalPlan,
    queue: Optional[QueueState] = None,
    options: ObjectiveOptions = DEFAULT_OPTIONS
) -> int:
    """
    Total red time of one cycle

    With options.queue_weighted_red_time, each link's red time is multiplied by
    the vehicles waiting on it in `queue`.
    """
    reds = red_times(plan, options)
    if not options.queue_weighted_red_time:
        return reds.total
    if queue is None:
        raise ValueError("queue-weighted red time needs the observed queue")
    waiting = queue.per_link_totals
    return sum(r * w for r, w in zip(reds, waiting))


def evaluate(
    plan: SignalPlan,
    queue: QueueState,
    cfg: IntersectionConfig,
    options: ObjectiveOptions = DEFAULT_OPTIONS
) -> ObjectiveVector:
    """Objective vector of one plan after one complete cycle."""
    return ObjectiveVector(
        f1=f1(discharge(queue, plan, cfg)),
        f2=f2(plan, queue, options),
    )


def evaluate_greens(
    greens: np.ndarray,
    queue: QueueState,
    cfg: IntersectionConfig,
    guidance_pad_s: int = 0,
    options: ObjectiveOptions = DEFAULT_OPTIONS
) -> np.ndarray:
    """
    Vectorized evaluate for a batch of genomes

    Args:
        greens: (n, L) integer array, greens indexed by link
        queue: Observed queue
        cfg: Intersection config
        guidance_pad_s: Padding added around each green

    Returns:
        (n, 2) int64 array of (f1, f2); row i equals evaluate() of genome i
    """
    greens = np.asarray(greens, dtype=np.int64)
    if greens.ndim != 2 or greens.shape[1] != cfg.num_links:
        raise DimensionMismatchError(
            f"genomes have shape {greens.shape}, intersection has {cfg.num_links} links"
        )
    queue.require_links(cfg.num_links)

    num_links = cfg.num_links
    motorized = np.asarray(queue.motorized, dtype=np.int64)
    non_motorized = np.asarray(queue.non_motorized, dtype=np.int64)

    cap_m = np.floor(cfg.sat_flow_motorized * greens + _CAPACITY_EPS).astype(np.int64)
    cap_nm = np.floor(cfg.sat_flow_non_motorized * greens + _CAPACITY_EPS).astype(np.int64)
    residual = np.maximum(0, motorized - cap_m) + np.maximum(0, non_motorized - cap_nm)
    obj_f1 = residual.sum(axis=1)

    service = greens + 2 * guidance_pad_s
    cycle = service.sum(axis=1, keepdims=True)
    if options.include_inter_green:
        cycle = cycle + num_links * cfg.inter_green_s
    reds = cycle - service
    if options.queue_weighted_red_time:
        obj_f2 = (reds * (motorized + non_motorized)).sum(axis=1)
    else:
        obj_f2 = reds.sum(axis=1)

    return np.stack([obj_f1, obj_f2], axis=1)


def plan_from_genome(
    genome: Sequence[int],
    cfg: IntersectionConfig,
    guidance_pad_s: int = 0
) -> SignalPlan:
    """Wrap a genome (greens indexed by link) as a link-ordered plan."""
    return SignalPlan.from_greens(
        [int(g) for g in genome], inter_green_s=cfg.inter_green_s, guidance_pad_s=guidance_pad_s
    )
