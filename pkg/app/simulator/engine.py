"""
Discrete-time intersection simulator

One step is one second. Every second, arrivals join every link's queue; the
link in service discharges at its class saturation rates; nothing discharges
during inter-green, guidance loss or a service blackout. The controller is
consulted at the end of every cycle with the queue observed sensing_latency_s
seconds earlier.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveInt

from app.core.errors import DimensionMismatchError, InvalidPlanError, SimulationError
from app.core.models import IntersectionConfig, LinkId, Phase, QueueState, SignalPlan
from app.core.validation import validate_plan
from app.optimizer.objectives import served_capacity
from app.simulator.controllers import Controller
from app.simulator.demand import OBSERVATION_STREAM, ArrivalModel

logger = logging.getLogger(__name__)

PAD = "pad"
GREEN = "green"
INTER_GREEN = "inter_green"
NO_LINK = -1


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class EmergencyEvent(_Frozen):
    """An emergency vehicle reaching the intersection on `link` at second `time_s`."""
    time_s: NonNegativeInt
    link: LinkId


class Blackout(_Frozen):
    """Interval with no discharge on any link (pedestrian crossing, VIP stoppage)."""
    start_s: NonNegativeInt
    duration_s: PositiveInt
    reason: str = "pedestrian"

    def covers(self, t: int) -> bool:
        return self.start_s <= t < self.start_s + self.duration_s


class SimOptions(_Frozen):
    """
    Run options

    observation_noise is the probability that a waiting vehicle is detected;
    1.0 means perfect sensing.
    """
    observation_noise: float = Field(default=1.0, ge=0.0, le=1.0)
    guidance_pad_s: NonNegativeInt = 0
    emergency_events: Tuple[EmergencyEvent, ...] = ()
    sensing_latency_s: int = Field(default=2, ge=0, le=30)
    blackouts: Tuple[Blackout, ...] = ()
    guidance_loss_s: NonNegativeInt = 0
    emergency_extension_s: NonNegativeInt = 0
    initial_queue: Optional[QueueState] = None


class SimMetrics(_Frozen):
    """Waiting-vehicle statistics of one run, sampled after every simulated second."""
    max_waiting_per_link: Tuple[int, ...]
    avg_waiting_per_link: Tuple[float, ...]
    overall_max: int
    overall_avg: float
    throughput_total: int
    total_arrivals: int
    initial_total: int
    time_horizon_s: int
    cycles_completed: int

    def per_link_frame(self, cfg: Optional[IntersectionConfig] = None) -> pd.DataFrame:
        links = range(len(self.avg_waiting_per_link))
        return pd.DataFrame({
            "link": list(links),
            "link_name": [cfg.link_name(i) if cfg else f"Link {i}" for i in links],
            "avg_waiting": list(self.avg_waiting_per_link),
            "max_waiting": list(self.max_waiting_per_link),
        })


def _move_after(items: list, position: int, active_index: int) -> None:
    items.insert(active_index + 1, items.pop(position))


def apply_emergency_reorder(plan: SignalPlan, event: EmergencyEvent, active_index: int = 0) -> SignalPlan:
    """
    Serve the emergency link right after the active phase

    Only phases still to come can move; durations are kept. The plan is
    returned unchanged when the link is active, already next, already served
    or not in the plan.
    """
    order = list(plan.order)
    if event.link not in order:
        return plan
    position = order.index(event.link)
    if position <= active_index + 1:
        return plan
    _move_after(order, position, active_index)
    return plan.with_order(order)


class _CycleSchedule:
    """
    Cursor over the phases of one executed cycle

    `plan` holds the cycle's link order and is reordered in place by
    emergencies; `inserted` queues extra services for links already served,
    which run before the plan resumes.
    """

    def __init__(self, plan: SignalPlan):
        self.plan = plan
        self.index = 0
        self.inserted: List[Phase] = []
        self.current: Phase = plan.phases[0]
        self.in_service = True
        self.elapsed = 0
        self.served = 0
        self.extension = 0
        self._settle()

    @property
    def phase(self) -> Phase:
        return self.current

    def _segment_length(self) -> int:
        if self.in_service:
            return self.plan.service_time(self.current.green_s) + self.extension
        return self.plan.inter_green_s

    def _settle(self) -> bool:
        while self.elapsed >= self._segment_length():
            self.elapsed = 0
            if self.in_service:
                self.in_service = False
                continue
            if self.inserted:
                self.current = self.inserted.pop(0)
            else:
                self.index += 1
                if self.index == len(self.plan.phases):
                    return True
                self.current = self.plan.phases[self.index]
            self.in_service = True
            self.served = 0
            self.extension = 0
        return False

    def advance(self) -> bool:
        """Step one second; True once the cycle is complete."""
        self.elapsed += 1
        return self._settle()

    @property
    def state(self) -> str:
        if not self.in_service:
            return INTER_GREEN
        pad = self.plan.guidance_pad_s
        if self.elapsed < pad or self.elapsed >= pad + self.current.green_s + self.extension:
            return PAD
        return GREEN

    @property
    def active_link(self) -> int:
        return self.current.link if self.in_service else NO_LINK

    def emergency(self, event: EmergencyEvent, extension_s: int) -> str:
        link = event.link
        if self.in_service and self.current.link == link:
            self.extension += extension_s
            return "extended"
        remaining = [p.link for p in self.plan.phases[self.index + 1:]]
        upcoming = [p.link for p in self.inserted] + remaining
        if upcoming and upcoming[0] == link:
            return "next"
        if link in remaining[1:]:
            self.plan = apply_emergency_reorder(self.plan, event, active_index=self.index)
            return "reordered"
        if link in upcoming:
            return "queued"
        # Already served this cycle: serve it again right away
        self.inserted.append(Phase(link=link, green_s=self.plan.greens_by_link[link]))
        return "inserted"



def _blocked(t: int, blackouts: Sequence[Blackout]) -> bool:
    return any(b.covers(t) for b in blackouts)


def simulate(
    cfg: IntersectionConfig,
    demand: ArrivalModel,
    controller: Controller,
    horizon_s: int,
    options: Optional[SimOptions] = None
) -> Tuple[SimMetrics, pd.DataFrame]:
    """
    Run one controller against one arrival sequence

    Args:
        cfg: Intersection config
        demand: Arrival rates and seed
        controller: Consulted at t=0 and after every completed cycle
        horizon_s: Simulated seconds
        options: Sensing, guidance, emergency and blackout options

    Returns:
        (metrics, per-second time series). The time series has one row per
        second with the queue after that second, the arrivals and discharges
        of that second, the link in service and the signal state.

    Raises:
        InvalidPlanError: the controller returned a plan failing validate_plan
        SimulationError: the horizon or an emergency event is unusable
    """
    options = options or SimOptions()
    num_links = cfg.num_links
    if horizon_s < 1:
        raise SimulationError(f"horizon must be at least 1 s, got {horizon_s}")
    if demand.num_links != num_links:
        raise DimensionMismatchError(f"demand has {demand.num_links} links, intersection has {num_links}")
    for event in options.emergency_events:
        if event.link >= num_links:
            raise SimulationError(f"emergency at t={event.time_s} on link {event.link} outside [0, {num_links})")

    initial = options.initial_queue or QueueState.zeros(num_links)
    initial.require_links(num_links)

    arrivals_m, arrivals_nm = demand.sample(horizon_s)
    noise_rng = demand.generator(OBSERVATION_STREAM)
    latency = options.sensing_latency_s
    detect_p = options.observation_noise

    queue_m = np.zeros((horizon_s + 1, num_links), dtype=np.int64)
    queue_nm = np.zeros((horizon_s + 1, num_links), dtype=np.int64)
    queue_m[0] = initial.motorized
    queue_nm[0] = initial.non_motorized
    discharged = np.zeros((horizon_s, num_links), dtype=np.int64)
    active_links = np.full(horizon_s, NO_LINK, dtype=np.int64)
    states: List[str] = []
    blocked_flags = np.zeros(horizon_s, dtype=bool)

    def observe(now: int) -> QueueState:
        seen_at = max(0, now - latency)
        motorized, non_motorized = queue_m[seen_at], queue_nm[seen_at]
        if detect_p < 1.0:
            motorized = noise_rng.binomial(motorized, detect_p)
            non_motorized = noise_rng.binomial(non_motorized, detect_p)
        return QueueState(
            motorized=tuple(int(v) for v in motorized),
            non_motorized=tuple(int(v) for v in non_motorized),
            timestamp=seen_at * 1000,
        )

    def next_schedule(now: int) -> _CycleSchedule:
        plan = controller.next_plan(observe(now))
        violations = validate_plan(plan, cfg)
        if violations:
            raise InvalidPlanError(violations)
        if options.guidance_pad_s > plan.guidance_pad_s:
            plan = plan.model_copy(update={"guidance_pad_s": options.guidance_pad_s})
        return _CycleSchedule(plan)

    controller.reset()
    events = sorted(options.emergency_events, key=lambda e: (e.time_s, e.link))
    next_event = 0
    cycles_completed = 0
    schedule = next_schedule(0)
    if horizon_s < schedule.plan.cycle_length:
        logger.warning(f"horizon {horizon_s} s is shorter than the first cycle ({schedule.plan.cycle_length} s)")

    for t in range(horizon_s):
        while next_event < len(events) and events[next_event].time_s <= t:
            event = events[next_event]
            outcome = schedule.emergency(event, options.emergency_extension_s)
            logger.debug(f"t={t}: emergency on link {event.link} ({outcome})")
            next_event += 1

        motorized = queue_m[t] + arrivals_m[t]
        non_motorized = queue_nm[t] + arrivals_nm[t]
        link = schedule.active_link
        blocked = _blocked(t, options.blackouts) or (
            schedule.in_service and schedule.elapsed < options.guidance_loss_s
        )
        if link != NO_LINK and not blocked:
            schedule.served += 1
            k = schedule.served
            out_m = served_capacity(cfg.sat_flow_motorized, k) - served_capacity(cfg.sat_flow_motorized, k - 1)
            out_nm = (served_capacity(cfg.sat_flow_non_motorized, k)
                      - served_capacity(cfg.sat_flow_non_motorized, k - 1))
            out_m = min(out_m, int(motorized[link]))
            out_nm = min(out_nm, int(non_motorized[link]))
            motorized[link] -= out_m
            non_motorized[link] -= out_nm
            discharged[t, link] = out_m + out_nm

        queue_m[t + 1] = motorized
        queue_nm[t + 1] = non_motorized
        active_links[t] = link
        states.append(schedule.state)
        blocked_flags[t] = blocked

        if schedule.advance():
            cycles_completed += 1
            if t + 1 < horizon_s:
                schedule = next_schedule(t + 1)

    waiting = (queue_m + queue_nm)[1:]
    arrived = arrivals_m + arrivals_nm
    max_per_link = waiting.max(axis=0)
    avg_per_link = waiting.mean(axis=0)
    metrics = SimMetrics(
        max_waiting_per_link=tuple(int(v) for v in max_per_link),
        avg_waiting_per_link=tuple(float(v) for v in avg_per_link),
        overall_max=int(max_per_link.max()),
        overall_avg=float(avg_per_link.mean()),
        throughput_total=int(discharged.sum()),
        total_arrivals=int(arrived.sum()),
        initial_total=initial.total_vehicles,
        time_horizon_s=horizon_s,
        cycles_completed=cycles_completed,
    )

    columns = {"t": np.arange(horizon_s)}
    columns.update({f"queue_{i}": waiting[:, i] for i in range(num_links)})
    columns.update({f"arrived_{i}": arrived[:, i] for i in range(num_links)})
    columns.update({f"discharged_{i}": discharged[:, i] for i in range(num_links)})
    columns["active_link"] = active_links
    columns["phase_state"] = states
    columns["blocked"] = blocked_flags
    return metrics, pd.DataFrame(columns)
