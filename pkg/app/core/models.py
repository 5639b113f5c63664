"""
Domain data model shared by the optimizer, the pipeline and the simulator

Every type here is immutable after construction, so instances can be handed
between threads freely. Types with a file format are pydantic models; the JSON
field names are the attribute names.
"""

from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, model_validator

from app.core.errors import DimensionMismatchError

LinkId = NonNegativeInt


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class IntersectionConfig(_Frozen):
    """
    Static description of one intersection

    Attributes:
        num_links: Number of approach links (L)
        link_names: Display names, one per link
        min_green_s / max_green_s: Green-time bounds applied to every link
        inter_green_s: Clearance inserted after every phase
        sat_flow_motorized / sat_flow_non_motorized: Discharge rate under green (veh/s)
    """
    num_links: int = Field(ge=2)
    link_names: Tuple[str, ...] = ()
    min_green_s: int = Field(default=10, ge=1)
    max_green_s: int = Field(default=60, ge=1)
    inter_green_s: int = Field(default=3, ge=0)
    sat_flow_motorized: float = Field(default=0.5, gt=0)
    sat_flow_non_motorized: float = Field(default=0.25, gt=0)

    @model_validator(mode="before")
    @classmethod
    def _default_link_names(cls, data: Any) -> Any:
        if isinstance(data, dict) and not data.get("link_names"):
            num_links = data.get("num_links")
            if isinstance(num_links, int) and num_links > 0:
                data = {**data, "link_names": [f"Link {i + 1}" for i in range(num_links)]}
        return data

    @model_validator(mode="after")
    def _check_invariants(self) -> "IntersectionConfig":
        if self.min_green_s > self.max_green_s:
            raise ValueError(
                f"min_green_s ({self.min_green_s}) must not exceed max_green_s ({self.max_green_s})"
            )
        if len(self.link_names) != self.num_links:
            raise ValueError(
                f"link_names has {len(self.link_names)} entries but num_links is {self.num_links}"
            )
        return self

    def link_name(self, link: int) -> str:
        return self.link_names[link]


class QueueState(_Frozen):
    """Waiting vehicles per link, C_m(i) and C_nm(i), observed at `timestamp` (monotonic ms)."""
    motorized: Tuple[NonNegativeInt, ...]
    non_motorized: Tuple[NonNegativeInt, ...]
    timestamp: int = 0
    stale_links: Tuple[LinkId, ...] = ()

    @model_validator(mode="after")
    def _check_lengths(self) -> "QueueState":
        if len(self.motorized) != len(self.non_motorized):
            raise ValueError(
                f"motorized has {len(self.motorized)} links but non_motorized has {len(self.non_motorized)}"
            )
        for link in self.stale_links:
            if link >= len(self.motorized):
                raise ValueError(f"stale link {link} outside [0, {len(self.motorized)})")
        return self

    @classmethod
    def zeros(cls, num_links: int, timestamp: int = 0) -> "QueueState":
        return cls(motorized=(0,) * num_links, non_motorized=(0,) * num_links, timestamp=timestamp)

    @property
    def num_links(self) -> int:
        return len(self.motorized)

    @property
    def per_link_totals(self) -> Tuple[int, ...]:
        return tuple(m + n for m, n in zip(self.motorized, self.non_motorized))

    @property
    def total_vehicles(self) -> int:
        return sum(self.motorized) + sum(self.non_motorized)

    @property
    def is_stale(self) -> bool:
        return bool(self.stale_links)

    def require_links(self, num_links: int) -> None:
        """Raise DimensionMismatchError unless the queue covers exactly `num_links` links."""
        if self.num_links != num_links:
            raise DimensionMismatchError(
                f"queue has {self.num_links} links, intersection has {num_links}"
            )


class Phase(_Frozen):
    link: LinkId
    green_s: NonNegativeInt


class SignalPlan(_Frozen):
    """
    One signal cycle: phases in service order, each followed by the inter-green

    Every phase is served for guidance_pad_s + green_s + guidance_pad_s seconds.
    """
    phases: Tuple[Phase, ...] = Field(min_length=1)
    inter_green_s: NonNegativeInt = 0
    guidance_pad_s: NonNegativeInt = 0

    @classmethod
    def from_greens(
        cls,
        greens: Sequence[int],
        inter_green_s: int,
        guidance_pad_s: int = 0,
        order: Optional[Sequence[int]] = None
    ) -> "SignalPlan":
        """Build a plan from greens indexed by link, served in `order` (link order by default)."""
        order = range(len(greens)) if order is None else order
        return cls(
            phases=tuple(Phase(link=link, green_s=int(greens[link])) for link in order),
            inter_green_s=inter_green_s,
            guidance_pad_s=guidance_pad_s,
        )

    @property
    def num_links(self) -> int:
        return len(self.phases)

    @property
    def order(self) -> Tuple[int, ...]:
        return tuple(p.link for p in self.phases)

    @property
    def greens_by_link(self) -> Dict[int, int]:
        return {p.link: p.green_s for p in self.phases}

    def greens(self) -> List[int]:
        """Greens indexed by link. Assumes the plan serves links 0..L-1."""
        by_link = self.greens_by_link
        return [by_link[link] for link in range(len(by_link))]

    def service_time(self, green_s: int) -> int:
        return green_s + 2 * self.guidance_pad_s

    @property
    def cycle_length(self) -> int:
        served = sum(self.service_time(p.green_s) for p in self.phases)
        return served + self.num_links * self.inter_green_s

    def with_order(self, order: Iterable[int]) -> "SignalPlan":
        by_link = {p.link: p for p in self.phases}
        return self.model_copy(update={"phases": tuple(by_link[link] for link in order)})


class DetectionRecord(_Frozen):
    """Counts of the four vehicle classes seen by one camera in one frame."""
    camera_id: LinkId
    frame_ts: int
    motorized_in: NonNegativeInt = 0
    motorized_out: NonNegativeInt = 0
    non_motorized_in: NonNegativeInt = 0
    non_motorized_out: NonNegativeInt = 0
    frame_seq: NonNegativeInt = 0


@dataclass(frozen=True, order=True)
class ObjectiveVector:
    """(f1 residual vehicles, f2 red seconds); both minimized."""
    f1: int
    f2: int

    def __post_init__(self):
        if self.f1 < 0 or self.f2 < 0:
            raise ValueError(f"objectives must be non-negative, got ({self.f1}, {self.f2})")

    def as_tuple(self) -> Tuple[int, int]:
        return (self.f1, self.f2)
