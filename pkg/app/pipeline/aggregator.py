"""
Window aggregation of DetectionRecords into the QueueState fed to the optimizer
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional

from app.core.errors import DimensionMismatchError
from app.core.models import DetectionRecord, IntersectionConfig, QueueState


class StalePolicy(Enum):
    """What a silent camera contributes to the queue"""
    REUSE = "reuse"
    ZEROS = "zeros"


@dataclass
class AggregationWindow:
    """
    Aggregation settings plus the memory carried between windows

    A silent camera reuses its last known counts for up to max_stale_windows
    consecutive windows (REUSE policy), then contributes zeros. Either way the
    link is flagged stale.
    """
    num_links: int
    duration_ms: float = 2000.0
    stale_policy: StalePolicy = StalePolicy.REUSE
    max_stale_windows: int = 2
    last_known: Dict[int, DetectionRecord] = field(default_factory=dict)
    missed_windows: Dict[int, int] = field(default_factory=dict)
    outgoing_motorized: List[int] = field(default_factory=list)
    outgoing_non_motorized: List[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.outgoing_motorized:
            self.outgoing_motorized = [0] * self.num_links
        if not self.outgoing_non_motorized:
            self.outgoing_non_motorized = [0] * self.num_links

    def throughput_report(self) -> Dict[int, Dict[str, int]]:
        """Outgoing vehicles per link summed over the latest record of every window."""
        return {
            link: {
                "motorized_out": self.outgoing_motorized[link],
                "non_motorized_out": self.outgoing_non_motorized[link],
            }
            for link in range(self.num_links)
        }


def aggregate(
    window: AggregationWindow,
    records: Iterable[DetectionRecord],
    cfg: IntersectionConfig,
    now_ms: Optional[float] = None
) -> QueueState:
    """
    Build a QueueState from the records of one window

    The latest record (by frame_ts, later arrival on ties) of each camera gives
    that link's motorized_in / non_motorized_in counts. Outgoing counts only feed
    the throughput report.

    Raises:
        DimensionMismatchError: a record names a camera outside [0, L)
    """
    latest: Dict[int, DetectionRecord] = {}
    for record in records:
        if record.camera_id >= cfg.num_links:
            raise DimensionMismatchError(
                f"camera {record.camera_id} outside [0, {cfg.num_links})"
            )
        current = latest.get(record.camera_id)
        if current is None or record.frame_ts >= current.frame_ts:
            latest[record.camera_id] = record

    motorized, non_motorized, stale = [], [], []
    for link in range(cfg.num_links):
        record = latest.get(link)
        if record is not None:
            window.last_known[link] = record
            window.missed_windows[link] = 0
            window.outgoing_motorized[link] += record.motorized_out
            window.outgoing_non_motorized[link] += record.non_motorized_out
            motorized.append(record.motorized_in)
            non_motorized.append(record.non_motorized_in)
            continue

        missed = window.missed_windows.get(link, 0) + 1
        window.missed_windows[link] = missed
        stale.append(link)
        known = window.last_known.get(link)
        if (
            known is not None
            and window.stale_policy is StalePolicy.REUSE
            and missed <= window.max_stale_windows
        ):
            motorized.append(known.motorized_in)
            non_motorized.append(known.non_motorized_in)
        else:
            motorized.append(0)
            non_motorized.append(0)

    return QueueState(
        motorized=tuple(motorized),
        non_motorized=tuple(non_motorized),
        timestamp=int(now_ms or 0),
        stale_links=tuple(stale),
    )
