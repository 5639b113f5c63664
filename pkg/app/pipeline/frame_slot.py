"""
Latest-only frame buffer of size one

A write replaces whatever frame is waiting, so the consumer always gets the
newest frame and nothing queues up behind a slow detector.
"""

import threading
from dataclasses import dataclass
from typing import Optional

from app.core.models import DetectionRecord


@dataclass(frozen=True)
class Frame:
    """
    A decoded frame ready for inference

    Attributes:
        camera_id: Camera (link) that produced the frame
        seq: Per-camera sequence number, strictly increasing
        arrival_ts: Monotonic ms at which the packet was grabbed
        payload: Ground-truth counts the frame depicts
    """
    camera_id: int
    seq: int
    arrival_ts: float
    payload: DetectionRecord


class FrameSlot:
    """Single-slot buffer with atomic replace semantics"""

    def __init__(self, camera_id: int = 0):
        self.camera_id = camera_id
        self._cond = threading.Condition()
        self._frame: Optional[Frame] = None
        self.puts = 0
        self.drops = 0
        self.takes = 0
        self.newest_seq = -1
        # newest_seq as seen by the most recent successful take
        self.watermark_at_last_take = -1

    def put(self, frame: Frame) -> bool:
        """Store `frame`; returns True when an unconsumed frame was discarded."""
        with self._cond:
            dropped = self._frame is not None
            self._frame = frame
            self.puts += 1
            self.newest_seq = max(self.newest_seq, frame.seq)
            if dropped:
                self.drops += 1
            self._cond.notify_all()
        return dropped

    def take(self, timeout: Optional[float] = 0.0) -> Optional[Frame]:
        """
        Remove and return the waiting frame

        Args:
            timeout: Seconds to wait for a frame; 0 returns immediately, None waits forever

        Returns:
            The newest unconsumed frame, or None when the slot stayed empty
        """
        with self._cond:
            if self._frame is None and timeout != 0:
                self._cond.wait_for(lambda: self._frame is not None, timeout)
            frame, self._frame = self._frame, None
            if frame is not None:
                self.takes += 1
                self.watermark_at_last_take = self.newest_seq
            return frame

    def __len__(self) -> int:
        with self._cond:
            return 0 if self._frame is None else 1

    @property
    def empty(self) -> bool:
        return len(self) == 0


def slot_put(slot: FrameSlot, frame: Frame) -> bool:
    """Offer a frame to a slot; returns whether an older unconsumed frame was dropped."""
    return slot.put(frame)
