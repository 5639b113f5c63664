"""
Detector adapters turning frames into DetectionRecords

Model inference is not performed here: adapters reproduce a detector's delay
and its count errors.
"""

import threading
import time
from typing import Protocol

import numpy as np

from app.core.models import DetectionRecord
from app.pipeline.frame_slot import Frame


class DetectorAdapter(Protocol):
    def detect(self, frame: Frame) -> DetectionRecord:
        """Exactly one record per frame, all counts non-negative."""
        ...


class SyntheticDetector:
    """
    Perturbs a frame's ground-truth counts

    Each true vehicle is missed with probability miss_rate (glare, occlusion);
    false_rate is the mean number of spurious detections per class per frame.

    Args:
        delay_ms: Processing delay per frame
        miss_rate: Per-vehicle miss probability
        false_rate: Poisson mean of false detections per class
        jitter_ms: Uniform extra delay in [0, jitter_ms]
        seed: RNG seed
    """

    def __init__(
        self,
        delay_ms: float = 0.0,
        miss_rate: float = 0.0,
        false_rate: float = 0.0,
        jitter_ms: float = 0.0,
        seed: int = 0
    ):
        if not 0.0 <= miss_rate <= 1.0:
            raise ValueError(f"miss_rate must be in [0, 1], got {miss_rate}")
        if false_rate < 0:
            raise ValueError(f"false_rate must be non-negative, got {false_rate}")
        self.delay_ms = delay_ms
        self.miss_rate = miss_rate
        self.false_rate = false_rate
        self.jitter_ms = jitter_ms
        self._rng = np.random.default_rng(seed)
        self._lock = threading.Lock()

    def _observe(self, true_count: int) -> int:
        seen = int(self._rng.binomial(true_count, 1.0 - self.miss_rate)) if true_count else 0
        if self.false_rate > 0:
            seen += int(self._rng.poisson(self.false_rate))
        return seen

    def detect(self, frame: Frame) -> DetectionRecord:
        truth = frame.payload
        with self._lock:
            counts = [
                self._observe(truth.motorized_in),
                self._observe(truth.motorized_out),
                self._observe(truth.non_motorized_in),
                self._observe(truth.non_motorized_out),
            ]
            delay_ms = self.delay_ms
            if self.jitter_ms > 0:
                delay_ms += float(self._rng.uniform(0.0, self.jitter_ms))
        if delay_ms > 0:
            time.sleep(delay_ms / 1000.0)
        return DetectionRecord(
            camera_id=frame.camera_id,
            frame_ts=int(frame.arrival_ts),
            motorized_in=counts[0],
            motorized_out=counts[1],
            non_motorized_in=counts[2],
            non_motorized_out=counts[3],
            frame_seq=frame.seq,
        )


class ReplayDetector:
    """Returns the recorded record carried by the frame, unchanged."""

    def __init__(self, delay_ms: float = 0.0):
        self.delay_ms = delay_ms

    def detect(self, frame: Frame) -> DetectionRecord:
        if self.delay_ms > 0:
            time.sleep(self.delay_ms / 1000.0)
        return frame.payload
