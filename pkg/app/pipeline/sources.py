"""
Frame sources: synthetic scene generators and detection-log replay

Sources yield packets cheaply at their own pace; decode() turns a packet into a
Frame and carries the extraction cost.
"""

import threading
import time
from dataclasses import dataclass
from itertools import count
from typing import Iterator, Optional, Protocol, Sequence

import numpy as np

from app.core.errors import SourceError
from app.core.models import DetectionRecord
from app.pipeline.frame_slot import Frame
from app.utils import monotonic_ms


@dataclass(frozen=True)
class Packet:
    camera_id: int
    seq: int
    arrival_ts: float
    truth: DetectionRecord


class FrameSource(Protocol):
    camera_id: int

    def packets(self, stop: threading.Event) -> Iterator[Packet]:
        ...

    def decode(self, packet: Packet) -> Frame:
        ...


class SyntheticSceneSource:
    """
    Camera emulator drawing per-frame class counts from Poisson scene means

    Args:
        camera_id: Camera / link index
        scene: Mean counts (motorized_in, motorized_out, non_motorized_in, non_motorized_out)
        fps: Packet rate
        decode_delay_ms: Mean decode cost per frame
        jitter_ms: Uniform extra decode delay in [0, jitter_ms]
        num_frames: Stop after this many frames (None = until stopped)
        seed: RNG seed for counts and jitter
        fail_after_frames: Raise SourceError instead of producing frame number N+1
    """

    def __init__(
        self,
        camera_id: int,
        scene: Sequence[float] = (0.0, 0.0, 0.0, 0.0),
        fps: float = 10.0,
        decode_delay_ms: float = 5.0,
        jitter_ms: float = 0.0,
        num_frames: Optional[int] = None,
        seed: int = 0,
        fail_after_frames: Optional[int] = None
    ):
        if fps <= 0:
            raise ValueError(f"fps must be positive, got {fps}")
        self.camera_id = camera_id
        self.scene = tuple(float(x) for x in scene)
        self.period_s = 1.0 / fps
        self.decode_delay_ms = decode_delay_ms
        self.jitter_ms = jitter_ms
        self.num_frames = num_frames
        self.fail_after_frames = fail_after_frames
        self._rng = np.random.default_rng(seed)

    def packets(self, stop: threading.Event) -> Iterator[Packet]:
        next_due = time.monotonic()
        for seq in count():
            if self.num_frames is not None and seq >= self.num_frames:
                return
            if self.fail_after_frames is not None and seq >= self.fail_after_frames:
                raise SourceError(f"camera {self.camera_id}: stream lost after {seq} frames")
            if stop.wait(max(0.0, next_due - time.monotonic())):
                return
            m_in, m_out, nm_in, nm_out = (int(x) for x in self._rng.poisson(self.scene))
            truth = DetectionRecord(
                camera_id=self.camera_id,
                frame_ts=int(monotonic_ms()),
                motorized_in=m_in,
                motorized_out=m_out,
                non_motorized_in=nm_in,
                non_motorized_out=nm_out,
                frame_seq=seq,
            )
            yield Packet(self.camera_id, seq, monotonic_ms(), truth)
            next_due += self.period_s

    def decode(self, packet: Packet) -> Frame:
        delay_ms = self.decode_delay_ms
        if self.jitter_ms > 0:
            delay_ms += float(self._rng.uniform(0.0, self.jitter_ms))
        if delay_ms > 0:
            time.sleep(delay_ms / 1000.0)
        return Frame(packet.camera_id, packet.seq, packet.arrival_ts, packet.truth)


class ReplaySource:
    """
    Replays recorded DetectionRecords of one camera

    With realtime=True the gaps between recorded frame_ts values are reproduced,
    divided by `speed`; otherwise records are emitted back to back.
    """

    def __init__(
        self,
        camera_id: int,
        records: Sequence[DetectionRecord],
        realtime: bool = False,
        speed: float = 1.0
    ):
        self.camera_id = camera_id
        own = [r for r in records if r.camera_id == camera_id]
        self.records = sorted(own, key=lambda r: r.frame_ts)
        self.realtime = realtime
        self.speed = speed

    def packets(self, stop: threading.Event) -> Iterator[Packet]:
        previous_ts = None
        for seq, record in enumerate(self.records):
            gap_s = 0.0
            if self.realtime and previous_ts is not None:
                gap_s = (record.frame_ts - previous_ts) / 1000.0 / self.speed
            if stop.wait(gap_s):
                return
            previous_ts = record.frame_ts
            yield Packet(self.camera_id, seq, monotonic_ms(), record)

    def decode(self, packet: Packet) -> Frame:
        return Frame(packet.camera_id, packet.seq, packet.arrival_ts, packet.truth)
