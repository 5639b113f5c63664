"""
Extraction and inference worker loops

Workers never raise into the orchestrator: failures are logged and counted in
their WorkerStats. Latency samples go to a shared queue that only the
orchestrator drains.
"""

import logging
import queue
import threading
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple, Optional, Sequence

from app.core.errors import DetectorError, SignalEngineError, SourceError
from app.core.models import DetectionRecord
from app.pipeline.detectors import DetectorAdapter
from app.pipeline.frame_slot import FrameSlot
from app.pipeline.sources import FrameSource
from app.utils import monotonic_ms

logger = logging.getLogger(__name__)

RecordSink = Callable[[DetectionRecord], None]

EXTRACTION = "extraction"
INFERENCE = "inference"


class LatencySample(NamedTuple):
    stage: str
    camera_id: int
    ms: float


@dataclass
class WorkerStats:
    name: str
    frames: int = 0
    drops: int = 0
    errors: int = 0
    failed: bool = False
    finished: bool = False
    busy: bool = False
    last_error: Optional[SignalEngineError] = None


def run_extraction_worker(
    source: FrameSource,
    slot: FrameSlot,
    stop: threading.Event,
    samples: "queue.SimpleQueue[LatencySample]",
    stats: WorkerStats
) -> None:
    """
    Grab, decode and offer every frame of `source` to `slot` until stop or end of source

    One D_extraction sample (packet grab -> frame in slot) is recorded per frame.
    A source failure marks the worker failed; the camera then goes stale.
    """
    try:
        for packet in source.packets(stop):
            frame = source.decode(packet)
            dropped = slot.put(frame)
            samples.put(LatencySample(EXTRACTION, frame.camera_id, monotonic_ms() - packet.arrival_ts))
            stats.frames += 1
            if dropped:
                stats.drops += 1
            if stop.is_set():
                break
    except Exception as e:
        stats.failed = True
        stats.errors += 1
        stats.last_error = e if isinstance(e, SourceError) else SourceError(f"camera {source.camera_id}: {e}")
        logger.error(f"{stats.name} stopped after {stats.frames} frames: {e}")
    finally:
        stats.finished = True


def _process_next(
    slot: FrameSlot,
    detector: DetectorAdapter,
    sink: RecordSink,
    samples: "queue.SimpleQueue[LatencySample]",
    stats: WorkerStats,
    timeout: float
) -> bool:
    """Run inference on the slot's frame, if any. Returns whether a frame was taken."""
    # busy covers the take, so a frame is never outside both the slot and the sink unseen
    stats.busy = True
    try:
        frame = slot.take(timeout)
        if frame is None:
            return False
        start = monotonic_ms()
        try:
            record = detector.detect(frame)
        except Exception as e:
            stats.errors += 1
            stats.last_error = e if isinstance(e, DetectorError) else DetectorError(
                f"camera {frame.camera_id} frame {frame.seq}: {e}"
            )
            logger.warning(f"{stats.name}: detection failed, {stats.last_error}")
            return True
        samples.put(LatencySample(INFERENCE, frame.camera_id, monotonic_ms() - start))
        stats.frames += 1
        sink(record)
        return True
    finally:
        stats.busy = False


def _upstream_done(slots: Sequence[FrameSlot], upstream: Optional[Sequence[WorkerStats]]) -> bool:
    if upstream is None:
        return False
    return all(s.finished for s in upstream) and all(slot.empty for slot in slots)


def run_inference_worker(
    slot: FrameSlot,
    detector: DetectorAdapter,
    sink: RecordSink,
    stop: threading.Event,
    samples: "queue.SimpleQueue[LatencySample]",
    stats: WorkerStats,
    upstream: Optional[WorkerStats] = None,
    poll_s: float = 0.05
) -> None:
    """
    Take frames from one slot and deliver one DetectionRecord per frame to `sink`

    Returns on stop, or once `upstream` has finished and the slot is drained.
    """
    upstream_list = None if upstream is None else [upstream]
    try:
        while not stop.is_set():
            if not _process_next(slot, detector, sink, samples, stats, poll_s):
                if _upstream_done([slot], upstream_list):
                    break
    finally:
        stats.finished = True


def run_inference_pool_worker(
    slots: Sequence[FrameSlot],
    detectors: Mapping[int, DetectorAdapter],
    sink: RecordSink,
    stop: threading.Event,
    samples: "queue.SimpleQueue[LatencySample]",
    stats: WorkerStats,
    upstream: Optional[Sequence[WorkerStats]] = None,
    poll_s: float = 0.01
) -> None:
    """Serve several slots round-robin, for hosts with fewer inference threads than cameras."""
    try:
        while not stop.is_set():
            served = False
            for slot in slots:
                served |= _process_next(slot, detectors[slot.camera_id], sink, samples, stats, 0.0)
                if stop.is_set():
                    break
            if not served:
                if _upstream_done(slots, upstream):
                    break
                stop.wait(poll_s)
    finally:
        stats.finished = True
