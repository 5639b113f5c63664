"""
Concurrent camera pipeline: frame extraction, inference, aggregation and latency accounting
"""

from .frame_slot import Frame, FrameSlot, slot_put
from .sources import FrameSource, Packet, ReplaySource, SyntheticSceneSource
from .detectors import DetectorAdapter, ReplayDetector, SyntheticDetector
from .workers import (
    EXTRACTION,
    INFERENCE,
    LatencySample,
    WorkerStats,
    run_extraction_worker,
    run_inference_pool_worker,
    run_inference_worker,
)
from .aggregator import AggregationWindow, StalePolicy, aggregate
from .latency import CycleLatency, LatencyLedger, LatencyTrend
from .orchestrator import (
    CameraConfig,
    CycleResult,
    PipelineConfig,
    SignalPipeline,
    load_detection_log,
    load_pipeline_config,
)

__all__ = [
    'Frame', 'FrameSlot', 'slot_put',
    'FrameSource', 'Packet', 'ReplaySource', 'SyntheticSceneSource',
    'DetectorAdapter', 'ReplayDetector', 'SyntheticDetector',
    'EXTRACTION', 'INFERENCE', 'LatencySample', 'WorkerStats',
    'run_extraction_worker', 'run_inference_pool_worker', 'run_inference_worker',
    'AggregationWindow', 'StalePolicy', 'aggregate',
    'CycleLatency', 'LatencyLedger', 'LatencyTrend',
    'CameraConfig', 'CycleResult', 'PipelineConfig', 'SignalPipeline',
    'load_detection_log', 'load_pipeline_config',
]
