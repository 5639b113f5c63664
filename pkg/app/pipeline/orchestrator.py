"""
Signal pipeline orchestrator
Runs frame extraction, inference and signal optimization as one control loop
"""

import logging
import queue
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat

from app.core.config import load_model, read_json, parse_model
from app.core.errors import AggregationTimeoutError, ConfigValidationError, PipelineStalledError
from app.core.models import DetectionRecord, IntersectionConfig, QueueState, SignalPlan
from app.optimizer import nsga2
from app.optimizer.nsga2 import OptimizerParams, ParetoFront
from app.optimizer.objectives import ObjectiveOptions, plan_from_genome
from app.optimizer.selection import SelectionPolicy, select_individual
from app.pipeline.aggregator import AggregationWindow, StalePolicy, aggregate
from app.pipeline.detectors import DetectorAdapter, ReplayDetector, SyntheticDetector
from app.pipeline.frame_slot import FrameSlot
from app.pipeline.latency import CycleLatency, LatencyLedger
from app.pipeline.sources import FrameSource, ReplaySource, SyntheticSceneSource
from app.pipeline.workers import (
    EXTRACTION,
    LatencySample,
    WorkerStats,
    run_extraction_worker,
    run_inference_pool_worker,
    run_inference_worker,
)
from app.utils import PathLike, monotonic_ms, read_jsonl, setup_logging


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SceneCounts(_Frozen):
    """Poisson means of the four classes per frame"""
    motorized_in: NonNegativeFloat = 0.0
    motorized_out: NonNegativeFloat = 0.0
    non_motorized_in: NonNegativeFloat = 0.0
    non_motorized_out: NonNegativeFloat = 0.0

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.motorized_in, self.motorized_out, self.non_motorized_in, self.non_motorized_out)


class SyntheticSourceConfig(_Frozen):
    type: Literal["synthetic"] = "synthetic"
    fps: float = Field(default=10.0, gt=0)
    scene: SceneCounts = SceneCounts()
    decode_delay_ms: NonNegativeFloat = 5.0
    jitter_ms: NonNegativeFloat = 0.0
    num_frames: Optional[int] = Field(default=None, ge=0)
    seed: int = Field(default=0, ge=0)


class ReplaySourceConfig(_Frozen):
    type: Literal["replay"] = "replay"
    path: str
    realtime: bool = False
    speed: float = Field(default=1.0, gt=0)


class SyntheticDetectorConfig(_Frozen):
    type: Literal["synthetic"] = "synthetic"
    delay_ms: NonNegativeFloat = 0.0
    jitter_ms: NonNegativeFloat = 0.0
    miss_rate: float = Field(default=0.0, ge=0.0, le=1.0)
    false_rate: NonNegativeFloat = 0.0
    seed: int = Field(default=0, ge=0)


class ReplayDetectorConfig(_Frozen):
    type: Literal["replay"] = "replay"
    delay_ms: NonNegativeFloat = 0.0


class CameraConfig(_Frozen):
    camera_id: int = Field(ge=0)
    source: Union[SyntheticSourceConfig, ReplaySourceConfig] = Field(discriminator="type")
    detector: Union[SyntheticDetectorConfig, ReplayDetectorConfig] = Field(
        default=SyntheticDetectorConfig(), discriminator="type"
    )


class PipelineConfig(_Frozen):
    """
    Pipeline scenario file

    `intersection` is either inline or a path relative to the scenario file;
    load_pipeline_config resolves it.
    """
    intersection: Union[IntersectionConfig, str]
    cameras: List[CameraConfig] = Field(min_length=1)
    window_ms: float = Field(default=2000.0, gt=0)
    aggregation_timeout_ms: NonNegativeFloat = 4000.0
    stale_policy: StalePolicy = StalePolicy.REUSE
    max_stale_windows: int = Field(default=2, ge=0)
    max_consecutive_skips: int = Field(default=5, ge=1)
    inference_pool_size: Optional[int] = Field(default=None, ge=1)
    optimizer: OptimizerParams = OptimizerParams()
    policy: SelectionPolicy = SelectionPolicy.KNEE
    weights: Tuple[float, float] = (0.5, 0.5)
    guidance_pad_s: int = Field(default=0, ge=0)
    objective: ObjectiveOptions = ObjectiveOptions()
    base_dir: str = "."

    @property
    def intersection_config(self) -> IntersectionConfig:
        if not isinstance(self.intersection, IntersectionConfig):
            raise ValueError("intersection path not resolved; use load_pipeline_config")
        return self.intersection


def load_pipeline_config(path: PathLike) -> PipelineConfig:
    """Load a pipeline scenario, resolving the intersection file and checking camera ids."""
    path = Path(path)
    data = read_json(path)
    config = parse_model(data, PipelineConfig, str(path))
    base_dir = path.parent
    intersection = config.intersection
    if isinstance(intersection, str):
        intersection = load_model(base_dir / intersection, IntersectionConfig)

    ids = [cam.camera_id for cam in config.cameras]
    problems = [f"camera {i} outside [0, {intersection.num_links})" for i in ids if i >= intersection.num_links]
    problems += [f"camera {i} configured more than once" for i in sorted(set(ids)) if ids.count(i) > 1]
    problems += [f"link {link} has no camera" for link in range(intersection.num_links) if link not in ids]
    if problems:
        raise ConfigValidationError(str(path), problems)
    return config.model_copy(update={"intersection": intersection, "base_dir": str(base_dir)})


def load_detection_log(path: PathLike) -> List[DetectionRecord]:
    """Read a line-delimited DetectionRecord log."""
    records = []
    for lineno, data in enumerate(read_jsonl(path), start=1):
        records.append(parse_model(data, DetectionRecord, f"{path}:{lineno}"))
    return records


@dataclass(frozen=True)
class CycleResult:
    cycle_id: int
    queue: QueueState
    plan: SignalPlan
    front: ParetoFront
    f1: int
    f2: int
    latency: CycleLatency

    def to_record(self) -> Dict[str, object]:
        return {
            "cycle_id": self.cycle_id,
            "queue": self.queue.model_dump(mode="json"),
            "plan": self.plan.model_dump(mode="json"),
            "f1": self.f1,
            "f2": self.f2,
            "front_size": len(self.front),
        }


class SignalPipeline:
    """
    Concurrent stream-processing pipeline

    Topology: one extraction thread per camera feeding a latest-only FrameSlot,
    inference threads (one per camera, or a shared pool) feeding a record queue,
    and this object's control loop aggregating windows and running the optimizer.
    """

    def __init__(self, config: PipelineConfig, logger: Optional[logging.Logger] = None):
        self.config = config
        self.cfg = config.intersection_config
        self.logger = logger or setup_logging('signal_pipeline')
        self.ledger = LatencyLedger()
        self.window = AggregationWindow(
            num_links=self.cfg.num_links,
            duration_ms=config.window_ms,
            stale_policy=config.stale_policy,
            max_stale_windows=config.max_stale_windows,
        )
        self.slots: Dict[int, FrameSlot] = {cam.camera_id: FrameSlot(cam.camera_id) for cam in config.cameras}
        self.extraction_stats: Dict[int, WorkerStats] = {}
        self.inference_stats: List[WorkerStats] = []
        self.skipped_cycles = 0

        self._stop = threading.Event()
        self._records: "queue.Queue[DetectionRecord]" = queue.Queue()
        self._samples: "queue.SimpleQueue[LatencySample]" = queue.SimpleQueue()
        self._threads: List[threading.Thread] = []
        self._cycle_id = 0
        self._replay_cache: Dict[Path, List[DetectionRecord]] = {}

    @classmethod
    def from_config_file(cls, path: PathLike, logger: Optional[logging.Logger] = None) -> "SignalPipeline":
        return cls(load_pipeline_config(path), logger=logger)

    # ---- construction of sources and detectors ----

    def _build_source(self, camera: CameraConfig) -> FrameSource:
        spec = camera.source
        if isinstance(spec, SyntheticSourceConfig):
            return SyntheticSceneSource(
                camera.camera_id,
                scene=spec.scene.as_tuple(),
                fps=spec.fps,
                decode_delay_ms=spec.decode_delay_ms,
                jitter_ms=spec.jitter_ms,
                num_frames=spec.num_frames,
                seed=spec.seed,
            )
        log_path = (Path(self.config.base_dir) / spec.path).resolve()
        if log_path not in self._replay_cache:
            self._replay_cache[log_path] = load_detection_log(log_path)
        return ReplaySource(camera.camera_id, self._replay_cache[log_path], spec.realtime, spec.speed)

    @staticmethod
    def _build_detector(camera: CameraConfig) -> DetectorAdapter:
        spec = camera.detector
        if isinstance(spec, SyntheticDetectorConfig):
            return SyntheticDetector(spec.delay_ms, spec.miss_rate, spec.false_rate, spec.jitter_ms, spec.seed)
        return ReplayDetector(spec.delay_ms)

    def _spawn(self, name: str, target: Callable, *args) -> None:
        thread = threading.Thread(target=target, args=args, name=name, daemon=True)
        self._threads.append(thread)
        thread.start()

    # ---- lifecycle ----

    def start(self) -> None:
        """Start extraction and inference threads."""
        self.logger.info("=" * 60)
        self.logger.info(f"Signal pipeline starting: {len(self.config.cameras)} cameras, "
                         f"window {self.config.window_ms:.0f} ms")
        self.logger.info("=" * 60)

        detectors: Dict[int, DetectorAdapter] = {}
        for camera in self.config.cameras:
            source = self._build_source(camera)
            detectors[camera.camera_id] = self._build_detector(camera)
            stats = WorkerStats(name=f"extraction-{camera.camera_id}")
            self.extraction_stats[camera.camera_id] = stats
            self._spawn(stats.name, run_extraction_worker, source, self.slots[camera.camera_id],
                        self._stop, self._samples, stats)

        camera_ids = sorted(self.slots)
        pool_size = self.config.inference_pool_size
        if pool_size is None:
            for camera_id in camera_ids:
                stats = WorkerStats(name=f"inference-{camera_id}")
                self.inference_stats.append(stats)
                self._spawn(stats.name, run_inference_worker, self.slots[camera_id], detectors[camera_id],
                            self._records.put, self._stop, self._samples, stats,
                            self.extraction_stats[camera_id])
        else:
            for worker in range(min(pool_size, len(camera_ids))):
                assigned = camera_ids[worker::pool_size]
                stats = WorkerStats(name=f"inference-pool-{worker}")
                self.inference_stats.append(stats)
                self._spawn(stats.name, run_inference_pool_worker,
                            [self.slots[c] for c in assigned], detectors, self._records.put,
                            self._stop, self._samples, stats,
                            [self.extraction_stats[c] for c in assigned])
        self.logger.info(f"✓ {len(self._threads)} worker threads running")

    def stop(self, timeout: Optional[float] = 10.0) -> None:
        """Broadcast stop and join every worker."""
        self._stop.set()
        for thread in self._threads:
            thread.join(timeout)
        alive = [t.name for t in self._threads if t.is_alive()]
        if alive:
            self.logger.warning(f"⚠ workers still running after stop: {', '.join(alive)}")
        else:
            self.logger.info("✓ all workers stopped")

    def __enter__(self) -> "SignalPipeline":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    # ---- control loop ----

    def sources_exhausted(self) -> bool:
        """True when no further DetectionRecord can ever arrive."""
        extraction_done = all(s.finished for s in self.extraction_stats.values())
        inference_idle = all(s.finished or not s.busy for s in self.inference_stats)
        slots_empty = all(slot.empty for slot in self.slots.values())
        return extraction_done and inference_idle and slots_empty and self._records.empty()

    def _collect_window(self) -> List[DetectionRecord]:
        start = monotonic_ms()
        window_end = start + self.config.window_ms
        hard_end = window_end + self.config.aggregation_timeout_ms
        cameras = set(self.slots)
        seen = set()
        records: List[DetectionRecord] = []
        while not self._stop.is_set():
            now = monotonic_ms()
            if now >= hard_end or (now >= window_end and seen >= cameras):
                break
            if self.sources_exhausted():
                break
            wait_ms = (window_end if now < window_end else hard_end) - now
            try:
                record = self._records.get(timeout=max(0.001, min(wait_ms, 50.0)) / 1000.0)
            except queue.Empty:
                continue
            records.append(record)
            seen.add(record.camera_id)
        return records

    def _drain_samples(self) -> Tuple[List[float], List[float]]:
        extraction, inference = [], []
        while True:
            try:
                sample = self._samples.get_nowait()
            except queue.Empty:
                break
            (extraction if sample.stage == EXTRACTION else inference).append(sample.ms)
        return extraction, inference

    def run_cycle(self) -> Optional[CycleResult]:
        """
        Aggregate one window, optimize, and emit a plan

        Returns:
            CycleResult, or None when every camera was stale and the cycle was skipped

        Raises:
            PipelineStalledError: every camera is stale and no source can produce more
        """
        self._cycle_id += 1
        cycle_id = self._cycle_id
        records = self._collect_window()
        observed = aggregate(self.window, records, self.cfg, now_ms=monotonic_ms())
        extraction, inference = self._drain_samples()

        if len(observed.stale_links) == self.cfg.num_links:
            self.skipped_cycles += 1
            if self.sources_exhausted():
                raise PipelineStalledError(
                    f"cycle {cycle_id}: every camera is stale and all sources have stopped"
                )
            self.logger.warning(f"⚠ Cycle {cycle_id} skipped: no camera reported within the window")
            return None
        if observed.stale_links:
            self.logger.warning(f"⚠ Cycle {cycle_id}: stale links {list(observed.stale_links)}")

        started = monotonic_ms()
        front = nsga2.run(
            observed, self.cfg, self.config.optimizer,
            options=self.config.objective, guidance_pad_s=self.config.guidance_pad_s,
        )
        chosen = select_individual(front, self.config.policy, self.config.weights)
        plan = plan_from_genome(chosen.genome, self.cfg, self.config.guidance_pad_s)
        optimization_ms = monotonic_ms() - started

        entry = CycleLatency(
            cycle_id=cycle_id,
            extraction_samples_ms=tuple(extraction),
            inference_samples_ms=tuple(inference),
            optimization_ms=optimization_ms,
        )
        self.ledger.append(entry)
        self.logger.info(
            f"✓ Cycle {cycle_id}: greens {plan.greens()} (f1={chosen.objectives.f1}, "
            f"f2={chosen.objectives.f2}), latency {entry.t_latency_ms:.1f} ms"
        )
        return CycleResult(
            cycle_id=cycle_id,
            queue=observed,
            plan=plan,
            front=front,
            f1=chosen.objectives.f1,
            f2=chosen.objectives.f2,
            latency=entry,
        )

    def run(
        self,
        cycles: Optional[int] = None,
        on_cycle: Optional[Callable[[CycleResult], None]] = None
    ) -> List[CycleResult]:
        """
        Emit plans until `cycles` plans exist, stop() is called, or the sources run dry

        Raises:
            PipelineStalledError: every source stopped before any plan was emitted
            AggregationTimeoutError: max_consecutive_skips windows in a row had no camera report
        """
        results: List[CycleResult] = []
        consecutive_skips = 0
        while not self._stop.is_set() and (cycles is None or len(results) < cycles):
            try:
                result = self.run_cycle()
            except PipelineStalledError:
                if results:
                    self.logger.info("Sources exhausted; ending run")
                    break
                raise
            if result is None:
                consecutive_skips += 1
                if consecutive_skips >= self.config.max_consecutive_skips:
                    raise AggregationTimeoutError(
                        f"{consecutive_skips} consecutive cycles without any camera report"
                    )
                continue
            consecutive_skips = 0
            results.append(result)
            if on_cycle is not None:
                on_cycle(result)
        return results

    def throughput_report(self) -> Dict[int, Dict[str, int]]:
        return self.window.throughput_report()

    def worker_report(self) -> List[Dict[str, object]]:
        rows = []
        for stats in list(self.extraction_stats.values()) + self.inference_stats:
            rows.append({
                "worker": stats.name,
                "frames": stats.frames,
                "drops": stats.drops,
                "errors": stats.errors,
                "failed": stats.failed,
            })
        return rows
