"""
Unit tests for the camera pipeline
Tests the frame slot, workers, window aggregation, latency ledger and the orchestrator
"""

import json
import queue
import tempfile
import threading
import time
import unittest
from pathlib import Path

from app.core import ConfigValidationError, DetectionRecord, IntersectionConfig, validate_plan
from app.core.errors import (
    AggregationTimeoutError,
    DetectorError,
    DimensionMismatchError,
    PipelineStalledError,
    SourceError,
)
from app.pipeline import (
    AggregationWindow,
    CycleLatency,
    Frame,
    FrameSlot,
    INFERENCE,
    LatencyLedger,
    PipelineConfig,
    ReplaySource,
    SignalPipeline,
    StalePolicy,
    SyntheticDetector,
    SyntheticSceneSource,
    WorkerStats,
    aggregate,
    load_pipeline_config,
    run_extraction_worker,
    run_inference_worker,
    slot_put,
)

DATA_DIR = Path(__file__).parent / "data"


def make_frame(seq, camera_id=0, m_in=0):
    record = DetectionRecord(camera_id=camera_id, frame_ts=seq, motorized_in=m_in, frame_seq=seq)
    return Frame(camera_id=camera_id, seq=seq, arrival_ts=float(seq), payload=record)


def record(camera_id, frame_ts, m_in=0, nm_in=0, m_out=0, nm_out=0):
    return DetectionRecord(
        camera_id=camera_id, frame_ts=frame_ts,
        motorized_in=m_in, non_motorized_in=nm_in,
        motorized_out=m_out, non_motorized_out=nm_out,
    )


def synthetic_camera(camera_id, fps=100, m_in=6.0, nm_in=3.0):
    return {
        "camera_id": camera_id,
        "source": {"type": "synthetic", "fps": fps, "decode_delay_ms": 1, "seed": 10 + camera_id,
                   "scene": {"motorized_in": m_in, "motorized_out": 2, "non_motorized_in": nm_in}},
        "detector": {"type": "synthetic", "delay_ms": 2, "miss_rate": 0.1, "seed": 20 + camera_id},
    }


def fast_pipeline_config(**overrides):
    data = {
        "intersection": {"num_links": 2, "min_green_s": 10, "max_green_s": 40},
        "cameras": [synthetic_camera(0), synthetic_camera(1, m_in=2.0, nm_in=1.0)],
        "window_ms": 150,
        "aggregation_timeout_ms": 300,
        "optimizer": {"population_size": 10, "generations": 5, "rng_seed": 3},
    }
    data.update(overrides)
    return PipelineConfig.model_validate(data)


class TestFrameSlot(unittest.TestCase):

    def test_thousand_puts_keep_only_the_newest(self):
        slot = FrameSlot()
        dropped = [slot_put(slot, make_frame(seq)) for seq in range(1000)]
        self.assertFalse(dropped[0])
        self.assertTrue(all(dropped[1:]))
        self.assertEqual(slot.drops, 999)
        self.assertEqual(len(slot), 1)
        self.assertEqual(slot.take().seq, 999)
        self.assertTrue(slot.empty)
        self.assertIsNone(slot.take())

    def test_take_waits_for_a_frame(self):
        slot = FrameSlot()
        timer = threading.Timer(0.05, slot.put, args=(make_frame(1),))
        timer.start()
        frame = slot.take(timeout=2.0)
        timer.join()
        self.assertEqual(frame.seq, 1)

    def test_take_times_out_on_empty_slot(self):
        self.assertIsNone(FrameSlot().take(timeout=0.01))

    def test_consumer_always_gets_newest_frame(self):
        """Producer ten times faster than the consumer"""
        slot = FrameSlot()
        done = threading.Event()

        def produce():
            for seq in range(400):
                slot.put(make_frame(seq))
                time.sleep(0.0005)
            done.set()

        producer = threading.Thread(target=produce)
        producer.start()
        taken = []
        while not done.is_set():
            frame = slot.take(timeout=0.01)
            if frame is not None:
                self.assertEqual(frame.seq, slot.watermark_at_last_take)
                taken.append(frame.seq)
            time.sleep(0.005)
        producer.join()

        self.assertGreater(len(taken), 1)
        self.assertEqual(taken, sorted(set(taken)))
        self.assertGreater(slot.drops, 0)


class TestWorkers(unittest.TestCase):

    def setUp(self):
        self.stop = threading.Event()
        self.samples = queue.SimpleQueue()

    def test_empty_source_finishes_cleanly(self):
        stats = WorkerStats(name="extraction-0")
        run_extraction_worker(ReplaySource(0, []), FrameSlot(), self.stop, self.samples, stats)
        self.assertTrue(stats.finished)
        self.assertFalse(stats.failed)
        self.assertEqual(stats.frames, 0)

    def test_source_failure_is_contained(self):
        source = SyntheticSceneSource(0, fps=1000, decode_delay_ms=0, fail_after_frames=5)
        stats = WorkerStats(name="extraction-0")
        run_extraction_worker(source, FrameSlot(), self.stop, self.samples, stats)
        self.assertTrue(stats.failed)
        self.assertTrue(stats.finished)
        self.assertEqual(stats.frames, 5)
        self.assertEqual(stats.errors, 1)
        self.assertIsInstance(stats.last_error, SourceError)
        self.assertIn("stream lost", str(stats.last_error))

    def test_replay_source_sorts_its_own_records(self):
        records = [record(1, 50), record(0, 30), record(0, 10), record(1, 5)]
        source = ReplaySource(0, records)
        self.assertEqual([r.frame_ts for r in source.records], [10, 30])

    def test_detector_failures_are_counted(self):
        class OddFrameDetector:
            def detect(self, frame):
                if frame.seq % 2:
                    raise RuntimeError("glare")
                return frame.payload

        slot = FrameSlot()
        delivered = []
        stats = WorkerStats(name="inference-0")
        upstream = WorkerStats(name="extraction-0")
        worker = threading.Thread(
            target=run_inference_worker,
            args=(slot, OddFrameDetector(), delivered.append, self.stop, self.samples, stats, upstream, 0.01),
        )
        worker.start()
        for seq in range(10):
            slot.put(make_frame(seq))
            while not slot.empty:
                time.sleep(0.001)
        upstream.finished = True
        worker.join(timeout=5)

        self.assertFalse(worker.is_alive())
        self.assertEqual(len(delivered), 5)
        self.assertEqual(stats.errors, 5)
        self.assertEqual([r.frame_seq for r in delivered], [0, 2, 4, 6, 8])
        self.assertIsInstance(stats.last_error, DetectorError)
        self.assertIn("glare", str(stats.last_error))
        self.assertIn("frame 9", str(stats.last_error))

    def test_slow_consumer_sees_only_newest_frames(self):
        """100 frames at 100 fps against a consumer taking one frame every 100 ms"""
        source = SyntheticSceneSource(0, fps=100, decode_delay_ms=0, num_frames=100)
        slot = FrameSlot()
        stats = WorkerStats(name="extraction-0")
        worker = threading.Thread(target=run_extraction_worker, args=(source, slot, self.stop, self.samples, stats))
        worker.start()
        taken = []
        while not stats.finished:
            time.sleep(0.1)
            frame = slot.take()
            if frame is not None:
                taken.append(frame.seq)
        worker.join(timeout=5)
        frame = slot.take()
        if frame is not None:
            taken.append(frame.seq)

        self.assertEqual(stats.frames, 100)
        self.assertEqual(len(taken) + slot.drops, 100)
        self.assertEqual(taken, sorted(set(taken)))
        self.assertEqual(taken[-1], 99)
        self.assertGreaterEqual(len(taken), 5)
        self.assertLessEqual(len(taken), 20)

    def test_inference_samples_track_detector_delay(self):
        slot = FrameSlot()
        delivered = []
        stats = WorkerStats(name="inference-0")
        upstream = WorkerStats(name="extraction-0")
        worker = threading.Thread(
            target=run_inference_worker,
            args=(slot, SyntheticDetector(delay_ms=40), delivered.append, self.stop, self.samples, stats,
                  upstream, 0.01),
        )
        worker.start()
        for seq in range(5):
            slot.put(make_frame(seq, m_in=3))
            deadline = time.monotonic() + 5
            while len(delivered) <= seq and time.monotonic() < deadline:
                time.sleep(0.005)
        upstream.finished = True
        worker.join(timeout=5)

        durations = []
        while not self.samples.empty():
            sample = self.samples.get()
            self.assertEqual(sample.stage, INFERENCE)
            durations.append(sample.ms)
        self.assertEqual(len(durations), 5)
        for ms in durations:
            self.assertGreaterEqual(ms, 39.0)
            self.assertLess(ms, 140.0)

    def test_synthetic_detector_counts(self):
        frame = make_frame(3, m_in=12)
        self.assertEqual(SyntheticDetector().detect(frame).motorized_in, 12)
        self.assertEqual(SyntheticDetector(miss_rate=1.0).detect(frame).motorized_in, 0)
        with self.assertRaises(ValueError):
            SyntheticDetector(miss_rate=1.5)


class TestAggregate(unittest.TestCase):

    def setUp(self):
        self.cfg = IntersectionConfig(num_links=3)
        self.window = AggregationWindow(num_links=3, max_stale_windows=2)

    def test_latest_record_per_camera_wins(self):
        records = [record(0, 100, 5, 1), record(0, 200, 7, 2), record(1, 150, 3, 4)]
        queue_state = aggregate(self.window, records, self.cfg, now_ms=500)
        self.assertEqual(queue_state.motorized, (7, 3, 0))
        self.assertEqual(queue_state.non_motorized, (2, 4, 0))
        self.assertEqual(queue_state.stale_links, (2,))
        self.assertEqual(queue_state.timestamp, 500)

    def test_silent_camera_reuses_then_zeros(self):
        aggregate(self.window, [record(0, 1, 4), record(1, 1, 9, 2), record(2, 1, 1)], self.cfg)
        for _ in range(2):
            reused = aggregate(self.window, [record(0, 2, 4), record(2, 2, 1)], self.cfg)
            self.assertEqual(reused.motorized[1], 9)
            self.assertEqual(reused.non_motorized[1], 2)
            self.assertEqual(reused.stale_links, (1,))
        expired = aggregate(self.window, [record(0, 3, 4), record(2, 3, 1)], self.cfg)
        self.assertEqual(expired.motorized[1], 0)
        self.assertEqual(expired.stale_links, (1,))

    def test_zeros_policy(self):
        window = AggregationWindow(num_links=3, stale_policy=StalePolicy.ZEROS)
        aggregate(window, [record(0, 1, 4), record(1, 1, 9), record(2, 1, 1)], self.cfg)
        silent = aggregate(window, [record(0, 2, 4), record(2, 2, 1)], self.cfg)
        self.assertEqual(silent.motorized, (4, 0, 1))

    def test_all_cameras_silent(self):
        queue_state = aggregate(self.window, [], self.cfg)
        self.assertEqual(queue_state.stale_links, (0, 1, 2))
        self.assertEqual(queue_state.total_vehicles, 0)

    def test_unknown_camera_raises(self):
        with self.assertRaises(DimensionMismatchError):
            aggregate(self.window, [record(3, 1, 1)], self.cfg)

    def test_throughput_report_sums_outgoing(self):
        aggregate(self.window, [record(0, 1, m_out=3, nm_out=1)], self.cfg)
        aggregate(self.window, [record(0, 2, m_out=2)], self.cfg)
        report = self.window.throughput_report()
        self.assertEqual(report[0], {"motorized_out": 5, "non_motorized_out": 1})
        self.assertEqual(report[2], {"motorized_out": 0, "non_motorized_out": 0})


class TestLatencyLedger(unittest.TestCase):

    def test_cycle_aggregates(self):
        entry = CycleLatency(
            cycle_id=1,
            extraction_samples_ms=(10, 20, 30),
            inference_samples_ms=(100, 200),
            optimization_ms=500,
        )
        self.assertEqual(entry.t_extraction_ms, 20)
        self.assertEqual(entry.t_inference_ms, 150)
        self.assertEqual(entry.t_latency_ms, 670)

    def test_missing_stage_contributes_zero(self):
        entry = CycleLatency(cycle_id=1, inference_samples_ms=(40,), optimization_ms=10)
        self.assertEqual(entry.t_extraction_ms, 0)
        self.assertEqual(entry.t_latency_ms, 50)

    def test_run_mean(self):
        ledger = LatencyLedger()
        ledger.append(CycleLatency(cycle_id=1, extraction_samples_ms=(10, 20, 30),
                                   inference_samples_ms=(100, 200), optimization_ms=500))
        ledger.append(CycleLatency(cycle_id=2, extraction_samples_ms=(30,),
                                   inference_samples_ms=(200,), optimization_ms=500))
        self.assertEqual(len(ledger), 2)
        self.assertEqual(ledger.t_latency_ms, 700)
        frame = ledger.summary_frame()
        self.assertEqual(list(frame["t_latency_ms"]), [670, 730])
        self.assertEqual(ledger.summary()["cycles"], 2)

    def test_trend(self):
        flat = LatencyLedger()
        rising = LatencyLedger()
        for i in range(10):
            flat.append(CycleLatency(cycle_id=i, optimization_ms=100))
            rising.append(CycleLatency(cycle_id=i, optimization_ms=100 + 50 * i))
        self.assertTrue(flat.trend().stable)
        self.assertEqual(flat.trend().slope_ms_per_cycle, 0.0)
        self.assertFalse(rising.trend().stable)
        self.assertAlmostEqual(rising.trend().slope_ms_per_cycle, 50.0)

    def test_jsonl_lines_carry_aggregates(self):
        ledger = LatencyLedger()
        ledger.append(CycleLatency(cycle_id=4, extraction_samples_ms=(2,), optimization_ms=3))
        line = json.loads(ledger.to_jsonl_lines()[0])
        self.assertEqual(line["cycle_id"], 4)
        self.assertEqual(line["t_latency_ms"], 5)


class TestPipelineConfig(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write_config(self, cameras, intersection=None):
        path = self.tmp / "pipeline.json"
        data = {"intersection": intersection or {"num_links": 2}, "cameras": cameras}
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    def test_bundled_configs_load(self):
        for name in ("synthetic_palashi5.json", "replay_palashi5.json"):
            config = load_pipeline_config(DATA_DIR / "pipeline" / name)
            self.assertEqual(config.intersection_config.num_links, 5)
            self.assertEqual(len(config.cameras), 5)

    def test_camera_outside_intersection(self):
        path = self.write_config([synthetic_camera(0), synthetic_camera(1), synthetic_camera(2)])
        with self.assertRaises(ConfigValidationError) as ctx:
            load_pipeline_config(path)
        self.assertIn("camera 2 outside [0, 2)", ctx.exception.problems)

    def test_duplicate_and_missing_cameras(self):
        path = self.write_config([synthetic_camera(0), synthetic_camera(0)])
        with self.assertRaises(ConfigValidationError) as ctx:
            load_pipeline_config(path)
        self.assertIn("camera 0 configured more than once", ctx.exception.problems)
        self.assertIn("link 1 has no camera", ctx.exception.problems)

    def test_unknown_source_type(self):
        camera = {"camera_id": 0, "source": {"type": "rtsp", "url": "rtsp://cam"}}
        path = self.write_config([camera, synthetic_camera(1)])
        with self.assertRaises(ConfigValidationError):
            load_pipeline_config(path)


class TestSignalPipeline(unittest.TestCase):

    def test_synthetic_run_emits_valid_plans(self):
        config = fast_pipeline_config()
        cfg = config.intersection_config
        seen = []
        with SignalPipeline(config) as pipeline:
            results = pipeline.run(cycles=3, on_cycle=seen.append)

        self.assertEqual(len(results), 3)
        self.assertEqual(seen, results)
        ids = [r.cycle_id for r in results]
        self.assertEqual(ids, sorted(set(ids)))
        for result in results:
            self.assertEqual(validate_plan(result.plan, cfg), [])
            self.assertGreater(len(result.front), 0)
            latency = result.latency
            self.assertAlmostEqual(
                latency.t_latency_ms,
                latency.t_extraction_ms + latency.t_inference_ms + latency.optimization_ms,
            )
        self.assertEqual(len(pipeline.ledger), 3)
        self.assertTrue(all(s.finished for s in pipeline.extraction_stats.values()))

    def test_constant_scene_gives_constant_plan(self):
        empty_scene = [
            {"camera_id": i, "source": {"type": "synthetic", "fps": 100, "decode_delay_ms": 0}}
            for i in range(2)
        ]
        config = fast_pipeline_config(cameras=empty_scene)
        with SignalPipeline(config) as pipeline:
            results = pipeline.run(cycles=2)
        self.assertEqual(results[0].plan, results[1].plan)
        self.assertEqual(results[0].plan.greens(), [10, 10])

    def test_buffered_frames_never_exceed_camera_count(self):
        config = fast_pipeline_config(cameras=[synthetic_camera(i, fps=200) for i in range(3)],
                                      intersection={"num_links": 3})
        peak = []
        done = threading.Event()
        with SignalPipeline(config) as pipeline:
            def watch():
                while not done.is_set():
                    peak.append(sum(len(slot) for slot in pipeline.slots.values()))
                    time.sleep(0.001)

            watcher = threading.Thread(target=watch)
            watcher.start()
            try:
                results = pipeline.run(cycles=3)
            finally:
                done.set()
                watcher.join()
        self.assertEqual(len(results), 3)
        self.assertTrue(peak)
        self.assertLessEqual(max(peak), 3)

    def test_silent_cameras_time_out(self):
        slow = [dict(synthetic_camera(i), detector={"type": "synthetic", "delay_ms": 1500}) for i in range(2)]
        config = fast_pipeline_config(cameras=slow, window_ms=50, aggregation_timeout_ms=50, max_consecutive_skips=2)
        with SignalPipeline(config) as pipeline:
            with self.assertRaises(AggregationTimeoutError):
                pipeline.run(cycles=1)
        self.assertEqual(pipeline.skipped_cycles, 2)
        self.assertEqual(len(pipeline.ledger), 0)

    def test_shared_inference_pool(self):
        config = fast_pipeline_config(inference_pool_size=1)
        with SignalPipeline(config) as pipeline:
            results = pipeline.run(cycles=2)
        self.assertEqual(len(results), 2)
        self.assertEqual(len(pipeline.inference_stats), 1)
        self.assertGreater(pipeline.inference_stats[0].frames, 0)

    def test_bundled_replay_ends_when_log_is_exhausted(self):
        pipeline = SignalPipeline.from_config_file(DATA_DIR / "pipeline" / "replay_palashi5.json")
        with pipeline:
            results = pipeline.run(cycles=5)
        self.assertEqual(len(results), 1)
        self.assertEqual(results[0].queue.stale_links, ())
        self.assertEqual(results[0].queue.motorized[0], 17)

    def test_empty_replay_stalls(self):
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            (tmp / "empty.jsonl").write_text("", encoding="utf-8")
            cameras = [
                {"camera_id": i, "source": {"type": "replay", "path": "empty.jsonl"},
                 "detector": {"type": "replay"}}
                for i in range(2)
            ]
            path = tmp / "pipeline.json"
            path.write_text(json.dumps({
                "intersection": {"num_links": 2},
                "cameras": cameras,
                "window_ms": 100,
                "aggregation_timeout_ms": 100,
            }), encoding="utf-8")
            with SignalPipeline.from_config_file(path) as pipeline:
                with self.assertRaises(PipelineStalledError):
                    pipeline.run(cycles=1)
            self.assertEqual(len(pipeline.ledger), 0)


if __name__ == '__main__':
    unittest.main(verbosity=2)
