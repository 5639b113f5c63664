"""
Unit tests for the intersection simulator
Tests queue dynamics, emergency handling, reproducibility and paired comparisons
"""

import json
import random
import tempfile
import unittest
from pathlib import Path

from app.core import IntersectionConfig, QueueState, SignalPlan
from app.core.errors import (
    ConfigError,
    ConfigValidationError,
    DimensionMismatchError,
    InvalidPlanError,
    SimulationError,
)
from app.optimizer import OptimizerParams
from app.simulator import (
    AdaptiveController,
    ArrivalModel,
    Blackout,
    ComparisonReport,
    EmergencyEvent,
    FixedTimeController,
    SimMetrics,
    SimOptions,
    apply_emergency_reorder,
    build_controllers,
    compare_controllers,
    load_scenario,
    percent_delta,
    simulate,
)

DATA_DIR = Path(__file__).parent / "data"


class StaticPlanController:
    """Returns one plan without validating it"""

    name = "static"

    def __init__(self, plan):
        self.plan = plan

    def next_plan(self, observed):
        return self.plan

    def reset(self):
        pass


class TestQueueDynamics(unittest.TestCase):

    def setUp(self):
        self.cfg = IntersectionConfig(num_links=3)
        self.fixed = FixedTimeController.equal_greens(self.cfg, 20)

    def test_zero_demand(self):
        metrics, series = simulate(self.cfg, ArrivalModel.uniform(3, 0.0, 0.0), self.fixed, 600)
        self.assertEqual(metrics.overall_max, 0)
        self.assertEqual(metrics.overall_avg, 0.0)
        self.assertEqual(metrics.throughput_total, 0)
        self.assertEqual(len(series), 600)

    def test_zero_demand_clears_initial_queue(self):
        initial = QueueState(motorized=(6, 2, 9), non_motorized=(1, 4, 0))
        metrics, series = simulate(self.cfg, ArrivalModel.uniform(3, 0.0, 0.0), self.fixed, 600,
                                   SimOptions(initial_queue=initial))
        self.assertEqual(metrics.throughput_total, initial.total_vehicles)
        self.assertEqual(int(series[[f"queue_{i}" for i in range(3)]].iloc[-1].sum()), 0)

    def test_vehicles_are_conserved_every_second(self):
        demand = ArrivalModel.uniform(3, 0.3, 0.2, rng_seed=5)
        initial = QueueState(motorized=(12, 0, 4), non_motorized=(3, 8, 0))
        metrics, series = simulate(self.cfg, demand, self.fixed, 900, SimOptions(initial_queue=initial))
        for link in range(3):
            previous = initial.per_link_totals[link]
            for queue, arrived, discharged in zip(
                series[f"queue_{link}"], series[f"arrived_{link}"], series[f"discharged_{link}"]
            ):
                self.assertEqual(queue, previous + arrived - discharged)
                self.assertGreaterEqual(queue, 0)
                previous = queue
        final = sum(int(series[f"queue_{link}"].iloc[-1]) for link in range(3))
        self.assertEqual(final, metrics.initial_total + metrics.total_arrivals - metrics.throughput_total)

    def test_only_the_served_link_discharges(self):
        demand = ArrivalModel.uniform(3, 0.5, 0.3, rng_seed=2)
        _, series = simulate(self.cfg, demand, self.fixed, 300)
        for _, row in series.iterrows():
            for link in range(3):
                if row["active_link"] != link or row["blocked"]:
                    self.assertEqual(row[f"discharged_{link}"], 0)

    def test_underloaded_link_stays_bounded(self):
        cfg = IntersectionConfig(num_links=2)
        demand = ArrivalModel(motorized_rates=(0.1, 0.0), non_motorized_rates=(0.02, 0.0), rng_seed=9)
        controller = FixedTimeController([30, 30], cfg)
        metrics, _ = simulate(cfg, demand, controller, 10000)
        self.assertLess(metrics.overall_max, 40)
        self.assertEqual(metrics.max_waiting_per_link[1], 0)
        self.assertLess(metrics.total_arrivals - metrics.throughput_total, 40)

    def test_symmetric_demand_gives_similar_links(self):
        cfg = IntersectionConfig(num_links=4)
        demand = ArrivalModel.uniform(4, 0.05, 0.025, rng_seed=4)
        metrics, _ = simulate(cfg, demand, FixedTimeController.equal_greens(cfg, 25), 20000)
        averages = metrics.avg_waiting_per_link
        self.assertLess(max(averages) / min(averages), 1.5)

    def test_same_seed_same_run(self):
        demand = ArrivalModel.uniform(3, 0.2, 0.1, rng_seed=17)
        options = SimOptions(observation_noise=0.8, sensing_latency_s=5)
        first_metrics, first_series = simulate(self.cfg, demand, self.fixed, 1200, options)
        second_metrics, second_series = simulate(self.cfg, demand, self.fixed, 1200, options)
        self.assertEqual(first_metrics, second_metrics)
        self.assertTrue(first_series.equals(second_series))

    def test_different_seeds_differ(self):
        a, _ = simulate(self.cfg, ArrivalModel.uniform(3, 0.2, 0.1, rng_seed=1), self.fixed, 1200)
        b, _ = simulate(self.cfg, ArrivalModel.uniform(3, 0.2, 0.1, rng_seed=2), self.fixed, 1200)
        self.assertNotEqual(a.total_arrivals, b.total_arrivals)

    def test_guidance_pad_lengthens_cycles(self):
        demand = ArrivalModel.uniform(3, 0.1, 0.05)
        plain, _ = simulate(self.cfg, demand, self.fixed, 3600)
        padded, series = simulate(self.cfg, demand, self.fixed, 3600, SimOptions(guidance_pad_s=4))
        self.assertEqual(plain.cycles_completed, 3600 // 69)
        self.assertEqual(padded.cycles_completed, 3600 // 93)
        self.assertIn("pad", set(series["phase_state"]))

    def test_blackout_stops_discharge(self):
        demand = ArrivalModel.uniform(3, 0.4, 0.2, rng_seed=3)
        options = SimOptions(blackouts=(Blackout(start_s=100, duration_s=50, reason="vip"),))
        _, series = simulate(self.cfg, demand, self.fixed, 300, options)
        window = series[(series["t"] >= 100) & (series["t"] < 150)]
        self.assertTrue(window["blocked"].all())
        self.assertEqual(int(window[[f"discharged_{i}" for i in range(3)]].to_numpy().sum()), 0)

    def test_guidance_loss_blocks_start_of_service(self):
        demand = ArrivalModel.uniform(3, 0.4, 0.2, rng_seed=3)
        _, series = simulate(self.cfg, demand, self.fixed, 69, SimOptions(guidance_loss_s=3))
        self.assertEqual(list(series["blocked"][:4]), [True, True, True, False])


class TestControllers(unittest.TestCase):

    def setUp(self):
        self.cfg = IntersectionConfig(num_links=3)

    def test_invalid_fixed_plan_is_rejected(self):
        with self.assertRaises(InvalidPlanError) as ctx:
            FixedTimeController([5, 20, 20], self.cfg)
        self.assertTrue(any("green bound" in v for v in ctx.exception.violations))

    def test_invalid_plan_from_controller_stops_the_run(self):
        plan = SignalPlan.from_greens([20, 20], inter_green_s=3)
        with self.assertRaises(InvalidPlanError):
            simulate(self.cfg, ArrivalModel.uniform(3, 0.1, 0.1), StaticPlanController(plan), 100)

    def test_bad_arguments(self):
        fixed = FixedTimeController.equal_greens(self.cfg, 20)
        with self.assertRaises(SimulationError):
            simulate(self.cfg, ArrivalModel.uniform(3, 0.1, 0.1), fixed, 0)
        with self.assertRaises(DimensionMismatchError):
            simulate(self.cfg, ArrivalModel.uniform(4, 0.1, 0.1), fixed, 100)
        options = SimOptions(emergency_events=(EmergencyEvent(time_s=10, link=3),))
        with self.assertRaises(SimulationError):
            simulate(self.cfg, ArrivalModel.uniform(3, 0.1, 0.1), fixed, 100, options)

    def test_adaptive_controller_replays_after_reset(self):
        controller = AdaptiveController(self.cfg, OptimizerParams(population_size=20, generations=10, rng_seed=4))
        observed = QueueState(motorized=(20, 4, 9), non_motorized=(6, 1, 3))
        first = [controller.next_plan(observed) for _ in range(3)]
        self.assertEqual(controller.invocations, 3)
        controller.reset()
        second = [controller.next_plan(observed) for _ in range(3)]
        self.assertEqual(first, second)
        self.assertIsNotNone(controller.last_front)


class TestEmergency(unittest.TestCase):

    def setUp(self):
        self.plan = SignalPlan.from_greens([20, 25, 30, 35, 40], inter_green_s=3)

    def test_reorder_moves_link_after_active_phase(self):
        reordered = apply_emergency_reorder(self.plan, EmergencyEvent(time_s=0, link=3), active_index=0)
        self.assertEqual(reordered.order, (0, 3, 1, 2, 4))
        self.assertEqual(reordered.greens_by_link, self.plan.greens_by_link)

    def test_reorder_leaves_plan_when_link_is_next_or_done(self):
        self.assertEqual(apply_emergency_reorder(self.plan, EmergencyEvent(time_s=0, link=1)), self.plan)
        self.assertEqual(apply_emergency_reorder(self.plan, EmergencyEvent(time_s=0, link=0)), self.plan)
        self.assertEqual(
            apply_emergency_reorder(self.plan, EmergencyEvent(time_s=0, link=1), active_index=2), self.plan
        )

    def test_reorder_single_link_plan(self):
        single = SignalPlan.from_greens([30], inter_green_s=0)
        self.assertEqual(apply_emergency_reorder(single, EmergencyEvent(time_s=0, link=0)), single)

    def test_emergency_link_is_served_promptly(self):
        """100 random events, each against the remainder of the phase active when it arrives"""
        cfg = IntersectionConfig(num_links=5)
        rng = random.Random(31)
        demand = ArrivalModel.uniform(5, 0.05, 0.02)
        for _ in range(100):
            greens = [rng.randint(cfg.min_green_s, cfg.max_green_s) for _ in range(5)]
            event = EmergencyEvent(time_s=rng.randint(0, 400), link=rng.randrange(5))
            _, baseline = simulate(cfg, demand, FixedTimeController(greens, cfg), 700)
            active = baseline["active_link"].tolist()
            current = active[event.time_s]
            if current == event.link:
                bound = 0
            else:
                remainder = 0
                while active[event.time_s + remainder] == current:
                    remainder += 1
                bound = remainder if current == -1 else remainder + cfg.inter_green_s

            options = SimOptions(emergency_events=(event,))
            _, series = simulate(cfg, demand, FixedTimeController(greens, cfg), 700, options)
            served = series[(series["t"] >= event.time_s) & (series["active_link"] == event.link)]
            self.assertFalse(served.empty)
            wait = int(served["t"].iloc[0]) - event.time_s
            self.assertLessEqual(wait, bound, msg=f"{event} greens={greens}")
            self.assertTrue((series["active_link"][:event.time_s] == baseline["active_link"][:event.time_s]).all())

    def test_simulated_reorder_matches_plan_reorder(self):
        cfg = IntersectionConfig(num_links=5, inter_green_s=3)
        greens = [20, 25, 30, 35, 40]
        plan = SignalPlan.from_greens(greens, inter_green_s=cfg.inter_green_s)
        event = EmergencyEvent(time_s=5, link=3)
        options = SimOptions(emergency_events=(event,))
        demand = ArrivalModel.uniform(5, 0.0, 0.0)
        _, series = simulate(cfg, demand, FixedTimeController(greens, cfg), plan.cycle_length, options)
        served = [link for link in series["active_link"].tolist() if link != -1]
        order = [served[0]] + [b for a, b in zip(served, served[1:]) if b != a]
        self.assertEqual(tuple(order), apply_emergency_reorder(plan, event, active_index=0).order)

    def test_emergency_for_served_link_inserts_a_service(self):
        cfg = IntersectionConfig(num_links=3, inter_green_s=3)
        demand = ArrivalModel.uniform(3, 0.0, 0.0)
        options = SimOptions(emergency_events=(EmergencyEvent(time_s=30, link=0),))
        _, series = simulate(cfg, demand, FixedTimeController([20, 20, 20], cfg), 69, options)
        self.assertEqual(int((series["active_link"] == 0).sum()), 40)
        self.assertEqual(int(series["active_link"].iloc[46]), 0)

    def test_emergency_extension_lengthens_active_green(self):
        cfg = IntersectionConfig(num_links=3)
        controller = FixedTimeController([20, 20, 20], cfg)
        demand = ArrivalModel.uniform(3, 0.0, 0.0)
        options = SimOptions(emergency_events=(EmergencyEvent(time_s=5, link=0),), emergency_extension_s=10)
        _, series = simulate(cfg, demand, controller, 40, options)
        self.assertEqual(int((series["active_link"] == 0).sum()), 30)


class TestComparison(unittest.TestCase):

    def test_percent_delta(self):
        self.assertEqual(percent_delta(80, 100), -20.0)
        self.assertEqual(percent_delta(0, 0), 0.0)

    def test_undefined_delta_is_written_as_null(self):
        cfg = IntersectionConfig(num_links=2)

        def metrics(waiting):
            return SimMetrics(
                max_waiting_per_link=(waiting, waiting), avg_waiting_per_link=(float(waiting),) * 2,
                overall_max=waiting, overall_avg=float(waiting), throughput_total=0, total_arrivals=0,
                initial_total=0, time_horizon_s=60, cycles_completed=1,
            )

        report = ComparisonReport(
            cfg, ["empty", "busy"], [1], "empty",
            metrics={"empty": {1: metrics(0)}, "busy": {1: metrics(4)}},
        )
        self.assertIsNone(percent_delta(4, 0))
        self.assertEqual(report.deltas("busy"), {"overall_avg_pct": None, "overall_max_pct": None})
        self.assertEqual(report.deltas("empty"), {"overall_avg_pct": 0.0, "overall_max_pct": 0.0})
        document = json.loads(json.dumps(report.to_dict(), allow_nan=False))
        busy = next(row for row in document["summary"] if row["controller"] == "busy")
        self.assertIsNone(busy["overall_avg_delta_pct"])
        self.assertEqual(busy["overall_avg"], 4.0)

    def test_identical_controllers_have_zero_deltas(self):
        cfg = IntersectionConfig(num_links=3)
        demand = ArrivalModel.uniform(3, 0.2, 0.1)
        controllers = [
            FixedTimeController.equal_greens(cfg, 20, name="a"),
            FixedTimeController.equal_greens(cfg, 20, name="b"),
        ]
        report = compare_controllers(cfg, demand, controllers, 900, seeds=[1, 2, 3], progress=False)
        self.assertEqual(report.deltas("b"), {"overall_avg_pct": 0.0, "overall_max_pct": 0.0})
        self.assertEqual(report.wins("b"), 3)
        self.assertEqual(len(report.per_seed_frame()), 6)
        self.assertEqual(len(report.per_link_frame()), 6)

    def test_phase_order_does_not_matter_under_symmetric_demand(self):
        cfg = IntersectionConfig(num_links=3)
        demand = ArrivalModel.uniform(3, 0.08, 0.04)
        controllers = [
            FixedTimeController.equal_greens(cfg, 20, name="forward"),
            FixedTimeController.equal_greens(cfg, 20, order=[2, 1, 0], name="reversed"),
        ]
        report = compare_controllers(cfg, demand, controllers, 3600, seeds=[1, 2, 3, 4, 5], progress=False)
        self.assertLess(abs(report.deltas("reversed")["overall_avg_pct"]), 10.0)

    def test_comparison_arguments(self):
        cfg = IntersectionConfig(num_links=3)
        demand = ArrivalModel.uniform(3, 0.2, 0.1)
        one = FixedTimeController.equal_greens(cfg, 20, name="a")
        with self.assertRaises(ValueError):
            compare_controllers(cfg, demand, [one], 100, seeds=[1])
        with self.assertRaises(ValueError):
            compare_controllers(cfg, demand, [one, one], 100, seeds=[1])
        with self.assertRaises(ValueError):
            compare_controllers(cfg, demand, [one, FixedTimeController.equal_greens(cfg, 20)], 100, seeds=[])

    def test_adaptive_beats_fixed_on_asymmetric_demand(self):
        scenario = load_scenario(DATA_DIR / "scenarios" / "palashi5_asymmetric.json")
        report = compare_controllers(
            scenario.intersection_config,
            scenario.arrival_model(),
            build_controllers(scenario),
            scenario.horizon_s,
            scenario.seeds,
            scenario.options,
            baseline=scenario.baseline,
            progress=False,
        )
        self.assertGreaterEqual(report.wins("adaptive"), 9)
        self.assertLessEqual(report.deltas("adaptive")["overall_avg_pct"], -10.0)


class TestScenario(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write(self, data):
        path = self.tmp / "scenario.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    def base(self, **overrides):
        data = {
            "intersection": {"num_links": 2},
            "demand": {"motorized_rates": [0.1, 0.1], "non_motorized_rates": [0.05, 0.05]},
            "controllers": [{"type": "fixed", "name": "f", "greens": [20, 20]}, {"type": "adaptive"}],
            "horizon_s": 600,
        }
        data.update(overrides)
        return data

    def test_bundled_scenarios_load(self):
        for name in ("palashi5_asymmetric.json", "palashi5_field.json"):
            scenario = load_scenario(DATA_DIR / "scenarios" / name)
            self.assertEqual(scenario.intersection_config.num_links, 5)
            self.assertEqual(len(build_controllers(scenario)), 2)

    def test_inline_scenario(self):
        scenario = load_scenario(self.write(self.base()))
        self.assertEqual(scenario.seeds, [0])
        self.assertEqual(scenario.controller_spec("adaptive").type, "adaptive")
        with self.assertRaises(ConfigError):
            scenario.controller_spec("missing")

    def test_cross_field_problems_are_reported_together(self):
        data = self.base(
            demand={"motorized_rates": [0.1], "non_motorized_rates": [0.05, 0.05]},
            baseline="nobody",
        )
        data["controllers"][0]["greens"] = [20, 20, 20]
        with self.assertRaises(ConfigValidationError) as ctx:
            load_scenario(self.write(data))
        self.assertEqual(len(ctx.exception.problems), 3)

    def test_non_positive_horizon(self):
        with self.assertRaises(ConfigValidationError):
            load_scenario(self.write(self.base(horizon_s=0)))


if __name__ == '__main__':
    unittest.main(verbosity=2)
