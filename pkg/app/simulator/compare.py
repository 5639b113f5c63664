"""
Paired-seed comparison of signal controllers
"""

import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import pandas as pd
from tqdm import tqdm

from app.core.models import IntersectionConfig
from app.simulator.controllers import Controller
from app.simulator.demand import ArrivalModel
from app.simulator.engine import SimMetrics, SimOptions, simulate

logger = logging.getLogger(__name__)


def percent_delta(value: float, baseline: float) -> Optional[float]:
    """(value - baseline) / baseline in percent; negative means value is lower. None when undefined."""
    if baseline == 0:
        return 0.0 if value == 0 else None
    return (value - baseline) / baseline * 100.0


def _finite_or_none(value) -> Optional[float]:
    value = float(value)
    return value if math.isfinite(value) else None


@dataclass
class ComparisonReport:
    """
    Metrics of every (controller, seed) cell plus seed-averaged summaries

    All controllers saw the same arrival sequence for a given seed.
    """
    cfg: IntersectionConfig
    controllers: List[str]
    seeds: List[int]
    baseline: str
    metrics: Dict[str, Dict[int, SimMetrics]] = field(default_factory=dict)

    def per_seed_frame(self) -> pd.DataFrame:
        rows = []
        for name in self.controllers:
            for seed in self.seeds:
                m = self.metrics[name][seed]
                rows.append({
                    "controller": name,
                    "seed": seed,
                    "overall_avg": m.overall_avg,
                    "overall_max": m.overall_max,
                    "throughput_total": m.throughput_total,
                })
        return pd.DataFrame(rows, columns=["controller", "seed", "overall_avg", "overall_max", "throughput_total"])

    def per_link_frame(self) -> pd.DataFrame:
        """Seed-averaged per-link waiting statistics for every controller."""
        rows = []
        for name in self.controllers:
            cells = [self.metrics[name][seed] for seed in self.seeds]
            for link in range(self.cfg.num_links):
                rows.append({
                    "controller": name,
                    "link": link,
                    "link_name": self.cfg.link_name(link),
                    "avg_waiting": math.fsum(c.avg_waiting_per_link[link] for c in cells) / len(cells),
                    "max_waiting": math.fsum(c.max_waiting_per_link[link] for c in cells) / len(cells),
                })
        return pd.DataFrame(rows)

    def summary_frame(self) -> pd.DataFrame:
        frame = self.per_seed_frame()
        summary = frame.groupby("controller", sort=False)[["overall_avg", "overall_max", "throughput_total"]].mean()
        base = summary.loc[self.baseline]
        for column in ("overall_avg", "overall_max"):
            summary[f"{column}_delta_pct"] = pd.Series(
                [percent_delta(v, base[column]) for v in summary[column]], index=summary.index, dtype="float64"
            )
        summary["wins_vs_baseline"] = [self.wins(name) for name in summary.index]
        return summary.reset_index()

    def deltas(self, name: str) -> Dict[str, Optional[float]]:
        row = self.summary_frame().set_index("controller").loc[name]
        return {
            "overall_avg_pct": _finite_or_none(row["overall_avg_delta_pct"]),
            "overall_max_pct": _finite_or_none(row["overall_max_delta_pct"]),
        }

    def wins(self, name: str, baseline: Optional[str] = None) -> int:
        """Seeds on which `name` waited no more on average than the baseline."""
        baseline = baseline or self.baseline
        return sum(
            self.metrics[name][seed].overall_avg <= self.metrics[baseline][seed].overall_avg
            for seed in self.seeds
        )

    def to_dict(self) -> Dict[str, object]:
        return {
            "baseline": self.baseline,
            "seeds": list(self.seeds),
            "summary": [
                {key: _finite_or_none(value) if isinstance(value, float) else value for key, value in row.items()}
                for row in self.summary_frame().to_dict(orient="records")
            ],
        }


def compare_controllers(
    cfg: IntersectionConfig,
    demand: ArrivalModel,
    controllers: Sequence[Controller],
    horizon_s: int,
    seeds: Sequence[int],
    options: Optional[SimOptions] = None,
    baseline: Optional[str] = None,
    progress: Optional[bool] = None
) -> ComparisonReport:
    """
    Simulate every controller on every seed

    Args:
        cfg: Intersection config
        demand: Arrival rates; its seed is replaced by each entry of `seeds`
        controllers: At least two, with distinct names
        horizon_s: Simulated seconds per cell
        seeds: Arrival seeds, shared by every controller
        options: Simulation options applied to every cell
        baseline: Controller the deltas are taken against (first by default)
        progress: Show a tqdm bar; defaults to whether stderr is a terminal

    Returns:
        ComparisonReport
    """
    if len(controllers) < 2:
        raise ValueError("compare_controllers needs at least two controllers")
    if not seeds:
        raise ValueError("compare_controllers needs at least one seed")
    names = [c.name for c in controllers]
    if len(set(names)) != len(names):
        raise ValueError(f"controller names must be distinct, got {names}")
    baseline = baseline or names[0]
    if baseline not in names:
        raise ValueError(f"baseline {baseline!r} is not one of {names}")

    report = ComparisonReport(cfg=cfg, controllers=names, seeds=list(seeds), baseline=baseline)
    show = sys.stderr.isatty() if progress is None else progress
    cells = [(controller, seed) for controller in controllers for seed in seeds]
    for controller, seed in tqdm(cells, desc="Simulating", unit="run", disable=not show):
        metrics, _ = simulate(cfg, demand.with_seed(seed), controller, horizon_s, options)
        report.metrics.setdefault(controller.name, {})[seed] = metrics
        logger.debug(f"{controller.name} seed {seed}: overall_avg {metrics.overall_avg:.3f}")
    return report
