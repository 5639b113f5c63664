"""
End-to-end latency ledger

Per cycle i:
    T_extraction_i = mean of the D_extraction samples recorded during the cycle
    T_inference_i  = mean of the D_inference samples recorded during the cycle
    T_latency_i    = T_extraction_i + T_inference_i + T_optimization_i
Per run:
    T_latency      = mean of T_latency_i over the N recorded cycles

A stage with no samples in a cycle contributes 0 ms.
"""

import math
import threading
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, computed_field

# Two-sided 95% critical value, large-sample normal approximation
_Z_95 = 1.96


def _mean(samples: Sequence[float]) -> float:
    return math.fsum(samples) / len(samples) if samples else 0.0


class CycleLatency(BaseModel):
    """Latency entry of one signal cycle (all values in ms)."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    cycle_id: int = Field(ge=0)
    extraction_samples_ms: Tuple[float, ...] = ()
    inference_samples_ms: Tuple[float, ...] = ()
    optimization_ms: float = Field(default=0.0, ge=0.0)

    @computed_field
    @property
    def t_extraction_ms(self) -> float:
        return _mean(self.extraction_samples_ms)

    @computed_field
    @property
    def t_inference_ms(self) -> float:
        return _mean(self.inference_samples_ms)

    @computed_field
    @property
    def t_latency_ms(self) -> float:
        return self.t_extraction_ms + self.t_inference_ms + self.optimization_ms


@dataclass(frozen=True)
class LatencyTrend:
    """Least-squares slope of T_latency_i over cycle index."""
    slope_ms_per_cycle: float
    stderr: float
    stable: bool


class LatencyLedger:
    """Append-only list of CycleLatency entries. Only the orchestrator appends."""

    def __init__(self):
        self._cycles: List[CycleLatency] = []
        self._lock = threading.Lock()

    def append(self, entry: CycleLatency) -> None:
        with self._lock:
            self._cycles.append(entry)

    @property
    def cycles(self) -> List[CycleLatency]:
        with self._lock:
            return list(self._cycles)

    def __len__(self) -> int:
        return len(self.cycles)

    @property
    def t_latency_ms(self) -> float:
        return _mean([c.t_latency_ms for c in self.cycles])

    def trend(self) -> LatencyTrend:
        """
        Test whether latency accumulates over the run

        `stable` is True when the slope is within 1.96 standard errors of zero.
        """
        values = np.array([c.t_latency_ms for c in self.cycles], dtype=np.float64)
        n = len(values)
        if n < 3:
            return LatencyTrend(0.0, math.inf, True)
        x = np.arange(n, dtype=np.float64)
        x_centered = x - x.mean()
        sxx = float((x_centered ** 2).sum())
        slope = float((x_centered * (values - values.mean())).sum() / sxx)
        intercept = values.mean() - slope * x.mean()
        residuals = values - (intercept + slope * x)
        stderr = math.sqrt(float((residuals ** 2).sum()) / (n - 2) / sxx)
        stable = abs(slope) <= _Z_95 * stderr if stderr > 0 else slope == 0.0
        return LatencyTrend(slope, stderr, bool(stable))

    def summary_frame(self) -> pd.DataFrame:
        """One row per cycle with the per-cycle aggregates."""
        rows = [
            {
                "cycle_id": c.cycle_id,
                "n_extraction": len(c.extraction_samples_ms),
                "n_inference": len(c.inference_samples_ms),
                "t_extraction_ms": c.t_extraction_ms,
                "t_inference_ms": c.t_inference_ms,
                "t_optimization_ms": c.optimization_ms,
                "t_latency_ms": c.t_latency_ms,
            }
            for c in self.cycles
        ]
        columns = [
            "cycle_id", "n_extraction", "n_inference", "t_extraction_ms",
            "t_inference_ms", "t_optimization_ms", "t_latency_ms",
        ]
        return pd.DataFrame(rows, columns=columns)

    def summary(self) -> Dict[str, float]:
        cycles = self.cycles
        trend = self.trend()
        return {
            "cycles": len(cycles),
            "t_extraction_ms": _mean([c.t_extraction_ms for c in cycles]),
            "t_inference_ms": _mean([c.t_inference_ms for c in cycles]),
            "t_optimization_ms": _mean([c.optimization_ms for c in cycles]),
            "t_latency_ms": self.t_latency_ms,
            "trend_slope_ms_per_cycle": trend.slope_ms_per_cycle,
            "trend_stable": trend.stable,
        }

    def to_jsonl_lines(self) -> List[str]:
        return [c.model_dump_json() for c in self.cycles]
