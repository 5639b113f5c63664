"""
Poisson arrival model for the intersection simulator
"""

from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, model_validator

# Independent child streams spawned from one seed
ARRIVALS_STREAM = 0
OBSERVATION_STREAM = 1
_NUM_STREAMS = 2


class ArrivalModel(BaseModel):
    """
    Per-link, per-class arrival rates in vehicles per second

    Arrivals of one link and class in one second are Poisson(rate). The same
    rng_seed always yields the same arrival sequence, whatever controller runs.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    motorized_rates: Tuple[NonNegativeFloat, ...] = Field(min_length=1)
    non_motorized_rates: Tuple[NonNegativeFloat, ...] = Field(min_length=1)
    rng_seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _same_width(self) -> "ArrivalModel":
        if len(self.motorized_rates) != len(self.non_motorized_rates):
            raise ValueError(
                f"motorized_rates has {len(self.motorized_rates)} links, "
                f"non_motorized_rates has {len(self.non_motorized_rates)}"
            )
        return self

    @classmethod
    def uniform(cls, num_links: int, motorized: float, non_motorized: float, rng_seed: int = 0) -> "ArrivalModel":
        return cls(
            motorized_rates=(motorized,) * num_links,
            non_motorized_rates=(non_motorized,) * num_links,
            rng_seed=rng_seed,
        )

    @property
    def num_links(self) -> int:
        return len(self.motorized_rates)

    def with_seed(self, rng_seed: int) -> "ArrivalModel":
        return self.model_copy(update={"rng_seed": rng_seed})

    def generator(self, stream: int) -> np.random.Generator:
        children = np.random.SeedSequence(self.rng_seed).spawn(_NUM_STREAMS)
        return np.random.default_rng(children[stream])

    def sample(self, horizon_s: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Draw every arrival of the horizon up front

        Returns:
            (motorized, non_motorized) int64 arrays of shape (horizon_s, L)
        """
        rng = self.generator(ARRIVALS_STREAM)
        shape = (horizon_s, self.num_links)
        motorized = rng.poisson(np.asarray(self.motorized_rates), size=shape).astype(np.int64)
        non_motorized = rng.poisson(np.asarray(self.non_motorized_rates), size=shape).astype(np.int64)
        return motorized, non_motorized
