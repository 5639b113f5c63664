"""
Simulation scenario files
"""

from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveInt

from app.core.config import load_model, parse_model, read_json
from app.core.errors import ConfigError, ConfigValidationError
from app.core.models import IntersectionConfig
from app.optimizer.nsga2 import OptimizerParams
from app.optimizer.objectives import ObjectiveOptions
from app.optimizer.selection import SelectionPolicy
from app.simulator.controllers import AdaptiveController, Controller, FixedTimeController
from app.simulator.demand import ArrivalModel
from app.simulator.engine import SimOptions
from app.utils import PathLike


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class DemandSpec(_Frozen):
    motorized_rates: Tuple[NonNegativeFloat, ...]
    non_motorized_rates: Tuple[NonNegativeFloat, ...]


class FixedControllerSpec(_Frozen):
    type: Literal["fixed"] = "fixed"
    name: str = "fixed"
    greens: Tuple[int, ...]
    order: Optional[Tuple[int, ...]] = None


class AdaptiveControllerSpec(_Frozen):
    type: Literal["adaptive"] = "adaptive"
    name: str = "adaptive"
    optimizer: OptimizerParams = OptimizerParams()
    policy: SelectionPolicy = SelectionPolicy.KNEE
    weights: Tuple[float, float] = (0.5, 0.5)
    objective: ObjectiveOptions = ObjectiveOptions()


ControllerSpec = Annotated[Union[FixedControllerSpec, AdaptiveControllerSpec], Field(discriminator="type")]


class Scenario(_Frozen):
    """
    Everything one simulate or compare run needs

    `intersection` is inline or a path relative to the scenario file.
    """
    intersection: Union[IntersectionConfig, str]
    demand: DemandSpec
    controllers: List[ControllerSpec] = Field(min_length=1)
    horizon_s: PositiveInt
    seeds: List[int] = Field(default=[0], min_length=1)
    options: SimOptions = SimOptions()
    baseline: Optional[str] = None

    @property
    def intersection_config(self) -> IntersectionConfig:
        if not isinstance(self.intersection, IntersectionConfig):
            raise ValueError("intersection path not resolved; use load_scenario")
        return self.intersection

    def arrival_model(self, seed: Optional[int] = None) -> ArrivalModel:
        return ArrivalModel(
            motorized_rates=self.demand.motorized_rates,
            non_motorized_rates=self.demand.non_motorized_rates,
            rng_seed=self.seeds[0] if seed is None else seed,
        )

    def controller_spec(self, name: str) -> ControllerSpec:
        for spec in self.controllers:
            if spec.name == name:
                return spec
        raise ConfigError(f"no controller named {name!r}; have {[c.name for c in self.controllers]}")


def scenario_problems(scenario: Scenario, cfg: IntersectionConfig) -> List[str]:
    """Cross-field checks that need the resolved intersection."""
    num_links = cfg.num_links
    problems = []
    for label, rates in (("motorized_rates", scenario.demand.motorized_rates),
                         ("non_motorized_rates", scenario.demand.non_motorized_rates)):
        if len(rates) != num_links:
            problems.append(f"demand.{label} has {len(rates)} entries, intersection has {num_links} links")
    names = [c.name for c in scenario.controllers]
    for name in sorted(set(names)):
        if names.count(name) > 1:
            problems.append(f"controller name {name!r} used more than once")
    for spec in scenario.controllers:
        if isinstance(spec, FixedControllerSpec) and len(spec.greens) != num_links:
            problems.append(f"controller {spec.name!r} has {len(spec.greens)} greens for {num_links} links")
    for event in scenario.options.emergency_events:
        if event.link >= num_links:
            problems.append(f"emergency at t={event.time_s} on link {event.link} outside [0, {num_links})")
    if scenario.baseline is not None and scenario.baseline not in names:
        problems.append(f"baseline {scenario.baseline!r} is not a controller name")
    if scenario.options.initial_queue is not None and scenario.options.initial_queue.num_links != num_links:
        problems.append(f"options.initial_queue has {scenario.options.initial_queue.num_links} links, "
                        f"intersection has {num_links}")
    return problems


def load_scenario(path: PathLike) -> Scenario:
    """
    Load and cross-check a scenario file

    Raises:
        ConfigParseError: unreadable or malformed JSON
        ConfigValidationError: any failed invariant, one message each
    """
    path = Path(path)
    scenario = parse_model(read_json(path), Scenario, str(path))
    cfg = scenario.intersection
    if isinstance(cfg, str):
        cfg = load_model(path.parent / cfg, IntersectionConfig)
    problems = scenario_problems(scenario, cfg)
    if problems:
        raise ConfigValidationError(str(path), problems)
    return scenario.model_copy(update={"intersection": cfg})


def build_controller(spec: ControllerSpec, cfg: IntersectionConfig, guidance_pad_s: int = 0) -> Controller:
    if isinstance(spec, FixedControllerSpec):
        return FixedTimeController(spec.greens, cfg, spec.order, guidance_pad_s, name=spec.name)
    return AdaptiveController(
        cfg,
        params=spec.optimizer,
        policy=spec.policy,
        weights=spec.weights,
        guidance_pad_s=guidance_pad_s,
        options=spec.objective,
        name=spec.name,
    )


def build_controllers(scenario: Scenario, guidance_pad_s: Optional[int] = None) -> List[Controller]:
    pad = scenario.options.guidance_pad_s if guidance_pad_s is None else guidance_pad_s
    cfg = scenario.intersection_config
    return [build_controller(spec, cfg, pad) for spec in scenario.controllers]
