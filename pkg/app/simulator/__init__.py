"""
Intersection microsimulator: demand, controllers, engine and paired comparisons
"""

from .demand import ArrivalModel
from .controllers import AdaptiveController, Controller, FixedTimeController
from .engine import (
    Blackout,
    EmergencyEvent,
    SimMetrics,
    SimOptions,
    apply_emergency_reorder,
    simulate,
)
from .compare import ComparisonReport, compare_controllers, percent_delta
from .scenario import Scenario, build_controller, build_controllers, load_scenario

__all__ = [
    'ArrivalModel',
    'AdaptiveController', 'Controller', 'FixedTimeController',
    'Blackout', 'EmergencyEvent', 'SimMetrics', 'SimOptions', 'apply_emergency_reorder', 'simulate',
    'ComparisonReport', 'compare_controllers', 'percent_delta',
    'Scenario', 'build_controller', 'build_controllers', 'load_scenario',
]
