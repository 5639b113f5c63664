"""
Core domain model: intersection config, queues, signal plans, detections
"""

from .config import load_intersection_config, load_queue_state, load_signal_plan
from .errors import (
    SignalEngineError,
    ConfigError,
    ConfigParseError,
    ConfigValidationError,
    DimensionMismatchError,
    InvalidPlanError,
)
from .models import (
    LinkId,
    IntersectionConfig,
    QueueState,
    Phase,
    SignalPlan,
    DetectionRecord,
    ObjectiveVector,
)
from .validation import validate_plan

__all__ = [
    'load_intersection_config', 'load_queue_state', 'load_signal_plan',
    'SignalEngineError', 'ConfigError', 'ConfigParseError', 'ConfigValidationError',
    'DimensionMismatchError', 'InvalidPlanError',
    'LinkId', 'IntersectionConfig', 'QueueState', 'Phase', 'SignalPlan',
    'DetectionRecord', 'ObjectiveVector', 'validate_plan',
]
