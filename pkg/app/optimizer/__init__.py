"""
Signal-timing optimizer: objectives, NSGA-II and operating-point selection
"""

from .objectives import (
    ObjectiveOptions,
    RedTimeVector,
    discharge,
    evaluate,
    evaluate_greens,
    f1,
    f2,
    plan_from_genome,
    red_times,
)
from .nsga2 import (
    GenomeSpace,
    Individual,
    OptimizerParams,
    ParetoFront,
    crossover,
    crowding_distance,
    dominates,
    fast_non_dominated_sort,
    hypervolume_2d,
    mutate,
    run,
    tournament_select,
)
from .selection import SelectionPolicy, select_individual, select_operating_point

__all__ = [
    'ObjectiveOptions', 'RedTimeVector', 'discharge', 'evaluate', 'evaluate_greens',
    'f1', 'f2', 'plan_from_genome', 'red_times',
    'GenomeSpace', 'Individual', 'OptimizerParams', 'ParetoFront', 'crossover',
    'crowding_distance', 'dominates', 'fast_non_dominated_sort', 'hypervolume_2d',
    'mutate', 'run', 'tournament_select',
    'SelectionPolicy', 'select_individual', 'select_operating_point',
]
