"""
NSGA-II over integer green-time genomes

A genome is the list of greens indexed by link. Variation operators keep every
gene on the allowed grid min_green_s + k * green_step_s <= max_green_s, so all
individuals are feasible and small grids can be enumerated exactly.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.models import IntersectionConfig, ObjectiveVector, QueueState
from app.optimizer.objectives import DEFAULT_OPTIONS, ObjectiveOptions, evaluate_greens, served_capacity

logger = logging.getLogger(__name__)

Genome = Tuple[int, ...]
ObjectiveLike = Union[ObjectiveVector, Sequence[float]]


class OptimizerParams(BaseModel):
    """
    NSGA-II hyperparameters

    mutation_prob defaults to 1/L when left unset.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    population_size: int = Field(default=60, ge=4)
    generations: int = Field(default=100, ge=1)
    crossover_prob: float = Field(default=0.9, ge=0.0, le=1.0)
    mutation_prob: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    tournament_size: int = Field(default=2, ge=2)
    rng_seed: int = Field(default=0, ge=0, lt=2 ** 64)
    green_step_s: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _even_population(self) -> "OptimizerParams":
        if self.population_size % 2:
            raise ValueError(f"population_size must be even, got {self.population_size}")
        return self

    def resolved_mutation_prob(self, num_links: int) -> float:
        return self.mutation_prob if self.mutation_prob is not None else 1.0 / num_links


@dataclass
class Individual:
    genome: Genome
    objectives: ObjectiveVector
    rank: int = 0
    crowding: float = 0.0
    feasible: bool = True

    def to_record(self) -> Dict[str, object]:
        return {"genome": list(self.genome), "f1": self.objectives.f1, "f2": self.objectives.f2}


@dataclass
class ParetoFront:
    """Rank-0 members of a run plus its convergence history."""
    members: List[Individual]
    reference_point: Tuple[float, float]
    hypervolume_history: List[float] = field(default_factory=list)
    evaluations: int = 0

    def __iter__(self) -> Iterator[Individual]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __getitem__(self, index: int) -> Individual:
        return self.members[index]

    def objective_set(self) -> set:
        return {m.objectives.as_tuple() for m in self.members}

    def to_records(self) -> List[Dict[str, object]]:
        return [m.to_record() for m in self.members]


class GenomeSpace:
    """Allowed green values for every gene of one intersection."""

    def __init__(self, cfg: IntersectionConfig, green_step_s: int = 1):
        self.num_links = cfg.num_links
        self.values = np.arange(cfg.min_green_s, cfg.max_green_s + 1, green_step_s, dtype=np.int64)
        self.low = int(self.values[0])
        self.high = int(self.values[-1])
        self.step = green_step_s

    def repair(self, genome: Sequence[int]) -> Genome:
        """Clamp every gene into bounds and snap it onto the grid."""
        repaired = []
        for gene in genome:
            gene = min(max(int(gene), self.low), self.high)
            k = int(math.floor((gene - self.low) / self.step + 0.5))
            repaired.append(min(self.low + k * self.step, self.high))
        return tuple(repaired)

    def random(self, rng: np.random.Generator) -> Genome:
        picks = rng.integers(len(self.values), size=self.num_links)
        return tuple(int(self.values[i]) for i in picks)

    def minimal(self) -> Genome:
        return (self.low,) * self.num_links

    def maximal(self) -> Genome:
        return (self.high,) * self.num_links


def _as_tuple(vector: ObjectiveLike) -> Tuple[float, ...]:
    if isinstance(vector, ObjectiveVector):
        return vector.as_tuple()
    return tuple(vector)


def dominates(a: ObjectiveLike, b: ObjectiveLike) -> bool:
    """True iff a is no worse than b in every objective and better in one."""
    a, b = _as_tuple(a), _as_tuple(b)
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def domination_matrix(objs: np.ndarray) -> np.ndarray:
    """dom[i, j] is True when individual i dominates individual j."""
    objs = np.asarray(objs)
    no_worse = (objs[:, None, :] <= objs[None, :, :]).all(axis=2)
    better = (objs[:, None, :] < objs[None, :, :]).any(axis=2)
    return no_worse & better


def non_dominated_fronts(objs: np.ndarray) -> List[List[int]]:
    """Partition row indices of an (n, 2) objective array into fronts."""
    objs = np.asarray(objs)
    if len(objs) == 0:
        return []
    dom = domination_matrix(objs)
    remaining = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(remaining == 0)
    while current.size:
        fronts.append(current.tolist())
        remaining[current] = -1
        remaining = remaining - dom[current].sum(axis=0)
        current = np.flatnonzero(remaining == 0)
    return fronts


def _objective_array(pop: Sequence[Individual]) -> np.ndarray:
    return np.array([m.objectives.as_tuple() for m in pop], dtype=np.float64).reshape(-1, 2)


def fast_non_dominated_sort(pop: List[Individual]) -> List[List[int]]:
    """
    Sort a population into non-dominated fronts

    Sets `rank` on every individual and returns the fronts as index lists.
    """
    fronts = non_dominated_fronts(_objective_array(pop))
    for rank, front in enumerate(fronts):
        for i in front:
            pop[i].rank = rank
    return fronts


def crowding_of(objs: np.ndarray) -> np.ndarray:
    """Crowding distances for the rows of one front's objective array."""
    objs = np.asarray(objs, dtype=np.float64)
    n = len(objs)
    if n <= 2:
        return np.full(n, math.inf)
    dist = np.zeros(n)
    for m in range(objs.shape[1]):
        order = np.argsort(objs[:, m], kind="stable")
        span = objs[order[-1], m] - objs[order[0], m]
        if span == 0:
            continue
        dist[order[0]] = math.inf
        dist[order[-1]] = math.inf
        dist[order[1:-1]] += (objs[order[2:], m] - objs[order[:-2], m]) / span
    return dist


def crowding_distance(front: List[Individual]) -> List[float]:
    """Crowding distance of each member of a single front; also stored on the members."""
    distances = crowding_of(_objective_array(front))
    for member, d in zip(front, distances):
        member.crowding = float(d)
    return [float(d) for d in distances]


def _tournament_index(pop: Sequence[Individual], k: int, rng: np.random.Generator) -> int:
    picks = rng.choice(len(pop), size=k, replace=k > len(pop))
    return min((int(i) for i in picks), key=lambda i: (pop[i].rank, -pop[i].crowding, i))


def tournament_select(pop: Sequence[Individual], k: int, rng: np.random.Generator) -> Individual:
    """Crowded-comparison tournament: lowest rank, then largest crowding, then lowest index."""
    return pop[_tournament_index(pop, k, rng)]


def crossover(
    a: Sequence[int],
    b: Sequence[int],
    rng: np.random.Generator,
    crossover_prob: float = 0.9
) -> Tuple[Genome, Genome]:
    """Uniform crossover: with probability crossover_prob each gene is swapped with probability 1/2."""
    if len(a) != len(b):
        raise ValueError(f"parents differ in length: {len(a)} vs {len(b)}")
    a, b = tuple(int(x) for x in a), tuple(int(y) for y in b)
    if rng.random() >= crossover_prob:
        return a, b
    swap = rng.random(len(a)) < 0.5
    child1 = tuple(y if s else x for x, y, s in zip(a, b, swap))
    child2 = tuple(x if s else y for x, y, s in zip(a, b, swap))
    return child1, child2


def mutate(
    genome: Sequence[int],
    rng: np.random.Generator,
    cfg: IntersectionConfig,
    mutation_prob: float,
    green_step_s: int = 1,
    space: Optional[GenomeSpace] = None
) -> Genome:
    """Redraw each gene uniformly from the allowed grid with probability mutation_prob."""
    space = space or GenomeSpace(cfg, green_step_s)
    redraw = rng.random(len(genome)) < mutation_prob
    mutated = [
        int(space.values[rng.integers(len(space.values))]) if r else int(gene)
        for gene, r in zip(genome, redraw)
    ]
    return space.repair(mutated)


def hypervolume_2d(points: np.ndarray, reference: Tuple[float, float]) -> float:
    """Area dominated by `points` and bounded by `reference` (both objectives minimized)."""
    pts = sorted(
        (float(x), float(y)) for x, y in np.asarray(points).reshape(-1, 2)
        if x < reference[0] and y < reference[1]
    )
    volume = 0.0
    ceiling = reference[1]
    for x, y in pts:
        if y < ceiling:
            volume += (reference[0] - x) * (ceiling - y)
            ceiling = y
    return volume


class _Archive:
    """Every non-dominated objective vector seen so far, with its smallest genome."""

    def __init__(self):
        self._best: Dict[Tuple[int, int], Genome] = {}
        self._array = np.empty((0, 2))

    def update(self, genomes: Sequence[Genome], objs: np.ndarray) -> None:
        changed = False
        for genome, vec in zip(genomes, objs):
            key = (int(vec[0]), int(vec[1]))
            if key in self._best:
                if genome < self._best[key]:
                    self._best[key] = genome
                continue
            if changed:
                self._array = np.array(list(self._best), dtype=np.float64).reshape(-1, 2)
                changed = False
            arr = self._array
            if len(arr) and ((arr <= vec).all(axis=1) & (arr < vec).any(axis=1)).any():
                continue
            for other in [k for k in self._best if dominates(key, k)]:
                del self._best[other]
            self._best[key] = genome
            changed = True
        self._array = np.array(list(self._best), dtype=np.float64).reshape(-1, 2)

    @property
    def objectives(self) -> np.ndarray:
        return self._array

    def members(self) -> List[Individual]:
        ordered = sorted(self._best.items(), key=lambda kv: (kv[0], kv[1]))
        members = [Individual(genome=g, objectives=ObjectiveVector(*k)) for k, g in ordered]
        crowding_distance(members)
        return members


def _seed_genomes(queue: QueueState, cfg: IntersectionConfig, space: GenomeSpace) -> List[Genome]:
    """Bound genomes plus the genome that would just clear every observed queue."""
    clearing = []
    for link in range(cfg.num_links):
        need_m = math.ceil(queue.motorized[link] / cfg.sat_flow_motorized)
        need_nm = math.ceil(queue.non_motorized[link] / cfg.sat_flow_non_motorized)
        green = max(need_m, need_nm)
        while served_capacity(cfg.sat_flow_motorized, green) < queue.motorized[link]:
            green += 1
        while served_capacity(cfg.sat_flow_non_motorized, green) < queue.non_motorized[link]:
            green += 1
        clearing.append(green)
    seeds = [space.minimal(), space.maximal(), space.repair(clearing)]
    unique = []
    for genome in seeds:
        if genome not in unique:
            unique.append(genome)
    return unique


def run(
    queue: QueueState,
    cfg: IntersectionConfig,
    params: Optional[OptimizerParams] = None,
    options: ObjectiveOptions = DEFAULT_OPTIONS,
    guidance_pad_s: int = 0
) -> ParetoFront:
    """
    Evolve green-time genomes for one observed queue

    Args:
        queue: Observed waiting vehicles per link
        cfg: Intersection config (bounds, inter-green, saturation rates)
        params: NSGA-II hyperparameters (defaults when omitted)
        options: Objective variants
        guidance_pad_s: Padding the resulting plans will carry

    Returns:
        ParetoFront of every non-dominated objective vector found, sorted by (f1, f2)

    Raises:
        DimensionMismatchError: queue width differs from cfg.num_links
    """
    params = params or OptimizerParams()
    queue.require_links(cfg.num_links)

    rng = np.random.default_rng(params.rng_seed)
    space = GenomeSpace(cfg, params.green_step_s)
    size = params.population_size
    mutation_prob = params.resolved_mutation_prob(cfg.num_links)
    cache: Dict[Genome, Tuple[int, int]] = {}

    def objectives_of(genomes: List[Genome]) -> np.ndarray:
        fresh = [g for g in dict.fromkeys(genomes) if g not in cache]
        if fresh:
            values = evaluate_greens(np.array(fresh), queue, cfg, guidance_pad_s, options)
            for genome, (o1, o2) in zip(fresh, values):
                cache[genome] = (int(o1), int(o2))
        return np.array([cache[g] for g in genomes], dtype=np.float64).reshape(-1, 2)

    genomes = _seed_genomes(queue, cfg, space)[:size]
    while len(genomes) < size:
        genomes.append(space.random(rng))
    objs = objectives_of(genomes)

    reference = (
        float(queue.total_vehicles + 1),
        float(objectives_of([space.maximal()])[0, 1] + 1),
    )
    archive = _Archive()
    archive.update(genomes, objs)

    population = [Individual(g, ObjectiveVector(int(o[0]), int(o[1]))) for g, o in zip(genomes, objs)]
    for front in fast_non_dominated_sort(population):
        crowding_distance([population[i] for i in front])
    history = [hypervolume_2d(archive.objectives, reference)]

    for generation in range(params.generations):
        offspring: List[Genome] = []
        while len(offspring) < size:
            p1 = population[_tournament_index(population, params.tournament_size, rng)]
            p2 = population[_tournament_index(population, params.tournament_size, rng)]
            c1, c2 = crossover(p1.genome, p2.genome, rng, params.crossover_prob)
            offspring.append(mutate(c1, rng, cfg, mutation_prob, space=space))
            offspring.append(mutate(c2, rng, cfg, mutation_prob, space=space))
        offspring = offspring[:size]

        off_objs = objectives_of(offspring)
        combined = population + [
            Individual(g, ObjectiveVector(int(o[0]), int(o[1]))) for g, o in zip(offspring, off_objs)
        ]
        combined_objs = _objective_array(combined)

        survivors: List[int] = []
        fronts = non_dominated_fronts(combined_objs)
        for rank, front in enumerate(fronts):
            distances = crowding_of(combined_objs[front])
            for i, d in zip(front, distances):
                combined[i].rank = rank
                combined[i].crowding = float(d)
            if len(survivors) + len(front) <= size:
                survivors.extend(front)
            else:
                by_crowding = sorted(front, key=lambda i: (-combined[i].crowding, i))
                survivors.extend(by_crowding[:size - len(survivors)])
            if len(survivors) == size:
                break
        population = [combined[i] for i in survivors]

        first = fronts[0]
        archive.update([combined[i].genome for i in first], combined_objs[first])
        history.append(hypervolume_2d(archive.objectives, reference))
        logger.debug(
            f"generation {generation + 1}/{params.generations}: "
            f"{len(first)} rank-0, archive hv={history[-1]:.1f}"
        )

    members = archive.members()
    logger.debug(f"NSGA-II finished: {len(members)} front members, {len(cache)} distinct genomes")
    return ParetoFront(
        members=members,
        reference_point=reference,
        hypervolume_history=history,
        evaluations=len(cache),
    )
