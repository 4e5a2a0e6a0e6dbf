"""Binary feature-subset search with the firefly and elephant search algorithms.

Both optimizers move agents through the unit hypercube ``[0, 1]^d``.  A
position is read as a feature mask by thresholding at 0.5.  Every random draw
made on behalf of agent ``i`` during iteration ``t`` comes from a generator
seeded with ``(seed, i, t, purpose)``, so a run does not depend on the order in
which fitness values are computed.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import MaskError, ObjectiveError, StateError

# purpose tags for per-agent random substreams
_MOVE, _MUTATE, _PRUNE, _REBIRTH, _INIT = range(5)

MALE, FEMALE = "male", "female"


@dataclass
class Agent:
    position: np.ndarray
    fitness: float | None = None
    mask: np.ndarray | None = None
    sex: str | None = None
    clan: int = 0
    age: int = 0

    def copy(self) -> "Agent":
        return Agent(self.position.copy(), self.fitness,
                     None if self.mask is None else self.mask.copy(),
                     self.sex, self.clan, self.age)


@dataclass(frozen=True)
class FireflyParams:
    population: int = 20
    iterations: int = 20
    gamma_absorption: float = 0.001
    beta_min: float = 0.33
    beta_zero: float = 1.0
    alpha_step: float = 0.5
    chaotic_coefficient: float = 4.0
    mutation_prob: float = 0.01
    report_frequency: int = 20
    seed: int = 1

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.iterations < 0 or self.report_frequency < 1:
            raise ValueError("iterations must be >= 0 and report_frequency >= 1")
        if not 0.0 <= self.beta_min <= self.beta_zero:
            raise ValueError("need 0 <= beta_min <= beta_zero")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must lie in [0, 1]")


@dataclass(frozen=True)
class ElephantParams:
    """Elephant search settings.

    Visual radii left as ``None`` scale with the dimension: ``0.1*sqrt(d)`` for
    females and ``0.3*sqrt(d)`` for males.
    """

    population: int = 20
    iterations: int = 20
    n_clans: int = 2
    male_fraction: float = 0.2
    female_visual_radius: float | None = None
    male_visual_radius: float | None = None
    max_age: int = 10
    chaotic_coefficient: float = 4.0
    mutation_prob: float = 0.01
    report_frequency: int = 20
    seed: int = 1

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.iterations < 0 or self.report_frequency < 1 or self.max_age < 1:
            raise ValueError("iterations >= 0, report_frequency >= 1 and max_age >= 1 required")
        if not 0.0 <= self.male_fraction < 1.0:
            raise ValueError("male_fraction must lie in [0, 1)")
        if self.n_clans < 1 or self.n_clans > self.n_females:
            raise ValueError(f"n_clans must be between 1 and the female count ({self.n_females})")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must lie in [0, 1]")
        if (self.female_visual_radius is not None and self.male_visual_radius is not None
                and self.male_visual_radius <= self.female_visual_radius):
            raise ValueError("male_visual_radius must exceed female_visual_radius")

    @property
    def n_males(self) -> int:
        return int(round(self.male_fraction * self.population))

    @property
    def n_females(self) -> int:
        return self.population - self.n_males

    def radii(self, d: int) -> tuple[float, float]:
        f = self.female_visual_radius
        m = self.male_visual_radius
        f = 0.1 * math.sqrt(d) if f is None else f
        m = 0.3 * math.sqrt(d) if m is None else m
        if m <= f:
            raise ValueError("male_visual_radius must exceed female_visual_radius")
        return f, m


@dataclass
class SearchResult:
    best_mask: np.ndarray
    best_fitness: float
    history: list
    evaluations: int
    trace: list = field(default_factory=list)

    @property
    def n_selected(self) -> int:
        return int(self.best_mask.sum())


def substream(seed: int, agent: int, iteration: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFF, agent, iteration, purpose])


def logistic_map(x: float, r: float = 4.0) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"logistic map is defined on [0, 1], got {x}")
    return r * x * (1.0 - x)


_FIXED = (0.0, 0.25, 0.5, 0.75, 1.0)


def _draw_seed_value(rng) -> float:
    x = rng.uniform(0.0, 1.0)
    while x in _FIXED:
        x = rng.uniform(0.0, 1.0)
    return x


def logistic_stream(x0: float, length: int, r: float = 4.0) -> np.ndarray:
    """``length`` successive logistic-map iterates starting after ``x0``."""
    out = np.empty(length)
    x = x0
    for i in range(length):
        x = r * x * (1.0 - x)
        # rounding can land the orbit on the absorbing points 0 or 3/4
        if x <= 0.0 or x == 0.75:
            x = 0.1234567
        out[i] = min(x, 1.0)
    return out


def chaotic_init(pop: int, d: int, r: float = 4.0, seed: int = 1) -> list[Agent]:
    rng = np.random.default_rng(seed)
    return [Agent(logistic_stream(_draw_seed_value(rng), d, r)) for _ in range(pop)]


def binarize(position, threshold: float = 0.5) -> np.ndarray:
    position = np.asarray(position)
    mask = position > threshold
    if not mask.any():
        mask[int(np.argmax(position))] = True
    return mask


def bit_flip_mutate(mask, p: float, rng) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    out = mask ^ (rng.random(mask.size) < p)
    if not out.any():
        out[rng.integers(mask.size)] = True
    return out


def sync_position(position: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Mirror coordinates about 0.5 until ``binarize(position)`` equals ``mask``."""
    pos = position.copy()
    wrong = (pos > 0.5) != mask
    pos[wrong] = 1.0 - pos[wrong]
    stuck = mask & (pos <= 0.5)
    pos[stuck] = np.nextafter(0.5, 1.0)
    return pos


def attractiveness(r: float, params: FireflyParams) -> float:
    b0, bmin = params.beta_zero, params.beta_min
    return bmin + (b0 - bmin) * math.exp(-params.gamma_absorption * r * r)


class Evaluator:
    """Scores masks with an objective, optionally on a thread pool.

    ``evaluations`` counts every request, cached or not, so it is the same for
    any number of workers.
    """

    def __init__(self, objective, jobs: int = 1):
        self.objective = objective
        self.jobs = max(1, int(jobs))
        self.evaluations = 0
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(self.jobs) if self.jobs > 1 else None

    def _one(self, mask):
        try:
            return float(self.objective(mask))
        except Exception as exc:
            raise ObjectiveError(f"objective failed on mask with {int(mask.sum())} features: {exc}",
                                 mask=mask.copy()) from exc

    def __call__(self, masks) -> list[float]:
        masks = list(masks)
        with self._lock:
            self.evaluations += len(masks)
        if self._pool is None or len(masks) < 2:
            return [self._one(m) for m in masks]
        return list(self._pool.map(self._one, masks))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


def _as_evaluator(objective) -> Evaluator:
    return objective if isinstance(objective, Evaluator) else Evaluator(objective)


def _finish(agents, positions, mutation_prob, seed, iteration, evaluator, indices=None):
    """Clamp, binarize, mutate and evaluate ``positions`` for the given agents."""
    indices = range(len(agents)) if indices is None else indices
    for i in indices:
        pos = np.clip(positions[i], 0.0, 1.0)
        mask = binarize(pos)
        if mutation_prob > 0:
            mask = bit_flip_mutate(mask, mutation_prob, substream(seed, i, iteration, _MUTATE))
            pos = sync_position(pos, mask)
        agents[i].position = pos
        agents[i].mask = mask
    scores = evaluator([agents[i].mask for i in indices])
    for i, s in zip(indices, scores):
        agents[i].fitness = s


def _require_evaluated(pop):
    if not pop or any(a.fitness is None or a.mask is None for a in pop):
        raise StateError("every agent must be evaluated before stepping")


def firefly_step(pop: list[Agent], params: FireflyParams, objective, iteration: int = 1) -> list[Agent]:
    """Move every firefly toward the brightest strictly brighter one.

    The population is read as a snapshot, so the result does not depend on the
    order agents are processed in.  The brightest firefly only takes the
    random step.
    """
    _require_evaluated(pop)
    evaluator = _as_evaluator(objective)
    xs = np.array([a.position for a in pop])
    fit = np.array([a.fitness for a in pop])
    order = np.argsort(-fit, kind="stable")
    new = [a.copy() for a in pop]
    positions = []
    for i, x in enumerate(xs):
        rng = substream(params.seed, i, iteration, _MOVE)
        noise = params.alpha_step * (rng.random(x.size) - 0.5)
        j = order[0] if order[0] != i else (order[1] if len(order) > 1 else i)
        if fit[j] > fit[i]:
            r = float(np.linalg.norm(xs[j] - x))
            positions.append(x + attractiveness(r, params) * (xs[j] - x) + noise)
        else:
            positions.append(x + noise)
    _finish(new, positions, params.mutation_prob, params.seed, iteration, evaluator)
    return new


def assign_roles(pop: list[Agent], params: ElephantParams) -> list[Agent]:
    """Mark the last ``n_males`` agents male; females are dealt round-robin into clans.

    Starting ages are staggered over ``[0, max_age]`` so the herd does not die
    out all at once.
    """
    n_f = params.n_females
    for i, a in enumerate(pop):
        if i < n_f:
            a.sex, a.clan = FEMALE, i % params.n_clans
        else:
            a.sex, a.clan = MALE, (i - n_f) % params.n_clans
        a.age = i % (params.max_age + 1)
    return pop


def female_moves(xs, fit, sexes, clans, pull, noise):
    """Matriarch-led moves: ``x + pull*(x_matriarch - x) + noise``.

    ``pull`` is one scalar per agent, ``noise`` one row per agent.  The
    matriarch (best female of a clan, lowest index on ties) only takes her
    noise.  Males are returned unchanged.
    """
    out = xs.copy()
    for c in np.unique(clans):
        members = [i for i in range(len(xs)) if clans[i] == c and sexes[i] == FEMALE]
        if not members:
            continue
        best = max(members, key=lambda i: (fit[i], -i))
        for i in members:
            if i == best:
                out[i] = xs[i] + noise[i]
            else:
                out[i] = xs[i] + pull[i] * (xs[best] - xs[i]) + noise[i]
    return out


def visual_range_losers(xs, fit, radii) -> set[int]:
    """Agents that lose a visual-range contest against a fitter neighbour.

    A pair competes when its distance is within the smaller of the two radii;
    equal fitness keeps the lower index.
    """
    losers = set()
    n = len(xs)
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(xs[i] - xs[j]) <= min(radii[i], radii[j]):
                losers.add(j if fit[i] >= fit[j] else i)
    return losers


def elephant_step(pop: list[Agent], params: ElephantParams, objective, iteration: int = 1) -> list[Agent]:
    _require_evaluated(pop)
    if any(a.sex not in (MALE, FEMALE) for a in pop):
        raise StateError("elephant_step needs sex and clan assigned (see assign_roles)")
    evaluator = _as_evaluator(objective)
    seed = params.seed
    n = len(pop)
    d = pop[0].position.size
    r_f, r_m = params.radii(d)
    sigma = r_f / math.sqrt(d)

    xs = np.array([a.position for a in pop])
    fit = np.array([a.fitness for a in pop])
    sexes = [a.sex for a in pop]
    clans = [a.clan for a in pop]
    rngs = [substream(seed, i, iteration, _MOVE) for i in range(n)]
    pull = np.array([g.random() for g in rngs])
    noise = np.array([g.normal(0.0, sigma, d) for g in rngs])

    moved = female_moves(xs, fit, sexes, clans, pull, noise)
    for i in range(n):
        if sexes[i] == MALE:
            moved[i] = rngs[i].random(d)

    new = [a.copy() for a in pop]
    _finish(new, moved, params.mutation_prob, seed, iteration, evaluator)

    radii = [r_m if s == MALE else r_f for s in sexes]
    cur = np.array([a.position for a in new])
    losers = sorted(visual_range_losers(cur, [a.fitness for a in new], radii))
    if losers:
        relocated = {i: substream(seed, i, iteration, _PRUNE).random(d) for i in losers}
        _finish(new, relocated, params.mutation_prob, seed, iteration, evaluator, losers)

    dead = []
    for i, a in enumerate(new):
        a.age += 1
        if a.age > params.max_age:
            dead.append(i)
    if dead:
        born = {}
        for i in dead:
            rng = substream(seed, i, iteration, _REBIRTH)
            born[i] = logistic_stream(_draw_seed_value(rng), d, params.chaotic_coefficient)
            new[i].age = 0
        _finish(new, born, params.mutation_prob, seed, iteration, evaluator, dead)
    return new


def _archive_update(archive, pop):
    best = max(range(len(pop)), key=lambda i: (pop[i].fitness, -i))
    if archive is None or pop[best].fitness > archive[0]:
        return pop[best].fitness, pop[best].mask.copy()
    return archive


def run_search(algorithm: str, params, objective, d: int, jobs: int = 1, callback=None) -> SearchResult:
    """Chaotic initialisation followed by ``params.iterations`` steps.

    ``history`` holds ``(iteration, best_fitness)`` at iteration 0, every
    ``report_frequency`` iterations and at the end; ``trace`` holds
    ``(iteration, best_fitness, popcount)`` for every iteration.  ``callback``
    is called as ``callback(iteration, population)`` after each generation.
    """
    if d < 1:
        raise MaskError("need at least one feature")
    if algorithm not in ("firefly", "elephant"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    step = firefly_step if algorithm == "firefly" else elephant_step
    evaluator = Evaluator(objective, jobs)
    try:
        pop = chaotic_init(params.population, d, params.chaotic_coefficient, params.seed)
        if algorithm == "elephant":
            assign_roles(pop, params)
        _finish(pop, [a.position for a in pop], 0.0, params.seed, 0, evaluator)
        archive = _archive_update(None, pop)
        trace = [(0, archive[0], int(archive[1].sum()))]
        history = [(0, archive[0])]
        if callback is not None:
            callback(0, pop)
        for t in range(1, params.iterations + 1):
            pop = step(pop, params, evaluator, t)
            archive = _archive_update(archive, pop)
            trace.append((t, archive[0], int(archive[1].sum())))
            if t % params.report_frequency == 0 or t == params.iterations:
                history.append((t, archive[0]))
            if callback is not None:
                callback(t, pop)
    finally:
        evaluator.close()
    return SearchResult(archive[1], float(archive[0]), history, evaluator.evaluations, trace)
