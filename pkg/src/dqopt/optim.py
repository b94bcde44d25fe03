"""Bit-string genetic algorithm and baseline optimizers.

The GA operates on genomes built by concatenating per-parameter genes:
floats are linearly quantised over [lower, upper] with a fixed bit
depth, integers are coded exactly.  Selection is roulette-wheel on
weights (2 - f), which is positive and increasing in quality because the
experiment fitness f = 1 - efficiency lies in [0, 2].  One-point
crossover, independent bit-flip mutation and single-individual elitism
complete the loop.  Baselines: uniform random sampling, Nelder-Mead
simplex and BFGS with central finite differences (both via scipy,
wrapped for budget accounting and best-so-far tracking).

Runs are deterministic given a seed; duplicate genomes within a run are
served from a memo so repeated spin simulations are avoided, although
every per-individual evaluation still counts against the budget (only
the elite carried between generations is exempt).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import minimize


@dataclass(frozen=True)
class GeneSpec:
    """Decimal bounds and bit depth of one encoded parameter."""

    name: str
    lower: float
    upper: float
    bits: int = 16
    integer: bool = False

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"gene {self.name}: need lower < upper")
        if self.bits < 1:
            raise ValueError(f"gene {self.name}: bit depth must be >= 1")
        if self.integer:
            span = int(self.upper) - int(self.lower) + 1
            if 2 ** self.bits < span:
                raise ValueError(
                    f"gene {self.name}: {self.bits} bits cannot cover {span} integers")


def integer_gene(name: str, lower: int, upper: int) -> GeneSpec:
    """Integer gene with the smallest exactly-covering bit depth."""
    span = upper - lower + 1
    return GeneSpec(name, lower, upper, bits=max(1, math.ceil(math.log2(span))),
                    integer=True)


def encode(value: float, spec: GeneSpec) -> np.ndarray:
    """Encode a value into its gene bits (most significant bit first)."""
    if not spec.lower <= value <= spec.upper:
        raise ValueError(
            f"gene {spec.name}: value {value} outside [{spec.lower}, {spec.upper}]")
    if spec.integer:
        code = int(value) - int(spec.lower)
    else:
        code = round((value - spec.lower) / (spec.upper - spec.lower)
                     * (2 ** spec.bits - 1))
    bits = np.zeros(spec.bits, dtype=np.uint8)
    for i in range(spec.bits):
        bits[spec.bits - 1 - i] = (code >> i) & 1
    return bits


def decode(bits: np.ndarray, spec: GeneSpec) -> float:
    """Decode gene bits; total (every bit pattern maps into bounds)."""
    if len(bits) != spec.bits:
        raise ValueError(f"gene {spec.name}: expected {spec.bits} bits, got {len(bits)}")
    code = 0
    for b in bits:
        code = (code << 1) | int(b)
    if spec.integer:
        span = int(spec.upper) - int(spec.lower) + 1
        return float(int(spec.lower) + code % span)
    return spec.lower + code * (spec.upper - spec.lower) / (2 ** spec.bits - 1)


def genome_length(specs) -> int:
    return sum(s.bits for s in specs)


def decode_genome(bits: np.ndarray, specs) -> np.ndarray:
    """Decode a concatenated genome into the parameter vector."""
    values = np.empty(len(specs))
    pos = 0
    for i, spec in enumerate(specs):
        values[i] = decode(bits[pos:pos + spec.bits], spec)
        pos += spec.bits
    return values


def encode_genome(values, specs) -> np.ndarray:
    return np.concatenate([encode(v, s) for v, s in zip(values, specs)])


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 50
    generations: int = 30
    eval_budget: int = 1500
    crossover_prob: float = 0.6
    mutation_prob: float = 0.01
    elite_count: int = 1
    rng_seed: int | None = None

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must be in [0, 1]")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must be in [0, 1]")
        if self.eval_budget < self.population_size:
            raise ValueError("eval_budget must cover the initial population")
        if self.elite_count < 0 or self.elite_count >= self.population_size:
            raise ValueError("elite_count must be in [0, population_size)")


@dataclass
class RunRecord:
    """History and best result of one optimizer run."""

    algorithm: str
    seed: int | None
    evaluations: int
    best_fitness: float
    best_values: list
    gen_best: list
    gen_mean: list
    best_bits: str | None = None
    completed: bool = True

    @property
    def best_efficiency(self) -> float:
        return 1.0 - self.best_fitness

    def to_dict(self) -> dict:
        d = asdict(self)
        d["best_efficiency"] = self.best_efficiency
        return d


class ObjectiveError(RuntimeError):
    """Raised internally to abort a run on objective failure."""


def roulette_select(fitnesses, rng, size=None):
    """Fitness-proportionate selection index (or indices) on weights 2 - f.

    Smaller fitness is better, so the weight is the headroom below the
    worst possible value 2; all-zero weights fall back to uniform.
    """
    f = np.asarray(fitnesses, dtype=float)
    if f.size == 0:
        raise ValueError("population must be non-empty")
    w = np.clip(2.0 - f, 0.0, None)
    total = w.sum()
    p = np.full(f.size, 1.0 / f.size) if total <= 0.0 else w / total
    idx = rng.choice(f.size, size=size, p=p)
    return idx if size is not None else int(idx)


def one_point_crossover(parent_a: np.ndarray, parent_b: np.ndarray, rng):
    """Swap suffixes at a uniform cut position in [1, L-1]."""
    if len(parent_a) != len(parent_b):
        raise ValueError("parents must have equal genome lengths")
    cut = int(rng.integers(1, len(parent_a)))
    child_a = np.concatenate([parent_a[:cut], parent_b[cut:]])
    child_b = np.concatenate([parent_b[:cut], parent_a[cut:]])
    return child_a, child_b


def flip_mutate(bits: np.ndarray, p_m: float, rng) -> np.ndarray:
    """Toggle each bit independently with probability p_m."""
    if not 0.0 <= p_m <= 1.0:
        raise ValueError("mutation probability must be in [0, 1]")
    flips = rng.random(len(bits)) < p_m
    return np.where(flips, 1 - bits, bits).astype(np.uint8)


class _Memo:
    """Genome-bits -> fitness cache shared across evaluations."""

    def __init__(self, objective, specs):
        self._objective = objective
        self._specs = list(specs)
        self._table: dict[bytes, float] = {}

    def fitness(self, bits: np.ndarray) -> float:
        key = bits.tobytes()
        f = self._table.get(key)
        if f is None:
            f = float(self._objective(decode_genome(bits, self._specs)))
            self._table[key] = f
        return f


def ga_run(cfg: GAConfig, specs, objective) -> RunRecord:
    """Run the genetic algorithm; deterministic for a given rng_seed.

    ``objective`` maps a decoded parameter vector to a fitness in [0, 2]
    (smaller is better).  Stops on the generation count or when the next
    generation would exceed the evaluation budget.  The best individual
    is carried unchanged into the next generation without re-evaluation.
    """
    specs = list(specs)
    rng = np.random.default_rng(cfg.rng_seed)
    length = genome_length(specs)
    n_pop = cfg.population_size
    memo = _Memo(objective, specs)

    pop = rng.integers(0, 2, size=(n_pop, length), dtype=np.uint8)
    fitness = np.empty(n_pop)
    gen_best, gen_mean = [], []
    evaluations = 0
    completed = True

    def finish():
        return RunRecord(
            algorithm="ga", seed=cfg.rng_seed, evaluations=evaluations,
            best_fitness=float(best_fit), best_values=list(best_values),
            gen_best=gen_best, gen_mean=gen_mean,
            best_bits="".join(str(int(b)) for b in best_bits),
            completed=completed,
        )

    best_fit = math.inf
    best_bits = pop[0]
    best_values = decode_genome(pop[0], specs)
    try:
        for i in range(n_pop):
            fitness[i] = memo.fitness(pop[i])
            evaluations += 1
    except Exception:
        completed = False
        if evaluations:
            done = fitness[:evaluations]
            gen_best.append(float(np.min(done)))
            gen_mean.append(float(np.mean(done)))
            k = int(np.argmin(done))
            best_fit, best_bits = float(done[k]), pop[k]
            best_values = decode_genome(pop[k], specs)
        return finish()

    for generation in range(cfg.generations):
        k = int(np.argmin(fitness))
        if fitness[k] < best_fit:
            best_fit, best_bits = float(fitness[k]), pop[k].copy()
            best_values = decode_genome(pop[k], specs)
        gen_best.append(float(fitness[k]))
        gen_mean.append(float(np.mean(fitness)))

        n_children = n_pop - cfg.elite_count
        if generation == cfg.generations - 1 or evaluations + n_children > cfg.eval_budget:
            break

        parent_idx = roulette_select(fitness, rng, size=n_children)
        children = []
        for i in range(0, n_children - 1, 2):
            pa, pb = pop[parent_idx[i]], pop[parent_idx[i + 1]]
            if rng.random() < cfg.crossover_prob:
                ca, cb = one_point_crossover(pa, pb, rng)
            else:
                ca, cb = pa.copy(), pb.copy()
            children.extend([ca, cb])
        if len(children) < n_children:  # odd leftover copied unchanged
            children.append(pop[parent_idx[n_children - 1]].copy())
        children = [flip_mutate(c, cfg.mutation_prob, rng) for c in children]

        elite = [pop[i].copy() for i in
                 np.argsort(fitness, kind="stable")[:cfg.elite_count]]
        elite_fit = np.sort(fitness, kind="stable")[:cfg.elite_count]
        pop = np.array(children + elite, dtype=np.uint8)
        fitness = np.empty(n_pop)
        try:
            for i in range(n_children):
                fitness[i] = memo.fitness(pop[i])
                evaluations += 1
        except Exception:
            completed = False
            fitness[i:] = math.inf
            break
        fitness[n_children:] = elite_fit

    return finish()


def random_search(budget: int, specs, objective, rng=None,
                  chunk: int = 50) -> RunRecord:
    """Uniform decimal sampling within bounds; best kept.

    History is chunked into pseudo-generations of ``chunk`` samples so
    records are comparable with GA runs.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    specs = list(specs)
    if isinstance(rng, np.random.Generator):
        seed, gen = None, rng
    else:
        seed = None if rng is None else int(rng)
        gen = np.random.default_rng(seed)
    best_fit, best_values = math.inf, None
    gen_best, gen_mean = [], []
    current: list[float] = []
    evaluations = 0
    completed = True
    for _ in range(budget):
        values = np.array([
            float(gen.integers(int(s.lower), int(s.upper) + 1)) if s.integer
            else gen.uniform(s.lower, s.upper)
            for s in specs])
        try:
            f = float(objective(values))
        except Exception:
            completed = False
            break
        evaluations += 1
        current.append(f)
        if f < best_fit:
            best_fit, best_values = f, values
        if len(current) == chunk:
            gen_best.append(min(current))
            gen_mean.append(float(np.mean(current)))
            current = []
    if current:
        gen_best.append(min(current))
        gen_mean.append(float(np.mean(current)))
    return RunRecord(
        algorithm="random", seed=seed, evaluations=evaluations,
        best_fitness=best_fit,
        best_values=list(best_values) if best_values is not None else [],
        gen_best=gen_best, gen_mean=gen_mean, completed=completed,
    )


class _BudgetExhausted(Exception):
    pass


class _CountingObjective:
    """Wraps an objective with budget enforcement and best-so-far tracking."""

    def __init__(self, objective, budget):
        self.objective = objective
        self.budget = budget
        self.count = 0
        self.best_f = math.inf
        self.best_x = None

    def __call__(self, x):
        if self.count >= self.budget:
            raise _BudgetExhausted
        self.count += 1
        f = float(self.objective(np.asarray(x, dtype=float)))
        if f < self.best_f:
            self.best_f = f
            self.best_x = np.array(x, dtype=float)
        return f


def finite_difference_gradient(objective, x, steps) -> np.ndarray:
    """Central-difference gradient with per-component absolute steps."""
    x = np.asarray(x, dtype=float)
    steps = np.broadcast_to(np.asarray(steps, dtype=float), x.shape)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = steps[i]
        grad[i] = (objective(x + e) - objective(x - e)) / (2.0 * steps[i])
    return grad


def nelder_mead(objective, x0, confidence_steps, budget: int = 1500) -> RunRecord:
    """Simplex search; the initial simplex edges are the confidence steps."""
    x0 = np.asarray(x0, dtype=float)
    steps = np.broadcast_to(np.asarray(confidence_steps, dtype=float), x0.shape)
    simplex = np.vstack([x0] + [x0 + np.eye(x0.size)[i] * steps[i]
                                for i in range(x0.size)])
    counting = _CountingObjective(objective, budget)
    try:
        minimize(counting, x0, method="Nelder-Mead",
                 options={"initial_simplex": simplex, "maxfev": budget,
                          "xatol": 1e-10, "fatol": 1e-12})
    except _BudgetExhausted:
        pass
    return RunRecord(
        algorithm="nelder-mead", seed=None, evaluations=counting.count,
        best_fitness=counting.best_f, best_values=list(counting.best_x),
        gen_best=[counting.best_f], gen_mean=[counting.best_f],
    )


def quasi_newton_fd(objective, x0, budget: int = 1500,
                    gradient_steps=None) -> RunRecord:
    """BFGS driven by central finite differences.

    ``gradient_steps`` sets the absolute finite-difference step per
    component (the harness passes 1e-4 of each parameter's bound width);
    defaults to 1e-4 of max(|x0|, 1) per component.
    """
    x0 = np.asarray(x0, dtype=float)
    if gradient_steps is None:
        gradient_steps = 1e-4 * np.maximum(np.abs(x0), 1.0)
    counting = _CountingObjective(objective, budget)

    def jac(x):
        return finite_difference_gradient(counting, x, gradient_steps)

    try:
        minimize(counting, x0, method="BFGS", jac=jac,
                 options={"maxiter": budget, "gtol": 1e-10})
    except _BudgetExhausted:
        pass
    if counting.best_x is None:  # budget too small even for one evaluation
        raise ValueError("budget must allow at least one evaluation")
    return RunRecord(
        algorithm="quasi-newton", seed=None, evaluations=counting.count,
        best_fitness=counting.best_f, best_values=list(counting.best_x),
        gen_best=[counting.best_f], gen_mean=[counting.best_f],
    )


def success_rate(records, threshold: float = 0.50) -> float:
    """Fraction of runs whose best efficiency exceeds the threshold."""
    records = list(records)
    if not records:
        raise ValueError("need at least one run record")
    hits = sum(1 for r in records if r.best_efficiency > threshold)
    return hits / len(records)
