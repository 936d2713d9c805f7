"""Genetic algorithm with incremental shaping of the 30-trial evaluation pool.

All randomness comes from counter-keyed streams ``SeedSequence([seed, stream,
generation, index])``, so a run is a pure function of its config, and
evaluation can be spread over threads without changing a single bit.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .genome import Architecture, Genome, decode, genome_length, genome_to_dict
from .trials import Trial, TrialConfig, sample_trial
from .world import WorldConfig, scores_from_offsets, simulate

log = logging.getLogger(__name__)

RUNLOG_SCHEMA = "selattn.runlog/1"
CHECKPOINT_SCHEMA = "selattn.checkpoint/1"
HANDPICKED_FILE = "handpicked_v1.json"

STREAM_INIT = 1
STREAM_REPRO = 2
STREAM_SHAPING = 3

VARIANTS = ("standard", "unseen_passing_augmented")


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ShapingConfig:
    enabled: bool = True
    stagnation_limit: int = 600
    threshold_base: float = 198.0
    threshold_trials_divisor: float = 14.0
    threshold_gens_divisor: float = 2500.0
    candidate_score_cutoff: float = 170.0
    candidate_cap: int = 30
    pool_size: int = 30
    n_handpicked: int = 5
    variant: str = "standard"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.candidate_score_cutoff < 200.0:
            raise ValueError("candidate score cutoff must be below the maximum score 200")
        if self.candidate_cap < 1 or self.stagnation_limit < 1 or self.pool_size < 1:
            raise ValueError("shaping counts must be positive")


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 100
    elite_count: int = 2
    mutation_variance: float = 1.0
    generations: int = 9000
    trials_per_eval: int = 30
    interneurons: int = 4
    seed: int = 0
    selection: str = "linear_rank"
    shaping: ShapingConfig = field(default_factory=ShapingConfig)
    trial: TrialConfig = field(default_factory=TrialConfig)

    def __post_init__(self):
        if self.population_size < 1 or self.generations < 0 or self.trials_per_eval < 1:
            raise ValueError("population, generations and trials per evaluation must be positive")
        if not 0 <= self.elite_count < self.population_size:
            raise ValueError("elite count must be in [0, population size)")
        if self.mutation_variance < 0:
            raise ValueError("mutation variance must be non-negative")
        if self.selection != "linear_rank":
            raise ValueError(f"unknown selection scheme {self.selection!r}")
        if self.trials_per_eval != self.shaping.pool_size:
            raise ValueError("trials per evaluation must equal the shaping pool size")
        Architecture(self.interneurons)

    @property
    def architecture(self) -> Architecture:
        return Architecture(self.interneurons)

    @property
    def world(self) -> WorldConfig:
        return self.trial.world

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trial"] = self.trial.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvolutionConfig":
        d = dict(d)
        shaping = ShapingConfig(**d.pop("shaping", {}))
        trial = TrialConfig.from_dict(d.pop("trial", {}))
        return cls(shaping=shaping, trial=trial, **d)


# ---------------------------------------------------------------------------
# operators


def threshold(n: int, gen: int, cfg: ShapingConfig = ShapingConfig()) -> float:
    if n < 0 or gen < 0:
        raise ValueError("n and gen must be non-negative")
    return cfg.threshold_base - n / cfg.threshold_trials_divisor - gen / cfg.threshold_gens_divisor


def ranks(fitnesses) -> np.ndarray:
    """Rank 1 is the worst; equal fitnesses rank in index order."""
    f = np.asarray(fitnesses, dtype=float)
    order = np.argsort(f, kind="stable")
    r = np.empty(f.size, dtype=np.int64)
    r[order] = np.arange(1, f.size + 1)
    return r


def rank_probabilities(fitnesses) -> np.ndarray:
    r = ranks(fitnesses)
    n = r.size
    if n == 0:
        raise ValueError("population is empty")
    return 2.0 * r / (n * (n + 1))


def rank_select(fitnesses, rng: np.random.Generator, size: Optional[int] = None):
    cdf = np.cumsum(rank_probabilities(fitnesses))
    u = rng.random(size) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, cdf.size - 1)
    return int(idx) if size is None else idx


def mutate(parent, rng: np.random.Generator, variance: float = 1.0):
    """``parent + m*u``: ``u`` uniform on the unit sphere, ``m ~ N(0, variance)``."""
    genes = parent.genes if isinstance(parent, Genome) else np.asarray(parent, dtype=float)
    if genes.size == 0:
        raise ValueError("cannot mutate an empty genome")
    u = rng.standard_normal(genes.size)
    norm = math.sqrt(float(u @ u))
    m = rng.normal(0.0, math.sqrt(variance))
    child = genes + (m / norm) * u
    if isinstance(parent, Genome):
        return Genome(child, parent.architecture)
    return child


def elite_indices(fitnesses, count: int) -> np.ndarray:
    order = np.argsort(np.asarray(fitnesses, dtype=float), kind="stable")
    return order[::-1][:count]


def next_generation(population: np.ndarray, fitnesses, gen: int, cfg: EvolutionConfig) -> np.ndarray:
    """Elites copied verbatim, then rank-selected mutants, one RNG stream per child."""
    pop = np.asarray(population, dtype=float)
    n = pop.shape[0]
    out = np.empty_like(pop)
    e = cfg.elite_count
    out[:e] = pop[elite_indices(fitnesses, e)]
    cdf_fit = np.asarray(fitnesses, dtype=float)
    for i in range(e, n):
        rng = stream(cfg.seed, STREAM_REPRO, gen, i)
        parent = pop[rank_select(cdf_fit, rng)]
        out[i] = mutate(parent, rng, cfg.mutation_variance)
    return out


def initial_population(cfg: EvolutionConfig) -> np.ndarray:
    rng = stream(cfg.seed, STREAM_INIT)
    return rng.uniform(-1.0, 1.0, (cfg.population_size, genome_length(cfg.architecture)))


# ---------------------------------------------------------------------------
# evaluation


def trial_scores(genes: np.ndarray, arch: Architecture, pool: np.ndarray, world: WorldConfig) -> np.ndarray:
    params = decode(Genome(genes, arch))
    offsets, _, ok = simulate(params, pool, world)
    return scores_from_offsets(offsets, ok)


def evaluate(genome: Genome, pool, cfg: EvolutionConfig = EvolutionConfig()) -> float:
    """Mean score of ``genome`` over the pool."""
    arr = _pool_array(pool)
    return float(np.mean(trial_scores(genome.genes, genome.architecture, arr, cfg.world)))


def evaluate_population(population: np.ndarray, pool, cfg: EvolutionConfig,
                        threads: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """``(mean scores, per-trial scores)``; result order never depends on ``threads``."""
    arr = _pool_array(pool)
    arch = cfg.architecture

    def one(i):
        return trial_scores(population[i], arch, arr, cfg.world)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(one, range(population.shape[0])))
    else:
        rows = [one(i) for i in range(population.shape[0])]
    per_trial = np.stack(rows)
    return per_trial.mean(axis=1), per_trial


def _pool_array(pool) -> np.ndarray:
    if isinstance(pool, np.ndarray):
        return np.ascontiguousarray(pool, dtype=float)
    return np.ascontiguousarray(np.array([t.as_array() for t in pool]))


# ---------------------------------------------------------------------------
# handpicked trials and shaping


@dataclass(frozen=True)
class HandpickedSet:
    pool: Tuple[Trial, ...]
    replacements: Tuple[Trial, ...]
    unseen_passing: Trial
    augmented_slot: int
    intents: Dict[str, str]
    version: int


def load_handpicked() -> HandpickedSet:
    text = resources.files("selattn").joinpath("data", HANDPICKED_FILE).read_text()
    d = json.loads(text)

    def trial(r):
        return Trial(tuple(r["obj1"]), tuple(r["obj2"]), r["id"])

    recs = d["pool"] + d["replacements"] + [d["unseen_passing"]]
    return HandpickedSet(
        pool=tuple(trial(r) for r in d["pool"]),
        replacements=tuple(trial(r) for r in d["replacements"]),
        unseen_passing=trial(d["unseen_passing"]),
        augmented_slot=int(d["augmented_slot"]),
        intents={r["id"]: r["intent"] for r in recs},
        version=int(d["version"]),
    )


def make_initial_pool(variant: str = "standard") -> Tuple[List[Trial], List[Trial]]:
    """The 30 starting trials and the 5 scheduled replacements."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    hp = load_handpicked()
    pool = list(hp.pool)
    if variant == "unseen_passing_augmented":
        pool[hp.augmented_slot] = hp.unseen_passing
    return pool, list(hp.replacements)


@dataclass
class ShapingState:
    pool: List[Trial]
    n_added: int = 0
    last_change_gen: int = 0
    replacements_log: List[dict] = field(default_factory=list)
    trials_seen: int = 0

    def __post_init__(self):
        if self.trials_seen == 0:
            self.trials_seen = len(self.pool)

    def to_dict(self) -> dict:
        return {
            "pool": [{"id": t.id, "obj1": list(t.obj1), "obj2": list(t.obj2)} for t in self.pool],
            "n_added": self.n_added,
            "last_change_gen": self.last_change_gen,
            "replacements_log": self.replacements_log,
            "trials_seen": self.trials_seen,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShapingState":
        pool = [Trial(tuple(r["obj1"]), tuple(r["obj2"]), r["id"]) for r in d["pool"]]
        return cls(pool, d["n_added"], d["last_change_gen"], list(d["replacements_log"]), d["trials_seen"])


def shaping_trigger(state: ShapingState, best_mean: float, gen: int, cfg: ShapingConfig) -> Optional[str]:
    if not cfg.enabled:
        return None
    if best_mean > threshold(state.n_added, gen, cfg):
        return "threshold"
    if gen - state.last_change_gen >= cfg.stagnation_limit:
        return "stagnation"
    return None


def shaping_update(state: ShapingState, best_genes: np.ndarray, best_scores: np.ndarray, best_mean: float,
                   gen: int, cfg: EvolutionConfig, replacements: Sequence[Trial]) -> ShapingState:
    """Replace the best agent's easiest pool trial when due. The new pool applies from ``gen + 1``."""
    sc = cfg.shaping
    trigger = shaping_trigger(state, best_mean, gen, sc)
    if trigger is None:
        return state
    slot = int(np.argmax(best_scores))
    removed = state.pool[slot]
    seen = state.trials_seen
    if state.n_added < sc.n_handpicked:
        if state.n_added >= len(replacements):
            raise ValueError("handpicked replacement list exhausted")
        new = replacements[state.n_added]
        seen += 1
        candidates = 0
    else:
        rng = stream(cfg.seed, STREAM_SHAPING, gen)
        params = decode(Genome(best_genes, cfg.architecture))
        new = None
        candidates = 0
        for k in range(sc.candidate_cap):
            cand = sample_trial(rng, cfg.trial, id=f"g{gen + 1}c{k}")
            candidates += 1
            offsets, _, ok = simulate(params, cand.as_array()[None, :], cfg.world)
            s = float(scores_from_offsets(offsets, ok)[0])
            new = cand
            if s < sc.candidate_score_cutoff:
                break
        seen += candidates
    pool = list(state.pool)
    pool[slot] = new
    entry = {"gen": gen + 1, "removed": removed.id, "added": new.id, "slot": slot,
             "trigger": trigger, "candidates": candidates}
    return ShapingState(pool, state.n_added + 1, gen + 1, state.replacements_log + [entry], seen)


def timer_replacement_gens(generations: int, cfg: ShapingConfig = ShapingConfig()) -> List[int]:
    """Generations at which new trials take effect when only the stagnation timer fires."""
    out, last = [], 0
    for gen in range(generations):
        if gen - last >= cfg.stagnation_limit:
            last = gen + 1
            out.append(last)
    return out


def max_trials_seen(generations: int, cfg: ShapingConfig = ShapingConfig()) -> int:
    """Upper bound on distinct trials met in a timer-only run."""
    added = len(timer_replacement_gens(generations, cfg))
    hand = min(added, cfg.n_handpicked)
    return cfg.pool_size + cfg.n_handpicked + (added - hand) * cfg.candidate_cap


# ---------------------------------------------------------------------------
# the run


@dataclass
class EvolutionResult:
    best_genome: Genome
    best_fitness: float
    fitness_history: List[Tuple[float, float]]
    best_so_far: List[float]
    pool_versions: List[int]
    shaping_log: List[dict]
    final_pool: List[Trial]
    provenance: dict


class CheckpointError(RuntimeError):
    pass


def _dumps(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, allow_nan=True)


def _digest(payload: dict) -> str:
    return hashlib.sha256(_dumps(payload).encode()).hexdigest()


def save_checkpoint(path, cfg: EvolutionConfig, next_gen: int, population: np.ndarray,
                    state: ShapingState, records: List[dict], best: dict) -> None:
    payload = {
        "schema": CHECKPOINT_SCHEMA,
        "config": cfg.to_dict(),
        "next_gen": next_gen,
        "population": population.tolist(),
        "shaping": state.to_dict(),
        "records": records,
        "best": best,
    }
    doc = {"payload": payload, "sha256": _digest(payload)}
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(_dumps(doc))
    os.replace(tmp, path)


def load_checkpoint(path, cfg: Optional[EvolutionConfig] = None) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
        payload = doc["payload"]
        digest = doc["sha256"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    if _digest(payload) != digest:
        raise CheckpointError(f"{path}: checkpoint digest mismatch (file corrupted or edited)")
    if payload.get("schema") != CHECKPOINT_SCHEMA:
        raise CheckpointError(f"{path}: unsupported checkpoint schema {payload.get('schema')!r}")
    if cfg is not None and payload["config"] != json.loads(_dumps(cfg.to_dict())):
        raise CheckpointError(f"{path}: checkpoint was written by a different configuration")
    return payload


def run_evolution(cfg: EvolutionConfig, *, threads: int = 1, log_path=None, checkpoint_path=None,
                  checkpoint_every: int = 0, resume: bool = False,
                  on_generation: Optional[Callable[[dict], None]] = None) -> EvolutionResult:
    arch = cfg.architecture
    pool0, replacements = make_initial_pool(cfg.shaping.variant)
    if len(pool0) != cfg.shaping.pool_size:
        raise ValueError(f"initial pool has {len(pool0)} trials, config expects {cfg.shaping.pool_size}")

    if resume:
        if checkpoint_path is None or not os.path.exists(checkpoint_path):
            raise CheckpointError("resume requested but no checkpoint exists")
        ck = load_checkpoint(checkpoint_path, cfg)
        start = ck["next_gen"]
        population = np.array(ck["population"], dtype=float)
        state = ShapingState.from_dict(ck["shaping"])
        records = list(ck["records"])
        best = dict(ck["best"])
    else:
        start = 0
        population = initial_population(cfg)
        state = ShapingState(list(pool0))
        records = [{"kind": "header", "schema": RUNLOG_SCHEMA, "config": cfg.to_dict(), "seed": cfg.seed,
                    "streams": {"init": STREAM_INIT, "reproduction": STREAM_REPRO, "shaping": STREAM_SHAPING}}]
        best = {"fitness": -math.inf, "genes": None, "gen": -1}

    log_fh = None
    if log_path is not None:
        log_fh = open(log_path, "w")
        for rec in records:
            log_fh.write(_dumps(rec) + "\n")

    def emit(rec):
        records.append(rec)
        if log_fh is not None:
            log_fh.write(_dumps(rec) + "\n")
            log_fh.flush()

    try:
        for gen in range(start, cfg.generations):
            fitness, per_trial = evaluate_population(population, state.pool, cfg, threads)
            top = int(elite_indices(fitness, 1)[0])
            if fitness[top] > best["fitness"]:
                best = {"fitness": float(fitness[top]), "genes": population[top].tolist(), "gen": gen}
            rec = {"kind": "generation", "gen": gen, "best": float(fitness[top]),
                   "mean": float(fitness.mean()), "best_so_far": best["fitness"], "pool_version": state.n_added}
            emit(rec)
            if on_generation is not None:
                on_generation(rec)
            new_state = shaping_update(state, population[top], per_trial[top], float(fitness[top]), gen, cfg,
                                       replacements)
            if new_state is not state:
                ev = dict(new_state.replacements_log[-1], kind="pool_change")
                emit(ev)
                log.info("generation %d: pool change %s -> %s (%s)", gen, ev["removed"], ev["added"], ev["trigger"])
            state = new_state
            population = next_generation(population, fitness, gen, cfg)
            if checkpoint_path is not None and checkpoint_every > 0 and (gen + 1) % checkpoint_every == 0:
                save_checkpoint(checkpoint_path, cfg, gen + 1, population, state, records, best)
    finally:
        if log_fh is not None:
            log_fh.close()

    gens = [r for r in records if r["kind"] == "generation"]
    genes = best["genes"] if best["genes"] is not None else population[0].tolist()
    provenance = {"seed": cfg.seed, "config": cfg.to_dict(), "best_generation": best["gen"],
                  "handpicked_version": load_handpicked().version}
    return EvolutionResult(
        best_genome=Genome(np.array(genes), arch, provenance),
        best_fitness=best["fitness"],
        fitness_history=[(r["best"], r["mean"]) for r in gens],
        best_so_far=[r["best_so_far"] for r in gens],
        pool_versions=[r["pool_version"] for r in gens],
        shaping_log=list(state.replacements_log),
        final_pool=list(state.pool),
        provenance=provenance,
    )


def result_to_dict(result: EvolutionResult) -> dict:
    return {
        "schema": "selattn.evolution/1",
        "best_fitness": result.best_fitness,
        "best_genome": genome_to_dict(result.best_genome),
        "fitness_history": [list(p) for p in result.fitness_history],
        "best_so_far": result.best_so_far,
        "pool_versions": result.pool_versions,
        "shaping_log": result.shaping_log,
        "final_pool": [t.id for t in result.final_pool],
        "provenance": result.provenance,
    }
