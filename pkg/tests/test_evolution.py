import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from selattn import evolution as E
from selattn import trials as T
from selattn.genome import Architecture, Genome, genome_length

SMALL = E.EvolutionConfig(population_size=8, generations=6, interneurons=2, seed=3)


def test_threshold_examples():
    assert E.threshold(0, 0) == 198
    assert E.threshold(14, 9000) == pytest.approx(193.4, abs=1e-12)
    assert E.threshold(7, 5000) == pytest.approx(195.5, abs=1e-12)
    with pytest.raises(ValueError):
        E.threshold(-1, 0)


def test_rank_probabilities():
    assert E.rank_probabilities([5.0, 9.0]) == pytest.approx([1 / 3, 2 / 3])
    assert E.rank_probabilities([9.0, 5.0]) == pytest.approx([2 / 3, 1 / 3])
    # ties: lower index ranks lower
    assert list(E.ranks([1.0, 1.0, 0.0])) == [2, 3, 1]
    with pytest.raises(ValueError):
        E.rank_probabilities([])


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200))
def test_probabilities_sum_to_one(f):
    p = E.rank_probabilities(f)
    assert p.sum() == pytest.approx(1.0)
    assert np.all(np.diff(p[np.argsort(np.asarray(f), kind="stable")]) > 0)


def test_rank_select_frequencies():
    fit = np.array([3.0, -1.0, 7.0, 2.0, 2.0, 10.0])
    p = E.rank_probabilities(fit)
    n = 1_000_000
    draws = E.rank_select(fit, np.random.default_rng(4), size=n)
    freq = np.bincount(draws, minlength=fit.size) / n
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(freq - p) < 3 * se)


def test_mutation_zero_magnitude_and_errors():
    parent = np.linspace(-1, 1, 10)
    assert np.array_equal(E.mutate(parent, np.random.default_rng(0), variance=0.0), parent)
    with pytest.raises(ValueError):
        E.mutate(np.array([]), np.random.default_rng(0))
    g = Genome(np.zeros(16), Architecture(0))
    child = E.mutate(g, np.random.default_rng(1))
    assert isinstance(child, Genome) and child.architecture == g.architecture


def test_mutation_is_unclamped():
    parent = np.ones(3)
    rng = np.random.default_rng(0)
    kids = np.array([E.mutate(parent, rng, variance=25.0) for _ in range(50)])
    assert np.any(np.abs(kids) > 1)


def test_initial_population_and_elites():
    pop = E.initial_population(SMALL)
    assert pop.shape == (8, genome_length(Architecture(2)))
    assert np.all((pop >= -1) & (pop <= 1))
    fit = np.arange(8.0)[::-1]
    nxt = E.next_generation(pop, fit, 0, SMALL)
    assert np.array_equal(nxt[0], pop[0]) and np.array_equal(nxt[1], pop[1])
    assert nxt.shape == pop.shape
    assert np.array_equal(nxt, E.next_generation(pop, fit, 0, SMALL))
    assert not np.array_equal(nxt, E.next_generation(pop, fit, 1, SMALL))


def test_config_validation():
    with pytest.raises(ValueError):
        E.EvolutionConfig(population_size=2, elite_count=2)
    with pytest.raises(ValueError):
        E.EvolutionConfig(interneurons=3)
    with pytest.raises(ValueError):
        E.ShapingConfig(candidate_score_cutoff=200)
    with pytest.raises(ValueError):
        E.ShapingConfig(variant="other")
    cfg = E.EvolutionConfig(seed=5, shaping=E.ShapingConfig(variant="unseen_passing_augmented"))
    assert E.EvolutionConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_handpicked_pools():
    std, repl = E.make_initial_pool("standard")
    aug, repl2 = E.make_initial_pool("unseen_passing_augmented")
    assert len(std) == 30 and len(repl) == 5 and repl == repl2
    diff = [i for i in range(30) if std[i] != aug[i]]
    assert len(diff) == 1
    arr = np.array([t.as_array() for t in std + repl + [aug[diff[0]]]])
    assert np.all(T.valid_many(arr))
    labels = T.classify_many(np.array([t.as_array() for t in std + repl]))
    assert not labels["unseen_passing"].any()
    assert T.classify(aug[diff[0]]).unseen_passing
    for key in ("trivial_stationary", "trivial_reactive", "delayed_decision", "object_permanence",
                "same_direction_solvable", "reverse_required", "overlap_or_cross"):
        assert labels[key].any(), key
    ids = [t.id for t in std + repl]
    assert len(set(ids)) == 35


def test_handpicked_matches_design_script():
    import subprocess
    import sys
    from pathlib import Path

    script = Path(__file__).resolve().parents[1] / "scripts" / "design_handpicked.py"
    out = subprocess.run([sys.executable, str(script), "--check"], capture_output=True, text=True)
    assert out.returncode == 0, out.stdout + out.stderr


def test_handpicked_intents_hold():
    hp = E.load_handpicked()
    for t in hp.pool + hp.replacements:
        lab = T.classify(t)
        intent = hp.intents[t.id]
        if intent == "stationary":
            assert lab.trivial_stationary
        if intent.startswith("permanence"):
            assert lab.object_permanence
        if intent == "permanence_reverse":
            assert lab.reverse_required
        if intent.startswith("delayed"):
            assert lab.delayed_decision


def test_timer_schedule():
    gens = E.timer_replacement_gens(9000)
    assert gens[:3] == [601, 1202, 1803] and len(gens) == 14
    assert E.max_trials_seen(9000) == 305


def stationary_genes(h=2):
    return np.zeros(genome_length(Architecture(h)))


def test_shaping_update_timer_and_replacement_choice():
    cfg = E.EvolutionConfig(population_size=4, interneurons=2, seed=1)
    pool, repl = E.make_initial_pool()
    state = E.ShapingState(list(pool))
    scores = np.full(30, 100.0)
    scores[[4, 9]] = 150.0
    same = E.shaping_update(state, stationary_genes(), scores, 100.0, 599, cfg, repl)
    assert same is state
    new = E.shaping_update(state, stationary_genes(), scores, 100.0, 600, cfg, repl)
    assert new.pool[4] == repl[0] and new.pool[9] == pool[9]
    assert new.n_added == 1 == len(new.replacements_log) and new.last_change_gen == 601
    assert new.replacements_log[0]["trigger"] == "stagnation"
    thr = E.shaping_update(state, stationary_genes(), scores, 198.5, 10, cfg, repl)
    assert thr.replacements_log[0]["trigger"] == "threshold" and thr.last_change_gen == 11


def test_shaping_random_candidates_and_fallback():
    cfg = E.EvolutionConfig(population_size=4, interneurons=2, seed=1)
    pool, repl = E.make_initial_pool()
    state = E.ShapingState(list(pool), n_added=5, last_change_gen=0)
    new = E.shaping_update(state, stationary_genes(), np.zeros(30), 0.0, 600, cfg, repl)
    entry = new.replacements_log[-1]
    assert 1 <= entry["candidates"] <= 30
    assert new.trials_seen == 30 + entry["candidates"]
    # a cutoff nothing can beat forces the fallback to the last candidate
    strict = E.EvolutionConfig(population_size=4, interneurons=2, seed=1,
                               shaping=E.ShapingConfig(candidate_score_cutoff=-1e9))
    fb = E.shaping_update(state, stationary_genes(), np.zeros(30), 0.0, 600, strict, repl)
    assert fb.replacements_log[-1]["candidates"] == 30
    assert fb.pool[0].id == "g601c29"


def test_timer_only_run_bookkeeping():
    cfg = E.EvolutionConfig(population_size=4, interneurons=2, seed=2)
    pool, repl = E.make_initial_pool()
    state = E.ShapingState(list(pool))
    genes = stationary_genes()
    per_trial = E.trial_scores(genes, cfg.architecture, E._pool_array(pool), cfg.world)
    for gen in range(9000):
        state = E.shaping_update(state, genes, per_trial, -math.inf, gen, cfg, repl)
        assert len(state.pool) == 30
    assert [e["gen"] for e in state.replacements_log][:3] == [601, 1202, 1803]
    assert state.n_added == 14 == len(state.replacements_log)
    assert state.trials_seen <= E.max_trials_seen(9000)


def test_evaluate_is_mean_of_trial_scores():
    pool, _ = E.make_initial_pool()
    g = Genome(stationary_genes(), Architecture(2))
    arr = E._pool_array(pool)
    x1 = arr[:, 0] + arr[:, 2] * arr[:, 1] / arr[:, 3]
    x2 = arr[:, 4] + arr[:, 6] * arr[:, 5] / arr[:, 7]
    want = np.mean(200 - np.abs(x1 - 200) - np.abs(x2 - 200))
    assert E.evaluate(g, pool, SMALL) == pytest.approx(want, abs=1e-9)


def test_population_evaluation_thread_invariant():
    pop = E.initial_population(SMALL)
    pool, _ = E.make_initial_pool()
    a = E.evaluate_population(pop, pool, SMALL, threads=1)
    b = E.evaluate_population(pop, pool, SMALL, threads=3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_run_is_reproducible_and_elitist(tmp_path):
    r1 = E.run_evolution(SMALL, log_path=tmp_path / "a.jsonl")
    r2 = E.run_evolution(SMALL, threads=2, log_path=tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert r1.best_genome == r2.best_genome
    assert all(b >= a for a, b in zip(r1.best_so_far, r1.best_so_far[1:]))
    best = [b for b, _ in r1.fitness_history]
    for g in range(1, len(best)):
        if r1.pool_versions[g] == r1.pool_versions[g - 1]:
            assert best[g] >= best[g - 1]
    lines = (tmp_path / "a.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["kind"] == "header"
    assert len(lines) == 1 + SMALL.generations


class Stop(Exception):
    pass


def test_resume_reproduces_uninterrupted_run(tmp_path):
    cfg = E.EvolutionConfig(population_size=6, generations=9, interneurons=0, seed=11,
                            shaping=E.ShapingConfig(stagnation_limit=3))
    full = E.run_evolution(cfg, log_path=tmp_path / "full.jsonl")
    ck = tmp_path / "ck.json"

    def stop_at_6(rec):
        if rec["gen"] == 6:
            raise Stop

    with pytest.raises(Stop):
        E.run_evolution(cfg, log_path=tmp_path / "part.jsonl", checkpoint_path=ck, checkpoint_every=4,
                        on_generation=stop_at_6)
    resumed = E.run_evolution(cfg, log_path=tmp_path / "part.jsonl", checkpoint_path=ck, resume=True)
    assert (tmp_path / "full.jsonl").read_bytes() == (tmp_path / "part.jsonl").read_bytes()
    assert resumed.best_genome == full.best_genome and resumed.shaping_log == full.shaping_log
    assert len(full.shaping_log) >= 2


def test_checkpoint_corruption_and_mismatch(tmp_path):
    ck = tmp_path / "ck.json"
    E.run_evolution(SMALL, checkpoint_path=ck, checkpoint_every=2)
    text = ck.read_text()
    ck.write_text(text.replace('"next_gen": 6', '"next_gen": 5'))
    with pytest.raises(E.CheckpointError):
        E.load_checkpoint(ck)
    ck.write_text(text[: len(text) // 2])
    with pytest.raises(E.CheckpointError):
        E.run_evolution(SMALL, checkpoint_path=ck, resume=True)
    ck.write_text(text)
    other = E.EvolutionConfig(population_size=8, generations=6, interneurons=2, seed=4)
    with pytest.raises(E.CheckpointError):
        E.run_evolution(other, checkpoint_path=ck, resume=True)
    with pytest.raises(E.CheckpointError):
        E.run_evolution(SMALL, checkpoint_path=tmp_path / "missing.json", resume=True)
