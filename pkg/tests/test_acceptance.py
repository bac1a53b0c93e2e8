"""End-to-end acceptance checks. Each test prints one PASS/FAIL line at its stated tolerance.

Run on their own with ``pytest tests/test_acceptance.py -v``; the lines are repeated in the
terminal summary. The learning-curve experiments are marked ``slow``.
"""
import time

import numpy as np
import pytest

from prior_rl.cli import main
from prior_rl.config import ExperimentConfig
from prior_rl.core import CandidateSet, Transition
from prior_rl.dataset import Behavior, generate_dataset, load_dataset, save_dataset
from prior_rl.envs import make_env
from prior_rl.envs.chain import ACTIONS, ChainEnv
from prior_rl.learners import (LearnerConfig, build_policy_batch, clipped_ppo_loss, cql_prior_loss, dqn_loss,
                               greedy_policy_action, policy_log_probs, ppo_kl_loss, prior_rows_for,
                               q_values, td_targets)
from prior_rl.posterior import boltzmann_probs, limit_policy, validate_prop1
from prior_rl.prior import PriorConfig, UniformPrior, empirical_prior, make_prior, sample_candidates
from prior_rl.report import final_third
from prior_rl.train import Trainer
from prior_rl.value import Featurizer, QParams, forward, mse_gradient, target_sync

from test_value import check_fd

SEEDS = (0, 1, 2, 3, 4)


def random_batch(rng, n, prior, k, env_spec=None):
    env = make_env(env_spec or {"name": "frozenlake"})
    s = env.reset(int(rng.integers(1000)))
    out = []
    while len(out) < n:
        a = s.admissible[int(rng.integers(len(s.admissible)))]
        s_next, r, done = env.step(a)
        c = sample_candidates(prior, s, k, rng)
        c_next = None if done else sample_candidates(prior, s_next, k, rng)
        out.append(Transition(s, a, r, s_next, done, c, c_next))
        s = env.reset(int(rng.integers(1000))) if done else s_next
    return out


def run_curves(cfg, seeds, dataset=None):
    curves, episodes, grid = [], [], None
    for seed in seeds:
        rows = list(Trainer(cfg, seed, dataset(seed) if dataset else None).run())
        x = np.array([r.env_steps for r in rows])
        assert grid is None or np.array_equal(grid, x)
        grid = x
        curves.append(np.array([r.eval_return_mean for r in rows]))
        episodes.append(np.array([r.episode for r in rows]))
    return grid, np.stack(curves), np.stack(episodes)


def steps_to_reach(grid, curves, threshold):
    """First eval point where the seed-mean curve, averaged over its final third so far, clears threshold."""
    mean = curves.mean(axis=0)
    for j in range(len(grid)):
        if final_third(mean[: j + 1]).mean() >= threshold:
            return int(grid[j])
    return None


# -- 1 ---------------------------------------------------------------------------------------

def test_criterion_1_limit_policy_convergence(verdict):
    t0 = time.perf_counter()
    prior, q, ks, n = [0.5, 0.3, 0.2], [1.0, 0.0, 0.0], [1, 2, 8, 32, 128], 100_000
    rows, _ = validate_prop1(prior, q, 1.0, ks, n, np.random.default_rng(0))
    tv = [r.tv_distance for r in rows]
    limit = np.array(limit_policy(dict(enumerate(prior)), dict(enumerate(q)), 1.0).probs)
    # three standard errors of a TV estimate from n draws of the limit distribution
    noise = 3 * 0.5 * float(np.sum(np.sqrt(limit * (1 - limit) / n)))
    monotone = all(b <= a + noise for a, b in zip(tv, tv[1:]))
    elapsed = time.perf_counter() - t0
    ok = monotone and tv[-1] < 0.02 and elapsed < 60
    detail = ", ".join(f"k={k}: {d:.4f}" for k, d in zip(ks, tv))
    assert verdict("criterion 1 (TV to limit policy)", ok,
                   f"{detail}; non-increasing within {noise:.4f}: {monotone}; TV(128) < 0.02; {elapsed:.1f}s < 60s")


# -- 2 ---------------------------------------------------------------------------------------

FROZENLAKE_CAP = 50_000


def frozenlake_config(kind, steps):
    return ExperimentConfig.from_dict({
        "env": {"name": "frozenlake"},
        "learner": {"kind": kind, "alpha": 0.1, "k": 2, "total_env_steps": steps, "update_frequency": 5,
                    "target_sync_interval": 5, "epsilon_decay_steps": 5000},
        "prior": {"kind": "scripted", "quality": 0.7, "k": 2},
        "eval_every": 500, "seeds": list(SEEDS)})


@pytest.fixture(scope="module")
def frozenlake_runs():
    t0 = time.perf_counter()
    # the prior learner only has to beat half the cap, so it never needs to run longer
    prior_run = run_curves(frozenlake_config("dqn_prior", FROZENLAKE_CAP // 2), SEEDS)
    plain_run = run_curves(frozenlake_config("dqn", FROZENLAKE_CAP), SEEDS)
    return prior_run, plain_run, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_2_online_sample_efficiency(verdict, frozenlake_runs):
    (g1, c1, _), (g2, c2, _), elapsed = frozenlake_runs
    n_prior = steps_to_reach(g1, c1, 0.8)
    n_plain = steps_to_reach(g2, c2, 0.8)
    # a learner that never clears the bar within the cap counts as needing more than the cap
    plain_needed = n_plain if n_plain is not None else float("inf")
    ok = n_prior is not None and n_prior <= plain_needed / 2 and elapsed < 15 * 60
    plain_text = f"{n_plain}" if n_plain is not None else f"not reached by {FROZENLAKE_CAP}"
    detail = (f"steps to final-third mean >= 0.8 over 5 seeds: DQN-Prior {n_prior}, DQN {plain_text}; "
              f"DQN final-third at cap {final_third(c2.mean(axis=0)).mean():.3f}; {elapsed:.0f}s < 900s")
    assert verdict("criterion 2 (online sample efficiency)", ok, detail)


@pytest.mark.slow
def test_dqn_prior_frozenlake_within_300_episodes(verdict, frozenlake_runs):
    (grid, curves, episodes), _, _ = frozenlake_runs
    mean, eps = curves.mean(axis=0), episodes.mean(axis=0)
    hit = np.flatnonzero(mean >= 0.8)
    ok = len(hit) > 0 and eps[hit[0]] <= 300
    detail = (f"5-seed mean eval return {mean[hit[0]]:.2f} at {grid[hit[0]]} steps after {eps[hit[0]]:.0f} episodes"
              if len(hit) else "never reached 0.8")
    assert verdict("DQN-Prior FrozenLake q=0.7 k=2 reaches 0.8 within 300 episodes", ok, detail)


# -- 3 ---------------------------------------------------------------------------------------

TOMATO = {"name": "minicooked", "task": "tomato"}
CANDIDATES = PriorConfig(kind="scripted", quality=0.8, k=3)


def tomato_dataset(tmp_dir, n, seed):
    env = make_env(TOMATO)
    path = tmp_dir / f"tomato_{n}_seed{seed}.jsonl"
    generate_dataset(env, Behavior("scripted", 0.5), n, 0.5, make_prior(CANDIDATES, env), 3,
                     np.random.default_rng(1000 + seed), out_path=path)
    return path


def tomato_config(kind, path):
    return ExperimentConfig.from_dict({
        "env": TOMATO, "prior": {"kind": "scripted", "quality": 0.8, "k": 3}, "dataset": str(path),
        "learner": {"kind": kind, "k": 3, "alpha": 0.1, "epochs": 50, "updates_per_epoch": 20,
                    "target_sync_interval": 10}})


@pytest.mark.slow
def test_criterion_3_offline_sample_efficiency(verdict, tmp_path):
    t0 = time.perf_counter()
    scores = {}
    for kind, n in (("cql_prior", 1000), ("cql", 5000)):
        finals = []
        for seed in SEEDS:
            path = tomato_dataset(tmp_path, n, seed)
            ds = load_dataset(path)
            rows = list(Trainer(tomato_config(kind, path), seed, ds).run())
            finals.append(final_third([r.eval_return_mean for r in rows]).mean())
        scores[kind] = float(np.mean(finals))
    elapsed = time.perf_counter() - t0
    ok = scores["cql_prior"] >= scores["cql"] and elapsed < 20 * 60
    detail = (f"final-third eval return over 5 seeds: CQL-Prior(1000) {scores['cql_prior']:.3f} vs "
              f"CQL(5000) {scores['cql']:.3f}; {elapsed:.0f}s < 1200s")
    assert verdict("criterion 3 (offline sample efficiency)", ok, detail)


# -- 4 ---------------------------------------------------------------------------------------

def test_criterion_4_reduction_identities(verdict):
    feat = Featurizer(64)
    worst_cql = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        batch = random_batch(rng, int(rng.integers(1, 32)), UniformPrior(), 3)
        p, target = QParams.create(64, 8, rng), target_sync(QParams.create(64, 8, rng))
        cfg = LearnerConfig(kind="cql_prior", beta=0.0)
        l_cql, g_cql, _ = cql_prior_loss(batch, p, target, cfg, feat)
        l_dqn, g_dqn = dqn_loss(batch, p, target, cfg, feat)
        # the conservative-Q loss carries a 1/2 on its TD term
        worst_cql = max(worst_cql, abs(l_cql - 0.5 * l_dqn),
                        *(float(np.abs(g_cql[k] - 0.5 * g_dqn[k]).max()) for k in g_cql))
    ok_a = worst_cql <= 1e-12

    ok_b = True
    for seed in range(100):
        rng = np.random.default_rng(seed)
        batch = [Transition(t.s, t.a, t.r, t.s_next, t.done, CandidateSet(t.s.admissible),
                            None if t.done else CandidateSet(t.s_next.admissible))
                 for t in random_batch(rng, 32, UniformPrior(), 1)]
        target = target_sync(QParams.create(64, 8, rng))
        ok_b &= np.array_equal(td_targets(batch, target, 0.95, "hard_max", 0.1, feat),
                               td_targets(batch, target, 0.95, "hard_max", 0.1, feat, full_action=True))

    ok_c = True
    for seed in range(100):
        rng = np.random.default_rng(seed)
        batch = random_batch(rng, 16, UniformPrior(), 5)
        states = [t.s for t in batch]
        pb = build_policy_batch(states, [t.a for t in batch], feat)
        p = QParams.create(64, 8, rng)
        logp, _ = policy_log_probs(p, pb)
        old = logp[pb.rows] + rng.normal(0, 0.3, len(batch))
        adv = rng.normal(size=len(batch))
        priors = prior_rows_for(states, [empirical_prior(t.candidates_s) for t in batch])
        _, g1, _ = ppo_kl_loss(pb, p, old, adv, priors, 0.2, 0.01, 0.0)
        _, g2, _ = clipped_ppo_loss(pb, p, old, adv, 0.2, 0.01)
        ok_c &= all(np.array_equal(g1[k], g2[k]) for k in g1)
    detail = (f"(a) beta=0 conservative loss = 1/2 TD loss, worst gap {worst_cql:.1e} <= 1e-12: {ok_a}; "
              f"(b) full-coverage targets exact: {ok_b}; (c) alpha=0 PPO-KL gradient exact: {ok_c}")
    assert verdict("criterion 4 (reduction identities)", ok_a and ok_b and ok_c, detail)


# -- 5 ---------------------------------------------------------------------------------------

def test_criterion_5_numerical_soundness(verdict):
    feat = Featurizer(16)
    worst_q = worst_pi = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        p = QParams.create(16, 5, rng)
        batch = random_batch(rng, int(rng.integers(1, 6)), UniformPrior(), 3)
        X = feat.matrix((t.s, t.a) for t in batch)
        y = rng.normal(size=len(batch))
        _, g = mse_gradient(p.weights, X, y)
        worst_q = max(worst_q, check_fd(p.weights, lambda w: float(np.mean((forward(w, X)[0] - y) ** 2)), g, rng))
        states = [t.s for t in batch]
        pb = build_policy_batch(states, [t.a for t in batch], feat)
        logp, _ = policy_log_probs(p, pb)
        args = (logp[pb.rows] + rng.normal(0, 0.1, len(batch)), rng.normal(size=len(batch)),
                prior_rows_for(states, [empirical_prior(t.candidates_s) for t in batch]), 0.2, 0.01, 0.5)
        _, g = ppo_kl_loss(pb, p, *args)[:2]
        worst_pi = max(worst_pi, check_fd(p.weights, lambda w: ppo_kl_loss(pb, QParams(w), *args)[0], g, rng))
    rng = np.random.default_rng(0)
    sums = shift = 0.0
    for _ in range(1000):
        q = rng.normal(0, 5, size=int(rng.integers(1, 10)))
        alpha = float(rng.choice([0.01, 0.1, 1.0]))
        probs = boltzmann_probs(q, alpha)
        sums = max(sums, abs(probs.sum() - 1))
        shift = max(shift, float(np.abs(boltzmann_probs(q + rng.normal(0, 100), alpha) - probs).max()))
    ok = worst_q < 1e-4 and worst_pi < 1e-4 and sums <= 1e-9 and shift <= 1e-9
    detail = (f"100 draws, worst relative FD error Q-net {worst_q:.1e}, policy {worst_pi:.1e} (< 1e-4); "
              f"Boltzmann |sum-1| {sums:.1e}, shift change {shift:.1e} (<= 1e-9)")
    assert verdict("criterion 5 (numerical soundness)", ok, detail)


# -- 6 ---------------------------------------------------------------------------------------

def chain_run(k):
    cfg = ExperimentConfig.from_dict({
        "env": {"name": "chain"}, "prior": {"kind": "uniform"},
        "learner": {"kind": "dqn_prior", "gamma": 0.9, "alpha": 0.1, "k": k, "total_env_steps": 5000,
                    "warmup_steps": 100, "update_frequency": 1, "target_sync_interval": 10},
        "eval_every": 5000, "seeds": [0]})
    t0 = time.perf_counter()
    tr = Trainer(cfg, 0)
    list(tr.run())
    env = ChainEnv()
    q = np.array([q_values(tr.params, env.state_at(p), ACTIONS, tr.feat) for p in range(4)])
    return float(np.abs(q - env.optimal_q(0.9)[:4]).max()), time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_6_chain_q_star(verdict):
    k = len(ACTIONS)
    err, elapsed = chain_run(k)
    ok = err < 0.05 and elapsed < 120
    assert verdict("criterion 6 (chain Q*, uniform prior, k=|A|=2)", ok,
                   f"max |Q - Q*| = {err:.3f} (< 0.05); {elapsed:.1f}s < 120s")


@pytest.mark.slow
def test_chain_q_star_with_near_full_coverage(verdict):
    err, elapsed = chain_run(16)
    ok = err < 0.05 and elapsed < 120
    assert verdict("chain Q*, uniform prior, k=16 (candidate set misses an action w.p. 3e-5)", ok,
                   f"max |Q - Q*| = {err:.2e} (< 0.05); {elapsed:.1f}s < 120s")


# -- 7 ---------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_behavior_cloning(verdict, tmp_path):
    env = make_env({"name": "frozenlake"})
    path = tmp_path / "expert.jsonl"
    ds = generate_dataset(env, Behavior("scripted", 1.0), 500, 1.0, UniformPrior(), 1,
                          np.random.default_rng(0), out_path=path)
    cfg = ExperimentConfig.from_dict({"env": {"name": "frozenlake"}, "dataset": str(path),
                                      "learner": {"kind": "bc", "epochs": 200}})
    tr = Trainer(cfg, 0, ds)
    list(tr.run())
    agree = float(np.mean([greedy_policy_action(tr.params, t.s, tr.feat) == env.oracle_action(t.s)
                           for t in ds.transitions]))
    assert verdict("criterion 7 (behavior cloning)", agree >= 0.95,
                   f"greedy agreement with expert {agree:.3f} over {len(ds)} dataset states (>= 0.95)")


# -- 8 ---------------------------------------------------------------------------------------

def test_criterion_8_determinism_and_io(verdict, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"env": {"name": "frozenlake"}, "prior": {"kind": "scripted", "quality": 0.7, "k": 2},'
                   ' "learner": {"kind": "dqn_prior", "k": 2, "total_env_steps": 600, "warmup_steps": 100},'
                   ' "eval_every": 200, "eval_episodes": 5, "seeds": [0]}')
    runs = []
    for name in ("a", "b"):
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
        runs.append((tmp_path / name / "metrics_seed0.csv").read_bytes())
    same_bytes = runs[0] == runs[1]

    env = make_env(TOMATO)
    ds = generate_dataset(env, Behavior("scripted", 0.5), 200, 0.5, make_prior(CANDIDATES, env), 3,
                          np.random.default_rng(0))
    back = load_dataset(save_dataset(ds, tmp_path / "d.jsonl"))
    round_trip = back.records() == ds.records() and back.provenance == ds.provenance

    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{\n  oops\n}")
    truncated = tmp_path / "trunc.jsonl"
    lines = (tmp_path / "d.jsonl").read_text().splitlines()
    truncated.write_text("\n".join(lines[:6]) + "\n" + lines[6][:20])
    contracts = {
        "unknown config field": (["train", "--config", str(cfg), "--set", "learner.alhpa=1"], 2, "learner.alhpa"),
        "malformed config": (["train", "--config", str(bad_json)], 2, "line 2"),
        "existing outputs": (["train", "--config", str(cfg), "--out", str(tmp_path / "a")], 1, "--overwrite"),
        "truncated dataset": (["train", "--config", str(cfg), "--dataset", str(truncated)], 1, "line 7"),
        "missing metrics": (["report", str(tmp_path / "none.csv")], 2, "not found"),
    }
    capsys.readouterr()
    failed = []
    for name, (argv, code, text) in contracts.items():
        rc = main(argv)
        err = capsys.readouterr().err
        if rc != code or text not in err:
            failed.append(f"{name} (exit {rc}: {err.strip()})")
    ok = same_bytes and round_trip and not failed
    detail = (f"byte-identical metrics: {same_bytes}; dataset round trip: {round_trip}; "
              f"error contracts {len(contracts) - len(failed)}/{len(contracts)}"
              + (f"; failed: {failed}" if failed else ""))
    assert verdict("criterion 8 (determinism and I/O)", ok, detail)
