import csv
import json
import math

import numpy as np
import pytest

from prior_rl.cli import main
from prior_rl.config import ExperimentConfig
from prior_rl.core import ConfigError
from prior_rl.dataset import (Behavior, DatasetError, OfflineDataset, generate_dataset, load_dataset,
                              regenerate_candidates, save_dataset)
from prior_rl.envs import make_env
from prior_rl.prior import ScriptedPrior, UniformPrior
from prior_rl.report import aggregate_report, seed_stderr, write_report

CHAIN = {
    "env": {"name": "chain"},
    "learner": {"kind": "dqn_prior", "gamma": 0.9, "k": 2, "total_env_steps": 300, "warmup_steps": 50,
                "update_frequency": 1},
    "prior": {"kind": "uniform"},
    "eval_every": 100, "eval_episodes": 3, "seeds": [0, 1],
}


def write_config(path, data=CHAIN):
    path.write_text(json.dumps(data, indent=2))
    return path


# -- config ----------------------------------------------------------------------------------

def test_unknown_field_names_the_field():
    with pytest.raises(ConfigError, match=r"learner\.alhpa"):
        ExperimentConfig.from_dict({"learner": {"alhpa": 0.1}})
    with pytest.raises(ConfigError, match="^colour"):
        ExperimentConfig.from_dict({"colour": "red"})


@pytest.mark.parametrize("data, field", [
    ({"seeds": []}, "seeds"),
    ({"seeds": [1, 1]}, "seeds"),
    ({"eval_every": 0}, "eval_every"),
    ({"env": {"name": "atari"}}, "env.name"),
    ({"learner": {"alpha": 0}}, "learner.alpha"),
    ({"learner": {"gamma": 1.5}}, "learner.gamma"),
    ({"learner": {"kind": "cql"}}, "dataset"),
    ({"dataset": "/no/such/file.jsonl"}, "dataset"),
    ({"prior": {"kind": "scripted", "quality": 2.0}}, "prior.quality"),
])
def test_invalid_configs(data, field):
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict(data)
    assert exc.value.field == field


def test_defaults_follow_learner_family():
    assert ExperimentConfig().learner.step_size == 5e-4
    assert ExperimentConfig().learner.minibatch == 128
    cfg = ExperimentConfig.from_dict({"learner": {"kind": "ppo_kl"}})
    assert (cfg.learner.step_size, cfg.learner.minibatch) == (1e-4, 64)
    assert ExperimentConfig().eval_episodes == 20 and len(ExperimentConfig().seeds) == 5


def test_overrides_and_hash():
    cfg = ExperimentConfig()
    other = cfg.with_overrides({"learner.alpha": 0.5, "env.task": "x"})
    assert other.learner.alpha == 0.5 and other.env["task"] == "x"
    assert cfg.content_hash() != other.content_hash()
    assert cfg.content_hash() == ExperimentConfig().content_hash()
    with pytest.raises(ConfigError, match="learner.nope"):
        cfg.with_overrides({"learner.nope": 1})


def test_invalid_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "seeds": [0,\n}\n')
    with pytest.raises(ConfigError, match="line 3"):
        ExperimentConfig.load(p)


# -- dataset ---------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def salad():
    env = make_env({"name": "minicooked", "task": "salad"})
    prior = ScriptedPrior(0.8, env.oracle_action)
    return generate_dataset(env, Behavior("scripted", 0.5), 1000, 0.5, prior, 3, np.random.default_rng(0))


def test_salad_counts_within_ten_percent(salad):
    c = salad.counts()
    assert 450 <= c["good"] <= 550 and 450 <= c["bad"] <= 550
    assert c == {k: salad.provenance[k] for k in c}


def test_candidates_are_admissible(salad):
    for t in salad.transitions:
        assert set(t.candidates_s.actions) <= set(t.s.admissible)
        if t.candidates_s_next is not None:
            assert set(t.candidates_s_next.actions) <= set(t.s_next.admissible)
        assert t.candidates_s.k == 3


def test_ratio_one_gives_all_good():
    env = make_env({"name": "frozenlake"})
    ds = generate_dataset(env, Behavior("scripted", 0.9), 200, 1.0, UniformPrior(), 2, np.random.default_rng(1))
    assert ds.counts()["bad"] == 0 and ds.counts()["good"] >= 200


def test_weak_behavior_exhausts_budget():
    env = make_env({"name": "minicooked", "task": "salad"})
    with pytest.raises(DatasetError, match="stronger behavior"):
        generate_dataset(env, Behavior("random"), 100, 1.0, UniformPrior(), 1, np.random.default_rng(0),
                         max_episodes=5)


def test_round_trip(tmp_path, salad):
    path = save_dataset(salad, tmp_path / "d.jsonl")
    back = load_dataset(path)
    assert back.records() == salad.records()
    assert back.provenance == salad.provenance
    view = lambda s: (s.observation, s.admissible, s.done)  # noqa: E731
    assert [(view(t.s), t.a, view(t.s_next)) for t in back.transitions] == \
        [(view(t.s), t.a, view(t.s_next)) for t in salad.transitions]
    # dataset files describe themselves
    assert save_dataset(back, tmp_path / "e.jsonl").read_bytes() == path.read_bytes()


def test_truncated_file_error_names_line(tmp_path, salad):
    small = OfflineDataset(salad.transitions[:10], {}, salad.episodes[:10], salad.good[:10])
    path = save_dataset(small, tmp_path / "d.jsonl")
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(lines[:-1]) + lines[-1][: len(lines[-1]) // 2])
    with pytest.raises(DatasetError, match=f"line {len(lines)}"):
        load_dataset(path)


def test_invalid_record_error_names_index(tmp_path, salad):
    small = OfflineDataset(salad.transitions[:10], {}, salad.episodes[:10], salad.good[:10])
    path = save_dataset(small, tmp_path / "d.jsonl")
    lines = path.read_text().splitlines()
    rec = json.loads(lines[4])
    rec["a"] = "fly to the moon"
    lines[4] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetError, match=r"record 3 \(line 5\)"):
        load_dataset(path)


def test_provenance_recount_mismatch(tmp_path, salad):
    path = save_dataset(salad, tmp_path / "d.jsonl")
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DatasetError, match="provenance says total"):
        load_dataset(path)


def test_regenerate_candidates(salad):
    ds = OfflineDataset(salad.transitions[:50], dict(salad.provenance), salad.episodes[:50], salad.good[:50])
    fresh = regenerate_candidates(ds, UniformPrior(), 4, np.random.default_rng(0))
    assert all(t.candidates_s.k == 4 for t in fresh.transitions)
    assert [t.a for t in fresh.transitions] == [t.a for t in ds.transitions]
    with pytest.raises(DatasetError):
        regenerate_candidates(ds, ScriptedPrior(0.5, lambda s: s.admissible[0]), 2, np.random.default_rng(0))


# -- report ----------------------------------------------------------------------------------

HEADER = "run_id,seed,env_steps,episode,loss,eval_return_mean,eval_return_stderr,projection_failures,wall_time_s\n"


def metrics_file(path, values, steps=None, run_id="r", seed=0):
    steps = steps or [100 * i for i in range(len(values))]
    rows = [f"{run_id},{seed},{x},0,0,{v},0,0,0\n" for x, v in zip(steps, values)]
    path.write_text(HEADER + "".join(rows))
    return path


def test_single_seed_stderr_zero(tmp_path):
    rep = aggregate_report([metrics_file(tmp_path / "a.csv", [0.1, 0.5, 0.9])])
    c = rep.curves["r"]
    assert np.all(c.stderr == 0) and c.final_third_stderr == 0


def test_identical_curves(tmp_path):
    curve = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    files = [metrics_file(tmp_path / f"{i}.csv", curve, seed=i) for i in range(5)]
    c = aggregate_report(files).curves["r"]
    np.testing.assert_array_equal(c.mean, curve)
    assert np.all(c.stderr == 0) and c.n_seeds == 5
    assert c.final_third_mean == pytest.approx(0.9)


def test_two_seed_toy():
    assert seed_stderr([0.0, 1.0]) == pytest.approx(0.5)


def test_two_seed_toy_from_files(tmp_path):
    files = [metrics_file(tmp_path / "a.csv", [0.0], seed=0), metrics_file(tmp_path / "b.csv", [1.0], seed=1)]
    c = aggregate_report(files).curves["r"]
    assert c.mean[0] == 0.5 and c.stderr[0] == pytest.approx(0.5)


def test_duplicate_seed_changes_stderr_as_n_plus_one(tmp_path):
    vals = [0.2, 0.9, 0.4]
    files = [metrics_file(tmp_path / f"{i}.csv", [v], seed=i) for i, v in enumerate(vals)]
    dup = metrics_file(tmp_path / "dup.csv", [vals[0]], seed=9)
    before = aggregate_report(files).curves["r"].stderr[0]
    after = aggregate_report(files + [dup]).curves["r"].stderr[0]
    both = vals + [vals[0]]
    assert before == pytest.approx(np.std(vals, ddof=1) / math.sqrt(3))
    assert after == pytest.approx(np.std(both, ddof=1) / math.sqrt(4))


def test_misaligned_grids_resample_with_warning(tmp_path):
    a = metrics_file(tmp_path / "a.csv", [0.0, 0.5, 1.0], steps=[0, 100, 200])
    b = metrics_file(tmp_path / "b.csv", [0.0, 0.25, 0.5, 0.75, 1.0], steps=[0, 50, 100, 150, 200], seed=1)
    rep = aggregate_report([a, b])
    np.testing.assert_array_equal(rep.curves["r"].env_steps, [0, 100, 200])
    np.testing.assert_allclose(rep.curves["r"].mean, [0.0, 0.5, 1.0])
    assert rep.warnings
    curves, _ = write_report(rep, tmp_path / "out")
    rows = list(csv.reader(curves.open()))
    assert rows[-1][0] == "warning"


# -- CLI -------------------------------------------------------------------------------------

def test_train_artifacts_and_manifest(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--seed", "3", "--alpha", "0.25", "--out", str(out)]) == 0
    assert (out / "metrics_seed3.csv").is_file() and (out / "ckpt_seed3.npz").is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["learner"]["alpha"] == 0.25
    assert manifest["seeds"] == [3]
    assert manifest["config_sha1"] == ExperimentConfig.from_dict(manifest["config"]).content_hash()
    rows = list(csv.DictReader((out / "metrics_seed3.csv").open()))
    assert [int(r["env_steps"]) for r in rows] == [0, 100, 200, 300]
    assert all(r["wall_time_s"] == "0" for r in rows)


def test_rerun_needs_overwrite_and_is_idempotent(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    out = tmp_path / "run"
    args = ["train", "--config", str(cfg), "--seed", "0", "--out", str(out)]
    assert main(args) == 0
    first = (out / "metrics_seed0.csv").read_bytes()
    manifest = (out / "manifest.json").read_bytes()
    assert main(args) == 1
    assert "--overwrite" in capsys.readouterr().err
    assert main(args + ["--overwrite"]) == 0
    assert (out / "metrics_seed0.csv").read_bytes() == first
    assert (out / "manifest.json").read_bytes() == manifest


def test_eval_command(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--seed", "0", "--out", str(out)]) == 0
    assert main(["eval", "--config", str(cfg), "--seed", "0", "--out", str(out / "eval.csv"),
                 "--checkpoint", str(out / "ckpt_seed0.npz"), "--episodes", "4"]) == 0
    assert "eval_return_mean=" in capsys.readouterr().out
    assert len((out / "eval.csv").read_text().splitlines()) == 5


@pytest.mark.parametrize("argv, code, message", [
    (["train"], 2, "--config is required"),
    (["train", "--config", "/no/such.json"], 2, "config error: config"),
    (["eval", "--config", "CFG", "--checkpoint", "/no/ckpt.npz"], 2, "checkpoint"),
    (["train", "--config", "CFG", "--set", "learner.k=0"], 2, "learner.k"),
    (["train", "--config", "CFG", "--set", "learner.bogus=1"], 2, "learner.bogus"),
    (["report", "/no/metrics.csv"], 2, "not found"),
    (["gen-dataset", "--n", "0"], 1, "n_transitions"),
    (["gen-dataset", "--behavior", "oracle"], 1, "behavior"),
])
def test_error_contracts(tmp_path, capsys, argv, code, message):
    cfg = write_config(tmp_path / "cfg.json")
    argv = [str(cfg) if a == "CFG" else a for a in argv]
    if argv[0] == "gen-dataset":
        argv += ["--out", str(tmp_path / "d.jsonl")]
    assert main(argv) == code
    assert message in capsys.readouterr().err


def test_bad_json_config_exit_code(tmp_path, capsys):
    p = tmp_path / "cfg.json"
    p.write_text("{\n  \"seeds\": [0,,]\n}")
    assert main(["train", "--config", str(p)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_validate_prop1_cli(tmp_path, capsys):
    out = tmp_path / "p.csv"
    assert main(["validate-prop1", "--out", str(out), "--n-samples", "100000"]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [int(r["k"]) for r in rows] == [1, 2, 8, 32, 128]
    assert set(rows[0]) == {"k", "tv_distance", "n_samples", "alpha"}
    assert float(rows[-1]["tv_distance"]) < 0.02


def test_validate_prop1_small_sample_warning(tmp_path, capsys):
    out = tmp_path / "p.csv"
    assert main(["validate-prop1", "--out", str(out), "--n-samples", "500", "--ks", "1,4"]) == 0
    text = out.read_text()
    assert "warning" in text
    assert main(["validate-prop1", "--out", str(out), "--n-samples", "500", "--ks", "1,4",
                 "--overwrite"]) == 0
    assert out.read_text() == text


def test_gen_dataset_and_report_cli(tmp_path, capsys):
    ds = tmp_path / "d.jsonl"
    assert main(["gen-dataset", "--set", "env.name=\"frozenlake\"", "--n", "100", "--ratio", "0.5",
                 "--behavior", "scripted:0.7", "--k", "2", "--out", str(ds)]) == 0
    loaded = load_dataset(ds)
    assert loaded.provenance["behavior"] == "scripted:q=0.7" and loaded.provenance["k"] == 2
    cfg = dict(CHAIN, seeds=[0, 1])
    out = tmp_path / "run"
    assert main(["train", "--config", str(write_config(tmp_path / "c.json", cfg)), "--out", str(out)]) == 0
    assert main(["report", "--runs", str(out), "--out", str(tmp_path / "rep")]) == 0
    summary = list(csv.DictReader((tmp_path / "rep" / "summary.csv").open()))
    assert summary[0]["n_seeds"] == "2"
