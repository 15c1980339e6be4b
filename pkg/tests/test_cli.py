import json
import subprocess
import sys

import numpy as np
import pytest
from click.testing import CliRunner

from avloc.bench import SyntheticSceneSpec, generate_benchmark
from avloc.cli import main
from avloc.tensorio import save_pool


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli-bench")
    generate_benchmark(SyntheticSceneSpec(noise=0.1, seed=2), 6, path, negatives_per_scene=1)
    return path


@pytest.fixture(scope="module")
def pools(tmp_path_factory):
    path = tmp_path_factory.mktemp("pools")
    rng = np.random.default_rng(0)
    ids = [f"clip{k}" for k in range(12)]
    visual = rng.normal(size=(12, 6))
    audio = visual + 0.05 * rng.normal(size=(12, 6))
    save_pool(path / "visual", ids, visual, "visual")
    save_pool(path / "audio", ids, audio, "audio")
    return path


def invoke(runner, *args):
    result = runner.invoke(main, list(args), catch_exceptions=False)
    return result


def test_eval_reports_expected_keys(runner, bench_dir, tmp_path):
    csv_path = tmp_path / "table.csv"
    result = invoke(
        runner, "eval", "--manifest", str(bench_dir / "manifest.json"),
        "--metric", "adaptive-ciou", "--threads", "1", "--csv", str(csv_path),
    )
    assert result.exit_code == 0
    report = json.loads(result.output)
    assert "ciou_adaptive" in report["metrics"]
    assert "auc_adaptive" in report["metrics"]
    assert report["metric_config"]["fraction"] == 0.5  # full config embedded
    assert report["report_version"] == 1
    header = csv_path.read_text().splitlines()[0]
    assert header.startswith("id,")


def test_eval_embeds_all_conventions(runner, bench_dir):
    result = invoke(runner, "eval", "--manifest", str(bench_dir / "manifest.json"), "--threads", "1")
    report = json.loads(result.output)
    for key in ("success_threshold", "success_strict", "auc_step", "threshold_space"):
        assert key in report["metric_config"]
    assert report["threads"] == 1
    assert "seed" in report


def test_eval_interactive_and_seg(runner, bench_dir):
    result = invoke(runner, "eval-interactive", "--manifest", str(bench_dir / "manifest.json"),
                    "--threads", "1")
    metrics = json.loads(result.output)["metrics"]
    assert {"iiou", "iiou_adaptive", "iauc", "iauc_adaptive"} <= set(metrics)
    result = invoke(runner, "eval-seg", "--manifest", str(bench_dir / "manifest.json"),
                    "--threads", "1")
    metrics = json.loads(result.output)["metrics"]
    assert {"miou", "miou_adaptive", "fscore", "fscore_adaptive"} <= set(metrics)


def test_eval_extended_keys(runner, bench_dir):
    result = invoke(runner, "eval-extended", "--manifest", str(bench_dir / "manifest.json"),
                    "--threads", "1")
    metrics = json.loads(result.output)["metrics"]
    assert {"ap", "max_f1", "loc_acc", "num_positive", "num_negative"} <= set(metrics)
    assert metrics["num_negative"] == 6


def test_retrieve_compose_align(runner, pools):
    result = invoke(runner, "retrieve", "--visual-pool", str(pools / "visual"),
                    "--audio-pool", str(pools / "audio"), "--ks", "1,5", "--threads", "1")
    report = json.loads(result.output)
    assert report["metrics"]["audio_to_image"]["recall@1"] >= 0.5  # near-identical pools
    result = invoke(runner, "compose", "--visual-pool", str(pools / "visual"),
                    "--audio-pool", str(pools / "audio"), "--visual-id", "clip0",
                    "--audio-id", "clip1", "--lam", "1.0", "--k", "1", "--threads", "1")
    report = json.loads(result.output)
    assert report["ranked_ids"][0] == "clip0"
    result = invoke(runner, "align-report", "--visual-pool", str(pools / "visual"),
                    "--audio-pool", str(pools / "audio"), "--threads", "1")
    metrics = json.loads(result.output)["metrics"]
    assert metrics["alignment"] > 0.9
    assert metrics["magnitude_mean"] == pytest.approx(
        np.sqrt(max(0.0, 2 - 2 * metrics["alignment"])), abs=0.2
    )


def test_mine_command(runner, pools):
    result = invoke(runner, "mine", "--pool", str(pools / "visual"), "--query-id", "clip3",
                    "--k", "5", "--sample", "--seed", "7", "--threads", "1")
    report = json.loads(result.output)
    assert len(report["neighbors"]) == 5
    assert "clip3" not in report["neighbors"]
    assert report["concept"] in report["neighbors"]


def test_loss_and_grad_check(runner):
    result = invoke(runner, "loss-check", "--seed", "3", "--threads", "1")
    report = json.loads(result.output)
    assert np.isfinite(report["loss"]["total"])
    assert len(report["loss"]["per_pair_localization"]) == 3
    result = invoke(runner, "grad-check", "--seed", "7", "--instances", "3", "--threads", "1")
    report = json.loads(result.output)
    assert report["max_relative_error"] < 1e-4


def test_toy_train_command(runner, bench_dir, tmp_path):
    out_path = tmp_path / "train.json"
    result = invoke(runner, "toy-train", "--data", str(bench_dir), "--steps", "8",
                    "--threads", "1", "--out", str(out_path),
                    "--save-projections", str(tmp_path / "proj"))
    assert result.exit_code == 0
    report = json.loads(out_path.read_text())
    assert len(report["result"]["step_losses"]) == 8
    assert (tmp_path / "proj.visual.weight.avt").exists()
    from avloc.tensorio import load_projection

    loaded = load_projection(tmp_path / "proj.visual")
    assert loaded.weight.shape == (8, 8)


def test_config_file_overrides(runner, bench_dir, tmp_path):
    config = tmp_path / "conf.json"
    config.write_text(json.dumps({"metrics": {"success_threshold": 0.9}}))
    result = invoke(runner, "eval", "--manifest", str(bench_dir / "manifest.json"),
                    "--config", str(config), "--threads", "1")
    report = json.loads(result.output)
    assert report["metric_config"]["success_threshold"] == 0.9


def test_reports_byte_identical_across_runs(runner, bench_dir):
    args = ["eval", "--manifest", str(bench_dir / "manifest.json"), "--threads", "1", "--seed", "5"]
    first = invoke(runner, *args).output
    second = invoke(runner, *args).output
    assert first == second


# ---------------------------------------------------------------- subprocess-level

def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "avloc.cli", *args], capture_output=True, text=True
    )


def test_usage_error_exit_code_2():
    result = run_cli("eval", "--definitely-not-a-flag")
    assert result.returncode == 2


def test_data_error_exit_code_1():
    result = run_cli("eval", "--manifest", "/nope/missing.json")
    assert result.returncode == 1
    assert "error:" in result.stderr


def test_unknown_command_exit_code_2():
    result = run_cli("not-a-command")
    assert result.returncode == 2


def test_env_var_thread_fallback(bench_dir):
    import os

    env = dict(os.environ, AVLOC_THREADS="2")
    result = subprocess.run(
        [sys.executable, "-m", "avloc.cli", "eval", "--manifest",
         str(bench_dir / "manifest.json")],
        capture_output=True, text=True, env=env,
    )
    assert result.returncode == 0
    assert json.loads(result.stdout)["threads"] == 2
