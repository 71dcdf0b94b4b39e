import json

import pytest

from soccer_marl.cli import main

SMALL = """
trainer:
  n_envs: 2
  horizon: 8
  hidden_encoder: [8, 8]
  encoder_out: 4
  hidden_policy: [16]
  checkpoint_every: 1
curriculum:
  team_sizes: [[1, 1]]
"""


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.yaml"
    cfg.write_text(SMALL)
    rc = main(["--config", str(cfg), "--seed", "1", "train", "--out", str(root / "run"), "--epochs", "2"])
    assert rc == 0
    return root, cfg


def test_train_outputs(trained):
    root, _ = trained
    run = root / "run"
    for name in ("train_log.csv", "last.ckpt", "policy.ckpt", "training_curve.png", "epoch_000001.ckpt"):
        assert (run / name).exists(), name


def test_resume(trained):
    root, cfg = trained
    rc = main(["--config", str(cfg), "train", "--out", str(root / "run2"), "--epochs", "1",
               "--resume", str(root / "run" / "last.ckpt")])
    assert rc == 0 and (root / "run2" / "policy.ckpt").exists()


def test_eval_and_replay(trained, capsys):
    root, cfg = trained
    out = root / "eval"
    rc = main(["--config", str(cfg), "eval", "--blue", str(root / "run" / "policy.ckpt"),
               "--scenario", "equal", "offensive", "--episodes", "2", "--n-blue", "1", "--n-red", "1",
               "--trajectories", "--out", str(out)])
    assert rc == 0
    lines = [json.loads(x) for x in capsys.readouterr().out.strip().splitlines()]
    assert [d["scenario"] for d in lines] == ["Equal", "Offensive"]
    assert (out / "equal_report.csv").exists() and (out / "match_report.png").exists()
    rc = main(["--config", str(cfg), "replay", str(out / "equal_trajectories.jsonl"),
               "--plot", str(out / "traj.png")])
    assert rc == 0 and (out / "traj.png").exists()
    assert json.loads(capsys.readouterr().out)["mismatches"] == {}


def test_heatmap(trained):
    root, cfg = trained
    rc = main(["--config", str(cfg), "heatmap", "--checkpoint", str(root / "run" / "policy.ckpt"),
               "--resolution", "12", "--out", str(root / "hm" / "ball")])
    assert rc == 0
    assert (root / "hm" / "ball.csv").read_text().count("\n") == 12
    assert (root / "hm" / "ball.png").exists()


@pytest.mark.parametrize("argv", [
    ["eval", "--blue", "/nonexistent.ckpt", "--episodes", "1"],
    ["eval", "--blue", "bot", "--scenario", "midfield", "--episodes", "1"],
    ["eval", "--blue", "bot", "--n-red", "0", "--episodes", "1"],
    ["--config", "/nonexistent.yaml", "eval", "--blue", "bot"],
    ["heatmap", "--checkpoint", "/nonexistent.ckpt"],
])
def test_errors_exit_nonzero(argv, tmp_path, capsys):
    assert main(argv + (["--out", str(tmp_path)] if argv[0] == "eval" else [])) == 2
    assert "error:" in capsys.readouterr().err


def test_corrupt_checkpoint(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage" * 10)
    assert main(["heatmap", "--checkpoint", str(bad), "--out", str(tmp_path / "h")]) == 2
    assert "magic" in capsys.readouterr().err


def test_tampered_replay_exit_code(tmp_path):
    log = tmp_path / "t.jsonl"
    main(["eval", "--blue", "bot", "--scenario", "equal", "--episodes", "1", "--n-blue", "1", "--n-red", "1",
          "--duration", "5", "--trajectories", "--out", str(tmp_path)])
    lines = (tmp_path / "equal_trajectories.jsonl").read_text().splitlines()
    rec = json.loads(lines[3])
    rec["ball_pos"][0] += 0.5
    lines[3] = json.dumps(rec)
    log.write_text("\n".join(lines) + "\n")
    assert main(["replay", str(log)]) == 3


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
