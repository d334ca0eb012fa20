import json
import math

import pytest

from stairprep import cli
from stairprep import experiment as exp
from stairprep import serialization as ser
from stairprep.circuit import identity_circuit
from stairprep.errors import NumericalError
from stairprep.experiment import ConfigError, ExperimentConfig, TargetSpec, parse_config
from stairprep.mps import product_state
from stairprep.optimizer import TrainConfig


def small_config(tmp_path, run_id="ghz", **train):
    train = {"epochs_per_stage": 60, **train}
    return ExperimentConfig(
        run_id=run_id,
        output_dir=str(tmp_path),
        n_layers=2,
        target=TargetSpec(kind="ghz", n_sites=4),
        train=TrainConfig(**train),
    )


def write_config(tmp_path, config, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(exp.dump_config(config))
    return path


def test_config_roundtrip():
    config = ExperimentConfig(run_id="x", target=TargetSpec(kind="random-mps", chi=4, ensemble="isometric"),
                              train=TrainConfig(eta0=0.02, chi_evolve=8))
    assert parse_config(exp.dump_config(config)) == config


@pytest.mark.parametrize(
    "text",
    [
        "typo: 1\n",
        "target: {kind: heisenberg-gs, chii: 4}\n",
        "train: {eta: 0.1}\n",
        "version: 3\n",
        "target: {kind: bogus}\n",
        "n_layers: 0\n",
        "train: {optimizer: sgd}\n",
        "[1, 2\n",
        "target: {kind: mps-file}\n",
    ],
)
def test_config_rejections(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_output_root_env(monkeypatch, tmp_path):
    monkeypatch.setenv(exp.OUTPUT_ROOT_ENV, str(tmp_path))
    assert ExperimentConfig(run_id="abc").run_dir() == tmp_path / "abc"


def test_build_target_heisenberg_two_sites(tmp_path):
    config = ExperimentConfig(run_id="h2", output_dir=str(tmp_path), target=TargetSpec(n_sites=2, chi=2))
    exp.cmd_build_target(config)
    meta = ser.read_json(tmp_path / "h2" / "target_meta.json")
    assert meta["energy"] == pytest.approx(-0.75, abs=1e-10)
    assert meta["converged"] in (True, False) and meta["sweeps_used"] >= 1


def test_build_target_random_deterministic(tmp_path):
    spec = TargetSpec(kind="random-mps", n_sites=48, chi=32, seed=7)
    for run_id in ("a", "b"):
        exp.cmd_build_target(ExperimentConfig(run_id=run_id, output_dir=str(tmp_path), target=spec))
    assert (tmp_path / "a" / "target.json").read_bytes() == (tmp_path / "b" / "target.json").read_bytes()
    meta = ser.read_json(tmp_path / "a" / "target_meta.json")
    assert 0 < meta["mid_entropy"] <= math.log(32)
    assert len(meta["entropies"]) == 47


def test_train_outputs_and_reproducibility(tmp_path):
    run = exp.cmd_train(small_config(tmp_path / "one", entropy_every=7))
    assert {p.name for p in run.iterdir()} >= {
        "config.yaml", "target.json", "target_meta.json", "metrics.csv", "timing.csv",
        "entropy_profiles.csv", "stages.csv", "checkpoint.json", "checkpoints",
    }
    rows = ser.read_csv(run / "metrics.csv")
    assert list(rows[0]) == exp.METRICS_HEADER
    assert {r["n_layers"] for r in rows} == {"1", "2"}
    stages = ser.read_csv(run / "stages.csv")
    assert [s["n_layers"] for s in stages] == ["1", "2"]
    assert (run / "checkpoints" / "stage_1.json").exists()
    profiles = ser.read_csv(run / "entropy_profiles.csv")
    epochs = [int(p["epoch"]) for p in profiles]
    stage_ends = {int(s["epochs"]) for s in stages[:1]} | {len(rows)}
    assert all(e % 7 == 0 or e in stage_ends for e in epochs)
    assert stage_ends <= set(epochs)
    again = exp.cmd_train(small_config(tmp_path / "two", entropy_every=7))
    assert (again / "metrics.csv").read_bytes() == (run / "metrics.csv").read_bytes()


def test_train_target_mismatch(tmp_path):
    config = small_config(tmp_path)
    target = tmp_path / "t.json"
    ser.save_mps(target, product_state([0] * 5))
    with pytest.raises(exp.ArgumentError):
        exp.cmd_train(config, target)


def test_eval_identity_checkpoint(tmp_path):
    ser.save_checkpoint(tmp_path / "c.json", identity_circuit(6, 1))
    ser.save_mps(tmp_path / "t.json", product_state([0] * 6))
    report = exp.cmd_eval(tmp_path / "c.json", tmp_path / "t.json", out_path=tmp_path / "r.json")
    assert report["loss_F"] == 0
    assert report["entropy_bound_ok"] and report["max_entropy"] <= math.log(4)
    assert json.loads((tmp_path / "r.json").read_text())["circuit_param_count"] == 80


def test_eval_compression_ratio_at_scale(tmp_path):
    from stairprep.mps import random_mps

    report = exp.evaluate(identity_circuit(48, 1), random_mps(48, 64, 0), chi_evolve=4)
    assert report["compression_ratio"] == pytest.approx(1.994e-3, abs=1e-6)
    assert report["mps_param_count"] == 377088


def test_report_tables(tmp_path):
    exp.cmd_train(small_config(tmp_path, "r1"))
    out = exp.cmd_report(tmp_path)
    layers = ser.read_csv(out["f_vs_layers"])
    assert [r["n_layers"] for r in layers] == ["1", "2"]
    assert len(ser.read_csv(out["f_vs_entropy"])) == 2
    matrix = ser.read_csv(out["entropy_matrices"]["r1"])
    assert len(matrix[0]) == 1 + 3
    assert len(matrix) == len(ser.read_csv(tmp_path / "r1" / "entropy_profiles.csv"))


def test_report_partial_run(tmp_path):
    run = exp.cmd_train(small_config(tmp_path, "p"))
    (run / "stages.csv").unlink()
    layers = ser.read_csv(exp.cmd_report(tmp_path)["f_vs_layers"])
    assert len(layers) == 2


def test_report_empty_directory(tmp_path):
    with pytest.raises(exp.ArgumentError):
        exp.cmd_report(tmp_path)


# --- command line -------------------------------------------------------


def test_cli_show_config_flags(capsys):
    assert cli.main(["show-config", "--kind", "xy-gs", "--n-sites", "6", "--eta0", "0.5", "--train-seed", "4"]) == 0
    config = parse_config(capsys.readouterr().out)
    assert config.target.kind == "xy-gs" and config.target.n_sites == 6
    assert config.train.eta0 == 0.5 and config.train.seed == 4


def test_cli_train_eval_report(tmp_path, capsys):
    cfg = write_config(tmp_path, small_config(tmp_path / "runs", "c1"))
    assert cli.main(["train", "--config", str(cfg)]) == 0
    capsys.readouterr()
    run = tmp_path / "runs" / "c1"
    assert cli.main(["eval", "--checkpoint", str(run / "checkpoint.json"), "--target", str(run / "target.json")]) == 0
    assert "loss_F" in json.loads(capsys.readouterr().out)
    assert cli.main(["report", str(tmp_path / "runs")]) == 0
    assert (tmp_path / "runs" / "f_vs_layers.csv").exists()


def test_cli_build_target(tmp_path):
    code = cli.main(["build-target", "--kind", "random-mps", "--n-sites", "6", "--chi", "2",
                     "--output-dir", str(tmp_path), "--run-id", "rt"])
    assert code == 0 and (tmp_path / "rt" / "target.json").exists()


def test_cli_batch(tmp_path, capsys):
    paths = [write_config(tmp_path, small_config(tmp_path / "runs", f"b{i}", epochs_per_stage=5), f"b{i}.yaml")
             for i in range(2)]
    assert cli.main(["batch", "--jobs", "2"] + [str(p) for p in paths]) == 0
    assert (tmp_path / "runs" / "b1" / "checkpoint.json").exists()


def test_cli_exit_codes(tmp_path):
    assert cli.main(["train", "--kind", "bogus"]) == cli.EXIT_ARGS
    assert cli.main(["train", "--config", str(tmp_path / "missing.yaml")]) == cli.EXIT_ARGS
    assert cli.main(["report", str(tmp_path)]) == cli.EXIT_ARGS
    ser.save_checkpoint(tmp_path / "c.json", identity_circuit(4, 1))
    ser.save_mps(tmp_path / "t.json", product_state([0] * 5))
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "c.json"), "--target", str(tmp_path / "t.json")]) == cli.EXIT_ARGS
    with pytest.raises(SystemExit) as info:
        cli.main(["no-such-command"])
    assert info.value.code == cli.EXIT_ARGS


def test_cli_numerical_abort_keeps_partial_log(tmp_path, monkeypatch):
    real = exp.grow_and_train

    def failing(target, n_layers, config, **kw):
        on_epoch = kw["on_epoch"]

        def stop(rec):
            on_epoch(rec)
            if rec.epoch == 3:
                raise NumericalError("injected")

        return real(target, n_layers, config, on_epoch=stop, on_stage=kw["on_stage"])

    monkeypatch.setattr(exp, "grow_and_train", failing)
    cfg = write_config(tmp_path, small_config(tmp_path / "runs", "bad"))
    assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_NUMERICAL
    assert len(ser.read_csv(tmp_path / "runs" / "bad" / "metrics.csv")) == 3


def test_cli_capacity_exit(tmp_path, monkeypatch):
    from stairprep.errors import CapacityError

    def boom(*a, **k):
        raise CapacityError("too big")

    monkeypatch.setattr(exp, "cmd_build_target", boom)
    assert cli.main(["build-target", "--output-dir", str(tmp_path)]) == cli.EXIT_CAPACITY
