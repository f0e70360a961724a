"""
Tests for the command-line entry point: output contracts, exit codes and
wiring between commands.
"""

import json

import numpy as np
import pytest

import main as cli
from main import main
from numerics.gradcheck import GradCheckReport
from numerics.tensor import Tensor
from services.image_codec import write_pnm
from utils.errors import DivergenceError

TINY = {
    "image_height": 16,
    "image_width": 16,
    "grid_side": 4,
    "knn": 3,
    "feature_dim": 8,
    "gc_heads": 2,
    "attn_heads": 2,
    "block_count": 2,
    "stage_count": 1,
    "batch_size": 2,
    "learning_rate": 0.01,
    "val_fraction": 0.25,
}


@pytest.fixture
def tiny_config_file(tmp_path):
    """Flat JSON config for the tiny model."""
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


@pytest.fixture
def synth_dir(tmp_path):
    """Four 16x16 synthetic images on disk."""
    out = tmp_path / "data"
    assert main(["synth", "--out", str(out), "--n", "4", "--seed", "1", "--size", "16x16"]) == 0
    return out


@pytest.fixture
def trained(tmp_path, synth_dir, tiny_config_file, capsys):
    """Checkpoint from a two-epoch tiny run."""
    checkpoint = tmp_path / "model.ckpt"
    code = main([
        "train", "--data", str(synth_dir), "--config", str(tiny_config_file),
        "--epochs", "2", "--checkpoint", str(checkpoint),
    ])
    assert code == 0
    capsys.readouterr()
    return checkpoint


def test_synth_writes_images_and_labels(synth_dir):
    """--n 4 gives four PGMs and a five-line labels file."""
    assert len(list(synth_dir.glob("*.pgm"))) == 4
    assert len((synth_dir / "labels.csv").read_text().splitlines()) == 5


def test_synth_is_byte_identical(tmp_path):
    """Repeated invocations write identical files."""
    for name in ("first", "second"):
        assert main(["synth", "--out", str(tmp_path / name), "--n", "2", "--seed", "1"]) == 0
    for path in (tmp_path / "first").iterdir():
        assert path.read_bytes() == (tmp_path / "second" / path.name).read_bytes()


def test_synth_rejects_zero_count(tmp_path, capsys):
    """--n 0 exits 2 without creating the directory."""
    out = tmp_path / "never"
    assert main(["synth", "--out", str(out), "--n", "0"]) == 2
    assert "n must be" in capsys.readouterr().err
    assert not out.exists()


def test_synth_bad_size(tmp_path):
    """A malformed --size is a usage error."""
    assert main(["synth", "--out", str(tmp_path), "--n", "1", "--size", "big"]) == 2


def test_train_prints_epoch_lines_and_checkpoint(tmp_path, synth_dir, tiny_config_file, capsys):
    """Each epoch prints one tab-separated line; the checkpoint is written."""
    checkpoint = tmp_path / "model.ckpt"
    log = tmp_path / "epochs.csv"
    code = main([
        "train", "--data", str(synth_dir), "--config", str(tiny_config_file),
        "--epochs", "3", "--checkpoint", str(checkpoint), "--log", str(log),
    ])
    out = capsys.readouterr().out.splitlines()
    assert code == 0
    assert checkpoint.exists()
    epoch_lines = [line for line in out if line.count("\t") == 2]
    assert [line.split("\t")[0] for line in epoch_lines] == ["1", "2", "3"]
    assert out[-1].startswith("mean_val_mae=")
    assert len(log.read_text().splitlines()) == 1 + 3


def test_train_is_deterministic(tmp_path, synth_dir, tiny_config_file, capsys):
    """Identical flags give identical logs and checkpoints."""
    outputs, checkpoints = [], []
    for name in ("a", "b"):
        checkpoint = tmp_path / f"{name}.ckpt"
        main([
            "train", "--data", str(synth_dir), "--config", str(tiny_config_file),
            "--epochs", "2", "--checkpoint", str(checkpoint),
        ])
        outputs.append(capsys.readouterr().out)
        checkpoints.append(checkpoint.read_bytes())
    assert outputs[0] == outputs[1]
    assert checkpoints[0] == checkpoints[1]


def test_train_repeats_use_consecutive_seeds(synth_dir, tiny_config_file, mocker, capsys):
    """--repeats 3 trains with seed, seed+1 and seed+2."""
    spy = mocker.spy(cli, "train")
    main([
        "train", "--data", str(synth_dir), "--config", str(tiny_config_file),
        "--epochs", "1", "--seed", "5", "--repeats", "3",
    ])
    seeds = [(call.args[1].seed, call.args[2].seed) for call in spy.call_args_list]
    assert seeds == [(5, 5), (6, 6), (7, 7)]
    assert "repeat" in capsys.readouterr().err


def test_train_zero_epochs_rejected(synth_dir, tiny_config_file, tmp_path):
    """--epochs 0 exits 2 and writes nothing."""
    checkpoint = tmp_path / "never.ckpt"
    code = main([
        "train", "--data", str(synth_dir), "--config", str(tiny_config_file),
        "--epochs", "0", "--checkpoint", str(checkpoint),
    ])
    assert code == 2
    assert not checkpoint.exists()


def test_train_unknown_config_key_rejected(synth_dir, tmp_path):
    """Config files may only use known keys."""
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"dropout": 0.1}))
    assert main(["train", "--data", str(synth_dir), "--config", str(config)]) == 2


@pytest.mark.parametrize("flag", ["--checkpoint", "--log"])
def test_train_unwritable_output_fails_before_training(flag, synth_dir, tiny_config_file, tmp_path, capsys):
    """A missing output directory exits 2 with nothing printed or written."""
    target = tmp_path / "missing_dir" / "out.file"
    code = main([
        "train", "--data", str(synth_dir), "--config", str(tiny_config_file),
        "--epochs", "2", flag, str(target),
    ])
    assert code == 2
    assert capsys.readouterr().out == ""
    assert not target.parent.exists()


def test_train_output_path_may_not_be_directory(synth_dir, tiny_config_file, tmp_path, mocker, capsys):
    """--checkpoint naming an existing directory is rejected before training."""
    spy = mocker.spy(cli, "train")
    code = main([
        "train", "--data", str(synth_dir), "--config", str(tiny_config_file),
        "--checkpoint", str(tmp_path),
    ])
    assert code == 2
    assert spy.call_count == 0
    assert capsys.readouterr().out == ""


def test_train_divergence_exits_3(synth_dir, tiny_config_file, mocker):
    """A diverging run maps to exit code 3."""
    mocker.patch("main.train", side_effect=DivergenceError("non-finite loss", epoch=1, step=1))
    assert main(["train", "--data", str(synth_dir), "--config", str(tiny_config_file)]) == 3


def test_eval_prints_mae(trained, synth_dir, capsys):
    """eval prints mae=<4 decimals>, identically on repeat."""
    results = []
    for _ in range(2):
        assert main(["eval", "--data", str(synth_dir), "--checkpoint", str(trained)]) == 0
        results.append(capsys.readouterr().out.strip())
    assert results[0] == results[1]
    assert results[0].startswith("mae=")
    assert len(results[0].split(".")[1]) == 4


def test_eval_bad_magic(trained, synth_dir, capsys):
    """A corrupted checkpoint exits 2 with 'bad magic'."""
    trained.write_bytes(b"NOTMAGIC" + trained.read_bytes()[8:])
    assert main(["eval", "--data", str(synth_dir), "--checkpoint", str(trained)]) == 2
    assert "bad magic" in capsys.readouterr().err


def test_infer_prints_age(trained, synth_dir, capsys):
    """infer prints age=<2 decimals>, identically on repeat."""
    image = sorted(synth_dir.glob("*.pgm"))[0]
    results = []
    for _ in range(2):
        assert main(["infer", "--image", str(image), "--checkpoint", str(trained)]) == 0
        results.append(capsys.readouterr().out.strip())
    assert results[0] == results[1]
    assert results[0].startswith("age=")
    assert len(results[0].split(".")[1]) == 2


def test_infer_rejects_non_pnm(trained, tmp_path):
    """A file that is not PGM/PPM exits 2."""
    bogus = tmp_path / "photo.jpg"
    bogus.write_bytes(b"\xff\xd8\xff\xe0 not a pnm")
    assert main(["infer", "--image", str(bogus), "--checkpoint", str(trained)]) == 2


def test_infer_rejects_wrong_size(trained, tmp_path):
    """An image of another size exits 2."""
    image = tmp_path / "big.pgm"
    write_pnm(image, Tensor(np.zeros((32, 32, 1))))
    assert main(["infer", "--image", str(image), "--checkpoint", str(trained)]) == 2


def test_gradcheck_failure_exits_4(mocker, capsys):
    """A report above tolerance exits 4 naming the worst parameter."""
    mocker.patch(
        "main.grad_check",
        return_value=GradCheckReport(max_rel_error=0.5, worst_parameter="head.k_h2", worst_index=3, scalar_count=10),
    )
    assert main(["gradcheck", "--corrupt-backward"]) == 4
    assert "head.k_h2" in capsys.readouterr().out


def test_gradcheck_passes_fault_scale(mocker):
    """--corrupt-backward forwards a non-unit fault scale."""
    check = mocker.patch("main.grad_check", return_value=GradCheckReport(max_rel_error=0.0, scalar_count=1))
    assert main(["gradcheck", "--seed", "2"]) == 0
    assert check.call_args.kwargs["fault_scale"] == 1.0
    main(["gradcheck", "--corrupt-backward"])
    assert check.call_args.kwargs["fault_scale"] != 1.0


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1])
def test_gradcheck_real_run(seed, capsys):
    """The real check passes at two seeds."""
    assert main(["gradcheck", "--seed", str(seed)]) == 0
    assert capsys.readouterr().out.startswith("max_rel_error=")


@pytest.mark.slow
def test_gradcheck_corrupted_backward_real_run():
    """The negative control fails with exit 4."""
    assert main(["gradcheck", "--corrupt-backward"]) == 4


def test_inspect_graph_constant_image(tmp_path, capsys):
    """A constant image gives an all-tie complete graph, identical across runs."""
    config = tmp_path / "graph.json"
    config.write_text(json.dumps({**TINY, "knn": 15}))
    image = tmp_path / "flat.pgm"
    write_pnm(image, Tensor(np.full((16, 16, 1), 128.0)))

    dumps = []
    for name in ("a.tsv", "b.tsv"):
        out = tmp_path / name
        assert main(["inspect-graph", "--image", str(image), "--config", str(config), "--out", str(out)]) == 0
        dumps.append(out.read_text())
    assert dumps[0] == dumps[1]
    assert len(dumps[0].splitlines()) == 16 * 15
    assert "ties" in capsys.readouterr().err


def test_inspect_graph_missing_image(tmp_path):
    """An unreadable image exits 2."""
    assert main(["inspect-graph", "--image", str(tmp_path / "absent.pgm")]) == 2


def test_unknown_command_is_usage_error():
    """argparse failures map to exit 2."""
    assert main(["explode"]) == 2


def test_inspect_graph_help_names_pixel_patches():
    """The command help says the dump is built over raw pixel patches."""
    assert "raw pixel patches" in " ".join(cli.build_parser().format_help().split())
