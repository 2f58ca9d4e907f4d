import dataclasses
import json
import struct
from pathlib import Path

import numpy as np
import numpy.testing as npt
import pytest

from plunet.arch import build, init_params, preset, scaled
from plunet.data import SplitSpec, synth_generate
from plunet.engine import DType, Tensor
from plunet.errors import CheckpointError, DataError, ParseError, ShapeError
from plunet.names import Variant
from plunet.train import (
    AdamConfig,
    AdamState,
    Checkpoint,
    DataSource,
    TrainConfig,
    adam_step,
    apply_overrides,
    decode_checkpoint,
    encode_checkpoint,
    evaluate,
    load_checkpoint,
    parse_train_config,
    resume,
    save_checkpoint,
    train,
)
from plunet.train.loop import batches, check_channels

TINY = scaled(preset(Variant.plunet), 16)


def _config(out: Path, epochs: int = 2) -> TrainConfig:
    return TrainConfig(
        arch=TINY,
        epochs=epochs,
        batch_size=4,
        data=DataSource(synth_count=10, synth_size=(32, 32)),
        out=out,
    )


def _checkpoint(seed: int = 0) -> Checkpoint:
    model = build(TINY)
    return Checkpoint(TINY, init_params(model, seed), AdamState(), epoch=3, extra=dict(best_f1=0.25))


def _vector(*values: float) -> Tensor:
    return Tensor(np.array(values).reshape(1, len(values), 1, 1))


def test_adam_first_step_should_move_by_learning_rate():
    param = _vector(1.0, -2.0)
    grad = np.array([1.0, -0.5]).reshape(1, 2, 1, 1)

    state = adam_step({"w": param}, {"w": grad}, AdamState(), AdamConfig())

    assert state.step == 1
    npt.assert_allclose(state.m["w"] / (1 - 0.5), grad)
    npt.assert_allclose(state.v["w"] / (1 - 0.999), grad**2)
    npt.assert_allclose(param.data.reshape(-1) - [1.0, -2.0], [-2.99999997e-4, 2.99999994e-4], rtol=1e-7)


def test_adam_should_use_bias_corrected_moments():
    param = _vector(0.0)
    state = AdamState()
    config = AdamConfig(lr=0.1, beta1=0.9, beta2=0.99)

    for _ in range(3):
        adam_step({"w": param}, {"w": np.full((1, 1, 1, 1), 2.0)}, state, config)

    # a constant gradient gives m_hat == g and v_hat == g^2 at every step
    assert state.step == 3
    npt.assert_allclose(param.data.reshape(-1), [-0.3], rtol=1e-6)


def test_adam_should_reject_gradient_shape_mismatch():
    param = _vector(0.0, 0.0, 0.0)
    with pytest.raises(ShapeError):
        adam_step({"w": param}, {"w": np.zeros((1, 4, 1, 1))}, AdamState())

    npt.assert_array_equal(param.data, 0.0)


def test_adam_config_should_reject_invalid_betas():
    with pytest.raises(AssertionError):
        AdamConfig(beta1=1.0)


def test_checkpoint_should_round_trip_bytes():
    checkpoint = _checkpoint()
    learnable = checkpoint.params.learnable
    name = next(iter(learnable))
    adam_step(learnable, {n: np.ones_like(t.data) for n, t in learnable.items()}, checkpoint.state)

    buffer = encode_checkpoint(checkpoint)
    decoded = decode_checkpoint(buffer)

    assert encode_checkpoint(decoded) == buffer
    assert decoded.arch == TINY
    assert decoded.epoch == 3 and decoded.extra == {"best_f1": 0.25}
    assert decoded.state.step == 1
    npt.assert_array_equal(decoded.params[name].data, checkpoint.params[name].data)
    npt.assert_array_equal(decoded.state.v[name], checkpoint.state.v[name])


def test_checkpoint_should_reject_bad_magic():
    buffer = encode_checkpoint(_checkpoint())
    with pytest.raises(CheckpointError):
        decode_checkpoint(b"XXXX" + buffer[4:])


def test_checkpoint_should_reject_truncated_buffers():
    buffer = encode_checkpoint(_checkpoint())
    with pytest.raises(CheckpointError):
        decode_checkpoint(buffer[:-10])


def test_checkpoint_should_reject_snapshots_without_architecture():
    checkpoint = _checkpoint()
    buffer = encode_checkpoint(checkpoint)
    snapshot = json.dumps(
        dict(arch=TINY.to_dict(), step=0, epoch=3, extra=checkpoint.extra), sort_keys=True
    ).encode()
    assert buffer.endswith(snapshot)

    stripped = json.dumps(dict(step=0, epoch=3)).encode()
    buffer = buffer[: -len(snapshot) - 4] + struct.pack("<I", len(stripped)) + stripped

    with pytest.raises(CheckpointError):
        decode_checkpoint(buffer)


def test_checkpoint_should_reject_tensors_of_another_architecture(tmp_path: Path):
    checkpoint = _checkpoint()
    other = Checkpoint(scaled(preset(Variant.unet), 16), checkpoint.params)
    path = tmp_path / "model.plw"
    path.write_bytes(encode_checkpoint(other))

    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_missing_checkpoint_should_raise_os_error(tmp_path: Path):
    with pytest.raises(OSError):
        load_checkpoint(tmp_path / "missing.plw")


def test_train_config_should_parse_toml(tmp_path: Path):
    path = tmp_path / "train.toml"
    path.write_text(
        """
        seed = 3
        epochs = 5
        batch_size = 2
        dtype = "f64"

        [arch]
        preset = "lunet"
        width_scale = 8

        [optimizer]
        lr = 0.001

        [data]
        synth_count = 12
        synth_size = [32, 48]

        [split]
        train = 0.5
        val = 0.25
        test = 0.25
        """
    )

    config = parse_train_config(path)

    assert (config.seed, config.epochs, config.batch_size, config.dtype) == (3, 5, 2, DType.f64)
    assert config.arch == scaled(preset(Variant.lunet), 8)
    assert config.optimizer == AdamConfig(lr=0.001)
    assert config.data == DataSource(synth_count=12, synth_size=(32, 48))
    assert config.split == SplitSpec(0.5, 0.25, 0.25)


def test_overrides_should_win_over_file_values(tmp_path: Path):
    path = tmp_path / "train.toml"
    path.write_text("epochs = 5\nseed = 1\n")

    config = parse_train_config(path, epochs=9, seed=None)

    assert config.epochs == 9
    assert config.seed == 1
    assert apply_overrides(config) is config


def test_train_config_should_reject_unknown_sections(tmp_path: Path):
    path = tmp_path / "train.toml"
    path.write_text("[scheduler]\nkind = 'cosine'\n")
    with pytest.raises(ParseError):
        parse_train_config(path)


def test_train_config_should_reject_invalid_toml(tmp_path: Path):
    path = tmp_path / "train.toml"
    path.write_text("epochs = \n")
    with pytest.raises(ParseError):
        parse_train_config(path)


def test_train_config_should_reject_invalid_values(tmp_path: Path):
    path = tmp_path / "train.toml"
    path.write_text("batch_size = -2\n")
    with pytest.raises(AssertionError):
        parse_train_config(path)


def test_train_config_should_reject_flattened_section_keys(tmp_path: Path):
    path = tmp_path / "train.toml"
    path.write_text("optimizer_lr = 0.1\n")
    with pytest.raises(ParseError):
        parse_train_config(path)


def test_train_config_should_reject_fields_next_to_an_arch_file(tmp_path: Path):
    arch_file = tmp_path / "arch.json"
    arch_file.write_text(json.dumps(TINY.to_dict()))
    path = tmp_path / "train.toml"
    path.write_text(f"[arch]\nconfig = '{arch_file.as_posix()}'\ndepth = 2\n")

    with pytest.raises(ParseError):
        parse_train_config(path)


def test_train_config_should_reject_preset_and_variant_together(tmp_path: Path):
    path = tmp_path / "train.toml"
    path.write_text("[arch]\npreset = 'plunet'\nvariant = 'unet'\n")
    with pytest.raises(ParseError):
        parse_train_config(path)


def test_train_config_should_apply_arch_field_overrides(tmp_path: Path):
    path = tmp_path / "train.toml"
    path.write_text("[arch]\npreset = 'plunet'\nse_reduction = 8\n")

    config = parse_train_config(path)

    assert config.arch.se_reduction == 8
    assert config.arch.widths == preset(Variant.plunet).widths


def test_batches_should_keep_the_short_last_batch():
    assert [list(b) for b in batches(list(range(7)), 3)] == [[0, 1, 2], [3, 4, 5], [6]]


def test_training_should_write_log_and_checkpoints(tmp_path: Path):
    result = train(_config(tmp_path), verbose=False)

    lines = [json.loads(line) for line in (tmp_path / "train.jsonl").read_text().splitlines()]
    assert [entry["epoch"] for entry in lines] == [1, 2]
    assert set(lines[0]) == {"epoch", "step", "train_loss", "val_pc", "val_se", "val_f1", "val_js"}
    assert lines[-1]["step"] == 4
    assert result.log == lines

    assert (tmp_path / "last.plw").exists() and (tmp_path / "best.plw").exists()
    assert load_checkpoint(tmp_path / "last.plw").epoch == 2
    assert (len(result.split.train), len(result.split.val), len(result.split.test)) == (6, 2, 2)


def test_training_should_be_reproducible(tmp_path: Path):
    first = train(_config(tmp_path / "a"), verbose=False)
    second = train(_config(tmp_path / "b"), verbose=False)

    assert first.log == second.log
    assert (tmp_path / "a" / "last.plw").read_bytes() == (tmp_path / "b" / "last.plw").read_bytes()


def test_resumed_training_should_match_an_uninterrupted_run(tmp_path: Path):
    train(_config(tmp_path / "full", epochs=3), verbose=False)

    train(_config(tmp_path / "resumed", epochs=2), verbose=False)
    result = resume(_config(tmp_path / "resumed", epochs=3), tmp_path / "resumed" / "last.plw", verbose=False)

    assert [entry["epoch"] for entry in result.log] == [1, 2, 3]
    assert (tmp_path / "full" / "train.jsonl").read_text() == (tmp_path / "resumed" / "train.jsonl").read_text()
    assert (tmp_path / "full" / "last.plw").read_bytes() == (tmp_path / "resumed" / "last.plw").read_bytes()


def test_resume_should_reject_another_architecture(tmp_path: Path):
    train(_config(tmp_path), verbose=False)
    config = TrainConfig(
        arch=scaled(preset(Variant.unet), 16), epochs=3, data=DataSource(synth_count=10, synth_size=(32, 32)),
        out=tmp_path,
    )

    with pytest.raises(ShapeError):
        resume(config, tmp_path / "last.plw", verbose=False)


def test_checkpoints_should_carry_the_training_settings(tmp_path: Path):
    config = _config(tmp_path)
    train(config, verbose=False)

    extra = load_checkpoint(tmp_path / "last.plw").extra

    assert extra["train"] == json.loads(json.dumps(config.to_dict()))
    assert extra["train"]["epochs"] == 2 and extra["train"]["optimizer"]["lr"] == config.optimizer.lr
    assert "out" not in extra["train"]
    assert TrainConfig(arch=TINY, out=tmp_path / "other").to_dict() == TrainConfig(arch=TINY).to_dict()


def test_resumed_best_should_not_follow_later_updates(tmp_path: Path):
    train(_config(tmp_path, epochs=2), verbose=False)
    saved = load_checkpoint(tmp_path / "last.plw")
    # no validation F1 can beat 2.0, so the resumed epoch never improves
    save_checkpoint(dataclasses.replace(saved, extra=dict(best_f1=2.0)), tmp_path / "last.plw")
    (tmp_path / "best.plw").unlink()

    result = resume(_config(tmp_path, epochs=3), tmp_path / "last.plw", verbose=False)

    assert result.last.epoch == 3
    assert result.best.epoch == 2
    assert not (tmp_path / "best.plw").exists()
    for name in saved.params:
        npt.assert_array_equal(result.best.params[name].data, saved.params[name].data)


def test_first_epoch_should_be_best_whatever_its_loss(tmp_path: Path, monkeypatch: pytest.MonkeyPatch):
    monkeypatch.setattr("plunet.train.loop.train_step", lambda *args: 5.0)
    config = TrainConfig(
        arch=TINY, epochs=1, batch_size=4, data=DataSource(synth_count=5, synth_size=(32, 32)),
        split=SplitSpec(0.6, 0.1, 0.3), out=tmp_path,
    )

    result = train(config, verbose=False)

    assert not result.split.val
    assert result.log[0]["train_loss"] == 5.0
    assert result.best.epoch == 1
    assert (tmp_path / "best.plw").exists()
    assert load_checkpoint(tmp_path / "best.plw").extra["best_f1"] == -5.0


def test_evaluate_should_reject_empty_sample_lists():
    with pytest.raises(DataError):
        evaluate(_checkpoint(), [])


def test_evaluate_should_report_metrics_in_unit_interval():
    report = evaluate(_checkpoint(), synth_generate(3, 32, 32, seed=5))

    assert report.n_images == 3
    for score in (report.scores.pc, report.scores.se, report.scores.f1, report.scores.js):
        assert 0.0 <= score <= 1.0


def test_samples_should_match_the_model_channels():
    samples = synth_generate(1, 32, 32, seed=0)
    with pytest.raises(ShapeError):
        check_channels(build(scaled(preset(Variant.plunet, in_channels=1), 16)), samples)


def test_samples_should_match_the_model_size_multiple():
    samples = synth_generate(1, 36, 36, seed=0)
    with pytest.raises(ShapeError):
        check_channels(build(TINY), samples)


@pytest.mark.slow
def test_desk_scale_plunet_should_segment_synthetic_shapes(tmp_path: Path):
    config = TrainConfig(
        arch=scaled(preset(Variant.plunet), 4),
        epochs=30,
        batch_size=4,
        data=DataSource(synth_count=200, synth_size=(64, 64)),
        out=tmp_path,
    )

    result = train(config, verbose=False)
    report = evaluate(result.best, result.split.test)

    assert report.scores.f1 >= 0.90
    assert report.scores.js >= 0.82
