import json
from pathlib import Path

import numpy as np
import pytest

from plunet.analysis import count_params
from plunet.arch import ArchConfig, NodeKind, build, check_input, forward, init_params, preset, scaled
from plunet.engine import DType, Tensor
from plunet.errors import ParseError, ShapeError
from plunet.names import BlockKind, Mode, Variant
from plunet.nn import ParameterRegistry

SMALL = 16


def _small(variant: Variant) -> ArchConfig:
    return scaled(preset(variant), SMALL)


def test_presets_should_have_golden_parameter_totals():
    assert count_params(build(preset(Variant.unet))).total == 31_043_521
    assert count_params(build(preset(Variant.plunet))).total == 6_524_633


def test_preset_totals_should_lie_near_published_figures():
    assert abs(count_params(build(preset(Variant.unet))).total / 34.53e6 - 1) <= 0.2
    assert abs(count_params(build(preset(Variant.plunet))).total / 6.22e6 - 1) <= 0.2


def test_registry_size_should_match_parameter_count():
    model = build(_small(Variant.plunet))
    assert init_params(model, seed=0).size == count_params(model).total


def test_plunet_should_have_three_pools_three_ups_and_a_ps_bottleneck():
    model = build(preset(Variant.plunet))

    assert len(model.of_kind(NodeKind.pool)) == 3
    assert len(model.of_kind(NodeKind.up)) == 3
    bottleneck = model["bottleneck"].block
    assert bottleneck is not None and bottleneck.spec.kind is BlockKind.ps
    assert bottleneck.spec.in_channels == 256 and bottleneck.spec.out_channels == 512


def test_unet_should_have_four_levels_of_conv_blocks():
    model = build(preset(Variant.unet))

    assert len(model.of_kind(NodeKind.pool)) == 4
    assert {node.block.spec.kind for node in model.of_kind(NodeKind.block) if node.block} == {BlockKind.conv_block}


def test_skips_should_join_encoder_levels_to_decoder_levels():
    model = build(preset(Variant.plunet))
    assert model.skips == [("enc3", "cat3"), ("enc2", "cat2"), ("enc1", "cat1")]


def test_decoder_blocks_should_receive_skip_plus_upsampled_channels():
    model = build(preset(Variant.lunet))
    for level, width in enumerate((64, 128, 256, 512), start=1):
        decoder = model[f"dec{level}"].block
        assert decoder is not None
        assert decoder.spec.in_channels == 2 * width and decoder.spec.out_channels == width


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("size", [(96, 96), (224, 224), (384, 288)])
def test_every_preset_should_return_a_mask_of_input_size(variant, size):
    model = build(_small(variant))
    params = init_params(model, seed=0)
    x = Tensor(np.random.default_rng(0).uniform(0, 1, (1, 3, *size)).astype(np.float32))

    out = forward(model, params, x, Mode.eval)

    assert out.dims == (1, 1, *size)
    assert np.all((out.data > 0) & (out.data < 1))


def test_forward_should_reject_indivisible_inputs():
    model = build(_small(Variant.unet))
    with pytest.raises(ShapeError):
        check_input(model, (1, 3, 100, 96))


def test_forward_should_reject_wrong_channels():
    model = build(_small(Variant.plunet))
    with pytest.raises(ShapeError):
        check_input(model, (1, 1, 96, 96))


def test_forward_should_be_deterministic():
    model = build(_small(Variant.plunet))
    params = init_params(model, seed=3)
    x = Tensor(np.random.default_rng(1).uniform(0, 1, (2, 3, 32, 32)).astype(np.float32))

    first = forward(model, params, x, Mode.eval).data
    second = forward(model, params, x, Mode.eval).data

    np.testing.assert_array_equal(first, second)


def test_init_params_should_depend_on_the_seed():
    model = build(_small(Variant.plunet))
    first, second = init_params(model, seed=0), init_params(model, seed=1)

    weights = [spec.name for spec in model.param_specs if spec.kind.learnable and spec.fan_in]
    assert weights
    for name in weights:
        assert not np.array_equal(first[name].data, second[name].data)


def test_init_params_should_center_weights_within_three_sigma():
    model = build(preset(Variant.plunet))
    name = next(spec.name for spec in model.param_specs if spec.dims == (128, 64, 3, 3))
    w = ParameterRegistry.initialize(
        [spec for spec in model.param_specs if spec.name == name], seed=0, dtype=DType.f64
    )[name].data

    bound = np.sqrt(6.0 / (64 * 9))
    sigma = bound / np.sqrt(3.0) / np.sqrt(w.size)
    assert abs(w.mean()) <= 3 * sigma
    assert np.abs(w).max() <= bound


def test_scaled_should_divide_widths_and_cap_reduction():
    config = scaled(preset(Variant.plunet), 4)

    assert config.widths == (16, 32, 64)
    assert config.bottleneck_width == 128
    assert scaled(preset(Variant.plunet), 32).se_reduction == 2


def test_scaled_should_reject_non_power_of_two_factors():
    with pytest.raises(ValueError):
        scaled(preset(Variant.unet), 3)


def test_arch_config_should_reject_non_doubling_widths():
    with pytest.raises(ValueError):
        ArchConfig(Variant.unet, depth=2, widths=(64, 100), bottleneck_width=200)


def test_arch_config_should_reject_ps_on_the_pathways():
    with pytest.raises(ParseError):
        ArchConfig(Variant.punet, encoder_kind=BlockKind.ps)


def test_arch_config_should_round_trip_through_json():
    config = scaled(preset(Variant.lunet, in_channels=1), 8)
    assert ArchConfig.from_json(config.to_json()) == config


def test_arch_config_should_fill_missing_fields_from_the_preset():
    config = ArchConfig.from_dict({"variant": "plunet", "widths": [32, 64, 128], "bottleneck_width": 256})

    assert config.depth == 3
    assert config.bottleneck_kind is BlockKind.ps


def test_arch_config_should_reject_unknown_keys():
    with pytest.raises(ParseError):
        ArchConfig.from_dict({"variant": "unet", "dropout": 0.5})


def test_arch_config_should_require_a_variant():
    with pytest.raises(ParseError):
        ArchConfig.from_dict({"depth": 3})


def test_arch_config_should_load_from_file(tmp_path: Path):
    path = tmp_path / "arch.json"
    path.write_text(json.dumps({"variant": "punet", "in_channels": 1}))

    config = ArchConfig.load(path)

    assert config.in_channels == 1
    assert config.bottleneck_kind is BlockKind.ps


def test_arch_config_should_report_invalid_json(tmp_path: Path):
    path = tmp_path / "arch.json"
    path.write_text("{variant: ")
    with pytest.raises(ParseError):
        ArchConfig.load(path)


def test_unknown_preset_should_be_rejected():
    with pytest.raises(ParseError):
        preset("resunet")
