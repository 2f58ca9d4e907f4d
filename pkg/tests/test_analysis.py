import json

import pytest

from plunet.analysis import compare_ps_vs_aspp, cost_report, count_flops, count_params, layer_flops, layer_params
from plunet.arch import build, preset, scaled
from plunet.engine import ConvSpec
from plunet.names import FlopConvention, Variant
from plunet.nn import Layer, LayerKind

NOMINAL = (1, 3, 96, 96)


def _flops(variant: Variant, dims, convention=FlopConvention.TWO_MACS) -> int:
    return count_flops(build(preset(variant)), dims, convention).total


def test_conv_layer_should_count_weights_bias_and_macs():
    spec = ConvSpec.same(64, 128)
    layer = Layer("conv", LayerKind.conv, (1, 64, 32, 32), (1, 128, 32, 32), spec)

    assert layer_params(layer) == 73_856
    assert layer_flops(layer, FlopConvention.MACS) == 128 * 32 * 32 * 64 * 9
    assert layer_flops(layer) == 2 * 128 * 32 * 32 * 64 * 9


def test_batchnorm_should_count_two_parameters_per_channel():
    layer = Layer("bn", LayerKind.batchnorm, (1, 128, 8, 8), (1, 128, 8, 8))
    assert layer_params(layer) == 256
    assert layer_flops(layer) == 128 * 8 * 8


def test_concat_should_be_free():
    assert layer_flops(Layer("cat", LayerKind.concat, (1, 8, 4, 4), (1, 8, 4, 4))) == 0


def test_transposed_conv_should_count_per_input_pixel():
    spec = ConvSpec.make(8, 4, 2, stride=2)
    layer = Layer("up", LayerKind.conv_transpose, (1, 8, 5, 5), (1, 4, 10, 10), spec)

    assert layer_params(layer) == 8 * 4 * 4 + 4
    assert layer_flops(layer, FlopConvention.MACS) == 8 * 5 * 5 * 4 * 4


def test_parameter_count_should_not_depend_on_input_size():
    model = build(scaled(preset(Variant.plunet), 8))
    assert count_params(model).total == cost_report(model, (1, 3, 64, 64)).total_params
    assert count_params(model).total == cost_report(model, (2, 3, 128, 96)).total_params


@pytest.mark.parametrize("variant", list(Variant))
def test_flops_should_scale_with_pixel_count(variant):
    base = _flops(variant, NOMINAL)

    assert _flops(variant, (1, 3, 224, 224)) / base == pytest.approx(224 * 224 / (96 * 96), rel=0.01)
    assert _flops(variant, (1, 3, 384, 288)) / base == pytest.approx(12.0, rel=0.01)


def test_flops_should_lie_near_published_figures_counted_as_macs():
    unet = _flops(Variant.unet, NOMINAL, FlopConvention.MACS)
    plunet = _flops(Variant.plunet, NOMINAL, FlopConvention.MACS)

    assert 9.21e9 / 1.5 <= unet <= 9.21e9 * 1.5
    assert 4.99e9 / 1.5 <= plunet <= 4.99e9 * 1.5
    assert plunet < unet


def test_two_macs_convention_should_double_convolution_cost():
    model = build(preset(Variant.unet))
    macs = count_flops(model, NOMINAL, FlopConvention.MACS).rows["enc1.conv1"]
    assert count_flops(model, NOMINAL).rows["enc1.conv1"] == 2 * macs


def test_flops_should_grow_linearly_with_batch():
    model = build(preset(Variant.plunet))
    single = count_flops(model, NOMINAL).total
    assert count_flops(model, (4, 3, 96, 96)).total == pytest.approx(4 * single, rel=1e-6)


def test_cost_report_json_should_carry_rows_and_totals():
    model = build(scaled(preset(Variant.unet), 16))
    report = cost_report(model, (1, 3, 32, 32), FlopConvention.MACS)

    document = json.loads(report.to_json())

    assert document["input_dims"] == [1, 3, 32, 32]
    assert document["convention"] == "MACs"
    assert document["totals"]["params"] == sum(row["params"] for row in document["rows"])
    assert document["totals"]["flops"] == sum(row["flops"] for row in document["rows"])
    assert document["totals"]["params"] == count_params(model).total
    assert set(document["rows"][0]) == {"name", "params", "flops"}


def test_ps_module_should_use_several_times_fewer_parameters_than_aspp():
    reduction = compare_ps_vs_aspp(256, 512)

    assert reduction.aspp_params == 5_774_848
    assert reduction.ps_params == 1_590_784
    assert reduction.module_ratio == pytest.approx(3.630, abs=1e-3)
    assert 3 <= reduction.module_ratio <= 9


def test_separable_branch_kernels_should_approach_nine_fold_reduction():
    at_256 = compare_ps_vs_aspp(256, 256)
    at_4096 = compare_ps_vs_aspp(4096, 4096)

    assert at_256.branch_ratio == pytest.approx(9 * 256 * 256 / (9 * 256 + 256 * 256))
    assert at_256.branch_ratio == pytest.approx(8.694, abs=1e-3)
    assert at_256.branch_ratio < at_4096.branch_ratio < 9
    assert at_256.module_ratio < at_4096.module_ratio < 5


def test_wide_ps_module_should_approach_the_asymptotic_ratios():
    reduction = compare_ps_vs_aspp(4096, 4096)

    assert reduction.module_ratio == pytest.approx(5, rel=0.05)
    assert reduction.branch_ratio == pytest.approx(9, rel=0.05)
