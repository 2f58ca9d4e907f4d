import numpy as np
import numpy.testing as npt
import pytest

from plunet.commands.gradcheck import BLOCKS, block_registry, run_gradcheck
from plunet.engine import ConvSpec, DType, Tensor, concat_channels, conv2d
from plunet.errors import ShapeError
from plunet.names import BlockKind, Mode
from plunet.nn import ParameterRegistry, ParamKind
from plunet.nn.blocks import (
    BlockSpec,
    LGBlock,
    PSModule,
    SEBlock,
    ls_forward,
    make_block,
    se_forward,
)


def _learnable(spec: BlockSpec) -> int:
    return sum(p.size for p in make_block(spec).param_specs("") if p.kind.learnable)


def _registry(spec: BlockSpec, seed: int = 0, dtype: DType = DType.f64) -> ParameterRegistry:
    return ParameterRegistry.initialize(make_block(spec).param_specs(""), seed, dtype)


def _input(dims, seed=0):
    return Tensor(np.random.default_rng(seed).uniform(-1.0, 1.0, dims))


def test_conv_block_should_count_expected_parameters():
    conv1 = 3 * 3 * 64 * 128 + 128
    conv2 = 3 * 3 * 128 * 128 + 128
    assert conv1 == 73_856
    assert _learnable(BlockSpec(BlockKind.conv_block, 64, 128)) == conv1 + 2 * 128 + conv2 + 2 * 128 == 221_952


def test_se_block_should_count_expected_parameters():
    assert _learnable(BlockSpec(BlockKind.se, 64, 64, se_reduction=16)) == 580


def test_se_block_should_reject_indivisible_reduction():
    with pytest.raises(ValueError):
        BlockSpec(BlockKind.se, 10, 10, se_reduction=4)


def test_se_block_should_require_matching_channels():
    with pytest.raises(ShapeError):
        BlockSpec(BlockKind.se, 8, 16)


def test_lg_block_should_reject_wrong_dilation_count():
    with pytest.raises(ValueError):
        BlockSpec(BlockKind.lg, 4, 8, dilations=(1, 3, 5))


def test_blocks_should_keep_spatial_size_and_set_channels():
    x = _input((2, 3, 8, 8))
    for kind in (BlockKind.conv_block, BlockKind.lg, BlockKind.ls, BlockKind.ps):
        spec = BlockSpec(kind, 3, 8, se_reduction=4)
        out = make_block(spec).forward(x, _registry(spec).view(), Mode.train)
        assert out.dims == (2, 8, 8, 8), kind


def test_block_should_reject_wrong_input_channels():
    spec = BlockSpec(BlockKind.conv_block, 3, 8)
    with pytest.raises(ShapeError):
        make_block(spec).forward(_input((1, 4, 8, 8)), _registry(spec).view(), Mode.train)


def test_se_gate_should_lie_in_unit_interval():
    spec = BlockSpec(BlockKind.se, 8, 8, se_reduction=2)
    registry = _registry(spec, seed=3)
    gate = SEBlock(spec).gate(_input((3, 8, 5, 5), seed=1), registry.view())

    assert gate.dims == (3, 8, 1, 1)
    assert np.all((gate.data > 0) & (gate.data < 1))


def test_se_forward_should_scale_each_channel_by_its_gate():
    spec = BlockSpec(BlockKind.se, 4, 4, se_reduction=2)
    registry = _registry(spec, seed=2)
    x = _input((2, 4, 3, 3), seed=5)

    out = se_forward(x, registry.view(), spec)
    gate = SEBlock(spec).gate(x, registry.view())

    npt.assert_allclose(out.data, x.data * gate.data)


def test_ls_block_should_be_lg_followed_by_se():
    spec = BlockSpec(BlockKind.ls, 3, 4, se_reduction=2)
    registry = _registry(spec, seed=4)
    x = _input((2, 3, 6, 6), seed=6)

    out = ls_forward(x, registry.view(), spec, Mode.eval)

    lg = LGBlock(spec.lg_spec()).forward(x, registry.view("lg"), Mode.eval)
    expected = SEBlock(spec.se_spec()).forward(lg, registry.view("se"), Mode.eval)
    npt.assert_allclose(out.data, expected.data)


def test_lg_block_with_delta_kernels_should_pass_rectified_input_through():
    spec = BlockSpec(BlockKind.lg, 3, 3)
    registry = _registry(spec, seed=1)
    delta = np.zeros((3, 3, 3, 3))
    delta[np.arange(3), np.arange(3), 1, 1] = 1.0
    for name in spec.branch_names:
        registry[f"{name}.w"].data[...] = delta

    registry["fuse.w"].data[...] = np.concatenate([np.eye(3), np.zeros((3, 3))], axis=1).reshape(3, 6, 1, 1)
    x = _input((2, 3, 6, 6), seed=3)

    out = LGBlock(spec).forward(x, registry.view(), Mode.eval)

    # two eval-mode BN passes over unit running stats
    npt.assert_allclose(out.data, np.maximum(x.data, 0.0) / (1.0 + 1e-5), rtol=1e-12)


def test_ps_module_with_tied_branches_should_equal_one_branch_with_summed_fusion():
    tied = BlockSpec(BlockKind.ps, 3, 4, dilations=(1, 1, 1, 1), attention=False)
    registry = _registry(tied, seed=2)
    for name in list(registry):
        if name.startswith("branch0_d1."):
            for i in range(1, 4):
                registry[name.replace("branch0_", f"branch{i}_")].data[...] = registry[name].data

    single = BlockSpec(BlockKind.ps, 3, 4, dilations=(1,), attention=False)
    collapsed = _registry(single, seed=9)
    for name in collapsed:
        collapsed[name].data[...] = registry[name.replace("branch_d1.", "branch0_d1.")].data

    collapsed["fuse.w"].data[...] = registry["fuse.w"].data.reshape(4, 4, 4, 1, 1).sum(axis=1)
    x = _input((2, 3, 5, 5), seed=4)

    out = PSModule(tied).forward(x, registry.view(), Mode.eval)

    expected = PSModule(single).forward(x, collapsed.view(), Mode.eval)
    npt.assert_allclose(out.data, expected.data, atol=1e-12)


def test_lg_block_should_name_branches_by_dilation():
    names = {p.name for p in LGBlock(BlockSpec(BlockKind.lg, 2, 4)).param_specs("enc1.lg")}
    assert {"enc1.lg.branch_d1.w", "enc1.lg.branch_d3.w", "enc1.lg.fuse.w", "enc1.lg.fuse.bn.gamma"} <= names


def test_ps_module_should_disambiguate_repeated_dilations():
    spec = BlockSpec(BlockKind.ps, 4, 4, se_reduction=2, dilations=(2, 2))
    assert spec.branch_names == ["branch0_d2", "branch1_d2"]


def test_ps_module_without_attention_should_have_no_se_parameters():
    spec = BlockSpec(BlockKind.ps, 4, 8, attention=False)
    assert not [p for p in PSModule(spec).param_specs("") if p.name.startswith("se.")]


def test_ps_module_should_use_depthwise_separable_branches():
    spec = BlockSpec(BlockKind.ps, 16, 32)
    by_name = {p.name: p for p in PSModule(spec).param_specs("bottleneck")}

    assert by_name["bottleneck.branch_d6.depthwise.w"].dims == (16, 1, 3, 3)
    assert by_name["bottleneck.branch_d6.pointwise.w"].dims == (32, 16, 1, 1)
    assert by_name["bottleneck.fuse.w"].dims == (32, 4 * 32, 1, 1)


def test_fusion_of_concatenated_branches_should_equal_sum_of_branch_projections():
    rng = np.random.default_rng(0)
    branches = [Tensor(rng.uniform(-1, 1, (2, 3, 4, 4))) for _ in range(4)]
    w = Tensor(rng.uniform(-1, 1, (5, 12, 1, 1)))
    fused = conv2d(concat_channels(branches), w, None, ConvSpec.pointwise(12, 5))

    parts = [
        conv2d(branch, Tensor(w.data[:, 3 * i : 3 * (i + 1)].copy()), None, ConvSpec.pointwise(3, 5))
        for i, branch in enumerate(branches)
    ]
    npt.assert_allclose(fused.data, sum(p.data for p in parts), atol=1e-12)


def test_eval_mode_should_leave_running_stats_untouched():
    spec = BlockSpec(BlockKind.ps, 3, 4, se_reduction=2)
    registry = _registry(spec)
    before = {name: t.data.copy() for name, t in registry.buffers.items()}

    make_block(spec).forward(_input((2, 3, 6, 6)), registry.view(), Mode.eval)

    for name, t in registry.buffers.items():
        npt.assert_array_equal(t.data, before[name])


def test_train_mode_should_update_running_stats():
    spec = BlockSpec(BlockKind.conv_block, 3, 4)
    registry = _registry(spec)

    make_block(spec).forward(_input((2, 3, 6, 6)), registry.view(), Mode.train)

    assert np.any(registry["conv1.bn.running_mean"].data != 0.0)


def test_initialization_should_follow_he_uniform_bounds():
    spec = BlockSpec(BlockKind.conv_block, 16, 32)
    registry = _registry(spec, dtype=DType.f32)

    w = registry["conv1.w"].data
    bound = np.sqrt(6.0 / (16 * 9))
    assert w.dtype == np.float32
    assert np.all(np.abs(w) <= bound)
    npt.assert_array_equal(registry["conv1.b"].data, 0.0)
    npt.assert_array_equal(registry["conv1.bn.gamma"].data, 1.0)
    npt.assert_array_equal(registry["conv1.bn.running_var"].data, 1.0)


def test_initialization_should_be_reproducible():
    spec = BlockSpec(BlockKind.ls, 4, 8, se_reduction=2)
    a, b = _registry(spec, seed=7), _registry(spec, seed=7)
    for name in a:
        npt.assert_array_equal(a[name].data, b[name].data)


def test_gradcheck_registry_should_keep_relu_inputs_positive():
    spec = BlockSpec(BlockKind.ls, 2, 4, se_reduction=2)
    registry = block_registry(spec, seed=0)

    for name, param in registry.specs.items():
        if param.kind is ParamKind.beta:
            assert np.all(registry[name].data >= 2.5)


def test_gradcheck_should_pass_for_every_primitive():
    failed = [r for r in run_gradcheck("ops") if not r.passed]
    assert not failed, failed


@pytest.mark.parametrize("scope", sorted(BLOCKS))
def test_gradcheck_should_pass_for_block(scope):
    (result,) = run_gradcheck(scope)
    assert result.passed, result.max_rel_error
