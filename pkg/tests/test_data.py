from pathlib import Path

import numpy as np
import numpy.testing as npt
import pytest

from plunet.data import Sample, SplitSpec, load_dir, load_sample, read_netpbm, save_sample, split, stack, synth_generate
from plunet.data.netpbm import write_netpbm
from plunet.data.split import shuffled
from plunet.engine import DType, Tensor
from plunet.errors import DataError


def _sample(sample_id: str, size: int = 4) -> Sample:
    image = Tensor(np.full((1, 3, size, size), 0.5, dtype=np.float32))
    mask = Tensor(np.zeros((1, 1, size, size), dtype=np.float32))
    return Sample(sample_id, image, mask)


def _samples(count: int) -> list[Sample]:
    return [_sample(f"s{i}") for i in range(count)]


def test_split_should_use_sixty_twenty_twenty_by_default():
    parts = split(_samples(670))
    assert (len(parts.train), len(parts.val), len(parts.test)) == (402, 134, 134)

    parts = split(_samples(10))
    assert (len(parts.train), len(parts.val), len(parts.test)) == (6, 2, 2)


def test_split_should_partition_without_leakage():
    samples = _samples(53)
    parts = split(samples, SplitSpec(seed=7))

    ids = [s.id for part in parts for s in part]
    assert sorted(ids) == sorted(s.id for s in samples)
    assert len(set(ids)) == len(ids)


def test_split_should_depend_only_on_seed():
    samples = _samples(30)
    assert split(samples, SplitSpec(seed=1)) == split(samples, SplitSpec(seed=1))
    assert split(samples, SplitSpec(seed=1)).train != split(samples, SplitSpec(seed=2)).train


def test_split_should_reject_too_few_samples():
    with pytest.raises(DataError):
        split(_samples(4))


def test_split_spec_should_reject_fractions_not_summing_to_one():
    with pytest.raises(DataError):
        SplitSpec(0.5, 0.2, 0.2)


def test_shuffle_should_be_a_permutation():
    items = list(range(20))
    out = shuffled(items, np.random.default_rng(0))
    assert sorted(out) == items
    assert items == list(range(20))


def test_sample_should_reject_size_mismatch():
    with pytest.raises(DataError):
        Sample("x", Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((1, 1, 4, 5))))


def test_sample_should_reject_non_binary_mask():
    with pytest.raises(DataError):
        Sample("x", Tensor(np.zeros((1, 3, 2, 2))), Tensor(np.full((1, 1, 2, 2), 0.5)))


def test_stack_should_batch_along_n():
    images, masks = stack(_samples(3), DType.f64)
    assert images.dims == (3, 3, 4, 4) and images.dtype is DType.f64
    assert masks.dims == (3, 1, 4, 4)


def test_synth_should_be_reproducible():
    first = synth_generate(3, 32, 48, seed=7)
    second = synth_generate(3, 32, 48, seed=7)

    for a, b in zip(first, second, strict=True):
        assert a.id == b.id
        npt.assert_array_equal(a.image.data, b.image.data)
        npt.assert_array_equal(a.mask.data, b.mask.data)


def test_synth_masks_should_cover_a_bounded_fraction():
    for sample in synth_generate(20, 64, 64, seed=0):
        assert sample.image.dims == (1, 3, 64, 64)
        assert 0.02 <= sample.mask.data.mean() <= 0.60
        assert 0.0 <= sample.image.data.min() and sample.image.data.max() <= 1.0


def test_synth_foreground_should_be_brighter_than_background():
    for sample in synth_generate(5, 64, 64, seed=3):
        image, mask = sample.image.data[0].mean(axis=0), sample.mask.data[0, 0] > 0
        assert image[mask].mean() > image[~mask].mean() + 0.05


def test_synth_should_reject_degenerate_sizes():
    with pytest.raises(DataError):
        synth_generate(1, 16, 64, seed=0)


def test_netpbm_should_round_trip_pixels(tmp_path: Path):
    pixels = np.random.default_rng(0).integers(0, 256, (3, 5, 7), dtype=np.uint8)
    write_netpbm(tmp_path / "a.ppm", pixels)
    npt.assert_array_equal(read_netpbm(tmp_path / "a.ppm"), pixels)


def test_netpbm_should_skip_header_comments(tmp_path: Path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n# maxval next\n255\n" + bytes([0, 255]))

    npt.assert_array_equal(read_netpbm(path), [[[0, 255]]])


def test_netpbm_should_reject_other_formats(tmp_path: Path):
    path = tmp_path / "x.ppm"
    path.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
    with pytest.raises(DataError):
        read_netpbm(path)


def test_netpbm_should_reject_truncated_pixels(tmp_path: Path):
    path = tmp_path / "x.pgm"
    path.write_bytes(b"P5\n4 4\n255\n" + bytes(10))
    with pytest.raises(DataError):
        read_netpbm(path)


def test_saved_samples_should_load_back(tmp_path: Path):
    sample = synth_generate(1, 32, 32, seed=1)[0]
    image_path, mask_path = save_sample(sample, tmp_path)

    loaded = load_sample(image_path)

    assert mask_path.name == "synth_00000_mask.pgm"
    assert loaded.id == sample.id
    npt.assert_array_equal(loaded.mask.data, sample.mask.data)
    npt.assert_allclose(loaded.image.data, sample.image.data, atol=0.5 / 255 + 1e-6)


def test_load_dir_should_use_natural_order(tmp_path: Path):
    for sample_id in ("img10", "img2", "img1"):
        save_sample(_sample(sample_id), tmp_path)

    assert [s.id for s in load_dir(tmp_path)] == ["img1", "img2", "img10"]


def test_load_should_require_a_mask(tmp_path: Path):
    save_sample(_sample("a"), tmp_path)
    (tmp_path / "a_mask.pgm").unlink()
    with pytest.raises(DataError):
        load_dir(tmp_path)


def test_load_dir_should_reject_masks_of_another_size(tmp_path: Path):
    write_netpbm(tmp_path / "a.ppm", np.full((3, 4, 4), 128, dtype=np.uint8))
    write_netpbm(tmp_path / "a_mask.pgm", np.zeros((1, 4, 5), dtype=np.uint8))

    with pytest.raises(DataError):
        load_dir(tmp_path)


def test_strict_masks_should_reject_grey_levels(tmp_path: Path):
    save_sample(_sample("a"), tmp_path)
    write_netpbm(tmp_path / "a_mask.pgm", np.full((1, 4, 4), 200, dtype=np.uint8))

    with pytest.raises(DataError):
        load_dir(tmp_path)

    assert load_dir(tmp_path, strict=False)[0].mask.data.min() == 1.0


def test_load_dir_should_reject_empty_directories(tmp_path: Path):
    with pytest.raises(DataError):
        load_dir(tmp_path)


def test_load_dir_should_reject_missing_directories(tmp_path: Path):
    with pytest.raises(OSError):
        load_dir(tmp_path / "missing")
