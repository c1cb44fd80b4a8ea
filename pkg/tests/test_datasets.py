import os
from pathlib import Path

import numpy as np
import pytest

from molubench.datasets import (
    IdxBadMagicError,
    IdxDimensionError,
    IdxFormatError,
    IdxTensor,
    IdxTruncatedError,
    SeededPrng,
    _splitmix64,
    load_idx,
    normalize_images,
    parse_idx,
    serialize_idx,
    shuffled_batches,
)


class TestSplitmix64:
    def test_known_vectors_from_seed_zero(self):
        # published reference outputs of splitmix64 seeded with 0
        expected = [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
        state = 0
        for want in expected:
            state, out = _splitmix64(state)
            assert out == want


class TestSeededPrng:
    def test_equal_seeds_equal_streams(self):
        a = SeededPrng(12345)
        b = SeededPrng(12345)
        assert [a.next_u64() for _ in range(10_000)] == [b.next_u64() for _ in range(10_000)]

    def test_different_seeds_differ(self):
        a = SeededPrng(1)
        b = SeededPrng(2)
        assert [a.next_u64() for _ in range(4)] != [b.next_u64() for _ in range(4)]

    def test_random_unit_interval(self):
        prng = SeededPrng(7)
        xs = [prng.random() for _ in range(10_000)]
        assert all(0.0 <= x < 1.0 for x in xs)

    def test_uniform_range(self):
        prng = SeededPrng(7)
        xs = [prng.uniform(-2.0, 3.0) for _ in range(1000)]
        assert all(-2.0 <= x < 3.0 for x in xs)

    def test_gaussian_sigma_zero_returns_mean_exactly(self):
        prng = SeededPrng(7)
        assert prng.gaussian(1.25, 0.0) == 1.25

    def test_gaussian_consumes_exactly_two_draws(self):
        a = SeededPrng(99)
        b = SeededPrng(99)
        a.gaussian(0.0, 1.0)
        b.next_u64()
        b.next_u64()
        assert a.next_u64() == b.next_u64()

    def test_gaussian_sample_mean(self):
        prng = SeededPrng(42)
        n = 1_000_000
        total = 0.0
        for _ in range(n):
            total += prng.gaussian(0.0, 1.0)
        assert abs(total / n) < 0.01

    def test_gaussian_sample_variance(self):
        prng = SeededPrng(43)
        n = 1_000_000
        xs = np.array([prng.gaussian(0.0, 1.0) for _ in range(n)])
        var = float(np.mean(xs * xs) - np.mean(xs) ** 2)
        assert abs(var - 1.0) < 0.02

    def test_gaussian_rejects_negative_sigma(self):
        with pytest.raises(ValueError):
            SeededPrng(1).gaussian(0.0, -1.0)

    def test_permutation_is_permutation(self):
        prng = SeededPrng(5)
        perm = prng.permutation(1000)
        assert sorted(perm) == list(range(1000))

    def test_randbelow_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            SeededPrng(1).randbelow(0)


class TestShuffledBatches:
    def test_small_n_single_batch(self):
        batches = shuffled_batches(5, 64, SeededPrng(1))
        assert len(batches) == 1
        assert batches[0].size == 5

    def test_union_is_everything_no_duplicates(self):
        batches = shuffled_batches(1000, 64, SeededPrng(2))
        flat = np.concatenate(batches)
        assert sorted(flat.tolist()) == list(range(1000))
        assert len(batches) == 16  # 15 full + 1 of 40

    def test_same_seed_same_batches(self):
        a = shuffled_batches(100, 7, SeededPrng(3))
        b = shuffled_batches(100, 7, SeededPrng(3))
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_fresh_permutation_each_epoch(self):
        prng = SeededPrng(3)
        first = np.concatenate(shuffled_batches(100, 10, prng))
        second = np.concatenate(shuffled_batches(100, 10, prng))
        assert not np.array_equal(first, second)

    def test_errors(self):
        with pytest.raises(ValueError):
            shuffled_batches(0, 10, SeededPrng(1))
        with pytest.raises(ValueError):
            shuffled_batches(10, 0, SeededPrng(1))


def _image_file_bytes():
    # 1 image of 2x2 pixels, values 9, 8, 7, 6 in row order
    header = (0x00000803).to_bytes(4, "big")
    header += (1).to_bytes(4, "big") + (2).to_bytes(4, "big") + (2).to_bytes(4, "big")
    return header + bytes([9, 8, 7, 6])


class TestIdx:
    def test_parse_hand_built_image_file(self):
        t = parse_idx(_image_file_bytes())
        assert t.dims == (1, 2, 2)
        assert t.data.tolist() == [9, 8, 7, 6]

    def test_parse_label_file(self):
        raw = (0x00000801).to_bytes(4, "big") + (3).to_bytes(4, "big") + bytes([1, 0, 2])
        t = parse_idx(raw)
        assert t.dims == (3,)
        assert t.data.tolist() == [1, 0, 2]

    def test_bad_magic(self):
        raw = (0xDEADBEEF).to_bytes(4, "big") + bytes(8)
        with pytest.raises(IdxBadMagicError):
            parse_idx(raw)

    def test_truncated_payload(self):
        with pytest.raises(IdxTruncatedError):
            parse_idx(_image_file_bytes()[:-1])

    def test_truncated_header(self):
        with pytest.raises(IdxTruncatedError):
            parse_idx((0x00000803).to_bytes(4, "big") + (1).to_bytes(4, "big"))

    def test_dimension_overflow(self):
        header = (0x00000803).to_bytes(4, "big")
        header += (0xFFFFFFFF).to_bytes(4, "big") * 3
        with pytest.raises(IdxDimensionError):
            parse_idx(header)

    def test_round_trip(self):
        t = IdxTensor((2, 2, 3), np.arange(12, dtype=np.uint8))
        again = parse_idx(serialize_idx(t))
        assert again.dims == t.dims
        assert np.array_equal(again.data, t.data)

    def test_serialize_rejects_bad_rank(self):
        with pytest.raises(IdxFormatError):
            serialize_idx(IdxTensor((2, 2), np.zeros(4, dtype=np.uint8)))

    def test_tensor_length_consistency(self):
        with pytest.raises(IdxFormatError):
            IdxTensor((2, 2, 2), np.zeros(7, dtype=np.uint8))

    def test_load_idx(self, tmp_path):
        path = tmp_path / "img"
        path.write_bytes(_image_file_bytes())
        assert load_idx(path).dims == (1, 2, 2)


def _real_mnist_dir():
    d = os.environ.get("MOLUBENCH_DATA_DIR", "")
    if d and (Path(d) / "train-images-idx3-ubyte").exists():
        return Path(d)
    return None


@pytest.mark.skipif(_real_mnist_dir() is None,
                    reason="real MNIST files not present (MOLUBENCH_DATA_DIR)")
class TestRealMnistSanity:
    def test_shapes_labels_and_class_balance(self):
        d = _real_mnist_dir()
        images = load_idx(d / "train-images-idx3-ubyte")
        labels = load_idx(d / "train-labels-idx1-ubyte")
        assert images.dims == (60000, 28, 28)
        assert labels.dims == (60000,)
        y = labels.data
        assert y.min() >= 0 and y.max() <= 9
        counts = np.bincount(y, minlength=10)
        assert np.all(counts > 0)


class TestNormalizeImages:
    def test_zero_image(self):
        t = IdxTensor((1, 2, 2), np.zeros(4, dtype=np.uint8))
        assert np.array_equal(normalize_images(t), np.zeros((1, 4)))

    def test_extreme_and_mid_pixels(self):
        t = IdxTensor((1, 1, 3), np.array([255, 128, 0], dtype=np.uint8))
        row = normalize_images(t)[0]
        assert row[0] == 1.0
        assert row[1] == pytest.approx(128 / 255)
        assert row[2] == 0.0

    def test_shape(self):
        t = IdxTensor((5, 3, 4), np.zeros(60, dtype=np.uint8))
        assert normalize_images(t).shape == (5, 12)

    def test_wrong_rank(self):
        with pytest.raises(IdxFormatError):
            normalize_images(IdxTensor((4,), np.zeros(4, dtype=np.uint8)))
