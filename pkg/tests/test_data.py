import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pagsr.data import (
    DEFAULT_SIGMAS,
    DegradationSpec,
    as_raster,
    degrade,
    downsample_bicubic,
    gaussian_kernel,
    make_dataset,
    upsample_bicubic,
)
from pagsr.errors import DatasetIntegrityError, InvalidArgument
from pagsr.synthetic import write_dataset

from . import oracles


class TestGaussianKernel:
    def test_delta(self):
        k = gaussian_kernel(0, 2)
        assert k.shape == (5, 5)
        expected = np.zeros((5, 5))
        expected[2, 2] = 1.0
        np.testing.assert_array_equal(k, expected)

    @pytest.mark.parametrize("sigma", DEFAULT_SIGMAS)
    def test_normalized(self, sigma):
        k = gaussian_kernel(sigma, max(1, int(np.ceil(3 * sigma))))
        assert abs(k.sum() - 1.0) <= 1e-9
        assert (k >= 0).all()

    def test_matches_formula(self):
        expected = oracles.gaussian_kernel_2d(0.5, 2)
        np.testing.assert_allclose(gaussian_kernel(0.5, 2), expected, rtol=0, atol=1e-15)
        assert gaussian_kernel(0.5, 2)[2, 2] == pytest.approx(expected[2, 2], abs=1e-15)

    @pytest.mark.parametrize("sigma", [0.5, 1.3, 4.0])
    def test_symmetries(self, sigma):
        k = gaussian_kernel(sigma, 5)
        np.testing.assert_allclose(k, k[::-1, :], atol=1e-16)
        np.testing.assert_allclose(k, k[:, ::-1], atol=1e-16)
        np.testing.assert_allclose(k, np.rot90(k), atol=1e-16)

    @pytest.mark.parametrize("args", [(-1.0, 2), (1.0, -1)])
    def test_rejects_negative(self, args):
        with pytest.raises(InvalidArgument):
            gaussian_kernel(*args)


class TestDegradationSpec:
    def test_default_radius(self):
        assert DegradationSpec(0.0, 4).kernel_radius == 1
        assert DegradationSpec(2.0, 4).kernel_radius == 6
        assert DegradationSpec(1.2, 4).kernel_radius == 4

    @pytest.mark.parametrize("kwargs", [{"sigma": -0.1}, {"scale": 3}, {"sigma": 2.0, "kernel_radius": 5}])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidArgument):
            DegradationSpec(**kwargs)


def checkerboard(n=8):
    return (np.indices((n, n)).sum(axis=0) % 2).astype(np.float64)


class TestDegrade:
    def test_constant(self):
        x = np.full((32, 40, 1), 0.5)
        out = degrade(x, DegradationSpec(3.0, 4))
        assert out.shape == (8, 10, 1)
        np.testing.assert_allclose(out, 0.5, atol=1e-12)

    def test_sigma_zero_is_plain_downsample(self):
        x = np.random.default_rng(0).random((32, 24))
        np.testing.assert_array_equal(
            degrade(x, DegradationSpec(0.0, 4)), np.clip(downsample_bicubic(x, 4), 0, 1)
        )

    def test_checkerboard_oracle(self):
        x = checkerboard(8)
        blurred = oracles.convolve_reflect(x, oracles.gaussian_kernel_2d(2.0, 6))
        expected = np.clip(oracles.resize_bicubic(blurred, 2, 2), 0, 1)
        out = degrade(x, DegradationSpec(2.0, 4))
        assert out.shape == (2, 2)
        np.testing.assert_allclose(out, expected, atol=1e-6)

    def test_random_oracle_with_clamping(self):
        x = np.random.default_rng(3).random((12, 16))
        blurred = oracles.convolve_reflect(x, oracles.gaussian_kernel_2d(0.5, 2))
        expected = np.clip(oracles.resize_bicubic(blurred, 6, 8), 0, 1)
        np.testing.assert_allclose(degrade(x, DegradationSpec(0.5, 2)), expected, atol=1e-9)

    def test_deterministic(self):
        x = np.random.default_rng(1).random((64, 64, 1))
        spec = DegradationSpec(1.5, 8)
        assert degrade(x, spec).tobytes() == degrade(x, spec).tobytes()

    def test_not_divisible(self):
        with pytest.raises(InvalidArgument):
            degrade(np.zeros((30, 32)), DegradationSpec(1.0, 4))

    @settings(max_examples=30, deadline=None)
    @given(
        arrays(np.float64, (16, 16), elements=st.floats(0, 1)),
        st.sampled_from(DEFAULT_SIGMAS),
        st.sampled_from([2, 4, 8]),
    )
    def test_range_properties(self, x, sigma, scale):
        out = degrade(x, DegradationSpec(sigma, scale))
        assert out.min() >= 0.0 and out.max() <= 1.0
        assert x.min() - 1e-9 <= out.mean() <= x.max() + 1e-9

    @pytest.mark.parametrize("value", [0.0, 0.3, 1.0])
    def test_degrade_then_upsample_constant(self, value):
        x = np.full((32, 32), value)
        back = upsample_bicubic(degrade(x, DegradationSpec(2.5, 4)), 4)
        np.testing.assert_allclose(back, value, atol=1e-12)


class TestUpsample:
    def test_identity(self):
        x = np.random.default_rng(0).random((5, 7, 1))
        np.testing.assert_array_equal(upsample_bicubic(x, 1), x)

    def test_constant(self):
        np.testing.assert_allclose(upsample_bicubic(np.full((4, 6), 0.7), 4), 0.7, atol=1e-12)

    def test_ramp_oracle(self):
        ramp = np.arange(16, dtype=np.float64).reshape(4, 4) / 15.0
        out = upsample_bicubic(ramp, 2)
        assert out.shape == (8, 8)
        np.testing.assert_allclose(out, oracles.resize_bicubic(ramp, 8, 8), atol=1e-6)

    def test_rectangular_oracle(self):
        x = np.random.default_rng(5).random((3, 5))
        np.testing.assert_allclose(upsample_bicubic(x, 4), oracles.resize_bicubic(x, 12, 20), atol=1e-12)

    def test_tensor_path_matches_numpy(self):
        import torch

        x = np.random.default_rng(2).random((6, 9))
        t = upsample_bicubic(torch.tensor(x).reshape(1, 1, 6, 9), 4)
        np.testing.assert_allclose(t[0, 0].numpy(), upsample_bicubic(x, 4), atol=1e-12)

    def test_invalid_scale(self):
        with pytest.raises(InvalidArgument):
            upsample_bicubic(np.zeros((4, 4)), 0)


def test_as_raster():
    assert as_raster(np.zeros((3, 4))).shape == (3, 4, 1)
    with pytest.raises(InvalidArgument):
        as_raster(np.full((3, 4, 1), 1.5))
    with pytest.raises(InvalidArgument):
        as_raster(np.zeros((3, 4, 2)))


@pytest.fixture(scope="module")
def root(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    write_dataset(root, n_images=2, hr_hw=(64, 80), seed=0, n_levels=5, n_test=1)
    return root


class TestDataset:
    def test_pair_count(self, root):
        pairs = list(make_dataset(root, DegradationSpec(scale=4), DEFAULT_SIGMAS, seed=0))
        assert len(pairs) == 18
        assert len({p.id for p in pairs}) == 18

    def test_seeded_order(self, root):
        ids = lambda seed: [p.id for p in make_dataset(root, DegradationSpec(scale=4), DEFAULT_SIGMAS, seed=seed)]
        assert ids(7) == ids(7)
        assert ids(7) != ids(8)

    def test_contracts(self, root):
        for p in make_dataset(root, DegradationSpec(scale=4), [0.0, 2.0], seed=0):
            assert p.x_l.shape == (16, 20, 1)
            assert p.x_h.shape == (64, 80, 1)
            assert p.guide.shape == (64, 80, 3)
            assert p.edges.n == 5 and p.edges.shape == (64, 80)

    def test_split(self, root):
        pairs = list(make_dataset(root, DegradationSpec(scale=4), [1.0], split="test"))
        assert [p.id for p in pairs] == ["scene001@s1"]

    def test_patches_are_colocated(self, root):
        from pagsr.data import load_record

        spec = DegradationSpec(scale=4)
        for p in make_dataset(root, spec, [0.0, 1.5], patch=32, seed=3):
            assert p.x_h.shape == (32, 32, 1) and p.x_l.shape == (8, 8, 1)
            top, left = p.offset
            assert top % 4 == 0 and left % 4 == 0
            x_h, guide, edges = load_record(root, p.id.split("@")[0])
            np.testing.assert_array_equal(p.x_h, x_h[top : top + 32, left : left + 32])
            np.testing.assert_array_equal(p.guide, guide[top : top + 32, left : left + 32])
            np.testing.assert_array_equal(p.edges.levels[2], edges.levels[2][top : top + 32, left : left + 32])
            np.testing.assert_array_equal(p.x_l, degrade(p.x_h, spec.with_sigma(p.sigma)).astype(np.float32))

    def test_missing_guide(self, root, tmp_path):
        import shutil

        shutil.copytree(root, tmp_path / "ds")
        (tmp_path / "ds" / "visible" / "scene001.png").unlink()
        with pytest.raises(DatasetIntegrityError, match="scene001"):
            list(make_dataset(tmp_path / "ds", DegradationSpec(scale=4), [0.0]))

    def test_missing_edge_level(self, root, tmp_path):
        import shutil

        shutil.copytree(root, tmp_path / "ds")
        (tmp_path / "ds" / "edges" / "scene000" / "level4.png").unlink()
        with pytest.raises(DatasetIntegrityError, match="scene000"):
            list(make_dataset(tmp_path / "ds", DegradationSpec(scale=4), [0.0]))

    def test_skips_indivisible(self, root, tmp_path, caplog):
        import shutil

        from pagsr.imageio import write_image

        shutil.copytree(root, tmp_path / "ds")
        write_image(tmp_path / "ds" / "thermal" / "odd.png", np.zeros((30, 40)))
        write_image(tmp_path / "ds" / "visible" / "odd.png", np.zeros((30, 40, 3)))
        from pagsr.edges import EdgePyramid, save_pyramid

        save_pyramid(EdgePyramid([np.zeros((30, 40))] * 5), tmp_path / "ds" / "edges" / "odd")
        with caplog.at_level("WARNING"):
            pairs = list(make_dataset(tmp_path / "ds", DegradationSpec(scale=4), [0.0, 1.0]))
        assert len(pairs) == 4
        assert "odd" in caplog.text

    def test_empty_sigmas(self, root):
        with pytest.raises(InvalidArgument):
            list(make_dataset(root, DegradationSpec(scale=4), []))
