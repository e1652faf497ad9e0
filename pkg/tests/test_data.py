import numpy as np
import pytest

from posthoc.data import Grid3, Mask, PValueVector, SubjectStack, voxel_to_world
from posthoc.errors import DataError, MaskError, ParamError

from conftest import line_mask


def mni_like_grid():
    aff = np.diag([3.0, 3.0, 3.0, 1.0])
    aff[:3, 3] = (-90.0, -126.0, -72.0)
    return Grid3(61, 73, 61, (3.0, 3.0, 3.0), aff)


class TestGrid3:
    def test_voxel_volume(self):
        grid = Grid3.from_voxel_size(4, 4, 4, (3.0, 3.0, 3.0))
        assert grid.voxel_volume == 27.0

    def test_shape_and_count(self):
        grid = Grid3.from_voxel_size(3, 4, 5)
        assert grid.shape == (3, 4, 5)
        assert grid.n_voxels == 60

    @pytest.mark.parametrize("dims", [(0, 1, 1), (1, -2, 1), (1, 1, 0)])
    def test_rejects_degenerate_dims(self, dims):
        with pytest.raises(ParamError):
            Grid3.from_voxel_size(*dims)

    def test_rejects_bad_affine_last_row(self):
        aff = np.eye(4)
        aff[3, 0] = 1.0
        with pytest.raises(ParamError):
            Grid3(2, 2, 2, (1.0, 1.0, 1.0), aff)

    def test_rejects_nonfinite_affine(self):
        aff = np.eye(4)
        aff[0, 0] = np.nan
        with pytest.raises(ParamError):
            Grid3(2, 2, 2, (1.0, 1.0, 1.0), aff)

    def test_rejects_nonpositive_voxel_size(self):
        with pytest.raises(ParamError):
            Grid3.from_voxel_size(2, 2, 2, (1.0, 0.0, 1.0))


class TestMaskOrdering:
    def test_flat_order_is_x_fastest(self):
        # flat = ix + nx*(iy + ny*iz), so masked index 1 of a full mask is (1,0,0)
        mask = Mask.full(Grid3.from_voxel_size(3, 4, 5))
        assert np.array_equal(mask.grid_coords(0), [0, 0, 0])
        assert np.array_equal(mask.grid_coords(1), [1, 0, 0])
        assert np.array_equal(mask.grid_coords(3), [0, 1, 0])
        assert np.array_equal(mask.grid_coords(12), [0, 0, 1])

    def test_grid_coords_inverts_flat_formula(self, rng):
        grid = Grid3.from_voxel_size(7, 5, 3)
        mask = Mask(grid, rng.random(grid.n_voxels) < 0.4)
        for mi in rng.integers(0, mask.m, size=20):
            ix, iy, iz = mask.grid_coords(int(mi))
            assert ix + grid.nx * (iy + grid.ny * iz) == mask.flat_indices[mi]

    def test_embed_extract_roundtrip(self, rng):
        grid = Grid3.from_voxel_size(6, 5, 4)
        mask = Mask(grid, rng.random(grid.n_voxels) < 0.5)
        v = rng.standard_normal(mask.m)
        assert np.array_equal(mask.extract(mask.embed(v)), v)

    def test_embed_places_values_at_grid_coords(self, rng):
        grid = Grid3.from_voxel_size(4, 3, 2)
        mask = Mask(grid, rng.random(grid.n_voxels) < 0.6)
        v = np.arange(1.0, mask.m + 1)
        vol = mask.embed(v, fill=-1.0)
        for mi in range(mask.m):
            ix, iy, iz = mask.grid_coords(mi)
            assert vol[ix, iy, iz] == v[mi]
        assert (vol == -1.0).sum() == grid.n_voxels - mask.m

    def test_empty_mask_rejected(self):
        grid = Grid3.from_voxel_size(2, 2, 2)
        with pytest.raises(MaskError):
            Mask(grid, np.zeros(8, dtype=bool))

    def test_wrong_length_rejected(self):
        grid = Grid3.from_voxel_size(2, 2, 2)
        with pytest.raises(ParamError):
            Mask(grid, np.ones(7, dtype=bool))

    def test_out_of_range_masked_index(self):
        mask = line_mask(5)
        with pytest.raises(IndexError):
            mask.grid_coords(5)
        with pytest.raises(IndexError):
            voxel_to_world(mask, -1)


class TestVoxelToWorld:
    def test_known_scanner_coordinates(self):
        # 3 mm grid with origin (-90, -126, -72): voxel (19,1,1) sits at (-33,-123,-69)
        grid = mni_like_grid()
        mask = Mask.full(grid)
        mi = 19 + grid.nx * (1 + grid.ny * 1)
        assert np.allclose(voxel_to_world(mask, mi), [-33.0, -123.0, -69.0])

    def test_matches_affine_product(self, rng):
        aff = np.eye(4)
        aff[:3, :3] = [[2.0, 0.5, 0.0], [0.0, 3.0, 0.25], [0.1, 0.0, 1.5]]
        aff[:3, 3] = (-10.0, 4.0, 7.5)
        grid = Grid3(5, 4, 3, (2.0, 3.0, 1.5), aff)
        mask = Mask(grid, rng.random(grid.n_voxels) < 0.7)
        for mi in rng.integers(0, mask.m, size=10):
            ijk = np.append(mask.grid_coords(int(mi)), 1.0)
            assert np.allclose(voxel_to_world(mask, int(mi)), (aff @ ijk)[:3])

    def test_vectorized_matches_scalar(self, rng):
        grid = mni_like_grid()
        mask = Mask.full(grid)
        idx = rng.integers(0, mask.m, size=8)
        batch = voxel_to_world(mask, idx)
        for row, mi in zip(batch, idx):
            assert np.array_equal(row, voxel_to_world(mask, int(mi)))


class TestVectors:
    def test_subject_stack_validates_shape(self, rng):
        mask = line_mask(4)
        with pytest.raises(ParamError):
            SubjectStack(mask, rng.standard_normal((3, 5)))

    def test_subject_stack_rejects_nonfinite(self):
        mask = line_mask(3)
        data = np.array([[1.0, np.inf, 0.0]], dtype=np.float32)
        with pytest.raises(DataError):
            SubjectStack(mask, data)

    def test_subject_stack_casts_to_float32(self, rng):
        mask = line_mask(3)
        stack = SubjectStack(mask, rng.standard_normal((2, 3)))
        assert stack.data.dtype == np.float32
        assert stack.n_subjects == 2

    def test_pvalues_range_checked(self):
        mask = line_mask(2)
        with pytest.raises(DataError):
            PValueVector(mask, np.array([0.5, 1.5]))
        with pytest.raises(DataError):
            PValueVector(mask, np.array([-0.1, 0.5]))

    def test_data_is_readonly(self, rng):
        mask = line_mask(3)
        stack = SubjectStack(mask, rng.standard_normal((2, 3)))
        with pytest.raises(ValueError):
            stack.data[0, 0] = 1.0
