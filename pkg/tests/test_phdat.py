import struct

import numpy as np
import pytest

from posthoc.data import Grid3, Mask, SubjectStack
from posthoc.errors import FormatError, IoError
from posthoc.phdat import read_phdat, read_pnul, write_phdat, write_pnul


def tiny_stack():
    grid = Grid3.from_voxel_size(2, 1, 1, (2.0, 2.0, 2.0), origin=(-1.0, 0.0, 0.0))
    mask = Mask(grid, np.array([True, True]))
    return SubjectStack(mask, np.array([[1.5, -2.0]], dtype=np.float32))


def expected_tiny_bytes():
    # layout: magic, u32 dims + n_subjects, f32 voxel size, f64 affine, u8 mask, f32 data
    aff = np.diag([2.0, 2.0, 2.0, 1.0])
    aff[:3, 3] = (-1.0, 0.0, 0.0)
    return (
        b"PHD1"
        + struct.pack("<4I", 2, 1, 1, 1)
        + struct.pack("<3f", 2.0, 2.0, 2.0)
        + struct.pack("<16d", *aff.reshape(-1))
        + bytes([1, 1])
        + struct.pack("<2f", 1.5, -2.0)
    )


class TestStackFormat:
    def test_byte_layout_matches_hand_built_file(self, tmp_path):
        path = tmp_path / "tiny.phdat"
        write_phdat(path, tiny_stack())
        assert path.read_bytes() == expected_tiny_bytes()

    def test_hand_built_file_parses(self, tmp_path):
        path = tmp_path / "tiny.phdat"
        path.write_bytes(expected_tiny_bytes())
        stack = read_phdat(path)
        assert stack.n_subjects == 1
        assert stack.mask.grid.shape == (2, 1, 1)
        assert stack.mask.grid.voxel_size == (2.0, 2.0, 2.0)
        assert np.array_equal(stack.data, np.array([[1.5, -2.0]], dtype=np.float32))

    def test_roundtrip_is_bit_exact(self, tmp_path, rng):
        for case in range(20):
            dims = rng.integers(1, 6, size=3)
            # voxel sizes are stored as f32, so pick f32-representable values
            sizes = tuple(float(np.float32(v)) for v in rng.uniform(0.5, 4.0, size=3))
            grid = Grid3.from_voxel_size(
                *map(int, dims), sizes, tuple(rng.uniform(-100.0, 10.0, size=3))
            )
            inside = rng.random(grid.n_voxels) < 0.7
            if not inside.any():
                inside[0] = True
            mask = Mask(grid, inside)
            n = int(rng.integers(1, 6))
            scale = 10.0 ** int(rng.integers(-3, 4))
            data = (rng.standard_normal((n, mask.m)) * scale).astype(np.float32)
            path = tmp_path / f"rt{case}.phdat"
            write_phdat(path, SubjectStack(mask, data))
            back = read_phdat(path)
            assert back.mask.grid.shape == grid.shape
            assert back.mask.grid.voxel_size == grid.voxel_size
            assert np.array_equal(back.mask.grid.affine, grid.affine)
            assert np.array_equal(back.mask.inside, mask.inside)
            assert back.data.tobytes() == data.tobytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.phdat"
        path.write_bytes(b"XXXX" + expected_tiny_bytes()[4:])
        with pytest.raises(FormatError):
            read_phdat(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short.phdat"
        path.write_bytes(expected_tiny_bytes()[:20])
        with pytest.raises(FormatError):
            read_phdat(path)

    def test_truncated_data(self, tmp_path):
        path = tmp_path / "cut.phdat"
        path.write_bytes(expected_tiny_bytes()[:-4])
        with pytest.raises(FormatError):
            read_phdat(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "fat.phdat"
        path.write_bytes(expected_tiny_bytes() + b"\x00")
        with pytest.raises(FormatError):
            read_phdat(path)

    def test_mask_bytes_must_be_binary(self, tmp_path):
        raw = bytearray(expected_tiny_bytes())
        raw[-9] = 2  # first mask byte
        path = tmp_path / "badmask.phdat"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            read_phdat(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            read_phdat(tmp_path / "absent.phdat")


class TestNullCacheFormat:
    def test_roundtrip(self, tmp_path, rng):
        rows = np.sort(rng.random((7, 11)), axis=1)
        path = tmp_path / "null.pnul"
        write_pnul(path, rows, seed=123456789)
        back, seed = read_pnul(path)
        assert seed == 123456789
        assert back.tobytes() == rows.tobytes()

    def test_byte_layout(self, tmp_path):
        rows = np.array([[0.25, 0.5]])
        path = tmp_path / "one.pnul"
        write_pnul(path, rows, seed=7)
        expected = (
            b"PNUL1" + struct.pack("<2IQ", 1, 2, 7) + struct.pack("<2d", 0.25, 0.5)
        )
        assert path.read_bytes() == expected

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pnul"
        path.write_bytes(b"JUNK!" + struct.pack("<2IQ", 1, 1, 0) + struct.pack("<d", 0.5))
        with pytest.raises(FormatError):
            read_pnul(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "cut.pnul"
        path.write_bytes(b"PNUL1" + struct.pack("<2IQ", 2, 3, 0) + b"\x00" * 10)
        with pytest.raises(FormatError):
            read_pnul(path)

    def test_trailing(self, tmp_path):
        rows = np.array([[0.5]])
        path = tmp_path / "fat.pnul"
        write_pnul(path, rows, seed=1)
        path.write_bytes(path.read_bytes() + b"zz")
        with pytest.raises(FormatError):
            read_pnul(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            read_pnul(tmp_path / "absent.pnul")
