import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowcomm import synth
from flowcomm.video import (
    FlowField,
    FormatError,
    PatchGrid,
    Video,
    assemble_patches,
    load_ppm,
    load_ppm_sequence,
    partition_patches,
    read_flo,
    save_ppm,
    save_ppm_sequence,
    write_flo,
)


class TestPpm:
    def test_all_zero_pair(self, tmp_path):
        zero = np.zeros((4, 4, 3), dtype=np.uint8)
        save_ppm(zero, tmp_path / "a.ppm")
        save_ppm(zero, tmp_path / "b.ppm")
        video = load_ppm_sequence(tmp_path)
        assert video.n_frames == 2
        assert not video.frames.any()

    def test_single_file_rejected(self, tmp_path):
        save_ppm(np.zeros((4, 4, 3), dtype=np.uint8), tmp_path / "a.ppm")
        with pytest.raises(ValueError, match="insufficient frames"):
            load_ppm_sequence(tmp_path)

    def test_roundtrip_bit_exact(self, tmp_path):
        video = synth.static_video(16, 16, 2, seed=0)
        frames = np.random.default_rng(1).integers(0, 256, size=(8, 16, 16, 3)).astype(np.uint8)
        video = Video(frames)
        save_ppm_sequence(video, tmp_path / "seq")
        again = load_ppm_sequence(tmp_path / "seq")
        assert np.array_equal(again.frames, video.frames)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_ppm_sequence(tmp_path / "nowhere")

    def test_dimension_mismatch(self, tmp_path):
        save_ppm(np.zeros((4, 4, 3), dtype=np.uint8), tmp_path / "a.ppm")
        save_ppm(np.zeros((5, 4, 3), dtype=np.uint8), tmp_path / "b.ppm")
        with pytest.raises(ValueError, match="dimension mismatch"):
            load_ppm_sequence(tmp_path)

    def test_non_p6_header(self, tmp_path):
        (tmp_path / "a.ppm").write_bytes(b"P3\n4 4\n255\n" + b"0 " * 48)
        with pytest.raises(FormatError):
            load_ppm(tmp_path / "a.ppm")

    def test_comment_in_header(self, tmp_path):
        raster = bytes(range(4 * 2 * 3))
        (tmp_path / "a.ppm").write_bytes(b"P6\n# made by hand\n4 2\n255\n" + raster)
        frame = load_ppm(tmp_path / "a.ppm")
        assert frame.shape == (2, 4, 3)
        assert frame.tobytes() == raster

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
    def test_roundtrip_property(self, tmp_path_factory, h, w, seed):
        frame = np.random.default_rng(seed).integers(0, 256, size=(h, w, 3)).astype(np.uint8)
        path = tmp_path_factory.mktemp("ppm") / "f.ppm"
        save_ppm(frame, path)
        assert np.array_equal(load_ppm(path), frame)


class TestFlo:
    def test_zero_roundtrip(self, tmp_path):
        flow = FlowField(np.zeros((2, 2)), np.zeros((2, 2)))
        write_flo(flow, tmp_path / "z.flo")
        back = read_flo(tmp_path / "z.flo")
        assert np.array_equal(back.u, flow.u) and np.array_equal(back.v, flow.v)

    def test_representable_values_exact(self, tmp_path):
        flow = FlowField(np.full((3, 5), 1.5), np.full((3, 5), -2.25))
        write_flo(flow, tmp_path / "r.flo")
        back = read_flo(tmp_path / "r.flo")
        assert np.array_equal(back.u, flow.u) and np.array_equal(back.v, flow.v)

    def test_random_field_seed7(self, tmp_path):
        rng = np.random.default_rng(7)
        # values pre-quantized to float32 so the 32-bit container is exact
        u = rng.standard_normal((16, 16)).astype(np.float32).astype(np.float64)
        v = rng.standard_normal((16, 16)).astype(np.float32).astype(np.float64)
        flow = FlowField(u, v)
        write_flo(flow, tmp_path / "x.flo")
        back = read_flo(tmp_path / "x.flo")
        assert np.abs(back.u - u).max() == 0.0
        assert np.abs(back.v - v).max() == 0.0

    def test_bad_magic(self, tmp_path):
        (tmp_path / "bad.flo").write_bytes(b"XXXX" + b"\0" * 16)
        with pytest.raises(FormatError, match="magic"):
            read_flo(tmp_path / "bad.flo")

    def test_truncated(self, tmp_path):
        flow = FlowField(np.zeros((4, 4)), np.zeros((4, 4)))
        write_flo(flow, tmp_path / "t.flo")
        blob = (tmp_path / "t.flo").read_bytes()
        (tmp_path / "t.flo").write_bytes(blob[:-7])
        with pytest.raises(FormatError, match="truncated"):
            read_flo(tmp_path / "t.flo")

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 10), st.integers(1, 10), st.integers(0, 2**32 - 1))
    def test_roundtrip_property(self, tmp_path_factory, h, w, seed):
        rng = np.random.default_rng(seed)
        u = (rng.uniform(-50, 50, (h, w))).astype(np.float32).astype(np.float64)
        v = (rng.uniform(-50, 50, (h, w))).astype(np.float32).astype(np.float64)
        path = tmp_path_factory.mktemp("flo") / "f.flo"
        write_flo(FlowField(u, v), path)
        back = read_flo(path)
        assert np.array_equal(back.u, u) and np.array_equal(back.v, v)


class TestPartition:
    def test_identity_partition(self):
        rng = np.random.default_rng(0)
        flow = FlowField(rng.standard_normal((16, 16)), rng.standard_normal((16, 16)))
        grid = PatchGrid.for_shape(16, 16, 16, 16)
        patches = partition_patches(flow, grid)
        assert len(patches) == 1
        i, j, p = patches[0]
        assert (i, j) == (0, 0)
        assert np.array_equal(p[0], flow.u) and np.array_equal(p[1], flow.v)

    def test_224_grid_count(self):
        flow = FlowField(np.zeros((224, 224)), np.zeros((224, 224)))
        grid = PatchGrid.for_shape(224, 224, 16, 16)
        assert grid.rows == grid.cols == 14
        assert len(partition_patches(flow, grid)) == 196

    def test_boundary_padding(self):
        rng = np.random.default_rng(1)
        flow = FlowField(rng.standard_normal((20, 20)), rng.standard_normal((20, 20)))
        grid = PatchGrid.for_shape(20, 20, 16, 16)
        patches = partition_patches(flow, grid)
        assert len(patches) == 4
        by_pos = {(i, j): p for i, j, p in patches}
        # bottom-right patch holds a 4x4 valid corner, zero elsewhere
        corner = by_pos[(1, 1)]
        assert np.array_equal(corner[0, :4, :4], flow.u[16:, 16:])
        assert not corner[0, 4:, :].any() and not corner[0, :, 4:].any()

    def test_oversized_patch_rejected(self):
        with pytest.raises(ValueError):
            PatchGrid.for_shape(8, 8, 16, 16)

    def test_reassemble_identity(self):
        rng = np.random.default_rng(2)
        flow = FlowField(rng.standard_normal((30, 41)), rng.standard_normal((30, 41)))
        grid = PatchGrid.for_shape(30, 41, 16, 16)
        back = assemble_patches(partition_patches(flow, grid), grid, 30, 41)
        assert np.array_equal(back.u, flow.u) and np.array_equal(back.v, flow.v)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 40), st.integers(1, 40))
    def test_patch_count_property(self, h, w, ph, pw):
        if ph > h or pw > w:
            with pytest.raises(ValueError):
                PatchGrid.for_shape(h, w, ph, pw)
            return
        grid = PatchGrid.for_shape(h, w, ph, pw)
        assert grid.n_patches == -(-h // ph) * -(-w // pw)
