import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowcomm import extractor as ex
from flowcomm import synth
from flowcomm.flow import FlowEstimatorParams, estimate_flow
from flowcomm.video import FlowField, PatchGrid


def quadratic_field(grid: PatchGrid, phi: np.ndarray) -> ex.PatchFlowGrid:
    ii, jj = np.meshgrid(np.arange(grid.rows), np.arange(grid.cols), indexing="ij")
    return ex.PatchFlowGrid(grid, ex.position_features(ii, jj) @ phi)


GRID_14 = PatchGrid(16, 16, 14, 14)


class TestPatchMeanFlow:
    def test_constant_field(self):
        flow = FlowField(np.full((32, 32), 3.0), np.full((32, 32), -1.0))
        pf = ex.patch_mean_flow(flow, PatchGrid.for_shape(32, 32, 16, 16))
        assert np.allclose(pf.mean_flow[..., 0], 3.0)
        assert np.allclose(pf.mean_flow[..., 1], -1.0)

    def test_zero_field(self):
        flow = FlowField(np.zeros((32, 32)), np.zeros((32, 32)))
        pf = ex.patch_mean_flow(flow, PatchGrid.for_shape(32, 32, 16, 16))
        assert not pf.mean_flow.any()

    def test_half_patch(self):
        u = np.zeros((16, 16))
        u[:, :8] = 1.0
        pf = ex.patch_mean_flow(FlowField(u, np.zeros((16, 16))), PatchGrid.for_shape(16, 16, 16, 16))
        assert pf.mean_flow[0, 0, 0] == pytest.approx(0.5)

    def test_boundary_patch_uses_valid_pixels_only(self):
        # 20x20 field of ones: the padded border patch must still average to 1
        flow = FlowField(np.ones((20, 20)), np.ones((20, 20)))
        pf = ex.patch_mean_flow(flow, PatchGrid.for_shape(20, 20, 16, 16))
        assert np.allclose(pf.mean_flow, 1.0)


class TestLsre:
    POSITIONS = np.array([(0, 0), (0, 1), (1, 0), (2, 2), (3, 1), (1, 3)], dtype=np.float64)

    def test_constant_field(self):
        flows = np.tile([2.0, 1.0], (6, 1))
        model = ex.fit_background_lstsq(self.POSITIONS, flows)
        assert np.allclose(model.phi[:5], 0.0, atol=1e-8)
        assert np.allclose(model.phi[5], [2.0, 1.0], atol=1e-8)

    def test_plant_and_recover(self):
        phi = np.zeros((6, 2))
        phi[0, 0] = 0.1   # u = 0.1 i^2
        phi[4, 1] = -0.2  # v = -0.2 j
        q = ex.position_features(self.POSITIONS[:, 0], self.POSITIONS[:, 1])
        model = ex.fit_background_lstsq(self.POSITIONS, q @ phi)
        assert np.abs(model.phi - phi).max() < 1e-8

    def test_fit_is_exact_on_samples(self):
        rng = np.random.default_rng(3)
        flows = rng.standard_normal((6, 2))
        model = ex.fit_background_lstsq(self.POSITIONS, flows)
        q = ex.position_features(self.POSITIONS[:, 0], self.POSITIONS[:, 1])
        assert np.abs(q @ model.phi - flows).max() < 1e-8

    def test_collinear_positions_degenerate(self):
        positions = np.array([(0, j) for j in range(6)], dtype=np.float64)  # all i equal
        with pytest.raises(ex.DegenerateSampleError):
            ex.fit_background_lstsq(positions, np.zeros((6, 2)))


class TestRansac:
    def test_pure_quadratic_recovered(self):
        phi = np.random.default_rng(0).normal(size=(6, 2)) * 0.1
        pf = quadratic_field(GRID_14, phi)
        model = ex.ransac_background(pf, ex.ExtractorParams(), seed=42)
        assert np.abs(model.phi - phi).max() < 1e-6
        resid = np.linalg.norm(
            pf.mean_flow.reshape(-1, 2)
            - ex.position_features(*np.meshgrid(np.arange(14), np.arange(14), indexing="ij")).reshape(-1, 6)
            @ model.phi,
            axis=1,
        )
        assert np.all(resid < ex.ExtractorParams().inlier_eps)

    def test_outliers_excluded_exactly(self):
        rng = np.random.default_rng(5)
        phi = rng.normal(size=(6, 2)) * 0.05
        pf = quadratic_field(GRID_14, phi)
        flat = pf.mean_flow.reshape(-1, 2).copy()
        outliers = rng.choice(196, size=19, replace=False)
        flat[outliers] += [10.0, 10.0]
        pf = ex.PatchFlowGrid(GRID_14, flat.reshape(14, 14, 2))
        params = ex.ExtractorParams()
        model = ex.ransac_background(pf, params, seed=6)
        ii, jj = np.meshgrid(np.arange(14), np.arange(14), indexing="ij")
        resid = np.linalg.norm(flat - ex.position_features(ii, jj).reshape(-1, 6) @ model.phi, axis=1)
        assert set(np.where(resid >= params.inlier_eps)[0]) == set(outliers)
        assert np.abs(model.phi - phi).max() < 1e-6

    def test_zero_field(self):
        pf = ex.PatchFlowGrid(GRID_14, np.zeros((14, 14, 2)))
        model = ex.ransac_background(pf, ex.ExtractorParams(), seed=7)
        assert np.abs(model.phi).max() < 1e-9

    def test_recovery_near_outlier_bound(self):
        # noiseless inliers with 35% outliers, still under the 40% design limit
        rng = np.random.default_rng(30)
        phi = rng.normal(size=(6, 2)) * 0.05
        pf = quadratic_field(GRID_14, phi)
        flat = pf.mean_flow.reshape(-1, 2).copy()
        outliers = rng.choice(196, size=68, replace=False)
        flat[outliers] += rng.uniform(5.0, 12.0, size=(68, 2))
        model = ex.ransac_background(
            ex.PatchFlowGrid(GRID_14, flat.reshape(14, 14, 2)), ex.ExtractorParams(), seed=31
        )
        assert np.abs(model.phi - phi).max() < 1e-6

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        pf = ex.PatchFlowGrid(GRID_14, rng.standard_normal((14, 14, 2)))
        a = ex.ransac_background(pf, ex.ExtractorParams(), seed=9)
        b = ex.ransac_background(pf, ex.ExtractorParams(), seed=9)
        assert np.array_equal(a.phi, b.phi)

    def test_too_few_patches(self):
        grid = PatchGrid(16, 16, 1, 2)
        with pytest.raises(ValueError):
            ex.ransac_background(ex.PatchFlowGrid(grid, np.zeros((1, 2, 2))), ex.ExtractorParams(), 0)


class TestAdaptiveThreshold:
    def test_zero_field(self):
        pf = ex.PatchFlowGrid(GRID_14, np.zeros((14, 14, 2)))
        assert ex.adaptive_threshold(pf, ex.ExtractorParams(alpha1=0.5)) == pytest.approx(0.5)

    def test_three_four_five(self):
        pf = ex.PatchFlowGrid(GRID_14, np.tile([3.0, 4.0], (14, 14, 1)))
        l_th = ex.adaptive_threshold(pf, ex.ExtractorParams(alpha1=0.5, alpha2=1.0))
        assert l_th == pytest.approx(5.5)

    def test_alpha2_zero(self):
        rng = np.random.default_rng(10)
        pf = ex.PatchFlowGrid(GRID_14, rng.standard_normal((14, 14, 2)))
        l_th = ex.adaptive_threshold(pf, ex.ExtractorParams(alpha1=0.5, alpha2=0.0))
        assert l_th == pytest.approx(0.5)


class TestClassify:
    @staticmethod
    def constant_background(u, v):
        phi = np.zeros((6, 2))
        phi[5] = [u, v]
        return ex.BackgroundModel(phi)

    def test_perfect_fit_is_less_important(self):
        model = self.constant_background(1.0, 0.0)
        pf = ex.PatchFlowGrid(GRID_14, np.tile([1.0, 0.0], (14, 14, 1)))
        important, resid, _ = ex.classify_patches(pf, model, l_th=0.5, params=ex.ExtractorParams())
        assert not important.any()
        assert np.allclose(resid, 0.0)

    def test_aligned_motion_blocked_by_direction(self):
        # magnitude passes but the vectors are parallel: zoom-alignment rule
        l_th = 0.5
        model = self.constant_background(1.0, 0.0)
        flows = np.tile([1.0, 0.0], (14, 14, 1))
        flows[3, 3] = [1.0 + 2 * l_th, 0.0]
        pf = ex.PatchFlowGrid(GRID_14, flows)
        important, _, _ = ex.classify_patches(pf, model, l_th, ex.ExtractorParams())
        assert not important[3, 3]

    def test_orthogonal_motion_selected(self):
        l_th = 0.5
        model = self.constant_background(1.0, 0.0)
        flows = np.tile([1.0, 0.0], (14, 14, 1))
        flows[3, 3] = [0.0, 1.0 + 2 * l_th]
        pf = ex.PatchFlowGrid(GRID_14, flows)
        important, _, _ = ex.classify_patches(pf, model, l_th, ex.ExtractorParams())
        assert important[3, 3]
        assert important.sum() == 1

    def test_zero_vectors_count_as_aligned(self):
        model = self.constant_background(0.0, 0.0)
        flows = np.tile([9.0, 0.0], (14, 14, 1))
        pf = ex.PatchFlowGrid(GRID_14, flows)
        important, _, _ = ex.classify_patches(pf, model, l_th=0.5, params=ex.ExtractorParams())
        # background prediction is the zero vector -> cos defined as 1 -> blocked
        assert not important.any()


class TestSelect:
    def test_rho_zero_selects_all(self):
        grid = PatchGrid(16, 16, 4, 4)
        resid = np.random.default_rng(11).random((4, 4))
        picked, bitmap = ex.select_patches(np.zeros((4, 4), bool), resid, grid, 0.0)
        assert len(picked) == 16 and bitmap.all()

    def test_rounding_rule(self):
        assert ex.selection_count(0.9, 196) == 20  # round(19.6)
        assert ex.selection_count(0.5, 3) == 2     # round-half-away: 1.5 -> 2

    def test_spillover(self):
        grid = PatchGrid(16, 16, 4, 4)
        rng = np.random.default_rng(12)
        resid = rng.random((4, 4))
        important = np.zeros((4, 4), bool)
        important.flat[[0, 3, 5, 9, 14]] = True  # 5 important patches
        picked, _ = ex.select_patches(important, resid, grid, 0.5)  # n_sel = 8
        assert len(picked) == 8
        picked_set = set(picked)
        assert {divmod(k, 4) for k in (0, 3, 5, 9, 14)} <= picked_set
        # the 3 spillover picks are the top less-important residuals
        lsr = [(-resid[i, j], i, j) for i in range(4) for j in range(4) if not important[i, j]]
        lsr.sort()
        assert {(i, j) for _, i, j in lsr[:3]} <= picked_set


class TestExtract:
    def test_static_video_selects_from_lsr(self):
        zero = [FlowField(np.zeros((64, 64)), np.zeros((64, 64)))]
        grid = PatchGrid.for_shape(64, 64, 16, 16)
        sel = ex.extract(zero, grid, ex.ExtractorParams(mask_ratio=0.9), seed=13)
        assert not sel.important.any()           # p_sr empty everywhere
        assert len(sel.selected) == ex.selection_count(0.9, 16)

    def test_block_motion_coverage(self):
        video, mask0 = synth.block_motion_video(
            160, 160, 2, [(32, 48, 16, 32)], dx=-2, dy=0, seed=14, bg_dx=1, bg_dy=0
        )
        flows = estimate_flow(video, FlowEstimatorParams(levels=2))
        grid = PatchGrid.for_shape(160, 160, 16, 16)
        gt = synth.block_motion_ground_truth(mask0, 16, 16)
        n_motion = int(gt.sum())
        rho = 1.0 - (n_motion + 4) / grid.n_patches
        sel = ex.extract(flows, grid, ex.ExtractorParams(mask_ratio=rho), seed=15)
        selected = {(s.i, s.j) for s in sel.selected if s.t == 0}
        assert {(i, j) for i, j in zip(*np.where(gt))} <= selected

    def test_rho_zero_all_ones(self):
        video = synth.static_video(48, 48, 3, seed=16)
        flows = estimate_flow(video, FlowEstimatorParams(levels=2))
        grid = PatchGrid.for_shape(48, 48, 16, 16)
        sel = ex.extract(flows, grid, ex.ExtractorParams(mask_ratio=0.0), seed=17)
        assert sel.xi.all()

    def test_determinism(self):
        rng = np.random.default_rng(18)
        flows = [FlowField(rng.standard_normal((64, 64)), rng.standard_normal((64, 64)))]
        grid = PatchGrid.for_shape(64, 64, 16, 16)
        a = ex.extract(flows, grid, ex.ExtractorParams(mask_ratio=0.5), seed=19)
        b = ex.extract(flows, grid, ex.ExtractorParams(mask_ratio=0.5), seed=19)
        assert np.array_equal(a.xi, b.xi)
        assert [(s.t, s.i, s.j) for s in a.selected] == [(s.t, s.i, s.j) for s in b.selected]

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.0, 0.99), st.integers(0, 2**31 - 1))
    def test_selection_count_property(self, rho, seed):
        rng = np.random.default_rng(seed)
        flows = [FlowField(rng.standard_normal((48, 48)), rng.standard_normal((48, 48)))]
        grid = PatchGrid.for_shape(48, 48, 16, 16)
        sel = ex.extract(flows, grid, ex.ExtractorParams(mask_ratio=rho), seed=seed)
        assert len(sel.selected) == ex.selection_count(rho, grid.n_patches)
        assert int(sel.xi.sum()) == ex.selection_count(rho, grid.n_patches)

    def test_global_shift_leaves_selection_set_unchanged(self):
        # constant camera motion is absorbed by the background model
        rng = np.random.default_rng(20)
        base_u = np.zeros((96, 96))
        base_v = np.zeros((96, 96))
        base_u += rng.normal(0, 0.02, (96, 96))  # background jitter
        base_u[16:32, 16:48] = 4.0               # two moving patches
        base_v[64:80, 64:80] = -3.5              # one more
        grid = PatchGrid.for_shape(96, 96, 16, 16)
        params = ex.ExtractorParams(mask_ratio=0.8)  # n_sel = 7 >= 3 motion patches
        for shift in ((0.0, 0.0), (2.0, -1.0), (-3.0, 3.0)):
            flows = [FlowField(base_u + shift[0], base_v + shift[1])]
            sel = ex.extract(flows, grid, params, seed=21)
            picked = {(s.i, s.j) for s in sel.selected}
            if shift == (0.0, 0.0):
                reference = picked
            else:
                assert picked == reference

    def test_partition_into_sr_and_lsr(self):
        rng = np.random.default_rng(22)
        flows = [FlowField(rng.standard_normal((64, 64)) * 2, rng.standard_normal((64, 64)) * 2)]
        grid = PatchGrid.for_shape(64, 64, 16, 16)
        sel = ex.extract(flows, grid, ex.ExtractorParams(mask_ratio=0.3), seed=23)
        # important is a subset of all patches; its complement is the lsr set
        assert sel.important.shape == sel.xi.shape
        assert sel.important.dtype == bool


class TestSerialization:
    def test_roundtrip(self):
        rng = np.random.default_rng(24)
        flows = [
            FlowField(rng.standard_normal((40, 56)).astype(np.float32).astype(np.float64),
                      rng.standard_normal((40, 56)).astype(np.float32).astype(np.float64))
            for _ in range(3)
        ]
        grid = PatchGrid.for_shape(40, 56, 16, 16)
        sel = ex.extract(flows, grid, ex.ExtractorParams(mask_ratio=0.4), seed=25)
        back = ex.SelectionResult.from_bytes(sel.to_bytes())
        assert back.grid == sel.grid
        assert back.mask_ratio == sel.mask_ratio
        assert np.array_equal(back.xi, sel.xi)
        assert [(s.t, s.i, s.j) for s in back.selected] == [(s.t, s.i, s.j) for s in sel.selected]
        for a, b in zip(sel.selected, back.selected):
            assert np.array_equal(b.payload, a.payload.astype(np.float32).astype(np.float64))

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            ex.SelectionResult.from_bytes(b"nope" + b"\0" * 64)
