"""Patch-level motion semantics: quadratic background fit, RANSAC, masked selection."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .video import FlowField, PatchGrid, partition_patches

SELECTION_MAGIC = b"FCSR"


class DegenerateSampleError(ValueError):
    """Sampled patch positions cannot determine the quadratic background model."""


@dataclass(frozen=True)
class ExtractorParams:
    alpha1: float = 0.5          # threshold offset, px
    alpha2: float = 1.0          # threshold gain on mean flow magnitude
    theta_th: float = 0.98       # cosine threshold; background aligns above it
    ransac_iters: int = 64
    inlier_eps: float = 0.5      # px, L2 residual for inlier vote
    mask_ratio: float = 0.0

    def __post_init__(self):
        if self.ransac_iters < 1:
            raise ValueError("ransac_iters must be >= 1")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ValueError("mask_ratio must lie in [0, 1)")


@dataclass(frozen=True)
class PatchFlowGrid:
    """Per-patch mean flow: mean_flow[i, j] = (mean u, mean v)."""

    grid: PatchGrid
    mean_flow: np.ndarray  # (rows, cols, 2)


@dataclass(frozen=True)
class BackgroundModel:
    """Quadratic-in-position background flow: predict(i, j) = phi^T q(i, j)."""

    phi: np.ndarray  # (6, 2)

    def predict(self, i, j) -> np.ndarray:
        q = position_features(i, j)
        return q @ self.phi


def position_features(i, j) -> np.ndarray:
    """q(i, j) = [i^2, j^2, ij, i, j, 1], broadcast over array inputs."""
    i = np.asarray(i, dtype=np.float64)
    j = np.asarray(j, dtype=np.float64)
    return np.stack([i * i, j * j, i * j, i, j, np.ones_like(i)], axis=-1)


@dataclass
class SelectedPatch:
    t: int
    i: int
    j: int
    payload: np.ndarray  # (2, patch_h, patch_w)


@dataclass
class SelectionResult:
    """Selected flow-patch payloads plus the per-frame position bitmap."""

    grid: PatchGrid
    mask_ratio: float
    selected: list[SelectedPatch]
    xi: np.ndarray  # (T', rows, cols) bool
    field_h: int
    field_w: int
    important: np.ndarray | None = None  # (T', rows, cols) bool, pre-selection classification

    @property
    def n_flow_frames(self) -> int:
        return self.xi.shape[0]

    def selected_for_frame(self, t: int) -> list[SelectedPatch]:
        return [s for s in self.selected if s.t == t]

    def to_bytes(self) -> bytes:
        """Compact binary form.

        Layout: magic, header (T', rows, cols, patch_h, patch_w, field_h,
        field_w, mask_ratio), packed xi bitmap, per-frame selected patch
        indices in selection order (uint32 row-major linear index), then all
        payloads as float32 in the same order. The index list is what lets a
        reader re-associate payloads with positions: the bitmap alone does not
        encode the selection ordering the payload stream follows.
        """
        head = SELECTION_MAGIC + struct.pack(
            "<IIIIIIId",
            self.n_flow_frames,
            self.grid.rows,
            self.grid.cols,
            self.grid.patch_h,
            self.grid.patch_w,
            self.field_h,
            self.field_w,
            self.mask_ratio,
        )
        bits = np.packbits(self.xi.reshape(-1).astype(np.uint8)).tobytes()
        order = []
        for t in range(self.n_flow_frames):
            frame_sel = self.selected_for_frame(t)
            order.append(struct.pack("<I", len(frame_sel)))
            order.extend(struct.pack("<I", s.i * self.grid.cols + s.j) for s in frame_sel)
        payloads = np.concatenate(
            [s.payload.astype("<f4").reshape(-1) for s in self.selected]
        ) if self.selected else np.zeros(0, dtype="<f4")
        return head + bits + b"".join(order) + payloads.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SelectionResult":
        if blob[:4] != SELECTION_MAGIC:
            raise ValueError("not a selection blob")
        t_prime, rows, cols, ph, pw, fh, fw, rho = struct.unpack("<IIIIIIId", blob[4:40])
        grid = PatchGrid(ph, pw, rows, cols)
        n_bits = t_prime * rows * cols
        n_bytes = -(-n_bits // 8)
        pos = 40
        xi = (
            np.unpackbits(np.frombuffer(blob[pos : pos + n_bytes], dtype=np.uint8))[:n_bits]
            .reshape(t_prime, rows, cols)
            .astype(bool)
        )
        pos += n_bytes
        frame_indices = []
        for _ in range(t_prime):
            (count,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            idx = struct.unpack_from(f"<{count}I", blob, pos)
            pos += 4 * count
            frame_indices.append(idx)
        selected = []
        patch_floats = 2 * ph * pw
        for t, idx in enumerate(frame_indices):
            for lin in idx:
                payload = (
                    np.frombuffer(blob, dtype="<f4", count=patch_floats, offset=pos)
                    .astype(np.float64)
                    .reshape(2, ph, pw)
                )
                pos += 4 * patch_floats
                selected.append(SelectedPatch(t, lin // cols, lin % cols, payload))
        return cls(grid, rho, selected, xi, fh, fw)


def patch_mean_flow(flow: FlowField, grid: PatchGrid) -> PatchFlowGrid:
    """Mean (u, v) per patch over the patch's in-field pixels (padding excluded)."""
    mean = np.zeros((grid.rows, grid.cols, 2))
    for i in range(grid.rows):
        for j in range(grid.cols):
            us = flow.u[i * grid.patch_h : (i + 1) * grid.patch_h, j * grid.patch_w : (j + 1) * grid.patch_w]
            vs = flow.v[i * grid.patch_h : (i + 1) * grid.patch_h, j * grid.patch_w : (j + 1) * grid.patch_w]
            mean[i, j, 0] = us.mean()
            mean[i, j, 1] = vs.mean()
    return PatchFlowGrid(grid, mean)


def fit_background_lstsq(
    positions: np.ndarray, flows: np.ndarray, singular_tol: float = 1e-9
) -> BackgroundModel:
    """Least-squares fit of the 6x2 quadratic model from exactly 6 patch samples.

    positions: (6, 2) of (i, j); flows: (6, 2) of (mean u, mean v).
    Raises DegenerateSampleError when the 6x6 design matrix is rank-deficient.
    """
    positions = np.asarray(positions, dtype=np.float64)
    flows = np.asarray(flows, dtype=np.float64)
    if positions.shape != (6, 2) or flows.shape != (6, 2):
        raise ValueError("exactly 6 (position, flow) samples required")
    q = position_features(positions[:, 0], positions[:, 1])  # (6, 6)
    if np.linalg.svd(q, compute_uv=False)[-1] < singular_tol:
        raise DegenerateSampleError("degenerate sample: singular design matrix")
    phi = np.linalg.solve(q, flows)  # column-wise solve of Q phi = P
    return BackgroundModel(phi)


def ransac_background(
    patch_flows: PatchFlowGrid, params: ExtractorParams, seed: int
) -> BackgroundModel:
    """Most-inliers quadratic background over ransac_iters random 6-subsets.

    Degenerate draws are redrawn up to a bounded retry count; ties on the
    inlier vote break toward the lower total inlier residual. Deterministic
    for a given seed.
    """
    grid = patch_flows.grid
    n = grid.n_patches
    if n < 6:
        raise ValueError("need at least 6 patches for background estimation")
    ii, jj = np.meshgrid(np.arange(grid.rows), np.arange(grid.cols), indexing="ij")
    positions = np.stack([ii.reshape(-1), jj.reshape(-1)], axis=1).astype(np.float64)
    flows = patch_flows.mean_flow.reshape(-1, 2)
    q_all = position_features(positions[:, 0], positions[:, 1])
    rng = np.random.default_rng(seed)

    best = None  # (inlier_count, -total_residual, model)
    for _ in range(params.ransac_iters):
        model = None
        for _retry in range(16):
            pick = rng.choice(n, size=6, replace=False)
            try:
                model = fit_background_lstsq(positions[pick], flows[pick])
                break
            except DegenerateSampleError:
                continue
        if model is None:
            continue
        residuals = np.linalg.norm(flows - q_all @ model.phi, axis=1)
        inliers = residuals < params.inlier_eps
        score = (int(inliers.sum()), -float(residuals[inliers].sum()))
        if best is None or score > best[0]:
            best = (score, model)
    if best is None:
        raise DegenerateSampleError("all RANSAC draws degenerate")
    return best[1]


def adaptive_threshold(patch_flows: PatchFlowGrid, params: ExtractorParams) -> float:
    """l_th = alpha1 + alpha2 * mean patch-flow magnitude over the frame."""
    mags = np.linalg.norm(patch_flows.mean_flow, axis=2)
    return params.alpha1 + params.alpha2 * float(mags.mean())


def _cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rowwise cosine; any zero vector is treated as aligned (cos = 1)."""
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    denom = na * nb
    safe = np.where(denom > 0, denom, 1.0)
    cos = np.sum(a * b, axis=-1) / safe
    return np.where(denom > 0, cos, 1.0)


def classify_patches(
    patch_flows: PatchFlowGrid, model: BackgroundModel, l_th: float, params: ExtractorParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split patches into important / less-important sets.

    A patch is important when its L1 residual against the background
    prediction exceeds l_th AND its direction departs from the predicted
    background direction (cosine below theta_th). Returns (important mask,
    residual L1 map, predicted background flow).
    """
    grid = patch_flows.grid
    ii, jj = np.meshgrid(np.arange(grid.rows), np.arange(grid.cols), indexing="ij")
    predicted = model.predict(ii, jj)  # (rows, cols, 2)
    resid = np.abs(patch_flows.mean_flow - predicted).sum(axis=2)
    cos = _cosine(patch_flows.mean_flow, predicted)
    important = (resid > l_th) & (cos < params.theta_th)
    return important, resid, predicted


def selection_count(mask_ratio: float, n_patches: int) -> int:
    """round-half-away-from-zero of (1 - rho) * N."""
    return int(math.floor((1.0 - mask_ratio) * n_patches + 0.5))


def select_patches(
    important: np.ndarray,
    resid: np.ndarray,
    grid: PatchGrid,
    mask_ratio: float,
) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Pick round((1-rho) * N) patches: important first, by descending residual.

    Spillover continues into the less-important set with the same sort key.
    Returns the picked (i, j) list in selection order and the frame's bitmap.
    """
    n_sel = selection_count(mask_ratio, grid.n_patches)
    order = []
    for want_important in (True, False):
        bucket = [
            (-resid[i, j], i, j)
            for i in range(grid.rows)
            for j in range(grid.cols)
            if important[i, j] == want_important
        ]
        bucket.sort()
        order.extend((i, j) for _, i, j in bucket)
    picked = order[:n_sel]
    bitmap = np.zeros((grid.rows, grid.cols), dtype=bool)
    for i, j in picked:
        bitmap[i, j] = True
    return picked, bitmap


def extract(
    flows: list[FlowField], grid: PatchGrid, params: ExtractorParams, seed: int
) -> SelectionResult:
    """Run the per-frame mean/background/threshold/classify/select pipeline."""
    if not flows:
        raise ValueError("no flow fields to extract from")
    xi = np.zeros((len(flows), grid.rows, grid.cols), dtype=bool)
    important_all = np.zeros_like(xi)
    selected: list[SelectedPatch] = []
    for t, flow in enumerate(flows):
        pf = patch_mean_flow(flow, grid)
        model = ransac_background(pf, params, seed ^ t)
        l_th = adaptive_threshold(pf, params)
        important, resid, _ = classify_patches(pf, model, l_th, params)
        picked, bitmap = select_patches(important, resid, grid, params.mask_ratio)
        xi[t] = bitmap
        important_all[t] = important
        patches = {(i, j): p for i, j, p in partition_patches(flow, grid)}
        selected.extend(SelectedPatch(t, i, j, patches[(i, j)]) for i, j in picked)
    return SelectionResult(
        grid, params.mask_ratio, selected, xi, flows[0].height, flows[0].width, important_all
    )
