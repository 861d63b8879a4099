"""Motion-compensated video reconstruction from the first frame and flow patches.

Masked grid positions carry zero flow, so unselected regions copy straight
from the previous reconstructed frame.
"""
from __future__ import annotations

import numpy as np
from scipy.ndimage import map_coordinates

from .extractor import SelectionResult
from .video import Video


def dense_flow_from_selection(sel: SelectionResult, t: int) -> np.ndarray:
    """(H, W, 2) flow for flow-frame t: selected payloads in place, zero elsewhere."""
    grid = sel.grid
    full = np.zeros((2, grid.rows * grid.patch_h, grid.cols * grid.patch_w))
    for s in sel.selected_for_frame(t):
        full[
            :,
            s.i * grid.patch_h : (s.i + 1) * grid.patch_h,
            s.j * grid.patch_w : (s.j + 1) * grid.patch_w,
        ] = s.payload
    return np.moveaxis(full[:, : sel.field_h, : sel.field_w], 0, -1)


def reconstruct_video(first_frame: np.ndarray, sel: SelectionResult, frame_rate: float = 25.0) -> Video:
    """Chain inverse warps: frame t samples frame t-1 at (x, y) - flow(x, y).

    first_frame: (H, W, 3) uint8. Output has 1 + T' frames, clipped to [0, 255].
    """
    first_frame = np.asarray(first_frame)
    if first_frame.shape[:2] != (sel.field_h, sel.field_w):
        raise ValueError(
            f"frame {first_frame.shape[:2]} does not match selection geometry "
            f"{(sel.field_h, sel.field_w)}"
        )
    h, w = sel.field_h, sel.field_w
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    current = first_frame.astype(np.float64)
    frames = [first_frame.astype(np.uint8)]
    for t in range(sel.n_flow_frames):
        flow = dense_flow_from_selection(sel, t)
        rows = yy - flow[:, :, 1]
        cols = xx - flow[:, :, 0]
        warped = np.stack(
            [map_coordinates(current[:, :, c], [rows, cols], order=1, mode="nearest") for c in range(3)],
            axis=-1,
        )
        current = np.clip(warped, 0.0, 255.0)
        frames.append(np.clip(np.rint(current), 0, 255).astype(np.uint8))
    return Video(np.stack(frames), frame_rate)
