"""End-to-end experiment runs: video -> flow -> selection -> channel -> quality rows."""
from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import channel as ch
from . import extractor as ex
from . import load as ld
from .config import ExperimentConfig, derive_seed
from .flow import estimate_flow
from .load import LoadBreakdown
from .metrics import QualityReport, frame_losses, motion_area_percentage
from .reconstruct import reconstruct_video
from .video import PatchGrid, Video, load_ppm_sequence


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and an inputs digest."""

    def __init__(self, stage: str, digest: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed (inputs {digest}): {cause}")
        self.stage = stage
        self.digest = digest
        self.cause = cause


def _digest(*parts) -> str:
    return hashlib.sha256("|".join(str(p) for p in parts).encode()).hexdigest()[:12]


@dataclass
class PointResult:
    video_id: str
    rho: float
    snr_db: float
    report: QualityReport
    breakdown: LoadBreakdown
    tx_seconds: float
    n_selected: int


def _stage(name, digest_parts, fn):
    try:
        return fn()
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, _digest(*digest_parts), exc) from exc


def transmit_selection(
    sel: ex.SelectionResult, cfg: ExperimentConfig, snr_linear: float, seed: int
) -> tuple[ex.SelectionResult, dict]:
    """Push the selected payloads through the analog leg of the link.

    The fading draw is seeded; noise power is set from the target SNR
    (sigma^2 = P |h|^2 / snr). Symbols are normalized so the per-symbol
    average power is gamma * P (the whole-vector normalization scaled by the
    symbol count), which makes the post-equalization symbol SNR equal the
    link SNR. The transmitter-side scale factor travels as error-free
    metadata alongside the bit payloads.
    """
    if not sel.selected:  # extreme mask ratios can round the selection to zero
        realization = ch.ChannelRealization(
            ch.sample_channel(cfg.link, seed).h,
            snr_linear,
            ch.capacity_per_s(cfg.link.bandwidth_hz, snr_linear),
        )
        return sel, {"n_symbols": 0, "rms_flow_error": 0.0, "realization": realization}
    payloads = np.stack([s.payload for s in sel.selected])
    symbols = ch.flow_encode(payloads, cfg.codec)
    realization = ch.sample_channel(cfg.link, seed)
    h = realization.h
    sigma2 = cfg.link.tx_power * abs(h) ** 2 / snr_linear
    realization = ch.ChannelRealization(
        h, snr_linear, ch.capacity_per_s(cfg.link.bandwidth_hz, snr_linear)
    )
    per_symbol = replace(cfg.codec, gamma=cfg.codec.gamma * symbols.size)
    normalized = ch.power_normalize(symbols, per_symbol, cfg.link.tx_power)
    scale = math.sqrt(per_symbol.gamma * cfg.link.tx_power) / float(
        np.sqrt(np.vdot(symbols, symbols).real)
    )
    received = ch.transmit_analog(normalized, realization, sigma2, derive_seed(seed, "noise"))
    decoded = ch.flow_decode(received / scale, cfg.codec, sel.grid.patch_h, sel.grid.patch_w)
    degraded = ex.SelectionResult(
        grid=sel.grid,
        mask_ratio=sel.mask_ratio,
        selected=[
            ex.SelectedPatch(s.t, s.i, s.j, decoded[k]) for k, s in enumerate(sel.selected)
        ],
        xi=sel.xi,
        field_h=sel.field_h,
        field_w=sel.field_w,
    )
    stats = {
        "n_symbols": symbols.size,
        "rms_flow_error": float(np.sqrt(np.mean((decoded - payloads) ** 2))),
        "realization": realization,
    }
    return degraded, stats


def run_point(
    video: Video,
    video_id: str,
    flows: list,
    cfg: ExperimentConfig,
    rho: float,
    snr_db: float,
    run_seed: int,
    video_index: int,
    point_index: int,
) -> PointResult:
    """One (video, rho, snr) cell of the sweep grid."""
    grid = PatchGrid.for_shape(video.height, video.width, cfg.patch_h, cfg.patch_w)
    params = replace(cfg.extractor, mask_ratio=rho)
    sel = _stage(
        "extract",
        (video_id, rho),
        lambda: ex.extract(flows, grid, params, derive_seed(run_seed, "extract", video_index)),
    )
    load_params = ld.LoadParams(
        n_frames=video.n_frames,
        height=video.height,
        width=video.width,
        patch_h=cfg.patch_h,
        patch_w=cfg.patch_w,
        mask_ratio=rho,
        zip_ratio=cfg.zip_ratio,
    )
    breakdown = _stage("load", (video_id, rho), lambda: ld.total_load(load_params))
    snr_linear = 10.0 ** (snr_db / 10.0)
    degraded, stats = _stage(
        "transmit",
        (video_id, rho, snr_db),
        lambda: transmit_selection(sel, cfg, snr_linear, derive_seed(run_seed, "channel", point_index)),
    )
    reconstructed = _stage(
        "reconstruct", (video_id, rho, snr_db), lambda: reconstruct_video(video.frames[0], degraded)
    )
    report = _stage(
        "metrics", (video_id, rho, snr_db), lambda: frame_losses(reconstructed, video)
    )
    if sel.important is not None:
        report.map = motion_area_percentage(sel.important)
    tx_seconds = ch.tx_time(float(breakdown.l_com), stats["realization"])
    return PointResult(video_id, rho, snr_db, report, breakdown, tx_seconds, len(sel.selected))


def _run_video_task(args):
    cfg, run_seed, video_index, directory = args
    video = _stage("load", (directory,), lambda: load_ppm_sequence(directory))
    flows = _stage("flow", (directory,), lambda: estimate_flow(video, cfg.flow_params))
    video_id = os.path.basename(os.path.normpath(directory))
    results = []
    point_index = video_index * len(cfg.rho_list) * len(cfg.snr_db_list)
    for rho in cfg.rho_list:
        for snr_db in cfg.snr_db_list:
            results.append(
                run_point(video, video_id, flows, cfg, rho, snr_db, run_seed, video_index, point_index)
            )
            point_index += 1
    return results


def run_pipeline(cfg: ExperimentConfig, run_seed: int, workers: int = 1) -> list[PointResult]:
    """Run the full sweep grid; results come back in deterministic grid order."""
    tasks = [(cfg, run_seed, k, d) for k, d in enumerate(cfg.video_dirs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            nested = list(pool.map(_run_video_task, tasks))
    else:
        nested = [_run_video_task(t) for t in tasks]
    return [r for group in nested for r in group]
