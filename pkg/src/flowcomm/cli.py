"""Command line entry points: stage runs, end-to-end pipeline, sweeps, allocation.

Exit codes: 0 success, 1 internal error, 2 bad input or config.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import replace

import numpy as np

from . import __version__
from . import allocator as al
from . import extractor as ex
from . import load as ld
from .config import (
    ConfigError,
    ExperimentConfig,
    config_digest,
    derive_seed,
    parse_experiment_config,
    parse_scenario_config,
)
from .flow import estimate_flow
from .pipeline import StageError, run_pipeline, transmit_selection
from .reconstruct import reconstruct_video
from .metrics import frame_losses
from .video import FormatError, PatchGrid, load_ppm_sequence, write_flo

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_BAD_INPUT = 2


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv_atomic(path: str, header: list[str], rows: list[list]) -> None:
    """Write a CSV via temp file + rename so readers never see partial output."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(out_dir: str, command: str, config_path: str, seed: int, extra=None) -> None:
    """Everything needed to reproduce the run's CSVs byte for byte."""
    manifest = {
        "version": __version__,
        "command": command,
        "seed": seed,
        "config_sha256": config_digest(config_path),
        "config_file": os.path.basename(str(config_path)),
    }
    if extra:
        manifest.update(extra)
    os.makedirs(out_dir, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, os.path.join(out_dir, "manifest.json"))


def _load_videos(cfg: ExperimentConfig):
    for k, d in enumerate(cfg.video_dirs):
        video = load_ppm_sequence(d)
        yield k, os.path.basename(os.path.normpath(d)), video


def cmd_flow(cfg: ExperimentConfig, seed: int, out_dir: str, workers: int) -> None:
    rows = []
    for k, video_id, video in _load_videos(cfg):
        flows = estimate_flow(video, cfg.flow_params)
        vid_dir = os.path.join(out_dir, video_id)
        os.makedirs(vid_dir, exist_ok=True)
        for t, field in enumerate(flows):
            write_flo(field, os.path.join(vid_dir, f"flow_{t:04d}.flo"))
        rows.append([video_id, len(flows), float(np.mean([np.hypot(f.u, f.v).mean() for f in flows]))])
    write_csv_atomic(os.path.join(out_dir, "flow.csv"), ["video_id", "n_fields", "mean_magnitude"], rows)


def cmd_extract(cfg: ExperimentConfig, seed: int, out_dir: str, workers: int) -> None:
    rows = []
    for k, video_id, video in _load_videos(cfg):
        flows = estimate_flow(video, cfg.flow_params)
        grid = PatchGrid.for_shape(video.height, video.width, cfg.patch_h, cfg.patch_w)
        for rho in cfg.rho_list:
            params = replace(cfg.extractor, mask_ratio=rho)
            sel = ex.extract(flows, grid, params, derive_seed(seed, "extract", k))
            vid_dir = os.path.join(out_dir, video_id)
            os.makedirs(vid_dir, exist_ok=True)
            with open(os.path.join(vid_dir, f"selection_rho{rho:g}.bin"), "wb") as fh:
                fh.write(sel.to_bytes())
            rows.append([video_id, rho, len(sel.selected), int(sel.xi.sum())])
    write_csv_atomic(
        os.path.join(out_dir, "extract.csv"), ["video_id", "rho", "n_selected", "xi_bits"], rows
    )


def cmd_load(cfg: ExperimentConfig, seed: int, out_dir: str, workers: int) -> None:
    rows = []
    for k, video_id, video in _load_videos(cfg):
        for rho in cfg.rho_list:
            p = ld.LoadParams(
                n_frames=video.n_frames,
                height=video.height,
                width=video.width,
                patch_h=cfg.patch_h,
                patch_w=cfg.patch_w,
                mask_ratio=rho,
                zip_ratio=cfg.zip_ratio,
            )
            b = ld.total_load(p)
            rows.append(
                [video_id, rho, cfg.zip_ratio, float(b.l_first_frame), float(b.l_sr),
                 float(b.l_b), float(b.l_com)]
            )
    write_csv_atomic(
        os.path.join(out_dir, "load.csv"),
        ["video_id", "rho", "rho_zip", "l_first", "l_sr", "l_b", "l_com"],
        rows,
    )


def cmd_transmit(cfg: ExperimentConfig, seed: int, out_dir: str, workers: int) -> None:
    rows = []
    for k, video_id, video in _load_videos(cfg):
        flows = estimate_flow(video, cfg.flow_params)
        grid = PatchGrid.for_shape(video.height, video.width, cfg.patch_h, cfg.patch_w)
        point = 0
        for rho in cfg.rho_list:
            params = replace(cfg.extractor, mask_ratio=rho)
            sel = ex.extract(flows, grid, params, derive_seed(seed, "extract", k))
            for snr_db in cfg.snr_db_list:
                _, stats = transmit_selection(
                    sel, cfg, 10.0 ** (snr_db / 10.0), derive_seed(seed, "channel", point)
                )
                rows.append([video_id, rho, snr_db, stats["n_symbols"], stats["rms_flow_error"]])
                point += 1
    write_csv_atomic(
        os.path.join(out_dir, "transmit.csv"),
        ["video_id", "rho", "snr_db", "n_symbols", "rms_flow_error"],
        rows,
    )


def cmd_reconstruct(cfg: ExperimentConfig, seed: int, out_dir: str, workers: int) -> None:
    """Local reconstruction from lossless selections (no channel in the loop)."""
    frame_rows = []
    for k, video_id, video in _load_videos(cfg):
        flows = estimate_flow(video, cfg.flow_params)
        grid = PatchGrid.for_shape(video.height, video.width, cfg.patch_h, cfg.patch_w)
        for rho in cfg.rho_list:
            params = replace(cfg.extractor, mask_ratio=rho)
            sel = ex.extract(flows, grid, params, derive_seed(seed, "extract", k))
            report = frame_losses(reconstruct_video(video.frames[0], sel), video)
            for t in range(len(report.frame_ssim)):
                frame_rows.append(
                    [video_id, rho, "", t, report.frame_ssim[t], report.frame_psnr[t], report.frame_mse[t]]
                )
            frame_rows.append(
                [video_id, rho, "", "mean", report.mean_ssim, report.mean_psnr, report.mean_mse]
            )
    write_csv_atomic(
        os.path.join(out_dir, "reconstruct.csv"),
        ["video_id", "rho", "snr_db", "frame_idx", "ssim", "psnr", "mse"],
        frame_rows,
    )


def cmd_pipeline(cfg: ExperimentConfig, seed: int, out_dir: str, workers: int) -> None:
    results = run_pipeline(cfg, seed, workers=workers)
    summary_rows = []
    frame_rows = []
    for r in results:
        summary_rows.append(
            [
                r.video_id, r.rho, r.snr_db,
                r.report.mean_ssim, r.report.mean_psnr, r.report.mean_mse,
                r.report.map, r.n_selected,
                float(r.breakdown.l_first_frame), float(r.breakdown.l_sr),
                float(r.breakdown.l_b), float(r.breakdown.l_com),
                r.tx_seconds,
            ]
        )
        for t in range(len(r.report.frame_ssim)):
            frame_rows.append(
                [r.video_id, r.rho, r.snr_db, t,
                 r.report.frame_ssim[t], r.report.frame_psnr[t], r.report.frame_mse[t]]
            )
        frame_rows.append(
            [r.video_id, r.rho, r.snr_db, "mean",
             r.report.mean_ssim, r.report.mean_psnr, r.report.mean_mse]
        )
    write_csv_atomic(
        os.path.join(out_dir, "summary.csv"),
        ["video_id", "rho", "snr_db", "mean_ssim", "mean_psnr", "mean_mse", "map",
         "n_selected", "l_first", "l_sr", "l_b", "l_com", "tx_seconds"],
        summary_rows,
    )
    write_csv_atomic(
        os.path.join(out_dir, "frames.csv"),
        ["video_id", "rho", "snr_db", "frame_idx", "ssim", "psnr", "mse"],
        frame_rows,
    )


def cmd_allocate(config_path: str, seed: int | None, out_dir: str, workers: int) -> None:
    scenario, hyper, file_seed = parse_scenario_config(config_path)
    run_seed = file_seed if seed is None else seed
    write_manifest(out_dir, "allocate", config_path, run_seed)
    agent, curve = al.train_ddpg(scenario, hyper, run_seed)
    env = al.AllocationEnv(scenario, hyper.alpha_r)

    methods = {}
    frac_ddpg, _ = agent.allocate(env)
    methods["ddpg"] = frac_ddpg * scenario.bandwidth_hz
    methods["oracle"] = al.oracle_allocate(scenario)[0]
    methods["equal"] = al.equal_split_baseline(scenario)[0]

    alloc_rows = []
    for method, bandwidths in methods.items():
        times = al.transmission_times(scenario, bandwidths)
        for ue in range(scenario.n_ue):
            alloc_rows.append(
                [method, ue, bandwidths[ue] / scenario.bandwidth_hz, bandwidths[ue], times[ue]]
            )
    write_csv_atomic(
        os.path.join(out_dir, "allocation.csv"),
        ["method", "ue", "fraction", "b_hz", "t_seconds"],
        alloc_rows,
    )
    write_csv_atomic(
        os.path.join(out_dir, "learning_curve.csv"),
        ["episode", "mean_reward", "greedy_t_max"],
        [list(row) for row in curve],
    )


COMMANDS = {
    "flow": cmd_flow,
    "extract": cmd_extract,
    "load": cmd_load,
    "transmit": cmd_transmit,
    "reconstruct": cmd_reconstruct,
    "pipeline": cmd_pipeline,
    "sweep": cmd_pipeline,  # pipeline grid with --workers parallelism
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowcomm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "allocate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="out")
        p.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "allocate":
            cmd_allocate(args.config, args.seed, args.out, args.workers)
        else:
            cfg = parse_experiment_config(args.config)
            seed = 0 if args.seed is None else args.seed
            write_manifest(args.out, args.command, args.config, seed)
            COMMANDS[args.command](cfg, seed, args.out, args.workers)
    except (ConfigError, FormatError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except StageError as exc:
        if isinstance(exc.cause, (FileNotFoundError, FormatError, ValueError)) and exc.stage in (
            "load", "flow"
        ):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_BAD_INPUT
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except Exception as exc:  # pragma: no cover - last-resort guard
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
