"""Command-line interface: track, evaluate, gen, and overlay subcommands.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors (unreadable or
inconsistent inputs). Diagnostics go to standard error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Sequence

from .appearance import FileEmbeddingProvider, write_embedding_file
from .association import run_sequence
from .core import TrackerConfig, load_config
from .errors import DuotrackError
from .metrics import evaluate, format_report, report_to_json
from .mot_files import load_detections, load_ground_truth, parse_mot, results_from_records, write_mot, write_mot_detections, write_mot_ground_truth
from .overlay import write_overlays
from .scenario import gen_scenario, spec_from_json
from .scoremaps import FileScoreMapProvider, write_score_map_file


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: A003 - argparse API
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="duotrack", description="Online multi-object tracking engine")
    sub = parser.add_subparsers(dest="command", required=True)

    track = sub.add_parser("track", help="run the tracker over a detection file")
    track.add_argument("--det", required=True, help="detection CSV file")
    track.add_argument("--config", help="tracker config file (key = value lines)")
    track.add_argument("--scoremaps", required=True, help="score-map fixture file")
    track.add_argument("--reid", required=True, help="embedding fixture file")
    track.add_argument("--out", required=True, help="output tracking CSV file")
    track.add_argument("--frames", type=int, help="number of frames to process (default: last detection frame)")
    track.add_argument("--threads", type=int, help="cap internal thread pools (default: all cores)")

    ev = sub.add_parser("evaluate", help="score a tracking result against ground truth")
    ev.add_argument("--gt", required=True, help="ground-truth CSV file")
    ev.add_argument("--hyp", required=True, help="hypothesis CSV file")
    ev.add_argument("--iou-threshold", type=float, default=0.5)
    ev.add_argument("--fps", type=float, default=0.0, help="frames/second figure to embed in the report")
    ev.add_argument("--report", help="also write a JSON report to this path")

    gen = sub.add_parser("gen", help="generate a synthetic scenario with fixtures")
    gen.add_argument("--spec", required=True, help="scenario spec JSON file")
    gen.add_argument("--out-dir", required=True)
    gen.add_argument("--k", type=int, default=7, help="score-map grid size")
    gen.add_argument("--scale", type=float, default=8.0, help="score-map pixels per cell")
    gen.add_argument("--dim", type=int, default=512, help="embedding dimension")
    gen.add_argument("--map-noise", type=float, default=0.0, help="score-map noise sigma")
    gen.add_argument("--emb-noise", type=float, default=0.0, help="embedding noise sigma")

    overlay = sub.add_parser("overlay", help="render per-frame SVG overlays of a tracking result")
    overlay.add_argument("--hyp", required=True, help="tracking CSV file")
    overlay.add_argument("--out-dir", required=True)
    overlay.add_argument("--frame-dims", help="frame size as WIDTHxHEIGHT (default: fit to content)")
    return parser


def _cmd_track(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else TrackerConfig()
    detections = load_detections(args.det)
    score_provider = FileScoreMapProvider(args.scoremaps)
    embedding_provider = FileEmbeddingProvider(args.reid, expected_dim=config.embedding_dim)
    n_frames = args.frames if args.frames is not None else max(detections, default=0)

    def run():
        start = time.perf_counter()
        results = run_sequence(detections, score_provider, embedding_provider, config, n_frames)
        elapsed = time.perf_counter() - start
        return results, elapsed

    if args.threads is not None:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            results, elapsed = run()
    else:
        results, elapsed = run()

    write_mot(results, args.out)
    fps = len(results) / elapsed if elapsed > 0 else float("inf")
    print(f"processed {len(results)} frames in {elapsed:.3f}s ({fps:.1f} fps)", file=sys.stderr)
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    gt = load_ground_truth(args.gt)
    hyp = results_from_records(parse_mot(args.hyp))
    report = evaluate(gt, hyp, args.iou_threshold, fps=args.fps)
    print(format_report(report))
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(report_to_json(report))
    return 0


def _cmd_gen(args: argparse.Namespace) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        spec = spec_from_json(fh.read())
    scenario = gen_scenario(spec)
    os.makedirs(args.out_dir, exist_ok=True)

    write_mot_ground_truth(scenario.ground_truth, os.path.join(args.out_dir, "gt.txt"))
    write_mot_detections(scenario.detections, os.path.join(args.out_dir, "det.txt"))

    maps = scenario.score_map_provider(k=args.k, noise_sigma=args.map_noise, scale=args.scale)
    grids = {frame: maps.score_maps(frame) for frame in range(1, spec.frame_count + 1)}
    write_score_map_file(os.path.join(args.out_dir, "scoremaps.smap"), grids)

    oracle = scenario.embedding_provider(sigma=args.emb_noise, dim=args.dim)
    records = []
    for frame in sorted(scenario.detections):
        for det in scenario.detections[frame]:
            records.append((frame, det.box, oracle.embed(frame, det.box)))
    write_embedding_file(os.path.join(args.out_dir, "embeddings.reid"), records)

    print(f"wrote scenario fixtures to {args.out_dir}", file=sys.stderr)
    return 0


def _parse_dims(text: str) -> tuple[float, float]:
    try:
        w, h = text.lower().split("x")
        return float(w), float(h)
    except ValueError as exc:
        raise _UsageError(f"bad --frame-dims value {text!r}, expected WIDTHxHEIGHT") from exc


def _cmd_overlay(args: argparse.Namespace) -> int:
    results = results_from_records(parse_mot(args.hyp))
    if args.frame_dims:
        dims = _parse_dims(args.frame_dims)
    else:
        x_max = max((box.x1 for r in results for _, box in r.tracks), default=640.0)
        y_max = max((box.y1 for r in results for _, box in r.tracks), default=480.0)
        dims = (x_max + 10.0, y_max + 10.0)
    written = write_overlays(results, args.out_dir, dims)
    print(f"wrote {len(written)} overlay frames to {args.out_dir}", file=sys.stderr)
    return 0


_COMMANDS = {
    "track": _cmd_track,
    "evaluate": _cmd_evaluate,
    "gen": _cmd_gen,
    "overlay": _cmd_overlay,
}


def cli(argv: Sequence[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DuotrackError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
