"""Command-line entry points.

Subcommands: optimize, rank, export-animation, render, validate-config.
Frame sequences are plain PNGs (frame_00001.png, ...); assemble a video
externally, e.g.:

    ffmpeg -framerate 12 -i frames/frame_%05d.png -pix_fmt yuv420p out.mp4
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, load_run_config, run_config_from_dict
from .geometry import StrokeSubset, cumulative_subset, delta_subset
from .guidance import GuidanceError, RemoteProvider
from .optimize import OptimizeError, load_stroke_set, optimize, save_trace
from .ranking import (
    CandidateRejected,
    CandidateScores,
    MetricTriple,
    rank_components,
)
from .raster import render, save_png
from .svg import SvgStyle, export_svg


def cmd_optimize(config_path: str) -> int:
    try:
        cfg = load_run_config(config_path)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    plan = cfg.plan()
    try:
        providers = cfg.providers()
        trace = optimize(plan, providers, cfg.optimize)
    except (GuidanceError, OptimizeError, ValueError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    run_dir = Path(cfg.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_trace(trace, run_dir, previews=True)
    (run_dir / "config.json").write_text(cfg.to_json())
    for i in range(1, plan.num_phases + 1):
        sub = cumulative_subset(trace.final_set, plan, i)
        (run_dir / f"phase_{i}.svg").write_text(export_svg(sub))
    last = trace.snapshots[-1]
    summary = {
        "iterations": trace.config.iterations,
        "final_total_loss": last.total_loss,
        "final_branch_diag": list(last.branch_diags),
        "final_overlay": list(last.overlay_losses),
    }
    (run_dir / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=1) + "\n"
    )
    print(f"run written to {run_dir}")
    return 0


def cmd_validate_config(config_path: str) -> int:
    try:
        load_run_config(config_path)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    print("config ok")
    return 0


def _load_run_dir(run_dir: Path):
    theta_path = run_dir / "theta_final.json"
    if not theta_path.exists():
        raise FileNotFoundError(f"{theta_path} not found; run `optimize` first")
    strokes = load_stroke_set(theta_path)
    cfg = run_config_from_dict(json.loads((run_dir / "config.json").read_text()))
    return strokes, cfg


def cmd_export_animation(run_dir: str, fps: int, mode: str) -> int:
    run = Path(run_dir)
    try:
        strokes, cfg = _load_run_dir(run)
    except (FileNotFoundError, ConfigError) as exc:
        print(f"cannot export: {exc}", file=sys.stderr)
        return 1
    render_cfg = cfg.optimize.render
    plan = cfg.plan()
    frames_dir = run / "frames"
    frames_dir.mkdir(exist_ok=True)
    frame = 0
    if mode == "stroke-by-stroke":
        for n in range(1, strokes.n + 1):
            frame += 1
            img = render(StrokeSubset(strokes, tuple(range(n))), render_cfg)
            save_png(img, frames_dir / f"frame_{frame:05d}.png")
    elif mode == "phase-fade":
        frame += 1
        save_png(
            render(cumulative_subset(strokes, plan, 1), render_cfg),
            frames_dir / f"frame_{frame:05d}.png",
        )
        for phase in range(2, plan.num_phases + 1):
            fade_idx = set(plan.delta_indices(phase))
            upto = plan.cumulative_indices(phase)
            for alpha in np.linspace(1.0 / fps, 1.0, fps):
                faded = [
                    replace(s, opacity=s.opacity * alpha) if i in fade_idx else s
                    for i, s in enumerate(strokes.strokes)
                ]
                faded_set = replace(strokes, strokes=tuple(faded))
                frame += 1
                img = render(StrokeSubset(faded_set, upto), render_cfg)
                save_png(img, frames_dir / f"frame_{frame:05d}.png")
    else:
        print(f"unknown mode: {mode}", file=sys.stderr)
        return 2
    print(f"{frame} frames written to {frames_dir}")
    return 0


def _scores_from_file(path: Path) -> CandidateScores:
    data = json.loads(path.read_text())
    to_triple = lambda d: MetricTriple(d["clip"], d["ir"], d["hps"])  # noqa: E731
    return CandidateScores(
        phase=tuple(to_triple(d) for d in data["phase"]),
        delta=tuple(to_triple(d) for d in data["delta"]),
    )


def _scores_from_endpoint(cand: Path, endpoint: str) -> CandidateScores:
    strokes, cfg = _load_run_dir(cand)
    plan = cfg.plan()
    remote = RemoteProvider(endpoint)
    render_cfg = cfg.optimize.render

    def score_one(subset, prompt: str) -> MetricTriple:
        page = 1.0 - render(subset, render_cfg)
        out = remote.score(page, [prompt])
        return MetricTriple(out["clip"][0], out["image_reward"][0], out["hps"][0])

    phase = tuple(
        score_one(cumulative_subset(strokes, plan, i), plan.prompts[i - 1])
        for i in range(1, plan.num_phases + 1)
    )
    delta = tuple(
        score_one(delta_subset(strokes, plan, i), plan.prompts[i - 1])
        for i in range(2, plan.num_phases + 1)
    )
    return CandidateScores(phase=phase, delta=delta)


def cmd_rank(candidates_dir: str, mode: str, endpoint: str | None) -> int:
    if mode != "metric":
        print(f"unknown ranking mode: {mode}", file=sys.stderr)
        return 2
    root = Path(candidates_dir)
    cand_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not cand_dirs:
        print(f"no candidate directories under {root}", file=sys.stderr)
        return 1
    ranked = []
    excluded = []
    for cand in cand_dirs:
        scores_path = cand / "scores.json"
        try:
            if scores_path.exists():
                scores = _scores_from_file(scores_path)
            elif endpoint:
                scores = _scores_from_endpoint(cand, endpoint)
            else:
                print(
                    f"{cand.name}: no scores.json and no endpoint given",
                    file=sys.stderr,
                )
                return 1
            s_clip, s_ir, s_hps = rank_components(scores)
        except CandidateRejected as exc:
            excluded.append({"id": cand.name, "reason": exc.reason})
            continue
        except (KeyError, ValueError, GuidanceError) as exc:
            print(f"{cand.name}: {exc}", file=sys.stderr)
            return 1
        ranked.append(
            {
                "id": cand.name,
                "rank_score": s_clip * s_ir * s_hps,
                "s_clip": s_clip,
                "s_ir": s_ir,
                "s_hps": s_hps,
            }
        )
    ranked.sort(key=lambda r: (-r["rank_score"], -r["s_clip"], r["id"]))
    report = {"ranked": ranked, "excluded": excluded}
    out_path = root / "ranking.json"
    out_path.write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
    for r in ranked:
        print(f"{r['id']}: R={r['rank_score']:.6g}")
    print(f"report written to {out_path}")
    return 0


def cmd_render(theta_path: str, out: str, resolution: int, first: int | None) -> int:
    try:
        strokes = load_stroke_set(theta_path)
    except (FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"cannot load strokes: {exc}", file=sys.stderr)
        return 1
    subset = (
        StrokeSubset(strokes, tuple(range(min(first, strokes.n))))
        if first is not None
        else strokes
    )
    out_path = Path(out)
    if out_path.suffix == ".svg":
        out_path.write_text(export_svg(subset, SvgStyle(viewbox=resolution)))
    else:
        from .raster import RenderConfig

        save_png(render(subset, RenderConfig(resolution=resolution)), out_path)
    print(f"wrote {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasesketch",
        description="Progressive-illusion stroke optimization and tooling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="run a full optimization from a config")
    p_opt.add_argument("config")

    p_val = sub.add_parser("validate-config", help="check a config without running")
    p_val.add_argument("config")

    p_anim = sub.add_parser("export-animation", help="write PNG frames for a run")
    p_anim.add_argument("run_dir")
    p_anim.add_argument("--fps", type=int, default=12)
    p_anim.add_argument(
        "--mode", choices=["stroke-by-stroke", "phase-fade"], default="stroke-by-stroke"
    )

    p_rank = sub.add_parser("rank", help="rank candidate runs by metric scores")
    p_rank.add_argument("candidates_dir")
    p_rank.add_argument("--mode", choices=["metric"], default="metric")
    p_rank.add_argument("--endpoint", default=None)

    p_render = sub.add_parser("render", help="render saved stroke parameters")
    p_render.add_argument("theta")
    p_render.add_argument("out", help="output path (.png or .svg)")
    p_render.add_argument("--resolution", type=int, default=512)
    p_render.add_argument("--first", type=int, default=None, help="only first N strokes")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "optimize":
        return cmd_optimize(args.config)
    if args.command == "validate-config":
        return cmd_validate_config(args.config)
    if args.command == "export-animation":
        return cmd_export_animation(args.run_dir, args.fps, args.mode)
    if args.command == "rank":
        return cmd_rank(args.candidates_dir, args.mode, args.endpoint)
    if args.command == "render":
        return cmd_render(args.theta, args.out, args.resolution, args.first)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
