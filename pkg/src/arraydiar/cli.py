"""Command-line front end for the diarization pipeline.

Subcommands map onto the processing stages: `synth` builds test scenes,
`doa` localizes speech frames, `count` estimates the speaker number,
`diarize` runs the spatial pipeline end to end, `cluster`/`recluster`
handle embedding clustering, `fuse` combines hypotheses, `score` computes
DER, and `pipeline` drives everything from one config file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import census as census_mod
from . import clustering, der, doa, fusion, sectors, synth
from .io import (
    FramePlan,
    load_geometry,
    load_wav,
    read_config,
    read_embeddings,
    read_rttm,
    save_geometry,
    write_rttm,
    write_wav,
)

log = logging.getLogger("arraydiar")

_WAV_PEAK = 0.9


def _timed(stage: str):
    class _Timer:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, *exc):
            if exc[0] is None:
                log.info("%s finished in %.3f s", stage, time.perf_counter() - self.t0)

    return _Timer()


def _plan_from_args(args) -> FramePlan:
    return FramePlan(frame_length=args.frame, frame_shift=args.shift)


def _localize_from_args(args) -> doa.DoaTrack:
    clip = load_wav(args.audio)
    geometry = load_geometry(args.geometry)
    grid = doa.build_grid(geometry, args.grid)
    vad = read_rttm(args.vad)
    return doa.localize(clip, _plan_from_args(args), grid, vad)


def cmd_doa(args) -> int:
    with _timed("doa"):
        track = _localize_from_args(args)
        doa.write_track_csv(track, args.out)
    log.info("wrote %d localized frames to %s", len(track), args.out)
    return 0


def cmd_count(args) -> int:
    track = doa.read_track_csv(args.track)
    hist = census_mod.build_histogram(track, args.include_low_confidence)
    result = census_mod.count_speakers(hist)
    census_mod.save_census(result, hist, args.out)
    if args.hist_csv:
        census_mod.save_histogram_csv(hist, args.hist_csv)
    log.info("estimated %d speaker(s) at %s", result.count, list(result.peak_azimuths))
    return 0


def _spatial_diarize(track, recording_id, include_low_confidence=False, smooth=0):
    if smooth:
        track = sectors.smooth_track(track, smooth)
    hist = census_mod.build_histogram(track, include_low_confidence)
    result = census_mod.count_speakers(hist)
    sector_map = sectors.build_sectors(result)
    labels = sectors.assign_frames(track, sector_map)
    segments = sectors.frames_to_rttm(labels, track.plan, recording_id)
    return segments, hist, result


def cmd_diarize(args) -> int:
    with _timed("diarize"):
        track = _localize_from_args(args)
        recording_id = args.recording_id or Path(args.audio).stem
        segments, hist, result = _spatial_diarize(
            track, recording_id, args.include_low_confidence, args.smooth
        )
        write_rttm(segments, args.out)
        if args.hist_csv:
            census_mod.save_histogram_csv(hist, args.hist_csv)
    log.info(
        "diarized %s: %d speakers, %d segments -> %s",
        recording_id, result.count, len(segments), args.out,
    )
    return 0


def cmd_cluster(args) -> int:
    es = read_embeddings(args.embeddings)
    aff = clustering.cosine_affinity(es)
    if args.method == "ahc":
        log.warning(
            "AHC threshold %.4g presumes the similarity scale of the embedding "
            "extractor it was tuned for; re-tune it for other extractors",
            args.threshold,
        )
        assign = clustering.ahc(aff, args.threshold)
    else:
        assign = clustering.nme_sc(aff, args.max_speakers, seed=args.seed)
    segments = clustering.assignment_to_rttm(assign, es, args.recording_id)
    write_rttm(segments, args.out)
    log.info("%s found %d clusters over %d segments", assign.method, assign.k, len(es))
    return 0


def cmd_recluster(args) -> int:
    es = read_embeddings(args.embeddings)
    result = census_mod.load_census(args.census)
    aff = clustering.cosine_affinity(es)
    assign = clustering.sc_fixed_k(aff, result.count, seed=args.seed)
    segments = clustering.assignment_to_rttm(assign, es, args.recording_id)
    write_rttm(segments, args.out)
    log.info("re-clustered %d segments into %d speakers", len(es), assign.k)
    return 0


def _parse_weighted(entry: str):
    path, sep, weight = entry.rpartition(":")
    if not sep or not path:
        raise ValueError(f"expected PATH:WEIGHT, got {entry!r}")
    return path, float(weight)


def cmd_fuse(args) -> int:
    weighted = []
    for entry in args.hyp:
        path, weight = _parse_weighted(entry)
        weighted.append((read_rttm(path), weight))
    fused = fusion.fuse(weighted, single_label=args.single_label)
    write_rttm(fused, args.out)
    log.info("fused %d hypotheses into %d segments", len(weighted), len(fused))
    return 0


def cmd_score(args) -> int:
    ref = read_rttm(args.ref)
    hyp = read_rttm(args.hyp)
    report = der.score(ref, hyp, collar=args.collar, ignore_overlap=args.ignore_overlap)
    print(der.format_report(report))
    if args.out:
        der.save_report(report, args.out)
    return 0


def cmd_synth(args) -> int:
    spec = synth.load_scene(args.spec)
    with _timed("synth"):
        clip, reference, vad = synth.render(spec)
    peak = float(np.abs(clip.samples).max())
    if peak > 0:
        clip = type(clip)(clip.samples * (_WAV_PEAK / peak), clip.sample_rate)
    write_wav(clip, args.out_audio)
    write_rttm(reference, args.out_ref)
    write_rttm(vad, args.out_vad)
    if args.out_geometry:
        save_geometry(spec.geometry, args.out_geometry)
    log.info("rendered %.1f s scene with %d sources", spec.duration, len(spec.sources))
    return 0


# ---------------------------------------------------------------------------
# pipeline

_PIPELINE_STAGES = ("doa", "count", "diarize", "recluster", "fuse", "score")


def _pipeline_config(path) -> dict:
    cfg = read_config(path)
    base = Path(path).resolve().parent

    def resolve(key):
        if key in cfg and isinstance(cfg[key], str):
            cfg[key] = str((base / cfg[key]).resolve())

    for key in ("audio", "geometry", "vad", "embeddings", "ref", "out_dir"):
        resolve(key)
    if "fusion" in cfg:
        resolved = []
        for name, weight in cfg["fusion"]:
            if name not in ("spatial", "recluster") and not Path(name).is_absolute():
                name = str((base / name).resolve())
            resolved.append((name, float(weight)))
        cfg["fusion"] = resolved
    cfg.setdefault("out_dir", str(base / "out"))
    return cfg


def _validate_pipeline(cfg: dict, stages: list) -> None:
    def require_file(key):
        if key not in cfg:
            raise ValueError(f"pipeline config missing {key!r}")
        if not Path(cfg[key]).exists():
            raise ValueError(f"{key} file not found: {cfg[key]}")

    out_dir = Path(cfg["out_dir"])
    produced = set()
    for stage in stages:
        if stage in ("doa", "diarize"):
            require_file("audio")
            require_file("geometry")
            require_file("vad")
            produced.update({"track", "spatial"} if stage == "diarize" else {"track"})
            if stage == "diarize":
                produced.add("census")
        elif stage == "count":
            if "track" not in produced:
                require_file("audio")  # count re-reads track.csv from out_dir
                if not (out_dir / "track.csv").exists():
                    raise ValueError("count stage needs the doa stage or an existing track.csv")
            produced.add("census")
        elif stage == "recluster":
            require_file("embeddings")
            if "census" not in produced and not (out_dir / "census.json").exists():
                raise ValueError("recluster stage needs a census (run count/diarize first)")
            produced.add("recluster")
        elif stage == "fuse":
            if "fusion" not in cfg:
                raise ValueError("fuse stage selected but config has no fusion entry")
            for name, _ in cfg["fusion"]:
                if name in ("spatial", "recluster"):
                    if name not in produced and not (out_dir / f"{name}.rttm").exists():
                        raise ValueError(f"fusion input {name!r} is not produced by the selected stages")
                elif not Path(name).exists():
                    raise ValueError(f"fusion input file not found: {name}")
            produced.add("fused")
        elif stage == "score":
            require_file("ref")
        else:
            raise ValueError(f"unknown stage {stage!r}")


def cmd_pipeline(args) -> int:
    cfg = _pipeline_config(args.config)
    stages = list(args.stages.split(",")) if args.stages else list(_PIPELINE_STAGES)
    stages = [s for s in _PIPELINE_STAGES if s in stages]
    requested = set(args.stages.split(",")) if args.stages else set(_PIPELINE_STAGES)
    unknown = requested - set(_PIPELINE_STAGES)
    if unknown:
        raise ValueError(f"unknown stages: {sorted(unknown)}")
    if not args.stages:
        # optional stages only run when their inputs are configured
        if "embeddings" not in cfg:
            stages.remove("recluster")
        if "fusion" not in cfg:
            stages.remove("fuse")
        if "ref" not in cfg:
            stages.remove("score")
    _validate_pipeline(cfg, stages)

    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    recording_id = cfg.get("recording_id") or Path(cfg.get("audio", "recording")).stem
    plan = FramePlan(cfg.get("frame", 0.5), cfg.get("shift", 0.5))
    seed = int(cfg.get("seed", 0))

    track = None
    hypotheses = {}

    if "doa" in stages or "diarize" in stages or "count" in stages:
        track_path = out_dir / "track.csv"
        if "doa" in stages or "diarize" in stages:
            with _timed("doa"):
                clip = load_wav(cfg["audio"])
                geometry = load_geometry(cfg["geometry"])
                grid = doa.build_grid(geometry, int(cfg.get("grid", 256)))
                vad = read_rttm(cfg["vad"])
                track = doa.localize(clip, plan, grid, vad)
                doa.write_track_csv(track, track_path)
        elif track_path.exists():
            track = doa.read_track_csv(track_path)

    hist = result = None
    if track is not None and ("count" in stages or "diarize" in stages):
        with _timed("census"):
            smoothed = sectors.smooth_track(track, cfg["smooth"]) if cfg.get("smooth") else track
            hist = census_mod.build_histogram(
                smoothed, bool(cfg.get("include_low_confidence", False))
            )
            result = census_mod.count_speakers(hist)
            census_mod.save_census(result, hist, out_dir / "census.json")
            census_mod.save_histogram_csv(hist, out_dir / "histogram.csv")
        log.info("census: %d speaker(s) at %s", result.count, list(result.peak_azimuths))

    if "diarize" in stages:
        with _timed("diarize"):
            smoothed = sectors.smooth_track(track, cfg["smooth"]) if cfg.get("smooth") else track
            sector_map = sectors.build_sectors(result)
            labels = sectors.assign_frames(smoothed, sector_map)
            spatial = sectors.frames_to_rttm(labels, plan, recording_id)
            write_rttm(spatial, out_dir / "spatial.rttm")
            hypotheses["spatial"] = spatial

    if "recluster" in stages:
        with _timed("recluster"):
            if result is None:
                result = census_mod.load_census(out_dir / "census.json")
            es = read_embeddings(cfg["embeddings"])
            aff = clustering.cosine_affinity(es)
            assign = clustering.sc_fixed_k(aff, result.count, seed=seed)
            reclustered = clustering.assignment_to_rttm(assign, es, recording_id)
            write_rttm(reclustered, out_dir / "recluster.rttm")
            hypotheses["recluster"] = reclustered

    if "fuse" in stages:
        with _timed("fuse"):
            weighted = []
            for name, weight in cfg["fusion"]:
                if name in ("spatial", "recluster"):
                    segments = hypotheses.get(name) or read_rttm(out_dir / f"{name}.rttm")
                else:
                    segments = read_rttm(name)
                weighted.append((segments, weight))
            fused = fusion.fuse(weighted, single_label=bool(cfg.get("single_label", True)))
            write_rttm(fused, out_dir / "fused.rttm")
            hypotheses["fused"] = fused

    if "score" in stages:
        with _timed("score"):
            ref = read_rttm(cfg["ref"])
            for name in ("spatial", "recluster", "fused"):
                path = out_dir / f"{name}.rttm"
                if name not in hypotheses and path.exists():
                    hypotheses[name] = read_rttm(path)
            if not hypotheses:
                raise ValueError("score stage has no hypothesis to score")
            reports = {}
            for name in sorted(hypotheses):
                report = der.score(
                    ref,
                    hypotheses[name],
                    collar=float(cfg.get("collar", der.DEFAULT_COLLAR)),
                    ignore_overlap=bool(cfg.get("ignore_overlap", True)),
                )
                reports[name] = report.as_dict()
                log.info("%s: DER %.2f%%", name, report.der)
                print(f"== {name}")
                print(der.format_report(report))
            with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
                json.dump(reports, fh, indent=2, sort_keys=True)
                fh.write("\n")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arraydiar",
        description="Speaker diarization for small meetings recorded by a microphone array.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("doa", help="per-frame SRP-PHAT localization")
    p.add_argument("--audio", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--vad", required=True)
    p.add_argument("--grid", type=int, default=doa.DEFAULT_GRID_SIZE)
    p.add_argument("--frame", type=float, default=0.5)
    p.add_argument("--shift", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_doa)

    p = sub.add_parser("count", help="speaker census from a DOA track")
    p.add_argument("--track", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hist-csv")
    p.add_argument("--include-low-confidence", action="store_true")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("diarize", help="spatial diarization: doa -> census -> sectors -> RTTM")
    p.add_argument("--audio", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--vad", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=doa.DEFAULT_GRID_SIZE)
    p.add_argument("--frame", type=float, default=0.5)
    p.add_argument("--shift", type=float, default=0.5)
    p.add_argument("--hist-csv")
    p.add_argument("--smooth", type=int, default=0)
    p.add_argument("--recording-id")
    p.add_argument("--include-low-confidence", action="store_true")
    p.set_defaults(func=cmd_diarize)

    p = sub.add_parser("cluster", help="initial clustering of speaker embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--method", choices=["ahc", "nme-sc"], required=True)
    p.add_argument("--threshold", type=float, default=clustering.DEFAULT_AHC_THRESHOLD)
    p.add_argument("--max-speakers", type=int, default=clustering.DEFAULT_MAX_SPEAKERS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--recording-id", default="recording")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("recluster", help="fixed-count spectral re-clustering from a census")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--census", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--recording-id", default="recording")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recluster)

    p = sub.add_parser("fuse", help="weighted voting over multiple hypotheses")
    p.add_argument("--hyp", action="append", required=True, metavar="PATH:WEIGHT")
    p.add_argument("--out", required=True)
    p.add_argument("--single-label", action="store_true")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("score", help="diarization error rate against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--collar", type=float, default=der.DEFAULT_COLLAR)
    p.add_argument("--ignore-overlap", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("synth", help="render a synthetic multichannel scene")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-audio", required=True)
    p.add_argument("--out-ref", required=True)
    p.add_argument("--out-vad", required=True)
    p.add_argument("--out-geometry")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="run configured stages end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--stages", help="comma-separated subset of: " + ",".join(_PIPELINE_STAGES))
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        log.error("%s", exc)
        return 2
    except OSError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
