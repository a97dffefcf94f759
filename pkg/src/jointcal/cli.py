"""Command-line interface: ``jointcal {simulate,calibrate,evaluate,remap}``.

Exit codes: 0 success, 1 validation/parse failure, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import (EmptyFrustum, InsufficientCorrespondences, InvalidParameters, NoValidRays, NumericalFailure,
                     ParseError, RefinementFailed, RejectionBudgetExceeded)
from .metrics import calibration_error
from .pipeline import RefinementConfig, run_refinement
from .providers import StaticProvider, synthetic_correspondences
from .remap import build_remap, read_image, warp_image, write_image
from .simulation import TrialSetup, kitti_like_truth, make_trial

log = logging.getLogger("jointcal")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2


def _config(args) -> io.RunConfig:
    if args.config:
        cfg = io.load_config(args.config, check_paths=False)
    else:
        cfg = io.RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output_dir = args.out
        out = Path(args.out)
    else:
        out = cfg.resolve(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.output_dir = str(out)
    return cfg


def _refinement_config(cfg: io.RunConfig) -> RefinementConfig:
    opts = cfg.solve_options()
    from dataclasses import replace
    return RefinementConfig(cfg.n_intr, cfg.n_total, replace(opts, freeze_intrinsics=False),
                            replace(opts, freeze_intrinsics=True), rng_seed=cfg.seed)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = Path(cfg.output_dir)
    sim = dict(cfg.simulation)
    truth = io.load_camera(cfg.resolve(cfg.ground_truth)) if cfg.ground_truth else kitti_like_truth()
    setup_keys = {"n_frames", "points_per_frame", "depth_range", "intrinsic_noise", "rotation_deg",
                  "translation_m", "extrinsic_mode"}
    unknown = set(sim) - setup_keys
    if unknown:
        raise ParseError(f"unknown simulation fields: {', '.join(sorted(unknown))}")
    if "depth_range" in sim:
        sim["depth_range"] = tuple(sim["depth_range"])
    trial = make_trial(cfg.seed, TrialSetup(**sim), truth)
    schedule = cfg.noise_schedule()
    if len(schedule.per_iteration_pixel_sigma) < cfg.n_total:
        raise ParseError(f"noise schedule has {len(schedule.per_iteration_pixel_sigma)} entries, need {cfg.n_total}")
    io.save_calibration(trial.truth, path=out / "truth.json")
    io.save_calibration(trial.initial, path=out / "initial.json")
    names = []
    for it in range(cfg.n_total):
        cs, meta = synthetic_correspondences(trial.scene, trial.truth, schedule, it, cfg.seed)
        name = f"correspondences_{it + 1:02d}.csv"
        io.save_correspondences(cs, out / name)
        names.append(name)
        log.info("iteration %d: %d correspondences, sigma %.3g px", it + 1, len(cs), meta["sigma_px"])
    run = io.RunConfig(correspondences=names, initial="initial.json", ground_truth="truth.json",
                       principal_point_prior=[float(v) for v in trial.c0], output_dir="result", seed=cfg.seed,
                       n_intr=cfg.n_intr, n_total=cfg.n_total, solver=cfg.solver)
    (out / "config.json").write_text(json.dumps(io.config_to_dict(run), indent=2) + "\n")
    print(f"wrote {len(names)} correspondence files and config.json to {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    cfg.check_paths()
    if not cfg.initial or not cfg.correspondences:
        raise ParseError("calibrate needs 'initial' and 'correspondences' in the config")
    out = Path(cfg.output_dir)
    initial = io.load_camera(cfg.resolve(cfg.initial))
    batches = [io.load_correspondence_set(cfg.resolve(p)) for p in cfg.correspondences]
    c0 = cfg.principal_point_prior if cfg.principal_point_prior is not None else initial.intrinsics.principal_point
    params, trace = run_refinement(initial, np.asarray(c0, dtype=float), StaticProvider(batches, "file"),
                                   _refinement_config(cfg))
    io.save_calibration(params, trace[-1].report, out / "calibration.json", trace=trace)
    k = params.intrinsics
    print(f"fx={k.fx:.4f} fy={k.fy:.4f} cx={k.cx:.4f} cy={k.cy:.4f} "
          f"k1={k.k1:.6g} k2={k.k2:.6g} k3={k.k3:.6g} t1={k.t1:.6g} t2={k.t2:.6g}")
    q = params.extrinsics.rotation
    print(f"q_wxyz=[{q.w:.12g}, {q.x:.12g}, {q.y:.12g}, {q.z:.12g}] t={list(params.extrinsics.translation)}")
    if cfg.ground_truth:
        truth = io.load_camera(cfg.resolve(cfg.ground_truth))
        err = calibration_error(k, params.extrinsics, truth.intrinsics, truth.extrinsics, cfg.n_rays, cfg.seed)
        io.save_error_report(err, out / "errors.json")
        print(err.to_json())
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    est_path = args.estimate or str(Path(cfg.output_dir) / "calibration.json")
    truth_path = args.truth or (str(cfg.resolve(cfg.ground_truth)) if cfg.ground_truth else None)
    if truth_path is None:
        raise ParseError("evaluate needs a ground truth (--truth or 'ground_truth' in the config)")
    est = io.load_camera(est_path)
    truth = io.load_camera(truth_path)
    err = calibration_error(est.intrinsics, est.extrinsics, truth.intrinsics, truth.extrinsics, cfg.n_rays, cfg.seed)
    io.save_error_report(err, Path(cfg.output_dir) / "errors.json")
    print(err.to_json())
    return EXIT_OK


def cmd_remap(args) -> int:
    cfg = _config(args)
    remap_cfg = dict(cfg.remap)
    source = args.source or (str(cfg.resolve(remap_cfg["source"])) if "source" in remap_cfg else None)
    target = args.target or (str(cfg.resolve(remap_cfg["target"])) if "target" in remap_cfg else None)
    images = args.image or [str(cfg.resolve(p)) for p in remap_cfg.get("images", [])]
    if source is None or target is None:
        raise ParseError("remap needs source and target camera models")
    out = Path(cfg.output_dir)
    field = build_remap(io.load_camera(source).intrinsics, io.load_camera(target).intrinsics)
    field.save(out / "field.rmap")
    log.info("%d of %d target pixels valid", int(field.valid.sum()), field.valid.size)
    for p in images:
        warped = warp_image(read_image(p), field)
        dest = out / Path(p).name
        write_image(dest, warped)
        print(f"wrote {dest}")
    print(f"wrote {out / 'field.rmap'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointcal", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic scene and correspondence files")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("calibrate", parents=[common], help="run the coupled refinement on correspondence files")
    p.set_defaults(func=cmd_calibrate)
    p = sub.add_parser("evaluate", parents=[common], help="compare a calibration against ground truth")
    p.add_argument("--estimate", help="estimated calibration (JSON or KITTI text)")
    p.add_argument("--truth", help="ground-truth calibration (JSON or KITTI text)")
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("remap", parents=[common], help="warp images from one camera model to another")
    p.add_argument("--source", help="source camera calibration")
    p.add_argument("--target", help="target camera calibration")
    p.add_argument("--image", action="append", help="image to warp (PNG or PGM); repeatable")
    p.set_defaults(func=cmd_remap)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RefinementFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        # bad input discovered mid-run is still an input problem
        if isinstance(exc.cause, (InsufficientCorrespondences, EmptyFrustum)):
            return EXIT_INVALID
        return EXIT_NUMERICAL
    except (NumericalFailure, NoValidRays) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ParseError, InvalidParameters, InsufficientCorrespondences, EmptyFrustum, RejectionBudgetExceeded,
            OSError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
