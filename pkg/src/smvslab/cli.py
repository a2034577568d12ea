"""Command-line entry point chaining scene generation, localization, SMVS
profiling, placement, attack simulation and evaluation."""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .attacks import ATTACK_MODELS, AttackSpec, SpooferState, attack_dataset
from .datasets import FrameDataset, load_dataset, save_dataset, write_manifest
from .errors import SmvslabError
from .geometry import AzimuthBinning, PointCloud, load_xyz, save_xyz
from .metrics import DEFAULT_BUCKET_EDGES, RunRecord, ape, bucket_report, rpe
from .pipelines import PipelineConfig, build_prior_map, odometry_run, priormap_localize
from .placement import choose_recommended, optimize_placement, save_placement
from .se3 import PoseSE3
from .simulate import SceneSpec, SensorModel, TrajectorySpec, build_scene, generate_dataset
from .smvs import SmvsConfig, load_profile_csv, trajectory_smvs
from .trajectory import Trajectory

ATTACK_FLAG_TO_MODEL = {
    "hfr": "removal_no_noise",
    "hfr-noise": "removal_noise",
    "inject": "injection",
}


def _read_config_file(path) -> dict:
    out = {}
    with open(path, "r") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _apply_config_defaults(args, parser):
    """Plain-text key=value config fills in anything the flags left at default."""
    if not getattr(args, "config", None):
        return args
    file_values = _read_config_file(args.config)
    provided = {a.lstrip("-").replace("-", "_") for a in sys.argv if a.startswith("--")}
    for key, raw in file_values.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr) or attr in provided:
            continue
        current = getattr(args, attr)
        if isinstance(current, bool):
            setattr(args, attr, raw.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, attr, int(raw))
        elif isinstance(current, float):
            setattr(args, attr, float(raw))
        else:
            setattr(args, attr, raw)
    return args


def _default_seed() -> int:
    env = os.environ.get("SMVSLAB_SEED")
    return int(env) if env else 0


def _add_common(p):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (SMVSLAB_SEED fallback)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--config", default=None, help="key=value config file; flags win")


def _add_sensor(p):
    p.add_argument("--rings", type=int, default=16)
    p.add_argument("--vfov", type=float, default=30.0, help="total vertical FOV, degrees")
    p.add_argument("--hres", type=float, default=1.0, help="horizontal resolution, degrees")
    p.add_argument("--max-range", type=float, default=30.0)
    p.add_argument("--range-noise", type=float, default=0.01)


def _add_smvs(p):
    p.add_argument("--n-regions", type=int, default=72)
    p.add_argument("--d-th", type=int, default=8)
    p.add_argument("--clone-sigma", type=float, default=0.01)
    p.add_argument("--keep-ratio", type=float, default=0.9)


def _add_attack(p):
    p.add_argument("--attack", choices=sorted(ATTACK_FLAG_TO_MODEL), default="hfr-noise")
    p.add_argument("--wall-dist", type=float, default=5.0)
    p.add_argument("--layers", type=int, default=10)
    p.add_argument("--noise-min", type=float, default=1.0)
    p.add_argument("--noise-max", type=float, default=30.0)
    p.add_argument("--window-deg", type=float, default=80.0, help="full window width")
    p.add_argument("--spoofer-x", type=float, default=None)
    p.add_argument("--spoofer-y", type=float, default=None)
    p.add_argument("--spoofer-range", type=float, default=18.0)


def _add_placement(p):
    p.add_argument("--top-m", type=int, default=10)
    p.add_argument("--standoff", type=float, default=12.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smvslab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scene", help="generate a synthetic dataset with ground truth")
    _add_common(p)
    _add_sensor(p)
    p.add_argument("--archetype", default="mixed",
                   choices=["canyon", "open-wall", "mixed"])
    p.add_argument("--length", type=float, default=48.0)
    p.add_argument("--speed", type=float, default=6.0)
    p.add_argument("--rate", type=float, default=10.0)

    p = sub.add_parser("odom", help="scan-to-local-map odometry")
    _add_common(p)
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("localize", help="prior-map localization")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--map", required=True, help="prior map .xyz file")
    p.add_argument("--init-traj", default=None,
                   help="trajectory file whose first pose seeds localization")

    p = sub.add_parser("smvs", help="SMVS profile along a benign run")
    _add_common(p)
    _add_smvs(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--traj", default=None, help="benign trajectory (default: ground truth)")

    p = sub.add_parser("place", help="optimize spoofer placement from a profile")
    _add_common(p)
    _add_placement(p)
    p.add_argument("--profile", required=True)

    p = sub.add_parser("attack", help="apply a spoofing model to a dataset")
    _add_common(p)
    _add_sensor(p)
    _add_attack(p)
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("eval", help="APE / RPE between two trajectories")
    _add_common(p)
    p.add_argument("--est", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--no-align", action="store_true")
    p.add_argument("--rpe-delta", type=int, default=1)

    p = sub.add_parser("report", help="SMVS bucket table from run records")
    _add_common(p)
    p.add_argument("--runs", required=True,
                   help="CSV with columns smvs,model,ape_m,ape_deg")
    p.add_argument("--edges", default=",".join(str(e) for e in DEFAULT_BUCKET_EDGES))

    p = sub.add_parser("pipeline", help="run the whole chain end to end")
    _add_common(p)
    _add_sensor(p)
    _add_smvs(p)
    _add_attack(p)
    _add_placement(p)
    p.add_argument("--archetype", default="mixed",
                   choices=["canyon", "open-wall", "mixed"])
    p.add_argument("--length", type=float, default=48.0)
    p.add_argument("--speed", type=float, default=6.0)
    p.add_argument("--rate", type=float, default=10.0)
    p.add_argument("--pipeline", choices=["odometry", "priormap"], default="odometry")
    return parser


def _sensor_from(args) -> SensorModel:
    return SensorModel(
        rings=args.rings,
        vertical_fov_deg=args.vfov,
        horizontal_resolution_deg=args.hres,
        max_range=args.max_range,
        range_noise_sigma=args.range_noise,
    )


def _smvs_cfg_from(args, seed) -> SmvsConfig:
    return SmvsConfig(
        binning=AzimuthBinning(args.n_regions),
        d_th=args.d_th,
        clone_sigma=args.clone_sigma,
        keep_ratio=args.keep_ratio,
        seed=seed,
        threads=args.threads,
    )


def _attack_spec_from(args, seed) -> AttackSpec:
    return AttackSpec(
        model=ATTACK_FLAG_TO_MODEL[args.attack],
        wall_distance=args.wall_dist,
        layers=args.layers,
        noise_range=(args.noise_min, args.noise_max),
        half_width=math.radians(args.window_deg / 2.0),
        seed=seed,
    )


# Path-valued arguments stay out of the manifest so identically-configured
# runs produce byte-identical output trees regardless of where they live.
_PATH_ARGS = {
    "out", "dataset", "map", "profile", "est", "ref", "runs", "init_traj",
    "traj", "config",
}


def _manifest_from(args, seed) -> dict:
    # "seed" is skipped in favor of the resolved value (flag or env fallback);
    # "threads" is an execution detail that does not affect the results.
    skip = _PATH_ARGS | {"command", "func", "seed", "threads"}
    out = {"seed": seed, "command": args.command}
    for key, value in sorted(vars(args).items()):
        if key not in skip:
            out[key] = value
    return out


def _save_statuses(statuses, path):
    with open(path, "w") as f:
        f.write("frame_id,converged,iterations,error\n")
        for s in statuses:
            f.write(f"{s.frame_id},{int(s.converged)},{s.iterations},{s.error or ''}\n")


def _cmd_scene(args, seed):
    scene = build_scene(SceneSpec(archetype=args.archetype, length=args.length))
    traj = TrajectorySpec(
        waypoints=((0.0, 0.0), (args.length, 0.0)),
        speed=args.speed,
        frame_rate=args.rate,
    )
    ds = generate_dataset(scene, traj, _sensor_from(args), seed=seed)
    save_dataset(ds, args.out, manifest=_manifest_from(args, seed))
    return 0


def _cmd_odom(args, seed):
    ds = load_dataset(args.dataset)
    est, statuses = odometry_run(ds)
    os.makedirs(args.out, exist_ok=True)
    est.save(os.path.join(args.out, "trajectory.txt"))
    _save_statuses(statuses, os.path.join(args.out, "frames.csv"))
    write_manifest(os.path.join(args.out, "manifest.txt"), _manifest_from(args, seed))
    return 0


def _cmd_localize(args, seed):
    ds = load_dataset(args.dataset)
    prior = load_xyz(args.map)
    init = PoseSE3.identity()
    if args.init_traj:
        init = Trajectory.load(args.init_traj).poses[0]
    elif ds.ground_truth is not None:
        init = ds.ground_truth.poses[0]
    est, statuses = priormap_localize(ds, prior, init=init)
    os.makedirs(args.out, exist_ok=True)
    est.save(os.path.join(args.out, "trajectory.txt"))
    _save_statuses(statuses, os.path.join(args.out, "frames.csv"))
    write_manifest(os.path.join(args.out, "manifest.txt"), _manifest_from(args, seed))
    return 0


def _cmd_smvs(args, seed):
    ds = load_dataset(args.dataset)
    if args.traj:
        benign = Trajectory.load(args.traj)
    elif ds.ground_truth is not None:
        benign = ds.ground_truth
    else:
        raise SmvslabError("no benign trajectory: pass --traj or provide groundtruth.txt")
    profile = trajectory_smvs(ds, benign, _smvs_cfg_from(args, seed))
    os.makedirs(args.out, exist_ok=True)
    profile.save_csv(os.path.join(args.out, "smvs_profile.csv"))
    write_manifest(os.path.join(args.out, "manifest.txt"), _manifest_from(args, seed))
    return 0


def _cmd_place(args, seed):
    profile = load_profile_csv(args.profile)
    if len(profile) < 2:
        raise SmvslabError("need >= 2 frames in the SMVS profile")
    result = optimize_placement(profile, top_m=args.top_m, standoff=args.standoff)
    os.makedirs(args.out, exist_ok=True)
    save_placement(
        result,
        os.path.join(args.out, "placement.txt"),
        os.path.join(args.out, "intersections.csv"),
    )
    write_manifest(os.path.join(args.out, "manifest.txt"), _manifest_from(args, seed))
    return 0


def _cmd_attack(args, seed):
    ds = load_dataset(args.dataset)
    if ds.ground_truth is None:
        raise SmvslabError("attack needs groundtruth.txt in the dataset")
    if args.spoofer_x is None or args.spoofer_y is None:
        raise SmvslabError("attack needs --spoofer-x and --spoofer-y")
    spoofer = SpooferState(
        (args.spoofer_x, args.spoofer_y), max_range=args.spoofer_range
    )
    spec = _attack_spec_from(args, seed)
    attacked = attack_dataset(ds, ds.ground_truth, spoofer, spec, _sensor_from(args))
    save_dataset(attacked, args.out, manifest=_manifest_from(args, seed))
    return 0


def _cmd_eval(args, seed):
    est = Trajectory.load(args.est)
    ref = Trajectory.load(args.ref)
    stats = ape(est, ref, align_first_pose=not args.no_align)
    rel = rpe(est, ref, delta=args.rpe_delta)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "metrics.csv"), "w") as f:
        f.write("metric,value\n")
        f.write(f"ape_rmse_m,{stats.rmse!r}\n")
        f.write(f"ape_mean_m,{stats.mean!r}\n")
        f.write(f"ape_std_m,{stats.std!r}\n")
        f.write(f"ape_max_m,{stats.max!r}\n")
        f.write(f"ape_rot_rmse_deg,{stats.rot_rmse_deg!r}\n")
        f.write(f"rpe_max_m,{rel.max!r}\n")
        f.write(f"rpe_mean_m,{rel.mean!r}\n")
        f.write(f"rpe_rot_max_deg,{rel.rot_max_deg!r}\n")
    write_manifest(os.path.join(args.out, "manifest.txt"), _manifest_from(args, seed))
    return 0


def _cmd_report(args, seed):
    from .metrics import ApeStats

    runs = []
    with open(args.runs, "r") as f:
        header = f.readline()
        for line in f:
            parts = line.strip().split(",")
            if len(parts) < 4:
                continue
            smvs, model, ape_m, ape_deg = parts[0], parts[1], parts[2], parts[3]
            stats = ApeStats(
                rmse=float(ape_m), mean=float(ape_m), std=0.0, max=float(ape_m),
                rot_rmse_deg=float(ape_deg), rot_mean_deg=float(ape_deg),
                rot_max_deg=float(ape_deg), count=1,
            )
            runs.append(RunRecord(smvs=float(smvs), model=model, ape=stats))
    edges = tuple(float(v) for v in args.edges.split(","))
    table = bucket_report(runs, edges)
    os.makedirs(args.out, exist_ok=True)
    table.save_csv(os.path.join(args.out, "bucket_table.csv"))
    write_manifest(os.path.join(args.out, "manifest.txt"), _manifest_from(args, seed))
    return 0


def _cmd_pipeline(args, seed):
    out = args.out
    os.makedirs(out, exist_ok=True)

    scene = build_scene(SceneSpec(archetype=args.archetype, length=args.length))
    traj_spec = TrajectorySpec(
        waypoints=((0.0, 0.0), (args.length, 0.0)),
        speed=args.speed,
        frame_rate=args.rate,
    )
    sensor = _sensor_from(args)
    ds = generate_dataset(scene, traj_spec, sensor, seed=seed)
    save_dataset(ds, os.path.join(out, "dataset"))

    gt = ds.ground_truth
    origin = gt.poses[0]
    if args.pipeline == "odometry":
        benign, statuses = odometry_run(ds)
        # Odometry reports poses relative to its first frame; express them
        # in the ground-truth world frame for downstream geometry.
        benign = Trajectory(
            benign.timestamps, [origin.compose(p) for p in benign.poses]
        )
    else:
        prior = build_prior_map(ds, gt)
        save_xyz(prior, os.path.join(out, "prior_map.xyz"))
        benign, statuses = priormap_localize(ds, prior, init=origin)
    benign.save(os.path.join(out, "benign_trajectory.txt"))
    _save_statuses(statuses, os.path.join(out, "benign_frames.csv"))

    profile = trajectory_smvs(ds, benign, _smvs_cfg_from(args, seed))
    profile.save_csv(os.path.join(out, "smvs_profile.csv"))

    placement = optimize_placement(profile, top_m=args.top_m, standoff=args.standoff)
    save_placement(
        placement,
        os.path.join(out, "placement.txt"),
        os.path.join(out, "intersections.csv"),
    )
    position = choose_recommended(placement, profile, args.top_m)

    spoofer = SpooferState(
        (float(position[0]), float(position[1])), max_range=args.spoofer_range
    )
    spec = _attack_spec_from(args, seed)
    attacked = attack_dataset(ds, gt, spoofer, spec, sensor)
    save_dataset(attacked, os.path.join(out, "attacked_dataset"))

    if args.pipeline == "odometry":
        est, atk_statuses = odometry_run(attacked)
        est = Trajectory(est.timestamps, [origin.compose(p) for p in est.poses])
    else:
        prior = load_xyz(os.path.join(out, "prior_map.xyz"))
        est, atk_statuses = priormap_localize(attacked, prior, init=origin)
    est.save(os.path.join(out, "attacked_trajectory.txt"))
    _save_statuses(atk_statuses, os.path.join(out, "attacked_frames.csv"))

    stats = ape(est, gt)
    rel = rpe(est, gt)
    with open(os.path.join(out, "metrics.csv"), "w") as f:
        f.write("metric,value\n")
        f.write(f"ape_rmse_m,{stats.rmse!r}\n")
        f.write(f"ape_max_m,{stats.max!r}\n")
        f.write(f"ape_rot_rmse_deg,{stats.rot_rmse_deg!r}\n")
        f.write(f"rpe_max_m,{rel.max!r}\n")

    attacked_idx = [
        i for i, p in enumerate(gt.poses)
        if np.hypot(
            p.translation[0] - spoofer.position[0],
            p.translation[1] - spoofer.position[1],
        ) <= spoofer.max_range
    ]
    segment_smvs = max(
        (e.smvs.value for e in profile.entries if e.frame_id in set(attacked_idx)),
        default=float("nan"),
    )
    with open(os.path.join(out, "runs.csv"), "w") as f:
        f.write("smvs,model,ape_m,ape_deg\n")
        f.write(f"{segment_smvs!r},{spec.model},{stats.rmse!r},{stats.rot_rmse_deg!r}\n")
    table = bucket_report(
        [RunRecord(smvs=segment_smvs, model=spec.model, ape=stats)]
    )
    table.save_csv(os.path.join(out, "bucket_table.csv"))

    write_manifest(os.path.join(out, "manifest.txt"), _manifest_from(args, seed))
    return 0


_COMMANDS = {
    "scene": _cmd_scene,
    "odom": _cmd_odom,
    "localize": _cmd_localize,
    "smvs": _cmd_smvs,
    "place": _cmd_place,
    "attack": _cmd_attack,
    "eval": _cmd_eval,
    "report": _cmd_report,
    "pipeline": _cmd_pipeline,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config_defaults(args, parser)
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        return _COMMANDS[args.command](args, seed)
    except SmvslabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
