"""Command-line harness: simulate / estimate / benchmark / register.

Exit codes: 0 success, 2 estimation failure, 64 usage error,
65 data format error, 74 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from .benchmarks import (
    SUCCESS_THRESHOLD,
    run_grid_protocol,
    run_outlier_protocol,
    run_runtime_protocol,
)
from .exceptions import (
    CorruptFileError,
    DegenerateDirectionError,
    EmptySegmentationError,
    GenerationError,
    NoConsensusError,
    NonFiniteError,
    PointSetFormatError,
    UnsupportedFormatError,
)
from .features import basis_from_json, get_basis
from .geometry import CorrespondenceModel, ModelKind, PointSet, PoseParams, map_points
from .pointset_io import load_json, load_pointset, save_json, save_pointset
from .robust import RansacConfig, occlusion_filter, ransac_solve
from .simgen import (
    NoiseConfig,
    SceneConfig,
    gen_scene,
    inject_outliers,
    perturb,
    random_theta,
    subsample_mismatch,
)
from .solver import Problem, SolverConfig, solve

EXIT_OK = 0
EXIT_ESTIMATION = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_IO = 74

ESTIMATION_ERRORS = (NoConsensusError, DegenerateDirectionError, NonFiniteError,
                     GenerationError, EmptySegmentationError)
DATA_ERRORS = (PointSetFormatError, UnsupportedFormatError, CorruptFileError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _parse_theta(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise UsageError(f"cannot parse theta {text!r}: {exc}") from exc
    if len(vals) not in (5, 6):
        raise UsageError("theta needs 5 (epipolar) or 6 entries")
    return np.asarray(vals)


def _load_basis(name_or_path: str):
    if name_or_path.endswith(".json"):
        return basis_from_json(load_json(name_or_path))
    try:
        return get_basis(name_or_path)
    except KeyError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------- simulate

def _require(cfg: dict, key: str, typ, default=None, required=False):
    if key not in cfg:
        if required:
            raise PointSetFormatError(f"config: missing required field {key!r}")
        return default
    val = cfg[key]
    if typ is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, typ):
        raise PointSetFormatError(
            f"config: field {key!r} should be {typ}, got {type(val).__name__} ({val!r})"
        )
    return val


def cmd_simulate(args) -> int:
    cfg = load_json(args.config)
    seed = _require(cfg, "seed", int, default=0)
    model_name = _require(cfg, "model", str, default="bearing")
    try:
        kind = ModelKind(model_name)
    except ValueError as exc:
        raise PointSetFormatError(f"config: unknown model {model_name!r}") from exc
    n_points = _require(cfg, "n_points", int, default=3142)
    curve = _require(cfg, "curve", str, default="limacon3")
    focal = _require(cfg, "focal_length", float, default=800.0)
    depth = _require(cfg, "depth", float, default=1.0)
    gray_profile = _require(cfg, "gray", str, default=None)

    theta_raw = cfg.get("theta_star")
    if theta_raw is None:
        theta_star = random_theta(np.random.default_rng(seed), kind)
    else:
        want = 5 if kind == ModelKind.EPIPOLAR_2D_2D else 6
        if not isinstance(theta_raw, list) or len(theta_raw) != want:
            raise PointSetFormatError(
                f"config: theta_star must be a list of {want} numbers for {kind.value}"
            )
        theta_star = PoseParams.from_vector(theta_raw)

    scene = SceneConfig(theta_star=theta_star, n_points=n_points, curve=curve,
                        focal_length=focal, depth=depth, seed=seed,
                        gray_profile=gray_profile)
    p_set, q_set, oracle = gen_scene(scene, kind)

    noise_cfg = cfg.get("noise", {}) or {}
    b_p = _require(noise_cfg, "b_p", float, default=0.0)
    outlier_count = _require(noise_cfg, "outlier_count", int, default=0)
    box = tuple(noise_cfg.get("outlier_box", (-0.6, -0.4, 0.05, 0.05)))
    b_m = cfg.get("mismatch_b_m")

    q_origin = oracle.perm.copy()  # final position -> P index, updated below
    origin_of_pos = np.empty(len(q_set), dtype=np.intp)
    origin_of_pos[oracle.perm] = np.arange(len(q_set))

    q_out = perturb(q_set, NoiseConfig(b_p=b_p), seed + 1)
    if b_m is not None:
        q_out, kept = subsample_mismatch(q_out, float(b_m), seed + 2)
        origin_of_pos = origin_of_pos[kept]
    outlier_mask = np.zeros(len(q_out), dtype=bool)
    if outlier_count:
        q_out, outlier_mask = inject_outliers(q_out, outlier_count, box, seed + 3)
        origin_of_pos = np.concatenate([origin_of_pos, -np.ones(outlier_count, dtype=np.intp)])

    out_dir = args.out_dir or cfg.get("out_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    prefix = cfg.get("prefix", "scene")
    meta = {"seed": seed, "model": kind.value, "curve": curve,
            "focal_length": focal, "depth": depth}
    p_path = os.path.join(out_dir, f"{prefix}_p.json")
    q_path = os.path.join(out_dir, f"{prefix}_q.json")
    o_path = os.path.join(out_dir, f"{prefix}_oracle.json")
    save_pointset(p_path, p_set, source=meta)
    save_pointset(q_path, q_out, source={**meta, "b_p": b_p, "b_m": b_m,
                                         "outlier_count": outlier_count})
    save_json(o_path, {
        "model": kind.value,
        "theta_star": theta_star.as_vector().tolist(),
        "perm_clean": oracle.perm.tolist(),
        "q_origin": origin_of_pos.tolist(),
        "outlier_mask": outlier_mask.tolist(),
        "config": cfg,
    })
    print(f"wrote {p_path} ({len(p_set)} pts), {q_path} ({len(q_out)} pts), {o_path}")
    return EXIT_OK


# ---------------------------------------------------------------- estimate

def _pointset_for_model(path: str, kind: ModelKind, side: str) -> PointSet:
    ps = load_pointset(path)
    if kind == ModelKind.RIGID_3D and ps.dim != 3:
        raise UsageError(f"{side} set in {path} has dim {ps.dim}; rigid model needs 3D sets")
    if kind in (ModelKind.EPIPOLAR_2D_2D, ModelKind.HOMOGRAPHY_2D_2D) and ps.dim != 2:
        raise UsageError(f"{side} set in {path} has dim {ps.dim}; {kind.value} needs 2D sets")
    return ps


def cmd_estimate(args) -> int:
    kind = ModelKind(args.model)
    set_p = _pointset_for_model(args.set_p, kind, "first")
    set_q = _pointset_for_model(args.set_q, kind, "second")
    basis = _load_basis(args.basis)

    if kind == ModelKind.HOMOGRAPHY_2D_2D:
        normal = _parse_theta_like(args.plane_normal, 3, "--plane-normal")
        if args.plane_offset is None:
            raise UsageError("--plane-offset is required for the homography model")
        model = CorrespondenceModel(kind, plane_normal=normal, plane_offset=args.plane_offset)
    else:
        model = CorrespondenceModel(kind)

    occlusion_diag = None
    if args.occlusion_kmeans:
        set_p, set_q, pairing = occlusion_filter(
            set_p, set_q, n_clusters=args.occlusion_kmeans,
            keep=args.occlusion_keep, seed=args.seed,
        )
        occlusion_diag = {
            "kept_pairs": [list(p) for p in pairing.pairs],
            "pair_distances": list(pairing.distances),
            "points_kept_p": len(set_p),
            "points_kept_q": len(set_q),
        }

    problem = Problem(model, set_p, set_q, basis, normalize=args.normalize)
    theta0 = (np.zeros(problem.theta_dim) if args.theta0 is None
              else _parse_theta(args.theta0))
    if theta0.size != problem.theta_dim:
        raise UsageError(f"theta0 has {theta0.size} entries, model needs {problem.theta_dim}")

    starts = [theta0]
    rng = np.random.default_rng(args.seed)
    for _ in range(args.multistart):
        starts.append(theta0 + 0.2 * rng.standard_normal(problem.theta_dim))

    scfg = SolverConfig(max_iters=args.max_iters, jacobian_mode=args.jacobian)
    best = None
    masks = (None, None)
    start_time = time.perf_counter()
    for s in starts:
        if args.ransac:
            rcfg = RansacConfig(hypotheses=args.ransac_hypotheses,
                                subset_fraction=args.ransac_fraction,
                                threshold=args.ransac_threshold, seed=args.seed)
            est, mp, mq = ransac_solve(problem, s, rcfg, scfg)
            cand = (est.objective, est, (mp, mq))
        else:
            est = solve(problem, s, scfg)
            cand = (est.objective, est, (None, None))
        if best is None or cand[0] < best[0]:
            best = cand
    runtime_ms = (time.perf_counter() - start_time) * 1e3
    _, est, masks = best

    error = None
    success = None
    theta_star = None
    if args.oracle:
        oracle = load_json(args.oracle)
        theta_star = np.asarray(oracle["theta_star"], dtype=np.float64)
        error = float(np.linalg.norm(est.theta.as_vector() - theta_star))
        success = bool(error <= SUCCESS_THRESHOLD)

    report = {
        "seed": args.seed,
        "model": kind.value,
        "theta0": theta0.tolist(),
        "theta_hat": est.theta.as_vector().tolist(),
        "theta_star": None if theta_star is None else theta_star.tolist(),
        "error": error,
        "success": success,
        "success_threshold": SUCCESS_THRESHOLD,
        "objective": est.objective,
        "iterations": est.iterations,
        "converged": est.reason,
        "runtime_ms": runtime_ms,
        "inliers_p": None if masks[0] is None else int(masks[0].sum()),
        "inliers_q": None if masks[1] is None else int(masks[1].sum()),
        "occlusion": occlusion_diag,
        "config": {
            "basis": args.basis, "normalize": args.normalize, "ransac": args.ransac,
            "multistart": args.multistart, "max_iters": args.max_iters,
            "jacobian": args.jacobian,
        },
    }
    out = args.output or "estimate_report.json"
    save_json(out, report)
    print(json.dumps({k: report[k] for k in
                      ("theta_hat", "objective", "iterations", "error", "success")}))
    print(f"wrote {out}")
    return EXIT_OK


def _parse_theta_like(text, want, flag):
    if text is None:
        raise UsageError(f"{flag} is required for this model")
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) != want:
        raise UsageError(f"{flag} needs {want} entries")
    return np.asarray(vals)


# ---------------------------------------------------------------- benchmark

def _write_csv(path, rows: list[dict]):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def cmd_benchmark(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    jobs = args.jobs or os.cpu_count() or 1
    if args.protocol in ("table1a", "table1b"):
        summary = run_grid_protocol(args.protocol, trials=args.trials, seed=args.seed,
                                    n_points=args.n_points, jobs=jobs)
        rows = summary["cells"]
    elif args.protocol == "runtime":
        sizes = [int(v) for v in args.sizes.split(",")] if args.sizes else \
            (500, 1000, 2000, 4000, 8000, 16000)
        summary = run_runtime_protocol(sizes=sizes, trials=args.trials or 5,
                                       seed=args.seed, jobs=jobs)
        rows = summary["rows"]
    elif args.protocol == "outliers150":
        summary = run_outlier_protocol(seeds=args.trials or 20, seed=args.seed, jobs=jobs)
        rows = summary["rows"]
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown protocol {args.protocol}")

    csv_path = os.path.join(args.out_dir, f"{args.protocol}.csv")
    json_path = os.path.join(args.out_dir, f"{args.protocol}.json")
    _write_csv(csv_path, rows)
    save_json(json_path, summary)
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


# ---------------------------------------------------------------- register

def cmd_register(args) -> int:
    from .ingest import HsvThreshold, load_image, segment_hsv

    thr = HsvThreshold(hue_lo=args.hue_lo, hue_hi=args.hue_hi,
                       sat_min=args.sat_min, val_min=args.val_min)
    raster_p = load_image(args.image_p)
    raster_q = load_image(args.image_q)
    set_p = segment_hsv(raster_p, thr, args.focal)
    set_q = segment_hsv(raster_q, thr, args.focal)
    if args.dump_points:
        meta = {"focal": args.focal,
                "threshold": [args.hue_lo, args.hue_hi, args.sat_min, args.val_min]}
        save_pointset(f"{args.dump_points}_p.json", set_p,
                      source={**meta, "image": str(args.image_p)})
        save_pointset(f"{args.dump_points}_q.json", set_q,
                      source={**meta, "image": str(args.image_q)})

    if args.estimate:
        theta = np.asarray(load_json(args.estimate)["theta_hat"], dtype=np.float64)
    elif args.theta is not None:
        theta = _parse_theta(args.theta)
    else:
        raise UsageError("register needs --theta or --estimate")
    pose = PoseParams.from_vector(theta)
    kind = ModelKind(args.model)
    if kind == ModelKind.HOMOGRAPHY_2D_2D:
        normal = _parse_theta_like(args.plane_normal, 3, "--plane-normal")
        if args.plane_offset is None:
            raise UsageError("--plane-offset is required for the homography model")
        model = CorrespondenceModel(kind, plane_normal=normal, plane_offset=args.plane_offset)
    else:
        model = CorrespondenceModel(kind)

    mapped = map_points(model, set_p.points, pose)
    if np.any(mapped[:, 2] <= 1e-9):
        raise DegenerateDirectionError("reprojected points fall behind the image plane")
    reproj = mapped / mapped[:, 2][:, None]

    h, w = raster_q.shape[:2]
    cx, cy = w / 2.0, h / 2.0
    px_reproj = np.stack([reproj[:, 0] * args.focal + cx,
                          reproj[:, 1] * args.focal + cy], axis=1)
    px_q = np.stack([set_q.points[:, 0] * args.focal + cx,
                     set_q.points[:, 1] * args.focal + cy], axis=1)

    from scipy.spatial import cKDTree

    dists = cKDTree(px_q).query(px_reproj, k=1)[0]
    report = {
        "mean_px": float(dists.mean()),
        "p95_px": float(np.percentile(dists, 95)),
        "max_px": float(dists.max()),
        "n_points_p": len(set_p),
        "n_points_q": len(set_q),
        "theta": theta.tolist(),
        "config": {"focal": args.focal, "model": args.model,
                   "threshold": [args.hue_lo, args.hue_hi, args.sat_min, args.val_min]},
    }
    out = args.output or "register_report.json"
    save_json(out, report)

    if args.overlay:
        from PIL import Image

        canvas = raster_q.copy()
        rows_q = np.clip(np.round(px_q[:, 1]).astype(int), 0, h - 1)
        cols_q = np.clip(np.round(px_q[:, 0]).astype(int), 0, w - 1)
        canvas[rows_q, cols_q] = (0, 200, 0)
        inside = ((px_reproj[:, 0] >= 0) & (px_reproj[:, 0] <= w - 1)
                  & (px_reproj[:, 1] >= 0) & (px_reproj[:, 1] <= h - 1))
        rows_p = np.round(px_reproj[inside, 1]).astype(int)
        cols_p = np.round(px_reproj[inside, 0]).astype(int)
        canvas[rows_p, cols_p] = (255, 0, 255)
        Image.fromarray(canvas).save(args.overlay)
        report_line = f"wrote {out} and {args.overlay}"
    else:
        report_line = f"wrote {out}"
    print(json.dumps({"mean_px": report["mean_px"], "p95_px": report["p95_px"]}))
    print(report_line)
    return EXIT_OK


# ---------------------------------------------------------------- wiring

def build_parser() -> _Parser:
    parser = _Parser(prog="cfpose", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate synthetic scene files")
    p_sim.add_argument("config", help="JSON config path")
    p_sim.add_argument("--out-dir", default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", help="estimate pose from two point-set files")
    p_est.add_argument("set_p")
    p_est.add_argument("set_q")
    p_est.add_argument("--model", default="bearing",
                       choices=[k.value for k in ModelKind])
    p_est.add_argument("--basis", default="paper18",
                       help="basis name or a JSON basis file")
    p_est.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=None)
    p_est.add_argument("--theta0", default=None, help="comma-separated start vector")
    p_est.add_argument("--multistart", type=int, default=0)
    p_est.add_argument("--ransac", action="store_true")
    p_est.add_argument("--ransac-hypotheses", type=int, default=50)
    p_est.add_argument("--ransac-fraction", type=float, default=0.5)
    p_est.add_argument("--ransac-threshold", type=float, default=None)
    p_est.add_argument("--occlusion-kmeans", type=int, default=None, metavar="K")
    p_est.add_argument("--occlusion-keep", type=int, default=None)
    p_est.add_argument("--plane-normal", default=None, help="homography plane normal")
    p_est.add_argument("--plane-offset", type=float, default=None)
    p_est.add_argument("--max-iters", type=int, default=200)
    p_est.add_argument("--jacobian", default="analytic",
                       choices=["analytic", "forward-diff", "central-diff"])
    p_est.add_argument("--seed", type=int, default=0)
    p_est.add_argument("--oracle", default=None, help="oracle JSON for error scoring")
    p_est.add_argument("-o", "--output", default=None)
    p_est.set_defaults(func=cmd_estimate)

    p_bench = sub.add_parser("benchmark", help="run a named benchmark protocol")
    p_bench.add_argument("protocol",
                         choices=["table1a", "table1b", "runtime", "outliers150"])
    p_bench.add_argument("--trials", type=int, default=100)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--n-points", type=int, default=3142)
    p_bench.add_argument("--sizes", default=None,
                         help="comma-separated point counts (runtime protocol)")
    p_bench.add_argument("--jobs", type=int, default=0, help="0 = all cores")
    p_bench.add_argument("--out-dir", default="benchmark_out")
    p_bench.set_defaults(func=cmd_benchmark)

    p_reg = sub.add_parser("register", help="reproject one segmented image onto another")
    p_reg.add_argument("image_p")
    p_reg.add_argument("image_q")
    p_reg.add_argument("--theta", default=None)
    p_reg.add_argument("--estimate", default=None, help="estimate report JSON")
    p_reg.add_argument("--model", default="bearing", choices=["bearing", "homography"])
    p_reg.add_argument("--plane-normal", default=None)
    p_reg.add_argument("--plane-offset", type=float, default=None)
    p_reg.add_argument("--focal", type=float, default=800.0)
    p_reg.add_argument("--hue-lo", type=float, default=345.0)
    p_reg.add_argument("--hue-hi", type=float, default=15.0)
    p_reg.add_argument("--sat-min", type=float, default=0.5)
    p_reg.add_argument("--val-min", type=float, default=0.3)
    p_reg.add_argument("--overlay", default=None, help="overlay PNG output path")
    p_reg.add_argument("--dump-points", default=None, metavar="PREFIX",
                       help="also write the segmented sets as point-set JSON")
    p_reg.add_argument("-o", "--output", default=None)
    p_reg.set_defaults(func=cmd_register)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ESTIMATION_ERRORS as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except FileNotFoundError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except IsADirectoryError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PermissionError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
