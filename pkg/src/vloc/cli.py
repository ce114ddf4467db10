"""Command line front end.

Exit codes: 0 success, 1 data or runtime failure, 2 usage error.
"""

import argparse
import csv
import sys
from pathlib import Path

from .database import ScanConfig, ingest_csv, ingest_kitti, load_db, read_desc_file, save_db
from .errors import VlocError
from .geodesy import GeoPoint
from .kalman import FilterConfig
from .matching import MatchConfig
from .pipeline import Query, export_report, localize_sequence
from .synthworld import WorldConfig, run_monte_carlo

QUERY_MANIFEST_COLUMNS = ["timestamp_ns", "descriptor_path"]
QUERY_MANIFEST_TRUTH_COLUMNS = QUERY_MANIFEST_COLUMNS + ["truth_lat", "truth_lon"]

TRACE_CSV_HEADER = [
    "step",
    "query_ts",
    "matched_frame_id",
    "meas_lat",
    "meas_lon",
    "est_lat",
    "est_lon",
    "truth_lat",
    "truth_lon",
    "meas_err_m",
    "est_err_m",
]


class _UsageError(Exception):
    pass


def _add_match_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau1", type=float, default=0.8, help="distance ratio threshold (default 0.8)")
    p.add_argument("--tau2", type=float, default=0.97, help="cosine similarity threshold (default 0.97)")


def _add_scan_flags(p: argparse.ArgumentParser, default_exclusion) -> None:
    p.add_argument("--window-s", type=float, default=20.0, help="search window half-width in seconds (default 20)")
    p.add_argument("--no-window", action="store_true", help="scan the whole database on every query")
    p.add_argument(
        "--exclusion-s",
        type=float,
        default=default_exclusion,
        help="ignore frames within this many seconds of the query timestamp"
        + (" (default 1, the evaluation handicap)" if default_exclusion is not None else " (default off)"),
    )


def _add_filter_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dt", type=float, default=1.0, help="filter time step in seconds (default 1)")
    p.add_argument("--sigma-r", type=float, default=1e-4, help="measurement noise std in degrees (default 1e-4)")
    p.add_argument("--p0-scale", type=float, default=1000.0, help="initial covariance diagonal (default 1000)")
    p.add_argument("--q-scale", type=float, default=1e-10, help="process noise per step (default 1e-10)")


def _match_cfg(args) -> MatchConfig:
    return MatchConfig(tau1=args.tau1, tau2=args.tau2)


def _scan_cfg(args) -> ScanConfig:
    window = None if args.no_window else args.window_s
    exclusion = args.exclusion_s if args.exclusion_s is not None and args.exclusion_s > 0 else None
    return ScanConfig(window_s=window, exclusion_s=exclusion)


def _filter_cfg(args) -> FilterConfig:
    return FilterConfig(dt=args.dt, sigma_r=args.sigma_r, p0_scale=args.p0_scale, q_scale=args.q_scale)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vloc",
        description="Camera-only vehicle localization: descriptor retrieval fused with a constant-velocity filter.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build-db", help="convert a dataset into a descriptor database")
    src = p_build.add_mutually_exclusive_group(required=True)
    src.add_argument("--kitti", metavar="DIR", help="KITTI-raw style directory")
    src.add_argument("--csv", metavar="FILE", help="CSV manifest (frame_id,timestamp_ns,lat_deg,lon_deg,descriptor_path)")
    p_build.add_argument("--out", required=True, metavar="FILE", help="output database path")
    p_build.set_defaults(func=_cmd_build_db)

    p_query = sub.add_parser("query", help="localize a sequence of query images against a database")
    p_query.add_argument("--db", required=True, metavar="FILE", help="database built by build-db")
    p_query.add_argument(
        "--queries",
        required=True,
        metavar="FILE",
        help="CSV manifest: timestamp_ns,descriptor_path[,truth_lat,truth_lon]",
    )
    p_query.add_argument("--out-dir", default=".", help="directory for trace.csv (default .)")
    _add_match_flags(p_query)
    _add_scan_flags(p_query, default_exclusion=None)
    _add_filter_flags(p_query)
    p_query.set_defaults(func=_cmd_query)

    p_sim = sub.add_parser("simulate", help="synthetic Monte-Carlo evaluation of the full pipeline")
    p_sim.add_argument("--trials", type=int, required=True, help="number of synthetic drives")
    p_sim.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p_sim.add_argument("--steps", type=int, default=6, help="queries per drive (default 6)")
    p_sim.add_argument("--period-s", type=float, default=1.0, help="query spacing in seconds (default 1)")
    p_sim.add_argument("--workers", type=int, default=1, help="worker processes, 0 = all cores (default 1)")
    p_sim.add_argument("--out-dir", default=".", help="directory for errors.csv / errors.svg (default .)")
    p_sim.add_argument("--speed-mps", type=float, default=18.0, help="vehicle speed (default 18)")
    p_sim.add_argument("--heading-deg", type=float, default=45.0, help="drive heading (default 45)")
    p_sim.add_argument("--db-hz", type=float, default=10.0, help="database frame rate (default 10)")
    p_sim.add_argument("--duration-s", type=float, default=8.0, help="drive length in seconds (default 8)")
    p_sim.add_argument("--keypoints-per-frame", type=int, default=200, help="descriptors per frame (default 200)")
    p_sim.add_argument("--landmark-overlap", type=float, default=0.95, help="shared fraction between neighbours (default 0.95)")
    p_sim.add_argument("--query-noise-sigma", type=float, default=0.01, help="per-component query noise (default 0.01)")
    p_sim.add_argument("--distractor-fraction", type=float, default=0.1, help="replaced query descriptors (default 0.1)")
    _add_match_flags(p_sim)
    _add_scan_flags(p_sim, default_exclusion=1.0)
    _add_filter_flags(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    return parser


def _cmd_build_db(args) -> int:
    db = ingest_kitti(args.kitti) if args.kitti else ingest_csv(args.csv)
    save_db(db, args.out)
    print(f"wrote {len(db)} frames to {args.out}")
    return 0


def _read_query_manifest(path: Path) -> list[Query]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise _UsageError(f"{path.name}: empty query manifest") from None
        if header == QUERY_MANIFEST_TRUTH_COLUMNS:
            with_truth = True
        elif header == QUERY_MANIFEST_COLUMNS:
            with_truth = False
        else:
            raise _UsageError(
                f"{path.name}: header must be {','.join(QUERY_MANIFEST_COLUMNS)}"
                f" or {','.join(QUERY_MANIFEST_TRUTH_COLUMNS)}"
            )
        queries = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            ts = int(row[0])
            desc_path = Path(row[1])
            if not desc_path.is_absolute():
                desc_path = path.parent / desc_path
            record = read_desc_file(desc_path)
            truth = None
            if with_truth and len(row) >= 4 and row[2].strip() and row[3].strip():
                truth = GeoPoint(float(row[2]), float(row[3]))
            queries.append(Query(record.descriptors, ts, truth))
    if not queries:
        raise _UsageError(f"{path.name}: query manifest has no rows")
    return queries


def _fmt_opt(value) -> str:
    return "" if value is None else repr(float(value))


def _write_trace_csv(trace, out_dir: Path) -> Path:
    out = out_dir / "trace.csv"
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_HEADER)
        for s in trace:
            writer.writerow(
                [
                    s.step,
                    s.query_ts,
                    s.matched_frame_id,
                    repr(s.measurement.lat),
                    repr(s.measurement.lon),
                    repr(s.estimate.lat),
                    repr(s.estimate.lon),
                    _fmt_opt(s.truth.lat if s.truth else None),
                    _fmt_opt(s.truth.lon if s.truth else None),
                    _fmt_opt(s.meas_err_m),
                    _fmt_opt(s.est_err_m),
                ]
            )
    return out


def _cmd_query(args) -> int:
    db = load_db(args.db)
    queries = _read_query_manifest(Path(args.queries))
    trace = localize_sequence(db, queries, _scan_cfg(args), _match_cfg(args), _filter_cfg(args))

    has_truth = any(s.truth is not None for s in trace)
    head = f"{'step':>4} {'frame':>7} {'meas_lat':>11} {'meas_lon':>11} {'est_lat':>11} {'est_lon':>11}"
    if has_truth:
        head += f" {'meas_err_m':>10} {'est_err_m':>10}"
    print(head)
    for s in trace:
        line = (
            f"{s.step:>4} {s.matched_frame_id:>7} "
            f"{s.measurement.lat:>11.6f} {s.measurement.lon:>11.6f} "
            f"{s.estimate.lat:>11.6f} {s.estimate.lon:>11.6f}"
        )
        if has_truth:
            line += (
                f" {s.meas_err_m if s.meas_err_m is not None else float('nan'):>10.2f}"
                f" {s.est_err_m if s.est_err_m is not None else float('nan'):>10.2f}"
            )
        print(line)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = _write_trace_csv(trace, out_dir)
    print(f"trace written to {out}")
    return 0


def _cmd_simulate(args) -> int:
    if args.trials < 1:
        raise _UsageError(f"--trials must be positive, got {args.trials}")
    if args.steps < 1:
        raise _UsageError(f"--steps must be positive, got {args.steps}")
    world = WorldConfig(
        speed_mps=args.speed_mps,
        heading_deg=args.heading_deg,
        db_hz=args.db_hz,
        duration_s=args.duration_s,
        keypoints_per_frame=args.keypoints_per_frame,
        landmark_overlap=args.landmark_overlap,
        query_noise_sigma=args.query_noise_sigma,
        distractor_fraction=args.distractor_fraction,
        seed=args.seed,
    )
    stats = run_monte_carlo(
        world,
        _scan_cfg(args),
        _match_cfg(args),
        _filter_cfg(args),
        trials=args.trials,
        steps=args.steps,
        period_s=args.period_s,
        workers=args.workers,
    )
    print(f"{args.trials} trials, {stats.n_steps} steps")
    print(f"{'step':>4} {'mean_meas_m':>12} {'std_meas_m':>12} {'mean_est_m':>12} {'std_est_m':>12}")
    for i in range(stats.n_steps):
        print(
            f"{i + 1:>4} {stats.mean_meas_m[i]:>12.3f} {stats.std_meas_m[i]:>12.3f} "
            f"{stats.mean_est_m[i]:>12.3f} {stats.std_est_m[i]:>12.3f}"
        )
    csv_path, svg_path = export_report(stats, args.out_dir)
    print(f"report written to {csv_path} and {svg_path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return int(code) if code is not None else 0
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (VlocError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
