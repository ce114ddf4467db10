import numpy as np
import pytest

from vloc.database import ScanConfig
from vloc.errors import NoMatchError
from vloc.geodesy import GeoPoint, haversine_m
from vloc.kalman import FilterConfig, init_filter, step, update
from vloc.matching import DESCRIPTOR_DIM, DescriptorSet, MatchConfig
from vloc.pipeline import (
    ERRORS_CSV_HEADER,
    ErrorStats,
    LocalizationTrace,
    Query,
    TraceStep,
    evaluate,
    export_report,
    localize_sequence,
)
from vloc.synthworld import T0_NS, WorldConfig, gen_queries, gen_world


@pytest.fixture(scope="module")
def world():
    cfg = WorldConfig(seed=123)
    return cfg, gen_world(cfg)


def run_default(world_cfg, db, start_s=2.0, steps=4):
    queries = gen_queries(db, T0_NS + int(start_s * 1e9), steps, 1.0, world_cfg)
    return queries, localize_sequence(
        db, queries, ScanConfig(window_s=20.0, exclusion_s=1.0), MatchConfig(), FilterConfig()
    )


def test_trace_shape_and_numbering(world):
    cfg, db = world
    queries, trace = run_default(cfg, db)
    assert len(trace) == 4
    assert [s.step for s in trace] == [1, 2, 3, 4]
    assert [s.query_ts for s in trace] == [q.timestamp_ns for q in queries]


def test_measurement_is_matched_geotag(world):
    cfg, db = world
    _, trace = run_default(cfg, db)
    for s in trace:
        frame = db.frame_by_id(s.matched_frame_id)
        assert s.measurement == frame.geotag


def test_first_estimate_equals_first_measurement(world):
    cfg, db = world
    _, trace = run_default(cfg, db)
    assert trace[0].estimate == trace[0].measurement


def test_errors_present_when_truth_known(world):
    cfg, db = world
    _, trace = run_default(cfg, db)
    for s in trace:
        assert s.truth is not None
        assert s.meas_err_m == pytest.approx(haversine_m(s.measurement, s.truth))
        assert s.est_err_m == pytest.approx(haversine_m(s.estimate, s.truth))
        assert s.meas_err_m > 0.0


def test_exclusion_keeps_matches_away_from_query(world):
    cfg, db = world
    queries, trace = run_default(cfg, db)
    for s in trace:
        frame = db.frame_by_id(s.matched_frame_id)
        assert abs(frame.timestamp_ns - s.query_ts) > int(1.0 * 1e9)


def test_no_exclusion_matches_the_nearest_frame(world):
    cfg, db = world
    queries = gen_queries(db, T0_NS + 2_000_000_000, 3, 1.0, cfg)
    trace = localize_sequence(db, queries, ScanConfig(), MatchConfig(), FilterConfig())
    for q, s in zip(queries, trace):
        frame = db.frame_by_id(s.matched_frame_id)
        assert frame.timestamp_ns == q.timestamp_ns
        assert s.meas_err_m == pytest.approx(0.0, abs=1e-9)


def test_empty_queries_rejected(world):
    cfg, db = world
    with pytest.raises(ValueError):
        localize_sequence(db, [], ScanConfig(), MatchConfig(), FilterConfig())


def test_no_match_raises():
    rng = np.random.default_rng(40)
    cfg = WorldConfig(seed=3, duration_s=2.0)
    db = gen_world(cfg)
    # descriptors unrelated to every frame: matching finds nothing anywhere
    alien = rng.standard_normal((20, DESCRIPTOR_DIM)).astype(np.float32)
    alien /= np.linalg.norm(alien, axis=1, keepdims=True)
    q = Query(DescriptorSet(alien), T0_NS + 1_000_000_000, None)
    with pytest.raises(NoMatchError, match="step 1"):
        localize_sequence(db, [q], ScanConfig(), MatchConfig(), FilterConfig())


def make_trace(meas_errs, est_errs):
    lat0 = 49.0
    steps = []
    for i, (me, ee) in enumerate(zip(meas_errs, est_errs)):
        truth = GeoPoint(lat0, 8.0)
        steps.append(
            TraceStep(
                step=i + 1,
                query_ts=i,
                matched_frame_id=i,
                measurement=GeoPoint(lat0 + me / 111_320.0, 8.0),
                estimate=GeoPoint(lat0 + ee / 111_320.0, 8.0),
                vel_lat_dps=0.0,
                vel_lon_dps=0.0,
                truth=truth,
                meas_err_m=me,
                est_err_m=ee,
            )
        )
    return LocalizationTrace(tuple(steps))


def test_evaluate_means_and_stds():
    t1 = make_trace([10.0, 20.0], [10.0, 4.0])
    t2 = make_trace([30.0, 20.0], [10.0, 8.0])
    stats = evaluate([t1, t2])
    assert stats.n_traces == 2
    assert stats.n_steps == 2
    assert stats.mean_meas_m == pytest.approx([20.0, 20.0])
    assert stats.mean_est_m == pytest.approx([10.0, 6.0])
    assert stats.std_meas_m == pytest.approx([10.0, 0.0])
    assert stats.std_est_m == pytest.approx([0.0, 2.0])
    assert stats.final_mean_est_m == pytest.approx(6.0)
    assert stats.final_mean_meas_m == pytest.approx(20.0)


def test_evaluate_rejects_ragged_or_truthless():
    t1 = make_trace([10.0], [10.0])
    t2 = make_trace([10.0, 20.0], [10.0, 4.0])
    with pytest.raises(ValueError):
        evaluate([t1, t2])
    bare = TraceStep(
        step=1,
        query_ts=0,
        matched_frame_id=0,
        measurement=GeoPoint(49.0, 8.0),
        estimate=GeoPoint(49.0, 8.0),
        vel_lat_dps=0.0,
        vel_lon_dps=0.0,
    )
    with pytest.raises(ValueError):
        evaluate([LocalizationTrace((bare,))])
    with pytest.raises(ValueError):
        evaluate([])


def test_export_report_writes_csv_and_svg(tmp_path):
    stats = evaluate([make_trace([10.0, 20.0, 15.0], [10.0, 5.0, 2.5])])
    csv_path, svg_path = export_report(stats, tmp_path)
    assert csv_path.name == "errors.csv"
    assert svg_path.name == "errors.svg"
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == ",".join(ERRORS_CSV_HEADER)
    assert len(lines) == 4
    first = lines[1].split(",")
    assert int(first[0]) == 1
    assert float(first[1]) == 10.0
    svg = svg_path.read_text()
    assert svg.startswith("<svg")
    assert svg.count("<polyline") == 2


def test_export_report_round_trips_float_text(tmp_path):
    stats = evaluate([make_trace([1.0 / 3.0], [2.0 / 7.0])])
    csv_path, _ = export_report(stats, tmp_path)
    row = csv_path.read_text().strip().splitlines()[1].split(",")
    assert float(row[1]) == stats.mean_meas_m[0]
    assert float(row[3]) == stats.mean_est_m[0]


def test_window_centers_on_first_match(world):
    # steps >= 2 may only match frames within the window around the step-1 hit
    cfg, db = world
    window_s = 3.0
    queries = gen_queries(db, T0_NS + int(2.5e9), 4, 1.0, cfg)
    trace = localize_sequence(
        db, queries, ScanConfig(window_s=window_s, exclusion_s=1.0), MatchConfig(), FilterConfig()
    )
    anchor_ts = db.frame_by_id(trace[0].matched_frame_id).timestamp_ns
    for s in trace[1:]:
        matched_ts = db.frame_by_id(s.matched_frame_id).timestamp_ns
        assert abs(matched_ts - anchor_ts) <= window_s * 1e9


def test_estimates_replay_through_filter(world):
    # the trace is retrieval plus a plain filter pass; replaying the recorded
    # measurements standalone must reproduce every estimate bit for bit
    cfg, db = world
    _, trace = run_default(cfg, db, steps=5)
    fcfg = FilterConfig()
    state = None
    for s in trace:
        if state is None:
            state = update(init_filter(s.measurement, fcfg), s.measurement, fcfg)
        else:
            state = step(state, s.measurement, fcfg)
        assert (state.x[0], state.x[1]) == (s.estimate.lat, s.estimate.lon)
        assert (state.x[2], state.x[3]) == (s.vel_lat_dps, s.vel_lon_dps)
