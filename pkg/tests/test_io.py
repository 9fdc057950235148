import json

import numpy as np
import pytest

from delayed_choice import io
from delayed_choice.events import SimulationConfig, TimeTags, simulate_pass
from delayed_choice.orbit import simulate_slr_track
from delayed_choice.protocol import ProtocolParams, build_schedules


@pytest.fixture(scope="module")
def small_run(starlette_track):
    schedules = build_schedules(starlette_track, ProtocolParams(cycle_stride=40), seed=3)
    tags, truth = simulate_pass(starlette_track, schedules, SimulationConfig(seed=3, background_rate=100.0))
    return schedules, tags, truth


def test_timetag_roundtrip(tmp_path, small_run):
    _, tags, _ = small_run
    p = tmp_path / "t.csv"
    io.write_timetags(p, tags)
    assert p.read_text().splitlines()[0] == "tag,channel,cycle,bit"
    back = io.read_timetags(p)
    for name in ("tag", "channel", "cycle", "bit"):
        assert np.array_equal(getattr(back, name), getattr(tags, name))


def test_empty_timetag_file_is_valid(tmp_path):
    p = tmp_path / "t.csv"
    io.write_timetags(p, TimeTags.empty())
    assert p.read_text() == "tag,channel,cycle,bit\n"
    assert len(io.read_timetags(p)) == 0


def test_truncated_csv_names_line(tmp_path, small_run):
    _, tags, _ = small_run
    p = tmp_path / "t.csv"
    io.write_timetags(p, tags)
    lines = p.read_text().splitlines()
    lines[5] = lines[5].rsplit(",", 1)[0]
    p.write_text("\n".join(lines[:6]) + "\n")
    with pytest.raises(io.DataFormatError) as exc:
        io.read_timetags(p)
    assert exc.value.line == 6
    assert ":6:" in str(exc.value)


@pytest.mark.parametrize("row,msg", [
    ("12,x,0,1", "channel"),
    ("12,+,0,2", "bit"),
    ("-3,+,0,1", "negative"),
    ("1.5,+,0,1", "integer"),
])
def test_bad_rows_rejected(tmp_path, row, msg):
    p = tmp_path / "t.csv"
    p.write_text("tag,channel,cycle,bit\n" + row + "\n")
    with pytest.raises(io.DataFormatError, match=msg):
        io.read_timetags(p)


def test_bad_header(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n")
    with pytest.raises(io.DataFormatError, match=":1:"):
        io.read_timetags(p)


def test_truth_roundtrip(tmp_path, small_run):
    _, _, truth = small_run
    p = tmp_path / "truth.jsonl"
    io.write_truth(p, truth)
    back = io.read_truth(p)
    assert np.array_equal(back.slot, truth.slot)
    assert np.array_equal(back.is_background, truth.is_background)
    np.testing.assert_array_equal(back.phi, truth.phi)
    first = json.loads(p.read_text().splitlines()[0])
    assert set(first) == {"slot", "phi", "t_ref", "is_background"}


def test_truth_bad_line(tmp_path):
    p = tmp_path / "truth.jsonl"
    p.write_text('{"slot": "early", "phi": 0.1, "t_ref": 1.0, "is_background": false}\n{"slot": "x"}\n')
    with pytest.raises(io.DataFormatError, match=":2:"):
        io.read_truth(p)


def test_pass_and_slr_roundtrip_exact(tmp_path, starlette_track):
    p = tmp_path / "pass.csv"
    io.write_pass_csv(p, starlette_track, step=100)
    back = io.read_pass_csv(p)
    np.testing.assert_array_equal(back.slant, starlette_track.slant[::100])
    np.testing.assert_array_equal(back.phi, starlette_track.phi[::100])
    slr = simulate_slr_track(starlette_track)
    q = tmp_path / "slr.csv"
    io.write_slr_csv(q, slr)
    sb = io.read_slr_csv(q)
    np.testing.assert_array_equal(sb.rtt, slr.rtt)
    np.testing.assert_array_equal(sb.delta_t_rx, slr.delta_t_rx)
    assert sb.delta_t_tx == slr.delta_t_tx


def test_schedule_roundtrip(tmp_path, small_run):
    schedules, _, _ = small_run
    p = tmp_path / "schedule.csv"
    io.write_schedules(p, schedules)
    back = io.read_schedules(p)
    assert len(back) == len(schedules)
    for a, b in zip(back, schedules):
        assert (a.cycle_index, a.b1, a.b2, a.t_slr, a.rtt) == (b.cycle_index, b.b1, b.b2, b.t_slr, b.rtt)
        assert a.segments() == b.segments()


def test_json_rejects_nan(tmp_path):
    with pytest.raises(ValueError):
        io.write_json(tmp_path / "r.json", {"x": float("nan")})
