"""File formats: time tags, truth sidecar, pass and SLR tracks, schedules, outputs."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .events import CHANNELS, TimeTags, TruthSidecar
from .orbit import PassTrack, PhysicalConstants, SlrTrack
from .protocol import CycleSchedule, ProtocolParams, build_cycle, schedule_to_row

TIMETAG_HEADER = ["tag", "channel", "cycle", "bit"]
SLR_HEADER = ["t_slr", "rtt", "delta_t_tx", "delta_t_rx"]
SCHEDULE_HEADER = ["cycle_index", "t_slr", "rtt", "t_trans", "t_shwp", "t_b1", "t_b2",
                   "b1", "b2", "tau_start", "tau_end"]
SLOT_NAMES = {-1: "early", 0: "central", 1: "late", -2: "background"}


class DataFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_rows(path, header: list[str]):
    """Yield (line number, row) after checking the header."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first != header:
            raise DataFormatError(path, 1, f"expected header {','.join(header)!r}, got {first!r}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(path, reader.line_num,
                                      f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


# --- time tags -----------------------------------------------------------------

def write_timetags(path, tags: TimeTags) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(TIMETAG_HEADER) + "\n")
        for t, ch, cyc, b in zip(tags.tag.tolist(), tags.channel.tolist(),
                                 tags.cycle.tolist(), tags.bit.tolist()):
            fh.write(f"{t},{CHANNELS[ch]},{cyc},{b}\n")


def read_timetags(path, resolution: float = 81e-12) -> TimeTags:
    tag, channel, cycle, bit = [], [], [], []
    for line, row in _read_rows(path, TIMETAG_HEADER):
        try:
            t, cyc, b = int(row[0]), int(row[2]), int(row[3])
        except ValueError as exc:
            raise DataFormatError(path, line, f"bad integer field: {exc}") from None
        if t < 0:
            raise DataFormatError(path, line, "negative tag")
        if row[1] not in CHANNELS:
            raise DataFormatError(path, line, f"channel must be '+' or '-', got {row[1]!r}")
        if b not in (0, 1):
            raise DataFormatError(path, line, f"bit must be 0 or 1, got {b}")
        tag.append(t)
        channel.append(CHANNELS.index(row[1]))
        cycle.append(cyc)
        bit.append(b)
    return TimeTags(np.array(tag, np.int64), np.array(channel, np.int8),
                    np.array(cycle, np.int64), np.array(bit, np.int8), resolution)


def write_truth(path, truth: TruthSidecar) -> None:
    with Path(path).open("w") as fh:
        for slot, phi, t_ref, bg in zip(truth.slot.tolist(), truth.phi.tolist(),
                                        truth.t_ref.tolist(), truth.is_background.tolist()):
            entry = {
                "slot": SLOT_NAMES[slot],
                "phi": None if math.isnan(phi) else phi,
                "t_ref": None if math.isnan(t_ref) else t_ref,
                "is_background": bool(bg),
            }
            fh.write(json.dumps(entry) + "\n")


def read_truth(path) -> TruthSidecar:
    codes = {v: k for k, v in SLOT_NAMES.items()}
    slot, phi, t_ref, bg = [], [], [], []
    with Path(path).open() as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                entry = json.loads(text)
                slot.append(codes[entry["slot"]])
                phi.append(math.nan if entry["phi"] is None else float(entry["phi"]))
                t_ref.append(math.nan if entry["t_ref"] is None else float(entry["t_ref"]))
                bg.append(bool(entry["is_background"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise DataFormatError(path, line, f"bad truth entry: {exc}") from None
    return TruthSidecar(np.array(slot, np.int8), np.array(phi), np.array(t_ref), np.array(bg, bool))


# --- tracks ------------------------------------------------------------------

def write_pass_csv(path, track: PassTrack, step: int = 1) -> None:
    cols = [getattr(track, name)[::step] for name in PassTrack.COLUMNS]
    with Path(path).open("w") as fh:
        fh.write(",".join(PassTrack.COLUMNS) + "\n")
        for row in zip(*(c.tolist() for c in cols)):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _float_rows(path, header):
    rows = []
    for line, row in _read_rows(path, header):
        try:
            rows.append([float(v) for v in row])
        except ValueError as exc:
            raise DataFormatError(path, line, f"bad number: {exc}") from None
    return np.array(rows, dtype=float).reshape(-1, len(header))


def read_pass_csv(path, constants: PhysicalConstants = PhysicalConstants()) -> PassTrack:
    data = _float_rows(path, list(PassTrack.COLUMNS))
    return PassTrack(*data.T, constants=constants)


def write_slr_csv(path, slr: SlrTrack) -> None:
    with Path(path).open("w") as fh:
        fh.write(",".join(SLR_HEADER) + "\n")
        for t, rtt, dt in zip(slr.t.tolist(), slr.rtt.tolist(), slr.delta_t_rx.tolist()):
            fh.write(f"{_fmt(t)},{_fmt(rtt)},{_fmt(slr.delta_t_tx)},{_fmt(dt)}\n")


def read_slr_csv(path, constants: PhysicalConstants = PhysicalConstants()) -> SlrTrack:
    data = _float_rows(path, SLR_HEADER)
    if len(data) == 0:
        return SlrTrack(np.zeros(0), np.zeros(0), np.zeros(0), constants=constants)
    return SlrTrack(data[:, 0], data[:, 1], data[:, 3], delta_t_tx=float(data[0, 2]), constants=constants)


# --- schedules -------------------------------------------------------------------

def write_schedules(path, schedules) -> None:
    with Path(path).open("w") as fh:
        fh.write(",".join(SCHEDULE_HEADER) + "\n")
        for s in schedules:
            row = schedule_to_row(s)
            fh.write(",".join(str(row[k]) if isinstance(row[k], int) else _fmt(row[k])
                              for k in SCHEDULE_HEADER) + "\n")


def read_schedules(path, cycle_period: float = 0.1) -> list[CycleSchedule]:
    out = []
    for line, row in _read_rows(path, SCHEDULE_HEADER):
        try:
            r = dict(zip(SCHEDULE_HEADER, row))
            params = ProtocolParams(t_trans=float(r["t_trans"]), t_shwp=float(r["t_shwp"]),
                                    cycle_period=cycle_period)
            out.append(build_cycle(float(r["rtt"]), float(r["t_slr"]), params,
                                   int(r["b1"]), int(r["b2"]), int(r["cycle_index"])))
        except ValueError as exc:
            raise DataFormatError(path, line, str(exc)) from None
    return out


# --- outputs -----------------------------------------------------------------

def write_phase_table(path, rows: list[dict]) -> None:
    header = ["bit", "j", "phi_center", "n_plus", "n_minus", "f_plus", "f_minus", "sigma"]
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in header})


def write_histograms(path, histograms) -> None:
    with Path(path).open("w") as fh:
        fh.write("bit,channel,delta_center,count\n")
        for h in histograms:
            for x, n in zip(h.centers.tolist(), h.counts.tolist()):
                fh.write(f"{h.bit},{h.channel},{_fmt(x)},{int(n)}\n")


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")
