"""Standard MIDI File reading/writing and quantization to the bar grid.

The grid is fixed at 16 sub-beats per 4/4 bar (other meters are rejected,
not approximated).  Files are written as SMF format 0 at 480 ticks per
quarter note, so one sub-beat is exactly 120 ticks and every grid point is
bit-exact.  Tempo survives a write/load cycle exactly as long as the bpm
value is representable as 60e6 / n for an integer number of microseconds
per quarter, which is what the set-tempo meta event stores.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field

from .errors import MidiParseError, UnsupportedMeterError

logger = logging.getLogger(__name__)

TICKS_PER_BAR = 16  # sub-beats per 4/4 bar
SUB_BEATS_PER_QUARTER = 4
WRITE_TPQ = 480
DEFAULT_VELOCITY = 64


@dataclass(frozen=True)
class Note:
    """A note on the sub-beat grid. onset/duration in grid ticks."""

    pitch: int
    onset: int
    duration: int
    velocity: int

    def __post_init__(self):
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside MIDI range")
        if self.onset < 0:
            raise ValueError(f"negative onset {self.onset}")
        if self.duration < 1:
            raise ValueError(f"duration {self.duration} < 1")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity {self.velocity} outside 1..127")

    @property
    def end(self) -> int:
        return self.onset + self.duration


def _note_sort_key(note: Note) -> tuple[int, int]:
    return (note.onset, -note.pitch)


@dataclass(frozen=True)
class QuantizedTrack:
    """Notes and tempo changes on the 16-per-bar grid.

    notes are sorted by (onset, pitch descending); tempo change ticks are
    aligned to 4-beat (= bar) boundaries; all note onsets fall inside the
    declared bar count.
    """

    notes: tuple[Note, ...]
    tempo_changes: tuple[tuple[int, float], ...] = ()
    bars: int = 0

    def __post_init__(self):
        prev = None
        for note in self.notes:
            k = _note_sort_key(note)
            if prev is not None and k < prev:
                raise ValueError("notes not sorted by (onset, pitch desc)")
            prev = k
            if note.onset >= self.bars * TICKS_PER_BAR:
                raise ValueError(
                    f"onset {note.onset} outside {self.bars} bar(s)"
                )
        last_tick = -1
        for tick, bpm in self.tempo_changes:
            if tick % TICKS_PER_BAR:
                raise ValueError(f"tempo tick {tick} not on a 4-beat boundary")
            if tick <= last_tick:
                raise ValueError("tempo ticks not strictly increasing")
            if bpm <= 0:
                raise ValueError(f"non-positive tempo {bpm}")
            if tick >= max(self.bars, 1) * TICKS_PER_BAR and tick > 0:
                raise ValueError(f"tempo tick {tick} outside {self.bars} bar(s)")
            last_tick = tick

    @classmethod
    def build(
        cls,
        notes,
        tempo_changes=(),
        bars: int | None = None,
    ) -> "QuantizedTrack":
        """Sort notes and derive the bar count from content if not given."""
        notes = tuple(sorted(notes, key=_note_sort_key))
        tempo_changes = tuple(sorted(tempo_changes))
        if bars is None:
            last = -1
            if notes:
                last = max(last, max(n.onset for n in notes))
            if tempo_changes:
                last = max(last, max(t for t, _ in tempo_changes))
            bars = (last // TICKS_PER_BAR + 1) if last >= 0 else 0
        return cls(notes, tempo_changes, bars)


# ---------------------------------------------------------------------------
# Raw (unquantized) scores
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RawNote:
    pitch: int
    start: int  # file ticks
    end: int
    velocity: int


@dataclass(frozen=True)
class RawScore:
    """Timed events straight out of an SMF, before grid quantization."""

    notes: tuple[RawNote, ...]
    tempos: tuple[tuple[int, float], ...]  # (tick, bpm)
    time_signatures: tuple[tuple[int, int, int], ...]  # (tick, numer, denom)
    ticks_per_quarter: int


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def read(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise MidiParseError(f"truncated {what}", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return int.from_bytes(self.read(4, what), "big")

    def u16(self, what: str) -> int:
        return int.from_bytes(self.read(2, what), "big")

    def u8(self, what: str) -> int:
        return self.read(1, what)[0]

    def varlen(self, what: str) -> int:
        value = 0
        for _ in range(4):
            byte = self.u8(what)
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        raise MidiParseError(f"overlong varint in {what}", self.pos)


_CHANNEL_DATA_LEN = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


def load_midi(data: bytes) -> RawScore:
    """Parse an SMF type 0 or 1 byte string into a RawScore.

    Note on/off pairs are resolved first-on first-off per (channel, pitch);
    a note-on that never closes is dropped with a warning.  Set-tempo and
    time-signature meta events are collected; everything else is skipped.
    """
    r = _Reader(data)
    if r.read(4, "header") != b"MThd":
        raise MidiParseError("missing MThd chunk", 0)
    if r.u32("header length") != 6:
        raise MidiParseError("unexpected MThd length", r.pos - 4)
    fmt = r.u16("format")
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported SMF format {fmt}", r.pos - 2)
    ntrks = r.u16("track count")
    division = r.u16("division")
    if division & 0x8000:
        raise MidiParseError("SMPTE time division not supported", r.pos - 2)
    if division == 0:
        raise MidiParseError("zero ticks per quarter", r.pos - 2)

    notes: list[RawNote] = []
    tempos: list[tuple[int, float]] = []
    time_sigs: list[tuple[int, int, int]] = []

    tracks_read = 0
    while tracks_read < ntrks and r.pos < len(r.data):
        chunk_type = r.read(4, "chunk header")
        chunk_len = r.u32("chunk length")
        if chunk_type != b"MTrk":
            r.read(chunk_len, f"chunk {chunk_type!r}")  # alien chunk, skip
            continue
        tracks_read += 1
        end = r.pos + chunk_len
        if end > len(r.data):
            raise MidiParseError("truncated MTrk chunk", r.pos)
        tick = 0
        status = 0
        open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}
        while r.pos < end:
            tick += r.varlen("MTrk delta time")
            byte = r.u8("MTrk event")
            if byte == 0xFF:
                status = 0  # meta events cancel running status
                meta = r.u8("meta type")
                length = r.varlen("meta length")
                payload = r.read(length, "meta payload")
                if meta == 0x51 and length == 3:
                    mpq = int.from_bytes(payload, "big")
                    if mpq > 0:
                        tempos.append((tick, 60_000_000 / mpq))
                elif meta == 0x58 and length >= 2:
                    time_sigs.append((tick, payload[0], 1 << payload[1]))
                elif meta == 0x2F:
                    break
                continue
            if byte in (0xF0, 0xF7):
                status = 0
                r.read(r.varlen("sysex length"), "sysex payload")
                continue
            if byte & 0x80:
                status = byte
                first = r.u8("event data")
            else:
                if status == 0:
                    raise MidiParseError("data byte without status", r.pos - 1)
                first = byte
            kind = status & 0xF0
            if kind not in _CHANNEL_DATA_LEN:
                raise MidiParseError(f"unexpected status {status:#x}", r.pos - 1)
            second = r.u8("event data") if _CHANNEL_DATA_LEN[kind] == 2 else 0
            channel = status & 0x0F
            if kind == 0x90 and second > 0:
                open_notes.setdefault((channel, first), []).append((tick, second))
            elif kind == 0x80 or (kind == 0x90 and second == 0):
                stack = open_notes.get((channel, first))
                if stack:
                    start, vel = stack.pop(0)
                    notes.append(RawNote(first, start, tick, vel))
        r.pos = end
        for (channel, pitch), stack in open_notes.items():
            for start, _ in stack:
                logger.warning(
                    "dropping unresolved note-on pitch=%d channel=%d tick=%d",
                    pitch, channel, start,
                )
    if tracks_read < ntrks:
        raise MidiParseError(
            f"expected {ntrks} MTrk chunk(s), found {tracks_read}", r.pos
        )

    notes.sort(key=lambda n: (n.start, -n.pitch, n.end))
    tempos.sort(key=lambda t: t[0])
    time_sigs.sort(key=lambda t: t[0])
    return RawScore(tuple(notes), tuple(tempos), tuple(time_sigs), division)


# ---------------------------------------------------------------------------
# Quantization
# ---------------------------------------------------------------------------


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def quantize(raw: RawScore) -> QuantizedTrack:
    """Snap a RawScore to the 16-sub-beats-per-bar grid.

    Onsets go to the nearest sub-beat, durations are rounded and clamped to
    at least one sub-beat, tempo changes snap to the nearest 4-beat
    boundary (later events win a boundary), and overlapping notes of the
    same pitch are merged to the longer span.  Non-4/4 music is rejected.
    """
    for _, numer, denom in raw.time_signatures:
        if (numer, denom) != (4, 4):
            raise UnsupportedMeterError(
                f"only 4/4 is supported, found {numer}/{denom}"
            )
    scale = SUB_BEATS_PER_QUARTER / raw.ticks_per_quarter

    by_pitch: dict[int, list[Note]] = {}
    for rn in raw.notes:
        onset = _round_half_up(rn.start * scale)
        duration = max(1, _round_half_up((rn.end - rn.start) * scale))
        note = Note(rn.pitch, onset, duration, min(max(rn.velocity, 1), 127))
        by_pitch.setdefault(rn.pitch, []).append(note)

    merged: list[Note] = []
    for pitch, group in by_pitch.items():
        group.sort(key=lambda n: (n.onset, -n.duration))
        current = group[0]
        for note in group[1:]:
            if note.onset < current.end:
                if note.end > current.end:
                    current = Note(pitch, current.onset,
                                   note.end - current.onset, current.velocity)
            else:
                merged.append(current)
                current = note
        merged.append(current)

    boundary_bpm: dict[int, float] = {}
    for tick, bpm in raw.tempos:
        sub = _round_half_up(tick * scale)
        boundary = TICKS_PER_BAR * _round_half_up(sub / TICKS_PER_BAR)
        boundary_bpm[boundary] = bpm
    tempo_changes = tuple(sorted(boundary_bpm.items()))

    return QuantizedTrack.build(merged, tempo_changes)


def raw_from_track(track: QuantizedTrack) -> RawScore:
    """Embed a quantized track as a RawScore with one tick per sub-beat."""
    return RawScore(
        notes=tuple(
            RawNote(n.pitch, n.onset, n.end, n.velocity) for n in track.notes
        ),
        tempos=track.tempo_changes,
        time_signatures=((0, 4, 4),),
        ticks_per_quarter=SUB_BEATS_PER_QUARTER,
    )


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------


def _varlen(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def write_midi(track: QuantizedTrack, out=None) -> bytes:
    """Serialize a QuantizedTrack as SMF format 0.

    quantize(load_midi(write_midi(t))) == t for any track whose tempo
    values are representable in whole microseconds per quarter note.
    Trailing bars with no content are not representable in SMF and do not
    survive the round trip.
    """
    tps = WRITE_TPQ // SUB_BEATS_PER_QUARTER  # ticks per sub-beat
    # (tick, order, midi bytes); order keeps meta < note-off < note-on
    events: list[tuple[int, int, bytes]] = [
        (0, 0, bytes((0xFF, 0x58, 0x04, 0x04, 0x02, 0x18, 0x08)))
    ]
    for tick, bpm in track.tempo_changes:
        mpq = _round_half_up(60_000_000 / bpm)
        events.append(
            (tick * tps, 0, bytes((0xFF, 0x51, 0x03)) + mpq.to_bytes(3, "big"))
        )
    for note in track.notes:
        events.append((note.onset * tps, 2, bytes((0x90, note.pitch, note.velocity))))
        events.append((note.end * tps, 1, bytes((0x80, note.pitch, 0))))
    events.sort(key=lambda e: (e[0], e[1], e[2]))

    body = io.BytesIO()
    now = 0
    for tick, _, msg in events:
        body.write(_varlen(tick - now))
        body.write(msg)
        now = tick
    body.write(_varlen(0))
    body.write(bytes((0xFF, 0x2F, 0x00)))

    payload = body.getvalue()
    data = b"".join(
        (
            b"MThd",
            (6).to_bytes(4, "big"),
            (0).to_bytes(2, "big"),
            (1).to_bytes(2, "big"),
            WRITE_TPQ.to_bytes(2, "big"),
            b"MTrk",
            len(payload).to_bytes(4, "big"),
            payload,
        )
    )
    if out is not None:
        out.write(data)
    return data
