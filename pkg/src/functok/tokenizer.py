"""Bidirectional conversion between structures and token sequences.

Stage-1 (lead sheet) sequences carry Emotion, optional Key, then per bar
one optional chord and the monophonic melody; tempo and velocity are
dropped.  Stage-2 (performance) sequences interleave each lead-sheet bar
(after Track_M) with the corresponding full-texture bar (after Track_X),
which adds Velocity per note and a Tempo event at 4-beat boundaries where
the tempo bin changes.

Encoding is canonical: groups in ascending sub-beat order, chord before
notes, notes in non-increasing decoded pitch (stable), empty chord slots
omitted.  decode(encode(x)) returns x exactly, except that

* minor-key pitches on the two reassigned scale steps come back within
  one semitone (and two simultaneous notes may collapse onto one token
  when reassignment makes them collide),
* tempo and velocity come back as bin centers,
* durations longer than 32 sub-beats are truncated to 32.
"""

from __future__ import annotations

from .analysis import LeadSheet
from .errors import AlignmentError, DecodeError, PitchRangeError
from .events import (
    BAR,
    EOS,
    EMOTIONS_LEAD,
    EMOTIONS_PERF,
    MAX_DURATION,
    TRACK_M,
    TRACK_X,
    Event,
    EventKind,
    Layout,
    Repr,
    TokenSequence,
    Vocabulary,
    chord_event,
    degree_event,
    duration_event,
    emotion_event,
    event_to_str,
    key_event,
    octave_event,
    pitch_event,
    sub_beat_event,
    tempo_bin,
    tempo_bpm,
    tempo_event,
    velocity_bin,
    velocity_event,
    velocity_value,
)
from .grammar import feed, follow_kinds, initial_state
from .midi_io import DEFAULT_VELOCITY, TICKS_PER_BAR, Note, QuantizedTrack
from .theory import (
    MIDI_MAX,
    MIDI_MIN,
    ChordSymbol,
    Key,
    RandomSource,
    chord_to_absolute,
    chord_to_functional,
    degree_to_pc,
    pitch_to_octave_degree,
)


def vocab_report(rep: Repr, layout: Layout) -> Vocabulary:
    """The full vocabulary of a scheme/layout, with per-category counts."""
    return Vocabulary(rep, layout)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def _check_pitch(midi: int) -> int:
    if not MIDI_MIN <= midi <= MIDI_MAX:
        raise PitchRangeError(f"pitch {midi} outside {MIDI_MIN}..{MIDI_MAX}")
    return midi


def _note_body(
    note: Note, rep: Repr, key: Key | None, rng: RandomSource
) -> tuple[int, list[Event]]:
    """(decoded pitch, events) for one note, without velocity."""
    _check_pitch(note.pitch)
    if rep.is_functional:
        octave, deg = pitch_to_octave_degree(note.pitch, key, rng)
        decoded = 12 * (octave + 1) + degree_to_pc(deg, key)
        return decoded, [octave_event(octave), degree_event(deg)]
    return note.pitch, [pitch_event(note.pitch)]


def _melody_bar(
    bar: int,
    notes: list[Note],
    chord: ChordSymbol | None,
    rep: Repr,
    key: Key | None,
    rng: RandomSource,
) -> list[Event]:
    events: list[Event] = [BAR]
    start = bar * TICKS_PER_BAR
    positions = sorted({n.onset - start for n in notes} | ({0} if chord else set()))
    by_onset = {n.onset - start: n for n in notes}
    for position in positions:
        events.append(sub_beat_event(position))
        if position == 0 and chord is not None:
            symbol = chord_to_functional(chord, key, rng) if rep.is_functional else chord
            events.append(chord_event(symbol))
        note = by_onset.get(position)
        if note is not None:
            _, body = _note_body(note, rep, key, rng)
            events.extend(body)
            events.append(duration_event(min(note.duration, MAX_DURATION)))
    return events


def _x_bar(
    bar: int,
    notes: list[Note],
    tempo: int | None,
    rep: Repr,
    key: Key | None,
    rng: RandomSource,
) -> list[Event]:
    events: list[Event] = [BAR]
    start = bar * TICKS_PER_BAR
    positions = sorted({n.onset - start for n in notes} | ({0} if tempo is not None else set()))
    for position in positions:
        events.append(sub_beat_event(position))
        if position == 0 and tempo is not None:
            events.append(tempo_event(tempo))
        group = [n for n in notes if n.onset - start == position]
        converted = [(n, *_note_body(n, rep, key, rng)) for n in group]
        converted.sort(key=lambda item: -item[1])  # stable: ties keep input order
        seen_pitch: set[int] = set()
        for note, decoded, body in converted:
            if decoded in seen_pitch:
                continue  # reassignment collision: one token triple suffices
            seen_pitch.add(decoded)
            events.extend(body)
            events.append(duration_event(min(note.duration, MAX_DURATION)))
            events.append(velocity_event(velocity_bin(note.velocity)))
    return events


def _bar_notes(notes, bars: int) -> list[list[Note]]:
    split: list[list[Note]] = [[] for _ in range(bars)]
    for note in notes:
        split[note.onset // TICKS_PER_BAR].append(note)
    return split


def _dedupe(notes) -> list[Note]:
    """Drop same-onset same-pitch duplicates, keeping the longest."""
    best: dict[tuple[int, int], Note] = {}
    for note in notes:
        slot = (note.onset, note.pitch)
        if slot not in best or note.duration > best[slot].duration:
            best[slot] = note
    return sorted(best.values(), key=lambda n: (n.onset, -n.pitch))


def encode_lead_sheet(
    sheet: LeadSheet,
    emotion: str,
    rep: Repr,
    rng: RandomSource,
) -> TokenSequence:
    """Tokenize a lead sheet for stage 1 (no tempo/velocity events)."""
    if emotion not in EMOTIONS_LEAD:
        raise ValueError(f"stage-1 emotion must be one of {EMOTIONS_LEAD}")
    if rep.has_key and sheet.key is None:
        raise ValueError(f"{rep.value} encoding needs a key on the lead sheet")
    for _, symbol in sheet.chords:
        if symbol is not None and symbol.is_functional:
            raise ValueError("lead sheet chords must use absolute roots")

    events = [emotion_event(emotion)]
    if rep.has_key:
        events.append(key_event(sheet.key))
    chords = dict(sheet.chords)
    melody_bars = _bar_notes(sheet.melody, sheet.bars)
    for bar in range(sheet.bars):
        events.extend(
            _melody_bar(
                bar, melody_bars[bar], chords.get(bar * TICKS_PER_BAR),
                rep, sheet.key, rng,
            )
        )
    events.append(EOS)
    return TokenSequence(events, Layout.LEAD_SHEET, rep)


def encode_performance(
    track: QuantizedTrack,
    sheet: LeadSheet,
    emotion: str,
    rep: Repr,
    rng: RandomSource,
) -> TokenSequence:
    """Tokenize a performance for stage 2, interleaved with its lead sheet."""
    if emotion not in EMOTIONS_PERF:
        raise ValueError(f"stage-2 emotion must be one of {EMOTIONS_PERF}")
    if sheet.bars != track.bars:
        raise AlignmentError(
            f"lead sheet has {sheet.bars} bar(s), track has {track.bars}"
        )
    if rep.has_key and sheet.key is None:
        raise ValueError(f"{rep.value} encoding needs a key on the lead sheet")
    for _, symbol in sheet.chords:
        if symbol is not None and symbol.is_functional:
            raise ValueError("lead sheet chords must use absolute roots")

    events = [emotion_event(emotion)]
    if rep.has_key:
        events.append(key_event(sheet.key))

    tempo_at_bar: dict[int, int] = {}
    running = -1
    for tick, bpm in track.tempo_changes:
        b = tempo_bin(bpm)
        if b != running:
            tempo_at_bar[tick // TICKS_PER_BAR] = b
            running = b

    chords = dict(sheet.chords)
    melody_bars = _bar_notes(sheet.melody, sheet.bars)
    x_bars = _bar_notes(_dedupe(track.notes), track.bars)
    for bar in range(track.bars):
        events.append(TRACK_M)
        events.extend(
            _melody_bar(
                bar, melody_bars[bar], chords.get(bar * TICKS_PER_BAR),
                rep, sheet.key, rng,
            )
        )
        events.append(TRACK_X)
        events.extend(
            _x_bar(bar, x_bars[bar], tempo_at_bar.get(bar), rep, sheet.key, rng)
        )
    events.append(EOS)
    return TokenSequence(events, Layout.PERFORMANCE, rep)


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------


def decode(seq: TokenSequence):
    """Rebuild structures from a grammar-valid token sequence.

    Returns a LeadSheet for the lead-sheet layout and a
    (LeadSheet, QuantizedTrack) pair for the performance layout.  Raises
    DecodeError naming the offending position when the sequence violates
    the grammar.
    """
    state = initial_state(seq.repr, seq.layout)
    melody: list[Note] = []
    chords: dict[int, ChordSymbol] = {}
    x_notes: list[Note] = []
    tempo_changes: list[tuple[int, float]] = []
    bars = 0
    saw_eos = False

    for position, event in enumerate(seq.events):
        if saw_eos:
            raise DecodeError(f"position {position}: events after EOS")
        try:
            feed(state, event)
        except Exception as exc:
            expected = ", ".join(sorted(k.value for k in follow_kinds(state)))
            raise DecodeError(
                f"position {position}: {exc} (expected category: {expected or 'none'})"
            ) from None
        kind = event.kind
        if kind is EventKind.BAR:
            if seq.layout is Layout.LEAD_SHEET:
                bars += 1
        elif kind is EventKind.TRACK and event.value == "M":
            bars += 1
        elif kind is EventKind.CHORD and event.value is not None:
            symbol = event.value
            if symbol.is_functional:
                symbol = chord_to_absolute(symbol, state.key)
            chords[state.bar * TICKS_PER_BAR] = symbol
        elif kind is EventKind.TEMPO:
            tempo_changes.append(
                (state.bar * TICKS_PER_BAR, tempo_bpm(event.value))
            )
        elif kind is EventKind.DURATION:
            onset = state.bar * TICKS_PER_BAR + state.sub_beat
            if not state.in_x_bar:
                melody.append(
                    Note(state.pend_midi, onset, event.value, DEFAULT_VELOCITY)
                )
        elif kind is EventKind.VELOCITY:
            onset = state.bar * TICKS_PER_BAR + state.sub_beat
            x_notes.append(
                Note(
                    state.pend_midi,
                    onset,
                    seq.events[position - 1].value,
                    velocity_value(event.value),
                )
            )
        elif kind is EventKind.EOS:
            saw_eos = True

    if not saw_eos:
        raise DecodeError(f"position {len(seq.events)}: sequence ends without EOS")

    sheet = LeadSheet(
        key=state.key,
        melody=tuple(melody),
        chords=tuple(
            (bar * TICKS_PER_BAR, chords.get(bar * TICKS_PER_BAR))
            for bar in range(bars)
        ),
        bars=bars,
    )
    if seq.layout is Layout.LEAD_SHEET:
        return sheet
    track = QuantizedTrack(
        notes=tuple(sorted(x_notes, key=lambda n: (n.onset, -n.pitch))),
        tempo_changes=tuple(tempo_changes),
        bars=bars,
    )
    return sheet, track
