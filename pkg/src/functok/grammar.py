"""Follow-set grammar over token sequences.

Tracks exactly enough state to decide, at every position, which event
categories (and which values inside each category) keep a sequence
grammar-valid and canonically encoded:

* lead-sheet sequences: Emotion, optional Key, then bars of sub-beat
  groups (one optional chord at sub-beat 0, monophonic melody notes whose
  spans never overlap, even across bars), then EOS;
* performance sequences: Emotion, optional Key, then alternating
  Track_M/Track_X bar pairs where M bars follow the melody rules and X
  bars carry polyphonic notes (non-increasing pitch inside a sub-beat
  group) with velocities, plus an optional tempo change right after
  Sub-Beat_0.

``feed`` mutates a state and raises GrammarError on an illegal event; it
is the validator behind decoding.  ``legal_mask`` returns the boolean
id-mask used for masked sampling.  The mask is slightly stricter than
``feed``: it never offers Chord_None (canonical encodings omit empty
chord slots) and it keeps functional pitches inside A0..C8, while feed
also accepts the one-semitone overspill that minor-key reassignment can
produce at the range edges.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import GrammarError
from .events import (
    EMOTIONS_LEAD,
    EMOTIONS_PERF,
    MAX_DURATION,
    SUB_BEATS,
    TEMPO_BINS,
    Event,
    EventKind,
    Layout,
    Repr,
    Vocabulary,
    event_to_str,
)
from .midi_io import TICKS_PER_BAR
from .theory import (
    DECODE_MIDI_MAX,
    DECODE_MIDI_MIN,
    DEGREE_INDEX,
    DEGREE_ORDER,
    MIDI_MAX,
    MIDI_MIN,
    Key,
    degree_to_pc,
)

_NO_NOTE = 10_000  # sentinel pitch bound meaning "no note in group yet"


@lru_cache(maxsize=64)
def _degree_midis(key: Key) -> tuple[tuple[int, ...], ...]:
    """[octave][degree index] -> decoded MIDI pitch for this key."""
    pcs = [degree_to_pc(deg, key) for deg in DEGREE_ORDER]
    return tuple(
        tuple(12 * (octave + 1) + pc for pc in pcs) for octave in range(9)
    )


@dataclass
class GrammarState:
    rep: Repr
    layout: Layout
    key: Key | None = None
    phase: str = "emotion"  # emotion -> key -> body -> done
    track: str | None = None  # performance layout: None / "M" / "X"
    awaiting_bar: bool = False  # just after a Track event
    in_bar: bool = False
    bar: int = -1  # current bar (lead) / bar-pair (performance) index
    sub_beat: int = -1  # last opened group position in this bar segment
    group_pos: str = "none"  # none | need_item | after_chord | open_x
    chord_done: bool = False
    melody_busy: int = 0  # first free melody tick (lead / M bars)
    pending: str | None = None  # degree | duration | velocity
    pend_octave: int = -1
    pend_midi: int = -1
    last_midi: int = _NO_NOTE  # pitch ceiling within the open X group
    tempo_bin: int = -1  # running tempo bin, -1 before any

    def copy(self) -> "GrammarState":
        return replace(self)

    # -- derived context ---------------------------------------------------

    @property
    def in_melody_bar(self) -> bool:
        return self.in_bar and (
            self.layout is Layout.LEAD_SHEET or self.track == "M"
        )

    @property
    def in_x_bar(self) -> bool:
        return self.in_bar and self.track == "X"

    @property
    def group_closed(self) -> bool:
        """No half-finished group or note blocks a structural event."""
        return self.pending is None and self.group_pos != "need_item"

    @property
    def bars_done(self) -> int:
        """Completed or started bars (pairs in the performance layout)."""
        return self.bar + 1


def initial_state(rep: Repr, layout: Layout) -> GrammarState:
    return GrammarState(rep=rep, layout=layout)


# ---------------------------------------------------------------------------
# Value-level legality
# ---------------------------------------------------------------------------


def _emotions(state: GrammarState) -> tuple[str, ...]:
    return EMOTIONS_LEAD if state.layout is Layout.LEAD_SHEET else EMOTIONS_PERF


def _chord_legal(state: GrammarState) -> bool:
    return (
        state.in_melody_bar
        and state.group_pos == "need_item"
        and state.sub_beat == 0
        and not state.chord_done
    )


def _tempo_legal(state: GrammarState) -> bool:
    return state.in_x_bar and state.group_pos == "need_item" and state.sub_beat == 0


def _melody_tick(state: GrammarState, sub_beat: int) -> int:
    return state.bar * TICKS_PER_BAR + sub_beat


def _note_start_legal(state: GrammarState) -> bool:
    if state.pending is not None:
        return False
    if state.in_melody_bar:
        return (
            state.group_pos in ("need_item", "after_chord")
            and _melody_tick(state, state.sub_beat) >= state.melody_busy
        )
    if state.in_x_bar:
        return state.group_pos in ("need_item", "open_x")
    return False


def _legal_sub_beats(state: GrammarState) -> range | list[int]:
    if not state.in_bar or not state.group_closed:
        return []
    first = state.sub_beat + 1
    if state.in_x_bar:
        return range(first, SUB_BEATS)
    positions = []
    for s in range(first, SUB_BEATS):
        chord_here = s == 0 and not state.chord_done
        note_here = _melody_tick(state, s) >= state.melody_busy
        if chord_here or note_here:
            positions.append(s)
    return positions


def _pitch_bounds(state: GrammarState, for_mask: bool) -> tuple[int, int]:
    """Inclusive MIDI bounds for the next note start."""
    lo = MIDI_MIN if for_mask or not state.rep.is_functional else DECODE_MIDI_MIN
    hi = MIDI_MAX if for_mask or not state.rep.is_functional else DECODE_MIDI_MAX
    if state.in_x_bar and state.last_midi != _NO_NOTE:
        hi = min(hi, state.last_midi)
    return lo, hi


def _legal_octaves(state: GrammarState, for_mask: bool) -> list[int]:
    lo, hi = _pitch_bounds(state, for_mask)
    table = _degree_midis(state.key)
    return [
        octave
        for octave in range(9)
        if any(lo <= midi <= hi for midi in table[octave])
    ]


def _legal_degree_indices(state: GrammarState, for_mask: bool) -> list[int]:
    lo, hi = _pitch_bounds(state, for_mask)
    row = _degree_midis(state.key)[state.pend_octave]
    return [i for i, midi in enumerate(row) if lo <= midi <= hi]


def _bar_legal(state: GrammarState) -> bool:
    if state.phase != "body":
        return False
    if state.layout is Layout.LEAD_SHEET:
        return state.group_closed
    return state.awaiting_bar


def _track_values(state: GrammarState) -> tuple[str, ...]:
    if state.phase != "body" or state.layout is not Layout.PERFORMANCE:
        return ()
    if state.awaiting_bar or state.pending is not None:
        return ()
    if state.track is None:
        return ("M",)
    if state.track == "M" and state.in_bar and state.group_closed:
        return ("X",)
    if state.track == "X" and state.in_bar and state.group_closed:
        return ("M",)
    return ()


def _eos_legal(state: GrammarState) -> bool:
    if state.phase != "body":
        return False
    if state.layout is Layout.LEAD_SHEET:
        return state.group_closed
    if state.awaiting_bar:
        return False
    if state.track is None:
        return True
    return state.track == "X" and state.in_bar and state.group_closed


# ---------------------------------------------------------------------------
# Public queries
# ---------------------------------------------------------------------------


def follow_kinds(state: GrammarState) -> frozenset[EventKind]:
    """Event categories that keep the sequence grammar-valid here."""
    if state.phase == "emotion":
        return frozenset({EventKind.EMOTION})
    if state.phase == "key":
        return frozenset({EventKind.KEY})
    if state.phase == "done":
        return frozenset()
    if state.pending == "degree":
        return frozenset({EventKind.DEGREE})
    if state.pending == "duration":
        return frozenset({EventKind.DURATION})
    if state.pending == "velocity":
        return frozenset({EventKind.VELOCITY})
    kinds = set()
    if _legal_sub_beats(state):
        kinds.add(EventKind.SUB_BEAT)
    if _chord_legal(state):
        kinds.add(EventKind.CHORD)
    if _tempo_legal(state):
        kinds.add(EventKind.TEMPO)
    if _note_start_legal(state):
        kinds.add(EventKind.OCTAVE if state.rep.is_functional else EventKind.PITCH)
    if _bar_legal(state):
        kinds.add(EventKind.BAR)
    if _track_values(state):
        kinds.add(EventKind.TRACK)
    if _eos_legal(state):
        kinds.add(EventKind.EOS)
    return frozenset(kinds)


def legal_mask(state: GrammarState, vocab: Vocabulary) -> np.ndarray:
    """Boolean mask over vocabulary ids of canonically legal next tokens."""
    mask = np.zeros(len(vocab), dtype=bool)

    if state.phase == "emotion":
        for label in _emotions(state):
            mask[vocab.id_of(f"Emotion_{label}")] = True
        return mask
    if state.phase == "key":
        lo, hi = vocab.category_slice(EventKind.KEY)
        mask[lo:hi] = True
        return mask
    if state.phase == "done":
        return mask

    if state.pending == "degree":
        lo, _ = vocab.category_slice(EventKind.DEGREE)
        for i in _legal_degree_indices(state, for_mask=True):
            mask[lo + i] = True
        return mask
    if state.pending == "duration":
        lo, hi = vocab.category_slice(EventKind.DURATION)
        mask[lo:hi] = True
        return mask
    if state.pending == "velocity":
        lo, hi = vocab.category_slice(EventKind.VELOCITY)
        mask[lo:hi] = True
        return mask

    subs = _legal_sub_beats(state)
    if subs:
        lo, _ = vocab.category_slice(EventKind.SUB_BEAT)
        for s in subs:
            mask[lo + s] = True
    if _chord_legal(state):
        lo, hi = vocab.category_slice(EventKind.CHORD)
        mask[lo + 1 : hi] = True  # skip Chord_None: canonical encodes omit it
    if _tempo_legal(state):
        lo, hi = vocab.category_slice(EventKind.TEMPO)
        mask[lo:hi] = True
        if state.tempo_bin >= 0:
            mask[lo + state.tempo_bin] = False  # only emitted when it changes
    if _note_start_legal(state):
        if state.rep.is_functional:
            lo, _ = vocab.category_slice(EventKind.OCTAVE)
            for octave in _legal_octaves(state, for_mask=True):
                mask[lo + octave] = True
        else:
            lo, _ = vocab.category_slice(EventKind.PITCH)
            p_lo, p_hi = _pitch_bounds(state, for_mask=True)
            if p_hi >= p_lo:
                mask[lo + (p_lo - MIDI_MIN) : lo + (p_hi - MIDI_MIN) + 1] = True
    if _bar_legal(state):
        mask[vocab.category_slice(EventKind.BAR)[0]] = True
    for value in _track_values(state):
        lo, _ = vocab.category_slice(EventKind.TRACK)
        mask[lo + (0 if value == "M" else 1)] = True
    if _eos_legal(state):
        mask[vocab.category_slice(EventKind.EOS)[0]] = True
    return mask


# ---------------------------------------------------------------------------
# Transition
# ---------------------------------------------------------------------------


def _illegal(state: GrammarState, event: Event) -> GrammarError:
    expected = ", ".join(sorted(k.value for k in follow_kinds(state))) or "nothing"
    return GrammarError(
        f"unexpected {event_to_str(event)}; expected one of: {expected}"
    )


def _start_bar_segment(state: GrammarState) -> None:
    state.in_bar = True
    state.sub_beat = -1
    state.group_pos = "none"
    state.chord_done = False
    state.last_midi = _NO_NOTE


def feed(state: GrammarState, event: Event) -> None:
    """Advance the state by one event, or raise GrammarError."""
    kind = event.kind

    if state.phase == "emotion":
        if kind is not EventKind.EMOTION or event.value not in _emotions(state):
            raise _illegal(state, event)
        state.phase = "key" if state.rep.has_key else "body"
        return
    if state.phase == "key":
        if kind is not EventKind.KEY:
            raise _illegal(state, event)
        state.key = event.value
        state.phase = "body"
        return
    if state.phase != "body":
        raise _illegal(state, event)

    if state.pending == "degree":
        if kind is not EventKind.DEGREE:
            raise _illegal(state, event)
        index = DEGREE_INDEX[event.value]
        if index not in _legal_degree_indices(state, for_mask=False):
            raise _illegal(state, event)
        state.pend_midi = _degree_midis(state.key)[state.pend_octave][index]
        state.pending = "duration"
        return
    if state.pending == "duration":
        if kind is not EventKind.DURATION or not 1 <= event.value <= MAX_DURATION:
            raise _illegal(state, event)
        if state.in_x_bar:
            state.pending = "velocity"
        else:
            state.melody_busy = _melody_tick(state, state.sub_beat) + event.value
            state.pending = None
            state.group_pos = "none"
        return
    if state.pending == "velocity":
        if kind is not EventKind.VELOCITY:
            raise _illegal(state, event)
        state.pending = None
        state.group_pos = "open_x"
        state.last_midi = state.pend_midi
        return

    if kind is EventKind.SUB_BEAT:
        if event.value not in _legal_sub_beats(state):
            raise _illegal(state, event)
        state.sub_beat = event.value
        state.group_pos = "need_item"
        state.last_midi = _NO_NOTE
        return
    if kind is EventKind.CHORD:
        if not _chord_legal(state):
            raise _illegal(state, event)
        if (
            event.value is not None
            and event.value.is_functional != state.rep.is_functional
        ):
            raise _illegal(state, event)
        # Chord_None is accepted (and ignored by decoding) for robustness,
        # though canonical encodings never emit it.
        state.chord_done = True
        state.group_pos = "after_chord"
        return
    if kind is EventKind.TEMPO:
        if not _tempo_legal(state):
            raise _illegal(state, event)
        state.tempo_bin = event.value
        state.group_pos = "open_x"
        return
    if kind is EventKind.OCTAVE:
        if not state.rep.is_functional or not _note_start_legal(state):
            raise _illegal(state, event)
        if event.value not in _legal_octaves(state, for_mask=False):
            raise _illegal(state, event)
        state.pend_octave = event.value
        state.pending = "degree"
        return
    if kind is EventKind.PITCH:
        if state.rep.is_functional or not _note_start_legal(state):
            raise _illegal(state, event)
        lo, hi = _pitch_bounds(state, for_mask=False)
        if not lo <= event.value <= hi:
            raise _illegal(state, event)
        state.pend_midi = event.value
        state.pending = "duration"
        return
    if kind is EventKind.BAR:
        if not _bar_legal(state):
            raise _illegal(state, event)
        if state.layout is Layout.LEAD_SHEET:
            state.bar += 1
        state.awaiting_bar = False
        _start_bar_segment(state)
        return
    if kind is EventKind.TRACK:
        if event.value not in _track_values(state):
            raise _illegal(state, event)
        state.track = event.value
        if event.value == "M":
            state.bar += 1
        state.awaiting_bar = True
        state.in_bar = False
        return
    if kind is EventKind.EOS:
        if not _eos_legal(state):
            raise _illegal(state, event)
        state.phase = "done"
        return
    raise _illegal(state, event)
