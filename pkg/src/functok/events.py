"""Token event model, canonical strings, and vocabularies.

One Event is one token.  Canonical string forms (also the token text
format, one per line after a header):

    Emotion_None  Emotion_Positive  Emotion_Negative  Emotion_Q1..Q4
    Key_C_major .. Key_B_major      Key_c_minor .. Key_b_minor
    Bar
    Sub-Beat_0 .. Sub-Beat_15
    Tempo_0 .. Tempo_63              (bin index, 30..210 bpm, uniform)
    Chord_None
    Chord_<root>_<quality>           root: I..VII(#) or C..B(#)
    Octave_0 .. Octave_8
    Degree_I .. Degree_VII(#)        12 values, no III#/VII#
    Pitch_21 .. Pitch_108
    Duration_1 .. Duration_32        (sub-beats)
    Velocity_0 .. Velocity_31        (bin index over MIDI 1..127, uniform)
    Track_M  Track_X
    EOS

Functional sequences spell pitches as Octave+Degree and chord roots as
degrees; REMI-style sequences use absolute Pitch events and pitch-class
chord roots.  The plain REMI scheme has no Key event; "remi+key" inserts
one after Emotion, as the functional scheme always does.

A vocabulary is the deterministic enumeration of every token a
(scheme, layout) pair can use, in the category order above, so token ids
are stable across runs and category ids are contiguous.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

from .errors import VocabularyError
from .theory import (
    CHORD_QUALITIES,
    DEGREE_INDEX,
    DEGREE_ORDER,
    MIDI_MAX,
    MIDI_MIN,
    NAME_TO_PC,
    PC_NAMES,
    QUALITY_INDEX,
    ChordQuality,
    ChordSymbol,
    Degree,
    Key,
    Mode,
)


class EventKind(enum.Enum):
    EMOTION = "Emotion"
    KEY = "Key"
    BAR = "Bar"
    SUB_BEAT = "Sub-Beat"
    TEMPO = "Tempo"
    CHORD = "Chord"
    OCTAVE = "Octave"
    DEGREE = "Degree"
    PITCH = "Pitch"
    DURATION = "Duration"
    VELOCITY = "Velocity"
    TRACK = "Track"
    EOS = "EOS"


class Repr(enum.Enum):
    REMI = "remi"
    FUNCTIONAL = "functional"
    REMI_PLUS_KEY = "remi+key"

    @property
    def has_key(self) -> bool:
        return self is not Repr.REMI

    @property
    def is_functional(self) -> bool:
        return self is Repr.FUNCTIONAL


class Layout(enum.Enum):
    LEAD_SHEET = "lead_sheet"
    PERFORMANCE = "performance"


EMOTIONS_LEAD = ("None", "Positive", "Negative")
EMOTIONS_PERF = ("None", "Q1", "Q2", "Q3", "Q4")
EMOTIONS_ALL = ("None", "Positive", "Negative", "Q1", "Q2", "Q3", "Q4")
HIGH_VALENCE = frozenset({"Positive", "Q1", "Q4"})
LOW_VALENCE = frozenset({"Negative", "Q2", "Q3"})

SUB_BEATS = 16
OCTAVES = 9  # Octave_0 .. Octave_8
MAX_DURATION = 32  # two bars

TEMPO_BINS = 64
TEMPO_LO = 30.0
TEMPO_HI = 210.0
_TEMPO_WIDTH = (TEMPO_HI - TEMPO_LO) / TEMPO_BINS

VELOCITY_BINS = 32
_VELOCITY_WIDTH = 126.0 / VELOCITY_BINS  # MIDI velocities 1..127


def tempo_bin(bpm: float) -> int:
    return min(max(int((bpm - TEMPO_LO) / _TEMPO_WIDTH), 0), TEMPO_BINS - 1)


def tempo_bpm(bin_index: int) -> float:
    """Bin center; exact in binary floating point."""
    return TEMPO_LO + (bin_index + 0.5) * _TEMPO_WIDTH


def velocity_bin(velocity: int) -> int:
    return min(max(int((velocity - 1) / _VELOCITY_WIDTH), 0), VELOCITY_BINS - 1)


def velocity_value(bin_index: int) -> int:
    """Integer bin center; re-binning a center is the identity."""
    return round(1 + (bin_index + 0.5) * _VELOCITY_WIDTH)


@dataclass(frozen=True)
class Event:
    kind: EventKind
    value: object = None

    def __str__(self) -> str:
        return event_to_str(self)


BAR = Event(EventKind.BAR)
EOS = Event(EventKind.EOS)
TRACK_M = Event(EventKind.TRACK, "M")
TRACK_X = Event(EventKind.TRACK, "X")


def emotion_event(label: str) -> Event:
    if label not in EMOTIONS_ALL:
        raise ValueError(f"unknown emotion label {label!r}")
    return Event(EventKind.EMOTION, label)


def key_event(key: Key) -> Event:
    return Event(EventKind.KEY, key)


def sub_beat_event(position: int) -> Event:
    if not 0 <= position < SUB_BEATS:
        raise ValueError(f"sub-beat {position} outside 0..{SUB_BEATS - 1}")
    return Event(EventKind.SUB_BEAT, position)


def tempo_event(bin_index: int) -> Event:
    if not 0 <= bin_index < TEMPO_BINS:
        raise ValueError(f"tempo bin {bin_index} outside 0..{TEMPO_BINS - 1}")
    return Event(EventKind.TEMPO, bin_index)


def chord_event(symbol: ChordSymbol | None) -> Event:
    return Event(EventKind.CHORD, symbol)


def octave_event(octave: int) -> Event:
    if not 0 <= octave < OCTAVES:
        raise ValueError(f"octave {octave} outside 0..{OCTAVES - 1}")
    return Event(EventKind.OCTAVE, octave)


def degree_event(deg: Degree) -> Event:
    if deg not in DEGREE_INDEX:
        raise ValueError(f"degree {deg.name} is not in the 12-token vocabulary")
    return Event(EventKind.DEGREE, deg)


def pitch_event(midi: int) -> Event:
    if not MIDI_MIN <= midi <= MIDI_MAX:
        raise ValueError(f"pitch {midi} outside {MIDI_MIN}..{MIDI_MAX}")
    return Event(EventKind.PITCH, midi)


def duration_event(sub_beats: int) -> Event:
    if not 1 <= sub_beats <= MAX_DURATION:
        raise ValueError(f"duration {sub_beats} outside 1..{MAX_DURATION}")
    return Event(EventKind.DURATION, sub_beats)


def velocity_event(bin_index: int) -> Event:
    if not 0 <= bin_index < VELOCITY_BINS:
        raise ValueError(f"velocity bin {bin_index} outside 0..{VELOCITY_BINS - 1}")
    return Event(EventKind.VELOCITY, bin_index)


def event_to_str(event: Event) -> str:
    kind, value = event.kind, event.value
    if kind in (EventKind.BAR, EventKind.EOS):
        return kind.value
    if kind is EventKind.KEY:
        return f"Key_{value.name}"
    if kind is EventKind.DEGREE:
        return f"Degree_{value.name}"
    if kind is EventKind.CHORD:
        if value is None:
            return "Chord_None"
        root = value.root.name if value.is_functional else PC_NAMES[value.root]
        return f"Chord_{root}_{value.quality.value}"
    return f"{kind.value}_{value}"


def event_from_str(token: str) -> Event:
    if token == "Bar":
        return BAR
    if token == "EOS":
        return EOS
    head, _, rest = token.partition("_")
    try:
        kind = EventKind(head)
    except ValueError:
        raise VocabularyError(f"unknown token {token!r}") from None
    try:
        if kind is EventKind.EMOTION:
            return emotion_event(rest)
        if kind is EventKind.KEY:
            return key_event(Key.from_name(rest))
        if kind is EventKind.TRACK:
            if rest not in ("M", "X"):
                raise ValueError(rest)
            return Event(EventKind.TRACK, rest)
        if kind is EventKind.CHORD:
            if rest == "None":
                return chord_event(None)
            root_name, _, quality_name = rest.partition("_")
            quality = ChordQuality(quality_name)
            root: int | Degree
            if root_name in NAME_TO_PC:
                root = NAME_TO_PC[root_name]
            else:
                root = Degree.from_name(root_name)
            return chord_event(ChordSymbol(root, quality))
        if kind is EventKind.DEGREE:
            return degree_event(Degree.from_name(rest))
        value = int(rest)
        if kind is EventKind.SUB_BEAT:
            return sub_beat_event(value)
        if kind is EventKind.TEMPO:
            return tempo_event(value)
        if kind is EventKind.OCTAVE:
            return octave_event(value)
        if kind is EventKind.PITCH:
            return pitch_event(value)
        if kind is EventKind.DURATION:
            return duration_event(value)
        if kind is EventKind.VELOCITY:
            return velocity_event(value)
    except (ValueError, KeyError):
        raise VocabularyError(f"unknown token {token!r}") from None
    raise VocabularyError(f"unknown token {token!r}")


@dataclass
class TokenSequence:
    """An ordered event list plus the scheme and layout it was encoded in."""

    events: list[Event]
    layout: Layout
    repr: Repr
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def token_strings(self) -> list[str]:
        return [event_to_str(e) for e in self.events]

    def to_text(self) -> str:
        header = f"# repr={self.repr.value} layout={self.layout.value}"
        return "\n".join([header, *self.token_strings()]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TokenSequence":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines or not lines[0].startswith("#"):
            raise VocabularyError("token text must start with a header line")
        fields = dict(
            part.split("=", 1) for part in lines[0].lstrip("# ").split() if "=" in part
        )
        try:
            rep = Repr(fields["repr"])
            layout = Layout(fields["layout"])
        except (KeyError, ValueError):
            raise VocabularyError(f"bad token header {lines[0]!r}") from None
        return cls([event_from_str(t) for t in lines[1:]], layout, rep)


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------


def _enumerate_tokens(rep: Repr, layout: Layout) -> list[tuple[EventKind, Event]]:
    """All events of a scheme/layout, in canonical category order."""
    kinds: list[tuple[EventKind, Event]] = []

    emotions = EMOTIONS_LEAD if layout is Layout.LEAD_SHEET else EMOTIONS_ALL
    kinds += [(EventKind.EMOTION, emotion_event(e)) for e in emotions]
    if rep.has_key:
        kinds += [
            (EventKind.KEY, key_event(Key(pc, mode)))
            for mode in (Mode.MAJOR, Mode.MINOR)
            for pc in range(12)
        ]
    kinds.append((EventKind.BAR, BAR))
    kinds += [(EventKind.SUB_BEAT, sub_beat_event(s)) for s in range(SUB_BEATS)]
    if layout is Layout.PERFORMANCE:
        kinds += [(EventKind.TEMPO, tempo_event(b)) for b in range(TEMPO_BINS)]
    kinds.append((EventKind.CHORD, chord_event(None)))
    roots = DEGREE_ORDER if rep.is_functional else tuple(range(12))
    kinds += [
        (EventKind.CHORD, chord_event(ChordSymbol(root, quality)))
        for root in roots
        for quality in CHORD_QUALITIES
    ]
    if rep.is_functional:
        kinds += [(EventKind.OCTAVE, octave_event(o)) for o in range(OCTAVES)]
        kinds += [(EventKind.DEGREE, degree_event(d)) for d in DEGREE_ORDER]
    else:
        kinds += [
            (EventKind.PITCH, pitch_event(m)) for m in range(MIDI_MIN, MIDI_MAX + 1)
        ]
    kinds += [(EventKind.DURATION, duration_event(d)) for d in range(1, MAX_DURATION + 1)]
    if layout is Layout.PERFORMANCE:
        kinds += [(EventKind.VELOCITY, velocity_event(b)) for b in range(VELOCITY_BINS)]
        kinds += [(EventKind.TRACK, TRACK_M), (EventKind.TRACK, TRACK_X)]
    kinds.append((EventKind.EOS, EOS))
    return kinds


@dataclass
class Vocabulary:
    """Bijective token-string <-> id map with contiguous category blocks."""

    repr: Repr
    layout: Layout
    tokens: list[str] = field(init=False)
    _ids: dict[str, int] = field(init=False, repr=False)
    _bounds: dict[EventKind, tuple[int, int]] = field(init=False, repr=False)

    def __post_init__(self):
        enumerated = _enumerate_tokens(self.repr, self.layout)
        self.tokens = [event_to_str(e) for _, e in enumerated]
        self._ids = {t: i for i, t in enumerate(self.tokens)}
        if len(self._ids) != len(self.tokens):
            raise VocabularyError("vocabulary enumeration is not bijective")
        self._bounds = {}
        for i, (kind, _) in enumerate(enumerated):
            lo, _hi = self._bounds.get(kind, (i, i))
            self._bounds[kind] = (lo, i + 1)

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise VocabularyError(
                f"token {token!r} not in {self.repr.value}/{self.layout.value} vocabulary"
            ) from None

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.tokens):
            raise VocabularyError(f"token id {token_id} out of range")
        return self.tokens[token_id]

    def id_of_event(self, event: Event) -> int:
        return self.id_of(event_to_str(event))

    def event_of(self, token_id: int) -> Event:
        return event_from_str(self.token_of(token_id))

    def encode(self, events) -> list[int]:
        return [self.id_of_event(e) for e in events]

    def decode(self, ids) -> list[Event]:
        return [self.event_of(i) for i in ids]

    def category_slice(self, kind: EventKind) -> tuple[int, int]:
        """(start, stop) ids of a category; (0, 0) if absent."""
        return self._bounds.get(kind, (0, 0))

    def category_counts(self) -> dict[str, int]:
        counts = {}
        for kind in EventKind:
            lo, hi = self.category_slice(kind)
            if hi > lo:
                counts[kind.value] = hi - lo
        return counts

    def serialize(self) -> str:
        lines = [f"{token}\t{i}" for i, token in enumerate(self.tokens)]
        return "\n".join(lines) + "\n"

    def sha(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:16]
