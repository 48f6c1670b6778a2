"""Music-theory core: pitch classes, keys, scale degrees, chord symbols.

All pitch arithmetic is pitch-class based; enharmonic spelling is not
tracked (D# and Eb are the same value, exactly as in MIDI).  Conversions
between letter pitches and Roman-numeral degrees are key-relative and
bidirectional:

* an in-scale pitch class maps to the plain numeral of its scale step;
* an out-of-scale pitch class maps to the sharped numeral one scale step
  below, except III# and VII#, which are kept out of the vocabulary: in
  minor keys (the only place they arise with the natural-minor scale) they
  are reassigned to one of their two plain-numeral neighbours
  (III# -> III or IV, VII# -> VII or I) by a caller-supplied random
  source.

The reassignment makes minor-key decoding inexact by at most one semitone
for those two pitch classes; every other conversion round-trips exactly.
The 12-entry degree vocabulary is therefore
I, I#, II, II#, III, IV, IV#, V, V#, VI, VI#, VII.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Protocol

from .errors import PitchRangeError

PC_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
NAME_TO_PC = {name: pc for pc, name in enumerate(PC_NAMES)}

MIDI_MIN = 21  # A0
MIDI_MAX = 108  # C8

# A minor-key reassignment at the range edges can decode one semitone
# outside [MIDI_MIN, MIDI_MAX]; decoding accepts that band, encoding never
# produces pitches outside it as input.
DECODE_MIDI_MIN = MIDI_MIN - 1
DECODE_MIDI_MAX = MIDI_MAX + 1

MAJOR_SCALE = (0, 2, 4, 5, 7, 9, 11)
MINOR_SCALE = (0, 2, 3, 5, 7, 8, 10)  # natural minor

NUMERAL_NAMES = ("I", "II", "III", "IV", "V", "VI", "VII")


class Mode(enum.Enum):
    MAJOR = "major"
    MINOR = "minor"


class RandomSource(Protocol):
    """Anything with random() -> float in [0, 1); random.Random works."""

    def random(self) -> float: ...


@dataclass(frozen=True)
class Key:
    """Tonic pitch class plus mode; 24 distinct values."""

    tonic: int
    mode: Mode

    def __post_init__(self):
        if not 0 <= self.tonic <= 11:
            raise ValueError(f"tonic {self.tonic} outside 0..11")

    @property
    def scale(self) -> tuple[int, ...]:
        return MAJOR_SCALE if self.mode is Mode.MAJOR else MINOR_SCALE

    @property
    def name(self) -> str:
        tonic = PC_NAMES[self.tonic]
        if self.mode is Mode.MINOR:
            tonic = tonic.lower()
        return f"{tonic}_{self.mode.value}"

    @classmethod
    def from_name(cls, name: str) -> "Key":
        tonic_name, _, mode_name = name.partition("_")
        mode = Mode(mode_name)
        pc = NAME_TO_PC.get(tonic_name.upper() if len(tonic_name) == 1 else
                            tonic_name[0].upper() + tonic_name[1:])
        if pc is None:
            raise ValueError(f"unknown tonic {tonic_name!r}")
        return cls(pc, mode)

    def transpose(self, semitones: int) -> "Key":
        return Key((self.tonic + semitones) % 12, self.mode)


ALL_KEYS = tuple(
    Key(pc, mode) for mode in (Mode.MAJOR, Mode.MINOR) for pc in range(12)
)


@dataclass(frozen=True)
class Degree:
    """Roman-numeral scale step, optionally sharped. numeral 0..6 = I..VII."""

    numeral: int
    sharp: bool = False

    def __post_init__(self):
        if not 0 <= self.numeral <= 6:
            raise ValueError(f"numeral {self.numeral} outside 0..6")

    @property
    def name(self) -> str:
        return NUMERAL_NAMES[self.numeral] + ("#" if self.sharp else "")

    @classmethod
    def from_name(cls, name: str) -> "Degree":
        sharp = name.endswith("#")
        base = name[:-1] if sharp else name
        try:
            return cls(NUMERAL_NAMES.index(base), sharp)
        except ValueError:
            raise ValueError(f"unknown numeral {name!r}") from None


# The 12 degrees that encoding can emit (III# and VII# excluded).
DEGREE_ORDER = tuple(
    Degree(numeral, sharp)
    for numeral in range(7)
    for sharp in (False, True)
    if not (sharp and numeral in (2, 6))
)
DEGREE_INDEX = {deg: i for i, deg in enumerate(DEGREE_ORDER)}


class ChordQuality(enum.Enum):
    MAJOR = "major"
    MINOR = "minor"
    AUGMENT = "augment"
    DIMINISH = "diminish"
    SUSPEND2 = "suspend2"
    SUSPEND4 = "suspend4"
    MAJOR7 = "major7"
    MINOR7 = "minor7"
    DOMINANT7 = "dominant7"
    DIMINISH7 = "diminish7"
    HALF_DIMINISH7 = "half-diminish7"


CHORD_QUALITIES = tuple(ChordQuality)
QUALITY_INDEX = {q: i for i, q in enumerate(CHORD_QUALITIES)}


@dataclass(frozen=True)
class ChordSymbol:
    """Chord root (absolute pitch class or key-relative Degree) + quality."""

    root: "int | Degree"
    quality: ChordQuality

    def __post_init__(self):
        if isinstance(self.root, int) and not 0 <= self.root <= 11:
            raise ValueError(f"root pitch class {self.root} outside 0..11")

    @property
    def is_functional(self) -> bool:
        return isinstance(self.root, Degree)


# ---------------------------------------------------------------------------
# Degree conversions
# ---------------------------------------------------------------------------

_SCALE_STEP = {
    Mode.MAJOR: {off: i for i, off in enumerate(MAJOR_SCALE)},
    Mode.MINOR: {off: i for i, off in enumerate(MINOR_SCALE)},
}


def pc_to_degree(pc: int, key: Key, rng: RandomSource) -> Degree:
    """Map a pitch class to its key-relative degree.

    Deterministic for every pitch class except the two minor-key classes
    that would be III# or VII#; those pick one of their neighbours with
    probability 1/2 each from ``rng``.
    """
    rel = (pc - key.tonic) % 12
    steps = _SCALE_STEP[key.mode]
    step = steps.get(rel)
    if step is not None:
        return Degree(step)
    step = steps[(rel - 1) % 12]  # one below is always in scale
    if key.mode is Mode.MINOR and step == 2:  # III# -> III or IV
        return Degree(2) if rng.random() < 0.5 else Degree(3)
    if key.mode is Mode.MINOR and step == 6:  # VII# -> VII or I
        return Degree(6) if rng.random() < 0.5 else Degree(0)
    return Degree(step, sharp=True)


def degree_to_pc(deg: Degree, key: Key) -> int:
    """Inverse of pc_to_degree; total over all (degree, key) pairs."""
    return (key.tonic + key.scale[deg.numeral] + (1 if deg.sharp else 0)) % 12


def pitch_to_octave_degree(
    midi: int, key: Key, rng: RandomSource
) -> tuple[int, Degree]:
    """Split a MIDI pitch into (octave, degree) relative to ``key``.

    The octave is chosen so that the decoded pitch is as close as possible
    to ``midi``; ties break toward the lower octave.  When the degree
    conversion is exact this is the scientific-notation octave (C4 = 60).
    """
    if not MIDI_MIN <= midi <= MIDI_MAX:
        raise PitchRangeError(f"pitch {midi} outside {MIDI_MIN}..{MIDI_MAX}")
    deg = pc_to_degree(midi % 12, key, rng)
    pc = degree_to_pc(deg, key)
    below = midi - ((midi - pc) % 12)  # nearest representative at or below
    above = below + 12
    decoded = below if (midi - below) <= (above - midi) else above
    return decoded // 12 - 1, deg


def octave_degree_to_pitch(octave: int, deg: Degree, key: Key) -> int:
    """Decode (octave, degree) to a MIDI pitch, scientific notation (C4=60).

    Accepts results in [DECODE_MIDI_MIN, DECODE_MIDI_MAX]: minor-key
    reassignment of an edge pitch can land one semitone outside the
    A0..C8 input range.
    """
    midi = 12 * (octave + 1) + degree_to_pc(deg, key)
    if not DECODE_MIDI_MIN <= midi <= DECODE_MIDI_MAX:
        raise PitchRangeError(
            f"octave {octave} + degree {deg.name} decodes to {midi}, "
            f"outside {DECODE_MIDI_MIN}..{DECODE_MIDI_MAX}"
        )
    return midi


def chord_to_functional(sym: ChordSymbol, key: Key, rng: RandomSource) -> ChordSymbol:
    """Replace an absolute chord root with its key-relative degree."""
    if sym.is_functional:
        return sym
    return ChordSymbol(pc_to_degree(sym.root, key, rng), sym.quality)


def chord_to_absolute(sym: ChordSymbol, key: Key) -> ChordSymbol:
    """Resolve a functional chord root back to an absolute pitch class."""
    if not sym.is_functional:
        return sym
    return ChordSymbol(degree_to_pc(sym.root, key), sym.quality)
