"""Lead-sheet analysis: key detection, skyline melody, template chords.

Key detection correlates a duration-weighted pitch-class profile against
the Krumhansl-Kessler major/minor probe-tone profiles rotated to every
tonic and picks the best of the 24 keys.  Melody extraction keeps the
highest note starting at each onset and truncates it at the next melody
onset.  Chord recognition scores every (root, quality) template per
4-beat window with a transparent additive scorer whose weights all live in
ChordConfig.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyTrackError
from .midi_io import TICKS_PER_BAR, Note, QuantizedTrack
from .theory import ALL_KEYS, CHORD_QUALITIES, PC_NAMES, ChordQuality, ChordSymbol, Key

# Krumhansl-Kessler probe-tone profiles, C-rooted.
KK_MAJOR = np.array(
    [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88]
)
KK_MINOR = np.array(
    [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17]
)

CHORD_TEMPLATES: dict[ChordQuality, tuple[int, ...]] = {
    ChordQuality.MAJOR: (0, 4, 7),
    ChordQuality.MINOR: (0, 3, 7),
    ChordQuality.AUGMENT: (0, 4, 8),
    ChordQuality.DIMINISH: (0, 3, 6),
    ChordQuality.SUSPEND2: (0, 2, 7),
    ChordQuality.SUSPEND4: (0, 5, 7),
    ChordQuality.MAJOR7: (0, 4, 7, 11),
    ChordQuality.MINOR7: (0, 3, 7, 10),
    ChordQuality.DOMINANT7: (0, 4, 7, 10),
    ChordQuality.DIMINISH7: (0, 3, 6, 9),
    ChordQuality.HALF_DIMINISH7: (0, 3, 6, 10),
}


@dataclass(frozen=True)
class LeadSheet:
    """Monophonic melody plus one chord decision per bar, in a key."""

    key: Key | None
    melody: tuple[Note, ...]
    chords: tuple[tuple[int, ChordSymbol | None], ...]
    bars: int

    def __post_init__(self):
        busy = -1
        for note in self.melody:
            if note.onset < busy:
                raise ValueError("melody is not monophonic")
            busy = note.end
        expected = tuple(i * TICKS_PER_BAR for i in range(self.bars))
        if tuple(t for t, _ in self.chords) != expected:
            raise ValueError("chords must cover every 4-beat window in order")


def pitch_class_profile(notes) -> np.ndarray:
    """Duration-weighted pitch-class histogram (12 non-negative weights)."""
    weights = np.zeros(12)
    for note in notes:
        weights[note.pitch % 12] += note.duration
    return weights


def _correlations(profile: np.ndarray) -> np.ndarray:
    """Pearson correlation of ``profile`` with all 24 rotated KK profiles.

    Returns a (24,) array ordered like ALL_KEYS (majors 0..11, minors
    0..11).  Degenerate (constant) inputs correlate as -inf.
    """
    templates = np.stack(
        [np.roll(KK_MAJOR, t) for t in range(12)]
        + [np.roll(KK_MINOR, t) for t in range(12)]
    )
    x = profile - profile.mean()
    xn = np.sqrt((x * x).sum())
    t = templates - templates.mean(axis=1, keepdims=True)
    tn = np.sqrt((t * t).sum(axis=1))
    if xn == 0:
        return np.full(24, -np.inf)
    return (t @ x) / (tn * xn)


def detect_key(track: QuantizedTrack) -> Key:
    """Best-correlating of the 24 keys for a track's pitch-class profile.

    Ties break deterministically: major before minor, then lowest tonic.
    """
    if not track.notes:
        raise EmptyTrackError("cannot detect a key without notes")
    corr = _correlations(pitch_class_profile(track.notes))
    best = 0
    for i in range(1, 24):
        if corr[i] > corr[best]:
            best = i
    return ALL_KEYS[best]


def extract_melody_skyline(track: QuantizedTrack) -> tuple[Note, ...]:
    """Keep the highest note starting at each onset; truncate at the next.

    The result is monophonic and every kept pitch equals the maximum pitch
    among notes sharing its onset.  Monophonic input comes back unchanged.
    """
    by_onset: dict[int, Note] = {}
    for note in track.notes:  # sorted (onset, pitch desc): first wins
        if note.onset not in by_onset:
            by_onset[note.onset] = note
    onsets = sorted(by_onset)
    melody = []
    for i, onset in enumerate(onsets):
        note = by_onset[onset]
        if i + 1 < len(onsets):
            note = Note(
                note.pitch,
                note.onset,
                min(note.duration, onsets[i + 1] - onset),
                note.velocity,
            )
        melody.append(note)
    return tuple(melody)


@dataclass(frozen=True)
class ChordConfig:
    """Weights of the additive chord-template scorer.

    score = tone_weight * (chord-tone mass fraction)
          - non_chord_weight * (non-chord-tone mass fraction)
          + root_weight * (root mass fraction)
          + bass_bonus  * [lowest window pitch is the root]
          - missing_weight * (fraction of template tones absent)
    and a candidate needs at least min_distinct_tones of its template
    present at all.  The best candidate is emitted when score > threshold.
    """

    tone_weight: float = 1.0
    non_chord_weight: float = 0.6
    root_weight: float = 0.3
    bass_bonus: float = 0.2
    missing_weight: float = 0.5
    min_distinct_tones: int = 2
    threshold: float = 0.7


DEFAULT_CHORD_CONFIG = ChordConfig()


def score_chord_candidates(
    weights: np.ndarray, bass_pc: int | None, config: ChordConfig = DEFAULT_CHORD_CONFIG
) -> list[tuple[float, int, ChordQuality]]:
    """Score all 12 roots x 11 qualities against a pitch-class profile.

    Returns (score, root, quality) tuples in the deterministic preference
    order: higher score, then lower root, then quality declaration order.
    """
    total = weights.sum()
    scored = []
    for root in range(12):
        for quality in CHORD_QUALITIES:
            template = [(root + step) % 12 for step in CHORD_TEMPLATES[quality]]
            tone_mass = sum(weights[pc] for pc in template)
            present = sum(1 for pc in template if weights[pc] > 0)
            if present < config.min_distinct_tones:
                continue
            score = (
                config.tone_weight * tone_mass / total
                - config.non_chord_weight * (total - tone_mass) / total
                + config.root_weight * weights[root] / total
                + (config.bass_bonus if bass_pc == root else 0.0)
                - config.missing_weight * (len(template) - present) / len(template)
            )
            scored.append((score, root, quality))
    scored.sort(key=lambda s: (-s[0], s[1], list(CHORD_QUALITIES).index(s[2])))
    return scored


def recognize_chords(
    track: QuantizedTrack,
    key: Key | None = None,
    config: ChordConfig = DEFAULT_CHORD_CONFIG,
) -> tuple[tuple[int, ChordSymbol | None], ...]:
    """One chord decision per 4-beat window, at ticks 0, 16, 32, ...

    The scorer is key-agnostic; ``key`` is accepted because callers have
    one in hand and downstream conversion needs it, but it does not bias
    the match.
    """
    del key
    decisions = []
    for bar in range(track.bars):
        start = bar * TICKS_PER_BAR
        stop = start + TICKS_PER_BAR
        weights = np.zeros(12)
        bass_pitch = None
        for note in track.notes:
            overlap = min(note.end, stop) - max(note.onset, start)
            if overlap > 0:
                weights[note.pitch % 12] += overlap
                if bass_pitch is None or note.pitch < bass_pitch:
                    bass_pitch = note.pitch
        symbol = None
        if weights.sum() > 0:
            scored = score_chord_candidates(
                weights, None if bass_pitch is None else bass_pitch % 12, config
            )
            if scored and scored[0][0] > config.threshold:
                symbol = ChordSymbol(scored[0][1], scored[0][2])
        decisions.append((start, symbol))
    return tuple(decisions)


def extract_lead_sheet(
    track: QuantizedTrack,
    key_override: Key | None = None,
    config: ChordConfig = DEFAULT_CHORD_CONFIG,
) -> LeadSheet:
    """Compose key detection, skyline melody, and chord recognition."""
    if not track.notes:
        raise EmptyTrackError("cannot build a lead sheet from an empty track")
    key = key_override if key_override is not None else detect_key(track)
    return LeadSheet(
        key=key,
        melody=extract_melody_skyline(track),
        chords=recognize_chords(track, key, config),
        bars=track.bars,
    )


def format_report(label: str, sheet: LeadSheet) -> str:
    """Per-file analysis report: key, melody size, per-window chords."""
    lines = [
        f"file\t{label}",
        f"key\t{sheet.key.name if sheet.key else 'unknown'}",
        f"bars\t{sheet.bars}",
        f"melody_notes\t{len(sheet.melody)}",
    ]
    for tick, symbol in sheet.chords:
        if symbol is None:
            lines.append(f"chord\t{tick}\tNone")
        else:
            root = (
                PC_NAMES[symbol.root]
                if isinstance(symbol.root, int)
                else symbol.root.name
            )
            lines.append(f"chord\t{tick}\t{root}_{symbol.quality.value}")
    return "\n".join(lines) + "\n"
