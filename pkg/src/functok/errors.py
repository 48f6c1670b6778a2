"""Exception hierarchy shared across the package."""


class FunctokError(Exception):
    """Base class for all errors raised by functok."""


class PitchRangeError(FunctokError):
    """A pitch falls outside the representable range."""


class MidiParseError(FunctokError):
    """Malformed Standard MIDI File data."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedMeterError(FunctokError):
    """Time signature other than 4/4."""


class EmptyTrackError(FunctokError):
    """An operation that needs notes received a track without any."""


class GrammarError(FunctokError):
    """An event is not allowed in the current sequence position."""


class DecodeError(FunctokError):
    """A token sequence violates the sequence grammar."""


class VocabularyError(FunctokError):
    """A token is not part of the active vocabulary."""


class CorpusError(FunctokError):
    """A training corpus mixes incompatible sequences."""


class AlignmentError(FunctokError):
    """Lead sheet and performance disagree on bar counts."""


class RequestError(FunctokError):
    """A generation request combines inconsistent conditions."""


class BridgeError(FunctokError):
    """The external-model bridge peer misbehaved."""
