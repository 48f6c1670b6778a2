"""Two-stage emotion-conditioned generation.

Stage 1 samples a lead sheet: the Emotion event is fixed by the request,
the Key event is sampled under the valence gate (major keys for Positive,
minor keys for Negative) and everything after that is autoregressive
nucleus sampling, grammar-masked by default so every output decodes.

Stage 2 takes a finished lead sheet and builds the interleaved
performance sequence bar by bar: each Track_M segment is copied verbatim
from the lead sheet, then the Track_X segment is sampled until the model
closes the bar.  Only bars up to the current one are ever in the context.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import RequestError
from .events import (
    BAR,
    EOS,
    TRACK_M,
    TRACK_X,
    Event,
    EventKind,
    Layout,
    Mode,
    Repr,
    TokenSequence,
    emotion_event,
)
from .grammar import GrammarState, feed, initial_state, legal_mask
from .ngram import SequenceModel
from .sampling import SamplerConfig, make_rng, sample_next

DEFAULT_STAGE1 = SamplerConfig(temperature=1.2, top_p=0.97)
DEFAULT_STAGE2 = SamplerConfig(temperature=1.1, top_p=0.99)

QUADRANTS_BY_VALENCE = {
    "Positive": ("Q1", "Q4"),
    "Negative": ("Q2", "Q3"),
}
VALENCE_BY_QUADRANT = {
    q: v for v, qs in QUADRANTS_BY_VALENCE.items() for q in qs
}

# Events that only finish open structure (used to wind a sequence down
# once a length cap is hit): they never start a new group or bar pair.
_CLOSING_KINDS = frozenset(
    {
        EventKind.DEGREE,
        EventKind.DURATION,
        EventKind.VELOCITY,
        EventKind.BAR,
        EventKind.EOS,
    }
)


@dataclass(frozen=True)
class GenerationRequest:
    """Validated bundle of conditions for a full two-stage run."""

    valence: str
    quadrant: str
    max_bars: int = 8
    stage1: SamplerConfig = field(default_factory=lambda: DEFAULT_STAGE1)
    stage2: SamplerConfig = field(default_factory=lambda: DEFAULT_STAGE2)

    def __post_init__(self):
        if self.valence not in QUADRANTS_BY_VALENCE:
            raise RequestError(f"valence must be Positive or Negative, got {self.valence!r}")
        if self.quadrant not in VALENCE_BY_QUADRANT:
            raise RequestError(f"quadrant must be Q1..Q4, got {self.quadrant!r}")
        if VALENCE_BY_QUADRANT[self.quadrant] != self.valence:
            raise RequestError(
                f"{self.quadrant} is a {VALENCE_BY_QUADRANT[self.quadrant]} quadrant, "
                f"inconsistent with valence {self.valence}"
            )
        if self.max_bars < 1:
            raise RequestError("max_bars must be >= 1")


def _key_gate_mask(vocab, valence: str) -> np.ndarray:
    """Mask allowing only the 12 keys whose mode matches the valence."""
    mask = np.zeros(len(vocab), dtype=bool)
    lo, hi = vocab.category_slice(EventKind.KEY)
    if hi == lo:
        return mask
    half = (hi - lo) // 2  # majors first, then minors
    if valence == "Positive":
        mask[lo : lo + half] = True
    else:
        mask[lo + half : hi] = True
    return mask


def _mask_kinds(mask: np.ndarray, vocab, kinds: frozenset) -> np.ndarray:
    out = np.zeros_like(mask)
    for kind in kinds:
        lo, hi = vocab.category_slice(kind)
        out[lo:hi] = mask[lo:hi]
    return out


def _close_sequence(model, state, events, ids, cfg, rng) -> None:
    """Finish open structure and reach EOS using only closing events."""
    vocab = model.vocab
    for _ in range(64):
        mask = legal_mask(state, vocab)
        eos_id = vocab.category_slice(EventKind.EOS)[0]
        if mask[eos_id]:
            chosen = eos_id
        else:
            closing = _mask_kinds(mask, vocab, _CLOSING_KINDS)
            if not closing.any():
                # only non-closing moves remain (e.g. Track_X still pending)
                track_lo, track_hi = vocab.category_slice(EventKind.TRACK)
                closing = mask.copy()
                closing[: track_lo] = False
                closing[track_hi:] = False
                if not closing.any():
                    closing = mask
            chosen = sample_next(model.next_distribution(ids), cfg, closing, rng)
        event = vocab.event_of(chosen)
        feed(state, event)
        events.append(event)
        ids.append(chosen)
        if event.kind is EventKind.EOS:
            return
    raise AssertionError("closure did not reach EOS; grammar bug")


def generate_lead_sheet(
    model: SequenceModel,
    valence: str,
    cfg: SamplerConfig = DEFAULT_STAGE1,
    max_bars: int = 8,
    max_events: int = 1024,
    key_gate: bool = True,
) -> TokenSequence:
    """Sample one stage-1 sequence conditioned on a valence label."""
    vocab = model.vocab
    if vocab.layout is not Layout.LEAD_SHEET:
        raise RequestError("stage-1 model must use the lead-sheet layout")
    if valence not in QUADRANTS_BY_VALENCE:
        raise RequestError(f"valence must be Positive or Negative, got {valence!r}")

    rng = make_rng(cfg)
    state = initial_state(vocab.repr, vocab.layout)
    first = emotion_event(valence)
    feed(state, first)
    events: list[Event] = [first]
    ids: list[int] = [vocab.id_of_event(first)]
    truncated = False

    while True:
        mask = legal_mask(state, vocab)
        if state.phase == "key" and key_gate:
            mask &= _key_gate_mask(vocab, valence)
        if state.bars_done >= max_bars:
            lo, hi = vocab.category_slice(EventKind.BAR)
            mask[lo:hi] = False
        dist = model.next_distribution(ids)
        legal = mask if (cfg.grammar_mask or state.phase == "key") else None
        token_id = sample_next(dist, cfg, legal, rng)
        event = vocab.event_of(token_id)
        if cfg.grammar_mask:
            feed(state, event)
        else:
            try:
                feed(state, event)
            except Exception:
                state.phase = "free"  # unmasked ablation: stop tracking
        events.append(event)
        ids.append(token_id)
        if event.kind is EventKind.EOS:
            break
        if len(events) >= max_events:
            truncated = True
            if cfg.grammar_mask:
                _close_sequence(model, state, events, ids, cfg, rng)
            else:
                events.append(EOS)
            break

    return TokenSequence(events, vocab.layout, vocab.repr, truncated=truncated)


def _lead_prefix_and_bars(lead: TokenSequence) -> tuple[list[Event], list[list[Event]]]:
    """Split a lead-sheet sequence into its prefix and per-bar event runs."""
    prefix: list[Event] = []
    bars: list[list[Event]] = []
    for event in lead.events:
        if event.kind is EventKind.EOS:
            break
        if event.kind is EventKind.BAR:
            bars.append([event])
        elif bars:
            bars[-1].append(event)
        else:
            prefix.append(event)
    return prefix, bars


def generate_performance(
    model: SequenceModel,
    lead: TokenSequence,
    quadrant: str,
    cfg: SamplerConfig = DEFAULT_STAGE2,
    max_bar_events: int = 512,
) -> TokenSequence:
    """Sample a stage-2 performance under a finished lead sheet.

    The Emotion prefix becomes the quadrant event, the Key event is copied
    from the lead sheet, and every Track_M segment reproduces the lead
    sheet bar verbatim; only Track_X content is sampled.
    """
    vocab = model.vocab
    if vocab.layout is not Layout.PERFORMANCE:
        raise RequestError("stage-2 model must use the performance layout")
    if lead.layout is not Layout.LEAD_SHEET:
        raise RequestError("stage-2 conditioning needs a lead-sheet sequence")
    if lead.repr is not vocab.repr:
        raise RequestError(
            f"lead sheet is {lead.repr.value}, model is {vocab.repr.value}"
        )
    if quadrant not in VALENCE_BY_QUADRANT:
        raise RequestError(f"quadrant must be Q1..Q4, got {quadrant!r}")
    lead_valences = [e.value for e in lead.events if e.kind is EventKind.EMOTION]
    if not lead_valences:
        raise RequestError("lead sheet has no Emotion event")
    if lead_valences[0] != "None" and VALENCE_BY_QUADRANT[quadrant] != lead_valences[0]:
        raise RequestError(
            f"quadrant {quadrant} is inconsistent with a "
            f"{lead_valences[0]} lead sheet"
        )

    prefix, bars = _lead_prefix_and_bars(lead)
    rng = make_rng(cfg)
    state = initial_state(vocab.repr, vocab.layout)
    events: list[Event] = []
    ids: list[int] = []
    truncated = False

    def push(event: Event) -> None:
        feed(state, event)
        events.append(event)
        ids.append(vocab.id_of_event(event))

    push(emotion_event(quadrant))
    for event in prefix:
        if event.kind is EventKind.KEY:
            push(event)

    boundary_kinds = (EventKind.TRACK, EventKind.EOS)
    for bar_events in bars:
        push(TRACK_M)
        for event in bar_events:
            push(event)
        push(TRACK_X)
        push(BAR)
        bar_budget = max_bar_events
        while True:
            mask = legal_mask(state, vocab)
            if bar_budget <= 0:
                closing = _mask_kinds(mask, vocab, _CLOSING_KINDS - {EventKind.BAR})
                if closing.any():
                    mask = closing
                truncated = True
            dist = model.next_distribution(ids)
            token_id = sample_next(dist, cfg, mask if cfg.grammar_mask else None, rng)
            event = vocab.event_of(token_id)
            if event.kind in boundary_kinds:
                break  # bar finished; structure is forced, not sampled
            push(event)
            bar_budget -= 1
            if bar_budget <= -64:
                raise AssertionError("bar closure did not terminate; grammar bug")
    push(EOS)
    return TokenSequence(events, vocab.layout, vocab.repr, truncated=truncated)
