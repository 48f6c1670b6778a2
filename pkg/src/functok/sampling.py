"""Nucleus (top-p) sampling with temperature and id masking."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplerConfig:
    temperature: float = 1.0
    top_p: float = 1.0
    seed: int = 0
    grammar_mask: bool = True

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")


def make_rng(cfg: SamplerConfig) -> np.random.Generator:
    return np.random.default_rng(cfg.seed)


def nucleus_mask(probs: np.ndarray, top_p: float) -> np.ndarray:
    """Boolean mask of the smallest descending-probability prefix with
    cumulative mass >= top_p.  Ties break by ascending id (stable sort),
    and the nucleus for p1 <= p2 is a subset of the nucleus for p2."""
    order = np.argsort(-probs, kind="stable")
    cumulative = np.cumsum(probs[order])
    cut = int(np.searchsorted(cumulative, top_p, side="left"))
    keep = np.zeros(len(probs), dtype=bool)
    keep[order[: cut + 1]] = True
    keep &= probs > 0
    return keep


def effective_distribution(
    dist: np.ndarray,
    cfg: SamplerConfig,
    legal: np.ndarray | set | None = None,
) -> np.ndarray:
    """The distribution sample_next draws from: mask, temperature, top-p.

    Falls back to uniform over the legal set (with a log message) when the
    mask removes all probability mass.
    """
    p = np.asarray(dist, dtype=float).copy()
    legal_mask = None
    if legal is not None:
        if isinstance(legal, (set, frozenset, list, tuple)):
            legal_mask = np.zeros(len(p), dtype=bool)
            legal_mask[list(legal)] = True
        else:
            legal_mask = np.asarray(legal, dtype=bool)
        if not legal_mask.any():
            raise ValueError("legal set is empty")
        p[~legal_mask] = 0.0

    total = p.sum()
    if total <= 0 or not np.isfinite(total):
        if legal_mask is None:
            legal_mask = np.ones(len(p), dtype=bool)
        logger.info("no probability mass on legal ids; falling back to uniform")
        p = legal_mask / legal_mask.sum()
        total = 1.0
    p /= total

    if cfg.temperature != 1.0:
        # temperature on log-probabilities == p ** (1/tau) renormalized
        p = p ** (1.0 / cfg.temperature)
        p /= p.sum()

    if cfg.top_p < 1.0:
        keep = nucleus_mask(p, cfg.top_p)
        p[~keep] = 0.0
        p /= p.sum()
    return p


def sample_next(
    dist: np.ndarray,
    cfg: SamplerConfig,
    legal: np.ndarray | set | None = None,
    rng: np.random.Generator | None = None,
) -> int:
    """Draw one token id.  Pass the generation's rng for evolving draws;
    without one, a fresh generator is seeded from cfg.seed."""
    if rng is None:
        rng = make_rng(cfg)
    p = effective_distribution(dist, cfg, legal)
    cumulative = np.cumsum(p)
    return int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
