"""Discrete visual-word signatures with planar landmark positions."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Signature:
    """Multiset of word ids plus, per word, a 2D landmark position.

    Landmark coordinates are float32 end-to-end so store round-trips are
    bit-exact. Every word with a landmark appears in words; words may lack a
    landmark.
    """

    words: tuple[int, ...] = ()
    landmarks: dict[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        self.words = tuple(sorted(int(w) for w in self.words))
        word_set = set(self.words)
        clean = {}
        for w, (x, y) in self.landmarks.items():
            if int(w) not in word_set:
                raise ValueError(f"landmark word {w} missing from words")
            clean[int(w)] = (float(np.float32(x)), float(np.float32(y)))
        self.landmarks = clean

    def __len__(self) -> int:
        return len(self.words)

    def word_counts(self) -> Counter:
        return Counter(self.words)


def similarity(a: Signature, b: Signature) -> float:
    """Ratio of corresponding words: |a ∩ b| / max(|a|, |b|), 0 if both empty."""
    if not a.words and not b.words:
        return 0.0
    ca, cb = a.word_counts(), b.word_counts()
    shared = sum(min(ca[w], cb[w]) for w in ca.keys() & cb.keys())
    return shared / max(len(a.words), len(b.words))


def shared_landmark_pairs(a: Signature, b: Signature) -> tuple[np.ndarray, np.ndarray]:
    """Landmark positions of words present in both signatures.

    Returns (pa, pb): (N, 2) float64 arrays in the frames of a and b, ordered
    by word id for determinism.
    """
    common = sorted(set(a.landmarks) & set(b.landmarks))
    pa = np.array([a.landmarks[w] for w in common], dtype=np.float64).reshape(-1, 2)
    pb = np.array([b.landmarks[w] for w in common], dtype=np.float64).reshape(-1, 2)
    return pa, pb
