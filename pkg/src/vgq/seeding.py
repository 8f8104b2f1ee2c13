"""Deterministic named random substreams so pipeline stages can be re-run
independently from one top-level seed."""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, *names) -> np.random.Generator:
    """Generator for a named branch of the top-level seed.

    The branch identity is the sequence of names (strings or ints), hashed so
    that streams are independent of iteration order elsewhere.
    """
    tag = "/".join(str(n) for n in names)
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    words = np.frombuffer(digest[:16], dtype=np.uint32)
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + words.tolist()))
