"""Shared plumbing: seed-stream derivation, float formatting, file hashing."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np


def rng_stream(seed: int, *path: int) -> np.random.Generator:
    """Return an RNG whose stream depends only on (seed, *path).

    Streams for different paths are statistically independent, so callers
    can execute repetitions in any order (or in parallel) and still get
    identical results for a given index.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([seed, *path]))


def derive_seed(seed: int, *path: int) -> int:
    """Collapse (seed, *path) into a single 64-bit sub-seed."""
    ss = np.random.SeedSequence([seed, *path])
    return int(ss.generate_state(1, np.uint64)[0])


def fmt_float(x: float) -> str:
    """Shortest round-trip decimal form; stable across runs and platforms."""
    return repr(float(x))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
