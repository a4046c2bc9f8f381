"""Seed plumbing.

All randomness descends from a single 64-bit seed. Child streams are keyed
by integer tuples through ``SeedSequence.spawn_key`` and drive a Philox
(counter-based) generator, so a child's stream depends only on its key and
never on how many siblings were drawn before it.
"""

from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def _keys(keys) -> tuple[int, ...]:
    out = []
    for k in keys:
        if isinstance(k, str):
            # stable across processes, unlike hash()
            out.append(int.from_bytes(k.encode("utf-8")[:8].ljust(8, b"\0"), "little"))
        else:
            out.append(int(k))
    return tuple(out)


def make_rng(seed: int, *keys) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=_keys(keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys) -> int:
    """Deterministic 64-bit child seed for ``keys``."""
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=_keys(keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)
