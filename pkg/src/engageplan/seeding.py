"""Named random sub-streams derived from one root seed.

Each consumer asks for ``substream(root, "sim", "calls")`` and gets a
generator whose state depends only on the root seed and the names, so adding
a new consumer never shifts the draws seen by existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str | int) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name)
    digest = hashlib.sha256(str(name).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def seed_sequence(root: int, *names: str | int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(root), spawn_key=tuple(_name_key(n) for n in names))


def substream(root: int, *names: str | int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(root, *names))


def child_seed(root: int, *names: str | int) -> int:
    """A plain 63-bit integer seed for APIs that want an int."""
    return int(seed_sequence(root, *names).generate_state(2, np.uint64)[0] >> np.uint64(1))
