"""Reproducible random streams.

All randomness in the package flows through `stream`, which derives an
independent counter-based Philox generator from a 64-bit master seed and a
named path such as ``("item", 3, "omega")`` or ``("epoch", 12, "shuffle")``.
Any component of an experiment can therefore be re-drawn in isolation, and
concurrent consumers of disjoint streams are reproducible regardless of
execution order.

String path elements are hashed with SHA-256 (Python's builtin ``hash`` is
salted per process and must not be used here).
"""

import hashlib

import numpy as np


def _path_entropy(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream path elements must be int or str, got {type(part)!r}")


def stream(master_seed: int, *path) -> np.random.Generator:
    """Derive a named substream of the master seed.

    Parameters
    ----------
    master_seed : int
        64-bit master seed of the experiment.
    *path : int or str
        Substream name, e.g. ``stream(seed, "item", 3, "noise")``.

    Returns
    -------
    numpy.random.Generator backed by the counter-based Philox bit generator.
    """
    key = (int(master_seed) & 0xFFFFFFFFFFFFFFFF,) + tuple(_path_entropy(p) for p in path)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
