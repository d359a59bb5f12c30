"""Seeded, counter-based random streams.

All randomness goes through :class:`numpy.random.Philox` generators so that a
stream is fully described by a seed (plus optional spawn keys) and its state
can be serialized to JSON and restored for exact resumption.
"""

from __future__ import annotations

import numpy as np

__all__ = ["as_generator", "philox", "substream", "draw_seed", "get_state", "set_state"]


def philox(seed: int, *keys: int) -> np.random.Generator:
    """Return a Philox generator for ``seed`` and an optional spawn path."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for a (seed, key...) coordinate, e.g. one bundle."""
    return philox(seed, *keys)


def as_generator(rng) -> np.random.Generator:
    """Coerce ``None``, an integer seed or a Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.Generator(np.random.Philox())
    if isinstance(rng, (int, np.integer)):
        return philox(int(rng))
    raise TypeError(f"cannot build a random stream from {type(rng).__name__}")


def draw_seed(rng) -> int:
    """Derive a 63-bit seed from ``rng``; integers pass through unchanged."""
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(as_generator(rng).integers(0, 2**63 - 1))


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [int(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, np.integer):
        return int(value)
    return value


def get_state(rng: np.random.Generator) -> dict:
    """JSON-serializable snapshot of a Philox generator's state."""
    return _jsonable(rng.bit_generator.state)


def set_state(state: dict) -> np.random.Generator:
    """Rebuild a generator from :func:`get_state` output."""
    if state.get("bit_generator") != "Philox":
        raise ValueError(f"unsupported bit generator {state.get('bit_generator')!r}")
    restored = dict(state)
    restored["state"] = {
        "counter": np.asarray(state["state"]["counter"], dtype=np.uint64),
        "key": np.asarray(state["state"]["key"], dtype=np.uint64),
    }
    restored["buffer"] = np.asarray(state["buffer"], dtype=np.uint64)
    bitgen = np.random.Philox()
    bitgen.state = restored
    return np.random.Generator(bitgen)
