"""Deterministic seed derivation for named RNG sub-streams.

All randomness in the generation pipeline flows from a single top-level
seed through named sub-streams (scene, branch, shift, noise, ...) so that
toggling one feature never perturbs the random draws of another.
"""

import numpy as np

# Fixed stream ids; order is part of the on-disk/wire determinism contract.
_STREAM_IDS = {
    "chain": 0,
    "scene": 1,
    "backbone": 2,
    "branch": 3,
    "width": 4,
    "unreachable": 5,
    "jitter": 6,
    "segment": 7,
    "ngt": 8,
    "shift": 9,
    "noise": 10,
    "sample": 11,
    "server": 12,
    "vectors": 13,
    "retry": 14,
}


def _sequence(seed: int, name: str, indices: tuple[int, ...]) -> np.random.SeedSequence:
    if name not in _STREAM_IDS:
        raise KeyError(f"unknown rng stream {name!r}")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(_STREAM_IDS[name], *indices))


def substream(seed: int, name: str, *indices: int) -> np.random.Generator:
    """Return the PCG64 generator for a named sub-stream of ``seed``."""
    return np.random.Generator(np.random.PCG64(_sequence(seed, name, indices)))


def derive_seed(seed: int, name: str, *indices: int) -> int:
    """Derive a stable 64-bit integer seed for a named sub-stream."""
    state = _sequence(seed, name, indices).generate_state(1, dtype=np.uint64)
    return int(state[0])
