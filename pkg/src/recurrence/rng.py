"""Deterministic seed derivation for replicate streams."""
import numpy as np


def replicate_seed(base_seed: int, index: int) -> int:
    """64-bit seed for replicate ``index``, a fixed hash of ``(base_seed, index)``."""
    words = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(index),)).generate_state(
        2, np.uint32
    )
    return int(words[0]) | (int(words[1]) << 32)
