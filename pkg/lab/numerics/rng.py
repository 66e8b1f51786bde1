"""
Seeded randomness.

Generator identity is fixed: numpy's PCG64 bit generator fed by a
SeedSequence built from (seed, *stream). Streams are small integers naming an
independent purpose so that, e.g., reshuffling never perturbs initialization.
"""
import numpy as np

GENERATOR_NAME = "PCG64"

STREAM_SYNTH = 1
STREAM_INIT = 2
STREAM_SHUFFLE = 3
STREAM_GRADCHECK = 4


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    sequence = np.random.SeedSequence([int(seed), *(int(s) for s in stream)])
    return np.random.Generator(np.random.PCG64(sequence))


def msra_normal(rng: np.random.Generator, shape: tuple, fan_in: int = None) -> np.ndarray:
    """He/MSRA initializer: N(0, 2 / fan_in)."""
    fan_in = fan_in or shape[0]
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def msra_mirrored(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    """
    MSRA draws for the first half of the columns, negated copies for the
    second half. With a positive bias, a relu layer over these weights has at
    least one active unit for every input (two or more columns).
    """
    rows, columns = shape
    half = msra_normal(rng, (rows, (columns + 1) // 2))
    return np.concatenate([half, -half], axis=1)[:, :columns]
