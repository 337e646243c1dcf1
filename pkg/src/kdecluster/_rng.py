import numpy as np


def seed_sequence(seed) -> np.random.SeedSequence:
    """Normalise an int, ``SeedSequence``, ``Generator`` or ``None`` seed."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(2**63)))
    return np.random.SeedSequence(seed)
