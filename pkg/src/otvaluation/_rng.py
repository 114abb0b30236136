import numpy as np


def make_rng(seed):
    """Seeded generator used by every stochastic routine.

    PCG64 through ``numpy.random.Generator`` is fixed and portable, so a seed
    gives the same stream on every platform numpy supports.
    """
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.Generator(np.random.PCG64(int(seed)))
