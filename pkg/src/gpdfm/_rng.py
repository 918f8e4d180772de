"""Keyed random streams.

Every random draw in a chain comes from a generator keyed by
``(seed, iteration, block, index)``, so a block's output does not depend on
the order in which other blocks (or equations) were executed, and a chain
resumed from a saved state continues exactly as an unbroken run would.
"""
import numpy as np

# block identifiers
PGAS = 1
MEASUREMENT = 2
STATE = 3
SV = 4
FORECAST = 5
GIRF = 6
SIMULATE = 7
GEWEKE = 8
INIT = 9


def keyed_rng(seed, *keys):
    """Return a fresh ``Generator`` for the stream identified by ``keys``."""
    entropy = [int(seed) & 0xFFFFFFFF] + [int(k) & 0xFFFFFFFF for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
