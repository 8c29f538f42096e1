"""Independent PRNG streams derived from one experiment seed.

Model initialisation, data order and dropout masks each draw from their own
child of ``numpy.random.SeedSequence(seed)``, so changing how much one
consumer draws never shifts another.
"""
import numpy as np

STREAMS = ('init', 'data', 'dropout')


def spawn_streams(seed):
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


def stream(seed, name):
    if name not in STREAMS:
        raise KeyError(f"unknown PRNG stream {name!r}")
    return spawn_streams(seed)[name]
