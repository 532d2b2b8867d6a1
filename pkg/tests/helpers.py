"""Random instance generators shared by the test modules."""
import numpy as np

from epiprox import epigraph as epi

KIND_CONFIGS = (
    "power b=1", "power b=1.5", "power b=2", "l2", "linf",
    "dist ball b=1", "dist ball b=2", "dist box b=1", "dist box b=2",
    "dist point b=1", "dist point b=2",
)


def random_set(rng, name, m):
    if name == "ball":
        return epi.Ball2(rng.uniform(-5, 5, m), rng.uniform(0, 4))
    if name == "box":
        lo = rng.uniform(-5, 3, m)
        return epi.BoxSet(lo, lo + rng.uniform(0, 4, m))
    return epi.Point(rng.uniform(-5, 5, m))


def random_kind(rng, config, m=None):
    """``(kind, block size)`` for one of :data:`KIND_CONFIGS`."""
    m = int(rng.integers(1, 9)) if m is None else m
    tau = rng.uniform(0.2, 3)
    if config.startswith("power"):
        return epi.ScalarPower(tau, float(config.split("=")[1])), 1
    if config == "l2":
        return epi.EuclideanNorm(tau), m
    if config == "linf":
        return epi.WeightedInfNorm(rng.uniform(0.2, 3, m)), m
    _, sname, b = config.split()
    return epi.DistanceToSet(tau, float(b.split("=")[1]), random_set(rng, sname, m)), m


def random_instance(rng, config, m=None):
    kind, size = random_kind(rng, config, m)
    return kind, rng.uniform(-10, 10, size), float(rng.uniform(-10, 10))


def random_layout_kinds(rng, max_blocks=10, configs=KIND_CONFIGS):
    """Contiguous block sizes and a kind per block drawn from ``configs``."""
    L = int(rng.integers(1, max_blocks + 1))
    kinds, sizes = [], []
    for _ in range(L):
        k, m = random_kind(rng, configs[int(rng.integers(len(configs)))], int(rng.integers(1, 6)))
        kinds.append(k)
        sizes.append(m)
    return sizes, kinds
