import numpy as np

import uncoupled


def shuffled_sample(n: int, seed: int = 0):
    """responses of f(x) = 2x - 1 under gaussian noise, pairing lost"""
    noise = uncoupled.make_noise("gaussian", {"sd": 0.3})
    design = uncoupled.DesignPoints.equispaced(n)
    rng = np.random.default_rng(seed)
    y = 2 * design.x - 1 + noise.sample(n, rng)
    return design, rng.permutation(y), noise


def fit(n: int) -> uncoupled.DeconvResult:
    """estimate f back from the shuffled responses"""
    design, y, noise = shuffled_sample(n)
    return uncoupled.estimate(design, y, noise, V=1.0)
