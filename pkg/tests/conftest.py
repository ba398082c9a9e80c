"""Shared test oracles, implemented independently of the package internals."""

from __future__ import annotations

import mpmath as mp
import numpy as np


def mixture_nll_direct(alpha, mu, sigma, target, dps: int = 40) -> float:
    """Mixture negative log-density by direct summation in arbitrary precision.

    No log-sum-exp shift, no vectorization: evaluate each diagonal-Gaussian
    density literally, weight, sum, take one log at the end.
    """
    with mp.workdps(dps):
        total = mp.mpf(0)
        for k in range(len(alpha)):
            dens = mp.mpf(1)
            for i in range(len(target)):
                s = mp.mpf(float(sigma[k][i]))
                diff = mp.mpf(float(target[i])) - mp.mpf(float(mu[k][i]))
                dens *= mp.exp(-(diff**2) / (2 * s**2)) / (s * mp.sqrt(2 * mp.pi))
            total += mp.mpf(float(alpha[k])) * dens
        return float(-mp.log(total))


def random_mixture_instance(rng: np.random.Generator, K: int, d: int):
    """One random, well-conditioned (alpha, mu, sigma, target) tuple."""
    logits = rng.normal(size=K)
    alpha = np.exp(logits) / np.exp(logits).sum()
    mu = rng.normal(scale=2.0, size=(K, d))
    sigma = rng.uniform(0.3, 3.0, size=(K, d))
    target = rng.normal(scale=2.0, size=d)
    return alpha, mu, sigma, target
