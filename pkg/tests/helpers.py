"""Independent oracles used across the test suite.

Everything here is deliberately written without reusing package internals:
finite differences, a naive double-loop Boltzmann enumerator, analytic CDFs
and a permutation two-sample test serve as ground truth for the library
implementations.
"""

import itertools
import math

import numpy as np


def central_difference_gradient(f, x, step=1e-5):
    """Two-sided finite differences of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        g[i] = (f(hi) - f(lo)) / (2.0 * step)
    return g


def gradient_rel_error(potential, gradient, x, step=1e-5):
    fd = central_difference_gradient(potential, x, step)
    an = np.asarray(gradient(x), dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(fd))))
    return float(np.max(np.abs(an - fd))) / scale


def naive_bm_enumerator(W, b):
    """Second, independent enumerator: plain double loops over states.

    Returns (log_z, mean, second_moment) like the library oracle but shares
    no code or iteration scheme with it.
    """
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = len(b)
    energies = []
    states = []
    for bits in itertools.product((-1.0, 1.0), repeat=n):
        s = list(bits)
        e = 0.0
        for i in range(n):
            e += s[i] * b[i]
            for j in range(n):
                e += 0.5 * s[i] * W[i][j] * s[j]
        energies.append(e)
        states.append(s)
    m = max(energies)
    weights = [math.exp(e - m) for e in energies]
    total = math.fsum(weights)
    log_z = m + math.log(total)
    mean = [
        math.fsum(w * s[i] for w, s in zip(weights, states)) / total for i in range(n)
    ]
    second = [
        [
            math.fsum(w * s[i] * s[j] for w, s in zip(weights, states)) / total
            for j in range(n)
        ]
        for i in range(n)
    ]
    return log_z, np.array(mean), np.array(second)


def bm_exact_sampler(W, b, n_samples, rng):
    """Exact ancestral draws from a Boltzmann machine via full enumeration."""
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = len(b)
    states = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    energies = 0.5 * np.einsum("ij,ij->i", states @ W, states) + states @ b
    p = np.exp(energies - energies.max())
    p /= p.sum()
    idx = rng.choice(len(states), size=n_samples, p=p)
    return states[idx]


def trunc_exp_cdf(rate, beta):
    """CDF of the [0,1]-truncated exponential with signed rate."""
    beta = np.asarray(beta, dtype=np.float64)
    if abs(rate) < 1e-12:
        return np.clip(beta, 0.0, 1.0)
    return np.expm1(-rate * np.clip(beta, 0.0, 1.0)) / np.expm1(-rate)


def ks_statistic(samples, cdf):
    """Kolmogorov-Smirnov distance between samples and an analytic CDF."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.shape[0]
    c = cdf(x)
    upper = np.max(np.arange(1, n + 1) / n - c)
    lower = np.max(c - np.arange(0, n) / n)
    return float(max(upper, lower))


def energy_distance(x, y):
    """Energy-distance statistic between two sample sets (rows)."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)

    def mean_dist(a, b):
        d2 = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
        d2 -= 2.0 * a @ b.T
        return float(np.mean(np.sqrt(np.maximum(d2, 0.0))))

    return 2.0 * mean_dist(x, y) - mean_dist(x, x) - mean_dist(y, y)


def energy_distance_pvalue(x, y, rng, n_perm=200):
    """Permutation p-value for the two-sample energy-distance test."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    observed = energy_distance(x, y)
    pooled = np.vstack([x, y])
    n = x.shape[0]
    count = 0
    for _ in range(n_perm):
        perm = rng.permutation(pooled.shape[0])
        stat = energy_distance(pooled[perm[:n]], pooled[perm[n:]])
        if stat >= observed:
            count += 1
    return (count + 1) / (n_perm + 1)


def ar1_series(n, rho, rng):
    """AR(1) series with unit marginal variance."""
    x = np.empty(n)
    x[0] = rng.standard_normal()
    scale = math.sqrt(1.0 - rho * rho)
    for i in range(1, n):
        x[i] = rho * x[i - 1] + scale * rng.standard_normal()
    return x


class FakeBase:
    """Minimal normalized base density defined by callables; test double."""

    def __init__(self, dim, neg_log_pdf, gradient, sampler=None, mean=None, cov=None):
        self.dim = dim
        self._nlp = neg_log_pdf
        self._grad = gradient
        self._sampler = sampler
        self.known_mean = np.zeros(dim) if mean is None else np.asarray(mean)
        self.known_cov = np.eye(dim) if cov is None else np.asarray(cov)

    def neg_log_pdf(self, x):
        return float(self._nlp(np.asarray(x, dtype=np.float64)))

    potential = neg_log_pdf

    def gradient(self, x):
        return np.asarray(self._grad(np.asarray(x, dtype=np.float64)))

    def sample(self, rng):
        if self._sampler is None:
            raise NotImplementedError
        return self._sampler(rng)

    def kernel_spec(self):
        return None

    def to_dict(self):
        raise NotImplementedError
