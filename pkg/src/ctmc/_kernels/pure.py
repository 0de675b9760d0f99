"""Pure numpy implementations of the hot kernels.

Used whenever the compiled extension is unavailable or disabled via
``CTMC_BACKEND=pure``. Formula-level code for model energies lives in the
regular modules; this file only holds loops that the compiled core
accelerates.
"""

import numpy as np

_CHUNK_BITS = 14  # enumerate signed-binary states in chunks of 2^14


def _state_chunk(start, stop, n_units):
    """Signed binary states for integer codes [start, stop) as (+-1) rows."""
    codes = np.arange(start, stop, dtype=np.uint32)[:, None]
    bits = (codes >> np.arange(n_units, dtype=np.uint32)) & 1
    return 1.0 - 2.0 * bits.astype(np.float64)


def bm_enumerate(W, b):
    """Exact log partition function and first/second moments of a signed
    Boltzmann machine by full enumeration of the 2^n states.

    Returns (log_z, mean, second_moment). Deterministic reduction order:
    chunked max-shifted sums over ascending state codes.
    """
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    n_states = 1 << n
    chunk = 1 << min(_CHUNK_BITS, n)

    energies = np.empty(n_states)
    for start in range(0, n_states, chunk):
        s = _state_chunk(start, min(start + chunk, n_states), n)
        energies[start : start + s.shape[0]] = (
            0.5 * np.einsum("ij,ij->i", s @ W, s) + s @ b
        )

    e_max = energies.max()
    total = 0.0
    sum_s = np.zeros(n)
    sum_ss = np.zeros((n, n))
    for start in range(0, n_states, chunk):
        s = _state_chunk(start, min(start + chunk, n_states), n)
        w = np.exp(energies[start : start + s.shape[0]] - e_max)
        total += w.sum()
        sum_s += w @ s
        sum_ss += (s * w[:, None]).T @ s

    log_z = e_max + np.log(total)
    mean = sum_s / total
    second = sum_ss / total
    second = 0.5 * (second + second.T)
    np.fill_diagonal(second, 1.0)  # s_i^2 = 1 exactly
    return log_z, mean, second
