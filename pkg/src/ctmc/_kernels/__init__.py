"""Backend selection for the hot kernels.

At import time the compiled Cython core is preferred when present; setting
``CTMC_BACKEND=pure`` forces the numpy fallback and ``CTMC_BACKEND=compiled``
makes a missing extension a hard error instead of a silent downgrade.
"""

import importlib
import os

from . import pure

_requested = os.environ.get("CTMC_BACKEND", "").strip().lower()

_core = None
if _requested != "pure":
    try:
        _core = importlib.import_module("._core", __name__)
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "CTMC_BACKEND=compiled but the ctmc._kernels._core extension "
                "is not built; reinstall with a C toolchain available"
            )
        _core = None

COMPILED = _core is not None
BACKEND = "compiled" if COMPILED else "pure"


def bm_enumerate(W, b):
    """Dispatch exhaustive Boltzmann machine enumeration to the active backend."""
    if COMPILED:
        return _core.bm_enumerate(W, b)
    return pure.bm_enumerate(W, b)


def build_potential(spec):
    """Compile a potential descriptor for the fused leapfrog, if possible.

    Returns an opaque handle consumable by :func:`leapfrog_fused`, or None
    when the compiled backend is inactive or the spec is not supported.
    """
    if not COMPILED or spec is None:
        return None
    return _core.build_potential(spec)


def leapfrog_fused(handle, q, p, step_size, n_steps, mass_diag):
    """Run a full leapfrog trajectory inside the compiled core.

    Returns (q, p, final_potential, diverged).
    """
    return _core.leapfrog(handle, q, p, step_size, n_steps, mass_diag)


def potential_value(handle, q):
    """Evaluate a compiled potential (used by equivalence tests)."""
    return _core.potential_value(handle, q)


def potential_grad(handle, q):
    """Evaluate a compiled potential gradient (used by equivalence tests)."""
    return _core.potential_grad(handle, q)
