"""Numba/numpy backend selection for the hot kernels.

The accelerated kernels are compiled with numba unless the environment
variable ``DISCFLOW_NO_NUMBA`` is set to a truthy value (or numba is not
importable), in which case a pure-numpy lockstep implementation is used.
Both paths consume the same counter-based random streams and produce
bit-identical results.
"""

from __future__ import annotations

import os


def _env_disabled() -> bool:
    return os.environ.get("DISCFLOW_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


NUMBA_AVAILABLE = False
if not _env_disabled():
    try:
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            import numba  # noqa: F401
            from numba.np.ufunc import parallel as _parallel  # probes threading layers

        NUMBA_AVAILABLE = True
    except ImportError:
        NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def set_num_threads(n: int) -> None:
    """Limit worker threads; a no-op on the numpy fallback."""
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if USE_NUMBA:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def resolve_thread_count(requested: int | None) -> int:
    """CLI flag wins, then DISCFLOW_THREADS, then all available cores."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("DISCFLOW_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1
