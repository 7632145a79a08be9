"""Hot numeric kernels.

Every kernel is written as a plain function over numpy arrays and scalars,
then compiled with numba's @njit unless FEEDSIM_NO_NUMBA=1 is set (or numba
is not importable), in which case the interpreted fallback runs the exact
same code. Each module exposes both objects: ``<name>`` (the active path)
and ``<name>_py`` (always the interpreted fallback) so tests and the
benchmark can compare the two directly.
"""

import os

_FALSE = {"", "0", "false", "no"}


def numba_requested() -> bool:
    return os.environ.get("FEEDSIM_NO_NUMBA", "").strip().lower() in _FALSE


def _detect() -> bool:
    if not numba_requested():
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _detect()


def maybe_jit(fn):
    """Return an njit-compiled version of fn, or fn itself when disabled."""
    if NUMBA_ENABLED:
        from numba import njit

        return njit(cache=True)(fn)
    return fn


from .lru import lru_simulate, lru_simulate_py  # noqa: E402,F401
from .sched import schedule_loop, schedule_loop_py  # noqa: E402,F401
from .playback import advance_item, advance_item_py  # noqa: E402,F401
from .knapsack import knapsack_dp, knapsack_dp_py  # noqa: E402,F401
from .qlearn import q_update, q_update_py  # noqa: E402,F401
