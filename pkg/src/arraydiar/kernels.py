"""Kernel backend selection: compiled Cython core with a NumPy fallback.

Both backends accumulate pairs in the same order, so results are
bit-identical; only speed differs. ``BACKEND`` records which one loaded.
"""

from . import _srp_py

try:
    from . import _srp_core as _impl

    BACKEND = "compiled"
except ImportError:
    _impl = _srp_py
    BACKEND = "python"

srp_accumulate = _impl.srp_accumulate
srp_accumulate_batch = _impl.srp_accumulate_batch


def available_backends() -> dict:
    """Name -> module for every importable backend (used by the benchmark)."""
    backends = {"python": _srp_py}
    if _impl is not _srp_py:
        backends["compiled"] = _impl
    return backends
