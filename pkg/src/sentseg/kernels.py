"""Backend selection for the hot sequential kernels.

The environment variable ``SENTSEG_BACKEND`` picks the implementation:
``numba`` (default when numba imports cleanly) or ``numpy`` (pure-Python
fallback running the identical source).  ``benchmarks/bench_kernels.py``
compares the two.
"""
import os

from .errors import ConfigError

_requested = os.environ.get("SENTSEG_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ConfigError(
        f"SENTSEG_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested in ("", "numba"):
    try:
        from . import _kernels_numba as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import _kernels_numpy as _impl

        BACKEND = "numpy"
else:
    from . import _kernels_numpy as _impl

    BACKEND = "numpy"

lstm_sequence_forward = _impl.lstm_sequence_forward
lstm_sequence_backward = _impl.lstm_sequence_backward
crf_forward = _impl.crf_forward
crf_posteriors = _impl.crf_posteriors
crf_viterbi = _impl.crf_viterbi

__all__ = [
    "BACKEND",
    "crf_forward",
    "crf_posteriors",
    "crf_viterbi",
    "lstm_sequence_backward",
    "lstm_sequence_forward",
]
