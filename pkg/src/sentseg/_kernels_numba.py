"""Numba kernel backend: the shared implementations compiled with ``@njit``."""
from numba import njit

from . import _kernels_impl as _impl

lstm_sequence_forward = njit(cache=True)(_impl.lstm_sequence_forward)
lstm_sequence_backward = njit(cache=True)(_impl.lstm_sequence_backward)
crf_forward = njit(cache=True)(_impl.crf_forward)
crf_posteriors = njit(cache=True)(_impl.crf_posteriors)
crf_viterbi = njit(cache=True)(_impl.crf_viterbi)

__all__ = [
    "crf_forward",
    "crf_posteriors",
    "crf_viterbi",
    "lstm_sequence_backward",
    "lstm_sequence_forward",
]
