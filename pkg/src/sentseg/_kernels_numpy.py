"""Pure-numpy kernel backend: the shared implementations run as plain Python."""
from ._kernels_impl import (
    crf_forward,
    crf_posteriors,
    crf_viterbi,
    lstm_sequence_backward,
    lstm_sequence_forward,
)

__all__ = [
    "crf_forward",
    "crf_posteriors",
    "crf_viterbi",
    "lstm_sequence_backward",
    "lstm_sequence_forward",
]
