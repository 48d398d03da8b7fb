"""Normalization tags carried by every spectrum and dephasing estimate."""

from enum import Enum


class Convention(str, Enum):
    """How a power spectral density is normalized.

    ``PAPER_LITERAL`` keeps the closed-form expressions exactly as printed in
    the source literature, where the autocorrelation is written as
    ``int S(w) exp(-i w tau) dw`` without a ``1/(2 pi)``.

    ``CALIBRATED`` is the physical two-sided angular-frequency density: the
    autocovariance is ``(1/2pi) int S(w) exp(-i w tau) dw``, so
    ``int S dw / (2 pi)`` is the variance of a process driven by unit
    delta-correlated white noise.
    """

    PAPER_LITERAL = "paper"
    CALIBRATED = "calibrated"


class Sidedness(str, Enum):
    TWO_SIDED = "two-sided"
    ONE_SIDED = "one-sided"
