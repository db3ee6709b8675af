"""Log-Gamma and log-Beta kernels.

Gamma is never materialized: Q/alpha routinely exceeds 170 and overflows a
direct evaluation, so every caller works with logarithms.
"""

import math

from scipy.special import gammaln

from app.errors import DomainError


def log_gamma(x: float) -> float:
    if not x > 0 or not math.isfinite(x):
        raise DomainError(f"log_gamma requires a finite positive argument, got {x}")
    return float(gammaln(x))


def log_beta(a: float, b: float) -> float:
    if not (a > 0 and b > 0):
        raise DomainError(f"log_beta requires positive arguments, got ({a}, {b})")
    # summed in a fixed, symmetric order so log_beta(a, b) == log_beta(b, a)
    lo, hi = sorted((a, b))
    return log_gamma(lo) + log_gamma(hi) - log_gamma(a + b)
