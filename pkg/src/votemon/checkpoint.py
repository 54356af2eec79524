"""Checkpoint scheduling: when the count estimate first crosses ``(1+lam)^i``."""

from __future__ import annotations

import math
from fractions import Fraction


def _frac(x) -> Fraction:
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def checkpoint_lambda(eps) -> Fraction:
    return _frac(eps) / 12


def largest_index(n_est, lam) -> int | None:
    """Largest ``i >= 0`` with ``(1+lam)^i <= n_est``; None when ``n_est < 1``."""
    n_est = _frac(n_est)
    if n_est < 1:
        return None
    base = 1 + _frac(lam)
    x = math.log(float(n_est)) / math.log(float(base))
    if abs(x - round(x)) > 1e-7:
        return int(math.floor(x))
    # near a threshold: settle it exactly
    i = max(int(round(x)) - 1, 0)
    power = base ** i
    while power * base <= n_est:
        power *= base
        i += 1
    while i > 0 and power > n_est:
        power /= base
        i -= 1
    return i


def should_fire(n_est, last_i: int | None, lam) -> int | None:
    """Index of a new checkpoint, or None if no unseen threshold was crossed."""
    i = largest_index(n_est, lam)
    if i is None:
        return None
    if last_i is None or i > last_i:
        return i
    return None


def checkpoint_bound(n: int, eps, slack: float = 1.0) -> float:
    """``1 + log_{1+eps/12}(slack * n)``: the most checkpoints a run of length n fires."""
    lam = float(checkpoint_lambda(eps))
    if n <= 0:
        return 0.0
    return 1 + math.log(slack * n) / math.log1p(lam)
