"""Small statistics helpers used by the experiment harness."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .errors import DegenerateSample


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float


def t_sf(t: float, df: float) -> float:
    """Upper tail ``P(T > t)`` of Student's t via the regularized incomplete beta."""
    tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t))
    return float(tail if t >= 0 else 1.0 - tail)


def welch_one_sided_t(a, b) -> WelchResult:
    """Welch two-sample t statistic for ``mean(a) > mean(b)``.

    Returns the statistic, the Welch-Satterthwaite degrees of freedom and the
    upper-tail p-value.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise DegenerateSample("each sample needs at least two values")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    if va + vb == 0:
        raise DegenerateSample("both samples have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    return WelchResult(float(t), float(df), t_sf(t, df))


def welch_two_sided_p(a, b) -> float:
    res = welch_one_sided_t(a, b)
    return min(1.0, 2.0 * min(res.p, 1.0 - res.p))
