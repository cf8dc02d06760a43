"""Clonal-diversity observables and the single-sample plug-in estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DiversityProductTooSmall, InvalidObservation
from .model import ModelParams

LAMBDA0_UNDEFINED = "Lambda0Undefined"
LAMBDA0_NON_NEGATIVE = "Lambda0NonNegative"
DIVERSITY_TOO_SMALL = "DiversityProductTooSmall"
NO_SURVIVING_CLONES = "NoSurvivingClones"

# int64 sums of squares are exact while the total stays below this
_INT64_SAFE_TOTAL = 3_000_000_000


def _sum_and_squares(sizes) -> tuple[int, int]:
    arr = np.asarray(sizes, dtype=np.int64)
    total = int(arr.sum()) if arr.size else 0
    if total < _INT64_SAFE_TOTAL:
        return total, int(np.dot(arr, arr))
    return total, sum(int(s) * int(s) for s in arr)


def simpson_index(clone_sizes: Sequence[int]) -> float:
    """Probability that two cells drawn with replacement share a clone.

    Both sums are accumulated exactly in integers; returns 0 when there are
    no resistant cells.
    """
    total, squares = _sum_and_squares(clone_sizes)
    if total == 0:
        return 0.0
    return squares / (total * total)


def surviving_clone_count(clone_sizes: Sequence[int]) -> int:
    return int(np.count_nonzero(np.asarray(clone_sizes) > 0))


def apply_detection_threshold(clone_sizes, z0: int, frac: float) -> np.ndarray:
    """Drop clones smaller than ``frac`` of the whole tumour (z0 + resistant cells).

    Clones exactly at the threshold are kept.
    """
    if not 0 <= frac < 1:
        raise ValueError(f"frac must lie in [0, 1), got {frac!r}")
    sizes = np.asarray(clone_sizes, dtype=np.int64)
    if frac == 0:
        return sizes.copy()
    cutoff = frac * (z0 + int(sizes.sum()))
    return sizes[sizes >= cutoff]


def detectable_simpson_index(clone_sizes, z0: int, frac: float) -> float:
    """Simpson index from clones passing the detection threshold only.

    Squares are summed over detectable clones but the denominator stays the
    full resistant population, which is known from the tumour size.  Small
    clones barely contribute to the sum of squares, so a low threshold leaves
    the index nearly unchanged.
    """
    sizes = np.asarray(clone_sizes, dtype=np.int64)
    total, _ = _sum_and_squares(sizes)
    if total == 0:
        return 0.0
    _, squares = _sum_and_squares(apply_detection_threshold(sizes, z0, frac))
    return squares / (total * total)


def u_statistic(i_n: float, r_n: float) -> float:
    """``sqrt(P) / sqrt(P - 2) - 1`` with ``P = i_n * r_n``; needs ``P > 2``."""
    product = i_n * r_n
    if not product > 2:
        raise DiversityProductTooSmall(
            f"clone count x Simpson index = {product:.6g} must exceed 2"
        )
    return math.sqrt(product / (product - 2.0)) - 1.0


@dataclass(frozen=True)
class Observation:
    """Single-time-point data at recurrence.

    ``i_n`` and ``r_n`` override the statistics otherwise computed from
    ``clone_sizes``; they let analytic (non-integer) values be plugged in.
    """

    n: float
    gamma: float
    z0: float
    clone_sizes: tuple[int, ...] = ()
    i_n: Optional[float] = None
    r_n: Optional[float] = None

    def clone_count(self) -> float:
        return self.i_n if self.i_n is not None else surviving_clone_count(self.clone_sizes)

    def simpson(self) -> float:
        return self.r_n if self.r_n is not None else simpson_index(self.clone_sizes)


@dataclass(frozen=True)
class Estimates:
    lambda0_hat: Optional[float] = None
    lambda1_hat: Optional[float] = None
    r1_hat: Optional[float] = None
    alpha_hat: Optional[float] = None
    u_n: Optional[float] = None
    diagnostics: frozenset = field(default_factory=frozenset)

    @property
    def ok(self) -> bool:
        return not self.diagnostics


def estimate(obs: Observation) -> Estimates:
    """Recover (lambda0, lambda1, r1, alpha) from one recurrence observation.

    Failures never raise: the stage that fails is named in ``diagnostics``
    and every quantity computed before it is kept.
    """
    if not obs.gamma > 0:
        raise InvalidObservation(f"gamma must be positive, got {obs.gamma!r}")
    if not obs.n >= 2:
        raise InvalidObservation(f"n must be >= 2, got {obs.n!r}")
    if obs.z0 < 0:
        raise InvalidObservation(f"z0 must be non-negative, got {obs.z0!r}")

    if obs.z0 == 0:
        return Estimates(diagnostics=frozenset({LAMBDA0_UNDEFINED}))
    log_n = math.log(obs.n)
    lam0 = (math.log(obs.z0) - log_n) / obs.gamma

    i_n = obs.clone_count()
    if i_n <= 0:
        return Estimates(lambda0_hat=lam0, diagnostics=frozenset({NO_SURVIVING_CLONES}))
    try:
        u = u_statistic(i_n, obs.simpson())
    except DiversityProductTooSmall:
        return Estimates(lambda0_hat=lam0, diagnostics=frozenset({DIVERSITY_TOO_SMALL}))
    if lam0 >= 0:
        return Estimates(lambda0_hat=lam0, u_n=u, diagnostics=frozenset({LAMBDA0_NON_NEGATIVE}))

    lam1 = -lam0 / u
    log_i = math.log(i_n)
    log_r1 = math.log1p(1.0 / u) + log_n + math.log(lam1) - log_i - lam1 * obs.gamma
    r1 = math.exp(log_r1)
    alpha = 1.0 - log_i / log_n + (math.log(lam1) - math.log(-lam0) - log_r1) / log_n
    return Estimates(lam0, lam1, r1, alpha, u)


@dataclass(frozen=True)
class RelativeErrors:
    lambda0: Optional[float]
    lambda1: Optional[float]
    r1: Optional[float]
    alpha: Optional[float]

    def as_dict(self) -> dict:
        return {"lambda0": self.lambda0, "lambda1": self.lambda1,
                "r1": self.r1, "alpha": self.alpha}


def relative_errors(est: Estimates, truth: ModelParams) -> RelativeErrors:
    def rel(value, target, scale):
        return None if value is None else abs(value - target) / scale

    return RelativeErrors(
        lambda0=rel(est.lambda0_hat, truth.lambda0, -truth.lambda0),
        lambda1=rel(est.lambda1_hat, truth.lambda1, truth.lambda1),
        r1=rel(est.r1_hat, truth.r1, truth.r1),
        alpha=rel(est.alpha_hat, truth.alpha, truth.alpha),
    )


def bootstrap_simpson(clone_sizes, keep_frac: float = 0.2, resample_frac: float = 0.625,
                      b: int = 1000, seed: int = 0) -> float:
    """Average Simpson index over partial resamples of the clone spectrum.

    Every sample keeps the ``ceil(keep_frac*K)`` largest clones (ties broken
    by ledger order) and adds ``floor(resample_frac*(K - kept))`` of the rest
    drawn without replacement.
    """
    if not (0 <= keep_frac <= 1 and 0 <= resample_frac <= 1):
        raise ValueError("keep_frac and resample_frac must lie in [0, 1]")
    if b < 1:
        raise ValueError("b must be >= 1")
    sizes = np.asarray(clone_sizes, dtype=np.int64)
    k = sizes.size
    if k == 0:
        return 0.0
    ordered = sizes[np.argsort(-sizes, kind="stable")]
    kept = min(k, math.ceil(keep_frac * k - 1e-9))
    rest = ordered[kept:]
    m = math.floor(resample_frac * rest.size + 1e-9)
    if m == 0 or rest.size == 0:
        return simpson_index(ordered[:kept])

    top = ordered[:kept]
    top_total, top_squares = _sum_and_squares(top)
    rng = np.random.default_rng(seed)
    exact = int(sizes.sum()) < _INT64_SAFE_TOTAL
    values = np.empty(b)
    for j in range(b):
        pick = rest[rng.choice(rest.size, size=m, replace=False)]
        if exact:
            total = top_total + int(pick.sum())
            squares = top_squares + int(np.dot(pick, pick))
        else:
            total, squares = _sum_and_squares(np.concatenate([top, pick]))
        values[j] = squares / (total * total)
    return float(values.mean())
